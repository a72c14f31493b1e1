//! Update-rate measurement over a trailing window.

use super::TransportError;

/// Rate and inter-event gap statistics over a window.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RateStats {
    pub window_s: f64,
    /// Events inside the window.
    pub frames: usize,
    /// `frames / window_s`.
    pub hz: f64,
    pub p50_gap_ms: f64,
    pub p99_gap_ms: f64,
}

impl std::fmt::Display for RateStats {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "{:.1} Hz over {:.1}s ({} frames, gap p50 {:.2} ms p99 {:.2} ms)",
            self.hz, self.window_s, self.frames, self.p50_gap_ms, self.p99_gap_ms
        )
    }
}

/// Measure the rate over the trailing `window_s` seconds ending at the last
/// event. Gap percentiles use nearest-rank on the sorted inter-event gaps.
pub fn measure_rate(timestamps_ns: &[u64], window_s: f64) -> Result<RateStats, TransportError> {
    if timestamps_ns.len() < 2 {
        return Err(TransportError::UndefinedRate(timestamps_ns.len()));
    }
    let t_end = *timestamps_ns.last().unwrap();
    let window_ns = (window_s * 1e9) as u64;
    let t_start = t_end.saturating_sub(window_ns);
    let in_window: Vec<u64> = timestamps_ns.iter().copied().filter(|&t| t >= t_start).collect();
    if in_window.len() < 2 {
        return Err(TransportError::UndefinedRate(in_window.len()));
    }

    let mut gaps_ms: Vec<f64> =
        in_window.windows(2).map(|w| (w[1] - w[0]) as f64 / 1e6).collect();
    gaps_ms.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let nearest_rank = |p: f64| -> f64 {
        let n = gaps_ms.len();
        let rank = ((p / 100.0) * n as f64).ceil().max(1.0) as usize;
        gaps_ms[rank.min(n) - 1]
    };

    Ok(RateStats {
        window_s,
        frames: in_window.len(),
        hz: in_window.len() as f64 / window_s,
        p50_gap_ms: nearest_rank(50.0),
        p99_gap_ms: nearest_rank(99.0),
    })
}
