//! Trajectory evaluation: timestamp association, closed-form rigid (or
//! similarity) alignment, and Absolute Trajectory Error.

use std::io::Write;
use std::path::Path;

use nalgebra::{Matrix3, UnitQuaternion, Vector3};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::num::{real, to_f64, Real};

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),
    #[error("trajectory row {line}: {msg}")]
    MalformedRow { line: usize, msg: String },
    #[error("trajectory row {line}: timestamps must be strictly increasing")]
    NonMonotonic { line: usize },
    #[error("trajectory needs at least 2 samples, got {0}")]
    TooShort(usize),
    #[error("only {0} associated pairs; need at least 3")]
    InsufficientOverlap(usize),
    #[error("degenerate point configuration: {0}")]
    Degenerate(&'static str),
}

/// One timestamped pose of a trajectory.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrajectorySample {
    pub timestamp_ns: u64,
    pub position: Vector3<f64>,
    pub quat: UnitQuaternion<f64>,
}

/// Ordered pose sequence with strictly increasing timestamps.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    samples: Vec<TrajectorySample>,
}

impl Trajectory {
    pub fn new(samples: Vec<TrajectorySample>) -> Result<Self, EvalError> {
        if samples.len() < 2 {
            return Err(EvalError::TooShort(samples.len()));
        }
        for (i, w) in samples.windows(2).enumerate() {
            if w[1].timestamp_ns <= w[0].timestamp_ns {
                return Err(EvalError::NonMonotonic { line: i + 2 });
            }
        }
        Ok(Self { samples })
    }

    pub fn samples(&self) -> &[TrajectorySample] {
        &self.samples
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn positions(&self) -> Vec<Vector3<f64>> {
        self.samples.iter().map(|s| s.position).collect()
    }

    /// Apply a rigid transform to every position (orientations untouched;
    /// positional ATE ignores them).
    pub fn transformed(&self, iso: &nalgebra::Isometry3<f64>) -> Self {
        let samples = self
            .samples
            .iter()
            .map(|s| TrajectorySample {
                timestamp_ns: s.timestamp_ns,
                position: crate::geom::transform_point(iso, s.position),
                quat: s.quat,
            })
            .collect();
        Self { samples }
    }
}

const TRAJECTORY_HEADER: &str = "t_ns,x,y,z,qw,qx,qy,qz";

/// Write the shared trajectory CSV format.
pub fn write_trajectory_csv(traj: &Trajectory, path: impl AsRef<Path>) -> Result<(), EvalError> {
    let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(w, "{TRAJECTORY_HEADER}")?;
    for s in &traj.samples {
        let q = s.quat.quaternion();
        writeln!(
            w,
            "{},{},{},{},{},{},{},{}",
            s.timestamp_ns, s.position.x, s.position.y, s.position.z, q.w, q.i, q.j, q.k
        )?;
    }
    w.flush()?;
    Ok(())
}

/// Read the shared trajectory CSV format. Errors carry 1-based line numbers.
pub fn read_trajectory_csv(path: impl AsRef<Path>) -> Result<Trajectory, EvalError> {
    let text = std::fs::read_to_string(path)?;
    let mut samples = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        let line_no = idx + 1;
        let trimmed = line.trim();
        if trimmed.is_empty() || (idx == 0 && trimmed.starts_with("t_ns")) {
            continue;
        }
        let fields: Vec<&str> = trimmed.split(',').collect();
        if fields.len() != 8 {
            return Err(EvalError::MalformedRow {
                line: line_no,
                msg: format!("expected 8 fields, got {}", fields.len()),
            });
        }
        let parse = |s: &str, what: &str| -> Result<f64, EvalError> {
            s.trim().parse::<f64>().map_err(|e| EvalError::MalformedRow {
                line: line_no,
                msg: format!("{what}: {e}"),
            })
        };
        let t_ns = fields[0].trim().parse::<u64>().map_err(|e| EvalError::MalformedRow {
            line: line_no,
            msg: format!("t_ns: {e}"),
        })?;
        let position = Vector3::new(
            parse(fields[1], "x")?,
            parse(fields[2], "y")?,
            parse(fields[3], "z")?,
        );
        let quat = crate::geom::Pose6D::from_parts(
            position,
            [
                parse(fields[4], "qw")?,
                parse(fields[5], "qx")?,
                parse(fields[6], "qy")?,
                parse(fields[7], "qz")?,
            ],
        )
        .ok_or_else(|| EvalError::MalformedRow {
            line: line_no,
            msg: "invalid quaternion".into(),
        })?
        .quat;
        samples.push(TrajectorySample { timestamp_ns: t_ns, position, quat });
    }
    let traj = Trajectory::new(samples)?;
    Ok(traj)
}

/// Pair every estimate sample with its nearest-in-time ground-truth sample
/// within `max_dt` seconds. Each ground-truth sample is used at most once;
/// estimates are visited in time order and ties prefer the earlier
/// ground-truth sample. Pairs come back time-ordered.
pub fn associate(
    est: &Trajectory,
    gt: &Trajectory,
    max_dt: f64,
) -> Result<Vec<(usize, usize)>, EvalError> {
    let max_dt_ns = (max_dt * 1e9) as i128;
    let gt_times: Vec<i128> = gt.samples.iter().map(|s| s.timestamp_ns as i128).collect();
    let mut used = vec![false; gt_times.len()];
    let mut pairs = Vec::new();
    for (ei, e) in est.samples.iter().enumerate() {
        let t = e.timestamp_ns as i128;
        // Nearest unused ground-truth index: start at the partition point
        // and widen left/right until both directions can only get worse.
        let start = gt_times.partition_point(|&g| g < t);
        let mut best: Option<(i128, usize)> = None;
        let mut l = start as i64 - 1;
        let mut r = start;
        loop {
            let cand_l = (l >= 0).then(|| l as usize);
            let cand_r = (r < gt_times.len()).then_some(r);
            if cand_l.is_none() && cand_r.is_none() {
                break;
            }
            // Stop once both frontiers exceed the current best distance.
            if let Some((bd, _)) = best {
                let l_far = cand_l.map_or(true, |i| (t - gt_times[i]).abs() > bd);
                let r_far = cand_r.map_or(true, |i| (gt_times[i] - t).abs() > bd);
                if l_far && r_far {
                    break;
                }
            }
            // Advance whichever frontier is nearer in time.
            let dl = cand_l.map(|i| (t - gt_times[i]).abs());
            let dr = cand_r.map(|i| (gt_times[i] - t).abs());
            let take_left = match (dl, dr) {
                (Some(a), Some(b)) => a <= b, // tie -> earlier sample
                (Some(_), None) => true,
                _ => false,
            };
            let i = if take_left {
                let i = l as usize;
                l -= 1;
                i
            } else {
                let i = r;
                r += 1;
                i
            };
            if used[i] {
                continue;
            }
            let d = (gt_times[i] - t).abs();
            let better = match best {
                None => true,
                Some((bd, bi)) => d < bd || (d == bd && i < bi),
            };
            if better {
                best = Some((d, i));
            }
        }
        if let Some((d, i)) = best {
            if d <= max_dt_ns {
                used[i] = true;
                pairs.push((ei, i));
            }
        }
    }
    if pairs.len() < 3 {
        return Err(EvalError::InsufficientOverlap(pairs.len()));
    }
    Ok(pairs)
}

/// Closed-form similarity/rigid alignment `dst ~ scale * R * src + t`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Alignment {
    /// Row-major 3x3 proper rotation (det = +1).
    pub rotation: [[f64; 3]; 3],
    pub scale: f64,
    pub translation: [f64; 3],
}

impl Alignment {
    pub fn rotation_matrix(&self) -> Matrix3<f64> {
        Matrix3::from_fn(|i, j| self.rotation[i][j])
    }

    pub fn apply(&self, p: Vector3<f64>) -> Vector3<f64> {
        self.rotation_matrix() * p * self.scale + Vector3::from(self.translation)
    }
}

/// Least-squares `argmin sum ||dst_i - (s R src_i + t)||^2` with `R` a proper
/// rotation; `s = 1` unless `with_scale`. Needs >= 3 non-collinear pairs.
pub fn umeyama_align<S: Real>(
    src: &[Vector3<S>],
    dst: &[Vector3<S>],
    with_scale: bool,
) -> Result<Alignment, EvalError> {
    if src.len() != dst.len() {
        return Err(EvalError::Degenerate("point sets differ in length"));
    }
    let n = src.len();
    if n < 3 {
        return Err(EvalError::Degenerate("need at least 3 point pairs"));
    }
    let nf = real::<S>(n as f64);
    let mean_src = src.iter().fold(Vector3::zeros(), |a, p| a + p) / nf;
    let mean_dst = dst.iter().fold(Vector3::zeros(), |a, p| a + p) / nf;

    let mut cov = Matrix3::<S>::zeros();
    let mut var_src = S::zero();
    for (s, d) in src.iter().zip(dst) {
        let sc = s - mean_src;
        let dc = d - mean_dst;
        cov += dc * sc.transpose();
        var_src += sc.norm_squared();
    }
    cov /= nf;
    var_src /= nf;

    let svd = cov.svd(true, true);
    let u = svd.u.ok_or(EvalError::Degenerate("svd failed"))?;
    let v_t = svd.v_t.ok_or(EvalError::Degenerate("svd failed"))?;
    let sigma = svd.singular_values;
    if !(sigma[0] > S::zero()) || sigma[1] <= sigma[0] * real::<S>(1e-12) {
        return Err(EvalError::Degenerate("points are collinear or coincident"));
    }

    // Reflection guard: fold any mirror into the smallest singular value.
    let d_sign = if (u.determinant() * v_t.determinant()) < S::zero() { -S::one() } else { S::one() };
    let mut s_diag = Vector3::new(S::one(), S::one(), d_sign);
    let rot = u * Matrix3::from_diagonal(&s_diag) * v_t;

    s_diag = Vector3::new(sigma[0], sigma[1], sigma[2] * d_sign);
    let scale = if with_scale {
        if var_src <= S::zero() {
            return Err(EvalError::Degenerate("zero source variance"));
        }
        (s_diag.x + s_diag.y + s_diag.z) / var_src
    } else {
        S::one()
    };

    let t = mean_dst - rot * mean_src * scale;
    let mut rotation = [[0.0; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            rotation[i][j] = to_f64(rot[(i, j)]);
        }
    }
    Ok(Alignment {
        rotation,
        scale: to_f64(scale),
        translation: [to_f64(t.x), to_f64(t.y), to_f64(t.z)],
    })
}

/// Positional ATE report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AteReport {
    pub rmse_m: f64,
    pub max_m: f64,
    pub mean_m: f64,
    pub n_pairs: usize,
    pub alignment: Alignment,
}

/// Associate, align (SE(3), or Sim(3) when `with_scale`), and report the
/// positional error statistics.
pub fn compute_ate(
    est: &Trajectory,
    gt: &Trajectory,
    max_dt: f64,
    with_scale: bool,
) -> Result<AteReport, EvalError> {
    let pairs = associate(est, gt, max_dt)?;
    let src: Vec<Vector3<f64>> = pairs.iter().map(|&(e, _)| est.samples[e].position).collect();
    let dst: Vec<Vector3<f64>> = pairs.iter().map(|&(_, g)| gt.samples[g].position).collect();
    let alignment = umeyama_align(&src, &dst, with_scale)?;

    let mut sum_sq = 0.0;
    let mut sum = 0.0;
    let mut max = 0.0f64;
    for (s, d) in src.iter().zip(&dst) {
        let r = (d - alignment.apply(*s)).norm();
        sum_sq += r * r;
        sum += r;
        max = max.max(r);
    }
    let n = src.len() as f64;
    Ok(AteReport {
        rmse_m: (sum_sq / n).sqrt(),
        max_m: max,
        mean_m: sum / n,
        n_pairs: src.len(),
        alignment,
    })
}
