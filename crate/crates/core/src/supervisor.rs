//! The auto-grader: consumes the pose stream, drives stage progression
//! through gates, runs the takeoff timer, detects collisions (static grid
//! plus the dynamic window) and geofence violations, issues land commands,
//! and appends leaderboard records.

use std::io::Write;
use std::path::Path;

use nalgebra::{Isometry3, Vector2, Vector3};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::num::{real, to_f64, Real};
use crate::transport::{Command, PoseSample};
use crate::world::{DynamicWindow, Geofence, GeofenceStatus, OccupancyGrid};

#[derive(Debug, Error)]
pub enum SupervisorError {
    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("gate aperture half-extents must be positive")]
    BadGate,
}

/// A planar aperture the robot must cross, in order.
#[derive(Debug, Clone, PartialEq)]
pub struct Gate<S: Real> {
    /// Rigid transform world -> gate-plane frame (plane z = 0, crossing
    /// direction -z to +z).
    pub world_to_gate: Isometry3<S>,
    /// Aperture rectangle half-extents, meters.
    pub aperture_half: Vector2<S>,
    pub kind: GateKind,
}

/// Static gates are plain apertures; the dynamic gate is additionally swept
/// by the scenario's rotating hand.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GateKind {
    Static,
    Dynamic,
}

impl<S: Real> Gate<S> {
    pub fn new(
        world_to_gate: Isometry3<S>,
        aperture_half: Vector2<S>,
        kind: GateKind,
    ) -> Result<Self, SupervisorError> {
        if !(aperture_half.x > S::zero() && aperture_half.y > S::zero()) {
            return Err(SupervisorError::BadGate);
        }
        Ok(Self { world_to_gate, aperture_half, kind })
    }

    pub fn from_world_pose(
        world_from_gate: Isometry3<S>,
        aperture_half: Vector2<S>,
        kind: GateKind,
    ) -> Result<Self, SupervisorError> {
        Self::new(world_from_gate.inverse(), aperture_half, kind)
    }
}

/// Outcome of one segment-vs-gate test.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CrossingResult {
    Crossed,
    NotCrossed,
    /// Dynamic gate only: the segment pierced the plane where the hand is.
    HandHit,
}

/// Does the motion segment `prev -> curr` cross the gate plane, inside the
/// aperture, in the gate's forward direction (-z to +z in the gate frame)?
/// For dynamic gates the intersection point is also tested against the hand
/// rectangle at `hand_angle(t)`.
pub fn gate_crossing<S: Real>(
    prev: Vector3<S>,
    curr: Vector3<S>,
    gate: &Gate<S>,
    window: Option<&DynamicWindow<S>>,
    t: S,
) -> CrossingResult {
    let p0 = crate::geom::transform_point(&gate.world_to_gate, prev);
    let p1 = crate::geom::transform_point(&gate.world_to_gate, curr);
    if !(p0.z < S::zero() && p1.z >= S::zero()) {
        return CrossingResult::NotCrossed; // parallel, backwards, or same side
    }
    let s = p0.z / (p0.z - p1.z);
    let hit = p0 + (p1 - p0) * s;
    if hit.x.abs() > gate.aperture_half.x || hit.y.abs() > gate.aperture_half.y {
        return CrossingResult::NotCrossed;
    }
    if gate.kind == GateKind::Dynamic {
        if let Some(w) = window {
            if w.covers_hand(hit.x, hit.y, w.hand_angle(t)) {
                return CrossingResult::HandHit;
            }
        }
    }
    CrossingResult::Crossed
}

/// True once the robot has climbed past the takeoff threshold.
pub fn detect_takeoff(p: &PoseSample, z_takeoff: f64) -> bool {
    p.position().z >= z_takeoff
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RunStatus {
    Armed,
    Flying,
    Collided,
    GeofenceLand,
    Finished,
}

impl RunStatus {
    pub fn is_terminal(&self) -> bool {
        matches!(self, RunStatus::Collided | RunStatus::GeofenceLand | RunStatus::Finished)
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            RunStatus::Armed => "armed",
            RunStatus::Flying => "flying",
            RunStatus::Collided => "collided",
            RunStatus::GeofenceLand => "geofence_land",
            RunStatus::Finished => "finished",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EventKind {
    Takeoff,
    GateCrossed,
    HandHit,
    Collision,
    GeofenceViolation,
    Finished,
    LandCommand,
}

/// One entry of the run report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunEvent {
    pub t_ns: u64,
    pub kind: EventKind,
    pub detail: String,
}

/// Auto-grader state for one run.
#[derive(Debug, Clone, PartialEq)]
pub struct RunState {
    /// Index of the next gate to cross.
    pub stage: usize,
    pub status: RunStatus,
    pub t_start_ns: Option<u64>,
    pub t_end_ns: Option<u64>,
    pub events: Vec<RunEvent>,
}

impl Default for RunState {
    fn default() -> Self {
        Self {
            stage: 0,
            status: RunStatus::Armed,
            t_start_ns: None,
            t_end_ns: None,
            events: Vec::new(),
        }
    }
}

impl RunState {
    pub fn stages_completed(&self) -> usize {
        self.stage
    }

    pub fn elapsed_s(&self) -> Option<f64> {
        match (self.t_start_ns, self.t_end_ns) {
            (Some(a), Some(b)) => Some((b.saturating_sub(a)) as f64 / 1e9),
            _ => None,
        }
    }

    fn push(&mut self, t_ns: u64, kind: EventKind, detail: impl Into<String>) {
        self.events.push(RunEvent { t_ns, kind, detail: detail.into() });
    }
}

/// Everything the grader needs to judge a run.
#[derive(Debug, Clone)]
pub struct Scenario<S: Real> {
    pub grid: OccupancyGrid<S>,
    pub fence: Geofence<S>,
    pub gates: Vec<Gate<S>>,
    pub window: Option<DynamicWindow<S>>,
    pub params: SupervisorParams<S>,
}

#[derive(Debug, Clone, Copy)]
pub struct SupervisorParams<S: Real> {
    /// Altitude that starts the timer, meters.
    pub z_takeoff: S,
    /// Robot collision sphere radius, meters.
    pub collision_radius: S,
    /// Voxelization of the dynamic window occupancy, meters.
    pub dynamic_voxel_size: S,
}

impl<S: Real> Default for SupervisorParams<S> {
    fn default() -> Self {
        Self {
            z_takeoff: real::<S>(0.15),
            collision_radius: real::<S>(0.2),
            dynamic_voxel_size: real::<S>(0.1),
        }
    }
}

/// One supervisor per run; feed it consecutive pose samples.
#[derive(Debug, Clone)]
pub struct Supervisor<S: Real> {
    scenario: Scenario<S>,
    state: RunState,
    epoch_ns: Option<u64>,
    prev: Option<PoseSample>,
}

impl<S: Real> Supervisor<S> {
    pub fn new(scenario: Scenario<S>) -> Self {
        Self { scenario, state: RunState::default(), epoch_ns: None, prev: None }
    }

    pub fn state(&self) -> &RunState {
        &self.state
    }

    pub fn scenario(&self) -> &Scenario<S> {
        &self.scenario
    }

    /// Seconds since the first sample; the dynamic window clock.
    pub fn run_time_s(&self, timestamp_ns: u64) -> S {
        let epoch = self.epoch_ns.unwrap_or(timestamp_ns);
        real::<S>(timestamp_ns.saturating_sub(epoch) as f64 / 1e9)
    }

    /// Pin the run clock origin so the grading hand phase matches an
    /// externally rendered overlay. No-op once any sample has been seen.
    pub fn set_epoch_ns(&mut self, epoch: u64) {
        if self.epoch_ns.is_none() {
            self.epoch_ns = Some(epoch);
        }
    }

    /// Feed the next pose sample. Evaluates, in order: takeoff, geofence,
    /// collision (static grid OR dynamic window), gate crossing. Returns the
    /// command to transmit, if any. Terminal states absorb further poses.
    pub fn step(&mut self, curr: &PoseSample) -> Option<Command> {
        if self.epoch_ns.is_none() {
            self.epoch_ns = Some(curr.timestamp_ns);
        }
        let prev = self.prev.replace(*curr);
        if self.state.status.is_terminal() {
            return None;
        }
        let ts = curr.timestamp_ns;
        let t = self.run_time_s(ts);
        let pos64 = curr.position();
        let pos = pos64.map(|v| real::<S>(v));

        if self.state.status == RunStatus::Armed {
            if detect_takeoff(curr, to_f64(self.scenario.params.z_takeoff)) {
                self.state.status = RunStatus::Flying;
                self.state.t_start_ns = Some(ts);
                self.state.push(ts, EventKind::Takeoff, format!("z={:.3}", pos64.z));
            } else {
                return None;
            }
        }

        // Safety events dominate scoring events.
        if self.scenario.fence.check(pos) == GeofenceStatus::Violation {
            self.state.status = RunStatus::GeofenceLand;
            self.state.t_end_ns = Some(ts);
            self.state.push(
                ts,
                EventKind::GeofenceViolation,
                format!("position ({:.3}, {:.3}, {:.3})", pos64.x, pos64.y, pos64.z),
            );
            self.state.push(ts, EventKind::LandCommand, "geofence");
            return Some(Command::Land { timestamp_ns: ts });
        }

        let r = self.scenario.params.collision_radius;
        let static_hit = self.scenario.grid.check_collision(pos, r);
        let dynamic_hit = self
            .scenario
            .window
            .as_ref()
            .map(|w| w.collides_sphere(pos, r, t, self.scenario.params.dynamic_voxel_size))
            .unwrap_or(false);
        if static_hit || dynamic_hit {
            self.state.status = RunStatus::Collided;
            self.state.t_end_ns = Some(ts);
            let what = if static_hit { "static scene" } else { "dynamic window" };
            self.state.push(ts, EventKind::Collision, what);
            self.state.push(ts, EventKind::LandCommand, "collision");
            return Some(Command::Land { timestamp_ns: ts });
        }

        if let (Some(prev), Some(gate)) = (prev, self.scenario.gates.get(self.state.stage)) {
            let prev_pos = prev.position().map(|v| real::<S>(v));
            match gate_crossing(prev_pos, pos, gate, self.scenario.window.as_ref(), t) {
                CrossingResult::Crossed => {
                    self.state.stage += 1;
                    self.state.push(ts, EventKind::GateCrossed, format!("stage {}", self.state.stage));
                    if self.state.stage == self.scenario.gates.len() {
                        self.state.status = RunStatus::Finished;
                        self.state.t_end_ns = Some(ts);
                        self.state.push(ts, EventKind::Finished, format!("stages {}", self.state.stage));
                    }
                }
                CrossingResult::HandHit => {
                    self.state.status = RunStatus::Collided;
                    self.state.t_end_ns = Some(ts);
                    self.state.push(ts, EventKind::HandHit, format!("stage {}", self.state.stage + 1));
                    self.state.push(ts, EventKind::LandCommand, "hand hit");
                    return Some(Command::Land { timestamp_ns: ts });
                }
                CrossingResult::NotCrossed => {}
            }
        }
        None
    }
}

/// One leaderboard row.
#[derive(Debug, Clone, PartialEq)]
pub struct LeaderboardRecord {
    pub team: String,
    pub stages_completed: usize,
    pub elapsed_s: f64,
    pub status: RunStatus,
    /// Wall-clock RFC 3339 timestamp.
    pub timestamp: String,
}

impl LeaderboardRecord {
    /// Build the row for a finished (or terminated) run.
    pub fn from_run(team: impl Into<String>, state: &RunState) -> Self {
        Self {
            team: team.into(),
            stages_completed: state.stages_completed(),
            elapsed_s: state.elapsed_s().unwrap_or(0.0),
            status: state.status,
            timestamp: chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Millis, true),
        }
    }
}

const LEADERBOARD_HEADER: &str = "team,stages,elapsed_s,status,iso_timestamp\n";

/// Append one CSV row, creating the file (with header) if needed. The write
/// happens under an exclusive advisory lock and as a single syscall, so
/// concurrent graders never interleave partial rows.
pub fn append_leaderboard(
    record: &LeaderboardRecord,
    path: impl AsRef<Path>,
) -> Result<(), SupervisorError> {
    let mut row = Vec::new();
    {
        let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(&mut row);
        w.write_record([
            record.team.as_str(),
            &record.stages_completed.to_string(),
            &format!("{:.3}", record.elapsed_s),
            record.status.as_str(),
            &record.timestamp,
        ])?;
        w.flush()?;
    }

    let file = std::fs::OpenOptions::new().create(true).append(true).open(path)?;
    lock_exclusive(&file)?;
    let result = (|| {
        let mut buf = Vec::with_capacity(row.len() + LEADERBOARD_HEADER.len());
        if file.metadata()?.len() == 0 {
            buf.extend_from_slice(LEADERBOARD_HEADER.as_bytes());
        }
        buf.extend_from_slice(&row);
        (&file).write_all(&buf)?;
        (&file).flush()?;
        Ok(())
    })();
    unlock(&file);
    result
}

#[cfg(unix)]
fn lock_exclusive(file: &std::fs::File) -> std::io::Result<()> {
    use std::os::unix::io::AsRawFd;
    if unsafe { libc::flock(file.as_raw_fd(), libc::LOCK_EX) } != 0 {
        return Err(std::io::Error::last_os_error());
    }
    Ok(())
}

#[cfg(unix)]
fn unlock(file: &std::fs::File) {
    use std::os::unix::io::AsRawFd;
    unsafe {
        libc::flock(file.as_raw_fd(), libc::LOCK_UN);
    }
}

#[cfg(not(unix))]
fn lock_exclusive(_file: &std::fs::File) -> std::io::Result<()> {
    Ok(())
}

#[cfg(not(unix))]
fn unlock(_file: &std::fs::File) {}

/// Export the event log as JSON lines.
pub fn write_event_log(events: &[RunEvent], mut w: impl Write) -> Result<(), SupervisorError> {
    for e in events {
        serde_json::to_writer(&mut w, e).map_err(std::io::Error::other)?;
        writeln!(w)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::world::build_grid;
    use nalgebra::{Translation3, UnitQuaternion};
    use std::f64::consts::FRAC_PI_2;

    fn gate_at_y(y: f64) -> Gate<f64> {
        // Gate plane normal to +y: crossing direction is increasing y.
        let world_from_gate = Isometry3::from_parts(
            Translation3::new(0.0, y, 1.0),
            UnitQuaternion::from_axis_angle(&Vector3::x_axis(), -FRAC_PI_2),
        );
        Gate::from_world_pose(world_from_gate, Vector2::new(0.5, 0.5), GateKind::Static).unwrap()
    }

    fn simple_scenario(gates: Vec<Gate<f64>>, window: Option<DynamicWindow<f64>>) -> Scenario<f64> {
        // Static obstacle far away from the course at (5, 5, 5).
        let grid = build_grid(&[Vector3::new(5.0, 5.0, 5.0)], 0.1, 0.0).unwrap();
        let fence =
            Geofence::new(Vector3::new(-5.0, -5.0, -0.5), Vector3::new(11.0, 4.5, 3.65)).unwrap();
        Scenario { grid, fence, gates, window, params: SupervisorParams::default() }
    }

    fn sample(seq: u32, t_ns: u64, p: Vector3<f64>) -> PoseSample {
        PoseSample::new(seq, t_ns, p, UnitQuaternion::identity())
    }

    #[test]
    fn gate_frame_sanity() {
        let g = gate_at_y(1.0);
        // A point before the plane (y < 1) maps to z < 0 in the gate frame.
        let p = crate::geom::transform_point(&g.world_to_gate, Vector3::new(0.0, 0.5, 1.0));
        assert!(p.z < 0.0, "{p:?}");
        let q = crate::geom::transform_point(&g.world_to_gate, Vector3::new(0.0, 1.5, 1.0));
        assert!(q.z > 0.0, "{q:?}");
    }

    #[test]
    fn crossing_through_center() {
        let g = gate_at_y(1.0);
        let r = gate_crossing(
            Vector3::new(0.0, 0.5, 1.0),
            Vector3::new(0.0, 1.5, 1.0),
            &g,
            None,
            0.0,
        );
        assert_eq!(r, CrossingResult::Crossed);
    }

    #[test]
    fn parallel_segment_does_not_cross() {
        let g = gate_at_y(1.0);
        let r = gate_crossing(
            Vector3::new(-1.0, 0.5, 1.0),
            Vector3::new(1.0, 0.5, 1.0),
            &g,
            None,
            0.0,
        );
        assert_eq!(r, CrossingResult::NotCrossed);
        // Backwards crossing does not count either.
        let r = gate_crossing(
            Vector3::new(0.0, 1.5, 1.0),
            Vector3::new(0.0, 0.5, 1.0),
            &g,
            None,
            0.0,
        );
        assert_eq!(r, CrossingResult::NotCrossed);
    }

    #[test]
    fn crossing_outside_aperture_rejected() {
        let g = gate_at_y(1.0);
        let r = gate_crossing(
            Vector3::new(2.0, 0.5, 1.0),
            Vector3::new(2.0, 1.5, 1.0),
            &g,
            None,
            0.0,
        );
        assert_eq!(r, CrossingResult::NotCrossed);
    }

    fn dynamic_window_at_y(y: f64) -> DynamicWindow<f64> {
        let world_from_window = Isometry3::from_parts(
            Translation3::new(0.0, y, 1.0),
            UnitQuaternion::from_axis_angle(&Vector3::x_axis(), -FRAC_PI_2),
        );
        DynamicWindow::from_world_pose(
            world_from_window,
            Vector2::new(0.5, 0.5),
            0.4,
            0.08,
            0.1,
            FRAC_PI_2, // quarter turn per second: period 4 s
            0.0,
        )
        .unwrap()
    }

    #[test]
    fn hand_hit_at_t_crossed_at_antipode() {
        let w = dynamic_window_at_y(2.0);
        let gate = Gate::new(w.world_to_window, w.aperture_half, GateKind::Dynamic).unwrap();
        // Intersection point on the hand when theta = 0.
        let prev = Vector3::new(0.2, 1.9, 1.0);
        let curr = Vector3::new(0.2, 2.1, 1.0);
        assert_eq!(gate_crossing(prev, curr, &gate, Some(&w), 0.0), CrossingResult::HandHit);
        // Half a rotation later (t = pi/omega = 2 s) the hand points away.
        assert_eq!(gate_crossing(prev, curr, &gate, Some(&w), 2.0), CrossingResult::Crossed);
    }

    #[test]
    fn takeoff_threshold() {
        let p = sample(0, 0, Vector3::new(0.0, 0.0, 0.05));
        assert!(!detect_takeoff(&p, 0.15));
        let p = sample(0, 0, Vector3::new(0.0, 0.0, 0.20));
        assert!(detect_takeoff(&p, 0.15));
    }

    #[test]
    fn noisy_ascent_single_takeoff_transition() {
        let mut sup = Supervisor::new(simple_scenario(vec![gate_at_y(1.0)], None));
        let zs = [0.02, 0.05, 0.12, 0.14, 0.16, 0.14, 0.18, 0.25, 0.3];
        for (i, z) in zs.iter().enumerate() {
            sup.step(&sample(i as u32, i as u64 * 10_000_000, Vector3::new(0.0, 0.0, *z)));
        }
        let takeoffs =
            sup.state().events.iter().filter(|e| e.kind == EventKind::Takeoff).count();
        assert_eq!(takeoffs, 1);
        assert_eq!(sup.state().status, RunStatus::Flying);
        assert_eq!(sup.state().t_start_ns, Some(4 * 10_000_000));
    }

    #[test]
    fn straight_line_through_gates_finishes() {
        let gates = vec![gate_at_y(1.0), gate_at_y(2.0), gate_at_y(3.0)];
        let mut sup = Supervisor::new(simple_scenario(gates, None));
        let mut seq = 0u32;
        let mut t = 0u64;
        let mut feed = |sup: &mut Supervisor<f64>, p: Vector3<f64>| {
            let cmd = sup.step(&sample(seq, t, p));
            seq += 1;
            t += 10_000_000;
            cmd
        };
        feed(&mut sup, Vector3::new(0.0, 0.0, 0.0));
        feed(&mut sup, Vector3::new(0.0, 0.0, 0.5));
        feed(&mut sup, Vector3::new(0.0, 0.0, 1.0));
        for i in 0..40 {
            let y = i as f64 * 0.1;
            if sup.state().status.is_terminal() {
                break;
            }
            feed(&mut sup, Vector3::new(0.0, y, 1.0));
        }
        assert_eq!(sup.state().status, RunStatus::Finished);
        assert_eq!(sup.state().stages_completed(), 3);
        assert!(sup.state().elapsed_s().unwrap() > 0.0);
        // Stages equal the count of crossing events.
        let crossings =
            sup.state().events.iter().filter(|e| e.kind == EventKind::GateCrossed).count();
        assert_eq!(crossings, 3);
    }

    #[test]
    fn collision_emits_land_on_same_step() {
        let grid = build_grid(&[Vector3::new(2.0, 2.0, 1.0)], 0.1, 0.0).unwrap();
        let mut sup =
            Supervisor::new(Scenario { grid, ..simple_scenario(vec![gate_at_y(1.0)], None) });
        sup.step(&sample(0, 1_000, Vector3::new(2.0, 1.0, 1.0)));
        assert_eq!(sup.state().status, RunStatus::Flying);
        let cmd = sup.step(&sample(1, 2_000, Vector3::new(2.0, 2.0, 1.05)));
        assert_eq!(sup.state().status, RunStatus::Collided);
        assert!(matches!(cmd, Some(Command::Land { timestamp_ns: 2_000 })));
        assert_eq!(sup.state().t_end_ns, Some(2_000));
    }

    #[test]
    fn geofence_violation_lands() {
        let mut sup = Supervisor::new(simple_scenario(vec![gate_at_y(1.0)], None));
        sup.step(&sample(0, 0, Vector3::new(0.0, 0.0, 1.0)));
        let cmd = sup.step(&sample(1, 50, Vector3::new(12.0, 0.0, 1.0)));
        assert_eq!(sup.state().status, RunStatus::GeofenceLand);
        assert!(matches!(cmd, Some(Command::Land { .. })));
    }

    #[test]
    fn terminal_states_absorb() {
        let mut sup = Supervisor::new(simple_scenario(vec![gate_at_y(1.0)], None));
        sup.step(&sample(0, 0, Vector3::new(0.0, 0.0, 1.0)));
        sup.step(&sample(1, 1, Vector3::new(12.0, 0.0, 1.0)));
        let before = sup.state().clone();
        for (i, p) in [
            Vector3::new(0.0, 0.5, 1.0),
            Vector3::new(0.0, 1.5, 1.0),
            Vector3::new(50.0, 50.0, 50.0),
        ]
        .iter()
        .enumerate()
        {
            let cmd = sup.step(&sample(2 + i as u32, 2 + i as u64, *p));
            assert!(cmd.is_none());
        }
        assert_eq!(sup.state(), &before);
    }

    #[test]
    fn fuzzed_traces_never_leave_terminal_states() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(12);
        for _ in 0..30 {
            let window = dynamic_window_at_y(2.0);
            let gates = vec![
                gate_at_y(1.0),
                Gate::new(window.world_to_window, window.aperture_half, GateKind::Dynamic).unwrap(),
            ];
            let mut sup = Supervisor::new(simple_scenario(gates, Some(window)));
            let mut terminal_event_count: Option<usize> = None;
            for i in 0..300 {
                let p = Vector3::new(
                    rng.gen_range(-6.0..12.0),
                    rng.gen_range(-6.0..5.0),
                    rng.gen_range(-1.0..4.0),
                );
                sup.step(&sample(i as u32, i as u64 * 5_000_000, p));
                match terminal_event_count {
                    None => {
                        if sup.state().status.is_terminal() {
                            terminal_event_count = Some(sup.state().events.len());
                            let end = sup.state().t_end_ns.unwrap();
                            if let Some(start) = sup.state().t_start_ns {
                                assert!(end >= start);
                            }
                        }
                    }
                    Some(n) => {
                        // Nothing changes once terminal.
                        assert!(sup.state().status.is_terminal());
                        assert_eq!(sup.state().events.len(), n);
                    }
                }
            }
        }
    }

    #[test]
    fn identical_traces_identical_logs() {
        let trace: Vec<PoseSample> = (0..60)
            .map(|i| {
                sample(
                    i,
                    i as u64 * 10_000_000,
                    Vector3::new(
                        0.0,
                        i as f64 * 0.08 - 0.5,
                        if i < 5 { 0.05 * i as f64 } else { 1.0 },
                    ),
                )
            })
            .collect();
        let mk = || {
            let w = dynamic_window_at_y(2.0);
            let gates = vec![
                gate_at_y(1.0),
                Gate::new(w.world_to_window, w.aperture_half, GateKind::Dynamic).unwrap(),
            ];
            Supervisor::new(simple_scenario(gates, Some(w)))
        };
        let mut a = mk();
        let mut b = mk();
        for s in &trace {
            a.step(s);
            b.step(s);
        }
        assert_eq!(a.state(), b.state());
    }

    #[test]
    fn leaderboard_append_and_header() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("board.csv");
        let rec = LeaderboardRecord {
            team: "alpha, with comma".into(),
            stages_completed: 3,
            elapsed_s: 12.345,
            status: RunStatus::Finished,
            timestamp: "2026-01-01T00:00:00Z".into(),
        };
        append_leaderboard(&rec, &path).unwrap();
        append_leaderboard(&rec, &path).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines.len(), 3);
        assert_eq!(lines[0], "team,stages,elapsed_s,status,iso_timestamp");
        assert!(lines[1].starts_with("\"alpha, with comma\",3,12.345,finished,"));
        assert_eq!(lines[1], lines[2]);
    }

    #[test]
    fn concurrent_leaderboard_appends_stay_intact() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("board.csv");
        let mut handles = Vec::new();
        for w in 0..4 {
            let path = path.clone();
            handles.push(std::thread::spawn(move || {
                for i in 0..25 {
                    let rec = LeaderboardRecord {
                        team: format!("team-{w}"),
                        stages_completed: i % 4,
                        elapsed_s: i as f64,
                        status: RunStatus::Finished,
                        timestamp: format!("2026-01-01T00:00:{i:02}Z"),
                    };
                    append_leaderboard(&rec, &path).unwrap();
                }
            }));
        }
        for h in handles {
            h.join().unwrap();
        }
        let text = std::fs::read_to_string(&path).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines.len(), 101, "header + 100 rows");
        assert_eq!(lines[0], "team,stages,elapsed_s,status,iso_timestamp");
        for line in &lines[1..] {
            let fields: Vec<&str> = line.split(',').collect();
            assert_eq!(fields.len(), 5, "torn row: {line}");
            assert!(fields[0].starts_with("team-"));
            assert_eq!(fields[3], "finished");
        }
    }

    #[test]
    fn event_log_is_json_lines() {
        let events = vec![
            RunEvent { t_ns: 5, kind: EventKind::Takeoff, detail: "z=0.2".into() },
            RunEvent { t_ns: 9, kind: EventKind::GateCrossed, detail: "stage 1".into() },
        ];
        let mut buf = Vec::new();
        write_event_log(&events, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines.len(), 2);
        let v: serde_json::Value = serde_json::from_str(lines[0]).unwrap();
        assert_eq!(v["t_ns"], 5);
        assert_eq!(v["kind"], "takeoff");
    }
}
