//! Desk-scale stand-in for mocap plus a real drone: a first-order-lag
//! quadrotor kinematics model that obeys command datagrams, reference
//! trajectory generators, and a depth-driven potential-field autonomy step
//! that closes the full loop.

use nalgebra::Vector3;
use thiserror::Error;

use crate::num::{real, to_f64, Real};
use crate::render::CameraIntrinsics;
use crate::transport::Command;

#[derive(Debug, Error)]
pub enum SimError {
    #[error("t = {t} outside trajectory range [0, {duration}]")]
    TimeOutOfRange { t: f64, duration: f64 },
    #[error("invalid trajectory parameters: {0}")]
    BadParams(&'static str),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DroneMode {
    Grounded,
    Flying,
    Landing,
}

/// Kinematic model parameters.
#[derive(Debug, Clone, Copy)]
pub struct SimParams<S: Real> {
    /// Velocity tracking time constant, seconds.
    pub tau: S,
    /// Speed limit, m/s.
    pub v_max: S,
    /// Descent speed in land mode, m/s.
    pub land_speed: S,
    /// Climb speed during auto-takeoff, m/s.
    pub takeoff_speed: S,
    /// Altitude at which auto-takeoff hands over to hover, meters.
    pub takeoff_altitude: S,
}

impl<S: Real> Default for SimParams<S> {
    fn default() -> Self {
        Self {
            tau: real::<S>(0.3),
            v_max: real::<S>(6.0),
            land_speed: real::<S>(0.5),
            takeoff_speed: real::<S>(0.5),
            takeoff_altitude: real::<S>(1.0),
        }
    }
}

/// Simulated drone state: first-order velocity tracking, semi-implicit Euler
/// position integration, hard speed clamp.
#[derive(Debug, Clone, Copy)]
pub struct SimDrone<S: Real> {
    pub position: Vector3<S>,
    pub velocity: Vector3<S>,
    pub yaw: S,
    pub commanded_velocity: Vector3<S>,
    pub commanded_yaw_rate: S,
    pub mode: DroneMode,
    pub params: SimParams<S>,
    /// Rejected (non-finite) commands.
    pub faults: u32,
    auto_takeoff: bool,
    position_target: Option<Vector3<S>>,
}

impl<S: Real> SimDrone<S> {
    pub fn grounded_at(position: Vector3<S>, params: SimParams<S>) -> Self {
        Self {
            position: Vector3::new(position.x, position.y, S::zero()),
            velocity: Vector3::zeros(),
            yaw: S::zero(),
            commanded_velocity: Vector3::zeros(),
            commanded_yaw_rate: S::zero(),
            mode: DroneMode::Grounded,
            params,
            faults: 0,
            auto_takeoff: false,
            position_target: None,
        }
    }

    pub fn flying_at(position: Vector3<S>, params: SimParams<S>) -> Self {
        Self {
            position,
            velocity: Vector3::zeros(),
            yaw: S::zero(),
            commanded_velocity: Vector3::zeros(),
            commanded_yaw_rate: S::zero(),
            mode: DroneMode::Flying,
            params,
            faults: 0,
            auto_takeoff: false,
            position_target: None,
        }
    }

    /// Ingest a command. Non-finite payloads are rejected and counted; the
    /// state is left unchanged.
    pub fn apply_command(&mut self, cmd: &Command) {
        match cmd {
            Command::Velocity { v, yaw_rate, .. } => {
                if !(v.iter().all(|x| x.is_finite()) && yaw_rate.is_finite()) {
                    self.faults += 1;
                    return;
                }
                if self.mode == DroneMode::Flying {
                    self.auto_takeoff = false;
                    self.position_target = None;
                    self.commanded_velocity = v.map(|x| real::<S>(x));
                    self.commanded_yaw_rate = real::<S>(*yaw_rate);
                }
            }
            Command::Position { p, yaw, .. } => {
                if !(p.iter().all(|x| x.is_finite()) && yaw.is_finite()) {
                    self.faults += 1;
                    return;
                }
                if self.mode == DroneMode::Flying {
                    self.auto_takeoff = false;
                    self.position_target = Some(p.map(|x| real::<S>(x)));
                }
            }
            Command::Land { .. } => {
                if self.mode != DroneMode::Grounded {
                    self.mode = DroneMode::Landing;
                    self.position_target = None;
                }
            }
            Command::Takeoff { .. } => {
                if self.mode == DroneMode::Grounded {
                    self.mode = DroneMode::Flying;
                    self.auto_takeoff = true;
                    self.commanded_velocity = Vector3::zeros();
                    self.commanded_yaw_rate = S::zero();
                }
            }
        }
    }

    /// Advance by `dt` seconds (`0 < dt <= 0.05`).
    pub fn step(&mut self, dt: S) {
        assert!(dt > S::zero() && dt <= real::<S>(0.05), "dt out of range");
        if self.mode == DroneMode::Grounded {
            self.position.z = S::zero();
            self.velocity = Vector3::zeros();
            return;
        }

        let v_cmd = match self.mode {
            DroneMode::Landing => Vector3::new(S::zero(), S::zero(), -self.params.land_speed),
            DroneMode::Flying if self.auto_takeoff => {
                Vector3::new(S::zero(), S::zero(), self.params.takeoff_speed)
            }
            DroneMode::Flying => {
                if let Some(target) = self.position_target {
                    // Saturating proportional approach to the target.
                    let err = target - self.position;
                    let v = err; // gain 1.0 1/s
                    let n = v.norm();
                    if n > self.params.v_max {
                        v * (self.params.v_max / n)
                    } else {
                        v
                    }
                } else {
                    self.commanded_velocity
                }
            }
            DroneMode::Grounded => unreachable!(),
        };

        // First-order lag, then semi-implicit Euler on position.
        self.velocity += (v_cmd - self.velocity) * (dt / self.params.tau);
        let speed = self.velocity.norm();
        if speed > self.params.v_max {
            self.velocity *= self.params.v_max / speed;
        }
        self.position += self.velocity * dt;
        self.yaw += self.commanded_yaw_rate * dt;

        if self.mode == DroneMode::Flying
            && self.auto_takeoff
            && self.position.z >= self.params.takeoff_altitude
        {
            self.auto_takeoff = false;
            self.commanded_velocity = Vector3::zeros();
        }
        if self.mode == DroneMode::Landing && self.position.z <= S::zero() {
            self.mode = DroneMode::Grounded;
            self.position.z = S::zero();
            self.velocity = Vector3::zeros();
            self.commanded_velocity = Vector3::zeros();
        }
    }
}

/// Functional form: apply a command (if any) and integrate one step.
pub fn sim_step<S: Real>(mut state: SimDrone<S>, cmd: Option<&Command>, dt: S) -> SimDrone<S> {
    if let Some(cmd) = cmd {
        state.apply_command(cmd);
    }
    state.step(dt);
    state
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TrajectoryKind {
    Square,
    Spiral,
    Lemniscate,
}

/// Reference trajectory parameters. `amplitude` is the square side length,
/// the spiral start radius, or the lemniscate lobe amplitude.
#[derive(Debug, Clone, Copy)]
pub struct TrajectorySpec<S: Real> {
    pub kind: TrajectoryKind,
    pub amplitude: S,
    pub omega: S,
    pub height: S,
    /// Spiral radial growth, m/s.
    pub radial_rate: S,
    /// Spiral climb, m/s.
    pub climb_rate: S,
    pub duration: S,
}

impl<S: Real> TrajectorySpec<S> {
    pub fn new(kind: TrajectoryKind, amplitude: S, omega: S, height: S, duration: S) -> Result<Self, SimError> {
        if !(amplitude > S::zero() && omega > S::zero() && duration > S::zero()) {
            return Err(SimError::BadParams("amplitude, omega, duration must be positive"));
        }
        Ok(Self { kind, amplitude, omega, height, radial_rate: S::zero(), climb_rate: S::zero(), duration })
    }

    /// Square translation speed: one full perimeter per `2*pi/omega` period.
    pub fn square_speed(&self) -> S {
        real::<S>(2.0) * self.amplitude * self.omega / S::pi()
    }
}

/// Evaluate the reference position at time `t`.
///
/// square: constant-speed piecewise-linear loop over a side-`A` square at
/// the given height (period `4A/v = 2*pi/omega`); spiral:
/// `((A + k t) cos wt, (A + k t) sin wt, h + c t)`; lemniscate (Gerono):
/// `(A sin wt, A sin wt cos wt, h)`.
pub fn trajectory_point<S: Real>(spec: &TrajectorySpec<S>, t: S) -> Result<Vector3<S>, SimError> {
    if t < S::zero() || t > spec.duration {
        return Err(SimError::TimeOutOfRange { t: to_f64(t), duration: to_f64(spec.duration) });
    }
    let a = spec.amplitude;
    let h = spec.height;
    let wt = spec.omega * t;
    Ok(match spec.kind {
        TrajectoryKind::Square => {
            let half = a * real::<S>(0.5);
            let corners = [
                Vector3::new(half, -half, h),
                Vector3::new(half, half, h),
                Vector3::new(-half, half, h),
                Vector3::new(-half, -half, h),
            ];
            let perimeter = real::<S>(4.0) * a;
            let mut s = spec.square_speed() * t;
            s -= (s / perimeter).floor() * perimeter;
            let side = to_f64((s / a).floor()).min(3.0) as usize;
            let frac = (s - real::<S>(side as f64) * a) / a;
            let c0 = corners[side];
            let c1 = corners[(side + 1) % 4];
            c0 + (c1 - c0) * frac
        }
        TrajectoryKind::Spiral => {
            let r = a + spec.radial_rate * t;
            Vector3::new(r * wt.cos(), r * wt.sin(), h + spec.climb_rate * t)
        }
        TrajectoryKind::Lemniscate => Vector3::new(a * wt.sin(), a * wt.sin() * wt.cos(), h),
    })
}

/// Gains for the depth-driven potential field.
#[derive(Debug, Clone, Copy)]
pub struct PotentialFieldParams<S: Real> {
    pub k_attract: S,
    pub k_repulse: S,
    /// Depth beyond which pixels exert no repulsion, meters.
    pub d_max: S,
    /// Command speed limit, m/s.
    pub v_max: S,
}

impl<S: Real> Default for PotentialFieldParams<S> {
    fn default() -> Self {
        Self {
            k_attract: real::<S>(1.0),
            k_repulse: real::<S>(2.0),
            d_max: real::<S>(3.0),
            v_max: real::<S>(6.0),
        }
    }
}

/// Camera-frame avoidance velocity from a depth image.
///
/// Every pixel with `0 < d < d_max` pushes along its negated ray direction
/// with weight `1/d - 1/d_max`; the sum is normalized by the contributing
/// pixel count. The command is `k_a * goal_dir + k_r * repulsive`, clamped
/// to `v_max`. With no valid-depth pixels the command is pure attraction.
pub fn potential_field_velocity<S: Real>(
    depth: &[f32],
    k: &CameraIntrinsics<S>,
    goal_dir: Vector3<S>,
    params: &PotentialFieldParams<S>,
) -> Vector3<S> {
    debug_assert_eq!(depth.len(), k.pixel_count());
    let mut repulsive = Vector3::zeros();
    let mut contributors = 0usize;
    for y in 0..k.height {
        for x in 0..k.width {
            let d = real::<S>(depth[(y * k.width + x) as usize] as f64);
            if d <= S::zero() || d >= params.d_max {
                continue;
            }
            let ray = Vector3::new(
                (real::<S>(x as f64) - k.cx) / k.fx,
                (real::<S>(y as f64) - k.cy) / k.fy,
                S::one(),
            );
            let ray = ray / ray.norm();
            let weight = S::one() / d - S::one() / params.d_max;
            repulsive -= ray * weight;
            contributors += 1;
        }
    }
    if contributors > 0 {
        repulsive /= real::<S>(contributors as f64);
    }
    let mut v = goal_dir * params.k_attract + repulsive * params.k_repulse;
    let n = v.norm();
    if n > params.v_max {
        v *= params.v_max / n;
    }
    v
}

/// [`potential_field_velocity`] packaged as a velocity command.
pub fn potential_field_step<S: Real>(
    depth: &[f32],
    k: &CameraIntrinsics<S>,
    goal_dir: Vector3<S>,
    params: &PotentialFieldParams<S>,
    timestamp_ns: u64,
) -> Command {
    let v = potential_field_velocity(depth, k, goal_dir, params);
    Command::Velocity {
        v: Vector3::new(to_f64(v.x), to_f64(v.y), to_f64(v.z)),
        yaw_rate: 0.0,
        timestamp_ns,
    }
}
