//! Axis-aligned safe-flight volume. Leaving it forces a landing.

use nalgebra::Vector3;

use crate::num::Real;

use super::WorldError;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Geofence<S: Real> {
    pub min_corner: Vector3<S>,
    pub max_corner: Vector3<S>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GeofenceStatus {
    Inside,
    Violation,
}

impl<S: Real> Geofence<S> {
    pub fn new(min_corner: Vector3<S>, max_corner: Vector3<S>) -> Result<Self, WorldError> {
        if (0..3).any(|i| min_corner[i] >= max_corner[i]) {
            return Err(WorldError::BadGeofence);
        }
        Ok(Self { min_corner, max_corner })
    }

    /// Boundary counts as inside.
    pub fn check(&self, p: Vector3<S>) -> GeofenceStatus {
        let inside =
            (0..3).all(|i| p[i] >= self.min_corner[i] && p[i] <= self.max_corner[i]);
        if inside {
            GeofenceStatus::Inside
        } else {
            GeofenceStatus::Violation
        }
    }
}

/// Free-function form of [`Geofence::check`].
pub fn check_geofence<S: Real>(fence: &Geofence<S>, p: Vector3<S>) -> GeofenceStatus {
    fence.check(p)
}
