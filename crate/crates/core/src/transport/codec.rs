//! Fixed-layout datagram codecs for poses and commands.

use nalgebra::{Quaternion, UnitQuaternion, Vector3};

use crate::geom::Pose6D;

use super::TransportError;

/// Leading magic of a pose datagram (bytes 0x5A, 0x56 on the wire).
pub const POSE_MAGIC: u16 = 0x565A;
pub const POSE_VERSION: u8 = 1;
/// magic u16 + version u8 + flags u8 + seq u32 + timestamp u64 + pos 3xf64 +
/// quat 4xf64.
pub const POSE_DATAGRAM_LEN: usize = 72;

pub const COMMAND_MAGIC: u16 = 0x434D;
/// magic u16 + kind u8 + timestamp u64 + payload 4xf64.
pub const COMMAND_DATAGRAM_LEN: usize = 43;

/// One externally measured pose update.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PoseSample {
    pub seq: u32,
    pub timestamp_ns: u64,
    pub pose: Pose6D,
}

impl PoseSample {
    pub fn new(seq: u32, timestamp_ns: u64, position: Vector3<f64>, quat: UnitQuaternion<f64>) -> Self {
        Self { seq, timestamp_ns, pose: Pose6D::new(position, quat) }
    }

    pub fn position(&self) -> Vector3<f64> {
        self.pose.position
    }
}

/// Robot command. Land and takeoff carry no payload.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Command {
    /// Body-frame velocity (vx, vy, vz) m/s plus yaw rate rad/s.
    Velocity { v: Vector3<f64>, yaw_rate: f64, timestamp_ns: u64 },
    /// Absolute position (x, y, z) m plus yaw rad.
    Position { p: Vector3<f64>, yaw: f64, timestamp_ns: u64 },
    Land { timestamp_ns: u64 },
    Takeoff { timestamp_ns: u64 },
}

impl Command {
    pub fn kind_code(&self) -> u8 {
        match self {
            Command::Velocity { .. } => 0,
            Command::Position { .. } => 1,
            Command::Land { .. } => 2,
            Command::Takeoff { .. } => 3,
        }
    }

    pub fn timestamp_ns(&self) -> u64 {
        match self {
            Command::Velocity { timestamp_ns, .. }
            | Command::Position { timestamp_ns, .. }
            | Command::Land { timestamp_ns }
            | Command::Takeoff { timestamp_ns } => *timestamp_ns,
        }
    }

    fn payload(&self) -> [f64; 4] {
        match self {
            Command::Velocity { v, yaw_rate, .. } => [v.x, v.y, v.z, *yaw_rate],
            Command::Position { p, yaw, .. } => [p.x, p.y, p.z, *yaw],
            Command::Land { .. } | Command::Takeoff { .. } => [0.0; 4],
        }
    }
}

/// Serialize a pose sample to its 72-byte datagram.
pub fn encode_pose(p: &PoseSample) -> [u8; POSE_DATAGRAM_LEN] {
    let mut buf = [0u8; POSE_DATAGRAM_LEN];
    buf[0..2].copy_from_slice(&POSE_MAGIC.to_le_bytes());
    buf[2] = POSE_VERSION;
    buf[3] = 0; // flags
    buf[4..8].copy_from_slice(&p.seq.to_le_bytes());
    buf[8..16].copy_from_slice(&p.timestamp_ns.to_le_bytes());
    let mut off = 16;
    for v in p.pose.position.iter() {
        buf[off..off + 8].copy_from_slice(&v.to_le_bytes());
        off += 8;
    }
    for v in p.pose.quat_wxyz() {
        buf[off..off + 8].copy_from_slice(&v.to_le_bytes());
        off += 8;
    }
    buf
}

/// Parse a 72-byte pose datagram. The quaternion must be unit within 1e-3;
/// it is re-normalized when it is off by more than f64 round-off.
pub fn decode_pose(bytes: &[u8]) -> Result<PoseSample, TransportError> {
    if bytes.len() != POSE_DATAGRAM_LEN {
        return Err(TransportError::Length { got: bytes.len(), expected: POSE_DATAGRAM_LEN });
    }
    let magic = u16::from_le_bytes([bytes[0], bytes[1]]);
    if magic != POSE_MAGIC {
        return Err(TransportError::Magic { got: magic, expected: POSE_MAGIC });
    }
    if bytes[2] != POSE_VERSION {
        return Err(TransportError::Version(bytes[2]));
    }
    let seq = u32::from_le_bytes(bytes[4..8].try_into().unwrap());
    let timestamp_ns = u64::from_le_bytes(bytes[8..16].try_into().unwrap());
    let f = |i: usize| f64::from_le_bytes(bytes[16 + i * 8..24 + i * 8].try_into().unwrap());
    let position = Vector3::new(f(0), f(1), f(2));
    if position.iter().any(|v| !v.is_finite()) {
        return Err(TransportError::NonFinite("position"));
    }
    let q = Quaternion::new(f(3), f(4), f(5), f(6));
    if q.coords.iter().any(|v| !v.is_finite()) {
        return Err(TransportError::NonFinite("quat"));
    }
    let norm = q.norm();
    if (norm - 1.0).abs() > 1e-3 {
        return Err(TransportError::BadQuaternion(norm));
    }
    // Keep bit-exact values when the sender already normalized; only repair
    // genuine drift so decode(encode(p)) == p holds exactly.
    let quat = if (norm - 1.0).abs() <= 1e-9 {
        UnitQuaternion::new_unchecked(q)
    } else {
        UnitQuaternion::from_quaternion(q)
    };
    Ok(PoseSample { seq, timestamp_ns, pose: Pose6D { position, quat } })
}

/// Serialize a command to its 43-byte datagram.
pub fn encode_command(c: &Command) -> [u8; COMMAND_DATAGRAM_LEN] {
    let mut buf = [0u8; COMMAND_DATAGRAM_LEN];
    buf[0..2].copy_from_slice(&COMMAND_MAGIC.to_le_bytes());
    buf[2] = c.kind_code();
    buf[3..11].copy_from_slice(&c.timestamp_ns().to_le_bytes());
    let mut off = 11;
    for v in c.payload() {
        buf[off..off + 8].copy_from_slice(&v.to_le_bytes());
        off += 8;
    }
    buf
}

/// Parse a 43-byte command datagram. Land/takeoff payloads are ignored.
pub fn decode_command(bytes: &[u8]) -> Result<Command, TransportError> {
    if bytes.len() != COMMAND_DATAGRAM_LEN {
        return Err(TransportError::Length { got: bytes.len(), expected: COMMAND_DATAGRAM_LEN });
    }
    let magic = u16::from_le_bytes([bytes[0], bytes[1]]);
    if magic != COMMAND_MAGIC {
        return Err(TransportError::Magic { got: magic, expected: COMMAND_MAGIC });
    }
    let kind = bytes[2];
    let timestamp_ns = u64::from_le_bytes(bytes[3..11].try_into().unwrap());
    let f = |i: usize| f64::from_le_bytes(bytes[11 + i * 8..19 + i * 8].try_into().unwrap());
    let payload = [f(0), f(1), f(2), f(3)];
    match kind {
        0 | 1 => {
            if payload.iter().any(|v| !v.is_finite()) {
                return Err(TransportError::NonFinite("payload"));
            }
            let v3 = Vector3::new(payload[0], payload[1], payload[2]);
            Ok(if kind == 0 {
                Command::Velocity { v: v3, yaw_rate: payload[3], timestamp_ns }
            } else {
                Command::Position { p: v3, yaw: payload[3], timestamp_ns }
            })
        }
        2 => Ok(Command::Land { timestamp_ns }),
        3 => Ok(Command::Takeoff { timestamp_ns }),
        other => Err(TransportError::UnknownKind(other)),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pose_zero_identity_layout_and_round_trip() {
        let p = PoseSample::new(0, 0, Vector3::zeros(), UnitQuaternion::identity());
        let bytes = encode_pose(&p);
        assert_eq!(bytes.len(), 72);
        assert_eq!(&bytes[0..2], &[0x5A, 0x56]);
        assert_eq!(bytes[2], 1);
        let back = decode_pose(&bytes).unwrap();
        assert_eq!(back, p);
    }

    #[test]
    fn pose_corrupt_magic_rejected() {
        let p = PoseSample::new(3, 9, Vector3::new(1.0, 2.0, 3.0), UnitQuaternion::identity());
        let mut bytes = encode_pose(&p);
        bytes[0] ^= 0xFF;
        assert!(matches!(decode_pose(&bytes), Err(TransportError::Magic { .. })));
        assert!(matches!(decode_pose(&bytes[..71]), Err(TransportError::Length { .. })));
    }

    #[test]
    fn pose_bad_quaternion_rejected() {
        let p = PoseSample::new(1, 1, Vector3::zeros(), UnitQuaternion::identity());
        let mut bytes = encode_pose(&p);
        // Overwrite quat w with 2.0.
        bytes[40..48].copy_from_slice(&2.0f64.to_le_bytes());
        assert!(matches!(decode_pose(&bytes), Err(TransportError::BadQuaternion(_))));
    }

    #[test]
    fn command_land_ignores_payload() {
        let c = Command::Land { timestamp_ns: 44 };
        let mut bytes = encode_command(&c);
        assert_eq!(bytes.len(), 43);
        assert_eq!(bytes[2], 2);
        // Scribble the payload; decode must not care.
        bytes[11..19].copy_from_slice(&f64::NAN.to_le_bytes());
        assert_eq!(decode_command(&bytes).unwrap(), c);
    }

    #[test]
    fn command_velocity_round_trips() {
        let c = Command::Velocity { v: Vector3::new(1.0, 0.0, 0.0), yaw_rate: 0.0, timestamp_ns: 5 };
        let bytes = encode_command(&c);
        assert_eq!(decode_command(&bytes).unwrap(), c);
    }

    #[test]
    fn command_unknown_kind_rejected() {
        let mut bytes = encode_command(&Command::Takeoff { timestamp_ns: 0 });
        bytes[2] = 9;
        assert!(matches!(decode_command(&bytes), Err(TransportError::UnknownKind(9))));
    }

    #[test]
    fn command_non_finite_velocity_rejected() {
        let mut bytes = encode_command(&Command::Velocity {
            v: Vector3::zeros(),
            yaw_rate: 0.0,
            timestamp_ns: 0,
        });
        bytes[11..19].copy_from_slice(&f64::INFINITY.to_le_bytes());
        assert!(matches!(decode_command(&bytes), Err(TransportError::NonFinite(_))));
    }

    #[test]
    fn fuzz_round_trip_poses_and_commands() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(99);
        for _ in 0..1000 {
            let axis = nalgebra::Unit::new_normalize(Vector3::new(
                rng.gen_range(-1.0..1.0f64),
                rng.gen_range(-1.0..1.0),
                rng.gen_range(-1.0..1.0),
            ));
            let p = PoseSample::new(
                rng.gen(),
                rng.gen(),
                Vector3::new(rng.gen_range(-100.0..100.0), rng.gen_range(-100.0..100.0), rng.gen_range(-100.0..100.0)),
                UnitQuaternion::from_axis_angle(&axis, rng.gen_range(-3.1..3.1)),
            );
            let bytes = encode_pose(&p);
            let back = decode_pose(&bytes).unwrap();
            assert_eq!(back, p);
            // Byte-exactness both ways.
            assert_eq!(encode_pose(&back), bytes);

            let c = match rng.gen_range(0..4) {
                0 => Command::Velocity {
                    v: Vector3::new(rng.gen_range(-10.0..10.0), rng.gen_range(-10.0..10.0), rng.gen_range(-10.0..10.0)),
                    yaw_rate: rng.gen_range(-5.0..5.0),
                    timestamp_ns: rng.gen(),
                },
                1 => Command::Position {
                    p: Vector3::new(rng.gen_range(-10.0..10.0), rng.gen_range(-10.0..10.0), rng.gen_range(-10.0..10.0)),
                    yaw: rng.gen_range(-3.1..3.1),
                    timestamp_ns: rng.gen(),
                },
                2 => Command::Land { timestamp_ns: rng.gen() },
                _ => Command::Takeoff { timestamp_ns: rng.gen() },
            };
            let bytes = encode_command(&c);
            let back = decode_command(&bytes).unwrap();
            assert_eq!(back, c);
            assert_eq!(encode_command(&back), bytes);
        }
    }
}
