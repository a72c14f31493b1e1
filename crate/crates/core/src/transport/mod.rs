//! Wire protocols and live plumbing: pose datagrams in, frame streams out,
//! command datagrams, and update-rate measurement.
//!
//! All multi-byte integers are little-endian. Default ports: pose 5155/udp,
//! frames 5156/tcp, commands 5157/udp.

mod codec;
mod frames;
mod pose_cell;
mod rate;

pub use codec::{
    decode_command, decode_pose, encode_command, encode_pose, Command, PoseSample,
    COMMAND_DATAGRAM_LEN, COMMAND_MAGIC, POSE_DATAGRAM_LEN, POSE_MAGIC,
};
pub use frames::{
    encode_frame, read_error_or_frame, read_sensor_config, serve_connection, write_error_frame,
    write_sensor_config, FrameSlot, FrameStreamReader, SensorConfigDoc, StreamMessage, WireFrame,
    ERROR_MAGIC, FRAME_HEADER_LEN, FRAME_MAGIC,
};
pub use pose_cell::{spawn_pose_ingest, PoseCell, PoseCellStats};
pub use rate::{measure_rate, RateStats};

use thiserror::Error;

/// Default UDP port for pose datagrams.
pub const DEFAULT_POSE_PORT: u16 = 5155;
/// Default TCP port for the frame stream.
pub const DEFAULT_FRAME_PORT: u16 = 5156;
/// Default UDP port for command datagrams.
pub const DEFAULT_COMMAND_PORT: u16 = 5157;

#[derive(Debug, Error)]
pub enum TransportError {
    #[error("wrong length: got {got} bytes, expected {expected}")]
    Length { got: usize, expected: usize },
    #[error("bad magic 0x{got:04X}, expected 0x{expected:04X}")]
    Magic { got: u16, expected: u16 },
    #[error("unsupported protocol version {0}")]
    Version(u8),
    #[error("unknown command kind {0}")]
    UnknownKind(u8),
    #[error("non-finite value in field {0}")]
    NonFinite(&'static str),
    #[error("quaternion norm {0} out of tolerance")]
    BadQuaternion(f64),
    #[error("peer closed the stream")]
    Closed,
    #[error("peer reported error: {0}")]
    Remote(String),
    #[error("invalid sensor config: {0}")]
    BadConfig(String),
    #[error("need at least 2 events to measure a rate, got {0}")]
    UndefinedRate(usize),
    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),
}
