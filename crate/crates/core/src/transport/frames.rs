//! Ordered, lossless-per-connection TCP frame streaming with server-side
//! latest-wins dropping.
//!
//! A client opens the connection with a length-prefixed JSON sensor-config
//! document, then receives frames: a fixed header followed by the RGB bytes
//! and optional f32 depth bytes. A server that renders faster than a client
//! reads skips intermediate frames; it never queues unboundedly and never
//! sends a torn frame.

use std::io::{Read, Write};
use std::net::TcpStream;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::{Arc, Condvar, Mutex};
use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::render::FrameRgbd;

use super::TransportError;

pub const FRAME_MAGIC: u16 = 0x4652;
pub const ERROR_MAGIC: u16 = 0x4545;
/// magic u16 + seq u32 + timestamp u64 + width u16 + height u16 + flags u8 +
/// reserved u8 + rgb_len u32 + depth_len u32.
pub const FRAME_HEADER_LEN: usize = 28;

const FLAG_DEPTH_PRESENT: u8 = 1;
const MAX_CONFIG_LEN: u32 = 1 << 20;

/// Sensor definition a client sends when subscribing: the full camera model
/// plus the body-to-camera extrinsic as a row-major 4x4 matrix.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct SensorConfigDoc {
    pub sensor_id: String,
    pub width: u32,
    pub height: u32,
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    /// Row-major 4x4 rigid transform body -> camera.
    pub extrinsic: [f64; 16],
    /// Request the depth plane in every frame.
    pub depth: bool,
}

impl SensorConfigDoc {
    pub fn identity_extrinsic() -> [f64; 16] {
        let mut m = [0.0; 16];
        for i in 0..4 {
            m[i * 4 + i] = 1.0;
        }
        m
    }
}

/// A frame as it appears on the wire.
#[derive(Debug, Clone, PartialEq)]
pub struct WireFrame {
    pub seq: u32,
    pub timestamp_ns: u64,
    pub width: u16,
    pub height: u16,
    pub rgb: Vec<u8>,
    pub depth: Option<Vec<f32>>,
}

/// Either a frame or a server-reported error terminating the stream.
#[derive(Debug)]
pub enum StreamMessage {
    Frame(WireFrame),
    Error(String),
}

/// Serialize one frame, optionally with the depth plane.
pub fn encode_frame(frame: &FrameRgbd, include_depth: bool) -> Vec<u8> {
    debug_assert!(frame.width <= u16::MAX as u32 && frame.height <= u16::MAX as u32);
    let rgb_len = frame.rgb.len() as u32;
    let depth_len = if include_depth { (frame.depth.len() * 4) as u32 } else { 0 };
    let mut buf = Vec::with_capacity(FRAME_HEADER_LEN + (rgb_len + depth_len) as usize);
    buf.extend_from_slice(&FRAME_MAGIC.to_le_bytes());
    buf.extend_from_slice(&frame.seq.to_le_bytes());
    buf.extend_from_slice(&frame.timestamp_ns.to_le_bytes());
    buf.extend_from_slice(&(frame.width as u16).to_le_bytes());
    buf.extend_from_slice(&(frame.height as u16).to_le_bytes());
    buf.push(if include_depth { FLAG_DEPTH_PRESENT } else { 0 });
    buf.push(0); // reserved
    buf.extend_from_slice(&rgb_len.to_le_bytes());
    buf.extend_from_slice(&depth_len.to_le_bytes());
    buf.extend_from_slice(&frame.rgb);
    if include_depth {
        for d in &frame.depth {
            buf.extend_from_slice(&d.to_le_bytes());
        }
    }
    buf
}

/// Send the error frame (magic 0x4545 + length-prefixed message).
pub fn write_error_frame<W: Write>(mut w: W, msg: &str) -> std::io::Result<()> {
    w.write_all(&ERROR_MAGIC.to_le_bytes())?;
    w.write_all(&(msg.len() as u32).to_le_bytes())?;
    w.write_all(msg.as_bytes())?;
    w.flush()
}

/// Read the client's length-prefixed sensor-config document.
pub fn read_sensor_config<R: Read>(mut r: R) -> Result<SensorConfigDoc, TransportError> {
    let mut len_buf = [0u8; 4];
    r.read_exact(&mut len_buf)?;
    let len = u32::from_le_bytes(len_buf);
    if len == 0 || len > MAX_CONFIG_LEN {
        return Err(TransportError::BadConfig(format!("config length {len} out of range")));
    }
    let mut body = vec![0u8; len as usize];
    r.read_exact(&mut body)?;
    serde_json::from_slice(&body).map_err(|e| TransportError::BadConfig(e.to_string()))
}

/// Write a length-prefixed sensor-config document.
pub fn write_sensor_config<W: Write>(mut w: W, config: &SensorConfigDoc) -> Result<(), TransportError> {
    let body = serde_json::to_vec(config).map_err(|e| TransportError::BadConfig(e.to_string()))?;
    w.write_all(&(body.len() as u32).to_le_bytes())?;
    w.write_all(&body)?;
    w.flush()?;
    Ok(())
}

/// Single-slot latest-frame cell shared between the render loop and one or
/// more connection writers.
#[derive(Debug, Default)]
pub struct FrameSlot {
    latest: Mutex<Option<Arc<FrameRgbd>>>,
    cv: Condvar,
}

impl FrameSlot {
    pub fn new() -> Self {
        Self::default()
    }

    /// Replace the slot; wakes every waiting writer.
    pub fn publish(&self, frame: Arc<FrameRgbd>) {
        let mut slot = self.latest.lock().unwrap();
        *slot = Some(frame);
        self.cv.notify_all();
    }

    pub fn latest(&self) -> Option<Arc<FrameRgbd>> {
        self.latest.lock().unwrap().clone()
    }

    /// Wait until the slot holds a frame with `seq` different from
    /// `last_seq`, or until timeout.
    pub fn wait_newer(&self, last_seq: Option<u32>, timeout: Duration) -> Option<Arc<FrameRgbd>> {
        let deadline = std::time::Instant::now() + timeout;
        let mut slot = self.latest.lock().unwrap();
        loop {
            if let Some(f) = slot.as_ref() {
                if last_seq != Some(f.seq) {
                    return Some(f.clone());
                }
            }
            let now = std::time::Instant::now();
            if now >= deadline {
                return None;
            }
            let (guard, _res) = self.cv.wait_timeout(slot, deadline - now).unwrap();
            slot = guard;
        }
    }
}

/// Stream frames from `slot` to one client until the connection drops or
/// `stop` is set. Frames published while a write is in flight are replaced
/// in the slot, so a slow reader skips to the newest frame (latest-wins) and
/// each delivered frame is always complete.
pub fn serve_connection(
    mut stream: TcpStream,
    slot: Arc<FrameSlot>,
    include_depth: bool,
    stop: Arc<AtomicBool>,
) -> Result<(), TransportError> {
    let mut last_seq: Option<u32> = None;
    while !stop.load(Ordering::Relaxed) {
        let Some(frame) = slot.wait_newer(last_seq, Duration::from_millis(50)) else {
            continue;
        };
        last_seq = Some(frame.seq);
        let buf = encode_frame(&frame, include_depth);
        stream.write_all(&buf)?;
    }
    Ok(())
}

/// Client side of the frame stream.
pub struct FrameStreamReader {
    stream: TcpStream,
}

impl FrameStreamReader {
    /// Connect and subscribe with the given sensor config.
    pub fn connect(addr: impl std::net::ToSocketAddrs, config: &SensorConfigDoc) -> Result<Self, TransportError> {
        let mut stream = TcpStream::connect(addr)?;
        stream.set_nodelay(true).ok();
        write_sensor_config(&mut stream, config)?;
        Ok(Self { stream })
    }

    pub fn from_stream(stream: TcpStream) -> Self {
        Self { stream }
    }

    /// Read the next message. A server-reported error or EOF ends the
    /// stream with `Err`.
    pub fn next_frame(&mut self) -> Result<WireFrame, TransportError> {
        match read_error_or_frame(&mut self.stream)? {
            StreamMessage::Frame(f) => Ok(f),
            StreamMessage::Error(msg) => Err(TransportError::Remote(msg)),
        }
    }
}

/// Parse one stream message from a reader.
pub fn read_error_or_frame<R: Read>(mut r: R) -> Result<StreamMessage, TransportError> {
    let mut magic_buf = [0u8; 2];
    if let Err(e) = r.read_exact(&mut magic_buf) {
        return if e.kind() == std::io::ErrorKind::UnexpectedEof {
            Err(TransportError::Closed)
        } else {
            Err(e.into())
        };
    }
    let magic = u16::from_le_bytes(magic_buf);
    if magic == ERROR_MAGIC {
        let mut len_buf = [0u8; 4];
        r.read_exact(&mut len_buf)?;
        let len = u32::from_le_bytes(len_buf).min(MAX_CONFIG_LEN);
        let mut msg = vec![0u8; len as usize];
        r.read_exact(&mut msg)?;
        return Ok(StreamMessage::Error(String::from_utf8_lossy(&msg).into_owned()));
    }
    if magic != FRAME_MAGIC {
        return Err(TransportError::Magic { got: magic, expected: FRAME_MAGIC });
    }
    let mut rest = [0u8; FRAME_HEADER_LEN - 2];
    r.read_exact(&mut rest)?;
    let seq = u32::from_le_bytes(rest[0..4].try_into().unwrap());
    let timestamp_ns = u64::from_le_bytes(rest[4..12].try_into().unwrap());
    let width = u16::from_le_bytes(rest[12..14].try_into().unwrap());
    let height = u16::from_le_bytes(rest[14..16].try_into().unwrap());
    let flags = rest[16];
    let rgb_len = u32::from_le_bytes(rest[18..22].try_into().unwrap()) as usize;
    let depth_len = u32::from_le_bytes(rest[22..26].try_into().unwrap()) as usize;

    let mut rgb = vec![0u8; rgb_len];
    r.read_exact(&mut rgb)?;
    let depth = if flags & FLAG_DEPTH_PRESENT != 0 {
        let mut raw = vec![0u8; depth_len];
        r.read_exact(&mut raw)?;
        Some(raw.chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().unwrap())).collect())
    } else {
        let mut raw = vec![0u8; depth_len];
        r.read_exact(&mut raw)?;
        None
    };
    Ok(StreamMessage::Frame(WireFrame { seq, timestamp_ns, width, height, rgb, depth }))
}
