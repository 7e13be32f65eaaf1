//! Viewer wire protocol: JSON messages tagged by `type`.
//!
//! Over WebSocket each message is one text frame, and the frame header
//! carries the length. For plain byte streams, [`write_framed`] and
//! [`read_framed`] prefix each message with its length as a big-endian u32.

use std::io::{self, Read, Write};

use base64::engine::general_purpose::STANDARD;
use base64::Engine;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::HeightField;
use crate::sim::BodyPose;

/// Largest accepted framed message (64 MiB).
pub const MAX_MESSAGE_BYTES: u32 = 64 << 20;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BodyMessage {
    pub id: u32,
    pub pos: [f64; 3],
    pub yaw: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameMessage {
    pub t: f64,
    pub res: [usize; 2],
    pub origin: [f64; 2],
    pub spacing: f64,
    /// Base64 of the row-major f32 grid, little-endian.
    pub heights: String,
    pub bodies: Vec<BodyMessage>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InputMessage {
    pub id: u32,
    pub thrust: f64,
    pub rudder: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum Message {
    Frame(FrameMessage),
    Input(InputMessage),
}

pub fn encode_grid(heights: &[f32]) -> String {
    let bytes: Vec<u8> = heights.iter().flat_map(|h| h.to_le_bytes()).collect();
    STANDARD.encode(bytes)
}

pub fn decode_grid(text: &str) -> Result<Vec<f32>> {
    let bytes = STANDARD
        .decode(text)
        .map_err(|e| Error::Protocol(format!("heights: {e}")))?;
    if bytes.len() % 4 != 0 {
        return Err(Error::Protocol("heights: length is not a multiple of 4".into()));
    }
    Ok(bytes
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
        .collect())
}

impl FrameMessage {
    pub fn new(t: f64, field: &HeightField, bodies: &[BodyPose]) -> Self {
        let heights: Vec<f32> = field.height.iter().map(|&h| h as f32).collect();
        Self {
            t,
            res: [field.nx, field.ny],
            origin: field.origin,
            spacing: field.spacing,
            heights: encode_grid(&heights),
            bodies: bodies
                .iter()
                .map(|b| BodyMessage {
                    id: b.id,
                    pos: b.position,
                    yaw: b.yaw,
                })
                .collect(),
        }
    }

    /// Decoded grid, checked against `res`.
    pub fn grid(&self) -> Result<Vec<f32>> {
        let g = decode_grid(&self.heights)?;
        if g.len() != self.res[0] * self.res[1] {
            return Err(Error::Protocol(format!(
                "heights: {} values for res {:?}",
                g.len(),
                self.res
            )));
        }
        Ok(g)
    }
}

impl InputMessage {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("thrust", self.thrust), ("rudder", self.rudder)] {
            if !(-1.0..=1.0).contains(&v) {
                return Err(Error::Protocol(format!("{name} = {v} is outside [-1, 1]")));
            }
        }
        Ok(())
    }
}

impl Message {
    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("messages always serialize")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Protocol(e.to_string()))
    }
}

/// Parses a client message, accepting only in-range input messages.
pub fn parse_input(text: &str) -> Result<InputMessage> {
    match Message::from_json(text)? {
        Message::Input(m) => {
            m.validate()?;
            Ok(m)
        }
        Message::Frame(_) => Err(Error::Protocol("clients may only send input messages".into())),
    }
}

pub fn write_framed<W: Write>(w: &mut W, message: &Message) -> Result<()> {
    let body = message.to_json();
    let len = u32::try_from(body.len())
        .ok()
        .filter(|&n| n <= MAX_MESSAGE_BYTES)
        .ok_or_else(|| Error::Protocol(format!("message of {} bytes is too large", body.len())))?;
    w.write_all(&len.to_be_bytes())?;
    w.write_all(body.as_bytes())?;
    Ok(())
}

/// Reads one framed message; `Ok(None)` on a clean end of stream.
pub fn read_framed<R: Read>(r: &mut R) -> Result<Option<Message>> {
    let mut len = [0u8; 4];
    match r.read_exact(&mut len) {
        Ok(()) => {}
        Err(e) if e.kind() == io::ErrorKind::UnexpectedEof => return Ok(None),
        Err(e) => return Err(e.into()),
    }
    let len = u32::from_be_bytes(len);
    if len > MAX_MESSAGE_BYTES {
        return Err(Error::Protocol(format!("declared length {len} is too large")));
    }
    let mut body = vec![0u8; len as usize];
    r.read_exact(&mut body)?;
    let text = String::from_utf8(body).map_err(|e| Error::Protocol(e.to_string()))?;
    Message::from_json(&text).map(Some)
}
