//! Wire format: 4-byte big-endian length prefix, then a UTF-8 JSON
//! payload. Representation and probability vectors travel as base64 of
//! little-endian f32, so the wire carries exactly the storage precision.

use std::io::{Read, Write};

use base64::engine::general_purpose::STANDARD as BASE64;
use base64::Engine;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Frames above this size are refused and the connection closed.
pub const MAX_FRAME: usize = 1 << 20;

pub const PROTOCOL_VERSION: u32 = 1;

/// Client-to-server messages.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Request {
    /// Session opening; the reply carries the model's dimensions and the
    /// head checksum.
    Hello { version: u32 },
    /// Encode a token context. `top_logprobs` limits the returned
    /// log-probabilities to the k best (full distribution when absent).
    Encode {
        tokens: Vec<u32>,
        #[serde(skip_serializing_if = "Option::is_none")]
        top_logprobs: Option<usize>,
    },
    /// Fetch the LM head matrix.
    Head,
}

/// Server-to-client messages. This enum is the entire surface the server
/// can ever transmit: session metadata, representations, log-probabilities,
/// predicted tokens, the head, and errors.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Response {
    Hello {
        version: u32,
        d: u32,
        v: u32,
        head_checksum: String,
    },
    Encode {
        /// f(c) as base64 little-endian f32.
        repr: String,
        /// Log-probabilities over the vocabulary, base64 little-endian f32;
        /// absent in top-k mode.
        #[serde(skip_serializing_if = "Option::is_none")]
        logprobs: Option<String>,
        /// (token id, log-probability) pairs, present in top-k mode.
        #[serde(skip_serializing_if = "Option::is_none")]
        top_logprobs: Option<Vec<(u32, f32)>>,
        predicted: u32,
    },
    Head {
        rows: u32,
        cols: u32,
        /// Row-major base64 little-endian f32.
        data: String,
        checksum: String,
    },
    Error {
        message: String,
    },
}

pub fn encode_f32(values: &[f64]) -> String {
    let mut bytes = Vec::with_capacity(values.len() * 4);
    for &v in values {
        bytes.extend_from_slice(&(v as f32).to_le_bytes());
    }
    BASE64.encode(bytes)
}

pub fn decode_f32(data: &str) -> Result<Vec<f32>> {
    let bytes = BASE64
        .decode(data)
        .map_err(|e| Error::Protocol(format!("bad base64 payload: {e}")))?;
    if bytes.len() % 4 != 0 {
        return Err(Error::Protocol(format!(
            "f32 payload length {} is not a multiple of 4",
            bytes.len()
        )));
    }
    Ok(bytes
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
        .collect())
}

/// Write one length-prefixed frame.
pub fn write_frame<W: Write, T: Serialize>(writer: &mut W, message: &T) -> Result<()> {
    let payload = serde_json::to_vec(message)
        .map_err(|e| Error::Protocol(format!("cannot serialize message: {e}")))?;
    if payload.len() > MAX_FRAME {
        return Err(Error::Protocol(format!(
            "frame of {} bytes exceeds the {MAX_FRAME}-byte limit",
            payload.len()
        )));
    }
    writer
        .write_all(&(payload.len() as u32).to_be_bytes())
        .and_then(|_| writer.write_all(&payload))
        .and_then(|_| writer.flush())
        .map_err(|e| Error::Transport(format!("write failed: {e}")))?;
    Ok(())
}

/// Read one frame's raw payload. `Ok(None)` signals a cleanly closed
/// connection at a frame boundary.
pub fn read_frame_bytes<R: Read>(reader: &mut R) -> Result<Option<Vec<u8>>> {
    let mut len_buf = [0u8; 4];
    match reader.read_exact(&mut len_buf) {
        Ok(()) => {}
        Err(e) if e.kind() == std::io::ErrorKind::UnexpectedEof => return Ok(None),
        Err(e) => return Err(Error::Transport(format!("read failed: {e}"))),
    }
    let len = u32::from_be_bytes(len_buf) as usize;
    if len > MAX_FRAME {
        return Err(Error::Protocol(format!(
            "declared frame of {len} bytes exceeds the {MAX_FRAME}-byte limit"
        )));
    }
    let mut payload = vec![0u8; len];
    reader
        .read_exact(&mut payload)
        .map_err(|e| Error::Transport(format!("read failed mid-frame: {e}")))?;
    Ok(Some(payload))
}

/// Read and parse one frame.
pub fn read_frame<R: Read, T: for<'de> Deserialize<'de>>(reader: &mut R) -> Result<Option<T>> {
    match read_frame_bytes(reader)? {
        None => Ok(None),
        Some(payload) => {
            let parsed = serde_json::from_slice(&payload)
                .map_err(|e| Error::Protocol(format!("malformed frame: {e}")))?;
            Ok(Some(parsed))
        }
    }
}
