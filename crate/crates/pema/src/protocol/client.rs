//! The data owner's client: opens a session, requests context encodings
//! and the LM head, and can build a complete external memory without ever
//! holding any other model weight.

use std::io::BufReader;
use std::net::TcpStream;

use crate::checksum::checksum_f32;
use crate::corpus::{assemble_prompt, ParallelPair, PromptTemplate, Vocab};
use crate::error::{Error, Result};
use crate::memory::{ContextRecord, ExternalMemory, MemoryMode};
use crate::numerics::Matrix;
use crate::protocol::wire::{
    decode_f32, read_frame, write_frame, Request, Response, PROTOCOL_VERSION,
};

/// Negotiated session parameters and request counters.
#[derive(Debug, Clone)]
pub struct SessionInfo {
    pub d: u32,
    pub v: u32,
    pub head_checksum: String,
    pub encode_requests: u64,
    pub head_requests: u64,
}

/// One remote encode result, at wire (f32) precision.
#[derive(Debug, Clone)]
pub struct RemoteEncoded {
    pub repr: Vec<f32>,
    /// Log-probabilities over the vocabulary (empty in top-k mode).
    pub logprobs: Vec<f32>,
    pub predicted: u32,
}

pub struct Client {
    reader: BufReader<TcpStream>,
    writer: TcpStream,
    session: SessionInfo,
}

impl Client {
    /// Connect and perform the hello exchange.
    pub fn connect(addr: &str) -> Result<Client> {
        let stream = TcpStream::connect(addr)
            .map_err(|e| Error::Transport(format!("cannot connect to {addr}: {e}")))?;
        let writer = stream
            .try_clone()
            .map_err(|e| Error::Transport(format!("cannot clone stream: {e}")))?;
        let mut client = Client {
            reader: BufReader::new(stream),
            writer,
            session: SessionInfo {
                d: 0,
                v: 0,
                head_checksum: String::new(),
                encode_requests: 0,
                head_requests: 0,
            },
        };
        let response = client.roundtrip(&Request::Hello {
            version: PROTOCOL_VERSION,
        })?;
        match response {
            Response::Hello {
                version,
                d,
                v,
                head_checksum,
            } => {
                if version != PROTOCOL_VERSION {
                    return Err(Error::Protocol(format!(
                        "server speaks version {version}, expected {PROTOCOL_VERSION}"
                    )));
                }
                client.session.d = d;
                client.session.v = v;
                client.session.head_checksum = head_checksum;
                Ok(client)
            }
            Response::Error { message } => Err(Error::Protocol(message)),
            other => Err(Error::Protocol(format!(
                "unexpected reply to hello: {other:?}"
            ))),
        }
    }

    pub fn session(&self) -> &SessionInfo {
        &self.session
    }

    fn roundtrip(&mut self, request: &Request) -> Result<Response> {
        write_frame(&mut self.writer, request)?;
        match read_frame::<_, Response>(&mut self.reader)? {
            Some(r) => Ok(r),
            None => Err(Error::Transport("connection closed mid-session".into())),
        }
    }

    /// Remote counterpart of local encoding, at f32 wire precision.
    pub fn remote_encode(&mut self, tokens: &[u32]) -> Result<RemoteEncoded> {
        self.remote_encode_opt(tokens, None)
    }

    /// Remote encoding with optional top-k log-probabilities.
    pub fn remote_encode_opt(
        &mut self,
        tokens: &[u32],
        top_logprobs: Option<usize>,
    ) -> Result<RemoteEncoded> {
        self.session.encode_requests += 1;
        let response = self.roundtrip(&Request::Encode {
            tokens: tokens.to_vec(),
            top_logprobs,
        })?;
        match response {
            Response::Encode {
                repr,
                logprobs,
                top_logprobs,
                predicted,
            } => {
                let repr = decode_f32(&repr)?;
                if repr.len() != self.session.d as usize {
                    return Err(Error::Protocol(format!(
                        "representation of length {} does not match session d={}",
                        repr.len(),
                        self.session.d
                    )));
                }
                let logprobs = match (logprobs, top_logprobs) {
                    (Some(block), _) => decode_f32(&block)?,
                    (None, Some(pairs)) => {
                        // sparse form: keep only what the server sent
                        let mut out = vec![f32::NEG_INFINITY; self.session.v as usize];
                        for (id, lp) in pairs {
                            if (id as usize) < out.len() {
                                out[id as usize] = lp;
                            }
                        }
                        out
                    }
                    (None, None) => Vec::new(),
                };
                Ok(RemoteEncoded {
                    repr,
                    logprobs,
                    predicted,
                })
            }
            Response::Error { message } => Err(Error::Protocol(message)),
            other => Err(Error::Protocol(format!(
                "unexpected reply to encode: {other:?}"
            ))),
        }
    }

    /// Fetch W_hd and verify it against the hello checksum.
    pub fn fetch_head(&mut self) -> Result<Matrix> {
        self.session.head_requests += 1;
        let response = self.roundtrip(&Request::Head)?;
        match response {
            Response::Head {
                rows,
                cols,
                data,
                checksum,
            } => {
                let values = decode_f32(&data)?;
                if values.len() != (rows * cols) as usize {
                    return Err(Error::Protocol(format!(
                        "head payload of {} values for a {rows}x{cols} matrix",
                        values.len()
                    )));
                }
                let upcast: Vec<f64> = values.iter().map(|&x| x as f64).collect();
                let recomputed = checksum_f32(&upcast);
                if recomputed != checksum || recomputed != self.session.head_checksum {
                    return Err(Error::Integrity(format!(
                        "head checksum mismatch: hello {}, reply {checksum}, payload {recomputed}",
                        self.session.head_checksum
                    )));
                }
                Matrix::from_vec(rows as usize, cols as usize, upcast)
            }
            Response::Error { message } => Err(Error::Protocol(message)),
            other => Err(Error::Protocol(format!(
                "unexpected reply to head: {other:?}"
            ))),
        }
    }
}

/// Build an external memory across the wire: the same iterative loop as
/// the local builder, but every encoding comes from the remote model. With
/// the same frozen model and pairs, the resulting file is byte-identical
/// to a local build, because the wire already carries f32 — the storage
/// precision.
pub fn remote_build_memory(
    client: &mut Client,
    template: &PromptTemplate,
    pairs: &[ParallelPair],
    vocab: &Vocab,
    mode: MemoryMode,
) -> Result<ExternalMemory> {
    if pairs.is_empty() {
        return Err(Error::Input("cannot build a memory from zero pairs".into()));
    }
    let mut records = Vec::new();
    let mut last_completed: Option<u32> = None;
    for pair in pairs {
        if pair.target.is_empty() {
            log::warn!("skipping pair {}: empty target", pair.id);
            continue;
        }
        let mut context = assemble_prompt(template, &pair.source, vocab)?.tokens;
        for (i, &gold) in pair.target.iter().enumerate() {
            let encoded = match client.remote_encode(&context) {
                Ok(e) => e,
                Err(e) => {
                    return Err(Error::PartialBuild {
                        last_completed,
                        message: format!("pair {} failed at position {}: {e}", pair.id, i + 1),
                    })
                }
            };
            records.push(ContextRecord {
                representation: encoded.repr,
                target: gold,
                sentence_id: pair.id,
                position: (i + 1) as u16,
                sentence_len: pair.target.len() as u16,
            });
            let next = match mode {
                MemoryMode::Predicted => encoded.predicted,
                MemoryMode::Teacher => gold,
            };
            context.push(next);
        }
        last_completed = Some(pair.id);
    }
    Ok(ExternalMemory {
        d: client.session().d,
        v: client.session().v,
        mode,
        records,
    })
}
