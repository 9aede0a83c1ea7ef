//! The model owner's service. It answers hello, encode, and head requests
//! over TCP and transmits nothing beyond: session metadata, context
//! representations, next-token log-probabilities, predicted tokens, the LM
//! head, and error replies. That boundary is structural — the response
//! type has no other variants — and the per-kind counters let tests assert
//! it.

use std::io::BufReader;
use std::net::{SocketAddr, TcpListener, TcpStream};
use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};
use std::sync::Arc;
use std::thread::JoinHandle;

use crate::checksum::checksum_f32;
use crate::error::{Error, Result};
use crate::plm::PlmWeights;
use crate::protocol::wire::{
    read_frame_bytes, write_frame, Request, Response, PROTOCOL_VERSION,
};

/// Counters of responses sent, by kind.
#[derive(Debug, Default)]
pub struct ServerStats {
    pub hello: AtomicU64,
    pub encode: AtomicU64,
    pub head: AtomicU64,
    pub error: AtomicU64,
}

impl ServerStats {
    pub fn snapshot(&self) -> (u64, u64, u64, u64) {
        (
            self.hello.load(Ordering::Relaxed),
            self.encode.load(Ordering::Relaxed),
            self.head.load(Ordering::Relaxed),
            self.error.load(Ordering::Relaxed),
        )
    }
}

/// A running service; dropping it (or calling [`ProtocolServer::stop`])
/// shuts the listener down.
pub struct ProtocolServer {
    addr: SocketAddr,
    stop: Arc<AtomicBool>,
    stats: Arc<ServerStats>,
    handle: Option<JoinHandle<()>>,
}

impl ProtocolServer {
    pub fn addr(&self) -> SocketAddr {
        self.addr
    }

    pub fn stats(&self) -> Arc<ServerStats> {
        Arc::clone(&self.stats)
    }

    pub fn stop(&mut self) {
        self.stop.store(true, Ordering::SeqCst);
        // unblock the accept loop
        let _ = TcpStream::connect(self.addr);
        if let Some(handle) = self.handle.take() {
            let _ = handle.join();
        }
    }
}

impl Drop for ProtocolServer {
    fn drop(&mut self) {
        self.stop();
    }
}

/// Serve a frozen model on `bind` (e.g. "127.0.0.1:7478"; port 0 picks a
/// free port). Connections are handled on their own threads, requests
/// sequentially within each connection.
pub fn serve(plm: Arc<PlmWeights>, bind: &str) -> Result<ProtocolServer> {
    if !plm.is_frozen() {
        return Err(Error::Contract("serving requires frozen weights".into()));
    }
    let listener = TcpListener::bind(bind)
        .map_err(|e| Error::Transport(format!("cannot bind {bind}: {e}")))?;
    let addr = listener
        .local_addr()
        .map_err(|e| Error::Transport(format!("no local address: {e}")))?;
    let stop = Arc::new(AtomicBool::new(false));
    let stats = Arc::new(ServerStats::default());

    let accept_stop = Arc::clone(&stop);
    let accept_stats = Arc::clone(&stats);
    let handle = std::thread::spawn(move || {
        for stream in listener.incoming() {
            if accept_stop.load(Ordering::SeqCst) {
                break;
            }
            match stream {
                Ok(stream) => {
                    let plm = Arc::clone(&plm);
                    let stats = Arc::clone(&accept_stats);
                    std::thread::spawn(move || {
                        let _ = handle_connection(stream, &plm, &stats);
                    });
                }
                Err(_) => continue,
            }
        }
    });

    Ok(ProtocolServer {
        addr,
        stop,
        stats,
        handle: Some(handle),
    })
}

fn head_checksum(plm: &PlmWeights) -> String {
    checksum_f32(plm.head().as_slice())
}

fn handle_connection(stream: TcpStream, plm: &PlmWeights, stats: &ServerStats) -> Result<()> {
    let mut writer = stream
        .try_clone()
        .map_err(|e| Error::Transport(format!("cannot clone stream: {e}")))?;
    let mut reader = BufReader::new(stream);
    loop {
        let payload = match read_frame_bytes(&mut reader) {
            Ok(Some(p)) => p,
            Ok(None) => return Ok(()), // clean close
            Err(Error::Protocol(message)) => {
                // oversized frame: answer and drop the connection
                stats.error.fetch_add(1, Ordering::Relaxed);
                let _ = write_frame(&mut writer, &Response::Error { message });
                return Ok(());
            }
            Err(e) => return Err(e),
        };
        let response = match serde_json::from_slice::<Request>(&payload) {
            Ok(request) => answer(plm, request),
            Err(e) => Response::Error {
                message: format!("unsupported or malformed request: {e}"),
            },
        };
        match &response {
            Response::Hello { .. } => stats.hello.fetch_add(1, Ordering::Relaxed),
            Response::Encode { .. } => stats.encode.fetch_add(1, Ordering::Relaxed),
            Response::Head { .. } => stats.head.fetch_add(1, Ordering::Relaxed),
            Response::Error { .. } => stats.error.fetch_add(1, Ordering::Relaxed),
        };
        write_frame(&mut writer, &response)?;
    }
}

fn answer(plm: &PlmWeights, request: Request) -> Response {
    match request {
        Request::Hello { version } => {
            if version != PROTOCOL_VERSION {
                return Response::Error {
                    message: format!(
                        "unsupported protocol version {version}, expected {PROTOCOL_VERSION}"
                    ),
                };
            }
            Response::Hello {
                version: PROTOCOL_VERSION,
                d: plm.d() as u32,
                v: plm.v() as u32,
                head_checksum: head_checksum(plm),
            }
        }
        Request::Encode {
            tokens,
            top_logprobs,
        } => match encode_reply(plm, &tokens, top_logprobs) {
            Ok(r) => r,
            Err(e) => Response::Error {
                message: e.to_string(),
            },
        },
        Request::Head => {
            let head = plm.head();
            Response::Head {
                rows: head.rows() as u32,
                cols: head.cols() as u32,
                data: crate::protocol::wire::encode_f32(head.as_slice()),
                checksum: head_checksum(plm),
            }
        }
    }
}

fn encode_reply(plm: &PlmWeights, tokens: &[u32], top: Option<usize>) -> Result<Response> {
    let encoded = plm.encode(tokens)?;
    let logs: Vec<f64> = encoded.dist.iter().map(|p| p.ln()).collect();
    let (logprobs, top_logprobs) = match top {
        None => (Some(crate::protocol::wire::encode_f32(&logs)), None),
        Some(k) => {
            let mut idx: Vec<usize> = (0..logs.len()).collect();
            idx.sort_by(|&a, &b| logs[b].total_cmp(&logs[a]).then(a.cmp(&b)));
            let pairs: Vec<(u32, f32)> = idx
                .into_iter()
                .take(k)
                .map(|i| (i as u32, logs[i] as f32))
                .collect();
            (None, Some(pairs))
        }
    };
    Ok(Response::Encode {
        repr: crate::protocol::wire::encode_f32(&encoded.repr),
        logprobs,
        top_logprobs,
        predicted: encoded.predicted,
    })
}
