//! Party servers and the verifier-side client.
//!
//! Frames are fixed-size over a byte stream. A CONSTRUCT request is
//! `"ESEM" | 0x01 | 0x01 | key_id (16) | x (16)`, 38 bytes. The answer is
//! `"ESEM" | 0x01 | status` followed by the 32-byte point when the status is
//! OK. PROVISION (`opcode 0x02`) carries a 4-byte big-endian length and a
//! share file, and is answered with a bare status frame.
//!
//! The transport is plaintext; deployments must run it over a secure
//! channel.

use std::collections::HashMap;
use std::fs;
use std::io::{self, Read, Write};
use std::net::{Shutdown, SocketAddr, TcpListener, TcpStream, ToSocketAddrs};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::{Arc, Mutex, RwLock};
use std::thread::{self, JoinHandle};
use std::time::Duration;

use log::{debug, info, warn};

use crate::error::{Error, Result};
use crate::group::{GroupElement, OpCounter, POINT_LEN};
use crate::kdf::{CommitmentTag, KAPPA_BYTES};
use crate::keystore::write_atomic;
use crate::scheme::CommitmentSource;
use crate::snod::{party_construct, receiver_aggregate, KeyId, PartyShare};

pub const MAGIC: [u8; 4] = *b"ESEM";
pub const VERSION: u8 = 0x01;
pub const OP_CONSTRUCT: u8 = 0x01;
pub const OP_PROVISION: u8 = 0x02;

pub const HEADER_LEN: usize = 6;
pub const REQUEST_LEN: usize = HEADER_LEN + 2 * KAPPA_BYTES;
pub const OK_RESPONSE_LEN: usize = HEADER_LEN + POINT_LEN;
pub const STATUS_RESPONSE_LEN: usize = HEADER_LEN;

/// Upper bound on a PROVISION body (64 MiB, a share with `n` near `2^21`).
pub const MAX_PROVISION_LEN: usize = 64 << 20;

pub const DEFAULT_TIMEOUT: Duration = Duration::from_secs(5);
pub const DEFAULT_RETRIES: u32 = 1;

/// Server-side idle limit on a connection.
const SERVER_READ_TIMEOUT: Duration = Duration::from_secs(30);

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
#[repr(u8)]
pub enum Status {
    Ok = 0x00,
    UnknownKey = 0x01,
    BadRequest = 0x02,
}

impl Status {
    pub fn from_u8(b: u8) -> Result<Self> {
        match b {
            0x00 => Ok(Status::Ok),
            0x01 => Ok(Status::UnknownKey),
            0x02 => Ok(Status::BadRequest),
            other => Err(Error::Format(format!("unknown status {other:#04x}"))),
        }
    }
}

fn header(byte: u8) -> [u8; HEADER_LEN] {
    [MAGIC[0], MAGIC[1], MAGIC[2], MAGIC[3], VERSION, byte]
}

fn check_prefix(bytes: &[u8]) -> Result<()> {
    if bytes[..4] != MAGIC {
        return Err(Error::Format("bad magic".into()));
    }
    if bytes[4] != VERSION {
        return Err(Error::Format(format!("unsupported version {:#04x}", bytes[4])));
    }
    Ok(())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct CommitmentRequest {
    pub key_id: KeyId,
    pub x: CommitmentTag,
}

impl CommitmentRequest {
    pub fn encode(&self) -> [u8; REQUEST_LEN] {
        let mut out = [0u8; REQUEST_LEN];
        out[..HEADER_LEN].copy_from_slice(&header(OP_CONSTRUCT));
        out[HEADER_LEN..HEADER_LEN + KAPPA_BYTES].copy_from_slice(&self.key_id.0);
        out[HEADER_LEN + KAPPA_BYTES..].copy_from_slice(&self.x.0);
        out
    }

    pub fn decode(bytes: &[u8]) -> Result<Self> {
        if bytes.len() != REQUEST_LEN {
            return Err(Error::Length {
                what: "request",
                expected: REQUEST_LEN,
                got: bytes.len(),
            });
        }
        check_prefix(bytes)?;
        if bytes[5] != OP_CONSTRUCT {
            return Err(Error::Format(format!("unexpected opcode {:#04x}", bytes[5])));
        }
        Ok(CommitmentRequest {
            key_id: KeyId(bytes[HEADER_LEN..HEADER_LEN + KAPPA_BYTES].try_into().unwrap()),
            x: CommitmentTag(bytes[HEADER_LEN + KAPPA_BYTES..].try_into().unwrap()),
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CommitmentResponse {
    Ok(GroupElement),
    Error(Status),
}

impl CommitmentResponse {
    pub fn encode(&self) -> Vec<u8> {
        match self {
            CommitmentResponse::Ok(p) => {
                let mut out = header(Status::Ok as u8).to_vec();
                out.extend_from_slice(&p.to_bytes());
                out
            }
            CommitmentResponse::Error(s) => header(*s as u8).to_vec(),
        }
    }

    pub fn decode(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < HEADER_LEN {
            return Err(Error::Length {
                what: "response",
                expected: HEADER_LEN,
                got: bytes.len(),
            });
        }
        check_prefix(bytes)?;
        let status = Status::from_u8(bytes[5])?;
        let expected = if status == Status::Ok {
            OK_RESPONSE_LEN
        } else {
            STATUS_RESPONSE_LEN
        };
        if bytes.len() != expected {
            return Err(Error::Length {
                what: "response",
                expected,
                got: bytes.len(),
            });
        }
        Ok(match status {
            Status::Ok => CommitmentResponse::Ok(GroupElement::from_bytes(&bytes[HEADER_LEN..])?),
            s => CommitmentResponse::Error(s),
        })
    }
}

/// Decodes the 6-byte status frame that acknowledges a PROVISION.
pub fn decode_ack(bytes: &[u8]) -> Result<Status> {
    if bytes.len() != STATUS_RESPONSE_LEN {
        return Err(Error::Length {
            what: "acknowledgement",
            expected: STATUS_RESPONSE_LEN,
            got: bytes.len(),
        });
    }
    check_prefix(bytes)?;
    Status::from_u8(bytes[5])
}

/// `header | length (4, BE) | share file`.
pub fn encode_provision(share: &PartyShare) -> Vec<u8> {
    let body = share.to_bytes();
    let mut out = header(OP_PROVISION).to_vec();
    out.extend_from_slice(&(body.len() as u32).to_be_bytes());
    out.extend_from_slice(&body);
    out
}

/// Shares held by one party, keyed by key id. Entries are replaced whole.
#[derive(Debug, Default)]
pub struct ShareStore {
    dir: Option<PathBuf>,
    shares: RwLock<HashMap<KeyId, Arc<PartyShare>>>,
}

impl ShareStore {
    /// Memory-only store.
    pub fn in_memory() -> Self {
        Self::default()
    }

    /// Loads every `*.share` file in `dir`, re-checking integrity tags.
    /// New shares are persisted there as `<key_id>.share`.
    pub fn open(dir: impl AsRef<Path>) -> Result<Self> {
        let dir = dir.as_ref().to_path_buf();
        fs::create_dir_all(&dir)?;
        let mut shares = HashMap::new();
        for entry in fs::read_dir(&dir)? {
            let path = entry?.path();
            if path.extension().and_then(|e| e.to_str()) != Some("share") {
                continue;
            }
            let share = PartyShare::from_bytes(&fs::read(&path)?).map_err(|e| {
                Error::Format(format!("{}: {e}", path.display()))
            })?;
            info!("loaded share {} (party {})", share.key_id, share.j);
            shares.insert(share.key_id, Arc::new(share));
        }
        Ok(ShareStore {
            dir: Some(dir),
            shares: RwLock::new(shares),
        })
    }

    pub fn insert(&self, share: PartyShare) -> Result<()> {
        if let Some(dir) = &self.dir {
            write_atomic(&dir.join(format!("{}.share", share.key_id)), &share.to_bytes())?;
        }
        self.shares
            .write()
            .expect("share store lock poisoned")
            .insert(share.key_id, Arc::new(share));
        Ok(())
    }

    pub fn get(&self, key_id: &KeyId) -> Option<Arc<PartyShare>> {
        self.shares
            .read()
            .expect("share store lock poisoned")
            .get(key_id)
            .cloned()
    }

    pub fn len(&self) -> usize {
        self.shares.read().expect("share store lock poisoned").len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Fault-injection knobs for a party server.
#[derive(Clone, Copy, Debug, Default)]
pub struct ServerOptions {
    /// Sleep before answering each CONSTRUCT.
    pub delay: Duration,
    /// Answer with a random valid point instead of the real one.
    pub corrupt_points: bool,
}

pub struct PartyServer {
    listener: TcpListener,
    store: Arc<ShareStore>,
    options: ServerOptions,
    stop: Arc<AtomicBool>,
}

impl PartyServer {
    pub fn bind(addr: impl ToSocketAddrs, store: Arc<ShareStore>) -> Result<Self> {
        Ok(PartyServer {
            listener: TcpListener::bind(addr)?,
            store,
            options: ServerOptions::default(),
            stop: Arc::new(AtomicBool::new(false)),
        })
    }

    pub fn with_options(mut self, options: ServerOptions) -> Self {
        self.options = options;
        self
    }

    pub fn local_addr(&self) -> Result<SocketAddr> {
        Ok(self.listener.local_addr()?)
    }

    /// Accepts connections until stopped, one thread per connection.
    pub fn run(self) -> Result<()> {
        for conn in self.listener.incoming() {
            if self.stop.load(Ordering::SeqCst) {
                break;
            }
            let stream = match conn {
                Ok(s) => s,
                Err(e) => {
                    warn!("accept failed: {e}");
                    continue;
                }
            };
            let store = Arc::clone(&self.store);
            let options = self.options;
            let stop = Arc::clone(&self.stop);
            thread::spawn(move || {
                let peer = stream.peer_addr().ok();
                if let Err(e) = handle_connection(stream, &store, options, &stop) {
                    debug!("connection {peer:?} ended: {e}");
                }
            });
        }
        Ok(())
    }

    /// Runs the server on a background thread.
    pub fn spawn(self) -> Result<ServerHandle> {
        let addr = self.local_addr()?;
        let stop = Arc::clone(&self.stop);
        let thread = thread::spawn(move || {
            if let Err(e) = self.run() {
                warn!("server stopped: {e}");
            }
        });
        Ok(ServerHandle {
            addr,
            stop,
            thread: Some(thread),
        })
    }
}

/// A running background server. Dropping it stops the server.
pub struct ServerHandle {
    addr: SocketAddr,
    stop: Arc<AtomicBool>,
    thread: Option<JoinHandle<()>>,
}

impl ServerHandle {
    pub fn addr(&self) -> SocketAddr {
        self.addr
    }

    /// Stops accepting, closes the listener and drops open connections at
    /// their next request.
    pub fn stop(&mut self) {
        if self.stop.swap(true, Ordering::SeqCst) {
            return;
        }
        // Wake the accept loop so it observes the flag.
        let _ = TcpStream::connect_timeout(&self.addr, Duration::from_secs(1));
        if let Some(t) = self.thread.take() {
            let _ = t.join();
        }
    }
}

impl Drop for ServerHandle {
    fn drop(&mut self) {
        self.stop();
    }
}

fn send_status(stream: &mut TcpStream, status: Status) -> io::Result<()> {
    stream.write_all(&CommitmentResponse::Error(status).encode())
}

fn handle_connection(
    mut stream: TcpStream,
    store: &ShareStore,
    options: ServerOptions,
    stop: &AtomicBool,
) -> io::Result<()> {
    stream.set_read_timeout(Some(SERVER_READ_TIMEOUT))?;
    stream.set_nodelay(true)?;
    loop {
        if stop.load(Ordering::SeqCst) {
            return Ok(());
        }
        let mut head = [0u8; HEADER_LEN];
        match read_full(&mut stream, &mut head)? {
            0 => return Ok(()),
            HEADER_LEN => {}
            _ => return bad_request(&mut stream, "truncated header"),
        }
        if check_prefix(&head).is_err() {
            return bad_request(&mut stream, "bad magic or version");
        }
        match head[5] {
            OP_CONSTRUCT => {
                let mut frame = [0u8; REQUEST_LEN];
                frame[..HEADER_LEN].copy_from_slice(&head);
                if read_full(&mut stream, &mut frame[HEADER_LEN..])? != REQUEST_LEN - HEADER_LEN {
                    return bad_request(&mut stream, "truncated request");
                }
                let req = CommitmentRequest::decode(&frame).expect("length and header checked");
                info!("construct key_id={} x={}", req.key_id, hex::encode(req.x.0));
                let response = match store.get(&req.key_id) {
                    Some(share) => {
                        let point = if options.corrupt_points {
                            GroupElement::random(&mut rand::thread_rng())
                        } else {
                            party_construct(&share, &req.x, &mut OpCounter::new())
                        };
                        CommitmentResponse::Ok(point)
                    }
                    None => CommitmentResponse::Error(Status::UnknownKey),
                };
                if !options.delay.is_zero() {
                    thread::sleep(options.delay);
                }
                stream.write_all(&response.encode())?;
            }
            OP_PROVISION => {
                let mut len = [0u8; 4];
                if read_full(&mut stream, &mut len)? != 4 {
                    return bad_request(&mut stream, "truncated length");
                }
                let len = u32::from_be_bytes(len) as usize;
                if len > MAX_PROVISION_LEN {
                    return bad_request(&mut stream, "share too large");
                }
                let mut body = vec![0u8; len];
                if read_full(&mut stream, &mut body)? != len {
                    return bad_request(&mut stream, "truncated share");
                }
                match PartyShare::from_bytes(&body) {
                    Ok(share) => {
                        info!("provision key_id={} party={}", share.key_id, share.j);
                        match store.insert(share) {
                            Ok(()) => send_status(&mut stream, Status::Ok)?,
                            Err(e) => {
                                warn!("persisting share failed: {e}");
                                return bad_request(&mut stream, "persist failed");
                            }
                        }
                    }
                    Err(e) => return bad_request(&mut stream, &format!("rejected share: {e}")),
                }
            }
            other => return bad_request(&mut stream, &format!("unknown opcode {other:#04x}")),
        }
    }
}

fn bad_request(stream: &mut TcpStream, why: &str) -> io::Result<()> {
    info!("bad request: {why}");
    send_status(stream, Status::BadRequest)?;
    let _ = stream.shutdown(Shutdown::Both);
    Ok(())
}

/// Reads until `buf` is full or EOF; returns the byte count.
fn read_full(stream: &mut impl Read, buf: &mut [u8]) -> io::Result<usize> {
    let mut got = 0;
    while got < buf.len() {
        match stream.read(&mut buf[got..]) {
            Ok(0) => break,
            Ok(k) => got += k,
            Err(e) if e.kind() == io::ErrorKind::Interrupted => {}
            Err(e) => return Err(e),
        }
    }
    Ok(got)
}

/// The `l` party endpoints of one key, in party order.
#[derive(Clone, Debug)]
pub struct PartyClient {
    endpoints: Vec<String>,
    timeout: Duration,
    retries: u32,
}

impl PartyClient {
    pub fn new(endpoints: Vec<String>) -> Self {
        PartyClient {
            endpoints,
            timeout: DEFAULT_TIMEOUT,
            retries: DEFAULT_RETRIES,
        }
    }

    /// Parses `host:port,host:port,...`.
    pub fn parse(list: &str) -> Result<Self> {
        let endpoints: Vec<String> = list
            .split(',')
            .map(str::trim)
            .filter(|s| !s.is_empty())
            .map(String::from)
            .collect();
        if endpoints.is_empty() {
            return Err(Error::Params("no endpoints given".into()));
        }
        Ok(Self::new(endpoints))
    }

    pub fn with_timeout(mut self, timeout: Duration) -> Self {
        self.timeout = timeout;
        self
    }

    pub fn with_retries(mut self, retries: u32) -> Self {
        self.retries = retries;
        self
    }

    pub fn endpoints(&self) -> &[String] {
        &self.endpoints
    }

    fn connect(&self, endpoint: &str) -> io::Result<TcpStream> {
        let mut last = io::Error::new(io::ErrorKind::NotFound, "endpoint did not resolve");
        for addr in endpoint.to_socket_addrs()? {
            match TcpStream::connect_timeout(&addr, self.timeout) {
                Ok(s) => {
                    s.set_read_timeout(Some(self.timeout))?;
                    s.set_write_timeout(Some(self.timeout))?;
                    s.set_nodelay(true)?;
                    return Ok(s);
                }
                Err(e) => last = e,
            }
        }
        Err(last)
    }

    fn query_once(&self, endpoint: &str, frame: &[u8]) -> std::result::Result<GroupElement, String> {
        let mut s = self.connect(endpoint).map_err(|e| format!("connect: {e}"))?;
        s.write_all(frame).map_err(|e| format!("send: {e}"))?;
        let mut head = [0u8; OK_RESPONSE_LEN];
        let got = read_full(&mut s, &mut head[..HEADER_LEN]).map_err(|e| format!("receive: {e}"))?;
        if got != HEADER_LEN {
            return Err("connection closed".into());
        }
        let len = if head[5] == Status::Ok as u8 {
            let got = read_full(&mut s, &mut head[HEADER_LEN..]).map_err(|e| format!("receive: {e}"))?;
            HEADER_LEN + got
        } else {
            HEADER_LEN
        };
        match CommitmentResponse::decode(&head[..len]).map_err(|e| format!("malformed response: {e}"))? {
            CommitmentResponse::Ok(p) => Ok(p),
            CommitmentResponse::Error(status) => Err(format!("status {status:?}")),
        }
    }

    fn query(&self, endpoint: &str, frame: &[u8]) -> std::result::Result<GroupElement, String> {
        let mut result = self.query_once(endpoint, frame);
        for _ in 0..self.retries {
            match &result {
                // A definite refusal from the party will not change on retry.
                Err(e) if !e.starts_with("status") => result = self.query_once(endpoint, frame),
                _ => break,
            }
        }
        result
    }

    /// Queries every party concurrently. Entry `j − 1` is party `j`'s
    /// response or a diagnostic.
    pub fn fetch_responses(
        &self,
        key_id: &KeyId,
        x: &CommitmentTag,
    ) -> Vec<std::result::Result<GroupElement, String>> {
        let frame = CommitmentRequest { key_id: *key_id, x: *x }.encode();
        thread::scope(|scope| {
            let handles: Vec<_> = self
                .endpoints
                .iter()
                .map(|ep| scope.spawn(|| self.query(ep, &frame)))
                .collect();
            handles
                .into_iter()
                .map(|h| h.join().unwrap_or_else(|_| Err("query thread panicked".into())))
                .collect()
        })
    }

    /// Uploads `shares[i]` to endpoint `i`.
    pub fn provision(&self, shares: &[PartyShare]) -> Result<()> {
        if shares.len() != self.endpoints.len() {
            return Err(Error::Params(format!(
                "{} shares for {} endpoints",
                shares.len(),
                self.endpoints.len()
            )));
        }
        for (share, ep) in shares.iter().zip(&self.endpoints) {
            let mut s = self.connect(ep)?;
            s.write_all(&encode_provision(share))?;
            let mut ack = [0u8; STATUS_RESPONSE_LEN];
            if read_full(&mut s, &mut ack)? != STATUS_RESPONSE_LEN {
                return Err(Error::Unavailable(format!("{ep}: no acknowledgement")));
            }
            match decode_ack(&ack) {
                Ok(Status::Ok) => {}
                Ok(status) => {
                    return Err(Error::Format(format!("{ep}: provisioning refused ({status:?})")))
                }
                Err(e) => return Err(Error::Format(format!("{ep}: {e}"))),
            }
        }
        Ok(())
    }
}

impl CommitmentSource for PartyClient {
    fn fetch(&self, key_id: &KeyId, x: &CommitmentTag) -> Result<GroupElement> {
        let results = self.fetch_responses(key_id, x);
        let failures: Vec<String> = results
            .iter()
            .zip(&self.endpoints)
            .enumerate()
            .filter_map(|(idx, (r, ep))| r.as_ref().err().map(|e| format!("party {} ({ep}): {e}", idx + 1)))
            .collect();
        if !failures.is_empty() {
            return Err(Error::Unavailable(failures.join("; ")));
        }
        let points: Vec<Option<GroupElement>> = results.into_iter().map(|r| r.ok()).collect();
        receiver_aggregate(&points, self.endpoints.len(), &mut OpCounter::new())
    }
}

/// One proxied connection: bytes in each direction.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Exchange {
    pub to_server: Vec<u8>,
    pub to_client: Vec<u8>,
}

/// Loopback TCP proxy that records every byte it forwards.
pub struct RecordingProxy {
    addr: SocketAddr,
    log: Arc<Mutex<Vec<Exchange>>>,
}

impl RecordingProxy {
    pub fn start(upstream: SocketAddr) -> Result<Self> {
        let listener = TcpListener::bind("127.0.0.1:0")?;
        let addr = listener.local_addr()?;
        let log = Arc::new(Mutex::new(Vec::new()));
        let shared = Arc::clone(&log);
        thread::spawn(move || {
            for client in listener.incoming().flatten() {
                let shared = Arc::clone(&shared);
                thread::spawn(move || {
                    if let Ok(exchange) = relay(client, upstream) {
                        shared.lock().expect("proxy log poisoned").push(exchange);
                    }
                });
            }
        });
        Ok(RecordingProxy { addr, log })
    }

    pub fn addr(&self) -> SocketAddr {
        self.addr
    }

    /// Completed connections so far.
    pub fn exchanges(&self) -> Vec<Exchange> {
        self.log.lock().expect("proxy log poisoned").clone()
    }
}

fn pump(mut from: TcpStream, mut to: TcpStream) -> Vec<u8> {
    let mut seen = Vec::new();
    let mut buf = [0u8; 4096];
    loop {
        match from.read(&mut buf) {
            Ok(0) | Err(_) => break,
            Ok(k) => {
                seen.extend_from_slice(&buf[..k]);
                if to.write_all(&buf[..k]).is_err() {
                    break;
                }
            }
        }
    }
    let _ = to.shutdown(Shutdown::Write);
    seen
}

fn relay(client: TcpStream, upstream: SocketAddr) -> io::Result<Exchange> {
    let server = TcpStream::connect(upstream)?;
    let (c2, s2) = (client.try_clone()?, server.try_clone()?);
    let up = thread::spawn(move || pump(c2, s2));
    let to_client = pump(server, client);
    let to_server = up.join().unwrap_or_default();
    Ok(Exchange { to_server, to_client })
}
