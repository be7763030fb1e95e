//! Depth frame streaming over TCP.
//!
//! Wire layout of one frame, little-endian:
//!
//! | bytes | field                                          |
//! |-------|------------------------------------------------|
//! | 4     | magic `LFDS`                                   |
//! | 1     | version `0x01`                                 |
//! | 8     | frame id (`u64`)                               |
//! | 8     | timestamp, microseconds (`u64`)                |
//! | 2 + 2 | width, height (`u16`)                          |
//! | 1     | payload kind: 0 disparity, 1 depth, 2 gray8    |
//! | 4     | payload length in bytes (`u32`)                |
//! | n     | samples, row-major top to bottom               |
//!
//! The server pushes every published frame to every connected client. Each
//! client has a bounded queue; a client that falls behind by more than the
//! queue length is disconnected so the producer never waits.

use std::io::{self, Read, Write};
use std::net::{Shutdown, SocketAddr, TcpListener, TcpStream, ToSocketAddrs};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::mpsc::{self, SyncSender, TrySendError};
use std::sync::{Arc, Mutex};
use std::thread::{self, JoinHandle};
use std::time::{Duration, Instant};

use thiserror::Error;

use crate::lightfield::{GrayImage, Image};

pub const FRAME_MAGIC: [u8; 4] = *b"LFDS";
pub const FRAME_VERSION: u8 = 1;
pub const HEADER_LEN: usize = 30;
pub const DEFAULT_QUEUE_FRAMES: usize = 8;

#[derive(Debug, Error, PartialEq)]
pub enum DecodeError {
    #[error("need {needed} more bytes")]
    NeedMoreData { needed: usize },
    #[error("bad frame magic {0:02X?}")]
    BadMagic([u8; 4]),
    #[error("unsupported frame version {0}")]
    BadVersion(u8),
    #[error("unknown payload kind {0}")]
    BadKind(u8),
    #[error("payload length {declared} does not match {expected} for the frame size")]
    LengthMismatch { declared: u32, expected: u64 },
}

impl DecodeError {
    /// Protocol errors cannot be recovered by reading more bytes.
    pub fn is_fatal(&self) -> bool {
        !matches!(self, DecodeError::NeedMoreData { .. })
    }
}

#[derive(Debug, Error)]
pub enum StreamError {
    #[error("frame {width}x{height} does not fit 16-bit dimensions")]
    Oversize { width: usize, height: usize },
    #[error("protocol error: {0}")]
    Protocol(#[from] DecodeError),
    #[error("connection closed mid-frame")]
    Truncated,
    #[error(transparent)]
    Io(#[from] io::Error),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
#[repr(u8)]
pub enum PayloadKind {
    Disparity = 0,
    Depth = 1,
    Gray8 = 2,
}

impl PayloadKind {
    fn from_byte(b: u8) -> Result<Self, DecodeError> {
        match b {
            0 => Ok(Self::Disparity),
            1 => Ok(Self::Depth),
            2 => Ok(Self::Gray8),
            other => Err(DecodeError::BadKind(other)),
        }
    }

    pub fn sample_size(self) -> usize {
        match self {
            PayloadKind::Disparity | PayloadKind::Depth => 4,
            PayloadKind::Gray8 => 1,
        }
    }
}

#[derive(Clone, Debug)]
pub enum Payload {
    Real(Vec<f32>),
    Gray(Vec<u8>),
}

#[derive(Clone, Debug)]
pub struct FrameMessage {
    pub frame_id: u64,
    pub timestamp_us: u64,
    pub width: u16,
    pub height: u16,
    pub kind: PayloadKind,
    pub payload: Payload,
}

/// Bitwise equality, so NaN payloads compare equal to themselves.
impl PartialEq for FrameMessage {
    fn eq(&self, other: &Self) -> bool {
        let same_payload = match (&self.payload, &other.payload) {
            (Payload::Real(a), Payload::Real(b)) => {
                a.len() == b.len() && a.iter().zip(b).all(|(x, y)| x.to_bits() == y.to_bits())
            }
            (Payload::Gray(a), Payload::Gray(b)) => a == b,
            _ => false,
        };
        same_payload
            && self.frame_id == other.frame_id
            && self.timestamp_us == other.timestamp_us
            && self.width == other.width
            && self.height == other.height
            && self.kind == other.kind
    }
}

fn dims16(width: usize, height: usize) -> Result<(u16, u16), StreamError> {
    match (u16::try_from(width), u16::try_from(height)) {
        (Ok(w), Ok(h)) => Ok((w, h)),
        _ => Err(StreamError::Oversize { width, height }),
    }
}

impl FrameMessage {
    /// Disparity or depth frame from a real-valued map.
    pub fn from_map(
        kind: PayloadKind,
        map: &Image<f32>,
        frame_id: u64,
        timestamp_us: u64,
    ) -> Result<Self, StreamError> {
        assert_ne!(kind, PayloadKind::Gray8, "gray frames carry 8-bit samples");
        let (width, height) = dims16(map.width(), map.height())?;
        Ok(Self {
            frame_id,
            timestamp_us,
            width,
            height,
            kind,
            payload: Payload::Real(map.data().to_vec()),
        })
    }

    pub fn from_gray(img: &GrayImage, frame_id: u64, timestamp_us: u64) -> Result<Self, StreamError> {
        let (width, height) = dims16(img.width(), img.height())?;
        Ok(Self {
            frame_id,
            timestamp_us,
            width,
            height,
            kind: PayloadKind::Gray8,
            payload: Payload::Gray(img.data().to_vec()),
        })
    }

    pub fn payload_len(&self) -> usize {
        match &self.payload {
            Payload::Real(v) => 4 * v.len(),
            Payload::Gray(v) => v.len(),
        }
    }

    /// Real-valued payload as an image (`None` for gray frames or empty size).
    pub fn to_map(&self) -> Option<Image<f32>> {
        match &self.payload {
            Payload::Real(v) => Image::new(self.width as usize, self.height as usize, v.clone()).ok(),
            Payload::Gray(_) => None,
        }
    }

    pub fn to_gray(&self) -> Option<GrayImage> {
        match &self.payload {
            Payload::Gray(v) => Image::new(self.width as usize, self.height as usize, v.clone()).ok(),
            Payload::Real(_) => None,
        }
    }
}

pub fn encode_frame(frame: &FrameMessage) -> Vec<u8> {
    let mut out = Vec::with_capacity(HEADER_LEN + frame.payload_len());
    out.extend_from_slice(&FRAME_MAGIC);
    out.push(FRAME_VERSION);
    out.extend_from_slice(&frame.frame_id.to_le_bytes());
    out.extend_from_slice(&frame.timestamp_us.to_le_bytes());
    out.extend_from_slice(&frame.width.to_le_bytes());
    out.extend_from_slice(&frame.height.to_le_bytes());
    out.push(frame.kind as u8);
    out.extend_from_slice(&(frame.payload_len() as u32).to_le_bytes());
    match &frame.payload {
        Payload::Real(v) => v.iter().for_each(|x| out.extend_from_slice(&x.to_le_bytes())),
        Payload::Gray(v) => out.extend_from_slice(v),
    }
    out
}

struct Header {
    frame_id: u64,
    timestamp_us: u64,
    width: u16,
    height: u16,
    kind: PayloadKind,
    payload_len: usize,
}

/// Validates as much of the header as `buf` holds.
fn parse_header(buf: &[u8]) -> Result<Header, DecodeError> {
    let have = buf.len().min(4);
    if buf[..have] != FRAME_MAGIC[..have] {
        let mut magic = [0u8; 4];
        magic[..have].copy_from_slice(&buf[..have]);
        return Err(DecodeError::BadMagic(magic));
    }
    if let Some(&version) = buf.get(4) {
        if version != FRAME_VERSION {
            return Err(DecodeError::BadVersion(version));
        }
    }
    if let Some(&kind) = buf.get(25) {
        PayloadKind::from_byte(kind)?;
    }
    if buf.len() < HEADER_LEN {
        return Err(DecodeError::NeedMoreData {
            needed: HEADER_LEN - buf.len(),
        });
    }
    let u64_at = |i: usize| u64::from_le_bytes(buf[i..i + 8].try_into().expect("8 bytes"));
    let u16_at = |i: usize| u16::from_le_bytes([buf[i], buf[i + 1]]);
    let width = u16_at(21);
    let height = u16_at(23);
    let kind = PayloadKind::from_byte(buf[25])?;
    let declared = u32::from_le_bytes(buf[26..30].try_into().expect("4 bytes"));
    let expected = u64::from(width) * u64::from(height) * kind.sample_size() as u64;
    if u64::from(declared) != expected {
        return Err(DecodeError::LengthMismatch { declared, expected });
    }
    Ok(Header {
        frame_id: u64_at(5),
        timestamp_us: u64_at(13),
        width,
        height,
        kind,
        payload_len: declared as usize,
    })
}

/// Decodes one frame from the front of `buf`, returning it with the number
/// of bytes consumed. An incomplete frame yields [`DecodeError::NeedMoreData`]
/// and nothing else.
pub fn decode_frame(buf: &[u8]) -> Result<(FrameMessage, usize), DecodeError> {
    if buf.is_empty() {
        return Err(DecodeError::NeedMoreData { needed: HEADER_LEN });
    }
    let header = parse_header(buf)?;
    let total = HEADER_LEN + header.payload_len;
    if buf.len() < total {
        return Err(DecodeError::NeedMoreData {
            needed: total - buf.len(),
        });
    }
    let body = &buf[HEADER_LEN..total];
    let payload = match header.kind {
        PayloadKind::Gray8 => Payload::Gray(body.to_vec()),
        _ => Payload::Real(
            body.chunks_exact(4)
                .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]))
                .collect(),
        ),
    };
    Ok((
        FrameMessage {
            frame_id: header.frame_id,
            timestamp_us: header.timestamp_us,
            width: header.width,
            height: header.height,
            kind: header.kind,
            payload,
        },
        total,
    ))
}

/// Incremental decoder for byte streams that arrive in arbitrary pieces.
#[derive(Debug, Default)]
pub struct FrameDecoder {
    buf: Vec<u8>,
}

impl FrameDecoder {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn feed(&mut self, bytes: &[u8]) {
        self.buf.extend_from_slice(bytes);
    }

    /// Next complete frame, `None` if more bytes are needed.
    pub fn next_frame(&mut self) -> Result<Option<FrameMessage>, DecodeError> {
        match decode_frame(&self.buf) {
            Ok((frame, used)) => {
                self.buf.drain(..used);
                Ok(Some(frame))
            }
            Err(DecodeError::NeedMoreData { .. }) => Ok(None),
            Err(e) => Err(e),
        }
    }

    pub fn buffered(&self) -> usize {
        self.buf.len()
    }
}

/// Blocking read of one frame. `Ok(None)` on a clean end of stream between
/// frames.
pub fn read_frame<R: Read>(reader: &mut R) -> Result<Option<FrameMessage>, StreamError> {
    let mut header = [0u8; HEADER_LEN];
    let mut filled = 0;
    while filled < HEADER_LEN {
        match reader.read(&mut header[filled..]) {
            Ok(0) if filled == 0 => return Ok(None),
            Ok(0) => return Err(StreamError::Truncated),
            Ok(n) => filled += n,
            Err(e) if e.kind() == io::ErrorKind::Interrupted => {}
            Err(e) => return Err(e.into()),
        }
        // surface protocol errors before waiting on the rest
        if let Err(e) = parse_header(&header[..filled]) {
            if e.is_fatal() {
                return Err(e.into());
            }
        }
    }
    let parsed = parse_header(&header)?;
    let mut frame = Vec::with_capacity(HEADER_LEN + parsed.payload_len);
    frame.extend_from_slice(&header);
    frame.resize(HEADER_LEN + parsed.payload_len, 0);
    reader.read_exact(&mut frame[HEADER_LEN..]).map_err(|e| {
        if e.kind() == io::ErrorKind::UnexpectedEof {
            StreamError::Truncated
        } else {
            e.into()
        }
    })?;
    Ok(Some(decode_frame(&frame)?.0))
}

#[derive(Clone, Copy, Debug)]
pub struct ServerConfig {
    /// Frames a client may fall behind before it is dropped.
    pub queue_frames: usize,
}

impl Default for ServerConfig {
    fn default() -> Self {
        Self {
            queue_frames: DEFAULT_QUEUE_FRAMES,
        }
    }
}

struct Client {
    peer: SocketAddr,
    tx: SyncSender<Arc<[u8]>>,
    socket: TcpStream,
    writer: JoinHandle<()>,
}

/// Fan-out TCP server for encoded frames.
pub struct FrameServer {
    addr: SocketAddr,
    config: ServerConfig,
    clients: Arc<Mutex<Vec<Client>>>,
    running: Arc<AtomicBool>,
    acceptor: Option<JoinHandle<()>>,
    dropped: usize,
}

impl FrameServer {
    pub fn bind<A: ToSocketAddrs>(addr: A, config: ServerConfig) -> Result<Self, StreamError> {
        let listener = TcpListener::bind(addr)?;
        listener.set_nonblocking(true)?;
        let addr = listener.local_addr()?;
        let clients: Arc<Mutex<Vec<Client>>> = Arc::default();
        let running = Arc::new(AtomicBool::new(true));
        let acceptor = {
            let clients = Arc::clone(&clients);
            let running = Arc::clone(&running);
            let queue = config.queue_frames.max(1);
            thread::Builder::new()
                .name("lfdepth-accept".into())
                .spawn(move || accept_loop(listener, clients, running, queue))?
        };
        Ok(Self {
            addr,
            config,
            clients,
            running,
            acceptor: Some(acceptor),
            dropped: 0,
        })
    }

    pub fn local_addr(&self) -> SocketAddr {
        self.addr
    }

    pub fn config(&self) -> ServerConfig {
        self.config
    }

    pub fn client_count(&self) -> usize {
        self.clients.lock().expect("client list").len()
    }

    /// Clients disconnected so far for falling behind or failing I/O.
    pub fn dropped_clients(&self) -> usize {
        self.dropped
    }

    pub fn wait_for_clients(&self, n: usize, timeout: Duration) -> bool {
        let deadline = Instant::now() + timeout;
        while self.client_count() < n {
            if Instant::now() >= deadline {
                return false;
            }
            thread::sleep(Duration::from_millis(2));
        }
        true
    }

    /// Queues a frame for every client; returns how many clients took it.
    pub fn publish(&mut self, frame: &FrameMessage) -> usize {
        self.publish_encoded(encode_frame(frame).into())
    }

    pub fn publish_encoded(&mut self, bytes: Arc<[u8]>) -> usize {
        let mut clients = self.clients.lock().expect("client list");
        let mut delivered = 0;
        let mut i = 0;
        while i < clients.len() {
            match clients[i].tx.try_send(Arc::clone(&bytes)) {
                Ok(()) => {
                    delivered += 1;
                    i += 1;
                }
                Err(TrySendError::Full(_)) | Err(TrySendError::Disconnected(_)) => {
                    let client = clients.swap_remove(i);
                    log::warn!("dropping stream client {}", client.peer);
                    let _ = client.socket.shutdown(Shutdown::Both);
                    self.dropped += 1;
                }
            }
        }
        delivered
    }

    /// Stops accepting, lets every client drain its queue, and joins all threads.
    pub fn shutdown(mut self) {
        self.stop();
    }

    fn stop(&mut self) {
        self.running.store(false, Ordering::SeqCst);
        if let Some(acceptor) = self.acceptor.take() {
            let _ = acceptor.join();
        }
        let clients: Vec<Client> = std::mem::take(&mut *self.clients.lock().expect("client list"));
        for client in clients {
            drop(client.tx);
            let _ = client.writer.join();
            let _ = client.socket.shutdown(Shutdown::Both);
        }
    }
}

impl Drop for FrameServer {
    fn drop(&mut self) {
        self.stop();
    }
}

fn accept_loop(
    listener: TcpListener,
    clients: Arc<Mutex<Vec<Client>>>,
    running: Arc<AtomicBool>,
    queue: usize,
) {
    while running.load(Ordering::SeqCst) {
        match listener.accept() {
            Ok((socket, peer)) => {
                if let Err(e) = add_client(&clients, socket, peer, queue) {
                    log::warn!("stream client {peer} rejected: {e}");
                }
            }
            Err(e) if e.kind() == io::ErrorKind::WouldBlock => {
                thread::sleep(Duration::from_millis(5));
            }
            Err(e) => {
                log::warn!("accept failed: {e}");
                thread::sleep(Duration::from_millis(5));
            }
        }
    }
}

fn add_client(
    clients: &Mutex<Vec<Client>>,
    socket: TcpStream,
    peer: SocketAddr,
    queue: usize,
) -> io::Result<()> {
    socket.set_nonblocking(false)?;
    socket.set_nodelay(true)?;
    let mut out = socket.try_clone()?;
    let (tx, rx) = mpsc::sync_channel::<Arc<[u8]>>(queue);
    let writer = thread::Builder::new()
        .name(format!("lfdepth-client-{peer}"))
        .spawn(move || {
            for bytes in rx {
                if let Err(e) = out.write_all(&bytes) {
                    log::debug!("stream client {peer}: {e}");
                    return;
                }
            }
            let _ = out.flush();
        })?;
    clients.lock().expect("client list").push(Client {
        peer,
        tx,
        socket,
        writer,
    });
    log::info!("stream client {peer} connected");
    Ok(())
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct ServeStats {
    pub frames: u64,
    pub deliveries: u64,
    pub dropped_clients: usize,
}

/// Publishes every frame of `source` in order, then shuts down.
pub fn serve<A, I>(addr: A, source: I, config: ServerConfig) -> Result<ServeStats, StreamError>
where
    A: ToSocketAddrs,
    I: IntoIterator<Item = FrameMessage>,
{
    let mut server = FrameServer::bind(addr, config)?;
    let mut stats = ServeStats::default();
    for frame in source {
        stats.deliveries += server.publish(&frame) as u64;
        stats.frames += 1;
    }
    stats.dropped_clients = server.dropped_clients();
    server.shutdown();
    Ok(stats)
}

/// Receiving side.
pub struct FrameClient {
    stream: io::BufReader<TcpStream>,
}

impl FrameClient {
    pub fn connect<A: ToSocketAddrs>(addr: A) -> Result<Self, StreamError> {
        let stream = TcpStream::connect(addr)?;
        stream.set_nodelay(true)?;
        Ok(Self {
            stream: io::BufReader::with_capacity(1 << 16, stream),
        })
    }

    /// Next frame, `None` once the server closes the connection.
    pub fn next_frame(&mut self) -> Result<Option<FrameMessage>, StreamError> {
        read_frame(&mut self.stream)
    }
}

impl Iterator for FrameClient {
    type Item = Result<FrameMessage, StreamError>;

    fn next(&mut self) -> Option<Self::Item> {
        self.next_frame().transpose()
    }
}
