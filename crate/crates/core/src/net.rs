//! UDP transport of packed event words.
//!
//! A datagram is `4·k` bytes: `k` little-endian [`EventWord`]s with no
//! header and no timestamps. Receivers stamp events with their arrival
//! time. Loss and reordering across datagrams are not detected.

use std::io;
use std::net::{SocketAddr, ToSocketAddrs, UdpSocket};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::{Arc, Condvar, Mutex};
use std::thread::{self, JoinHandle};
use std::time::{Duration, Instant};

use crate::codec::EventWord;
use crate::error::{Error, Result};
use crate::event::{Event, Geometry};

pub const DEFAULT_MAX_WORDS: usize = 256;
const MAX_DATAGRAM: usize = 65_536;

/// Packs events greedily, in order, into datagrams of at most `max_words`
/// words each.
pub fn encode_packets<'a>(events: impl IntoIterator<Item = &'a Event>, max_words: usize) -> Result<Vec<Vec<u8>>> {
    if max_words == 0 {
        return Err(Error::Parameter("max_words must be >= 1".into()));
    }
    let mut packets = Vec::new();
    let mut cur: Vec<u8> = Vec::with_capacity(max_words * 4);
    for ev in events {
        cur.extend_from_slice(&EventWord::from_event(ev).to_le_bytes());
        if cur.len() == max_words * 4 {
            packets.push(std::mem::replace(&mut cur, Vec::with_capacity(max_words * 4)));
        }
    }
    if !cur.is_empty() {
        packets.push(cur);
    }
    Ok(packets)
}

/// Result of decoding one datagram.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct DecodedPacket {
    pub events: Vec<Event>,
    /// Bytes past the last whole word.
    pub trailing_bytes: usize,
}

pub fn decode_packet(payload: &[u8], arrival: u64) -> DecodedPacket {
    let chunks = payload.chunks_exact(4);
    let trailing_bytes = chunks.remainder().len();
    let events = chunks
        .map(|c| EventWord::from_le_bytes([c[0], c[1], c[2], c[3]]).to_event(arrival))
        .collect();
    DecodedPacket { events, trailing_bytes }
}

/// Counters reported when a [`UdpSource`] is closed.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct SourceStats {
    pub datagrams: u64,
    pub events: u64,
    pub dropped: u64,
    pub trailing_bytes: u64,
}

/// Receives datagrams and yields arrival-stamped events.
///
/// Iteration ends when the idle timeout elapses without traffic, when
/// `max_events` have been yielded, or when the stop flag is raised.
pub struct UdpSource {
    socket: UdpSocket,
    geometry: Geometry,
    epoch: Instant,
    last_t: u64,
    idle_timeout: Option<Duration>,
    max_events: Option<u64>,
    stop: Option<Arc<AtomicBool>>,
    pending: std::vec::IntoIter<Event>,
    buf: Vec<u8>,
    stats: SourceStats,
    done: bool,
}

const POLL_INTERVAL: Duration = Duration::from_millis(50);

impl UdpSource {
    pub fn bind(addr: impl ToSocketAddrs, geometry: Geometry) -> Result<Self> {
        let socket = UdpSocket::bind(addr)?;
        socket.set_read_timeout(Some(POLL_INTERVAL))?;
        Ok(UdpSource {
            socket,
            geometry,
            epoch: Instant::now(),
            last_t: 0,
            idle_timeout: None,
            max_events: None,
            stop: None,
            pending: Vec::new().into_iter(),
            buf: vec![0u8; MAX_DATAGRAM],
            stats: SourceStats::default(),
            done: false,
        })
    }

    pub fn with_idle_timeout(mut self, timeout: Duration) -> Self {
        self.idle_timeout = Some(timeout);
        self
    }

    pub fn with_max_events(mut self, n: u64) -> Self {
        self.max_events = Some(n);
        self
    }

    pub fn with_stop_flag(mut self, stop: Arc<AtomicBool>) -> Self {
        self.stop = Some(stop);
        self
    }

    pub fn local_addr(&self) -> Result<SocketAddr> {
        Ok(self.socket.local_addr()?)
    }

    pub fn geometry(&self) -> Geometry {
        self.geometry
    }

    pub fn stats(&self) -> SourceStats {
        self.stats
    }

    pub fn close(self) -> SourceStats {
        self.stats
    }

    fn now_us(&mut self) -> u64 {
        let t = self.epoch.elapsed().as_micros() as u64;
        self.last_t = self.last_t.max(t);
        self.last_t
    }

    fn receive(&mut self) -> Result<bool> {
        let idle_since = Instant::now();
        loop {
            if self.stop.as_ref().is_some_and(|s| s.load(Ordering::Relaxed)) {
                return Ok(false);
            }
            match self.socket.recv(&mut self.buf) {
                Ok(n) => {
                    let arrival = self.now_us();
                    let packet = decode_packet(&self.buf[..n], arrival);
                    self.stats.datagrams += 1;
                    self.stats.trailing_bytes += packet.trailing_bytes as u64;
                    let geometry = self.geometry;
                    let before = packet.events.len();
                    let kept: Vec<Event> = packet.events.into_iter().filter(|e| geometry.contains(e)).collect();
                    self.stats.dropped += (before - kept.len()) as u64;
                    self.pending = kept.into_iter();
                    return Ok(true);
                }
                Err(e) if matches!(e.kind(), io::ErrorKind::WouldBlock | io::ErrorKind::TimedOut) => {
                    if self.idle_timeout.is_some_and(|t| idle_since.elapsed() >= t) {
                        return Ok(false);
                    }
                }
                Err(e) if e.kind() == io::ErrorKind::Interrupted => {}
                Err(e) => return Err(e.into()),
            }
        }
    }
}

impl Iterator for UdpSource {
    type Item = Result<Event>;

    fn next(&mut self) -> Option<Result<Event>> {
        loop {
            if self.done || self.max_events.is_some_and(|m| self.stats.events >= m) {
                return None;
            }
            if let Some(ev) = self.pending.next() {
                self.stats.events += 1;
                return Some(Ok(ev));
            }
            match self.receive() {
                Ok(true) => {}
                Ok(false) => {
                    self.done = true;
                    return None;
                }
                Err(e) => {
                    self.done = true;
                    return Some(Err(e));
                }
            }
        }
    }
}

struct Batch {
    bytes: Vec<u8>,
    first_at: Option<Instant>,
    closed: bool,
    error: Option<io::Error>,
    datagrams: u64,
}

struct SinkShared {
    socket: UdpSocket,
    batch: Mutex<Batch>,
    wake: Condvar,
    max_bytes: usize,
    interval: Duration,
}

impl SinkShared {
    fn send_locked(&self, batch: &mut Batch) {
        if batch.bytes.is_empty() {
            return;
        }
        if let Err(e) = self.socket.send(&batch.bytes) {
            batch.error.get_or_insert(e);
        }
        batch.datagrams += 1;
        batch.bytes.clear();
        batch.first_at = None;
    }
}

/// Batches events into datagrams, sending when `max_words` accumulate or
/// `flush_interval` has passed since the first buffered event.
pub struct UdpSink {
    shared: Arc<SinkShared>,
    timer: Option<JoinHandle<()>>,
}

impl UdpSink {
    pub fn connect(target: impl ToSocketAddrs, max_words: usize, flush_interval: Duration) -> Result<Self> {
        if max_words == 0 {
            return Err(Error::Parameter("max_words must be >= 1".into()));
        }
        if max_words * 4 > MAX_DATAGRAM - 8 {
            return Err(Error::Parameter(format!(
                "max_words {max_words} exceeds a UDP datagram"
            )));
        }
        if flush_interval.is_zero() {
            return Err(Error::Parameter("flush interval must be > 0".into()));
        }
        let socket = UdpSocket::bind(("0.0.0.0", 0))?;
        socket.connect(target)?;
        let shared = Arc::new(SinkShared {
            socket,
            batch: Mutex::new(Batch {
                bytes: Vec::with_capacity(max_words * 4),
                first_at: None,
                closed: false,
                error: None,
                datagrams: 0,
            }),
            wake: Condvar::new(),
            max_bytes: max_words * 4,
            interval: flush_interval,
        });
        let timer = {
            let shared = Arc::clone(&shared);
            thread::Builder::new()
                .name("udp-sink-flush".into())
                .spawn(move || flush_loop(&shared))?
        };
        Ok(UdpSink {
            shared,
            timer: Some(timer),
        })
    }

    pub fn send(&self, event: &Event) -> Result<()> {
        let mut batch = self.shared.batch.lock().unwrap();
        if let Some(e) = batch.error.take() {
            return Err(e.into());
        }
        if batch.bytes.is_empty() {
            batch.first_at = Some(Instant::now());
            self.shared.wake.notify_one();
        }
        batch
            .bytes
            .extend_from_slice(&EventWord::from_event(event).to_le_bytes());
        if batch.bytes.len() >= self.shared.max_bytes {
            self.shared.send_locked(&mut batch);
        }
        Ok(())
    }

    /// Sends any buffered words now.
    pub fn flush(&self) -> Result<()> {
        let mut batch = self.shared.batch.lock().unwrap();
        self.shared.send_locked(&mut batch);
        match batch.error.take() {
            Some(e) => Err(e.into()),
            None => Ok(()),
        }
    }

    pub fn datagrams_sent(&self) -> u64 {
        self.shared.batch.lock().unwrap().datagrams
    }

    /// Flushes and stops the timer thread.
    pub fn close(mut self) -> Result<()> {
        self.shutdown()
    }

    fn shutdown(&mut self) -> Result<()> {
        let res = self.flush();
        self.shared.batch.lock().unwrap().closed = true;
        self.shared.wake.notify_all();
        if let Some(t) = self.timer.take() {
            let _ = t.join();
        }
        res
    }
}

impl Drop for UdpSink {
    fn drop(&mut self) {
        if self.timer.is_some() {
            let _ = self.shutdown();
        }
    }
}

fn flush_loop(shared: &SinkShared) {
    let mut batch = shared.batch.lock().unwrap();
    loop {
        if batch.closed {
            return;
        }
        match batch.first_at {
            None => batch = shared.wake.wait(batch).unwrap(),
            Some(first) => {
                let due = first + shared.interval;
                let now = Instant::now();
                if now >= due {
                    shared.send_locked(&mut batch);
                } else {
                    batch = shared.wake.wait_timeout(batch, due - now).unwrap().0;
                }
            }
        }
    }
}
