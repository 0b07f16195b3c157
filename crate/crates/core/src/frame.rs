//! Dense frames, time windowing, and the instrumented host/device transfer
//! boundary.
//!
//! A [`DeviceBoundary`] stands in for accelerator memory: it owns its own
//! buffers, every transfer into it is an explicit copy, and each copy is
//! charged to a [`TransferLedger`]. The dense path copies a full host frame
//! (`width·height·4` bytes); the sparse path copies packed event words
//! (`4·n` bytes) and builds the frame on the device side by scatter-add.

use std::collections::VecDeque;
use std::fmt;
use std::io::Write;
use std::str::FromStr;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Mutex;
use std::thread;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use crate::codec::EventWord;
use crate::error::{Error, Result};
use crate::event::{Event, Geometry};

/// Default window length, in microseconds.
pub const DEFAULT_DT_US: u64 = 1000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AccumulationMode {
    /// Cell holds the number of events at that pixel.
    #[default]
    Count,
    /// Cell is 1 if any event hit that pixel.
    Binary,
}

impl FromStr for AccumulationMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "count" => Ok(AccumulationMode::Count),
            "binary" => Ok(AccumulationMode::Binary),
            _ => Err(Error::Parameter(format!(
                "unknown accumulation mode {s:?} (count|binary)"
            ))),
        }
    }
}

impl fmt::Display for AccumulationMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            AccumulationMode::Count => "count",
            AccumulationMode::Binary => "binary",
        })
    }
}

/// Row-major grid of 32-bit cells covering `[window_start, window_end)`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Frame {
    geometry: Geometry,
    mode: AccumulationMode,
    window_start: u64,
    window_end: u64,
    values: Vec<u32>,
}

impl Frame {
    pub fn zeros(geometry: Geometry, mode: AccumulationMode, window_start: u64, window_end: u64) -> Self {
        Frame {
            geometry,
            mode,
            window_start,
            window_end,
            values: vec![0; geometry.pixels()],
        }
    }

    /// Adds one event. Polarity is ignored.
    #[inline]
    pub fn add(&mut self, event: &Event) -> Result<()> {
        self.geometry.check(event)?;
        let i = event.y() as usize * self.geometry.width() as usize + event.x() as usize;
        match self.mode {
            AccumulationMode::Count => self.values[i] += 1,
            AccumulationMode::Binary => self.values[i] = 1,
        }
        Ok(())
    }

    pub fn geometry(&self) -> Geometry {
        self.geometry
    }

    pub fn mode(&self) -> AccumulationMode {
        self.mode
    }

    pub fn window_start(&self) -> u64 {
        self.window_start
    }

    pub fn window_end(&self) -> u64 {
        self.window_end
    }

    pub fn values(&self) -> &[u32] {
        &self.values
    }

    pub fn into_values(self) -> Vec<u32> {
        self.values
    }

    pub fn get(&self, x: u32, y: u32) -> u32 {
        self.values[y as usize * self.geometry.width() as usize + x as usize]
    }

    /// Sum of all cells.
    pub fn total(&self) -> u64 {
        self.values.iter().map(|&v| u64::from(v)).sum()
    }
}

/// Bins `events` into one frame whose window spans their timestamps.
pub fn accumulate(events: &[Event], geometry: Geometry, mode: AccumulationMode) -> Result<Frame> {
    let start = events.iter().map(Event::t).min().unwrap_or(0);
    let end = events.iter().map(|e| e.t() + 1).max().unwrap_or(0);
    let mut frame = Frame::zeros(geometry, mode, start, end);
    for ev in events {
        frame.add(ev)?;
    }
    Ok(frame)
}

/// The events of one half-open time window.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Window {
    pub index: u64,
    pub start: u64,
    pub end: u64,
    pub events: Vec<Event>,
}

impl Window {
    pub fn to_frame(&self, geometry: Geometry, mode: AccumulationMode) -> Result<Frame> {
        let mut frame = Frame::zeros(geometry, mode, self.start, self.end);
        for ev in &self.events {
            frame.add(ev)?;
        }
        Ok(frame)
    }
}

/// Push-based splitter of a time-ordered stream into windows
/// `[t0 + k·dt, t0 + (k+1)·dt)`, where `t0` is the first timestamp.
/// Empty windows between events are emitted too.
#[derive(Debug, Clone)]
pub struct Windower {
    dt: u64,
    t0: Option<u64>,
    index: u64,
    last_t: Option<u64>,
    events: Vec<Event>,
}

impl Windower {
    pub fn new(dt: u64) -> Result<Self> {
        if dt == 0 {
            return Err(Error::Parameter("window dt must be > 0".into()));
        }
        Ok(Windower {
            dt,
            t0: None,
            index: 0,
            last_t: None,
            events: Vec::new(),
        })
    }

    pub fn dt(&self) -> u64 {
        self.dt
    }

    fn take_window(&mut self, t0: u64) -> Window {
        let start = t0 + self.index * self.dt;
        let w = Window {
            index: self.index,
            start,
            end: start + self.dt,
            events: std::mem::take(&mut self.events),
        };
        self.index += 1;
        w
    }

    pub fn push(&mut self, event: Event, emit: &mut dyn FnMut(Window) -> Result<()>) -> Result<()> {
        if let Some(prev) = self.last_t {
            if event.t() < prev {
                return Err(Error::Ordering {
                    previous: prev,
                    current: event.t(),
                });
            }
        }
        self.last_t = Some(event.t());
        let t0 = *self.t0.get_or_insert(event.t());
        let k = (event.t() - t0) / self.dt;
        while self.index < k {
            let w = self.take_window(t0);
            emit(w)?;
        }
        self.events.push(event);
        Ok(())
    }

    /// Emits the window holding the last event, if any event was seen.
    pub fn finish(&mut self, emit: &mut dyn FnMut(Window) -> Result<()>) -> Result<()> {
        if let Some(t0) = self.t0 {
            if self.last_t.is_some_and(|t| (t - t0) / self.dt >= self.index) {
                let w = self.take_window(t0);
                emit(w)?;
            }
        }
        Ok(())
    }
}

/// Iterator adapter over [`Windower`].
pub struct EventWindows<I> {
    inner: I,
    windower: Windower,
    ready: VecDeque<Window>,
    done: bool,
}

impl<I: Iterator<Item = Result<Event>>> Iterator for EventWindows<I> {
    type Item = Result<Window>;

    fn next(&mut self) -> Option<Result<Window>> {
        loop {
            if let Some(w) = self.ready.pop_front() {
                return Some(Ok(w));
            }
            if self.done {
                return None;
            }
            let ready = &mut self.ready;
            let mut emit = |w: Window| {
                ready.push_back(w);
                Ok(())
            };
            let res = match self.inner.next() {
                Some(Ok(ev)) => self.windower.push(ev, &mut emit),
                Some(Err(e)) => Err(e),
                None => {
                    self.done = true;
                    self.windower.finish(&mut emit)
                }
            };
            if let Err(e) = res {
                self.done = true;
                self.ready.clear();
                return Some(Err(e));
            }
        }
    }
}

pub fn windows_by_time<I>(stream: I, dt: u64) -> Result<EventWindows<I::IntoIter>>
where
    I: IntoIterator<Item = Result<Event>>,
{
    Ok(EventWindows {
        inner: stream.into_iter(),
        windower: Windower::new(dt)?,
        ready: VecDeque::new(),
        done: false,
    })
}

/// Splits a time-ordered stream into consecutive `dt`-long frames.
pub fn window_by_time<I>(
    stream: I,
    geometry: Geometry,
    dt: u64,
    mode: AccumulationMode,
) -> Result<impl Iterator<Item = Result<Frame>>>
where
    I: IntoIterator<Item = Result<Event>>,
{
    Ok(windows_by_time(stream, dt)?.map(move |w| w.and_then(|w| w.to_frame(geometry, mode))))
}

/// Bytes charged for one dense frame transfer.
pub fn dense_bytes(geometry: Geometry) -> u64 {
    geometry.pixels() as u64 * 4
}

/// Bytes charged for a sparse transfer of `events` events.
pub fn sparse_bytes(events: usize) -> u64 {
    events as u64 * 4
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TransferPath {
    Dense,
    Sparse,
}

impl fmt::Display for TransferPath {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            TransferPath::Dense => "dense",
            TransferPath::Sparse => "sparse",
        })
    }
}

/// One host-to-device copy.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TransferEntry {
    pub window_index: u64,
    pub path: TransferPath,
    pub bytes: u64,
    pub copy_time_ns: u64,
    pub frame_events: u64,
}

/// Exact cumulative transfer accounting.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct TransferLedger {
    pub bytes_dense: u64,
    pub bytes_sparse: u64,
    pub copy_time: Duration,
    pub frames_delivered: u64,
    pub entries: Vec<TransferEntry>,
}

impl TransferLedger {
    fn record(&mut self, entry: TransferEntry) {
        match entry.path {
            TransferPath::Dense => self.bytes_dense += entry.bytes,
            TransferPath::Sparse => self.bytes_sparse += entry.bytes,
        }
        self.copy_time += Duration::from_nanos(entry.copy_time_ns);
        self.frames_delivered += 1;
        self.entries.push(entry);
    }

    pub fn bytes_total(&self) -> u64 {
        self.bytes_dense + self.bytes_sparse
    }

    /// CSV with columns `window_index,path,bytes,copy_time_ns,frame_events`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        for e in &self.entries {
            w.serialize(e)?;
        }
        w.flush()?;
        Ok(())
    }
}

#[derive(Default)]
struct DeviceMemory {
    cells: Vec<u32>,
    words: Vec<u32>,
    ledger: TransferLedger,
}

/// In-process stand-in for accelerator memory with byte and time accounting.
pub struct DeviceBoundary {
    open: AtomicBool,
    memory: Mutex<DeviceMemory>,
}

impl Default for DeviceBoundary {
    fn default() -> Self {
        Self::open()
    }
}

impl DeviceBoundary {
    pub fn open() -> Self {
        DeviceBoundary {
            open: AtomicBool::new(true),
            memory: Mutex::new(DeviceMemory::default()),
        }
    }

    pub fn close(&self) {
        self.open.store(false, Ordering::Release);
    }

    pub fn is_open(&self) -> bool {
        self.open.load(Ordering::Acquire)
    }

    fn check_open(&self) -> Result<()> {
        if self.is_open() {
            Ok(())
        } else {
            Err(Error::State("device boundary is closed".into()))
        }
    }

    /// Copies a host frame across the boundary.
    pub fn transfer_dense(&self, frame: &Frame, window_index: u64) -> Result<Frame> {
        self.check_open()?;
        let mut mem = self.memory.lock().unwrap();
        let mem = &mut *mem;
        mem.cells.resize(frame.values.len(), 0);
        let started = Instant::now();
        mem.cells.copy_from_slice(&frame.values);
        let copy_time_ns = started.elapsed().as_nanos() as u64;
        let device = Frame {
            geometry: frame.geometry,
            mode: frame.mode,
            window_start: frame.window_start,
            window_end: frame.window_end,
            values: std::mem::take(&mut mem.cells),
        };
        mem.ledger.record(TransferEntry {
            window_index,
            path: TransferPath::Dense,
            bytes: dense_bytes(frame.geometry),
            copy_time_ns,
            frame_events: frame.total(),
        });
        Ok(device)
    }

    /// Copies packed event words across the boundary and scatters them into
    /// a device-side frame.
    pub fn transfer_sparse(&self, window: &Window, geometry: Geometry, mode: AccumulationMode) -> Result<Frame> {
        self.check_open()?;
        for ev in &window.events {
            geometry.check(ev)?;
        }
        let host_words: Vec<u32> = window.events.iter().map(|e| EventWord::from_event(e).0).collect();
        let mut mem = self.memory.lock().unwrap();
        let mem = &mut *mem;
        mem.words.resize(host_words.len(), 0);
        let started = Instant::now();
        mem.words.copy_from_slice(&host_words);
        let copy_time_ns = started.elapsed().as_nanos() as u64;

        // Device side: scatter-add into a zeroed frame.
        let width = geometry.width() as usize;
        let mut cells = std::mem::take(&mut mem.cells);
        cells.clear();
        cells.resize(geometry.pixels(), 0);
        for &w in &mem.words {
            let w = EventWord(w);
            let i = w.y() as usize * width + w.x() as usize;
            match mode {
                AccumulationMode::Count => cells[i] += 1,
                AccumulationMode::Binary => cells[i] = 1,
            }
        }
        mem.ledger.record(TransferEntry {
            window_index: window.index,
            path: TransferPath::Sparse,
            bytes: sparse_bytes(host_words.len()),
            copy_time_ns,
            frame_events: window.events.len() as u64,
        });
        Ok(Frame {
            geometry,
            mode,
            window_start: window.start,
            window_end: window.end,
            values: cells,
        })
    }

    pub fn ledger(&self) -> TransferLedger {
        self.memory.lock().unwrap().ledger.clone()
    }
}

/// Releases events no earlier than `(t − t0) / speed` after the first one.
pub struct PacedPlayback<I> {
    inner: I,
    speed: f64,
    origin: Option<(Instant, u64)>,
}

impl<I> PacedPlayback<I> {
    /// Wall-clock instant of the first event, once playback has started.
    pub fn started_at(&self) -> Option<Instant> {
        self.origin.map(|(i, _)| i)
    }
}

impl<I: Iterator<Item = Result<Event>>> Iterator for PacedPlayback<I> {
    type Item = Result<Event>;

    fn next(&mut self) -> Option<Result<Event>> {
        let ev = match self.inner.next()? {
            Ok(ev) => ev,
            Err(e) => return Some(Err(e)),
        };
        let (start, t0) = *self.origin.get_or_insert_with(|| (Instant::now(), ev.t()));
        let offset = ev.t().saturating_sub(t0) as f64 / 1e6 / self.speed;
        let due = start + Duration::from_secs_f64(offset);
        let now = Instant::now();
        if due > now {
            thread::sleep(due - now);
        }
        Some(Ok(ev))
    }
}

pub fn paced_playback<I>(source: I, speed: f64) -> Result<PacedPlayback<I::IntoIter>>
where
    I: IntoIterator<Item = Result<Event>>,
{
    if !(speed > 0.0 && speed.is_finite()) {
        return Err(Error::Parameter(format!("playback speed must be > 0, got {speed}")));
    }
    Ok(PacedPlayback {
        inner: source.into_iter(),
        speed,
        origin: None,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::event::{make_event, synthetic_stream};

    fn ev(x: u32, y: u32, t: u64) -> Event {
        make_event(x, y, t.is_multiple_of(2), t).unwrap()
    }

    fn oks(evs: &[Event]) -> impl Iterator<Item = Result<Event>> + '_ {
        evs.iter().copied().map(Ok)
    }

    #[test]
    fn accumulate_modes() {
        let g = Geometry::new(10, 10).unwrap();
        let empty = accumulate(&[], g, AccumulationMode::Count).unwrap();
        assert_eq!(empty.total(), 0);
        assert_eq!(empty.values().len(), 100);
        let three = [ev(5, 5, 0), ev(5, 5, 1), ev(5, 5, 2)];
        let c = accumulate(&three, g, AccumulationMode::Count).unwrap();
        assert_eq!(c.get(5, 5), 3);
        assert_eq!(c.total(), 3);
        let b = accumulate(&three, g, AccumulationMode::Binary).unwrap();
        assert_eq!(b.get(5, 5), 1);
        assert_eq!(b.total(), 1);
        assert!(matches!(
            accumulate(&[ev(10, 0, 0)], g, AccumulationMode::Count),
            Err(Error::Range { field: "x", .. })
        ));
    }

    #[test]
    fn windows_examples() {
        let g = Geometry::new(4, 4).unwrap();
        let evs: Vec<Event> = (0..10).map(|i| ev(1, 1, i * 100)).collect();
        let one: Vec<Frame> = window_by_time(oks(&evs), g, 1000, AccumulationMode::Count)
            .unwrap()
            .collect::<Result<_>>()
            .unwrap();
        assert_eq!(one.len(), 1);
        assert_eq!(one[0].total(), 10);
        let two: Vec<Frame> = window_by_time(oks(&evs), g, 500, AccumulationMode::Count)
            .unwrap()
            .collect::<Result<_>>()
            .unwrap();
        assert_eq!(two.iter().map(Frame::total).collect::<Vec<_>>(), [5, 5]);
        assert_eq!((two[1].window_start(), two[1].window_end()), (500, 1000));
    }

    #[test]
    fn empty_windows_are_emitted() {
        let evs = [ev(0, 0, 0), ev(0, 0, 3500)];
        let ws: Vec<Window> = windows_by_time(oks(&evs), 1000)
            .unwrap()
            .collect::<Result<_>>()
            .unwrap();
        assert_eq!(ws.iter().map(|w| w.events.len()).collect::<Vec<_>>(), [1, 0, 0, 1]);
        assert_eq!(ws.iter().map(|w| w.index).collect::<Vec<_>>(), [0, 1, 2, 3]);
        assert!(windows_by_time(oks(&[]), 1000).unwrap().next().is_none());
    }

    #[test]
    fn window_boundaries_are_half_open() {
        let evs = [ev(0, 0, 0), ev(0, 0, 999), ev(0, 0, 1000)];
        let ws: Vec<Window> = windows_by_time(oks(&evs), 1000)
            .unwrap()
            .collect::<Result<_>>()
            .unwrap();
        assert_eq!(ws.len(), 2);
        assert_eq!(ws[0].events.len(), 2);
        assert_eq!(ws[1].events.len(), 1);
    }

    #[test]
    fn window_rejects_disorder_and_zero_dt() {
        let evs = [ev(0, 0, 10), ev(0, 0, 5)];
        let res: Result<Vec<Window>> = windows_by_time(oks(&evs), 100).unwrap().collect();
        assert!(matches!(
            res,
            Err(Error::Ordering {
                previous: 10,
                current: 5
            })
        ));
        assert!(windows_by_time(oks(&evs), 0).is_err());
    }

    #[test]
    fn frame_count_for_long_recording() {
        // 24.8 s of events at 1 ms windows.
        let g = Geometry::DAVIS346;
        let stream = synthetic_stream(1, 248_000, g, 10_000).unwrap().map(Ok);
        let n = windows_by_time(stream, 1000).unwrap().count();
        assert_eq!(n, 24_800);
    }

    #[test]
    fn transfer_byte_accounting() {
        let g = Geometry::DAVIS346;
        let boundary = DeviceBoundary::open();
        let events: Vec<Event> = synthetic_stream(5, 3629, g, 3_629_000).unwrap().collect();
        let window = Window {
            index: 0,
            start: 0,
            end: 1000,
            events,
        };
        let host = window.to_frame(g, AccumulationMode::Count).unwrap();
        let dense = boundary.transfer_dense(&host, 0).unwrap();
        let sparse = boundary.transfer_sparse(&window, g, AccumulationMode::Count).unwrap();
        assert_eq!(dense, host);
        assert_eq!(sparse, host);
        let ledger = boundary.ledger();
        assert_eq!(ledger.bytes_dense, 359_840);
        assert_eq!(ledger.bytes_sparse, 14_516);
        assert_eq!(ledger.frames_delivered, 2);
        assert_eq!(ledger.entries[1].frame_events, 3629);
    }

    #[test]
    fn closed_boundary_rejects_transfers() {
        let g = Geometry::new(2, 2).unwrap();
        let b = DeviceBoundary::open();
        b.close();
        let f = Frame::zeros(g, AccumulationMode::Count, 0, 1);
        assert!(matches!(b.transfer_dense(&f, 0), Err(Error::State(_))));
        let w = Window {
            index: 0,
            start: 0,
            end: 1,
            events: vec![],
        };
        assert!(matches!(
            b.transfer_sparse(&w, g, AccumulationMode::Binary),
            Err(Error::State(_))
        ));
    }

    #[test]
    fn ledger_csv_columns() {
        let g = Geometry::new(2, 2).unwrap();
        let b = DeviceBoundary::open();
        let w = Window {
            index: 3,
            start: 0,
            end: 1,
            events: vec![ev(1, 1, 0)],
        };
        b.transfer_sparse(&w, g, AccumulationMode::Count).unwrap();
        let mut out = Vec::new();
        b.ledger().write_csv(&mut out).unwrap();
        let text = String::from_utf8(out).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next(), Some("window_index,path,bytes,copy_time_ns,frame_events"));
        let row: Vec<&str> = lines.next().unwrap().split(',').collect();
        assert_eq!((row[0], row[1], row[2], row[4]), ("3", "sparse", "4", "1"));
    }

    #[test]
    fn paced_playback_respects_timestamps() {
        let evs: Vec<Event> = (0..=10).map(|i| ev(0, 0, 1_000_000 + i * 10_000)).collect();
        let start = Instant::now();
        let n = paced_playback(oks(&evs), 1.0).unwrap().count();
        assert_eq!(n, 11);
        assert!(start.elapsed() >= Duration::from_millis(100));

        let start = Instant::now();
        paced_playback(oks(&evs), 2.0).unwrap().for_each(drop);
        assert!(start.elapsed() >= Duration::from_millis(50));
        assert!(paced_playback(oks(&evs), 0.0).is_err());
    }
}
