use std::fmt;
use std::fs::File;
use std::io::{BufReader, Read, Write};
use std::path::Path;
use std::str::FromStr;
use std::sync::mpsc::{sync_channel, Receiver, SyncSender};
use std::thread;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::codec::read_file;
use crate::edge::{EdgeDetector, Kernel, LifParams};
use crate::error::{Error, Result};
use crate::event::{Event, Geometry};
use crate::frame::{paced_playback, AccumulationMode, DeviceBoundary, Frame, TransferLedger, Window, Windower};
use crate::runtime::{run_pipeline, RuntimeKind, Sink};

/// The four ways events reach the device: runtime × transfer path.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScenarioId {
    LockedDense,
    CooperativeDense,
    LockedSparse,
    CooperativeSparse,
}

impl ScenarioId {
    pub const ALL: [ScenarioId; 4] = [
        ScenarioId::LockedDense,
        ScenarioId::CooperativeDense,
        ScenarioId::LockedSparse,
        ScenarioId::CooperativeSparse,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ScenarioId::LockedDense => "locked_dense",
            ScenarioId::CooperativeDense => "cooperative_dense",
            ScenarioId::LockedSparse => "locked_sparse",
            ScenarioId::CooperativeSparse => "cooperative_sparse",
        }
    }

    pub fn is_sparse(self) -> bool {
        matches!(self, ScenarioId::LockedSparse | ScenarioId::CooperativeSparse)
    }

    pub fn is_cooperative(self) -> bool {
        matches!(self, ScenarioId::CooperativeDense | ScenarioId::CooperativeSparse)
    }
}

impl fmt::Display for ScenarioId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ScenarioId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        ScenarioId::ALL
            .into_iter()
            .find(|id| id.name() == s)
            .ok_or_else(|| Error::Parameter(format!("unknown scenario {s:?}")))
    }
}

#[derive(Debug, Clone)]
pub struct FrameBenchOptions {
    /// Window length in microseconds.
    pub dt: u64,
    pub mode: AccumulationMode,
    /// Playback speed relative to the recorded timestamps.
    pub speed: f64,
    pub kernel: Kernel,
    /// `dt` is overwritten with the window length.
    pub lif: LifParams,
    /// Buffer size for the locked scenarios.
    pub buffer_size: usize,
    pub workers: usize,
    /// Frames that may wait between the host side and the consumer.
    pub queue_depth: usize,
}

impl Default for FrameBenchOptions {
    fn default() -> Self {
        FrameBenchOptions {
            dt: crate::frame::DEFAULT_DT_US,
            mode: AccumulationMode::Count,
            speed: 1.0,
            kernel: Kernel::laplacian(),
            lif: LifParams::default(),
            buffer_size: 1 << 10,
            workers: 1,
            queue_depth: 2,
        }
    }
}

/// CSV columns, in order: `scenario, frames_processed, bytes_copied,
/// copy_time_ns, copy_time_fraction, wall_time_ns, span_us, events, spikes,
/// consumer_fps, spike_digest`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameBenchReport {
    pub scenario: ScenarioId,
    pub frames_processed: u64,
    pub bytes_copied: u64,
    pub copy_time_ns: u64,
    /// Share of wall time spent in host-to-device copies.
    pub copy_time_fraction: f64,
    pub wall_time_ns: u64,
    /// Last minus first timestamp of the input.
    pub span_us: u64,
    pub events: u64,
    pub spikes: u64,
    /// Frames per second of consumer busy time: what the consumer could
    /// sustain if frames were always ready.
    pub consumer_fps: f64,
    /// SHA-256 over all spike grids, hex.
    pub spike_digest: String,
    #[serde(skip)]
    pub ledger: TransferLedger,
}

impl FrameBenchReport {
    pub fn wall_time(&self) -> Duration {
        Duration::from_nanos(self.wall_time_ns)
    }
}

enum Payload {
    Dense(u64, Frame),
    Sparse(Window),
}

/// Host side of the transfer: builds frames on the host (dense) or forwards
/// raw windows (sparse).
struct Emitter {
    tx: Option<SyncSender<Payload>>,
    geometry: Geometry,
    mode: AccumulationMode,
    sparse: bool,
}

impl Emitter {
    fn send(&self, w: Window) -> Result<()> {
        let payload = if self.sparse {
            Payload::Sparse(w)
        } else {
            Payload::Dense(w.index, w.to_frame(self.geometry, self.mode)?)
        };
        self.tx
            .as_ref()
            .ok_or_else(|| Error::State("window sink already finished".into()))?
            .send(payload)
            .map_err(|_| Error::Sink("frame consumer stopped".into()))
    }
}

struct WindowSink {
    windower: Windower,
    out: Emitter,
    span: Option<(u64, u64)>,
}

impl Sink for WindowSink {
    fn consume(&mut self, event: Event) -> Result<()> {
        let t = event.t();
        self.span = Some(self.span.map_or((t, t), |(a, _)| (a, t)));
        let out = &self.out;
        self.windower.push(event, &mut |w| out.send(w))
    }

    fn finish(&mut self) -> Result<()> {
        let out = &self.out;
        let res = self.windower.finish(&mut |w| out.send(w));
        self.out.tx = None;
        res
    }
}

struct ConsumerResult {
    frames: u64,
    spikes: u64,
    busy: Duration,
    digest: String,
}

fn consume(
    rx: Receiver<Payload>,
    boundary: &DeviceBoundary,
    mut detector: EdgeDetector,
    geometry: Geometry,
    mode: AccumulationMode,
) -> Result<ConsumerResult> {
    let mut hasher = Sha256::new();
    let mut frames = 0u64;
    let mut spikes = 0u64;
    let mut busy = Duration::ZERO;
    for payload in rx {
        let started = Instant::now();
        let device = match payload {
            Payload::Dense(index, frame) => boundary.transfer_dense(&frame, index)?,
            Payload::Sparse(window) => boundary.transfer_sparse(&window, geometry, mode)?,
        };
        let s = detector.step(&device)?;
        hasher.update(s.as_bytes());
        spikes += s.count() as u64;
        frames += 1;
        busy += started.elapsed();
    }
    let digest = hasher.finalize().iter().map(|b| format!("{b:02x}")).collect();
    Ok(ConsumerResult {
        frames,
        spikes,
        busy,
        digest,
    })
}

/// Plays an AERF file back at its recorded pace through the scenario's
/// runtime and transfer path, running the edge detector on every frame.
pub fn run_frame_bench(
    path: impl AsRef<Path>,
    scenario: ScenarioId,
    options: &FrameBenchOptions,
) -> Result<FrameBenchReport> {
    let reader = read_file(BufReader::new(File::open(path)?))?;
    let geometry = reader.geometry();
    let lif = LifParams {
        dt: options.dt as f64,
        ..options.lif
    };
    let detector = EdgeDetector::new(options.kernel.clone(), lif)?;
    let kind = if scenario.is_cooperative() {
        RuntimeKind::cooperative(options.workers)?
    } else {
        RuntimeKind::buffered(options.buffer_size, options.workers)?
    };
    let source = paced_playback(reader, options.speed)?;
    let (tx, rx) = sync_channel(options.queue_depth.max(1));
    let mut sink = WindowSink {
        windower: Windower::new(options.dt)?,
        out: Emitter {
            tx: Some(tx),
            geometry,
            mode: options.mode,
            sparse: scenario.is_sparse(),
        },
        span: None,
    };
    let boundary = DeviceBoundary::open();

    let started = Instant::now();
    let (run, consumed) = thread::scope(|s| {
        let boundary = &boundary;
        let mode = options.mode;
        let consumer = thread::Builder::new()
            .name("aer-device".into())
            .spawn_scoped(s, move || consume(rx, boundary, detector, geometry, mode))
            .expect("spawn consumer thread");
        let run = run_pipeline(source, &[], &mut sink, kind);
        // Closes the channel on the error path too.
        sink.out.tx = None;
        (run, consumer.join().expect("consumer thread panicked"))
    });
    let wall_time = started.elapsed();
    let consumed = match (run, consumed) {
        (_, Err(e)) => return Err(e),
        (Err(e), _) => return Err(e),
        (Ok(_), Ok(c)) => c,
    };

    let ledger = boundary.ledger();
    let copy_time_ns = ledger.copy_time.as_nanos() as u64;
    let events = ledger.entries.iter().map(|e| e.frame_events).sum();
    Ok(FrameBenchReport {
        scenario,
        frames_processed: consumed.frames,
        bytes_copied: ledger.bytes_total(),
        copy_time_ns,
        copy_time_fraction: copy_time_ns as f64 / wall_time.as_nanos().max(1) as f64,
        wall_time_ns: wall_time.as_nanos() as u64,
        span_us: sink.span.map_or(0, |(a, b)| b - a),
        events,
        spikes: consumed.spikes,
        consumer_fps: if consumed.busy.is_zero() {
            0.0
        } else {
            consumed.frames as f64 / consumed.busy.as_secs_f64()
        },
        spike_digest: consumed.digest,
        ledger,
    })
}

pub fn write_frame_reports<W: Write>(out: W, reports: &[FrameBenchReport]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in reports {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_frame_reports<R: Read>(input: R) -> Result<Vec<FrameBenchReport>> {
    let mut r = csv::Reader::from_reader(input);
    Ok(r.deserialize().collect::<std::result::Result<_, _>>()?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::codec::write_file;
    use crate::event::synthetic_stream;
    use crate::frame::{dense_bytes, TransferPath};

    fn fixture(n: u64, rate: u64, g: Geometry) -> tempfile::NamedTempFile {
        let evs: Vec<Event> = synthetic_stream(5, n, g, rate).unwrap().collect();
        let mut f = tempfile::NamedTempFile::new().unwrap();
        write_file(&mut f, g, &evs).unwrap();
        f
    }

    #[test]
    fn scenario_names_roundtrip() {
        for id in ScenarioId::ALL {
            assert_eq!(id.name().parse::<ScenarioId>().unwrap(), id);
        }
        assert!("gpu".parse::<ScenarioId>().is_err());
    }

    #[test]
    fn scenarios_agree_and_respect_pacing() {
        let g = Geometry::new(32, 24).unwrap();
        // 20 000 events over 100 ms.
        let f = fixture(20_000, 200_000, g);
        let opts = FrameBenchOptions::default();
        let reports: Vec<FrameBenchReport> = ScenarioId::ALL
            .into_iter()
            .map(|s| run_frame_bench(f.path(), s, &opts).unwrap())
            .collect();
        for r in &reports {
            assert_eq!(r.spike_digest, reports[0].spike_digest, "{}", r.scenario);
            assert_eq!(r.frames_processed, 100);
            assert_eq!(r.events, 20_000);
            assert!(r.wall_time() >= Duration::from_micros(r.span_us), "{}", r.scenario);
            let path = if r.scenario.is_sparse() {
                TransferPath::Sparse
            } else {
                TransferPath::Dense
            };
            assert!(r.ledger.entries.iter().all(|e| e.path == path));
            if r.scenario.is_sparse() {
                assert_eq!(r.bytes_copied, 4 * 20_000);
            } else {
                assert_eq!(r.bytes_copied, 100 * dense_bytes(g));
            }
        }
    }

    #[test]
    fn report_csv_roundtrip() {
        let g = Geometry::new(8, 8).unwrap();
        let f = fixture(500, 100_000, g);
        let r = run_frame_bench(f.path(), ScenarioId::LockedSparse, &FrameBenchOptions::default()).unwrap();
        let mut buf = Vec::new();
        write_frame_reports(&mut buf, std::slice::from_ref(&r)).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with(
            "scenario,frames_processed,bytes_copied,copy_time_ns,copy_time_fraction,wall_time_ns,span_us,events,spikes,consumer_fps,spike_digest\n"
        ));
        let back = read_frame_reports(&buf[..]).unwrap();
        assert_eq!(back[0].spike_digest, r.spike_digest);
        assert_eq!(back[0].scenario, ScenarioId::LockedSparse);
    }

    #[test]
    fn missing_file_is_io_error() {
        let r = run_frame_bench(
            "/nonexistent/x.aerf",
            ScenarioId::LockedDense,
            &FrameBenchOptions::default(),
        );
        assert!(matches!(r, Err(Error::Io(_))));
    }
}
