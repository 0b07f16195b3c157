use std::fs::{self, File};
use std::io::{self, BufReader, BufWriter, Write};
use std::path::PathBuf;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;
use std::time::Duration;

use aerflow::codec::{read_file, FileWriter};
use aerflow::edge::{EdgeDetector, Kernel, LifParams};
use aerflow::frame::{AccumulationMode, Window, Windower};
use aerflow::net::{UdpSink, UdpSource};
use aerflow::sink::{FileSink, TextSink};
use aerflow::{run_pipeline, synthetic_stream, Event, Geometry, Result, RunReport, Sink};

use crate::args::{Input, Output, PipelineSpec};

type Source<'a> = Box<dyn Iterator<Item = Result<Event>> + Send + 'a>;

struct FrameOut {
    geometry: Geometry,
    mode: AccumulationMode,
    detector: Option<EdgeDetector>,
    csv: Box<dyn Write>,
    pgm_dir: Option<PathBuf>,
}

impl FrameOut {
    fn emit(&mut self, w: Window) -> Result<()> {
        let frame = w.to_frame(self.geometry, self.mode)?;
        write!(self.csv, "{},{},{},{}", w.index, w.start, w.end, frame.total())?;
        if let Some(det) = &mut self.detector {
            let spikes = det.step(&frame)?;
            write!(self.csv, ",{}", spikes.count())?;
            if let Some(dir) = &self.pgm_dir {
                let path = dir.join(format!("spikes_{:06}.pgm", w.index));
                spikes.write_pgm(BufWriter::new(File::create(path)?))?;
            }
        }
        writeln!(self.csv)?;
        Ok(())
    }
}

/// Bins events into windows and writes one CSV line per window:
/// `window_index,window_start,window_end,events[,spikes]`.
struct FramesSink {
    windower: Windower,
    out: FrameOut,
}

impl Sink for FramesSink {
    fn consume(&mut self, event: Event) -> Result<()> {
        let out = &mut self.out;
        self.windower.push(event, &mut |w| out.emit(w))
    }

    fn finish(&mut self) -> Result<()> {
        let out = &mut self.out;
        self.windower.finish(&mut |w| out.emit(w))?;
        self.out.csv.flush()?;
        Ok(())
    }
}

fn stdout_writer() -> Box<dyn Write> {
    Box::new(BufWriter::with_capacity(1 << 16, io::stdout().lock()))
}

fn open_sink(output: &Output, geometry: Geometry) -> Result<Box<dyn Sink>> {
    Ok(match output {
        Output::File(path) => {
            let writer = FileWriter::new(BufWriter::with_capacity(1 << 16, File::create(path)?), geometry)?;
            Box::new(FileSink::new(writer))
        }
        Output::Udp {
            target,
            max_words,
            flush_ms,
        } => Box::new(UdpSink::connect(target, *max_words, Duration::from_millis(*flush_ms))?),
        Output::Stdout => Box::new(TextSink::new(stdout_writer())),
        Output::Frames {
            dt,
            mode,
            detect,
            out,
            pgm_dir,
        } => {
            let detector = if *detect {
                let lif = LifParams {
                    dt: *dt as f64,
                    ..LifParams::default()
                };
                Some(EdgeDetector::new(Kernel::laplacian(), lif)?)
            } else {
                None
            };
            if let Some(dir) = pgm_dir {
                fs::create_dir_all(dir)?;
            }
            let mut csv: Box<dyn Write> = match out {
                Some(path) => Box::new(BufWriter::new(File::create(path)?)),
                None => stdout_writer(),
            };
            write!(csv, "window_index,window_start,window_end,events")?;
            writeln!(csv, "{}", if *detect { ",spikes" } else { "" })?;
            Box::new(FramesSink {
                windower: Windower::new(*dt)?,
                out: FrameOut {
                    geometry,
                    mode: *mode,
                    detector,
                    csv,
                    pgm_dir: pgm_dir.clone(),
                },
            })
        }
    })
}

fn until<'a>(stop: &Arc<AtomicBool>, source: Source<'a>) -> Source<'a> {
    let stop = Arc::clone(stop);
    Box::new(source.take_while(move |_| !stop.load(Ordering::Relaxed)))
}

/// Runs one pipeline. Raising `stop` ends the source early; the sink is
/// still finished so buffered output is written.
pub fn run(spec: &PipelineSpec, stop: &Arc<AtomicBool>) -> Result<RunReport> {
    let fallback = spec.geometry.unwrap_or(Geometry::DAVIS346);
    match &spec.input {
        Input::File(path) => {
            let reader = read_file(BufReader::with_capacity(1 << 16, File::open(path)?))?;
            let geometry = spec.geometry.unwrap_or(reader.geometry());
            let mut sink = open_sink(&spec.output, geometry)?;
            run_pipeline(until(stop, Box::new(reader)), &[], &mut *sink, spec.runtime)
        }
        Input::Synthetic { seed, events, rate } => {
            let source = synthetic_stream(*seed, *events, fallback, *rate)?.map(Ok);
            let mut sink = open_sink(&spec.output, fallback)?;
            run_pipeline(until(stop, Box::new(source)), &[], &mut *sink, spec.runtime)
        }
        Input::Udp {
            bind,
            timeout_ms,
            count,
        } => {
            let mut source = UdpSource::bind(bind, fallback)?.with_stop_flag(Arc::clone(stop));
            if let Some(ms) = timeout_ms {
                source = source.with_idle_timeout(Duration::from_millis(*ms));
            }
            if let Some(n) = count {
                source = source.with_max_events(*n);
            }
            let mut sink = open_sink(&spec.output, fallback)?;
            let report = run_pipeline(source.by_ref(), &[], &mut *sink, spec.runtime)?;
            let stats = source.close();
            eprintln!(
                "udp: {} datagrams, {} events, {} dropped outside {fallback}, {} trailing bytes",
                stats.datagrams, stats.events, stats.dropped, stats.trailing_bytes
            );
            Ok(report)
        }
    }
}
