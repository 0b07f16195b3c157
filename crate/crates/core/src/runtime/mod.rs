//! Pipeline execution.
//!
//! A pipeline is a source, an ordered list of [`Stage`]s and a [`Sink`].
//! Three runtimes execute it with the same observable result:
//!
//! * [`RuntimeKind::Baseline`]: one thread, direct calls, no synchronization.
//! * [`RuntimeKind::BufferedLocked`]: an I/O thread fills fixed-size buffers
//!   and publishes each full buffer to worker threads through a mutex and
//!   condition variables.
//! * [`RuntimeKind::Cooperative`]: every event is handed individually to
//!   stage tasks (`async` state machines) through lock-free rings. A task
//!   suspends when its ring is empty or full and is resumed by whichever
//!   executor thread picks it up.
//!
//! All kinds are lossless and preserve source order at the sink. The sink
//! always runs on the calling thread.

mod baseline;
mod buffered;
mod cooperative;
mod executor;
mod ring;
pub mod stage;

use std::fmt;
use std::time::{Duration, Instant};

use crate::error::{Error, Result, StageError};
use crate::event::Event;

pub use stage::{filter, map, polarity_filter, FnStage};

/// A per-event transformation with a uniform signature, so stages compose
/// in any order. `emit` may be called zero or more times.
pub trait Stage: Send + Sync {
    fn process(&self, event: Event, emit: &mut dyn FnMut(Event)) -> Result<(), StageError>;
}

/// Terminal consumer of a pipeline. Runs on the thread that called
/// [`run_pipeline`].
pub trait Sink {
    fn consume(&mut self, event: Event) -> Result<()>;

    /// Called once after the last event of a successful run.
    fn finish(&mut self) -> Result<()> {
        Ok(())
    }
}

impl<S: Sink + ?Sized> Sink for &mut S {
    fn consume(&mut self, event: Event) -> Result<()> {
        (**self).consume(event)
    }

    fn finish(&mut self) -> Result<()> {
        (**self).finish()
    }
}

impl<S: Sink + ?Sized> Sink for Box<S> {
    fn consume(&mut self, event: Event) -> Result<()> {
        (**self).consume(event)
    }

    fn finish(&mut self) -> Result<()> {
        (**self).finish()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum RuntimeKind {
    Baseline,
    BufferedLocked { buffer_size: usize, workers: usize },
    Cooperative { workers: usize },
}

impl RuntimeKind {
    pub fn buffered(buffer_size: usize, workers: usize) -> Result<Self> {
        if buffer_size == 0 {
            return Err(Error::Parameter("buffer size must be >= 1".into()));
        }
        if workers == 0 {
            return Err(Error::Parameter("workers must be >= 1".into()));
        }
        Ok(RuntimeKind::BufferedLocked { buffer_size, workers })
    }

    pub fn cooperative(workers: usize) -> Result<Self> {
        if workers == 0 {
            return Err(Error::Parameter("workers must be >= 1".into()));
        }
        Ok(RuntimeKind::Cooperative { workers })
    }

    /// Short name used in reports: `baseline`, `buffered_locked`, `cooperative`.
    pub fn name(&self) -> &'static str {
        match self {
            RuntimeKind::Baseline => "baseline",
            RuntimeKind::BufferedLocked { .. } => "buffered_locked",
            RuntimeKind::Cooperative { .. } => "cooperative",
        }
    }

    pub fn workers(&self) -> usize {
        match *self {
            RuntimeKind::Baseline => 1,
            RuntimeKind::BufferedLocked { workers, .. } | RuntimeKind::Cooperative { workers } => workers,
        }
    }

    pub fn buffer_size(&self) -> Option<usize> {
        match *self {
            RuntimeKind::BufferedLocked { buffer_size, .. } => Some(buffer_size),
            _ => None,
        }
    }

    fn validate(&self) -> Result<()> {
        match *self {
            RuntimeKind::Baseline => Ok(()),
            RuntimeKind::BufferedLocked { buffer_size, workers } => {
                RuntimeKind::buffered(buffer_size, workers).map(drop)
            }
            RuntimeKind::Cooperative { workers } => RuntimeKind::cooperative(workers).map(drop),
        }
    }
}

impl fmt::Display for RuntimeKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RuntimeKind::Baseline => f.write_str("baseline"),
            RuntimeKind::BufferedLocked { buffer_size, workers } => {
                write!(f, "buffered_locked(buffer={buffer_size}, workers={workers})")
            }
            RuntimeKind::Cooperative { workers } => write!(f, "cooperative(workers={workers})"),
        }
    }
}

/// Worker count used when none is given: available parallelism.
pub fn default_workers() -> usize {
    std::thread::available_parallelism().map_or(1, |n| n.get())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RunReport {
    pub events_in: u64,
    pub events_out: u64,
    pub wall_time: Duration,
}

/// Runs `source → stages → sink` to completion under `kind`.
///
/// A source error, stage error or sink error aborts the run; all worker
/// threads are joined before the error is returned. On success the sink's
/// [`Sink::finish`] has been called.
pub fn run_pipeline<I>(
    source: I,
    stages: &[Box<dyn Stage>],
    sink: &mut dyn Sink,
    kind: RuntimeKind,
) -> Result<RunReport>
where
    I: IntoIterator<Item = Result<Event>>,
    I::IntoIter: Send,
{
    kind.validate()?;
    let start = Instant::now();
    let (events_in, events_out) = match kind {
        RuntimeKind::Baseline => baseline::run(source.into_iter(), stages, sink)?,
        RuntimeKind::BufferedLocked { buffer_size, workers } => {
            buffered::run(source.into_iter(), stages, sink, buffer_size, workers)?
        }
        RuntimeKind::Cooperative { workers } => cooperative::run(source.into_iter(), stages, sink, workers)?,
    };
    sink.finish()?;
    Ok(RunReport {
        events_in,
        events_out,
        wall_time: start.elapsed(),
    })
}

/// Reusable scratch space for running one event through a stage chain.
#[derive(Default)]
pub(crate) struct Chain {
    cur: Vec<Event>,
    next: Vec<Event>,
}

impl Chain {
    /// Runs `event` through `stages`, appending outputs to `out` in order.
    pub(crate) fn apply(
        &mut self,
        stages: &[Box<dyn Stage>],
        event: Event,
        out: &mut Vec<Event>,
    ) -> Result<(), (usize, StageError)> {
        match stages {
            [] => {
                out.push(event);
                Ok(())
            }
            [only] => only.process(event, &mut |e| out.push(e)).map_err(|e| (0, e)),
            _ => {
                self.cur.clear();
                self.cur.push(event);
                for (i, stage) in stages.iter().enumerate() {
                    self.next.clear();
                    for &ev in &self.cur {
                        let next = &mut self.next;
                        stage.process(ev, &mut |e| next.push(e)).map_err(|e| (i, e))?;
                    }
                    std::mem::swap(&mut self.cur, &mut self.next);
                    if self.cur.is_empty() {
                        break;
                    }
                }
                out.extend_from_slice(&self.cur);
                Ok(())
            }
        }
    }
}

fn stage_error((index, cause): (usize, StageError)) -> Error {
    Error::Stage { index, cause }
}
