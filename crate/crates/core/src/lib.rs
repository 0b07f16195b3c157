//! Streaming toolkit for address-event representation (AER) data.
//!
//! Events flow from sources (files, UDP, synthetic generators) through
//! composable per-event stages into sinks, executed by one of three
//! interchangeable runtimes. Frames, the spiking edge detector and the
//! benchmark harness build on the same pipeline.

pub mod bench;
pub mod codec;
pub mod edge;
pub mod error;
pub mod event;
pub mod frame;
pub mod net;
pub mod runtime;
pub mod sink;

pub use error::{Error, Result, StageError};
pub use event::{checksum, make_event, synthetic_stream, Checksum, Event, Geometry};
pub use runtime::{run_pipeline, RunReport, RuntimeKind, Sink, Stage};
