//! Benchmark harness: pipeline throughput across runtimes, and the
//! four-scenario frame pipeline with transfer accounting.

mod frames;
pub mod plot;
mod throughput;

pub use frames::{
    read_frame_reports, run_frame_bench, write_frame_reports, FrameBenchOptions, FrameBenchReport, ScenarioId,
};
pub use throughput::{
    read_records, run_throughput, run_throughput_with, summarize, write_buffer_speedups, write_cells, write_records,
    write_speedups, BenchRecord, BufferSpeedup, CellStats, SpeedupRow, SpeedupTable, ThroughputConfig,
};
