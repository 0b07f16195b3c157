use std::fs::{self, File};
use std::io::{BufReader, BufWriter};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};

use aerflow::bench::{
    plot, read_frame_reports, read_records, run_frame_bench, run_throughput_with, summarize, write_buffer_speedups,
    write_cells, write_frame_reports, write_records, write_speedups, BenchRecord, FrameBenchOptions, ScenarioId,
    ThroughputConfig,
};
use aerflow::frame::AccumulationMode;
use aerflow::{Error, Result};

#[derive(Parser, Debug)]
#[command(name = "aerflow bench", about = "Runtime throughput and frame-pipeline benchmarks")]
pub struct BenchCli {
    #[command(subcommand)]
    command: BenchCommand,
}

#[derive(Subcommand, Debug)]
enum BenchCommand {
    /// Time the checksum pipeline under every runtime kind.
    Throughput(ThroughputArgs),
    /// Play a file back through the four transfer scenarios.
    Frames(FramesArgs),
    /// Render SVG charts from benchmark CSVs.
    Plot(PlotArgs),
}

#[derive(Args, Debug)]
struct ThroughputArgs {
    /// Event counts, comma separated.
    #[arg(long, value_delimiter = ',', default_values_t = [1u64 << 16, 1 << 18, 1 << 20, 1 << 22])]
    events: Vec<u64>,
    #[arg(long, value_delimiter = ',', default_values_t = [1usize << 8, 1 << 10, 1 << 12])]
    buffers: Vec<usize>,
    #[arg(long, value_delimiter = ',', default_values_t = [1usize, 2, 4])]
    workers: Vec<usize>,
    #[arg(long, default_value_t = 128)]
    repetitions: u32,
    #[arg(long, default_value_t = 42)]
    seed: u64,
    /// Directory for records.csv, cells.csv, speedups.csv and buffer_speedups.csv.
    #[arg(long, default_value = ".")]
    out_dir: PathBuf,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum ScenarioArg {
    LockedDense,
    CooperativeDense,
    LockedSparse,
    CooperativeSparse,
    All,
}

#[derive(Args, Debug)]
struct FramesArgs {
    /// AERF input file.
    #[arg(long)]
    file: PathBuf,
    #[arg(long, value_enum, default_value = "all")]
    scenario: ScenarioArg,
    /// Window length in microseconds.
    #[arg(long, default_value_t = aerflow::frame::DEFAULT_DT_US)]
    dt: u64,
    /// count or binary.
    #[arg(long, default_value = "count")]
    mode: AccumulationMode,
    /// Playback speed relative to recorded time.
    #[arg(long, default_value_t = 1.0)]
    speed: f64,
    /// Buffer size of the locked scenarios.
    #[arg(long, default_value_t = 1 << 10)]
    buffer: usize,
    #[arg(long, default_value_t = 1)]
    workers: usize,
    /// Report CSV; printed to stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Directory for one per-copy ledger CSV per scenario.
    #[arg(long)]
    ledger_dir: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct PlotArgs {
    /// records.csv from `bench throughput`.
    #[arg(long)]
    throughput: Option<PathBuf>,
    /// Report CSV from `bench frames`.
    #[arg(long)]
    frames: Option<PathBuf>,
    #[arg(long, default_value = ".")]
    out_dir: PathBuf,
}

pub fn run(cli: BenchCli) -> Result<()> {
    match cli.command {
        BenchCommand::Throughput(a) => throughput(a),
        BenchCommand::Frames(a) => frames(a),
        BenchCommand::Plot(a) => plot_charts(a),
    }
}

fn create(dir: &Path, name: &str) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(dir.join(name))?))
}

fn throughput(a: ThroughputArgs) -> Result<()> {
    let config = ThroughputConfig {
        event_counts: a.events,
        buffer_sizes: a.buffers,
        worker_counts: a.workers,
        repetitions: a.repetitions,
        seed: a.seed,
    };
    config.validate()?;
    fs::create_dir_all(&a.out_dir)?;
    let records = run_throughput_with(&config, &mut |cell: &[BenchRecord]| {
        if let Some(r) = cell.first() {
            let mean = cell.iter().map(|r| r.wall_time_ns as f64).sum::<f64>() / cell.len() as f64;
            let buffer = r.buffer_size.map_or(String::new(), |b| format!(" buffer={b}"));
            eprintln!(
                "{}{buffer} workers={} n={}: {:.3} ms",
                r.runtime_kind,
                r.workers,
                r.event_count,
                mean / 1e6
            );
        }
    })?;
    let table = summarize(&records)?;
    write_records(create(&a.out_dir, "records.csv")?, &records)?;
    write_cells(create(&a.out_dir, "cells.csv")?, &table)?;
    write_speedups(create(&a.out_dir, "speedups.csv")?, &table)?;
    write_buffer_speedups(create(&a.out_dir, "buffer_speedups.csv")?, &table)?;
    println!("event_count workers speedup  (min .. max)");
    for r in &table.rows {
        println!(
            "{:>11} {:>7} {:>7.2}  ({:.2} .. {:.2})",
            r.event_count, r.workers, r.speedup, r.speedup_min, r.speedup_max
        );
    }
    Ok(())
}

fn frames(a: FramesArgs) -> Result<()> {
    let options = FrameBenchOptions {
        dt: a.dt,
        mode: a.mode,
        speed: a.speed,
        buffer_size: a.buffer,
        workers: a.workers,
        ..FrameBenchOptions::default()
    };
    let scenarios: Vec<ScenarioId> = match a.scenario {
        ScenarioArg::LockedDense => vec![ScenarioId::LockedDense],
        ScenarioArg::CooperativeDense => vec![ScenarioId::CooperativeDense],
        ScenarioArg::LockedSparse => vec![ScenarioId::LockedSparse],
        ScenarioArg::CooperativeSparse => vec![ScenarioId::CooperativeSparse],
        ScenarioArg::All => ScenarioId::ALL.to_vec(),
    };
    if let Some(dir) = &a.ledger_dir {
        fs::create_dir_all(dir)?;
    }
    let mut reports = Vec::new();
    for s in scenarios {
        let r = run_frame_bench(&a.file, s, &options)?;
        eprintln!(
            "{s}: {} frames, {} bytes copied, {:.2} s wall, {:.0} frames/s consumer",
            r.frames_processed,
            r.bytes_copied,
            r.wall_time().as_secs_f64(),
            r.consumer_fps
        );
        if let Some(dir) = &a.ledger_dir {
            r.ledger.write_csv(create(dir, &format!("ledger_{s}.csv"))?)?;
        }
        reports.push(r);
    }
    match &a.out {
        Some(path) => write_frame_reports(BufWriter::new(File::create(path)?), &reports),
        None => write_frame_reports(std::io::stdout().lock(), &reports),
    }
}

fn plot_charts(a: PlotArgs) -> Result<()> {
    if a.throughput.is_none() && a.frames.is_none() {
        return Err(Error::Parameter("give --throughput and/or --frames".into()));
    }
    fs::create_dir_all(&a.out_dir)?;
    let mut written = Vec::new();
    let mut save = |name: String, svg: String| -> Result<()> {
        let path = a.out_dir.join(&name);
        fs::write(&path, svg)?;
        written.push(path);
        Ok(())
    };
    if let Some(path) = &a.throughput {
        let records = read_records(BufReader::new(File::open(path)?))?;
        let table = summarize(&records)?;
        save("speedup.svg".into(), plot::speedup_chart(&table))?;
        let mut pairs: Vec<(usize, usize)> = table
            .cells
            .iter()
            .filter_map(|c| c.buffer_size.map(|b| (c.workers, b)))
            .collect();
        pairs.sort_unstable();
        pairs.dedup();
        for (w, b) in pairs {
            save(format!("runtime_w{w}_b{b}.svg"), plot::runtime_chart(&table, w, b))?;
        }
    }
    if let Some(path) = &a.frames {
        let reports = read_frame_reports(BufReader::new(File::open(path)?))?;
        let (bytes, fps) = plot::frame_charts(&reports);
        save("frames_bytes.svg".into(), bytes)?;
        save("frames_fps.svg".into(), fps)?;
    }
    for p in written {
        println!("{}", p.display());
    }
    Ok(())
}
