use std::collections::{BTreeMap, BTreeSet};
use std::io::{Read, Write};
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::event::{checksum, synthetic_stream, Event, Geometry};
use crate::runtime::{run_pipeline, RuntimeKind};
use crate::sink::ChecksumSink;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ThroughputConfig {
    pub event_counts: Vec<u64>,
    pub buffer_sizes: Vec<usize>,
    pub worker_counts: Vec<usize>,
    pub repetitions: u32,
    pub seed: u64,
}

impl Default for ThroughputConfig {
    fn default() -> Self {
        ThroughputConfig {
            event_counts: vec![1 << 16, 1 << 18, 1 << 20, 1 << 22],
            buffer_sizes: vec![1 << 8, 1 << 10, 1 << 12],
            worker_counts: vec![1, 2, 4],
            repetitions: 128,
            seed: 42,
        }
    }
}

impl ThroughputConfig {
    pub fn validate(&self) -> Result<()> {
        if self.repetitions == 0 {
            return Err(Error::Parameter("repetitions must be >= 1".into()));
        }
        if self.event_counts.is_empty() || self.buffer_sizes.is_empty() || self.worker_counts.is_empty() {
            return Err(Error::Parameter(
                "event counts, buffer sizes and worker counts must be non-empty".into(),
            ));
        }
        if self.event_counts.contains(&0) || self.buffer_sizes.contains(&0) || self.worker_counts.contains(&0) {
            return Err(Error::Parameter(
                "event counts, buffer sizes and worker counts must be >= 1".into(),
            ));
        }
        Ok(())
    }

    /// Kinds run per event count. Cooperative runs ignore buffer sizes and
    /// are run once per worker count.
    fn kinds(&self) -> Vec<RuntimeKind> {
        let mut kinds = vec![RuntimeKind::Baseline];
        for &b in &self.buffer_sizes {
            for &w in &self.worker_counts {
                kinds.push(RuntimeKind::BufferedLocked {
                    buffer_size: b,
                    workers: w,
                });
            }
        }
        for &w in &self.worker_counts {
            kinds.push(RuntimeKind::Cooperative { workers: w });
        }
        kinds
    }
}

/// One timed run. CSV columns, in order: `runtime_kind, buffer_size,
/// workers, event_count, repetition_index, wall_time_ns, checksum,
/// checksum_ok`. `buffer_size` is empty for baseline and cooperative runs.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BenchRecord {
    pub runtime_kind: String,
    pub buffer_size: Option<usize>,
    pub workers: usize,
    pub event_count: u64,
    pub repetition_index: u32,
    pub wall_time_ns: u64,
    pub checksum: u64,
    pub checksum_ok: bool,
}

fn describe(kind: &RuntimeKind, n: u64) -> String {
    format!("{kind} n={n}")
}

fn time_run(events: &[Event], kind: RuntimeKind, oracle: u64) -> Result<(u64, u64)> {
    let mut sink = ChecksumSink::default();
    let started = Instant::now();
    run_pipeline(events.iter().copied().map(Ok), &[], &mut sink, kind)?;
    let ns = started.elapsed().as_nanos() as u64;
    let got = sink.checksum.value();
    if got != oracle || sink.count != events.len() as u64 {
        return Err(Error::ChecksumMismatch {
            cell: describe(&kind, events.len() as u64),
            expected: oracle,
            actual: got,
        });
    }
    Ok((ns, got))
}

pub fn run_throughput(config: &ThroughputConfig) -> Result<Vec<BenchRecord>> {
    run_throughput_with(config, &mut |_| {})
}

/// Runs every cell sequentially. `progress` is called with the records of
/// each finished cell.
pub fn run_throughput_with(
    config: &ThroughputConfig,
    progress: &mut dyn FnMut(&[BenchRecord]),
) -> Result<Vec<BenchRecord>> {
    config.validate()?;
    let kinds = config.kinds();
    let mut records = Vec::new();
    for &n in &config.event_counts {
        let events: Vec<Event> = synthetic_stream(config.seed, n, Geometry::DAVIS346, 1_000_000)?.collect();
        let oracle = checksum(&events).value();
        for kind in &kinds {
            // Warm-up, not recorded.
            time_run(&events, *kind, oracle)?;
            let first = records.len();
            for rep in 0..config.repetitions {
                let (wall_time_ns, sum) = time_run(&events, *kind, oracle)?;
                records.push(BenchRecord {
                    runtime_kind: kind.name().to_string(),
                    buffer_size: kind.buffer_size(),
                    workers: kind.workers(),
                    event_count: n,
                    repetition_index: rep,
                    wall_time_ns,
                    checksum: sum,
                    checksum_ok: sum == oracle,
                });
            }
            progress(&records[first..]);
        }
    }
    Ok(records)
}

/// Aggregate of one `(kind, buffer_size, workers, event_count)` cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellStats {
    pub runtime_kind: String,
    pub buffer_size: Option<usize>,
    pub workers: usize,
    pub event_count: u64,
    pub repetitions: usize,
    pub mean_ns: f64,
    pub min_ns: u64,
    pub max_ns: u64,
}

/// Cooperative speedup over the buffered runtime for one
/// `(event_count, workers)` pair. `speedup` uses the buffered mean averaged
/// over buffer sizes; `speedup_min` and `speedup_max` use the slowest and
/// fastest buffer size's mean.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpeedupRow {
    pub event_count: u64,
    pub workers: usize,
    pub buffered_mean_ns: f64,
    pub cooperative_mean_ns: f64,
    pub speedup: f64,
    pub speedup_min: f64,
    pub speedup_max: f64,
}

/// Cooperative speedup over one buffer size.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BufferSpeedup {
    pub event_count: u64,
    pub workers: usize,
    pub buffer_size: usize,
    pub buffered_mean_ns: f64,
    pub cooperative_mean_ns: f64,
    pub speedup: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct SpeedupTable {
    pub cells: Vec<CellStats>,
    pub rows: Vec<SpeedupRow>,
    pub by_buffer: Vec<BufferSpeedup>,
}

impl SpeedupTable {
    pub fn cell(&self, kind: &str, buffer_size: Option<usize>, workers: usize, event_count: u64) -> Option<&CellStats> {
        self.cells.iter().find(|c| {
            c.runtime_kind == kind
                && c.buffer_size == buffer_size
                && c.workers == workers
                && c.event_count == event_count
        })
    }
}

type CellKey = (String, Option<usize>, usize, u64);

pub fn summarize(records: &[BenchRecord]) -> Result<SpeedupTable> {
    let mut groups: BTreeMap<CellKey, Vec<u64>> = BTreeMap::new();
    for r in records {
        groups
            .entry((r.runtime_kind.clone(), r.buffer_size, r.workers, r.event_count))
            .or_default()
            .push(r.wall_time_ns);
    }
    let cells: Vec<CellStats> = groups
        .iter()
        .map(|((kind, buffer_size, workers, n), times)| CellStats {
            runtime_kind: kind.clone(),
            buffer_size: *buffer_size,
            workers: *workers,
            event_count: *n,
            repetitions: times.len(),
            mean_ns: times.iter().map(|&t| t as f64).sum::<f64>() / times.len() as f64,
            min_ns: *times.iter().min().unwrap(),
            max_ns: *times.iter().max().unwrap(),
        })
        .collect();

    let buffered = RuntimeKind::BufferedLocked {
        buffer_size: 1,
        workers: 1,
    }
    .name();
    let cooperative = RuntimeKind::Cooperative { workers: 1 }.name();
    let buffer_sizes: BTreeSet<usize> = cells
        .iter()
        .filter(|c| c.runtime_kind == buffered)
        .filter_map(|c| c.buffer_size)
        .collect();
    let pairs: BTreeSet<(u64, usize)> = cells
        .iter()
        .filter(|c| c.runtime_kind == buffered || c.runtime_kind == cooperative)
        .map(|c| (c.event_count, c.workers))
        .collect();

    let find = |kind: &str, b: Option<usize>, w: usize, n: u64| {
        cells
            .iter()
            .find(|c| c.runtime_kind == kind && c.buffer_size == b && c.workers == w && c.event_count == n)
    };
    let mut missing = Vec::new();
    let mut rows = Vec::new();
    let mut by_buffer = Vec::new();
    for &(n, w) in &pairs {
        let coop = find(cooperative, None, w, n);
        if coop.is_none() {
            missing.push(format!("{cooperative} workers={w} n={n}"));
        }
        let mut means = Vec::new();
        for &b in &buffer_sizes {
            match find(buffered, Some(b), w, n) {
                Some(c) => means.push((b, c.mean_ns)),
                None => missing.push(format!("{buffered} buffer={b} workers={w} n={n}")),
            }
        }
        if means.is_empty() && buffer_sizes.is_empty() {
            missing.push(format!("{buffered} workers={w} n={n}"));
        }
        let Some(coop) = coop else { continue };
        if means.len() != buffer_sizes.len() || means.is_empty() {
            continue;
        }
        let c = coop.mean_ns;
        let mean = means.iter().map(|m| m.1).sum::<f64>() / means.len() as f64;
        let lo = means.iter().map(|m| m.1).fold(f64::INFINITY, f64::min);
        let hi = means.iter().map(|m| m.1).fold(f64::NEG_INFINITY, f64::max);
        rows.push(SpeedupRow {
            event_count: n,
            workers: w,
            buffered_mean_ns: mean,
            cooperative_mean_ns: c,
            speedup: mean / c,
            speedup_min: lo / c,
            speedup_max: hi / c,
        });
        for (b, m) in means {
            by_buffer.push(BufferSpeedup {
                event_count: n,
                workers: w,
                buffer_size: b,
                buffered_mean_ns: m,
                cooperative_mean_ns: c,
                speedup: m / c,
            });
        }
    }
    if !missing.is_empty() {
        return Err(Error::Aggregation { missing });
    }
    if rows.is_empty() {
        return Err(Error::Aggregation {
            missing: vec![format!("no {buffered}/{cooperative} cell pair")],
        });
    }
    Ok(SpeedupTable { cells, rows, by_buffer })
}

fn write_csv<W: Write, T: Serialize>(out: W, rows: &[T]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_records<W: Write>(out: W, records: &[BenchRecord]) -> Result<()> {
    write_csv(out, records)
}

pub fn read_records<R: Read>(input: R) -> Result<Vec<BenchRecord>> {
    let mut r = csv::Reader::from_reader(input);
    Ok(r.deserialize().collect::<std::result::Result<_, _>>()?)
}

/// Columns: `runtime_kind, buffer_size, workers, event_count, repetitions,
/// mean_ns, min_ns, max_ns`.
pub fn write_cells<W: Write>(out: W, table: &SpeedupTable) -> Result<()> {
    write_csv(out, &table.cells)
}

/// Columns: `event_count, workers, buffered_mean_ns, cooperative_mean_ns,
/// speedup, speedup_min, speedup_max`.
pub fn write_speedups<W: Write>(out: W, table: &SpeedupTable) -> Result<()> {
    write_csv(out, &table.rows)
}

/// Columns: `event_count, workers, buffer_size, buffered_mean_ns,
/// cooperative_mean_ns, speedup`.
pub fn write_buffer_speedups<W: Write>(out: W, table: &SpeedupTable) -> Result<()> {
    write_csv(out, &table.by_buffer)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rec(kind: &str, b: Option<usize>, w: usize, n: u64, ns: u64) -> BenchRecord {
        BenchRecord {
            runtime_kind: kind.into(),
            buffer_size: b,
            workers: w,
            event_count: n,
            repetition_index: 0,
            wall_time_ns: ns,
            checksum: 0,
            checksum_ok: true,
        }
    }

    #[test]
    fn small_config_records() {
        let cfg = ThroughputConfig {
            event_counts: vec![1000],
            buffer_sizes: vec![64],
            worker_counts: vec![2],
            repetitions: 2,
            seed: 3,
        };
        let recs = run_throughput(&cfg).unwrap();
        for kind in ["baseline", "buffered_locked", "cooperative"] {
            let n = recs.iter().filter(|r| r.runtime_kind == kind).count();
            assert_eq!(n, 2, "{kind}");
        }
        assert!(recs.iter().all(|r| r.checksum_ok));
        assert!(recs
            .iter()
            .all(|r| r.buffer_size.is_some() == (r.runtime_kind == "buffered_locked")));
        assert!(recs
            .iter()
            .filter(|r| r.runtime_kind == "baseline")
            .all(|r| r.workers == 1));
    }

    #[test]
    fn config_validation() {
        let cfg = ThroughputConfig {
            repetitions: 0,
            ..ThroughputConfig::default()
        };
        assert!(cfg.validate().is_err());
        let cfg = ThroughputConfig {
            buffer_sizes: vec![0],
            ..ThroughputConfig::default()
        };
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn equal_means_give_unit_speedup() {
        let recs = [
            rec("buffered_locked", Some(8), 1, 10, 100),
            rec("cooperative", None, 1, 10, 100),
        ];
        let t = summarize(&recs).unwrap();
        assert_eq!(t.rows[0].speedup, 1.0);
    }

    #[test]
    fn double_buffered_time_gives_speedup_two() {
        let recs = [
            rec("buffered_locked", Some(8), 1, 10, 200),
            rec("cooperative", None, 1, 10, 100),
        ];
        assert_eq!(summarize(&recs).unwrap().rows[0].speedup, 2.0);
    }

    #[test]
    fn missing_cells_are_listed() {
        let recs = [
            rec("buffered_locked", Some(8), 1, 10, 200),
            rec("buffered_locked", Some(16), 2, 10, 200),
            rec("cooperative", None, 1, 10, 100),
        ];
        match summarize(&recs) {
            Err(Error::Aggregation { missing }) => {
                assert!(
                    missing.contains(&"buffered_locked buffer=16 workers=1 n=10".to_string()),
                    "{missing:?}"
                );
                assert!(
                    missing.contains(&"cooperative workers=2 n=10".to_string()),
                    "{missing:?}"
                );
                assert!(
                    missing.contains(&"buffered_locked buffer=8 workers=2 n=10".to_string()),
                    "{missing:?}"
                );
            }
            other => panic!("{other:?}"),
        }
        assert!(matches!(summarize(&[]), Err(Error::Aggregation { .. })));
        assert!(matches!(
            summarize(&[rec("baseline", None, 1, 10, 5)]),
            Err(Error::Aggregation { .. })
        ));
    }

    #[test]
    fn records_csv_roundtrip() {
        let recs = vec![
            rec("baseline", None, 1, 10, 5),
            rec("buffered_locked", Some(256), 4, 10, 7),
        ];
        let mut buf = Vec::new();
        write_records(&mut buf, &recs).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with(
            "runtime_kind,buffer_size,workers,event_count,repetition_index,wall_time_ns,checksum,checksum_ok\n"
        ));
        assert!(text.contains("baseline,,1,10,0,5,0,true"));
        assert_eq!(read_records(&buf[..]).unwrap(), recs);
    }
}
