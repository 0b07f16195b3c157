use std::sync::atomic::{AtomicU64, Ordering};

use aerflow::runtime::{filter, map, polarity_filter, FnStage};
use aerflow::sink::{ChecksumSink, CollectSink};
use aerflow::{
    make_event, run_pipeline, synthetic_stream, Error, Event, Geometry, Result, RuntimeKind, Sink, Stage, StageError,
};

fn kinds() -> Vec<RuntimeKind> {
    let mut v = vec![RuntimeKind::Baseline];
    for b in [1, 3, 256] {
        for w in [1, 2, 4] {
            v.push(RuntimeKind::buffered(b, w).unwrap());
        }
    }
    for w in [1, 2, 4] {
        v.push(RuntimeKind::cooperative(w).unwrap());
    }
    v
}

fn events(n: u64) -> Vec<Event> {
    synthetic_stream(9, n, Geometry::DAVIS346, 1_000_000).unwrap().collect()
}

fn collect(evs: &[Event], stages: &[Box<dyn Stage>], kind: RuntimeKind) -> (Vec<Event>, aerflow::RunReport) {
    let mut sink = CollectSink::default();
    let report = run_pipeline(evs.iter().copied().map(Ok), stages, &mut sink, kind).unwrap();
    (sink.events, report)
}

#[test]
fn every_kind_preserves_order_without_stages() {
    let evs = events(20_000);
    for kind in kinds() {
        let (out, report) = collect(&evs, &[], kind);
        assert_eq!(out, evs, "{kind}");
        assert_eq!((report.events_in, report.events_out), (20_000, 20_000), "{kind}");
    }
}

#[test]
fn every_kind_preserves_order_with_fan_out_and_filter() {
    let evs = events(5_000);
    let dup: Box<dyn Stage> = Box::new(FnStage::new(|e: Event, emit: &mut dyn FnMut(Event)| {
        emit(e);
        if e.x().is_multiple_of(3) {
            emit(e.with_t(e.t() + 1));
        }
        Ok(())
    }));
    let stages = vec![filter(|e| e.y() % 2 == 0), dup, map(|e| e.with_t(e.t() * 2))];
    let (reference, _) = collect(&evs, &stages, RuntimeKind::Baseline);
    let expected: Vec<Event> = evs
        .iter()
        .filter(|e| e.y() % 2 == 0)
        .flat_map(|&e| {
            let mut v = vec![e];
            if e.x() % 3 == 0 {
                v.push(e.with_t(e.t() + 1));
            }
            v
        })
        .map(|e| e.with_t(e.t() * 2))
        .collect();
    assert_eq!(reference, expected);
    for kind in kinds() {
        let (out, report) = collect(&evs, &stages, kind);
        assert_eq!(out, expected, "{kind}");
        assert_eq!(report.events_in, 5_000);
        assert_eq!(report.events_out, expected.len() as u64);
    }
}

#[test]
fn polarity_filter_counts() {
    let mut evs = Vec::new();
    for i in 0..100u64 {
        evs.push(make_event(1, 1, i % 5 < 2, i).unwrap());
    }
    assert_eq!(evs.iter().filter(|e| e.p()).count(), 40);
    for kind in kinds() {
        let (out, report) = collect(&evs, &[polarity_filter(true)], kind);
        assert_eq!(report.events_out, 40, "{kind}");
        assert!(out.iter().all(|e| e.p()));
    }
}

#[test]
fn million_events_match_oracle_checksum() {
    let evs = events(1_000_000);
    let mut oracle = 0u64;
    for e in &evs {
        oracle = oracle.wrapping_add(e.x() as u64 + e.y() as u64);
    }
    for kind in [
        RuntimeKind::Baseline,
        RuntimeKind::buffered(1024, 2).unwrap(),
        RuntimeKind::cooperative(2).unwrap(),
    ] {
        let mut sink = ChecksumSink::default();
        let r = run_pipeline(evs.iter().copied().map(Ok), &[], &mut sink, kind).unwrap();
        assert_eq!(sink.checksum.value(), oracle, "{kind}");
        assert_eq!(r.events_out, 1_000_000);
    }
}

#[test]
fn stage_error_reports_index_and_cause() {
    let evs = events(10_000);
    let bad: Box<dyn Stage> = Box::new(FnStage::new(|e: Event, emit: &mut dyn FnMut(Event)| {
        if e.t() >= 5_000 {
            return Err(StageError::new("boom"));
        }
        emit(e);
        Ok(())
    }));
    let stages = vec![map(|e| e), bad];
    for kind in kinds() {
        let mut sink = CollectSink::default();
        match run_pipeline(evs.iter().copied().map(Ok), &stages, &mut sink, kind) {
            Err(Error::Stage { index, cause }) => {
                assert_eq!(index, 1, "{kind}");
                assert_eq!(cause.0, "boom");
            }
            other => panic!("{kind}: {other:?}"),
        }
        // Whatever reached the sink is an in-order prefix.
        assert_eq!(sink.events[..], evs[..sink.events.len()], "{kind}");
    }
}

#[test]
fn source_error_aborts_run() {
    for kind in kinds() {
        let source = (0..10_000u64).map(|i| {
            if i == 7_000 {
                Err(Error::Stream("source failed".into()))
            } else {
                Ok(make_event(1, 2, true, i).unwrap())
            }
        });
        let mut sink = ChecksumSink::default();
        let res = run_pipeline(source, &[], &mut sink, kind);
        assert!(matches!(res, Err(Error::Stream(_))), "{kind}: {res:?}");
        assert!(sink.count <= 7_000);
    }
}

struct FailingSink {
    seen: u64,
    limit: u64,
}

impl Sink for FailingSink {
    fn consume(&mut self, _: Event) -> Result<()> {
        self.seen += 1;
        if self.seen > self.limit {
            return Err(Error::Sink("disk full".into()));
        }
        Ok(())
    }
}

#[test]
fn sink_error_aborts_run() {
    let evs = events(50_000);
    for kind in kinds() {
        let mut sink = FailingSink { seen: 0, limit: 1_000 };
        let res = run_pipeline(evs.iter().copied().map(Ok), &[], &mut sink, kind);
        assert!(matches!(res, Err(Error::Sink(_))), "{kind}: {res:?}");
        assert_eq!(sink.seen, 1_001);
    }
}

struct FinishCounter<'a>(&'a AtomicU64);

impl Sink for FinishCounter<'_> {
    fn consume(&mut self, _: Event) -> Result<()> {
        Ok(())
    }

    fn finish(&mut self) -> Result<()> {
        self.0.fetch_add(1, Ordering::Relaxed);
        Ok(())
    }
}

#[test]
fn finish_called_once_and_empty_source_works() {
    let n = AtomicU64::new(0);
    for kind in kinds() {
        let mut sink = FinishCounter(&n);
        let r = run_pipeline(std::iter::empty(), &[], &mut sink, kind).unwrap();
        assert_eq!((r.events_in, r.events_out), (0, 0));
    }
    assert_eq!(n.load(Ordering::Relaxed), kinds().len() as u64);
}

#[test]
fn invalid_kinds_rejected() {
    assert!(RuntimeKind::buffered(0, 1).is_err());
    assert!(RuntimeKind::buffered(8, 0).is_err());
    assert!(RuntimeKind::cooperative(0).is_err());
    let mut sink = ChecksumSink::default();
    let bad = RuntimeKind::Cooperative { workers: 0 };
    assert!(matches!(
        run_pipeline(std::iter::empty(), &[], &mut sink, bad),
        Err(Error::Parameter(_))
    ));
}

#[test]
fn slow_sink_applies_backpressure() {
    // A sink slower than the source must not lose events.
    struct Slow(Vec<Event>);
    impl Sink for Slow {
        fn consume(&mut self, e: Event) -> Result<()> {
            if self.0.len().is_multiple_of(500) {
                std::thread::sleep(std::time::Duration::from_millis(1));
            }
            self.0.push(e);
            Ok(())
        }
    }
    let evs = events(20_000);
    for kind in [
        RuntimeKind::buffered(16, 2).unwrap(),
        RuntimeKind::cooperative(2).unwrap(),
    ] {
        let mut sink = Slow(Vec::new());
        run_pipeline(evs.iter().copied().map(Ok), &[], &mut sink, kind).unwrap();
        assert_eq!(sink.0, evs, "{kind}");
    }
}
