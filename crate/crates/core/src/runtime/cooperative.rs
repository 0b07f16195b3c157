//! Cooperative runtime: per-event handoff between resumable tasks.
//!
//! The I/O thread deals events round-robin into one input ring per stage
//! task. Each stage task runs the stage chain on a single event and pushes
//! the results, tagged with an end-of-event marker, into its output ring.
//! The sink reads the output rings in the same round-robin order, which
//! restores source order without any lock on the per-event path.

use std::sync::Mutex;
use std::thread;

use super::executor::{block_on, BoxFuture, Executor};
use super::ring::{ring, Consumer, Producer};
use super::{stage_error, Chain, Sink, Stage};
use crate::error::{Error, Result};
use crate::event::Event;

const RING_CAPACITY: usize = 1024;

/// Stage output for one input event.
#[derive(Debug, Clone, Copy)]
enum Out {
    /// An output with more to follow for the same input.
    More(Event),
    /// The final output of an input.
    Last(Event),
    /// The input produced no output.
    Empty,
    /// The stage chain failed; the error is in the shared failure slot.
    Failed,
}

fn record(failure: &Mutex<Option<Error>>, err: Error) {
    failure.lock().unwrap().get_or_insert(err);
}

// The hot loops below try the non-suspending ring operations first and
// only build a future when a ring is empty or full.

async fn produce<I>(source: I, mut lanes: Vec<Producer<Event>>, failure: &Mutex<Option<Error>>) -> u64
where
    I: Iterator<Item = Result<Event>>,
{
    let width = lanes.len();
    let mut n = 0u64;
    let mut lane = 0usize;
    for ev in source {
        match ev {
            Ok(ev) => {
                if let Err(ev) = lanes[lane].try_push(ev) {
                    if lanes[lane].push(ev).await.is_err() {
                        break;
                    }
                }
                n += 1;
                lane += 1;
                if lane == width {
                    lane = 0;
                }
            }
            Err(e) => {
                record(failure, e);
                break;
            }
        }
    }
    n
}

async fn send(output: &mut Producer<Out>, out: Out) -> bool {
    match output.try_push(out) {
        Ok(()) => true,
        Err(out) => output.push(out).await.is_ok(),
    }
}

async fn stage_task(
    mut input: Consumer<Event>,
    mut output: Producer<Out>,
    stages: &[Box<dyn Stage>],
    failure: &Mutex<Option<Error>>,
) {
    let mut chain = Chain::default();
    let mut outs = Vec::new();
    loop {
        let ev = match input.try_pop() {
            Some(ev) => ev,
            None => match input.pop().await {
                Some(ev) => ev,
                None => return,
            },
        };
        if stages.is_empty() {
            if let Err(out) = output.try_push(Out::Last(ev)) {
                if output.push(out).await.is_err() {
                    return;
                }
            }
            continue;
        }
        outs.clear();
        if let Err(e) = chain.apply(stages, ev, &mut outs) {
            record(failure, stage_error(e));
            send(&mut output, Out::Failed).await;
            return;
        }
        let ok = match outs.split_last() {
            None => send(&mut output, Out::Empty).await,
            Some((&last, rest)) => {
                let mut ok = true;
                for &o in rest {
                    ok = send(&mut output, Out::More(o)).await;
                    if !ok {
                        break;
                    }
                }
                ok && send(&mut output, Out::Last(last)).await
            }
        };
        if !ok {
            return;
        }
    }
}

async fn drain(mut lanes: Vec<Consumer<Out>>, sink: &mut dyn Sink) -> Result<u64, Option<Error>> {
    let width = lanes.len();
    let mut lane = 0usize;
    let mut events_out = 0u64;
    'events: loop {
        loop {
            let out = match lanes[lane].try_pop() {
                Some(out) => out,
                None => match lanes[lane].pop().await {
                    Some(out) => out,
                    // No event was dealt to this lane: the source is finished.
                    None => break 'events,
                },
            };
            match out {
                Out::More(ev) => {
                    sink.consume(ev).map_err(Some)?;
                    events_out += 1;
                }
                Out::Last(ev) => {
                    sink.consume(ev).map_err(Some)?;
                    events_out += 1;
                    break;
                }
                Out::Empty => break,
                Out::Failed => return Err(None),
            }
        }
        lane += 1;
        if lane == width {
            lane = 0;
        }
    }
    Ok(events_out)
}

pub(super) fn run<I>(source: I, stages: &[Box<dyn Stage>], sink: &mut dyn Sink, workers: usize) -> Result<(u64, u64)>
where
    I: Iterator<Item = Result<Event>> + Send,
{
    let failure = Mutex::new(None);
    let failure = &failure;
    let mut in_tx = Vec::with_capacity(workers);
    let mut out_rx = Vec::with_capacity(workers);
    let mut tasks: Vec<BoxFuture<'_>> = Vec::with_capacity(workers);
    for _ in 0..workers {
        let (itx, irx) = ring::<Event>(RING_CAPACITY);
        let (otx, orx) = ring::<Out>(RING_CAPACITY);
        in_tx.push(itx);
        out_rx.push(orx);
        tasks.push(Box::pin(stage_task(irx, otx, stages, failure)));
    }
    let exec = Executor::new(tasks, workers);
    let exec = &exec;

    let (events_in, drained) = thread::scope(|s| {
        for i in 0..workers {
            thread::Builder::new()
                .name(format!("aer-coop-{i}"))
                .spawn_scoped(s, move || exec.work())
                .expect("spawn executor thread");
        }
        let producer = thread::Builder::new()
            .name("aer-io".into())
            .spawn_scoped(s, move || block_on(produce(source, in_tx, failure)))
            .expect("spawn I/O thread");
        // Dropping the output lanes on return (including early error
        // returns) closes them, which unwinds the stage tasks and producer.
        let drained = block_on(drain(out_rx, sink));
        (producer.join().expect("I/O thread panicked"), drained)
    });

    let slot = failure.lock().unwrap().take();
    match (drained, slot) {
        (Err(Some(sink_err)), _) => Err(sink_err),
        (_, Some(err)) => Err(err),
        (Err(None), None) => Err(Error::State("stage task failed without an error".into())),
        (Ok(events_out), None) => Ok((events_in, events_out)),
    }
}
