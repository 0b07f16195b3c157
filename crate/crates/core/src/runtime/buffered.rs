//! Lock-based runtime: an I/O thread fills fixed-size buffers and publishes
//! each full buffer under a mutex; workers take whole buffers, run the
//! stages, and hand results to the sink in sequence order.

use std::collections::{BTreeMap, VecDeque};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::{Condvar, Mutex};
use std::thread;

use super::{stage_error, Chain, Sink, Stage};
use crate::error::{Error, Result};
use crate::event::Event;

struct InQueue {
    bufs: VecDeque<(u64, Vec<Event>)>,
    closed: bool,
    /// Published buffers the sink has not yet drained.
    in_flight: usize,
}

struct OutQueue {
    done: BTreeMap<u64, Vec<Event>>,
    /// Number of buffers published, known once the source is exhausted.
    total: Option<u64>,
}

struct Shared {
    input: Mutex<InQueue>,
    in_ready: Condvar,
    in_space: Condvar,
    output: Mutex<OutQueue>,
    out_ready: Condvar,
    pool: Mutex<Vec<Vec<Event>>>,
    abort: AtomicBool,
    failure: Mutex<Option<Error>>,
    max_in_flight: usize,
    buffer_size: usize,
}

impl Shared {
    fn fail(&self, err: Error) {
        self.failure.lock().unwrap().get_or_insert(err);
        self.abort.store(true, Ordering::SeqCst);
        // Take each lock before notifying so no waiter misses the flag.
        drop(self.input.lock().unwrap());
        self.in_ready.notify_all();
        self.in_space.notify_all();
        drop(self.output.lock().unwrap());
        self.out_ready.notify_all();
    }

    fn aborted(&self) -> bool {
        self.abort.load(Ordering::SeqCst)
    }

    fn take_buffer(&self) -> Vec<Event> {
        self.pool
            .lock()
            .unwrap()
            .pop()
            .unwrap_or_else(|| Vec::with_capacity(self.buffer_size))
    }

    fn recycle(&self, mut buf: Vec<Event>) {
        buf.clear();
        self.pool.lock().unwrap().push(buf);
    }

    fn publish(&self, seq: u64, buf: Vec<Event>) -> bool {
        let mut q = self.input.lock().unwrap();
        while q.in_flight >= self.max_in_flight && !self.aborted() {
            q = self.in_space.wait(q).unwrap();
        }
        if self.aborted() {
            return false;
        }
        q.bufs.push_back((seq, buf));
        q.in_flight += 1;
        drop(q);
        self.in_ready.notify_one();
        true
    }

    fn produce(&self, source: impl Iterator<Item = Result<Event>>) -> u64 {
        let mut seq = 0u64;
        let mut events = 0u64;
        let mut buf = self.take_buffer();
        for ev in source {
            match ev {
                Ok(ev) => {
                    buf.push(ev);
                    events += 1;
                    if buf.len() == self.buffer_size {
                        let full = std::mem::replace(&mut buf, self.take_buffer());
                        if !self.publish(seq, full) {
                            return events;
                        }
                        seq += 1;
                    }
                }
                Err(e) => {
                    self.fail(e);
                    return events;
                }
            }
        }
        // End of stream: the partial buffer is flushed, never dropped.
        if !buf.is_empty() {
            if !self.publish(seq, buf) {
                return events;
            }
            seq += 1;
        }
        self.input.lock().unwrap().closed = true;
        self.in_ready.notify_all();
        self.output.lock().unwrap().total = Some(seq);
        self.out_ready.notify_all();
        events
    }

    fn work(&self, stages: &[Box<dyn Stage>]) {
        let mut chain = Chain::default();
        loop {
            let (seq, buf) = {
                let mut q = self.input.lock().unwrap();
                loop {
                    if self.aborted() {
                        return;
                    }
                    if let Some(item) = q.bufs.pop_front() {
                        break item;
                    }
                    if q.closed {
                        return;
                    }
                    q = self.in_ready.wait(q).unwrap();
                }
            };
            let out = if stages.is_empty() {
                buf
            } else {
                let mut out = self.take_buffer();
                for &ev in &buf {
                    if let Err(e) = chain.apply(stages, ev, &mut out) {
                        self.fail(stage_error(e));
                        return;
                    }
                }
                self.recycle(buf);
                out
            };
            self.output.lock().unwrap().done.insert(seq, out);
            self.out_ready.notify_one();
        }
    }

    fn drain(&self, sink: &mut dyn Sink) -> u64 {
        let mut next = 0u64;
        let mut events_out = 0u64;
        loop {
            let buf = {
                let mut q = self.output.lock().unwrap();
                loop {
                    if self.aborted() {
                        return events_out;
                    }
                    if let Some(buf) = q.done.remove(&next) {
                        break buf;
                    }
                    if q.total == Some(next) {
                        return events_out;
                    }
                    q = self.out_ready.wait(q).unwrap();
                }
            };
            for &ev in &buf {
                if let Err(e) = sink.consume(ev) {
                    self.fail(e);
                    return events_out;
                }
            }
            events_out += buf.len() as u64;
            self.recycle(buf);
            next += 1;
            self.input.lock().unwrap().in_flight -= 1;
            self.in_space.notify_one();
        }
    }
}

pub(super) fn run<I>(
    source: I,
    stages: &[Box<dyn Stage>],
    sink: &mut dyn Sink,
    buffer_size: usize,
    workers: usize,
) -> Result<(u64, u64)>
where
    I: Iterator<Item = Result<Event>> + Send,
{
    let shared = Shared {
        input: Mutex::new(InQueue {
            bufs: VecDeque::new(),
            closed: false,
            in_flight: 0,
        }),
        in_ready: Condvar::new(),
        in_space: Condvar::new(),
        output: Mutex::new(OutQueue {
            done: BTreeMap::new(),
            total: None,
        }),
        out_ready: Condvar::new(),
        pool: Mutex::new(Vec::new()),
        abort: AtomicBool::new(false),
        failure: Mutex::new(None),
        max_in_flight: 2 * workers + 2,
        buffer_size,
    };
    let shared = &shared;
    let (events_in, events_out) = thread::scope(|s| {
        let producer = thread::Builder::new()
            .name("aer-io".into())
            .spawn_scoped(s, move || shared.produce(source))
            .expect("spawn I/O thread");
        for i in 0..workers {
            thread::Builder::new()
                .name(format!("aer-worker-{i}"))
                .spawn_scoped(s, move || shared.work(stages))
                .expect("spawn worker thread");
        }
        let out = shared.drain(sink);
        (producer.join().expect("I/O thread panicked"), out)
    });
    if let Some(err) = shared.failure.lock().unwrap().take() {
        return Err(err);
    }
    Ok((events_in, events_out))
}
