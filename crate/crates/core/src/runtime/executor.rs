//! A small work-stealing executor for a fixed set of borrowed tasks.
//!
//! Tasks are `async` state machines: a suspended task keeps its state in
//! its boxed future and can be resumed by any executor thread. Wakers carry
//! only a task index, so they stay valid without borrowing the futures.

use std::future::Future;
use std::pin::{pin, Pin};
use std::sync::atomic::{fence, AtomicU8, AtomicUsize, Ordering};
use std::sync::{Arc, Condvar, Mutex};
use std::task::{Context, Poll, Wake, Waker};
use std::thread::{self, Thread};
use std::time::Duration;

use crossbeam_deque::{Injector, Steal, Stealer, Worker};

pub(crate) type BoxFuture<'a> = Pin<Box<dyn Future<Output = ()> + Send + 'a>>;

const IDLE: u8 = 0;
const SCHEDULED: u8 = 1;
const RUNNING: u8 = 2;
const NOTIFIED: u8 = 3;
const DONE: u8 = 4;

/// Longest an idle thread sleeps before re-polling waiting tasks.
pub(crate) const IDLE_TICK: Duration = Duration::from_millis(1);

struct Shared {
    injector: Injector<usize>,
    states: Box<[AtomicU8]>,
    remaining: AtomicUsize,
    sleepers: AtomicUsize,
    idle: Mutex<()>,
    idle_cv: Condvar,
}

impl Shared {
    fn schedule(&self, id: usize) {
        let state = &self.states[id];
        let mut cur = state.load(Ordering::Acquire);
        loop {
            let next = match cur {
                IDLE => SCHEDULED,
                RUNNING => NOTIFIED,
                _ => return,
            };
            match state.compare_exchange_weak(cur, next, Ordering::AcqRel, Ordering::Acquire) {
                Ok(_) if next == SCHEDULED => {
                    self.injector.push(id);
                    self.notify_one();
                    return;
                }
                Ok(_) => return,
                Err(actual) => cur = actual,
            }
        }
    }

    fn notify_one(&self) {
        fence(Ordering::SeqCst);
        if self.sleepers.load(Ordering::SeqCst) > 0 {
            drop(self.idle.lock().unwrap());
            self.idle_cv.notify_one();
        }
    }
}

struct TaskWaker {
    shared: Arc<Shared>,
    id: usize,
}

impl Wake for TaskWaker {
    fn wake(self: Arc<Self>) {
        self.shared.schedule(self.id);
    }

    fn wake_by_ref(self: &Arc<Self>) {
        self.shared.schedule(self.id);
    }
}

pub(crate) struct Executor<'a> {
    shared: Arc<Shared>,
    futures: Vec<Mutex<Option<BoxFuture<'a>>>>,
    wakers: Vec<Waker>,
    locals: Mutex<Vec<Worker<usize>>>,
    stealers: Vec<Stealer<usize>>,
}

impl<'a> Executor<'a> {
    /// All tasks start scheduled. `threads` workers must then call [`work`](Self::work).
    pub(crate) fn new(tasks: Vec<BoxFuture<'a>>, threads: usize) -> Self {
        let n = tasks.len();
        let shared = Arc::new(Shared {
            injector: Injector::new(),
            states: (0..n).map(|_| AtomicU8::new(SCHEDULED)).collect(),
            remaining: AtomicUsize::new(n),
            sleepers: AtomicUsize::new(0),
            idle: Mutex::new(()),
            idle_cv: Condvar::new(),
        });
        for id in 0..n {
            shared.injector.push(id);
        }
        let wakers = (0..n)
            .map(|id| {
                Waker::from(Arc::new(TaskWaker {
                    shared: Arc::clone(&shared),
                    id,
                }))
            })
            .collect();
        let locals: Vec<Worker<usize>> = (0..threads).map(|_| Worker::new_fifo()).collect();
        let stealers = locals.iter().map(Worker::stealer).collect();
        Executor {
            shared,
            futures: tasks.into_iter().map(|f| Mutex::new(Some(f))).collect(),
            wakers,
            locals: Mutex::new(locals),
            stealers,
        }
    }

    fn find_task(&self, local: &Worker<usize>) -> Option<usize> {
        if let Some(id) = local.pop() {
            return Some(id);
        }
        loop {
            let mut retry = false;
            match self.shared.injector.steal_batch_and_pop(local) {
                Steal::Success(id) => return Some(id),
                Steal::Retry => retry = true,
                Steal::Empty => {}
            }
            for s in &self.stealers {
                match s.steal() {
                    Steal::Success(id) => return Some(id),
                    Steal::Retry => retry = true,
                    Steal::Empty => {}
                }
            }
            if !retry {
                return None;
            }
        }
    }

    fn poll_task(&self, id: usize, local: &Worker<usize>) {
        let state = &self.shared.states[id];
        state.store(RUNNING, Ordering::Release);
        let mut slot = self.futures[id].lock().unwrap();
        let Some(fut) = slot.as_mut() else {
            return;
        };
        let mut cx = Context::from_waker(&self.wakers[id]);
        match fut.as_mut().poll(&mut cx) {
            Poll::Ready(()) => {
                *slot = None;
                state.store(DONE, Ordering::Release);
                drop(slot);
                if self.shared.remaining.fetch_sub(1, Ordering::AcqRel) == 1 {
                    drop(self.shared.idle.lock().unwrap());
                    self.shared.idle_cv.notify_all();
                }
            }
            Poll::Pending => {
                drop(slot);
                if state
                    .compare_exchange(RUNNING, IDLE, Ordering::AcqRel, Ordering::Acquire)
                    .is_err()
                {
                    // Woken while running.
                    state.store(SCHEDULED, Ordering::Release);
                    local.push(id);
                }
            }
        }
    }

    /// Runs tasks until every task has completed.
    pub(crate) fn work(&self) {
        let local = self
            .locals
            .lock()
            .unwrap()
            .pop()
            .expect("more executor threads than configured");
        loop {
            if let Some(id) = self.find_task(&local) {
                self.poll_task(id, &local);
                continue;
            }
            if self.shared.remaining.load(Ordering::Acquire) == 0 {
                return;
            }
            let guard = self.shared.idle.lock().unwrap();
            self.shared.sleepers.fetch_add(1, Ordering::SeqCst);
            fence(Ordering::SeqCst);
            let mut timed_out = false;
            if self.shared.injector.is_empty() && self.shared.remaining.load(Ordering::Acquire) > 0 {
                let (_guard, res) = self.shared.idle_cv.wait_timeout(guard, IDLE_TICK).unwrap();
                timed_out = res.timed_out();
            }
            self.shared.sleepers.fetch_sub(1, Ordering::SeqCst);
            if timed_out {
                // Rings coalesce wakeups, so an idle tick re-polls every
                // waiting task.
                for id in 0..self.futures.len() {
                    self.shared.schedule(id);
                }
            }
        }
    }
}

struct ThreadWaker(Thread);

impl Wake for ThreadWaker {
    fn wake(self: Arc<Self>) {
        self.0.unpark();
    }

    fn wake_by_ref(self: &Arc<Self>) {
        self.0.unpark();
    }
}

/// Drives one future on the current thread, parking while it is pending
/// and re-polling at least every [`IDLE_TICK`].
pub(crate) fn block_on<F: Future>(fut: F) -> F::Output {
    let waker = Waker::from(Arc::new(ThreadWaker(thread::current())));
    let mut cx = Context::from_waker(&waker);
    let mut fut = pin!(fut);
    loop {
        match fut.as_mut().poll(&mut cx) {
            Poll::Ready(v) => return v,
            Poll::Pending => thread::park_timeout(IDLE_TICK),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::runtime::ring::ring;
    use std::sync::atomic::AtomicU64;

    #[test]
    fn runs_chained_tasks_on_few_threads() {
        // producer -> relay -> relay -> collector, all as executor tasks.
        let (mut a_tx, mut a_rx) = ring::<u64>(4);
        let (mut b_tx, mut b_rx) = ring::<u64>(4);
        let (mut c_tx, mut c_rx) = ring::<u64>(4);
        let sum = AtomicU64::new(0);
        let sum_ref = &sum;
        let tasks: Vec<BoxFuture<'_>> = vec![
            Box::pin(async move {
                for i in 1..=1000u64 {
                    a_tx.push(i).await.unwrap();
                }
            }),
            Box::pin(async move {
                while let Some(v) = a_rx.pop().await {
                    b_tx.push(v * 2).await.unwrap();
                }
            }),
            Box::pin(async move {
                while let Some(v) = b_rx.pop().await {
                    c_tx.push(v + 1).await.unwrap();
                }
            }),
            Box::pin(async move {
                while let Some(v) = c_rx.pop().await {
                    sum_ref.fetch_add(v, Ordering::Relaxed);
                }
            }),
        ];
        let exec = Executor::new(tasks, 2);
        thread::scope(|s| {
            s.spawn(|| exec.work());
            s.spawn(|| exec.work());
        });
        // sum(2i + 1) for i in 1..=1000
        assert_eq!(sum.load(Ordering::Relaxed), 1000 * 1001 + 1000);
    }

    #[test]
    fn single_thread_interleaves_tasks() {
        let (mut tx, mut rx) = ring::<u32>(2);
        let count = AtomicU64::new(0);
        let count_ref = &count;
        let tasks: Vec<BoxFuture<'_>> = vec![
            Box::pin(async move {
                for i in 0..10_000 {
                    tx.push(i).await.unwrap();
                }
            }),
            Box::pin(async move {
                while rx.pop().await.is_some() {
                    count_ref.fetch_add(1, Ordering::Relaxed);
                }
            }),
        ];
        let exec = Executor::new(tasks, 1);
        exec.work();
        assert_eq!(count.load(Ordering::Relaxed), 10_000);
    }
}
