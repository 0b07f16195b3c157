//! Bounded single-producer single-consumer ring with async push/pop.
//!
//! Each push publishes one element; there is no lock on either side. A side
//! that finds the ring full (or empty) registers its waker and returns
//! `Pending`. Wakeups are coalesced: the producer signals the consumer once
//! per `capacity / 4` pushes, when it finds the ring full, and on
//! [`Producer::flush`]; the consumer signals the producer once the ring is at
//! most half full. Waiters must therefore re-poll periodically (the executor
//! and `block_on` do), which bounds how long an unsignalled element waits.
//! Dropping either end closes the ring and wakes both sides.

use std::cell::UnsafeCell;
use std::future::poll_fn;
use std::mem::MaybeUninit;
use std::sync::atomic::{AtomicBool, AtomicUsize, Ordering};
use std::sync::Arc;
use std::task::{Context, Poll};

use atomic_waker::AtomicWaker;
use crossbeam_utils::CachePadded;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) struct Closed;

struct Ring<T> {
    slots: Box<[UnsafeCell<MaybeUninit<T>>]>,
    mask: usize,
    /// Next slot to read; written only by the consumer.
    head: CachePadded<AtomicUsize>,
    /// Next slot to write; written only by the producer.
    tail: CachePadded<AtomicUsize>,
    closed: AtomicBool,
    rx_waker: AtomicWaker,
    tx_waker: AtomicWaker,
}

// Slots are handed over through the head/tail release-acquire pairs.
unsafe impl<T: Send> Sync for Ring<T> {}

impl<T> Ring<T> {
    fn close(&self) {
        self.closed.store(true, Ordering::SeqCst);
        self.rx_waker.wake();
        self.tx_waker.wake();
    }

    fn is_closed(&self) -> bool {
        self.closed.load(Ordering::SeqCst)
    }
}

pub(crate) struct Producer<T> {
    ring: Arc<Ring<T>>,
    tail: usize,
    head_cache: usize,
    unsignalled: usize,
    batch: usize,
}

pub(crate) struct Consumer<T> {
    ring: Arc<Ring<T>>,
    head: usize,
    tail_cache: usize,
}

/// Capacity is rounded up to a power of two.
pub(crate) fn ring<T: Copy + Send>(capacity: usize) -> (Producer<T>, Consumer<T>) {
    let cap = capacity.max(2).next_power_of_two();
    let slots = (0..cap)
        .map(|_| UnsafeCell::new(MaybeUninit::uninit()))
        .collect::<Vec<_>>()
        .into_boxed_slice();
    let ring = Arc::new(Ring {
        slots,
        mask: cap - 1,
        head: CachePadded::new(AtomicUsize::new(0)),
        tail: CachePadded::new(AtomicUsize::new(0)),
        closed: AtomicBool::new(false),
        rx_waker: AtomicWaker::new(),
        tx_waker: AtomicWaker::new(),
    });
    (
        Producer {
            ring: Arc::clone(&ring),
            tail: 0,
            head_cache: 0,
            unsignalled: 0,
            batch: (cap / 4).max(1),
        },
        Consumer {
            ring,
            head: 0,
            tail_cache: 0,
        },
    )
}

impl<T: Copy + Send> Producer<T> {
    fn full(&self) -> bool {
        self.tail.wrapping_sub(self.head_cache) > self.ring.mask
    }

    #[inline]
    pub(crate) fn poll_push(&mut self, cx: &mut Context<'_>, value: T) -> Poll<Result<(), Closed>> {
        if self.full() || self.ring.is_closed() {
            match self.wait_for_space(cx) {
                Poll::Ready(Ok(())) => {}
                other => return other,
            }
        }
        self.write(value);
        Poll::Ready(Ok(()))
    }

    /// Requires a free slot.
    #[inline]
    fn write(&mut self, value: T) {
        // SAFETY: the slot at `tail` is free and only this producer writes
        // it until `tail` is published below.
        unsafe {
            (*self.ring.slots[self.tail & self.ring.mask].get()).write(value);
        }
        self.tail = self.tail.wrapping_add(1);
        self.ring.tail.store(self.tail, Ordering::Release);
        self.unsignalled += 1;
        if self.unsignalled >= self.batch {
            self.flush();
        }
    }

    #[cold]
    fn wait_for_space(&mut self, cx: &mut Context<'_>) -> Poll<Result<(), Closed>> {
        if self.ring.is_closed() {
            return Poll::Ready(Err(Closed));
        }
        self.head_cache = self.ring.head.load(Ordering::Acquire);
        if !self.full() {
            return Poll::Ready(Ok(()));
        }
        self.flush();
        self.ring.tx_waker.register(cx.waker());
        self.head_cache = self.ring.head.load(Ordering::Acquire);
        if self.ring.is_closed() {
            Poll::Ready(Err(Closed))
        } else if self.full() {
            Poll::Pending
        } else {
            Poll::Ready(Ok(()))
        }
    }

    /// Wakes the consumer if it is waiting.
    pub(crate) fn flush(&mut self) {
        self.unsignalled = 0;
        self.ring.rx_waker.wake();
    }

    /// Pushes without suspending; gives the value back if the ring is full
    /// or closed.
    #[inline]
    pub(crate) fn try_push(&mut self, value: T) -> Result<(), T> {
        if self.full() {
            self.head_cache = self.ring.head.load(Ordering::Acquire);
            if self.full() {
                return Err(value);
            }
        }
        if self.ring.is_closed() {
            return Err(value);
        }
        self.write(value);
        Ok(())
    }

    pub(crate) async fn push(&mut self, value: T) -> Result<(), Closed> {
        poll_fn(|cx| self.poll_push(cx, value)).await
    }
}

impl<T> Drop for Producer<T> {
    fn drop(&mut self) {
        self.ring.close();
    }
}

impl<T: Copy + Send> Consumer<T> {
    fn refresh(&mut self) -> bool {
        self.tail_cache = self.ring.tail.load(Ordering::Acquire);
        self.head != self.tail_cache
    }

    #[inline]
    pub(crate) fn poll_pop(&mut self, cx: &mut Context<'_>) -> Poll<Option<T>> {
        if self.head == self.tail_cache && !self.refresh() {
            match self.wait_for_data(cx) {
                Poll::Ready(true) => {}
                Poll::Ready(false) => return Poll::Ready(None),
                Poll::Pending => return Poll::Pending,
            }
        }
        Poll::Ready(Some(self.take()))
    }

    /// Requires `head != tail_cache`.
    #[inline]
    fn take(&mut self) -> T {
        // SAFETY: head < tail, so the slot was fully written and published
        // with release ordering; the producer will not touch it until `head`
        // moves past it.
        let value = unsafe { (*self.ring.slots[self.head & self.ring.mask].get()).assume_init() };
        self.head = self.head.wrapping_add(1);
        self.ring.head.store(self.head, Ordering::Release);
        // A waiting producer saw a full ring, so on its way down to half
        // full the consumer passes a multiple of the batch size.
        let cap = self.ring.mask + 1;
        if self.head & (cap / 4).max(1).wrapping_sub(1) == 0 && self.tail_cache.wrapping_sub(self.head) <= cap / 2 {
            self.ring.tx_waker.wake();
        }
        value
    }

    /// `Ready(true)` once data is available, `Ready(false)` when the ring is
    /// closed and drained.
    #[cold]
    fn wait_for_data(&mut self, cx: &mut Context<'_>) -> Poll<bool> {
        self.ring.tx_waker.wake();
        if self.ring.is_closed() {
            // The producer publishes `tail` before closing.
            return Poll::Ready(self.refresh());
        }
        self.ring.rx_waker.register(cx.waker());
        if self.refresh() {
            return Poll::Ready(true);
        }
        if self.ring.is_closed() {
            return Poll::Ready(self.refresh());
        }
        Poll::Pending
    }

    /// Pops without suspending; `None` if the ring is empty or closed.
    #[inline]
    pub(crate) fn try_pop(&mut self) -> Option<T> {
        if self.head == self.tail_cache && !self.refresh() {
            return None;
        }
        Some(self.take())
    }

    pub(crate) async fn pop(&mut self) -> Option<T> {
        poll_fn(|cx| self.poll_pop(cx)).await
    }
}

impl<T> Drop for Consumer<T> {
    fn drop(&mut self) {
        self.ring.close();
    }
}
