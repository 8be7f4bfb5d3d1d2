//! Discrete-event queue on the virtual clock.
//!
//! Events fire in `(time, resource, seq)` order, where `seq` is the
//! insertion counter, so equal-time events are processed deterministically.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use super::VaultError;

#[derive(Debug, Clone, PartialEq)]
pub struct Event<T> {
    pub time: f64,
    pub resource: u32,
    pub seq: u64,
    pub payload: T,
}

struct Item<T>(Event<T>);

impl<T> Item<T> {
    fn key(&self) -> (f64, u32, u64) {
        (self.0.time, self.0.resource, self.0.seq)
    }
}

impl<T> PartialEq for Item<T> {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl<T> Eq for Item<T> {}

impl<T> PartialOrd for Item<T> {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl<T> Ord for Item<T> {
    // reversed: BinaryHeap is a max-heap
    fn cmp(&self, other: &Self) -> Ordering {
        let (a, b) = (self.key(), other.key());
        b.0.total_cmp(&a.0).then(b.1.cmp(&a.1)).then(b.2.cmp(&a.2))
    }
}

pub struct EventQueue<T> {
    heap: BinaryHeap<Item<T>>,
    now: f64,
    seq: u64,
}

impl<T> Default for EventQueue<T> {
    fn default() -> Self {
        EventQueue { heap: BinaryHeap::new(), now: 0.0, seq: 0 }
    }
}

impl<T> EventQueue<T> {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn now(&self) -> f64 {
        self.now
    }

    pub fn len(&self) -> usize {
        self.heap.len()
    }

    pub fn is_empty(&self) -> bool {
        self.heap.is_empty()
    }

    pub fn peek_time(&self) -> Option<f64> {
        self.heap.peek().map(|i| i.0.time)
    }

    /// Schedules an event; it may not lie in the past.
    pub fn push(&mut self, time: f64, resource: u32, payload: T) -> Result<u64, VaultError> {
        if time < self.now || time.is_nan() {
            return Err(VaultError::TimeRegression { time, now: self.now });
        }
        let seq = self.seq;
        self.seq += 1;
        self.heap.push(Item(Event { time, resource, seq, payload }));
        Ok(seq)
    }

    /// Removes the earliest event and moves the clock to its time. An empty
    /// queue leaves the clock unchanged.
    pub fn advance(&mut self) -> Option<Event<T>> {
        let ev = self.heap.pop()?.0;
        self.now = ev.time;
        Some(ev)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn empty_queue_keeps_clock() {
        let mut q: EventQueue<()> = EventQueue::new();
        assert!(q.advance().is_none());
        assert_eq!(q.now(), 0.0);
    }

    #[test]
    fn equal_times_break_ties_by_resource_then_seq() {
        let mut q = EventQueue::new();
        q.push(5.0, 2, "c").unwrap();
        q.push(5.0, 1, "b").unwrap();
        q.push(5.0, 1, "b2").unwrap();
        q.push(1.0, 9, "a").unwrap();
        let order: Vec<_> = std::iter::from_fn(|| q.advance()).map(|e| e.payload).collect();
        assert_eq!(order, vec!["a", "b", "b2", "c"]);
        assert_eq!(q.now(), 5.0);
    }

    #[test]
    fn past_event_is_rejected() {
        let mut q = EventQueue::new();
        q.push(3.0, 0, ()).unwrap();
        q.advance();
        assert_eq!(q.push(2.0, 0, ()), Err(VaultError::TimeRegression { time: 2.0, now: 3.0 }));
        assert!(q.push(3.0, 0, ()).is_ok());
    }

    proptest! {
        #[test]
        fn clock_is_monotone(times in prop::collection::vec(0.0f64..1e6, 1..200)) {
            let mut q = EventQueue::new();
            for (i, t) in times.iter().enumerate() {
                q.push(*t, (i % 3) as u32, i).unwrap();
            }
            let mut last = 0.0;
            while let Some(e) = q.advance() {
                prop_assert!(e.time >= last);
                last = e.time;
            }
        }
    }
}
