//! Deterministic discrete-event core: integer-nanosecond clock, an ordered
//! event queue with insertion-order tie breaking, and labeled random streams
//! that are independent of each other's consumption.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use rand_distr::{Distribution, Normal};
use sha2::{Digest, Sha256};
use std::cmp::Ordering;
use std::collections::BinaryHeap;

/// Simulation timestamp, integer nanoseconds since run start.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct SimTime(u64);

impl SimTime {
    pub const ZERO: SimTime = SimTime(0);

    pub const fn from_ns(ns: u64) -> Self {
        SimTime(ns)
    }

    pub const fn from_us(us: u64) -> Self {
        SimTime(us * 1_000)
    }

    pub const fn from_ms(ms: u64) -> Self {
        SimTime(ms * 1_000_000)
    }

    pub const fn from_secs(s: u64) -> Self {
        SimTime(s * 1_000_000_000)
    }

    /// Rounds to the nearest nanosecond. Negative values are a config bug.
    pub fn from_secs_f64(s: f64) -> Self {
        assert!(s >= 0.0 && s.is_finite(), "invalid time {s} s");
        SimTime((s * 1e9).round() as u64)
    }

    pub const fn as_ns(self) -> u64 {
        self.0
    }

    pub fn as_secs_f64(self) -> f64 {
        self.0 as f64 / 1e9
    }

    pub const fn saturating_sub(self, rhs: SimTime) -> SimTime {
        SimTime(self.0.saturating_sub(rhs.0))
    }
}

impl std::ops::Add for SimTime {
    type Output = SimTime;
    fn add(self, rhs: SimTime) -> SimTime {
        SimTime(self.0 + rhs.0)
    }
}

impl std::ops::Sub for SimTime {
    type Output = SimTime;
    fn sub(self, rhs: SimTime) -> SimTime {
        SimTime(self.0 - rhs.0)
    }
}

impl std::ops::Mul<u64> for SimTime {
    type Output = SimTime;
    fn mul(self, rhs: u64) -> SimTime {
        SimTime(self.0 * rhs)
    }
}

struct Scheduled<K> {
    time: SimTime,
    seq: u64,
    kind: K,
}

impl<K> PartialEq for Scheduled<K> {
    fn eq(&self, other: &Self) -> bool {
        self.time == other.time && self.seq == other.seq
    }
}

impl<K> Eq for Scheduled<K> {}

impl<K> PartialOrd for Scheduled<K> {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl<K> Ord for Scheduled<K> {
    fn cmp(&self, other: &Self) -> Ordering {
        // BinaryHeap is a max-heap; invert for (time, seq) min ordering.
        other
            .time
            .cmp(&self.time)
            .then(other.seq.cmp(&self.seq))
    }
}

/// Event queue plus clock. Events dispatch in (time, insertion seq) order, so
/// two events never compare equal and same-timestamp dispatch is FIFO.
pub struct EventQueue<K> {
    heap: BinaryHeap<Scheduled<K>>,
    next_seq: u64,
    clock: SimTime,
}

impl<K> Default for EventQueue<K> {
    fn default() -> Self {
        Self::new()
    }
}

impl<K> EventQueue<K> {
    pub fn new() -> Self {
        EventQueue {
            heap: BinaryHeap::new(),
            next_seq: 0,
            clock: SimTime::ZERO,
        }
    }

    pub fn clock(&self) -> SimTime {
        self.clock
    }

    pub fn len(&self) -> usize {
        self.heap.len()
    }

    pub fn is_empty(&self) -> bool {
        self.heap.is_empty()
    }

    /// Panics when asked to schedule behind the clock: that is a fatal
    /// configuration error, never a recoverable condition.
    pub fn schedule(&mut self, time: SimTime, kind: K) {
        assert!(
            time >= self.clock,
            "event scheduled at {} ns behind clock {} ns",
            time.as_ns(),
            self.clock.as_ns()
        );
        let seq = self.next_seq;
        self.next_seq += 1;
        self.heap.push(Scheduled { time, seq, kind });
    }

    pub fn schedule_in(&mut self, delay: SimTime, kind: K) {
        self.schedule(self.clock + delay, kind);
    }

    fn peek_time(&self) -> Option<SimTime> {
        self.heap.peek().map(|e| e.time)
    }

    /// Dispatches every event with time <= `t_end`, including events the
    /// handler schedules along the way, then leaves the clock at `t_end`.
    /// Returns the number of dispatched events.
    pub fn run_until<F>(&mut self, t_end: SimTime, mut handler: F) -> u64
    where
        F: FnMut(&mut Self, SimTime, K),
    {
        assert!(
            t_end >= self.clock,
            "run_until target {} ns behind clock {} ns",
            t_end.as_ns(),
            self.clock.as_ns()
        );
        let mut dispatched = 0;
        while let Some(t) = self.peek_time() {
            if t > t_end {
                break;
            }
            let ev = self.heap.pop().expect("peeked entry");
            self.clock = ev.time;
            handler(self, ev.time, ev.kind);
            dispatched += 1;
        }
        self.clock = t_end;
        dispatched
    }
}

/// Reproducible random stream derived from (base seed, label). Streams with
/// different labels are independent; a stream never observes how much the
/// others consumed.
pub struct RngStream {
    label: String,
    rng: ChaCha12Rng,
}

impl std::fmt::Debug for RngStream {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "RngStream({})", self.label)
    }
}

impl RngStream {
    pub fn new(base_seed: u64, label: &str) -> Self {
        let mut hasher = Sha256::new();
        hasher.update(base_seed.to_le_bytes());
        hasher.update([0x1f]);
        hasher.update(label.as_bytes());
        let key: [u8; 32] = hasher.finalize().into();
        RngStream {
            label: label.to_owned(),
            rng: ChaCha12Rng::from_seed(key),
        }
    }

    /// Uniform draw in [0, 1).
    pub fn uniform(&mut self) -> f64 {
        self.rng.gen::<f64>()
    }

    pub fn range(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.uniform()
    }

    pub fn normal(&mut self, mean: f64, sd: f64) -> f64 {
        Normal::new(mean, sd)
            .expect("valid normal parameters")
            .sample(&mut self.rng)
    }

    pub fn bernoulli(&mut self, p: f64) -> bool {
        self.uniform() < p
    }

    pub fn next_u64(&mut self) -> u64 {
        self.rng.gen()
    }

    /// Uniform index in 0..n.
    pub fn index(&mut self, n: usize) -> usize {
        assert!(n > 0);
        self.rng.gen_range(0..n)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn events_dispatch_in_time_order() {
        let mut q = EventQueue::new();
        q.schedule(SimTime::from_ns(5), "b");
        q.schedule(SimTime::from_ns(3), "a");
        let mut seen = Vec::new();
        q.run_until(SimTime::from_ns(10), |_, t, k| seen.push((t.as_ns(), k)));
        assert_eq!(seen, vec![(3, "a"), (5, "b")]);
    }

    #[test]
    fn same_time_events_dispatch_in_insertion_order() {
        let mut q = EventQueue::new();
        q.schedule(SimTime::from_ns(7), "A");
        q.schedule(SimTime::from_ns(7), "B");
        let mut seen = Vec::new();
        q.run_until(SimTime::from_ns(7), |_, _, k| seen.push(k));
        assert_eq!(seen, vec!["A", "B"]);
    }

    #[test]
    #[should_panic(expected = "behind clock")]
    fn scheduling_in_the_past_is_fatal() {
        let mut q = EventQueue::new();
        q.schedule(SimTime::from_ns(4), ());
        q.run_until(SimTime::from_ns(4), |_, _, _| {});
        q.schedule(SimTime::from_ns(2), ());
    }

    #[test]
    fn run_until_dispatches_only_due_events() {
        let mut q = EventQueue::new();
        for t in [3u64, 5, 12] {
            q.schedule(SimTime::from_ns(t), ());
        }
        let n = q.run_until(SimTime::from_ns(10), |_, _, _| {});
        assert_eq!(n, 2);
        assert_eq!(q.len(), 1);
        assert_eq!(q.clock(), SimTime::from_ns(10));
    }

    #[test]
    fn run_until_on_empty_queue_advances_clock() {
        let mut q: EventQueue<()> = EventQueue::new();
        let n = q.run_until(SimTime::from_ns(10), |_, _, _| {});
        assert_eq!(n, 0);
        assert_eq!(q.clock(), SimTime::from_ns(10));
    }

    #[test]
    fn cascaded_events_within_horizon_are_dispatched() {
        let mut q = EventQueue::new();
        q.schedule(SimTime::from_ns(3), "first");
        let mut seen = Vec::new();
        let n = q.run_until(SimTime::from_ns(10), |q, t, k| {
            if k == "first" {
                q.schedule(t + SimTime::from_ns(1), "second");
            }
            seen.push((t.as_ns(), k));
        });
        assert_eq!(n, 2);
        assert_eq!(seen, vec![(3, "first"), (4, "second")]);
    }

    #[test]
    fn same_seed_and_label_reproduces_sequence() {
        let mut a = RngStream::new(42, "fading");
        let mut b = RngStream::new(42, "fading");
        for _ in 0..1000 {
            assert_eq!(a.next_u64(), b.next_u64());
        }
    }

    fn correlation(x: &[f64], y: &[f64]) -> f64 {
        let n = x.len() as f64;
        let mx = x.iter().sum::<f64>() / n;
        let my = y.iter().sum::<f64>() / n;
        let mut cov = 0.0;
        let mut vx = 0.0;
        let mut vy = 0.0;
        for (a, b) in x.iter().zip(y) {
            cov += (a - mx) * (b - my);
            vx += (a - mx).powi(2);
            vy += (b - my).powi(2);
        }
        cov / (vx.sqrt() * vy.sqrt())
    }

    #[test]
    fn different_labels_are_uncorrelated() {
        let mut a = RngStream::new(42, "fading");
        let mut b = RngStream::new(42, "placement");
        let xs: Vec<f64> = (0..100_000).map(|_| a.uniform()).collect();
        let ys: Vec<f64> = (0..100_000).map(|_| b.uniform()).collect();
        assert!(xs != ys);
        assert!(correlation(&xs, &ys).abs() < 0.01);
    }

    #[test]
    fn different_seeds_same_label_are_uncorrelated() {
        let mut a = RngStream::new(1, "fading");
        let mut b = RngStream::new(2, "fading");
        let xs: Vec<f64> = (0..100_000).map(|_| a.uniform()).collect();
        let ys: Vec<f64> = (0..100_000).map(|_| b.uniform()).collect();
        assert!(xs != ys);
        assert!(correlation(&xs, &ys).abs() < 0.01);
    }

    #[test]
    fn stream_is_unaffected_by_other_streams_consumption() {
        let mut lone = RngStream::new(7, "traffic");
        let expected: Vec<u64> = (0..64).map(|_| lone.next_u64()).collect();

        let mut other = RngStream::new(7, "decode");
        let mut probe = RngStream::new(7, "traffic");
        for _ in 0..999 {
            other.next_u64();
        }
        let got: Vec<u64> = (0..64).map(|_| probe.next_u64()).collect();
        assert_eq!(expected, got);
    }
}
