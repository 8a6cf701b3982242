//! KPI computation: piecewise-constant network/application state signals,
//! survival-time filtering, exact interval-based availability, requirement
//! checks, and nearest-rank percentile statistics.

use crate::engine::SimTime;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MetricsConfig {
    /// Per-device availability requirement.
    pub availability_requirement: f64,
    /// Tolerated probability of falling at or below the requirement.
    pub sensitivity: f64,
}

impl Default for MetricsConfig {
    fn default() -> Self {
        MetricsConfig {
            availability_requirement: 0.95,
            sensitivity: 0.01,
        }
    }
}

/// Binary piecewise-constant signal on [0, horizon). The signal is 1 at
/// t = 0 unless a transition sits there (state before the run is "good" by
/// convention); `transitions` holds value changes only, so times strictly
/// increase and values alternate.
#[derive(Debug, Clone, PartialEq)]
pub struct StateTrace {
    transitions: Vec<(SimTime, bool)>,
    horizon: SimTime,
}

impl StateTrace {
    pub fn new(transitions: Vec<(SimTime, bool)>, horizon: SimTime) -> Self {
        let mut value = true;
        let mut last: Option<SimTime> = None;
        for &(t, v) in &transitions {
            assert!(last.is_none() || t > last.unwrap(), "transition times must increase");
            assert!(v != value, "transition must change the value");
            value = v;
            last = Some(t);
        }
        StateTrace {
            transitions,
            horizon,
        }
    }

    pub fn always_on(horizon: SimTime) -> Self {
        StateTrace {
            transitions: Vec::new(),
            horizon,
        }
    }

    pub fn horizon(&self) -> SimTime {
        self.horizon
    }

    pub fn transitions(&self) -> &[(SimTime, bool)] {
        &self.transitions
    }

    pub fn value_at(&self, t: SimTime) -> bool {
        match self.transitions.partition_point(|&(tt, _)| tt <= t) {
            0 => true,
            n => self.transitions[n - 1].1,
        }
    }

    /// Maximal zero-valued intervals, half-open, clipped to [0, horizon).
    pub fn zero_intervals(&self) -> Vec<(SimTime, SimTime)> {
        let mut out = Vec::new();
        let mut open: Option<SimTime> = None;
        for &(t, v) in &self.transitions {
            match (v, open) {
                (false, None) => open = Some(t),
                (true, Some(start)) => {
                    out.push((start, t));
                    open = None;
                }
                _ => {}
            }
        }
        if let Some(start) = open {
            out.push((start, self.horizon));
        }
        out.retain(|&(s, e)| s < self.horizon && e > s);
        for iv in &mut out {
            iv.1 = iv.1.min(self.horizon);
        }
        out
    }

    fn from_zero_intervals(intervals: &[(SimTime, SimTime)], horizon: SimTime) -> StateTrace {
        let mut transitions = Vec::with_capacity(intervals.len() * 2);
        for &(s, e) in intervals {
            transitions.push((s, false));
            if e < horizon {
                transitions.push((e, true));
            }
        }
        StateTrace::new(transitions, horizon)
    }

    /// Survival-time filter: the output is 0 at t exactly when the input was
    /// 0 throughout the trailing window [t - t_sv, t]. Each maximal zero
    /// interval [u, v) longer than t_sv maps to [u + t_sv, v); shorter
    /// outages vanish.
    pub fn apply_survival(&self, t_sv: SimTime) -> StateTrace {
        let shifted: Vec<(SimTime, SimTime)> = self
            .zero_intervals()
            .into_iter()
            .filter(|&(s, e)| e - s > t_sv)
            .map(|(s, e)| (s + t_sv, e))
            .collect();
        StateTrace::from_zero_intervals(&shifted, self.horizon)
    }

    /// Exact time average of the signal over [0, horizon).
    pub fn availability(&self) -> f64 {
        assert!(self.horizon > SimTime::ZERO, "empty horizon");
        let zero_ns: u64 = self
            .zero_intervals()
            .iter()
            .map(|&(s, e)| e.as_ns() - s.as_ns())
            .sum();
        1.0 - zero_ns as f64 / self.horizon.as_ns() as f64
    }

    /// Pointwise AND of two signals over a common horizon.
    pub fn and(&self, other: &StateTrace) -> StateTrace {
        assert_eq!(self.horizon, other.horizon, "horizon mismatch");
        let mut zeros = self.zero_intervals();
        zeros.extend(other.zero_intervals());
        zeros.sort();
        let mut merged: Vec<(SimTime, SimTime)> = Vec::with_capacity(zeros.len());
        for (s, e) in zeros {
            match merged.last_mut() {
                Some(last) if s <= last.1 => last.1 = last.1.max(e),
                _ => merged.push((s, e)),
            }
        }
        StateTrace::from_zero_intervals(&merged, self.horizon)
    }
}

/// Incremental trace construction from outcome events arriving in time
/// order. Only value changes are recorded; simultaneous opposite updates
/// collapse.
#[derive(Debug, Clone)]
pub struct TraceBuilder {
    transitions: Vec<(SimTime, bool)>,
    current: bool,
}

impl Default for TraceBuilder {
    fn default() -> Self {
        Self::new()
    }
}

impl TraceBuilder {
    pub fn new() -> Self {
        TraceBuilder {
            transitions: Vec::new(),
            current: true,
        }
    }

    pub fn push(&mut self, t: SimTime, value: bool) {
        if value == self.current {
            return;
        }
        if let Some(&(last_t, _)) = self.transitions.last() {
            if last_t == t {
                // Same-instant flip-back: the pair annihilates.
                self.transitions.pop();
                self.current = value;
                debug_assert_eq!(
                    self.transitions.last().map(|&(_, v)| v).unwrap_or(true),
                    value
                );
                return;
            }
        }
        self.transitions.push((t, value));
        self.current = value;
    }

    pub fn finish(self, horizon: SimTime) -> StateTrace {
        let mut transitions = self.transitions;
        transitions.retain(|&(t, _)| t < horizon);
        // Dropping tail entries can leave a dangling no-op pair; rebuild the
        // alternation from scratch defensively.
        let mut clean = Vec::with_capacity(transitions.len());
        let mut value = true;
        for (t, v) in transitions {
            if v != value {
                clean.push((t, v));
                value = v;
            }
        }
        StateTrace::new(clean, horizon)
    }
}

/// Empirical violation probability of an availability requirement over a
/// pooled sample set.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RequirementCheck {
    pub violation_probability: f64,
    pub pass: bool,
}

pub fn requirement_check(samples: &[f64], a_req: f64, gamma: f64) -> RequirementCheck {
    assert!(!samples.is_empty(), "no availability samples");
    let violations = samples.iter().filter(|&&a| a <= a_req).count();
    let violation_probability = violations as f64 / samples.len() as f64;
    RequirementCheck {
        violation_probability,
        pass: violation_probability <= gamma,
    }
}

/// Nearest-rank percentile: the value at 1-based index ceil(p * n) of the
/// sorted samples. No interpolation, reproducible across implementations.
pub fn percentile(samples: &[f64], p: f64) -> f64 {
    assert!(!samples.is_empty(), "no samples");
    assert!(p > 0.0 && p <= 1.0, "percentile out of range: {p}");
    let mut sorted = samples.to_vec();
    sorted.sort_by(f64::total_cmp);
    let rank = (p * sorted.len() as f64).ceil() as usize;
    sorted[rank.max(1) - 1]
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoxStats {
    pub min: f64,
    pub q25: f64,
    pub median: f64,
    pub q75: f64,
    pub max: f64,
}

pub fn box_stats(samples: &[f64]) -> BoxStats {
    assert!(!samples.is_empty(), "no samples");
    let mut sorted = samples.to_vec();
    sorted.sort_by(f64::total_cmp);
    BoxStats {
        min: sorted[0],
        q25: percentile(&sorted, 0.25),
        median: percentile(&sorted, 0.50),
        q75: percentile(&sorted, 0.75),
        max: sorted[sorted.len() - 1],
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn s(sec: u64) -> SimTime {
        SimTime::from_secs(sec)
    }

    fn trace_zero_on(start: SimTime, end: SimTime, horizon: SimTime) -> StateTrace {
        StateTrace::new(vec![(start, false), (end, true)], horizon)
    }

    #[test]
    fn survival_shifts_long_outage_start() {
        let x = trace_zero_on(s(10), s(20), s(100));
        let y = x.apply_survival(s(5));
        assert_eq!(y.zero_intervals(), vec![(s(15), s(20))]);
    }

    #[test]
    fn outage_shorter_than_survival_time_vanishes() {
        let x = trace_zero_on(SimTime::from_ms(10), SimTime::from_ms(14), s(1));
        let y = x.apply_survival(SimTime::from_ms(5));
        assert!(y.zero_intervals().is_empty());
        assert_eq!(y.availability(), 1.0);
    }

    #[test]
    fn zero_survival_time_is_identity() {
        let x = trace_zero_on(s(3), s(7), s(10));
        assert_eq!(x.apply_survival(SimTime::ZERO), x);
    }

    #[test]
    fn outage_exactly_survival_time_vanishes() {
        let x = trace_zero_on(s(5), s(10), s(100));
        assert!(x.apply_survival(s(5)).zero_intervals().is_empty());
    }

    #[test]
    fn availability_matches_hand_integration() {
        let y = trace_zero_on(s(15), s(20), s(100));
        assert_eq!(y.availability(), 0.95);
        assert_eq!(StateTrace::always_on(s(100)).availability(), 1.0);
    }

    #[test]
    fn dead_from_start_yields_survival_window_only() {
        // X drops at t = 0 and never recovers; X(t) = 1 for t < 0.
        let x = StateTrace::new(vec![(SimTime::ZERO, false)], s(100));
        let y = x.apply_survival(s(5));
        assert_eq!(y.zero_intervals(), vec![(s(5), s(100))]);
        assert!((y.availability() - 0.05).abs() < 1e-12);
    }

    #[test]
    fn builder_collapses_same_instant_flip() {
        let mut b = TraceBuilder::new();
        b.push(s(1), false);
        b.push(s(2), true);
        b.push(s(3), false);
        b.push(s(3), true);
        let t = b.finish(s(10));
        assert_eq!(t.zero_intervals(), vec![(s(1), s(2))]);
    }

    #[test]
    fn value_at_respects_right_continuity() {
        let x = trace_zero_on(s(2), s(5), s(10));
        assert!(x.value_at(s(1)));
        assert!(!x.value_at(s(2)));
        assert!(!x.value_at(s(4)));
        assert!(x.value_at(s(5)));
    }

    #[test]
    fn and_combination_unions_outages() {
        let a = trace_zero_on(s(1), s(4), s(10));
        let b = trace_zero_on(s(3), s(6), s(10));
        let c = a.and(&b);
        assert_eq!(c.zero_intervals(), vec![(s(1), s(6))]);
        assert!(c.availability() <= a.availability().min(b.availability()));
    }

    #[test]
    fn requirement_check_counts_violations() {
        let mut samples = vec![0.99; 99];
        samples.push(0.90);
        let r = requirement_check(&samples, 0.95, 0.01);
        assert!((r.violation_probability - 0.01).abs() < 1e-12);
        assert!(r.pass);

        let all_good = vec![1.0; 10];
        assert!(requirement_check(&all_good, 0.95, 0.01).pass);

        let all_bad = vec![0.90; 10];
        let r = requirement_check(&all_bad, 0.95, 0.01);
        assert_eq!(r.violation_probability, 1.0);
        assert!(!r.pass);
    }

    #[test]
    fn nearest_rank_percentile() {
        let v: Vec<f64> = (1..=100).map(f64::from).collect();
        assert_eq!(percentile(&v, 0.01), 1.0);
        assert_eq!(percentile(&v, 0.50), 50.0);
        assert_eq!(percentile(&[3.0, 1.0, 2.0], 0.75), 3.0);
    }

    #[test]
    fn box_stats_on_five_samples() {
        let b = box_stats(&[1.0, 2.0, 3.0, 4.0, 100.0]);
        assert_eq!(
            (b.min, b.q25, b.median, b.q75, b.max),
            (1.0, 2.0, 3.0, 4.0, 100.0)
        );
        let single = box_stats(&[7.0]);
        assert_eq!(single.min, 7.0);
        assert_eq!(single.max, 7.0);
        assert_eq!(single.median, 7.0);
        let flat = box_stats(&[2.0, 2.0, 2.0]);
        assert_eq!(flat.min, flat.max);
    }

    #[test]
    fn survival_output_never_below_input() {
        let x = StateTrace::new(
            vec![(s(1), false), (s(9), true), (s(20), false), (s(22), true)],
            s(30),
        );
        let y = x.apply_survival(s(3));
        for ns in (0..30_000).map(SimTime::from_ms) {
            assert!(y.value_at(ns) >= x.value_at(ns));
        }
    }
}
