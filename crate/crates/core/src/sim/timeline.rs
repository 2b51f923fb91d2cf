use std::fmt;

use serde::{Deserialize, Serialize};

use crate::orbital::SatelliteId;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SatState {
    Idle,
    Rx,
    Tx,
    Compute,
}

impl SatState {
    pub const ALL: [SatState; 4] = [SatState::Idle, SatState::Rx, SatState::Tx, SatState::Compute];

    /// Which state wins when intervals overlap.
    fn priority(self) -> usize {
        match self {
            SatState::Tx => 3,
            SatState::Rx => 2,
            SatState::Compute => 1,
            SatState::Idle => 0,
        }
    }
}

impl fmt::Display for SatState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SatState::Idle => "idle",
            SatState::Rx => "rx",
            SatState::Tx => "tx",
            SatState::Compute => "compute",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimelineSegment {
    pub sat: SatelliteId,
    pub state: SatState,
    pub t0: f64,
    pub t1: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct StateTotals {
    pub idle_s: f64,
    pub rx_s: f64,
    pub tx_s: f64,
    pub compute_s: f64,
}

impl StateTotals {
    pub fn get(&self, s: SatState) -> f64 {
        match s {
            SatState::Idle => self.idle_s,
            SatState::Rx => self.rx_s,
            SatState::Tx => self.tx_s,
            SatState::Compute => self.compute_s,
        }
    }

    fn add(&mut self, s: SatState, dt: f64) {
        match s {
            SatState::Idle => self.idle_s += dt,
            SatState::Rx => self.rx_s += dt,
            SatState::Tx => self.tx_s += dt,
            SatState::Compute => self.compute_s += dt,
        }
    }

    pub fn elapsed(&self) -> f64 {
        self.idle_s + self.rx_s + self.tx_s + self.compute_s
    }

    pub fn from_segments(segs: &[TimelineSegment]) -> Self {
        let mut t = Self::default();
        for s in segs {
            t.add(s.state, s.t1 - s.t0);
        }
        t
    }
}

/// Turns possibly overlapping busy intervals into a gap-free partition of `[t0, t1]`,
/// filling uncovered time with `Idle` and resolving overlaps as Tx > Rx > Compute.
pub fn paint(sat: SatelliteId, busy: &[(SatState, f64, f64)], t0: f64, t1: f64) -> Vec<TimelineSegment> {
    let mut edges: Vec<(f64, usize, i32)> = Vec::with_capacity(busy.len() * 2);
    for &(s, a, b) in busy {
        let (a, b) = (a.max(t0), b.min(t1));
        if a < b && s != SatState::Idle {
            edges.push((a, s.priority(), 1));
            edges.push((b, s.priority(), -1));
        }
    }
    edges.sort_by(|x, y| x.0.total_cmp(&y.0));
    let mut active = [0i32; 4];
    let mut out: Vec<TimelineSegment> = Vec::new();
    let mut cursor = t0;
    let state_of = |active: &[i32; 4]| {
        SatState::ALL
            .into_iter()
            .filter(|s| active[s.priority()] > 0)
            .max_by_key(|s| s.priority())
            .unwrap_or(SatState::Idle)
    };
    let push = |out: &mut Vec<TimelineSegment>, state: SatState, a: f64, b: f64| {
        if b <= a {
            return;
        }
        match out.last_mut() {
            Some(last) if last.state == state && last.t1 == a => last.t1 = b,
            _ => out.push(TimelineSegment { sat, state, t0: a, t1: b }),
        }
    };
    let mut i = 0;
    while i < edges.len() {
        let t = edges[i].0;
        push(&mut out, state_of(&active), cursor, t);
        while i < edges.len() && edges[i].0 == t {
            active[edges[i].1] += edges[i].2;
            i += 1;
        }
        cursor = t;
    }
    push(&mut out, state_of(&active), cursor, t1);
    if out.is_empty() && t1 > t0 {
        out.push(TimelineSegment {
            sat,
            state: SatState::Idle,
            t0,
            t1,
        });
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    const S: SatelliteId = SatelliteId::new(0, 0);

    #[test]
    fn fills_gaps_with_idle() {
        let segs = paint(S, &[(SatState::Rx, 10.0, 11.0), (SatState::Compute, 11.0, 20.0)], 0.0, 30.0);
        let states: Vec<_> = segs.iter().map(|s| (s.state, s.t0, s.t1)).collect();
        assert_eq!(
            states,
            vec![
                (SatState::Idle, 0.0, 10.0),
                (SatState::Rx, 10.0, 11.0),
                (SatState::Compute, 11.0, 20.0),
                (SatState::Idle, 20.0, 30.0)
            ]
        );
    }

    #[test]
    fn transfer_overrides_compute() {
        let segs = paint(S, &[(SatState::Compute, 0.0, 10.0), (SatState::Tx, 4.0, 5.0)], 0.0, 10.0);
        let t = StateTotals::from_segments(&segs);
        assert_eq!((t.compute_s, t.tx_s, t.idle_s), (9.0, 1.0, 0.0));
    }

    #[test]
    fn empty_is_all_idle() {
        let segs = paint(S, &[], 0.0, 5.0);
        assert_eq!(segs.len(), 1);
        assert_eq!(segs[0].state, SatState::Idle);
    }

    proptest! {
        #[test]
        fn partition_without_gaps(raw in proptest::collection::vec((0usize..4, 0.0..100.0f64, 0.0..20.0f64), 0..30)) {
            let busy: Vec<_> = raw.iter().map(|&(s, a, d)| (SatState::ALL[s], a, a + d)).collect();
            let segs = paint(S, &busy, 0.0, 100.0);
            prop_assert_eq!(segs.first().unwrap().t0, 0.0);
            prop_assert_eq!(segs.last().unwrap().t1, 100.0);
            for w in segs.windows(2) {
                prop_assert_eq!(w[0].t1, w[1].t0);
                prop_assert!(w[0].state != w[1].state);
            }
            let total = StateTotals::from_segments(&segs).elapsed();
            prop_assert!((total - 100.0).abs() < 1e-9);
        }
    }
}
