//! Ground access for a training satellite, directly or through ring neighbours.

use std::collections::{BTreeMap, VecDeque};

use crate::contact::{AccessWindow, ContactTimeline};
use crate::orbital::SatelliteId;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    /// Ground to satellite: any window open at or after `t`.
    Down,
    /// Satellite to ground: a fresh window, opening at or after `t`.
    Up,
}

/// A transfer between the ground and `path[0]` relayed along `path`.
#[derive(Debug, Clone, PartialEq)]
pub struct RelayRoute {
    /// When the first hop begins.
    pub t_s: f64,
    /// Training satellite first, ground-linked member last; `[self]` for a direct contact.
    pub path: Vec<SatelliteId>,
}

impl RelayRoute {
    pub fn hops(&self) -> usize {
        self.path.len() - 1
    }

    /// One transfer per hop plus the ground leg.
    pub fn duration_s(&self, transfer_s: f64) -> f64 {
        (self.hops() + 1) as f64 * transfer_s
    }

    pub fn end_s(&self, transfer_s: f64) -> f64 {
        self.t_s + self.duration_s(transfer_s)
    }
}

/// Ring hop distances from `from` over links active during `[t0, t1]`.
fn ring_distances(tl: &ContactTimeline, members: &[SatelliteId], from: SatelliteId, t0: f64, t1: f64) -> BTreeMap<SatelliteId, Vec<SatelliteId>> {
    let mut paths: BTreeMap<SatelliteId, Vec<SatelliteId>> = BTreeMap::new();
    paths.insert(from, vec![from]);
    let mut queue = VecDeque::from([from]);
    while let Some(cur) = queue.pop_front() {
        for &m in members {
            if !paths.contains_key(&m) && m != cur && tl.is_linked_at(cur, m, t0, t1) {
                let mut p = paths[&cur].clone();
                p.push(m);
                paths.insert(m, p);
                queue.push_back(m);
            }
        }
    }
    paths
}

fn candidate(tl: &ContactTimeline, m: SatelliteId, t: f64, need: f64, dir: Direction) -> Option<AccessWindow> {
    match dir {
        Direction::Down => tl.next_contact_fitting(m, t, need),
        Direction::Up => tl.next_window_start(m, t, need),
    }
}

/// Shortest ring path from `sat` to a cluster member in ground contact, at the
/// earliest time at or after `t` when one exists. The training satellite wins
/// whenever it is itself in contact.
///
/// Candidate times are `t` and the opening of member windows; routes need every
/// link and the ground window to persist for the whole relayed transfer.
pub fn relay_route_intra_cluster(
    tl: &ContactTimeline,
    members: &[SatelliteId],
    sat: SatelliteId,
    t: f64,
    dir: Direction,
    transfer_s: f64,
) -> Option<RelayRoute> {
    let max_span = members.len().max(1) as f64 * transfer_s;
    let mut cursors: Vec<(f64, SatelliteId, AccessWindow)> = members
        .iter()
        .chain(std::iter::once(&sat))
        .filter_map(|&m| candidate(tl, m, t, transfer_s, dir).map(|w| (w.start_s.max(t), m, w)))
        .collect();
    cursors.sort_by_key(|a| a.1);
    cursors.dedup_by(|a, b| a.1 == b.1);
    loop {
        let tau = cursors.iter().map(|c| c.0).fold(f64::INFINITY, f64::min);
        if !tau.is_finite() {
            return None;
        }
        let reach = ring_distances(tl, members, sat, tau, tau + max_span);
        let mut best: Option<&Vec<SatelliteId>> = None;
        for (start, m, w) in &cursors {
            let Some(path) = reach.get(m) else { continue };
            let open = *start <= tau && w.end_s >= tau + path.len() as f64 * transfer_s;
            if !open {
                continue;
            }
            let better = match best {
                None => true,
                Some(b) => path.len() < b.len() || (path.len() == b.len() && path.last() < b.last()),
            };
            if better {
                best = Some(path);
            }
        }
        if let Some(path) = best {
            return Some(RelayRoute {
                t_s: tau,
                path: path.clone(),
            });
        }
        // Nothing usable at tau: move every member sitting at tau past its current window.
        for c in cursors.iter_mut().filter(|c| c.0 <= tau) {
            let after = match dir {
                Direction::Down => c.2.end_s,
                Direction::Up => c.2.start_s.next_up(),
            };
            *c = match candidate(tl, c.1, after, transfer_s, dir) {
                Some(w) => (w.start_s.max(after), c.1, w),
                None => (f64::INFINITY, c.1, c.2),
            };
        }
    }
}

/// Contact lookups used by the strategies, with or without intra-cluster relays.
#[derive(Debug, Clone)]
pub struct AccessView<'a> {
    timeline: &'a ContactTimeline,
    clusters: Option<BTreeMap<usize, Vec<SatelliteId>>>,
    transfer_s: f64,
}

impl<'a> AccessView<'a> {
    pub fn direct(timeline: &'a ContactTimeline, transfer_s: f64) -> Self {
        Self {
            timeline,
            clusters: None,
            transfer_s,
        }
    }

    pub fn with_relays(timeline: &'a ContactTimeline, sats: &[SatelliteId], transfer_s: f64) -> Self {
        let mut clusters: BTreeMap<usize, Vec<SatelliteId>> = BTreeMap::new();
        for s in sats {
            clusters.entry(s.cluster_idx).or_default().push(*s);
        }
        Self {
            timeline,
            clusters: Some(clusters),
            transfer_s,
        }
    }

    pub fn timeline(&self) -> &ContactTimeline {
        self.timeline
    }

    pub fn transfer_s(&self) -> f64 {
        self.transfer_s
    }

    fn route(&self, sat: SatelliteId, t: f64, dir: Direction) -> Option<RelayRoute> {
        match &self.clusters {
            Some(c) => {
                let members = c.get(&sat.cluster_idx).map_or(&[][..], Vec::as_slice);
                relay_route_intra_cluster(self.timeline, members, sat, t, dir, self.transfer_s)
            }
            None => candidate(self.timeline, sat, t, self.transfer_s, dir).map(|w| RelayRoute {
                t_s: w.start_s.max(t),
                path: vec![sat],
            }),
        }
    }

    /// Earliest contact, open at `t` or later, able to carry the global model up to `sat`.
    pub fn next_rx(&self, sat: SatelliteId, t: f64) -> Option<RelayRoute> {
        self.route(sat, t, Direction::Down)
    }

    /// First fresh contact opening at or after `t_ready` for returning parameters.
    pub fn next_tx(&self, sat: SatelliteId, t_ready: f64) -> Option<RelayRoute> {
        self.route(sat, t_ready, Direction::Up)
    }

    /// Waiting time of a full round trip started at `t_now`: receive at the next contact,
    /// train for `training_s`, return at the next fresh contact.
    pub fn round_trip_score(&self, sat: SatelliteId, t_now: f64, training_s: f64) -> Option<(RelayRoute, RelayRoute, f64)> {
        let rx = self.next_rx(sat, t_now)?;
        let ready = rx.end_s(self.transfer_s) + training_s;
        let tx = self.next_tx(sat, ready)?;
        let score = (rx.t_s - t_now) + (tx.t_s - ready);
        Some((rx, tx, score))
    }
}
