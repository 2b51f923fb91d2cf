//! Access windows and the queries client selection is built on.
//!
//! A [`ContactTimeline`] holds, per satellite, every satellite-to-ground window
//! sorted by `(start, station index)`, plus intra-cluster satellite-to-satellite
//! windows keyed by the (ordered) satellite pair. Timelines are immutable once
//! built.

mod io;
mod scan;

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::orbital::SatelliteId;

pub use io::{export_windows_csv, import_windows_csv, read_windows_csv, write_windows_csv, ImportOptions};
pub use scan::{
    plan_contacts, ring_neighbors, scan_intersat_windows, scan_windows, ScanConfig,
};

/// The far end of an access window.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Counterpart {
    /// Index into [`ContactTimeline::stations`].
    Station(usize),
    Satellite(SatelliteId),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AccessWindow {
    pub sat: SatelliteId,
    pub counterpart: Counterpart,
    pub start_s: f64,
    pub end_s: f64,
}

impl AccessWindow {
    pub fn duration_s(&self) -> f64 {
        self.end_s - self.start_s
    }

    pub fn contains(&self, t: f64) -> bool {
        self.start_s <= t && t < self.end_s
    }
}

impl fmt::Display for AccessWindow {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} {:?} [{:.3}, {:.3})", self.sat, self.counterpart, self.start_s, self.end_s)
    }
}

#[derive(Debug, Clone, PartialEq)]
struct WindowList {
    windows: Vec<AccessWindow>,
    /// Longest window in the list, bounds the backward search in `next_contact`.
    max_len: f64,
}

impl WindowList {
    fn new(mut windows: Vec<AccessWindow>) -> Self {
        windows.sort_by(|a, b| a.start_s.total_cmp(&b.start_s).then(a.counterpart.cmp(&b.counterpart)));
        let max_len = windows.iter().map(AccessWindow::duration_s).fold(0.0, f64::max);
        Self { windows, max_len }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ContactTimeline {
    stations: Vec<String>,
    horizon: (f64, f64),
    ground: BTreeMap<SatelliteId, WindowList>,
    links: BTreeMap<(SatelliteId, SatelliteId), Vec<AccessWindow>>,
}

/// Result of [`round_trip_score`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RoundTrip {
    pub t_rx: f64,
    pub t_tx: f64,
    pub score_s: f64,
}

impl ContactTimeline {
    /// Builds a timeline, validating that windows lie inside the horizon and that
    /// windows of one endpoint pair are disjoint.
    pub fn new(stations: Vec<String>, horizon: (f64, f64), windows: Vec<AccessWindow>) -> Result<Self> {
        if !(horizon.0 < horizon.1) {
            return Err(Error::Validation(format!("empty horizon {horizon:?}")));
        }
        let mut per_pair: BTreeMap<(SatelliteId, Counterpart), Vec<AccessWindow>> = BTreeMap::new();
        for mut w in windows {
            if !(w.start_s < w.end_s) || !w.start_s.is_finite() || !w.end_s.is_finite() {
                return Err(Error::Validation(format!("window {w} has start >= end")));
            }
            if w.start_s < horizon.0 || w.end_s > horizon.1 {
                return Err(Error::Validation(format!("window {w} outside horizon {horizon:?}")));
            }
            match w.counterpart {
                Counterpart::Station(i) if i >= stations.len() => {
                    return Err(Error::Validation(format!("window {w} references unknown station {i}")));
                }
                Counterpart::Satellite(other) if other == w.sat => {
                    return Err(Error::Validation(format!("window {w} links a satellite to itself")));
                }
                Counterpart::Satellite(other) if other < w.sat => {
                    w = AccessWindow {
                        sat: other,
                        counterpart: Counterpart::Satellite(w.sat),
                        ..w
                    };
                }
                _ => {}
            }
            per_pair.entry((w.sat, w.counterpart)).or_default().push(w);
        }
        let mut ground: BTreeMap<SatelliteId, Vec<AccessWindow>> = BTreeMap::new();
        let mut links = BTreeMap::new();
        for ((sat, cp), mut list) in per_pair {
            list.sort_by(|a, b| a.start_s.total_cmp(&b.start_s));
            if let Some(pair) = list.windows(2).find(|p| p[1].start_s < p[0].end_s) {
                return Err(Error::Validation(format!("overlapping windows {} and {}", pair[0], pair[1])));
            }
            match cp {
                Counterpart::Station(_) => ground.entry(sat).or_default().extend(list),
                Counterpart::Satellite(other) => {
                    links.insert((sat, other), list);
                }
            }
        }
        Ok(Self {
            stations,
            horizon,
            ground: ground.into_iter().map(|(k, v)| (k, WindowList::new(v))).collect(),
            links,
        })
    }

    pub fn stations(&self) -> &[String] {
        &self.stations
    }

    pub fn horizon(&self) -> (f64, f64) {
        self.horizon
    }

    pub fn with_horizon(self, horizon: (f64, f64)) -> Result<Self> {
        let windows = self.all_windows();
        Self::new(self.stations, horizon, windows)
    }

    /// Ground windows of `sat`, sorted by `(start, station)`.
    pub fn ground_windows(&self, sat: SatelliteId) -> &[AccessWindow] {
        self.ground.get(&sat).map_or(&[], |l| &l.windows)
    }

    /// Windows between two satellites, in either argument order.
    pub fn link_windows(&self, a: SatelliteId, b: SatelliteId) -> &[AccessWindow] {
        let key = if a <= b { (a, b) } else { (b, a) };
        self.links.get(&key).map_or(&[], Vec::as_slice)
    }

    pub fn link_pairs(&self) -> impl Iterator<Item = (SatelliteId, SatelliteId)> + '_ {
        self.links.keys().copied()
    }

    /// Satellites that have at least one window of either kind.
    pub fn satellites(&self) -> Vec<SatelliteId> {
        let mut v: Vec<SatelliteId> = self
            .ground
            .keys()
            .copied()
            .chain(self.links.keys().flat_map(|(a, b)| [*a, *b]))
            .collect();
        v.sort();
        v.dedup();
        v
    }

    /// Every window, ground windows first in satellite order, then links.
    pub fn all_windows(&self) -> Vec<AccessWindow> {
        self.ground
            .values()
            .flat_map(|l| l.windows.iter().copied())
            .chain(self.links.values().flatten().copied())
            .collect()
    }

    pub fn is_linked_at(&self, a: SatelliteId, b: SatelliteId, t0: f64, t1: f64) -> bool {
        self.link_windows(a, b)
            .iter()
            .any(|w| w.start_s <= t0 && t1 <= w.end_s)
    }

    /// Ground window containing `t`, or else the next one to open, whose
    /// remaining length after `max(t, start)` is at least `min_remaining_s`.
    pub fn next_contact_fitting(&self, sat: SatelliteId, t: f64, min_remaining_s: f64) -> Option<AccessWindow> {
        let list = self.ground.get(&sat)?;
        let from = list
            .windows
            .partition_point(|w| w.start_s < t - list.max_len);
        list.windows[from..]
            .iter()
            .find(|w| w.end_s > t && w.end_s - w.start_s.max(t) >= min_remaining_s)
            .copied()
    }

    /// First ground window opening at or after `t` that is at least `min_len_s` long.
    pub fn next_window_start(&self, sat: SatelliteId, t: f64, min_len_s: f64) -> Option<AccessWindow> {
        let list = self.ground.get(&sat)?;
        let from = list.windows.partition_point(|w| w.start_s < t);
        list.windows[from..]
            .iter()
            .find(|w| w.duration_s() >= min_len_s)
            .copied()
    }
}

/// Earliest ground window of `sat` with `end > t`; the window containing `t` when
/// there is one. Ties on start go to the lower station index.
pub fn next_contact(timeline: &ContactTimeline, sat: SatelliteId, t: f64) -> Option<AccessWindow> {
    timeline.next_contact_fitting(sat, t, 0.0)
}

/// Receive at the next contact, train for `training_duration_s`, return at the
/// first contact opening after that. Score is the total waiting time.
pub fn round_trip_score(
    timeline: &ContactTimeline,
    sat: SatelliteId,
    t_now: f64,
    training_duration_s: f64,
) -> Option<RoundTrip> {
    let rx = next_contact(timeline, sat, t_now)?;
    let t_rx = rx.start_s.max(t_now);
    let ready = t_rx + training_duration_s;
    let tx = timeline.next_window_start(sat, ready, 0.0)?;
    let t_tx = tx.start_s;
    Some(RoundTrip {
        t_rx,
        t_tx,
        score_s: (t_rx - t_now) + (t_tx - ready),
    })
}
