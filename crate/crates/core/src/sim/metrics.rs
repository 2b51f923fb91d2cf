use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::orbital::SatelliteId;

use super::timeline::{SatState, StateTotals, TimelineSegment};

/// One aggregation of the global model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundRecord {
    pub round_idx: usize,
    pub t_start: f64,
    pub t_end: f64,
    pub duration_s: f64,
    pub participants: Vec<SatelliteId>,
    /// Server-side accuracy on the held-out writers.
    pub accuracy: f64,
    pub loss: f64,
    /// Mean accuracy over the evaluation clients when client-side evaluation is on.
    pub client_accuracy: Option<f64>,
    /// Mean local epochs per participant.
    pub mean_epochs: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsLog {
    pub rounds: Vec<RoundRecord>,
    pub totals: BTreeMap<SatelliteId, StateTotals>,
    /// End of the accounted simulation time.
    pub t_stop: f64,
    /// Set when the last round could not finish inside the horizon.
    pub incomplete_round: bool,
    pub note: Option<String>,
    #[serde(skip)]
    pub segments: BTreeMap<SatelliteId, Vec<TimelineSegment>>,
}

impl MetricsLog {
    pub fn completed_rounds(&self) -> usize {
        self.rounds.len()
    }

    /// Best server accuracy; 0 when no round completed.
    pub fn max_accuracy(&self) -> f64 {
        self.rounds.iter().map(|r| r.accuracy).fold(0.0, f64::max)
    }

    pub fn mean_round_duration_s(&self) -> Option<f64> {
        if self.rounds.is_empty() {
            return None;
        }
        Some(self.rounds.iter().map(|r| r.duration_s).sum::<f64>() / self.rounds.len() as f64)
    }

    pub fn mean_round_duration_h(&self) -> Option<f64> {
        self.mean_round_duration_s().map(|s| s / 3600.0)
    }

    /// Idle seconds per satellite per simulated hour.
    pub fn idle_s_per_satellite_per_hour(&self) -> f64 {
        self.idle_fraction() * 3600.0
    }

    /// Mean over satellites of idle time divided by elapsed time.
    pub fn idle_fraction(&self) -> f64 {
        let fr: Vec<f64> = self
            .totals
            .values()
            .filter(|t| t.elapsed() > 0.0)
            .map(|t| t.idle_s / t.elapsed())
            .collect();
        if fr.is_empty() {
            0.0
        } else {
            fr.iter().sum::<f64>() / fr.len() as f64
        }
    }
}

/// Time spent in each state by `sat`; the values sum to the accounted time.
pub fn idle_breakdown(log: &MetricsLog, sat: SatelliteId) -> Result<BTreeMap<SatState, f64>> {
    let t = log.totals.get(&sat).ok_or_else(|| Error::UnknownSatellite(sat.to_string()))?;
    Ok(SatState::ALL.into_iter().map(|s| (s, t.get(s))).collect())
}
