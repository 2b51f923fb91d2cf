//! Space-adapted FL round policies: client selection, relays, buffering and
//! the minimum-epoch rule.

mod access;

pub use access::{relay_route_intra_cluster, AccessView, Direction, RelayRoute};

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fl::ModelParams;
use crate::orbital::SatelliteId;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Algorithm {
    FedAvg,
    FedProx,
    FedBuff,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Augmentation {
    Base,
    Schedule,
    ScheduleV2,
    /// Scheduled selection plus intra-cluster relays.
    IntraCc,
}

impl Algorithm {
    pub const ALL: [Algorithm; 3] = [Algorithm::FedAvg, Algorithm::FedProx, Algorithm::FedBuff];

    /// Augmentations each algorithm is defined with.
    pub fn augmentations(self) -> &'static [Augmentation] {
        use Augmentation::*;
        match self {
            Algorithm::FedAvg => &[Base, Schedule, IntraCc],
            Algorithm::FedProx => &[Base, Schedule, ScheduleV2, IntraCc],
            Algorithm::FedBuff => &[Base],
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Algorithm::FedAvg => "fedavg",
            Algorithm::FedProx => "fedprox",
            Algorithm::FedBuff => "fedbuff",
        }
    }
}

impl Augmentation {
    pub fn name(self) -> &'static str {
        match self {
            Augmentation::Base => "base",
            Augmentation::Schedule => "schedule",
            Augmentation::ScheduleV2 => "schedule_v2",
            Augmentation::IntraCc => "intra_cc",
        }
    }

    pub fn scheduled(self) -> bool {
        !matches!(self, Augmentation::Base)
    }

    pub fn relays(self) -> bool {
        matches!(self, Augmentation::IntraCc)
    }
}

impl FromStr for Algorithm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Algorithm::ALL
            .into_iter()
            .find(|a| a.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown strategy {s:?}; expected fedavg, fedprox or fedbuff")))
    }
}

impl FromStr for Augmentation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        use Augmentation::*;
        [Base, Schedule, ScheduleV2, IntraCc]
            .into_iter()
            .find(|a| a.name() == s)
            .ok_or_else(|| {
                Error::Config(format!(
                    "unknown augmentation {s:?}; expected base, schedule, schedule_v2 or intra_cc"
                ))
            })
    }
}

/// An algorithm with one of its augmentations.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct StrategyKind {
    pub algorithm: Algorithm,
    pub augmentation: Augmentation,
}

impl StrategyKind {
    pub fn new(algorithm: Algorithm, augmentation: Augmentation) -> Result<Self> {
        if !algorithm.augmentations().contains(&augmentation) {
            let valid: Vec<&str> = algorithm.augmentations().iter().map(|a| a.name()).collect();
            return Err(Error::Config(format!(
                "{} does not support augmentation {}; valid: {}",
                algorithm.name(),
                augmentation.name(),
                valid.join(", ")
            )));
        }
        Ok(Self { algorithm, augmentation })
    }

    /// Every valid combination: 3 + 4 + 1 variants.
    pub fn all() -> Vec<StrategyKind> {
        Algorithm::ALL
            .into_iter()
            .flat_map(|a| a.augmentations().iter().map(move |&g| StrategyKind { algorithm: a, augmentation: g }))
            .collect()
    }

    /// Short label such as `FedAvgSch` or `FedProxIntraSL`.
    pub fn label(&self) -> String {
        let base = match self.algorithm {
            Algorithm::FedAvg => "FedAvg",
            Algorithm::FedProx => "FedProx",
            Algorithm::FedBuff => "FedBuff",
        };
        let suffix = match self.augmentation {
            Augmentation::Base => "",
            Augmentation::Schedule => "Sch",
            Augmentation::ScheduleV2 => "SchV2",
            Augmentation::IntraCc => "IntraSL",
        };
        format!("{base}{suffix}")
    }
}

impl fmt::Display for StrategyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.algorithm.name(), self.augmentation.name())
    }
}

impl FromStr for StrategyKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let (a, g) = s.split_once(':').unwrap_or((s, "base"));
        StrategyKind::new(a.parse()?, g.parse()?)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ClientStatus {
    Idle,
    AwaitingModel,
    Training,
    AwaitingReturn,
}

impl ClientStatus {
    /// Idle -> AwaitingModel -> Training -> AwaitingReturn -> Idle.
    pub fn advance(self, to: ClientStatus) -> Result<ClientStatus> {
        use ClientStatus::*;
        let ok = matches!(
            (self, to),
            (Idle, AwaitingModel) | (AwaitingModel, Training) | (Training, AwaitingReturn) | (AwaitingReturn, Idle)
        );
        if ok {
            Ok(to)
        } else {
            Err(Error::Validation(format!("illegal client transition {self:?} -> {to:?}")))
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RoundState {
    pub round_idx: usize,
    pub selected: Vec<SatelliteId>,
    pub received: BTreeMap<SatelliteId, (ModelParams, usize)>,
    pub t_round_start: f64,
    pub t_round_end: Option<f64>,
}

impl RoundState {
    pub fn new(round_idx: usize, selected: Vec<SatelliteId>, t: f64) -> Self {
        Self {
            round_idx,
            selected,
            received: BTreeMap::new(),
            t_round_start: t,
            t_round_end: None,
        }
    }

    /// Records a returned model; only selected clients may return, once each.
    pub fn receive(&mut self, sat: SatelliteId, w: ModelParams, n: usize) -> Result<()> {
        if !self.selected.contains(&sat) {
            return Err(Error::Validation(format!("{sat} returned without being selected")));
        }
        if self.received.insert(sat, (w, n)).is_some() {
            return Err(Error::Validation(format!("{sat} returned twice in round {}", self.round_idx)));
        }
        Ok(())
    }

    pub fn complete(&self) -> bool {
        self.received.len() == self.selected.len()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BufferEntry<T = ModelParams> {
    pub client: SatelliteId,
    pub params: T,
    pub n: usize,
    pub staleness: usize,
}

/// Server-side accumulator that releases its contents once it holds `d` updates.
#[derive(Debug, Clone, PartialEq)]
pub struct BufferState<T = ModelParams> {
    pub d: usize,
    pub staleness_max: usize,
    pub contents: Vec<BufferEntry<T>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Deposit {
    Rejected { staleness: usize },
    Buffered,
    /// The buffer reached `d`; take it with [`BufferState::drain`].
    Full,
}

impl<T> BufferState<T> {
    pub fn new(d: usize, staleness_max: usize) -> Self {
        Self {
            d: d.max(1),
            staleness_max,
            contents: Vec::new(),
        }
    }

    pub fn deposit(&mut self, entry: BufferEntry<T>) -> Deposit {
        if entry.staleness > self.staleness_max {
            return Deposit::Rejected {
                staleness: entry.staleness,
            };
        }
        self.contents.push(entry);
        if self.contents.len() >= self.d {
            Deposit::Full
        } else {
            Deposit::Buffered
        }
    }

    pub fn drain(&mut self) -> Vec<BufferEntry<T>> {
        std::mem::take(&mut self.contents)
    }
}

/// When a proximal client may return: it trains from model receipt and takes the
/// first fresh contact after `min_epochs` epochs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct ProxPolicy {
    pub min_epochs: usize,
}

impl ProxPolicy {
    /// Earliest time parameters may leave a client whose model arrived at `rx_end`.
    pub fn ready_at(&self, rx_end: f64, epoch_s: f64) -> f64 {
        rx_end + self.min_epochs as f64 * epoch_s
    }

    /// Whole epochs that fit between model receipt and the return contact.
    pub fn epochs_done(&self, rx_end: f64, t_tx: f64, epoch_s: f64) -> usize {
        if epoch_s <= 0.0 {
            return 0;
        }
        let n = ((t_tx - rx_end) / epoch_s).floor().max(0.0) as usize;
        // Guard the rounding at exact multiples so the minimum is never undercounted.
        if t_tx >= self.ready_at(rx_end, epoch_s) {
            n.max(self.min_epochs)
        } else {
            n
        }
    }
}

/// Makes `policy` skip return contacts until `min_epochs` epochs are done.
pub fn enforce_min_epochs(policy: ProxPolicy, min_epochs: usize) -> ProxPolicy {
    ProxPolicy {
        min_epochs: policy.min_epochs.max(min_epochs),
    }
}

fn idle(statuses: &BTreeMap<SatelliteId, ClientStatus>, s: SatelliteId) -> bool {
    statuses.get(&s).is_none_or(|st| *st == ClientStatus::Idle)
}

/// The `c` idle satellites whose next contact begins earliest after `t`; ties go
/// to the lower id.
pub fn select_clients_first_contact(
    view: &AccessView<'_>,
    sats: &[SatelliteId],
    statuses: &BTreeMap<SatelliteId, ClientStatus>,
    t: f64,
    c: usize,
) -> Vec<SatelliteId> {
    let mut cand: Vec<(f64, SatelliteId)> = sats
        .iter()
        .filter(|s| idle(statuses, **s))
        .filter_map(|&s| view.next_rx(s, t).map(|r| (r.t_s, s)))
        .collect();
    cand.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    cand.into_iter().take(c).map(|(_, s)| s).collect()
}

/// The `c` idle satellites with the smallest round-trip waiting time for
/// `training_s` of local work; satellites that cannot return in the horizon are skipped.
pub fn select_clients_scheduled(
    view: &AccessView<'_>,
    sats: &[SatelliteId],
    statuses: &BTreeMap<SatelliteId, ClientStatus>,
    t: f64,
    c: usize,
    training_s: f64,
) -> Vec<SatelliteId> {
    let mut cand: Vec<(f64, SatelliteId)> = sats
        .iter()
        .filter(|s| idle(statuses, **s))
        .filter_map(|&s| view.round_trip_score(s, t, training_s).map(|(_, _, score)| (score, s)))
        .collect();
    cand.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    cand.into_iter().take(c).map(|(_, s)| s).collect()
}

/// Evaluation clients follow the training selection rule.
pub fn select_evaluation_clients(
    view: &AccessView<'_>,
    sats: &[SatelliteId],
    statuses: &BTreeMap<SatelliteId, ClientStatus>,
    t: f64,
    c: usize,
    scheduled: Option<f64>,
) -> Vec<SatelliteId> {
    match scheduled {
        Some(training_s) => select_clients_scheduled(view, sats, statuses, t, c, training_s),
        None => select_clients_first_contact(view, sats, statuses, t, c),
    }
}
