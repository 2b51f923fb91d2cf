//! Deterministic discrete-event simulation of one constellation run.

mod engine;
mod metrics;
mod timeline;

pub use engine::{simulate, TraceRecord};
pub use metrics::{idle_breakdown, MetricsLog, RoundRecord};
pub use timeline::{paint, SatState, StateTotals, TimelineSegment};

use crate::contact::{plan_contacts, ContactTimeline, ScanConfig};
use crate::data::{prepare, DatasetSource, PreparedData};
use crate::error::{Error, Result};
use crate::fl::{HyperParams, ModelSpec};
use crate::orbital::{build_constellation, builtin_catalog, station_subset, ConstellationSpec, GroundStation};
use crate::strategy::{Algorithm, Augmentation, StrategyKind};

/// Seconds to move `bytes` at `bandwidth_bps`.
pub fn transfer_time(bytes: usize, bandwidth_bps: f64) -> f64 {
    8.0 * bytes as f64 / bandwidth_bps
}

/// Seconds for `epochs` local epochs.
pub fn compute_time(epochs: usize, flops_per_epoch: f64, flops_rate: f64) -> f64 {
    epochs as f64 * flops_per_epoch / flops_rate
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum EvalMode {
    /// Pooled held-out writers after every aggregation.
    #[default]
    Server,
    /// Server evaluation plus the clients the training rule would pick next.
    ServerAndClients,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimConfig {
    pub constellation: ConstellationSpec,
    /// Leading stations of the catalog; one of 1, 2, 3, 5, 10, 13.
    pub stations: usize,
    pub strategy: StrategyKind,
    pub hp: HyperParams,
    pub horizon_s: f64,
    pub max_rounds: usize,
    pub seed: u64,
    pub flops_rate: f64,
    pub flops_per_epoch: f64,
    pub bandwidth_bps: f64,
    /// Hidden layer widths; input and class counts come from the dataset.
    pub hidden: Vec<usize>,
    pub dataset: DatasetSource,
    /// Samples per satellite, inclusive.
    pub clip: (usize, usize),
    pub eval: EvalMode,
    pub scan: ScanConfig,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            constellation: ConstellationSpec::walker_star(2, 10),
            stations: 13,
            strategy: StrategyKind {
                algorithm: Algorithm::FedAvg,
                augmentation: Augmentation::Base,
            },
            hp: HyperParams::default(),
            horizon_s: 90.0 * 86_400.0,
            max_rounds: 500,
            seed: 0,
            flops_rate: 40e9,
            flops_per_epoch: 98e6,
            bandwidth_bps: 580e6,
            hidden: vec![58],
            dataset: DatasetSource::default(),
            clip: (200, 350),
            eval: EvalMode::Server,
            scan: ScanConfig::default(),
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        self.constellation.validate()?;
        self.hp.validate()?;
        StrategyKind::new(self.strategy.algorithm, self.strategy.augmentation)?;
        if !(self.horizon_s > 0.0 && self.horizon_s.is_finite()) {
            return Err(Error::Config(format!("horizon must be positive, got {} s", self.horizon_s)));
        }
        if self.max_rounds == 0 {
            return Err(Error::Config("max_rounds must be >= 1".into()));
        }
        for (name, v) in [
            ("flops_rate", self.flops_rate),
            ("flops_per_epoch", self.flops_per_epoch),
            ("bandwidth_bps", self.bandwidth_bps),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::Config(format!("{name} must be positive, got {v}")));
            }
        }
        if self.clip.0 > self.clip.1 || self.clip.1 == 0 {
            return Err(Error::Config(format!("invalid sample clip {:?}", self.clip)));
        }
        Ok(())
    }

    pub fn station_list(&self) -> Result<Vec<GroundStation>> {
        station_subset(&builtin_catalog(), self.stations)
    }

    pub fn epoch_s(&self) -> f64 {
        compute_time(1, self.flops_per_epoch, self.flops_rate)
    }

    pub fn model_spec(&self, data: &PreparedData) -> Result<ModelSpec> {
        ModelSpec::new(data.input_dim, self.hidden.clone(), data.classes)
    }
}

/// Ground windows for the configured constellation and stations, plus ring links
/// when the strategy relays.
pub fn build_timeline(cfg: &SimConfig) -> Result<ContactTimeline> {
    cfg.validate()?;
    let sats = build_constellation(&cfg.constellation, &cfg.scan.earth)?;
    plan_contacts(
        &sats,
        &cfg.station_list()?,
        (0.0, cfg.horizon_s),
        &cfg.scan,
        cfg.strategy.augmentation.relays(),
    )
}

pub fn prepare_data(cfg: &SimConfig) -> Result<PreparedData> {
    prepare(&cfg.dataset, &cfg.constellation.satellite_ids(), cfg.clip, cfg.seed)
}

/// Plans contacts, prepares data and runs the configured strategy.
pub fn run_simulation(cfg: &SimConfig) -> Result<MetricsLog> {
    cfg.validate()?;
    if cfg.constellation.total() < 2 {
        return Ok(engine::single_satellite(cfg));
    }
    let timeline = build_timeline(cfg)?;
    let data = prepare_data(cfg)?;
    simulate(cfg, &timeline, &data, None)
}
