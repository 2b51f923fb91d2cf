//! Experiment configuration, sweeps and CSV reports.

mod report;
mod sweep;

pub use report::{
    build_heatmap, fmt_sig6, read_heatmap_csv, write_heatmap_csv, write_line_csv, HeatmapRow, HeatmapTable, Metric,
};
pub use sweep::{emit_report, read_manifest, run_sweep, ManifestRow, RunOutcome, SweepCell, SweepSpec};

use std::f64::consts::PI;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use chrono::{NaiveDate, NaiveDateTime};
use serde::{Deserialize, Serialize};

use crate::contact::ScanConfig;
use crate::error::{Error, Result};
use crate::fl::HyperParams;
use crate::orbital::ConstellationSpec;
use crate::sim::{EvalMode, SimConfig};
use crate::strategy::StrategyKind;

/// Named scale presets.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Profile {
    /// 7 simulated days on a {1,2} x {2,10} x {1,3,13} grid.
    Desk,
    /// The full calendar range and the 4 x 4 x 6 grid.
    Paper,
}

impl FromStr for Profile {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "desk" => Ok(Profile::Desk),
            "paper" => Ok(Profile::Paper),
            _ => Err(Error::Config(format!("unknown profile {s:?}; expected desk or paper"))),
        }
    }
}

impl fmt::Display for Profile {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Profile::Desk => "desk",
            Profile::Paper => "paper",
        })
    }
}

impl Profile {
    fn grid(self) -> (Vec<usize>, Vec<usize>, Vec<usize>) {
        match self {
            Profile::Desk => (vec![1, 2], vec![2, 10], vec![1, 3, 13]),
            Profile::Paper => (vec![1, 2, 5, 10], vec![1, 2, 5, 10], vec![1, 2, 3, 5, 10, 13]),
        }
    }
}

/// Sweep axes; unset lists fall back to the profile grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SweepSection {
    pub clusters: Option<Vec<usize>>,
    pub sats_per_cluster: Option<Vec<usize>>,
    pub stations: Option<Vec<usize>>,
    /// `algorithm:augmentation` keys; all eight variants when unset.
    pub variants: Option<Vec<String>>,
    pub seeds: Vec<u64>,
    /// Concurrent runs; the rayon default when unset.
    pub workers: Option<usize>,
}

impl Default for SweepSection {
    fn default() -> Self {
        Self {
            clusters: None,
            sats_per_cluster: None,
            stations: None,
            variants: None,
            seeds: (0..5).collect(),
            workers: None,
        }
    }
}

/// File-level configuration; every field has a default so an empty file is valid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    pub clusters: usize,
    pub sats_per_cluster: usize,
    pub altitude_km: f64,
    pub inclination_deg: f64,
    pub stations: usize,
    pub elevation_mask_deg: f64,
    pub strategy: String,
    /// UTC calendar start, `YYYY-MM-DD` or `YYYY-MM-DDTHH:MM:SS`.
    pub start: String,
    pub end: String,
    /// Overrides the calendar range when set.
    pub horizon_days: Option<f64>,
    pub max_rounds: usize,
    pub seed: u64,
    pub flops_rate: f64,
    pub flops_per_epoch: f64,
    pub bandwidth_bps: f64,
    pub hidden: Vec<usize>,
    /// `synthetic[:k=v,...]` or `femnist:<dir>`.
    pub dataset: String,
    pub clip: [usize; 2],
    /// `server` or `server_and_clients`.
    pub eval: String,
    pub hyperparams: HyperParams,
    pub sweep: SweepSection,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        let sim = SimConfig::default();
        Self {
            clusters: sim.constellation.n_clusters,
            sats_per_cluster: sim.constellation.sats_per_cluster,
            altitude_km: sim.constellation.altitude_km,
            inclination_deg: sim.constellation.inclination_rad.to_degrees(),
            stations: sim.stations,
            elevation_mask_deg: sim.scan.min_elev_rad.to_degrees(),
            strategy: sim.strategy.to_string(),
            start: "2024-04-14".into(),
            end: "2024-07-13".into(),
            horizon_days: None,
            max_rounds: sim.max_rounds,
            seed: sim.seed,
            flops_rate: sim.flops_rate,
            flops_per_epoch: sim.flops_per_epoch,
            bandwidth_bps: sim.bandwidth_bps,
            hidden: sim.hidden,
            dataset: sim.dataset.to_string(),
            clip: [sim.clip.0, sim.clip.1],
            eval: "server".into(),
            hyperparams: sim.hp,
            sweep: SweepSection::default(),
        }
    }
}

fn parse_instant(s: &str) -> Result<NaiveDateTime> {
    if let Ok(d) = NaiveDate::parse_from_str(s, "%Y-%m-%d") {
        return Ok(d.and_hms_opt(0, 0, 0).expect("midnight exists"));
    }
    NaiveDateTime::parse_from_str(s, "%Y-%m-%dT%H:%M:%S")
        .map_err(|e| Error::Config(format!("bad date {s:?} (want YYYY-MM-DD[THH:MM:SS]): {e}")))
}

/// Greenwich mean sidereal angle at a UTC instant.
pub fn gmst_rad(t: NaiveDateTime) -> f64 {
    let jd = 2_440_587.5 + t.and_utc().timestamp() as f64 / 86_400.0;
    let deg = 280.460_618_37 + 360.985_647_366_29 * (jd - 2_451_545.0);
    deg.rem_euclid(360.0).to_radians()
}

fn value_from_text(text: &str) -> toml::Value {
    match toml::from_str::<toml::Table>(&format!("v = {text}")) {
        Ok(mut t) => t.remove("v").expect("key present"),
        Err(_) => toml::Value::String(text.to_string()),
    }
}

/// Applies a `dotted.key=value` override; values parse as TOML, else as bare strings.
fn apply_override(table: &mut toml::Table, spec: &str) -> Result<()> {
    let (key, value) = spec
        .split_once('=')
        .ok_or_else(|| Error::Config(format!("override {spec:?} is not key=value")))?;
    let parts: Vec<&str> = key.trim().split('.').collect();
    let mut cur = table;
    for p in &parts[..parts.len() - 1] {
        let entry = cur
            .entry(p.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()));
        cur = entry
            .as_table_mut()
            .ok_or_else(|| Error::Config(format!("override {key:?}: {p:?} is not a table")))?;
    }
    cur.insert(parts[parts.len() - 1].to_string(), value_from_text(value.trim()));
    Ok(())
}

/// Reads a TOML config (or defaults when `path` is `None`) and applies overrides.
pub fn parse_config(path: Option<&Path>, overrides: &[String]) -> Result<ExperimentConfig> {
    let text = match path {
        Some(p) => std::fs::read_to_string(p)
            .map_err(|e| Error::Config(format!("cannot read config {}: {e}", p.display())))?,
        None => String::new(),
    };
    parse_config_str(&text, overrides)
}

pub fn parse_config_str(text: &str, overrides: &[String]) -> Result<ExperimentConfig> {
    let mut table: toml::Table = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
    for o in overrides {
        apply_override(&mut table, o)?;
    }
    let cfg: ExperimentConfig = table.try_into().map_err(|e: toml::de::Error| Error::Config(e.to_string()))?;
    cfg.sim_config(None)?;
    Ok(cfg)
}

impl ExperimentConfig {
    /// Simulation horizon in seconds and the calendar instant of t = 0.
    pub fn horizon(&self, profile: Option<Profile>) -> Result<(NaiveDateTime, f64)> {
        let start = parse_instant(&self.start)?;
        let end = parse_instant(&self.end)?;
        if start >= end {
            return Err(Error::Config(format!("start {} must precede end {}", self.start, self.end)));
        }
        let seconds = match (self.horizon_days, profile) {
            (Some(d), _) => d * 86_400.0,
            (None, Some(Profile::Desk)) => 7.0 * 86_400.0,
            _ => (end - start).num_seconds() as f64,
        };
        Ok((start, seconds))
    }

    pub fn sim_config(&self, profile: Option<Profile>) -> Result<SimConfig> {
        let (start, horizon_s) = self.horizon(profile)?;
        let eval = match self.eval.as_str() {
            "server" => EvalMode::Server,
            "server_and_clients" => EvalMode::ServerAndClients,
            other => {
                return Err(Error::Config(format!(
                    "unknown eval mode {other:?}; expected server or server_and_clients"
                )))
            }
        };
        let scan = ScanConfig {
            min_elev_rad: self.elevation_mask_deg.to_radians(),
            gmst0_rad: gmst_rad(start),
            ..ScanConfig::default()
        };
        let cfg = SimConfig {
            constellation: ConstellationSpec {
                n_clusters: self.clusters,
                sats_per_cluster: self.sats_per_cluster,
                altitude_km: self.altitude_km,
                inclination_rad: self.inclination_deg.to_radians(),
                raan_spread_rad: PI,
            },
            stations: self.stations,
            strategy: self.strategy.parse()?,
            hp: self.hyperparams.clone(),
            horizon_s,
            max_rounds: self.max_rounds,
            seed: self.seed,
            flops_rate: self.flops_rate,
            flops_per_epoch: self.flops_per_epoch,
            bandwidth_bps: self.bandwidth_bps,
            hidden: self.hidden.clone(),
            dataset: self.dataset.parse()?,
            clip: (self.clip[0], self.clip[1]),
            eval,
            scan,
        };
        cfg.validate()?;
        cfg.station_list()?;
        if cfg.hidden.contains(&0) {
            return Err(Error::Config("hidden layer widths must be >= 1".into()));
        }
        Ok(cfg)
    }

    pub fn sweep_spec(&self, profile: Profile) -> Result<SweepSpec> {
        let (c, s, g) = profile.grid();
        let variants = match &self.sweep.variants {
            Some(v) => v.iter().map(|k| k.parse()).collect::<Result<Vec<StrategyKind>>>()?,
            None => StrategyKind::all(),
        };
        let spec = SweepSpec {
            base: self.sim_config(Some(profile))?,
            clusters: self.sweep.clusters.clone().unwrap_or(c),
            sats_per_cluster: self.sweep.sats_per_cluster.clone().unwrap_or(s),
            stations: self.sweep.stations.clone().unwrap_or(g),
            variants,
            seeds: self.sweep.seeds.clone(),
        };
        spec.validate()?;
        Ok(spec)
    }

    /// Every resolved setting as `# key=value` lines, sorted by key.
    pub fn header_lines(&self, profile: Option<Profile>) -> Vec<String> {
        let mut out = Vec::new();
        if let Ok(v) = toml::Value::try_from(self) {
            flatten("", &v, &mut out);
        }
        if let Some(p) = profile {
            out.push(format!("profile={p}"));
        }
        if let Ok((_, h)) = self.horizon(profile) {
            out.push(format!("horizon_s={h}"));
        }
        let hp = &self.hyperparams;
        if hp.d.is_none() {
            out.push("hyperparams.D=min(C,K)".into());
        }
        out.sort();
        out.into_iter().map(|l| format!("# {l}")).collect()
    }
}

fn flatten(prefix: &str, v: &toml::Value, out: &mut Vec<String>) {
    match v {
        toml::Value::Table(t) => {
            for (k, v) in t {
                let key = if prefix.is_empty() { k.clone() } else { format!("{prefix}.{k}") };
                flatten(&key, v, out);
            }
        }
        other => out.push(format!("{prefix}={other}")),
    }
}
