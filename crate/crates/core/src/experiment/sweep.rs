use std::collections::BTreeSet;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::orbital::{builtin_catalog, station_subset, ConstellationSpec};
use crate::sim::{run_simulation, MetricsLog, SimConfig};
use crate::strategy::StrategyKind;

use super::report::{build_heatmap, write_heatmap_csv, write_line_csv, Metric};

pub const MANIFEST: &str = "manifest.csv";

#[derive(Debug, Clone, PartialEq)]
pub struct SweepSpec {
    /// Template for every cell; constellation size, stations, strategy and seed are replaced.
    pub base: SimConfig,
    pub clusters: Vec<usize>,
    pub sats_per_cluster: Vec<usize>,
    pub stations: Vec<usize>,
    pub variants: Vec<StrategyKind>,
    pub seeds: Vec<u64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct SweepCell {
    pub clusters: usize,
    pub sats_per_cluster: usize,
    pub stations: usize,
    pub variant: StrategyKind,
}

impl SweepCell {
    /// File-name-safe identifier, e.g. `c2_s10_g13_fedavg-schedule`.
    pub fn id(&self) -> String {
        format!(
            "c{}_s{}_g{}_{}-{}",
            self.clusters,
            self.sats_per_cluster,
            self.stations,
            self.variant.algorithm.name(),
            self.variant.augmentation.name()
        )
    }

    pub fn config(&self, base: &SimConfig, seed: u64) -> SimConfig {
        SimConfig {
            constellation: ConstellationSpec {
                n_clusters: self.clusters,
                sats_per_cluster: self.sats_per_cluster,
                ..base.constellation
            },
            stations: self.stations,
            strategy: self.variant,
            seed,
            ..base.clone()
        }
    }
}

impl SweepSpec {
    pub fn validate(&self) -> Result<()> {
        for (name, axis) in [
            ("clusters", &self.clusters),
            ("sats_per_cluster", &self.sats_per_cluster),
            ("stations", &self.stations),
        ] {
            if axis.is_empty() || axis.contains(&0) {
                return Err(Error::Config(format!("sweep axis {name} must list positive values, got {axis:?}")));
            }
            if axis.iter().collect::<BTreeSet<_>>().len() != axis.len() {
                return Err(Error::Config(format!("sweep axis {name} has duplicates: {axis:?}")));
            }
        }
        let catalog = builtin_catalog();
        for &g in &self.stations {
            station_subset(&catalog, g)?;
        }
        if self.variants.is_empty() || self.variants.iter().collect::<BTreeSet<_>>().len() != self.variants.len() {
            return Err(Error::Config(format!("sweep variants must be non-empty and distinct: {:?}", self.variants)));
        }
        if self.seeds.is_empty() {
            return Err(Error::Config("sweep needs at least one seed".into()));
        }
        Ok(())
    }

    /// Cartesian product in clusters, sats_per_cluster, stations, variant order.
    pub fn cells(&self) -> Vec<SweepCell> {
        let mut out = Vec::with_capacity(
            self.clusters.len() * self.sats_per_cluster.len() * self.stations.len() * self.variants.len(),
        );
        for &clusters in &self.clusters {
            for &sats_per_cluster in &self.sats_per_cluster {
                for &stations in &self.stations {
                    for &variant in &self.variants {
                        out.push(SweepCell {
                            clusters,
                            sats_per_cluster,
                            stations,
                            variant,
                        });
                    }
                }
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestRow {
    pub clusters: usize,
    pub sats_per_cluster: usize,
    pub stations: usize,
    pub variant: String,
    pub seed: u64,
    pub run: String,
    pub status: String,
    pub rounds: usize,
    pub message: String,
}

impl ManifestRow {
    pub fn ok(&self) -> bool {
        self.status == "ok"
    }

    pub fn cell(&self) -> Result<SweepCell> {
        Ok(SweepCell {
            clusters: self.clusters,
            sats_per_cluster: self.sats_per_cluster,
            stations: self.stations,
            variant: self.variant.parse()?,
        })
    }
}

#[derive(Debug)]
pub enum RunOutcome {
    Done(MetricsLog),
    Failed(Error),
}

fn run_path(dir: &Path, run: &str) -> PathBuf {
    dir.join("runs").join(format!("{run}.json"))
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

/// Runs every (cell, seed) pair on a bounded pool and records each outcome in
/// `manifest.csv`; failures are logged and skipped.
pub fn run_sweep(spec: &SweepSpec, out_dir: &Path, header: &[String], workers: Option<usize>) -> Result<Vec<ManifestRow>> {
    spec.validate()?;
    let runs_dir = out_dir.join("runs");
    fs::create_dir_all(&runs_dir).map_err(|e| Error::io(&runs_dir, e))?;
    let jobs: Vec<(SweepCell, u64)> = spec
        .cells()
        .into_iter()
        .flat_map(|c| spec.seeds.iter().map(move |&s| (c, s)))
        .collect();
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(w) = workers {
        builder = builder.num_threads(w.max(1));
    }
    let pool = builder
        .build()
        .map_err(|e| Error::Config(format!("cannot start worker pool: {e}")))?;
    let rows: Vec<ManifestRow> = pool.install(|| {
        jobs.par_iter()
            .map(|&(cell, seed)| {
                let run = format!("{}_seed{seed}", cell.id());
                let outcome = match run_simulation(&cell.config(&spec.base, seed)) {
                    Ok(log) => RunOutcome::Done(log),
                    Err(e) => RunOutcome::Failed(e),
                };
                let mut row = ManifestRow {
                    clusters: cell.clusters,
                    sats_per_cluster: cell.sats_per_cluster,
                    stations: cell.stations,
                    variant: cell.variant.to_string(),
                    seed,
                    run,
                    status: "ok".into(),
                    rounds: 0,
                    message: String::new(),
                };
                match outcome {
                    RunOutcome::Done(log) => {
                        row.rounds = log.completed_rounds();
                        row.message = log.note.clone().unwrap_or_default();
                        let json = serde_json::to_vec(&log).expect("metrics serialize");
                        write_file(&run_path(out_dir, &row.run), &json)?;
                    }
                    RunOutcome::Failed(e) => {
                        row.status = "failed".into();
                        row.message = e.to_string();
                    }
                }
                Ok(row)
            })
            .collect::<Result<Vec<_>>>()
    })?;
    write_manifest(out_dir, header, &rows)?;
    Ok(rows)
}

fn write_manifest(dir: &Path, header: &[String], rows: &[ManifestRow]) -> Result<()> {
    let path = dir.join(MANIFEST);
    let mut buf = Vec::new();
    for h in header {
        writeln!(buf, "{h}").expect("write to vec");
    }
    {
        let mut w = csv::Writer::from_writer(&mut buf);
        for r in rows {
            w.serialize(r).map_err(|e| Error::Config(format!("manifest: {e}")))?;
        }
        w.flush().map_err(|e| Error::io(&path, e))?;
    }
    write_file(&path, &buf)
}

/// Header comment lines and rows of a sweep directory's manifest.
pub fn read_manifest(dir: &Path) -> Result<(Vec<String>, Vec<ManifestRow>)> {
    let path = dir.join(MANIFEST);
    let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    let header = text.lines().take_while(|l| l.starts_with('#')).map(str::to_string).collect();
    let mut rdr = csv::ReaderBuilder::new().comment(Some(b'#')).from_reader(text.as_bytes());
    let mut rows = Vec::new();
    for (i, r) in rdr.deserialize().enumerate() {
        rows.push(r.map_err(|e| Error::Parse {
            path: path.clone(),
            line: i + 2,
            msg: e.to_string(),
        })?);
    }
    Ok((header, rows))
}

fn load_log(dir: &Path, run: &str) -> Result<MetricsLog> {
    let path = run_path(dir, run);
    let bytes = fs::read(&path).map_err(|e| Error::io(&path, e))?;
    serde_json::from_slice(&bytes).map_err(|e| Error::Parse {
        path,
        line: e.line(),
        msg: e.to_string(),
    })
}

/// Writes `heatmap_<metric>.csv` for each metric and `lines/<run>.csv` for each
/// successful run of a sweep directory; returns the files written.
pub fn emit_report(dir: &Path, metrics: &[Metric]) -> Result<Vec<PathBuf>> {
    let (header, rows) = read_manifest(dir)?;
    let mut logs = Vec::new();
    for r in rows.iter().filter(|r| r.ok()) {
        logs.push((r.cell()?, r.run.clone(), load_log(dir, &r.run)?));
    }
    let mut written = Vec::new();
    for &m in metrics {
        let entries: Vec<(SweepCell, &MetricsLog)> = logs.iter().map(|(c, _, l)| (*c, l)).collect();
        let table = build_heatmap(&entries, m, header.clone());
        let path = dir.join(format!("heatmap_{}.csv", m.name()));
        let mut buf = Vec::new();
        write_heatmap_csv(&table, &mut buf)?;
        write_file(&path, &buf)?;
        written.push(path);
    }
    let lines = dir.join("lines");
    fs::create_dir_all(&lines).map_err(|e| Error::io(&lines, e))?;
    for (_, run, log) in &logs {
        let path = lines.join(format!("{run}.csv"));
        let mut buf = Vec::new();
        write_line_csv(log, &header, &mut buf)?;
        write_file(&path, &buf)?;
        written.push(path);
    }
    Ok(written)
}
