use std::collections::BTreeMap;
use std::fmt;
use std::io::{Read, Write};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sim::MetricsLog;

use super::sweep::SweepCell;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Metric {
    MaxAccuracy,
    /// Mean round duration in hours.
    RoundDuration,
    /// Idle seconds per satellite per simulated hour.
    IdleTime,
}

impl Metric {
    pub const ALL: [Metric; 3] = [Metric::MaxAccuracy, Metric::RoundDuration, Metric::IdleTime];

    pub fn name(self) -> &'static str {
        match self {
            Metric::MaxAccuracy => "max_accuracy",
            Metric::RoundDuration => "round_duration",
            Metric::IdleTime => "idle_time",
        }
    }

    pub fn column(self) -> &'static str {
        match self {
            Metric::MaxAccuracy => "max_accuracy",
            Metric::RoundDuration => "mean_round_duration_h",
            Metric::IdleTime => "idle_s_per_sat_per_h",
        }
    }

    pub fn of(self, log: &MetricsLog) -> Option<f64> {
        match self {
            Metric::MaxAccuracy => Some(log.max_accuracy()),
            Metric::RoundDuration => log.mean_round_duration_h(),
            Metric::IdleTime => Some(log.idle_s_per_satellite_per_hour()),
        }
    }
}

impl FromStr for Metric {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Metric::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown metric {s:?}; expected max_accuracy, round_duration or idle_time")))
    }
}

impl fmt::Display for Metric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Six significant digits, `%g` style, independent of locale.
pub fn fmt_sig6(x: f64) -> String {
    if x.is_nan() {
        return "nan".into();
    }
    if x.is_infinite() {
        return if x > 0.0 { "inf".into() } else { "-inf".into() };
    }
    if x == 0.0 {
        return "0".into();
    }
    let sci = format!("{x:.5e}");
    let (mantissa, exp) = sci.split_once('e').expect("exponent present");
    let exp: i32 = exp.parse().expect("integer exponent");
    if !(-4..6).contains(&exp) {
        let m = trim_zeros(mantissa);
        let sign = if exp < 0 { '-' } else { '+' };
        return format!("{m}e{sign}{:02}", exp.abs());
    }
    trim_zeros(&format!("{x:.*}", (5 - exp) as usize))
}

fn trim_zeros(s: &str) -> String {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.').to_string()
    } else {
        s.to_string()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HeatmapRow {
    pub clusters: usize,
    pub sats_per_cluster: usize,
    pub stations: usize,
    pub variant: String,
    pub value: f64,
    /// Runs that contributed to the mean.
    pub seeds: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct HeatmapTable {
    pub metric: Metric,
    /// `# key=value` lines echoed at the top of the file.
    pub header: Vec<String>,
    pub rows: Vec<HeatmapRow>,
}

/// Seed means per cell; accuracy of the 1 x 1 cell is pinned to 0.
pub fn build_heatmap(entries: &[(SweepCell, &MetricsLog)], metric: Metric, header: Vec<String>) -> HeatmapTable {
    let mut acc: BTreeMap<SweepCell, (f64, usize)> = BTreeMap::new();
    for (cell, log) in entries {
        let slot = acc.entry(*cell).or_insert((0.0, 0));
        if let Some(v) = metric.of(log) {
            slot.0 += v;
            slot.1 += 1;
        }
    }
    let rows = acc
        .into_iter()
        .map(|(c, (sum, n))| {
            let single = c.clusters == 1 && c.sats_per_cluster == 1;
            let value = if metric == Metric::MaxAccuracy && single {
                0.0
            } else if n == 0 {
                f64::NAN
            } else {
                sum / n as f64
            };
            HeatmapRow {
                clusters: c.clusters,
                sats_per_cluster: c.sats_per_cluster,
                stations: c.stations,
                variant: c.variant.to_string(),
                value,
                seeds: n,
            }
        })
        .collect();
    HeatmapTable { metric, header, rows }
}

fn csv_err(e: csv::Error) -> Error {
    Error::Config(format!("csv: {e}"))
}

pub fn write_heatmap_csv<W: Write>(table: &HeatmapTable, mut out: W) -> Result<()> {
    for h in &table.header {
        writeln!(out, "{h}").map_err(|e| Error::io("<heatmap>", e))?;
    }
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["clusters", "sats_per_cluster", "stations", "variant", table.metric.column(), "seeds"])
        .map_err(csv_err)?;
    for r in &table.rows {
        w.write_record([
            r.clusters.to_string(),
            r.sats_per_cluster.to_string(),
            r.stations.to_string(),
            r.variant.clone(),
            fmt_sig6(r.value),
            r.seeds.to_string(),
        ])
        .map_err(csv_err)?;
    }
    w.flush().map_err(|e| Error::io("<heatmap>", e))
}

pub fn read_heatmap_csv<R: Read>(mut input: R) -> Result<HeatmapTable> {
    let mut text = String::new();
    input.read_to_string(&mut text).map_err(|e| Error::io("<heatmap>", e))?;
    let header: Vec<String> = text.lines().take_while(|l| l.starts_with('#')).map(str::to_string).collect();
    let mut rdr = csv::ReaderBuilder::new().comment(Some(b'#')).from_reader(text.as_bytes());
    let cols = rdr.headers().map_err(csv_err)?.clone();
    let metric = Metric::ALL
        .into_iter()
        .find(|m| cols.get(4) == Some(m.column()))
        .ok_or_else(|| Error::Config(format!("heatmap has no known metric column: {cols:?}")))?;
    let mut rows = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(csv_err)?;
        let field = |i: usize| rec.get(i).unwrap_or("");
        let num = |i: usize| {
            field(i)
                .parse::<usize>()
                .map_err(|e| Error::Config(format!("heatmap column {i}: {e}")))
        };
        rows.push(HeatmapRow {
            clusters: num(0)?,
            sats_per_cluster: num(1)?,
            stations: num(2)?,
            variant: field(3).to_string(),
            value: field(4)
                .parse()
                .map_err(|e| Error::Config(format!("heatmap value {:?}: {e}", field(4))))?,
            seeds: num(5)?,
        });
    }
    Ok(HeatmapTable { metric, header, rows })
}

/// Per-round accuracy curve: `round,t_s,accuracy,round_duration_s`.
pub fn write_line_csv<W: Write>(log: &MetricsLog, header: &[String], mut out: W) -> Result<()> {
    for h in header {
        writeln!(out, "{h}").map_err(|e| Error::io("<line>", e))?;
    }
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["round", "t_s", "accuracy", "round_duration_s"]).map_err(csv_err)?;
    for r in &log.rounds {
        w.write_record([
            (r.round_idx + 1).to_string(),
            fmt_sig6(r.t_end),
            fmt_sig6(r.accuracy),
            fmt_sig6(r.duration_s),
        ])
        .map_err(csv_err)?;
    }
    w.flush().map_err(|e| Error::io("<line>", e))
}
