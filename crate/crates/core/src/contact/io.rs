//! Window CSV files: `sat_id,counterpart,start_s,end_s`.
//!
//! `sat_id` is `c<cluster>_s<slot>`, `counterpart` a station name or another
//! satellite id, times are seconds from the simulation epoch with three decimals.
//! Rows are written sorted by satellite, counterpart name, then start.

use std::collections::{BTreeMap, BTreeSet};
use std::io::{Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::orbital::SatelliteId;

use super::{AccessWindow, ContactTimeline, Counterpart};

pub const HEADER: [&str; 4] = ["sat_id", "counterpart", "start_s", "end_s"];

#[derive(Debug, Clone, Default)]
pub struct ImportOptions {
    /// Station order to assign indices from; names not listed are appended in sorted order.
    pub stations: Option<Vec<String>>,
    /// Defaults to `[0, latest window end]`.
    pub horizon: Option<(f64, f64)>,
}

fn counterpart_name(tl: &ContactTimeline, cp: Counterpart) -> String {
    match cp {
        Counterpart::Station(i) => tl.stations()[i].clone(),
        Counterpart::Satellite(s) => s.to_string(),
    }
}

pub fn write_windows_csv<W: Write>(timeline: &ContactTimeline, out: W) -> Result<()> {
    let mut rows: Vec<(SatelliteId, String, f64, f64)> = timeline
        .all_windows()
        .into_iter()
        .map(|w| (w.sat, counterpart_name(timeline, w.counterpart), w.start_s, w.end_s))
        .collect();
    rows.sort_by(|a, b| a.0.cmp(&b.0).then_with(|| a.1.cmp(&b.1)).then(a.2.total_cmp(&b.2)));
    let mut wtr = csv::Writer::from_writer(out);
    let to_err = |e: csv::Error| Error::Validation(format!("csv write failed: {e}"));
    wtr.write_record(HEADER).map_err(to_err)?;
    for (sat, cp, a, b) in rows {
        wtr.write_record([sat.to_string(), cp, format!("{a:.3}"), format!("{b:.3}")])
            .map_err(to_err)?;
    }
    wtr.flush().map_err(|e| Error::Validation(format!("csv flush failed: {e}")))?;
    Ok(())
}

pub fn export_windows_csv(timeline: &ContactTimeline, path: &Path) -> Result<()> {
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    write_windows_csv(timeline, std::io::BufWriter::new(file))
}

pub fn import_windows_csv(path: &Path, opts: &ImportOptions) -> Result<ContactTimeline> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_windows_csv(file, path, opts)
}

pub fn read_windows_csv<R: Read>(input: R, origin: &Path, opts: &ImportOptions) -> Result<ContactTimeline> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(input);
    let perr = |line: usize, msg: String| Error::Parse {
        path: origin.to_path_buf(),
        line,
        msg,
    };
    let header = rdr.headers().map_err(|e| perr(1, e.to_string()))?.clone();
    if header.iter().collect::<Vec<_>>() != HEADER {
        return Err(perr(1, format!("expected header {}", HEADER.join(","))));
    }

    enum Cp {
        Station(String),
        Sat(SatelliteId),
    }
    let mut raw = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| perr(e.position().map_or(0, |p| p.line() as usize), e.to_string()))?;
        let line = rec.position().map_or(0, |p| p.line() as usize);
        if rec.len() != 4 {
            return Err(perr(line, format!("expected 4 fields, found {}", rec.len())));
        }
        let sat: SatelliteId = rec[0].parse().map_err(|e: Error| perr(line, e.to_string()))?;
        let cp = match rec[1].parse::<SatelliteId>() {
            Ok(s) => Cp::Sat(s),
            Err(_) if !rec[1].trim().is_empty() => Cp::Station(rec[1].to_string()),
            Err(_) => return Err(perr(line, "empty counterpart".into())),
        };
        let num = |i: usize| -> Result<f64> {
            rec[i]
                .trim()
                .parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| perr(line, format!("bad time {:?}", &rec[i])))
        };
        let (a, b) = (num(2)?, num(3)?);
        if !(a < b) {
            return Err(perr(line, format!("start {a} not before end {b}")));
        }
        raw.push((line, sat, cp, a, b));
    }

    let mut stations = opts.stations.clone().unwrap_or_default();
    let extra: BTreeSet<&str> = raw
        .iter()
        .filter_map(|(_, _, cp, _, _)| match cp {
            Cp::Station(n) if !stations.iter().any(|s| s == n) => Some(n.as_str()),
            _ => None,
        })
        .collect();
    stations.extend(extra.into_iter().map(str::to_string));
    let index: BTreeMap<&str, usize> = stations.iter().enumerate().map(|(i, s)| (s.as_str(), i)).collect();

    let mut last: BTreeMap<(SatelliteId, Counterpart), (f64, f64)> = BTreeMap::new();
    let mut windows = Vec::with_capacity(raw.len());
    for (line, sat, cp, a, b) in &raw {
        let counterpart = match cp {
            Cp::Station(n) => Counterpart::Station(index[n.as_str()]),
            Cp::Sat(s) => Counterpart::Satellite(*s),
        };
        if let Some((pa, pb)) = last.insert((*sat, counterpart), (*a, *b)) {
            if *a < pa {
                return Err(Error::Validation(format!("line {line}: windows for {sat} not sorted by start")));
            }
            if *a < pb {
                return Err(Error::Validation(format!("line {line}: window overlaps the previous one for {sat}")));
            }
        }
        windows.push(AccessWindow {
            sat: *sat,
            counterpart,
            start_s: *a,
            end_s: *b,
        });
    }
    let horizon = opts.horizon.unwrap_or_else(|| {
        let end = windows.iter().map(|w| w.end_s).fold(0.0, f64::max);
        (0.0, if end > 0.0 { end } else { 1.0 })
    });
    ContactTimeline::new(stations, horizon, windows)
}
