//! Ground-station catalog.
//!
//! The bundled catalog lists the 13 stations in nested-subset order: the first
//! `n` rows form the `n`-station network for every `n` in [`VALID_STATION_COUNTS`].

use std::path::Path;

use crate::error::{Error, Result};

use super::GroundStation;

pub const VALID_STATION_COUNTS: [usize; 6] = [1, 2, 3, 5, 10, 13];

const BUILTIN: &str = include_str!("../../data/ground_stations.csv");

pub fn builtin_catalog() -> Vec<GroundStation> {
    parse_catalog(BUILTIN, Path::new("<builtin>")).expect("bundled station catalog is well-formed")
}

pub fn load_catalog(path: &Path) -> Result<Vec<GroundStation>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_catalog(&text, path)
}

/// Parses `name,lat_deg,lon_deg` rows (header required).
pub fn parse_catalog(text: &str, origin: &Path) -> Result<Vec<GroundStation>> {
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let headers = reader.headers().map_err(|e| Error::Parse {
        path: origin.to_path_buf(),
        line: 1,
        msg: e.to_string(),
    })?;
    if headers.iter().collect::<Vec<_>>() != ["name", "lat_deg", "lon_deg"] {
        return Err(Error::Parse {
            path: origin.to_path_buf(),
            line: 1,
            msg: "expected header name,lat_deg,lon_deg".into(),
        });
    }
    let mut out = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| Error::Parse {
            path: origin.to_path_buf(),
            line: e.position().map_or(0, |p| p.line() as usize),
            msg: e.to_string(),
        })?;
        let line = record.position().map_or(0, |p| p.line() as usize);
        let parse_err = |msg: String| Error::Parse {
            path: origin.to_path_buf(),
            line,
            msg,
        };
        if record.len() != 3 {
            return Err(parse_err(format!("expected 3 fields, found {}", record.len())));
        }
        let num = |i: usize| -> Result<f64> {
            record[i]
                .parse::<f64>()
                .map_err(|_| parse_err(format!("not a number: {:?}", &record[i])))
        };
        let gs = GroundStation::new(&record[0], num(1)?, num(2)?).map_err(|e| parse_err(e.to_string()))?;
        out.push(gs);
    }
    Ok(out)
}

/// First `count` stations of `catalog`; `count` must be one of the sweep sizes.
pub fn station_subset(catalog: &[GroundStation], count: usize) -> Result<Vec<GroundStation>> {
    if !VALID_STATION_COUNTS.contains(&count) {
        return Err(Error::Config(format!(
            "station count {count} not in catalog sizes {VALID_STATION_COUNTS:?}"
        )));
    }
    if count > catalog.len() {
        return Err(Error::Config(format!(
            "station count {count} exceeds catalog of {}",
            catalog.len()
        )));
    }
    Ok(catalog[..count].to_vec())
}
