use std::collections::HashMap;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::Deserialize;

use crate::error::{Error, Result};
use crate::fl::LocalDataset;

use super::WriterDataset;

pub const FEMNIST_CLASSES: usize = 62;

#[derive(Deserialize)]
struct Shard {
    users: Vec<String>,
    user_data: HashMap<String, UserData>,
}

#[derive(Deserialize)]
struct UserData {
    x: Vec<Vec<f64>>,
    y: Vec<i64>,
}

/// One LEAF JSON shard. Pixel values above 1 are taken as 0-255 and rescaled.
pub fn parse_leaf_shard(text: &str, origin: &Path) -> Result<Vec<WriterDataset>> {
    let bad = |line: usize, msg: String| Error::Parse {
        path: origin.to_path_buf(),
        line,
        msg,
    };
    let shard: Shard = serde_json::from_str(text).map_err(|e| bad(e.line(), e.to_string()))?;
    let mut out = Vec::with_capacity(shard.users.len());
    for user in &shard.users {
        let data = shard
            .user_data
            .get(user)
            .ok_or_else(|| bad(0, format!("user {user} listed without user_data")))?;
        if data.x.len() != data.y.len() {
            return Err(bad(0, format!("user {user}: {} inputs but {} labels", data.x.len(), data.y.len())));
        }
        if data.x.is_empty() {
            continue;
        }
        let dim = data.x[0].len();
        let scale = if data.x.iter().flatten().any(|&v| v > 1.0) { 1.0 / 255.0 } else { 1.0 };
        let mut d = LocalDataset::empty(dim);
        for (x, &y) in data.x.iter().zip(&data.y) {
            if x.len() != dim {
                return Err(bad(0, format!("user {user}: ragged input rows ({} vs {dim})", x.len())));
            }
            if !(0..FEMNIST_CLASSES as i64).contains(&y) {
                return Err(bad(0, format!("user {user}: label {y} outside [0, {FEMNIST_CLASSES})")));
            }
            let row: Vec<f64> = x.iter().map(|v| v * scale).collect();
            d.push(&row, y as u32);
        }
        out.push(WriterDataset {
            writer_id: user.clone(),
            samples: d,
        });
    }
    Ok(out)
}

/// Reads every `*.json` shard in `dir` (or in `dir/all_data` when `dir` holds none).
pub fn load_leaf_femnist(dir: &Path) -> Result<Vec<WriterDataset>> {
    let list = |d: &Path| -> Result<Vec<PathBuf>> {
        let mut v: Vec<PathBuf> = std::fs::read_dir(d)
            .map_err(|e| Error::io(d, e))?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|x| x == "json"))
            .collect();
        v.sort();
        Ok(v)
    };
    let mut files = list(dir)?;
    let nested = dir.join("all_data");
    if files.is_empty() && nested.is_dir() {
        files = list(&nested)?;
    }
    if files.is_empty() {
        return Err(Error::EmptyDataset(format!("no LEAF shards in {}", dir.display())));
    }
    let shards: Vec<Vec<WriterDataset>> = files
        .par_iter()
        .map(|p| {
            let text = std::fs::read_to_string(p).map_err(|e| Error::io(p, e))?;
            parse_leaf_shard(&text, p)
        })
        .collect::<Result<_>>()?;
    let writers: Vec<WriterDataset> = shards.into_iter().flatten().collect();
    if let Some(w) = writers.iter().find(|w| w.samples.dim != writers[0].samples.dim) {
        return Err(Error::DimensionMismatch {
            expected: writers[0].samples.dim,
            got: w.samples.dim,
        });
    }
    Ok(writers)
}
