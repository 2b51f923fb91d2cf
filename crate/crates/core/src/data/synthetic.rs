use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma, Normal};

use crate::error::{Error, Result};
use crate::fl::LocalDataset;

use super::WriterDataset;

/// Gaussian class clusters with Dirichlet label skew per client.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticParams {
    pub classes: usize,
    pub dim: usize,
    /// Dirichlet concentration; small values concentrate each client on few labels.
    pub skew: f64,
    /// Samples per client, inclusive; the partition clip when unset.
    pub n_per_client: Option<(usize, usize)>,
    /// Standard deviation of class means per feature (unit noise).
    pub separation: f64,
}

impl Default for SyntheticParams {
    fn default() -> Self {
        Self {
            classes: 10,
            dim: 32,
            skew: 0.5,
            n_per_client: None,
            separation: 0.75,
        }
    }
}

impl SyntheticParams {
    pub(crate) fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let bad = || Error::Config(format!("synthetic parameter {key}={value:?} is invalid"));
        let int = || value.parse::<usize>().map_err(|_| bad());
        let real = || value.parse::<f64>().map_err(|_| bad());
        match key {
            "classes" => self.classes = int()?,
            "dim" => self.dim = int()?,
            "skew" => self.skew = real()?,
            "separation" => self.separation = real()?,
            "min" => self.n_per_client = Some((int()?, self.n_per_client.map_or(int()?, |p| p.1))),
            "max" => self.n_per_client = Some((self.n_per_client.map_or(int()?, |p| p.0), int()?)),
            _ => {
                return Err(Error::Config(format!(
                    "unknown synthetic parameter {key:?}; expected classes, dim, skew, separation, min, max"
                )))
            }
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        if self.classes < 2 || self.dim == 0 {
            return Err(Error::Config("synthetic data needs classes >= 2 and dim >= 1".into()));
        }
        if !(self.skew > 0.0) {
            return Err(Error::Config(format!("synthetic skew must be > 0, got {}", self.skew)));
        }
        if !(self.separation > 0.0 && self.separation.is_finite()) {
            return Err(Error::Config("synthetic separation must be positive".into()));
        }
        if let Some((lo, hi)) = self.n_per_client {
            if lo == 0 || lo > hi {
                return Err(Error::Config(format!("synthetic sample range ({lo}, {hi}) is invalid")));
            }
        }
        Ok(())
    }
}

impl fmt::Display for SyntheticParams {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "classes={},dim={},skew={},separation={}",
            self.classes, self.dim, self.skew, self.separation
        )?;
        if let Some((lo, hi)) = self.n_per_client {
            write!(f, ",min={lo},max={hi}")?;
        }
        Ok(())
    }
}

/// Label proportions from normalised Gamma(skew) draws; uniform when `skew` is infinite.
fn dirichlet(rng: &mut ChaCha8Rng, k: usize, skew: f64) -> Vec<f64> {
    if skew.is_infinite() {
        return vec![1.0 / k as f64; k];
    }
    let gamma = Gamma::new(skew, 1.0).expect("positive shape");
    let mut v: Vec<f64> = (0..k).map(|_| gamma.sample(rng)).collect();
    let sum: f64 = v.iter().sum();
    if sum > 0.0 && sum.is_finite() {
        v.iter_mut().for_each(|x| *x /= sum);
    } else {
        v.iter_mut().for_each(|x| *x = 0.0);
        v[rng.random_range(0..k)] = 1.0;
    }
    v
}

/// Largest-remainder rounding of `props * n`.
fn allocate(props: &[f64], n: usize) -> Vec<usize> {
    let raw: Vec<f64> = props.iter().map(|p| p * n as f64).collect();
    let mut counts: Vec<usize> = raw.iter().map(|r| r.floor() as usize).collect();
    let mut rest: Vec<usize> = (0..props.len()).collect();
    rest.sort_by(|&a, &b| (raw[b] - raw[b].floor()).total_cmp(&(raw[a] - raw[a].floor())).then(a.cmp(&b)));
    let short = n - counts.iter().sum::<usize>();
    for &i in rest.iter().take(short) {
        counts[i] += 1;
    }
    counts
}

pub fn synthetic_noniid(n_clients: usize, params: &SyntheticParams, seed: u64) -> Result<Vec<WriterDataset>> {
    params.validate()?;
    if n_clients == 0 {
        return Err(Error::InvalidInput("n_clients must be >= 1".into()));
    }
    let (lo, hi) = params.n_per_client.unwrap_or((200, 350));
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mean_dist = Normal::new(0.0, params.separation).expect("valid std");
    let means: Vec<Vec<f64>> = (0..params.classes)
        .map(|_| (0..params.dim).map(|_| mean_dist.sample(&mut rng)).collect())
        .collect();
    let noise = Normal::new(0.0, 1.0).expect("valid std");
    let width = n_clients.to_string().len().max(4);
    let mut out = Vec::with_capacity(n_clients);
    for c in 0..n_clients {
        let n = rng.random_range(lo..=hi);
        let counts = allocate(&dirichlet(&mut rng, params.classes, params.skew), n);
        let mut d = LocalDataset::empty(params.dim);
        let mut x = vec![0.0; params.dim];
        for (label, &count) in counts.iter().enumerate() {
            for _ in 0..count {
                for (xi, m) in x.iter_mut().zip(&means[label]) {
                    *xi = m + noise.sample(&mut rng);
                }
                d.push(&x, label as u32);
            }
        }
        out.push(WriterDataset {
            writer_id: format!("syn{c:0width$}"),
            samples: d,
        });
    }
    Ok(out)
}
