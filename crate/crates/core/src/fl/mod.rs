//! Models, local training and aggregation.

mod model;
mod train;

pub use model::{model_size_bytes, LinearSquared, Mlp, ModelSpec, Objective};
pub use train::{client_seed, client_update_fixed, client_update_proximal, sgd_step};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    values: Vec<f64>,
}

impl ModelParams {
    pub fn new(values: Vec<f64>) -> Self {
        Self { values }
    }

    pub fn zeros(dim: usize) -> Self {
        Self::new(vec![0.0; dim])
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }
}

/// Row-major feature matrix with one class label per row.
#[derive(Debug, Clone, PartialEq)]
pub struct LocalDataset {
    pub features: Vec<f64>,
    pub dim: usize,
    pub labels: Vec<u32>,
}

impl LocalDataset {
    pub fn new(features: Vec<f64>, dim: usize, labels: Vec<u32>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidInput("feature dimension must be positive".into()));
        }
        if features.len() != dim * labels.len() {
            return Err(Error::DimensionMismatch {
                expected: dim * labels.len(),
                got: features.len(),
            });
        }
        Ok(Self { features, dim, labels })
    }

    pub fn empty(dim: usize) -> Self {
        Self {
            features: Vec::new(),
            dim,
            labels: Vec::new(),
        }
    }

    pub fn n(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.features[r * self.dim..(r + 1) * self.dim]
    }

    pub fn push(&mut self, x: &[f64], label: u32) {
        debug_assert_eq!(x.len(), self.dim);
        self.features.extend_from_slice(x);
        self.labels.push(label);
    }

    pub fn take(&self, rows: std::ops::Range<usize>) -> Self {
        Self {
            features: self.features[rows.start * self.dim..rows.end * self.dim].to_vec(),
            dim: self.dim,
            labels: self.labels[rows].to_vec(),
        }
    }

    pub fn extend(&mut self, other: &LocalDataset) {
        debug_assert_eq!(self.dim, other.dim);
        self.features.extend_from_slice(&other.features);
        self.labels.extend_from_slice(&other.labels);
    }
}

/// `C`, `B`, `E`, learning rate, proximal coefficient, buffer size, staleness bound and
/// minimum epochs before a proximal client may return.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct HyperParams {
    #[serde(rename = "C")]
    pub c: usize,
    #[serde(rename = "B")]
    pub b: usize,
    #[serde(rename = "E")]
    pub e: usize,
    pub eta: f64,
    pub mu_prox: f64,
    /// Buffer size; `min(C, K)` when unset.
    #[serde(rename = "D")]
    pub d: Option<usize>,
    pub staleness_max: usize,
    pub min_epochs: usize,
    /// Upper bound on SGD epochs actually executed per continuous-training stint.
    pub prox_epoch_cap: usize,
}

impl Default for HyperParams {
    fn default() -> Self {
        Self {
            c: 10,
            b: 32,
            e: 5,
            eta: 0.05,
            mu_prox: 0.1,
            d: None,
            staleness_max: 2,
            min_epochs: 3,
            prox_epoch_cap: 10,
        }
    }
}

impl HyperParams {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(format!("hyperparameter {m}")));
        if self.c == 0 {
            return bad("C must be >= 1");
        }
        if self.b == 0 {
            return bad("B must be >= 1");
        }
        if self.e == 0 {
            return bad("E must be >= 1");
        }
        if !(self.eta >= 0.0 && self.eta.is_finite()) {
            return bad("eta must be >= 0");
        }
        if !(self.mu_prox >= 0.0 && self.mu_prox.is_finite()) {
            return bad("mu_prox must be >= 0");
        }
        if self.d == Some(0) {
            return bad("D must be >= 1");
        }
        if self.prox_epoch_cap == 0 {
            return bad("prox_epoch_cap must be >= 1");
        }
        Ok(())
    }

    /// Clients per round, `min(C, K)`.
    pub fn clients_per_round(&self, k: usize) -> usize {
        self.c.min(k)
    }

    pub fn buffer_size(&self, k: usize) -> usize {
        self.d.unwrap_or_else(|| self.c.min(k)).max(1)
    }
}

/// Weighted mean `sum(n_k / m * w_k)` with `m = sum(n_k)`.
///
/// Updates are summed in a canonical order so the result does not depend on list order.
pub fn aggregate_weighted(updates: &[(ModelParams, usize)]) -> Result<ModelParams> {
    let first = updates
        .first()
        .ok_or_else(|| Error::InvalidInput("no updates to aggregate".into()))?;
    let dim = first.0.dim();
    if let Some((w, _)) = updates.iter().find(|(w, _)| w.dim() != dim) {
        return Err(Error::DimensionMismatch { expected: dim, got: w.dim() });
    }
    if updates.iter().any(|(_, n)| *n == 0) {
        return Err(Error::InvalidInput("update with zero samples".into()));
    }
    let mut order: Vec<&(ModelParams, usize)> = updates.iter().collect();
    order.sort_by(|a, b| {
        a.1.cmp(&b.1).then_with(|| {
            a.0.values
                .iter()
                .zip(&b.0.values)
                .map(|(x, y)| x.total_cmp(y))
                .find(|o| o.is_ne())
                .unwrap_or(std::cmp::Ordering::Equal)
        })
    });
    let m: usize = updates.iter().map(|(_, n)| n).sum();
    let mut out = vec![0.0; dim];
    for (w, n) in order {
        let f = *n as f64 / m as f64;
        for (o, v) in out.iter_mut().zip(&w.values) {
            *o += f * v;
        }
    }
    Ok(ModelParams::new(out))
}

/// Argmax accuracy (ties resolve to the lowest class) and mean cross-entropy.
pub fn evaluate(model: &Mlp, w: &ModelParams, test: &LocalDataset) -> Result<(f64, f64)> {
    if test.is_empty() {
        return Err(Error::EmptyDataset("evaluation set is empty".into()));
    }
    if w.dim() != model.dim() {
        return Err(Error::DimensionMismatch {
            expected: model.dim(),
            got: w.dim(),
        });
    }
    let logits = model.predict(w.values(), test);
    let mut correct = 0usize;
    let mut loss = 0.0;
    for (l, &y) in logits.iter().zip(&test.labels) {
        let mut best = 0;
        for (k, v) in l.iter().enumerate() {
            if *v > l[best] {
                best = k;
            }
        }
        if best == y as usize {
            correct += 1;
        }
        let m = l.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let lse = l.iter().map(|v| (v - m).exp()).sum::<f64>().ln() + m;
        loss += lse - l[y as usize];
    }
    let n = test.n() as f64;
    Ok((correct as f64 / n, loss / n))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn p(v: &[f64]) -> ModelParams {
        ModelParams::new(v.to_vec())
    }

    #[test]
    fn single_update_unchanged() {
        let w = p(&[1.5, -2.0, 3.25]);
        assert_eq!(aggregate_weighted(&[(w.clone(), 7)]).unwrap(), w);
    }

    #[test]
    fn equal_weights_give_mean() {
        let out = aggregate_weighted(&[(p(&[1.0, 2.0]), 5), (p(&[3.0, 6.0]), 5)]).unwrap();
        assert_eq!(out.values(), [2.0, 4.0]);
    }

    #[test]
    fn weighted_example() {
        let out = aggregate_weighted(&[(p(&[1.0]), 1), (p(&[5.0]), 3)]).unwrap();
        assert_eq!(out.values(), [1.0 * 0.25 + 5.0 * 0.75]);
        assert_eq!(out.values(), [4.0]);
    }

    #[test]
    fn aggregation_errors() {
        assert!(matches!(aggregate_weighted(&[]), Err(Error::InvalidInput(_))));
        assert!(matches!(
            aggregate_weighted(&[(p(&[1.0]), 1), (p(&[1.0, 2.0]), 1)]),
            Err(Error::DimensionMismatch { .. })
        ));
        assert!(aggregate_weighted(&[(p(&[1.0]), 0)]).is_err());
    }

    fn blobs() -> LocalDataset {
        let mut d = LocalDataset::empty(2);
        for i in 0..62 {
            d.push(&[i as f64, 1.0], i);
        }
        d
    }

    #[test]
    fn uniform_model_is_at_chance() {
        let spec = ModelSpec::new(2, vec![3], 62).unwrap();
        let mlp = Mlp::new(spec.clone()).unwrap();
        let (acc, loss) = evaluate(&mlp, &ModelParams::zeros(spec.param_count()), &blobs()).unwrap();
        assert!((acc - 1.0 / 62.0).abs() <= 0.05);
        assert!((loss - 62f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn memorised_sample_is_correct() {
        let spec = ModelSpec::new(2, vec![], 3).unwrap();
        let mlp = Mlp::new(spec).unwrap();
        // Bias of class 2 dominates.
        let w = p(&[0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 5.0]);
        let d = LocalDataset::new(vec![0.3, 0.7], 2, vec![2]).unwrap();
        let (acc, loss) = evaluate(&mlp, &w, &d).unwrap();
        assert_eq!(acc, 1.0);
        assert!(loss.is_finite());
    }

    #[test]
    fn evaluate_rejects_empty() {
        let mlp = Mlp::new(ModelSpec::new(2, vec![], 3).unwrap()).unwrap();
        assert!(matches!(
            evaluate(&mlp, &ModelParams::zeros(9), &LocalDataset::empty(2)),
            Err(Error::EmptyDataset(_))
        ));
    }

    #[test]
    fn hyperparam_validation() {
        HyperParams::default().validate().unwrap();
        for hp in [
            HyperParams { c: 0, ..Default::default() },
            HyperParams { eta: -0.1, ..Default::default() },
            HyperParams { mu_prox: -1.0, ..Default::default() },
            HyperParams { d: Some(0), ..Default::default() },
        ] {
            assert!(hp.validate().is_err(), "{hp:?}");
        }
        assert_eq!(HyperParams::default().buffer_size(4), 4);
        assert_eq!(HyperParams::default().clients_per_round(40), 10);
    }

    proptest! {
        #[test]
        fn equal_weights_equal_plain_mean(ws in proptest::collection::vec(proptest::collection::vec(-1e3..1e3f64, 4), 1..8), n in 1usize..50) {
            let updates: Vec<_> = ws.iter().map(|v| (p(v), n)).collect();
            let out = aggregate_weighted(&updates).unwrap();
            for k in 0..4 {
                let mean = ws.iter().map(|v| v[k]).sum::<f64>() / ws.len() as f64;
                prop_assert!((out.values()[k] - mean).abs() <= 1e-9 * (1.0 + mean.abs()));
            }
        }

        #[test]
        fn permutation_invariant(ws in proptest::collection::vec((proptest::collection::vec(-1e3..1e3f64, 3), 1usize..100), 1..8), seed in any::<u64>()) {
            use rand::{seq::SliceRandom, SeedableRng};
            let updates: Vec<_> = ws.iter().map(|(v, n)| (p(v), *n)).collect();
            let mut shuffled = updates.clone();
            shuffled.shuffle(&mut rand_chacha::ChaCha8Rng::seed_from_u64(seed));
            prop_assert_eq!(aggregate_weighted(&updates).unwrap(), aggregate_weighted(&shuffled).unwrap());
        }

        #[test]
        fn accuracy_in_unit_interval(ws in proptest::collection::vec(-3.0..3.0f64, 9), xs in proptest::collection::vec(-2.0..2.0f64, 2..20)) {
            let mlp = Mlp::new(ModelSpec::new(2, vec![], 3).unwrap()).unwrap();
            let n = xs.len() / 2;
            let d = LocalDataset::new(xs[..2 * n].to_vec(), 2, (0..n as u32).map(|i| i % 3).collect()).unwrap();
            let (acc, loss) = evaluate(&mlp, &p(&ws), &d).unwrap();
            prop_assert!((0.0..=1.0).contains(&acc));
            prop_assert!(loss.is_finite());
        }
    }
}
