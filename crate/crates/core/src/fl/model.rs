use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

use super::{LocalDataset, ModelParams};

/// Differentiable training objective over a flat parameter vector.
pub trait Objective: Sync {
    fn dim(&self) -> usize;

    /// Mean loss over the rows `idx` of `data`; accumulates the mean gradient into `grad`.
    fn loss_grad(&self, w: &[f64], data: &LocalDataset, idx: &[usize], grad: &mut [f64]) -> f64;

    fn loss(&self, w: &[f64], data: &LocalDataset, idx: &[usize]) -> f64 {
        let mut scratch = vec![0.0; self.dim()];
        self.loss_grad(w, data, idx, &mut scratch)
    }
}

/// Multilayer perceptron: ReLU hidden layers, softmax cross-entropy output.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub input_dim: usize,
    pub hidden: Vec<usize>,
    pub classes: usize,
}

impl ModelSpec {
    pub fn new(input_dim: usize, hidden: Vec<usize>, classes: usize) -> Result<Self> {
        let spec = Self {
            input_dim,
            hidden,
            classes,
        };
        spec.validate()?;
        Ok(spec)
    }

    /// 784 -> 58 -> 62.
    pub fn femnist() -> Self {
        Self {
            input_dim: 784,
            hidden: vec![58],
            classes: 62,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.input_dim == 0 || self.classes < 2 || self.hidden.contains(&0) {
            return Err(Error::InvalidInput(format!(
                "model spec needs input_dim >= 1, classes >= 2 and non-empty layers: {self:?}"
            )));
        }
        Ok(())
    }

    fn widths(&self) -> Vec<usize> {
        let mut w = Vec::with_capacity(self.hidden.len() + 2);
        w.push(self.input_dim);
        w.extend(&self.hidden);
        w.push(self.classes);
        w
    }

    pub fn param_count(&self) -> usize {
        self.widths().windows(2).map(|p| p[0] * p[1] + p[1]).sum()
    }

    /// He-normal weights, zero biases.
    pub fn init(&self, seed: u64) -> ModelParams {
        use rand::SeedableRng;
        use rand_distr::{Distribution, Normal};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let mut v = Vec::with_capacity(self.param_count());
        for p in self.widths().windows(2) {
            let normal = Normal::new(0.0, (2.0 / p[0] as f64).sqrt()).expect("positive std");
            v.extend((0..p[0] * p[1]).map(|_| normal.sample(&mut rng)));
            v.extend(std::iter::repeat_n(0.0, p[1]));
        }
        ModelParams::new(v)
    }
}

pub fn model_size_bytes(spec: &ModelSpec) -> usize {
    spec.param_count() * 4
}

#[derive(Debug, Clone)]
pub struct Mlp {
    spec: ModelSpec,
    widths: Vec<usize>,
    /// Offset of each layer's weight block in the flat vector.
    offsets: Vec<usize>,
}

impl Mlp {
    pub fn new(spec: ModelSpec) -> Result<Self> {
        spec.validate()?;
        let widths = spec.widths();
        let mut offsets = Vec::with_capacity(widths.len() - 1);
        let mut off = 0;
        for p in widths.windows(2) {
            offsets.push(off);
            off += p[0] * p[1] + p[1];
        }
        Ok(Self { spec, widths, offsets })
    }

    pub fn spec(&self) -> &ModelSpec {
        &self.spec
    }

    /// Forward pass for one sample; fills `acts[l]` with post-activation values of layer l
    /// (acts[0] is the input, the last entry holds logits).
    fn forward(&self, w: &[f64], x: &[f64], acts: &mut [Vec<f64>]) {
        acts[0].copy_from_slice(x);
        let layers = self.widths.len() - 1;
        for l in 0..layers {
            let (n_in, n_out) = (self.widths[l], self.widths[l + 1]);
            let wm = &w[self.offsets[l]..self.offsets[l] + n_in * n_out];
            let b = &w[self.offsets[l] + n_in * n_out..self.offsets[l] + n_in * n_out + n_out];
            let (prev, next) = acts.split_at_mut(l + 1);
            let input = &prev[l];
            let out = &mut next[0];
            out.copy_from_slice(b);
            for (i, &xi) in input.iter().enumerate() {
                if xi == 0.0 {
                    continue;
                }
                let row = &wm[i * n_out..(i + 1) * n_out];
                for (o, r) in out.iter_mut().zip(row) {
                    *o += xi * r;
                }
            }
            if l + 1 < layers {
                for o in out.iter_mut() {
                    *o = o.max(0.0);
                }
            }
        }
    }

    fn buffers(&self) -> Vec<Vec<f64>> {
        self.widths.iter().map(|&n| vec![0.0; n]).collect()
    }

    /// Logits for every row of `data`.
    pub fn predict(&self, w: &[f64], data: &LocalDataset) -> Vec<Vec<f64>> {
        let mut acts = self.buffers();
        (0..data.n())
            .map(|r| {
                self.forward(w, data.row(r), &mut acts);
                acts.last().expect("output layer").clone()
            })
            .collect()
    }
}

/// Log-sum-exp cross-entropy; writes softmax probabilities into `probs`.
fn softmax_xent(logits: &[f64], label: usize, probs: &mut [f64]) -> f64 {
    let m = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut z = 0.0;
    for (p, &l) in probs.iter_mut().zip(logits) {
        *p = (l - m).exp();
        z += *p;
    }
    for p in probs.iter_mut() {
        *p /= z;
    }
    z.ln() + m - logits[label]
}

impl Objective for Mlp {
    fn dim(&self) -> usize {
        self.spec.param_count()
    }

    fn loss_grad(&self, w: &[f64], data: &LocalDataset, idx: &[usize], grad: &mut [f64]) -> f64 {
        grad.iter_mut().for_each(|g| *g = 0.0);
        if idx.is_empty() {
            return 0.0;
        }
        let layers = self.widths.len() - 1;
        let mut acts = self.buffers();
        let mut delta: Vec<Vec<f64>> = self.widths.iter().map(|&n| vec![0.0; n]).collect();
        let scale = 1.0 / idx.len() as f64;
        let mut total = 0.0;
        for &r in idx {
            self.forward(w, data.row(r), &mut acts);
            let label = data.labels[r] as usize;
            total += softmax_xent(&acts[layers], label, &mut delta[layers]);
            delta[layers][label] -= 1.0;
            for l in (0..layers).rev() {
                let (n_in, n_out) = (self.widths[l], self.widths[l + 1]);
                let off = self.offsets[l];
                let (d_prev, d_next) = delta.split_at_mut(l + 1);
                let d_out = &d_next[0];
                let input = &acts[l];
                let (gw, gb) = grad[off..off + n_in * n_out + n_out].split_at_mut(n_in * n_out);
                for (g, d) in gb.iter_mut().zip(d_out) {
                    *g += scale * d;
                }
                for (i, &xi) in input.iter().enumerate() {
                    if xi != 0.0 {
                        let row = &mut gw[i * n_out..(i + 1) * n_out];
                        for (g, d) in row.iter_mut().zip(d_out) {
                            *g += scale * xi * d;
                        }
                    }
                }
                if l > 0 {
                    let wm = &w[off..off + n_in * n_out];
                    let d_in = &mut d_prev[l];
                    for (i, di) in d_in.iter_mut().enumerate() {
                        *di = if input[i] > 0.0 {
                            wm[i * n_out..(i + 1) * n_out].iter().zip(d_out).map(|(a, b)| a * b).sum()
                        } else {
                            0.0
                        };
                    }
                }
            }
        }
        total * scale
    }
}

/// Linear regression on the label value: loss = mean of (w.x - y)^2 / 2.
#[derive(Debug, Clone, Copy)]
pub struct LinearSquared {
    pub input_dim: usize,
}

impl Objective for LinearSquared {
    fn dim(&self) -> usize {
        self.input_dim
    }

    fn loss_grad(&self, w: &[f64], data: &LocalDataset, idx: &[usize], grad: &mut [f64]) -> f64 {
        grad.iter_mut().for_each(|g| *g = 0.0);
        if idx.is_empty() {
            return 0.0;
        }
        let scale = 1.0 / idx.len() as f64;
        let mut total = 0.0;
        for &r in idx {
            let x = data.row(r);
            let err = w.iter().zip(x).map(|(a, b)| a * b).sum::<f64>() - data.labels[r] as f64;
            total += 0.5 * err * err;
            for (g, xi) in grad.iter_mut().zip(x) {
                *g += scale * err * xi;
            }
        }
        total * scale
    }
}
