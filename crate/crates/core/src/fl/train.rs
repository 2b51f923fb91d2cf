use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

use super::{HyperParams, LocalDataset, ModelParams, Objective};

/// Independent stream id for one client in one round.
pub fn client_seed(run_seed: u64, client: u64, round: u64) -> u64 {
    fn mix(mut z: u64) -> u64 {
        z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
        z ^ (z >> 31)
    }
    let golden = 0x9e37_79b9_7f4a_7c15u64;
    mix(mix(mix(run_seed.wrapping_add(golden)) ^ client.wrapping_mul(golden)) ^ round.wrapping_add(1))
}

/// One step `w <- w - eta * (grad l(w; batch) + mu * (w - anchor))`. Returns the batch loss.
#[allow(clippy::too_many_arguments)]
pub fn sgd_step(
    obj: &dyn Objective,
    w: &mut [f64],
    data: &LocalDataset,
    batch: &[usize],
    eta: f64,
    mu: f64,
    anchor: &[f64],
    grad: &mut [f64],
) -> f64 {
    let loss = obj.loss_grad(w, data, batch, grad);
    if mu != 0.0 {
        for ((g, wi), ai) in grad.iter_mut().zip(w.iter()).zip(anchor) {
            *g += mu * (wi - ai);
        }
    }
    for (wi, g) in w.iter_mut().zip(grad.iter()) {
        *wi -= eta * g;
    }
    loss
}

fn check(obj: &dyn Objective, w: &ModelParams, data: &LocalDataset) -> Result<()> {
    if data.is_empty() {
        return Err(Error::EmptyDataset("client has no training samples".into()));
    }
    if w.dim() != obj.dim() {
        return Err(Error::DimensionMismatch {
            expected: obj.dim(),
            got: w.dim(),
        });
    }
    Ok(())
}

fn run_epochs(
    obj: &dyn Objective,
    start: &ModelParams,
    data: &LocalDataset,
    hp: &HyperParams,
    mu: f64,
    epochs: usize,
    seed: u64,
) -> ModelParams {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut w = start.values().to_vec();
    let mut grad = vec![0.0; w.len()];
    let mut order: Vec<usize> = (0..data.n()).collect();
    for _ in 0..epochs {
        order.shuffle(&mut rng);
        for batch in order.chunks(hp.b) {
            sgd_step(obj, &mut w, data, batch, hp.eta, mu, start.values(), &mut grad);
        }
    }
    ModelParams::new(w)
}

/// `E` epochs of minibatch SGD over freshly shuffled batches of size `B`.
pub fn client_update_fixed(
    obj: &dyn Objective,
    w: &ModelParams,
    data: &LocalDataset,
    hp: &HyperParams,
    seed: u64,
) -> Result<ModelParams> {
    check(obj, w, data)?;
    Ok(run_epochs(obj, w, data, hp, 0.0, hp.e, seed))
}

/// `epoch_budget` epochs of SGD on `l(w) + mu_prox/2 * |w - w_global|^2`, starting from `w_global`.
pub fn client_update_proximal(
    obj: &dyn Objective,
    w_global: &ModelParams,
    data: &LocalDataset,
    hp: &HyperParams,
    epoch_budget: usize,
    seed: u64,
) -> Result<(ModelParams, usize)> {
    check(obj, w_global, data)?;
    if epoch_budget == 0 {
        return Err(Error::InvalidInput("epoch budget must be >= 1".into()));
    }
    Ok((run_epochs(obj, w_global, data, hp, hp.mu_prox, epoch_budget, seed), epoch_budget))
}
