use rand::seq::index::sample;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::SimplexWeights;
use crate::mixgen::{to_tensors, MixSample};
use crate::objectives::{cross_entropy, ModelBundle, ObjectiveGrads};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GuidanceMode {
    /// Mean gradient over the whole guidance set.
    Whole,
    /// Mean gradient over one random mini-batch of the given size.
    Batch(usize),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Guidance {
    pub gradient: Vec<f64>,
    pub loss: f64,
}

/// Classification loss on the guidance set and its θ_f gradient.
pub fn compute_guidance<R: Rng + ?Sized>(
    bundle: &mut ModelBundle,
    optd: &[MixSample],
    mode: GuidanceMode,
    rng: &mut R,
) -> Result<Guidance> {
    if optd.is_empty() {
        return Err(Error::Data("guidance set is empty".into()));
    }
    let (x, y) = match mode {
        GuidanceMode::Whole => to_tensors(optd)?,
        GuidanceMode::Batch(size) => {
            if size == 0 {
                return Err(Error::Config("guidance batch size must be > 0".into()));
            }
            let k = size.min(optd.len());
            let mut idx = sample(rng, optd.len(), k).into_vec();
            idx.sort_unstable();
            let picked: Vec<MixSample> = idx.into_iter().map(|i| optd[i].clone()).collect();
            to_tensors(&picked)?
        }
    };
    bundle.feat.zero_grad();
    bundle.clf.zero_grad();
    let z = bundle.feat.forward(&x)?;
    let logits = bundle.clf.forward(&z)?;
    let (loss, dlogits) = cross_entropy(&logits, &y)?;
    let dz = bundle.clf.backward(&dlogits)?;
    bundle.feat.backward(&dz)?;
    let gradient = bundle.feat.params().flat_grads();
    bundle.feat.zero_grad();
    bundle.clf.zero_grad();
    Ok(Guidance { gradient, loss })
}

/// Steps θ_f along `d = Gω` built from `grads`' columns, and the heads along
/// their own gradients. Returns `d`.
pub fn fuse_and_apply(
    bundle: &mut ModelBundle,
    omega: &[f64],
    grads: &ObjectiveGrads,
    lr: f64,
) -> Result<Vec<f64>> {
    if omega.len() < 2 {
        return Err(Error::Config(format!(
            "fused update needs at least 2 objectives, got {}",
            omega.len()
        )));
    }
    if omega.len() != grads.columns.len() {
        return Err(Error::Dimension(format!(
            "{} weights for {} gradient columns",
            omega.len(),
            grads.columns.len()
        )));
    }
    let dim = grads.columns[0].len();
    let mut d = vec![0.0; dim];
    for (col, &w) in grads.columns.iter().zip(omega) {
        if w != 0.0 {
            for (x, g) in d.iter_mut().zip(col) {
                *x += w * g;
            }
        }
    }
    bundle.apply(grads, &d, lr)?;
    Ok(d)
}

/// Convenience wrapper taking the weights of a solved LP.
pub fn fuse_weights_and_apply(
    bundle: &mut ModelBundle,
    weights: &SimplexWeights,
    grads: &ObjectiveGrads,
    lr: f64,
) -> Result<Vec<f64>> {
    fuse_and_apply(bundle, &weights.omega, grads, lr)
}
