//! Divergence diagnostics.
//!
//! The proxy A-distance trains a fresh probe to tell two sample sets apart and
//! maps its held-out error `e` to `2(1 − 2e)`. The probe stands in for the
//! supremum over a hypothesis class, so values are estimates from below.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::datadomains::DomainDataset;
use crate::mixgen::MixSample;
use crate::numcore::{Activation, Network, NetworkSpec, Tensor};
use crate::objectives::{cross_entropy, ModelBundle};
use crate::selection::{argmax_rows, evaluate_dataset, hard_mix_tensors};
use crate::{Error, Result};

pub const MIN_SET_SIZE: usize = 20;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeSpec {
    pub hidden: usize,
    pub epochs: usize,
    pub lr: f64,
    pub batch: usize,
    pub seed: u64,
}

impl Default for ProbeSpec {
    fn default() -> Self {
        Self {
            hidden: 16,
            epochs: 200,
            lr: 0.1,
            batch: 32,
            seed: 0,
        }
    }
}

impl ProbeSpec {
    pub fn with_seed(seed: u64) -> Self {
        Self {
            seed,
            ..Self::default()
        }
    }

    pub fn network_spec(&self, input: usize) -> Result<NetworkSpec> {
        NetworkSpec::mlp(
            &[input, self.hidden, 2],
            Activation::Relu,
            Activation::SoftmaxAtLoss,
            self.seed,
        )
    }

    fn validate(&self) -> Result<()> {
        if self.hidden == 0 || self.epochs == 0 || self.batch == 0 {
            return Err(Error::Config("probe hidden width, epochs and batch must be positive".into()));
        }
        if !(self.lr.is_finite() && self.lr > 0.0) {
            return Err(Error::Config(format!("probe learning rate {} must be positive", self.lr)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProxyEstimate {
    pub proxy_a_distance: f64,
    /// Balanced held-out error, clipped to `[0, 0.5]`.
    pub heldout_error: f64,
}

pub fn proxy_from_error(err: f64) -> f64 {
    let e = err.clamp(0.0, 0.5);
    (2.0 * (1.0 - 2.0 * e)).clamp(0.0, 2.0)
}

fn standardize(train: &Tensor, sets: &mut [&mut Vec<f64>], cols: usize) {
    let n = train.rows() as f64;
    for c in 0..cols {
        let mean = (0..train.rows()).map(|r| train.get(r, c)).sum::<f64>() / n;
        let var = (0..train.rows())
            .map(|r| (train.get(r, c) - mean).powi(2))
            .sum::<f64>()
            / n;
        let sd = if var > 1e-24 { var.sqrt() } else { 1.0 };
        for s in sets.iter_mut() {
            for row in s.chunks_mut(cols) {
                row[c] = (row[c] - mean) / sd;
            }
        }
    }
}

/// Trains a probe on half of each set and measures its balanced error on the
/// other half.
pub fn proxy_a_distance(a: &Tensor, b: &Tensor, probe: &ProbeSpec) -> Result<ProxyEstimate> {
    probe.validate()?;
    a.ensure_matrix("first set")?;
    b.ensure_matrix("second set")?;
    if a.cols() != b.cols() {
        return Err(Error::Dimension(format!(
            "sets have widths {} and {}",
            a.cols(),
            b.cols()
        )));
    }
    for (name, t) in [("first", a), ("second", b)] {
        if t.rows() < MIN_SET_SIZE {
            return Err(Error::Data(format!(
                "{name} set has {} samples, need at least {MIN_SET_SIZE}",
                t.rows()
            )));
        }
    }
    let cols = a.cols();
    let mut rng = ChaCha8Rng::seed_from_u64(probe.seed ^ 0x9e37_79b9_7f4a_7c15);
    let mut halves = |t: &Tensor| {
        let mut idx: Vec<usize> = (0..t.rows()).collect();
        idx.shuffle(&mut rng);
        let cut = t.rows() / 2;
        (idx[..cut].to_vec(), idx[cut..].to_vec())
    };
    let (a_tr, a_te) = halves(a);
    let (b_tr, b_te) = halves(b);

    let mut train_x = Vec::new();
    let mut train_y = Vec::new();
    for (t, rows, label) in [(a, &a_tr, 0usize), (b, &b_tr, 1)] {
        for &r in rows {
            train_x.extend_from_slice(t.row(r));
            train_y.push(label);
        }
    }
    let mut test_a: Vec<f64> = a_te.iter().flat_map(|&r| a.row(r).to_vec()).collect();
    let mut test_b: Vec<f64> = b_te.iter().flat_map(|&r| b.row(r).to_vec()).collect();
    let train_t = Tensor::matrix(train_y.len(), cols, train_x.clone())?;
    standardize(&train_t, &mut [&mut train_x, &mut test_a, &mut test_b], cols);
    let train = Tensor::matrix(train_y.len(), cols, train_x)?;

    let mut net = Network::new(probe.network_spec(cols)?)?;
    let n = train_y.len();
    // class-balanced weights so unequal set sizes do not bias the probe
    let counts = [a_tr.len() as f64, b_tr.len() as f64];
    let mut order: Vec<usize> = (0..n).collect();
    for _ in 0..probe.epochs {
        order.shuffle(&mut rng);
        for chunk in order.chunks(probe.batch) {
            let x = train.select_rows(chunk);
            let mut y = vec![0.0; chunk.len() * 2];
            for (k, &i) in chunk.iter().enumerate() {
                y[k * 2 + train_y[i]] = 1.0;
            }
            let y = Tensor::matrix(chunk.len(), 2, y)?;
            net.zero_grad();
            let logits = net.forward(&x)?;
            let (_, mut grad) = cross_entropy(&logits, &y)?;
            let scale: Vec<f64> = chunk
                .iter()
                .map(|&i| n as f64 / (2.0 * counts[train_y[i]]))
                .collect();
            let g = grad.data_mut();
            for (k, s) in scale.iter().enumerate() {
                g[k * 2] *= s;
                g[k * 2 + 1] *= s;
            }
            net.backward(&grad)?;
            net.params_mut().sgd_step(probe.lr);
        }
    }

    let err_on = |rows: Vec<f64>, label: usize| -> Result<f64> {
        let t = Tensor::matrix(rows.len() / cols, cols, rows)?;
        let pred = argmax_rows(&net.predict(&t)?);
        Ok(pred.iter().filter(|&&p| p != label).count() as f64 / pred.len() as f64)
    };
    let err = 0.5 * (err_on(test_a, 0)? + err_on(test_b, 1)?);
    let clipped = err.clamp(0.0, 0.5);
    Ok(ProxyEstimate {
        proxy_a_distance: proxy_from_error(clipped),
        heldout_error: clipped,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DivergenceReport {
    /// Keyed by pair label, e.g. `source0|source2`.
    pub pairs: BTreeMap<String, ProxyEstimate>,
    pub max_source_divergence: f64,
}

impl DivergenceReport {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

pub fn pair_label(a: &str, b: &str) -> String {
    format!("{a}|{b}")
}

/// Pairwise proxy distances between the domains of `sources`.
pub fn source_divergences(sources: &DomainDataset, probe: &ProbeSpec) -> Result<DivergenceReport> {
    let m = sources.domain_count();
    let mut pairs = BTreeMap::new();
    let mut max = 0.0f64;
    for i in 0..m {
        for j in i + 1..m {
            let a = sources.features().select_rows(&sources.domain_indices(i));
            let b = sources.features().select_rows(&sources.domain_indices(j));
            let est = proxy_a_distance(&a, &b, probe)?;
            max = max.max(est.proxy_a_distance);
            pairs.insert(pair_label(&format!("source{i}"), &format!("source{j}")), est);
        }
    }
    Ok(DivergenceReport {
        pairs,
        max_source_divergence: max,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundTermsReport {
    pub divergence: DivergenceReport,
    pub source_errors: Vec<f64>,
    /// Uniform-weight mixture of the per-source errors.
    pub weighted_source_error: f64,
    pub trainsplit_to_target: ProxyEstimate,
    pub vald_to_target: ProxyEstimate,
}

pub struct BoundInputs<'a> {
    pub sources: &'a DomainDataset,
    pub trainsplit_val: &'a DomainDataset,
    pub vald: &'a [MixSample],
    pub target: &'a DomainDataset,
}

pub fn bound_terms_report(
    inputs: &BoundInputs<'_>,
    bundle: &ModelBundle,
    probe: &ProbeSpec,
) -> Result<BoundTermsReport> {
    let mut divergence = source_divergences(inputs.sources, probe)?;
    let m = inputs.sources.domain_count();
    let mut source_errors = Vec::with_capacity(m);
    for d in 0..m {
        let part = inputs.sources.subset(&inputs.sources.domain_indices(d));
        source_errors.push(1.0 - evaluate_dataset(bundle, &part)?);
    }
    let weighted_source_error = source_errors.iter().sum::<f64>() / m as f64;
    let target = inputs.target.features();
    let trainsplit_to_target = proxy_a_distance(inputs.trainsplit_val.features(), target, probe)?;
    let (vald_x, _) = hard_mix_tensors(inputs.vald)?;
    let vald_to_target = proxy_a_distance(&vald_x, target, probe)?;
    divergence
        .pairs
        .insert(pair_label("trainsplit_val", "target"), trainsplit_to_target);
    divergence.pairs.insert(pair_label("vald", "target"), vald_to_target);
    Ok(BoundTermsReport {
        divergence,
        source_errors,
        weighted_source_error,
        trainsplit_to_target,
        vald_to_target,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand_distr::{Distribution, StandardNormal};

    fn cloud(n: usize, center: &[f64], seed: u64) -> Tensor {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let d = center.len();
        let data: Vec<f64> = (0..n * d)
            .map(|k| center[k % d] + { let z: f64 = StandardNormal.sample(&mut rng); z * 0.5 })
            .collect();
        Tensor::matrix(n, d, data).unwrap()
    }

    #[test]
    fn error_map_clips() {
        assert_eq!(proxy_from_error(0.0), 2.0);
        assert_eq!(proxy_from_error(0.5), 0.0);
        assert_eq!(proxy_from_error(0.7), 0.0);
        assert!((proxy_from_error(0.25) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn separated_clouds_are_far() {
        let a = cloud(200, &[-3.0, 0.0], 1);
        let b = cloud(200, &[3.0, 0.0], 2);
        let est = proxy_a_distance(&a, &b, &ProbeSpec::with_seed(3)).unwrap();
        assert!(est.proxy_a_distance >= 1.8, "{est:?}");
    }

    #[test]
    fn same_generator_is_close() {
        let a = cloud(300, &[0.0, 0.0], 11);
        let b = cloud(300, &[0.0, 0.0], 12);
        let est = proxy_a_distance(&a, &b, &ProbeSpec::with_seed(5)).unwrap();
        assert!(est.proxy_a_distance <= 0.3, "{est:?}");
        assert!((0.0..=2.0).contains(&est.proxy_a_distance));
    }

    #[test]
    fn small_sets_rejected() {
        let a = cloud(19, &[0.0], 1);
        let b = cloud(40, &[0.0], 2);
        assert!(matches!(
            proxy_a_distance(&a, &b, &ProbeSpec::default()),
            Err(Error::Data(_))
        ));
    }

    #[test]
    fn width_mismatch_rejected() {
        let a = cloud(30, &[0.0], 1);
        let b = cloud(30, &[0.0, 1.0], 2);
        assert!(proxy_a_distance(&a, &b, &ProbeSpec::default()).is_err());
    }

    #[test]
    fn report_json_keyed_by_pair() {
        let mut pairs = BTreeMap::new();
        pairs.insert(
            pair_label("source0", "source1"),
            ProxyEstimate {
                proxy_a_distance: 1.0,
                heldout_error: 0.25,
            },
        );
        let r = DivergenceReport {
            pairs,
            max_source_divergence: 1.0,
        };
        let v: serde_json::Value = serde_json::from_str(&r.to_json().unwrap()).unwrap();
        assert_eq!(v["pairs"]["source0|source1"]["heldout_error"], 0.25);
    }
}
