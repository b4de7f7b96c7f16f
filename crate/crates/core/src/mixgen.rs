//! Mixup generators.
//!
//! All generators produce `x̃ = λ·x_i + (1−λ)·x_j` with `λ ~ Beta(α, α)`; they
//! differ in which parent pairs are eligible and how the label is formed:
//!
//! | rule | parents | label |
//! |------|---------|-------|
//! | vanilla | any `i ≠ j` | `λ·e(y_i) + (1−λ)·e(y_j)` |
//! | OPTD cross-domain | same class, different domains | `e(y_i)` |
//! | OPTD within-domain | same domain, any classes | `λ·e(y_i) + (1−λ)·e(y_j)` |
//! | VALD | same class | `e(y_i)` |
//!
//! Pairs are drawn by picking the anchor `i` uniformly among samples that have
//! at least one eligible partner, then `j` uniformly among its partners. This
//! keeps the class histogram of same-class generators equal to the parent
//! pool's.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Beta, Distribution};
use serde::{Deserialize, Serialize};

use crate::datadomains::DomainDataset;
use crate::numcore::Tensor;
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MixupConfig {
    pub alpha: f64,
    pub seed: u64,
    pub count: usize,
}

impl MixupConfig {
    pub fn new(alpha: f64, seed: u64, count: usize) -> Result<Self> {
        let cfg = Self { alpha, seed, count };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0) || !self.alpha.is_finite() {
            return Err(Error::Config(format!("mixup alpha must be > 0, got {}", self.alpha)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MixRule {
    Vanilla,
    OptdCrossDomain,
    OptdWithinDomain,
    Vald,
}

impl MixRule {
    pub fn as_str(self) -> &'static str {
        match self {
            MixRule::Vanilla => "vanilla",
            MixRule::OptdCrossDomain => "optd-cross-domain",
            MixRule::OptdWithinDomain => "optd-within-domain",
            MixRule::Vald => "vald",
        }
    }
}

/// A generated virtual example with its provenance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MixSample {
    pub x: Vec<f64>,
    /// Soft label over `C` classes, sums to 1.
    pub y: Vec<f64>,
    pub lambda: f64,
    pub parents: (usize, usize),
    pub parent_domains: (usize, usize),
    pub rule: MixRule,
}

impl MixSample {
    /// Class index when the label is one-hot.
    pub fn hard_label(&self) -> Option<usize> {
        let mut hit = None;
        for (c, &v) in self.y.iter().enumerate() {
            if v == 1.0 {
                if hit.is_some() {
                    return None;
                }
                hit = Some(c);
            } else if v != 0.0 {
                return None;
            }
        }
        hit
    }
}

/// `λ ~ Beta(α, α)` restricted to the open unit interval.
#[derive(Debug, Clone)]
pub struct LambdaSampler {
    beta: Beta<f64>,
    rng: ChaCha8Rng,
}

impl LambdaSampler {
    pub fn new(alpha: f64, seed: u64) -> Result<Self> {
        if !(alpha > 0.0) || !alpha.is_finite() {
            return Err(Error::Config(format!("mixup alpha must be > 0, got {alpha}")));
        }
        let beta = Beta::new(alpha, alpha).map_err(|e| Error::Config(e.to_string()))?;
        Ok(Self {
            beta,
            rng: ChaCha8Rng::seed_from_u64(seed),
        })
    }

    pub fn from_config(cfg: &MixupConfig) -> Result<Self> {
        Self::new(cfg.alpha, cfg.seed)
    }

    pub fn sample(&mut self) -> f64 {
        loop {
            let l = self.beta.sample(&mut self.rng);
            if l > 0.0 && l < 1.0 {
                return l;
            }
        }
    }

    fn rng(&mut self) -> &mut ChaCha8Rng {
        &mut self.rng
    }
}

/// Draws one λ from a fresh sampler seeded by `cfg.seed`.
pub fn sample_lambda(cfg: &MixupConfig) -> Result<f64> {
    Ok(LambdaSampler::from_config(cfg)?.sample())
}

/// `λ·a + (1−λ)·b`, element-wise.
pub fn mix_vectors(lambda: f64, a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter()
        .zip(b)
        .map(|(&u, &v)| lambda * u + (1.0 - lambda) * v)
        .collect()
}

fn mixed_label(lambda: f64, yi: usize, yj: usize, classes: usize) -> Vec<f64> {
    let mut y = vec![0.0; classes];
    if yi == yj {
        y[yi] = 1.0;
    } else {
        y[yi] = lambda;
        y[yj] = 1.0 - lambda;
    }
    y
}

fn hard_label(y: usize, classes: usize) -> Vec<f64> {
    let mut v = vec![0.0; classes];
    v[y] = 1.0;
    v
}

/// Eligible-partner lists for every anchor.
struct PairPool {
    anchors: Vec<usize>,
    partners: Vec<Vec<usize>>,
}

impl PairPool {
    fn build(n: usize, eligible: impl Fn(usize, usize) -> bool) -> Self {
        let mut anchors = Vec::new();
        let mut partners = Vec::new();
        for i in 0..n {
            let p: Vec<usize> = (0..n).filter(|&j| j != i && eligible(i, j)).collect();
            if !p.is_empty() {
                anchors.push(i);
                partners.push(p);
            }
        }
        Self { anchors, partners }
    }

    /// Same-group pools built from a group key, without the O(n²) scan.
    fn grouped(keys: &[usize], groups: usize) -> Self {
        let mut members = vec![Vec::new(); groups];
        for (i, &k) in keys.iter().enumerate() {
            members[k].push(i);
        }
        let mut anchors = Vec::new();
        let mut partners = Vec::new();
        for (i, &k) in keys.iter().enumerate() {
            if members[k].len() > 1 {
                anchors.push(i);
                partners.push(members[k].iter().copied().filter(|&j| j != i).collect());
            }
        }
        Self { anchors, partners }
    }

    fn draw(&self, rng: &mut ChaCha8Rng) -> (usize, usize) {
        let a = rng.random_range(0..self.anchors.len());
        let p = &self.partners[a];
        (self.anchors[a], p[rng.random_range(0..p.len())])
    }
}

fn make_sample(
    data: &DomainDataset,
    lambda: f64,
    (i, j): (usize, usize),
    label: Vec<f64>,
    rule: MixRule,
) -> MixSample {
    MixSample {
        x: mix_vectors(lambda, data.sample(i), data.sample(j)),
        y: label,
        lambda,
        parents: (i, j),
        parent_domains: (data.domain_ids()[i], data.domain_ids()[j]),
        rule,
    }
}

/// Plain Mixup over all pairs `i ≠ j`.
pub fn gen_vanilla(data: &DomainDataset, cfg: &MixupConfig) -> Result<Vec<MixSample>> {
    cfg.validate()?;
    let n = data.len();
    if n < 2 {
        return Err(Error::Data(format!("vanilla mixup needs at least 2 samples, got {n}")));
    }
    let mut sampler = LambdaSampler::from_config(cfg)?;
    let c = data.class_count();
    let mut out = Vec::with_capacity(cfg.count);
    for _ in 0..cfg.count {
        let lambda = sampler.sample();
        let rng = sampler.rng();
        let i = rng.random_range(0..n);
        let mut j = rng.random_range(0..n - 1);
        if j >= i {
            j += 1;
        }
        let (yi, yj) = (data.labels()[i], data.labels()[j]);
        out.push(make_sample(data, lambda, (i, j), mixed_label(lambda, yi, yj, c), MixRule::Vanilla));
    }
    Ok(out)
}

/// Guidance set: `⌈count/2⌉` same-class cross-domain mixes with hard labels,
/// then `⌊count/2⌋` within-domain mixes with soft labels.
pub fn gen_optd(sources: &DomainDataset, cfg: &MixupConfig) -> Result<Vec<MixSample>> {
    cfg.validate()?;
    if sources.domain_count() < 2 {
        return Err(Error::Generation("OPTD needs at least 2 source domains".into()));
    }
    let cells = sources.cells();
    for c in 0..sources.class_count() {
        let present = cells.iter().filter(|row| !row[c].is_empty()).count();
        if present < 2 {
            return Err(Error::Generation(format!(
                "class {c} is present in {present} domain(s); cross-domain mixing needs 2"
            )));
        }
    }
    let labels = sources.labels();
    let domains = sources.domain_ids();
    let cross = PairPool::build(sources.len(), |i, j| labels[i] == labels[j] && domains[i] != domains[j]);
    let within = PairPool::grouped(domains, sources.domain_count());
    let part_two = cfg.count / 2;
    let part_one = cfg.count - part_two;
    if part_two > 0 && within.anchors.is_empty() {
        return Err(Error::Generation("no domain has two samples for within-domain mixing".into()));
    }

    let mut sampler = LambdaSampler::from_config(cfg)?;
    let c = sources.class_count();
    let mut out = Vec::with_capacity(cfg.count);
    for _ in 0..part_one {
        let lambda = sampler.sample();
        let (i, j) = cross.draw(sampler.rng());
        out.push(make_sample(sources, lambda, (i, j), hard_label(labels[i], c), MixRule::OptdCrossDomain));
    }
    for _ in 0..part_two {
        let lambda = sampler.sample();
        let (i, j) = within.draw(sampler.rng());
        out.push(make_sample(
            sources,
            lambda,
            (i, j),
            mixed_label(lambda, labels[i], labels[j], c),
            MixRule::OptdWithinDomain,
        ));
    }
    Ok(out)
}

/// Validation set: same-class mixes with hard labels, parents' domains
/// unconstrained.
pub fn gen_vald(sources: &DomainDataset, cfg: &MixupConfig) -> Result<Vec<MixSample>> {
    cfg.validate()?;
    if let Some((c, _)) = sources
        .class_histogram()
        .iter()
        .enumerate()
        .find(|(_, &k)| k == 1)
    {
        return Err(Error::Generation(format!("class {c} has a single sample")));
    }
    let pool = PairPool::grouped(sources.labels(), sources.class_count());
    if pool.anchors.is_empty() && cfg.count > 0 {
        return Err(Error::Generation("no class has two samples".into()));
    }
    let mut sampler = LambdaSampler::from_config(cfg)?;
    let c = sources.class_count();
    let mut out = Vec::with_capacity(cfg.count);
    for _ in 0..cfg.count {
        let lambda = sampler.sample();
        let (i, j) = pool.draw(sampler.rng());
        out.push(make_sample(sources, lambda, (i, j), hard_label(sources.labels()[i], c), MixRule::Vald));
    }
    Ok(out)
}

/// Stacks samples into `(features, soft labels)` matrices.
pub fn to_tensors(samples: &[MixSample]) -> Result<(Tensor, Tensor)> {
    let xs: Vec<&[f64]> = samples.iter().map(|s| s.x.as_slice()).collect();
    let ys: Vec<&[f64]> = samples.iter().map(|s| s.y.as_slice()).collect();
    Ok((Tensor::from_rows(&xs)?, Tensor::from_rows(&ys)?))
}
