use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::DomainDataset;
use crate::numcore::Tensor;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ShiftFamily {
    /// `C` isotropic Gaussian blobs on a circle, the whole layout rotated by
    /// the domain angle.
    RotatedGaussians,
    /// Two interleaved half-moons rotated by the domain angle (`C = 2`).
    RotatedMoons,
}

/// One-parameter family of shifted domains. Angles are in degrees.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShiftFamilySpec {
    pub family: ShiftFamily,
    pub source_angles: Vec<f64>,
    pub target_angle: f64,
    /// Target inside the hull of the source angles, drawn as a mixture of the
    /// source generators with weights `mixture`.
    pub convex: bool,
    pub mixture: Vec<f64>,
    pub noise: f64,
    pub samples_per_domain: usize,
    pub classes: usize,
    #[serde(default = "default_radius")]
    pub radius: f64,
    pub seed: u64,
}

fn default_radius() -> f64 {
    2.0
}

impl ShiftFamilySpec {
    /// Convex target: the mixture `weights` of the sources, with the target
    /// angle set to the weighted mean of source angles.
    pub fn convex(source_angles: Vec<f64>, weights: Vec<f64>, seed: u64) -> Self {
        let target_angle = source_angles.iter().zip(&weights).map(|(a, w)| a * w).sum();
        Self {
            family: ShiftFamily::RotatedGaussians,
            source_angles,
            target_angle,
            convex: true,
            mixture: weights,
            noise: 0.5,
            samples_per_domain: 500,
            classes: 4,
            radius: default_radius(),
            seed,
        }
    }

    /// Target generated at an angle outside the source hull.
    pub fn extrapolated(source_angles: Vec<f64>, target_angle: f64, seed: u64) -> Self {
        Self {
            family: ShiftFamily::RotatedGaussians,
            source_angles,
            target_angle,
            convex: false,
            mixture: Vec::new(),
            noise: 0.5,
            samples_per_domain: 500,
            classes: 4,
            radius: default_radius(),
            seed,
        }
    }

    pub fn target_in_hull(&self) -> bool {
        let lo = self.source_angles.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = self.source_angles.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        self.target_angle >= lo && self.target_angle <= hi
    }

    pub fn validate(&self) -> Result<()> {
        if self.source_angles.len() < 2 {
            return Err(Error::Spec("need at least 2 source domains".into()));
        }
        if self.classes < 2 {
            return Err(Error::Spec("need at least 2 classes".into()));
        }
        if self.samples_per_domain == 0 {
            return Err(Error::Spec("samples_per_domain must be > 0".into()));
        }
        if self.family == ShiftFamily::RotatedMoons && self.classes != 2 {
            return Err(Error::Spec("rotated moons have exactly 2 classes".into()));
        }
        if !(self.noise >= 0.0) || !self.noise.is_finite() {
            return Err(Error::Spec(format!("noise scale {} invalid", self.noise)));
        }
        if self
            .source_angles
            .iter()
            .chain(std::iter::once(&self.target_angle))
            .any(|a| !a.is_finite())
        {
            return Err(Error::Spec("angles must be finite".into()));
        }
        if self.convex {
            if !self.target_in_hull() {
                return Err(Error::Spec(format!(
                    "convex target angle {} lies outside the source hull",
                    self.target_angle
                )));
            }
            if self.mixture.len() != self.source_angles.len() {
                return Err(Error::Spec(format!(
                    "{} mixture weights for {} sources",
                    self.mixture.len(),
                    self.source_angles.len()
                )));
            }
            if self.mixture.iter().any(|&w| !(w >= 0.0)) {
                return Err(Error::Spec("mixture weights must be non-negative".into()));
            }
            let total: f64 = self.mixture.iter().sum();
            if (total - 1.0).abs() > 1e-9 {
                return Err(Error::Spec(format!("mixture weights sum to {total}, not 1")));
            }
        } else if self.target_in_hull() {
            return Err(Error::Spec(format!(
                "non-convex target angle {} lies inside the source hull",
                self.target_angle
            )));
        }
        Ok(())
    }

    fn draw(&self, class: usize, angle_deg: f64, rng: &mut ChaCha8Rng) -> [f64; 2] {
        let theta = angle_deg.to_radians();
        let base = match self.family {
            ShiftFamily::RotatedGaussians => {
                let phi = 2.0 * PI * class as f64 / self.classes as f64;
                [self.radius * phi.cos(), self.radius * phi.sin()]
            }
            ShiftFamily::RotatedMoons => {
                let t: f64 = rng.random_range(0.0..PI);
                let s = self.radius / 2.0;
                if class == 0 {
                    [s * (t.cos() - 0.5), s * (t.sin() - 0.25)]
                } else {
                    [s * (0.5 - t.cos()), s * (0.25 - t.sin())]
                }
            }
        };
        let (sin, cos) = theta.sin_cos();
        let rotated = [cos * base[0] - sin * base[1], sin * base[0] + cos * base[1]];
        let nx: f64 = StandardNormal.sample(rng);
        let ny: f64 = StandardNormal.sample(rng);
        [rotated[0] + self.noise * nx, rotated[1] + self.noise * ny]
    }
}

/// Class of the `s`-th sample in a domain; round-robin keeps classes balanced
/// within one sample.
fn class_of(s: usize, classes: usize) -> usize {
    s % classes
}

/// Splits `total` into integer parts proportional to `weights` (largest
/// remainder).
fn apportion(total: usize, weights: &[f64]) -> Vec<usize> {
    let raw: Vec<f64> = weights.iter().map(|w| w * total as f64).collect();
    let mut counts: Vec<usize> = raw.iter().map(|r| r.floor() as usize).collect();
    let mut rest = total - counts.iter().sum::<usize>();
    let mut order: Vec<usize> = (0..weights.len()).collect();
    order.sort_by(|&a, &b| {
        let fa = raw[a] - raw[a].floor();
        let fb = raw[b] - raw[b].floor();
        fb.total_cmp(&fa).then(a.cmp(&b))
    });
    for &i in order.iter().cycle() {
        if rest == 0 {
            break;
        }
        if weights[i] > 0.0 {
            counts[i] += 1;
            rest -= 1;
        }
    }
    counts
}

/// Draws the source domains and the target domain of `spec`.
///
/// Sources carry domain ids `0..M`; the target is a single-domain dataset.
pub fn generate_synthetic(spec: &ShiftFamilySpec) -> Result<(DomainDataset, DomainDataset)> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let n = spec.samples_per_domain;
    let m = spec.source_angles.len();

    let mut feats = Vec::with_capacity(m * n * 2);
    let mut labels = Vec::with_capacity(m * n);
    let mut domains = Vec::with_capacity(m * n);
    for (d, &angle) in spec.source_angles.iter().enumerate() {
        for s in 0..n {
            let c = class_of(s, spec.classes);
            feats.extend_from_slice(&spec.draw(c, angle, &mut rng));
            labels.push(c);
            domains.push(d);
        }
    }
    let sources = DomainDataset::new(
        Tensor::matrix(m * n, 2, feats)?,
        labels,
        domains,
        spec.classes,
        m,
    )?;

    let mut feats = Vec::with_capacity(n * 2);
    let mut labels = Vec::with_capacity(n);
    if spec.convex {
        // per class, allocate samples to mixture components
        let mut per_class = vec![0usize; spec.classes];
        for s in 0..n {
            per_class[class_of(s, spec.classes)] += 1;
        }
        let plans: Vec<Vec<usize>> = per_class
            .iter()
            .map(|&k| {
                let counts = apportion(k, &spec.mixture);
                counts
                    .iter()
                    .enumerate()
                    .flat_map(|(comp, &cnt)| std::iter::repeat_n(comp, cnt))
                    .collect()
            })
            .collect();
        let mut cursor = vec![0usize; spec.classes];
        for s in 0..n {
            let c = class_of(s, spec.classes);
            let comp = plans[c][cursor[c]];
            cursor[c] += 1;
            feats.extend_from_slice(&spec.draw(c, spec.source_angles[comp], &mut rng));
            labels.push(c);
        }
    } else {
        for s in 0..n {
            let c = class_of(s, spec.classes);
            feats.extend_from_slice(&spec.draw(c, spec.target_angle, &mut rng));
            labels.push(c);
        }
    }
    let target = DomainDataset::new(Tensor::matrix(n, 2, feats)?, labels, vec![0; n], spec.classes, 1)?;
    Ok((sources, target))
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Rotation estimate from class means: circular mean of
    /// `angle(mean_c) − 2πc/C`.
    fn estimate_rotation_deg(data: &DomainDataset) -> f64 {
        let c = data.class_count();
        let mut sums = vec![[0.0, 0.0]; c];
        for i in 0..data.len() {
            let y = data.labels()[i];
            sums[y][0] += data.sample(i)[0];
            sums[y][1] += data.sample(i)[1];
        }
        let (mut sx, mut sy) = (0.0, 0.0);
        for (k, s) in sums.iter().enumerate() {
            let off = s[1].atan2(s[0]) - 2.0 * PI * k as f64 / c as f64;
            sx += off.cos();
            sy += off.sin();
        }
        sy.atan2(sx).to_degrees()
    }

    #[test]
    fn extrapolated_target_rotation_recovered() {
        let mut spec = ShiftFamilySpec::extrapolated(vec![0.0, 30.0, 60.0], 90.0, 3);
        spec.samples_per_domain = 2000;
        let (_, target) = generate_synthetic(&spec).unwrap();
        let est = estimate_rotation_deg(&target);
        assert!((est - 90.0).abs() < 3.0, "estimated {est}");
    }

    #[test]
    fn classes_balanced_within_one() {
        let mut spec = ShiftFamilySpec::convex(vec![0.0, 40.0], vec![0.3, 0.7], 1);
        spec.samples_per_domain = 103;
        let (src, tgt) = generate_synthetic(&spec).unwrap();
        for d in 0..2 {
            let sub = src.subset(&src.domain_indices(d));
            let h = sub.class_histogram();
            assert!(h.iter().max().unwrap() - h.iter().min().unwrap() <= 1);
        }
        let h = tgt.class_histogram();
        assert!(h.iter().max().unwrap() - h.iter().min().unwrap() <= 1);
    }

    #[test]
    fn degenerate_mixture_matches_source_zero() {
        let mut spec = ShiftFamilySpec::convex(vec![0.0, 30.0, 60.0], vec![1.0, 0.0, 0.0], 8);
        spec.samples_per_domain = 4000;
        let (src, tgt) = generate_synthetic(&spec).unwrap();
        assert_eq!(spec.target_angle, 0.0);
        let s0 = src.subset(&src.domain_indices(0));
        let est_src = estimate_rotation_deg(&s0);
        let est_tgt = estimate_rotation_deg(&tgt);
        assert!((est_src - est_tgt).abs() < 2.0);
        // per-class second moments agree within sampling error
        let var = |d: &DomainDataset| {
            let xs: Vec<f64> = (0..d.len()).filter(|&i| d.labels()[i] == 0).map(|i| d.sample(i)[1]).collect();
            let mean = xs.iter().sum::<f64>() / xs.len() as f64;
            xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (xs.len() - 1) as f64
        };
        assert!((var(&s0) - var(&tgt)).abs() < 0.05);
    }

    #[test]
    fn convex_flag_checks_hull() {
        let mut spec = ShiftFamilySpec::convex(vec![0.0, 30.0, 60.0], vec![0.2, 0.3, 0.5], 0);
        assert!(spec.target_in_hull());
        assert!(spec.validate().is_ok());
        spec.target_angle = 75.0;
        assert!(matches!(spec.validate(), Err(Error::Spec(_))));
        let mut ext = ShiftFamilySpec::extrapolated(vec![0.0, 30.0], 15.0, 0);
        assert!(ext.validate().is_err());
        ext.target_angle = 45.0;
        assert!(ext.validate().is_ok());
    }

    #[test]
    fn degenerate_specs_rejected() {
        let mut spec = ShiftFamilySpec::extrapolated(vec![0.0], 10.0, 0);
        assert!(generate_synthetic(&spec).is_err());
        spec.source_angles = vec![0.0, 5.0];
        spec.samples_per_domain = 0;
        assert!(generate_synthetic(&spec).is_err());
    }

    #[test]
    fn moons_generate() {
        let mut spec = ShiftFamilySpec::extrapolated(vec![0.0, 20.0], 50.0, 2);
        spec.family = ShiftFamily::RotatedMoons;
        spec.classes = 2;
        let (src, tgt) = generate_synthetic(&spec).unwrap();
        assert_eq!(src.len(), 1000);
        assert_eq!(tgt.len(), 500);
        assert!(src.features().is_finite());
    }

    #[test]
    fn apportion_sums() {
        assert_eq!(apportion(10, &[0.25, 0.25, 0.5]), vec![3, 2, 5]);
        assert_eq!(apportion(7, &[1.0, 0.0, 0.0]), vec![7, 0, 0]);
    }
}
