use serde::{Deserialize, Serialize};

use super::losses::{coral_loss, cross_entropy, grl_backward, grl_forward};
use crate::numcore::{Activation, Network, NetworkSpec, Tensor};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    Erm,
    ErmPerSource,
    Dann,
    Coral,
}

impl Method {
    pub fn as_str(self) -> &'static str {
        match self {
            Method::Erm => "erm",
            Method::ErmPerSource => "erm-per-source",
            Method::Dann => "dann",
            Method::Coral => "coral",
        }
    }

    /// Number of objectives whose θ_f gradients form the columns of `G`.
    pub fn objective_count(self, domains: usize) -> usize {
        match self {
            Method::Erm => 1,
            Method::ErmPerSource => domains,
            Method::Dann | Method::Coral => 2,
        }
    }
}

impl std::str::FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "erm" => Ok(Method::Erm),
            "erm-per-source" => Ok(Method::ErmPerSource),
            "dann" => Ok(Method::Dann),
            "coral" => Ok(Method::Coral),
            other => Err(Error::Config(format!("unknown method '{other}'"))),
        }
    }
}

/// Widths for building a [`ModelBundle`].
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BundleSpec {
    pub input_width: usize,
    pub hidden: Vec<usize>,
    pub feature_width: usize,
    pub classes: usize,
    pub domains: usize,
    pub disc_hidden: usize,
    pub seed: u64,
}

/// Feature extractor `h_f`, classifier `h_c` and (for DANN) the domain
/// discriminator `h_adv`.
#[derive(Debug, Clone)]
pub struct ModelBundle {
    pub feat: Network,
    pub clf: Network,
    pub disc: Option<Network>,
    pub method: Method,
    domains: usize,
}

impl ModelBundle {
    pub fn build(method: Method, spec: &BundleSpec) -> Result<Self> {
        let mut widths = vec![spec.input_width];
        widths.extend(&spec.hidden);
        widths.push(spec.feature_width);
        let feat = Network::new(NetworkSpec::mlp(&widths, Activation::Relu, Activation::Relu, spec.seed)?)?;
        let clf = Network::new(NetworkSpec::mlp(
            &[spec.feature_width, spec.classes],
            Activation::Identity,
            Activation::SoftmaxAtLoss,
            spec.seed.wrapping_add(1),
        )?)?;
        let disc = match method {
            Method::Dann => Some(Network::new(NetworkSpec::mlp(
                &[spec.feature_width, spec.disc_hidden, spec.domains],
                Activation::Relu,
                Activation::SoftmaxAtLoss,
                spec.seed.wrapping_add(2),
            )?)?),
            _ => None,
        };
        Self::from_parts(feat, clf, disc, method, spec.domains)
    }

    pub fn from_parts(
        feat: Network,
        clf: Network,
        disc: Option<Network>,
        method: Method,
        domains: usize,
    ) -> Result<Self> {
        if clf.input_width() != feat.output_width() {
            return Err(Error::Config(format!(
                "classifier expects width {}, feature extractor emits {}",
                clf.input_width(),
                feat.output_width()
            )));
        }
        if let Some(d) = &disc {
            if d.input_width() != feat.output_width() {
                return Err(Error::Config("discriminator input width differs from feature width".into()));
            }
            if d.output_width() != domains {
                return Err(Error::Config(format!(
                    "discriminator emits {} logits for {domains} domains",
                    d.output_width()
                )));
            }
        }
        if method == Method::Dann && disc.is_none() {
            return Err(Error::Config("DANN needs a domain discriminator".into()));
        }
        Ok(Self {
            feat,
            clf,
            disc,
            method,
            domains,
        })
    }

    pub fn domains(&self) -> usize {
        self.domains
    }

    pub fn classes(&self) -> usize {
        self.clf.output_width()
    }

    pub fn predict_logits(&self, x: &Tensor) -> Result<Tensor> {
        self.clf.predict(&self.feat.predict(x)?)
    }

    /// Parameter versions of (h_f, h_c, h_adv).
    pub fn snapshot(&self) -> Snapshot {
        Snapshot {
            feat: self.feat.params().version(),
            clf: self.clf.params().version(),
            disc: self.disc.as_ref().map(|d| d.params().version()),
        }
    }

    fn zero_grads(&mut self) {
        self.feat.zero_grad();
        self.clf.zero_grad();
        if let Some(d) = &mut self.disc {
            d.zero_grad();
        }
    }

    /// θ_f gradient of an upstream gradient on the features, with the
    /// feature extractor's accumulators reset first.
    fn feature_column(&mut self, dz: &Tensor) -> Result<Vec<f64>> {
        self.feat.zero_grad();
        self.feat.backward(dz)?;
        Ok(self.feat.params().flat_grads())
    }

    /// Applies `θ_f ← θ_f − lr·direction` and plain gradient steps on the
    /// heads using the gradients recorded in `grads`.
    pub fn apply(&mut self, grads: &ObjectiveGrads, direction: &[f64], lr: f64) -> Result<()> {
        if grads.snapshot != self.snapshot() {
            return Err(Error::State(
                "gradients were computed for a different parameter snapshot".into(),
            ));
        }
        if direction.len() != self.feat.params().flat_len() {
            return Err(Error::Dimension(format!(
                "direction has {} entries, feature extractor has {}",
                direction.len(),
                self.feat.params().flat_len()
            )));
        }
        if lr == 0.0 {
            return Ok(());
        }
        self.feat.params_mut().apply_step(direction, lr)?;
        self.clf.params_mut().apply_step(&grads.clf_grad, lr)?;
        if let (Some(d), Some(g)) = (&mut self.disc, &grads.disc_grad) {
            d.params_mut().apply_step(g, lr)?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Snapshot {
    feat: u64,
    clf: u64,
    disc: Option<u64>,
}

/// Objective values `ℓ_0 … ℓ_k`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LossVector {
    pub values: Vec<f64>,
    pub labels: Vec<String>,
}

impl LossVector {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// Per-objective θ_f gradients (the columns of `G`) plus head gradients,
/// tied to the parameter snapshot they were computed at.
#[derive(Debug, Clone)]
pub struct ObjectiveGrads {
    pub losses: LossVector,
    pub columns: Vec<Vec<f64>>,
    pub clf_grad: Vec<f64>,
    pub disc_grad: Option<Vec<f64>>,
    snapshot: Snapshot,
}

impl ObjectiveGrads {
    pub fn snapshot(&self) -> Snapshot {
        self.snapshot
    }
}

/// A mini-batch drawn from the source domains.
#[derive(Debug, Clone)]
pub struct SourceBatch {
    pub x: Tensor,
    /// Soft labels, `n x C`.
    pub y: Tensor,
    pub domains: Vec<usize>,
}

impl SourceBatch {
    pub fn len(&self) -> usize {
        self.domains.len()
    }

    pub fn is_empty(&self) -> bool {
        self.domains.is_empty()
    }

    fn rows_of_domain(&self, d: usize) -> Vec<usize> {
        (0..self.len()).filter(|&i| self.domains[i] == d).collect()
    }
}

fn one_hot(ids: &[usize], width: usize) -> Tensor {
    let mut data = vec![0.0; ids.len() * width];
    for (r, &k) in ids.iter().enumerate() {
        data[r * width + k] = 1.0;
    }
    Tensor::from_parts(vec![ids.len(), width], data)
}

/// Classification objective alone (`m = 1`).
pub fn erm_objective(bundle: &mut ModelBundle, batch: &SourceBatch) -> Result<ObjectiveGrads> {
    bundle.zero_grads();
    let snapshot = bundle.snapshot();
    let z = bundle.feat.forward(&batch.x)?;
    let logits = bundle.clf.forward(&z)?;
    let (l0, dlogits) = cross_entropy(&logits, &batch.y)?;
    let dz = bundle.clf.backward(&dlogits)?;
    let g0 = bundle.feature_column(&dz)?;
    Ok(ObjectiveGrads {
        losses: LossVector {
            values: vec![l0],
            labels: vec!["classification".into()],
        },
        columns: vec![g0],
        clf_grad: bundle.clf.params().flat_grads(),
        disc_grad: None,
        snapshot,
    })
}

/// Classification loss `ℓ_0` and adversarial domain loss `ℓ_1`.
///
/// Column 1 is the θ_f gradient after the reversal layer, i.e. `−∇ℓ_1`; the
/// discriminator keeps the unreversed gradient.
pub fn dann_losses(bundle: &mut ModelBundle, batch: &SourceBatch) -> Result<ObjectiveGrads> {
    if bundle.disc.is_none() {
        return Err(Error::Config("DANN losses need a domain discriminator".into()));
    }
    bundle.zero_grads();
    let snapshot = bundle.snapshot();
    let domains = bundle.domains;
    let z = bundle.feat.forward(&batch.x)?;
    let logits = bundle.clf.forward(&z)?;
    let (l0, dlogits) = cross_entropy(&logits, &batch.y)?;
    let dz0 = bundle.clf.backward(&dlogits)?;

    let disc = bundle.disc.as_mut().expect("checked above");
    let dom_logits = disc.forward(&grl_forward(&z))?;
    let (l1, ddom) = cross_entropy(&dom_logits, &one_hot(&batch.domains, domains))?;
    let dz1 = grl_backward(&disc.backward(&ddom)?);
    let disc_grad = disc.params().flat_grads();

    let g0 = bundle.feature_column(&dz0)?;
    let g1 = bundle.feature_column(&dz1)?;
    Ok(ObjectiveGrads {
        losses: LossVector {
            values: vec![l0, l1],
            labels: vec!["classification".into(), "domain-adversarial".into()],
        },
        columns: vec![g0, g1],
        clf_grad: bundle.clf.params().flat_grads(),
        disc_grad: Some(disc_grad),
        snapshot,
    })
}

/// Classification loss and CORAL alignment averaged over all pairs of source
/// domains present in the batch.
pub fn coral_objectives(bundle: &mut ModelBundle, batch: &SourceBatch) -> Result<ObjectiveGrads> {
    bundle.zero_grads();
    let snapshot = bundle.snapshot();
    let z = bundle.feat.forward(&batch.x)?;
    let logits = bundle.clf.forward(&z)?;
    let (l0, dlogits) = cross_entropy(&logits, &batch.y)?;
    let dz0 = bundle.clf.backward(&dlogits)?;

    let groups: Vec<Vec<usize>> = (0..bundle.domains)
        .map(|d| batch.rows_of_domain(d))
        .filter(|rows| !rows.is_empty())
        .collect();
    if groups.len() < 2 {
        return Err(Error::Data("CORAL needs at least two domains in the batch".into()));
    }
    let width = z.cols();
    let mut dz1 = vec![0.0; z.len()];
    let mut l1 = 0.0;
    let mut pairs = 0usize;
    for a in 0..groups.len() {
        for b in a + 1..groups.len() {
            let out = coral_loss(&z.select_rows(&groups[a]), &z.select_rows(&groups[b]))?;
            l1 += out.loss;
            for (k, &r) in groups[a].iter().enumerate() {
                for (dst, src) in dz1[r * width..(r + 1) * width].iter_mut().zip(out.grad_a.row(k)) {
                    *dst += src;
                }
            }
            for (k, &r) in groups[b].iter().enumerate() {
                for (dst, src) in dz1[r * width..(r + 1) * width].iter_mut().zip(out.grad_b.row(k)) {
                    *dst += src;
                }
            }
            pairs += 1;
        }
    }
    let inv = 1.0 / pairs as f64;
    dz1.iter_mut().for_each(|v| *v *= inv);
    let dz1 = Tensor::from_parts(z.shape().to_vec(), dz1);

    let g0 = bundle.feature_column(&dz0)?;
    let g1 = bundle.feature_column(&dz1)?;
    Ok(ObjectiveGrads {
        losses: LossVector {
            values: vec![l0, l1 * inv],
            labels: vec!["classification".into(), "coral".into()],
        },
        columns: vec![g0, g1],
        clf_grad: bundle.clf.params().flat_grads(),
        disc_grad: None,
        snapshot,
    })
}

/// One classification objective per source domain.
///
/// The classifier head receives the mean of the per-source head gradients.
pub fn per_source_losses(bundle: &mut ModelBundle, batch: &SourceBatch) -> Result<ObjectiveGrads> {
    let m = bundle.domains;
    let rows: Vec<Vec<usize>> = (0..m).map(|d| batch.rows_of_domain(d)).collect();
    if let Some(d) = rows.iter().position(Vec::is_empty) {
        return Err(Error::Config(format!("batch has no rows for source {d}")));
    }
    bundle.zero_grads();
    let snapshot = bundle.snapshot();
    let z = bundle.feat.forward(&batch.x)?;
    let logits = bundle.clf.forward(&z)?;
    let c = logits.cols();
    let mut values = Vec::with_capacity(m);
    let mut columns = Vec::with_capacity(m);
    for idx in &rows {
        let (loss, g) = cross_entropy(&logits.select_rows(idx), &batch.y.select_rows(idx))?;
        let mut upstream = vec![0.0; logits.len()];
        for (k, &r) in idx.iter().enumerate() {
            upstream[r * c..(r + 1) * c].copy_from_slice(g.row(k));
        }
        let dz = bundle.clf.backward(&Tensor::from_parts(logits.shape().to_vec(), upstream))?;
        columns.push(bundle.feature_column(&dz)?);
        values.push(loss);
    }
    let clf_grad = bundle
        .clf
        .params()
        .flat_grads()
        .into_iter()
        .map(|g| g / m as f64)
        .collect();
    Ok(ObjectiveGrads {
        losses: LossVector {
            values,
            labels: (0..m).map(|d| format!("source-{d}")).collect(),
        },
        columns,
        clf_grad,
        disc_grad: None,
        snapshot,
    })
}

/// Dispatches on the bundle's method.
pub fn compute_objectives(bundle: &mut ModelBundle, batch: &SourceBatch) -> Result<ObjectiveGrads> {
    match bundle.method {
        Method::Erm => erm_objective(bundle, batch),
        Method::ErmPerSource => per_source_losses(bundle, batch),
        Method::Dann => dann_losses(bundle, batch),
        Method::Coral => coral_objectives(bundle, batch),
    }
}

/// Fixed-weight direction `∇ℓ_0 + Σ λ_i ∇ℓ_i` over θ_f.
pub fn scalarized_direction(columns: &[Vec<f64>], lambdas: &[f64]) -> Result<Vec<f64>> {
    let Some((first, rest)) = columns.split_first() else {
        return Err(Error::Config("no objective gradients".into()));
    };
    if lambdas.len() != rest.len() {
        return Err(Error::Config(format!(
            "{} weights for {} regularization objectives",
            lambdas.len(),
            rest.len()
        )));
    }
    if let Some(l) = lambdas.iter().find(|&&l| !(l >= 0.0)) {
        return Err(Error::Config(format!("objective weight {l} must be non-negative")));
    }
    let mut dir = first.clone();
    for (col, &lam) in rest.iter().zip(lambdas) {
        if col.len() != dir.len() {
            return Err(Error::Dimension("gradient columns differ in length".into()));
        }
        for (d, g) in dir.iter_mut().zip(col) {
            *d += lam * g;
        }
    }
    Ok(dir)
}

/// Baseline update: applies [`scalarized_direction`] to θ_f and plain
/// gradients to the heads.
pub fn scalarized_step(
    bundle: &mut ModelBundle,
    grads: &ObjectiveGrads,
    lambdas: &[f64],
    lr: f64,
) -> Result<Vec<f64>> {
    let dir = scalarized_direction(&grads.columns, lambdas)?;
    bundle.apply(grads, &dir, lr)?;
    Ok(dir)
}
