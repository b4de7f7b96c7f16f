use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::datadomains::{CsvSchema, ShiftFamilySpec};
use crate::objectives::Method;
use crate::selection::Policy;
use crate::{Error, Result};

/// How the guidance gradient and the objective columns are formed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum GradMode {
    /// Whole guidance set, sources as one classification objective.
    #[serde(rename = "w-w")]
    WholeWhole,
    /// One guidance mini-batch, sources as one classification objective.
    #[serde(rename = "b-w")]
    BatchWhole,
    /// Whole guidance set, one classification objective per source.
    #[serde(rename = "w-s")]
    WholeSeparate,
}

impl GradMode {
    pub const ALL: [GradMode; 3] = [GradMode::WholeWhole, GradMode::BatchWhole, GradMode::WholeSeparate];

    pub fn as_str(self) -> &'static str {
        match self {
            GradMode::WholeWhole => "w-w",
            GradMode::BatchWhole => "b-w",
            GradMode::WholeSeparate => "w-s",
        }
    }
}

impl std::str::FromStr for GradMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "w-w" => Ok(GradMode::WholeWhole),
            "b-w" => Ok(GradMode::BatchWhole),
            "w-s" => Ok(GradMode::WholeSeparate),
            other => Err(Error::Config(format!("unknown gradient mode `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CsvDataset {
    pub path: PathBuf,
    #[serde(flatten)]
    pub schema: CsvSchema,
    /// Domain names held out as targets, one run per name.
    pub targets: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum DatasetSpec {
    Synthetic(ShiftFamilySpec),
    Csv(CsvDataset),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub dataset: DatasetSpec,
    pub method: Method,
    pub pareto: bool,
    pub selection: Policy,
    pub alpha: f64,
    /// Separate concentration for the validation mixes; defaults to `alpha`.
    pub vald_alpha: Option<f64>,
    pub epsilon: f64,
    /// ω refresh period in iterations.
    #[serde(rename = "B")]
    pub refresh_every: usize,
    pub lr: f64,
    pub epochs: usize,
    pub batch_per_domain: usize,
    pub seeds: Vec<u64>,
    pub grad_mode: GradMode,
    pub out_dir: PathBuf,
    /// Weight of every regularization objective when `pareto` is off.
    pub fixed_lambda: f64,
    pub train_ratio: f64,
    pub hidden: Vec<usize>,
    pub feature_width: usize,
    pub disc_hidden: usize,
    /// Guidance set size; defaults to one source domain's training share.
    pub optd_count: Option<usize>,
    /// Checkpoint cadence in epochs.
    pub eval_every: usize,
    pub diag: bool,
    /// Row label in reports; derived from the method when absent.
    pub label: Option<String>,
}

/// Three sources at 0°, 30° and 60° with the target a mixture of them.
pub fn case_one(seed: u64) -> ShiftFamilySpec {
    ShiftFamilySpec::convex(vec![0.0, 30.0, 60.0], vec![0.2, 0.5, 0.3], seed)
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            dataset: DatasetSpec::Synthetic(case_one(0)),
            method: Method::Dann,
            pareto: true,
            selection: Policy::Vald,
            alpha: 0.2,
            vald_alpha: None,
            epsilon: 1e-3,
            refresh_every: 5,
            lr: 0.05,
            epochs: 50,
            batch_per_domain: 16,
            seeds: vec![0, 1, 2, 3, 4],
            grad_mode: GradMode::WholeWhole,
            out_dir: PathBuf::from("out"),
            fixed_lambda: 1.0,
            train_ratio: 0.8,
            hidden: vec![16],
            feature_width: 8,
            disc_hidden: 16,
            optd_count: None,
            eval_every: 1,
            diag: false,
            label: None,
        }
    }
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn vald_alpha(&self) -> f64 {
        self.vald_alpha.unwrap_or(self.alpha)
    }

    /// Report row label such as `dann+pareto`.
    pub fn variant(&self) -> String {
        if let Some(l) = &self.label {
            return l.clone();
        }
        let mut s = self.method.as_str().to_string();
        if self.method.objective_count(self.source_count()) > 1 {
            s.push_str(if self.pareto { "+pareto" } else { "+fixed" });
        }
        if self.pareto && self.grad_mode != GradMode::WholeWhole {
            s.push('[');
            s.push_str(self.grad_mode.as_str());
            s.push(']');
        }
        s.push('+');
        s.push_str(self.selection.as_str());
        s
    }

    /// Number of source domains, when it is known without reading data.
    pub fn source_count(&self) -> usize {
        match &self.dataset {
            DatasetSpec::Synthetic(s) => s.source_angles.len(),
            DatasetSpec::Csv(_) => 0,
        }
    }

    /// Every violated constraint, reported together.
    pub fn validate(&self) -> Result<()> {
        let mut v = Vec::new();
        let positive = |x: f64| x.is_finite() && x > 0.0;
        if !positive(self.alpha) {
            v.push(format!("alpha must be > 0, got {}", self.alpha));
        }
        if let Some(a) = self.vald_alpha {
            if !positive(a) {
                v.push(format!("vald_alpha must be > 0, got {a}"));
            }
        }
        if !positive(self.epsilon) {
            v.push(format!("epsilon must be > 0, got {}", self.epsilon));
        }
        if self.refresh_every == 0 {
            v.push("B must be >= 1".into());
        }
        if !positive(self.lr) {
            v.push(format!("lr must be > 0, got {}", self.lr));
        }
        if self.epochs == 0 {
            v.push("epochs must be >= 1".into());
        }
        if self.batch_per_domain < 2 {
            v.push(format!("batch_per_domain must be >= 2, got {}", self.batch_per_domain));
        }
        if self.seeds.is_empty() {
            v.push("seeds must list at least one seed".into());
        }
        if !(self.fixed_lambda.is_finite() && self.fixed_lambda >= 0.0) {
            v.push(format!("fixed_lambda must be >= 0, got {}", self.fixed_lambda));
        }
        if !(self.train_ratio > 0.0 && self.train_ratio < 1.0) {
            v.push(format!("train_ratio must lie in (0, 1), got {}", self.train_ratio));
        }
        if self.hidden.contains(&0) || self.feature_width == 0 || self.disc_hidden == 0 {
            v.push("layer widths must be positive".into());
        }
        if self.eval_every == 0 {
            v.push("eval_every must be >= 1".into());
        }
        if self.optd_count == Some(0) {
            v.push("optd_count must be >= 1".into());
        }
        if self.grad_mode == GradMode::WholeSeparate && self.method != Method::ErmPerSource {
            v.push(format!(
                "grad_mode w-s needs method erm-per-source, got {}",
                self.method.as_str()
            ));
        }
        match &self.dataset {
            DatasetSpec::Synthetic(s) => {
                if let Err(e) = s.validate() {
                    v.push(format!("dataset: {e}"));
                }
            }
            DatasetSpec::Csv(c) => {
                if c.targets.is_empty() {
                    v.push("csv dataset needs at least one target domain".into());
                }
            }
        }
        if let Err(e) = self.check_objectives(self.source_count()) {
            v.push(e);
        }
        if v.is_empty() {
            Ok(())
        } else {
            Err(Error::ConfigViolations(v))
        }
    }

    /// Rejects the Pareto path when the method yields fewer than two
    /// objectives. `sources == 0` means not yet known.
    pub(crate) fn check_objectives(&self, sources: usize) -> std::result::Result<(), String> {
        if !self.pareto || sources == 0 {
            return Ok(());
        }
        let m = self.method.objective_count(sources);
        if m < 2 {
            return Err(format!(
                "pareto needs at least 2 objectives; {} with {sources} source(s) has {m}",
                self.method.as_str()
            ));
        }
        Ok(())
    }
}
