//! Checkpoint selection policies and selection-quality metrics.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::datadomains::DomainDataset;
use crate::mixgen::MixSample;
use crate::numcore::Tensor;
use crate::objectives::ModelBundle;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Policy {
    TrainSplit,
    Vald,
    Oracle,
}

impl Policy {
    pub const ALL: [Policy; 3] = [Policy::TrainSplit, Policy::Vald, Policy::Oracle];

    pub fn as_str(self) -> &'static str {
        match self {
            Policy::TrainSplit => "trainsplit",
            Policy::Vald => "vald",
            Policy::Oracle => "oracle",
        }
    }
}

impl std::fmt::Display for Policy {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Policy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "trainsplit" => Ok(Policy::TrainSplit),
            "vald" => Ok(Policy::Vald),
            "oracle" => Ok(Policy::Oracle),
            other => Err(Error::Config(format!("unknown selection policy `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointRecord {
    pub iteration: usize,
    pub snapshot_id: u64,
    pub val_acc_trainsplit: f64,
    pub val_acc_vald: f64,
    pub target_acc: Option<f64>,
}

impl CheckpointRecord {
    /// The validation signal a policy reads, `None` when it was not recorded.
    pub fn signal(&self, policy: Policy) -> Option<f64> {
        match policy {
            Policy::TrainSplit => Some(self.val_acc_trainsplit),
            Policy::Vald => Some(self.val_acc_vald),
            Policy::Oracle => self.target_acc,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionOutcome {
    pub policy: Policy,
    pub chosen_iter: usize,
    pub chosen_snapshot: u64,
    pub chosen_index: usize,
    pub target_acc: Option<f64>,
    /// `None` unless every checkpoint carries a target accuracy.
    pub regret: Option<f64>,
}

/// Index of the row-wise maximum; the first column wins ties.
pub fn argmax_rows(logits: &Tensor) -> Vec<usize> {
    (0..logits.rows())
        .map(|r| {
            let row = logits.row(r);
            let mut best = 0;
            for (k, &v) in row.iter().enumerate() {
                if v > row[best] {
                    best = k;
                }
            }
            best
        })
        .collect()
}

pub fn accuracy_from_logits(logits: &Tensor, labels: &[usize]) -> Result<f64> {
    if logits.rows() != labels.len() {
        return Err(Error::Dimension(format!(
            "{} predictions for {} labels",
            logits.rows(),
            labels.len()
        )));
    }
    if labels.is_empty() {
        return Err(Error::Data("accuracy of an empty set".into()));
    }
    let correct = argmax_rows(logits)
        .iter()
        .zip(labels)
        .filter(|(p, y)| p == y)
        .count();
    Ok(correct as f64 / labels.len() as f64)
}

/// Something with features and hard labels to score a model on.
pub enum EvalSet<'a> {
    Dataset(&'a DomainDataset),
    Mix(&'a [MixSample]),
}

pub fn evaluate_accuracy(bundle: &ModelBundle, set: EvalSet<'_>) -> Result<f64> {
    match set {
        EvalSet::Dataset(d) => {
            let logits = bundle.predict_logits(d.features())?;
            accuracy_from_logits(&logits, d.labels())
        }
        EvalSet::Mix(samples) => {
            let (x, labels) = hard_mix_tensors(samples)?;
            let logits = bundle.predict_logits(&x)?;
            accuracy_from_logits(&logits, &labels)
        }
    }
}

pub fn evaluate_dataset(bundle: &ModelBundle, data: &DomainDataset) -> Result<f64> {
    evaluate_accuracy(bundle, EvalSet::Dataset(data))
}

pub fn evaluate_mix(bundle: &ModelBundle, samples: &[MixSample]) -> Result<f64> {
    evaluate_accuracy(bundle, EvalSet::Mix(samples))
}

/// Features and hard labels of a mix set; soft labels are rejected.
pub fn hard_mix_tensors(samples: &[MixSample]) -> Result<(Tensor, Vec<usize>)> {
    let mut labels = Vec::with_capacity(samples.len());
    for (i, s) in samples.iter().enumerate() {
        match s.hard_label() {
            Some(y) => labels.push(y),
            None => {
                return Err(Error::Label(format!(
                    "sample {i} ({}) has a soft label; accuracy is undefined",
                    s.rule.as_str()
                )))
            }
        }
    }
    let rows: Vec<&[f64]> = samples.iter().map(|s| s.x.as_slice()).collect();
    Ok((Tensor::from_rows(&rows)?, labels))
}

/// Streaming best-checkpoint tracker with a strict `>` update.
#[derive(Debug, Clone)]
pub struct BestTracker {
    policy: Policy,
    seen: usize,
    best: Option<(usize, f64, CheckpointRecord)>,
    best_target: Option<f64>,
    targets_complete: bool,
}

impl BestTracker {
    pub fn new(policy: Policy) -> Self {
        Self {
            policy,
            seen: 0,
            best: None,
            best_target: None,
            targets_complete: true,
        }
    }

    pub fn observe(&mut self, record: &CheckpointRecord) -> Result<()> {
        let score = record.signal(self.policy).ok_or_else(|| {
            Error::State(format!(
                "checkpoint at iteration {} has no target accuracy for the oracle policy",
                record.iteration
            ))
        })?;
        match record.target_acc {
            Some(t) => {
                if self.best_target.is_none_or(|b| t > b) {
                    self.best_target = Some(t);
                }
            }
            None => self.targets_complete = false,
        }
        if self.best.as_ref().is_none_or(|(_, s, _)| score > *s) {
            self.best = Some((self.seen, score, record.clone()));
        }
        self.seen += 1;
        Ok(())
    }

    pub fn best_score(&self) -> Option<f64> {
        self.best.as_ref().map(|(_, s, _)| *s)
    }

    pub fn outcome(&self) -> Result<SelectionOutcome> {
        let (index, _, rec) = self
            .best
            .as_ref()
            .ok_or_else(|| Error::State("no checkpoints observed".into()))?;
        let regret = match (self.targets_complete, self.best_target, rec.target_acc) {
            (true, Some(best), Some(chosen)) => Some((best - chosen).max(0.0)),
            _ => None,
        };
        Ok(SelectionOutcome {
            policy: self.policy,
            chosen_iter: rec.iteration,
            chosen_snapshot: rec.snapshot_id,
            chosen_index: *index,
            target_acc: rec.target_acc,
            regret,
        })
    }
}

pub fn track_best<'a, I>(records: I, policy: Policy) -> Result<SelectionOutcome>
where
    I: IntoIterator<Item = &'a CheckpointRecord>,
{
    let mut tracker = BestTracker::new(policy);
    for r in records {
        tracker.observe(r)?;
    }
    tracker.outcome()
}

fn ranks(values: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut out = vec![0.0; values.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && values[order[j + 1]] == values[order[i]] {
            j += 1;
        }
        // average rank for ties, 1-based
        let r = (i + j) as f64 / 2.0 + 1.0;
        for &k in &order[i..=j] {
            out[k] = r;
        }
        i = j + 1;
    }
    out
}

/// Spearman rank correlation with average ranks for ties. `None` when either
/// sequence is constant or shorter than two.
pub fn spearman(a: &[f64], b: &[f64]) -> Option<f64> {
    if a.len() != b.len() || a.len() < 2 {
        return None;
    }
    let ra = ranks(a);
    let rb = ranks(b);
    let n = a.len() as f64;
    let ma = ra.iter().sum::<f64>() / n;
    let mb = rb.iter().sum::<f64>() / n;
    let (mut cov, mut va, mut vb) = (0.0, 0.0, 0.0);
    for (x, y) in ra.iter().zip(&rb) {
        cov += (x - ma) * (y - mb);
        va += (x - ma) * (x - ma);
        vb += (y - mb) * (y - mb);
    }
    if va == 0.0 || vb == 0.0 {
        return None;
    }
    Some((cov / (va * vb).sqrt()).clamp(-1.0, 1.0))
}

pub fn median(values: &[f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    Some(if n % 2 == 1 {
        v[n / 2]
    } else {
        (v[n / 2 - 1] + v[n / 2]) / 2.0
    })
}

pub fn mean(values: &[f64]) -> Option<f64> {
    if values.is_empty() {
        None
    } else {
        Some(values.iter().sum::<f64>() / values.len() as f64)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub seed: u64,
    pub records: Vec<CheckpointRecord>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyRow {
    pub seed: u64,
    pub policy: Policy,
    pub chosen_iter: usize,
    pub target_acc: f64,
    pub regret: f64,
    /// Undefined for constant sequences.
    pub spearman: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicySummary {
    pub policy: Policy,
    pub mean_regret: f64,
    pub median_regret: f64,
    pub median_spearman: Option<f64>,
    pub undefined_spearman: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionStudy {
    pub rows: Vec<StudyRow>,
    pub summaries: Vec<PolicySummary>,
}

impl SelectionStudy {
    pub fn summary(&self, policy: Policy) -> Option<&PolicySummary> {
        self.summaries.iter().find(|s| s.policy == policy)
    }
}

pub fn selection_study(trajectories: &[Trajectory], policies: &[Policy]) -> Result<SelectionStudy> {
    if policies.is_empty() {
        return Err(Error::Config("selection study needs at least one policy".into()));
    }
    let mut rows = Vec::new();
    for t in trajectories {
        let target: Vec<f64> = t
            .records
            .iter()
            .map(|r| {
                r.target_acc.ok_or_else(|| {
                    Error::State(format!(
                        "seed {}: checkpoint at iteration {} lacks target accuracy",
                        t.seed, r.iteration
                    ))
                })
            })
            .collect::<Result<_>>()?;
        for &p in policies {
            let outcome = track_best(&t.records, p)?;
            let signal: Vec<f64> = t.records.iter().filter_map(|r| r.signal(p)).collect();
            rows.push(StudyRow {
                seed: t.seed,
                policy: p,
                chosen_iter: outcome.chosen_iter,
                target_acc: outcome.target_acc.unwrap_or(0.0),
                regret: outcome.regret.unwrap_or(0.0),
                spearman: spearman(&signal, &target),
            });
        }
    }
    let summaries = policies
        .iter()
        .map(|&p| {
            let sel: Vec<&StudyRow> = rows.iter().filter(|r| r.policy == p).collect();
            let regrets: Vec<f64> = sel.iter().map(|r| r.regret).collect();
            let rhos: Vec<f64> = sel.iter().filter_map(|r| r.spearman).collect();
            PolicySummary {
                policy: p,
                mean_regret: mean(&regrets).unwrap_or(0.0),
                median_regret: median(&regrets).unwrap_or(0.0),
                median_spearman: median(&rhos),
                undefined_spearman: sel.len() - rhos.len(),
            }
        })
        .collect();
    Ok(SelectionStudy { rows, summaries })
}

pub fn write_study_csv(study: &SelectionStudy, path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io(path, io),
        other => Error::Data(format!("{other:?}")),
    })?;
    w.write_record(["seed", "policy", "chosen_iter", "target_acc", "regret", "spearman"])?;
    for r in &study.rows {
        w.write_record([
            r.seed.to_string(),
            r.policy.as_str().to_string(),
            r.chosen_iter.to_string(),
            format!("{}", r.target_acc),
            format!("{}", r.regret),
            r.spearman.map(|v| v.to_string()).unwrap_or_default(),
        ])?;
    }
    w.flush().map_err(|e| Error::io(path, e))?;
    Ok(())
}
