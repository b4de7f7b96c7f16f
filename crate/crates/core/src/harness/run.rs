use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::config::{DatasetSpec, GradMode, RunConfig};
use crate::datadomains::{generate_synthetic, load_csv, split, DomainDataset};
use crate::mixgen::{gen_optd, gen_vald, MixSample, MixupConfig};
use crate::numcore::Tensor;
use crate::objectives::{compute_objectives, scalarized_step, BundleSpec, Method, ModelBundle, SourceBatch};
use crate::paretolp::{
    build_index_sets, compute_guidance, fuse_and_apply, solve_lp, theorem1_check, ConstraintSet,
    ConstraintSlack, GradientProblem, GuidanceMode, LpStatus, Mode,
};
use crate::selection::{
    evaluate_dataset, evaluate_mix, spearman, track_best, CheckpointRecord, Policy, SelectionOutcome,
};
use crate::{Error, Result};

/// Sources and one held-out target.
#[derive(Debug, Clone)]
pub struct Task {
    pub sources: DomainDataset,
    pub target: DomainDataset,
    pub target_label: String,
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Independent seed for one random stream of a run.
pub fn sub_seed(seed: u64, stream: u64) -> u64 {
    splitmix(seed ^ splitmix(stream))
}

const STREAM_SPLIT: u64 = 1;
const STREAM_VALD: u64 = 2;
const STREAM_OPTD: u64 = 3;
const STREAM_INIT: u64 = 4;
const STREAM_BATCH: u64 = 5;
const STREAM_GUIDE: u64 = 6;

fn relabel(data: &DomainDataset, rows: &[usize], domain_map: &dyn Fn(usize) -> usize, domains: usize) -> Result<DomainDataset> {
    let sub = data.subset(rows);
    let ids = sub.domain_ids().iter().map(|&d| domain_map(d)).collect();
    DomainDataset::new(
        sub.features().clone(),
        sub.labels().to_vec(),
        ids,
        data.class_count(),
        domains,
    )
}

/// Builds every (sources, target) task of a run. Synthetic data is drawn with
/// the run seed folded into the generator seed.
pub fn resolve_tasks(cfg: &RunConfig, seed: u64) -> Result<Vec<Task>> {
    match &cfg.dataset {
        DatasetSpec::Synthetic(spec) => {
            let mut spec = spec.clone();
            spec.seed = spec.seed.wrapping_add(seed);
            let (sources, target) = generate_synthetic(&spec)?;
            Ok(vec![Task {
                sources,
                target,
                target_label: format!("{}deg", spec.target_angle),
            }])
        }
        DatasetSpec::Csv(c) => {
            let loaded = load_csv(&c.path, &c.schema)?;
            let data = &loaded.dataset;
            c.targets
                .iter()
                .map(|name| {
                    let t = loaded
                        .domain_names
                        .iter()
                        .position(|n| n == name)
                        .ok_or_else(|| Error::Config(format!("target domain `{name}` not found in {}", c.path.display())))?;
                    let m = data.domain_count();
                    if m < 2 {
                        return Err(Error::Data("need at least one source besides the target".into()));
                    }
                    let source_rows: Vec<usize> = (0..data.len()).filter(|&i| data.domain_ids()[i] != t).collect();
                    let target_rows = data.domain_indices(t);
                    let shift = move |d: usize| if d > t { d - 1 } else { d };
                    Ok(Task {
                        sources: relabel(data, &source_rows, &shift, m - 1)?,
                        target: relabel(data, &target_rows, &|_| 0, 1)?,
                        target_label: name.clone(),
                    })
                })
                .collect()
        }
    }
}

/// Per-domain shuffled streams yielding equal-size domain batches.
struct DomainStreams {
    order: Vec<Vec<usize>>,
    pos: Vec<usize>,
}

impl DomainStreams {
    fn new(data: &DomainDataset, rng: &mut ChaCha8Rng) -> Self {
        let order: Vec<Vec<usize>> = (0..data.domain_count())
            .map(|d| {
                let mut v = data.domain_indices(d);
                v.shuffle(rng);
                v
            })
            .collect();
        let pos = vec![0; order.len()];
        Self { order, pos }
    }

    fn next_batch(&mut self, data: &DomainDataset, per_domain: usize, rng: &mut ChaCha8Rng) -> Result<SourceBatch> {
        let mut rows = Vec::with_capacity(per_domain * self.order.len());
        for d in 0..self.order.len() {
            let len = self.order[d].len();
            if len == 0 {
                return Err(Error::Data(format!("source domain {d} has no training samples")));
            }
            for _ in 0..per_domain {
                if self.pos[d] == len {
                    self.order[d].shuffle(rng);
                    self.pos[d] = 0;
                }
                rows.push(self.order[d][self.pos[d]]);
                self.pos[d] += 1;
            }
        }
        let x = data.features().select_rows(&rows);
        let c = data.class_count();
        let mut y = vec![0.0; rows.len() * c];
        for (k, &i) in rows.iter().enumerate() {
            y[k * c + data.labels()[i]] = 1.0;
        }
        Ok(SourceBatch {
            x,
            y: Tensor::matrix(rows.len(), c, y)?,
            domains: rows.iter().map(|&i| data.domain_ids()[i]).collect(),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MixSet {
    Vald,
    Optd,
}

/// One line of the diagnostic log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "kebab-case")]
pub enum DiagEvent {
    Generated {
        seed: u64,
        set: MixSet,
        count: usize,
        /// Training iterations completed when the set was generated.
        iteration: usize,
    },
    Refresh {
        seed: u64,
        iteration: usize,
        omega: Vec<f64>,
        gamma_star: f64,
        ell_optd: f64,
        mode: Mode,
        lp_status: LpStatus,
        constraint_set: ConstraintSet,
        slacks: Vec<ConstraintSlack>,
        theorem1_pass: bool,
        theorem1_margin: f64,
    },
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ParetoSummary {
    pub refreshes: usize,
    pub guidance_steps: usize,
    pub pure_descent_steps: usize,
    /// Guidance-mode refreshes that fell back to the all-descent constraints.
    pub descent_resolves: usize,
    pub fallbacks: usize,
    pub theorem1_failures: usize,
    pub mean_gamma_star: f64,
    pub final_omega: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyResult {
    pub policy: Policy,
    pub chosen_iter: usize,
    pub target_acc: f64,
    pub regret: f64,
}

impl From<SelectionOutcome> for PolicyResult {
    fn from(o: SelectionOutcome) -> Self {
        Self {
            policy: o.policy,
            chosen_iter: o.chosen_iter,
            target_acc: o.target_acc.unwrap_or(0.0),
            regret: o.regret.unwrap_or(0.0),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedResult {
    pub seed: u64,
    pub policies: Vec<PolicyResult>,
    /// Target accuracy of the checkpoint kept by the configured policy.
    pub selected_target_acc: f64,
    pub spearman_trainsplit: Option<f64>,
    pub spearman_vald: Option<f64>,
    pub checkpoints: Vec<CheckpointRecord>,
    pub loss_labels: Vec<String>,
    /// Mean objective values per epoch.
    pub loss_curves: Vec<Vec<f64>>,
    pub pareto: Option<ParetoSummary>,
    /// Reason the run stopped early, if it did.
    pub aborted: Option<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub diag: Vec<DiagEvent>,
}

impl SeedResult {
    pub fn policy(&self, p: Policy) -> Option<&PolicyResult> {
        self.policies.iter().find(|r| r.policy == p)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TargetResult {
    pub target: String,
    pub seeds: Vec<SeedResult>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunResult {
    pub variant: String,
    pub method: Method,
    pub pareto: bool,
    pub selection: Policy,
    pub grad_mode: GradMode,
    pub alpha: f64,
    pub targets: Vec<TargetResult>,
}

impl RunResult {
    /// Selected target accuracies of every seed on target `t`.
    pub fn selected_accs(&self, t: usize) -> Vec<f64> {
        self.targets[t].seeds.iter().map(|s| s.selected_target_acc).collect()
    }

    pub fn policy_accs(&self, t: usize, p: Policy) -> Vec<f64> {
        self.targets[t]
            .seeds
            .iter()
            .filter_map(|s| s.policy(p).map(|r| r.target_acc))
            .collect()
    }
}

/// A result plus timing, which is kept out of emitted files.
#[derive(Debug, Clone)]
pub struct RunOutput {
    pub result: RunResult,
    pub wall_clock_secs: f64,
}

pub fn run_experiment(cfg: &RunConfig) -> Result<RunOutput> {
    cfg.validate()?;
    let start = std::time::Instant::now();
    let mut per_target: Vec<TargetResult> = Vec::new();
    for &seed in &cfg.seeds {
        for (t, task) in resolve_tasks(cfg, seed)?.into_iter().enumerate() {
            let res = run_seed(cfg, &task, seed)?;
            if per_target.len() <= t {
                per_target.push(TargetResult {
                    target: task.target_label.clone(),
                    seeds: Vec::new(),
                });
            }
            per_target[t].seeds.push(res);
        }
    }
    Ok(RunOutput {
        result: RunResult {
            variant: cfg.variant(),
            method: cfg.method,
            pareto: cfg.pareto,
            selection: cfg.selection,
            grad_mode: cfg.grad_mode,
            alpha: cfg.alpha,
            targets: per_target,
        },
        wall_clock_secs: start.elapsed().as_secs_f64(),
    })
}

fn bundle_is_finite(b: &ModelBundle) -> bool {
    let ok = |s: &crate::numcore::ParamStore| s.flat_params().iter().all(|v| v.is_finite());
    ok(b.feat.params()) && ok(b.clf.params()) && b.disc.as_ref().is_none_or(|d| ok(d.params()))
}

struct Checkpointing<'a> {
    val: &'a DomainDataset,
    vald: &'a [MixSample],
    target: &'a DomainDataset,
}

impl Checkpointing<'_> {
    fn record(&self, bundle: &ModelBundle, iteration: usize) -> Result<CheckpointRecord> {
        Ok(CheckpointRecord {
            iteration,
            snapshot_id: iteration as u64,
            val_acc_trainsplit: evaluate_dataset(bundle, self.val)?,
            val_acc_vald: evaluate_mix(bundle, self.vald)?,
            target_acc: Some(evaluate_dataset(bundle, self.target)?),
        })
    }
}

/// One training trial in Algorithm 1 order: VALD, then OPTD, then the loop.
pub fn run_seed(cfg: &RunConfig, task: &Task, seed: u64) -> Result<SeedResult> {
    Ok(train_seed(cfg, task, seed)?.result)
}

/// Everything a trial produced, including the selected model.
#[derive(Debug, Clone)]
pub struct SeedArtifacts {
    pub result: SeedResult,
    pub selected: ModelBundle,
    pub train: DomainDataset,
    pub val: DomainDataset,
    pub vald: Vec<MixSample>,
}

pub fn train_seed(cfg: &RunConfig, task: &Task, seed: u64) -> Result<SeedArtifacts> {
    let sources = &task.sources;
    let m_sources = sources.domain_count();
    cfg.check_objectives(m_sources).map_err(|e| Error::ConfigViolations(vec![e]))?;
    let parts = split(sources, cfg.train_ratio, sub_seed(seed, STREAM_SPLIT))?;
    let (train, val) = (&parts.train.clone(), &parts.val.clone());
    let mut diag = Vec::new();

    let vald = gen_vald(val, &MixupConfig::new(cfg.vald_alpha(), sub_seed(seed, STREAM_VALD), val.len())?)?;
    diag.push(DiagEvent::Generated {
        seed,
        set: MixSet::Vald,
        count: vald.len(),
        iteration: 0,
    });
    let optd = if cfg.pareto {
        let count = cfg.optd_count.unwrap_or((train.len() / m_sources).max(1));
        let optd = gen_optd(train, &MixupConfig::new(cfg.alpha, sub_seed(seed, STREAM_OPTD), count)?)?;
        diag.push(DiagEvent::Generated {
            seed,
            set: MixSet::Optd,
            count: optd.len(),
            iteration: 0,
        });
        optd
    } else {
        Vec::new()
    };

    let spec = BundleSpec {
        input_width: sources.feature_width(),
        hidden: cfg.hidden.clone(),
        feature_width: cfg.feature_width,
        classes: sources.class_count(),
        domains: m_sources,
        disc_hidden: cfg.disc_hidden,
        seed: sub_seed(seed, STREAM_INIT),
    };
    let mut bundle = ModelBundle::build(cfg.method, &spec)?;
    let m = cfg.method.objective_count(m_sources);
    let lambdas = vec![cfg.fixed_lambda; m.saturating_sub(1)];
    let guidance_mode = match cfg.grad_mode {
        GradMode::BatchWhole => GuidanceMode::Batch(cfg.batch_per_domain * m_sources),
        GradMode::WholeWhole | GradMode::WholeSeparate => GuidanceMode::Whole,
    };

    let mut batch_rng = ChaCha8Rng::seed_from_u64(sub_seed(seed, STREAM_BATCH));
    let mut guide_rng = ChaCha8Rng::seed_from_u64(sub_seed(seed, STREAM_GUIDE));
    let mut streams = DomainStreams::new(train, &mut batch_rng);
    let min_domain = (0..m_sources).map(|d| train.domain_indices(d).len()).min().unwrap_or(0);
    let iters_per_epoch = (min_domain / cfg.batch_per_domain).max(1);

    let ckpt = Checkpointing {
        val,
        vald: &vald,
        target: &task.target,
    };
    let mut records = Vec::new();
    let mut best: Option<(f64, ModelBundle)> = None;
    let mut last_good = bundle.clone();
    let mut loss_labels = Vec::new();
    let mut loss_curves = Vec::new();
    let mut summary = ParetoSummary::default();
    let mut gamma_sum = 0.0;
    let mut omega: Option<Vec<f64>> = None;
    let mut aborted = None;
    let mut it = 0usize;

    'epochs: for epoch in 0..cfg.epochs {
        let mut sums = vec![0.0; m];
        for _ in 0..iters_per_epoch {
            let step = (|| -> Result<Vec<f64>> {
                let batch = streams.next_batch(train, cfg.batch_per_domain, &mut batch_rng)?;
                let grads = compute_objectives(&mut bundle, &batch)?;
                if let Some(v) = grads.losses.values.iter().find(|v| !v.is_finite()) {
                    return Err(Error::NonFinite(format!("objective value {v}")));
                }
                if loss_labels.is_empty() {
                    loss_labels = grads.losses.labels.clone();
                }
                if cfg.pareto {
                    if it.is_multiple_of(cfg.refresh_every) {
                        let g = compute_guidance(&mut bundle, &optd, guidance_mode, &mut guide_rng)?;
                        let problem = GradientProblem::new(grads.columns.clone(), g.gradient, g.loss, cfg.epsilon)?;
                        let w = solve_lp(&problem, &build_index_sets(&problem))?;
                        let report = theorem1_check(&w, &problem);
                        summary.refreshes += 1;
                        match w.mode {
                            Mode::GuidanceDescent => summary.guidance_steps += 1,
                            Mode::PureDescent => summary.pure_descent_steps += 1,
                        }
                        if w.mode == Mode::GuidanceDescent && w.constraint_set == ConstraintSet::Descent {
                            summary.descent_resolves += 1;
                        }
                        if w.lp_status == LpStatus::FallbackMean {
                            summary.fallbacks += 1;
                        }
                        if !report.pass {
                            summary.theorem1_failures += 1;
                        }
                        gamma_sum += w.gamma_star;
                        if cfg.diag {
                            diag.push(DiagEvent::Refresh {
                                seed,
                                iteration: it,
                                omega: w.omega.clone(),
                                gamma_star: w.gamma_star,
                                ell_optd: problem.ell_optd,
                                mode: w.mode,
                                lp_status: w.lp_status,
                                constraint_set: w.constraint_set,
                                slacks: w.slacks.clone(),
                                theorem1_pass: report.pass,
                                theorem1_margin: report.min_value(),
                            });
                        }
                        omega = Some(w.omega);
                    }
                    let w = omega.as_ref().expect("weights set on the first iteration");
                    fuse_and_apply(&mut bundle, w, &grads, cfg.lr)?;
                } else {
                    scalarized_step(&mut bundle, &grads, &lambdas, cfg.lr)?;
                }
                if !bundle_is_finite(&bundle) {
                    return Err(Error::NonFinite("parameters diverged".into()));
                }
                Ok(grads.losses.values)
            })();
            match step {
                Ok(values) => {
                    for (s, v) in sums.iter_mut().zip(values) {
                        *s += v;
                    }
                }
                Err(Error::NonFinite(msg)) => {
                    aborted = Some(format!("iteration {it}: {msg}"));
                    bundle = last_good.clone();
                    break 'epochs;
                }
                Err(e) => return Err(e),
            }
            it += 1;
        }
        loss_curves.push(sums.iter().map(|s| s / iters_per_epoch as f64).collect());
        if (epoch + 1) % cfg.eval_every == 0 || epoch + 1 == cfg.epochs {
            let rec = ckpt.record(&bundle, it)?;
            let score = rec.signal(cfg.selection).unwrap_or(0.0);
            if best.as_ref().is_none_or(|(s, _)| score > *s) {
                best = Some((score, bundle.clone()));
            }
            records.push(rec);
            last_good = bundle.clone();
        }
    }
    if records.is_empty() {
        let rec = ckpt.record(&bundle, it)?;
        best = Some((rec.signal(cfg.selection).unwrap_or(0.0), bundle.clone()));
        records.push(rec);
    }

    let policies: Vec<PolicyResult> = Policy::ALL
        .iter()
        .map(|&p| track_best(&records, p).map(PolicyResult::from))
        .collect::<Result<_>>()?;
    let (_, chosen) = best.expect("at least one checkpoint");
    let selected_target_acc = evaluate_dataset(&chosen, &task.target)?;
    let target: Vec<f64> = records.iter().map(|r| r.target_acc.unwrap_or(0.0)).collect();
    let ts: Vec<f64> = records.iter().map(|r| r.val_acc_trainsplit).collect();
    let vd: Vec<f64> = records.iter().map(|r| r.val_acc_vald).collect();
    let pareto = cfg.pareto.then(|| {
        summary.mean_gamma_star = if summary.refreshes > 0 {
            gamma_sum / summary.refreshes as f64
        } else {
            0.0
        };
        summary.final_omega = omega.clone().unwrap_or_default();
        summary
    });
    let result = SeedResult {
        seed,
        policies,
        selected_target_acc,
        spearman_trainsplit: spearman(&ts, &target),
        spearman_vald: spearman(&vd, &target),
        checkpoints: records,
        loss_labels,
        loss_curves,
        pareto,
        aborted,
        diag: if cfg.diag { diag } else { Vec::new() },
    };
    Ok(SeedArtifacts {
        result,
        selected: chosen,
        train: parts.train,
        val: parts.val,
        vald,
    })
}
