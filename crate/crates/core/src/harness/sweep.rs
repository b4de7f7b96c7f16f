use serde::{Deserialize, Serialize};

use super::config::{GradMode, RunConfig};
use super::run::{run_experiment, RunResult};
use crate::objectives::Method;
use crate::selection::Policy;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SweepAxis {
    Alpha,
    GradMode,
    Component,
}

impl std::str::FromStr for SweepAxis {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "alpha" => Ok(SweepAxis::Alpha),
            "grad-mode" => Ok(SweepAxis::GradMode),
            "component" => Ok(SweepAxis::Component),
            other => Err(Error::Config(format!("unknown sweep axis `{other}`"))),
        }
    }
}

impl SweepAxis {
    pub fn as_str(self) -> &'static str {
        match self {
            SweepAxis::Alpha => "alpha",
            SweepAxis::GradMode => "grad-mode",
            SweepAxis::Component => "component",
        }
    }
}

pub const DEFAULT_ALPHAS: [f64; 5] = [0.1, 0.2, 0.5, 1.0, 2.0];
pub const COMPONENTS: [&str; 4] = ["vanilla", "+optd", "+vald", "+both"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub axis: SweepAxis,
    pub value: String,
    pub target: String,
    pub seed: u64,
    pub target_acc: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepResult {
    pub axis: SweepAxis,
    pub rows: Vec<SweepRow>,
    pub results: Vec<RunResult>,
}

/// The configurations a sweep runs, labelled by their axis value.
pub fn sweep_configs(base: &RunConfig, axis: SweepAxis, values: &[String]) -> Result<Vec<(String, RunConfig)>> {
    let mut out = Vec::new();
    match axis {
        SweepAxis::Alpha => {
            let alphas: Vec<f64> = if values.is_empty() {
                DEFAULT_ALPHAS.to_vec()
            } else {
                values
                    .iter()
                    .map(|v| v.parse().map_err(|_| Error::Config(format!("alpha value `{v}` is not a number"))))
                    .collect::<Result<_>>()?
            };
            for a in alphas {
                let label = format!("alpha={a}");
                out.push((
                    label.clone(),
                    RunConfig {
                        alpha: a,
                        label: Some(label),
                        ..base.clone()
                    },
                ));
            }
        }
        SweepAxis::GradMode => {
            let modes: Vec<GradMode> = if values.is_empty() {
                GradMode::ALL.to_vec()
            } else {
                values.iter().map(|v| v.parse()).collect::<Result<_>>()?
            };
            for g in modes {
                let method = if g == GradMode::WholeSeparate {
                    Method::ErmPerSource
                } else {
                    base.method
                };
                out.push((
                    g.as_str().to_string(),
                    RunConfig {
                        grad_mode: g,
                        method,
                        pareto: true,
                        label: Some(g.as_str().to_string()),
                        ..base.clone()
                    },
                ));
            }
        }
        SweepAxis::Component => {
            let picked: Vec<&str> = if values.is_empty() {
                COMPONENTS.to_vec()
            } else {
                values
                    .iter()
                    .map(|v| {
                        COMPONENTS
                            .iter()
                            .copied()
                            .find(|c| c == v)
                            .ok_or_else(|| Error::Config(format!("unknown component `{v}`")))
                    })
                    .collect::<Result<_>>()?
            };
            for c in picked {
                let (pareto, selection) = match c {
                    "vanilla" => (false, Policy::TrainSplit),
                    "+optd" => (true, Policy::TrainSplit),
                    "+vald" => (false, Policy::Vald),
                    _ => (true, Policy::Vald),
                };
                out.push((
                    c.to_string(),
                    RunConfig {
                        pareto,
                        selection,
                        label: Some(c.to_string()),
                        ..base.clone()
                    },
                ));
            }
        }
    }
    if out.is_empty() {
        return Err(Error::Config("sweep axis has no values".into()));
    }
    Ok(out)
}

pub fn ablation_sweep(base: &RunConfig, axis: SweepAxis, values: &[String]) -> Result<SweepResult> {
    let configs = sweep_configs(base, axis, values)?;
    let mut rows = Vec::new();
    let mut results = Vec::new();
    for (value, cfg) in configs {
        let out = run_experiment(&cfg)?;
        for t in &out.result.targets {
            for s in &t.seeds {
                rows.push(SweepRow {
                    axis,
                    value: value.clone(),
                    target: t.target.clone(),
                    seed: s.seed,
                    target_acc: s.selected_target_acc,
                });
            }
        }
        results.push(out.result);
    }
    Ok(SweepResult { axis, rows, results })
}

pub fn sweep_csv(sweep: &SweepResult) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["axis", "value", "target", "seed", "target_acc"])?;
    for r in &sweep.rows {
        w.write_record([
            r.axis.as_str().to_string(),
            r.value.clone(),
            r.target.clone(),
            r.seed.to_string(),
            r.target_acc.to_string(),
        ])?;
    }
    w.into_inner()
        .map_err(|e| Error::Data(format!("csv buffer: {}", e.error())))
}
