use serde::{Deserialize, Serialize};

use super::simplex::{Constraint, LinearProgram, LpOutcome, Sense};
use crate::numcore::dot;
use crate::{Error, Result};

/// Absolute tolerance for membership in the argmax set `J*`.
pub const TIE_TOL: f64 = 1e-10;

/// Slack below which a descent predicate counts as violated.
pub const DESCENT_TOL: f64 = 1e-8;

/// Inputs to one weighting solve: gradient columns over θ_f, the guidance
/// gradient and its loss.
#[derive(Debug, Clone, PartialEq)]
pub struct GradientProblem {
    pub columns: Vec<Vec<f64>>,
    pub g_optd: Vec<f64>,
    pub ell_optd: f64,
    pub epsilon: f64,
}

impl GradientProblem {
    pub fn new(columns: Vec<Vec<f64>>, g_optd: Vec<f64>, ell_optd: f64, epsilon: f64) -> Result<Self> {
        let p = Self {
            columns,
            g_optd,
            ell_optd,
            epsilon,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if self.columns.len() < 2 {
            return Err(Error::Config(format!(
                "the weighting LP needs at least 2 objectives, got {}",
                self.columns.len()
            )));
        }
        let dim = self.g_optd.len();
        if self.columns.iter().any(|c| c.len() != dim) {
            return Err(Error::Dimension("gradient columns and guidance differ in length".into()));
        }
        if !(self.epsilon > 0.0) {
            return Err(Error::Config(format!("epsilon must be > 0, got {}", self.epsilon)));
        }
        if !self.ell_optd.is_finite()
            || self
                .columns
                .iter()
                .flatten()
                .chain(&self.g_optd)
                .any(|v| !v.is_finite())
        {
            return Err(Error::NonFinite("gradient problem".into()));
        }
        Ok(())
    }

    pub fn m(&self) -> usize {
        self.columns.len()
    }

    /// Whether the guidance loss is small enough for pure descent.
    pub fn mode(&self) -> Mode {
        if self.ell_optd <= self.epsilon {
            Mode::PureDescent
        } else {
            Mode::GuidanceDescent
        }
    }

    /// `Gω`.
    pub fn combine(&self, omega: &[f64]) -> Vec<f64> {
        let mut d = vec![0.0; self.g_optd.len()];
        for (col, &w) in self.columns.iter().zip(omega) {
            if w != 0.0 {
                for (x, g) in d.iter_mut().zip(col) {
                    *x += w * g;
                }
            }
        }
        d
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    PureDescent,
    GuidanceDescent,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LpStatus {
    Optimal,
    /// The solver failed numerically; `ω` is uniform.
    FallbackMean,
}

/// Which constraint family produced the solution.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ConstraintSet {
    /// Constraints over `J*` and `J̄ − J*` driven by the guidance dot products.
    Guidance,
    /// `(Gω)ᵀg_j ≥ 0` for every objective.
    Descent,
}

/// Sign classes of `g_optdᵀg_j`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IndexSets {
    pub positive: Vec<usize>,
    pub negative: Vec<usize>,
    pub argmax: Vec<usize>,
    pub dots: Vec<f64>,
}

pub fn build_index_sets(problem: &GradientProblem) -> IndexSets {
    let dots: Vec<f64> = problem.columns.iter().map(|c| dot(&problem.g_optd, c)).collect();
    let max = dots.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    IndexSets {
        positive: (0..dots.len()).filter(|&j| dots[j] > 0.0).collect(),
        negative: (0..dots.len()).filter(|&j| dots[j] < 0.0).collect(),
        argmax: (0..dots.len()).filter(|&j| dots[j] >= max - TIE_TOL).collect(),
        dots,
    }
}

/// One `(Gω)ᵀg_j ≥ rhs` row of the solved LP.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConstraintSlack {
    pub objective: usize,
    pub rhs: f64,
    /// `(Gω*)ᵀg_j − rhs`.
    pub slack: f64,
}

/// Solution of the weighting LP.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimplexWeights {
    pub omega: Vec<f64>,
    pub direction: Vec<f64>,
    /// `d*ᵀg_optd`.
    pub gamma_star: f64,
    /// Value of the LP objective `(Gω*)ᵀa`.
    pub objective: f64,
    pub mode: Mode,
    pub lp_status: LpStatus,
    pub constraint_set: ConstraintSet,
    pub slacks: Vec<ConstraintSlack>,
}

/// `(objective index, rhs)` rows for the guidance constraint family.
pub(crate) fn guidance_rows(sets: &IndexSets) -> Vec<(usize, f64)> {
    let any_positive = !sets.positive.is_empty();
    let mut rows = Vec::new();
    for j in 0..sets.dots.len() {
        if sets.argmax.contains(&j) {
            rows.push((j, 0.0));
        } else if sets.negative.contains(&j) {
            rows.push((j, if any_positive { sets.dots[j] } else { 0.0 }));
        }
    }
    rows
}

fn descent_rows(m: usize) -> Vec<(usize, f64)> {
    (0..m).map(|j| (j, 0.0)).collect()
}

/// LP objective coefficients `Gᵀa` in ω-space.
fn objective_coeffs(problem: &GradientProblem, sets: &IndexSets, gram: &[Vec<f64>]) -> Vec<f64> {
    match problem.mode() {
        Mode::GuidanceDescent => sets.dots.clone(),
        Mode::PureDescent => {
            let m = problem.m() as f64;
            gram.iter().map(|row| row.iter().sum::<f64>() / m).collect()
        }
    }
}

struct Solved {
    omega: Vec<f64>,
}

/// Solves `max cᵀω` over the simplex with `(Kω)_j ≥ rhs_j` rows.
fn solve_rows(gram: &[Vec<f64>], c: &[f64], rows: &[(usize, f64)]) -> Result<Option<Solved>> {
    let m = c.len();
    let kscale = gram.iter().flatten().fold(0.0_f64, |a, v| a.max(v.abs()));
    if kscale == 0.0 {
        // all gradients vanish: every ω gives d = 0
        return Ok(Some(Solved {
            omega: vec![1.0 / m as f64; m],
        }));
    }
    let cscale = c.iter().fold(0.0_f64, |a, v| a.max(v.abs()));
    let objective = if cscale > 0.0 {
        c.iter().map(|v| v / cscale).collect()
    } else {
        vec![0.0; m]
    };
    let mut constraints = vec![Constraint {
        coeffs: vec![1.0; m],
        sense: Sense::Eq,
        rhs: 1.0,
    }];
    for &(j, rhs) in rows {
        // K is symmetric: (Kω)_j = Σ_i K[j][i] ω_i
        constraints.push(Constraint {
            coeffs: gram[j].iter().map(|v| v / kscale).collect(),
            sense: Sense::Ge,
            rhs: rhs / kscale,
        });
    }
    let sol = LinearProgram {
        objective,
        constraints,
    }
    .solve()?;
    Ok(match sol.outcome {
        LpOutcome::Optimal => {
            let total: f64 = sol.x.iter().sum();
            Some(Solved {
                omega: sol.x.iter().map(|w| w / total).collect(),
            })
        }
        LpOutcome::Infeasible | LpOutcome::Unbounded => None,
    })
}

fn finish(
    problem: &GradientProblem,
    omega: Vec<f64>,
    c: &[f64],
    rows: &[(usize, f64)],
    lp_status: LpStatus,
    constraint_set: ConstraintSet,
) -> SimplexWeights {
    let direction = problem.combine(&omega);
    let gamma_star = dot(&direction, &problem.g_optd);
    let objective = omega.iter().zip(c).map(|(w, v)| w * v).sum();
    let slacks = rows
        .iter()
        .map(|&(j, rhs)| ConstraintSlack {
            objective: j,
            rhs,
            slack: dot(&direction, &problem.columns[j]) - rhs,
        })
        .collect();
    SimplexWeights {
        omega,
        direction,
        gamma_star,
        objective,
        mode: problem.mode(),
        lp_status,
        constraint_set,
        slacks,
    }
}

/// Chooses simplex weights `ω*` for the fused direction `d* = Gω*`.
///
/// * Pure-descent mode (`ℓ_optd ≤ ε`): maximise `(Gω)ᵀ(G1/m)` subject to
///   `(Gω)ᵀg_j ≥ 0` for all `j`.
/// * Guidance mode: maximise `(Gω)ᵀg_optd` subject to `(Gω)ᵀg_j ≥ 0` on `J*`
///   and `(Gω)ᵀg_j ≥ I(J ≠ ∅)·g_optdᵀg_j` on `J̄ − J*`. If that program is
///   infeasible or its optimum has `γ* ≤ 0`, it is re-solved with the
///   all-objective descent constraints.
///
/// The descent family is always feasible (the min-norm point of the convex
/// hull of the columns satisfies it), so the uniform fallback only fires on
/// numerical failure.
pub fn solve_lp(problem: &GradientProblem, sets: &IndexSets) -> Result<SimplexWeights> {
    problem.validate()?;
    let m = problem.m();
    let gram: Vec<Vec<f64>> = (0..m)
        .map(|i| (0..m).map(|j| dot(&problem.columns[i], &problem.columns[j])).collect())
        .collect();
    let c = objective_coeffs(problem, sets, &gram);

    if problem.mode() == Mode::GuidanceDescent {
        let rows = guidance_rows(sets);
        if let Some(s) = solve_rows(&gram, &c, &rows)? {
            let w = finish(problem, s.omega, &c, &rows, LpStatus::Optimal, ConstraintSet::Guidance);
            if w.gamma_star > 0.0 {
                return Ok(w);
            }
        }
    }
    let rows = descent_rows(m);
    match solve_rows(&gram, &c, &rows)? {
        Some(s) => Ok(finish(problem, s.omega, &c, &rows, LpStatus::Optimal, ConstraintSet::Descent)),
        None => Ok(finish(
            problem,
            vec![1.0 / m as f64; m],
            &c,
            &rows,
            LpStatus::FallbackMean,
            ConstraintSet::Descent,
        )),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Theorem1Branch {
    /// `ℓ_optd ≤ ε`: `d*` must not increase any objective.
    PureDescent,
    /// `γ* > 0`: `d*` must have a positive component along `g_optd`.
    GuidancePositive,
    /// `γ* ≤ 0`: `d*` must not increase any objective.
    GuidanceNonPositive,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Predicate {
    pub label: String,
    pub value: f64,
    pub holds: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Theorem1Report {
    pub branch: Theorem1Branch,
    pub predicates: Vec<Predicate>,
    pub pass: bool,
}

impl Theorem1Report {
    /// Smallest predicate value, useful as a margin in logs.
    pub fn min_value(&self) -> f64 {
        self.predicates.iter().map(|p| p.value).fold(f64::INFINITY, f64::min)
    }

    pub fn into_result(self) -> Result<Self> {
        if self.pass {
            Ok(self)
        } else {
            let failed: Vec<String> = self
                .predicates
                .iter()
                .filter(|p| !p.holds)
                .map(|p| format!("{} = {:e}", p.label, p.value))
                .collect();
            Err(Error::State(format!(
                "descent guarantee violated ({:?}): {}",
                self.branch,
                failed.join(", ")
            )))
        }
    }
}

/// Evaluates the descent/guidance dichotomy on a solved problem.
pub fn theorem1_check(weights: &SimplexWeights, problem: &GradientProblem) -> Theorem1Report {
    let d = &weights.direction;
    let descent = || -> Vec<Predicate> {
        problem
            .columns
            .iter()
            .enumerate()
            .map(|(j, g)| {
                let value = dot(d, g);
                Predicate {
                    label: format!("d·g_{j}"),
                    value,
                    holds: value >= -DESCENT_TOL,
                }
            })
            .collect()
    };
    let gamma = dot(d, &problem.g_optd);
    let (branch, predicates) = if problem.ell_optd <= problem.epsilon {
        (Theorem1Branch::PureDescent, descent())
    } else if gamma > 0.0 {
        (
            Theorem1Branch::GuidancePositive,
            vec![Predicate {
                label: "d·g_optd".into(),
                value: gamma,
                holds: gamma > 0.0,
            }],
        )
    } else {
        (Theorem1Branch::GuidanceNonPositive, descent())
    };
    let pass = predicates.iter().all(|p| p.holds);
    Theorem1Report {
        branch,
        predicates,
        pass,
    }
}
