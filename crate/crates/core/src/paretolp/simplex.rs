//! Dense two-phase simplex for small linear programs.
//!
//! Solves `max cᵀx` subject to row constraints (`≤`, `≥`, `=`) and `x ≥ 0`.
//! Bland's rule is used for both entering and leaving variables, so the
//! method terminates on degenerate problems.

use crate::{Error, Result};

const PIVOT_TOL: f64 = 1e-11;
const FEAS_TOL: f64 = 1e-9;
const MAX_PIVOTS: usize = 10_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Sense {
    Le,
    Ge,
    Eq,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Constraint {
    pub coeffs: Vec<f64>,
    pub sense: Sense,
    pub rhs: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LinearProgram {
    pub objective: Vec<f64>,
    pub constraints: Vec<Constraint>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LpOutcome {
    Optimal,
    Infeasible,
    Unbounded,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LpSolution {
    pub outcome: LpOutcome,
    pub x: Vec<f64>,
    pub objective: f64,
}

struct Tableau {
    /// `rows x (cols + 1)`; the last column is the right-hand side.
    a: Vec<Vec<f64>>,
    basis: Vec<usize>,
    cols: usize,
}

impl Tableau {
    fn pivot(&mut self, row: usize, col: usize) {
        let p = self.a[row][col];
        for v in &mut self.a[row] {
            *v /= p;
        }
        let pivot_row = self.a[row].clone();
        for (r, line) in self.a.iter_mut().enumerate() {
            if r == row {
                continue;
            }
            let f = line[col];
            if f != 0.0 {
                for (v, pv) in line.iter_mut().zip(&pivot_row) {
                    *v -= f * pv;
                }
                line[col] = 0.0;
            }
        }
        self.basis[row] = col;
    }

    /// Reduced costs `c_j − c_Bᵀ B⁻¹ A_j` for maximisation of `cost`.
    fn reduced_costs(&self, cost: &[f64]) -> Vec<f64> {
        let mut rc = cost.to_vec();
        for (r, &b) in self.basis.iter().enumerate() {
            let cb = cost[b];
            if cb != 0.0 {
                for (j, v) in rc.iter_mut().enumerate() {
                    *v -= cb * self.a[r][j];
                }
            }
        }
        rc
    }

    /// Maximises `cost` over the current tableau, restricted to columns in
    /// `allowed`. Returns `false` when unbounded.
    fn optimise(&mut self, cost: &[f64], allowed: &[bool]) -> Result<bool> {
        for _ in 0..MAX_PIVOTS {
            let rc = self.reduced_costs(cost);
            let Some(enter) = (0..self.cols).find(|&j| allowed[j] && rc[j] > PIVOT_TOL) else {
                return Ok(true);
            };
            let rhs = self.cols;
            let mut leave: Option<(usize, f64)> = None;
            for (r, line) in self.a.iter().enumerate() {
                let coef = line[enter];
                if coef > PIVOT_TOL {
                    let ratio = line[rhs] / coef;
                    leave = match leave {
                        None => Some((r, ratio)),
                        Some((lr, lratio)) => {
                            if ratio < lratio - 1e-14
                                || ((ratio - lratio).abs() <= 1e-14 && self.basis[r] < self.basis[lr])
                            {
                                Some((r, ratio))
                            } else {
                                Some((lr, lratio))
                            }
                        }
                    };
                }
            }
            match leave {
                None => return Ok(false),
                Some((r, _)) => self.pivot(r, enter),
            }
        }
        Err(Error::Lp("simplex pivot limit reached".into()))
    }

    fn value_of(&self, var: usize) -> f64 {
        self.basis
            .iter()
            .position(|&b| b == var)
            .map_or(0.0, |r| self.a[r][self.cols])
    }
}

impl LinearProgram {
    pub fn solve(&self) -> Result<LpSolution> {
        let n = self.objective.len();
        for (i, c) in self.constraints.iter().enumerate() {
            if c.coeffs.len() != n {
                return Err(Error::Lp(format!(
                    "constraint {i} has {} coefficients for {n} variables",
                    c.coeffs.len()
                )));
            }
        }
        if self
            .objective
            .iter()
            .chain(self.constraints.iter().flat_map(|c| c.coeffs.iter().chain([&c.rhs])))
            .any(|v| !v.is_finite())
        {
            return Err(Error::NonFinite("linear program coefficients".into()));
        }

        // normalise to non-negative right-hand sides
        let rows: Vec<(Vec<f64>, Sense, f64)> = self
            .constraints
            .iter()
            .map(|c| {
                if c.rhs < 0.0 {
                    let flipped = match c.sense {
                        Sense::Le => Sense::Ge,
                        Sense::Ge => Sense::Le,
                        Sense::Eq => Sense::Eq,
                    };
                    (c.coeffs.iter().map(|v| -v).collect(), flipped, -c.rhs)
                } else {
                    (c.coeffs.clone(), c.sense, c.rhs)
                }
            })
            .collect();

        let slack_count = rows.iter().filter(|r| r.1 != Sense::Eq).count();
        let art_count = rows.iter().filter(|r| r.1 != Sense::Le).count();
        let cols = n + slack_count + art_count;
        let mut a = Vec::with_capacity(rows.len());
        let mut basis = Vec::with_capacity(rows.len());
        let (mut s, mut t) = (n, n + slack_count);
        let mut is_art = vec![false; cols];
        for (coeffs, sense, rhs) in &rows {
            let mut line = vec![0.0; cols + 1];
            line[..n].copy_from_slice(coeffs);
            line[cols] = *rhs;
            match sense {
                Sense::Le => {
                    line[s] = 1.0;
                    basis.push(s);
                    s += 1;
                }
                Sense::Ge => {
                    line[s] = -1.0;
                    s += 1;
                    line[t] = 1.0;
                    is_art[t] = true;
                    basis.push(t);
                    t += 1;
                }
                Sense::Eq => {
                    line[t] = 1.0;
                    is_art[t] = true;
                    basis.push(t);
                    t += 1;
                }
            }
            a.push(line);
        }
        let mut tab = Tableau { a, basis, cols };

        if art_count > 0 {
            let phase1: Vec<f64> = (0..cols).map(|j| if is_art[j] { -1.0 } else { 0.0 }).collect();
            tab.optimise(&phase1, &vec![true; cols])?;
            let infeasibility: f64 = (0..cols).filter(|&j| is_art[j]).map(|j| tab.value_of(j)).sum();
            if infeasibility > FEAS_TOL {
                return Ok(LpSolution {
                    outcome: LpOutcome::Infeasible,
                    x: vec![0.0; n],
                    objective: f64::NAN,
                });
            }
            // drive zero-valued artificials out of the basis
            let mut r = 0;
            while r < tab.basis.len() {
                if is_art[tab.basis[r]] {
                    if let Some(col) = (0..cols).find(|&j| !is_art[j] && tab.a[r][j].abs() > PIVOT_TOL) {
                        tab.pivot(r, col);
                        r += 1;
                    } else {
                        // redundant row
                        tab.a.remove(r);
                        tab.basis.remove(r);
                    }
                } else {
                    r += 1;
                }
            }
        }

        let mut cost = vec![0.0; cols];
        cost[..n].copy_from_slice(&self.objective);
        let allowed: Vec<bool> = (0..cols).map(|j| !is_art[j]).collect();
        if !tab.optimise(&cost, &allowed)? {
            return Ok(LpSolution {
                outcome: LpOutcome::Unbounded,
                x: vec![0.0; n],
                objective: f64::INFINITY,
            });
        }
        let x: Vec<f64> = (0..n).map(|j| tab.value_of(j).max(0.0)).collect();
        let objective = x.iter().zip(&self.objective).map(|(a, b)| a * b).sum();
        Ok(LpSolution {
            outcome: LpOutcome::Optimal,
            x,
            objective,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(coeffs: &[f64], sense: Sense, rhs: f64) -> Constraint {
        Constraint {
            coeffs: coeffs.to_vec(),
            sense,
            rhs,
        }
    }

    #[test]
    fn textbook_maximisation() {
        // max 3x + 5y, x ≤ 4, 2y ≤ 12, 3x + 2y ≤ 18 ⇒ (2, 6), 36
        let lp = LinearProgram {
            objective: vec![3.0, 5.0],
            constraints: vec![
                row(&[1.0, 0.0], Sense::Le, 4.0),
                row(&[0.0, 2.0], Sense::Le, 12.0),
                row(&[3.0, 2.0], Sense::Le, 18.0),
            ],
        };
        let sol = lp.solve().unwrap();
        assert_eq!(sol.outcome, LpOutcome::Optimal);
        assert!((sol.objective - 36.0).abs() < 1e-12);
        assert!((sol.x[0] - 2.0).abs() < 1e-12 && (sol.x[1] - 6.0).abs() < 1e-12);
    }

    #[test]
    fn equality_and_ge_rows() {
        // max x − y on the simplex with x ≤ 0.3 ⇒ x = 0.3, y = 0.7
        let lp = LinearProgram {
            objective: vec![1.0, -1.0],
            constraints: vec![
                row(&[1.0, 1.0], Sense::Eq, 1.0),
                row(&[-1.0, 0.0], Sense::Ge, -0.3),
            ],
        };
        let sol = lp.solve().unwrap();
        assert!((sol.objective + 0.4).abs() < 1e-12, "{sol:?}");
    }

    #[test]
    fn detects_infeasible() {
        let lp = LinearProgram {
            objective: vec![1.0],
            constraints: vec![row(&[1.0], Sense::Ge, 2.0), row(&[1.0], Sense::Le, 1.0)],
        };
        assert_eq!(lp.solve().unwrap().outcome, LpOutcome::Infeasible);
    }

    #[test]
    fn detects_unbounded() {
        let lp = LinearProgram {
            objective: vec![1.0, 0.0],
            constraints: vec![row(&[0.0, 1.0], Sense::Le, 1.0)],
        };
        assert_eq!(lp.solve().unwrap().outcome, LpOutcome::Unbounded);
    }

    #[test]
    fn redundant_equalities() {
        let lp = LinearProgram {
            objective: vec![1.0, 2.0],
            constraints: vec![
                row(&[1.0, 1.0], Sense::Eq, 1.0),
                row(&[2.0, 2.0], Sense::Eq, 2.0),
            ],
        };
        let sol = lp.solve().unwrap();
        assert_eq!(sol.outcome, LpOutcome::Optimal);
        assert!((sol.objective - 2.0).abs() < 1e-12);
    }

    #[test]
    fn rejects_non_finite() {
        let lp = LinearProgram {
            objective: vec![f64::NAN],
            constraints: vec![],
        };
        assert!(lp.solve().is_err());
    }
}
