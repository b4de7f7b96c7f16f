//! Test-only oracles shared by the integration suites.
#![allow(dead_code, clippy::needless_range_loop)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

/// Brute-force reference for the weighting LP: enumerates every vertex of
/// `{ω ≥ 0, Σω = 1, (Gω)ᵀg_j ≥ rhs_j}` and keeps the best objective.
pub mod lp_oracle {
    fn dotp(a: &[f64], b: &[f64]) -> f64 {
        let mut s = 0.0;
        for i in 0..a.len() {
            s += a[i] * b[i];
        }
        s
    }

    pub struct Rows {
        /// `(j, rhs)`: `(Gω)ᵀg_j ≥ rhs`.
        pub rows: Vec<(usize, f64)>,
    }

    /// Constraint rows of the guidance program, rebuilt with scalar loops.
    pub fn guidance_rows(cols: &[Vec<f64>], g: &[f64]) -> Rows {
        let m = cols.len();
        let mut dots = vec![0.0; m];
        for j in 0..m {
            dots[j] = dotp(g, &cols[j]);
        }
        let mut max = dots[0];
        for j in 1..m {
            if dots[j] > max {
                max = dots[j];
            }
        }
        let mut any_pos = false;
        for j in 0..m {
            if dots[j] > 0.0 {
                any_pos = true;
            }
        }
        let mut rows = Vec::new();
        for j in 0..m {
            let star = dots[j] >= max - 1e-10;
            if star {
                rows.push((j, 0.0));
            } else if dots[j] < 0.0 {
                rows.push((j, if any_pos { dots[j] } else { 0.0 }));
            }
        }
        Rows { rows }
    }

    pub fn descent_rows(m: usize) -> Rows {
        Rows {
            rows: (0..m).map(|j| (j, 0.0)).collect(),
        }
    }

    fn solve_square(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Option<Vec<f64>> {
        let n = b.len();
        for col in 0..n {
            let mut piv = col;
            for r in col + 1..n {
                if a[r][col].abs() > a[piv][col].abs() {
                    piv = r;
                }
            }
            if a[piv][col].abs() < 1e-12 {
                return None;
            }
            a.swap(col, piv);
            b.swap(col, piv);
            for r in 0..n {
                if r != col {
                    let f = a[r][col] / a[col][col];
                    for k in col..n {
                        a[r][k] -= f * a[col][k];
                    }
                    b[r] -= f * b[col];
                }
            }
        }
        Some((0..n).map(|i| b[i] / a[i][i]).collect())
    }

    fn combos(n: usize, k: usize) -> Vec<Vec<usize>> {
        let mut out = Vec::new();
        let mut cur = Vec::new();
        fn rec(start: usize, n: usize, k: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
            if cur.len() == k {
                out.push(cur.clone());
                return;
            }
            for i in start..n {
                cur.push(i);
                rec(i + 1, n, k, cur, out);
                cur.pop();
            }
        }
        rec(0, n, k, &mut cur, &mut out);
        out
    }

    /// Best `(objective, ω)` with objective `Σ ω_i c_i`, or `None` when the
    /// region is empty.
    pub fn best_vertex(cols: &[Vec<f64>], c: &[f64], rows: &Rows) -> Option<(f64, Vec<f64>)> {
        let m = cols.len();
        let mut gram = vec![vec![0.0; m]; m];
        let mut scale: f64 = 0.0;
        for i in 0..m {
            for j in 0..m {
                gram[i][j] = dotp(&cols[i], &cols[j]);
                scale = scale.max(gram[i][j].abs());
            }
        }
        let scale = scale.max(1e-300);
        // inequality list: (coeffs, rhs) meaning coeffs·ω ≥ rhs
        let mut ineq: Vec<(Vec<f64>, f64)> = Vec::new();
        for i in 0..m {
            let mut e = vec![0.0; m];
            e[i] = 1.0;
            ineq.push((e, 0.0));
        }
        for &(j, rhs) in &rows.rows {
            ineq.push((gram[j].clone(), rhs));
        }
        let mut best: Option<(f64, Vec<f64>)> = None;
        for active in combos(ineq.len(), m - 1) {
            let mut a = vec![vec![1.0; m]];
            let mut b = vec![1.0];
            for &k in &active {
                a.push(ineq[k].0.clone());
                b.push(ineq[k].1);
            }
            let Some(w) = solve_square(a, b) else { continue };
            let feasible = ineq.iter().enumerate().all(|(k, (coef, rhs))| {
                let tol = if k < m { 1e-12 } else { 1e-9 * scale };
                dotp(coef, &w) - rhs >= -tol
            });
            if !feasible {
                continue;
            }
            let val = dotp(c, &w);
            if best.as_ref().is_none_or(|(bv, _)| val > *bv) {
                best = Some((val, w));
            }
        }
        best
    }

    /// Reference optimum of the full weighting rule (guidance program with
    /// descent re-solve, or the pure-descent program).
    pub fn reference_optimum(cols: &[Vec<f64>], g: &[f64], ell: f64, eps: f64) -> f64 {
        let m = cols.len();
        if ell <= eps {
            let mut c = vec![0.0; m];
            for i in 0..m {
                for j in 0..m {
                    c[i] += dotp(&cols[i], &cols[j]) / m as f64;
                }
            }
            return best_vertex(cols, &c, &descent_rows(m)).expect("descent region nonempty").0;
        }
        let c: Vec<f64> = cols.iter().map(|col| dotp(col, g)).collect();
        match best_vertex(cols, &c, &guidance_rows(cols, g)) {
            Some((v, _)) if v > 0.0 => v,
            _ => best_vertex(cols, &c, &descent_rows(m)).expect("descent region nonempty").0,
        }
    }

    /// Violations of the literal guidance-constraint rows at direction `d`.
    pub fn min_literal_slack(cols: &[Vec<f64>], g: &[f64], d: &[f64]) -> f64 {
        let rows = guidance_rows(cols, g);
        rows.rows
            .iter()
            .map(|&(j, rhs)| dotp(d, &cols[j]) - rhs)
            .fold(f64::INFINITY, f64::min)
    }
}

/// Random weighting problem: `m` columns and a guidance vector in `dim`
/// dimensions, with occasional structured conflicts.
pub struct RandomProblem {
    pub columns: Vec<Vec<f64>>,
    pub g_optd: Vec<f64>,
    pub ell_optd: f64,
}

pub fn random_problem(seed: u64) -> RandomProblem {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let m = rng.random_range(2..=4);
    let dim = rng.random_range(2..=50);
    let normal = |rng: &mut ChaCha8Rng| -> f64 { StandardNormal.sample(rng) };
    let scale = 10f64.powf(rng.random_range(-2.0..2.0));
    let mut columns: Vec<Vec<f64>> = (0..m)
        .map(|_| (0..dim).map(|_| scale * normal(&mut rng)).collect())
        .collect();
    match rng.random_range(0..4) {
        // direct conflict
        0 => columns[1] = columns[0].iter().map(|v| -v).collect(),
        // near-collinear
        1 => {
            let base = columns[0].clone();
            for c in columns.iter_mut().skip(1) {
                for (x, b) in c.iter_mut().zip(&base) {
                    *x = b + 0.1 * *x;
                }
            }
        }
        _ => {}
    }
    let g_optd: Vec<f64> = if rng.random_bool(0.3) {
        // guidance close to one column
        let k = rng.random_range(0..m);
        columns[k].iter().map(|v| v + 0.5 * scale * normal(&mut rng)).collect()
    } else {
        (0..dim).map(|_| scale * normal(&mut rng)).collect()
    };
    let ell_optd = if rng.random_bool(0.3) { 0.0 } else { rng.random_range(0.01..3.0) };
    RandomProblem {
        columns,
        g_optd,
        ell_optd,
    }
}
