use crate::numcore::Tensor;
use crate::{Error, Result};

const LABEL_SUM_TOL: f64 = 1e-9;

/// Mean soft-label cross-entropy over the batch and its gradient with
/// respect to the logits, `(softmax − y) / n`.
pub fn cross_entropy(logits: &Tensor, labels: &Tensor) -> Result<(f64, Tensor)> {
    logits.ensure_matrix("logits")?;
    if logits.shape() != labels.shape() {
        return Err(Error::Dimension(format!(
            "logits {:?} vs labels {:?}",
            logits.shape(),
            labels.shape()
        )));
    }
    let (n, c) = (logits.rows(), logits.cols());
    if n == 0 {
        return Err(Error::Data("cross-entropy on an empty batch".into()));
    }
    for r in 0..n {
        let row = labels.row(r);
        let sum: f64 = row.iter().sum();
        if row.iter().any(|&v| v < 0.0) || (sum - 1.0).abs() > LABEL_SUM_TOL {
            return Err(Error::Label(format!("label row {r} is not a distribution (sum {sum})")));
        }
    }
    let inv_n = 1.0 / n as f64;
    let mut loss = 0.0;
    let mut grad = vec![0.0; n * c];
    for r in 0..n {
        let z = logits.row(r);
        let y = labels.row(r);
        let max = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let sum_exp: f64 = z.iter().map(|v| (v - max).exp()).sum();
        let log_norm = max + sum_exp.ln();
        for k in 0..c {
            let log_p = z[k] - log_norm;
            if y[k] != 0.0 {
                loss -= y[k] * log_p;
            }
            grad[r * c + k] = (log_p.exp() - y[k]) * inv_n;
        }
    }
    let loss = loss * inv_n;
    if !loss.is_finite() {
        return Err(Error::NonFinite("cross-entropy loss".into()));
    }
    Ok((loss.max(0.0), Tensor::from_parts(vec![n, c], grad)))
}

/// Gradient reversal, forward direction: identity.
pub fn grl_forward(x: &Tensor) -> Tensor {
    x.clone()
}

/// Gradient reversal, backward direction: negation.
pub fn grl_backward(upstream: &Tensor) -> Tensor {
    Tensor::from_parts(
        upstream.shape().to_vec(),
        upstream.data().iter().map(|v| -v).collect(),
    )
}

/// Unbiased (`1/(n−1)`) covariance of the rows of `x`, plus the centred data.
fn covariance(x: &Tensor) -> Result<(Vec<f64>, Vec<f64>)> {
    x.ensure_matrix("coral features")?;
    let (n, d) = (x.rows(), x.cols());
    if n < 2 {
        return Err(Error::Covariance(format!("need at least 2 rows, got {n}")));
    }
    let mut mean = vec![0.0; d];
    for r in 0..n {
        for (m, v) in mean.iter_mut().zip(x.row(r)) {
            *m += v;
        }
    }
    for m in &mut mean {
        *m /= n as f64;
    }
    let mut centred = vec![0.0; n * d];
    for r in 0..n {
        for k in 0..d {
            centred[r * d + k] = x.get(r, k) - mean[k];
        }
    }
    let mut cov = vec![0.0; d * d];
    for r in 0..n {
        let row = &centred[r * d..(r + 1) * d];
        for a in 0..d {
            for b in 0..d {
                cov[a * d + b] += row[a] * row[b];
            }
        }
    }
    let scale = 1.0 / (n - 1) as f64;
    for v in &mut cov {
        *v *= scale;
    }
    Ok((cov, centred))
}

#[derive(Debug, Clone)]
pub struct CoralOutput {
    pub loss: f64,
    pub grad_a: Tensor,
    pub grad_b: Tensor,
}

/// `‖Cov(A) − Cov(B)‖²_F / (4 d²)` and its gradients with respect to both
/// batches.
pub fn coral_loss(a: &Tensor, b: &Tensor) -> Result<CoralOutput> {
    if a.cols() != b.cols() {
        return Err(Error::Dimension(format!(
            "coral batches have widths {} and {}",
            a.cols(),
            b.cols()
        )));
    }
    let d = a.cols();
    let (cov_a, cen_a) = covariance(a)?;
    let (cov_b, cen_b) = covariance(b)?;
    let diff: Vec<f64> = cov_a.iter().zip(&cov_b).map(|(x, y)| x - y).collect();
    let norm = 1.0 / (4.0 * (d * d) as f64);
    let loss = diff.iter().map(|v| v * v).sum::<f64>() * norm;

    // ∂L/∂X = 2/(n−1) · X_c · ∂L/∂C with ∂L/∂C = 2·norm·diff (symmetric);
    // the centring term vanishes because centred rows sum to zero.
    let grad = |cen: &[f64], n: usize, sign: f64| {
        let coef = sign * 4.0 * norm / (n - 1) as f64;
        let mut g = vec![0.0; n * d];
        for r in 0..n {
            let row = &cen[r * d..(r + 1) * d];
            for k in 0..d {
                let mut s = 0.0;
                for j in 0..d {
                    s += row[j] * diff[j * d + k];
                }
                g[r * d + k] = coef * s;
            }
        }
        Tensor::from_parts(vec![n, d], g)
    };
    Ok(CoralOutput {
        loss,
        grad_a: grad(&cen_a, a.rows(), 1.0),
        grad_b: grad(&cen_b, b.rows(), -1.0),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random(rows: usize, cols: usize, seed: u64) -> Tensor {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Tensor::matrix(rows, cols, (0..rows * cols).map(|_| rng.random_range(-2.0..2.0)).collect()).unwrap()
    }

    #[test]
    fn uniform_logits_give_ln_c() {
        let logits = Tensor::matrix(2, 4, vec![0.7; 8]).unwrap();
        let labels = Tensor::from_rows(&[[0.0, 1.0, 0.0, 0.0], [0.25, 0.25, 0.25, 0.25]]).unwrap();
        let (loss, _) = cross_entropy(&logits, &labels).unwrap();
        assert!((loss - 4f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn saturated_margin() {
        let logits = Tensor::from_rows(&[[20.0, 0.0, 0.0]]).unwrap();
        let labels = Tensor::from_rows(&[[1.0, 0.0, 0.0]]).unwrap();
        let (loss, _) = cross_entropy(&logits, &labels).unwrap();
        assert!((0.0..1e-8).contains(&loss));
    }

    #[test]
    fn soft_label_matches_scalar_recomputation() {
        let logits = random(1, 3, 7);
        let y = [0.25, 0.75, 0.0];
        let labels = Tensor::from_rows(&[y]).unwrap();
        let (loss, grad) = cross_entropy(&logits, &labels).unwrap();
        let z = logits.row(0);
        let denom = z[0].exp() + z[1].exp() + z[2].exp();
        let p = [z[0].exp() / denom, z[1].exp() / denom, z[2].exp() / denom];
        let expect = -(0.25 * p[0].ln() + 0.75 * p[1].ln());
        assert!((loss - expect).abs() < 1e-12);
        for k in 0..3 {
            assert!((grad.data()[k] - (p[k] - y[k])).abs() < 1e-12);
        }
    }

    #[test]
    fn label_rows_must_be_distributions() {
        let logits = Tensor::zeros(&[1, 2]);
        let bad = Tensor::from_rows(&[[0.5, 0.6]]).unwrap();
        assert!(matches!(cross_entropy(&logits, &bad), Err(Error::Label(_))));
        let neg = Tensor::from_rows(&[[1.5, -0.5]]).unwrap();
        assert!(matches!(cross_entropy(&logits, &neg), Err(Error::Label(_))));
    }

    #[test]
    fn grl_identity_and_negation() {
        let x = Tensor::from_rows(&[[3.2, -1.0]]).unwrap();
        assert_eq!(grl_forward(&x).data(), &[3.2, -1.0]);
        let g = Tensor::from_rows(&[[1.0, -2.0]]).unwrap();
        assert_eq!(grl_backward(&g).data(), &[-1.0, 2.0]);
    }

    #[test]
    fn coral_identical_is_zero() {
        let a = random(6, 3, 1);
        assert_eq!(coral_loss(&a, &a).unwrap().loss, 0.0);
    }

    #[test]
    fn coral_scalar_case() {
        let a = Tensor::matrix(2, 1, vec![0.0, 2.0]).unwrap();
        let b = Tensor::matrix(2, 1, vec![0.0, 0.0]).unwrap();
        assert!((coral_loss(&a, &b).unwrap().loss - 1.0).abs() < 1e-15);
    }

    #[test]
    fn coral_single_row_rejected() {
        let a = Tensor::matrix(1, 2, vec![0.0, 1.0]).unwrap();
        let b = random(3, 2, 0);
        assert!(matches!(coral_loss(&a, &b), Err(Error::Covariance(_))));
    }

    #[test]
    fn coral_gradients_match_finite_differences() {
        let a = random(5, 3, 11);
        let b = random(4, 3, 12);
        let out = coral_loss(&a, &b).unwrap();
        let h = 1e-6;
        for (which, base, grad) in [(0, &a, &out.grad_a), (1, &b, &out.grad_b)] {
            for k in 0..base.len() {
                let mut up = base.data().to_vec();
                let mut dn = base.data().to_vec();
                up[k] += h;
                dn[k] -= h;
                let shape = base.shape().to_vec();
                let (tu, td) = (Tensor::new(shape.clone(), up).unwrap(), Tensor::new(shape, dn).unwrap());
                let (lu, ld) = if which == 0 {
                    (coral_loss(&tu, &b).unwrap().loss, coral_loss(&td, &b).unwrap().loss)
                } else {
                    (coral_loss(&a, &tu).unwrap().loss, coral_loss(&a, &td).unwrap().loss)
                };
                let fd = (lu - ld) / (2.0 * h);
                assert!((fd - grad.data()[k]).abs() < 1e-7, "{which}:{k} fd {fd} vs {}", grad.data()[k]);
            }
        }
    }

    #[test]
    fn coral_symmetric() {
        let a = random(7, 2, 3);
        let b = random(5, 2, 4);
        assert!((coral_loss(&a, &b).unwrap().loss - coral_loss(&b, &a).unwrap().loss).abs() < 1e-15);
    }
}
