//! Central finite-difference gradient checking.

use super::{Network, ParamStore, Tensor};
use crate::{Error, Result};

/// Denominator floor for relative errors; keeps near-zero gradients from
/// turning round-off into huge ratios.
const REL_FLOOR: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq)]
pub struct ParamCheck {
    pub name: String,
    pub max_rel_error: f64,
    /// Flat index (within this parameter) of the worst entry.
    pub worst_index: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub params: Vec<ParamCheck>,
    pub max_rel_error: f64,
    pub tolerance: f64,
    pub pass: bool,
}

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(REL_FLOOR)
}

/// Compares the gradients already stored in `store` against central
/// differences of `loss`, perturbing each parameter by `±step`.
///
/// `loss` must evaluate the objective at the store's current parameters.
pub fn finite_diff_check<F>(
    store: &mut ParamStore,
    mut loss: F,
    step: f64,
    tolerance: f64,
) -> Result<GradCheckReport>
where
    F: FnMut(&ParamStore) -> Result<f64>,
{
    if !(step > 0.0) {
        return Err(Error::Config(format!("finite-difference step must be > 0, got {step}")));
    }
    let mut params = Vec::with_capacity(store.len());
    let mut overall: f64 = 0.0;
    for p in 0..store.len() {
        let analytic = store.grad(p).data().to_vec();
        let mut worst = 0.0_f64;
        let mut worst_index = 0;
        for (k, &a) in analytic.iter().enumerate() {
            let orig = store.param(p).data()[k];
            store.param_mut(p)[k] = orig + step;
            let up = loss(store)?;
            store.param_mut(p)[k] = orig - step;
            let down = loss(store)?;
            store.param_mut(p)[k] = orig;
            let numeric = (up - down) / (2.0 * step);
            if !numeric.is_finite() {
                return Err(Error::NonFinite(format!(
                    "finite difference for {}[{k}]",
                    store.names()[p]
                )));
            }
            let e = relative_error(a, numeric);
            if e > worst {
                worst = e;
                worst_index = k;
            }
        }
        overall = overall.max(worst);
        params.push(ParamCheck {
            name: store.names()[p].clone(),
            max_rel_error: worst,
            worst_index,
        });
    }
    Ok(GradCheckReport {
        params,
        max_rel_error: overall,
        tolerance,
        pass: overall <= tolerance,
    })
}

/// Runs forward + backward of `net` on `batch` under `loss_fn`, then checks the
/// resulting gradients numerically.
///
/// `loss_fn` maps network output to `(loss, ∂loss/∂output)`.
pub fn check_network<F>(
    net: &mut Network,
    loss_fn: F,
    batch: &Tensor,
    step: f64,
    tolerance: f64,
) -> Result<GradCheckReport>
where
    F: Fn(&Tensor) -> Result<(f64, Tensor)>,
{
    net.zero_grad();
    let out = net.forward(batch)?;
    let (_, upstream) = loss_fn(&out)?;
    net.backward(&upstream)?;

    let spec = net.spec().clone();
    let mut store = net.params().clone();
    let report = finite_diff_check(
        &mut store,
        |s| {
            let mut probe = Network::new(spec.clone())?;
            probe.params_mut().set_flat_params(&s.flat_params())?;
            Ok(loss_fn(&probe.predict(batch)?)?.0)
        },
        step,
        tolerance,
    )?;
    Ok(report)
}
