use serde::{Deserialize, Serialize};

use super::Tensor;
use crate::{Error, Result};

/// Named parameter tensors, each paired with a gradient slot of the same
/// shape.
///
/// The flat view concatenates parameters in insertion order. `version`
/// increments on every parameter mutation so gradient snapshots can be
/// checked for staleness.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ParamStore {
    names: Vec<String>,
    params: Vec<Tensor>,
    grads: Vec<Tensor>,
    version: u64,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, name: impl Into<String>, value: Tensor) -> Result<()> {
        let name = name.into();
        if self.names.contains(&name) {
            return Err(Error::State(format!("duplicate parameter name {name}")));
        }
        self.grads.push(Tensor::zeros(value.shape()));
        self.params.push(value);
        self.names.push(name);
        self.version += 1;
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    /// Total scalar parameter count (length of the flat view).
    pub fn flat_len(&self) -> usize {
        self.params.iter().map(Tensor::len).sum()
    }

    pub fn version(&self) -> u64 {
        self.version
    }

    pub fn param(&self, idx: usize) -> &Tensor {
        &self.params[idx]
    }

    pub fn grad(&self, idx: usize) -> &Tensor {
        &self.grads[idx]
    }

    pub fn param_by_name(&self, name: &str) -> Option<&Tensor> {
        self.names
            .iter()
            .position(|n| n == name)
            .map(|i| &self.params[i])
    }

    /// Mutable parameter access; bumps the version.
    pub fn param_mut(&mut self, idx: usize) -> &mut [f64] {
        self.version += 1;
        self.params[idx].data_mut()
    }

    pub fn grad_mut(&mut self, idx: usize) -> &mut [f64] {
        self.grads[idx].data_mut()
    }

    pub fn zero_grad(&mut self) {
        for g in &mut self.grads {
            g.data_mut().fill(0.0);
        }
    }

    pub fn flat_params(&self) -> Vec<f64> {
        self.params
            .iter()
            .flat_map(|p| p.data().iter().copied())
            .collect()
    }

    pub fn flat_grads(&self) -> Vec<f64> {
        self.grads
            .iter()
            .flat_map(|g| g.data().iter().copied())
            .collect()
    }

    pub fn set_flat_params(&mut self, flat: &[f64]) -> Result<()> {
        self.check_flat(flat)?;
        let mut off = 0;
        for p in &mut self.params {
            let n = p.len();
            p.data_mut().copy_from_slice(&flat[off..off + n]);
            off += n;
        }
        self.version += 1;
        Ok(())
    }

    pub fn set_flat_grads(&mut self, flat: &[f64]) -> Result<()> {
        self.check_flat(flat)?;
        let mut off = 0;
        for g in &mut self.grads {
            let n = g.len();
            g.data_mut().copy_from_slice(&flat[off..off + n]);
            off += n;
        }
        Ok(())
    }

    /// `θ ← θ − lr · direction` over the flat view.
    pub fn apply_step(&mut self, direction: &[f64], lr: f64) -> Result<()> {
        self.check_flat(direction)?;
        let mut off = 0;
        for p in &mut self.params {
            let data = p.data_mut();
            for (v, d) in data.iter_mut().zip(&direction[off..]) {
                *v -= lr * d;
            }
            off += data.len();
        }
        self.version += 1;
        Ok(())
    }

    /// Plain gradient step using the stored gradients.
    pub fn sgd_step(&mut self, lr: f64) {
        for (p, g) in self.params.iter_mut().zip(&self.grads) {
            for (v, d) in p.data_mut().iter_mut().zip(g.data()) {
                *v -= lr * d;
            }
        }
        self.version += 1;
    }

    fn check_flat(&self, flat: &[f64]) -> Result<()> {
        if flat.len() != self.flat_len() {
            return Err(Error::Dimension(format!(
                "flat vector has {} entries, store holds {}",
                flat.len(),
                self.flat_len()
            )));
        }
        Ok(())
    }

    fn layout_entries(&self) -> impl Iterator<Item = (String, Vec<usize>)> + '_ {
        self.names
            .iter()
            .zip(&self.params)
            .map(|(n, p)| (n.clone(), p.shape().to_vec()))
    }
}

/// Ordering signature of one or more stores' flat views.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FlatLayout {
    entries: Vec<Vec<(String, Vec<usize>)>>,
}

impl FlatLayout {
    pub fn of(stores: &[&ParamStore]) -> Self {
        Self {
            entries: stores.iter().map(|s| s.layout_entries().collect()).collect(),
        }
    }

    pub fn flat_len(&self) -> usize {
        self.entries
            .iter()
            .flatten()
            .map(|(_, shape)| shape.iter().product::<usize>())
            .sum()
    }
}

/// Concatenates the gradients of `stores` into one vector, checking that the
/// stores still match `layout`.
pub fn flatten_grads(stores: &[&ParamStore], layout: &FlatLayout) -> Result<Vec<f64>> {
    if FlatLayout::of(stores) != *layout {
        return Err(Error::State(
            "parameter stores do not match the expected flat layout".into(),
        ));
    }
    let mut out = Vec::with_capacity(layout.flat_len());
    for s in stores {
        for g in &s.grads {
            out.extend_from_slice(g.data());
        }
    }
    Ok(out)
}

/// Inverse of [`flatten_grads`]: scatters `flat` into the gradient slots.
pub fn unflatten_grads(stores: &mut [&mut ParamStore], flat: &[f64]) -> Result<()> {
    let total: usize = stores.iter().map(|s| s.flat_len()).sum();
    if total != flat.len() {
        return Err(Error::Dimension(format!(
            "flat vector has {} entries, stores hold {total}",
            flat.len()
        )));
    }
    let mut off = 0;
    for s in stores.iter_mut() {
        let n = s.flat_len();
        s.set_flat_grads(&flat[off..off + n])?;
        off += n;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn store(shapes: &[(&str, Vec<usize>)]) -> ParamStore {
        let mut s = ParamStore::new();
        for (name, shape) in shapes {
            s.push(*name, Tensor::zeros(shape)).unwrap();
        }
        s
    }

    #[test]
    fn zero_grads_flatten_to_zero_vector() {
        let s = store(&[("w", vec![2, 3]), ("b", vec![3])]);
        let layout = FlatLayout::of(&[&s]);
        let flat = flatten_grads(&[&s], &layout).unwrap();
        assert_eq!(flat, vec![0.0; 9]);
    }

    #[test]
    fn scalar_parameter() {
        let mut s = store(&[("a", vec![1])]);
        s.grad_mut(0)[0] = 2.5;
        let layout = FlatLayout::of(&[&s]);
        assert_eq!(flatten_grads(&[&s], &layout).unwrap(), vec![2.5]);
    }

    #[test]
    fn order_is_stable_and_layout_checked() {
        let mut a = store(&[("w", vec![2])]);
        let mut b = store(&[("v", vec![1])]);
        a.grad_mut(0).copy_from_slice(&[1.0, 2.0]);
        b.grad_mut(0)[0] = 3.0;
        let layout = FlatLayout::of(&[&a, &b]);
        let first = flatten_grads(&[&a, &b], &layout).unwrap();
        let second = flatten_grads(&[&a, &b], &layout).unwrap();
        assert_eq!(first, vec![1.0, 2.0, 3.0]);
        assert_eq!(first, second);
        assert!(matches!(
            flatten_grads(&[&b, &a], &layout),
            Err(Error::State(_))
        ));
    }

    #[test]
    fn apply_step_bumps_version() {
        let mut s = store(&[("w", vec![2])]);
        let v0 = s.version();
        s.apply_step(&[1.0, -1.0], 0.5).unwrap();
        assert!(s.version() > v0);
        assert_eq!(s.param(0).data(), &[-0.5, 0.5]);
    }

    proptest! {
        #[test]
        fn flatten_unflatten_identity(values in proptest::collection::vec(-1e3f64..1e3, 7)) {
            let mut a = store(&[("w", vec![2, 2]), ("b", vec![2])]);
            let mut b = store(&[("c", vec![1])]);
            unflatten_grads(&mut [&mut a, &mut b], &values).unwrap();
            let layout = FlatLayout::of(&[&a, &b]);
            prop_assert_eq!(flatten_grads(&[&a, &b], &layout).unwrap(), values);
        }
    }
}
