use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{ParamStore, Tensor};
use crate::{Error, Result};

/// Element-wise activation applied after a dense layer.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Activation {
    Relu,
    Tanh,
    Identity,
    /// Identity in the network; the softmax is folded into the loss.
    SoftmaxAtLoss,
}

impl Activation {
    fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Relu => z.max(0.0),
            Activation::Tanh => z.tanh(),
            Activation::Identity | Activation::SoftmaxAtLoss => z,
        }
    }

    /// Derivative expressed through the pre-activation `z` and output `a`.
    fn derivative(self, z: f64, a: f64) -> f64 {
        match self {
            Activation::Relu => {
                if z > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Tanh => 1.0 - a * a,
            Activation::Identity | Activation::SoftmaxAtLoss => 1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LayerSpec {
    pub input: usize,
    pub output: usize,
    pub activation: Activation,
}

impl LayerSpec {
    pub fn new(input: usize, output: usize, activation: Activation) -> Self {
        Self {
            input,
            output,
            activation,
        }
    }
}

/// Architecture of a dense feed-forward network plus its init seed.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NetworkSpec {
    pub layers: Vec<LayerSpec>,
    pub seed: u64,
}

impl NetworkSpec {
    pub fn new(layers: Vec<LayerSpec>, seed: u64) -> Result<Self> {
        let spec = Self { layers, seed };
        spec.validate()?;
        Ok(spec)
    }

    /// Chain of widths `[in, h1, ..., out]` with `hidden` activation on all but
    /// the last layer.
    pub fn mlp(widths: &[usize], hidden: Activation, last: Activation, seed: u64) -> Result<Self> {
        if widths.len() < 2 {
            return Err(Error::Config("an MLP needs at least two widths".into()));
        }
        let n = widths.len() - 1;
        let layers = (0..n)
            .map(|i| {
                let act = if i + 1 == n { last } else { hidden };
                LayerSpec::new(widths[i], widths[i + 1], act)
            })
            .collect();
        Self::new(layers, seed)
    }

    pub fn validate(&self) -> Result<()> {
        if self.layers.is_empty() {
            return Err(Error::Config("network needs at least one layer".into()));
        }
        for (i, l) in self.layers.iter().enumerate() {
            if l.input == 0 || l.output == 0 {
                return Err(Error::Config(format!("layer {i} has a zero width")));
            }
        }
        for (i, pair) in self.layers.windows(2).enumerate() {
            if pair[0].output != pair[1].input {
                return Err(Error::Config(format!(
                    "layer {i} outputs {} but layer {} expects {}",
                    pair[0].output,
                    i + 1,
                    pair[1].input
                )));
            }
        }
        Ok(())
    }

    pub fn input_width(&self) -> usize {
        self.layers[0].input
    }

    pub fn output_width(&self) -> usize {
        self.layers[self.layers.len() - 1].output
    }
}

#[derive(Debug, Clone)]
struct LayerCache {
    input: Tensor,
    pre: Vec<f64>,
    out: Vec<f64>,
}

/// A dense network whose parameters live in a [`ParamStore`].
///
/// Layer `i` owns `layer{i}.weight` (`output x input`, row-major) and
/// `layer{i}.bias` (`output`). [`Network::forward`] caches activations for
/// [`Network::backward`]; the cache survives repeated backward calls so one
/// forward pass can serve several upstream gradients.
#[derive(Debug, Clone)]
pub struct Network {
    spec: NetworkSpec,
    params: ParamStore,
    cache: Option<Vec<LayerCache>>,
}

impl Network {
    /// Glorot-uniform weights, zero biases.
    pub fn new(spec: NetworkSpec) -> Result<Self> {
        spec.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
        let mut params = ParamStore::new();
        for (i, l) in spec.layers.iter().enumerate() {
            let limit = (6.0 / (l.input + l.output) as f64).sqrt();
            let w = (0..l.input * l.output)
                .map(|_| rng.random_range(-limit..limit))
                .collect();
            params.push(format!("layer{i}.weight"), Tensor::matrix(l.output, l.input, w)?)?;
            params.push(format!("layer{i}.bias"), Tensor::zeros(&[l.output]))?;
        }
        Ok(Self {
            spec,
            params,
            cache: None,
        })
    }

    pub fn spec(&self) -> &NetworkSpec {
        &self.spec
    }

    pub fn params(&self) -> &ParamStore {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamStore {
        &mut self.params
    }

    pub fn input_width(&self) -> usize {
        self.spec.input_width()
    }

    pub fn output_width(&self) -> usize {
        self.spec.output_width()
    }

    /// Forward pass that records activations for a later backward pass.
    pub fn forward(&mut self, batch: &Tensor) -> Result<Tensor> {
        let (out, cache) = self.run(batch, true)?;
        self.cache = Some(cache);
        Ok(out)
    }

    /// Forward pass without touching the cache.
    pub fn predict(&self, batch: &Tensor) -> Result<Tensor> {
        Ok(self.run(batch, false)?.0)
    }

    fn run(&self, batch: &Tensor, keep: bool) -> Result<(Tensor, Vec<LayerCache>)> {
        batch.ensure_matrix("network input")?;
        if batch.cols() != self.input_width() {
            return Err(Error::Dimension(format!(
                "batch width {} does not match network input {}",
                batch.cols(),
                self.input_width()
            )));
        }
        let n = batch.rows();
        let mut caches = Vec::new();
        let mut x = batch.clone();
        for (i, l) in self.spec.layers.iter().enumerate() {
            let w = self.params.param(2 * i).data();
            let b = self.params.param(2 * i + 1).data();
            let mut pre = vec![0.0; n * l.output];
            for r in 0..n {
                let xr = x.row(r);
                let zr = &mut pre[r * l.output..(r + 1) * l.output];
                for (o, z) in zr.iter_mut().enumerate() {
                    let wo = &w[o * l.input..(o + 1) * l.input];
                    let mut acc = b[o];
                    for (wi, xi) in wo.iter().zip(xr) {
                        acc += wi * xi;
                    }
                    *z = acc;
                }
            }
            let out: Vec<f64> = pre.iter().map(|&z| l.activation.apply(z)).collect();
            let next = Tensor::from_parts(vec![n, l.output], out.clone());
            if keep {
                caches.push(LayerCache {
                    input: x,
                    pre,
                    out,
                });
            }
            x = next;
        }
        Ok((x, caches))
    }

    /// Accumulates parameter gradients for `upstream = ∂loss/∂output` and
    /// returns `∂loss/∂input`.
    pub fn backward(&mut self, upstream: &Tensor) -> Result<Tensor> {
        let cache = self
            .cache
            .as_ref()
            .ok_or_else(|| Error::State("backward called before forward".into()))?;
        let n = cache[0].input.rows();
        if upstream.shape() != [n, self.output_width()] {
            return Err(Error::Dimension(format!(
                "upstream gradient shape {:?} does not match output [{n}, {}]",
                upstream.shape(),
                self.output_width()
            )));
        }
        let mut delta = upstream.data().to_vec();
        for (i, l) in self.spec.layers.iter().enumerate().rev() {
            let c = &cache[i];
            for (d, (&z, &a)) in delta.iter_mut().zip(c.pre.iter().zip(&c.out)) {
                *d *= l.activation.derivative(z, a);
            }
            {
                let gw = self.params.grad_mut(2 * i);
                for r in 0..n {
                    let xr = c.input.row(r);
                    let dr = &delta[r * l.output..(r + 1) * l.output];
                    for (o, &d) in dr.iter().enumerate() {
                        if d == 0.0 {
                            continue;
                        }
                        let go = &mut gw[o * l.input..(o + 1) * l.input];
                        for (g, xi) in go.iter_mut().zip(xr) {
                            *g += d * xi;
                        }
                    }
                }
            }
            {
                let gb = self.params.grad_mut(2 * i + 1);
                for r in 0..n {
                    for (g, d) in gb.iter_mut().zip(&delta[r * l.output..(r + 1) * l.output]) {
                        *g += d;
                    }
                }
            }
            let w = self.params.param(2 * i).data();
            let mut dx = vec![0.0; n * l.input];
            for r in 0..n {
                let dr = &delta[r * l.output..(r + 1) * l.output];
                let xr = &mut dx[r * l.input..(r + 1) * l.input];
                for (o, &d) in dr.iter().enumerate() {
                    if d == 0.0 {
                        continue;
                    }
                    for (x, wi) in xr.iter_mut().zip(&w[o * l.input..(o + 1) * l.input]) {
                        *x += d * wi;
                    }
                }
            }
            delta = dx;
        }
        Ok(Tensor::from_parts(vec![n, self.input_width()], delta))
    }

    pub fn zero_grad(&mut self) {
        self.params.zero_grad();
    }
}
