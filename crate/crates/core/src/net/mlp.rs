use super::adam::{AdamConfig, AdamState};
use super::batchnorm::{BatchNormState, Mode};
use super::spec::{xavier_init, NetworkSpec, Parameters};
use crate::{Error, Result};
use ndarray::{Array1, Array2, ArrayView2, Axis, Zip};
use std::sync::atomic::{AtomicU64, Ordering};

/// `tanh` through a single `exp`, with a series near zero where
/// `(e - 1) / (e + 1)` would cancel. Relative error below 2e-13.
#[inline]
pub(crate) fn tanh(x: f64) -> f64 {
    let ax = x.abs();
    if ax < 1e-3 {
        let x2 = x * x;
        x * (1.0 - x2 * (1.0 / 3.0 - x2 * (2.0 / 15.0 - x2 * (17.0 / 315.0))))
    } else if ax > 20.0 {
        x.signum()
    } else {
        let e = (2.0 * ax).exp();
        ((e - 1.0) / (e + 1.0)).copysign(x)
    }
}

static NEXT_VERSION: AtomicU64 = AtomicU64::new(1);

fn fresh_version() -> u64 {
    NEXT_VERSION.fetch_add(1, Ordering::Relaxed)
}

/// tanh multilayer perceptron: `A_k . tanh . A_{k-1} . ... . tanh . A_1`,
/// optionally with batch normalization between each hidden affine map and
/// its activation.
#[derive(Debug, Clone)]
pub struct Mlp {
    params: Parameters,
    bn: Option<BatchNormState>,
    // Changes whenever trainable values change; ties caches to parameters.
    version: u64,
}

impl PartialEq for Mlp {
    fn eq(&self, other: &Self) -> bool {
        self.params == other.params && self.bn == other.bn
    }
}

/// Activations saved by a training forward pass.
#[derive(Debug)]
pub struct ForwardCache {
    version: u64,
    mode: Mode,
    inputs: Vec<Array2<f64>>,
    normalized: Vec<Option<(Array2<f64>, Array1<f64>)>>,
}

/// Gradient of a scalar loss w.r.t. the weights/biases and, when present,
/// the batch-norm `gamma, beta` values (same flat layouts as the network).
#[derive(Debug, Clone, PartialEq)]
pub struct Gradient {
    pub params: Vec<f64>,
    pub bn: Vec<f64>,
}

impl Gradient {
    pub fn max_abs(&self) -> f64 {
        self.params
            .iter()
            .chain(&self.bn)
            .fold(0.0, |m, v| m.max(v.abs()))
    }
}

impl Mlp {
    pub fn new(params: Parameters, bn: Option<BatchNormState>) -> Result<Self> {
        if let Some(state) = &bn {
            if state.hidden_sizes() != params.spec().hidden_sizes() {
                return Err(Error::Contract(
                    "batch-norm layers do not match the hidden layers".into(),
                ));
            }
        }
        Ok(Mlp {
            params,
            bn,
            version: fresh_version(),
        })
    }

    /// Xavier-initialized network.
    pub fn xavier(spec: &NetworkSpec, seed: u64, batch_norm: bool) -> Self {
        let bn = batch_norm.then(|| BatchNormState::new(spec.hidden_sizes()));
        Mlp::new(xavier_init(spec, seed), bn).expect("matching batch-norm layout")
    }

    pub fn spec(&self) -> &NetworkSpec {
        self.params.spec()
    }

    pub fn params(&self) -> &Parameters {
        &self.params
    }

    pub fn batch_norm(&self) -> Option<&BatchNormState> {
        self.bn.as_ref()
    }

    /// Mutable access to the weights; invalidates outstanding caches.
    pub fn params_mut(&mut self) -> &mut Parameters {
        self.version = fresh_version();
        &mut self.params
    }

    pub fn batch_norm_mut(&mut self) -> Option<&mut BatchNormState> {
        self.version = fresh_version();
        self.bn.as_mut()
    }

    fn check_input(&self, x: &ArrayView2<'_, f64>) -> Result<()> {
        if x.ncols() != self.spec().input_dim() {
            return Err(Error::Contract(format!(
                "input has {} columns, network expects {}",
                x.ncols(),
                self.spec().input_dim()
            )));
        }
        Ok(())
    }

    /// Forward pass that keeps the activations for [`Mlp::backward`]. In
    /// training mode batch statistics are used and running statistics are
    /// updated.
    pub fn forward(&mut self, x: ArrayView2<'_, f64>, mode: Mode) -> Result<(Array2<f64>, ForwardCache)> {
        self.check_input(&x)?;
        if mode == Mode::Train && self.bn.is_some() && x.nrows() < 2 {
            return Err(Error::Contract("batch normalization in training mode needs n >= 2".into()));
        }
        let k = self.spec().depth();
        let mut inputs = Vec::with_capacity(k);
        let mut normalized = Vec::with_capacity(k.saturating_sub(1));
        let mut a = x.to_owned();
        for layer in 0..k {
            let (w, b) = self.params.layer(layer);
            let mut z = a.dot(&w.t());
            z += &b;
            if layer + 1 < k {
                let saved = self.bn.as_mut().map(|bn| bn.forward(layer, &mut z, mode));
                normalized.push(saved);
                z.mapv_inplace(tanh);
            }
            inputs.push(a);
            a = z;
        }
        Ok((
            a,
            ForwardCache {
                version: self.version,
                mode,
                inputs,
                normalized,
            },
        ))
    }

    /// Evaluation-mode forward pass (running batch-norm statistics).
    pub fn predict(&self, x: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
        self.check_input(&x)?;
        let k = self.spec().depth();
        let mut a = x.to_owned();
        for layer in 0..k {
            let (w, b) = self.params.layer(layer);
            let mut z = a.dot(&w.t());
            z += &b;
            if layer + 1 < k {
                if let Some(bn) = &self.bn {
                    let off: usize = bn.hidden_sizes()[..layer].iter().sum();
                    let (gamma, beta) = bn.gamma_beta(layer);
                    let mean = &bn.running_mean()[off..];
                    let var = &bn.running_var()[off..];
                    let scale: Vec<f64> = (0..gamma.len())
                        .map(|j| gamma[j] / (var[j] + bn.epsilon).sqrt())
                        .collect();
                    for mut row in z.axis_iter_mut(Axis(0)) {
                        for j in 0..gamma.len() {
                            row[j] = (row[j] - mean[j]) * scale[j] + beta[j];
                        }
                    }
                }
                z.mapv_inplace(tanh);
            }
            a = z;
        }
        Ok(a)
    }

    /// Reverse-mode gradient of the scalar loss whose derivative w.r.t. the
    /// network output is `d_out`.
    pub fn backward(&self, cache: &ForwardCache, d_out: ArrayView2<'_, f64>) -> Result<Gradient> {
        if cache.version != self.version {
            return Err(Error::Contract("forward cache is stale (parameters changed since)".into()));
        }
        let n = cache.inputs[0].nrows();
        if d_out.dim() != (n, self.spec().output_dim()) {
            return Err(Error::Contract(format!(
                "output gradient has shape {:?}, expected ({n}, {})",
                d_out.dim(),
                self.spec().output_dim()
            )));
        }
        let spec = self.spec();
        let mut grad = Gradient {
            params: vec![0.0; spec.param_count()],
            bn: vec![0.0; self.bn.as_ref().map_or(0, |b| b.affine().len())],
        };
        let mut delta = d_out.to_owned();
        for layer in (0..spec.depth()).rev() {
            let input = &cache.inputs[layer];
            let (w, _) = self.params.layer(layer);
            let (n_out, n_in) = w.dim();
            let off = spec.layer_offset(layer);
            let gw = delta.t().dot(input);
            grad.params[off..off + n_out * n_in]
                .iter_mut()
                .zip(gw.iter())
                .for_each(|(g, v)| *g = *v);
            let gb = delta.sum_axis(Axis(0));
            grad.params[off + n_out * n_in..off + n_out * n_in + n_out]
                .copy_from_slice(gb.as_slice().expect("contiguous"));
            if layer == 0 {
                break;
            }
            // input = tanh(y) of the previous hidden layer
            let mut dy = delta.dot(&w);
            Zip::from(&mut dy).and(input).for_each(|d, &a| *d *= 1.0 - a * a);
            delta = match (&self.bn, &cache.normalized[layer - 1]) {
                (Some(bn), Some((x_hat, inv_std))) => {
                    bn.backward(layer - 1, dy.view(), x_hat, inv_std, cache.mode, &mut grad.bn)
                }
                _ => dy,
            };
        }
        Ok(grad)
    }

    /// Apply one optimizer step to every trainable value.
    pub fn apply_gradient(&mut self, grad: &Gradient, opt: &mut MlpOptimizer) -> Result<()> {
        opt.params.step(self.params.as_mut_slice(), &grad.params)?;
        if let (Some(bn), Some(state)) = (self.bn.as_mut(), opt.bn.as_mut()) {
            state.step(bn.affine_mut(), &grad.bn)?;
        }
        if let Some(bound) = opt.param_bound {
            self.params.project(bound);
        }
        self.version = fresh_version();
        Ok(())
    }
}

/// Adam state for all trainable values of one [`Mlp`].
#[derive(Debug, Clone)]
pub struct MlpOptimizer {
    pub params: AdamState,
    pub bn: Option<AdamState>,
    /// Optional projection onto `||theta||_inf <= bound` after each step.
    pub param_bound: Option<f64>,
}

impl MlpOptimizer {
    pub fn new(net: &Mlp, config: AdamConfig, param_bound: Option<f64>) -> Self {
        MlpOptimizer {
            params: AdamState::new(net.spec().param_count(), config),
            bn: net.batch_norm().map(|b| AdamState::new(b.affine().len(), config)),
            param_bound,
        }
    }

    pub fn current_learning_rate(&self) -> f64 {
        self.params.current_learning_rate()
    }
}
