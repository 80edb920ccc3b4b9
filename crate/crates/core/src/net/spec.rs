use crate::{Error, Result};
use ndarray::{ArrayView1, ArrayView2};
use rand::distributions::{Distribution, Uniform};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

/// Layer sizes `(l_1, ..., l_{k+1})` of a fully connected network.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NetworkSpec {
    layer_sizes: Vec<usize>,
}

impl NetworkSpec {
    pub fn new(layer_sizes: Vec<usize>) -> Result<Self> {
        if layer_sizes.len() < 2 {
            return Err(Error::Config("a network needs at least one affine layer".into()));
        }
        if layer_sizes.contains(&0) {
            return Err(Error::Config("layer sizes must be positive".into()));
        }
        Ok(NetworkSpec { layer_sizes })
    }

    /// `depth` affine layers with `depth - 1` hidden layers of `width` units.
    pub fn mlp(input: usize, width: usize, depth: usize, output: usize) -> Result<Self> {
        if depth == 0 {
            return Err(Error::Config("network depth must be at least 1".into()));
        }
        let mut sizes = vec![input];
        sizes.extend(std::iter::repeat_n(width, depth - 1));
        sizes.push(output);
        Self::new(sizes)
    }

    pub fn layer_sizes(&self) -> &[usize] {
        &self.layer_sizes
    }

    /// Number of affine maps, `D(S) = k`.
    pub fn depth(&self) -> usize {
        self.layer_sizes.len() - 1
    }

    /// `max_i l_i`.
    pub fn width(&self) -> usize {
        *self.layer_sizes.iter().max().expect("non-empty")
    }

    /// `|S| = sum_i (l_i * l_{i+1} + l_{i+1})`.
    pub fn param_count(&self) -> usize {
        self.layer_sizes
            .windows(2)
            .map(|w| w[0] * w[1] + w[1])
            .sum()
    }

    pub fn input_dim(&self) -> usize {
        self.layer_sizes[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.layer_sizes.last().expect("non-empty")
    }

    /// Sizes of the hidden (tanh) layers.
    pub fn hidden_sizes(&self) -> &[usize] {
        &self.layer_sizes[1..self.layer_sizes.len() - 1]
    }

    /// Offset of layer `i`'s weight block in the flat vector; its bias
    /// follows the `l_{i+1} x l_i` weights.
    pub(crate) fn layer_offset(&self, i: usize) -> usize {
        self.layer_sizes[..=i]
            .windows(2)
            .map(|w| w[0] * w[1] + w[1])
            .sum()
    }
}

/// Flat parameter vector: for each layer, the row-major `l_{i+1} x l_i`
/// weight matrix followed by the bias.
#[derive(Debug, Clone, PartialEq)]
pub struct Parameters {
    spec: NetworkSpec,
    flat: Vec<f64>,
}

impl Parameters {
    pub fn zeros(spec: &NetworkSpec) -> Self {
        Parameters {
            spec: spec.clone(),
            flat: vec![0.0; spec.param_count()],
        }
    }

    pub fn from_flat(spec: &NetworkSpec, flat: Vec<f64>) -> Result<Self> {
        if flat.len() != spec.param_count() {
            return Err(Error::Contract(format!(
                "parameter vector has length {}, spec needs {}",
                flat.len(),
                spec.param_count()
            )));
        }
        Ok(Parameters {
            spec: spec.clone(),
            flat,
        })
    }

    pub fn spec(&self) -> &NetworkSpec {
        &self.spec
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.flat
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.flat
    }

    pub fn len(&self) -> usize {
        self.flat.len()
    }

    pub fn is_empty(&self) -> bool {
        self.flat.is_empty()
    }

    /// Weight matrix `Q_i` (`l_{i+1} x l_i`) and bias `b_i` of layer `i`.
    pub fn layer(&self, i: usize) -> (ArrayView2<'_, f64>, ArrayView1<'_, f64>) {
        let sizes = self.spec.layer_sizes();
        let (n_in, n_out) = (sizes[i], sizes[i + 1]);
        let off = self.spec.layer_offset(i);
        let w = ArrayView2::from_shape((n_out, n_in), &self.flat[off..off + n_in * n_out])
            .expect("layer shape");
        let b = ArrayView1::from(&self.flat[off + n_in * n_out..off + n_in * n_out + n_out]);
        (w, b)
    }

    /// `||theta||_inf`.
    pub fn max_abs(&self) -> f64 {
        self.flat.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// Project onto the box `||theta||_inf <= bound`.
    pub fn project(&mut self, bound: f64) {
        for v in &mut self.flat {
            *v = v.clamp(-bound, bound);
        }
    }
}

/// Glorot/Xavier uniform weights, zero biases.
pub fn xavier_init(spec: &NetworkSpec, seed: u64) -> Parameters {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut params = Parameters::zeros(spec);
    let sizes = spec.layer_sizes().to_vec();
    for i in 0..spec.depth() {
        let (n_in, n_out) = (sizes[i], sizes[i + 1]);
        let a = (6.0 / (n_in + n_out) as f64).sqrt();
        let dist = Uniform::new_inclusive(-a, a);
        let off = spec.layer_offset(i);
        for w in &mut params.flat[off..off + n_in * n_out] {
            *w = dist.sample(&mut rng);
        }
    }
    params
}

/// Lipschitz and sup-norm constants of the bounded network class:
/// `C = |S| R^(D-1) ||S||_inf^(D-1)` and `B = 2 R ||S||_inf`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LipschitzConstants {
    pub c_sr: f64,
    pub b_sr: f64,
}

pub fn lipschitz_constants(spec: &NetworkSpec, bound: f64) -> Result<LipschitzConstants> {
    if !(bound > 0.0) {
        return Err(Error::Domain(format!("parameter bound must be positive, got {bound}")));
    }
    let k = spec.depth() as i32;
    let width = spec.width() as f64;
    Ok(LipschitzConstants {
        c_sr: spec.param_count() as f64 * bound.powi(k - 1) * width.powi(k - 1),
        b_sr: 2.0 * bound * width,
    })
}
