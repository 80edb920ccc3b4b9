use ndarray::{Array1, Array2, ArrayView2};

/// Whether batch normalization uses batch statistics or running averages.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

/// Batch-normalization state for every hidden layer of one network.
///
/// `affine` holds `gamma_0, beta_0, gamma_1, beta_1, ...`; running means
/// and variances are concatenated across layers in the same order.
#[derive(Debug, Clone, PartialEq)]
pub struct BatchNormState {
    sizes: Vec<usize>,
    pub(crate) affine: Vec<f64>,
    pub(crate) running_mean: Vec<f64>,
    pub(crate) running_var: Vec<f64>,
    pub epsilon: f64,
    pub momentum: f64,
}

pub const BN_EPSILON: f64 = 1e-5;
pub const BN_MOMENTUM: f64 = 0.1;

impl BatchNormState {
    pub fn new(hidden_sizes: &[usize]) -> Self {
        let total: usize = hidden_sizes.iter().sum();
        let mut affine = Vec::with_capacity(2 * total);
        for &h in hidden_sizes {
            affine.extend(std::iter::repeat_n(1.0, h));
            affine.extend(std::iter::repeat_n(0.0, h));
        }
        BatchNormState {
            sizes: hidden_sizes.to_vec(),
            affine,
            running_mean: vec![0.0; total],
            running_var: vec![1.0; total],
            epsilon: BN_EPSILON,
            momentum: BN_MOMENTUM,
        }
    }

    pub(crate) fn from_parts(
        sizes: &[usize],
        affine: Vec<f64>,
        running_mean: Vec<f64>,
        running_var: Vec<f64>,
    ) -> Self {
        BatchNormState {
            sizes: sizes.to_vec(),
            affine,
            running_mean,
            running_var,
            epsilon: BN_EPSILON,
            momentum: BN_MOMENTUM,
        }
    }

    pub fn hidden_sizes(&self) -> &[usize] {
        &self.sizes
    }

    /// Number of normalized units across all layers.
    pub fn unit_count(&self) -> usize {
        self.running_mean.len()
    }

    pub fn affine(&self) -> &[f64] {
        &self.affine
    }

    pub fn affine_mut(&mut self) -> &mut [f64] {
        &mut self.affine
    }

    pub fn running_mean(&self) -> &[f64] {
        &self.running_mean
    }

    pub fn running_var(&self) -> &[f64] {
        &self.running_var
    }

    fn unit_offset(&self, layer: usize) -> usize {
        self.sizes[..layer].iter().sum()
    }

    pub(crate) fn gamma_beta(&self, layer: usize) -> (&[f64], &[f64]) {
        let off = 2 * self.unit_offset(layer);
        let h = self.sizes[layer];
        (&self.affine[off..off + h], &self.affine[off + h..off + 2 * h])
    }

    /// Normalize `z` in place (`y = gamma * x_hat + beta`); returns `x_hat`
    /// and the per-unit `1 / sqrt(var + eps)` used.
    pub(crate) fn forward(
        &mut self,
        layer: usize,
        z: &mut Array2<f64>,
        mode: Mode,
    ) -> (Array2<f64>, Array1<f64>) {
        let rows = z.nrows();
        let n = rows as f64;
        let off = self.unit_offset(layer);
        let h = self.sizes[layer];
        if !z.is_standard_layout() {
            *z = z.as_standard_layout().into_owned();
        }
        let (mean, var) = match mode {
            Mode::Train => {
                let data = z.as_slice().expect("standard layout");
                let mut mean = vec![0.0; h];
                for row in data.chunks_exact(h) {
                    mean.iter_mut().zip(row).for_each(|(m, v)| *m += v);
                }
                mean.iter_mut().for_each(|m| *m /= n);
                let mut var = vec![0.0; h];
                for row in data.chunks_exact(h) {
                    for j in 0..h {
                        let c = row[j] - mean[j];
                        var[j] += c * c;
                    }
                }
                var.iter_mut().for_each(|v| *v /= n);
                let unbiased = n / (n - 1.0);
                for j in 0..h {
                    let rm = &mut self.running_mean[off + j];
                    *rm = (1.0 - self.momentum) * *rm + self.momentum * mean[j];
                    let rv = &mut self.running_var[off + j];
                    *rv = (1.0 - self.momentum) * *rv + self.momentum * var[j] * unbiased;
                }
                (mean, var)
            }
            Mode::Eval => (
                self.running_mean[off..off + h].to_vec(),
                self.running_var[off..off + h].to_vec(),
            ),
        };
        let inv_std: Vec<f64> = var.iter().map(|v| 1.0 / (v + self.epsilon).sqrt()).collect();
        let (gamma, beta) = self.gamma_beta(layer);
        let mut x_hat = vec![0.0; rows * h];
        let data = z.as_slice_mut().expect("standard layout");
        for (zr, xr) in data.chunks_exact_mut(h).zip(x_hat.chunks_exact_mut(h)) {
            for j in 0..h {
                let x = (zr[j] - mean[j]) * inv_std[j];
                xr[j] = x;
                zr[j] = gamma[j] * x + beta[j];
            }
        }
        (
            Array2::from_shape_vec((rows, h), x_hat).expect("shape"),
            Array1::from(inv_std),
        )
    }

    /// Back-propagate `dy` (gradient w.r.t. the normalized-and-shifted
    /// output) to `dz`, writing `d gamma, d beta` into `grad_affine`.
    pub(crate) fn backward(
        &self,
        layer: usize,
        dy: ArrayView2<'_, f64>,
        x_hat: &Array2<f64>,
        inv_std: &Array1<f64>,
        mode: Mode,
        grad_affine: &mut [f64],
    ) -> Array2<f64> {
        let n = dy.nrows() as f64;
        let h = self.sizes[layer];
        let off = 2 * self.unit_offset(layer);
        let (gamma, _) = self.gamma_beta(layer);
        let mut dz = dy.as_standard_layout().into_owned();
        let x_hat = x_hat.as_standard_layout();
        let xs = x_hat.as_slice().expect("standard layout");
        let mut dgamma = vec![0.0; h];
        let mut dbeta = vec![0.0; h];
        {
            let ds = dz.as_slice().expect("standard layout");
            for (dr, xr) in ds.chunks_exact(h).zip(xs.chunks_exact(h)) {
                for j in 0..h {
                    dgamma[j] += dr[j] * xr[j];
                    dbeta[j] += dr[j];
                }
            }
        }
        grad_affine[off..off + h].copy_from_slice(&dgamma);
        grad_affine[off + h..off + 2 * h].copy_from_slice(&dbeta);
        let scale: Vec<f64> = (0..h).map(|j| gamma[j] * inv_std[j]).collect();
        let ds = dz.as_slice_mut().expect("standard layout");
        match mode {
            Mode::Train => {
                for (dr, xr) in ds.chunks_exact_mut(h).zip(xs.chunks_exact(h)) {
                    for j in 0..h {
                        dr[j] = scale[j] / n * (n * dr[j] - dbeta[j] - xr[j] * dgamma[j]);
                    }
                }
            }
            Mode::Eval => {
                for dr in ds.chunks_exact_mut(h) {
                    for j in 0..h {
                        dr[j] *= scale[j];
                    }
                }
            }
        }
        dz
    }
}
