//! Small feed-forward networks with hand-written reverse-mode gradients and an
//! Adam optimizer.
//!
//! Parameters live in one flat vector. Layer `l` stores its weight matrix
//! (`out × in`, row-major) followed by its bias (`out`). Hidden layers use
//! ReLU, the output layer is linear.

use ndarray::{linalg::general_mat_mul, Array2, ArrayView1, ArrayView2, ArrayViewMut2, Axis};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum NnError {
    #[error("network needs at least an input and an output width, got {0:?}")]
    BadWidths(Vec<usize>),
    #[error("shape mismatch: expected {expected}, got {got}")]
    ShapeMismatch { expected: usize, got: usize },
    #[error("non-finite parameter")]
    NonFinite,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mlp {
    widths: Vec<usize>,
    params: Vec<f64>,
}

/// Activations saved by [`Mlp::forward_batch`] for the backward pass.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    /// `acts[0]` is the input; `acts[l+1]` is the (post-ReLU for hidden)
    /// output of layer `l`.
    acts: Vec<Array2<f64>>,
}

impl ForwardCache {
    pub fn output(&self) -> &Array2<f64> {
        self.acts.last().expect("at least one layer")
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub params: Vec<f64>,
    pub input: Vec<f64>,
}

fn param_count(widths: &[usize]) -> usize {
    widths.windows(2).map(|w| w[1] * w[0] + w[1]).sum()
}

impl Mlp {
    /// He-style initialization: weights ~ N(0, sqrt(2/fan_in)), biases zero.
    pub fn init(widths: &[usize], seed: u64) -> Result<Mlp, NnError> {
        if widths.len() < 2 || widths.contains(&0) {
            return Err(NnError::BadWidths(widths.to_vec()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = Vec::with_capacity(param_count(widths));
        for w in widths.windows(2) {
            let (fan_in, fan_out) = (w[0], w[1]);
            let normal = Normal::new(0.0, (2.0 / fan_in as f64).sqrt()).expect("positive std");
            params.extend((0..fan_in * fan_out).map(|_| normal.sample(&mut rng)));
            params.extend(std::iter::repeat_n(0.0, fan_out));
        }
        Ok(Mlp {
            widths: widths.to_vec(),
            params,
        })
    }

    pub fn from_params(widths: &[usize], params: Vec<f64>) -> Result<Mlp, NnError> {
        if widths.len() < 2 || widths.contains(&0) {
            return Err(NnError::BadWidths(widths.to_vec()));
        }
        let expected = param_count(widths);
        if params.len() != expected {
            return Err(NnError::ShapeMismatch {
                expected,
                got: params.len(),
            });
        }
        if params.iter().any(|p| !p.is_finite()) {
            return Err(NnError::NonFinite);
        }
        Ok(Mlp {
            widths: widths.to_vec(),
            params,
        })
    }

    pub fn widths(&self) -> &[usize] {
        &self.widths
    }

    pub fn n_layers(&self) -> usize {
        self.widths.len() - 1
    }

    pub fn input_len(&self) -> usize {
        self.widths[0]
    }

    pub fn output_len(&self) -> usize {
        *self.widths.last().expect("validated widths")
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    pub fn n_params(&self) -> usize {
        self.params.len()
    }

    /// Offsets of layer `l`'s weight block and bias block.
    pub fn layer_offsets(&self, l: usize) -> (usize, usize) {
        let w_off = param_count(&self.widths[..=l]);
        (w_off, w_off + self.widths[l + 1] * self.widths[l])
    }

    pub fn weight(&self, l: usize) -> ArrayView2<'_, f64> {
        let (w_off, b_off) = self.layer_offsets(l);
        ArrayView2::from_shape((self.widths[l + 1], self.widths[l]), &self.params[w_off..b_off])
            .expect("layout")
    }

    pub fn weight_mut(&mut self, l: usize) -> ArrayViewMut2<'_, f64> {
        let (w_off, b_off) = self.layer_offsets(l);
        let shape = (self.widths[l + 1], self.widths[l]);
        ArrayViewMut2::from_shape(shape, &mut self.params[w_off..b_off]).expect("layout")
    }

    pub fn bias(&self, l: usize) -> ArrayView1<'_, f64> {
        let (_, b_off) = self.layer_offsets(l);
        ArrayView1::from(&self.params[b_off..b_off + self.widths[l + 1]])
    }

    pub fn bias_mut(&mut self, l: usize) -> &mut [f64] {
        let (_, b_off) = self.layer_offsets(l);
        let n = self.widths[l + 1];
        &mut self.params[b_off..b_off + n]
    }

    pub fn forward(&self, input: &[f64]) -> Result<Vec<f64>, NnError> {
        let x = ArrayView2::from_shape((1, input.len()), input).expect("row");
        let out = self.forward_batch(x)?;
        Ok(out.output().row(0).to_vec())
    }

    /// Forward pass over a `batch × in` matrix.
    pub fn forward_batch(&self, x: ArrayView2<'_, f64>) -> Result<ForwardCache, NnError> {
        if x.ncols() != self.input_len() {
            return Err(NnError::ShapeMismatch {
                expected: self.input_len(),
                got: x.ncols(),
            });
        }
        let mut acts = Vec::with_capacity(self.widths.len());
        acts.push(x.to_owned());
        for l in 0..self.n_layers() {
            let prev = &acts[l];
            let mut z = Array2::zeros((prev.nrows(), self.widths[l + 1]));
            z += &self.bias(l);
            general_mat_mul(1.0, prev, &self.weight(l).t(), 1.0, &mut z);
            if l + 1 < self.n_layers() {
                z.mapv_inplace(|v| v.max(0.0));
            }
            acts.push(z);
        }
        Ok(ForwardCache { acts })
    }

    /// Reverse pass for a batch: returns summed parameter gradients and the
    /// input gradient matrix.
    pub fn backward_batch(
        &self,
        cache: &ForwardCache,
        grad_out: ArrayView2<'_, f64>,
    ) -> Result<(Vec<f64>, Array2<f64>), NnError> {
        let out = cache.output();
        if grad_out.dim() != out.dim() {
            return Err(NnError::ShapeMismatch {
                expected: out.len(),
                got: grad_out.len(),
            });
        }
        let mut grads = vec![0.0; self.n_params()];
        let mut delta = grad_out.to_owned();
        for l in (0..self.n_layers()).rev() {
            let input = &cache.acts[l];
            let (w_off, b_off) = self.layer_offsets(l);
            {
                let mut gw = ArrayViewMut2::from_shape(
                    (self.widths[l + 1], self.widths[l]),
                    &mut grads[w_off..b_off],
                )
                .expect("layout");
                general_mat_mul(1.0, &delta.t(), input, 0.0, &mut gw);
            }
            for (g, col) in grads[b_off..b_off + self.widths[l + 1]]
                .iter_mut()
                .zip(delta.axis_iter(Axis(1)))
            {
                *g = col.sum();
            }
            let mut prev = Array2::zeros((delta.nrows(), self.widths[l]));
            general_mat_mul(1.0, &delta, &self.weight(l), 0.0, &mut prev);
            if l > 0 {
                // ReLU derivative from the stored post-activation
                prev.zip_mut_with(input, |d, &a| {
                    if a <= 0.0 {
                        *d = 0.0;
                    }
                });
            }
            delta = prev;
        }
        Ok((grads, delta))
    }

    pub fn backward(&self, input: &[f64], output_gradient: &[f64]) -> Result<Gradients, NnError> {
        if output_gradient.len() != self.output_len() {
            return Err(NnError::ShapeMismatch {
                expected: self.output_len(),
                got: output_gradient.len(),
            });
        }
        let x = ArrayView2::from_shape((1, input.len()), input).expect("row");
        let cache = self.forward_batch(x)?;
        let g = ArrayView2::from_shape((1, output_gradient.len()), output_gradient).expect("row");
        let (params, input_grad) = self.backward_batch(&cache, g)?;
        Ok(Gradients {
            params,
            input: input_grad.row(0).to_vec(),
        })
    }

    /// Which hidden units are active (pre-activation > 0) for `input`.
    pub fn relu_pattern(&self, input: &[f64]) -> Result<Vec<bool>, NnError> {
        if input.len() != self.input_len() {
            return Err(NnError::ShapeMismatch {
                expected: self.input_len(),
                got: input.len(),
            });
        }
        let mut pattern = Vec::new();
        let mut x = ndarray::Array1::from(input.to_vec());
        for l in 0..self.n_layers() - 1 {
            let z = self.weight(l).dot(&x) + self.bias(l);
            pattern.extend(z.iter().map(|&v| v > 0.0));
            x = z.mapv(|v| v.max(0.0));
        }
        Ok(pattern)
    }

    /// SHA-256 over widths and little-endian parameter bytes.
    pub fn param_hash(&self) -> String {
        let mut h = Sha256::new();
        for w in &self.widths {
            h.update((*w as u64).to_le_bytes());
        }
        for p in &self.params {
            h.update(p.to_le_bytes());
        }
        hex::encode(h.finalize())
    }
}

/// Batch matrix helper: stacks equal-length rows.
pub fn stack_rows(rows: &[Vec<f64>], width: usize) -> Array2<f64> {
    let mut flat = Vec::with_capacity(rows.len() * width);
    for r in rows {
        debug_assert_eq!(r.len(), width);
        flat.extend_from_slice(r);
    }
    Array2::from_shape_vec((rows.len(), width), flat).expect("row widths")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub t: u64,
}

impl Adam {
    pub fn new(n_params: usize, lr: f64) -> Adam {
        Adam {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            m: vec![0.0; n_params],
            v: vec![0.0; n_params],
            t: 0,
        }
    }

    /// One bias-corrected update. A zero gradient leaves parameters untouched
    /// only while the moment accumulators are zero too.
    pub fn step(&mut self, params: &mut [f64], grads: &[f64]) -> Result<(), NnError> {
        if params.len() != self.m.len() || grads.len() != self.m.len() {
            return Err(NnError::ShapeMismatch {
                expected: self.m.len(),
                got: grads.len().min(params.len()),
            });
        }
        self.t += 1;
        let t = self.t as i32;
        let c1 = 1.0 - self.beta1.powi(t);
        let c2 = 1.0 - self.beta2.powi(t);
        for i in 0..params.len() {
            let g = grads[i];
            self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * g;
            self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * g * g;
            let m_hat = self.m[i] / c1;
            let v_hat = self.v[i] / c2;
            params[i] -= self.lr * m_hat / (v_hat.sqrt() + self.eps);
        }
        Ok(())
    }
}

/// Rescales `grads` so their L2 norm is at most `max_norm`; returns the norm
/// before clipping.
pub fn clip_grad_norm(grads: &mut [f64], max_norm: f64) -> f64 {
    let norm = grads.iter().map(|g| g * g).sum::<f64>().sqrt();
    if norm > max_norm && norm > 0.0 {
        let k = max_norm / norm;
        grads.iter_mut().for_each(|g| *g *= k);
    }
    norm
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    pub worst_param: Option<usize>,
    /// Parameters whose perturbation flips a ReLU; the loss is not
    /// differentiable there, so they are left out.
    pub skipped: usize,
    pub passed: bool,
}

/// Relative error with an absolute floor for near-zero gradients.
pub fn relative_error(a: f64, b: f64) -> f64 {
    let scale = a.abs().max(b.abs());
    if scale < 1e-8 {
        (a - b).abs()
    } else {
        (a - b).abs() / scale
    }
}

/// Default probe weights for the scalar loss `Σ c_j · out_j`.
pub fn probe_weights(n: usize) -> Vec<f64> {
    (0..n).map(|j| 1.0 + j as f64 / n as f64).collect()
}

/// Compares given analytic parameter gradients of `Σ c_j · out_j` against
/// central differences with step `h`.
pub fn compare_gradients(
    net: &Mlp,
    input: &[f64],
    probe: &[f64],
    analytic: &[f64],
    h: f64,
    tolerance: f64,
) -> Result<GradCheckReport, NnError> {
    if analytic.len() != net.n_params() {
        return Err(NnError::ShapeMismatch {
            expected: net.n_params(),
            got: analytic.len(),
        });
    }
    let loss = |n: &Mlp| -> Result<f64, NnError> {
        Ok(n.forward(input)?.iter().zip(probe).map(|(o, c)| o * c).sum())
    };
    let mut probe_net = net.clone();
    let mut worst = (0.0, None);
    let mut skipped = 0;
    for i in 0..net.n_params() {
        let orig = probe_net.params[i];
        probe_net.params[i] = orig + h;
        let up = loss(&probe_net)?;
        let up_pattern = probe_net.relu_pattern(input)?;
        probe_net.params[i] = orig - h;
        let down = loss(&probe_net)?;
        let down_pattern = probe_net.relu_pattern(input)?;
        probe_net.params[i] = orig;
        if up_pattern != down_pattern {
            skipped += 1;
            continue;
        }
        let numeric = (up - down) / (2.0 * h);
        let err = relative_error(analytic[i], numeric);
        if err > worst.0 {
            worst = (err, Some(i));
        }
    }
    Ok(GradCheckReport {
        max_rel_error: worst.0,
        worst_param: worst.1,
        skipped,
        passed: worst.0 < tolerance,
    })
}

/// Checks [`Mlp::backward`] against central differences (h = 1e-4) over all
/// parameters.
pub fn finite_diff_check(net: &Mlp, input: &[f64], tolerance: f64) -> Result<GradCheckReport, NnError> {
    let probe = probe_weights(net.output_len());
    let grads = net.backward(input, &probe)?;
    compare_gradients(net, input, &probe, &grads.params, 1e-4, tolerance)
}

#[cfg(test)]
mod tests;
