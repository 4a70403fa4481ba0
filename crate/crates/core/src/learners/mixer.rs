//! QMIX-lite monotonic mixing network.
//!
//! Hypernetworks map the global state to mixing weights, which pass through
//! an absolute value so `∂q_tot/∂q_i ≥ 0` everywhere.
//!
//! Two-layer form: `h = elu(q·|W1(s)| + b1(s))`, `q_tot = h·|w2(s)| + V(s)`.
//! One-layer form: `q_tot = Σ_i |w_i(s)|·q_i + b(s)`.

use ndarray::{Array2, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::nn::{ForwardCache, Mlp, NnError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MixerKind {
    TwoLayer,
    OneLayer,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QmixMixer {
    pub kind: MixerKind,
    pub n_agents: usize,
    pub state_len: usize,
    pub embed: usize,
    pub hyper_w1: Mlp,
    pub hyper_b1: Mlp,
    pub hyper_w2: Option<Mlp>,
    pub value: Option<Mlp>,
}

/// Intermediate values of a batched mixer forward pass.
#[derive(Debug, Clone)]
pub struct MixerCache {
    q: Array2<f64>,
    w1: ForwardCache,
    b1: ForwardCache,
    w2: Option<ForwardCache>,
    value: Option<ForwardCache>,
    /// Two-layer only: pre-activations of the hidden mixing layer.
    pre: Option<Array2<f64>>,
}

fn elu(x: f64) -> f64 {
    if x > 0.0 {
        x
    } else {
        x.exp_m1()
    }
}

fn elu_grad(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else {
        x.exp()
    }
}

fn sign(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
    }
}

impl QmixMixer {
    pub fn new(kind: MixerKind, n_agents: usize, state_len: usize, embed: usize, seed: u64) -> Result<Self, NnError> {
        let s = state_len;
        Ok(match kind {
            MixerKind::TwoLayer => QmixMixer {
                kind,
                n_agents,
                state_len,
                embed,
                hyper_w1: Mlp::init(&[s, n_agents * embed], seed)?,
                hyper_b1: Mlp::init(&[s, embed], seed.wrapping_add(1))?,
                hyper_w2: Some(Mlp::init(&[s, embed], seed.wrapping_add(2))?),
                value: Some(Mlp::init(&[s, embed, 1], seed.wrapping_add(3))?),
            },
            MixerKind::OneLayer => QmixMixer {
                kind,
                n_agents,
                state_len,
                embed,
                hyper_w1: Mlp::init(&[s, n_agents], seed)?,
                hyper_b1: Mlp::init(&[s, 1], seed.wrapping_add(1))?,
                hyper_w2: None,
                value: None,
            },
        })
    }

    /// One-layer mixer whose weights are 1 and bias 0 for every state, i.e.
    /// an additive (VDN) sum.
    pub fn identity(n_agents: usize, state_len: usize) -> Result<Self, NnError> {
        let mut m = QmixMixer::new(MixerKind::OneLayer, n_agents, state_len, 1, 0)?;
        m.hyper_w1.params_mut().fill(0.0);
        m.hyper_w1.bias_mut(0).fill(1.0);
        m.hyper_b1.params_mut().fill(0.0);
        Ok(m)
    }

    fn nets(&self) -> Vec<&Mlp> {
        let mut v = vec![&self.hyper_w1, &self.hyper_b1];
        v.extend(self.hyper_w2.iter());
        v.extend(self.value.iter());
        v
    }

    fn nets_mut(&mut self) -> Vec<&mut Mlp> {
        let mut v = vec![&mut self.hyper_w1, &mut self.hyper_b1];
        v.extend(self.hyper_w2.iter_mut());
        v.extend(self.value.iter_mut());
        v
    }

    pub fn n_params(&self) -> usize {
        self.nets().iter().map(|n| n.n_params()).sum()
    }

    pub fn params_flat(&self) -> Vec<f64> {
        self.nets().iter().flat_map(|n| n.params().iter().copied()).collect()
    }

    pub fn set_params_flat(&mut self, flat: &[f64]) {
        let mut off = 0;
        for net in self.nets_mut() {
            let n = net.n_params();
            net.params_mut().copy_from_slice(&flat[off..off + n]);
            off += n;
        }
    }

    /// Batched forward: `q` is `N × n_agents`, `states` is `N × state_len`.
    pub fn forward_batch(
        &self,
        q: ArrayView2<'_, f64>,
        states: ArrayView2<'_, f64>,
    ) -> Result<(Vec<f64>, MixerCache), NnError> {
        if q.ncols() != self.n_agents {
            return Err(NnError::ShapeMismatch {
                expected: self.n_agents,
                got: q.ncols(),
            });
        }
        if q.nrows() != states.nrows() {
            return Err(NnError::ShapeMismatch {
                expected: q.nrows(),
                got: states.nrows(),
            });
        }
        let n = q.nrows();
        let w1 = self.hyper_w1.forward_batch(states)?;
        let b1 = self.hyper_b1.forward_batch(states)?;
        let mut out = vec![0.0; n];
        match self.kind {
            MixerKind::OneLayer => {
                let (w, b) = (w1.output(), b1.output());
                for r in 0..n {
                    let mut acc = 0.0;
                    for i in 0..self.n_agents {
                        acc += w[[r, i]].abs() * q[[r, i]];
                    }
                    out[r] = acc + b[[r, 0]];
                }
                let cache = MixerCache {
                    q: q.to_owned(),
                    w1,
                    b1,
                    w2: None,
                    value: None,
                    pre: None,
                };
                Ok((out, cache))
            }
            MixerKind::TwoLayer => {
                let e = self.embed;
                let w2 = self.hyper_w2.as_ref().expect("two-layer").forward_batch(states)?;
                let value = self.value.as_ref().expect("two-layer").forward_batch(states)?;
                let mut pre = Array2::zeros((n, e));
                let (w1o, b1o, w2o, vo) = (w1.output(), b1.output(), w2.output(), value.output());
                for r in 0..n {
                    let mut acc = vo[[r, 0]];
                    for j in 0..e {
                        let mut z = b1o[[r, j]];
                        for i in 0..self.n_agents {
                            z += q[[r, i]] * w1o[[r, i * e + j]].abs();
                        }
                        pre[[r, j]] = z;
                        acc += elu(z) * w2o[[r, j]].abs();
                    }
                    out[r] = acc;
                }
                let cache = MixerCache {
                    q: q.to_owned(),
                    w1,
                    b1,
                    w2: Some(w2),
                    value: Some(value),
                    pre: Some(pre),
                };
                Ok((out, cache))
            }
        }
    }

    /// Reverse pass for `dL/dq_tot` per row. Returns parameter gradients in
    /// [`QmixMixer::params_flat`] order and `dL/dq` (`N × n_agents`).
    pub fn backward_batch(&self, cache: &MixerCache, grad: &[f64]) -> Result<(Vec<f64>, Array2<f64>), NnError> {
        let n = cache.q.nrows();
        if grad.len() != n {
            return Err(NnError::ShapeMismatch {
                expected: n,
                got: grad.len(),
            });
        }
        let na = self.n_agents;
        let mut dq = Array2::zeros((n, na));
        let mut grads = Vec::with_capacity(self.n_params());
        match self.kind {
            MixerKind::OneLayer => {
                let w = cache.w1.output();
                let mut dw = Array2::zeros((n, na));
                let mut db = Array2::zeros((n, 1));
                for r in 0..n {
                    let g = grad[r];
                    for i in 0..na {
                        dq[[r, i]] = g * w[[r, i]].abs();
                        dw[[r, i]] = g * cache.q[[r, i]] * sign(w[[r, i]]);
                    }
                    db[[r, 0]] = g;
                }
                grads.extend(self.hyper_w1.backward_batch(&cache.w1, dw.view())?.0);
                grads.extend(self.hyper_b1.backward_batch(&cache.b1, db.view())?.0);
            }
            MixerKind::TwoLayer => {
                let e = self.embed;
                let (w1o, w2c, vc) = (
                    cache.w1.output(),
                    cache.w2.as_ref().expect("two-layer"),
                    cache.value.as_ref().expect("two-layer"),
                );
                let w2o = w2c.output();
                let pre = cache.pre.as_ref().expect("two-layer");
                let mut dw1 = Array2::zeros((n, na * e));
                let mut db1 = Array2::zeros((n, e));
                let mut dw2 = Array2::zeros((n, e));
                let mut dv = Array2::zeros((n, 1));
                for r in 0..n {
                    let g = grad[r];
                    dv[[r, 0]] = g;
                    for j in 0..e {
                        let z = pre[[r, j]];
                        let w2 = w2o[[r, j]];
                        dw2[[r, j]] = g * elu(z) * sign(w2);
                        let dz = g * w2.abs() * elu_grad(z);
                        db1[[r, j]] = dz;
                        for i in 0..na {
                            let w = w1o[[r, i * e + j]];
                            dq[[r, i]] += dz * w.abs();
                            dw1[[r, i * e + j]] = dz * cache.q[[r, i]] * sign(w);
                        }
                    }
                }
                grads.extend(self.hyper_w1.backward_batch(&cache.w1, dw1.view())?.0);
                grads.extend(self.hyper_b1.backward_batch(&cache.b1, db1.view())?.0);
                let w2net = self.hyper_w2.as_ref().expect("two-layer");
                grads.extend(w2net.backward_batch(w2c, dw2.view())?.0);
                let vnet = self.value.as_ref().expect("two-layer");
                grads.extend(vnet.backward_batch(vc, dv.view())?.0);
            }
        }
        Ok((grads, dq))
    }

    /// Single-sample mix.
    pub fn mix(&self, q: &[f64], state: &[f64]) -> Result<f64, NnError> {
        if state.len() != self.state_len {
            return Err(NnError::ShapeMismatch {
                expected: self.state_len,
                got: state.len(),
            });
        }
        let qv = ArrayView2::from_shape((1, q.len()), q).expect("row");
        let sv = ArrayView2::from_shape((1, state.len()), state).expect("row");
        Ok(self.forward_batch(qv, sv)?.0[0])
    }
}
