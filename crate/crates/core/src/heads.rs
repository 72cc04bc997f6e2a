//! Network heads placed behind the shared encoders: bounded tanh
//! generation layers (goals, actions) and two-layer ReLU evaluation
//! layers (the Q heads), each with analytic backward passes.

use rand::Rng;

use crate::error::{CoreError, Result};
use crate::numerics::params::impl_param_set;
use crate::numerics::{linear, relu, Tensor1, Tensor2};

/// Network sizing shared across the system.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NetDims {
    /// Item embedding dimension d (also goal/action dimension).
    pub embed_dim: usize,
    /// GRU hidden size.
    pub gru_hidden: usize,
    /// Encoder output (state) dimension.
    pub state_dim: usize,
    /// Hidden width of the evaluation layers.
    pub eval_hidden: usize,
}

/// out = B · tanh(W s + b), coordinates strictly inside (−B, B).
#[derive(Debug, Clone)]
pub struct BoundedHead {
    pub w: Tensor2,
    pub b: Tensor1,
}

impl_param_set!(BoundedHead { w, b });

impl BoundedHead {
    pub fn zeros(out_dim: usize, state_dim: usize) -> Self {
        BoundedHead {
            w: Tensor2::zeros(out_dim, state_dim),
            b: Tensor1::zeros(out_dim),
        }
    }

    pub fn random<R: Rng>(out_dim: usize, state_dim: usize, rng: &mut R) -> Self {
        let mut h = Self::zeros(out_dim, state_dim);
        let s = 1.0 / (state_dim as f64).sqrt();
        for v in h.w.data_mut() {
            *v = rng.random_range(-s..s);
        }
        h
    }

    pub fn forward(&self, s: &Tensor1, bound: f64) -> Result<(Tensor1, BoundedCache)> {
        let pre = linear(s, &self.w, &self.b)?;
        let out = Tensor1::from_vec(pre.data().iter().map(|v| bound * v.tanh()).collect());
        Ok((
            out,
            BoundedCache {
                s: s.clone(),
                pre,
            },
        ))
    }

    /// Accumulates dW, db into `grads`; returns dL/ds.
    pub fn backward(
        &self,
        dout: &Tensor1,
        cache: &BoundedCache,
        bound: f64,
        grads: &mut BoundedHead,
    ) -> Result<Tensor1> {
        let dpre = Tensor1::from_vec(
            dout.data()
                .iter()
                .zip(cache.pre.data())
                .map(|(&d, &p)| {
                    let t = p.tanh();
                    d * bound * (1.0 - t * t)
                })
                .collect(),
        );
        grads.w.add_outer(&dpre, &cache.s);
        grads.b.add_assign(&dpre);
        self.w.matvec_t(&dpre)
    }
}

#[derive(Debug, Clone)]
pub struct BoundedCache {
    s: Tensor1,
    pre: Tensor1,
}

/// q = relu(w_q · relu(W_s s + W_in x + b1) + b_q), a scalar in [0, ∞).
#[derive(Debug, Clone)]
pub struct EvalHead {
    pub w_s: Tensor2,
    pub w_in: Tensor2,
    pub b1: Tensor1,
    pub w_q: Tensor1,
    pub b_q: Tensor1,
}

impl_param_set!(EvalHead { w_s, w_in, b1, w_q, b_q });

impl EvalHead {
    pub fn zeros(state_dim: usize, in_dim: usize, hidden: usize) -> Self {
        EvalHead {
            w_s: Tensor2::zeros(hidden, state_dim),
            w_in: Tensor2::zeros(hidden, in_dim),
            b1: Tensor1::zeros(hidden),
            w_q: Tensor1::zeros(hidden),
            b_q: Tensor1::zeros(1),
        }
    }

    pub fn random<R: Rng>(state_dim: usize, in_dim: usize, hidden: usize, rng: &mut R) -> Self {
        let mut h = Self::zeros(state_dim, in_dim, hidden);
        let s_s = 1.0 / (state_dim as f64).sqrt();
        let s_i = 1.0 / (in_dim as f64).sqrt();
        let s_h = 1.0 / (hidden as f64).sqrt();
        for v in h.w_s.data_mut() {
            *v = rng.random_range(-s_s..s_s);
        }
        for v in h.w_in.data_mut() {
            *v = rng.random_range(-s_i..s_i);
        }
        for v in h.w_q.data_mut() {
            *v = rng.random_range(-s_h..s_h);
        }
        // A small positive output bias keeps the outer ReLU initially
        // active, so TD errors can propagate from the start.
        h.b_q[0] = 0.1;
        h
    }

    pub fn forward(&self, s: &Tensor1, x: &Tensor1) -> Result<(f64, EvalCache)> {
        let mut pre1 = self.w_s.matvec(s)?;
        pre1.add_assign(&self.w_in.matvec(x)?);
        pre1.add_assign(&self.b1);
        let h1 = Tensor1::from_vec(pre1.data().iter().map(|&v| relu(v)).collect());
        let pre2 = self.w_q.dot(&h1)? + self.b_q[0];
        let q = relu(pre2);
        Ok((
            q,
            EvalCache {
                s: s.clone(),
                x: x.clone(),
                pre1,
                h1,
                pre2,
            },
        ))
    }

    /// Accumulates parameter gradients into `grads`; returns (ds, dx).
    pub fn backward(
        &self,
        dq: f64,
        cache: &EvalCache,
        grads: &mut EvalHead,
    ) -> Result<(Tensor1, Tensor1)> {
        let dpre2 = if cache.pre2 > 0.0 { dq } else { 0.0 };
        for (g, h) in grads.w_q.data_mut().iter_mut().zip(cache.h1.data()) {
            *g += dpre2 * h;
        }
        grads.b_q[0] += dpre2;
        let dh1 = self.w_q.scale(dpre2);
        let dpre1 = Tensor1::from_vec(
            dh1.data()
                .iter()
                .zip(cache.pre1.data())
                .map(|(&d, &p)| if p > 0.0 { d } else { 0.0 })
                .collect(),
        );
        grads.w_s.add_outer(&dpre1, &cache.s);
        grads.w_in.add_outer(&dpre1, &cache.x);
        grads.b1.add_assign(&dpre1);
        let ds = self.w_s.matvec_t(&dpre1)?;
        let dx = self.w_in.matvec_t(&dpre1)?;
        Ok((ds, dx))
    }
}

impl EvalHead {
    /// Score many inputs against one state, reusing the state term of
    /// the hidden layer.
    pub fn score_many<'a>(
        &self,
        s: &Tensor1,
        inputs: impl Iterator<Item = &'a Tensor1>,
    ) -> Result<Vec<f64>> {
        let mut base = self.w_s.matvec(s)?;
        base.add_assign(&self.b1);
        let mut out = Vec::new();
        for x in inputs {
            let mut pre1 = self.w_in.matvec(x)?;
            pre1.add_assign(&base);
            let h1 = crate::numerics::relu_vec(&pre1);
            out.push(relu(self.w_q.dot(&h1)? + self.b_q[0]));
        }
        Ok(out)
    }
}

#[derive(Debug, Clone)]
pub struct EvalCache {
    s: Tensor1,
    x: Tensor1,
    pre1: Tensor1,
    h1: Tensor1,
    pre2: f64,
}

/// Clamp into the open interval (−bound, bound).
pub fn clamp_open(v: f64, bound: f64) -> f64 {
    let lim = bound * (1.0 - 1e-12);
    v.clamp(-lim, lim)
}

/// Validate a 0-based head index against the head count.
pub fn check_head_index(index: usize, count: usize) -> Result<()> {
    if index >= count {
        return Err(CoreError::IndexOutOfRange {
            index,
            limit: count,
        });
    }
    Ok(())
}
