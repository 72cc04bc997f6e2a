//! GRU cell with a hand-derived backward pass.
//!
//! Convention: the update gate mixes toward the candidate state,
//!   z = σ(W_z x + U_z h + b_z)
//!   r = σ(W_r x + U_r h + b_r)
//!   ĥ = tanh(W_h x + U_h (r ⊙ h) + b_h)
//!   h' = (1 − z) ⊙ h + z ⊙ ĥ
//! so a saturated-closed update gate (z → 0) passes the previous hidden
//! state through unchanged.

use rand::Rng;

use crate::error::{CoreError, Result};
use crate::numerics::params::impl_param_set;
use crate::numerics::tensor::{sigmoid, Tensor1, Tensor2};

#[derive(Debug, Clone)]
pub struct GruCellParams {
    pub w_z: Tensor2,
    pub u_z: Tensor2,
    pub b_z: Tensor1,
    pub w_r: Tensor2,
    pub u_r: Tensor2,
    pub b_r: Tensor1,
    pub w_h: Tensor2,
    pub u_h: Tensor2,
    pub b_h: Tensor1,
}

impl_param_set!(GruCellParams { w_z, u_z, b_z, w_r, u_r, b_r, w_h, u_h, b_h });

impl GruCellParams {
    pub fn zeros(input_dim: usize, hidden_dim: usize) -> Self {
        GruCellParams {
            w_z: Tensor2::zeros(hidden_dim, input_dim),
            u_z: Tensor2::zeros(hidden_dim, hidden_dim),
            b_z: Tensor1::zeros(hidden_dim),
            w_r: Tensor2::zeros(hidden_dim, input_dim),
            u_r: Tensor2::zeros(hidden_dim, hidden_dim),
            b_r: Tensor1::zeros(hidden_dim),
            w_h: Tensor2::zeros(hidden_dim, input_dim),
            u_h: Tensor2::zeros(hidden_dim, hidden_dim),
            b_h: Tensor1::zeros(hidden_dim),
        }
    }

    pub fn random<R: Rng>(input_dim: usize, hidden_dim: usize, rng: &mut R) -> Self {
        let mut p = Self::zeros(input_dim, hidden_dim);
        let s_in = 1.0 / (input_dim as f64).sqrt();
        let s_hid = 1.0 / (hidden_dim as f64).sqrt();
        for (m, s) in [
            (&mut p.w_z, s_in),
            (&mut p.w_r, s_in),
            (&mut p.w_h, s_in),
            (&mut p.u_z, s_hid),
            (&mut p.u_r, s_hid),
            (&mut p.u_h, s_hid),
        ] {
            for v in m.data_mut() {
                *v = rng.random_range(-s..s);
            }
        }
        p
    }

    pub fn input_dim(&self) -> usize {
        self.w_z.cols()
    }

    pub fn hidden_dim(&self) -> usize {
        self.w_z.rows()
    }

    /// All six matrices and three biases must agree on (H, d).
    pub fn validate(&self) -> Result<()> {
        let h = self.hidden_dim();
        let d = self.input_dim();
        let ok = [&self.w_z, &self.w_r, &self.w_h]
            .iter()
            .all(|m| m.rows() == h && m.cols() == d)
            && [&self.u_z, &self.u_r, &self.u_h]
                .iter()
                .all(|m| m.rows() == h && m.cols() == h)
            && [&self.b_z, &self.b_r, &self.b_h]
                .iter()
                .all(|b| b.len() == h);
        if ok {
            Ok(())
        } else {
            Err(CoreError::ShapeMismatch {
                op: "gru_params",
                expected: format!("H={h}, d={d}"),
                got: "inconsistent gate shapes".into(),
            })
        }
    }
}

/// Intermediates saved by the forward pass for the backward pass.
#[derive(Debug, Clone)]
pub struct GruStepCache {
    pub x: Tensor1,
    pub h_prev: Tensor1,
    pub z: Tensor1,
    pub r: Tensor1,
    pub rh: Tensor1,
    pub cand: Tensor1,
}

/// One GRU step; returns the new hidden state.
pub fn gru_step(x: &Tensor1, h_prev: &Tensor1, p: &GruCellParams) -> Result<Tensor1> {
    Ok(gru_step_cached(x, h_prev, p)?.0)
}

pub fn gru_step_cached(
    x: &Tensor1,
    h_prev: &Tensor1,
    p: &GruCellParams,
) -> Result<(Tensor1, GruStepCache)> {
    if x.len() != p.input_dim() || h_prev.len() != p.hidden_dim() {
        return Err(CoreError::ShapeMismatch {
            op: "gru_step",
            expected: format!("x[{}], h[{}]", p.input_dim(), p.hidden_dim()),
            got: format!("x[{}], h[{}]", x.len(), h_prev.len()),
        });
    }
    let h = p.hidden_dim();

    let mut az = p.w_z.matvec(x)?;
    az.add_assign(&p.u_z.matvec(h_prev)?);
    az.add_assign(&p.b_z);
    let z = Tensor1::from_vec(az.data().iter().map(|&v| sigmoid(v)).collect());

    let mut ar = p.w_r.matvec(x)?;
    ar.add_assign(&p.u_r.matvec(h_prev)?);
    ar.add_assign(&p.b_r);
    let r = Tensor1::from_vec(ar.data().iter().map(|&v| sigmoid(v)).collect());

    let rh = Tensor1::from_vec(
        r.data()
            .iter()
            .zip(h_prev.data())
            .map(|(a, b)| a * b)
            .collect(),
    );

    let mut ah = p.w_h.matvec(x)?;
    ah.add_assign(&p.u_h.matvec(&rh)?);
    ah.add_assign(&p.b_h);
    let cand = Tensor1::from_vec(ah.data().iter().map(|v| v.tanh()).collect());

    let mut h_new = Tensor1::zeros(h);
    for i in 0..h {
        h_new[i] = (1.0 - z[i]) * h_prev[i] + z[i] * cand[i];
    }

    let cache = GruStepCache {
        x: x.clone(),
        h_prev: h_prev.clone(),
        z,
        r,
        rh,
        cand,
    };
    Ok((h_new, cache))
}

/// Backward through one GRU step. Accumulates parameter gradients into
/// `grads` and returns (dL/dx, dL/dh_prev).
pub fn gru_step_backward(
    dh_new: &Tensor1,
    cache: &GruStepCache,
    p: &GruCellParams,
    grads: &mut GruCellParams,
) -> Result<(Tensor1, Tensor1)> {
    let h = p.hidden_dim();
    let GruStepCache {
        x,
        h_prev,
        z,
        r,
        rh,
        cand,
    } = cache;

    // h' = (1-z)⊙h + z⊙c
    let mut dz = Tensor1::zeros(h);
    let mut dc = Tensor1::zeros(h);
    let mut dh = Tensor1::zeros(h);
    for i in 0..h {
        dz[i] = dh_new[i] * (cand[i] - h_prev[i]);
        dc[i] = dh_new[i] * z[i];
        dh[i] = dh_new[i] * (1.0 - z[i]);
    }

    // c = tanh(ah)
    let dah = Tensor1::from_vec(
        dc.data()
            .iter()
            .zip(cand.data())
            .map(|(&d, &c)| d * (1.0 - c * c))
            .collect(),
    );
    grads.w_h.add_outer(&dah, x);
    grads.u_h.add_outer(&dah, rh);
    grads.b_h.add_assign(&dah);
    let drh = p.u_h.matvec_t(&dah)?;

    // rh = r ⊙ h
    let mut dr = Tensor1::zeros(h);
    for i in 0..h {
        dr[i] = drh[i] * h_prev[i];
        dh[i] += drh[i] * r[i];
    }

    // r = σ(ar)
    let dar = Tensor1::from_vec(
        dr.data()
            .iter()
            .zip(r.data())
            .map(|(&d, &rv)| d * rv * (1.0 - rv))
            .collect(),
    );
    grads.w_r.add_outer(&dar, x);
    grads.u_r.add_outer(&dar, h_prev);
    grads.b_r.add_assign(&dar);
    dh.add_assign(&p.u_r.matvec_t(&dar)?);

    // z = σ(az)
    let daz = Tensor1::from_vec(
        dz.data()
            .iter()
            .zip(z.data())
            .map(|(&d, &zv)| d * zv * (1.0 - zv))
            .collect(),
    );
    grads.w_z.add_outer(&daz, x);
    grads.u_z.add_outer(&daz, h_prev);
    grads.b_z.add_assign(&daz);
    dh.add_assign(&p.u_z.matvec_t(&daz)?);

    let mut dx = p.w_h.matvec_t(&dah)?;
    dx.add_assign(&p.w_r.matvec_t(&dar)?);
    dx.add_assign(&p.w_z.matvec_t(&daz)?);

    Ok((dx, dh))
}
