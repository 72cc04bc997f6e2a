//! Central finite-difference verification of analytic gradients.
//!
//! Every backward pass in this crate is hand-derived; this checker is
//! the independent referee. It perturbs one parameter coordinate at a
//! time, so it is only meant for small test-sized networks.

use crate::error::{CoreError, Result};
use crate::numerics::params::ParamSet;

#[derive(Debug, Clone)]
pub struct GradCheckReport {
    pub max_rel_err: f64,
    pub worst_param: String,
    pub worst_index: usize,
    pub coords_checked: usize,
}

/// Relative error with a unit floor so structurally-zero coordinates are
/// compared absolutely instead of blowing up.
fn rel_err(a: f64, n: f64) -> f64 {
    (a - n).abs() / 1.0_f64.max(a.abs()).max(n.abs())
}

/// Compare `analytic` (same-shaped gradient of `loss` at `params`)
/// against central differences (f(θ+ε) − f(θ−ε)) / 2ε per coordinate.
pub fn grad_check<P, F>(
    params: &mut P,
    analytic: &P,
    mut loss: F,
    eps: f64,
) -> Result<GradCheckReport>
where
    P: ParamSet,
    F: FnMut(&P) -> Result<f64>,
{
    if !(eps > 0.0 && eps <= 1e-2) {
        return Err(CoreError::InvalidParameter(format!(
            "grad_check eps must be in (0, 1e-2], got {eps}"
        )));
    }

    let layout: Vec<(String, usize)> = analytic
        .views()
        .iter()
        .map(|v| (v.name.clone(), v.data.len()))
        .collect();
    let grads: Vec<Vec<f64>> = analytic.views().iter().map(|v| v.data.to_vec()).collect();

    let mut report = GradCheckReport {
        max_rel_err: 0.0,
        worst_param: String::new(),
        worst_index: 0,
        coords_checked: 0,
    };

    for (ti, (name, len)) in layout.iter().enumerate() {
        for k in 0..*len {
            let orig = {
                let mut views = params.views_mut();
                let v = &mut views[ti];
                debug_assert_eq!(&v.name, name);
                let orig = v.data[k];
                v.data[k] = orig + eps;
                orig
            };
            let f_plus = loss(params)?;
            {
                let mut views = params.views_mut();
                views[ti].data[k] = orig - eps;
            }
            let f_minus = loss(params)?;
            {
                let mut views = params.views_mut();
                views[ti].data[k] = orig;
            }
            if !f_plus.is_finite() || !f_minus.is_finite() {
                return Err(CoreError::NonFinite("grad_check loss"));
            }
            let numeric = (f_plus - f_minus) / (2.0 * eps);
            let err = rel_err(grads[ti][k], numeric);
            report.coords_checked += 1;
            if err > report.max_rel_err {
                report.max_rel_err = err;
                report.worst_param = name.clone();
                report.worst_index = k;
            }
        }
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::params::impl_param_set;
    use crate::numerics::tensor::{linear, Tensor1, Tensor2};
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha12Rng;

    #[derive(Clone)]
    struct Lin {
        w: Tensor2,
        b: Tensor1,
    }
    impl_param_set!(Lin { w, b });

    // loss(W, b) = Σ (Wx + b)
    fn lin_loss(p: &Lin, x: &Tensor1) -> Result<f64> {
        Ok(linear(x, &p.w, &p.b)?.data().iter().sum())
    }

    #[test]
    fn linear_network_is_exact() {
        let mut rng = ChaCha12Rng::seed_from_u64(5);
        let mut w = Tensor2::zeros(4, 3);
        for v in w.data_mut() {
            *v = rng.random_range(-1.0..1.0);
        }
        let b = Tensor1::from_vec((0..4).map(|_| rng.random_range(-1.0..1.0)).collect());
        let x = Tensor1::from_vec((0..3).map(|_| rng.random_range(-1.0..1.0)).collect());

        // d(Σ y)/dW = 1 xᵀ, d/db = 1.
        let mut analytic = Lin {
            w: Tensor2::zeros(4, 3),
            b: Tensor1::zeros(4),
        };
        let ones = Tensor1::from_vec(vec![1.0; 4]);
        analytic.w.add_outer(&ones, &x);
        for v in analytic.b.data_mut() {
            *v = 1.0;
        }

        let mut params = Lin { w, b };
        let report = grad_check(&mut params, &analytic, |p| lin_loss(p, &x), 1e-5).unwrap();
        assert!(report.max_rel_err <= 1e-8, "err = {}", report.max_rel_err);
        assert_eq!(report.coords_checked, 16);
    }

    #[test]
    fn detects_a_wrong_gradient() {
        let x = Tensor1::from_slice(&[1.0, 2.0, 3.0]);
        let mut params = Lin {
            w: Tensor2::zeros(2, 3),
            b: Tensor1::zeros(2),
        };
        // Correct gradient everywhere except one corrupted coordinate.
        let mut analytic = params.zeros_like();
        let ones = Tensor1::from_vec(vec![1.0; 2]);
        analytic.w.add_outer(&ones, &x);
        for v in analytic.b.data_mut() {
            *v = 1.0;
        }
        analytic.b[0] += 7.0;
        let report = grad_check(&mut params, &analytic, |p| lin_loss(p, &x), 1e-5).unwrap();
        assert!(report.max_rel_err > 0.8);
        assert_eq!(report.worst_param, "b");
        assert_eq!(report.worst_index, 0);
    }

    #[test]
    fn eps_out_of_range_rejected() {
        let mut params = Lin {
            w: Tensor2::zeros(1, 1),
            b: Tensor1::zeros(1),
        };
        let analytic = params.zeros_like();
        assert!(grad_check(&mut params, &analytic, |_| Ok(0.0), 0.5).is_err());
        assert!(grad_check(&mut params, &analytic, |_| Ok(0.0), 0.0).is_err());
    }
}
