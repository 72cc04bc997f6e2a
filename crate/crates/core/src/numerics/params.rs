//! Uniform, name-addressed access to the tensors of a parameter set.
//!
//! Optimizer steps, soft target updates, checkpointing and gradient
//! checking all iterate parameters the same way: as an ordered list of
//! named flat slices. Gradient containers reuse the parameter struct
//! type itself, so shapes always mirror parameters exactly.

use crate::error::{CoreError, Result};
use crate::numerics::tensor::{Tensor1, Tensor2};

pub struct ParamView<'a> {
    pub name: String,
    pub dims: Vec<usize>,
    pub data: &'a [f64],
}

pub struct ParamViewMut<'a> {
    pub name: String,
    pub dims: Vec<usize>,
    pub data: &'a mut [f64],
}

fn join(prefix: &str, name: &str) -> String {
    if prefix.is_empty() {
        name.to_string()
    } else {
        format!("{prefix}.{name}")
    }
}

pub trait ParamSet {
    fn collect<'a>(&'a self, prefix: &str, out: &mut Vec<ParamView<'a>>);
    fn collect_mut<'a>(&'a mut self, prefix: &str, out: &mut Vec<ParamViewMut<'a>>);

    fn views(&self) -> Vec<ParamView<'_>> {
        let mut v = Vec::new();
        self.collect("", &mut v);
        v
    }

    fn views_mut(&mut self) -> Vec<ParamViewMut<'_>> {
        let mut v = Vec::new();
        self.collect_mut("", &mut v);
        v
    }

    fn num_params(&self) -> usize {
        self.views().iter().map(|v| v.data.len()).sum()
    }

    fn zero_fill(&mut self) {
        for v in self.views_mut() {
            v.data.fill(0.0);
        }
    }

    /// Same-shaped, all-zero copy — the canonical gradient container.
    fn zeros_like(&self) -> Self
    where
        Self: Clone + Sized,
    {
        let mut c = self.clone();
        c.zero_fill();
        c
    }

    fn l2_norm(&self) -> f64 {
        self.views()
            .iter()
            .flat_map(|v| v.data.iter())
            .map(|x| x * x)
            .sum::<f64>()
            .sqrt()
    }

    fn check_finite(&self, what: &'static str) -> Result<()> {
        for v in self.views() {
            if !v.data.iter().all(|x| x.is_finite()) {
                return Err(CoreError::NonFinite(what));
            }
        }
        Ok(())
    }
}

impl ParamSet for Tensor1 {
    fn collect<'a>(&'a self, prefix: &str, out: &mut Vec<ParamView<'a>>) {
        out.push(ParamView {
            name: prefix.to_string(),
            dims: vec![self.len()],
            data: self.data(),
        });
    }

    fn collect_mut<'a>(&'a mut self, prefix: &str, out: &mut Vec<ParamViewMut<'a>>) {
        let dims = vec![self.len()];
        out.push(ParamViewMut {
            name: prefix.to_string(),
            dims,
            data: self.data_mut(),
        });
    }
}

impl ParamSet for Tensor2 {
    fn collect<'a>(&'a self, prefix: &str, out: &mut Vec<ParamView<'a>>) {
        out.push(ParamView {
            name: prefix.to_string(),
            dims: vec![self.rows(), self.cols()],
            data: self.data(),
        });
    }

    fn collect_mut<'a>(&'a mut self, prefix: &str, out: &mut Vec<ParamViewMut<'a>>) {
        let dims = vec![self.rows(), self.cols()];
        out.push(ParamViewMut {
            name: prefix.to_string(),
            dims,
            data: self.data_mut(),
        });
    }
}

/// Expands to `collect`/`collect_mut` impls that visit the listed fields
/// in order, prefixing each with its field name.
macro_rules! impl_param_set {
    ($ty:ty { $($field:ident),+ $(,)? }) => {
        impl $crate::numerics::params::ParamSet for $ty {
            fn collect<'a>(
                &'a self,
                prefix: &str,
                out: &mut Vec<$crate::numerics::params::ParamView<'a>>,
            ) {
                $(self.$field.collect(
                    &$crate::numerics::params::join_prefix(prefix, stringify!($field)),
                    out,
                );)+
            }

            fn collect_mut<'a>(
                &'a mut self,
                prefix: &str,
                out: &mut Vec<$crate::numerics::params::ParamViewMut<'a>>,
            ) {
                $(self.$field.collect_mut(
                    &$crate::numerics::params::join_prefix(prefix, stringify!($field)),
                    out,
                );)+
            }
        }
    };
}
pub(crate) use impl_param_set;

pub fn join_prefix(prefix: &str, name: &str) -> String {
    join(prefix, name)
}

impl<T: ParamSet> ParamSet for Vec<T> {
    fn collect<'a>(&'a self, prefix: &str, out: &mut Vec<ParamView<'a>>) {
        for (i, item) in self.iter().enumerate() {
            item.collect(&join(prefix, &i.to_string()), out);
        }
    }

    fn collect_mut<'a>(&'a mut self, prefix: &str, out: &mut Vec<ParamViewMut<'a>>) {
        for (i, item) in self.iter_mut().enumerate() {
            item.collect_mut(&join(prefix, &i.to_string()), out);
        }
    }
}

/// θ' ← τθ + (1−τ)θ', elementwise over matching named tensors.
pub fn soft_update<P: ParamSet>(online: &P, target: &mut P, tau: f64) -> Result<()> {
    let src = online.views();
    let mut dst = target.views_mut();
    if src.len() != dst.len() {
        return Err(CoreError::ShapeMismatch {
            op: "soft_update",
            expected: src.len().to_string(),
            got: dst.len().to_string(),
        });
    }
    for (s, d) in src.iter().zip(dst.iter_mut()) {
        if s.name != d.name || s.dims != d.dims {
            return Err(CoreError::ShapeMismatch {
                op: "soft_update",
                expected: format!("{} {:?}", s.name, s.dims),
                got: format!("{} {:?}", d.name, d.dims),
            });
        }
        for (t, o) in d.data.iter_mut().zip(s.data.iter()) {
            *t = tau * o + (1.0 - tau) * *t;
        }
    }
    Ok(())
}
