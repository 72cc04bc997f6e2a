//! Gradient application: plain SGD by default, Adam behind the same
//! interface. Every application is counted per named tensor so the
//! head-vs-encoder update frequencies can be audited.

use std::collections::{BTreeMap, HashMap};

use crate::error::{CoreError, Result};
use crate::numerics::params::{ParamView, ParamViewMut};

/// How many gradient applications each named tensor has received.
#[derive(Debug, Default, Clone)]
pub struct UpdateCounters {
    counts: BTreeMap<String, u64>,
}

impl UpdateCounters {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn bump(&mut self, name: &str) {
        *self.counts.entry(name.to_string()).or_insert(0) += 1;
    }

    pub fn get(&self, name: &str) -> u64 {
        self.counts.get(name).copied().unwrap_or(0)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, u64)> {
        self.counts.iter().map(|(k, &v)| (k.as_str(), v))
    }

    pub fn clear(&mut self) {
        self.counts.clear();
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OptimKind {
    Sgd,
    Adam,
}

impl std::str::FromStr for OptimKind {
    type Err = CoreError;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sgd" => Ok(OptimKind::Sgd),
            "adam" => Ok(OptimKind::Adam),
            other => Err(CoreError::InvalidParameter(format!(
                "unknown optimizer '{other}' (expected sgd or adam)"
            ))),
        }
    }
}

/// First/second moment state for Adam, keyed by tensor name.
#[derive(Debug, Default)]
struct AdamState {
    m: HashMap<String, Vec<f64>>,
    v: HashMap<String, Vec<f64>>,
    t: u64,
}

#[derive(Debug)]
pub struct Optimizer {
    kind: OptimKind,
    adam: AdamState,
    beta1: f64,
    beta2: f64,
    eps: f64,
}

impl Optimizer {
    pub fn new(kind: OptimKind) -> Self {
        Optimizer {
            kind,
            adam: AdamState::default(),
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }

    /// Apply one descent step θ ← θ − lr·step(g) over the given
    /// (parameter, gradient) view pairs. Names and shapes must match.
    pub fn apply(
        &mut self,
        params: &mut [ParamViewMut<'_>],
        grads: &[ParamView<'_>],
        lr: f64,
        counters: Option<&mut UpdateCounters>,
    ) -> Result<()> {
        if lr <= 0.0 {
            return Err(CoreError::InvalidParameter(format!(
                "learning rate must be positive, got {lr}"
            )));
        }
        if params.len() != grads.len() {
            return Err(CoreError::ShapeMismatch {
                op: "optimizer_step",
                expected: params.len().to_string(),
                got: grads.len().to_string(),
            });
        }
        if self.kind == OptimKind::Adam {
            self.adam.t += 1;
        }
        let mut counters = counters;
        for (p, g) in params.iter_mut().zip(grads) {
            if p.name != g.name || p.dims != g.dims {
                return Err(CoreError::ShapeMismatch {
                    op: "optimizer_step",
                    expected: format!("{} {:?}", p.name, p.dims),
                    got: format!("{} {:?}", g.name, g.dims),
                });
            }
            match self.kind {
                OptimKind::Sgd => {
                    for (w, &dv) in p.data.iter_mut().zip(g.data) {
                        *w -= lr * dv;
                    }
                }
                OptimKind::Adam => {
                    let n = p.data.len();
                    let m = self
                        .adam
                        .m
                        .entry(p.name.clone())
                        .or_insert_with(|| vec![0.0; n]);
                    let v = self
                        .adam
                        .v
                        .entry(p.name.clone())
                        .or_insert_with(|| vec![0.0; n]);
                    let t = self.adam.t as i32;
                    let bc1 = 1.0 - self.beta1.powi(t);
                    let bc2 = 1.0 - self.beta2.powi(t);
                    for i in 0..n {
                        m[i] = self.beta1 * m[i] + (1.0 - self.beta1) * g.data[i];
                        v[i] = self.beta2 * v[i] + (1.0 - self.beta2) * g.data[i] * g.data[i];
                        let m_hat = m[i] / bc1;
                        let v_hat = v[i] / bc2;
                        p.data[i] -= lr * m_hat / (v_hat.sqrt() + self.eps);
                    }
                }
            }
            if let Some(c) = counters.as_deref_mut() {
                c.bump(&p.name);
            }
        }
        Ok(())
    }
}
