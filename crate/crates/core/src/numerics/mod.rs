//! Minimal dense numerics: tensors, layer primitives with hand-derived
//! backward passes, optimizers, and a finite-difference gradient checker.

pub mod gradcheck;
pub mod gru;
pub mod optim;
pub mod params;
pub mod tensor;

pub use gradcheck::{grad_check, GradCheckReport};
pub use gru::{gru_step, gru_step_backward, gru_step_cached, GruCellParams, GruStepCache};
pub use optim::{OptimKind, Optimizer, UpdateCounters};
pub use params::{soft_update, ParamSet, ParamView, ParamViewMut};
pub use tensor::{
    cosine, linear, linear_backward, relu, relu_backward, relu_vec, sigmoid, tanh_vec, Tensor1,
    Tensor2,
};
