//! Multilayer perceptrons with reverse-mode differentiation.

mod mlp;
pub mod tape;

pub use mlp::{finite_diff_check, grad_params, Activation, Mlp, Recorded, LEAKY_SLOPE};
pub use tape::{Adjoints, Real, Tape, Var};
