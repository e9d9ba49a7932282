//! Lyapunov-Krasovskii functionals and their Driver-form derivative.

mod driver;
mod functional;

pub use driver::{
    driver_derivative, phi_h_extend, trajectory_consistency, Consistency, DerivativeEstimate, Ladder,
    DEFAULT_LADDER_DEPTH,
};
pub use functional::{ConverseFunctional, Functional, SemiNorm};
