//! Method-of-steps integration.
//!
//! The integrated quantity is `z(t) = D x_t`, advanced by classical RK4 on a
//! mesh aligned with the derivative breakpoints. The state is reconstructed
//! algebraically, `x(t) = z(t) + sum_j A_j x(t - delta_j)`, from a dense
//! Hermite store that also keeps one-sided slopes at breakpoints.

mod input;
mod integrate;

pub use input::InputSignal;
pub use integrate::{integrate, integrate_batch, StepPolicy, Trajectory, TrajectoryWindow, DEFAULT_BLOWUP_BOUND};
