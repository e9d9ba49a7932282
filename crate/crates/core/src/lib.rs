//! Neutral functional differential equations in Hale's form,
//! `d/dt D x_t = f(x_t)` with `D phi = phi(0) - sum_j A_j phi(-delta_j)`.
//!
//! The crate simulates such systems by the method of steps, checks strong
//! stability of `D`, evaluates Lyapunov-Krasovskii functionals together with
//! their Driver-form derivatives, and verifies or fits the certificate
//! conditions for global asymptotic / exponential stability and the ISS link.
//! Every sampled check is a certificate of non-falsification only: a finite
//! sample set under-approximates the space of continuous histories.

// `!(x > 0.0)` deliberately rejects NaN alongside non-positive values
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod certify;
pub mod comparison;
pub mod diffop;
pub mod error;
pub mod history;
pub mod lk;
pub mod operator;
pub mod rhs;
pub mod sampling;
pub mod schema;
pub mod sim;
pub mod system;

pub type Vector = nalgebra::DVector<f64>;
pub type Matrix = nalgebra::DMatrix<f64>;

pub use comparison::{ComparisonFunction, FunctionClass, MonotoneTable, Profile};
pub use error::{Error, Result};
pub use lk::{driver_derivative, phi_h_extend, Functional, Ladder, SemiNorm};
pub use history::{HistorySegment, HistoryView, InterpOrder};
pub use operator::{dop_apply, DifferenceOperator};
pub use rhs::{Nonlinearity, RhsMap, RhsTerm};
pub use sim::{integrate, InputSignal, StepPolicy, Trajectory};
pub use system::NfdeSystem;
