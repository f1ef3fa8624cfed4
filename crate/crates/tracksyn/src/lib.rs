//! Feedback synthesis and closed-loop simulation for nonlinear trajectory
//! tracking under disturbances.
//!
//! Given a plant `ẋ = f(x, u, w(t))`, a desired trajectory pair
//! `(x_d, u_d)` and a disturbance signal `w`, the toolkit
//!
//! * derives the tracking-error dynamics `ė = F(e, v, w, t)` with its
//!   time-varying linearization `A(t), B(t)` and Taylor remainder `r`,
//! * estimates the boundedness/growth constants those dynamics must
//!   satisfy and reports them ([`assumptions`]),
//! * synthesizes a feedback `v*(e, w, t)` that reduces the closed loop to
//!   `ė = Δe` for a chosen diagonal Hurwitz `Δ`, by iterating a
//!   contraction map to its fixed point; underactuated plants (`m < n`)
//!   are handled by augmenting `B(t)` to an invertible matrix and
//!   projecting the augmented law back ([`synthesis`]),
//! * simulates the closed loop with fixed-step RK4 and classifies the
//!   outcome ([`sim`], [`classify`]),
//! * drives it all from a CLI with CSV traces and plain-text reports
//!   ([`cli`]).

// `!(x > 0.0)` guards are used instead of `x <= 0.0` so NaN inputs fail
// validation too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod assumptions;
pub mod builtin;
pub mod classify;
pub mod cli;
pub mod expr;
pub mod model;
pub mod reference;
pub mod report;
pub mod sim;
pub mod synthesis;
mod sysfile;

pub use model::{ErrorDynamics, SystemModel};

/// Dense column vector of `f64`, the working scalar type throughout.
pub type Vector = nalgebra::DVector<f64>;
/// Dense matrix of `f64`; entries are kept finite by construction.
pub type Matrix = nalgebra::DMatrix<f64>;
