//! Adaptive Peaceman–Rachford splitting for degenerate quenching problems
//!
//! Solves `s(x, y) u_t = Δu + f(u)` on an ellipse with `u = 0` on the
//! boundary and `u = 0` initially, where `f(u) = 1/(1 − u)`. The solution
//! quenches when `u → 1⁻` while `u_t` blows up.

pub mod error;
pub mod experiments;
pub mod geometry;
pub mod grid;
pub mod linalg;
pub mod operators;
pub mod output;
pub mod checkpoint;
pub mod verify;
pub mod solver;
pub mod stepper;

pub use error::{Error, Result};
