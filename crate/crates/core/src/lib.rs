//! Two-species Wasserstein gradient flows with a common congestion term.
//!
//! Each outer time step is a JKO minimization, written in dynamic
//! (Benamou–Brenier) form and solved by an augmented-Lagrangian
//! saddle-point iteration.

pub mod alg2;
pub mod config;
pub mod energy;
pub mod error;
pub mod grid;
pub mod oracle;
pub mod output;
pub mod phi_solver;
pub mod sim;
pub mod validate;

pub use error::{Error, Result};
