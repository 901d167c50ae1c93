//! Zero-sum games where the minimizing player observes a Brownian state and the
//! maximizing player observes only actions.

pub mod error;
pub mod game;
pub mod hamiltonian;
pub mod lp;
pub mod martingale;
pub mod measure;
pub mod partition;
pub mod payoff;
pub mod pde;
pub mod value;

pub use error::{Error, Result};
