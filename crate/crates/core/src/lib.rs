//! Two exchanges sharing one limit order book, each contracting with its own
//! market maker.
//!
//! The crate computes the makers' Nash quotes for given incentive rates,
//! solves the backward equations for the three incentive regimes (no
//! contract, one exchange contracting, both contracting), and simulates the
//! controlled market to cross-check the value functions.

pub mod checks;
pub mod equilibrium;
pub mod error;
pub mod figures;
pub mod model;
pub mod pde;
pub mod sim;

pub use error::{Error, Result};
pub use model::{InventoryPair, ModelParams, QuoteMatrix, RateVector, Side};
pub use pde::{Lattice, Regime, SolveConfig, SolveResult, ValueGrid};
