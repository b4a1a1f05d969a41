//! Backward equations for the three incentive regimes on the inventory lattice.

pub mod certify;
pub mod contracts;
pub mod grid;
pub mod solver;

pub use grid::{Lattice, ValueGrid};
pub use solver::{
    exchange_value, passive_exchange_value, regime_rates, reservation_utility, solve, solve_no_incentive,
    solve_one_incentive, solve_two_incentive, write_csv, Regime, SolveConfig, SolveResult,
};
