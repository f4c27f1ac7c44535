//! Energy sharing among prosumers on a DC network.
//!
//! Prosumers submit a single scalar bid `b_i` and receive a quantity through the
//! affine supply-demand rule `q_i = -a * lambda_i + b_i` (`q_i > 0` buys). The
//! platform picks the prices with the smallest spread that balance the market and
//! keep every line flow inside its limit, then regulates the prices sent back to
//! each prosumer so that nobody can profit from congestion beyond a bounded
//! margin.
//!
//! The crate is organised bottom-up:
//!
//! * [`network`]: buses, lines, PTDF matrix and flow checks.
//! * [`qp`]: dense strictly convex QP solver with exact multipliers, plus an
//!   enumeration oracle used for testing.
//! * [`clearing`]: market clearing, price regulation and settlement.
//! * [`prosumer`]: disutility, optimal resource split, regulated cost and best
//!   responses.
//! * [`equilibrium`]: the equilibrium of the bidding game via its equivalent
//!   centralized problem, the social optimum, best-response dynamics,
//!   diagnostics, equal partitions and parameter sweeps.
//! * [`cases`]: the small reference systems used by examples and tests.

pub mod cases;
pub mod clearing;
pub mod equilibrium;
mod error;
pub mod network;
pub mod prosumer;
pub mod qp;

pub use error::{Error, Result};
