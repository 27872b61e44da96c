//! Exact finite-sample likelihood-ratio inference for the four
//! potential-outcome types (never-takers, defiers, compliers, always-takers)
//! in a two-arm randomized experiment with a binary outcome.

pub mod asymptotic;
pub mod cache;
pub mod cli;
pub mod error;
pub mod hypothesis;
pub mod inference;
pub mod lattice;
pub mod likelihood;
pub mod numeric;
pub mod oracle;
pub mod quantity;
pub mod shares;
pub mod table;

pub use error::{Error, Result};
