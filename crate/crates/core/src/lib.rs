//! Fisher-information analysis of weak-value-amplified field sensing with a
//! decohering qubit.
//!
//! The crate pairs every analytical expression for the direct, ancilla and
//! postselected strategies ([`closed_form`]) with an independent brute-force
//! two-qubit simulation ([`oracle`]) and a maximum-likelihood harness that
//! checks the Cramér–Rao bound by Monte Carlo ([`estimation`]). [`sweep`]
//! produces the parameter grids behind the figure data.

pub mod closed_form;
pub mod eigen;
pub mod error;
pub mod estimation;
pub mod fisher;
pub mod grid;
pub mod matrix;
pub mod noise;
pub mod optimize;
pub mod oracle;
pub mod state;
pub mod sweep;

pub use error::{Error, Result};
