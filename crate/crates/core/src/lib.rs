//! Exact desk-scale laboratory for Moebius/Walsh correlations.
//!
//! The crate builds arithmetic-function tables, Walsh functions and their
//! additive-character coefficients, band-limited approximants, and the
//! bilinear and type-I sums that control `sum_n mu(n) w_A(n)`, then checks
//! the associated inequalities numerically.

pub mod approximant;
pub mod budget;
pub mod cli;
pub mod error;
pub mod fwht;
pub mod lemmas;
pub mod report;
pub mod sieve;
pub mod sums;
pub mod walsh;

pub use budget::MemoryBudget;
pub use error::{LabError, Result};
pub use sieve::{ArithmeticSequence, SequenceKind};
pub use walsh::{FrequencySelector, WalshMask};
