//! Pinched skew products on 𝕋^D × [0,1]: exact evaluation of the iterated
//! upper bounding lines, the hypothesis ledger with its constants, the peak
//! partition, and dimension/Lyapunov estimators for the attractor.

#![allow(clippy::neg_cmp_op_on_partial_ord)] // `!(x > 0.0)` style checks also reject NaN

pub mod bounding;
pub mod constants;
pub mod dimension;
pub mod dynamics;
pub mod error;
pub mod numerics;
pub mod partition;
pub mod report;
pub mod torus;

pub use error::{Error, Result};
