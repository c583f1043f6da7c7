#![allow(clippy::neg_cmp_op_on_partial_ord)] // `!(x > 0.0)` also rejects NaN

pub mod analysis;
pub mod error;
pub mod fixtures;
pub mod forceopt;
pub mod grasp;
pub mod hand;
pub mod kinopt;
pub mod solver;
pub mod units;

mod parallel;
mod serde_finite;

pub use error::{Error, Result};
