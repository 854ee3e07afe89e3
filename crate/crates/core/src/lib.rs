//! Tree tensor network rounding with hierarchical structure search.
//!
//! The [`network`] module holds the tree network type and its local
//! operations. [`driver::round`] is the entry point for structure search,
//! and [`baselines`] provides fixed-structure rounding for comparison.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod baselines;
pub mod bench;
pub mod clustering;
pub mod driver;
pub mod error;
pub mod instrument;
pub mod linalg;
pub mod network;
pub mod reshape;
pub mod search;
pub mod tensor;

pub use error::{Error, Result};
pub use network::{IndexId, NodeId, Target, TreeNetwork};
pub use tensor::DenseTensor;
