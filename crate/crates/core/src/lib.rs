//! Physics-informed graph attention surrogate for mixed soft/rigid tissue deformation.
//!
//! The pipeline: [`mesh`] builds a labeled tetrahedral phantom, [`oracle`]
//! produces quasi-static ground truth for probe indentations, [`graph`] turns
//! samples into attention-ready graphs (optionally augmented with virtual
//! nodes and edges), [`model`] is the multi-head GAT running on the
//! [`autodiff`] tape, and [`train`] holds losses, optimizer, metrics and the
//! ablation runner. [`cli`] wires everything into subcommands.

// `!(x > 0.0)` style checks are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod autodiff;
pub mod cli;
pub mod error;
pub mod graph;
pub mod mesh;
pub mod model;
pub mod oracle;
pub mod train;

pub use error::{Error, Result};
