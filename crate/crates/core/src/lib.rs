//! Modified frozen percolation on the degree-3 Bethe lattice and on finite
//! directed binary trees.
//!
//! - [`dist`]: the freeze-time law `F`, the kernel `phi` and quadrature checks.
//! - [`tree`]: site addressing on the lattice.
//! - [`bethe_sim`]: exact sampling of finite regions and colour queries.
//! - [`directed_sim`]: the leaf-freezing process on `T(n)`.
//! - [`estimators`]: closed-form oracles and Monte Carlo estimators.
//! - [`cli`]: the experiment runner behind the `frozen-perc` binary.

pub mod bethe_sim;
pub mod cli;
pub mod directed_sim;
pub mod dist;
pub mod error;
pub mod estimators;
pub mod tree;

pub use bethe_sim::{Colour, Realization, RealizationDump, Region};
pub use dist::ExtendedTime;
pub use error::{Error, Result};
pub use estimators::{EstimateReport, Gate, Quantity};
pub use tree::SiteId;
