//! Structure learning for polynomial exponential families by score matching.
//!
//! The crate is organised bottom-up:
//!
//! - [`family`]: monomial factors, families, models and factor graphs.
//! - [`sampler`]: Gibbs sampling with grid inverse-CDF conditionals.
//! - [`score`]: the local score-matching loss as an explicit quadratic form.
//! - [`qp`]: group-ℓ1 constrained minimisation with a suboptimality certificate.
//! - [`recovery`]: per-vertex estimation and iterative clique pruning.
//! - [`curvature`]: centering boxes, centered bases and curvature lower bounds.
//! - [`experiment`]: seeded sample-complexity sweeps and their reports.
//! - [`desk`]: reference models and default sweep configurations.

pub mod curvature;
pub mod desk;
pub mod error;
pub mod experiment;
pub mod family;
pub mod qp;
pub mod quad;
pub mod recovery;
pub mod sampler;
pub mod score;
pub mod stats;

pub use error::{Error, Result};
