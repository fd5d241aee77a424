//! Lipschitz-constant machinery for experimental optimization.
//!
//! The crate bounds black-box experimental functions with lumped and
//! directional Lipschitz constants, uses those bounds to certify that the next
//! experiment (and the perturbations around it) will be feasible, tightens
//! noisy measurement intervals, and estimates or repairs the constants from
//! models and data. Reference optimizers and simulated plants exercise the
//! whole pipeline.

pub mod algorithms;
pub mod bounds;
pub mod cli;
pub mod error;
pub mod estimation;
pub mod feasibility;
pub mod geometry;
pub mod plants;
pub mod uncertainty;

pub use bounds::{
    CurvatureInfo, DerivativeBounds, DirectionalConstants, LipschitzSpec, LumpedConstant, Side,
};
pub use error::{Error, Result};
pub use geometry::{BoxDomain, Point};
