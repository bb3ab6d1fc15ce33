//! Hierarchical Gaussian-process / inverse-Wishart-process model for
//! longitudinal binary and ordinal responses, fitted with an exact
//! Pólya-Gamma Gibbs sampler.
//!
//! The numerical core is generic over [`scalar::Real`] (`f32` or `f64`); the
//! aliases at the crate root fix it to `f64`.

pub mod data;
pub mod diagnostics;
pub mod error;
pub mod gibbs;
pub mod io;
pub mod kernels;
pub mod linalg;
pub mod ordinal;
pub mod predict;
pub mod prior;
pub mod randdist;
pub mod scalar;
pub mod simgen;
pub mod state;
pub mod summary;

pub use error::{Error, Result};
pub use scalar::Real;

pub type TimeGrid = data::TimeGrid<f64>;
pub type PooledGrid = data::PooledGrid<f64>;
pub type BinaryDataset = data::BinaryDataset<f64>;
pub type OrdinalDataset = data::OrdinalDataset<f64>;
pub type PriorConfig = prior::PriorConfig<f64>;
pub type ChainState = state::ChainState<f64>;
pub type PosteriorDraws = state::PosteriorDraws<f64>;
pub type MaternParams = kernels::MaternParams<f64>;
pub type MvtParams = randdist::MvtParams<f64>;
pub type FineGrid = predict::FineGrid<f64>;
pub use gibbs::{run_chain, SamplerConfig};
