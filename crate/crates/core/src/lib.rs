//! Stochastic inversion of fault geometry and slip from surface displacements
//! in a homogeneous elastic half space.

pub mod analysis;
pub mod config;
pub mod dual;
pub mod error;
pub mod forward;
pub mod geometry;
pub mod green;
pub mod pipeline;
pub mod posterior;
pub mod quadrature;
pub mod sampler;
pub mod synth;
pub mod tikhonov;

pub use error::{Error, Result};
