//! Radial-angular flow matching.
//!
//! Data are written `x = r u` with `r = |x|` and `u` on the unit sphere. The
//! source keeps the empirical radial law of the data and draws directions
//! uniformly; training and sampling move along great circles at fixed radius.

pub mod artifact;
pub mod datasets;
pub mod error;
pub mod flow;
pub mod metrics;
pub mod model;
pub mod numerics;
pub mod quadrature;
pub mod radial;
pub mod sampler;
pub mod sphere;

pub use error::{Error, Result};
