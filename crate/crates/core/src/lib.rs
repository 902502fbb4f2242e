//! Random fully connected networks at initialization and their Gaussian limits.
//!
//! * [`net_model`]: configs, activations, weight laws, the seeded forward sampler.
//! * [`limit_kernel`]: infinite-width covariances and derivative functionals.
//! * [`distance_lab`]: Kolmogorov, Wasserstein and convex-distance proxies with error radii.
//! * [`bound_engine`]: every explicit and semi-empirical bound as an itemized report.
//! * [`experiment`]: width/depth sweeps, rate fits and report emission.

#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod bound_engine;
pub mod distance_lab;
pub mod error;
pub mod experiment;
pub mod limit_kernel;
pub mod net_model;
pub mod quadrature;
pub mod rng;
pub mod serde_ext;
pub mod special;

pub use error::{Error, Result};
