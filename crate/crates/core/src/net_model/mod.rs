//! Network hyper-parameters, activations, weight laws and the seeded forward sampler.

mod activation;
mod config;
mod sampler;
mod weights;

pub use activation::{Activation, ActivationKind, ActivationRegistry, ActivationSpec};
pub use config::NetConfig;
pub(crate) use sampler::psd_cholesky;
pub use sampler::{forward_sample, forward_sample_streams, LayerState, SampleBatch, SimPlan, Simulator, Trace};
pub use weights::{weight_abs_moment, SamplingPath, WeightDistribution, WeightLaw, WeightLawRegistry};
