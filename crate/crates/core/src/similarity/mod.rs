//! Latent-space similarity between agents: default-action samples, a pooled
//! VAE, Gaussian KL distances and source selection.

mod distance;
mod kl;
mod samples;
mod vae;

pub use distance::{
    inter_agent_distance, pooled_sigma, resolve_metric, select_source, DistanceEntry, DistanceMatrix,
    DistanceMode, Metric, Orientation, SIMPLIFIED_MAX_SIGMA,
};
pub use kl::{kl_gaussian, kl_mean_simplified, LatentStats};
pub use samples::{collect_default_samples, DefaultSample, TraceStep, DEFAULT_ACTION_TOLERANCE};
pub use vae::{vae_train, Standardizer, VaeConfig, VaeModel, VaeReport};
