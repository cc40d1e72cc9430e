//! Multi-cell slicing simulator.
//!
//! Each cell splits its bandwidth between `N` slices according to a
//! [`PartitionAction`]. Per-slice UE populations follow a traffic mask, every
//! UE offers a fixed rate, and a cell's spectral efficiency drops with the
//! resource utilisation of its neighbours from the previous step.

mod mask;
mod reward;
mod scenario;
mod sim;
mod types;

pub use mask::{traffic_mask, MaskParams};
pub use reward::{baseline_action, reward};
pub use scenario::{DelayModel, Scenario};
pub use sim::{compute_efficiency, compute_slice_metrics, Network};
pub use types::{
    CellConfig, NetworkState, PartitionAction, SliceMetrics, SliceRequirement, SIMPLEX_TOLERANCE,
};
