//! Per-cell TD3 agents and the state they observe.

mod buffer;
mod features;
mod td3;

pub use buffer::{Phase, ReplayBuffer, Transition};
pub use features::{assemble_state, extract_neighbor_features, Message, Normalizers};
pub use td3::{random_simplex_action, soft_update, Td3Agent, Td3Config, TrainStats};
