use alloc::format;
use alloc::vec::Vec;

use crate::env::PartitionAction;
use crate::{CellId, Error, Result};

/// Largest per-share deviation for a step to count as taken under the default action.
pub const DEFAULT_ACTION_TOLERANCE: f64 = 1e-9;

/// One logged step of a cell: the action taken, the state observed after it
/// and the reward it earned.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceStep {
    pub state: Vec<f64>,
    pub action: PartitionAction,
    pub reward: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DefaultSample {
    /// `[state, reward]`
    pub x: Vec<f64>,
    pub agent: CellId,
    pub default_action: PartitionAction,
}

/// Samples from the steps of `trace` taken under `default_action`.
pub fn collect_default_samples(
    agent: CellId,
    trace: &[TraceStep],
    default_action: &PartitionAction,
) -> Result<Vec<DefaultSample>> {
    let samples: Vec<DefaultSample> = trace
        .iter()
        .filter(|s| s.action.approx_eq(default_action, DEFAULT_ACTION_TOLERANCE))
        .map(|s| {
            let mut x = Vec::with_capacity(s.state.len() + 1);
            x.extend_from_slice(&s.state);
            x.push(s.reward);
            DefaultSample {
                x,
                agent,
                default_action: default_action.clone(),
            }
        })
        .collect();
    if samples.is_empty() {
        return Err(Error::EmptySet {
            agent,
            reason: format!("none of {} logged steps used the default action", trace.len()),
        });
    }
    Ok(samples)
}
