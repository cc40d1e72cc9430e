use alloc::vec;
use alloc::vec::Vec;

use crate::env::{CellConfig, SliceMetrics};
use crate::{CellId, Error, Result};

/// Per-slice load broadcast by a cell to its neighbours.
#[derive(Debug, Clone, PartialEq)]
pub struct Message {
    pub sender: CellId,
    pub per_slice_load: Vec<f64>,
}

/// Mean per-slice load over the received messages. An isolated cell (no
/// messages) sees zeros. Messages are summed in sender order, so the result
/// does not depend on arrival order.
pub fn extract_neighbor_features(messages: &[Message], num_slices: usize) -> Result<Vec<f64>> {
    let mut out = vec![0.0; num_slices];
    if messages.is_empty() {
        return Ok(out);
    }
    let mut ordered: Vec<&Message> = messages.iter().collect();
    ordered.sort_by_key(|m| m.sender);
    for m in ordered {
        if m.per_slice_load.len() != num_slices {
            return Err(Error::dim("message loads", num_slices, m.per_slice_load.len()));
        }
        out.iter_mut().zip(&m.per_slice_load).for_each(|(o, l)| *o += l);
    }
    let count = messages.len() as f64;
    out.iter_mut().for_each(|o| *o /= count);
    Ok(out)
}

/// Scales applied to raw metrics before they enter the state vector.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Normalizers {
    /// Mbit/s; the cell's largest throughput target.
    pub throughput: f64,
    /// The cell's maximum UE group size.
    pub ues: f64,
}

impl Normalizers {
    pub fn for_cell(cell: &CellConfig) -> Self {
        Normalizers {
            throughput: cell.max_throughput_target(),
            ues: f64::from(cell.max_ues_per_slice),
        }
    }
}

/// `[φ / φ_norm, load, u / U_max, neighbour loads]`, length `4N`.
pub fn assemble_state(
    metrics: &[SliceMetrics],
    neighbor_features: &[f64],
    normalizers: &Normalizers,
) -> Result<Vec<f64>> {
    let n = metrics.len();
    if neighbor_features.len() != n {
        return Err(Error::dim("neighbor features", n, neighbor_features.len()));
    }
    if !(normalizers.throughput > 0.0 && normalizers.ues > 0.0) {
        return Err(Error::Domain("state normalizers must be positive".into()));
    }
    let mut state = Vec::with_capacity(4 * n);
    state.extend(metrics.iter().map(|m| m.throughput / normalizers.throughput));
    state.extend(metrics.iter().map(|m| m.load));
    state.extend(metrics.iter().map(|m| f64::from(m.ue_count) / normalizers.ues));
    state.extend_from_slice(neighbor_features);
    Ok(state)
}
