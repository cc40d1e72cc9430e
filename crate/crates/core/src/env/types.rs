use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::{CellId, Error, Result};

/// Allowed deviation of an action's share sum from one.
pub const SIMPLEX_TOLERANCE: f64 = 1e-9;

/// Per-slice service targets: average user throughput (Mbit/s) and delay (ms).
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct SliceRequirement {
    pub throughput_target: f64,
    pub delay_target: f64,
}

impl SliceRequirement {
    pub fn new(throughput_target: f64, delay_target: f64) -> Result<Self> {
        let req = SliceRequirement {
            throughput_target,
            delay_target,
        };
        req.validate()?;
        Ok(req)
    }

    pub(crate) fn validate(&self) -> Result<()> {
        if !(self.throughput_target > 0.0 && self.throughput_target.is_finite()) {
            return Err(Error::Config(format!(
                "throughput target must be positive, got {}",
                self.throughput_target
            )));
        }
        if !(self.delay_target > 0.0 && self.delay_target.is_finite()) {
            return Err(Error::Config(format!(
                "delay target must be positive, got {}",
                self.delay_target
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct CellConfig {
    pub cell_id: CellId,
    /// MHz
    pub bandwidth: f64,
    pub requirements: Vec<SliceRequirement>,
    pub neighbor_ids: Vec<CellId>,
    /// Coupling gain per entry of `neighbor_ids`.
    pub interference_gains: Vec<f64>,
    pub max_ues_per_slice: u32,
    pub base_snr_db: f64,
    /// Shift of this cell's traffic mask, in periods.
    pub mask_phase_shift: f64,
}

impl CellConfig {
    pub fn num_slices(&self) -> usize {
        self.requirements.len()
    }

    /// Largest throughput target of the cell; used to normalise throughput features.
    pub fn max_throughput_target(&self) -> f64 {
        self.requirements
            .iter()
            .map(|r| r.throughput_target)
            .fold(0.0, f64::max)
    }

    pub(crate) fn validate(&self) -> Result<()> {
        let id = self.cell_id;
        if !(self.bandwidth > 0.0 && self.bandwidth.is_finite()) {
            return Err(Error::Config(format!(
                "cell {id}: bandwidth must be positive, got {}",
                self.bandwidth
            )));
        }
        if self.requirements.is_empty() {
            return Err(Error::Config(format!("cell {id}: no slices declared")));
        }
        for r in &self.requirements {
            r.validate()
                .map_err(|e| Error::Config(format!("cell {id}: {e}")))?;
        }
        if self.max_ues_per_slice < 1 {
            return Err(Error::Config(format!(
                "cell {id}: max_ues_per_slice must be at least 1"
            )));
        }
        if self.neighbor_ids.contains(&id) {
            return Err(Error::Config(format!("cell {id} lists itself as neighbor")));
        }
        if self.interference_gains.len() != self.neighbor_ids.len() {
            return Err(Error::Config(format!(
                "cell {id}: {} neighbors but {} interference gains",
                self.neighbor_ids.len(),
                self.interference_gains.len()
            )));
        }
        if self
            .interference_gains
            .iter()
            .any(|g| !(*g >= 0.0 && g.is_finite()))
        {
            return Err(Error::Config(format!(
                "cell {id}: interference gains must be finite and non-negative"
            )));
        }
        let mut sorted = self.neighbor_ids.clone();
        sorted.sort_unstable();
        sorted.dedup();
        if sorted.len() != self.neighbor_ids.len() {
            return Err(Error::Config(format!("cell {id}: duplicate neighbor ids")));
        }
        if !self.base_snr_db.is_finite() || !self.mask_phase_shift.is_finite() {
            return Err(Error::Config(format!("cell {id}: non-finite radio parameters")));
        }
        Ok(())
    }
}

/// Per-slice resource shares of one cell. Always a point of the probability
/// simplex: every share in `[0, 1]` and the shares sum to one.
#[derive(Debug, Clone, PartialEq)]
pub struct PartitionAction {
    shares: Vec<f64>,
}

impl PartitionAction {
    pub fn new(shares: Vec<f64>) -> Result<Self> {
        if shares.is_empty() {
            return Err(Error::Action("empty share vector".into()));
        }
        let mut sum = 0.0;
        for (n, &s) in shares.iter().enumerate() {
            if !(0.0..=1.0).contains(&s) {
                return Err(Error::Action(format!("share {n} = {s} outside [0, 1]")));
            }
            sum += s;
        }
        if (sum - 1.0).abs() > SIMPLEX_TOLERANCE {
            return Err(Error::Action(format!("shares sum to {sum}, expected 1")));
        }
        Ok(PartitionAction { shares })
    }

    /// The equal split `1/N` for every slice.
    pub fn equal(num_slices: usize) -> Self {
        assert!(num_slices > 0, "an action needs at least one slice");
        PartitionAction {
            shares: vec![1.0 / num_slices as f64; num_slices],
        }
    }

    /// Normalises non-negative weights onto the simplex. All-zero weights map
    /// to the equal split.
    pub fn from_weights(weights: &[f64]) -> Result<Self> {
        if weights.iter().any(|w| !(*w >= 0.0 && w.is_finite())) {
            return Err(Error::Domain("weights must be finite and non-negative".into()));
        }
        let total: f64 = weights.iter().sum();
        if total <= 0.0 {
            return Ok(Self::equal(weights.len()));
        }
        let mut shares: Vec<f64> = weights.iter().map(|w| w / total).collect();
        // Renormalising once more keeps the rounding error of the sum tiny.
        let again: f64 = shares.iter().sum();
        for s in &mut shares {
            *s = (*s / again).min(1.0);
        }
        Self::new(shares)
    }

    pub fn shares(&self) -> &[f64] {
        &self.shares
    }

    pub fn len(&self) -> usize {
        self.shares.len()
    }

    pub fn is_empty(&self) -> bool {
        self.shares.is_empty()
    }

    /// Whether two actions agree entrywise within `tol`.
    pub fn approx_eq(&self, other: &PartitionAction, tol: f64) -> bool {
        self.shares.len() == other.shares.len()
            && self
                .shares
                .iter()
                .zip(&other.shares)
                .all(|(a, b)| (a - b).abs() <= tol)
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.shares
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SliceMetrics {
    /// Average per-user throughput, Mbit/s.
    pub throughput: f64,
    /// ms
    pub delay: f64,
    /// Fraction of the slice's resources in use, in `[0, 1]`.
    pub load: f64,
    pub ue_count: u32,
}

/// Snapshot of the whole network after `step` steps.
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkState {
    pub step: u64,
    /// `per_cell[k][n]`, ordered like the scenario's cells.
    pub per_cell: Vec<Vec<SliceMetrics>>,
    /// Actions that produced these metrics.
    pub actions: Vec<PartitionAction>,
    /// Fraction of each cell's bandwidth in use; drives interference at the next step.
    pub utilization: Vec<f64>,
    /// Offered traffic per cell and slice, Mbit/s.
    pub demands: Vec<Vec<f64>>,
    pub(crate) seed: u64,
}

impl NetworkState {
    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn num_cells(&self) -> usize {
        self.per_cell.len()
    }

    /// Per-slice loads of cell `k`.
    pub fn loads(&self, k: usize) -> Vec<f64> {
        self.per_cell[k].iter().map(|m| m.load).collect()
    }
}
