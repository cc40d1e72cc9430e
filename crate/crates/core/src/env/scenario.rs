use alloc::collections::BTreeMap;
use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use super::{CellConfig, MaskParams, SliceRequirement};
use crate::{CellId, Error, Result};

/// Queueing-style delay model: `d = min_ms / max(epsilon, 1 - load)`, capped at `max_ms`.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct DelayModel {
    pub min_ms: f64,
    pub max_ms: f64,
    pub epsilon: f64,
}

impl Default for DelayModel {
    fn default() -> Self {
        DelayModel {
            min_ms: 0.5,
            max_ms: 20.0,
            epsilon: 0.05,
        }
    }
}

impl DelayModel {
    pub fn delay(&self, load: f64) -> f64 {
        (self.min_ms / self.epsilon.max(1.0 - load)).min(self.max_ms)
    }

    fn validate(&self) -> Result<()> {
        if !(self.min_ms > 0.0 && self.max_ms >= self.min_ms && self.epsilon > 0.0 && self.epsilon <= 1.0) {
            return Err(Error::Config(format!(
                "delay model needs 0 < min_ms <= max_ms and 0 < epsilon <= 1, got {self:?}"
            )));
        }
        Ok(())
    }
}

/// Complete description of a network: cells, slices, traffic and delay model.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Scenario {
    pub cells: Vec<CellConfig>,
    /// Offered rate of a single UE per slice, Mbit/s.
    pub ue_rates: Vec<f64>,
    pub mask: MaskParams,
    pub delay: DelayModel,
}

/// Targets of the first requirement group of the 12-cell layout.
pub(crate) const GROUP_A: [(f64, f64); 4] = [(4.0, 3.0), (3.0, 2.0), (2.0, 1.0), (1.0, 1.0)];
/// Targets of the second requirement group.
pub(crate) const GROUP_B: [(f64, f64); 4] = [(2.5, 1.0), (2.0, 1.0), (1.5, 1.0), (1.0, 1.0)];

fn requirements(group: &[(f64, f64); 4]) -> Vec<SliceRequirement> {
    group
        .iter()
        .map(|&(throughput_target, delay_target)| SliceRequirement {
            throughput_target,
            delay_target,
        })
        .collect()
}

fn default_mask() -> MaskParams {
    MaskParams {
        period: 100.0,
        offset: 0.25,
        amplitude: 0.15,
        phases: vec![0.0, 0.15, 0.4, 0.7],
        noise_std: 0.02,
    }
}

const DEFAULT_UE_RATES: [f64; 4] = [4.4, 3.3, 2.2, 1.1];
const DEFAULT_SNR_DB: f64 = 27.0;

impl Scenario {
    pub fn num_slices(&self) -> usize {
        self.ue_rates.len()
    }

    pub fn num_cells(&self) -> usize {
        self.cells.len()
    }

    pub fn cell_ids(&self) -> Vec<CellId> {
        self.cells.iter().map(|c| c.cell_id).collect()
    }

    pub fn cell(&self, id: CellId) -> Option<&CellConfig> {
        self.cells.iter().find(|c| c.cell_id == id)
    }

    pub fn index_of(&self, id: CellId) -> Option<usize> {
        self.cells.iter().position(|c| c.cell_id == id)
    }

    pub fn validate(&self) -> Result<()> {
        if self.cells.is_empty() {
            return Err(Error::Config("scenario declares no cells".into()));
        }
        let n = self.num_slices();
        if n == 0 {
            return Err(Error::Config("scenario declares no slices".into()));
        }
        if self.ue_rates.iter().any(|r| !(*r >= 0.0 && r.is_finite())) {
            return Err(Error::Config("UE rates must be finite and non-negative".into()));
        }
        self.mask.validate(n)?;
        self.delay.validate()?;

        let mut by_id: BTreeMap<CellId, &CellConfig> = BTreeMap::new();
        for cell in &self.cells {
            cell.validate()?;
            if cell.num_slices() != n {
                return Err(Error::Config(format!(
                    "cell {} declares {} slices, scenario has {n}",
                    cell.cell_id,
                    cell.num_slices()
                )));
            }
            if by_id.insert(cell.cell_id, cell).is_some() {
                return Err(Error::Config(format!("duplicate cell id {}", cell.cell_id)));
            }
        }
        for cell in &self.cells {
            for &j in &cell.neighbor_ids {
                let Some(other) = by_id.get(&j) else {
                    return Err(Error::Config(format!(
                        "cell {} references unknown neighbor {j}",
                        cell.cell_id
                    )));
                };
                if !other.neighbor_ids.contains(&cell.cell_id) {
                    return Err(Error::Config(format!(
                        "asymmetric neighbor declaration: {} lists {j} but not vice versa",
                        cell.cell_id
                    )));
                }
            }
        }
        Ok(())
    }

    /// Cells grouped by identical requirement vectors, in order of first appearance.
    pub fn requirement_groups(&self) -> Vec<Vec<CellId>> {
        let mut groups: Vec<(Vec<SliceRequirement>, Vec<CellId>)> = Vec::new();
        for cell in &self.cells {
            match groups.iter_mut().find(|(r, _)| *r == cell.requirements) {
                Some((_, ids)) => ids.push(cell.cell_id),
                None => groups.push((cell.requirements.clone(), vec![cell.cell_id])),
            }
        }
        groups.into_iter().map(|(_, ids)| ids).collect()
    }

    /// Twelve cells on four three-sector sites laid out on a 2×2 grid, 20 MHz
    /// each, four slices. Sites 1 and 3 (cells 1–3, 7–9) carry the first
    /// requirement group, sites 2 and 4 (cells 4–6, 10–12) the second.
    ///
    /// Every cell neighbours its two co-sited sectors and the same sector of
    /// the two adjacent sites.
    pub fn twelve_cell() -> Self {
        const CO_SITE_GAIN: f64 = 0.35;
        const ADJACENT_GAIN: f64 = 0.2;
        // 2x2 grid: site 0 - site 1 / site 2 - site 3, no diagonals.
        let adjacent: [[usize; 2]; 4] = [[1, 2], [0, 3], [0, 3], [1, 2]];
        let id = |site: usize, sector: usize| (3 * site + sector + 1) as CellId;
        let mut cells = Vec::with_capacity(12);
        for (site, adj) in adjacent.iter().enumerate() {
            let group = if site % 2 == 0 { &GROUP_A } else { &GROUP_B };
            for sector in 0..3 {
                let mut neighbor_ids = Vec::new();
                let mut interference_gains = Vec::new();
                for other in (0..3).filter(|&o| o != sector) {
                    neighbor_ids.push(id(site, other));
                    interference_gains.push(CO_SITE_GAIN);
                }
                for &s in adj {
                    neighbor_ids.push(id(s, sector));
                    interference_gains.push(ADJACENT_GAIN);
                }
                cells.push(CellConfig {
                    cell_id: id(site, sector),
                    bandwidth: 20.0,
                    requirements: requirements(group),
                    neighbor_ids,
                    interference_gains,
                    max_ues_per_slice: 32,
                    base_snr_db: DEFAULT_SNR_DB,
                    mask_phase_shift: 0.0,
                });
            }
        }
        Scenario {
            cells,
            ue_rates: DEFAULT_UE_RATES.to_vec(),
            mask: default_mask(),
            delay: DelayModel::default(),
        }
    }

    /// Three mutually coupled cells: cell 1 with the first requirement group,
    /// cell 2 with the second, and cell 3 configured exactly like cell 1.
    pub fn three_cell() -> Self {
        const GAIN: f64 = 0.5;
        let cell = |cell_id: CellId, group: &[(f64, f64); 4], neighbor_ids: Vec<CellId>| CellConfig {
            cell_id,
            bandwidth: 20.0,
            requirements: requirements(group),
            interference_gains: vec![GAIN; neighbor_ids.len()],
            neighbor_ids,
            max_ues_per_slice: 32,
            base_snr_db: DEFAULT_SNR_DB,
            mask_phase_shift: 0.0,
        };
        Scenario {
            cells: vec![
                cell(1, &GROUP_A, vec![2, 3]),
                cell(2, &GROUP_B, vec![1, 3]),
                cell(3, &GROUP_A, vec![1, 2]),
            ],
            ue_rates: DEFAULT_UE_RATES.to_vec(),
            mask: default_mask(),
            delay: DelayModel::default(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn builtin_scenarios_validate() {
        Scenario::twelve_cell().validate().unwrap();
        Scenario::three_cell().validate().unwrap();
    }

    #[test]
    fn twelve_cell_groups_follow_sites() {
        let groups = Scenario::twelve_cell().requirement_groups();
        assert_eq!(groups, vec![vec![1, 2, 3, 7, 8, 9], vec![4, 5, 6, 10, 11, 12]]);
    }

    #[test]
    fn asymmetric_neighbors_rejected() {
        let mut s = Scenario::three_cell();
        s.cells[0].neighbor_ids = vec![2];
        s.cells[0].interference_gains = vec![0.5];
        assert!(matches!(s.validate(), Err(Error::Config(_))));
    }

    #[test]
    fn nonpositive_bandwidth_rejected() {
        let mut s = Scenario::three_cell();
        s.cells[1].bandwidth = 0.0;
        assert!(matches!(s.validate(), Err(Error::Config(_))));
    }

    #[test]
    fn self_neighbor_rejected() {
        let mut s = Scenario::three_cell();
        s.cells[0].neighbor_ids = vec![1, 2, 3];
        s.cells[0].interference_gains = vec![0.5; 3];
        assert!(s.validate().is_err());
    }

    #[test]
    fn delay_model_caps() {
        let d = DelayModel::default();
        assert_eq!(d.delay(0.0), 0.5);
        assert!((d.delay(0.5) - 1.0).abs() < 1e-15);
        assert_eq!(d.delay(1.0), 10.0);
        let tight = DelayModel { max_ms: 5.0, ..d };
        assert_eq!(tight.delay(1.0), 5.0);
    }
}
