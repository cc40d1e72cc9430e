use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use rand::SeedableRng;
use rand_distr::{Distribution, StandardNormal};

use super::{reward, CellConfig, DelayModel, NetworkState, PartitionAction, Scenario, SliceMetrics};
use crate::{math, Error, Result, SimRng};

/// Guards the load ratio against vanishing capacity.
const CAPACITY_FLOOR: f64 = 1e-12;

/// Spectral efficiency (bit/s/Hz) of `cell` given the previous-step
/// utilisation of each of its neighbours, aligned with `cell.neighbor_ids`:
///
/// `e = log2(1 + snr / (1 + Σ_j g_j · min(1, load_j)))`
pub fn compute_efficiency(cell: &CellConfig, neighbor_loads: &[f64]) -> Result<f64> {
    if neighbor_loads.len() != cell.neighbor_ids.len() {
        return Err(Error::dim(
            "neighbor loads",
            cell.neighbor_ids.len(),
            neighbor_loads.len(),
        ));
    }
    let snr = math::pow10(cell.base_snr_db / 10.0);
    let interference: f64 = cell
        .interference_gains
        .iter()
        .zip(neighbor_loads)
        .map(|(g, l)| g * l.clamp(0.0, 1.0))
        .sum();
    Ok(math::log2(1.0 + snr / (1.0 + interference)))
}

/// Per-slice metrics of one cell for one step.
///
/// Slice `n` gets capacity `a_n · B · efficiency` (Mbit/s). Load is the ratio of
/// offered traffic to capacity (capped at one), per-user throughput is the
/// carried traffic divided among the slice's UEs, and delay follows `delay`.
pub fn compute_slice_metrics(
    cell: &CellConfig,
    action: &PartitionAction,
    demands: &[f64],
    ue_counts: &[u32],
    efficiency: f64,
    delay: &DelayModel,
) -> Result<Vec<SliceMetrics>> {
    let n = cell.num_slices();
    if action.len() != n {
        return Err(Error::dim("action shares", n, action.len()));
    }
    if demands.len() != n {
        return Err(Error::dim("slice demands", n, demands.len()));
    }
    if ue_counts.len() != n {
        return Err(Error::dim("UE counts", n, ue_counts.len()));
    }
    if !(efficiency > 0.0 && efficiency.is_finite()) {
        return Err(Error::Domain(format!(
            "spectral efficiency must be positive, got {efficiency}"
        )));
    }
    if let Some(d) = demands.iter().find(|d| !(**d >= 0.0 && d.is_finite())) {
        return Err(Error::Domain(format!("negative or non-finite demand {d}")));
    }

    let metrics = action
        .shares()
        .iter()
        .zip(demands)
        .zip(ue_counts)
        .map(|((&share, &demand), &ue_count)| {
            if demand == 0.0 {
                return SliceMetrics {
                    throughput: 0.0,
                    delay: delay.min_ms,
                    load: 0.0,
                    ue_count,
                };
            }
            if share == 0.0 {
                return SliceMetrics {
                    throughput: 0.0,
                    delay: delay.max_ms,
                    load: 1.0,
                    ue_count,
                };
            }
            let capacity = share * cell.bandwidth * efficiency;
            let load = (demand / capacity.max(CAPACITY_FLOOR)).min(1.0);
            SliceMetrics {
                throughput: demand.min(capacity) / f64::from(ue_count.max(1)),
                delay: delay.delay(load),
                load,
                ue_count,
            }
        })
        .collect();
    Ok(metrics)
}

/// A validated scenario bound to a seed. Stepping is a pure function of the
/// previous [`NetworkState`] and the actions, so a network can be shared
/// between threads.
#[derive(Debug, Clone)]
pub struct Network {
    scenario: Scenario,
    seed: u64,
    neighbor_index: Vec<Vec<usize>>,
}

impl Network {
    pub fn new(scenario: Scenario, seed: u64) -> Result<Self> {
        scenario.validate()?;
        let neighbor_index = scenario
            .cells
            .iter()
            .map(|c| {
                c.neighbor_ids
                    .iter()
                    .map(|id| scenario.index_of(*id).expect("validated neighbor"))
                    .collect()
            })
            .collect();
        Ok(Network {
            scenario,
            seed,
            neighbor_index,
        })
    }

    pub fn scenario(&self) -> &Scenario {
        &self.scenario
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn num_cells(&self) -> usize {
        self.scenario.cells.len()
    }

    pub fn num_slices(&self) -> usize {
        self.scenario.num_slices()
    }

    /// Indices (not ids) of the neighbours of the cell at index `k`.
    pub fn neighbor_indices(&self, k: usize) -> &[usize] {
        &self.neighbor_index[k]
    }

    /// UE population per cell and slice at step `t`: `round(U_max · tau_n(t))`.
    pub fn ue_counts(&self, t: u64) -> Vec<Vec<u32>> {
        let mask = &self.scenario.mask;
        let n = self.num_slices();
        let mut noise = vec![0.0; self.num_cells() * n];
        if mask.noise_std > 0.0 {
            let mut rng = SimRng::seed_from_u64(self.seed);
            rng.set_stream(t);
            for v in &mut noise {
                let z: f64 = StandardNormal.sample(&mut rng);
                *v = mask.noise_std * z;
            }
        }
        self.scenario
            .cells
            .iter()
            .enumerate()
            .map(|(k, cell)| {
                (0..n)
                    .map(|s| {
                        let tau = mask.value(t, s, cell.mask_phase_shift, noise[k * n + s]);
                        math::round(f64::from(cell.max_ues_per_slice) * tau) as u32
                    })
                    .collect()
            })
            .collect()
    }

    /// Offered traffic (Mbit/s) per cell and slice at step `t`.
    pub fn demands(&self, t: u64) -> Vec<Vec<f64>> {
        self.demands_from(&self.ue_counts(t))
    }

    fn demands_from(&self, ues: &[Vec<u32>]) -> Vec<Vec<f64>> {
        ues.iter()
            .map(|row| {
                row.iter()
                    .zip(&self.scenario.ue_rates)
                    .map(|(&u, &rate)| f64::from(u) * rate)
                    .collect()
            })
            .collect()
    }

    /// State at `t = 0` under the equal split. Interference is iterated to the
    /// load fixed point so that a network held at constant traffic and equal
    /// actions is stationary from the first step on.
    pub fn init(&self) -> NetworkState {
        let actions = vec![PartitionAction::equal(self.num_slices()); self.num_cells()];
        let ues = self.ue_counts(0);
        let demands = self.demands_from(&ues);
        let mut utilization = vec![0.0; self.num_cells()];
        let mut per_cell = Vec::new();
        for _ in 0..500 {
            let (metrics, next) = self
                .evaluate(&utilization, &actions, &demands, &ues)
                .expect("validated scenario with equal actions");
            let delta = next
                .iter()
                .zip(&utilization)
                .map(|(a, b)| (a - b).abs())
                .fold(0.0, f64::max);
            per_cell = metrics;
            utilization = next;
            if delta == 0.0 {
                break;
            }
        }
        NetworkState {
            step: 0,
            per_cell,
            actions,
            utilization,
            demands,
            seed: self.seed,
        }
    }

    fn evaluate(
        &self,
        previous_utilization: &[f64],
        actions: &[PartitionAction],
        demands: &[Vec<f64>],
        ues: &[Vec<u32>],
    ) -> Result<(Vec<Vec<SliceMetrics>>, Vec<f64>)> {
        let mut per_cell = Vec::with_capacity(self.num_cells());
        let mut utilization = Vec::with_capacity(self.num_cells());
        for (k, cell) in self.scenario.cells.iter().enumerate() {
            let neighbor_loads: Vec<f64> = self.neighbor_index[k]
                .iter()
                .map(|&j| previous_utilization[j])
                .collect();
            let efficiency = compute_efficiency(cell, &neighbor_loads)?;
            let metrics = compute_slice_metrics(
                cell,
                &actions[k],
                &demands[k],
                &ues[k],
                efficiency,
                &self.scenario.delay,
            )?;
            utilization.push(
                actions[k]
                    .shares()
                    .iter()
                    .zip(&metrics)
                    .map(|(a, m)| a * m.load)
                    .sum::<f64>()
                    .min(1.0),
            );
            per_cell.push(metrics);
        }
        Ok((per_cell, utilization))
    }

    /// Advances the network by one step. Interference uses the neighbours'
    /// utilisation from `state`; the returned vector holds each cell's reward.
    pub fn step(
        &self,
        state: &NetworkState,
        actions: &[PartitionAction],
    ) -> Result<(NetworkState, Vec<f64>)> {
        if actions.len() != self.num_cells() {
            return Err(Error::dim("cell actions", self.num_cells(), actions.len()));
        }
        if state.per_cell.len() != self.num_cells() || state.seed != self.seed {
            return Err(Error::Config("state does not belong to this network".into()));
        }
        for (k, a) in actions.iter().enumerate() {
            if a.len() != self.num_slices() {
                return Err(Error::Action(format!(
                    "cell index {k}: {} shares for {} slices",
                    a.len(),
                    self.num_slices()
                )));
            }
            // Re-validate in case the action was built through a path that
            // bypassed the constructor checks.
            PartitionAction::new(a.shares().to_vec())?;
        }
        let t = state.step + 1;
        let ues = self.ue_counts(t);
        let demands = self.demands_from(&ues);
        let (per_cell, utilization) = self.evaluate(&state.utilization, actions, &demands, &ues)?;
        let rewards = per_cell
            .iter()
            .zip(&self.scenario.cells)
            .map(|(m, c)| reward(m, &c.requirements))
            .collect::<Result<Vec<_>>>()?;
        let next = NetworkState {
            step: t,
            per_cell,
            actions: actions.to_vec(),
            utilization,
            demands,
            seed: self.seed,
        };
        Ok((next, rewards))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::{MaskParams, SliceRequirement};

    fn cell(neighbors: usize, snr_db: f64) -> CellConfig {
        CellConfig {
            cell_id: 0,
            bandwidth: 20.0,
            requirements: vec![SliceRequirement::new(1.0, 1.0).unwrap(); 4],
            neighbor_ids: (1..=neighbors as u32).collect(),
            interference_gains: vec![1.0; neighbors],
            max_ues_per_slice: 32,
            base_snr_db: snr_db,
            mask_phase_shift: 0.0,
        }
    }

    #[test]
    fn efficiency_interference_free() {
        let e = compute_efficiency(&cell(2, 0.0), &[0.0, 0.0]).unwrap();
        assert!((e - 1.0).abs() < 1e-15);
    }

    #[test]
    fn efficiency_full_neighbor_load() {
        let e = compute_efficiency(&cell(1, 10.0), &[1.0]).unwrap();
        // log2(1 + 10 / 2) = log2(6)
        assert!((e - 2.584962500721156).abs() < 1e-12, "{e}");
    }

    #[test]
    fn efficiency_decreases_with_neighbor_load() {
        let c = cell(3, 15.0);
        for base in [0.05, 0.1, 0.2, 0.35, 0.5] {
            let low = compute_efficiency(&c, &[base, 0.3, 0.3]).unwrap();
            let high = compute_efficiency(&c, &[2.0 * base, 0.3, 0.3]).unwrap();
            assert!(high < low);
        }
    }

    #[test]
    fn efficiency_dimension_error() {
        assert!(matches!(
            compute_efficiency(&cell(2, 0.0), &[0.0]),
            Err(Error::Dimension { .. })
        ));
    }

    fn metrics(shares: [f64; 4], demands: [f64; 4], ues: [u32; 4], e: f64) -> Vec<SliceMetrics> {
        compute_slice_metrics(
            &cell(0, 0.0),
            &PartitionAction::new(shares.to_vec()).unwrap(),
            &demands,
            &ues,
            e,
            &DelayModel::default(),
        )
        .unwrap()
    }

    #[test]
    fn idle_slice() {
        let m = metrics([0.25; 4], [0.0, 1.0, 1.0, 1.0], [0, 1, 1, 1], 1.0);
        assert_eq!(m[0].load, 0.0);
        assert_eq!(m[0].throughput, 0.0);
        assert_eq!(m[0].delay, 0.5);
    }

    #[test]
    fn worked_example() {
        // B = 20, e = 1, share 0.25 -> capacity 5; demand 10 over 4 UEs.
        let m = metrics([0.25; 4], [2.5, 10.0, 1.0, 1.0], [1, 4, 1, 1], 1.0);
        assert!((m[1].load - 1.0).abs() < 1e-15);
        assert!((m[1].throughput - 1.25).abs() < 1e-15);
        // demand 2.5 on capacity 5: load 0.5, delay 2 * d_min.
        assert!((m[0].load - 0.5).abs() < 1e-15);
        assert!((m[0].delay - 1.0).abs() < 1e-15);
        assert!((m[0].throughput - 2.5).abs() < 1e-15);
    }

    #[test]
    fn saturation_boundary() {
        let m = metrics([0.25; 4], [5.0, 1.0, 1.0, 1.0], [1, 1, 1, 1], 1.0);
        assert!((m[0].load - 1.0).abs() < 1e-12);
        assert!((m[0].throughput - 5.0).abs() < 1e-12);
    }

    #[test]
    fn zero_share_with_demand() {
        let m = metrics([0.0, 0.5, 0.25, 0.25], [3.0, 1.0, 1.0, 1.0], [2, 1, 1, 1], 2.0);
        assert_eq!(m[0].load, 1.0);
        assert_eq!(m[0].throughput, 0.0);
        assert_eq!(m[0].delay, 20.0);
    }

    #[test]
    fn negative_demand_rejected() {
        let r = compute_slice_metrics(
            &cell(0, 0.0),
            &PartitionAction::equal(4),
            &[1.0, -1.0, 0.0, 0.0],
            &[1, 1, 1, 1],
            1.0,
            &DelayModel::default(),
        );
        assert!(matches!(r, Err(Error::Domain(_))));
    }

    #[test]
    fn init_shapes_and_determinism() {
        let mut s = Scenario::three_cell();
        s.cells.truncate(2);
        s.cells[0].neighbor_ids = vec![2];
        s.cells[0].interference_gains = vec![0.5];
        s.cells[1].neighbor_ids = vec![1];
        s.cells[1].interference_gains = vec![0.5];
        s.ue_rates.truncate(2);
        s.mask.phases.truncate(2);
        for c in &mut s.cells {
            c.requirements.truncate(2);
        }
        let a = Network::new(s.clone(), 7).unwrap().init();
        let b = Network::new(s, 7).unwrap().init();
        assert_eq!(a.per_cell.len(), 2);
        assert!(a.per_cell.iter().all(|row| row.len() == 2));
        assert_eq!(a, b);
    }

    #[test]
    fn twelve_cell_init_invariants() {
        for seed in [0, 1, 99] {
            let state = Network::new(Scenario::twelve_cell(), seed).unwrap().init();
            assert_eq!(state.per_cell.len(), 12);
            for row in &state.per_cell {
                assert_eq!(row.len(), 4);
                assert!(row.iter().all(|m| (0.0..=1.0).contains(&m.load)));
            }
        }
    }

    fn constant_traffic() -> Scenario {
        let mut s = Scenario::three_cell();
        s.mask = MaskParams {
            amplitude: 0.0,
            noise_std: 0.0,
            offset: 0.3,
            ..s.mask
        };
        s
    }

    #[test]
    fn stationary_under_constant_traffic() {
        let net = Network::new(constant_traffic(), 3).unwrap();
        let equal = vec![PartitionAction::equal(4); 3];
        let s0 = net.init();
        let (s1, r1) = net.step(&s0, &equal).unwrap();
        let (s2, r2) = net.step(&s1, &equal).unwrap();
        for k in 0..3 {
            for n in 0..4 {
                let (a, b) = (s1.per_cell[k][n], s2.per_cell[k][n]);
                assert!((a.load - b.load).abs() < 1e-12);
                assert!((a.throughput - b.throughput).abs() < 1e-12);
                assert!((a.delay - b.delay).abs() < 1e-12);
            }
            assert!((r1[k] - r2[k]).abs() < 1e-12);
        }
    }

    #[test]
    fn own_share_increase_helps_throughput() {
        let net = Network::new(Scenario::three_cell(), 11).unwrap();
        let s0 = net.init();
        let base = vec![PartitionAction::equal(4); 3];
        let mut more = base.clone();
        more[0] = PartitionAction::new(vec![0.4, 0.2, 0.2, 0.2]).unwrap();
        let (a, _) = net.step(&s0, &base).unwrap();
        let (b, _) = net.step(&s0, &more).unwrap();
        assert!(b.per_cell[0][0].throughput >= a.per_cell[0][0].throughput);
    }

    #[test]
    fn step_rejects_wrong_action_count() {
        let net = Network::new(Scenario::three_cell(), 1).unwrap();
        let s0 = net.init();
        assert!(net.step(&s0, &[PartitionAction::equal(4)]).is_err());
        let wrong = vec![PartitionAction::equal(3); 3];
        assert!(matches!(net.step(&s0, &wrong), Err(Error::Action(_))));
    }
}
