use super::{PartitionAction, SliceMetrics, SliceRequirement};
use crate::{Error, Result};

/// Satisfaction level of a cell: the worst slice's `min(φ/φ*, d*/d, 1)`.
///
/// A zero delay counts as fully satisfying the delay target.
pub fn reward(metrics: &[SliceMetrics], requirements: &[SliceRequirement]) -> Result<f64> {
    if metrics.len() != requirements.len() {
        return Err(Error::dim(
            "slice requirements",
            metrics.len(),
            requirements.len(),
        ));
    }
    if metrics.is_empty() {
        return Err(Error::Domain("reward of a cell without slices".into()));
    }
    let r = metrics
        .iter()
        .zip(requirements)
        .map(|(m, req)| {
            let throughput = m.throughput / req.throughput_target;
            let delay = if m.delay > 0.0 {
                req.delay_target / m.delay
            } else {
                1.0
            };
            throughput.min(delay).min(1.0)
        })
        .fold(1.0, f64::min);
    Ok(r.max(0.0))
}

/// Traffic-aware split proportional to the offered traffic of each slice.
/// Without traffic every slice gets `1/N`.
pub fn baseline_action(demands: &[f64]) -> Result<PartitionAction> {
    if demands.is_empty() {
        return Err(Error::Domain("baseline for zero slices".into()));
    }
    PartitionAction::from_weights(demands)
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;
    use alloc::vec::Vec;
    use proptest::prelude::*;

    fn m(throughput: f64, delay: f64) -> SliceMetrics {
        SliceMetrics {
            throughput,
            delay,
            load: 0.5,
            ue_count: 1,
        }
    }

    fn reqs() -> Vec<SliceRequirement> {
        [(4.0, 3.0), (3.0, 2.0), (2.0, 1.0), (1.0, 1.0)]
            .iter()
            .map(|&(t, d)| SliceRequirement::new(t, d).unwrap())
            .collect()
    }

    #[test]
    fn exactly_met_targets() {
        let ms = vec![m(4.0, 3.0), m(3.0, 2.0), m(2.0, 1.0), m(1.0, 1.0)];
        assert_eq!(reward(&ms, &reqs()).unwrap(), 1.0);
    }

    #[test]
    fn binding_throughput_term() {
        let ms = vec![m(2.0, 1.0), m(5.0, 1.0), m(3.0, 0.5), m(2.0, 0.5)];
        assert_eq!(reward(&ms, &reqs()).unwrap(), 0.5);
    }

    #[test]
    fn binding_delay_term() {
        let ms = vec![m(5.0, 1.0), m(5.0, 1.0), m(3.0, 2.0), m(2.0, 0.5)];
        assert_eq!(reward(&ms, &reqs()).unwrap(), 0.5);
    }

    #[test]
    fn zero_delay_is_best_case() {
        let ms = vec![m(5.0, 0.0), m(5.0, 0.0), m(3.0, 0.0), m(2.0, 0.0)];
        assert_eq!(reward(&ms, &reqs()).unwrap(), 1.0);
    }

    #[test]
    fn dimension_mismatch() {
        assert!(reward(&[m(1.0, 1.0)], &reqs()).is_err());
    }

    #[test]
    fn baseline_examples() {
        assert_eq!(baseline_action(&[1.0; 4]).unwrap().shares(), &[0.25; 4]);
        assert_eq!(
            baseline_action(&[3.0, 1.0, 0.0, 0.0]).unwrap().shares(),
            &[0.75, 0.25, 0.0, 0.0]
        );
        assert_eq!(baseline_action(&[0.0; 4]).unwrap().shares(), &[0.25; 4]);
    }

    proptest! {
        #[test]
        fn reward_in_unit_interval(
            vals in prop::collection::vec((0.0f64..50.0, 0.0f64..50.0, 0.01f64..10.0, 0.01f64..10.0), 1..6)
        ) {
            let ms: Vec<_> = vals.iter().map(|v| m(v.0, v.1)).collect();
            let rs: Vec<_> = vals.iter().map(|v| SliceRequirement::new(v.2, v.3).unwrap()).collect();
            let r = reward(&ms, &rs).unwrap();
            prop_assert!((0.0..=1.0).contains(&r));
        }

        #[test]
        fn baseline_is_simplex(d in prop::collection::vec(0.0f64..1e3, 1..8)) {
            let a = baseline_action(&d).unwrap();
            prop_assert!(PartitionAction::new(a.shares().to_vec()).is_ok());
        }

        #[test]
        fn slice_permutation_commutes(
            vals in prop::collection::vec((0.0f64..50.0, 0.0f64..50.0, 0.01f64..10.0, 0.01f64..10.0), 4),
            rot in 0usize..4,
        ) {
            let ms: Vec<_> = vals.iter().map(|v| m(v.0, v.1)).collect();
            let rs: Vec<_> = vals.iter().map(|v| SliceRequirement::new(v.2, v.3).unwrap()).collect();
            let mut ms2 = ms.clone();
            let mut rs2 = rs.clone();
            ms2.rotate_left(rot);
            rs2.rotate_left(rot);
            prop_assert_eq!(reward(&ms, &rs).unwrap(), reward(&ms2, &rs2).unwrap());

            let d: Vec<f64> = vals.iter().map(|v| v.0).collect();
            let mut d2 = d.clone();
            d2.rotate_left(rot);
            let mut a = baseline_action(&d).unwrap().into_inner();
            a.rotate_left(rot);
            let a2 = baseline_action(&d2).unwrap().into_inner();
            for (x, y) in a.iter().zip(&a2) {
                prop_assert!((x - y).abs() < 1e-12);
            }
        }
    }
}
