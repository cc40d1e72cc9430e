use alloc::format;
use alloc::vec::Vec;
use core::f64::consts::PI;

use crate::math;
use crate::{Error, Result};

/// Parameters of the per-slice traffic masks.
///
/// `tau_n(t) = clip(offset + amplitude * sin(2π (t / period + phase_n + shift)) + noise, 0, 1)`
/// where `shift` is the cell's phase shift and `noise` is drawn by the
/// simulator with standard deviation `noise_std`.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct MaskParams {
    /// In steps.
    pub period: f64,
    pub offset: f64,
    pub amplitude: f64,
    /// Phase of each slice, in periods.
    pub phases: Vec<f64>,
    pub noise_std: f64,
}

impl Default for MaskParams {
    fn default() -> Self {
        MaskParams {
            period: 100.0,
            offset: 0.5,
            amplitude: 0.3,
            phases: Vec::from([0.0, 0.25, 0.5, 0.75]),
            noise_std: 0.0,
        }
    }
}

impl MaskParams {
    pub(crate) fn validate(&self, num_slices: usize) -> Result<()> {
        if !(self.period > 0.0 && self.period.is_finite()) {
            return Err(Error::Config(format!(
                "mask period must be positive, got {}",
                self.period
            )));
        }
        if self.phases.len() != num_slices {
            return Err(Error::Config(format!(
                "mask declares {} phases for {num_slices} slices",
                self.phases.len()
            )));
        }
        if self.noise_std.is_nan()
            || self.noise_std < 0.0
            || !self.offset.is_finite()
            || !self.amplitude.is_finite()
        {
            return Err(Error::Config(
                "mask offset, amplitude and noise must be finite, noise non-negative".into(),
            ));
        }
        Ok(())
    }

    /// Mask value with an explicit cell phase shift and noise sample.
    pub fn value(&self, t: u64, slice: usize, shift: f64, noise: f64) -> f64 {
        let phase = t as f64 / self.period + self.phases[slice] + shift;
        let raw = self.offset + self.amplitude * math::sin(2.0 * PI * phase) + noise;
        raw.clamp(0.0, 1.0)
    }
}

/// Noise-free mask value `tau_n(t)` of slice `slice` for an unshifted cell.
pub fn traffic_mask(t: u64, slice: usize, params: &MaskParams) -> f64 {
    params.value(t, slice, 0.0, 0.0)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_amplitude_is_constant_half() {
        let params = MaskParams {
            amplitude: 0.0,
            ..MaskParams::default()
        };
        for t in 0..500 {
            for n in 0..4 {
                assert_eq!(traffic_mask(t, n, &params), 0.5);
            }
        }
    }

    #[test]
    fn periodic_without_noise() {
        let params = MaskParams {
            period: 50.0,
            ..MaskParams::default()
        };
        for t in 0..200 {
            for n in 0..4 {
                let a = traffic_mask(t, n, &params);
                let b = traffic_mask(t + 50, n, &params);
                assert!((a - b).abs() < 1e-12, "t={t} n={n}: {a} vs {b}");
            }
        }
    }

    #[test]
    fn mean_over_period_matches_offset() {
        // Trapezoidal integral of the continuous mask over one period, compared
        // with the sampled mean of the discrete mask.
        let params = MaskParams {
            period: 100.0,
            offset: 0.35,
            amplitude: 0.25,
            ..MaskParams::default()
        };
        for n in 0..4 {
            let m = 10_000;
            let mut integral = 0.0;
            for i in 0..m {
                let f = |s: f64| {
                    let x = params.offset
                        + params.amplitude * libm::sin(2.0 * PI * (s / params.period + params.phases[n]));
                    x.clamp(0.0, 1.0)
                };
                let s0 = params.period * i as f64 / m as f64;
                let s1 = params.period * (i + 1) as f64 / m as f64;
                integral += 0.5 * (f(s0) + f(s1)) * (s1 - s0);
            }
            let continuous_mean = integral / params.period;
            let sampled: f64 = (0..100).map(|t| traffic_mask(t, n, &params)).sum::<f64>() / 100.0;
            assert!((continuous_mean - 0.35).abs() < 0.05);
            assert!((sampled - 0.35).abs() < 0.05, "slice {n}: {sampled}");
        }
    }

    #[test]
    fn values_are_clipped() {
        let params = MaskParams {
            offset: 0.9,
            amplitude: 0.5,
            ..MaskParams::default()
        };
        for t in 0..100 {
            let v = params.value(t, 0, 0.1, 0.3);
            assert!((0.0..=1.0).contains(&v));
        }
    }
}
