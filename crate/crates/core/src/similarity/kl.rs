use alloc::format;
use alloc::vec::Vec;

use crate::{math, CellId, Error, Result};

/// Diagonal Gaussian posterior `N(mu, diag(sigma²))` of one sample.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct LatentStats {
    pub agent: CellId,
    pub mu: Vec<f64>,
    pub sigma: Vec<f64>,
}

impl LatentStats {
    pub fn dim(&self) -> usize {
        self.mu.len()
    }

    pub fn max_sigma(&self) -> f64 {
        self.sigma.iter().copied().fold(0.0, f64::max)
    }
}

fn check_pair(p: &LatentStats, q: &LatentStats) -> Result<()> {
    let l = p.mu.len();
    for (len, ctx) in [
        (p.sigma.len(), "latent sigma"),
        (q.mu.len(), "latent mean"),
        (q.sigma.len(), "latent sigma"),
    ] {
        if len != l {
            return Err(Error::dim(ctx, l, len));
        }
    }
    if let Some(v) = p.mu.iter().chain(&q.mu).find(|v| !v.is_finite()) {
        return Err(Error::Domain(format!("non-finite latent mean {v}")));
    }
    if let Some(s) = p
        .sigma
        .iter()
        .chain(&q.sigma)
        .find(|s| !(**s >= 0.0 && s.is_finite()))
    {
        return Err(Error::Domain(format!(
            "latent sigma {s} is negative or non-finite"
        )));
    }
    Ok(())
}

/// `KL(p ‖ q)` between diagonal Gaussians:
///
/// `½ Σ_l [ρ_l − 1 − ln ρ_l + (μ_p − μ_q)_l² / σ_q,l²]` with `ρ_l = σ_p,l² / σ_q,l²`,
/// which equals `½[ln(|Σ_q|/|Σ_p|) − L + Δμᵀ Σ_q⁻¹ Δμ + tr(Σ_q⁻¹ Σ_p)]`.
pub fn kl_gaussian(p: &LatentStats, q: &LatentStats) -> Result<f64> {
    check_pair(p, q)?;
    let mut total = 0.0;
    for l in 0..p.dim() {
        let (sp, sq) = (p.sigma[l], q.sigma[l]);
        if sq == 0.0 || sp == 0.0 {
            return Err(Error::Singular { dim: l });
        }
        let ratio = sp / sq;
        let d = ratio * ratio - 1.0;
        // ρ − 1 − ln ρ ≥ 0; the max only absorbs rounding near ρ = 1.
        let spread = (d - math::ln_1p(d)).max(0.0);
        let dm = (p.mu[l] - q.mu[l]) / sq;
        total += spread + dm * dm;
    }
    Ok(0.5 * total)
}

/// KL between two Gaussians sharing the isotropic scale `sigma`:
/// `Σ_l (μ_n − μ_m)_l² / (2σ²)`.
pub fn kl_mean_simplified(mu_n: &[f64], mu_m: &[f64], sigma: f64) -> Result<f64> {
    if mu_n.len() != mu_m.len() {
        return Err(Error::dim("latent mean", mu_n.len(), mu_m.len()));
    }
    if !(sigma > 0.0 && sigma.is_finite()) {
        return Err(Error::Domain(format!(
            "simplified KL needs sigma > 0, got {sigma}"
        )));
    }
    let sq: f64 = mu_n.iter().zip(mu_m).map(|(a, b)| (a - b) * (a - b)).sum();
    Ok(sq / (2.0 * sigma * sigma))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn g(mu: &[f64], sigma: &[f64]) -> LatentStats {
        LatentStats {
            agent: 0,
            mu: mu.to_vec(),
            sigma: sigma.to_vec(),
        }
    }

    #[test]
    fn unit_truths() {
        let p = g(&[0.3, -1.2], &[0.5, 2.0]);
        assert_eq!(kl_gaussian(&p, &p).unwrap(), 0.0);
        let one = kl_gaussian(&g(&[0.0], &[1.0]), &g(&[1.0], &[1.0])).unwrap();
        assert!((one - 0.5).abs() <= 1e-12);
    }

    #[test]
    fn variance_only_case() {
        // p = N(0, 2) (variance 2), q = N(0, 1): ½(2 − 1 − ln 2).
        let kl = kl_gaussian(&g(&[0.0], &[2f64.sqrt()]), &g(&[0.0], &[1.0])).unwrap();
        let expected = 0.5 * (1.0 - core::f64::consts::LN_2);
        assert!((kl - expected).abs() < 1e-15, "{kl}");
        assert!((kl - 0.1534).abs() < 1e-4);
    }

    #[test]
    fn asymmetric() {
        let p = g(&[0.0], &[1.0]);
        let q = g(&[1.0], &[3.0]);
        assert_ne!(kl_gaussian(&p, &q).unwrap(), kl_gaussian(&q, &p).unwrap());
    }

    #[test]
    fn errors() {
        let p = g(&[0.0, 0.0], &[1.0, 1.0]);
        assert_eq!(
            kl_gaussian(&p, &g(&[0.0, 0.0], &[1.0, 0.0])),
            Err(Error::Singular { dim: 1 })
        );
        assert!(matches!(
            kl_gaussian(&p, &g(&[0.0], &[1.0])),
            Err(Error::Dimension { .. })
        ));
        assert!(kl_gaussian(&p, &g(&[0.0, 0.0], &[1.0, -1.0])).is_err());
        assert!(kl_mean_simplified(&[1.0], &[0.0], 0.0).is_err());
        assert!(kl_mean_simplified(&[1.0], &[0.0], -0.1).is_err());
    }

    #[test]
    fn simplified_examples() {
        assert_eq!(kl_mean_simplified(&[0.4, 0.1], &[0.4, 0.1], 0.3).unwrap(), 0.0);
        let v = kl_mean_simplified(&[1.0, 0.0], &[0.0, 0.0], 0.1).unwrap();
        assert!((v - 50.0).abs() < 1e-12, "{v}");
    }

    proptest! {
        #[test]
        fn non_negative(
            pairs in prop::collection::vec((-5.0f64..5.0, 1e-3f64..5.0, -5.0f64..5.0, 1e-3f64..5.0), 1..8)
        ) {
            let p = g(&pairs.iter().map(|v| v.0).collect::<Vec<_>>(), &pairs.iter().map(|v| v.1).collect::<Vec<_>>());
            let q = g(&pairs.iter().map(|v| v.2).collect::<Vec<_>>(), &pairs.iter().map(|v| v.3).collect::<Vec<_>>());
            prop_assert!(kl_gaussian(&p, &q).unwrap() >= 0.0);
            prop_assert_eq!(kl_gaussian(&p, &p).unwrap(), 0.0);
        }

        #[test]
        fn simplified_matches_exact_at_small_sigma(
            mus in prop::collection::vec((-3.0f64..3.0, -3.0f64..3.0), 4),
            sigma in 1e-6f64..1e-3,
        ) {
            let a: Vec<f64> = mus.iter().map(|m| m.0).collect();
            let b: Vec<f64> = mus.iter().map(|m| m.1).collect();
            let exact = kl_gaussian(&g(&a, &[sigma; 4]), &g(&b, &[sigma; 4])).unwrap();
            let simple = kl_mean_simplified(&a, &b, sigma).unwrap();
            prop_assert!((exact - simple).abs() / exact.max(1e-12) < 1e-10);
        }
    }
}
