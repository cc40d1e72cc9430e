use alloc::format;
use alloc::vec::Vec;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::{Error, Result};

/// Reparameterised draw `z = mu + sigma ⊙ ε` with `ε ~ N(0, I)`.
pub fn gaussian_sample<R: Rng + ?Sized>(mu: &[f64], sigma: &[f64], rng: &mut R) -> Result<Vec<f64>> {
    if mu.len() != sigma.len() {
        return Err(Error::dim("gaussian sigma", mu.len(), sigma.len()));
    }
    if let Some((i, s)) = sigma.iter().enumerate().find(|(_, s)| s.is_nan() || **s < 0.0) {
        return Err(Error::Domain(format!("sigma[{i}] = {s} is negative")));
    }
    Ok(mu
        .iter()
        .zip(sigma)
        .map(|(&m, &s)| {
            let eps: f64 = StandardNormal.sample(rng);
            m + s * eps
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::SimRng;
    use rand::SeedableRng;

    #[test]
    fn zero_sigma_returns_mean() {
        let mut rng = SimRng::seed_from_u64(9);
        let mu = [1.5, -2.0, 0.25];
        assert_eq!(gaussian_sample(&mu, &[0.0; 3], &mut rng).unwrap(), mu.to_vec());
    }

    #[test]
    fn unit_normal_moments() {
        let mut rng = SimRng::seed_from_u64(2024);
        let n = 100_000;
        let draws: Vec<f64> = (0..n)
            .map(|_| gaussian_sample(&[0.0], &[1.0], &mut rng).unwrap()[0])
            .collect();
        let mean = draws.iter().sum::<f64>() / n as f64;
        let var = draws.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1) as f64;
        assert!(mean.abs() < 0.02, "mean {mean}");
        assert!((0.97..=1.03).contains(&var), "variance {var}");
    }

    #[test]
    fn reproducible_under_seed() {
        let mut a = SimRng::seed_from_u64(3);
        let mut b = a.clone();
        let mu = [0.0, 1.0];
        let sigma = [0.5, 2.0];
        assert_eq!(
            gaussian_sample(&mu, &sigma, &mut a).unwrap(),
            gaussian_sample(&mu, &sigma, &mut b).unwrap()
        );
    }

    #[test]
    fn negative_sigma_rejected() {
        let mut rng = SimRng::seed_from_u64(0);
        assert!(matches!(
            gaussian_sample(&[0.0], &[-1.0], &mut rng),
            Err(Error::Domain(_))
        ));
    }
}
