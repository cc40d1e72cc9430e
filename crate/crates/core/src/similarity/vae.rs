use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use super::LatentStats;
use crate::nn::{Activation, Adam, AdamConfig, Gradients, Mlp};
use crate::{math, CellId, Error, Result};

/// Standard deviations below this are treated as constant features.
const STD_FLOOR: f64 = 1e-8;
/// Range of the log-variance head used for sampling.
const LOGVAR_RANGE: (f64, f64) = (-30.0, 20.0);

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default))]
pub struct VaeConfig {
    pub latent_dim: usize,
    pub encoder_hidden: Vec<usize>,
    pub decoder_hidden: Vec<usize>,
    /// Weight of the KL term in the loss.
    pub kl_weight: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    /// Fewest pooled samples accepted for training.
    pub min_samples: usize,
}

impl Default for VaeConfig {
    fn default() -> Self {
        VaeConfig {
            latent_dim: 4,
            encoder_hidden: vec![64, 24],
            decoder_hidden: vec![24, 64],
            kl_weight: 1e-3,
            epochs: 200,
            batch_size: 32,
            learning_rate: 1e-3,
            min_samples: 50,
        }
    }
}

impl VaeConfig {
    pub fn validate(&self) -> Result<()> {
        if self.latent_dim == 0 || self.batch_size == 0 {
            return Err(Error::Config(
                "VAE latent_dim and batch_size must be positive".into(),
            ));
        }
        if self.encoder_hidden.contains(&0) || self.decoder_hidden.contains(&0) {
            return Err(Error::Config("VAE hidden layers must be non-empty".into()));
        }
        if !(self.kl_weight >= 0.0 && self.kl_weight.is_finite())
            || !(self.learning_rate > 0.0 && self.learning_rate.is_finite())
        {
            return Err(Error::Config(
                "VAE kl_weight must be >= 0 and learning_rate > 0".into(),
            ));
        }
        Ok(())
    }
}

/// Per-feature z-score.
#[derive(Debug, Clone, PartialEq)]
pub struct Standardizer {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl Standardizer {
    /// Pooled statistics of `samples`; constant features get unit scale.
    pub fn fit(samples: &[Vec<f64>]) -> Result<Self> {
        let Some(first) = samples.first() else {
            return Err(Error::Domain("cannot standardise an empty sample set".into()));
        };
        let d = first.len();
        let n = samples.len() as f64;
        let mut mean = vec![0.0; d];
        for x in samples {
            if x.len() != d {
                return Err(Error::dim("sample", d, x.len()));
            }
            mean.iter_mut().zip(x).for_each(|(m, v)| *m += v / n);
        }
        let mut var = vec![0.0; d];
        for x in samples {
            var.iter_mut()
                .zip(x.iter().zip(&mean))
                .for_each(|(s, (v, m))| *s += (v - m) * (v - m) / n);
        }
        let std = var
            .into_iter()
            .map(|v| {
                let s = math::sqrt(v);
                if s < STD_FLOOR {
                    1.0
                } else {
                    s
                }
            })
            .collect();
        Ok(Standardizer { mean, std })
    }

    pub fn apply(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.mean.len() {
            return Err(Error::dim("sample", self.mean.len(), x.len()));
        }
        Ok(x.iter()
            .zip(self.mean.iter().zip(&self.std))
            .map(|(v, (m, s))| (v - m) / s)
            .collect())
    }
}

/// Encoder `x → (μ, log σ²)` and decoder `z → x̂`, both working on
/// standardised inputs.
#[derive(Debug, Clone, PartialEq)]
pub struct VaeModel {
    pub encoder: Mlp,
    pub decoder: Mlp,
    pub standardizer: Standardizer,
    pub kl_weight: f64,
    pub latent_dim: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct VaeReport {
    /// Mean per-sample loss of every epoch.
    pub epoch_losses: Vec<f64>,
}

impl VaeModel {
    pub fn new<R: Rng + ?Sized>(
        input_dim: usize,
        config: &VaeConfig,
        standardizer: Standardizer,
        rng: &mut R,
    ) -> Result<Self> {
        config.validate()?;
        if standardizer.mean.len() != input_dim {
            return Err(Error::dim("standardizer", input_dim, standardizer.mean.len()));
        }
        let l = config.latent_dim;
        let mut enc = vec![input_dim];
        enc.extend(&config.encoder_hidden);
        enc.push(2 * l);
        let mut dec = vec![l];
        dec.extend(&config.decoder_hidden);
        dec.push(input_dim);
        Ok(VaeModel {
            encoder: Mlp::new(&enc, Activation::Relu, Activation::Identity, rng),
            decoder: Mlp::new(&dec, Activation::Relu, Activation::Identity, rng),
            standardizer,
            kl_weight: config.kl_weight,
            latent_dim: l,
        })
    }

    pub fn input_dim(&self) -> usize {
        self.encoder.input_dim()
    }

    /// Posterior of `x` (raw units); `σ = exp(½ · log σ²)`.
    pub fn encode(&self, agent: CellId, x: &[f64]) -> Result<LatentStats> {
        let h = self.encoder.predict(&self.standardizer.apply(x)?)?;
        let l = self.latent_dim;
        Ok(LatentStats {
            agent,
            mu: h[..l].to_vec(),
            sigma: h[l..]
                .iter()
                .map(|v| math::exp(0.5 * v.clamp(LOGVAR_RANGE.0, LOGVAR_RANGE.1)))
                .collect(),
        })
    }

    /// Decoded posterior mean, in standardised units.
    pub fn reconstruct(&self, x: &[f64]) -> Result<Vec<f64>> {
        let z = self.encode(0, x)?;
        self.decoder.predict(&z.mu)
    }

    /// Mean squared reconstruction error per feature, in standardised units.
    pub fn reconstruction_mse(&self, samples: &[Vec<f64>]) -> Result<f64> {
        if samples.is_empty() {
            return Err(Error::Domain("no samples to reconstruct".into()));
        }
        let mut total = 0.0;
        for x in samples {
            let xs = self.standardizer.apply(x)?;
            let r = self.reconstruct(x)?;
            total += xs.iter().zip(&r).map(|(a, b)| (a - b) * (a - b)).sum::<f64>() / xs.len() as f64;
        }
        Ok(total / samples.len() as f64)
    }

    /// Loss of one standardised sample and its encoder and decoder gradients,
    /// multiplied by `scale`:
    /// `‖x − x̂‖² + α · ½ Σ (σ² + μ² − 1 − log σ²)` with `z = μ + σ ⊙ ε`.
    /// The returned loss is unscaled.
    pub fn sample_gradients(
        &self,
        xs: &[f64],
        eps: &[f64],
        scale: f64,
    ) -> Result<(f64, Gradients, Gradients)> {
        let l = self.latent_dim;
        let (h, enc_cache) = self.encoder.forward(xs)?;
        let (lo, hi) = LOGVAR_RANGE;
        let logvar: Vec<f64> = h[l..].iter().map(|v| v.clamp(lo, hi)).collect();
        let sigma: Vec<f64> = logvar.iter().map(|v| math::exp(0.5 * v)).collect();
        let z: Vec<f64> = (0..l).map(|i| h[i] + sigma[i] * eps[i]).collect();
        let (xr, dec_cache) = self.decoder.forward(&z)?;

        let recon: f64 = xr.iter().zip(xs).map(|(a, b)| (a - b) * (a - b)).sum();
        let kl: f64 = (0..l)
            .map(|i| 0.5 * (sigma[i] * sigma[i] + h[i] * h[i] - 1.0 - logvar[i]))
            .sum();
        let loss = recon + self.kl_weight * kl;

        let d_out: Vec<f64> = xr.iter().zip(xs).map(|(a, b)| 2.0 * (a - b) * scale).collect();
        let (dec_grads, dz) = self.decoder.backward(&dec_cache, &d_out)?;
        let mut dh = vec![0.0; 2 * l];
        for i in 0..l {
            dh[i] = dz[i] + self.kl_weight * h[i] * scale;
            let raw = h[l + i];
            dh[l + i] = if raw < lo || raw > hi {
                0.0
            } else {
                dz[i] * eps[i] * 0.5 * sigma[i] + self.kl_weight * 0.5 * (sigma[i] * sigma[i] - 1.0) * scale
            };
        }
        let (enc_grads, _) = self.encoder.backward(&enc_cache, &dh)?;
        Ok((loss, enc_grads, dec_grads))
    }
}

/// Trains a VAE on the pooled `samples` (raw units). Features are
/// standardised with the pooled statistics, which are stored in the model.
pub fn vae_train<R: Rng + ?Sized>(
    samples: &[Vec<f64>],
    config: &VaeConfig,
    rng: &mut R,
) -> Result<(VaeModel, VaeReport)> {
    config.validate()?;
    if samples.len() < config.min_samples.max(1) {
        return Err(Error::Domain(format!(
            "VAE training needs at least {} samples, got {}",
            config.min_samples,
            samples.len()
        )));
    }
    let standardizer = Standardizer::fit(samples)?;
    let data: Vec<Vec<f64>> = samples
        .iter()
        .map(|x| standardizer.apply(x))
        .collect::<Result<_>>()?;
    let mut model = VaeModel::new(samples[0].len(), config, standardizer, rng)?;
    let mut enc_opt = Adam::new(&model.encoder, AdamConfig::default());
    let mut dec_opt = Adam::new(&model.decoder, AdamConfig::default());
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut epoch_losses = Vec::with_capacity(config.epochs);
    let l = config.latent_dim;

    for epoch in 0..config.epochs {
        order.shuffle(rng);
        let mut epoch_loss = 0.0;
        for chunk in order.chunks(config.batch_size) {
            let scale = 1.0 / chunk.len() as f64;
            let mut enc_grads = Gradients::zeros_like(&model.encoder);
            let mut dec_grads = Gradients::zeros_like(&model.decoder);
            for &i in chunk {
                let eps: Vec<f64> = (0..l).map(|_| StandardNormal.sample(rng)).collect();
                let (loss, ge, gd) = model.sample_gradients(&data[i], &eps, scale)?;
                epoch_loss += loss;
                enc_grads.add_assign(&ge);
                dec_grads.add_assign(&gd);
            }
            if !epoch_loss.is_finite() {
                return Err(Error::Numeric(format!("VAE loss diverged in epoch {epoch}")));
            }
            enc_opt
                .step(&mut model.encoder, &enc_grads, config.learning_rate)
                .map_err(|e| Error::Numeric(format!("VAE epoch {epoch}: {e}")))?;
            dec_opt
                .step(&mut model.decoder, &dec_grads, config.learning_rate)
                .map_err(|e| Error::Numeric(format!("VAE epoch {epoch}: {e}")))?;
        }
        epoch_losses.push(epoch_loss / data.len() as f64);
    }
    Ok((model, VaeReport { epoch_losses }))
}
