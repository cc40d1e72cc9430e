use alloc::collections::BTreeMap;
use alloc::format;
use alloc::vec::Vec;

use super::{kl_gaussian, kl_mean_simplified, LatentStats};
use crate::{CellId, Error, Result};

/// Largest posterior σ for which the shared-σ approximation is used.
pub const SIMPLIFIED_MAX_SIGMA: f64 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "lowercase"))]
pub enum DistanceMode {
    Exact,
    Simplified,
}

impl DistanceMode {
    pub fn as_str(self) -> &'static str {
        match self {
            DistanceMode::Exact => "exact",
            DistanceMode::Simplified => "simplified",
        }
    }
}

/// Which posterior is the first KL argument.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum Orientation {
    #[default]
    SourceTarget,
    TargetSource,
}

/// How a single pair of posteriors is compared.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Metric {
    Exact,
    /// Means only, with one σ shared by every posterior.
    Simplified {
        sigma: f64,
    },
}

impl Metric {
    pub fn mode(self) -> DistanceMode {
        match self {
            Metric::Exact => DistanceMode::Exact,
            Metric::Simplified { .. } => DistanceMode::Simplified,
        }
    }

    fn kl(self, p: &LatentStats, q: &LatentStats) -> Result<f64> {
        match self {
            Metric::Exact => kl_gaussian(p, q),
            Metric::Simplified { sigma } => kl_mean_simplified(&p.mu, &q.mu, sigma),
        }
    }
}

/// Median of every σ entry of every posterior in `sets`.
pub fn pooled_sigma<'a, I>(sets: I) -> Option<f64>
where
    I: IntoIterator<Item = &'a [LatentStats]>,
{
    let mut all: Vec<f64> = sets
        .into_iter()
        .flat_map(|s| s.iter().flat_map(|z| z.sigma.iter().copied()))
        .collect();
    if all.is_empty() {
        return None;
    }
    all.sort_by(f64::total_cmp);
    let m = all.len() / 2;
    Some(if all.len() % 2 == 1 {
        all[m]
    } else {
        0.5 * (all[m - 1] + all[m])
    })
}

/// The metric actually used for a requested mode. The shared-σ form is only
/// valid while every posterior is nearly deterministic, so it falls back to
/// the exact KL as soon as any σ exceeds [`SIMPLIFIED_MAX_SIGMA`].
pub fn resolve_metric<'a, I>(requested: DistanceMode, sets: I) -> Metric
where
    I: IntoIterator<Item = &'a [LatentStats]> + Clone,
{
    if requested == DistanceMode::Exact {
        return Metric::Exact;
    }
    let max = sets
        .clone()
        .into_iter()
        .flat_map(|s| s.iter().map(LatentStats::max_sigma))
        .fold(0.0, f64::max);
    match pooled_sigma(sets) {
        Some(sigma) if max <= SIMPLIFIED_MAX_SIGMA && sigma > 0.0 => Metric::Simplified { sigma },
        _ => Metric::Exact,
    }
}

/// Mean KL over all pairs of a source and a target posterior.
///
/// Pair values are summed in sorted order, so the result does not depend on
/// the order of samples within either set.
pub fn inter_agent_distance(
    source: &[LatentStats],
    target: &[LatentStats],
    metric: Metric,
    orientation: Orientation,
) -> Result<f64> {
    for (set, which) in [(source, "source"), (target, "target")] {
        if set.is_empty() {
            return Err(Error::Domain(format!("{which} latent set is empty")));
        }
    }
    let mut values = Vec::with_capacity(source.len() * target.len());
    for s in source {
        for t in target {
            let v = match orientation {
                Orientation::SourceTarget => metric.kl(s, t)?,
                Orientation::TargetSource => metric.kl(t, s)?,
            };
            values.push(v);
        }
    }
    values.sort_by(f64::total_cmp);
    let total: f64 = values.iter().sum();
    Ok(total / values.len() as f64)
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct DistanceEntry {
    pub source: CellId,
    pub target: CellId,
    pub distance: f64,
    pub n_source: usize,
    pub n_target: usize,
    pub mode: DistanceMode,
}

/// Distances from candidate sources to targets.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct DistanceMatrix {
    pub entries: Vec<DistanceEntry>,
}

impl DistanceMatrix {
    /// Distances for every (source, target) pair with `source ≠ target`.
    /// Every agent involved needs at least `min_samples` posteriors. The
    /// metric is resolved once over all agents involved.
    pub fn compute(
        latents: &BTreeMap<CellId, Vec<LatentStats>>,
        sources: &[CellId],
        targets: &[CellId],
        mode: DistanceMode,
        orientation: Orientation,
        min_samples: usize,
    ) -> Result<Self> {
        let mut involved: Vec<CellId> = sources.iter().chain(targets).copied().collect();
        involved.sort_unstable();
        involved.dedup();
        let mut sets = Vec::with_capacity(involved.len());
        for id in &involved {
            let set = latents.get(id).map_or(&[][..], Vec::as_slice);
            if set.len() < min_samples.max(1) {
                return Err(Error::EmptySet {
                    agent: *id,
                    reason: format!("{} latent samples, need at least {min_samples}", set.len()),
                });
            }
            sets.push(set);
        }
        let metric = resolve_metric(mode, sets.iter().copied());
        let mut entries = Vec::new();
        for &target in targets {
            for &source in sources.iter().filter(|s| **s != target) {
                let (zs, zt) = (&latents[&source], &latents[&target]);
                entries.push(DistanceEntry {
                    source,
                    target,
                    distance: inter_agent_distance(zs, zt, metric, orientation)?,
                    n_source: zs.len(),
                    n_target: zt.len(),
                    mode: metric.mode(),
                });
            }
        }
        Ok(DistanceMatrix { entries })
    }

    pub fn get(&self, source: CellId, target: CellId) -> Option<f64> {
        self.entries
            .iter()
            .find(|e| e.source == source && e.target == target)
            .map(|e| e.distance)
    }

    /// Entries whose target is `target`.
    pub fn row(&self, target: CellId) -> impl Iterator<Item = &DistanceEntry> + '_ {
        self.entries.iter().filter(move |e| e.target == target)
    }
}

/// Candidate with the smallest distance to `target`; ties go to the lowest
/// id. `None` when there is no candidate.
pub fn select_source(distances: &DistanceMatrix, target: CellId) -> Option<CellId> {
    distances
        .row(target)
        .min_by(|a, b| a.distance.total_cmp(&b.distance).then(a.source.cmp(&b.source)))
        .map(|e| e.source)
}
