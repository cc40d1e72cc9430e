//! Experiment configuration, read from a TOML file.

use std::path::Path;

use serde::{Deserialize, Serialize};
use slicenet_core::agent::{Phase, Td3Config};
use slicenet_core::env::{PartitionAction, Scenario};
use slicenet_core::similarity::{DistanceMode, Orientation, VaeConfig};
use slicenet_core::transfer::{Strategy, TransferPlan};
use slicenet_core::CellId;

use crate::error::{HarnessError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Preset {
    ThreeCell,
    TwelveCell,
}

/// Either a built-in layout or a full scenario description.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ScenarioSpec {
    Preset { preset: Preset },
    Custom(Scenario),
}

impl ScenarioSpec {
    pub fn build(&self) -> Scenario {
        match self {
            ScenarioSpec::Preset {
                preset: Preset::ThreeCell,
            } => Scenario::three_cell(),
            ScenarioSpec::Preset {
                preset: Preset::TwelveCell,
            } => Scenario::twelve_cell(),
            ScenarioSpec::Custom(s) => s.clone(),
        }
    }
}

/// Phase lengths in steps.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Schedule {
    /// Steps under the default action before exploration; these feed the
    /// similarity analysis.
    pub default_steps: u64,
    pub exploration: u64,
    pub training: u64,
    pub evaluation: u64,
    /// Fine-tuning steps of a transferred agent.
    pub tl_training: u64,
}

impl Default for Schedule {
    fn default() -> Self {
        Schedule {
            default_steps: 200,
            exploration: 3000,
            training: 5500,
            evaluation: 250,
            tl_training: 4000,
        }
    }
}

impl Schedule {
    pub fn learning_steps(&self) -> u64 {
        self.default_steps + self.exploration + self.training
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimilaritySettings {
    /// Cell to transfer into; defaults to the last cell of the scenario.
    pub target: Option<CellId>,
    /// Candidate sources; defaults to every other cell.
    pub candidates: Option<Vec<CellId>>,
    pub mode: DistanceMode,
    pub orientation: Orientation,
    pub min_samples: usize,
    /// Default action; defaults to the equal split.
    pub default_action: Option<Vec<f64>>,
}

impl Default for SimilaritySettings {
    fn default() -> Self {
        SimilaritySettings {
            target: None,
            candidates: None,
            mode: DistanceMode::Simplified,
            orientation: Orientation::SourceTarget,
            min_samples: 50,
            default_action: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TransferSettings {
    /// Fixed source; when absent the source chosen by the similarity run is used.
    pub source: Option<CellId>,
    pub strategy: Strategy,
    pub instance_fraction: f64,
    pub frozen_layers: usize,
    pub fine_tune_noise: f64,
    pub reset_optimizers: bool,
    /// Phases eligible for instance transfer; empty means all.
    pub phases: Vec<Phase>,
}

impl Default for TransferSettings {
    fn default() -> Self {
        let plan = TransferPlan::default();
        TransferSettings {
            source: None,
            strategy: plan.strategy,
            instance_fraction: plan.instance_fraction,
            frozen_layers: plan.frozen_layers,
            fine_tune_noise: plan.fine_tune_noise,
            reset_optimizers: plan.reset_optimizers,
            phases: plan.phases,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvaluationSettings {
    /// Environment seed of every evaluation run, shared by all methods.
    pub seed: u64,
}

impl Default for EvaluationSettings {
    fn default() -> Self {
        EvaluationSettings { seed: 9001 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub scenario: ScenarioSpec,
    #[serde(default)]
    pub schedule: Schedule,
    /// TD3 settings; state and action sizes follow the scenario.
    #[serde(default)]
    pub agent: Td3Config,
    #[serde(default)]
    pub vae: VaeConfig,
    #[serde(default)]
    pub similarity: SimilaritySettings,
    #[serde(default)]
    pub transfer: TransferSettings,
    #[serde(default)]
    pub evaluation: EvaluationSettings,
}

impl ExperimentConfig {
    pub fn preset(preset: Preset) -> Self {
        ExperimentConfig {
            scenario: ScenarioSpec::Preset { preset },
            schedule: Schedule::default(),
            agent: Td3Config::default(),
            vae: VaeConfig::default(),
            similarity: SimilaritySettings::default(),
            transfer: TransferSettings::default(),
            evaluation: EvaluationSettings::default(),
        }
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| HarnessError::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| match e.kind() {
            std::io::ErrorKind::NotFound => {
                HarnessError::Config(format!("{}: file not found", path.display()))
            }
            _ => HarnessError::io(path, e),
        })?;
        Self::from_toml(&text).map_err(|e| match e {
            HarnessError::Config(msg) => HarnessError::Config(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("configuration is serialisable")
    }

    pub fn scenario(&self) -> Result<Scenario> {
        let s = self.scenario.build();
        s.validate()?;
        Ok(s)
    }

    /// TD3 settings with state and action sizes taken from `scenario`.
    pub fn td3(&self, scenario: &Scenario) -> Result<Td3Config> {
        let n = scenario.num_slices();
        let cfg = Td3Config {
            state_dim: 4 * n,
            action_dim: n,
            ..self.agent.clone()
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn default_action(&self, scenario: &Scenario) -> Result<PartitionAction> {
        match &self.similarity.default_action {
            None => Ok(PartitionAction::equal(scenario.num_slices())),
            Some(shares) => {
                if shares.len() != scenario.num_slices() {
                    return Err(HarnessError::Config(format!(
                        "default_action has {} shares for {} slices",
                        shares.len(),
                        scenario.num_slices()
                    )));
                }
                Ok(PartitionAction::new(shares.clone())?)
            }
        }
    }

    pub fn target(&self, scenario: &Scenario) -> Result<CellId> {
        let target = match self.similarity.target {
            Some(t) => t,
            None => {
                scenario
                    .cells
                    .last()
                    .expect("validated scenario has cells")
                    .cell_id
            }
        };
        if scenario.cell(target).is_none() {
            return Err(HarnessError::Config(format!(
                "target cell {target} is not in the scenario"
            )));
        }
        Ok(target)
    }

    pub fn candidates(&self, scenario: &Scenario) -> Result<Vec<CellId>> {
        let target = self.target(scenario)?;
        let ids = match &self.similarity.candidates {
            Some(c) => c.clone(),
            None => scenario
                .cell_ids()
                .into_iter()
                .filter(|id| *id != target)
                .collect(),
        };
        if ids.is_empty() {
            return Err(HarnessError::Config("no candidate source cells".into()));
        }
        if let Some(bad) = ids
            .iter()
            .find(|id| scenario.cell(**id).is_none() || **id == target)
        {
            return Err(HarnessError::Config(format!("invalid candidate source {bad}")));
        }
        Ok(ids)
    }

    pub fn transfer_plan(&self, source: CellId, target: CellId) -> Result<TransferPlan> {
        let t = &self.transfer;
        let plan = TransferPlan {
            source,
            target,
            strategy: t.strategy,
            instance_fraction: t.instance_fraction,
            frozen_layers: t.frozen_layers,
            fine_tune_steps: self.schedule.tl_training,
            fine_tune_noise: t.fine_tune_noise,
            reset_optimizers: t.reset_optimizers,
            phases: t.phases.clone(),
        };
        plan.validate()?;
        Ok(plan)
    }

    /// Checks everything that can be checked without running.
    pub fn validate(&self) -> Result<()> {
        let scenario = self.scenario()?;
        self.td3(&scenario)?;
        self.vae.validate()?;
        self.default_action(&scenario)?;
        let target = self.target(&scenario)?;
        self.candidates(&scenario)?;
        self.transfer_plan(self.transfer.source.unwrap_or(target), target)?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_file() {
        let cfg = ExperimentConfig::from_toml("[scenario]\npreset = \"three_cell\"\n").unwrap();
        assert_eq!(cfg, ExperimentConfig::preset(Preset::ThreeCell));
        cfg.validate().unwrap();
        let s = cfg.scenario().unwrap();
        assert_eq!(cfg.target(&s).unwrap(), 3);
        assert_eq!(cfg.candidates(&s).unwrap(), vec![1, 2]);
    }

    #[test]
    fn round_trips_through_toml() {
        let mut cfg = ExperimentConfig::preset(Preset::TwelveCell);
        cfg.schedule.training = 10;
        cfg.transfer.phases = vec![Phase::Training];
        let back = ExperimentConfig::from_toml(&cfg.to_toml()).unwrap();
        assert_eq!(back, cfg);
    }

    #[test]
    fn custom_scenario() {
        let cfg = ExperimentConfig {
            scenario: ScenarioSpec::Custom(Scenario::three_cell()),
            ..ExperimentConfig::preset(Preset::ThreeCell)
        };
        let back = ExperimentConfig::from_toml(&cfg.to_toml()).unwrap();
        assert_eq!(back.scenario().unwrap(), Scenario::three_cell());
    }

    #[test]
    fn rejects_bad_values() {
        assert!(ExperimentConfig::from_toml("[scenario]\npreset = \"five_cell\"\n").is_err());
        assert!(
            ExperimentConfig::from_toml("[scenario]\npreset = \"three_cell\"\n[schedule]\nbogus = 1\n")
                .is_err()
        );
        let mut cfg = ExperimentConfig::preset(Preset::ThreeCell);
        cfg.similarity.target = Some(42);
        assert!(matches!(cfg.validate(), Err(HarnessError::Config(_))));
        let mut cfg = ExperimentConfig::preset(Preset::ThreeCell);
        cfg.transfer.instance_fraction = 1.5;
        assert!(cfg.validate().is_err());
        let mut cfg = ExperimentConfig::preset(Preset::ThreeCell);
        cfg.similarity.default_action = Some(vec![0.5, 0.5]);
        assert!(cfg.validate().is_err());
    }
}
