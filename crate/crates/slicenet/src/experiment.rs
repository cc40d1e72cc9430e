//! The experiment protocol: baseline runs, multi-agent training, similarity
//! analysis, transfer with a paired scratch reference, and evaluation.

use std::collections::BTreeMap;

use rand::SeedableRng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use slicenet_core::agent::{Td3Agent, Td3Config};
use slicenet_core::env::{PartitionAction, Scenario};
use slicenet_core::runner::{cell_index, run, Controller, Executor, MultiCellEnv, Plan, Segment, StepRecord};
use slicenet_core::similarity::{
    collect_default_samples, select_source, vae_train, DistanceMatrix, LatentStats, TraceStep, VaeReport,
};
use slicenet_core::transfer::{apply_transfer, TransferPlan};
use slicenet_core::{CellId, SimRng};

use crate::config::ExperimentConfig;
use crate::error::{HarnessError, Result};

/// Runs per-agent work on the rayon pool.
#[derive(Debug, Clone, Copy, Default)]
pub struct Parallel;

impl Executor for Parallel {
    fn for_each<T: Send>(&self, items: &mut [T], f: &(dyn Fn(&mut T) + Sync)) {
        items.par_iter_mut().for_each(f);
    }
}

/// Independent random streams derived from one run seed.
#[derive(Debug, Clone, Copy)]
enum Stream {
    Agent = 1,
    Target = 2,
    Vae = 3,
    Instances = 4,
}

fn rng_for(seed: u64, stream: Stream, cell: CellId) -> SimRng {
    let mut rng = SimRng::seed_from_u64(seed);
    rng.set_stream(((stream as u64) << 32) | u64::from(cell));
    rng
}

/// One row of `metrics.csv`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricRow {
    pub t: u64,
    pub cell: CellId,
    pub slice: usize,
    pub throughput: f64,
    pub delay: f64,
    pub load: f64,
    pub ues: u32,
    pub share: f64,
    pub reward: f64,
}

/// Per-step record of a run.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RunLog {
    pub cell_ids: Vec<CellId>,
    pub rows: Vec<MetricRow>,
    /// `rewards[t][k]`
    pub rewards: Vec<Vec<f64>>,
    /// Worst-slice throughput satisfaction `min_n min(φ/φ*, 1)`, `[t][k]`.
    pub throughput_satisfaction: Vec<Vec<f64>>,
    /// Largest slice delay in ms, `[t][k]`.
    pub max_delay: Vec<Vec<f64>>,
}

impl RunLog {
    fn new(scenario: &Scenario) -> Self {
        RunLog {
            cell_ids: scenario.cell_ids(),
            ..RunLog::default()
        }
    }

    fn record(&mut self, scenario: &Scenario, r: &StepRecord<'_>) {
        let mut sat = Vec::with_capacity(scenario.num_cells());
        let mut delay = Vec::with_capacity(scenario.num_cells());
        for (k, cell) in scenario.cells.iter().enumerate() {
            let metrics = &r.state.per_cell[k];
            let shares = r.state.actions[k].shares();
            for (n, m) in metrics.iter().enumerate() {
                self.rows.push(MetricRow {
                    t: r.state.step,
                    cell: cell.cell_id,
                    slice: n,
                    throughput: m.throughput,
                    delay: m.delay,
                    load: m.load,
                    ues: m.ue_count,
                    share: shares[n],
                    reward: r.rewards[k],
                });
            }
            sat.push(
                metrics
                    .iter()
                    .zip(&cell.requirements)
                    .map(|(m, req)| (m.throughput / req.throughput_target).min(1.0))
                    .fold(1.0, f64::min),
            );
            delay.push(metrics.iter().map(|m| m.delay).fold(0.0, f64::max));
        }
        self.rewards.push(r.rewards.to_vec());
        self.throughput_satisfaction.push(sat);
        self.max_delay.push(delay);
    }

    pub fn steps(&self) -> usize {
        self.rewards.len()
    }

    fn column(&self, cell: CellId) -> Result<usize> {
        self.cell_ids
            .iter()
            .position(|c| *c == cell)
            .ok_or_else(|| HarnessError::Config(format!("cell {cell} not in run")))
    }

    /// Rewards of `cell` over all steps.
    pub fn reward_trace(&self, cell: CellId) -> Result<Vec<f64>> {
        let k = self.column(cell)?;
        Ok(self.rewards.iter().map(|r| r[k]).collect())
    }

    /// Mean reward of `cell` over the last `steps` steps.
    pub fn tail_mean_reward(&self, cell: CellId, steps: usize) -> Result<f64> {
        let trace = self.reward_trace(cell)?;
        let tail = &trace[trace.len().saturating_sub(steps)..];
        Ok(mean(tail))
    }

    /// Worst-slice throughput satisfaction and largest slice delay of every
    /// cell over the last `steps` steps, flattened step-major.
    pub fn tail_samples(&self, steps: usize) -> (Vec<f64>, Vec<f64>) {
        let from = self.steps().saturating_sub(steps);
        let sat = self.throughput_satisfaction[from..]
            .iter()
            .flatten()
            .copied()
            .collect();
        let delay = self.max_delay[from..].iter().flatten().copied().collect();
        (sat, delay)
    }
}

pub fn mean(values: &[f64]) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    values.iter().sum::<f64>() / values.len() as f64
}

/// Trained agents together with what is needed to analyse them.
#[derive(Debug, Clone)]
pub struct Trained {
    pub agents: Vec<Td3Agent>,
    pub traces: BTreeMap<CellId, Vec<TraceStep>>,
    pub log: RunLog,
    /// Rejected updates as `(cell, local step, message)`.
    pub failures: Vec<(CellId, u64, String)>,
}

impl Trained {
    pub fn agent(&self, id: CellId) -> Result<&Td3Agent> {
        self.agents
            .iter()
            .find(|a| a.id == id)
            .ok_or_else(|| HarnessError::Dependency(format!("no trained agent for cell {id}")))
    }
}

#[derive(Debug, Clone)]
pub struct SimilarityOutcome {
    pub matrix: DistanceMatrix,
    pub latents: BTreeMap<CellId, Vec<LatentStats>>,
    pub report: VaeReport,
    /// Reconstruction MSE on the pooled samples, standardised units.
    pub reconstruction_mse: f64,
}

#[derive(Debug, Clone)]
pub struct TransferOutcome {
    pub plan: TransferPlan,
    pub agent: Td3Agent,
    pub tl_rewards: Vec<f64>,
    pub scratch_rewards: Vec<f64>,
    /// `tl_rewards[t] − scratch_rewards[t]`
    pub gain: Vec<f64>,
    pub log: RunLog,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Baseline,
    Madrl,
    Tl,
}

impl Method {
    pub fn as_str(self) -> &'static str {
        match self {
            Method::Baseline => "baseline",
            Method::Madrl => "madrl",
            Method::Tl => "tl",
        }
    }
}

/// A scenario, its configuration and the protocol built on them.
#[derive(Debug, Clone)]
pub struct Experiment {
    pub config: ExperimentConfig,
    pub scenario: Scenario,
    pub td3: Td3Config,
    pub default_action: PartitionAction,
}

impl Experiment {
    pub fn new(config: ExperimentConfig) -> Result<Self> {
        config.validate()?;
        let scenario = config.scenario()?;
        let td3 = config.td3(&scenario)?;
        let default_action = config.default_action(&scenario)?;
        Ok(Experiment {
            config,
            scenario,
            td3,
            default_action,
        })
    }

    fn env(&self, seed: u64) -> Result<MultiCellEnv> {
        Ok(MultiCellEnv::new(self.scenario.clone(), seed)?)
    }

    fn run_logged(
        &self,
        env: &mut MultiCellEnv,
        controllers: &mut [Controller],
        steps: u64,
    ) -> Result<RunLog> {
        let mut log = RunLog::new(&self.scenario);
        run(env, controllers, steps, &Parallel, |r| {
            log.record(&self.scenario, r);
            Ok(())
        })?;
        Ok(log)
    }

    fn fresh_agent(&self, id: CellId, rng: &mut SimRng) -> Result<Td3Agent> {
        Ok(Td3Agent::new(id, self.td3.clone(), rng)?)
    }

    fn learning_plan(&self) -> Plan {
        let s = &self.config.schedule;
        Plan::default()
            .then(Segment::Default(self.default_action.clone()), s.default_steps)
            .then(Segment::Explore, s.exploration)
            .then(
                Segment::Train {
                    noise_start: self.td3.explore_noise,
                    noise_end: self.td3.explore_noise_final,
                },
                s.training,
            )
    }

    /// Demand-proportional control in every cell, for the length of a
    /// full training schedule plus evaluation.
    pub fn baseline(&self, seed: u64) -> Result<RunLog> {
        let mut env = self.env(seed)?;
        let mut controllers = vec![Controller::Baseline; self.scenario.num_cells()];
        let s = &self.config.schedule;
        self.run_logged(&mut env, &mut controllers, s.learning_steps() + s.evaluation)
    }

    /// Only the default-action phase of [`Experiment::train`]; yields the
    /// same traces without any learning.
    pub fn default_traces(&self, seed: u64) -> Result<BTreeMap<CellId, Vec<TraceStep>>> {
        let mut env = self.env(seed)?;
        let plan = Plan::default().then(
            Segment::Default(self.default_action.clone()),
            self.config.schedule.default_steps,
        );
        let mut controllers = self.agents_with_plan(seed, &plan)?;
        run(&mut env, &mut controllers, plan.len(), &Parallel, |_| Ok(()))?;
        Ok(controllers
            .into_iter()
            .map(|c| match c {
                Controller::Agent(slot) => (slot.agent.id, slot.default_trace),
                _ => unreachable!("all cells run agents"),
            })
            .collect())
    }

    fn agents_with_plan(&self, seed: u64, plan: &Plan) -> Result<Vec<Controller>> {
        self.scenario
            .cells
            .iter()
            .map(|c| {
                let mut rng = rng_for(seed, Stream::Agent, c.cell_id);
                let agent = self.fresh_agent(c.cell_id, &mut rng)?;
                Ok(Controller::agent(agent, rng, plan.clone()))
            })
            .collect()
    }

    /// Trains one agent per cell through the default, exploration and
    /// training phases, then runs the evaluation phase with frozen policies.
    pub fn train(&self, seed: u64) -> Result<Trained> {
        let mut env = self.env(seed)?;
        let plan = self.learning_plan();
        let mut controllers = self.agents_with_plan(seed, &plan)?;
        let steps = plan.len() + self.config.schedule.evaluation;
        let log = self.run_logged(&mut env, &mut controllers, steps)?;
        let mut agents = Vec::new();
        let mut traces = BTreeMap::new();
        let mut failures = Vec::new();
        for c in controllers {
            let Controller::Agent(slot) = c else {
                unreachable!("all cells run agents")
            };
            let id = slot.agent.id;
            failures.extend(slot.failures.iter().map(|(t, e)| (id, *t, e.to_string())));
            traces.insert(id, slot.default_trace);
            agents.push(slot.agent);
        }
        Ok(Trained {
            agents,
            traces,
            log,
            failures,
        })
    }

    /// Trains a VAE on the default-action samples of every cell in
    /// `sources ∪ targets` and measures the latent distance of each pair.
    pub fn similarity_matrix(
        &self,
        traces: &BTreeMap<CellId, Vec<TraceStep>>,
        sources: &[CellId],
        targets: &[CellId],
        seed: u64,
    ) -> Result<SimilarityOutcome> {
        let mut involved: Vec<CellId> = sources.iter().chain(targets).copied().collect();
        involved.sort_unstable();
        involved.dedup();
        let mut samples = BTreeMap::new();
        for id in &involved {
            let trace = traces
                .get(id)
                .ok_or_else(|| HarnessError::Dependency(format!("no default-action trace for cell {id}")))?;
            samples.insert(*id, collect_default_samples(*id, trace, &self.default_action)?);
        }
        let pooled: Vec<Vec<f64>> = samples.values().flatten().map(|s| s.x.clone()).collect();
        let mut rng = rng_for(seed, Stream::Vae, 0);
        let (model, report) = vae_train(&pooled, &self.config.vae, &mut rng)?;
        let reconstruction_mse = model.reconstruction_mse(&pooled)?;
        let latents = samples
            .iter()
            .map(|(id, s)| {
                let z = s
                    .iter()
                    .map(|d| model.encode(*id, &d.x))
                    .collect::<Result<_, _>>()?;
                Ok((*id, z))
            })
            .collect::<Result<BTreeMap<_, _>>>()?;
        let sim = &self.config.similarity;
        let matrix = DistanceMatrix::compute(
            &latents,
            sources,
            targets,
            sim.mode,
            sim.orientation,
            sim.min_samples,
        )?;
        Ok(SimilarityOutcome {
            matrix,
            latents,
            report,
            reconstruction_mse,
        })
    }

    /// Distances from the configured candidates to the configured target,
    /// and the selected source.
    pub fn similarity(
        &self,
        traces: &BTreeMap<CellId, Vec<TraceStep>>,
        seed: u64,
    ) -> Result<(SimilarityOutcome, CellId)> {
        let target = self.config.target(&self.scenario)?;
        let candidates = self.config.candidates(&self.scenario)?;
        let outcome = self.similarity_matrix(traces, &candidates, &[target], seed)?;
        let source = select_source(&outcome.matrix, target)
            .ok_or_else(|| HarnessError::Dependency(format!("no candidate source for cell {target}")))?;
        Ok((outcome, source))
    }

    /// Controllers where every cell except `target` runs its trained policy
    /// deterministically.
    fn frozen_neighbors(&self, trained: &Trained, seed: u64) -> Result<Vec<Controller>> {
        self.scenario
            .cells
            .iter()
            .map(|c| {
                let agent = trained.agent(c.cell_id)?.clone();
                Ok(Controller::agent(
                    agent,
                    rng_for(seed, Stream::Agent, c.cell_id),
                    Plan::default(),
                ))
            })
            .collect()
    }

    /// Transfers from `source` into a fresh target agent, fine-tunes it with
    /// the other cells running their trained policies, and repeats the same
    /// steps with a scratch agent on the same environment seed.
    pub fn transfer(&self, trained: &Trained, source: CellId, seed: u64) -> Result<TransferOutcome> {
        let target = self.config.target(&self.scenario)?;
        let plan = self.config.transfer_plan(source, target)?;
        let steps = plan.fine_tune_steps;
        let source_agent = trained.agent(source)?;

        let mut env = self.env(seed)?;
        let k = cell_index(&env, target)?;
        let mut controllers = self.frozen_neighbors(trained, seed)?;
        let mut rng = rng_for(seed, Stream::Target, target);
        let mut agent = self.fresh_agent(target, &mut rng)?;
        apply_transfer(
            source_agent,
            &mut agent,
            &plan,
            &mut rng_for(seed, Stream::Instances, target),
        )?;
        let fine_tune = Plan::default().then(
            Segment::FineTune {
                noise: plan.fine_tune_noise,
            },
            steps,
        );
        controllers[k] = Controller::agent(agent, rng, fine_tune);
        let log = self.run_logged(&mut env, &mut controllers, steps)?;
        let tl_rewards = log.reward_trace(target)?;
        let Controller::Agent(slot) = controllers.swap_remove(k) else {
            unreachable!("target runs an agent")
        };
        if let Some((t, e)) = slot.failures.first() {
            return Err(HarnessError::Numeric(format!(
                "fine-tuning cell {target} failed at step {t}: {e}"
            )));
        }

        let scratch_rewards = self.scratch(trained, target, steps, seed)?;
        let gain = tl_rewards
            .iter()
            .zip(&scratch_rewards)
            .map(|(a, b)| a - b)
            .collect();
        Ok(TransferOutcome {
            plan,
            agent: slot.agent,
            tl_rewards,
            scratch_rewards,
            gain,
            log,
        })
    }

    /// Rewards of a fresh target agent following the regular learning
    /// schedule from exploration on, next to trained neighbours.
    pub fn scratch(&self, trained: &Trained, target: CellId, steps: u64, seed: u64) -> Result<Vec<f64>> {
        let mut env = self.env(seed)?;
        let k = cell_index(&env, target)?;
        let mut controllers = self.frozen_neighbors(trained, seed)?;
        let mut rng = rng_for(seed, Stream::Target, target);
        let agent = self.fresh_agent(target, &mut rng)?;
        let s = &self.config.schedule;
        let plan = Plan::default().then(Segment::Explore, s.exploration).then(
            Segment::Train {
                noise_start: self.td3.explore_noise,
                noise_end: self.td3.explore_noise_final,
            },
            s.training,
        );
        controllers[k] = Controller::agent(agent, rng, plan);
        let mut rewards = Vec::with_capacity(steps as usize);
        run(&mut env, &mut controllers, steps, &Parallel, |r| {
            rewards.push(r.rewards[k]);
            Ok(())
        })?;
        Ok(rewards)
    }

    /// Frozen-policy run on the evaluation seed. `tl_agent` replaces the
    /// target's policy for [`Method::Tl`].
    pub fn evaluate(
        &self,
        method: Method,
        trained: Option<&Trained>,
        tl_agent: Option<&Td3Agent>,
    ) -> Result<RunLog> {
        let seed = self.config.evaluation.seed;
        let need =
            |what: &str| HarnessError::Dependency(format!("{} evaluation needs {what}", method.as_str()));
        let mut controllers = match method {
            Method::Baseline => vec![Controller::Baseline; self.scenario.num_cells()],
            Method::Madrl | Method::Tl => {
                self.frozen_neighbors(trained.ok_or_else(|| need("trained agents"))?, seed)?
            }
        };
        let mut env = self.env(seed)?;
        if method == Method::Tl {
            let agent = tl_agent.ok_or_else(|| need("a transferred agent"))?;
            let k = cell_index(&env, agent.id)?;
            controllers[k] = Controller::agent(
                agent.clone(),
                rng_for(seed, Stream::Target, agent.id),
                Plan::default(),
            );
        }
        self.run_logged(&mut env, &mut controllers, self.config.schedule.evaluation)
    }
}

/// `(value, F(value))` points of the empirical CDF of `values`.
pub fn empirical_cdf(values: &[f64]) -> Vec<(f64, f64)> {
    let mut v: Vec<f64> = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len() as f64;
    v.iter()
        .enumerate()
        .map(|(i, x)| (*x, (i + 1) as f64 / n))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::Preset;

    fn tiny() -> Experiment {
        let mut cfg = ExperimentConfig::preset(Preset::ThreeCell);
        cfg.schedule.default_steps = 60;
        cfg.schedule.exploration = 50;
        cfg.schedule.training = 40;
        cfg.schedule.evaluation = 10;
        cfg.schedule.tl_training = 30;
        cfg.vae.epochs = 3;
        Experiment::new(cfg).unwrap()
    }

    #[test]
    fn cdf_is_monotone_and_ends_at_one() {
        let c = empirical_cdf(&[0.3, 0.1, 0.9, 0.1]);
        assert_eq!(c.first().unwrap().0, 0.1);
        assert_eq!(c.last().unwrap(), &(0.9, 1.0));
        assert!(c.windows(2).all(|w| w[0].0 <= w[1].0 && w[0].1 < w[1].1));
    }

    #[test]
    fn baseline_is_deterministic_and_sized() {
        let e = tiny();
        let a = e.baseline(3).unwrap();
        assert_eq!(a.steps(), 160);
        assert_eq!(a.rows.len(), 160 * 3 * 4);
        assert_eq!(a, e.baseline(3).unwrap());
    }

    #[test]
    fn default_traces_match_training_phase() {
        let e = tiny();
        let traces = e.default_traces(4).unwrap();
        let trained = e.train(4).unwrap();
        assert_eq!(traces, trained.traces);
        assert!(traces.values().all(|t| t.len() == 60));
    }

    #[test]
    fn pipeline_shapes() {
        let e = tiny();
        let trained = e.train(5).unwrap();
        assert_eq!(trained.agents.len(), 3);
        assert_eq!(trained.log.steps(), 160);
        let (sim, source) = e.similarity(&trained.traces, 5).unwrap();
        assert_eq!(sim.matrix.entries.len(), 2);
        assert!([1, 2].contains(&source));
        let out = e.transfer(&trained, source, 5).unwrap();
        assert_eq!(out.gain.len(), 30);
        assert_eq!(out.tl_rewards.len(), 30);
        assert_eq!(out.agent.id, 3);
        for m in [Method::Baseline, Method::Madrl, Method::Tl] {
            let log = e.evaluate(m, Some(&trained), Some(&out.agent)).unwrap();
            assert_eq!(log.steps(), 10);
            assert!(log.rewards.iter().flatten().all(|r| (0.0..=1.0).contains(r)));
        }
        assert!(matches!(
            e.evaluate(Method::Madrl, None, None),
            Err(HarnessError::Dependency(_))
        ));
    }
}
