//! Step loop shared by every experiment: a multi-cell environment, one
//! controller per cell and a per-cell plan of phases.

use alloc::boxed::Box;
use alloc::format;
use alloc::vec::Vec;

use crate::agent::{
    assemble_state, extract_neighbor_features, random_simplex_action, Message, Normalizers, Phase, Td3Agent,
    Transition,
};
use crate::env::{baseline_action, Network, NetworkState, PartitionAction, Scenario};
use crate::similarity::TraceStep;
use crate::{CellId, Error, Result, SimRng};

/// A [`Network`] together with its current state and the observation
/// normalisers of every cell.
#[derive(Debug, Clone)]
pub struct MultiCellEnv {
    network: Network,
    state: NetworkState,
    normalizers: Vec<Normalizers>,
}

impl MultiCellEnv {
    pub fn new(scenario: Scenario, seed: u64) -> Result<Self> {
        let network = Network::new(scenario, seed)?;
        let state = network.init();
        let normalizers = network
            .scenario()
            .cells
            .iter()
            .map(Normalizers::for_cell)
            .collect();
        Ok(MultiCellEnv {
            network,
            state,
            normalizers,
        })
    }

    pub fn network(&self) -> &Network {
        &self.network
    }

    pub fn scenario(&self) -> &Scenario {
        self.network.scenario()
    }

    pub fn state(&self) -> &NetworkState {
        &self.state
    }

    pub fn num_cells(&self) -> usize {
        self.network.num_cells()
    }

    /// State vector of the cell at index `k`, built from its own metrics and
    /// the load messages of its neighbours.
    pub fn observation(&self, k: usize) -> Result<Vec<f64>> {
        let cells = &self.scenario().cells;
        let messages: Vec<Message> = self
            .network
            .neighbor_indices(k)
            .iter()
            .map(|&j| Message {
                sender: cells[j].cell_id,
                per_slice_load: self.state.loads(j),
            })
            .collect();
        let c = extract_neighbor_features(&messages, self.network.num_slices())?;
        assemble_state(&self.state.per_cell[k], &c, &self.normalizers[k])
    }

    pub fn observations(&self) -> Result<Vec<Vec<f64>>> {
        (0..self.num_cells()).map(|k| self.observation(k)).collect()
    }

    /// Offered traffic of the next step.
    pub fn upcoming_demands(&self) -> Vec<Vec<f64>> {
        self.network.demands(self.state.step + 1)
    }

    /// Applies one action per cell and returns the per-cell rewards.
    pub fn step(&mut self, actions: &[PartitionAction]) -> Result<Vec<f64>> {
        let (next, rewards) = self.network.step(&self.state, actions)?;
        self.state = next;
        Ok(rewards)
    }
}

/// What an agent does during a stretch of steps.
#[derive(Debug, Clone, PartialEq)]
pub enum Segment {
    /// Holds the given action; steps are logged for similarity analysis.
    Default(PartitionAction),
    /// Random simplex actions.
    Explore,
    /// Noisy actor, learning every step; the logit noise moves linearly from
    /// `noise_start` to `noise_end`.
    Train { noise_start: f64, noise_end: f64 },
    /// Noisy actor with constant noise, learning every step.
    FineTune { noise: f64 },
    /// Deterministic actor, no learning.
    Evaluate,
}

impl Segment {
    fn phase(&self) -> Option<Phase> {
        match self {
            Segment::Default(_) => Some(Phase::Default),
            Segment::Explore => Some(Phase::Exploration),
            Segment::Train { .. } => Some(Phase::Training),
            Segment::FineTune { .. } => Some(Phase::FineTune),
            Segment::Evaluate => None,
        }
    }

    fn learns(&self) -> bool {
        matches!(self, Segment::Train { .. } | Segment::FineTune { .. })
    }
}

/// Consecutive segments with their lengths. Steps past the end evaluate.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Plan {
    pub segments: Vec<(Segment, u64)>,
}

impl Plan {
    pub fn then(mut self, segment: Segment, steps: u64) -> Self {
        if steps > 0 {
            self.segments.push((segment, steps));
        }
        self
    }

    pub fn len(&self) -> u64 {
        self.segments.iter().map(|(_, n)| n).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Segment active at local step `i` and the position within it.
    pub fn at(&self, mut i: u64) -> (&Segment, u64, u64) {
        for (s, n) in &self.segments {
            if i < *n {
                return (s, i, *n);
            }
            i -= n;
        }
        (&Segment::Evaluate, i, 0)
    }
}

/// A TD3 agent with its own random stream and plan.
#[derive(Debug, Clone)]
pub struct AgentSlot {
    pub agent: Td3Agent,
    pub rng: SimRng,
    pub plan: Plan,
    /// Steps taken since the slot was created.
    pub step: u64,
    /// Steps taken under a [`Segment::Default`] action.
    pub default_trace: Vec<TraceStep>,
    /// Updates rejected for numerical reasons, with the local step.
    pub failures: Vec<(u64, Error)>,
}

impl AgentSlot {
    pub fn new(agent: Td3Agent, rng: SimRng, plan: Plan) -> Self {
        AgentSlot {
            agent,
            rng,
            plan,
            step: 0,
            default_trace: Vec::new(),
            failures: Vec::new(),
        }
    }

    fn choose(&mut self, obs: &[f64]) -> Result<PartitionAction> {
        let (segment, pos, len) = self.plan.at(self.step);
        match segment {
            Segment::Default(a) => Ok(a.clone()),
            Segment::Explore => Ok(random_simplex_action(self.agent.config.action_dim, &mut self.rng)),
            Segment::Train {
                noise_start,
                noise_end,
            } => {
                let frac = pos as f64 / len.max(1) as f64;
                let sigma = noise_start + (noise_end - noise_start) * frac;
                self.agent.select_action(obs, Some(sigma), &mut self.rng)
            }
            Segment::FineTune { noise } => self.agent.select_action(obs, Some(*noise), &mut self.rng),
            Segment::Evaluate => self.agent.act(obs),
        }
    }

    fn observe(&mut self, obs: Vec<f64>, action: PartitionAction, reward: f64, next: Vec<f64>) {
        let (segment, _, _) = self.plan.at(self.step);
        let segment = segment.clone();
        if let Segment::Default(_) = segment {
            self.default_trace.push(TraceStep {
                state: next.clone(),
                action: action.clone(),
                reward,
            });
        }
        if let Some(phase) = segment.phase() {
            self.agent.buffer.push(Transition {
                state: obs,
                action,
                reward,
                next_state: next,
                origin: self.agent.id,
                phase,
            });
        }
        if segment.learns() {
            if let Err(e) = self.agent.learn(&mut self.rng) {
                self.failures.push((self.step, e));
            }
        }
        self.agent.env_steps += 1;
        self.step += 1;
    }
}

/// Decision maker of one cell.
#[derive(Debug, Clone)]
pub enum Controller {
    /// Demand-proportional split with perfect knowledge of the next demands.
    Baseline,
    Fixed(PartitionAction),
    Agent(Box<AgentSlot>),
}

impl Controller {
    pub fn agent(agent: Td3Agent, rng: SimRng, plan: Plan) -> Self {
        Controller::Agent(Box::new(AgentSlot::new(agent, rng, plan)))
    }

    pub fn slot(&self) -> Option<&AgentSlot> {
        match self {
            Controller::Agent(s) => Some(s),
            _ => None,
        }
    }

    pub fn slot_mut(&mut self) -> Option<&mut AgentSlot> {
        match self {
            Controller::Agent(s) => Some(s),
            _ => None,
        }
    }
}

/// Runs a closure over independent items, possibly in parallel. Each call
/// touches only its own item, so any schedule gives the same result.
pub trait Executor {
    fn for_each<T: Send>(&self, items: &mut [T], f: &(dyn Fn(&mut T) + Sync));
}

#[derive(Debug, Clone, Copy, Default)]
pub struct Sequential;

impl Executor for Sequential {
    fn for_each<T: Send>(&self, items: &mut [T], f: &(dyn Fn(&mut T) + Sync)) {
        items.iter_mut().for_each(f);
    }
}

/// Everything known about one completed step.
#[derive(Debug)]
pub struct StepRecord<'a> {
    /// Index of the step within this run, from 0.
    pub index: u64,
    pub state: &'a NetworkState,
    pub rewards: &'a [f64],
}

struct Work<'a> {
    controller: &'a mut Controller,
    obs: Vec<f64>,
    demands: Vec<f64>,
    action: Option<Result<PartitionAction>>,
    reward: f64,
    next: Vec<f64>,
}

/// Advances `env` by `steps` steps with one controller per cell, calling
/// `on_step` after each step.
pub fn run<E, F>(
    env: &mut MultiCellEnv,
    controllers: &mut [Controller],
    steps: u64,
    exec: &E,
    mut on_step: F,
) -> Result<()>
where
    E: Executor,
    F: FnMut(&StepRecord<'_>) -> Result<()>,
{
    if controllers.len() != env.num_cells() {
        return Err(Error::dim("controllers", env.num_cells(), controllers.len()));
    }
    let needs_demands = controllers.iter().any(|c| matches!(c, Controller::Baseline));
    for index in 0..steps {
        let obs = env.observations()?;
        let demands = if needs_demands {
            env.upcoming_demands()
        } else {
            Vec::new()
        };
        let mut work: Vec<Work<'_>> = controllers
            .iter_mut()
            .zip(obs)
            .enumerate()
            .map(|(k, (controller, obs))| Work {
                controller,
                obs,
                demands: demands.get(k).cloned().unwrap_or_default(),
                action: None,
                reward: 0.0,
                next: Vec::new(),
            })
            .collect();

        exec.for_each(&mut work, &|w| {
            w.action = Some(match &mut *w.controller {
                Controller::Baseline => baseline_action(&w.demands),
                Controller::Fixed(a) => Ok(a.clone()),
                Controller::Agent(slot) => slot.choose(&w.obs),
            });
        });
        let actions = work
            .iter_mut()
            .map(|w| w.action.take().expect("filled above"))
            .collect::<Result<Vec<_>>>()?;

        let rewards = env.step(&actions)?;
        let next = env.observations()?;
        for ((w, r), n) in work.iter_mut().zip(&rewards).zip(next) {
            w.reward = *r;
            w.next = n;
        }
        let mut per_cell: Vec<(Work<'_>, PartitionAction)> = work.into_iter().zip(actions).collect();
        exec.for_each(&mut per_cell, &|(w, a)| {
            if let Controller::Agent(slot) = &mut *w.controller {
                let obs = core::mem::take(&mut w.obs);
                let next = core::mem::take(&mut w.next);
                slot.observe(obs, a.clone(), w.reward, next);
            }
        });
        drop(per_cell);

        on_step(&StepRecord {
            index,
            state: env.state(),
            rewards: &rewards,
        })?;
    }
    Ok(())
}

/// Index of the cell with id `id`.
pub fn cell_index(env: &MultiCellEnv, id: CellId) -> Result<usize> {
    env.scenario()
        .index_of(id)
        .ok_or_else(|| Error::Config(format!("unknown cell id {id}")))
}
