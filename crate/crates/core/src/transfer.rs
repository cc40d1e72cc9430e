//! Initialising a target agent from a source: model, feature, instance and
//! integrated transfer, followed by fine-tuning.

use alloc::format;
use alloc::vec::Vec;

use rand::Rng;

use crate::agent::{Phase, ReplayBuffer, Td3Agent};
use crate::nn::{Adam, Mlp};
use crate::runner::{run, Controller, Executor, MultiCellEnv, Plan, Segment};
use crate::{math, CellId, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "lowercase"))]
pub enum Strategy {
    Model,
    Feature,
    Instance,
    #[default]
    Integrated,
}

impl Strategy {
    pub fn as_str(self) -> &'static str {
        match self {
            Strategy::Model => "model",
            Strategy::Feature => "feature",
            Strategy::Instance => "instance",
            Strategy::Integrated => "integrated",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default))]
pub struct TransferPlan {
    pub source: CellId,
    pub target: CellId,
    pub strategy: Strategy,
    /// Share of the source's transitions copied into the target buffer.
    pub instance_fraction: f64,
    /// Lowest layers copied and frozen by feature transfer.
    pub frozen_layers: usize,
    pub fine_tune_steps: u64,
    /// Logit noise while fine-tuning.
    pub fine_tune_noise: f64,
    /// Whether model transfer starts the target with fresh optimizer moments.
    pub reset_optimizers: bool,
    /// Phases of source transitions eligible for instance transfer; empty
    /// means all.
    pub phases: Vec<Phase>,
}

impl Default for TransferPlan {
    fn default() -> Self {
        TransferPlan {
            source: 0,
            target: 0,
            strategy: Strategy::Integrated,
            instance_fraction: 1.0,
            frozen_layers: 1,
            fine_tune_steps: 4000,
            fine_tune_noise: 0.1,
            reset_optimizers: true,
            phases: Vec::new(),
        }
    }
}

impl TransferPlan {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.instance_fraction) {
            return Err(Error::Config(format!(
                "instance_fraction {} outside [0, 1]",
                self.instance_fraction
            )));
        }
        if !(self.fine_tune_noise >= 0.0 && self.fine_tune_noise.is_finite()) {
            return Err(Error::Config("fine_tune_noise must be finite and >= 0".into()));
        }
        Ok(())
    }
}

fn check_compatible(source: &Td3Agent, target: &Td3Agent) -> Result<()> {
    let (s, t) = (&source.config, &target.config);
    if s.state_dim != t.state_dim
        || s.action_dim != t.action_dim
        || s.actor_hidden != t.actor_hidden
        || s.critic_hidden != t.critic_hidden
    {
        return Err(Error::Incompatible(format!(
            "source {} and target {} differ in architecture",
            source.id, target.id
        )));
    }
    source.check_shapes()
}

/// Copies all six networks of `source` into `target`. The target keeps its
/// id, configuration and buffer; its counters restart at zero and its
/// optimizers are either reset or copied from the source.
pub fn model_transfer(source: &Td3Agent, target: &mut Td3Agent, reset_optimizers: bool) -> Result<()> {
    check_compatible(source, target)?;
    target.actor = source.actor.clone();
    target.actor_target = source.actor_target.clone();
    target.critics = source.critics.clone();
    target.critic_targets = source.critic_targets.clone();
    target.actor_opt = source.actor_opt.clone();
    target.critic_opts = source.critic_opts.clone();
    if reset_optimizers {
        target.reset_optimizers();
    }
    target.train_calls = 0;
    target.env_steps = 0;
    Ok(())
}

/// `⌈fraction · n⌉`, ignoring rounding noise in the product.
fn transfer_count(fraction: f64, n: usize) -> usize {
    let exact = fraction * n as f64;
    let nearest = math::round(exact);
    let count = if (exact - nearest).abs() <= 1e-9 * exact.max(1.0) {
        nearest
    } else {
        math::ceil(exact)
    };
    (count as usize).min(n)
}

/// Appends a uniform subsample of `⌈fraction · |eligible|⌉` source
/// transitions, drawn without replacement and kept in source order, to the
/// target buffer. The copies keep the source as origin. Returns the number
/// transferred.
pub fn instance_transfer<R: Rng + ?Sized>(
    source: &ReplayBuffer,
    target: &mut ReplayBuffer,
    fraction: f64,
    phases: &[Phase],
    rng: &mut R,
) -> Result<usize> {
    if !(0.0..=1.0).contains(&fraction) {
        return Err(Error::Domain(format!(
            "instance fraction {fraction} outside [0, 1]"
        )));
    }
    let eligible: Vec<_> = source
        .iter()
        .filter(|t| phases.is_empty() || phases.contains(&t.phase))
        .collect();
    let count = transfer_count(fraction, eligible.len());
    let mut picked = rand::seq::index::sample(rng, eligible.len(), count).into_vec();
    picked.sort_unstable();
    for i in picked {
        let mut t = eligible[i].clone();
        if t.origin == target.owner() {
            t.origin = source.owner();
        }
        target.push(t);
    }
    Ok(count)
}

/// Copies the lowest `frozen_layers` layers of the source's actor and
/// critics into the target and freezes them; the remaining layers keep the
/// target's own initialisation. Target networks mirror the result and the
/// optimizers restart.
pub fn feature_transfer(source: &Td3Agent, target: &mut Td3Agent, frozen_layers: usize) -> Result<()> {
    check_compatible(source, target)?;
    let depth = source.actor.depth().min(source.critics[0].depth());
    if frozen_layers == 0 || frozen_layers >= depth {
        return Err(Error::Domain(format!(
            "frozen_layers must lie in 1..{depth}, got {frozen_layers}"
        )));
    }
    copy_frozen(&source.actor, &mut target.actor, frozen_layers);
    copy_frozen(&source.critics[0], &mut target.critics[0], frozen_layers);
    copy_frozen(&source.critics[1], &mut target.critics[1], frozen_layers);
    target.actor_target = target.actor.clone();
    target.critic_targets = target.critics.clone();
    target.actor_opt = Adam::new(&target.actor, target.actor_opt.config);
    target.critic_opts = [
        Adam::new(&target.critics[0], target.critic_opts[0].config),
        Adam::new(&target.critics[1], target.critic_opts[1].config),
    ];
    target.train_calls = 0;
    target.env_steps = 0;
    Ok(())
}

fn copy_frozen(src: &Mlp, dst: &mut Mlp, n: usize) {
    for (d, s) in dst.layers_mut().iter_mut().zip(src.layers()).take(n) {
        *d = s.clone();
        d.frozen = true;
    }
}

/// Applies `plan.strategy` to a fresh `target`.
pub fn apply_transfer<R: Rng + ?Sized>(
    source: &Td3Agent,
    target: &mut Td3Agent,
    plan: &TransferPlan,
    rng: &mut R,
) -> Result<()> {
    plan.validate()?;
    match plan.strategy {
        Strategy::Model => model_transfer(source, target, plan.reset_optimizers),
        Strategy::Feature => feature_transfer(source, target, plan.frozen_layers),
        Strategy::Instance => instance_transfer(
            &source.buffer,
            &mut target.buffer,
            plan.instance_fraction,
            &plan.phases,
            rng,
        )
        .map(|_| ()),
        Strategy::Integrated => integrated_transfer(source, target, plan, rng),
    }
}

/// Model transfer followed by instance transfer.
pub fn integrated_transfer<R: Rng + ?Sized>(
    source: &Td3Agent,
    target: &mut Td3Agent,
    plan: &TransferPlan,
    rng: &mut R,
) -> Result<()> {
    plan.validate()?;
    model_transfer(source, target, plan.reset_optimizers)?;
    instance_transfer(
        &source.buffer,
        &mut target.buffer,
        plan.instance_fraction,
        &plan.phases,
        rng,
    )?;
    Ok(())
}

/// Fine-tunes the agent of cell index `target` for `steps` steps with
/// constant logit noise `noise`, learning from the first step. Other cells
/// follow their own controllers. Returns the target's reward per step.
pub fn fine_tune<E: Executor>(
    env: &mut MultiCellEnv,
    controllers: &mut [Controller],
    target: usize,
    steps: u64,
    noise: f64,
    exec: &E,
) -> Result<Vec<f64>> {
    let slot = controllers
        .get_mut(target)
        .and_then(Controller::slot_mut)
        .ok_or_else(|| Error::Config(format!("cell index {target} is not controlled by an agent")))?;
    slot.plan = Plan::default().then(Segment::FineTune { noise }, steps);
    slot.step = 0;
    let mut trace = Vec::with_capacity(steps as usize);
    run(env, controllers, steps, exec, |r| {
        trace.push(r.rewards[target]);
        Ok(())
    })?;
    Ok(trace)
}
