use alloc::format;
use alloc::vec::Vec;

use rand::Rng;
use rand_distr::{Distribution, Exp1, Normal};

use super::{ReplayBuffer, Transition};
use crate::codec::{read_adam, read_mlp, write_adam, write_mlp, Reader, Writer};
use crate::env::PartitionAction;
use crate::nn::{softmax, Activation, Adam, AdamConfig, Dense, Gradients, Mlp};
use crate::{CellId, Error, Result};

pub const AGENT_MAGIC: [u8; 4] = *b"TD3A";

/// Uniform range of the output-layer weights of actor and critics.
const HEAD_INIT: f64 = 3e-3;

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default))]
pub struct Td3Config {
    pub state_dim: usize,
    pub action_dim: usize,
    pub actor_hidden: Vec<usize>,
    pub critic_hidden: Vec<usize>,
    pub actor_lr: f64,
    pub critic_lr: f64,
    pub gamma: f64,
    /// Soft target update rate.
    pub tau: f64,
    pub policy_delay: u64,
    /// Std of the logit noise used for target policy smoothing.
    pub target_noise: f64,
    pub target_noise_clip: f64,
    /// Logit noise std at the start of training.
    pub explore_noise: f64,
    /// Logit noise std reached at the end of training.
    pub explore_noise_final: f64,
    pub batch_size: usize,
    pub buffer_capacity: usize,
}

impl Default for Td3Config {
    fn default() -> Self {
        Self::for_slices(4)
    }
}

impl Td3Config {
    /// Defaults for a cell with `n` slices (state `4n`, action `n`).
    pub fn for_slices(n: usize) -> Self {
        Td3Config {
            state_dim: 4 * n,
            action_dim: n,
            actor_hidden: Vec::from([48, 24]),
            critic_hidden: Vec::from([64, 24]),
            actor_lr: 5e-4,
            critic_lr: 1e-3,
            gamma: 0.1,
            tau: 0.005,
            policy_delay: 2,
            target_noise: 0.1,
            target_noise_clip: 0.2,
            explore_noise: 0.3,
            explore_noise_final: 0.1,
            batch_size: 32,
            buffer_capacity: 20_000,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |what: &str| Err(Error::Config(format!("TD3: {what}")));
        if self.state_dim == 0 || self.action_dim == 0 {
            return bad("state and action dimensions must be positive");
        }
        if self.actor_hidden.contains(&0) || self.critic_hidden.contains(&0) {
            return bad("hidden layers must be non-empty");
        }
        if !(0.0..=1.0).contains(&self.gamma) || !(0.0..=1.0).contains(&self.tau) {
            return bad("gamma and tau must lie in [0, 1]");
        }
        if self.policy_delay == 0 || self.batch_size == 0 || self.buffer_capacity < self.batch_size {
            return bad("policy_delay, batch_size must be positive and capacity >= batch_size");
        }
        if [
            self.actor_lr,
            self.critic_lr,
            self.target_noise,
            self.target_noise_clip,
            self.explore_noise,
            self.explore_noise_final,
        ]
        .iter()
        .any(|v| !(*v >= 0.0 && v.is_finite()))
        {
            return bad("learning rates and noise scales must be finite and non-negative");
        }
        Ok(())
    }

    fn actor_sizes(&self) -> Vec<usize> {
        let mut s = Vec::from([self.state_dim]);
        s.extend(&self.actor_hidden);
        s.push(self.action_dim);
        s
    }

    fn critic_sizes(&self) -> Vec<usize> {
        let mut s = Vec::from([self.state_dim + self.action_dim]);
        s.extend(&self.critic_hidden);
        s.push(1);
        s
    }
}

/// Losses of one [`Td3Agent::train_step`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainStats {
    pub critic_losses: [f64; 2],
    pub actor_loss: Option<f64>,
}

/// TD3 with a softmax actor: the actor emits logits and every action is their
/// softmax, so actions always lie on the simplex. Exploration and target
/// smoothing noise are added to the logits.
#[derive(Debug, Clone, PartialEq)]
pub struct Td3Agent {
    pub id: CellId,
    pub config: Td3Config,
    pub actor: Mlp,
    pub actor_target: Mlp,
    pub critics: [Mlp; 2],
    pub critic_targets: [Mlp; 2],
    pub actor_opt: Adam,
    pub critic_opts: [Adam; 2],
    pub buffer: ReplayBuffer,
    /// Successful `train_step` calls.
    pub train_calls: u64,
    /// Environment steps taken by this agent.
    pub env_steps: u64,
}

fn build<R: Rng + ?Sized>(sizes: &[usize], head: Activation, rng: &mut R) -> Mlp {
    let mut mlp = Mlp::new(sizes, Activation::Relu, head, rng);
    let last = mlp.depth() - 1;
    let (i, o) = mlp.shape()[last];
    mlp.layers_mut()[last] = Dense::uniform(i, o, head, HEAD_INIT, rng);
    mlp
}

/// Flat-Dirichlet draw on the simplex (normalised unit exponentials).
pub fn random_simplex_action<R: Rng + ?Sized>(n: usize, rng: &mut R) -> PartitionAction {
    let weights: Vec<f64> = (0..n).map(|_| Exp1.sample(rng)).collect();
    PartitionAction::from_weights(&weights).expect("exponential draws are finite and non-negative")
}

/// `target ← tau · online + (1 − tau) · target`. Frozen layers of `online`
/// are copied verbatim.
pub fn soft_update(target: &mut Mlp, online: &Mlp, tau: f64) -> Result<()> {
    target.soft_update_from(online, tau)
}

fn concat(a: &[f64], b: &[f64]) -> Vec<f64> {
    let mut v = Vec::with_capacity(a.len() + b.len());
    v.extend_from_slice(a);
    v.extend_from_slice(b);
    v
}

impl Td3Agent {
    pub fn new<R: Rng + ?Sized>(id: CellId, config: Td3Config, rng: &mut R) -> Result<Self> {
        config.validate()?;
        let actor = build(&config.actor_sizes(), Activation::Softmax, rng);
        let critics = [
            build(&config.critic_sizes(), Activation::Identity, rng),
            build(&config.critic_sizes(), Activation::Identity, rng),
        ];
        let adam = AdamConfig::default();
        Ok(Td3Agent {
            id,
            actor_target: actor.clone(),
            critic_targets: critics.clone(),
            actor_opt: Adam::new(&actor, adam),
            critic_opts: [Adam::new(&critics[0], adam), Adam::new(&critics[1], adam)],
            actor,
            critics,
            buffer: ReplayBuffer::new(id, config.buffer_capacity, config.batch_size),
            train_calls: 0,
            env_steps: 0,
            config,
        })
    }

    fn check_state(&self, state: &[f64]) -> Result<()> {
        if state.len() != self.config.state_dim {
            return Err(Error::dim("agent state", self.config.state_dim, state.len()));
        }
        Ok(())
    }

    /// Deterministic policy output.
    pub fn act(&self, state: &[f64]) -> Result<PartitionAction> {
        self.check_state(state)?;
        PartitionAction::from_weights(&self.actor.predict(state)?)
    }

    /// Policy action; with `noise = Some(σ)` Gaussian noise of std σ is added
    /// to the logits before the softmax.
    pub fn select_action<R: Rng + ?Sized>(
        &self,
        state: &[f64],
        noise: Option<f64>,
        rng: &mut R,
    ) -> Result<PartitionAction> {
        let Some(sigma) = noise.filter(|s| *s > 0.0) else {
            return self.act(state);
        };
        self.check_state(state)?;
        let normal = Normal::new(0.0, sigma).map_err(|e| Error::Domain(format!("{e}")))?;
        let mut logits = self.actor.predict_pre_head(state)?;
        logits.iter_mut().for_each(|l| *l += normal.sample(rng));
        PartitionAction::from_weights(&softmax(&logits))
    }

    /// Q estimate of the first online critic.
    pub fn q_value(&self, state: &[f64], action: &PartitionAction) -> Result<f64> {
        Ok(self.critics[0].predict(&concat(state, action.shares()))?[0])
    }

    /// Clipped double-Q targets `r + γ · min(Q1'(s', ã), Q2'(s', ã))`, where
    /// `ã` is the target policy's action with clipped logit noise.
    pub fn critic_targets<R: Rng + ?Sized>(&self, batch: &[&Transition], rng: &mut R) -> Result<Vec<f64>> {
        let cfg = &self.config;
        let noise = (cfg.target_noise > 0.0)
            .then(|| Normal::new(0.0, cfg.target_noise))
            .transpose()
            .map_err(|e| Error::Domain(format!("{e}")))?;
        batch
            .iter()
            .map(|t| {
                self.check_state(&t.next_state)?;
                let mut logits = self.actor_target.predict_pre_head(&t.next_state)?;
                if let Some(n) = &noise {
                    for l in &mut logits {
                        let eps: f64 = n.sample(rng);
                        *l += eps.clamp(-cfg.target_noise_clip, cfg.target_noise_clip);
                    }
                }
                let input = concat(&t.next_state, &softmax(&logits));
                let q1 = self.critic_targets[0].predict(&input)?[0];
                let q2 = self.critic_targets[1].predict(&input)?[0];
                Ok(t.reward + cfg.gamma * q1.min(q2))
            })
            .collect()
    }

    /// One TD3 update on `batch`: both critics regress onto the clipped
    /// double-Q target; every `policy_delay`-th call the actor ascends `Q1`
    /// and the target networks move towards the online ones.
    ///
    /// On a non-finite loss or gradient the agent is left unchanged.
    pub fn train_step<R: Rng + ?Sized>(&mut self, batch: &[&Transition], rng: &mut R) -> Result<TrainStats> {
        if batch.is_empty() {
            return Err(Error::Domain("empty training batch".into()));
        }
        let targets = self.critic_targets(batch, rng)?;
        let scale = 1.0 / batch.len() as f64;

        let mut critic_losses = [0.0; 2];
        let mut critic_grads = [
            Gradients::zeros_like(&self.critics[0]),
            Gradients::zeros_like(&self.critics[1]),
        ];
        for (t, y) in batch.iter().zip(&targets) {
            self.check_state(&t.state)?;
            let input = concat(&t.state, t.action.shares());
            for c in 0..2 {
                let (q, cache) = self.critics[c].forward(&input)?;
                let err = q[0] - y;
                critic_losses[c] += err * err * scale;
                let (g, _) = self.critics[c].backward(&cache, &[2.0 * err * scale])?;
                critic_grads[c].add_assign(&g);
            }
        }
        if critic_losses.iter().any(|l| !l.is_finite()) {
            return Err(Error::Numeric(format!(
                "agent {}: non-finite critic loss {critic_losses:?}",
                self.id
            )));
        }
        if let Some(layer) = critic_grads.iter().find_map(Gradients::first_non_finite) {
            return Err(Error::NonFiniteGradient { layer });
        }

        let update_actor = (self.train_calls + 1) % self.config.policy_delay == 0;
        let backup = update_actor.then(|| (self.critics.clone(), self.critic_opts.clone()));

        for ((opt, critic), g) in self
            .critic_opts
            .iter_mut()
            .zip(&mut self.critics)
            .zip(&critic_grads)
        {
            opt.step(critic, g, self.config.critic_lr)?;
        }

        let mut actor_loss = None;
        if update_actor {
            match self.actor_gradients(batch, scale) {
                Ok((loss, grads)) => {
                    if let Err(e) = self.actor_opt.step(&mut self.actor, &grads, self.config.actor_lr) {
                        self.restore(backup);
                        return Err(e);
                    }
                    actor_loss = Some(loss);
                }
                Err(e) => {
                    self.restore(backup);
                    return Err(e);
                }
            }
            let tau = self.config.tau;
            soft_update(&mut self.actor_target, &self.actor, tau)?;
            for c in 0..2 {
                soft_update(&mut self.critic_targets[c], &self.critics[c], tau)?;
            }
        }
        self.train_calls += 1;
        Ok(TrainStats {
            critic_losses,
            actor_loss,
        })
    }

    fn restore(&mut self, backup: Option<([Mlp; 2], [Adam; 2])>) {
        if let Some((critics, opts)) = backup {
            self.critics = critics;
            self.critic_opts = opts;
        }
    }

    /// Deterministic policy gradient: minimises `−mean Q1(s, π(s))`.
    fn actor_gradients(&self, batch: &[&Transition], scale: f64) -> Result<(f64, Gradients)> {
        let mut grads = Gradients::zeros_like(&self.actor);
        let mut loss = 0.0;
        let sd = self.config.state_dim;
        for t in batch {
            let (action, actor_cache) = self.actor.forward(&t.state)?;
            let (q, critic_cache) = self.critics[0].forward(&concat(&t.state, &action))?;
            loss -= q[0] * scale;
            let d_input = self.critics[0].input_gradient(&critic_cache, &[-scale])?;
            let (g, _) = self.actor.backward(&actor_cache, &d_input[sd..])?;
            grads.add_assign(&g);
        }
        if !loss.is_finite() {
            return Err(Error::Numeric(format!(
                "agent {}: non-finite actor loss",
                self.id
            )));
        }
        if let Some(layer) = grads.first_non_finite() {
            return Err(Error::NonFiniteGradient { layer });
        }
        Ok((loss, grads))
    }

    /// Samples a batch from the agent's own buffer and trains on it. Returns
    /// `None` while the buffer holds fewer than `batch_size` transitions.
    pub fn learn<R: Rng + ?Sized>(&mut self, rng: &mut R) -> Result<Option<TrainStats>> {
        if self.buffer.len() < self.config.batch_size {
            return Ok(None);
        }
        let buffer = core::mem::replace(&mut self.buffer, ReplayBuffer::new(self.id, 1, 0));
        let result = {
            let batch = buffer.sample(self.config.batch_size, rng);
            self.train_step(&batch, rng)
        };
        self.buffer = buffer;
        result.map(Some)
    }

    /// Resets every optimizer's moments and step counter.
    pub fn reset_optimizers(&mut self) {
        self.actor_opt.reset();
        self.critic_opts.iter_mut().for_each(Adam::reset);
    }

    /// The six networks in checkpoint order.
    pub fn networks(&self) -> [&Mlp; 6] {
        [
            &self.actor,
            &self.actor_target,
            &self.critics[0],
            &self.critics[1],
            &self.critic_targets[0],
            &self.critic_targets[1],
        ]
    }

    /// Checkpoint of metadata, all six networks and the three optimizers.
    /// The replay buffer is exported separately.
    pub fn to_bytes(&self) -> Vec<u8> {
        let c = &self.config;
        let mut w = Writer::new();
        w.header(AGENT_MAGIC);
        w.u32(self.id);
        w.u64(self.train_calls);
        w.u64(self.env_steps);
        w.u64(c.state_dim as u64);
        w.u64(c.action_dim as u64);
        for hidden in [&c.actor_hidden, &c.critic_hidden] {
            w.u32(hidden.len() as u32);
            hidden.iter().for_each(|h| w.u64(*h as u64));
        }
        for v in [c.actor_lr, c.critic_lr, c.gamma, c.tau] {
            w.f64(v);
        }
        w.u64(c.policy_delay);
        for v in [
            c.target_noise,
            c.target_noise_clip,
            c.explore_noise,
            c.explore_noise_final,
        ] {
            w.f64(v);
        }
        w.u64(c.batch_size as u64);
        w.u64(c.buffer_capacity as u64);
        for net in self.networks() {
            write_mlp(&mut w, net);
        }
        write_adam(&mut w, &self.actor_opt);
        write_adam(&mut w, &self.critic_opts[0]);
        write_adam(&mut w, &self.critic_opts[1]);
        w.finish()
    }

    /// Restores a checkpoint with an empty replay buffer.
    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader::new(bytes);
        r.header(AGENT_MAGIC)?;
        let id = r.u32()?;
        let train_calls = r.u64()?;
        let env_steps = r.u64()?;
        let state_dim = r.usize()?;
        let action_dim = r.usize()?;
        let mut hidden = || -> Result<Vec<usize>> {
            let n = r.u32()? as usize;
            (0..n).map(|_| r.usize()).collect()
        };
        let actor_hidden = hidden()?;
        let critic_hidden = hidden()?;
        let config = Td3Config {
            state_dim,
            action_dim,
            actor_hidden,
            critic_hidden,
            actor_lr: r.f64()?,
            critic_lr: r.f64()?,
            gamma: r.f64()?,
            tau: r.f64()?,
            policy_delay: r.u64()?,
            target_noise: r.f64()?,
            target_noise_clip: r.f64()?,
            explore_noise: r.f64()?,
            explore_noise_final: r.f64()?,
            batch_size: r.usize()?,
            buffer_capacity: r.usize()?,
        };
        config.validate().map_err(|e| Error::Decode(format!("{e}")))?;
        let mut nets = Vec::with_capacity(6);
        for _ in 0..6 {
            nets.push(read_mlp(&mut r)?);
        }
        let opts = [read_adam(&mut r)?, read_adam(&mut r)?, read_adam(&mut r)?];
        r.expect_end()?;
        let [actor, actor_target, c0, c1, t0, t1]: [Mlp; 6] = nets.try_into().expect("six networks read");
        let [actor_opt, o0, o1] = opts;
        let agent = Td3Agent {
            id,
            buffer: ReplayBuffer::new(id, config.buffer_capacity, config.batch_size),
            config,
            actor,
            actor_target,
            critics: [c0, c1],
            critic_targets: [t0, t1],
            actor_opt,
            critic_opts: [o0, o1],
            train_calls,
            env_steps,
        };
        agent.check_shapes().map_err(|e| Error::Decode(format!("{e}")))?;
        Ok(agent)
    }

    /// Verifies that all networks match the configured architecture and that
    /// targets and optimizers mirror the online networks.
    pub fn check_shapes(&self) -> Result<()> {
        let actor_sizes = self.config.actor_sizes();
        let critic_sizes = self.config.critic_sizes();
        let sizes_of = |m: &Mlp| {
            let mut s: Vec<usize> = m.shape().iter().map(|(i, _)| *i).collect();
            s.push(m.output_dim());
            s
        };
        if sizes_of(&self.actor) != actor_sizes {
            return Err(Error::Incompatible(format!(
                "actor layers {:?}, expected {actor_sizes:?}",
                sizes_of(&self.actor)
            )));
        }
        for c in &self.critics {
            if sizes_of(c) != critic_sizes {
                return Err(Error::Incompatible(format!(
                    "critic layers {:?}, expected {critic_sizes:?}",
                    sizes_of(c)
                )));
            }
        }
        let mirrored = self.actor.same_shape(&self.actor_target)
            && (0..2).all(|c| self.critics[c].same_shape(&self.critic_targets[c]))
            && self.actor_opt.matches(&self.actor)
            && (0..2).all(|c| self.critic_opts[c].matches(&self.critics[c]));
        if !mirrored {
            return Err(Error::Incompatible(
                "targets or optimizer states do not mirror the online networks".into(),
            ));
        }
        Ok(())
    }
}
