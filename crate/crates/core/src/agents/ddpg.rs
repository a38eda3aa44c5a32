//! Actor–critic trading agent over a convolutional state encoding.
//!
//! The state `(1, m+1, T)` (components by window days of log returns) passes
//! through two valid-mode convolutions along the time axis — each day sees
//! its own row, channels mix across time only — leaving `(32, m+1, T-2)`,
//! flattened into the shared feature vector. The actor maps features
//! through one hidden layer to a softmax over the `m+1` portfolio weights,
//! so its output is always a valid allocation. The critic embeds features
//! and action separately into a common hidden width, sums, and maps to one
//! Q value.
//!
//! Updates follow the deterministic policy gradient scheme: the critic
//! regresses onto bootstrapped targets from slowly trailing target copies;
//! the actor ascends the critic's score of its own actions, with the
//! critic's state branch received as a detached constant so the actor
//! gradient flows through the action alone. With a shared encoder the same
//! convolution weights serve both heads and learn from both updates; the
//! ablation duplicates the encoder per head.

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::market::StateTensor;
use crate::portfolio::WeightVector;
use crate::tensor::graph::{affine, backward};
use crate::tensor::params::soft_update;
use crate::tensor::{Adam, AdamConfig, ParamSet, Tape, Tensor, Var};
use crate::Scalar;

use super::replay::Transition;
use super::AgentError;

/// Whether the two heads read one encoder or private copies.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EncoderSharing {
    Shared,
    Separate,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DdpgConfig {
    /// Traded assets `m`; actions and states carry `m + 1` components.
    pub num_assets: usize,
    /// Days per state window (at least 3: two convolutions eat two days).
    pub window: usize,
    /// Discount on bootstrapped critic targets.
    pub gamma: Scalar,
    /// Polyak rate trailing the target copies.
    pub tau: Scalar,
    pub actor_lr: Scalar,
    pub critic_lr: Scalar,
    pub sharing: EncoderSharing,
}

impl DdpgConfig {
    pub fn new(num_assets: usize) -> Self {
        Self {
            num_assets,
            window: 3,
            gamma: 0.99,
            tau: 0.01,
            actor_lr: 1e-4,
            critic_lr: 1e-3,
            sharing: EncoderSharing::Shared,
        }
    }

    pub fn validate(&self) -> Result<(), AgentError> {
        if self.num_assets == 0 {
            return Err(AgentError::Config { message: "num_assets must be >= 1".into() });
        }
        if self.window < 3 {
            return Err(AgentError::Config {
                message: format!("window must be >= 3 for the two convolutions, got {}", self.window),
            });
        }
        if !(0.0..=1.0).contains(&self.gamma) {
            return Err(AgentError::Config {
                message: format!("gamma must be in [0, 1], got {}", self.gamma),
            });
        }
        if !(self.tau > 0.0 && self.tau <= 1.0) {
            return Err(AgentError::Config {
                message: format!("tau must be in (0, 1], got {}", self.tau),
            });
        }
        if !(self.actor_lr > 0.0) || !(self.critic_lr > 0.0) {
            return Err(AgentError::Config {
                message: format!(
                    "learning rates must be positive, got actor {} / critic {}",
                    self.actor_lr, self.critic_lr
                ),
            });
        }
        Ok(())
    }

    /// Portfolio components (cash plus assets).
    pub fn components(&self) -> usize {
        self.num_assets + 1
    }

    /// Width of the flattened encoder output.
    pub fn feature_dim(&self) -> usize {
        32 * self.components() * (self.window - 2)
    }

    /// Parameter-name prefixes of the (actor, critic) encoders.
    fn encoder_prefixes(&self) -> (&'static str, &'static str) {
        match self.sharing {
            EncoderSharing::Shared => ("encoder.", "encoder."),
            EncoderSharing::Separate => ("encoder_actor.", "encoder_critic."),
        }
    }
}

const ACTOR_HIDDEN: usize = 64;
const CRITIC_HIDDEN: usize = 64;
const CONV1_CHANNELS: usize = 16;
const CONV2_CHANNELS: usize = 32;

pub struct TradingAgent {
    config: DdpgConfig,
    online: ParamSet<Scalar>,
    target: ParamSet<Scalar>,
    actor_opt: Adam<Scalar>,
    critic_opt: Adam<Scalar>,
}

fn add_encoder(set: &mut ParamSet<Scalar>, prefix: &str, rng: &mut impl Rng) {
    set.add_conv2d(&format!("{prefix}conv1"), CONV1_CHANNELS, 1, 1, 2, rng);
    set.add_conv2d(&format!("{prefix}conv2"), CONV2_CHANNELS, CONV1_CHANNELS, 1, 2, rng);
}

impl TradingAgent {
    pub fn new(config: DdpgConfig, rng: &mut impl Rng) -> Result<Self, AgentError> {
        config.validate()?;
        let c = config.components();
        let feat = config.feature_dim();
        let mut online = ParamSet::new();
        let (actor_enc, critic_enc) = config.encoder_prefixes();
        add_encoder(&mut online, actor_enc, rng);
        if critic_enc != actor_enc {
            add_encoder(&mut online, critic_enc, rng);
        }
        online.add_linear("actor.fc1", feat, ACTOR_HIDDEN, rng);
        online.add_linear("actor.out", ACTOR_HIDDEN, c, rng);
        online.add_linear("critic.state", feat, CRITIC_HIDDEN, rng);
        online.add_linear("critic.action", c, CRITIC_HIDDEN, rng);
        online.add_linear("critic.out", CRITIC_HIDDEN, 1, rng);
        let target = online.clone();
        Self::assemble(config, online, target)
    }

    /// Rebuilds an agent around existing parameter sets (e.g. a loaded
    /// checkpoint). Optimizer moments start fresh.
    pub fn from_params(
        config: DdpgConfig,
        online: ParamSet<Scalar>,
        target: ParamSet<Scalar>,
    ) -> Result<Self, AgentError> {
        config.validate()?;
        let (actor_enc, critic_enc) = config.encoder_prefixes();
        let mut required: Vec<String> = Vec::new();
        let mut encoders = vec![actor_enc];
        if critic_enc != actor_enc {
            encoders.push(critic_enc);
        }
        for enc in encoders {
            for layer in ["conv1", "conv2"] {
                required.push(format!("{enc}{layer}.weight"));
                required.push(format!("{enc}{layer}.bias"));
            }
        }
        for head in ["actor.fc1", "actor.out", "critic.state", "critic.action", "critic.out"]
        {
            required.push(format!("{head}.weight"));
            required.push(format!("{head}.bias"));
        }
        for set in [&online, &target] {
            for name in &required {
                if set.id(name).is_none() {
                    return Err(AgentError::Config {
                        message: format!("parameter set lacks {name}"),
                    });
                }
            }
        }
        Self::assemble(config, online, target)
    }

    fn assemble(
        config: DdpgConfig,
        online: ParamSet<Scalar>,
        target: ParamSet<Scalar>,
    ) -> Result<Self, AgentError> {
        let (actor_enc, critic_enc) = config.encoder_prefixes();
        let actor_ids = online.ids_with_prefix(&[actor_enc, "actor."]);
        let critic_ids = online.ids_with_prefix(&[critic_enc, "critic."]);
        let actor_opt = Adam::new(AdamConfig::with_lr(config.actor_lr), &online, actor_ids);
        let critic_opt = Adam::new(AdamConfig::with_lr(config.critic_lr), &online, critic_ids);
        Ok(Self { config, online, target, actor_opt, critic_opt })
    }

    pub fn config(&self) -> &DdpgConfig {
        &self.config
    }

    pub fn online(&self) -> &ParamSet<Scalar> {
        &self.online
    }

    /// Mutable access for tests and finite-difference probes.
    pub fn online_mut(&mut self) -> &mut ParamSet<Scalar> {
        &mut self.online
    }

    pub fn target(&self) -> &ParamSet<Scalar> {
        &self.target
    }

    pub fn target_mut(&mut self) -> &mut ParamSet<Scalar> {
        &mut self.target
    }

    // -- forward pieces ----------------------------------------------------

    fn lease(
        &self,
        tape: &Tape<Scalar>,
        set: &ParamSet<Scalar>,
        name: &str,
        trainable: bool,
    ) -> Result<Var<Scalar>, AgentError> {
        let id = set
            .id(name)
            .ok_or_else(|| AgentError::Config { message: format!("missing parameter {name}") })?;
        Ok(if trainable { tape.param(set, id) } else { tape.constant(set.value(id).clone()) })
    }

    /// `(N, 1, m+1, T)` states to `(N, feature_dim)` features.
    fn encode(
        &self,
        tape: &Tape<Scalar>,
        set: &ParamSet<Scalar>,
        prefix: &str,
        x: &Var<Scalar>,
        trainable: bool,
    ) -> Result<Var<Scalar>, AgentError> {
        let k1 = self.lease(tape, set, &format!("{prefix}conv1.weight"), trainable)?;
        let b1 = self.lease(tape, set, &format!("{prefix}conv1.bias"), trainable)?;
        let k2 = self.lease(tape, set, &format!("{prefix}conv2.weight"), trainable)?;
        let b2 = self.lease(tape, set, &format!("{prefix}conv2.bias"), trainable)?;
        let h1 = x.conv2d(&k1)?.add_channel_bias(&b1)?.relu()?;
        let h2 = h1.conv2d(&k2)?.add_channel_bias(&b2)?.relu()?;
        let n = x.shape()[0];
        Ok(h2.reshape(vec![n, self.config.feature_dim()])?)
    }

    /// Features to pre-softmax allocation logits `(N, m+1)`.
    fn actor_logits(
        &self,
        tape: &Tape<Scalar>,
        set: &ParamSet<Scalar>,
        features: &Var<Scalar>,
        trainable: bool,
    ) -> Result<Var<Scalar>, AgentError> {
        let w1 = self.lease(tape, set, "actor.fc1.weight", trainable)?;
        let b1 = self.lease(tape, set, "actor.fc1.bias", trainable)?;
        let w2 = self.lease(tape, set, "actor.out.weight", trainable)?;
        let b2 = self.lease(tape, set, "actor.out.bias", trainable)?;
        let h = affine(features, &w1, &b1)?.relu()?;
        Ok(affine(&h, &w2, &b2)?)
    }

    /// (features, action) to Q values `(N, 1)`.
    fn critic_q(
        &self,
        tape: &Tape<Scalar>,
        set: &ParamSet<Scalar>,
        features: &Var<Scalar>,
        action: &Var<Scalar>,
        trainable: bool,
    ) -> Result<Var<Scalar>, AgentError> {
        let ws = self.lease(tape, set, "critic.state.weight", trainable)?;
        let bs = self.lease(tape, set, "critic.state.bias", trainable)?;
        let wa = self.lease(tape, set, "critic.action.weight", trainable)?;
        let ba = self.lease(tape, set, "critic.action.bias", trainable)?;
        let wq = self.lease(tape, set, "critic.out.weight", trainable)?;
        let bq = self.lease(tape, set, "critic.out.bias", trainable)?;
        let hs = affine(features, &ws, &bs)?;
        let ha = affine(action, &wa, &ba)?;
        let h = hs.add(&ha)?.relu()?;
        Ok(affine(&h, &wq, &bq)?)
    }

    fn states_tensor(&self, states: &[&StateTensor]) -> Result<Tensor<Scalar>, AgentError> {
        let h = self.config.components();
        let w = self.config.window;
        let mut data = Vec::with_capacity(states.len() * h * w);
        for s in states {
            if s.values.rows() != h || s.values.cols() != w {
                return Err(AgentError::Config {
                    message: format!(
                        "state is {}x{} but the agent expects {}x{}",
                        s.values.rows(),
                        s.values.cols(),
                        h,
                        w
                    ),
                });
            }
            data.extend_from_slice(s.values.data());
        }
        Ok(Tensor::new(vec![states.len(), 1, h, w], data))
    }

    fn actions_tensor(&self, batch: &[&Transition]) -> Result<Tensor<Scalar>, AgentError> {
        let c = self.config.components();
        let mut data = Vec::with_capacity(batch.len() * c);
        for t in batch {
            if t.action.len() != c {
                return Err(AgentError::Config {
                    message: format!(
                        "stored action has {} components, the agent expects {c}",
                        t.action.len()
                    ),
                });
            }
            data.extend_from_slice(&t.action);
        }
        Ok(Tensor::new(vec![batch.len(), c], data))
    }

    // -- acting --------------------------------------------------------------

    fn policy_weights(
        &self,
        state: &StateTensor,
        noise: Option<&[Scalar]>,
    ) -> Result<WeightVector<Scalar>, AgentError> {
        let (actor_enc, _) = self.config.encoder_prefixes();
        let tape = Tape::new();
        let x = tape.constant(self.states_tensor(&[state])?);
        let features = self.encode(&tape, &self.online, actor_enc, &x, false)?;
        let mut logits = self.actor_logits(&tape, &self.online, &features, false)?;
        if let Some(n) = noise {
            let nv = tape.constant(Tensor::new(vec![1, n.len()], n.to_vec()));
            logits = logits.add(&nv)?;
        }
        let w = logits.softmax()?.value();
        Ok(WeightVector::new(w.data().to_vec())?)
    }

    /// The deterministic allocation for a state.
    pub fn act(&self, state: &StateTensor) -> Result<WeightVector<Scalar>, AgentError> {
        self.policy_weights(state, None)
    }

    /// Exploration: Gaussian noise on the pre-softmax logits, so the played
    /// action still lands on the simplex.
    pub fn act_noisy(
        &self,
        state: &StateTensor,
        noise_std: Scalar,
        rng: &mut impl Rng,
    ) -> Result<WeightVector<Scalar>, AgentError> {
        if noise_std <= 0.0 {
            return self.act(state);
        }
        let normal = Normal::new(0.0, noise_std).map_err(|e| AgentError::Config {
            message: format!("invalid exploration noise std {noise_std}: {e}"),
        })?;
        let noise: Vec<Scalar> =
            (0..self.config.components()).map(|_| normal.sample(rng)).collect();
        self.policy_weights(state, Some(&noise))
    }

    /// Online critic's score of one state–action pair.
    pub fn critic_value(
        &self,
        state: &StateTensor,
        action: &[Scalar],
    ) -> Result<Scalar, AgentError> {
        let (_, critic_enc) = self.config.encoder_prefixes();
        let tape = Tape::new();
        let x = tape.constant(self.states_tensor(&[state])?);
        let features = self.encode(&tape, &self.online, critic_enc, &x, false)?;
        let a = tape.constant(Tensor::new(vec![1, action.len()], action.to_vec()));
        let q = self.critic_q(&tape, &self.online, &features, &a, false)?;
        Ok(q.value().item())
    }

    // -- learning --------------------------------------------------------

    /// Bootstrapped regression targets from the target copies:
    /// `y = r + gamma * Q'(s', mu'(s'))`, with the bootstrap dropped on
    /// terminal transitions.
    pub fn critic_targets(&self, batch: &[&Transition]) -> Result<Vec<Scalar>, AgentError> {
        let (actor_enc, critic_enc) = self.config.encoder_prefixes();
        let tape = Tape::new();
        let next: Vec<&StateTensor> = batch.iter().map(|t| &t.next_state).collect();
        let x = tape.constant(self.states_tensor(&next)?);
        let feat_a = self.encode(&tape, &self.target, actor_enc, &x, false)?;
        let next_action =
            self.actor_logits(&tape, &self.target, &feat_a, false)?.softmax()?;
        let feat_c = if critic_enc == actor_enc {
            feat_a
        } else {
            self.encode(&tape, &self.target, critic_enc, &x, false)?
        };
        let q = self.critic_q(&tape, &self.target, &feat_c, &next_action, false)?;
        let qv = q.value();
        Ok(batch
            .iter()
            .zip(qv.data())
            .map(|(t, &qn)| {
                if t.done {
                    t.reward
                } else {
                    t.reward + self.config.gamma * qn
                }
            })
            .collect())
    }

    fn critic_loss_graph(
        &self,
        batch: &[&Transition],
        targets: &[Scalar],
        trainable: bool,
    ) -> Result<Var<Scalar>, AgentError> {
        assert_eq!(batch.len(), targets.len(), "one target per transition");
        let (_, critic_enc) = self.config.encoder_prefixes();
        let tape = Tape::new();
        let states: Vec<&StateTensor> = batch.iter().map(|t| &t.state).collect();
        let x = tape.constant(self.states_tensor(&states)?);
        let a = tape.constant(self.actions_tensor(batch)?);
        let features = self.encode(&tape, &self.online, critic_enc, &x, trainable)?;
        let q = self.critic_q(&tape, &self.online, &features, &a, trainable)?;
        let y = tape.constant(Tensor::new(vec![batch.len(), 1], targets.to_vec()));
        let d = q.sub(&y)?;
        Ok(d.mul(&d)?.mean()?)
    }

    /// Mean squared error of the online critic against `targets`.
    pub fn critic_loss(
        &self,
        batch: &[&Transition],
        targets: &[Scalar],
    ) -> Result<Scalar, AgentError> {
        Ok(self.critic_loss_graph(batch, targets, false)?.value().item())
    }

    /// Backward pass of the critic loss; gradients stay in the online set.
    pub fn backprop_critic(
        &mut self,
        batch: &[&Transition],
        targets: &[Scalar],
    ) -> Result<Scalar, AgentError> {
        let loss = self.critic_loss_graph(batch, targets, true)?;
        let value = loss.value().item();
        backward(&loss, &mut self.online)?;
        Ok(value)
    }

    /// One critic regression step. Returns the pre-step loss.
    pub fn update_critic(
        &mut self,
        batch: &[&Transition],
        targets: &[Scalar],
    ) -> Result<Scalar, AgentError> {
        let value = self.backprop_critic(batch, targets)?;
        self.critic_opt.step(&mut self.online)?;
        Ok(value)
    }

    fn actor_objective_graph(
        &self,
        batch: &[&Transition],
        trainable: bool,
    ) -> Result<Var<Scalar>, AgentError> {
        let (actor_enc, critic_enc) = self.config.encoder_prefixes();
        let tape = Tape::new();
        let states: Vec<&StateTensor> = batch.iter().map(|t| &t.state).collect();
        let x = tape.constant(self.states_tensor(&states)?);
        let feat_a = self.encode(&tape, &self.online, actor_enc, &x, trainable)?;
        let action = self.actor_logits(&tape, &self.online, &feat_a, trainable)?.softmax()?;
        // The critic's state branch is detached: the actor gradient flows
        // through the action input alone, and the critic itself is frozen.
        let feat_c = if critic_enc == actor_enc {
            tape.constant(feat_a.value())
        } else {
            self.encode(&tape, &self.online, critic_enc, &x, false)?
        };
        let q = self.critic_q(&tape, &self.online, &feat_c, &action, false)?;
        Ok(q.mean()?)
    }

    /// Mean online-critic score of the actor's own actions.
    pub fn actor_objective(&self, batch: &[&Transition]) -> Result<Scalar, AgentError> {
        Ok(self.actor_objective_graph(batch, false)?.value().item())
    }

    /// Backward pass of the (negated) actor objective; gradients stay in
    /// the online set.
    pub fn backprop_actor(&mut self, batch: &[&Transition]) -> Result<Scalar, AgentError> {
        let objective = self.actor_objective_graph(batch, true)?;
        let value = objective.value().item();
        let loss = objective.scale(-1.0)?;
        backward(&loss, &mut self.online)?;
        Ok(value)
    }

    /// One actor ascent step. Returns the pre-step objective.
    pub fn update_actor(&mut self, batch: &[&Transition]) -> Result<Scalar, AgentError> {
        let value = self.backprop_actor(batch)?;
        self.actor_opt.step(&mut self.online)?;
        Ok(value)
    }

    /// Polyak-trails both target copies toward the online parameters.
    pub fn soft_update_target(&mut self) -> Result<(), AgentError> {
        Ok(soft_update(&mut self.target, &self.online, self.config.tau)?)
    }
}
