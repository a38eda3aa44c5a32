//! Recurrent risk-signal policy trained by episodic policy gradient.
//!
//! The state's return columns are fed day by day through a GRU; the final
//! hidden state passes through one hidden layer to a softmax over the two
//! signals (bullish first). During training the signal is sampled from
//! that distribution; frozen, the argmax is played. At episode end each
//! step's log probability is weighted by the discounted suffix sum of the
//! execution-quality rewards ahead of it, and one ascent step follows.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::env::SignalType;
use crate::market::StateTensor;
use crate::tensor::graph::{affine, backward};
use crate::tensor::{gru_cell, Adam, AdamConfig, GruCellVars, ParamSet, Tape, Tensor, Var};
use crate::Scalar;

use super::AgentError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyConfig {
    /// Traded assets `m`; each GRU input has `m + 1` entries.
    pub num_assets: usize,
    /// Days per state window (GRU steps).
    pub window: usize,
    /// GRU hidden width.
    pub hidden: usize,
    /// Width of the dense layer after the GRU.
    pub fc_hidden: usize,
    /// Discount on suffix reward sums.
    pub gamma: Scalar,
    pub lr: Scalar,
    /// Standardize the suffix sums per episode before the update.
    pub standardize: bool,
}

impl PolicyConfig {
    pub fn new(num_assets: usize) -> Self {
        Self {
            num_assets,
            window: 3,
            hidden: 64,
            fc_hidden: 32,
            gamma: 0.99,
            lr: 1e-4,
            standardize: false,
        }
    }

    pub fn validate(&self) -> Result<(), AgentError> {
        if self.num_assets == 0 {
            return Err(AgentError::Config { message: "num_assets must be >= 1".into() });
        }
        if self.window == 0 || self.hidden == 0 || self.fc_hidden == 0 {
            return Err(AgentError::Config {
                message: "window, hidden, and fc_hidden must all be >= 1".into(),
            });
        }
        if !(0.0..=1.0).contains(&self.gamma) {
            return Err(AgentError::Config {
                message: format!("gamma must be in [0, 1], got {}", self.gamma),
            });
        }
        if !(self.lr > 0.0) {
            return Err(AgentError::Config {
                message: format!("learning rate must be positive, got {}", self.lr),
            });
        }
        Ok(())
    }

    fn components(&self) -> usize {
        self.num_assets + 1
    }
}

/// One day of the signal episode, as replayed by the update.
#[derive(Debug, Clone)]
pub struct EpisodeStep {
    pub state: StateTensor,
    pub signal: SignalType,
    /// Execution-quality reward earned on this day.
    pub pg_reward: Scalar,
}

/// Discounted suffix sums: entry `t` is `sum_{u >= t} gamma^(u-t) r_u`.
pub fn pg_returns(rewards: &[Scalar], gamma: Scalar) -> Vec<Scalar> {
    let mut out = vec![0.0; rewards.len()];
    let mut acc = 0.0;
    for (slot, &r) in out.iter_mut().zip(rewards).rev() {
        acc = r + gamma * acc;
        *slot = acc;
    }
    out
}

const GRU_GATES: [&str; 3] = ["z", "r", "n"];

pub struct RiskAgent {
    config: PolicyConfig,
    params: ParamSet<Scalar>,
    opt: Adam<Scalar>,
}

impl RiskAgent {
    pub fn new(config: PolicyConfig, rng: &mut impl Rng) -> Result<Self, AgentError> {
        config.validate()?;
        let d = config.components();
        let k = config.hidden;
        let mut params = ParamSet::new();
        for gate in GRU_GATES {
            params.add_glorot(format!("policy.gru.w_{gate}"), vec![d, k], d, k, rng);
            params.add_glorot(format!("policy.gru.u_{gate}"), vec![k, k], k, k, rng);
            params.add(format!("policy.gru.b_{gate}"), Tensor::zeros(vec![k]));
        }
        params.add_linear("policy.fc1", k, config.fc_hidden, rng);
        params.add_linear("policy.out", config.fc_hidden, 2, rng);
        Self::assemble(config, params)
    }

    /// Rebuilds the agent around loaded parameters; optimizer moments start
    /// fresh.
    pub fn from_params(config: PolicyConfig, params: ParamSet<Scalar>) -> Result<Self, AgentError> {
        config.validate()?;
        for gate in GRU_GATES {
            for part in ["w", "u", "b"] {
                let name = format!("policy.gru.{part}_{gate}");
                if params.id(&name).is_none() {
                    return Err(AgentError::Config {
                        message: format!("parameter set lacks {name}"),
                    });
                }
            }
        }
        for name in ["policy.fc1.weight", "policy.fc1.bias", "policy.out.weight", "policy.out.bias"]
        {
            if params.id(name).is_none() {
                return Err(AgentError::Config { message: format!("parameter set lacks {name}") });
            }
        }
        Self::assemble(config, params)
    }

    fn assemble(config: PolicyConfig, params: ParamSet<Scalar>) -> Result<Self, AgentError> {
        let ids = params.all_ids();
        let opt = Adam::new(AdamConfig::with_lr(config.lr), &params, ids);
        Ok(Self { config, params, opt })
    }

    pub fn config(&self) -> &PolicyConfig {
        &self.config
    }

    pub fn params(&self) -> &ParamSet<Scalar> {
        &self.params
    }

    /// Mutable access for tests and finite-difference probes.
    pub fn params_mut(&mut self) -> &mut ParamSet<Scalar> {
        &mut self.params
    }

    fn lease(
        &self,
        tape: &Tape<Scalar>,
        name: &str,
        trainable: bool,
    ) -> Result<Var<Scalar>, AgentError> {
        let id = self
            .params
            .id(name)
            .ok_or_else(|| AgentError::Config { message: format!("missing parameter {name}") })?;
        Ok(if trainable {
            tape.param(&self.params, id)
        } else {
            tape.constant(self.params.value(id).clone())
        })
    }

    fn gru_vars(&self, tape: &Tape<Scalar>, trainable: bool) -> Result<GruCellVars<Scalar>, AgentError> {
        Ok(GruCellVars {
            w_z: self.lease(tape, "policy.gru.w_z", trainable)?,
            u_z: self.lease(tape, "policy.gru.u_z", trainable)?,
            b_z: self.lease(tape, "policy.gru.b_z", trainable)?,
            w_r: self.lease(tape, "policy.gru.w_r", trainable)?,
            u_r: self.lease(tape, "policy.gru.u_r", trainable)?,
            b_r: self.lease(tape, "policy.gru.b_r", trainable)?,
            w_n: self.lease(tape, "policy.gru.w_n", trainable)?,
            u_n: self.lease(tape, "policy.gru.u_n", trainable)?,
            b_n: self.lease(tape, "policy.gru.b_n", trainable)?,
        })
    }

    /// Signal distribution `(1, 2)` for one state on the given tape.
    fn probs_graph(
        &self,
        tape: &Tape<Scalar>,
        state: &StateTensor,
        trainable: bool,
    ) -> Result<Var<Scalar>, AgentError> {
        let d = self.config.components();
        let w = self.config.window;
        if state.values.rows() != d || state.values.cols() != w {
            return Err(AgentError::Config {
                message: format!(
                    "state is {}x{} but the policy expects {d}x{w}",
                    state.values.rows(),
                    state.values.cols()
                ),
            });
        }
        let cell = self.gru_vars(tape, trainable)?;
        let mut h = tape.constant(Tensor::zeros(vec![1, self.config.hidden]));
        for t in 0..w {
            let col: Vec<Scalar> = (0..d).map(|r| state.values.get(r, t)).collect();
            let x = tape.constant(Tensor::new(vec![1, d], col));
            h = gru_cell(&x, &h, &cell)?;
        }
        let w1 = self.lease(tape, "policy.fc1.weight", trainable)?;
        let b1 = self.lease(tape, "policy.fc1.bias", trainable)?;
        let w2 = self.lease(tape, "policy.out.weight", trainable)?;
        let b2 = self.lease(tape, "policy.out.bias", trainable)?;
        let hid = affine(&h, &w1, &b1)?.relu()?;
        Ok(affine(&hid, &w2, &b2)?.softmax()?)
    }

    /// `(bullish, bearish)` probabilities for one state.
    pub fn signal_probabilities(
        &self,
        state: &StateTensor,
    ) -> Result<(Scalar, Scalar), AgentError> {
        let tape = Tape::new();
        let p = self.probs_graph(&tape, state, false)?.value();
        Ok((p.data()[0], p.data()[1]))
    }

    /// Samples the signal from the policy distribution (training mode).
    pub fn decide_stochastic(
        &self,
        state: &StateTensor,
        rng: &mut impl Rng,
    ) -> Result<SignalType, AgentError> {
        let (bullish, _) = self.signal_probabilities(state)?;
        let u: Scalar = rng.gen();
        Ok(if u < bullish { SignalType::Bullish } else { SignalType::Bearish })
    }

    /// Plays the most probable signal, bullish on ties (frozen mode).
    pub fn decide_greedy(&self, state: &StateTensor) -> Result<SignalType, AgentError> {
        let (bullish, bearish) = self.signal_probabilities(state)?;
        Ok(if bullish >= bearish { SignalType::Bullish } else { SignalType::Bearish })
    }

    /// The per-step weights of the episode objective: discounted suffix
    /// sums of the rewards, optionally standardized.
    fn advantages(&self, steps: &[EpisodeStep]) -> Vec<Scalar> {
        let rewards: Vec<Scalar> = steps.iter().map(|s| s.pg_reward).collect();
        let mut psi = pg_returns(&rewards, self.config.gamma);
        if self.config.standardize && psi.len() > 1 {
            let n = psi.len() as Scalar;
            let mean = psi.iter().sum::<Scalar>() / n;
            let var = psi.iter().map(|&v| (v - mean) * (v - mean)).sum::<Scalar>() / n;
            let std = var.sqrt();
            if std > 1e-12 {
                for v in &mut psi {
                    *v = (*v - mean) / std;
                }
            }
        }
        psi
    }

    fn episode_loss_graph(
        &self,
        steps: &[EpisodeStep],
        trainable: bool,
    ) -> Result<Var<Scalar>, AgentError> {
        assert!(!steps.is_empty(), "empty episode");
        let psi = self.advantages(steps);
        let tape = Tape::new();
        let mut total = tape.constant(Tensor::scalar(0.0));
        for (step, &weight) in steps.iter().zip(&psi) {
            let probs = self.probs_graph(&tape, &step.state, trainable)?;
            let mask = match step.signal {
                SignalType::Bullish => vec![1.0, 0.0],
                SignalType::Bearish => vec![0.0, 1.0],
            };
            let mask = tape.constant(Tensor::new(vec![1, 2], mask));
            let log_prob = probs.ln()?.mul(&mask)?.sum()?;
            total = total.add(&log_prob.scale(-weight)?)?;
        }
        Ok(total)
    }

    /// Negative advantage-weighted log likelihood of the episode.
    pub fn episode_loss(&self, steps: &[EpisodeStep]) -> Result<Scalar, AgentError> {
        Ok(self.episode_loss_graph(steps, false)?.value().item())
    }

    /// Backward pass of the episode loss; gradients stay in the set.
    pub fn backprop_episode(&mut self, steps: &[EpisodeStep]) -> Result<Scalar, AgentError> {
        let loss = self.episode_loss_graph(steps, true)?;
        let value = loss.value().item();
        backward(&loss, &mut self.params)?;
        Ok(value)
    }

    /// One policy-gradient step over a finished episode. Returns the loss.
    pub fn update_policy(&mut self, steps: &[EpisodeStep]) -> Result<Scalar, AgentError> {
        let value = self.backprop_episode(steps)?;
        self.opt.step(&mut self.params)?;
        Ok(value)
    }
}
