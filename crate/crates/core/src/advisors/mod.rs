//! Option advisors.
//!
//! [`Goa`] learns joint option values over the global state, [`Loa`] learns
//! per-option values over local observations (one shared module or one per
//! agent) and [`Sro`] factors local option values into successor features
//! and reward weights. All three train from replayed transitions with
//! intra-option matching: an option is updated from a transition when its
//! policy puts at least `match_threshold` mass on the action actually taken.

mod goa;
mod loa;
mod sro;

pub use goa::{Goa, JointAdvice, JointIndex};
pub use loa::{Loa, LoaMode, LoaModule};
pub use sro::{Sro, SroConfig, SroParts, WeightMode};

use serde::{Deserialize, Serialize};

use crate::nnkernel::Mlp;
use crate::optioncore::{OptionSetView, PolicyBank, TerminationHead, XiMode};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AdvisorKind {
    None,
    Goa,
    Loa,
    Sro,
}

impl AdvisorKind {
    pub fn name(self) -> &'static str {
        match self {
            AdvisorKind::None => "none",
            AdvisorKind::Goa => "goa",
            AdvisorKind::Loa => "loa",
            AdvisorKind::Sro => "sro",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "none" => Ok(AdvisorKind::None),
            "goa" => Ok(AdvisorKind::Goa),
            "loa" => Ok(AdvisorKind::Loa),
            "sro" => Ok(AdvisorKind::Sro),
            other => Err(Error::config(format!("unknown advisor {other:?}"))),
        }
    }
}

/// Hyperparameters shared by every advisor.
#[derive(Debug, Clone, PartialEq)]
pub struct AdvisorConfig {
    pub lr: f64,
    pub batch: usize,
    pub target_interval: u64,
    pub gamma: f64,
    pub hidden: Vec<usize>,
    pub capacity: usize,
    /// `None` means `1/|A| - 1e-12`.
    pub match_threshold: Option<f64>,
    pub termination_lr: f64,
    pub xi: f64,
    pub xi_mode: XiMode,
    /// Constant termination probability instead of a learned head.
    pub fixed_beta: Option<f64>,
}

impl Default for AdvisorConfig {
    fn default() -> Self {
        Self {
            lr: 1e-5,
            batch: 32,
            target_interval: 1000,
            gamma: 0.99,
            hidden: vec![64],
            capacity: crate::rlcore::DEFAULT_REPLAY_CAPACITY,
            match_threshold: None,
            termination_lr: 1e-3,
            xi: 0.01,
            xi_mode: XiMode::Margin,
            fixed_beta: None,
        }
    }
}

impl AdvisorConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lr >= 0.0) || !(self.termination_lr >= 0.0) {
            return Err(Error::config("advisor learning rates must be non-negative"));
        }
        if self.batch == 0 || self.target_interval == 0 || self.capacity == 0 {
            return Err(Error::config("advisor batch, target interval and capacity must be positive"));
        }
        if !(self.gamma >= 0.0 && self.gamma <= 1.0) {
            return Err(Error::config("advisor discount must lie in [0, 1]"));
        }
        if let Some(b) = self.fixed_beta {
            if !(0.0..=1.0).contains(&b) {
                return Err(Error::config("fixed termination probability must lie in [0, 1]"));
            }
        }
        Ok(())
    }

    pub fn threshold(&self, actions: usize) -> f64 {
        self.match_threshold.unwrap_or(1.0 / actions as f64 - 1e-12)
    }

    pub(crate) fn termination_head<R: rand::Rng + ?Sized>(&self, input: usize, options: usize, rng: &mut R) -> Result<TerminationHead> {
        match self.fixed_beta {
            Some(p) => Ok(TerminationHead::Fixed(p)),
            None => TerminationHead::learned(input, &self.hidden, options, self.termination_lr, self.xi, self.xi_mode, rng),
        }
    }
}

/// One agent's step as seen by a local advisor.
#[derive(Debug, Clone, PartialEq)]
pub struct LocalTransition {
    pub obs: Vec<f64>,
    pub action: usize,
    pub reward: f64,
    pub next_obs: Vec<f64>,
    /// True termination (not a time-limit cut).
    pub done: bool,
    /// Option advising the agent when the step was taken.
    pub option: Option<usize>,
}

/// One joint step for the global advisor; `reward` is the team sum.
#[derive(Debug, Clone, PartialEq)]
pub struct GlobalTransition {
    pub state: Vec<f64>,
    pub next_state: Vec<f64>,
    pub observations: Vec<Vec<f64>>,
    pub actions: Vec<usize>,
    pub reward: f64,
    pub done: bool,
    pub joint_option: Option<usize>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize)]
pub struct AdvisorLoss {
    /// Option-value TD loss, or the successor-feature loss for SRO.
    pub value: f64,
    pub reconstruction: f64,
    pub reward: f64,
    /// (sample, option) pairs that passed the intra-option match.
    pub matched: usize,
    pub samples: usize,
}

/// Local advisors expose what selection and termination need.
pub trait LocalAdvisor {
    fn num_options(&self) -> usize;
    fn head(&self, agent: usize) -> &TerminationHead;
    fn termination_input(&self, agent: usize, obs: &[f64]) -> Result<Vec<f64>>;
    /// Values for every option id; the agent's own entry is `-inf`.
    fn option_values(&self, agent: usize, obs: &[f64]) -> Result<Vec<f64>>;
}

/// Options whose policy matches `action` at `obs`.
pub fn matching_options(policies: &dyn PolicyBank, obs: &[f64], action: usize, threshold: f64) -> Result<Vec<usize>> {
    let mut out = Vec::new();
    for o in 0..policies.num_policies() {
        let p = policies.probs(o, obs)?;
        if p.get(action).copied().unwrap_or(0.0) >= threshold {
            out.push(o);
        }
    }
    Ok(out)
}

/// Upon-arrival value `(1 - beta) q + beta max`.
pub fn upon_arrival(q: f64, max: f64, beta: f64) -> f64 {
    (1.0 - beta) * q + beta * max
}

pub(crate) fn masked_max(values: &[f64], view: &OptionSetView, agent: usize) -> f64 {
    view.candidates(agent)
        .into_iter()
        .map(|o| values[o])
        .fold(f64::NEG_INFINITY, f64::max)
}

pub(crate) fn mask_self(mut values: Vec<f64>, agent: usize) -> Vec<f64> {
    if let Some(v) = values.get_mut(agent) {
        *v = f64::NEG_INFINITY;
    }
    values
}

/// A regression target for one head of a value network.
#[derive(Debug, Clone, PartialEq)]
pub struct TdItem {
    pub input: Vec<f64>,
    pub head: usize,
    pub target: f64,
}

/// `(1/denom) sum (target - q(input)[head])^2`.
pub fn td_loss(q: &Mlp, items: &[TdItem], denom: f64) -> Result<f64> {
    let mut loss = 0.0;
    for it in items {
        let v = q.predict(&it.input)?[it.head];
        loss += (it.target - v).powi(2);
    }
    Ok(loss / denom)
}

/// [`td_loss`] with gradient accumulation. Items sharing an input in a row
/// are folded into one backward pass.
pub fn td_backward(q: &mut Mlp, items: &[TdItem], denom: f64) -> Result<f64> {
    let mut loss = 0.0;
    let mut k = 0;
    while k < items.len() {
        let out = q.forward(&items[k].input)?.to_vec();
        let mut upstream = vec![0.0; out.len()];
        let mut j = k;
        while j < items.len() && (j == k || items[j].input == items[k].input) {
            let it = &items[j];
            let diff = out[it.head] - it.target;
            loss += diff * diff;
            upstream[it.head] += 2.0 * diff / denom;
            j += 1;
        }
        q.backward_params(&upstream)?;
        k = j;
    }
    Ok(loss / denom)
}
