//! Options over teammates' policies: self-excluding option sets, epsilon-greedy
//! selection, termination heads, call-and-return bookkeeping and the decaying
//! imitation loss.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::nnkernel::{sigmoid, softmax_temp, Activation, Head, Mlp, MlpSpec, Parameterized};
use crate::rlcore::{PolicyNet, TransferTarget};
use crate::{Error, Result};

const MIN_PROB: f64 = 1e-8;

/// Option `j` follows agent `j`'s policy; agent `i` may choose any option but `i`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct OptionSetView {
    pub num_options: usize,
}

impl OptionSetView {
    pub fn new(num_options: usize) -> Result<Self> {
        if num_options < 2 {
            return Err(Error::config("option sets need at least two agents so no mask is empty"));
        }
        Ok(Self { num_options })
    }

    pub fn allowed(&self, agent: usize, option: usize) -> bool {
        option < self.num_options && option != agent
    }

    pub fn candidates(&self, agent: usize) -> Vec<usize> {
        (0..self.num_options).filter(|&o| o != agent).collect()
    }
}

/// Read access to the intra-option policies.
pub trait PolicyBank {
    fn num_policies(&self) -> usize;
    fn probs(&self, option: usize, obs: &[f64]) -> Result<Vec<f64>>;
}

impl PolicyBank for [PolicyNet] {
    fn num_policies(&self) -> usize {
        self.len()
    }

    fn probs(&self, option: usize, obs: &[f64]) -> Result<Vec<f64>> {
        self.get(option)
            .ok_or_else(|| Error::usage(format!("no policy for option {option}")))?
            .probs(obs)
    }
}

impl PolicyBank for Vec<PolicyNet> {
    fn num_policies(&self) -> usize {
        self.len()
    }

    fn probs(&self, option: usize, obs: &[f64]) -> Result<Vec<f64>> {
        self.as_slice().probs(option, obs)
    }
}

/// Lowest-id argmax over the options `agent` may pick.
pub fn greedy_option(values: &[f64], view: &OptionSetView, agent: usize) -> Result<usize> {
    let mut best: Option<(usize, f64)> = None;
    for o in view.candidates(agent) {
        let v = *values
            .get(o)
            .ok_or_else(|| Error::usage(format!("missing value for option {o}")))?;
        if best.is_none_or(|(_, b)| v > b) {
            best = Some((o, v));
        }
    }
    best.map(|(o, _)| o)
        .ok_or_else(|| Error::config(format!("agent {agent} has no selectable option")))
}

/// Epsilon-greedy over the masked set. `values` is indexed by option id and
/// the entry for `agent` is ignored.
pub fn select_option<R: Rng + ?Sized>(values: &[f64], view: &OptionSetView, agent: usize, epsilon: f64, rng: &mut R) -> Result<usize> {
    let candidates = view.candidates(agent);
    if candidates.is_empty() {
        return Err(Error::config(format!("agent {agent} has no selectable option")));
    }
    let explore = if epsilon >= 1.0 {
        true
    } else if epsilon <= 0.0 {
        false
    } else {
        rng.gen::<f64>() < epsilon
    };
    if explore {
        return Ok(candidates[rng.gen_range(0..candidates.len())]);
    }
    greedy_option(values, view, agent)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum XiMode {
    /// `w -= lr * dbeta/dw * (A + xi)`.
    Margin,
    /// `w -= lr * dbeta/dw * A`, then `w += xi` elementwise.
    Additive,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum TerminationHead {
    /// Sigmoid network with one output per option, trained by plain SGD.
    Learned { net: Mlp, lr: f64, xi: f64, mode: XiMode },
    /// Constant probability for every input and option.
    Fixed(f64),
}

impl TerminationHead {
    pub fn learned<R: Rng + ?Sized>(input: usize, hidden: &[usize], options: usize, lr: f64, xi: f64, mode: XiMode, rng: &mut R) -> Result<Self> {
        let net = Mlp::new(&MlpSpec::new(input, hidden, options, Activation::Tanh, Head::Sigmoid), rng)?;
        Ok(Self::Learned { net, lr, xi, mode })
    }

    pub fn beta(&self, input: &[f64], option: usize) -> Result<f64> {
        match self {
            TerminationHead::Fixed(p) => Ok(*p),
            TerminationHead::Learned { net, .. } => net
                .predict(input)?
                .get(option)
                .copied()
                .ok_or_else(|| Error::usage(format!("termination head has no option {option}"))),
        }
    }

    pub fn betas(&self, input: &[f64], options: usize) -> Result<Vec<f64>> {
        match self {
            TerminationHead::Fixed(p) => Ok(vec![*p; options]),
            TerminationHead::Learned { net, .. } => net.predict(input),
        }
    }
}

/// Draws one uniform and terminates when it falls below beta.
pub fn maybe_terminate<R: Rng + ?Sized>(head: &TerminationHead, input: &[f64], option: usize, rng: &mut R) -> Result<bool> {
    let beta = head.beta(input, option)?;
    Ok(rng.gen::<f64>() < beta)
}

/// One termination-gradient step for `option` at `input`. Fixed heads are untouched.
pub fn termination_update(head: &mut TerminationHead, input: &[f64], option: usize, advantage: f64) -> Result<()> {
    let TerminationHead::Learned { net, lr, xi, mode } = head else {
        return Ok(());
    };
    let (lr, xi, mode) = (*lr, *xi, *mode);
    if option >= net.output_dim() {
        return Err(Error::usage(format!("termination head has no option {option}")));
    }
    let scale = match mode {
        XiMode::Margin => advantage + xi,
        XiMode::Additive => advantage,
    };
    if !scale.is_finite() {
        return Err(Error::numeric(format!("termination advantage is {advantage}")));
    }
    net.zero_grad();
    net.forward(input)?;
    let mut upstream = vec![0.0; net.output_dim()];
    upstream[option] = scale;
    net.backward_params(&upstream)?;
    for p in net.params_mut() {
        for (v, g) in p.values.iter_mut().zip(p.grad.iter_mut()) {
            *v -= lr * *g;
            if mode == XiMode::Additive {
                *v += xi;
            }
            *g = 0.0;
        }
    }
    Ok(())
}

/// Decaying imitation weight `f(t) = 0.5 + tanh(3 - mu t) / 2`, evaluated
/// as `sigmoid(2 mu (3/mu - t))` to stay exact at the midpoint and strictly
/// monotone in floating point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TransferSchedule {
    pub mu: f64,
    pub temperature: f64,
}

impl TransferSchedule {
    pub fn new(mu: f64, temperature: f64) -> Result<Self> {
        if !(mu > 0.0) || !mu.is_finite() {
            return Err(Error::config(format!("transfer decay mu must be positive, got {mu}")));
        }
        if !(temperature > 0.0) || !temperature.is_finite() {
            return Err(Error::config(format!("transfer temperature must be positive, got {temperature}")));
        }
        Ok(Self { mu, temperature })
    }

    /// `mu = 6 / total_updates`, so the weight halves at mid-training.
    pub fn for_total_updates(total_updates: u64, temperature: f64) -> Result<Self> {
        Self::new(6.0 / total_updates.max(1) as f64, temperature)
    }

    pub fn midpoint(&self) -> f64 {
        3.0 / self.mu
    }

    pub fn weight(&self, t: f64) -> f64 {
        sigmoid(2.0 * self.mu * (self.midpoint() - t))
    }
}

/// Cross-entropy `H(p || softmax(logits / T))` and its gradient w.r.t. the logits.
pub fn soft_cross_entropy(target: &[f64], logits: &[f64], temperature: f64) -> Result<(f64, Vec<f64>)> {
    if target.len() != logits.len() {
        return Err(Error::usage("transfer target and policy differ in action count"));
    }
    let q = softmax_temp(logits, temperature)?;
    let h = -target
        .iter()
        .zip(&q)
        .filter(|(p, _)| **p > 0.0)
        .map(|(p, qa)| p * qa.max(MIN_PROB).ln())
        .sum::<f64>();
    let grad = q.iter().zip(target).map(|(qa, p)| (qa - p) / temperature).collect();
    Ok((h, grad))
}

/// `H(p || q)` on probability vectors, clamping `q >= 1e-8`.
pub fn cross_entropy(p: &[f64], q: &[f64]) -> f64 {
    -p.iter()
        .zip(q)
        .filter(|(pa, _)| **pa > 0.0)
        .map(|(pa, qa)| pa * qa.max(MIN_PROB).ln())
        .sum::<f64>()
}

/// Frozen imitation target from the advising policy at the current observation.
pub fn transfer_target(advising: &PolicyNet, obs: &[f64], schedule: &TransferSchedule, t: f64) -> Result<TransferTarget> {
    let probs = softmax_temp(&advising.logits(obs)?, schedule.temperature)?;
    Ok(TransferTarget {
        probs,
        weight: schedule.weight(t),
        temperature: schedule.temperature,
    })
}

/// `f(t) * H(pi_advising || pi_agent)` at one observation, both tempered.
pub fn transfer_loss(advising: &PolicyNet, policy: &PolicyNet, obs: &[f64], schedule: &TransferSchedule, t: f64) -> Result<f64> {
    let target = transfer_target(advising, obs, schedule, t)?;
    let (h, _) = soft_cross_entropy(&target.probs, &policy.logits(obs)?, schedule.temperature)?;
    Ok(target.weight * h)
}

/// Call-and-return state of one agent's advice.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ActiveAdvice {
    pub option: Option<usize>,
    pub steps_held: u64,
    pub selections: u64,
    pub terminations: u64,
}

impl ActiveAdvice {
    pub fn clear(&mut self) {
        self.option = None;
        self.steps_held = 0;
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AdviceOutcome {
    pub option: usize,
    /// A termination sample was drawn and came up true.
    pub terminated: bool,
    pub reselected: bool,
}

/// Keeps the current option unless its termination fires; otherwise selects
/// a fresh one. `values` is only evaluated when a selection happens.
#[allow(clippy::too_many_arguments)]
pub fn advice_step<R, V>(
    agent: usize,
    advice: &mut ActiveAdvice,
    head: &TerminationHead,
    termination_input: &[f64],
    values: V,
    view: &OptionSetView,
    epsilon: f64,
    rng: &mut R,
) -> Result<AdviceOutcome>
where
    R: Rng + ?Sized,
    V: FnOnce() -> Result<Vec<f64>>,
{
    let mut terminated = false;
    if let Some(current) = advice.option {
        if !view.allowed(agent, current) {
            return Err(Error::usage(format!("agent {agent} holds disallowed option {current}")));
        }
        terminated = maybe_terminate(head, termination_input, current, rng)?;
        if !terminated {
            advice.steps_held += 1;
            return Ok(AdviceOutcome {
                option: current,
                terminated: false,
                reselected: false,
            });
        }
        advice.terminations += 1;
    }
    let option = select_option(&values()?, view, agent, epsilon, rng)?;
    advice.option = Some(option);
    advice.steps_held = 1;
    advice.selections += 1;
    Ok(AdviceOutcome {
        option,
        terminated,
        reselected: true,
    })
}
