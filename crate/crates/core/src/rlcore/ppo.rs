use log::warn;
use serde::{Deserialize, Serialize};

use super::nets::{PolicyNet, ValueNet};
use crate::nnkernel::{clip_grad_norm, softmax_unchecked, AdamState, Parameterized};
use crate::optioncore::soft_cross_entropy;
use crate::{Error, Result};

const MIN_OLD_PROB: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq)]
pub struct SegmentStep {
    pub obs: Vec<f64>,
    pub action: usize,
    pub reward: f64,
    pub old_log_prob: f64,
    pub old_probs: Vec<f64>,
}

/// On-policy rollout of one agent. A non-terminal segment carries the
/// observation that follows its last step for value bootstrapping.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrajectorySegment {
    pub steps: Vec<SegmentStep>,
    pub terminal: bool,
    pub bootstrap_obs: Option<Vec<f64>>,
}

impl TrajectorySegment {
    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    pub fn clear(&mut self) {
        self.steps.clear();
        self.terminal = false;
        self.bootstrap_obs = None;
    }
}

/// `G_t = gamma * (r_t + G_{t+1})` with `G_T = bootstrap`, so a reward is
/// discounted once for the step that produced it.
pub fn discounted_returns(rewards: &[f64], gamma: f64, bootstrap: f64) -> Vec<f64> {
    let mut out = vec![0.0; rewards.len()];
    let mut g = bootstrap;
    for t in (0..rewards.len()).rev() {
        g = gamma * (rewards[t] + g);
        out[t] = g;
    }
    out
}

pub fn segment_returns(segment: &TrajectorySegment, value: &ValueNet, gamma: f64) -> Result<Vec<f64>> {
    let bootstrap = match (&segment.bootstrap_obs, segment.terminal) {
        (Some(obs), false) => value.value(obs)?,
        _ => 0.0,
    };
    let rewards: Vec<f64> = segment.steps.iter().map(|s| s.reward).collect();
    Ok(discounted_returns(&rewards, gamma, bootstrap))
}

pub fn critic_loss(segment: &TrajectorySegment, value: &ValueNet, gamma: f64) -> Result<f64> {
    if segment.is_empty() {
        return Err(Error::usage("critic loss of an empty segment"));
    }
    let returns = segment_returns(segment, value, gamma)?;
    let mut loss = 0.0;
    for (s, g) in segment.steps.iter().zip(&returns) {
        let v = value.value(&s.obs)?;
        loss += (g - v).powi(2);
    }
    Ok(loss)
}

/// Accumulates gradients of `sum (G_t - V(o_t))^2` for fixed returns.
pub fn critic_backward(segment: &TrajectorySegment, value: &mut ValueNet, returns: &[f64]) -> Result<f64> {
    if returns.len() != segment.len() {
        return Err(Error::usage("returns and segment differ in length"));
    }
    let mut loss = 0.0;
    for (s, g) in segment.steps.iter().zip(returns) {
        let v = value.mlp_mut().forward(&s.obs)?[0];
        loss += (g - v).powi(2);
        value.mlp_mut().backward_params(&[2.0 * (v - g)])?;
    }
    Ok(loss)
}

pub fn advantages(segment: &TrajectorySegment, value: &ValueNet, returns: &[f64], normalize: bool) -> Result<Vec<f64>> {
    let mut adv = Vec::with_capacity(segment.len());
    for (s, g) in segment.steps.iter().zip(returns) {
        adv.push(g - value.value(&s.obs)?);
    }
    if normalize && adv.len() > 1 {
        let n = adv.len() as f64;
        let mean = adv.iter().sum::<f64>() / n;
        let var = adv.iter().map(|a| (a - mean).powi(2)).sum::<f64>() / n;
        let sd = var.sqrt().max(1e-8);
        adv.iter_mut().for_each(|a| *a = (*a - mean) / sd);
    }
    Ok(adv)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ActorObjective {
    /// `-ratio * A + kl_coef * KL[old || new]`.
    KlPenalty,
    /// Clipped surrogate; `kl_coef` still applies on top.
    Clipped { epsilon: f64 },
}

/// Imitation target for one step: `weight * H(probs || softmax(z / temperature))`.
#[derive(Debug, Clone, PartialEq)]
pub struct TransferTarget {
    pub probs: Vec<f64>,
    pub weight: f64,
    pub temperature: f64,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize)]
pub struct ActorLoss {
    pub total: f64,
    pub surrogate: f64,
    pub kl: f64,
    pub transfer: f64,
}

struct StepTerms {
    surrogate: f64,
    kl: f64,
    transfer: f64,
    grad: Vec<f64>,
}

fn step_terms(
    logits: &[f64],
    step: &SegmentStep,
    adv: f64,
    kl_coef: f64,
    objective: ActorObjective,
    transfer: Option<&TransferTarget>,
    penalty_scale: f64,
) -> Result<StepTerms> {
    let probs = softmax_unchecked(logits, 1.0);
    let a = step.action;
    if a >= probs.len() || step.old_probs.len() != probs.len() {
        return Err(Error::usage("segment step does not match the policy's action set"));
    }
    let mut old = step.old_probs[a];
    if !(old >= MIN_OLD_PROB) {
        warn!("old action probability {old:e} clamped to {MIN_OLD_PROB:e}");
        old = MIN_OLD_PROB;
    }
    let ratio = probs[a] / old;
    let mut grad = vec![0.0; probs.len()];
    let surrogate = match objective {
        ActorObjective::KlPenalty => {
            for (j, g) in grad.iter_mut().enumerate() {
                let onehot = if j == a { 1.0 } else { 0.0 };
                *g = -adv * ratio * (onehot - probs[j]);
            }
            -ratio * adv
        }
        ActorObjective::Clipped { epsilon } => {
            let unclipped = ratio * adv;
            let clipped = ratio.clamp(1.0 - epsilon, 1.0 + epsilon) * adv;
            if unclipped <= clipped {
                for (j, g) in grad.iter_mut().enumerate() {
                    let onehot = if j == a { 1.0 } else { 0.0 };
                    *g = -adv * ratio * (onehot - probs[j]);
                }
            }
            -unclipped.min(clipped)
        }
    };
    let mut kl = 0.0;
    for (j, (&p_old, &p)) in step.old_probs.iter().zip(&probs).enumerate() {
        if p_old > 0.0 {
            kl += p_old * (p_old.ln() - p.max(f64::MIN_POSITIVE).ln());
        }
        grad[j] += penalty_scale * kl_coef * (p - p_old);
    }
    let mut transfer_value = 0.0;
    if let Some(tr) = transfer {
        let (h, g) = soft_cross_entropy(&tr.probs, logits, tr.temperature)?;
        transfer_value = tr.weight * h;
        for (dst, gj) in grad.iter_mut().zip(g) {
            *dst += penalty_scale * tr.weight * gj;
        }
    }
    Ok(StepTerms {
        surrogate,
        kl: penalty_scale * kl,
        transfer: penalty_scale * transfer_value,
        grad,
    })
}

fn transfer_at(transfer: &[Option<TransferTarget>], t: usize) -> Option<&TransferTarget> {
    transfer.get(t).and_then(Option::as_ref)
}

fn check_transfer(segment: &TrajectorySegment, transfer: &[Option<TransferTarget>]) -> Result<()> {
    if !transfer.is_empty() && transfer.len() != segment.len() {
        return Err(Error::usage("transfer targets must be empty or one per segment step"));
    }
    Ok(())
}

fn finish(mut acc: ActorLoss, kl_coef: f64) -> ActorLoss {
    acc.total = acc.surrogate + kl_coef * acc.kl + acc.transfer;
    acc
}

/// `-sum_t ratio_t * A_t + kl_coef * KL[old || new] + L_tr`, where the KL
/// and transfer terms are averages over the segment's observations.
pub fn actor_loss(
    segment: &TrajectorySegment,
    policy: &PolicyNet,
    advantages: &[f64],
    kl_coef: f64,
    objective: ActorObjective,
    transfer: &[Option<TransferTarget>],
) -> Result<ActorLoss> {
    check_transfer(segment, transfer)?;
    let scale = 1.0 / segment.len().max(1) as f64;
    let mut acc = ActorLoss::default();
    for (t, (s, &adv)) in segment.steps.iter().zip(advantages).enumerate() {
        let logits = policy.logits(&s.obs)?;
        let terms = step_terms(&logits, s, adv, kl_coef, objective, transfer_at(transfer, t), scale)?;
        acc.surrogate += terms.surrogate;
        acc.kl += terms.kl;
        acc.transfer += terms.transfer;
    }
    Ok(finish(acc, kl_coef))
}

/// Same value as [`actor_loss`], accumulating parameter gradients.
pub fn actor_backward(
    segment: &TrajectorySegment,
    policy: &mut PolicyNet,
    advantages: &[f64],
    kl_coef: f64,
    objective: ActorObjective,
    transfer: &[Option<TransferTarget>],
) -> Result<ActorLoss> {
    check_transfer(segment, transfer)?;
    let scale = 1.0 / segment.len().max(1) as f64;
    let mut acc = ActorLoss::default();
    for (t, (s, &adv)) in segment.steps.iter().zip(advantages).enumerate() {
        let logits = policy.mlp_mut().forward(&s.obs)?.to_vec();
        let terms = step_terms(&logits, s, adv, kl_coef, objective, transfer_at(transfer, t), scale)?;
        policy.mlp_mut().backward_params(&terms.grad)?;
        acc.surrogate += terms.surrogate;
        acc.kl += terms.kl;
        acc.transfer += terms.transfer;
    }
    Ok(finish(acc, kl_coef))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PpoConfig {
    pub actor_lr: f64,
    pub critic_lr: f64,
    pub gamma: f64,
    pub kl_coef: f64,
    pub objective: ActorObjective,
    pub normalize_advantages: bool,
    pub max_grad_norm: Option<f64>,
    pub epochs: usize,
}

impl Default for PpoConfig {
    fn default() -> Self {
        Self {
            actor_lr: 3e-4,
            critic_lr: 3e-4,
            gamma: 0.99,
            kl_coef: 0.2,
            objective: ActorObjective::KlPenalty,
            normalize_advantages: false,
            max_grad_norm: None,
            epochs: 1,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize)]
pub struct UpdateReport {
    pub critic_loss: f64,
    pub actor: ActorLoss,
    pub steps: usize,
}

/// Actor, critic and their optimizers. Several agents may share one learner.
#[derive(Debug, Clone)]
pub struct Learner {
    pub policy: PolicyNet,
    pub value: ValueNet,
    pub config: PpoConfig,
    actor_opt: AdamState,
    critic_opt: AdamState,
    updates: u64,
}

impl Learner {
    pub fn new(mut policy: PolicyNet, mut value: ValueNet, config: PpoConfig) -> Self {
        let actor_opt = AdamState::new(&policy.params_mut(), config.actor_lr);
        let critic_opt = AdamState::new(&value.params_mut(), config.critic_lr);
        Self {
            policy,
            value,
            config,
            actor_opt,
            critic_opt,
            updates: 0,
        }
    }

    /// Completed actor updates.
    pub fn updates(&self) -> u64 {
        self.updates
    }

    /// One optimizer step per epoch on each network, over every segment in
    /// `batch`. Each entry pairs a segment with its per-step transfer
    /// targets (an empty slice disables transfer for that segment).
    pub fn update(&mut self, batch: &[(&TrajectorySegment, &[Option<TransferTarget>])]) -> Result<UpdateReport> {
        let batch: Vec<_> = batch.iter().filter(|(s, _)| !s.is_empty()).collect();
        if batch.is_empty() {
            return Err(Error::usage("ppo update without any steps"));
        }
        let mut prepared = Vec::with_capacity(batch.len());
        for (segment, transfer) in &batch {
            check_transfer(segment, transfer)?;
            let returns = segment_returns(segment, &self.value, self.config.gamma)?;
            let adv = advantages(segment, &self.value, &returns, self.config.normalize_advantages)?;
            prepared.push((returns, adv));
        }
        let mut report = UpdateReport {
            steps: batch.iter().map(|(s, _)| s.len()).sum(),
            ..UpdateReport::default()
        };
        for _ in 0..self.config.epochs.max(1) {
            let mut critic = 0.0;
            for ((segment, _), (returns, _)) in batch.iter().zip(&prepared) {
                critic += critic_backward(segment, &mut self.value, returns)?;
            }
            {
                let mut params = self.value.params_mut();
                if let Some(max) = self.config.max_grad_norm {
                    clip_grad_norm(&mut params, max);
                }
                self.critic_opt.step(&mut params)?;
            }
            let mut actor = ActorLoss::default();
            for ((segment, transfer), (_, adv)) in batch.iter().zip(&prepared) {
                let part = actor_backward(
                    segment,
                    &mut self.policy,
                    adv,
                    self.config.kl_coef,
                    self.config.objective,
                    transfer,
                )?;
                actor.total += part.total;
                actor.surrogate += part.surrogate;
                actor.kl += part.kl;
                actor.transfer += part.transfer;
            }
            {
                let mut params = self.policy.params_mut();
                if let Some(max) = self.config.max_grad_norm {
                    clip_grad_norm(&mut params, max);
                }
                self.actor_opt.step(&mut params)?;
            }
            report.critic_loss = critic;
            report.actor = actor;
        }
        self.updates += 1;
        Ok(report)
    }
}

#[cfg(test)]
mod tests {
    use super::super::nets::act;
    use super::*;
    use crate::nnkernel::{grad_check, Activation, Head, Mlp, MlpSpec};
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn step(obs: Vec<f64>, action: usize, reward: f64, old_probs: Vec<f64>) -> SegmentStep {
        SegmentStep {
            obs,
            action,
            reward,
            old_log_prob: old_probs[action].ln(),
            old_probs,
        }
    }

    fn zero_value(dim: usize) -> ValueNet {
        ValueNet::from_mlp(Mlp::zeros(&MlpSpec::new(dim, &[], 1, Activation::Tanh, Head::Linear)).unwrap()).unwrap()
    }

    fn bias_policy(bias: &[f64], dim: usize) -> PolicyNet {
        let mut net = Mlp::zeros(&MlpSpec::new(dim, &[], bias.len(), Activation::Tanh, Head::Linear)).unwrap();
        net.bias_mut(0).values.copy_from_slice(bias);
        PolicyNet::from_mlp(net).unwrap()
    }

    fn random_segment(rng: &mut ChaCha8Rng, policy: &PolicyNet, len: usize, dim: usize) -> TrajectorySegment {
        let mut seg = TrajectorySegment::default();
        for _ in 0..len {
            let obs: Vec<f64> = (0..dim).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let s = act(policy, &obs, rng).unwrap();
            // Perturb the snapshot so ratio and KL are non-trivial.
            let mut old: Vec<f64> = s.probs.iter().map(|p| p * rng.gen_range(0.5..1.5)).collect();
            let total: f64 = old.iter().sum();
            old.iter_mut().for_each(|p| *p /= total);
            seg.steps.push(step(obs, s.action, rng.gen_range(-1.0..1.0), old));
        }
        seg.terminal = rng.gen_bool(0.5);
        seg.bootstrap_obs = Some((0..dim).map(|_| rng.gen_range(-1.0..1.0)).collect());
        seg
    }

    #[test]
    fn returns_discount_each_reward_once() {
        let g = discounted_returns(&[1.0, 0.0, 2.0], 0.5, 4.0);
        assert_eq!(g, vec![0.5 * (1.0 + 0.5 * (0.0 + 0.5 * (2.0 + 4.0))), 0.5 * (0.5 * (2.0 + 4.0)), 0.5 * (2.0 + 4.0)]);
    }

    #[test]
    fn critic_loss_is_zero_without_rewards() {
        let seg = TrajectorySegment {
            steps: vec![step(vec![1.0, 0.0], 0, 0.0, vec![0.5, 0.5]); 4],
            terminal: false,
            bootstrap_obs: Some(vec![0.0, 1.0]),
        };
        assert_eq!(critic_loss(&seg, &zero_value(2), 0.9).unwrap(), 0.0);
    }

    #[test]
    fn critic_loss_single_reward() {
        let seg = TrajectorySegment {
            steps: vec![step(vec![1.0], 0, 1.0, vec![1.0])],
            terminal: true,
            bootstrap_obs: None,
        };
        assert!((critic_loss(&seg, &zero_value(1), 0.9).unwrap() - 0.81).abs() < 1e-12);
    }

    #[test]
    fn exact_value_function_has_zero_critic_loss() {
        // Deterministic 3-state chain 0 -> 1 -> 2 -> end with reward 1 on the last step.
        let gamma: f64 = 0.9;
        let v = [gamma.powi(3), gamma.powi(2), gamma];
        let mut net = Mlp::zeros(&MlpSpec::new(3, &[], 1, Activation::Tanh, Head::Linear)).unwrap();
        net.weight_mut(0).values.copy_from_slice(&v);
        let value = ValueNet::from_mlp(net).unwrap();
        let onehot = |i: usize| (0..3).map(|j| if i == j { 1.0 } else { 0.0 }).collect::<Vec<_>>();
        let seg = TrajectorySegment {
            steps: (0..3).map(|s| step(onehot(s), 0, if s == 2 { 1.0 } else { 0.0 }, vec![1.0])).collect(),
            terminal: true,
            bootstrap_obs: None,
        };
        assert!(critic_loss(&seg, &value, gamma).unwrap() < 1e-10);
        let partial = TrajectorySegment {
            steps: seg.steps[..2].to_vec(),
            terminal: false,
            bootstrap_obs: Some(onehot(2)),
        };
        assert!(critic_loss(&partial, &value, gamma).unwrap() < 1e-10);
    }

    #[test]
    fn identical_policies_give_negative_advantage_sum() {
        let policy = bias_policy(&[0.3, -0.2, 0.1], 2);
        let probs = policy.probs(&[0.0, 0.0]).unwrap();
        let seg = TrajectorySegment {
            steps: (0..3).map(|a| step(vec![0.0, 0.0], a, 0.0, probs.clone())).collect(),
            ..Default::default()
        };
        let adv = [0.5, -2.0, 1.25];
        let l = actor_loss(&seg, &policy, &adv, 0.2, ActorObjective::KlPenalty, &[]).unwrap();
        assert!((l.total - (-adv.iter().sum::<f64>())).abs() < 1e-12);
        assert!(l.kl.abs() < 1e-15);
        let zero = actor_loss(&seg, &policy, &[0.0; 3], 0.2, ActorObjective::KlPenalty, &[]).unwrap();
        assert!(zero.total.abs() < 1e-15);
    }

    #[test]
    fn two_action_hand_evaluation() {
        let policy = bias_policy(&[0.0, (3.0f64).ln()], 1);
        let seg = TrajectorySegment {
            steps: vec![step(vec![0.0], 1, 0.0, vec![0.5, 0.5])],
            ..Default::default()
        };
        let l = actor_loss(&seg, &policy, &[2.0], 0.2, ActorObjective::KlPenalty, &[]).unwrap();
        // pi = (0.25, 0.75), ratio 1.5, KL = 0.5 ln(2) + 0.5 ln(2/3).
        let kl = 0.5 * (0.5f64 / 0.25).ln() + 0.5 * (0.5f64 / 0.75).ln();
        assert!((l.surrogate - -3.0).abs() < 1e-12);
        assert!((l.kl - kl).abs() < 1e-12);
        assert!((l.total - (-3.0 + 0.2 * kl)).abs() < 1e-12);
    }

    #[test]
    fn underflowed_old_probability_is_clamped() {
        let policy = bias_policy(&[0.0, 0.0], 1);
        let seg = TrajectorySegment {
            steps: vec![step(vec![0.0], 1, 0.0, vec![1.0, 0.0])],
            ..Default::default()
        };
        let l = actor_loss(&seg, &policy, &[1.0], 0.0, ActorObjective::KlPenalty, &[]).unwrap();
        assert!(l.total.is_finite());
        assert!((l.surrogate - -0.5 / 1e-8).abs() < 1e-3);
    }

    #[test]
    fn actor_and_critic_gradients_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for case in 0..100 {
            let dim = 3;
            let mut policy = PolicyNet::new(dim, &[5], 3, Activation::Tanh, &mut rng).unwrap();
            let seg = random_segment(&mut rng, &policy, 4, dim);
            let adv: Vec<f64> = (0..4).map(|_| rng.gen_range(-2.0..2.0)).collect();
            let transfer: Vec<Option<TransferTarget>> = (0..4)
                .map(|t| {
                    (t % 2 == 0).then(|| {
                        let mut p: Vec<f64> = (0..3).map(|_| rng.gen_range(0.05..1.0)).collect();
                        let s: f64 = p.iter().sum();
                        p.iter_mut().for_each(|x| *x /= s);
                        TransferTarget { probs: p, weight: rng.gen_range(0.0..1.0), temperature: rng.gen_range(0.5..2.0) }
                    })
                })
                .collect();
            let err = grad_check(
                &mut policy,
                |p: &mut PolicyNet| p.params_mut(),
                |p: &mut PolicyNet, with_grad| {
                    if with_grad {
                        actor_backward(&seg, p, &adv, 0.2, ActorObjective::KlPenalty, &transfer).unwrap().total
                    } else {
                        actor_loss(&seg, p, &adv, 0.2, ActorObjective::KlPenalty, &transfer).unwrap().total
                    }
                },
            );
            assert!(err < 1e-4, "actor case {case}: {err}");

            let mut value = ValueNet::new(dim, &[4], Activation::Tanh, &mut rng).unwrap();
            let returns = segment_returns(&seg, &value, 0.9).unwrap();
            let err = grad_check(
                &mut value,
                |v: &mut ValueNet| v.params_mut(),
                |v: &mut ValueNet, with_grad| {
                    if with_grad {
                        critic_backward(&seg, v, &returns).unwrap()
                    } else {
                        seg.steps.iter().zip(&returns).map(|(s, g)| (g - v.value(&s.obs).unwrap()).powi(2)).sum()
                    }
                },
            );
            assert!(err < 1e-4, "critic case {case}: {err}");
        }
    }

    fn learner(seed: u64) -> Learner {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let policy = PolicyNet::new(3, &[6], 3, Activation::Tanh, &mut rng).unwrap();
        let value = ValueNet::new(3, &[6], Activation::Tanh, &mut rng).unwrap();
        Learner::new(policy, value, PpoConfig::default())
    }

    #[test]
    fn zero_weight_transfer_is_bitwise_plain_update() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let mut plain = learner(1);
        let mut with = learner(1);
        for _ in 0..20 {
            let seg = random_segment(&mut rng, &plain.policy, 8, 3);
            let targets: Vec<_> = (0..8)
                .map(|_| Some(TransferTarget { probs: vec![0.2, 0.3, 0.5], weight: 0.0, temperature: 1.0 }))
                .collect();
            plain.update(&[(&seg, &[])]).unwrap();
            with.update(&[(&seg, &targets)]).unwrap();
        }
        assert_eq!(plain.policy, with.policy);
        assert_eq!(plain.value, with.value);
    }

    #[test]
    fn self_matching_transfer_has_zero_gradient() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let mut policy = PolicyNet::new(3, &[4], 3, Activation::Tanh, &mut rng).unwrap();
        let seg = random_segment(&mut rng, &policy, 5, 3);
        let targets: Vec<_> = seg
            .steps
            .iter()
            .map(|s| Some(TransferTarget { probs: policy.probs(&s.obs).unwrap(), weight: 1.0, temperature: 1.0 }))
            .collect();
        policy.zero_grad();
        actor_backward(&seg, &mut policy, &[0.0; 5], 0.0, ActorObjective::KlPenalty, &targets).unwrap();
        let grads: Vec<f64> = policy.params_mut().iter().flat_map(|p| p.grad.clone()).collect();
        // Only the ratio term could contribute and its advantages are zero.
        assert!(grads.iter().all(|g| g.abs() < 1e-12), "{grads:?}");
    }

    #[test]
    fn zero_learning_rate_leaves_parameters_unchanged() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let mut l = learner(2);
        l = Learner::new(l.policy.clone(), l.value.clone(), PpoConfig { actor_lr: 0.0, critic_lr: 0.0, ..PpoConfig::default() });
        let before = (l.policy.clone(), l.value.clone());
        let seg = random_segment(&mut rng, &l.policy, 8, 3);
        l.update(&[(&seg, &[])]).unwrap();
        assert_eq!((l.policy.clone(), l.value.clone()), before);
        assert_eq!(l.updates(), 1);
    }

    #[test]
    fn non_finite_reward_surfaces_numeric_error() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let mut l = learner(3);
        let mut seg = random_segment(&mut rng, &l.policy, 4, 3);
        seg.steps[0].reward = f64::NAN;
        assert!(matches!(l.update(&[(&seg, &[])]), Err(Error::Numeric(_))));
    }

    #[test]
    fn clipped_objective_zeroes_gradient_outside_the_trust_region() {
        let policy = bias_policy(&[0.0, (3.0f64).ln()], 1);
        let s = step(vec![0.0], 1, 0.0, vec![0.5, 0.5]);
        let t = step_terms(&policy.logits(&[0.0]).unwrap(), &s, 1.0, 0.0, ActorObjective::Clipped { epsilon: 0.2 }, None, 1.0).unwrap();
        assert!((t.surrogate - -1.2).abs() < 1e-12);
        assert!(t.grad.iter().all(|g| *g == 0.0));
    }

    /// Five one-hot states visited in a cycle; each state has its own rewarded action.
    #[test]
    fn ppo_learns_a_five_state_chain() {
        let mut finals = Vec::new();
        for seed in 0..5u64 {
            let mut rng = ChaCha8Rng::seed_from_u64(100 + seed);
            let policy = PolicyNet::new(5, &[16], 3, Activation::Tanh, &mut rng).unwrap();
            let value = ValueNet::new(5, &[16], Activation::Tanh, &mut rng).unwrap();
            let cfg = PpoConfig { actor_lr: 3e-3, critic_lr: 3e-3, gamma: 0.9, ..PpoConfig::default() };
            let mut l = Learner::new(policy, value, cfg);
            let onehot = |i: usize| (0..5).map(|j| if i == j { 1.0 } else { 0.0 }).collect::<Vec<_>>();
            let best = |s: usize| s % 3;
            let optimal_mass = |l: &Learner| (0..5).map(|s| l.policy.probs(&onehot(s)).unwrap()[best(s)]).sum::<f64>() / 5.0;
            let mut state = 0;
            for _ in 0..2000 {
                let mut seg = TrajectorySegment::default();
                for _ in 0..32 {
                    let obs = onehot(state);
                    let a = act(&l.policy, &obs, &mut rng).unwrap();
                    let r = if a.action == best(state) { 1.0 } else { 0.0 };
                    seg.steps.push(SegmentStep { obs, action: a.action, reward: r, old_log_prob: a.log_prob, old_probs: a.probs });
                    state = (state + 1) % 5;
                }
                seg.bootstrap_obs = Some(onehot(state));
                l.update(&[(&seg, &[])]).unwrap();
                if optimal_mass(&l) >= 0.95 {
                    break;
                }
            }
            finals.push(optimal_mass(&l));
        }
        finals.sort_by(|a, b| a.partial_cmp(b).unwrap());
        assert!(finals[2] >= 0.95, "{finals:?}");
    }

    proptest! {
        #[test]
        fn kl_is_non_negative(logits in proptest::collection::vec(-4.0f64..4.0, 3), old in proptest::collection::vec(0.01f64..1.0, 3)) {
            let total: f64 = old.iter().sum();
            let old: Vec<f64> = old.iter().map(|p| p / total).collect();
            let mut net = Mlp::zeros(&MlpSpec::new(1, &[], 3, Activation::Tanh, Head::Linear)).unwrap();
            net.bias_mut(0).values.copy_from_slice(&logits);
            let policy = PolicyNet::from_mlp(net).unwrap();
            let seg = TrajectorySegment { steps: vec![step(vec![0.0], 0, 0.0, old)], ..Default::default() };
            let l = actor_loss(&seg, &policy, &[0.0], 1.0, ActorObjective::KlPenalty, &[]).unwrap();
            prop_assert!(l.kl >= -1e-15);
        }
    }
}
