//! The training loop and its on-disk outputs.
//!
//! A run directory holds `config.cfg` (canonical config), `metrics.ndjson`
//! (one `episode` record per finished episode and one `update` record per
//! logging window), `params.json` (final learner parameters),
//! `summary.json`, and `trace.ndjson` when tracing is on. A failed run
//! leaves `error.json` instead of `summary.json`.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::config::RunConfig;
use crate::advisors::{AdvisorKind, GlobalTransition, Goa, JointAdvice, LocalAdvisor, LocalTransition, Loa, Sro};
use crate::envs::{self, MultiAgentEnv, StepResult};
use crate::nnkernel::Activation;
use crate::optioncore::{advice_step, transfer_target, ActiveAdvice, OptionSetView, PolicyBank, TransferSchedule};
use crate::rlcore::{act, Learner, PolicyNet, SegmentStep, TrajectorySegment, TransferTarget, UpdateReport, ValueNet};
use crate::{Error, Result};

pub const METRICS_FILE: &str = "metrics.ndjson";
pub const TRACE_FILE: &str = "trace.ndjson";
pub const SUMMARY_FILE: &str = "summary.json";
pub const PARAMS_FILE: &str = "params.json";
pub const CONFIG_FILE: &str = "config.cfg";
pub const ERROR_FILE: &str = "error.json";
/// Episodes averaged for the headline numbers in `summary.json`.
pub const SUMMARY_WINDOW: usize = 100;

// Independent random streams, so changing one consumer leaves the others intact.
const STREAM_ENV: u64 = 1;
const STREAM_LEARNERS: u64 = 2;
const STREAM_ADVISOR_INIT: u64 = 3;
const STREAM_ACT: u64 = 4;
const STREAM_ADVICE: u64 = 5;

fn stream(seed: u64, id: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(id);
    rng
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EpisodeRecord {
    pub kind: &'static str,
    pub episode: u64,
    /// Global step count when the episode ended.
    pub step: u64,
    pub length: usize,
    pub returns: Vec<f64>,
    pub team_return: f64,
    pub catches: u32,
    pub collisions: u32,
    pub landmark_distance: f64,
    pub option_switches: u64,
    /// `advice[i][j]`: steps on which agent `i` was advised by agent `j`.
    pub advice: Vec<Vec<u64>>,
    pub transfer_weight: f64,
    pub epsilon: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct UpdateRecord {
    pub kind: &'static str,
    pub update: u64,
    pub step: u64,
    pub critic_loss: f64,
    pub surrogate: f64,
    pub kl: f64,
    pub transfer: f64,
    pub transfer_weight: f64,
    pub advisor_updates: u64,
    pub advisor_value: f64,
    pub advisor_reconstruction: f64,
    pub advisor_reward: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "event", rename_all = "snake_case")]
pub enum TraceEvent {
    /// Advice in force for one agent at one step. `terminated` is `None`
    /// when no option was held, i.e. no termination sample was drawn.
    Advice {
        step: u64,
        agent: usize,
        option: usize,
        terminated: Option<bool>,
        reselected: bool,
    },
    ActorUpdate { step: u64, learner: usize, update: u64 },
    TargetSync { step: u64, advisor_update: u64 },
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunSummary {
    pub scenario: String,
    pub advisor: String,
    pub seed: u64,
    pub steps: u64,
    pub episodes: u64,
    pub actor_updates: u64,
    pub advisor_updates: u64,
    pub target_syncs: u64,
    pub final_team_return: f64,
    pub final_landmark_distance: f64,
    pub final_collisions: f64,
}

#[derive(Serialize)]
struct LearnerParams<'a> {
    policy: &'a PolicyNet,
    value: &'a ValueNet,
}

#[derive(Serialize)]
struct Params<'a> {
    agent_learner: &'a [usize],
    learners: Vec<LearnerParams<'a>>,
}

/// Live view of every agent's policy, indexed by agent id.
pub struct AgentPolicies<'a> {
    pub learners: &'a [Learner],
    pub agent_learner: &'a [usize],
}

impl PolicyBank for AgentPolicies<'_> {
    fn num_policies(&self) -> usize {
        self.agent_learner.len()
    }

    fn probs(&self, option: usize, obs: &[f64]) -> Result<Vec<f64>> {
        let l = *self
            .agent_learner
            .get(option)
            .ok_or_else(|| Error::usage(format!("option {option} names no agent")))?;
        self.learners[l].policy.probs(obs)
    }
}

enum Advisor {
    None,
    Goa(Box<Goa>, JointAdvice),
    Loa(Box<Loa>, Vec<ActiveAdvice>),
    Sro(Box<Sro>, Vec<ActiveAdvice>),
}

impl Advisor {
    fn buffer_len(&self) -> usize {
        match self {
            Advisor::None => 0,
            Advisor::Goa(g, _) => g.buffer().len(),
            Advisor::Loa(l, _) => l.buffer().len(),
            Advisor::Sro(s, _) => s.buffer().len(),
        }
    }

    fn syncs(&self, agents: usize) -> Vec<u64> {
        match self {
            Advisor::None => Vec::new(),
            Advisor::Goa(g, _) => g.syncs().to_vec(),
            Advisor::Sro(s, _) => s.syncs().to_vec(),
            Advisor::Loa(l, _) => {
                let mut seen = Vec::new();
                let mut out = Vec::new();
                for a in 0..agents {
                    let k = l.module_index(a);
                    if !seen.contains(&k) {
                        seen.push(k);
                        out.extend_from_slice(l.module(a).syncs());
                    }
                }
                out
            }
        }
    }

    fn clear_advice(&mut self) {
        match self {
            Advisor::None => {}
            Advisor::Goa(_, j) => {
                j.joint = None;
                j.options.clear();
                j.steps_held = 0;
            }
            Advisor::Loa(_, a) | Advisor::Sro(_, a) => a.iter_mut().for_each(ActiveAdvice::clear),
        }
    }
}

/// Per-agent advice chosen for one step.
struct StepAdvice {
    options: Vec<Option<usize>>,
    switches: u64,
    joint: Option<usize>,
}

fn local_advice<A: LocalAdvisor>(
    adv: &A,
    state: &mut [ActiveAdvice],
    observations: &[Vec<f64>],
    view: &OptionSetView,
    epsilon: f64,
    step: u64,
    rng: &mut ChaCha8Rng,
    trace: &mut Option<Vec<TraceEvent>>,
) -> Result<StepAdvice> {
    let mut out = StepAdvice {
        options: Vec::with_capacity(state.len()),
        switches: 0,
        joint: None,
    };
    for (agent, advice) in state.iter_mut().enumerate() {
        let obs = &observations[agent];
        let held = advice.option.is_some();
        let input = adv.termination_input(agent, obs)?;
        let outcome = advice_step(agent, advice, adv.head(agent), &input, || adv.option_values(agent, obs), view, epsilon, rng)?;
        if outcome.terminated {
            out.switches += 1;
        }
        if let Some(t) = trace {
            t.push(TraceEvent::Advice {
                step,
                agent,
                option: outcome.option,
                terminated: held.then_some(outcome.terminated),
                reselected: outcome.reselected,
            });
        }
        out.options.push(Some(outcome.option));
    }
    Ok(out)
}

struct Sinks {
    metrics: BufWriter<File>,
    trace: Option<BufWriter<File>>,
}

fn write_line<T: Serialize>(w: &mut impl Write, record: &T) -> Result<()> {
    serde_json::to_writer(&mut *w, record)?;
    w.write_all(b"\n")?;
    Ok(())
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    std::fs::write(path, text)?;
    Ok(())
}

/// Runs one training job into `out`, writing `error.json` if it fails.
pub fn run(cfg: &RunConfig, out: &Path) -> Result<RunSummary> {
    std::fs::create_dir_all(out)?;
    let _ = std::fs::remove_file(out.join(ERROR_FILE));
    let result = run_inner(cfg, out);
    if let Err(e) = &result {
        let _ = write_json(&out.join(ERROR_FILE), &e.record());
    }
    result
}

fn run_inner(cfg: &RunConfig, out: &Path) -> Result<RunSummary> {
    cfg.validate()?;
    std::fs::write(out.join(CONFIG_FILE), cfg.to_canonical())?;
    let mut sinks = Sinks {
        metrics: BufWriter::new(File::create(out.join(METRICS_FILE))?),
        trace: if cfg.trace {
            Some(BufWriter::new(File::create(out.join(TRACE_FILE))?))
        } else {
            let _ = std::fs::remove_file(out.join(TRACE_FILE));
            None
        },
    };
    let mut trainer = Trainer::new(cfg)?;
    trainer.train(&mut sinks)?;
    sinks.metrics.flush()?;
    if let Some(t) = sinks.trace.as_mut() {
        t.flush()?;
    }
    let params = Params {
        agent_learner: &trainer.agent_learner,
        learners: trainer
            .learners
            .iter()
            .map(|l| LearnerParams {
                policy: &l.policy,
                value: &l.value,
            })
            .collect(),
    };
    write_json(&out.join(PARAMS_FILE), &params)?;
    let summary = trainer.summary();
    write_json(&out.join(SUMMARY_FILE), &summary)?;
    Ok(summary)
}

struct Trainer<'c> {
    cfg: &'c RunConfig,
    env: Box<dyn MultiAgentEnv>,
    learners: Vec<Learner>,
    agent_learner: Vec<usize>,
    advisor: Advisor,
    view: Option<OptionSetView>,
    schedule: TransferSchedule,
    act_rng: ChaCha8Rng,
    advice_rng: ChaCha8Rng,
    step: u64,
    episodes: u64,
    advisor_updates: u64,
    actor_updates: u64,
    logged_syncs: usize,
    recent: Vec<EpisodeRecord>,
}

/// Running totals for the current episode.
struct EpisodeAcc {
    length: usize,
    returns: Vec<f64>,
    catches: u32,
    collisions: u32,
    distance_sum: f64,
    switches: u64,
    advice: Vec<Vec<u64>>,
}

impl EpisodeAcc {
    fn new(agents: usize) -> Self {
        Self {
            length: 0,
            returns: vec![0.0; agents],
            catches: 0,
            collisions: 0,
            distance_sum: 0.0,
            switches: 0,
            advice: vec![vec![0; agents]; agents],
        }
    }
}

/// Accumulates update-record averages between log lines.
#[derive(Default)]
struct UpdateAcc {
    count: u64,
    critic: f64,
    surrogate: f64,
    kl: f64,
    transfer: f64,
    adv_count: u64,
    adv_value: f64,
    adv_recon: f64,
    adv_reward: f64,
}

impl<'c> Trainer<'c> {
    fn new(cfg: &'c RunConfig) -> Result<Self> {
        let env = envs::build(&cfg.env_config(), stream(cfg.seed, STREAM_ENV).gen_seed())?;
        let spec = env.spec().clone();
        let n = spec.num_agents;
        let homogeneous = spec.obs_dims.iter().all(|&d| d == spec.obs_dims[0]) && spec.num_actions.iter().all(|&a| a == spec.num_actions[0]);
        if (cfg.share_params || cfg.advisor != AdvisorKind::None) && !homogeneous {
            return Err(Error::config("parameter sharing and option advice need identical observation and action spaces"));
        }
        let agent_learner: Vec<usize> = if cfg.share_params { vec![0; n] } else { (0..n).collect() };
        let mut init = stream(cfg.seed, STREAM_LEARNERS);
        let learner_count = if cfg.share_params { 1 } else { n };
        let mut learners = Vec::with_capacity(learner_count);
        for l in 0..learner_count {
            let policy = PolicyNet::new(spec.obs_dims[l], &cfg.hidden, spec.num_actions[l], Activation::Tanh, &mut init)?;
            let value = ValueNet::new(spec.obs_dims[l], &cfg.hidden, Activation::Tanh, &mut init)?;
            learners.push(Learner::new(policy, value, cfg.ppo_config()));
        }
        let mut ainit = stream(cfg.seed, STREAM_ADVISOR_INIT);
        let acfg = cfg.advisor_config();
        let advisor = match cfg.advisor {
            AdvisorKind::None => Advisor::None,
            AdvisorKind::Goa => Advisor::Goa(Box::new(Goa::new(n, spec.state_dim, &spec.num_actions, acfg, &mut ainit)?), JointAdvice::default()),
            AdvisorKind::Loa => Advisor::Loa(
                Box::new(Loa::new(n, spec.obs_dims[0], &spec.num_actions, cfg.loa_mode, acfg, &mut ainit)?),
                vec![ActiveAdvice::default(); n],
            ),
            AdvisorKind::Sro => Advisor::Sro(
                Box::new(Sro::new(n, spec.obs_dims[0], &spec.num_actions, acfg, cfg.sro_config(), &mut ainit)?),
                vec![ActiveAdvice::default(); n],
            ),
        };
        let view = match cfg.advisor {
            AdvisorKind::None => None,
            _ => Some(OptionSetView::new(n)?),
        };
        let schedule = match cfg.mu {
            Some(mu) => TransferSchedule::new(mu, cfg.temperature)?,
            None => TransferSchedule::for_total_updates(cfg.planned_updates(), cfg.temperature)?,
        };
        Ok(Self {
            cfg,
            env,
            learners,
            agent_learner,
            advisor,
            view,
            schedule,
            act_rng: stream(cfg.seed, STREAM_ACT),
            advice_rng: stream(cfg.seed, STREAM_ADVICE),
            step: 0,
            episodes: 0,
            advisor_updates: 0,
            actor_updates: 0,
            logged_syncs: 0,
            recent: Vec::new(),
        })
    }

    fn transfer_weight(&self) -> f64 {
        if self.cfg.advisor == AdvisorKind::None || !self.cfg.transfer {
            return 0.0;
        }
        self.schedule.weight(self.learners[0].updates() as f64)
    }

    fn advise(&mut self, current: &StepResult, trace: &mut Option<Vec<TraceEvent>>) -> Result<StepAdvice> {
        let n = current.observations.len();
        let epsilon = self.cfg.epsilon().value(self.step);
        let step = self.step;
        let Some(view) = self.view.as_ref() else {
            return Ok(StepAdvice {
                options: vec![None; n],
                switches: 0,
                joint: None,
            });
        };
        match &mut self.advisor {
            Advisor::None => unreachable!("a view exists only with an advisor"),
            Advisor::Loa(l, s) => local_advice(l.as_ref(), s, &current.observations, view, epsilon, step, &mut self.advice_rng, trace),
            Advisor::Sro(m, s) => local_advice(m.as_ref(), s, &current.observations, view, epsilon, step, &mut self.advice_rng, trace),
            Advisor::Goa(g, joint) => {
                let held = joint.joint.is_some();
                let (terminated, reselected) = g.advise(&current.state, joint, epsilon, &mut self.advice_rng)?;
                if let Some(t) = trace {
                    for (agent, &option) in joint.options.iter().enumerate() {
                        t.push(TraceEvent::Advice {
                            step,
                            agent,
                            option,
                            terminated: held.then_some(terminated),
                            reselected,
                        });
                    }
                }
                Ok(StepAdvice {
                    options: joint.options.iter().map(|&o| Some(o)).collect(),
                    switches: u64::from(terminated) * n as u64,
                    joint: joint.joint,
                })
            }
        }
    }

    fn update_advisor(&mut self, acc: &mut UpdateAcc, trace: &mut Option<Vec<TraceEvent>>) -> Result<()> {
        if self.cfg.advisor == AdvisorKind::None
            || self.advisor.buffer_len() < self.cfg.warmup.max(1)
            || !self.step.is_multiple_of(self.cfg.advisor_update_every)
        {
            return Ok(());
        }
        let bank = AgentPolicies {
            learners: &self.learners,
            agent_learner: &self.agent_learner,
        };
        let result = match &mut self.advisor {
            Advisor::None => return Ok(()),
            Advisor::Goa(g, _) => g.update(&bank, &mut self.advice_rng),
            Advisor::Loa(l, _) => l.update(&bank, &mut self.advice_rng),
            Advisor::Sro(s, _) => s.update(&bank, &mut self.advice_rng),
        };
        let loss = match result {
            Ok(l) => l,
            Err(Error::Retry(_)) => return Ok(()),
            Err(e) => return Err(e),
        };
        self.advisor_updates += 1;
        acc.adv_count += 1;
        acc.adv_value += loss.value;
        acc.adv_recon += loss.reconstruction;
        acc.adv_reward += loss.reward;
        let syncs = self.advisor.syncs(self.agent_learner.len());
        if let Some(t) = trace {
            for &u in &syncs[self.logged_syncs..] {
                t.push(TraceEvent::TargetSync {
                    step: self.step,
                    advisor_update: u,
                });
            }
        }
        self.logged_syncs = syncs.len();
        Ok(())
    }

    /// One PPO step per learner over every segment closed since the last one.
    fn update_learners(
        &mut self,
        pending: &mut [Vec<(TrajectorySegment, Vec<Option<usize>>)>],
        acc: &mut UpdateAcc,
        trace: &mut Option<Vec<TraceEvent>>,
    ) -> Result<()> {
        let use_transfer = self.cfg.transfer && self.cfg.advisor != AdvisorKind::None;
        let mut targets: Vec<Vec<Vec<Option<TransferTarget>>>> = Vec::with_capacity(pending.len());
        for (agent, segs) in pending.iter().enumerate() {
            let own = self.agent_learner[agent];
            let t = self.learners[own].updates() as f64;
            let mut per_seg = Vec::with_capacity(segs.len());
            for (seg, options) in segs {
                let mut row = Vec::with_capacity(seg.len());
                for (step, option) in seg.steps.iter().zip(options) {
                    row.push(match (use_transfer, option) {
                        (true, Some(o)) => Some(transfer_target(&self.learners[self.agent_learner[*o]].policy, &step.obs, &self.schedule, t)?),
                        _ => None,
                    });
                }
                per_seg.push(row);
            }
            targets.push(per_seg);
        }
        let mut reports: Vec<UpdateReport> = Vec::new();
        for l in 0..self.learners.len() {
            let mut batch: Vec<(&TrajectorySegment, &[Option<TransferTarget>])> = Vec::new();
            for (agent, segs) in pending.iter().enumerate() {
                if self.agent_learner[agent] != l {
                    continue;
                }
                for ((seg, _), tgt) in segs.iter().zip(&targets[agent]) {
                    if !seg.is_empty() {
                        batch.push((seg, tgt.as_slice()));
                    }
                }
            }
            if batch.is_empty() {
                continue;
            }
            reports.push(self.learners[l].update(&batch)?);
            if let Some(t) = trace {
                t.push(TraceEvent::ActorUpdate {
                    step: self.step,
                    learner: l,
                    update: self.learners[l].updates(),
                });
            }
        }
        pending.iter_mut().for_each(Vec::clear);
        if reports.is_empty() {
            return Ok(());
        }
        self.actor_updates += 1;
        let k = reports.len() as f64;
        acc.count += 1;
        acc.critic += reports.iter().map(|r| r.critic_loss).sum::<f64>() / k;
        acc.surrogate += reports.iter().map(|r| r.actor.surrogate).sum::<f64>() / k;
        acc.kl += reports.iter().map(|r| r.actor.kl).sum::<f64>() / k;
        acc.transfer += reports.iter().map(|r| r.actor.transfer).sum::<f64>() / k;
        Ok(())
    }

    fn flush_updates(&mut self, acc: &mut UpdateAcc, sinks: &mut Sinks) -> Result<()> {
        if acc.count < self.cfg.update_log_interval {
            return Ok(());
        }
        let c = acc.count as f64;
        let a = acc.adv_count.max(1) as f64;
        let record = UpdateRecord {
            kind: "update",
            update: self.actor_updates,
            step: self.step,
            critic_loss: acc.critic / c,
            surrogate: acc.surrogate / c,
            kl: acc.kl / c,
            transfer: acc.transfer / c,
            transfer_weight: self.transfer_weight(),
            advisor_updates: self.advisor_updates,
            advisor_value: acc.adv_value / a,
            advisor_reconstruction: acc.adv_recon / a,
            advisor_reward: acc.adv_reward / a,
        };
        write_line(&mut sinks.metrics, &record)?;
        *acc = UpdateAcc::default();
        Ok(())
    }

    fn train(&mut self, sinks: &mut Sinks) -> Result<()> {
        let n = self.agent_learner.len();
        let cap = self.env.spec().episode_cap;
        let seg_len = self.cfg.segment_length as u64;
        let mut current = self.env.reset();
        let mut acc = EpisodeAcc::new(n);
        let mut segments: Vec<(TrajectorySegment, Vec<Option<usize>>)> = (0..n).map(|_| (TrajectorySegment::default(), Vec::new())).collect();
        let mut pending: Vec<Vec<(TrajectorySegment, Vec<Option<usize>>)>> = vec![Vec::new(); n];
        let mut updates = UpdateAcc::default();
        let mut trace = sinks.trace.as_ref().map(|_| Vec::new());

        while self.step < self.cfg.total_steps {
            let advice = self.advise(&current, &mut trace)?;
            let mut actions = Vec::with_capacity(n);
            let mut samples = Vec::with_capacity(n);
            for agent in 0..n {
                let policy = &self.learners[self.agent_learner[agent]].policy;
                let s = act(policy, &current.observations[agent], &mut self.act_rng)?;
                actions.push(s.action);
                samples.push(s);
            }
            let next = self.env.step(&actions)?;
            self.step += 1;
            let terminal = next.done && next.info.step < cap;

            for (agent, s) in samples.into_iter().enumerate() {
                let (seg, options) = &mut segments[agent];
                seg.steps.push(SegmentStep {
                    obs: current.observations[agent].clone(),
                    action: s.action,
                    reward: next.rewards[agent],
                    old_log_prob: s.log_prob,
                    old_probs: s.probs,
                });
                options.push(advice.options[agent]);
                acc.returns[agent] += next.rewards[agent];
                if let Some(o) = advice.options[agent] {
                    acc.advice[agent][o] += 1;
                }
            }
            match &mut self.advisor {
                Advisor::None => {}
                Advisor::Goa(g, _) => g.push(GlobalTransition {
                    state: current.state.clone(),
                    next_state: next.state.clone(),
                    observations: current.observations.clone(),
                    actions: actions.clone(),
                    reward: next.rewards.iter().sum(),
                    done: terminal,
                    joint_option: advice.joint,
                })?,
                Advisor::Loa(_, _) | Advisor::Sro(_, _) => {
                    for agent in 0..n {
                        let tr = LocalTransition {
                            obs: current.observations[agent].clone(),
                            action: actions[agent],
                            reward: next.rewards[agent],
                            next_obs: next.observations[agent].clone(),
                            done: terminal,
                            option: advice.options[agent],
                        };
                        match &mut self.advisor {
                            Advisor::Loa(l, _) => l.push(agent, tr)?,
                            Advisor::Sro(s, _) => s.push(agent, tr)?,
                            _ => unreachable!(),
                        }
                    }
                }
            }
            acc.length += 1;
            acc.catches += next.info.catches;
            acc.collisions += next.info.collisions;
            acc.distance_sum += next.info.landmark_distance;
            acc.switches += advice.switches;

            self.update_advisor(&mut updates, &mut trace)?;

            let boundary = self.step.is_multiple_of(seg_len);
            if next.done || boundary {
                for (agent, slot) in segments.iter_mut().enumerate() {
                    let (mut seg, options) = std::mem::take(slot);
                    if seg.is_empty() {
                        continue;
                    }
                    seg.terminal = terminal;
                    seg.bootstrap_obs = (!terminal).then(|| next.observations[agent].clone());
                    pending[agent].push((seg, options));
                }
            }
            if boundary {
                self.update_learners(&mut pending, &mut updates, &mut trace)?;
                self.flush_updates(&mut updates, sinks)?;
            }
            if let (Some(events), Some(w)) = (trace.as_mut(), sinks.trace.as_mut()) {
                for e in events.drain(..) {
                    write_line(w, &e)?;
                }
            }

            if next.done {
                self.episodes += 1;
                let finished = std::mem::replace(&mut acc, EpisodeAcc::new(n));
                let record = EpisodeRecord {
                    kind: "episode",
                    episode: self.episodes - 1,
                    step: self.step,
                    length: finished.length,
                    team_return: finished.returns.iter().sum(),
                    returns: finished.returns,
                    catches: finished.catches,
                    collisions: finished.collisions,
                    landmark_distance: finished.distance_sum / finished.length as f64,
                    option_switches: finished.switches,
                    advice: finished.advice,
                    transfer_weight: self.transfer_weight(),
                    epsilon: self.cfg.epsilon().value(self.step),
                };
                write_line(&mut sinks.metrics, &record)?;
                self.recent.push(record);
                if self.recent.len() > SUMMARY_WINDOW {
                    self.recent.remove(0);
                }
                self.advisor.clear_advice();
                current = self.env.reset();
            } else {
                current = next;
            }
        }
        Ok(())
    }

    fn summary(&self) -> RunSummary {
        let mean = |f: &dyn Fn(&EpisodeRecord) -> f64| {
            if self.recent.is_empty() {
                0.0
            } else {
                self.recent.iter().map(f).sum::<f64>() / self.recent.len() as f64
            }
        };
        RunSummary {
            scenario: self.cfg.scenario.name().into(),
            advisor: self.cfg.advisor.name().into(),
            seed: self.cfg.seed,
            steps: self.step,
            episodes: self.episodes,
            actor_updates: self.actor_updates,
            advisor_updates: self.advisor_updates,
            target_syncs: self.advisor.syncs(self.agent_learner.len()).len() as u64,
            final_team_return: mean(&|r| r.team_return),
            final_landmark_distance: mean(&|r| r.landmark_distance),
            final_collisions: mean(&|r| r.collisions as f64),
        }
    }
}

trait GenSeed {
    fn gen_seed(self) -> u64;
}

impl GenSeed for ChaCha8Rng {
    fn gen_seed(mut self) -> u64 {
        rand::RngCore::next_u64(&mut self)
    }
}

/// Default output directory for a config: `runs/<scenario>-<advisor>-s<seed>`.
pub fn default_out_dir(cfg: &RunConfig) -> PathBuf {
    PathBuf::from("runs").join(format!("{}-{}-s{}", cfg.scenario.name(), cfg.advisor.name(), cfg.seed))
}
