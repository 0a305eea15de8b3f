use rand::Rng;

use super::{mask_self, masked_max, matching_options, upon_arrival, AdvisorConfig, AdvisorLoss, LocalAdvisor, LocalTransition, TdItem};
use super::{td_backward, td_loss};
use crate::nnkernel::{AdamState, Activation, Head, Mlp, MlpSpec, Parameterized};
use crate::optioncore::{termination_update, OptionSetView, PolicyBank, TerminationHead};
use crate::rlcore::{Batch, ReplayBuffer};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LoaMode {
    /// One module trained on every agent's transitions.
    Shared,
    /// One module per agent trained on that agent's transitions only.
    PerAgent,
}

#[derive(Debug, Clone)]
pub struct LoaModule {
    pub q: Mlp,
    pub target: Mlp,
    pub head: TerminationHead,
    opt: AdamState,
    updates: u64,
    syncs: Vec<u64>,
}

impl LoaModule {
    fn new<R: Rng + ?Sized>(obs_dim: usize, options: usize, cfg: &AdvisorConfig, rng: &mut R) -> Result<Self> {
        let mut q = Mlp::new(&MlpSpec::new(obs_dim, &cfg.hidden, options, Activation::Tanh, Head::Linear), rng)?;
        let head = cfg.termination_head(obs_dim, options, rng)?;
        let opt = AdamState::new(&q.params_mut(), cfg.lr);
        Ok(Self {
            target: q.clone(),
            q,
            head,
            opt,
            updates: 0,
            syncs: Vec::new(),
        })
    }

    pub fn updates(&self) -> u64 {
        self.updates
    }

    /// Update counts at which the target network was refreshed.
    pub fn syncs(&self) -> &[u64] {
        &self.syncs
    }

    pub fn sync_target(&mut self) {
        self.target.copy_params_from(&self.q);
    }
}

#[derive(Debug, Clone)]
pub struct Loa {
    mode: LoaMode,
    modules: Vec<LoaModule>,
    buffer: ReplayBuffer<LocalTransition>,
    view: OptionSetView,
    cfg: AdvisorConfig,
    thresholds: Vec<f64>,
}

impl Loa {
    pub fn new<R: Rng + ?Sized>(agents: usize, obs_dim: usize, actions: &[usize], mode: LoaMode, cfg: AdvisorConfig, rng: &mut R) -> Result<Self> {
        cfg.validate()?;
        if actions.len() != agents {
            return Err(Error::config("one action count per agent is required"));
        }
        let view = OptionSetView::new(agents)?;
        let count = match mode {
            LoaMode::Shared => 1,
            LoaMode::PerAgent => agents,
        };
        let modules = (0..count)
            .map(|_| LoaModule::new(obs_dim, agents, &cfg, rng))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            mode,
            modules,
            buffer: ReplayBuffer::new(agents, cfg.capacity)?,
            view,
            thresholds: actions.iter().map(|&a| cfg.threshold(a)).collect(),
            cfg,
        })
    }

    pub fn mode(&self) -> LoaMode {
        self.mode
    }

    pub fn config(&self) -> &AdvisorConfig {
        &self.cfg
    }

    pub fn module_index(&self, agent: usize) -> usize {
        match self.mode {
            LoaMode::Shared => 0,
            LoaMode::PerAgent => agent,
        }
    }

    pub fn module(&self, agent: usize) -> &LoaModule {
        &self.modules[self.module_index(agent)]
    }

    pub fn module_mut(&mut self, agent: usize) -> &mut LoaModule {
        let k = self.module_index(agent);
        &mut self.modules[k]
    }

    pub fn buffer(&self) -> &ReplayBuffer<LocalTransition> {
        &self.buffer
    }

    pub fn push(&mut self, agent: usize, tr: LocalTransition) -> Result<()> {
        self.buffer.push(agent, tr)
    }

    /// `(1 - beta) Qbar(o', w) + beta max_w' Qbar(o', w')` over the agent's options.
    pub fn u_value(&self, agent: usize, next_obs: &[f64], option: usize) -> Result<f64> {
        let m = self.module(agent);
        let q = m.target.predict(next_obs)?;
        let beta = m.head.beta(next_obs, option)?;
        Ok(upon_arrival(q[option], masked_max(&q, &self.view, agent), beta))
    }

    /// Regression targets for every matched (sample, option) pair.
    pub fn td_items(&self, samples: &[(usize, &LocalTransition)], policies: &dyn PolicyBank) -> Result<Vec<TdItem>> {
        let mut items = Vec::new();
        for &(agent, tr) in samples {
            let matched = matching_options(policies, &tr.obs, tr.action, self.thresholds[agent])?;
            if matched.is_empty() {
                continue;
            }
            let m = self.module(agent);
            let q_next = m.target.predict(&tr.next_obs)?;
            let betas = m.head.betas(&tr.next_obs, self.view.num_options)?;
            let best = masked_max(&q_next, &self.view, agent);
            let cont = if tr.done { 0.0 } else { self.cfg.gamma };
            for o in matched {
                let u = upon_arrival(q_next[o], best, betas[o]);
                items.push(TdItem {
                    input: tr.obs.clone(),
                    head: o,
                    target: tr.reward + cont * u,
                });
            }
        }
        Ok(items)
    }

    pub fn loss(&self, agent: usize, items: &[TdItem], samples: usize) -> Result<f64> {
        td_loss(&self.module(agent).q, items, samples.max(1) as f64)
    }

    /// One update of every module. Returns [`Error::Retry`] while the
    /// buffer is empty.
    pub fn update<R: Rng + ?Sized>(&mut self, policies: &dyn PolicyBank, rng: &mut R) -> Result<AdvisorLoss> {
        let mut total = AdvisorLoss::default();
        for k in 0..self.modules.len() {
            let owned: Vec<(usize, LocalTransition)> = {
                let batch: Batch<'_, LocalTransition> = match self.mode {
                    LoaMode::Shared => self.buffer.sample(self.cfg.batch, false, rng)?,
                    LoaMode::PerAgent => match self.buffer.sample_partition(k, self.cfg.batch, rng) {
                        Ok(b) => b,
                        Err(Error::Retry(_)) => continue,
                        Err(e) => return Err(e),
                    },
                };
                batch.items.into_iter().map(|(a, t)| (a, t.clone())).collect()
            };
            let samples: Vec<(usize, &LocalTransition)> = owned.iter().map(|(a, t)| (*a, t)).collect();
            let part = self.update_module(k, &samples, policies)?;
            total.value += part.value;
            total.matched += part.matched;
            total.samples += part.samples;
        }
        if total.samples == 0 {
            return Err(Error::Retry("no local transitions yet".into()));
        }
        Ok(total)
    }

    /// Update module `k` from explicit samples (agent, transition).
    pub fn update_module(&mut self, k: usize, samples: &[(usize, &LocalTransition)], policies: &dyn PolicyBank) -> Result<AdvisorLoss> {
        let items = self.td_items(samples, policies)?;
        let denom = samples.len().max(1) as f64;
        let view = self.view;
        let m = &mut self.modules[k];
        let mut loss = 0.0;
        if !items.is_empty() {
            loss = td_backward(&mut m.q, &items, denom)?;
            m.opt.step(&mut m.q.params_mut())?;
        }
        for &(agent, tr) in samples {
            if let (Some(o), false) = (tr.option, tr.done) {
                let q = m.q.predict(&tr.next_obs)?;
                let adv = q[o] - masked_max(&q, &view, agent);
                termination_update(&mut m.head, &tr.next_obs, o, adv)?;
            }
        }
        m.updates += 1;
        if m.updates.is_multiple_of(self.cfg.target_interval) {
            m.sync_target();
            m.syncs.push(m.updates);
        }
        Ok(AdvisorLoss {
            value: loss,
            matched: items.len(),
            samples: samples.len(),
            ..AdvisorLoss::default()
        })
    }
}

impl LocalAdvisor for Loa {
    fn num_options(&self) -> usize {
        self.view.num_options
    }

    fn head(&self, agent: usize) -> &TerminationHead {
        &self.module(agent).head
    }

    fn termination_input(&self, _agent: usize, obs: &[f64]) -> Result<Vec<f64>> {
        Ok(obs.to_vec())
    }

    fn option_values(&self, agent: usize, obs: &[f64]) -> Result<Vec<f64>> {
        Ok(mask_self(self.module(agent).q.predict(obs)?, agent))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::oracle::{option_value_iteration, TabularOptionProblem};
    use crate::rlcore::PolicyNet;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn onehot(i: usize, n: usize) -> Vec<f64> {
        (0..n).map(|j| if i == j { 1.0 } else { 0.0 }).collect()
    }

    /// Deterministic tabular policy: `table[s]` is the action at one-hot state `s`.
    pub(crate) fn table_policy(table: &[usize], actions: usize) -> PolicyNet {
        let mut net = Mlp::zeros(&MlpSpec::new(table.len(), &[], actions, Activation::Tanh, Head::Linear)).unwrap();
        for (s, &a) in table.iter().enumerate() {
            net.weight_mut(0).values[s * actions + a] = 40.0;
        }
        PolicyNet::from_mlp(net).unwrap()
    }

    fn tabular_loa(mode: LoaMode, lr: f64, gamma: f64, beta: f64, obs_dim: usize) -> Loa {
        let cfg = AdvisorConfig {
            lr,
            gamma,
            hidden: vec![],
            fixed_beta: Some(beta),
            target_interval: 1,
            ..AdvisorConfig::default()
        };
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        Loa::new(2, obs_dim, &[2, 2], mode, cfg, &mut rng).unwrap()
    }

    #[test]
    fn zero_reward_zero_discount_gives_zero_loss() {
        let mut loa = tabular_loa(LoaMode::Shared, 1e-3, 0.0, 0.5, 2);
        let m = loa.module_mut(0);
        m.q = Mlp::zeros(&MlpSpec::new(2, &[], 2, Activation::Tanh, Head::Linear)).unwrap();
        m.target = m.q.clone();
        let policies = vec![table_policy(&[0, 0], 2), table_policy(&[0, 0], 2)];
        let tr = LocalTransition { obs: onehot(0, 2), action: 0, reward: 0.0, next_obs: onehot(1, 2), done: false, option: Some(1) };
        let items = loa.td_items(&[(0, &tr)], &policies).unwrap();
        assert_eq!(items.len(), 2);
        assert_eq!(loa.loss(0, &items, 1).unwrap(), 0.0);
    }

    #[test]
    fn u_value_blends_with_termination() {
        let mut loa = tabular_loa(LoaMode::Shared, 1e-3, 0.9, 0.5, 1);
        let m = loa.module_mut(0);
        m.target = Mlp::zeros(&MlpSpec::new(1, &[], 2, Activation::Tanh, Head::Linear)).unwrap();
        m.target.bias_mut(0).values.copy_from_slice(&[1.0, 3.0]);
        // Agent 1 may only pick option 0, so the max is Q(o', 0) = 1.
        assert_eq!(loa.u_value(1, &[0.0], 1).unwrap(), 0.5 * 3.0 + 0.5 * 1.0);
        assert_eq!(loa.u_value(0, &[0.0], 0).unwrap(), 0.5 * 1.0 + 0.5 * 3.0);
    }

    #[test]
    fn masked_values_never_pick_self() {
        let loa = tabular_loa(LoaMode::PerAgent, 1e-3, 0.9, 0.5, 3);
        for agent in 0..2 {
            let v = loa.option_values(agent, &onehot(1, 3)).unwrap();
            assert_eq!(v[agent], f64::NEG_INFINITY);
        }
    }

    #[test]
    fn converges_to_option_value_oracle() {
        // Chain 0 -> 1 -> 2 (terminal). Action 1 advances, action 0 stays.
        // Reward 1 for reaching state 2, 0.1 for staying.
        let states = 3;
        let next = |s: usize, a: usize| if a == 1 { s + 1 } else { s };
        let reward = |s: usize, a: usize| if a == 1 && s + 1 == 2 { 1.0 } else if a == 0 { 0.1 } else { 0.0 };
        let tables = [vec![1, 0, 0], vec![1, 1, 0]];
        let gamma = 0.9;
        let beta = 0.3;
        let problem = TabularOptionProblem::deterministic(
            states,
            2,
            gamma,
            (0..states).map(|s| (0..2).map(|a| (next(s, a).min(2), reward(s, a), next(s, a) >= 2)).collect()).collect(),
            tables.iter().map(|t| t.iter().map(|&a| onehot(a, 2)).collect()).collect(),
            vec![vec![beta; 2]; states],
        );
        let oracle = option_value_iteration(&problem, Some(0)).unwrap();
        let policies: Vec<PolicyNet> = tables.iter().map(|t| table_policy(t, 2)).collect();
        let mut loa = tabular_loa(LoaMode::Shared, 3e-3, gamma, beta, states);
        let mut data = Vec::new();
        for s in 0..2 {
            for a in 0..2 {
                let ns = next(s, a);
                data.push(LocalTransition {
                    obs: onehot(s, states),
                    action: a,
                    reward: reward(s, a),
                    next_obs: onehot(ns.min(2), states),
                    done: ns >= 2,
                    option: None,
                });
            }
        }
        for _ in 0..30_000 {
            let samples: Vec<(usize, &LocalTransition)> = data.iter().map(|t| (0, t)).collect();
            loa.update_module(0, &samples, &policies).unwrap();
        }
        for s in 0..2 {
            let q = loa.module(0).q.predict(&onehot(s, states)).unwrap();
            for o in 0..2 {
                assert!((q[o] - oracle[s][o]).abs() < 1e-3, "s{s} o{o}: {} vs {}", q[o], oracle[s][o]);
            }
        }
    }
}
