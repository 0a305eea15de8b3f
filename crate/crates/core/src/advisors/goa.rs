use rand::Rng;

use super::{matching_options, upon_arrival, AdvisorConfig, AdvisorLoss, GlobalTransition, TdItem};
use super::{td_backward, td_loss};
use crate::nnkernel::{AdamState, Activation, Head, Mlp, MlpSpec, Parameterized};
use crate::optioncore::{termination_update, PolicyBank, TerminationHead};
use crate::rlcore::ReplayBuffer;
use crate::{Error, Result};

/// Bijection between joint options and flat head indices.
///
/// Agent `i` picks among the `n - 1` other agents; its local index `l` maps
/// to option `l` when `l < i` and to `l + 1` otherwise. The flat index is
/// the mixed-radix number `l_0 l_1 .. l_{n-1}` in base `n - 1` with agent 0
/// most significant.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct JointIndex {
    agents: usize,
}

impl JointIndex {
    pub fn new(agents: usize) -> Result<Self> {
        if agents < 2 {
            return Err(Error::config("joint options need at least two agents"));
        }
        let size = (agents as u128 - 1).checked_pow(agents as u32);
        if size.is_none_or(|s| s > 1 << 20) {
            return Err(Error::config(format!("{agents} agents give too many joint options")));
        }
        Ok(Self { agents })
    }

    pub fn agents(&self) -> usize {
        self.agents
    }

    pub fn size(&self) -> usize {
        (self.agents - 1).pow(self.agents as u32)
    }

    pub fn encode(&self, options: &[usize]) -> Result<usize> {
        if options.len() != self.agents {
            return Err(Error::usage("joint option has the wrong number of components"));
        }
        let base = self.agents - 1;
        let mut flat = 0;
        for (i, &o) in options.iter().enumerate() {
            if o == i || o >= self.agents {
                return Err(Error::usage(format!("agent {i} cannot follow option {o}")));
            }
            let local = if o < i { o } else { o - 1 };
            flat = flat * base + local;
        }
        Ok(flat)
    }

    pub fn decode(&self, mut flat: usize) -> Result<Vec<usize>> {
        if flat >= self.size() {
            return Err(Error::usage(format!("joint index {flat} out of range")));
        }
        let base = self.agents - 1;
        let mut out = vec![0; self.agents];
        for i in (0..self.agents).rev() {
            let local = flat % base;
            flat /= base;
            out[i] = if local < i { local } else { local + 1 };
        }
        Ok(out)
    }

    /// Flat indices of every joint option whose component `i` lies in `sets[i]`.
    pub fn product(&self, sets: &[Vec<usize>]) -> Result<Vec<usize>> {
        let mut partial: Vec<Vec<usize>> = vec![Vec::new()];
        for (i, set) in sets.iter().enumerate() {
            let mut next = Vec::new();
            for prefix in &partial {
                for &o in set {
                    if o != i {
                        let mut p = prefix.clone();
                        p.push(o);
                        next.push(p);
                    }
                }
            }
            partial = next;
        }
        partial.iter().map(|p| self.encode(p)).collect()
    }
}

/// Call-and-return state of the single joint option.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct JointAdvice {
    pub joint: Option<usize>,
    pub options: Vec<usize>,
    pub steps_held: u64,
    pub selections: u64,
    pub terminations: u64,
}

#[derive(Debug, Clone)]
pub struct Goa {
    pub q: Mlp,
    pub target: Mlp,
    pub head: TerminationHead,
    opt: AdamState,
    index: JointIndex,
    buffer: ReplayBuffer<GlobalTransition>,
    cfg: AdvisorConfig,
    thresholds: Vec<f64>,
    updates: u64,
    syncs: Vec<u64>,
}

impl Goa {
    pub fn new<R: Rng + ?Sized>(agents: usize, state_dim: usize, actions: &[usize], cfg: AdvisorConfig, rng: &mut R) -> Result<Self> {
        cfg.validate()?;
        if actions.len() != agents {
            return Err(Error::config("one action count per agent is required"));
        }
        let index = JointIndex::new(agents)?;
        let mut q = Mlp::new(&MlpSpec::new(state_dim, &cfg.hidden, index.size(), Activation::Tanh, Head::Linear), rng)?;
        let head = cfg.termination_head(state_dim, index.size(), rng)?;
        let opt = AdamState::new(&q.params_mut(), cfg.lr);
        Ok(Self {
            target: q.clone(),
            q,
            head,
            opt,
            index,
            buffer: ReplayBuffer::new(1, cfg.capacity)?,
            thresholds: actions.iter().map(|&a| cfg.threshold(a)).collect(),
            cfg,
            updates: 0,
            syncs: Vec::new(),
        })
    }

    pub fn index(&self) -> &JointIndex {
        &self.index
    }

    pub fn updates(&self) -> u64 {
        self.updates
    }

    pub fn syncs(&self) -> &[u64] {
        &self.syncs
    }

    pub fn buffer(&self) -> &ReplayBuffer<GlobalTransition> {
        &self.buffer
    }

    pub fn push(&mut self, tr: GlobalTransition) -> Result<()> {
        self.buffer.push(0, tr)
    }

    pub fn joint_values(&self, state: &[f64]) -> Result<Vec<f64>> {
        self.q.predict(state)
    }

    /// `(1 - beta) Qbar(s', w) + beta max Qbar(s', .)` on the target network.
    pub fn u_value(&self, next_state: &[f64], joint: usize) -> Result<f64> {
        let q = self.target.predict(next_state)?;
        let max = q.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        Ok(upon_arrival(q[joint], max, self.head.beta(next_state, joint)?))
    }

    /// Epsilon-greedy over all joint options, ties to the lowest index.
    pub fn select<R: Rng + ?Sized>(&self, state: &[f64], epsilon: f64, rng: &mut R) -> Result<usize> {
        let size = self.index.size();
        let explore = if epsilon >= 1.0 {
            true
        } else if epsilon <= 0.0 {
            false
        } else {
            rng.gen::<f64>() < epsilon
        };
        if explore {
            return Ok(rng.gen_range(0..size));
        }
        let q = self.joint_values(state)?;
        let mut best = 0;
        for (k, &v) in q.iter().enumerate() {
            if v > q[best] {
                best = k;
            }
        }
        Ok(best)
    }

    /// Advances the joint option: continue unless the joint termination
    /// fires, in which case every agent is re-advised at once.
    pub fn advise<R: Rng + ?Sized>(&self, state: &[f64], advice: &mut JointAdvice, epsilon: f64, rng: &mut R) -> Result<(bool, bool)> {
        if let Some(j) = advice.joint {
            let beta = self.head.beta(state, j)?;
            if rng.gen::<f64>() >= beta {
                advice.steps_held += 1;
                return Ok((false, false));
            }
            advice.terminations += 1;
        }
        let terminated = advice.joint.is_some();
        let j = self.select(state, epsilon, rng)?;
        advice.joint = Some(j);
        advice.options = self.index.decode(j)?;
        advice.steps_held = 1;
        advice.selections += 1;
        Ok((terminated, true))
    }

    pub fn td_items(&self, samples: &[&GlobalTransition], policies: &dyn PolicyBank) -> Result<Vec<TdItem>> {
        let mut items = Vec::new();
        for tr in samples {
            let mut sets = Vec::with_capacity(self.index.agents());
            for (i, (obs, &a)) in tr.observations.iter().zip(&tr.actions).enumerate() {
                sets.push(matching_options(policies, obs, a, self.thresholds[i])?);
            }
            let joints = self.index.product(&sets)?;
            if joints.is_empty() {
                continue;
            }
            let q_next = self.target.predict(&tr.next_state)?;
            let betas = self.head.betas(&tr.next_state, self.index.size())?;
            let max = q_next.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let cont = if tr.done { 0.0 } else { self.cfg.gamma };
            for j in joints {
                items.push(TdItem {
                    input: tr.state.clone(),
                    head: j,
                    target: tr.reward + cont * upon_arrival(q_next[j], max, betas[j]),
                });
            }
        }
        Ok(items)
    }

    pub fn loss(&self, items: &[TdItem], samples: usize) -> Result<f64> {
        td_loss(&self.q, items, samples.max(1) as f64)
    }

    pub fn update<R: Rng + ?Sized>(&mut self, policies: &dyn PolicyBank, rng: &mut R) -> Result<AdvisorLoss> {
        let owned: Vec<GlobalTransition> = self
            .buffer
            .sample(self.cfg.batch, false, rng)?
            .items
            .into_iter()
            .map(|(_, t)| t.clone())
            .collect();
        let samples: Vec<&GlobalTransition> = owned.iter().collect();
        self.update_on(&samples, policies)
    }

    pub fn update_on(&mut self, samples: &[&GlobalTransition], policies: &dyn PolicyBank) -> Result<AdvisorLoss> {
        let items = self.td_items(samples, policies)?;
        let denom = samples.len().max(1) as f64;
        let mut loss = 0.0;
        if !items.is_empty() {
            loss = td_backward(&mut self.q, &items, denom)?;
            self.opt.step(&mut self.q.params_mut())?;
        }
        for tr in samples {
            if let (Some(j), false) = (tr.joint_option, tr.done) {
                let q = self.q.predict(&tr.next_state)?;
                let max = q.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                termination_update(&mut self.head, &tr.next_state, j, q[j] - max)?;
            }
        }
        self.updates += 1;
        if self.updates.is_multiple_of(self.cfg.target_interval) {
            self.target.copy_params_from(&self.q);
            self.syncs.push(self.updates);
        }
        Ok(AdvisorLoss {
            value: loss,
            matched: items.len(),
            samples: samples.len(),
            ..AdvisorLoss::default()
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn joint_space_sizes() {
        assert_eq!(JointIndex::new(2).unwrap().size(), 1);
        assert_eq!(JointIndex::new(3).unwrap().size(), 8);
        assert_eq!(JointIndex::new(4).unwrap().size(), 81);
        assert_eq!(JointIndex::new(2).unwrap().decode(0).unwrap(), vec![1, 0]);
    }

    #[test]
    fn index_round_trips_exhaustively() {
        for n in 2..=4 {
            let idx = JointIndex::new(n).unwrap();
            let mut seen = std::collections::HashSet::new();
            for flat in 0..idx.size() {
                let tuple = idx.decode(flat).unwrap();
                assert!(tuple.iter().enumerate().all(|(i, &o)| o != i && o < n));
                assert_eq!(idx.encode(&tuple).unwrap(), flat);
                assert!(seen.insert(tuple));
            }
            assert!(idx.decode(idx.size()).is_err());
            assert!(idx.encode(&vec![0; n]).is_err());
        }
    }

    fn small_goa(beta: f64) -> Goa {
        let cfg = AdvisorConfig { hidden: vec![], fixed_beta: Some(beta), ..AdvisorConfig::default() };
        Goa::new(3, 2, &[2, 2, 2], cfg, &mut ChaCha8Rng::seed_from_u64(0)).unwrap()
    }

    #[test]
    fn greedy_selection_uses_head_values() {
        let mut g = small_goa(0.0);
        g.q = Mlp::zeros(&MlpSpec::new(2, &[], 8, Activation::Tanh, Head::Linear)).unwrap();
        g.q.bias_mut(0).values[5] = 2.0;
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        assert_eq!(g.select(&[0.0, 0.0], 0.0, &mut rng).unwrap(), 5);
        let mut advice = JointAdvice::default();
        g.advise(&[0.0, 0.0], &mut advice, 0.0, &mut rng).unwrap();
        assert_eq!(advice.options, g.index().decode(5).unwrap());
        for _ in 0..20 {
            assert_eq!(g.advise(&[0.0, 0.0], &mut advice, 1.0, &mut rng).unwrap(), (false, false));
        }
    }

    #[test]
    fn u_value_examples() {
        let mut g = small_goa(0.5);
        g.target = Mlp::zeros(&MlpSpec::new(2, &[], 8, Activation::Tanh, Head::Linear)).unwrap();
        g.target.bias_mut(0).values[1] = 1.0;
        g.target.bias_mut(0).values[4] = 3.0;
        assert_eq!(g.u_value(&[0.0, 0.0], 1).unwrap(), 2.0);
        g.head = TerminationHead::Fixed(0.0);
        assert_eq!(g.u_value(&[0.0, 0.0], 1).unwrap(), 1.0);
        g.head = TerminationHead::Fixed(1.0);
        assert_eq!(g.u_value(&[0.0, 0.0], 1).unwrap(), 3.0);
    }

    #[test]
    fn single_transition_losses() {
        let mut g = small_goa(0.5);
        g.cfg.gamma = 0.0;
        g.q = Mlp::zeros(&MlpSpec::new(2, &[], 8, Activation::Tanh, Head::Linear)).unwrap();
        let uniform = |_: &[usize]| {
            Mlp::zeros(&MlpSpec::new(1, &[], 2, Activation::Tanh, Head::Linear)).unwrap()
        };
        let policies: Vec<crate::rlcore::PolicyNet> = (0..3).map(|_| crate::rlcore::PolicyNet::from_mlp(uniform(&[])).unwrap()).collect();
        let mut tr = GlobalTransition {
            state: vec![1.0, 0.0],
            next_state: vec![0.0, 1.0],
            observations: vec![vec![0.0]; 3],
            actions: vec![0, 1, 0],
            reward: 0.0,
            done: false,
            joint_option: None,
        };
        let items = g.td_items(&[&tr], &policies).unwrap();
        assert_eq!(items.len(), 8);
        assert_eq!(g.loss(&items, 1).unwrap(), 0.0);
        tr.reward = 1.0;
        let items = g.td_items(&[&tr], &policies).unwrap();
        // Every matched head misses its target by 1; the batch holds one transition.
        assert_eq!(g.loss(&items[..1], 1).unwrap(), 1.0);
    }

    #[test]
    fn target_syncs_only_at_interval_multiples() {
        let cfg = AdvisorConfig { hidden: vec![], target_interval: 7, lr: 1e-2, ..AdvisorConfig::default() };
        let mut g = Goa::new(2, 2, &[2, 2], cfg, &mut ChaCha8Rng::seed_from_u64(3)).unwrap();
        let policies: Vec<crate::rlcore::PolicyNet> = (0..2)
            .map(|_| crate::rlcore::PolicyNet::from_mlp(Mlp::zeros(&MlpSpec::new(1, &[], 2, Activation::Tanh, Head::Linear)).unwrap()).unwrap())
            .collect();
        let tr = GlobalTransition {
            state: vec![1.0, 0.0],
            next_state: vec![0.0, 1.0],
            observations: vec![vec![0.0]; 2],
            actions: vec![0, 1],
            reward: 1.0,
            done: false,
            joint_option: Some(0),
        };
        let mut target_before = g.target.clone();
        for u in 1..=30u64 {
            g.update_on(&[&tr], &policies).unwrap();
            if u % 7 == 0 {
                assert_eq!(g.target, g.q);
            } else {
                assert_eq!(g.target, target_before);
            }
            target_before = g.target.clone();
        }
        assert_eq!(g.syncs(), &[7, 14, 21, 28]);
    }
}
