use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{mask_self, masked_max, matching_options, AdvisorConfig, AdvisorLoss, LocalAdvisor, LocalTransition};
use crate::nnkernel::{AdamState, Activation, Head, Mlp, MlpSpec, ParamTensor, Parameterized};
use crate::optioncore::{greedy_option, termination_update, OptionSetView, PolicyBank, TerminationHead};
use crate::rlcore::ReplayBuffer;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WeightMode {
    Shared,
    PerAgent,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SroConfig {
    pub embed_dim: usize,
    pub embed_hidden: Vec<usize>,
    pub sr_hidden: Vec<usize>,
    pub weight_mode: WeightMode,
    pub train_embedding: bool,
}

impl Default for SroConfig {
    fn default() -> Self {
        Self {
            embed_dim: 64,
            embed_hidden: vec![64],
            sr_hidden: vec![64],
            weight_mode: WeightMode::Shared,
            train_embedding: true,
        }
    }
}

/// Explicit components, for hand-built or frozen setups.
#[derive(Debug, Clone)]
pub struct SroParts {
    pub embed: Mlp,
    pub decoder: Mlp,
    pub weights: Vec<ParamTensor>,
    pub sr: Mlp,
    pub head: TerminationHead,
}

/// A successor-feature regression target for one option.
#[derive(Debug, Clone, PartialEq)]
pub struct SrItem {
    pub phi: Vec<f64>,
    pub option: usize,
    pub target: Vec<f64>,
}

/// Successor-representation option advisor.
///
/// `phi = embed(o)` feeds a decoder (reconstruction), reward weights
/// (`r ~ phi . w`), an SR network with one `D`-vector per option, and a
/// termination head on `phi`. The SR step treats `phi` as fixed input.
#[derive(Debug, Clone)]
pub struct Sro {
    pub embed: Mlp,
    pub decoder: Mlp,
    pub weights: Vec<ParamTensor>,
    pub sr: Mlp,
    pub sr_target: Mlp,
    pub head: TerminationHead,
    rep_opt: AdamState,
    sr_opt: AdamState,
    buffer: ReplayBuffer<LocalTransition>,
    view: OptionSetView,
    cfg: AdvisorConfig,
    scfg: SroConfig,
    thresholds: Vec<f64>,
    updates: u64,
    syncs: Vec<u64>,
}

impl Sro {
    pub fn new<R: Rng + ?Sized>(agents: usize, obs_dim: usize, actions: &[usize], cfg: AdvisorConfig, scfg: SroConfig, rng: &mut R) -> Result<Self> {
        let d = scfg.embed_dim;
        if d == 0 {
            return Err(Error::config("embedding dimension must be positive"));
        }
        let embed = Mlp::new(&MlpSpec::new(obs_dim, &scfg.embed_hidden, d, Activation::Tanh, Head::Linear), rng)?;
        let mirror: Vec<usize> = scfg.embed_hidden.iter().rev().copied().collect();
        let decoder = Mlp::new(&MlpSpec::new(d, &mirror, obs_dim, Activation::Tanh, Head::Linear), rng)?;
        let count = match scfg.weight_mode {
            WeightMode::Shared => 1,
            WeightMode::PerAgent => agents,
        };
        let weights = (0..count).map(|_| ParamTensor::zeros(&[d])).collect();
        let sr = Mlp::new(&MlpSpec::new(d, &scfg.sr_hidden, agents * d, Activation::Tanh, Head::Linear), rng)?;
        let head = cfg.termination_head(d, agents, rng)?;
        Self::from_parts(agents, actions, SroParts { embed, decoder, weights, sr, head }, cfg, scfg)
    }

    pub fn from_parts(agents: usize, actions: &[usize], parts: SroParts, cfg: AdvisorConfig, scfg: SroConfig) -> Result<Self> {
        cfg.validate()?;
        let view = OptionSetView::new(agents)?;
        if actions.len() != agents {
            return Err(Error::config("one action count per agent is required"));
        }
        let d = parts.embed.output_dim();
        if parts.decoder.input_dim() != d || parts.decoder.output_dim() != parts.embed.input_dim() {
            return Err(Error::config("decoder must map the embedding back to the observation"));
        }
        if parts.sr.input_dim() != d || parts.sr.output_dim() != agents * d {
            return Err(Error::config("successor network must map D to one D-vector per option"));
        }
        let expected = match scfg.weight_mode {
            WeightMode::Shared => 1,
            WeightMode::PerAgent => agents,
        };
        if parts.weights.len() != expected || parts.weights.iter().any(|w| w.len() != d) {
            return Err(Error::config("reward weights do not match the weight mode and embedding size"));
        }
        let SroParts { mut embed, mut decoder, mut weights, mut sr, head } = parts;
        let rep_opt = AdamState::new(&rep_params(&mut embed, &mut decoder, &mut weights, scfg.train_embedding), cfg.lr);
        let sr_opt = AdamState::new(&sr.params_mut(), cfg.lr);
        Ok(Self {
            sr_target: sr.clone(),
            embed,
            decoder,
            weights,
            sr,
            head,
            rep_opt,
            sr_opt,
            buffer: ReplayBuffer::new(agents, cfg.capacity)?,
            view,
            thresholds: actions.iter().map(|&a| cfg.threshold(a)).collect(),
            cfg,
            scfg,
            updates: 0,
            syncs: Vec::new(),
        })
    }

    pub fn embed_dim(&self) -> usize {
        self.embed.output_dim()
    }

    pub fn num_options(&self) -> usize {
        self.view.num_options
    }

    pub fn updates(&self) -> u64 {
        self.updates
    }

    pub fn syncs(&self) -> &[u64] {
        &self.syncs
    }

    pub fn buffer(&self) -> &ReplayBuffer<LocalTransition> {
        &self.buffer
    }

    pub fn push(&mut self, agent: usize, tr: LocalTransition) -> Result<()> {
        self.buffer.push(agent, tr)
    }

    fn weight_index(&self, agent: usize) -> usize {
        match self.scfg.weight_mode {
            WeightMode::Shared => 0,
            WeightMode::PerAgent => agent,
        }
    }

    pub fn weight(&self, agent: usize) -> &[f64] {
        &self.weights[self.weight_index(agent)].values
    }

    pub fn phi(&self, obs: &[f64]) -> Result<Vec<f64>> {
        self.embed.predict(obs)
    }

    /// `(phi, reconstruction, reward estimate)` for `agent`'s weights.
    pub fn embed_obs(&self, agent: usize, obs: &[f64]) -> Result<(Vec<f64>, Vec<f64>, f64)> {
        let phi = self.phi(obs)?;
        let recon = self.decoder.predict(&phi)?;
        let r = dot(&phi, self.weight(agent));
        Ok((phi, recon, r))
    }

    /// Online successor features, `n * D` values laid out option-major.
    pub fn successor(&self, phi: &[f64]) -> Result<Vec<f64>> {
        self.sr.predict(phi)
    }

    pub fn successor_target(&self, phi: &[f64]) -> Result<Vec<f64>> {
        self.sr_target.predict(phi)
    }

    fn values_from(&self, m: &[f64], agent: usize) -> Vec<f64> {
        let d = self.embed_dim();
        let w = self.weight(agent);
        (0..self.view.num_options).map(|o| dot(&m[o * d..(o + 1) * d], w)).collect()
    }

    /// `Q(o, w) = m_sr(phi, w) . w_agent` for every option, unmasked.
    pub fn q_all(&self, agent: usize, obs: &[f64]) -> Result<Vec<f64>> {
        let phi = self.phi(obs)?;
        Ok(self.values_from(&self.successor(&phi)?, agent))
    }

    /// Successor features upon arrival at `phi_next` under `option`.
    pub fn sro_u(&self, agent: usize, phi_next: &[f64], option: usize) -> Result<Vec<f64>> {
        let m = self.successor_target(phi_next)?;
        let beta = self.head.beta(phi_next, option)?;
        self.u_from(&m, agent, option, beta)
    }

    fn u_from(&self, m_target: &[f64], agent: usize, option: usize, beta: f64) -> Result<Vec<f64>> {
        let d = self.embed_dim();
        let greedy = greedy_option(&self.values_from(m_target, agent), &self.view, agent)?;
        let cont = &m_target[option * d..(option + 1) * d];
        let best = &m_target[greedy * d..(greedy + 1) * d];
        Ok(cont.iter().zip(best).map(|(c, b)| (1.0 - beta) * c + beta * b).collect())
    }

    /// `(1/B) sum |decoder(phi) - o|^2` and `(1/B) sum (r - phi . w)^2`.
    pub fn representation_loss(&self, samples: &[(usize, &LocalTransition)]) -> Result<(f64, f64)> {
        let denom = samples.len().max(1) as f64;
        let (mut rec, mut rew) = (0.0, 0.0);
        for &(agent, tr) in samples {
            let (phi, recon, r_hat) = self.embed_obs(agent, &tr.obs)?;
            let _ = phi;
            rec += recon.iter().zip(&tr.obs).map(|(a, b)| (a - b).powi(2)).sum::<f64>();
            rew += (tr.reward - r_hat).powi(2);
        }
        Ok((rec / denom, rew / denom))
    }

    /// [`Sro::representation_loss`] with gradient accumulation into the
    /// decoder, the reward weights and (when trained) the embedding.
    pub fn representation_backward(&mut self, samples: &[(usize, &LocalTransition)]) -> Result<(f64, f64)> {
        let denom = samples.len().max(1) as f64;
        let (mut rec, mut rew) = (0.0, 0.0);
        for &(agent, tr) in samples {
            let phi = self.embed.forward(&tr.obs)?.to_vec();
            let recon = self.decoder.forward(&phi)?.to_vec();
            let up: Vec<f64> = recon.iter().zip(&tr.obs).map(|(a, b)| 2.0 * (a - b) / denom).collect();
            rec += recon.iter().zip(&tr.obs).map(|(a, b)| (a - b).powi(2)).sum::<f64>();
            let mut g_phi = self.decoder.backward(&up)?;
            let wi = self.weight_index(agent);
            let w = &mut self.weights[wi];
            if w.grad.len() != w.values.len() {
                w.zero_grad();
            }
            let err = dot(&phi, &w.values) - tr.reward;
            rew += err * err;
            for k in 0..phi.len() {
                w.grad[k] += 2.0 * err * phi[k] / denom;
                g_phi[k] += 2.0 * err * w.values[k] / denom;
            }
            if self.scfg.train_embedding {
                self.embed.backward_params(&g_phi)?;
            }
        }
        Ok((rec / denom, rew / denom))
    }

    /// Targets `phi + gamma * U(phi', w)` for every matched (sample, option).
    pub fn sr_items(&self, samples: &[(usize, &LocalTransition)], policies: &dyn PolicyBank) -> Result<Vec<SrItem>> {
        let mut items = Vec::new();
        for &(agent, tr) in samples {
            let matched = matching_options(policies, &tr.obs, tr.action, self.thresholds[agent])?;
            if matched.is_empty() {
                continue;
            }
            let phi = self.phi(&tr.obs)?;
            let phi_next = self.phi(&tr.next_obs)?;
            let m_next = self.successor_target(&phi_next)?;
            let betas = self.head.betas(&phi_next, self.view.num_options)?;
            let cont = if tr.done { 0.0 } else { self.cfg.gamma };
            for o in matched {
                let u = self.u_from(&m_next, agent, o, betas[o])?;
                let target = phi.iter().zip(&u).map(|(p, u)| p + cont * u).collect();
                items.push(SrItem { phi: phi.clone(), option: o, target });
            }
        }
        Ok(items)
    }

    /// `(1/denom) sum |target - m_sr(phi, option)|^2`.
    pub fn sr_loss(&self, items: &[SrItem], denom: f64) -> Result<f64> {
        let d = self.embed_dim();
        let mut loss = 0.0;
        for it in items {
            let m = self.successor(&it.phi)?;
            loss += m[it.option * d..(it.option + 1) * d]
                .iter()
                .zip(&it.target)
                .map(|(a, b)| (a - b).powi(2))
                .sum::<f64>();
        }
        Ok(loss / denom)
    }

    pub fn sr_backward(&mut self, items: &[SrItem], denom: f64) -> Result<f64> {
        let d = self.embed_dim();
        let mut loss = 0.0;
        let mut k = 0;
        while k < items.len() {
            let m = self.sr.forward(&items[k].phi)?.to_vec();
            let mut up = vec![0.0; m.len()];
            let mut j = k;
            while j < items.len() && (j == k || items[j].phi == items[k].phi) {
                let it = &items[j];
                for (c, t) in it.target.iter().enumerate() {
                    let diff = m[it.option * d + c] - t;
                    loss += diff * diff;
                    up[it.option * d + c] += 2.0 * diff / denom;
                }
                j += 1;
            }
            self.sr.backward_params(&up)?;
            k = j;
        }
        Ok(loss / denom)
    }

    /// Draws `floor(B / N)` transitions per agent and runs one update.
    pub fn update<R: Rng + ?Sized>(&mut self, policies: &dyn PolicyBank, rng: &mut R) -> Result<AdvisorLoss> {
        let owned: Vec<(usize, LocalTransition)> = self
            .buffer
            .sample(self.cfg.batch, true, rng)?
            .items
            .into_iter()
            .map(|(a, t)| (a, t.clone()))
            .collect();
        if owned.is_empty() {
            return Err(Error::Retry("advisor batch is empty".into()));
        }
        let samples: Vec<(usize, &LocalTransition)> = owned.iter().map(|(a, t)| (*a, t)).collect();
        self.update_on(&samples, policies)
    }

    pub fn update_on(&mut self, samples: &[(usize, &LocalTransition)], policies: &dyn PolicyBank) -> Result<AdvisorLoss> {
        let denom = samples.len().max(1) as f64;
        let (reconstruction, reward) = self.representation_backward(samples)?;
        let train = self.scfg.train_embedding;
        self.rep_opt
            .step(&mut rep_params(&mut self.embed, &mut self.decoder, &mut self.weights, train))?;
        if !train {
            self.embed.zero_grad();
        }

        let items = self.sr_items(samples, policies)?;
        let mut value = 0.0;
        if !items.is_empty() {
            value = self.sr_backward(&items, denom)?;
            self.sr_opt.step(&mut self.sr.params_mut())?;
        }

        for &(agent, tr) in samples {
            if let (Some(o), false) = (tr.option, tr.done) {
                let phi_next = self.phi(&tr.next_obs)?;
                let q = self.values_from(&self.successor(&phi_next)?, agent);
                let adv = q[o] - masked_max(&q, &self.view, agent);
                termination_update(&mut self.head, &phi_next, o, adv)?;
            }
        }

        self.updates += 1;
        if self.updates.is_multiple_of(self.cfg.target_interval) {
            self.sr_target.copy_params_from(&self.sr);
            self.syncs.push(self.updates);
        }
        Ok(AdvisorLoss {
            value,
            reconstruction,
            reward,
            matched: items.len(),
            samples: samples.len(),
        })
    }
}

fn rep_params<'a>(embed: &'a mut Mlp, decoder: &'a mut Mlp, weights: &'a mut [ParamTensor], train_embedding: bool) -> Vec<&'a mut ParamTensor> {
    let mut p = decoder.params_mut();
    p.extend(weights.iter_mut());
    if train_embedding {
        p.extend(embed.params_mut());
    }
    p
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

impl LocalAdvisor for Sro {
    fn num_options(&self) -> usize {
        self.view.num_options
    }

    fn head(&self, _agent: usize) -> &TerminationHead {
        &self.head
    }

    fn termination_input(&self, _agent: usize, obs: &[f64]) -> Result<Vec<f64>> {
        self.phi(obs)
    }

    fn option_values(&self, agent: usize, obs: &[f64]) -> Result<Vec<f64>> {
        Ok(mask_self(self.q_all(agent, obs)?, agent))
    }
}
