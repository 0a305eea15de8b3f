use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::nnkernel::{log_softmax, softmax_unchecked, Activation, Head, Mlp, MlpSpec, ParamTensor, Parameterized};
use crate::{Error, Result};

/// Categorical policy. The network emits logits; probabilities are their
/// softmax at temperature one.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyNet {
    net: Mlp,
}

impl PolicyNet {
    pub fn new<R: Rng + ?Sized>(obs_dim: usize, hidden: &[usize], actions: usize, activation: Activation, rng: &mut R) -> Result<Self> {
        if actions == 0 {
            return Err(Error::config("a policy needs at least one action"));
        }
        let spec = MlpSpec::new(obs_dim, hidden, actions, activation, Head::Linear);
        Ok(Self { net: Mlp::new(&spec, rng)? })
    }

    pub fn from_mlp(net: Mlp) -> Result<Self> {
        if net.head() != Head::Linear {
            return Err(Error::config("policy networks must emit raw logits"));
        }
        Ok(Self { net })
    }

    pub fn num_actions(&self) -> usize {
        self.net.output_dim()
    }

    pub fn obs_dim(&self) -> usize {
        self.net.input_dim()
    }

    pub fn logits(&self, obs: &[f64]) -> Result<Vec<f64>> {
        self.net.predict(obs)
    }

    pub fn probs(&self, obs: &[f64]) -> Result<Vec<f64>> {
        Ok(softmax_unchecked(&self.logits(obs)?, 1.0))
    }

    pub fn mlp(&self) -> &Mlp {
        &self.net
    }

    pub fn mlp_mut(&mut self) -> &mut Mlp {
        &mut self.net
    }
}

impl Parameterized for PolicyNet {
    fn params_mut(&mut self) -> Vec<&mut ParamTensor> {
        self.net.params_mut()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValueNet {
    net: Mlp,
}

impl ValueNet {
    pub fn new<R: Rng + ?Sized>(obs_dim: usize, hidden: &[usize], activation: Activation, rng: &mut R) -> Result<Self> {
        let spec = MlpSpec::new(obs_dim, hidden, 1, activation, Head::Linear);
        Ok(Self { net: Mlp::new(&spec, rng)? })
    }

    pub fn from_mlp(net: Mlp) -> Result<Self> {
        if net.head() != Head::Linear || net.output_dim() != 1 {
            return Err(Error::config("value networks need one linear output"));
        }
        Ok(Self { net })
    }

    pub fn value(&self, obs: &[f64]) -> Result<f64> {
        Ok(self.net.predict(obs)?[0])
    }

    pub fn mlp(&self) -> &Mlp {
        &self.net
    }

    pub fn mlp_mut(&mut self) -> &mut Mlp {
        &mut self.net
    }
}

impl Parameterized for ValueNet {
    fn params_mut(&mut self) -> Vec<&mut ParamTensor> {
        self.net.params_mut()
    }
}

/// Inverse-CDF draw. Consumes exactly one uniform from `rng`.
pub fn sample_categorical<R: Rng + ?Sized>(probs: &[f64], rng: &mut R) -> usize {
    let u: f64 = rng.gen();
    let mut acc = 0.0;
    for (i, p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return i;
        }
    }
    probs.iter().rposition(|&p| p > 0.0).unwrap_or(probs.len() - 1)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ActSample {
    pub action: usize,
    pub log_prob: f64,
    /// Full distribution at act time, kept as the old-policy snapshot.
    pub probs: Vec<f64>,
}

pub fn act<R: Rng + ?Sized>(policy: &PolicyNet, obs: &[f64], rng: &mut R) -> Result<ActSample> {
    let logits = policy.logits(obs)?;
    let probs = softmax_unchecked(&logits, 1.0);
    let action = sample_categorical(&probs, rng);
    let log_prob = log_softmax(&logits)[action];
    Ok(ActSample { action, log_prob, probs })
}
