//! Brute-force references for the learned quantities: tabular value and
//! option-value iteration, the closed-form successor matrix and joint
//! option enumeration.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::advisors::JointIndex;
use crate::{Error, Result};

/// Largest state-option table the iterative oracles accept.
pub const MAX_TABLE: usize = 10_000;
const RESIDUAL: f64 = 1e-10;
const MAX_SWEEPS: usize = 10_000_000;

/// One possible result of taking an action: `(probability, next state, reward, terminal)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Outcome(pub f64, pub usize, pub f64, pub bool);

/// Finite MDP with frozen option policies and termination probabilities.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TabularOptionProblem {
    pub states: usize,
    pub actions: usize,
    pub gamma: f64,
    /// `transitions[s][a]` lists the outcomes of action `a` in state `s`.
    pub transitions: Vec<Vec<Vec<Outcome>>>,
    /// `option_policies[w][s][a]`.
    pub option_policies: Vec<Vec<Vec<f64>>>,
    /// `betas[s][w]`, the probability that option `w` stops on arrival at `s`.
    pub betas: Vec<Vec<f64>>,
    /// Agent whose own option is excluded from re-selection, if any.
    #[serde(default)]
    pub mask_agent: Option<usize>,
}

impl TabularOptionProblem {
    pub fn deterministic(
        states: usize,
        actions: usize,
        gamma: f64,
        table: Vec<Vec<(usize, f64, bool)>>,
        option_policies: Vec<Vec<Vec<f64>>>,
        betas: Vec<Vec<f64>>,
    ) -> Self {
        let transitions = table
            .into_iter()
            .map(|row| row.into_iter().map(|(n, r, d)| vec![Outcome(1.0, n, r, d)]).collect())
            .collect();
        Self {
            states,
            actions,
            gamma,
            transitions,
            option_policies,
            betas,
            mask_agent: None,
        }
    }

    pub fn options(&self) -> usize {
        self.option_policies.len()
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.options();
        if self.states == 0 || self.actions == 0 || n == 0 {
            return Err(Error::config("tabular problem needs states, actions and options"));
        }
        if self.states * n > MAX_TABLE {
            return Err(Error::config(format!(
                "{} state-option pairs exceed the oracle limit of {MAX_TABLE}",
                self.states * n
            )));
        }
        if !(self.gamma >= 0.0 && self.gamma < 1.0) {
            return Err(Error::config("oracle discount must lie in [0, 1)"));
        }
        if self.transitions.len() != self.states || self.transitions.iter().any(|r| r.len() != self.actions) {
            return Err(Error::config("transition table must be states x actions"));
        }
        for (s, row) in self.transitions.iter().enumerate() {
            for (a, outs) in row.iter().enumerate() {
                let total: f64 = outs.iter().map(|o| o.0).sum();
                if (total - 1.0).abs() > 1e-9 || outs.iter().any(|o| o.1 >= self.states || o.0 < 0.0) {
                    return Err(Error::config(format!("outcomes of state {s} action {a} are not a distribution over states")));
                }
            }
        }
        for (w, pol) in self.option_policies.iter().enumerate() {
            if pol.len() != self.states || pol.iter().any(|p| p.len() != self.actions || (p.iter().sum::<f64>() - 1.0).abs() > 1e-9) {
                return Err(Error::config(format!("option {w} policy must be a distribution per state")));
            }
        }
        if self.betas.len() != self.states || self.betas.iter().any(|b| b.len() != n || b.iter().any(|x| !(0.0..=1.0).contains(x))) {
            return Err(Error::config("betas must be states x options probabilities"));
        }
        if let Some(m) = self.mask_agent {
            if m >= n || n < 2 {
                return Err(Error::config("masked agent must leave at least one option"));
            }
        }
        Ok(())
    }
}

/// Option values `Q[s][w]` of the semi-MDP, iterated to a residual below 1e-10.
///
/// `Q(s, w) = sum_a pi_w(a|s) sum_s' P [r + gamma (1 - done) U(s', w)]` with
/// `U(s', w) = (1 - beta(s', w)) Q(s', w) + beta(s', w) max_{w' allowed} Q(s', w')`.
pub fn option_value_iteration(problem: &TabularOptionProblem, mask_agent: Option<usize>) -> Result<Vec<Vec<f64>>> {
    problem.validate()?;
    let mask = mask_agent.or(problem.mask_agent);
    let n = problem.options();
    let allowed: Vec<usize> = (0..n).filter(|&w| Some(w) != mask).collect();
    if allowed.is_empty() {
        return Err(Error::config("no option left after masking"));
    }
    let mut q = vec![vec![0.0; n]; problem.states];
    for _ in 0..MAX_SWEEPS {
        let mut next = vec![vec![0.0; n]; problem.states];
        let best: Vec<f64> = q
            .iter()
            .map(|row| allowed.iter().map(|&w| row[w]).fold(f64::NEG_INFINITY, f64::max))
            .collect();
        for s in 0..problem.states {
            for w in 0..n {
                let mut v = 0.0;
                for a in 0..problem.actions {
                    let pa = problem.option_policies[w][s][a];
                    if pa == 0.0 {
                        continue;
                    }
                    for &Outcome(p, s2, r, done) in &problem.transitions[s][a] {
                        let cont = if done {
                            0.0
                        } else {
                            let b = problem.betas[s2][w];
                            (1.0 - b) * q[s2][w] + b * best[s2]
                        };
                        v += pa * p * (r + problem.gamma * cont);
                    }
                }
                next[s][w] = v;
            }
        }
        let residual = q
            .iter()
            .flatten()
            .zip(next.iter().flatten())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        q = next;
        if residual < RESIDUAL {
            return Ok(q);
        }
    }
    Err(Error::numeric("option-value iteration did not converge"))
}

/// Optimal state values of a finite MDP given `transitions[s][a]`.
pub fn value_iteration(transitions: &[Vec<Vec<Outcome>>], gamma: f64) -> Result<Vec<f64>> {
    if !(0.0..1.0).contains(&gamma) {
        return Err(Error::config("value iteration needs a discount in [0, 1)"));
    }
    let states = transitions.len();
    let mut v = vec![0.0; states];
    for _ in 0..MAX_SWEEPS {
        let next: Vec<f64> = transitions
            .iter()
            .map(|row| {
                row.iter()
                    .map(|outs| outs.iter().map(|&Outcome(p, s2, r, d)| p * (r + if d { 0.0 } else { gamma * v[s2] })).sum::<f64>())
                    .fold(f64::NEG_INFINITY, f64::max)
            })
            .collect();
        let residual = v.iter().zip(&next).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        v = next;
        if residual < RESIDUAL {
            return Ok(v);
        }
    }
    Err(Error::numeric("value iteration did not converge"))
}

/// `V = (I - gamma P)^-1 r` for a fixed policy's transition matrix.
pub fn policy_evaluation(p: &[Vec<f64>], rewards: &[f64], gamma: f64) -> Result<Vec<f64>> {
    let m = successor_matrix(p, gamma)?;
    Ok((0..rewards.len()).map(|s| (0..rewards.len()).map(|k| m[s][k] * rewards[k]).sum()).collect())
}

/// Successor matrix `M = (I - gamma P)^-1`, row `s` being the discounted
/// occupancy of every state when starting from `s`.
pub fn successor_matrix(p: &[Vec<f64>], gamma: f64) -> Result<Vec<Vec<f64>>> {
    let n = p.len();
    if n == 0 || p.iter().any(|row| row.len() != n) {
        return Err(Error::config("transition matrix must be square and nonempty"));
    }
    let mut a = DMatrix::<f64>::identity(n, n);
    for i in 0..n {
        for j in 0..n {
            a[(i, j)] -= gamma * p[i][j];
        }
    }
    let inv = a
        .try_inverse()
        .ok_or_else(|| Error::numeric("I - gamma P is singular"))?;
    Ok((0..n).map(|i| (0..n).map(|j| inv[(i, j)]).collect()).collect())
}

/// Every joint option as an agent-indexed tuple, in flat-index order.
pub fn enumerate_joint_options(agents: usize) -> Result<Vec<Vec<usize>>> {
    let idx = JointIndex::new(agents)?;
    (0..idx.size()).map(|k| idx.decode(k)).collect()
}
