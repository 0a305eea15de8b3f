//! Partially observable stochastic games used by the experiments.
//!
//! Every environment exposes discrete per-agent actions, per-agent
//! observation vectors and rewards, and a global state vector for advisors
//! that are allowed to see it.

mod grid;
mod layout;
mod particle;

pub use grid::{GridConfig, GridPursuit, OpponentPolicy, PursuitView, ScriptedEvader, GRID_ACTIONS};
pub use layout::{Cell, GridLayout, GRID9, MEDIUM_CLASSIC, OPEN_CLASSIC};
pub use particle::{ParticleConfig, ParticleScenario, ParticleWorld, PARTICLE_ACTIONS};

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Static description of a game.
#[derive(Debug, Clone, PartialEq)]
pub struct PosgSpec {
    pub num_agents: usize,
    pub num_actions: Vec<usize>,
    pub obs_dims: Vec<usize>,
    pub state_dim: usize,
    pub gamma: f64,
    pub episode_cap: usize,
}

impl PosgSpec {
    pub fn validate(&self) -> Result<()> {
        if self.num_agents < 2 {
            return Err(Error::config(format!("a game needs at least two agents, got {}", self.num_agents)));
        }
        if self.num_actions.len() != self.num_agents || self.obs_dims.len() != self.num_agents {
            return Err(Error::config("per-agent action/observation tables do not match the agent count"));
        }
        if !(self.gamma > 0.0 && self.gamma <= 1.0) {
            return Err(Error::config(format!("discount must lie in (0, 1], got {}", self.gamma)));
        }
        if self.episode_cap == 0 {
            return Err(Error::config("episode cap must be positive"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct StepInfo {
    pub step: usize,
    /// Pac-man catches or predator hits on the prey this step.
    pub catches: u32,
    /// Colliding agent pairs this step.
    pub collisions: u32,
    /// Mean over agents of the distance to the nearest landmark (coop-nav only).
    pub landmark_distance: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepResult {
    pub observations: Vec<Vec<f64>>,
    pub rewards: Vec<f64>,
    pub state: Vec<f64>,
    pub done: bool,
    pub info: StepInfo,
}

pub trait MultiAgentEnv: Send {
    fn spec(&self) -> &PosgSpec;
    fn reset(&mut self) -> StepResult;
    fn step(&mut self, actions: &[usize]) -> Result<StepResult>;
    fn observe(&self, agent: usize) -> Vec<f64>;
    fn global_state(&self) -> Vec<f64>;
}

pub(crate) fn check_actions(spec: &PosgSpec, actions: &[usize]) -> Result<()> {
    if actions.len() != spec.num_agents {
        return Err(Error::usage(format!(
            "expected {} actions, got {}",
            spec.num_agents,
            actions.len()
        )));
    }
    for (i, (&a, &n)) in actions.iter().zip(&spec.num_actions).enumerate() {
        if a >= n {
            return Err(Error::usage(format!("agent {i} action {a} out of range 0..{n}")));
        }
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScenarioKind {
    Grid,
    PredatorPrey,
    CoopNav,
}

impl ScenarioKind {
    pub fn name(self) -> &'static str {
        match self {
            ScenarioKind::Grid => "grid",
            ScenarioKind::PredatorPrey => "predator_prey",
            ScenarioKind::CoopNav => "coop_nav",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "grid" => Ok(ScenarioKind::Grid),
            "predator_prey" => Ok(ScenarioKind::PredatorPrey),
            "coop_nav" => Ok(ScenarioKind::CoopNav),
            other => Err(Error::config(format!("unknown scenario {other:?}"))),
        }
    }
}

/// Everything needed to construct an environment instance.
#[derive(Debug, Clone, PartialEq)]
pub struct EnvConfig {
    pub scenario: ScenarioKind,
    pub layout: String,
    pub num_agents: usize,
    pub gamma: f64,
    pub episode_cap: usize,
    pub opponent_epsilon: f64,
    pub particle: ParticleConfig,
}

pub fn build(config: &EnvConfig, seed: u64) -> Result<Box<dyn MultiAgentEnv>> {
    match config.scenario {
        ScenarioKind::Grid => {
            let layout = GridLayout::load(&config.layout)?;
            let grid = GridConfig {
                gamma: config.gamma,
                episode_cap: config.episode_cap,
                ..GridConfig::default()
            };
            let opponent = Box::new(ScriptedEvader::new(config.opponent_epsilon));
            Ok(Box::new(GridPursuit::new(layout, grid, opponent, seed)?))
        }
        ScenarioKind::PredatorPrey | ScenarioKind::CoopNav => {
            let scenario = if config.scenario == ScenarioKind::CoopNav {
                ParticleScenario::CoopNav {
                    agents: config.num_agents,
                }
            } else {
                ParticleScenario::PredatorPrey {
                    predators: config.num_agents,
                    obstacles: 3,
                }
            };
            let mut physics = config.particle.clone();
            physics.prey_epsilon = config.opponent_epsilon;
            Ok(Box::new(ParticleWorld::new(
                scenario,
                physics,
                config.gamma,
                config.episode_cap,
                seed,
            )?))
        }
    }
}
