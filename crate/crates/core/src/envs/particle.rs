//! Particle world with cooperative navigation and predator-prey scenarios.
//!
//! Bodies are discs in the square arena `[-arena, arena]^2` driven by a
//! damped double integrator: `v <- v (1 - damping) + accel * u * dt`, speed
//! clamped, `p <- p + v dt`. Positions are clamped to the arena and the
//! velocity component pushing outward is zeroed. Agents pass through each
//! other (collisions are counted and penalised, not resolved); obstacles in
//! predator-prey are solid.
//!
//! Observations:
//! - coop-nav, `n` agents and `n` landmarks: own velocity (2), own position
//!   (2), landmark offsets (2n), other agents' offsets (2(n-1)) and relative
//!   velocities (2(n-1)). Four agents give 24 values.
//! - predator-prey, `m` predators and `k` obstacles: own velocity (2), own
//!   position (2), obstacle offsets (2k), other predators' offsets
//!   (2(m-1)), prey offset (2), prey velocity (2). Three predators and three
//!   obstacles give 18 values.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{check_actions, MultiAgentEnv, PosgSpec, StepInfo, StepResult};
use crate::{Error, Result};

/// No-op, +x, -x, +y, -y.
pub const PARTICLE_ACTIONS: usize = 5;

#[derive(Debug, Clone, PartialEq)]
pub struct ParticleConfig {
    pub damping: f64,
    pub dt: f64,
    pub arena: f64,
    pub agent_accel: f64,
    pub agent_max_speed: f64,
    pub agent_radius: f64,
    pub prey_accel: f64,
    pub prey_max_speed: f64,
    pub prey_radius: f64,
    pub obstacle_radius: f64,
    pub prey_epsilon: f64,
    pub collision_penalty: f64,
    pub hit_reward: f64,
}

impl Default for ParticleConfig {
    fn default() -> Self {
        Self {
            damping: 0.25,
            dt: 0.1,
            arena: 1.0,
            agent_accel: 5.0,
            agent_max_speed: 1.0,
            agent_radius: 0.15,
            prey_accel: 4.0,
            prey_max_speed: 1.3,
            prey_radius: 0.05,
            obstacle_radius: 0.2,
            prey_epsilon: 0.1,
            collision_penalty: 1.0,
            hit_reward: 10.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ParticleScenario {
    CoopNav { agents: usize },
    PredatorPrey { predators: usize, obstacles: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
struct Body {
    pos: [f64; 2],
    vel: [f64; 2],
}

fn dist(a: [f64; 2], b: [f64; 2]) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt()
}

fn action_dir(a: usize) -> [f64; 2] {
    match a {
        1 => [1.0, 0.0],
        2 => [-1.0, 0.0],
        3 => [0.0, 1.0],
        4 => [0.0, -1.0],
        _ => [0.0, 0.0],
    }
}

pub struct ParticleWorld {
    scenario: ParticleScenario,
    config: ParticleConfig,
    spec: PosgSpec,
    agents: Vec<Body>,
    prey: Body,
    /// Landmarks (coop-nav) or obstacles (predator-prey).
    fixed: Vec<[f64; 2]>,
    steps: usize,
    done: bool,
    rng: ChaCha8Rng,
}

impl ParticleWorld {
    pub fn new(scenario: ParticleScenario, config: ParticleConfig, gamma: f64, episode_cap: usize, seed: u64) -> Result<Self> {
        let (n, obs_dim, state_dim) = match scenario {
            ParticleScenario::CoopNav { agents } => (agents, 4 + 2 * agents + 4 * agents.saturating_sub(1), 4 * agents + 2 * agents),
            ParticleScenario::PredatorPrey { predators, obstacles } => (
                predators,
                4 + 2 * obstacles + 2 * predators.saturating_sub(1) + 4,
                4 * predators + 4 + 2 * obstacles,
            ),
        };
        if !(config.dt > 0.0) || !(0.0..1.0).contains(&config.damping) || !(config.arena > 0.0) {
            return Err(Error::config("particle physics needs dt > 0, damping in [0, 1) and arena > 0"));
        }
        let spec = PosgSpec {
            num_agents: n,
            num_actions: vec![PARTICLE_ACTIONS; n],
            obs_dims: vec![obs_dim; n],
            state_dim,
            gamma,
            episode_cap,
        };
        spec.validate()?;
        let fixed_count = match scenario {
            ParticleScenario::CoopNav { agents } => agents,
            ParticleScenario::PredatorPrey { obstacles, .. } => obstacles,
        };
        let mut world = Self {
            scenario,
            config,
            spec,
            agents: vec![Body::default(); n],
            prey: Body::default(),
            fixed: vec![[0.0; 2]; fixed_count],
            steps: 0,
            done: false,
            rng: ChaCha8Rng::seed_from_u64(seed),
        };
        world.randomize();
        Ok(world)
    }

    fn randomize(&mut self) {
        let a = self.config.arena;
        for b in &mut self.agents {
            *b = Body {
                pos: [self.rng.gen_range(-a..a), self.rng.gen_range(-a..a)],
                vel: [0.0; 2],
            };
        }
        let f = 0.9 * a;
        for l in &mut self.fixed {
            *l = [self.rng.gen_range(-f..f), self.rng.gen_range(-f..f)];
        }
        self.prey = Body {
            pos: [self.rng.gen_range(-a..a), self.rng.gen_range(-a..a)],
            vel: [0.0; 2],
        };
        if self.is_predator_prey() {
            let r = self.config.agent_radius;
            for k in 0..self.agents.len() {
                self.agents[k] = self.resolve_obstacles(self.agents[k], r);
            }
            self.prey = self.resolve_obstacles(self.prey, self.config.prey_radius);
        }
    }

    fn is_predator_prey(&self) -> bool {
        matches!(self.scenario, ParticleScenario::PredatorPrey { .. })
    }

    pub fn scenario(&self) -> ParticleScenario {
        self.scenario
    }

    pub fn agent_positions(&self) -> Vec<[f64; 2]> {
        self.agents.iter().map(|b| b.pos).collect()
    }

    pub fn agent_velocities(&self) -> Vec<[f64; 2]> {
        self.agents.iter().map(|b| b.vel).collect()
    }

    pub fn landmarks(&self) -> &[[f64; 2]] {
        &self.fixed
    }

    pub fn prey_position(&self) -> [f64; 2] {
        self.prey.pos
    }

    /// Places agents and landmarks/obstacles directly, with zero velocity.
    pub fn set_layout(&mut self, agents: &[[f64; 2]], fixed: &[[f64; 2]]) -> Result<()> {
        if agents.len() != self.agents.len() || fixed.len() != self.fixed.len() {
            return Err(Error::usage("wrong number of bodies"));
        }
        for (b, &p) in self.agents.iter_mut().zip(agents) {
            *b = Body { pos: p, vel: [0.0; 2] };
        }
        self.fixed = fixed.to_vec();
        Ok(())
    }

    pub fn set_prey(&mut self, pos: [f64; 2]) {
        self.prey = Body { pos, vel: [0.0; 2] };
    }

    fn integrate(&self, mut body: Body, action: usize, accel: f64, max_speed: f64) -> Body {
        let c = &self.config;
        let dir = action_dir(action);
        for k in 0..2 {
            body.vel[k] = body.vel[k] * (1.0 - c.damping) + accel * dir[k] * c.dt;
        }
        let speed = (body.vel[0].powi(2) + body.vel[1].powi(2)).sqrt();
        if speed > max_speed {
            body.vel[0] *= max_speed / speed;
            body.vel[1] *= max_speed / speed;
        }
        for k in 0..2 {
            body.pos[k] += body.vel[k] * c.dt;
            if body.pos[k] > c.arena {
                body.pos[k] = c.arena;
                body.vel[k] = body.vel[k].min(0.0);
            } else if body.pos[k] < -c.arena {
                body.pos[k] = -c.arena;
                body.vel[k] = body.vel[k].max(0.0);
            }
        }
        body
    }

    fn resolve_obstacles(&self, mut body: Body, radius: f64) -> Body {
        if !self.is_predator_prey() {
            return body;
        }
        for &o in &self.fixed {
            let min = radius + self.config.obstacle_radius;
            let d = dist(body.pos, o);
            if d < min {
                let normal = if d > 1e-12 {
                    [(body.pos[0] - o[0]) / d, (body.pos[1] - o[1]) / d]
                } else {
                    [1.0, 0.0]
                };
                let a = self.config.arena;
                body.pos = [
                    (o[0] + normal[0] * min).clamp(-a, a),
                    (o[1] + normal[1] * min).clamp(-a, a),
                ];
                let inward = body.vel[0] * normal[0] + body.vel[1] * normal[1];
                if inward < 0.0 {
                    body.vel[0] -= inward * normal[0];
                    body.vel[1] -= inward * normal[1];
                }
            }
        }
        body
    }

    fn prey_action(&mut self) -> usize {
        if self.rng.gen::<f64>() < self.config.prey_epsilon {
            return self.rng.gen_range(0..PARTICLE_ACTIONS);
        }
        let mut best = (0, f64::NEG_INFINITY);
        for a in 0..PARTICLE_ACTIONS {
            let next = self.integrate(self.prey, a, self.config.prey_accel, self.config.prey_max_speed);
            let nearest = self
                .agents
                .iter()
                .map(|b| dist(next.pos, b.pos))
                .fold(f64::INFINITY, f64::min);
            if nearest > best.1 {
                best = (a, nearest);
            }
        }
        best.0
    }

    fn collisions(&self) -> Vec<Vec<bool>> {
        let n = self.agents.len();
        let r = 2.0 * self.config.agent_radius;
        let mut hit = vec![vec![false; n]; n];
        for i in 0..n {
            for j in (i + 1)..n {
                if dist(self.agents[i].pos, self.agents[j].pos) < r {
                    hit[i][j] = true;
                    hit[j][i] = true;
                }
            }
        }
        hit
    }

    fn nearest_landmark(&self, p: [f64; 2]) -> f64 {
        self.fixed.iter().map(|&l| dist(p, l)).fold(f64::INFINITY, f64::min)
    }

    fn result(&self, rewards: Vec<f64>, catches: u32) -> StepResult {
        let collisions = self.collisions().iter().flatten().filter(|&&c| c).count() as u32 / 2;
        let landmark_distance = match self.scenario {
            ParticleScenario::CoopNav { .. } => {
                self.agents.iter().map(|b| self.nearest_landmark(b.pos)).sum::<f64>() / self.agents.len() as f64
            }
            ParticleScenario::PredatorPrey { .. } => 0.0,
        };
        StepResult {
            observations: (0..self.agents.len()).map(|i| self.observe(i)).collect(),
            rewards,
            state: self.global_state(),
            done: self.done,
            info: StepInfo {
                step: self.steps,
                catches,
                collisions,
                landmark_distance,
            },
        }
    }
}

impl MultiAgentEnv for ParticleWorld {
    fn spec(&self) -> &PosgSpec {
        &self.spec
    }

    fn reset(&mut self) -> StepResult {
        self.randomize();
        self.steps = 0;
        self.done = false;
        self.result(vec![0.0; self.agents.len()], 0)
    }

    fn step(&mut self, actions: &[usize]) -> Result<StepResult> {
        if self.done {
            return Err(Error::usage("step called on a finished episode"));
        }
        check_actions(&self.spec, actions)?;
        let prey_action = if self.is_predator_prey() { self.prey_action() } else { 0 };
        let (accel, max_speed, radius) = (self.config.agent_accel, self.config.agent_max_speed, self.config.agent_radius);
        for k in 0..self.agents.len() {
            let moved = self.integrate(self.agents[k], actions[k], accel, max_speed);
            self.agents[k] = self.resolve_obstacles(moved, radius);
        }
        self.steps += 1;
        self.done = self.steps >= self.spec.episode_cap;
        let n = self.agents.len();
        match self.scenario {
            ParticleScenario::CoopNav { .. } => {
                let hits = self.collisions();
                let rewards = (0..n)
                    .map(|i| {
                        let bumps = hits[i].iter().filter(|&&h| h).count() as f64;
                        -self.nearest_landmark(self.agents[i].pos) - self.config.collision_penalty * bumps
                    })
                    .collect();
                Ok(self.result(rewards, 0))
            }
            ParticleScenario::PredatorPrey { .. } => {
                let moved = self.integrate(self.prey, prey_action, self.config.prey_accel, self.config.prey_max_speed);
                self.prey = self.resolve_obstacles(moved, self.config.prey_radius);
                let reach = self.config.agent_radius + self.config.prey_radius;
                let catches = self.agents.iter().filter(|b| dist(b.pos, self.prey.pos) < reach).count() as u32;
                let r = self.config.hit_reward * catches as f64;
                Ok(self.result(vec![r; n], catches))
            }
        }
    }

    fn observe(&self, agent: usize) -> Vec<f64> {
        let me = self.agents[agent];
        let mut out = Vec::with_capacity(self.spec.obs_dims[agent]);
        out.extend_from_slice(&me.vel);
        out.extend_from_slice(&me.pos);
        for l in &self.fixed {
            out.push(l[0] - me.pos[0]);
            out.push(l[1] - me.pos[1]);
        }
        let others = self.agents.iter().enumerate().filter(|(j, _)| *j != agent);
        for (_, b) in others.clone() {
            out.push(b.pos[0] - me.pos[0]);
            out.push(b.pos[1] - me.pos[1]);
        }
        match self.scenario {
            ParticleScenario::CoopNav { .. } => {
                for (_, b) in others {
                    out.push(b.vel[0] - me.vel[0]);
                    out.push(b.vel[1] - me.vel[1]);
                }
            }
            ParticleScenario::PredatorPrey { .. } => {
                out.push(self.prey.pos[0] - me.pos[0]);
                out.push(self.prey.pos[1] - me.pos[1]);
                out.extend_from_slice(&self.prey.vel);
            }
        }
        out
    }

    /// Agent positions and velocities, then prey (predator-prey only), then
    /// landmark or obstacle positions.
    fn global_state(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.spec.state_dim);
        for b in &self.agents {
            out.extend_from_slice(&b.pos);
            out.extend_from_slice(&b.vel);
        }
        if self.is_predator_prey() {
            out.extend_from_slice(&self.prey.pos);
            out.extend_from_slice(&self.prey.vel);
        }
        for l in &self.fixed {
            out.extend_from_slice(l);
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn coop(seed: u64) -> ParticleWorld {
        ParticleWorld::new(ParticleScenario::CoopNav { agents: 4 }, ParticleConfig::default(), 0.99, 100, seed).unwrap()
    }

    fn tag(seed: u64) -> ParticleWorld {
        ParticleWorld::new(
            ParticleScenario::PredatorPrey { predators: 3, obstacles: 3 },
            ParticleConfig::default(),
            0.99,
            100,
            seed,
        )
        .unwrap()
    }

    #[test]
    fn coop_nav_observations_have_24_values() {
        let r = coop(1).reset();
        assert_eq!(r.observations.len(), 4);
        assert!(r.observations.iter().all(|o| o.len() == 24));
    }

    #[test]
    fn predator_observations_have_18_values() {
        let r = tag(1).reset();
        assert_eq!(r.observations.len(), 3);
        assert!(r.observations.iter().all(|o| o.len() == 18));
    }

    #[test]
    fn reset_is_deterministic_per_seed() {
        assert_eq!(coop(9).reset(), coop(9).reset());
        assert_eq!(tag(9).reset(), tag(9).reset());
        assert_ne!(coop(9).reset(), coop(10).reset());
    }

    #[test]
    fn collision_costs_each_agent_one_plus_distance() {
        let mut w = coop(2);
        w.reset();
        let landmarks = [[0.5, 0.5], [-0.5, -0.5], [0.9, -0.9], [-0.9, 0.9]];
        w.set_layout(&[[0.0, 0.0], [0.1, 0.0], [0.9, -0.9], [-0.9, 0.9]], &landmarks).unwrap();
        let r = w.step(&[0, 0, 0, 0]).unwrap();
        let d0 = ((0.5f64).powi(2) * 2.0).sqrt();
        let d1 = ((0.4f64).powi(2) + 0.25).sqrt();
        assert!((r.rewards[0] - (-1.0 - d0)).abs() < 1e-12);
        assert!((r.rewards[1] - (-1.0 - d1)).abs() < 1e-12);
        assert_eq!(r.info.collisions, 1);
    }

    #[test]
    fn agent_on_landmark_has_zero_distance_cost() {
        let mut w = coop(3);
        w.reset();
        let landmarks = [[0.5, 0.5], [-0.5, -0.5], [0.5, -0.5], [-0.5, 0.5]];
        w.set_layout(&landmarks, &landmarks).unwrap();
        let r = w.step(&[0, 0, 0, 0]).unwrap();
        assert_eq!(r.rewards, vec![0.0; 4]);
        assert_eq!(r.info.landmark_distance, 0.0);
    }

    #[test]
    fn hitting_the_prey_pays_every_predator() {
        let mut w = tag(4);
        w.reset();
        let far = [[0.9, 0.9], [0.9, 0.6], [0.6, 0.9]];
        w.set_layout(&[[-0.5, -0.5], [-0.9, 0.9], [0.9, -0.9]], &far).unwrap();
        w.set_prey([-0.5, -0.45]);
        w.config.prey_epsilon = 0.0;
        w.config.prey_accel = 0.0;
        let r = w.step(&[0, 0, 0]).unwrap();
        assert_eq!(r.info.catches, 1);
        assert_eq!(r.rewards, vec![10.0; 3]);
    }

    #[test]
    fn episode_ends_at_cap() {
        let mut w = coop(5);
        w.reset();
        for t in 1..=100 {
            let r = w.step(&[1, 2, 3, 4]).unwrap();
            assert_eq!(r.done, t == 100);
        }
        assert!(matches!(w.step(&[0; 4]), Err(Error::Usage(_))));
    }

    #[test]
    fn obstacles_are_solid() {
        let mut w = tag(6);
        w.reset();
        let obstacles = [[0.0, 0.0], [0.9, 0.9], [-0.9, -0.9]];
        w.set_layout(&[[-0.5, 0.0], [0.5, 0.9], [-0.5, 0.9]], &obstacles).unwrap();
        for _ in 0..40 {
            w.step(&[1, 0, 0]).unwrap();
            let p = w.agent_positions()[0];
            assert!(dist(p, [0.0, 0.0]) >= 0.35 - 1e-9);
        }
    }

    proptest! {
        #[test]
        fn bodies_stay_finite_and_inside_arena(seed in 0u64..1000, acts in proptest::collection::vec(0usize..5, 400)) {
            for mut w in [coop(seed), tag(seed)] {
                w.reset();
                let n = w.spec().num_agents;
                for chunk in acts.chunks(n) {
                    if chunk.len() < n { break; }
                    let r = w.step(chunk).unwrap();
                    for (p, v) in w.agent_positions().iter().zip(w.agent_velocities()) {
                        prop_assert!(p[0].abs() <= 1.0 && p[1].abs() <= 1.0);
                        prop_assert!(v.iter().all(|x| x.is_finite()));
                    }
                    prop_assert!(r.observations.iter().flatten().all(|x| x.is_finite()));
                    if r.done { break; }
                }
            }
        }
    }
}
