//! Two-ghost pursuit of a scripted pac-man on an ASCII maze.
//!
//! Observation of ghost `i`, for a layout with `F` free cells and `P` pill
//! cells and `n` ghosts:
//!
//! ```text
//! [ one-hot own cell (F) | one-hot cell of each teammate, by index (F each)
//!   | one-hot pac-man cell (F) | pill still present, per pill cell (P) ]
//! ```
//!
//! so the length is `(n + 1) * F + P`. Walls are implicit: cells are indexed
//! over free space only. The bundled `open_classic` (F = 20, P = 8) and
//! `medium_classic` (F = 18, P = 8) layouts give 68 and 62 dimensions for two
//! ghosts.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::layout::{Cell, GridLayout};
use super::{check_actions, MultiAgentEnv, PosgSpec, StepInfo, StepResult};
use crate::{Error, Result};

/// Stay, up, down, left, right.
pub const GRID_ACTIONS: usize = 5;

#[derive(Debug, Clone, PartialEq)]
pub struct GridConfig {
    pub gamma: f64,
    pub episode_cap: usize,
    pub step_penalty: f64,
    pub catch_reward: f64,
}

impl Default for GridConfig {
    fn default() -> Self {
        Self {
            gamma: 0.99,
            episode_cap: 100,
            step_penalty: 0.01,
            catch_reward: 5.0,
        }
    }
}

/// Read-only game state handed to the opponent.
pub struct PursuitView<'a> {
    pub layout: &'a GridLayout,
    pub pacman: Cell,
    pub ghosts: Vec<Cell>,
    distances: &'a Distances,
}

impl PursuitView<'_> {
    /// Shortest-path distance through free space.
    pub fn distance(&self, a: Cell, b: Cell) -> u32 {
        self.distances.between(a, b)
    }
}

/// Plug-in point for the pac-man controller.
pub trait OpponentPolicy: Send {
    fn act(&mut self, view: &PursuitView<'_>, rng: &mut ChaCha8Rng) -> usize;
}

/// Moves to maximise the distance to the nearest ghost (ties: larger total
/// distance, then lowest action id); uniformly random with probability `epsilon`.
#[derive(Debug, Clone)]
pub struct ScriptedEvader {
    pub epsilon: f64,
}

impl ScriptedEvader {
    pub fn new(epsilon: f64) -> Self {
        Self { epsilon }
    }
}

impl OpponentPolicy for ScriptedEvader {
    fn act(&mut self, view: &PursuitView<'_>, rng: &mut ChaCha8Rng) -> usize {
        if rng.gen::<f64>() < self.epsilon {
            return rng.gen_range(0..GRID_ACTIONS);
        }
        let mut best = (0, 0, 0);
        for a in 0..GRID_ACTIONS {
            let to = view.layout.neighbor(view.pacman, a);
            let nearest = view.ghosts.iter().map(|&g| view.distance(to, g)).min().unwrap_or(0);
            let total: u32 = view.ghosts.iter().map(|&g| view.distance(to, g)).sum();
            if a == 0 || (nearest, total) > (best.1, best.2) {
                best = (a, nearest, total);
            }
        }
        best.0
    }
}

/// All-pairs BFS distances over free cells.
struct Distances {
    width: usize,
    index: Vec<Option<usize>>,
    free: usize,
    table: Vec<u32>,
}

impl Distances {
    fn new(layout: &GridLayout, free: &[Cell]) -> Self {
        let mut index = vec![None; layout.width * layout.height];
        for (k, c) in free.iter().enumerate() {
            index[c.0 * layout.width + c.1] = Some(k);
        }
        let n = free.len();
        let mut table = vec![u32::MAX; n * n];
        for (src, &start) in free.iter().enumerate() {
            let row = &mut table[src * n..(src + 1) * n];
            row[src] = 0;
            let mut queue = std::collections::VecDeque::from([start]);
            while let Some(cell) = queue.pop_front() {
                let d = row[index[cell.0 * layout.width + cell.1].unwrap()];
                for a in 1..GRID_ACTIONS {
                    let next = layout.neighbor(cell, a);
                    let k = index[next.0 * layout.width + next.1].unwrap();
                    if row[k] == u32::MAX {
                        row[k] = d + 1;
                        queue.push_back(next);
                    }
                }
            }
        }
        Self {
            width: layout.width,
            index,
            free: n,
            table,
        }
    }

    fn idx(&self, c: Cell) -> usize {
        self.index[c.0 * self.width + c.1].expect("cell is free")
    }

    fn between(&self, a: Cell, b: Cell) -> u32 {
        self.table[self.idx(a) * self.free + self.idx(b)]
    }
}

pub struct GridPursuit {
    layout: GridLayout,
    config: GridConfig,
    free: Vec<Cell>,
    distances: Distances,
    pill_cells: Vec<Cell>,
    spec: PosgSpec,
    ghosts: Vec<Cell>,
    pacman: Cell,
    pills_left: Vec<bool>,
    steps: usize,
    done: bool,
    opponent: Box<dyn OpponentPolicy>,
    rng: ChaCha8Rng,
}

impl GridPursuit {
    pub fn new(layout: GridLayout, config: GridConfig, opponent: Box<dyn OpponentPolicy>, seed: u64) -> Result<Self> {
        let n = layout.ghost_spawns.len();
        let free = layout.free_cells();
        let dim = (n + 1) * free.len() + layout.pills.len();
        let spec = PosgSpec {
            num_agents: n,
            num_actions: vec![GRID_ACTIONS; n],
            obs_dims: vec![dim; n],
            state_dim: dim,
            gamma: config.gamma,
            episode_cap: config.episode_cap,
        };
        spec.validate()?;
        let distances = Distances::new(&layout, &free);
        Ok(Self {
            ghosts: layout.ghost_spawns.clone(),
            pacman: layout.pacman_spawn,
            pills_left: vec![true; layout.pills.len()],
            pill_cells: layout.pills.clone(),
            layout,
            config,
            free,
            distances,
            spec,
            steps: 0,
            done: false,
            opponent,
            rng: ChaCha8Rng::seed_from_u64(seed),
        })
    }

    pub fn layout(&self) -> &GridLayout {
        &self.layout
    }

    pub fn ghosts(&self) -> &[Cell] {
        &self.ghosts
    }

    pub fn pacman(&self) -> Cell {
        self.pacman
    }

    /// Observation length for `ghosts` learners on `layout`.
    pub fn observation_dim(layout: &GridLayout) -> usize {
        (layout.ghost_spawns.len() + 1) * layout.free_cells().len() + layout.pills.len()
    }

    /// Places the pieces directly (testing and scripted scenarios).
    pub fn set_positions(&mut self, ghosts: &[Cell], pacman: Cell) -> Result<()> {
        if ghosts.len() != self.ghosts.len() {
            return Err(Error::usage("wrong number of ghost positions"));
        }
        for &c in ghosts.iter().chain(std::iter::once(&pacman)) {
            if c.0 >= self.layout.height || c.1 >= self.layout.width || self.layout.is_wall(c) {
                return Err(Error::usage(format!("cell {c:?} is not free")));
            }
        }
        self.ghosts = ghosts.to_vec();
        self.pacman = pacman;
        Ok(())
    }

    pub fn set_pills(&mut self, present: &[bool]) {
        assert_eq!(present.len(), self.pills_left.len());
        self.pills_left = present.to_vec();
    }

    fn encode(&self, first: usize) -> Vec<f64> {
        let f = self.free.len();
        let n = self.ghosts.len();
        let mut out = vec![0.0; self.spec.obs_dims[0]];
        out[self.distances.idx(self.ghosts[first])] = 1.0;
        let mut block = 1;
        for (j, &g) in self.ghosts.iter().enumerate() {
            if j != first {
                out[block * f + self.distances.idx(g)] = 1.0;
                block += 1;
            }
        }
        out[n * f + self.distances.idx(self.pacman)] = 1.0;
        for (k, &present) in self.pills_left.iter().enumerate() {
            if present {
                out[(n + 1) * f + k] = 1.0;
            }
        }
        out
    }

    fn result(&self, rewards: Vec<f64>, caught: bool) -> StepResult {
        StepResult {
            observations: (0..self.ghosts.len()).map(|i| self.observe(i)).collect(),
            rewards,
            state: self.global_state(),
            done: self.done,
            info: StepInfo {
                step: self.steps,
                catches: caught as u32,
                collisions: 0,
                landmark_distance: 0.0,
            },
        }
    }
}

impl MultiAgentEnv for GridPursuit {
    fn spec(&self) -> &PosgSpec {
        &self.spec
    }

    fn reset(&mut self) -> StepResult {
        self.ghosts = self.layout.ghost_spawns.clone();
        self.pacman = self.layout.pacman_spawn;
        self.pills_left = vec![true; self.pill_cells.len()];
        self.steps = 0;
        self.done = false;
        self.result(vec![0.0; self.ghosts.len()], false)
    }

    fn step(&mut self, actions: &[usize]) -> Result<StepResult> {
        if self.done {
            return Err(Error::usage("step called on a finished episode"));
        }
        check_actions(&self.spec, actions)?;
        let view = PursuitView {
            layout: &self.layout,
            pacman: self.pacman,
            ghosts: self.ghosts.clone(),
            distances: &self.distances,
        };
        let pac_action = self.opponent.act(&view, &mut self.rng).min(GRID_ACTIONS - 1);
        let old_ghosts = std::mem::take(&mut self.ghosts);
        let old_pac = self.pacman;
        self.ghosts = old_ghosts
            .iter()
            .zip(actions)
            .map(|(&g, &a)| self.layout.neighbor(g, a))
            .collect();
        self.pacman = self.layout.neighbor(old_pac, pac_action);
        let caught = self
            .ghosts
            .iter()
            .zip(&old_ghosts)
            .any(|(&new, &old)| new == self.pacman || (old == self.pacman && new == old_pac));
        if let Some(k) = self.pill_cells.iter().position(|&c| c == self.pacman) {
            self.pills_left[k] = false;
        }
        self.steps += 1;
        self.done = caught || self.steps >= self.config.episode_cap;
        let r = -self.config.step_penalty + if caught { self.config.catch_reward } else { 0.0 };
        Ok(self.result(vec![r; self.ghosts.len()], caught))
    }

    fn observe(&self, agent: usize) -> Vec<f64> {
        self.encode(agent)
    }

    /// Ghost cells in index order, pac-man cell, remaining pills.
    fn global_state(&self) -> Vec<f64> {
        let f = self.free.len();
        let n = self.ghosts.len();
        let mut out = vec![0.0; self.spec.state_dim];
        for (j, &g) in self.ghosts.iter().enumerate() {
            out[j * f + self.distances.idx(g)] = 1.0;
        }
        out[n * f + self.distances.idx(self.pacman)] = 1.0;
        for (k, &present) in self.pills_left.iter().enumerate() {
            if present {
                out[(n + 1) * f + k] = 1.0;
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::envs::{GRID9, MEDIUM_CLASSIC, OPEN_CLASSIC};

    struct Frozen;
    impl OpponentPolicy for Frozen {
        fn act(&mut self, _: &PursuitView<'_>, _: &mut ChaCha8Rng) -> usize {
            0
        }
    }

    fn game(text: &str, opponent: Box<dyn OpponentPolicy>) -> GridPursuit {
        GridPursuit::new(GridLayout::parse(text).unwrap(), GridConfig::default(), opponent, 7).unwrap()
    }

    #[test]
    fn default_layout_observation_dims() {
        let mut open = game(OPEN_CLASSIC, Box::new(ScriptedEvader::new(0.1)));
        let r = open.reset();
        assert_eq!(r.observations.len(), 2);
        assert!(r.observations.iter().all(|o| o.len() == 68));
        let mut medium = game(MEDIUM_CLASSIC, Box::new(ScriptedEvader::new(0.1)));
        assert!(medium.reset().observations.iter().all(|o| o.len() == 62));
    }

    #[test]
    fn observation_dim_follows_encoding_formula() {
        for text in [OPEN_CLASSIC, MEDIUM_CLASSIC, GRID9] {
            let layout = GridLayout::parse(text).unwrap();
            let f = layout.free_cells().len();
            let expected = 3 * f + layout.pills.len();
            let mut g = game(text, Box::new(Frozen));
            assert_eq!(g.reset().observations[0].len(), expected);
            assert_eq!(GridPursuit::observation_dim(&layout), expected);
        }
    }

    #[test]
    fn reset_is_deterministic_per_seed() {
        let mk = || GridPursuit::new(GridLayout::parse(GRID9).unwrap(), GridConfig::default(), Box::new(ScriptedEvader::new(0.1)), 3).unwrap();
        let (mut a, mut b) = (mk(), mk());
        assert_eq!(a.reset(), b.reset());
        for t in 0..50 {
            let acts = [t % 5, (t * 3) % 5];
            let (ra, rb) = (a.step(&acts).unwrap(), b.step(&acts).unwrap());
            assert_eq!(ra, rb);
            if ra.done {
                break;
            }
        }
    }

    #[test]
    fn catching_pays_both_ghosts_and_ends_episode() {
        let mut g = game("#####\n#GP #\n#G  #\n#####", Box::new(Frozen));
        g.reset();
        let r = g.step(&[4, 0]).unwrap();
        assert!(r.done);
        assert_eq!(r.info.catches, 1);
        assert_eq!(r.rewards, vec![5.0 - 0.01, 5.0 - 0.01]);
    }

    #[test]
    fn swapping_cells_counts_as_a_catch() {
        struct Left;
        impl OpponentPolicy for Left {
            fn act(&mut self, _: &PursuitView<'_>, _: &mut ChaCha8Rng) -> usize {
                3
            }
        }
        let mut g = game("######\n#GP  #\n#G   #\n######", Box::new(Left));
        g.reset();
        let r = g.step(&[4, 0]).unwrap();
        assert!(r.done && r.info.catches == 1);
    }

    #[test]
    fn non_catching_step_costs_a_hundredth() {
        let mut g = game(GRID9, Box::new(Frozen));
        g.reset();
        let r = g.step(&[0, 0]).unwrap();
        assert!(!r.done);
        assert_eq!(r.rewards, vec![-0.01, -0.01]);
    }

    #[test]
    fn episode_is_capped_at_one_hundred_steps() {
        let mut g = game(GRID9, Box::new(Frozen));
        g.reset();
        let mut steps = 0;
        loop {
            let r = g.step(&[0, 0]).unwrap();
            steps += 1;
            if r.done {
                break;
            }
        }
        assert_eq!(steps, 100);
        assert!(matches!(g.step(&[0, 0]), Err(Error::Usage(_))));
    }

    #[test]
    fn ghosts_never_enter_walls() {
        let mut g = game(GRID9, Box::new(ScriptedEvader::new(0.5)));
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..20 {
            g.reset();
            loop {
                let acts = [rng.gen_range(0..5), rng.gen_range(0..5)];
                let r = g.step(&acts).unwrap();
                for &c in g.ghosts().iter().chain(std::iter::once(&g.pacman())) {
                    assert!(!g.layout().is_wall(c));
                }
                if r.done {
                    break;
                }
            }
        }
    }

    #[test]
    fn invalid_actions_are_rejected() {
        let mut g = game(GRID9, Box::new(Frozen));
        g.reset();
        assert!(matches!(g.step(&[0]), Err(Error::Usage(_))));
        assert!(matches!(g.step(&[0, 5]), Err(Error::Usage(_))));
    }

    #[test]
    fn mirrored_states_give_mirrored_encodings() {
        // Symmetric across the vertical axis.
        let text = "#######\n#G . G#\n# # # #\n#  P  #\n#######";
        let layout = GridLayout::parse(text).unwrap();
        let free = layout.free_cells();
        let w = layout.width;
        let mirror = |c: Cell| (c.0, w - 1 - c.1);
        let idx = |c: Cell| free.iter().position(|&x| x == c).unwrap();
        let f = free.len();
        let mut a = game(text, Box::new(Frozen));
        let mut b = game(text, Box::new(Frozen));
        let ghosts = [(1, 1), (3, 2)];
        let pac = (1, 4);
        a.set_positions(&ghosts, pac).unwrap();
        b.set_positions(&[mirror(ghosts[0]), mirror(ghosts[1])], mirror(pac)).unwrap();
        for agent in 0..2 {
            let oa = a.observe(agent);
            let ob = b.observe(agent);
            // apply the mirror map to every one-hot block of `oa`
            let mut expected = vec![0.0; oa.len()];
            for block in 0..3 {
                for (k, &c) in free.iter().enumerate() {
                    expected[block * f + idx(mirror(c))] = oa[block * f + k];
                }
            }
            // the single pill sits on the axis
            expected[3 * f] = oa[3 * f];
            assert_eq!(ob, expected, "agent {agent}");
        }
    }

    #[test]
    fn evader_flees_nearest_ghost() {
        let layout = GridLayout::parse("#######\n#G   P#\n#G    #\n#######").unwrap();
        let free = layout.free_cells();
        let d = Distances::new(&layout, &free);
        let view = PursuitView {
            layout: &layout,
            pacman: (1, 3),
            ghosts: vec![(1, 1), (2, 1)],
            distances: &d,
        };
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert_eq!(ScriptedEvader::new(0.0).act(&view, &mut rng), 4);
    }
}
