//! Run configuration.
//!
//! Files are flat `key = value` lists in TOML syntax: numbers, booleans,
//! quoted strings and integer arrays. An `include = "path"` entry pulls in
//! another file first (relative to the including file) and the including
//! file's keys win. Unknown keys are rejected. Any key can be overridden
//! from the environment as `OPLAB_<KEY>` (upper case), e.g.
//! `OPLAB_TOTAL_STEPS=5000`.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use toml::{Table, Value};

use crate::advisors::{AdvisorConfig, AdvisorKind, LoaMode, SroConfig, WeightMode};
use crate::envs::{EnvConfig, ParticleConfig, ScenarioKind};
use crate::optioncore::XiMode;
use crate::rlcore::{ActorObjective, EpsilonSchedule, PpoConfig};
use crate::{Error, Result};

pub const ENV_PREFIX: &str = "OPLAB_";
const MAX_INCLUDE_DEPTH: usize = 8;

/// Canonical key order; also the set of accepted keys.
pub const KEYS: &[&str] = &[
    "scenario",
    "layout",
    "num_agents",
    "gamma",
    "episode_cap",
    "opponent_epsilon",
    "advisor",
    "seed",
    "total_steps",
    "actor_lr",
    "critic_lr",
    "segment_length",
    "kl_coef",
    "ppo_objective",
    "clip_epsilon",
    "max_grad_norm",
    "normalize_advantages",
    "ppo_epochs",
    "hidden",
    "share_params",
    "advisor_lr",
    "advisor_batch",
    "replay_capacity",
    "target_interval",
    "advisor_hidden",
    "warmup",
    "advisor_update_every",
    "match_threshold",
    "eps_start",
    "eps_finish",
    "eps_anneal",
    "mu",
    "xi",
    "xi_mode",
    "temperature",
    "termination_lr",
    "fixed_beta",
    "transfer",
    "embed_dim",
    "embed_hidden",
    "sr_hidden",
    "weight_mode",
    "train_embedding",
    "loa_mode",
    "trace",
    "update_log_interval",
];

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub scenario: ScenarioKind,
    pub layout: String,
    pub num_agents: usize,
    pub gamma: f64,
    pub episode_cap: usize,
    pub opponent_epsilon: f64,
    pub advisor: AdvisorKind,
    pub seed: u64,
    pub total_steps: u64,
    pub actor_lr: f64,
    pub critic_lr: f64,
    pub segment_length: usize,
    pub kl_coef: f64,
    pub ppo_objective: String,
    pub clip_epsilon: f64,
    /// Zero disables clipping.
    pub max_grad_norm: f64,
    pub normalize_advantages: bool,
    pub ppo_epochs: usize,
    pub hidden: Vec<usize>,
    pub share_params: bool,
    pub advisor_lr: f64,
    pub advisor_batch: usize,
    pub replay_capacity: usize,
    pub target_interval: u64,
    pub advisor_hidden: Vec<usize>,
    pub warmup: usize,
    pub advisor_update_every: u64,
    pub match_threshold: Option<f64>,
    pub eps_start: f64,
    pub eps_finish: f64,
    pub eps_anneal: u64,
    /// `None` derives `6 / total_updates`.
    pub mu: Option<f64>,
    pub xi: f64,
    pub xi_mode: XiMode,
    pub temperature: f64,
    pub termination_lr: f64,
    pub fixed_beta: Option<f64>,
    pub transfer: bool,
    pub embed_dim: usize,
    pub embed_hidden: Vec<usize>,
    pub sr_hidden: Vec<usize>,
    pub weight_mode: WeightMode,
    pub train_embedding: bool,
    pub loa_mode: LoaMode,
    pub trace: bool,
    pub update_log_interval: u64,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self::defaults(ScenarioKind::Grid)
    }
}

impl RunConfig {
    /// Defaults, with the scenario-dependent entries filled in for `scenario`.
    pub fn defaults(scenario: ScenarioKind) -> Self {
        let mixed = scenario == ScenarioKind::CoopNav;
        Self {
            scenario,
            layout: "grid9".into(),
            num_agents: default_agents(scenario),
            gamma: 0.99,
            episode_cap: 100,
            opponent_epsilon: 0.1,
            advisor: AdvisorKind::None,
            seed: 0,
            total_steps: 200_000,
            actor_lr: 3e-4,
            critic_lr: 3e-4,
            segment_length: 32,
            kl_coef: 0.2,
            ppo_objective: "kl_penalty".into(),
            clip_epsilon: 0.2,
            max_grad_norm: 0.0,
            normalize_advantages: false,
            ppo_epochs: 1,
            hidden: vec![64, 64],
            share_params: !mixed,
            advisor_lr: 1e-5,
            advisor_batch: 32,
            replay_capacity: 100_000,
            target_interval: 1000,
            advisor_hidden: vec![64],
            warmup: 1000,
            advisor_update_every: 1,
            match_threshold: None,
            eps_start: 1.0,
            eps_finish: 0.05,
            eps_anneal: 50_000,
            mu: None,
            xi: 0.01,
            xi_mode: XiMode::Margin,
            temperature: 1.0,
            termination_lr: 1e-3,
            fixed_beta: None,
            transfer: true,
            embed_dim: 64,
            embed_hidden: vec![64],
            sr_hidden: vec![64],
            weight_mode: if mixed { WeightMode::PerAgent } else { WeightMode::Shared },
            train_embedding: true,
            loa_mode: if mixed { LoaMode::PerAgent } else { LoaMode::Shared },
            trace: false,
            update_log_interval: 10,
        }
    }

    /// Parses text without includes or environment overrides.
    pub fn parse_str(text: &str) -> Result<Self> {
        let table = parse_table(text)?;
        if table.contains_key("include") {
            return Err(Error::config("include is only available when loading from a file"));
        }
        Self::from_table(&table)
    }

    /// Loads a file, resolving includes and applying `OPLAB_*` overrides.
    pub fn load(path: &Path) -> Result<Self> {
        let mut table = load_table(path, 0)?;
        apply_env_overrides(&mut table, std::env::vars())?;
        Self::from_table(&table)
    }

    /// Builds a config from a merged table. Scenario-dependent defaults
    /// follow the table's scenario unless set explicitly.
    pub fn from_table(table: &Table) -> Result<Self> {
        let known: BTreeSet<&str> = KEYS.iter().copied().collect();
        if let Some(bad) = table.keys().find(|k| !known.contains(k.as_str())) {
            return Err(Error::config(format!("unknown config key {bad:?}")));
        }
        let scenario = match table.get("scenario") {
            Some(v) => ScenarioKind::parse(as_str("scenario", v)?)?,
            None => ScenarioKind::Grid,
        };
        let mut cfg = Self::defaults(scenario);
        for key in KEYS {
            if let Some(v) = table.get(*key) {
                cfg.set(key, v)?;
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }

    fn set(&mut self, key: &str, v: &Value) -> Result<()> {
        match key {
            "scenario" => self.scenario = ScenarioKind::parse(as_str(key, v)?)?,
            "layout" => self.layout = as_str(key, v)?.to_string(),
            "num_agents" => {
                if !is_auto(v) {
                    self.num_agents = as_usize(key, v)?;
                }
            }
            "gamma" => self.gamma = as_f64(key, v)?,
            "episode_cap" => self.episode_cap = as_usize(key, v)?,
            "opponent_epsilon" => self.opponent_epsilon = as_f64(key, v)?,
            "advisor" => self.advisor = AdvisorKind::parse(as_str(key, v)?)?,
            "seed" => self.seed = as_u64(key, v)?,
            "total_steps" => self.total_steps = as_u64(key, v)?,
            "actor_lr" => self.actor_lr = as_f64(key, v)?,
            "critic_lr" => self.critic_lr = as_f64(key, v)?,
            "segment_length" => self.segment_length = as_usize(key, v)?,
            "kl_coef" => self.kl_coef = as_f64(key, v)?,
            "ppo_objective" => self.ppo_objective = as_str(key, v)?.to_string(),
            "clip_epsilon" => self.clip_epsilon = as_f64(key, v)?,
            "max_grad_norm" => self.max_grad_norm = as_f64(key, v)?,
            "normalize_advantages" => self.normalize_advantages = as_bool(key, v)?,
            "ppo_epochs" => self.ppo_epochs = as_usize(key, v)?,
            "hidden" => self.hidden = as_sizes(key, v)?,
            "share_params" => {
                if !is_auto(v) {
                    self.share_params = as_bool(key, v)?;
                }
            }
            "advisor_lr" => self.advisor_lr = as_f64(key, v)?,
            "advisor_batch" => self.advisor_batch = as_usize(key, v)?,
            "replay_capacity" => self.replay_capacity = as_usize(key, v)?,
            "target_interval" => self.target_interval = as_u64(key, v)?,
            "advisor_hidden" => self.advisor_hidden = as_sizes(key, v)?,
            "warmup" => self.warmup = as_usize(key, v)?,
            "advisor_update_every" => self.advisor_update_every = as_u64(key, v)?,
            "match_threshold" => self.match_threshold = as_opt_f64(key, v)?,
            "eps_start" => self.eps_start = as_f64(key, v)?,
            "eps_finish" => self.eps_finish = as_f64(key, v)?,
            "eps_anneal" => self.eps_anneal = as_u64(key, v)?,
            "mu" => self.mu = as_opt_f64(key, v)?,
            "xi" => self.xi = as_f64(key, v)?,
            "xi_mode" => {
                self.xi_mode = match as_str(key, v)? {
                    "margin" => XiMode::Margin,
                    "additive" => XiMode::Additive,
                    other => return Err(Error::config(format!("xi_mode must be margin or additive, got {other:?}"))),
                }
            }
            "temperature" => self.temperature = as_f64(key, v)?,
            "termination_lr" => self.termination_lr = as_f64(key, v)?,
            "fixed_beta" => self.fixed_beta = as_opt_f64(key, v)?,
            "transfer" => self.transfer = as_bool(key, v)?,
            "embed_dim" => self.embed_dim = as_usize(key, v)?,
            "embed_hidden" => self.embed_hidden = as_sizes(key, v)?,
            "sr_hidden" => self.sr_hidden = as_sizes(key, v)?,
            "weight_mode" => {
                if !is_auto(v) {
                    self.weight_mode = match as_str(key, v)? {
                        "shared" => WeightMode::Shared,
                        "per_agent" => WeightMode::PerAgent,
                        other => return Err(Error::config(format!("weight_mode must be shared or per_agent, got {other:?}"))),
                    }
                }
            }
            "train_embedding" => self.train_embedding = as_bool(key, v)?,
            "loa_mode" => {
                if !is_auto(v) {
                    self.loa_mode = match as_str(key, v)? {
                        "shared" => LoaMode::Shared,
                        "per_agent" => LoaMode::PerAgent,
                        other => return Err(Error::config(format!("loa_mode must be shared or per_agent, got {other:?}"))),
                    }
                }
            }
            "trace" => self.trace = as_bool(key, v)?,
            "update_log_interval" => self.update_log_interval = as_u64(key, v)?,
            other => return Err(Error::config(format!("unknown config key {other:?}"))),
        }
        Ok(())
    }

    fn get(&self, key: &str) -> Value {
        let opt = |v: Option<f64>, none: &str| v.map_or(Value::String(none.into()), Value::Float);
        let sizes = |v: &[usize]| Value::Array(v.iter().map(|&x| Value::Integer(x as i64)).collect());
        match key {
            "scenario" => Value::String(self.scenario.name().into()),
            "layout" => Value::String(self.layout.clone()),
            "num_agents" => Value::Integer(self.num_agents as i64),
            "gamma" => Value::Float(self.gamma),
            "episode_cap" => Value::Integer(self.episode_cap as i64),
            "opponent_epsilon" => Value::Float(self.opponent_epsilon),
            "advisor" => Value::String(self.advisor.name().into()),
            "seed" => Value::Integer(self.seed as i64),
            "total_steps" => Value::Integer(self.total_steps as i64),
            "actor_lr" => Value::Float(self.actor_lr),
            "critic_lr" => Value::Float(self.critic_lr),
            "segment_length" => Value::Integer(self.segment_length as i64),
            "kl_coef" => Value::Float(self.kl_coef),
            "ppo_objective" => Value::String(self.ppo_objective.clone()),
            "clip_epsilon" => Value::Float(self.clip_epsilon),
            "max_grad_norm" => Value::Float(self.max_grad_norm),
            "normalize_advantages" => Value::Boolean(self.normalize_advantages),
            "ppo_epochs" => Value::Integer(self.ppo_epochs as i64),
            "hidden" => sizes(&self.hidden),
            "share_params" => Value::Boolean(self.share_params),
            "advisor_lr" => Value::Float(self.advisor_lr),
            "advisor_batch" => Value::Integer(self.advisor_batch as i64),
            "replay_capacity" => Value::Integer(self.replay_capacity as i64),
            "target_interval" => Value::Integer(self.target_interval as i64),
            "advisor_hidden" => sizes(&self.advisor_hidden),
            "warmup" => Value::Integer(self.warmup as i64),
            "advisor_update_every" => Value::Integer(self.advisor_update_every as i64),
            "match_threshold" => opt(self.match_threshold, "auto"),
            "eps_start" => Value::Float(self.eps_start),
            "eps_finish" => Value::Float(self.eps_finish),
            "eps_anneal" => Value::Integer(self.eps_anneal as i64),
            "mu" => opt(self.mu, "auto"),
            "xi" => Value::Float(self.xi),
            "xi_mode" => Value::String(
                match self.xi_mode {
                    XiMode::Margin => "margin",
                    XiMode::Additive => "additive",
                }
                .into(),
            ),
            "temperature" => Value::Float(self.temperature),
            "termination_lr" => Value::Float(self.termination_lr),
            "fixed_beta" => opt(self.fixed_beta, "none"),
            "transfer" => Value::Boolean(self.transfer),
            "embed_dim" => Value::Integer(self.embed_dim as i64),
            "embed_hidden" => sizes(&self.embed_hidden),
            "sr_hidden" => sizes(&self.sr_hidden),
            "weight_mode" => Value::String(
                match self.weight_mode {
                    WeightMode::Shared => "shared",
                    WeightMode::PerAgent => "per_agent",
                }
                .into(),
            ),
            "train_embedding" => Value::Boolean(self.train_embedding),
            "loa_mode" => Value::String(
                match self.loa_mode {
                    LoaMode::Shared => "shared",
                    LoaMode::PerAgent => "per_agent",
                }
                .into(),
            ),
            "trace" => Value::Boolean(self.trace),
            "update_log_interval" => Value::Integer(self.update_log_interval as i64),
            _ => unreachable!("every canonical key has a getter"),
        }
    }

    /// Every key in canonical order, one `key = value` line each.
    pub fn to_canonical(&self) -> String {
        let mut out = String::new();
        for key in KEYS {
            out.push_str(key);
            out.push_str(" = ");
            out.push_str(&format_value(&self.get(key)));
            out.push('\n');
        }
        out
    }

    pub fn validate(&self) -> Result<()> {
        let check = |ok: bool, msg: &str| if ok { Ok(()) } else { Err(Error::config(msg.to_string())) };
        check(self.num_agents >= 2, "num_agents must be at least 2")?;
        if self.scenario == ScenarioKind::Grid {
            check(self.num_agents == 2, "grid pursuit is played by exactly two ghosts")?;
        }
        check(self.gamma > 0.0 && self.gamma <= 1.0, "gamma must lie in (0, 1]")?;
        check(self.episode_cap > 0, "episode_cap must be positive")?;
        check((0.0..=1.0).contains(&self.opponent_epsilon), "opponent_epsilon must lie in [0, 1]")?;
        check(self.total_steps > 0, "total_steps must be positive")?;
        for (name, lr) in [("actor_lr", self.actor_lr), ("critic_lr", self.critic_lr), ("advisor_lr", self.advisor_lr), ("termination_lr", self.termination_lr)] {
            check(lr >= 0.0 && lr.is_finite(), &format!("{name} must be a finite non-negative number"))?;
        }
        check(self.segment_length > 0, "segment_length must be positive")?;
        check(self.kl_coef >= 0.0 && self.kl_coef.is_finite(), "kl_coef must be non-negative")?;
        check(matches!(self.ppo_objective.as_str(), "kl_penalty" | "clipped"), "ppo_objective must be kl_penalty or clipped")?;
        check(self.clip_epsilon > 0.0 && self.clip_epsilon < 1.0, "clip_epsilon must lie in (0, 1)")?;
        check(self.max_grad_norm >= 0.0 && self.max_grad_norm.is_finite(), "max_grad_norm must be non-negative")?;
        check(self.ppo_epochs > 0, "ppo_epochs must be positive")?;
        check(self.hidden.iter().all(|&h| h > 0), "hidden sizes must be positive")?;
        check(self.advisor_batch > 0 && self.replay_capacity > 0, "advisor_batch and replay_capacity must be positive")?;
        check(self.target_interval > 0 && self.advisor_update_every > 0, "target_interval and advisor_update_every must be positive")?;
        check(self.advisor_hidden.iter().chain(&self.embed_hidden).chain(&self.sr_hidden).all(|&h| h > 0), "advisor layer sizes must be positive")?;
        if let Some(t) = self.match_threshold {
            check((0.0..=1.0).contains(&t), "match_threshold must lie in [0, 1]")?;
        }
        check((0.0..=1.0).contains(&self.eps_start) && (0.0..=1.0).contains(&self.eps_finish), "epsilon bounds must lie in [0, 1]")?;
        if let Some(mu) = self.mu {
            check(mu > 0.0 && mu.is_finite(), "mu must be positive")?;
        }
        check(self.xi.is_finite(), "xi must be finite")?;
        check(self.temperature > 0.0 && self.temperature.is_finite(), "temperature must be positive")?;
        if let Some(b) = self.fixed_beta {
            check((0.0..=1.0).contains(&b), "fixed_beta must lie in [0, 1]")?;
        }
        check(self.embed_dim > 0, "embed_dim must be positive")?;
        check(self.update_log_interval > 0, "update_log_interval must be positive")?;
        if self.advisor == AdvisorKind::Goa {
            crate::advisors::JointIndex::new(self.num_agents)?;
        }
        Ok(())
    }

    pub fn env_config(&self) -> EnvConfig {
        EnvConfig {
            scenario: self.scenario,
            layout: self.layout.clone(),
            num_agents: self.num_agents,
            gamma: self.gamma,
            episode_cap: self.episode_cap,
            opponent_epsilon: self.opponent_epsilon,
            particle: ParticleConfig::default(),
        }
    }

    pub fn ppo_config(&self) -> PpoConfig {
        PpoConfig {
            actor_lr: self.actor_lr,
            critic_lr: self.critic_lr,
            gamma: self.gamma,
            kl_coef: self.kl_coef,
            objective: if self.ppo_objective == "clipped" {
                ActorObjective::Clipped { epsilon: self.clip_epsilon }
            } else {
                ActorObjective::KlPenalty
            },
            normalize_advantages: self.normalize_advantages,
            max_grad_norm: (self.max_grad_norm > 0.0).then_some(self.max_grad_norm),
            epochs: self.ppo_epochs,
        }
    }

    pub fn advisor_config(&self) -> AdvisorConfig {
        AdvisorConfig {
            lr: self.advisor_lr,
            batch: self.advisor_batch,
            target_interval: self.target_interval,
            gamma: self.gamma,
            hidden: self.advisor_hidden.clone(),
            capacity: self.replay_capacity,
            match_threshold: self.match_threshold,
            termination_lr: self.termination_lr,
            xi: self.xi,
            xi_mode: self.xi_mode,
            fixed_beta: self.fixed_beta,
        }
    }

    pub fn sro_config(&self) -> SroConfig {
        SroConfig {
            embed_dim: self.embed_dim,
            embed_hidden: self.embed_hidden.clone(),
            sr_hidden: self.sr_hidden.clone(),
            weight_mode: self.weight_mode,
            train_embedding: self.train_embedding,
        }
    }

    pub fn epsilon(&self) -> EpsilonSchedule {
        EpsilonSchedule {
            start: self.eps_start,
            finish: self.eps_finish,
            anneal_steps: self.eps_anneal,
        }
    }

    /// Planned actor updates per agent, used to derive the default decay rate.
    pub fn planned_updates(&self) -> u64 {
        (self.total_steps / self.segment_length as u64).max(1)
    }

    /// Same run description apart from the seed, advisor and step budget.
    pub fn same_scenario(&self, other: &RunConfig) -> bool {
        self.scenario == other.scenario
            && self.layout == other.layout
            && self.num_agents == other.num_agents
            && self.episode_cap == other.episode_cap
            && self.gamma == other.gamma
    }
}

fn default_agents(scenario: ScenarioKind) -> usize {
    match scenario {
        ScenarioKind::Grid => 2,
        ScenarioKind::PredatorPrey => 3,
        ScenarioKind::CoopNav => 4,
    }
}

fn format_value(v: &Value) -> String {
    match v {
        Value::Float(f) => {
            let s = format!("{f:?}");
            if s.contains('.') || s.contains('e') || s.contains("inf") || s.contains("NaN") {
                s
            } else {
                format!("{s}.0")
            }
        }
        Value::Array(items) => format!("[{}]", items.iter().map(format_value).collect::<Vec<_>>().join(", ")),
        other => other.to_string(),
    }
}

fn type_error(key: &str, want: &str, v: &Value) -> Error {
    Error::config(format!("{key} expects {want}, got {}", v.type_str()))
}

fn is_auto(v: &Value) -> bool {
    v.as_str() == Some("auto")
}

fn as_str<'a>(key: &str, v: &'a Value) -> Result<&'a str> {
    v.as_str().ok_or_else(|| type_error(key, "a string", v))
}

fn as_bool(key: &str, v: &Value) -> Result<bool> {
    v.as_bool().ok_or_else(|| type_error(key, "a boolean", v))
}

fn as_f64(key: &str, v: &Value) -> Result<f64> {
    match v {
        Value::Float(f) => Ok(*f),
        Value::Integer(i) => Ok(*i as f64),
        _ => Err(type_error(key, "a number", v)),
    }
}

fn as_opt_f64(key: &str, v: &Value) -> Result<Option<f64>> {
    match v.as_str() {
        Some("auto") | Some("none") => Ok(None),
        _ => as_f64(key, v).map(Some),
    }
}

fn as_u64(key: &str, v: &Value) -> Result<u64> {
    match v {
        Value::Integer(i) if *i >= 0 => Ok(*i as u64),
        _ => Err(type_error(key, "a non-negative integer", v)),
    }
}

fn as_usize(key: &str, v: &Value) -> Result<usize> {
    as_u64(key, v).map(|x| x as usize)
}

fn as_sizes(key: &str, v: &Value) -> Result<Vec<usize>> {
    match v {
        Value::Array(items) => items.iter().map(|x| as_usize(key, x)).collect(),
        _ => Err(type_error(key, "an array of integers", v)),
    }
}

/// Parses one flat table, mapping syntax errors to line and column.
pub fn parse_table(text: &str) -> Result<Table> {
    let table: Table = text.parse().map_err(|e: toml::de::Error| {
        let (line, column) = e
            .span()
            .map(|s| line_col(text, s.start))
            .unwrap_or((1, 1));
        Error::Parse {
            line,
            column,
            message: e.message().to_string(),
        }
    })?;
    if let Some((k, _)) = table.iter().find(|(_, v)| v.is_table()) {
        return Err(Error::config(format!("config files are flat; {k:?} is a table")));
    }
    Ok(table)
}

fn line_col(text: &str, offset: usize) -> (usize, usize) {
    let before = &text[..offset.min(text.len())];
    let line = before.matches('\n').count() + 1;
    let column = before.rfind('\n').map_or(before.len(), |nl| before.len() - nl - 1) + 1;
    (line, column)
}

fn load_table(path: &Path, depth: usize) -> Result<Table> {
    if depth > MAX_INCLUDE_DEPTH {
        return Err(Error::config(format!("include nesting deeper than {MAX_INCLUDE_DEPTH} at {}", path.display())));
    }
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::config(format!("cannot read config {}: {e}", path.display())))?;
    let mut own = parse_table(&text)?;
    let mut merged = match own.remove("include") {
        Some(inc) => {
            let rel = as_str("include", &inc)?;
            let base: PathBuf = path.parent().map(Path::to_path_buf).unwrap_or_default();
            load_table(&base.join(rel), depth + 1)?
        }
        None => Table::new(),
    };
    for (k, v) in own {
        merged.insert(k, v);
    }
    Ok(merged)
}

/// Applies `OPLAB_<KEY>=value` pairs. Values parse as TOML and fall back to
/// plain strings.
pub fn apply_env_overrides<I>(table: &mut Table, vars: I) -> Result<()>
where
    I: IntoIterator<Item = (String, String)>,
{
    let known: BTreeSet<&str> = KEYS.iter().copied().collect();
    let mut pairs: Vec<(String, String)> = vars
        .into_iter()
        .filter_map(|(k, v)| k.strip_prefix(ENV_PREFIX).map(|rest| (rest.to_ascii_lowercase(), v)))
        .collect();
    pairs.sort();
    for (key, raw) in pairs {
        if !known.contains(key.as_str()) {
            return Err(Error::config(format!("unknown config key {key:?} in {ENV_PREFIX}{}", key.to_ascii_uppercase())));
        }
        let value = format!("v = {raw}")
            .parse::<Table>()
            .ok()
            .and_then(|mut t| t.remove("v"))
            .unwrap_or(Value::String(raw));
        table.insert(key, value);
    }
    Ok(())
}
