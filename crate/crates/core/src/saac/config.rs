use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Training variants. They share everything except how the value target is
/// aggregated and whether an adversary is trained.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Algorithm {
    /// Smoothed target over adversary-sampled disturbances.
    SaAC,
    /// Smoothed target over uniformly drawn disturbances.
    SaACU,
    /// Plain mean target over adversary-sampled disturbances.
    RaRL,
    /// Plain mean target, no disturbance and no adversary.
    Adp,
}

impl Algorithm {
    pub const ALL: [Algorithm; 4] = [Algorithm::SaAC, Algorithm::SaACU, Algorithm::RaRL, Algorithm::Adp];

    pub fn name(self) -> &'static str {
        match self {
            Algorithm::SaAC => "saac",
            Algorithm::SaACU => "saac-u",
            Algorithm::RaRL => "rarl",
            Algorithm::Adp => "adp",
        }
    }

    pub fn has_adversary(self) -> bool {
        self != Algorithm::Adp
    }

    pub fn smoothed_target(self) -> bool {
        matches!(self, Algorithm::SaAC | Algorithm::SaACU)
    }
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Algorithm {
    type Err = ConfigError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().replace('_', "-").as_str() {
            "saac" => Ok(Algorithm::SaAC),
            "saac-u" => Ok(Algorithm::SaACU),
            "rarl" => Ok(Algorithm::RaRL),
            "adp" => Ok(Algorithm::Adp),
            _ => Err(ConfigError::BadValue {
                key: "algorithm".into(),
                value: s.into(),
            }),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ConfigError {
    #[error("unknown config key `{0}`")]
    UnknownKey(String),
    #[error("bad value `{value}` for `{key}`")]
    BadValue { key: String, value: String },
    #[error("malformed config line {line}: `{text}`")]
    Syntax { line: usize, text: String },
    #[error("invalid config: {0}")]
    Invalid(String),
}

/// All knobs of a training run. Field names double as config-file keys.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub algorithm: Algorithm,
    /// Smoothing factor of the target aggregation.
    pub rho: f64,
    /// Model rollouts per state when estimating a target.
    pub k_samples: usize,
    /// The adversary steps on iterations divisible by this.
    pub adversary_interval: usize,
    /// Target-network tracking rate.
    pub tau: f64,
    pub batch_size: usize,
    pub gamma: f64,
    pub policy_lr_hi: f64,
    pub policy_lr_lo: f64,
    pub value_lr_hi: f64,
    pub value_lr_lo: f64,
    /// Optimizing iterations; each updates the critic and both policies once.
    pub iterations: usize,
    pub eval_interval: usize,
    pub eval_episodes: usize,
    pub eval_steps: usize,
    pub episode_steps: usize,
    /// A training episode restarts once `|delta_y|` exceeds this (m); zero
    /// disables the cutoff. Evaluation always runs full episodes.
    pub restart_lateral_error: f64,
    pub updates_per_episode: usize,
    pub replay_capacity: usize,
    pub warmup: usize,
    pub hidden_layers: usize,
    pub hidden_units: usize,
    /// Fixed multiplier on the critic network's output, so its weights stay
    /// order one while values are large.
    pub value_scale: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    /// Published hyperparameters on the desk-size network.
    fn default() -> Self {
        Self {
            algorithm: Algorithm::SaAC,
            rho: 5.0,
            k_samples: 16,
            adversary_interval: 1,
            tau: 0.001,
            batch_size: 256,
            gamma: 0.99,
            policy_lr_hi: 5e-5,
            policy_lr_lo: 1e-6,
            value_lr_hi: 8e-5,
            value_lr_lo: 1e-6,
            iterations: 100_000,
            eval_interval: 3000,
            eval_episodes: 5,
            eval_steps: 150,
            episode_steps: 150,
            restart_lateral_error: 0.0,
            updates_per_episode: 50,
            replay_capacity: 100_000,
            warmup: 1000,
            hidden_layers: 2,
            hidden_units: 64,
            value_scale: 1.0,
            seed: 0,
        }
    }
}

impl TrainConfig {
    /// Settings that learn within a few thousand iterations on one core.
    pub fn desk() -> Self {
        Self {
            tau: 0.01,
            batch_size: 128,
            gamma: 0.95,
            policy_lr_hi: 1e-3,
            policy_lr_lo: 1e-5,
            value_lr_hi: 2e-3,
            value_lr_lo: 1e-5,
            iterations: 5000,
            eval_interval: 500,
            value_scale: 100.0,
            restart_lateral_error: 5.0,
            ..Self::default()
        }
    }

    /// The full published network: five hidden layers of 256 units.
    pub fn paper_network(mut self) -> Self {
        self.hidden_layers = 5;
        self.hidden_units = 256;
        self
    }

    pub const KEYS: [&'static str; 24] = [
        "algorithm",
        "rho",
        "k_samples",
        "adversary_interval",
        "tau",
        "batch_size",
        "gamma",
        "policy_lr_hi",
        "policy_lr_lo",
        "value_lr_hi",
        "value_lr_lo",
        "iterations",
        "eval_interval",
        "eval_episodes",
        "eval_steps",
        "episode_steps",
        "restart_lateral_error",
        "updates_per_episode",
        "replay_capacity",
        "warmup",
        "hidden_layers",
        "hidden_units",
        "value_scale",
        "seed",
    ];

    /// Sets one field from its textual form.
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), ConfigError> {
        fn parse<T: FromStr>(key: &str, value: &str) -> Result<T, ConfigError> {
            value.trim().parse().map_err(|_| ConfigError::BadValue {
                key: key.into(),
                value: value.into(),
            })
        }
        match key.trim() {
            "algorithm" => self.algorithm = value.trim().parse()?,
            "rho" => self.rho = parse(key, value)?,
            "k_samples" => self.k_samples = parse(key, value)?,
            "adversary_interval" => self.adversary_interval = parse(key, value)?,
            "tau" => self.tau = parse(key, value)?,
            "batch_size" => self.batch_size = parse(key, value)?,
            "gamma" => self.gamma = parse(key, value)?,
            "policy_lr_hi" => self.policy_lr_hi = parse(key, value)?,
            "policy_lr_lo" => self.policy_lr_lo = parse(key, value)?,
            "value_lr_hi" => self.value_lr_hi = parse(key, value)?,
            "value_lr_lo" => self.value_lr_lo = parse(key, value)?,
            "iterations" => self.iterations = parse(key, value)?,
            "eval_interval" => self.eval_interval = parse(key, value)?,
            "eval_episodes" => self.eval_episodes = parse(key, value)?,
            "eval_steps" => self.eval_steps = parse(key, value)?,
            "episode_steps" => self.episode_steps = parse(key, value)?,
            "restart_lateral_error" => self.restart_lateral_error = parse(key, value)?,
            "updates_per_episode" => self.updates_per_episode = parse(key, value)?,
            "replay_capacity" => self.replay_capacity = parse(key, value)?,
            "warmup" => self.warmup = parse(key, value)?,
            "hidden_layers" => self.hidden_layers = parse(key, value)?,
            "hidden_units" => self.hidden_units = parse(key, value)?,
            "value_scale" => self.value_scale = parse(key, value)?,
            "seed" => self.seed = parse(key, value)?,
            other => return Err(ConfigError::UnknownKey(other.into())),
        }
        Ok(())
    }

    /// Applies `key=value` lines; blank lines and `#` comments are skipped.
    pub fn apply_text(&mut self, text: &str) -> Result<(), ConfigError> {
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let Some((k, v)) = line.split_once('=') else {
                return Err(ConfigError::Syntax {
                    line: i + 1,
                    text: raw.into(),
                });
            };
            self.set(k, v)?;
        }
        Ok(())
    }

    /// Renders the config in the form [`TrainConfig::apply_text`] reads.
    pub fn to_text(&self) -> String {
        let v = serde_json::to_value(self).expect("config serializes");
        Self::KEYS
            .iter()
            .map(|k| {
                let val = if *k == "algorithm" {
                    self.algorithm.name().to_string()
                } else {
                    v[*k].to_string()
                };
                format!("{k}={val}\n")
            })
            .collect()
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let bad = |what: &str| Err(ConfigError::Invalid(what.into()));
        if !(self.rho > 0.0 && self.rho.is_finite()) {
            return bad("rho must be positive");
        }
        if self.k_samples == 0 {
            return bad("k_samples must be at least 1");
        }
        if self.adversary_interval == 0 {
            return bad("adversary_interval must be at least 1");
        }
        if !(self.tau > 0.0 && self.tau <= 1.0) {
            return bad("tau must lie in (0, 1]");
        }
        if !(0.0..1.0).contains(&self.gamma) {
            return bad("gamma must lie in [0, 1)");
        }
        if self.batch_size == 0 || self.eval_interval == 0 || self.eval_episodes == 0 || self.eval_steps == 0 {
            return bad("batch_size, eval_interval, eval_episodes and eval_steps must be positive");
        }
        if self.episode_steps == 0 || self.updates_per_episode == 0 {
            return bad("episode_steps and updates_per_episode must be positive");
        }
        if self.replay_capacity == 0 || self.warmup > self.replay_capacity {
            return bad("replay_capacity must be positive and at least warmup");
        }
        if self.hidden_layers == 0 || self.hidden_units == 0 {
            return bad("networks need at least one hidden layer");
        }
        if !(self.restart_lateral_error >= 0.0) {
            return bad("restart_lateral_error must be non-negative");
        }
        if !(self.value_scale > 0.0 && self.value_scale.is_finite()) {
            return bad("value_scale must be positive");
        }
        let lrs = [self.policy_lr_hi, self.policy_lr_lo, self.value_lr_hi, self.value_lr_lo];
        if lrs.iter().any(|l| !(*l >= 0.0 && l.is_finite())) {
            return bad("learning rates must be finite and non-negative");
        }
        Ok(())
    }
}
