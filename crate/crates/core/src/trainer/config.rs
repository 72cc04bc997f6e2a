//! Flat key=value training configuration. Every key has a default;
//! unknown keys are rejected. `#` starts a comment.

use std::fmt::Write as _;
use std::path::Path;

use crate::env::UserParams;
use crate::error::{CoreError, Result};
use crate::heads::NetDims;
use crate::numerics::OptimKind;

#[derive(Debug, Clone)]
pub struct TrainConfig {
    // Dimensions.
    pub embed_dim: usize,
    pub n_window: usize,
    pub gru_hidden: usize,
    pub state_dim: usize,
    pub eval_hidden: usize,

    // Learning.
    pub gamma: f64,
    pub tau: f64,
    pub alpha: f64,
    pub beta: f64,
    pub period: usize,
    pub num_goals: usize,
    pub bound: f64,
    pub actor_lr: f64,
    pub critic_lr: f64,
    pub optimizer: OptimKind,
    pub low_capacity: usize,
    pub high_capacity: usize,
    pub low_batch: usize,
    pub high_batch: usize,
    /// Exploration noise: linear decay from sigma0·bound to
    /// sigma1·bound over the training run.
    pub noise_sigma0: f64,
    pub noise_sigma1: f64,
    pub sessions: usize,
    pub session_len: usize,
    pub warmup_min: usize,
    pub update_every: usize,
    /// Candidate prefilter size for action mapping; 0 scans everything.
    pub recall_k: usize,
    /// When false the high-level agent is absent entirely (no goals,
    /// no high-level transitions or updates).
    pub high_enabled: bool,
    pub seed: u64,

    // Synthetic environment.
    pub n_items: usize,
    pub n_clusters: usize,
    pub item_noise: f64,
    pub kappa_click: f64,
    pub kappa_order: f64,
    pub bias_click: f64,
    pub bias_order: f64,
    pub user_noise: f64,
    pub order_taste_noise: f64,
    pub drift: f64,
    pub leave_base: f64,
    pub leave_after: u32,

    // Evaluation.
    pub eval_sessions: usize,
    pub eval_len: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            embed_dim: 50,
            n_window: 10,
            gru_hidden: 32,
            state_dim: 50,
            eval_hidden: 32,
            gamma: 0.95,
            tau: 0.01,
            alpha: 0.5,
            beta: 0.5,
            period: 10,
            num_goals: 2,
            bound: 1.0,
            actor_lr: 1e-4,
            critic_lr: 1e-3,
            optimizer: OptimKind::Sgd,
            low_capacity: 100_000,
            high_capacity: 10_000,
            low_batch: 64,
            high_batch: 16,
            noise_sigma0: 0.2,
            noise_sigma1: 0.01,
            sessions: 200,
            session_len: 100,
            warmup_min: 1000,
            update_every: 1,
            recall_k: 0,
            high_enabled: true,
            seed: 0,
            n_items: 1000,
            n_clusters: 10,
            item_noise: 0.08,
            kappa_click: 2.0,
            kappa_order: 6.0,
            bias_click: -1.2,
            bias_order: -4.8,
            user_noise: 0.05,
            order_taste_noise: 0.2,
            drift: 0.05,
            leave_base: 0.02,
            leave_after: 8,
            eval_sessions: 10,
            eval_len: 300,
        }
    }
}

impl TrainConfig {
    pub fn dims(&self) -> NetDims {
        NetDims {
            embed_dim: self.embed_dim,
            gru_hidden: self.gru_hidden,
            state_dim: self.state_dim,
            eval_hidden: self.eval_hidden,
        }
    }

    pub fn user_params(&self) -> UserParams {
        UserParams {
            kappa_click: self.kappa_click,
            bias_click: self.bias_click,
            kappa_order: self.kappa_order,
            bias_order: self.bias_order,
            user_noise: self.user_noise,
            order_taste_noise: self.order_taste_noise,
            drift: self.drift,
            leave_base: self.leave_base,
            leave_after: self.leave_after,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(CoreError::Config(msg));
        if !(0.0..=1.0).contains(&self.gamma) {
            return fail(format!("gamma must be in [0,1], got {}", self.gamma));
        }
        if !(self.tau > 0.0 && self.tau <= 1.0) {
            return fail(format!("tau must be in (0,1], got {}", self.tau));
        }
        if self.alpha < 0.0 {
            return fail(format!("alpha must be >= 0, got {}", self.alpha));
        }
        if !(0.0..=1.0).contains(&self.beta) {
            return fail(format!("beta must be in [0,1], got {}", self.beta));
        }
        if self.num_goals == 0 {
            return fail("num_goals must be >= 1".into());
        }
        if self.period < self.num_goals {
            return fail(format!(
                "period ({}) must be >= num_goals ({})",
                self.period, self.num_goals
            ));
        }
        if self.bound <= 0.0 {
            return fail(format!("bound must be > 0, got {}", self.bound));
        }
        if self.actor_lr <= 0.0 || self.critic_lr <= 0.0 {
            return fail("learning rates must be > 0".into());
        }
        if self.low_batch == 0 || self.high_batch == 0 {
            return fail("batch sizes must be >= 1".into());
        }
        if self.update_every == 0 {
            return fail("update_every must be >= 1".into());
        }
        if self.embed_dim < 2 {
            return fail("embed_dim must be >= 2".into());
        }
        if self.n_window == 0 || self.session_len == 0 {
            return fail("n_window and session_len must be >= 1".into());
        }
        if self.n_items < self.n_clusters || self.n_clusters == 0 {
            return fail("need n_items >= n_clusters >= 1".into());
        }
        if self.recall_k > 0 && self.state_dim != self.embed_dim {
            return fail("recall_k needs state_dim == embed_dim (identity query)".into());
        }
        Ok(())
    }

    /// Exploration noise sigma at training progress `frac` ∈ [0, 1].
    pub fn noise_at(&self, frac: f64) -> f64 {
        let frac = frac.clamp(0.0, 1.0);
        self.bound * (self.noise_sigma0 + (self.noise_sigma1 - self.noise_sigma0) * frac)
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let mut kv = |k: &str, v: String| {
            let _ = writeln!(s, "{k} = {v}");
        };
        kv("embed_dim", self.embed_dim.to_string());
        kv("n_window", self.n_window.to_string());
        kv("gru_hidden", self.gru_hidden.to_string());
        kv("state_dim", self.state_dim.to_string());
        kv("eval_hidden", self.eval_hidden.to_string());
        kv("gamma", self.gamma.to_string());
        kv("tau", self.tau.to_string());
        kv("alpha", self.alpha.to_string());
        kv("beta", self.beta.to_string());
        kv("period", self.period.to_string());
        kv("num_goals", self.num_goals.to_string());
        kv("bound", self.bound.to_string());
        kv("actor_lr", self.actor_lr.to_string());
        kv("critic_lr", self.critic_lr.to_string());
        kv(
            "optimizer",
            match self.optimizer {
                OptimKind::Sgd => "sgd".into(),
                OptimKind::Adam => "adam".into(),
            },
        );
        kv("low_capacity", self.low_capacity.to_string());
        kv("high_capacity", self.high_capacity.to_string());
        kv("low_batch", self.low_batch.to_string());
        kv("high_batch", self.high_batch.to_string());
        kv("noise_sigma0", self.noise_sigma0.to_string());
        kv("noise_sigma1", self.noise_sigma1.to_string());
        kv("sessions", self.sessions.to_string());
        kv("session_len", self.session_len.to_string());
        kv("warmup_min", self.warmup_min.to_string());
        kv("update_every", self.update_every.to_string());
        kv("recall_k", self.recall_k.to_string());
        kv("high_enabled", self.high_enabled.to_string());
        kv("seed", self.seed.to_string());
        kv("n_items", self.n_items.to_string());
        kv("n_clusters", self.n_clusters.to_string());
        kv("item_noise", self.item_noise.to_string());
        kv("kappa_click", self.kappa_click.to_string());
        kv("kappa_order", self.kappa_order.to_string());
        kv("bias_click", self.bias_click.to_string());
        kv("bias_order", self.bias_order.to_string());
        kv("user_noise", self.user_noise.to_string());
        kv("order_taste_noise", self.order_taste_noise.to_string());
        kv("drift", self.drift.to_string());
        kv("leave_base", self.leave_base.to_string());
        kv("leave_after", self.leave_after.to_string());
        kv("eval_sessions", self.eval_sessions.to_string());
        kv("eval_len", self.eval_len.to_string());
        s
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut cfg = TrainConfig::default();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let lineno = i + 1;
            let (key, value) = line.split_once('=').ok_or(CoreError::Parse {
                line: lineno,
                msg: format!("expected 'key = value', got '{raw}'"),
            })?;
            let key = key.trim();
            let value = value.trim();
            cfg.set(key, value).map_err(|e| CoreError::Parse {
                line: lineno,
                msg: e.to_string(),
            })?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CoreError::io(path.display().to_string(), e))?;
        Self::from_text(&text)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_text())
            .map_err(|e| CoreError::io(path.display().to_string(), e))
    }

    /// Set one field from its text form; unknown keys are errors.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        fn parse<T: std::str::FromStr>(key: &str, v: &str) -> Result<T> {
            v.parse().map_err(|_| {
                CoreError::Config(format!("bad value '{v}' for key '{key}'"))
            })
        }
        match key {
            "embed_dim" => self.embed_dim = parse(key, value)?,
            "n_window" => self.n_window = parse(key, value)?,
            "gru_hidden" => self.gru_hidden = parse(key, value)?,
            "state_dim" => self.state_dim = parse(key, value)?,
            "eval_hidden" => self.eval_hidden = parse(key, value)?,
            "gamma" => self.gamma = parse(key, value)?,
            "tau" => self.tau = parse(key, value)?,
            "alpha" => self.alpha = parse(key, value)?,
            "beta" => self.beta = parse(key, value)?,
            "period" => self.period = parse(key, value)?,
            "num_goals" => self.num_goals = parse(key, value)?,
            "bound" => self.bound = parse(key, value)?,
            "actor_lr" => self.actor_lr = parse(key, value)?,
            "critic_lr" => self.critic_lr = parse(key, value)?,
            "optimizer" => self.optimizer = value.parse()?,
            "low_capacity" => self.low_capacity = parse(key, value)?,
            "high_capacity" => self.high_capacity = parse(key, value)?,
            "low_batch" => self.low_batch = parse(key, value)?,
            "high_batch" => self.high_batch = parse(key, value)?,
            "noise_sigma0" => self.noise_sigma0 = parse(key, value)?,
            "noise_sigma1" => self.noise_sigma1 = parse(key, value)?,
            "sessions" => self.sessions = parse(key, value)?,
            "session_len" => self.session_len = parse(key, value)?,
            "warmup_min" => self.warmup_min = parse(key, value)?,
            "update_every" => self.update_every = parse(key, value)?,
            "recall_k" => self.recall_k = parse(key, value)?,
            "high_enabled" => self.high_enabled = parse(key, value)?,
            "seed" => self.seed = parse(key, value)?,
            "n_items" => self.n_items = parse(key, value)?,
            "n_clusters" => self.n_clusters = parse(key, value)?,
            "item_noise" => self.item_noise = parse(key, value)?,
            "kappa_click" => self.kappa_click = parse(key, value)?,
            "kappa_order" => self.kappa_order = parse(key, value)?,
            "bias_click" => self.bias_click = parse(key, value)?,
            "bias_order" => self.bias_order = parse(key, value)?,
            "user_noise" => self.user_noise = parse(key, value)?,
            "order_taste_noise" => self.order_taste_noise = parse(key, value)?,
            "drift" => self.drift = parse(key, value)?,
            "leave_base" => self.leave_base = parse(key, value)?,
            "leave_after" => self.leave_after = parse(key, value)?,
            "eval_sessions" => self.eval_sessions = parse(key, value)?,
            "eval_len" => self.eval_len = parse(key, value)?,
            other => {
                return Err(CoreError::Config(format!("unknown config key '{other}'")));
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_are_valid_and_round_trip() {
        let cfg = TrainConfig::default();
        cfg.validate().unwrap();
        let text = cfg.to_text();
        let back = TrainConfig::from_text(&text).unwrap();
        assert_eq!(back.to_text(), text);
        assert_eq!(back.gamma, 0.95);
        assert_eq!(back.tau, 0.01);
        assert_eq!(back.embed_dim, 50);
        assert_eq!(back.n_window, 10);
    }

    #[test]
    fn unknown_keys_are_errors() {
        let err = TrainConfig::from_text("nonsense = 4\n");
        assert!(err.is_err());
    }

    #[test]
    fn comments_and_blanks_are_ignored() {
        let cfg = TrainConfig::from_text("# comment\n\ngamma = 0.5 # inline\n").unwrap();
        assert_eq!(cfg.gamma, 0.5);
    }

    #[test]
    fn invalid_values_are_rejected() {
        assert!(TrainConfig::from_text("gamma = 1.5\n").is_err());
        assert!(TrainConfig::from_text("tau = 0\n").is_err());
        assert!(TrainConfig::from_text("period = 1\nnum_goals = 2\n").is_err());
        assert!(TrainConfig::from_text("optimizer = rmsprop\n").is_err());
    }

    #[test]
    fn noise_schedule_is_linear_in_progress() {
        let cfg = TrainConfig::default();
        assert_eq!(cfg.noise_at(0.0), 0.2);
        assert!((cfg.noise_at(1.0) - 0.01).abs() < 1e-12);
        assert!((cfg.noise_at(0.5) - 0.105).abs() < 1e-12);
    }
}
