//! Flat `key = value` experiment configuration.
//!
//! Blank lines and lines starting with `#` are ignored. Keys of the GTFT and
//! Coin Game runs carry a `gtft.` or `coingame.` prefix. Unknown keys are
//! rejected.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::coingame::CoinGameConfig;
use crate::error::{Error, Result};
use crate::games::GamePayoffs;
use crate::gtft::{AgentKind, GtftConfig, WelfareFn};
use crate::optim::StepRule;
use crate::planner::{PlannerConfig, PlannerMode, MAX_PLANNER_PLAYERS};

/// How the learners compute their update.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum LearnerKind {
    /// Closed-form gradient of the expected total reward.
    ExactValue,
    /// Likelihood-ratio estimate from the sampled outcome with a running-mean
    /// baseline.
    #[default]
    Sampled,
}

impl FromStr for LearnerKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "exact" | "exact_value" | "exactvalue" => Ok(LearnerKind::ExactValue),
            "sampled" => Ok(LearnerKind::Sampled),
            other => Err(Error::Config(format!(
                "unknown learner mode '{other}' (expected exact or sampled)"
            ))),
        }
    }
}

impl fmt::Display for LearnerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            LearnerKind::ExactValue => "exact",
            LearnerKind::Sampled => "sampled",
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentConfig {
    pub game: GamePayoffs,
    /// Name the game was given by, used in file names and reports.
    pub game_name: String,
    pub n_players: usize,
    pub episodes: usize,
    pub seeds: usize,
    pub first_seed: u64,
    pub learner_mode: LearnerKind,
    pub learner_eta: f64,
    /// Initial cooperation probability of every learner.
    pub init_coop: f64,
    /// Decay of the running-mean baseline of sampled learners.
    pub critic_decay: f64,
    pub step_rule: StepRule,
    pub planner_enabled: bool,
    pub planner: PlannerConfig,
    /// Episode from which the planner stops handing out rewards.
    pub turn_off_at: Option<usize>,
    pub gtft: GtftConfig,
    pub gtft_agents: Vec<AgentKind>,
    pub coingame: CoinGameConfig,
    pub out: Option<PathBuf>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            game: GamePayoffs::prisoners_dilemma(),
            game_name: "pd".into(),
            n_players: 2,
            episodes: 4000,
            seeds: 10,
            first_seed: 0,
            learner_mode: LearnerKind::Sampled,
            learner_eta: 0.01,
            init_coop: 0.25,
            critic_decay: 0.99,
            step_rule: StepRule::Adam,
            planner_enabled: true,
            planner: PlannerConfig::default(),
            turn_off_at: None,
            gtft: GtftConfig::default(),
            gtft_agents: AgentKind::ALL.to_vec(),
            coingame: CoinGameConfig::default(),
            out: None,
        }
    }
}

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::Config(format!("invalid value '{value}' for '{key}'")))
}

fn parse_bool(key: &str, value: &str) -> Result<bool> {
    match value.to_ascii_lowercase().as_str() {
        "true" | "yes" | "on" | "1" => Ok(true),
        "false" | "no" | "off" | "0" => Ok(false),
        _ => Err(Error::Config(format!(
            "invalid boolean '{value}' for '{key}'"
        ))),
    }
}

fn parse_optional<T: FromStr>(key: &str, value: &str) -> Result<Option<T>> {
    match value.to_ascii_lowercase().as_str() {
        "" | "none" | "off" => Ok(None),
        _ => parse(key, value).map(Some),
    }
}

impl ExperimentConfig {
    /// Every key accepted by [`ExperimentConfig::set`].
    pub const KEYS: &'static [&'static str] = &[
        "game",
        "players",
        "episodes",
        "seeds",
        "first_seed",
        "learner_mode",
        "eta",
        "init_coop",
        "critic_decay",
        "step_rule",
        "planner",
        "eta_p",
        "c",
        "cost_alpha",
        "revenue_neutral",
        "mode",
        "sigma",
        "batch_size",
        "max_grad_norm",
        "turn_off_at",
        "out",
        "gtft.epsilon",
        "gtft.temperature",
        "gtft.model_temperature",
        "gtft.grid",
        "gtft.tau",
        "gtft.rounds",
        "gtft.naive_eta",
        "gtft.mirroring",
        "gtft.welfare",
        "gtft.agents",
        "coingame.episodes",
        "coingame.lr",
        "coingame.gamma",
        "coingame.hidden",
        "coingame.step_rule",
    ];

    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let value = value.trim();
        match key {
            "game" => {
                self.game = value.parse()?;
                self.game_name = value.to_ascii_lowercase();
            }
            "players" => self.n_players = parse(key, value)?,
            "episodes" => self.episodes = parse(key, value)?,
            "seeds" => self.seeds = parse(key, value)?,
            "first_seed" => self.first_seed = parse(key, value)?,
            "learner_mode" => self.learner_mode = value.parse()?,
            "eta" => self.learner_eta = parse(key, value)?,
            "init_coop" => self.init_coop = parse(key, value)?,
            "critic_decay" => self.critic_decay = parse(key, value)?,
            "step_rule" => self.step_rule = value.parse()?,
            "planner" => self.planner_enabled = parse_bool(key, value)?,
            "eta_p" => self.planner.eta = parse(key, value)?,
            "c" => self.planner.reward_cap = parse(key, value)?,
            "cost_alpha" => self.planner.cost_alpha = parse(key, value)?,
            "revenue_neutral" => self.planner.revenue_neutral = parse_bool(key, value)?,
            "mode" => self.planner.mode = value.parse::<PlannerMode>()?,
            "sigma" => self.planner.sigma = parse(key, value)?,
            "batch_size" => self.planner.batch_size = parse(key, value)?,
            "max_grad_norm" => self.planner.max_grad_norm = parse_optional(key, value)?,
            "turn_off_at" => self.turn_off_at = parse_optional(key, value)?,
            "out" => self.out = Some(PathBuf::from(value)),
            "gtft.epsilon" => self.gtft.epsilon = parse(key, value)?,
            "gtft.temperature" => self.gtft.temperature = parse(key, value)?,
            "gtft.model_temperature" => self.gtft.model_temperature = parse(key, value)?,
            "gtft.grid" => self.gtft.grid_intervals = parse(key, value)?,
            "gtft.tau" => self.gtft.tau = parse(key, value)?,
            "gtft.rounds" => self.gtft.rounds = parse(key, value)?,
            "gtft.naive_eta" => self.gtft.naive_eta = parse(key, value)?,
            "gtft.mirroring" => self.gtft.mirroring = parse_bool(key, value)?,
            "gtft.welfare" => self.gtft.welfare = value.parse::<WelfareFn>()?,
            "gtft.agents" => {
                self.gtft_agents = value
                    .split(',')
                    .map(|s| s.trim().parse())
                    .collect::<Result<Vec<AgentKind>>>()?;
            }
            "coingame.episodes" => self.coingame.episodes = parse(key, value)?,
            "coingame.lr" => self.coingame.lr = parse(key, value)?,
            "coingame.gamma" => self.coingame.gamma = parse(key, value)?,
            "coingame.hidden" => self.coingame.hidden = parse(key, value)?,
            "coingame.step_rule" => self.coingame.step_rule = value.parse()?,
            _ => return Err(Error::Config(format!("unknown configuration key '{key}'"))),
        }
        Ok(())
    }

    /// Applies `key = value` lines on top of the current settings. `origin`
    /// names the source in error messages.
    pub fn apply_str(&mut self, text: &str, origin: &Path) -> Result<()> {
        for (n, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| Error::Parse {
                path: origin.to_path_buf(),
                line: n + 1,
                msg: format!("expected 'key = value', found '{line}'"),
            })?;
            self.set(key.trim(), value).map_err(|e| Error::Parse {
                path: origin.to_path_buf(),
                line: n + 1,
                msg: e.to_string(),
            })?;
        }
        Ok(())
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg = ExperimentConfig::default();
        cfg.apply_str(&text, path)?;
        Ok(cfg)
    }

    /// Seeds of the run in order.
    pub fn seed_list(&self) -> Vec<u64> {
        (0..self.seeds as u64)
            .map(|s| self.first_seed + s)
            .collect()
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        if self.episodes == 0 {
            return bad("episodes must be positive".into());
        }
        if self.seeds == 0 {
            return bad("seeds must be positive".into());
        }
        if !(2..=MAX_PLANNER_PLAYERS).contains(&self.n_players) {
            return bad(format!(
                "players must lie in 2..={MAX_PLANNER_PLAYERS}, got {}",
                self.n_players
            ));
        }
        if !(self.init_coop > 0.0 && self.init_coop < 1.0) {
            return bad(format!(
                "init_coop must lie in (0, 1), got {}",
                self.init_coop
            ));
        }
        if !(self.learner_eta >= 0.0 && self.learner_eta.is_finite()) {
            return bad(format!(
                "eta must be a non-negative number, got {}",
                self.learner_eta
            ));
        }
        if !(0.0..1.0).contains(&self.critic_decay) {
            return bad(format!(
                "critic_decay must lie in [0, 1), got {}",
                self.critic_decay
            ));
        }
        let p = &self.planner;
        if !(p.eta >= 0.0 && p.eta.is_finite()) {
            return bad(format!(
                "eta_p must be a non-negative number, got {}",
                p.eta
            ));
        }
        if !(p.reward_cap > 0.0 && p.reward_cap.is_finite()) {
            return bad(format!("c must be positive, got {}", p.reward_cap));
        }
        if !(p.cost_alpha >= 0.0 && p.cost_alpha.is_finite()) {
            return bad(format!(
                "cost_alpha must be non-negative, got {}",
                p.cost_alpha
            ));
        }
        if !(p.sigma >= 0.0 && p.sigma.is_finite()) {
            return bad(format!("sigma must be non-negative, got {}", p.sigma));
        }
        if p.mode == PlannerMode::Estimated && p.sigma == 0.0 && self.planner_enabled {
            return bad("estimated mode needs sigma > 0".into());
        }
        if p.batch_size == 0 {
            return bad("batch_size must be positive".into());
        }
        if let Some(m) = p.max_grad_norm {
            if !(m > 0.0) {
                return bad(format!("max_grad_norm must be positive, got {m}"));
            }
        }
        let g = &self.gtft;
        if !(g.epsilon >= 0.0) {
            return bad(format!(
                "gtft.epsilon must be non-negative, got {}",
                g.epsilon
            ));
        }
        if !(g.temperature > 0.0 && g.model_temperature > 0.0) {
            return bad("gtft temperatures must be positive".into());
        }
        if !(g.tau > 0.0 && g.tau <= 1.0) {
            return bad(format!("gtft.tau must lie in (0, 1], got {}", g.tau));
        }
        if g.grid_intervals == 0 {
            return bad("gtft.grid must be positive".into());
        }
        if self.gtft_agents.is_empty() {
            return bad("gtft.agents must name at least one agent".into());
        }
        let c = &self.coingame;
        if c.hidden == 0 || !(c.lr >= 0.0) || !(0.0..=1.0).contains(&c.gamma) {
            return bad("coingame settings need hidden > 0, lr >= 0 and gamma in [0, 1]".into());
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_flat_file() {
        let text = "# comment\ngame = chicken\nepisodes=8000\n\nturn_off_at = 4000\nrevenue_neutral = yes\ngtft.epsilon = 0.1\ncoingame.lr = 0.001\n";
        let mut cfg = ExperimentConfig::default();
        cfg.apply_str(text, Path::new("t.cfg")).unwrap();
        assert_eq!(cfg.game, GamePayoffs::chicken());
        assert_eq!(cfg.game_name, "chicken");
        assert_eq!(cfg.episodes, 8000);
        assert_eq!(cfg.turn_off_at, Some(4000));
        assert!(cfg.planner.revenue_neutral);
        assert_eq!(cfg.gtft.epsilon, 0.1);
        assert_eq!(cfg.coingame.lr, 0.001);
        cfg.validate().unwrap();
    }

    #[test]
    fn rejects_unknown_key_with_line() {
        let mut cfg = ExperimentConfig::default();
        let err = cfg
            .apply_str("episodes = 10\nlearning_rate = 3\n", Path::new("x.cfg"))
            .unwrap_err();
        match err {
            Error::Parse { line, msg, .. } => {
                assert_eq!(line, 2);
                assert!(msg.contains("learning_rate"));
            }
            other => panic!("{other:?}"),
        }
        assert!(cfg.apply_str("no equals sign", Path::new("x.cfg")).is_err());
    }

    #[test]
    fn every_listed_key_is_settable() {
        for key in ExperimentConfig::KEYS {
            let value = match *key {
                "game" => "pd",
                "learner_mode" => "exact",
                "step_rule" | "coingame.step_rule" => "sgd",
                "mode" => "estimated",
                "planner" | "revenue_neutral" | "gtft.mirroring" => "true",
                "out" => "/tmp/x",
                "gtft.welfare" => "nash",
                "gtft.agents" => "gtft-bayes, always-d",
                _ => "1",
            };
            let mut cfg = ExperimentConfig::default();
            cfg.set(key, value).unwrap_or_else(|e| panic!("{key}: {e}"));
        }
    }

    #[test]
    fn validation_catches_bad_values() {
        let check = |k: &str, v: &str| {
            let mut cfg = ExperimentConfig::default();
            cfg.set(k, v).unwrap();
            assert!(matches!(cfg.validate(), Err(Error::Config(_))), "{k}={v}");
        };
        check("episodes", "0");
        check("players", "13");
        check("init_coop", "1");
        check("c", "0");
        check("batch_size", "0");
        check("gtft.tau", "0");
        let mut cfg = ExperimentConfig::default();
        cfg.set("mode", "estimated").unwrap();
        cfg.set("sigma", "0").unwrap();
        assert!(cfg.validate().is_err());
        assert!(ExperimentConfig::default().validate().is_ok());
    }
}
