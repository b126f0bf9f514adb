//! Matrix game social dilemmas.
//!
//! A symmetric two-player game is described by four payoffs: `R` for mutual
//! cooperation, `P` for mutual defection, `T` for defecting against a
//! cooperator and `S` for cooperating against a defector. Greed (`T - R`) and
//! fear (`P - S`) classify the dilemma.
//!
//! Joint outcomes of `n` players are indexed by reading the actions as a
//! binary number with player 0 as the most significant bit and `C = 0`,
//! `D = 1`. For two players this gives `2 * a1 + a2`: CC, CD, DC, DD.

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Action {
    Cooperate,
    Defect,
}

pub use Action::{Cooperate as C, Defect as D};

impl Action {
    pub fn index(self) -> usize {
        match self {
            Action::Cooperate => 0,
            Action::Defect => 1,
        }
    }

    pub fn from_index(i: usize) -> Self {
        if i == 0 {
            Action::Cooperate
        } else {
            Action::Defect
        }
    }

    pub fn is_cooperate(self) -> bool {
        self == Action::Cooperate
    }

    pub fn symbol(self) -> char {
        match self {
            Action::Cooperate => 'C',
            Action::Defect => 'D',
        }
    }
}

impl fmt::Display for Action {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.symbol())
    }
}

/// Number of joint outcomes for `n` players.
pub fn n_outcomes(n: usize) -> usize {
    1 << n
}

/// Outcome index of a joint action.
pub fn outcome_index(actions: &[Action]) -> usize {
    actions.iter().fold(0, |acc, a| (acc << 1) | a.index())
}

/// Action of `player` in outcome `outcome` of an `n`-player game.
pub fn action_in(outcome: usize, player: usize, n: usize) -> Action {
    Action::from_index((outcome >> (n - 1 - player)) & 1)
}

/// Probability of every joint outcome when players cooperate independently
/// with the given probabilities.
pub fn outcome_probs(coop: &[f64]) -> Vec<f64> {
    let n = coop.len();
    (0..n_outcomes(n))
        .map(|o| {
            coop.iter()
                .enumerate()
                .map(|(j, &p)| {
                    if action_in(o, j, n).is_cooperate() {
                        p
                    } else {
                        1.0 - p
                    }
                })
                .product()
        })
        .collect()
}

/// A game in which every player picks C or D once.
pub trait MatrixGame: Sync {
    fn n_players(&self) -> usize;

    /// Base reward of `player` in joint outcome `outcome`.
    fn outcome_payoff(&self, player: usize, outcome: usize) -> f64;

    fn n_outcomes(&self) -> usize {
        n_outcomes(self.n_players())
    }

    /// Sum of all players' base rewards in an outcome.
    fn outcome_welfare(&self, outcome: usize) -> f64 {
        (0..self.n_players())
            .map(|i| self.outcome_payoff(i, outcome))
            .sum()
    }

    /// Expected base reward of every player.
    fn values(&self, coop: &[f64]) -> Vec<f64> {
        let probs = outcome_probs(coop);
        (0..self.n_players())
            .map(|i| {
                probs
                    .iter()
                    .enumerate()
                    .map(|(o, pr)| pr * self.outcome_payoff(i, o))
                    .sum()
            })
            .collect()
    }

    fn welfare(&self, coop: &[f64]) -> f64 {
        self.values(coop).iter().sum()
    }

    /// `d/dθ_i` of `player`'s expected total reward `V_i + V_i^p`, where the
    /// extra rewards are `extra[outcome][player]` and `P(C) = σ(θ)`.
    ///
    /// The default enumerates all joint outcomes.
    fn value_grad(&self, player: usize, coop: &[f64], extra: Option<&[Vec<f64>]>) -> f64 {
        let n = self.n_players();
        let probs = outcome_probs(coop);
        let p = coop[player];
        probs
            .iter()
            .enumerate()
            .map(|(o, pr)| {
                let score = if action_in(o, player, n).is_cooperate() {
                    1.0 - p
                } else {
                    -p
                };
                let r = self.outcome_payoff(player, o) + extra.map_or(0.0, |e| e[o][player]);
                pr * score * r
            })
            .sum()
    }

    /// `d/dθ_i` of the social welfare `Σ_j V_j`.
    fn welfare_grad(&self, player: usize, coop: &[f64]) -> f64 {
        let n = self.n_players();
        let probs = outcome_probs(coop);
        let p = coop[player];
        probs
            .iter()
            .enumerate()
            .map(|(o, pr)| {
                let score = if action_in(o, player, n).is_cooperate() {
                    1.0 - p
                } else {
                    -p
                };
                pr * score * self.outcome_welfare(o)
            })
            .sum()
    }
}

/// Payoffs of a symmetric two-player matrix game.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GamePayoffs {
    /// `R`, mutual cooperation.
    pub reward: f64,
    /// `P`, mutual defection.
    pub punishment: f64,
    /// `T`, defecting against a cooperator.
    pub temptation: f64,
    /// `S`, cooperating against a defector.
    pub sucker: f64,
}

impl GamePayoffs {
    pub fn new(reward: f64, punishment: f64, temptation: f64, sucker: f64) -> Self {
        GamePayoffs {
            reward,
            punishment,
            temptation,
            sucker,
        }
    }

    /// Game with `R = 3`, `P = 1` and the given levels of fear and greed.
    pub fn from_fear_greed(fear: f64, greed: f64) -> Self {
        GamePayoffs::new(3.0, 1.0, 3.0 + greed, 1.0 - fear)
    }

    pub fn prisoners_dilemma() -> Self {
        Self::from_fear_greed(1.0, 1.0)
    }

    pub fn chicken() -> Self {
        Self::from_fear_greed(-1.0, 0.5)
    }

    pub fn stag_hunt() -> Self {
        Self::from_fear_greed(1.0, -1.0)
    }

    /// `P - S`.
    pub fn fear(&self) -> f64 {
        self.punishment - self.sucker
    }

    /// `T - R`.
    pub fn greed(&self) -> f64 {
        self.temptation - self.reward
    }

    pub fn is_social_dilemma(&self) -> bool {
        let (r, p, t, s) = (self.reward, self.punishment, self.temptation, self.sucker);
        r > p && r > s && r > (t + s) / 2.0 && (t > r || p > s)
    }

    pub fn payoff(&self, a1: Action, a2: Action) -> (f64, f64) {
        match (a1, a2) {
            (C, C) => (self.reward, self.reward),
            (C, D) => (self.sucker, self.temptation),
            (D, C) => (self.temptation, self.sucker),
            (D, D) => (self.punishment, self.punishment),
        }
    }

    /// Player 1's payoff in each outcome, ordered CC, CD, DC, DD.
    pub fn row_payoffs(&self) -> [f64; 4] {
        [self.reward, self.sucker, self.temptation, self.punishment]
    }

    /// Expected payoffs when player 1 cooperates with probability `p` and
    /// player 2 with probability `q`.
    pub fn expected_values(&self, p: f64, q: f64) -> Result<(f64, f64)> {
        check_prob(p)?;
        check_prob(q)?;
        Ok((self.value_closed_form(p, q), self.value_closed_form(q, p)))
    }

    fn value_closed_form(&self, p: f64, q: f64) -> f64 {
        p * q * self.reward
            + p * (1.0 - q) * self.sucker
            + (1.0 - p) * q * self.temptation
            + (1.0 - p) * (1.0 - q) * self.punishment
    }

    /// Closed form of [`MatrixGame::value_grad`]. The trait itself uses the
    /// enumeration so that every game shares one rounding behaviour.
    pub fn value_grad_closed_form(
        &self,
        player: usize,
        coop: &[f64],
        extra: Option<&[Vec<f64>]>,
    ) -> f64 {
        let (own, other) = if player == 0 {
            (coop[0], coop[1])
        } else {
            (coop[1], coop[0])
        };
        let mut dv = self.dvalue_dp(other);
        if let Some(extra) = extra {
            // Own C/D against the opponent's C/D, from this player's side.
            let r = |a: Action, b: Action| {
                let o = if player == 0 {
                    outcome_index(&[a, b])
                } else {
                    outcome_index(&[b, a])
                };
                extra[o][player]
            };
            dv += other * (r(C, C) - r(D, C)) + (1.0 - other) * (r(C, D) - r(D, D));
        }
        own * (1.0 - own) * dv
    }

    /// Closed form of [`MatrixGame::welfare_grad`].
    pub fn welfare_grad_closed_form(&self, player: usize, coop: &[f64]) -> f64 {
        let (own, other) = if player == 0 {
            (coop[0], coop[1])
        } else {
            (coop[1], coop[0])
        };
        let (r, p, t, s) = (self.reward, self.punishment, self.temptation, self.sucker);
        own * (1.0 - own) * (other * (2.0 * r - t - s) + (1.0 - other) * (t + s - 2.0 * p))
    }

    /// `∂V_1/∂p` at opponent cooperation `q`.
    fn dvalue_dp(&self, q: f64) -> f64 {
        q * (self.reward - self.temptation) + (1.0 - q) * (self.sucker - self.punishment)
    }
}

fn check_prob(p: f64) -> Result<()> {
    if (0.0..=1.0).contains(&p) {
        Ok(())
    } else {
        Err(Error::Domain(format!("probability {p} outside [0, 1]")))
    }
}

impl MatrixGame for GamePayoffs {
    fn n_players(&self) -> usize {
        2
    }

    fn outcome_payoff(&self, player: usize, outcome: usize) -> f64 {
        let (u1, u2) = self.payoff(action_in(outcome, 0, 2), action_in(outcome, 1, 2));
        if player == 0 {
            u1
        } else {
            u2
        }
    }

    fn values(&self, coop: &[f64]) -> Vec<f64> {
        let (p, q) = (coop[0], coop[1]);
        vec![self.value_closed_form(p, q), self.value_closed_form(q, p)]
    }
}

impl FromStr for GamePayoffs {
    type Err = Error;

    /// Accepts `pd`, `chicken`, `staghunt` or `fear:greed`.
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "pd" | "prisoners_dilemma" => Ok(Self::prisoners_dilemma()),
            "chicken" => Ok(Self::chicken()),
            "staghunt" | "stag_hunt" | "stag" => Ok(Self::stag_hunt()),
            other => {
                let (f, g) = other
                    .split_once(':')
                    .ok_or_else(|| Error::Config(format!("unknown game '{s}'")))?;
                let parse = |x: &str| {
                    x.trim()
                        .parse::<f64>()
                        .map_err(|_| Error::Config(format!("bad fear:greed pair '{s}'")))
                };
                Ok(Self::from_fear_greed(parse(f)?, parse(g)?))
            }
        }
    }
}

/// Per-player payoffs of the game modified by the planner's extra rewards.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EffectiveGame {
    pub player1: GamePayoffs,
    pub player2: GamePayoffs,
}

/// Adds per-outcome extra rewards (`extra[outcome] = (r1, r2)`, outcomes
/// ordered CC, CD, DC, DD) to the base game. Fear and greed of the modified
/// game are read off each player's view.
pub fn effective_payoffs(g: &GamePayoffs, extra: &[(f64, f64); 4]) -> EffectiveGame {
    let player1 = GamePayoffs::new(
        g.reward + extra[0].0,
        g.punishment + extra[3].0,
        g.temptation + extra[2].0,
        g.sucker + extra[1].0,
    );
    // Player 2 is the sucker in DC and the tempted defector in CD.
    let player2 = GamePayoffs::new(
        g.reward + extra[0].1,
        g.punishment + extra[3].1,
        g.temptation + extra[1].1,
        g.sucker + extra[2].1,
    );
    EffectiveGame { player1, player2 }
}

/// One action per player.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ActionProfile(pub Vec<Action>);

impl ActionProfile {
    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// N-player Prisoner's Dilemma: 3 if everyone cooperates, 1 if everyone
/// defects, 4 for the sole defector, 0 for the sole cooperator, linear in
/// the number of cooperating opponents in between.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct MultiPlayerPD {
    pub n: usize,
}

impl MultiPlayerPD {
    pub fn new(n: usize) -> Result<Self> {
        if n < 2 {
            return Err(Error::Domain(format!("need at least 2 players, got {n}")));
        }
        Ok(MultiPlayerPD { n })
    }

    fn payoff_for(&self, own: Action, cooperating_others: usize) -> f64 {
        let share = 3.0 * cooperating_others as f64 / (self.n - 1) as f64;
        match own {
            Action::Cooperate => share,
            Action::Defect => 1.0 + share,
        }
    }

    pub fn payoff(&self, i: usize, profile: &ActionProfile) -> Result<f64> {
        if profile.len() != self.n {
            return Err(Error::Domain(format!(
                "profile has {} actions for {} players",
                profile.len(),
                self.n
            )));
        }
        if i >= self.n {
            return Err(Error::Domain(format!(
                "player {i} out of range for {} players",
                self.n
            )));
        }
        let others = profile
            .0
            .iter()
            .enumerate()
            .filter(|&(j, a)| j != i && a.is_cooperate())
            .count();
        Ok(self.payoff_for(profile.0[i], others))
    }
}

impl MatrixGame for MultiPlayerPD {
    fn n_players(&self) -> usize {
        self.n
    }

    fn outcome_payoff(&self, player: usize, outcome: usize) -> f64 {
        let n = self.n;
        let others = (0..n)
            .filter(|&j| j != player && action_in(outcome, j, n).is_cooperate())
            .count();
        self.payoff_for(action_in(outcome, player, n), others)
    }
}
