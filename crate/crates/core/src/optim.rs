//! Step rules that turn a raw ascent gradient into a step direction.
//!
//! The caller scales the direction by its own step size, so with [`StepRule::Sgd`]
//! an update is exactly `θ ← θ + η · grad`.

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum StepRule {
    /// Plain gradient ascent.
    Sgd,
    /// Adam moment normalization with the usual defaults.
    #[default]
    Adam,
}

impl FromStr for StepRule {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "sgd" => Ok(StepRule::Sgd),
            "adam" => Ok(StepRule::Adam),
            other => Err(Error::Config(format!(
                "unknown step rule '{other}' (expected sgd or adam)"
            ))),
        }
    }
}

impl fmt::Display for StepRule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            StepRule::Sgd => "sgd",
            StepRule::Adam => "adam",
        })
    }
}

#[derive(Clone, Debug)]
pub struct Adam {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
}

impl Adam {
    pub fn new(dim: usize) -> Self {
        Adam {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            m: vec![0.0; dim],
            v: vec![0.0; dim],
            t: 0,
        }
    }

    /// Bias-corrected `m̂ / (√v̂ + ε)`.
    pub fn direction(&mut self, grad: &[f64]) -> Vec<f64> {
        assert_eq!(
            grad.len(),
            self.m.len(),
            "gradient length changed between Adam steps"
        );
        self.t = self.t.saturating_add(1);
        let c1 = 1.0 - self.beta1.powi(self.t);
        let c2 = 1.0 - self.beta2.powi(self.t);
        grad.iter()
            .zip(self.m.iter_mut().zip(self.v.iter_mut()))
            .map(|(&g, (m, v))| {
                *m = self.beta1 * *m + (1.0 - self.beta1) * g;
                *v = self.beta2 * *v + (1.0 - self.beta2) * g * g;
                (*m / c1) / ((*v / c2).sqrt() + self.eps)
            })
            .collect()
    }
}

/// Per-parameter-block optimizer state.
#[derive(Clone, Debug)]
pub enum Stepper {
    Sgd,
    Adam(Adam),
}

impl Stepper {
    pub fn new(rule: StepRule, dim: usize) -> Self {
        match rule {
            StepRule::Sgd => Stepper::Sgd,
            StepRule::Adam => Stepper::Adam(Adam::new(dim)),
        }
    }

    pub fn direction(&mut self, grad: &[f64]) -> Vec<f64> {
        match self {
            Stepper::Sgd => grad.to_vec(),
            Stepper::Adam(adam) => adam.direction(grad),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn sgd_is_identity() {
        let mut s = Stepper::new(StepRule::Sgd, 2);
        assert_eq!(s.direction(&[0.5, -2.0]), vec![0.5, -2.0]);
    }

    #[test]
    fn adam_first_step_is_sign() {
        let mut s = Stepper::new(StepRule::Adam, 3);
        let d = s.direction(&[0.3, -7.0, 0.0]);
        assert_abs_diff_eq!(d[0], 1.0, epsilon = 1e-6);
        assert_abs_diff_eq!(d[1], -1.0, epsilon = 1e-8);
        assert_eq!(d[2], 0.0);
    }

    #[test]
    fn adam_constant_gradient_stays_unit() {
        let mut a = Adam::new(1);
        for _ in 0..100 {
            let d = a.direction(&[0.25]);
            assert_abs_diff_eq!(d[0], 1.0, epsilon = 1e-6);
        }
    }

    #[test]
    fn parse_rules() {
        assert_eq!("Adam".parse::<StepRule>().unwrap(), StepRule::Adam);
        assert_eq!("sgd".parse::<StepRule>().unwrap(), StepRule::Sgd);
        assert!("rmsprop".parse::<StepRule>().is_err());
    }
}
