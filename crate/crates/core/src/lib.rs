//! Adaptive mechanism design for learning agents in social dilemmas.
//!
//! A planning agent hands out bounded extra rewards to independent learners
//! playing matrix games and learns, by looking one learner update ahead,
//! which rewards push the population toward mutual cooperation.

// Negated float comparisons are used on purpose so that NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod coingame;
pub mod error;
pub mod games;
pub mod gtft;
pub mod harness;
pub mod learners;
pub mod optim;
pub mod planner;
pub mod rng;

pub use error::{Error, Result};
