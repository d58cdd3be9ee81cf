//! Tabular imitation-learning laboratory.
//!
//! Offline (behavior cloning), interactive (STAGGER, TRAGGER) and hybrid
//! (WARM-STAGGER, WARM-TRAGGER) learners on finite episodic MDPs, with exact
//! annotation-cost accounting, exact policy evaluation, brute-force
//! trajectory oracles, and an experiment harness for the cliff separation
//! instance.

pub mod algorithms;
pub mod cliff;
pub mod divergence;
pub mod error;
pub mod harness;
pub mod mdp;
pub mod online;
pub mod oracle;
pub mod seed;
mod svg;
pub mod verify;

pub use error::{Error, Result};
