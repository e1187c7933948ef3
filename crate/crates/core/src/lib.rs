//! Agent-based public goods game where agents hold personal values
//! (self interest, altruism, conformity, fairness), experience a game by
//! acting randomly, fit a small neural regressor to the utility they
//! received, and then act by maximising the predicted utility.

pub mod cli;
pub mod engine;
pub mod error;
pub mod experiments;
pub mod nnet;
pub mod pgg;
pub mod seed;
pub mod values;

pub use error::{Error, Result};
