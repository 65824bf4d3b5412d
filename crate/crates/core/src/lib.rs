//! Simulation of source bias in sequential recommendation.
//!
//! Items exist in two copies, human-written and generated. A recommender is
//! trained on user histories, serves ranked lists to simulated users who
//! click under a position-based model, and is retrained on its own clicks.
//! The crate measures how the preference between the two copies evolves over
//! that loop and implements a debiasing objective that counters it.

pub mod click;
pub mod config;
pub mod data;
pub mod encoders;
pub mod engine;
pub mod error;
pub mod linalg;
pub mod losses;
pub mod metrics;
pub mod records;
pub mod seed;

pub use error::{Error, Result};
