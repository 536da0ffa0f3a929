pub mod baselines;
pub mod checkpoint;
pub mod config;
pub mod contexts;
pub mod copy;
pub mod dataset;
pub mod error;
pub mod experiment;
pub mod folds;
pub mod kb;
pub mod metrics;
pub mod model;
pub mod nn;
pub mod synth;
pub mod text;

pub use error::{Error, Result};
