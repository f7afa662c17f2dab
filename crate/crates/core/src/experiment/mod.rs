//! Run configuration and the train/evaluate pipeline.

mod config;
mod pipeline;
mod run;
mod sweep;

pub use config::*;
pub use pipeline::*;
pub use run::*;
pub use sweep::*;
