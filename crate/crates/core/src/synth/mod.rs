//! Synthetic space–time regression world: clustered stations, a latent
//! field of seasonal Gaussian bumps, noisy observation features, and a
//! blurred, biased, noisy proxy raster.

mod config;
mod report;
mod world;

pub use config::WorldConfig;
pub use report::{feature_oracle_r2, pearson, world_report, WorldReport};
pub use world::{generate_world, BiasField, Bump, FeatureMap, TruthOracle, World, FROZEN_SIGMAS};
