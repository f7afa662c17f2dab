//! Evaluation splits, proxy minibatch sampling, and seed streams.

mod assign;
mod sampler;
mod seeds;

pub use assign::{checkerboard_split, uar_site_split, CheckerboardConfig, Offset, Role, SplitAssignment};
pub use sampler::{
    draw_proxy_targets, sample_proxy_batch, DomainMask, ProxyDomain, SamplerConfig, SamplingMode,
    MAX_REDRAW_ROUNDS,
};
pub use seeds::{make_seed_streams, StreamRng, SeedStreams};
