//! Dense reverse-mode differentiation, parameters, and the optimizer.

mod checkpoint;
mod graph;
mod optim;
mod params;
mod tensor;

pub use checkpoint::Checkpoint;
pub use graph::{Activation, Graph, NodeId};
pub use optim::{
    adamw_step, plateau_and_early_stop, AdamWConfig, EarlyStopState, OptimizerState,
    PlateauState, StepReport,
};
pub use params::{ParamId, ParamSet, Parameter, ParameterGroup};
pub use tensor::Tensor;

#[cfg(test)]
mod tests;
