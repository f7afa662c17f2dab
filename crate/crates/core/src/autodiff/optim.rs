//! AdamW with global-norm clipping, plateau learning-rate decay and early stopping.
//!
//! Only parameters that were reachable from the loss (their `touched` flag is
//! set) are updated, so groups outside the loss graph stay bit-identical,
//! including under weight decay.

use super::params::ParamSet;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamWConfig<S> {
    pub lr: S,
    pub beta1: S,
    pub beta2: S,
    pub eps: S,
    pub weight_decay: S,
    /// Maximum global L2 norm of the gradient; non-positive disables clipping.
    pub clip_norm: S,
}

impl<S: Scalar> Default for AdamWConfig<S> {
    fn default() -> Self {
        Self {
            lr: S::of(3e-4),
            beta1: S::of(0.9),
            beta2: S::of(0.999),
            eps: S::of(1e-8),
            weight_decay: S::of(0.01),
            clip_norm: S::one(),
        }
    }
}

/// Reduce-on-plateau schedule (minimization, absolute threshold).
#[derive(Debug, Clone, PartialEq)]
pub struct PlateauState<S> {
    pub factor: S,
    pub patience: usize,
    pub threshold: S,
    pub best: Option<S>,
    pub bad_rounds: usize,
}

impl<S: Scalar> PlateauState<S> {
    pub fn new(factor: S, patience: usize, threshold: S) -> Self {
        Self {
            factor,
            patience,
            threshold,
            best: None,
            bad_rounds: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EarlyStopState<S> {
    pub patience: usize,
    pub threshold: S,
    pub best: Option<S>,
    pub bad_rounds: usize,
}

#[derive(Debug, Clone)]
struct Moments<S> {
    first: Vec<S>,
    second: Vec<S>,
    steps: u64,
}

#[derive(Debug, Clone)]
pub struct OptimizerState<S> {
    pub config: AdamWConfig<S>,
    /// Indexed `[group][param]`; allocated lazily on first update.
    moments: Vec<Vec<Option<Moments<S>>>>,
    step: u64,
    pub plateau: PlateauState<S>,
    pub early_stop: EarlyStopState<S>,
}

/// Outcome of one optimizer step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepReport<S> {
    /// Global gradient norm before clipping.
    pub grad_norm: S,
    /// Norm of the gradient actually applied.
    pub applied_norm: S,
    pub updated_tensors: usize,
}

impl<S: Scalar> OptimizerState<S> {
    pub fn new(config: AdamWConfig<S>) -> Self {
        Self {
            config,
            moments: Vec::new(),
            step: 0,
            plateau: PlateauState::new(S::of(0.5), 5, S::of(1e-4)),
            early_stop: EarlyStopState {
                patience: 15,
                threshold: S::of(1e-4),
                best: None,
                bad_rounds: 0,
            },
        }
    }

    pub fn with_plateau(mut self, factor: S, patience: usize, threshold: S) -> Self {
        self.plateau = PlateauState::new(factor, patience, threshold);
        self.early_stop.threshold = threshold;
        self
    }

    pub fn with_early_stop(mut self, patience: usize) -> Self {
        self.early_stop.patience = patience;
        self
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    pub fn lr(&self) -> S {
        self.config.lr
    }
}

/// One AdamW update over every touched tensor of every trainable group.
pub fn adamw_step<S: Scalar>(
    params: &mut ParamSet<S>,
    state: &mut OptimizerState<S>,
) -> Result<StepReport<S>> {
    let mut sq = S::zero();
    for g in params.groups().iter().filter(|g| g.trainable) {
        for p in g.params.iter().filter(|p| p.touched) {
            if let Some(grad) = p.tensor.grad() {
                if grad.iter().any(|x| !x.is_finite()) {
                    return Err(Error::NonFiniteGradient {
                        group: g.name.clone(),
                    });
                }
                sq += grad.iter().map(|&x| x * x).sum::<S>();
            }
        }
    }
    let norm = sq.sqrt();
    let cfg = state.config;
    let clip = if cfg.clip_norm > S::zero() && norm > cfg.clip_norm {
        cfg.clip_norm / norm
    } else {
        S::one()
    };

    if state.moments.len() < params.groups().len() {
        state.moments.resize(params.groups().len(), Vec::new());
    }
    let mut updated = 0;
    for (gi, group) in params.groups_mut().iter_mut().enumerate() {
        if !group.trainable {
            continue;
        }
        let slots = &mut state.moments[gi];
        if slots.len() < group.params.len() {
            slots.resize(group.params.len(), None);
        }
        for (pi, p) in group.params.iter_mut().enumerate() {
            if !p.touched {
                continue;
            }
            let (values, grad) = p.tensor.parts_mut();
            let Some(grad) = grad else { continue };
            let m = slots[pi].get_or_insert_with(|| Moments {
                first: vec![S::zero(); values.len()],
                second: vec![S::zero(); values.len()],
                steps: 0,
            });
            m.steps += 1;
            let t = m.steps as i32;
            let bc1 = S::one() - cfg.beta1.powi(t);
            let bc2 = S::one() - cfg.beta2.powi(t);
            let decay = S::one() - cfg.lr * cfg.weight_decay;
            for i in 0..values.len() {
                let g = grad[i] * clip;
                m.first[i] = cfg.beta1 * m.first[i] + (S::one() - cfg.beta1) * g;
                m.second[i] = cfg.beta2 * m.second[i] + (S::one() - cfg.beta2) * g * g;
                let mhat = m.first[i] / bc1;
                let vhat = m.second[i] / bc2;
                values[i] = values[i] * decay - cfg.lr * mhat / (vhat.sqrt() + cfg.eps);
            }
            updated += 1;
        }
    }
    state.step += 1;
    Ok(StepReport {
        grad_norm: norm,
        applied_norm: norm * clip,
        updated_tensors: updated,
    })
}

/// Feeds one validation metric (lower is better) to the scheduler and the
/// early-stopping monitor. Returns the learning rate now in effect and whether
/// training should stop.
pub fn plateau_and_early_stop<S: Scalar>(state: &mut OptimizerState<S>, val_metric: S) -> (S, bool) {
    let p = &mut state.plateau;
    match p.best {
        Some(best) if val_metric >= best - p.threshold => {
            p.bad_rounds += 1;
            if p.bad_rounds > p.patience {
                state.config.lr *= p.factor;
                p.bad_rounds = 0;
            }
        }
        _ => {
            p.best = Some(val_metric);
            p.bad_rounds = 0;
        }
    }

    let e = &mut state.early_stop;
    match e.best {
        Some(best) if val_metric >= best - e.threshold => e.bad_rounds += 1,
        _ => {
            e.best = Some(val_metric);
            e.bad_rounds = 0;
        }
    }
    (state.config.lr, e.bad_rounds >= e.patience)
}
