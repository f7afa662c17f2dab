use rand::Rng;

use super::regime::{Regime, Stage};
use crate::autodiff::{adamw_step, Activation, Graph, NodeId, OptimizerState, ParamSet, Tensor};
use crate::error::{Error, Result};
use crate::geo::{EncoderShape, FrozenEmbeddingTable, LocationTimeEncoder, SpaceTime, TemporalEncoder};
use crate::nn::Mlp;
use crate::scalar::Scalar;

pub const OBS_ENCODER: &str = "obs_encoder";
pub const LOC_ENCODER: &str = "loc_encoder";
pub const FUSION_HEAD: &str = "fusion_head_f";
pub const PROXY_HEAD: &str = "proxy_head_g";

/// `λ` and the per-channel proxy weights `Λ`.
#[derive(Debug, Clone, PartialEq)]
pub struct LossConfig<S> {
    pub lambda: S,
    pub weights: Vec<S>,
}

impl<S: Scalar> LossConfig<S> {
    pub fn new(lambda: S, weights: Vec<S>) -> Result<Self> {
        if !(lambda >= S::zero()) || !lambda.is_finite() {
            return Err(Error::config("lambda", "must be finite and non-negative"));
        }
        if weights.is_empty() || weights.iter().any(|w| !(*w >= S::zero()) || !w.is_finite()) {
            return Err(Error::config("proxy_weights", "need one finite non-negative weight per channel"));
        }
        Ok(Self { lambda, weights })
    }

    /// Single proxy channel with unit weight.
    pub fn scalar(lambda: S) -> Result<Self> {
        Self::new(lambda, vec![S::one()])
    }

    /// Identity weights over `m` channels.
    pub fn uniform(lambda: S, m: usize) -> Result<Self> {
        Self::new(lambda, vec![S::one(); m])
    }
}

/// Layer widths of the observation encoder and both heads.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelShape {
    /// Observation feature count `k`, before any proxy stacking.
    pub feature_dim: usize,
    /// Proxy channel count `m`.
    pub proxy_channels: usize,
    pub obs_hidden: Vec<usize>,
    /// `d1`.
    pub obs_dim: usize,
    pub head_hidden: Vec<usize>,
    pub activation: Activation,
}

impl ModelShape {
    pub fn new(feature_dim: usize, proxy_channels: usize) -> Self {
        Self {
            feature_dim,
            proxy_channels,
            obs_hidden: vec![64],
            obs_dim: 32,
            head_hidden: vec![64, 64],
            activation: Activation::Silu,
        }
    }
}

/// How the location embedding is produced.
#[derive(Debug, Clone)]
pub enum LocationSpec<S> {
    Trained {
        shape: EncoderShape,
        temporal: TemporalEncoder<S>,
    },
    Frozen(FrozenEmbeddingTable<S>),
}

#[derive(Debug, Clone)]
pub enum LocationSource<S> {
    Trained(LocationTimeEncoder<S>),
    Frozen(FrozenEmbeddingTable<S>),
}

impl<S: Scalar> LocationSource<S> {
    pub fn out_dim(&self) -> usize {
        match self {
            LocationSource::Trained(e) => e.out_dim(),
            LocationSource::Frozen(t) => t.dim(),
        }
    }
}

/// Labeled minibatch. `proxies` holds the proxy values at each sample and is
/// only read by the proxy-stacked regime.
#[derive(Debug, Clone)]
pub struct LabeledBatch<S> {
    pub features: Tensor<S>,
    pub proxies: Option<Tensor<S>>,
    pub points: Vec<SpaceTime>,
    pub targets: Vec<S>,
}

impl<S: Scalar> LabeledBatch<S> {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

/// Proxy minibatch: points with their `n × m` proxy targets.
#[derive(Debug, Clone)]
pub struct ProxyBatch<S> {
    pub points: Vec<SpaceTime>,
    pub targets: Tensor<S>,
}

impl<S: Scalar> ProxyBatch<S> {
    pub fn empty(m: usize) -> Self {
        Self {
            points: Vec::new(),
            targets: Tensor::zeros(vec![0, m]),
        }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

/// Which loss terms enter the graph. A masked term is left out entirely.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LossMask {
    pub pred: bool,
    pub proxy: bool,
}

impl Default for LossMask {
    fn default() -> Self {
        Self { pred: true, proxy: true }
    }
}

/// Loss values of one batch pair. `pc` is reported whenever a proxy batch
/// was evaluated, even if its weight is zero.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossRecord<S> {
    pub total: S,
    pub pred: S,
    pub pc: Option<S>,
}

/// Observation encoder, optional location source, prediction head `f`
/// and proxy head `g`, with parameters in the four named groups.
#[derive(Debug, Clone)]
pub struct FusionModel<S> {
    regime: Regime,
    stage: Stage,
    shape: ModelShape,
    loss: LossConfig<S>,
    params: ParamSet<S>,
    obs: Mlp,
    location: Option<LocationSource<S>>,
    head_f: Mlp,
    head_g: Option<Mlp>,
}

impl<S: Scalar> FusionModel<S> {
    /// Builds the model. `rff_rng` draws the fixed frequency bank, `init_rng`
    /// every trainable weight, in group order.
    pub fn new<R: Rng>(
        regime: Regime,
        shape: ModelShape,
        loss: LossConfig<S>,
        location: Option<LocationSpec<S>>,
        rff_rng: &mut R,
        init_rng: &mut R,
    ) -> Result<Self> {
        if shape.feature_dim == 0 {
            return Err(Error::config("features", "at least one observation feature is required"));
        }
        if loss.weights.len() != shape.proxy_channels {
            return Err(Error::config(
                "proxy_weights",
                format!("{} weights for {} proxy channels", loss.weights.len(), shape.proxy_channels),
            ));
        }
        match (&location, regime) {
            (None, Regime::ObsOnly | Regime::ProxyStacked) => {}
            (Some(LocationSpec::Frozen(_)), Regime::FrozenLe) => {}
            (Some(LocationSpec::Trained { .. }), r) if r.trains_location() => {}
            (None, _) => return Err(Error::NoLocationEncoder),
            _ => {
                return Err(Error::config(
                    "regime",
                    format!("location source does not match regime {regime}"),
                ))
            }
        }

        let mut params = ParamSet::new();
        let obs_group = params.add_group(OBS_ENCODER, true)?;
        let obs_in = shape.feature_dim + if regime == Regime::ProxyStacked { shape.proxy_channels } else { 0 };
        let obs_dims: Vec<usize> = std::iter::once(obs_in)
            .chain(shape.obs_hidden.iter().copied())
            .chain(std::iter::once(shape.obs_dim))
            .collect();
        let obs = Mlp::new(&mut params, obs_group, "obs", &obs_dims, shape.activation, init_rng)?;

        let location = match location {
            None => None,
            Some(spec) => {
                let group = params.add_group(LOC_ENCODER, true)?;
                Some(match spec {
                    LocationSpec::Trained { shape: enc, temporal } => LocationSource::Trained(
                        LocationTimeEncoder::new(&enc, temporal, &mut params, group, rff_rng, init_rng)?,
                    ),
                    LocationSpec::Frozen(table) => LocationSource::Frozen(table),
                })
            }
        };
        let d2 = location.as_ref().map_or(0, LocationSource::out_dim);

        let f_group = params.add_group(FUSION_HEAD, true)?;
        let head_f = Mlp::new(
            &mut params,
            f_group,
            "f",
            &widths(shape.obs_dim + d2, &shape.head_hidden, 1),
            shape.activation,
            init_rng,
        )?;
        let head_g = match &location {
            Some(_) => {
                if shape.proxy_channels == 0 {
                    return Err(Error::config("proxy_channels", "the proxy head needs at least one channel"));
                }
                let g_group = params.add_group(PROXY_HEAD, true)?;
                Some(Mlp::new(
                    &mut params,
                    g_group,
                    "g",
                    &widths(d2, &shape.head_hidden, shape.proxy_channels),
                    shape.activation,
                    init_rng,
                )?)
            }
            None => None,
        };

        let mut model = Self {
            regime,
            stage: Stage::Joint,
            shape,
            loss,
            params,
            obs,
            location,
            head_f,
            head_g,
        };
        if regime == Regime::ProxyPretrain {
            model.stage = Stage::Pretrain;
        }
        model.apply_trainability()?;
        Ok(model)
    }

    pub fn regime(&self) -> Regime {
        self.regime
    }

    pub fn stage(&self) -> Stage {
        self.stage
    }

    pub fn shape(&self) -> &ModelShape {
        &self.shape
    }

    pub fn loss_config(&self) -> &LossConfig<S> {
        &self.loss
    }

    pub fn params(&self) -> &ParamSet<S> {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamSet<S> {
        &mut self.params
    }

    pub fn location(&self) -> Option<&LocationSource<S>> {
        self.location.as_ref()
    }

    /// Width of the observation encoder input.
    pub fn obs_input_dim(&self) -> usize {
        self.obs.in_dim()
    }

    /// Weight on the proxy loss in the current regime and stage. Regimes
    /// without the proxy loss use zero whatever `λ` is configured; the
    /// pretraining stage optimizes the proxy loss alone with unit weight.
    pub fn effective_lambda(&self) -> S {
        match (self.regime, self.stage) {
            (Regime::TrainedLePcl, _) => self.loss.lambda,
            (Regime::ProxyPretrain, Stage::Pretrain) => S::one(),
            _ => S::zero(),
        }
    }

    /// Whether proxy batches are scored at all; with zero weight the value is
    /// still reported for logging.
    fn evaluates_proxy_loss(&self) -> bool {
        self.regime.uses_proxy_loss() && self.stage != Stage::Finetune
    }

    fn trainable_groups(&self) -> &'static [&'static str] {
        match (self.regime, self.stage) {
            (Regime::TrainedLe, _) => &[OBS_ENCODER, LOC_ENCODER, FUSION_HEAD],
            (Regime::TrainedLePcl, _) => &[OBS_ENCODER, LOC_ENCODER, FUSION_HEAD, PROXY_HEAD],
            (Regime::ProxyPretrain, Stage::Pretrain) => &[LOC_ENCODER, PROXY_HEAD],
            _ => &[OBS_ENCODER, FUSION_HEAD],
        }
    }

    fn apply_trainability(&mut self) -> Result<()> {
        let trainable = self.trainable_groups();
        let names: Vec<String> = self.params.groups().iter().map(|g| g.name.clone()).collect();
        for name in names {
            self.params.set_trainable(&name, trainable.contains(&name.as_str()))?;
        }
        Ok(())
    }

    /// Moves the two-stage regime from pretraining to fine-tuning: the proxy
    /// head is dropped from use and the location encoder frozen.
    pub fn finish_pretrain(&mut self) -> Result<()> {
        if self.regime != Regime::ProxyPretrain || self.stage != Stage::Pretrain {
            return Err(Error::UnsupportedRegime {
                op: "finish_pretrain",
                regime: self.regime.name().into(),
            });
        }
        self.stage = Stage::Finetune;
        self.apply_trainability()
    }

    fn check_batch(&self, batch: &LabeledBatch<S>) -> Result<()> {
        let n = batch.len();
        let k = self.shape.feature_dim;
        if batch.features.shape() != [n, k] {
            return Err(Error::shape(
                "predict",
                format!(
                    "regime {} expects features {n}×{k}, got {:?}",
                    self.regime,
                    batch.features.shape()
                ),
            ));
        }
        if self.regime == Regime::ProxyStacked {
            let m = self.shape.proxy_channels;
            match &batch.proxies {
                Some(z) if z.shape() == [n, m] => {}
                other => {
                    return Err(Error::shape(
                        "predict",
                        format!(
                            "regime {} expects stacked proxies {n}×{m}, got {:?}",
                            self.regime,
                            other.as_ref().map(|z| z.shape().to_vec())
                        ),
                    ))
                }
            }
        }
        if batch.targets.len() != n && !batch.targets.is_empty() {
            return Err(Error::shape("predict", format!("{} targets for {n} samples", batch.targets.len())));
        }
        Ok(())
    }

    /// Location embedding rows for `points`, `n × d2`.
    fn location_node(&self, g: &mut Graph<S>, points: &[SpaceTime]) -> Result<NodeId> {
        match &self.location {
            Some(LocationSource::Trained(enc)) => enc.embed(g, &self.params, points),
            Some(LocationSource::Frozen(table)) => {
                Ok(g.input(table.lookup_many(points.iter().map(|p| (p.lon, p.lat)))?))
            }
            None => Err(Error::NoLocationEncoder),
        }
    }

    fn prediction_node(&self, g: &mut Graph<S>, batch: &LabeledBatch<S>) -> Result<NodeId> {
        self.check_batch(batch)?;
        let mut x = g.input(batch.features.clone_values());
        if self.regime == Regime::ProxyStacked {
            let z = g.input(batch.proxies.as_ref().expect("checked").clone_values());
            x = g.concat(&[x, z])?;
        }
        let e_obs = self.obs.forward(g, &self.params, x)?;
        let h = if self.location.is_some() {
            let e_loc = self.location_node(g, &batch.points)?;
            g.concat(&[e_obs, e_loc])?
        } else {
            e_obs
        };
        self.head_f.forward(g, &self.params, h)
    }

    fn proxy_node(&self, g: &mut Graph<S>, points: &[SpaceTime]) -> Result<NodeId> {
        let head = self.head_g.as_ref().ok_or(Error::UnsupportedRegime {
            op: "proxy_predict",
            regime: self.regime.name().into(),
        })?;
        let e_loc = self.location_node(g, points)?;
        head.forward(g, &self.params, e_loc)
    }

    /// Predictions `ŷ` for every sample of the batch; targets are ignored.
    pub fn predict(&self, batch: &LabeledBatch<S>) -> Result<Vec<S>> {
        let mut g = Graph::new();
        let y = self.prediction_node(&mut g, batch)?;
        Ok(g.value(y).values().to_vec())
    }

    /// Proxy reconstruction `ẑ = g(e_loc)` at each point, row-major `n × m`.
    pub fn proxy_predict_many(&self, points: &[SpaceTime]) -> Result<Vec<S>> {
        let mut g = Graph::new();
        let z = self.proxy_node(&mut g, points)?;
        Ok(g.value(z).values().to_vec())
    }

    pub fn proxy_predict(&self, point: SpaceTime) -> Result<Vec<S>> {
        self.proxy_predict_many(&[point])
    }

    /// Location embeddings, row-major `n × d2`.
    pub fn embed_locations(&self, points: &[SpaceTime]) -> Result<Vec<S>> {
        match &self.location {
            Some(LocationSource::Trained(enc)) => enc.embed_many(&self.params, points),
            Some(LocationSource::Frozen(t)) => Ok(t.lookup_many(points.iter().map(|p| (p.lon, p.lat)))?.into_values()),
            None => Err(Error::NoLocationEncoder),
        }
    }

    /// Records the loss on `g`. Returns the node to differentiate (absent
    /// when every term is masked) and the loss values.
    fn build_loss(
        &self,
        g: &mut Graph<S>,
        labeled: &LabeledBatch<S>,
        proxy: &ProxyBatch<S>,
        mask: LossMask,
    ) -> Result<(Option<NodeId>, LossRecord<S>)> {
        if let Some(i) = labeled.targets.iter().position(|t| !t.is_finite()) {
            return Err(Error::NonFiniteTarget(i));
        }
        if labeled.targets.len() != labeled.len() {
            return Err(Error::shape("loss_total", format!("{} targets for {} samples", labeled.targets.len(), labeled.len())));
        }
        let lambda = self.effective_lambda();
        let pred = if mask.pred && !labeled.is_empty() {
            let y_hat = self.prediction_node(g, labeled)?;
            let y = g.input(Tensor::matrix(labeled.len(), 1, labeled.targets.clone())?);
            Some(g.mse(y_hat, y)?)
        } else {
            None
        };

        let pc = if mask.proxy && self.evaluates_proxy_loss() && !proxy.is_empty() {
            let m = self.shape.proxy_channels;
            if proxy.targets.shape() != [proxy.len(), m] {
                return Err(Error::shape(
                    "loss_total",
                    format!("proxy targets {:?} for {} points and {m} channels", proxy.targets.shape(), proxy.len()),
                ));
            }
            if let Some(i) = proxy.targets.values().iter().position(|t| !t.is_finite()) {
                return Err(Error::Data(format!("non-finite proxy target at proxy index {}", i / m)));
            }
            let z_hat = self.proxy_node(g, &proxy.points)?;
            let z = g.input(proxy.targets.clone_values());
            Some(g.weighted_sq(z_hat, z, &self.loss.weights)?)
        } else {
            None
        };
        if lambda > S::zero() && mask.proxy && pc.is_none() {
            return Err(Error::config("proxy batch", "empty while the proxy loss has positive weight"));
        }

        let weighted_pc = match pc {
            Some(node) if lambda > S::zero() => Some(g.scale(node, lambda)),
            _ => None,
        };
        let total = match (pred, weighted_pc) {
            (Some(p), Some(q)) => Some(g.add(p, q)?),
            (Some(p), None) => Some(p),
            (None, q) => q,
        };
        let value = |g: &Graph<S>, n: Option<NodeId>| n.map(|n| g.value(n).values()[0]);
        let record = LossRecord {
            total: value(g, total).unwrap_or(S::zero()),
            pred: value(g, pred).unwrap_or(S::zero()),
            pc: value(g, pc),
        };
        Ok((total, record))
    }

    /// `L = L_pred + λ·L_pc` with `λ` from [`FusionModel::effective_lambda`].
    pub fn loss_total(&self, labeled: &LabeledBatch<S>, proxy: &ProxyBatch<S>, mask: LossMask) -> Result<LossRecord<S>> {
        let mut g = Graph::new();
        Ok(self.build_loss(&mut g, labeled, proxy, mask)?.1)
    }

    /// Clears gradients and back-propagates `L`, leaving the gradients on
    /// the parameters without updating them.
    pub fn compute_gradients(
        &mut self,
        labeled: &LabeledBatch<S>,
        proxy: &ProxyBatch<S>,
        mask: LossMask,
    ) -> Result<LossRecord<S>> {
        self.params.zero_grad();
        let mut g = Graph::new();
        let (total, record) = self.build_loss(&mut g, labeled, proxy, mask)?;
        if let Some(t) = total {
            g.backward(t, &mut self.params)?;
        }
        Ok(record)
    }

    /// One backward pass over `L` and one AdamW step over the trainable groups.
    pub fn train_step(
        &mut self,
        opt: &mut OptimizerState<S>,
        labeled: &LabeledBatch<S>,
        proxy: &ProxyBatch<S>,
        mask: LossMask,
    ) -> Result<LossRecord<S>> {
        let record = self.compute_gradients(labeled, proxy, mask)?;
        if let Some(group) = self.params.groups().iter().find(|g| !g.trainable && g.touched()) {
            return Err(Error::Invariant(format!("frozen group `{}` received a gradient", group.name)));
        }
        adamw_step(&mut self.params, opt)?;
        Ok(record)
    }

    /// Stage one of the two-stage regime: trains the location encoder and
    /// proxy head on the proxy loss for `epochs × steps_per_epoch` steps,
    /// then freezes the encoder. Returns the mean proxy loss of each epoch.
    pub fn proxy_pretrain(
        &mut self,
        opt: &mut OptimizerState<S>,
        epochs: usize,
        steps_per_epoch: usize,
        mut next_batch: impl FnMut() -> Result<ProxyBatch<S>>,
    ) -> Result<Vec<S>> {
        if self.stage != Stage::Pretrain {
            return Err(Error::UnsupportedRegime {
                op: "proxy_pretrain",
                regime: self.regime.name().into(),
            });
        }
        let empty = self.empty_labeled();
        let mask = LossMask { pred: false, proxy: true };
        let mut history = Vec::with_capacity(epochs);
        for _ in 0..epochs {
            let mut sum = S::zero();
            for _ in 0..steps_per_epoch {
                let batch = next_batch()?;
                sum += self.train_step(opt, &empty, &batch, mask)?.total;
            }
            history.push(sum / S::of(steps_per_epoch.max(1) as f64));
        }
        self.finish_pretrain()?;
        Ok(history)
    }

    /// A labeled batch with no rows, for proxy-only steps.
    pub fn empty_labeled(&self) -> LabeledBatch<S> {
        LabeledBatch {
            features: Tensor::zeros(vec![0, self.shape.feature_dim]),
            proxies: None,
            points: Vec::new(),
            targets: Vec::new(),
        }
    }
}

fn widths(input: usize, hidden: &[usize], output: usize) -> Vec<usize> {
    std::iter::once(input)
        .chain(hidden.iter().copied())
        .chain(std::iter::once(output))
        .collect()
}
