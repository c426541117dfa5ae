//! Semi-black-box response model.
//!
//! The logit bias of every segment is `a = -2 e(x)`, where `e(x)` is the
//! elasticity at market cost produced by a network shared across segments
//! from one-hot contextual features `x`. Each segment keeps its own
//! sensitivity `b = exp(log_b)`. Training minimises the cross-entropy between
//! observed and predicted shares, averaged over all observations, with Adam.

mod logit;
mod network;
mod vocab;

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

pub use logit::{fit_independent_logit, rmae, LogitFit};
pub use network::{Dense, ElasticityNetwork, InitScheme};
pub use vocab::{FeatureBlock, FeatureVocabulary};

use crate::error::{Error, Result};
use crate::response::Segment;
use crate::rng;

/// Observed shares are clamped to `[SHARE_FLOOR, 1 - SHARE_FLOOR]`.
pub const SHARE_FLOOR: f64 = 1e-6;

pub const FORMAT_VERSION: &str = "sbb-v1";

#[derive(Debug, Clone, PartialEq)]
pub struct Observation {
    pub segment: String,
    pub cost: f64,
    /// Observed share, already clamped.
    pub share: f64,
    pub weight: f64,
}

impl Observation {
    pub fn new(segment: impl Into<String>, cost: f64, share: f64) -> Self {
        Self {
            segment: segment.into(),
            cost,
            share: share.clamp(SHARE_FLOOR, 1.0 - SHARE_FLOOR),
            weight: 1.0,
        }
    }

    pub fn from_sales(segment: impl Into<String>, cost: f64, sales: f64, size: f64) -> Self {
        Self::new(segment, cost, sales / size)
    }

    pub fn with_weight(mut self, weight: f64) -> Self {
        self.weight = weight;
        self
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SegmentContext {
    pub id: String,
    pub context: Vec<(String, String)>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrainingSet {
    pub segments: Vec<SegmentContext>,
    pub observations: Vec<Observation>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub epochs: usize,
    pub beta1: f64,
    pub beta2: f64,
    pub adam_epsilon: f64,
    pub seed: u64,
    pub init: InitScheme,
    /// Observations per step; `None` for full-batch steps.
    pub batch_size: Option<usize>,
    pub hidden_width: usize,
    pub depth: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 0.01,
            epochs: 200,
            beta1: 0.9,
            beta2: 0.999,
            adam_epsilon: 1e-8,
            seed: 0,
            init: InitScheme::default(),
            batch_size: None,
            hidden_width: 16,
            depth: 5,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidConfig(m.into()));
        if !(self.learning_rate > 0.0) || !self.learning_rate.is_finite() {
            return bad("learning rate must be positive");
        }
        if self.epochs == 0 {
            return bad("epochs must be at least 1");
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return bad("Adam decay rates must lie in [0, 1)");
        }
        if !(self.adam_epsilon > 0.0) {
            return bad("Adam epsilon must be positive");
        }
        if self.batch_size == Some(0) {
            return bad("batch size must be at least 1");
        }
        if self.hidden_width == 0 || self.depth == 0 {
            return bad("network needs positive width and depth");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSegment {
    pub id: String,
    pub context: BTreeMap<String, String>,
    pub log_b: f64,
}

impl ModelSegment {
    fn context_pairs(&self) -> Vec<(String, String)> {
        self.context.iter().map(|(k, v)| (k.clone(), v.clone())).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SemiBlackBoxModel {
    pub vocabulary: FeatureVocabulary,
    pub network: ElasticityNetwork,
    /// Sorted by id.
    pub segments: Vec<ModelSegment>,
}

#[derive(Serialize, Deserialize)]
struct ModelDocument {
    version: String,
    #[serde(flatten)]
    model: SemiBlackBoxModel,
}

fn logistic(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

fn softplus(z: f64) -> f64 {
    if z > 0.0 {
        z + (-z).exp().ln_1p()
    } else {
        z.exp().ln_1p()
    }
}

/// Cross-entropy of one observation at logit `z`, and its derivative in `z`.
fn observation_loss(z: f64, share: f64) -> (f64, f64) {
    (softplus(z) - share * z, logistic(z) - share)
}

impl SemiBlackBoxModel {
    pub fn new(vocabulary: FeatureVocabulary, network: ElasticityNetwork, mut segments: Vec<ModelSegment>) -> Result<Self> {
        segments.sort_by(|x, y| x.id.cmp(&y.id));
        let model = Self {
            vocabulary,
            network,
            segments,
        };
        model.validate()?;
        Ok(model)
    }

    fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Model(m));
        if self.network.layers.is_empty() {
            return bad("network has no layers".into());
        }
        if self.network.input_width() != self.vocabulary.width() {
            return bad(format!(
                "network input width {} does not match vocabulary width {}",
                self.network.input_width(),
                self.vocabulary.width()
            ));
        }
        let mut width = self.network.input_width();
        for (l, layer) in self.network.layers.iter().enumerate() {
            if layer.inputs != width
                || layer.weights.len() != layer.inputs * layer.outputs
                || layer.bias.len() != layer.outputs
            {
                return bad(format!("layer {l} has inconsistent shape"));
            }
            width = layer.outputs;
        }
        if width != 1 {
            return bad("network output must be scalar".into());
        }
        if self.segments.windows(2).any(|w| w[0].id >= w[1].id) {
            return bad("duplicate segment ids".into());
        }
        for s in &self.segments {
            let b = s.log_b.exp();
            if !(b.is_finite() && b > 0.0) {
                return bad(format!("segment {} has sensitivity exp({}) out of range", s.id, s.log_b));
            }
        }
        Ok(())
    }

    fn index(&self, id: &str) -> Result<usize> {
        self.segments
            .binary_search_by(|s| s.id.as_str().cmp(id))
            .map_err(|_| Error::UnknownSegment(id.to_string()))
    }

    pub fn contains(&self, id: &str) -> bool {
        self.index(id).is_ok()
    }

    fn inputs(&self) -> Vec<Vec<f64>> {
        self.segments
            .iter()
            .map(|s| self.vocabulary.encode(&s.context_pairs()))
            .collect()
    }

    /// Network output `e(x)` for a segment.
    pub fn elasticity_at_market_cost(&self, id: &str) -> Result<f64> {
        let s = &self.segments[self.index(id)?];
        Ok(self.network.forward(&self.vocabulary.encode(&s.context_pairs())))
    }

    /// Logit parameters `(a, b)` of a segment.
    pub fn logit_params(&self, id: &str) -> Result<(f64, f64)> {
        let e = self.elasticity_at_market_cost(id)?;
        Ok((-2.0 * e, self.segments[self.index(id)?].log_b.exp()))
    }

    pub fn predict_share(&self, id: &str, cost: f64) -> Result<f64> {
        let (a, b) = self.logit_params(id)?;
        Ok(logistic(a + b * cost))
    }

    /// Response curve of a segment with market size `size`.
    pub fn export_segment(&self, id: &str, size: f64) -> Result<Segment> {
        let (a, b) = self.logit_params(id)?;
        let s = &self.segments[self.index(id)?];
        Ok(Segment::new(id, size, a, b)?.with_context(s.context_pairs()))
    }

    /// Network parameters followed by one `log_b` per segment.
    pub fn params(&self) -> Vec<f64> {
        let mut p = self.network.params();
        p.extend(self.segments.iter().map(|s| s.log_b));
        p
    }

    pub fn set_params(&mut self, params: &[f64]) {
        let n = self.network.param_count();
        self.network.set_params(&params[..n]);
        for (s, &v) in self.segments.iter_mut().zip(&params[n..]) {
            s.log_b = v;
        }
    }

    /// Mean cross-entropy over `obs`.
    pub fn nll_loss(&self, obs: &[Observation]) -> Result<f64> {
        let all: Vec<usize> = (0..obs.len()).collect();
        Ok(self.evaluate(&self.inputs(), obs, &self.owners(obs)?, &all, false)?.0)
    }

    /// Loss and its gradient laid out as [`Self::params`].
    pub fn loss_and_grad(&self, obs: &[Observation]) -> Result<(f64, Vec<f64>)> {
        let all: Vec<usize> = (0..obs.len()).collect();
        let (loss, grad) = self.evaluate(&self.inputs(), obs, &self.owners(obs)?, &all, true)?;
        Ok((loss, grad.expect("gradient requested")))
    }

    fn owners(&self, obs: &[Observation]) -> Result<Vec<usize>> {
        obs.iter().map(|o| self.index(&o.segment)).collect()
    }

    fn evaluate(
        &self,
        inputs: &[Vec<f64>],
        obs: &[Observation],
        owner: &[usize],
        subset: &[usize],
        want_grad: bool,
    ) -> Result<(f64, Option<Vec<f64>>)> {
        if subset.is_empty() {
            return Err(Error::EmptyDataset);
        }
        let total_weight: f64 = subset.iter().map(|&k| obs[k].weight).sum();
        if !(total_weight > 0.0) || !total_weight.is_finite() {
            return Err(Error::InvalidConfig("observation weights must sum to a positive value".into()));
        }

        let mut by_segment: Vec<Vec<usize>> = vec![Vec::new(); self.segments.len()];
        for &k in subset {
            by_segment[owner[k]].push(k);
        }

        let n_net = self.network.param_count();
        let mut grad = want_grad.then(|| vec![0.0; n_net + self.segments.len()]);
        let mut loss = 0.0;
        for (i, members) in by_segment.iter().enumerate() {
            if members.is_empty() {
                continue;
            }
            let trace = self.network.trace(&inputs[i]);
            let e = trace.output();
            let b = self.segments[i].log_b.exp();
            let (mut d_e, mut d_log_b) = (0.0, 0.0);
            for &k in members {
                let o = &obs[k];
                let w = o.weight / total_weight;
                let (l, dz) = observation_loss(-2.0 * e + b * o.cost, o.share);
                loss += w * l;
                d_e += -2.0 * w * dz;
                d_log_b += w * dz * b * o.cost;
            }
            if let Some(g) = grad.as_mut() {
                self.network.backward(&trace, d_e, &mut g[..n_net]);
                g[n_net + i] += d_log_b;
            }
        }
        Ok((loss, grad))
    }

    pub fn to_json(&self) -> String {
        let doc = ModelDocument {
            version: FORMAT_VERSION.to_string(),
            model: self.clone(),
        };
        serde_json::to_string_pretty(&doc).expect("model serialises")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let doc: ModelDocument = serde_json::from_str(text).map_err(|e| Error::Model(e.to_string()))?;
        if doc.version != FORMAT_VERSION {
            return Err(Error::Model(format!("unsupported model version {:?}", doc.version)));
        }
        Self::new(doc.model.vocabulary, doc.model.network, doc.model.segments)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainedModel {
    pub model: SemiBlackBoxModel,
    pub initial_loss: f64,
    pub final_loss: f64,
}

/// Fits the shared network and per-segment sensitivities with Adam.
pub fn train(set: &TrainingSet, cfg: &TrainConfig) -> Result<TrainedModel> {
    cfg.validate()?;
    if set.observations.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let vocabulary = FeatureVocabulary::fit(set.segments.iter().map(|s| s.context.as_slice()));
    let network = ElasticityNetwork::new(vocabulary.width(), cfg.hidden_width, cfg.depth, cfg.init, cfg.seed);
    let segments = set
        .segments
        .iter()
        .map(|s| ModelSegment {
            id: s.id.clone(),
            context: s.context.iter().cloned().collect(),
            log_b: 0.0,
        })
        .collect();
    let mut model = SemiBlackBoxModel::new(vocabulary, network, segments)?;
    if model.segments.len() != set.segments.len() {
        return Err(Error::Model("duplicate segment ids".into()));
    }

    let obs = &set.observations;
    let owner = model.owners(obs)?;
    let inputs = model.inputs();
    let all: Vec<usize> = (0..obs.len()).collect();
    let initial_loss = model.evaluate(&inputs, obs, &owner, &all, false)?.0;

    let mut params = model.params();
    let mut m = vec![0.0; params.len()];
    let mut v = vec![0.0; params.len()];
    let mut order = all.clone();
    let batch = cfg.batch_size.unwrap_or(obs.len()).min(obs.len());
    let mut shuffler = rng::stream(cfg.seed, 1);
    let mut step = 0i32;
    for _ in 0..cfg.epochs {
        if cfg.batch_size.is_some() {
            order.shuffle(&mut shuffler);
        }
        for chunk in order.chunks(batch) {
            let (_, grad) = model.evaluate(&inputs, obs, &owner, chunk, true)?;
            let grad = grad.expect("gradient requested");
            step += 1;
            let c1 = 1.0 - cfg.beta1.powi(step);
            let c2 = 1.0 - cfg.beta2.powi(step);
            for k in 0..params.len() {
                m[k] = cfg.beta1 * m[k] + (1.0 - cfg.beta1) * grad[k];
                v[k] = cfg.beta2 * v[k] + (1.0 - cfg.beta2) * grad[k] * grad[k];
                params[k] -= cfg.learning_rate * (m[k] / c1) / ((v[k] / c2).sqrt() + cfg.adam_epsilon);
            }
            model.set_params(&params);
        }
    }
    let final_loss = model.evaluate(&inputs, obs, &owner, &all, false)?.0;
    if !final_loss.is_finite() {
        return Err(Error::NonConvergence {
            what: "semi-black-box training",
            iterations: step as usize,
        });
    }
    Ok(TrainedModel {
        model,
        initial_loss,
        final_loss,
    })
}
