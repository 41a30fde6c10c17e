//! Minibatch gradient descent and the pretrain/fine-tune recipes.

use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::layers::Act;
use super::loss::Loss;
use super::model::{sigmoid, Cache, Grads, Model};
use super::NnError;
use crate::sample::{Sample, Source};
use crate::saliency::SaliencyMap;
use crate::Real;

#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub momentum: f64,
    pub loss: Loss,
    pub seed: u64,
    pub shuffle: bool,
    /// Evaluate the samples of a batch on the rayon pool. Gradients are still
    /// reduced in batch order.
    pub parallel: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 2000,
            learning_rate: 0.01,
            batch_size: 4,
            momentum: 0.0,
            loss: Loss::Bce,
            seed: 0,
            shuffle: true,
            parallel: false,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), NnError> {
        let bad = |m: String| Err(NnError::InvalidConfig(m));
        if self.epochs == 0 {
            return bad("epochs must be at least 1".into());
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad(format!("learning rate {} must be positive", self.learning_rate));
        }
        if self.batch_size == 0 {
            return bad("batch size must be at least 1".into());
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return bad(format!("momentum {} must lie in [0, 1)", self.momentum));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct PhaseRecord {
    pub name: String,
    /// Distinct sample sources seen in this phase, sorted.
    pub sources: Vec<Source>,
    pub samples: usize,
    pub epochs: usize,
}

#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct TrainHistory {
    /// Mean objective per epoch, phases concatenated.
    pub epoch_losses: Vec<f64>,
    pub wall_time_s: f64,
    pub checksum: String,
    pub phases: Vec<PhaseRecord>,
    pub recipe: Option<String>,
    pub parallel: bool,
    pub deterministic: bool,
}

/// Objective for one sample (final-map loss plus the weighted mean per-tap
/// loss) and its parameter gradients. `only_tap` limits backpropagation to one
/// tap's path through the network.
pub fn sample_gradients<T: Real>(
    model: &Model<T>,
    input: Act<T>,
    gt: &SaliencyMap<T>,
    loss: Loss,
    only_tap: Option<usize>,
) -> (f64, Grads<T>) {
    let mut grads = model.zero_grads();
    let value = accumulate(model, input, gt, loss, only_tap, &mut grads);
    (value, grads)
}

/// Objective value only, without backpropagation.
pub fn sample_objective<T: Real>(model: &Model<T>, input: Act<T>, gt: &SaliencyMap<T>, loss: Loss) -> f64 {
    objective_from_cache(model, &model.forward_cached(input), gt, loss)
}

pub(crate) fn objective_from_cache<T: Real>(model: &Model<T>, cache: &Cache<T>, gt: &SaliencyMap<T>, loss: Loss) -> f64 {
    let probs = |a: &Act<T>| a.data.iter().map(|&z| sigmoid(z)).collect::<Vec<_>>();
    let aux = model.config().aux_loss_weight;
    let mut value = loss.value(gt.values(), &probs(&cache.logits));
    if aux > 0.0 {
        for t in &cache.tap_logits {
            value += aux * loss.value(gt.values(), &probs(t)) / 3.0;
        }
    }
    value
}

fn accumulate<T: Real>(
    model: &Model<T>,
    input: Act<T>,
    gt: &SaliencyMap<T>,
    loss: Loss,
    only_tap: Option<usize>,
    grads: &mut Grads<T>,
) -> f64 {
    let cache = model.forward_cached(input);
    let (h, w) = (cache.logits.h, cache.logits.w);
    let (mut value, g) = loss.value_and_logit_grad(gt.values(), &cache.logits.data);
    let d_logits = Act::from_data(1, h, w, g);
    let aux = model.config().aux_loss_weight;
    let d_taps = (aux > 0.0).then(|| {
        let scale = T::of(aux / 3.0);
        cache
            .tap_logits
            .iter()
            .map(|t| {
                let (v, mut g) = loss.value_and_logit_grad(gt.values(), &t.data);
                value += aux * v / 3.0;
                g.iter_mut().for_each(|x| *x *= scale);
                Act::from_data(1, h, w, g)
            })
            .collect::<Vec<_>>()
    });
    model.backward(&cache, &d_logits, d_taps.as_deref(), only_tap, grads);
    value
}

fn check_dims<T: Real>(model: &Model<T>, data: &[Sample<T>]) -> Result<(), NnError> {
    let s = model.config().input_size;
    for sample in data {
        if sample.image.width() != s {
            return Err(NnError::DimensionMismatch {
                expected: s,
                got: sample.image.width(),
            });
        }
        if sample.map.width() != s || sample.map.height() != s {
            return Err(NnError::DimensionMismatch {
                expected: s,
                got: sample.map.width(),
            });
        }
    }
    Ok(())
}

fn sources<T>(data: &[Sample<T>]) -> Vec<Source> {
    let mut s: Vec<Source> = data.iter().map(|x| x.meta.source).collect();
    s.sort_by_key(|x| x.name());
    s.dedup();
    s
}

fn run_epochs<T: Real>(
    model: &mut Model<T>,
    data: &[Sample<T>],
    cfg: &TrainConfig,
    losses: &mut Vec<f64>,
) -> Result<(), NnError> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut velocity = model.zero_grads();
    let lr = T::of(cfg.learning_rate);
    let mu = T::of(cfg.momentum);
    for epoch in 1..=cfg.epochs {
        if cfg.shuffle {
            order.shuffle(&mut rng);
        }
        let mut total = 0.0;
        for batch in order.chunks(cfg.batch_size) {
            let model_ref: &Model<T> = model;
            let per_sample = |&i: &usize| {
                let input = model_ref.input_from_image(&data[i].image).expect("dimensions checked");
                sample_gradients(model_ref, input, &data[i].map, cfg.loss, None)
            };
            let results: Vec<(f64, Grads<T>)> = if cfg.parallel {
                batch.par_iter().map(per_sample).collect()
            } else {
                batch.iter().map(per_sample).collect()
            };
            let scale = T::one() / T::of(batch.len() as f64);
            let mut sum = model.zero_grads();
            for (value, grads) in results {
                total += value;
                for (acc, g) in sum.iter_mut().zip(grads) {
                    acc.iter_mut().zip(g).for_each(|(a, x)| *a += x);
                }
            }
            for ((param, v), g) in model.params_mut().iter_mut().zip(velocity.iter_mut()).zip(&sum) {
                for ((p, vi), &gi) in param.data.iter_mut().zip(v.iter_mut()).zip(g) {
                    *vi = mu * *vi + gi * scale;
                    *p -= lr * *vi;
                }
            }
        }
        let mean = total / data.len() as f64;
        if !mean.is_finite() {
            return Err(NnError::NonFiniteLoss { epoch });
        }
        log::debug!("epoch {epoch}: loss {mean:.6}");
        losses.push(mean);
    }
    Ok(())
}

/// Train `model` on `data`; bit-identical results for identical seeds, data and configuration.
pub fn train<T: Real>(
    mut model: Model<T>,
    data: &[Sample<T>],
    cfg: &TrainConfig,
) -> Result<(Model<T>, TrainHistory), NnError> {
    cfg.validate()?;
    if data.is_empty() {
        return Err(NnError::EmptyDataset);
    }
    check_dims(&model, data)?;
    let start = Instant::now();
    let mut losses = Vec::with_capacity(cfg.epochs);
    run_epochs(&mut model, data, cfg, &mut losses)?;
    let history = TrainHistory {
        epoch_losses: losses,
        wall_time_s: start.elapsed().as_secs_f64(),
        checksum: model.checksum(),
        phases: vec![PhaseRecord {
            name: "train".into(),
            sources: sources(data),
            samples: data.len(),
            epochs: cfg.epochs,
        }],
        recipe: None,
        parallel: cfg.parallel,
        deterministic: true,
    };
    Ok((model, history))
}

/// Training strategies: optional pretraining corpus followed by a fine-tuning corpus.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Recipe {
    V1,
    V2,
    V3,
    V4,
    V5,
    /// Any combination; no source checks.
    Custom,
}

impl Recipe {
    pub const ALL: [Recipe; 6] = [Recipe::V1, Recipe::V2, Recipe::V3, Recipe::V4, Recipe::V5, Recipe::Custom];

    pub fn name(self) -> &'static str {
        match self {
            Recipe::V1 => "v1",
            Recipe::V2 => "v2",
            Recipe::V3 => "v3",
            Recipe::V4 => "v4",
            Recipe::V5 => "v5",
            Recipe::Custom => "custom",
        }
    }

    /// Required source of the pretraining corpus; `None` means no pretraining.
    pub fn pretrain_source(self) -> Option<Source> {
        match self {
            Recipe::V1 | Recipe::V3 => Some(Source::Gd),
            Recipe::V2 | Recipe::V4 => Some(Source::External),
            Recipe::V5 | Recipe::Custom => None,
        }
    }

    /// Required source of the fine-tuning corpus.
    pub fn finetune_source(self) -> Option<Source> {
        match self {
            Recipe::V1 | Recipe::V2 | Recipe::V5 => Some(Source::Et),
            Recipe::V3 | Recipe::V4 => Some(Source::Aet),
            Recipe::Custom => None,
        }
    }

    fn check(self, phase: &str, data: &[Sample<impl Real>], want: Source) -> Result<(), NnError> {
        match data.iter().find(|s| s.meta.source != want) {
            Some(s) => Err(NnError::RecipeMismatch {
                recipe: self.name().into(),
                reason: format!("{phase} corpus must be {want}, found a {} sample", s.meta.source),
            }),
            None => Ok(()),
        }
    }
}

impl fmt::Display for Recipe {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Recipe {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        Recipe::ALL
            .into_iter()
            .find(|r| r.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| format!("unknown recipe `{s}` (expected v1..v5 or custom)"))
    }
}

/// Sequential pretraining and fine-tuning sharing one set of parameters.
/// An empty `pretrain` corpus skips that phase, which only `Custom` and `V5` allow.
pub fn pretrain_then_finetune<T: Real>(
    model: Model<T>,
    recipe: Recipe,
    pretrain: &[Sample<T>],
    finetune: &[Sample<T>],
    pretrain_cfg: &TrainConfig,
    finetune_cfg: &TrainConfig,
) -> Result<(Model<T>, TrainHistory), NnError> {
    let mismatch = |reason: &str| NnError::RecipeMismatch {
        recipe: recipe.name().into(),
        reason: reason.into(),
    };
    match recipe.pretrain_source() {
        Some(src) => {
            if pretrain.is_empty() {
                return Err(mismatch("needs a pretraining corpus"));
            }
            recipe.check("pretraining", pretrain, src)?;
        }
        None if recipe == Recipe::V5 && !pretrain.is_empty() => {
            return Err(mismatch("trains on the fine-tuning corpus only"));
        }
        None => {}
    }
    if let Some(src) = recipe.finetune_source() {
        recipe.check("fine-tuning", finetune, src)?;
    }
    let start = Instant::now();
    let mut model = model;
    let mut losses = Vec::new();
    let mut phases = Vec::new();
    let mut parallel = false;
    if !pretrain.is_empty() {
        let (m, h) = train(model, pretrain, pretrain_cfg)?;
        model = m;
        losses.extend(h.epoch_losses);
        phases.push(PhaseRecord {
            name: "pretrain".into(),
            ..h.phases.into_iter().next().expect("one phase")
        });
        parallel |= h.parallel;
    }
    let (model, h) = train(model, finetune, finetune_cfg)?;
    losses.extend(h.epoch_losses);
    phases.push(PhaseRecord {
        name: "finetune".into(),
        ..h.phases.into_iter().next().expect("one phase")
    });
    parallel |= h.parallel;
    let history = TrainHistory {
        epoch_losses: losses,
        wall_time_s: start.elapsed().as_secs_f64(),
        checksum: model.checksum(),
        phases,
        recipe: Some(recipe.name().into()),
        parallel,
        deterministic: true,
    };
    Ok((model, history))
}
