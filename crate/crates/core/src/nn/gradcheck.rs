//! Central finite-difference verification of the backward pass.

use std::collections::hash_map::DefaultHasher;
use std::hash::Hasher;

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::layers::Act;
use super::loss::Loss;
use super::model::{Grads, Model};
use super::train::{objective_from_cache, sample_gradients};
use super::NnError;
use crate::render::Image;
use crate::saliency::SaliencyMap;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradCheckOptions {
    pub coordinates: usize,
    pub step: f64,
    pub seed: u64,
}

impl Default for GradCheckOptions {
    fn default() -> Self {
        GradCheckOptions {
            coordinates: 64,
            step: 1e-4,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub max_relative_error: f64,
    /// (parameter name, flat index, analytic, numeric) for every checked coordinate.
    pub checked: Vec<(String, usize, f64, f64)>,
    /// Coordinates whose probes crossed a ReLU, max-pool or loss branch, where
    /// central differences do not estimate the derivative.
    pub skipped: usize,
}

pub fn relative_error(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-8)
}

fn probe(model: &Model<f64>, input: &Act<f64>, gt: &SaliencyMap<f64>, loss: Loss) -> (f64, u64) {
    let cache = model.forward_cached(input.clone());
    let mut h = DefaultHasher::new();
    cache.branch_pattern(&mut h);
    loss.branch_pattern(gt.values(), &cache.logits.data, &mut h);
    if model.config().aux_loss_weight > 0.0 {
        for t in &cache.tap_logits {
            loss.branch_pattern(gt.values(), &t.data, &mut h);
        }
    }
    (objective_from_cache(model, &cache, gt, loss), h.finish())
}

/// Compare analytic gradients against central differences on a seeded
/// sample of parameter coordinates. Coordinates are drawn in a seeded order
/// until `coordinates` of them have probes on a single smooth piece.
pub fn grad_check(
    model: &Model<f64>,
    image: &Image,
    gt: &SaliencyMap<f64>,
    loss: Loss,
    opts: &GradCheckOptions,
) -> Result<GradCheckReport, NnError> {
    let input = model.input_from_image(image)?;
    if gt.width() != image.width() || gt.height() != image.height() {
        return Err(NnError::DimensionMismatch {
            expected: image.width(),
            got: gt.width(),
        });
    }
    let (_, grads) = sample_gradients(model, input.clone(), gt, loss, None);
    let (_, base) = probe(model, &input, gt, loss);
    let flat: Vec<(usize, usize)> = model
        .params()
        .iter()
        .enumerate()
        .flat_map(|(p, t)| (0..t.data.len()).map(move |i| (p, i)))
        .collect();
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let order = sample(&mut rng, flat.len(), flat.len());
    let mut work = model.clone();
    let mut report = GradCheckReport {
        max_relative_error: 0.0,
        checked: Vec::with_capacity(opts.coordinates),
        skipped: 0,
    };
    for k in order {
        if report.checked.len() == opts.coordinates {
            break;
        }
        let (p, i) = flat[k];
        let orig = work.params()[p].data[i];
        work.params_mut()[p].data[i] = orig + opts.step;
        let (up, up_pattern) = probe(&work, &input, gt, loss);
        work.params_mut()[p].data[i] = orig - opts.step;
        let (down, down_pattern) = probe(&work, &input, gt, loss);
        work.params_mut()[p].data[i] = orig;
        if up_pattern != base || down_pattern != base {
            report.skipped += 1;
            continue;
        }
        let numeric = (up - down) / (2.0 * opts.step);
        let analytic = grads[p][i];
        report.max_relative_error = report.max_relative_error.max(relative_error(analytic, numeric));
        report.checked.push((model.params()[p].name.clone(), i, analytic, numeric));
    }
    Ok(report)
}

/// Seeded noise image and ground-truth map for gradient checks; noise keeps
/// activations off exact ties.
pub fn random_case(size: usize, seed: u64) -> (Image, SaliencyMap<f64>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let pixels = (0..size * size * 3).map(|_| rng.gen()).collect();
    let image = Image::new(size, size, pixels).expect("square board-shaped image");
    let values = (0..size * size).map(|_| rng.gen_range(0.0..1.0)).collect();
    (image, SaliencyMap::new(size, size, values).expect("values in [0, 1)"))
}

/// Parameter gradients when backpropagating through tap `tap`'s path only.
pub fn isolated_tap_gradients(model: &Model<f64>, input: Act<f64>, gt: &SaliencyMap<f64>, loss: Loss, tap: usize) -> Grads<f64> {
    sample_gradients(model, input, gt, loss, Some(tap)).1
}
