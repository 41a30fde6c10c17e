//! Saliency evaluation metrics and the per-metric mean/std report.
//!
//! All arithmetic is carried out in `f64` whatever the map scalar type.

use std::collections::BTreeMap;
use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::saliency::{extract_fixation_points, FixationSet, SaliencyError, SaliencyMap};
use crate::Real;

/// Guard used in the KL diagnostic's logarithm.
pub const EPS: f64 = 1e-8;

#[derive(Debug, thiserror::Error)]
pub enum MetricError {
    #[error("map is constant")]
    ConstantMap,
    #[error("map has zero total mass")]
    ZeroMass,
    #[error("no fixations given")]
    EmptyFixations,
    #[error("every pixel is a fixation; no negatives remain")]
    NoNegatives,
    #[error("dimension mismatch: {0}x{1} vs {2}x{3}")]
    DimensionMismatch(usize, usize, usize, usize),
    #[error("fixation ({0}, {1}) lies outside the {2}x{3} map")]
    FixationOutOfBounds(usize, usize, usize, usize),
    #[error("n_splits must be at least 1")]
    NoSplits,
    #[error("{0} predictions but {1} ground truths")]
    LengthMismatch(usize, usize),
    #[error("pair {index}: {source}")]
    Pair {
        index: usize,
        #[source]
        source: Box<MetricError>,
    },
    #[error("malformed report line `{0}`")]
    BadReport(String),
    #[error("fixation extraction failed: {0}")]
    Extraction(#[from] SaliencyError),
}

impl MetricError {
    /// Errors that make a metric undefined for a pair rather than invalid input.
    pub fn is_undefined(&self) -> bool {
        matches!(
            self,
            MetricError::ConstantMap | MetricError::ZeroMass | MetricError::EmptyFixations | MetricError::NoNegatives
        )
    }
}

fn values_f64<T: Real>(m: &SaliencyMap<T>) -> Vec<f64> {
    m.values().iter().map(|v| v.f64()).collect()
}

fn same_dims<T: Real, U: Real>(p: &SaliencyMap<T>, q: &SaliencyMap<U>) -> Result<(), MetricError> {
    if p.width() != q.width() || p.height() != q.height() {
        return Err(MetricError::DimensionMismatch(p.width(), p.height(), q.width(), q.height()));
    }
    Ok(())
}

fn mean_std(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}

fn is_constant(v: &[f64]) -> bool {
    v.iter().all(|&x| x == v[0])
}

/// Pearson correlation between the two pixel vectors.
pub fn lcc<T: Real>(p: &SaliencyMap<T>, q: &SaliencyMap<T>) -> Result<f64, MetricError> {
    same_dims(p, q)?;
    let (a, b) = (values_f64(p), values_f64(q));
    if is_constant(&a) || is_constant(&b) {
        return Err(MetricError::ConstantMap);
    }
    let (ma, sa) = mean_std(&a);
    let (mb, sb) = mean_std(&b);
    let n = a.len() as f64;
    let cov = a.iter().zip(&b).map(|(x, y)| (x - ma) * (y - mb)).sum::<f64>() / n;
    Ok((cov / (sa * sb)).clamp(-1.0, 1.0))
}

fn mass_normalized(v: &[f64]) -> Result<Vec<f64>, MetricError> {
    let total: f64 = v.iter().sum();
    if total <= 0.0 {
        return Err(MetricError::ZeroMass);
    }
    Ok(v.iter().map(|x| x / total).collect())
}

/// Histogram intersection of the two mass-normalised maps.
pub fn sim<T: Real>(p: &SaliencyMap<T>, q: &SaliencyMap<T>) -> Result<f64, MetricError> {
    same_dims(p, q)?;
    let a = mass_normalized(&values_f64(p))?;
    let b = mass_normalized(&values_f64(q))?;
    Ok(a.iter().zip(&b).map(|(x, y)| x.min(*y)).sum::<f64>().min(1.0))
}

/// `sum Q log(Q / (P + eps))` over mass-normalised maps; diagnostic only.
pub fn kl<T: Real>(p: &SaliencyMap<T>, q: &SaliencyMap<T>) -> Result<f64, MetricError> {
    same_dims(p, q)?;
    let a = mass_normalized(&values_f64(p))?;
    let b = mass_normalized(&values_f64(q))?;
    Ok(a.iter()
        .zip(&b)
        .filter(|(_, &y)| y > 0.0)
        .map(|(x, y)| y * (y / (x + EPS)).ln())
        .sum())
}

/// Row-major mask of distinct fixated pixels.
fn fixation_mask(width: usize, height: usize, fixations: &FixationSet) -> Result<Vec<bool>, MetricError> {
    if fixations.is_empty() {
        return Err(MetricError::EmptyFixations);
    }
    if let Some(&(x, y)) = fixations.points.iter().find(|&&(x, y)| x >= width || y >= height) {
        return Err(MetricError::FixationOutOfBounds(x, y, width, height));
    }
    Ok(fixations.mask(width, height))
}

/// Mean z-scored prediction over the distinct fixated pixels.
pub fn nss<T: Real>(p: &SaliencyMap<T>, fixations: &FixationSet) -> Result<f64, MetricError> {
    let mask = fixation_mask(p.width(), p.height(), fixations)?;
    let z = p.zscore_values().map_err(|_| MetricError::ConstantMap)?;
    let picked: Vec<f64> = z.iter().zip(&mask).filter(|(_, &m)| m).map(|(v, _)| *v).collect();
    Ok(picked.iter().sum::<f64>() / picked.len() as f64)
}

/// Area under the ROC curve through (0,0), one point per threshold in
/// `thresholds` (descending), and (1,1).
fn roc_area(positives: &[f64], negatives: &[f64], thresholds: &[f64]) -> f64 {
    let mut pos = positives.to_vec();
    let mut neg = negatives.to_vec();
    pos.sort_by(|a, b| a.partial_cmp(b).unwrap());
    neg.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let frac_at_least = |sorted: &[f64], t: f64| {
        let below = sorted.partition_point(|&v| v < t);
        (sorted.len() - below) as f64 / sorted.len() as f64
    };
    let mut area = 0.0;
    let (mut px, mut py) = (0.0, 0.0);
    for &t in thresholds {
        let (x, y) = (frac_at_least(&neg, t), frac_at_least(&pos, t));
        area += (x - px) * (y + py) / 2.0;
        (px, py) = (x, y);
    }
    area + (1.0 - px) * (1.0 + py) / 2.0
}

fn descending_distinct(mut v: Vec<f64>) -> Vec<f64> {
    v.sort_by(|a, b| b.partial_cmp(a).unwrap());
    v.dedup();
    v
}

/// ROC area with all non-fixated pixels as negatives and the prediction's
/// values at fixations as thresholds.
pub fn auc_judd<T: Real>(p: &SaliencyMap<T>, fixations: &FixationSet) -> Result<f64, MetricError> {
    let mask = fixation_mask(p.width(), p.height(), fixations)?;
    let v = values_f64(p);
    let (mut pos, mut neg) = (Vec::new(), Vec::new());
    for (x, m) in v.into_iter().zip(mask) {
        if m {
            pos.push(x)
        } else {
            neg.push(x)
        }
    }
    if neg.is_empty() {
        return Err(MetricError::NoNegatives);
    }
    let thresholds = descending_distinct(pos.clone());
    Ok(roc_area(&pos, &neg, &thresholds))
}

/// Pixel indices drawn uniformly with replacement for each split:
/// `n_splits` lists of `count` indices into a `width x height` map.
pub fn borji_negatives(width: usize, height: usize, count: usize, n_splits: usize, seed: u64) -> Vec<Vec<usize>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n_splits)
        .map(|_| (0..count).map(|_| rng.gen_range(0..width * height)).collect())
        .collect()
}

/// Mean over splits of the ROC area against uniformly sampled negatives
/// (as many as there are distinct fixated pixels). Thresholds run over
/// every positive and sampled value, so the full empirical curve is used.
pub fn auc_borji<T: Real>(p: &SaliencyMap<T>, fixations: &FixationSet, n_splits: usize, seed: u64) -> Result<f64, MetricError> {
    if n_splits == 0 {
        return Err(MetricError::NoSplits);
    }
    let mask = fixation_mask(p.width(), p.height(), fixations)?;
    let v = values_f64(p);
    let pos: Vec<f64> = v.iter().zip(&mask).filter(|(_, &m)| m).map(|(x, _)| *x).collect();
    let splits = borji_negatives(p.width(), p.height(), pos.len(), n_splits, seed);
    let total: f64 = splits
        .iter()
        .map(|idx| {
            let neg: Vec<f64> = idx.iter().map(|&i| v[i]).collect();
            let thresholds = descending_distinct(pos.iter().chain(&neg).copied().collect());
            roc_area(&pos, &neg, &thresholds)
        })
        .sum();
    Ok(total / n_splits as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Metric {
    Lcc,
    Sim,
    Nss,
    AucJudd,
    AucBorji,
}

impl Metric {
    pub const ALL: [Metric; 5] = [Metric::Lcc, Metric::Sim, Metric::Nss, Metric::AucJudd, Metric::AucBorji];

    pub fn name(self) -> &'static str {
        match self {
            Metric::Lcc => "LCC",
            Metric::Sim => "SIM",
            Metric::Nss => "NSS",
            Metric::AucJudd => "AUC_JUDD",
            Metric::AucBorji => "AUC_BORJI",
        }
    }

    pub fn from_name(s: &str) -> Option<Metric> {
        Metric::ALL.into_iter().find(|m| m.name() == s)
    }
}

impl fmt::Display for Metric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// How fixation points are recovered from a ground-truth map that has no
/// stored fixation set.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExtractConfig {
    pub threshold: f64,
    pub min_separation: f64,
}

impl ExtractConfig {
    /// Threshold 0.5 with one cell width of separation on a `size`-pixel board.
    pub fn for_board(size: usize) -> Self {
        ExtractConfig {
            threshold: 0.5,
            min_separation: (size / 8) as f64,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EvalConfig {
    pub extract: Option<ExtractConfig>,
    pub borji_splits: usize,
    pub seed: u64,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig {
            extract: None,
            borji_splits: 100,
            seed: 0,
        }
    }
}

/// The five metric values for one prediction/ground-truth pair; an entry is
/// `Err` when the metric is undefined for the pair.
#[derive(Debug)]
pub struct PairScores {
    pub scores: BTreeMap<Metric, Result<f64, MetricError>>,
}

fn undefined_or_pair(index: usize, r: Result<f64, MetricError>) -> Result<Result<f64, MetricError>, MetricError> {
    match r {
        Err(e) if !e.is_undefined() => Err(MetricError::Pair {
            index,
            source: Box::new(e),
        }),
        other => Ok(other),
    }
}

/// Score one pair. `fixations` defaults to points extracted from `gt`.
pub fn score_pair<T: Real>(
    index: usize,
    pred: &SaliencyMap<T>,
    gt: &SaliencyMap<T>,
    fixations: Option<&FixationSet>,
    cfg: &EvalConfig,
) -> Result<PairScores, MetricError> {
    same_dims(pred, gt).map_err(|e| MetricError::Pair {
        index,
        source: Box::new(e),
    })?;
    let extracted;
    let fix: Result<&FixationSet, MetricError> = match fixations {
        Some(f) => Ok(f),
        None => {
            let ec = cfg.extract.unwrap_or_else(|| ExtractConfig::for_board(gt.width()));
            match extract_fixation_points(gt, ec.threshold, ec.min_separation) {
                Ok(f) => {
                    extracted = f;
                    Ok(&extracted)
                }
                Err(SaliencyError::NoFixationsFound) => Err(MetricError::EmptyFixations),
                Err(e) => {
                    return Err(MetricError::Pair {
                        index,
                        source: Box::new(MetricError::Extraction(e)),
                    })
                }
            }
        }
    };
    let with_fix = |f: &dyn Fn(&FixationSet) -> Result<f64, MetricError>| match &fix {
        Ok(set) => f(set),
        Err(_) => Err(MetricError::EmptyFixations),
    };
    let seed = cfg.seed.wrapping_add(index as u64);
    let mut scores = BTreeMap::new();
    scores.insert(Metric::Lcc, undefined_or_pair(index, lcc(pred, gt))?);
    scores.insert(Metric::Sim, undefined_or_pair(index, sim(pred, gt))?);
    scores.insert(Metric::Nss, undefined_or_pair(index, with_fix(&|f| nss(pred, f)))?);
    scores.insert(Metric::AucJudd, undefined_or_pair(index, with_fix(&|f| auc_judd(pred, f)))?);
    scores.insert(
        Metric::AucBorji,
        undefined_or_pair(index, with_fix(&|f| auc_borji(pred, f, cfg.borji_splits, seed)))?,
    );
    Ok(PairScores { scores })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MetricSummary {
    pub mean: f64,
    pub std: f64,
    pub n: usize,
}

impl MetricSummary {
    fn of(values: &[f64]) -> MetricSummary {
        if values.is_empty() {
            return MetricSummary {
                mean: f64::NAN,
                std: f64::NAN,
                n: 0,
            };
        }
        let (mean, std) = mean_std(values);
        MetricSummary { mean, std, n: values.len() }
    }

    /// Two-decimal `mean±std`, e.g. `0.69±0.09`.
    pub fn plus_minus(&self) -> String {
        if self.n == 0 {
            "n/a".to_string()
        } else {
            format!("{:.2}±{:.2}", self.mean, self.std)
        }
    }
}

/// Per-metric mean and population standard deviation over an evaluation set.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricsReport {
    pub metrics: BTreeMap<Metric, MetricSummary>,
    pub dataset_id: String,
    pub model_id: String,
    pub seed: u64,
    pub pairs: usize,
    pub warnings: Vec<String>,
}

impl MetricsReport {
    pub fn from_pairs(pairs: &[PairScores], dataset_id: &str, model_id: &str, seed: u64) -> MetricsReport {
        let mut warnings = Vec::new();
        let metrics = Metric::ALL
            .into_iter()
            .map(|m| {
                let mut values = Vec::with_capacity(pairs.len());
                for (i, p) in pairs.iter().enumerate() {
                    match &p.scores[&m] {
                        Ok(v) => values.push(*v),
                        Err(e) => warnings.push(format!("pair {i}: {m} undefined ({e}); excluded")),
                    }
                }
                (m, MetricSummary::of(&values))
            })
            .collect();
        MetricsReport {
            metrics,
            dataset_id: dataset_id.to_string(),
            model_id: model_id.to_string(),
            seed,
            pairs: pairs.len(),
            warnings,
        }
    }

    pub fn get(&self, m: Metric) -> MetricSummary {
        self.metrics[&m]
    }

    /// Aligned human-readable table, one row per metric.
    pub fn table(&self) -> String {
        let mut s = format!(
            "dataset: {}  model: {}  seed: {}  pairs: {}\n{:<10} {:>12} {:>5}\n",
            self.dataset_id, self.model_id, self.seed, self.pairs, "metric", "mean±std", "n"
        );
        for (m, v) in &self.metrics {
            s.push_str(&format!("{:<10} {:>12} {:>5}\n", m.name(), v.plus_minus(), v.n));
        }
        s
    }

    /// One `NAME mean=.. std=.. n=..` line per metric, with round-trip precision.
    pub fn key_values(&self) -> String {
        let mut s = format!(
            "dataset={}\nmodel={}\nseed={}\npairs={}\n",
            self.dataset_id, self.model_id, self.seed, self.pairs
        );
        for (m, v) in &self.metrics {
            s.push_str(&format!("{} mean={:?} std={:?} n={}\n", m.name(), v.mean, v.std, v.n));
        }
        s
    }

    /// Parse the output of [`key_values`](Self::key_values); other lines are ignored.
    pub fn parse_key_values(text: &str) -> Result<MetricsReport, MetricError> {
        let mut r = MetricsReport {
            metrics: BTreeMap::new(),
            dataset_id: String::new(),
            model_id: String::new(),
            seed: 0,
            pairs: 0,
            warnings: Vec::new(),
        };
        let bad = |l: &str| MetricError::BadReport(l.to_string());
        for line in text.lines() {
            let line = line.trim();
            if let Some(v) = line.strip_prefix("dataset=") {
                r.dataset_id = v.to_string();
            } else if let Some(v) = line.strip_prefix("model=") {
                r.model_id = v.to_string();
            } else if let Some(v) = line.strip_prefix("seed=") {
                r.seed = v.parse().map_err(|_| bad(line))?;
            } else if let Some(v) = line.strip_prefix("pairs=") {
                r.pairs = v.parse().map_err(|_| bad(line))?;
            } else {
                let mut parts = line.split_whitespace();
                let Some(metric) = parts.next().and_then(Metric::from_name) else {
                    continue;
                };
                let mut field = |key: &str| -> Result<&str, MetricError> {
                    parts
                        .next()
                        .and_then(|p| p.strip_prefix(key))
                        .and_then(|p| p.strip_prefix('='))
                        .ok_or_else(|| bad(line))
                };
                let mean = field("mean")?.parse().map_err(|_| bad(line))?;
                let std = field("std")?.parse().map_err(|_| bad(line))?;
                let n = field("n")?.parse().map_err(|_| bad(line))?;
                r.metrics.insert(metric, MetricSummary { mean, std, n });
            }
        }
        if r.metrics.len() != Metric::ALL.len() {
            return Err(MetricError::BadReport("report does not list all five metrics".into()));
        }
        Ok(r)
    }
}

impl fmt::Display for MetricsReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.table())
    }
}

/// Score every pair and summarise. `fixations[i]`, when present, is used for
/// pair `i`; otherwise points are extracted from the ground truth.
pub fn evaluate<T: Real>(
    predictions: &[SaliencyMap<T>],
    ground_truths: &[SaliencyMap<T>],
    fixations: &[Option<FixationSet>],
    cfg: &EvalConfig,
) -> Result<MetricsReport, MetricError> {
    if predictions.len() != ground_truths.len() {
        return Err(MetricError::LengthMismatch(predictions.len(), ground_truths.len()));
    }
    let pairs = predictions
        .iter()
        .zip(ground_truths)
        .enumerate()
        .map(|(i, (p, g))| score_pair(i, p, g, fixations.get(i).and_then(Option::as_ref), cfg))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(MetricsReport::from_pairs(&pairs, "", "", cfg.seed))
}
