use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::{Path, PathBuf};

use chess_saliency::augment::{augment_all, AugmentError, AugmentOptions};
use chess_saliency::chess::{BoardState, ChessError};
use chess_saliency::metrics::{evaluate, EvalConfig, ExtractConfig, Metric, MetricError, MetricsReport};
use chess_saliency::nn::{self, Model, ModelConfig, NnError, TrainConfig};
use chess_saliency::render::{overlay, png_bytes, read_png, render as render_board, write_map_png, RenderError, RenderTheme};
use chess_saliency::store::{
    cv_folds, import_image_map_pairs, ingest_fixation_log, load_dataset, save_samples, write_atomic, StoreError,
};
use chess_saliency::topdown::{gen_corpus, GenOptions, TopdownError};
use chess_saliency::{SampleF32, SaliencyMapF32};
use flate2::read::GzDecoder;

use crate::{AugmentArgs, EvalArgs, GenGdArgs, GradCheckArgs, ImportExternalArgs, IngestEtArgs, PredictArgs, Preset, RenderArgs, TrainArgs};

/// Published size of the augmented eye-tracking corpus.
const REFERENCE_AET_COUNT: usize = 6600;

#[derive(Debug)]
pub enum Failure {
    Usage(String),
    Data(String),
    Numeric(String),
}

impl Failure {
    pub fn code(&self) -> u8 {
        match self {
            Failure::Usage(_) => 1,
            Failure::Data(_) => 2,
            Failure::Numeric(_) => 3,
        }
    }

    pub fn message(&self) -> &str {
        match self {
            Failure::Usage(m) | Failure::Data(m) | Failure::Numeric(m) => m,
        }
    }
}

macro_rules! data_failure {
    ($($t:ty),*) => {
        $(impl From<$t> for Failure {
            fn from(e: $t) -> Self {
                Failure::Data(e.to_string())
            }
        })*
    };
}

data_failure!(StoreError, TopdownError, AugmentError, RenderError, ChessError, MetricError);

impl From<NnError> for Failure {
    fn from(e: NnError) -> Self {
        match e {
            NnError::NonFiniteLoss { .. } => Failure::Numeric(e.to_string()),
            NnError::InvalidConfig(_) => Failure::Usage(e.to_string()),
            _ => Failure::Data(e.to_string()),
        }
    }
}

type Outcome = Result<(), Failure>;

fn open(path: &Path) -> Result<File, Failure> {
    File::open(path).map_err(|e| Failure::Data(format!("cannot open {}: {e}", path.display())))
}

fn board_theme(size: usize) -> Result<RenderTheme, Failure> {
    if size == 0 || size % 8 != 0 {
        return Err(Failure::Usage(format!("board size {size} must be a positive multiple of 8")));
    }
    Ok(RenderTheme::with_cell_size(size / 8))
}

fn to_json<S: serde::Serialize>(value: &S) -> String {
    serde_json::to_string(value).expect("serialisable value")
}

fn sidecar(weights: &Path, suffix: &str) -> PathBuf {
    let mut name = weights.as_os_str().to_owned();
    name.push(suffix);
    PathBuf::from(name)
}

/// Architecture stored next to a weight file.
pub fn config_path(weights: &Path) -> PathBuf {
    sidecar(weights, ".config.json")
}

pub fn history_path(weights: &Path) -> PathBuf {
    sidecar(weights, ".history.json")
}

fn load_model(weights: &Path) -> Result<Model<f32>, Failure> {
    let path = config_path(weights);
    let text = std::fs::read_to_string(&path).map_err(|e| Failure::Data(format!("cannot read {}: {e}", path.display())))?;
    let config: ModelConfig =
        serde_json::from_str(&text).map_err(|e| Failure::Data(format!("bad model config {}: {e}", path.display())))?;
    Ok(nn::import_weights(weights, &config)?)
}

fn keep_tasks(samples: Vec<SampleF32>, tasks: &[String]) -> Vec<SampleF32> {
    if tasks.is_empty() {
        return samples;
    }
    let wanted: BTreeSet<&str> = tasks.iter().map(String::as_str).collect();
    samples.into_iter().filter(|s| wanted.contains(s.meta.split_key())).collect()
}

pub fn gen_gd(a: &GenGdArgs) -> Outcome {
    let theme = board_theme(a.size)?;
    let opts = GenOptions {
        saliency_path: a.path_level,
        both_perspectives: !a.single_perspective,
        ..GenOptions::default()
    };
    let file = open(&a.pgn)?;
    let reader: Box<dyn BufRead> = if a.pgn.extension().is_some_and(|e| e == "gz") {
        Box::new(BufReader::new(GzDecoder::new(file)))
    } else {
        Box::new(BufReader::new(file))
    };
    println!("# gen-gd pgn={} size={} path_level={}", a.pgn.display(), a.size, a.path_level);
    let mut writer = chess_saliency::store::DatasetWriter::create(&a.out)?;
    let summary = gen_corpus(reader, &opts, &theme, &mut writer, a.limit_games)?;
    if summary.games == 0 {
        return Err(Failure::Data(format!(
            "{}: no playable games ({} skipped)",
            a.pgn.display(),
            summary.skipped
        )));
    }
    writer.finish()?;
    println!("{}", to_json(&summary));
    Ok(())
}

pub fn ingest_et(a: &IngestEtArgs) -> Outcome {
    let samples = ingest_fixation_log::<f32>(&a.csv, &a.images, a.sigma)?;
    save_samples(&a.out, &samples)?;
    println!("# ingest-et csv={} sigma={}", a.csv.display(), a.sigma);
    println!("{{\"samples\":{}}}", samples.len());
    Ok(())
}

pub fn import_external(a: &ImportExternalArgs) -> Outcome {
    let samples = import_image_map_pairs::<f32>(&a.images, &a.maps, a.size)?;
    save_samples(&a.out, &samples)?;
    println!("# import-external size={}", a.size);
    println!("{{\"samples\":{}}}", samples.len());
    Ok(())
}

pub fn augment(a: &AugmentArgs) -> Outcome {
    let (_, samples) = load_dataset::<f32>(&a.input)?;
    let opts = AugmentOptions {
        sizes: a.sizes.clone(),
        with_inversion: !a.no_invert,
        with_flip: !a.no_flip,
    };
    let out = augment_all(&samples, &opts)?;
    save_samples(&a.out, &out)?;
    let inv = 1 + usize::from(opts.with_inversion);
    let flip = 1 + usize::from(opts.with_flip);
    println!("# augment sizes={:?} invert={} flip={}", opts.sizes, opts.with_inversion, opts.with_flip);
    println!(
        "{} inputs x {} windows x {inv} x {flip} = {} samples",
        samples.len(),
        opts.window_count(),
        out.len()
    );
    if out.len() != REFERENCE_AET_COUNT {
        println!(
            "note: the count law gives {} samples, not the {REFERENCE_AET_COUNT} examples reported for the original augmented corpus",
            out.len()
        );
    }
    Ok(())
}

fn preset_config(preset: Preset, size: usize) -> ModelConfig {
    let base = match preset {
        Preset::Default => ModelConfig::default(),
        Preset::Toy => ModelConfig::toy(size),
        Preset::Tiny => ModelConfig::tiny(),
    };
    ModelConfig { input_size: size, ..base }
}

pub fn train(a: &TrainArgs) -> Outcome {
    let (_, finetune) = load_dataset::<f32>(&a.data)?;
    let finetune = keep_tasks(finetune, &a.tasks);
    let Some(first) = finetune.first() else {
        return Err(Failure::Data(format!("{}: no training samples", a.data.display())));
    };
    let size = first.image.width();
    let pretrain = match &a.pretrain {
        Some(p) => load_dataset::<f32>(p)?.1,
        None => Vec::new(),
    };
    let config = ModelConfig {
        seed: a.seed,
        aux_loss_weight: a.aux_weight,
        ..preset_config(a.preset, size)
    };
    let mut model = Model::<f32>::build(config.clone())?;
    if let Some(w) = &a.encoder_weights {
        let loaded = nn::import_encoder_weights(&mut model, w)?;
        println!("# encoder tensors loaded: {}", loaded.join(","));
    }
    let finetune_cfg = TrainConfig {
        epochs: a.epochs,
        learning_rate: a.lr,
        batch_size: a.batch_size,
        momentum: a.momentum,
        loss: a.loss,
        seed: a.seed,
        shuffle: true,
        parallel: a.parallel,
    };
    let pretrain_cfg = TrainConfig {
        epochs: a.pretrain_epochs.unwrap_or(a.epochs),
        ..finetune_cfg.clone()
    };
    println!(
        "# train recipe={} seed={} epochs={} lr={} batch={} loss={} params={}",
        a.recipe,
        a.seed,
        a.epochs,
        a.lr,
        a.batch_size,
        a.loss,
        model.param_count()
    );
    let (model, history) = nn::pretrain_then_finetune(model, a.recipe, &pretrain, &finetune, &pretrain_cfg, &finetune_cfg)?;
    nn::export_weights(&model, &a.out)?;
    write_atomic(&config_path(&a.out), to_json(&config).as_bytes())?;
    write_atomic(&history_path(&a.out), to_json(&history).as_bytes())?;
    for p in &history.phases {
        let sources: Vec<&str> = p.sources.iter().map(|s| s.name()).collect();
        println!("phase {}: {} samples [{}], {} epochs", p.name, p.samples, sources.join(","), p.epochs);
    }
    if let (Some(f), Some(l)) = (history.epoch_losses.first(), history.epoch_losses.last()) {
        println!("loss {f:.6} -> {l:.6}");
    }
    println!("checksum {}", history.checksum);
    Ok(())
}

fn table2_header() -> String {
    let mut s = format!("{:<10}", "system");
    for m in Metric::ALL {
        let _ = write!(s, " {:>12}", m.name());
    }
    s
}

fn table2_row(name: &str, r: &MetricsReport) -> String {
    let mut s = format!("{name:<10}");
    for m in Metric::ALL {
        let _ = write!(s, " {:>12}", r.get(m).plus_minus());
    }
    s
}

pub fn eval(a: &EvalArgs) -> Outcome {
    let model = load_model(&a.model)?;
    let (_, samples) = load_dataset::<f32>(&a.data)?;
    let samples = keep_tasks(samples, &a.tasks);
    if samples.is_empty() {
        return Err(Failure::Data(format!("{}: no samples to evaluate", a.data.display())));
    }
    let preds = samples.iter().map(|s| model.predict(&s.image)).collect::<Result<Vec<_>, _>>()?;
    let cfg = EvalConfig {
        extract: Some(ExtractConfig::for_board(model.config().input_size)),
        borji_splits: a.borji_splits,
        seed: a.seed,
    };
    let score = |idx: &[usize], name: &str| -> Result<MetricsReport, Failure> {
        let p: Vec<SaliencyMapF32> = idx.iter().map(|&i| preds[i].clone()).collect();
        let g: Vec<SaliencyMapF32> = idx.iter().map(|&i| samples[i].map.clone()).collect();
        let f: Vec<_> = idx.iter().map(|&i| samples[i].fixations.clone()).collect();
        let mut r = evaluate(&p, &g, &f, &cfg)?;
        r.dataset_id = name.to_string();
        r.model_id = a.model.display().to_string();
        Ok(r)
    };
    let mut out = format!(
        "# eval model={} data={} seed={} folds={}\n{}\n",
        a.model.display(),
        a.data.display(),
        a.seed,
        a.folds.map_or("none".into(), |k| k.to_string()),
        table2_header()
    );
    if let Some(k) = a.folds {
        let mut tasks: Vec<String> = samples.iter().map(|s| s.meta.split_key().to_string()).collect();
        tasks.sort();
        tasks.dedup();
        for (i, fold) in cv_folds(&tasks, k, a.seed)?.iter().enumerate() {
            let idx: Vec<usize> = (0..samples.len())
                .filter(|&j| fold.test_task_ids.contains(samples[j].meta.split_key()))
                .collect();
            let r = score(&idx, &format!("fold{}", i + 1))?;
            out.push_str(&table2_row(&r.dataset_id, &r));
            out.push('\n');
        }
    }
    let all: Vec<usize> = (0..samples.len()).collect();
    let report = score(&all, &a.data.display().to_string())?;
    out.push_str(&table2_row("all", &report));
    out.push_str("\n\n");
    out.push_str(&report.key_values());
    for w in &report.warnings {
        let _ = writeln!(out, "warning: {w}");
    }
    write_atomic(&a.report, out.as_bytes())?;
    print!("{out}");
    Ok(())
}

pub fn predict(a: &PredictArgs) -> Outcome {
    let model = load_model(&a.model)?;
    let size = model.config().input_size;
    let image = match (&a.fen, &a.image) {
        (Some(fen), _) => render_board(&BoardState::from_fen(fen)?, a.perspective.into(), &board_theme(size)?)?,
        (None, Some(path)) => read_png(open(path)?)?,
        (None, None) => return Err(Failure::Usage("one of --fen or --image is required".into())),
    };
    let map = model.predict(&image)?;
    let mut bytes = Vec::new();
    write_map_png(&map, &mut bytes)?;
    write_atomic(&a.out, &bytes)?;
    if let Some(path) = &a.overlay {
        write_atomic(path, &png_bytes(&overlay(&image, &map)?))?;
    }
    let v = map.values();
    println!("# predict model={} size={size}", a.model.display());
    println!(
        "min {:.6} max {:.6} mean {:.6}",
        map.min_value(),
        map.max_value(),
        v.iter().map(|&x| f64::from(x)).sum::<f64>() / v.len() as f64
    );
    Ok(())
}

pub fn render(a: &RenderArgs) -> Outcome {
    let board = BoardState::from_fen(&a.fen)?;
    let image = render_board(&board, a.perspective.into(), &board_theme(a.size)?)?;
    write_atomic(&a.out, &png_bytes(&image))?;
    Ok(())
}

pub fn grad_check(a: &GradCheckArgs) -> Outcome {
    let config = ModelConfig {
        seed: a.seed,
        ..ModelConfig::tiny()
    };
    let model = Model::<f64>::build(config)?;
    let (image, gt) = nn::random_case(model.config().input_size, a.seed);
    println!("# grad-check seed={} params={} coordinates={}", a.seed, model.param_count(), a.coordinates);
    let opts = nn::GradCheckOptions {
        coordinates: a.coordinates,
        seed: a.seed,
        ..nn::GradCheckOptions::default()
    };
    let mut failed = Vec::new();
    for loss in nn::Loss::ALL {
        let r = nn::grad_check(&model, &image, &gt, loss, &opts)?;
        let ok = r.max_relative_error < a.tolerance;
        println!(
            "{loss}: max relative error {:.3e} over {} coordinates ({} skipped at kinks) {}",
            r.max_relative_error,
            r.checked.len(),
            r.skipped,
            if ok { "ok" } else { "FAIL" }
        );
        if !ok {
            failed.push(loss.name());
        }
    }
    if failed.is_empty() {
        Ok(())
    } else {
        Err(Failure::Numeric(format!("tolerance {} exceeded for {}", a.tolerance, failed.join(", "))))
    }
}
