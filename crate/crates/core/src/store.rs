//! On-disk datasets: `manifest.jsonl` plus `images/`, `maps/` and
//! `fixations/` under one root directory.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fs;
use std::io::{BufReader, Write};
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::chess::{BoardState, Color};
use crate::geometry::nearest_source;
use crate::render::{decode_png_rgb, png_bytes, read_png, Image, RenderError};
use crate::sample::{Sample, SampleMeta, Source};
use crate::saliency::{average_maps, fixations_to_map, parse_smap, smap_bytes, Fixation, FixationSet, SaliencyError, SaliencyMap};
use crate::Real;

pub const MANIFEST_FILE: &str = "manifest.jsonl";
const IMAGES_DIR: &str = "images";
const MAPS_DIR: &str = "maps";
const FIXATIONS_DIR: &str = "fixations";

#[derive(Debug, thiserror::Error)]
pub enum StoreError {
    #[error("i/o failure on {path}: {source}")]
    IoFailure {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    CorruptSmap {
        path: PathBuf,
        #[source]
        source: SaliencyError,
    },
    #[error("{path}: {source}")]
    BadImage {
        path: PathBuf,
        #[source]
        source: RenderError,
    },
    #[error("manifest line {line}: {reason}")]
    BadManifest { line: usize, reason: String },
    #[error("duplicate sample id `{0}`")]
    DuplicateId(String),
    #[error("malformed CSV at line {line}: {reason}")]
    MalformedCsv { line: usize, reason: String },
    #[error("no board image for task `{0}`")]
    MissingImage(String),
    #[error("task `{0}` has no fixations")]
    EmptyTask(String),
    #[error("task `{task}`: {source}")]
    Task {
        task: String,
        #[source]
        source: SaliencyError,
    },
    #[error("sample `{0}` belongs to a task outside the split")]
    UnknownTask(String),
    #[error("task `{0}` is on both sides of the split")]
    OverlappingSpec(String),
    #[error("cannot make {k} folds from {n} tasks")]
    TooManyFolds { k: usize, n: usize },
    #[error("dataset validation failed:\n{}", .0.join("\n"))]
    ValidationFailed(Vec<String>),
    #[error(transparent)]
    Render(#[from] RenderError),
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> StoreError + '_ {
    move |source| StoreError::IoFailure {
        path: path.to_path_buf(),
        source,
    }
}

/// Write `bytes` to a sibling temporary file, then rename it over `path`.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), StoreError> {
    atomic_write_io(path, bytes).map_err(io_err(path))
}

/// Write to a sibling temporary file and rename it over `path`.
pub(crate) fn atomic_write_io(path: &Path, bytes: &[u8]) -> std::io::Result<()> {
    let name = path.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
    let tmp = path.with_file_name(format!(".{name}.tmp{}", std::process::id()));
    let mut f = fs::File::create(&tmp)?;
    f.write_all(bytes)?;
    f.sync_all()?;
    drop(f);
    fs::rename(&tmp, path)
}

#[derive(Debug, Clone, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct ManifestEntry {
    pub sample_id: String,
    pub image_path: String,
    pub map_path: String,
    pub meta: SampleMeta,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fixation_path: Option<String>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Manifest {
    pub entries: Vec<ManifestEntry>,
}

impl Manifest {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn to_jsonl(&self) -> String {
        let mut s = String::new();
        for e in &self.entries {
            s.push_str(&serde_json::to_string(e).expect("manifest entries serialise"));
            s.push('\n');
        }
        s
    }

    pub fn parse(text: &str) -> Result<Manifest, StoreError> {
        let mut entries = Vec::new();
        let mut ids = HashSet::new();
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let e: ManifestEntry = serde_json::from_str(line).map_err(|e| StoreError::BadManifest {
                line: i + 1,
                reason: e.to_string(),
            })?;
            if !ids.insert(e.sample_id.clone()) {
                return Err(StoreError::DuplicateId(e.sample_id));
            }
            entries.push(e);
        }
        Ok(Manifest { entries })
    }

    pub fn read(root: &Path) -> Result<Manifest, StoreError> {
        let path = root.join(MANIFEST_FILE);
        Manifest::parse(&fs::read_to_string(&path).map_err(io_err(&path))?)
    }

    /// Distinct split keys (task id, else game id) in first-seen order.
    pub fn tasks(&self) -> Vec<String> {
        let mut seen = HashSet::new();
        self.entries
            .iter()
            .map(|e| e.meta.split_key().to_string())
            .filter(|k| seen.insert(k.clone()))
            .collect()
    }

    pub fn filter(&self, mut keep: impl FnMut(&ManifestEntry) -> bool) -> Manifest {
        Manifest {
            entries: self.entries.iter().filter(|e| keep(e)).cloned().collect(),
        }
    }
}

/// A sample already encoded to its on-disk bytes.
#[derive(Debug, Clone)]
pub struct EncodedSample {
    pub sample_id: String,
    pub png: Vec<u8>,
    pub smap: Vec<u8>,
    pub fixations: Option<Vec<u8>>,
    pub meta: SampleMeta,
}

pub fn encode_sample<T: Real>(sample: &Sample<T>) -> EncodedSample {
    EncodedSample {
        sample_id: sample.meta.default_id(),
        png: png_bytes(&sample.image),
        smap: smap_bytes(&sample.map),
        fixations: sample
            .fixations
            .as_ref()
            .map(|f| serde_json::to_vec(f).expect("fixations serialise")),
        meta: sample.meta.clone(),
    }
}

/// Single writer for a dataset directory. Creating a writer replaces any
/// dataset already stored at the root.
pub struct DatasetWriter {
    root: PathBuf,
    manifest: Manifest,
    ids: HashSet<String>,
}

impl DatasetWriter {
    pub fn create(root: impl Into<PathBuf>) -> Result<DatasetWriter, StoreError> {
        let root = root.into();
        for dir in [IMAGES_DIR, MAPS_DIR, FIXATIONS_DIR] {
            let d = root.join(dir);
            if d.exists() {
                fs::remove_dir_all(&d).map_err(io_err(&d))?;
            }
            fs::create_dir_all(&d).map_err(io_err(&d))?;
        }
        let m = root.join(MANIFEST_FILE);
        if m.exists() {
            fs::remove_file(&m).map_err(io_err(&m))?;
        }
        Ok(DatasetWriter {
            root,
            manifest: Manifest::default(),
            ids: HashSet::new(),
        })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn len(&self) -> usize {
        self.manifest.len()
    }

    pub fn is_empty(&self) -> bool {
        self.manifest.is_empty()
    }

    pub fn add<T: Real>(&mut self, sample: &Sample<T>) -> Result<String, StoreError> {
        self.add_encoded(encode_sample(sample))
    }

    pub fn add_encoded(&mut self, s: EncodedSample) -> Result<String, StoreError> {
        if !self.ids.insert(s.sample_id.clone()) {
            return Err(StoreError::DuplicateId(s.sample_id));
        }
        let image_path = format!("{IMAGES_DIR}/{}.png", s.sample_id);
        let map_path = format!("{MAPS_DIR}/{}.smap", s.sample_id);
        write_atomic(&self.root.join(&image_path), &s.png)?;
        write_atomic(&self.root.join(&map_path), &s.smap)?;
        let fixation_path = match &s.fixations {
            Some(bytes) => {
                let p = format!("{FIXATIONS_DIR}/{}.json", s.sample_id);
                write_atomic(&self.root.join(&p), bytes)?;
                Some(p)
            }
            None => None,
        };
        self.manifest.entries.push(ManifestEntry {
            sample_id: s.sample_id.clone(),
            image_path,
            map_path,
            meta: s.meta,
            fixation_path,
        });
        Ok(s.sample_id)
    }

    /// Write the manifest; the dataset is readable only after this.
    pub fn finish(self) -> Result<Manifest, StoreError> {
        write_atomic(&self.root.join(MANIFEST_FILE), self.manifest.to_jsonl().as_bytes())?;
        Ok(self.manifest)
    }
}

/// Write every sample and the manifest in one go.
pub fn save_samples<T: Real>(root: &Path, samples: &[Sample<T>]) -> Result<Manifest, StoreError> {
    let mut w = DatasetWriter::create(root)?;
    for s in samples {
        w.add(s)?;
    }
    w.finish()
}

pub fn load_sample<T: Real>(root: &Path, entry: &ManifestEntry) -> Result<Sample<T>, StoreError> {
    let ipath = root.join(&entry.image_path);
    let file = fs::File::open(&ipath).map_err(io_err(&ipath))?;
    let image = read_png(BufReader::new(file)).map_err(|source| StoreError::BadImage {
        path: ipath.clone(),
        source,
    })?;
    let mpath = root.join(&entry.map_path);
    let bytes = fs::read(&mpath).map_err(io_err(&mpath))?;
    let map: SaliencyMap<T> = parse_smap(&bytes).map_err(|source| StoreError::CorruptSmap {
        path: mpath.clone(),
        source,
    })?;
    let fixations = match &entry.fixation_path {
        Some(p) => {
            let fpath = root.join(p);
            let text = fs::read(&fpath).map_err(io_err(&fpath))?;
            let set: FixationSet = serde_json::from_slice(&text).map_err(|e| StoreError::BadManifest {
                line: 0,
                reason: format!("{}: {e}", fpath.display()),
            })?;
            Some(set)
        }
        None => None,
    };
    let mut sample = Sample::new(image, map, entry.meta.clone()).map_err(|source| StoreError::CorruptSmap {
        path: mpath,
        source,
    })?;
    sample.fixations = fixations;
    Ok(sample)
}

pub fn load_samples<T: Real>(root: &Path, manifest: &Manifest) -> Result<Vec<Sample<T>>, StoreError> {
    manifest.entries.iter().map(|e| load_sample(root, e)).collect()
}

/// Read the manifest and every sample under `root`.
pub fn load_dataset<T: Real>(root: &Path) -> Result<(Manifest, Vec<Sample<T>>), StoreError> {
    let manifest = Manifest::read(root)?;
    let samples = load_samples(root, &manifest)?;
    Ok((manifest, samples))
}

/// Check every manifest entry: files present and decodable, dimensions
/// matching, fixations in bounds, board metadata parseable.
pub fn validate(root: &Path) -> Result<Manifest, StoreError> {
    let manifest = Manifest::read(root)?;
    let mut problems = Vec::new();
    for e in &manifest.entries {
        for p in [Some(&e.image_path), Some(&e.map_path), e.fixation_path.as_ref()].into_iter().flatten() {
            if !root.join(p).is_file() {
                problems.push(format!("{}: missing file {p}", e.sample_id));
            }
        }
        if problems.iter().any(|p| p.starts_with(&format!("{}:", e.sample_id))) {
            continue;
        }
        match load_sample::<f32>(root, e) {
            Err(err) => problems.push(format!("{}: {err}", e.sample_id)),
            Ok(s) => {
                if let Some(f) = &s.fixations {
                    if let Err(err) = f.check_bounds(s.map.width(), s.map.height()) {
                        problems.push(format!("{}: {err}", e.sample_id));
                    }
                }
                if let Some(Err(err)) = e.meta.board() {
                    problems.push(format!("{}: {err}", e.sample_id));
                }
                if let Err(err) = e.meta.tags() {
                    problems.push(format!("{}: {err}", e.sample_id));
                }
            }
        }
    }
    if problems.is_empty() {
        Ok(manifest)
    } else {
        Err(StoreError::ValidationFailed(problems))
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct SplitSpec {
    pub train_task_ids: BTreeSet<String>,
    pub test_task_ids: BTreeSet<String>,
}

impl SplitSpec {
    pub fn new<S: Into<String>>(train: impl IntoIterator<Item = S>, test: impl IntoIterator<Item = S>) -> Self {
        SplitSpec {
            train_task_ids: train.into_iter().map(Into::into).collect(),
            test_task_ids: test.into_iter().map(Into::into).collect(),
        }
    }

    pub fn check_disjoint(&self) -> Result<(), StoreError> {
        match self.train_task_ids.intersection(&self.test_task_ids).next() {
            Some(t) => Err(StoreError::OverlappingSpec(t.clone())),
            None => Ok(()),
        }
    }
}

/// Partition samples by task; augmented descendants follow their task.
pub fn split_by_task(manifest: &Manifest, spec: &SplitSpec) -> Result<(Manifest, Manifest), StoreError> {
    spec.check_disjoint()?;
    let (mut train, mut test) = (Manifest::default(), Manifest::default());
    for e in &manifest.entries {
        let key = e.meta.split_key();
        if spec.train_task_ids.contains(key) {
            train.entries.push(e.clone());
        } else if spec.test_task_ids.contains(key) {
            test.entries.push(e.clone());
        } else {
            return Err(StoreError::UnknownTask(e.sample_id.clone()));
        }
    }
    Ok((train, test))
}

/// `k` folds over a seeded shuffle of `task_ids`; fold `i` tests on the
/// `i`-th contiguous block and trains on the rest.
pub fn cv_folds(task_ids: &[String], k: usize, seed: u64) -> Result<Vec<SplitSpec>, StoreError> {
    let n = task_ids.len();
    if k == 0 || k > n {
        return Err(StoreError::TooManyFolds { k, n });
    }
    let mut ids = task_ids.to_vec();
    ids.sort();
    ids.dedup();
    if ids.len() != n {
        return Err(StoreError::OverlappingSpec("task list has duplicates".into()));
    }
    ids.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let (base, extra) = (n / k, n % k);
    let mut start = 0;
    let mut blocks = Vec::with_capacity(k);
    for i in 0..k {
        let len = base + usize::from(i < extra);
        blocks.push(&ids[start..start + len]);
        start += len;
    }
    Ok((0..k)
        .map(|i| SplitSpec {
            test_task_ids: blocks[i].iter().cloned().collect(),
            train_task_ids: blocks
                .iter()
                .enumerate()
                .filter(|&(j, _)| j != i)
                .flat_map(|(_, b)| b.iter().cloned())
                .collect(),
        })
        .collect())
}

#[derive(Debug, serde::Deserialize)]
struct FixationRow {
    participant: String,
    task_id: String,
    x_px: f64,
    y_px: f64,
    duration_ms: f64,
}

/// Build one ET sample per task image in `images_dir` from a fixation log.
///
/// Each participant's fixations on a task become one map; the task's map is
/// the rescaled mean over participants. The stored fixation set is the union
/// of all participants' fixation pixels. A `<task>.fen` file next to the
/// image records the position for later augmentation.
pub fn ingest_fixation_log<T: Real>(csv_path: &Path, images_dir: &Path, sigma: f64) -> Result<Vec<Sample<T>>, StoreError> {
    let file = fs::File::open(csv_path).map_err(io_err(csv_path))?;
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(BufReader::new(file));
    let headers = reader.headers().map_err(|e| StoreError::MalformedCsv {
        line: 1,
        reason: e.to_string(),
    })?;
    let expected = ["participant", "task_id", "x_px", "y_px", "duration_ms"];
    if headers.iter().collect::<Vec<_>>() != expected {
        return Err(StoreError::MalformedCsv {
            line: 1,
            reason: format!("header must be `{}`", expected.join(",")),
        });
    }

    let mut tasks: BTreeMap<String, Option<Image>> = BTreeMap::new();
    let dir = fs::read_dir(images_dir).map_err(io_err(images_dir))?;
    for entry in dir {
        let path = entry.map_err(io_err(images_dir))?.path();
        if path.extension().is_some_and(|e| e == "png") {
            if let Some(stem) = path.file_stem() {
                tasks.insert(stem.to_string_lossy().into_owned(), None);
            }
        }
    }

    // task -> participant -> fixations
    let mut by_task: BTreeMap<String, BTreeMap<String, Vec<Fixation>>> = BTreeMap::new();
    for (i, row) in reader.deserialize::<FixationRow>().enumerate() {
        let line = i + 2;
        let row = row.map_err(|e| StoreError::MalformedCsv {
            line,
            reason: e.to_string(),
        })?;
        if !(row.duration_ms > 0.0) || !row.x_px.is_finite() || !row.y_px.is_finite() {
            return Err(StoreError::MalformedCsv {
                line,
                reason: "fixation needs finite coordinates and a positive duration".into(),
            });
        }
        if !tasks.contains_key(&row.task_id) {
            return Err(StoreError::MissingImage(row.task_id));
        }
        by_task
            .entry(row.task_id.clone())
            .or_default()
            .entry(row.participant.clone())
            .or_default()
            .push(Fixation {
                x: row.x_px,
                y: row.y_px,
                duration_ms: row.duration_ms,
                participant: row.participant,
                task: row.task_id,
            });
    }

    let mut samples = Vec::with_capacity(tasks.len());
    for task in tasks.keys() {
        let participants = by_task.get(task).ok_or_else(|| StoreError::EmptyTask(task.clone()))?;
        let ipath = images_dir.join(format!("{task}.png"));
        let file = fs::File::open(&ipath).map_err(io_err(&ipath))?;
        let image = read_png(BufReader::new(file)).map_err(|source| StoreError::BadImage {
            path: ipath.clone(),
            source,
        })?;
        let (w, h) = (image.width(), image.height());
        let task_err = |source| StoreError::Task {
            task: task.clone(),
            source,
        };
        let maps = participants
            .values()
            .map(|fx| fixations_to_map::<T>(fx, w, h, sigma))
            .collect::<Result<Vec<_>, _>>()
            .map_err(task_err)?;
        let map = average_maps(&maps).map_err(task_err)?;
        let points: BTreeSet<(usize, usize)> = participants
            .values()
            .flatten()
            .map(|f| (f.x.round() as usize, f.y.round() as usize))
            .collect();

        let mut meta = SampleMeta::new(Source::Et, task.clone(), 0, Color::White);
        meta.task_id = Some(task.clone());
        let fen_path = images_dir.join(format!("{task}.fen"));
        if fen_path.is_file() {
            let text = fs::read_to_string(&fen_path).map_err(io_err(&fen_path))?;
            let fen = text.trim();
            BoardState::from_fen(fen).map_err(|e| StoreError::MalformedCsv {
                line: 0,
                reason: format!("{}: {e}", fen_path.display()),
            })?;
            meta.fen = Some(fen.to_string());
        }
        let sample = Sample::new(image, map, meta).map_err(task_err)?;
        samples.push(sample.with_fixations(FixationSet::new(points.into_iter().collect())));
    }
    Ok(samples)
}

/// Import stimulus/map PNG pairs matched by file stem (as in public saliency
/// benchmarks) as EXTERNAL samples, resampled to `size` pixels square.
pub fn import_image_map_pairs<T: Real>(images_dir: &Path, maps_dir: &Path, size: usize) -> Result<Vec<Sample<T>>, StoreError> {
    let mut stems = BTreeSet::new();
    for entry in fs::read_dir(images_dir).map_err(io_err(images_dir))? {
        let path = entry.map_err(io_err(images_dir))?.path();
        if path.extension().is_some_and(|e| e == "png") {
            if let Some(s) = path.file_stem() {
                stems.insert(s.to_string_lossy().into_owned());
            }
        }
    }
    let mut out = Vec::with_capacity(stems.len());
    for stem in stems {
        let ipath = images_dir.join(format!("{stem}.png"));
        let mpath = maps_dir.join(format!("{stem}.png"));
        if !mpath.is_file() {
            return Err(StoreError::MissingImage(mpath.display().to_string()));
        }
        let (iw, ih, rgb) = read_any_png(&ipath)?;
        let (mw, mh, mrgb) = read_any_png(&mpath)?;
        let mut data = Vec::with_capacity(size * size * 3);
        let mut values = Vec::with_capacity(size * size);
        for y in 0..size {
            for x in 0..size {
                let (sx, sy) = (nearest_source(x, iw, size), nearest_source(y, ih, size));
                let i = (sy * iw + sx) * 3;
                data.extend_from_slice(&rgb[i..i + 3]);
                let (mx, my) = (nearest_source(x, mw, size), nearest_source(y, mh, size));
                values.push(T::of(mrgb[(my * mw + mx) * 3] as f64 / 255.0));
            }
        }
        let image = Image::new(size, size, data)?;
        let map = SaliencyMap::new(size, size, values).expect("bytes scaled into [0, 1]");
        let meta = SampleMeta::new(Source::External, stem, 0, Color::White);
        out.push(Sample::new(image, map, meta).expect("same size"));
    }
    Ok(out)
}

fn read_any_png(path: &Path) -> Result<(usize, usize, Vec<u8>), StoreError> {
    let file = fs::File::open(path).map_err(io_err(path))?;
    decode_png_rgb(BufReader::new(file)).map_err(|source| StoreError::BadImage {
        path: path.to_path_buf(),
        source,
    })
}
