//! Acceptance suite: one PASS/FAIL line per criterion, then a single
//! assertion that every criterion passed.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use chess_saliency::augment::{augment_all, window_census, AugmentOptions};
use chess_saliency::chess::{is_in_check, parse_pgn, BoardState, Color, PieceKind, Square};
use chess_saliency::metrics::{
    auc_borji, auc_judd, borji_negatives, lcc, nss, sim, Metric, MetricError, MetricsReport,
};
use chess_saliency::nn::{
    grad_check, isolated_tap_gradients, loss_bce, pretrain_then_finetune, random_case, train, GradCheckOptions, Loss,
    Model, ModelConfig, Recipe, TrainConfig,
};
use chess_saliency::render::{png_bytes, render, Image, RenderTheme};
use chess_saliency::sample::{Sample, SampleMeta, Source};
use chess_saliency::saliency::{extract_fixation_points, smap_bytes, FixationSet, SaliencyMap};
use chess_saliency::store::{load_dataset, Manifest};
use chess_saliency::topdown::{gen_game_samples, GenOptions};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use shakmaty as sk;
use shakmaty::Position as _;

const BIN: &str = env!("CARGO_BIN_EXE_chess-saliency");

type Outcome = Result<String, String>;

macro_rules! ensure {
    ($cond:expr, $($msg:tt)+) => {
        if !$cond {
            return Err(format!($($msg)+));
        }
    };
}

fn cli(args: &[&str]) -> Result<String, String> {
    let out = Command::new(BIN).args(args).output().map_err(|e| e.to_string())?;
    if !out.status.success() {
        return Err(format!(
            "`{}` exited with {:?}: {}",
            args.join(" "),
            out.status.code(),
            String::from_utf8_lossy(&out.stderr)
        ));
    }
    Ok(String::from_utf8_lossy(&out.stdout).into_owned())
}

fn p(path: &Path) -> &str {
    path.to_str().expect("utf-8 temp path")
}

fn within(elapsed: Duration, limit_s: u64) -> Result<(), String> {
    if elapsed > Duration::from_secs(limit_s) {
        Err(format!("took {:.1}s, limit {limit_s}s", elapsed.as_secs_f64()))
    } else {
        Ok(())
    }
}

// ---------------------------------------------------------------------------
// Random games written with an independent move generator.

struct RandomGame {
    movetext: String,
    final_fen: String,
}

/// A playout of up to `max_plies` uniformly random legal moves, written as
/// PGN movetext decorated with comments, NAGs and side variations.
fn random_game(rng: &mut ChaCha8Rng, max_plies: usize, decorate: bool) -> RandomGame {
    let mut pos = sk::Chess::default();
    let mut text = String::new();
    let mut resume_black = false;
    for ply in 0..max_plies {
        let moves = pos.legal_moves();
        if moves.is_empty() {
            break;
        }
        let number = ply / 2 + 1;
        if ply % 2 == 0 {
            let _ = write!(text, "{number}. ");
        } else if resume_black {
            let _ = write!(text, "{number}... ");
        }
        resume_black = false;
        let m = moves.choose(rng).expect("non-empty").clone();
        let before = pos.clone();
        let san = sk::san::SanPlus::from_move_and_play_unchecked(&mut pos, &m);
        let _ = write!(text, "{san} ");
        if !decorate {
            continue;
        }
        if rng.gen_bool(0.08) {
            let _ = write!(text, "$1{} ", rng.gen_range(0..9));
        }
        if rng.gen_bool(0.08) {
            text.push_str("{a remark (with parentheses) } ");
            resume_black = ply % 2 == 0;
        }
        if moves.len() > 1 && rng.gen_bool(0.05) {
            let alt = moves.iter().find(|a| **a != m).expect("two moves");
            let alt_san = sk::san::SanPlus::from_move(before, alt);
            let prefix = if ply % 2 == 0 { format!("{number}.") } else { format!("{number}...") };
            let _ = write!(text, "({prefix} {alt_san} {{side line}}) ");
            resume_black = ply % 2 == 0;
        }
    }
    text.push('*');
    let final_fen = sk::fen::Fen::from_position(pos, sk::EnPassantMode::Always).to_string();
    RandomGame { movetext: text, final_fen }
}

fn pgn_corpus(games: &[RandomGame]) -> String {
    let mut out = String::new();
    for (i, g) in games.iter().enumerate() {
        let _ = write!(out, "[Event \"random {i}\"]\n[Site \"?\"]\n[Result \"*\"]\n\n{}\n\n", g.movetext);
    }
    out
}

// ---------------------------------------------------------------------------
// Criterion 1

/// Attack test by direct enumeration of every enemy piece.
fn brute_force_in_check(board: &BoardState, color: Color) -> bool {
    let Some(king) = Square::all().find(|&s| board.get(s).is_some_and(|p| p.kind == PieceKind::King && p.color == color))
    else {
        return false;
    };
    let (kf, kr) = (king.file() as i32, king.rank() as i32);
    let clear_between = |f0: i32, r0: i32| {
        let (df, dr) = ((kf - f0).signum(), (kr - r0).signum());
        let (mut f, mut r) = (f0 + df, r0 + dr);
        while (f, r) != (kf, kr) {
            if board.get(Square::at(f as u8, r as u8)).is_some() {
                return false;
            }
            f += df;
            r += dr;
        }
        true
    };
    Square::all().any(|s| {
        let Some(piece) = board.get(s) else { return false };
        if piece.color == color {
            return false;
        }
        let (f, r) = (s.file() as i32, s.rank() as i32);
        let (df, dr) = (kf - f, kr - r);
        let forward = if piece.color == Color::White { 1 } else { -1 };
        match piece.kind {
            PieceKind::Pawn => dr == forward && df.abs() == 1,
            PieceKind::Knight => matches!((df.abs(), dr.abs()), (1, 2) | (2, 1)),
            PieceKind::King => df.abs().max(dr.abs()) == 1,
            PieceKind::Bishop => df.abs() == dr.abs() && df != 0 && clear_between(f, r),
            PieceKind::Rook => (df == 0) != (dr == 0) && clear_between(f, r),
            PieceKind::Queen => {
                ((df == 0) != (dr == 0) || (df.abs() == dr.abs() && df != 0)) && clear_between(f, r)
            }
        }
    })
}

fn criterion_1() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let games: Vec<RandomGame> = (0..200)
        .map(|_| {
            let plies = rng.gen_range(20..200);
            random_game(&mut rng, plies, true)
        })
        .collect();
    let parsed = parse_pgn(&pgn_corpus(&games)).map_err(|e| e.to_string())?;
    ensure!(parsed.len() == 200, "parsed {} games", parsed.len());
    let mut matched = 0;
    for (i, (g, ours)) in games.iter().zip(&parsed).enumerate() {
        let fen = ours.final_position().to_fen();
        ensure!(fen == g.final_fen, "game {i}: {fen} != {}", g.final_fen);
        matched += 1;
    }

    let mut checks = 0;
    for i in 0..1000u64 {
        let mut prng = ChaCha8Rng::seed_from_u64(10_000 + i);
        let plies = prng.gen_range(0..120);
        let g = random_game(&mut prng, plies, false);
        let board = BoardState::from_fen(&g.final_fen).map_err(|e| e.to_string())?;
        let reference: sk::Chess = g
            .final_fen
            .parse::<sk::fen::Fen>()
            .map_err(|e| e.to_string())?
            .into_position(sk::CastlingMode::Standard)
            .map_err(|e| e.to_string())?;
        for color in [Color::White, Color::Black] {
            let ours = is_in_check(&board, color);
            ensure!(ours == brute_force_in_check(&board, color), "position {i} ({}) {color:?}", g.final_fen);
            checks += usize::from(ours);
        }
        ensure!(
            is_in_check(&board, board.side_to_move) == reference.is_check(),
            "position {i} disagrees with the reference engine"
        );
    }
    let elapsed = start.elapsed();
    within(elapsed, 60)?;
    Ok(format!(
        "{matched}/200 final FENs match; check flags agree on 1000 positions ({checks} in check); {:.1}s",
        elapsed.as_secs_f64()
    ))
}

// ---------------------------------------------------------------------------
// Criterion 2

fn oracle_lcc(a: &[f64], b: &[f64]) -> Option<f64> {
    let n = a.len() as f64;
    let (ma, mb) = (a.iter().sum::<f64>() / n, b.iter().sum::<f64>() / n);
    let sab: f64 = a.iter().zip(b).map(|(x, y)| (x - ma) * (y - mb)).sum();
    let saa: f64 = a.iter().map(|x| (x - ma) * (x - ma)).sum();
    let sbb: f64 = b.iter().map(|y| (y - mb) * (y - mb)).sum();
    (saa > 0.0 && sbb > 0.0).then(|| sab / (saa * sbb).sqrt())
}

fn oracle_sim(a: &[f64], b: &[f64]) -> Option<f64> {
    let (sa, sb) = (a.iter().sum::<f64>(), b.iter().sum::<f64>());
    (sa > 0.0 && sb > 0.0).then(|| a.iter().zip(b).map(|(x, y)| (x / sa).min(y / sb)).sum())
}

fn oracle_nss(a: &[f64], fix: &[usize]) -> Option<f64> {
    let n = a.len() as f64;
    let mean = a.iter().sum::<f64>() / n;
    let std = (a.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n).sqrt();
    (std > 0.0).then(|| fix.iter().map(|&i| (a[i] - mean) / std).sum::<f64>() / fix.len() as f64)
}

/// Trapezoidal ROC area with thresholds at the fixated values, rates counted
/// by scanning every pixel.
fn oracle_judd(a: &[f64], fix: &[usize]) -> Option<f64> {
    let is_fix = |i: usize| fix.contains(&i);
    let n_neg = (0..a.len()).filter(|&i| !is_fix(i)).count();
    if n_neg == 0 {
        return None;
    }
    let mut thresholds: Vec<f64> = fix.iter().map(|&i| a[i]).collect();
    thresholds.sort_by(|x, y| y.partial_cmp(x).unwrap());
    thresholds.dedup();
    let mut points = vec![(0.0, 0.0)];
    for t in thresholds {
        let tp = fix.iter().filter(|&&i| a[i] >= t).count() as f64 / fix.len() as f64;
        let fp = (0..a.len()).filter(|&i| !is_fix(i) && a[i] >= t).count() as f64 / n_neg as f64;
        points.push((fp, tp));
    }
    points.push((1.0, 1.0));
    Some(points.windows(2).map(|w| (w[1].0 - w[0].0) * (w[1].1 + w[0].1) / 2.0).sum())
}

/// Mann-Whitney statistic (ties count one half) against the shared negatives.
fn oracle_borji(a: &[f64], fix: &[usize], splits: &[Vec<usize>]) -> f64 {
    let per_split = |neg: &Vec<usize>| {
        let mut wins = 0.0;
        for &i in fix {
            for &j in neg {
                wins += if a[i] > a[j] {
                    1.0
                } else if a[i] == a[j] {
                    0.5
                } else {
                    0.0
                };
            }
        }
        wins / (fix.len() * neg.len()) as f64
    };
    splits.iter().map(per_split).sum::<f64>() / splits.len() as f64
}

fn compare(name: &str, ours: Result<f64, MetricError>, oracle: Option<f64>, tol: f64, worst: &mut f64) -> Result<(), String> {
    match (ours, oracle) {
        (Ok(v), Some(o)) => {
            let d = (v - o).abs();
            *worst = worst.max(d);
            ensure!(d <= tol, "{name}: {v} vs oracle {o}");
        }
        (Err(e), None) => ensure!(e.is_undefined(), "{name}: unexpected error {e}"),
        (ours, oracle) => return Err(format!("{name}: {ours:?} vs oracle {oracle:?}")),
    }
    Ok(())
}

fn criterion_2() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let levels = [0.0, 0.5, 1.0];
    let (mut maps, mut worst, mut worst_borji) = (0usize, 0.0f64, 0.0f64);
    for w in 1..=3usize {
        for h in 1..=3usize {
            let n = w * h;
            let total = 3usize.pow(n as u32);
            for code in 0..total {
                let values: Vec<f64> = (0..n).map(|i| levels[code / 3usize.pow(i as u32) % 3]).collect();
                let other: Vec<f64> = (0..n).map(|_| levels[rng.gen_range(0..3)]).collect();
                let k = rng.gen_range(1..=n);
                let mut idx: Vec<usize> = (0..n).collect();
                idx.shuffle(&mut rng);
                let mut fix: Vec<usize> = idx[..k].to_vec();
                fix.sort();
                let p = SaliencyMap::new(w, h, values.clone()).unwrap();
                let q = SaliencyMap::new(w, h, other.clone()).unwrap();
                let set = FixationSet::new(fix.iter().map(|&i| (i % w, i / w)).collect());

                compare("LCC", lcc(&p, &q), oracle_lcc(&values, &other), 1e-9, &mut worst)?;
                compare("SIM", sim(&p, &q), oracle_sim(&values, &other), 1e-9, &mut worst)?;
                compare("NSS", nss(&p, &set), oracle_nss(&values, &fix), 1e-9, &mut worst)?;
                compare("AUC-Judd", auc_judd(&p, &set), oracle_judd(&values, &fix), 1e-9, &mut worst)?;
                let seed = code as u64;
                let splits = borji_negatives(w, h, fix.len(), 10, seed);
                compare("AUC-Borji", auc_borji(&p, &set, 10, seed), Some(oracle_borji(&values, &fix, &splits)), 1e-6, &mut worst_borji)?;
                maps += 1;
            }
        }
    }
    ensure!(maps >= 10_000, "only {maps} maps");
    let elapsed = start.elapsed();
    within(elapsed, 120)?;
    Ok(format!(
        "{maps} maps; max |diff| {worst:.1e} (Borji {worst_borji:.1e}); {:.1}s",
        elapsed.as_secs_f64()
    ))
}

// ---------------------------------------------------------------------------
// Criterion 3

fn criterion_3() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut worst = 0.0f64;
    for _ in 0..50 {
        let (w, h) = (rng.gen_range(2..16), rng.gen_range(2..16));
        let mut values: Vec<f64> = (0..w * h).map(|_| rng.gen_range(0.0..1.0)).collect();
        values[0] = 0.0;
        values[1] = 1.0;
        let m = SaliencyMap::new(w, h, values.clone()).unwrap();
        let peak = FixationSet::new(vec![(1, 0)]);
        let judd = auc_judd(&m, &peak).map_err(|e| e.to_string())?;
        let l = lcc(&m, &m).map_err(|e| e.to_string())?;
        let s = sim(&m, &m).map_err(|e| e.to_string())?;
        ensure!((l - 1.0).abs() <= 1e-9 && (s - 1.0).abs() <= 1e-9, "LCC {l}, SIM {s}");
        ensure!(judd == 1.0, "AUC-Judd {judd} on identical maps");
        worst = worst.max((l - 1.0).abs()).max((s - 1.0).abs());

        let constant = SaliencyMap::constant(w, h, rng.gen_range(0.0..1.0));
        let fix = FixationSet::new((0..rng.gen_range(1..w * h)).map(|i| (i % w, i / w)).collect());
        let cj = auc_judd(&constant, &fix).map_err(|e| e.to_string())?;
        let cb = auc_borji(&constant, &fix, 20, rng.gen()).map_err(|e| e.to_string())?;
        ensure!(cj == 0.5, "constant AUC-Judd {cj}");
        ensure!((cb - 0.5).abs() <= 1e-9, "constant AUC-Borji {cb}");
    }
    Ok(format!("50 random maps; identical LCC/SIM within {worst:.1e}, AUC-Judd 1; constant AUCs 0.5"))
}

// ---------------------------------------------------------------------------
// Criterion 4

fn criterion_4() -> Outcome {
    let census: Vec<usize> = [3u8, 4, 5].iter().map(|&s| window_census(s)).collect();
    ensure!(census == [36, 25, 16], "window census {census:?}");
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let images = dir.path().join("stimuli");
    fs::create_dir(&images).map_err(|e| e.to_string())?;
    let theme = RenderTheme::with_cell_size(8);
    let mut csv = String::from("participant,task_id,x_px,y_px,duration_ms\n");
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for t in 1..=11 {
        let g = random_game(&mut rng, 10 + t, false);
        let board = BoardState::from_fen(&g.final_fen).map_err(|e| e.to_string())?;
        let image = render(&board, Color::White, &theme).map_err(|e| e.to_string())?;
        fs::write(images.join(format!("task{t:02}.png")), png_bytes(&image)).map_err(|e| e.to_string())?;
        fs::write(images.join(format!("task{t:02}.fen")), &g.final_fen).map_err(|e| e.to_string())?;
        for participant in 1..=3 {
            for _ in 0..4 {
                let _ = writeln!(
                    csv,
                    "p{participant},task{t:02},{},{},{}",
                    rng.gen_range(0..64),
                    rng.gen_range(0..64),
                    rng.gen_range(100..600)
                );
            }
        }
    }
    let csv_path = dir.path().join("fixations.csv");
    fs::write(&csv_path, csv).map_err(|e| e.to_string())?;
    let et = dir.path().join("et");
    let aet = dir.path().join("aet");
    cli(&["ingest-et", "--csv", p(&csv_path), "--images", p(&images), "--sigma", "6", "--out", p(&et)])?;
    let out = cli(&["augment", "--in", p(&et), "--out", p(&aet)])?;
    let stored = Manifest::read(&aet).map_err(|e| e.to_string())?.len();
    ensure!(stored == 3388 && stored == 11 * 77 * 2 * 2, "{stored} AET samples");
    ensure!(out.contains("11 inputs x 77 windows x 2 x 2 = 3388 samples"), "count line missing:\n{out}");
    let note = out.lines().find(|l| l.starts_with("note:")).ok_or("divergence note missing")?;
    ensure!(note.contains("6600"), "note does not mention 6600: {note}");
    Ok(format!("11 ET -> {stored} AET; census 36+25+16 = 77; printed `{note}`"))
}

// ---------------------------------------------------------------------------
// Criterion 5

fn square(name: &str) -> (usize, usize) {
    let b = name.as_bytes();
    ((b[0] - b'a') as usize, (b[1] - b'1') as usize)
}

/// Hand-derived map: each listed square's cell filled with its value.
fn cell_map(cell: usize, cells: &[(&str, f32)], view: Color) -> SaliencyMap<f32> {
    let size = cell * 8;
    let mut values = vec![0.0f32; size * size];
    for &(name, v) in cells {
        let (f, r) = square(name);
        let (col, row) = match view {
            Color::White => (f, 7 - r),
            Color::Black => (7 - f, r),
        };
        for y in row * cell..(row + 1) * cell {
            for x in col * cell..(col + 1) * cell {
                values[y * size + x] = v;
            }
        }
    }
    SaliencyMap::new(size, size, values).unwrap()
}

fn criterion_5() -> Outcome {
    let game = parse_pgn("1. e4 e5 2. Bc4 Nc6 3. Qh5 Nf6 4. Qxf7# 1-0").map_err(|e| e.to_string())?.remove(0);
    let expected: [&[(&str, f32)]; 7] = [
        &[("e2", 1.0), ("e4", 1.0), ("e3", 0.5)],
        &[("e7", 1.0), ("e5", 1.0), ("e6", 0.5)],
        &[("f1", 1.0), ("c4", 1.0), ("e2", 0.5), ("d3", 0.5)],
        &[("b8", 1.0), ("c6", 1.0)],
        &[("d1", 1.0), ("h5", 1.0), ("e2", 0.5), ("f3", 0.5), ("g4", 0.5)],
        &[("g8", 1.0), ("f6", 1.0)],
        &[("h5", 1.0), ("f7", 1.0), ("g6", 0.5), ("e8", 1.0)],
    ];
    let cell = 8;
    let samples = gen_game_samples::<f32>(&game, "scholar", &GenOptions::default(), &RenderTheme::with_cell_size(cell))
        .map_err(|e| e.to_string())?;
    ensure!(samples.len() == 14, "{} samples", samples.len());
    for (i, s) in samples.iter().enumerate() {
        let ply = i / 2;
        let mover = if ply % 2 == 0 { Color::White } else { Color::Black };
        let view = if i % 2 == 0 { mover } else { mover.opposite() };
        ensure!(s.meta.ply == ply + 1 && s.meta.perspective == view, "sample {i} is ply {} {:?}", s.meta.ply, s.meta.perspective);
        let want = cell_map(cell, expected[ply], view);
        ensure!(smap_bytes(&s.map) == smap_bytes(&want), "ply {} {view:?} map differs", ply + 1);
    }
    Ok("14/14 maps byte-identical to the hand-derived SMAPs".into())
}

// ---------------------------------------------------------------------------
// Criterion 6

fn criterion_6() -> Outcome {
    let start = Instant::now();
    let model: Model<f64> = Model::build(ModelConfig::tiny()).map_err(|e| e.to_string())?;
    let (image, gt) = random_case(model.config().input_size, 6);
    let opts = GradCheckOptions {
        coordinates: 64,
        seed: 6,
        ..GradCheckOptions::default()
    };
    let mut parts = Vec::new();
    for loss in Loss::ALL {
        let r = grad_check(&model, &image, &gt, loss, &opts).map_err(|e| e.to_string())?;
        ensure!(r.checked.len() >= 50, "{loss}: only {} coordinates", r.checked.len());
        ensure!(r.max_relative_error < 1e-4, "{loss}: max relative error {:.3e}", r.max_relative_error);
        parts.push(format!("{loss} {:.1e} over {}", r.max_relative_error, r.checked.len()));
    }
    let elapsed = start.elapsed();
    within(elapsed, 60)?;
    Ok(format!("{}; {:.1}s", parts.join(", "), elapsed.as_secs_f64()))
}

// ---------------------------------------------------------------------------
// Criterion 7

fn criterion_7() -> Outcome {
    let start = Instant::now();
    let game = parse_pgn("1. e4 e5 2. Nf3 Nc6 *").map_err(|e| e.to_string())?.remove(0);
    let options = GenOptions {
        both_perspectives: false,
        ..GenOptions::default()
    };
    let data = gen_game_samples::<f32>(&game, "overfit", &options, &RenderTheme::with_cell_size(8))
        .map_err(|e| e.to_string())?;
    ensure!(data.len() == 4 && data[0].size() == 64, "{} samples", data.len());
    let model: Model<f32> = Model::build(ModelConfig::toy(64)).map_err(|e| e.to_string())?;
    let cfg = TrainConfig {
        epochs: 500,
        learning_rate: 0.01,
        batch_size: 1,
        momentum: 0.9,
        loss: Loss::Bce,
        ..TrainConfig::default()
    };
    let (model, history) = train(model, &data, &cfg).map_err(|e| e.to_string())?;
    let last_epoch = *history.epoch_losses.last().ok_or("no epochs")?;
    let mut bce = 0.0;
    let mut corr = 0.0;
    for s in &data {
        let pred = model.predict(&s.image).map_err(|e| e.to_string())?;
        bce += loss_bce(&s.map, &pred).map_err(|e| e.to_string())? / 4.0;
        corr += lcc(&pred, &s.map).map_err(|e| e.to_string())? / 4.0;
    }
    ensure!(last_epoch < 0.05 && bce < 0.05, "final BCE {bce:.4} (last epoch {last_epoch:.4})");
    ensure!(corr > 0.95, "mean LCC {corr:.4}");
    let elapsed = start.elapsed();
    within(elapsed, 300)?;
    Ok(format!(
        "final BCE {bce:.4} (last epoch {last_epoch:.4}), mean LCC {corr:.4}; {:.1}s",
        elapsed.as_secs_f64()
    ))
}

// ---------------------------------------------------------------------------
// Criterion 8

fn dir_contents(root: &Path) -> BTreeMap<String, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in fs::read_dir(&d).unwrap() {
            let path = e.unwrap().path();
            if path.is_dir() {
                stack.push(path);
            } else {
                let rel = path.strip_prefix(root).unwrap().display().to_string();
                out.insert(rel, fs::read(&path).unwrap());
            }
        }
    }
    out
}

fn criterion_8() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let games: Vec<RandomGame> = (0..4).map(|_| random_game(&mut rng, 16, true)).collect();
    let pgn = dir.path().join("games.pgn");
    fs::write(&pgn, pgn_corpus(&games)).map_err(|e| e.to_string())?;
    let (a, b) = (dir.path().join("gd_a"), dir.path().join("gd_b"));
    for out in [&a, &b] {
        cli(&["gen-gd", "--pgn", p(&pgn), "--out", p(out), "--size", "32"])?;
    }
    let (da, db) = (dir_contents(&a), dir_contents(&b));
    ensure!(!da.is_empty() && da == db, "gen-gd outputs differ");

    let mut weights = Vec::new();
    for (name, parallel) in [("w1", false), ("w2", false), ("w3", true)] {
        let out = dir.path().join(format!("{name}.cgwt"));
        let mut args = vec![
            "train", "--data", p(&a), "--preset", "tiny", "--recipe", "custom", "--epochs", "3", "--batch-size", "3",
            "--momentum", "0.5", "--seed", "11", "--out", p(&out),
        ];
        if parallel {
            args.push("--parallel");
        }
        cli(&args)?;
        weights.push(fs::read(&out).map_err(|e| e.to_string())?);
    }
    ensure!(weights[0] == weights[1], "two identical train runs wrote different weights");
    ensure!(weights[0] == weights[2], "parallel run wrote different weights");
    Ok(format!(
        "gen-gd twice: {} files identical; train twice: {}-byte weight files identical (parallel too)",
        da.len(),
        weights[0].len()
    ))
}

// ---------------------------------------------------------------------------
// Criterion 9

fn conv_params(out_c: usize, in_c: usize, k: usize) -> usize {
    out_c * in_c * k * k + out_c
}

fn criterion_9() -> Outcome {
    let cfg = ModelConfig::default();
    let model: Model<f32> = Model::build(cfg.clone()).map_err(|e| e.to_string())?;
    let stages = cfg.decoder_stages();
    let dec_sets: Vec<String> = model.parameter_sets().into_iter().filter(|s| s.starts_with("dec")).collect();
    let want: Vec<String> = (1..=stages).map(|k| format!("dec.{k}")).collect();
    ensure!(dec_sets == want, "decoder sets {dec_sets:?}");

    let d = cfg.decoder_width;
    let mut in_c = cfg.input_channels;
    let mut expected = 0;
    let mut widths = Vec::new();
    for b in &cfg.encoder_blocks {
        for _ in 0..b.conv_count {
            expected += conv_params(b.channels, in_c, 3);
            in_c = b.channels;
        }
        widths.push(b.channels);
    }
    expected += cfg.tap_blocks.iter().map(|&t| conv_params(d, widths[t - 1], 1)).sum::<usize>();
    let stage = conv_params(d, d, 4);
    expected += stages * stage + conv_params(1, d, 1) + conv_params(1, 3, cfg.fusion_kernel);
    ensure!(model.param_count() == expected, "{} parameters, shared layout implies {expected}", model.param_count());
    let per_path: usize = cfg.tap_blocks.iter().sum::<usize>() * stage;
    ensure!(model.param_count() < expected - stages * stage + per_path, "census matches a per-path decoder");

    // Every tap path routes gradient into the one shallowest stage.
    let tiny: Model<f64> = Model::build(ModelConfig::tiny()).map_err(|e| e.to_string())?;
    let (image, gt) = random_case(tiny.config().input_size, 9);
    let input = tiny.input_from_image(&image).map_err(|e| e.to_string())?;
    let dec1 = tiny.params().iter().position(|p| p.name == "dec.1.weight").ok_or("no dec.1")?;
    for tap in 0..3 {
        let g = isolated_tap_gradients(&tiny, input.clone(), &gt, Loss::Bce, tap);
        ensure!(g[dec1].iter().any(|&v| v != 0.0), "tap {tap} does not reach dec.1");
    }
    Ok(format!(
        "decoder sets {} for 3 taps; {} parameters = shared layout (per-path would add {})",
        dec_sets.join(","),
        expected,
        per_path - stages * stage
    ))
}

// ---------------------------------------------------------------------------
// Criterion 10

fn tiny_sample(source: Source, board: &BoardState, id: &str, rng: &mut ChaCha8Rng) -> Sample<f32> {
    let image = match source {
        Source::External => Image::new(32, 32, (0..32 * 32 * 3).map(|_| rng.gen()).collect()).unwrap(),
        _ => render(board, Color::White, &RenderTheme::with_cell_size(4)).unwrap(),
    };
    let map = SaliencyMap::from_fn(32, 32, |x, y| if (x / 4 + y / 4) % 3 == 0 { 1.0 } else { 0.0 });
    let mut meta = SampleMeta::new(source, id, 0, Color::White);
    if source == Source::Et {
        meta.task_id = Some(id.to_string());
        meta.fen = Some(board.to_fen());
    }
    Sample::new(image, map, meta).unwrap()
}

fn criterion_10() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let game = parse_pgn("1. d4 d5 2. c4 *").map_err(|e| e.to_string())?.remove(0);
    let gd = gen_game_samples::<f32>(&game, "g", &GenOptions::default(), &RenderTheme::with_cell_size(4))
        .map_err(|e| e.to_string())?;
    let external: Vec<_> = (0..3).map(|i| tiny_sample(Source::External, &BoardState::starting(), &format!("x{i}"), &mut rng)).collect();
    let et: Vec<_> = (0..2).map(|i| tiny_sample(Source::Et, &game.final_position(), &format!("t{i}"), &mut rng)).collect();
    let aet = augment_all(&et, &AugmentOptions { sizes: vec![8], ..AugmentOptions::default() }).map_err(|e| e.to_string())?;
    let cfg = TrainConfig {
        epochs: 1,
        batch_size: 2,
        ..TrainConfig::default()
    };
    let model: Model<f32> = Model::build(ModelConfig::tiny()).map_err(|e| e.to_string())?;
    let none: &[Sample<f32>] = &[];
    let table: [(Recipe, &[Sample<f32>], &[Sample<f32>], Option<Source>, Source); 5] = [
        (Recipe::V1, &gd, &et, Some(Source::Gd), Source::Et),
        (Recipe::V2, &external, &et, Some(Source::External), Source::Et),
        (Recipe::V3, &gd, &aet, Some(Source::Gd), Source::Aet),
        (Recipe::V4, &external, &aet, Some(Source::External), Source::Aet),
        (Recipe::V5, none, &et, None, Source::Et),
    ];
    let mut rows = Vec::new();
    for (recipe, pre, fine, pre_src, fine_src) in table {
        let (_, h) = pretrain_then_finetune(model.clone(), recipe, pre, fine, &cfg, &cfg).map_err(|e| format!("{recipe}: {e}"))?;
        ensure!(h.recipe.as_deref() == Some(recipe.name()), "{recipe}: history names {:?}", h.recipe);
        let mut expect = Vec::new();
        if let Some(src) = pre_src {
            expect.push(("pretrain".to_string(), vec![src], pre.len()));
        }
        expect.push(("finetune".to_string(), vec![fine_src], fine.len()));
        let got: Vec<_> = h.phases.iter().map(|ph| (ph.name.clone(), ph.sources.clone(), ph.samples)).collect();
        ensure!(got == expect, "{recipe}: phases {got:?}, expected {expect:?}");
        let label: Vec<String> = h
            .phases
            .iter()
            .map(|ph| ph.sources.iter().map(|s| s.name()).collect::<Vec<_>>().join("+"))
            .collect();
        rows.push(format!("{recipe}={}", label.join("->")));
    }
    // Wrong combinations are refused before any training.
    for (recipe, pre, fine) in [
        (Recipe::V1, &external, &et),
        (Recipe::V3, &gd, &et),
        (Recipe::V1, &gd[..0].to_vec(), &et),
        (Recipe::V5, &gd, &et),
    ] {
        ensure!(
            pretrain_then_finetune(model.clone(), recipe, pre, fine, &cfg, &cfg).is_err(),
            "{recipe} accepted a wrong corpus"
        );
    }
    Ok(format!("{}; mismatched corpora rejected", rows.join(" ")))
}

// ---------------------------------------------------------------------------
// Criterion 11

fn criterion_11() -> Outcome {
    let start = Instant::now();
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let games: Vec<RandomGame> = (0..50).map(|_| random_game(&mut rng, 24, true)).collect();
    let pgn = dir.path().join("games.pgn");
    fs::write(&pgn, pgn_corpus(&games)).map_err(|e| e.to_string())?;
    let gd = dir.path().join("gd");
    let summary = cli(&["gen-gd", "--pgn", p(&pgn), "--out", p(&gd), "--size", "64", "--single-perspective"])?;
    ensure!(summary.contains("\"games\":50"), "gen-gd summary: {summary}");
    let manifest = Manifest::read(&gd).map_err(|e| e.to_string())?;
    let ids = manifest.tasks();
    ensure!(ids.len() == 50, "{} games in the manifest", ids.len());
    let train_ids = ids[..9].join(",");
    let test_ids = ids[9..11].join(",");

    let model = dir.path().join("toy.cgwt");
    cli(&[
        "train", "--data", p(&gd), "--tasks", &train_ids, "--preset", "toy", "--recipe", "custom", "--epochs", "20",
        "--out", p(&model),
    ])?;
    let report_path = dir.path().join("report.txt");
    let text = cli(&["eval", "--model", p(&model), "--data", p(&gd), "--tasks", &test_ids, "--report", p(&report_path)])?;
    let report = MetricsReport::parse_key_values(&text).map_err(|e| e.to_string())?;
    let (_, held_out) = load_dataset::<f32>(&gd).map_err(|e| e.to_string())?;
    let held_out: Vec<_> = held_out
        .into_iter()
        .filter(|s| ids[9..11].iter().any(|t| t == s.meta.split_key()))
        .collect();
    ensure!(report.pairs == held_out.len() && report.pairs > 0, "{} pairs for {} held-out samples", report.pairs, held_out.len());
    for m in Metric::ALL {
        let v = report.get(m);
        ensure!(v.mean.is_finite() && v.std.is_finite(), "{m} is {} ± {}", v.mean, v.std);
        ensure!(v.n > 0, "{m} undefined on every pair");
    }
    ensure!(report.get(Metric::Nss).n == report.pairs, "NSS computed on {} of {} pairs", report.get(Metric::Nss).n, report.pairs);
    for s in &held_out {
        let pts = extract_fixation_points(&s.map, 0.5, 8.0).map_err(|e| e.to_string())?;
        ensure!(!pts.is_empty(), "no fixation points in {}", s.meta.default_id());
    }
    let elapsed = start.elapsed();
    within(elapsed, 600)?;
    let row = text.lines().find(|l| l.starts_with("all ")).unwrap_or("").split_whitespace().skip(1).collect::<Vec<_>>().join(" ");
    Ok(format!(
        "50 games -> {} samples; trained on 9 games, {} held-out pairs: {row}; {:.1}s",
        manifest.len(),
        report.pairs,
        elapsed.as_secs_f64()
    ))
}

// ---------------------------------------------------------------------------

#[test]
fn acceptance() {
    let criteria: [(&str, fn() -> Outcome); 11] = [
        ("rules engine matches an independent replay", criterion_1),
        ("metrics match brute-force oracles", criterion_2),
        ("metric anchor values", criterion_3),
        ("augmentation count law", criterion_4),
        ("GD maps for Scholar's mate", criterion_5),
        ("gradient check", criterion_6),
        ("overfit smoke test", criterion_7),
        ("determinism of train and gen-gd", criterion_8),
        ("one decoder parameter set per scale", criterion_9),
        ("recipe conformance", criterion_10),
        ("end-to-end pipeline", criterion_11),
    ];
    let mut failed = Vec::new();
    for (i, (name, run)) in criteria.iter().enumerate() {
        let n = i + 1;
        let outcome = catch_unwind(AssertUnwindSafe(run)).unwrap_or_else(|e| {
            Err(e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panicked".into()))
        });
        match outcome {
            Ok(detail) => println!("PASS criterion {n}: {name}: {detail}"),
            Err(why) => {
                println!("FAIL criterion {n}: {name}: {why}");
                failed.push(n);
            }
        }
    }
    assert!(failed.is_empty(), "failed criteria: {failed:?}");
}
