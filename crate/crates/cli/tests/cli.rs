use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use chess_saliency::chess::BoardState;
use chess_saliency::render::{decode_png_rgb, png_bytes, render, RenderTheme};
use chess_saliency::store::{load_dataset, Manifest};

const BIN: &str = env!("CARGO_BIN_EXE_chess-saliency");

fn run(args: &[&str]) -> Output {
    Command::new(BIN).args(args).output().expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

const TWO_GAMES: &str = "[Event \"a\"]\n\n1. e4 e5 2. Qh5 Nc6 3. Bc4 Nf6 4. Qxf7# 1-0\n\n\
[Event \"b\"]\n\n1. d4 {solid} d5 2. c4 $1 (2. Nf3) e6 *\n";

#[test]
fn help_and_version_exit_zero() {
    assert_eq!(code(&run(&["--help"])), 0);
    assert_eq!(code(&run(&["--version"])), 0);
    assert_eq!(code(&run(&["train", "--help"])), 0);
}

#[test]
fn usage_errors_exit_one() {
    assert_eq!(code(&run(&[])), 1);
    assert_eq!(code(&run(&["frobnicate"])), 1);
    assert_eq!(code(&run(&["render", "--bogus"])), 1);
    assert_eq!(code(&run(&["predict", "--model", "m", "--out", "o"])), 1);
    assert_eq!(code(&run(&["train", "--data", "d", "--out", "o", "--recipe", "v9"])), 1);
}

#[test]
fn render_writes_a_board_png() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("b.png");
    let fen = BoardState::starting().to_fen();
    let r = run(&["render", "--fen", &fen, "--out", p(&out), "--size", "64", "--perspective", "black"]);
    assert_eq!(code(&r), 0, "{}", String::from_utf8_lossy(&r.stderr));
    let bytes = fs::read(&out).unwrap();
    let (w, h, _) = decode_png_rgb(bytes.as_slice()).unwrap();
    assert_eq!((w, h), (64, 64));
    let expected = render(&BoardState::starting(), chess_saliency::chess::Color::Black, &RenderTheme::with_cell_size(8)).unwrap();
    assert_eq!(bytes, png_bytes(&expected));

    assert_eq!(code(&run(&["render", "--fen", "not a fen", "--out", p(&out)])), 2);
    assert_eq!(code(&run(&["render", "--fen", &fen, "--out", p(&out), "--size", "60"])), 1);
}

#[test]
fn gen_gd_counts_and_limits() {
    let dir = tempfile::tempdir().unwrap();
    let pgn = dir.path().join("g.pgn");
    fs::write(&pgn, TWO_GAMES).unwrap();
    let out = dir.path().join("gd");
    let r = run(&["gen-gd", "--pgn", p(&pgn), "--out", p(&out), "--size", "32"]);
    assert_eq!(code(&r), 0, "{}", String::from_utf8_lossy(&r.stderr));
    // 7 + 4 plies, two perspectives each.
    assert_eq!(Manifest::read(&out).unwrap().len(), 22);
    assert!(stdout(&r).contains("\"games\":2"));

    let one = dir.path().join("one");
    let r = run(&["gen-gd", "--pgn", p(&pgn), "--out", p(&one), "--size", "32", "--limit-games", "1", "--single-perspective"]);
    assert_eq!(code(&r), 0);
    assert_eq!(Manifest::read(&one).unwrap().len(), 7);
}

#[test]
fn gen_gd_reads_gzip() {
    use std::io::Write;
    let dir = tempfile::tempdir().unwrap();
    let gz = dir.path().join("g.pgn.gz");
    let mut enc = flate2::write::GzEncoder::new(fs::File::create(&gz).unwrap(), flate2::Compression::default());
    enc.write_all(TWO_GAMES.as_bytes()).unwrap();
    enc.finish().unwrap();
    let out = dir.path().join("gd");
    let r = run(&["gen-gd", "--pgn", p(&gz), "--out", p(&out), "--size", "32", "--single-perspective"]);
    assert_eq!(code(&r), 0, "{}", String::from_utf8_lossy(&r.stderr));
    assert_eq!(Manifest::read(&out).unwrap().len(), 11);
}

#[test]
fn corrupt_pgn_is_a_data_error() {
    let dir = tempfile::tempdir().unwrap();
    let pgn = dir.path().join("bad.pgn");
    fs::write(&pgn, "1. e4 e5 2. Ke3 Ke6 3. Qxz9 *\n").unwrap();
    let out = dir.path().join("gd");
    let r = run(&["gen-gd", "--pgn", p(&pgn), "--out", p(&out)]);
    assert_eq!(code(&r), 2);
    assert!(String::from_utf8_lossy(&r.stderr).contains("no playable games"));
    assert_eq!(code(&run(&["gen-gd", "--pgn", p(&dir.path().join("missing.pgn")), "--out", p(&out)])), 2);
}

#[test]
fn grad_check_passes_and_reports_tolerance_failures() {
    let r = run(&["grad-check", "--coordinates", "50"]);
    assert_eq!(code(&r), 0, "{}", stdout(&r));
    assert_eq!(stdout(&r).matches(" ok").count(), 3);
    assert_eq!(code(&run(&["grad-check", "--coordinates", "50", "--tolerance", "0"])), 3);
}

#[test]
fn train_predict_eval_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let pgn = dir.path().join("g.pgn");
    fs::write(&pgn, TWO_GAMES).unwrap();
    let gd = dir.path().join("gd");
    assert_eq!(code(&run(&["gen-gd", "--pgn", p(&pgn), "--out", p(&gd), "--size", "32"])), 0);
    let (manifest, _) = load_dataset::<f32>(&gd).unwrap();
    let games = manifest.tasks();
    assert_eq!(games.len(), 2);

    let model = dir.path().join("m.cgwt");
    let r = run(&[
        "train", "--data", p(&gd), "--preset", "tiny", "--epochs", "2", "--recipe", "custom",
        "--tasks", &games[0], "--out", p(&model),
    ]);
    assert_eq!(code(&r), 0, "{}", String::from_utf8_lossy(&r.stderr));
    let text = stdout(&r);
    assert!(text.contains("phase finetune: 14 samples [GD], 2 epochs"), "{text}");
    assert!(text.contains("checksum "));
    assert!(model.is_file());
    assert!(dir.path().join("m.cgwt.config.json").is_file());
    assert!(dir.path().join("m.cgwt.history.json").is_file());

    // v1 needs a pretraining corpus.
    assert_eq!(code(&run(&["train", "--data", p(&gd), "--preset", "tiny", "--epochs", "1", "--recipe", "v1", "--out", p(&model)])), 2);

    let map = dir.path().join("map.png");
    let overlay = dir.path().join("overlay.png");
    let fen = BoardState::starting().to_fen();
    let r = run(&["predict", "--model", p(&model), "--fen", &fen, "--out", p(&map), "--overlay", p(&overlay)]);
    assert_eq!(code(&r), 0, "{}", String::from_utf8_lossy(&r.stderr));
    assert_eq!(decode_png_rgb(fs::read(&map).unwrap().as_slice()).unwrap().0, 32);
    assert!(overlay.is_file());
    let board = dir.path().join("board.png");
    assert_eq!(code(&run(&["render", "--fen", &fen, "--out", p(&board), "--size", "32"])), 0);
    assert_eq!(code(&run(&["predict", "--model", p(&model), "--image", p(&board), "--out", p(&map)])), 0);

    let report = dir.path().join("report.txt");
    let r = run(&[
        "eval", "--model", p(&model), "--data", p(&gd), "--tasks", &games[1], "--folds", "1",
        "--borji-splits", "5", "--report", p(&report),
    ]);
    assert_eq!(code(&r), 0, "{}", String::from_utf8_lossy(&r.stderr));
    let written = fs::read_to_string(&report).unwrap();
    assert_eq!(written, stdout(&r));
    assert!(written.lines().any(|l| l.starts_with("fold1 ")));
    assert!(written.lines().any(|l| l.starts_with("all ")));
    for metric in ["LCC", "SIM", "NSS", "AUC_JUDD", "AUC_BORJI"] {
        assert!(written.contains(metric), "{metric} missing from\n{written}");
    }
    // Two folds over a single task cannot be formed.
    assert_ne!(code(&run(&["eval", "--model", p(&model), "--data", p(&gd), "--tasks", &games[1], "--folds", "2", "--report", p(&report)])), 0);
    assert_eq!(code(&run(&["eval", "--model", p(&dir.path().join("none")), "--data", p(&gd), "--report", p(&report)])), 2);
}

#[test]
fn ingest_augment_and_import() {
    let dir = tempfile::tempdir().unwrap();
    let images = dir.path().join("stimuli");
    fs::create_dir(&images).unwrap();
    let theme = RenderTheme::with_cell_size(4);
    let board = BoardState::starting();
    fs::write(images.join("t1.png"), png_bytes(&render(&board, chess_saliency::chess::Color::White, &theme).unwrap())).unwrap();
    fs::write(images.join("t1.fen"), board.to_fen()).unwrap();
    let csv = dir.path().join("fix.csv");
    fs::write(&csv, "participant,task_id,x_px,y_px,duration_ms\np1,t1,10,10,250\np2,t1,20,5,180\n").unwrap();
    let et = dir.path().join("et");
    let r = run(&["ingest-et", "--csv", p(&csv), "--images", p(&images), "--sigma", "3", "--out", p(&et)]);
    assert_eq!(code(&r), 0, "{}", String::from_utf8_lossy(&r.stderr));
    assert!(stdout(&r).contains("{\"samples\":1}"));

    let aet = dir.path().join("aet");
    let r = run(&["augment", "--in", p(&et), "--out", p(&aet), "--sizes", "5", "--no-flip"]);
    assert_eq!(code(&r), 0, "{}", String::from_utf8_lossy(&r.stderr));
    assert!(stdout(&r).contains("1 inputs x 16 windows x 2 x 1 = 32 samples"), "{}", stdout(&r));
    assert_eq!(Manifest::read(&aet).unwrap().len(), 32);

    let maps = dir.path().join("maps");
    fs::create_dir(&maps).unwrap();
    fs::copy(images.join("t1.png"), maps.join("t1.png")).unwrap();
    let ext = dir.path().join("ext");
    let r = run(&["import-external", "--images", p(&images), "--maps", p(&maps), "--size", "16", "--out", p(&ext)]);
    assert_eq!(code(&r), 0, "{}", String::from_utf8_lossy(&r.stderr));
    let (_, samples) = load_dataset::<f32>(&ext).unwrap();
    assert_eq!(samples.len(), 1);
    assert_eq!(samples[0].size(), 16);
}
