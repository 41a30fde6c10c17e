//! The games-derived dataset: rule-based saliency maps for every ply of
//! replayed games.

use std::io::BufRead;

use rayon::prelude::*;

use crate::chess::{move_path, parse_record, BoardState, Color, Game, MoveRecord, RecordSplitter, Square};
use crate::geometry::square_rect;
use crate::render::{render, RenderError, RenderTheme};
use crate::sample::{Sample, SampleMeta, Source};
use crate::saliency::SaliencyMap;
use crate::store::{encode_sample, DatasetWriter, StoreError};
use crate::Real;

#[derive(Debug, thiserror::Error)]
pub enum TopdownError {
    #[error("invalid generation options: {0}")]
    InvalidOptions(String),
    #[error(transparent)]
    Render(#[from] RenderError),
    #[error(transparent)]
    Store(#[from] StoreError),
    #[error("i/o failure reading games: {0}")]
    IoFailure(#[from] std::io::Error),
}

/// Saliency levels for the three move hypotheses and sample layout options.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct GenOptions {
    pub saliency_src_dst: f64,
    pub saliency_path: f64,
    pub saliency_check_king: f64,
    pub cell_fill: f64,
    pub both_perspectives: bool,
}

impl Default for GenOptions {
    fn default() -> Self {
        GenOptions {
            saliency_src_dst: 1.0,
            saliency_path: 0.5,
            saliency_check_king: 1.0,
            cell_fill: 1.0,
            both_perspectives: true,
        }
    }
}

impl GenOptions {
    pub fn validate(&self) -> Result<(), TopdownError> {
        let levels = [
            ("src/dst", self.saliency_src_dst),
            ("path", self.saliency_path),
            ("check king", self.saliency_check_king),
            ("cell fill", self.cell_fill),
        ];
        for (name, v) in levels {
            if !(v > 0.0 && v <= 1.0) {
                return Err(TopdownError::InvalidOptions(format!("{name} level {v} is outside (0, 1]")));
            }
        }
        if self.saliency_path > self.saliency_src_dst {
            return Err(TopdownError::InvalidOptions(format!(
                "path level {} exceeds src/dst level {}",
                self.saliency_path, self.saliency_src_dst
            )));
        }
        Ok(())
    }
}

/// The map for `mv` played in `board_before`, drawn for `perspective` on a
/// `size`-pixel board. Overlapping cells keep the larger level.
pub fn synth_map<T: Real>(
    board_before: &BoardState,
    mv: &MoveRecord,
    options: &GenOptions,
    size: usize,
    perspective: Color,
) -> SaliencyMap<T> {
    let cell = size / 8;
    let side = ((cell as f64 * options.cell_fill).round() as usize).clamp(1, cell);
    let inset = (cell - side) / 2;
    let mut map = SaliencyMap::zeros(size, size);
    let mut paint = |sq: Square, level: f64| {
        let r = square_rect(sq, perspective, cell);
        map.paint_max(r.x + inset, r.y + inset, side, side, T::of(level));
    };
    for sq in move_path(mv) {
        paint(sq, options.saliency_path);
    }
    paint(mv.from, options.saliency_src_dst);
    paint(mv.to, options.saliency_src_dst);
    if mv.gives_check {
        if let Some(k) = board_before.king_square(mv.piece.color.opposite()) {
            paint(k, options.saliency_check_king);
        }
    }
    map
}

/// Two samples per ply when both perspectives are requested (mover first),
/// one otherwise.
pub fn gen_game_samples<T: Real>(
    game: &Game,
    game_id: &str,
    options: &GenOptions,
    theme: &RenderTheme,
) -> Result<Vec<Sample<T>>, TopdownError> {
    options.validate()?;
    let size = theme.board_size();
    let mut out = Vec::with_capacity(game.moves.len() * 2);
    for (ply, (before, mv)) in game.plies().enumerate() {
        let mover = mv.piece.color;
        let base: SaliencyMap<T> = synth_map(&before, mv, options, size, Color::White);
        let mut views = vec![mover];
        if options.both_perspectives {
            views.push(mover.opposite());
        }
        for view in views {
            let map = match view {
                Color::White => base.clone(),
                Color::Black => base.rotate180(),
            };
            let mut meta = SampleMeta::new(Source::Gd, game_id, ply + 1, view);
            meta.fen = Some(before.to_fen());
            let image = render(&before, view, theme)?;
            out.push(Sample::new(image, map, meta).expect("render and map share the board size"));
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, serde::Serialize)]
pub struct CorpusSummary {
    pub games: usize,
    pub samples: usize,
    pub skipped: usize,
}

/// Games are parsed and rendered this many at a time.
const CHUNK: usize = 16;

/// Stream games from `pgn`, write their samples into `writer` in input
/// order and skip games that fail to parse.
pub fn gen_corpus<R: BufRead>(
    pgn: R,
    options: &GenOptions,
    theme: &RenderTheme,
    writer: &mut DatasetWriter,
    limit_games: Option<usize>,
) -> Result<CorpusSummary, TopdownError> {
    options.validate()?;
    theme.validate()?;
    let mut summary = CorpusSummary::default();
    let mut records = RecordSplitter::new(pgn).enumerate();
    let limit = limit_games.unwrap_or(usize::MAX);
    let mut seen = 0usize;
    loop {
        let mut chunk = Vec::with_capacity(CHUNK);
        while chunk.len() < CHUNK && seen < limit {
            match records.next() {
                Some((i, rec)) => {
                    chunk.push((i, rec?));
                    seen += 1;
                }
                None => break,
            }
        }
        if chunk.is_empty() {
            break;
        }
        let encoded: Vec<_> = chunk
            .par_iter()
            .map(|(i, rec)| {
                let game = match parse_record(rec, *i) {
                    Ok(g) => g,
                    Err(e) => {
                        log::warn!("skipping game {}: {e}", i + 1);
                        return Ok(None);
                    }
                };
                let samples = gen_game_samples::<f32>(&game, &format!("{:05}", i + 1), options, theme)?;
                Ok(Some(samples.iter().map(encode_sample).collect::<Vec<_>>()))
            })
            .collect::<Result<_, TopdownError>>()?;
        for game in encoded {
            match game {
                None => summary.skipped += 1,
                Some(samples) => {
                    summary.games += 1;
                    summary.samples += samples.len();
                    for s in samples {
                        writer.add_encoded(s)?;
                    }
                }
            }
        }
    }
    Ok(summary)
}
