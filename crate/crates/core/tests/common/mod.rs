#![allow(dead_code)]

use chess_saliency::chess::{legal_moves, make_move, parse_pgn, BoardState, Color, Game};
use chess_saliency::render::{render, RenderTheme};
use chess_saliency::sample::{Sample, SampleMeta, Source};
use chess_saliency::saliency::SaliencyMap;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Position reached by up to `plies` uniformly random legal moves.
pub fn random_position(seed: u64, plies: usize) -> BoardState {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut board = BoardState::starting();
    for _ in 0..plies {
        let moves = legal_moves(&board);
        let Some(m) = moves.choose(&mut rng) else { break };
        board = make_move(&board, m);
    }
    board
}

pub fn opening_game() -> Game {
    parse_pgn("1. e4 e5 2. Nf3 Nc6 3. Bb5 a6 4. O-O Nf6 *").unwrap().remove(0)
}

/// Full-board sample at `cell` pixels per square with a one-cell peak map.
pub fn board_sample(board: &BoardState, cell: usize, task: &str) -> Sample<f32> {
    let size = cell * 8;
    let image = render(board, Color::White, &RenderTheme::with_cell_size(cell)).unwrap();
    let mut map = SaliencyMap::zeros(size, size);
    map.paint_max(3 * cell, 4 * cell, cell, cell, 1.0);
    let mut meta = SampleMeta::new(Source::Et, task, 0, Color::White);
    meta.task_id = Some(task.to_string());
    meta.fen = Some(board.to_fen());
    Sample::new(image, map, meta).unwrap()
}
