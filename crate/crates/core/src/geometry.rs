//! Mapping between board cells and pixel rectangles, shared by board
//! images and saliency maps so both crop identically.

use crate::chess::{Color, Square};

/// A square block of board cells, `size` cells wide, whose lowest file and
/// rank are those of `origin`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
pub struct CellWindow {
    pub file: u8,
    pub rank: u8,
    pub size: u8,
}

impl CellWindow {
    pub fn new(origin: Square, size: u8) -> CellWindow {
        CellWindow {
            file: origin.file(),
            rank: origin.rank(),
            size,
        }
    }

    pub fn origin(&self) -> Option<Square> {
        Square::new(self.file, self.rank)
    }

    pub fn is_inside_board(&self) -> bool {
        self.size >= 1 && self.file as u32 + self.size as u32 <= 8 && self.rank as u32 + self.size as u32 <= 8
    }

    /// The window covering the same cells after a 180-degree board rotation.
    pub fn mirrored(&self) -> CellWindow {
        CellWindow {
            file: 8 - self.size - self.file,
            rank: 8 - self.size - self.rank,
            size: self.size,
        }
    }

    /// All stride-one window positions of the given size, rank-major.
    pub fn all_of_size(size: u8) -> impl Iterator<Item = CellWindow> {
        let n = if (1..=8).contains(&size) { 9 - size } else { 0 };
        (0..n).flat_map(move |rank| (0..n).map(move |file| CellWindow { file, rank, size }))
    }
}

impl std::fmt::Display for CellWindow {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self.origin() {
            Some(o) => write!(f, "{o}+{}", self.size),
            None => write!(f, "({},{})+{}", self.file, self.rank, self.size),
        }
    }
}

/// Axis-aligned pixel rectangle.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PixelRect {
    pub x: usize,
    pub y: usize,
    pub width: usize,
    pub height: usize,
}

/// Column and row (in cells, top-left origin) where `sq` is drawn.
pub fn cell_position(sq: Square, perspective: Color) -> (usize, usize) {
    match perspective {
        Color::White => (sq.file() as usize, 7 - sq.rank() as usize),
        Color::Black => (7 - sq.file() as usize, sq.rank() as usize),
    }
}

pub fn square_rect(sq: Square, perspective: Color, cell: usize) -> PixelRect {
    let (col, row) = cell_position(sq, perspective);
    PixelRect {
        x: col * cell,
        y: row * cell,
        width: cell,
        height: cell,
    }
}

/// Pixel rectangle covered by `window` on a board image with `cell`-pixel cells.
/// Returns `None` when the window leaves the board.
pub fn window_rect(window: CellWindow, perspective: Color, cell: usize) -> Option<PixelRect> {
    if !window.is_inside_board() {
        return None;
    }
    let s = window.size as usize;
    let (f0, r0) = (window.file as usize, window.rank as usize);
    let (col, row) = match perspective {
        Color::White => (f0, 8 - r0 - s),
        Color::Black => (8 - f0 - s, r0),
    };
    Some(PixelRect {
        x: col * cell,
        y: row * cell,
        width: s * cell,
        height: s * cell,
    })
}

/// Nearest-neighbour source index for output pixel `dst` when resampling a
/// span of `src_len` pixels to `dst_len`. Samples at pixel centres, so the
/// mapping commutes with reversing both spans.
pub fn nearest_source(dst: usize, src_len: usize, dst_len: usize) -> usize {
    ((2 * dst + 1) * src_len) / (2 * dst_len)
}

/// Output pixel that a source pixel `src` lands on (centre of its image span).
pub fn nearest_target(src: usize, src_len: usize, dst_len: usize) -> usize {
    (((2 * src + 1) * dst_len) / (2 * src_len)).min(dst_len - 1)
}
