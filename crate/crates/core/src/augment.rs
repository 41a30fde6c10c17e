//! Expansion of full-board samples by piece-colour inversion, perspective
//! flip and sliding cell windows.

use crate::chess::BoardState;
use crate::geometry::CellWindow;
use crate::render::{crop_cells_image, render, RenderError, RenderTheme};
use crate::sample::{AugmentTag, Sample, Source};
use crate::saliency::SaliencyError;
use crate::Real;

#[derive(Debug, thiserror::Error)]
pub enum AugmentError {
    #[error("sample {0} carries no board position")]
    MissingBoardState(usize),
    #[error("sample {index}: {reason}")]
    BadBoardState { index: usize, reason: String },
    #[error("window size {0} is outside 2..=8")]
    BadWindowSize(u8),
    #[error(transparent)]
    Render(#[from] RenderError),
    #[error(transparent)]
    Saliency(#[from] SaliencyError),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AugmentOptions {
    pub sizes: Vec<u8>,
    pub with_inversion: bool,
    pub with_flip: bool,
}

impl Default for AugmentOptions {
    fn default() -> Self {
        AugmentOptions {
            sizes: vec![3, 4, 5],
            with_inversion: true,
            with_flip: true,
        }
    }
}

impl AugmentOptions {
    /// Number of windows per variant; a run without sizes keeps the full board.
    pub fn window_count(&self) -> usize {
        if self.sizes.is_empty() {
            1
        } else {
            self.sizes.iter().map(|&s| window_census(s)).sum()
        }
    }

    /// Output samples produced per input sample.
    pub fn multiplier(&self) -> usize {
        self.window_count() * (1 + usize::from(self.with_inversion)) * (1 + usize::from(self.with_flip))
    }
}

/// Stride-one positions of a `size`-cell window on the board.
pub fn window_census(size: u8) -> usize {
    CellWindow::all_of_size(size).count()
}

fn theme_for<T>(sample: &Sample<T>) -> RenderTheme {
    RenderTheme::with_cell_size(sample.image.cell_size())
}

/// One sample per window position per size, cropped from `sample`.
pub fn sliding_windows<T: Real>(sample: &Sample<T>, sizes: &[u8]) -> Result<Vec<Sample<T>>, AugmentError> {
    if let Some(&bad) = sizes.iter().find(|s| !(2..=8).contains(*s)) {
        return Err(AugmentError::BadWindowSize(bad));
    }
    let persp = sample.meta.perspective;
    let size = sample.size();
    let mut out = Vec::new();
    for &s in sizes {
        for w in CellWindow::all_of_size(s) {
            let mut meta = sample.meta.clone();
            meta.augmentation_tags.push(AugmentTag::Window(w).to_string());
            out.push(Sample {
                image: crop_cells_image(&sample.image, w, persp)?,
                map: sample.map.crop_cells(w, persp)?,
                meta,
                fixations: sample.fixations.as_ref().map(|f| f.crop_cells(w, persp, size)),
            });
        }
    }
    Ok(out)
}

/// Re-render the sample with every piece's colour swapped; the map is kept.
pub fn color_inverted<T: Real>(sample: &Sample<T>, board: &BoardState) -> Result<(Sample<T>, BoardState), AugmentError> {
    let swapped = board.swap_colors();
    let mut meta = sample.meta.clone();
    meta.fen = Some(swapped.to_fen());
    meta.augmentation_tags.push(AugmentTag::Inverted.to_string());
    let image = render(&swapped, meta.perspective, &theme_for(sample))?;
    let out = Sample {
        image,
        map: sample.map.clone(),
        meta,
        fixations: sample.fixations.clone(),
    };
    Ok((out, swapped))
}

/// Re-render from the other side of the board and rotate the map to match.
pub fn perspective_flipped<T: Real>(sample: &Sample<T>, board: &BoardState) -> Result<Sample<T>, AugmentError> {
    let mut meta = sample.meta.clone();
    meta.perspective = meta.perspective.opposite();
    meta.augmentation_tags.push(AugmentTag::Flipped.to_string());
    let image = render(board, meta.perspective, &theme_for(sample))?;
    let (w, h) = (sample.map.width(), sample.map.height());
    Ok(Sample {
        image,
        map: sample.map.rotate180(),
        meta,
        fixations: sample.fixations.as_ref().map(|f| f.rotate180(w, h)),
    })
}

/// Expand every sample into inversion x flip x window variants, in that
/// nesting order. Output samples are marked as augmented.
pub fn augment_all<T: Real>(samples: &[Sample<T>], options: &AugmentOptions) -> Result<Vec<Sample<T>>, AugmentError> {
    let mut out = Vec::with_capacity(samples.len() * options.multiplier());
    for (index, sample) in samples.iter().enumerate() {
        let board = match sample.meta.board() {
            None => return Err(AugmentError::MissingBoardState(index)),
            Some(b) => b.map_err(|e| AugmentError::BadBoardState {
                index,
                reason: e.to_string(),
            })?,
        };
        let mut base = sample.clone();
        base.meta.source = Source::Aet;
        let mut variants = vec![(base.clone(), board.clone())];
        if options.with_inversion {
            variants.push(color_inverted(&base, &board)?);
        }
        let mut oriented = Vec::with_capacity(4);
        for (s, b) in variants {
            if options.with_flip {
                let flipped = perspective_flipped(&s, &b)?;
                oriented.push(s);
                oriented.push(flipped);
            } else {
                oriented.push(s);
            }
        }
        for s in oriented {
            if options.sizes.is_empty() {
                out.push(s);
            } else {
                out.extend(sliding_windows(&s, &options.sizes)?);
            }
        }
    }
    Ok(out)
}
