//! The training example shared by every dataset: a board image, its
//! saliency map and the metadata that says where both came from.

use std::fmt;

use crate::chess::{BoardState, Color};
use crate::geometry::CellWindow;
use crate::render::Image;
use crate::saliency::{FixationSet, SaliencyMap};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, serde::Serialize, serde::Deserialize)]
pub enum Source {
    #[serde(rename = "ET")]
    Et,
    #[serde(rename = "AET")]
    Aet,
    #[serde(rename = "GD")]
    Gd,
    #[serde(rename = "EXTERNAL")]
    External,
}

impl Source {
    pub fn name(self) -> &'static str {
        match self {
            Source::Et => "ET",
            Source::Aet => "AET",
            Source::Gd => "GD",
            Source::External => "EXTERNAL",
        }
    }
}

impl fmt::Display for Source {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Source {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_uppercase().as_str() {
            "ET" => Ok(Source::Et),
            "AET" => Ok(Source::Aet),
            "GD" => Ok(Source::Gd),
            "EXTERNAL" => Ok(Source::External),
            _ => Err(format!("unknown sample source `{s}`")),
        }
    }
}

/// One step of the augmentation chain applied to a sample.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum AugmentTag {
    Inverted,
    Flipped,
    Window(CellWindow),
}

impl fmt::Display for AugmentTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            AugmentTag::Inverted => f.write_str("invert"),
            AugmentTag::Flipped => f.write_str("flip"),
            AugmentTag::Window(w) => write!(f, "window:{}{}x{}", (b'a' + w.file) as char, w.rank + 1, w.size),
        }
    }
}

impl std::str::FromStr for AugmentTag {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "invert" => Ok(AugmentTag::Inverted),
            "flip" => Ok(AugmentTag::Flipped),
            _ => {
                let bad = || format!("unknown augmentation tag `{s}`");
                let rest = s.strip_prefix("window:").ok_or_else(bad)?;
                let (origin, size) = rest.split_once('x').ok_or_else(bad)?;
                let origin = origin.parse().map_err(|_| bad())?;
                let size: u8 = size.parse().map_err(|_| bad())?;
                let w = CellWindow::new(origin, size);
                if !w.is_inside_board() {
                    return Err(bad());
                }
                Ok(AugmentTag::Window(w))
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct SampleMeta {
    pub source: Source,
    pub game_id: String,
    pub ply: usize,
    pub perspective: Color,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub task_id: Option<String>,
    #[serde(default)]
    pub augmentation_tags: Vec<String>,
    /// Position shown in the image, when the sample depicts a board.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fen: Option<String>,
}

impl SampleMeta {
    pub fn new(source: Source, game_id: impl Into<String>, ply: usize, perspective: Color) -> Self {
        SampleMeta {
            source,
            game_id: game_id.into(),
            ply,
            perspective,
            task_id: None,
            augmentation_tags: Vec::new(),
            fen: None,
        }
    }

    pub fn tags(&self) -> Result<Vec<AugmentTag>, String> {
        self.augmentation_tags.iter().map(|t| t.parse()).collect()
    }

    /// Grouping key for task-level splits: the task id, else the game id.
    pub fn split_key(&self) -> &str {
        self.task_id.as_deref().unwrap_or(&self.game_id)
    }

    pub fn board(&self) -> Option<Result<BoardState, crate::chess::ChessError>> {
        self.fen.as_deref().map(BoardState::from_fen)
    }

    /// Identifier derived from the metadata alone; distinct samples of one
    /// generation run get distinct ids.
    pub fn default_id(&self) -> String {
        let mut id = match self.source {
            Source::Gd => format!("gd-{}-p{:04}-{}", sanitize(&self.game_id), self.ply, &self.perspective.name()[..1]),
            Source::Et | Source::Aet => format!("{}-{}", self.source.name().to_lowercase(), sanitize(self.split_key())),
            Source::External => format!("ext-{}", sanitize(&self.game_id)),
        };
        for tag in &self.augmentation_tags {
            id.push('-');
            id.push_str(&sanitize(tag));
        }
        id
    }
}

fn sanitize(s: &str) -> String {
    s.chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '_' || c == '.' { c } else { '_' })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct Sample<T> {
    pub image: Image,
    pub map: SaliencyMap<T>,
    pub meta: SampleMeta,
    pub fixations: Option<FixationSet>,
}

impl<T: crate::Real> Sample<T> {
    pub fn new(image: Image, map: SaliencyMap<T>, meta: SampleMeta) -> Result<Self, crate::saliency::SaliencyError> {
        if image.width() != map.width() || image.height() != map.height() {
            return Err(crate::saliency::SaliencyError::DimensionMismatch(
                image.width(),
                image.height(),
                map.width(),
                map.height(),
            ));
        }
        Ok(Sample {
            image,
            map,
            meta,
            fixations: None,
        })
    }

    pub fn with_fixations(mut self, fixations: FixationSet) -> Self {
        self.fixations = Some(fixations);
        self
    }

    pub fn size(&self) -> usize {
        self.image.width()
    }
}
