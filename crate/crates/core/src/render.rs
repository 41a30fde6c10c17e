//! Flat 2-D board rasterisation, cell-window crops and PNG I/O.

use std::io::{Read, Write};

use crate::chess::{BoardState, Color, Piece, PieceKind, Square};
use crate::geometry::{cell_position, nearest_source, window_rect, CellWindow};
use crate::saliency::SaliencyMap;
use crate::Real;

#[derive(Debug, thiserror::Error)]
pub enum RenderError {
    #[error("unknown glyph set `{0}`")]
    UnknownGlyphSet(String),
    #[error("invalid theme: {0}")]
    InvalidTheme(String),
    #[error("window {0} leaves the board")]
    WindowOutOfBounds(CellWindow),
    #[error("image of {0}x{1} pixels is not a square board with whole cells")]
    NotABoard(usize, usize),
    #[error("{0} bytes given for a {1}x{2} RGB image")]
    WrongLength(usize, usize, usize),
    #[error("png error: {0}")]
    Png(String),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Rgb = [u8; 3];

/// 8-bit RGB image, row-major, always square with a side divisible by 8.
#[derive(Clone, PartialEq, Eq)]
pub struct Image {
    width: usize,
    height: usize,
    data: Vec<u8>,
}

impl std::fmt::Debug for Image {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "Image({}x{})", self.width, self.height)
    }
}

impl Image {
    pub fn new(width: usize, height: usize, data: Vec<u8>) -> Result<Image, RenderError> {
        if width != height || width == 0 || width % 8 != 0 {
            return Err(RenderError::NotABoard(width, height));
        }
        if data.len() != width * height * 3 {
            return Err(RenderError::WrongLength(data.len(), width, height));
        }
        Ok(Image { width, height, data })
    }

    pub fn filled(size: usize, color: Rgb) -> Result<Image, RenderError> {
        Image::new(size, size, color.repeat(size * size))
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn data(&self) -> &[u8] {
        &self.data
    }

    pub fn cell_size(&self) -> usize {
        self.width / 8
    }

    pub fn pixel(&self, x: usize, y: usize) -> Rgb {
        let i = (y * self.width + x) * 3;
        [self.data[i], self.data[i + 1], self.data[i + 2]]
    }

    pub fn set_pixel(&mut self, x: usize, y: usize, c: Rgb) {
        let i = (y * self.width + x) * 3;
        self.data[i..i + 3].copy_from_slice(&c);
    }

    /// Pixel-exact 180-degree rotation.
    pub fn rotate180(&self) -> Image {
        let mut data = Vec::with_capacity(self.data.len());
        for px in self.data.chunks_exact(3).rev() {
            data.extend_from_slice(px);
        }
        Image {
            width: self.width,
            height: self.height,
            data,
        }
    }

    /// Channel values scaled to `[0, 1]`, channel-major (`3 x H x W`).
    pub fn to_planar<T: Real>(&self) -> Vec<T> {
        let n = self.width * self.height;
        let mut out = vec![T::zero(); 3 * n];
        let scale = T::of(1.0 / 255.0);
        for (i, px) in self.data.chunks_exact(3).enumerate() {
            for c in 0..3 {
                out[c * n + i] = T::of(px[c] as f64) * scale;
            }
        }
        out
    }
}

/// Colours and glyphs used to draw a board.
#[derive(Debug, Clone, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct RenderTheme {
    pub light: Rgb,
    pub dark: Rgb,
    pub glyph_set: String,
    pub cell_size: usize,
}

pub const DEFAULT_GLYPH_SET: &str = "default";

impl Default for RenderTheme {
    fn default() -> Self {
        RenderTheme {
            light: [240, 217, 181],
            dark: [181, 136, 99],
            glyph_set: DEFAULT_GLYPH_SET.to_string(),
            cell_size: 32,
        }
    }
}

impl RenderTheme {
    pub fn with_cell_size(cell_size: usize) -> Self {
        RenderTheme {
            cell_size,
            ..RenderTheme::default()
        }
    }

    pub fn board_size(&self) -> usize {
        8 * self.cell_size
    }

    pub fn validate(&self) -> Result<(), RenderError> {
        if self.light == self.dark {
            return Err(RenderError::InvalidTheme("light and dark cells share a colour".into()));
        }
        if self.cell_size < 4 {
            return Err(RenderError::InvalidTheme(format!(
                "cell size {} is below the 4 pixel minimum",
                self.cell_size
            )));
        }
        if self.glyph_set != DEFAULT_GLYPH_SET {
            return Err(RenderError::UnknownGlyphSet(self.glyph_set.clone()));
        }
        Ok(())
    }
}

mod sprites {
    use super::Rgb;
    use crate::chess::{Color, PieceKind};

    pub const SIZE: usize = 32;

    const MASKS: [&str; 6] = [
        include_str!("../assets/sprites/pawn.txt"),
        include_str!("../assets/sprites/knight.txt"),
        include_str!("../assets/sprites/bishop.txt"),
        include_str!("../assets/sprites/rook.txt"),
        include_str!("../assets/sprites/queen.txt"),
        include_str!("../assets/sprites/king.txt"),
    ];

    fn mask(kind: PieceKind) -> &'static str {
        MASKS[match kind {
            PieceKind::Pawn => 0,
            PieceKind::Knight => 1,
            PieceKind::Bishop => 2,
            PieceKind::Rook => 3,
            PieceKind::Queen => 4,
            PieceKind::King => 5,
        }]
    }

    /// RGBA sprite: `#` outline, `o` body, anything else transparent.
    pub fn rgba(kind: PieceKind, color: Color) -> Vec<[u8; 4]> {
        let (body, outline): (Rgb, Rgb) = match color {
            Color::White => ([250, 250, 245], [24, 24, 24]),
            Color::Black => ([30, 30, 34], [110, 110, 110]),
        };
        let rows: Vec<&[u8]> = mask(kind).lines().map(str::as_bytes).collect();
        debug_assert_eq!(rows.len(), SIZE);
        let mut out = Vec::with_capacity(SIZE * SIZE);
        for row in rows {
            debug_assert_eq!(row.len(), SIZE);
            for &c in row {
                out.push(match c {
                    b'#' => [outline[0], outline[1], outline[2], 255],
                    b'o' => [body[0], body[1], body[2], 255],
                    _ => [0, 0, 0, 0],
                });
            }
        }
        out
    }
}

/// One 32x32 RGBA sprite per piece, indexed by colour then kind.
struct GlyphSet {
    sprites: Vec<Vec<[u8; 4]>>,
}

impl GlyphSet {
    fn load(name: &str) -> Result<GlyphSet, RenderError> {
        if name != DEFAULT_GLYPH_SET {
            return Err(RenderError::UnknownGlyphSet(name.to_string()));
        }
        let sprites = Color::ALL
            .iter()
            .flat_map(|&c| PieceKind::ALL.iter().map(move |&k| sprites::rgba(k, c)))
            .collect();
        Ok(GlyphSet { sprites })
    }

    fn sprite(&self, piece: Piece) -> &[[u8; 4]] {
        &self.sprites[piece.color.index() * 6 + piece.kind.index()]
    }
}

/// Draw `board` as seen by `perspective`; black puts a1 in the top-right
/// corner. Glyphs stay upright in both views.
pub fn render(board: &BoardState, perspective: Color, theme: &RenderTheme) -> Result<Image, RenderError> {
    theme.validate()?;
    let glyphs = GlyphSet::load(&theme.glyph_set)?;
    let cell = theme.cell_size;
    let size = 8 * cell;
    let mut img = Image {
        width: size,
        height: size,
        data: vec![0; size * size * 3],
    };
    let sample: Vec<usize> = (0..cell).map(|i| nearest_source(i, sprites::SIZE, cell)).collect();
    for sq in Square::all() {
        let (col, row) = cell_position(sq, perspective);
        let bg = if sq.is_light() { theme.light } else { theme.dark };
        let sprite = board.get(sq).map(|p| glyphs.sprite(p));
        for dy in 0..cell {
            for dx in 0..cell {
                let mut px = bg;
                if let Some(s) = sprite {
                    let rgba = s[sample[dy] * sprites::SIZE + sample[dx]];
                    if rgba[3] != 0 {
                        px = [rgba[0], rgba[1], rgba[2]];
                    }
                }
                img.set_pixel(col * cell + dx, row * cell + dy, px);
            }
        }
    }
    Ok(img)
}

/// Cut out the cells of `window` and resample them to the full image size
/// with nearest-neighbour sampling.
pub fn crop_cells_image(image: &Image, window: CellWindow, perspective: Color) -> Result<Image, RenderError> {
    let rect =
        window_rect(window, perspective, image.cell_size()).ok_or(RenderError::WindowOutOfBounds(window))?;
    let (w, h) = (image.width, image.height);
    let cols: Vec<usize> = (0..w).map(|x| rect.x + nearest_source(x, rect.width, w)).collect();
    let mut data = Vec::with_capacity(image.data.len());
    for y in 0..h {
        let sy = rect.y + nearest_source(y, rect.height, h);
        for &sx in &cols {
            let i = (sy * w + sx) * 3;
            data.extend_from_slice(&image.data[i..i + 3]);
        }
    }
    Ok(Image { width: w, height: h, data })
}

/// Blend a saliency map over an image as a red heat layer.
pub fn overlay<T: Real>(image: &Image, map: &SaliencyMap<T>) -> Result<Image, RenderError> {
    if map.width() != image.width || map.height() != image.height {
        return Err(RenderError::NotABoard(map.width(), map.height()));
    }
    let mut out = image.clone();
    for (px, v) in out.data.chunks_exact_mut(3).zip(map.values()) {
        let a = 0.75 * v.f64();
        let heat = [255.0, 32.0, 0.0];
        for c in 0..3 {
            px[c] = ((1.0 - a) * px[c] as f64 + a * heat[c]).round() as u8;
        }
    }
    Ok(out)
}

fn png_err(e: impl std::fmt::Display) -> RenderError {
    RenderError::Png(e.to_string())
}

fn encode_png<W: Write>(out: W, width: usize, height: usize, color: png::ColorType, data: &[u8]) -> Result<(), RenderError> {
    let mut enc = png::Encoder::new(out, width as u32, height as u32);
    enc.set_color(color);
    enc.set_depth(png::BitDepth::Eight);
    let mut writer = enc.write_header().map_err(png_err)?;
    writer.write_image_data(data).map_err(png_err)?;
    writer.finish().map_err(png_err)
}

/// 8-bit RGB, non-interlaced PNG.
pub fn write_png<W: Write>(image: &Image, out: W) -> Result<(), RenderError> {
    encode_png(out, image.width, image.height, png::ColorType::Rgb, &image.data)
}

pub fn png_bytes(image: &Image) -> Vec<u8> {
    let mut buf = Vec::new();
    write_png(image, &mut buf).expect("encoding to memory cannot fail");
    buf
}

/// Decode an 8-bit PNG (gray, gray-alpha, RGB or RGBA) of any size into
/// RGB bytes; alpha is dropped.
pub fn decode_png_rgb<R: Read>(input: R) -> Result<(usize, usize, Vec<u8>), RenderError> {
    let mut dec = png::Decoder::new(input);
    dec.set_transformations(png::Transformations::EXPAND | png::Transformations::STRIP_16);
    let mut reader = dec.read_info().map_err(png_err)?;
    let mut buf = vec![0; reader.output_buffer_size()];
    let info = reader.next_frame(&mut buf).map_err(png_err)?;
    let buf = &buf[..info.buffer_size()];
    let data: Vec<u8> = match info.color_type {
        png::ColorType::Rgb => buf.to_vec(),
        png::ColorType::Rgba => buf.chunks_exact(4).flat_map(|p| [p[0], p[1], p[2]]).collect(),
        png::ColorType::Grayscale => buf.iter().flat_map(|&g| [g, g, g]).collect(),
        png::ColorType::GrayscaleAlpha => buf.chunks_exact(2).flat_map(|p| [p[0], p[0], p[0]]).collect(),
        png::ColorType::Indexed => return Err(RenderError::Png("unexpanded palette image".into())),
    };
    Ok((info.width as usize, info.height as usize, data))
}

/// Decode a board image; it must be square with a side divisible by 8.
pub fn read_png<R: Read>(input: R) -> Result<Image, RenderError> {
    let (w, h, data) = decode_png_rgb(input)?;
    Image::new(w, h, data)
}

/// 8-bit grayscale rendering of a map: 0 is black, 1 is white.
pub fn write_map_png<T: Real, W: Write>(map: &SaliencyMap<T>, out: W) -> Result<(), RenderError> {
    let gray: Vec<u8> = map
        .values()
        .iter()
        .map(|v| (v.f64() * 255.0).round().clamp(0.0, 255.0) as u8)
        .collect();
    encode_png(out, map.width(), map.height(), png::ColorType::Grayscale, &gray)
}
