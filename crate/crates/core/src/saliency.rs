//! Saliency maps: construction from fixations, averaging, normalisation,
//! geometric transforms and the SMAP binary format.

use std::io::{Read, Write};

use crate::chess::Color;
use crate::geometry::{nearest_source, window_rect, CellWindow};
use crate::Real;

#[derive(Debug, thiserror::Error)]
pub enum SaliencyError {
    #[error("no fixations given")]
    EmptyFixations,
    #[error("sigma must be positive, got {0}")]
    NonPositiveSigma(f64),
    #[error("no maps to average")]
    EmptyList,
    #[error("dimension mismatch: {0}x{1} vs {2}x{3}")]
    DimensionMismatch(usize, usize, usize, usize),
    #[error("map is constant")]
    ConstantMap,
    #[error("map has zero total mass")]
    ZeroMass,
    #[error("value {value} at index {index} is outside [0, 1]")]
    OutOfRange { index: usize, value: f64 },
    #[error("{0} values given for a {1}x{2} map")]
    WrongLength(usize, usize, usize),
    #[error("fixation ({0}, {1}) lies outside the {2}x{3} image")]
    FixationOutOfBounds(f64, f64, usize, usize),
    #[error("fixation duration must be positive, got {0}")]
    NonPositiveDuration(f64),
    #[error("window {0} leaves the board")]
    WindowOutOfBounds(CellWindow),
    #[error("map of {0}x{1} pixels is not a square board with whole cells")]
    NotABoard(usize, usize),
    #[error("threshold must be in (0, 1], got {0}")]
    BadThreshold(f64),
    #[error("no fixation points found")]
    NoFixationsFound,
    #[error("corrupt SMAP data: {0}")]
    CorruptSmap(String),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

/// A grid of fixation probabilities in `[0, 1]`, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct SaliencyMap<T> {
    width: usize,
    height: usize,
    values: Vec<T>,
}

impl<T: Real> SaliencyMap<T> {
    pub fn new(width: usize, height: usize, values: Vec<T>) -> Result<Self, SaliencyError> {
        if values.len() != width * height {
            return Err(SaliencyError::WrongLength(values.len(), width, height));
        }
        if let Some((index, v)) = values
            .iter()
            .enumerate()
            .find(|(_, v)| !(**v >= T::zero() && **v <= T::one()))
        {
            return Err(SaliencyError::OutOfRange {
                index,
                value: v.f64(),
            });
        }
        Ok(SaliencyMap {
            width,
            height,
            values,
        })
    }

    pub fn zeros(width: usize, height: usize) -> Self {
        SaliencyMap::constant(width, height, T::zero())
    }

    /// Panics unless `value` is in `[0, 1]`.
    pub fn constant(width: usize, height: usize, value: T) -> Self {
        assert!(value >= T::zero() && value <= T::one());
        SaliencyMap {
            width,
            height,
            values: vec![value; width * height],
        }
    }

    /// Build from a function of `(x, y)`; values are clamped into `[0, 1]`.
    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> T) -> Self {
        let mut values = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                values.push(clamp01(f(x, y)));
            }
        }
        SaliencyMap {
            width,
            height,
            values,
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }

    pub fn into_values(self) -> Vec<T> {
        self.values
    }

    pub fn get(&self, x: usize, y: usize) -> T {
        self.values[y * self.width + x]
    }

    pub fn set(&mut self, x: usize, y: usize, v: T) {
        self.values[y * self.width + x] = clamp01(v);
    }

    pub fn max_value(&self) -> T {
        self.values.iter().copied().fold(T::zero(), T::max)
    }

    pub fn min_value(&self) -> T {
        self.values.iter().copied().fold(T::one(), T::min)
    }

    pub fn is_constant(&self) -> bool {
        self.values.iter().all(|&v| v == self.values[0])
    }

    pub fn cast<U: Real>(&self) -> SaliencyMap<U> {
        SaliencyMap {
            width: self.width,
            height: self.height,
            values: self.values.iter().map(|v| clamp01(U::of(v.f64()))).collect(),
        }
    }

    pub fn same_dims<U>(&self, other: &SaliencyMap<U>) -> Result<(), SaliencyError> {
        if self.width != other.width || self.height != other.height {
            return Err(SaliencyError::DimensionMismatch(
                self.width,
                self.height,
                other.width,
                other.height,
            ));
        }
        Ok(())
    }

    /// Scale so the largest value becomes exactly 1.
    pub fn peak_rescaled(&self) -> Result<Self, SaliencyError> {
        let max = self.max_value();
        if max <= T::zero() {
            return Err(SaliencyError::ZeroMass);
        }
        Ok(SaliencyMap {
            width: self.width,
            height: self.height,
            values: self
                .values
                .iter()
                .map(|&v| if v == max { T::one() } else { clamp01(v / max) })
                .collect(),
        })
    }

    /// Value at `(x, y)` moves to `(W-1-x, H-1-y)`.
    pub fn rotate180(&self) -> Self {
        let mut values = self.values.clone();
        values.reverse();
        SaliencyMap {
            width: self.width,
            height: self.height,
            values,
        }
    }

    pub fn minmax_normalize(&self) -> Result<Self, SaliencyError> {
        let (min, max) = (self.min_value(), self.max_value());
        if self.is_constant() {
            return Err(SaliencyError::ConstantMap);
        }
        let span = max - min;
        Ok(SaliencyMap::from_fn(self.width, self.height, |x, y| {
            (self.get(x, y) - min) / span
        }))
    }

    /// Divide by the total so the values sum to 1.
    pub fn distribution_normalize(&self) -> Result<Self, SaliencyError> {
        let total: f64 = self.values.iter().map(|v| v.f64()).sum();
        if total <= 0.0 {
            return Err(SaliencyError::ZeroMass);
        }
        Ok(SaliencyMap {
            width: self.width,
            height: self.height,
            values: self.values.iter().map(|v| T::of(v.f64() / total)).collect(),
        })
    }

    /// Values shifted to mean 0 and scaled to population standard deviation 1.
    pub fn zscore_values(&self) -> Result<Vec<f64>, SaliencyError> {
        if self.is_constant() {
            return Err(SaliencyError::ConstantMap);
        }
        let n = self.values.len() as f64;
        let mean = self.values.iter().map(|v| v.f64()).sum::<f64>() / n;
        let var = self
            .values
            .iter()
            .map(|v| (v.f64() - mean).powi(2))
            .sum::<f64>()
            / n;
        let std = var.sqrt();
        Ok(self.values.iter().map(|v| (v.f64() - mean) / std).collect())
    }

    /// Cut out the cells of `window` and resample them back to the full map
    /// size with nearest-neighbour sampling.
    pub fn crop_cells(&self, window: CellWindow, perspective: Color) -> Result<Self, SaliencyError> {
        let cell = board_cell_size(self.width, self.height)?;
        let rect = window_rect(window, perspective, cell).ok_or(SaliencyError::WindowOutOfBounds(window))?;
        let (w, h) = (self.width, self.height);
        let cols: Vec<usize> = (0..w).map(|x| rect.x + nearest_source(x, rect.width, w)).collect();
        let mut values = Vec::with_capacity(w * h);
        for y in 0..h {
            let sy = rect.y + nearest_source(y, rect.height, h);
            let row = &self.values[sy * w..(sy + 1) * w];
            values.extend(cols.iter().map(|&sx| row[sx]));
        }
        Ok(SaliencyMap {
            width: w,
            height: h,
            values,
        })
    }

    /// Pointwise maximum, used to paint overlapping regions.
    pub fn paint_max(&mut self, x0: usize, y0: usize, w: usize, h: usize, value: T) {
        let value = clamp01(value);
        for y in y0..(y0 + h).min(self.height) {
            for x in x0..(x0 + w).min(self.width) {
                let v = &mut self.values[y * self.width + x];
                if value > *v {
                    *v = value;
                }
            }
        }
    }
}

fn clamp01<T: Real>(v: T) -> T {
    if v.is_nan() {
        T::zero()
    } else {
        v.max(T::zero()).min(T::one())
    }
}

pub(crate) fn board_cell_size(width: usize, height: usize) -> Result<usize, SaliencyError> {
    if width != height || width == 0 || width % 8 != 0 {
        return Err(SaliencyError::NotABoard(width, height));
    }
    Ok(width / 8)
}

/// One recorded gaze fixation.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct Fixation {
    pub x: f64,
    pub y: f64,
    pub duration_ms: f64,
    pub participant: String,
    pub task: String,
}

/// Discrete fixation locations used by NSS and the AUC metrics.
#[derive(Debug, Clone, Default, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct FixationSet {
    pub points: Vec<(usize, usize)>,
}

impl FixationSet {
    pub fn new(points: Vec<(usize, usize)>) -> Self {
        FixationSet { points }
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn check_bounds(&self, width: usize, height: usize) -> Result<(), SaliencyError> {
        match self.points.iter().find(|&&(x, y)| x >= width || y >= height) {
            Some(&(x, y)) => Err(SaliencyError::FixationOutOfBounds(x as f64, y as f64, width, height)),
            None => Ok(()),
        }
    }

    /// Row-major boolean mask of fixated pixels; repeated points count once.
    pub fn mask(&self, width: usize, height: usize) -> Vec<bool> {
        let mut mask = vec![false; width * height];
        for &(x, y) in &self.points {
            if x < width && y < height {
                mask[y * width + x] = true;
            }
        }
        mask
    }

    pub fn rotate180(&self, width: usize, height: usize) -> FixationSet {
        FixationSet {
            points: self
                .points
                .iter()
                .map(|&(x, y)| (width - 1 - x, height - 1 - y))
                .collect(),
        }
    }

    /// Points that fall inside `window`, mapped into the resampled crop.
    pub fn crop_cells(&self, window: CellWindow, perspective: Color, size: usize) -> FixationSet {
        use crate::geometry::nearest_target;
        let Some(rect) = window_rect(window, perspective, size / 8) else {
            return FixationSet::default();
        };
        let points = self
            .points
            .iter()
            .filter(|&&(x, y)| x >= rect.x && x < rect.x + rect.width && y >= rect.y && y < rect.y + rect.height)
            .map(|&(x, y)| {
                (
                    nearest_target(x - rect.x, rect.width, size),
                    nearest_target(y - rect.y, rect.height, size),
                )
            })
            .collect();
        FixationSet { points }
    }
}

/// Sum of duration-weighted isotropic Gaussians, one per fixation, rescaled
/// so the peak equals 1.
pub fn fixations_to_map<T: Real>(
    fixations: &[Fixation],
    width: usize,
    height: usize,
    sigma: f64,
) -> Result<SaliencyMap<T>, SaliencyError> {
    if fixations.is_empty() {
        return Err(SaliencyError::EmptyFixations);
    }
    if !(sigma > 0.0) {
        return Err(SaliencyError::NonPositiveSigma(sigma));
    }
    for f in fixations {
        if !(f.x >= 0.0 && f.y >= 0.0 && f.x <= (width - 1) as f64 && f.y <= (height - 1) as f64) {
            return Err(SaliencyError::FixationOutOfBounds(f.x, f.y, width, height));
        }
        if !(f.duration_ms > 0.0) {
            return Err(SaliencyError::NonPositiveDuration(f.duration_ms));
        }
    }
    // Sort so the floating point summation order does not depend on input order.
    let mut ordered: Vec<&Fixation> = fixations.iter().collect();
    ordered.sort_by(|a, b| {
        (a.x, a.y, a.duration_ms)
            .partial_cmp(&(b.x, b.y, b.duration_ms))
            .expect("finite fixation fields")
    });

    let inv = 1.0 / (2.0 * sigma * sigma);
    let mut acc = vec![0.0f64; width * height];
    let mut gx = vec![0.0f64; width];
    for f in ordered {
        for (x, g) in gx.iter_mut().enumerate() {
            *g = (-(x as f64 - f.x).powi(2) * inv).exp();
        }
        for y in 0..height {
            let wy = f.duration_ms * (-(y as f64 - f.y).powi(2) * inv).exp();
            if wy == 0.0 {
                continue;
            }
            let row = &mut acc[y * width..(y + 1) * width];
            for (a, g) in row.iter_mut().zip(&gx) {
                *a += wy * g;
            }
        }
    }
    let max = acc.iter().copied().fold(0.0, f64::max);
    if max <= 0.0 {
        return Err(SaliencyError::ZeroMass);
    }
    Ok(SaliencyMap {
        width,
        height,
        values: acc.iter().map(|&v| clamp01(T::of(v / max))).collect(),
    })
}

/// Pointwise mean of equally sized maps, rescaled so the peak equals 1.
pub fn average_maps<T: Real>(maps: &[SaliencyMap<T>]) -> Result<SaliencyMap<T>, SaliencyError> {
    let first = maps.first().ok_or(SaliencyError::EmptyList)?;
    for m in maps {
        first.same_dims(m)?;
    }
    let n = maps.len() as f64;
    let mut acc = vec![0.0f64; first.values.len()];
    for m in maps {
        for (a, v) in acc.iter_mut().zip(&m.values) {
            *a += v.f64();
        }
    }
    let mean = SaliencyMap {
        width: first.width,
        height: first.height,
        values: acc.iter().map(|&a| clamp01(T::of(a / n))).collect(),
    };
    mean.peak_rescaled()
}

/// Local maxima at or above `threshold`, kept greedily in descending value
/// order (ties broken by row-major position) while every kept pair is at
/// least `min_separation` pixels apart.
pub fn extract_fixation_points<T: Real>(
    map: &SaliencyMap<T>,
    threshold: f64,
    min_separation: f64,
) -> Result<FixationSet, SaliencyError> {
    if !(threshold > 0.0 && threshold <= 1.0) {
        return Err(SaliencyError::BadThreshold(threshold));
    }
    let (w, h) = (map.width, map.height);
    let mut candidates = Vec::new();
    for y in 0..h {
        for x in 0..w {
            let v = map.get(x, y);
            if v.f64() < threshold {
                continue;
            }
            let mut is_max = true;
            'nbr: for dy in -1i64..=1 {
                for dx in -1i64..=1 {
                    let (nx, ny) = (x as i64 + dx, y as i64 + dy);
                    if (dx, dy) == (0, 0) || nx < 0 || ny < 0 || nx >= w as i64 || ny >= h as i64 {
                        continue;
                    }
                    if map.get(nx as usize, ny as usize) > v {
                        is_max = false;
                        break 'nbr;
                    }
                }
            }
            if is_max {
                candidates.push((v, y * w + x));
            }
        }
    }
    candidates.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap().then(a.1.cmp(&b.1)));
    let min_sq = min_separation * min_separation;
    let mut kept: Vec<(usize, usize)> = Vec::new();
    for (_, idx) in candidates {
        let (x, y) = (idx % w, idx / w);
        let far = kept.iter().all(|&(kx, ky)| {
            let dx = kx as f64 - x as f64;
            let dy = ky as f64 - y as f64;
            dx * dx + dy * dy >= min_sq
        });
        if far {
            kept.push((x, y));
        }
    }
    if kept.is_empty() {
        return Err(SaliencyError::NoFixationsFound);
    }
    Ok(FixationSet::new(kept))
}

const SMAP_MAGIC: &[u8; 4] = b"SMAP";
const SMAP_VERSION: u16 = 1;

/// Write `map` as SMAP: magic, version u16, width u32, height u32, then
/// little-endian f32 values, row-major.
pub fn write_smap<T: Real, W: Write>(map: &SaliencyMap<T>, mut out: W) -> std::io::Result<()> {
    let mut buf = Vec::with_capacity(14 + 4 * map.values.len());
    buf.extend_from_slice(SMAP_MAGIC);
    buf.extend_from_slice(&SMAP_VERSION.to_le_bytes());
    buf.extend_from_slice(&(map.width as u32).to_le_bytes());
    buf.extend_from_slice(&(map.height as u32).to_le_bytes());
    for v in &map.values {
        buf.extend_from_slice(&v.to_f32_le());
    }
    out.write_all(&buf)
}

pub fn smap_bytes<T: Real>(map: &SaliencyMap<T>) -> Vec<u8> {
    let mut buf = Vec::new();
    write_smap(map, &mut buf).expect("writing to a Vec cannot fail");
    buf
}

pub fn read_smap<T: Real, R: Read>(mut input: R) -> Result<SaliencyMap<T>, SaliencyError> {
    let mut bytes = Vec::new();
    input.read_to_end(&mut bytes)?;
    parse_smap(&bytes)
}

pub fn parse_smap<T: Real>(bytes: &[u8]) -> Result<SaliencyMap<T>, SaliencyError> {
    let corrupt = |m: &str| SaliencyError::CorruptSmap(m.to_string());
    if bytes.len() < 14 {
        return Err(corrupt("truncated header"));
    }
    if &bytes[..4] != SMAP_MAGIC {
        return Err(corrupt("bad magic"));
    }
    let version = u16::from_le_bytes([bytes[4], bytes[5]]);
    if version != SMAP_VERSION {
        return Err(SaliencyError::CorruptSmap(format!("unsupported version {version}")));
    }
    let width = u32::from_le_bytes(bytes[6..10].try_into().unwrap()) as usize;
    let height = u32::from_le_bytes(bytes[10..14].try_into().unwrap()) as usize;
    let expected = width
        .checked_mul(height)
        .and_then(|n| n.checked_mul(4))
        .ok_or_else(|| corrupt("dimensions overflow"))?;
    let body = &bytes[14..];
    if body.len() != expected {
        return Err(SaliencyError::CorruptSmap(format!(
            "expected {expected} value bytes for {width}x{height}, found {}",
            body.len()
        )));
    }
    let values = body
        .chunks_exact(4)
        .map(|c| T::of(f32::from_le_bytes(c.try_into().unwrap()) as f64))
        .collect();
    SaliencyMap::new(width, height, values).map_err(|e| SaliencyError::CorruptSmap(e.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fix(x: f64, y: f64, d: f64) -> Fixation {
        Fixation {
            x,
            y,
            duration_ms: d,
            participant: "p".into(),
            task: "t".into(),
        }
    }

    fn map(w: usize, h: usize, v: &[f64]) -> SaliencyMap<f64> {
        SaliencyMap::new(w, h, v.to_vec()).unwrap()
    }

    #[test]
    fn single_fixation_peaks_at_centre() {
        let m: SaliencyMap<f64> = fixations_to_map(&[fix(32.0, 32.0, 200.0)], 65, 65, 4.0).unwrap();
        assert_eq!(m.get(32, 32), 1.0);
        assert_eq!(m.max_value(), 1.0);
        for (dx, dy) in [(5, 0), (3, 4), (0, 7)] {
            let a = m.get(32 + dx, 32 + dy);
            assert!((a - m.get(32 - dx, 32 - dy)).abs() < 1e-15);
            assert!((a - m.get(32 + dy, 32 - dx)).abs() < 1e-15);
        }
    }

    #[test]
    fn mirrored_fixations_give_mirrored_map() {
        let m: SaliencyMap<f64> =
            fixations_to_map(&[fix(10.0, 20.0, 150.0), fix(53.0, 20.0, 150.0)], 64, 48, 5.0).unwrap();
        for y in 0..48 {
            for x in 0..64 {
                assert!((m.get(x, y) - m.get(63 - x, y)).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn duration_weighting() {
        // Peaks 80 px apart with sigma 8: 10 sigma, so cross-talk is ~e^-50.
        let m: SaliencyMap<f64> =
            fixations_to_map(&[fix(10.0, 10.0, 300.0), fix(90.0, 10.0, 100.0)], 100, 20, 8.0).unwrap();
        assert_eq!(m.get(10, 10), 1.0);
        // Oracle: evaluate the Gaussian sum directly at B's centre.
        let g = |dx: f64| (-(dx * dx) / (2.0 * 64.0)).exp();
        let at_a = 300.0 + 100.0 * g(80.0);
        let at_b = 300.0 * g(80.0) + 100.0;
        assert!((m.get(90, 10) - at_b / at_a).abs() < 1e-12);
        assert!((m.get(90, 10) - 1.0 / 3.0).abs() < 1e-9);
    }

    #[test]
    fn fixation_errors() {
        assert!(matches!(
            fixations_to_map::<f64>(&[], 8, 8, 1.0),
            Err(SaliencyError::EmptyFixations)
        ));
        assert!(matches!(
            fixations_to_map::<f64>(&[fix(1.0, 1.0, 1.0)], 8, 8, 0.0),
            Err(SaliencyError::NonPositiveSigma(_))
        ));
        assert!(matches!(
            fixations_to_map::<f64>(&[fix(9.0, 1.0, 1.0)], 8, 8, 1.0),
            Err(SaliencyError::FixationOutOfBounds(..))
        ));
    }

    #[test]
    fn averaging() {
        let m = map(2, 2, &[0.0, 0.25, 0.5, 0.5]);
        assert_eq!(average_maps(&[m.clone()]).unwrap().values(), &[0.0, 0.5, 1.0, 1.0]);
        let c = map(2, 2, &[1.0, 0.75, 0.5, 0.5]);
        assert!(average_maps(&[m.clone(), c]).unwrap().values().iter().all(|&v| v == 1.0));
        let peaks: Vec<_> = (0..3)
            .map(|i| {
                let mut v = vec![0.0; 3];
                v[i] = 1.0;
                map(3, 1, &v)
            })
            .collect();
        assert_eq!(average_maps(&peaks).unwrap().values(), &[1.0, 1.0, 1.0]);
        assert!(matches!(average_maps::<f64>(&[]), Err(SaliencyError::EmptyList)));
        assert!(matches!(
            average_maps(&[m, map(1, 1, &[1.0])]),
            Err(SaliencyError::DimensionMismatch(..))
        ));
    }

    #[test]
    fn normalisations() {
        let m = map(3, 1, &[0.0, 0.5, 1.0]);
        assert_eq!(m.minmax_normalize().unwrap().values(), &[0.0, 0.5, 1.0]);
        let flat = map(2, 1, &[0.2, 0.2]);
        assert!(matches!(flat.minmax_normalize(), Err(SaliencyError::ConstantMap)));
        assert!(matches!(flat.zscore_values(), Err(SaliencyError::ConstantMap)));
        assert!(matches!(
            SaliencyMap::<f64>::zeros(2, 2).distribution_normalize(),
            Err(SaliencyError::ZeroMass)
        ));
        let d = map(2, 2, &[0.5, 0.5, 0.0, 1.0]).distribution_normalize().unwrap();
        assert!((d.values().iter().sum::<f64>() - 1.0).abs() < 1e-15);

        // Population std of {0,0,0,1} is sqrt(0.1875).
        let z = map(4, 1, &[0.0, 0.0, 0.0, 1.0]).zscore_values().unwrap();
        let s = 0.1875f64.sqrt();
        for (got, want) in z.iter().zip([-0.25 / s, -0.25 / s, -0.25 / s, 0.75 / s]) {
            assert!((got - want).abs() < 1e-6);
        }
        assert!((z[3] - 1.7320508).abs() < 1e-6);
        assert!((z[0] + 0.5773503).abs() < 1e-6);
    }

    #[test]
    fn rotation() {
        let mut m = SaliencyMap::<f64>::zeros(16, 16);
        m.set(0, 0, 1.0);
        let r = m.rotate180();
        assert_eq!(r.get(15, 15), 1.0);
        assert_eq!(r.rotate180(), m);
        let sym = SaliencyMap::from_fn(16, 16, |x, y| ((x * 3 + y) % 5) as f64 / 4.0);
        let sym2 = SaliencyMap::from_fn(16, 16, |x, y| sym.get(x, y).max(sym.get(15 - x, 15 - y)));
        assert_eq!(sym2.rotate180(), sym2);
    }

    #[test]
    fn crops() {
        let uniform = SaliencyMap::<f64>::constant(64, 64, 0.3);
        let w = CellWindow::new("b2".parse().unwrap(), 4);
        assert_eq!(uniform.crop_cells(w, Color::White).unwrap(), uniform);

        // Peak on cell c3 (white view: col 2, row 5; 8-pixel cells).
        let mut m = SaliencyMap::<f64>::zeros(64, 64);
        m.paint_max(16, 40, 8, 8, 1.0);
        let inside = m.crop_cells(w, Color::White).unwrap();
        // Window b2..e5 spans cols 1..5, rows 3..7; c3 is local cell (1, 2) of 4.
        assert_eq!(inside.get(16 + 8, 32 + 8), 1.0);
        let outside = m.crop_cells(CellWindow::new("e5".parse().unwrap(), 3), Color::White).unwrap();
        assert!(outside.max_value() < 1.0);
        assert!(matches!(
            m.crop_cells(CellWindow::new("g7".parse().unwrap(), 3), Color::White),
            Err(SaliencyError::WindowOutOfBounds(_))
        ));
    }

    #[test]
    fn crop_commutes_with_rotation() {
        let m = SaliencyMap::<f64>::from_fn(64, 64, |x, y| ((x * 7 + y * 13) % 17) as f64 / 16.0);
        for size in 2..=8 {
            for w in CellWindow::all_of_size(size) {
                for p in Color::ALL {
                    let a = m.rotate180().crop_cells(w, p).unwrap();
                    let b = m.crop_cells(w.mirrored(), p).unwrap().rotate180();
                    assert_eq!(a, b, "window {w} {p}");
                }
            }
        }
    }

    #[test]
    fn fixation_extraction() {
        let g: SaliencyMap<f64> = fixations_to_map(&[fix(20.0, 12.0, 1.0)], 40, 30, 3.0).unwrap();
        assert_eq!(extract_fixation_points(&g, 0.5, 8.0).unwrap().points, [(20, 12)]);
        let two: SaliencyMap<f64> =
            fixations_to_map(&[fix(5.0, 5.0, 1.0), fix(30.0, 20.0, 1.0)], 40, 30, 2.0).unwrap();
        assert_eq!(extract_fixation_points(&two, 0.5, 8.0).unwrap().len(), 2);
        assert!(matches!(
            extract_fixation_points(&SaliencyMap::<f64>::zeros(8, 8), 0.5, 1.0),
            Err(SaliencyError::NoFixationsFound)
        ));
    }

    #[test]
    fn smap_round_trip_and_corruption() {
        let m = SaliencyMap::<f32>::from_fn(5, 3, |x, y| (x * y) as f32 / 8.0);
        let bytes = smap_bytes(&m);
        assert_eq!(&bytes[..4], b"SMAP");
        assert_eq!(bytes.len(), 14 + 15 * 4);
        let back: SaliencyMap<f32> = parse_smap(&bytes).unwrap();
        assert_eq!(back, m);
        assert!(matches!(
            parse_smap::<f32>(&bytes[..bytes.len() - 1]),
            Err(SaliencyError::CorruptSmap(_))
        ));
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(matches!(parse_smap::<f32>(&bad), Err(SaliencyError::CorruptSmap(_))));
    }
}
