//! Encoder with three skip taps, one shared upsampling decoder, a shared
//! readout and a fusion convolution.

use std::hash::{Hash, Hasher};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use sha2::{Digest, Sha256};

use super::layers::*;
use super::NnError;
use crate::chess::{BoardState, Color};
use crate::render::{render, Image, RenderTheme};
use crate::saliency::SaliencyMap;
use crate::Real;

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct BlockSpec {
    pub conv_count: usize,
    pub channels: usize,
}

#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct ModelConfig {
    pub input_size: usize,
    pub input_channels: usize,
    pub encoder_blocks: Vec<BlockSpec>,
    /// One-based block indices whose pooled outputs feed the decoder.
    pub tap_blocks: [usize; 3],
    pub decoder_width: usize,
    pub fusion_kernel: usize,
    pub aux_loss_weight: f64,
    pub seed: u64,
}

fn blocks(spec: &[(usize, usize)]) -> Vec<BlockSpec> {
    spec.iter()
        .map(|&(conv_count, channels)| BlockSpec { conv_count, channels })
        .collect()
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            input_size: 256,
            input_channels: 3,
            encoder_blocks: blocks(&[(2, 16), (2, 32), (3, 64), (3, 64)]),
            tap_blocks: [2, 3, 4],
            decoder_width: 32,
            fusion_kernel: 3,
            aux_loss_weight: 0.0,
            seed: 0,
        }
    }
}

impl ModelConfig {
    /// Small enough for finite-difference gradient checks (about 1.3k parameters).
    pub fn tiny() -> Self {
        ModelConfig {
            input_size: 32,
            encoder_blocks: blocks(&[(1, 4), (1, 4), (1, 4)]),
            tap_blocks: [1, 2, 3],
            decoder_width: 4,
            ..ModelConfig::default()
        }
    }

    /// Desk-scale network for quick training runs on small boards. Keeps the
    /// default's four blocks and taps so the deepest tap still sees squares
    /// several cells apart.
    pub fn toy(input_size: usize) -> Self {
        ModelConfig {
            input_size,
            encoder_blocks: blocks(&[(1, 8), (1, 16), (1, 16), (1, 16)]),
            tap_blocks: [2, 3, 4],
            decoder_width: 8,
            ..ModelConfig::default()
        }
    }

    pub fn validate(&self) -> Result<(), NnError> {
        let bad = |m: String| Err(NnError::InvalidConfig(m));
        if self.input_channels == 0 || self.input_size == 0 {
            return bad("input size and channels must be positive".into());
        }
        if self.encoder_blocks.is_empty() {
            return bad("encoder needs at least one block".into());
        }
        if let Some(b) = self.encoder_blocks.iter().find(|b| b.conv_count == 0 || b.channels == 0) {
            return bad(format!("encoder block {b:?} is empty"));
        }
        let [a, b, c] = self.tap_blocks;
        if !(a >= 1 && a < b && b < c) {
            return bad(format!("tap blocks {:?} must be strictly increasing from 1", self.tap_blocks));
        }
        if c != self.encoder_blocks.len() {
            return bad(format!(
                "deepest tap is block {c} but the encoder has {} blocks",
                self.encoder_blocks.len()
            ));
        }
        let factor = 1usize << c;
        if self.input_size % factor != 0 {
            return bad(format!(
                "input size {} is not divisible by the deepest tap's factor {factor}",
                self.input_size
            ));
        }
        if self.decoder_width == 0 {
            return bad("decoder width must be positive".into());
        }
        if self.fusion_kernel % 2 == 0 {
            return bad(format!("fusion kernel {} must be odd", self.fusion_kernel));
        }
        if !(self.aux_loss_weight >= 0.0 && self.aux_loss_weight.is_finite()) {
            return bad(format!("aux loss weight {} must be finite and non-negative", self.aux_loss_weight));
        }
        Ok(())
    }

    /// Number of decoder stages, one per scale between the deepest tap and full size.
    pub fn decoder_stages(&self) -> usize {
        self.tap_blocks[2]
    }

    /// Canonical architecture description; excludes seed and loss weighting.
    pub fn architecture(&self) -> String {
        let blocks: Vec<String> = self
            .encoder_blocks
            .iter()
            .map(|b| format!("{}x{}", b.conv_count, b.channels))
            .collect();
        format!(
            "input={} channels={} blocks={} taps={},{},{} width={} fusion={}",
            self.input_size,
            self.input_channels,
            blocks.join(","),
            self.tap_blocks[0],
            self.tap_blocks[1],
            self.tap_blocks[2],
            self.decoder_width,
            self.fusion_kernel
        )
    }

    pub fn digest(&self) -> [u8; 32] {
        Sha256::digest(self.architecture().as_bytes()).into()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Param<T> {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: Vec<T>,
}

/// Weight and bias indices into the parameter list.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct Layer {
    w: usize,
    b: usize,
}

#[derive(Debug, Clone, PartialEq)]
struct Layout {
    /// encoder[block][conv]
    encoder: Vec<Vec<Layer>>,
    adapters: [Layer; 3],
    /// decoder[k - 1] maps scale 1/2^k to 1/2^(k-1)
    decoder: Vec<Layer>,
    readout: Layer,
    fusion: Layer,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Model<T> {
    config: ModelConfig,
    params: Vec<Param<T>>,
    layout: Layout,
}

/// Gradient buffers aligned with [`Model::params`].
pub type Grads<T> = Vec<Vec<T>>;

/// Outputs of a forward pass on one image.
#[derive(Debug, Clone)]
pub struct Prediction<T> {
    pub final_map: SaliencyMap<T>,
    pub per_tap: Vec<SaliencyMap<T>>,
    /// Pre-sigmoid fused map, row-major.
    pub logits: Vec<T>,
}

/// Everything the backward pass needs from a forward pass.
pub struct Cache<T> {
    input: Act<T>,
    /// Post-ReLU output of every encoder convolution.
    enc_out: Vec<Vec<Act<T>>>,
    pooled: Vec<Act<T>>,
    pool_arg: Vec<Vec<u32>>,
    adapted: Vec<Act<T>>,
    /// dec_out[tap][j]: output of the j-th stage along that tap's path.
    dec_out: Vec<Vec<Act<T>>>,
    pub tap_logits: Vec<Act<T>>,
    fusion_in: Act<T>,
    pub logits: Act<T>,
}

impl<T: Real> Cache<T> {
    /// Hash of every piecewise branch taken: ReLU on/off states and max-pool
    /// winners. Equal patterns at two parameter values mean the network is
    /// smooth on the segment between them.
    pub fn branch_pattern<H: Hasher>(&self, state: &mut H) {
        let acts = self.enc_out.iter().flatten().chain(self.dec_out.iter().flatten());
        for a in acts {
            for chunk in a.data.chunks(64) {
                state.write_u64(chunk.iter().enumerate().fold(0u64, |m, (i, &v)| m | (u64::from(v > T::zero()) << i)));
            }
        }
        self.pool_arg.hash(state);
    }
}

pub fn sigmoid<T: Real>(z: T) -> T {
    if z >= T::zero() {
        T::one() / (T::one() + (-z).exp())
    } else {
        let e = z.exp();
        e / (T::one() + e)
    }
}

fn sigmoid_map<T: Real>(a: &Act<T>) -> SaliencyMap<T> {
    SaliencyMap::new(a.w, a.h, a.data.iter().map(|&z| sigmoid(z)).collect()).expect("sigmoid lies in [0, 1]")
}

impl<T: Real> Model<T> {
    pub fn build(config: ModelConfig) -> Result<Model<T>, NnError> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let mut params: Vec<Param<T>> = Vec::new();
        let mut encoder = Vec::new();
        let mut in_c = config.input_channels;
        for (bi, block) in config.encoder_blocks.iter().enumerate() {
            let mut convs = Vec::new();
            for ci in 0..block.conv_count {
                let c = block.channels;
                convs.push(init_layer(&mut params, format!("enc.{}.{ci}", bi + 1), vec![c, in_c, 3, 3], in_c * 9, 2.0, c, &mut rng));
                in_c = c;
            }
            encoder.push(convs);
        }
        let d = config.decoder_width;
        let adapters = [0, 1, 2].map(|t| {
            let c = config.encoder_blocks[config.tap_blocks[t] - 1].channels;
            init_layer(&mut params, format!("adapt.{}", t + 1), vec![d, c, 1, 1], c, 1.0, d, &mut rng)
        });
        let decoder = (1..=config.decoder_stages())
            .map(|k| init_layer(&mut params, format!("dec.{k}"), vec![d, d, TCONV_K, TCONV_K], d * 4, 2.0, d, &mut rng))
            .collect();
        let readout = init_layer(&mut params, "readout".into(), vec![1, d, 1, 1], d, 1.0, 1, &mut rng);
        let fk = config.fusion_kernel;
        let fusion = init_layer(&mut params, "fusion".into(), vec![1, 3, fk, fk], 3 * fk * fk, 1.0, 1, &mut rng);
        Ok(Model {
            config,
            params,
            layout: Layout {
                encoder,
                adapters,
                decoder,
                readout,
                fusion,
            },
        })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn params(&self) -> &[Param<T>] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [Param<T>] {
        &mut self.params
    }

    pub fn param_count(&self) -> usize {
        self.params.iter().map(|p| p.data.len()).sum()
    }

    pub fn zero_grads(&self) -> Grads<T> {
        self.params.iter().map(|p| vec![T::zero(); p.data.len()]).collect()
    }

    /// Distinct parameter-set prefixes (`enc.1.0`, `dec.2`, ...) in order.
    pub fn parameter_sets(&self) -> Vec<String> {
        let mut sets: Vec<String> = Vec::new();
        for p in &self.params {
            let prefix = p.name.rsplit_once('.').map_or(p.name.as_str(), |(a, _)| a).to_string();
            if sets.last() != Some(&prefix) {
                sets.push(prefix);
            }
        }
        sets
    }

    /// SHA-256 over every parameter name and value (as `f64` bits), in hex.
    pub fn checksum(&self) -> String {
        let mut h = Sha256::new();
        for p in &self.params {
            h.update(p.name.as_bytes());
            for v in &p.data {
                h.update(v.f64().to_le_bytes());
            }
        }
        h.finalize().iter().map(|b| format!("{b:02x}")).collect()
    }

    pub(crate) fn from_parts(config: ModelConfig, params: Vec<Param<T>>) -> Result<Model<T>, NnError> {
        let mut m = Model::build(config)?;
        if params.len() != m.params.len() {
            return Err(NnError::FormatMismatch(format!(
                "{} tensors given, architecture has {}",
                params.len(),
                m.params.len()
            )));
        }
        for (dst, src) in m.params.iter_mut().zip(params) {
            if dst.name != src.name || dst.shape != src.shape {
                return Err(NnError::FormatMismatch(format!(
                    "tensor {} {:?} does not match {} {:?}",
                    src.name, src.shape, dst.name, dst.shape
                )));
            }
            dst.data = src.data;
        }
        Ok(m)
    }

    fn p(&self, i: usize) -> &[T] {
        &self.params[i].data
    }

    pub fn input_from_image(&self, image: &Image) -> Result<Act<T>, NnError> {
        let s = self.config.input_size;
        if image.width() != s || image.height() != s {
            return Err(NnError::DimensionMismatch {
                expected: s,
                got: image.width(),
            });
        }
        if self.config.input_channels != 3 {
            return Err(NnError::InvalidConfig(format!(
                "RGB images need 3 input channels, model has {}",
                self.config.input_channels
            )));
        }
        Ok(Act::from_data(3, s, s, image.to_planar()))
    }

    pub fn forward(&self, image: &Image) -> Result<Prediction<T>, NnError> {
        let cache = self.forward_cached(self.input_from_image(image)?);
        Ok(Prediction {
            final_map: sigmoid_map(&cache.logits),
            per_tap: cache.tap_logits.iter().map(sigmoid_map).collect(),
            logits: cache.logits.data.clone(),
        })
    }

    pub fn forward_cached(&self, input: Act<T>) -> Cache<T> {
        let cfg = &self.config;
        let lay = &self.layout;
        let mut enc_out = Vec::with_capacity(lay.encoder.len());
        let mut pooled: Vec<Act<T>> = Vec::with_capacity(lay.encoder.len());
        let mut pool_arg = Vec::with_capacity(lay.encoder.len());
        for (bi, convs) in lay.encoder.iter().enumerate() {
            let mut outs: Vec<Act<T>> = Vec::with_capacity(convs.len());
            for (ci, l) in convs.iter().enumerate() {
                let x = match (ci, bi) {
                    (0, 0) => &input,
                    (0, _) => &pooled[bi - 1],
                    _ => &outs[ci - 1],
                };
                let mut y = conv2d_forward(x, self.p(l.w), self.p(l.b), cfg.encoder_blocks[bi].channels, 3);
                relu_inplace(&mut y);
                outs.push(y);
            }
            let (p, arg) = maxpool2_forward(outs.last().expect("blocks have convolutions"));
            enc_out.push(outs);
            pooled.push(p);
            pool_arg.push(arg);
        }

        let d = cfg.decoder_width;
        let mut adapted = Vec::with_capacity(3);
        let mut dec_out = Vec::with_capacity(3);
        let mut tap_logits = Vec::with_capacity(3);
        for t in 0..3 {
            let depth = cfg.tap_blocks[t];
            let l = lay.adapters[t];
            let a = conv2d_forward(&pooled[depth - 1], self.p(l.w), self.p(l.b), d, 1);
            let mut path: Vec<Act<T>> = Vec::with_capacity(depth);
            for k in (1..=depth).rev() {
                let x = path.last().unwrap_or(&a);
                let s = lay.decoder[k - 1];
                let mut y = tconv_forward(x, self.p(s.w), self.p(s.b), d);
                relu_inplace(&mut y);
                path.push(y);
            }
            let r = lay.readout;
            tap_logits.push(conv2d_forward(path.last().expect("depth >= 1"), self.p(r.w), self.p(r.b), 1, 1));
            adapted.push(a);
            dec_out.push(path);
        }
        let fusion_in = Act::concat(&[&tap_logits[0], &tap_logits[1], &tap_logits[2]]);
        let f = lay.fusion;
        let logits = conv2d_forward(&fusion_in, self.p(f.w), self.p(f.b), 1, cfg.fusion_kernel);
        Cache {
            input,
            enc_out,
            pooled,
            pool_arg,
            adapted,
            dec_out,
            tap_logits,
            fusion_in,
            logits,
        }
    }

    /// Accumulate parameter gradients into `grads` given the gradient of the
    /// objective with respect to the fused logits and, optionally, to each
    /// tap's logits. `only_tap` restricts backpropagation to one tap path.
    pub fn backward(
        &self,
        cache: &Cache<T>,
        d_logits: &Act<T>,
        d_tap_logits: Option<&[Act<T>]>,
        only_tap: Option<usize>,
        grads: &mut Grads<T>,
    ) {
        let cfg = &self.config;
        let lay = &self.layout;
        let f = lay.fusion;
        let d_fusion_in = {
            let (gw, gb) = two_mut(grads, f.w, f.b);
            conv2d_backward(&cache.fusion_in, self.p(f.w), d_logits, cfg.fusion_kernel, gw, gb)
        };
        let plane = cache.logits.h * cache.logits.w;
        let mut d_pooled: Vec<Option<Act<T>>> = vec![None; lay.encoder.len()];
        for t in 0..3 {
            if only_tap.is_some_and(|o| o != t) {
                continue;
            }
            let (h, w) = (cache.logits.h, cache.logits.w);
            let mut d_tap = Act::from_data(1, h, w, d_fusion_in.data[t * plane..(t + 1) * plane].to_vec());
            if let Some(extra) = d_tap_logits {
                d_tap.add_assign(&extra[t]);
            }
            let path = &cache.dec_out[t];
            let r = lay.readout;
            let mut g = {
                let (gw, gb) = two_mut(grads, r.w, r.b);
                conv2d_backward(path.last().expect("depth >= 1"), self.p(r.w), &d_tap, 1, gw, gb)
            };
            let depth = cfg.tap_blocks[t];
            for (j, k) in (1..=depth).rev().enumerate().collect::<Vec<_>>().into_iter().rev() {
                relu_backward_inplace(&path[j], &mut g);
                let x = if j == 0 { &cache.adapted[t] } else { &path[j - 1] };
                let s = lay.decoder[k - 1];
                let (gw, gb) = two_mut(grads, s.w, s.b);
                g = tconv_backward(x, self.p(s.w), &g, gw, gb);
            }
            let a = lay.adapters[t];
            let dp = {
                let (gw, gb) = two_mut(grads, a.w, a.b);
                conv2d_backward(&cache.pooled[depth - 1], self.p(a.w), &g, 1, gw, gb)
            };
            match &mut d_pooled[depth - 1] {
                Some(acc) => acc.add_assign(&dp),
                slot => *slot = Some(dp),
            }
        }

        let mut carry: Option<Act<T>> = None;
        for bi in (0..lay.encoder.len()).rev() {
            let mut g = match (d_pooled[bi].take(), carry.take()) {
                (Some(mut a), Some(b)) => {
                    a.add_assign(&b);
                    a
                }
                (Some(a), None) | (None, Some(a)) => a,
                (None, None) => continue,
            };
            let outs = &cache.enc_out[bi];
            let last = outs.last().expect("blocks have convolutions");
            g = maxpool2_backward((last.c, last.h, last.w), &cache.pool_arg[bi], &g);
            for ci in (0..outs.len()).rev() {
                relu_backward_inplace(&outs[ci], &mut g);
                let x = match (ci, bi) {
                    (0, 0) => &cache.input,
                    (0, _) => &cache.pooled[bi - 1],
                    _ => &outs[ci - 1],
                };
                let l = lay.encoder[bi][ci];
                let (gw, gb) = two_mut(grads, l.w, l.b);
                g = conv2d_backward(x, self.p(l.w), &g, 3, gw, gb);
            }
            if bi > 0 {
                carry = Some(g);
            }
        }
    }

    pub fn predict(&self, image: &Image) -> Result<SaliencyMap<T>, NnError> {
        Ok(self.forward(image)?.final_map)
    }

    /// Render `board` with the default colours at the model's input size, then predict.
    pub fn predict_board(&self, board: &BoardState, perspective: Color) -> Result<SaliencyMap<T>, NnError> {
        let s = self.config.input_size;
        if s % 8 != 0 {
            return Err(NnError::DimensionMismatch {
                expected: s.next_multiple_of(8),
                got: s,
            });
        }
        let image = render(board, perspective, &RenderTheme::with_cell_size(s / 8))?;
        self.predict(&image)
    }

    pub fn predict_fen(&self, fen: &str, perspective: Color) -> Result<SaliencyMap<T>, NnError> {
        self.predict_board(&BoardState::from_fen(fen)?, perspective)
    }
}

/// Append a Gaussian weight tensor with std `sqrt(gain / fan_in)` and a zero bias.
fn init_layer<T: Real>(
    params: &mut Vec<Param<T>>,
    prefix: String,
    shape: Vec<usize>,
    fan_in: usize,
    gain: f64,
    bias_len: usize,
    rng: &mut ChaCha8Rng,
) -> Layer {
    let normal = Normal::new(0.0, (gain / fan_in as f64).sqrt()).expect("positive std");
    let n: usize = shape.iter().product();
    params.push(Param {
        name: format!("{prefix}.weight"),
        shape,
        data: (0..n).map(|_| T::of(normal.sample(rng))).collect(),
    });
    params.push(Param {
        name: format!("{prefix}.bias"),
        shape: vec![bias_len],
        data: vec![T::zero(); bias_len],
    });
    Layer {
        w: params.len() - 2,
        b: params.len() - 1,
    }
}

fn two_mut<T>(v: &mut [Vec<T>], a: usize, b: usize) -> (&mut [T], &mut [T]) {
    assert!(a < b);
    let (lo, hi) = v.split_at_mut(b);
    (&mut lo[a], &mut hi[0])
}
