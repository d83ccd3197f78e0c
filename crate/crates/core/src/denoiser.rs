//! Denoiser step contract and a deterministic toy cross-attention backend.
//!
//! The toy backend is untrained: all weights are drawn once from a seed. Its
//! latent channels have three roles:
//!
//! - **layout** channels drift under a fixed prompt-independent smoothing
//!   and are the only input to the attention queries;
//! - **content** channels receive the cross-attention output through the
//!   residual update `Z <- Z + gamma * attn_out`;
//! - the **planted** channel receives, per cell, the attention mass on the
//!   planted attribute's tokens times the selected category's signed bias
//!   times `beta`.
//!
//! Because queries never see content or planted channels, raw attention maps
//! depend only on the seed, the step and the prompt, so scaling attribute
//! maps changes attribute expression monotonically.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{bicubic_upscale, seeded_gaussian, softmax_in_place, Grid2D, SeededRng};
use crate::prompt::ComposedPrompt;
use crate::schedule::{AmplificationSpec, PromptSchedule};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DenoiserConfig {
    pub latent_height: usize,
    pub latent_width: usize,
    pub channels: usize,
    pub layout_channels: usize,
    /// Downsampling factor of each cross-attention layer.
    pub layer_scales: Vec<usize>,
    pub steps: usize,
    pub planted_channel: usize,
    /// Which attribute group of a composed prompt drives the planted channel.
    pub planted_group: usize,
    /// `beta`.
    pub planted_bias: f64,
    /// Signed bias per category of the planted attribute.
    pub category_bias: Vec<f64>,
    /// `gamma`.
    pub residual_mix: f64,
    pub layout_drift: f64,
    pub token_dim: usize,
    pub head_dim: usize,
    /// Prompts are padded to this many tokens.
    pub context_len: usize,
    pub image_height: usize,
    pub image_width: usize,
    pub weight_seed: u64,
}

impl Default for DenoiserConfig {
    fn default() -> Self {
        Self {
            latent_height: 16,
            latent_width: 16,
            channels: 8,
            layout_channels: 3,
            layer_scales: vec![1, 2],
            steps: 50,
            planted_channel: 0,
            planted_group: 0,
            planted_bias: 0.5,
            category_bias: vec![-1.0, 1.0],
            residual_mix: 0.1,
            layout_drift: 0.1,
            token_dim: 16,
            head_dim: 8,
            context_len: 16,
            image_height: 32,
            image_width: 32,
            weight_seed: 0,
        }
    }
}

impl DenoiserConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidInput(m));
        if self.steps == 0 {
            return bad("denoiser needs at least one step".into());
        }
        if self.latent_height == 0 || self.latent_width == 0 {
            return bad("latent dims must be positive".into());
        }
        if self.layer_scales.is_empty() {
            return bad("at least one cross-attention layer is required".into());
        }
        for &s in &self.layer_scales {
            if s == 0 || self.latent_height % s != 0 || self.latent_width % s != 0 {
                return bad(format!(
                    "layer scale {s} does not divide latent {}x{}",
                    self.latent_height, self.latent_width
                ));
            }
        }
        if self.planted_channel >= self.channels {
            return bad(format!("planted channel {} >= {} channels", self.planted_channel, self.channels));
        }
        if self.layout_channels == 0 || self.layout_channels + 2 > self.channels {
            return bad(format!(
                "{} channels cannot hold a planted, {} layout and at least one content channel",
                self.channels, self.layout_channels
            ));
        }
        if self.token_dim == 0 || self.head_dim == 0 || self.context_len == 0 {
            return bad("token_dim, head_dim and context_len must be positive".into());
        }
        if self.image_height < self.latent_height || self.image_width < self.latent_width {
            return bad("image size must be at least the latent size".into());
        }
        if self.category_bias.is_empty() {
            return bad("category_bias must list at least one category".into());
        }
        for v in [self.planted_bias, self.residual_mix, self.layout_drift] {
            if !v.is_finite() {
                return bad("non-finite mixing coefficient".into());
            }
        }
        Ok(())
    }
}

/// Noisy latent `Z_t`, channel-planar `[channel][row][col]`.
#[derive(Debug, Clone, PartialEq)]
pub struct LatentState {
    height: usize,
    width: usize,
    channels: usize,
    data: Vec<f64>,
    step: usize,
    seed: u64,
    stream: u64,
}

impl LatentState {
    pub fn new(height: usize, width: usize, channels: usize, data: Vec<f64>, step: usize, seed: u64, stream: u64) -> Result<Self> {
        if data.len() != height * width * channels {
            return Err(Error::InvalidInput(format!(
                "latent {channels}x{height}x{width} needs {} values, got {}",
                height * width * channels,
                data.len()
            )));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("latent contains non-finite values".into()));
        }
        Ok(Self {
            height,
            width,
            channels,
            data,
            step,
            seed,
            stream,
        })
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn step(&self) -> usize {
        self.step
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn stream(&self) -> u64 {
        self.stream
    }

    pub fn channel(&self, c: usize) -> &[f64] {
        let n = self.height * self.width;
        &self.data[c * n..(c + 1) * n]
    }

    pub fn channel_mean(&self, c: usize) -> f64 {
        let ch = self.channel(c);
        ch.iter().sum::<f64>() / ch.len() as f64
    }

    /// Same state with every value multiplied by `a`.
    pub fn scaled(&self, a: f64) -> Self {
        Self {
            data: self.data.iter().map(|v| v * a).collect(),
            ..self.clone()
        }
    }
}

/// Amplification actually applied to a layer's maps.
#[derive(Debug, Clone, PartialEq)]
pub struct AppliedAmplification {
    pub tokens: Vec<usize>,
    pub factor: f64,
    /// Effective maps after scaling, same layout as the raw maps.
    pub maps: Vec<f64>,
}

/// Post-softmax maps of one cross-attention layer, `[token][row][col]`.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerMaps {
    pub layer_id: usize,
    pub height: usize,
    pub width: usize,
    pub raw: Vec<f64>,
    pub amplified: Option<AppliedAmplification>,
}

impl LayerMaps {
    pub fn cells(&self) -> usize {
        self.height * self.width
    }

    pub fn token_map(&self, token: usize) -> &[f64] {
        let n = self.cells();
        &self.raw[token * n..(token + 1) * n]
    }

    /// Effective map of `token`: amplified if amplification was applied.
    pub fn effective_map(&self, token: usize) -> &[f64] {
        let n = self.cells();
        match &self.amplified {
            Some(a) => &a.maps[token * n..(token + 1) * n],
            None => self.token_map(token),
        }
    }

    pub fn token_grid(&self, token: usize, effective: bool) -> Result<Grid2D> {
        let map = if effective { self.effective_map(token) } else { self.token_map(token) };
        Grid2D::new(self.height, self.width, map.to_vec())
    }
}

/// All cross-attention maps produced by one denoising step.
#[derive(Debug, Clone, PartialEq)]
pub struct AttentionRecord {
    pub step: usize,
    pub token_count: usize,
    pub layers: Vec<LayerMaps>,
}

/// A `3 x height x width` decoded image, channel-planar.
#[derive(Debug, Clone, PartialEq)]
pub struct Image {
    pub height: usize,
    pub width: usize,
    pub data: Vec<f64>,
}

impl Image {
    pub const CHANNELS: usize = 3;

    pub fn channel(&self, c: usize) -> &[f64] {
        let n = self.height * self.width;
        &self.data[c * n..(c + 1) * n]
    }

    pub fn channel_mean(&self, c: usize) -> f64 {
        let ch = self.channel(c);
        ch.iter().sum::<f64>() / ch.len() as f64
    }
}

/// The reverse-diffusion step contract `Z_{t+1} <- DM(Z_t, R, t, s)`.
pub trait Denoiser: Sync {
    fn steps(&self) -> usize;

    /// `Z_0` for a seed: i.i.d. standard normal on a dedicated stream.
    fn initial_state(&self, seed: u64) -> LatentState;

    fn step(
        &self,
        state: &LatentState,
        prompt: &ComposedPrompt,
        t: usize,
        controller: Option<&AmplificationSpec>,
    ) -> Result<(LatentState, AttentionRecord)>;

    fn decode(&self, state: &LatentState) -> Result<Image>;
}

/// Weights of one cross-attention layer.
#[derive(Debug, Clone)]
pub struct CrossAttentionLayer {
    pub scale: usize,
    head_dim: usize,
    query_in: usize,
    token_dim: usize,
    value_out: usize,
    /// `head_dim x query_in`
    wq: Vec<f64>,
    /// `head_dim x token_dim`
    wk: Vec<f64>,
    /// `value_out x token_dim`
    wv: Vec<f64>,
}

/// Result of one cross-attention layer at its native resolution.
#[derive(Debug, Clone)]
pub struct LayerOutput {
    /// `[value channel][row][col]`
    pub attn_out: Vec<f64>,
    pub maps: LayerMaps,
}

fn matvec(w: &[f64], cols: usize, x: &[f64], out: &mut [f64]) {
    for (o, row) in out.iter_mut().zip(w.chunks_exact(cols)) {
        *o = row.iter().zip(x).map(|(a, b)| a * b).sum();
    }
}

impl CrossAttentionLayer {
    pub fn new(scale: usize, query_in: usize, token_dim: usize, head_dim: usize, value_out: usize, rng: &mut SeededRng) -> Self {
        let draw = |rng: &mut SeededRng, rows: usize, cols: usize, std: f64| -> Vec<f64> {
            seeded_gaussian(rng, &[rows, cols]).into_iter().map(|w| w * std).collect()
        };
        Self {
            scale,
            head_dim,
            query_in,
            token_dim,
            value_out,
            wq: draw(rng, head_dim, query_in, 1.5 / (query_in as f64).sqrt()),
            wk: draw(rng, head_dim, token_dim, 1.0 / (token_dim as f64).sqrt()),
            wv: draw(rng, value_out, token_dim, 1.0 / (token_dim as f64).sqrt()),
        }
    }

    /// Same shapes, every projection zero.
    pub fn zeroed(&self) -> Self {
        Self {
            wq: vec![0.0; self.wq.len()],
            wk: vec![0.0; self.wk.len()],
            wv: vec![0.0; self.wv.len()],
            ..self.clone()
        }
    }

    /// Attention over `tokens` (row-major `r x token_dim`) for query features
    /// `[query channel][row][col]` of a `height x width` grid.
    ///
    /// Amplification multiplies the selected token maps after the softmax and
    /// before the weighted sum with the values; raw maps are kept as well.
    pub fn forward(
        &self,
        layer_id: usize,
        query_features: &[f64],
        height: usize,
        width: usize,
        tokens: &[f64],
        controller: Option<&AmplificationSpec>,
    ) -> Result<LayerOutput> {
        if tokens.is_empty() || tokens.len() % self.token_dim != 0 {
            return Err(Error::InvalidPrompt(format!(
                "prompt rows must have dim {}",
                self.token_dim
            )));
        }
        let cells = height * width;
        if query_features.len() != cells * self.query_in {
            return Err(Error::InvalidInput(format!(
                "layer expects {} query channels over {cells} cells",
                self.query_in
            )));
        }
        let r = tokens.len() / self.token_dim;
        let controller = controller.filter(|c| !c.is_identity());
        if let Some(c) = controller {
            if let Some(t) = c.tokens.iter().find(|&&t| t >= r) {
                return Err(Error::InvalidPrompt(format!("amplified token {t} beyond {r} prompt tokens")));
            }
        }

        let mut keys = vec![0.0; r * self.head_dim];
        let mut values = vec![0.0; r * self.value_out];
        for (j, tok) in tokens.chunks_exact(self.token_dim).enumerate() {
            matvec(&self.wk, self.token_dim, tok, &mut keys[j * self.head_dim..(j + 1) * self.head_dim]);
            matvec(&self.wv, self.token_dim, tok, &mut values[j * self.value_out..(j + 1) * self.value_out]);
        }
        let gain: Vec<f64> = (0..r)
            .map(|j| match controller {
                Some(c) if c.applies_to(j) => c.factor,
                _ => 1.0,
            })
            .collect();

        let inv_sqrt = 1.0 / (self.head_dim as f64).sqrt();
        let mut raw = vec![0.0; r * cells];
        let mut effective = controller.map(|_| vec![0.0; r * cells]);
        let mut attn_out = vec![0.0; self.value_out * cells];
        let mut feat = vec![0.0; self.query_in];
        let mut q = vec![0.0; self.head_dim];
        let mut row = vec![0.0; r];
        for cell in 0..cells {
            for (c, f) in feat.iter_mut().enumerate() {
                *f = query_features[c * cells + cell];
            }
            matvec(&self.wq, self.query_in, &feat, &mut q);
            for (j, logit) in row.iter_mut().enumerate() {
                let k = &keys[j * self.head_dim..(j + 1) * self.head_dim];
                *logit = q.iter().zip(k).map(|(a, b)| a * b).sum::<f64>() * inv_sqrt;
            }
            softmax_in_place(&mut row);
            for (j, &m) in row.iter().enumerate() {
                raw[j * cells + cell] = m;
                let e = if controller.is_some() { m * gain[j] } else { m };
                if let Some(eff) = effective.as_mut() {
                    eff[j * cells + cell] = e;
                }
                let v = &values[j * self.value_out..(j + 1) * self.value_out];
                for (o, vv) in v.iter().enumerate() {
                    attn_out[o * cells + cell] += e * vv;
                }
            }
        }
        let amplified = match (controller, effective) {
            (Some(c), Some(maps)) => Some(AppliedAmplification {
                tokens: c.tokens.clone(),
                factor: c.factor,
                maps,
            }),
            _ => None,
        };
        Ok(LayerOutput {
            attn_out,
            maps: LayerMaps {
                layer_id,
                height,
                width,
                raw,
                amplified,
            },
        })
    }
}

/// Linear `C -> 3` map followed by bicubic upscaling.
#[derive(Debug, Clone)]
struct Decoder {
    /// `3 x channels`
    weight: Vec<f64>,
    bias: [f64; 3],
}

/// The deterministic toy backend.
#[derive(Debug, Clone)]
pub struct ToyDenoiser {
    config: DenoiserConfig,
    layers: Vec<CrossAttentionLayer>,
    layout: Vec<usize>,
    content: Vec<usize>,
    pad_token: Vec<f64>,
    decoder: Decoder,
}

/// Mean-pools `src` (`h x w`) by `s` in both directions.
fn mean_pool(src: &[f64], h: usize, w: usize, s: usize) -> Vec<f64> {
    if s == 1 {
        return src.to_vec();
    }
    let (oh, ow) = (h / s, w / s);
    let norm = (s * s) as f64;
    let mut out = vec![0.0; oh * ow];
    for y in 0..h {
        for x in 0..w {
            out[(y / s) * ow + x / s] += src[y * w + x];
        }
    }
    out.iter_mut().for_each(|v| *v /= norm);
    out
}

/// 3x3 box blur with clamped borders.
fn box_blur(src: &[f64], h: usize, w: usize) -> Vec<f64> {
    let mut out = vec![0.0; h * w];
    for y in 0..h {
        for x in 0..w {
            let mut acc = 0.0;
            for dy in -1i64..=1 {
                for dx in -1i64..=1 {
                    let yy = (y as i64 + dy).clamp(0, h as i64 - 1) as usize;
                    let xx = (x as i64 + dx).clamp(0, w as i64 - 1) as usize;
                    acc += src[yy * w + xx];
                }
            }
            out[y * w + x] = acc / 9.0;
        }
    }
    out
}

impl ToyDenoiser {
    pub fn new(config: DenoiserConfig) -> Result<Self> {
        config.validate()?;
        let non_planted: Vec<usize> = (0..config.channels).filter(|&c| c != config.planted_channel).collect();
        let layout = non_planted[..config.layout_channels].to_vec();
        let content = non_planted[config.layout_channels..].to_vec();

        let seed = config.weight_seed;
        let layers = config
            .layer_scales
            .iter()
            .enumerate()
            .map(|(i, &s)| {
                let mut rng = SeededRng::new(seed, 0x1a7e_0000 + i as u64);
                CrossAttentionLayer::new(s, layout.len(), config.token_dim, config.head_dim, content.len(), &mut rng)
            })
            .collect();
        let pad_token = seeded_gaussian(&mut SeededRng::new(seed, 0x9ad), &[config.token_dim]);

        let mut rng = SeededRng::new(seed, 0xdec0);
        let c = config.channels;
        let mut weight = vec![0.0; 3 * c];
        for (o, row) in weight.chunks_exact_mut(c).enumerate() {
            for (ch, w) in row.iter_mut().enumerate() {
                let z = rng.standard_normal();
                *w = match (o, ch == config.planted_channel) {
                    (0, true) => 1.0,
                    (0, false) => 0.02 * z,
                    _ => z / (c as f64).sqrt(),
                };
            }
        }
        let bias = [0.1 * rng.standard_normal(), 0.1 * rng.standard_normal(), 0.1 * rng.standard_normal()];

        Ok(Self {
            config,
            layers,
            layout,
            content,
            pad_token,
            decoder: Decoder { weight, bias },
        })
    }

    pub fn config(&self) -> &DenoiserConfig {
        &self.config
    }

    pub fn layers(&self) -> &[CrossAttentionLayer] {
        &self.layers
    }

    /// Replaces every layer with an all-zero copy (uniform attention).
    pub fn with_zeroed_attention(mut self) -> Self {
        self.layers = self.layers.iter().map(CrossAttentionLayer::zeroed).collect();
        self
    }

    pub fn decoder_bias(&self) -> [f64; 3] {
        self.decoder.bias
    }

    /// Prompt rows padded to the context length.
    fn padded_tokens(&self, prompt: &ComposedPrompt) -> Result<Vec<f64>> {
        if prompt.dim() != self.config.token_dim {
            return Err(Error::InvalidPrompt(format!(
                "prompt dim {} does not match token dim {}",
                prompt.dim(),
                self.config.token_dim
            )));
        }
        if prompt.rows() > self.config.context_len {
            return Err(Error::InvalidPrompt(format!(
                "prompt has {} tokens, context holds {}",
                prompt.rows(),
                self.config.context_len
            )));
        }
        let mut tokens = prompt.embedding().data().to_vec();
        for _ in prompt.rows()..self.config.context_len {
            tokens.extend_from_slice(&self.pad_token);
        }
        Ok(tokens)
    }

    /// Signed bias and token span of the planted attribute, if the prompt
    /// carries that attribute group.
    fn planted_tokens(&self, prompt: &ComposedPrompt) -> Result<Option<(f64, std::ops::Range<usize>)>> {
        let g = self.config.planted_group;
        let Some(group) = prompt.groups().get(g) else {
            return Ok(None);
        };
        let bias = *self.config.category_bias.get(group.category).ok_or_else(|| {
            Error::InvalidPrompt(format!(
                "category {} has no planted bias ({} configured)",
                group.category,
                self.config.category_bias.len()
            ))
        })?;
        Ok(Some((bias, prompt.group_range(g).expect("group exists"))))
    }
}

impl Denoiser for ToyDenoiser {
    fn steps(&self) -> usize {
        self.config.steps
    }

    fn initial_state(&self, seed: u64) -> LatentState {
        let c = &self.config;
        let mut rng = SeededRng::new(seed, 0);
        let data = seeded_gaussian(&mut rng, &[c.channels, c.latent_height, c.latent_width]);
        LatentState {
            height: c.latent_height,
            width: c.latent_width,
            channels: c.channels,
            data,
            step: 0,
            seed,
            stream: 0,
        }
    }

    fn step(
        &self,
        state: &LatentState,
        prompt: &ComposedPrompt,
        t: usize,
        controller: Option<&AmplificationSpec>,
    ) -> Result<(LatentState, AttentionRecord)> {
        let cfg = &self.config;
        if t >= cfg.steps {
            return Err(Error::TrajectoryExhausted { step: t, total: cfg.steps });
        }
        if state.step != t {
            return Err(Error::InvalidInput(format!("latent is at step {}, asked to run step {t}", state.step)));
        }
        if state.height != cfg.latent_height || state.width != cfg.latent_width || state.channels != cfg.channels {
            return Err(Error::InvalidInput("latent shape does not match the denoiser".into()));
        }
        let tokens = self.padded_tokens(prompt)?;
        let planted = self.planted_tokens(prompt)?;
        let (h, w) = (cfg.latent_height, cfg.latent_width);
        let n = h * w;
        let mut z = state.data.clone();

        for &c in &self.layout {
            let ch = &z[c * n..(c + 1) * n];
            let blurred = box_blur(ch, h, w);
            for (v, b) in z[c * n..(c + 1) * n].iter_mut().zip(&blurred) {
                *v += cfg.layout_drift * (b - *v);
            }
        }

        let mut planted_mass = vec![0.0; n];
        let mut layers = Vec::with_capacity(self.layers.len());
        for (id, layer) in self.layers.iter().enumerate() {
            let s = layer.scale;
            let (lh, lw) = (h / s, w / s);
            let mut query = Vec::with_capacity(self.layout.len() * lh * lw);
            for &c in &self.layout {
                query.extend(mean_pool(&z[c * n..(c + 1) * n], h, w, s));
            }
            let out = layer.forward(id, &query, lh, lw, &tokens, controller)?;
            let lcells = lh * lw;
            for (o, &c) in self.content.iter().enumerate() {
                let src = &out.attn_out[o * lcells..(o + 1) * lcells];
                for y in 0..h {
                    for x in 0..w {
                        z[c * n + y * w + x] += cfg.residual_mix * src[(y / s) * lw + x / s];
                    }
                }
            }
            if let Some((_, range)) = &planted {
                let mut mass = vec![0.0; lcells];
                for j in range.clone() {
                    for (m, v) in mass.iter_mut().zip(out.maps.effective_map(j)) {
                        *m += v;
                    }
                }
                for y in 0..h {
                    for x in 0..w {
                        planted_mass[y * w + x] += mass[(y / s) * lw + x / s];
                    }
                }
            }
            layers.push(out.maps);
        }

        if let Some((bias, _)) = planted {
            let pc = cfg.planted_channel;
            let layer_count = self.layers.len() as f64;
            for (v, m) in z[pc * n..(pc + 1) * n].iter_mut().zip(&planted_mass) {
                *v += cfg.planted_bias * bias * (m / layer_count);
            }
        }

        let next = LatentState {
            data: z,
            step: t + 1,
            ..state.clone()
        };
        let record = AttentionRecord {
            step: t,
            token_count: cfg.context_len,
            layers,
        };
        Ok((next, record))
    }

    fn decode(&self, state: &LatentState) -> Result<Image> {
        let cfg = &self.config;
        if state.step != cfg.steps {
            return Err(Error::NotFinal {
                step: state.step,
                total: cfg.steps,
            });
        }
        let n = state.height * state.width;
        let mut data = Vec::with_capacity(3 * cfg.image_height * cfg.image_width);
        for o in 0..3 {
            let wrow = &self.decoder.weight[o * state.channels..(o + 1) * state.channels];
            let mut plane = vec![self.decoder.bias[o]; n];
            for (c, wc) in wrow.iter().enumerate() {
                for (p, v) in plane.iter_mut().zip(state.channel(c)) {
                    *p += wc * v;
                }
            }
            let grid = Grid2D::new(state.height, state.width, plane)?;
            data.extend(bicubic_upscale(&grid, cfg.image_height, cfg.image_width)?.into_values());
        }
        Ok(Image {
            height: cfg.image_height,
            width: cfg.image_width,
            data,
        })
    }
}

/// A complete run: final latent, one record per step and the decoded image.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub initial: LatentState,
    pub final_state: LatentState,
    pub records: Vec<AttentionRecord>,
    pub image: Image,
}

fn drive<D: Denoiser + ?Sized>(
    denoiser: &D,
    seed: u64,
    schedule: &PromptSchedule,
    mut on_record: impl FnMut(AttentionRecord),
) -> Result<(LatentState, LatentState, Image)> {
    if schedule.steps() != denoiser.steps() {
        return Err(Error::InvalidSchedule(format!(
            "schedule covers {} steps, denoiser runs {}",
            schedule.steps(),
            denoiser.steps()
        )));
    }
    let initial = denoiser.initial_state(seed);
    let mut state = initial.clone();
    for t in 0..denoiser.steps() {
        let (prompt, amp) = schedule.prompt_at(t)?;
        let (next, record) = denoiser.step(&state, prompt, t, amp)?;
        on_record(record);
        state = next;
    }
    let image = denoiser.decode(&state)?;
    Ok((initial, state, image))
}

/// Runs all `l` steps from `Z_0 = N(0, I)` for `seed`.
pub fn run_trajectory<D: Denoiser + ?Sized>(denoiser: &D, seed: u64, schedule: &PromptSchedule) -> Result<Trajectory> {
    let mut records = Vec::with_capacity(denoiser.steps());
    let (initial, final_state, image) = drive(denoiser, seed, schedule, |r| records.push(r))?;
    Ok(Trajectory {
        initial,
        final_state,
        records,
        image,
    })
}

/// Like [`run_trajectory`] but drops the attention records.
pub fn run_final<D: Denoiser + ?Sized>(denoiser: &D, seed: u64, schedule: &PromptSchedule) -> Result<(LatentState, Image)> {
    let (_, state, image) = drive(denoiser, seed, schedule, |_| {})?;
    Ok((state, image))
}
