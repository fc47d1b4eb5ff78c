//! Handwriting synthesis: word-level ink generation behind a backend
//! contract, percentile baseline estimation, baseline-aligned line
//! composition, ink postprocessing, and placement into document regions.

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::Error;
use crate::geometry::{PageSize, PxBox};
use crate::rng::{self, fnv1a64};
use crate::Result;

/// Generator output size (height x width).
pub const CANONICAL_HEIGHT: u32 = 128;
pub const CANONICAL_WIDTH: u32 = 512;

/// Longest run of characters drawn as one generator call.
pub const MAX_SEGMENT_CHARS: usize = 6;

/// Opacity threshold for baseline estimation, out of 255.
pub const DEFAULT_TAU: u8 = 16;

/// Gap between words when composing a line: a quarter of the canonical
/// height. Pieces of a single word are butted together with no gap.
pub const DEFAULT_WORD_SPACING: u32 = CANONICAL_HEIGHT / 4;

/// Placement jitter bound in px, each axis.
pub const DEFAULT_JITTER: i64 = 2;

/// Inference-time constants for a latent-diffusion word generator. The
/// model itself is out of scope; these pin the contract an implementation
/// must satisfy to slot in behind [`WordGenerator`].
pub mod diffusion {
    /// Spatial downsampling between pixel and latent space.
    pub const LATENT_DOWNSAMPLE: u32 = 8;
    /// VAE latent scaling factor.
    pub const LATENT_SCALE: f64 = 0.18215;
    pub const INFERENCE_STEPS: u32 = 30;
    pub const SAMPLING_TEMPERATURE: f64 = 0.5;
    /// Size of the retained writer style set.
    pub const RETAINED_WRITERS: u32 = 9;
}

/// Grayscale ink raster: alpha is coverage, intensity is darkness where
/// covered. Both row-major, width*height bytes.
#[derive(Debug, Clone, PartialEq)]
pub struct InkImage {
    pub width: u32,
    pub height: u32,
    pub alpha: Vec<u8>,
    pub intensity: Option<Vec<u8>>,
    /// Baseline row planted by generators that know it (the stub does);
    /// estimation code must not read it.
    pub known_baseline: Option<u32>,
}

impl InkImage {
    pub fn blank(width: u32, height: u32) -> InkImage {
        assert!(width > 0 && height > 0, "ink image dimensions must be positive");
        InkImage {
            width,
            height,
            alpha: vec![0; (width * height) as usize],
            intensity: None,
            known_baseline: None,
        }
    }

    pub fn alpha_at(&self, x: u32, y: u32) -> u8 {
        self.alpha[(y * self.width + x) as usize]
    }

    pub fn set_alpha(&mut self, x: u32, y: u32, value: u8) {
        self.alpha[(y * self.width + x) as usize] = value;
    }

    /// Columns holding any ink above `tau`.
    pub fn support(&self, tau: u8) -> Vec<bool> {
        let mut cols = vec![false; self.width as usize];
        for y in 0..self.height {
            for x in 0..self.width {
                if self.alpha_at(x, y) > tau {
                    cols[x as usize] = true;
                }
            }
        }
        cols
    }

    /// Expand to an RGBA overlay in the given ink color, alpha from the ink.
    pub fn to_rgba(&self, color: [u8; 3]) -> image::RgbaImage {
        let mut img = image::RgbaImage::new(self.width, self.height);
        for y in 0..self.height {
            for x in 0..self.width {
                let a = self.alpha_at(x, y);
                let v = self
                    .intensity
                    .as_ref()
                    .map(|i| i[(y * self.width + x) as usize])
                    .unwrap_or(255);
                // Darker intensity pulls the color toward black.
                let shade = |c: u8| ((c as u32 * v as u32) / 255) as u8;
                img.put_pixel(x, y, image::Rgba([shade(color[0]), shade(color[1]), shade(color[2]), a]));
            }
        }
        img
    }
}

/// A span of handwritten text anchored to a document element.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HandwritingRegion {
    pub element: usize,
    pub author_id: u32,
    /// Resolved generator style; None until an author mapping runs.
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub writer_id: Option<u32>,
    pub text: String,
    pub signature: bool,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub region: Option<PxBox>,
    #[serde(skip_serializing_if = "Vec::is_empty", default)]
    pub word_boxes: Vec<PxBox>,
}

/// Split a word into k = ceil(len/6) contiguous segments whose lengths
/// differ by at most one, longer segments first.
pub fn segment_word(text: &str) -> Result<Vec<String>> {
    if text.is_empty() {
        return Err(Error::EmptyInput("segment_word text"));
    }
    if text.chars().any(char::is_whitespace) {
        return Err(Error::Other(format!(
            "segment_word expects a single word, got {text:?}"
        )));
    }
    let chars: Vec<char> = text.chars().collect();
    let len = chars.len();
    if len <= MAX_SEGMENT_CHARS {
        return Ok(vec![text.to_string()]);
    }
    let k = len.div_ceil(MAX_SEGMENT_CHARS);
    let base = len / k;
    let longer = len % k;
    let mut out = Vec::with_capacity(k);
    let mut pos = 0;
    for i in 0..k {
        let take = if i < longer { base + 1 } else { base };
        out.push(chars[pos..pos + take].iter().collect());
        pos += take;
    }
    Ok(out)
}

/// Percentile baseline estimation: per column with ink above `tau`, take the
/// lowest inked row; the baseline is the p-th percentile of those rows
/// (linear interpolation, then nearest-row rounding).
pub fn estimate_baseline(ink: &InkImage, tau: u8, p: f64) -> Result<u32> {
    let mut bottoms: Vec<u32> = Vec::new();
    for x in 0..ink.width {
        let mut bottom = None;
        for y in 0..ink.height {
            if ink.alpha_at(x, y) > tau {
                bottom = Some(y);
            }
        }
        if let Some(b) = bottom {
            bottoms.push(b);
        }
    }
    if bottoms.is_empty() {
        return Err(Error::EmptyInk);
    }
    bottoms.sort_unstable();
    Ok(percentile_linear(&bottoms, p).round() as u32)
}

/// Linear-interpolated percentile over sorted values.
fn percentile_linear(sorted: &[u32], p: f64) -> f64 {
    let n = sorted.len();
    if n == 1 {
        return sorted[0] as f64;
    }
    let idx = (n - 1) as f64 * (p / 100.0).clamp(0.0, 1.0);
    let lo = idx.floor() as usize;
    let hi = idx.ceil() as usize;
    let frac = idx - lo as f64;
    sorted[lo] as f64 + (sorted[hi] as f64 - sorted[lo] as f64) * frac
}

/// Style-conditioned ink generation. Implementations must emit
/// canonical-size images and be deterministic in (text, writer, seed).
pub trait WordGenerator: Send + Sync {
    fn name(&self) -> &'static str;

    /// Writer style ids this generator can condition on.
    fn writers(&self) -> &[u32];

    fn generate(&self, text: &str, writer_id: u32, seed: u64) -> Result<InkImage>;
}

/// Generate one word segment, checking the writer id against the backend's
/// style set first.
pub fn generate_word(
    backend: &dyn WordGenerator,
    text: &str,
    writer_id: u32,
    seed: u64,
) -> Result<InkImage> {
    if !backend.writers().contains(&writer_id) {
        return Err(Error::UnknownWriter(writer_id));
    }
    backend.generate(text, writer_id, seed)
}

/// Map an author to a writer style: stable hash of (document id, author id)
/// into the retained writer set, so the same author keeps one style
/// throughout a document.
pub fn assign_writer(doc_id: &str, author_id: u32, writers: &[u32]) -> Result<u32> {
    if writers.is_empty() {
        return Err(Error::EmptyInput("writer set"));
    }
    let mut bytes = Vec::with_capacity(doc_id.len() + 5);
    bytes.extend_from_slice(doc_id.as_bytes());
    bytes.push(0);
    bytes.extend_from_slice(&author_id.to_le_bytes());
    let h = fnv1a64(&bytes);
    Ok(writers[(h % writers.len() as u64) as usize])
}

/// Procedural generator used by tests: sinusoid-modulated strokes sitting
/// exactly on a writer-dependent baseline, descenders below it for gjpqy.
/// Deterministic in (text, writer, seed) and fast enough for property tests.
pub struct StubWordGenerator {
    writers: Vec<u32>,
}

impl Default for StubWordGenerator {
    fn default() -> Self {
        StubWordGenerator { writers: (1..=diffusion::RETAINED_WRITERS).collect() }
    }
}

impl StubWordGenerator {
    pub fn new() -> Self {
        StubWordGenerator::default()
    }

    pub fn with_writers(writers: Vec<u32>) -> Self {
        StubWordGenerator { writers }
    }

    fn baseline_for(writer_id: u32) -> u32 {
        88 + 2 * (writer_id % 5)
    }
}

const DESCENDER_CHARS: &str = "gjpqy";

impl WordGenerator for StubWordGenerator {
    fn name(&self) -> &'static str {
        "stub"
    }

    fn writers(&self) -> &[u32] {
        &self.writers
    }

    fn generate(&self, text: &str, writer_id: u32, seed: u64) -> Result<InkImage> {
        if text.is_empty() {
            return Err(Error::EmptyInput("handwriting text"));
        }
        let mut ink = InkImage::blank(CANONICAL_WIDTH, CANONICAL_HEIGHT);
        let mut intensity = vec![0u8; (CANONICAL_WIDTH * CANONICAL_HEIGHT) as usize];
        let baseline = Self::baseline_for(writer_id);

        let style_seed = rng::derive_seed(seed ^ fnv1a64(text.as_bytes()), writer_id as u64);
        let mut r = rng::stream_rng(style_seed, 0x686e_6472);

        let chars: Vec<char> = text.chars().collect();
        let cell = (CANONICAL_WIDTH as usize / chars.len().max(1)).max(2) as u32;
        for (i, c) in chars.iter().enumerate() {
            let x0 = i as u32 * cell;
            if x0 >= CANONICAL_WIDTH {
                break;
            }
            // Leave a small gap at the right of each cell.
            let x1 = (x0 + cell * 9 / 10).min(CANONICAL_WIDTH);
            let amp: f64 = r.gen_range(20.0..48.0);
            let freq: f64 = r.gen_range(0.05..0.20);
            let phase: f64 = r.gen_range(0.0..std::f64::consts::TAU);
            let dark: u8 = r.gen_range(200..=255);
            let descender = DESCENDER_CHARS.contains(*c);
            let desc_depth: u32 = if descender { r.gen_range(12..=24) } else { 0 };
            for x in x0..x1 {
                let t = x as f64;
                let h = amp * (0.3 + 0.7 * (freq * t + phase).sin().abs());
                let top = baseline.saturating_sub(h.round() as u32);
                for y in top..=baseline {
                    ink.set_alpha(x, y, 255);
                    intensity[(y * CANONICAL_WIDTH + x) as usize] = dark;
                }
                // Descender on the middle stretch of the cell only.
                if descender {
                    let mid0 = x0 + (x1 - x0) * 3 / 10;
                    let mid1 = x0 + (x1 - x0) * 7 / 10;
                    if x >= mid0 && x < mid1 {
                        let bottom = (baseline + desc_depth).min(CANONICAL_HEIGHT - 1);
                        for y in baseline..=bottom {
                            ink.set_alpha(x, y, 255);
                            intensity[(y * CANONICAL_WIDTH + x) as usize] = dark;
                        }
                    }
                }
            }
        }
        ink.intensity = Some(intensity);
        ink.known_baseline = Some(baseline);
        Ok(ink)
    }
}

/// Align segments on a common baseline (the max of their estimated
/// baselines) and butt them together horizontally with `spacing` px gaps.
pub fn compose_line(segments: &[InkImage], spacing: u32, tau: u8) -> Result<InkImage> {
    if segments.is_empty() {
        return Err(Error::EmptyInput("compose_line segments"));
    }
    let baselines: Vec<u32> = segments
        .iter()
        .map(|s| estimate_baseline(s, tau, 50.0))
        .collect::<Result<_>>()?;
    let common = *baselines.iter().max().expect("non-empty");

    let width: u32 =
        segments.iter().map(|s| s.width).sum::<u32>() + spacing * (segments.len() as u32 - 1);
    let height: u32 = segments
        .iter()
        .zip(&baselines)
        .map(|(s, b)| common - b + s.height)
        .max()
        .expect("non-empty");

    let mut out = InkImage::blank(width, height);
    let mut intensity = vec![0u8; (width * height) as usize];
    let mut x_off = 0u32;
    for (seg, b) in segments.iter().zip(&baselines) {
        let y_off = common - b;
        for y in 0..seg.height {
            for x in 0..seg.width {
                let a = seg.alpha_at(x, y);
                if a == 0 {
                    continue;
                }
                let (tx, ty) = (x_off + x, y_off + y);
                out.set_alpha(tx, ty, a);
                let v = seg
                    .intensity
                    .as_ref()
                    .map(|i| i[(y * seg.width + x) as usize])
                    .unwrap_or(255);
                intensity[(ty * width + tx) as usize] = v;
            }
        }
        x_off += seg.width + spacing;
    }
    out.intensity = Some(intensity);
    out.known_baseline = Some(common);
    Ok(out)
}

/// Generate and compose a full text line: words split on whitespace, words
/// over six characters split into balanced segments, segments of one word
/// butted together, words separated by `spacing`.
pub fn render_text_line(
    backend: &dyn WordGenerator,
    text: &str,
    writer_id: u32,
    seed: u64,
    spacing: u32,
    tau: u8,
) -> Result<InkImage> {
    let words: Vec<&str> = text.split_whitespace().collect();
    if words.is_empty() {
        return Err(Error::EmptyInput("handwriting text"));
    }
    let mut word_inks = Vec::with_capacity(words.len());
    for (wi, word) in words.iter().enumerate() {
        let mut seg_inks = Vec::new();
        for (si, seg) in segment_word(word)?.into_iter().enumerate() {
            let seg_seed = rng::derive_seed(seed, ((wi as u64) << 20) | si as u64);
            seg_inks.push(generate_word(backend, &seg, writer_id, seg_seed)?);
        }
        word_inks.push(compose_line(&seg_inks, 0, tau)?);
    }
    compose_line(&word_inks, spacing, tau)
}

/// Ink cleanup chain applied after composition. Field defaults follow the
/// generation recipe; [`PostprocessParams::identity`] turns every stage off.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PostprocessParams {
    pub blur_radius_min: f64,
    pub blur_radius_max: f64,
    pub antialias_scale: f64,
    pub contrast: f64,
    pub ink_gamma: f64,
    pub noise_sigma: f64,
    pub unsharp_radius: f64,
    pub unsharp_percent: f64,
    pub unsharp_threshold: u8,
}

impl Default for PostprocessParams {
    fn default() -> Self {
        PostprocessParams {
            blur_radius_min: 0.35,
            blur_radius_max: 0.85,
            antialias_scale: 0.75,
            contrast: 1.02,
            ink_gamma: 0.98,
            noise_sigma: 0.35,
            unsharp_radius: 0.5,
            unsharp_percent: 30.0,
            unsharp_threshold: 2,
        }
    }
}

impl PostprocessParams {
    pub fn identity() -> Self {
        PostprocessParams {
            blur_radius_min: 0.0,
            blur_radius_max: 0.0,
            antialias_scale: 1.0,
            contrast: 1.0,
            ink_gamma: 1.0,
            noise_sigma: 0.0,
            unsharp_radius: 0.0,
            unsharp_percent: 0.0,
            unsharp_threshold: 0,
        }
    }
}

/// Apply the ink cleanup chain in order: Gaussian blur (radius drawn from
/// U(min,max)), downscale-upscale antialias, contrast, intensity gamma,
/// additive Gaussian noise, unsharp mask. Blur and antialias act on both
/// channels so coverage spreads with the ink; the tone stages touch
/// intensity only.
pub fn postprocess<R: Rng>(line: &InkImage, params: &PostprocessParams, rng: &mut R) -> InkImage {
    let w = line.width as usize;
    let h = line.height as usize;
    let mut alpha: Vec<f32> = line.alpha.iter().map(|v| *v as f32).collect();
    let mut intensity: Vec<f32> = match &line.intensity {
        Some(i) => i.iter().map(|v| *v as f32).collect(),
        None => line.alpha.iter().map(|a| if *a > 0 { 255.0 } else { 0.0 }).collect(),
    };

    if params.blur_radius_max > 0.0 {
        let radius = if params.blur_radius_max > params.blur_radius_min {
            rng.gen_range(params.blur_radius_min..params.blur_radius_max)
        } else {
            params.blur_radius_max
        };
        gaussian_blur(&mut alpha, w, h, radius);
        gaussian_blur(&mut intensity, w, h, radius);
    }

    if params.antialias_scale > 0.0 && (params.antialias_scale - 1.0).abs() > f64::EPSILON {
        resample_roundtrip(&mut alpha, w, h, params.antialias_scale);
        resample_roundtrip(&mut intensity, w, h, params.antialias_scale);
    }

    if (params.contrast - 1.0).abs() > f64::EPSILON {
        let c = params.contrast as f32;
        for v in intensity.iter_mut() {
            *v = (*v - 127.5) * c + 127.5;
        }
    }

    if (params.ink_gamma - 1.0).abs() > f64::EPSILON {
        let g = params.ink_gamma as f32;
        for v in intensity.iter_mut() {
            *v = 255.0 * (v.clamp(0.0, 255.0) / 255.0).powf(g);
        }
    }

    if params.noise_sigma > 0.0 {
        let normal = Normal::new(0.0, params.noise_sigma).expect("valid sigma");
        for v in intensity.iter_mut() {
            *v += normal.sample(rng) as f32;
        }
    }

    if params.unsharp_percent > 0.0 && params.unsharp_radius > 0.0 {
        let mut blurred = intensity.clone();
        gaussian_blur(&mut blurred, w, h, params.unsharp_radius);
        let amount = (params.unsharp_percent / 100.0) as f32;
        let threshold = params.unsharp_threshold as f32;
        for (v, b) in intensity.iter_mut().zip(&blurred) {
            let diff = *v - b;
            if diff.abs() >= threshold {
                *v += amount * diff;
            }
        }
    }

    InkImage {
        width: line.width,
        height: line.height,
        alpha: alpha.iter().map(|v| v.clamp(0.0, 255.0).round() as u8).collect(),
        intensity: Some(intensity.iter().map(|v| v.clamp(0.0, 255.0).round() as u8).collect()),
        known_baseline: line.known_baseline,
    }
}

/// Separable Gaussian blur; radius is the standard deviation in px.
fn gaussian_blur(buf: &mut [f32], w: usize, h: usize, radius: f64) {
    if radius <= 0.0 {
        return;
    }
    let half = (radius * 3.0).ceil() as i64;
    let mut kernel = Vec::with_capacity((2 * half + 1) as usize);
    for i in -half..=half {
        kernel.push((-((i * i) as f64) / (2.0 * radius * radius)).exp() as f32);
    }
    let sum: f32 = kernel.iter().sum();
    for k in kernel.iter_mut() {
        *k /= sum;
    }

    let mut tmp = vec![0.0f32; buf.len()];
    for y in 0..h {
        for x in 0..w {
            let mut acc = 0.0;
            for (ki, k) in kernel.iter().enumerate() {
                let sx = (x as i64 + ki as i64 - half).clamp(0, w as i64 - 1) as usize;
                acc += k * buf[y * w + sx];
            }
            tmp[y * w + x] = acc;
        }
    }
    for y in 0..h {
        for x in 0..w {
            let mut acc = 0.0;
            for (ki, k) in kernel.iter().enumerate() {
                let sy = (y as i64 + ki as i64 - half).clamp(0, h as i64 - 1) as usize;
                acc += k * tmp[sy * w + x];
            }
            buf[y * w + x] = acc;
        }
    }
}

/// Downscale by `scale` then back up with bilinear filtering.
fn resample_roundtrip(buf: &mut [f32], w: usize, h: usize, scale: f64) {
    let dw = ((w as f64 * scale).round() as u32).max(1);
    let dh = ((h as f64 * scale).round() as u32).max(1);
    let src: image::ImageBuffer<image::Luma<f32>, Vec<f32>> =
        image::ImageBuffer::from_raw(w as u32, h as u32, buf.to_vec()).expect("buffer size");
    let down = image::imageops::resize(&src, dw, dh, image::imageops::FilterType::Triangle);
    let up = image::imageops::resize(&down, w as u32, h as u32, image::imageops::FilterType::Triangle);
    buf.copy_from_slice(up.as_raw());
}

/// A handwriting overlay ready for compositing.
#[derive(Debug, Clone)]
pub struct PlacedOverlay {
    pub image: image::RgbaImage,
    pub target: PxBox,
}

const INK_COLOR: [u8; 3] = [28, 28, 48];

/// Scale a composed line to fit the union of the region's word boxes
/// (aspect preserved), center it there, jitter by up to `jitter` px per
/// axis, and clamp the result to the page.
pub fn place_line<R: Rng>(
    line: &InkImage,
    region: &HandwritingRegion,
    page: PageSize,
    jitter: i64,
    rng: &mut R,
) -> Result<PlacedOverlay> {
    let union = region
        .word_boxes
        .iter()
        .copied()
        .reduce(|a, b| a.union(&b))
        .ok_or(Error::EmptyInput("handwriting region word boxes"))?;
    if union.width() <= 0 || union.height() <= 0 {
        return Err(Error::Other(format!(
            "element {}: degenerate handwriting target {union:?}",
            region.element
        )));
    }

    let scale = (union.width() as f64 / line.width as f64)
        .min(union.height() as f64 / line.height as f64);
    let tw = ((line.width as f64 * scale).round() as i64).max(1);
    let th = ((line.height as f64 * scale).round() as i64).max(1);

    let mut left = union.left + (union.width() - tw) / 2;
    let mut top = union.top + (union.height() - th) / 2;
    if jitter > 0 {
        left += rng.gen_range(-jitter..=jitter);
        top += rng.gen_range(-jitter..=jitter);
    }

    let page_box = page.as_box();
    left = left.clamp(page_box.left, (page_box.right - tw).max(page_box.left));
    top = top.clamp(page_box.top, (page_box.bottom - th).max(page_box.top));
    let target = PxBox::new(left, top, (left + tw).min(page_box.right), (top + th).min(page_box.bottom));

    let rgba = line.to_rgba(INK_COLOR);
    let scaled = image::imageops::resize(
        &rgba,
        target.width().max(1) as u32,
        target.height().max(1) as u32,
        image::imageops::FilterType::Triangle,
    );
    Ok(PlacedOverlay { image: scaled, target })
}
