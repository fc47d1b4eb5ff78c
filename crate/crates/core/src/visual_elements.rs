//! Visual element handling: placeholder type canonicalization, procedural
//! stamp and barcode rendering, asset bank sampling, overlay compositing,
//! and layout-analysis ground truth augmentation for placed elements.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::Error;
use crate::font;
use crate::geometry::PxBox;
use crate::synthesis::LayoutRegion;
use crate::Result;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CanonicalType {
    Stamp,
    Logo,
    Figure,
    Barcode,
    Photo,
}

impl CanonicalType {
    pub const ALL: [CanonicalType; 5] = [
        CanonicalType::Stamp,
        CanonicalType::Logo,
        CanonicalType::Figure,
        CanonicalType::Barcode,
        CanonicalType::Photo,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            CanonicalType::Stamp => "stamp",
            CanonicalType::Logo => "logo",
            CanonicalType::Figure => "figure",
            CanonicalType::Barcode => "barcode",
            CanonicalType::Photo => "photo",
        }
    }
}

impl fmt::Display for CanonicalType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for CanonicalType {
    type Err = Error;

    fn from_str(s: &str) -> Result<CanonicalType> {
        map_type(s).ok_or_else(|| Error::UnsupportedElementType(s.to_string()))
    }
}

/// A `data-placeholder` element awaiting replacement by a rendered visual.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VisualElementPlaceholder {
    pub element: usize,
    pub raw_type: String,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub canonical_type: Option<CanonicalType>,
    pub content: String,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub bbox: Option<PxBox>,
    pub z_order: i32,
}

/// Fold raw placeholder types onto the canonical set. Case-insensitive;
/// canonical names map to themselves, so the mapping is idempotent. None
/// means the placeholder is dropped (the document survives).
pub fn map_type(raw: &str) -> Option<CanonicalType> {
    match raw.trim().to_ascii_lowercase().as_str() {
        "stamp" | "seal" => Some(CanonicalType::Stamp),
        "logo" => Some(CanonicalType::Logo),
        "figure" | "chart" | "diagram" | "plot" | "graph" | "illustration" | "infographic" => {
            Some(CanonicalType::Figure)
        }
        "barcode" => Some(CanonicalType::Barcode),
        "photo" | "image" => Some(CanonicalType::Photo),
        _ => None,
    }
}

/// Resolve a placeholder's canonical type in place. Stamps are floated to
/// the template convention of z-order ten or higher so they composite over
/// text. Returns false when the raw type is unmappable.
pub fn canonicalize_placeholder(p: &mut VisualElementPlaceholder) -> bool {
    match map_type(&p.raw_type) {
        Some(t) => {
            if t == CanonicalType::Stamp && p.z_order < 10 {
                p.z_order = 10;
            }
            p.canonical_type = Some(t);
            true
        }
        None => false,
    }
}

const STAMP_COLORS: [[u8; 3]; 3] = [
    [178, 34, 34],  // red
    [39, 64, 167],  // blue
    [112, 41, 153], // violet
];

/// Render a stamp: circular or rounded-rectangle outline (rng-chosen), the
/// content text fitted inside, one ink color from the red/blue/violet
/// palette, and a rotation drawn from U(-15, +15) degrees. Transparent
/// background; empty content leaves a border-only stamp.
pub fn render_stamp<R: Rng>(content: &str, width: u32, height: u32, rng: &mut R) -> image::RgbaImage {
    let width = width.max(1);
    let height = height.max(1);
    let color = STAMP_COLORS[rng.gen_range(0..STAMP_COLORS.len())];
    let circular = rng.gen_bool(0.5);
    let angle_deg: f64 = rng.gen_range(-15.0..15.0);

    let mut canvas = image::RgbaImage::new(width, height);
    let ink = image::Rgba([color[0], color[1], color[2], 255]);
    let (w, h) = (width as f64, height as f64);
    let (cx, cy) = (w / 2.0, h / 2.0);
    let margin = (w.min(h) * 0.06).max(2.0);
    let thickness = (w.min(h) / 14.0).max(2.0);

    if circular {
        let outer = w.min(h) / 2.0 - margin;
        let inner = (outer - thickness).max(0.0);
        for y in 0..height {
            for x in 0..width {
                let d = ((x as f64 + 0.5 - cx).powi(2) + (y as f64 + 0.5 - cy).powi(2)).sqrt();
                if d <= outer && d >= inner {
                    canvas.put_pixel(x, y, ink);
                }
            }
        }
    } else {
        let (l, t) = (margin, margin);
        let (r, b) = (w - margin, h - margin);
        let radius = (w.min(h) / 6.0).min((r - l) / 2.0).min((b - t) / 2.0);
        for y in 0..height {
            for x in 0..width {
                let px = x as f64 + 0.5;
                let py = y as f64 + 0.5;
                let d_out = rounded_rect_distance(px, py, l, t, r, b, radius);
                if d_out <= 0.0 && d_out > -thickness {
                    canvas.put_pixel(x, y, ink);
                }
            }
        }
    }

    if !content.trim().is_empty() {
        let text = content.trim().to_ascii_uppercase();
        // Text lives inside the border; circles leave extra slack for the
        // curved edge.
        let inset = margin + thickness + 2.0;
        let (avail_w, avail_h) = if circular {
            let side = (w.min(h) / 2.0 - inset) * std::f64::consts::SQRT_2;
            (side, side)
        } else {
            (w - 2.0 * inset, h - 2.0 * inset)
        };
        draw_fitted_text(&mut canvas, &text, avail_w.max(4.0), avail_h.max(4.0), ink);
    }

    rotate_nearest(&canvas, angle_deg.to_radians())
}

/// Signed distance to a rounded-rect border: negative inside.
fn rounded_rect_distance(px: f64, py: f64, l: f64, t: f64, r: f64, b: f64, radius: f64) -> f64 {
    let qx = (l + radius - px).max(px - (r - radius)).max(0.0);
    let qy = (t + radius - py).max(py - (b - radius)).max(0.0);
    let inside_x = px.clamp(l, r) == px;
    let inside_y = py.clamp(t, b) == py;
    if !inside_x || !inside_y {
        return 1.0;
    }
    (qx * qx + qy * qy).sqrt() - radius
        + if qx == 0.0 && qy == 0.0 {
            // Deep interior: distance to the nearest straight edge.
            radius - (px - l).min(r - px).min(py - t).min(b - py)
        } else {
            0.0
        }
}

/// Wrap and center text at the largest glyph scale that fits the box.
fn draw_fitted_text(
    canvas: &mut image::RgbaImage,
    text: &str,
    avail_w: f64,
    avail_h: f64,
    ink: image::Rgba<u8>,
) {
    let words: Vec<&str> = text.split_whitespace().collect();
    if words.is_empty() {
        return;
    }
    let (cw, ch) = (canvas.width() as i64, canvas.height() as i64);
    for scale in (1..=6u32).rev() {
        let char_w = (font::GLYPH_W + 1) * scale;
        let line_h = (font::GLYPH_H + 2) * scale;
        let max_chars = (avail_w / char_w as f64) as usize;
        if max_chars == 0 {
            continue;
        }
        let lines = wrap_words(&words, max_chars);
        let fits_w = lines.iter().all(|l| l.chars().count() <= max_chars);
        let fits_h = (lines.len() as f64) * line_h as f64 <= avail_h;
        if (fits_w && fits_h) || scale == 1 {
            let block_h = lines.len() as i64 * line_h as i64;
            let mut y = (ch - block_h) / 2;
            for line in &lines {
                let line_w = line.chars().count() as i64 * char_w as i64;
                let x = (cw - line_w) / 2;
                font::draw_text(canvas, line, x, y, scale, char_w as i64, ink);
                y += line_h as i64;
            }
            return;
        }
    }
}

fn wrap_words(words: &[&str], max_chars: usize) -> Vec<String> {
    let mut lines: Vec<String> = Vec::new();
    for word in words {
        match lines.last_mut() {
            Some(line) if line.chars().count() + 1 + word.chars().count() <= max_chars => {
                line.push(' ');
                line.push_str(word);
            }
            _ => lines.push((*word).to_string()),
        }
    }
    lines
}

/// Rotate about the image center, nearest-neighbor, same output size.
fn rotate_nearest(src: &image::RgbaImage, theta: f64) -> image::RgbaImage {
    let (w, h) = (src.width(), src.height());
    let (cx, cy) = (w as f64 / 2.0, h as f64 / 2.0);
    let (sin, cos) = theta.sin_cos();
    let mut out = image::RgbaImage::new(w, h);
    for y in 0..h {
        for x in 0..w {
            let dx = x as f64 + 0.5 - cx;
            let dy = y as f64 + 0.5 - cy;
            let sx = cx + cos * dx + sin * dy;
            let sy = cy - sin * dx + cos * dy;
            let (sx, sy) = (sx.floor() as i64, sy.floor() as i64);
            if sx >= 0 && sx < w as i64 && sy >= 0 && sy < h as i64 {
                out.put_pixel(x, y, *src.get_pixel(sx as u32, sy as u32));
            }
        }
    }
    out
}

/// Code 128 bar/space widths, indexed by symbol value. Six elements summing
/// to eleven modules each; the stop pattern (value 106) has a seventh
/// element and sums to thirteen.
const CODE128_PATTERNS: [[u8; 6]; 106] = [
    [2, 1, 2, 2, 2, 2], [2, 2, 2, 1, 2, 2], [2, 2, 2, 2, 2, 1], [1, 2, 1, 2, 2, 3],
    [1, 2, 1, 3, 2, 2], [1, 3, 1, 2, 2, 2], [1, 2, 2, 2, 1, 3], [1, 2, 2, 3, 1, 2],
    [1, 3, 2, 2, 1, 2], [2, 2, 1, 2, 1, 3], [2, 2, 1, 3, 1, 2], [2, 3, 1, 2, 1, 2],
    [1, 1, 2, 2, 3, 2], [1, 2, 2, 1, 3, 2], [1, 2, 2, 2, 3, 1], [1, 1, 3, 2, 2, 2],
    [1, 2, 3, 1, 2, 2], [1, 2, 3, 2, 2, 1], [2, 2, 3, 2, 1, 1], [2, 2, 1, 1, 3, 2],
    [2, 2, 1, 2, 3, 1], [2, 1, 3, 2, 1, 2], [2, 2, 3, 1, 1, 2], [3, 1, 2, 1, 3, 1],
    [3, 1, 1, 2, 2, 2], [3, 2, 1, 1, 2, 2], [3, 2, 1, 2, 2, 1], [3, 1, 2, 2, 1, 2],
    [3, 2, 2, 1, 1, 2], [3, 2, 2, 2, 1, 1], [2, 1, 2, 1, 2, 3], [2, 1, 2, 3, 2, 1],
    [2, 3, 2, 1, 2, 1], [1, 1, 1, 3, 2, 3], [1, 3, 1, 1, 2, 3], [1, 3, 1, 3, 2, 1],
    [1, 1, 2, 3, 1, 3], [1, 3, 2, 1, 1, 3], [1, 3, 2, 3, 1, 1], [2, 1, 1, 3, 1, 3],
    [2, 3, 1, 1, 1, 3], [2, 3, 1, 3, 1, 1], [1, 1, 2, 1, 3, 3], [1, 1, 2, 3, 3, 1],
    [1, 3, 2, 1, 3, 1], [1, 1, 3, 1, 2, 3], [1, 1, 3, 3, 2, 1], [1, 3, 3, 1, 2, 1],
    [3, 1, 3, 1, 2, 1], [2, 1, 1, 3, 3, 1], [2, 3, 1, 1, 3, 1], [2, 1, 3, 1, 1, 3],
    [2, 1, 3, 3, 1, 1], [2, 1, 3, 1, 3, 1], [3, 1, 1, 1, 2, 3], [3, 1, 1, 3, 2, 1],
    [3, 3, 1, 1, 2, 1], [3, 1, 2, 1, 1, 3], [3, 1, 2, 3, 1, 1], [3, 3, 2, 1, 1, 1],
    [3, 1, 4, 1, 1, 1], [2, 2, 1, 4, 1, 1], [4, 3, 1, 1, 1, 1], [1, 1, 1, 2, 2, 4],
    [1, 1, 1, 4, 2, 2], [1, 2, 1, 1, 2, 4], [1, 2, 1, 4, 2, 1], [1, 4, 1, 1, 2, 2],
    [1, 4, 1, 2, 2, 1], [1, 1, 2, 2, 1, 4], [1, 1, 2, 4, 1, 2], [1, 2, 2, 1, 1, 4],
    [1, 2, 2, 4, 1, 1], [1, 4, 2, 1, 1, 2], [1, 4, 2, 2, 1, 1], [2, 4, 1, 2, 1, 1],
    [2, 2, 1, 1, 1, 4], [4, 1, 3, 1, 1, 1], [2, 4, 1, 1, 1, 2], [1, 3, 4, 1, 1, 1],
    [1, 1, 1, 2, 4, 2], [1, 2, 1, 1, 4, 2], [1, 2, 1, 2, 4, 1], [1, 1, 4, 2, 1, 2],
    [1, 2, 4, 1, 1, 2], [1, 2, 4, 2, 1, 1], [4, 1, 1, 2, 1, 2], [4, 2, 1, 1, 1, 2],
    [4, 2, 1, 2, 1, 1], [2, 1, 2, 1, 4, 1], [2, 1, 4, 1, 2, 1], [4, 1, 2, 1, 2, 1],
    [1, 1, 1, 1, 4, 3], [1, 1, 1, 3, 4, 1], [1, 3, 1, 1, 4, 1], [1, 1, 4, 1, 1, 3],
    [1, 1, 4, 3, 1, 1], [4, 1, 1, 1, 1, 3], [4, 1, 1, 3, 1, 1], [1, 1, 3, 1, 4, 1],
    [1, 1, 4, 1, 3, 1], [3, 1, 1, 1, 4, 1], [4, 1, 1, 1, 3, 1], [2, 1, 1, 4, 1, 2],
    [2, 1, 1, 2, 1, 4], [2, 1, 1, 2, 3, 2],
];

pub const CODE128_START_C: u32 = 105;
pub const CODE128_STOP: u32 = 106;
const CODE128_STOP_PATTERN: [u8; 7] = [2, 3, 3, 1, 1, 1, 2];
/// Modules of blank space either side of the bars.
pub const QUIET_ZONE_MODULES: u32 = 10;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BarcodeSymbols {
    /// Start symbol followed by one value per digit pair.
    pub values: Vec<u32>,
    pub checksum: u32,
}

impl BarcodeSymbols {
    /// The full printed sequence: values, checksum, stop.
    pub fn sequence(&self) -> Vec<u32> {
        let mut seq = self.values.clone();
        seq.push(self.checksum);
        seq.push(CODE128_STOP);
        seq
    }
}

/// Encode a digit string as Code 128 subset C: start code 105, one symbol
/// per digit pair, modulo-103 weighted checksum. Odd-length input gets a
/// leading zero (subset C only encodes pairs).
pub fn encode_digits(digits: &str) -> Result<BarcodeSymbols> {
    if digits.is_empty() || !digits.bytes().all(|b| b.is_ascii_digit()) {
        return Err(Error::BadBarcodePayload(digits.to_string()));
    }
    let padded = if digits.len().is_multiple_of(2) {
        digits.to_string()
    } else {
        format!("0{digits}")
    };
    let mut values = vec![CODE128_START_C];
    for pair in padded.as_bytes().chunks(2) {
        values.push(((pair[0] - b'0') as u32) * 10 + (pair[1] - b'0') as u32);
    }
    let mut checksum = values[0];
    for (i, v) in values[1..].iter().enumerate() {
        checksum += v * (i as u32 + 1);
    }
    Ok(BarcodeSymbols { values, checksum: checksum % 103 })
}

#[derive(Debug, Clone)]
pub struct BarcodeRender {
    pub image: image::RgbaImage,
    /// Digits actually encoded (the fallback value when `fallback` is set).
    pub encoded: String,
    /// True when non-numeric content forced a random numeric payload.
    pub fallback: bool,
}

/// Render barcode bars for the content. Numeric content is a pure function
/// of its digits; anything else is replaced by a twelve-digit value drawn
/// from the rng and flagged.
pub fn render_barcode<R: Rng>(
    content: &str,
    width: u32,
    height: u32,
    rng: &mut R,
) -> BarcodeRender {
    let trimmed = content.trim();
    let numeric = !trimmed.is_empty() && trimmed.bytes().all(|b| b.is_ascii_digit());
    let (digits, fallback) = if numeric {
        (trimmed.to_string(), false)
    } else {
        let digits: String = (0..12).map(|_| char::from(b'0' + rng.gen_range(0..10))).collect();
        (digits, true)
    };
    let symbols = encode_digits(&digits).expect("digits are numeric by construction");

    let width = width.max(1);
    let height = height.max(1);
    let seq = symbols.sequence();
    let data_modules: u32 = seq
        .iter()
        .map(|v| if *v == CODE128_STOP { 13 } else { 11 })
        .sum();
    let total_modules = data_modules + 2 * QUIET_ZONE_MODULES;
    let module_px = (width / total_modules).max(1);

    let mut image = image::RgbaImage::new(width, height);
    let bar_top = (height / 12).min(8);
    let bar_bottom = height - bar_top;
    let black = image::Rgba([0, 0, 0, 255]);

    let mut x = QUIET_ZONE_MODULES * module_px;
    // Center when the box is wider than the printed code.
    let printed = total_modules * module_px;
    if printed < width {
        x += (width - printed) / 2;
    }
    for v in &seq {
        let widths: &[u8] = if *v == CODE128_STOP {
            &CODE128_STOP_PATTERN
        } else {
            &CODE128_PATTERNS[*v as usize]
        };
        for (i, wmod) in widths.iter().enumerate() {
            let run = *wmod as u32 * module_px;
            if i % 2 == 0 {
                for bx in x..(x + run).min(width) {
                    for by in bar_top..bar_bottom {
                        image.put_pixel(bx, by, black);
                    }
                }
            }
            x += run;
        }
    }
    BarcodeRender { image, encoded: digits, fallback }
}

/// Per-type asset directories for figures, logos, and photos.
#[derive(Debug, Clone, Default)]
pub struct AssetBank {
    dirs: BTreeMap<CanonicalType, PathBuf>,
}

impl AssetBank {
    pub fn new() -> AssetBank {
        AssetBank::default()
    }

    pub fn with_dir(mut self, ty: CanonicalType, dir: impl Into<PathBuf>) -> AssetBank {
        self.dirs.insert(ty, dir.into());
        self
    }

    /// Uniform draw over the image files in the type's directory, sorted by
    /// name so the same rng stream picks the same file on every run.
    pub fn pick_asset<R: Rng>(&self, ty: CanonicalType, rng: &mut R) -> Result<PathBuf> {
        let dir = self
            .dirs
            .get(&ty)
            .ok_or_else(|| Error::EmptyAssetBank(ty.to_string()))?;
        let mut files: Vec<PathBuf> = std::fs::read_dir(dir)?
            .filter_map(|e| e.ok())
            .map(|e| e.path())
            .filter(|p| {
                matches!(
                    p.extension().and_then(|e| e.to_str()).map(str::to_ascii_lowercase).as_deref(),
                    Some("png" | "jpg" | "jpeg" | "bmp" | "webp")
                )
            })
            .collect();
        if files.is_empty() {
            return Err(Error::EmptyAssetBank(ty.to_string()));
        }
        files.sort();
        Ok(files.swap_remove(rng.gen_range(0..files.len())))
    }
}

/// Load an asset and scale it to the target box dimensions.
pub fn load_asset(path: &Path, width: u32, height: u32) -> Result<image::RgbaImage> {
    let img = image::open(path)?.into_rgba8();
    Ok(image::imageops::resize(
        &img,
        width.max(1),
        height.max(1),
        image::imageops::FilterType::Triangle,
    ))
}

/// An overlay ready to composite at its target box.
#[derive(Debug, Clone)]
pub struct Overlay {
    pub image: image::RgbaImage,
    pub target: PxBox,
    pub z_order: i32,
}

/// Alpha-composite overlays onto the page in ascending z-order (ties keep
/// input order). Page dimensions never change; overlay pixels outside the
/// page are dropped.
pub fn composite(page: &mut image::RgbaImage, overlays: &[Overlay]) {
    let mut order: Vec<usize> = (0..overlays.len()).collect();
    order.sort_by_key(|i| overlays[*i].z_order);
    let (pw, ph) = (page.width() as i64, page.height() as i64);
    for idx in order {
        let ov = &overlays[idx];
        for y in ov.target.top.max(0)..ov.target.bottom.min(ph) {
            for x in ov.target.left.max(0)..ov.target.right.min(pw) {
                let sx = (x - ov.target.left) as u32;
                let sy = (y - ov.target.top) as u32;
                if sx >= ov.image.width() || sy >= ov.image.height() {
                    continue;
                }
                let src = ov.image.get_pixel(sx, sy).0;
                if src[3] == 0 {
                    continue;
                }
                let dst = page.get_pixel(x as u32, y as u32).0;
                let a = src[3] as u32;
                let blend = |s: u8, d: u8| ((s as u32 * a + d as u32 * (255 - a)) / 255) as u8;
                page.put_pixel(
                    x as u32,
                    y as u32,
                    image::Rgba([
                        blend(src[0], dst[0]),
                        blend(src[1], dst[1]),
                        blend(src[2], dst[2]),
                        src[3].max(dst[3]),
                    ]),
                );
            }
        }
    }
}

/// A visual element that has been rendered into the page.
#[derive(Debug, Clone, PartialEq)]
pub struct PlacedElement {
    pub element: usize,
    pub canonical_type: CanonicalType,
    pub bbox: PxBox,
}

/// The label a dataset's layout vocabulary uses for pictures/figures.
pub fn figure_label_for<'a>(labels: impl IntoIterator<Item = &'a str>) -> Option<&'a str> {
    let mut picture = None;
    for label in labels {
        if label.eq_ignore_ascii_case("LE-FIGURE") {
            return Some(label);
        }
        if label.eq_ignore_ascii_case("LE-PICTURE") {
            picture = Some(label);
        }
    }
    picture
}

/// Add a layout region for every placed figure, photo, or logo that no
/// existing figure-vocabulary region already covers (IoU >= 0.5). Stamps
/// and barcodes are not layout classes and stay unannotated.
pub fn augment_dla_gt(
    regions: &[LayoutRegion],
    placed: &[PlacedElement],
    figure_label: &str,
) -> Vec<LayoutRegion> {
    let mut out = regions.to_vec();
    for el in placed {
        if !matches!(
            el.canonical_type,
            CanonicalType::Figure | CanonicalType::Photo | CanonicalType::Logo
        ) {
            continue;
        }
        let covered = regions.iter().any(|r| {
            r.label.eq_ignore_ascii_case(figure_label)
                && r.bbox.map(|b| b.iou(&el.bbox) >= 0.5).unwrap_or(false)
        });
        if !covered {
            out.push(LayoutRegion {
                label: figure_label.to_string(),
                element: Some(el.element),
                bbox: Some(el.bbox),
            });
        }
    }
    out
}
