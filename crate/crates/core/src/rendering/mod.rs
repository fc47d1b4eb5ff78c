//! Rendering: HTML to page raster plus the element and word boxes that
//! anchor ground truth and handwriting placement.
//!
//! Two backends implement the contract. The deterministic test renderer
//! lays out a constrained HTML subset (stacked blocks, fixed-advance glyph
//! metrics) and is what CI exercises; the browser backend shells out to a
//! headless browser for full-fidelity runs.

pub mod browser;
pub mod style;
mod test_renderer;

pub use browser::BrowserRenderer;
pub use test_renderer::TestRenderer;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::Error;
use crate::geometry::{PageSize, PxBox};
use crate::synthesis::SynthesizedDocument;
use crate::Result;

/// One recognized or laid-out word.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WordBox {
    pub text: String,
    pub bbox: PxBox,
    /// Owning element id for renderer-produced words; None for OCR output.
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub element: Option<usize>,
}

/// Lossless page bitmap handed between rendering, enhancement, and OCR.
#[derive(Debug, Clone)]
pub struct PageRaster {
    pub image: image::RgbaImage,
    /// Sidecar text layer planted by the deterministic renderer (and
    /// extended by enhancement) so the fake OCR backend can return it.
    /// Production rasters carry None.
    pub sidecar_words: Option<Vec<WordBox>>,
}

impl PageRaster {
    pub fn size(&self) -> PageSize {
        PageSize::new(self.image.width(), self.image.height())
    }
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct RenderResult {
    pub page_count: u32,
    pub page_size: PageSize,
    /// Box per element id, for every element bearing a GT class,
    /// handwriting class, or placeholder attribute (zero-area boxes are
    /// absent by contract).
    pub element_boxes: BTreeMap<usize, PxBox>,
    pub word_boxes: Vec<WordBox>,
    #[serde(skip)]
    pub page_image: Option<PageRaster>,
    #[serde(skip)]
    pub pdf: Option<Vec<u8>>,
}

pub trait RenderBackend: Send + Sync {
    fn name(&self) -> &'static str;

    /// Content extent of the document in px, rounded up to whole pixels.
    fn measure_page(&self, html: &str) -> Result<PageSize>;

    /// Render at the given page size, producing the raster and all boxes.
    fn render(&self, html: &str, page: PageSize) -> Result<RenderResult>;
}

#[derive(Debug, Clone, PartialEq)]
pub struct OcrWord {
    pub text: String,
    pub bbox: PxBox,
    pub confidence: f32,
}

/// OCR contract: page raster in, recognized words out.
pub trait OcrBackend: Send + Sync {
    fn name(&self) -> &'static str;

    fn recognize(&self, raster: &PageRaster) -> Result<Vec<OcrWord>>;
}

/// Test OCR: returns the words planted in the raster's sidecar.
pub struct FakeOcr;

impl OcrBackend for FakeOcr {
    fn name(&self) -> &'static str {
        "fake-ocr"
    }

    fn recognize(&self, raster: &PageRaster) -> Result<Vec<OcrWord>> {
        let words = raster
            .sidecar_words
            .as_ref()
            .ok_or_else(|| Error::OcrFailed("raster carries no sidecar text".into()))?;
        Ok(words
            .iter()
            .map(|w| OcrWord { text: w.text.clone(), bbox: w.bbox, confidence: 0.99 })
            .collect())
    }
}

/// Word boxes for verification. Documents with handwriting or visual
/// overlays route through OCR (the typeset text layer no longer matches the
/// pixels); untouched documents use the render text layer directly.
pub fn extract_text_boxes(
    doc: &SynthesizedDocument,
    ocr: Option<&dyn OcrBackend>,
) -> Result<Vec<WordBox>> {
    let render = doc
        .render
        .as_ref()
        .ok_or_else(|| Error::RenderFailed("document not rendered".into()))?;
    let enhanced = !doc.handwriting_regions.is_empty()
        || doc.placeholders.iter().any(|p| p.bbox.is_some());
    if !enhanced {
        return Ok(render.word_boxes.clone());
    }
    let backend = ocr.ok_or_else(|| Error::OcrFailed("no OCR backend configured".into()))?;
    let raster = render
        .page_image
        .as_ref()
        .ok_or_else(|| Error::OcrFailed("no page raster to recognize".into()))?;
    let words = backend.recognize(raster)?;
    Ok(words
        .into_iter()
        .map(|w| WordBox { text: w.text, bbox: w.bbox, element: None })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn raster_with_sidecar(words: Option<Vec<WordBox>>) -> PageRaster {
        PageRaster {
            image: image::RgbaImage::from_pixel(10, 10, image::Rgba([255, 255, 255, 255])),
            sidecar_words: words,
        }
    }

    #[test]
    fn fake_ocr_returns_planted_words() {
        let planted = vec![WordBox {
            text: "total".into(),
            bbox: PxBox::new(1, 2, 30, 12),
            element: Some(4),
        }];
        let r = raster_with_sidecar(Some(planted.clone()));
        let got = FakeOcr.recognize(&r).unwrap();
        assert_eq!(got.len(), 1);
        assert_eq!(got[0].text, "total");
        assert_eq!(got[0].bbox, planted[0].bbox);
    }

    #[test]
    fn fake_ocr_without_sidecar_fails() {
        let r = raster_with_sidecar(None);
        assert!(matches!(FakeOcr.recognize(&r), Err(Error::OcrFailed(_))));
    }
}
