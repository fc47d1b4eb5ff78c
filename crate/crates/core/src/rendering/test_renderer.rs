//! Deterministic renderer for a constrained HTML subset, used by tests and
//! CI. Layout rules, all in whole pixels:
//!
//! * block elements stack vertically; the body starts at (0,0) with no
//!   default margin
//! * text uses fixed-advance glyph metrics: advance = round(0.6 * font-size),
//!   line height = round(1.2 * font-size), default font-size 16px
//! * inline elements flow with word wrapping at the content width
//! * tables split their width into equal cells per row
//! * `position:absolute` takes an element out of flow and anchors it to the
//!   page via top/left/right/bottom
//!
//! Re-rendering identical HTML yields identical boxes and pixels.

use std::collections::BTreeMap;

use crate::error::Error;
use crate::font;
use crate::geometry::{PageSize, PxBox};
use crate::rendering::style::InlineStyle;
use crate::rendering::{PageRaster, RenderBackend, RenderResult, WordBox};
use crate::synthesis::dom::{Child, DocTree, DomNode};
use crate::Result;

/// A4 width at 96 dpi, rounded.
pub const DEFAULT_BODY_WIDTH: u32 = 794;
pub const DEFAULT_FONT_SIZE: f64 = 16.0;
/// Content taller than this spills onto further pages.
pub const DEFAULT_MAX_PAGE_HEIGHT: u32 = 4000;

#[derive(Debug, Clone)]
pub struct TestRenderer {
    pub body_width: u32,
    pub max_page_height: u32,
    /// Skip the bitmap when only boxes are needed.
    pub rasterize: bool,
}

impl Default for TestRenderer {
    fn default() -> Self {
        TestRenderer {
            body_width: DEFAULT_BODY_WIDTH,
            max_page_height: DEFAULT_MAX_PAGE_HEIGHT,
            rasterize: true,
        }
    }
}

impl TestRenderer {
    pub fn new() -> Self {
        TestRenderer::default()
    }

    pub fn boxes_only() -> Self {
        TestRenderer { rasterize: false, ..TestRenderer::default() }
    }

    fn layout<'t>(&self, tree: &'t DocTree, body_width: i64) -> Engine<'t> {
        let mut eng = Engine::new(tree, body_width);
        if let Some(body) = tree.body() {
            let bottom = eng.block(body.id, 0, 0, body_width, DEFAULT_FONT_SIZE);
            eng.flow_extent = bottom;
        }
        eng.place_absolutes();
        eng
    }
}

impl RenderBackend for TestRenderer {
    fn name(&self) -> &'static str {
        "test-renderer"
    }

    fn measure_page(&self, html: &str) -> Result<PageSize> {
        if html.trim().is_empty() {
            return Err(Error::RenderFailed("empty html".into()));
        }
        let tree = DocTree::parse(html);
        let body = tree
            .body()
            .ok_or_else(|| Error::RenderFailed("document has no body".into()))?;
        let style = InlineStyle::parse(body.attr("style").unwrap_or(""));
        let width = style
            .width
            .map(|w| w.ceil() as i64)
            .unwrap_or(self.body_width as i64)
            .max(1);
        let eng = self.layout(&tree, width);
        let declared = style.height.map(|h| h.ceil() as i64).unwrap_or(0);
        let height = eng.extent().max(declared).max(1);
        Ok(PageSize::new(width as u32, height as u32))
    }

    fn render(&self, html: &str, page: PageSize) -> Result<RenderResult> {
        if page.width == 0 || page.height == 0 {
            return Err(Error::RenderFailed(format!(
                "page size must be positive, got {}x{}",
                page.width, page.height
            )));
        }
        if html.trim().is_empty() {
            return Err(Error::RenderFailed("empty html".into()));
        }
        let tree = DocTree::parse(html);
        if tree.body().is_none() {
            return Err(Error::RenderFailed("document has no body".into()));
        }
        let eng = self.layout(&tree, page.width as i64);

        let bounds = page.as_box();
        let mut word_boxes = Vec::new();
        let mut word_fonts = Vec::new();
        for (w, fs) in eng.words.iter().zip(&eng.word_fonts) {
            if let Some(clipped) = w.bbox.intersection(&bounds) {
                word_boxes.push(WordBox { bbox: clipped, ..w.clone() });
                word_fonts.push(*fs);
            }
        }

        // Boxes are published for annotated elements only: anything carrying
        // a class (GT or handwriting markers) or a placeholder attribute.
        let mut element_boxes = BTreeMap::new();
        for (id, bx) in &eng.boxes {
            let node = tree.node(*id);
            if node.classes.is_empty() && node.attr("data-placeholder").is_none() {
                continue;
            }
            if let Some(clipped) = bx.intersection(&bounds) {
                if !clipped.is_empty() {
                    element_boxes.insert(*id, clipped);
                }
            }
        }

        let page_image = if self.rasterize {
            let mut img = image::RgbaImage::from_pixel(
                page.width,
                page.height,
                image::Rgba([255, 255, 255, 255]),
            );
            for (w, fs) in word_boxes.iter().zip(&word_fonts) {
                draw_word(&mut img, w, *fs);
            }
            Some(PageRaster { image: img, sidecar_words: Some(word_boxes.clone()) })
        } else {
            None
        };

        let page_count = page.height.div_ceil(self.max_page_height);
        Ok(RenderResult {
            page_count: page_count.max(1),
            page_size: page,
            element_boxes,
            word_boxes,
            page_image,
            pdf: None,
        })
    }
}

fn draw_word(img: &mut image::RgbaImage, word: &WordBox, font_size: f64) {
    let advance = char_advance(font_size);
    let scale = ((advance / (font::GLYPH_W as i64 + 1)).max(1)) as u32;
    let glyph_h = (font::GLYPH_H * scale) as i64;
    let y = word.bbox.top + (word.bbox.height() - glyph_h).max(0) / 2;
    font::draw_text(img, &word.text, word.bbox.left, y, scale, advance, image::Rgba([0, 0, 0, 255]));
}

fn char_advance(font_size: f64) -> i64 {
    (0.6 * font_size).round() as i64
}

fn line_height(font_size: f64) -> i64 {
    (1.2 * font_size).round() as i64
}

fn is_inline(tag: &str) -> bool {
    matches!(
        tag,
        "span" | "b" | "i" | "u" | "em" | "strong" | "a" | "label" | "small" | "sub" | "sup"
            | "code" | "abbr" | "time" | "mark" | "br"
    )
}

fn is_skipped(tag: &str) -> bool {
    matches!(tag, "head" | "script" | "style" | "title" | "meta" | "link" | "template")
}

/// Word-wrapping cursor for one inline run.
struct Line {
    left: i64,
    right: i64,
    x: i64,
    y: i64,
    /// Bottom of everything placed so far (wrapped lines included).
    bottom: i64,
    /// Whether the current line already holds a word.
    used: bool,
}

impl Line {
    fn new(left: i64, right: i64, y: i64) -> Line {
        Line { left, right, x: left, y, bottom: y, used: false }
    }

    fn break_line(&mut self, font_size: f64) {
        self.bottom = self.bottom.max(self.y + line_height(font_size));
        self.y = self.bottom;
        self.x = self.left;
        self.used = false;
    }
}

struct Engine<'t> {
    tree: &'t DocTree,
    page_width: i64,
    /// Every laid-out element with its border box.
    boxes: BTreeMap<usize, PxBox>,
    words: Vec<WordBox>,
    word_fonts: Vec<f64>,
    /// Absolutely positioned elements, deferred until flow is done.
    absolutes: Vec<(usize, f64)>,
    flow_extent: i64,
}

impl<'t> Engine<'t> {
    fn new(tree: &'t DocTree, page_width: i64) -> Engine<'t> {
        Engine {
            tree,
            page_width,
            boxes: BTreeMap::new(),
            words: Vec::new(),
            word_fonts: Vec::new(),
            absolutes: Vec::new(),
            flow_extent: 0,
        }
    }

    /// Scroll extent: content overflowing a declared height still counts,
    /// so every placed box and word contributes its bottom edge.
    fn extent(&self) -> i64 {
        let box_bottom = self.boxes.values().map(|b| b.bottom).max().unwrap_or(0);
        let word_bottom = self.words.iter().map(|w| w.bbox.bottom).max().unwrap_or(0);
        self.flow_extent.max(box_bottom).max(word_bottom)
    }

    /// Lay out a block element whose containing box starts at (left, top)
    /// with the given available width. Returns the y below the element
    /// (margin included).
    fn block(&mut self, id: usize, left: i64, top: i64, width: i64, font: f64) -> i64 {
        let node = self.tree.node(id);
        if is_skipped(&node.tag) {
            return top;
        }
        let style = InlineStyle::parse(node.attr("style").unwrap_or(""));
        if style.display_none {
            return top;
        }
        if style.absolute {
            self.absolutes.push((id, font));
            return top;
        }
        let bottom = self.place_block(id, &style, left, top, width, font);
        bottom + style.margin.round() as i64
    }

    /// Shared by flow and absolute placement: positions the border box and
    /// lays out content. Returns the border-box bottom.
    fn place_block(
        &mut self,
        id: usize,
        style: &InlineStyle,
        left: i64,
        top: i64,
        width: i64,
        font: f64,
    ) -> i64 {
        let node = self.tree.node(id);
        let margin = style.margin.round() as i64;
        let padding = style.padding.round() as i64;
        let font = style.font_size.unwrap_or(font);
        let box_left = left + margin;
        let box_top = top + margin;
        let box_width = style
            .width
            .map(|w| w.round() as i64)
            .unwrap_or(width - 2 * margin)
            .max(0);

        let content_left = box_left + padding;
        let content_top = box_top + padding;
        let content_width = (box_width - 2 * padding).max(0);

        let content_bottom = match node.tag.as_str() {
            "hr" => content_top + 2,
            "img" => content_top + style.height.map(|h| h.round() as i64).unwrap_or(0),
            "table" => self.table(node, content_left, content_top, content_width, font),
            _ => self.flow_children(node, content_left, content_top, content_width, font),
        };

        let mut box_bottom = content_bottom + padding;
        if let Some(h) = style.height {
            box_bottom = box_top + h.round() as i64;
        }
        box_bottom = box_bottom.max(box_top);
        self.boxes
            .insert(id, PxBox::new(box_left, box_top, box_left + box_width, box_bottom));
        box_bottom
    }

    /// Mixed block/inline children: inline runs share a wrapping cursor,
    /// block children flush it and stack below. Returns the content bottom.
    fn flow_children(
        &mut self,
        node: &DomNode,
        left: i64,
        top: i64,
        width: i64,
        font: f64,
    ) -> i64 {
        let mut y = top;
        let mut line: Option<Line> = None;
        for child in &node.children {
            match child {
                Child::Text(t) => {
                    let l = line.get_or_insert_with(|| Line::new(left, left + width, y));
                    self.flow_words(t, node.id, l, font);
                }
                Child::Element(c) if is_inline(&self.tree.node(*c).tag) => {
                    let l = line.get_or_insert_with(|| Line::new(left, left + width, y));
                    self.inline(*c, l, font);
                }
                Child::Element(c) => {
                    if let Some(l) = line.take() {
                        y = l.bottom;
                    }
                    y = self.block(*c, left, y, width, font);
                }
            }
        }
        if let Some(l) = line {
            y = l.bottom;
        }
        y
    }

    /// Flow an inline element's content into the current line. The element's
    /// own box is the union of the word boxes it produced.
    fn inline(&mut self, id: usize, line: &mut Line, font: f64) {
        let node = self.tree.node(id);
        let style = InlineStyle::parse(node.attr("style").unwrap_or(""));
        if style.display_none {
            return;
        }
        if node.tag == "br" {
            line.break_line(font);
            return;
        }
        if style.absolute {
            self.absolutes.push((id, font));
            return;
        }
        let font = style.font_size.unwrap_or(font);
        let first_word = self.words.len();
        for child in &node.children {
            match child {
                Child::Text(t) => self.flow_words(t, id, line, font),
                Child::Element(c) if is_inline(&self.tree.node(*c).tag) => {
                    self.inline(*c, line, font)
                }
                // A block inside an inline is outside the subset; flow its
                // text instead of dropping it.
                Child::Element(c) => {
                    let text = self.tree.text_content(*c);
                    self.flow_words(&text, *c, line, font);
                }
            }
        }
        if let Some(union) = self.words[first_word..]
            .iter()
            .map(|w| w.bbox)
            .reduce(|a, b| a.union(&b))
        {
            self.boxes.insert(id, union);
        }
    }

    fn flow_words(&mut self, text: &str, element: usize, line: &mut Line, font: f64) {
        let advance = char_advance(font);
        let lh = line_height(font);
        for word in text.split_whitespace() {
            let w = advance * word.chars().count() as i64;
            if line.used && line.x + w > line.right {
                line.break_line(font);
            }
            let bbox = PxBox::new(line.x, line.y, line.x + w, line.y + lh);
            self.words.push(WordBox { text: word.to_string(), bbox, element: Some(element) });
            self.word_fonts.push(font);
            line.bottom = line.bottom.max(line.y + lh);
            line.used = true;
            line.x += w + advance;
        }
    }

    /// Rows split the table width into equal cells; row height is the
    /// tallest cell. thead/tbody/tfoot wrappers are transparent.
    fn table(&mut self, node: &DomNode, left: i64, top: i64, width: i64, font: f64) -> i64 {
        let mut rows = Vec::new();
        collect_rows(self.tree, node, &mut rows);
        let mut y = top;
        for row_id in rows {
            let row = self.tree.node(row_id);
            let row_style = InlineStyle::parse(row.attr("style").unwrap_or(""));
            if row_style.display_none {
                continue;
            }
            let cells: Vec<usize> = row
                .children
                .iter()
                .filter_map(|c| match c {
                    Child::Element(e)
                        if matches!(self.tree.node(*e).tag.as_str(), "td" | "th") =>
                    {
                        Some(*e)
                    }
                    _ => None,
                })
                .collect();
            if cells.is_empty() {
                y = self.flow_children(row, left, y, width, font);
                continue;
            }
            let n = cells.len() as i64;
            let row_top = y;
            let mut row_bottom = row_top;
            for (i, cell) in cells.iter().enumerate() {
                let cl = left + (i as i64 * width) / n;
                let cr = left + ((i as i64 + 1) * width) / n;
                let style = InlineStyle::parse(self.tree.node(*cell).attr("style").unwrap_or(""));
                let bottom = self.place_block(*cell, &style, cl, row_top, cr - cl, font);
                row_bottom = row_bottom.max(bottom);
            }
            self.boxes
                .insert(row_id, PxBox::new(left, row_top, left + width, row_bottom));
            y = row_bottom;
        }
        y
    }

    /// Position deferred `position:absolute` elements against the page box.
    /// Absolutes nested inside absolutes queue up during placement, so drain
    /// until the queue stays empty.
    fn place_absolutes(&mut self) {
        let flow_bottom = self.flow_extent;
        let mut placed = Vec::new();
        while !self.absolutes.is_empty() {
            let queue = std::mem::take(&mut self.absolutes);
            for (id, inherited_font) in queue {
                let node = self.tree.node(id);
                let style = InlineStyle::parse(node.attr("style").unwrap_or(""));
                let width = style
                    .width
                    .map(|w| w.round() as i64)
                    .or_else(|| match (style.left, style.right) {
                        (Some(l), Some(r)) => {
                            Some(self.page_width - l.round() as i64 - r.round() as i64)
                        }
                        _ => None,
                    })
                    .unwrap_or(self.page_width)
                    .max(0);
                let left = style
                    .left
                    .map(|l| l.round() as i64)
                    .or_else(|| style.right.map(|r| self.page_width - r.round() as i64 - width))
                    .unwrap_or(0);
                let top = style
                    .top
                    .map(|t| t.round() as i64)
                    .or_else(|| {
                        style.bottom.and_then(|b| {
                            style.height.map(|h| flow_bottom - b.round() as i64 - h.round() as i64)
                        })
                    })
                    .unwrap_or(0);
                // Margins already fold into the anchored position.
                let shifted = InlineStyle { margin: 0.0, absolute: false, ..style };
                self.place_block(id, &shifted, left, top, width, inherited_font);
                placed.push((id, inherited_font));
            }
        }
        self.absolutes = placed;
    }
}

fn collect_rows(tree: &DocTree, node: &DomNode, out: &mut Vec<usize>) {
    for child in &node.children {
        if let Child::Element(e) = child {
            let tag = tree.node(*e).tag.as_str();
            match tag {
                "tr" => out.push(*e),
                "thead" | "tbody" | "tfoot" => collect_rows(tree, tree.node(*e), out),
                _ => {}
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn doc(body_attrs: &str, body: &str) -> String {
        format!("<html><head></head><body{body_attrs}>{body}</body></html>")
    }

    #[test]
    fn declared_body_size_is_the_measured_size() {
        let html = doc(" style=\"width:800px;height:1000px\"", "<p>hello</p>");
        let size = TestRenderer::new().measure_page(&html).unwrap();
        assert_eq!(size, PageSize::new(800, 1000));
    }

    #[test]
    fn overflowing_content_grows_the_measure() {
        let paras: String = (0..200).map(|i| format!("<p>row {i}</p>")).collect();
        let html = doc(" style=\"width:800px;height:100px\"", &paras);
        let size = TestRenderer::new().measure_page(&html).unwrap();
        assert_eq!(size.width, 800);
        // 200 paragraphs at 19px line height each.
        assert!(size.height >= 200 * 19, "height {}", size.height);
    }

    #[test]
    fn empty_html_is_a_render_failure() {
        assert!(matches!(
            TestRenderer::new().measure_page("   "),
            Err(Error::RenderFailed(_))
        ));
    }

    #[test]
    fn blocks_stack_and_words_advance_by_fixed_metrics() {
        let html = doc("", "<p>ab cd</p><p>efg</p>");
        let r = TestRenderer::boxes_only();
        let size = r.measure_page(&html).unwrap();
        let res = r.render(&html, size).unwrap();
        // Default font 16px: advance 10, line height 19.
        assert_eq!(res.word_boxes.len(), 3);
        let ab = &res.word_boxes[0];
        let cd = &res.word_boxes[1];
        let efg = &res.word_boxes[2];
        assert_eq!(ab.bbox, PxBox::new(0, 0, 20, 19));
        assert_eq!(cd.bbox, PxBox::new(30, 0, 50, 19)); // one space = one advance
        assert_eq!(efg.bbox, PxBox::new(0, 19, 30, 38)); // second block below
    }

    #[test]
    fn long_text_wraps_at_content_width() {
        // Width 100px, advance 10: "aaaa bbbb cccc" = 40+10+40 = 90 fits,
        // next word wraps.
        let html = doc(" style=\"width:100px\"", "<p>aaaa bbbb cccc</p>");
        let r = TestRenderer::boxes_only();
        let size = r.measure_page(&html).unwrap();
        let res = r.render(&html, size).unwrap();
        assert_eq!(res.word_boxes[0].bbox.top, 0);
        assert_eq!(res.word_boxes[1].bbox.top, 0);
        assert_eq!(res.word_boxes[2].bbox.top, 19, "third word wraps to line 2");
    }

    #[test]
    fn inline_span_shares_the_line_and_gets_a_union_box() {
        let html = doc("", r#"<p>total <span class="kv">42</span></p>"#);
        let r = TestRenderer::boxes_only();
        let size = r.measure_page(&html).unwrap();
        let res = r.render(&html, size).unwrap();
        let span_box = res.element_boxes.values().next().expect("span box");
        // "total " is 5 chars + space = 60px in; span holds "42" = 20px.
        assert_eq!(*span_box, PxBox::new(60, 0, 80, 19));
        assert!(res.word_boxes.iter().all(|w| w.bbox.top == 0), "single line");
    }

    #[test]
    fn table_cells_split_width_equally() {
        let html = doc(
            " style=\"width:300px\"",
            r#"<table><tr><td class="a">x</td><td class="b">y</td><td class="c">z</td></tr></table>"#,
        );
        let r = TestRenderer::boxes_only();
        let size = r.measure_page(&html).unwrap();
        let res = r.render(&html, size).unwrap();
        let widths: Vec<i64> = res.element_boxes.values().map(|b| b.width()).collect();
        assert_eq!(widths, vec![100, 100, 100]);
        let lefts: Vec<i64> = res.element_boxes.values().map(|b| b.left).collect();
        assert_eq!(lefts, vec![0, 100, 200]);
    }

    #[test]
    fn absolute_element_is_anchored_and_out_of_flow() {
        let html = doc(
            " style=\"width:400px;height:500px\"",
            r#"<p>flow text</p>
               <div class="stamp" style="position:absolute;top:100px;left:50px;width:80px;height:40px"></div>"#,
        );
        let r = TestRenderer::boxes_only();
        let size = r.measure_page(&html).unwrap();
        let res = r.render(&html, size).unwrap();
        let stamp = res.element_boxes.values().next().unwrap();
        assert_eq!(*stamp, PxBox::new(50, 100, 130, 140));
        // Flow text still starts at the origin: the absolute div did not
        // displace it.
        assert_eq!(res.word_boxes[0].bbox.top, 0);
    }

    #[test]
    fn right_anchored_absolute_resolves_against_page_width() {
        let html = doc(
            " style=\"width:400px;height:300px\"",
            r#"<div class="stamp" style="position:absolute;top:10px;right:20px;width:100px;height:50px"></div>"#,
        );
        let r = TestRenderer::boxes_only();
        let res = r.render(&html, PageSize::new(400, 300)).unwrap();
        let stamp = res.element_boxes.values().next().unwrap();
        assert_eq!(*stamp, PxBox::new(280, 10, 380, 60));
    }

    #[test]
    fn zero_area_elements_are_missing_from_element_boxes() {
        let html = doc("", r#"<div class="empty"></div><p class="full">text</p>"#);
        let r = TestRenderer::boxes_only();
        let size = r.measure_page(&html).unwrap();
        let res = r.render(&html, size).unwrap();
        assert_eq!(res.element_boxes.len(), 1, "only the element with area appears");
        let tree = DocTree::parse(&html);
        let full = tree.iter().find(|n| n.has_class("full")).unwrap();
        assert!(res.element_boxes.contains_key(&full.id));
    }

    #[test]
    fn unclassed_elements_do_not_get_published_boxes() {
        let html = doc("", "<div><p>plain</p></div>");
        let r = TestRenderer::boxes_only();
        let size = r.measure_page(&html).unwrap();
        let res = r.render(&html, size).unwrap();
        assert!(res.element_boxes.is_empty());
        assert_eq!(res.word_boxes.len(), 1);
    }

    #[test]
    fn tall_content_spans_multiple_pages() {
        let html = doc(" style=\"width:200px;height:9000px\"", "<p>x</p>");
        let r = TestRenderer::boxes_only();
        let size = r.measure_page(&html).unwrap();
        assert_eq!(size.height, 9000);
        let res = r.render(&html, size).unwrap();
        assert_eq!(res.page_count, 3); // ceil(9000 / 4000)
    }

    #[test]
    fn rerendering_identical_html_is_bit_identical() {
        let html = doc(
            " style=\"width:300px\"",
            r#"<h1>Invoice</h1><table><tr><td class="k">Total</td><td class="v">98.50</td></tr></table>"#,
        );
        let r = TestRenderer::new();
        let size = r.measure_page(&html).unwrap();
        let a = r.render(&html, size).unwrap();
        let b = r.render(&html, size).unwrap();
        assert_eq!(a.element_boxes, b.element_boxes);
        assert_eq!(a.word_boxes, b.word_boxes);
        let (ra, rb) = (a.page_image.unwrap(), b.page_image.unwrap());
        assert_eq!(ra.image.as_raw(), rb.image.as_raw());
    }

    #[test]
    fn all_boxes_stay_within_page_bounds() {
        let html = doc(
            " style=\"width:150px\"",
            r#"<p class="t">some words that wrap across several lines here</p>"#,
        );
        let r = TestRenderer::boxes_only();
        let size = r.measure_page(&html).unwrap();
        let res = r.render(&html, size).unwrap();
        let page = size.as_box();
        for w in &res.word_boxes {
            assert!(page.contains(&w.bbox), "word {:?} out of bounds", w);
        }
        for b in res.element_boxes.values() {
            assert!(page.contains(b), "element box {b:?} out of bounds");
        }
    }

    #[test]
    fn font_size_scales_advance_and_line_height() {
        let html = doc("", r#"<p style="font-size:32px">Hi</p>"#);
        let r = TestRenderer::boxes_only();
        let size = r.measure_page(&html).unwrap();
        let res = r.render(&html, size).unwrap();
        // advance = round(0.6*32) = 19, line height = round(1.2*32) = 38.
        assert_eq!(res.word_boxes[0].bbox, PxBox::new(0, 0, 38, 38));
    }

    #[test]
    fn raster_paints_text_pixels_on_white() {
        let html = doc(" style=\"width:100px;height:40px\"", "<p>INK</p>");
        let r = TestRenderer::new();
        let res = r.render(&html, PageSize::new(100, 40)).unwrap();
        let raster = res.page_image.unwrap();
        let black = raster.image.pixels().filter(|p| p.0 == [0, 0, 0, 255]).count();
        assert!(black > 10, "expected glyph pixels, found {black}");
        assert_eq!(raster.sidecar_words.as_ref().unwrap().len(), 1);
        assert_eq!(raster.sidecar_words.unwrap()[0].text, "INK");
    }
}
