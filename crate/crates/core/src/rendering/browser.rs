//! Headless-browser render backend. Shells out to a Chromium binary: boxes
//! come from an injected script that measures annotated elements and text
//! ranges after load, the raster from `--screenshot`, the PDF from
//! `--print-to-pdf`.
//!
//! The binary is taken from the `DOCDJINN_BROWSER` environment variable (or
//! given explicitly); when absent every call fails with RenderUnavailable so
//! callers can fall back or reject.

use std::collections::BTreeMap;
use std::path::PathBuf;
use std::process::Command;

use serde::Deserialize;

use crate::error::Error;
use crate::geometry::{PageSize, PxBox};
use crate::rendering::{PageRaster, RenderBackend, RenderResult, WordBox};
use crate::synthesis::dom::{Child, DocTree};
use crate::Result;

pub const BROWSER_ENV: &str = "DOCDJINN_BROWSER";

/// Runs after load: publishes element boxes (for `data-ddj-ref` carriers),
/// per-word text boxes, and the body extent as JSON in a well-known `<pre>`
/// so `--dump-dom` output can be parsed.
const EXTRACT_SCRIPT: &str = r#"
addEventListener('load', () => {
  const boxes = {};
  for (const el of document.querySelectorAll('[data-ddj-ref]')) {
    const r = el.getBoundingClientRect();
    boxes[el.getAttribute('data-ddj-ref')] =
      [Math.round(r.left), Math.round(r.top), Math.round(r.right), Math.round(r.bottom)];
  }
  const words = [];
  const it = document.createNodeIterator(document.body, NodeFilter.SHOW_TEXT);
  let n;
  while ((n = it.nextNode())) {
    if (n.parentElement && n.parentElement.closest('script,style')) continue;
    const re = /\S+/g;
    let m;
    while ((m = re.exec(n.nodeValue))) {
      const range = document.createRange();
      range.setStart(n, m.index);
      range.setEnd(n, m.index + m[0].length);
      const b = range.getBoundingClientRect();
      if (b.width > 0 && b.height > 0) {
        words.push([m[0], Math.round(b.left), Math.round(b.top),
                    Math.round(b.right), Math.round(b.bottom)]);
      }
    }
  }
  const body = document.body;
  const extent = [Math.ceil(Math.max(body.scrollWidth, body.offsetWidth)),
                  Math.ceil(Math.max(body.scrollHeight, body.offsetHeight))];
  const pre = document.createElement('pre');
  pre.id = 'ddj-out';
  pre.textContent = JSON.stringify({boxes, words, extent});
  document.body.replaceChildren(pre);
});
"#;

#[derive(Debug, Clone)]
pub struct BrowserRenderer {
    binary: PathBuf,
}

impl BrowserRenderer {
    pub fn new(binary: impl Into<PathBuf>) -> BrowserRenderer {
        BrowserRenderer { binary: binary.into() }
    }

    pub fn from_env() -> Result<BrowserRenderer> {
        match std::env::var_os(BROWSER_ENV) {
            Some(path) if !path.is_empty() => Ok(BrowserRenderer::new(PathBuf::from(path))),
            _ => Err(Error::RenderUnavailable(format!(
                "{BROWSER_ENV} is not set; no browser backend configured"
            ))),
        }
    }

    fn run(&self, args: &[&str], html_path: &std::path::Path) -> Result<String> {
        let url = format!("file://{}", html_path.display());
        let out = Command::new(&self.binary)
            .args([
                "--headless=new",
                "--no-sandbox",
                "--disable-gpu",
                "--hide-scrollbars",
                "--virtual-time-budget=5000",
            ])
            .args(args)
            .arg(&url)
            .output()
            .map_err(|e| Error::RenderUnavailable(format!(
                "failed to launch {}: {e}",
                self.binary.display()
            )))?;
        if !out.status.success() {
            return Err(Error::RenderFailed(format!(
                "browser exited with {}: {}",
                out.status,
                String::from_utf8_lossy(&out.stderr)
            )));
        }
        Ok(String::from_utf8_lossy(&out.stdout).into_owned())
    }

    fn extract(&self, html: &str) -> Result<Extraction> {
        let dir = tempfile::tempdir()?;
        let page = dir.path().join("page.html");
        std::fs::write(&page, annotate(html))?;
        let dom = self.run(&["--dump-dom"], &page)?;
        parse_extraction(&dom)
    }
}

#[derive(Debug, Deserialize)]
struct Extraction {
    boxes: BTreeMap<String, [i64; 4]>,
    words: Vec<(String, i64, i64, i64, i64)>,
    extent: [i64; 2],
}

fn parse_extraction(dom: &str) -> Result<Extraction> {
    let start = dom
        .find(r#"<pre id="ddj-out">"#)
        .ok_or_else(|| Error::RenderFailed("extraction script produced no output".into()))?;
    let rest = &dom[start + r#"<pre id="ddj-out">"#.len()..];
    let end = rest
        .find("</pre>")
        .ok_or_else(|| Error::RenderFailed("unterminated extraction output".into()))?;
    let payload = rest[..end]
        .replace("&lt;", "<")
        .replace("&gt;", ">")
        .replace("&quot;", "\"")
        .replace("&amp;", "&");
    serde_json::from_str(&payload)
        .map_err(|e| Error::RenderFailed(format!("bad extraction payload: {e}")))
}

impl RenderBackend for BrowserRenderer {
    fn name(&self) -> &'static str {
        "browser"
    }

    fn measure_page(&self, html: &str) -> Result<PageSize> {
        let ext = self.extract(html)?.extent;
        if ext[0] <= 0 || ext[1] <= 0 {
            return Err(Error::RenderFailed(format!(
                "browser measured degenerate extent {}x{}",
                ext[0], ext[1]
            )));
        }
        Ok(PageSize::new(ext[0] as u32, ext[1] as u32))
    }

    fn render(&self, html: &str, page: PageSize) -> Result<RenderResult> {
        if page.width == 0 || page.height == 0 {
            return Err(Error::RenderFailed(format!(
                "page size must be positive, got {}x{}",
                page.width, page.height
            )));
        }
        let extraction = self.extract(html)?;

        let dir = tempfile::tempdir()?;
        let page_path = dir.path().join("page.html");
        std::fs::write(&page_path, annotate(html))?;

        let shot = dir.path().join("shot.png");
        let size_arg = format!("--window-size={},{}", page.width, page.height);
        let shot_arg = format!("--screenshot={}", shot.display());
        self.run(&[&size_arg, &shot_arg, "--default-background-color=FFFFFFFF"], &page_path)?;
        let image = image::open(&shot)
            .map_err(|e| Error::RenderFailed(format!("unreadable screenshot: {e}")))?
            .into_rgba8();

        let pdf_path = dir.path().join("page.pdf");
        let pdf_arg = format!("--print-to-pdf={}", pdf_path.display());
        self.run(&[&pdf_arg, "--no-pdf-header-footer"], &page_path)?;
        let pdf = std::fs::read(&pdf_path)?;

        let bounds = page.as_box();
        let mut element_boxes = BTreeMap::new();
        for (ref_id, [l, t, r, b]) in &extraction.boxes {
            let id: usize = ref_id
                .parse()
                .map_err(|_| Error::RenderFailed(format!("bad element ref {ref_id:?}")))?;
            if l < r && t < b {
                if let Some(clipped) = PxBox::new(*l, *t, *r, *b).intersection(&bounds) {
                    element_boxes.insert(id, clipped);
                }
            }
        }
        let word_boxes = extraction
            .words
            .into_iter()
            .filter(|(_, l, t, r, b)| l < r && t < b)
            .filter_map(|(text, l, t, r, b)| {
                PxBox::new(l, t, r, b)
                    .intersection(&bounds)
                    .map(|bbox| WordBox { text, bbox, element: None })
            })
            .collect();

        let page_height = extraction.extent[1].max(1) as u32;
        let page_count = page_height.div_ceil(page.height);
        Ok(RenderResult {
            page_count: page_count.max(1),
            page_size: page,
            element_boxes,
            word_boxes,
            page_image: Some(PageRaster { image, sidecar_words: None }),
            pdf: Some(pdf),
        })
    }
}

/// Re-serialize the document with `data-ddj-ref="<element id>"` stamped on
/// every annotated element (classes or placeholder attributes) and the
/// extraction script appended to the body. Ids match `DocTree` pre-order so
/// browser boxes line up with the rest of the pipeline.
pub fn annotate(html: &str) -> String {
    let tree = DocTree::parse(html);
    let mut out = String::with_capacity(html.len() + EXTRACT_SCRIPT.len() + 256);
    out.push_str("<!DOCTYPE html>");
    if tree.is_empty() {
        return out;
    }
    serialize(&tree, 0, &mut out);
    out
}

const VOID_TAGS: &[&str] =
    &["area", "base", "br", "col", "embed", "hr", "img", "input", "link", "meta", "source", "wbr"];

fn serialize(tree: &DocTree, id: usize, out: &mut String) {
    let node = tree.node(id);
    out.push('<');
    out.push_str(&node.tag);
    for (name, value) in &node.attrs {
        out.push(' ');
        out.push_str(name);
        out.push_str("=\"");
        out.push_str(&escape_attr(value));
        out.push('"');
    }
    if !node.classes.is_empty() || node.attrs.contains_key("data-placeholder") {
        out.push_str(&format!(" data-ddj-ref=\"{id}\""));
    }
    out.push('>');
    if VOID_TAGS.contains(&node.tag.as_str()) {
        return;
    }
    let raw_text_element = matches!(node.tag.as_str(), "script" | "style");
    for child in &node.children {
        match child {
            Child::Text(t) => {
                if raw_text_element {
                    out.push_str(t);
                } else {
                    out.push_str(&escape_text(t));
                }
            }
            Child::Element(e) => serialize(tree, *e, out),
        }
    }
    if node.tag == "body" {
        out.push_str("<script>");
        out.push_str(EXTRACT_SCRIPT);
        out.push_str("</script>");
    }
    out.push_str("</");
    out.push_str(&node.tag);
    out.push('>');
}

fn escape_text(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

fn escape_attr(s: &str) -> String {
    escape_text(s).replace('"', "&quot;")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn annotate_stamps_refs_on_classed_elements_only() {
        let html = r#"<html><head></head><body><div class="total">9</div><p>x</p></body></html>"#;
        let out = annotate(html);
        let tree = DocTree::parse(html);
        let div = tree.iter().find(|n| n.has_class("total")).unwrap();
        assert!(out.contains(&format!(r#"data-ddj-ref="{}""#, div.id)));
        // The extraction script mentions the attribute name too; only the
        // div carries an actual attribute assignment.
        assert_eq!(out.matches(r#"data-ddj-ref=""#).count(), 1);
        assert!(out.contains("ddj-out"), "extraction script is embedded");
    }

    #[test]
    fn annotate_escapes_text_and_attributes() {
        let html = r#"<html><body><p title="a&quot;b">1 &lt; 2</p></body></html>"#;
        let out = annotate(html);
        assert!(out.contains(r#"title="a&quot;b""#));
        assert!(out.contains("1 &lt; 2"));
    }

    #[test]
    fn extraction_payload_parses_from_dumped_dom() {
        let dom = r#"<html><body><pre id="ddj-out">{"boxes":{"3":[1,2,30,40]},"words":[["hi",1,2,21,21]],"extent":[794,600]}</pre></body></html>"#;
        let ex = parse_extraction(dom).unwrap();
        assert_eq!(ex.extent, [794, 600]);
        assert_eq!(ex.boxes["3"], [1, 2, 30, 40]);
        assert_eq!(ex.words[0].0, "hi");
    }

    #[test]
    fn missing_env_is_unavailable_not_a_crash() {
        std::env::remove_var(BROWSER_ENV);
        assert!(matches!(
            BrowserRenderer::from_env(),
            Err(Error::RenderUnavailable(_))
        ));
    }

    // Exercises a real browser; run manually with DOCDJINN_BROWSER set.
    #[test]
    #[ignore]
    fn browser_measures_a_fixed_body() {
        let r = BrowserRenderer::from_env().unwrap();
        let html = r#"<html><body style="width:800px;height:1000px;margin:0"></body></html>"#;
        let size = r.measure_page(html).unwrap();
        assert_eq!(size.width, 800);
        assert!(size.height >= 1000);
    }
}
