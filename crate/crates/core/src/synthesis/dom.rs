//! Simplified document tree over tolerant HTML parsing.
//!
//! Backend output is tag soup more often than not, so extraction never works
//! on raw text: the HTML is recovered into a tree first, then flattened into
//! an element array with stable pre-order ids. Those ids are the element
//! references shared by annotation extraction, rendering, and verification.

use std::collections::BTreeMap;

use scraper::{Html, Node as ScraperNode};

/// Child slot of an element: nested element (by id) or a text run.
#[derive(Debug, Clone, PartialEq)]
pub enum Child {
    Element(usize),
    Text(String),
}

#[derive(Debug, Clone)]
pub struct DomNode {
    pub id: usize,
    /// Lowercased tag name.
    pub tag: String,
    pub classes: Vec<String>,
    pub attrs: BTreeMap<String, String>,
    pub parent: Option<usize>,
    pub children: Vec<Child>,
}

impl DomNode {
    pub fn has_class(&self, token: &str) -> bool {
        self.classes.iter().any(|c| c == token)
    }

    pub fn attr(&self, name: &str) -> Option<&str> {
        self.attrs.get(name).map(String::as_str)
    }
}

/// Flattened document tree. Node 0 is the `<html>` element; ids follow
/// pre-order document position, so re-parsing identical HTML yields
/// identical ids.
#[derive(Debug, Clone)]
pub struct DocTree {
    nodes: Vec<DomNode>,
}

impl DocTree {
    /// Parse with full error recovery; structurally this cannot fail, the
    /// parser wraps any soup in an html/head/body skeleton.
    pub fn parse(html: &str) -> DocTree {
        let doc = Html::parse_document(html);
        let mut nodes = Vec::new();
        build(doc.root_element(), None, &mut nodes);
        DocTree { nodes }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn node(&self, id: usize) -> &DomNode {
        &self.nodes[id]
    }

    /// All elements in document (pre-order) position.
    pub fn iter(&self) -> impl Iterator<Item = &DomNode> {
        self.nodes.iter()
    }

    pub fn find_tag(&self, tag: &str) -> Option<&DomNode> {
        self.nodes.iter().find(|n| n.tag == tag)
    }

    pub fn body(&self) -> Option<&DomNode> {
        self.find_tag("body")
    }

    /// Concatenated descendant text with whitespace runs collapsed to single
    /// spaces and edges trimmed.
    pub fn text_content(&self, id: usize) -> String {
        let mut out = String::new();
        self.collect_text(id, &mut out);
        normalize_ws(&out)
    }

    /// Raw descendant text, preserved byte-for-byte (JSON payloads care).
    pub fn raw_text(&self, id: usize) -> String {
        let mut out = String::new();
        self.collect_text(id, &mut out);
        out
    }

    fn collect_text(&self, id: usize, out: &mut String) {
        for child in &self.nodes[id].children {
            match child {
                Child::Text(t) => out.push_str(t),
                Child::Element(e) => self.collect_text(*e, out),
            }
        }
    }

    /// Whitespace-split words of an element's text content.
    pub fn words(&self, id: usize) -> Vec<String> {
        self.text_content(id)
            .split_whitespace()
            .map(str::to_string)
            .collect()
    }
}

fn build(el: scraper::ElementRef<'_>, parent: Option<usize>, nodes: &mut Vec<DomNode>) -> usize {
    let value = el.value();
    let id = nodes.len();
    let mut attrs = BTreeMap::new();
    for (name, val) in value.attrs() {
        attrs.insert(name.to_ascii_lowercase(), val.to_string());
    }
    let classes = attrs
        .get("class")
        .map(|c| c.split_whitespace().map(str::to_string).collect())
        .unwrap_or_default();
    nodes.push(DomNode {
        id,
        tag: value.name().to_ascii_lowercase(),
        classes,
        attrs,
        parent,
        children: Vec::new(),
    });

    let mut children = Vec::new();
    for child in el.children() {
        match child.value() {
            ScraperNode::Element(_) => {
                let child_ref = scraper::ElementRef::wrap(child).expect("element node");
                let child_id = build(child_ref, Some(id), nodes);
                children.push(Child::Element(child_id));
            }
            ScraperNode::Text(t)
                if (!t.trim().is_empty() || !children.is_empty()) => {
                    children.push(Child::Text(t.to_string()));
                }
            _ => {}
        }
    }
    nodes[id].children = children;
    id
}

pub fn normalize_ws(s: &str) -> String {
    s.split_whitespace().collect::<Vec<_>>().join(" ")
}
