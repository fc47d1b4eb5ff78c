//! Annotation extraction from parsed documents.
//!
//! Macro documents carry one JSON payload in
//! `<script type="application/json" id="GT">`; micro documents annotate
//! elements through class tokens (field labels, group ids like PAIR_3,
//! layout labels like LE-TABLE). Handwriting regions and visual placeholders
//! are class/attribute conventions shared by both templates.

use serde_json::Value;

use crate::error::Error;
use crate::handwriting::HandwritingRegion;
use crate::rendering::style::InlineStyle;
use crate::synthesis::dom::DocTree;
use crate::synthesis::{GroundTruth, KieEntity, LayoutRegion, Task};
use crate::visual_elements::VisualElementPlaceholder;
use crate::Result;

/// Find the single GT script payload and parse it per the task's shape.
/// A missing script is `NoGt`; everything else malformed is `MalformedGt`
/// (both map onto reject reasons downstream).
pub fn extract_macro_gt(tree: &DocTree, task: Task) -> Result<GroundTruth> {
    if task == Task::Dla {
        return Err(Error::MalformedGt("DLA uses micro annotations, not a GT script".into()));
    }
    let mut scripts = tree.iter().filter(|n| {
        n.tag == "script"
            && n.attr("type").map(|t| t.eq_ignore_ascii_case("application/json")) == Some(true)
            && n.attr("id").map(|i| i.eq_ignore_ascii_case("gt")) == Some(true)
    });
    let script = match scripts.next() {
        Some(s) => s,
        None => return Err(Error::NoGt),
    };
    if scripts.next().is_some() {
        return Err(Error::MalformedGt("multiple GT payloads".into()));
    }
    let payload = tree.raw_text(script.id);
    let value: Value = serde_json::from_str(payload.trim())
        .map_err(|e| Error::MalformedGt(format!("GT payload is not JSON: {e}")))?;
    let obj = value
        .as_object()
        .ok_or_else(|| Error::MalformedGt("GT payload is not a JSON object".into()))?;

    match task {
        Task::Vqa => {
            let mut pairs = std::collections::BTreeMap::new();
            for (q, a) in obj {
                pairs.insert(q.clone(), scalar_string(a)?);
            }
            if pairs.is_empty() {
                return Err(Error::MalformedGt("empty QA map".into()));
            }
            Ok(GroundTruth::QaPairs { pairs })
        }
        Task::Cls => {
            let label = obj
                .get("label")
                .ok_or_else(|| Error::MalformedGt("missing \"label\" key".into()))?;
            Ok(GroundTruth::ClassLabel { label: scalar_string(label)? })
        }
        Task::Kie => {
            let mut entities = Vec::new();
            for (field, v) in obj {
                entities.push(KieEntity {
                    group: None,
                    field: field.clone(),
                    value: scalar_string(v)?,
                    region: None,
                    element: None,
                    valid_label: true,
                });
            }
            if entities.is_empty() {
                return Err(Error::MalformedGt("empty KIE object".into()));
            }
            Ok(GroundTruth::KieEntities { entities })
        }
        Task::Dla => unreachable!(),
    }
}

fn scalar_string(v: &Value) -> Result<String> {
    match v {
        Value::String(s) => Ok(s.clone()),
        Value::Number(n) => Ok(n.to_string()),
        Value::Bool(b) => Ok(b.to_string()),
        other => Err(Error::MalformedGt(format!("non-scalar GT value {other}"))),
    }
}

/// Label vocabulary and grouping rules for micro-annotated datasets.
#[derive(Debug, Clone, Default)]
pub struct MicroVocab {
    /// Field or layout labels in canonical casing (QUESTION, MENU_NM,
    /// LE-TABLE, ...).
    pub labels: Vec<String>,
    /// Indexed-group prefixes; a class token is a group id when it is one of
    /// these followed by digits (PAIR_3, MENU_12).
    pub group_prefixes: Vec<String>,
    /// Fixed group names without an index (VOID_MENU, GENERIC).
    pub static_groups: Vec<String>,
}

impl MicroVocab {
    pub fn new(labels: &[&str], group_prefixes: &[&str], static_groups: &[&str]) -> Self {
        MicroVocab {
            labels: labels.iter().map(|s| s.to_string()).collect(),
            group_prefixes: group_prefixes.iter().map(|s| s.to_string()).collect(),
            static_groups: static_groups.iter().map(|s| s.to_string()).collect(),
        }
    }

    /// Canonical label for a class token, matched case-insensitively.
    pub fn field_label(&self, token: &str) -> Option<&str> {
        self.labels
            .iter()
            .find(|l| l.eq_ignore_ascii_case(token))
            .map(String::as_str)
    }

    /// Group id for a class token: an indexed group (prefix + digits) or a
    /// static group name. Returned uppercased.
    pub fn group_id(&self, token: &str) -> Option<String> {
        let upper = token.to_ascii_uppercase();
        for p in &self.group_prefixes {
            let prefix = p.to_ascii_uppercase();
            if let Some(rest) = upper.strip_prefix(&prefix) {
                if !rest.is_empty() && rest.bytes().all(|b| b.is_ascii_digit()) {
                    return Some(upper);
                }
            }
        }
        self.static_groups
            .iter()
            .find(|g| g.eq_ignore_ascii_case(token))
            .map(|g| g.to_ascii_uppercase())
    }
}

/// Class tokens reserved for other subsystems, never treated as GT labels.
fn is_reserved_token(token: &str) -> bool {
    if token.eq_ignore_ascii_case("handwritten") || token.eq_ignore_ascii_case("signature") {
        return true;
    }
    parse_author_token(token).is_some()
}

fn parse_author_token(token: &str) -> Option<u32> {
    let rest = token.strip_prefix("author")?;
    if rest.is_empty() || !rest.bytes().all(|b| b.is_ascii_digit()) {
        return None;
    }
    rest.parse().ok()
}

/// Scan class attributes for micro annotations. KIE yields grouped entities
/// (value = element text); DLA yields layout regions whose boxes are filled
/// in after rendering. Tokens the vocabulary doesn't know stay attached to
/// the entity in invalid state so verification can reject the document.
pub fn extract_micro_annotations(
    tree: &DocTree,
    vocab: &MicroVocab,
    task: Task,
) -> Result<GroundTruth> {
    if vocab.labels.is_empty() {
        return Err(Error::Definition("micro extraction needs a label vocabulary".into()));
    }
    match task {
        Task::Kie => {
            let mut entities = Vec::new();
            for node in tree.iter() {
                let mut groups: Vec<String> = Vec::new();
                let mut fields: Vec<String> = Vec::new();
                let mut unknown: Vec<String> = Vec::new();
                for token in &node.classes {
                    if is_reserved_token(token) {
                        continue;
                    }
                    if let Some(g) = vocab.group_id(token) {
                        if !groups.contains(&g) {
                            groups.push(g);
                        }
                    } else if let Some(l) = vocab.field_label(token) {
                        if !fields.iter().any(|f| f == l) {
                            fields.push(l.to_string());
                        }
                    } else {
                        unknown.push(token.clone());
                    }
                }
                if groups.is_empty() && fields.is_empty() {
                    continue;
                }
                // Exactly one group (or none) and exactly one field label
                // make a well-formed entity; anything else is kept but
                // flagged so the verifier rejects with invalid_label.
                let valid_label = groups.len() <= 1 && fields.len() == 1;
                let field = fields
                    .first()
                    .cloned()
                    .or_else(|| unknown.first().cloned())
                    .unwrap_or_default();
                entities.push(KieEntity {
                    group: groups.first().cloned(),
                    field,
                    value: tree.text_content(node.id),
                    region: None,
                    element: Some(node.id),
                    valid_label,
                });
            }
            Ok(GroundTruth::KieEntities { entities })
        }
        Task::Dla => {
            let mut regions = Vec::new();
            for node in tree.iter() {
                for token in &node.classes {
                    if is_reserved_token(token) {
                        continue;
                    }
                    if let Some(l) = vocab.field_label(token) {
                        regions.push(LayoutRegion {
                            label: l.to_string(),
                            element: Some(node.id),
                            bbox: None,
                        });
                        break;
                    }
                    // A layout-looking token outside the vocabulary is kept
                    // as-is; verification rejects it as invalid_label.
                    if token.len() > 3 && token[..3].eq_ignore_ascii_case("le-") {
                        regions.push(LayoutRegion {
                            label: token.to_ascii_uppercase(),
                            element: Some(node.id),
                            bbox: None,
                        });
                        break;
                    }
                }
            }
            Ok(GroundTruth::LayoutRegions { regions })
        }
        other => Err(Error::Definition(format!(
            "micro annotations apply to KIE/DLA, not {other:?}"
        ))),
    }
}

/// Collect `class="handwritten ..."` elements: author id from an
/// `author<N>` token (default 1, with a warning), signature flag from a
/// `signature` token, target text from the element content. Regions with no
/// text are dropped.
pub fn extract_handwriting_regions(tree: &DocTree) -> Vec<HandwritingRegion> {
    let mut regions = Vec::new();
    for node in tree.iter() {
        if !node.has_class("handwritten") {
            continue;
        }
        let text = tree.text_content(node.id);
        if text.is_empty() {
            log::warn!("element {}: handwritten region with no text, dropped", node.id);
            continue;
        }
        let author_id = match node.classes.iter().find_map(|t| parse_author_token(t)) {
            Some(n) if n >= 1 => n,
            Some(_) | None => {
                log::warn!("element {}: no author token, defaulting to author 1", node.id);
                1
            }
        };
        regions.push(HandwritingRegion {
            element: node.id,
            author_id,
            writer_id: None,
            text,
            signature: node.has_class("signature"),
            region: None,
            word_boxes: Vec::new(),
        });
    }
    regions
}

/// Collect `data-placeholder` elements. Types stay raw here; the visual
/// elements module canonicalizes or rejects them.
pub fn extract_placeholders(tree: &DocTree) -> Vec<VisualElementPlaceholder> {
    let mut out = Vec::new();
    for node in tree.iter() {
        let raw_type = match node.attr("data-placeholder") {
            Some(t) => t.trim().to_string(),
            None => continue,
        };
        let style = InlineStyle::parse(node.attr("style").unwrap_or(""));
        out.push(VisualElementPlaceholder {
            element: node.id,
            raw_type,
            canonical_type: None,
            content: node.attr("data-content").unwrap_or("").to_string(),
            bbox: None,
            z_order: style.z_index.unwrap_or(0),
        });
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tree(body: &str) -> DocTree {
        DocTree::parse(&format!("<html><head></head><body>{body}</body></html>"))
    }

    fn gt_script(json: &str) -> String {
        format!(r#"<script type="application/json" id="GT">{json}</script>"#)
    }

    #[test]
    fn vqa_qa_pairs() {
        let t = tree(&format!("<p>x</p>{}", gt_script(r#"{"Q1":"A1","Q2":"A2"}"#)));
        match extract_macro_gt(&t, Task::Vqa).unwrap() {
            GroundTruth::QaPairs { pairs } => {
                assert_eq!(pairs["Q1"], "A1");
                assert_eq!(pairs["Q2"], "A2");
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn cls_label() {
        let t = tree(&gt_script(r#"{"label":"memo"}"#));
        assert_eq!(
            extract_macro_gt(&t, Task::Cls).unwrap(),
            GroundTruth::ClassLabel { label: "memo".into() }
        );
    }

    #[test]
    fn kie_flat_entities() {
        let t = tree(&gt_script(r#"{"company":"ACME Corp","total":"12.50"}"#));
        match extract_macro_gt(&t, Task::Kie).unwrap() {
            GroundTruth::KieEntities { entities } => {
                assert_eq!(entities.len(), 2);
                assert!(entities.iter().all(|e| e.group.is_none() && e.valid_label));
                assert!(entities.iter().any(|e| e.field == "company" && e.value == "ACME Corp"));
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn missing_script_is_no_gt() {
        let t = tree("<p>just text</p>");
        assert!(matches!(extract_macro_gt(&t, Task::Vqa), Err(Error::NoGt)));
    }

    #[test]
    fn malformed_payloads() {
        let t = tree(&gt_script("{not json"));
        assert!(matches!(extract_macro_gt(&t, Task::Vqa), Err(Error::MalformedGt(_))));
        let t = tree(&gt_script("[1,2]"));
        assert!(matches!(extract_macro_gt(&t, Task::Vqa), Err(Error::MalformedGt(_))));
        let t = tree(&gt_script("{}"));
        assert!(matches!(extract_macro_gt(&t, Task::Vqa), Err(Error::MalformedGt(_))));
        let t = tree(&format!("{}{}", gt_script(r#"{"a":"b"}"#), gt_script(r#"{"c":"d"}"#)));
        assert!(matches!(extract_macro_gt(&t, Task::Vqa), Err(Error::MalformedGt(_))));
        let t = tree(&gt_script(r#"{"label": {"nested": true}}"#));
        assert!(matches!(extract_macro_gt(&t, Task::Cls), Err(Error::MalformedGt(_))));
    }

    fn funsd_vocab() -> MicroVocab {
        MicroVocab::new(&["HEADER", "QUESTION", "ANSWER"], &["PAIR_"], &[])
    }

    fn cord_vocab() -> MicroVocab {
        MicroVocab::new(
            &["MENU_NM", "MENU_CNT", "MENU_PRICE", "TOTAL_PRICE"],
            &["MENU_"],
            &["VOID_MENU", "GENERIC"],
        )
    }

    #[test]
    fn funsd_grouped_entities() {
        let t = tree(
            r#"<span class="PAIR_1 QUESTION">Name:</span><span class="ANSWER PAIR_1">Jane Doe</span>"#,
        );
        match extract_micro_annotations(&t, &funsd_vocab(), Task::Kie).unwrap() {
            GroundTruth::KieEntities { entities } => {
                assert_eq!(entities.len(), 2);
                assert_eq!(entities[0].group.as_deref(), Some("PAIR_1"));
                assert_eq!(entities[0].field, "QUESTION");
                assert_eq!(entities[0].value, "Name:");
                // Token order is insignificant.
                assert_eq!(entities[1].field, "ANSWER");
                assert_eq!(entities[1].value, "Jane Doe");
                assert!(entities.iter().all(|e| e.valid_label));
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn cord_menu_and_static_groups() {
        // The tds need a real table: the HTML5 tree builder drops stray
        // table parts, keeping only their text.
        let t = tree(
            r#"<table><tr><td class="MENU_2 MENU_NM">Latte</td><td class="GENERIC TOTAL_PRICE">9.00</td></tr></table>"#,
        );
        match extract_micro_annotations(&t, &cord_vocab(), Task::Kie).unwrap() {
            GroundTruth::KieEntities { entities } => {
                assert_eq!(entities[0].group.as_deref(), Some("MENU_2"));
                assert_eq!(entities[0].field, "MENU_NM");
                assert_eq!(entities[1].group.as_deref(), Some("GENERIC"));
                assert_eq!(entities[1].field, "TOTAL_PRICE");
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn group_with_unknown_field_is_invalid() {
        let t = tree(r#"<span class="PAIR_3 BANANA">x</span>"#);
        match extract_micro_annotations(&t, &funsd_vocab(), Task::Kie).unwrap() {
            GroundTruth::KieEntities { entities } => {
                assert_eq!(entities.len(), 1);
                assert!(!entities[0].valid_label);
                assert_eq!(entities[0].group.as_deref(), Some("PAIR_3"));
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn menu_nm_is_not_a_group_token() {
        // MENU_NM shares the MENU_ prefix but the suffix is not numeric.
        let v = cord_vocab();
        assert_eq!(v.group_id("MENU_2").as_deref(), Some("MENU_2"));
        assert_eq!(v.group_id("menu_14").as_deref(), Some("MENU_14"));
        assert!(v.group_id("MENU_NM").is_none());
        assert!(v.group_id("MENU_").is_none());
    }

    #[test]
    fn dla_layout_regions() {
        let t = tree(r#"<div class="LE-TABLE"><table></table></div><div class="le-figure"></div>"#);
        let v = MicroVocab::new(&["LE-TABLE", "LE-FIGURE"], &[], &[]);
        match extract_micro_annotations(&t, &v, Task::Dla).unwrap() {
            GroundTruth::LayoutRegions { regions } => {
                assert_eq!(regions.len(), 2);
                assert_eq!(regions[0].label, "LE-TABLE");
                assert_eq!(regions[1].label, "LE-FIGURE");
                assert!(regions.iter().all(|r| r.bbox.is_none()));
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn dla_unknown_layout_label_survives_for_rejection() {
        let t = tree(r#"<div class="LE-HOLOGRAM"></div>"#);
        let v = MicroVocab::new(&["LE-TABLE"], &[], &[]);
        match extract_micro_annotations(&t, &v, Task::Dla).unwrap() {
            GroundTruth::LayoutRegions { regions } => {
                assert_eq!(regions.len(), 1);
                assert_eq!(regions[0].label, "LE-HOLOGRAM");
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn handwriting_regions() {
        let t = tree(concat!(
            r#"<span class="handwritten author2">John Doe</span>"#,
            r#"<span class="handwritten signature author1">J.D.</span>"#,
            r#"<span class="handwritten">lone note</span>"#,
            r#"<span class="handwritten author3"></span>"#,
        ));
        let regions = extract_handwriting_regions(&t);
        assert_eq!(regions.len(), 3);
        assert_eq!(regions[0].author_id, 2);
        assert_eq!(regions[0].text, "John Doe");
        assert!(!regions[0].signature);
        assert!(regions[1].signature);
        assert_eq!(regions[1].author_id, 1);
        assert_eq!(regions[2].author_id, 1, "missing author token defaults to 1");
    }

    #[test]
    fn handwritten_kie_value_keeps_gt_tokens() {
        let t = tree(r#"<span class="PAIR_1 ANSWER handwritten author1">Jane</span>"#);
        match extract_micro_annotations(&t, &funsd_vocab(), Task::Kie).unwrap() {
            GroundTruth::KieEntities { entities } => {
                assert_eq!(entities.len(), 1);
                assert!(entities[0].valid_label);
                assert_eq!(entities[0].field, "ANSWER");
            }
            other => panic!("{other:?}"),
        }
        assert_eq!(extract_handwriting_regions(&t).len(), 1);
    }

    #[test]
    fn placeholders() {
        let t = tree(concat!(
            r#"<div data-placeholder="stamp" data-content="APPROVED 2024-03-15" style="position:absolute;top:50mm;right:20mm;width:35mm;height:35mm;z-index:10;"></div>"#,
            r#"<div data-placeholder="chart" style="width:80mm;height:60mm;"></div>"#,
            r#"<div data-placeholder="logo"></div>"#,
        ));
        let ps = extract_placeholders(&t);
        assert_eq!(ps.len(), 3);
        assert_eq!(ps[0].raw_type, "stamp");
        assert_eq!(ps[0].content, "APPROVED 2024-03-15");
        assert_eq!(ps[0].z_order, 10);
        assert_eq!(ps[1].raw_type, "chart");
        assert_eq!(ps[1].z_order, 0);
        assert_eq!(ps[2].content, "");
        assert!(ps.iter().all(|p| p.canonical_type.is_none()));
    }
}
