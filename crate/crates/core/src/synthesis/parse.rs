//! Split a raw backend response into per-document HTML blocks.
//!
//! The template asks for `1. <HTML>...</HTML>` numbering, but only the
//! uppercase wrapper tags are load-bearing: blocks are whatever sits between
//! `<HTML>` and `</HTML>` pairs, in order. Broken blocks are dropped one by
//! one with a reason, never failing the whole response.

const OPEN: &str = "<HTML>";
const CLOSE: &str = "</HTML>";

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DropRecord {
    /// 1-based position of the block among all opened blocks.
    pub index: usize,
    pub reason: String,
}

#[derive(Debug, Clone, Default)]
pub struct ParsedResponse {
    pub documents: Vec<String>,
    pub drops: Vec<DropRecord>,
}

/// Extract each well-formed `<HTML>...</HTML>` block. The inner content must
/// contain an `<html` element (any case); anything else is recorded as a
/// drop. A prose-only response yields an empty list.
pub fn parse_response(raw: &str) -> ParsedResponse {
    let mut out = ParsedResponse::default();
    let mut cursor = 0;
    let mut index = 0;
    while let Some(start_rel) = raw[cursor..].find(OPEN) {
        index += 1;
        let inner_start = cursor + start_rel + OPEN.len();
        match raw[inner_start..].find(CLOSE) {
            Some(end_rel) => {
                let inner = &raw[inner_start..inner_start + end_rel];
                if inner.to_ascii_lowercase().contains("<html") {
                    out.documents.push(inner.trim().to_string());
                } else {
                    log::warn!("response block {index}: no <html> element, dropped");
                    out.drops.push(DropRecord {
                        index,
                        reason: "no <html> element inside wrapper".to_string(),
                    });
                }
                cursor = inner_start + end_rel + CLOSE.len();
            }
            None => {
                log::warn!("response block {index}: unterminated, dropped");
                out.drops.push(DropRecord { index, reason: "unterminated block".to_string() });
                break;
            }
        }
    }
    if out.documents.is_empty() {
        log::warn!("response yielded no parseable documents");
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn two_numbered_blocks() {
        let raw = "1. <HTML><!DOCTYPE html><html><body>a</body></html></HTML>\n2. <HTML><html><body>b</body></html></HTML>";
        let p = parse_response(raw);
        assert_eq!(p.documents.len(), 2);
        assert!(p.drops.is_empty());
        assert!(p.documents[0].contains(">a<"));
        assert!(p.documents[1].contains(">b<"));
    }

    #[test]
    fn unterminated_second_block() {
        let raw = "1. <HTML><html><body>ok</body></html></HTML> 2. <HTML><html><body>broken";
        let p = parse_response(raw);
        assert_eq!(p.documents.len(), 1);
        assert_eq!(p.drops, vec![DropRecord { index: 2, reason: "unterminated block".into() }]);
    }

    #[test]
    fn prose_only_response_is_empty() {
        let p = parse_response("I cannot generate documents for this request.");
        assert!(p.documents.is_empty());
        assert!(p.drops.is_empty());
    }

    #[test]
    fn wrapper_without_html_element_is_dropped() {
        let raw = "<HTML>just some text</HTML><HTML><html><body>x</body></html></HTML>";
        let p = parse_response(raw);
        assert_eq!(p.documents.len(), 1);
        assert_eq!(p.drops.len(), 1);
        assert_eq!(p.drops[0].index, 1);
    }

    #[test]
    fn wrapper_matching_is_case_sensitive() {
        // A lowercase wrapper is the document element, not a block marker.
        let p = parse_response("<html><body>no wrapper</body></html>");
        assert!(p.documents.is_empty());
        let p = parse_response("<HTML><html lang=\"en\"><body>x</body></html></HTML>");
        assert_eq!(p.documents.len(), 1);
    }

    #[test]
    fn blocks_keep_order() {
        let raw: String = (0..5)
            .map(|i| format!("{}. <HTML><html><body>doc{}</body></html></HTML>\n", i + 1, i))
            .collect();
        let p = parse_response(&raw);
        assert_eq!(p.documents.len(), 5);
        for (i, d) in p.documents.iter().enumerate() {
            assert!(d.contains(&format!("doc{i}")));
        }
    }
}
