//! Minimal inline-style parsing: the handful of declarations the templates
//! actually produce (dimensions, font size, absolute positioning, z-index).
//! Lengths resolve to px at 96 dpi; unknown declarations are ignored.

pub const DPI: f64 = 96.0;

#[derive(Debug, Clone, Default, PartialEq)]
pub struct InlineStyle {
    pub width: Option<f64>,
    pub height: Option<f64>,
    pub font_size: Option<f64>,
    pub absolute: bool,
    pub top: Option<f64>,
    pub left: Option<f64>,
    pub right: Option<f64>,
    pub bottom: Option<f64>,
    pub z_index: Option<i32>,
    pub display_none: bool,
    pub margin: f64,
    pub padding: f64,
}

impl InlineStyle {
    pub fn parse(style: &str) -> InlineStyle {
        let mut out = InlineStyle::default();
        for decl in style.split(';') {
            let Some((key, value)) = decl.split_once(':') else { continue };
            let key = key.trim().to_ascii_lowercase();
            let value = value.trim();
            match key.as_str() {
                "width" => out.width = parse_len(value),
                "height" => out.height = parse_len(value),
                "font-size" => out.font_size = parse_len(value),
                "top" => out.top = parse_len(value),
                "left" => out.left = parse_len(value),
                "right" => out.right = parse_len(value),
                "bottom" => out.bottom = parse_len(value),
                "position" => out.absolute = value.eq_ignore_ascii_case("absolute"),
                "z-index" => out.z_index = value.parse().ok(),
                "display" => out.display_none = value.eq_ignore_ascii_case("none"),
                "margin" => out.margin = parse_len(value).unwrap_or(0.0),
                "padding" => out.padding = parse_len(value).unwrap_or(0.0),
                _ => {}
            }
        }
        out
    }
}

/// Resolve a CSS length to px. Supports px, mm, cm, in, pt, and bare
/// numbers (taken as px). Percentages and em need context and resolve to
/// None, as does anything unparseable.
pub fn parse_len(value: &str) -> Option<f64> {
    let v = value.trim().to_ascii_lowercase();
    if v.is_empty() || v.ends_with('%') || v.ends_with("em") {
        return None;
    }
    let (number, factor) = if let Some(n) = v.strip_suffix("px") {
        (n, 1.0)
    } else if let Some(n) = v.strip_suffix("mm") {
        (n, DPI / 25.4)
    } else if let Some(n) = v.strip_suffix("cm") {
        (n, DPI / 2.54)
    } else if let Some(n) = v.strip_suffix("in") {
        (n, DPI)
    } else if let Some(n) = v.strip_suffix("pt") {
        (n, DPI / 72.0)
    } else {
        (v.as_str(), 1.0)
    };
    number.trim().parse::<f64>().ok().map(|n| n * factor)
}
