//! Prompt templates and instantiation.
//!
//! Two templates: macro (document-level JSON ground truth in a script tag)
//! and micro (element-level class annotations). Five parameters fill them:
//! language, doc_type, gt_type, gt_format, num_solutions; the seed image
//! count is always twice the solution count.

use crate::error::Error;
use crate::synthesis::{PromptSpec, TemplateKind};
use crate::Result;

pub const MACRO_TEMPLATE: &str = r#"You are an AI creating authentic HTML representations of documents based on seed images. Analyze the seed images for structural and semantic content and generate authentic variations. The generated documents will be printed.

## Requirements
1. **Authenticity**: Reflect stylistic elements from seed images without copying text/layouts verbatim
2. **Format**: Single-page documents with dimensions appropriate to the document type
3. **Language**: {language}
4. **Static Only**: No animations, transitions, or dynamic effects

## Technical
- Wrap each document in `<HTML>...</HTML>` tags, numbered sequentially
- Static CSS only for single-page layout
- Generate only minified CSS, HTML, JS.

## Content Guidelines
**DO**: Adapt cultural elements, vary layouts/colors/typography, use static styling
**DON'T**: Copy text/code blocks, reuse identical sections, include dynamic effects

## Handwritten Fields (if document type requires)
- Mark with class 'handwritten' and use regular text
- Apply no special styles to 'handwritten', except generously increased size, in line with realistic handwriting
- Assign author ID via class ('author1', 'author2', etc.) to distinguish different people
- If the handwriting represents a signature mark it additionally with class 'signature'

## Visual Placeholders (if document type requires)
- Insert `<div data-placeholder="type" style="...">` for non-text elements at appropriate positions
- Valid types are: stamp, logo, figure, barcode, photo
- Add data-content attribute with actual content description
- For stamps, use `position:absolute;z-index:10;` and specify 'top' and 'right'
- Always provide appropiate dimensions
- Example: `<div data-placeholder="stamp" data-content="APPROVED 2024-03-15" style="position:absolute;top:50mm;right:20mm;width:35mm;height:35mm;z-index:10;"></div>`
- Example: `<div data-placeholder="logo" data-content="ACME Corp Logo" style="width:150mm;height:100mm;"></div>`

## Output Format
Generate minified HTML like this:
```
1. <HTML><!DOCTYPE html><html ... document 1 ... </html></HTML>
2. <HTML><!DOCTYPE html><html ... document 2 ... </html></HTML>
...
```
## Ground Truth
Generate ground truth as JSON in `<script type="application/json" id="GT">...</script>` tag.
Ground truth specification: {gt_type}
Ground truth must follow the format: {gt_format}

## Quality Checklist
- [ ] Authentic variations without verbatim copying from seed images
- [ ] Static styling only (no animations or dynamic effects)
- [ ] Single-page format with minified HTML/CSS
- [ ] Content in {language}
- [ ] GT JSON present, correctly formatted and semantically coherent
- [ ] Visual elements are semantically coherent

Generate {num_solutions} distinct {doc_type} documents based on {num_seed_images} seed images."#;

pub const MICRO_TEMPLATE: &str = r#"You are an AI creating authentic HTML representations of documents based on seed images. Analyze the seed images for structural and semantic content and generate authentic variations. The generated documents will be printed.

## Requirements
1. **Authenticity**: Reflect stylistic elements from seed images without copying text/layouts verbatim
2. **Format**: Single-page documents with dimensions appropriate to the document type
3. **Language**: {language}
4. **Static Only**: No animations, transitions, or dynamic effects

## Technical
- Wrap each document in `<HTML>...</HTML>` tags, numbered sequentially
- Static CSS only for single-page layout
- Generate only minified CSS, HTML, JS.

## Content Guidelines
**DO**: Adapt cultural elements, vary layouts/colors/typography, use static styling
**DON'T**: Copy text/code blocks, reuse identical sections, include dynamic effects

## Handwritten Fields (if document type requires)
- Mark with class 'handwritten' and use regular text
- Apply no special styles to 'handwritten', except generously increased size, in line with realistic handwriting
- Assign author ID via class ('author1', 'author2', etc.) to distinguish different people
- If the handwriting represents a signature mark it additionally with class 'signature'

## Visual Placeholders (if document type requires)
- Insert `<div data-placeholder="type" style="...">` for non-text elements at appropriate positions
- Valid types are: stamp, logo, figure, barcode, photo
- Add data-content attribute with actual content description
- For stamps, use `position:absolute;z-index:10;` and specify 'top' and 'right'
- Always provide appropiate dimensions
- Example: `<div data-placeholder="stamp" data-content="APPROVED 2024-03-15" style="position:absolute;top:50mm;right:20mm;width:35mm;height:35mm;z-index:10;"></div>`
- Example: `<div data-placeholder="logo" data-content="ACME Corp Logo" style="width:150mm;height:100mm;"></div>`

## Output Format
Generate minified HTML like this:
```
1. <HTML><!DOCTYPE html><html ... document 1 ... </html></HTML>
2. <HTML><!DOCTYPE html><html ... document 2 ... </html></HTML>
...
```
## Ground Truth
Generate ground truth by assigning each applicable element in HTML a class from the list below to uniquely identify its label:
{gt_type}
{gt_format}


## Quality Checklist
- [ ] Authentic variations without verbatim copying from seed images
- [ ] Static styling only (no animations or dynamic effects)
- [ ] Single-page format with minified HTML/CSS
- [ ] Content in {language}
- [ ] GT labels via class annotations are present and assigned to correct elements
- [ ] Visual elements are semantically coherent

Generate {num_solutions} distinct {doc_type} documents based on {num_seed_images} seed images."#;

/// Fill the selected template. Every placeholder slot is replaced; gt_format
/// may be empty for the micro template only.
pub fn instantiate_prompt(spec: &PromptSpec) -> Result<String> {
    spec.validate()?;
    let template = match spec.template_kind {
        TemplateKind::Macro => MACRO_TEMPLATE,
        TemplateKind::Micro => MICRO_TEMPLATE,
    };
    let filled = template
        .replace("{language}", &spec.language)
        .replace("{doc_type}", &spec.doc_type)
        .replace("{gt_type}", &spec.gt_type)
        .replace("{gt_format}", &spec.gt_format)
        .replace("{num_solutions}", &spec.num_solutions.to_string())
        .replace("{num_seed_images}", &spec.num_seed_images.to_string());
    if let Some(start) = filled.find('{') {
        // Guard against template drift: all slots must be consumed. Braces
        // inside filled parameter values (e.g. JSON gt_format) are fine.
        let tail = &filled[start..];
        for slot in ["{language}", "{doc_type}", "{gt_type}", "{gt_format}", "{num_solutions}", "{num_seed_images}"] {
            if tail.contains(slot) {
                return Err(Error::PromptTemplate(format!("unfilled slot {slot}")));
            }
        }
    }
    Ok(filled)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec(kind: TemplateKind) -> PromptSpec {
        PromptSpec::new(
            kind,
            "English",
            "receipt",
            "Questions about the document",
            r#"{"<question>": "<answer>"}"#,
            3,
        )
        .unwrap()
    }

    #[test]
    fn macro_trailing_sentence() {
        let p = instantiate_prompt(&spec(TemplateKind::Macro)).unwrap();
        assert!(p.ends_with("Generate 3 distinct receipt documents based on 6 seed images."));
        assert!(p.contains("Ground truth specification: Questions about the document"));
        assert!(p.contains(r#"`<script type="application/json" id="GT">...</script>`"#));
    }

    #[test]
    fn micro_has_class_list_and_no_gt_json_instruction() {
        let s = PromptSpec::new(
            TemplateKind::Micro,
            "English",
            "scanned form",
            "* \"LE-TABLE\": Any tabular structure\n* \"LE-FIGURE\": Images",
            "",
            2,
        )
        .unwrap();
        let p = instantiate_prompt(&s).unwrap();
        assert!(p.contains("LE-TABLE"));
        assert!(!p.contains("Generate ground truth as JSON"));
        assert!(p.contains("assigning each applicable element in HTML a class"));
        assert!(p.ends_with("Generate 2 distinct scanned form documents based on 4 seed images."));
    }

    #[test]
    fn both_templates_list_the_placeholder_types() {
        for kind in [TemplateKind::Macro, TemplateKind::Micro] {
            let p = instantiate_prompt(&spec(kind)).unwrap();
            assert!(p.contains("Valid types are: stamp, logo, figure, barcode, photo"));
            assert!(p.contains("Mark with class 'handwritten'"));
            assert!(p.contains("('author1', 'author2', etc.)"));
        }
    }

    #[test]
    fn missing_doc_type_is_an_error() {
        let err = PromptSpec::new(TemplateKind::Macro, "English", "", "qa", "fmt", 3);
        assert!(err.is_err());
    }

    #[test]
    fn empty_gt_format_allowed_only_for_micro() {
        assert!(PromptSpec::new(TemplateKind::Macro, "en", "letter", "qa", "", 3).is_err());
        assert!(PromptSpec::new(TemplateKind::Micro, "en", "letter", "labels", "", 3).is_ok());
    }

    #[test]
    fn seed_image_count_is_twice_solutions() {
        let s = spec(TemplateKind::Macro);
        assert_eq!(s.num_seed_images, 6);
        let p = instantiate_prompt(&s).unwrap();
        assert!(!p.contains("{num_seed_images}"));
    }
}
