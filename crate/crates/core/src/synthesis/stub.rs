//! Deterministic generation backend for tests and offline runs.
//!
//! Produces numbered `<HTML>...</HTML>` blocks shaped like real backend
//! output: task-appropriate ground truth, handwriting spans, and visual
//! placeholders. Every document is a pure function of (stub seed, call id,
//! position in call), so calls are idempotent and runs reproducible.
//!
//! With failure planting on (the default), every 10th document (global index
//! ≡ 3 mod 10) carries ground truth that verification must reject, and every
//! 20th (index ≡ 7 mod 20) declares a body too tall for one page.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::backend::{BackendResponse, BackendUsage, GenerationBackend, GenerationRequest};
use super::extract::MicroVocab;
use super::{Task, TemplateKind};
use crate::rng::labeled_rng;
use crate::Result;

const LEXICON: [&str; 32] = [
    "shipment", "ledger", "quarterly", "remittance", "schedule", "approval", "warehouse",
    "transfer", "statement", "balance", "inventory", "courier", "dispatch", "renewal",
    "receipt", "contract", "summary", "division", "provision", "estimate", "clearance",
    "billing", "account", "posting", "transit", "archive", "notice", "payment", "order",
    "review", "record", "filing",
];

const NAMES: [&str; 6] =
    ["Jane Doe", "John Smith", "Maria Garcia", "Wei Chen", "Omar Farouk", "Anna Kowalska"];

const CLS_LABELS: [&str; 5] = ["memo", "letter", "invoice", "form", "email"];
const KIE_FIELDS: [&str; 3] = ["reference_no", "issue_date", "total_amount"];
const KIE_MICRO_LABELS: [&str; 2] = ["QUESTION", "ANSWER"];
const DLA_LABELS: [&str; 4] = ["LE-TITLE", "LE-TEXT", "LE-TABLE", "LE-LIST"];

/// Body height that spills past one test-renderer page (4000 px).
const MULTI_PAGE_HEIGHT: u32 = 9000;

#[derive(Debug, Clone)]
pub struct StubBackend {
    pub task: Task,
    pub template: TemplateKind,
    pub seed: u64,
    /// Plant rejectable ground truth at global indices ≡ 3 (mod 10).
    pub plant_invalid_gt: bool,
    /// Plant over-tall bodies at global indices ≡ 7 (mod 20).
    pub plant_multi_page: bool,
    /// Documents per call when the prompt does not state a count.
    pub default_num_solutions: u32,
    pub doc_type: String,
    /// Task vocabulary: class labels, KIE field labels, or layout labels.
    pub labels: Vec<String>,
}

impl StubBackend {
    pub fn new(task: Task, seed: u64) -> Self {
        let template = match task {
            Task::Dla => TemplateKind::Micro,
            _ => TemplateKind::Macro,
        };
        StubBackend {
            task,
            template,
            seed,
            plant_invalid_gt: true,
            plant_multi_page: true,
            default_num_solutions: task.default_num_solutions(),
            doc_type: "receipt".to_string(),
            labels: Self::default_labels(task),
        }
    }

    /// Disable failure planting; every document verifies cleanly.
    pub fn clean(mut self) -> Self {
        self.plant_invalid_gt = false;
        self.plant_multi_page = false;
        self
    }

    /// Plant only invalid ground truth, never multi-page bodies.
    pub fn without_multi_page(mut self) -> Self {
        self.plant_multi_page = false;
        self
    }

    /// Switch KIE output to element-level class annotations.
    pub fn micro(mut self) -> Self {
        self.template = TemplateKind::Micro;
        if self.task == Task::Kie {
            self.labels = KIE_MICRO_LABELS.iter().map(|s| s.to_string()).collect();
        }
        self
    }

    pub fn default_labels(task: Task) -> Vec<String> {
        let labels: &[&str] = match task {
            Task::Vqa => &[],
            Task::Cls => &CLS_LABELS,
            Task::Kie => &KIE_FIELDS,
            Task::Dla => &DLA_LABELS,
        };
        labels.iter().map(|s| s.to_string()).collect()
    }

    /// Vocabulary for extracting this stub's micro annotations.
    pub fn micro_vocab(&self) -> MicroVocab {
        let labels: Vec<&str> = self.labels.iter().map(String::as_str).collect();
        match self.task {
            Task::Kie => MicroVocab::new(&labels, &["PAIR_"], &[]),
            _ => MicroVocab::new(&labels, &[], &[]),
        }
    }

    fn gt_invalid(&self, idx: u64) -> bool {
        self.plant_invalid_gt && idx % 10 == 3
    }

    fn multi_page(&self, idx: u64) -> bool {
        self.plant_multi_page && idx % 20 == 7
    }

    /// One complete document for the given global index.
    fn document(&self, idx: u64) -> String {
        let mut rng = labeled_rng(self.seed, &format!("stub-doc-{idx}"));
        let reference = format!("REF-{:04}", rng.gen_range(1000..10000));
        let date = format!("2024-{:02}-{:02}", rng.gen_range(1..=12), rng.gen_range(1..=28));
        let total = format!("{}.{:02}", rng.gen_range(10..900), rng.gen_range(0..100));
        let filler_a = sentence(&mut rng, 7);
        let filler_b = sentence(&mut rng, 9);

        let mut body = String::new();
        body.push_str(&format!("<h1>{} {}</h1>", title_case(&self.doc_type), idx));
        body.push_str(&format!("<p>{filler_a}</p>"));

        match (self.task, self.template) {
            (Task::Vqa, _) | (Task::Kie, TemplateKind::Macro) => {
                body.push_str(&format!(
                    "<p>Reference number {reference} issued on {date}.</p>\
                     <p>Amount due {total} payable within 30 days.</p>"
                ));
            }
            (Task::Kie, TemplateKind::Micro) => {
                let (g2_field, g2_value): (&str, &str) = if self.gt_invalid(idx) {
                    // Unknown field label inside a valid group: extraction
                    // keeps the entity but flags it for rejection.
                    ("SUBTOTAL", total.as_str())
                } else {
                    ("ANSWER", total.as_str())
                };
                body.push_str(&format!(
                    "<p><span class=\"PAIR_1 QUESTION\">Reference:</span> \
                     <span class=\"PAIR_1 ANSWER\">{reference}</span></p>\
                     <p><span class=\"PAIR_2 QUESTION\">Total:</span> \
                     <span class=\"PAIR_2 {g2_field}\">{g2_value}</span></p>"
                ));
            }
            (Task::Cls, _) => {
                body.push_str(&format!("<p>Filed under {reference} on {date}.</p>"));
            }
            (Task::Dla, _) => {
                let bad = if self.gt_invalid(idx) { " class=\"LE-WATERMARK\"" } else { "" };
                body.push_str(&format!(
                    "<p class=\"LE-TEXT\">{filler_b}</p>\
                     <table class=\"LE-TABLE\"><tr><td>{}</td><td>{}</td></tr>\
                     <tr><td>{date}</td><td>{total}</td></tr></table>\
                     <ul class=\"LE-LIST\"><li>{}</li><li>{}</li></ul>\
                     <div{bad}>{}</div>",
                    word(&mut rng),
                    word(&mut rng),
                    word(&mut rng),
                    word(&mut rng),
                    word(&mut rng),
                ));
            }
        }
        // DLA reuses filler_b inside LE-TEXT; every other task gets it plain.
        if self.task != Task::Dla {
            body.push_str(&format!("<p>{filler_b}</p>"));
        }

        if idx.is_multiple_of(2) {
            let name = NAMES[rng.gen_range(0..NAMES.len())];
            let author = 1 + (idx % 3);
            body.push_str(&format!(
                "<p>Approved by <span class=\"handwritten author{author}\">{name}</span></p>"
            ));
        }
        if idx.is_multiple_of(6) {
            let name = NAMES[rng.gen_range(0..NAMES.len())];
            body.push_str(&format!(
                "<p><span class=\"handwritten signature author1\">{name}</span></p>"
            ));
        }
        if idx.is_multiple_of(3) {
            body.push_str(
                "<div data-placeholder=\"stamp\" data-content=\"APPROVED\" \
                 style=\"position: absolute; left: 560px; top: 48px; \
                 width: 120px; height: 120px\"></div>",
            );
        }
        if idx.is_multiple_of(5) {
            let digits = format!("{:010}", rng.gen_range(0u64..10_000_000_000));
            body.push_str(&format!(
                "<div data-placeholder=\"barcode\" data-content=\"{digits}\" \
                 style=\"width: 240px; height: 60px\"></div>"
            ));
        }

        if self.template == TemplateKind::Macro {
            let gt = self.macro_gt(idx, &reference, &date, &total);
            body.push_str(&format!(
                "<script type=\"application/json\" id=\"GT\">{gt}</script>"
            ));
        }

        let body_style = if self.multi_page(idx) {
            format!("width: 794px; height: {MULTI_PAGE_HEIGHT}px")
        } else {
            "width: 794px".to_string()
        };
        format!(
            "<!DOCTYPE html><html><head><title>{} {idx}</title></head>\
             <body style=\"{body_style}\">{body}</body></html>",
            title_case(&self.doc_type)
        )
    }

    fn macro_gt(&self, idx: u64, reference: &str, date: &str, total: &str) -> String {
        let absent = format!("ABSENT-{:04}", idx);
        match self.task {
            Task::Vqa => {
                let total_answer = if self.gt_invalid(idx) { absent.as_str() } else { total };
                serde_json::json!({
                    "What is the reference number?": reference,
                    "When was it issued?": date,
                    "What is the total amount?": total_answer,
                })
                .to_string()
            }
            Task::Cls => {
                let label = if self.gt_invalid(idx) {
                    "unrecognized".to_string()
                } else {
                    let mut rng = labeled_rng(self.seed, &format!("stub-label-{idx}"));
                    self.labels[rng.gen_range(0..self.labels.len())].clone()
                };
                serde_json::json!({ "label": label }).to_string()
            }
            Task::Kie => {
                let total_value = if self.gt_invalid(idx) { absent.as_str() } else { total };
                serde_json::json!({
                    "reference_no": reference,
                    "issue_date": date,
                    "total_amount": total_value,
                })
                .to_string()
            }
            Task::Dla => unreachable!("DLA always uses the micro template"),
        }
    }
}

fn word(rng: &mut ChaCha8Rng) -> &'static str {
    LEXICON[rng.gen_range(0..LEXICON.len())]
}

fn sentence(rng: &mut ChaCha8Rng, words: usize) -> String {
    let mut out = String::new();
    for i in 0..words {
        if i > 0 {
            out.push(' ');
        }
        out.push_str(word(rng));
    }
    out.push('.');
    out
}

fn title_case(s: &str) -> String {
    let mut chars = s.chars();
    match chars.next() {
        Some(c) => c.to_uppercase().chain(chars).collect(),
        None => String::new(),
    }
}

/// Documents-per-call from the prompt's trailing sentence, when present.
fn parse_num_solutions(prompt: &str) -> Option<u32> {
    let start = prompt.rfind("Generate ")?;
    let rest = &prompt[start + "Generate ".len()..];
    let end = rest.find(' ')?;
    rest[..end].parse().ok()
}

impl GenerationBackend for StubBackend {
    fn name(&self) -> &'static str {
        "stub"
    }

    fn generate(&self, req: &GenerationRequest<'_>) -> Result<BackendResponse> {
        let m = parse_num_solutions(req.prompt).unwrap_or(self.default_num_solutions) as u64;
        let mut text = String::new();
        for i in 0..m {
            let idx = req.call_id * m + i;
            text.push_str(&format!("{}. <HTML>{}</HTML>\n\n", i + 1, self.document(idx)));
        }
        let usage = BackendUsage {
            input_tokens: req.prompt.len() as u64 / 4,
            output_tokens: text.len() as u64 / 4,
        };
        Ok(BackendResponse { text, usage: Some(usage) })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synthesis::{extract_macro_gt, instantiate_prompt, parse_response, DocTree};
    use crate::synthesis::{GroundTruth, PromptSpec};

    fn request(prompt: &str, call_id: u64) -> GenerationRequest<'_> {
        GenerationRequest { prompt, images: &[], call_id }
    }

    fn vqa_prompt(m: u32) -> String {
        let spec = PromptSpec::new(
            TemplateKind::Macro,
            "English",
            "receipt",
            "Questions about the document",
            r#"{"<question>": "<answer>"}"#,
            m,
        )
        .unwrap();
        instantiate_prompt(&spec).unwrap()
    }

    #[test]
    fn same_call_id_is_byte_identical() {
        let stub = StubBackend::new(Task::Vqa, 42);
        let prompt = vqa_prompt(3);
        let a = stub.generate(&request(&prompt, 5)).unwrap();
        let b = stub.generate(&request(&prompt, 5)).unwrap();
        assert_eq!(a.text, b.text);
        assert_eq!(a.usage, b.usage);
    }

    #[test]
    fn distinct_call_ids_differ() {
        let stub = StubBackend::new(Task::Vqa, 42);
        let prompt = vqa_prompt(3);
        let a = stub.generate(&request(&prompt, 0)).unwrap();
        let b = stub.generate(&request(&prompt, 1)).unwrap();
        assert_ne!(a.text, b.text);
    }

    #[test]
    fn emits_exactly_m_parseable_documents() {
        let stub = StubBackend::new(Task::Vqa, 7);
        for m in [2u32, 3] {
            let prompt = vqa_prompt(m);
            let response = stub.generate(&request(&prompt, 0)).unwrap();
            let parsed = parse_response(&response.text);
            assert_eq!(parsed.documents.len(), m as usize);
            assert!(parsed.drops.is_empty());
        }
    }

    #[test]
    fn macro_gt_round_trips_through_extraction() {
        let stub = StubBackend::new(Task::Vqa, 7);
        let response = stub.generate(&request(&vqa_prompt(3), 0)).unwrap();
        for html in parse_response(&response.text).documents {
            let tree = DocTree::parse(&html);
            let gt = extract_macro_gt(&tree, Task::Vqa).unwrap();
            match gt {
                GroundTruth::QaPairs { pairs } => assert_eq!(pairs.len(), 3),
                other => panic!("expected QA pairs, got {other:?}"),
            }
        }
    }

    #[test]
    fn plants_absent_answer_at_global_index_3() {
        let stub = StubBackend::new(Task::Vqa, 99);
        // M=3: call 1 spans indices 3..6, so its first document is index 3.
        let response = stub.generate(&request(&vqa_prompt(3), 1)).unwrap();
        let docs = parse_response(&response.text).documents;
        assert!(docs[0].contains("ABSENT-0003"));
        assert!(!docs[1].contains("ABSENT"));
        // The absent token lives only in the GT script, not the body text.
        let before_script = docs[0].split("<script").next().unwrap();
        assert!(!before_script.contains("ABSENT-0003"));
    }

    #[test]
    fn plants_tall_body_at_global_index_7() {
        let stub = StubBackend::new(Task::Vqa, 99);
        let response = stub.generate(&request(&vqa_prompt(3), 2)).unwrap();
        let docs = parse_response(&response.text).documents;
        // Call 2 covers indices 6, 7, 8.
        assert!(docs[1].contains("height: 9000px"));
        assert!(!docs[0].contains("height: 9000px"));
        assert!(!docs[2].contains("height: 9000px"));
    }

    #[test]
    fn clean_stub_plants_nothing() {
        let stub = StubBackend::new(Task::Vqa, 99).clean();
        let prompt = vqa_prompt(3);
        for call in 0..20 {
            let response = stub.generate(&request(&prompt, call)).unwrap();
            assert!(!response.text.contains("ABSENT"));
            assert!(!response.text.contains("9000px"));
        }
    }

    #[test]
    fn reports_token_usage() {
        let stub = StubBackend::new(Task::Cls, 1);
        let prompt = vqa_prompt(3);
        let usage = stub.generate(&request(&prompt, 0)).unwrap().usage.unwrap();
        assert_eq!(usage.input_tokens, prompt.len() as u64 / 4);
        assert!(usage.output_tokens > 0);
    }

    #[test]
    fn unparseable_prompt_falls_back_to_default_count() {
        let stub = StubBackend::new(Task::Dla, 5);
        let response = stub.generate(&request("free-form prompt", 0)).unwrap();
        let parsed = parse_response(&response.text);
        assert_eq!(parsed.documents.len(), 2, "DLA defaults to M=2");
    }

    #[test]
    fn dla_documents_carry_layout_classes() {
        let stub = StubBackend::new(Task::Dla, 5);
        let response = stub.generate(&request("x", 0)).unwrap();
        for html in parse_response(&response.text).documents {
            assert!(html.contains("LE-TEXT"));
            assert!(html.contains("LE-TABLE"));
            assert!(!html.contains("<script"), "micro documents have no GT script");
        }
    }

    #[test]
    fn kie_micro_invalid_plant_uses_unknown_field() {
        let stub = StubBackend::new(Task::Kie, 11).micro();
        let prompt = vqa_prompt(3);
        let response = stub.generate(&request(&prompt, 1)).unwrap();
        let docs = parse_response(&response.text).documents;
        assert!(docs[0].contains("PAIR_2 SUBTOTAL"), "index 3 plants an unknown field");
        assert!(docs[1].contains("PAIR_2 ANSWER"));
    }
}
