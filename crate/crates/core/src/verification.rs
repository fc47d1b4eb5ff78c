//! Ground-truth verification: normalized Levenshtein text matching, span
//! containment against rendered words, label vocabulary checks, region
//! geometry checks, and the accept/reject decision per document.

use std::collections::BTreeMap;
use std::fmt;
use std::ops::Range;

use serde::{Deserialize, Serialize};

use crate::geometry::PxBox;
use crate::rendering::WordBox;
use crate::synthesis::{GroundTruth, KieEntity, LayoutRegion, Task};

/// Per-answer similarity threshold (ANLS at 75%).
pub const DEFAULT_TAU_ANLS: f64 = 0.75;

/// Why a document was rejected. Closed set; serialized into manifests.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RejectReason {
    NoGt,
    BadGt,
    InvalidLabel,
    AnswerNotInText,
    OutOfBounds,
    MultiPage,
    RenderFail,
    OcrFail,
}

impl RejectReason {
    pub const ALL: [RejectReason; 8] = [
        RejectReason::NoGt,
        RejectReason::BadGt,
        RejectReason::InvalidLabel,
        RejectReason::AnswerNotInText,
        RejectReason::OutOfBounds,
        RejectReason::MultiPage,
        RejectReason::RenderFail,
        RejectReason::OcrFail,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            RejectReason::NoGt => "no_gt",
            RejectReason::BadGt => "bad_gt",
            RejectReason::InvalidLabel => "invalid_label",
            RejectReason::AnswerNotInText => "answer_not_in_text",
            RejectReason::OutOfBounds => "out_of_bounds",
            RejectReason::MultiPage => "multi_page",
            RejectReason::RenderFail => "render_fail",
            RejectReason::OcrFail => "ocr_fail",
        }
    }
}

impl fmt::Display for RejectReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "verdict", rename_all = "snake_case")]
pub enum Verdict {
    Accept,
    Reject { reason: RejectReason },
}

impl Verdict {
    pub fn is_accept(&self) -> bool {
        matches!(self, Verdict::Accept)
    }
}

/// One named check with its outcome.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub pass: bool,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerificationReport {
    pub doc_id: String,
    pub task: Task,
    pub checks: Vec<Check>,
    /// Similarity per answer for VQA/KIE; empty for CLS/DLA.
    pub anls_scores: Vec<f64>,
    #[serde(flatten)]
    pub verdict: Verdict,
}

impl VerificationReport {
    fn new(doc_id: &str, task: Task) -> VerificationReport {
        VerificationReport {
            doc_id: doc_id.to_string(),
            task,
            checks: Vec::new(),
            anls_scores: Vec::new(),
            verdict: Verdict::Accept,
        }
    }

    fn record(&mut self, name: impl Into<String>, pass: bool, detail: impl Into<String>) {
        self.checks.push(Check { name: name.into(), pass, detail: detail.into() });
    }

    /// Set the rejection reason if none is set yet (first failure wins).
    fn reject(&mut self, reason: RejectReason) {
        if self.verdict.is_accept() {
            self.verdict = Verdict::Reject { reason };
        }
    }

    pub fn mean_anls(&self) -> Option<f64> {
        if self.anls_scores.is_empty() {
            None
        } else {
            Some(self.anls_scores.iter().sum::<f64>() / self.anls_scores.len() as f64)
        }
    }
}

/// Case-fold and collapse whitespace runs to single spaces.
fn normalize(s: &str) -> String {
    s.split_whitespace()
        .map(str::to_lowercase)
        .collect::<Vec<_>>()
        .join(" ")
}

/// Classic edit distance over chars, two-row DP.
pub fn levenshtein(a: &str, b: &str) -> usize {
    let a: Vec<char> = a.chars().collect();
    let b: Vec<char> = b.chars().collect();
    if a.is_empty() {
        return b.len();
    }
    if b.is_empty() {
        return a.len();
    }
    let mut prev: Vec<usize> = (0..=b.len()).collect();
    let mut cur = vec![0usize; b.len() + 1];
    for (i, ca) in a.iter().enumerate() {
        cur[0] = i + 1;
        for (j, cb) in b.iter().enumerate() {
            let sub = prev[j] + usize::from(ca != cb);
            cur[j + 1] = sub.min(prev[j + 1] + 1).min(cur[j] + 1);
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

/// Normalized Levenshtein similarity: 1 - lev/max(len), after case folding
/// and whitespace collapsing. Two empty strings are identical (1.0).
pub fn nls(a: &str, b: &str) -> f64 {
    let a = normalize(a);
    let b = normalize(b);
    let max_len = a.chars().count().max(b.chars().count());
    if max_len == 0 {
        return 1.0;
    }
    1.0 - levenshtein(&a, &b) as f64 / max_len as f64
}

/// Strip punctuation from both edges of a span, mirroring how answers lose
/// their surrounding commas and periods in running text.
fn strip_edge_punct(s: &str) -> &str {
    s.trim_matches(|c: char| c.is_ascii_punctuation())
}

/// Best similarity between the needle and any contiguous word window of
/// length 1 ..= needle words + 1, with window-edge punctuation stripped.
/// Returns the score and the matched window.
pub fn best_span_match(needle: &str, words: &[String]) -> (f64, Option<Range<usize>>) {
    let needle = normalize(needle);
    if words.is_empty() {
        return (0.0, None);
    }
    let needle_words = needle.split_whitespace().count().max(1);
    let max_window = (needle_words + 1).min(words.len());
    let mut best = 0.0f64;
    let mut best_range = None;
    for len in 1..=max_window {
        for start in 0..=(words.len() - len) {
            let span = words[start..start + len].join(" ");
            let score = nls(&needle, strip_edge_punct(&span));
            if score > best {
                best = score;
                best_range = Some(start..start + len);
                if best >= 1.0 {
                    return (best, best_range);
                }
            }
        }
    }
    (best, best_range)
}

pub fn best_span_similarity(needle: &str, words: &[String]) -> f64 {
    best_span_match(needle, words).0
}

fn word_texts(words: &[WordBox]) -> Vec<String> {
    words.iter().map(|w| w.text.clone()).collect()
}

/// Every answer must appear in the document text at similarity >= tau.
pub fn verify_vqa(
    doc_id: &str,
    pairs: &BTreeMap<String, String>,
    words: &[WordBox],
    tau: f64,
) -> VerificationReport {
    let mut report = VerificationReport::new(doc_id, Task::Vqa);
    let texts = word_texts(words);
    for (question, answer) in pairs {
        let score = best_span_similarity(answer, &texts);
        report.anls_scores.push(score);
        let pass = score >= tau;
        report.record(
            format!("answer_in_text: {question}"),
            pass,
            format!("anls {score:.4} vs tau {tau}"),
        );
        if !pass {
            report.reject(RejectReason::AnswerNotInText);
        }
    }
    report
}

/// The class label must be in the dataset vocabulary (case-insensitive).
pub fn verify_cls(doc_id: &str, label: &str, allowed: &[String]) -> VerificationReport {
    let mut report = VerificationReport::new(doc_id, Task::Cls);
    let pass = allowed.iter().any(|l| l.eq_ignore_ascii_case(label));
    report.record("label_in_vocabulary", pass, format!("label {label:?}"));
    if !pass {
        report.reject(RejectReason::InvalidLabel);
    }
    report
}

/// Entity values must appear in the text; entities with regions must match
/// within them; field labels must be known.
pub fn verify_kie(
    doc_id: &str,
    entities: &[KieEntity],
    words: &[WordBox],
    element_boxes: &BTreeMap<usize, PxBox>,
    allowed_fields: &[String],
    tau: f64,
) -> VerificationReport {
    let mut report = VerificationReport::new(doc_id, Task::Kie);
    let all_texts = word_texts(words);
    for (i, entity) in entities.iter().enumerate() {
        let label = format!("{}[{i}]", entity.field);

        let known = entity.valid_label
            && (allowed_fields.is_empty()
                || allowed_fields.iter().any(|f| f.eq_ignore_ascii_case(&entity.field)));
        report.record(format!("field_known: {label}"), known, entity.field.clone());
        if !known {
            report.reject(RejectReason::InvalidLabel);
            continue;
        }

        let region = entity
            .region
            .or_else(|| entity.element.and_then(|e| element_boxes.get(&e).copied()));
        match region {
            Some(region) => {
                // Match against the words inside the region; a hit elsewhere
                // on the page does not satisfy a region-bound entity.
                let inside: Vec<String> = words
                    .iter()
                    .filter(|w| region.contains(&w.bbox))
                    .map(|w| w.text.clone())
                    .collect();
                let inside_score = best_span_similarity(&entity.value, &inside);
                report.anls_scores.push(inside_score);
                if inside_score >= tau {
                    report.record(
                        format!("value_in_region: {label}"),
                        true,
                        format!("anls {inside_score:.4}"),
                    );
                    continue;
                }
                let (global_score, _) = best_span_match(&entity.value, &all_texts);
                if global_score >= tau {
                    report.record(
                        format!("value_in_region: {label}"),
                        false,
                        format!(
                            "value found at anls {global_score:.4} but outside region {region:?}"
                        ),
                    );
                    report.reject(RejectReason::OutOfBounds);
                } else {
                    report.record(
                        format!("value_in_region: {label}"),
                        false,
                        format!("anls {inside_score:.4} vs tau {tau}"),
                    );
                    report.reject(RejectReason::AnswerNotInText);
                }
            }
            None => {
                let score = best_span_similarity(&entity.value, &all_texts);
                report.anls_scores.push(score);
                let pass = score >= tau;
                report.record(
                    format!("value_in_text: {label}"),
                    pass,
                    format!("anls {score:.4} vs tau {tau}"),
                );
                if !pass {
                    report.reject(RejectReason::AnswerNotInText);
                }
            }
        }
    }
    report
}

/// Region labels must be in the vocabulary and boxes within the page.
pub fn verify_dla(
    doc_id: &str,
    regions: &[LayoutRegion],
    page: PxBox,
    vocabulary: &[String],
) -> VerificationReport {
    let mut report = VerificationReport::new(doc_id, Task::Dla);
    for (i, region) in regions.iter().enumerate() {
        let label = format!("{}[{i}]", region.label);
        let known = vocabulary.iter().any(|l| l.eq_ignore_ascii_case(&region.label));
        report.record(format!("label_in_vocabulary: {label}"), known, region.label.clone());
        if !known {
            report.reject(RejectReason::InvalidLabel);
            continue;
        }
        match region.bbox {
            Some(bbox) if page.contains(&bbox) => {
                report.record(format!("region_in_page: {label}"), true, format!("{bbox:?}"));
            }
            Some(bbox) => {
                report.record(
                    format!("region_in_page: {label}"),
                    false,
                    format!("{bbox:?} outside page {page:?}"),
                );
                report.reject(RejectReason::OutOfBounds);
            }
            None => {
                report.record(
                    format!("region_in_page: {label}"),
                    false,
                    "region has no rendered box".to_string(),
                );
                report.reject(RejectReason::OutOfBounds);
            }
        }
    }
    report
}

/// Everything verification needs beyond the ground truth itself.
pub struct VerifyContext<'a> {
    pub task: Task,
    pub tau: f64,
    /// Task vocabulary: class labels (CLS), field labels (KIE), or region
    /// labels (DLA). Unused for VQA.
    pub labels: &'a [String],
    pub page: PxBox,
    pub page_count: u32,
    pub words: &'a [WordBox],
    pub element_boxes: &'a BTreeMap<usize, PxBox>,
}

/// Full accept/reject decision: multi-page documents are excluded before any
/// task check runs; otherwise the verdict is the task check's.
pub fn accept_document(doc_id: &str, gt: &GroundTruth, ctx: &VerifyContext) -> VerificationReport {
    if ctx.page_count > 1 {
        let mut report = VerificationReport::new(doc_id, ctx.task);
        report.record("single_page", false, format!("page_count {}", ctx.page_count));
        report.reject(RejectReason::MultiPage);
        return report;
    }
    if !gt.matches_task(ctx.task) {
        let mut report = VerificationReport::new(doc_id, ctx.task);
        report.record(
            "gt_matches_task",
            false,
            format!("{} ground truth under {} task", gt.variant_name(), ctx.task.as_str()),
        );
        report.reject(RejectReason::BadGt);
        return report;
    }
    let mut report = match gt {
        GroundTruth::QaPairs { pairs } => verify_vqa(doc_id, pairs, ctx.words, ctx.tau),
        GroundTruth::ClassLabel { label } => verify_cls(doc_id, label, ctx.labels),
        GroundTruth::KieEntities { entities } => {
            verify_kie(doc_id, entities, ctx.words, ctx.element_boxes, ctx.labels, ctx.tau)
        }
        GroundTruth::LayoutRegions { regions } => {
            verify_dla(doc_id, regions, ctx.page, ctx.labels)
        }
    };
    report.checks.insert(
        0,
        Check { name: "single_page".into(), pass: true, detail: "page_count 1".into() },
    );
    report
}
