//! Prompt instantiation, backend calls, response parsing, and annotation
//! extraction: raw VLM text in, structured document records out.

pub mod backend;
pub mod dom;
pub mod extract;
pub mod parse;
pub mod prompt;
pub mod stub;

pub use backend::{
    generate_with_retry, BackendResponse, BackendUsage, CallOutcome, GenerationBackend,
    GenerationRequest, RetryPolicy, SeedImage,
};
pub use dom::DocTree;
pub use extract::{
    extract_handwriting_regions, extract_macro_gt, extract_micro_annotations,
    extract_placeholders, MicroVocab,
};
pub use parse::{parse_response, DropRecord, ParsedResponse};
pub use prompt::{instantiate_prompt, MACRO_TEMPLATE, MICRO_TEMPLATE};

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::Error;
use crate::geometry::PxBox;
use crate::handwriting::HandwritingRegion;
use crate::rendering::RenderResult;
use crate::verification::RejectReason;
use crate::visual_elements::VisualElementPlaceholder;
use crate::Result;

/// Annotation task family.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Task {
    Vqa,
    Kie,
    Cls,
    Dla,
}

impl Task {
    pub fn as_str(&self) -> &'static str {
        match self {
            Task::Vqa => "VQA",
            Task::Kie => "KIE",
            Task::Cls => "CLS",
            Task::Dla => "DLA",
        }
    }

    /// Default documents-per-call: 2 for layout analysis, 3 otherwise.
    pub fn default_num_solutions(&self) -> u32 {
        match self {
            Task::Dla => 2,
            _ => 3,
        }
    }
}

impl std::str::FromStr for Task {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_uppercase().as_str() {
            "VQA" => Ok(Task::Vqa),
            "KIE" => Ok(Task::Kie),
            "CLS" => Ok(Task::Cls),
            "DLA" => Ok(Task::Dla),
            other => Err(Error::Other(format!("unknown task {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TemplateKind {
    Macro,
    Micro,
}

/// Parameters of one prompt call.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PromptSpec {
    pub template_kind: TemplateKind,
    pub language: String,
    pub doc_type: String,
    pub gt_type: String,
    pub gt_format: String,
    pub num_solutions: u32,
    pub num_seed_images: u32,
}

impl PromptSpec {
    pub fn new(
        template_kind: TemplateKind,
        language: &str,
        doc_type: &str,
        gt_type: &str,
        gt_format: &str,
        num_solutions: u32,
    ) -> Result<Self> {
        let spec = PromptSpec {
            template_kind,
            language: language.to_string(),
            doc_type: doc_type.to_string(),
            gt_type: gt_type.to_string(),
            gt_format: gt_format.to_string(),
            num_solutions,
            num_seed_images: num_solutions * 2,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.num_solutions == 0 {
            return Err(Error::PromptTemplate("num_solutions must be >= 1".into()));
        }
        if self.num_seed_images != 2 * self.num_solutions {
            return Err(Error::PromptTemplate(format!(
                "num_seed_images {} != 2 x num_solutions {}",
                self.num_seed_images, self.num_solutions
            )));
        }
        for (name, value) in [
            ("language", &self.language),
            ("doc_type", &self.doc_type),
            ("gt_type", &self.gt_type),
        ] {
            if value.trim().is_empty() {
                return Err(Error::PromptTemplate(format!("empty parameter {name}")));
            }
        }
        if self.gt_format.trim().is_empty() && self.template_kind == TemplateKind::Macro {
            return Err(Error::PromptTemplate(
                "gt_format required for the macro template".into(),
            ));
        }
        Ok(())
    }
}

/// One KIE entity: an optional group id (PAIR_3, MENU_1, VOID_MENU, ...), a
/// field label, the value text, and a region box once rendered.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KieEntity {
    pub group: Option<String>,
    pub field: String,
    pub value: String,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub region: Option<PxBox>,
    /// Element id in the parsed tree, when the entity came from micro
    /// annotations.
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub element: Option<usize>,
    /// False when the class carried a group token but no known field label.
    #[serde(default = "default_true")]
    pub valid_label: bool,
}

fn default_true() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayoutRegion {
    pub label: String,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub element: Option<usize>,
    /// Filled from element boxes after rendering.
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub bbox: Option<PxBox>,
}

/// Ground truth payload, one variant per task family.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum GroundTruth {
    QaPairs { pairs: BTreeMap<String, String> },
    ClassLabel { label: String },
    KieEntities { entities: Vec<KieEntity> },
    LayoutRegions { regions: Vec<LayoutRegion> },
}

impl GroundTruth {
    pub fn variant_name(&self) -> &'static str {
        match self {
            GroundTruth::QaPairs { .. } => "qa_pairs",
            GroundTruth::ClassLabel { .. } => "class_label",
            GroundTruth::KieEntities { .. } => "kie_entities",
            GroundTruth::LayoutRegions { .. } => "layout_regions",
        }
    }

    pub fn matches_task(&self, task: Task) -> bool {
        matches!(
            (self, task),
            (GroundTruth::QaPairs { .. }, Task::Vqa)
                | (GroundTruth::ClassLabel { .. }, Task::Cls)
                | (GroundTruth::KieEntities { .. }, Task::Kie)
                | (GroundTruth::LayoutRegions { .. }, Task::Dla)
        )
    }
}

/// Lifecycle of a generated document. Transitions only move forward:
/// raw → rendered → enhanced → verified | rejected.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "state", rename_all = "snake_case")]
pub enum DocStatus {
    Raw,
    Rendered,
    Enhanced,
    Verified,
    Rejected { reason: RejectReason },
}

impl DocStatus {
    fn rank(&self) -> u8 {
        match self {
            DocStatus::Raw => 0,
            DocStatus::Rendered => 1,
            DocStatus::Enhanced => 2,
            DocStatus::Verified | DocStatus::Rejected { .. } => 3,
        }
    }

    pub fn is_terminal(&self) -> bool {
        self.rank() == 3
    }
}

/// One generated document flowing through the pipeline.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SynthesizedDocument {
    pub id: String,
    pub html: String,
    pub gt: GroundTruth,
    pub handwriting_regions: Vec<HandwritingRegion>,
    pub placeholders: Vec<VisualElementPlaceholder>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub render: Option<RenderResult>,
    pub status: DocStatus,
}

impl SynthesizedDocument {
    pub fn new(id: String, html: String, gt: GroundTruth) -> Self {
        SynthesizedDocument {
            id,
            html,
            gt,
            handwriting_regions: Vec::new(),
            placeholders: Vec::new(),
            render: None,
            status: DocStatus::Raw,
        }
    }

    /// Move to the next status; backwards transitions and transitions out of
    /// a terminal status are errors.
    pub fn advance(&mut self, next: DocStatus) -> Result<()> {
        if self.status.is_terminal() {
            return Err(Error::Other(format!(
                "document {}: status {:?} is terminal",
                self.id, self.status
            )));
        }
        if next.rank() <= self.status.rank() {
            return Err(Error::Other(format!(
                "document {}: cannot move {:?} -> {:?}",
                self.id, self.status, next
            )));
        }
        self.status = next;
        Ok(())
    }

    pub fn reject_reason(&self) -> Option<RejectReason> {
        match &self.status {
            DocStatus::Rejected { reason } => Some(*reason),
            _ => None,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn status_transitions_are_monotone() {
        let gt = GroundTruth::ClassLabel { label: "memo".into() };
        let mut doc = SynthesizedDocument::new("d1".into(), "<html></html>".into(), gt);
        assert_eq!(doc.status, DocStatus::Raw);
        doc.advance(DocStatus::Rendered).unwrap();
        doc.advance(DocStatus::Enhanced).unwrap();
        doc.advance(DocStatus::Verified).unwrap();
        assert!(doc.advance(DocStatus::Rendered).is_err());
        assert!(doc
            .advance(DocStatus::Rejected { reason: RejectReason::BadGt })
            .is_err());
    }

    #[test]
    fn rejection_carries_reason() {
        let gt = GroundTruth::ClassLabel { label: "memo".into() };
        let mut doc = SynthesizedDocument::new("d2".into(), String::new(), gt);
        doc.advance(DocStatus::Rejected { reason: RejectReason::MultiPage }).unwrap();
        assert_eq!(doc.reject_reason(), Some(RejectReason::MultiPage));
        assert!(doc.status.is_terminal());
    }

    #[test]
    fn skipping_stages_is_allowed_forward() {
        let gt = GroundTruth::ClassLabel { label: "memo".into() };
        let mut doc = SynthesizedDocument::new("d3".into(), String::new(), gt);
        // A render failure rejects straight from raw.
        doc.advance(DocStatus::Rejected { reason: RejectReason::RenderFail }).unwrap();
    }

    #[test]
    fn gt_variant_task_match() {
        let qa = GroundTruth::QaPairs { pairs: BTreeMap::new() };
        assert!(qa.matches_task(Task::Vqa));
        assert!(!qa.matches_task(Task::Kie));
        let dla = GroundTruth::LayoutRegions { regions: vec![] };
        assert!(dla.matches_task(Task::Dla));
    }

    #[test]
    fn task_parsing_and_defaults() {
        assert_eq!("vqa".parse::<Task>().unwrap(), Task::Vqa);
        assert_eq!("DLA".parse::<Task>().unwrap(), Task::Dla);
        assert_eq!(Task::Vqa.default_num_solutions(), 3);
        assert_eq!(Task::Kie.default_num_solutions(), 3);
        assert_eq!(Task::Cls.default_num_solutions(), 3);
        assert_eq!(Task::Dla.default_num_solutions(), 2);
    }
}
