//! Dataset runs: the definition file, the per-document stage driver
//! (parse → render → enhance → verify), an append-only JSONL manifest that
//! survives kills mid-run, statistics, and per-sample export.
//!
//! Calls are idempotent by call id and every random draw derives from
//! (global seed, call or document id), so a fixed (definition, corpus, seed,
//! stub backends) tuple produces a byte-identical manifest no matter how
//! work was scheduled or how often the run was interrupted.

use std::collections::BTreeMap;
use std::fs::{self, File, OpenOptions};
use std::io::Write as _;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::Error;
use crate::geometry::{PageSize, PxBox};
use crate::handwriting::{
    assign_writer, place_line, postprocess, render_text_line, PostprocessParams, WordGenerator,
    DEFAULT_JITTER, DEFAULT_TAU, DEFAULT_WORD_SPACING,
};
use crate::rendering::{extract_text_boxes, OcrBackend, PageRaster, RenderBackend, WordBox};
use crate::rng;
use crate::seed_selection::{ClusteringResult, SamplingConfig, SamplingStrategy};
use crate::synthesis::{
    extract_handwriting_regions, extract_macro_gt, extract_micro_annotations,
    extract_placeholders, generate_with_retry, parse_response, BackendUsage, DocStatus, DocTree,
    GenerationBackend, GenerationRequest, GroundTruth, MicroVocab, PromptSpec, RetryPolicy,
    SeedImage, SynthesizedDocument, Task, TemplateKind,
};
use crate::verification::{
    accept_document, RejectReason, VerificationReport, VerifyContext, DEFAULT_TAU_ANLS,
};
use crate::visual_elements::{
    augment_dla_gt, canonicalize_placeholder, composite, figure_label_for, load_asset,
    render_barcode, render_stamp, AssetBank, CanonicalType, Overlay, PlacedElement,
};
use crate::Result;

/// How ground truth is requested from the model: a JSON payload script
/// (macro template) or element-level class annotations (micro template).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PromptType {
    #[serde(alias = "JSON")]
    Json,
    #[serde(alias = "ANNOTATION")]
    Annotation,
}

impl PromptType {
    pub fn template_kind(self) -> TemplateKind {
        match self {
            PromptType::Json => TemplateKind::Macro,
            PromptType::Annotation => TemplateKind::Micro,
        }
    }
}

fn default_language() -> String {
    "English".to_string()
}

fn default_tau() -> f64 {
    DEFAULT_TAU_ANLS
}

/// One dataset to generate. Optional fields are filled by [`DatasetDefinition::normalized`]:
/// prompt type and documents-per-call default by task (M=2 for DLA, else 3),
/// sampling defaults to in-cluster with α=1 and 2M seeds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetDefinition {
    pub name: String,
    pub task_type: Task,
    #[serde(default)]
    pub prompt_type: Option<PromptType>,
    #[serde(default)]
    pub num_solutions: Option<u32>,
    pub doc_type: String,
    /// Ground-truth description slotted into the prompt; for the micro
    /// template this is the class list shown to the model.
    pub gt_type: String,
    #[serde(default)]
    pub gt_format: String,
    #[serde(default = "default_language")]
    pub language: String,
    pub target_count: u64,
    #[serde(default)]
    pub sampling: Option<SamplingConfig>,
    /// Verification vocabulary: class labels (CLS), field labels (KIE), or
    /// layout labels (DLA). Doubles as the micro extraction vocabulary.
    #[serde(default)]
    pub labels: Vec<String>,
    /// KIE group-id prefixes such as "PAIR_" or "MENU_".
    #[serde(default)]
    pub group_prefixes: Vec<String>,
    /// KIE group ids without an index, such as "GENERIC".
    #[serde(default)]
    pub static_groups: Vec<String>,
    #[serde(default = "default_tau")]
    pub anls_tau: f64,
}

impl DatasetDefinition {
    /// Read a YAML or JSON definition file and normalize it.
    pub fn load(path: &Path) -> Result<DatasetDefinition> {
        let text = fs::read_to_string(path)?;
        let def: DatasetDefinition = if path.extension().and_then(|e| e.to_str()) == Some("json")
        {
            serde_json::from_str(&text)?
        } else {
            serde_yaml::from_str(&text)?
        };
        def.normalized()
    }

    /// Fill defaults and validate. Every consumer works on the normalized
    /// form, so the manifest header pins the fully resolved definition.
    pub fn normalized(&self) -> Result<DatasetDefinition> {
        let mut def = self.clone();
        if def.name.trim().is_empty()
            || def.name.contains('/')
            || def.name.contains(std::path::MAIN_SEPARATOR)
        {
            return Err(Error::Definition(format!(
                "name {:?} must be non-empty and path-safe",
                def.name
            )));
        }
        if def.target_count == 0 {
            return Err(Error::Definition("target_count must be >= 1".into()));
        }
        let prompt_type = *def.prompt_type.get_or_insert(match def.task_type {
            Task::Dla => PromptType::Annotation,
            _ => PromptType::Json,
        });
        if def.task_type == Task::Dla && prompt_type == PromptType::Json {
            return Err(Error::Definition(
                "DLA ground truth comes from class annotations; use prompt_type annotation"
                    .into(),
            ));
        }
        let m = *def
            .num_solutions
            .get_or_insert(def.task_type.default_num_solutions());
        if m == 0 {
            return Err(Error::Definition("num_solutions must be >= 1".into()));
        }
        if prompt_type == PromptType::Json && def.gt_format.trim().is_empty() {
            return Err(Error::Definition(
                "gt_format is required for JSON (macro) prompts".into(),
            ));
        }
        if prompt_type == PromptType::Annotation && def.labels.is_empty() {
            return Err(Error::Definition(
                "annotation prompts need a label vocabulary".into(),
            ));
        }
        if def.task_type == Task::Cls && def.labels.is_empty() {
            return Err(Error::Definition("CLS needs a class label vocabulary".into()));
        }
        if !(def.anls_tau > 0.0 && def.anls_tau <= 1.0) {
            return Err(Error::Definition(format!(
                "anls_tau {} outside (0, 1]",
                def.anls_tau
            )));
        }
        let sampling = def.sampling.get_or_insert(SamplingConfig {
            strategy: SamplingStrategy::Ic,
            alpha: 1.0,
            n_seeds: 2 * m as usize,
        });
        if sampling.n_seeds != 2 * m as usize {
            return Err(Error::Definition(format!(
                "sampling.n_seeds {} != 2 x num_solutions {m}",
                sampling.n_seeds
            )));
        }
        Ok(def)
    }

    pub fn template_kind(&self) -> TemplateKind {
        self.prompt_type
            .map(PromptType::template_kind)
            .unwrap_or(match self.task_type {
                Task::Dla => TemplateKind::Micro,
                _ => TemplateKind::Macro,
            })
    }

    pub fn num_solutions_or_default(&self) -> u32 {
        self.num_solutions
            .unwrap_or_else(|| self.task_type.default_num_solutions())
    }

    pub fn prompt_spec(&self) -> Result<PromptSpec> {
        PromptSpec::new(
            self.template_kind(),
            &self.language,
            &self.doc_type,
            &self.gt_type,
            &self.gt_format,
            self.num_solutions_or_default(),
        )
    }

    pub fn micro_vocab(&self) -> MicroVocab {
        let labels: Vec<&str> = self.labels.iter().map(String::as_str).collect();
        let prefixes: Vec<&str> = self.group_prefixes.iter().map(String::as_str).collect();
        let statics: Vec<&str> = self.static_groups.iter().map(String::as_str).collect();
        MicroVocab::new(&labels, &prefixes, &statics)
    }
}

/// Seed-image source: the clustering over the corpus plus image bytes per
/// document id. Missing bytes fall back to empty (stub backends ignore them).
#[derive(Debug, Clone)]
pub struct Corpus {
    pub clustering: ClusteringResult,
    pub images: BTreeMap<String, Vec<u8>>,
}

impl Corpus {
    pub fn new(clustering: ClusteringResult) -> Corpus {
        Corpus { clustering, images: BTreeMap::new() }
    }

    /// A deterministic corpus of `n` documents in `k` round-robin clusters,
    /// for tests and offline runs that never read real images.
    pub fn synthetic(n: usize, k: usize) -> Corpus {
        let k = k.max(1).min(n.max(1));
        let doc_ids: Vec<String> = (0..n).map(|i| format!("corpus-{i:05}")).collect();
        let labels: Vec<usize> = (0..n).map(|i| i % k).collect();
        let mut sizes = vec![0usize; k];
        for &l in &labels {
            sizes[l] += 1;
        }
        let norm_entropy = if k >= 2 {
            crate::seed_selection::normalized_entropy(&sizes).unwrap_or(0.0)
        } else {
            0.0
        };
        Corpus::new(ClusteringResult {
            doc_ids,
            labels,
            k,
            sizes,
            pre_reassignment_noise: vec![false; n],
            silhouette: None,
            norm_entropy,
            final_score: None,
        })
    }

    pub fn image_bytes(&self, doc_id: &str) -> Vec<u8> {
        self.images.get(doc_id).cloned().unwrap_or_default()
    }
}

/// Everything a run needs besides the definition and corpus.
pub struct Backends<'a> {
    pub generator: &'a dyn GenerationBackend,
    pub renderer: &'a dyn RenderBackend,
    pub ocr: Option<&'a dyn OcrBackend>,
    pub writer: &'a dyn WordGenerator,
    pub assets: &'a AssetBank,
}

#[derive(Debug, Clone)]
pub struct RunConfig {
    pub seed: u64,
    /// Concurrent prompt calls per scheduling chunk.
    pub workers: usize,
    pub retry: RetryPolicy,
    /// Consecutive failed calls before the run pauses.
    pub max_consecutive_failures: u32,
    /// Call budget as a multiple of the minimum call count, guarding
    /// against a backend that never yields parseable documents.
    pub max_call_factor: u32,
    pub manifest_path: PathBuf,
}

impl RunConfig {
    pub fn new(manifest_path: impl Into<PathBuf>, seed: u64) -> RunConfig {
        RunConfig {
            seed,
            workers: 4,
            retry: RetryPolicy::default(),
            max_consecutive_failures: 3,
            max_call_factor: 4,
            manifest_path: manifest_path.into(),
        }
    }
}

/// One successful backend call.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CallRecord {
    pub call_id: u64,
    pub retries: u32,
    /// Parseable documents the call yielded.
    pub docs: u32,
    /// Malformed blocks dropped by the parser.
    pub drops: u32,
    pub usage: BackendUsage,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FailureRecord {
    pub call_id: u64,
    pub error: String,
}

/// One candidate document and its terminal verdict.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleRecord {
    pub sample_id: String,
    pub call_id: u64,
    pub index_in_call: u32,
    pub global_index: u64,
    pub status: DocStatus,
    pub page: PageSize,
    pub pages: u32,
    pub word_count: u64,
    pub hw_count: u64,
    pub visual_count: u64,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub anls: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gt: Option<GroundTruth>,
    pub html: String,
}

/// Dataset-level statistics; always recomputable from the records.
/// Averages describe the delivered dataset, i.e. verified samples only.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ManifestStats {
    pub total_samples: u64,
    pub total_valid: u64,
    pub input_tokens: u64,
    pub output_tokens: u64,
    pub avg_words: f64,
    pub avg_hw_elems: f64,
    pub avg_visual_elems: f64,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub rejects: BTreeMap<String, u64>,
}

pub fn compute_stats(samples: &[SampleRecord], calls: &[CallRecord]) -> ManifestStats {
    let mut stats = ManifestStats {
        total_samples: samples.len() as u64,
        ..ManifestStats::default()
    };
    for call in calls {
        stats.input_tokens += call.usage.input_tokens;
        stats.output_tokens += call.usage.output_tokens;
    }
    let mut words = 0u64;
    let mut hw = 0u64;
    let mut visual = 0u64;
    for sample in samples {
        match &sample.status {
            DocStatus::Verified => {
                stats.total_valid += 1;
                words += sample.word_count;
                hw += sample.hw_count;
                visual += sample.visual_count;
            }
            DocStatus::Rejected { reason } => {
                *stats.rejects.entry(reason.as_str().to_string()).or_default() += 1;
            }
            other => {
                // Non-terminal statuses never reach the manifest.
                debug_assert!(false, "non-terminal sample status {other:?}");
            }
        }
    }
    if stats.total_valid > 0 {
        let n = stats.total_valid as f64;
        stats.avg_words = words as f64 / n;
        stats.avg_hw_elems = hw as f64 / n;
        stats.avg_visual_elems = visual as f64 / n;
    }
    stats
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub definition: DatasetDefinition,
    pub seed: u64,
    pub calls: Vec<CallRecord>,
    pub failures: Vec<FailureRecord>,
    pub samples: Vec<SampleRecord>,
    pub stats: ManifestStats,
}

impl DatasetManifest {
    pub fn load(path: &Path) -> Result<DatasetManifest> {
        let text = fs::read_to_string(path)?;
        let parsed = parse_manifest(&text)?;
        let (definition, seed) = parsed.header.ok_or_else(|| {
            Error::Manifest(format!("{}: missing header line", path.display()))
        })?;
        let stats = parsed
            .stats_footer
            .clone()
            .unwrap_or_else(|| compute_stats(&parsed.samples, &parsed.calls));
        Ok(DatasetManifest {
            definition,
            seed,
            calls: parsed.calls,
            failures: parsed.failures,
            samples: parsed.samples,
            stats,
        })
    }

    pub fn recompute_stats(&self) -> ManifestStats {
        compute_stats(&self.samples, &self.calls)
    }

    /// The stored stats must equal a fresh recount of the records.
    pub fn verify_stats(&self) -> Result<()> {
        let fresh = self.recompute_stats();
        if fresh == self.stats {
            Ok(())
        } else {
            Err(Error::Manifest(format!(
                "stored stats {:?} disagree with recount {:?}",
                self.stats, fresh
            )))
        }
    }

    pub fn valid_samples(&self) -> impl Iterator<Item = &SampleRecord> {
        self.samples
            .iter()
            .filter(|s| matches!(s.status, DocStatus::Verified))
    }
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(tag = "record", rename_all = "snake_case")]
enum ManifestLine {
    Header { definition: DatasetDefinition, seed: u64 },
    Sample(SampleRecord),
    Call(CallRecord),
    CallFailed(FailureRecord),
    Stats(ManifestStats),
}

#[derive(Default)]
struct ParsedManifest {
    header: Option<(DatasetDefinition, u64)>,
    calls: Vec<CallRecord>,
    failures: Vec<FailureRecord>,
    samples: Vec<SampleRecord>,
    stats_footer: Option<ManifestStats>,
    /// Byte length of the sealed prefix: header plus complete call groups.
    /// Anything beyond it (unsealed samples, a stats footer, torn lines) is
    /// recomputed on resume.
    sealed_len: u64,
}

/// Parse manifest text up to the first anomaly. Samples count only once
/// their call's commit line follows them; a trailing stats line is captured
/// separately and never extends the sealed prefix.
fn parse_manifest(text: &str) -> Result<ParsedManifest> {
    let mut out = ParsedManifest::default();
    let mut offset = 0u64;
    let mut pending: Vec<SampleRecord> = Vec::new();
    let mut seen_stats = false;
    for line in text.split_inclusive('\n') {
        let line_len = line.len() as u64;
        let trimmed = line.trim_end_matches('\n');
        if trimmed.is_empty() {
            offset += line_len;
            continue;
        }
        let parsed: ManifestLine = match serde_json::from_str(trimmed) {
            Ok(l) => l,
            // A torn or foreign line ends the usable prefix.
            Err(_) => break,
        };
        if seen_stats {
            // Records after a stats footer are from a torn append; the
            // sealed prefix already excludes the footer, so stop here.
            out.stats_footer = None;
            break;
        }
        match parsed {
            ManifestLine::Header { definition, seed } => {
                if out.header.is_some() {
                    break;
                }
                out.header = Some((definition, seed));
                offset += line_len;
                out.sealed_len = offset;
            }
            _ if out.header.is_none() => {
                return Err(Error::Manifest("first record must be the header".into()));
            }
            ManifestLine::Sample(s) => {
                pending.push(s);
                offset += line_len;
            }
            ManifestLine::Call(c) => {
                if pending.len() != c.docs as usize {
                    break;
                }
                out.samples.append(&mut pending);
                out.calls.push(c);
                offset += line_len;
                out.sealed_len = offset;
            }
            ManifestLine::CallFailed(f) => {
                if !pending.is_empty() {
                    break;
                }
                out.failures.push(f);
                offset += line_len;
                out.sealed_len = offset;
            }
            ManifestLine::Stats(s) => {
                if !pending.is_empty() {
                    break;
                }
                out.stats_footer = Some(s);
                seen_stats = true;
                offset += line_len;
            }
        }
    }
    Ok(out)
}

struct ManifestWriter {
    file: File,
}

impl ManifestWriter {
    /// Open (or create) the manifest for appending, recovering prior sealed
    /// state and truncating anything unsealed.
    fn open(
        path: &Path,
        definition: &DatasetDefinition,
        seed: u64,
    ) -> Result<(ManifestWriter, ParsedManifest)> {
        if let Some(parent) = path.parent() {
            if !parent.as_os_str().is_empty() {
                fs::create_dir_all(parent)?;
            }
        }
        let existing = if path.exists() {
            let text = fs::read_to_string(path)?;
            let parsed = parse_manifest(&text)?;
            if let Some((prior_def, prior_seed)) = &parsed.header {
                if prior_def != definition || *prior_seed != seed {
                    return Err(Error::Manifest(format!(
                        "{}: existing manifest was written for a different definition or seed",
                        path.display()
                    )));
                }
                Some(parsed)
            } else {
                None
            }
        } else {
            None
        };
        match existing {
            Some(parsed) => {
                let file = OpenOptions::new().write(true).open(path)?;
                file.set_len(parsed.sealed_len)?;
                let mut file = file;
                file.seek_end()?;
                Ok((ManifestWriter { file }, parsed))
            }
            None => {
                let mut file = File::create(path)?;
                let header = ManifestLine::Header {
                    definition: definition.clone(),
                    seed,
                };
                let mut buf = serde_json::to_string(&header)?;
                buf.push('\n');
                file.write_all(buf.as_bytes())?;
                file.sync_data()?;
                let parsed = ParsedManifest {
                    header: Some((definition.clone(), seed)),
                    sealed_len: buf.len() as u64,
                    ..ParsedManifest::default()
                };
                Ok((ManifestWriter { file }, parsed))
            }
        }
    }

    /// Append a call's samples and its commit line as one write.
    fn append_call(&mut self, samples: &[SampleRecord], call: &CallRecord) -> Result<()> {
        let mut buf = String::new();
        for s in samples {
            buf.push_str(&serde_json::to_string(&ManifestLine::Sample(s.clone()))?);
            buf.push('\n');
        }
        buf.push_str(&serde_json::to_string(&ManifestLine::Call(call.clone()))?);
        buf.push('\n');
        self.file.write_all(buf.as_bytes())?;
        self.file.sync_data()?;
        Ok(())
    }

    fn append_failure(&mut self, failure: &FailureRecord) -> Result<()> {
        let mut buf = serde_json::to_string(&ManifestLine::CallFailed(failure.clone()))?;
        buf.push('\n');
        self.file.write_all(buf.as_bytes())?;
        self.file.sync_data()?;
        Ok(())
    }

    fn append_stats(&mut self, stats: &ManifestStats) -> Result<()> {
        let mut buf = serde_json::to_string(&ManifestLine::Stats(stats.clone()))?;
        buf.push('\n');
        self.file.write_all(buf.as_bytes())?;
        self.file.sync_data()?;
        Ok(())
    }
}

trait SeekEnd {
    fn seek_end(&mut self) -> std::io::Result<()>;
}

impl SeekEnd for File {
    fn seek_end(&mut self) -> std::io::Result<()> {
        use std::io::Seek;
        self.seek(std::io::SeekFrom::End(0)).map(|_| ())
    }
}

/// A fully processed document: the manifest record plus the heavyweight
/// artifacts the manifest does not store.
pub struct ProcessedDocument {
    pub record: SampleRecord,
    pub report: Option<VerificationReport>,
    pub words: Vec<WordBox>,
    pub element_boxes: BTreeMap<usize, PxBox>,
    pub raster: Option<PageRaster>,
    pub pdf: Option<Vec<u8>>,
}

fn doc_seed(seed: u64, global_index: u64) -> u64 {
    rng::derive_seed_str(seed, &format!("doc-{global_index}"))
}

/// Drive one document through every stage. Failures reject the document
/// rather than failing the run.
#[allow(clippy::too_many_arguments)]
pub fn process_document(
    def: &DatasetDefinition,
    html: &str,
    sample_id: &str,
    call_id: u64,
    index_in_call: u32,
    global_index: u64,
    seed: u64,
    backends: &Backends<'_>,
) -> ProcessedDocument {
    let base_record = SampleRecord {
        sample_id: sample_id.to_string(),
        call_id,
        index_in_call,
        global_index,
        status: DocStatus::Raw,
        page: PageSize::new(0, 0),
        pages: 0,
        word_count: 0,
        hw_count: 0,
        visual_count: 0,
        anls: Vec::new(),
        gt: None,
        html: html.to_string(),
    };
    let rejected = |mut record: SampleRecord, reason: RejectReason| {
        record.status = DocStatus::Rejected { reason };
        ProcessedDocument {
            record,
            report: None,
            words: Vec::new(),
            element_boxes: BTreeMap::new(),
            raster: None,
            pdf: None,
        }
    };

    let tree = DocTree::parse(html);
    let gt = match def.template_kind() {
        TemplateKind::Macro => extract_macro_gt(&tree, def.task_type),
        TemplateKind::Micro => {
            extract_micro_annotations(&tree, &def.micro_vocab(), def.task_type)
        }
    };
    let gt = match gt {
        Ok(gt) => gt,
        Err(Error::NoGt) => return rejected(base_record, RejectReason::NoGt),
        Err(e) => {
            log::warn!("{sample_id}: ground truth unusable: {e}");
            return rejected(base_record, RejectReason::BadGt);
        }
    };

    let mut doc = SynthesizedDocument::new(sample_id.to_string(), html.to_string(), gt);
    doc.handwriting_regions = extract_handwriting_regions(&tree);
    doc.placeholders = extract_placeholders(&tree);

    let mut record = base_record;
    record.gt = Some(doc.gt.clone());

    let page = match backends.renderer.measure_page(html) {
        Ok(p) => p,
        Err(e) => {
            log::warn!("{sample_id}: measure failed: {e}");
            return rejected(record, RejectReason::RenderFail);
        }
    };
    let render = match backends.renderer.render(html, page) {
        Ok(r) => r,
        Err(e) => {
            log::warn!("{sample_id}: render failed: {e}");
            return rejected(record, RejectReason::RenderFail);
        }
    };
    record.page = page;
    record.pages = render.page_count;
    doc.render = Some(render);
    doc.advance(DocStatus::Rendered).expect("raw -> rendered");

    let dseed = doc_seed(seed, global_index);
    let mut enhance_rng = rng::labeled_rng(dseed, "enhance");
    let mut overlays: Vec<Overlay> = Vec::new();
    let mut placed_elements: Vec<PlacedElement> = Vec::new();
    {
        let render = doc.render.as_ref().expect("just rendered");
        let writers = backends.writer.writers();

        let mut kept_regions = Vec::new();
        for (ri, mut region) in doc.handwriting_regions.drain(..).enumerate() {
            region.word_boxes = render
                .word_boxes
                .iter()
                .filter(|w| w.element == Some(region.element))
                .map(|w| w.bbox)
                .collect();
            if region.word_boxes.is_empty() {
                log::warn!("{sample_id}: handwriting element {} has no words", region.element);
                continue;
            }
            if writers.is_empty() {
                log::warn!("{sample_id}: word generator has no writers; skipping handwriting");
                continue;
            }
            let writer = match assign_writer(sample_id, region.author_id, writers) {
                Ok(w) => w,
                Err(e) => {
                    log::warn!("{sample_id}: writer assignment failed: {e}");
                    continue;
                }
            };
            region.writer_id = Some(writer);
            let line_seed = rng::derive_seed_str(dseed, &format!("hw-{ri}"));
            let line = match render_text_line(
                backends.writer,
                &region.text,
                writer,
                line_seed,
                DEFAULT_WORD_SPACING,
                DEFAULT_TAU,
            ) {
                Ok(l) => l,
                Err(e) => {
                    log::warn!("{sample_id}: handwriting synthesis failed: {e}");
                    continue;
                }
            };
            let line = postprocess(&line, &PostprocessParams::default(), &mut enhance_rng);
            let placed =
                match place_line(&line, &region, page, DEFAULT_JITTER, &mut enhance_rng) {
                    Ok(p) => p,
                    Err(e) => {
                        log::warn!("{sample_id}: handwriting placement failed: {e}");
                        continue;
                    }
                };
            region.region = Some(placed.target);
            overlays.push(Overlay { image: placed.image, target: placed.target, z_order: 1 });
            kept_regions.push(region);
        }
        doc.handwriting_regions = kept_regions;

        let mut kept_placeholders = Vec::new();
        for mut placeholder in doc.placeholders.drain(..) {
            if !canonicalize_placeholder(&mut placeholder) {
                log::warn!(
                    "{sample_id}: dropping placeholder of unknown type {:?}",
                    placeholder.raw_type
                );
                continue;
            }
            let bbox = match render.element_boxes.get(&placeholder.element) {
                Some(b) => *b,
                None => {
                    log::warn!(
                        "{sample_id}: placeholder element {} has no rendered box",
                        placeholder.element
                    );
                    continue;
                }
            };
            placeholder.bbox = Some(bbox);
            let ty = placeholder.canonical_type.expect("canonicalized above");
            let (w, h) = (bbox.width().max(1) as u32, bbox.height().max(1) as u32);
            let image = match ty {
                CanonicalType::Stamp => render_stamp(&placeholder.content, w, h, &mut enhance_rng),
                CanonicalType::Barcode => {
                    render_barcode(&placeholder.content, w, h, &mut enhance_rng).image
                }
                CanonicalType::Logo | CanonicalType::Figure | CanonicalType::Photo => {
                    match backends
                        .assets
                        .pick_asset(ty, &mut enhance_rng)
                        .and_then(|p| load_asset(&p, w, h))
                    {
                        Ok(img) => img,
                        Err(e) => {
                            log::warn!("{sample_id}: no asset for {ty}: {e}");
                            continue;
                        }
                    }
                }
            };
            overlays.push(Overlay { image, target: bbox, z_order: placeholder.z_order });
            placed_elements.push(PlacedElement {
                element: placeholder.element,
                canonical_type: ty,
                bbox,
            });
            kept_placeholders.push(placeholder);
        }
        doc.placeholders = kept_placeholders;
    }

    // Fill ground-truth geometry from the rendered element boxes, then give
    // placed figures their layout regions.
    {
        let element_boxes = &doc.render.as_ref().expect("rendered").element_boxes;
        match &mut doc.gt {
            GroundTruth::KieEntities { entities } => {
                for e in entities {
                    if e.region.is_none() {
                        if let Some(el) = e.element {
                            e.region = element_boxes.get(&el).copied();
                        }
                    }
                }
            }
            GroundTruth::LayoutRegions { regions } => {
                for r in regions.iter_mut() {
                    if r.bbox.is_none() {
                        if let Some(el) = r.element {
                            r.bbox = element_boxes.get(&el).copied();
                        }
                    }
                }
                if let Some(label) =
                    figure_label_for(def.labels.iter().map(String::as_str))
                {
                    let label = label.to_string();
                    *regions = augment_dla_gt(regions, &placed_elements, &label);
                }
            }
            _ => {}
        }
    }

    if let Some(render) = doc.render.as_mut() {
        if let Some(raster) = render.page_image.as_mut() {
            composite(&mut raster.image, &overlays);
        }
    }
    doc.advance(DocStatus::Enhanced).expect("rendered -> enhanced");
    record.gt = Some(doc.gt.clone());
    record.hw_count = doc.handwriting_regions.len() as u64;
    record.visual_count = doc.placeholders.len() as u64;

    let words = match extract_text_boxes(&doc, backends.ocr) {
        Ok(w) => w,
        Err(e) => {
            log::warn!("{sample_id}: text extraction failed: {e}");
            let reason = match e {
                Error::OcrFailed(_) => RejectReason::OcrFail,
                _ => RejectReason::RenderFail,
            };
            record.hw_count = 0;
            record.visual_count = 0;
            return rejected(record, reason);
        }
    };
    record.word_count = words.len() as u64;

    let render = doc.render.as_ref().expect("rendered");
    let element_boxes = render.element_boxes.clone();
    let ctx = VerifyContext {
        task: def.task_type,
        tau: def.anls_tau,
        labels: &def.labels,
        page: page.as_box(),
        page_count: render.page_count,
        words: &words,
        element_boxes: &element_boxes,
    };
    let report = accept_document(sample_id, &doc.gt, &ctx);
    record.anls = report.anls_scores.clone();
    let status = match &report.verdict {
        crate::verification::Verdict::Accept => DocStatus::Verified,
        crate::verification::Verdict::Reject { reason } => {
            DocStatus::Rejected { reason: *reason }
        }
    };
    doc.advance(status.clone()).expect("enhanced -> terminal");
    record.status = status;

    let render = doc.render.take();
    let (raster, pdf) = match render {
        Some(r) => (r.page_image, r.pdf),
        None => (None, None),
    };
    ProcessedDocument {
        record,
        report: Some(report),
        words,
        element_boxes,
        raster,
        pdf,
    }
}

struct PreparedCall {
    record: CallRecord,
    samples: Vec<SampleRecord>,
}

fn execute_call(
    def: &DatasetDefinition,
    prompt: &str,
    corpus: &Corpus,
    backends: &Backends<'_>,
    cfg: &RunConfig,
    call_id: u64,
    m: u32,
) -> Result<PreparedCall> {
    let sampling = def.sampling.as_ref().expect("normalized definition");
    let mut rng = rng::labeled_rng(cfg.seed, &format!("call-{call_id}"));
    let seed_ids = crate::seed_selection::draw_seeds(&corpus.clustering, sampling, &mut rng)?;
    let images: Vec<SeedImage> = seed_ids
        .iter()
        .map(|id| SeedImage { doc_id: id.clone(), bytes: corpus.image_bytes(id) })
        .collect();
    let request = GenerationRequest { prompt, images: &images, call_id };
    let outcome = generate_with_retry(backends.generator, &request, &cfg.retry)?;
    let parsed = parse_response(&outcome.response.text);
    for drop in &parsed.drops {
        log::warn!("call {call_id}: dropped block {}: {}", drop.index, drop.reason);
    }
    let samples: Vec<SampleRecord> = parsed
        .documents
        .iter()
        .enumerate()
        .map(|(i, html)| {
            let global_index = call_id * m as u64 + i as u64;
            let sample_id = format!("{}-{global_index:05}", def.name);
            process_document(
                def,
                html,
                &sample_id,
                call_id,
                i as u32,
                global_index,
                cfg.seed,
                backends,
            )
            .record
        })
        .collect();
    Ok(PreparedCall {
        record: CallRecord {
            call_id,
            retries: outcome.retries,
            docs: samples.len() as u32,
            drops: parsed.drops.len() as u32,
            usage: outcome.response.usage.unwrap_or_default(),
        },
        samples,
    })
}

/// Generate the dataset: loop prompt calls until `target_count` candidate
/// documents exist, each driven raw → rendered → enhanced → verified, with
/// the manifest appended call by call. Safe to re-invoke after a kill or a
/// pause; completed calls are never re-executed.
pub fn run(
    definition: &DatasetDefinition,
    corpus: &Corpus,
    backends: &Backends<'_>,
    cfg: &RunConfig,
) -> Result<DatasetManifest> {
    let def = definition.normalized()?;
    let m = def.num_solutions_or_default();
    let prompt = crate::synthesis::instantiate_prompt(&def.prompt_spec()?)?;

    let (mut writer, state) = ManifestWriter::open(&cfg.manifest_path, &def, cfg.seed)?;
    let mut calls = state.calls;
    let mut failures = state.failures;
    let mut samples = state.samples;

    let mut candidates = samples.len() as u64;
    let mut next_call = calls
        .iter()
        .map(|c| c.call_id)
        .chain(failures.iter().map(|f| f.call_id))
        .max()
        .map(|c| c + 1)
        .unwrap_or(0);
    let min_calls = def.target_count.div_ceil(m as u64);
    let call_budget = min_calls.saturating_mul(cfg.max_call_factor.max(1) as u64);
    let mut consecutive = 0u32;

    while candidates < def.target_count {
        if next_call >= call_budget {
            return Err(Error::Manifest(format!(
                "call budget {call_budget} exhausted with {candidates}/{} candidates",
                def.target_count
            )));
        }
        let remaining_docs = def.target_count - candidates;
        let needed_calls = remaining_docs.div_ceil(m as u64);
        let chunk_len = needed_calls
            .min(cfg.workers.max(1) as u64)
            .min(call_budget - next_call);
        let chunk: Vec<u64> = (next_call..next_call + chunk_len).collect();
        next_call += chunk_len;

        let results: Vec<(u64, Result<PreparedCall>)> = chunk
            .par_iter()
            .map(|&cid| {
                (cid, execute_call(&def, &prompt, corpus, backends, cfg, cid, m))
            })
            .collect();

        for (cid, result) in results {
            match result {
                Ok(prepared) => {
                    consecutive = 0;
                    writer.append_call(&prepared.samples, &prepared.record)?;
                    candidates += prepared.samples.len() as u64;
                    samples.extend(prepared.samples);
                    calls.push(prepared.record);
                }
                Err(Error::BackendUnavailable(msg)) => {
                    log::error!("call {cid}: backend unavailable: {msg}");
                    return Err(Error::RunPaused { consecutive: consecutive + 1 });
                }
                Err(e) => {
                    consecutive += 1;
                    let failure = FailureRecord { call_id: cid, error: e.to_string() };
                    writer.append_failure(&failure)?;
                    failures.push(failure);
                    if consecutive >= cfg.max_consecutive_failures.max(1) {
                        return Err(Error::RunPaused { consecutive });
                    }
                }
            }
        }
    }

    let stats = compute_stats(&samples, &calls);
    writer.append_stats(&stats)?;
    Ok(DatasetManifest {
        definition: def,
        seed: cfg.seed,
        calls,
        failures,
        samples,
        stats,
    })
}

/// Task-appropriate plain-JSON ground truth for export.
fn export_gt(gt: &GroundTruth) -> serde_json::Value {
    use serde_json::{json, Map, Value};
    fn boxv(b: &PxBox) -> Value {
        json!([b.left, b.top, b.right, b.bottom])
    }
    match gt {
        GroundTruth::QaPairs { pairs } => {
            let map: Map<String, Value> = pairs
                .iter()
                .map(|(q, a)| (q.clone(), Value::String(a.clone())))
                .collect();
            Value::Object(map)
        }
        GroundTruth::ClassLabel { label } => json!({ "label": label }),
        GroundTruth::KieEntities { entities } => Value::Array(
            entities
                .iter()
                .map(|e| {
                    let mut obj = Map::new();
                    if let Some(g) = &e.group {
                        obj.insert("group".into(), Value::String(g.clone()));
                    }
                    obj.insert("field".into(), Value::String(e.field.clone()));
                    obj.insert("value".into(), Value::String(e.value.clone()));
                    if let Some(r) = &e.region {
                        obj.insert("box".into(), boxv(r));
                    }
                    Value::Object(obj)
                })
                .collect(),
        ),
        GroundTruth::LayoutRegions { regions } => Value::Array(
            regions
                .iter()
                .map(|r| {
                    let mut obj = Map::new();
                    obj.insert("label".into(), Value::String(r.label.clone()));
                    if let Some(b) = &r.bbox {
                        obj.insert("box".into(), boxv(b));
                    }
                    Value::Object(obj)
                })
                .collect(),
        ),
    }
}

#[derive(Debug, Serialize)]
struct ExportBoxes<'a> {
    page: PageSize,
    pages: u32,
    element_boxes: &'a BTreeMap<usize, PxBox>,
    words: &'a [WordBox],
}

#[derive(Debug, Serialize)]
struct ExportMeta<'a> {
    sample_id: &'a str,
    call_id: u64,
    index_in_call: u32,
    global_index: u64,
    task: Task,
    status: &'a DocStatus,
    page: PageSize,
    pages: u32,
    word_count: u64,
    hw_count: u64,
    visual_count: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    mean_anls: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct ExportSummary {
    pub exported: u64,
    pub skipped_rejected: u64,
}

/// Write one directory per verified sample: document.html, gt.json,
/// boxes.json, meta.json, page.png (and page.pdf when the renderer produced
/// one). Rejected samples stay in the manifest but are not exported.
pub fn export(
    manifest: &DatasetManifest,
    backends: &Backends<'_>,
    out_dir: &Path,
) -> Result<ExportSummary> {
    let def = manifest.definition.normalized()?;
    fs::create_dir_all(out_dir)?;
    let mut summary = ExportSummary::default();
    for record in &manifest.samples {
        if !matches!(record.status, DocStatus::Verified) {
            summary.skipped_rejected += 1;
            continue;
        }
        // Re-deriving the document from its html is deterministic, so the
        // raster and boxes come out exactly as verified during the run.
        let processed = process_document(
            &def,
            &record.html,
            &record.sample_id,
            record.call_id,
            record.index_in_call,
            record.global_index,
            manifest.seed,
            backends,
        );
        if processed.record.status != record.status {
            return Err(Error::Manifest(format!(
                "{}: export re-processing disagrees with the manifest ({:?} vs {:?})",
                record.sample_id, processed.record.status, record.status
            )));
        }
        let dir = out_dir.join(&record.sample_id);
        fs::create_dir_all(&dir)?;
        fs::write(dir.join("document.html"), &record.html)?;
        let gt = processed.record.gt.as_ref().expect("verified samples carry gt");
        fs::write(dir.join("gt.json"), serde_json::to_string_pretty(&export_gt(gt))?)?;
        let boxes = ExportBoxes {
            page: record.page,
            pages: record.pages,
            element_boxes: &processed.element_boxes,
            words: &processed.words,
        };
        fs::write(dir.join("boxes.json"), serde_json::to_string_pretty(&boxes)?)?;
        let mean_anls = if record.anls.is_empty() {
            None
        } else {
            Some(record.anls.iter().sum::<f64>() / record.anls.len() as f64)
        };
        let meta = ExportMeta {
            sample_id: &record.sample_id,
            call_id: record.call_id,
            index_in_call: record.index_in_call,
            global_index: record.global_index,
            task: def.task_type,
            status: &record.status,
            page: record.page,
            pages: record.pages,
            word_count: record.word_count,
            hw_count: record.hw_count,
            visual_count: record.visual_count,
            mean_anls,
        };
        fs::write(dir.join("meta.json"), serde_json::to_string_pretty(&meta)?)?;
        if let Some(raster) = &processed.raster {
            raster
                .image
                .save_with_format(dir.join("page.png"), image::ImageFormat::Png)?;
        }
        if let Some(pdf) = &processed.pdf {
            fs::write(dir.join("page.pdf"), pdf)?;
        }
        summary.exported += 1;
    }
    Ok(summary)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::handwriting::StubWordGenerator;
    use crate::rendering::{FakeOcr, TestRenderer};
    use crate::synthesis::stub::StubBackend;
    use std::sync::atomic::{AtomicU32, Ordering};

    fn vqa_definition(target: u64) -> DatasetDefinition {
        DatasetDefinition {
            name: "receipts-vqa".into(),
            task_type: Task::Vqa,
            prompt_type: None,
            num_solutions: None,
            doc_type: "receipt".into(),
            gt_type: "Questions about the document".into(),
            gt_format: r#"{"<question>": "<answer>"}"#.into(),
            language: default_language(),
            target_count: target,
            sampling: None,
            labels: Vec::new(),
            group_prefixes: Vec::new(),
            static_groups: Vec::new(),
            anls_tau: DEFAULT_TAU_ANLS,
        }
    }

    struct Fixture {
        renderer: TestRenderer,
        ocr: FakeOcr,
        writer: StubWordGenerator,
        assets: AssetBank,
    }

    impl Fixture {
        fn new() -> Fixture {
            Fixture {
                renderer: TestRenderer::new(),
                ocr: FakeOcr,
                writer: StubWordGenerator::new(),
                assets: AssetBank::new(),
            }
        }

        fn backends<'a>(&'a self, generator: &'a dyn GenerationBackend) -> Backends<'a> {
            Backends {
                generator,
                renderer: &self.renderer,
                ocr: Some(&self.ocr),
                writer: &self.writer,
                assets: &self.assets,
            }
        }
    }

    fn run_config(dir: &Path, seed: u64) -> RunConfig {
        let mut cfg = RunConfig::new(dir.join("manifest.jsonl"), seed);
        cfg.retry = RetryPolicy::no_wait(3);
        cfg
    }

    #[test]
    fn normalization_fills_task_defaults() {
        let def = vqa_definition(10).normalized().unwrap();
        assert_eq!(def.prompt_type, Some(PromptType::Json));
        assert_eq!(def.num_solutions, Some(3));
        let sampling = def.sampling.unwrap();
        assert_eq!(sampling.n_seeds, 6);
        assert!(matches!(sampling.strategy, SamplingStrategy::Ic));

        let mut dla = vqa_definition(10);
        dla.task_type = Task::Dla;
        dla.gt_format = String::new();
        dla.labels = StubBackend::default_labels(Task::Dla);
        let dla = dla.normalized().unwrap();
        assert_eq!(dla.prompt_type, Some(PromptType::Annotation));
        assert_eq!(dla.num_solutions, Some(2));
        assert_eq!(dla.sampling.unwrap().n_seeds, 4);
    }

    #[test]
    fn definition_rejects_inconsistent_fields() {
        let mut def = vqa_definition(0);
        assert!(def.normalized().is_err(), "target 0");
        def.target_count = 10;
        def.gt_format = String::new();
        assert!(def.normalized().is_err(), "macro without gt_format");

        let mut dla = vqa_definition(10);
        dla.task_type = Task::Dla;
        dla.prompt_type = Some(PromptType::Json);
        assert!(dla.normalized().is_err(), "DLA cannot use the macro template");

        let mut bad_seeds = vqa_definition(10);
        bad_seeds.sampling = Some(SamplingConfig {
            strategy: SamplingStrategy::Cc,
            alpha: 0.5,
            n_seeds: 5,
        });
        assert!(bad_seeds.normalized().is_err(), "n_seeds must equal 2M");
    }

    #[test]
    fn definition_round_trips_through_yaml() {
        let yaml = r#"
name: forms-kie
task_type: KIE
prompt_type: annotation
doc_type: scanned form
gt_type: "QUESTION and ANSWER labels"
target_count: 12
labels: [QUESTION, ANSWER]
group_prefixes: [PAIR_]
"#;
        let def: DatasetDefinition = serde_yaml::from_str(yaml).unwrap();
        let def = def.normalized().unwrap();
        assert_eq!(def.template_kind(), TemplateKind::Micro);
        assert_eq!(def.num_solutions, Some(3));
        let text = serde_yaml::to_string(&def).unwrap();
        let back: DatasetDefinition = serde_yaml::from_str(&text).unwrap();
        assert_eq!(back, def);
    }

    fn stub_run(target: u64, seed: u64, dir: &Path) -> DatasetManifest {
        let def = vqa_definition(target);
        let stub = StubBackend::new(Task::Vqa, seed);
        let fixture = Fixture::new();
        let backends = fixture.backends(&stub);
        let corpus = Corpus::synthetic(40, 4);
        run(&def, &corpus, &backends, &run_config(dir, seed)).unwrap()
    }

    #[test]
    fn stub_run_hits_target_with_expected_rejects() {
        let dir = tempfile::tempdir().unwrap();
        let manifest = stub_run(60, 42, dir.path());

        assert_eq!(manifest.calls.len(), 20, "60 candidates at M=3");
        assert_eq!(manifest.samples.len(), 60);
        assert_eq!(manifest.stats.total_samples, 60);
        // Planted: indices 3,13,23,33,43,53 carry absent answers; 7,27,47
        // are multi-page. Everything else must verify.
        assert_eq!(manifest.stats.total_valid, 51);
        assert_eq!(
            manifest.stats.rejects.get("answer_not_in_text"),
            Some(&6),
            "rejects: {:?}",
            manifest.stats.rejects
        );
        assert_eq!(manifest.stats.rejects.get("multi_page"), Some(&3));
        assert_eq!(manifest.stats.rejects.values().sum::<u64>(), 9);

        for sample in &manifest.samples {
            let planted_gt = sample.global_index % 10 == 3;
            let planted_mp = sample.global_index % 20 == 7;
            match &sample.status {
                DocStatus::Verified => {
                    assert!(!planted_gt && !planted_mp, "false accept {}", sample.sample_id)
                }
                DocStatus::Rejected { reason: RejectReason::AnswerNotInText } => {
                    assert!(planted_gt, "false reject {}", sample.sample_id)
                }
                DocStatus::Rejected { reason: RejectReason::MultiPage } => {
                    assert!(planted_mp, "false reject {}", sample.sample_id)
                }
                other => panic!("{}: unexpected status {other:?}", sample.sample_id),
            }
        }
        assert!(manifest.stats.input_tokens > 0);
        assert!(manifest.stats.output_tokens > 0);
        assert!(manifest.stats.avg_words > 0.0);
        manifest.verify_stats().unwrap();
    }

    #[test]
    fn sample_ids_are_unique_and_statuses_terminal() {
        let dir = tempfile::tempdir().unwrap();
        let manifest = stub_run(30, 7, dir.path());
        let mut ids: Vec<&str> = manifest.samples.iter().map(|s| s.sample_id.as_str()).collect();
        let n = ids.len();
        ids.sort_unstable();
        ids.dedup();
        assert_eq!(ids.len(), n);
        assert!(manifest.samples.iter().all(|s| s.status.is_terminal()));
    }

    #[test]
    fn fixed_seed_runs_are_byte_identical() {
        let dir = tempfile::tempdir().unwrap();
        let first = dir.path().join("a");
        let second = dir.path().join("b");
        stub_run(24, 9, &first);
        stub_run(24, 9, &second);
        let a = fs::read(first.join("manifest.jsonl")).unwrap();
        let b = fs::read(second.join("manifest.jsonl")).unwrap();
        assert!(!a.is_empty());
        assert_eq!(a, b);
    }

    #[test]
    fn resume_from_a_cut_manifest_matches_the_full_run() {
        let dir = tempfile::tempdir().unwrap();
        let full_dir = dir.path().join("full");
        stub_run(30, 11, &full_dir);
        let full = fs::read_to_string(full_dir.join("manifest.jsonl")).unwrap();

        // Cut after the 4th call commit, mid-way through the next sample
        // line to simulate a kill during a write.
        let mut call_lines = 0;
        let mut cut = 0;
        for (i, line) in full.split_inclusive('\n').enumerate() {
            let _ = i;
            cut += line.len();
            if line.contains(r#""record":"call""#) {
                call_lines += 1;
                if call_lines == 4 {
                    break;
                }
            }
        }
        let torn = format!("{}{}", &full[..cut], r#"{"record":"sample","sample_id":"receipts-"#);
        let resume_dir = dir.path().join("resumed");
        fs::create_dir_all(&resume_dir).unwrap();
        fs::write(resume_dir.join("manifest.jsonl"), &torn).unwrap();

        let resumed = stub_run(30, 11, &resume_dir);
        let resumed_text = fs::read_to_string(resume_dir.join("manifest.jsonl")).unwrap();
        assert_eq!(resumed_text, full, "resumed manifest must be byte-identical");
        assert_eq!(resumed.samples.len(), 30);
    }

    #[test]
    fn rerunning_a_complete_manifest_changes_nothing() {
        let dir = tempfile::tempdir().unwrap();
        stub_run(12, 3, dir.path());
        let before = fs::read(dir.path().join("manifest.jsonl")).unwrap();
        let again = stub_run(12, 3, dir.path());
        let after = fs::read(dir.path().join("manifest.jsonl")).unwrap();
        assert_eq!(before, after);
        assert_eq!(again.calls.len(), 4);
    }

    #[test]
    fn mismatched_seed_refuses_to_resume() {
        let dir = tempfile::tempdir().unwrap();
        stub_run(12, 3, dir.path());
        let def = vqa_definition(12);
        let stub = StubBackend::new(Task::Vqa, 4);
        let fixture = Fixture::new();
        let backends = fixture.backends(&stub);
        let corpus = Corpus::synthetic(40, 4);
        let err = run(&def, &corpus, &backends, &run_config(dir.path(), 4));
        assert!(matches!(err, Err(Error::Manifest(_))), "{err:?}");
    }

    #[test]
    fn gt_only_planting_yields_ninety_percent_valid() {
        let dir = tempfile::tempdir().unwrap();
        let def = vqa_definition(60);
        let stub = StubBackend::new(Task::Vqa, 5).without_multi_page();
        let fixture = Fixture::new();
        let backends = fixture.backends(&stub);
        let corpus = Corpus::synthetic(40, 4);
        let manifest = run(&def, &corpus, &backends, &run_config(dir.path(), 5)).unwrap();
        assert_eq!(manifest.stats.total_samples, 60);
        assert_eq!(
            manifest.stats.total_valid as f64,
            0.9 * manifest.stats.total_samples as f64
        );
    }

    struct FailingBackend {
        inner: StubBackend,
        fail_through: u32,
        calls: AtomicU32,
    }

    impl GenerationBackend for FailingBackend {
        fn name(&self) -> &'static str {
            "failing"
        }

        fn generate(
            &self,
            req: &GenerationRequest<'_>,
        ) -> Result<crate::synthesis::BackendResponse> {
            let n = self.calls.fetch_add(1, Ordering::SeqCst);
            if n < self.fail_through {
                Err(Error::Other("503 overloaded".into()))
            } else {
                self.inner.generate(req)
            }
        }
    }

    #[test]
    fn persistent_failures_pause_the_run_and_resume_completes() {
        let dir = tempfile::tempdir().unwrap();
        let def = vqa_definition(12);
        let corpus = Corpus::synthetic(40, 4);
        let fixture = Fixture::new();
        let mut cfg = run_config(dir.path(), 21);
        cfg.workers = 1;
        cfg.max_consecutive_failures = 2;

        // Every attempt fails: the retry wrapper exhausts per call, and two
        // consecutive failed calls pause the run.
        let down = FailingBackend {
            inner: StubBackend::new(Task::Vqa, 21),
            fail_through: u32::MAX,
            calls: AtomicU32::new(0),
        };
        let backends = fixture.backends(&down);
        match run(&def, &corpus, &backends, &cfg) {
            Err(Error::RunPaused { consecutive }) => assert_eq!(consecutive, 2),
            other => panic!("expected pause, got {other:?}"),
        }
        let checkpoint = DatasetManifest::load(&cfg.manifest_path).unwrap();
        assert_eq!(checkpoint.failures.len(), 2);
        assert!(checkpoint.samples.is_empty());

        // Backend recovers: the resumed run completes, keeping the failure
        // records and never reusing their call ids for samples.
        let healthy = StubBackend::new(Task::Vqa, 21);
        let backends = fixture.backends(&healthy);
        let manifest = run(&def, &corpus, &backends, &cfg).unwrap();
        assert_eq!(manifest.samples.len(), 12);
        assert_eq!(manifest.failures.len(), 2);
        let failed_ids: Vec<u64> = manifest.failures.iter().map(|f| f.call_id).collect();
        assert!(manifest
            .samples
            .iter()
            .all(|s| !failed_ids.contains(&s.call_id)));
    }

    #[test]
    fn unavailable_backend_pauses_immediately() {
        struct Unconfigured;
        impl GenerationBackend for Unconfigured {
            fn name(&self) -> &'static str {
                "unconfigured"
            }
            fn generate(
                &self,
                _req: &GenerationRequest<'_>,
            ) -> Result<crate::synthesis::BackendResponse> {
                Err(Error::BackendUnavailable("no api key".into()))
            }
        }
        let dir = tempfile::tempdir().unwrap();
        let def = vqa_definition(6);
        let corpus = Corpus::synthetic(10, 2);
        let fixture = Fixture::new();
        let backends = fixture.backends(&Unconfigured);
        let err = run(&def, &corpus, &backends, &run_config(dir.path(), 1));
        assert!(matches!(err, Err(Error::RunPaused { .. })), "{err:?}");
    }

    #[test]
    fn stats_recount_examples() {
        let empty = compute_stats(&[], &[]);
        assert_eq!(empty, ManifestStats::default());

        let sample = SampleRecord {
            sample_id: "s-0".into(),
            call_id: 0,
            index_in_call: 0,
            global_index: 0,
            status: DocStatus::Verified,
            page: PageSize::new(794, 1123),
            pages: 1,
            word_count: 40,
            hw_count: 2,
            visual_count: 1,
            anls: vec![1.0],
            gt: None,
            html: String::new(),
        };
        let one = compute_stats(std::slice::from_ref(&sample), &[]);
        assert_eq!(one.avg_hw_elems, 2.0);
        assert_eq!(one.avg_words, 40.0);
        assert_eq!(one.total_valid, 1);

        let mut rejected = sample.clone();
        rejected.sample_id = "s-1".into();
        rejected.status = DocStatus::Rejected { reason: RejectReason::MultiPage };
        let mixed = compute_stats(&[sample, rejected], &[]);
        assert_eq!(mixed.total_samples, 2);
        assert_eq!(mixed.total_valid, 1);
        assert_eq!(mixed.avg_hw_elems, 2.0, "averages cover valid samples only");
        assert_eq!(mixed.rejects.get("multi_page"), Some(&1));
    }

    #[test]
    fn manifest_stats_match_brute_recount_on_a_real_run() {
        let dir = tempfile::tempdir().unwrap();
        let manifest = stub_run(30, 13, dir.path());
        let valid: Vec<&SampleRecord> = manifest.valid_samples().collect();
        let brute_words: u64 = valid.iter().map(|s| s.word_count).sum();
        assert_eq!(
            manifest.stats.avg_words,
            brute_words as f64 / valid.len() as f64
        );
        let brute_tokens: u64 = manifest.calls.iter().map(|c| c.usage.output_tokens).sum();
        assert_eq!(manifest.stats.output_tokens, brute_tokens);
    }

    #[test]
    fn export_writes_only_verified_samples() {
        let dir = tempfile::tempdir().unwrap();
        let manifest = stub_run(20, 17, dir.path());
        let stub = StubBackend::new(Task::Vqa, 17);
        let fixture = Fixture::new();
        let backends = fixture.backends(&stub);
        let out = dir.path().join("dataset");
        let summary = export(&manifest, &backends, &out).unwrap();
        assert_eq!(summary.exported, manifest.stats.total_valid);
        assert_eq!(
            summary.skipped_rejected,
            manifest.stats.total_samples - manifest.stats.total_valid
        );

        for sample in &manifest.samples {
            let sdir = out.join(&sample.sample_id);
            match &sample.status {
                DocStatus::Verified => {
                    for file in ["document.html", "gt.json", "boxes.json", "meta.json", "page.png"]
                    {
                        assert!(sdir.join(file).exists(), "{}/{file}", sample.sample_id);
                    }
                    let gt: serde_json::Value =
                        serde_json::from_str(&fs::read_to_string(sdir.join("gt.json")).unwrap())
                            .unwrap();
                    let pairs = gt.as_object().expect("VQA gt is a QA map");
                    assert_eq!(pairs.len(), 3);
                }
                _ => assert!(!sdir.exists(), "rejected sample exported: {}", sample.sample_id),
            }
        }
    }

    #[test]
    fn kie_micro_run_verifies_entities_with_regions() {
        let dir = tempfile::tempdir().unwrap();
        let mut def = vqa_definition(12);
        def.name = "forms-kie".into();
        def.task_type = Task::Kie;
        def.prompt_type = Some(PromptType::Annotation);
        def.gt_type = "QUESTION and ANSWER labels".into();
        def.gt_format = String::new();
        def.labels = vec!["QUESTION".into(), "ANSWER".into()];
        def.group_prefixes = vec!["PAIR_".into()];

        let stub = StubBackend::new(Task::Kie, 23).micro();
        let fixture = Fixture::new();
        let backends = fixture.backends(&stub);
        let corpus = Corpus::synthetic(40, 4);
        let manifest = run(&def, &corpus, &backends, &run_config(dir.path(), 23)).unwrap();

        assert_eq!(manifest.stats.total_samples, 12);
        // Index 3 plants an unknown field label; 7 is multi-page.
        assert_eq!(manifest.stats.rejects.get("invalid_label"), Some(&1));
        assert_eq!(manifest.stats.rejects.get("multi_page"), Some(&1));
        assert_eq!(manifest.stats.total_valid, 10);
        let verified = manifest.valid_samples().next().unwrap();
        match verified.gt.as_ref().unwrap() {
            GroundTruth::KieEntities { entities } => {
                assert!(entities.iter().all(|e| e.region.is_some()), "regions filled");
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn dla_run_fills_region_boxes() {
        let dir = tempfile::tempdir().unwrap();
        let mut def = vqa_definition(8);
        def.name = "layout-dla".into();
        def.task_type = Task::Dla;
        def.prompt_type = Some(PromptType::Annotation);
        def.gt_type = "layout element classes".into();
        def.gt_format = String::new();
        def.labels = StubBackend::default_labels(Task::Dla);

        let stub = StubBackend::new(Task::Dla, 31);
        let fixture = Fixture::new();
        let backends = fixture.backends(&stub);
        let corpus = Corpus::synthetic(40, 4);
        let manifest = run(&def, &corpus, &backends, &run_config(dir.path(), 31)).unwrap();

        assert_eq!(manifest.stats.total_samples, 8);
        // M=2: planted indices 3 (unknown label) and 7 (multi-page).
        assert_eq!(manifest.stats.rejects.get("invalid_label"), Some(&1));
        assert_eq!(manifest.stats.rejects.get("multi_page"), Some(&1));
        for sample in manifest.valid_samples() {
            match sample.gt.as_ref().unwrap() {
                GroundTruth::LayoutRegions { regions } => {
                    assert!(!regions.is_empty());
                    assert!(regions.iter().all(|r| r.bbox.is_some()));
                }
                other => panic!("{other:?}"),
            }
        }
    }

    #[test]
    fn cls_run_accepts_vocabulary_labels() {
        let dir = tempfile::tempdir().unwrap();
        let mut def = vqa_definition(10);
        def.name = "docs-cls".into();
        def.task_type = Task::Cls;
        def.gt_type = "document class".into();
        def.gt_format = r#"{"label": "<class label>"}"#.into();
        def.labels = StubBackend::default_labels(Task::Cls);

        let stub = StubBackend::new(Task::Cls, 37);
        let fixture = Fixture::new();
        let backends = fixture.backends(&stub);
        let corpus = Corpus::synthetic(40, 4);
        let manifest = run(&def, &corpus, &backends, &run_config(dir.path(), 37)).unwrap();
        // Target 10 at M=3 rounds up to 4 whole calls.
        assert_eq!(manifest.stats.total_samples, 12);
        assert_eq!(manifest.stats.rejects.get("invalid_label"), Some(&1));
        assert_eq!(manifest.stats.rejects.get("multi_page"), Some(&1));
        assert_eq!(manifest.stats.total_valid, 10);
    }

    #[test]
    fn enhanced_documents_carry_handwriting_and_placeholders() {
        let dir = tempfile::tempdir().unwrap();
        let manifest = stub_run(30, 43, dir.path());
        // Global index 0 has a handwriting span, a signature, a stamp, and a
        // barcode planted by the stub.
        let first = &manifest.samples[0];
        assert_eq!(first.global_index, 0);
        assert_eq!(first.hw_count, 2);
        assert_eq!(first.visual_count, 2);
        assert!(manifest.stats.avg_hw_elems > 0.0);
        assert!(manifest.stats.avg_visual_elems > 0.0);
    }
}
