//! docdjinn: drive the synthetic-document pipeline from the command line.
//!
//! The subcommands mirror the pipeline stages: `embed` and `cluster` prepare
//! the corpus, `sample` draws seed batches, `generate` runs the full loop
//! into a resumable manifest, `enhance`/`verify` exercise single documents,
//! and `stats`/`export`/`fid` work over finished manifests. Credentials and
//! binaries for external backends come from environment variables only
//! (`DOCDJINN_BROWSER` for the browser renderer).

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use docdjinn_core::embedding::{read_embeddings, write_embeddings, Modality};
use docdjinn_core::geometry::{PageSize, PxBox};
use docdjinn_core::handwriting::StubWordGenerator;
use docdjinn_core::metrics::{layout_fid, GridOccupancyEmbedder, LayoutSample};
use docdjinn_core::pipeline::{
    self, Backends, Corpus, DatasetDefinition, DatasetManifest, RunConfig,
};
use docdjinn_core::rendering::{BrowserRenderer, FakeOcr, OcrBackend, RenderBackend, TestRenderer};
use docdjinn_core::seed_selection::{
    cluster_with_reassignment, draw_seeds, rank_configurations, reduce, ClusteringResult,
    ConfigScore, GaussianProjection, HdbscanClusterer, SamplingConfig, SamplingStrategy,
    DEFAULT_KNN,
};
use docdjinn_core::synthesis::stub::StubBackend;
use docdjinn_core::synthesis::{GenerationBackend, Task, TemplateKind};
use docdjinn_core::visual_elements::{AssetBank, CanonicalType};
use docdjinn_core::{rng, Error};

#[derive(Parser)]
#[command(name = "docdjinn", version, about = "Synthetic document dataset pipeline")]
struct Cli {
    /// Global RNG seed; every random draw in a run derives from it.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,

    /// Concurrent backend calls and worker threads.
    #[arg(long, global = true, default_value_t = 4)]
    workers: usize,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Combine per-modality embedding files into one z-scored matrix.
    Embed(EmbedArgs),
    /// Cluster an embedding matrix; grid over min-cluster-size and keep the
    /// best configuration by final score.
    Cluster(ClusterArgs),
    /// Rank clustering configurations across datasets by cumulative
    /// top-N position points.
    RankConfigs(RankConfigsArgs),
    /// Draw one seed batch from a stored clustering.
    Sample(SampleArgs),
    /// Run the generation loop for a dataset definition into a resumable
    /// manifest. Re-invoke with the same arguments to resume.
    Generate(GenerateArgs),
    /// Render and enhance a single document, writing the page image and
    /// box layers next to it.
    Enhance(EnhanceArgs),
    /// Run a single document through the full pipeline and print its
    /// verification report. Exits 1 when the document is rejected.
    Verify(VerifyArgs),
    /// Recount manifest statistics and check them against the stored block.
    Stats(StatsArgs),
    /// Export verified samples from a manifest as per-sample directories.
    Export(ExportArgs),
    /// Layout FID between two layout-sample sets (JSON files or exported
    /// dataset directories).
    Fid(FidArgs),
}

#[derive(Args)]
struct EmbedArgs {
    /// Input part as <modality>=<path>; repeat per modality.
    #[arg(long = "input", required = true, value_parser = parse_modality_path)]
    inputs: Vec<(Modality, PathBuf)>,

    /// Output JSONL path for the combined matrix.
    #[arg(long)]
    output: PathBuf,
}

#[derive(Args)]
struct ClusterArgs {
    /// Embedding JSONL file.
    #[arg(long)]
    embeddings: PathBuf,

    /// Modality to read from the file.
    #[arg(long, value_parser = Modality::from_str, default_value = "combined")]
    embedding: Modality,

    /// Candidate HDBSCAN minimum cluster sizes (comma separated).
    #[arg(long, value_delimiter = ',', required = true)]
    min_cluster_size: Vec<usize>,

    /// Neighbors consulted when folding noise points into clusters.
    #[arg(long, default_value_t = DEFAULT_KNN)]
    knn: usize,

    /// Dimensionality target before clustering.
    #[arg(long, default_value_t = 100)]
    reduce_dim: usize,

    /// Pick this min-cluster-size instead of the best final score.
    #[arg(long)]
    select: Option<usize>,

    /// Output JSON path for the chosen clustering.
    #[arg(long)]
    output: PathBuf,
}

#[derive(Args)]
struct RankConfigsArgs {
    /// JSON file: dataset name -> list of {embedding, kappa, final_score}.
    #[arg(long)]
    scores: PathBuf,

    /// Positions per dataset that earn points.
    #[arg(long, default_value_t = 3)]
    top: usize,
}

#[derive(Args)]
struct SampleArgs {
    /// Clustering JSON produced by `cluster`.
    #[arg(long)]
    clusters: PathBuf,

    /// cc (cross-cluster) or ic (in-cluster).
    #[arg(long, value_parser = SamplingStrategy::from_str, default_value = "ic")]
    strategy: SamplingStrategy,

    /// Cluster-size bias exponent.
    #[arg(long, default_value_t = 1.0)]
    alpha: f64,

    /// Seeds per batch.
    #[arg(long)]
    n: usize,
}

#[derive(Args)]
struct GenerateArgs {
    /// Dataset definition file (YAML or JSON).
    #[arg(long)]
    config: PathBuf,

    /// Manifest path (created or resumed).
    #[arg(long)]
    manifest: PathBuf,

    /// Generation backend. `stub` plants verification failures;
    /// `stub-clean` does not.
    #[arg(long, default_value = "stub")]
    backend: String,

    /// Clustering JSON for seed sampling; a small synthetic corpus is used
    /// when omitted (stub backends ignore seed image bytes).
    #[arg(long)]
    clusters: Option<PathBuf>,

    /// Directory of corpus images named <doc_id>.<ext>.
    #[arg(long)]
    images: Option<PathBuf>,

    #[command(flatten)]
    doc_backends: DocBackendArgs,
}

/// Renderer, OCR, and asset options shared by document-processing commands.
#[derive(Args)]
struct DocBackendArgs {
    /// `test` (deterministic layout engine) or `browser`
    /// (binary from DOCDJINN_BROWSER).
    #[arg(long, default_value = "test")]
    renderer: String,

    /// Asset directory as <type>=<dir> with type one of figure, photo,
    /// logo; repeat per type.
    #[arg(long = "asset-dir", value_parser = parse_asset_dir)]
    asset_dirs: Vec<(CanonicalType, PathBuf)>,
}

#[derive(Args)]
struct EnhanceArgs {
    /// Dataset definition file; sets the task and template.
    #[arg(long)]
    config: PathBuf,

    /// Document HTML file.
    #[arg(long)]
    input: PathBuf,

    /// Output directory (defaults to the input's directory).
    #[arg(long)]
    out: Option<PathBuf>,

    #[command(flatten)]
    doc_backends: DocBackendArgs,
}

#[derive(Args)]
struct VerifyArgs {
    /// Dataset definition file; sets the task and template.
    #[arg(long)]
    config: PathBuf,

    /// Document HTML file.
    #[arg(long)]
    input: PathBuf,

    #[command(flatten)]
    doc_backends: DocBackendArgs,
}

#[derive(Args)]
struct StatsArgs {
    /// Manifest JSONL path.
    #[arg(long)]
    manifest: PathBuf,
}

#[derive(Args)]
struct ExportArgs {
    /// Manifest JSONL path.
    #[arg(long)]
    manifest: PathBuf,

    /// Output dataset directory.
    #[arg(long)]
    out: PathBuf,

    #[command(flatten)]
    doc_backends: DocBackendArgs,
}

#[derive(Args)]
struct FidArgs {
    /// Real layout samples: JSON file or exported dataset directory.
    #[arg(long)]
    real: PathBuf,

    /// Synthetic layout samples: JSON file or exported dataset directory.
    #[arg(long)]
    synthetic: PathBuf,

    /// Occupancy grid resolution per axis.
    #[arg(long, default_value_t = 8)]
    grid: usize,
}

fn parse_modality_path(s: &str) -> Result<(Modality, PathBuf), String> {
    let (m, p) = s
        .split_once('=')
        .ok_or_else(|| format!("expected <modality>=<path>, got {s:?}"))?;
    let modality = Modality::from_str(m).map_err(|e| e.to_string())?;
    Ok((modality, PathBuf::from(p)))
}

fn parse_asset_dir(s: &str) -> Result<(CanonicalType, PathBuf), String> {
    let (ty, p) = s
        .split_once('=')
        .ok_or_else(|| format!("expected <type>=<dir>, got {s:?}"))?;
    let ty = match ty.to_ascii_lowercase().as_str() {
        "figure" => CanonicalType::Figure,
        "photo" => CanonicalType::Photo,
        "logo" => CanonicalType::Logo,
        other => return Err(format!("unknown asset type {other:?}")),
    };
    Ok((ty, PathBuf::from(p)))
}

fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let code = match dispatch(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            1
        }
    };
    std::process::exit(code);
}

fn dispatch(cli: Cli) -> Result<i32> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(cli.workers.max(1))
        .build_global()
        .ok();
    match cli.command {
        Command::Embed(args) => cmd_embed(args).map(|_| 0),
        Command::Cluster(args) => cmd_cluster(args, cli.seed).map(|_| 0),
        Command::RankConfigs(args) => cmd_rank_configs(args).map(|_| 0),
        Command::Sample(args) => cmd_sample(args, cli.seed).map(|_| 0),
        Command::Generate(args) => cmd_generate(args, cli.seed, cli.workers),
        Command::Enhance(args) => cmd_enhance(args, cli.seed).map(|_| 0),
        Command::Verify(args) => cmd_verify(args, cli.seed),
        Command::Stats(args) => cmd_stats(args).map(|_| 0),
        Command::Export(args) => cmd_export(args).map(|_| 0),
        Command::Fid(args) => cmd_fid(args).map(|_| 0),
    }
}

fn cmd_embed(args: EmbedArgs) -> Result<()> {
    let mut parts = Vec::new();
    for (modality, path) in &args.inputs {
        let m = read_embeddings(path, *modality)
            .with_context(|| format!("reading {} from {}", modality, path.display()))?;
        parts.push(m);
    }
    let refs: Vec<&_> = parts.iter().collect();
    let combined = docdjinn_core::embedding::zscore_concat(&refs)?;
    write_embeddings(&args.output, &combined)?;
    println!(
        "combined {} documents x {} dims -> {}",
        combined.n(),
        combined.dim(),
        args.output.display()
    );
    Ok(())
}

fn cmd_cluster(args: ClusterArgs, seed: u64) -> Result<()> {
    let m = read_embeddings(&args.embeddings, args.embedding)
        .with_context(|| format!("reading {}", args.embeddings.display()))?;
    let reduced = reduce(&m, args.reduce_dim, seed, &GaussianProjection)?;

    let mut results: Vec<(usize, ClusteringResult)> = Vec::new();
    for &kappa in &args.min_cluster_size {
        match cluster_with_reassignment(&reduced, &HdbscanClusterer, kappa, args.knn) {
            Ok(r) => results.push((kappa, r)),
            Err(e) => log::warn!("min-cluster-size {kappa}: {e}"),
        }
    }
    if results.is_empty() {
        bail!("no clustering configuration succeeded");
    }

    println!("{:>6} {:>4} {:>11} {:>9} {:>12}", "kappa", "k", "silhouette", "entropy", "final_score");
    for (kappa, r) in &results {
        println!(
            "{:>6} {:>4} {:>11} {:>9.3} {:>12}",
            kappa,
            r.k,
            r.silhouette.map_or("-".into(), |s| format!("{s:.3}")),
            r.norm_entropy,
            r.final_score.map_or("-".into(), |s| format!("{s:.3}")),
        );
    }

    let chosen = match args.select {
        Some(kappa) => results
            .iter()
            .find(|(k, _)| *k == kappa)
            .ok_or_else(|| anyhow!("--select {kappa} is not among the clustered sizes"))?,
        None => results
            .iter()
            .filter(|(_, r)| r.selectable())
            .max_by(|a, b| {
                a.1.final_score
                    .unwrap()
                    .total_cmp(&b.1.final_score.unwrap())
                    .then(b.0.cmp(&a.0))
            })
            .ok_or_else(|| {
                anyhow!("every configuration collapsed to one cluster; pass --select to force one")
            })?,
    };
    fs::write(&args.output, serde_json::to_string_pretty(&chosen.1)?)?;
    println!(
        "selected kappa={} (k={}) -> {}",
        chosen.0,
        chosen.1.k,
        args.output.display()
    );
    Ok(())
}

fn cmd_rank_configs(args: RankConfigsArgs) -> Result<()> {
    let text = fs::read_to_string(&args.scores)
        .with_context(|| format!("reading {}", args.scores.display()))?;
    let per_dataset: BTreeMap<String, Vec<ConfigScore>> = serde_json::from_str(&text)?;
    let ranking = rank_configurations(&per_dataset, args.top)?;
    println!("{:>10} {:>6} {:>7}", "embedding", "kappa", "points");
    for entry in &ranking.entries {
        println!("{:>10} {:>6} {:>7}", entry.embedding, entry.kappa, entry.points);
    }
    Ok(())
}

fn cmd_sample(args: SampleArgs, seed: u64) -> Result<()> {
    let clustering = load_clustering(&args.clusters)?;
    let cfg = SamplingConfig {
        strategy: args.strategy,
        alpha: args.alpha,
        n_seeds: args.n,
    };
    let mut rng = rng::labeled_rng(seed, "sample");
    let ids = draw_seeds(&clustering, &cfg, &mut rng)?;
    println!("{}", serde_json::to_string_pretty(&ids)?);
    Ok(())
}

fn load_clustering(path: &Path) -> Result<ClusteringResult> {
    let text =
        fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    Ok(serde_json::from_str(&text)?)
}

/// Owner for the renderer picked by `--renderer`.
enum Renderer {
    Test(TestRenderer),
    Browser(BrowserRenderer),
}

impl Renderer {
    fn from_flag(flag: &str) -> Result<Renderer> {
        match flag {
            "test" => Ok(Renderer::Test(TestRenderer::new())),
            "browser" => Ok(Renderer::Browser(BrowserRenderer::from_env()?)),
            other => bail!("unknown renderer {other:?} (expected test or browser)"),
        }
    }

    fn as_render_backend(&self) -> &dyn RenderBackend {
        match self {
            Renderer::Test(r) => r,
            Renderer::Browser(r) => r,
        }
    }

    /// The fake OCR backend only understands the test renderer's sidecar;
    /// browser rasters would need a real OCR integration.
    fn ocr(&self) -> Option<&dyn OcrBackend> {
        match self {
            Renderer::Test(_) => Some(&FakeOcr),
            Renderer::Browser(_) => None,
        }
    }
}

/// Everything needed to build a `Backends` value with the right lifetimes.
struct BackendSet {
    generator: Box<dyn GenerationBackend>,
    renderer: Renderer,
    writer: StubWordGenerator,
    assets: AssetBank,
}

impl BackendSet {
    fn build(
        backend: &str,
        def: &DatasetDefinition,
        seed: u64,
        doc: &DocBackendArgs,
    ) -> Result<BackendSet> {
        let generator: Box<dyn GenerationBackend> = match backend {
            "stub" => Box::new(stub_for(def, seed)),
            "stub-clean" => Box::new(stub_for(def, seed).clean()),
            other => bail!(
                "unknown generation backend {other:?}; this build ships `stub` and `stub-clean`"
            ),
        };
        let mut assets = AssetBank::new();
        for (ty, dir) in &doc.asset_dirs {
            assets = assets.with_dir(*ty, dir);
        }
        Ok(BackendSet {
            generator,
            renderer: Renderer::from_flag(&doc.renderer)?,
            writer: StubWordGenerator::new(),
            assets,
        })
    }

    fn backends(&self) -> Backends<'_> {
        Backends {
            generator: self.generator.as_ref(),
            renderer: self.renderer.as_render_backend(),
            ocr: self.renderer.ocr(),
            writer: &self.writer,
            assets: &self.assets,
        }
    }
}

/// Stub generator matching the definition's task and template.
fn stub_for(def: &DatasetDefinition, seed: u64) -> StubBackend {
    let mut b = StubBackend::new(def.task_type, seed);
    if def.template_kind() == TemplateKind::Micro && def.task_type != Task::Dla {
        b = b.micro();
    }
    b
}

fn load_corpus(clusters: Option<&Path>, images: Option<&Path>) -> Result<Corpus> {
    let mut corpus = match clusters {
        Some(path) => Corpus::new(load_clustering(path)?),
        None => Corpus::synthetic(40, 4),
    };
    if let Some(dir) = images {
        for entry in fs::read_dir(dir).with_context(|| format!("reading {}", dir.display()))? {
            let path = entry?.path();
            let Some(stem) = path.file_stem().and_then(|s| s.to_str()) else {
                continue;
            };
            if corpus.clustering.doc_ids.iter().any(|id| id == stem) {
                corpus.images.insert(stem.to_string(), fs::read(&path)?);
            }
        }
    }
    Ok(corpus)
}

fn cmd_generate(args: GenerateArgs, seed: u64, workers: usize) -> Result<i32> {
    let def = DatasetDefinition::load(&args.config)
        .with_context(|| format!("loading {}", args.config.display()))?;
    let corpus = load_corpus(args.clusters.as_deref(), args.images.as_deref())?;
    let set = BackendSet::build(&args.backend, &def, seed, &args.doc_backends)?;

    let mut cfg = RunConfig::new(&args.manifest, seed);
    cfg.workers = workers;
    match pipeline::run(&def, &corpus, &set.backends(), &cfg) {
        Ok(manifest) => {
            println!("{}", serde_json::to_string_pretty(&manifest.stats)?);
            Ok(0)
        }
        Err(Error::RunPaused { consecutive }) => {
            eprintln!(
                "run paused after {consecutive} consecutive backend failures; \
                 progress saved to {}, re-run the same command to resume",
                args.manifest.display()
            );
            Ok(2)
        }
        Err(e) => Err(e.into()),
    }
}

fn process_single(
    config: &Path,
    input: &Path,
    seed: u64,
    doc: &DocBackendArgs,
) -> Result<(pipeline::ProcessedDocument, DatasetDefinition)> {
    let def = DatasetDefinition::load(config)?;
    let html =
        fs::read_to_string(input).with_context(|| format!("reading {}", input.display()))?;
    let sample_id = input
        .file_stem()
        .and_then(|s| s.to_str())
        .unwrap_or("document")
        .to_string();
    let set = BackendSet::build("stub", &def, seed, doc)?;
    let processed =
        pipeline::process_document(&def, &html, &sample_id, 0, 0, 0, seed, &set.backends());
    Ok((processed, def))
}

fn cmd_enhance(args: EnhanceArgs, seed: u64) -> Result<()> {
    let (processed, _) = process_single(&args.config, &args.input, seed, &args.doc_backends)?;
    let out = match &args.out {
        Some(dir) => dir.clone(),
        None => args.input.parent().unwrap_or(Path::new(".")).to_path_buf(),
    };
    fs::create_dir_all(&out)?;
    let stem = args
        .input
        .file_stem()
        .and_then(|s| s.to_str())
        .unwrap_or("document");

    let record = &processed.record;
    println!(
        "{}",
        serde_json::to_string_pretty(&serde_json::json!({
            "status": record.status,
            "page": record.page,
            "pages": record.pages,
            "handwriting_regions": record.hw_count,
            "visual_elements": record.visual_count,
            "words": record.word_count,
        }))?
    );
    if let Some(raster) = &processed.raster {
        let png = out.join(format!("{stem}.png"));
        raster.image.save_with_format(&png, image::ImageFormat::Png)?;
        println!("page image -> {}", png.display());
    }
    let boxes = out.join(format!("{stem}.boxes.json"));
    fs::write(
        &boxes,
        serde_json::to_string_pretty(&serde_json::json!({
            "page": record.page,
            "element_boxes": processed.element_boxes,
            "words": processed.words,
        }))?,
    )?;
    println!("box layers -> {}", boxes.display());
    Ok(())
}

fn cmd_verify(args: VerifyArgs, seed: u64) -> Result<i32> {
    let (processed, _) = process_single(&args.config, &args.input, seed, &args.doc_backends)?;
    match processed.report {
        Some(report) => {
            println!("{}", serde_json::to_string_pretty(&report)?);
            Ok(if report.verdict.is_accept() { 0 } else { 1 })
        }
        None => {
            // The document never reached verification; the record's status
            // carries the stage that failed.
            println!("{}", serde_json::to_string_pretty(&processed.record.status)?);
            Ok(1)
        }
    }
}

fn cmd_stats(args: StatsArgs) -> Result<()> {
    let manifest = DatasetManifest::load(&args.manifest)?;
    manifest.verify_stats().map_err(|e| anyhow!("{e}"))?;
    println!("{}", serde_json::to_string_pretty(&manifest.stats)?);
    Ok(())
}

fn cmd_export(args: ExportArgs) -> Result<()> {
    let manifest = DatasetManifest::load(&args.manifest)?;
    let set = BackendSet::build("stub", &manifest.definition, manifest.seed, &args.doc_backends)?;
    let summary = pipeline::export(&manifest, &set.backends(), &args.out)?;
    println!(
        "exported {} samples to {} ({} rejected samples skipped)",
        summary.exported,
        args.out.display(),
        summary.skipped_rejected
    );
    Ok(())
}

fn cmd_fid(args: FidArgs) -> Result<()> {
    let real = load_layout_samples(&args.real)?;
    let synth = load_layout_samples(&args.synthetic)?;
    let embedder = GridOccupancyEmbedder { grid: args.grid };
    let fid = layout_fid(&real, &synth, &embedder)?;
    println!("layout_fid: {fid:.6}");
    Ok(())
}

/// Accept either a JSON array of layout samples or an exported dataset
/// directory whose per-sample `boxes.json` files are read as samples.
fn load_layout_samples(path: &Path) -> Result<Vec<LayoutSample>> {
    #[derive(serde::Deserialize)]
    struct BoxesFile {
        page: PageSize,
        element_boxes: BTreeMap<usize, PxBox>,
    }

    if path.is_dir() {
        let mut samples = Vec::new();
        let mut subdirs: Vec<PathBuf> = fs::read_dir(path)?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.is_dir())
            .collect();
        subdirs.sort();
        for sub in subdirs {
            let boxes_path = sub.join("boxes.json");
            if !boxes_path.exists() {
                continue;
            }
            let parsed: BoxesFile = serde_json::from_str(&fs::read_to_string(&boxes_path)?)
                .with_context(|| format!("parsing {}", boxes_path.display()))?;
            samples.push(LayoutSample {
                page: parsed.page,
                boxes: parsed.element_boxes.into_values().collect(),
            });
        }
        if samples.is_empty() {
            bail!("{}: no sample directories with boxes.json", path.display());
        }
        Ok(samples)
    } else {
        let text =
            fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        Ok(serde_json::from_str(&text)?)
    }
}
