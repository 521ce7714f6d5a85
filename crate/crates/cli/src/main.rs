//! Command-line entry point: dictionary checks, synthesis, annotation
//! agreement, detection, reasoning, and evaluation as one `radglyph` binary.
//!
//! Machine-readable output always goes to files named by `--out`; logging
//! goes to stderr. Exit code 2 flags configuration problems (bad flags,
//! bad config files, missing inputs), 3 flags bad data inside otherwise
//! well-formed inputs.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use rayon::prelude::*;
use serde_json::json;

use radglyph::annotation::{
    agreement_report, merge_annotations, read_records, AnnotationError, AnnotationRecord,
    DEFAULT_MERGE_IOU,
};
use radglyph::detection::{
    detect, load_predictions, write_predictions, DetectionError, DetectorConfig, TemplateBank,
    DEFAULT_CANDIDATES_PER_SLOT, DEFAULT_PATCH_SIZE,
};
use radglyph::dictionary::{Dictionary, DictionaryError, StructureKind};
use radglyph::evaluation::{
    ap50, cat_avg, join_samples, make_zero_shot_split, read_detection_eval, read_truth,
    top_k_accuracy, EvalError, SplitSpec,
};
use radglyph::glyph::{Glyph, DEFAULT_INK_THRESHOLD};
use radglyph::layout::{LayoutError, LayoutSet};
use radglyph::pipeline::{
    default_noise_bounds, detection_layouts, generate_toy_dataset, run_end_to_end, PipelineConfig,
    PipelineError, ToySpec, METRICS_SCHEMA_VERSION,
};
use radglyph::reasoner::{
    read_recognitions, reason_batch, write_recognitions, ReasonerConfig, DEFAULT_THETA,
    DEFAULT_TOP_T,
};
use radglyph::synthesis::{
    gen_img_set, save_set, AugmentBounds, RadicalImageSet, SynthesisConfig, SynthesisError,
};

#[derive(Parser)]
#[command(name = "radglyph", version, about = "Radical-decomposition toolkit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Check a decomposition dictionary and report violations.
    DictValidate(DictValidateArgs),
    /// Splice radical exemplars into synthetic composite images.
    Synth(SynthArgs),
    /// Merge two annotators' records under senior arbitration.
    Merge(MergeArgs),
    /// Krippendorff-alpha agreement report over annotation records.
    Alpha(AlphaArgs),
    /// Run the template detector over a directory of images.
    Detect(DetectArgs),
    /// Normalize external predictions (direct or raw-grid) to result lines.
    Ingest(IngestArgs),
    /// Rank dictionary characters for detection results.
    Reason(ReasonArgs),
    /// Evaluation metrics over truth and prediction files.
    #[command(subcommand)]
    Eval(EvalCommand),
    /// Write a zero-shot seen/unseen character split.
    Split(SplitArgs),
    /// Run the full synthesize/train/detect/reason/evaluate pipeline.
    Run(RunArgs),
    /// Generate the bundled toy corpus plus a ready-to-run config.
    Toy(ToyArgs),
}

#[derive(Args)]
struct DictValidateArgs {
    /// Dictionary text file.
    #[arg(long)]
    dict: PathBuf,
    /// Write the violation report (JSON) here.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SynthArgs {
    /// Directory of radical exemplars (`<id>.png` or `<id>/<k>.png`).
    #[arg(long)]
    radicals: PathBuf,
    /// Layout file; the built-in standard layouts are used when absent.
    #[arg(long)]
    layouts: Option<PathBuf>,
    /// Comma-separated structure kinds to synthesize (e.g. UD,LR).
    #[arg(long, value_delimiter = ',', required = true)]
    structures: Vec<String>,
    /// Images per structure kind.
    #[arg(long)]
    n: usize,
    /// Master seed; per-image streams derive from it.
    #[arg(long)]
    seed: u64,
    /// Output directory for PNGs, sidecars, and the manifest.
    #[arg(long)]
    out: PathBuf,
    /// Restrict radical draws to decompositions of this dictionary.
    #[arg(long)]
    dict: Option<PathBuf>,
    /// Apply the default augmentation noise instead of identity transforms.
    #[arg(long)]
    noise: bool,
    /// Worker threads (0 = runtime default).
    #[arg(long, default_value_t = 0)]
    workers: usize,
}

#[derive(Args)]
struct MergeArgs {
    /// Annotation records (JSON lines), three per image.
    #[arg(long)]
    input: PathBuf,
    /// Merged records with provenance (JSON lines).
    #[arg(long)]
    out: PathBuf,
    /// Box-equality IoU threshold for radical agreement.
    #[arg(long, default_value_t = DEFAULT_MERGE_IOU)]
    iou: f64,
    /// Annotator ids taken as first, second, and senior annotator
    /// (comma-separated). Defaults to each image's record order.
    #[arg(long, value_delimiter = ',')]
    annotators: Option<Vec<String>>,
}

#[derive(Args)]
struct AlphaArgs {
    /// Annotation records (JSON lines).
    #[arg(long)]
    input: PathBuf,
    /// Agreement report (JSON).
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct DetectArgs {
    /// Directory of radical exemplars for the template bank.
    #[arg(long)]
    radicals: PathBuf,
    /// Directory of PNG character images to detect on.
    #[arg(long)]
    images: PathBuf,
    /// Detection results (JSON lines).
    #[arg(long)]
    out: PathBuf,
    /// Layout file; the built-in standard layouts are used when absent.
    #[arg(long)]
    layouts: Option<PathBuf>,
    /// Restrict layout hypotheses to this dictionary's structures.
    #[arg(long)]
    dict: Option<PathBuf>,
    /// Square template patch side in pixels.
    #[arg(long, default_value_t = DEFAULT_PATCH_SIZE)]
    patch_size: u32,
    /// Candidates kept per slot.
    #[arg(long, default_value_t = DEFAULT_CANDIDATES_PER_SLOT)]
    candidates: usize,
    /// Pixels darker than this count as ink.
    #[arg(long, default_value_t = DEFAULT_INK_THRESHOLD)]
    ink_threshold: u8,
    /// Worker threads (0 = runtime default).
    #[arg(long, default_value_t = 0)]
    workers: usize,
}

#[derive(Args)]
struct IngestArgs {
    /// Predictions: direct results or raw grid records (JSON lines).
    #[arg(long)]
    input: PathBuf,
    /// Normalized detection results (JSON lines).
    #[arg(long)]
    out: PathBuf,
    /// Candidates kept per slot when decoding raw grids.
    #[arg(long, default_value_t = DEFAULT_CANDIDATES_PER_SLOT)]
    candidates: usize,
}

#[derive(Args)]
struct ReasonArgs {
    /// Dictionary text file.
    #[arg(long)]
    dict: PathBuf,
    /// Detection results (JSON lines), direct or raw-grid.
    #[arg(long)]
    predictions: PathBuf,
    /// Assignments ranked per image.
    #[arg(long, default_value_t = DEFAULT_TOP_T)]
    t: usize,
    /// Weight of radical-set confidence against structure confidence.
    #[arg(long, default_value_t = DEFAULT_THETA)]
    theta: f64,
    /// Predictions kept per image.
    #[arg(long, default_value_t = 5)]
    top_k: usize,
    /// Ranked character predictions (JSON lines).
    #[arg(long)]
    out: PathBuf,
    /// Layout file for slot-order alignment; standard layouts when absent.
    #[arg(long)]
    layouts: Option<PathBuf>,
}

#[derive(Subcommand)]
enum EvalCommand {
    /// Top-k accuracy from truth plus ranked predictions.
    Topk(TopkArgs),
    /// Mean per-category top-1 accuracy.
    Catavg(CatavgArgs),
    /// Mean average precision at IoU 0.5.
    Ap50(Ap50Args),
    /// Zero-shot seen/unseen split of dictionary characters.
    Split(SplitArgs),
}

#[derive(Args)]
struct TopkArgs {
    /// Ground-truth characters (JSON lines).
    #[arg(long)]
    truth: PathBuf,
    /// Ranked character predictions (JSON lines).
    #[arg(long)]
    predictions: PathBuf,
    /// Comma-separated list of k values.
    #[arg(long, value_delimiter = ',', default_value = "1,3,5")]
    k: Vec<usize>,
    /// Metrics report (JSON).
    #[arg(long)]
    out: PathBuf,
    /// Optional CSV table of the same numbers.
    #[arg(long)]
    csv: Option<PathBuf>,
}

#[derive(Args)]
struct CatavgArgs {
    /// Ground-truth characters (JSON lines).
    #[arg(long)]
    truth: PathBuf,
    /// Ranked character predictions (JSON lines).
    #[arg(long)]
    predictions: PathBuf,
    /// Metrics report (JSON).
    #[arg(long)]
    out: PathBuf,
    /// Optional CSV table of the same numbers.
    #[arg(long)]
    csv: Option<PathBuf>,
}

#[derive(Args)]
struct Ap50Args {
    /// Per-image ground-truth and predicted boxes (JSON lines).
    #[arg(long)]
    input: PathBuf,
    /// Metrics report (JSON).
    #[arg(long)]
    out: PathBuf,
    /// Optional CSV table of per-category APs.
    #[arg(long)]
    csv: Option<PathBuf>,
}

#[derive(Args)]
struct SplitArgs {
    /// Dictionary text file.
    #[arg(long)]
    dict: PathBuf,
    /// Seen categories, taken from the front of the dictionary order.
    #[arg(long)]
    seen: usize,
    /// Unseen categories, taken from the back.
    #[arg(long)]
    unseen: usize,
    /// Split report (JSON).
    #[arg(long)]
    out: PathBuf,
    /// Optional CSV table of the split.
    #[arg(long)]
    csv: Option<PathBuf>,
}

#[derive(Args)]
struct RunArgs {
    /// Pipeline config (TOML).
    #[arg(long)]
    config: PathBuf,
    /// Override the config's dictionary path.
    #[arg(long)]
    dict: Option<PathBuf>,
    /// Override the config's layout file.
    #[arg(long)]
    layouts: Option<PathBuf>,
    /// Override the config's radical directory.
    #[arg(long)]
    radicals: Option<PathBuf>,
    /// Override the config's output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Override the config's master seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Override the config's worker count.
    #[arg(long)]
    workers: Option<usize>,
}

#[derive(Args)]
struct ToyArgs {
    /// Corpus directory to create.
    #[arg(long)]
    out: PathBuf,
    /// Total characters (12 single-radical entries plus compounds).
    #[arg(long, default_value_t = 30)]
    characters: usize,
    /// Exemplar images per radical.
    #[arg(long, default_value_t = 3)]
    exemplars: usize,
    /// Exemplar raster side in pixels.
    #[arg(long, default_value_t = 64)]
    glyph_size: u32,
    /// Seed for exemplar jitter.
    #[arg(long, default_value_t = 11)]
    seed: u64,
}

/// Errors split by exit code: configuration problems exit 2, data problems 3.
enum CliError {
    Config(String),
    Data(String),
}

/// Route a pipeline-level error to its exit class. Everything that means
/// "the run was set up wrong" is config; everything that means "an input
/// file holds bad content" is data.
fn classify(err: PipelineError) -> CliError {
    let config = match &err {
        PipelineError::Config(_) | PipelineError::Toml(_) => true,
        PipelineError::Dictionary(e) => matches!(e, DictionaryError::BadIdentifier { .. }),
        PipelineError::Layout(e) => {
            matches!(e, LayoutError::EmptyCanvas | LayoutError::UnknownStructure(_))
        }
        PipelineError::Synthesis(e) => matches!(
            e,
            SynthesisError::SingleNotAllowed
                | SynthesisError::DuplicateStructure(_)
                | SynthesisError::BadBounds(_)
        ),
        PipelineError::Detection(e) => matches!(e, DetectionError::BadConfig(_)),
        PipelineError::Reasoner(_) => true,
        PipelineError::Eval(e) => {
            matches!(e, EvalError::BadK | EvalError::EmptySplit | EvalError::SplitTooLarge { .. })
        }
        PipelineError::Annotation(e) => matches!(e, AnnotationError::BadThreshold(_)),
        PipelineError::Glyph(_) | PipelineError::Io(_) => false,
    };
    if config {
        CliError::Config(err.to_string())
    } else {
        CliError::Data(err.to_string())
    }
}

fn cli(err: impl Into<PipelineError>) -> CliError {
    classify(err.into())
}

fn io_data(err: std::io::Error) -> CliError {
    CliError::Data(format!("i/o error: {err}"))
}

fn require_file(path: &Path, what: &str) -> Result<(), CliError> {
    if path.is_file() {
        Ok(())
    } else {
        Err(CliError::Config(format!("{what} {} is not a readable file", path.display())))
    }
}

fn require_dir(path: &Path, what: &str) -> Result<(), CliError> {
    if path.is_dir() {
        Ok(())
    } else {
        Err(CliError::Config(format!("{what} {} is not a directory", path.display())))
    }
}

fn load_layouts(path: Option<&Path>) -> Result<LayoutSet, CliError> {
    match path {
        Some(path) => {
            require_file(path, "layout file")?;
            LayoutSet::load(path).map_err(cli)
        }
        None => Ok(LayoutSet::standard()),
    }
}

/// Run `f` on a dedicated worker pool, or inline when `workers` is 0.
fn with_workers<T: Send>(workers: usize, f: impl FnOnce() -> T + Send) -> Result<T, CliError> {
    if workers == 0 {
        return Ok(f());
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| CliError::Config(format!("worker pool: {e}")))?;
    Ok(pool.install(f))
}

/// Write a JSON report, stamping the top-level object with `schema_version`.
fn write_report(path: &Path, payload: serde_json::Value) -> Result<(), CliError> {
    let mut value = payload;
    if let serde_json::Value::Object(map) = &mut value {
        map.insert("schema_version".to_string(), METRICS_SCHEMA_VERSION.into());
    }
    let mut text = serde_json::to_string_pretty(&value).expect("report serializes");
    text.push('\n');
    std::fs::write(path, text).map_err(io_data)
}

fn write_csv(path: &Path, header: &[&str], rows: &[Vec<String>]) -> Result<(), CliError> {
    let csv_err = |e: csv::Error| CliError::Data(format!("csv write: {e}"));
    let mut writer = csv::Writer::from_path(path).map_err(csv_err)?;
    writer.write_record(header).map_err(csv_err)?;
    for row in rows {
        writer.write_record(row).map_err(csv_err)?;
    }
    writer.flush().map_err(io_data)
}

fn write_jsonl<T: serde::Serialize>(path: &Path, records: &[T]) -> Result<(), CliError> {
    let mut text = String::new();
    for record in records {
        text.push_str(&serde_json::to_string(record).expect("record serializes"));
        text.push('\n');
    }
    std::fs::write(path, text).map_err(io_data)
}

fn cmd_dict_validate(args: DictValidateArgs) -> Result<(), CliError> {
    require_file(&args.dict, "dictionary")?;
    // Not Dictionary::load: that rejects unsound dictionaries outright, and
    // reporting what is wrong with them is this subcommand's whole job.
    let text = std::fs::read_to_string(&args.dict).map_err(io_data)?;
    let dict = Dictionary::parse_str(&text).map_err(cli)?;
    let violations = dict.validate();
    let scale = dict.scale_report();
    if let Some(out) = &args.out {
        write_report(
            out,
            json!({
                "dictionary": args.dict,
                "entries": dict.entries().len(),
                "violations": violations.iter().map(|v| v.to_string()).collect::<Vec<_>>(),
                "scale": scale,
            }),
        )?;
    }
    for violation in &violations {
        log::error!("violation: {violation}");
    }
    if !scale.radicals_within_characters {
        log::warn!(
            "radical vocabulary ({}) is not smaller than the character vocabulary ({})",
            scale.radical_categories,
            scale.character_categories
        );
    }
    if violations.is_empty() {
        log::info!(
            "dictionary {}: {} entries, no violations",
            args.dict.display(),
            dict.entries().len()
        );
        Ok(())
    } else {
        Err(CliError::Data(format!(
            "dictionary failed validation with {} violation(s)",
            violations.len()
        )))
    }
}

fn cmd_synth(args: SynthArgs) -> Result<(), CliError> {
    if args.n == 0 {
        return Err(CliError::Config("--n must be at least 1".to_string()));
    }
    require_dir(&args.radicals, "radical directory")?;
    let set = RadicalImageSet::from_dir(&args.radicals).map_err(cli)?;
    let layouts = load_layouts(args.layouts.as_deref())?;
    let kinds = args
        .structures
        .iter()
        .map(|s| StructureKind::new(s.as_str()))
        .collect::<Result<Vec<_>, _>>()
        .map_err(cli)?;
    let dict = match &args.dict {
        Some(path) => {
            require_file(path, "dictionary")?;
            Some(Dictionary::load(path).map_err(cli)?)
        }
        None => None,
    };
    let config = SynthesisConfig {
        per_structure: args.n,
        seed: args.seed,
        bounds: if args.noise { default_noise_bounds() } else { AugmentBounds::identity() },
    };
    let records =
        with_workers(args.workers, || gen_img_set(&set, &kinds, &layouts, &config, dict.as_ref()))?
            .map_err(cli)?;
    let manifest = save_set(&records, &args.out).map_err(cli)?;
    log::info!("wrote {} images and a manifest to {}", manifest.records.len(), args.out.display());
    Ok(())
}

/// Pick the (first, second, senior) records of one image's group, either by
/// explicit annotator ids or, absent those, by record order.
fn pick_annotators<'a>(
    image: &str,
    group: &'a [AnnotationRecord],
    ids: Option<&[String]>,
) -> Result<[&'a AnnotationRecord; 3], CliError> {
    match ids {
        Some(ids) => {
            let mut picked = Vec::with_capacity(3);
            for id in ids {
                let matches: Vec<&AnnotationRecord> =
                    group.iter().filter(|r| &r.annotator_id == id).collect();
                match matches.as_slice() {
                    [one] => picked.push(*one),
                    [] => {
                        return Err(CliError::Data(format!(
                            "image {image:?} has no record from annotator {id:?}"
                        )))
                    }
                    _ => {
                        return Err(CliError::Data(format!(
                            "image {image:?} has multiple records from annotator {id:?}"
                        )))
                    }
                }
            }
            Ok([picked[0], picked[1], picked[2]])
        }
        None => match group {
            [e1, e2, se] => Ok([e1, e2, se]),
            _ => Err(CliError::Data(format!(
                "image {image:?} has {} record(s); merge needs exactly three \
                 (two annotators and a senior), or pass --annotators",
                group.len()
            ))),
        },
    }
}

fn cmd_merge(args: MergeArgs) -> Result<(), CliError> {
    require_file(&args.input, "annotation records")?;
    if let Some(ids) = &args.annotators {
        if ids.len() != 3 {
            return Err(CliError::Config(format!(
                "--annotators needs exactly three comma-separated ids, got {}",
                ids.len()
            )));
        }
    }
    let records = read_records(&args.input).map_err(cli)?;
    let mut order: Vec<String> = Vec::new();
    let mut groups: BTreeMap<String, Vec<AnnotationRecord>> = BTreeMap::new();
    for record in records {
        if !groups.contains_key(&record.image) {
            order.push(record.image.clone());
        }
        groups.entry(record.image.clone()).or_default().push(record);
    }
    if order.is_empty() {
        return Err(CliError::Data("no annotation records to merge".to_string()));
    }
    let mut merged = Vec::with_capacity(order.len());
    let mut arbitrated = 0usize;
    for image in &order {
        let [e1, e2, se] = pick_annotators(image, &groups[image], args.annotators.as_deref())?;
        let result = merge_annotations(e1, e2, se, args.iou).map_err(cli)?;
        arbitrated += usize::from(result.record_arbitrated);
        merged.push(result);
    }
    write_jsonl(&args.out, &merged)?;
    log::info!(
        "merged {} image(s) ({} with record-level arbitration) into {}",
        merged.len(),
        arbitrated,
        args.out.display()
    );
    Ok(())
}

fn cmd_alpha(args: AlphaArgs) -> Result<(), CliError> {
    require_file(&args.input, "annotation records")?;
    let records = read_records(&args.input).map_err(cli)?;
    let report = agreement_report(&records).map_err(cli)?;
    let show = |v: Option<f64>| v.map_or("n/a".to_string(), |v| format!("{v:.4}"));
    log::info!(
        "alpha over {} group(s): character {}, structure {}, radical label {}, radical box {}",
        report.groups.len(),
        show(report.character),
        show(report.structure),
        show(report.radical_label),
        show(report.radical_box),
    );
    write_report(&args.out, serde_json::to_value(&report).expect("report serializes"))
}

fn cmd_detect(args: DetectArgs) -> Result<(), CliError> {
    require_dir(&args.radicals, "radical directory")?;
    require_dir(&args.images, "image directory")?;
    let config = DetectorConfig {
        patch_size: args.patch_size,
        candidates_per_slot: args.candidates,
        ink_threshold: args.ink_threshold,
    };
    config.validate().map_err(cli)?;
    let set = RadicalImageSet::from_dir(&args.radicals).map_err(cli)?;
    let bank = TemplateBank::build(&set, &config).map_err(cli)?;
    let mut layouts = load_layouts(args.layouts.as_deref())?;
    if let Some(path) = &args.dict {
        require_file(path, "dictionary")?;
        let dict = Dictionary::load(path).map_err(cli)?;
        layouts = detection_layouts(&layouts, &dict).map_err(classify)?;
    }
    let mut paths: Vec<PathBuf> = std::fs::read_dir(&args.images)
        .map_err(io_data)?
        .filter_map(|entry| entry.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|ext| ext.eq_ignore_ascii_case("png")))
        .collect();
    paths.sort();
    if paths.is_empty() {
        return Err(CliError::Data(format!("no PNG images in {}", args.images.display())));
    }
    let results = with_workers(args.workers, || {
        paths
            .par_iter()
            .map(|path| {
                let glyph = Glyph::load_png(path).map_err(DetectionError::from)?;
                let image_id =
                    path.file_stem().and_then(|s| s.to_str()).unwrap_or("image").to_string();
                detect(&image_id, &glyph, &bank, &layouts, &config)
            })
            .collect::<Result<Vec<_>, DetectionError>>()
    })?
    .map_err(cli)?;
    write_predictions(&args.out, &results).map_err(cli)?;
    log::info!("detected over {} image(s) into {}", results.len(), args.out.display());
    Ok(())
}

fn cmd_ingest(args: IngestArgs) -> Result<(), CliError> {
    require_file(&args.input, "prediction file")?;
    let results = load_predictions(&args.input, args.candidates).map_err(cli)?;
    write_predictions(&args.out, &results).map_err(cli)?;
    log::info!("ingested {} prediction record(s) into {}", results.len(), args.out.display());
    Ok(())
}

fn cmd_reason(args: ReasonArgs) -> Result<(), CliError> {
    require_file(&args.dict, "dictionary")?;
    require_file(&args.predictions, "prediction file")?;
    if args.top_k == 0 {
        return Err(CliError::Config("--top-k must be at least 1".to_string()));
    }
    let config = ReasonerConfig { t: args.t, theta: args.theta };
    config.validate().map_err(cli)?;
    let dict = Dictionary::load(&args.dict).map_err(cli)?;
    let layouts = load_layouts(args.layouts.as_deref())?;
    let results = load_predictions(&args.predictions, DEFAULT_CANDIDATES_PER_SLOT).map_err(cli)?;
    let records =
        reason_batch(&dict, &results, &config, Some(&layouts), args.top_k).map_err(cli)?;
    let rejections = records.iter().filter(|r| r.predictions.is_empty()).count();
    write_recognitions(&args.out, &records).map_err(io_data)?;
    log::info!(
        "ranked {} image(s) ({} rejection(s)) into {}",
        records.len(),
        rejections,
        args.out.display()
    );
    Ok(())
}

fn cmd_eval_topk(args: TopkArgs) -> Result<(), CliError> {
    require_file(&args.truth, "truth file")?;
    require_file(&args.predictions, "prediction file")?;
    if args.k.is_empty() {
        return Err(CliError::Config("--k needs at least one value".to_string()));
    }
    let truths = read_truth(&args.truth).map_err(cli)?;
    let recognitions = read_recognitions(&args.predictions).map_err(io_data)?;
    let samples = join_samples(&truths, &recognitions);
    let mut entries = Vec::with_capacity(args.k.len());
    let mut rows = Vec::with_capacity(args.k.len());
    for &k in &args.k {
        let accuracy = top_k_accuracy(&samples, k).map_err(cli)?;
        log::info!("top-{k}: {accuracy:.4}");
        entries.push(json!({"k": k, "accuracy": accuracy}));
        rows.push(vec![k.to_string(), accuracy.to_string()]);
    }
    write_report(&args.out, json!({"samples": samples.len(), "topk": entries}))?;
    if let Some(csv_path) = &args.csv {
        write_csv(csv_path, &["k", "accuracy"], &rows)?;
    }
    Ok(())
}

fn cmd_eval_catavg(args: CatavgArgs) -> Result<(), CliError> {
    require_file(&args.truth, "truth file")?;
    require_file(&args.predictions, "prediction file")?;
    let truths = read_truth(&args.truth).map_err(cli)?;
    let recognitions = read_recognitions(&args.predictions).map_err(io_data)?;
    let samples = join_samples(&truths, &recognitions);
    let categories =
        samples.iter().map(|s| s.truth.as_str()).collect::<std::collections::BTreeSet<_>>().len();
    let value = cat_avg(&samples).map_err(cli)?;
    log::info!("cat_avg over {categories} categories: {value:.4}");
    write_report(
        &args.out,
        json!({"samples": samples.len(), "categories": categories, "cat_avg": value}),
    )?;
    if let Some(csv_path) = &args.csv {
        write_csv(csv_path, &["metric", "value"], &[vec!["cat_avg".to_string(), value.to_string()]])?;
    }
    Ok(())
}

fn cmd_eval_ap50(args: Ap50Args) -> Result<(), CliError> {
    require_file(&args.input, "detection eval file")?;
    let records = read_detection_eval(&args.input).map_err(cli)?;
    let report = ap50(&records).map_err(cli)?;
    log::info!("ap50 mean over {} categories: {:.4}", report.per_category.len(), report.mean);
    write_report(
        &args.out,
        json!({"images": records.len(), "mean": report.mean, "per_category": report.per_category}),
    )?;
    if let Some(csv_path) = &args.csv {
        let mut rows: Vec<Vec<String>> = report
            .per_category
            .iter()
            .map(|(category, ap)| vec![category.clone(), ap.to_string()])
            .collect();
        rows.push(vec!["mean".to_string(), report.mean.to_string()]);
        write_csv(csv_path, &["category", "ap"], &rows)?;
    }
    Ok(())
}

fn cmd_split(args: SplitArgs) -> Result<(), CliError> {
    require_file(&args.dict, "dictionary")?;
    let dict = Dictionary::load(&args.dict).map_err(cli)?;
    let split = make_zero_shot_split(&dict, SplitSpec { n_seen: args.seen, m_unseen: args.unseen })
        .map_err(cli)?;
    log::info!(
        "split {}: {} seen / {} unseen of {} entries",
        args.dict.display(),
        split.seen.len(),
        split.unseen.len(),
        dict.entries().len()
    );
    write_report(&args.out, json!({"seen": split.seen, "unseen": split.unseen}))?;
    if let Some(csv_path) = &args.csv {
        let rows: Vec<Vec<String>> = split
            .seen
            .iter()
            .map(|c| vec!["seen".to_string(), c.clone()])
            .chain(split.unseen.iter().map(|c| vec!["unseen".to_string(), c.clone()]))
            .collect();
        write_csv(csv_path, &["part", "character"], &rows)?;
    }
    Ok(())
}

fn cmd_run(args: RunArgs) -> Result<(), CliError> {
    require_file(&args.config, "config")?;
    let mut config = PipelineConfig::load(&args.config).map_err(classify)?;
    if let Some(v) = args.dict {
        config.dictionary = v;
    }
    if let Some(v) = args.layouts {
        config.layouts = Some(v);
    }
    if let Some(v) = args.radicals {
        config.radicals = v;
    }
    if let Some(v) = args.out {
        config.out = v;
    }
    if let Some(v) = args.seed {
        config.seed = v;
    }
    if let Some(v) = args.workers {
        config.workers = v;
    }
    require_file(&config.dictionary, "dictionary")?;
    require_dir(&config.radicals, "radical directory")?;
    if let Some(path) = &config.layouts {
        require_file(path, "layout file")?;
    }
    let report = run_end_to_end(&config).map_err(classify)?;
    log::info!(
        "top1 {:.4}  top3 {:.4}  top5 {:.4}  cat_avg {:.4}  ap50 {:.4}  \
         over {} test image(s), {} rejection(s); outputs in {}",
        report.top1,
        report.top3,
        report.top5,
        report.cat_avg,
        report.ap50,
        report.test_images,
        report.rejections,
        config.out.display()
    );
    Ok(())
}

fn cmd_toy(args: ToyArgs) -> Result<(), CliError> {
    let spec = ToySpec {
        characters: args.characters,
        exemplars_per_radical: args.exemplars,
        glyph_size: args.glyph_size,
        seed: args.seed,
    };
    generate_toy_dataset(&args.out, &spec).map_err(classify)?;
    let config = PipelineConfig {
        dictionary: args.out.join("dictionary.txt"),
        layouts: Some(args.out.join("layouts.json")),
        radicals: args.out.join("radicals"),
        out: args.out.join("run"),
        ..PipelineConfig::default()
    };
    let config_path = args.out.join("config.toml");
    let text = toml::to_string_pretty(&config).expect("config serializes");
    std::fs::write(&config_path, text).map_err(io_data)?;
    log::info!(
        "toy corpus in {}; try: radglyph run --config {}",
        args.out.display(),
        config_path.display()
    );
    Ok(())
}

fn run(command: Command) -> Result<(), CliError> {
    match command {
        Command::DictValidate(args) => cmd_dict_validate(args),
        Command::Synth(args) => cmd_synth(args),
        Command::Merge(args) => cmd_merge(args),
        Command::Alpha(args) => cmd_alpha(args),
        Command::Detect(args) => cmd_detect(args),
        Command::Ingest(args) => cmd_ingest(args),
        Command::Reason(args) => cmd_reason(args),
        Command::Eval(EvalCommand::Topk(args)) => cmd_eval_topk(args),
        Command::Eval(EvalCommand::Catavg(args)) => cmd_eval_catavg(args),
        Command::Eval(EvalCommand::Ap50(args)) => cmd_eval_ap50(args),
        Command::Eval(EvalCommand::Split(args)) | Command::Split(args) => cmd_split(args),
        Command::Run(args) => cmd_run(args),
        Command::Toy(args) => cmd_toy(args),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"))
        .format_timestamp(None)
        .init();
    match run(Cli::parse().command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::Config(message)) => {
            log::error!("{message}");
            ExitCode::from(2)
        }
        Err(CliError::Data(message)) => {
            log::error!("{message}");
            ExitCode::from(3)
        }
    }
}
