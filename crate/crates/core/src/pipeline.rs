//! End-to-end zero-shot recognition pipeline and a procedural toy dataset.
//!
//! The pipeline ties the other modules together: split the dictionary into
//! seen and unseen characters, render training images for the seen entries,
//! build radical templates from their labeled crops, render test images for
//! the unseen entries, detect, reason, and score. Every stage is seeded, so a
//! rerun with the same config writes byte-identical outputs.

use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::annotation::AnnotationError;
use crate::detection::{
    detect, write_predictions, DetectionError, DetectionResult, DetectorConfig, TemplateBank,
};
use crate::dictionary::{
    CharacterEntry, Dictionary, DictionaryError, RadicalId, StructureKind,
};
use crate::evaluation::{
    ap50, cat_avg, join_samples, make_zero_shot_split, top_k_accuracy, write_detection_eval,
    write_truth, DetectionEvalRecord, EvalError, GroundTruthBox, PredictedBox, SplitSpec,
    TruthRecord,
};
use crate::glyph::{AnnotatedImage, Glyph, GlyphError};
use crate::layout::{LayoutError, LayoutSet, StructureLayout};
use crate::reasoner::{reason_batch, write_recognitions, ReasonerConfig, ReasonerError};
use crate::rng::stream_rng;
use crate::synthesis::{save_set, render_entry, AugmentBounds, RadicalImageSet, SynthesisError};

pub const CONFIG_SCHEMA_VERSION: u32 = 1;
pub const METRICS_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("invalid pipeline config: {0}")]
    Config(String),
    #[error(transparent)]
    Dictionary(#[from] DictionaryError),
    #[error(transparent)]
    Layout(#[from] LayoutError),
    #[error(transparent)]
    Synthesis(#[from] SynthesisError),
    #[error(transparent)]
    Detection(#[from] DetectionError),
    #[error(transparent)]
    Reasoner(#[from] ReasonerError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error(transparent)]
    Glyph(#[from] GlyphError),
    #[error(transparent)]
    Annotation(#[from] AnnotationError),
    #[error("config parse error: {0}")]
    Toml(#[from] toml::de::Error),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthesisSection {
    pub train_per_entry: usize,
    pub test_per_entry: usize,
    pub train_bounds: AugmentBounds,
    pub test_bounds: AugmentBounds,
}

impl Default for SynthesisSection {
    fn default() -> Self {
        Self {
            train_per_entry: 8,
            test_per_entry: 2,
            train_bounds: default_noise_bounds(),
            test_bounds: AugmentBounds::identity(),
        }
    }
}

/// Mild geometric noise: scale 0.9..1.1, rotation up to 10 degrees, slight
/// shear and padding.
pub fn default_noise_bounds() -> AugmentBounds {
    AugmentBounds {
        scale_min: 0.9,
        scale_max: 1.1,
        max_rotate_deg: 10.0,
        max_shear: 0.05,
        max_pad: 2,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ReasonerSection {
    pub t: usize,
    pub theta: f64,
    pub top_k: usize,
}

impl Default for ReasonerSection {
    fn default() -> Self {
        Self { t: 5, theta: 0.7, top_k: 5 }
    }
}

/// Top-level pipeline configuration, loadable from TOML.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineConfig {
    pub schema_version: u32,
    pub dictionary: PathBuf,
    /// Layout file; the built-in standard layouts are used when absent.
    pub layouts: Option<PathBuf>,
    pub radicals: PathBuf,
    pub out: PathBuf,
    pub seed: u64,
    /// Worker threads; 0 picks the runtime default.
    pub workers: usize,
    pub split: SplitSpec,
    pub synthesis: SynthesisSection,
    pub reasoner: ReasonerSection,
    pub detector: DetectorConfig,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            schema_version: CONFIG_SCHEMA_VERSION,
            dictionary: PathBuf::from("dictionary.txt"),
            layouts: None,
            radicals: PathBuf::from("radicals"),
            out: PathBuf::from("out"),
            seed: 7,
            workers: 0,
            split: SplitSpec { n_seen: 20, m_unseen: 10 },
            synthesis: SynthesisSection::default(),
            reasoner: ReasonerSection::default(),
            detector: DetectorConfig::default(),
        }
    }
}

impl PipelineConfig {
    pub fn parse_toml(text: &str) -> Result<PipelineConfig, PipelineError> {
        let config: PipelineConfig = toml::from_str(text)?;
        if config.schema_version != CONFIG_SCHEMA_VERSION {
            return Err(PipelineError::Config(format!(
                "unsupported schema_version {} (supported: {CONFIG_SCHEMA_VERSION})",
                config.schema_version
            )));
        }
        Ok(config)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<PipelineConfig, PipelineError> {
        Self::parse_toml(&std::fs::read_to_string(path)?)
    }
}

/// Aggregate scores of one pipeline run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub schema_version: u32,
    pub test_images: usize,
    pub top1: f64,
    pub top3: f64,
    pub top5: f64,
    pub cat_avg: f64,
    pub ap50: f64,
    /// Test images whose prediction list came back empty.
    pub rejections: usize,
}

/// Restrict a layout set to the structures a dictionary declares.
pub fn detection_layouts(
    layouts: &LayoutSet,
    dict: &Dictionary,
) -> Result<LayoutSet, PipelineError> {
    let picked: Result<Vec<StructureLayout>, LayoutError> = dict
        .structures()
        .keys()
        .map(|kind| layouts.require(kind).cloned())
        .collect();
    Ok(LayoutSet::from_layouts(layouts.canvas(), picked?)?)
}

fn render_batch(
    entries: &[&CharacterEntry],
    prefix: &str,
    per_entry: usize,
    bounds: &AugmentBounds,
    radicals: &RadicalImageSet,
    layouts: &LayoutSet,
    seed: u64,
) -> Result<Vec<(String, AnnotatedImage)>, SynthesisError> {
    let jobs: Vec<(usize, usize)> = (0..entries.len())
        .flat_map(|e| (0..per_entry).map(move |j| (e, j)))
        .collect();
    jobs.into_par_iter()
        .map(|(e, j)| {
            let entry = entries[e];
            let tag = format!("{prefix}:{}", entry.character);
            let mut rng = stream_rng(seed, &tag, j as u64);
            let image = render_entry(radicals, entry, layouts, bounds, &mut rng)?;
            Ok((format!("{prefix}_{e:04}_{j:03}"), image))
        })
        .collect()
}

/// Crop every labeled radical box out of a set of annotated images, keyed by
/// radical label.
pub fn harvest_crops(
    images: &[(String, AnnotatedImage)],
) -> Result<RadicalImageSet, GlyphError> {
    let mut set = RadicalImageSet::new();
    for (_, img) in images {
        for (label, bbox) in img.radical_labels.iter().zip(&img.radical_boxes) {
            set.insert(label.clone(), img.glyph.crop(bbox)?);
        }
    }
    Ok(set)
}

/// Run the full zero-shot experiment described by `config` and write all
/// outputs under `config.out`:
///
/// * `train/`, `test/`: rendered images with sidecars and a manifest
/// * `truth.jsonl`: test image ground-truth characters
/// * `predictions.jsonl`: detector output per test image
/// * `characters.jsonl`: ranked character predictions per test image
/// * `detection_eval.jsonl`: per-image boxes for AP evaluation
/// * `metrics.json`: the returned [`MetricsReport`]
pub fn run_end_to_end(config: &PipelineConfig) -> Result<MetricsReport, PipelineError> {
    if config.workers > 0 {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(config.workers)
            .build()
            .map_err(|e| PipelineError::Config(format!("worker pool: {e}")))?;
        pool.install(|| run_inner(config))
    } else {
        run_inner(config)
    }
}

fn run_inner(config: &PipelineConfig) -> Result<MetricsReport, PipelineError> {
    config.detector.validate()?;
    let reasoner_config = ReasonerConfig { t: config.reasoner.t, theta: config.reasoner.theta };
    reasoner_config.validate()?;
    if config.synthesis.train_per_entry == 0 || config.synthesis.test_per_entry == 0 {
        return Err(PipelineError::Config(
            "train_per_entry and test_per_entry must be at least 1".to_string(),
        ));
    }

    let dict = Dictionary::load(&config.dictionary)?;
    let layouts = match &config.layouts {
        Some(path) => LayoutSet::load(path)?,
        None => LayoutSet::standard(),
    };
    let radicals = RadicalImageSet::from_dir(&config.radicals)?;
    let split = make_zero_shot_split(&dict, config.split)?;
    let det_layouts = detection_layouts(&layouts, &dict)?;
    std::fs::create_dir_all(&config.out)?;

    let entries_of = |characters: &[String]| -> Vec<&CharacterEntry> {
        characters
            .iter()
            .map(|ch| dict.entry(ch).expect("split characters come from the dictionary"))
            .collect()
    };

    log::info!(
        "rendering {} training images for {} seen characters",
        split.seen.len() * config.synthesis.train_per_entry,
        split.seen.len()
    );
    let train = render_batch(
        &entries_of(&split.seen),
        "train",
        config.synthesis.train_per_entry,
        &config.synthesis.train_bounds,
        &radicals,
        &layouts,
        config.seed,
    )?;
    save_set(&train, config.out.join("train"))?;

    let crops = harvest_crops(&train)?;
    let bank = TemplateBank::build(&crops, &config.detector)?;
    log::info!("built {} radical templates from training crops", bank.len());

    let test = render_batch(
        &entries_of(&split.unseen),
        "test",
        config.synthesis.test_per_entry,
        &config.synthesis.test_bounds,
        &radicals,
        &layouts,
        config.seed,
    )?;
    save_set(&test, config.out.join("test"))?;

    let truths: Vec<TruthRecord> = test
        .iter()
        .map(|(id, img)| TruthRecord {
            image_id: id.clone(),
            character: img.character_label.clone(),
        })
        .collect();
    write_truth(config.out.join("truth.jsonl"), &truths)?;

    let results: Vec<DetectionResult> = test
        .par_iter()
        .map(|(id, img)| detect(id, &img.glyph, &bank, &det_layouts, &config.detector))
        .collect::<Result<_, _>>()?;
    write_predictions(config.out.join("predictions.jsonl"), &results)?;

    let recognitions = reason_batch(
        &dict,
        &results,
        &reasoner_config,
        Some(&layouts),
        config.reasoner.top_k,
    )?;
    write_recognitions(config.out.join("characters.jsonl"), &recognitions)?;

    let samples = join_samples(&truths, &recognitions);
    let detection_records: Vec<DetectionEvalRecord> = test
        .iter()
        .zip(&results)
        .map(|((id, img), result)| DetectionEvalRecord {
            image_id: id.clone(),
            ground_truth: img
                .radical_labels
                .iter()
                .zip(&img.radical_boxes)
                .map(|(label, bbox)| GroundTruthBox { label: label.to_string(), bbox: *bbox })
                .collect(),
            predictions: result
                .slots
                .iter()
                .filter_map(|slot| slot.first())
                .map(|c| PredictedBox {
                    label: c.label.to_string(),
                    conf: c.conf,
                    bbox: c.bbox,
                })
                .collect(),
        })
        .collect();
    write_detection_eval(config.out.join("detection_eval.jsonl"), &detection_records)?;

    let report = MetricsReport {
        schema_version: METRICS_SCHEMA_VERSION,
        test_images: test.len(),
        top1: top_k_accuracy(&samples, 1)?,
        top3: top_k_accuracy(&samples, 3)?,
        top5: top_k_accuracy(&samples, 5)?,
        cat_avg: cat_avg(&samples)?,
        ap50: ap50(&detection_records)?.mean,
        rejections: recognitions.iter().filter(|r| r.predictions.is_empty()).count(),
    };
    let mut json = serde_json::to_string_pretty(&report).expect("report serializes");
    json.push('\n');
    std::fs::write(config.out.join("metrics.json"), json)?;
    Ok(report)
}

// --- toy dataset ---

/// Names of the twelve procedural toy radicals, in category order.
pub const TOY_RADICALS: [&str; 12] = [
    "hbar", "vbar", "slash", "backslash", "plus", "frame", "dhbar", "dvbar", "tee", "ell",
    "cup", "dots",
];

/// Multi-radical toy characters: structure kind plus radical indices into
/// [`TOY_RADICALS`]. All decompositions are distinct, so the toy dictionary
/// has no homographs.
const TOY_MULTI: [(&str, &[usize]); 18] = [
    ("UD", &[0, 1]),
    ("LR", &[2, 3]),
    ("UMD", &[4, 5, 6]),
    ("LMR", &[7, 8, 9]),
    ("UD", &[10, 11]),
    ("LR", &[0, 4]),
    ("UMD", &[1, 3, 5]),
    ("LMR", &[2, 6, 10]),
    ("UD", &[7, 2]),
    ("LR", &[9, 11]),
    ("UMD", &[8, 0, 2]),
    ("LMR", &[11, 5, 3]),
    ("UD", &[4, 8]),
    ("LR", &[6, 1]),
    ("UMD", &[10, 7, 4]),
    ("LMR", &[1, 9, 0]),
    ("UD", &[5, 9]),
    ("LR", &[8, 3]),
];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ToySpec {
    /// Total characters: 12 single-radical entries plus up to 18 compounds.
    pub characters: usize,
    pub exemplars_per_radical: usize,
    pub glyph_size: u32,
    pub seed: u64,
}

impl Default for ToySpec {
    fn default() -> Self {
        Self { characters: 30, exemplars_per_radical: 3, glyph_size: 64, seed: 11 }
    }
}

/// Paint a square brush of side `width` centered at (cx, cy).
fn brush(glyph: &mut Glyph, cx: f64, cy: f64, width: f64) {
    let half = width / 2.0;
    let x_lo = (cx - half).floor().max(0.0) as u32;
    let y_lo = (cy - half).floor().max(0.0) as u32;
    let x_hi = ((cx + half).ceil() as u32).min(glyph.width().saturating_sub(1));
    let y_hi = ((cy + half).ceil() as u32).min(glyph.height().saturating_sub(1));
    for y in y_lo..=y_hi {
        for x in x_lo..=x_hi {
            if (x as f64 - cx).abs() <= half && (y as f64 - cy).abs() <= half {
                glyph.set(x, y, 0);
            }
        }
    }
}

fn stroke(glyph: &mut Glyph, from: (f64, f64), to: (f64, f64), width: f64) {
    let steps = ((to.0 - from.0).abs().max((to.1 - from.1).abs()).ceil() as u32).max(1);
    for s in 0..=steps {
        let t = s as f64 / steps as f64;
        brush(
            glyph,
            from.0 + (to.0 - from.0) * t,
            from.1 + (to.1 - from.1) * t,
            width,
        );
    }
}

/// Paint toy radical `index` onto a fresh canvas. `jitter` shifts the whole
/// shape; `width` is the stroke thickness.
fn paint_toy_radical(
    index: usize,
    size: u32,
    width: f64,
    jitter: (f64, f64),
) -> Result<Glyph, GlyphError> {
    let mut g = Glyph::blank(size, size)?;
    let s = size as f64;
    let (jx, jy) = jitter;
    let lo = 0.18 * s + jx;
    let hi = 0.82 * s + jx;
    let lo_y = 0.18 * s + jy;
    let hi_y = 0.82 * s + jy;
    let mid_x = 0.5 * s + jx;
    let mid_y = 0.5 * s + jy;
    let cap = 0.14 * s;
    let line = |g: &mut Glyph, a: (f64, f64), b: (f64, f64)| stroke(g, a, b, width);
    match index {
        // horizontal bar with end caps (an H on its side)
        0 => {
            line(&mut g, (lo, mid_y), (hi, mid_y));
            line(&mut g, (lo, mid_y - cap), (lo, mid_y + cap));
            line(&mut g, (hi, mid_y - cap), (hi, mid_y + cap));
        }
        // vertical bar with end caps (an I)
        1 => {
            line(&mut g, (mid_x, lo_y), (mid_x, hi_y));
            line(&mut g, (mid_x - cap, lo_y), (mid_x + cap, lo_y));
            line(&mut g, (mid_x - cap, hi_y), (mid_x + cap, hi_y));
        }
        2 => line(&mut g, (lo, hi_y), (hi, lo_y)),
        3 => line(&mut g, (lo, lo_y), (hi, hi_y)),
        4 => {
            line(&mut g, (lo, mid_y), (hi, mid_y));
            line(&mut g, (mid_x, lo_y), (mid_x, hi_y));
        }
        5 => {
            line(&mut g, (lo, lo_y), (hi, lo_y));
            line(&mut g, (hi, lo_y), (hi, hi_y));
            line(&mut g, (hi, hi_y), (lo, hi_y));
            line(&mut g, (lo, hi_y), (lo, lo_y));
        }
        // unequal bar lengths: a partial crop of parallel equal bars would
        // stretch back into the same pattern and fool the slot scorer
        6 => {
            line(&mut g, (lo, 0.32 * s + jy), (hi, 0.32 * s + jy));
            line(&mut g, (lo, 0.68 * s + jy), (0.62 * s + jx, 0.68 * s + jy));
        }
        7 => {
            line(&mut g, (0.32 * s + jx, lo_y), (0.32 * s + jx, hi_y));
            line(&mut g, (0.68 * s + jx, lo_y), (0.68 * s + jx, 0.62 * s + jy));
        }
        8 => {
            line(&mut g, (lo, lo_y), (hi, lo_y));
            line(&mut g, (mid_x, lo_y), (mid_x, hi_y));
        }
        9 => {
            line(&mut g, (lo, lo_y), (lo, hi_y));
            line(&mut g, (lo, hi_y), (hi, hi_y));
        }
        10 => {
            line(&mut g, (lo, lo_y), (lo, hi_y));
            line(&mut g, (hi, lo_y), (hi, hi_y));
            line(&mut g, (lo, hi_y), (hi, hi_y));
        }
        11 => {
            let d = width * 1.6;
            for &(fx, fy) in &[(0.3, 0.3), (0.7, 0.3), (0.3, 0.7), (0.7, 0.7)] {
                brush(&mut g, fx * s + jx, fy * s + jy, d);
            }
        }
        _ => panic!("toy radical index {index} out of range"),
    }
    Ok(g)
}

/// Write a complete toy corpus under `dir`: `dictionary.txt`, `layouts.json`,
/// and `radicals/<id>/<k>.png` exemplars. Returns the loaded pieces.
///
/// The dictionary lists the 12 single-radical characters first and the
/// compounds after, so a split like 20 seen / 10 unseen leaves every radical
/// seen while the unseen characters are novel combinations.
pub fn generate_toy_dataset(
    dir: impl AsRef<Path>,
    spec: &ToySpec,
) -> Result<(Dictionary, LayoutSet, RadicalImageSet), PipelineError> {
    let dir = dir.as_ref();
    let n_single = TOY_RADICALS.len();
    if spec.characters <= n_single || spec.characters > n_single + TOY_MULTI.len() {
        return Err(PipelineError::Config(format!(
            "toy characters must be in {}..={}, got {}",
            n_single + 1,
            n_single + TOY_MULTI.len(),
            spec.characters
        )));
    }
    if spec.exemplars_per_radical == 0 {
        return Err(PipelineError::Config("exemplars_per_radical must be positive".to_string()));
    }
    if spec.glyph_size < 16 {
        return Err(PipelineError::Config("glyph_size must be at least 16".to_string()));
    }

    let mut dict = Dictionary::new();
    for (kind, slots) in [("Single", 1), ("UD", 2), ("LR", 2), ("UMD", 3), ("LMR", 3)] {
        dict.add_structure(StructureKind::new(kind)?, slots);
    }
    let ids: Vec<RadicalId> = TOY_RADICALS
        .iter()
        .map(|name| RadicalId::new(*name))
        .collect::<Result<_, _>>()?;
    for id in &ids {
        dict.add_radical(id.clone(), id.as_str());
    }
    for (i, id) in ids.iter().enumerate() {
        dict.add_entry(CharacterEntry::new(
            TOY_RADICALS[i],
            StructureKind::single(),
            vec![id.clone()],
        )?);
    }
    for (i, (kind, indices)) in TOY_MULTI.iter().take(spec.characters - n_single).enumerate() {
        dict.add_entry(CharacterEntry::new(
            format!("c{i:02}"),
            StructureKind::new(*kind)?,
            indices.iter().map(|&r| ids[r].clone()).collect(),
        )?);
    }
    let violations = dict.validate();
    assert!(violations.is_empty(), "toy dictionary must validate: {violations:?}");

    std::fs::create_dir_all(dir)?;
    dict.save(dir.join("dictionary.txt"))?;
    let layouts = LayoutSet::standard();
    layouts.save(dir.join("layouts.json"))?;

    let mut radicals = RadicalImageSet::new();
    for (i, name) in TOY_RADICALS.iter().enumerate() {
        let subdir = dir.join("radicals").join(name);
        std::fs::create_dir_all(&subdir)?;
        for k in 0..spec.exemplars_per_radical {
            let mut rng = stream_rng(spec.seed, &format!("toy:{name}"), k as u64);
            use rand::Rng;
            let width = spec.glyph_size as f64 / 10.0 + rng.random_range(-0.8..=0.8);
            let jitter = (rng.random_range(-2.0..=2.0), rng.random_range(-2.0..=2.0));
            let glyph = paint_toy_radical(i, spec.glyph_size, width, jitter)?;
            glyph.save_png(subdir.join(format!("{k:02}.png")))?;
            radicals.insert(ids[i].clone(), glyph);
        }
    }
    Ok((dict, layouts, radicals))
}
