//! Baseline radical detector and prediction ingestion.
//!
//! The built-in detector is a template matcher: radical templates are
//! centroid patches over normalized training crops, slot hypotheses come from
//! the structure layouts, and per-slot confidences are normalized
//! cross-correlation scores mapped to `[0, 1]`. It exists to close the loop
//! end to end; stronger detectors plug in through [`ingest_predictions`],
//! which accepts either ready-made per-slot candidates or a raw dense grid
//! (anchor cells with class scores, box offsets, and objectness) that gets
//! decoded and run through class-aware non-maximum suppression.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dictionary::{RadicalId, StructureKind};
use crate::glyph::{BBox, Glyph, GlyphError, DEFAULT_INK_THRESHOLD};
use crate::layout::{LayoutError, LayoutSet};
use crate::synthesis::RadicalImageSet;

pub const DEFAULT_PATCH_SIZE: u32 = 32;
pub const DEFAULT_CANDIDATES_PER_SLOT: usize = 5;
/// Raw-grid anchors below this objectness are discarded.
pub const OBJECTNESS_THRESHOLD: f64 = 0.5;
/// Same-label detections overlapping at or above this IoU are suppressed.
pub const NMS_IOU: f64 = 0.5;
/// Channels per anchor besides the class scores: x, y, w, h, objectness.
pub const BOX_CHANNELS: usize = 5;

#[derive(Debug, Error)]
pub enum DetectionError {
    #[error("invalid detector config: {0}")]
    BadConfig(String),
    #[error("radical {0} has no usable training exemplar")]
    EmptyTraining(RadicalId),
    #[error("template bank is empty")]
    NoTemplates,
    #[error("prediction parse error at line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("invalid prediction data at line {line}: {message}")]
    Data { line: usize, message: String },
    #[error(transparent)]
    Glyph(#[from] GlyphError),
    #[error(transparent)]
    Layout(#[from] LayoutError),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DetectorConfig {
    pub patch_size: u32,
    pub candidates_per_slot: usize,
    pub ink_threshold: u8,
}

impl Default for DetectorConfig {
    fn default() -> Self {
        Self {
            patch_size: DEFAULT_PATCH_SIZE,
            candidates_per_slot: DEFAULT_CANDIDATES_PER_SLOT,
            ink_threshold: DEFAULT_INK_THRESHOLD,
        }
    }
}

impl DetectorConfig {
    pub fn validate(&self) -> Result<(), DetectionError> {
        if self.patch_size < 2 {
            return Err(DetectionError::BadConfig(format!(
                "patch_size {} is below 2",
                self.patch_size
            )));
        }
        if self.candidates_per_slot == 0 {
            return Err(DetectionError::BadConfig(
                "candidates_per_slot must be at least 1".to_string(),
            ));
        }
        Ok(())
    }
}

/// Normalized cross-correlation of two equally sized patches; zero when
/// either patch has zero variance.
pub fn ncc(a: &[f32], b: &[f32]) -> f64 {
    assert_eq!(a.len(), b.len(), "patch sizes must match");
    let n = a.len() as f64;
    let mean = |v: &[f32]| v.iter().map(|&x| x as f64).sum::<f64>() / n;
    let (ma, mb) = (mean(a), mean(b));
    let mut dot = 0.0;
    let mut na = 0.0;
    let mut nb = 0.0;
    for (&x, &y) in a.iter().zip(b) {
        let (dx, dy) = (x as f64 - ma, y as f64 - mb);
        dot += dx * dy;
        na += dx * dx;
        nb += dy * dy;
    }
    if na == 0.0 || nb == 0.0 {
        return 0.0;
    }
    dot / (na.sqrt() * nb.sqrt())
}

/// Resize-normalized patch of a glyph's ink region. Errors on blank glyphs.
fn extract_patch(glyph: &Glyph, patch_size: u32, ink_threshold: u8) -> Result<Vec<f32>, GlyphError> {
    let bbox = glyph.ink_bounding_box(ink_threshold)?;
    let patch = glyph.crop(&bbox)?.scale_to(patch_size, patch_size)?;
    Ok(patch.pixels().iter().map(|&p| p as f32).collect())
}

/// One centroid template per radical category, built from training crops.
#[derive(Debug, Clone)]
pub struct TemplateBank {
    patch_size: u32,
    ink_threshold: u8,
    templates: BTreeMap<RadicalId, Vec<f32>>,
}

impl TemplateBank {
    /// Average the normalized patches of every exemplar of every radical.
    /// Blank exemplars are skipped; a radical with none left is an error.
    pub fn build(set: &RadicalImageSet, config: &DetectorConfig) -> Result<Self, DetectionError> {
        config.validate()?;
        let mut templates = BTreeMap::new();
        for id in set.ids() {
            let exemplars = set.exemplars(id).expect("id comes from the set");
            let mut acc = vec![0f64; (config.patch_size * config.patch_size) as usize];
            let mut used = 0usize;
            for glyph in exemplars {
                let Ok(patch) = extract_patch(glyph, config.patch_size, config.ink_threshold)
                else {
                    continue;
                };
                for (a, p) in acc.iter_mut().zip(&patch) {
                    *a += *p as f64;
                }
                used += 1;
            }
            if used == 0 {
                return Err(DetectionError::EmptyTraining(id.clone()));
            }
            let centroid: Vec<f32> = acc.iter().map(|&a| (a / used as f64) as f32).collect();
            templates.insert(id.clone(), centroid);
        }
        if templates.is_empty() {
            return Err(DetectionError::NoTemplates);
        }
        Ok(Self { patch_size: config.patch_size, ink_threshold: config.ink_threshold, templates })
    }

    pub fn len(&self) -> usize {
        self.templates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.templates.is_empty()
    }

    pub fn labels(&self) -> Vec<RadicalId> {
        self.templates.keys().cloned().collect()
    }

    /// Confidence of every template against a patch, `(ncc + 1) / 2`, sorted
    /// by confidence descending then label ascending.
    pub fn match_patch(&self, patch: &[f32]) -> Vec<(RadicalId, f64)> {
        let mut scored: Vec<(RadicalId, f64)> = self
            .templates
            .iter()
            .map(|(id, tpl)| (id.clone(), ((ncc(patch, tpl) + 1.0) / 2.0).clamp(0.0, 1.0)))
            .collect();
        scored.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
        scored
    }
}

/// One radical hypothesis for a slot.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RadicalCandidate {
    pub label: RadicalId,
    pub conf: f64,
    #[serde(rename = "box")]
    pub bbox: BBox,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StructureScore {
    pub label: StructureKind,
    pub conf: f64,
}

/// Detector output for one image: ranked radical candidates per slot and
/// ranked structure scores. An empty structure list means the producer gave
/// no structure evidence.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectionResult {
    pub image_id: String,
    pub slots: Vec<Vec<RadicalCandidate>>,
    #[serde(default)]
    pub structures: Vec<StructureScore>,
}

/// Run the template detector on one image.
///
/// Every layout in `layouts` is scored: each slot is cropped, its ink region
/// is matched against the bank, and the layout score is the mean best slot
/// confidence. A blank slot scores 0.5 for every template (NCC zero) with the
/// slot rectangle as its box. Structure confidences are the softmax of layout
/// scores; the reported slots come from the best structure.
pub fn detect(
    image_id: &str,
    glyph: &Glyph,
    bank: &TemplateBank,
    layouts: &LayoutSet,
    config: &DetectorConfig,
) -> Result<DetectionResult, DetectionError> {
    config.validate()?;
    if bank.is_empty() {
        return Err(DetectionError::NoTemplates);
    }
    let mut scored: Vec<(StructureKind, f64, Vec<Vec<RadicalCandidate>>)> = Vec::new();
    for kind in layouts.kinds() {
        let slot_rects = layouts.pixel_slots(kind, glyph.width(), glyph.height())?;
        let mut slot_candidates = Vec::with_capacity(slot_rects.len());
        let mut score_sum = 0.0;
        for rect in &slot_rects {
            let crop = glyph.crop(rect)?;
            let candidates = match crop.ink_bounding_box(bank.ink_threshold) {
                Ok(ink) => {
                    let patch: Vec<f32> = crop
                        .crop(&ink)?
                        .scale_to(bank.patch_size, bank.patch_size)?
                        .pixels()
                        .iter()
                        .map(|&p| p as f32)
                        .collect();
                    let bbox = ink.translate(rect.x1, rect.y1);
                    bank.match_patch(&patch)
                        .into_iter()
                        .map(|(label, conf)| RadicalCandidate { label, conf, bbox })
                        .collect::<Vec<_>>()
                }
                // blank slot: no evidence either way for any template
                Err(_) => bank
                    .labels()
                    .into_iter()
                    .map(|label| RadicalCandidate { label, conf: 0.5, bbox: *rect })
                    .collect(),
            };
            score_sum += candidates[0].conf;
            slot_candidates.push(candidates);
        }
        scored.push((kind.clone(), score_sum / slot_rects.len() as f64, slot_candidates));
    }

    let total: f64 = scored.iter().map(|(_, s, _)| s.exp()).sum();
    let mut structures: Vec<StructureScore> = scored
        .iter()
        .map(|(kind, s, _)| StructureScore { label: kind.clone(), conf: s.exp() / total })
        .collect();
    structures.sort_by(|a, b| b.conf.total_cmp(&a.conf).then_with(|| a.label.cmp(&b.label)));

    let best = &structures[0].label;
    let slots = scored
        .iter()
        .find(|(kind, _, _)| kind == best)
        .expect("best kind comes from scored")
        .2
        .iter()
        .map(|candidates| {
            candidates.iter().take(config.candidates_per_slot).cloned().collect()
        })
        .collect();

    Ok(DetectionResult { image_id: image_id.to_string(), slots, structures })
}

/// Raw dense-grid record: `K`x`K` cells, `M` anchors per cell, each anchor
/// carrying `n_r` class scores followed by x, y, w, h, objectness, all in
/// `[0, 1]`. Box centers and sizes are normalized to the cell.
#[derive(Debug, Clone, Deserialize)]
struct RawGridRecord {
    image_id: String,
    #[serde(rename = "K")]
    k: usize,
    #[serde(rename = "M")]
    m: usize,
    n_r: usize,
    grid: Vec<f64>,
    /// Class index to radical id; indices are used verbatim when absent.
    labels: Option<Vec<String>>,
    /// Pixel size the boxes are projected onto; defaults to 256x256.
    image_size: Option<[u32; 2]>,
}

#[derive(Debug, Clone)]
struct RawDetection {
    bbox: BBox,
    class: usize,
    objectness: f64,
    scores: Vec<f64>,
}

fn data_err(message: impl Into<String>) -> DetectionError {
    DetectionError::Data { line: 0, message: message.into() }
}

fn decode_raw(rec: &RawGridRecord, candidates_per_slot: usize) -> Result<DetectionResult, DetectionError> {
    if rec.image_id.is_empty() {
        return Err(data_err("image_id is empty"));
    }
    if rec.k == 0 || rec.m == 0 || rec.n_r == 0 {
        return Err(data_err("K, M and n_r must be positive"));
    }
    let stride = rec.n_r + BOX_CHANNELS;
    let expected = rec.k * rec.k * rec.m * stride;
    if rec.grid.len() != expected {
        return Err(data_err(format!(
            "grid has {} values, expected K*K*M*(n_r+{}) = {}",
            rec.grid.len(),
            BOX_CHANNELS,
            expected
        )));
    }
    if let Some(labels) = &rec.labels {
        if labels.len() != rec.n_r {
            return Err(data_err(format!(
                "labels has {} entries, expected n_r = {}",
                labels.len(),
                rec.n_r
            )));
        }
    }
    if let Some(bad) = rec.grid.iter().find(|v| !v.is_finite() || **v < 0.0 || **v > 1.0) {
        return Err(data_err(format!("grid value {bad} is outside [0, 1]")));
    }
    let [width, height] = rec.image_size.unwrap_or([256, 256]);
    if width == 0 || height == 0 {
        return Err(data_err("image_size must be positive"));
    }
    let cell_w = width as f64 / rec.k as f64;
    let cell_h = height as f64 / rec.k as f64;

    let label_of = |class: usize| -> Result<RadicalId, DetectionError> {
        let raw = match &rec.labels {
            Some(labels) => labels[class].clone(),
            None => class.to_string(),
        };
        RadicalId::new(&raw).map_err(|e| data_err(format!("bad label {raw:?}: {e}")))
    };

    let mut detections = Vec::new();
    for row in 0..rec.k {
        for col in 0..rec.k {
            for anchor in 0..rec.m {
                let base = (((row * rec.k) + col) * rec.m + anchor) * stride;
                let scores = &rec.grid[base..base + rec.n_r];
                let x = rec.grid[base + rec.n_r];
                let y = rec.grid[base + rec.n_r + 1];
                let w = rec.grid[base + rec.n_r + 2];
                let h = rec.grid[base + rec.n_r + 3];
                let objectness = rec.grid[base + rec.n_r + 4];
                if objectness < OBJECTNESS_THRESHOLD {
                    continue;
                }
                let cx = (col as f64 + x) * cell_w;
                let cy = (row as f64 + y) * cell_h;
                let clamp_round =
                    |v: f64, hi: u32| -> u32 { (v.round().max(0.0) as u64).min(hi as u64) as u32 };
                let x1 = clamp_round(cx - w * cell_w / 2.0, width);
                let x2 = clamp_round(cx + w * cell_w / 2.0, width);
                let y1 = clamp_round(cy - h * cell_h / 2.0, height);
                let y2 = clamp_round(cy + h * cell_h / 2.0, height);
                if x2 <= x1 || y2 <= y1 {
                    continue;
                }
                let class = scores
                    .iter()
                    .enumerate()
                    .max_by(|a, b| a.1.total_cmp(b.1).then(b.0.cmp(&a.0)))
                    .map(|(i, _)| i)
                    .expect("n_r is positive");
                detections.push(RawDetection {
                    bbox: BBox::new(x1, y1, x2, y2).expect("checked above"),
                    class,
                    objectness,
                    scores: scores.to_vec(),
                });
            }
        }
    }

    let kept = nms(detections);
    let mut slots = Vec::with_capacity(kept.len());
    for det in &kept {
        let mut candidates = Vec::with_capacity(rec.n_r);
        for (class, &score) in det.scores.iter().enumerate() {
            candidates.push(RadicalCandidate {
                label: label_of(class)?,
                conf: det.objectness * score,
                bbox: det.bbox,
            });
        }
        candidates.sort_by(|a, b| b.conf.total_cmp(&a.conf).then_with(|| a.label.cmp(&b.label)));
        candidates.truncate(candidates_per_slot);
        slots.push(candidates);
    }
    Ok(DetectionResult { image_id: rec.image_id.clone(), slots, structures: Vec::new() })
}

fn bbox_key(b: &BBox) -> (u32, u32, u32, u32) {
    (b.y1, b.x1, b.y2, b.x2)
}

/// Class-aware greedy non-maximum suppression at IoU >= [`NMS_IOU`].
///
/// Ranking is a total order (objectness descending, then box position, then
/// class), so the kept set does not depend on input order. Survivors come
/// back in reading order.
fn nms(mut detections: Vec<RawDetection>) -> Vec<RawDetection> {
    detections.sort_by(|a, b| {
        b.objectness
            .total_cmp(&a.objectness)
            .then_with(|| bbox_key(&a.bbox).cmp(&bbox_key(&b.bbox)))
            .then_with(|| a.class.cmp(&b.class))
    });
    let mut kept: Vec<RawDetection> = Vec::new();
    for det in detections {
        let suppressed = kept
            .iter()
            .any(|k| k.class == det.class && k.bbox.iou(&det.bbox) >= NMS_IOU);
        if !suppressed {
            kept.push(det);
        }
    }
    kept.sort_by(|a, b| bbox_key(&a.bbox).cmp(&bbox_key(&b.bbox)).then(a.class.cmp(&b.class)));
    kept
}

fn validate_direct(mut result: DetectionResult) -> Result<DetectionResult, DetectionError> {
    if result.image_id.is_empty() {
        return Err(data_err("image_id is empty"));
    }
    for (i, slot) in result.slots.iter_mut().enumerate() {
        if slot.is_empty() {
            return Err(data_err(format!("slot {i} has no candidates")));
        }
        for cand in slot.iter() {
            if !cand.conf.is_finite() || cand.conf < 0.0 || cand.conf > 1.0 {
                return Err(data_err(format!(
                    "slot {i} candidate {:?} confidence {} is outside [0, 1]",
                    cand.label, cand.conf
                )));
            }
        }
        slot.sort_by(|a, b| b.conf.total_cmp(&a.conf).then_with(|| a.label.cmp(&b.label)));
    }
    for s in &result.structures {
        if !s.conf.is_finite() || s.conf < 0.0 || s.conf > 1.0 {
            return Err(data_err(format!(
                "structure {:?} confidence {} is outside [0, 1]",
                s.label, s.conf
            )));
        }
    }
    result
        .structures
        .sort_by(|a, b| b.conf.total_cmp(&a.conf).then_with(|| a.label.cmp(&b.label)));
    Ok(result)
}

/// Parse a JSONL prediction stream. Lines are either direct results
/// (`slots` + `structures`) or raw grid records (`grid` present); the two may
/// be mixed. Candidate lists are sorted and capped at `candidates_per_slot`
/// for raw records; direct records keep their full lists, re-sorted.
pub fn parse_predictions(
    text: &str,
    candidates_per_slot: usize,
) -> Result<Vec<DetectionResult>, DetectionError> {
    let mut out = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let lineno = idx + 1;
        let value: serde_json::Value = serde_json::from_str(line)
            .map_err(|e| DetectionError::Parse { line: lineno, message: e.to_string() })?;
        let at_line = |e: DetectionError| match e {
            DetectionError::Data { message, .. } => DetectionError::Data { line: lineno, message },
            other => other,
        };
        let result = if value.get("grid").is_some() {
            let rec: RawGridRecord = serde_json::from_value(value)
                .map_err(|e| DetectionError::Parse { line: lineno, message: e.to_string() })?;
            decode_raw(&rec, candidates_per_slot).map_err(at_line)?
        } else {
            let rec: DetectionResult = serde_json::from_value(value)
                .map_err(|e| DetectionError::Parse { line: lineno, message: e.to_string() })?;
            validate_direct(rec).map_err(at_line)?
        };
        out.push(result);
    }
    Ok(out)
}

pub fn load_predictions(
    path: impl AsRef<Path>,
    candidates_per_slot: usize,
) -> Result<Vec<DetectionResult>, DetectionError> {
    parse_predictions(&std::fs::read_to_string(path)?, candidates_per_slot)
}

pub fn write_predictions(
    path: impl AsRef<Path>,
    results: &[DetectionResult],
) -> Result<(), DetectionError> {
    let mut text = String::new();
    for result in results {
        text.push_str(&serde_json::to_string(result).expect("result serializes"));
        text.push('\n');
    }
    std::fs::write(path, text)?;
    Ok(())
}
