//! Annotation records, two-annotator merge with senior arbitration, and
//! Krippendorff's-alpha agreement reports.
//!
//! Records are JSON lines, one per line, mirroring the image sidecar schema
//! plus `annotator_id` (and an optional `group` for agreement reporting):
//!
//! ```json
//! {"annotator_id":"e1","image":"img_0.png","structure_label":"UD",
//!  "radicals":[{"label":"swine","box":[10,8,120,120]}],"group":"g1"}
//! ```

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dictionary::{Dictionary, DictionaryError, StructureKind};
use crate::glyph::{AnnotatedImage, BBox, Glyph, GlyphError, RadicalBox};

/// Merge treats two boxes as the same location when IoU reaches this, unless
/// overridden. Annotators never draw pixel-identical boxes, so equality is
/// IoU-relaxed.
pub const DEFAULT_MERGE_IOU: f64 = 0.9;

/// Box-agreement binarization threshold used for the R_C alpha.
pub const BOX_AGREEMENT_IOU: f64 = 0.5;

#[derive(Debug, Error)]
pub enum AnnotationError {
    #[error("records reference different images: {a:?} vs {b:?}")]
    ImageMismatch { a: String, b: String },
    #[error("iou threshold {0} must be in (0, 1]")]
    BadThreshold(f64),
    #[error("character {character:?} has {count} radicals; auto-annotation covers single-radical characters only")]
    NotSingleRadical { character: String, count: usize },
    #[error("no item carries two or more annotations")]
    InsufficientData,
    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error(transparent)]
    Dictionary(#[from] DictionaryError),
    #[error(transparent)]
    Glyph(#[from] GlyphError),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

/// One annotator's labeling of one image.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnnotationRecord {
    pub annotator_id: String,
    pub image: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub character_label: Option<String>,
    pub structure_label: StructureKind,
    pub radicals: Vec<RadicalBox>,
    /// Annotator-group key for agreement reports; records without one share
    /// the default group.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub group: Option<String>,
}

impl AnnotationRecord {
    pub fn boxes(&self) -> Vec<BBox> {
        self.radicals.iter().map(|r| r.bbox).collect()
    }
}

pub fn read_records(path: impl AsRef<Path>) -> Result<Vec<AnnotationRecord>, AnnotationError> {
    let text = std::fs::read_to_string(path)?;
    let mut out = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let rec: AnnotationRecord = serde_json::from_str(line)
            .map_err(|e| AnnotationError::Parse { line: lineno + 1, message: e.to_string() })?;
        out.push(rec);
    }
    Ok(out)
}

pub fn write_records(
    path: impl AsRef<Path>,
    records: &[AnnotationRecord],
) -> Result<(), AnnotationError> {
    let mut text = String::new();
    for rec in records {
        text.push_str(&serde_json::to_string(rec).expect("record serializes"));
        text.push('\n');
    }
    std::fs::write(path, text)?;
    Ok(())
}

/// Where a merged field came from: both annotators agreeing (value taken from
/// E1) or the senior annotator's arbitration.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Provenance {
    Agreed,
    Arbitrated,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MergeResult {
    pub record: AnnotationRecord,
    /// Per final radical slot.
    pub slot_provenance: Vec<Provenance>,
    pub structure_provenance: Provenance,
    /// Present when any input record carried a character label.
    pub character_provenance: Option<Provenance>,
    /// True when slot counts disagreed and the senior record's radicals were
    /// taken wholesale.
    pub record_arbitrated: bool,
}

/// Greedy maximal-IoU matching between two box lists: pairs are picked in
/// descending IoU order (ties by index), each index used once. Returns
/// min(len a, len b) pairs `(i, j, iou)` sorted by i.
pub fn greedy_iou_pairs(a: &[BBox], b: &[BBox]) -> Vec<(usize, usize, f64)> {
    let mut all = Vec::with_capacity(a.len() * b.len());
    for (i, ba) in a.iter().enumerate() {
        for (j, bb) in b.iter().enumerate() {
            all.push((i, j, ba.iou(bb)));
        }
    }
    all.sort_by(|x, y| y.2.total_cmp(&x.2).then(x.0.cmp(&y.0)).then(x.1.cmp(&y.1)));
    let mut used_a = vec![false; a.len()];
    let mut used_b = vec![false; b.len()];
    let mut pairs = Vec::with_capacity(a.len().min(b.len()));
    for (i, j, iou) in all {
        if !used_a[i] && !used_b[j] {
            used_a[i] = true;
            used_b[j] = true;
            pairs.push((i, j, iou));
        }
    }
    pairs.sort_by_key(|p| p.0);
    pairs
}

/// Merge two annotators' records with senior arbitration.
///
/// Slots are corresponded by greedy maximal-IoU matching. A slot agrees when
/// the matched labels are equal and the boxes overlap at IoU >= `iou_match`;
/// agreed slots take E1's value, disagreeing slots take the senior's
/// best-matching slot. The structure label (and character label, when
/// present) agrees on equality, otherwise the senior's value is taken. If the
/// three records disagree on slot count, slot alignment is impossible and the
/// senior's radicals are taken wholesale, flagged via `record_arbitrated`.
pub fn merge_annotations(
    e1: &AnnotationRecord,
    e2: &AnnotationRecord,
    se: &AnnotationRecord,
    iou_match: f64,
) -> Result<MergeResult, AnnotationError> {
    if !(iou_match > 0.0 && iou_match <= 1.0) {
        return Err(AnnotationError::BadThreshold(iou_match));
    }
    for other in [e2, se] {
        if other.image != e1.image {
            return Err(AnnotationError::ImageMismatch {
                a: e1.image.clone(),
                b: other.image.clone(),
            });
        }
    }

    let (structure_label, structure_provenance) = if e1.structure_label == e2.structure_label {
        (e1.structure_label.clone(), Provenance::Agreed)
    } else {
        (se.structure_label.clone(), Provenance::Arbitrated)
    };
    let (character_label, character_provenance) = if e1.character_label == e2.character_label {
        (
            e1.character_label.clone(),
            e1.character_label.as_ref().map(|_| Provenance::Agreed),
        )
    } else {
        (se.character_label.clone(), Some(Provenance::Arbitrated))
    };

    let k = e1.radicals.len();
    let aligned = k == e2.radicals.len() && k == se.radicals.len();
    let (radicals, slot_provenance, record_arbitrated) = if !aligned {
        (
            se.radicals.clone(),
            vec![Provenance::Arbitrated; se.radicals.len()],
            true,
        )
    } else {
        let to_e2: BTreeMap<usize, usize> = greedy_iou_pairs(&e1.boxes(), &e2.boxes())
            .into_iter()
            .map(|(i, j, _)| (i, j))
            .collect();
        let to_se: BTreeMap<usize, usize> = greedy_iou_pairs(&e1.boxes(), &se.boxes())
            .into_iter()
            .map(|(i, j, _)| (i, j))
            .collect();
        let mut radicals = Vec::with_capacity(k);
        let mut provenance = Vec::with_capacity(k);
        for i in 0..k {
            let j = to_e2[&i];
            let agreed = e1.radicals[i].label == e2.radicals[j].label
                && e1.radicals[i].bbox.iou(&e2.radicals[j].bbox) >= iou_match;
            if agreed {
                radicals.push(e1.radicals[i].clone());
                provenance.push(Provenance::Agreed);
            } else {
                radicals.push(se.radicals[to_se[&i]].clone());
                provenance.push(Provenance::Arbitrated);
            }
        }
        (radicals, provenance, false)
    };

    Ok(MergeResult {
        record: AnnotationRecord {
            annotator_id: "consensus".to_string(),
            image: e1.image.clone(),
            character_label,
            structure_label,
            radicals,
            group: e1.group.clone(),
        },
        slot_provenance,
        structure_provenance,
        character_provenance,
        record_arbitrated,
    })
}

/// Krippendorff's alpha for nominal data, coincidence-matrix formulation.
///
/// Each item is the list of values assigned to one unit; items with fewer
/// than two values are unpairable and ignored. With n the number of pairable
/// values, n_c the per-category counts, and O the coincidence-weighted
/// disagreement mass, alpha = 1 - (n-1) * O / (n^2 - sum n_c^2).
///
/// Accumulation is integer-exact (pair counts grouped by item size), so the
/// result is invariant under permutation of items and of values within an
/// item, bit for bit.
pub fn krippendorff_alpha<S: AsRef<str>>(items: &[Vec<S>]) -> Result<f64, AnnotationError> {
    let mut category_counts: BTreeMap<&str, u64> = BTreeMap::new();
    // ordered disagreeing pair counts, grouped by item size m
    let mut disagreements_by_size: BTreeMap<usize, u64> = BTreeMap::new();
    let mut pairable = false;
    for item in items {
        let m = item.len();
        if m < 2 {
            continue;
        }
        pairable = true;
        for v in item {
            *category_counts.entry(v.as_ref()).or_insert(0) += 1;
        }
        let mut disagreeing = 0u64;
        for a in 0..m {
            for b in 0..m {
                if a != b && item[a].as_ref() != item[b].as_ref() {
                    disagreeing += 1;
                }
            }
        }
        if disagreeing > 0 {
            *disagreements_by_size.entry(m).or_insert(0) += disagreeing;
        }
    }
    if !pairable {
        return Err(AnnotationError::InsufficientData);
    }
    let n: u64 = category_counts.values().sum();
    let sum_sq: u64 = category_counts.values().map(|&c| c * c).sum();
    let expected_pairs = (n * n - sum_sq) as f64;
    let observed: f64 = disagreements_by_size
        .iter()
        .map(|(&m, &d)| d as f64 / (m - 1) as f64)
        .sum();
    if expected_pairs == 0.0 {
        // a single category in use: no disagreement is possible or observed
        return Ok(1.0);
    }
    Ok(1.0 - (n - 1) as f64 * observed / expected_pairs)
}

/// Per-group and averaged agreement over a set of annotation records.
#[derive(Debug, Clone, Serialize)]
pub struct AgreementReport {
    pub groups: Vec<GroupAgreement>,
    /// Averages across groups (groups lacking data for a field are skipped).
    pub character: Option<f64>,
    pub structure: Option<f64>,
    pub radical_label: Option<f64>,
    pub radical_box: Option<f64>,
    pub character_items: usize,
    pub structure_items: usize,
    pub radical_label_items: usize,
    pub radical_box_items: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct GroupAgreement {
    pub group: String,
    /// Images in this group with at least two records.
    pub paired_images: usize,
    pub character: Option<f64>,
    pub structure: Option<f64>,
    pub radical_label: Option<f64>,
    pub radical_box: Option<f64>,
}

/// Agreement report: nominal alpha per field, per annotator group, averaged
/// across groups. Character and structure labels are compared per image;
/// radical labels and boxes are compared per matched slot over all record
/// pairs of an image, with box agreement binarized at IoU >=
/// [`BOX_AGREEMENT_IOU`].
pub fn agreement_report(records: &[AnnotationRecord]) -> Result<AgreementReport, AnnotationError> {
    let mut by_group: BTreeMap<String, Vec<&AnnotationRecord>> = BTreeMap::new();
    for rec in records {
        by_group
            .entry(rec.group.clone().unwrap_or_else(|| "default".to_string()))
            .or_default()
            .push(rec);
    }

    let mut groups = Vec::new();
    let mut counts = [0usize; 4];
    let mut any_paired = false;
    for (group, recs) in by_group {
        let mut by_image: BTreeMap<&str, Vec<&AnnotationRecord>> = BTreeMap::new();
        for rec in recs {
            by_image.entry(rec.image.as_str()).or_default().push(rec);
        }
        let mut character_items: Vec<Vec<String>> = Vec::new();
        let mut structure_items: Vec<Vec<String>> = Vec::new();
        let mut label_items: Vec<Vec<String>> = Vec::new();
        let mut box_items: Vec<Vec<String>> = Vec::new();
        let mut paired_images = 0;
        for recs in by_image.values() {
            if recs.len() < 2 {
                continue;
            }
            paired_images += 1;
            character_items
                .push(recs.iter().filter_map(|r| r.character_label.clone()).collect());
            structure_items
                .push(recs.iter().map(|r| r.structure_label.to_string()).collect());
            for a in 0..recs.len() {
                for b in a + 1..recs.len() {
                    let (ra, rb) = (recs[a], recs[b]);
                    for (i, j, iou) in greedy_iou_pairs(&ra.boxes(), &rb.boxes()) {
                        label_items.push(vec![
                            ra.radicals[i].label.to_string(),
                            rb.radicals[j].label.to_string(),
                        ]);
                        let verdict = if iou >= BOX_AGREEMENT_IOU { "match" } else { "mismatch" };
                        box_items.push(vec!["match".to_string(), verdict.to_string()]);
                    }
                }
            }
        }
        any_paired |= paired_images > 0;
        counts[0] += character_items.iter().filter(|i| i.len() >= 2).count();
        counts[1] += structure_items.iter().filter(|i| i.len() >= 2).count();
        counts[2] += label_items.len();
        counts[3] += box_items.len();
        groups.push(GroupAgreement {
            group,
            paired_images,
            character: krippendorff_alpha(&character_items).ok(),
            structure: krippendorff_alpha(&structure_items).ok(),
            radical_label: krippendorff_alpha(&label_items).ok(),
            radical_box: krippendorff_alpha(&box_items).ok(),
        });
    }
    if !any_paired {
        return Err(AnnotationError::InsufficientData);
    }

    let average = |field: fn(&GroupAgreement) -> Option<f64>| {
        let vals: Vec<f64> = groups.iter().filter_map(field).collect();
        if vals.is_empty() {
            None
        } else {
            Some(vals.iter().sum::<f64>() / vals.len() as f64)
        }
    };
    Ok(AgreementReport {
        character: average(|g| g.character),
        structure: average(|g| g.structure),
        radical_label: average(|g| g.radical_label),
        radical_box: average(|g| g.radical_box),
        character_items: counts[0],
        structure_items: counts[1],
        radical_label_items: counts[2],
        radical_box_items: counts[3],
        groups,
    })
}

/// Automatic annotation of a single-radical character: the radical label
/// comes from the dictionary entry, the structure is Single, and the box is
/// the image's ink bounding box.
pub fn auto_annotate_single(
    image: &Glyph,
    character: &str,
    dict: &Dictionary,
    ink_threshold: u8,
) -> Result<AnnotatedImage, AnnotationError> {
    let k = dict.get_num(character)?;
    if k != 1 {
        return Err(AnnotationError::NotSingleRadical {
            character: character.to_string(),
            count: k,
        });
    }
    let entry = dict.entry(character).expect("get_num found the entry");
    let bbox = image.ink_bounding_box(ink_threshold)?;
    Ok(AnnotatedImage {
        glyph: image.clone(),
        character_label: character.to_string(),
        structure_label: entry.structure.clone(),
        radical_labels: vec![entry.radicals[0].clone()],
        radical_boxes: vec![bbox],
    })
}

/// Distinct structure kinds appearing in a record set, for small sanity
/// summaries.
pub fn structure_vocabulary(records: &[AnnotationRecord]) -> BTreeSet<StructureKind> {
    records.iter().map(|r| r.structure_label.clone()).collect()
}
