//! Character reasoning from radical and structure confidences.
//!
//! Detection gives ranked radical candidates per slot and ranked structure
//! candidates per image. The reasoner enumerates the top-t radical
//! assignments (by mean confidence) and the top-t structures, looks every
//! combination up in the decomposition dictionary, and scores each hit
//!
//! ```text
//! p_c = theta * P_R + (1 - theta) * P_S
//! ```
//!
//! where P_R is the assignment's mean radical confidence and P_S the
//! structure confidence. Combinations absent from the dictionary contribute
//! nothing; an image whose combinations all miss yields an empty prediction
//! list, the zero-shot rejection case. This tolerates single-slot detection
//! errors: the wrong top-1 radical usually forms no dictionary entry, while
//! the correct lower-ranked candidate still reaches a high p_c.

use std::collections::BinaryHeap;
use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::detection::{DetectionResult, RadicalCandidate, StructureScore};
use crate::dictionary::{Dictionary, RadicalId, StructureKind};
use crate::glyph::BBox;
use crate::layout::LayoutSet;

pub const DEFAULT_TOP_T: usize = 5;
pub const DEFAULT_THETA: f64 = 0.7;

#[derive(Debug, Error)]
pub enum ReasonerError {
    #[error("invalid reasoner config: {0}")]
    BadConfig(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ReasonerConfig {
    /// How many radical assignments and structure candidates to combine.
    pub t: usize,
    /// Weight of radical confidence against structure confidence.
    pub theta: f64,
}

impl Default for ReasonerConfig {
    fn default() -> Self {
        Self { t: DEFAULT_TOP_T, theta: DEFAULT_THETA }
    }
}

impl ReasonerConfig {
    pub fn validate(&self) -> Result<(), ReasonerError> {
        if self.t == 0 {
            return Err(ReasonerError::BadConfig("t must be at least 1".to_string()));
        }
        if !(self.theta.is_finite() && (0.0..=1.0).contains(&self.theta)) {
            return Err(ReasonerError::BadConfig(format!(
                "theta {} must be in [0, 1]",
                self.theta
            )));
        }
        Ok(())
    }
}

/// Mean radical confidence of a complete assignment.
pub fn radical_set_confidence(confs: &[f64]) -> f64 {
    assert!(!confs.is_empty(), "assignment cannot be empty");
    confs.iter().sum::<f64>() / confs.len() as f64
}

/// One radical chosen per slot.
#[derive(Debug, Clone, PartialEq)]
pub struct Assignment {
    pub labels: Vec<RadicalId>,
    pub confidences: Vec<f64>,
    pub p_r: f64,
}

fn sorted_slot_order(slot: &[RadicalCandidate]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..slot.len()).collect();
    idx.sort_by(|&a, &b| {
        slot[b].conf.total_cmp(&slot[a].conf).then_with(|| slot[a].label.cmp(&slot[b].label))
    });
    idx
}

#[derive(PartialEq)]
struct HeapEntry {
    sum: f64,
    ranks: Vec<usize>,
}

impl Eq for HeapEntry {}

impl Ord for HeapEntry {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        // max-heap: higher sum first, then lexicographically smaller ranks
        self.sum.total_cmp(&other.sum).then_with(|| other.ranks.cmp(&self.ranks))
    }
}

impl PartialOrd for HeapEntry {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

/// Top-t complete assignments by mean confidence, highest first; equal scores
/// order by candidate rank vector (better-ranked earlier slots first). Any
/// empty slot makes assignment impossible and yields no results.
pub fn top_assignments(slots: &[Vec<RadicalCandidate>], t: usize) -> Vec<Assignment> {
    if t == 0 || slots.is_empty() || slots.iter().any(Vec::is_empty) {
        return Vec::new();
    }
    let order: Vec<Vec<usize>> = slots.iter().map(|s| sorted_slot_order(s)).collect();
    let conf_at = |ranks: &[usize]| -> f64 {
        // recomputed from scratch so equal rank vectors always get identical sums
        ranks
            .iter()
            .enumerate()
            .map(|(s, &r)| slots[s][order[s][r]].conf)
            .sum()
    };
    let mut heap = BinaryHeap::new();
    let mut visited = BTreeSet::new();
    let root = vec![0usize; slots.len()];
    visited.insert(root.clone());
    heap.push(HeapEntry { sum: conf_at(&root), ranks: root });
    let mut out = Vec::with_capacity(t);
    while out.len() < t {
        let Some(entry) = heap.pop() else { break };
        for s in 0..slots.len() {
            if entry.ranks[s] + 1 < slots[s].len() {
                let mut next = entry.ranks.clone();
                next[s] += 1;
                if visited.insert(next.clone()) {
                    heap.push(HeapEntry { sum: conf_at(&next), ranks: next });
                }
            }
        }
        let labels = entry
            .ranks
            .iter()
            .enumerate()
            .map(|(s, &r)| slots[s][order[s][r]].label.clone())
            .collect();
        let confidences: Vec<f64> = entry
            .ranks
            .iter()
            .enumerate()
            .map(|(s, &r)| slots[s][order[s][r]].conf)
            .collect();
        let p_r = radical_set_confidence(&confidences);
        out.push(Assignment { labels, confidences, p_r });
    }
    out
}

/// One recognized character with its combined confidence.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CharacterPrediction {
    pub character: String,
    pub p_c: f64,
}

/// Recognition output for one image; an empty prediction list is the
/// zero-shot rejection outcome.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecognitionRecord {
    pub image_id: String,
    pub predictions: Vec<CharacterPrediction>,
}

pub fn read_recognitions(
    path: impl AsRef<std::path::Path>,
) -> Result<Vec<RecognitionRecord>, std::io::Error> {
    let text = std::fs::read_to_string(path)?;
    let mut out = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let rec: RecognitionRecord = serde_json::from_str(line).map_err(|e| {
            std::io::Error::new(
                std::io::ErrorKind::InvalidData,
                format!("line {}: {e}", idx + 1),
            )
        })?;
        out.push(rec);
    }
    Ok(out)
}

pub fn write_recognitions(
    path: impl AsRef<std::path::Path>,
    records: &[RecognitionRecord],
) -> Result<(), std::io::Error> {
    let mut text = String::new();
    for rec in records {
        text.push_str(&serde_json::to_string(rec).expect("record serializes"));
        text.push('\n');
    }
    std::fs::write(path, text)
}

/// Map detection slots onto a structure's canonical (dictionary) slot order.
///
/// With a layout for the candidate structure, detected boxes are assigned to
/// layout slots by greedy nearest-center matching in normalized coordinates.
/// Without one, slots fall back to reading order (top-to-bottom,
/// left-to-right) of their top candidate's box.
fn slot_order(
    slots: &[Vec<RadicalCandidate>],
    kind: &StructureKind,
    layouts: Option<&LayoutSet>,
) -> Vec<usize> {
    let k = slots.len();
    if k == 1 {
        return vec![0];
    }
    let boxes: Vec<BBox> = slots.iter().map(|s| s[0].bbox).collect();
    if let Some(layout) = layouts.and_then(|ls| ls.get(kind)) {
        if layout.slot_count() == k {
            let min_x = boxes.iter().map(|b| b.x1).min().unwrap() as f64;
            let min_y = boxes.iter().map(|b| b.y1).min().unwrap() as f64;
            let max_x = boxes.iter().map(|b| b.x2).max().unwrap() as f64;
            let max_y = boxes.iter().map(|b| b.y2).max().unwrap() as f64;
            let norm = |v: f64, lo: f64, hi: f64| if hi > lo { (v - lo) / (hi - lo) } else { 0.5 };
            let centers: Vec<(f64, f64)> = boxes
                .iter()
                .map(|b| {
                    let (cx, cy) = b.center();
                    (norm(cx, min_x, max_x), norm(cy, min_y, max_y))
                })
                .collect();
            let mut pairs = Vec::with_capacity(k * k);
            for (i, &(cx, cy)) in centers.iter().enumerate() {
                for (j, slot) in layout.slots.iter().enumerate() {
                    let (sx, sy) = slot.center();
                    let d2 = (cx - sx).powi(2) + (cy - sy).powi(2);
                    pairs.push((i, j, d2));
                }
            }
            pairs.sort_by(|a, b| a.2.total_cmp(&b.2).then(a.0.cmp(&b.0)).then(a.1.cmp(&b.1)));
            let mut det_used = vec![false; k];
            let mut order = vec![usize::MAX; k];
            for (i, j, _) in pairs {
                if !det_used[i] && order[j] == usize::MAX {
                    det_used[i] = true;
                    order[j] = i;
                }
            }
            return order;
        }
    }
    let mut idx: Vec<usize> = (0..k).collect();
    idx.sort_by_key(|&i| (boxes[i].y1, boxes[i].x1, boxes[i].y2, boxes[i].x2, i));
    idx
}

/// Combine radical and structure evidence into character predictions.
///
/// The top-t assignments and top-t structures are cross-checked against the
/// dictionary; structures whose slot count differs from the detected slot
/// count are skipped. A character reachable through several combinations
/// keeps its highest p_c. Results are sorted by p_c, then P_R, then
/// character. An empty result means no known character fits. Detections
/// carrying no structure scores (raw-grid ingests) fall back to a uniform
/// prior over the dictionary's structures.
pub fn crcm(
    dict: &Dictionary,
    result: &DetectionResult,
    config: &ReasonerConfig,
    layouts: Option<&LayoutSet>,
) -> Result<Vec<CharacterPrediction>, ReasonerError> {
    config.validate()?;
    let k = result.slots.len();
    if k == 0 || result.slots.iter().any(Vec::is_empty) {
        return Ok(Vec::new());
    }

    let mut structures: Vec<StructureScore> = if result.structures.is_empty() {
        let kinds = dict.structures();
        let uniform = 1.0 / kinds.len().max(1) as f64;
        kinds
            .keys()
            .map(|kind| StructureScore { label: kind.clone(), conf: uniform })
            .collect()
    } else {
        result.structures.clone()
    };
    structures.sort_by(|a, b| b.conf.total_cmp(&a.conf).then_with(|| a.label.cmp(&b.label)));
    structures.truncate(config.t);

    let assignments = top_assignments(&result.slots, config.t);

    // character -> (p_c, p_r), keeping the maximum
    let mut best: BTreeMap<&str, (f64, f64)> = BTreeMap::new();
    for score in &structures {
        if dict.slot_count(&score.label) != Some(k) {
            continue;
        }
        let order = slot_order(&result.slots, &score.label, layouts);
        for assignment in &assignments {
            let ordered: Vec<RadicalId> =
                order.iter().map(|&i| assignment.labels[i].clone()).collect();
            for character in dict.search(&ordered, &score.label) {
                let p_c = config.theta * assignment.p_r + (1.0 - config.theta) * score.conf;
                let entry = best.entry(character.as_str()).or_insert((f64::MIN, f64::MIN));
                if p_c > entry.0 || (p_c == entry.0 && assignment.p_r > entry.1) {
                    *entry = (p_c, assignment.p_r);
                }
            }
        }
    }

    let mut scored: Vec<(&str, f64, f64)> =
        best.into_iter().map(|(ch, (p_c, p_r))| (ch, p_c, p_r)).collect();
    scored.sort_by(|a, b| {
        b.1.total_cmp(&a.1).then_with(|| b.2.total_cmp(&a.2)).then_with(|| a.0.cmp(b.0))
    });
    Ok(scored
        .into_iter()
        .map(|(character, p_c, _)| CharacterPrediction { character: character.to_string(), p_c })
        .collect())
}

/// Run [`crcm`] over a batch and pair image ids with their predictions,
/// truncated to `top_k`.
pub fn reason_batch(
    dict: &Dictionary,
    results: &[DetectionResult],
    config: &ReasonerConfig,
    layouts: Option<&LayoutSet>,
    top_k: usize,
) -> Result<Vec<RecognitionRecord>, ReasonerError> {
    results
        .iter()
        .map(|result| {
            let mut predictions = crcm(dict, result, config, layouts)?;
            predictions.truncate(top_k);
            Ok(RecognitionRecord { image_id: result.image_id.clone(), predictions })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rid(s: &str) -> RadicalId {
        RadicalId::new(s).unwrap()
    }

    fn kind(s: &str) -> StructureKind {
        StructureKind::new(s).unwrap()
    }

    fn cand(label: &str, conf: f64) -> RadicalCandidate {
        RadicalCandidate { label: rid(label), conf, bbox: BBox::new(0, 0, 1, 1).unwrap() }
    }

    fn cand_at(label: &str, conf: f64, bbox: BBox) -> RadicalCandidate {
        RadicalCandidate { label: rid(label), conf, bbox }
    }

    /// chase = UD(swine, toe); cage = SLR(house, swine); guard = Cross(toe x2, city, toe x2)
    fn toy_dict() -> Dictionary {
        let text = "\
!structure Single 1
!structure UD 2
!structure LR 2
!structure SLR 2
!structure Cross 5
!radical swine
!radical toe
!radical house
!radical city
!radical sun
chase\tUD\tswine,toe
cage\tSLR\thouse,swine
guard\tCross\ttoe,toe,city,toe,toe
bright\tLR\tsun,toe
sun\tSingle\tsun
";
        Dictionary::parse_str(text).unwrap()
    }

    #[test]
    fn mean_confidence_frozen_example() {
        let p = radical_set_confidence(&[0.8, 0.6]);
        assert!((p - 0.7).abs() < 1e-12);
        assert_eq!(radical_set_confidence(&[0.5]), 0.5);
    }

    #[test]
    fn top_assignments_match_exhaustive_enumeration() {
        let slots = vec![
            vec![cand("a", 0.9), cand("b", 0.5), cand("c", 0.1)],
            vec![cand("d", 0.8), cand("e", 0.7), cand("f", 0.2)],
            vec![cand("g", 0.6), cand("h", 0.4), cand("i", 0.3)],
        ];
        // brute force over all 27 combinations
        let mut all: Vec<(Vec<usize>, f64)> = Vec::new();
        for i in 0..3 {
            for j in 0..3 {
                for l in 0..3 {
                    let sum = slots[0][i].conf + slots[1][j].conf + slots[2][l].conf;
                    all.push((vec![i, j, l], sum));
                }
            }
        }
        all.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
        let got = top_assignments(&slots, 5);
        assert_eq!(got.len(), 5);
        for (assignment, expected) in got.iter().zip(&all) {
            let labels: Vec<RadicalId> = expected
                .0
                .iter()
                .enumerate()
                .map(|(s, &i)| slots[s][i].label.clone())
                .collect();
            assert_eq!(assignment.labels, labels);
            assert!((assignment.p_r - expected.1 / 3.0).abs() < 1e-12);
        }
        // asking for more than exist returns them all
        assert_eq!(top_assignments(&slots, 100).len(), 27);
        // and they arrive in nonincreasing order
        let full = top_assignments(&slots, 27);
        for w in full.windows(2) {
            assert!(w[0].p_r >= w[1].p_r);
        }
    }

    #[test]
    fn top_assignments_tie_break_prefers_earlier_slots() {
        let slots = vec![
            vec![cand("a", 0.6), cand("b", 0.4)],
            vec![cand("c", 0.6), cand("d", 0.4)],
        ];
        // sums: (a,c)=1.2, (a,d)=(b,c)=1.0, (b,d)=0.8; the tie resolves to the
        // assignment keeping the better candidate in the earlier slot
        let got = top_assignments(&slots, 4);
        let labels: Vec<Vec<&str>> = got
            .iter()
            .map(|a| a.labels.iter().map(|l| l.as_str()).collect())
            .collect();
        assert_eq!(labels, vec![vec!["a", "c"], vec!["a", "d"], vec!["b", "c"], vec!["b", "d"]]);
    }

    #[test]
    fn top_assignments_empty_slot_yields_nothing() {
        assert!(top_assignments(&[], 5).is_empty());
        assert!(top_assignments(&[vec![cand("a", 0.9)], vec![]], 5).is_empty());
    }

    #[test]
    fn crcm_frozen_chase_example() {
        let dict = toy_dict();
        let result = DetectionResult {
            image_id: "i0".into(),
            slots: vec![
                vec![cand("swine", 0.8), cand("house", 0.1)],
                vec![cand("toe", 0.7), cand("city", 0.2)],
            ],
            structures: vec![
                StructureScore { label: kind("UD"), conf: 0.8 },
                StructureScore { label: kind("LR"), conf: 0.2 },
            ],
        };
        let config = ReasonerConfig::default();
        let predictions = crcm(&dict, &result, &config, None).unwrap();
        assert_eq!(predictions.len(), 1);
        assert_eq!(predictions[0].character, "chase");
        // P_R = (0.8 + 0.7) / 2 = 0.75, P_S = 0.8
        // p_c = 0.7 * 0.75 + 0.3 * 0.8 = 0.765
        assert!((predictions[0].p_c - 0.765).abs() < 1e-12, "{}", predictions[0].p_c);
    }

    #[test]
    fn crcm_recovers_from_wrong_top_one() {
        // the top-1 radical in slot 0 is wrong (house); no dictionary entry
        // matches it under either structure, while the rank-2 candidate forms
        // chase = UD(swine, toe)
        let dict = toy_dict();
        let result = DetectionResult {
            image_id: "i1".into(),
            slots: vec![
                vec![cand("house", 0.6), cand("swine", 0.5)],
                vec![cand("toe", 0.9), cand("city", 0.1)],
            ],
            structures: vec![
                StructureScore { label: kind("UD"), conf: 0.7 },
                StructureScore { label: kind("SLR"), conf: 0.3 },
            ],
        };
        let predictions = crcm(&dict, &result, &ReasonerConfig::default(), None).unwrap();
        assert_eq!(predictions[0].character, "chase");
        // P_R = (0.5 + 0.9) / 2 = 0.7, p_c = 0.7*0.7 + 0.3*0.7 = 0.7
        assert!((predictions[0].p_c - 0.7).abs() < 1e-12);
    }

    #[test]
    fn crcm_zero_shot_rejection_is_empty() {
        let dict = toy_dict();
        let result = DetectionResult {
            image_id: "i2".into(),
            slots: vec![vec![cand("sun", 0.9)], vec![cand("sun", 0.9)]],
            structures: vec![StructureScore { label: kind("UD"), conf: 1.0 }],
        };
        let predictions = crcm(&dict, &result, &ReasonerConfig::default(), None).unwrap();
        assert!(predictions.is_empty());
        // no slots at all also rejects
        let empty = DetectionResult { image_id: "i3".into(), slots: vec![], structures: vec![] };
        assert!(crcm(&dict, &empty, &ReasonerConfig::default(), None).unwrap().is_empty());
    }

    #[test]
    fn crcm_skips_arity_mismatched_structures() {
        let dict = toy_dict();
        // two slots, but the only offered structure needs five
        let result = DetectionResult {
            image_id: "i4".into(),
            slots: vec![vec![cand("toe", 0.9)], vec![cand("toe", 0.9)]],
            structures: vec![StructureScore { label: kind("Cross"), conf: 1.0 }],
        };
        let predictions = crcm(&dict, &result, &ReasonerConfig::default(), None).unwrap();
        assert!(predictions.is_empty());
    }

    #[test]
    fn crcm_theta_endpoints() {
        let dict = toy_dict();
        let result = DetectionResult {
            image_id: "i5".into(),
            slots: vec![vec![cand("swine", 0.9)], vec![cand("toe", 0.6)]],
            structures: vec![StructureScore { label: kind("UD"), conf: 0.4 }],
        };
        let radical_only =
            crcm(&dict, &result, &ReasonerConfig { t: 5, theta: 1.0 }, None).unwrap();
        assert!((radical_only[0].p_c - 0.75).abs() < 1e-12);
        let structure_only =
            crcm(&dict, &result, &ReasonerConfig { t: 5, theta: 0.0 }, None).unwrap();
        assert!((structure_only[0].p_c - 0.4).abs() < 1e-12);
    }

    #[test]
    fn crcm_duplicate_character_keeps_max() {
        let dict = toy_dict();
        // slot 0 lists swine twice at different confidences (as an ingested
        // stream may); chase is reachable through both, the higher p_c wins
        let result = DetectionResult {
            image_id: "i6".into(),
            slots: vec![
                vec![cand("swine", 0.9), cand("swine", 0.3)],
                vec![cand("toe", 0.8)],
            ],
            structures: vec![StructureScore { label: kind("UD"), conf: 1.0 }],
        };
        let predictions = crcm(&dict, &result, &ReasonerConfig::default(), None).unwrap();
        assert_eq!(predictions.len(), 1);
        // best path: P_R = 0.85, p_c = 0.7*0.85 + 0.3*1.0 = 0.895
        assert!((predictions[0].p_c - 0.895).abs() < 1e-12);
    }

    #[test]
    fn crcm_orders_slots_by_reading_order_without_layouts() {
        let dict = toy_dict();
        // detection lists the bottom slot first; reading order must flip them
        // so the dictionary sees (swine, toe)
        let result = DetectionResult {
            image_id: "i7".into(),
            slots: vec![
                vec![cand_at("toe", 0.9, BBox::new(10, 140, 240, 250).unwrap())],
                vec![cand_at("swine", 0.8, BBox::new(10, 5, 240, 120).unwrap())],
            ],
            structures: vec![StructureScore { label: kind("UD"), conf: 1.0 }],
        };
        let predictions = crcm(&dict, &result, &ReasonerConfig::default(), None).unwrap();
        assert_eq!(predictions.len(), 1);
        assert_eq!(predictions[0].character, "chase");
    }

    #[test]
    fn crcm_aligns_slots_against_layout_centers() {
        let dict = toy_dict();
        let layouts = LayoutSet::standard();
        // same flipped detection order, matched through the UD layout
        let result = DetectionResult {
            image_id: "i8".into(),
            slots: vec![
                vec![cand_at("toe", 0.9, BBox::new(10, 140, 240, 250).unwrap())],
                vec![cand_at("swine", 0.8, BBox::new(10, 5, 240, 120).unwrap())],
            ],
            structures: vec![StructureScore { label: kind("UD"), conf: 1.0 }],
        };
        let predictions = crcm(&dict, &result, &ReasonerConfig::default(), Some(&layouts)).unwrap();
        assert_eq!(predictions.len(), 1);
        assert_eq!(predictions[0].character, "chase");
        // five-slot case: guard's cross layout, detections shuffled
        let std = LayoutSet::standard();
        let cross = std.get(&kind("Cross")).unwrap();
        let canvas = std.canvas();
        let mut slots: Vec<Vec<RadicalCandidate>> = cross
            .slots
            .iter()
            .map(|rect| {
                let px = rect.to_pixels(canvas.0, canvas.1);
                vec![cand_at("toe", 0.9, px)]
            })
            .collect();
        slots[2] = vec![cand_at("city", 0.9, cross.slots[2].to_pixels(canvas.0, canvas.1))];
        slots.swap(0, 4);
        slots.swap(1, 3);
        let result = DetectionResult {
            image_id: "i9".into(),
            slots,
            structures: vec![StructureScore { label: kind("Cross"), conf: 1.0 }],
        };
        let predictions = crcm(&dict, &result, &ReasonerConfig::default(), Some(&layouts)).unwrap();
        assert_eq!(predictions.len(), 1);
        assert_eq!(predictions[0].character, "guard");
    }

    #[test]
    fn crcm_uniform_structure_prior_when_absent() {
        let dict = toy_dict();
        // raw-grid ingests carry no structure scores; chase should still be
        // found via the uniform prior over the dictionary's five structures
        let result = DetectionResult {
            image_id: "i10".into(),
            slots: vec![vec![cand("swine", 0.8)], vec![cand("toe", 0.6)]],
            structures: vec![],
        };
        let predictions = crcm(&dict, &result, &ReasonerConfig::default(), None).unwrap();
        assert_eq!(predictions[0].character, "chase");
        // P_R = 0.7, P_S = 1/5
        assert!((predictions[0].p_c - (0.7 * 0.7 + 0.3 * 0.2)).abs() < 1e-12);
    }

    #[test]
    fn crcm_prediction_ordering_and_truncation() {
        let dict = toy_dict();
        // both chase (UD) and bright (LR) reachable, different structures
        let result = DetectionResult {
            image_id: "i11".into(),
            slots: vec![
                vec![cand("swine", 0.6), cand("sun", 0.6)],
                vec![cand("toe", 0.8)],
            ],
            structures: vec![
                StructureScore { label: kind("UD"), conf: 0.9 },
                StructureScore { label: kind("LR"), conf: 0.1 },
            ],
        };
        let predictions = crcm(&dict, &result, &ReasonerConfig::default(), None).unwrap();
        assert_eq!(predictions.len(), 2);
        // equal P_R = 0.7; UD has higher P_S, so chase outranks bright
        assert_eq!(predictions[0].character, "chase");
        assert_eq!(predictions[1].character, "bright");
        let records = reason_batch(&dict, &[result], &ReasonerConfig::default(), None, 1).unwrap();
        assert_eq!(records[0].predictions.len(), 1);
    }

    #[test]
    fn invalid_configs_are_rejected() {
        assert!(ReasonerConfig { t: 0, theta: 0.5 }.validate().is_err());
        assert!(ReasonerConfig { t: 1, theta: 1.5 }.validate().is_err());
        assert!(ReasonerConfig { t: 1, theta: f64::NAN }.validate().is_err());
        assert!(ReasonerConfig::default().validate().is_ok());
    }

    #[test]
    fn recognition_records_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("recog.jsonl");
        let records = vec![
            RecognitionRecord {
                image_id: "a".into(),
                predictions: vec![CharacterPrediction { character: "chase".into(), p_c: 0.765 }],
            },
            RecognitionRecord { image_id: "b".into(), predictions: vec![] },
        ];
        write_recognitions(&path, &records).unwrap();
        assert_eq!(read_recognitions(&path).unwrap(), records);
    }
}
