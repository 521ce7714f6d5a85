//! Independent reference implementations used by the integration suites.
//!
//! Each oracle recomputes a quantity from its definition by a different route
//! than the library takes (per-category tallies instead of pairwise scans,
//! exhaustive enumeration instead of heaps, pixel counting instead of
//! interval arithmetic), so agreement between the two is meaningful evidence
//! rather than the same code run twice.

#![allow(dead_code)]

use std::collections::BTreeMap;

use radglyph::detection::{DetectionResult, RadicalCandidate};
use radglyph::dictionary::{Dictionary, StructureKind};
use radglyph::evaluation::{DetectionEvalRecord, RankedSample};
use radglyph::reasoner::CharacterPrediction;
use radglyph::{BBox, RadicalId};

/// Nominal Krippendorff alpha from per-item category tallies.
///
/// Instead of comparing value pairs directly, each item's disagreeing
/// ordered-pair count is derived as `m(m-1) - sum_c n_c(n_c-1)`. The final
/// arithmetic (size-grouped fold, then the closed form) mirrors the
/// definition so exact f64 comparison is possible. Returns `None` when no
/// item holds two or more values.
pub fn alpha_oracle<S: AsRef<str>>(items: &[Vec<S>]) -> Option<f64> {
    let mut category_counts: BTreeMap<&str, u64> = BTreeMap::new();
    let mut disagreements_by_size: BTreeMap<usize, u64> = BTreeMap::new();
    let mut pairable = false;
    for item in items {
        let m = item.len() as u64;
        if m < 2 {
            continue;
        }
        pairable = true;
        let mut local: BTreeMap<&str, u64> = BTreeMap::new();
        for v in item {
            *local.entry(v.as_ref()).or_insert(0) += 1;
        }
        let agreeing: u64 = local.values().map(|&c| c * (c - 1)).sum();
        let disagreeing = m * (m - 1) - agreeing;
        for (cat, count) in local {
            *category_counts.entry(cat).or_insert(0) += count;
        }
        if disagreeing > 0 {
            *disagreements_by_size.entry(m as usize).or_insert(0) += disagreeing;
        }
    }
    if !pairable {
        return None;
    }
    let n: u64 = category_counts.values().sum();
    let sum_sq: u64 = category_counts.values().map(|&c| c * c).sum();
    let expected_pairs = (n * n - sum_sq) as f64;
    let observed: f64 = disagreements_by_size
        .iter()
        .map(|(&m, &d)| d as f64 / (m - 1) as f64)
        .sum();
    if expected_pairs == 0.0 {
        return Some(1.0);
    }
    Some(1.0 - (n - 1) as f64 * observed / expected_pairs)
}

/// Top-k accuracy straight from the definition.
pub fn top_k_oracle(samples: &[RankedSample], k: usize) -> f64 {
    let hits = samples
        .iter()
        .filter(|s| s.ranked.iter().take(k).any(|c| *c == s.truth))
        .count();
    hits as f64 / samples.len() as f64
}

/// Macro-averaged top-1 accuracy straight from the definition.
pub fn cat_avg_oracle(samples: &[RankedSample]) -> f64 {
    let mut per_cat: BTreeMap<&str, (u64, u64)> = BTreeMap::new();
    for s in samples {
        let e = per_cat.entry(s.truth.as_str()).or_insert((0, 0));
        e.1 += 1;
        if s.ranked.first() == Some(&s.truth) {
            e.0 += 1;
        }
    }
    let mut sum = 0.0;
    for &(hit, total) in per_cat.values() {
        sum += hit as f64 / total as f64;
    }
    sum / per_cat.len() as f64
}

/// IoU by counting lattice cells, one by one.
pub fn iou_pixel_oracle(a: &BBox, b: &BBox) -> f64 {
    let x_hi = a.x2.max(b.x2);
    let y_hi = a.y2.max(b.y2);
    let inside = |bx: &BBox, x: u32, y: u32| x >= bx.x1 && x < bx.x2 && y >= bx.y1 && y < bx.y2;
    let mut inter = 0u64;
    let mut union = 0u64;
    for y in 0..y_hi {
        for x in 0..x_hi {
            let ia = inside(a, x, y);
            let ib = inside(b, x, y);
            if ia && ib {
                inter += 1;
            }
            if ia || ib {
                union += 1;
            }
        }
    }
    if union == 0 {
        return 0.0;
    }
    inter as f64 / union as f64
}

/// Mean average precision at IoU 0.5 recomputed from the definition.
///
/// Greedy matching walks per-image ground truth with its own bookkeeping, and
/// the interpolated precision at each rank is found by a direct O(n^2) scan
/// over later ranks rather than a backward envelope pass.
pub fn ap50_oracle(records: &[DetectionEvalRecord]) -> (f64, BTreeMap<String, f64>) {
    let mut categories: Vec<&str> = Vec::new();
    for rec in records {
        for gt in &rec.ground_truth {
            if !categories.contains(&gt.label.as_str()) {
                categories.push(gt.label.as_str());
            }
        }
    }
    categories.sort_unstable();

    let mut per_category = BTreeMap::new();
    for cat in categories {
        let total_gt: usize = records
            .iter()
            .map(|r| r.ground_truth.iter().filter(|g| g.label == cat).count())
            .sum();

        // rank predictions of this category with the documented total order
        let mut ranked: Vec<(usize, usize)> = Vec::new();
        for (img, rec) in records.iter().enumerate() {
            for (p, pred) in rec.predictions.iter().enumerate() {
                if pred.label == cat {
                    ranked.push((img, p));
                }
            }
        }
        ranked.sort_by(|&(ia, pa), &(ib, pb)| {
            let a = &records[ia].predictions[pa];
            let b = &records[ib].predictions[pb];
            b.conf
                .total_cmp(&a.conf)
                .then_with(|| records[ia].image_id.cmp(&records[ib].image_id))
                .then_with(|| {
                    (a.bbox.y1, a.bbox.x1, a.bbox.y2, a.bbox.x2).cmp(&(
                        b.bbox.y1, b.bbox.x1, b.bbox.y2, b.bbox.x2,
                    ))
                })
                .then_with(|| ia.cmp(&ib))
                .then_with(|| pa.cmp(&pb))
        });

        let mut taken: Vec<Vec<bool>> =
            records.iter().map(|r| vec![false; r.ground_truth.len()]).collect();
        let mut tp_flags = Vec::with_capacity(ranked.len());
        for &(img, p) in &ranked {
            let pred = &records[img].predictions[p];
            let mut best_g = None;
            let mut best_iou = -1.0f64;
            for (g, gt) in records[img].ground_truth.iter().enumerate() {
                if gt.label != cat || taken[img][g] {
                    continue;
                }
                let iou = pred.bbox.iou(&gt.bbox);
                if iou > best_iou {
                    best_iou = iou;
                    best_g = Some(g);
                }
            }
            if let Some(g) = best_g {
                if best_iou >= 0.5 {
                    taken[img][g] = true;
                    tp_flags.push(true);
                    continue;
                }
            }
            tp_flags.push(false);
        }

        let mut precisions = Vec::with_capacity(tp_flags.len());
        let mut recalls = Vec::with_capacity(tp_flags.len());
        let mut tp = 0usize;
        for (i, &is_tp) in tp_flags.iter().enumerate() {
            if is_tp {
                tp += 1;
            }
            precisions.push(tp as f64 / (i + 1) as f64);
            recalls.push(tp as f64 / total_gt as f64);
        }
        let interp = |i: usize| -> f64 {
            let mut best = precisions[i];
            for &p in &precisions[i + 1..] {
                if p > best {
                    best = p;
                }
            }
            best
        };
        let mut ap = 0.0;
        let mut prev_recall = 0.0;
        for i in 0..recalls.len() {
            if recalls[i] > prev_recall {
                ap += (recalls[i] - prev_recall) * interp(i);
                prev_recall = recalls[i];
            }
        }
        per_category.insert(cat.to_string(), ap);
    }

    let mean = per_category.values().sum::<f64>() / per_category.len() as f64;
    (mean, per_category)
}

/// One decoded anchor of a raw prediction grid.
#[derive(Debug, Clone, PartialEq)]
pub struct OracleDetection {
    pub bbox: BBox,
    pub class: usize,
    pub objectness: f64,
    pub scores: Vec<f64>,
}

/// Decode a raw grid and suppress duplicates with an explicit pairwise
/// suppression matrix instead of an online scan.
///
/// Every anchor above the objectness threshold is decoded; the full
/// same-class IoU >= 0.5 matrix is materialized; survivors are the
/// detections not suppressed by any higher-ranked survivor, found by walking
/// the rank order over the precomputed matrix.
pub fn decode_grid_oracle(
    k: usize,
    m: usize,
    n_r: usize,
    grid: &[f64],
    image_size: [u32; 2],
) -> Vec<OracleDetection> {
    let stride = n_r + 5;
    assert_eq!(grid.len(), k * k * m * stride, "grid size mismatch");
    let [width, height] = image_size;
    let cell_w = width as f64 / k as f64;
    let cell_h = height as f64 / k as f64;

    let mut decoded = Vec::new();
    for row in 0..k {
        for col in 0..k {
            for anchor in 0..m {
                let base = (((row * k) + col) * m + anchor) * stride;
                let scores = grid[base..base + n_r].to_vec();
                let x = grid[base + n_r];
                let y = grid[base + n_r + 1];
                let w = grid[base + n_r + 2];
                let h = grid[base + n_r + 3];
                let objectness = grid[base + n_r + 4];
                if objectness < 0.5 {
                    continue;
                }
                let cx = (col as f64 + x) * cell_w;
                let cy = (row as f64 + y) * cell_h;
                let clamp =
                    |v: f64, hi: u32| -> u32 { (v.round().max(0.0) as u64).min(hi as u64) as u32 };
                let x1 = clamp(cx - w * cell_w / 2.0, width);
                let x2 = clamp(cx + w * cell_w / 2.0, width);
                let y1 = clamp(cy - h * cell_h / 2.0, height);
                let y2 = clamp(cy + h * cell_h / 2.0, height);
                if x2 <= x1 || y2 <= y1 {
                    continue;
                }
                let mut class = 0usize;
                for c in 1..n_r {
                    if scores[c] > scores[class] {
                        class = c;
                    }
                }
                decoded.push(OracleDetection {
                    bbox: BBox::new(x1, y1, x2, y2).unwrap(),
                    class,
                    objectness,
                    scores,
                });
            }
        }
    }

    // rank order: objectness desc, then box reading order, then class
    let key = |d: &OracleDetection| (d.bbox.y1, d.bbox.x1, d.bbox.y2, d.bbox.x2, d.class);
    let mut order: Vec<usize> = (0..decoded.len()).collect();
    order.sort_by(|&a, &b| {
        decoded[b]
            .objectness
            .total_cmp(&decoded[a].objectness)
            .then_with(|| key(&decoded[a]).cmp(&key(&decoded[b])))
    });

    // full pairwise suppression matrix
    let n = decoded.len();
    let mut suppresses = vec![vec![false; n]; n];
    for i in 0..n {
        for j in 0..n {
            if i != j
                && decoded[i].class == decoded[j].class
                && decoded[i].bbox.iou(&decoded[j].bbox) >= 0.5
            {
                suppresses[i][j] = true;
            }
        }
    }
    let mut kept: Vec<usize> = Vec::new();
    for &idx in &order {
        if !kept.iter().any(|&s| suppresses[s][idx]) {
            kept.push(idx);
        }
    }
    kept.sort_by_key(|&i| key(&decoded[i]));
    kept.into_iter().map(|i| decoded[i].clone()).collect()
}

/// Expand oracle detections into the public prediction shape: one slot per
/// surviving box in reading order, candidates scored objectness x class
/// score, sorted and capped.
pub fn oracle_result(
    image_id: &str,
    kept: &[OracleDetection],
    labels: &[&str],
    cap: usize,
) -> DetectionResult {
    let slots = kept
        .iter()
        .map(|det| {
            let mut candidates: Vec<RadicalCandidate> = det
                .scores
                .iter()
                .enumerate()
                .map(|(class, &score)| RadicalCandidate {
                    label: RadicalId::new(labels[class]).unwrap(),
                    conf: det.objectness * score,
                    bbox: det.bbox,
                })
                .collect();
            candidates
                .sort_by(|a, b| b.conf.total_cmp(&a.conf).then_with(|| a.label.cmp(&b.label)));
            candidates.truncate(cap);
            candidates
        })
        .collect();
    DetectionResult { image_id: image_id.to_string(), slots, structures: Vec::new() }
}

/// Exhaustive dictionary matcher: enumerates every radical assignment (no
/// heap, no lattice walk), keeps the top-t by mean confidence, crosses them
/// with the top-t structures, and scores matches exactly as defined.
pub fn crcm_oracle(
    dict: &Dictionary,
    result: &DetectionResult,
    t: usize,
    theta: f64,
) -> Vec<CharacterPrediction> {
    let k = result.slots.len();
    if k == 0 || result.slots.iter().any(Vec::is_empty) {
        return Vec::new();
    }

    // every assignment, depth-first
    let mut ranks = vec![0usize; k];
    let mut all: Vec<(Vec<usize>, f64)> = Vec::new();
    loop {
        let sum: f64 = ranks.iter().enumerate().map(|(s, &r)| result.slots[s][r].conf).sum();
        all.push((ranks.clone(), sum));
        let mut slot = k;
        loop {
            if slot == 0 {
                break;
            }
            slot -= 1;
            ranks[slot] += 1;
            if ranks[slot] < result.slots[slot].len() {
                break;
            }
            ranks[slot] = 0;
        }
        if ranks.iter().all(|&r| r == 0) {
            break;
        }
    }
    all.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    all.truncate(t);

    let mut structures: Vec<(StructureKind, f64)> = if result.structures.is_empty() {
        let kinds = dict.structures();
        let uniform = 1.0 / kinds.len().max(1) as f64;
        kinds.keys().map(|kind| (kind.clone(), uniform)).collect()
    } else {
        result.structures.iter().map(|s| (s.label.clone(), s.conf)).collect()
    };
    structures.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    structures.truncate(t);

    // reading-order slot canonicalization (the suites that use this oracle
    // pass no layout set, so the library takes the same fallback)
    let boxes: Vec<BBox> = result.slots.iter().map(|s| s[0].bbox).collect();
    let mut order: Vec<usize> = (0..k).collect();
    if k > 1 {
        order.sort_by_key(|&i| (boxes[i].y1, boxes[i].x1, boxes[i].y2, boxes[i].x2, i));
    }

    let mut best: BTreeMap<String, (f64, f64)> = BTreeMap::new();
    for (kind, s_conf) in &structures {
        if dict.slot_count(kind) != Some(k) {
            continue;
        }
        for (ranks, sum) in &all {
            let p_r = sum / k as f64;
            let labels: Vec<RadicalId> = order
                .iter()
                .map(|&i| result.slots[i][ranks[i]].label.clone())
                .collect();
            for character in dict.search(&labels, kind) {
                let p_c = theta * p_r + (1.0 - theta) * s_conf;
                let entry = best.entry(character.clone()).or_insert((f64::MIN, f64::MIN));
                if p_c > entry.0 || (p_c == entry.0 && p_r > entry.1) {
                    *entry = (p_c, p_r);
                }
            }
        }
    }

    let mut scored: Vec<(String, f64, f64)> =
        best.into_iter().map(|(ch, (p_c, p_r))| (ch, p_c, p_r)).collect();
    scored.sort_by(|a, b| {
        b.1.total_cmp(&a.1).then_with(|| b.2.total_cmp(&a.2)).then_with(|| a.0.cmp(&b.0))
    });
    scored
        .into_iter()
        .map(|(character, p_c, _)| CharacterPrediction { character, p_c })
        .collect()
}
