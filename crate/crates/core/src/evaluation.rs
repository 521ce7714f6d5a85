//! Recognition and detection metrics.
//!
//! Covers ranked character metrics (top-k accuracy and the macro category
//! average), detection quality (AP at IoU 0.5 with all-point interpolation),
//! and the deterministic seen/unseen dictionary split used for zero-shot
//! evaluation.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dictionary::Dictionary;
use crate::glyph::BBox;
use crate::reasoner::RecognitionRecord;

/// Predictions overlapping ground truth at or above this IoU count as hits.
pub const AP_IOU: f64 = 0.5;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("no samples to evaluate")]
    EmptyInput,
    #[error("k must be at least 1")]
    BadK,
    #[error("split needs {n} seen + {m} unseen but the dictionary has {total} characters")]
    SplitTooLarge { n: usize, m: usize, total: usize },
    #[error("split parts must be non-empty")]
    EmptySplit,
    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

/// Ground-truth character for one image.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TruthRecord {
    pub image_id: String,
    pub character: String,
}

/// One evaluation sample: the true character and the ranked predictions.
#[derive(Debug, Clone, PartialEq)]
pub struct RankedSample {
    pub truth: String,
    pub ranked: Vec<String>,
}

/// Pair recognition output with truth records, one sample per truth record.
/// Images the recognizer never emitted (or rejected) get an empty ranking,
/// which every metric counts as a miss.
pub fn join_samples(truths: &[TruthRecord], recognitions: &[RecognitionRecord]) -> Vec<RankedSample> {
    let by_id: BTreeMap<&str, &RecognitionRecord> =
        recognitions.iter().map(|r| (r.image_id.as_str(), r)).collect();
    truths
        .iter()
        .map(|t| RankedSample {
            truth: t.character.clone(),
            ranked: by_id
                .get(t.image_id.as_str())
                .map(|r| r.predictions.iter().map(|p| p.character.clone()).collect())
                .unwrap_or_default(),
        })
        .collect()
}

/// Fraction of samples whose truth appears in the first k predictions.
pub fn top_k_accuracy(samples: &[RankedSample], k: usize) -> Result<f64, EvalError> {
    if k == 0 {
        return Err(EvalError::BadK);
    }
    if samples.is_empty() {
        return Err(EvalError::EmptyInput);
    }
    let hits = samples
        .iter()
        .filter(|s| s.ranked.iter().take(k).any(|p| *p == s.truth))
        .count();
    Ok(hits as f64 / samples.len() as f64)
}

/// Macro-averaged top-1 accuracy: per-category accuracy first, then the
/// unweighted mean over categories, so rare characters count as much as
/// frequent ones.
pub fn cat_avg(samples: &[RankedSample]) -> Result<f64, EvalError> {
    if samples.is_empty() {
        return Err(EvalError::EmptyInput);
    }
    let mut per_cat: BTreeMap<&str, (usize, usize)> = BTreeMap::new();
    for s in samples {
        let entry = per_cat.entry(s.truth.as_str()).or_insert((0, 0));
        entry.1 += 1;
        if s.ranked.first() == Some(&s.truth) {
            entry.0 += 1;
        }
    }
    let sum: f64 = per_cat.values().map(|&(hit, total)| hit as f64 / total as f64).sum();
    Ok(sum / per_cat.len() as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruthBox {
    pub label: String,
    #[serde(rename = "box")]
    pub bbox: BBox,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictedBox {
    pub label: String,
    pub conf: f64,
    #[serde(rename = "box")]
    pub bbox: BBox,
}

/// Detection evaluation input for one image.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectionEvalRecord {
    pub image_id: String,
    pub ground_truth: Vec<GroundTruthBox>,
    pub predictions: Vec<PredictedBox>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Ap50Report {
    pub mean: f64,
    pub per_category: BTreeMap<String, f64>,
}

/// Average precision at IoU 0.5, all-point interpolation, averaged over the
/// categories that have at least one ground-truth box.
///
/// Predictions are ranked by confidence (ties broken by image, box, and input
/// order, so the result never depends on record order). Each prediction
/// greedily matches the still-unmatched ground-truth box of its label in its
/// image with the highest IoU; a match at IoU >= 0.5 is a true positive,
/// anything else a false positive. AP is the area under the
/// monotone-envelope precision-recall curve.
pub fn ap50(records: &[DetectionEvalRecord]) -> Result<Ap50Report, EvalError> {
    // ground truth per category: (image index, gt index within image)
    let mut gt_by_cat: BTreeMap<&str, Vec<(usize, usize)>> = BTreeMap::new();
    for (img, rec) in records.iter().enumerate() {
        for (g, gt) in rec.ground_truth.iter().enumerate() {
            gt_by_cat.entry(gt.label.as_str()).or_default().push((img, g));
        }
    }
    if gt_by_cat.is_empty() {
        return Err(EvalError::EmptyInput);
    }

    let mut per_category = BTreeMap::new();
    for (cat, gts) in &gt_by_cat {
        let mut preds: Vec<(usize, usize)> = Vec::new();
        for (img, rec) in records.iter().enumerate() {
            for (p, pred) in rec.predictions.iter().enumerate() {
                if pred.label == *cat {
                    preds.push((img, p));
                }
            }
        }
        preds.sort_by(|&(ia, pa), &(ib, pb)| {
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

        let total_gt = gts.len();
        let mut matched: BTreeMap<(usize, usize), bool> =
            gts.iter().map(|&key| (key, false)).collect();
        let mut tp_flags = Vec::with_capacity(preds.len());
        for &(img, p) in &preds {
            let pred = &records[img].predictions[p];
            let mut best: Option<((usize, usize), f64)> = None;
            for (g, gt) in records[img].ground_truth.iter().enumerate() {
                if gt.label != *cat || matched[&(img, g)] {
                    continue;
                }
                let iou = pred.bbox.iou(&gt.bbox);
                if best.map_or(true, |(_, b)| iou > b) {
                    best = Some(((img, g), iou));
                }
            }
            match best {
                Some((key, iou)) if iou >= AP_IOU => {
                    matched.insert(key, true);
                    tp_flags.push(true);
                }
                _ => tp_flags.push(false),
            }
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
        // monotone precision envelope, then area under the recall steps
        for i in (0..precisions.len().saturating_sub(1)).rev() {
            if precisions[i] < precisions[i + 1] {
                precisions[i] = precisions[i + 1];
            }
        }
        let mut ap = 0.0;
        let mut prev_recall = 0.0;
        for (p, r) in precisions.iter().zip(&recalls) {
            if *r > prev_recall {
                ap += (r - prev_recall) * p;
                prev_recall = *r;
            }
        }
        per_category.insert(cat.to_string(), ap);
    }

    let mean = per_category.values().sum::<f64>() / per_category.len() as f64;
    Ok(Ap50Report { mean, per_category })
}

/// Deterministic zero-shot split: the first `n_seen` dictionary characters
/// (in file order) are the seen set, the last `m_unseen` the unseen set.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub n_seen: usize,
    pub m_unseen: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ZeroShotSplit {
    pub seen: Vec<String>,
    pub unseen: Vec<String>,
}

pub fn make_zero_shot_split(dict: &Dictionary, spec: SplitSpec) -> Result<ZeroShotSplit, EvalError> {
    let total = dict.entries().len();
    if spec.n_seen == 0 || spec.m_unseen == 0 {
        return Err(EvalError::EmptySplit);
    }
    if spec.n_seen + spec.m_unseen > total {
        return Err(EvalError::SplitTooLarge { n: spec.n_seen, m: spec.m_unseen, total });
    }
    let characters: Vec<String> =
        dict.entries().iter().map(|e| e.character.clone()).collect();
    Ok(ZeroShotSplit {
        seen: characters[..spec.n_seen].to_vec(),
        unseen: characters[total - spec.m_unseen..].to_vec(),
    })
}

pub fn read_truth(path: impl AsRef<Path>) -> Result<Vec<TruthRecord>, EvalError> {
    read_jsonl(path)
}

pub fn write_truth(path: impl AsRef<Path>, records: &[TruthRecord]) -> Result<(), EvalError> {
    write_jsonl(path, records)
}

pub fn read_detection_eval(
    path: impl AsRef<Path>,
) -> Result<Vec<DetectionEvalRecord>, EvalError> {
    read_jsonl(path)
}

pub fn write_detection_eval(
    path: impl AsRef<Path>,
    records: &[DetectionEvalRecord],
) -> Result<(), EvalError> {
    write_jsonl(path, records)
}

fn read_jsonl<T: serde::de::DeserializeOwned>(path: impl AsRef<Path>) -> Result<Vec<T>, EvalError> {
    let text = std::fs::read_to_string(path)?;
    let mut out = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let rec: T = serde_json::from_str(line)
            .map_err(|e| EvalError::Parse { line: idx + 1, message: e.to_string() })?;
        out.push(rec);
    }
    Ok(out)
}

fn write_jsonl<T: Serialize>(path: impl AsRef<Path>, records: &[T]) -> Result<(), EvalError> {
    let mut text = String::new();
    for rec in records {
        text.push_str(&serde_json::to_string(rec).expect("record serializes"));
        text.push('\n');
    }
    std::fs::write(path, text)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample(truth: &str, ranked: &[&str]) -> RankedSample {
        RankedSample {
            truth: truth.to_string(),
            ranked: ranked.iter().map(|s| s.to_string()).collect(),
        }
    }

    fn bx(x1: u32, y1: u32, x2: u32, y2: u32) -> BBox {
        BBox::new(x1, y1, x2, y2).unwrap()
    }

    #[test]
    fn top_k_counts_hits_within_k() {
        let samples = vec![
            sample("a", &["a", "b"]),
            sample("b", &["a", "b"]),
            sample("c", &["a", "b"]),
            sample("d", &[]),
        ];
        assert_eq!(top_k_accuracy(&samples, 1).unwrap(), 0.25);
        assert_eq!(top_k_accuracy(&samples, 2).unwrap(), 0.5);
        // k beyond the list length changes nothing
        assert_eq!(top_k_accuracy(&samples, 10).unwrap(), 0.5);
        assert!(matches!(top_k_accuracy(&samples, 0), Err(EvalError::BadK)));
        assert!(matches!(top_k_accuracy(&[], 1), Err(EvalError::EmptyInput)));
    }

    #[test]
    fn cat_avg_weights_categories_equally() {
        // category a: 1/3 correct; category b: 1/1 correct
        // micro accuracy would be 2/4; macro is (1/3 + 1) / 2 = 2/3
        let samples = vec![
            sample("a", &["a"]),
            sample("a", &["b"]),
            sample("a", &["b"]),
            sample("b", &["b"]),
        ];
        let got = cat_avg(&samples).unwrap();
        assert!((got - 2.0 / 3.0).abs() < 1e-12);
        assert!(matches!(cat_avg(&[]), Err(EvalError::EmptyInput)));
    }

    #[test]
    fn join_samples_marks_missing_and_rejected_images() {
        let truths = vec![
            TruthRecord { image_id: "i0".into(), character: "a".into() },
            TruthRecord { image_id: "i1".into(), character: "b".into() },
        ];
        let recog = vec![RecognitionRecord {
            image_id: "i0".into(),
            predictions: vec![crate::reasoner::CharacterPrediction {
                character: "a".into(),
                p_c: 0.9,
            }],
        }];
        let samples = join_samples(&truths, &recog);
        assert_eq!(samples[0].ranked, vec!["a"]);
        assert!(samples[1].ranked.is_empty());
        assert_eq!(top_k_accuracy(&samples, 1).unwrap(), 0.5);
    }

    #[test]
    fn ap50_perfect_single_detection_is_one() {
        let records = vec![DetectionEvalRecord {
            image_id: "i0".into(),
            ground_truth: vec![GroundTruthBox { label: "r".into(), bbox: bx(10, 10, 50, 50) }],
            predictions: vec![PredictedBox {
                label: "r".into(),
                conf: 0.9,
                bbox: bx(10, 10, 50, 50),
            }],
        }];
        let report = ap50(&records).unwrap();
        assert_eq!(report.mean, 1.0);
        assert_eq!(report.per_category["r"], 1.0);
    }

    #[test]
    fn ap50_miss_then_hit_is_half() {
        // the confident prediction misses, the weak one hits:
        // ranked flags [FP, TP] -> precision [0, 1/2], recall [0, 1] -> AP 0.5
        let records = vec![DetectionEvalRecord {
            image_id: "i0".into(),
            ground_truth: vec![GroundTruthBox { label: "r".into(), bbox: bx(0, 0, 10, 10) }],
            predictions: vec![
                PredictedBox { label: "r".into(), conf: 0.9, bbox: bx(50, 50, 60, 60) },
                PredictedBox { label: "r".into(), conf: 0.4, bbox: bx(0, 0, 10, 10) },
            ],
        }];
        let report = ap50(&records).unwrap();
        assert_eq!(report.mean, 0.5);
    }

    #[test]
    fn ap50_envelope_hand_case() {
        // flags [TP, FP, TP] over 2 ground truths:
        // precision [1, 1/2, 2/3], recall [1/2, 1/2, 1]
        // envelope [1, 2/3, 2/3]; AP = 0.5 * 1 + 0.5 * 2/3 = 5/6
        let records = vec![DetectionEvalRecord {
            image_id: "i0".into(),
            ground_truth: vec![
                GroundTruthBox { label: "r".into(), bbox: bx(0, 0, 10, 10) },
                GroundTruthBox { label: "r".into(), bbox: bx(100, 100, 110, 110) },
            ],
            predictions: vec![
                PredictedBox { label: "r".into(), conf: 0.9, bbox: bx(0, 0, 10, 10) },
                PredictedBox { label: "r".into(), conf: 0.8, bbox: bx(50, 50, 60, 60) },
                PredictedBox { label: "r".into(), conf: 0.7, bbox: bx(100, 100, 110, 110) },
            ],
        }];
        let report = ap50(&records).unwrap();
        assert!((report.mean - 5.0 / 6.0).abs() < 1e-12, "{}", report.mean);
    }

    #[test]
    fn ap50_iou_boundary() {
        // a contained 9x5 prediction inside a 10x10 truth: IoU 45/100 = 0.45,
        // just under the threshold, so the only prediction is a false positive
        let low = bx(0, 0, 10, 10);
        let inside = bx(0, 0, 9, 5);
        assert_eq!(low.iou(&inside), 0.45);
        let records = vec![DetectionEvalRecord {
            image_id: "i0".into(),
            ground_truth: vec![GroundTruthBox { label: "r".into(), bbox: low }],
            predictions: vec![PredictedBox { label: "r".into(), conf: 0.9, bbox: inside }],
        }];
        assert_eq!(ap50(&records).unwrap().mean, 0.0);
        // exactly at the threshold counts as a hit
        let half = bx(0, 0, 10, 5); // IoU vs low = 50/100 = 0.5
        assert_eq!(low.iou(&half), 0.5);
        let records = vec![DetectionEvalRecord {
            image_id: "i0".into(),
            ground_truth: vec![GroundTruthBox { label: "r".into(), bbox: low }],
            predictions: vec![PredictedBox { label: "r".into(), conf: 0.9, bbox: half }],
        }];
        assert_eq!(ap50(&records).unwrap().mean, 1.0);
    }

    #[test]
    fn ap50_double_detection_counts_once() {
        let records = vec![DetectionEvalRecord {
            image_id: "i0".into(),
            ground_truth: vec![GroundTruthBox { label: "r".into(), bbox: bx(0, 0, 10, 10) }],
            predictions: vec![
                PredictedBox { label: "r".into(), conf: 0.9, bbox: bx(0, 0, 10, 10) },
                PredictedBox { label: "r".into(), conf: 0.8, bbox: bx(0, 0, 10, 10) },
            ],
        }];
        // flags [TP, FP]: precision [1, 1/2], recall [1, 1] -> AP 1.0
        assert_eq!(ap50(&records).unwrap().mean, 1.0);
    }

    #[test]
    fn ap50_averages_categories_with_ground_truth_only() {
        let records = vec![DetectionEvalRecord {
            image_id: "i0".into(),
            ground_truth: vec![
                GroundTruthBox { label: "a".into(), bbox: bx(0, 0, 10, 10) },
                GroundTruthBox { label: "b".into(), bbox: bx(20, 20, 30, 30) },
            ],
            predictions: vec![
                PredictedBox { label: "a".into(), conf: 0.9, bbox: bx(0, 0, 10, 10) },
                // "c" has no ground truth anywhere: it must not dilute the mean
                PredictedBox { label: "c".into(), conf: 0.9, bbox: bx(40, 40, 50, 50) },
            ],
        }];
        let report = ap50(&records).unwrap();
        assert_eq!(report.per_category.len(), 2);
        assert_eq!(report.per_category["a"], 1.0);
        assert_eq!(report.per_category["b"], 0.0);
        assert_eq!(report.mean, 0.5);
        assert!(matches!(ap50(&[]), Err(EvalError::EmptyInput)));
    }

    #[test]
    fn ap50_is_record_order_invariant() {
        let rec = |id: &str, gx: u32, hit: bool| DetectionEvalRecord {
            image_id: id.into(),
            ground_truth: vec![GroundTruthBox { label: "r".into(), bbox: bx(gx, 0, gx + 10, 10) }],
            predictions: vec![PredictedBox {
                label: "r".into(),
                conf: 0.5,
                bbox: if hit { bx(gx, 0, gx + 10, 10) } else { bx(gx + 40, 0, gx + 50, 10) },
            }],
        };
        let a = vec![rec("i0", 0, true), rec("i1", 100, false), rec("i2", 200, true)];
        let mut b = a.clone();
        b.reverse();
        assert_eq!(ap50(&a).unwrap(), ap50(&b).unwrap());
    }

    #[test]
    fn ap50_spurious_prediction_never_helps() {
        let base = vec![DetectionEvalRecord {
            image_id: "i0".into(),
            ground_truth: vec![
                GroundTruthBox { label: "r".into(), bbox: bx(0, 0, 10, 10) },
                GroundTruthBox { label: "r".into(), bbox: bx(100, 0, 110, 10) },
            ],
            predictions: vec![
                PredictedBox { label: "r".into(), conf: 0.9, bbox: bx(0, 0, 10, 10) },
                PredictedBox { label: "r".into(), conf: 0.6, bbox: bx(100, 0, 110, 10) },
            ],
        }];
        let before = ap50(&base).unwrap().mean;
        for conf in [0.95, 0.7, 0.1] {
            let mut spoiled = base.clone();
            spoiled[0].predictions.push(PredictedBox {
                label: "r".into(),
                conf,
                bbox: bx(200, 0, 210, 10),
            });
            let after = ap50(&spoiled).unwrap().mean;
            assert!(after <= before + 1e-12, "conf {conf}: {after} > {before}");
        }
    }

    #[test]
    fn split_takes_first_and_last_in_file_order() {
        let mut text = String::from("!structure Single 1\n!radical r\n");
        for i in 0..30 {
            text.push_str(&format!("c{i:02}\tSingle\tr\n"));
        }
        let dict = Dictionary::parse_str(&text).unwrap();
        let split =
            make_zero_shot_split(&dict, SplitSpec { n_seen: 20, m_unseen: 10 }).unwrap();
        assert_eq!(split.seen.len(), 20);
        assert_eq!(split.seen[0], "c00");
        assert_eq!(split.seen[19], "c19");
        assert_eq!(split.unseen, (20..30).map(|i| format!("c{i:02}")).collect::<Vec<_>>());
        assert!(matches!(
            make_zero_shot_split(&dict, SplitSpec { n_seen: 25, m_unseen: 10 }),
            Err(EvalError::SplitTooLarge { .. })
        ));
        assert!(matches!(
            make_zero_shot_split(&dict, SplitSpec { n_seen: 0, m_unseen: 10 }),
            Err(EvalError::EmptySplit)
        ));
    }

    #[test]
    fn eval_files_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let truth_path = dir.path().join("truth.jsonl");
        let truths = vec![TruthRecord { image_id: "i0".into(), character: "a".into() }];
        write_truth(&truth_path, &truths).unwrap();
        assert_eq!(read_truth(&truth_path).unwrap(), truths);

        let det_path = dir.path().join("det.jsonl");
        let records = vec![DetectionEvalRecord {
            image_id: "i0".into(),
            ground_truth: vec![GroundTruthBox { label: "r".into(), bbox: bx(0, 0, 4, 4) }],
            predictions: vec![PredictedBox { label: "r".into(), conf: 0.5, bbox: bx(0, 0, 4, 4) }],
        }];
        write_detection_eval(&det_path, &records).unwrap();
        assert_eq!(read_detection_eval(&det_path).unwrap(), records);

        std::fs::write(&truth_path, "nonsense\n").unwrap();
        assert!(matches!(read_truth(&truth_path), Err(EvalError::Parse { line: 1, .. })));
    }
}
