//! Precision-recall sweeps over detection scores with neighbour-tolerant
//! ground truth.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use super::groundtruth::GroundTruth;
use crate::error::{Error, Result};
use crate::lcd::DetectionRecord;

/// One scored hypothesis `query -> candidate`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Detection {
    pub query: u32,
    pub candidate: u32,
    pub score: f64,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PrPoint {
    pub threshold: f64,
    pub precision: f64,
    pub recall: f64,
    pub true_positives: usize,
    pub false_positives: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct PrCurve {
    /// Ascending by threshold.
    pub points: Vec<PrPoint>,
    pub recall_at_full_precision: f64,
    /// Distinct ground-truth query ids (the recall denominator).
    pub gt_queries: usize,
}

impl PrCurve {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("threshold,precision,recall,tp,fp\n");
        for p in &self.points {
            writeln!(
                out,
                "{},{},{},{},{}",
                p.threshold, p.precision, p.recall, p.true_positives, p.false_positives
            )
            .unwrap();
        }
        out
    }
}

/// Best-candidate detections from pipeline records; frames without a candidate are dropped.
pub fn detections_from_records(records: &[DetectionRecord]) -> Vec<Detection> {
    records
        .iter()
        .filter_map(|r| {
            r.best_candidate.map(|c| Detection {
                query: r.frame_id,
                candidate: c,
                score: r.best_score,
            })
        })
        .collect()
}

/// Reduces a score matrix to one detection per query: the highest score,
/// ties to the lower candidate id.
pub fn detections_from_matrix(entries: &[Detection]) -> Vec<Detection> {
    let mut best: BTreeMap<u32, Detection> = BTreeMap::new();
    for &e in entries {
        best.entry(e.query)
            .and_modify(|b| {
                if e.score > b.score || (e.score == b.score && e.candidate < b.candidate) {
                    *b = e;
                }
            })
            .or_insert(e);
    }
    best.into_values().collect()
}

/// Sweeps the threshold over every distinct detection score. At threshold `t`
/// the detections scoring at least `t` are kept; a kept detection is a true
/// positive when the ground truth accepts it. Recall is the fraction of
/// ground-truth queries matched by at least one true positive.
pub fn pr_curve(detections: &[Detection], gt: &GroundTruth) -> Result<PrCurve> {
    if gt.is_empty() {
        return Err(Error::invalid("ground truth is empty, recall is undefined"));
    }
    if let Some(d) = detections.iter().find(|d| !d.score.is_finite()) {
        return Err(Error::invalid(format!("non-finite score for query {}", d.query)));
    }
    let queries: Vec<u32> = gt.queries().into_iter().collect();
    let mut sorted: Vec<&Detection> = detections.iter().collect();
    sorted.sort_by(|a, b| b.score.total_cmp(&a.score));

    let mut covered: BTreeSet<u32> = BTreeSet::new();
    let (mut tp, mut fp) = (0usize, 0usize);
    let mut points = Vec::new();
    let mut i = 0;
    while i < sorted.len() {
        let threshold = sorted[i].score;
        while i < sorted.len() && sorted[i].score == threshold {
            let d = sorted[i];
            let mut hit = false;
            for &(q, _) in gt.supporting(d.query, d.candidate) {
                covered.insert(q);
                hit = true;
            }
            if hit {
                tp += 1;
            } else {
                fp += 1;
            }
            i += 1;
        }
        points.push(PrPoint {
            threshold,
            precision: tp as f64 / (tp + fp) as f64,
            recall: covered.len() as f64 / queries.len() as f64,
            true_positives: tp,
            false_positives: fp,
        });
    }
    let recall_at_full_precision = points
        .iter()
        .filter(|p| p.false_positives == 0)
        .map(|p| p.recall)
        .fold(0.0, f64::max);
    points.reverse();
    Ok(PrCurve {
        points,
        recall_at_full_precision,
        gt_queries: queries.len(),
    })
}
