//! Streaming loop-closure detection: each incoming frame is scored against
//! the stored frames outside a temporal exclusion window, then inserted.

use std::time::Instant;

use crate::descriptor::{EarlyTermination, FrameFeatures};
use crate::error::{Error, Result};
use crate::mih_index::{MihIndex, MihParams};
use crate::similarity::{score_query, ScoreOptions, ScoreVector, SimilarityParams};

pub const DEFAULT_EXCLUSION_WINDOW: u32 = 30;

#[derive(Clone, Debug, PartialEq)]
pub struct LcdConfig {
    pub index: MihParams,
    pub similarity: SimilarityParams,
    /// The most recent `exclusion_window` frames are never candidates.
    pub exclusion_window: u32,
    /// A best score at or above this value counts as a loop closure.
    pub detection_threshold: f64,
    pub burstiness: bool,
    pub early_termination: Option<EarlyTermination>,
}

impl Default for LcdConfig {
    fn default() -> Self {
        Self {
            index: MihParams::default(),
            similarity: SimilarityParams::default(),
            exclusion_window: DEFAULT_EXCLUSION_WINDOW,
            detection_threshold: 0.0,
            burstiness: true,
            early_termination: Some(EarlyTermination::default()),
        }
    }
}

impl LcdConfig {
    pub fn validate(&self) -> Result<()> {
        self.index.validate()?;
        let bits = self.index.layout.total_bits();
        self.similarity.validate(bits)?;
        if let Some(et) = &self.early_termination {
            et.validate(bits)?;
        }
        if !(self.detection_threshold >= 0.0 && self.detection_threshold.is_finite()) {
            return Err(Error::invalid(format!(
                "detection threshold must be a finite value >= 0, got {}",
                self.detection_threshold
            )));
        }
        Ok(())
    }

    fn score_options(&self) -> ScoreOptions {
        ScoreOptions {
            burstiness: self.burstiness,
            early_termination: self.early_termination,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct DetectionRecord {
    pub frame_id: u32,
    pub best_candidate: Option<u32>,
    /// Zero when there is no candidate.
    pub best_score: f64,
    pub is_loop: bool,
    /// Scores keyed by the caller's frame ids.
    pub scores: ScoreVector,
    pub ingest_us: u64,
    pub query_us: u64,
}

impl DetectionRecord {
    /// Equality ignoring wall-clock timings.
    pub fn same_result(&self, other: &Self) -> bool {
        self.frame_id == other.frame_id
            && self.best_candidate == other.best_candidate
            && self.best_score.to_bits() == other.best_score.to_bits()
            && self.is_loop == other.is_loop
            && self.scores.entries == other.scores.entries
    }
}

pub struct LoopDetector {
    cfg: LcdConfig,
    index: MihIndex,
    frame_ids: Vec<u32>,
}

impl LoopDetector {
    pub fn new(cfg: LcdConfig) -> Result<Self> {
        cfg.validate()?;
        let index = MihIndex::new(cfg.index.clone())?;
        Ok(Self {
            cfg,
            index,
            frame_ids: Vec::new(),
        })
    }

    pub fn config(&self) -> &LcdConfig {
        &self.cfg
    }

    pub fn index(&self) -> &MihIndex {
        &self.index
    }

    /// Caller frame ids in insertion order.
    pub fn frame_ids(&self) -> &[u32] {
        &self.frame_ids
    }

    /// Queries with `frame`, then inserts it.
    pub fn process_frame(&mut self, frame: &FrameFeatures) -> Result<DetectionRecord> {
        if frame.is_empty() {
            return Err(Error::invalid(format!("frame {} has no features", frame.frame_id)));
        }
        if let Some(&last) = self.frame_ids.last() {
            if frame.frame_id <= last {
                return Err(Error::invalid(format!(
                    "frame id {} does not follow {last}",
                    frame.frame_id
                )));
            }
        }
        let t = self.frame_ids.len() as u64;
        let horizon = t.saturating_sub(self.cfg.exclusion_window as u64);

        let start = Instant::now();
        let mut scores = score_query(
            &frame.descriptors,
            &self.index,
            &self.cfg.similarity,
            &self.cfg.score_options(),
            |f| f as u64 >= horizon,
        )?;
        let query_us = start.elapsed().as_micros() as u64;

        let start = Instant::now();
        self.index.insert_frame(&frame.descriptors)?;
        let ingest_us = start.elapsed().as_micros() as u64;

        for e in scores.entries.iter_mut() {
            e.frame_id = self.frame_ids[e.frame_id as usize];
        }
        self.frame_ids.push(frame.frame_id);
        let best = scores.best().copied();
        let best_score = best.map_or(0.0, |b| b.score);
        Ok(DetectionRecord {
            frame_id: frame.frame_id,
            best_candidate: best.map(|b| b.frame_id),
            best_score,
            is_loop: best.is_some() && best_score >= self.cfg.detection_threshold,
            scores,
            ingest_us,
            query_us,
        })
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct TimingSummary {
    pub frames: usize,
    pub mean_query_us: f64,
    pub p50_query_us: u64,
    pub p95_query_us: u64,
    pub max_query_us: u64,
    pub mean_ingest_us: f64,
}

impl TimingSummary {
    pub fn from_records(records: &[DetectionRecord]) -> Self {
        if records.is_empty() {
            return Self::default();
        }
        let n = records.len();
        let mut q: Vec<u64> = records.iter().map(|r| r.query_us).collect();
        q.sort_unstable();
        let pct = |p: f64| q[((p * (n - 1) as f64).round() as usize).min(n - 1)];
        Self {
            frames: n,
            mean_query_us: q.iter().sum::<u64>() as f64 / n as f64,
            p50_query_us: pct(0.5),
            p95_query_us: pct(0.95),
            max_query_us: q[n - 1],
            mean_ingest_us: records.iter().map(|r| r.ingest_us).sum::<u64>() as f64 / n as f64,
        }
    }
}

#[derive(Clone, Debug, Default)]
pub struct SequenceReport {
    pub records: Vec<DetectionRecord>,
    /// Ids of frames skipped because they carried no features.
    pub skipped: Vec<u32>,
    pub timing: TimingSummary,
    pub candidates_examined: u64,
    pub early_rejections: u64,
}

/// Runs the detector over a frame stream. Errors name the position of the
/// offending frame in the stream.
pub fn run_sequence<I>(frames: I, cfg: &LcdConfig) -> Result<SequenceReport>
where
    I: IntoIterator,
    I::Item: std::borrow::Borrow<FrameFeatures>,
{
    use std::borrow::Borrow;
    let mut det = LoopDetector::new(cfg.clone())?;
    let mut report = SequenceReport::default();
    for (pos, frame) in frames.into_iter().enumerate() {
        let frame = frame.borrow();
        if frame.is_empty() {
            report.skipped.push(frame.frame_id);
            continue;
        }
        let rec = det.process_frame(frame).map_err(|e| e.in_frame(pos))?;
        report.candidates_examined += rec.scores.candidates_examined;
        report.early_rejections += rec.scores.early_rejections;
        report.records.push(rec);
    }
    report.timing = TimingSummary::from_records(&report.records);
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::descriptor::{BinaryDescriptor, SubstringLayout};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn random_frame(id: u32, n: usize, rng: &mut ChaCha8Rng) -> FrameFeatures {
        FrameFeatures::new(id, (0..n).map(|_| BinaryDescriptor::random(rng, 256).unwrap()).collect())
    }

    fn no_caps() -> LcdConfig {
        LcdConfig {
            index: MihParams::without_caps(SubstringLayout::balanced(256, 16).unwrap(), 0),
            ..LcdConfig::default()
        }
    }

    #[test]
    fn first_frame_has_no_candidate() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut det = LoopDetector::new(LcdConfig::default()).unwrap();
        let rec = det.process_frame(&random_frame(0, 10, &mut rng)).unwrap();
        assert_eq!(rec.best_candidate, None);
        assert_eq!(rec.best_score, 0.0);
        assert!(!rec.is_loop);
    }

    #[test]
    fn exact_repeat_after_window_wins() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let cfg = no_caps();
        let w = cfg.exclusion_window;
        let mut det = LoopDetector::new(cfg).unwrap();
        let first = random_frame(0, 30, &mut rng);
        det.process_frame(&first).unwrap();
        for id in 1..=w {
            let rec = det.process_frame(&random_frame(id, 30, &mut rng)).unwrap();
            assert!(rec.scores.entries.is_empty(), "frame {id} saw a candidate");
        }
        let repeat = FrameFeatures::new(w + 1, first.descriptors.clone());
        let rec = det.process_frame(&repeat).unwrap();
        assert_eq!(rec.best_candidate, Some(0));
        assert!(rec.scores.entries.iter().all(|e| e.score <= rec.best_score));
    }

    #[test]
    fn causality_and_no_self_match() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let cfg = LcdConfig {
            exclusion_window: 3,
            ..no_caps()
        };
        let base = random_frame(0, 20, &mut rng);
        let frames: Vec<_> = (0..12)
            .map(|i| FrameFeatures::new(i * 10, base.descriptors.clone()))
            .collect();
        let rep = run_sequence(&frames, &cfg).unwrap();
        for (t, rec) in rep.records.iter().enumerate() {
            for e in &rec.scores.entries {
                let pos = frames.iter().position(|f| f.frame_id == e.frame_id).unwrap();
                assert!(pos + 3 < t, "frame {t} scored {pos}");
            }
        }
    }

    #[test]
    fn empty_and_malformed_streams() {
        let rep = run_sequence(Vec::<FrameFeatures>::new(), &LcdConfig::default()).unwrap();
        assert!(rep.records.is_empty());
        assert_eq!(rep.timing, TimingSummary::default());

        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let frames = vec![
            random_frame(0, 5, &mut rng),
            FrameFeatures::new(1, vec![]),
            random_frame(2, 5, &mut rng),
            FrameFeatures::new(3, vec![BinaryDescriptor::zeros(128).unwrap()]),
        ];
        let err = run_sequence(&frames, &LcdConfig::default()).unwrap_err();
        assert!(matches!(err, Error::Frame { frame: 3, .. }), "{err:?}");
        let rep = run_sequence(&frames[..3], &LcdConfig::default()).unwrap();
        assert_eq!(rep.skipped, vec![1]);
        assert_eq!(rep.records.len(), 2);

        let mut det = LoopDetector::new(LcdConfig::default()).unwrap();
        assert!(det.process_frame(&FrameFeatures::new(0, vec![])).is_err());
        det.process_frame(&frames[2]).unwrap();
        assert!(det.process_frame(&frames[0]).is_err());
    }

    #[test]
    fn accumulated_scores_stable_under_growth_without_burstiness() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let cfg = LcdConfig {
            burstiness: false,
            exclusion_window: 0,
            ..no_caps()
        };
        let frames: Vec<_> = (0..8).map(|i| random_frame(i, 40, &mut rng)).collect();
        let query = FrameFeatures::new(100, frames[2].descriptors.clone());
        let mut small = LoopDetector::new(cfg.clone()).unwrap();
        let mut large = LoopDetector::new(cfg).unwrap();
        for f in &frames[..4] {
            small.process_frame(f).unwrap();
        }
        for f in &frames {
            large.process_frame(f).unwrap();
        }
        let a = small.process_frame(&query).unwrap();
        let b = large.process_frame(&query).unwrap();
        for e in &a.scores.entries {
            assert_eq!(b.scores.get(e.frame_id).unwrap().accumulated, e.accumulated);
        }
    }

    #[test]
    fn invalid_config_rejected() {
        let cfg = LcdConfig {
            detection_threshold: -1.0,
            ..LcdConfig::default()
        };
        assert!(LoopDetector::new(cfg).is_err());
    }
}
