//! Feature and image similarity, exact and index-approximated, with
//! inverse-document-frequency weighting against inter-image burstiness.

use rayon::prelude::*;

use crate::descriptor::{BinaryDescriptor, EarlyTermination};
use crate::error::{Error, Result};
use crate::mih_index::{CandidateRef, MihIndex};

pub const DEFAULT_SIGMA: f64 = 18.0;
pub const DEFAULT_D0: u32 = 50;
pub const DEFAULT_IDF_MIN_FRAMES: usize = 10;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SimilarityParams {
    /// Bandwidth of the Gaussian kernel, in bits.
    pub sigma: f64,
    /// Pairs farther apart than this score zero.
    pub d0: u32,
    /// Below this many candidate frames the IDF factor is replaced by 1.
    pub idf_min_frames: usize,
}

impl Default for SimilarityParams {
    fn default() -> Self {
        Self {
            sigma: DEFAULT_SIGMA,
            d0: DEFAULT_D0,
            idf_min_frames: DEFAULT_IDF_MIN_FRAMES,
        }
    }
}

impl SimilarityParams {
    pub fn validate(&self, total_bits: usize) -> Result<()> {
        if !(self.sigma > 0.0 && self.sigma.is_finite()) {
            return Err(Error::invalid(format!("sigma must be positive, got {}", self.sigma)));
        }
        if self.d0 == 0 || self.d0 as usize > total_bits {
            return Err(Error::invalid(format!(
                "cutoff d0 = {} must lie in 1..={total_bits}",
                self.d0
            )));
        }
        Ok(())
    }
}

/// `exp(-d^2 / sigma^2)` up to the cutoff, zero beyond it.
#[inline]
pub fn feature_similarity(d: u32, p: &SimilarityParams) -> f64 {
    if d > p.d0 {
        return 0.0;
    }
    let x = d as f64 / p.sigma;
    (-x * x).exp()
}

/// Mean feature similarity over all cross pairs of two frames.
pub fn image_similarity_exact(
    a: &[BinaryDescriptor],
    b: &[BinaryDescriptor],
    p: &SimilarityParams,
) -> Result<f64> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::invalid("image similarity needs non-empty frames"));
    }
    let bits = a[0].len_bits();
    if let Some(bad) = a.iter().chain(b).find(|d| d.len_bits() != bits) {
        return Err(Error::LengthMismatch {
            expected: bits,
            found: bad.len_bits(),
        });
    }
    let mut total = 0.0;
    for x in a {
        let mut row = 0.0;
        for y in b {
            row += feature_similarity(x.distance(y), p);
        }
        total += row;
    }
    Ok(total / (a.len() as f64 * b.len() as f64))
}

#[derive(Clone, Copy, Debug, PartialEq, Default)]
pub struct ScoreOptions {
    pub burstiness: bool,
    pub early_termination: Option<EarlyTermination>,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ScoreEntry {
    pub frame_id: u32,
    /// Sum of (possibly reweighted) pair similarities.
    pub accumulated: f64,
    pub frame_len: usize,
    /// `accumulated / (query_len * frame_len)`.
    pub score: f64,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct ScoreVector {
    pub query_len: usize,
    /// One entry per frame that reached a candidate set, ascending by frame id.
    pub entries: Vec<ScoreEntry>,
    pub candidates_examined: u64,
    pub early_rejections: u64,
    pub full_evaluations: u64,
}

impl ScoreVector {
    pub fn get(&self, frame_id: u32) -> Option<&ScoreEntry> {
        self.entries
            .binary_search_by_key(&frame_id, |e| e.frame_id)
            .ok()
            .map(|i| &self.entries[i])
    }

    pub fn score(&self, frame_id: u32) -> f64 {
        self.get(frame_id).map_or(0.0, |e| e.score)
    }

    /// Highest-scoring frame; ties go to the lower frame id.
    pub fn best(&self) -> Option<&ScoreEntry> {
        self.entries
            .iter()
            .reduce(|best, e| if e.score > best.score { e } else { best })
    }
}

/// Scoring detail for one query feature.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct FeatureScore {
    /// Surviving candidates with their distance, raw similarity and final weight.
    pub survivors: Vec<(CandidateRef, u32, f64, f64)>,
    /// Distinct frames of all candidates, including early-rejected ones, ascending.
    pub reached_frames: Vec<u32>,
    pub examined: u64,
    pub rejected: u64,
    /// Number of distinct frames with a survivor inside the cutoff.
    pub similar_frames: usize,
    pub idf: f64,
    pub total_similarity: f64,
}

impl FeatureScore {
    fn per_frame(&self) -> Vec<(u32, f64)> {
        let mut out: Vec<(u32, f64)> = self.reached_frames.iter().map(|&f| (f, 0.0)).collect();
        let mut i = 0;
        for &(c, _, _, w) in &self.survivors {
            while out[i].0 != c.frame_id {
                i += 1;
            }
            out[i].1 += w;
        }
        out
    }
}

fn check_query(query: &[BinaryDescriptor], index: &MihIndex, p: &SimilarityParams) -> Result<()> {
    let bits = index.descriptor_bits();
    p.validate(bits)?;
    if let Some(bad) = query.iter().find(|d| d.len_bits() != bits) {
        return Err(Error::LengthMismatch {
            expected: bits,
            found: bad.len_bits(),
        });
    }
    Ok(())
}

/// Number of indexed frames not excluded by `exclude`.
pub fn candidate_frame_count<F: Fn(u32) -> bool>(index: &MihIndex, exclude: &F) -> usize {
    (0..index.frame_count() as u32).filter(|&f| !exclude(f)).count()
}

/// Scores one query feature against its candidate set.
///
/// `candidate_frames` is the number of frames eligible as candidates (the IDF
/// numerator). With burstiness off every survivor keeps its raw similarity;
/// with it on the similarities are normalized to sum to one and scaled by
/// `ln(candidate_frames / similar_frames)`.
pub fn score_feature<F: Fn(u32) -> bool>(
    q: &BinaryDescriptor,
    index: &MihIndex,
    p: &SimilarityParams,
    opts: &ScoreOptions,
    candidate_frames: usize,
    exclude: &F,
    buf: &mut Vec<CandidateRef>,
) -> FeatureScore {
    index.collect_candidates(q, exclude, buf);
    let mut out = FeatureScore {
        examined: buf.len() as u64,
        idf: 1.0,
        ..FeatureScore::default()
    };
    let mut last_similar_frame = None;
    for &c in buf.iter() {
        if out.reached_frames.last() != Some(&c.frame_id) {
            out.reached_frames.push(c.frame_id);
        }
        let stored = index.descriptor(c);
        if let Some(et) = &opts.early_termination {
            if et.rejects(q, stored) {
                out.rejected += 1;
                continue;
            }
        }
        let d = q.distance(stored);
        let phi = feature_similarity(d, p);
        if phi > 0.0 && last_similar_frame != Some(c.frame_id) {
            out.similar_frames += 1;
            last_similar_frame = Some(c.frame_id);
        }
        out.total_similarity += phi;
        out.survivors.push((c, d, phi, phi));
    }
    if opts.burstiness {
        if out.total_similarity > 0.0 {
            out.idf = if candidate_frames < p.idf_min_frames {
                1.0
            } else {
                (candidate_frames as f64 / out.similar_frames as f64).ln()
            };
            for s in out.survivors.iter_mut() {
                s.3 = out.idf * (s.2 / out.total_similarity);
            }
        } else {
            out.idf = 0.0;
        }
    }
    out
}

/// Scores a query frame against every eligible indexed frame.
///
/// Per-feature work runs in parallel; partial sums are merged in feature
/// order, so the result does not depend on the thread count.
pub fn score_query<F>(
    query: &[BinaryDescriptor],
    index: &MihIndex,
    p: &SimilarityParams,
    opts: &ScoreOptions,
    exclude: F,
) -> Result<ScoreVector>
where
    F: Fn(u32) -> bool + Sync,
{
    check_query(query, index, p)?;
    if let Some(et) = &opts.early_termination {
        et.validate(index.descriptor_bits())?;
    }
    let candidate_frames = candidate_frame_count(index, &exclude);
    let per_feature: Vec<(Vec<(u32, f64)>, u64, u64)> = query
        .par_iter()
        .map_init(Vec::new, |buf, q| {
            let fs = score_feature(q, index, p, opts, candidate_frames, &exclude, buf);
            (fs.per_frame(), fs.examined, fs.rejected)
        })
        .collect();

    let n_frames = index.frame_count();
    let mut acc = vec![0.0f64; n_frames];
    let mut seen = vec![false; n_frames];
    let mut sv = ScoreVector {
        query_len: query.len(),
        ..ScoreVector::default()
    };
    for (parts, examined, rejected) in per_feature {
        sv.candidates_examined += examined;
        sv.early_rejections += rejected;
        for (f, v) in parts {
            acc[f as usize] += v;
            seen[f as usize] = true;
        }
    }
    sv.full_evaluations = sv.candidates_examined - sv.early_rejections;
    let qn = query.len() as f64;
    sv.entries = (0..n_frames)
        .filter(|&f| seen[f])
        .map(|f| {
            let frame_len = index.frame(f as u32).len();
            ScoreEntry {
                frame_id: f as u32,
                accumulated: acc[f],
                frame_len,
                score: acc[f] / (qn * frame_len as f64),
            }
        })
        .collect();
    Ok(sv)
}
