//! Frame-to-frame feature matching through a throwaway multi-index hash over
//! one frame, with an exhaustive matcher as baseline.

use rayon::prelude::*;

use crate::descriptor::{BinaryDescriptor, EarlyTermination, SubstringLayout};
use crate::error::{Error, Result};
use crate::mih_index::{MihIndex, MihParams};

pub const DEFAULT_MATCH_TABLES: usize = 24;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MatchParams {
    /// Number of hash tables; the substring layout is the balanced split.
    pub tables: usize,
    pub probe_radius: u32,
    /// Matches farther than this are dropped.
    pub d0: u32,
    pub early_termination: Option<EarlyTermination>,
    /// Keep only pairs that are each other's best match.
    pub mutual: bool,
}

impl Default for MatchParams {
    fn default() -> Self {
        Self {
            tables: DEFAULT_MATCH_TABLES,
            probe_radius: 0,
            d0: crate::similarity::DEFAULT_D0,
            early_termination: Some(EarlyTermination::default()),
            mutual: false,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub struct FeatureMatch {
    /// Index into the second (query) frame.
    pub query: u32,
    /// Index into the first (train) frame.
    pub train: u32,
    pub distance: u32,
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct MatchResult {
    /// Ascending by query feature.
    pub matches: Vec<FeatureMatch>,
    pub candidates_examined: u64,
    pub early_rejections: u64,
    pub full_evaluations: u64,
}

impl MatchResult {
    pub fn train_for(&self, query: u32) -> Option<&FeatureMatch> {
        self.matches
            .binary_search_by_key(&query, |m| m.query)
            .ok()
            .map(|i| &self.matches[i])
    }
}

fn check_frames(f1: &[BinaryDescriptor], f2: &[BinaryDescriptor], d0: u32) -> Result<usize> {
    if f1.is_empty() || f2.is_empty() {
        return Err(Error::invalid("matching needs two non-empty frames"));
    }
    let bits = f1[0].len_bits();
    if let Some(bad) = f1.iter().chain(f2).find(|d| d.len_bits() != bits) {
        return Err(Error::LengthMismatch {
            expected: bits,
            found: bad.len_bits(),
        });
    }
    if d0 as usize > bits {
        return Err(Error::invalid(format!("cutoff {d0} exceeds the descriptor length {bits}")));
    }
    Ok(bits)
}

#[derive(Default)]
struct OneWay {
    best: Vec<Option<(u32, u32)>>,
    examined: u64,
    rejected: u64,
    evaluated: u64,
}

fn keep_better(best: &mut Option<(u32, u32)>, train: u32, d: u32) {
    // candidates arrive in ascending train order, so strict < keeps the lowest id on ties
    if best.is_none_or(|(_, bd)| d < bd) {
        *best = Some((train, d));
    }
}

fn indexed_one_way(
    train: &[BinaryDescriptor],
    query: &[BinaryDescriptor],
    bits: usize,
    p: &MatchParams,
) -> Result<OneWay> {
    let layout = SubstringLayout::balanced(bits, p.tables)?;
    let mut index = MihIndex::new(MihParams::without_caps(layout, p.probe_radius))?;
    index.insert_frame(train)?;
    let rows: Vec<(Option<(u32, u32)>, u64, u64)> = query
        .par_iter()
        .map_init(Vec::new, |buf, q| {
            index.collect_candidates(q, &|_| false, buf);
            let mut best = None;
            let mut rejected = 0;
            for c in buf.iter() {
                let t = index.descriptor(*c);
                if p.early_termination.is_some_and(|et| et.rejects(q, t)) {
                    rejected += 1;
                    continue;
                }
                let d = q.distance(t);
                if d <= p.d0 {
                    keep_better(&mut best, c.feature_id, d);
                }
            }
            (best, buf.len() as u64, rejected)
        })
        .collect();
    let mut out = OneWay::default();
    for (best, examined, rejected) in rows {
        out.best.push(best);
        out.examined += examined;
        out.rejected += rejected;
    }
    out.evaluated = out.examined - out.rejected;
    Ok(out)
}

fn brute_one_way(train: &[BinaryDescriptor], query: &[BinaryDescriptor], d0: u32) -> OneWay {
    let best = query
        .par_iter()
        .map(|q| {
            let mut best = None;
            for (i, t) in train.iter().enumerate() {
                let d = q.distance(t);
                if d <= d0 {
                    keep_better(&mut best, i as u32, d);
                }
            }
            best
        })
        .collect();
    let n = (train.len() * query.len()) as u64;
    OneWay {
        best,
        examined: n,
        rejected: 0,
        evaluated: n,
    }
}

fn assemble(forward: OneWay, reverse: Option<OneWay>) -> MatchResult {
    let mut res = MatchResult {
        candidates_examined: forward.examined,
        early_rejections: forward.rejected,
        full_evaluations: forward.evaluated,
        ..MatchResult::default()
    };
    if let Some(r) = &reverse {
        res.candidates_examined += r.examined;
        res.early_rejections += r.rejected;
        res.full_evaluations += r.evaluated;
    }
    for (q, best) in forward.best.iter().enumerate() {
        let Some((train, distance)) = *best else { continue };
        if let Some(r) = &reverse {
            if r.best[train as usize].map(|(back, _)| back) != Some(q as u32) {
                continue;
            }
        }
        res.matches.push(FeatureMatch {
            query: q as u32,
            train,
            distance,
        });
    }
    res
}

/// Matches every feature of `f2` to its nearest feature of `f1` found through
/// an index built over `f1`.
pub fn match_frames(f1: &[BinaryDescriptor], f2: &[BinaryDescriptor], p: &MatchParams) -> Result<MatchResult> {
    let bits = check_frames(f1, f2, p.d0)?;
    if let Some(et) = &p.early_termination {
        et.validate(bits)?;
    }
    let forward = indexed_one_way(f1, f2, bits, p)?;
    let reverse = if p.mutual {
        Some(indexed_one_way(f2, f1, bits, p)?)
    } else {
        None
    };
    Ok(assemble(forward, reverse))
}

/// Exhaustive nearest-neighbour matching with the same cutoff and tie-break.
pub fn match_frames_bruteforce(
    f1: &[BinaryDescriptor],
    f2: &[BinaryDescriptor],
    p: &MatchParams,
) -> Result<MatchResult> {
    check_frames(f1, f2, p.d0)?;
    let forward = brute_one_way(f1, f2, p.d0);
    let reverse = p.mutual.then(|| brute_one_way(f2, f1, p.d0));
    Ok(assemble(forward, reverse))
}
