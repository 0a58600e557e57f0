//! Multi-index hash tables over descriptor substrings.
//!
//! Each of the `m` tables is keyed by one substring of the descriptor and
//! stores `(frame, feature)` references. A stored feature becomes a candidate
//! for a query when at least one of its substrings lies within the probe
//! radius of the query's substring in the same table.

mod snapshot;

use std::collections::HashMap;

use crate::descriptor::{BinaryDescriptor, SubstringLayout, DEFAULT_BITS};
use crate::error::{Error, Result};

pub use snapshot::{load_snapshot, save_snapshot, SNAPSHOT_MAGIC};

/// Substrings up to this width get a dense slot array; wider ones a map.
pub const DENSE_TABLE_MAX_BITS: u32 = 16;

pub const DEFAULT_TABLES: usize = 16;
pub const DEFAULT_INTRA_CAP: u32 = 2;
pub const DEFAULT_BUCKET_CAP_FACTOR: f64 = 50.0;
pub const DEFAULT_EXPECTED_FEATURES: u64 = 1_000_000;

#[derive(Clone, Debug, PartialEq)]
pub struct MihParams {
    pub layout: SubstringLayout,
    pub probe_radius: u32,
    /// Max references one frame may place in a single entry; `None` disables the cap.
    pub intra_cap: Option<u32>,
    /// Entry capacity is `factor * expected_max_features / 2^len`; `None` disables it.
    pub bucket_cap_factor: Option<f64>,
    pub expected_max_features: u64,
}

impl Default for MihParams {
    fn default() -> Self {
        Self {
            layout: SubstringLayout::balanced(DEFAULT_BITS, DEFAULT_TABLES)
                .expect("default layout is valid"),
            probe_radius: 0,
            intra_cap: Some(DEFAULT_INTRA_CAP),
            bucket_cap_factor: Some(DEFAULT_BUCKET_CAP_FACTOR),
            expected_max_features: DEFAULT_EXPECTED_FEATURES,
        }
    }
}

impl MihParams {
    pub fn without_caps(layout: SubstringLayout, probe_radius: u32) -> Self {
        Self {
            layout,
            probe_radius,
            intra_cap: None,
            bucket_cap_factor: None,
            expected_max_features: DEFAULT_EXPECTED_FEATURES,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.intra_cap == Some(0) {
            return Err(Error::invalid("intra-image cap must be at least 1"));
        }
        if let Some(f) = self.bucket_cap_factor {
            if !(f > 0.0 && f.is_finite()) {
                return Err(Error::invalid(format!("bucket cap factor must be positive, got {f}")));
            }
        }
        if let Some(&l) = self.layout.lengths().iter().find(|&&l| self.probe_radius > l) {
            return Err(Error::invalid(format!(
                "probe radius {} exceeds substring length {l}",
                self.probe_radius
            )));
        }
        Ok(())
    }

    /// Entry capacity for a table with `len`-bit keys: `floor(factor * N / 2^len)`, at least 1.
    pub fn bucket_cap(&self, len: u32) -> Option<usize> {
        self.bucket_cap_factor.map(|f| {
            let avg = self.expected_max_features as f64 / 2f64.powi(len as i32);
            ((f * avg).floor() as usize).max(1)
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct CandidateRef {
    pub frame_id: u32,
    pub feature_id: u32,
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct HashEntry {
    pub refs: Vec<CandidateRef>,
    pub saturated: bool,
}

#[derive(Clone, Debug)]
enum Table {
    Dense(Vec<HashEntry>),
    Sparse(HashMap<u32, HashEntry>),
}

impl Table {
    fn new(len: u32) -> Self {
        if len <= DENSE_TABLE_MAX_BITS {
            Table::Dense(vec![HashEntry::default(); 1usize << len])
        } else {
            Table::Sparse(HashMap::new())
        }
    }

    #[inline]
    fn get(&self, key: u32) -> Option<&HashEntry> {
        match self {
            Table::Dense(v) => v.get(key as usize),
            Table::Sparse(m) => m.get(&key),
        }
    }

    #[inline]
    fn get_mut(&mut self, key: u32) -> &mut HashEntry {
        match self {
            Table::Dense(v) => &mut v[key as usize],
            Table::Sparse(m) => m.entry(key).or_default(),
        }
    }

    /// Non-empty entries in ascending key order.
    fn occupied(&self) -> Vec<(u32, &HashEntry)> {
        let mut out: Vec<(u32, &HashEntry)> = match self {
            Table::Dense(v) => v
                .iter()
                .enumerate()
                .map(|(k, e)| (k as u32, e))
                .filter(|(_, e)| !e.refs.is_empty() || e.saturated)
                .collect(),
            Table::Sparse(m) => m.iter().map(|(&k, e)| (k, e)).collect(),
        };
        out.sort_by_key(|(k, _)| *k);
        out
    }
}

/// XOR masks of every key within Hamming radius `r` of a `len`-bit key:
/// radius 0 first, then each radius in lexicographic order of flipped bit indices.
pub fn probe_masks(len: u32, r: u32) -> Vec<u32> {
    let mut out = vec![0u32];
    for radius in 1..=r.min(len) as usize {
        let mut idx: Vec<u32> = (0..radius as u32).collect();
        loop {
            out.push(idx.iter().fold(0u32, |m, &b| m | (1 << b)));
            if !next_combination(&mut idx, len) {
                break;
            }
        }
    }
    out
}

fn next_combination(idx: &mut [u32], n: u32) -> bool {
    let k = idx.len();
    for i in (0..k).rev() {
        if idx[i] < n - (k - i) as u32 {
            idx[i] += 1;
            for j in i + 1..k {
                idx[j] = idx[j - 1] + 1;
            }
            return true;
        }
    }
    false
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct IndexStats {
    pub frame_count: usize,
    pub feature_count: u64,
    pub saturated_entry_count: u64,
    /// Stored references divided by the total number of entry slots.
    pub mean_entry_load: f64,
}

#[derive(Clone, Debug)]
pub struct MihIndex {
    params: MihParams,
    bucket_caps: Vec<Option<usize>>,
    probes: Vec<Vec<u32>>,
    tables: Vec<Table>,
    frames: Vec<Vec<BinaryDescriptor>>,
    feature_count: u64,
}

impl MihIndex {
    pub fn new(params: MihParams) -> Result<Self> {
        params.validate()?;
        let lengths = params.layout.lengths();
        Ok(Self {
            bucket_caps: lengths.iter().map(|&l| params.bucket_cap(l)).collect(),
            probes: lengths
                .iter()
                .map(|&l| probe_masks(l, params.probe_radius))
                .collect(),
            tables: lengths.iter().map(|&l| Table::new(l)).collect(),
            frames: Vec::new(),
            feature_count: 0,
            params,
        })
    }

    pub fn params(&self) -> &MihParams {
        &self.params
    }

    pub fn descriptor_bits(&self) -> usize {
        self.params.layout.total_bits()
    }

    pub fn frame_count(&self) -> usize {
        self.frames.len()
    }

    pub fn frame(&self, frame_id: u32) -> &[BinaryDescriptor] {
        &self.frames[frame_id as usize]
    }

    #[inline]
    pub fn descriptor(&self, r: CandidateRef) -> &BinaryDescriptor {
        &self.frames[r.frame_id as usize][r.feature_id as usize]
    }

    pub fn entry(&self, table: usize, key: u32) -> Option<&HashEntry> {
        self.tables.get(table)?.get(key)
    }

    /// Adds a frame and returns its id. Ids are assigned sequentially from 0.
    pub fn insert_frame(&mut self, descriptors: &[BinaryDescriptor]) -> Result<u32> {
        for d in descriptors {
            self.params.layout.check_descriptor(d)?;
        }
        let frame_id = u32::try_from(self.frames.len())
            .map_err(|_| Error::Capacity("frame id space exhausted".into()))?;
        let layout = &self.params.layout;
        for (feature_id, d) in descriptors.iter().enumerate() {
            let r = CandidateRef {
                frame_id,
                feature_id: feature_id as u32,
            };
            for (k, table) in self.tables.iter_mut().enumerate() {
                let entry = table.get_mut(layout.key(d, k));
                if entry.saturated {
                    continue;
                }
                if let Some(cap) = self.params.intra_cap {
                    let same_frame = entry
                        .refs
                        .iter()
                        .rev()
                        .take_while(|c| c.frame_id == frame_id)
                        .count();
                    if same_frame >= cap as usize {
                        continue;
                    }
                }
                if let Some(cap) = self.bucket_caps[k] {
                    if entry.refs.len() >= cap {
                        entry.saturated = true;
                        continue;
                    }
                }
                entry.refs.push(r);
            }
        }
        self.feature_count += descriptors.len() as u64;
        self.frames.push(descriptors.to_vec());
        Ok(frame_id)
    }

    /// Deduplicated candidate set for `q`, sorted by frame then feature.
    /// Saturated entries contribute nothing; frames for which `exclude` returns
    /// true are dropped.
    pub fn query_candidates<F>(&self, q: &BinaryDescriptor, exclude: F) -> Vec<CandidateRef>
    where
        F: Fn(u32) -> bool,
    {
        let mut out = Vec::new();
        self.collect_candidates(q, &exclude, &mut out);
        out
    }

    /// As [`Self::query_candidates`], reusing `out`.
    pub fn collect_candidates<F>(&self, q: &BinaryDescriptor, exclude: &F, out: &mut Vec<CandidateRef>)
    where
        F: Fn(u32) -> bool,
    {
        out.clear();
        debug_assert_eq!(q.len_bits(), self.descriptor_bits());
        let layout = &self.params.layout;
        for (k, table) in self.tables.iter().enumerate() {
            let key = layout.key(q, k);
            for &mask in &self.probes[k] {
                if let Some(entry) = table.get(key ^ mask) {
                    if entry.saturated {
                        continue;
                    }
                    out.extend(entry.refs.iter().filter(|c| !exclude(c.frame_id)));
                }
            }
        }
        out.sort_unstable();
        out.dedup();
    }

    pub fn candidate_stats(&self) -> IndexStats {
        let mut saturated = 0u64;
        let mut stored = 0u64;
        for table in &self.tables {
            for (_, e) in table.occupied() {
                saturated += e.saturated as u64;
                stored += e.refs.len() as u64;
            }
        }
        let slots: f64 = self
            .params
            .layout
            .lengths()
            .iter()
            .map(|&l| 2f64.powi(l as i32))
            .sum();
        IndexStats {
            frame_count: self.frames.len(),
            feature_count: self.feature_count,
            saturated_entry_count: saturated,
            mean_entry_load: if stored == 0 { 0.0 } else { stored as f64 / slots },
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn layout16() -> SubstringLayout {
        SubstringLayout::balanced(256, 16).unwrap()
    }

    /// Descriptor whose every 16-bit substring equals `v`.
    fn uniform_keys(v: u16) -> BinaryDescriptor {
        let bytes: Vec<u8> = (0..16).flat_map(|_| v.to_le_bytes()).collect();
        BinaryDescriptor::from_bytes(&bytes).unwrap()
    }

    #[test]
    fn probe_mask_order() {
        assert_eq!(probe_masks(4, 0), vec![0]);
        assert_eq!(probe_masks(4, 1), vec![0, 1, 2, 4, 8]);
        assert_eq!(
            probe_masks(4, 2),
            vec![0, 1, 2, 4, 8, 0b0011, 0b0101, 0b1001, 0b0110, 0b1010, 0b1100]
        );
        assert_eq!(probe_masks(11, 3).len(), 1 + 11 + 55 + 165);
        assert_eq!(probe_masks(3, 5).len(), 8);
    }

    #[test]
    fn probe_masks_are_the_ball() {
        for len in 1..=10u32 {
            for r in 0..=3u32 {
                let masks = probe_masks(len, r);
                let mut sorted = masks.clone();
                sorted.sort_unstable();
                sorted.dedup();
                assert_eq!(sorted.len(), masks.len());
                let expected: Vec<u32> = (0..1u32 << len).filter(|x| x.count_ones() <= r).collect();
                assert_eq!(sorted, expected);
            }
        }
    }

    #[test]
    fn empty_stats() {
        let idx = MihIndex::new(MihParams::default()).unwrap();
        let s = idx.candidate_stats();
        assert_eq!(
            (s.frame_count, s.feature_count, s.saturated_entry_count, s.mean_entry_load),
            (0, 0, 0, 0.0)
        );
    }

    #[test]
    fn distinct_features_fill_m_entries_each() {
        let mut idx = MihIndex::new(MihParams::without_caps(layout16(), 0)).unwrap();
        for f in 0..2u16 {
            let frame: Vec<_> = (0..10u16).map(|i| uniform_keys(f * 10 + i)).collect();
            idx.insert_frame(&frame).unwrap();
        }
        let s = idx.candidate_stats();
        assert_eq!(s.feature_count, 20);
        assert_eq!(s.mean_entry_load, 320.0 / (16.0 * 65536.0));
        for k in 0..16 {
            for v in 0..20u32 {
                assert_eq!(idx.entry(k, v).unwrap().refs.len(), 1);
            }
        }
    }

    #[test]
    fn intra_cap_limits_repeats_from_one_frame() {
        let params = MihParams {
            bucket_cap_factor: None,
            ..MihParams::default()
        };
        let mut idx = MihIndex::new(params).unwrap();
        let frame = vec![uniform_keys(7); DEFAULT_INTRA_CAP as usize + 3];
        idx.insert_frame(&frame).unwrap();
        idx.insert_frame(&frame).unwrap();
        for k in 0..16 {
            let e = idx.entry(k, 7).unwrap();
            assert_eq!(e.refs.iter().filter(|c| c.frame_id == 0).count(), 2);
            assert_eq!(e.refs.iter().filter(|c| c.frame_id == 1).count(), 2);
        }
    }

    #[test]
    fn bucket_cap_saturates_entry() {
        let params = MihParams {
            intra_cap: None,
            expected_max_features: 65536 / 10,
            ..MihParams::default()
        };
        // 50 * 6553 / 65536 = 4.99 -> 4
        let cap = params.bucket_cap(16).unwrap();
        assert_eq!(cap, 4);
        let mut idx = MihIndex::new(params).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let hot = uniform_keys(3);
        for _ in 0..cap {
            idx.insert_frame(&[hot]).unwrap();
        }
        assert!(!idx.entry(0, 3).unwrap().saturated);
        assert!(!idx.query_candidates(&hot, |_| false).is_empty());
        idx.insert_frame(&[hot]).unwrap();
        let other = BinaryDescriptor::random(&mut rng, 256).unwrap();
        idx.insert_frame(&[hot, other]).unwrap();
        for k in 0..16 {
            let e = idx.entry(k, 3).unwrap();
            assert!(e.saturated);
            assert_eq!(e.refs.len(), cap);
        }
        assert!(idx.query_candidates(&hot, |_| false).is_empty());
        assert_eq!(idx.candidate_stats().saturated_entry_count, 16);
    }

    #[test]
    fn exact_duplicate_and_pigeonhole_recall() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut idx = MihIndex::new(MihParams::without_caps(layout16(), 0)).unwrap();
        let stored: Vec<_> = (0..50)
            .map(|_| BinaryDescriptor::random(&mut rng, 256).unwrap())
            .collect();
        idx.insert_frame(&stored).unwrap();
        for (i, s) in stored.iter().enumerate() {
            let want = CandidateRef {
                frame_id: 0,
                feature_id: i as u32,
            };
            assert!(idx.query_candidates(s, |_| false).contains(&want));
            // 15 flipped bits cannot touch all 16 substrings
            let mut q = *s;
            for b in 0..15 {
                q.flip_bit(b * 17);
            }
            assert!(idx.query_candidates(&q, |_| false).contains(&want));
            assert!(idx.query_candidates(&q, |f| f == 0).is_empty());
        }
    }

    #[test]
    fn rejects_wrong_length() {
        let mut idx = MihIndex::new(MihParams::default()).unwrap();
        let d = BinaryDescriptor::zeros(128).unwrap();
        assert!(matches!(idx.insert_frame(&[d]), Err(Error::LengthMismatch { .. })));
        assert_eq!(idx.frame_count(), 0);
    }

    #[test]
    fn invalid_params() {
        let p = MihParams {
            intra_cap: Some(0),
            ..MihParams::default()
        };
        assert!(MihIndex::new(p).is_err());
        let p = MihParams {
            probe_radius: 17,
            ..MihParams::default()
        };
        assert!(MihIndex::new(p).is_err());
    }
}
