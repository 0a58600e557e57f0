//! Index snapshot format (all integers little-endian):
//!
//! ```text
//! "MIH1"  u32 version
//! params: u32 total_bits, u32 m, m x u32 lengths, u32 probe_radius,
//!         u32 intra_cap (0 = off), u8 bucket_cap_on, f64 bucket_cap_factor,
//!         u64 expected_max_features
//! u32 frame_count, per frame: u32 feature_count, feature_count x (total_bits / 8) bytes
//! per table: u32 entry_count, per entry (ascending key):
//!         u32 key, u8 saturated, u32 ref_count, ref_count x (u32 frame, u32 feature)
//! ```

use std::io::{Read, Write};

use super::{CandidateRef, HashEntry, MihIndex, MihParams};
use crate::binio::{put_u32, put_u64, ByteReader};
use crate::descriptor::{BinaryDescriptor, SubstringLayout};
use crate::error::{Error, Result};

pub const SNAPSHOT_MAGIC: &[u8; 4] = b"MIH1";
const VERSION: u32 = 1;

pub fn save_snapshot<W: Write>(index: &MihIndex, mut out: W) -> Result<()> {
    let p = &index.params;
    let mut buf = Vec::new();
    buf.extend_from_slice(SNAPSHOT_MAGIC);
    put_u32(&mut buf, VERSION);
    put_u32(&mut buf, p.layout.total_bits() as u32);
    put_u32(&mut buf, p.layout.m() as u32);
    for &l in p.layout.lengths() {
        put_u32(&mut buf, l);
    }
    put_u32(&mut buf, p.probe_radius);
    put_u32(&mut buf, p.intra_cap.unwrap_or(0));
    buf.push(p.bucket_cap_factor.is_some() as u8);
    put_u64(&mut buf, p.bucket_cap_factor.unwrap_or(0.0).to_bits());
    put_u64(&mut buf, p.expected_max_features);

    put_u32(&mut buf, index.frames.len() as u32);
    for frame in &index.frames {
        put_u32(&mut buf, frame.len() as u32);
        for d in frame {
            d.write_bytes(&mut buf);
        }
    }
    for table in &index.tables {
        let occupied = table.occupied();
        put_u32(&mut buf, occupied.len() as u32);
        for (key, entry) in occupied {
            put_u32(&mut buf, key);
            buf.push(entry.saturated as u8);
            put_u32(&mut buf, entry.refs.len() as u32);
            for r in &entry.refs {
                put_u32(&mut buf, r.frame_id);
                put_u32(&mut buf, r.feature_id);
            }
        }
    }
    out.write_all(&buf)?;
    Ok(())
}

pub fn load_snapshot<R: Read>(mut input: R) -> Result<MihIndex> {
    let mut data = Vec::new();
    input.read_to_end(&mut data)?;
    let mut rd = ByteReader::new(&data);

    if rd.take(4, "magic")? != SNAPSHOT_MAGIC {
        return Err(Error::parse(0, "bad magic, expected MIH1"));
    }
    let at = rd.offset();
    let version = rd.u32("version")?;
    if version != VERSION {
        return Err(Error::parse(at, format!("unsupported version {version}")));
    }
    let at = rd.offset();
    let total_bits = rd.u32("descriptor length")? as usize;
    let m = rd.u32("table count")? as usize;
    if m == 0 || m > total_bits {
        return Err(Error::parse(at, format!("{m} tables over {total_bits} bits")));
    }
    let lengths = (0..m)
        .map(|_| rd.u32("substring length"))
        .collect::<Result<Vec<_>>>()?;
    let layout = SubstringLayout::from_lengths(lengths).map_err(|e| Error::parse(at, e.to_string()))?;
    if layout.total_bits() != total_bits {
        return Err(Error::parse(at, "substring lengths do not sum to the descriptor length"));
    }
    let at = rd.offset();
    let probe_radius = rd.u32("probe radius")?;
    let intra_cap = Some(rd.u32("intra cap")?).filter(|&c| c > 0);
    let cap_on = rd.u8("bucket cap flag")? != 0;
    let factor = rd.f64("bucket cap factor")?;
    let expected_max_features = rd.u64("expected feature count")?;
    let params = MihParams {
        layout,
        probe_radius,
        intra_cap,
        bucket_cap_factor: cap_on.then_some(factor),
        expected_max_features,
    };
    let mut index = MihIndex::new(params).map_err(|e| Error::parse(at, e.to_string()))?;

    let frame_count = rd.u32("frame count")? as usize;
    let bytes_per = total_bits / 8;
    for _ in 0..frame_count {
        let n = rd.u32("feature count")? as usize;
        let mut frame = Vec::with_capacity(n.min(rd.remaining() / bytes_per.max(1)));
        for _ in 0..n {
            frame.push(BinaryDescriptor::from_bytes(rd.take(bytes_per, "descriptor")?)?);
        }
        index.feature_count += n as u64;
        index.frames.push(frame);
    }

    for k in 0..m {
        let entries = rd.u32("entry count")?;
        for _ in 0..entries {
            let at = rd.offset();
            let key = rd.u32("entry key")?;
            let len = index.params.layout.lengths()[k];
            if len < 32 && key >> len != 0 {
                return Err(Error::parse(at, format!("key {key} wider than {len} bits")));
            }
            let saturated = rd.u8("saturation flag")? != 0;
            let n = rd.u32("reference count")? as usize;
            let mut refs = Vec::with_capacity(n.min(rd.remaining() / 8));
            for _ in 0..n {
                let at = rd.offset();
                let r = CandidateRef {
                    frame_id: rd.u32("frame id")?,
                    feature_id: rd.u32("feature id")?,
                };
                let valid = index
                    .frames
                    .get(r.frame_id as usize)
                    .is_some_and(|f| (r.feature_id as usize) < f.len());
                if !valid {
                    return Err(Error::parse(at, format!("dangling reference {r:?}")));
                }
                refs.push(r);
            }
            *index.tables[k].get_mut(key) = HashEntry { refs, saturated };
        }
    }
    rd.expect_end()?;
    Ok(index)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn build(params: MihParams, seed: u64) -> (MihIndex, Vec<BinaryDescriptor>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let bits = params.layout.total_bits();
        let mut idx = MihIndex::new(params).unwrap();
        let mut all = Vec::new();
        for _ in 0..6 {
            let frame: Vec<_> = (0..40)
                .map(|_| BinaryDescriptor::random(&mut rng, bits).unwrap())
                .collect();
            all.extend_from_slice(&frame);
            idx.insert_frame(&frame).unwrap();
        }
        (idx, all)
    }

    #[test]
    fn round_trip_reproduces_queries() {
        let layouts = [
            MihParams::default(),
            MihParams::without_caps(SubstringLayout::balanced(256, 24).unwrap(), 1),
            // 20-bit substrings use the sparse table representation
            MihParams::without_caps(SubstringLayout::balanced(160, 8).unwrap(), 0),
        ];
        for (i, params) in layouts.into_iter().enumerate() {
            let (idx, all) = build(params, i as u64);
            let mut bytes = Vec::new();
            save_snapshot(&idx, &mut bytes).unwrap();
            assert_eq!(&bytes[..4], b"MIH1");
            let back = load_snapshot(&bytes[..]).unwrap();
            assert_eq!(back.params(), idx.params());
            assert_eq!(back.candidate_stats(), idx.candidate_stats());
            let mut rng = ChaCha8Rng::seed_from_u64(99);
            for q in all.iter().take(60) {
                let mut noisy = *q;
                for _ in 0..8 {
                    noisy.flip_bit(rand::Rng::random_range(&mut rng, 0..q.len_bits()));
                }
                assert_eq!(
                    back.query_candidates(&noisy, |_| false),
                    idx.query_candidates(&noisy, |_| false)
                );
            }
            let mut again = Vec::new();
            save_snapshot(&back, &mut again).unwrap();
            assert_eq!(again, bytes);
        }
    }

    #[test]
    fn corrupt_snapshots_are_rejected() {
        let (idx, _) = build(MihParams::default(), 5);
        let mut bytes = Vec::new();
        save_snapshot(&idx, &mut bytes).unwrap();

        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(matches!(load_snapshot(&bad[..]), Err(Error::Parse { offset: 0, .. })));

        let truncated = &bytes[..bytes.len() - 3];
        assert!(matches!(load_snapshot(truncated), Err(Error::Parse { .. })));

        let mut trailing = bytes.clone();
        trailing.push(0);
        assert!(matches!(load_snapshot(&trailing[..]), Err(Error::Parse { .. })));

        assert!(matches!(load_snapshot(&[][..]), Err(Error::Parse { offset: 0, .. })));
    }
}
