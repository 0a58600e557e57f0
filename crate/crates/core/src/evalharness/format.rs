//! Descriptor dump format (all integers little-endian):
//!
//! ```text
//! "MLD1"  u32 version  u32 bits  u32 frame_count
//! per frame: u32 frame_id, u32 feature_count, feature_count x (bits / 8) bytes
//! ```
//!
//! Frame ids are strictly increasing and the file ends exactly after the last frame.

use std::fs;
use std::path::Path;

use crate::binio::{put_u32, ByteReader};
use crate::descriptor::{BinaryDescriptor, FrameFeatures, MAX_BITS};
use crate::error::{Error, Result};

pub const DESCRIPTOR_MAGIC: &[u8; 4] = b"MLD1";
const VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DescriptorSet {
    pub bits: usize,
    pub frames: Vec<FrameFeatures>,
}

fn check_bits(bits: usize) -> Result<()> {
    if bits == 0 || bits % 8 != 0 || bits > MAX_BITS {
        return Err(Error::invalid(format!(
            "descriptor length {bits} must be a positive multiple of 8 up to {MAX_BITS}"
        )));
    }
    Ok(())
}

pub fn encode_descriptors(bits: usize, frames: &[FrameFeatures]) -> Result<Vec<u8>> {
    check_bits(bits)?;
    let mut out = Vec::new();
    out.extend_from_slice(DESCRIPTOR_MAGIC);
    put_u32(&mut out, VERSION);
    put_u32(&mut out, bits as u32);
    put_u32(&mut out, frames.len() as u32);
    let mut last = None;
    for f in frames {
        if last.is_some_and(|l| f.frame_id <= l) {
            return Err(Error::invalid(format!("frame id {} is not increasing", f.frame_id)));
        }
        last = Some(f.frame_id);
        put_u32(&mut out, f.frame_id);
        put_u32(&mut out, f.len() as u32);
        for d in &f.descriptors {
            if d.len_bits() != bits {
                return Err(Error::LengthMismatch {
                    expected: bits,
                    found: d.len_bits(),
                });
            }
            d.write_bytes(&mut out);
        }
    }
    Ok(out)
}

pub fn decode_descriptors(data: &[u8]) -> Result<DescriptorSet> {
    let mut rd = ByteReader::new(data);
    if rd.take(4, "magic")? != DESCRIPTOR_MAGIC {
        return Err(Error::parse(0, "bad magic, expected MLD1"));
    }
    let at = rd.offset();
    let version = rd.u32("version")?;
    if version != VERSION {
        return Err(Error::parse(at, format!("unsupported version {version}")));
    }
    let at = rd.offset();
    let bits = rd.u32("descriptor length")? as usize;
    check_bits(bits).map_err(|e| Error::parse(at, e.to_string()))?;
    let bytes_per = bits / 8;
    let frame_count = rd.u32("frame count")? as usize;
    let mut frames = Vec::with_capacity(frame_count.min(rd.remaining() / 8));
    let mut last: Option<u32> = None;
    for _ in 0..frame_count {
        let at = rd.offset();
        let frame_id = rd.u32("frame id")?;
        if let Some(l) = last.filter(|&l| frame_id <= l) {
            return Err(Error::parse(at, format!("frame id {frame_id} does not follow {l}")));
        }
        last = Some(frame_id);
        let n = rd.u32("feature count")? as usize;
        let at = rd.offset();
        if n.checked_mul(bytes_per).is_none_or(|b| b > rd.remaining()) {
            return Err(Error::parse(
                at,
                format!("frame {frame_id} declares {n} descriptors, {} bytes left", rd.remaining()),
            ));
        }
        let descriptors = (0..n)
            .map(|_| BinaryDescriptor::from_bytes(rd.take(bytes_per, "descriptor")?))
            .collect::<Result<Vec<_>>>()?;
        frames.push(FrameFeatures::new(frame_id, descriptors));
    }
    rd.expect_end()?;
    Ok(DescriptorSet { bits, frames })
}

pub fn load_descriptors(path: impl AsRef<Path>) -> Result<DescriptorSet> {
    decode_descriptors(&fs::read(path)?)
}

pub fn save_descriptors(path: impl AsRef<Path>, bits: usize, frames: &[FrameFeatures]) -> Result<()> {
    fs::write(path, encode_descriptors(bits, frames)?)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn single_zero_descriptor_layout() {
        let frames = vec![FrameFeatures::new(0, vec![BinaryDescriptor::zeros(256).unwrap()])];
        let bytes = encode_descriptors(256, &frames).unwrap();
        assert_eq!(bytes.len(), 4 + 4 + 4 + 4 + (4 + 4 + 32));
        assert_eq!(&bytes[..4], b"MLD1");
        assert_eq!(decode_descriptors(&bytes).unwrap().frames, frames);
    }

    #[test]
    fn random_dump_round_trips_through_disk() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let frames: Vec<_> = (0..100)
            .map(|i| {
                let n = (i * 7) % 13;
                FrameFeatures::new(
                    i * 3,
                    (0..n).map(|_| BinaryDescriptor::random(&mut rng, 256).unwrap()).collect(),
                )
            })
            .collect();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("dump.mld");
        save_descriptors(&path, 256, &frames).unwrap();
        let raw = fs::read(&path).unwrap();
        let back = load_descriptors(&path).unwrap();
        assert_eq!(back.frames, frames);
        assert_eq!(encode_descriptors(back.bits, &back.frames).unwrap(), raw);
    }

    #[test]
    fn malformed_inputs_report_offsets() {
        assert!(matches!(decode_descriptors(&[]), Err(Error::Parse { offset: 0, .. })));
        let frames = vec![
            FrameFeatures::new(4, vec![BinaryDescriptor::zeros(64).unwrap()]),
            FrameFeatures::new(9, vec![BinaryDescriptor::ones(64).unwrap(); 2]),
        ];
        let bytes = encode_descriptors(64, &frames).unwrap();

        let mut v = bytes.clone();
        v[4] = 2;
        assert!(matches!(decode_descriptors(&v), Err(Error::Parse { offset: 4, .. })));

        let mut v = bytes.clone();
        v[8] = 12;
        assert!(matches!(decode_descriptors(&v), Err(Error::Parse { offset: 8, .. })));

        // second frame id rewritten to 4
        let mut v = bytes.clone();
        v[32..36].copy_from_slice(&4u32.to_le_bytes());
        assert!(matches!(decode_descriptors(&v), Err(Error::Parse { offset: 32, .. })));

        let truncated = &bytes[..bytes.len() - 1];
        assert!(matches!(decode_descriptors(truncated), Err(Error::Parse { offset: 40, .. })));

        let mut v = bytes.clone();
        v.push(0);
        assert!(matches!(decode_descriptors(&v), Err(Error::Parse { .. })));

        assert!(encode_descriptors(64, &[frames[1].clone(), frames[0].clone()]).is_err());
        assert!(encode_descriptors(128, &frames).is_err());
    }
}
