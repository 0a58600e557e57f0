//! Seeded synthetic corpora: uniformly random frames with planted revisits
//! whose descriptors are noisy copies of an earlier frame.

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::groundtruth::{GroundTruth, DEFAULT_NEIGHBOR_RADIUS};
use crate::descriptor::{BinaryDescriptor, FrameFeatures, SubstringLayout, DEFAULT_BITS};
use crate::error::{Error, Result};
use crate::probmodel::{distance_pmfs, DistanceModel};

/// How the flipped bits of a perturbation are positioned.
#[derive(Clone, Debug, PartialEq, Eq, Default)]
pub enum ErrorPlacement {
    /// `d` distinct positions chosen uniformly.
    #[default]
    UniformBits,
    /// Each error picks a substring uniformly and independently, then lands on a
    /// distinct bit inside it; assignments that overfill a substring are redrawn.
    BallsIntoBins(SubstringLayout),
}

const MAX_PLACEMENT_ATTEMPTS: u32 = 100_000;

/// Flips exactly `errors` bits of `d`.
pub fn perturb<R: Rng + ?Sized>(
    d: &BinaryDescriptor,
    errors: u32,
    placement: &ErrorPlacement,
    rng: &mut R,
) -> Result<BinaryDescriptor> {
    let bits = d.len_bits();
    if errors as usize > bits {
        return Err(Error::invalid(format!("cannot flip {errors} of {bits} bits")));
    }
    let mut out = *d;
    match placement {
        ErrorPlacement::UniformBits => {
            for i in sample(rng, bits, errors as usize) {
                out.flip_bit(i);
            }
        }
        ErrorPlacement::BallsIntoBins(layout) => {
            layout.check_descriptor(d)?;
            let lengths = layout.lengths();
            let mut counts = vec![0u32; lengths.len()];
            let mut attempts = 0u32;
            loop {
                attempts += 1;
                if attempts > MAX_PLACEMENT_ATTEMPTS {
                    return Err(Error::invalid(format!(
                        "{errors} errors almost never fit the substring layout"
                    )));
                }
                counts.iter_mut().for_each(|c| *c = 0);
                for _ in 0..errors {
                    counts[rng.random_range(0..lengths.len())] += 1;
                }
                if counts.iter().zip(lengths).all(|(c, l)| c <= l) {
                    break;
                }
            }
            for ((&c, &len), &off) in counts.iter().zip(lengths).zip(layout.offsets()) {
                for i in sample(rng, len as usize, c as usize) {
                    out.flip_bit(off as usize + i);
                }
            }
        }
    }
    Ok(out)
}

/// Number of flipped bits applied to each planted descriptor.
#[derive(Clone, Debug, PartialEq)]
pub enum DistanceLaw {
    /// Drawn from the model's discretized inlier pmf.
    Inlier(DistanceModel),
    Fixed(u32),
}

impl Default for DistanceLaw {
    fn default() -> Self {
        DistanceLaw::Inlier(DistanceModel::default())
    }
}

/// Which frames revisit which.
#[derive(Clone, Debug, PartialEq)]
pub enum Revisits {
    /// `count` revisit frames, each copying a frame at least `min_gap` positions earlier.
    Random { count: u32, min_gap: u32 },
    /// Explicit `(revisit, source)` positions.
    Explicit(Vec<(u32, u32)>),
}

#[derive(Clone, Debug, PartialEq)]
pub struct SynthSpec {
    pub frames: u32,
    pub features_per_frame: usize,
    pub bits: usize,
    pub revisits: Revisits,
    pub law: DistanceLaw,
    pub placement: ErrorPlacement,
    pub seed: u64,
}

impl Default for SynthSpec {
    fn default() -> Self {
        Self {
            frames: 50,
            features_per_frame: 100,
            bits: DEFAULT_BITS,
            revisits: Revisits::Random { count: 5, min_gap: 31 },
            law: DistanceLaw::default(),
            placement: ErrorPlacement::UniformBits,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SynthCorpus {
    /// Frame ids equal positions.
    pub frames: Vec<FrameFeatures>,
    pub ground_truth: GroundTruth,
    /// Applied distance for each planted descriptor, in generation order.
    pub planted_distances: Vec<u32>,
}

fn choose_revisits(spec: &SynthSpec, rng: &mut ChaCha8Rng) -> Result<Vec<(u32, u32)>> {
    match &spec.revisits {
        Revisits::Explicit(pairs) => {
            for &(q, s) in pairs {
                if q >= spec.frames || s >= q {
                    return Err(Error::invalid(format!(
                        "revisit ({q}, {s}) must satisfy source < revisit < {}",
                        spec.frames
                    )));
                }
            }
            let mut v = pairs.clone();
            v.sort_unstable();
            if v.windows(2).any(|w| w[0].0 == w[1].0) {
                return Err(Error::invalid("a frame can revisit only one source"));
            }
            Ok(v)
        }
        &Revisits::Random { count, min_gap } => {
            let min_gap = min_gap.max(1);
            let eligible = spec.frames.saturating_sub(min_gap);
            if count > eligible {
                return Err(Error::invalid(format!(
                    "{count} revisits need at least {} frames",
                    count + min_gap
                )));
            }
            let mut queries: Vec<u32> = sample(rng, eligible as usize, count as usize)
                .into_iter()
                .map(|i| i as u32 + min_gap)
                .collect();
            queries.sort_unstable();
            let mut out = Vec::with_capacity(queries.len());
            for &q in &queries {
                let sources: Vec<u32> = (0..=q - min_gap).filter(|s| queries.binary_search(s).is_err()).collect();
                if sources.is_empty() {
                    return Err(Error::invalid(format!("no source frame available for revisit {q}")));
                }
                out.push((q, sources[rng.random_range(0..sources.len())]));
            }
            Ok(out)
        }
    }
}

pub fn synth_corpus(spec: &SynthSpec) -> Result<SynthCorpus> {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let revisits = choose_revisits(spec, &mut rng)?;
    let sampler = match &spec.law {
        DistanceLaw::Inlier(model) => {
            if model.total_bits as usize != spec.bits {
                return Err(Error::invalid(format!(
                    "distance model covers {} bits, corpus uses {}",
                    model.total_bits, spec.bits
                )));
            }
            let (inlier, _) = distance_pmfs(model)?;
            Some(WeightedIndex::new(&inlier).map_err(|e| Error::invalid(e.to_string()))?)
        }
        DistanceLaw::Fixed(d) => {
            if *d as usize > spec.bits {
                return Err(Error::invalid(format!("fixed distance {d} exceeds {} bits", spec.bits)));
            }
            None
        }
    };
    let mut frames: Vec<FrameFeatures> = Vec::with_capacity(spec.frames as usize);
    let mut planted_distances = Vec::new();
    let mut next_revisit = revisits.iter().peekable();
    for id in 0..spec.frames {
        let descriptors = match next_revisit.next_if(|r| r.0 == id) {
            Some(&(_, src)) => frames[src as usize]
                .descriptors
                .iter()
                .map(|d| {
                    let errors = match (&sampler, &spec.law) {
                        (Some(w), _) => w.sample(&mut rng) as u32,
                        (None, DistanceLaw::Fixed(d)) => *d,
                        (None, _) => unreachable!(),
                    };
                    planted_distances.push(errors);
                    perturb(d, errors, &spec.placement, &mut rng)
                })
                .collect::<Result<Vec<_>>>()?,
            None => (0..spec.features_per_frame)
                .map(|_| BinaryDescriptor::random(&mut rng, spec.bits))
                .collect::<Result<Vec<_>>>()?,
        };
        frames.push(FrameFeatures::new(id, descriptors));
    }
    Ok(SynthCorpus {
        frames,
        ground_truth: GroundTruth::new(revisits, DEFAULT_NEIGHBOR_RADIUS)?,
        planted_distances,
    })
}
