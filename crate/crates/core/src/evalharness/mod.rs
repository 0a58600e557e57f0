//! Descriptor dumps, ground truth, synthetic corpora and precision-recall evaluation.

mod format;
mod groundtruth;
mod pr;
mod synth;

pub use format::{decode_descriptors, encode_descriptors, load_descriptors, save_descriptors, DescriptorSet, DESCRIPTOR_MAGIC};
pub use groundtruth::{GroundTruth, DEFAULT_NEIGHBOR_RADIUS};
pub use pr::{detections_from_matrix, detections_from_records, pr_curve, Detection, PrCurve, PrPoint};
pub use synth::{perturb, synth_corpus, DistanceLaw, ErrorPlacement, Revisits, SynthCorpus, SynthSpec};
