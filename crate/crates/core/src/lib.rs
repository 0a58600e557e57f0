//! Approximate nearest-neighbour search for binary descriptors with
//! multi-index hashing, and the loop-closure machinery built on it.

mod binio;
pub mod descriptor;
pub mod error;
pub mod evalharness;
pub mod lcd;
pub mod mih_index;
pub mod probmodel;
pub mod similarity;
pub mod sparsematch;

pub use descriptor::{BinaryDescriptor, FrameFeatures, SubstringLayout};
pub use mih_index::{CandidateRef, MihIndex, MihParams};
pub use error::{Error, Result};
