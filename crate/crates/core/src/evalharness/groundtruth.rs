//! Loop-closure ground truth as `query_id,match_id` CSV lines.

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};

pub const DEFAULT_NEIGHBOR_RADIUS: u32 = 2;
const HEADER: &str = "query_id,match_id";

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct GroundTruth {
    /// `(query, match)` with `query > match`, sorted and deduplicated.
    pairs: Vec<(u32, u32)>,
    /// Detections within this many frames of a true pair, on both ids, count as correct.
    pub rho: u32,
}

impl GroundTruth {
    pub fn new(pairs: impl IntoIterator<Item = (u32, u32)>, rho: u32) -> Result<Self> {
        let set: BTreeSet<(u32, u32)> = pairs.into_iter().collect();
        if let Some(&(q, m)) = set.iter().find(|(q, m)| q <= m) {
            return Err(Error::invalid(format!(
                "ground-truth pair ({q}, {m}) does not point backward"
            )));
        }
        Ok(Self {
            pairs: set.into_iter().collect(),
            rho,
        })
    }

    pub fn pairs(&self) -> &[(u32, u32)] {
        &self.pairs
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    /// Distinct query ids.
    pub fn queries(&self) -> BTreeSet<u32> {
        self.pairs.iter().map(|p| p.0).collect()
    }

    /// True pairs that accept detection `query -> candidate` under the radius.
    pub fn supporting(&self, query: u32, candidate: u32) -> impl Iterator<Item = &(u32, u32)> + '_ {
        let rho = self.rho;
        self.pairs
            .iter()
            .filter(move |&&(q, m)| q.abs_diff(query) <= rho && m.abs_diff(candidate) <= rho)
    }

    pub fn accepts(&self, query: u32, candidate: u32) -> bool {
        self.supporting(query, candidate).next().is_some()
    }

    /// Fails if a pair names a frame id outside `known`.
    pub fn check_ids(&self, known: &BTreeSet<u32>) -> Result<()> {
        for &(q, m) in &self.pairs {
            for id in [q, m] {
                if !known.contains(&id) {
                    return Err(Error::invalid(format!("ground truth names unknown frame {id}")));
                }
            }
        }
        Ok(())
    }

    /// Parses CSV text; `#` starts a comment and an optional header row is skipped.
    pub fn parse(text: &str, rho: u32) -> Result<Self> {
        let mut pairs = Vec::new();
        let mut offset = 0u64;
        let mut first = true;
        for raw in text.split_inclusive('\n') {
            let at = offset;
            offset += raw.len() as u64;
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            if std::mem::take(&mut first) && line.replace(' ', "") == HEADER {
                continue;
            }
            let fields: Vec<&str> = line.split(',').map(str::trim).collect();
            let parsed = match fields.as_slice() {
                [q, m] => q.parse::<u32>().ok().zip(m.parse::<u32>().ok()),
                _ => None,
            };
            let Some((q, m)) = parsed else {
                return Err(Error::parse(at, format!("expected `query_id,match_id`, got `{line}`")));
            };
            if q <= m {
                return Err(Error::parse(at, format!("pair ({q}, {m}) does not point backward")));
            }
            pairs.push((q, m));
        }
        Self::new(pairs, rho)
    }

    pub fn load(path: impl AsRef<Path>, rho: u32) -> Result<Self> {
        Self::parse(&fs::read_to_string(path)?, rho)
    }

    pub fn to_csv(&self) -> String {
        let mut out = format!("{HEADER}\n");
        for (q, m) in &self.pairs {
            writeln!(out, "{q},{m}").unwrap();
        }
        out
    }
}
