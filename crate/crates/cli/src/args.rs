use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use hamloop_core::descriptor::{EarlyTermination, SubstringLayout, DEFAULT_BITS, DEFAULT_PARTIAL_THRESHOLD, DEFAULT_PREFIX_BITS};
use hamloop_core::evalharness::DEFAULT_NEIGHBOR_RADIUS;
use hamloop_core::lcd::{LcdConfig, DEFAULT_EXCLUSION_WINDOW};
use hamloop_core::mih_index::{
    MihParams, DEFAULT_BUCKET_CAP_FACTOR, DEFAULT_EXPECTED_FEATURES, DEFAULT_INTRA_CAP, DEFAULT_TABLES,
};
use hamloop_core::probmodel::{DistanceModel, SearchGrid, SelectionMode, Spread, DEFAULT_MEMORY_BUDGET};
use hamloop_core::similarity::{SimilarityParams, DEFAULT_D0, DEFAULT_IDF_MIN_FRAMES, DEFAULT_SIGMA};
use hamloop_core::sparsematch::{MatchParams, DEFAULT_MATCH_TABLES};

use crate::CliError;

#[derive(Parser, Debug)]
#[command(
    name = "hamloop",
    version,
    about = "Multi-index hashing toolkit for binary descriptors",
    arg_required_else_help = true,
    args_override_self = true
)]
pub struct Cli {
    /// Worker threads; 0 uses every core. Results do not depend on this.
    #[arg(long, global = true, default_value_t = 0)]
    pub threads: usize,

    /// Seed for every stochastic step.
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,

    /// TOML file supplying flag values; flags given on the command line win.
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Tabulate accuracy, complexity and table overhead over (m, r) and recommend a pair.
    AnalyzeParams(AnalyzeArgs),
    /// Run loop-closure detection over a descriptor dump.
    Detect(DetectArgs),
    /// Match the features of two frames.
    Match(MatchArgs),
    /// Precision-recall curve of detection scores against ground truth.
    Eval(EvalArgs),
    /// Write a synthetic descriptor dump with planted revisits.
    Synth(SynthArgs),
    /// Recall probability of one (r, m, d) configuration.
    Probe(ProbeArgs),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum ModeArg {
    Online,
    Offline,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum SpreadArg {
    StdDev,
    Variance,
}

#[derive(Args, Debug)]
pub struct AnalyzeArgs {
    /// Minimum accuracy R a recommendation must reach.
    #[arg(long, default_value_t = 0.8)]
    pub min_accuracy: f64,
    /// online: tables must fit the memory budget; offline: only complexity counts.
    #[arg(long, value_enum, default_value_t = ModeArg::Online)]
    pub mode: ModeArg,
    /// Hash-entry budget in online mode.
    #[arg(long, default_value_t = DEFAULT_MEMORY_BUDGET)]
    pub memory_budget: u128,
    #[arg(long, default_value_t = 3)]
    pub max_radius: u32,
    #[arg(long, default_value_t = 4)]
    pub min_tables: u32,
    #[arg(long, default_value_t = 32)]
    pub max_tables: u32,
    #[arg(long, default_value_t = 32.0)]
    pub inlier_mean: f64,
    #[arg(long, default_value_t = 10.0)]
    pub inlier_spread: f64,
    #[arg(long, default_value_t = 128.0)]
    pub outlier_mean: f64,
    #[arg(long, default_value_t = 20.0)]
    pub outlier_spread: f64,
    /// Whether the spreads are standard deviations or variances.
    #[arg(long, value_enum, default_value_t = SpreadArg::StdDev)]
    pub spread: SpreadArg,
    /// Descriptor length in bits.
    #[arg(long, default_value_t = DEFAULT_BITS as u32)]
    pub bits: u32,
    /// Grid CSV destination; `-` is standard output.
    #[arg(long, default_value = "-")]
    pub out: PathBuf,
}

impl AnalyzeArgs {
    pub fn model(&self) -> DistanceModel {
        DistanceModel {
            inlier_mean: self.inlier_mean,
            inlier_spread: self.inlier_spread,
            outlier_mean: self.outlier_mean,
            outlier_spread: self.outlier_spread,
            spread: match self.spread {
                SpreadArg::StdDev => Spread::StdDev,
                SpreadArg::Variance => Spread::Variance,
            },
            total_bits: self.bits,
        }
    }

    pub fn grid(&self) -> SearchGrid {
        SearchGrid {
            max_radius: self.max_radius,
            min_tables: self.min_tables,
            max_tables: self.max_tables,
        }
    }

    pub fn selection(&self) -> SelectionMode {
        match self.mode {
            ModeArg::Online => SelectionMode::Online {
                memory_budget: self.memory_budget,
            },
            ModeArg::Offline => SelectionMode::Offline,
        }
    }
}

#[derive(Args, Debug, Clone)]
pub struct IndexArgs {
    /// Number of hash tables (substrings per descriptor).
    #[arg(long, default_value_t = DEFAULT_TABLES)]
    pub tables: usize,
    /// Multi-probe radius per substring.
    #[arg(long, default_value_t = 0)]
    pub probe_radius: u32,
    /// References one frame may place in one entry; 0 disables the cap.
    #[arg(long, default_value_t = DEFAULT_INTRA_CAP)]
    pub intra_cap: u32,
    /// Entry capacity factor over expected features / 2^bits; 0 disables the cap.
    #[arg(long, default_value_t = DEFAULT_BUCKET_CAP_FACTOR)]
    pub bucket_cap_factor: f64,
    /// Expected total feature count, used by the entry capacity.
    #[arg(long, default_value_t = DEFAULT_EXPECTED_FEATURES)]
    pub expected_features: u64,
}

impl IndexArgs {
    pub fn params(&self, bits: usize) -> Result<MihParams, CliError> {
        let layout = SubstringLayout::balanced(bits, self.tables).map_err(CliError::usage)?;
        let p = MihParams {
            layout,
            probe_radius: self.probe_radius,
            intra_cap: (self.intra_cap > 0).then_some(self.intra_cap),
            bucket_cap_factor: (self.bucket_cap_factor > 0.0).then_some(self.bucket_cap_factor),
            expected_max_features: self.expected_features,
        };
        p.validate().map_err(CliError::usage)?;
        Ok(p)
    }
}

#[derive(Args, Debug, Clone)]
pub struct SimilarityArgs {
    /// Bandwidth of the similarity kernel, in bits.
    #[arg(long, default_value_t = DEFAULT_SIGMA)]
    pub sigma: f64,
    /// Pairs farther apart than this never match.
    #[arg(long, default_value_t = DEFAULT_D0)]
    pub d0: u32,
    /// Below this many candidate frames the IDF factor is 1.
    #[arg(long, default_value_t = DEFAULT_IDF_MIN_FRAMES)]
    pub idf_min_frames: usize,
}

impl SimilarityArgs {
    pub fn params(&self) -> SimilarityParams {
        SimilarityParams {
            sigma: self.sigma,
            d0: self.d0,
            idf_min_frames: self.idf_min_frames,
        }
    }
}

#[derive(Args, Debug, Clone)]
pub struct EarlyTermArgs {
    /// Reject candidates from a prefix distance before the full comparison.
    #[arg(long, default_value_t = true, num_args = 0..=1, default_missing_value = "true", action = clap::ArgAction::Set)]
    pub early_termination: bool,
    /// Prefix length checked by early termination.
    #[arg(long, default_value_t = DEFAULT_PREFIX_BITS)]
    pub prefix_bits: usize,
    /// Prefix distance above which a candidate is rejected.
    #[arg(long, default_value_t = DEFAULT_PARTIAL_THRESHOLD)]
    pub partial_threshold: u32,
}

impl EarlyTermArgs {
    pub fn params(&self, bits: usize) -> Result<Option<EarlyTermination>, CliError> {
        if !self.early_termination {
            return Ok(None);
        }
        let et = EarlyTermination {
            prefix_bits: self.prefix_bits,
            partial_threshold: self.partial_threshold,
        };
        et.validate(bits).map_err(CliError::usage)?;
        Ok(Some(et))
    }
}

#[derive(Args, Debug)]
pub struct DetectArgs {
    /// Descriptor dump to process in frame order.
    #[arg(long, value_name = "FILE")]
    pub input: PathBuf,
    /// Per-frame CSV destination; `-` is standard output.
    #[arg(long, default_value = "-")]
    pub out: PathBuf,
    /// Also write every (query, candidate, score) triple here (off when absent).
    #[arg(long, value_name = "FILE")]
    pub dump_scores: Option<PathBuf>,
    /// The most recent frames barred from matching.
    #[arg(long, default_value_t = DEFAULT_EXCLUSION_WINDOW)]
    pub window: u32,
    /// Best score at which a frame counts as a loop closure.
    #[arg(long, default_value_t = 0.0)]
    pub threshold: f64,
    /// IDF weighting against features common to many frames.
    #[arg(long, default_value_t = true, num_args = 0..=1, default_missing_value = "true", action = clap::ArgAction::Set)]
    pub burstiness: bool,
    #[command(flatten)]
    pub index: IndexArgs,
    #[command(flatten)]
    pub similarity: SimilarityArgs,
    #[command(flatten)]
    pub early: EarlyTermArgs,
}

impl DetectArgs {
    pub fn config(&self, bits: usize) -> Result<LcdConfig, CliError> {
        let cfg = LcdConfig {
            index: self.index.params(bits)?,
            similarity: self.similarity.params(),
            exclusion_window: self.window,
            detection_threshold: self.threshold,
            burstiness: self.burstiness,
            early_termination: self.early.params(bits)?,
        };
        cfg.validate().map_err(CliError::usage)?;
        Ok(cfg)
    }
}

#[derive(Args, Debug)]
pub struct MatchArgs {
    /// Descriptor dump holding the indexed (train) frame.
    #[arg(long, value_name = "FILE")]
    pub frame_a: PathBuf,
    /// Descriptor dump holding the query frame.
    #[arg(long, value_name = "FILE")]
    pub frame_b: PathBuf,
    /// Position of the frame to use within the first dump.
    #[arg(long, default_value_t = 0)]
    pub index_a: usize,
    /// Position of the frame to use within the second dump.
    #[arg(long, default_value_t = 0)]
    pub index_b: usize,
    /// Exhaustive matching instead of the hash index.
    #[arg(long, default_value_t = false, num_args = 0..=1, default_missing_value = "true", action = clap::ArgAction::Set)]
    pub brute_force: bool,
    /// Keep only pairs that are each other's best match.
    #[arg(long, default_value_t = false, num_args = 0..=1, default_missing_value = "true", action = clap::ArgAction::Set)]
    pub mutual: bool,
    /// Number of hash tables over the first frame.
    #[arg(long, default_value_t = DEFAULT_MATCH_TABLES)]
    pub tables: usize,
    #[arg(long, default_value_t = 0)]
    pub probe_radius: u32,
    /// Matches farther apart than this are dropped.
    #[arg(long, default_value_t = DEFAULT_D0)]
    pub d0: u32,
    #[command(flatten)]
    pub early: EarlyTermArgs,
    /// Match CSV destination; `-` is standard output.
    #[arg(long, default_value = "-")]
    pub out: PathBuf,
}

impl MatchArgs {
    pub fn params(&self, bits: usize) -> Result<MatchParams, CliError> {
        SubstringLayout::balanced(bits, self.tables).map_err(CliError::usage)?;
        if self.d0 as usize > bits {
            return Err(CliError::Usage(format!("--d0 {} exceeds the descriptor length {bits}", self.d0)));
        }
        Ok(MatchParams {
            tables: self.tables,
            probe_radius: self.probe_radius,
            d0: self.d0,
            early_termination: self.early.params(bits)?,
            mutual: self.mutual,
        })
    }
}

#[derive(Args, Debug)]
pub struct EvalArgs {
    /// Scores CSV written by `detect` (per-frame output or score dump).
    #[arg(long, value_name = "FILE")]
    pub scores: PathBuf,
    /// Ground-truth CSV of `query_id,match_id` lines.
    #[arg(long, value_name = "FILE")]
    pub gt: PathBuf,
    /// Neighbour tolerance in frames on both ids.
    #[arg(long, default_value_t = DEFAULT_NEIGHBOR_RADIUS)]
    pub rho: u32,
    /// PR CSV destination; `-` is standard output.
    #[arg(long, default_value = "-")]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct SynthArgs {
    /// Descriptor dump destination.
    #[arg(long, value_name = "FILE")]
    pub out: PathBuf,
    /// Ground-truth CSV destination.
    #[arg(long, value_name = "FILE")]
    pub gt_out: PathBuf,
    #[arg(long, default_value_t = 50)]
    pub frames: u32,
    /// Features in each non-revisit frame.
    #[arg(long, default_value_t = 100)]
    pub features: usize,
    /// Number of planted revisits.
    #[arg(long, default_value_t = 5)]
    pub revisits: u32,
    /// Minimum frame gap between a revisit and its source.
    #[arg(long, default_value_t = DEFAULT_EXCLUSION_WINDOW + 1)]
    pub min_gap: u32,
    /// Bits flipped per planted descriptor: `inlier` draws from the inlier law, a number fixes it.
    #[arg(long, default_value = "inlier")]
    pub distance: String,
    #[arg(long, default_value_t = DEFAULT_BITS)]
    pub bits: usize,
    /// Extra `key=value` settings (comma or space separated) using the flag names above.
    #[arg(long, value_name = "PAIRS")]
    pub spec: Option<String>,
}

#[derive(Args, Debug)]
pub struct ProbeArgs {
    /// Probe radius.
    #[arg(long)]
    pub r: u32,
    /// Number of substrings.
    #[arg(long)]
    pub m: u32,
    /// Hamming distance of the pair.
    #[arg(long)]
    pub d: u32,
    /// Also report a Monte-Carlo estimate from this many trials (0 skips it).
    #[arg(long, default_value_t = 0)]
    pub trials: u64,
}
