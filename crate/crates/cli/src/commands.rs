use std::fmt::Write as _;
use std::fs::{self, File};
use std::io::{self, BufWriter, Write};
use std::path::Path;
use std::time::Instant;

use hamloop_core::descriptor::{FrameFeatures, MAX_BITS};
use hamloop_core::evalharness::{
    detections_from_matrix, load_descriptors, pr_curve, save_descriptors, synth_corpus, DescriptorSet, Detection,
    DistanceLaw, GroundTruth, Revisits, SynthSpec,
};
use hamloop_core::lcd::run_sequence;
use hamloop_core::probmodel::{
    analyze_grid, minimal_tables_per_radius, p_recall, p_recall_mc, select_from_rows, DistanceModel,
    MIN_MC_TRIALS,
};
use hamloop_core::sparsematch::{match_frames, match_frames_bruteforce};

use crate::args::{AnalyzeArgs, DetectArgs, EvalArgs, MatchArgs, ProbeArgs, SynthArgs};
use crate::CliError;

fn output(path: &Path) -> Result<Box<dyn Write>, CliError> {
    if path.as_os_str() == "-" {
        return Ok(Box::new(BufWriter::new(io::stdout().lock())));
    }
    let f = File::create(path).map_err(|e| CliError::data(path, e))?;
    Ok(Box::new(BufWriter::new(f)))
}

fn write_all(path: &Path, text: &str) -> Result<(), CliError> {
    let mut out = output(path)?;
    out.write_all(text.as_bytes())
        .and_then(|_| out.flush())
        .map_err(|e| CliError::data(path, e))
}

fn load(path: &Path) -> Result<DescriptorSet, CliError> {
    load_descriptors(path).map_err(|e| CliError::data(path, e))
}

pub fn analyze(a: &AnalyzeArgs) -> Result<(), CliError> {
    let model = a.model();
    let rows = analyze_grid(&model, &a.grid()).map_err(CliError::usage)?;
    let mut csv = String::from("r,m,R,E,E_fixed\n");
    for row in &rows {
        writeln!(csv, "{},{},{},{},{}", row.r, row.m, row.accuracy, row.complexity, row.fixed_overhead).unwrap();
    }
    write_all(&a.out, &csv)?;
    for row in minimal_tables_per_radius(&rows, a.min_accuracy) {
        eprintln!(
            "minimal for r={}: (m, r) = ({}, {}) R={:.4} E={:.3e} E_fixed={}",
            row.r, row.m, row.r, row.accuracy, row.complexity, row.fixed_overhead
        );
    }
    match select_from_rows(&rows, a.min_accuracy, a.selection()) {
        Ok(best) => {
            eprintln!(
                "recommended (m, r) = ({}, {}) R={:.4} E={:.3e} E_fixed={}",
                best.m, best.r, best.accuracy, best.complexity, best.fixed_overhead
            );
            Ok(())
        }
        Err(e) => Err(CliError::usage(e)),
    }
}

pub fn detect(a: &DetectArgs) -> Result<(), CliError> {
    let set = load(&a.input)?;
    let cfg = a.config(set.bits)?;
    let report = run_sequence(&set.frames, &cfg).map_err(|e| CliError::data(&a.input, e))?;

    let mut csv = String::from("frame_id,best_candidate,best_score,t_q_us\n");
    for r in &report.records {
        let cand = r.best_candidate.map(|c| c.to_string()).unwrap_or_default();
        writeln!(csv, "{},{},{},{}", r.frame_id, cand, r.best_score, r.query_us).unwrap();
    }
    write_all(&a.out, &csv)?;

    if let Some(path) = &a.dump_scores {
        let mut dump = String::from("query_id,candidate_id,score\n");
        for r in &report.records {
            for e in &r.scores.entries {
                writeln!(dump, "{},{},{}", r.frame_id, e.frame_id, e.score).unwrap();
            }
        }
        write_all(path, &dump)?;
    }
    let t = &report.timing;
    eprintln!(
        "frames={} skipped={} loops={} candidates={} early_rejections={} \
         mean_t_q_us={:.1} p50_t_q_us={} p95_t_q_us={} max_t_q_us={} mean_ingest_us={:.1}",
        report.records.len(),
        report.skipped.len(),
        report.records.iter().filter(|r| r.is_loop).count(),
        report.candidates_examined,
        report.early_rejections,
        t.mean_query_us,
        t.p50_query_us,
        t.p95_query_us,
        t.max_query_us,
        t.mean_ingest_us
    );
    Ok(())
}

fn pick_frame(set: DescriptorSet, position: usize, path: &Path) -> Result<FrameFeatures, CliError> {
    let count = set.frames.len();
    set.frames.into_iter().nth(position).ok_or_else(|| {
        CliError::Data(format!("{}: no frame at position {position} ({count} frames)", path.display()))
    })
}

pub fn match_cmd(a: &MatchArgs) -> Result<(), CliError> {
    let set_a = load(&a.frame_a)?;
    let set_b = load(&a.frame_b)?;
    if set_a.bits != set_b.bits {
        return Err(CliError::Data(format!(
            "{} holds {}-bit descriptors, {} holds {}-bit",
            a.frame_a.display(),
            set_a.bits,
            a.frame_b.display(),
            set_b.bits
        )));
    }
    let params = a.params(set_a.bits)?;
    let fa = pick_frame(set_a, a.index_a, &a.frame_a)?;
    let fb = pick_frame(set_b, a.index_b, &a.frame_b)?;
    let start = Instant::now();
    let res = if a.brute_force {
        match_frames_bruteforce(&fa.descriptors, &fb.descriptors, &params)
    } else {
        match_frames(&fa.descriptors, &fb.descriptors, &params)
    }
    .map_err(|e| CliError::Data(format!("{} vs {}: {e}", a.frame_a.display(), a.frame_b.display())))?;
    let elapsed = start.elapsed().as_micros();

    let mut csv = String::from("i,j,d\n");
    for m in &res.matches {
        writeln!(csv, "{},{},{}", m.train, m.query, m.distance).unwrap();
    }
    write_all(&a.out, &csv)?;
    eprintln!(
        "matches={} candidates={} early_rejections={} full_evaluations={} elapsed_us={elapsed}",
        res.matches.len(),
        res.candidates_examined,
        res.early_rejections,
        res.full_evaluations
    );
    Ok(())
}

/// Reads either the per-frame `detect` output or its score dump.
fn read_scores(path: &Path) -> Result<Vec<Detection>, CliError> {
    let text = fs::read_to_string(path).map_err(|e| CliError::data(path, e))?;
    let bad = |line: usize, msg: &str| CliError::Data(format!("{}: line {line}: {msg}", path.display()));
    let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
    let (_, header) = lines.next().ok_or_else(|| bad(1, "empty scores file"))?;
    let per_frame = match header.trim() {
        h if h.starts_with("frame_id,best_candidate,best_score") => true,
        "query_id,candidate_id,score" => false,
        _ => return Err(bad(1, "unrecognized header")),
    };
    let mut out = Vec::new();
    for (i, line) in lines {
        let f: Vec<&str> = line.split(',').map(str::trim).collect();
        if f.len() < 3 {
            return Err(bad(i + 1, "expected at least three fields"));
        }
        if per_frame && f[1].is_empty() {
            continue;
        }
        let query = f[0].parse().map_err(|_| bad(i + 1, "bad query id"))?;
        let candidate = f[1].parse().map_err(|_| bad(i + 1, "bad candidate id"))?;
        let score: f64 = f[2].parse().map_err(|_| bad(i + 1, "bad score"))?;
        out.push(Detection { query, candidate, score });
    }
    Ok(if per_frame { out } else { detections_from_matrix(&out) })
}

pub fn eval(a: &EvalArgs) -> Result<(), CliError> {
    let detections = read_scores(&a.scores)?;
    let gt = GroundTruth::load(&a.gt, a.rho).map_err(|e| CliError::data(&a.gt, e))?;
    let curve = pr_curve(&detections, &gt).map_err(|e| CliError::data(&a.gt, e))?;
    write_all(&a.out, &curve.to_csv())?;
    eprintln!(
        "recall_at_full_precision={} gt_queries={} detections={} points={}",
        curve.recall_at_full_precision,
        curve.gt_queries,
        detections.len(),
        curve.points.len()
    );
    Ok(())
}

pub fn synth(a: &SynthArgs, seed: u64) -> Result<(), CliError> {
    let law = match a.distance.trim() {
        "inlier" => DistanceLaw::Inlier(DistanceModel {
            total_bits: a.bits as u32,
            ..DistanceModel::default()
        }),
        s => DistanceLaw::Fixed(s.parse().map_err(|_| {
            CliError::Usage(format!("--distance must be `inlier` or a bit count, got `{s}`"))
        })?),
    };
    let spec = SynthSpec {
        frames: a.frames,
        features_per_frame: a.features,
        bits: a.bits,
        revisits: Revisits::Random {
            count: a.revisits,
            min_gap: a.min_gap,
        },
        law,
        seed,
        ..SynthSpec::default()
    };
    let corpus = synth_corpus(&spec).map_err(CliError::usage)?;
    save_descriptors(&a.out, a.bits, &corpus.frames).map_err(|e| CliError::data(&a.out, e))?;
    fs::write(&a.gt_out, corpus.ground_truth.to_csv()).map_err(|e| CliError::data(&a.gt_out, e))?;
    eprintln!(
        "frames={} revisits={} planted_descriptors={} seed={seed}",
        corpus.frames.len(),
        corpus.ground_truth.pairs().len(),
        corpus.planted_distances.len()
    );
    Ok(())
}

pub fn probe(a: &ProbeArgs, seed: u64) -> Result<(), CliError> {
    if a.m == 0 || a.m as usize > MAX_BITS || a.d as usize > MAX_BITS {
        return Err(CliError::Usage(format!(
            "need 1 <= m <= {MAX_BITS} and d <= {MAX_BITS}, got m={} d={}",
            a.m, a.d
        )));
    }
    println!("{}", p_recall(a.r, a.m, a.d));
    if a.trials > 0 {
        if a.trials < MIN_MC_TRIALS {
            return Err(CliError::Usage(format!("--trials must be 0 or at least {MIN_MC_TRIALS}")));
        }
        let mc = p_recall_mc(a.r, a.m, a.d, a.trials, seed).map_err(CliError::usage)?;
        eprintln!(
            "monte-carlo {} (standard error {:.2e}, {} trials, seed {seed})",
            mc.estimate, mc.std_error, mc.trials
        );
    }
    Ok(())
}
