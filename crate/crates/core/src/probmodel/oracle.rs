//! Independent routes to the recall probability: exhaustive enumeration,
//! a bin-by-bin dynamic program, Monte Carlo, and the exact-position model
//! for arbitrary substring layouts.

use num_bigint::BigUint;
use num_traits::{One, Zero};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::occupancy::{binomial, pow, ratio_to_f64};
use crate::error::{Error, Result};

/// Largest `m^d` visited assignment by assignment.
pub const MAX_ENUMERATED_ASSIGNMENTS: u64 = 10_000_000;
/// Largest number of occupancy vectors visited by [`enumerate_compositions`].
pub const MAX_ENUMERATED_COMPOSITIONS: u64 = 10_000_000;
/// Size bounds for the dynamic program.
pub const MAX_DP_BINS: u32 = 64;
pub const MAX_DP_BALLS: u32 = 1024;

fn check_bins(m: u32) -> Result<()> {
    if m == 0 {
        return Err(Error::invalid("need at least one bin"));
    }
    Ok(())
}

/// Walks every one of the `m^d` assignments; returns the count whose minimum occupancy is `<= r`.
pub fn enumerate_assignments(r: u32, m: u32, d: u32) -> Result<u64> {
    check_bins(m)?;
    let total = (m as u64).checked_pow(d).filter(|&t| t <= MAX_ENUMERATED_ASSIGNMENTS);
    if total.is_none() {
        return Err(Error::Capacity(format!(
            "{m}^{d} assignments exceed the enumeration limit"
        )));
    }
    let mut balls = vec![0u32; d as usize];
    let mut occ = vec![0u32; m as usize];
    occ[0] = d;
    let mut hits = 0u64;
    loop {
        hits += (occ.iter().min().copied().unwrap_or(0) <= r) as u64;
        let mut i = 0;
        loop {
            if i == d as usize {
                return Ok(hits);
            }
            occ[balls[i] as usize] -= 1;
            balls[i] += 1;
            if balls[i] == m {
                balls[i] = 0;
                occ[0] += 1;
                i += 1;
            } else {
                occ[balls[i] as usize] += 1;
                break;
            }
        }
    }
}

/// Walks every occupancy vector `(c_1, .., c_m)` summing to `d`, weighting each
/// by its multinomial coefficient. Returns the exact count out of `m^d`.
pub fn enumerate_compositions(r: u32, m: u32, d: u32) -> Result<BigUint> {
    check_bins(m)?;
    let n_compositions = binomial((d + m - 1) as u64, (m - 1) as u64);
    if n_compositions > BigUint::from(MAX_ENUMERATED_COMPOSITIONS) {
        return Err(Error::Capacity(format!(
            "{n_compositions} occupancy vectors exceed the enumeration limit"
        )));
    }
    let mut hits = BigUint::zero();
    let mut occ = vec![0u32; m as usize];
    compose(&mut occ, 0, d, r, &mut hits, d);
    Ok(hits)
}

fn compose(occ: &mut [u32], idx: usize, left: u32, r: u32, hits: &mut BigUint, d: u32) {
    if idx + 1 == occ.len() {
        occ[idx] = left;
        if occ.iter().any(|&c| c <= r) {
            let mut w = BigUint::one();
            let mut remaining = d;
            for &c in occ.iter() {
                w *= binomial(remaining as u64, c as u64);
                remaining -= c;
            }
            *hits += w;
        }
        return;
    }
    for c in 0..=left {
        occ[idx] = c;
        compose(occ, idx + 1, left - c, r, hits, d);
    }
}

/// Fills bins one at a time: `ways[b]` counts arrangements of `b` balls into the
/// bins placed so far with every bin above `r`. Returns the complement count.
pub fn dp_count(r: u32, m: u32, d: u32) -> Result<BigUint> {
    check_bins(m)?;
    if m > MAX_DP_BINS || d > MAX_DP_BALLS {
        return Err(Error::Capacity(format!(
            "dynamic program limited to {MAX_DP_BINS} bins and {MAX_DP_BALLS} balls"
        )));
    }
    let d = d as usize;
    let mut ways = vec![BigUint::zero(); d + 1];
    ways[0] = BigUint::one();
    for _ in 0..m {
        let mut next = vec![BigUint::zero(); d + 1];
        for (placed, w) in ways.iter().enumerate() {
            if w.is_zero() {
                continue;
            }
            for c in (r as usize + 1)..=(d - placed) {
                next[placed + c] += w * binomial((d - placed) as u64, c as u64);
            }
        }
        ways = next;
    }
    Ok(pow(m as u64, d as u64) - &ways[d])
}

/// Above this many assignments `p_recall_oracle` switches to the dynamic program.
const ORACLE_ENUMERATION_LIMIT: u64 = 100_000;

/// Exact recall probability by a route independent of the inclusion-exclusion
/// recursion: assignment enumeration when `m^d` is small, the dynamic program otherwise.
pub fn p_recall_oracle(r: u32, m: u32, d: u32) -> Result<f64> {
    check_bins(m)?;
    let total = pow(m as u64, d as u64);
    if total <= BigUint::from(ORACLE_ENUMERATION_LIMIT) {
        let hits = enumerate_assignments(r, m, d)?;
        return Ok(hits as f64 / (m as f64).powi(d as i32));
    }
    Ok(ratio_to_f64(&dp_count(r, m, d)?, &total))
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct McEstimate {
    pub estimate: f64,
    pub std_error: f64,
    pub trials: u64,
}

pub const MIN_MC_TRIALS: u64 = 10_000;

/// Monte-Carlo estimate of the recall probability, deterministic per seed.
pub fn p_recall_mc(r: u32, m: u32, d: u32, trials: u64, seed: u64) -> Result<McEstimate> {
    check_bins(m)?;
    if trials < MIN_MC_TRIALS {
        return Err(Error::invalid(format!(
            "at least {MIN_MC_TRIALS} trials required, got {trials}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut occ = vec![0u32; m as usize];
    let mut hits = 0u64;
    for _ in 0..trials {
        occ.iter_mut().for_each(|c| *c = 0);
        for _ in 0..d {
            occ[rng.random_range(0..m as usize)] += 1;
        }
        hits += occ.iter().any(|&c| c <= r) as u64;
    }
    let p = hits as f64 / trials as f64;
    Ok(McEstimate {
        estimate: p,
        std_error: (p * (1.0 - p) / trials as f64).sqrt(),
        trials,
    })
}

/// Recall probability when exactly `d` distinct bit positions out of the layout's
/// total differ, all position sets equally likely. Substring `k` has
/// `lengths[k]` bits; the pair is recalled when some substring has at most `r`
/// differing bits.
pub fn p_recall_positions(lengths: &[u32], r: u32, d: u32) -> Result<f64> {
    if lengths.is_empty() {
        return Err(Error::invalid("layout needs at least one substring"));
    }
    let total_bits: u32 = lengths.iter().sum();
    if d > total_bits {
        return Err(Error::invalid(format!(
            "distance {d} exceeds descriptor length {total_bits}"
        )));
    }
    let d = d as usize;
    // ways[s]: position sets of size s over the substrings so far, each holding > r
    let mut ways = vec![BigUint::zero(); d + 1];
    ways[0] = BigUint::one();
    for &len in lengths {
        let mut next = vec![BigUint::zero(); d + 1];
        for (s, w) in ways.iter().enumerate() {
            if w.is_zero() {
                continue;
            }
            for c in (r as usize + 1)..=(len as usize).min(d - s) {
                next[s + c] += w * binomial(len as u64, c as u64);
            }
        }
        ways = next;
    }
    let all = binomial(total_bits as u64, d as u64);
    Ok(ratio_to_f64(&(&all - &ways[d]), &all))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn enumeration_examples() {
        assert_eq!(p_recall_oracle(0, 2, 2).unwrap(), 0.5);
        assert_eq!(p_recall_oracle(1, 3, 3).unwrap(), 1.0);
        assert_eq!(enumerate_assignments(1, 2, 4).unwrap(), 10);
        assert!(matches!(
            enumerate_assignments(0, 16, 32),
            Err(Error::Capacity(_))
        ));
    }

    #[test]
    fn routes_agree_on_small_grid() {
        for r in 0..=2 {
            for m in 1..=5 {
                for d in 0..=8 {
                    let a = enumerate_assignments(r, m, d).unwrap();
                    let c = enumerate_compositions(r, m, d).unwrap();
                    let p = dp_count(r, m, d).unwrap();
                    assert_eq!(BigUint::from(a), c, "r={r} m={m} d={d}");
                    assert_eq!(c, p, "r={r} m={m} d={d}");
                }
            }
        }
    }

    #[test]
    fn dp_route_for_sixteen_bins() {
        let p = p_recall_oracle(0, 16, 32).unwrap();
        assert!((p - super::super::p_recall_zero(16, 32)).abs() < 1e-12);
    }

    #[test]
    fn monte_carlo_is_seeded() {
        let a = p_recall_mc(0, 2, 2, 20_000, 9).unwrap();
        let b = p_recall_mc(0, 2, 2, 20_000, 9).unwrap();
        assert_eq!(a, b);
        assert!(p_recall_mc(0, 2, 2, 100, 9).is_err());
    }

    #[test]
    fn monte_carlo_within_three_sigma() {
        let cases = [(0, 2, 2, 0.5), (1, 2, 4, 0.625)];
        for (r, m, d, truth) in cases {
            let e = p_recall_mc(r, m, d, 1_000_000, 42).unwrap();
            assert!((e.estimate - truth).abs() <= 3.0 * e.std_error, "{e:?}");
        }
        let truth = p_recall_oracle(0, 16, 32).unwrap();
        let e = p_recall_mc(0, 16, 32, 1_000_000, 43).unwrap();
        assert!((e.estimate - truth).abs() <= 3.0 * e.std_error, "{e:?} vs {truth}");
    }

    #[test]
    fn position_model_small_cases() {
        // two 2-bit substrings, d = 2: 6 position sets, 2 of which put both in one substring
        assert!((p_recall_positions(&[2, 2], 0, 2).unwrap() - 2.0 / 6.0).abs() < 1e-15);
        assert_eq!(p_recall_positions(&[16; 16], 0, 15).unwrap(), 1.0);
        assert_eq!(p_recall_positions(&[4, 4], 0, 8).unwrap(), 0.0);
        assert!(p_recall_positions(&[4, 4], 0, 9).is_err());
    }
}
