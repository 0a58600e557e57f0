//! Exact balls-into-bins occupancy counts.
//!
//! A pair of descriptors at Hamming distance `d` is modelled as `d` balls
//! thrown independently and uniformly into `m` bins (substrings). The pair is
//! recalled by a radius-`r` probe when some bin holds at most `r` balls.

use std::collections::HashMap;
use std::sync::{Mutex, OnceLock};

use num_bigint::{BigInt, BigUint};
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};

pub(crate) fn binomial(n: u64, k: u64) -> BigUint {
    if k > n {
        return BigUint::zero();
    }
    let k = k.min(n - k);
    let mut acc = BigUint::one();
    for i in 0..k {
        acc *= n - i;
        acc /= i + 1;
    }
    acc
}

pub(crate) fn pow(base: u64, exp: u64) -> BigUint {
    num_traits::pow(BigUint::from(base), exp as usize)
}

/// `num / den` rounded to the nearest `f64`.
pub(crate) fn ratio_to_f64(num: &BigUint, den: &BigUint) -> f64 {
    let r = BigRational::new(BigInt::from(num.clone()), BigInt::from(den.clone()));
    r.to_f64().unwrap_or(f64::NAN)
}

/// Number of ways to throw `d` labelled balls into `m` labelled bins leaving no bin empty.
pub fn surjection_count(d: u32, m: u32) -> BigUint {
    let mut acc = BigInt::zero();
    for k in 0..=m {
        let term = BigInt::from(binomial(m as u64, k as u64) * pow((m - k) as u64, d as u64));
        if k % 2 == 0 {
            acc += term;
        } else {
            acc -= term;
        }
    }
    debug_assert!(!acc.is_negative());
    acc.to_biguint().unwrap_or_default()
}

/// Probability that at least one of `m` bins stays empty after `d` throws.
pub fn p_recall_zero(m: u32, d: u32) -> f64 {
    assert!(m >= 1, "need at least one bin");
    let total = pow(m as u64, d as u64);
    let onto = surjection_count(d, m);
    ratio_to_f64(&(&total - &onto), &total)
}

type Memo = HashMap<(u32, u32, u32), BigUint>;

fn memo() -> &'static Mutex<Memo> {
    static MEMO: OnceLock<Mutex<Memo>> = OnceLock::new();
    MEMO.get_or_init(|| Mutex::new(HashMap::new()))
}

/// Ways to throw `balls` labelled balls into `bins` labelled bins with every
/// bin receiving at least `floor` balls.
///
/// Built upward in `floor`: the arrangements with every bin `>= floor` are
/// those with every bin `>= floor - 1` minus the union over bins of
/// "this bin holds exactly `floor - 1`". The union is expanded by
/// inclusion-exclusion; fixing `j` bins at `floor - 1` leaves the remaining
/// `bins - j` bins to hold the other balls with every bin `>= floor - 1`,
/// which is the previous level of the same count.
fn at_least(memo: &mut Memo, bins: u32, balls: u32, floor: u32) -> BigUint {
    if floor == 0 {
        return pow(bins as u64, balls as u64);
    }
    if (bins as u64) * (floor as u64) > balls as u64 {
        return BigUint::zero();
    }
    if let Some(v) = memo.get(&(bins, balls, floor)) {
        return v.clone();
    }
    let exact = floor - 1;
    let mut union = BigInt::zero();
    let mut fixed_ways = BigUint::one();
    for j in 1..=bins {
        let used = (j - 1) * exact;
        if used + exact > balls {
            break;
        }
        // multinomial choice of which balls sit in the j fixed bins
        fixed_ways *= binomial((balls - used) as u64, exact as u64);
        let rest = at_least(memo, bins - j, balls - j * exact, exact);
        if rest.is_zero() {
            continue;
        }
        let term = BigInt::from(binomial(bins as u64, j as u64) * &fixed_ways * rest);
        if j % 2 == 1 {
            union += term;
        } else {
            union -= term;
        }
    }
    let prev = BigInt::from(at_least(memo, bins, balls, exact));
    let value = (prev - union)
        .to_biguint()
        .expect("occupancy count went negative");
    memo.insert((bins, balls, floor), value.clone());
    value
}

/// Arrangements (out of `m^d`) in which some bin holds at most `r` balls.
pub fn recall_count(r: u32, m: u32, d: u32) -> BigUint {
    assert!(m >= 1, "need at least one bin");
    let total = pow(m as u64, d as u64);
    let mut guard = memo().lock().unwrap_or_else(|e| e.into_inner());
    let full = at_least(&mut guard, m, d, r + 1);
    total - full
}

/// Probability that throwing `d` balls into `m` bins leaves some bin with at most `r` balls.
pub fn p_recall(r: u32, m: u32, d: u32) -> f64 {
    let total = pow(m as u64, d as u64);
    ratio_to_f64(&recall_count(r, m, d), &total)
}

/// Probability that a given bin receives exactly one ball while every other
/// bin receives at least one: `d (m-1)^(d-1) (1 - P0(m-1, d-1)) / m^d`.
pub fn single_ball_bin_probability(m: u32, d: u32) -> f64 {
    assert!(m >= 1);
    if d == 0 {
        return 0.0;
    }
    let total = pow(m as u64, d as u64);
    let ways = if m == 1 {
        BigUint::from((d == 1) as u32)
    } else {
        BigUint::from(d) * surjection_count(d - 1, m - 1)
    };
    ratio_to_f64(&ways, &total)
}
