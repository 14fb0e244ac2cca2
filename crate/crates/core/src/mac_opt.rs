//! Sum-capacity-achieving rate assignments for full-rank and unimodular
//! coefficient matrices.

use nalgebra::DMatrix;
use rand::Rng;
use rayon::prelude::*;
use serde_json::{json, Value};

use crate::channel::{
    effective_matrix, half_log_plus, int_rows, para_variances, succ_chain, sum_capacity,
    ChannelInstance, IntMatrix,
};
use crate::error::{Error, Result};
use crate::intsearch::{dominant_solutions_tied, is_unimodular, SearchOptions};
use crate::regions::{
    asc_region, eliminate, permutations, succ_region, AdmissibleMapping, RateRegionSpec, MEMBERSHIP_TOL,
};

/// Relative slack for the variance equality in the successive conditions.
pub const VARIANCE_REL_TOL: f64 = 1e-9;

/// Rate assignment attached to `(A, mapping, pi)`. `pi[l]` is the row whose
/// elimination pivot is user `l`.
#[derive(Debug, Clone, PartialEq)]
pub struct MacAssignment {
    pub a: IntMatrix,
    pub mapping: AdmissibleMapping,
    pub pi: Vec<usize>,
    pub rates: Vec<f64>,
    pub sum_rate: f64,
    pub gap_to_capacity: f64,
}

impl MacAssignment {
    pub fn to_json(&self) -> Value {
        json!({
            "A": int_rows(&self.a),
            "mapping": self.mapping.pair_list(),
            "pi": self.pi,
            "rates": self.rates,
            "sum_rate": self.sum_rate,
            "gap_to_capacity": self.gap_to_capacity,
        })
    }
}

fn require_square(a: &IntMatrix) -> Result<()> {
    if a.nrows() != a.ncols() {
        return Err(Error::Dimension(format!("coefficient matrix is {}x{}, expected square", a.nrows(), a.ncols())));
    }
    Ok(())
}

/// Elimination without row swaps, pivoting on the first nonzero column in `order`.
pub fn mac_mapping_with_order(a: &IntMatrix, order: &[usize]) -> Result<(AdmissibleMapping, Vec<usize>)> {
    require_square(a)?;
    let n = a.ncols();
    let mut sorted = order.to_vec();
    sorted.sort_unstable();
    if sorted != (0..n).collect::<Vec<_>>() {
        return Err(Error::Domain(format!("{order:?} is not a column order for {n} columns")));
    }
    let e = eliminate(a, order);
    let mut pi = vec![usize::MAX; n];
    for (m, p) in e.pivots.iter().enumerate() {
        match p {
            Some(c) => pi[*c] = m,
            None => return Err(Error::Precondition("coefficient matrix is rank deficient".into())),
        }
    }
    Ok((e.mapping(), pi))
}

/// `mac_mapping_with_order` with the natural column order.
pub fn mac_mapping(a: &IntMatrix) -> Result<(AdmissibleMapping, Vec<usize>)> {
    mac_mapping_with_order(a, &(0..a.ncols()).collect::<Vec<_>>())
}

/// Distinct `(mapping, pi)` over every column priority order.
pub fn mac_mappings(a: &IntMatrix) -> Result<Vec<(AdmissibleMapping, Vec<usize>)>> {
    let mut out: Vec<(AdmissibleMapping, Vec<usize>)> = Vec::new();
    for order in permutations(a.ncols()) {
        let cand = mac_mapping_with_order(a, &order)?;
        if !out.iter().any(|(m, p)| m.pairs == cand.0.pairs && *p == cand.1) {
            out.push(cand);
        }
    }
    Ok(out)
}

fn require_positive_power(ch: &ChannelInstance) -> Result<()> {
    match ch.p().iter().position(|&p| p <= 0.0) {
        Some(user) => Err(Error::ZeroPower { user }),
        None => Ok(()),
    }
}

fn check_pi(mapping: &AdmissibleMapping, pi: &[usize], n: usize) -> Result<()> {
    let mut seen = vec![false; n];
    if pi.len() != n || !pi.iter().all(|&m| m < n && !std::mem::replace(&mut seen[m], true)) {
        return Err(Error::Domain(format!("{pi:?} is not a permutation of {n} rows")));
    }
    if let Some(l) = (0..n).find(|&l| !mapping.pairs.contains(&(pi[l], l))) {
        return Err(Error::Precondition(format!("mapping does not contain ({}, {l}) required by pi", pi[l])));
    }
    Ok(())
}

fn assignment(
    ch: &ChannelInstance,
    a: &IntMatrix,
    mapping: AdmissibleMapping,
    pi: Vec<usize>,
    rates: Vec<f64>,
) -> MacAssignment {
    let sum_rate: f64 = rates.iter().sum();
    let gap_to_capacity = (sum_capacity(ch) - sum_rate).max(0.0);
    MacAssignment { a: a.clone(), mapping, pi, rates, sum_rate, gap_to_capacity }
}

/// Every parallel-noise assignment over tied dominant solutions and column orders.
pub fn theorem4_candidates(ch: &ChannelInstance) -> Result<Vec<MacAssignment>> {
    require_positive_power(ch)?;
    let f = effective_matrix(ch)?;
    let mut out = Vec::new();
    for sol in dominant_solutions_tied(&f, &SearchOptions::default())? {
        let a = sol.a_star;
        let var = para_variances(ch, &a)?;
        for (mapping, pi) in mac_mappings(&a)? {
            let rates: Vec<f64> = (0..ch.users()).map(|l| half_log_plus(ch.p()[l], var[pi[l]]).value()).collect();
            let region = asc_region(ch, &a, &mapping.pairs)?;
            if !region.contains(&rates, MEMBERSHIP_TOL) {
                return Err(Error::Domain("parallel assignment left its region; dominant rows are out of order".into()));
            }
            out.push(assignment(ch, &a, mapping, pi, rates));
        }
    }
    Ok(out)
}

/// Largest sum rate among `theorem4_candidates`; the earliest wins ties.
pub fn theorem4_rates(ch: &ChannelInstance) -> Result<MacAssignment> {
    let cands = theorem4_candidates(ch)?;
    let mut best: Option<MacAssignment> = None;
    for c in cands {
        let better = best.as_ref().is_none_or(|b| c.sum_rate > b.sum_rate + 1e-12 * b.sum_rate.abs().max(1.0));
        if better {
            best = Some(c);
        }
    }
    best.ok_or_else(|| Error::Exhausted("no dominant solution".into()))
}

/// Why a successive assignment was declined.
#[derive(Debug, Clone, PartialEq)]
pub enum Theorem5Violation {
    /// A mapped row has larger chained noise than the pivot row of this user.
    VarianceMismatch { user: usize, row: usize, mapped: f64, own: f64 },
    /// Power is below the chained noise of the pivot row.
    PowerDeficit { user: usize, power: f64, variance: f64 },
}

impl std::fmt::Display for Theorem5Violation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Theorem5Violation::VarianceMismatch { user, row, mapped, own } => {
                write!(f, "user {user}: row {row} has noise {mapped:.6} above the pivot-row noise {own:.6}")
            }
            Theorem5Violation::PowerDeficit { user, power, variance } => {
                write!(f, "user {user}: power {power:.6} below noise {variance:.6}")
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Theorem5Outcome {
    Achieved(MacAssignment),
    Declined(Theorem5Violation),
}

/// Successive assignment `R_l = 1/2 log(P_l / sigma^2_succ(a_{pi(l)} | A_{pi(l)-1}))`
/// when every mapped row's noise matches the pivot row's and power suffices.
pub fn theorem5_rates(
    ch: &ChannelInstance,
    a: &IntMatrix,
    mapping: &AdmissibleMapping,
    pi: &[usize],
) -> Result<Theorem5Outcome> {
    require_square(a)?;
    if !is_unimodular(a) {
        return Err(Error::Precondition("coefficient matrix is not unimodular".into()));
    }
    require_positive_power(ch)?;
    let n = ch.users();
    if a.ncols() != n {
        return Err(Error::Dimension(format!("{} columns for {n} users", a.ncols())));
    }
    check_pi(mapping, pi, n)?;
    let var = succ_chain(ch, a)?;
    for l in 0..n {
        let own = var[pi[l]];
        for &(m, u) in &mapping.pairs {
            if u == l && var[m] > own * (1.0 + VARIANCE_REL_TOL) {
                return Ok(Theorem5Outcome::Declined(Theorem5Violation::VarianceMismatch {
                    user: l,
                    row: m,
                    mapped: var[m],
                    own,
                }));
            }
        }
        if ch.p()[l] < own {
            return Ok(Theorem5Outcome::Declined(Theorem5Violation::PowerDeficit {
                user: l,
                power: ch.p()[l],
                variance: own,
            }));
        }
    }
    let rates = (0..n).map(|l| 0.5 * (ch.p()[l] / var[pi[l]]).log2()).collect();
    Ok(Theorem5Outcome::Achieved(assignment(ch, a, mapping.clone(), pi.to_vec(), rates)))
}

/// Largest candidate count `theorem5_search` will enumerate.
pub const MAX_SEARCH_CANDIDATES: u64 = 20_000_000;

/// All successive assignments over unimodular `A` with entries in `[-bound, bound]`
/// and every column order, with duplicate rate tuples removed. Sorted by `R1` descending
/// for two users, lexicographically descending otherwise.
pub fn theorem5_search(ch: &ChannelInstance, bound: i64) -> Result<Vec<MacAssignment>> {
    require_positive_power(ch)?;
    if bound < 1 {
        return Err(Error::Domain("search bound must be at least 1".into()));
    }
    let n = ch.users();
    let base = (2 * bound + 1) as u64;
    let count = base.checked_pow((n * n) as u32).filter(|&c| c <= MAX_SEARCH_CANDIDATES).ok_or_else(|| {
        Error::Exhausted(format!("{base}^{} candidate matrices exceed the search limit", n * n))
    })?;
    let found: Vec<MacAssignment> = (0..count)
        .into_par_iter()
        .flat_map_iter(|idx| {
            let mut digits = vec![0i64; n * n];
            let mut rest = idx;
            for d in digits.iter_mut().rev() {
                *d = (rest % base) as i64 - bound;
                rest /= base;
            }
            let a = DMatrix::from_row_slice(n, n, &digits);
            let mut hits = Vec::new();
            if is_unimodular(&a) {
                for (mapping, pi) in mac_mappings(&a).unwrap_or_default() {
                    if let Ok(Theorem5Outcome::Achieved(asg)) = theorem5_rates(ch, &a, &mapping, &pi) {
                        hits.push(asg);
                    }
                }
            }
            hits.into_iter()
        })
        .collect();
    // Among matrices with the same rates keep the one with the smallest entries,
    // then the fewest negative entries.
    let size = |a: &IntMatrix| {
        let max = a.iter().map(|v| v.abs()).max().unwrap_or(0);
        (max, a.iter().map(|v| v.abs()).sum::<i64>(), a.iter().filter(|&&v| v < 0).count())
    };
    let mut out: Vec<MacAssignment> = Vec::new();
    for asg in found {
        match out.iter_mut().find(|o| o.rates.iter().zip(&asg.rates).all(|(x, y)| (x - y).abs() <= 1e-9)) {
            Some(o) if size(&asg.a) < size(&o.a) => *o = asg,
            Some(_) => {}
            None => out.push(asg),
        }
    }
    out.sort_by(|x, y| y.rates.partial_cmp(&x.rates).unwrap_or(std::cmp::Ordering::Equal));
    Ok(out)
}

/// Both sides of the unimodular sum identity: the successive rate sum and the sum capacity.
pub fn unimodular_sum_check(ch: &ChannelInstance, a: &IntMatrix, pi: &[usize]) -> Result<(f64, f64)> {
    require_square(a)?;
    if !is_unimodular(a) {
        return Err(Error::Precondition("coefficient matrix is not unimodular".into()));
    }
    require_positive_power(ch)?;
    let n = ch.users();
    let mut seen = vec![false; n];
    if pi.len() != n || !pi.iter().all(|&m| m < n && !std::mem::replace(&mut seen[m], true)) {
        return Err(Error::Domain(format!("{pi:?} is not a permutation of {n} rows")));
    }
    let var = succ_chain(ch, a)?;
    let lhs = (0..n).map(|l| 0.5 * (ch.p()[l] / var[pi[l]]).log2()).sum();
    Ok((lhs, sum_capacity(ch)))
}

/// Largest entry magnitude produced by `random_unimodular`.
pub const UNIMODULAR_ENTRY_CAP: i64 = 50;

/// Random unimodular matrix from `steps` integer row additions and sign flips applied to `I`.
pub fn random_unimodular<R: Rng + ?Sized>(n: usize, steps: usize, rng: &mut R) -> IntMatrix {
    let mut a = IntMatrix::identity(n, n);
    if n == 0 {
        return a;
    }
    for _ in 0..steps {
        let i = rng.random_range(0..n);
        if n == 1 || rng.random_bool(0.1) {
            a.row_mut(i).neg_mut();
            continue;
        }
        let j = (i + rng.random_range(1..n)) % n;
        let k: i64 = if rng.random_bool(0.5) { 1 } else { -1 };
        let cand: Vec<i64> = (0..n).map(|c| a[(i, c)] + k * a[(j, c)]).collect();
        if cand.iter().all(|v| v.abs() <= UNIMODULAR_ENTRY_CAP) {
            for (c, v) in cand.into_iter().enumerate() {
                a[(i, c)] = v;
            }
        }
    }
    a
}

/// Successive region box for an assignment, used to check containment.
pub fn assignment_region(ch: &ChannelInstance, asg: &MacAssignment) -> Result<RateRegionSpec> {
    succ_region(ch, &asg.a, &asg.mapping.pairs)
}
