//! Achievable rate regions for parallel and successive computation, the MAC
//! capacity region, SIC corner points and two-user region geometry.
//!
//! Users and rows are zero-based. A mapping pair `(m, l)` states that the
//! decoder of combination `m` must be able to resolve user `l`'s lattice.

use std::collections::BTreeSet;
use std::fmt::Write as _;

use nalgebra::DMatrix;
use num_rational::BigRational;
use num_traits::{Signed, ToPrimitive, Zero};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::channel::{
    half_log2_det, half_log_plus, int_rows, para_variances, succ_chain, sum_capacity, ChannelInstance, IntMatrix,
    Rate,
};
use crate::error::{dim, Error, Result};
use crate::exact::{self, Q};
use crate::intsearch::{entry_radius, rowspan_contains_real};

/// Slack used when comparing a rate tuple against region caps.
pub const MEMBERSHIP_TOL: f64 = 1e-9;

pub type Pair = (usize, usize);

/// An admissible mapping with a lower unitriangular witness `L`.
#[derive(Debug, Clone, PartialEq)]
pub struct AdmissibleMapping {
    pub pairs: BTreeSet<Pair>,
    /// Exact witness; `(L * A_tilde)[m][l] == 0` for every pair not in the mapping.
    pub l: Vec<Vec<BigRational>>,
}

impl AdmissibleMapping {
    pub fn l_real(&self) -> DMatrix<f64> {
        let n = self.l.len();
        DMatrix::from_fn(n, n, |i, j| self.l[i][j].to_f64().unwrap_or(f64::NAN))
    }

    pub fn pair_list(&self) -> Vec<Pair> {
        self.pairs.iter().copied().collect()
    }
}

/// Which family of boxes a region came from.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Provenance {
    Parallel { a_tilde: Vec<Vec<i64>> },
    Successive { a_tilde: Vec<Vec<i64>>, mapping: Vec<Pair> },
    Asc { a_tilde: Vec<Vec<i64>>, mapping: Vec<Pair> },
    Sic { order: Vec<usize> },
    MacCorner { a: Vec<Vec<i64>>, mapping: Vec<Pair>, pi: Vec<usize> },
}

/// Axis-aligned rate box: user `l` may transmit at any rate up to `caps[l]`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RateBox {
    pub caps: Vec<Rate>,
    pub provenance: Provenance,
}

impl RateBox {
    pub fn contains(&self, rates: &[f64], tol: f64) -> bool {
        rates.len() == self.caps.len() && rates.iter().zip(&self.caps).all(|(&r, c)| r <= c.value() + tol)
    }
}

/// Sum-rate constraint over a subset of users.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SubsetConstraint {
    pub users: Vec<usize>,
    pub bound: f64,
}

/// Union of boxes intersected with subset constraints. An empty box list means
/// the constraints alone describe the region.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RateRegionSpec {
    pub users: usize,
    pub boxes: Vec<RateBox>,
    pub constraints: Vec<SubsetConstraint>,
}

impl RateRegionSpec {
    pub fn from_box(b: RateBox) -> Self {
        RateRegionSpec { users: b.caps.len(), boxes: vec![b], constraints: Vec::new() }
    }

    pub fn union(users: usize, boxes: Vec<RateBox>) -> Self {
        RateRegionSpec { users, boxes, constraints: Vec::new() }
    }

    pub fn contains(&self, rates: &[f64], tol: f64) -> bool {
        if rates.len() != self.users || rates.iter().any(|&r| r < -tol) {
            return false;
        }
        let in_boxes = self.boxes.is_empty() || self.boxes.iter().any(|b| b.contains(rates, tol));
        in_boxes
            && self.constraints.iter().all(|c| c.users.iter().map(|&u| rates[u]).sum::<f64>() <= c.bound + tol)
    }

    /// Caps of the single box, if the region is one box.
    pub fn caps(&self) -> Option<&[Rate]> {
        match self.boxes.as_slice() {
            [b] if self.constraints.is_empty() => Some(&b.caps),
            _ => None,
        }
    }
}

fn check_cols(a: &IntMatrix, ch: &ChannelInstance) -> Result<()> {
    if a.ncols() != ch.users() {
        return dim(format!("coefficient matrix has {} columns, channel has {} users", a.ncols(), ch.users()));
    }
    Ok(())
}

fn check_pairs(pairs: &BTreeSet<Pair>, rows: usize, users: usize) -> Result<()> {
    match pairs.iter().find(|&&(m, l)| m >= rows || l >= users) {
        Some(&(m, l)) => dim(format!("mapping pair ({m}, {l}) outside a {rows}x{users} matrix")),
        None => Ok(()),
    }
}

/// Caps `min_{m: a_{m,l} != 0} 1/2 log+(P_l / sigma^2_para(a_m))`.
pub fn para_region(ch: &ChannelInstance, a_tilde: &IntMatrix) -> Result<RateRegionSpec> {
    check_cols(a_tilde, ch)?;
    let var = para_variances(ch, a_tilde)?;
    let caps = (0..ch.users())
        .map(|l| {
            (0..a_tilde.nrows())
                .filter(|&m| a_tilde[(m, l)] != 0)
                .fold(Rate::Unbounded, |acc, m| acc.min(half_log_plus(ch.p()[l], var[m])))
        })
        .collect();
    Ok(RateRegionSpec::from_box(RateBox { caps, provenance: Provenance::Parallel { a_tilde: int_rows(a_tilde) } }))
}

fn caps_from_pairs(ch: &ChannelInstance, var: &[f64], pairs: &BTreeSet<Pair>) -> Vec<Rate> {
    let mut caps = vec![Rate::Unbounded; ch.users()];
    for &(m, l) in pairs {
        caps[l] = caps[l].min(half_log_plus(ch.p()[l], var[m]));
    }
    caps
}

/// Successive region for `(A_tilde, I)`; the mapping must be admissible.
pub fn succ_region(ch: &ChannelInstance, a_tilde: &IntMatrix, pairs: &BTreeSet<Pair>) -> Result<RateRegionSpec> {
    check_cols(a_tilde, ch)?;
    check_pairs(pairs, a_tilde.nrows(), ch.users())?;
    if is_admissible(a_tilde, pairs)?.is_none() {
        return Err(Error::Precondition("mapping is not admissible for this coefficient matrix".into()));
    }
    let var = succ_chain(ch, a_tilde)?;
    let caps = caps_from_pairs(ch, &var, pairs);
    Ok(RateRegionSpec::from_box(RateBox {
        caps,
        provenance: Provenance::Successive { a_tilde: int_rows(a_tilde), mapping: pairs.iter().copied().collect() },
    }))
}

/// Parallel noise with the caps of an admissible mapping.
pub fn asc_region(ch: &ChannelInstance, a_tilde: &IntMatrix, pairs: &BTreeSet<Pair>) -> Result<RateRegionSpec> {
    check_cols(a_tilde, ch)?;
    check_pairs(pairs, a_tilde.nrows(), ch.users())?;
    if is_admissible(a_tilde, pairs)?.is_none() {
        return Err(Error::Precondition("mapping is not admissible for this coefficient matrix".into()));
    }
    let var = para_variances(ch, a_tilde)?;
    let caps = caps_from_pairs(ch, &var, pairs);
    Ok(RateRegionSpec::from_box(RateBox {
        caps,
        provenance: Provenance::Asc { a_tilde: int_rows(a_tilde), mapping: pairs.iter().copied().collect() },
    }))
}

/// Sum constraints `sum_{l in S} R_l <= 1/2 log2 det(I + H_S P_S H_S^T)` for every nonempty `S`.
pub fn mac_region(ch: &ChannelInstance) -> Result<RateRegionSpec> {
    let l = ch.users();
    if l > 16 {
        return Err(Error::Domain(format!("{l} users give too many subset constraints")));
    }
    let constraints = (1u32..(1 << l))
        .map(|mask| {
            let users: Vec<usize> = (0..l).filter(|&u| mask & (1 << u) != 0).collect();
            SubsetConstraint { bound: sum_capacity(&ch.select_users(&users)), users }
        })
        .collect();
    Ok(RateRegionSpec { users: l, boxes: Vec::new(), constraints })
}

/// SIC rates for a decoding order: `order[0]` is decoded first, treating all
/// later users as noise.
pub fn sic_rates(ch: &ChannelInstance, order: &[usize]) -> Result<Vec<f64>> {
    let l = ch.users();
    let mut seen = vec![false; l];
    if order.len() != l || !order.iter().all(|&u| u < l && !std::mem::replace(&mut seen[u], true)) {
        return Err(Error::Domain(format!("{order:?} is not a permutation of {l} users")));
    }
    let mut rates = vec![0.0; l];
    for (k, &u) in order.iter().enumerate() {
        let rest: Vec<usize> = order[k + 1..].to_vec();
        let mut both = rest.clone();
        both.push(u);
        let with = half_log2_det(&ch.select_users(&both).receive_covariance());
        let without = half_log2_det(&ch.select_users(&rest).receive_covariance());
        rates[u] = (with - without).max(0.0);
    }
    Ok(rates)
}

/// Union of the SIC boxes over every decoding order.
pub fn sic_region(ch: &ChannelInstance) -> Result<RateRegionSpec> {
    let l = ch.users();
    if l > 8 {
        return Err(Error::Domain(format!("{l} users give too many decoding orders")));
    }
    let boxes = permutations(l)
        .into_iter()
        .map(|order| {
            let r = sic_rates(ch, &order)?;
            Ok(RateBox { caps: r.into_iter().map(Rate::Finite).collect(), provenance: Provenance::Sic { order } })
        })
        .collect::<Result<_>>()?;
    Ok(RateRegionSpec::union(l, boxes))
}

pub(crate) fn permutations(n: usize) -> Vec<Vec<usize>> {
    fn go(cur: &mut Vec<usize>, used: &mut [bool], out: &mut Vec<Vec<usize>>) {
        if cur.len() == used.len() {
            out.push(cur.clone());
            return;
        }
        for i in 0..used.len() {
            if !used[i] {
                used[i] = true;
                cur.push(i);
                go(cur, used, out);
                cur.pop();
                used[i] = false;
            }
        }
    }
    let mut out = Vec::new();
    go(&mut Vec::new(), &mut vec![false; n], &mut out);
    out
}

// ---- admissibility --------------------------------------------------------

/// Exact test for a lower unitriangular `L` with `(L A_tilde)` vanishing off the mapping.
pub fn is_admissible(a_tilde: &IntMatrix, pairs: &BTreeSet<Pair>) -> Result<Option<AdmissibleMapping>> {
    let (rows, cols) = (a_tilde.nrows(), a_tilde.ncols());
    check_pairs(pairs, rows, cols)?;
    let a = exact::int_to_rational_rows(a_tilde);
    let mut l = vec![vec![Q::zero(); rows]; rows];
    for m in 0..rows {
        let zeros: Vec<usize> = (0..cols).filter(|&c| !pairs.contains(&(m, c))).collect();
        let b: Vec<Vec<Q>> = (0..m).map(|i| zeros.iter().map(|&c| a[i][c].clone()).collect()).collect();
        let t: Vec<Q> = zeros.iter().map(|&c| -a[m][c].clone()).collect();
        let Some(x) = exact::solve_left(&b, &t) else { return Ok(None) };
        l[m][..m].clone_from_slice(&x);
        l[m][m] = exact::q(1);
    }
    Ok(Some(AdmissibleMapping { pairs: pairs.clone(), l }))
}

/// Every pair `(m, l)`.
pub fn all_pairs(rows: usize, users: usize) -> BTreeSet<Pair> {
    (0..rows).flat_map(|m| (0..users).map(move |l| (m, l))).collect()
}

/// `{(m, m)}`.
pub fn diagonal_mapping(n: usize) -> BTreeSet<Pair> {
    (0..n).map(|m| (m, m)).collect()
}

/// Nonzero pattern of `A_tilde`; always admissible with `L = I`.
pub fn support_mapping(a_tilde: &IntMatrix) -> BTreeSet<Pair> {
    all_pairs(a_tilde.nrows(), a_tilde.ncols()).into_iter().filter(|&(m, l)| a_tilde[(m, l)] != 0).collect()
}

/// Row-by-row elimination without row swaps, choosing pivots by column priority.
#[derive(Debug, Clone)]
pub(crate) struct Elimination {
    pub la: Vec<Vec<Q>>,
    pub l: Vec<Vec<Q>>,
    pub pivots: Vec<Option<usize>>,
}

pub(crate) fn eliminate(a_tilde: &IntMatrix, order: &[usize]) -> Elimination {
    let rows = a_tilde.nrows();
    let a = exact::int_to_rational_rows(a_tilde);
    let mut la: Vec<Vec<Q>> = Vec::with_capacity(rows);
    let mut l: Vec<Vec<Q>> = Vec::with_capacity(rows);
    let mut pivots: Vec<Option<usize>> = Vec::with_capacity(rows);
    for m in 0..rows {
        let mut r = a[m].clone();
        let mut lm = vec![Q::zero(); rows];
        lm[m] = exact::q(1);
        for i in 0..m {
            let Some(c) = pivots[i] else { continue };
            if r[c].is_zero() {
                continue;
            }
            let f = &r[c] / &la[i][c];
            for (x, y) in r.iter_mut().zip(&la[i]) {
                *x -= &f * y;
            }
            for (x, y) in lm.iter_mut().zip(&l[i]) {
                *x -= &f * y;
            }
        }
        pivots.push(order.iter().copied().find(|&c| !r[c].is_zero()));
        la.push(r);
        l.push(lm);
    }
    Elimination { la, l, pivots }
}

impl Elimination {
    pub fn mapping(&self) -> AdmissibleMapping {
        let pairs = self
            .la
            .iter()
            .enumerate()
            .flat_map(|(m, r)| r.iter().enumerate().filter(|(_, v)| !v.is_zero()).map(move |(c, _)| (m, c)))
            .collect();
        AdmissibleMapping { pairs, l: self.l.clone() }
    }
}

/// Mappings tried by the successive membership search: the elimination
/// pattern for every column priority order, the support pattern and all pairs.
pub fn canonical_mappings(a_tilde: &IntMatrix) -> Vec<AdmissibleMapping> {
    let (rows, cols) = (a_tilde.nrows(), a_tilde.ncols());
    let mut out: Vec<AdmissibleMapping> = Vec::new();
    let mut push = |m: AdmissibleMapping| {
        if !out.iter().any(|o| o.pairs == m.pairs) {
            out.push(m);
        }
    };
    for order in permutations(cols) {
        push(eliminate(a_tilde, &order).mapping());
    }
    let identity = (0..rows).map(|i| (0..rows).map(|j| exact::q(i64::from(i == j))).collect()).collect();
    push(AdmissibleMapping { pairs: support_mapping(a_tilde), l: identity });
    if let Ok(Some(m)) = is_admissible(a_tilde, &all_pairs(rows, cols)) {
        push(m);
    }
    out
}

// ---- membership -----------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scheme {
    Parallel,
    Successive,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Witness {
    pub a_tilde: Vec<Vec<i64>>,
    pub mapping: Option<Vec<Pair>>,
    pub caps: Vec<Rate>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum Membership {
    Member { witness: Witness },
    NotMember { reason: String },
    Inconclusive { reason: String },
}

impl Membership {
    pub fn is_member(&self) -> bool {
        matches!(self, Membership::Member { .. })
    }
}

/// Largest candidate count the membership search will enumerate.
pub const MAX_MEMBERSHIP_CANDIDATES: u64 = 50_000_000;

fn candidate(index: u64, n: usize, bound: i64) -> IntMatrix {
    let base = (2 * bound + 1) as u64;
    let mut digits = vec![0i64; n * n];
    let mut rest = index;
    for d in digits.iter_mut().rev() {
        *d = (rest % base) as i64 - bound;
        rest /= base;
    }
    DMatrix::from_row_slice(n, n, &digits)
}

/// Is `rates` achievable for computing `A X`?
///
/// Square `A_tilde` with entries in `[-bound, bound]` are enumerated in
/// lexicographic order; the first one whose region contains `rates` is returned.
/// For a full-rank `A`, tuples beyond the sum capacity are rejected outright.
/// A failed parallel search is conclusive when every rate is positive and
/// `bound` reaches the entry radius.
pub fn membership(
    ch: &ChannelInstance,
    a: &IntMatrix,
    rates: &[f64],
    scheme: Scheme,
    bound: i64,
) -> Result<Membership> {
    check_cols(a, ch)?;
    let l = ch.users();
    if rates.len() != l {
        return dim(format!("{} rates for {l} users", rates.len()));
    }
    if rates.iter().any(|r| !r.is_finite() || *r < 0.0) {
        return Err(Error::Domain("rates must be finite and nonnegative".into()));
    }
    if bound < 0 {
        return Err(Error::Domain("search bound must be nonnegative".into()));
    }
    if exact::rank_int(a) == l && rates.iter().sum::<f64>() > sum_capacity(ch) + MEMBERSHIP_TOL {
        return Ok(Membership::NotMember { reason: "sum rate exceeds the sum capacity".into() });
    }
    if rates.iter().all(|&r| r == 0.0) {
        let mut padded = IntMatrix::zeros(l.max(a.nrows()), l);
        padded.view_mut((0, 0), (a.nrows(), l)).copy_from(a);
        let caps = vec![Rate::Finite(0.0); l];
        return Ok(Membership::Member { witness: Witness { a_tilde: int_rows(&padded), mapping: None, caps } });
    }
    let count = ((2 * bound + 1) as u64).checked_pow((l * l) as u32).unwrap_or(u64::MAX);
    if count > MAX_MEMBERSHIP_CANDIDATES {
        return Err(Error::Exhausted(format!("{count} candidate matrices exceed the search limit")));
    }
    let check = |idx: u64| -> Option<Witness> {
        let at = candidate(idx, l, bound);
        if !rowspan_contains_real(&at, a) {
            return None;
        }
        match scheme {
            Scheme::Parallel => {
                let region = para_region(ch, &at).ok()?;
                region
                    .contains(rates, MEMBERSHIP_TOL)
                    .then(|| Witness { a_tilde: int_rows(&at), mapping: None, caps: region.boxes[0].caps.clone() })
            }
            Scheme::Successive => {
                let var = succ_chain(ch, &at).ok()?;
                canonical_mappings(&at).into_iter().find_map(|map| {
                    let caps = caps_from_pairs(ch, &var, &map.pairs);
                    let b = RateBox { caps: caps.clone(), provenance: Provenance::Parallel { a_tilde: Vec::new() } };
                    b.contains(rates, MEMBERSHIP_TOL).then(|| Witness {
                        a_tilde: int_rows(&at),
                        mapping: Some(map.pair_list()),
                        caps,
                    })
                })
            }
        }
    };
    if let Some(w) = (0..count).into_par_iter().find_map_first(check) {
        return Ok(Membership::Member { witness: w });
    }
    let conclusive = scheme == Scheme::Parallel && rates.iter().all(|&r| r > 0.0) && bound >= entry_radius(ch);
    Ok(if conclusive {
        Membership::NotMember { reason: format!("no coefficient matrix with entries up to {bound} achieves the rates") }
    } else {
        Membership::Inconclusive { reason: format!("no witness with entries up to {bound}") }
    })
}

// ---- two-user geometry ----------------------------------------------------

/// How to combine several two-user regions.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RegionOp {
    Intersect,
    Union,
    /// Convex hull of the union.
    Hull,
    /// Convex hull of the intersection.
    IntersectHull,
}

/// `a1 R1 + a2 R2 <= b` with `a1, a2 >= 0`.
#[derive(Debug, Clone)]
struct HalfPlane {
    a1: Q,
    a2: Q,
    b: Q,
}

type Polygon = Vec<HalfPlane>;

fn rat(x: f64) -> Result<Q> {
    BigRational::from_float(x).ok_or_else(|| Error::Domain(format!("{x} is not a finite rate")))
}

fn polygons(spec: &RateRegionSpec) -> Result<Vec<Polygon>> {
    if spec.users != 2 {
        return dim(format!("two-user geometry needs 2 users, region has {}", spec.users));
    }
    let mut shared = Vec::new();
    for c in &spec.constraints {
        let has = |u| exact::q(i64::from(c.users.contains(&u)));
        shared.push(HalfPlane { a1: has(0), a2: has(1), b: rat(c.bound)? });
    }
    if spec.boxes.is_empty() {
        return Ok(vec![shared]);
    }
    spec.boxes
        .iter()
        .map(|b| {
            let mut poly = shared.clone();
            for (u, cap) in b.caps.iter().enumerate() {
                if let Rate::Finite(c) = cap {
                    poly.push(HalfPlane { a1: exact::q(i64::from(u == 0)), a2: exact::q(i64::from(u == 1)), b: rat(*c)? });
                }
            }
            Ok(poly)
        })
        .collect()
}

struct Piece {
    poly: Polygon,
    x_max: Q,
}

impl Piece {
    fn new(poly: Polygon) -> Result<Option<Piece>> {
        if poly.iter().any(|h| h.b.is_negative()) {
            return Ok(None);
        }
        let x_max = poly
            .iter()
            .filter(|h| h.a1.is_positive())
            .map(|h| &h.b / &h.a1)
            .min()
            .ok_or_else(|| Error::Domain("region is unbounded in R1".into()))?;
        if !poly.iter().any(|h| h.a2.is_positive()) {
            return Err(Error::Domain("region is unbounded in R2".into()));
        }
        Ok(Some(Piece { poly, x_max }))
    }

    fn top(&self, x: &Q) -> Q {
        self.poly
            .iter()
            .filter(|h| h.a2.is_positive())
            .map(|h| (&h.b - &h.a1 * x) / &h.a2)
            .min()
            .expect("bounded in R2")
    }
}

type Point = (Q, Q);

fn cross(o: &Point, a: &Point, b: &Point) -> Q {
    (&a.0 - &o.0) * (&b.1 - &o.1) - (&a.1 - &o.1) * (&b.0 - &o.0)
}

fn drop_collinear(pts: Vec<Point>) -> Vec<Point> {
    let mut out: Vec<Point> = Vec::with_capacity(pts.len());
    for p in pts {
        if out.last() == Some(&p) {
            continue;
        }
        while out.len() >= 2 && cross(&out[out.len() - 2], &out[out.len() - 1], &p).is_zero() {
            out.pop();
        }
        out.push(p);
    }
    out
}

/// Upper boundary of a union of down-closed convex pieces, from `(0, top)` to `(x_max, 0)`.
fn envelope(pieces: &[Piece]) -> Vec<Point> {
    let Some(x_end) = pieces.iter().map(|p| p.x_max.clone()).max() else { return Vec::new() };
    let zero = Q::zero();
    let lines: Vec<&HalfPlane> =
        pieces.iter().flat_map(|p| p.poly.iter()).filter(|h| h.a2.is_positive()).collect();
    let mut xs: Vec<Q> = vec![zero.clone(), x_end.clone()];
    xs.extend(pieces.iter().map(|p| p.x_max.clone()));
    for (i, h) in lines.iter().enumerate() {
        for g in &lines[i + 1..] {
            let det = &h.a1 * &g.a2 - &g.a1 * &h.a2;
            if !det.is_zero() {
                xs.push((&h.b * &g.a2 - &g.b * &h.a2) / det);
            }
        }
    }
    xs.retain(|x| *x >= zero && *x <= x_end);
    xs.sort();
    xs.dedup();

    let start = pieces.iter().map(|p| p.top(&zero)).max().expect("nonempty");
    let mut pts: Vec<Point> = vec![(zero.clone(), start)];
    let two = exact::q(2);
    for w in xs.windows(2) {
        let (x0, x1) = (&w[0], &w[1]);
        let mid = (x0 + x1) / &two;
        let best = pieces
            .iter()
            .filter(|p| p.x_max >= *x1)
            .max_by(|a, b| a.top(&mid).cmp(&b.top(&mid)))
            .expect("a piece spans the whole range");
        pts.push((x0.clone(), best.top(x0)));
        pts.push((x1.clone(), best.top(x1)));
    }
    pts.push((x_end, zero));
    drop_collinear(pts)
}

fn upper_hull(boundary: &[Point]) -> Vec<Point> {
    let Some(last) = boundary.last().cloned() else { return Vec::new() };
    let mut pts: Vec<Point> = boundary.iter().filter(|p| !p.1.is_zero()).cloned().collect();
    pts.sort_by(|a, b| a.0.cmp(&b.0).then(b.1.cmp(&a.1)));
    pts.dedup_by(|a, b| a.0 == b.0);
    let mut hull: Vec<Point> = Vec::new();
    for p in pts {
        while hull.len() >= 2 && !cross(&hull[hull.len() - 2], &hull[hull.len() - 1], &p).is_negative() {
            hull.pop();
        }
        hull.push(p);
    }
    hull.push(last);
    drop_collinear(hull)
}

/// Boundary vertices of a combination of two-user regions, ordered by `R1`,
/// starting on the `R2` axis and ending on the `R1` axis.
pub fn region_2d(specs: &[RateRegionSpec], op: RegionOp) -> Result<Vec<(f64, f64)>> {
    if specs.is_empty() {
        return dim("no regions to combine");
    }
    let per_spec = specs.iter().map(polygons).collect::<Result<Vec<_>>>()?;
    let polys: Vec<Polygon> = match op {
        RegionOp::Union | RegionOp::Hull => per_spec.into_iter().flatten().collect(),
        RegionOp::Intersect | RegionOp::IntersectHull => {
            per_spec.into_iter().fold(vec![Vec::new()], |acc, next| {
                acc.iter()
                    .flat_map(|a| next.iter().map(move |b| a.iter().chain(b).cloned().collect()))
                    .collect()
            })
        }
    };
    let pieces: Vec<Piece> = polys.into_iter().map(Piece::new).filter_map(Result::transpose).collect::<Result<_>>()?;
    let boundary = envelope(&pieces);
    let pts = match op {
        RegionOp::Hull | RegionOp::IntersectHull => upper_hull(&boundary),
        _ => boundary,
    };
    Ok(pts.iter().map(|(x, y)| (x.to_f64().unwrap_or(f64::NAN), y.to_f64().unwrap_or(f64::NAN))).collect())
}

/// Fixed six-decimal formatting with negative zero normalised.
pub fn fmt6(v: f64) -> String {
    let s = format!("{v:.6}");
    if s == "-0.000000" {
        "0.000000".into()
    } else {
        s
    }
}

/// `R1,R2` CSV of boundary vertices.
pub fn vertices_csv(pts: &[(f64, f64)]) -> String {
    let mut out = String::from("R1,R2\n");
    for (x, y) in pts {
        let _ = writeln!(out, "{},{}", fmt6(*x), fmt6(*y));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::int_matrix;
    use approx::assert_relative_eq;

    fn two_user() -> ChannelInstance {
        ChannelInstance::from_rows(&[[1.0, 1.5]], &[7.0, 4.0]).unwrap()
    }

    fn set(p: &[Pair]) -> BTreeSet<Pair> {
        p.iter().copied().collect()
    }

    fn caps(r: &RateRegionSpec) -> Vec<f64> {
        r.caps().unwrap().iter().map(|c| c.value()).collect()
    }

    #[test]
    fn sic_corner_points() {
        let ch = two_user();
        let r = sic_rates(&ch, &[0, 1]).unwrap();
        assert_relative_eq!(r[0], 0.5 * 1.7f64.log2(), epsilon = 1e-12);
        assert_relative_eq!(r[1], 0.5 * 10f64.log2(), epsilon = 1e-12);
        let r = sic_rates(&ch, &[1, 0]).unwrap();
        assert_relative_eq!(r[0], 1.5, epsilon = 1e-12);
        assert_relative_eq!(r[0] + r[1], sum_capacity(&ch), epsilon = 1e-12);
        assert!(sic_rates(&ch, &[0, 0]).is_err());
    }

    #[test]
    fn identity_diagonal_is_sic() {
        let ch = two_user();
        let region = succ_region(&ch, &int_matrix(&[[1, 0], [0, 1]]), &diagonal_mapping(2)).unwrap();
        let sic = sic_rates(&ch, &[0, 1]).unwrap();
        for (c, s) in caps(&region).iter().zip(&sic) {
            assert_relative_eq!(c, s, epsilon = 1e-12);
        }
    }

    #[test]
    fn para_region_plot_values() {
        let ch = two_user();
        let r = para_region(&ch, &int_matrix(&[[1, 1], [1, 2]])).unwrap();
        let c = caps(&r);
        assert_relative_eq!(c[0], 0.993963583849713, epsilon = 1e-9);
        assert_relative_eq!(c[1], 0.590286122820911, epsilon = 1e-9);
    }

    #[test]
    fn zero_column_is_unbounded() {
        let ch = two_user();
        let r = para_region(&ch, &int_matrix(&[[1, 0], [0, 0]])).unwrap();
        assert_eq!(r.caps().unwrap()[1], Rate::Unbounded);
    }

    #[test]
    fn admissibility() {
        let a = int_matrix(&[[1, 1], [1, 2]]);
        assert!(is_admissible(&a, &set(&[(0, 0), (0, 1), (1, 1)])).unwrap().is_some());
        assert!(is_admissible(&a, &set(&[(0, 0), (1, 1)])).unwrap().is_none());
        let w = is_admissible(&a, &set(&[(0, 0), (0, 1), (1, 0)])).unwrap().unwrap();
        assert_eq!(w.l[1][0], exact::q(-2));
        assert!(succ_region(&two_user(), &a, &set(&[(0, 0), (1, 1)])).is_err());
        assert!(is_admissible(&a, &set(&[(2, 0)])).is_err());
    }

    #[test]
    fn elimination_orders() {
        let a = int_matrix(&[[1, 1], [1, 2]]);
        let e = eliminate(&a, &[0, 1]);
        assert_eq!(e.pivots, vec![Some(0), Some(1)]);
        assert_eq!(e.l[1][0], exact::q(-1));
        assert_eq!(e.mapping().pairs, set(&[(0, 0), (0, 1), (1, 1)]));
        let e = eliminate(&a, &[1, 0]);
        assert_eq!(e.pivots, vec![Some(1), Some(0)]);
        assert_eq!(e.l[1][0], exact::q(-2));
        let e = eliminate(&int_matrix(&[[1, 1], [2, 2]]), &[0, 1]);
        assert_eq!(e.pivots, vec![Some(0), None]);
    }

    #[test]
    fn canonical_family_is_admissible() {
        let a = int_matrix(&[[1, 2, 0], [1, 1, 1], [0, 3, 1]]);
        for m in canonical_mappings(&a) {
            assert!(is_admissible(&a, &m.pairs).unwrap().is_some(), "{:?}", m.pairs);
        }
    }

    #[test]
    fn asc_with_support_matches_para() {
        let ch = ChannelInstance::from_rows(&[[1.0, 0.4, 2.0], [0.3, 1.2, -0.5]], &[3.0, 2.0, 5.0]).unwrap();
        let a = int_matrix(&[[1, 0, 2], [0, 1, -1], [1, 1, 0]]);
        let asc = asc_region(&ch, &a, &support_mapping(&a)).unwrap();
        let para = para_region(&ch, &a).unwrap();
        assert_eq!(caps(&asc), caps(&para));
    }

    #[test]
    fn mac_constraints() {
        let ch = two_user();
        let r = mac_region(&ch).unwrap();
        assert_eq!(r.constraints.len(), 3);
        assert_relative_eq!(r.constraints[2].bound, sum_capacity(&ch), epsilon = 1e-12);
        assert!(r.contains(&sic_rates(&ch, &[0, 1]).unwrap(), 1e-9));
        assert!(!r.contains(&[1.5, 1.0], 1e-9));
    }

    #[test]
    fn membership_identity_and_sum_capacity() {
        let ch = two_user();
        let id = int_matrix(&[[1, 0], [0, 1]]);
        let m = membership(&ch, &id, &[0.382767373181489, 1.66096404744368], Scheme::Successive, 1).unwrap();
        assert!(m.is_member());
        let m = membership(&ch, &id, &[2.0, 2.0], Scheme::Parallel, 1).unwrap();
        assert!(matches!(m, Membership::NotMember { .. }));
        let m = membership(&ch, &id, &[0.0, 0.0], Scheme::Parallel, 0).unwrap();
        assert!(m.is_member());
    }

    #[test]
    fn membership_first_witness_is_lexicographic() {
        let ch = two_user();
        let a = int_matrix(&[[1, 1], [1, 2]]);
        let m = membership(&ch, &a, &[0.99, 0.59], Scheme::Parallel, 2).unwrap();
        let Membership::Member { witness } = m else { panic!("expected a witness") };
        let best = witness.a_tilde;
        for idx in 0..5u64.pow(4) {
            let at = candidate(idx, 2, 2);
            if int_rows(&at) == best {
                break;
            }
            if rowspan_contains_real(&at, &a) {
                assert!(!para_region(&ch, &at).unwrap().contains(&[0.99, 0.59], MEMBERSHIP_TOL));
            }
        }
    }

    #[test]
    fn region_sic_hull_and_union() {
        let ch = two_user();
        let sic = sic_region(&ch).unwrap();
        let a = sic_rates(&ch, &[0, 1]).unwrap();
        let b = sic_rates(&ch, &[1, 0]).unwrap();
        let union = region_2d(&[sic.clone()], RegionOp::Union).unwrap();
        assert_eq!(union.len(), 5);
        assert_relative_eq!(union[0].1, a[1], epsilon = 1e-12);
        assert_relative_eq!(union[1].0, a[0], epsilon = 1e-12);
        let hull = region_2d(&[sic], RegionOp::Hull).unwrap();
        assert_eq!(hull.len(), 4);
        assert_relative_eq!(hull[1].0, a[0], epsilon = 1e-12);
        assert_relative_eq!(hull[2].0, b[0], epsilon = 1e-12);
        assert_relative_eq!(hull[2].1, b[1], epsilon = 1e-12);
        assert_eq!(hull[3].1, 0.0);
    }

    #[test]
    fn region_mac_pentagon_and_intersection() {
        let rx1 = ChannelInstance::from_rows(&[[3.3, 2.1]], &[4.0, 3.0]).unwrap();
        let mac = mac_region(&rx1).unwrap();
        let pts = region_2d(&[mac.clone()], RegionOp::Union).unwrap();
        assert_eq!(pts.len(), 4);
        let sic = sic_rates(&rx1, &[0, 1]).unwrap();
        assert_relative_eq!(pts[1].0, sic[0], epsilon = 1e-9);
        assert_relative_eq!(pts[1].1, sic[1], epsilon = 1e-9);
        let same = region_2d(&[mac.clone(), mac], RegionOp::Intersect).unwrap();
        assert_eq!(same, pts);
    }

    #[test]
    fn unbounded_region_is_rejected() {
        let r = RateRegionSpec::from_box(RateBox {
            caps: vec![Rate::Finite(1.0), Rate::Unbounded],
            provenance: Provenance::Sic { order: vec![0, 1] },
        });
        assert!(region_2d(&[r], RegionOp::Union).is_err());
    }

    #[test]
    fn csv_format() {
        assert_eq!(vertices_csv(&[(0.0, 1.0), (-0.0, 2.5)]), "R1,R2\n0.000000,1.000000\n0.000000,2.500000\n");
    }
}
