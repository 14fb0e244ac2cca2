//! Integer coefficient machinery: entry bounds, dominant solutions,
//! rowspan and mod-p solvability checks, unimodularity and primitive bases.

use nalgebra::DMatrix;
use num_bigint::BigInt;
use num_integer::Integer;
use num_traits::{One, Signed, ToPrimitive, Zero};

use crate::channel::{int_row, lambda_max_sym, ChannelInstance, IntMatrix};
use crate::error::{Error, Result};
use crate::exact::{self, det_bigint, int_to_rational_rows, mod_p, rank_int, rank_mod_p, Q};

/// `lambda_max(I + P H^T H)`: a squared entry above this forces a zero rate.
pub fn entry_bound(ch: &ChannelInstance) -> f64 {
    // Same spectrum as the symmetric I + P^{1/2} H^T H P^{1/2}.
    let sp = ch.p().map(f64::sqrt);
    let hs = ch.h() * DMatrix::from_diagonal(&sp);
    let l = ch.users();
    lambda_max_sym(&(DMatrix::identity(l, l) + hs.transpose() * hs))
}

/// Largest integer magnitude allowed by [`entry_bound`].
pub fn entry_radius(ch: &ChannelInstance) -> i64 {
    (entry_bound(ch).sqrt() + 1e-9).floor() as i64
}

/// Greedy successive minima of `||F a||` over integer vectors.
#[derive(Debug, Clone, PartialEq)]
pub struct DominantSolution {
    pub a_star: IntMatrix,
    /// `||F a*_m||`, nondecreasing.
    pub norms: Vec<f64>,
}

#[derive(Debug, Clone, Copy)]
pub struct SearchOptions {
    /// Largest dimension accepted for exact enumeration.
    pub max_users: usize,
    /// Cap on enumerated candidate vectors.
    pub max_points: usize,
    /// Cap on the number of tied dominant solutions returned.
    pub max_ties: usize,
}

impl Default for SearchOptions {
    fn default() -> Self {
        Self { max_users: 4, max_points: 4_000_000, max_ties: 64 }
    }
}

const TIE_REL: f64 = 1e-10;

struct Candidate {
    v: Vec<i64>,
    norm2: f64,
}

fn sign_normalized(v: &[i64]) -> bool {
    v.iter().find(|&&x| x != 0).is_some_and(|&x| x > 0)
}

fn enumerate_box(m: &DMatrix<f64>, radii: &[i64], max_points: usize) -> Result<Vec<Candidate>> {
    let total: f64 = radii.iter().map(|&r| (2 * r + 1) as f64).product();
    if total > 2.0 * max_points as f64 + 1.0 {
        return Err(Error::Exhausted(format!(
            "search box with radii {radii:?} holds {total} points, above the cap of {max_points}"
        )));
    }
    let l = radii.len();
    let mut out = Vec::new();
    let mut v: Vec<i64> = radii.iter().map(|&r| -r).collect();
    loop {
        if sign_normalized(&v) {
            let mut norm2 = 0.0;
            for i in 0..l {
                for j in 0..l {
                    norm2 += v[i] as f64 * m[(i, j)] * v[j] as f64;
                }
            }
            out.push(Candidate { v: v.clone(), norm2 });
        }
        let mut k = l;
        loop {
            if k == 0 {
                out.sort_by(|a, b| a.norm2.total_cmp(&b.norm2));
                return Ok(out);
            }
            k -= 1;
            if v[k] < radii[k] {
                v[k] += 1;
                break;
            }
            v[k] = -radii[k];
        }
    }
}

/// Incremental exact span membership.
#[derive(Clone)]
struct Span {
    rows: Vec<Vec<Q>>,
}

impl Span {
    fn contains(&self, v: &[i64]) -> bool {
        let mut stacked = self.rows.clone();
        stacked.push(v.iter().map(|&x| exact::q(x)).collect());
        exact::rank_rational(&stacked) == self.rows.len()
    }

    fn push(&mut self, v: &[i64]) {
        self.rows.push(v.iter().map(|&x| exact::q(x)).collect());
    }
}

fn search_radii(m: &DMatrix<f64>) -> Vec<i64> {
    let l = m.nrows();
    // Unit vectors already give a basis, so every successive minimum has
    // norm^2 <= max_i M_ii, and |a_i| <= ||F a|| sqrt((M^{-1})_ii).
    let t0 = (0..l).map(|i| m[(i, i)]).fold(0.0, f64::max);
    let minv = m.clone().try_inverse().expect("F has full rank");
    (0..l).map(|i| ((t0 * minv[(i, i)]).max(0.0).sqrt() * (1.0 + 1e-12) + 1e-9).floor() as i64).collect()
}

fn gram_of(f: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if f.nrows() != f.ncols() || f.nrows() == 0 {
        return Err(Error::Dimension("F must be a nonempty square matrix".into()));
    }
    if crate::channel::numerical_rank(f) < f.nrows() {
        return Err(Error::Precondition("F is rank deficient".into()));
    }
    Ok(f.transpose() * f)
}

/// Dominant solution with the provably sufficient search box.
pub fn dominant_solution(f: &DMatrix<f64>) -> Result<DominantSolution> {
    dominant_solution_with(f, &SearchOptions::default())
}

pub fn dominant_solution_with(f: &DMatrix<f64>, opts: &SearchOptions) -> Result<DominantSolution> {
    let mut all = dominant_solutions_tied(f, &SearchOptions { max_ties: 1, ..*opts })?;
    Ok(all.remove(0))
}

/// Greedy search restricted to the box `|a_i| <= radius`.
pub fn dominant_solution_in_box(f: &DMatrix<f64>, radius: i64, opts: &SearchOptions) -> Result<DominantSolution> {
    if radius <= 0 {
        return Err(Error::Precondition("empty search box".into()));
    }
    let m = gram_of(f)?;
    check_users(m.nrows(), opts)?;
    let cands = enumerate_box(&m, &vec![radius; m.nrows()], opts.max_points)?;
    let mut out = Vec::new();
    greedy(&cands, &m, Vec::new(), Span { rows: Vec::new() }, 1, &mut out);
    out.pop().ok_or_else(|| Error::Exhausted("no full-rank basis inside the search box".into()))
}

fn check_users(l: usize, opts: &SearchOptions) -> Result<()> {
    if l > opts.max_users {
        return Err(Error::Precondition(format!(
            "exact enumeration is limited to {} users, got {l}",
            opts.max_users
        )));
    }
    Ok(())
}

/// Every dominant solution reachable by resolving norm ties differently,
/// canonical choice first.
pub fn dominant_solutions_tied(f: &DMatrix<f64>, opts: &SearchOptions) -> Result<Vec<DominantSolution>> {
    let m = gram_of(f)?;
    check_users(m.nrows(), opts)?;
    let cands = enumerate_box(&m, &search_radii(&m), opts.max_points)?;
    let mut out = Vec::new();
    greedy(&cands, &m, Vec::new(), Span { rows: Vec::new() }, opts.max_ties.max(1), &mut out);
    if out.is_empty() {
        return Err(Error::Exhausted("no full-rank basis found".into()));
    }
    Ok(out)
}

fn greedy(
    cands: &[Candidate],
    m: &DMatrix<f64>,
    chosen: Vec<usize>,
    span: Span,
    cap: usize,
    out: &mut Vec<DominantSolution>,
) {
    let l = m.nrows();
    if out.len() >= cap {
        return;
    }
    if chosen.len() == l {
        let a_star = IntMatrix::from_fn(l, l, |i, j| cands[chosen[i]].v[j]);
        let norms = chosen.iter().map(|&c| cands[c].norm2.max(0.0).sqrt()).collect();
        out.push(DominantSolution { a_star, norms });
        return;
    }
    let Some(first) = (0..cands.len()).find(|&i| !span.contains(&cands[i].v)) else { return };
    let limit = cands[first].norm2 * (1.0 + TIE_REL) + 1e-300;
    let mut tied: Vec<usize> =
        (first..cands.len()).take_while(|&i| cands[i].norm2 <= limit).filter(|&i| !span.contains(&cands[i].v)).collect();
    // Canonical order among ties: lexicographically largest sign-normalized vector first.
    tied.sort_by(|&a, &b| cands[b].v.cmp(&cands[a].v));
    for t in tied {
        let mut next = chosen.clone();
        next.push(t);
        let mut s = span.clone();
        s.push(&cands[t].v);
        greedy(cands, m, next, s, cap, out);
        if out.len() >= cap {
            return;
        }
    }
}

/// Every row of `a` lies in the real row space of `a_tilde`.
pub fn rowspan_contains_real(a_tilde: &IntMatrix, a: &IntMatrix) -> bool {
    let base = int_to_rational_rows(a_tilde);
    let mut stacked = base.clone();
    stacked.extend(int_to_rational_rows(a));
    exact::rank_rational(&base) == exact::rank_rational(&stacked)
}

/// The unit row `delta_m` lies in the row space of `[A] mod p`.
pub fn mod_p_solvability(a: &IntMatrix, m: usize, p: u64) -> Result<bool> {
    if !exact::is_prime(p) {
        return Err(Error::Domain(format!("{p} is not prime")));
    }
    if m >= a.ncols() {
        return Err(Error::Dimension(format!("unit row {m} outside {} columns", a.ncols())));
    }
    let rows: Vec<Vec<u64>> = (0..a.nrows()).map(|i| int_row(a, i).iter().map(|&v| mod_p(v, p)).collect()).collect();
    let mut with_unit = rows.clone();
    with_unit.push((0..a.ncols()).map(|j| u64::from(j == m)).collect());
    Ok(rank_mod_p(&rows, p) == rank_mod_p(&with_unit, p))
}

/// Exact integer determinant.
pub fn determinant(a: &IntMatrix) -> BigInt {
    det_bigint(a)
}

pub fn is_unimodular(a: &IntMatrix) -> bool {
    a.nrows() == a.ncols() && det_bigint(a).abs().is_one()
}

/// Invariant factors of the Smith normal form.
pub fn invariant_factors(a: &IntMatrix) -> Vec<BigInt> {
    exact::smith(a).diagonal
}

fn nonzero_rows(a: &IntMatrix) -> IntMatrix {
    let keep: Vec<usize> = (0..a.nrows()).filter(|&i| a.row(i).iter().any(|&v| v != 0)).collect();
    IntMatrix::from_fn(keep.len(), a.ncols(), |i, j| a[(keep[i], j)])
}

/// The nonzero rows are independent and can be completed to a unimodular matrix.
pub fn primitivity(a: &IntMatrix) -> bool {
    let block = nonzero_rows(a);
    if block.nrows() == 0 {
        return true;
    }
    if rank_int(&block) < block.nrows() {
        return false;
    }
    invariant_factors(&block).iter().all(One::is_one)
}

/// `A_M = T * A_prim,M` with `A_prim` primitive and `T` lower triangular with positive diagonal.
#[derive(Debug, Clone, PartialEq)]
pub struct Primitivized {
    pub a_prim: IntMatrix,
    pub t: IntMatrix,
    pub rank: usize,
}

pub fn primitivize(a: &IntMatrix) -> Result<Primitivized> {
    let m = (0..a.nrows()).take_while(|&i| a.row(i).iter().any(|&v| v != 0)).count();
    if (m..a.nrows()).any(|i| a.row(i).iter().any(|&v| v != 0)) {
        return Err(Error::Precondition("nonzero rows must precede zero rows".into()));
    }
    let a_m = a.rows(0, m).into_owned();
    if rank_int(&a_m) < m {
        return Err(Error::Precondition("leading rows are not linearly independent".into()));
    }
    let l = a.ncols();
    if m == 0 {
        return Ok(Primitivized { a_prim: a.clone(), t: IntMatrix::zeros(0, 0), rank: 0 });
    }
    let s = exact::smith(&a_m);
    let mut w: Vec<Vec<BigInt>> = (0..m).map(|i| (0..m).map(|j| &s.u_inv[i][j] * &s.diagonal[j]).collect()).collect();
    let mut v: Vec<Vec<BigInt>> = s.v_inv[..m].to_vec();

    // col_j -= f col_i on W, row_i += f row_j on V keeps W V fixed.
    let col_sub = |w: &mut Vec<Vec<BigInt>>, v: &mut Vec<Vec<BigInt>>, j: usize, i: usize, f: &BigInt| {
        for row in w.iter_mut() {
            let t = f * &row[i];
            row[j] -= t;
        }
        let rj = v[j].clone();
        for (c, x) in rj.iter().enumerate() {
            v[i][c] += f * x;
        }
    };
    for i in 0..m {
        for j in i + 1..m {
            while !w[i][j].is_zero() {
                if w[i][i].is_zero() || w[i][j].abs() < w[i][i].abs() {
                    for row in w.iter_mut() {
                        row.swap(i, j);
                    }
                    v.swap(i, j);
                    continue;
                }
                let f = w[i][j].div_floor(&w[i][i]);
                col_sub(&mut w, &mut v, j, i, &f);
            }
        }
        if w[i][i].is_negative() {
            for row in w.iter_mut() {
                row[i] = -row[i].clone();
            }
            for x in v[i].iter_mut() {
                *x = -x.clone();
            }
        }
    }
    // Reduce below-diagonal entries modulo the diagonal (Hermite form).
    for i in 0..m {
        for j in 0..i {
            let f = w[i][j].div_floor(&w[i][i]);
            if !f.is_zero() {
                col_sub(&mut w, &mut v, j, i, &f);
            }
        }
    }
    let to_i64 = |x: &BigInt| x.to_i64().ok_or_else(|| Error::Domain("entry exceeds 64-bit range".into()));
    let mut a_prim = IntMatrix::zeros(a.nrows(), l);
    for i in 0..m {
        for j in 0..l {
            a_prim[(i, j)] = to_i64(&v[i][j])?;
        }
    }
    let mut t = IntMatrix::zeros(m, m);
    for i in 0..m {
        for j in 0..m {
            t[(i, j)] = to_i64(&w[i][j])?;
        }
    }
    Ok(Primitivized { a_prim, t, rank: m })
}
