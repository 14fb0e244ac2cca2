//! Exact integer, rational and prime-field linear algebra.

use num_bigint::BigInt;
use num_integer::Integer;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};

use crate::channel::IntMatrix;

pub type Q = BigRational;

pub fn q(v: i64) -> Q {
    Q::from_integer(BigInt::from(v))
}

pub fn int_to_rational_rows(a: &IntMatrix) -> Vec<Vec<Q>> {
    (0..a.nrows()).map(|i| (0..a.ncols()).map(|j| q(a[(i, j)])).collect()).collect()
}

/// Row-reduce in place; returns pivot columns.
pub fn rref(rows: &mut [Vec<Q>]) -> Vec<usize> {
    let ncols = rows.first().map_or(0, |r| r.len());
    let mut pivots = Vec::new();
    let mut r = 0;
    for c in 0..ncols {
        if r == rows.len() {
            break;
        }
        let Some(piv) = (r..rows.len()).find(|&i| !rows[i][c].is_zero()) else { continue };
        rows.swap(r, piv);
        let inv = rows[r][c].recip();
        for v in rows[r].iter_mut() {
            *v = &*v * &inv;
        }
        for i in 0..rows.len() {
            if i != r && !rows[i][c].is_zero() {
                let f = rows[i][c].clone();
                for j in 0..ncols {
                    let t = &f * &rows[r][j];
                    rows[i][j] -= t;
                }
            }
        }
        pivots.push(c);
        r += 1;
    }
    pivots
}

pub fn rank_rational(rows: &[Vec<Q>]) -> usize {
    let mut work = rows.to_vec();
    rref(&mut work).len()
}

pub fn rank_int(a: &IntMatrix) -> usize {
    rank_rational(&int_to_rational_rows(a))
}

/// Solve `x^T B = t^T` over the rationals (B has `k` rows, `t` has B's column count).
/// Free variables are set to zero. `None` when inconsistent.
pub fn solve_left(b: &[Vec<Q>], t: &[Q]) -> Option<Vec<Q>> {
    let k = b.len();
    if k == 0 {
        return t.iter().all(Zero::is_zero).then(Vec::new);
    }
    let ncols = t.len();
    // Augmented system B^T x = t: one equation per column of B.
    let mut aug: Vec<Vec<Q>> = (0..ncols)
        .map(|c| {
            let mut row: Vec<Q> = (0..k).map(|i| b[i][c].clone()).collect();
            row.push(t[c].clone());
            row
        })
        .collect();
    let pivots = rref(&mut aug);
    if pivots.contains(&k) {
        return None;
    }
    let mut x = vec![Q::zero(); k];
    for (r, &c) in pivots.iter().enumerate() {
        x[c] = aug[r][k].clone();
    }
    Some(x)
}

/// Bareiss fraction-free determinant.
pub fn det_bigint(a: &IntMatrix) -> BigInt {
    let n = a.nrows();
    assert_eq!(n, a.ncols(), "determinant of a non-square matrix");
    if n == 0 {
        return BigInt::one();
    }
    let mut m: Vec<Vec<BigInt>> = (0..n).map(|i| (0..n).map(|j| BigInt::from(a[(i, j)])).collect()).collect();
    let mut sign = BigInt::one();
    let mut prev = BigInt::one();
    for k in 0..n - 1 {
        if m[k][k].is_zero() {
            match (k + 1..n).find(|&i| !m[i][k].is_zero()) {
                Some(i) => {
                    m.swap(k, i);
                    sign = -sign;
                }
                None => return BigInt::zero(),
            }
        }
        for i in k + 1..n {
            for j in k + 1..n {
                let v = &m[i][j] * &m[k][k] - &m[i][k] * &m[k][j];
                m[i][j] = v / &prev;
            }
        }
        prev = m[k][k].clone();
    }
    sign * &m[n - 1][n - 1]
}

pub fn is_prime(p: u64) -> bool {
    if p < 2 {
        return false;
    }
    let mut d = 2;
    while d * d <= p {
        if p % d == 0 {
            return false;
        }
        d += 1;
    }
    true
}

pub fn mod_p(v: i64, p: u64) -> u64 {
    v.rem_euclid(p as i64) as u64
}

pub fn inv_mod(a: u64, p: u64) -> Option<u64> {
    let e = (a as i64).extended_gcd(&(p as i64));
    (e.gcd == 1).then(|| e.x.rem_euclid(p as i64) as u64)
}

pub fn rational_mod_p(v: &Q, p: u64) -> Option<u64> {
    let pb = BigInt::from(p);
    let den = v.denom().mod_floor(&pb).to_u64()?;
    let num = v.numer().mod_floor(&pb).to_u64()?;
    let dinv = inv_mod(den, p)?;
    Some(num * dinv % p)
}

/// Reduced row echelon form over Z_p; returns pivot columns.
pub fn rref_mod_p(rows: &mut [Vec<u64>], p: u64) -> Vec<usize> {
    let ncols = rows.first().map_or(0, |r| r.len());
    let mut pivots = Vec::new();
    let mut r = 0;
    for c in 0..ncols {
        if r == rows.len() {
            break;
        }
        let Some(piv) = (r..rows.len()).find(|&i| rows[i][c] != 0) else { continue };
        rows.swap(r, piv);
        let inv = inv_mod(rows[r][c], p).expect("p is prime");
        for v in rows[r].iter_mut() {
            *v = *v * inv % p;
        }
        for i in 0..rows.len() {
            if i != r && rows[i][c] != 0 {
                let f = rows[i][c];
                for j in 0..ncols {
                    rows[i][j] = (rows[i][j] + p * p - f * rows[r][j] % p) % p;
                }
            }
        }
        pivots.push(c);
        r += 1;
    }
    pivots
}

pub fn rank_mod_p(rows: &[Vec<u64>], p: u64) -> usize {
    let mut work = rows.to_vec();
    rref_mod_p(&mut work, p).len()
}

/// Smith normal form `U A V = D` with unimodular `U`, `V`.
/// Returns `(d, u_inv, v_inv)` so that `A = u_inv * D * v_inv`.
pub struct Smith {
    pub diagonal: Vec<BigInt>,
    pub u_inv: Vec<Vec<BigInt>>,
    pub v_inv: Vec<Vec<BigInt>>,
}

fn identity(n: usize) -> Vec<Vec<BigInt>> {
    (0..n).map(|i| (0..n).map(|j| if i == j { BigInt::one() } else { BigInt::zero() }).collect()).collect()
}

pub fn smith(a: &IntMatrix) -> Smith {
    let (nr, nc) = (a.nrows(), a.ncols());
    let mut m: Vec<Vec<BigInt>> = (0..nr).map(|i| (0..nc).map(|j| BigInt::from(a[(i, j)])).collect()).collect();
    let mut u_inv = identity(nr);
    let mut v_inv = identity(nc);

    // Row op: row_i += f * row_j  =>  u_inv: col_j -= f * col_i.
    fn row_add(m: &mut [Vec<BigInt>], u_inv: &mut [Vec<BigInt>], i: usize, j: usize, f: &BigInt) {
        for c in 0..m[0].len() {
            let t = f * &m[j][c];
            m[i][c] += t;
        }
        for row in u_inv.iter_mut() {
            let t = f * &row[i];
            row[j] -= t;
        }
    }
    // Column op: col_i += f * col_j  =>  v_inv: row_j -= f * row_i.
    fn col_add(m: &mut [Vec<BigInt>], v_inv: &mut [Vec<BigInt>], i: usize, j: usize, f: &BigInt) {
        for row in m.iter_mut() {
            let t = f * &row[j];
            row[i] += t;
        }
        let ri = v_inv[i].clone();
        for (c, v) in ri.iter().enumerate() {
            let t = f * v;
            v_inv[j][c] -= t;
        }
    }
    fn row_swap(m: &mut [Vec<BigInt>], u_inv: &mut [Vec<BigInt>], i: usize, j: usize) {
        m.swap(i, j);
        for row in u_inv.iter_mut() {
            row.swap(i, j);
        }
    }
    fn col_swap(m: &mut [Vec<BigInt>], v_inv: &mut [Vec<BigInt>], i: usize, j: usize) {
        for row in m.iter_mut() {
            row.swap(i, j);
        }
        v_inv.swap(i, j);
    }

    let mut t = 0;
    while t < nr.min(nc) {
        // Smallest nonzero entry in the trailing block becomes the pivot.
        let mut best: Option<(usize, usize)> = None;
        for i in t..nr {
            for j in t..nc {
                if !m[i][j].is_zero() && best.is_none_or(|(bi, bj)| m[i][j].abs() < m[bi][bj].abs()) {
                    best = Some((i, j));
                }
            }
        }
        let Some((bi, bj)) = best else { break };
        row_swap(&mut m, &mut u_inv, t, bi);
        col_swap(&mut m, &mut v_inv, t, bj);
        let mut clean = true;
        for i in t + 1..nr {
            if !m[i][t].is_zero() {
                let f = -(m[i][t].div_floor(&m[t][t]));
                row_add(&mut m, &mut u_inv, i, t, &f);
                if !m[i][t].is_zero() {
                    clean = false;
                }
            }
        }
        for j in t + 1..nc {
            if !m[t][j].is_zero() {
                let f = -(m[t][j].div_floor(&m[t][t]));
                col_add(&mut m, &mut v_inv, j, t, &f);
                if !m[t][j].is_zero() {
                    clean = false;
                }
            }
        }
        if !clean {
            continue;
        }
        // Pivot must divide the whole trailing block.
        let bad = (t + 1..nr).flat_map(|i| (t + 1..nc).map(move |j| (i, j))).find(|&(i, j)| !m[i][j].is_multiple_of(&m[t][t]));
        if let Some((i, _)) = bad {
            let one = BigInt::one();
            row_add(&mut m, &mut u_inv, t, i, &one);
            continue;
        }
        if m[t][t].is_negative() {
            for c in 0..nc {
                m[t][c] = -m[t][c].clone();
            }
            for row in u_inv.iter_mut() {
                row[t] = -row[t].clone();
            }
        }
        t += 1;
    }
    let diagonal = (0..nr.min(nc)).map(|i| m[i][i].clone()).collect();
    Smith { diagonal, u_inv, v_inv }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::int_matrix;

    #[test]
    fn bareiss_small() {
        assert_eq!(det_bigint(&int_matrix(&[[1, 1], [1, 2]])), BigInt::from(1));
        assert_eq!(det_bigint(&int_matrix(&[[0, 1], [1, 0]])), BigInt::from(-1));
        assert_eq!(det_bigint(&int_matrix(&[[2, 4], [1, 2]])), BigInt::from(0));
        assert_eq!(det_bigint(&int_matrix(&[[2, 0, 1], [1, 3, 2], [1, 1, 2]])), BigInt::from(6));
    }

    #[test]
    fn smith_reconstructs() {
        for a in [
            int_matrix(&[[2, 2]]),
            int_matrix(&[[2, 4, 4], [-6, 6, 12], [10, -4, -16]]),
            int_matrix(&[[1, 1], [1, 2]]),
            int_matrix(&[[0, 0], [0, 3]]),
        ] {
            let s = smith(&a);
            let (nr, nc) = (a.nrows(), a.ncols());
            for i in 0..nr {
                for j in 0..nc {
                    let mut acc = BigInt::zero();
                    for k in 0..nr.min(nc) {
                        acc += &s.u_inv[i][k] * &s.diagonal[k] * &s.v_inv[k][j];
                    }
                    assert_eq!(acc, BigInt::from(a[(i, j)]), "entry ({i},{j}) of {a}");
                }
            }
            for w in s.diagonal.windows(2) {
                assert!(w[1].is_zero() || w[1].is_multiple_of(&w[0]));
            }
        }
        let s = smith(&int_matrix(&[[2, 4, 4], [-6, 6, 12], [10, -4, -16]]));
        assert_eq!(s.diagonal, vec![BigInt::from(2), BigInt::from(6), BigInt::from(12)]);
    }

    #[test]
    fn solve_left_particular_solution() {
        let b = int_to_rational_rows(&int_matrix(&[[1, 1, 1]]));
        assert_eq!(solve_left(&b, &[q(-1), q(-1), q(-1)]), Some(vec![q(-1)]));
        assert_eq!(solve_left(&b, &[q(1), q(0), q(0)]), None);
        let two = int_to_rational_rows(&int_matrix(&[[1, 0], [1, 0]]));
        assert_eq!(solve_left(&two, &[q(3), q(0)]), Some(vec![q(3), q(0)]));
    }

    #[test]
    fn mod_p_helpers() {
        assert!(is_prime(13) && !is_prime(1) && !is_prime(9));
        assert_eq!(inv_mod(3, 5), Some(2));
        assert_eq!(mod_p(-1, 5), 4);
        assert_eq!(rational_mod_p(&Q::new(BigInt::from(1), BigInt::from(2)), 5), Some(3));
        assert_eq!(rational_mod_p(&Q::new(BigInt::from(1), BigInt::from(5)), 5), None);
        assert_eq!(rank_mod_p(&[vec![1, 2], vec![2, 4]], 5), 1);
    }
}
