//! Channel model, effective matrices and effective noise variances.
//!
//! Everything here assumes unit-variance receiver noise: `Y = H X + Z`.

use nalgebra::{Cholesky, DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{dim, Error, Result};

/// Signed integer matrix. Rows are coefficient vectors.
pub type IntMatrix = DMatrix<i64>;

/// Relative tolerance used for numerical rank decisions.
pub const RANK_TOL: f64 = 1e-10;

/// Build an integer matrix from row slices.
pub fn int_matrix<R: AsRef<[i64]>>(rows: &[R]) -> IntMatrix {
    let nrows = rows.len();
    let ncols = rows.first().map_or(0, |r| r.as_ref().len());
    DMatrix::from_fn(nrows, ncols, |i, j| rows[i].as_ref()[j])
}

/// Row `m` of an integer matrix as an owned vector.
pub fn int_row(a: &IntMatrix, m: usize) -> Vec<i64> {
    a.row(m).iter().copied().collect()
}

/// Rows as nested vectors (row-major), convenient for serialization.
pub fn int_rows(a: &IntMatrix) -> Vec<Vec<i64>> {
    (0..a.nrows()).map(|m| int_row(a, m)).collect()
}

/// First `m` rows of `a`.
pub fn int_prefix(a: &IntMatrix, m: usize) -> IntMatrix {
    a.rows(0, m).into_owned()
}

pub fn to_real(a: &IntMatrix) -> DMatrix<f64> {
    a.map(|v| v as f64)
}

/// Rate in bits per channel use; a zero effective noise gives an unbounded rate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Rate {
    Finite(f64),
    Unbounded,
}

impl Serialize for Rate {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            Rate::Finite(r) => s.serialize_f64(*r),
            Rate::Unbounded => s.serialize_str("unbounded"),
        }
    }
}

impl Rate {
    pub fn value(self) -> f64 {
        match self {
            Rate::Finite(r) => r,
            Rate::Unbounded => f64::INFINITY,
        }
    }

    pub fn is_unbounded(self) -> bool {
        matches!(self, Rate::Unbounded)
    }

    pub fn min(self, other: Rate) -> Rate {
        match (self, other) {
            (Rate::Unbounded, r) | (r, Rate::Unbounded) => r,
            (Rate::Finite(a), Rate::Finite(b)) => Rate::Finite(a.min(b)),
        }
    }
}

/// `max(0, log2 x)`.
pub fn log2_plus(x: f64) -> f64 {
    if x <= 1.0 {
        0.0
    } else {
        x.log2()
    }
}

/// `1/2 log+ (power / variance)` with the zero-variance case made explicit.
pub fn half_log_plus(power: f64, variance: f64) -> Rate {
    if power <= 0.0 {
        Rate::Finite(0.0)
    } else if variance <= 0.0 {
        Rate::Unbounded
    } else {
        Rate::Finite(0.5 * log2_plus(power / variance))
    }
}

/// Real channel matrix `H` (receive antennas x users) with per-user powers `P`.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelInstance {
    h: DMatrix<f64>,
    p: DVector<f64>,
}

/// Plain-data form used for JSON input and output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChannelSpec {
    #[serde(rename = "H")]
    pub h: Vec<Vec<f64>>,
    #[serde(rename = "P")]
    pub p: Vec<f64>,
}

impl ChannelInstance {
    pub fn new(h: DMatrix<f64>, p: DVector<f64>) -> Result<Self> {
        if h.nrows() == 0 || h.ncols() == 0 {
            return dim("channel matrix must have at least one row and one column");
        }
        if h.ncols() != p.len() {
            return dim(format!("H has {} columns but P has {} entries", h.ncols(), p.len()));
        }
        if h.iter().any(|v| !v.is_finite()) {
            return Err(Error::Domain("channel matrix has non-finite entries".into()));
        }
        if let Some(user) = p.iter().position(|&v| !v.is_finite() || v < 0.0) {
            return Err(Error::Domain(format!("power of user {user} must be finite and nonnegative")));
        }
        Ok(Self { h, p })
    }

    pub fn from_rows<R: AsRef<[f64]>>(h: &[R], p: &[f64]) -> Result<Self> {
        let nrows = h.len();
        let ncols = h.first().map_or(0, |r| r.as_ref().len());
        if h.iter().any(|r| r.as_ref().len() != ncols) {
            return dim("ragged channel matrix");
        }
        let hm = DMatrix::from_fn(nrows, ncols, |i, j| h[i].as_ref()[j]);
        Self::new(hm, DVector::from_column_slice(p))
    }

    pub fn from_spec(spec: &ChannelSpec) -> Result<Self> {
        Self::from_rows(&spec.h, &spec.p)
    }

    pub fn to_spec(&self) -> ChannelSpec {
        ChannelSpec {
            h: (0..self.h.nrows()).map(|i| self.h.row(i).iter().copied().collect()).collect(),
            p: self.p.iter().copied().collect(),
        }
    }

    pub fn h(&self) -> &DMatrix<f64> {
        &self.h
    }

    pub fn p(&self) -> &DVector<f64> {
        &self.p
    }

    pub fn users(&self) -> usize {
        self.h.ncols()
    }

    pub fn antennas(&self) -> usize {
        self.h.nrows()
    }

    /// Channel restricted to the listed users (in the given order).
    pub fn select_users(&self, users: &[usize]) -> ChannelInstance {
        let h = DMatrix::from_fn(self.h.nrows(), users.len(), |i, j| self.h[(i, users[j])]);
        let p = DVector::from_iterator(users.len(), users.iter().map(|&u| self.p[u]));
        ChannelInstance { h, p }
    }

    pub fn positive_power_users(&self) -> Vec<usize> {
        (0..self.users()).filter(|&u| self.p[u] > 0.0).collect()
    }

    pub fn max_singular_value(&self) -> f64 {
        self.h.singular_values().max()
    }

    pub fn satisfies(&self, bound: &ChannelBound) -> bool {
        self.max_singular_value() <= bound.max_singular_value
    }

    fn require_positive_powers(&self) -> Result<()> {
        match self.p.iter().position(|&v| v <= 0.0) {
            Some(user) => Err(Error::ZeroPower { user }),
            None => Ok(()),
        }
    }

    /// `I + H P H^T`.
    pub fn receive_covariance(&self) -> DMatrix<f64> {
        let hp = &self.h * DMatrix::from_diagonal(&self.p);
        DMatrix::identity(self.antennas(), self.antennas()) + hp * self.h.transpose()
    }
}

/// Upper limit on the largest singular value of admissible channels.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChannelBound {
    pub max_singular_value: f64,
}

impl Default for ChannelBound {
    fn default() -> Self {
        Self { max_singular_value: f64::INFINITY }
    }
}

/// Output of the MMSE effective-noise computations.
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseReport {
    pub variance: f64,
    pub b_opt: DVector<f64>,
    pub c_opt: Option<DVector<f64>>,
    pub projector: Option<DMatrix<f64>>,
}

/// `(P^{-1} + H^T H)^{-1}`.
pub fn gram_matrix(ch: &ChannelInstance) -> Result<DMatrix<f64>> {
    ch.require_positive_powers()?;
    let l = ch.users();
    let pinv = DMatrix::from_diagonal(&ch.p.map(|v| 1.0 / v));
    let m = pinv + ch.h.transpose() * &ch.h;
    let chol = Cholesky::new(m).ok_or_else(|| Error::Domain("P^-1 + H^T H is not positive definite".into()))?;
    let inv = chol.inverse();
    debug_assert_eq!(inv.nrows(), l);
    Ok(symmetrize(inv))
}

/// `P - P H^T (I + H P H^T)^{-1} H P`; defined for zero powers as well.
pub fn woodbury_gram(ch: &ChannelInstance) -> DMatrix<f64> {
    let pd = DMatrix::from_diagonal(&ch.p);
    let hp = &ch.h * &pd;
    let k = ch.receive_covariance();
    let solved = Cholesky::new(k).expect("I + HPH^T is positive definite").solve(&hp);
    symmetrize(&pd - hp.transpose() * solved)
}

fn symmetrize(m: DMatrix<f64>) -> DMatrix<f64> {
    (&m + m.transpose()) * 0.5
}

/// Lower-triangular `F` with `F^T F = (P^{-1} + H^T H)^{-1}`.
pub fn effective_matrix(ch: &ChannelInstance) -> Result<DMatrix<f64>> {
    let m = gram_matrix(ch)?;
    let check = woodbury_gram(ch);
    let scale = m.amax().max(1.0);
    if (&m - &check).amax() > 1e-8 * scale {
        return Err(Error::Domain("Gram matrix and Woodbury form disagree; channel is ill-conditioned".into()));
    }
    Ok(lower_factor(&m))
}

/// Lower-triangular `F` with `F^T F = m` for symmetric positive definite `m`.
pub fn lower_factor(m: &DMatrix<f64>) -> DMatrix<f64> {
    let l = m.nrows();
    // Reversing rows and columns turns the usual Cholesky factor into the one we want.
    let rev = DMatrix::from_fn(l, l, |i, j| m[(l - 1 - i, l - 1 - j)]);
    let c = Cholesky::new(rev).expect("positive definite").unpack();
    // J C J is upper triangular U with U U^T = m, hence F = U^T.
    DMatrix::from_fn(l, l, |i, j| c[(l - 1 - j, l - 1 - i)])
}

fn check_len(what: &str, got: usize, want: usize) -> Result<()> {
    if got != want {
        return dim(format!("{what} has length {got}, expected {want}"));
    }
    Ok(())
}

fn int_vec(a: &[i64]) -> DVector<f64> {
    DVector::from_iterator(a.len(), a.iter().map(|&v| v as f64))
}

/// `||b||^2 + ||(b^T H - a^T) P^{1/2}||^2`.
pub fn sigma_para_eval(ch: &ChannelInstance, a: &[i64], b: &DVector<f64>) -> Result<f64> {
    check_len("coefficient vector", a.len(), ch.users())?;
    check_len("equalizer", b.len(), ch.antennas())?;
    let mismatch = ch.h.transpose() * b - int_vec(a);
    Ok(b.norm_squared() + weighted_norm(&mismatch, &ch.p))
}

fn weighted_norm(v: &DVector<f64>, p: &DVector<f64>) -> f64 {
    v.iter().zip(p.iter()).map(|(x, w)| x * x * w).sum()
}

/// MMSE equalizer and minimal effective noise for a single combination.
pub fn sigma_para_opt(ch: &ChannelInstance, a: &[i64]) -> Result<NoiseReport> {
    check_len("coefficient vector", a.len(), ch.users())?;
    let m = gram_matrix(ch)?;
    let av = int_vec(a);
    let variance = av.dot(&(&m * &av)).max(0.0);
    Ok(NoiseReport { variance, b_opt: mmse_b(ch, &av), c_opt: None, projector: None })
}

/// `b^T = t^T P H^T (I + H P H^T)^{-1}` for target vector `t`.
fn mmse_b(ch: &ChannelInstance, t: &DVector<f64>) -> DVector<f64> {
    let rhs = &ch.h * t.component_mul(&ch.p);
    Cholesky::new(ch.receive_covariance()).expect("positive definite").solve(&rhs)
}

/// `||b||^2 + ||(b^T H + c^T A_prev - a^T) P^{1/2}||^2`.
pub fn sigma_succ_eval(
    ch: &ChannelInstance,
    a: &[i64],
    a_prev: &IntMatrix,
    b: &DVector<f64>,
    c: &DVector<f64>,
) -> Result<f64> {
    check_len("coefficient vector", a.len(), ch.users())?;
    check_len("equalizer", b.len(), ch.antennas())?;
    check_len("side-information equalizer", c.len(), a_prev.nrows())?;
    if a_prev.nrows() > 0 {
        check_len("previous coefficient rows", a_prev.ncols(), ch.users())?;
    }
    let mut mismatch = ch.h.transpose() * b - int_vec(a);
    if a_prev.nrows() > 0 {
        mismatch += to_real(a_prev).transpose() * c;
    }
    Ok(b.norm_squared() + weighted_norm(&mismatch, &ch.p))
}

/// Numerical rank with singular values below `RANK_TOL * s_max` treated as zero.
pub fn numerical_rank(m: &DMatrix<f64>) -> usize {
    if m.nrows() == 0 || m.ncols() == 0 {
        return 0;
    }
    let sv = m.singular_values();
    let smax = sv.max();
    if smax == 0.0 {
        return 0;
    }
    sv.iter().filter(|&&s| s > RANK_TOL * smax).count()
}

/// MMSE equalizers `(b, c)` and minimal effective noise given side information `A_prev X`.
pub fn sigma_succ_opt(ch: &ChannelInstance, a: &[i64], a_prev: &IntMatrix) -> Result<NoiseReport> {
    if a_prev.nrows() == 0 {
        return sigma_para_opt(ch, a);
    }
    check_len("coefficient vector", a.len(), ch.users())?;
    check_len("previous coefficient rows", a_prev.ncols(), ch.users())?;
    let ar = to_real(a_prev);
    if numerical_rank(&ar) < a_prev.nrows() {
        return Err(Error::Precondition("side-information rows are not linearly independent".into()));
    }
    let m = gram_matrix(ch)?;
    let f = lower_factor(&m);
    let av = int_vec(a);
    let g = &ar * &m * ar.transpose();
    let g_chol = Cholesky::new(g).ok_or_else(|| Error::Precondition("A M A^T is singular".into()))?;
    let c = g_chol.solve(&(&ar * &m * &av));
    let fa_t = &f * ar.transpose();
    let l = ch.users();
    let projector = symmetrize(DMatrix::identity(l, l) - &fa_t * g_chol.solve(&fa_t.transpose()));
    let variance = (&projector * &f * &av).norm_squared();
    let target = &av - ar.transpose() * &c;
    Ok(NoiseReport { variance, b_opt: mmse_b(ch, &target), c_opt: Some(c), projector: Some(projector) })
}

/// Chained successive variances `sigma^2_succ(a_m | A_{m-1})` for every row.
///
/// Zero-power users are dropped and dependent side-information rows are skipped,
/// which leaves the span (and hence the variance) unchanged.
pub fn succ_chain(ch: &ChannelInstance, a: &IntMatrix) -> Result<Vec<f64>> {
    check_len("coefficient rows", a.ncols(), ch.users())?;
    let keep = ch.positive_power_users();
    if keep.is_empty() {
        return Ok(vec![0.0; a.nrows()]);
    }
    let sub = ch.select_users(&keep);
    let reduced = DMatrix::from_fn(a.nrows(), keep.len(), |i, j| a[(i, keep[j])]);
    let mut basis: Vec<usize> = Vec::new();
    let mut out = Vec::with_capacity(a.nrows());
    for m in 0..a.nrows() {
        let row = int_row(&reduced, m);
        let mut cand = basis.clone();
        cand.push(m);
        let stacked = DMatrix::from_fn(cand.len(), keep.len(), |i, j| reduced[(cand[i], j)]);
        if crate::exact::rank_int(&stacked) < cand.len() {
            // Already known exactly from earlier rows.
            out.push(0.0);
            continue;
        }
        let prev = DMatrix::from_fn(basis.len(), keep.len(), |i, j| reduced[(basis[i], j)]);
        out.push(sigma_succ_opt(&sub, &row, &prev)?.variance);
        basis = cand;
    }
    Ok(out)
}

/// Parallel variances for every row, with zero-power users dropped.
pub fn para_variances(ch: &ChannelInstance, a: &IntMatrix) -> Result<Vec<f64>> {
    check_len("coefficient rows", a.ncols(), ch.users())?;
    let keep = ch.positive_power_users();
    if keep.is_empty() {
        return Ok(vec![0.0; a.nrows()]);
    }
    let sub = ch.select_users(&keep);
    (0..a.nrows())
        .map(|m| {
            let row: Vec<i64> = keep.iter().map(|&u| a[(m, u)]).collect();
            sigma_para_opt(&sub, &row).map(|r| r.variance)
        })
        .collect()
}

/// `1/2 log2 det(I + H P H^T)`.
pub fn sum_capacity(ch: &ChannelInstance) -> f64 {
    half_log2_det(&ch.receive_covariance())
}

/// `1/2 log2 det(m)` for symmetric positive definite `m`.
pub fn half_log2_det(m: &DMatrix<f64>) -> f64 {
    let chol = Cholesky::new(m.clone()).expect("positive definite");
    chol.l().diagonal().iter().map(|d| d.log2()).sum()
}

/// Largest eigenvalue of a symmetric matrix.
pub fn lambda_max_sym(m: &DMatrix<f64>) -> f64 {
    SymmetricEigen::new(m.clone()).eigenvalues.max()
}
