//! Monte-Carlo of lattice encoding, parallel decoding and successive decoding,
//! with the true combinations tracked alongside every estimate.

use std::collections::BTreeSet;
use std::fmt::Write as _;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{Beta, ContinuousCDF};

use crate::channel::{int_matrix, int_row, sigma_para_opt, sigma_succ_opt, ChannelInstance, IntMatrix};
use crate::error::{dim, Error, Result};
use crate::exact::{self, mod_p, rational_mod_p};
use crate::lattice::{EnsembleSpec, LatticeId, LatticePoint, NestedLatticeEnsemble};
use crate::regions::{all_pairs, fmt6, is_admissible, Pair, Scheme};

/// Smallest noise level used when computing MMSE equalizers.
pub const EQUALIZER_NOISE_FLOOR: f64 = 1e-6;
/// Tolerance for comparing a recovered real sum against `a^T X`.
pub const REAL_SUM_TOL: f64 = 1e-9;

/// Equalizer vectors: `b[m]` has one entry per antenna, `c[m]` one per earlier row.
#[derive(Debug, Clone, PartialEq)]
pub struct EqualizerSet {
    pub b: Vec<DVector<f64>>,
    pub c: Vec<DVector<f64>>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Equalizers {
    Optimal,
    Explicit(EqualizerSet),
}

fn scaled_channel(ch: &ChannelInstance, noise_std: f64) -> Result<(ChannelInstance, f64)> {
    let sigma = noise_std.max(EQUALIZER_NOISE_FLOOR);
    Ok((ChannelInstance::new(ch.h() / sigma, ch.p().clone())?, sigma))
}

/// MMSE equalizers for noise standard deviation `noise_std`, floored at
/// `EQUALIZER_NOISE_FLOOR`. Successive equalizers use only the linearly
/// independent earlier rows as side information.
pub fn optimal_equalizers(ch: &ChannelInstance, a: &IntMatrix, scheme: Scheme, noise_std: f64) -> Result<EqualizerSet> {
    let (sc, sigma) = scaled_channel(ch, noise_std)?;
    let mut b = Vec::with_capacity(a.nrows());
    let mut c = Vec::with_capacity(a.nrows());
    let mut basis: Vec<usize> = Vec::new();
    for m in 0..a.nrows() {
        let row = int_row(a, m);
        let report = match scheme {
            Scheme::Parallel => sigma_para_opt(&sc, &row)?,
            Scheme::Successive => {
                let prev = DMatrix::from_fn(basis.len(), a.ncols(), |i, j| a[(basis[i], j)]);
                sigma_succ_opt(&sc, &row, &prev)?
            }
        };
        b.push(report.b_opt / sigma);
        let mut cm = DVector::zeros(m);
        if let Some(cv) = report.c_opt {
            for (k, &i) in basis.iter().enumerate() {
                cm[i] = cv[k];
            }
        }
        c.push(cm);
        let mut cand = basis.clone();
        cand.push(m);
        let stacked = DMatrix::from_fn(cand.len(), a.ncols(), |i, j| a[(cand[i], j)]);
        if exact::rank_int(&stacked) == cand.len() {
            basis = cand;
        }
    }
    Ok(EqualizerSet { b, c })
}

/// Uniform sample from the Voronoi region of `Lambda_{C,l}`: a uniform point of
/// `[0, gamma)^n` reduced modulo the lattice.
pub fn sample_dither<R: Rng + ?Sized>(ens: &NestedLatticeEnsemble, l: usize, rng: &mut R) -> Result<Vec<f64>> {
    let x: Vec<f64> = (0..ens.n()).map(|_| rng.random::<f64>() * ens.gamma()).collect();
    ens.mod_lattice(LatticeId::Coarse(l), &x)
}

fn add_points(a: &LatticePoint, b: &LatticePoint, k: i64) -> LatticePoint {
    LatticePoint { z: a.z.iter().zip(&b.z).map(|(x, y)| x + k * y).collect() }
}

/// `lambda = [label_inverse(padded w)] mod Lambda_{C,l}`, `x = [lambda + d] mod Lambda_{C,l}`.
pub fn encode(ens: &NestedLatticeEnsemble, l: usize, w: &[u64], d: &[f64]) -> Result<(LatticePoint, Vec<f64>)> {
    if d.len() != ens.n() {
        return dim(format!("dither has length {}, expected {}", d.len(), ens.n()));
    }
    let coarse = LatticeId::Coarse(l);
    if ens.nearest_point(coarse, d)?.z.iter().any(|&v| v != 0) {
        return Err(Error::Domain(format!("dither of user {l} lies outside the coarse Voronoi region")));
    }
    let label = ens.embed_message(l, w)?;
    let lambda = ens.mod_point(coarse, &ens.label_inverse(&label)?)?;
    let shifted: Vec<f64> = ens.coords(&lambda).iter().zip(d).map(|(a, b)| a + b).collect();
    Ok((lambda, ens.mod_lattice(coarse, &shifted)?))
}

/// `lambda - Q_{C,l}(lambda + d)`.
pub fn lambda_tilde(ens: &NestedLatticeEnsemble, l: usize, lambda: &LatticePoint, d: &[f64]) -> Result<LatticePoint> {
    let shifted: Vec<f64> = ens.coords(lambda).iter().zip(d).map(|(a, b)| a + b).collect();
    let q = ens.nearest_point(LatticeId::Coarse(l), &shifted)?;
    Ok(add_points(lambda, &q, -1))
}

/// `mu_m = [sum_l a_{m,l} lambda_tilde_l] mod Lambda_C` and its label `u_m`.
pub fn true_combinations(
    ens: &NestedLatticeEnsemble,
    a: &IntMatrix,
    tilde: &[LatticePoint],
) -> Result<(Vec<LatticePoint>, Vec<Vec<u64>>)> {
    if a.ncols() != tilde.len() {
        return dim(format!("{} columns for {} users", a.ncols(), tilde.len()));
    }
    let mut mus = Vec::with_capacity(a.nrows());
    let mut us = Vec::with_capacity(a.nrows());
    for m in 0..a.nrows() {
        let mut acc = LatticePoint { z: vec![0; ens.n()] };
        for (l, t) in tilde.iter().enumerate() {
            acc = add_points(&acc, t, a[(m, l)]);
        }
        let mu = ens.mod_point(LatticeId::CoarseAll, &acc)?;
        us.push(ens.linear_label(&mu)?);
        mus.push(mu);
    }
    Ok((mus, us))
}

fn dither_sum(a: &IntMatrix, m: usize, dithers: &[Vec<f64>], n: usize) -> Vec<f64> {
    let mut out = vec![0.0; n];
    for (l, d) in dithers.iter().enumerate() {
        let k = a[(m, l)] as f64;
        for (o, v) in out.iter_mut().zip(d) {
            *o += k * v;
        }
    }
    out
}

fn equalize(b: &DVector<f64>, y: &DMatrix<f64>) -> Result<Vec<f64>> {
    if b.len() != y.nrows() {
        return dim(format!("equalizer has length {}, observation has {} rows", b.len(), y.nrows()));
    }
    Ok((y.transpose() * b).iter().copied().collect())
}

/// Finest participating fine lattice among `users`, or `None` when nobody participates.
fn finest(ens: &NestedLatticeEnsemble, users: impl Iterator<Item = usize>) -> Option<LatticeId> {
    let mut best: Option<usize> = None;
    for l in users {
        if best.is_none_or(|b| ens.levels()[l].1 > ens.levels()[b].1) {
            best = Some(l);
        }
    }
    best.map(LatticeId::Fine)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParallelDecode {
    pub mu_hat: Vec<LatticePoint>,
    pub u_hat: Vec<Vec<u64>>,
    /// False where every coefficient of the row vanishes mod p.
    pub theta_defined: Vec<bool>,
}

/// Parallel decoder: quantize `b_m^T Y - sum_l a_{m,l} d_l` onto the finest
/// participating fine lattice, reduce modulo `Lambda_C`, then label.
pub fn decode_parallel(
    ens: &NestedLatticeEnsemble,
    y: &DMatrix<f64>,
    a: &IntMatrix,
    dithers: &[Vec<f64>],
    eq: &EqualizerSet,
) -> Result<ParallelDecode> {
    check_decode_inputs(ens, y, a, dithers, eq)?;
    let p = ens.p();
    let n = ens.n();
    let mut out = ParallelDecode { mu_hat: Vec::new(), u_hat: Vec::new(), theta_defined: Vec::new() };
    for m in 0..a.nrows() {
        let Some(theta) = finest(ens, (0..a.ncols()).filter(|&l| mod_p(a[(m, l)], p) != 0)) else {
            out.mu_hat.push(LatticePoint { z: vec![0; n] });
            out.u_hat.push(vec![0; ens.k()]);
            out.theta_defined.push(false);
            continue;
        };
        let yt = equalize(&eq.b[m], y)?;
        let arg: Vec<f64> = yt.iter().zip(dither_sum(a, m, dithers, n)).map(|(y, d)| y - d).collect();
        let mu = ens.mod_point(LatticeId::CoarseAll, &ens.nearest_point(theta, &arg)?)?;
        out.u_hat.push(ens.linear_label(&mu)?);
        out.mu_hat.push(mu);
        out.theta_defined.push(true);
    }
    Ok(out)
}

fn check_decode_inputs(
    ens: &NestedLatticeEnsemble,
    y: &DMatrix<f64>,
    a: &IntMatrix,
    dithers: &[Vec<f64>],
    eq: &EqualizerSet,
) -> Result<()> {
    if a.ncols() != ens.users() || dithers.len() != ens.users() {
        return dim(format!("{} columns and {} dithers for {} users", a.ncols(), dithers.len(), ens.users()));
    }
    if y.ncols() != ens.n() {
        return dim(format!("observation has {} columns, blocklength is {}", y.ncols(), ens.n()));
    }
    if eq.b.len() != a.nrows() || eq.c.len() != a.nrows() {
        return dim(format!("{} equalizers for {} combinations", eq.b.len(), a.nrows()));
    }
    Ok(())
}

/// Lower unitriangular `L` over `Z_p` realizing the mapping, and its inverse.
pub fn zp_asc_matrix(a: &IntMatrix, mapping: &BTreeSet<Pair>, p: u64) -> Result<(Vec<Vec<u64>>, Vec<Vec<u64>>)> {
    if !exact::is_prime(p) {
        return Err(Error::Domain(format!("{p} is not prime")));
    }
    let witness = is_admissible(a, mapping)?
        .ok_or_else(|| Error::Precondition("mapping is not admissible for this coefficient matrix".into()))?;
    let n = witness.l.len();
    let mut l = vec![vec![0u64; n]; n];
    for (i, row) in witness.l.iter().enumerate() {
        for (j, v) in row.iter().enumerate() {
            l[i][j] = rational_mod_p(v, p)
                .ok_or_else(|| Error::PTooSmall(format!("entry ({i}, {j}) = {v} has a denominator divisible by {p}")))?;
        }
    }
    let mut inv = vec![vec![0u64; n]; n];
    for m in 0..n {
        inv[m][m] = 1;
        for i in (0..m).rev() {
            let s: u64 = (i..m).map(|k| l[m][k] * inv[k][i] % p).sum::<u64>() % p;
            inv[m][i] = (p - s) % p;
        }
    }
    Ok((l, inv))
}

/// `chi = [mu + sum a_l d_l] mod Lambda_C`, `s = Q_C(y_tilde - chi) + chi`.
pub fn recover_real_combo(
    ens: &NestedLatticeEnsemble,
    y_tilde: &[f64],
    mu: &LatticePoint,
    dithers: &[Vec<f64>],
    a_row: &[i64],
) -> Result<Vec<f64>> {
    let n = ens.n();
    if y_tilde.len() != n || a_row.len() != dithers.len() {
        return dim("real-sum recovery inputs have mismatched lengths");
    }
    let mut shifted = ens.coords(mu);
    for (l, d) in dithers.iter().enumerate() {
        for (s, v) in shifted.iter_mut().zip(d) {
            *s += a_row[l] as f64 * v;
        }
    }
    let chi = ens.mod_lattice(LatticeId::CoarseAll, &shifted)?;
    let diff: Vec<f64> = y_tilde.iter().zip(&chi).map(|(y, c)| y - c).collect();
    let q = ens.coords(&ens.nearest_point(LatticeId::CoarseAll, &diff)?);
    Ok(q.iter().zip(&chi).map(|(a, b)| a + b).collect())
}

#[derive(Debug, Clone, PartialEq)]
pub struct SuccessiveDecode {
    pub mu_hat: Vec<LatticePoint>,
    pub u_hat: Vec<Vec<u64>>,
    pub s_hat: Vec<Vec<f64>>,
}

/// Successive decoder with algebraic cancellation over `Z_p` and real side information.
pub fn decode_successive(
    ens: &NestedLatticeEnsemble,
    y: &DMatrix<f64>,
    a: &IntMatrix,
    mapping: &BTreeSet<Pair>,
    dithers: &[Vec<f64>],
    eq: &EqualizerSet,
) -> Result<SuccessiveDecode> {
    check_decode_inputs(ens, y, a, dithers, eq)?;
    let n = ens.n();
    let (lbar, lbar_inv) = zp_asc_matrix(a, mapping, ens.p())?;
    let mut nu_hat: Vec<LatticePoint> = Vec::new();
    let mut out = SuccessiveDecode { mu_hat: Vec::new(), u_hat: Vec::new(), s_hat: Vec::new() };
    for m in 0..a.nrows() {
        if eq.c[m].len() != m {
            return dim(format!("side-information equalizer {m} has length {}", eq.c[m].len()));
        }
        let mut yt = equalize(&eq.b[m], y)?;
        for (i, s) in out.s_hat.iter().enumerate() {
            for (t, v) in yt.iter_mut().zip(s) {
                *t += eq.c[m][i] * v;
            }
        }
        let mut arg = yt.clone();
        for (i, mu) in out.mu_hat.iter().enumerate() {
            let k = lbar[m][i] as f64;
            for (t, v) in arg.iter_mut().zip(ens.coords(mu)) {
                *t += k * v;
            }
        }
        for (t, d) in arg.iter_mut().zip(dither_sum(a, m, dithers, n)) {
            *t -= d;
        }
        let target = finest(ens, (0..a.ncols()).filter(|&l| mapping.contains(&(m, l)))).unwrap_or(LatticeId::CoarseAll);
        let nu = ens.mod_point(LatticeId::CoarseAll, &ens.nearest_point(target, &arg)?)?;
        let mut acc = nu.clone();
        for (i, prev) in nu_hat.iter().enumerate() {
            acc = add_points(&acc, prev, lbar_inv[m][i] as i64);
        }
        let mu = ens.mod_point(LatticeId::CoarseAll, &acc)?;
        out.u_hat.push(ens.linear_label(&mu)?);
        out.s_hat.push(recover_real_combo(ens, &yt, &mu, dithers, &int_row(a, m))?);
        out.mu_hat.push(mu);
        nu_hat.push(nu);
    }
    Ok(out)
}

/// One simulated configuration.
#[derive(Debug, Clone)]
pub struct TrialConfig {
    pub ensemble: NestedLatticeEnsemble,
    pub ch: ChannelInstance,
    pub a: IntMatrix,
    pub scheme: Scheme,
    /// Successive mapping; all pairs when absent.
    pub mapping: Option<BTreeSet<Pair>>,
    pub noise_std: f64,
    pub equalizers: Equalizers,
    pub master_seed: u64,
}

impl TrialConfig {
    fn validate(&self) -> Result<()> {
        let l = self.ensemble.users();
        if self.ch.users() != l || self.a.ncols() != l {
            return dim(format!(
                "ensemble has {l} users, channel {} and coefficient matrix {} columns",
                self.ch.users(),
                self.a.ncols()
            ));
        }
        if !(self.noise_std.is_finite() && self.noise_std >= 0.0) {
            return Err(Error::Domain("noise_std must be finite and nonnegative".into()));
        }
        Ok(())
    }

    pub fn mapping(&self) -> BTreeSet<Pair> {
        self.mapping.clone().unwrap_or_else(|| all_pairs(self.a.nrows(), self.a.ncols()))
    }

    pub fn equalizer_set(&self) -> Result<EqualizerSet> {
        match &self.equalizers {
            Equalizers::Optimal => optimal_equalizers(&self.ch, &self.a, self.scheme, self.noise_std),
            Equalizers::Explicit(e) => Ok(e.clone()),
        }
    }
}

/// Everything drawn and decoded in one trial.
#[derive(Debug, Clone, PartialEq)]
pub struct TrialRecord {
    pub messages: Vec<Vec<u64>>,
    pub dithers: Vec<Vec<f64>>,
    pub lambdas: Vec<LatticePoint>,
    pub inputs: Vec<Vec<f64>>,
    pub lambda_tilde: Vec<LatticePoint>,
    pub u: Vec<Vec<u64>>,
    pub u_hat: Vec<Vec<u64>>,
    /// Recovered real sums (successive only).
    pub s_hat: Option<Vec<Vec<f64>>>,
    pub success: Vec<bool>,
    /// Every `phi(lambda_tilde_l)` lies in the coset of `w_l`.
    pub coset_ok: bool,
    /// `s_hat_m == a_m^T X` per row (successive only).
    pub real_sum_ok: Option<Vec<bool>>,
}

/// Generator for trial `index`: stream `index` of the master seed.
pub fn trial_rng(master_seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(master_seed);
    rng.set_stream(index);
    rng
}

/// Noise matrix `Z` with i.i.d. `N(0, noise_std^2)` entries, row-major draw order.
fn noise<R: Rng + ?Sized>(rows: usize, cols: usize, noise_std: f64, rng: &mut R) -> DMatrix<f64> {
    let mut z = DMatrix::zeros(rows, cols);
    for i in 0..rows {
        for j in 0..cols {
            let g: f64 = rng.sample(StandardNormal);
            z[(i, j)] = noise_std * g;
        }
    }
    z
}

/// Runs trial `index` with precomputed equalizers.
pub fn simulate_trial(cfg: &TrialConfig, eq: &EqualizerSet, index: u64) -> Result<TrialRecord> {
    cfg.validate()?;
    let ens = &cfg.ensemble;
    let (l_users, n, p) = (ens.users(), ens.n(), ens.p());
    let mut rng = trial_rng(cfg.master_seed, index);
    let messages: Vec<Vec<u64>> = (0..l_users)
        .map(|l| Ok((0..ens.message_len(l)?).map(|_| rng.random_range(0..p)).collect()))
        .collect::<Result<_>>()?;
    let dithers: Vec<Vec<f64>> = (0..l_users).map(|l| sample_dither(ens, l, &mut rng)).collect::<Result<_>>()?;
    let mut lambdas = Vec::with_capacity(l_users);
    let mut inputs = Vec::with_capacity(l_users);
    let mut tilde = Vec::with_capacity(l_users);
    let mut coset_ok = true;
    for l in 0..l_users {
        let (lambda, x) = encode(ens, l, &messages[l], &dithers[l])?;
        let t = lambda_tilde(ens, l, &lambda, &dithers[l])?;
        coset_ok &= ens.coset_contains(l, &ens.linear_label(&t)?, &messages[l])?;
        lambdas.push(lambda);
        inputs.push(x);
        tilde.push(t);
    }
    let (_, u) = true_combinations(ens, &cfg.a, &tilde)?;
    let x = DMatrix::from_fn(l_users, n, |i, j| inputs[i][j]);
    let y = cfg.ch.h() * &x + noise(cfg.ch.antennas(), n, cfg.noise_std, &mut rng);
    let (u_hat, s_hat, real_sum_ok) = match cfg.scheme {
        Scheme::Parallel => (decode_parallel(ens, &y, &cfg.a, &dithers, eq)?.u_hat, None, None),
        Scheme::Successive => {
            let d = decode_successive(ens, &y, &cfg.a, &cfg.mapping(), &dithers, eq)?;
            let ok = (0..cfg.a.nrows())
                .map(|m| {
                    let truth: Vec<f64> = (0..n).map(|j| (0..l_users).map(|l| cfg.a[(m, l)] as f64 * x[(l, j)]).sum()).collect();
                    d.s_hat[m].iter().zip(&truth).all(|(s, t)| (s - t).abs() <= REAL_SUM_TOL * (1.0 + t.abs()))
                })
                .collect();
            (d.u_hat, Some(d.s_hat), Some(ok))
        }
    };
    let success = u.iter().zip(&u_hat).map(|(a, b)| a == b).collect();
    Ok(TrialRecord { messages, dithers, lambdas, inputs, lambda_tilde: tilde, u, u_hat, s_hat, success, coset_ok, real_sum_ok })
}

/// Two-sided Clopper-Pearson interval for `errors` out of `trials`.
pub fn binomial_ci(errors: usize, trials: usize, confidence: f64) -> (f64, f64) {
    if trials == 0 {
        return (0.0, 1.0);
    }
    let alpha = 1.0 - confidence;
    let (k, n) = (errors as f64, trials as f64);
    let lo = if errors == 0 { 0.0 } else { Beta::new(k, n - k + 1.0).map_or(0.0, |b| b.inverse_cdf(alpha / 2.0)) };
    let hi = if errors == trials { 1.0 } else { Beta::new(k + 1.0, n - k).map_or(1.0, |b| b.inverse_cdf(1.0 - alpha / 2.0)) };
    (lo, hi)
}

/// Confidence level of the intervals in reports.
pub const REPORT_CONFIDENCE: f64 = 0.95;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CombinationStats {
    pub combination_index: usize,
    pub errors: usize,
    pub trials: usize,
    pub rate_estimate: f64,
    pub ci_low: f64,
    pub ci_high: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrialReport {
    pub noise_std: f64,
    pub trials: usize,
    pub combinations: Vec<CombinationStats>,
    /// Mean `||x_l||^2 / n` per user.
    pub mean_power: Vec<f64>,
    pub coset_violations: usize,
    /// Trials with at least one wrong real sum (successive only).
    pub real_sum_failures: Option<usize>,
}

/// Runs `trials` trials in parallel and folds them in index order.
pub fn run_trials(cfg: &TrialConfig, trials: usize) -> Result<TrialReport> {
    cfg.validate()?;
    let eq = cfg.equalizer_set()?;
    let records: Vec<TrialRecord> =
        (0..trials as u64).into_par_iter().map(|i| simulate_trial(cfg, &eq, i)).collect::<Result<_>>()?;
    let rows = cfg.a.nrows();
    let n = cfg.ensemble.n() as f64;
    let mut errors = vec![0usize; rows];
    let mut power = vec![0.0; cfg.ensemble.users()];
    let mut coset_violations = 0;
    let mut real_sum_failures = 0;
    for r in &records {
        for (e, ok) in errors.iter_mut().zip(&r.success) {
            *e += usize::from(!ok);
        }
        for (pw, x) in power.iter_mut().zip(&r.inputs) {
            *pw += x.iter().map(|v| v * v).sum::<f64>() / n;
        }
        coset_violations += usize::from(!r.coset_ok);
        if let Some(ok) = &r.real_sum_ok {
            real_sum_failures += usize::from(ok.iter().any(|v| !v));
        }
    }
    let combinations = errors
        .iter()
        .enumerate()
        .map(|(m, &e)| {
            let (ci_low, ci_high) = binomial_ci(e, trials, REPORT_CONFIDENCE);
            let rate_estimate = if trials == 0 { 0.0 } else { e as f64 / trials as f64 };
            CombinationStats { combination_index: m, errors: e, trials, rate_estimate, ci_low, ci_high }
        })
        .collect();
    let t = trials.max(1) as f64;
    Ok(TrialReport {
        noise_std: cfg.noise_std,
        trials,
        combinations,
        mean_power: power.into_iter().map(|p| p / t).collect(),
        coset_violations,
        real_sum_failures: (cfg.scheme == Scheme::Successive).then_some(real_sum_failures),
    })
}

/// Campaign file: one configuration swept over noise levels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CampaignConfig {
    pub ensemble: EnsembleSpec,
    #[serde(rename = "H")]
    pub h: Vec<Vec<f64>>,
    #[serde(rename = "P")]
    pub p: Vec<f64>,
    #[serde(rename = "A")]
    pub a: Vec<Vec<i64>>,
    pub mode: Scheme,
    #[serde(default)]
    pub mapping: Option<Vec<Pair>>,
    pub noise_std: Vec<f64>,
    pub trials: usize,
    pub master_seed: u64,
    /// Explicit `b_m` rows; optimal equalizers when absent.
    #[serde(default)]
    pub b: Option<Vec<Vec<f64>>>,
    /// Explicit `c_m` rows, each of length `m`; zeros when absent and `b` is given.
    #[serde(default)]
    pub c: Option<Vec<Vec<f64>>>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CampaignReport {
    pub points: Vec<TrialReport>,
}

impl CampaignConfig {
    pub fn trial_config(&self, noise_std: f64) -> Result<TrialConfig> {
        let ensemble = NestedLatticeEnsemble::from_spec(&self.ensemble)?;
        let ch = ChannelInstance::from_rows(&self.h, &self.p)?;
        if self.a.iter().any(|r| r.len() != ch.users()) || self.a.is_empty() {
            return dim(format!("A must have rows of length {}", ch.users()));
        }
        let a = int_matrix(&self.a);
        let equalizers = match &self.b {
            None => Equalizers::Optimal,
            Some(b) => {
                let c = match &self.c {
                    Some(c) => c.clone(),
                    None => (0..b.len()).map(|m| vec![0.0; m]).collect(),
                };
                Equalizers::Explicit(EqualizerSet {
                    b: b.iter().map(|r| DVector::from_column_slice(r)).collect(),
                    c: c.iter().map(|r| DVector::from_column_slice(r)).collect(),
                })
            }
        };
        Ok(TrialConfig {
            ensemble,
            ch,
            a,
            scheme: self.mode,
            mapping: self.mapping.as_ref().map(|m| m.iter().copied().collect()),
            noise_std,
            equalizers,
            master_seed: self.master_seed,
        })
    }

    pub fn run(&self) -> Result<CampaignReport> {
        if self.noise_std.is_empty() {
            return Err(Error::Domain("noise_std list is empty".into()));
        }
        let points = self.noise_std.iter().map(|&s| run_trials(&self.trial_config(s)?, self.trials)).collect::<Result<_>>()?;
        Ok(CampaignReport { points })
    }
}

impl CampaignReport {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("noise_std,combination_index,errors,trials,rate_estimate,ci_low,ci_high\n");
        for p in &self.points {
            for c in &p.combinations {
                let _ = writeln!(
                    out,
                    "{},{},{},{},{},{},{}",
                    fmt6(p.noise_std),
                    c.combination_index,
                    c.errors,
                    c.trials,
                    fmt6(c.rate_estimate),
                    fmt6(c.ci_low),
                    fmt6(c.ci_high)
                );
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::BTreeSet;

    fn small() -> NestedLatticeEnsemble {
        NestedLatticeEnsemble::build(2, 3, 3.0, &[(0, 1), (0, 2)], 5).unwrap()
    }

    #[test]
    fn zero_message_zero_dither() {
        let e = small();
        let (lambda, x) = encode(&e, 0, &[0], &[0.0, 0.0]).unwrap();
        assert_eq!(lambda.z, vec![0, 0]);
        assert_eq!(x, vec![0.0, 0.0]);
        assert!(encode(&e, 0, &[0], &[2.9, 0.0]).is_err());
    }

    #[test]
    fn zp_matrix_example() {
        let a = int_matrix(&[[1, 1, 1], [1, -1, -1], [0, 0, 0]]);
        let map: BTreeSet<Pair> = [(0, 0), (0, 1), (0, 2), (1, 1), (1, 2)].into_iter().collect();
        let (l, inv) = zp_asc_matrix(&a, &map, 5).unwrap();
        assert_eq!(l[1], vec![4, 1, 0]);
        assert_eq!(inv[1], vec![1, 1, 0]);
        let (l, _) = zp_asc_matrix(&a, &all_pairs(3, 3), 5).unwrap();
        assert_eq!(l, vec![vec![1, 0, 0], vec![0, 1, 0], vec![0, 0, 1]]);
    }

    #[test]
    fn zp_matrix_p_too_small() {
        // Row 2 needs L[1][0] = -1/2 to cancel column 0.
        let a = int_matrix(&[[2, 1], [1, 1]]);
        let map: BTreeSet<Pair> = [(0, 0), (0, 1), (1, 1)].into_iter().collect();
        assert!(matches!(zp_asc_matrix(&a, &map, 2), Err(Error::PTooSmall(_))));
        let (l, _) = zp_asc_matrix(&a, &map, 3).unwrap();
        assert_eq!(l[1][0], 1);
    }

    #[test]
    fn ci_bounds() {
        let (lo, hi) = binomial_ci(0, 100, 0.95);
        assert_eq!(lo, 0.0);
        assert!((hi - (1.0 - 0.025f64.powf(0.01))).abs() < 1e-9);
        let (lo, hi) = binomial_ci(50, 100, 0.95);
        assert!(lo < 0.5 && hi > 0.5);
    }

    #[test]
    fn real_sum_with_zero_row() {
        let e = small();
        let y = vec![0.4, -1.6];
        let s = recover_real_combo(&e, &y, &LatticePoint { z: vec![0, 0] }, &[vec![0.1, 0.2], vec![0.0, 0.3]], &[0, 0]).unwrap();
        assert_eq!(s, e.coords(&e.nearest_point(LatticeId::CoarseAll, &y).unwrap()));
    }
}
