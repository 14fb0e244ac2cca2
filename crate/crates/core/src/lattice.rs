//! Scaled Construction A nested lattice chains at desk scale, with exhaustive
//! coset quantizers and the linear labeling.
//!
//! Lattice points are stored as integer vectors `z`; the real point is
//! `(gamma / p) * z`. The coarsest lattice in every chain contains `gamma Z^n`,
//! which is `p Z^n` in these coordinates.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;

use crate::error::{dim, Error, Result};
use crate::exact::{is_prime, mod_p, rank_mod_p, rref_mod_p};

pub const MAX_N: usize = 10;
pub const MAX_P: u64 = 13;
pub const MAX_KF: usize = 6;
/// Cap on `p^k_F`, the number of codewords an exhaustive quantizer visits.
pub const MAX_CODEWORDS: u64 = 20_000;
const GENERATOR_RETRIES: usize = 100;

/// Real-valued levels from the asymptotic parameter formulas plus integer suggestions.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NominalLevel {
    pub k_c: f64,
    pub k_f: f64,
    /// `ceil(k_c)`, never above `k_f_int`.
    pub k_c_int: usize,
    /// `floor(k_f)`.
    pub k_f_int: usize,
    /// `(k_f - k_c) / n * log2 p`.
    pub rate: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NominalLevels {
    pub p: u64,
    /// Suggested scale `2 sqrt(n P_max 2^alpha)`.
    pub gamma: f64,
    pub levels: Vec<NominalLevel>,
}

/// Largest prime in `[n^{3/2} / 2, n^{3/2}]`.
pub fn asymptotic_prime(n: usize) -> Option<u64> {
    let hi = (n as f64).powf(1.5).floor() as u64;
    let lo = ((n as f64).powf(1.5) / 2.0).ceil() as u64;
    (lo..=hi).rev().find(|&q| is_prime(q))
}

/// `log2(V_n^{2/n})` with `V_n = pi^{n/2} / Gamma(n/2 + 1)`.
fn log2_unit_ball_factor(n: usize) -> f64 {
    let nf = n as f64;
    let ln_v = 0.5 * nf * std::f64::consts::PI.ln() - ln_gamma(0.5 * nf + 1.0);
    (2.0 / nf) * ln_v / std::f64::consts::LN_2
}

/// Coarse and fine levels for the given powers and noise tolerances. `p = None`
/// uses the asymptotic prime for `n`.
pub fn nominal_levels(
    powers: &[f64],
    tolerances: &[f64],
    n: usize,
    alpha: f64,
    p: Option<u64>,
) -> Result<NominalLevels> {
    if powers.len() != tolerances.len() || powers.is_empty() {
        return dim(format!("{} powers and {} tolerances", powers.len(), tolerances.len()));
    }
    if n == 0 {
        return Err(Error::Domain("blocklength must be positive".into()));
    }
    if let Some(l) = (0..powers.len()).find(|&l| !(tolerances[l] > 0.0 && tolerances[l] < powers[l])) {
        return Err(Error::Domain(format!("user {l}: noise tolerance must lie strictly between 0 and the power")));
    }
    let p = match p {
        Some(q) if is_prime(q) => q,
        Some(q) => return Err(Error::Domain(format!("{q} is not prime"))),
        None => asymptotic_prime(n).ok_or_else(|| Error::Domain(format!("no prime for n = {n}")))?,
    };
    let p_max = powers.iter().copied().fold(f64::MIN, f64::max);
    let scale = n as f64 / (2.0 * (p as f64).log2());
    let common = 2.0 - log2_unit_ball_factor(n) + alpha;
    let levels = powers
        .iter()
        .zip(tolerances)
        .map(|(&pw, &tol)| {
            let k_c = scale * ((p_max / pw).log2() + common);
            let k_f = scale * ((p_max / tol).log2() + common);
            let k_f_int = k_f.max(0.0).floor() as usize;
            let k_c_int = (k_c.max(0.0).ceil() as usize).min(k_f_int);
            NominalLevel { k_c, k_f, k_c_int, k_f_int, rate: (k_f - k_c) / n as f64 * (p as f64).log2() }
        })
        .collect();
    Ok(NominalLevels { p, gamma: 2.0 * (n as f64 * p_max * alpha.exp2()).sqrt(), levels })
}

/// One lattice of the chain.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LatticeId {
    /// `Lambda_{C,l}`.
    Coarse(usize),
    /// `Lambda_{F,l}`.
    Fine(usize),
    /// `Lambda_C`, the coarsest lattice.
    CoarseAll,
    /// `Lambda_F`, the finest lattice.
    FineAll,
}

/// Serialized form: `{n, p, gamma, levels, G}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleSpec {
    pub n: usize,
    pub p: u64,
    pub gamma: f64,
    pub levels: Vec<(usize, usize)>,
    #[serde(rename = "G")]
    pub g: Vec<Vec<u64>>,
}

/// Integer coordinates of a lattice point.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct LatticePoint {
    pub z: Vec<i64>,
}

#[derive(Debug, Clone)]
pub struct NestedLatticeEnsemble {
    spec: EnsembleSpec,
    k_c: usize,
    k_f: usize,
    /// Codewords of the prefix code of each dimension in use.
    codes: BTreeMap<usize, Vec<Vec<u64>>>,
}

fn check_desk_scale(n: usize, p: u64, gamma: f64, levels: &[(usize, usize)]) -> Result<usize> {
    if !is_prime(p) {
        return Err(Error::Domain(format!("{p} is not prime")));
    }
    if n == 0 || n > MAX_N || p > MAX_P {
        return Err(Error::Domain(format!("desk scale needs 1 <= n <= {MAX_N} and p <= {MAX_P}")));
    }
    if !(gamma.is_finite() && gamma > 0.0) {
        return Err(Error::Domain("gamma must be positive".into()));
    }
    if levels.is_empty() {
        return Err(Error::Domain("at least one user is required".into()));
    }
    if let Some(l) = levels.iter().position(|&(c, f)| c > f || f > n) {
        return Err(Error::Domain(format!("user {l}: levels must satisfy k_C <= k_F <= n")));
    }
    let k_f = levels.iter().map(|l| l.1).max().unwrap_or(0);
    if k_f > MAX_KF || p.checked_pow(k_f as u32).is_none_or(|c| c > MAX_CODEWORDS) {
        return Err(Error::Domain(format!("desk scale needs k_F <= {MAX_KF} and p^k_F <= {MAX_CODEWORDS}")));
    }
    Ok(k_f)
}

fn codewords(g: &[Vec<u64>], k: usize, n: usize, p: u64) -> Vec<Vec<u64>> {
    let count = p.pow(k as u32) as usize;
    let mut out = Vec::with_capacity(count);
    let mut w = vec![0u64; k];
    for _ in 0..count {
        let c: Vec<u64> = (0..n).map(|j| (0..k).map(|i| w[i] * g[i][j]).sum::<u64>() % p).collect();
        out.push(c);
        for d in w.iter_mut().rev() {
            *d += 1;
            if *d < p {
                break;
            }
            *d = 0;
        }
    }
    out
}

impl NestedLatticeEnsemble {
    /// Ensemble from an explicit generator; `G` must have `k_F` rows and full rank mod `p`.
    pub fn from_generator(n: usize, p: u64, gamma: f64, levels: &[(usize, usize)], g: Vec<Vec<u64>>) -> Result<Self> {
        let k_f = check_desk_scale(n, p, gamma, levels)?;
        if g.len() != k_f || g.iter().any(|r| r.len() != n) {
            return dim(format!("generator must be {k_f}x{n}"));
        }
        let g: Vec<Vec<u64>> = g.into_iter().map(|r| r.into_iter().map(|v| v % p).collect()).collect();
        if rank_mod_p(&g, p) != k_f {
            return Err(Error::Precondition("generator is not full rank mod p".into()));
        }
        let k_c = levels.iter().map(|l| l.0).min().unwrap_or(0);
        let mut dims: Vec<usize> = levels.iter().flat_map(|&(c, f)| [c, f]).collect();
        dims.extend([k_c, k_f]);
        let codes = dims.into_iter().map(|k| (k, codewords(&g, k, n, p))).collect();
        Ok(Self { spec: EnsembleSpec { n, p, gamma, levels: levels.to_vec(), g }, k_c, k_f, codes })
    }

    /// Seeded uniform generator, redrawn until full rank.
    pub fn build(n: usize, p: u64, gamma: f64, levels: &[(usize, usize)], seed: u64) -> Result<Self> {
        let k_f = check_desk_scale(n, p, gamma, levels)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for _ in 0..GENERATOR_RETRIES {
            let g: Vec<Vec<u64>> = (0..k_f).map(|_| (0..n).map(|_| rng.random_range(0..p)).collect()).collect();
            if rank_mod_p(&g, p) == k_f {
                return Self::from_generator(n, p, gamma, levels, g);
            }
        }
        Err(Error::Exhausted(format!("no full-rank generator after {GENERATOR_RETRIES} draws")))
    }

    pub fn from_spec(spec: &EnsembleSpec) -> Result<Self> {
        Self::from_generator(spec.n, spec.p, spec.gamma, &spec.levels, spec.g.clone())
    }

    pub fn spec(&self) -> &EnsembleSpec {
        &self.spec
    }

    pub fn n(&self) -> usize {
        self.spec.n
    }

    pub fn p(&self) -> u64 {
        self.spec.p
    }

    pub fn gamma(&self) -> f64 {
        self.spec.gamma
    }

    pub fn users(&self) -> usize {
        self.spec.levels.len()
    }

    pub fn levels(&self) -> &[(usize, usize)] {
        &self.spec.levels
    }

    pub fn k_c(&self) -> usize {
        self.k_c
    }

    pub fn k_f(&self) -> usize {
        self.k_f
    }

    /// Label length `k_F - k_C`.
    pub fn k(&self) -> usize {
        self.k_f - self.k_c
    }

    /// Real spacing `gamma / p` between integer coordinates.
    pub fn step(&self) -> f64 {
        self.spec.gamma / self.spec.p as f64
    }

    pub fn dimension(&self, which: LatticeId) -> Result<usize> {
        let level = |l: usize| {
            self.spec.levels.get(l).copied().ok_or_else(|| Error::Dimension(format!("no user {l}")))
        };
        Ok(match which {
            LatticeId::Coarse(l) => level(l)?.0,
            LatticeId::Fine(l) => level(l)?.1,
            LatticeId::CoarseAll => self.k_c,
            LatticeId::FineAll => self.k_f,
        })
    }

    fn code(&self, which: LatticeId) -> Result<&[Vec<u64>]> {
        let k = self.dimension(which)?;
        Ok(&self.codes[&k])
    }

    pub fn coords(&self, pt: &LatticePoint) -> Vec<f64> {
        let s = self.step();
        pt.z.iter().map(|&v| v as f64 * s).collect()
    }

    fn reduce(&self, z: &[i64]) -> Vec<u64> {
        z.iter().map(|&v| mod_p(v, self.spec.p)).collect()
    }

    /// Exact membership of an integer-coordinate point.
    pub fn contains(&self, which: LatticeId, pt: &LatticePoint) -> Result<bool> {
        if pt.z.len() != self.spec.n {
            return dim(format!("point has length {}, expected {}", pt.z.len(), self.spec.n));
        }
        let k = self.dimension(which)?;
        let c = self.reduce(&pt.z);
        let mut rows = self.spec.g[..k].to_vec();
        let base = rank_mod_p(&rows, self.spec.p);
        rows.push(c);
        Ok(rank_mod_p(&rows, self.spec.p) == base)
    }

    /// Integer coordinates of a real vector that lies on the `gamma/p` grid.
    pub fn to_point(&self, x: &[f64]) -> Result<LatticePoint> {
        let s = self.step();
        let z: Vec<i64> = x.iter().map(|&v| (v / s).round() as i64).collect();
        let on_grid = x.iter().zip(&z).all(|(&v, &k)| (v - k as f64 * s).abs() <= 1e-9 * s.max(v.abs()));
        if !on_grid {
            return Err(Error::Domain("vector is not on the gamma/p grid".into()));
        }
        Ok(LatticePoint { z })
    }

    /// Nearest lattice point. Coordinate ties round toward the smaller integer and
    /// equidistant candidates resolve to the lexicographically smallest point.
    pub fn nearest_point(&self, which: LatticeId, x: &[f64]) -> Result<LatticePoint> {
        let n = self.spec.n;
        if x.len() != n {
            return dim(format!("vector has length {}, expected {n}", x.len()));
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::Domain("vector has non-finite entries".into()));
        }
        let s = self.step();
        let p = self.spec.p as f64;
        let y: Vec<f64> = x.iter().map(|&v| v / s).collect();
        let mut best: Option<(f64, Vec<i64>)> = None;
        let mut z = vec![0i64; n];
        for c in self.code(which)? {
            let mut d2 = 0.0;
            for i in 0..n {
                let ci = c[i] as f64;
                let k = ((y[i] - ci) / p - 0.5).ceil();
                let zi = ci + p * k;
                z[i] = zi as i64;
                d2 += (y[i] - zi).powi(2);
            }
            let replace = match &best {
                None => true,
                Some((bd, bz)) => {
                    let tie = (d2 - bd).abs() <= 1e-12 * bd.max(1.0);
                    (!tie && d2 < *bd) || (tie && z < *bz)
                }
            };
            if replace {
                best = Some((d2, z.clone()));
            }
        }
        let (_, z) = best.expect("every code holds the zero word");
        Ok(LatticePoint { z })
    }

    /// `x - Q(x)`.
    pub fn mod_lattice(&self, which: LatticeId, x: &[f64]) -> Result<Vec<f64>> {
        let q = self.coords(&self.nearest_point(which, x)?);
        Ok(x.iter().zip(q).map(|(a, b)| a - b).collect())
    }

    /// `[z] mod Lambda` in integer coordinates.
    pub fn mod_point(&self, which: LatticeId, pt: &LatticePoint) -> Result<LatticePoint> {
        let x = self.coords(pt);
        let q = self.nearest_point(which, &x)?;
        Ok(LatticePoint { z: pt.z.iter().zip(&q.z).map(|(a, b)| a - b).collect() })
    }

    /// Solve `G^T v = z mod p`.
    fn coefficients(&self, c: &[u64]) -> Option<Vec<u64>> {
        let (n, k_f, p) = (self.spec.n, self.k_f, self.spec.p);
        let mut aug: Vec<Vec<u64>> = (0..n)
            .map(|j| {
                let mut row: Vec<u64> = (0..k_f).map(|i| self.spec.g[i][j]).collect();
                row.push(c[j]);
                row
            })
            .collect();
        let pivots = rref_mod_p(&mut aug, p);
        if pivots.contains(&k_f) {
            return None;
        }
        let mut v = vec![0u64; k_f];
        for (r, &col) in pivots.iter().enumerate() {
            v[col] = aug[r][k_f];
        }
        Some(v)
    }

    /// The last `k` coefficients of the point's codeword in the basis `G`.
    pub fn linear_label(&self, pt: &LatticePoint) -> Result<Vec<u64>> {
        if pt.z.len() != self.spec.n {
            return dim(format!("point has length {}, expected {}", pt.z.len(), self.spec.n));
        }
        let v = self
            .coefficients(&self.reduce(&pt.z))
            .ok_or_else(|| Error::Domain("point is not in the finest lattice".into()))?;
        Ok(v[self.k_c..].to_vec())
    }

    /// Representative with coordinates in `[0, p)` of the label `w`.
    pub fn label_inverse(&self, w: &[u64]) -> Result<LatticePoint> {
        if w.len() != self.k() {
            return dim(format!("label has length {}, expected {}", w.len(), self.k()));
        }
        let p = self.spec.p;
        let z = (0..self.spec.n)
            .map(|j| (w.iter().enumerate().map(|(i, &wi)| (wi % p) * self.spec.g[self.k_c + i][j]).sum::<u64>() % p) as i64)
            .collect();
        Ok(LatticePoint { z })
    }

    /// Message length `k_{F,l} - k_{C,l}` of user `l`.
    pub fn message_len(&self, l: usize) -> Result<usize> {
        let (c, f) = *self.spec.levels.get(l).ok_or_else(|| Error::Dimension(format!("no user {l}")))?;
        Ok(f - c)
    }

    /// Pads a message into a label: zeros in the don't-care and trailing slots.
    pub fn embed_message(&self, l: usize, w: &[u64]) -> Result<Vec<u64>> {
        let len = self.message_len(l)?;
        if w.len() != len {
            return dim(format!("message has length {}, expected {len}", w.len()));
        }
        let mut label = vec![0u64; self.k()];
        let start = self.spec.levels[l].0 - self.k_c;
        label[start..start + len].copy_from_slice(w);
        Ok(label)
    }

    /// Message block of a label for user `l`.
    pub fn extract_message(&self, l: usize, label: &[u64]) -> Result<Vec<u64>> {
        let len = self.message_len(l)?;
        if label.len() != self.k() {
            return dim(format!("label has length {}, expected {}", label.len(), self.k()));
        }
        let start = self.spec.levels[l].0 - self.k_c;
        Ok(label[start..start + len].to_vec())
    }

    /// Whether `candidate` lies in the coset of message `w` for user `l`.
    pub fn coset_contains(&self, l: usize, candidate: &[u64], w: &[u64]) -> Result<bool> {
        let len = self.message_len(l)?;
        if w.len() != len {
            return dim(format!("message has length {}, expected {len}", w.len()));
        }
        let block = self.extract_message(l, candidate)?;
        let tail = self.spec.levels[l].1 - self.k_c;
        Ok(block == w && candidate[tail..].iter().all(|&v| v == 0))
    }

    /// Monte-Carlo second moment per dimension and its standard error.
    ///
    /// Uniform samples over `[0, gamma)^n` are reduced modulo the lattice; the
    /// cube tiles whole cells because every lattice in the chain contains `gamma Z^n`.
    pub fn second_moment(&self, which: LatticeId, samples: usize, seed: u64) -> Result<(f64, f64)> {
        if samples < 2 {
            return Err(Error::Domain("need at least two samples".into()));
        }
        let n = self.spec.n;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut x = vec![0.0; n];
        let (mut sum, mut sum2) = (0.0, 0.0);
        for _ in 0..samples {
            for v in x.iter_mut() {
                *v = rng.random::<f64>() * self.spec.gamma;
            }
            let e = self.mod_lattice(which, &x)?;
            let per_dim = e.iter().map(|v| v * v).sum::<f64>() / n as f64;
            sum += per_dim;
            sum2 += per_dim * per_dim;
        }
        let nf = samples as f64;
        let mean = sum / nf;
        let var = (sum2 / nf - mean * mean).max(0.0) * nf / (nf - 1.0);
        Ok((mean, (var / nf).sqrt()))
    }
}
