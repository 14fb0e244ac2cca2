//! Acceptance suite: one PASS/FAIL line per criterion.
//!
//! Runs without the libtest harness so the lines are always printed. The
//! process fails when a criterion outside `KNOWN_UNATTAINABLE` fails, or when a
//! known-unattainable criterion starts passing.

use std::collections::BTreeSet;
use std::time::{Duration, Instant};

use cfkit::channel::{int_matrix, sigma_para_opt, sigma_succ_opt, ChannelInstance, IntMatrix};
use cfkit::lattice::{LatticeId, LatticePoint, NestedLatticeEnsemble};
use cfkit::mac_opt::{mac_mapping, random_unimodular, theorem4_candidates, theorem4_rates, theorem5_search, unimodular_sum_check};
use cfkit::regions::{diagonal_mapping, para_region, sic_rates, succ_region, Pair, Scheme};
use cfkit::simulator::{
    decode_parallel, decode_successive, encode, lambda_tilde, run_trials, true_combinations, CampaignConfig, EqualizerSet,
    Equalizers, TrialConfig,
};
use cfkit::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const FIGURE_TOL: f64 = 5e-4;
const FIGURE_TIME: Duration = Duration::from_secs(1);
const CLOSED_FORM_TOL: f64 = 1e-9;
const SUM_IDENTITY_TOL: f64 = 1e-8;
const EQUIVALENCE_TOL: f64 = 1e-9;
const LATTICE_TIME: Duration = Duration::from_secs(60);
const REAL_SUM_TOL: f64 = 1e-9;

/// The stated successive closed form for the three-user example lies below the
/// minimum over all equalizers, so no implementation can match it.
const KNOWN_UNATTAINABLE: [u32; 1] = [3];

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome { pass, detail: detail.into() }
}

fn near(a: (f64, f64), b: (f64, f64), tol: f64) -> bool {
    (a.0 - b.0).abs() <= tol && (a.1 - b.1).abs() <= tol
}

fn has_point(found: &[(f64, f64)], want: (f64, f64), tol: f64) -> bool {
    found.iter().any(|&f| near(f, want, tol))
}

fn pairs(rates: impl IntoIterator<Item = Vec<f64>>) -> Vec<(f64, f64)> {
    rates.into_iter().map(|r| (r[0], r[1])).collect()
}

fn missing(found: &[(f64, f64)], wanted: &[(f64, f64)]) -> Vec<(f64, f64)> {
    wanted.iter().copied().filter(|&w| !has_point(found, w, FIGURE_TOL)).collect()
}

fn criterion_1() -> Outcome {
    let start = Instant::now();
    let ch = ChannelInstance::from_rows(&[[1.0, 1.5]], &[7.0, 4.0]).unwrap();
    let sic = pairs([sic_rates(&ch, &[0, 1]).unwrap(), sic_rates(&ch, &[1, 0]).unwrap()]);
    let succ = pairs(theorem5_search(&ch, 3).unwrap().into_iter().map(|a| a.rates));
    let para = pairs(theorem4_candidates(&ch).unwrap().into_iter().map(|a| a.rates));
    let elapsed = start.elapsed();
    let want_sic = [(0.3828, 1.6610), (1.5000, 0.5437)];
    let want_succ = [(0.3828, 1.6610), (1.5000, 0.5437), (1.0850, 0.9588), (1.3624, 0.6813)];
    let want_para = [(1.3624, 0.5903), (0.9940, 0.9588)];
    let miss: Vec<_> = [missing(&sic, &want_sic), missing(&succ, &want_succ), missing(&para, &want_para)].concat();
    outcome(
        miss.is_empty() && elapsed < FIGURE_TIME,
        format!("single-receiver two-user points, missing {miss:?}, {:.3} s", elapsed.as_secs_f64()),
    )
}

fn criterion_2() -> Outcome {
    let start = Instant::now();
    let rx = [
        ChannelInstance::from_rows(&[[3.3, 2.1]], &[4.0, 3.0]).unwrap(),
        ChannelInstance::from_rows(&[[2.4, 4.2]], &[4.0, 3.0]).unwrap(),
    ];
    let found: Vec<Vec<(f64, f64)>> =
        rx.iter().map(|ch| pairs(theorem5_search(ch, 2).unwrap().into_iter().map(|a| a.rates))).collect();
    let elapsed = start.elapsed();
    let want = [
        vec![(1.0109, 1.9154), (2.7388, 0.1875), (1.5084, 1.4180), (1.6255, 1.3008)],
        vec![(0.2566, 2.8764), (2.2937, 0.8393), (1.3799, 1.7531), (1.9606, 1.1724)],
    ];
    let miss: Vec<_> = found.iter().zip(&want).flat_map(|(f, w)| missing(f, w)).collect();
    outcome(
        miss.is_empty() && elapsed < FIGURE_TIME,
        format!("two-receiver corner and extra points, missing {miss:?}, {:.3} s", elapsed.as_secs_f64()),
    )
}

fn criterion_3() -> Outcome {
    let mut worst = [0.0f64; 3];
    for p in [0.5, 1.0, 2.0, 10.0] {
        for powers in [vec![p, p], vec![p, p, p], vec![p, 2.0 * p, 0.5 * p]] {
            let l = powers.len();
            let ch = ChannelInstance::from_rows(&[vec![1.0; l]], &powers).unwrap();
            let total: f64 = powers.iter().sum();
            let got = sigma_para_opt(&ch, &vec![1; l]).unwrap().variance;
            worst[0] = worst[0].max((got - total / (1.0 + total)).abs());
        }
        let ch = ChannelInstance::from_rows(&[[2.0, 1.0, 1.0]], &[p, p, p]).unwrap();
        let para = sigma_para_opt(&ch, &[1, 1, 1]).unwrap().variance;
        worst[1] = worst[1].max((para - (3.0 * p + 2.0 * p * p) / (1.0 + 6.0 * p)).abs());
        let succ = sigma_succ_opt(&ch, &[1, -1, -1], &int_matrix(&[[1, 1, 1]])).unwrap().variance;
        let stated = p * (3.0 + 24.0 * p + 18.0 * p * p) / (8.0 + 38.0 * p + 36.0 * p * p);
        worst[2] = worst[2].max((succ - stated).abs());
    }
    let ok: Vec<bool> = worst.iter().map(|&w| w <= CLOSED_FORM_TOL).collect();
    outcome(
        ok.iter().all(|&b| b),
        format!(
            "closed-form variances: sum combination err {:.1e}, three-user first row err {:.1e}, \
             three-user second row err {:.1e} (stated form is below the minimum 8P/(2P+3) over all equalizers)",
            worst[0], worst[1], worst[2]
        ),
    )
}

/// `1/2 log2 det(I + H P H^T)` computed directly.
fn capacity_oracle(ch: &ChannelInstance) -> f64 {
    let h = ch.h();
    let p = DMatrix::from_diagonal(ch.p());
    let k = DMatrix::identity(h.nrows(), h.nrows()) + h * p * h.transpose();
    0.5 * k.determinant().log2()
}

fn random_channel(rng: &mut ChaCha8Rng, users: usize) -> ChannelInstance {
    let antennas = rng.random_range(1..=users);
    let h = DMatrix::from_fn(antennas, users, |_, _| rng.random_range(-2.0..2.0));
    let p = DVector::from_fn(users, |_, _| rng.random_range(0.2..20.0));
    ChannelInstance::new(h, p).unwrap()
}

fn criterion_4() -> Outcome {
    let mut worst = 0.0f64;
    for i in 0..100u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        rng.set_stream(i);
        let users = 2 + (i % 3) as usize;
        let ch = random_channel(&mut rng, users);
        let a = random_unimodular(users, 3 * users, &mut rng);
        let (_, pi) = mac_mapping(&a).unwrap();
        let (lhs, _) = unimodular_sum_check(&ch, &a, &pi).unwrap();
        worst = worst.max((lhs - capacity_oracle(&ch)).abs());
    }
    outcome(worst <= SUM_IDENTITY_TOL, format!("unimodular sum identity over 100 instances, max err {worst:.1e}"))
}

fn criterion_5() -> Outcome {
    let mut violations = 0;
    for i in 0..200u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        rng.set_stream(i);
        let users = 2 + (i % 2) as usize;
        let ch = random_channel(&mut rng, users);
        let l = users as f64;
        let bound = capacity_oracle(&ch) - 0.5 * l * l.log2();
        if theorem4_rates(&ch).unwrap().sum_rate < bound - 1e-12 {
            violations += 1;
        }
    }
    outcome(violations == 0, format!("parallel assignment gap over 200 channels, {violations} violations"))
}

/// Treat-interference-as-noise and SIC rates from the receive covariance.
fn tin_rate(ch: &ChannelInstance, l: usize, interferers: &[usize]) -> f64 {
    let h = ch.h();
    let n = h.nrows();
    let mut k = DMatrix::identity(n, n);
    for &j in interferers {
        k += ch.p()[j] * h.column(j) * h.column(j).transpose();
    }
    let hl = h.column(l).into_owned();
    let snr = ch.p()[l] * (hl.transpose() * k.try_inverse().unwrap() * &hl)[(0, 0)];
    0.5 * (1.0 + snr).log2()
}

fn criterion_6() -> Outcome {
    let mut worst = 0.0f64;
    for i in 0..60u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        rng.set_stream(i);
        let users = 1 + (i % 4) as usize;
        let ch = random_channel(&mut rng, users);
        let eye = IntMatrix::identity(users, users);
        let para = para_region(&ch, &eye).unwrap();
        let succ = succ_region(&ch, &eye, &diagonal_mapping(users)).unwrap();
        let order: Vec<usize> = (0..users).collect();
        let sic = sic_rates(&ch, &order).unwrap();
        for l in 0..users {
            let others: Vec<usize> = (0..users).filter(|&j| j != l).collect();
            let later: Vec<usize> = (l + 1..users).collect();
            worst = worst.max((para.caps().unwrap()[l].value() - tin_rate(&ch, l, &others)).abs());
            worst = worst.max((succ.caps().unwrap()[l].value() - tin_rate(&ch, l, &later)).abs());
            worst = worst.max((succ.caps().unwrap()[l].value() - sic[l]).abs());
        }
    }
    outcome(worst <= EQUIVALENCE_TOL, format!("identity-matrix regions vs interference-as-noise and SIC, max err {worst:.1e}"))
}

/// All integer vectors in `[0, p)^n`.
fn period(n: usize, p: u64) -> Vec<Vec<i64>> {
    let mut out = vec![Vec::new()];
    for _ in 0..n {
        out = out.into_iter().flat_map(|v| (0..p as i64).map(move |d| [v.clone(), vec![d]].concat())).collect();
    }
    out
}

/// Span over `Z_p` of the first `k` rows of `g`, by brute force.
fn span(g: &[Vec<u64>], k: usize, p: u64) -> BTreeSet<Vec<u64>> {
    let n = g.first().map_or(0, Vec::len);
    period(k, p)
        .into_iter()
        .map(|c| (0..n).map(|j| (0..k).map(|i| c[i] as u64 * g[i][j]).sum::<u64>() % p).collect())
        .collect()
}

fn reduce(z: &[i64], p: u64) -> Vec<u64> {
    z.iter().map(|&v| v.rem_euclid(p as i64) as u64).collect()
}

fn lattice_case(n: usize, p: u64, seed: u64) -> Result<(), String> {
    let levels: Vec<(usize, usize)> = match n {
        1 => vec![(0, 1), (1, 1), (0, 0)],
        2 => vec![(0, 2), (1, 2), (0, 1)],
        _ => vec![(0, 2), (1, 3), (2, 3)],
    };
    let ens = NestedLatticeEnsemble::build(n, p, 1.0, &levels, seed).map_err(|e| e.to_string())?;
    let g = ens.spec().g.clone();
    let k_c = ens.k_c();
    let fine_code = span(&g, ens.k_f(), p);
    let pts = period(n, p);
    let fine: Vec<LatticePoint> =
        pts.iter().filter(|z| fine_code.contains(&reduce(z, p))).map(|z| LatticePoint { z: z.clone() }).collect();
    let labels: Vec<Vec<u64>> = fine.iter().map(|z| ens.linear_label(z).unwrap()).collect();
    for (l, &(c, f)) in levels.iter().enumerate() {
        let (cf, cc) = (span(&g, f, p), span(&g, c, p));
        for (z, lab) in fine.iter().zip(&labels) {
            let r = reduce(&z.z, p);
            if cf.contains(&r) != lab[f - k_c..].iter().all(|&v| v == 0)
                || cc.contains(&r) != lab[c - k_c..].iter().all(|&v| v == 0)
            {
                return Err(format!("level structure, n={n} p={p} user {l} point {:?}", z.z));
            }
        }
        let nf = pts.iter().filter(|z| cf.contains(&reduce(z, p))).count();
        let nc = pts.iter().filter(|z| cc.contains(&reduce(z, p))).count();
        if nf != nc * (p as usize).pow((f - c) as u32) {
            return Err(format!("cardinality, n={n} p={p} user {l}"));
        }
    }
    let pi = p as i64;
    for (i, z1) in fine.iter().enumerate() {
        for (j, z2) in fine.iter().enumerate() {
            for (a1, a2) in [(1, 1), (1, -1), (2, pi + 1), (-3, 2 * pi - 1)] {
                let comb = LatticePoint { z: z1.z.iter().zip(&z2.z).map(|(x, y)| a1 * x + a2 * y).collect() };
                let want: Vec<u64> = labels[i]
                    .iter()
                    .zip(&labels[j])
                    .map(|(&u, &v)| ((a1.rem_euclid(pi) as u64) * u + (a2.rem_euclid(pi) as u64) * v) % p)
                    .collect();
                if ens.linear_label(&comb).unwrap() != want {
                    return Err(format!("labeling linearity, n={n} p={p}"));
                }
            }
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let step = ens.step();
    for _ in 0..40 {
        let x: Vec<f64> = (0..n).map(|_| rng.random_range(-2.0..2.0)).collect();
        let y: Vec<f64> = (0..n).map(|_| rng.random_range(-2.0..2.0)).collect();
        let (a, b) = (rng.random_range(-3..=3) as f64, rng.random_range(-3..=3) as f64);
        let c = LatticeId::CoarseAll;
        let xm = ens.mod_lattice(c, &x).unwrap();
        let ym = ens.mod_lattice(c, &y).unwrap();
        let lhs = ens.mod_lattice(c, &xm.iter().zip(&ym).map(|(u, v)| a * u + b * v).collect::<Vec<_>>()).unwrap();
        let rhs = ens.mod_lattice(c, &x.iter().zip(&y).map(|(u, v)| a * u + b * v).collect::<Vec<_>>()).unwrap();
        if lhs.iter().zip(&rhs).any(|(u, v)| (u - v).abs() > 1e-9) {
            return Err(format!("distributive law, n={n} p={p}"));
        }
        for l in 0..levels.len() {
            let f = LatticeId::Fine(l);
            // Brute-force nearest distance over a box of candidate points.
            let code = span(&g, levels[l].1, p);
            let center: Vec<i64> = x.iter().map(|v| (v / step).round() as i64).collect();
            let mut best = f64::INFINITY;
            for off in period(n, 2 * p + 1) {
                let z: Vec<i64> = center.iter().zip(&off).map(|(c, o)| c + o - pi).collect();
                if code.contains(&reduce(&z, p)) {
                    best = best.min(z.iter().zip(&x).map(|(&zi, xi)| (zi as f64 * step - xi).powi(2)).sum());
                }
            }
            let q = ens.coords(&ens.nearest_point(f, &x).unwrap());
            let d: f64 = q.iter().zip(&x).map(|(a, b)| (a - b).powi(2)).sum();
            if (d - best).abs() > 1e-9 {
                return Err(format!("nearest point, n={n} p={p} user {l}"));
            }
            let direct = ens.mod_point(c, &ens.nearest_point(f, &x).unwrap()).unwrap();
            let reduced = ens.mod_point(c, &ens.nearest_point(f, &xm).unwrap()).unwrap();
            if direct != reduced {
                return Err(format!("nested quantization, n={n} p={p} user {l}"));
            }
        }
    }
    Ok(())
}

fn criterion_7() -> Outcome {
    let start = Instant::now();
    let mut failures = Vec::new();
    for n in 1..=3 {
        for p in [2, 3, 5] {
            if let Err(e) = lattice_case(n, p, 70 + n as u64) {
                failures.push(e);
            }
        }
    }
    let elapsed = start.elapsed();
    outcome(
        failures.is_empty() && elapsed < LATTICE_TIME,
        format!("exhaustive lattice algebra at n<=3, p in {{2,3,5}}, failures {failures:?}, {:.1} s", elapsed.as_secs_f64()),
    )
}

fn criterion_8() -> Outcome {
    let ens = NestedLatticeEnsemble::from_generator(2, 3, 3.0, &[(0, 1), (0, 2)], vec![vec![1, 2], vec![0, 1]]).unwrap();
    let a = int_matrix(&[[1, 1], [1, 2]]);
    let h = DMatrix::from_fn(2, 2, |i, j| a[(i, j)] as f64);
    let eq = EqualizerSet { b: vec![DVector::from_vec(vec![1.0, 0.0]), DVector::from_vec(vec![0.0, 1.0])], c: vec![DVector::zeros(0), DVector::zeros(1)] };
    let mapping: BTreeSet<Pair> = [(0, 0), (0, 1), (1, 0), (1, 1)].into_iter().collect();
    let messages: Vec<(Vec<u64>, Vec<u64>)> = period(3, 3)
        .into_iter()
        .map(|m| (vec![m[0] as u64], vec![m[1] as u64, m[2] as u64]))
        .collect();
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let (mut decodes, mut bad) = (0, 0);
    for _ in 0..200 {
        let dithers: Vec<Vec<f64>> = (0..2).map(|l| cfkit::simulator::sample_dither(&ens, l, &mut rng).unwrap()).collect();
        for (w0, w1) in &messages {
            let ws = [w0, w1];
            let mut xs = Vec::new();
            let mut tilde = Vec::new();
            for l in 0..2 {
                let (lambda, x) = encode(&ens, l, ws[l], &dithers[l]).unwrap();
                tilde.push(lambda_tilde(&ens, l, &lambda, &dithers[l]).unwrap());
                xs.push(x);
            }
            let (_, u) = true_combinations(&ens, &a, &tilde).unwrap();
            let x = DMatrix::from_fn(2, 2, |i, j| xs[i][j]);
            let y = &h * &x;
            let par = decode_parallel(&ens, &y, &a, &dithers, &eq).unwrap();
            let suc = decode_successive(&ens, &y, &a, &mapping, &dithers, &eq).unwrap();
            let sums_ok = (0..2).all(|m| {
                (0..2).all(|j| (suc.s_hat[m][j] - (a[(m, 0)] as f64 * x[(0, j)] + a[(m, 1)] as f64 * x[(1, j)])).abs() <= REAL_SUM_TOL)
            });
            decodes += 1;
            if par.u_hat != u || suc.u_hat != u || !sums_ok {
                bad += 1;
            }
        }
    }
    outcome(bad == 0, format!("noiseless H = A, {decodes} message/dither cases, {bad} mismatches"))
}

fn criterion_9() -> Outcome {
    let p = 1.0 / 12.0;
    let cfg_json = serde_json::json!({
        "ensemble": { "n": 10, "p": 2, "gamma": 1.0, "levels": [[0, 1], [0, 1], [0, 1]], "G": [vec![1u64; 10]] },
        "H": [[2.0, 1.0, 1.0]],
        "P": [p, p, p],
        "A": [[1, 1, 1], [1, -1, -1], [0, 0, 0]],
        "mode": "successive",
        "mapping": [[0, 0], [0, 1], [0, 2], [1, 1], [1, 2]],
        "noise_std": [1e-3],
        "trials": 500,
        "master_seed": 7
    });
    let camp: CampaignConfig = serde_json::from_value(cfg_json).unwrap();
    let succ = run_trials(&camp.trial_config(1e-3).unwrap(), 500).unwrap();
    let mut par_cfg = camp.trial_config(1e-3).unwrap();
    par_cfg.scheme = Scheme::Parallel;
    let par = run_trials(&par_cfg, 500).unwrap();
    let mut var_ok = true;
    let mut worst = 0.0f64;
    for pw in [p, 0.5, 1.0, 2.0, 10.0] {
        let ch = ChannelInstance::from_rows(&[[2.0, 1.0, 1.0]], &[pw, pw, pw]).unwrap();
        let v = sigma_para_opt(&ch, &[1, -1, -1]).unwrap().variance;
        worst = worst.max((v - 3.0 * pw).abs() / pw);
        var_ok &= v > pw;
    }
    let succ_err = succ.combinations[1].errors;
    outcome(
        succ_err == 0 && var_ok && worst <= 1e-9,
        format!(
            "three-user channel: successive errors on (1,-1,-1) {succ_err}/500, parallel errors {}/500, \
             parallel variance / 3P - 1 up to {worst:.1e}",
            par.combinations[1].errors
        ),
    )
}

fn criterion_10() -> Outcome {
    let ens = NestedLatticeEnsemble::build(4, 5, 2.0, &[(0, 1), (0, 2)], 3).unwrap();
    let cfg = TrialConfig {
        ensemble: ens,
        ch: ChannelInstance::from_rows(&[[1.0, 1.5], [0.5, -1.0]], &[1.0 / 3.0, 1.0 / 3.0]).unwrap(),
        a: int_matrix(&[[1, 1], [1, 2]]),
        scheme: Scheme::Successive,
        mapping: None,
        noise_std: 0.15,
        equalizers: Equalizers::Optimal,
        master_seed: 10,
    };
    let ch = ChannelInstance::from_rows(&[[3.3, 2.1]], &[4.0, 3.0]).unwrap();
    let run = |threads: usize| {
        let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap();
        pool.install(|| {
            let rep = run_trials(&cfg, 300).unwrap();
            let found: Vec<Vec<f64>> = theorem5_search(&ch, 2).unwrap().into_iter().map(|a| a.rates).collect();
            (format!("{rep:?}"), format!("{found:?}"))
        })
    };
    let base = run(1);
    let same = [2, 4, 7].iter().all(|&t| run(t) == base);
    outcome(same, "simulation report and assignment search identical on 1, 2, 4 and 7 threads")
}

fn main() {
    let criteria: [(u32, fn() -> Outcome); 10] = [
        (1, criterion_1),
        (2, criterion_2),
        (3, criterion_3),
        (4, criterion_4),
        (5, criterion_5),
        (6, criterion_6),
        (7, criterion_7),
        (8, criterion_8),
        (9, criterion_9),
        (10, criterion_10),
    ];
    let mut unexpected = Vec::new();
    for (id, f) in criteria {
        let o = f();
        let known = KNOWN_UNATTAINABLE.contains(&id);
        let tag = if o.pass { "PASS" } else { "FAIL" };
        let note = if known && !o.pass { " [known unattainable]" } else { "" };
        println!("{tag} criterion {id}: {}{note}", o.detail);
        if o.pass == known {
            unexpected.push(id);
        }
    }
    if !unexpected.is_empty() {
        eprintln!("unexpected outcome for criteria {unexpected:?}");
        std::process::exit(1);
    }
}
