use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use cfkit::channel::sum_capacity;
use cfkit::lattice::{LatticeId, LatticePoint, NestedLatticeEnsemble};
use cfkit::mac_opt::{mac_mapping, random_unimodular, theorem4_rates, unimodular_sum_check};
use cfkit::regions::{asc_region, canonical_mappings, is_admissible, para_region, succ_region, support_mapping};
use cfkit::{ChannelInstance, IntMatrix, RateRegionSpec};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::input::{parse_coefficients, read_json, ChannelInput};
use crate::output::write;
use crate::Suite;

pub struct Options {
    pub suite: Suite,
    pub seed: u64,
    pub instances: usize,
    pub n: usize,
    pub p: u64,
    pub fixture: Option<PathBuf>,
    pub report: Option<PathBuf>,
}

const SUM_TOL: f64 = 1e-8;
const CAP_TOL: f64 = 1e-9;

/// One named invariant and its tally.
struct Check {
    name: &'static str,
    passed: usize,
    total: usize,
    first_failure: Option<String>,
}

impl Check {
    fn new(name: &'static str) -> Self {
        Check { name, passed: 0, total: 0, first_failure: None }
    }

    fn record(&mut self, ok: bool, detail: impl FnOnce() -> String) {
        self.total += 1;
        if ok {
            self.passed += 1;
        } else if self.first_failure.is_none() {
            self.first_failure = Some(detail());
        }
    }

    fn ok(&self) -> bool {
        self.passed == self.total
    }

    fn line(&self) -> String {
        let status = if self.ok() { "PASS" } else { "FAIL" };
        let mut s = format!("{status} {} ({}/{})", self.name, self.passed, self.total);
        if let Some(f) = &self.first_failure {
            let _ = write!(s, ": {f}");
        }
        s
    }
}

pub fn run(opts: &Options, dir: &Path) -> Result<bool> {
    let mut checks = Vec::new();
    if matches!(opts.suite, Suite::Identities | Suite::All) {
        checks.extend(identities(opts.seed, opts.instances)?);
    }
    if matches!(opts.suite, Suite::Lattice | Suite::All) {
        checks.extend(lattice(opts.n, opts.p, opts.seed)?);
    }
    if let Some(f) = &opts.fixture {
        checks.extend(fixture(f)?);
    }
    if let Some(r) = &opts.report {
        checks.push(report_monotone(r)?);
    }
    let mut summary = String::new();
    for c in &checks {
        println!("{}", c.line());
        let _ = writeln!(summary, "{}", c.line());
    }
    write(dir, "verify.txt", &summary)?;
    Ok(checks.iter().all(Check::ok))
}

fn random_channel(rng: &mut ChaCha8Rng, users: usize) -> Result<ChannelInstance> {
    let antennas = rng.random_range(1..=users);
    let h: Vec<Vec<f64>> = (0..antennas).map(|_| (0..users).map(|_| rng.random_range(-2.0..2.0)).collect()).collect();
    let p: Vec<f64> = (0..users).map(|_| rng.random_range(0.5..10.0)).collect();
    Ok(ChannelInstance::from_rows(&h, &p)?)
}

fn within(inner: &RateRegionSpec, outer: &RateRegionSpec) -> bool {
    match (inner.caps(), outer.caps()) {
        (Some(a), Some(b)) => a.iter().zip(b).all(|(x, y)| x.value() <= y.value() + CAP_TOL),
        _ => false,
    }
}

fn identities(seed: u64, instances: usize) -> Result<Vec<Check>> {
    let mut sum = Check::new("unimodular sum identity");
    let mut para_succ = Check::new("parallel region within successive region");
    let mut asc_succ = Check::new("algebraic region within successive region");
    let mut gap = Check::new("parallel assignment within (L/2)log2(L) of sum capacity");
    for i in 0..instances as u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(i);
        let users = rng.random_range(2..=4usize);
        let ch = random_channel(&mut rng, users)?;
        let a = random_unimodular(users, 4 * users, &mut rng);
        let (_, pi) = mac_mapping(&a)?;
        let (lhs, rhs) = unimodular_sum_check(&ch, &a, &pi)?;
        sum.record((lhs - rhs).abs() <= SUM_TOL, || format!("instance {i}: {lhs} vs {rhs}"));
        let support = support_mapping(&a);
        para_succ.record(within(&para_region(&ch, &a)?, &succ_region(&ch, &a, &support)?), || format!("instance {i}"));
        for m in canonical_mappings(&a) {
            asc_succ.record(within(&asc_region(&ch, &a, &m.pairs)?, &succ_region(&ch, &a, &m.pairs)?), || {
                format!("instance {i}, mapping {:?}", m.pair_list())
            });
        }
        if users <= 3 {
            let asg = theorem4_rates(&ch)?;
            let bound = sum_capacity(&ch) - 0.5 * users as f64 * (users as f64).log2();
            gap.record(asg.sum_rate >= bound - SUM_TOL, || format!("instance {i}: {} < {bound}", asg.sum_rate));
        }
    }
    Ok(vec![sum, para_succ, asc_succ, gap])
}

fn levels_for(n: usize) -> Vec<(usize, usize)> {
    match n {
        1 => vec![(0, 1), (0, 1)],
        2 => vec![(0, 2), (1, 2)],
        _ => vec![(0, n - 1), (1, n), (1, 2)],
    }
}

/// Every integer vector in `[0, p)^n`; one full period of `p Z^n`.
fn period(n: usize, p: u64) -> Vec<LatticePoint> {
    let total = (p as usize).pow(n as u32);
    (0..total)
        .map(|mut idx| {
            let mut z = vec![0i64; n];
            for v in z.iter_mut().rev() {
                *v = (idx % p as usize) as i64;
                idx /= p as usize;
            }
            LatticePoint { z }
        })
        .collect()
}

fn lattice(n: usize, p: u64, seed: u64) -> Result<Vec<Check>> {
    if n == 0 || n > 4 || !matches!(p, 2 | 3 | 5 | 7) {
        bail!("lattice suite supports n in 1..=4 and p in {{2, 3, 5, 7}}");
    }
    let gamma = 1.0;
    let ens = NestedLatticeEnsemble::build(n, p, gamma, &levels_for(n), seed)?;
    let k_c = ens.k_c();
    let mut levels = Check::new("label level structure");
    let mut linear = Check::new("labeling linearity");
    let mut distributive = Check::new("mod-lattice distributive law");
    let mut nested = Check::new("nested quantization property");
    let mut card = Check::new("codebook cardinality");

    let fine: Vec<LatticePoint> =
        period(n, p).into_iter().filter(|z| ens.contains(LatticeId::FineAll, z).unwrap_or(false)).collect();
    let labels: Vec<Vec<u64>> = fine.iter().map(|z| ens.linear_label(z)).collect::<cfkit::Result<_>>()?;
    for (z, lab) in fine.iter().zip(&labels) {
        for (l, &(c, f)) in ens.levels().iter().enumerate() {
            let in_f = ens.contains(LatticeId::Fine(l), z)?;
            let in_c = ens.contains(LatticeId::Coarse(l), z)?;
            let zf = lab[f - k_c..].iter().all(|&v| v == 0);
            let zc = lab[c - k_c..].iter().all(|&v| v == 0);
            levels.record(in_f == zf && in_c == zc, || format!("point {:?}, user {l}", z.z));
        }
    }
    let coeffs: Vec<i64> = (-(p as i64)..=p as i64).collect();
    for (i, z1) in fine.iter().enumerate() {
        for (j, z2) in fine.iter().enumerate() {
            for &a1 in &coeffs {
                for &a2 in [1i64, -1, p as i64 + 2].iter() {
                    let comb = LatticePoint { z: z1.z.iter().zip(&z2.z).map(|(x, y)| a1 * x + a2 * y).collect() };
                    let got = ens.linear_label(&comb)?;
                    let want: Vec<u64> = labels[i]
                        .iter()
                        .zip(&labels[j])
                        .map(|(&u, &v)| ((a1.rem_euclid(p as i64) as u64) * u + (a2.rem_euclid(p as i64) as u64) * v) % p)
                        .collect();
                    linear.record(got == want, || format!("{a1}*{:?} + {a2}*{:?}", z1.z, z2.z));
                }
            }
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..500 {
        let x: Vec<f64> = (0..n).map(|_| rng.random_range(-3.0..3.0)).collect();
        let y: Vec<f64> = (0..n).map(|_| rng.random_range(-3.0..3.0)).collect();
        let (a, b) = (rng.random_range(-4..=4i64), rng.random_range(-4..=4i64));
        let c = LatticeId::CoarseAll;
        let xm = ens.mod_lattice(c, &x)?;
        let ym = ens.mod_lattice(c, &y)?;
        let lhs = ens.mod_lattice(c, &xm.iter().zip(&ym).map(|(u, v)| a as f64 * u + b as f64 * v).collect::<Vec<_>>())?;
        let rhs = ens.mod_lattice(c, &x.iter().zip(&y).map(|(u, v)| a as f64 * u + b as f64 * v).collect::<Vec<_>>())?;
        distributive.record(lhs.iter().zip(&rhs).all(|(u, v)| (u - v).abs() < 1e-9), || format!("x = {x:?}"));
        for l in 0..ens.users() {
            let f = LatticeId::Fine(l);
            let direct = ens.mod_point(c, &ens.nearest_point(f, &x)?)?;
            let reduced = ens.mod_point(c, &ens.nearest_point(f, &xm)?)?;
            nested.record(direct == reduced, || format!("user {l}, x = {x:?}"));
        }
    }
    let all = period(n, p);
    for (l, &(c, f)) in ens.levels().iter().enumerate() {
        let nf = all.iter().filter(|z| ens.contains(LatticeId::Fine(l), z).unwrap_or(false)).count();
        let nc = all.iter().filter(|z| ens.contains(LatticeId::Coarse(l), z).unwrap_or(false)).count();
        let want = (p as usize).pow((f - c) as u32);
        card.record(nf == want * nc && ens.message_len(l)? == f - c, || format!("user {l}: {nf}/{nc} != {want}"));
    }
    Ok(vec![levels, linear, distributive, nested, card])
}

fn fixture(path: &Path) -> Result<Vec<Check>> {
    let inp: ChannelInput = read_json(path)?;
    let ch = inp.channel()?;
    let raw = inp.a.as_ref().context("fixture needs A")?;
    let a: IntMatrix = parse_coefficients(raw, ch.users())?;
    let pairs: BTreeSet<_> = inp.mapping_set().context("fixture needs mapping")?;
    let mut adm = Check::new("admissible mapping");
    let witness = is_admissible(&a, &pairs)?;
    adm.record(witness.is_some(), || {
        format!("no lower unitriangular L over Q makes LA vanish outside {:?}", pairs.iter().collect::<Vec<_>>())
    });
    let mut checks = vec![adm];
    if witness.is_some() {
        let mut inc = Check::new("algebraic region within successive region");
        inc.record(within(&asc_region(&ch, &a, &pairs)?, &succ_region(&ch, &a, &pairs)?), String::new);
        checks.push(inc);
    }
    Ok(checks)
}

fn report_monotone(path: &Path) -> Result<Check> {
    let text = std::fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))?;
    let mut rows: Vec<(usize, f64, f64, f64, f64)> = Vec::new();
    for (i, line) in text.lines().enumerate().skip(1) {
        let cols: Vec<&str> = line.split(',').collect();
        if cols.len() != 7 {
            bail!("{}:{}: expected 7 columns", path.display(), i + 1);
        }
        let num = |k: usize| -> Result<f64> {
            cols[k].parse::<f64>().with_context(|| format!("{}:{}: bad number '{}'", path.display(), i + 1, cols[k]))
        };
        let idx: usize = cols[1].parse().with_context(|| format!("{}:{}: bad index", path.display(), i + 1))?;
        rows.push((idx, num(0)?, num(4)?, num(5)?, num(6)?));
    }
    let mut check = Check::new("error rate non-decreasing in noise (95% intervals)");
    let combos: BTreeSet<usize> = rows.iter().map(|r| r.0).collect();
    for m in combos {
        let mut pts: Vec<_> = rows.iter().filter(|r| r.0 == m).collect();
        pts.sort_by(|a, b| a.1.total_cmp(&b.1));
        for w in pts.windows(2) {
            let (lo, hi) = (w[0], w[1]);
            check.record(hi.4 >= lo.3, || format!("combination {m}: noise {} -> {}", lo.1, hi.1));
        }
    }
    Ok(check)
}
