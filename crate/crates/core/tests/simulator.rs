use std::collections::BTreeSet;

use cfkit::channel::int_matrix;
use cfkit::regions::{canonical_mappings, Pair, Scheme};
use cfkit::simulator::{run_trials, simulate_trial, zp_asc_matrix, CampaignConfig, Equalizers, TrialConfig};
use cfkit::{ChannelInstance, Error, NestedLatticeEnsemble};

fn cube_config(scheme: Scheme, noise_std: f64) -> TrialConfig {
    let p = 1.0 / 12.0;
    TrialConfig {
        ensemble: NestedLatticeEnsemble::from_generator(10, 2, 1.0, &[(0, 1), (0, 1), (0, 1)], vec![vec![1; 10]]).unwrap(),
        ch: ChannelInstance::from_rows(&[[2.0, 1.0, 1.0]], &[p, p, p]).unwrap(),
        a: int_matrix(&[[1, 1, 1], [1, -1, -1], [0, 0, 0]]),
        scheme,
        mapping: Some([(0, 0), (0, 1), (0, 2), (1, 1), (1, 2)].into_iter().collect()),
        noise_std,
        equalizers: Equalizers::Optimal,
        master_seed: 21,
    }
}

#[test]
fn inputs_have_nominal_power_and_cosets_hold() {
    let rep = run_trials(&cube_config(Scheme::Successive, 1e-3), 400).unwrap();
    // Uniform over the unit cube: second moment 1/12 per dimension.
    for &pw in &rep.mean_power {
        assert!((pw - 1.0 / 12.0).abs() < 0.004, "{pw}");
    }
    assert_eq!(rep.coset_violations, 0);
    assert_eq!(rep.combinations[2].errors, 0);
}

#[test]
fn zero_row_always_decodes() {
    let rep = run_trials(&cube_config(Scheme::Parallel, 0.5), 100).unwrap();
    assert_eq!(rep.combinations[2].errors, 0);
    assert!(rep.combinations[1].errors > 0);
}

#[test]
fn trials_are_reproducible_individually() {
    let cfg = cube_config(Scheme::Successive, 1e-2);
    let eq = cfg.equalizer_set().unwrap();
    let a = simulate_trial(&cfg, &eq, 17).unwrap();
    let b = simulate_trial(&cfg, &eq, 17).unwrap();
    let c = simulate_trial(&cfg, &eq, 18).unwrap();
    assert_eq!(a, b);
    assert_ne!(a.dithers, c.dithers);
    assert_eq!(a.real_sum_ok, Some(vec![true, true, true]));
}

#[test]
fn campaign_round_trip_and_csv() {
    let text = r#"{
        "ensemble": { "n": 4, "p": 5, "gamma": 2.0, "levels": [[0, 1], [0, 1]], "G": [[1, 2, 3, 4]] },
        "H": [[1.0, 1.5]],
        "P": [0.3333333333333333, 0.3333333333333333],
        "A": [[1, 1], [1, 2]],
        "mode": "parallel",
        "noise_std": [0.01, 0.3],
        "trials": 50,
        "master_seed": 3
    }"#;
    let cfg: CampaignConfig = serde_json::from_str(text).unwrap();
    let again: CampaignConfig = serde_json::from_str(&serde_json::to_string(&cfg).unwrap()).unwrap();
    assert_eq!(cfg, again);
    let csv = cfg.run().unwrap().to_csv();
    assert_eq!(csv, cfg.run().unwrap().to_csv());
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], "noise_std,combination_index,errors,trials,rate_estimate,ci_low,ci_high");
    assert_eq!(lines.len(), 5);
    assert!(lines[1].starts_with("0.010000,0,0,50,0.000000,0.000000,"));
}

#[test]
fn campaign_rejects_bad_shapes() {
    let text = r#"{
        "ensemble": { "n": 4, "p": 5, "gamma": 2.0, "levels": [[0, 1], [0, 1]], "G": [[1, 2, 3, 4]] },
        "H": [[1.0, 1.5]], "P": [0.3, 0.3], "A": [[1, 1, 1]],
        "mode": "parallel", "noise_std": [0.1], "trials": 5, "master_seed": 0
    }"#;
    let cfg: CampaignConfig = serde_json::from_str(text).unwrap();
    assert!(matches!(cfg.trial_config(0.1), Err(Error::Dimension(_))));
    assert!(serde_json::from_str::<CampaignConfig>(&text.replace("\"trials\"", "\"trails\"")).is_err());
}

#[test]
fn zp_matrices_are_inverse() {
    let a = int_matrix(&[[1, 2, 0], [2, 1, 1], [1, 1, 3]]);
    for p in [7u64, 11, 13] {
        for m in canonical_mappings(&a) {
            let (l, inv) = match zp_asc_matrix(&a, &m.pairs, p) {
                Ok(v) => v,
                Err(Error::PTooSmall(_)) => continue,
                Err(e) => panic!("{e}"),
            };
            for i in 0..3 {
                for j in 0..3 {
                    let v: u64 = (0..3).map(|k| l[i][k] * inv[k][j]).sum::<u64>() % p;
                    assert_eq!(v, u64::from(i == j));
                }
            }
        }
    }
    let bad: BTreeSet<Pair> = [(0, 0), (1, 1), (2, 2)].into_iter().collect();
    assert!(matches!(zp_asc_matrix(&a, &bad, 7), Err(Error::Precondition(_))));
}
