use std::fmt::Write as _;
use std::path::Path;

use anyhow::{bail, Context, Result};
use cfkit::channel::{effective_matrix, int_rows, para_variances, succ_chain, sum_capacity, Rate};
use cfkit::intsearch::{dominant_solution, dominant_solution_in_box, entry_bound, entry_radius, SearchOptions};
use cfkit::mac_opt::{theorem4_candidates, theorem5_search, MacAssignment, MAX_SEARCH_CANDIDATES};
use cfkit::regions::{
    all_pairs, asc_region, fmt6, mac_region, para_region, region_2d, sic_region, succ_region, vertices_csv, Provenance,
    RateBox, RegionOp,
};
use cfkit::simulator::CampaignConfig;
use cfkit::{ChannelInstance, IntMatrix, RateRegionSpec};
use clap::ValueEnum;
use serde_json::json;

use crate::input::{read_json, ChannelInput};
use crate::output::{join6, json_string, matrix_cell, pretty, round6, write};
use crate::RegionMode;

fn dominant(ch: &ChannelInstance) -> Result<IntMatrix> {
    Ok(dominant_solution(&effective_matrix(ch)?)?.a_star)
}

/// Largest radius up to the entry bound whose full search fits the candidate cap.
pub fn auto_search_bound(ch: &ChannelInstance) -> i64 {
    let cells = (ch.users() * ch.users()) as u32;
    let mut r = entry_radius(ch).max(1);
    while r > 1 && ((2 * r + 1) as u64).checked_pow(cells).is_none_or(|c| c > MAX_SEARCH_CANDIDATES) {
        r -= 1;
    }
    r
}

pub fn region(input: &Path, mode: RegionMode, dir: &Path, bound: Option<i64>) -> Result<bool> {
    let inp: ChannelInput = read_json(input)?;
    if mode == RegionMode::Compound {
        return compound(&inp, dir, bound);
    }
    let ch = inp.channel()?;
    let spec = match mode {
        RegionMode::Mac => mac_region(&ch)?,
        RegionMode::Sic => sic_region(&ch)?,
        _ => {
            let a = match inp.coefficients(ch.users())? {
                Some(a) => a,
                None => dominant(&ch)?,
            };
            let mapping = inp.mapping_set().unwrap_or_else(|| all_pairs(a.nrows(), a.ncols()));
            match mode {
                RegionMode::Para => para_region(&ch, &a)?,
                RegionMode::Succ => succ_region(&ch, &a, &mapping)?,
                _ => asc_region(&ch, &a, &mapping)?,
            }
        }
    };
    let name = mode.to_possible_value().expect("no skipped variants").get_name().to_string();
    write(dir, &format!("region_{name}.json"), &json_string(serde_json::to_value(&spec)?))?;
    if ch.users() == 2 {
        let pts = region_2d(&[spec], RegionOp::Union)?;
        write(dir, &format!("region_{name}.csv"), &vertices_csv(&pts))?;
    }
    Ok(true)
}

fn assignment_union(users: usize, found: &[MacAssignment]) -> RateRegionSpec {
    let boxes = found
        .iter()
        .map(|asg| RateBox {
            caps: asg.rates.iter().map(|&r| Rate::Finite(r)).collect(),
            provenance: Provenance::MacCorner {
                a: int_rows(&asg.a),
                mapping: asg.mapping.pair_list(),
                pi: asg.pi.clone(),
            },
        })
        .collect();
    RateRegionSpec::union(users, boxes)
}

fn panel_rows(out: &mut String, label: &str, pts: &[(f64, f64)]) {
    for (x, y) in pts {
        let _ = writeln!(out, "{label},{},{}", fmt6(*x), fmt6(*y));
    }
}

const FAMILIES: [&str; 3] = ["mac", "succ", "sic"];

fn compound(inp: &ChannelInput, dir: &Path, bound: Option<i64>) -> Result<bool> {
    let receivers = inp.receivers()?;
    if receivers[0].users() != 2 {
        bail!("compound mode needs exactly two users, got {}", receivers[0].users());
    }
    let mut families: Vec<Vec<RateRegionSpec>> = vec![Vec::new(); FAMILIES.len()];
    let mut corners = Vec::new();
    for (k, ch) in receivers.iter().enumerate() {
        let found = theorem5_search(ch, bound.unwrap_or_else(|| auto_search_bound(ch)))?;
        let specs = [mac_region(ch)?, assignment_union(2, &found), sic_region(ch)?];
        let mut csv = String::from("region,R1,R2\n");
        for (f, spec) in specs.into_iter().enumerate() {
            panel_rows(&mut csv, FAMILIES[f], &region_2d(std::slice::from_ref(&spec), RegionOp::Union)?);
            families[f].push(spec);
        }
        write(dir, &format!("compound_rx{}.csv", k + 1), &csv)?;
        corners.push(json!({
            "receiver": k + 1,
            "sum_capacity": sum_capacity(ch),
            "successive_points": found.iter().map(|a| a.rates.clone()).collect::<Vec<_>>(),
        }));
    }
    let mut inter = String::from("region,R1,R2\n");
    let mut hull = String::from("region,R1,R2\n");
    let mut panels = serde_json::Map::new();
    for (f, specs) in families.iter().enumerate() {
        let i_pts = region_2d(specs, RegionOp::Intersect)?;
        let h_pts = region_2d(specs, RegionOp::IntersectHull)?;
        panel_rows(&mut inter, FAMILIES[f], &i_pts);
        panel_rows(&mut hull, FAMILIES[f], &h_pts);
        panels.insert(FAMILIES[f].into(), json!({ "intersection": i_pts, "hull": h_pts }));
    }
    write(dir, "compound_intersection.csv", &inter)?;
    write(dir, "compound_hull.csv", &hull)?;
    write(dir, "compound.json", &json_string(json!({ "receivers": corners, "panels": panels })))?;
    Ok(true)
}

pub fn search(input: &Path, bound: &str, dir: &Path) -> Result<bool> {
    let inp: ChannelInput = read_json(input)?;
    let ch = inp.channel()?;
    let f = effective_matrix(&ch)?;
    let sol = if bound == "auto" {
        dominant_solution(&f)?
    } else {
        let r: i64 = bound.parse().with_context(|| format!("bound must be 'auto' or an integer, got '{bound}'"))?;
        dominant_solution_in_box(&f, r, &SearchOptions::default())?
    };
    let para = para_variances(&ch, &sol.a_star)?;
    let succ = succ_chain(&ch, &sol.a_star)?;
    let mut csv = String::from("row,a,norm,sigma2_para,sigma2_succ\n");
    let mut rows = Vec::new();
    for m in 0..sol.a_star.nrows() {
        let a: Vec<i64> = (0..sol.a_star.ncols()).map(|j| sol.a_star[(m, j)]).collect();
        let cell = a.iter().map(i64::to_string).collect::<Vec<_>>().join(" ");
        let _ = writeln!(csv, "{m},{cell},{}", join6(&[sol.norms[m], para[m], succ[m]]));
        rows.push(json!({ "row": m, "a": a, "norm": sol.norms[m], "sigma2_para": para[m], "sigma2_succ": succ[m] }));
        println!("row {m}: a = [{cell}]  sigma2_para = {}  sigma2_succ = {}", fmt6(para[m]), fmt6(succ[m]));
    }
    let doc = json!({
        "bound": bound,
        "entry_bound": entry_bound(&ch),
        "entry_radius": entry_radius(&ch),
        "A_star": int_rows(&sol.a_star),
        "rows": rows,
    });
    write(dir, "search.json", &json_string(doc))?;
    write(dir, "search.csv", &csv)?;
    Ok(true)
}

pub fn mac(input: &Path, bound: Option<i64>, dir: &Path) -> Result<bool> {
    let inp: ChannelInput = read_json(input)?;
    let ch = inp.channel()?;
    let l = ch.users();
    let parallel = theorem4_candidates(&ch)?;
    let b = bound.unwrap_or_else(|| auto_search_bound(&ch));
    let successive = theorem5_search(&ch, b)?;
    let rate_cols: Vec<String> = (1..=l).map(|i| format!("R{i}")).collect();
    let mut csv = format!("scheme,A,pi,{},sum_rate,gap\n", rate_cols.join(","));
    for (scheme, rows) in [("parallel", &parallel), ("successive", &successive)] {
        for asg in rows.iter() {
            let pi = asg.pi.iter().map(usize::to_string).collect::<Vec<_>>().join(" ");
            let _ = writeln!(
                csv,
                "{scheme},{},{pi},{},{}",
                matrix_cell(&asg.a),
                join6(&asg.rates),
                join6(&[asg.sum_rate, asg.gap_to_capacity])
            );
            println!("{scheme}: rates ({})  gap {}", join6(&asg.rates), fmt6(asg.gap_to_capacity));
        }
    }
    let lf = l as f64;
    let doc = json!({
        "sum_capacity": sum_capacity(&ch),
        "gap_bound": 0.5 * lf * lf.log2(),
        "search_bound": b,
        "parallel": parallel.iter().map(MacAssignment::to_json).collect::<Vec<_>>(),
        "successive": successive.iter().map(MacAssignment::to_json).collect::<Vec<_>>(),
    });
    write(dir, "mac.json", &json_string(doc))?;
    write(dir, "mac.csv", &csv)?;
    Ok(true)
}

pub fn simulate(config: &Path, dir: &Path) -> Result<bool> {
    let cfg: CampaignConfig = read_json(config)?;
    if cfg.trials == 0 {
        bail!("trials: must be at least 1");
    }
    if cfg.noise_std.is_empty() {
        bail!("noise_std: list is empty");
    }
    if let Some(i) = cfg.noise_std.iter().position(|s| !(s.is_finite() && *s >= 0.0)) {
        bail!("noise_std[{i}]: must be finite and nonnegative");
    }
    let report = cfg.run()?;
    for pt in &report.points {
        let errs: Vec<String> = pt.combinations.iter().map(|c| format!("{}/{}", c.errors, c.trials)).collect();
        println!("noise_std {}: errors {}", fmt6(pt.noise_std), errs.join(" "));
    }
    write(dir, "simulate.csv", &report.to_csv())?;
    let mut rep = serde_json::to_value(&report)?;
    round6(&mut rep);
    // The configuration is echoed at full precision so it can be rerun verbatim.
    write(dir, "simulate.json", &pretty(&json!({ "config": cfg, "report": rep })))?;
    Ok(true)
}
