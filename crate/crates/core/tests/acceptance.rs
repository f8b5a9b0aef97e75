//! Acceptance criteria C1–C10. Runs every shipped configuration and prints
//! one PASS/FAIL line per criterion; exits non-zero if any criterion fails.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde_json::Value;

use ugibbs::entropy::{topological_u_entropy, DEFAULT_BUDGET};
use ugibbs::experiment::{self, canonical_summary, ExperimentConfig};
use ugibbs::factor::{attractor_sample, Factor};
use ugibbs::leaves::{cs_holonomy, plaque_of};
use ugibbs::measures::{branch_weight_spread, cesaro_state, PAST, UNKNOWN};
use ugibbs::par::{self, ExecMode};
use ugibbs::systems::{default_da_matrix, make_derived_anosov, make_linear_torus, make_solenoid, TrigPoly2};

const CONFIGS: [&str; 7] = [
    "solenoid_k3",
    "two_solenoid",
    "swap_solenoid",
    "modified_solenoid",
    "cat_map",
    "derived_anosov_000",
    "derived_anosov_005",
];

fn config_path(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("configs").join(format!("{name}.cfg"))
}

fn run_config(name: &str, dir: &Path) -> Value {
    let cfg = ExperimentConfig::load(&config_path(name)).expect("config");
    experiment::run(&cfg, Some(dir)).expect("run").summary
}

fn f(v: &Value) -> f64 {
    v.as_f64().unwrap_or(f64::NAN)
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs()
}

fn gibbs_entry(s: &Value) -> &Value {
    &s["tasks"]["entropy"]["entries"][0]
}

fn periodic_entries(s: &Value) -> Vec<&Value> {
    s["tasks"]["entropy"]["entries"]
        .as_array()
        .map(|a| a.iter().filter(|e| e["name"].as_str().is_some_and(|n| n.starts_with("periodic"))).collect())
        .unwrap_or_default()
}

fn ks_uniform(mut xs: Vec<f64>, lo: f64, hi: f64) -> f64 {
    xs.sort_by(f64::total_cmp);
    let n = xs.len() as f64;
    xs.iter()
        .enumerate()
        .map(|(i, &x)| {
            let c = ((x - lo) / (hi - lo)).clamp(0.0, 1.0);
            (c - i as f64 / n).abs().max((c - (i + 1) as f64 / n).abs())
        })
        .fold(0.0, f64::max)
}

/// Holonomy image of a plaque parametrised uniformly in its factor
/// coordinate, re-measured through π on the target plaque.
fn holonomy_ks(factor: &Factor, x: &[f64]) -> f64 {
    let t = factor.model.torus().expect("torus model");
    let stable = t.auto.eigen_frame().column(1).into_owned();
    let px = plaque_of(factor, x, 2001).expect("plaque");
    for delta in [0.004, -0.004, 0.01, -0.01, 0.02, -0.02] {
        let y: Vec<f64> = x.iter().zip(stable.iter()).map(|(a, s)| (a + delta * s).rem_euclid(1.0)).collect();
        let Ok(py) = plaque_of(factor, &y, 7) else { continue };
        let images: Result<Vec<_>, _> = px.samples.iter().map(|z| cs_holonomy(factor, &px, &py, z)).collect();
        let Ok(images) = images else { continue };
        let origin = factor.base_point(&py.anchor).unwrap();
        let ts: Vec<f64> = images
            .iter()
            .map(|w| {
                let p = factor.base_point(&w.x).unwrap();
                match &factor.markov {
                    Some(ms) => ms.locate_in(&p, py.cell).map_or(f64::NAN, |(_, (u, _))| u),
                    None => factor.unstable_offset(&p, &origin),
                }
            })
            .collect();
        return ks_uniform(ts, py.range.0, py.range.1);
    }
    f64::INFINITY
}

/// Lebesgue mass of each 3-symbol forward cylinder of the cat map,
/// counted on a 1000 × 1000 midpoint grid.
fn cat_grid_masses(factor: &Factor, depth: usize) -> BTreeMap<Vec<u8>, f64> {
    let n = 1000;
    let mut out: BTreeMap<Vec<u8>, f64> = BTreeMap::new();
    for i in 0..n {
        for j in 0..n {
            let mut x = vec![(i as f64 + 0.5) / n as f64, (j as f64 + 0.5) / n as f64];
            let mut w = Vec::with_capacity(depth);
            for _ in 0..depth {
                w.push(factor.symbol(&x).map_or(UNKNOWN, |s| s as u8));
                x = factor.model.map(&x);
            }
            *out.entry(w).or_default() += 1.0 / (n * n) as f64;
        }
    }
    out
}

fn cat_gibbs_l1(factor: &Factor, seed: u64) -> f64 {
    let depth = 3;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let x = attractor_sample(&factor.model, 1, 60, &mut rng).remove(0);
    let plaque = ugibbs::leaves::plaque_chart(factor, &x).unwrap();
    let (mu, _, _) = cesaro_state(factor, &plaque, 2000, 500, seed, 6).unwrap();
    let mut h: BTreeMap<Vec<u8>, f64> = BTreeMap::new();
    let mut total = 0.0;
    for (w, &wt) in mu.words.iter().zip(&mu.weights) {
        let key = &w[PAST..PAST + depth];
        if !key.contains(&UNKNOWN) {
            *h.entry(key.to_vec()).or_default() += wt;
            total += wt;
        }
    }
    let oracle = cat_grid_masses(factor, depth);
    let keys: std::collections::BTreeSet<&Vec<u8>> = h.keys().chain(oracle.keys()).collect();
    keys.into_iter().map(|k| (h.get(k).copied().unwrap_or(0.0) / total - oracle.get(k).copied().unwrap_or(0.0)).abs()).sum()
}

struct Verdict {
    pass: bool,
    detail: String,
}

fn verdict(pass: bool, detail: String) -> Verdict {
    Verdict { pass, detail }
}

fn main() {
    let tmp = tempfile::tempdir().expect("tempdir");
    let started = Instant::now();
    let mut s: BTreeMap<&str, Value> = BTreeMap::new();
    for name in CONFIGS {
        s.insert(name, run_config(name, &tmp.path().join(name)));
    }
    let suite_secs = started.elapsed().as_secs_f64();
    let ln3 = 3f64.ln();
    let mut results: Vec<(&str, Verdict)> = Vec::new();

    // C1
    {
        let hv = f(&s["solenoid_k3"]["tasks"]["entropy"]["h_vol"]["h_vol"]);
        let m = make_solenoid(3, 0.5, TrigPoly2::circle(0.3)).unwrap();
        let fac = Factor::new(&m, 1e-8).unwrap();
        let x = m.iterate(&[0.2, 0.0, 0.0], 60);
        par::set_mode(ExecMode::Sequential);
        let t = Instant::now();
        let g = topological_u_entropy(&fac, &x, 0.01, 12, DEFAULT_BUDGET).unwrap();
        let secs = t.elapsed().as_secs_f64();
        par::set_mode(ExecMode::Parallel);
        let pass = rel(hv, ln3) <= 0.02 && rel(g.h_vol, ln3) <= 0.02 && secs <= 10.0;
        results.push(("C1", verdict(pass, format!("h_vol {hv:.5} (config), {:.5} (sequential, {secs:.2} s); log 3 = {ln3:.5} ± 2%", g.h_vol))));
    }

    // C2
    {
        let mut pass = true;
        let mut parts = Vec::new();
        for name in ["solenoid_k3", "cat_map"] {
            let hc = f(&gibbs_entry(&s[name])["h_cond"]["h_cond"]);
            let hb = f(&s[name]["tasks"]["entropy"]["h_base"]);
            pass &= rel(hc, hb) <= 0.03;
            let zero = periodic_entries(&s[name]).iter().all(|e| e["h_cond"]["h_cond"].as_f64() == Some(0.0));
            pass &= zero;
            parts.push(format!("{name}: h_cond {hc:.5} vs h(A) {hb:.5}, periodic h_cond = 0: {zero}"));
        }
        let cat = make_linear_torus(&[vec![2, 1], vec![1, 1]]).unwrap();
        let fc = Factor::new(&cat, 1e-8).unwrap();
        let l1 = cat_gibbs_l1(&fc, 20240605);
        pass &= l1 < 0.03;
        parts.push(format!("cat cylinder histogram vs grid Lebesgue L1 {l1:.4} < 0.03"));
        results.push(("C2", verdict(pass, parts.join("; "))));
    }

    // C3
    {
        let mut pass = true;
        let mut parts = Vec::new();
        for name in ["solenoid_k3", "two_solenoid", "swap_solenoid", "modified_solenoid", "cat_map"] {
            let n = periodic_entries(&s[name]).len();
            let v = s[name]["tasks"]["entropy"]["violations"].as_u64().unwrap_or(u64::MAX);
            pass &= n >= 10 && v == 0;
            parts.push(format!("{name} {n} orbits/{v} violations"));
        }
        results.push(("C3", verdict(pass, parts.join(", "))));
    }

    // C4
    {
        let g = &s["solenoid_k3"]["tasks"]["gibbs"];
        let d = f(&g["seed_distance"]);
        let curves = g["convergence_curves"].as_array().cloned().unwrap_or_default();
        let mut monotone = !curves.is_empty();
        let mut last = Vec::new();
        for c in &curves {
            let vals: Vec<f64> = c.as_array().unwrap().iter().map(|p| f(&p[1])).collect();
            let ns: Vec<u64> = c.as_array().unwrap().iter().map(|p| p[0].as_u64().unwrap()).collect();
            monotone &= vals.windows(2).all(|w| w[1] <= w[0]) && ns.last() == Some(&2000) && vals.last().is_some_and(|&v| v < 0.05);
            last.push(vals.last().copied().unwrap_or(f64::NAN));
        }
        let pass = d < 0.05 && monotone;
        results.push(("C4", verdict(pass, format!("seed distance {d:.4} < 0.05; curves non-increasing to {last:.4?} at n = 2000"))));
    }

    // C5
    {
        let t = &s["two_solenoid"]["tasks"];
        let comps = t["gibbs"]["components"].as_u64();
        let skel = t["skeleton"]["verification"]["skeleton"].as_array().map(|a| a.len());
        let margin = f(&t["gibbs"]["min_margin"]);
        let fills: Vec<f64> = t["skeleton"]["structure"]["components"].as_array().unwrap().iter().map(|c| f(&c["leaf_fill"])).collect();
        let twin = comps == Some(2) && skel == Some(2) && margin > 0.1 && fills.len() == 2 && fills.iter().all(|&x| x >= 0.99);
        let w = &s["swap_solenoid"]["tasks"];
        let wc = w["gibbs"]["components"].as_u64();
        let st = &w["skeleton"]["structure"]["components"][0];
        let cc = st["connected_components"].as_u64();
        let perm = st["permutation"].clone();
        let swap = wc == Some(1) && cc == Some(2) && perm == serde_json::json!([1, 0]);
        results.push((
            "C5",
            verdict(
                twin && swap,
                format!("twin: {comps:?} components, {skel:?} skeleton points, margin {margin:.3}, fill {fills:?}; swap: {wc:?} state, {cc:?} pieces, permutation {perm}"),
            ),
        ));
    }

    // C6
    {
        let c = &s["solenoid_k3"]["tasks"]["lyapunov"]["certificate"]["certified"];
        let sol = c["m"].as_u64() == Some(1) && f(&c["a"]) <= 0.5f64.ln() / 2.0;
        let mc = &s["modified_solenoid"]["tasks"]["lyapunov"]["certificate"]["certified"];
        let mm = mc["m"].as_u64().unwrap_or(0) as usize;
        let avg = if mm > 0 { f(&mc["averages"][mm - 1]) / mm as f64 } else { f64::NAN };
        let fam = &s["modified_solenoid"]["system"]["family"];
        let modified = avg <= -0.43 && f(&fam["nu_window"]) <= 0.1 && f(&fam["big_k"]) == 4.0;
        let cmp = experiment::compare(&tmp.path().join("derived_anosov_000"), &tmp.path().join("derived_anosov_005")).unwrap();
        let da = !cmp.certificate_lost && cmp.certificate_delta.is_some_and(|d| d < 0.1);
        results.push((
            "C6",
            verdict(
                sol && modified && da,
                format!(
                    "solenoid m {} a {:.6} ≤ {:.6}; modified average {avg:.4} ≤ -0.43 (K {}, ν_β window {:.4}); DA |Δa| {:?} < 0.1",
                    c["m"],
                    f(&c["a"]),
                    0.5f64.ln() / 2.0,
                    fam["big_k"],
                    f(&fam["nu_window"]),
                    cmp.certificate_delta
                ),
            ),
        ));
    }

    // C7
    {
        let t = &s["derived_anosov_005"]["tasks"];
        let w = &t["lyapunov"]["weak_stable_bound"];
        let steps = t["lyapunov"]["report"]["steps"].as_u64();
        let lc = f(&w["cs_top"]);
        let lk = f(&w["log_kappa2"]);
        let res = f(&t["verify"]["factor"]["residual"]);
        let pass = steps == Some(1_000_000) && lc <= lk + 0.05 && res < 1e-6;
        results.push(("C7", verdict(pass, format!("λ^c {lc:.4} ≤ log κ₂ + 0.05 = {:.4} (κ₂ {:.4}, {steps:?} steps); Franks residual {res:.2e}", lk + 0.05, lk.exp()))));
    }

    // C8
    {
        let ks = f(&s["solenoid_k3"]["tasks"]["gibbs"]["conditional_ks"]["max"]);
        let cat = make_linear_torus(&[vec![2, 1], vec![1, 1]]).unwrap();
        let fc = Factor::new(&cat, 1e-8).unwrap();
        let da = make_derived_anosov(&default_da_matrix(), 0.05).unwrap();
        let fd = Factor::new(&da, 1e-8).unwrap();
        let hk_cat = holonomy_ks(&fc, &[0.3, 0.2]);
        let hk_da = holonomy_ks(&fd, &da.iterate(&[0.2, 0.3, 0.4], 5));
        let sol = make_solenoid(3, 0.5, TrigPoly2::circle(0.3)).unwrap();
        let fs = Factor::new(&sol, 1e-8).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let anchors_s = attractor_sample(&sol, 8, 60, &mut rng);
        let anchors_c = attractor_sample(&cat, 8, 0, &mut rng);
        let (sp_s, _) = branch_weight_spread(&fs, &anchors_s, 3000).unwrap();
        let (sp_c, _) = branch_weight_spread(&fc, &anchors_c, 3000).unwrap();
        let pf = ["solenoid_k3", "cat_map", "two_solenoid", "modified_solenoid"].iter().all(|n| s[*n]["tasks"]["entropy"]["pf_matches"] == Value::Bool(true));
        let pass = ks < 0.05 && hk_cat < 0.05 && hk_da < 0.05 && sp_s < 0.02 && sp_c < 0.02 && pf;
        results.push((
            "C8",
            verdict(
                pass,
                format!("conditional KS {ks:.4}, holonomy KS cat {hk_cat:.4} / DA {hk_da:.4}; branch spread solenoid {sp_s:.2e} / cat {sp_c:.2e}; PF entropy = h(A) within 1e-9: {pf}"),
            ),
        ));
    }

    // C9
    {
        let dm = f(&s["modified_solenoid"]["tasks"]["lyapunov"]["hyperbolic_times"]["density"]);
        let ds = f(&s["solenoid_k3"]["tasks"]["lyapunov"]["hyperbolic_times"]["density"]);
        let e = gibbs_entry(&s["solenoid_k3"]);
        let hs = f(&e["h_total_symbolic"]["h"]);
        let hc = f(&e["h_cond"]["h_cond"]);
        let pass = dm > 0.0 && ds == 1.0 && rel(hs, hc) <= 0.05 && e["symbolic_agrees"] == Value::Bool(true);
        results.push(("C9", verdict(pass, format!("hyperbolic-time density modified {dm:.3} > 0, solenoid {ds} = 1; h_total_symbolic {hs:.5} vs h_cond {hc:.5}"))));
    }

    // C10
    {
        let a = canonical_summary(&s["solenoid_k3"]);
        let b = canonical_summary(&run_config("solenoid_k3", &tmp.path().join("repeat")));
        par::set_mode(ExecMode::Sequential);
        let c = canonical_summary(&run_config("solenoid_k3", &tmp.path().join("sequential")));
        par::set_mode(ExecMode::Parallel);
        let csv_same = ["convergence.csv", "entropy_table.csv", "lyapunov.csv", "gibbs_components.csv"].iter().all(|n| {
            let x = std::fs::read(tmp.path().join("solenoid_k3").join(n)).ok();
            x.is_some() && x == std::fs::read(tmp.path().join("repeat").join(n)).ok() && x == std::fs::read(tmp.path().join("sequential").join(n)).ok()
        });
        let pass = a == b && a == c && csv_same && suite_secs < 600.0;
        results.push((
            "C10",
            verdict(pass, format!("repeat identical: {}, sequential identical: {}, CSVs identical: {csv_same}; shipped suite {suite_secs:.1} s < 600 s", a == b, a == c)),
        ));
    }

    let mut failed = 0;
    for (id, v) in &results {
        println!("{id:<4} {} {}", if v.pass { "PASS" } else { "FAIL" }, v.detail);
        failed += (!v.pass) as usize;
    }
    println!("acceptance: {} passed, {failed} failed", results.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
