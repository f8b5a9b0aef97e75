//! Experiment configuration, the task runner and run comparison.

use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::entropy::{entropy_identities, topological_u_entropy, BatteryItem, EntropyOptions, DEFAULT_BUDGET};
use crate::error::{Error, Result};
use crate::factor::{attractor_sample, Factor, SemiConjugacyKind};
use crate::leaves::plaque_chart;
use crate::lyapunov::{c_mostly_certificate, hyperbolic_times, lyapunov_spectrum, CertificateOutcome};
use crate::measures::{
    base_projection_l1, cesaro_state, conditional_ks, ergodic_components, periodic_measure, weak_distance, GibbsReport, GibbsStatus,
    LabelOptions, ParticleMeasure, Provenance,
};
use crate::skeleton::{find_periodic, support_structure, verify_skeleton, SkeletonStatus, StructureOptions};
use crate::systems::{
    default_da_matrix, default_twin_b, make_derived_anosov, make_linear_torus, make_modified_solenoid, make_solenoid, make_twin_solenoid,
    partial_volume_expansion, verify_partial_hyperbolicity, ModifiedParams, SystemKind, SystemModel, TrigPoly2, TrigTerm, CONJ_DEPTH,
};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Task {
    Verify,
    Gibbs,
    Lyapunov,
    Entropy,
    Skeleton,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SystemName {
    Solenoid,
    ModifiedSolenoid,
    TwoSolenoid,
    SwapSolenoid,
    DerivedAnosov,
    LinearTorus,
}

impl SystemName {
    pub const ALL: [SystemName; 6] = [
        SystemName::Solenoid,
        SystemName::ModifiedSolenoid,
        SystemName::TwoSolenoid,
        SystemName::SwapSolenoid,
        SystemName::DerivedAnosov,
        SystemName::LinearTorus,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            SystemName::Solenoid => "solenoid",
            SystemName::ModifiedSolenoid => "modified_solenoid",
            SystemName::TwoSolenoid => "two_solenoid",
            SystemName::SwapSolenoid => "swap_solenoid",
            SystemName::DerivedAnosov => "derived_anosov",
            SystemName::LinearTorus => "linear_torus",
        }
    }

    pub fn description(&self) -> &'static str {
        match self {
            SystemName::Solenoid => "(θ, x) ↦ (kθ, a x + b(θ)) on S¹ × D; keys k, a, b_radius or b",
            SystemName::ModifiedSolenoid => "solenoid with a saddle window over [-ε, ε]; keys k, a, alpha, eps, ku, ks",
            SystemName::TwoSolenoid => "two attracting sub-solenoids near x₁ = ±c; keys k, a, c, w, b",
            SystemName::SwapSolenoid => "a pair of sub-solenoids exchanged by the map; keys k, a, c, w, b",
            SystemName::DerivedAnosov => "A x + amplitude·sin(2π x₀) v₂ on T³; keys matrix, amplitude",
            SystemName::LinearTorus => "hyperbolic automorphism of T²; key matrix",
        }
    }

    fn keys(&self) -> &'static [&'static str] {
        match self {
            SystemName::Solenoid => &["k", "a", "b_radius", "b"],
            SystemName::ModifiedSolenoid => &["k", "a", "alpha", "eps", "ku", "ks"],
            SystemName::TwoSolenoid | SystemName::SwapSolenoid => &["k", "a", "c", "w", "b"],
            SystemName::DerivedAnosov => &["matrix", "amplitude"],
            SystemName::LinearTorus => &["matrix"],
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemConfig {
    pub kind: SystemName,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub k: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub a: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub b_radius: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub b: Option<Vec<TrigTerm>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub c: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub w: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alpha: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eps: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ku: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ks: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub matrix: Option<Vec<Vec<i64>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub amplitude: Option<f64>,
}

impl SystemConfig {
    fn present_keys(&self) -> Vec<&'static str> {
        let mut v = Vec::new();
        macro_rules! key {
            ($f:ident) => {
                if self.$f.is_some() {
                    v.push(stringify!($f));
                }
            };
        }
        key!(k);
        key!(a);
        key!(b_radius);
        key!(b);
        key!(c);
        key!(w);
        key!(alpha);
        key!(eps);
        key!(ku);
        key!(ks);
        key!(matrix);
        key!(amplitude);
        v
    }

    /// Builds the model; parameter problems are configuration errors.
    pub fn build(&self) -> Result<(SystemModel, Option<Value>)> {
        let allowed = self.kind.keys();
        if let Some(bad) = self.present_keys().into_iter().find(|k| !allowed.contains(k)) {
            return Err(Error::Config(format!("key `{bad}` does not apply to system `{}`", self.kind.as_str())));
        }
        if self.b.is_some() && self.b_radius.is_some() {
            return Err(Error::Config("give either `b` or `b_radius`, not both".into()));
        }
        let wrap = |e: Error| Error::Config(format!("system `{}`: {e}", self.kind.as_str()));
        let b = |default: TrigPoly2| match (&self.b, self.b_radius) {
            (Some(t), _) => TrigPoly2 { terms: t.clone() },
            (None, Some(r)) => TrigPoly2::circle(r),
            (None, None) => default,
        };
        match self.kind {
            SystemName::Solenoid => {
                let m = make_solenoid(self.k.unwrap_or(3), self.a.unwrap_or(0.5), b(TrigPoly2::circle(0.3))).map_err(wrap)?;
                Ok((m, None))
            }
            SystemName::ModifiedSolenoid => {
                let mut p = ModifiedParams::default();
                p.k = self.k.unwrap_or(p.k);
                p.a = self.a.unwrap_or(p.a);
                p.alpha = self.alpha.unwrap_or(p.alpha);
                p.eps = self.eps.unwrap_or(p.eps);
                p.saddle.ku = self.ku.unwrap_or(p.saddle.ku);
                p.saddle.ks = self.ks.unwrap_or(p.saddle.ks);
                let (m, fam) = make_modified_solenoid(&p).map_err(wrap)?;
                Ok((m, Some(serde_json::to_value(fam)?)))
            }
            SystemName::TwoSolenoid | SystemName::SwapSolenoid => {
                let m = make_twin_solenoid(
                    self.k.unwrap_or(3),
                    self.a.unwrap_or(0.5),
                    self.c.unwrap_or(0.5),
                    self.w.unwrap_or(0.25),
                    b(default_twin_b()),
                    self.kind == SystemName::SwapSolenoid,
                )
                .map_err(wrap)?;
                Ok((m, None))
            }
            SystemName::DerivedAnosov => {
                let matrix = self.matrix.clone().unwrap_or_else(default_da_matrix);
                Ok((make_derived_anosov(&matrix, self.amplitude.unwrap_or(0.0)).map_err(wrap)?, None))
            }
            SystemName::LinearTorus => {
                let matrix = self.matrix.clone().unwrap_or_else(|| vec![vec![2, 1], vec![1, 1]]);
                if matrix.len() != 2 {
                    return Err(Error::Config("linear_torus needs a 2×2 matrix".into()));
                }
                Ok((make_linear_torus(&matrix).map_err(wrap)?, None))
            }
        }
    }
}

fn d_iterations() -> usize {
    2000
}
fn d_particles() -> usize {
    500
}
fn d_seed_plaques() -> usize {
    2
}
fn d_depth() -> usize {
    6
}
fn d_horizon() -> usize {
    200
}
fn d_radius_uu() -> f64 {
    0.05
}
fn d_radius_cs() -> f64 {
    0.3
}
fn d_box_depth() -> u32 {
    6
}
fn d_max_period() -> usize {
    1
}
fn d_probes() -> usize {
    32
}
fn d_lyapunov_steps() -> usize {
    100_000
}
fn d_m_grid() -> Vec<usize> {
    vec![1, 2, 4, 8]
}
fn d_certificate_particles() -> usize {
    2000
}
fn d_hyperbolic_blocks() -> usize {
    2000
}
fn d_n_max() -> usize {
    12
}
fn d_seed_len() -> f64 {
    0.01
}
fn d_past_len() -> usize {
    6
}
fn d_floor() -> usize {
    5
}
fn d_symbolic_depth() -> usize {
    8
}
fn d_periodic_max_period() -> usize {
    3
}
fn d_periodic_measures() -> usize {
    10
}
fn d_franks_tol() -> f64 {
    1e-8
}
fn d_verify_samples() -> usize {
    4096
}
fn d_fill_occupancy() -> u32 {
    5
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    /// Cesàro length n (runs are 2n long for the convergence curve).
    #[serde(default = "d_iterations")]
    pub iterations: usize,
    #[serde(default = "d_particles")]
    pub particles: usize,
    #[serde(default = "d_seed_plaques")]
    pub seed_plaques: usize,
    /// Cylinder depth of the weak-* distance.
    #[serde(default = "d_depth")]
    pub depth: usize,
    #[serde(default = "d_horizon")]
    pub horizon: usize,
    #[serde(default = "d_radius_uu")]
    pub radius_uu: f64,
    #[serde(default = "d_radius_cs")]
    pub radius_cs: f64,
    #[serde(default = "d_box_depth")]
    pub box_depth: u32,
    /// Period bound of the skeleton search.
    #[serde(default = "d_max_period")]
    pub max_period: usize,
    #[serde(default = "d_probes")]
    pub probes: usize,
    #[serde(default = "d_lyapunov_steps")]
    pub lyapunov_steps: usize,
    #[serde(default = "d_m_grid")]
    pub m_grid: Vec<usize>,
    #[serde(default = "d_certificate_particles")]
    pub certificate_particles: usize,
    #[serde(default = "d_hyperbolic_blocks")]
    pub hyperbolic_blocks: usize,
    #[serde(default = "d_n_max")]
    pub entropy_n_max: usize,
    #[serde(default = "d_seed_len")]
    pub entropy_seed_len: f64,
    #[serde(default = "d_past_len")]
    pub past_len: usize,
    #[serde(default = "d_floor")]
    pub floor: usize,
    #[serde(default = "d_symbolic_depth")]
    pub symbolic_depth: usize,
    /// Period bound for the periodic measures of the entropy battery.
    #[serde(default = "d_periodic_max_period")]
    pub periodic_max_period: usize,
    #[serde(default = "d_periodic_measures")]
    pub periodic_measures: usize,
    #[serde(default = "d_franks_tol")]
    pub franks_tol: f64,
    #[serde(default = "d_verify_samples")]
    pub verify_samples: usize,
    #[serde(default = "d_fill_occupancy")]
    pub fill_occupancy: u32,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub tasks: Vec<Task>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<String>,
    pub system: SystemConfig,
    pub run: RunConfig,
}

impl ExperimentConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let c: ExperimentConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        c.validate()?;
        Ok(c)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        Self::parse(&text)
    }

    fn validate(&self) -> Result<()> {
        let r = &self.run;
        if self.tasks.is_empty() {
            return Err(Error::Config("no tasks requested".into()));
        }
        if r.particles == 0 || r.iterations == 0 || r.seed_plaques == 0 {
            return Err(Error::Config("iterations, particles and seed_plaques must be positive".into()));
        }
        if r.m_grid.is_empty() || r.m_grid.contains(&0) {
            return Err(Error::Config("m_grid must hold positive block lengths".into()));
        }
        Ok(())
    }

    /// Requested tasks with their prerequisites, in execution order.
    pub fn resolved_tasks(&self) -> BTreeSet<Task> {
        let mut t: BTreeSet<Task> = self.tasks.iter().copied().collect();
        if t.iter().any(|x| matches!(x, Task::Lyapunov | Task::Entropy | Task::Skeleton)) {
            t.insert(Task::Gibbs);
        }
        t
    }

    fn label_options(&self) -> LabelOptions {
        LabelOptions {
            horizon: self.run.horizon,
            radius_uu: self.run.radius_uu,
            radius_cs: self.run.radius_cs,
            box_depth: self.run.box_depth,
            occupancy: 1,
        }
    }
}

/// Independent stream per purpose, derived from the run seed.
fn sub_seed(seed: u64, purpose: u64) -> u64 {
    seed ^ purpose.wrapping_mul(0x9e37_79b9_7f4a_7c15)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum RunStatus {
    Pass,
    Fail,
}

#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub summary: Value,
    pub status: RunStatus,
    pub failures: Vec<String>,
    pub dir: PathBuf,
}

struct Ctx<'a> {
    cfg: &'a ExperimentConfig,
    factor: &'a Factor,
    dir: PathBuf,
    failures: Vec<String>,
    tasks: serde_json::Map<String, Value>,
}

impl Ctx<'_> {
    fn write(&self, name: &str, body: &str) -> Result<()> {
        fs::write(self.dir.join(name), body)?;
        Ok(())
    }

    fn fail(&mut self, what: impl Into<String>) {
        self.failures.push(what.into());
    }
}

fn verify_task(ctx: &mut Ctx<'_>) -> Result<()> {
    let factor = ctx.factor;
    let model = &factor.model;
    let r = &ctx.cfg.run;
    let mut rng = ChaCha8Rng::seed_from_u64(sub_seed(r.seed, 1));
    let cone = verify_partial_hyperbolicity(model, r.verify_samples, &mut rng);
    let mut out = json!({ "cone": cone });
    if !cone.pass {
        ctx.fail("verify: cone check");
    }
    if let Some(ms) = &ctx.factor.markov {
        let rep = ms.verify(r.verify_samples, &mut rng);
        let pass = rep.passes(1e-9);
        out["markov"] = json!({ "report": rep, "pass": pass, "pf_entropy": ms.pf_entropy(), "base_entropy": ctx.factor.base_entropy });
        if !pass {
            ctx.fail("verify: Markov partition");
        }
    }
    let residual = match (&model.kind, ctx.factor.pi.kind) {
        (SystemKind::Skew(s), _) => s.base.conjugacy_residual(CONJ_DEPTH, 1000),
        (SystemKind::Torus(_), SemiConjugacyKind::Identity) => 0.0,
        (SystemKind::Torus(_), _) => {
            let pts = attractor_sample(model, 64, 0, &mut rng);
            ctx.factor.pi.residual(model, &pts)?
        }
    };
    out["factor"] = json!({ "kind": ctx.factor.pi.kind, "residual": residual, "tolerance": ctx.factor.pi.tolerance });
    if model.skew().is_some() {
        out["partial_volume_expansion"] = json!(partial_volume_expansion(model, r.verify_samples, &mut rng));
    }
    ctx.tasks.insert("verify".into(), out);
    Ok(())
}

struct GibbsData {
    mixture: ParticleMeasure,
    report: GibbsReport,
    skeleton_orbits: Vec<Vec<Vec<f64>>>,
    skeleton_json: Value,
    skeleton_status: SkeletonStatus,
}

fn gibbs_task(ctx: &mut Ctx<'_>) -> Result<GibbsData> {
    let cfg = ctx.cfg;
    let r = &cfg.run;
    let factor = ctx.factor;
    let model = &factor.model;
    let opts = cfg.label_options();
    let search = find_periodic(model, r.max_period)?;
    let candidates = search.candidates(model);
    let sk = verify_skeleton(factor, &candidates, r.probes, &opts, sub_seed(r.seed, 2));
    let skeleton_orbits = sk.orbits();
    let skeleton_json = json!({ "search": { "max_period": search.max_period, "points": search.points, "seeds": search.seeds, "diverged": search.diverged }, "verification": sk });

    let mut rng = ChaCha8Rng::seed_from_u64(sub_seed(r.seed, 3));
    let anchors = attractor_sample(model, r.seed_plaques, 60, &mut rng);
    let mut states = Vec::new();
    let mut curves = Vec::new();
    for (i, x) in anchors.iter().enumerate() {
        let plaque = plaque_chart(factor, x)?;
        let (mu, curve, _) = cesaro_state(factor, &plaque, r.iterations, r.particles, sub_seed(r.seed, 100 + i as u64), r.depth)?;
        states.push(mu);
        curves.push(curve);
    }
    let seed_distance = if states.len() >= 2 { Some(weak_distance(&states[0], &states[1], r.depth)?) } else { None };
    let share = 1.0 / states.len() as f64;
    let parts: Vec<(&ParticleMeasure, f64)> = states.iter().map(|m| (m, share)).collect();
    let mixture = ParticleMeasure::mixture(&parts, Provenance::Custom(format!("mixture of {} Cesàro states", states.len())));
    let mut report = ergodic_components(factor, &mixture, &skeleton_orbits, &opts, seed_distance, r.depth);
    report.convergence_curve = curves[0].clone();

    let mut out = json!({
        "status": report.status,
        "components": report.components.len(),
        "masses": report.masses,
        "skeleton_index": report.skeleton_index,
        "unresolved_fraction": report.unresolved_fraction,
        "component_distances": report.distances,
        "box_depth": report.box_depth,
        "box_counts": report.box_counts,
        "min_margin": report.min_margin,
        "seed_distance": seed_distance,
        "convergence_curves": curves,
        "particles": mixture.len(),
    });
    if factor.markov.is_some() {
        let (ks, groups) = conditional_ks(factor, &mixture, 3, 200);
        out["conditional_ks"] = json!({ "max": ks, "groups": groups });
        out["base_projection_l1"] = json!(base_projection_l1(factor, &mixture, r.depth)?);
    }
    let mut csv = String::from("component,mass,boxes,skeleton_index\n");
    for (i, m) in report.masses.iter().enumerate() {
        csv.push_str(&format!("{i},{m:.17e},{},{}\n", report.box_counts[i], report.skeleton_index[i]));
    }
    ctx.write("gibbs_components.csv", &csv)?;
    let mut csv = String::from("state,m,distance\n");
    for (i, c) in curves.iter().enumerate() {
        for (m, d) in c {
            csv.push_str(&format!("{i},{m},{d:.17e}\n"));
        }
    }
    ctx.write("convergence.csv", &csv)?;
    if report.status == GibbsStatus::Unresolved {
        ctx.fail("gibbs: unresolved");
    }
    if sk.status == SkeletonStatus::Skeleton && report.components.len() != sk.skeleton.len() {
        ctx.fail(format!("gibbs: {} components but {} skeleton points", report.components.len(), sk.skeleton.len()));
    }
    ctx.tasks.insert("gibbs".into(), out);
    Ok(GibbsData { mixture, report, skeleton_orbits, skeleton_json, skeleton_status: sk.status })
}

fn lyapunov_task(ctx: &mut Ctx<'_>, g: &GibbsData) -> Result<Option<(usize, f64)>> {
    let r = &ctx.cfg.run;
    let factor = ctx.factor;
    let model = &factor.model;
    let mut rng = ChaCha8Rng::seed_from_u64(sub_seed(r.seed, 4));
    let x0 = attractor_sample(model, 1, 60, &mut rng).remove(0);
    let mut rep = lyapunov_spectrum(model, &x0, r.lyapunov_steps, 100)?;
    let states: Vec<&ParticleMeasure> = g.report.components.iter().collect();
    let outcome = c_mostly_certificate(model, &states, &r.m_grid, r.certificate_particles)?;
    let mut out = json!({});
    let cert = outcome.certificate().map(|c| (c.m, c.a));
    if let Some((m, a)) = cert {
        let ht = hyperbolic_times(model, &model.iterate(&x0, 100), a, m, r.hyperbolic_blocks, 0.05);
        rep.certificate = outcome.certificate().cloned();
        rep.hyperbolic_time_fraction = Some(ht.density);
        rep.stable_size_bound = Some(ht.stable_size_bound);
        out["hyperbolic_times"] = json!(ht);
    }
    if let CertificateOutcome::Fail { .. } = outcome {
        ctx.fail("lyapunov: no c-mostly contracting certificate");
    }
    out["report"] = json!(rep);
    out["certificate"] = json!(outcome);
    if let Some(t) = model.torus() {
        if t.dim() == 3 {
            let k2 = t.auto.stable_rates[0];
            out["weak_stable_bound"] = json!({ "log_kappa2": k2.ln(), "cs_top": rep.cs_top.value, "holds": rep.cs_top.value <= k2.ln() + 0.05 });
        }
    }
    let mut csv = String::from("index,exponent,halfwidth\n");
    for (i, e) in rep.spectrum.iter().enumerate() {
        csv.push_str(&format!("{i},{:.17e},{:.17e}\n", e.value, e.halfwidth));
    }
    csv.push_str(&format!("cs_top,{:.17e},{:.17e}\n", rep.cs_top.value, rep.cs_top.halfwidth));
    ctx.write("lyapunov.csv", &csv)?;
    ctx.tasks.insert("lyapunov".into(), out);
    Ok(cert)
}

fn entropy_task(ctx: &mut Ctx<'_>, g: &GibbsData, certified: bool) -> Result<()> {
    let r = &ctx.cfg.run;
    let factor = ctx.factor;
    let model = &factor.model;
    let mut rng = ChaCha8Rng::seed_from_u64(sub_seed(r.seed, 5));
    let x0 = attractor_sample(model, 1, 60, &mut rng).remove(0);
    let h_vol = topological_u_entropy(factor, &x0, r.entropy_seed_len, r.entropy_n_max, DEFAULT_BUDGET)?;
    let search = find_periodic(model, r.periodic_max_period)?;
    let periodic: Vec<ParticleMeasure> = search
        .points
        .iter()
        .take(r.periodic_measures)
        .map(|p| periodic_measure(factor, &p.orbit, 300usize.div_ceil(p.period)))
        .collect();
    let mut battery = vec![BatteryItem { name: "gibbs".into(), measure: &g.mixture, certified }];
    if g.report.components.len() > 1 {
        for (i, c) in g.report.components.iter().enumerate() {
            battery.push(BatteryItem { name: format!("component_{i}"), measure: c, certified });
        }
    }
    for (p, mu) in search.points.iter().zip(&periodic) {
        battery.push(BatteryItem { name: format!("periodic_{}_{:.6}", p.period, p.point[0]), measure: mu, certified: false });
    }
    let opts = EntropyOptions { past_len: r.past_len, floor: r.floor, symbolic_depth: r.symbolic_depth };
    let rep = entropy_identities(factor, &battery, Some(h_vol), &opts);
    if rep.violations > 0 {
        ctx.fail(format!("entropy: {} inequality violations", rep.violations));
    }
    if rep.pf_matches == Some(false) {
        ctx.fail("entropy: PF entropy differs from h(A)");
    }
    ctx.write("entropy_growth.csv", &rep.h_vol.as_ref().map(|v| v.to_csv()).unwrap_or_default())?;
    ctx.write("entropy_table.csv", &rep.to_csv())?;
    ctx.tasks.insert("entropy".into(), json!(rep));
    Ok(())
}

fn skeleton_task(ctx: &mut Ctx<'_>, g: &GibbsData) -> Result<()> {
    let r = &ctx.cfg.run;
    let opts = StructureOptions {
        occupancy: r.fill_occupancy,
        leaf_particles: r.particles,
        leaf_steps: 2 * r.iterations * r.seed_plaques,
        seed: sub_seed(r.seed, 6),
    };
    let structure = support_structure(ctx.factor, &g.report, &g.skeleton_orbits, &opts);
    if g.skeleton_status == SkeletonStatus::Fail {
        ctx.fail("skeleton: no candidates");
    }
    let mut out = g.skeleton_json.clone();
    out["structure"] = json!(structure);
    ctx.tasks.insert("skeleton".into(), out);
    Ok(())
}

/// Runs the configured tasks and writes `summary.json` plus per-task CSVs
/// into `out` (or the configured output directory).
pub fn run(cfg: &ExperimentConfig, out: Option<&Path>) -> Result<RunOutcome> {
    let (model, family) = cfg.system.build()?;
    let factor = Factor::new(&model, cfg.run.franks_tol)?;
    let dir = out.map(Path::to_path_buf).or_else(|| cfg.output.as_ref().map(PathBuf::from)).unwrap_or_else(|| PathBuf::from("out"));
    fs::create_dir_all(&dir)?;
    let mut ctx = Ctx { cfg, factor: &factor, dir: dir.clone(), failures: Vec::new(), tasks: serde_json::Map::new() };
    let tasks = cfg.resolved_tasks();
    if tasks.contains(&Task::Verify) {
        verify_task(&mut ctx)?;
    }
    let gibbs = if tasks.contains(&Task::Gibbs) { Some(gibbs_task(&mut ctx)?) } else { None };
    let mut certified = false;
    if let Some(g) = &gibbs {
        if tasks.contains(&Task::Lyapunov) {
            certified = lyapunov_task(&mut ctx, g)?.is_some();
        }
        if tasks.contains(&Task::Entropy) {
            entropy_task(&mut ctx, g, certified)?;
        }
        if tasks.contains(&Task::Skeleton) {
            skeleton_task(&mut ctx, g)?;
        }
    }
    let status = if ctx.failures.is_empty() { RunStatus::Pass } else { RunStatus::Fail };
    let timestamp = std::time::SystemTime::now().duration_since(std::time::UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0);
    let summary = json!({
        "schema_version": SCHEMA_VERSION,
        "timestamp": timestamp,
        "config": cfg,
        "system": { "kind": cfg.system.kind.as_str(), "name": model.name, "state_dim": model.state_dim(), "family": family },
        "tasks": Value::Object(ctx.tasks.clone()),
        "status": status,
        "failures": ctx.failures,
    });
    fs::write(dir.join("summary.json"), serde_json::to_string_pretty(&summary)? + "\n")?;
    Ok(RunOutcome { summary, status, failures: ctx.failures, dir })
}

/// Summary with the timestamp removed, as canonical bytes.
pub fn canonical_summary(summary: &Value) -> String {
    let mut s = summary.clone();
    if let Some(o) = s.as_object_mut() {
        o.remove("timestamp");
    }
    serde_json::to_string(&s).unwrap_or_default()
}

pub fn load_summary(dir: &Path) -> Result<Value> {
    let text = fs::read_to_string(dir.join("summary.json"))?;
    Ok(serde_json::from_str(&text)?)
}

#[derive(Debug, Clone, Serialize, PartialEq)]
pub struct CompareRow {
    pub metric: String,
    pub a: Value,
    pub b: Value,
}

#[derive(Debug, Clone, Serialize)]
pub struct CompareReport {
    pub system: String,
    /// Metrics whose values differ; empty for identical runs.
    pub diff: Vec<CompareRow>,
    pub certificate_lost: bool,
    /// |a_B − a_A| when both runs are certified.
    pub certificate_delta: Option<f64>,
}

impl CompareReport {
    pub fn to_csv(&self) -> String {
        let mut s = String::from("metric,a,b\n");
        for r in &self.diff {
            s.push_str(&format!("{},{},{}\n", r.metric, r.a, r.b));
        }
        s
    }
}

/// Headline numbers of a summary, in a fixed order.
pub fn headline_metrics(s: &Value) -> Vec<(String, Value)> {
    let t = &s["tasks"];
    let cert = &t["lyapunov"]["certificate"]["certified"];
    let gibbs_entry = t["entropy"]["entries"].as_array().and_then(|e| e.first()).cloned().unwrap_or(Value::Null);
    vec![
        ("status".into(), s["status"].clone()),
        ("certificate.m".into(), cert["m"].clone()),
        ("certificate.a".into(), cert["a"].clone()),
        ("lyapunov.cs_top".into(), t["lyapunov"]["report"]["cs_top"]["value"].clone()),
        ("entropy.h_vol".into(), t["entropy"]["h_vol"]["h_vol"].clone()),
        ("entropy.h_cond".into(), gibbs_entry["h_cond"]["h_cond"].clone()),
        ("entropy.h_base".into(), t["entropy"]["h_base"].clone()),
        ("gibbs.components".into(), t["gibbs"]["components"].clone()),
        ("gibbs.status".into(), t["gibbs"]["status"].clone()),
        ("skeleton.size".into(), t["skeleton"]["verification"]["skeleton"].as_array().map_or(Value::Null, |a| json!(a.len()))),
    ]
}

/// Tabulates certificate, entropies and component counts of two runs on
/// the same system family.
pub fn compare(a: &Path, b: &Path) -> Result<CompareReport> {
    let sa = load_summary(a)?;
    let sb = load_summary(b)?;
    let ka = sa["system"]["kind"].as_str().unwrap_or("?").to_string();
    let kb = sb["system"]["kind"].as_str().unwrap_or("?").to_string();
    if ka != kb {
        return Err(Error::IncompatibleSystems(ka, kb));
    }
    let ma = headline_metrics(&sa);
    let mb = headline_metrics(&sb);
    let diff = ma
        .into_iter()
        .zip(mb)
        .filter(|(x, y)| x.1 != y.1)
        .map(|(x, y)| CompareRow { metric: x.0, a: x.1, b: y.1 })
        .collect();
    let ca = sa["tasks"]["lyapunov"]["certificate"]["certified"]["a"].as_f64();
    let cb = sb["tasks"]["lyapunov"]["certificate"]["certified"]["a"].as_f64();
    Ok(CompareReport {
        system: ka,
        diff,
        certificate_lost: ca.is_some() && cb.is_none(),
        certificate_delta: ca.zip(cb).map(|(x, y)| (y - x).abs()),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
tasks = ["verify"]
[system]
kind = "solenoid"
[run]
seed = 1
"#;

    #[test]
    fn parses_minimal_config() {
        let c = ExperimentConfig::parse(MINIMAL).unwrap();
        assert_eq!(c.run.iterations, 2000);
        assert_eq!(c.system.kind, SystemName::Solenoid);
    }

    #[test]
    fn unknown_key_rejected() {
        let t = MINIMAL.replace("seed = 1", "seed = 1\nbogus = 3");
        assert!(matches!(ExperimentConfig::parse(&t), Err(Error::Config(_))));
    }

    #[test]
    fn seed_is_mandatory() {
        let t = MINIMAL.replace("seed = 1", "");
        assert!(matches!(ExperimentConfig::parse(&t), Err(Error::Config(_))));
    }

    #[test]
    fn foreign_system_key_rejected() {
        let t = MINIMAL.replace("kind = \"solenoid\"", "kind = \"solenoid\"\nmatrix = [[2, 1], [1, 1]]");
        let c = ExperimentConfig::parse(&t).unwrap();
        assert!(matches!(c.system.build(), Err(Error::Config(_))));
    }

    #[test]
    fn prerequisites_added() {
        let t = MINIMAL.replace("[\"verify\"]", "[\"entropy\"]");
        let c = ExperimentConfig::parse(&t).unwrap();
        assert_eq!(c.resolved_tasks().into_iter().collect::<Vec<_>>(), vec![Task::Gibbs, Task::Entropy]);
    }
}
