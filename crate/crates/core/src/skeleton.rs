//! Periodic orbits, saddle classification, skeleton verification and the
//! support structure of Gibbs components.

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::factor::{attractor_sample, Factor};
use crate::leaves::{grow_unstable_leaf, plaque_chart};
use crate::linalg::{wrap01, wrap_centered};
use crate::lyapunov::{cs_log_norm, hyperbolic_times};
use crate::measures::{near, BoxCover, CesaroRun, GibbsReport, LabelOptions};
use crate::systems::{CircleMap, SkewProduct, SystemKind, SystemModel, CONJ_DEPTH};

pub const MAX_PERIOD: usize = 12;
const MERGE_TOL: f64 = 1e-8;
const VERIFY_TOL: f64 = 1e-10;
const HYPERBOLIC_GAP: f64 = 1e-6;
/// Radii of the fiber seed grid; each ring has 8 angles.
const SEED_RADII: [f64; 3] = [0.3, 0.6, 0.9];
const LATTICE_BUDGET: u64 = 20_000_000;

#[derive(Debug, Clone, Serialize)]
pub struct SkeletonPoint {
    pub point: Vec<f64>,
    pub period: usize,
    #[serde(skip)]
    pub orbit: Vec<Vec<f64>>,
    /// Eigenvalues of Df^period as (re, im), by decreasing modulus.
    pub multipliers: Vec<[f64; 2]>,
    pub contracting_count: usize,
    pub hyperbolic: bool,
    pub stable_size_estimate: f64,
}

impl SkeletonPoint {
    pub fn is_candidate(&self, model: &SystemModel) -> bool {
        self.hyperbolic && self.contracting_count == model.cs_dim()
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct PeriodicSearch {
    pub max_period: usize,
    pub points: Vec<SkeletonPoint>,
    pub seeds: usize,
    /// Seeds whose Newton iteration failed to converge.
    pub diverged: usize,
}

impl PeriodicSearch {
    pub fn candidates(&self, model: &SystemModel) -> Vec<SkeletonPoint> {
        self.points.iter().filter(|p| p.is_candidate(model)).cloned().collect()
    }
}

fn newton_fixed<F>(g: F, x0: &[f64], wrap: &[bool]) -> Option<Vec<f64>>
where
    F: Fn(&[f64]) -> (Vec<f64>, DMatrix<f64>),
{
    let d = x0.len();
    let mut x = x0.to_vec();
    for _ in 0..60 {
        let (gx, j) = g(&x);
        let r: Vec<f64> = (0..d).map(|i| if wrap[i] { wrap_centered(gx[i] - x[i]) } else { gx[i] - x[i] }).collect();
        let rn = r.iter().map(|v| v * v).sum::<f64>().sqrt();
        if rn < 1e-14 {
            return Some(x);
        }
        let m = j - DMatrix::identity(d, d);
        let step = m.lu().solve(&DVector::from_vec(r))?;
        for i in 0..d {
            x[i] -= step[i];
        }
        if x.iter().any(|v| !v.is_finite() || v.abs() > 10.0) {
            return None;
        }
    }
    let (gx, _) = g(&x);
    let r = (0..d).map(|i| if wrap[i] { wrap_centered(gx[i] - x[i]) } else { gx[i] - x[i] }).map(|v| v * v).sum::<f64>().sqrt();
    (r < 1e-12).then_some(x)
}

fn orbit_of(model: &SystemModel, x: &[f64], p: usize) -> Vec<Vec<f64>> {
    let mut o = Vec::with_capacity(p);
    let mut y = x.to_vec();
    for _ in 0..p {
        o.push(y.clone());
        y = model.map(&y);
    }
    o
}

fn minimal_period(model: &SystemModel, x: &[f64], p: usize) -> usize {
    let mut y = x.to_vec();
    for m in 1..=p {
        y = model.map(&y);
        if p.is_multiple_of(m) && model.distance(&y, x) < VERIFY_TOL {
            return m;
        }
    }
    p
}

fn classify(model: &SystemModel, x: &[f64], period: usize) -> SkeletonPoint {
    let orbit = orbit_of(model, x, period);
    let d = model.state_dim();
    let mut j = DMatrix::<f64>::identity(d, d);
    for y in &orbit {
        j = model.derivative(y) * j;
    }
    let mut multipliers: Vec<[f64; 2]> = j.complex_eigenvalues().iter().map(|c| [c.re, c.im]).collect();
    multipliers.sort_by(|a, b| b[0].hypot(b[1]).total_cmp(&a[0].hypot(a[1])).then(b[1].total_cmp(&a[1])));
    let contracting_count = multipliers.iter().filter(|m| m[0].hypot(m[1]) < 1.0).count();
    let hyperbolic = multipliers.iter().all(|m| (m[0].hypot(m[1]) - 1.0).abs() > HYPERBOLIC_GAP);
    let rate = cs_log_norm(model, x, period) / period as f64;
    let stable_size_estimate = if rate < 0.0 {
        hyperbolic_times(model, x, rate / 2.0, period, 20, 0.05).stable_size_bound
    } else {
        0.0
    };
    SkeletonPoint { point: x.to_vec(), period, orbit, multipliers, contracting_count, hyperbolic, stable_size_estimate }
}

/// Base periodic orbits of ×k with minimal period `q`, as the smallest
/// numerator of each orbit over k^q − 1.
fn base_orbits(k: u64, q: usize) -> Vec<u64> {
    let n = k.pow(q as u32) - 1;
    let mut out = Vec::new();
    for j in 0..n {
        let mut m = j;
        let mut min = j;
        let mut period = 0;
        loop {
            m = m * k % n;
            period += 1;
            min = min.min(m);
            if m == j {
                break;
            }
        }
        if period == q && min == j {
            out.push(j);
        }
    }
    out
}

/// Point of minimal base period `q` near `theta`, refined by Newton.
fn refine_base(base: &CircleMap, theta: f64, q: usize) -> f64 {
    let mut t = theta;
    for _ in 0..20 {
        let mut y = t;
        let mut d = 1.0;
        for _ in 0..q {
            d *= base.derivative(y);
            y = base.apply(y);
        }
        let r = wrap_centered(y - t);
        if r.abs() < 1e-16 {
            break;
        }
        t = wrap01(t - r / (d - 1.0));
    }
    t
}

struct Collector<'a> {
    model: &'a SystemModel,
    found: Vec<SkeletonPoint>,
}

impl Collector<'_> {
    fn add(&mut self, x: Vec<f64>, p: usize) -> bool {
        let m = self.model;
        if m.distance(&m.iterate(&x, p), &x) >= VERIFY_TOL {
            return false;
        }
        let q = minimal_period(m, &x, p);
        if self.found.iter().any(|s| s.period == q && s.orbit.iter().any(|o| m.distance(o, &x) < MERGE_TOL)) {
            return true;
        }
        self.found.push(classify(m, &x, q));
        true
    }
}

fn skew_periodic(model: &SystemModel, s: &SkewProduct, max_period: usize) -> (Vec<SkeletonPoint>, usize, usize) {
    let k = s.base.degree() as u64;
    let mut tasks = Vec::new();
    for q in 1..=max_period {
        for j in base_orbits(k, q) {
            let u = j as f64 / (k.pow(q as u32) - 1) as f64;
            let theta = refine_base(&s.base, s.base.conjugacy_inverse(u, CONJ_DEPTH), q);
            let mut p = q;
            while p <= max_period {
                tasks.push((theta, p));
                p += q;
            }
        }
    }
    let mut seeds = vec![[0.0, 0.0]];
    for r in SEED_RADII {
        for a in 0..8 {
            let phi = std::f64::consts::TAU * a as f64 / 8.0;
            seeds.push([r * phi.cos(), r * phi.sin()]);
        }
    }
    let roots = crate::par::map(&tasks, |&(theta, p)| {
        let mut thetas = Vec::with_capacity(p);
        let mut t = theta;
        for _ in 0..p {
            thetas.push(t);
            t = s.base.apply(t);
        }
        let g = |x: &[f64]| {
            let mut y = [x[0], x[1]];
            let mut j = [[1.0, 0.0], [0.0, 1.0]];
            for &t in &thetas {
                let d = s.fiber.dx(t, y);
                j = [
                    [d[0][0] * j[0][0] + d[0][1] * j[1][0], d[0][0] * j[0][1] + d[0][1] * j[1][1]],
                    [d[1][0] * j[0][0] + d[1][1] * j[1][0], d[1][0] * j[0][1] + d[1][1] * j[1][1]],
                ];
                y = s.fiber.apply(t, y);
            }
            (y.to_vec(), DMatrix::from_row_slice(2, 2, &[j[0][0], j[0][1], j[1][0], j[1][1]]))
        };
        seeds
            .iter()
            .map(|sd| newton_fixed(g, sd, &[false, false]).filter(|x| x[0].hypot(x[1]) <= 1.0).map(|x| vec![theta, x[0], x[1]]))
            .collect::<Vec<_>>()
    });
    let mut c = Collector { model, found: Vec::new() };
    let mut diverged = 0;
    let mut total = 0;
    for (r, &(_, p)) in roots.into_iter().zip(&tasks) {
        for x in r {
            total += 1;
            match x {
                Some(x) => {
                    if !c.add(x, p) {
                        diverged += 1;
                    }
                }
                None => diverged += 1,
            }
        }
    }
    (c.found, total, diverged)
}

fn int_power_minus_identity(a: &[Vec<i64>], p: usize) -> Result<Vec<Vec<i64>>> {
    let d = a.len();
    let mut m: Vec<Vec<i64>> = (0..d).map(|i| (0..d).map(|j| (i == j) as i64).collect()).collect();
    for _ in 0..p {
        let mut n = vec![vec![0i64; d]; d];
        for i in 0..d {
            for j in 0..d {
                let mut s: i64 = 0;
                for l in 0..d {
                    s = a[i][l].checked_mul(m[l][j]).and_then(|v| s.checked_add(v)).ok_or_else(|| Error::InvalidInput("matrix power overflows".into()))?;
                }
                n[i][j] = s;
            }
        }
        m = n;
    }
    for (i, row) in m.iter_mut().enumerate() {
        row[i] -= 1;
    }
    Ok(m)
}

/// Fixed points of A^p on T^d: x = (A^p − I)⁻¹ n over the lattice points n of
/// the image of the unit cube.
fn linear_periodic(matrix: &[Vec<i64>], p: usize) -> Result<Vec<Vec<f64>>> {
    let d = matrix.len();
    let m = int_power_minus_identity(matrix, p)?;
    let mf = DMatrix::from_fn(d, d, |i, j| m[i][j] as f64);
    let inv = mf.try_inverse().ok_or_else(|| Error::InvalidInput("A^p − I is singular".into()))?;
    let ranges: Vec<(i64, i64)> = m
        .iter()
        .map(|row| (row.iter().filter(|v| **v < 0).sum::<i64>(), row.iter().filter(|v| **v > 0).sum::<i64>()))
        .collect();
    let count: u64 = ranges.iter().map(|(lo, hi)| (hi - lo + 1) as u64).product();
    if count > LATTICE_BUDGET {
        return Err(Error::InvalidInput(format!("period {p} needs {count} lattice points")));
    }
    let mut out: Vec<Vec<f64>> = Vec::new();
    let mut n: Vec<i64> = ranges.iter().map(|r| r.0).collect();
    loop {
        let x = &inv * DVector::from_iterator(d, n.iter().map(|&v| v as f64));
        if x.iter().all(|&v| v > -1e-9 && v < 1.0 - 1e-9) {
            let x: Vec<f64> = x.iter().map(|&v| wrap01(v.max(0.0))).collect();
            if !out.iter().any(|y| crate::linalg::torus_dist(y, &x) < MERGE_TOL) {
                out.push(x);
            }
        }
        let mut i = 0;
        loop {
            if i == d {
                return Ok(out);
            }
            n[i] += 1;
            if n[i] > ranges[i].1 {
                n[i] = ranges[i].0;
                i += 1;
            } else {
                break;
            }
        }
    }
}

fn torus_periodic(model: &SystemModel, matrix: &[Vec<i64>], max_period: usize) -> Result<(Vec<SkeletonPoint>, usize, usize)> {
    let d = matrix.len();
    let mut tasks = Vec::new();
    for p in 1..=max_period {
        for x in linear_periodic(matrix, p)? {
            tasks.push((x, p));
        }
    }
    let wrap = vec![true; d];
    let roots = crate::par::map(&tasks, |(x, p)| {
        let g = |y: &[f64]| {
            let mut z = y.to_vec();
            let mut j = DMatrix::<f64>::identity(d, d);
            for _ in 0..*p {
                j = model.derivative(&z) * j;
                z = model.map(&z);
            }
            (z, j)
        };
        newton_fixed(g, x, &wrap).map(|y| y.into_iter().map(wrap01).collect::<Vec<f64>>())
    });
    let mut c = Collector { model, found: Vec::new() };
    let mut diverged = 0;
    for (r, (_, p)) in roots.into_iter().zip(&tasks) {
        if !r.is_some_and(|x| c.add(x, *p)) {
            diverged += 1;
        }
    }
    Ok((c.found, tasks.len(), diverged))
}

/// Periodic orbits of period ≤ `max_period`, one representative each, sorted
/// by period and then by coordinates.
pub fn find_periodic(model: &SystemModel, max_period: usize) -> Result<PeriodicSearch> {
    if max_period == 0 || max_period > MAX_PERIOD {
        return Err(Error::InvalidInput(format!("max_period must lie in 1..={MAX_PERIOD}, got {max_period}")));
    }
    let (mut points, seeds, diverged) = match &model.kind {
        SystemKind::Skew(s) => skew_periodic(model, s, max_period),
        SystemKind::Torus(t) => torus_periodic(model, &t.auto.matrix, max_period)?,
    };
    points.sort_by(|a, b| a.period.cmp(&b.period).then_with(|| {
        a.point.iter().zip(&b.point).map(|(x, y)| x.total_cmp(y)).find(|o| o.is_ne()).unwrap_or(std::cmp::Ordering::Equal)
    }));
    Ok(PeriodicSearch { max_period, points, seeds, diverged })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum SkeletonStatus {
    Skeleton,
    Inconclusive,
    Fail,
}

#[derive(Debug, Clone, Serialize)]
pub struct SkeletonReport {
    pub status: SkeletonStatus,
    pub candidates: Vec<SkeletonPoint>,
    /// Indices into `candidates` kept as the skeleton: one per terminal class
    /// of the unstable-to-stable reach graph.
    pub skeleton: Vec<usize>,
    pub classes: Vec<Vec<usize>>,
    /// reach[i] lists the candidates whose neighbourhood W^u(p_i) enters.
    pub reach: Vec<Vec<usize>>,
    pub probes: usize,
    pub unresolved_probes: usize,
    /// Probe leaves entering each candidate's neighbourhood.
    pub probe_hits: Vec<usize>,
    pub cross_hits: usize,
    pub horizon: usize,
}

impl SkeletonReport {
    pub fn skeleton_points(&self) -> Vec<&SkeletonPoint> {
        self.skeleton.iter().map(|&i| &self.candidates[i]).collect()
    }

    /// Per skeleton point, the orbit points of every candidate in its class.
    pub fn orbits(&self) -> Vec<Vec<Vec<f64>>> {
        self.skeleton
            .iter()
            .map(|&i| {
                let class = self.classes.iter().find(|c| c.contains(&i)).cloned().unwrap_or_else(|| vec![i]);
                class.iter().flat_map(|&j| self.candidates[j].orbit.clone()).collect()
            })
            .collect()
    }
}

/// Candidates whose neighbourhoods the forward orbits of `samples` enter
/// within the horizon.
fn hits(model: &SystemModel, samples: &[Vec<f64>], cands: &[SkeletonPoint], opts: &LabelOptions) -> BTreeSet<usize> {
    let mut out = BTreeSet::new();
    for x in samples {
        let mut y = x.clone();
        for _ in 0..=opts.horizon {
            for (k, c) in cands.iter().enumerate() {
                if !out.contains(&k) && c.orbit.iter().any(|q| near(model, &y, q, opts)) {
                    out.insert(k);
                }
            }
            if out.len() == cands.len() {
                return out;
            }
            y = model.map(&y);
        }
    }
    out
}

fn reachability(reach: &[Vec<usize>]) -> Vec<BTreeSet<usize>> {
    (0..reach.len())
        .map(|s| {
            let mut seen = BTreeSet::from([s]);
            let mut q = VecDeque::from([s]);
            while let Some(i) = q.pop_front() {
                for &j in &reach[i] {
                    if seen.insert(j) {
                        q.push_back(j);
                    }
                }
            }
            seen
        })
        .collect()
}

/// Probe leaves at `probes` random attractor points must each enter some
/// candidate orbit neighbourhood; the unstable leaves of the candidates give
/// the reach graph, whose terminal classes form the skeleton.
pub fn verify_skeleton(factor: &Factor, candidates: &[SkeletonPoint], probes: usize, opts: &LabelOptions, seed: u64) -> SkeletonReport {
    let model = &factor.model;
    let mut rep = SkeletonReport {
        status: SkeletonStatus::Fail,
        candidates: candidates.to_vec(),
        skeleton: Vec::new(),
        classes: Vec::new(),
        reach: Vec::new(),
        probes,
        unresolved_probes: probes,
        probe_hits: vec![0; candidates.len()],
        cross_hits: 0,
        horizon: opts.horizon,
    };
    if candidates.is_empty() {
        return rep;
    }
    let leaf = |x: &[f64]| -> Vec<Vec<f64>> {
        match grow_unstable_leaf(factor, x, 0.02, 5) {
            Ok(p) => p.samples.into_iter().map(|s| s.x).collect(),
            Err(_) => vec![x.to_vec()],
        }
    };
    let reach: Vec<Vec<usize>> = crate::par::map_range(candidates.len(), |i| {
        let samples: Vec<Vec<f64>> = leaf(&candidates[i].point).into_iter().map(|x| model.map(&x)).collect();
        hits(model, &samples, candidates, opts).into_iter().filter(|&j| j != i).collect()
    });
    let closure = reachability(&reach);
    let mut classes: Vec<Vec<usize>> = Vec::new();
    let mut assigned = vec![false; candidates.len()];
    for i in 0..candidates.len() {
        if assigned[i] {
            continue;
        }
        let class: Vec<usize> = closure[i].iter().copied().filter(|&j| closure[j].contains(&i)).collect();
        for &j in &class {
            assigned[j] = true;
        }
        classes.push(class);
    }
    for class in &classes {
        let terminal = class.iter().all(|&i| closure[i].iter().all(|&j| closure[j].contains(&i)));
        if terminal {
            rep.skeleton.push(class[0]);
        }
    }
    rep.cross_hits = rep.skeleton.iter().map(|&i| reach[i].iter().filter(|j| rep.skeleton.contains(j)).count()).sum();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let points = attractor_sample(model, probes, 60, &mut rng);
    let probe_hits = crate::par::map(&points, |x| hits(model, &leaf(x), candidates, opts));
    rep.unresolved_probes = probe_hits.iter().filter(|h| h.is_empty()).count();
    for h in &probe_hits {
        for &k in h {
            rep.probe_hits[k] += 1;
        }
    }
    rep.status = if rep.unresolved_probes > 0 || rep.skeleton.is_empty() { SkeletonStatus::Inconclusive } else { SkeletonStatus::Skeleton };
    rep.classes = classes;
    rep.reach = reach;
    rep
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct StructureOptions {
    /// Minimum count for a box to be occupied by a component.
    pub occupancy: u32,
    pub leaf_particles: usize,
    pub leaf_steps: usize,
    pub seed: u64,
}

impl Default for StructureOptions {
    fn default() -> Self {
        StructureOptions { occupancy: 5, leaf_particles: 500, leaf_steps: 4000, seed: 1 }
    }
}

/// Runs of consecutive indices `(start, length)` of a box set.
pub fn run_length(boxes: &BTreeSet<u32>) -> Vec<(u32, u32)> {
    let mut out: Vec<(u32, u32)> = Vec::new();
    for &b in boxes {
        match out.last_mut() {
            Some((s, l)) if *s + *l == b => *l += 1,
            _ => out.push((b, 1)),
        }
    }
    out
}

#[derive(Debug, Clone, Serialize)]
pub struct ComponentStructure {
    pub occupied_boxes: usize,
    pub connected_components: usize,
    /// Fraction of occupied boxes visited by a leaf grown inside the support.
    pub leaf_fill: f64,
    /// Same for the leaf through the attached skeleton point.
    pub skeleton_leaf_fill: Option<f64>,
    pub skeleton_in_support: Option<bool>,
    /// Image of each connected piece under f (majority of particles).
    pub permutation: Vec<Option<usize>>,
    pub occupancy_rle: Vec<(u32, u32)>,
}

#[derive(Debug, Clone, Serialize)]
pub struct StructureReport {
    pub box_depth: u32,
    pub occupancy: u32,
    pub components: Vec<ComponentStructure>,
    pub min_margin: Option<f64>,
}

fn leaf_boxes(factor: &Factor, cover: &BoxCover, x: &[f64], opts: &StructureOptions) -> Result<BTreeSet<u32>> {
    let p = plaque_chart(factor, x)?;
    let run = CesaroRun::new(factor, &p, opts.leaf_steps, opts.leaf_particles, opts.seed)?;
    let mut set = BTreeSet::new();
    for i in 0..run.particles {
        for j in 0..run.steps {
            set.insert(cover.index(run.state(i, j)));
        }
    }
    Ok(set)
}

fn fill(occupied: &BTreeSet<u32>, visited: &BTreeSet<u32>) -> f64 {
    if occupied.is_empty() {
        return 0.0;
    }
    occupied.intersection(visited).count() as f64 / occupied.len() as f64
}

/// Box-level structure of each Gibbs component: connectivity, fill by a
/// single leaf, and how f permutes the connected pieces.
pub fn support_structure(factor: &Factor, gibbs: &GibbsReport, skeleton: &[Vec<Vec<f64>>], opts: &StructureOptions) -> StructureReport {
    let model = &factor.model;
    let cover = BoxCover::new(model, gibbs.box_depth);
    let components = crate::par::map_range(gibbs.components.len(), |c| {
        let mu = &gibbs.components[c];
        let counts = cover.counts((0..mu.len()).map(|i| mu.state(i)));
        let occupied: BTreeSet<u32> = counts.iter().filter(|(_, &n)| n >= opts.occupancy).map(|(&b, _)| b).collect();
        let pieces = cover.connected_components(&occupied);
        let piece_of: BTreeMap<u32, usize> = pieces.iter().enumerate().flat_map(|(k, p)| p.iter().map(move |&b| (b, k))).collect();
        // Anchor inside the support: the particle in the most populated box.
        let best_box = counts.iter().max_by_key(|(_, &n)| n).map(|(&b, _)| b);
        let anchor = (0..mu.len()).find(|&i| Some(cover.index(mu.state(i))) == best_box);
        let leaf_fill = anchor.and_then(|i| leaf_boxes(factor, &cover, mu.state(i), opts).ok()).map_or(0.0, |v| fill(&occupied, &v));
        let orbit = gibbs.skeleton_index.get(c).and_then(|&k| skeleton.get(k));
        let skeleton_leaf_fill = orbit.and_then(|o| leaf_boxes(factor, &cover, &o[0], opts).ok()).map(|v| fill(&occupied, &v));
        let skeleton_in_support = orbit.map(|o| o.iter().all(|q| gibbs.support_boxes[c].contains(&cover.index(q))));
        let mut votes = vec![BTreeMap::<usize, usize>::new(); pieces.len()];
        for i in 0..mu.len() {
            let x = mu.state(i);
            if let (Some(&a), Some(&b)) = (piece_of.get(&cover.index(x)), piece_of.get(&cover.index(&model.map(x)))) {
                *votes[a].entry(b).or_default() += 1;
            }
        }
        let permutation = votes.iter().map(|v| v.iter().max_by_key(|(_, &n)| n).map(|(&b, _)| b)).collect();
        ComponentStructure {
            occupied_boxes: occupied.len(),
            connected_components: pieces.len(),
            leaf_fill,
            skeleton_leaf_fill,
            skeleton_in_support,
            permutation,
            occupancy_rle: run_length(&occupied),
        }
    });
    StructureReport { box_depth: gibbs.box_depth, occupancy: opts.occupancy, components, min_margin: gibbs.min_margin }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::systems::{make_linear_torus, make_solenoid, TrigPoly2};

    #[test]
    fn solenoid_fixed_point() {
        let m = make_solenoid(3, 0.5, TrigPoly2::circle(0.3)).unwrap();
        let s = find_periodic(&m, 1).unwrap();
        // ×3 fixes 0 and 1/2.
        assert_eq!(s.points.len(), 2);
        assert!((s.points[1].point[0] - 0.5).abs() < 1e-15 && (s.points[1].point[1] + 0.6).abs() < 1e-12);
        let p = &s.points[0];
        assert!((p.point[1] - 0.6).abs() < 1e-12 && p.point[0] == 0.0);
        assert_eq!(p.contracting_count, 2);
        let moduli: Vec<f64> = p.multipliers.iter().map(|m| m[0].hypot(m[1])).collect();
        assert!((moduli[0] - 3.0).abs() < 1e-9 && (moduli[1] - 0.5).abs() < 1e-9 && (moduli[2] - 0.5).abs() < 1e-9);
        assert!(p.is_candidate(&m));
    }

    #[test]
    fn base_orbit_counts() {
        // Necklace counts for k = 3: 2, 3, 8, 18.
        let counts: Vec<usize> = (1..=4).map(|q| base_orbits(3, q).len()).collect();
        assert_eq!(counts, vec![2, 3, 8, 18]);
    }

    #[test]
    fn cat_periodic_counts_match_lefschetz() {
        let m = make_linear_torus(&[vec![2, 1], vec![1, 1]]).unwrap();
        let l = (3.0 + 5f64.sqrt()) / 2.0;
        for p in 1..=5usize {
            let fix = linear_periodic(&[vec![2, 1], vec![1, 1]], p).unwrap().len();
            let expected = (l.powi(p as i32) + l.powi(-(p as i32)) - 2.0).round() as usize;
            assert_eq!(fix, expected, "period {p}");
        }
        let s = find_periodic(&m, 5).unwrap();
        let points: usize = s.points.iter().map(|p| p.period).sum();
        // Every point of period ≤ 5 lies on exactly one orbit.
        let mut total = BTreeSet::new();
        for p in &s.points {
            for q in &p.orbit {
                total.insert(q.iter().map(|v| (v * 1e8).round() as i64).collect::<Vec<_>>());
            }
        }
        assert_eq!(points, total.len());
        let distinct: usize = (1..=5usize)
            .map(|p| {
                // Points of minimal period exactly p by Möbius inversion.
                let f = |n: usize| (l.powi(n as i32) + l.powi(-(n as i32)) - 2.0).round() as i64;
                (1..=p).filter(|d| p % d == 0).map(|d| mobius(p / d) * f(d)).sum::<i64>() as usize
            })
            .sum();
        assert_eq!(points, distinct);
    }

    fn mobius(n: usize) -> i64 {
        let mut n = n;
        let mut r = 1;
        let mut p = 2;
        while p * p <= n {
            if n.is_multiple_of(p) {
                n /= p;
                if n.is_multiple_of(p) {
                    return 0;
                }
                r = -r;
            }
            p += 1;
        }
        if n > 1 {
            r = -r;
        }
        r
    }

    #[test]
    fn max_period_limit() {
        let m = make_solenoid(3, 0.5, TrigPoly2::circle(0.3)).unwrap();
        assert!(find_periodic(&m, 13).is_err());
        assert!(find_periodic(&m, 0).is_err());
    }

    #[test]
    fn empty_candidates_fail() {
        let m = make_solenoid(3, 0.5, TrigPoly2::circle(0.3)).unwrap();
        let f = Factor::new(&m, 1e-8).unwrap();
        let r = verify_skeleton(&f, &[], 4, &LabelOptions::default(), 1);
        assert_eq!(r.status, SkeletonStatus::Fail);
    }

    #[test]
    fn run_length_encoding() {
        let s: BTreeSet<u32> = [1, 2, 3, 7, 9, 10].into_iter().collect();
        assert_eq!(run_length(&s), vec![(1, 3), (7, 1), (9, 2)]);
    }
}
