//! Particle measures: reference measures on unstable plaques, push-forward
//! with Markov splitting, Cesàro averages and weak-* comparison through
//! itinerary cylinders.

use std::collections::{BTreeMap, BTreeSet};

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::factor::{backward_orbit, Factor};
use crate::leaves::UnstablePlaque;
use crate::linalg::{ks_uniform, wrap01};
use crate::systems::{Domain, SystemModel};
use crate::toral::MarkovStructure;

/// Symbols kept before and after the current one in each particle word.
pub const PAST: usize = 8;
pub const FUTURE: usize = 8;
pub const WORD: usize = PAST + 1 + FUTURE;
/// Marks a symbol that is not available (e.g. before the start of a run).
pub const UNKNOWN: u8 = u8::MAX;

pub type Word = [u8; WORD];

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Provenance {
    Reference { cell: usize, anchor: Vec<f64> },
    Cesaro { n: usize, cell: usize, anchor: Vec<f64> },
    Dirac,
    Periodic { period: usize },
    Custom(String),
}

/// Weighted particle cloud. Each particle carries its itinerary word
/// `s₋₈ … s₀ … s₈` and a trajectory tag.
#[derive(Debug, Clone, Serialize)]
pub struct ParticleMeasure {
    pub dim: usize,
    #[serde(skip)]
    pub states: Vec<f64>,
    #[serde(skip)]
    pub weights: Vec<f64>,
    #[serde(skip)]
    pub words: Vec<Word>,
    #[serde(skip)]
    pub tags: Vec<u32>,
    pub provenance: Provenance,
}

impl ParticleMeasure {
    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn state(&self, i: usize) -> &[f64] {
        &self.states[i * self.dim..(i + 1) * self.dim]
    }

    pub fn total_weight(&self) -> f64 {
        self.weights.iter().sum()
    }

    pub fn current_symbol(&self, i: usize) -> u8 {
        self.words[i][PAST]
    }

    fn normalize(&mut self) {
        let t = self.total_weight();
        if t > 0.0 {
            self.weights.iter_mut().for_each(|w| *w /= t);
        }
    }

    /// Particles selected by `keep`, renormalized.
    pub fn restrict(&self, keep: impl Fn(usize) -> bool, provenance: Provenance) -> ParticleMeasure {
        let mut m = ParticleMeasure {
            dim: self.dim,
            states: Vec::new(),
            weights: Vec::new(),
            words: Vec::new(),
            tags: Vec::new(),
            provenance,
        };
        for i in 0..self.len() {
            if keep(i) {
                m.states.extend_from_slice(self.state(i));
                m.weights.push(self.weights[i]);
                m.words.push(self.words[i]);
                m.tags.push(self.tags[i]);
            }
        }
        m.normalize();
        m
    }

    /// Weighted union (weights of each part scaled by `share`).
    pub fn mixture(parts: &[(&ParticleMeasure, f64)], provenance: Provenance) -> ParticleMeasure {
        let dim = parts.first().map_or(0, |p| p.0.dim);
        let mut m = ParticleMeasure { dim, states: Vec::new(), weights: Vec::new(), words: Vec::new(), tags: Vec::new(), provenance };
        let mut tag_base = 0u32;
        for (p, share) in parts {
            m.states.extend_from_slice(&p.states);
            m.weights.extend(p.weights.iter().map(|w| w * share));
            m.words.extend_from_slice(&p.words);
            let max_tag = p.tags.iter().copied().max().unwrap_or(0);
            m.tags.extend(p.tags.iter().map(|t| t + tag_base));
            tag_base += max_tag + 1;
        }
        m.normalize();
        m
    }

    /// CSV: state coordinates, weight, current symbol, component label.
    pub fn to_csv(&self, labels: Option<&[i32]>) -> String {
        let mut s = String::new();
        for i in 0..self.dim {
            s.push_str(&format!("x{i},"));
        }
        s.push_str("weight,cell,component\n");
        for i in 0..self.len() {
            for v in self.state(i) {
                s.push_str(&format!("{v:.17e},"));
            }
            let l = labels.map_or(-1, |l| l[i]);
            s.push_str(&format!("{:.17e},{},{}\n", self.weights[i], self.current_symbol(i), l));
        }
        s
    }
}

/// Coding symbol as a byte.
pub fn symbol_u8(factor: &Factor, x: &[f64]) -> Option<u8> {
    factor.symbol(x).map(|s| s as u8)
}

/// Symbols of `x₋PAST, …, x₋₁`, oldest first.
pub fn past_symbols(factor: &Factor, x: &[f64]) -> [u8; PAST] {
    let mut out = [UNKNOWN; PAST];
    if let Ok(b) = backward_orbit(&factor.model, x, PAST) {
        for (j, y) in b.iter().enumerate() {
            out[PAST - 1 - j] = symbol_u8(factor, y).unwrap_or(UNKNOWN);
        }
    }
    out
}

/// States `x, f(x), …, f^{n-1}(x)` (flat) and symbols `s₀ … s_{n-1+FUTURE}`.
fn forward_run(factor: &Factor, x: &[f64], n: usize) -> (Vec<f64>, Vec<u8>) {
    let model = &factor.model;
    let mut states = Vec::with_capacity(n * x.len());
    let mut syms = Vec::with_capacity(n + FUTURE);
    let mut y = x.to_vec();
    for j in 0..n + FUTURE {
        if j < n {
            states.extend_from_slice(&y);
        }
        syms.push(symbol_u8(factor, &y).unwrap_or(UNKNOWN));
        y = model.step(&y);
    }
    (states, syms)
}

fn check_symbols(factor: &Factor) -> Result<()> {
    if factor.num_symbols() >= UNKNOWN as u32 {
        return Err(Error::InvalidInput(format!("{} symbols exceed the word alphabet", factor.num_symbols())));
    }
    Ok(())
}

/// ν^u_{i,x}: `n` equal-weight particles on the plaque, stratified in the
/// factor unstable coordinate; `seed = None` puts them at stratum midpoints.
pub fn reference_measure(factor: &Factor, plaque: &UnstablePlaque, n: usize, seed: Option<u64>) -> Result<ParticleMeasure> {
    if n == 0 {
        return Err(Error::InvalidInput("reference measure needs at least one particle".into()));
    }
    check_symbols(factor)?;
    let (lo, hi) = plaque.range;
    let jitter: Vec<f64> = match seed {
        Some(s) => {
            let mut rng = ChaCha8Rng::seed_from_u64(s);
            (0..n).map(|_| rng.gen::<f64>()).collect()
        }
        None => vec![0.5; n],
    };
    let ts: Vec<f64> = (0..n).map(|i| lo + (hi - lo) * (i as f64 + jitter[i]) / n as f64).collect();
    let pts = crate::par::map(&ts, |&t| plaque.chart().point(factor, t));
    let past = past_symbols(factor, &plaque.anchor);
    let mut m = ParticleMeasure {
        dim: factor.model.state_dim(),
        states: Vec::with_capacity(n * 3),
        weights: vec![1.0 / n as f64; n],
        words: Vec::with_capacity(n),
        tags: (0..n as u32).collect(),
        provenance: Provenance::Reference { cell: plaque.cell, anchor: plaque.anchor.clone() },
    };
    let runs = crate::par::map(&pts, |p| p.as_ref().map(|x| forward_run(factor, x, 1)).map_err(|e| e.clone()));
    for r in runs {
        let (s, syms) = r?;
        m.states.extend_from_slice(&s);
        let mut w = [UNKNOWN; WORD];
        w[..PAST].copy_from_slice(&past);
        w[PAST..].copy_from_slice(&syms[..FUTURE + 1]);
        m.words.push(w);
    }
    Ok(m)
}

/// Dirac mass at `x`, replicated into `copies` identical particles.
pub fn dirac(factor: &Factor, x: &[f64], copies: usize) -> ParticleMeasure {
    let (s, syms) = forward_run(factor, x, 1);
    let past = past_symbols(factor, x);
    let mut w = [UNKNOWN; WORD];
    w[..PAST].copy_from_slice(&past);
    w[PAST..].copy_from_slice(&syms[..FUTURE + 1]);
    let copies = copies.max(1);
    ParticleMeasure {
        dim: x.len(),
        states: s.repeat(copies),
        weights: vec![1.0 / copies as f64; copies],
        words: vec![w; copies],
        tags: vec![0; copies],
        provenance: Provenance::Dirac,
    }
}

/// Equidistribution on a periodic orbit, each point replicated `copies`
/// times.
pub fn periodic_measure(factor: &Factor, orbit: &[Vec<f64>], copies: usize) -> ParticleMeasure {
    let p = orbit.len();
    let syms: Vec<u8> = orbit.iter().map(|x| symbol_u8(factor, x).unwrap_or(UNKNOWN)).collect();
    let copies = copies.max(1);
    let n = p * copies;
    let mut m = ParticleMeasure {
        dim: orbit[0].len(),
        states: Vec::with_capacity(n * orbit[0].len()),
        weights: vec![1.0 / n as f64; n],
        words: Vec::with_capacity(n),
        tags: Vec::with_capacity(n),
        provenance: Provenance::Periodic { period: p },
    };
    for (i, x) in orbit.iter().enumerate() {
        let mut w = [UNKNOWN; WORD];
        for (j, slot) in w.iter_mut().enumerate() {
            let idx = (i as isize + j as isize - PAST as isize).rem_euclid(p as isize) as usize;
            *slot = syms[idx];
        }
        for _ in 0..copies {
            m.states.extend_from_slice(x);
            m.words.push(w);
            m.tags.push(0);
        }
    }
    m
}

/// ν^u_{i,x}(f⁻¹ξ^u_j) per source cell.
#[derive(Debug, Clone, Default, Serialize, PartialEq)]
pub struct BranchWeights {
    pub by_source: BTreeMap<u32, BTreeMap<u32, f64>>,
}

/// f_*μ with the splitting of each source cell over target cells.
pub fn push_forward(factor: &Factor, mu: &ParticleMeasure) -> Result<(ParticleMeasure, BranchWeights)> {
    let regions = factor.model.num_fiber_regions();
    let idx: Vec<usize> = (0..mu.len()).collect();
    let mapped = crate::par::map(&idx, |&i| {
        let y = factor.model.map(mu.state(i));
        let mut z = y.clone();
        for _ in 0..FUTURE {
            z = factor.model.map(&z);
        }
        let cur = symbol_u8(factor, &y);
        let last = symbol_u8(factor, &z).unwrap_or(UNKNOWN);
        (y, cur, last)
    });
    let mut out = ParticleMeasure {
        dim: mu.dim,
        states: Vec::with_capacity(mu.states.len()),
        weights: mu.weights.clone(),
        words: Vec::with_capacity(mu.len()),
        tags: mu.tags.clone(),
        provenance: mu.provenance.clone(),
    };
    let mut lost = 0usize;
    let mut branches = BranchWeights::default();
    let mut source_mass: BTreeMap<u32, f64> = BTreeMap::new();
    for (i, (y, cur, last)) in mapped.into_iter().enumerate() {
        out.states.extend_from_slice(&y);
        let old = mu.words[i];
        let mut w = [UNKNOWN; WORD];
        w[..WORD - 1].copy_from_slice(&old[1..]);
        w[WORD - 1] = last;
        match cur {
            Some(c) => {
                w[PAST] = c;
                let src = old[PAST] as u32 / regions;
                *branches.by_source.entry(src).or_default().entry(c as u32 / regions).or_default() += mu.weights[i];
                *source_mass.entry(src).or_default() += mu.weights[i];
            }
            None => {
                w[PAST] = UNKNOWN;
                lost += 1;
            }
        }
        out.words.push(w);
    }
    if lost as f64 > 1e-3 * mu.len() as f64 {
        return Err(Error::LostParticle { lost, total: mu.len() });
    }
    for (src, targets) in branches.by_source.iter_mut() {
        let m = source_mass[src];
        targets.values_mut().for_each(|v| *v /= m);
    }
    Ok((out, branches))
}

/// Relative spread `(max − min)/mean` of each branch weight across reference
/// measures on plaques through `anchors` (all in the same cell).
pub fn branch_weight_spread(factor: &Factor, anchors: &[Vec<f64>], n: usize) -> Result<(f64, Vec<BranchWeights>)> {
    let mut all = Vec::new();
    for a in anchors {
        let p = crate::leaves::plaque_chart(factor, a)?;
        let mu = reference_measure(factor, &p, n, None)?;
        all.push(push_forward(factor, &mu)?.1);
    }
    let mut spread: f64 = 0.0;
    let mut keys: BTreeSet<(u32, u32)> = BTreeSet::new();
    for b in &all {
        for (s, t) in &b.by_source {
            for k in t.keys() {
                keys.insert((*s, *k));
            }
        }
    }
    for (s, t) in keys {
        let vals: Vec<f64> = all
            .iter()
            .filter(|b| b.by_source.contains_key(&s))
            .map(|b| b.by_source[&s].get(&t).copied().unwrap_or(0.0))
            .collect();
        if vals.is_empty() {
            continue;
        }
        let mean = vals.iter().sum::<f64>() / vals.len() as f64;
        let (mn, mx) = vals.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
        if mean > 0.0 {
            spread = spread.max((mx - mn) / mean);
        }
    }
    Ok((spread, all))
}

/// Trajectories of a reference measure, from which Cesàro averages of any
/// length up to `steps` are read off.
#[derive(Debug, Clone)]
pub struct CesaroRun {
    pub steps: usize,
    pub particles: usize,
    pub dim: usize,
    pub cell: usize,
    pub anchor: Vec<f64>,
    states: Vec<f64>,
    /// Per trajectory: PAST symbols, then `steps + FUTURE` forward symbols.
    symbols: Vec<u8>,
    pub lost: usize,
}

impl CesaroRun {
    pub fn new(factor: &Factor, plaque: &UnstablePlaque, steps: usize, particles: usize, seed: u64) -> Result<Self> {
        let steps = steps.max(1);
        let start = reference_measure(factor, plaque, particles, Some(seed))?;
        let idx: Vec<usize> = (0..particles).collect();
        let runs = crate::par::map(&idx, |&i| forward_run(factor, start.state(i), steps));
        let dim = start.dim;
        let row = PAST + steps + FUTURE;
        let mut states = Vec::with_capacity(particles * steps * dim);
        let mut symbols = Vec::with_capacity(particles * row);
        let mut lost = 0;
        for (i, (s, syms)) in runs.into_iter().enumerate() {
            states.extend_from_slice(&s);
            symbols.extend_from_slice(&start.words[i][..PAST]);
            lost += syms[..steps].iter().filter(|&&c| c == UNKNOWN).count();
            symbols.extend_from_slice(&syms);
        }
        if lost as f64 > 1e-3 * (particles * steps) as f64 {
            return Err(Error::LostParticle { lost, total: particles * steps });
        }
        Ok(CesaroRun { steps, particles, dim, cell: plaque.cell, anchor: plaque.anchor.clone(), states, symbols, lost })
    }

    fn word(&self, i: usize, j: usize) -> Word {
        let row = PAST + self.steps + FUTURE;
        let mut w = [UNKNOWN; WORD];
        w.copy_from_slice(&self.symbols[i * row + j..i * row + j + WORD]);
        w
    }

    /// State of trajectory `i` at time `j`.
    pub fn state(&self, i: usize, j: usize) -> &[f64] {
        let o = (i * self.steps + j) * self.dim;
        &self.states[o..o + self.dim]
    }

    /// μ_m = (1/m) Σ_{j<m} f^j_* ν.
    pub fn measure(&self, m: usize) -> ParticleMeasure {
        let m = m.clamp(1, self.steps);
        let total = m * self.particles;
        let mut out = ParticleMeasure {
            dim: self.dim,
            states: Vec::with_capacity(total * self.dim),
            weights: vec![1.0 / total as f64; total],
            words: Vec::with_capacity(total),
            tags: Vec::with_capacity(total),
            provenance: Provenance::Cesaro { n: m, cell: self.cell, anchor: self.anchor.clone() },
        };
        for i in 0..self.particles {
            for j in 0..m {
                out.states.extend_from_slice(self.state(i, j));
                out.words.push(self.word(i, j));
                out.tags.push(i as u32);
            }
        }
        out
    }

    /// Cylinder histogram of μ_m without materializing the measure.
    pub fn histogram(&self, m: usize, depth: usize) -> BTreeMap<Vec<u8>, f64> {
        let m = m.clamp(1, self.steps);
        let mut h: BTreeMap<Vec<u8>, f64> = BTreeMap::new();
        let (a, b) = window(depth);
        let mut total = 0.0;
        for i in 0..self.particles {
            for j in 0..m {
                let w = self.word(i, j);
                let key = &w[a..b];
                if key.contains(&UNKNOWN) {
                    continue;
                }
                *h.entry(key.to_vec()).or_default() += 1.0;
                total += 1.0;
            }
        }
        h.values_mut().for_each(|v| *v /= total);
        h
    }

    /// `distance(μ_m, μ_{2m})` for each `m` with `2m ≤ steps`.
    pub fn convergence_curve(&self, ms: &[usize], depth: usize) -> Vec<(usize, f64)> {
        ms.iter()
            .filter(|&&m| 2 * m <= self.steps)
            .map(|&m| (m, l1(&self.histogram(m, depth), &self.histogram(2 * m, depth))))
            .collect()
    }
}

/// Default points of the convergence curve up to `n`.
pub fn curve_points(n: usize) -> Vec<usize> {
    let mut v = Vec::new();
    let mut m = n;
    while m >= 50 && v.len() < 6 {
        v.push(m);
        m /= 2;
    }
    v.reverse();
    v
}

/// Cesàro state μ_n from the seed plaque together with its convergence
/// curve `distance(μ_m, μ_{2m})` (which needs a run of length 2n).
pub fn cesaro_state(factor: &Factor, plaque: &UnstablePlaque, n: usize, particles: usize, seed: u64, depth: usize) -> Result<(ParticleMeasure, Vec<(usize, f64)>, CesaroRun)> {
    let run = CesaroRun::new(factor, plaque, 2 * n.max(1), particles, seed)?;
    let curve = run.convergence_curve(&curve_points(n), depth);
    Ok((run.measure(n), curve, run))
}

/// Positions `[a, b)` of a two-sided cylinder of `depth` symbols inside a word.
pub fn window(depth: usize) -> (usize, usize) {
    let back = (depth / 2).min(PAST);
    let fwd = depth.div_ceil(2).min(FUTURE + 1);
    (PAST - back, PAST + fwd)
}

pub fn cylinder_histogram(mu: &ParticleMeasure, depth: usize) -> BTreeMap<Vec<u8>, f64> {
    let (a, b) = window(depth);
    let mut h: BTreeMap<Vec<u8>, f64> = BTreeMap::new();
    let mut total = 0.0;
    for (w, &wt) in mu.words.iter().zip(&mu.weights) {
        let key = &w[a..b];
        if key.contains(&UNKNOWN) {
            continue;
        }
        *h.entry(key.to_vec()).or_default() += wt;
        total += wt;
    }
    if total > 0.0 {
        h.values_mut().for_each(|v| *v /= total);
    }
    h
}

pub fn l1(a: &BTreeMap<Vec<u8>, f64>, b: &BTreeMap<Vec<u8>, f64>) -> f64 {
    let keys: BTreeSet<&Vec<u8>> = a.keys().chain(b.keys()).collect();
    keys.into_iter().map(|k| (a.get(k).copied().unwrap_or(0.0) - b.get(k).copied().unwrap_or(0.0)).abs()).sum()
}

/// L1 distance of two-sided cylinder histograms.
pub fn weak_distance(m1: &ParticleMeasure, m2: &ParticleMeasure, depth: usize) -> Result<f64> {
    let h1 = cylinder_histogram(m1, depth);
    let h2 = cylinder_histogram(m2, depth);
    let cylinders: BTreeSet<&Vec<u8>> = h1.keys().chain(h2.keys()).collect();
    let per = m1.len().min(m2.len()) as f64 / cylinders.len().max(1) as f64;
    if per < 5.0 {
        return Err(Error::DepthTooLarge { depth, per_cylinder: per });
    }
    Ok(l1(&h1, &h2))
}

/// Mass of forward cylinders `[i₀ … i_{n-1}]` for the Parry measure of the
/// Markov chain, which is Lebesgue for linear toral factors and ν_β (uniform
/// in the conjugated angle) on the circle.
pub fn parry_masses(ms: &MarkovStructure, depth: usize) -> BTreeMap<Vec<u8>, f64> {
    let t = ms.transition();
    let n = t.len();
    let m = DMatrix::from_fn(n, n, |i, j| t[i][j] as f64);
    let (lam, v) = crate::linalg::perron_root(&m);
    let (_, u) = crate::linalg::perron_root(&m.transpose());
    let norm: f64 = u.iter().zip(v.iter()).map(|(a, b)| a * b).sum();
    let mut out = BTreeMap::new();
    let mut stack: Vec<Vec<u8>> = (0..n as u8).map(|i| vec![i]).collect();
    while let Some(w) = stack.pop() {
        if w.len() == depth {
            let first = w[0] as usize;
            let last = *w.last().unwrap() as usize;
            let mass = u[first] * v[last] / norm / lam.powi(depth as i32 - 1);
            out.insert(w, mass);
            continue;
        }
        let last = *w.last().unwrap() as usize;
        for j in 0..n {
            if t[last][j] == 1 {
                let mut nw = w.clone();
                nw.push(j as u8);
                stack.push(nw);
            }
        }
    }
    out
}

/// L1 distance between the forward base-cylinder histogram of μ and the
/// Parry measure of the factor.
pub fn base_projection_l1(factor: &Factor, mu: &ParticleMeasure, depth: usize) -> Result<f64> {
    let ms = factor.markov.as_ref().ok_or_else(|| Error::InvalidInput("no Markov partition".into()))?;
    let regions = factor.model.num_fiber_regions() as u8;
    let depth = depth.min(FUTURE + 1);
    let mut h: BTreeMap<Vec<u8>, f64> = BTreeMap::new();
    let mut total = 0.0;
    for (w, &wt) in mu.words.iter().zip(&mu.weights) {
        let key = &w[PAST..PAST + depth];
        if key.contains(&UNKNOWN) {
            continue;
        }
        *h.entry(key.iter().map(|s| s / regions).collect()).or_default() += wt;
        total += wt;
    }
    h.values_mut().for_each(|v| *v /= total);
    Ok(l1(&h, &parry_masses(ms, depth)))
}

/// Factor unstable coordinate of a state inside its Markov cell.
pub fn cell_coordinate(factor: &Factor, x: &[f64]) -> Option<(usize, f64)> {
    let p = factor.base_point(x).ok()?;
    match &factor.markov {
        Some(ms) => ms.locate(&p).map(|(c, (u, _))| (c, u)),
        None => None,
    }
}

/// Largest KS distance from uniform of the factor unstable coordinate among
/// plaque groups (same current symbol and `past_len` past symbols) holding at
/// least `min_count` particles. Returns `(max KS, groups tested)`.
pub fn conditional_ks(factor: &Factor, mu: &ParticleMeasure, past_len: usize, min_count: usize) -> (f64, usize) {
    let ms = match &factor.markov {
        Some(ms) => ms,
        None => return (f64::NAN, 0),
    };
    let mut groups: BTreeMap<Vec<u8>, Vec<usize>> = BTreeMap::new();
    for (i, w) in mu.words.iter().enumerate() {
        let key = &w[PAST - past_len..=PAST];
        if key.contains(&UNKNOWN) {
            continue;
        }
        groups.entry(key.to_vec()).or_default().push(i);
    }
    let tested: Vec<(Vec<u8>, Vec<usize>)> = groups.into_iter().filter(|(_, v)| v.len() >= min_count).collect();
    let ks = crate::par::map(&tested, |(_, idx)| {
        let coords: Vec<(usize, f64)> = idx.iter().filter_map(|&i| cell_coordinate(factor, mu.state(i))).collect();
        let cell = coords.first().map_or(0, |c| c.0);
        let (lo, hi) = ms.unstable_range(cell);
        let us: Vec<f64> = coords.iter().map(|c| c.1).collect();
        ks_uniform(&us, lo, hi)
    });
    (ks.iter().cloned().fold(0.0, f64::max), tested.len())
}

/// Fraction of μ-mass whose factor point lies within δ (unstable
/// coordinate) of the stable boundary of its cell, for each δ.
pub fn boundary_fractions(factor: &Factor, mu: &ParticleMeasure, deltas: &[f64]) -> Vec<f64> {
    let ms = match &factor.markov {
        Some(ms) => ms,
        None => return vec![f64::NAN; deltas.len()],
    };
    let idx: Vec<usize> = (0..mu.len()).collect();
    let dist = crate::par::map(&idx, |&i| factor.base_point(mu.state(i)).map(|p| ms.stable_boundary_distance(&p)).unwrap_or(0.0));
    deltas
        .iter()
        .map(|&d| dist.iter().zip(&mu.weights).filter(|(x, _)| **x < d).map(|(_, w)| w).sum::<f64>() / mu.total_weight())
        .collect()
}

/// Regular box cover of the domain: `2^depth` bins per axis.
#[derive(Debug, Clone, Serialize)]
pub struct BoxCover {
    pub depth: u32,
    pub dims: usize,
    #[serde(skip)]
    periodic: Vec<bool>,
    /// Lower corner and side of the normalized coordinate box.
    #[serde(skip)]
    lo: Vec<f64>,
    #[serde(skip)]
    side: Vec<f64>,
}

impl BoxCover {
    pub fn new(model: &SystemModel, depth: u32) -> Self {
        let d = model.state_dim();
        let (lo, side) = match model.domain() {
            Domain::Torus(_) => (vec![0.0; d], vec![1.0; d]),
            Domain::SolidTorus => (vec![0.0, -1.0, -1.0], vec![1.0, 2.0, 2.0]),
        };
        BoxCover { depth, dims: d, periodic: model.periodic_coords(), lo, side }
    }

    pub fn bins(&self) -> u32 {
        1 << self.depth
    }

    pub fn index(&self, x: &[f64]) -> u32 {
        let b = self.bins();
        let mut idx = 0u32;
        for c in 0..self.dims {
            let v = if self.periodic[c] { wrap01(x[c]) } else { (x[c] - self.lo[c]) / self.side[c] };
            let i = ((v * b as f64).floor() as i64).clamp(0, b as i64 - 1) as u32;
            idx = idx * b + i;
        }
        idx
    }

    pub fn coords(&self, idx: u32) -> Vec<u32> {
        let b = self.bins();
        let mut c = vec![0; self.dims];
        let mut r = idx;
        for k in (0..self.dims).rev() {
            c[k] = r % b;
            r /= b;
        }
        c
    }

    fn from_coords(&self, c: &[u32]) -> u32 {
        c.iter().fold(0, |acc, &v| acc * self.bins() + v)
    }

    /// Box counts of a set of states.
    pub fn counts<'a>(&self, states: impl Iterator<Item = &'a [f64]>) -> BTreeMap<u32, u32> {
        let mut m = BTreeMap::new();
        for x in states {
            *m.entry(self.index(x)).or_default() += 1;
        }
        m
    }

    /// Neighbours sharing a face, edge or corner (periodic axes wrap).
    pub fn neighbours(&self, idx: u32) -> Vec<u32> {
        let c = self.coords(idx);
        let b = self.bins() as i64;
        let mut out = Vec::new();
        let n = 3usize.pow(self.dims as u32);
        for code in 0..n {
            let mut r = code;
            let mut nc = Vec::with_capacity(self.dims);
            let mut ok = true;
            let mut zero = true;
            for k in 0..self.dims {
                let off = (r % 3) as i64 - 1;
                r /= 3;
                if off != 0 {
                    zero = false;
                }
                let mut v = c[k] as i64 + off;
                if self.periodic[k] {
                    v = v.rem_euclid(b);
                } else if v < 0 || v >= b {
                    ok = false;
                }
                nc.push(v as u32);
            }
            if ok && !zero {
                out.push(self.from_coords(&nc));
            }
        }
        out
    }

    /// Connected components of a box set under the neighbour relation.
    pub fn connected_components(&self, boxes: &BTreeSet<u32>) -> Vec<BTreeSet<u32>> {
        let mut seen: BTreeSet<u32> = BTreeSet::new();
        let mut comps = Vec::new();
        for &start in boxes {
            if seen.contains(&start) {
                continue;
            }
            let mut comp = BTreeSet::new();
            let mut stack = vec![start];
            seen.insert(start);
            while let Some(b) = stack.pop() {
                comp.insert(b);
                for nb in self.neighbours(b) {
                    if boxes.contains(&nb) && seen.insert(nb) {
                        stack.push(nb);
                    }
                }
            }
            comps.push(comp);
        }
        comps
    }

    /// Smallest gap, in original units, between boxes of `a` and `b` along
    /// the non-periodic (fiber) axes among box pairs whose periodic
    /// coordinates are adjacent; all axes for tori.
    pub fn margin(&self, a: &BTreeSet<u32>, b: &BTreeSet<u32>) -> f64 {
        let bins = self.bins() as i64;
        let has_fiber = self.periodic.iter().any(|p| !p);
        let ca: Vec<Vec<u32>> = a.iter().map(|&i| self.coords(i)).collect();
        let cb: Vec<Vec<u32>> = b.iter().map(|&i| self.coords(i)).collect();
        let mut best = f64::INFINITY;
        for x in &ca {
            for y in &cb {
                let mut gap2 = 0.0;
                let mut skip = false;
                for k in 0..self.dims {
                    let mut d = (x[k] as i64 - y[k] as i64).abs();
                    if self.periodic[k] {
                        d = d.min(bins - d);
                        if has_fiber {
                            if d > 1 {
                                skip = true;
                            }
                            continue;
                        }
                    }
                    let g = (d - 1).max(0) as f64 * self.side[k] / bins as f64;
                    gap2 += g * g;
                }
                if !skip {
                    best = best.min(gap2.sqrt());
                }
            }
        }
        best
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum GibbsStatus {
    Single,
    Multi,
    Unresolved,
}

/// Basin labelling parameters.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct LabelOptions {
    pub horizon: usize,
    pub radius_uu: f64,
    pub radius_cs: f64,
    pub box_depth: u32,
    /// Minimum particle count for a box to count as occupied.
    pub occupancy: u32,
}

impl Default for LabelOptions {
    fn default() -> Self {
        LabelOptions { horizon: 200, radius_uu: 0.05, radius_cs: 0.3, box_depth: 6, occupancy: 1 }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct GibbsReport {
    pub status: GibbsStatus,
    pub components: Vec<ParticleMeasure>,
    /// Mass of each component in the input measure.
    pub masses: Vec<f64>,
    /// Index of the skeleton orbit each component is attached to.
    pub skeleton_index: Vec<usize>,
    pub unresolved_fraction: f64,
    pub distances: Vec<Vec<f64>>,
    pub box_depth: u32,
    #[serde(skip)]
    pub support_boxes: Vec<BTreeSet<u32>>,
    pub box_counts: Vec<usize>,
    pub min_margin: Option<f64>,
    pub convergence_curve: Vec<(usize, f64)>,
    #[serde(skip)]
    pub labels: Vec<i32>,
}

/// Whether `x` is in the neighbourhood of `q`: unstable offset below
/// `radius_uu`, center-stable offset below `radius_cs`.
pub fn near(model: &SystemModel, x: &[f64], q: &[f64], opts: &LabelOptions) -> bool {
    let d = model.difference(x, q);
    let (u, cs) = model.uu_cs_split(&d);
    u.abs() < opts.radius_uu && cs < opts.radius_cs
}

/// Index of the first skeleton orbit whose neighbourhood the forward orbit of
/// `x` enters within the horizon.
pub fn basin_label(model: &SystemModel, x: &[f64], orbits: &[Vec<Vec<f64>>], opts: &LabelOptions) -> Option<usize> {
    let mut y = x.to_vec();
    for _ in 0..=opts.horizon {
        for (k, orb) in orbits.iter().enumerate() {
            if orb.iter().any(|q| near(model, &y, q, opts)) {
                return Some(k);
            }
        }
        y = model.map(&y);
    }
    None
}

/// Splits μ into basin components of the skeleton orbits. Particles sharing
/// a trajectory tag share their future and are labelled once.
pub fn ergodic_components(
    factor: &Factor,
    mu: &ParticleMeasure,
    orbits: &[Vec<Vec<f64>>],
    opts: &LabelOptions,
    seed_distance: Option<f64>,
    distance_depth: usize,
) -> GibbsReport {
    let model = &factor.model;
    let mut rep_of_tag: BTreeMap<u32, usize> = BTreeMap::new();
    for (i, &t) in mu.tags.iter().enumerate() {
        rep_of_tag.insert(t, i);
    }
    let reps: Vec<(u32, usize)> = rep_of_tag.into_iter().collect();
    let labels_by_tag: BTreeMap<u32, Option<usize>> = if orbits.is_empty() {
        reps.iter().map(|&(t, _)| (t, Some(0))).collect()
    } else {
        let l = crate::par::map(&reps, |&(_, i)| basin_label(model, mu.state(i), orbits, opts));
        reps.iter().map(|r| r.0).zip(l).collect()
    };
    let labels: Vec<i32> = mu.tags.iter().map(|t| labels_by_tag[t].map_or(-1, |l| l as i32)).collect();
    let total = mu.total_weight();
    let unresolved: f64 = labels.iter().zip(&mu.weights).filter(|(l, _)| **l < 0).map(|(_, w)| w).sum::<f64>() / total + 0.0;
    let used: BTreeSet<i32> = labels.iter().copied().filter(|&l| l >= 0).collect();
    let cover = BoxCover::new(model, opts.box_depth);
    let mut components = Vec::new();
    let mut masses = Vec::new();
    let mut skeleton_index = Vec::new();
    let mut boxes = Vec::new();
    for &l in &used {
        let comp = mu.restrict(|i| labels[i] == l, Provenance::Custom(format!("component {l}")));
        masses.push(labels.iter().zip(&mu.weights).filter(|(x, _)| **x == l).map(|(_, w)| w).sum::<f64>() / total);
        let counts = cover.counts((0..comp.len()).map(|i| comp.state(i)));
        boxes.push(counts.into_iter().filter(|&(_, c)| c >= opts.occupancy).map(|(b, _)| b).collect::<BTreeSet<u32>>());
        components.push(comp);
        skeleton_index.push(l as usize);
    }
    let n = components.len();
    let mut distances = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in i + 1..n {
            let d = l1(&cylinder_histogram(&components[i], distance_depth), &cylinder_histogram(&components[j], distance_depth));
            distances[i][j] = d;
            distances[j][i] = d;
        }
    }
    let mut min_margin: Option<f64> = None;
    for i in 0..n {
        for j in i + 1..n {
            let m = cover.margin(&boxes[i], &boxes[j]);
            min_margin = Some(min_margin.map_or(m, |x: f64| x.min(m)));
        }
    }
    let status = if unresolved > 0.05 {
        GibbsStatus::Unresolved
    } else if n > 1 {
        if min_margin.unwrap_or(0.0) > 0.0 {
            GibbsStatus::Multi
        } else {
            GibbsStatus::Unresolved
        }
    } else if orbits.is_empty() {
        match seed_distance {
            Some(d) if d < 0.05 => GibbsStatus::Single,
            _ => GibbsStatus::Unresolved,
        }
    } else {
        GibbsStatus::Single
    };
    GibbsReport {
        status,
        box_counts: boxes.iter().map(|b| b.len()).collect(),
        components,
        masses,
        skeleton_index,
        unresolved_fraction: unresolved,
        distances,
        box_depth: opts.box_depth,
        support_boxes: boxes,
        min_margin,
        convergence_curve: Vec::new(),
        labels,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::leaves::plaque_of;
    use crate::systems::{make_linear_torus, make_solenoid, TrigPoly2};

    fn solenoid() -> Factor {
        Factor::new(&make_solenoid(3, 0.5, TrigPoly2::circle(0.3)).unwrap(), 1e-8).unwrap()
    }

    fn cat() -> Factor {
        Factor::new(&make_linear_torus(&[vec![2, 1], vec![1, 1]]).unwrap(), 1e-8).unwrap()
    }

    #[test]
    fn stratified_midpoints_on_first_arc() {
        let f = solenoid();
        let x = f.model.iterate(&[0.1, 0.0, 0.0], 60);
        let x = {
            // Move to the first arc.
            let mut y = x;
            while f.symbol(&y) != Some(0) {
                y = f.model.map(&y);
            }
            y
        };
        let p = plaque_of(&f, &x, 5).unwrap();
        let mu = reference_measure(&f, &p, 3, None).unwrap();
        let th: Vec<f64> = (0..3).map(|i| mu.state(i)[0]).collect();
        for (t, e) in th.iter().zip([1.0 / 18.0, 3.0 / 18.0, 5.0 / 18.0]) {
            assert!((t - e).abs() < 1e-12);
        }
        assert!((mu.total_weight() - 1.0).abs() < 1e-12);
        assert!(reference_measure(&f, &p, 0, None).is_err());
    }

    #[test]
    fn reference_measure_is_uniform_in_factor_coordinate() {
        let f = cat();
        let p = plaque_of(&f, &[0.3, 0.2], 5).unwrap();
        let mu = reference_measure(&f, &p, 10_000, Some(3)).unwrap();
        let us: Vec<f64> = (0..mu.len()).map(|i| f.markov.as_ref().unwrap().locate_in(mu.state(i), p.cell).unwrap().1 .0).collect();
        assert!(ks_uniform(&us, p.range.0, p.range.1) < 0.02);
    }

    #[test]
    fn circle_branch_weights_are_equal() {
        let f = solenoid();
        let x = f.model.iterate(&[0.3, 0.0, 0.0], 60);
        let p = plaque_of(&f, &x, 5).unwrap();
        let mu = reference_measure(&f, &p, 300, None).unwrap();
        let (_, b) = push_forward(&f, &mu).unwrap();
        let w = &b.by_source[&(p.cell as u32)];
        for v in w.values() {
            assert!((v - 1.0 / 3.0).abs() < 1e-9);
        }
    }

    #[test]
    fn cat_branch_weights_are_length_ratios() {
        let f = cat();
        let ms = f.markov.as_ref().unwrap();
        let lam = match ms {
            MarkovStructure::Torus(t) => t.lambda_u(),
            _ => unreachable!(),
        };
        let x = [0.3, 0.2];
        let p = plaque_of(&f, &x, 5).unwrap();
        let mu = reference_measure(&f, &p, 20_000, None).unwrap();
        let (_, b) = push_forward(&f, &mu).unwrap();
        let len = |c: usize| ms.unstable_range(c).1 - ms.unstable_range(c).0;
        for (t, w) in &b.by_source[&(p.cell as u32)] {
            let expect = len(*t as usize) / lam / len(p.cell);
            assert!((w - expect).abs() / expect < 0.01, "{w} {expect}");
        }
    }

    #[test]
    fn dirac_at_fixed_point() {
        let f = solenoid();
        let d = dirac(&f, &[0.0, 0.6, 0.0], 10);
        let (img, b) = push_forward(&f, &d).unwrap();
        assert!(f.model.distance(img.state(0), &[0.0, 0.6, 0.0]) < 1e-12);
        assert_eq!(b.by_source[&0].len(), 1);
        assert!((b.by_source[&0][&0] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn cesaro_one_step_is_reference() {
        let f = solenoid();
        let x = f.model.iterate(&[0.3, 0.0, 0.0], 60);
        let p = plaque_of(&f, &x, 5).unwrap();
        let run = CesaroRun::new(&f, &p, 1, 50, 9).unwrap();
        let r = reference_measure(&f, &p, 50, Some(9)).unwrap();
        assert_eq!(run.measure(1).states, r.states);
        assert_eq!(run.measure(1).words, r.words);
    }

    #[test]
    fn weak_distance_extremes() {
        let f = solenoid();
        let x = f.model.iterate(&[0.3, 0.0, 0.0], 60);
        let p = plaque_of(&f, &x, 5).unwrap();
        let (mu, _, _) = cesaro_state(&f, &p, 200, 100, 1, 4).unwrap();
        assert_eq!(weak_distance(&mu, &mu, 4).unwrap(), 0.0);
        let a = dirac(&f, &[0.0, 0.6, 0.0], 1000);
        let b = mu.restrict(|i| mu.current_symbol(i) != 0, Provenance::Custom("off".into()));
        assert!((weak_distance(&a, &b, 1).unwrap() - 2.0).abs() < 1e-12);
        assert!(matches!(weak_distance(&mu, &mu, 16), Err(Error::DepthTooLarge { .. })));
    }

    #[test]
    fn parry_masses_sum_to_one() {
        let f = cat();
        let m = parry_masses(f.markov.as_ref().unwrap(), 3);
        assert!((m.values().sum::<f64>() - 1.0).abs() < 1e-12);
        let s = solenoid();
        let m = parry_masses(s.markov.as_ref().unwrap(), 2);
        assert_eq!(m.len(), 9);
        assert!(m.values().all(|v| (v - 1.0 / 9.0).abs() < 1e-12));
    }

    #[test]
    fn box_components_wrap() {
        let m = make_solenoid(3, 0.5, TrigPoly2::circle(0.3)).unwrap();
        let c = BoxCover::new(&m, 3);
        let a: BTreeSet<u32> = [c.index(&[0.01, 0.0, 0.0]), c.index(&[0.99, 0.0, 0.0])].into_iter().collect();
        assert_eq!(c.connected_components(&a).len(), 1);
        let b: BTreeSet<u32> = [c.index(&[0.01, 0.9, 0.0])].into_iter().collect();
        let g = c.margin(&a, &b);
        assert!((g - 0.5).abs() < 1e-12, "{g}");
    }
}
