//! Topological u-entropy by unstable volume growth, metric u-entropy by
//! conditional information on Markov plaques, and the entropy comparisons.

use std::collections::BTreeMap;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::factor::Factor;
use crate::leaves::LeafChart;
use crate::linalg::linear_fit;
use crate::measures::{ParticleMeasure, FUTURE, PAST, UNKNOWN};
use crate::systems::SystemKind;

/// Points per parallel chunk of the polyline.
const CHUNK: usize = 4096;
const START_POINTS: usize = 1024;
pub const DEFAULT_BUDGET: usize = 1 << 23;

#[derive(Debug, Clone, Serialize)]
pub struct VolumeGrowth {
    pub h_vol: f64,
    pub stderr: f64,
    pub intercept: f64,
    pub n_max: usize,
    pub points: usize,
    /// log length of f^n D for n = 0..=n_max.
    pub log_lengths: Vec<f64>,
    pub reliable: bool,
}

impl VolumeGrowth {
    pub fn to_csv(&self) -> String {
        let mut s = String::from("n,log_length\n");
        for (n, l) in self.log_lengths.iter().enumerate() {
            s.push_str(&format!("{n},{l:.17e}\n"));
        }
        s
    }
}

/// Seed disk through `x` as a map from [0, 1] to the leaf.
fn seed_disk<'a>(factor: &'a Factor, x: &[f64], seed_len: f64) -> Result<Box<dyn Fn(f64) -> Result<Vec<f64>> + Sync + 'a>> {
    let model = &factor.model;
    match &model.kind {
        SystemKind::Skew(_) => {
            let chart = LeafChart::new(factor, x)?;
            let t0 = x[0];
            Ok(Box::new(move |s| chart.point_at_theta(factor, t0 + s * seed_len)))
        }
        SystemKind::Torus(_) => {
            let e = model.unstable_seed_direction();
            let x = x.to_vec();
            Ok(Box::new(move |s| Ok(x.iter().zip(&e).map(|(a, b)| a + s * seed_len * b).collect())))
        }
    }
}

/// Lengths of the polylines f^n(D) for n = 0..=n_max with `m` sample points.
fn polyline_lengths(factor: &Factor, disk: &(dyn Fn(f64) -> Result<Vec<f64>> + Sync), m: usize, n_max: usize) -> Result<Vec<f64>> {
    let model = &factor.model;
    let chunks = m.div_ceil(CHUNK);
    let parts = crate::par::map_range(chunks, |c| -> Result<Vec<f64>> {
        let lo = c * CHUNK;
        // One point of overlap with the next chunk.
        let hi = ((c + 1) * CHUNK).min(m - 1);
        let mut acc = vec![0.0; n_max + 1];
        let mut prev: Option<Vec<f64>> = None;
        let mut orbit_prev: Vec<Vec<f64>> = Vec::new();
        for i in lo..=hi {
            let mut y = disk(i as f64 / (m - 1) as f64)?;
            let mut orbit = Vec::with_capacity(n_max + 1);
            for _ in 0..=n_max {
                orbit.push(y.clone());
                y = model.map(&y);
            }
            if prev.is_some() {
                for n in 0..=n_max {
                    acc[n] += model.distance(&orbit_prev[n], &orbit[n]);
                }
            }
            prev = Some(orbit[0].clone());
            orbit_prev = orbit;
        }
        Ok(acc)
    });
    let mut total = vec![0.0; n_max + 1];
    for p in parts {
        for (t, v) in total.iter_mut().zip(p?) {
            *t += v;
        }
    }
    Ok(total)
}

/// Growth rate of the length of f^n D for a seed arc D of length `seed_len`
/// through `x` inside its unstable leaf. The polyline is refined by doubling
/// until the final length moves less than 0.5%.
pub fn topological_u_entropy(factor: &Factor, x: &[f64], seed_len: f64, n_max: usize, budget: usize) -> Result<VolumeGrowth> {
    if n_max == 0 {
        return Err(Error::InvalidInput("n_max must be positive".into()));
    }
    let disk = seed_disk(factor, x, seed_len)?;
    let mut m = START_POINTS;
    let mut lengths = polyline_lengths(factor, disk.as_ref(), m, n_max)?;
    loop {
        if 2 * m > budget {
            return Err(Error::ResolutionExhausted(budget));
        }
        let finer = polyline_lengths(factor, disk.as_ref(), 2 * m, n_max)?;
        m *= 2;
        let rel = (finer[n_max] - lengths[n_max]).abs() / finer[n_max];
        lengths = finer;
        if rel < 5e-3 {
            break;
        }
    }
    let log_lengths: Vec<f64> = lengths.iter().map(|l| l.ln()).collect();
    let window = n_max.div_ceil(2);
    let ns: Vec<f64> = (n_max + 1 - window..=n_max).map(|n| n as f64).collect();
    let ys = &log_lengths[n_max + 1 - window..];
    let reliable = n_max >= 8;
    let (intercept, slope, se) = if ns.len() >= 2 { linear_fit(&ns, ys) } else { (f64::NAN, f64::NAN, f64::INFINITY) };
    Ok(VolumeGrowth {
        h_vol: slope,
        stderr: if reliable { se } else { f64::INFINITY },
        intercept,
        n_max,
        points: m,
        log_lengths,
        reliable,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct ConditionalEntropy {
    pub h_cond: f64,
    pub stderr: f64,
    pub past_len: usize,
    pub groups: usize,
    /// Mass of the plaque groups that met the branch floor.
    pub resolved_mass: f64,
}

/// H_μ(f⁻¹ξ^u | ξ^u): particles are grouped into plaques by their current
/// symbol and `past_len` past symbols; inside a plaque the next Markov cell
/// tells which element of f⁻¹ξ^u holds the particle.
pub fn metric_u_entropy(factor: &Factor, mu: &ParticleMeasure, past_len: usize, floor: usize) -> Result<ConditionalEntropy> {
    if past_len > PAST {
        return Err(Error::InvalidInput(format!("past length {past_len} exceeds {PAST}")));
    }
    if mu.len() < 200 {
        return Err(Error::InsufficientConditionals(format!("{} particles", mu.len())));
    }
    let regions = factor.model.num_fiber_regions() as u8;
    // plaque key -> next cell -> (count, mass)
    let mut groups: BTreeMap<&[u8], BTreeMap<u8, (usize, f64)>> = BTreeMap::new();
    let mut first: BTreeMap<&[u8], usize> = BTreeMap::new();
    let mut atoms: BTreeMap<&[u8], bool> = BTreeMap::new();
    for (i, w) in mu.words.iter().enumerate() {
        let key = &w[PAST - past_len..=PAST];
        let next = w[PAST + 1];
        if key.contains(&UNKNOWN) || next == UNKNOWN {
            continue;
        }
        let e = groups.entry(key).or_default().entry(next / regions).or_default();
        e.0 += 1;
        e.1 += mu.weights[i];
        let f = *first.entry(key).or_insert(i);
        let same = mu.state(f) == mu.state(i);
        atoms.entry(key).and_modify(|a| *a &= same).or_insert(same);
    }
    let total = mu.total_weight();
    let mut h = 0.0;
    let mut var = 0.0;
    let mut resolved = 0.0;
    let mut used = 0;
    for (key, branches) in &groups {
        let mass: f64 = branches.values().map(|b| b.1).sum();
        if atoms[key] {
            // Atomic conditional: f⁻¹ξ^u does not split it.
            resolved += mass;
            used += 1;
            continue;
        }
        if branches.values().any(|b| b.0 < floor) {
            continue;
        }
        let n: usize = branches.values().map(|b| b.0).sum();
        let (mut hg, mut h2) = (0.0, 0.0);
        for b in branches.values() {
            let p = b.1 / mass;
            hg -= p * p.ln();
            h2 += p * p.ln() * p.ln();
        }
        h += mass * hg;
        var += (mass / total).powi(2) * (h2 - hg * hg).max(0.0) / n as f64;
        resolved += mass;
        used += 1;
    }
    let resolved_frac = resolved / total;
    if resolved_frac < 0.5 {
        return Err(Error::InsufficientConditionals(format!("only {resolved_frac:.3} of the mass lies on resolved plaques")));
    }
    Ok(ConditionalEntropy { h_cond: h / resolved, stderr: var.sqrt() / resolved_frac, past_len, groups: used, resolved_mass: resolved_frac })
}

#[derive(Debug, Clone, Serialize)]
pub struct SymbolicEntropy {
    pub h: f64,
    pub depth: usize,
    pub floor: usize,
}

fn block_entropy(mu: &ParticleMeasure, n: usize) -> (f64, usize) {
    let mut h: BTreeMap<&[u8], f64> = BTreeMap::new();
    let mut total = 0.0;
    for (w, &wt) in mu.words.iter().zip(&mu.weights) {
        let key = &w[PAST..PAST + n];
        if key.contains(&UNKNOWN) {
            continue;
        }
        *h.entry(key).or_default() += wt;
        total += wt;
    }
    (-h.values().map(|&p| p / total).map(|p| p * p.ln()).sum::<f64>(), h.len())
}

/// Plug-in entropy H_n − H_{n−1} of forward itineraries, with n the largest
/// depth up to `max_depth` that keeps at least `floor` particles per word on
/// average.
pub fn h_total_symbolic(mu: &ParticleMeasure, max_depth: usize, floor: usize) -> Result<SymbolicEntropy> {
    let max_depth = max_depth.min(FUTURE + 1);
    let mut prev = block_entropy(mu, 1).0;
    let mut best = None;
    for n in 2..=max_depth {
        let (hn, words) = block_entropy(mu, n);
        if (mu.len() as f64) < floor as f64 * words as f64 {
            break;
        }
        best = Some(SymbolicEntropy { h: hn - prev, depth: n, floor });
        prev = hn;
    }
    best.ok_or_else(|| Error::InsufficientConditionals("no depth meets the particle floor".into()))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum IdentityStatus {
    Equality,
    Strict,
    Violation,
    Unresolved,
}

#[derive(Debug, Clone, Serialize)]
pub struct EntropyEntry {
    pub name: String,
    pub h_cond: Option<ConditionalEntropy>,
    pub status: IdentityStatus,
    pub h_total_symbolic: Option<SymbolicEntropy>,
    /// |h_total_symbolic − h_cond| / h_cond within 5%.
    pub symbolic_agrees: Option<bool>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, Serialize)]
pub struct EntropyReport {
    pub h_base: f64,
    pub h_pf: Option<f64>,
    pub pf_matches: Option<bool>,
    pub h_vol: Option<VolumeGrowth>,
    pub entries: Vec<EntropyEntry>,
    pub violations: usize,
}

impl EntropyReport {
    pub fn to_csv(&self) -> String {
        let mut s = String::from("measure,h_cond,stderr,status,h_total_symbolic\n");
        for e in &self.entries {
            let (h, se) = e.h_cond.as_ref().map_or((f64::NAN, f64::NAN), |c| (c.h_cond, c.stderr));
            let sym = e.h_total_symbolic.as_ref().map_or(f64::NAN, |t| t.h);
            s.push_str(&format!("{},{h:.17e},{se:.17e},{:?},{sym:.17e}\n", e.name, e.status));
        }
        s
    }
}

pub struct BatteryItem<'a> {
    pub name: String,
    pub measure: &'a ParticleMeasure,
    /// Whether the cs exponents of the measure are certified negative.
    pub certified: bool,
}

#[derive(Debug, Clone, Copy)]
pub struct EntropyOptions {
    pub past_len: usize,
    pub floor: usize,
    pub symbolic_depth: usize,
}

impl Default for EntropyOptions {
    fn default() -> Self {
        EntropyOptions { past_len: 6, floor: 5, symbolic_depth: 8 }
    }
}

/// Compares each measure of the battery with h(A): a violation is
/// h_cond > h_base + 3·stderr, equality is agreement within 3%.
pub fn entropy_identities(factor: &Factor, battery: &[BatteryItem<'_>], h_vol: Option<VolumeGrowth>, opts: &EntropyOptions) -> EntropyReport {
    let h_base = factor.base_entropy;
    let h_pf = factor.markov.as_ref().map(|ms| ms.pf_entropy());
    let entries = crate::par::map(battery, |item| {
        let mut e = EntropyEntry {
            name: item.name.clone(),
            h_cond: None,
            status: IdentityStatus::Unresolved,
            h_total_symbolic: None,
            symbolic_agrees: None,
            error: None,
        };
        match metric_u_entropy(factor, item.measure, opts.past_len, opts.floor) {
            Ok(c) => {
                e.status = if c.h_cond > h_base + 3.0 * c.stderr {
                    IdentityStatus::Violation
                } else if (c.h_cond - h_base).abs() <= 0.03 * h_base {
                    IdentityStatus::Equality
                } else {
                    IdentityStatus::Strict
                };
                if item.certified {
                    if let Ok(t) = h_total_symbolic(item.measure, opts.symbolic_depth, opts.floor) {
                        e.symbolic_agrees = Some((t.h - c.h_cond).abs() <= 0.05 * c.h_cond.max(1e-12));
                        e.h_total_symbolic = Some(t);
                    }
                }
                e.h_cond = Some(c);
            }
            Err(err) => e.error = Some(err.to_string()),
        }
        e
    });
    let violations = entries.iter().filter(|e| e.status == IdentityStatus::Violation).count();
    EntropyReport {
        h_base,
        h_pf,
        pf_matches: h_pf.map(|p| (p - h_base).abs() < 1e-9),
        h_vol,
        entries,
        violations,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::measures::{dirac, periodic_measure};
    use crate::systems::{make_solenoid, TrigPoly2};

    fn solenoid() -> Factor {
        let m = make_solenoid(3, 0.5, TrigPoly2::circle(0.3)).unwrap();
        Factor::new(&m, 1e-8).unwrap()
    }

    #[test]
    fn short_horizon_is_flagged() {
        let f = solenoid();
        let x = f.model.iterate(&[0.2, 0.0, 0.0], 60);
        let g = topological_u_entropy(&f, &x, 0.01, 2, DEFAULT_BUDGET).unwrap();
        assert!(!g.reliable && g.stderr.is_infinite());
    }

    #[test]
    fn fixed_point_has_zero_conditional_entropy() {
        let f = solenoid();
        let mu = dirac(&f, &[0.0, 0.6, 0.0], 300);
        let c = metric_u_entropy(&f, &mu, 6, 5).unwrap();
        assert_eq!(c.h_cond, 0.0);
    }

    #[test]
    fn period_three_orbit_is_atomic() {
        let f = solenoid();
        // θ = 1/26 has period 3 under ×3.
        let mut x = f.model.iterate(&[1.0 / 26.0, 0.0, 0.0], 0);
        for _ in 0..200 {
            x = f.model.iterate(&x, 3);
        }
        let orbit: Vec<Vec<f64>> = (0..3).map(|j| f.model.iterate(&x, j)).collect();
        let mu = periodic_measure(&f, &orbit, 100);
        let c = metric_u_entropy(&f, &mu, 6, 5).unwrap();
        assert_eq!(c.h_cond, 0.0);
    }

    #[test]
    fn too_few_particles() {
        let f = solenoid();
        let mu = dirac(&f, &[0.0, 0.6, 0.0], 10);
        assert!(matches!(metric_u_entropy(&f, &mu, 6, 5), Err(Error::InsufficientConditionals(_))));
    }
}
