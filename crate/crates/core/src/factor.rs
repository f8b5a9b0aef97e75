//! Semiconjugacies onto the hyperbolic factor: identity for linear maps, the
//! Franks series for derived-from-Anosov maps, backward-itinerary matching for
//! solenoid-type skew products, and the circle conjugacy of the base.

use std::io::Write;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::linalg::{torus_dist, wrap01};
use crate::systems::{CircleMap, SystemKind, SystemModel, TrigPoly2, CONJ_DEPTH};
use crate::toral::{build_markov_structure, MarkovInput, MarkovStructure};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum SemiConjugacyKind {
    Identity,
    SkewItinerary,
    FranksSeries,
    CircleConjugacy,
}

/// Reference solenoid `(u, y) ↦ (k u, a y + b(u))` that skew products are
/// projected onto.
#[derive(Debug, Clone, Serialize)]
pub struct ReferenceSolenoid {
    pub k: u32,
    pub a: f64,
    pub b: TrigPoly2,
}

impl ReferenceSolenoid {
    pub fn apply(&self, p: &[f64]) -> Vec<f64> {
        let b = self.b.eval(p[0]);
        vec![wrap01(self.k as f64 * p[0]), self.a * p[1] + b[0], self.a * p[2] + b[1]]
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct SemiConjugacy {
    pub kind: SemiConjugacyKind,
    pub tolerance: f64,
    pub depth: usize,
    /// Contraction rate of the series or itinerary tail.
    pub rate: f64,
    pub reference: Option<ReferenceSolenoid>,
    /// Eigen-frame of A (columns) and its inverse, for the Franks series.
    #[serde(skip)]
    frame: Option<(DMatrix<f64>, DMatrix<f64>)>,
    #[serde(skip)]
    eigenvalues: Vec<f64>,
}

/// Maximum backward or forward orbit needed by `project`.
pub struct OrbitWindow<'a> {
    /// `x, f(x), f²(x), …`
    pub forward: &'a [Vec<f64>],
    /// `f⁻¹(x), f⁻²(x), …`
    pub backward: &'a [Vec<f64>],
}

impl SemiConjugacy {
    pub fn identity() -> Self {
        SemiConjugacy {
            kind: SemiConjugacyKind::Identity,
            tolerance: 0.0,
            depth: 0,
            rate: 0.0,
            reference: None,
            frame: None,
            eigenvalues: Vec::new(),
        }
    }

    /// Number of backward (and forward) steps `project` needs.
    pub fn orbit_depth(&self) -> usize {
        self.depth
    }

    /// π(x) given the orbit window around x.
    pub fn project_with(&self, model: &SystemModel, x: &[f64], w: &OrbitWindow<'_>) -> Vec<f64> {
        match self.kind {
            SemiConjugacyKind::Identity => x.to_vec(),
            SemiConjugacyKind::CircleConjugacy => {
                let s = model.skew().expect("skew product");
                let mut out = x.to_vec();
                out[0] = s.base.conjugacy(x[0], CONJ_DEPTH);
                out
            }
            SemiConjugacyKind::FranksSeries => {
                let t = model.torus().expect("torus map");
                let (frame, inv) = self.frame.as_ref().expect("frame");
                let d = t.dim();
                let mut u = vec![0.0; d];
                // Unstable components: Σ λ^{-(n+1)} δ(fⁿx).
                // Stable components: −Σ λ^{n-1} δ(f⁻ⁿx).
                let mut coeffs = vec![0.0; d];
                for i in 0..d {
                    let lam = self.eigenvalues[i];
                    if lam.abs() > 1.0 {
                        let mut s = 0.0;
                        let mut p = 1.0 / lam;
                        for y in w.forward.iter().take(self.depth) {
                            let c = inv * DVector::from_vec(t.displacement(y));
                            s += p * c[i];
                            p /= lam;
                        }
                        coeffs[i] = s;
                    } else {
                        let mut s = 0.0;
                        let mut p = 1.0;
                        for y in w.backward.iter().take(self.depth) {
                            let c = inv * DVector::from_vec(t.displacement(y));
                            s -= p * c[i];
                            p *= lam;
                        }
                        coeffs[i] = s;
                    }
                }
                let disp = frame * DVector::from_vec(coeffs);
                for i in 0..d {
                    u[i] = wrap01(x[i] + disp[i]);
                }
                u
            }
            SemiConjugacyKind::SkewItinerary => {
                let s = model.skew().expect("skew product");
                let r = self.reference.as_ref().expect("reference solenoid");
                let u0 = s.base.conjugacy(x[0], CONJ_DEPTH);
                // Backward itinerary of the base in conjugated coordinates.
                let mut y = [0.0, 0.0];
                let mut p = 1.0;
                let mut u = u0;
                let mut prev_theta = x[0];
                for z in w.backward.iter().take(self.depth) {
                    let d = branch_digit(&s.base, z[0], prev_theta);
                    u = (u + d as f64) / r.k as f64;
                    let b = r.b.eval(u);
                    y[0] += p * b[0];
                    y[1] += p * b[1];
                    p *= r.a;
                    prev_theta = z[0];
                }
                vec![u0, y[0], y[1]]
            }
        }
    }

    /// π(x), computing the orbit window with the model.
    pub fn project(&self, model: &SystemModel, x: &[f64]) -> Result<Vec<f64>> {
        let (fwd, bwd) = self.orbit_window(model, x)?;
        Ok(self.project_with(model, x, &OrbitWindow { forward: &fwd, backward: &bwd }))
    }

    pub fn orbit_window(&self, model: &SystemModel, x: &[f64]) -> Result<(Vec<Vec<f64>>, Vec<Vec<f64>>)> {
        let needs_forward = self.kind == SemiConjugacyKind::FranksSeries;
        let needs_backward = matches!(self.kind, SemiConjugacyKind::FranksSeries | SemiConjugacyKind::SkewItinerary);
        let mut fwd = Vec::new();
        if needs_forward {
            let mut y = x.to_vec();
            for _ in 0..self.depth {
                fwd.push(y.clone());
                y = model.map(&y);
            }
        }
        let bwd = if needs_backward { backward_orbit(model, x, self.depth)? } else { Vec::new() };
        Ok((fwd, bwd))
    }

    /// Target dynamics on the factor.
    pub fn factor_map(&self, model: &SystemModel, p: &[f64]) -> Vec<f64> {
        match self.kind {
            SemiConjugacyKind::Identity | SemiConjugacyKind::FranksSeries => {
                let t = model.torus().expect("torus map");
                t.auto.apply(p).into_iter().map(wrap01).collect()
            }
            SemiConjugacyKind::CircleConjugacy => {
                let s = model.skew().expect("skew");
                let mut q = model.map(&{
                    let mut y = p.to_vec();
                    y[0] = s.base.conjugacy_inverse(p[0], CONJ_DEPTH);
                    y
                });
                q[0] = s.base.conjugacy(q[0], CONJ_DEPTH);
                q
            }
            SemiConjugacyKind::SkewItinerary => self.reference.as_ref().expect("reference").apply(p),
        }
    }

    /// sup ‖π∘f − F∘π‖ over the given points, using a shared orbit so that π(f x)
    /// and π(x) see the same backward history.
    pub fn residual(&self, model: &SystemModel, points: &[Vec<f64>]) -> Result<f64> {
        let results = crate::par::map(points, |x| -> Result<f64> {
            let (fwd, bwd) = self.orbit_window(model, x)?;
            let fx = model.map(x);
            let pi_x = self.project_with(model, x, &OrbitWindow { forward: &fwd, backward: &bwd });
            let mut fwd1: Vec<Vec<f64>> = fwd.iter().skip(1).cloned().collect();
            if self.kind == SemiConjugacyKind::FranksSeries {
                let last = fwd.last().map(|y| model.map(y)).unwrap_or_else(|| fx.clone());
                fwd1.push(last);
            }
            let mut bwd1 = vec![x.clone()];
            bwd1.extend(bwd.iter().cloned());
            let pi_fx = self.project_with(model, &fx, &OrbitWindow { forward: &fwd1, backward: &bwd1 });
            let target = self.factor_map(model, &pi_x);
            Ok(self.factor_distance(model, &pi_fx, &target))
        });
        let mut worst: f64 = 0.0;
        for r in results {
            worst = worst.max(r?);
        }
        Ok(worst)
    }

    fn factor_distance(&self, model: &SystemModel, a: &[f64], b: &[f64]) -> f64 {
        match self.kind {
            SemiConjugacyKind::Identity | SemiConjugacyKind::FranksSeries => torus_dist(a, b),
            _ => model.distance(a, b),
        }
    }

    /// Copy with a different truncation depth.
    pub fn with_depth(&self, depth: usize) -> Self {
        SemiConjugacy { depth, ..self.clone() }
    }

    /// Samples the displacement π(x) − x on a regular periodic grid.
    pub fn displacement_grid(&self, model: &SystemModel, n: usize) -> Result<DisplacementGrid> {
        let t = model.torus().ok_or_else(|| Error::InvalidInput("grid export needs a torus map".into()))?;
        let d = t.dim();
        let total = n.pow(d as u32);
        let values = crate::par::map_range(total, |idx| -> Result<Vec<f64>> {
            let x = grid_point(idx, n, d);
            let p = self.project(model, &x)?;
            Ok((0..d).map(|i| crate::linalg::wrap_centered(p[i] - x[i])).collect())
        });
        let mut data = Vec::with_capacity(total * d);
        for v in values {
            data.extend(v?);
        }
        Ok(DisplacementGrid { n, dim: d, data, kind: self.kind, tolerance: self.tolerance, depth: self.depth })
    }
}

fn grid_point(idx: usize, n: usize, d: usize) -> Vec<f64> {
    let mut x = vec![0.0; d];
    let mut r = idx;
    for c in (0..d).rev() {
        x[c] = (r % n) as f64 / n as f64;
        r /= n;
    }
    x
}

/// Inverse-branch digit `d` with `z = β⁻¹_d(θ)`.
fn branch_digit(base: &CircleMap, z: f64, _theta: f64) -> u32 {
    base.digit(z)
}

/// `f⁻¹(x), …, f⁻ⁿ(x)`.
pub fn backward_orbit(model: &SystemModel, x: &[f64], n: usize) -> Result<Vec<Vec<f64>>> {
    let mut out = Vec::with_capacity(n);
    let mut y = x.to_vec();
    for _ in 0..n {
        y = model.inverse_on_image(&y)?;
        if model.is_embedding() && y[1].hypot(y[2]) > 1.0 + 1e-9 {
            return Err(Error::NotOnAttractor(format!("backward orbit of {x:?} leaves the disk")));
        }
        out.push(y.clone());
    }
    Ok(out)
}

/// Franks semiconjugacy of a derived-from-Anosov map onto its linear part.
pub fn franks_semiconjugacy(model: &SystemModel, tol: f64) -> Result<SemiConjugacy> {
    let t = model.torus().ok_or_else(|| Error::InvalidInput("Franks series needs a torus map".into()))?;
    let auto = &t.auto;
    let mut eig = auto.unstable_eigenvalues.clone();
    eig.extend(auto.stable_eigenvalues.iter().cloned());
    let weakest_stable = auto.stable_eigenvalues.iter().map(|l| l.abs()).fold(0.0, f64::max);
    let weakest_unstable = auto.unstable_eigenvalues.iter().map(|l| l.abs()).fold(f64::INFINITY, f64::min);
    let rate = weakest_stable.max(1.0 / weakest_unstable);
    if rate >= 1.0 {
        return Err(Error::NoConvergence { rate });
    }
    let frame = auto.eigen_frame();
    let inv = frame.clone().try_inverse().ok_or(Error::NoConvergence { rate })?;
    let depth = if t.amplitude == 0.0 { 0 } else { ((tol * (1.0 - rate)).ln() / rate.ln()).ceil() as usize };
    let kind = if t.amplitude == 0.0 { SemiConjugacyKind::Identity } else { SemiConjugacyKind::FranksSeries };
    let sc = SemiConjugacy {
        kind,
        tolerance: tol,
        depth,
        rate,
        reference: None,
        frame: Some((frame, inv)),
        eigenvalues: eig,
    };
    if kind == SemiConjugacyKind::FranksSeries {
        // The series needs an invertible map; probe a few points.
        let mut rng = <rand_chacha::ChaCha8Rng as rand::SeedableRng>::seed_from_u64(17);
        for _ in 0..16 {
            let x = model.random_state(&mut rng);
            let y = model.inverse_on_image(&x).map_err(|_| Error::NoConvergence { rate })?;
            if torus_dist(&model.map(&y), &x) > 1e-9 {
                return Err(Error::NoConvergence { rate });
            }
        }
    }
    Ok(sc)
}

/// Projection of a solenoid-type skew product onto a reference linear solenoid
/// along backward base itineraries.
pub fn skew_semiconjugacy(model: &SystemModel, reference: ReferenceSolenoid, depth: usize) -> Result<SemiConjugacy> {
    let s = model.skew().ok_or_else(|| Error::InvalidInput("itinerary projection needs a skew product".into()))?;
    if s.base.degree() != reference.k {
        return Err(Error::IncompatibleSystems(
            format!("base degree {}", s.base.degree()),
            format!("reference degree {}", reference.k),
        ));
    }
    Ok(SemiConjugacy {
        kind: SemiConjugacyKind::SkewItinerary,
        tolerance: reference.a.powi(depth as i32) * 2.0,
        depth,
        rate: reference.a,
        reference: Some(reference),
        frame: None,
        eigenvalues: Vec::new(),
    })
}

/// Conjugacy of an expanding circle map to `u ↦ k u`.
pub fn circle_conjugacy(base: &CircleMap) -> Result<SemiConjugacy> {
    let m = base.min_derivative();
    if m <= 1.0 {
        return Err(Error::NotExpanding { min_derivative: m });
    }
    let k = base.degree() as f64;
    Ok(SemiConjugacy {
        kind: SemiConjugacyKind::CircleConjugacy,
        tolerance: k.powi(1 - CONJ_DEPTH as i32),
        depth: CONJ_DEPTH,
        rate: 1.0 / k,
        reference: None,
        frame: None,
        eigenvalues: Vec::new(),
    })
}

/// Displacement field π(x) − x sampled on an `n^d` periodic grid.
#[derive(Debug, Clone, Serialize)]
pub struct DisplacementGrid {
    pub n: usize,
    pub dim: usize,
    /// Row-major, `dim` components per node.
    #[serde(skip)]
    pub data: Vec<f64>,
    pub kind: SemiConjugacyKind,
    pub tolerance: f64,
    pub depth: usize,
}

impl DisplacementGrid {
    /// Multilinear interpolation with periodic wrap.
    pub fn interpolate(&self, x: &[f64]) -> Vec<f64> {
        let d = self.dim;
        let n = self.n;
        let mut base = vec![0usize; d];
        let mut frac = vec![0.0; d];
        for c in 0..d {
            let s = wrap01(x[c]) * n as f64;
            let i = s.floor();
            base[c] = (i as usize) % n;
            frac[c] = s - i;
        }
        let mut out = vec![0.0; d];
        for corner in 0..(1usize << d) {
            let mut w = 1.0;
            let mut idx = 0usize;
            for c in 0..d {
                let bit = (corner >> (d - 1 - c)) & 1;
                w *= if bit == 1 { frac[c] } else { 1.0 - frac[c] };
                idx = idx * n + (base[c] + bit) % n;
            }
            for (o, v) in out.iter_mut().zip(&self.data[idx * d..idx * d + d]) {
                *o += w * v;
            }
        }
        out
    }

    pub fn sup_norm(&self) -> f64 {
        self.data.chunks(self.dim).map(crate::linalg::norm).fold(0.0, f64::max)
    }

    /// Writes `<stem>.bin` (little-endian f64) and `<stem>.json`.
    pub fn export(&self, dir: &Path, stem: &str) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        let mut f = std::fs::File::create(dir.join(format!("{stem}.bin")))?;
        let mut buf = Vec::with_capacity(self.data.len() * 8);
        for v in &self.data {
            buf.extend_from_slice(&v.to_le_bytes());
        }
        f.write_all(&buf)?;
        let meta = serde_json::json!({
            "shape": vec![self.n; self.dim].into_iter().chain([self.dim]).collect::<Vec<_>>(),
            "dtype": "f64-le",
            "kind": self.kind,
            "tolerance": self.tolerance,
            "depth": self.depth,
            "interpolation_order": 1,
        });
        std::fs::write(dir.join(format!("{stem}.json")), serde_json::to_string_pretty(&meta)?)?;
        Ok(())
    }
}

/// System, Markov coding of its factor, and the projection onto it.
#[derive(Debug, Clone)]
pub struct Factor {
    pub model: SystemModel,
    /// Absent for T³, which is coded by a box cover instead.
    pub markov: Option<MarkovStructure>,
    pub pi: SemiConjugacy,
    pub base_entropy: f64,
}

impl Factor {
    pub fn new(model: &SystemModel, tol: f64) -> Result<Self> {
        match &model.kind {
            SystemKind::Skew(s) => {
                let pi = circle_conjugacy(&s.base)?;
                let markov = build_markov_structure(MarkovInput::Circle(s.base.degree()))?;
                Ok(Factor {
                    model: model.clone(),
                    markov: Some(markov),
                    pi,
                    base_entropy: (s.base.degree() as f64).ln(),
                })
            }
            SystemKind::Torus(t) => {
                let pi = franks_semiconjugacy(model, tol)?;
                let markov = match t.dim() {
                    2 => Some(build_markov_structure(MarkovInput::Automorphism(&t.auto))?),
                    _ => None,
                };
                Ok(Factor { model: model.clone(), markov, pi, base_entropy: t.auto.base_entropy })
            }
        }
    }

    /// Factor point used for Markov coding: conjugated angle for skew
    /// products, π(x) for torus maps.
    pub fn base_point(&self, x: &[f64]) -> Result<Vec<f64>> {
        match self.pi.kind {
            SemiConjugacyKind::CircleConjugacy => Ok(vec![self.pi.project_with(
                &self.model,
                x,
                &OrbitWindow { forward: &[], backward: &[] },
            )[0]]),
            _ => self.pi.project(&self.model, x),
        }
    }

    /// Factor coordinate along the unstable direction, relative to `origin`
    /// (a factor point), as a signed length.
    pub fn unstable_offset(&self, p: &[f64], origin: &[f64]) -> f64 {
        match &self.model.kind {
            SystemKind::Skew(_) => p[0] - origin[0],
            SystemKind::Torus(t) => {
                let d: Vec<f64> = p.iter().zip(origin).map(|(a, b)| crate::linalg::wrap_centered(a - b)).collect();
                let inv = t.auto.eigen_frame().try_inverse().expect("frame");
                (inv * DVector::from_vec(d))[0]
            }
        }
    }

    /// Coding symbol of a state.
    pub fn symbol(&self, x: &[f64]) -> Option<u32> {
        let regions = self.model.num_fiber_regions();
        match &self.markov {
            Some(ms) => {
                let p = match self.pi.kind {
                    SemiConjugacyKind::Identity => x.to_vec(),
                    SemiConjugacyKind::CircleConjugacy => vec![self.model.skew()?.base.conjugacy(x[0], CONJ_DEPTH)],
                    _ => self.pi.project(&self.model, x).ok()?,
                };
                let cell = ms.cell_of(&p)? as u32;
                Some(cell * regions + self.model.fiber_region(x))
            }
            None => {
                // 2×…×2 box cover of T^d.
                let mut s = 0u32;
                for &c in x {
                    s = s * 2 + (wrap01(c) >= 0.5) as u32;
                }
                Some(s)
            }
        }
    }

    pub fn num_symbols(&self) -> u32 {
        match &self.markov {
            Some(ms) => ms.num_cells() as u32 * self.model.num_fiber_regions(),
            None => 1 << self.model.state_dim(),
        }
    }
}

/// Random sample of attractor points: uniform states iterated `burn` times.
pub fn attractor_sample<R: Rng>(model: &SystemModel, n: usize, burn: usize, rng: &mut R) -> Vec<Vec<f64>> {
    (0..n).map(|_| model.iterate(&model.random_state(rng), burn)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::systems::{default_da_matrix, make_derived_anosov, make_modified_solenoid, make_solenoid, ModifiedParams};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn linear_map_has_identity_projection() {
        let m = make_derived_anosov(&default_da_matrix(), 0.0).unwrap();
        let pi = franks_semiconjugacy(&m, 1e-6).unwrap();
        assert_eq!(pi.kind, SemiConjugacyKind::Identity);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let pts: Vec<Vec<f64>> = (0..100).map(|_| m.random_state(&mut rng)).collect();
        assert_eq!(pi.residual(&m, &pts).unwrap(), 0.0);
    }

    #[test]
    fn franks_depth_and_residual() {
        let m = make_derived_anosov(&default_da_matrix(), 0.05).unwrap();
        let pi = franks_semiconjugacy(&m, 1e-6).unwrap();
        let r = pi.rate;
        let expected = ((1e-6 * (1.0 - r)).ln() / r.ln()).ceil() as usize;
        assert_eq!(pi.depth, expected);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let pts: Vec<Vec<f64>> = (0..500).map(|_| m.random_state(&mut rng)).collect();
        let res = pi.residual(&m, &pts).unwrap();
        assert!(res < 1e-6, "{res}");
        let deeper = pi.with_depth(pi.depth + 1).residual(&m, &pts).unwrap();
        assert!(deeper <= res * r / 0.9, "{deeper} vs {res}");
    }

    #[test]
    fn franks_fails_for_non_invertible_map() {
        let m = crate::systems::make_derived_anosov_unchecked(&default_da_matrix(), 0.9).unwrap();
        assert!(matches!(franks_semiconjugacy(&m, 1e-6), Err(Error::NoConvergence { .. })));
    }

    #[test]
    fn solenoid_projects_to_itself() {
        let b = TrigPoly2::circle(0.3);
        let m = make_solenoid(3, 0.5, b.clone()).unwrap();
        let pi = skew_semiconjugacy(&m, ReferenceSolenoid { k: 3, a: 0.5, b }, 40).unwrap();
        assert!((pi.tolerance - 2.0 * 0.5f64.powi(40)).abs() < 1e-25);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for x in attractor_sample(&m, 50, 40, &mut rng) {
            let p = pi.project(&m, &x).unwrap();
            assert!(m.distance(&p, &x) < 1e-10, "{p:?} {x:?}");
        }
    }

    #[test]
    fn modified_solenoid_projection_residual() {
        let (m, _) = make_modified_solenoid(&ModifiedParams::default()).unwrap();
        let pi = skew_semiconjugacy(&m, ReferenceSolenoid { k: 3, a: 0.5, b: TrigPoly2::circle(0.3) }, 40).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let pts = attractor_sample(&m, 200, 40, &mut rng);
        let res = pi.residual(&m, &pts).unwrap();
        assert!(res < 1e-10, "{res}");
    }

    #[test]
    fn grid_interpolation_is_close() {
        let m = make_derived_anosov(&default_da_matrix(), 0.05).unwrap();
        let pi = franks_semiconjugacy(&m, 1e-6).unwrap();
        let g = pi.displacement_grid(&m, 32).unwrap();
        assert!(g.sup_norm() > 0.0 && g.sup_norm() < 0.5);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..20 {
            let x = m.random_state(&mut rng);
            let p = pi.project(&m, &x).unwrap();
            let direct: Vec<f64> = (0..3).map(|i| crate::linalg::wrap_centered(p[i] - x[i])).collect();
            let interp = g.interpolate(&x);
            let err: f64 = direct.iter().zip(&interp).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
            // π is only Hölder, so off-node error decays slowly with n.
            assert!(err < 0.05, "{err}");
        }
        for idx in [0usize, 77, 1000, 32767] {
            let x = grid_point(idx, 32, 3);
            let p = pi.project(&m, &x).unwrap();
            let interp = g.interpolate(&x);
            for i in 0..3 {
                assert!((crate::linalg::wrap_centered(p[i] - x[i]) - interp[i]).abs() < 1e-12);
            }
        }
        let dir = tempfile::tempdir().unwrap();
        g.export(dir.path(), "pi").unwrap();
        let bytes = std::fs::read(dir.path().join("pi.bin")).unwrap();
        assert_eq!(bytes.len(), 32 * 32 * 32 * 3 * 8);
    }

    #[test]
    fn factor_symbols() {
        let m = make_solenoid(3, 0.5, TrigPoly2::circle(0.3)).unwrap();
        let f = Factor::new(&m, 1e-8).unwrap();
        assert_eq!(f.num_symbols(), 3);
        assert_eq!(f.symbol(&[0.1, 0.0, 0.0]), Some(0));
        assert_eq!(f.symbol(&[0.9, 0.0, 0.0]), Some(2));
        let t = make_derived_anosov(&default_da_matrix(), 0.05).unwrap();
        let ft = Factor::new(&t, 1e-6).unwrap();
        assert_eq!(ft.num_symbols(), 8);
    }
}
