//! Concrete partially hyperbolic systems: skew products over expanding circle
//! maps (solenoids and variants) and maps of the torus isotopic to a
//! hyperbolic automorphism.

pub mod circle;
pub mod fiber;
pub mod torus;

use nalgebra::DMatrix;
use rand::Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::linalg::{circle_diff, wrap01};
use crate::toral::{hyperbolic_split, ToralAutomorphism};

pub use circle::{BetaProfile, CircleMap};
pub use fiber::{FiberMap, SaddleWindow, SlopeRamp, TrigPoly2, TrigTerm};
pub use torus::TorusMap;

/// Digits of precision used for the circle conjugacy.
pub const CONJ_DEPTH: usize = 40;

/// `(θ, x) ↦ (β(θ), h_θ(x))` on the solid torus S¹ × D.
#[derive(Debug, Clone, Serialize)]
pub struct SkewProduct {
    pub base: CircleMap,
    pub fiber: FiberMap,
}

impl SkewProduct {
    pub fn apply(&self, s: &[f64]) -> Vec<f64> {
        let theta = wrap01(s[0]);
        let x = self.fiber.apply(theta, [s[1], s[2]]);
        vec![self.base.apply(theta), x[0], x[1]]
    }

    pub fn derivative(&self, s: &[f64]) -> DMatrix<f64> {
        let theta = wrap01(s[0]);
        let x = [s[1], s[2]];
        let dx = self.fiber.dx(theta, x);
        let dt = self.fiber.dtheta(theta, x);
        DMatrix::from_row_slice(
            3,
            3,
            &[self.base.derivative(theta), 0.0, 0.0, dt[0], dx[0][0], dx[0][1], dt[1], dx[1][0], dx[1][1]],
        )
    }

    /// Candidate preimages of `s` with fiber preimage inside the disk.
    pub fn preimage_candidates(&self, s: &[f64]) -> Vec<Vec<f64>> {
        let y = [s[1], s[2]];
        self.base
            .preimages(s[0])
            .into_iter()
            .filter_map(|t| {
                let t = wrap01(t);
                self.fiber.solve(t, y, y).and_then(|x| (x[0].hypot(x[1]) <= 1.0 + 1e-9).then(|| vec![t, x[0], x[1]]))
            })
            .collect()
    }

    /// Number of backward steps (up to `limit`) for which some backward
    /// branch of `s` stays in the disk.
    fn backward_depth(&self, s: &[f64], limit: usize) -> usize {
        if limit == 0 {
            return 0;
        }
        let mut best = 0;
        for c in self.preimage_candidates(s) {
            let d = 1 + self.backward_depth(&c, limit - 1);
            best = best.max(d);
            if best == limit {
                break;
            }
        }
        best
    }
}

#[derive(Debug, Clone, Serialize)]
pub enum SystemKind {
    Torus(TorusMap),
    Skew(SkewProduct),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Domain {
    /// T^d with periodic coordinates.
    Torus(usize),
    /// S¹ × closed unit disk.
    SolidTorus,
}

#[derive(Debug, Clone, Serialize)]
pub struct SystemModel {
    pub name: String,
    pub kind: SystemKind,
    /// Aperture `c` of the unstable cone `{|v_cs| ≤ c |v_u|}` in adapted
    /// coordinates.
    pub cone_aperture: f64,
}

impl SystemModel {
    pub fn domain(&self) -> Domain {
        match &self.kind {
            SystemKind::Torus(t) => Domain::Torus(t.dim()),
            SystemKind::Skew(_) => Domain::SolidTorus,
        }
    }

    pub fn state_dim(&self) -> usize {
        match &self.kind {
            SystemKind::Torus(t) => t.dim(),
            SystemKind::Skew(_) => 3,
        }
    }

    pub fn uu_dim(&self) -> usize {
        1
    }

    pub fn cs_dim(&self) -> usize {
        self.state_dim() - 1
    }

    /// Embeddings have an inverse only on their image.
    pub fn is_embedding(&self) -> bool {
        matches!(self.kind, SystemKind::Skew(_))
    }

    pub fn map(&self, x: &[f64]) -> Vec<f64> {
        match &self.kind {
            SystemKind::Torus(t) => t.apply(x),
            SystemKind::Skew(s) => s.apply(x),
        }
    }

    /// `map` with the base advanced as u ↦ k u in the conjugated angle.
    /// Agrees with `map` up to round-off, but long floating-point orbits
    /// then equidistribute for the base measure of maximal entropy instead
    /// of for Lebesgue, which matters once β is not linear.
    pub fn step(&self, x: &[f64]) -> Vec<f64> {
        match &self.kind {
            SystemKind::Skew(s) if matches!(s.base, CircleMap::Profile(_)) => {
                let theta = wrap01(x[0]);
                let y = s.fiber.apply(theta, [x[1], x[2]]);
                let u = wrap01(s.base.degree() as f64 * s.base.conjugacy(theta, CONJ_DEPTH));
                vec![s.base.conjugacy_inverse(u, CONJ_DEPTH), y[0], y[1]]
            }
            _ => self.map(x),
        }
    }

    pub fn iterate(&self, x: &[f64], n: usize) -> Vec<f64> {
        let mut y = x.to_vec();
        for _ in 0..n {
            y = self.map(&y);
        }
        y
    }

    /// Preimage of a point of the image; for embeddings, the branch whose
    /// backward orbit survives longest inside the disk.
    pub fn inverse_on_image(&self, y: &[f64]) -> Result<Vec<f64>> {
        match &self.kind {
            SystemKind::Torus(t) => t.inverse(y),
            SystemKind::Skew(s) => {
                let cands = s.preimage_candidates(y);
                if cands.is_empty() {
                    return Err(Error::NotOnAttractor(format!("{y:?} has no preimage in the disk")));
                }
                if cands.len() == 1 {
                    return Ok(cands.into_iter().next().unwrap());
                }
                let mut best: Option<(usize, f64, Vec<f64>)> = None;
                for c in cands {
                    let depth = s.backward_depth(&c, 24);
                    let r = c[1].hypot(c[2]);
                    let better = match &best {
                        None => true,
                        Some((d, rr, _)) => depth > *d || (depth == *d && r < *rr),
                    };
                    if better {
                        best = Some((depth, r, c));
                    }
                }
                Ok(best.unwrap().2)
            }
        }
    }

    pub fn derivative(&self, x: &[f64]) -> DMatrix<f64> {
        match &self.kind {
            SystemKind::Torus(t) => t.derivative(x),
            SystemKind::Skew(s) => s.derivative(x),
        }
    }

    /// `Df|E^cs` in an orthonormal basis of the (exactly invariant) center-
    /// stable bundle: vertical fibers for skew products, the stable subspace
    /// of `A` for torus maps.
    pub fn cs_block(&self, x: &[f64]) -> DMatrix<f64> {
        match &self.kind {
            SystemKind::Torus(t) => t.cs_block(x),
            SystemKind::Skew(s) => {
                let m = s.fiber.dx(wrap01(x[0]), [x[1], x[2]]);
                DMatrix::from_row_slice(2, 2, &[m[0][0], m[0][1], m[1][0], m[1][1]])
            }
        }
    }

    /// Expansion along E^uu modulo E^cs.
    pub fn uu_rate(&self, x: &[f64]) -> f64 {
        match &self.kind {
            SystemKind::Torus(t) => t.uu_rate(),
            SystemKind::Skew(s) => s.base.derivative(x[0]),
        }
    }

    /// Point of the base (circle angle or torus point).
    pub fn base_projection(&self, x: &[f64]) -> Vec<f64> {
        match &self.kind {
            SystemKind::Torus(_) => x.to_vec(),
            SystemKind::Skew(_) => vec![wrap01(x[0])],
        }
    }

    /// Base dynamics acting on `base_projection`.
    pub fn base_map(&self, p: &[f64]) -> Vec<f64> {
        match &self.kind {
            SystemKind::Torus(t) => t.apply(p),
            SystemKind::Skew(s) => vec![s.base.apply(p[0])],
        }
    }

    /// Which coordinates are periodic.
    pub fn periodic_coords(&self) -> Vec<bool> {
        match &self.kind {
            SystemKind::Torus(t) => vec![true; t.dim()],
            SystemKind::Skew(_) => vec![true, false, false],
        }
    }

    /// `a − b` with periodic coordinates wrapped to [-1/2, 1/2).
    pub fn difference(&self, a: &[f64], b: &[f64]) -> Vec<f64> {
        self.periodic_coords()
            .iter()
            .enumerate()
            .map(|(i, &p)| if p { circle_diff(b[i], a[i]) } else { a[i] - b[i] })
            .collect()
    }

    pub fn distance(&self, a: &[f64], b: &[f64]) -> f64 {
        crate::linalg::norm(&self.difference(a, b))
    }

    /// Unit vector along which unstable leaves are seeded.
    pub fn unstable_seed_direction(&self) -> Vec<f64> {
        match &self.kind {
            SystemKind::Torus(t) => {
                let v = &t.auto.unstable_basis[0];
                let n = crate::linalg::norm(v);
                v.iter().map(|c| c / n).collect()
            }
            SystemKind::Skew(_) => vec![1.0, 0.0, 0.0],
        }
    }

    /// Uniform point of the domain.
    pub fn random_state<R: Rng>(&self, rng: &mut R) -> Vec<f64> {
        match &self.kind {
            SystemKind::Torus(t) => (0..t.dim()).map(|_| rng.gen::<f64>()).collect(),
            SystemKind::Skew(_) => {
                let theta: f64 = rng.gen();
                let r = rng.gen::<f64>().sqrt();
                let phi = rng.gen::<f64>() * std::f64::consts::TAU;
                vec![theta, r * phi.cos(), r * phi.sin()]
            }
        }
    }

    /// Fiber region label for the coding partition.
    pub fn fiber_region(&self, x: &[f64]) -> u32 {
        match &self.kind {
            SystemKind::Skew(s) => s.fiber.region([x[1], x[2]]),
            SystemKind::Torus(_) => 0,
        }
    }

    pub fn num_fiber_regions(&self) -> u32 {
        match &self.kind {
            SystemKind::Skew(s) => s.fiber.num_regions(),
            SystemKind::Torus(_) => 1,
        }
    }

    pub fn skew(&self) -> Option<&SkewProduct> {
        match &self.kind {
            SystemKind::Skew(s) => Some(s),
            _ => None,
        }
    }

    pub fn torus(&self) -> Option<&TorusMap> {
        match &self.kind {
            SystemKind::Torus(t) => Some(t),
            _ => None,
        }
    }

    /// Vector in adapted coordinates: (uu component, cs components scaled by
    /// 1/aperture). The unstable cone is `{|cs| ≤ |uu|}` there.
    fn adapted(&self, v: &[f64]) -> (f64, Vec<f64>) {
        match &self.kind {
            SystemKind::Skew(_) => (v[0], vec![v[1] / self.cone_aperture, v[2] / self.cone_aperture]),
            SystemKind::Torus(t) => {
                let frame = t.auto.eigen_frame();
                let inv = frame.try_inverse().expect("eigen frame invertible");
                let c = inv * nalgebra::DVector::from_column_slice(v);
                (c[0], c.iter().skip(1).map(|x| x / self.cone_aperture).collect())
            }
        }
    }

    fn from_adapted(&self, u: f64, cs: &[f64]) -> Vec<f64> {
        match &self.kind {
            SystemKind::Skew(_) => vec![u, cs[0] * self.cone_aperture, cs[1] * self.cone_aperture],
            SystemKind::Torus(t) => {
                let frame = t.auto.eigen_frame();
                let mut c = vec![u];
                c.extend(cs.iter().map(|x| x * self.cone_aperture));
                (frame * nalgebra::DVector::from_vec(c)).iter().cloned().collect()
            }
        }
    }

    /// Unstable component and Euclidean size of the center-stable component
    /// of a tangent (or difference) vector.
    pub fn uu_cs_split(&self, v: &[f64]) -> (f64, f64) {
        let (u, cs) = self.adapted(v);
        (u, crate::linalg::norm(&cs) * self.cone_aperture)
    }

    /// Ratio |cs|/|uu| in adapted coordinates; < 1 inside the cone.
    pub fn cone_ratio(&self, v: &[f64]) -> f64 {
        let (u, cs) = self.adapted(v);
        crate::linalg::norm(&cs) / u.abs()
    }

    /// Unit tangent of a curve lies in the cone.
    pub fn in_cone(&self, v: &[f64]) -> bool {
        self.cone_ratio(v) <= 1.0 + 1e-9
    }
}

/// Outcome of the cone-field and domination checks.
#[derive(Debug, Clone, Serialize)]
pub struct ConeReport {
    pub samples: usize,
    /// Largest |cs|/|uu| of an image of a cone-boundary vector; < 1 means
    /// strict invariance.
    pub max_image_ratio: f64,
    /// Minimal expansion of cone vectors in the adapted norm.
    pub min_cone_expansion: f64,
    /// max ω(x) = 1 / (uu expansion at x).
    pub max_omega: f64,
    /// max ‖Df|cs‖·‖(Df|uu)^{-1}‖.
    pub max_domination_ratio: f64,
    pub witness: Option<(Vec<f64>, Vec<f64>)>,
    pub pass: bool,
}

/// Samples points (on the attractor for embeddings: uniform points iterated
/// forward) and boundary vectors of the unstable cone.
pub fn verify_partial_hyperbolicity<R: Rng>(model: &SystemModel, samples: usize, rng: &mut R) -> ConeReport {
    let cs = model.cs_dim();
    let mut max_ratio: f64 = 0.0;
    let mut min_exp = f64::INFINITY;
    let mut max_omega: f64 = 0.0;
    let mut max_dom: f64 = 0.0;
    let mut witness = None;
    let n_points = samples.div_ceil(8).max(1);
    for _ in 0..n_points {
        let x = model.random_state(rng);
        let df = model.derivative(&x);
        for _ in 0..8 {
            let mut dir: Vec<f64> = (0..cs).map(|_| rng.gen::<f64>() * 2.0 - 1.0).collect();
            let n = crate::linalg::norm(&dir).max(1e-300);
            dir.iter_mut().for_each(|c| *c /= n);
            let v = model.from_adapted(1.0, &dir);
            let w = &df * nalgebra::DVector::from_column_slice(&v);
            let w: Vec<f64> = w.iter().cloned().collect();
            let (wu, wcs) = model.adapted(&w);
            let ratio = crate::linalg::norm(&wcs) / wu.abs();
            if ratio > max_ratio {
                max_ratio = ratio;
                if ratio >= 1.0 {
                    witness = Some((x.clone(), v.clone()));
                }
            }
            // Adapted norm max(|u|, |cs|): cone vectors have norm |u| = 1.
            min_exp = min_exp.min(wu.abs().max(crate::linalg::norm(&wcs)));
        }
        let uu = model.uu_rate(&x);
        max_omega = max_omega.max(1.0 / uu);
        let csn = crate::linalg::op_norm(&model.cs_block(&x));
        max_dom = max_dom.max(csn / uu);
    }
    let pass = max_ratio < 1.0 && max_omega < 1.0 && max_dom < 1.0;
    ConeReport {
        samples: n_points * 8,
        max_image_ratio: max_ratio,
        min_cone_expansion: min_exp,
        max_omega,
        max_domination_ratio: max_dom,
        witness,
        pass,
    }
}

/// Minimum over samples of the Jacobian of `Df` on E^uu ⊕ (one cs
/// direction), computed in the quotient: uu rate × smallest singular value
/// of the fiber derivative.
pub fn partial_volume_expansion<R: Rng>(model: &SystemModel, samples: usize, rng: &mut R) -> f64 {
    (0..samples)
        .map(|_| {
            let x = model.random_state(rng);
            let cs = model.cs_block(&x);
            let smin = cs.singular_values().iter().cloned().fold(f64::INFINITY, f64::min);
            model.uu_rate(&x) * smin
        })
        .fold(f64::INFINITY, f64::min)
}

/// Max deviation of `Df` from central finite differences over `samples`
/// random points.
pub fn derivative_check<R: Rng>(model: &SystemModel, samples: usize, rng: &mut R) -> f64 {
    let d = model.state_dim();
    let h = 1e-6;
    let mut worst: f64 = 0.0;
    for _ in 0..samples {
        let mut x = model.random_state(rng);
        if let SystemKind::Skew(_) = model.kind {
            // Keep fiber points away from the disk boundary.
            x[1] *= 0.9;
            x[2] *= 0.9;
        }
        let df = model.derivative(&x);
        for j in 0..d {
            let mut xp = x.clone();
            let mut xm = x.clone();
            xp[j] += h;
            xm[j] -= h;
            let diff = model.difference(&model.map(&xp), &model.map(&xm));
            for i in 0..d {
                let fd = diff[i] / (2.0 * h);
                worst = worst.max((fd - df[(i, j)]).abs() / df[(i, j)].abs().max(1.0));
            }
        }
    }
    worst
}

/// Smallest distance from the unit circle to the image of the boundary of
/// the disk, over `n` boundary points and a θ grid.
pub fn disk_margin(fiber: &FiberMap, n: usize) -> f64 {
    let mut worst = f64::INFINITY;
    for it in 0..256 {
        let theta = it as f64 / 256.0;
        for i in 0..n {
            let phi = std::f64::consts::TAU * i as f64 / n as f64;
            for r in [1.0, 0.5, 0.0] {
                let y = fiber.apply(theta, [r * phi.cos(), r * phi.sin()]);
                worst = worst.min(1.0 - y[0].hypot(y[1]));
            }
        }
    }
    worst
}

/// Required aperture for strict cone invariance of a skew product, with a
/// safety factor of 2.
fn skew_aperture(s: &SkewProduct) -> f64 {
    let mut c: f64 = 0.0;
    for it in 0..2048 {
        let theta = (it as f64 + 0.5) / 2048.0;
        let beta = s.base.derivative(theta);
        for i in 0..16 {
            let phi = std::f64::consts::TAU * i as f64 / 16.0;
            for r in [0.0, 0.5, 1.0] {
                let x = [r * phi.cos(), r * phi.sin()];
                let dt = s.fiber.dtheta(theta, x);
                let dx = fiber::norm2(&s.fiber.dx(theta, x));
                let gap = beta - dx;
                if gap <= 0.0 {
                    return f64::INFINITY;
                }
                c = c.max(dt[0].hypot(dt[1]) / gap);
            }
        }
    }
    (2.0 * c).max(0.1)
}

fn finish_skew(name: &str, s: SkewProduct) -> Result<SystemModel> {
    let margin = disk_margin(&s.fiber, 256);
    if margin <= 0.0 {
        return Err(Error::DomainEscape(format!("fiber image leaves the disk (margin {margin:.3})")));
    }
    let aperture = skew_aperture(&s);
    let aperture = if aperture.is_finite() { aperture } else { 1.0 };
    Ok(SystemModel { name: name.into(), kind: SystemKind::Skew(s), cone_aperture: aperture })
}

/// `(θ, x) ↦ (kθ mod 1, a x + b(θ))`.
pub fn make_solenoid(k: u32, a: f64, b: TrigPoly2) -> Result<SystemModel> {
    if k < 3 {
        return Err(Error::InvalidInput(format!("solenoid degree must be >= 3, got {k}")));
    }
    let sup = b.sup_norm();
    if a + sup >= 1.0 {
        return Err(Error::DomainEscape(format!("a + sup|b| = {:.3} >= 1", a + sup)));
    }
    if !(a > 1.0 / k as f64 && a < 1.0) {
        return Err(Error::InvalidInput(format!("contraction a = {a} outside (1/k, 1)")));
    }
    finish_skew("solenoid", SkewProduct { base: CircleMap::Times(k), fiber: FiberMap::Affine { a, alpha: 0.0, b } })
}

/// Parameters of the saddle-window family.
#[derive(Debug, Clone, Serialize)]
pub struct ModifiedParams {
    pub k: u32,
    pub a: f64,
    pub alpha: f64,
    pub eps: f64,
    pub beta: BetaSpec,
    pub saddle: SaddleSpec,
    pub b: TrigPoly2,
}

#[derive(Debug, Clone, Serialize)]
pub enum BetaSpec {
    Times,
    Profile { inner_slope: f64, inner_width: f64, ramp_width: f64 },
}

#[derive(Debug, Clone, Serialize)]
pub struct SaddleSpec {
    pub ku: f64,
    pub ks: f64,
    pub core: f64,
    pub ramp_end: f64,
    /// Path parameter beyond which ψ_t = φ; values > 1 leave the endpoints
    /// mismatched.
    pub t1: f64,
    /// When false the path is constant (ψ_t ≡ φ).
    pub active: bool,
}

impl Default for ModifiedParams {
    fn default() -> Self {
        ModifiedParams {
            k: 3,
            a: 0.5,
            alpha: 0.7,
            eps: 0.022,
            beta: BetaSpec::Profile { inner_slope: 4.5, inner_width: 0.05, ramp_width: 0.05 },
            saddle: SaddleSpec { ku: 4.0, ks: 0.3, core: 0.05, ramp_end: 0.15, t1: 0.8, active: true },
            b: TrigPoly2 {
                terms: vec![
                    TrigTerm { harmonic: 1, cos: [0.0, 0.0], sin: [0.1, 0.0] },
                    TrigTerm { harmonic: 2, cos: [0.0, 0.0], sin: [0.0, 0.1] },
                ],
            },
        }
    }
}

/// Data of the saddle-window family alongside the model.
#[derive(Debug, Clone, Serialize)]
pub struct FiberFamily {
    pub k: u32,
    pub a: f64,
    pub alpha: f64,
    pub eps: f64,
    /// max ‖Dψ_t‖ over a (t, x) grid.
    pub big_k: f64,
    pub beta_min_derivative: f64,
    /// min β' on the window [-ε, ε].
    pub beta_min_on_window: f64,
    pub nu_window: f64,
    /// ν_β([-ε,ε]) log K + (1 − ν_β([-ε,ε])) log a.
    pub integral_bound: f64,
    pub image_margin: f64,
    pub warnings: Vec<String>,
}

pub fn make_modified_solenoid(p: &ModifiedParams) -> Result<(SystemModel, FiberFamily)> {
    let base = match p.beta {
        BetaSpec::Times => CircleMap::Times(p.k),
        BetaSpec::Profile { inner_slope, inner_width, ramp_width } => {
            CircleMap::Profile(BetaProfile::new(p.k, inner_slope, inner_width, ramp_width)?)
        }
    };
    let min_d = base.min_derivative();
    if min_d <= 1.0 {
        return Err(Error::NotExpanding { min_derivative: min_d });
    }
    let s = &p.saddle;
    let window = SaddleWindow {
        a: p.a,
        alpha: p.alpha,
        saddle: SlopeRamp { s0: s.ku, s1: p.a, w0: s.core, w1: s.ramp_end },
        ks: s.ks,
        t1: if s.active { s.t1 } else { 0.0 },
        eps: p.eps,
        b: p.b.clone(),
    };
    // Endpoint check: ψ_{±1} must coincide with φ.
    let mut mismatch: f64 = 0.0;
    for i in 0..64 {
        let phi = std::f64::consts::TAU * i as f64 / 64.0;
        for r in [0.3, 1.0] {
            let x = [r * phi.cos(), r * phi.sin()];
            let phi_x = SaddleWindow { t1: 0.0, ..window.clone() }.psi(0.0, x);
            for t in [-1.0, 1.0] {
                let y = window.psi(t, x);
                mismatch = mismatch.max((y[0] - phi_x[0]).hypot(y[1] - phi_x[1]));
            }
        }
    }
    if mismatch > 1e-12 {
        return Err(Error::MismatchedEndpoints { mismatch });
    }
    let mut big_k: f64 = 0.0;
    for it in 0..=200 {
        let t = -1.0 + 2.0 * it as f64 / 200.0;
        for ix in 0..=40 {
            for iy in 0..=40 {
                let x = [-1.0 + ix as f64 / 20.0, -1.0 + iy as f64 / 20.0];
                if x[0].hypot(x[1]) <= 1.0 {
                    big_k = big_k.max(fiber::norm2(&window.psi_dx(t, x)));
                }
            }
        }
    }
    let mut beta_min_on_window = f64::INFINITY;
    for i in 0..=200 {
        let t = -p.eps + 2.0 * p.eps * i as f64 / 200.0;
        beta_min_on_window = beta_min_on_window.min(base.derivative(t));
    }
    let nu_window = base.nu_symmetric(p.eps, CONJ_DEPTH);
    let integral_bound = nu_window * big_k.ln() + (1.0 - nu_window) * p.a.ln();
    let mut warnings = Vec::new();
    if beta_min_on_window <= big_k {
        warnings.push(format!(
            "base derivative {beta_min_on_window:.3} on the window does not exceed K = {big_k:.3}; domination fails there"
        ));
    }
    let fiber = FiberMap::Saddle(window);
    let image_margin = disk_margin(&fiber, 256);
    let skew = SkewProduct { base, fiber };
    let model = finish_skew("modified_solenoid", skew)?;
    let family = FiberFamily {
        k: p.k,
        a: p.a,
        alpha: p.alpha,
        eps: p.eps,
        big_k,
        beta_min_derivative: min_d,
        beta_min_on_window,
        nu_window,
        integral_bound,
        image_margin,
        warnings,
    };
    Ok((model, family))
}

/// Two attracting sub-solenoids around x₁ = ±c (`swap = false`), or a single
/// pair exchanged by the map (`swap = true`).
pub fn make_twin_solenoid(k: u32, a: f64, c: f64, w: f64, b: TrigPoly2, swap: bool) -> Result<SystemModel> {
    let name = if swap { "swap_solenoid" } else { "two_solenoid" };
    finish_skew(name, SkewProduct { base: CircleMap::Times(k), fiber: FiberMap::Twin { a, c, w, b, swap } })
}

pub fn default_twin_b() -> TrigPoly2 {
    TrigPoly2 { terms: vec![TrigTerm { harmonic: 1, cos: [0.0, 0.0], sin: [0.0, 0.15] }] }
}

/// The default matrix for derived-from-Anosov maps on T³: three positive
/// eigenvalues 0 < κ₁ < κ₂ < 1 < κ₃.
pub fn default_da_matrix() -> Vec<Vec<i64>> {
    vec![vec![3, 2, 1], vec![2, 2, 1], vec![1, 1, 1]]
}

/// `x ↦ A x + amp·sin(2π x₀)·v₂ (mod 1)`, with `v₂` the weak stable
/// direction. For 3×3 matrices all eigenvalues must be real and positive
/// with one expanding.
pub fn make_derived_anosov(matrix: &[Vec<i64>], amplitude: f64) -> Result<SystemModel> {
    let model = make_derived_anosov_unchecked(matrix, amplitude)?;
    let mut rng = <rand_chacha::ChaCha8Rng as rand::SeedableRng>::seed_from_u64(0x5eed);
    let report = verify_partial_hyperbolicity(&model, 4096, &mut rng);
    if !report.pass {
        let (point, vector) = report.witness.unwrap_or_default();
        return Err(Error::ConeCheckFailed { point, vector, ratio: report.max_image_ratio });
    }
    Ok(model)
}

/// As `make_derived_anosov` without the cone check.
pub fn make_derived_anosov_unchecked(matrix: &[Vec<i64>], amplitude: f64) -> Result<SystemModel> {
    let auto = hyperbolic_split(matrix)?;
    check_da_spectrum(&auto)?;
    let t = TorusMap::new(auto, amplitude, 0)?;
    let name = if matrix.len() == 2 { "linear_torus" } else { "derived_anosov" };
    Ok(SystemModel { name: name.into(), kind: SystemKind::Torus(t), cone_aperture: 1.0 })
}

fn check_da_spectrum(auto: &ToralAutomorphism) -> Result<()> {
    if auto.unstable_basis.len() != 1 {
        return Err(Error::InvalidInput("need exactly one expanding direction".into()));
    }
    if auto.stable_basis.len() + 1 != auto.dim() {
        return Err(Error::InvalidInput("stable subspace has the wrong dimension".into()));
    }
    if auto.dim() == 3 && auto.eigenvalues().iter().any(|&l| l <= 0.0) {
        return Err(Error::InvalidInput("eigenvalues must be real and positive".into()));
    }
    // Complex stable pairs have fewer distinct basis vectors than rates match.
    if auto.dim() == 3 && auto.stable_eigenvalues[0] == auto.stable_eigenvalues[1] {
        return Err(Error::InvalidInput("stable eigenvalues must be distinct and real".into()));
    }
    Ok(())
}

/// Linear hyperbolic automorphism of T² viewed as a system.
pub fn make_linear_torus(matrix: &[Vec<i64>]) -> Result<SystemModel> {
    make_derived_anosov_unchecked(matrix, 0.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn solenoid_domain_escape() {
        let b = TrigPoly2 { terms: vec![TrigTerm { harmonic: 1, cos: [0.2, 0.0], sin: [0.0, 0.0] }] };
        assert!(matches!(make_solenoid(3, 0.9, b), Err(Error::DomainEscape(_))));
    }

    #[test]
    fn solenoid_cone_report() {
        let m = make_solenoid(3, 0.5, TrigPoly2::circle(0.3)).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let r = verify_partial_hyperbolicity(&m, 2000, &mut rng);
        assert!(r.pass, "{r:?}");
        assert!((r.max_domination_ratio - 1.0 / 6.0).abs() < 1e-12);
        assert!((r.max_omega - 1.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn solenoid_partial_volume() {
        let m = make_solenoid(3, 0.5, TrigPoly2::circle(0.3)).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        assert!((partial_volume_expansion(&m, 500, &mut rng) - 1.5).abs() < 1e-12);
    }

    #[test]
    fn derivatives_match() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let models = vec![
            make_solenoid(3, 0.5, TrigPoly2::circle(0.3)).unwrap(),
            make_modified_solenoid(&ModifiedParams::default()).unwrap().0,
            make_twin_solenoid(3, 0.5, 0.5, 0.25, default_twin_b(), false).unwrap(),
            make_derived_anosov(&default_da_matrix(), 0.05).unwrap(),
        ];
        for m in &models {
            let worst = derivative_check(m, 1000, &mut rng);
            assert!(worst < 1e-6, "{}: {worst}", m.name);
        }
    }

    #[test]
    fn inverse_on_attractor() {
        let m = make_solenoid(3, 0.5, TrigPoly2::circle(0.3)).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..50 {
            let x = m.iterate(&m.random_state(&mut rng), 30);
            let y = m.map(&x);
            let z = m.inverse_on_image(&y).unwrap();
            assert!(m.distance(&m.map(&z), &y) < 1e-10);
            assert!(m.distance(&z, &x) < 1e-10);
        }
    }

    #[test]
    fn base_projection_semiconjugates() {
        let (m, _) = make_modified_solenoid(&ModifiedParams::default()).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..100 {
            let x = m.random_state(&mut rng);
            let lhs = m.base_projection(&m.map(&x));
            let rhs = m.base_map(&m.base_projection(&x));
            assert_eq!(lhs, rhs);
        }
    }

    #[test]
    fn modified_family_data() {
        let (m, fam) = make_modified_solenoid(&ModifiedParams::default()).unwrap();
        assert!((fam.big_k - 4.0).abs() < 1e-9, "{}", fam.big_k);
        assert!(fam.nu_window <= 0.1, "{}", fam.nu_window);
        assert!(fam.warnings.is_empty());
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let r = verify_partial_hyperbolicity(&m, 4000, &mut rng);
        assert!(r.pass, "{r:?}");
        assert!(r.max_domination_ratio <= fam.big_k / fam.beta_min_on_window + 1e-9);
    }

    #[test]
    fn modified_with_times_base_warns() {
        let p = ModifiedParams { beta: BetaSpec::Times, ..ModifiedParams::default() };
        let (_, fam) = make_modified_solenoid(&p).unwrap();
        assert!(!fam.warnings.is_empty());
    }

    #[test]
    fn modified_with_constant_path_has_no_saddle() {
        let mut p = ModifiedParams::default();
        p.saddle.active = false;
        let (_, fam) = make_modified_solenoid(&p).unwrap();
        assert!((fam.big_k - 0.5).abs() < 1e-12);
    }

    #[test]
    fn modified_endpoint_mismatch() {
        let mut p = ModifiedParams::default();
        p.saddle.t1 = 1.5;
        assert!(matches!(make_modified_solenoid(&p), Err(Error::MismatchedEndpoints { .. })));
    }

    #[test]
    fn derived_anosov_checks() {
        assert!(matches!(
            make_derived_anosov(&[vec![2, 1, 0], vec![1, 1, 0], vec![0, 0, 1]], 0.0),
            Err(Error::NotHyperbolic { .. })
        ));
        assert!(make_derived_anosov(&default_da_matrix(), 0.0).is_ok());
        assert!(matches!(make_derived_anosov(&default_da_matrix(), 0.9), Err(Error::ConeCheckFailed { .. })));
    }
}
