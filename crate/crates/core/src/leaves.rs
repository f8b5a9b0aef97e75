//! Strong-unstable leaves, Markov plaques and center-stable holonomy.
//!
//! Leaf points are produced by a chart anchored at a point `x` with its
//! backward orbit `x₋₁, …, x₋ₙ`: a short unstable segment at `x₋ₙ` is pushed
//! forward `n` times. For skew products the segment is parametrised from its
//! end (backward inverse branches of the base), which avoids the loss of
//! precision of iterating an exponentially short segment.

use nalgebra::DVector;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::factor::{backward_orbit, Factor, SemiConjugacyKind};
use crate::linalg::wrap01;
use crate::systems::{CircleMap, SystemKind, CONJ_DEPTH};
use crate::toral::MarkovStructure;

/// Backward steps used by skew-product charts.
pub const SKEW_CHART_DEPTH: usize = 48;
/// Backward steps used by nonlinear torus charts.
pub const TORUS_CHART_DEPTH: usize = 8;
/// Half-length (in unstable eigen-coordinates) of plaques on tori without a
/// Markov partition.
pub const BOX_PLAQUE_HALF: f64 = 0.25;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum ParameterKind {
    /// Circle angle θ of the skew product.
    BaseCoordinate,
    /// Conjugated angle h(θ) for skew products, unstable coordinate of the
    /// factor point for torus maps.
    FactorUnstable,
}

#[derive(Debug, Clone, Serialize)]
pub struct LeafSample {
    pub t: f64,
    pub x: Vec<f64>,
    /// Factor point π(x).
    pub p: Vec<f64>,
}

/// Local chart of the strong-unstable leaf through `anchor`.
#[derive(Debug, Clone)]
pub struct LeafChart {
    pub anchor: Vec<f64>,
    history: Vec<Vec<f64>>,
    digits: Vec<u32>,
    /// Factor data of the anchor: π(anchor) and, for T² Markov charts, the
    /// cell and local stable coordinate.
    origin: Vec<f64>,
    cell: Option<(usize, f64, f64)>,
}

fn lift_inverse_ext(base: &CircleMap, y: f64) -> f64 {
    let k = base.degree() as f64;
    let w = (y / k).floor();
    base.lift_inverse(y - k * w) + w
}

fn conj_inverse_ext(base: &CircleMap, u: f64) -> f64 {
    let w = u.floor();
    base.conjugacy_inverse(u - w, CONJ_DEPTH) + w
}

impl LeafChart {
    pub fn new(factor: &Factor, anchor: &[f64]) -> Result<Self> {
        let model = &factor.model;
        let (history, digits) = match &model.kind {
            SystemKind::Skew(s) => {
                let h = backward_orbit(model, anchor, SKEW_CHART_DEPTH)?;
                let d = h.iter().map(|z| s.base.digit(z[0])).collect();
                (h, d)
            }
            SystemKind::Torus(_) if factor.pi.kind == SemiConjugacyKind::Identity => (Vec::new(), Vec::new()),
            SystemKind::Torus(_) => (backward_orbit(model, anchor, TORUS_CHART_DEPTH)?, Vec::new()),
        };
        let origin = factor.base_point(anchor)?;
        let cell = match (&factor.markov, &model.kind) {
            (Some(ms @ MarkovStructure::Torus(_)), _) => {
                let (c, (u, s)) = ms.locate(&origin).ok_or(Error::LostParticle { lost: 1, total: 1 })?;
                Some((c, u, s))
            }
            _ => None,
        };
        Ok(LeafChart { anchor: anchor.to_vec(), history, digits, origin, cell })
    }

    /// Parameter of the anchor in the factor-unstable coordinate.
    pub fn anchor_param(&self) -> f64 {
        match self.cell {
            Some((_, u, _)) => u,
            None if self.digits.is_empty() => 0.0,
            None => self.origin[0],
        }
    }

    /// Leaf point over the (lifted) base angle `theta`, for skew products.
    pub fn point_at_theta(&self, factor: &Factor, theta: f64) -> Result<Vec<f64>> {
        let s = factor.model.skew().ok_or_else(|| Error::InvalidInput("base angle chart needs a skew product".into()))?;
        let n = self.history.len();
        let mut thetas = Vec::with_capacity(n);
        let mut t = theta;
        for &d in &self.digits {
            t = lift_inverse_ext(&s.base, t + d as f64);
            thetas.push(t);
        }
        let start = &self.history[n - 1];
        let mut y = [start[1], start[2]];
        for j in (0..n).rev() {
            y = s.fiber.apply(wrap01(thetas[j]), y);
        }
        Ok(vec![wrap01(theta), y[0], y[1]])
    }

    /// Leaf point at factor-unstable parameter `t`.
    pub fn point(&self, factor: &Factor, t: f64) -> Result<Vec<f64>> {
        match &factor.model.kind {
            SystemKind::Skew(s) => self.point_at_theta(factor, conj_inverse_ext(&s.base, t)),
            SystemKind::Torus(_) => {
                if factor.pi.kind == SemiConjugacyKind::Identity {
                    return Ok(self.linear_point(factor, t));
                }
                self.torus_point(factor, t - self.anchor_param())
            }
        }
    }

    fn linear_point(&self, factor: &Factor, t: f64) -> Vec<f64> {
        let t_map = factor.model.torus().expect("torus");
        match (&factor.markov, self.cell) {
            (Some(ms), Some((_, _, s))) => ms.point_from_local(t, s),
            _ => {
                let frame = t_map.auto.eigen_frame();
                let e: Vec<f64> = (0..t_map.dim()).map(|i| frame[(i, 0)]).collect();
                self.anchor.iter().zip(&e).map(|(a, v)| wrap01(a + t * v)).collect()
            }
        }
    }

    fn offset_of(&self, factor: &Factor, y: &[f64]) -> Result<f64> {
        let p = factor.base_point(y)?;
        Ok(factor.unstable_offset(&p, &self.origin))
    }

    /// `f^n(x₋ₙ + s e_u)` with `s` found by bisection so that the factor
    /// unstable offset from the anchor equals `target`.
    fn torus_point(&self, factor: &Factor, target: f64) -> Result<Vec<f64>> {
        if target == 0.0 {
            return Ok(self.anchor.clone());
        }
        let model = &factor.model;
        let t_map = model.torus().expect("torus");
        let n = self.history.len();
        let start = &self.history[n - 1];
        let frame = t_map.auto.eigen_frame();
        let e: Vec<f64> = (0..t_map.dim()).map(|i| frame[(i, 0)]).collect();
        let lam = t_map.auto.unstable_eigenvalues[0];
        let eval = |s: f64| -> Result<(f64, Vec<f64>)> {
            let y0: Vec<f64> = start.iter().zip(&e).map(|(a, v)| wrap01(a + s * v)).collect();
            let y = model.iterate(&y0, n);
            Ok((self.offset_of(factor, &y)? - target, y))
        };
        let guess = target / lam.powi(n as i32);
        let mut lo = 0.0;
        let mut hi = 2.0 * guess;
        let mut g_hi = eval(hi)?.0;
        let mut tries = 0;
        while g_hi.signum() == (-target).signum() {
            lo = hi;
            hi *= 2.0;
            g_hi = eval(hi)?.0;
            tries += 1;
            if tries > 40 {
                return Err(Error::NoConvergence { rate: 1.0 });
            }
        }
        let mut best = eval(hi)?;
        for _ in 0..60 {
            let mid = 0.5 * (lo + hi);
            let (g, y) = eval(mid)?;
            if g.signum() == (-target).signum() {
                lo = mid;
            } else {
                hi = mid;
            }
            best = (g, y);
            if g.abs() < 1e-12 || (hi - lo).abs() < 1e-18 {
                break;
            }
        }
        Ok(best.1)
    }
}

/// Ordered samples of the strong-unstable leaf through `x`.
#[derive(Debug, Clone, Serialize)]
pub struct UnstablePlaque {
    pub cell: usize,
    pub anchor: Vec<f64>,
    pub samples: Vec<LeafSample>,
    pub parameter_kind: ParameterKind,
    /// Parameter interval covered by the plaque.
    pub range: (f64, f64),
    #[serde(skip)]
    pub chart: Option<LeafChart>,
}

impl UnstablePlaque {
    pub fn chart(&self) -> &LeafChart {
        self.chart.as_ref().expect("plaque chart")
    }

    /// Leaf point at parameter `t`.
    pub fn point(&self, factor: &Factor, t: f64) -> Result<LeafSample> {
        let x = self.chart().point(factor, t)?;
        let p = factor.base_point(&x)?;
        Ok(LeafSample { t, x, p })
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("t");
        let d = self.samples.first().map_or(0, |x| x.x.len());
        let e = self.samples.first().map_or(0, |x| x.p.len());
        for i in 0..d {
            s.push_str(&format!(",x{i}"));
        }
        for i in 0..e {
            s.push_str(&format!(",p{i}"));
        }
        s.push('\n');
        for smp in &self.samples {
            s.push_str(&format!("{:.17e}", smp.t));
            for v in smp.x.iter().chain(&smp.p) {
                s.push_str(&format!(",{v:.17e}"));
            }
            s.push('\n');
        }
        s
    }
}

fn check_cone(factor: &Factor, samples: &[LeafSample]) -> Result<()> {
    for w in samples.windows(2) {
        let v = factor.model.difference(&w[1].x, &w[0].x);
        if crate::linalg::norm(&v) < 1e-14 {
            continue;
        }
        if !factor.model.in_cone(&v) {
            return Err(Error::ConeCheckFailed {
                point: w[0].x.clone(),
                vector: v.clone(),
                ratio: factor.model.cone_ratio(&v),
            });
        }
    }
    Ok(())
}

fn sample_range(factor: &Factor, chart: &LeafChart, lo: f64, hi: f64, resolution: usize, by_theta: bool) -> Result<Vec<LeafSample>> {
    let anchor_t = if by_theta { chart.anchor[0] } else { chart.anchor_param() };
    let mut ts: Vec<f64> = (0..resolution).map(|i| lo + (hi - lo) * i as f64 / (resolution - 1) as f64).collect();
    if anchor_t > lo && anchor_t < hi && !ts.iter().any(|&t| (t - anchor_t).abs() < 1e-15) {
        ts.push(anchor_t);
        ts.sort_by(f64::total_cmp);
    }
    let pts = crate::par::map(&ts, |&t| -> Result<LeafSample> {
        let x = if (t - anchor_t).abs() < 1e-15 {
            chart.anchor.clone()
        } else if by_theta {
            chart.point_at_theta(factor, t)?
        } else {
            chart.point(factor, t)?
        };
        let p = factor.base_point(&x)?;
        Ok(LeafSample { t, x, p })
    });
    pts.into_iter().collect()
}

/// Local strong-unstable leaf through `x` with `resolution` samples over
/// parameters `t₀ ± radius` (base angle for skew products, unstable
/// eigen-coordinate for torus maps).
pub fn grow_unstable_leaf(factor: &Factor, x: &[f64], radius: f64, resolution: usize) -> Result<UnstablePlaque> {
    if resolution < 3 {
        return Err(Error::InsufficientResolution(resolution));
    }
    let chart = LeafChart::new(factor, x)?;
    let by_theta = factor.model.skew().is_some();
    let t0 = if by_theta { x[0] } else { chart.anchor_param() };
    let samples = sample_range(factor, &chart, t0 - radius, t0 + radius, resolution, by_theta)?;
    check_cone(factor, &samples)?;
    Ok(UnstablePlaque {
        cell: 0,
        anchor: x.to_vec(),
        samples,
        parameter_kind: if by_theta { ParameterKind::BaseCoordinate } else { ParameterKind::FactorUnstable },
        range: (t0 - radius, t0 + radius),
        chart: Some(chart),
    })
}

/// Plaque ξ^u_i(x): the leaf component over the Markov cell of x.
pub fn plaque_of(factor: &Factor, x: &[f64], resolution: usize) -> Result<UnstablePlaque> {
    if resolution < 3 {
        return Err(Error::InsufficientResolution(resolution));
    }
    let chart = LeafChart::new(factor, x)?;
    let (cell, range) = plaque_range(factor, &chart)?;
    let samples = sample_range(factor, &chart, range.0, range.1, resolution, false)?;
    check_cone(factor, &samples)?;
    Ok(UnstablePlaque {
        cell,
        anchor: x.to_vec(),
        samples,
        parameter_kind: ParameterKind::FactorUnstable,
        range,
        chart: Some(chart),
    })
}

/// Plaque with a chart but no stored samples.
pub fn plaque_chart(factor: &Factor, x: &[f64]) -> Result<UnstablePlaque> {
    let chart = LeafChart::new(factor, x)?;
    let (cell, range) = plaque_range(factor, &chart)?;
    Ok(UnstablePlaque {
        cell,
        anchor: x.to_vec(),
        samples: Vec::new(),
        parameter_kind: ParameterKind::FactorUnstable,
        range,
        chart: Some(chart),
    })
}

fn plaque_range(factor: &Factor, chart: &LeafChart) -> Result<(usize, (f64, f64))> {
    match &factor.markov {
        Some(ms) => {
            let (cell, (u, _)) = ms.locate(&chart.origin).ok_or(Error::LostParticle { lost: 1, total: 1 })?;
            let (lo, hi) = ms.unstable_range(cell);
            // Circle cells are arcs of the conjugated angle; the anchor sits inside.
            let _ = u;
            Ok((cell, (lo, hi)))
        }
        None => Ok((0, (-BOX_PLAQUE_HALF, BOX_PLAQUE_HALF))),
    }
}

/// Center-stable holonomy from `plaque_x` to `plaque_y` of the point at
/// parameter `t` on `plaque_x`.
pub fn cs_holonomy(factor: &Factor, plaque_x: &UnstablePlaque, plaque_y: &UnstablePlaque, z: &LeafSample) -> Result<LeafSample> {
    if plaque_x.cell != plaque_y.cell {
        return Err(Error::BracketOutOfCell { cell: plaque_y.cell });
    }
    let cell = plaque_y.cell;
    let t = match &factor.markov {
        Some(MarkovStructure::Circle(_)) => z.p[0],
        Some(ms @ MarkovStructure::Torus(_)) => {
            let b = ms.bracket(&z.p, &plaque_y.chart().origin, cell)?;
            ms.locate_in(&b, cell).ok_or(Error::BracketOutOfCell { cell })?.1 .0
        }
        None => {
            let t = factor.unstable_offset(&z.p, &plaque_y.chart().origin);
            if t < plaque_y.range.0 - 1e-9 || t > plaque_y.range.1 + 1e-9 {
                return Err(Error::BracketOutOfCell { cell });
            }
            t
        }
    };
    // Circle plaques cover the arc of the cell; keep the parameter on it.
    let t = match &factor.markov {
        Some(MarkovStructure::Circle(_)) if t < plaque_y.range.0 - 1e-12 => t + 1.0,
        _ => t,
    };
    plaque_y.point(factor, t)
}

/// Unstable eigen-coordinate of `p − q` for the torus factor; conjugated
/// angle difference for the circle.
pub fn factor_coordinate(factor: &Factor, p: &[f64], q: &[f64]) -> f64 {
    factor.unstable_offset(p, q)
}

/// Unit eigen-direction of E^u of the factor, for torus models.
pub fn unstable_direction(factor: &Factor) -> Option<DVector<f64>> {
    factor.model.torus().map(|t| {
        let f = t.auto.eigen_frame();
        f.column(0).into_owned()
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::systems::{default_da_matrix, make_derived_anosov, make_linear_torus, make_solenoid, TrigPoly2};

    fn solenoid() -> Factor {
        Factor::new(&make_solenoid(3, 0.5, TrigPoly2::circle(0.3)).unwrap(), 1e-8).unwrap()
    }

    #[test]
    fn solenoid_leaf_matches_backward_series() {
        let f = solenoid();
        let fixed = vec![0.0, 0.6, 0.0];
        let leaf = grow_unstable_leaf(&f, &fixed, 1.0 / 3.0, 11).unwrap();
        let b = TrigPoly2::circle(0.3);
        for s in &leaf.samples {
            // Backward orbit of the base along the digits of the fixed point.
            let mut th = s.t;
            let mut y = [0.0, 0.0];
            let mut p = 1.0;
            for _ in 0..60 {
                th /= 3.0;
                let v = b.eval(wrap01(th));
                y[0] += p * v[0];
                y[1] += p * v[1];
                p *= 0.5;
            }
            assert!((s.x[1] - y[0]).abs() < 1e-10 && (s.x[2] - y[1]).abs() < 1e-10, "{s:?} {y:?}");
        }
    }

    #[test]
    fn too_few_samples() {
        let f = solenoid();
        assert!(matches!(grow_unstable_leaf(&f, &[0.0, 0.6, 0.0], 0.1, 2), Err(Error::InsufficientResolution(2))));
    }

    #[test]
    fn linear_leaf_is_straight() {
        let m = make_linear_torus(&[vec![2, 1], vec![1, 1]]).unwrap();
        let f = Factor::new(&m, 1e-8).unwrap();
        let leaf = grow_unstable_leaf(&f, &[0.3, 0.4], 0.2, 9).unwrap();
        let e = unstable_direction(&f).unwrap();
        for s in &leaf.samples {
            let d = m.difference(&s.x, &[0.3, 0.4]);
            let cross = d[0] * e[1] - d[1] * e[0];
            assert!(cross.abs() < 1e-12);
        }
    }

    #[test]
    fn circle_plaque_covers_cell() {
        let f = solenoid();
        let x = f.model.iterate(&[0.1, 0.0, 0.0], 60);
        let p = plaque_of(&f, &x, 20).unwrap();
        let u = f.base_point(&x).unwrap()[0];
        assert_eq!(p.cell, (u * 3.0).floor() as usize);
        assert!((p.samples[0].p[0] - p.range.0).abs() < 1e-8);
        assert!((crate::linalg::circle_diff(p.samples.last().unwrap().p[0], p.range.1)).abs() < 1e-8);
        assert!(p.samples.iter().any(|s| s.x == x));
    }

    #[test]
    fn cat_plaque_endpoints_on_boundary() {
        let m = make_linear_torus(&[vec![2, 1], vec![1, 1]]).unwrap();
        let f = Factor::new(&m, 1e-8).unwrap();
        let ms = f.markov.as_ref().unwrap();
        let p = plaque_of(&f, &[0.31, 0.47], 10).unwrap();
        let (lo, hi) = ms.unstable_range(p.cell);
        let first = ms.locate_in(&p.samples[0].p, p.cell).unwrap().1 .0;
        let last = ms.locate_in(&p.samples.last().unwrap().p, p.cell).unwrap().1 .0;
        assert!((first - lo).abs() < 1e-8 && (last - hi).abs() < 1e-8);
    }

    #[test]
    fn solenoid_holonomy_keeps_theta() {
        let f = solenoid();
        let x = f.model.iterate(&[0.05, 0.0, 0.0], 60);
        let mut y = f.model.iterate(&[0.05, 0.5, 0.1], 61);
        // Bring y into the same cell as x.
        let cx = f.symbol(&x).unwrap();
        let mut guard = 0;
        while f.symbol(&y).unwrap() != cx {
            y = f.model.map(&y);
            guard += 1;
            assert!(guard < 100);
        }
        let px = plaque_of(&f, &x, 5).unwrap();
        let py = plaque_of(&f, &y, 5).unwrap();
        for z in &px.samples {
            let w = cs_holonomy(&f, &px, &py, z).unwrap();
            assert!((w.x[0] - z.x[0]).abs() < 1e-9 || (w.x[0] - z.x[0]).abs() > 1.0 - 1e-9);
        }
        let same = cs_holonomy(&f, &px, &px, &px.samples[2]).unwrap();
        assert!(f.model.distance(&same.x, &px.samples[2].x) < 1e-10);
    }

    #[test]
    fn da_chart_hits_targets() {
        let m = make_derived_anosov(&default_da_matrix(), 0.05).unwrap();
        let f = Factor::new(&m, 1e-7).unwrap();
        let x = m.iterate(&[0.2, 0.3, 0.4], 5);
        let p = plaque_of(&f, &x, 7).unwrap();
        for s in &p.samples {
            let off = f.unstable_offset(&s.p, &f.base_point(&x).unwrap());
            assert!((off - s.t).abs() < 1e-6, "{off} {}", s.t);
        }
    }

    #[test]
    fn markov_inclusion_on_circle() {
        let f = solenoid();
        let x = f.model.iterate(&[0.2, 0.0, 0.0], 60);
        let p = plaque_of(&f, &x, 30).unwrap();
        // Image of the plaque covers the full circle of conjugated angles.
        let mut us: Vec<f64> = p.samples.iter().map(|s| f.base_point(&f.model.map(&s.x)).unwrap()[0]).collect();
        us.sort_by(f64::total_cmp);
        let gap = us.windows(2).map(|w| w[1] - w[0]).fold(0.0, f64::max).max(1.0 - us.last().unwrap() + us[0]);
        assert!(gap < 0.15);
    }
}
