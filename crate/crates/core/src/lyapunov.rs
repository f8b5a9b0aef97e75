//! Lyapunov spectra, center-stable contraction certificates and hyperbolic
//! times.

use nalgebra::DMatrix;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::linalg::{batch_means, op_norm};
use crate::measures::ParticleMeasure;
use crate::systems::SystemModel;

pub const MIN_STEPS: usize = 10_000;
const BLOCKS: usize = 10;
const FRAME_WARMUP: usize = 100;

#[derive(Debug, Clone, Copy, Serialize, PartialEq)]
pub struct Exponent {
    pub value: f64,
    pub halfwidth: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct Certificate {
    pub m: usize,
    pub a: f64,
    pub margin: f64,
    /// μ-average of (1/m) log ‖Df^m|E^cs‖ for each state.
    pub averages: Vec<f64>,
}

#[derive(Debug, Clone, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum CertificateOutcome {
    Certified(Certificate),
    Fail { state: usize, value: f64, m: usize },
}

impl CertificateOutcome {
    pub fn certificate(&self) -> Option<&Certificate> {
        match self {
            CertificateOutcome::Certified(c) => Some(c),
            CertificateOutcome::Fail { .. } => None,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct LyapunovReport {
    pub steps: usize,
    /// Sorted descending.
    pub spectrum: Vec<Exponent>,
    pub cs_top: Exponent,
    /// Orbit average of log |det Df|.
    pub log_det: f64,
    pub certificate: Option<Certificate>,
    pub hyperbolic_time_fraction: Option<f64>,
    pub stable_size_bound: Option<f64>,
}

/// Exponents along the orbit of `x0` by QR reorthogonalization, after `burn`
/// steps; the center-stable top exponent comes from the cs block cocycle.
pub fn lyapunov_spectrum(model: &SystemModel, x0: &[f64], steps: usize, burn: usize) -> Result<LyapunovReport> {
    if steps < MIN_STEPS {
        return Err(Error::InvalidInput(format!("need at least {MIN_STEPS} steps, got {steps}")));
    }
    let d = model.state_dim();
    let mut x = model.iterate(x0, burn);
    let mut q = DMatrix::<f64>::identity(d, d);
    let mut v = {
        let c = model.cs_dim();
        let mut v = DMatrix::<f64>::zeros(c, 1);
        v.fill(1.0 / (c as f64).sqrt());
        v
    };
    // Let the frame align with the Oseledets flag before recording.
    for _ in 0..FRAME_WARMUP {
        let df = model.derivative(&x);
        q = (&df * &q).qr().q();
        let w = model.cs_block(&x) * &v;
        v = &w / w.norm();
        x = model.step(&x);
    }
    let mut logs = vec![Vec::with_capacity(steps); d];
    let mut cs_logs = Vec::with_capacity(steps);
    let mut det_sum = 0.0;
    for step in 0..steps {
        let df = model.derivative(&x);
        det_sum += df.determinant().abs().ln();
        let qr = (&df * &q).qr();
        let r = qr.r();
        for i in 0..d {
            let rii = r[(i, i)].abs();
            if !(rii.is_finite() && rii > 0.0) {
                return Err(Error::DegenerateFrame(step));
            }
            logs[i].push(rii.ln());
        }
        q = qr.q();
        let w = model.cs_block(&x) * &v;
        let n = w.norm();
        if !(n.is_finite() && n > 0.0) {
            return Err(Error::DegenerateFrame(step));
        }
        cs_logs.push(n.ln());
        v = w / n;
        x = model.step(&x);
    }
    let mut spectrum: Vec<Exponent> = logs
        .iter()
        .map(|l| {
            let (m, h) = batch_means(l, BLOCKS);
            Exponent { value: m, halfwidth: h }
        })
        .collect();
    spectrum.sort_by(|a, b| b.value.total_cmp(&a.value));
    let (m, h) = batch_means(&cs_logs, BLOCKS);
    Ok(LyapunovReport {
        steps,
        spectrum,
        cs_top: Exponent { value: m, halfwidth: h },
        log_det: det_sum / steps as f64,
        certificate: None,
        hyperbolic_time_fraction: None,
        stable_size_bound: None,
    })
}

/// log ‖Df^m|E^cs(x)‖.
pub fn cs_log_norm(model: &SystemModel, x: &[f64], m: usize) -> f64 {
    let c = model.cs_dim();
    let mut p = DMatrix::<f64>::identity(c, c);
    let mut y = x.to_vec();
    for _ in 0..m {
        p = model.cs_block(&y) * p;
        y = model.map(&y);
    }
    op_norm(&p).ln()
}

/// Deterministic thinning to at most `max` particles (renormalized weights).
fn thin(mu: &ParticleMeasure, max: usize) -> Vec<(usize, f64)> {
    let stride = mu.len().div_ceil(max.max(1)).max(1);
    let idx: Vec<usize> = (0..mu.len()).step_by(stride).collect();
    let total: f64 = idx.iter().map(|&i| mu.weights[i]).sum();
    idx.into_iter().map(|i| (i, mu.weights[i] / total)).collect()
}

/// μ-average of (1/m) log ‖Df^m|E^cs‖.
pub fn cs_average(model: &SystemModel, mu: &ParticleMeasure, m: usize, max_particles: usize) -> f64 {
    let pts = thin(mu, max_particles);
    let vals = crate::par::map(&pts, |&(i, w)| w * cs_log_norm(model, mu.state(i), m) / m as f64);
    vals.iter().sum()
}

/// Smallest `m` in the grid with max over states of the average below zero;
/// then `a` is half that maximum.
pub fn c_mostly_certificate(model: &SystemModel, states: &[&ParticleMeasure], m_grid: &[usize], max_particles: usize) -> Result<CertificateOutcome> {
    if states.is_empty() {
        return Err(Error::InvalidInput("certificate needs at least one state".into()));
    }
    let mut last = (0usize, f64::NAN, 0usize);
    for &m in m_grid {
        let averages: Vec<f64> = states.iter().map(|mu| cs_average(model, mu, m, max_particles)).collect();
        let (worst_i, worst) = averages
            .iter()
            .enumerate()
            .fold((0, f64::NEG_INFINITY), |(bi, bv), (i, &v)| if v > bv { (i, v) } else { (bi, bv) });
        if worst < 0.0 {
            return Ok(CertificateOutcome::Certified(Certificate { m, a: worst / 2.0, margin: -worst / 2.0, averages }));
        }
        last = (worst_i, worst, m);
    }
    Ok(CertificateOutcome::Fail { state: last.0, value: last.1, m: last.2 })
}

#[derive(Debug, Clone, Serialize)]
pub struct HyperbolicTimes {
    pub block: usize,
    pub rate: f64,
    /// Block indices `n` (time `n·block`) that are hyperbolic.
    #[serde(skip)]
    pub times: Vec<usize>,
    pub count: usize,
    pub candidates: usize,
    pub density: f64,
    /// Average of log ‖Df^block|E^cs‖ per step over the orbit.
    pub average: f64,
    pub stable_size_bound: f64,
}

/// Block `n` is hyperbolic when every product of the following blocks
/// `n, …, j−1` is at most `e^{a (j−n) N_s}`. Candidates are the first half
/// of the blocks.
pub fn hyperbolic_times_from_logs(block_logs: &[f64], rate: f64, block: usize, eps: f64) -> HyperbolicTimes {
    let l = block_logs.len();
    let mut t = Vec::with_capacity(l + 1);
    let mut s = 0.0;
    t.push(0.0);
    for (i, c) in block_logs.iter().enumerate() {
        s += c;
        t.push(s - rate * (i + 1) as f64 * block as f64);
    }
    // suffix[n] = max_{j > n} T_j
    let mut suffix = vec![f64::NEG_INFINITY; l + 1];
    for n in (0..l).rev() {
        suffix[n] = suffix[n + 1].max(t[n + 1]);
    }
    let candidates = l / 2;
    let times: Vec<usize> = (0..candidates).filter(|&n| t[n] >= suffix[n] - 1e-12).collect();
    let average = if l == 0 { 0.0 } else { block_logs.iter().sum::<f64>() / (l * block) as f64 };
    HyperbolicTimes {
        block,
        rate,
        count: times.len(),
        candidates,
        density: if candidates == 0 { 0.0 } else { times.len() as f64 / candidates as f64 },
        times,
        average,
        stable_size_bound: eps / (1.0 - (rate * block as f64 / 2.0).exp()),
    }
}

/// Hyperbolic times along the orbit of `x0` over `blocks` blocks of length
/// `block`.
pub fn hyperbolic_times(model: &SystemModel, x0: &[f64], rate: f64, block: usize, blocks: usize, eps: f64) -> HyperbolicTimes {
    let mut x = x0.to_vec();
    let mut logs = Vec::with_capacity(blocks);
    for _ in 0..blocks {
        logs.push(cs_log_norm(model, &x, block));
        x = model.iterate(&x, block);
    }
    hyperbolic_times_from_logs(&logs, rate, block, eps)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::measures::dirac;
    use crate::systems::{make_linear_torus, make_solenoid, TrigPoly2};

    #[test]
    fn solenoid_spectrum() {
        let m = make_solenoid(3, 0.5, TrigPoly2::circle(0.3)).unwrap();
        let r = lyapunov_spectrum(&m, &[0.123, 0.0, 0.0], 20_000, 50).unwrap();
        let v: Vec<f64> = r.spectrum.iter().map(|e| e.value).collect();
        assert!((v[0] - 3f64.ln()).abs() < 1e-3);
        assert!((v[1] - 0.5f64.ln()).abs() < 1e-3 && (v[2] - 0.5f64.ln()).abs() < 1e-3);
        assert!((r.cs_top.value - 0.5f64.ln()).abs() < 1e-9);
        let sum: f64 = v.iter().sum();
        assert!((sum - r.log_det).abs() < 1e-3);
    }

    #[test]
    fn cat_spectrum() {
        let m = make_linear_torus(&[vec![2, 1], vec![1, 1]]).unwrap();
        let r = lyapunov_spectrum(&m, &[0.1, 0.2], 10_000, 0).unwrap();
        let l = ((3.0 + 5f64.sqrt()) / 2.0).ln();
        assert!((r.spectrum[0].value - l).abs() < 1e-6);
        assert!((r.spectrum[1].value + l).abs() < 1e-6);
        assert!(lyapunov_spectrum(&m, &[0.1, 0.2], 100, 0).is_err());
    }

    #[test]
    fn solenoid_certificate() {
        let m = make_solenoid(3, 0.5, TrigPoly2::circle(0.3)).unwrap();
        let f = crate::factor::Factor::new(&m, 1e-8).unwrap();
        let mu = dirac(&f, &[0.0, 0.6, 0.0], 5);
        let c = c_mostly_certificate(&m, &[&mu], &[1, 2, 4], 100).unwrap();
        let c = c.certificate().unwrap();
        assert_eq!(c.m, 1);
        assert!((c.averages[0] - 0.5f64.ln()).abs() < 1e-12);
        assert!(c.a <= 0.5f64.ln() / 2.0 + 1e-12);
    }

    #[test]
    fn expanding_fiber_fails() {
        use crate::systems::{CircleMap, FiberMap, SkewProduct, SystemKind};
        let m = SystemModel {
            name: "expanding fiber".into(),
            kind: SystemKind::Skew(SkewProduct {
                base: CircleMap::Times(3),
                fiber: FiberMap::Affine { a: 1.5, alpha: 0.0, b: TrigPoly2::zero() },
            }),
            cone_aperture: 1.0,
        };
        let f = crate::factor::Factor::new(&m, 1e-8).unwrap();
        let mu = dirac(&f, &[0.0, 0.0, 0.0], 5);
        let c = c_mostly_certificate(&m, &[&mu], &[1, 2, 4], 10).unwrap();
        assert!(matches!(c, CertificateOutcome::Fail { .. }));
    }

    #[test]
    fn hyperbolic_time_extremes() {
        let logs = vec![0.5f64.ln(); 2000];
        let h = hyperbolic_times_from_logs(&logs, -0.3, 1, 0.05);
        assert_eq!(h.density, 1.0);
        let h = hyperbolic_times_from_logs(&logs, -10.0, 1, 0.05);
        assert_eq!(h.density, 0.0);
        assert!(h.times.is_empty());
    }

    #[test]
    fn subadditivity_per_point() {
        let m = make_solenoid(3, 0.5, TrigPoly2::circle(0.3)).unwrap();
        for i in 0..10 {
            let x = m.iterate(&[i as f64 / 10.0 + 0.01, 0.1, 0.0], 20);
            let a = cs_log_norm(&m, &x, 4);
            let b = cs_log_norm(&m, &x, 2) + cs_log_norm(&m, &m.iterate(&x, 2), 2);
            assert!(a <= b + 1e-9);
        }
    }
}
