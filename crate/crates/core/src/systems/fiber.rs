//! Fiber maps `x ↦ h_θ(x)` on the closed unit disk.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::linalg::wrap_centered;

/// One harmonic of a planar trigonometric polynomial:
/// `cos·cos(2π n θ) + sin·sin(2π n θ)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrigTerm {
    pub harmonic: u32,
    pub cos: [f64; 2],
    pub sin: [f64; 2],
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrigPoly2 {
    pub terms: Vec<TrigTerm>,
}

impl TrigPoly2 {
    pub fn zero() -> Self {
        TrigPoly2 { terms: Vec::new() }
    }

    /// `r (cos 2πθ, sin 2πθ)`.
    pub fn circle(r: f64) -> Self {
        TrigPoly2 { terms: vec![TrigTerm { harmonic: 1, cos: [r, 0.0], sin: [0.0, r] }] }
    }

    pub fn eval(&self, t: f64) -> [f64; 2] {
        let mut out = [0.0; 2];
        for term in &self.terms {
            let w = 2.0 * PI * term.harmonic as f64 * t;
            let (s, c) = w.sin_cos();
            out[0] += term.cos[0] * c + term.sin[0] * s;
            out[1] += term.cos[1] * c + term.sin[1] * s;
        }
        out
    }

    pub fn derivative(&self, t: f64) -> [f64; 2] {
        let mut out = [0.0; 2];
        for term in &self.terms {
            let n = 2.0 * PI * term.harmonic as f64;
            let (s, c) = (n * t).sin_cos();
            out[0] += n * (-term.cos[0] * s + term.sin[0] * c);
            out[1] += n * (-term.cos[1] * s + term.sin[1] * c);
        }
        out
    }

    /// Sup of |b(θ)| on a fine grid.
    pub fn sup_norm(&self) -> f64 {
        let n = 4096;
        (0..n)
            .map(|i| {
                let v = self.eval(i as f64 / n as f64);
                v[0].hypot(v[1])
            })
            .fold(0.0, f64::max)
    }

    /// Sup of |b(θ)| restricted to centered θ in [-w, w].
    pub fn sup_norm_near_zero(&self, w: f64) -> f64 {
        let n = 1024;
        (0..=n)
            .map(|i| {
                let v = self.eval(-w + 2.0 * w * i as f64 / n as f64);
                v[0].hypot(v[1])
            })
            .fold(0.0, f64::max)
    }

    pub fn sup_derivative(&self) -> f64 {
        let n = 4096;
        (0..n)
            .map(|i| {
                let v = self.derivative(i as f64 / n as f64);
                v[0].hypot(v[1])
            })
            .fold(0.0, f64::max)
    }
}

/// Odd scalar map whose slope is `s0` on `|u| ≤ w0`, changes linearly to
/// `s1` on `w0 ≤ |u| ≤ w1`, and equals `s1` beyond.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct SlopeRamp {
    pub s0: f64,
    pub s1: f64,
    pub w0: f64,
    pub w1: f64,
}

impl SlopeRamp {
    pub fn value(&self, u: f64) -> f64 {
        let v = u.abs();
        let wr = self.w1 - self.w0;
        let g = if v <= self.w0 {
            self.s0 * v
        } else if v <= self.w1 {
            let d = v - self.w0;
            self.s0 * self.w0 + self.s0 * d + (self.s1 - self.s0) * d * d / (2.0 * wr)
        } else {
            self.s0 * self.w0 + (self.s0 + self.s1) * wr / 2.0 + self.s1 * (v - self.w1)
        };
        g.copysign(u)
    }

    pub fn slope(&self, u: f64) -> f64 {
        let v = u.abs();
        if v <= self.w0 {
            self.s0
        } else if v <= self.w1 {
            self.s0 + (self.s1 - self.s0) * (v - self.w0) / (self.w1 - self.w0)
        } else {
            self.s1
        }
    }

    /// Nonzero fixed point on the outer linear piece, if it exists there.
    pub fn outer_fixed_point(&self) -> Option<f64> {
        let wr = self.w1 - self.w0;
        let c = self.s0 * self.w0 + (self.s0 + self.s1) * wr / 2.0 - self.s1 * self.w1;
        let u = c / (1.0 - self.s1);
        (u > self.w1 && self.s1 < 1.0).then_some(u)
    }
}

/// Fiber family that follows `φ = a R_α` away from θ = 0 and moves along a
/// path `ψ_t` to a saddle `ψ₀(x) = (g(x₁), k_s x₂)` on the window |θ| < ε.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SaddleWindow {
    pub a: f64,
    pub alpha: f64,
    pub saddle: SlopeRamp,
    pub ks: f64,
    /// ψ_t equals φ for |t| ≥ t1 (t = θ/ε).
    pub t1: f64,
    pub eps: f64,
    pub b: TrigPoly2,
}

impl SaddleWindow {
    fn phi(&self, x: [f64; 2]) -> [f64; 2] {
        let (s, c) = (2.0 * PI * self.alpha).sin_cos();
        [self.a * (c * x[0] - s * x[1]), self.a * (s * x[0] + c * x[1])]
    }

    fn phi_matrix(&self) -> [[f64; 2]; 2] {
        let (s, c) = (2.0 * PI * self.alpha).sin_cos();
        [[self.a * c, -self.a * s], [self.a * s, self.a * c]]
    }

    fn psi0(&self, x: [f64; 2]) -> [f64; 2] {
        [self.saddle.value(x[0]), self.ks * x[1]]
    }

    /// Blend weight τ(t) and dτ/dt.
    pub fn blend(&self, t: f64) -> (f64, f64) {
        if t.abs() >= self.t1 {
            return (0.0, 0.0);
        }
        let z = PI * t / (2.0 * self.t1);
        let c = z.cos();
        (c * c, -(2.0 * z).sin() * PI / (2.0 * self.t1))
    }

    /// ψ_t(x) for the path parameter t.
    pub fn psi(&self, t: f64, x: [f64; 2]) -> [f64; 2] {
        let (tau, _) = self.blend(t);
        let p = self.phi(x);
        let q = self.psi0(x);
        [(1.0 - tau) * p[0] + tau * q[0], (1.0 - tau) * p[1] + tau * q[1]]
    }

    pub fn psi_dx(&self, t: f64, x: [f64; 2]) -> [[f64; 2]; 2] {
        let (tau, _) = self.blend(t);
        let m = self.phi_matrix();
        let g = self.saddle.slope(x[0]);
        [
            [(1.0 - tau) * m[0][0] + tau * g, (1.0 - tau) * m[0][1]],
            [(1.0 - tau) * m[1][0], (1.0 - tau) * m[1][1] + tau * self.ks],
        ]
    }

    fn path_param(&self, theta: f64) -> f64 {
        wrap_centered(theta) / self.eps
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub enum FiberMap {
    /// `a R_α x + b(θ)`.
    Affine { a: f64, alpha: f64, b: TrigPoly2 },
    Saddle(SaddleWindow),
    /// `(g(x₁), a x₂) + b(θ)` with `g(u) = a u + (1-a) c tanh(u/w)`, which has
    /// attracting fixed points near ±c; `swap` replaces `g` by `-g`.
    Twin { a: f64, c: f64, w: f64, b: TrigPoly2, swap: bool },
}

impl FiberMap {
    pub fn apply(&self, theta: f64, x: [f64; 2]) -> [f64; 2] {
        match self {
            FiberMap::Affine { a, alpha, b } => {
                let (s, c) = (2.0 * PI * alpha).sin_cos();
                let bb = b.eval(theta);
                [a * (c * x[0] - s * x[1]) + bb[0], a * (s * x[0] + c * x[1]) + bb[1]]
            }
            FiberMap::Saddle(w) => {
                let p = w.psi(w.path_param(theta), x);
                let bb = w.b.eval(theta);
                [p[0] + bb[0], p[1] + bb[1]]
            }
            FiberMap::Twin { a, c, w, b, swap } => {
                let g = a * x[0] + (1.0 - a) * c * (x[0] / w).tanh();
                let bb = b.eval(theta);
                [if *swap { -g } else { g } + bb[0], a * x[1] + bb[1]]
            }
        }
    }

    pub fn dx(&self, theta: f64, x: [f64; 2]) -> [[f64; 2]; 2] {
        match self {
            FiberMap::Affine { a, alpha, .. } => {
                let (s, c) = (2.0 * PI * alpha).sin_cos();
                [[a * c, -a * s], [a * s, a * c]]
            }
            FiberMap::Saddle(w) => w.psi_dx(w.path_param(theta), x),
            FiberMap::Twin { a, c, w, swap, .. } => {
                let sech = 1.0 / (x[0] / w).cosh();
                let g = a + (1.0 - a) * c / w * sech * sech;
                [[if *swap { -g } else { g }, 0.0], [0.0, *a]]
            }
        }
    }

    pub fn dtheta(&self, theta: f64, x: [f64; 2]) -> [f64; 2] {
        match self {
            FiberMap::Affine { b, .. } | FiberMap::Twin { b, .. } => b.derivative(theta),
            FiberMap::Saddle(w) => {
                let t = w.path_param(theta);
                let (_, dtau) = w.blend(t);
                let bd = w.b.derivative(theta);
                if dtau == 0.0 {
                    return bd;
                }
                let p = w.phi(x);
                let q = w.psi0(x);
                let s = dtau / w.eps;
                [s * (q[0] - p[0]) + bd[0], s * (q[1] - p[1]) + bd[1]]
            }
        }
    }

    pub fn b(&self) -> &TrigPoly2 {
        match self {
            FiberMap::Affine { b, .. } | FiberMap::Twin { b, .. } => b,
            FiberMap::Saddle(w) => &w.b,
        }
    }

    /// Solves `h_θ(x) = y` for `x` by Newton's method from `guess`.
    pub fn solve(&self, theta: f64, y: [f64; 2], guess: [f64; 2]) -> Option<[f64; 2]> {
        if let FiberMap::Affine { a, alpha, b } = self {
            let bb = b.eval(theta);
            let (s, c) = (2.0 * PI * alpha).sin_cos();
            let r = [(y[0] - bb[0]) / a, (y[1] - bb[1]) / a];
            return Some([c * r[0] + s * r[1], -s * r[0] + c * r[1]]);
        }
        let seeds = [guess, [0.0, 0.0], [y[0] * 0.25, y[1] * 2.0], [y[0] * 2.0, y[1] * 0.25]];
        seeds.iter().find_map(|&g| self.newton(theta, y, g))
    }

    fn newton(&self, theta: f64, y: [f64; 2], guess: [f64; 2]) -> Option<[f64; 2]> {
        let resid = |x: [f64; 2]| {
            let fx = self.apply(theta, x);
            [fx[0] - y[0], fx[1] - y[1]]
        };
        let mut x = guess;
        let mut r = resid(x);
        for _ in 0..100 {
            let rn = r[0].hypot(r[1]);
            if rn < 1e-15 {
                return Some(x);
            }
            let j = self.dx(theta, x);
            let det = j[0][0] * j[1][1] - j[0][1] * j[1][0];
            if det.abs() < 1e-14 {
                return None;
            }
            let dx0 = (j[1][1] * r[0] - j[0][1] * r[1]) / det;
            let dx1 = (-j[1][0] * r[0] + j[0][0] * r[1]) / det;
            // Backtracking keeps the iteration from overshooting across the ramp.
            let mut step = 1.0;
            loop {
                let cand = [x[0] - step * dx0, x[1] - step * dx1];
                let rc = resid(cand);
                if rc[0].hypot(rc[1]) < rn || step < 1e-4 {
                    x = cand;
                    r = rc;
                    break;
                }
                step *= 0.5;
            }
            if !x[0].is_finite() || x[0].hypot(x[1]) > 10.0 {
                return None;
            }
        }
        (r[0].hypot(r[1]) < 1e-12).then_some(x)
    }

    /// Region label used by the coding partition: the side of x₁ = 0 for twin
    /// fibers, a single region otherwise.
    pub fn region(&self, x: [f64; 2]) -> u32 {
        match self {
            FiberMap::Twin { .. } => (x[0] >= 0.0) as u32,
            _ => 0,
        }
    }

    pub fn num_regions(&self) -> u32 {
        match self {
            FiberMap::Twin { .. } => 2,
            _ => 1,
        }
    }
}

pub fn norm2(m: &[[f64; 2]; 2]) -> f64 {
    // Largest singular value of a 2×2 matrix.
    let (a, b, c, d) = (m[0][0], m[0][1], m[1][0], m[1][1]);
    let s = a * a + b * b + c * c + d * d;
    let det = a * d - b * c;
    let disc = (s * s - 4.0 * det * det).max(0.0).sqrt();
    ((s + disc) / 2.0).sqrt()
}

pub fn min_singular2(m: &[[f64; 2]; 2]) -> f64 {
    let (a, b, c, d) = (m[0][0], m[0][1], m[1][0], m[1][1]);
    let s = a * a + b * b + c * c + d * d;
    let det = a * d - b * c;
    let disc = (s * s - 4.0 * det * det).max(0.0).sqrt();
    ((s - disc).max(0.0) / 2.0).sqrt()
}
