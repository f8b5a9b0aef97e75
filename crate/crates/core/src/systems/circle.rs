//! Expanding circle maps of degree k and their conjugacy to `u ↦ k u`.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::linalg::wrap01;

/// Odd, piecewise-C¹ lift with a steep core around 0, a linear ramp in slope,
/// and a constant outer slope chosen so that the lift has degree `k`.
#[derive(Debug, Clone, Serialize)]
pub struct BetaProfile {
    pub k: u32,
    pub inner_slope: f64,
    pub inner_width: f64,
    pub ramp_width: f64,
    pub outer_slope: f64,
}

impl BetaProfile {
    pub fn new(k: u32, inner_slope: f64, inner_width: f64, ramp_width: f64) -> Result<Self> {
        if k.is_multiple_of(2) || k < 3 {
            return Err(Error::InvalidInput(format!("profile degree must be odd and >= 3, got {k}")));
        }
        if inner_width <= 0.0 || ramp_width <= 0.0 || inner_width + ramp_width >= 0.5 {
            return Err(Error::InvalidInput("profile widths out of range".into()));
        }
        let denom = 0.5 - inner_width - ramp_width / 2.0;
        let outer_slope = (k as f64 / 2.0 - inner_slope * (inner_width + ramp_width / 2.0)) / denom;
        let p = BetaProfile { k, inner_slope, inner_width, ramp_width, outer_slope };
        let min = p.min_derivative();
        if min <= 1.0 {
            return Err(Error::NotExpanding { min_derivative: min });
        }
        Ok(p)
    }

    fn ramp_end(&self) -> f64 {
        self.inner_width + self.ramp_width
    }

    fn g_ramp_end(&self) -> f64 {
        self.inner_slope * self.inner_width + (self.inner_slope + self.outer_slope) * self.ramp_width / 2.0
    }

    /// Lift on [-1/2, 1/2] → [-k/2, k/2].
    pub fn g(&self, t: f64) -> f64 {
        let u = t.abs();
        let (s0, s1, w0, wr) = (self.inner_slope, self.outer_slope, self.inner_width, self.ramp_width);
        let g = if u <= w0 {
            s0 * u
        } else if u <= w0 + wr {
            let d = u - w0;
            s0 * w0 + s0 * d + (s1 - s0) * d * d / (2.0 * wr)
        } else {
            self.g_ramp_end() + s1 * (u - self.ramp_end())
        };
        g.copysign(t)
    }

    pub fn g_prime(&self, t: f64) -> f64 {
        let u = t.abs();
        let (s0, s1, w0, wr) = (self.inner_slope, self.outer_slope, self.inner_width, self.ramp_width);
        if u <= w0 {
            s0
        } else if u <= w0 + wr {
            s0 + (s1 - s0) * (u - w0) / wr
        } else {
            s1
        }
    }

    /// Inverse of `g` on [-k/2, k/2].
    pub fn g_inv(&self, y: f64) -> f64 {
        let v = y.abs();
        let (s0, s1, w0, wr) = (self.inner_slope, self.outer_slope, self.inner_width, self.ramp_width);
        let g0 = s0 * w0;
        let t = if v <= g0 {
            v / s0
        } else if v <= self.g_ramp_end() {
            // (s1-s0)/(2 wr) d² + s0 d - (v - g0) = 0
            let qa = (s1 - s0) / (2.0 * wr);
            let c = v - g0;
            let d = if qa.abs() < 1e-15 {
                c / s0
            } else {
                // Stable root of the quadratic.
                2.0 * c / (s0 + (s0 * s0 + 4.0 * qa * c).sqrt())
            };
            w0 + d
        } else {
            self.ramp_end() + (v - self.g_ramp_end()) / s1
        };
        t.copysign(y)
    }

    pub fn min_derivative(&self) -> f64 {
        self.inner_slope.min(self.outer_slope)
    }

    pub fn max_derivative(&self) -> f64 {
        self.inner_slope.max(self.outer_slope)
    }
}

#[derive(Debug, Clone, Serialize)]
pub enum CircleMap {
    /// `θ ↦ k θ mod 1`.
    Times(u32),
    Profile(BetaProfile),
}

impl CircleMap {
    pub fn degree(&self) -> u32 {
        match self {
            CircleMap::Times(k) => *k,
            CircleMap::Profile(p) => p.k,
        }
    }

    /// Monotone lift [0,1] → [0,k] with `lift(0) = 0`.
    pub fn lift(&self, t: f64) -> f64 {
        match self {
            CircleMap::Times(k) => *k as f64 * t,
            CircleMap::Profile(p) => {
                if t <= 0.5 {
                    p.g(t)
                } else {
                    p.g(t - 1.0) + p.k as f64
                }
            }
        }
    }

    /// Inverse of `lift` on [0,k].
    pub fn lift_inverse(&self, y: f64) -> f64 {
        match self {
            CircleMap::Times(k) => y / *k as f64,
            CircleMap::Profile(p) => {
                let half = p.k as f64 / 2.0;
                if y <= half {
                    p.g_inv(y)
                } else {
                    p.g_inv(y - p.k as f64) + 1.0
                }
            }
        }
    }

    pub fn apply(&self, t: f64) -> f64 {
        wrap01(self.lift(wrap01(t)))
    }

    pub fn derivative(&self, t: f64) -> f64 {
        match self {
            CircleMap::Times(k) => *k as f64,
            CircleMap::Profile(p) => {
                let t = wrap01(t);
                p.g_prime(if t <= 0.5 { t } else { t - 1.0 })
            }
        }
    }

    pub fn min_derivative(&self) -> f64 {
        match self {
            CircleMap::Times(k) => *k as f64,
            CircleMap::Profile(p) => p.min_derivative(),
        }
    }

    /// Digit of `t`: index of the inverse branch containing it.
    pub fn digit(&self, t: f64) -> u32 {
        let y = self.lift(wrap01(t));
        (y.floor() as u32).min(self.degree() - 1)
    }

    /// Preimage of `t` on the inverse branch `d`.
    pub fn inverse_branch(&self, t: f64, d: u32) -> f64 {
        self.lift_inverse(wrap01(t) + d as f64)
    }

    /// All `k` preimages of `t`, ordered by branch.
    pub fn preimages(&self, t: f64) -> Vec<f64> {
        (0..self.degree()).map(|d| self.inverse_branch(t, d)).collect()
    }

    /// Conjugacy `h` with `h ∘ β = k h (mod 1)`, from `depth` k-ary digits.
    pub fn conjugacy(&self, t: f64, depth: usize) -> f64 {
        match self {
            CircleMap::Times(_) => wrap01(t),
            CircleMap::Profile(_) => {
                let k = self.degree() as f64;
                let mut t = wrap01(t);
                let mut s = 0.0;
                let mut p = 1.0;
                for _ in 0..depth {
                    let y = self.lift(t);
                    let d = y.floor().min(k - 1.0);
                    p /= k;
                    s += d * p;
                    t = y - d;
                }
                s
            }
        }
    }

    /// Inverse of the conjugacy: the point whose k-ary code is that of `u`.
    pub fn conjugacy_inverse(&self, u: f64, depth: usize) -> f64 {
        match self {
            CircleMap::Times(_) => u,
            CircleMap::Profile(_) => {
                if u >= 1.0 {
                    return 1.0;
                }
                if u <= 0.0 {
                    return 0.0;
                }
                let k = self.degree();
                let mut digits = Vec::with_capacity(depth);
                let mut v = u;
                for _ in 0..depth {
                    let y = v * k as f64;
                    let d = (y.floor() as u32).min(k - 1);
                    digits.push(d);
                    v = y - d as f64;
                }
                let mut t = self.conjugacy_inverse_seed(v);
                for &d in digits.iter().rev() {
                    t = self.lift_inverse(t + d as f64);
                }
                t
            }
        }
    }

    fn conjugacy_inverse_seed(&self, v: f64) -> f64 {
        v.clamp(0.0, 1.0)
    }

    /// `ν_β(I)` for an arc `[lo, hi]` (with `lo` possibly negative), as the
    /// Lebesgue measure of its conjugated image.
    pub fn nu_arc(&self, lo: f64, hi: f64, depth: usize) -> f64 {
        if hi <= lo {
            return 0.0;
        }
        if hi - lo >= 1.0 {
            return 1.0;
        }
        wrap01(self.conjugacy(hi, depth) - self.conjugacy(lo, depth))
    }

    /// `ν_β([-ε, ε])`.
    pub fn nu_symmetric(&self, eps: f64, depth: usize) -> f64 {
        if eps <= 0.0 {
            return 0.0;
        }
        self.conjugacy(eps, depth) + 1.0 - self.conjugacy(1.0 - eps, depth)
    }

    /// Sup-norm residual of `h ∘ β − k h (mod 1)` on `n` grid points.
    pub fn conjugacy_residual(&self, depth: usize, n: usize) -> f64 {
        let k = self.degree() as f64;
        (0..n)
            .map(|i| {
                let t = (i as f64 + 0.5) / n as f64;
                let lhs = self.conjugacy(self.apply(t), depth);
                let rhs = wrap01(k * self.conjugacy(t, depth));
                crate::linalg::circle_diff(lhs, rhs).abs()
            })
            .fold(0.0, f64::max)
    }
}
