//! Torus maps `x ↦ A x + amp·sin(2π x₀)·v (mod 1)` with `v` a stable
//! eigenvector of `A`.

use std::f64::consts::PI;

use nalgebra::DMatrix;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::linalg::wrap01;
use crate::toral::ToralAutomorphism;

#[derive(Debug, Clone, Serialize)]
pub struct TorusMap {
    pub auto: ToralAutomorphism,
    pub amplitude: f64,
    /// Unit stable eigenvector carrying the perturbation.
    pub direction: Vec<f64>,
    /// Eigenvalue of `A` on `direction`.
    pub direction_eigenvalue: f64,
    #[serde(skip)]
    a_inv: DMatrix<f64>,
    /// Orthonormal basis of the stable subspace (columns).
    #[serde(skip)]
    cs_basis: DMatrix<f64>,
}

impl TorusMap {
    /// `direction_index` selects the stable eigen-direction (0 = weakest
    /// contraction).
    pub fn new(auto: ToralAutomorphism, amplitude: f64, direction_index: usize) -> Result<Self> {
        let d = auto.dim();
        let (direction, direction_eigenvalue) = if auto.stable_basis.is_empty() {
            return Err(Error::InvalidInput("automorphism has no stable direction".into()));
        } else {
            let i = direction_index.min(auto.stable_basis.len() - 1);
            let v = auto.stable_basis[i].clone();
            let n = crate::linalg::norm(&v);
            (v.iter().map(|c| c / n).collect::<Vec<_>>(), auto.stable_eigenvalues[i])
        };
        let a_inv = auto
            .matrix_f64()
            .try_inverse()
            .ok_or_else(|| Error::InvalidInput("singular matrix".into()))?;
        let s = DMatrix::from_fn(d, auto.stable_basis.len(), |r, c| auto.stable_basis[c][r]);
        let cs_basis = s.qr().q();
        Ok(TorusMap { auto, amplitude, direction, direction_eigenvalue, a_inv, cs_basis })
    }

    pub fn dim(&self) -> usize {
        self.auto.dim()
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        let mut y = self.auto.apply(x);
        let p = self.amplitude * (2.0 * PI * x[0]).sin();
        for (yi, vi) in y.iter_mut().zip(&self.direction) {
            *yi = wrap01(*yi + p * vi);
        }
        y
    }

    /// Displacement `f(x) − A x` on the lift.
    pub fn displacement(&self, x: &[f64]) -> Vec<f64> {
        let p = self.amplitude * (2.0 * PI * x[0]).sin();
        self.direction.iter().map(|v| p * v).collect()
    }

    pub fn derivative(&self, x: &[f64]) -> DMatrix<f64> {
        let mut m = self.auto.matrix_f64();
        let p = self.amplitude * 2.0 * PI * (2.0 * PI * x[0]).cos();
        for (i, v) in self.direction.iter().enumerate() {
            m[(i, 0)] += p * v;
        }
        m
    }

    /// Exact inverse: solve the scalar equation for x₀, then back-substitute.
    pub fn inverse(&self, y: &[f64]) -> Result<Vec<f64>> {
        let d = self.dim();
        let yv = nalgebra::DVector::from_column_slice(y);
        let z = &self.a_inv * yv;
        let w: Vec<f64> = self.direction.iter().map(|v| v / self.direction_eigenvalue).collect();
        let c = self.amplitude * w[0];
        if (2.0 * PI * c).abs() >= 1.0 {
            return Err(Error::NoConvergence { rate: (2.0 * PI * c).abs() });
        }
        // x0 + c sin(2π x0) = z0
        let mut x0 = z[0];
        for _ in 0..50 {
            let f = x0 + c * (2.0 * PI * x0).sin() - z[0];
            let fp = 1.0 + 2.0 * PI * c * (2.0 * PI * x0).cos();
            let step = f / fp;
            x0 -= step;
            if step.abs() < 1e-16 {
                break;
            }
        }
        let s = self.amplitude * (2.0 * PI * x0).sin();
        let mut x = vec![0.0; d];
        for i in 0..d {
            x[i] = wrap01(if i == 0 { x0 } else { z[i] - s * self.direction[i] / self.direction_eigenvalue });
        }
        Ok(x)
    }

    /// Restriction of `Df(x)` to the stable subspace of `A`, which the
    /// perturbation leaves invariant, in an orthonormal basis.
    pub fn cs_block(&self, x: &[f64]) -> DMatrix<f64> {
        let q = &self.cs_basis;
        q.transpose() * self.derivative(x) * q
    }

    pub fn cs_basis(&self) -> &DMatrix<f64> {
        &self.cs_basis
    }

    /// Expansion along E^u in the quotient by E^cs: exactly λ_u.
    pub fn uu_rate(&self) -> f64 {
        self.auto.unstable_rates[0]
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::toral::hyperbolic_split;

    fn da(amp: f64) -> TorusMap {
        let a = hyperbolic_split(&[vec![3, 2, 1], vec![2, 2, 1], vec![1, 1, 1]]).unwrap();
        TorusMap::new(a, amp, 0).unwrap()
    }

    #[test]
    fn inverse_roundtrip() {
        let f = da(0.05);
        for i in 0..100 {
            let x = vec![(i as f64 * 0.173).fract(), (i as f64 * 0.311).fract(), (i as f64 * 0.529).fract()];
            let y = f.apply(&x);
            let z = f.inverse(&y).unwrap();
            assert!(crate::linalg::torus_dist(&x, &z) < 1e-12);
        }
    }

    #[test]
    fn stable_plane_is_invariant() {
        let f = da(0.05);
        let q = f.cs_basis().clone();
        for i in 0..20 {
            let x = vec![i as f64 / 20.0, 0.3, 0.7];
            let img = f.derivative(&x) * &q;
            let resid = &img - &q * (q.transpose() * &img);
            assert!(resid.norm() < 1e-12);
        }
    }

    #[test]
    fn weak_stable_eigenvalue() {
        let f = da(0.0);
        assert!((f.direction_eigenvalue - 0.643_104_132_107_9).abs() < 1e-9);
    }
}
