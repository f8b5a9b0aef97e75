//! Small numerical helpers shared across modules.

use nalgebra::{DMatrix, DVector};

/// Reduces `x` to `[0, 1)`.
#[inline]
pub fn wrap01(x: f64) -> f64 {
    let r = x - x.floor();
    if r >= 1.0 {
        0.0
    } else {
        r
    }
}

/// Reduces `x` to `[-1/2, 1/2)`.
#[inline]
pub fn wrap_centered(x: f64) -> f64 {
    x - (x + 0.5).floor()
}

/// Shortest signed displacement `b - a` on the circle.
#[inline]
pub fn circle_diff(a: f64, b: f64) -> f64 {
    wrap_centered(b - a)
}

pub fn torus_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| wrap_centered(y - x).powi(2))
        .sum::<f64>()
        .sqrt()
}

pub fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Largest singular value.
pub fn op_norm(m: &DMatrix<f64>) -> f64 {
    if m.nrows() == 0 || m.ncols() == 0 {
        return 0.0;
    }
    if m.ncols() == 1 {
        return m.column(0).norm();
    }
    m.clone()
        .svd(false, false)
        .singular_values
        .iter()
        .cloned()
        .fold(0.0, f64::max)
}

/// Orthonormal basis of the column span (thin QR). Returns `None` when a
/// column collapses.
pub fn orthonormalize(m: &DMatrix<f64>) -> Option<(DMatrix<f64>, Vec<f64>)> {
    let qr = m.clone().qr();
    let r = qr.r();
    let mut q = qr.q();
    let mut diag = Vec::with_capacity(m.ncols());
    for j in 0..m.ncols() {
        let d = r[(j, j)];
        if !d.is_finite() || d.abs() < 1e-300 {
            return None;
        }
        if d < 0.0 {
            let mut col = q.column_mut(j);
            col.neg_mut();
        }
        diag.push(d.abs());
    }
    Some((q, diag))
}

/// Distance between two subspaces given by orthonormal bases (spectral norm
/// of the difference of projectors).
pub fn subspace_distance(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    let pa = a * a.transpose();
    let pb = b * b.transpose();
    op_norm(&(pa - pb))
}

/// Perron–Frobenius eigenvalue of a nonnegative matrix by power iteration.
pub fn perron_root(m: &DMatrix<f64>) -> (f64, DVector<f64>) {
    let n = m.nrows();
    let mut v = DVector::from_element(n, 1.0 / n as f64);
    let mut lambda = 0.0;
    for _ in 0..10_000 {
        let w = m * &v;
        let s: f64 = w.iter().sum();
        if s <= 0.0 {
            return (0.0, v);
        }
        let next = w / s;
        let diff = (&next - &v).amax();
        v = next;
        lambda = s;
        if diff < 1e-16 {
            break;
        }
    }
    // Rayleigh-style refinement on the converged vector.
    let w = m * &v;
    let num: f64 = w.iter().sum();
    let den: f64 = v.iter().sum();
    if den > 0.0 {
        lambda = num / den;
    }
    (lambda, v)
}

/// Kolmogorov–Smirnov statistic of a sample against Uniform[lo, hi].
pub fn ks_uniform(sample: &[f64], lo: f64, hi: f64) -> f64 {
    if sample.is_empty() {
        return 1.0;
    }
    let mut s: Vec<f64> = sample.iter().map(|x| (x - lo) / (hi - lo)).collect();
    s.sort_by(|a, b| a.total_cmp(b));
    let n = s.len() as f64;
    let mut d: f64 = 0.0;
    for (i, x) in s.iter().enumerate() {
        let x = x.clamp(0.0, 1.0);
        d = d.max((i as f64 + 1.0) / n - x).max(x - i as f64 / n);
    }
    d
}

/// Mean and 95% half-width from `blocks` batch means.
pub fn batch_means(values: &[f64], blocks: usize) -> (f64, f64) {
    let n = values.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    let b = blocks.min(n).max(1);
    if b < 2 {
        return (mean, f64::INFINITY);
    }
    let size = n / b;
    let means: Vec<f64> = (0..b)
        .map(|i| {
            let chunk = &values[i * size..(i + 1) * size];
            chunk.iter().sum::<f64>() / size as f64
        })
        .collect();
    let m = means.iter().sum::<f64>() / b as f64;
    let var = means.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (b - 1) as f64;
    (mean, student_t975(b - 1) * (var / b as f64).sqrt())
}

fn student_t975(dof: usize) -> f64 {
    const TABLE: [f64; 10] = [12.706, 4.303, 3.182, 2.776, 2.571, 2.447, 2.365, 2.306, 2.262, 2.228];
    if dof == 0 {
        f64::INFINITY
    } else if dof <= TABLE.len() {
        TABLE[dof - 1]
    } else {
        1.96 + 2.5 / dof as f64
    }
}

/// Ordinary least squares `y = a + b x`; returns `(a, b, stderr_b)`.
pub fn linear_fit(x: &[f64], y: &[f64]) -> (f64, f64, f64) {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxx: f64 = x.iter().map(|v| (v - mx).powi(2)).sum();
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    if sxx == 0.0 {
        return (my, f64::NAN, f64::INFINITY);
    }
    let slope = sxy / sxx;
    let icpt = my - slope * mx;
    if x.len() < 3 {
        return (icpt, slope, f64::INFINITY);
    }
    let rss: f64 = x
        .iter()
        .zip(y)
        .map(|(a, b)| (b - icpt - slope * a).powi(2))
        .sum();
    let se = (rss / (n - 2.0) / sxx).sqrt();
    (icpt, slope, se)
}
