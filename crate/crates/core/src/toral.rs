//! Hyperbolic toral automorphisms, their invariant splittings and Markov
//! partitions of the base (circle arcs for expanding circle factors, the
//! two-rectangle partition for 2×2 automorphisms).

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::linalg::{perron_root, wrap01};

/// Integer hyperbolic matrix with its invariant splitting.
#[derive(Debug, Clone, Serialize)]
pub struct ToralAutomorphism {
    pub matrix: Vec<Vec<i64>>,
    pub det_sign: i32,
    /// Unstable eigen-directions, most expanding first.
    pub unstable_basis: Vec<Vec<f64>>,
    /// Stable eigen-directions, weakest contraction first.
    pub stable_basis: Vec<Vec<f64>>,
    pub unstable_rates: Vec<f64>,
    pub stable_rates: Vec<f64>,
    /// Signed real eigenvalues matching the bases (modulus for complex pairs).
    pub unstable_eigenvalues: Vec<f64>,
    pub stable_eigenvalues: Vec<f64>,
    pub base_entropy: f64,
}

impl ToralAutomorphism {
    pub fn dim(&self) -> usize {
        self.matrix.len()
    }

    pub fn matrix_f64(&self) -> DMatrix<f64> {
        let d = self.dim();
        DMatrix::from_fn(d, d, |i, j| self.matrix[i][j] as f64)
    }

    /// Columns: unstable directions then stable directions.
    pub fn eigen_frame(&self) -> DMatrix<f64> {
        let d = self.dim();
        let cols: Vec<&Vec<f64>> = self.unstable_basis.iter().chain(&self.stable_basis).collect();
        DMatrix::from_fn(d, d, |i, j| cols[j][i])
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        self.matrix
            .iter()
            .map(|row| row.iter().zip(x).map(|(a, b)| *a as f64 * b).sum())
            .collect()
    }

    /// Eigenvalues sorted by decreasing modulus: unstable then stable.
    pub fn eigenvalues(&self) -> Vec<f64> {
        self.unstable_eigenvalues
            .iter()
            .chain(&self.stable_eigenvalues)
            .cloned()
            .collect()
    }

    /// Largest residual ‖A v − proj_S(A v)‖ over basis vectors of each
    /// invariant subspace.
    pub fn invariance_residual(&self) -> f64 {
        let a = self.matrix_f64();
        let mut worst: f64 = 0.0;
        for basis in [&self.unstable_basis, &self.stable_basis] {
            if basis.is_empty() {
                continue;
            }
            let d = self.dim();
            let b = DMatrix::from_fn(d, basis.len(), |i, j| basis[j][i]);
            let q = b.clone().qr().q();
            for v in basis {
                let av = &a * DVector::from_column_slice(v);
                let proj = &q * (q.transpose() * &av);
                worst = worst.max((av - proj).norm());
            }
        }
        worst
    }
}

/// Eigen-decomposes a unimodular integer matrix into its unstable and stable
/// subspaces.
pub fn hyperbolic_split(matrix: &[Vec<i64>]) -> Result<ToralAutomorphism> {
    let d = matrix.len();
    if d == 0 || matrix.iter().any(|r| r.len() != d) {
        return Err(Error::InvalidInput("matrix must be square".into()));
    }
    let a = DMatrix::from_fn(d, d, |i, j| matrix[i][j] as f64);
    let det = a.determinant();
    if (det.abs() - 1.0).abs() > 1e-9 {
        return Err(Error::NotUnimodular { det });
    }
    let eig = a.clone().complex_eigenvalues();
    for z in eig.iter() {
        if (z.norm() - 1.0).abs() < 1e-9 {
            return Err(Error::NotHyperbolic { modulus: z.norm() });
        }
    }

    // Group eigenvalues: real ones individually, complex ones as conjugate pairs.
    let mut groups: Vec<(f64, f64, bool)> = Vec::new(); // (re, im, is_pair)
    let mut used = vec![false; d];
    for i in 0..d {
        if used[i] {
            continue;
        }
        used[i] = true;
        let z = eig[i];
        if z.im.abs() < 1e-10 {
            groups.push((z.re, 0.0, false));
        } else {
            if let Some(j) = (0..d).find(|&j| !used[j] && (eig[j] - z.conj()).norm() < 1e-8) {
                used[j] = true;
            }
            groups.push((z.re, z.im.abs(), true));
        }
    }
    groups.sort_by(|x, y| {
        let mx = (x.0 * x.0 + x.1 * x.1).sqrt();
        let my = (y.0 * y.0 + y.1 * y.1).sqrt();
        my.total_cmp(&mx)
    });

    let mut unstable_basis = Vec::new();
    let mut stable_basis = Vec::new();
    let mut unstable_rates = Vec::new();
    let mut stable_rates = Vec::new();
    let mut unstable_eigenvalues = Vec::new();
    let mut stable_eigenvalues = Vec::new();
    let id = DMatrix::<f64>::identity(d, d);
    for (re, im, pair) in groups {
        let modulus = (re * re + im * im).sqrt();
        let (vecs, eig_value) = if pair {
            let q = &a * &a - &a * (2.0 * re) + &id * (modulus * modulus);
            (null_space(&q, 2), modulus)
        } else {
            let refined = refine_real_eigenvalue(&a, re);
            let q = &a - &id * refined;
            (null_space(&q, 1), refined)
        };
        let unstable = modulus > 1.0;
        for mut v in vecs {
            // Deterministic orientation: first significant component positive.
            if let Some(first) = v.iter().find(|c| c.abs() > 1e-8) {
                if *first < 0.0 {
                    v.iter_mut().for_each(|c| *c = -*c);
                }
            }
            if unstable {
                unstable_basis.push(v);
                unstable_rates.push(modulus);
                unstable_eigenvalues.push(eig_value);
            } else {
                stable_basis.push(v);
                stable_rates.push(modulus);
                stable_eigenvalues.push(eig_value);
            }
        }
    }
    let base_entropy = unstable_rates.iter().map(|r| r.ln()).sum();
    Ok(ToralAutomorphism {
        matrix: matrix.to_vec(),
        det_sign: det.signum() as i32,
        unstable_basis,
        stable_basis,
        unstable_rates,
        stable_rates,
        unstable_eigenvalues,
        stable_eigenvalues,
        base_entropy,
    })
}

fn refine_real_eigenvalue(a: &DMatrix<f64>, mut x: f64) -> f64 {
    // Newton on the characteristic polynomial via det(A - xI).
    let d = a.nrows();
    let id = DMatrix::<f64>::identity(d, d);
    for _ in 0..20 {
        let f = (a - &id * x).determinant();
        let h = 1e-7 * x.abs().max(1.0);
        let fp = ((a - &id * (x + h)).determinant() - (a - &id * (x - h)).determinant()) / (2.0 * h);
        if fp == 0.0 {
            break;
        }
        let step = f / fp;
        x -= step;
        if step.abs() < 1e-16 * x.abs().max(1.0) {
            break;
        }
    }
    x
}

/// Right singular vectors belonging to the `k` smallest singular values.
fn null_space(m: &DMatrix<f64>, k: usize) -> Vec<Vec<f64>> {
    let svd = m.clone().svd(false, true);
    let vt = svd.v_t.expect("v_t requested");
    let mut idx: Vec<usize> = (0..svd.singular_values.len()).collect();
    idx.sort_by(|&i, &j| svd.singular_values[i].total_cmp(&svd.singular_values[j]));
    idx.into_iter()
        .take(k)
        .map(|i| vt.row(i).iter().cloned().collect())
        .collect()
}

/// Closed rectangle in eigen-coordinates (α along E^u, β along E^s).
#[derive(Debug, Clone, Copy, Serialize)]
pub struct Rect {
    pub alpha: (f64, f64),
    pub beta: (f64, f64),
    /// Index of the coarse rectangle this cell refines.
    pub parent: usize,
    /// Coarse rectangle that the image of this cell lands in.
    pub target: usize,
}

impl Rect {
    fn contains(&self, a: f64, b: f64, tol: f64) -> bool {
        a >= self.alpha.0 - tol && a <= self.alpha.1 + tol && b >= self.beta.0 - tol && b <= self.beta.1 + tol
    }
}

/// Markov partition of the circle `u ↦ k u` by `k` arcs.
#[derive(Debug, Clone, Serialize)]
pub struct CirclePartition {
    pub k: u32,
}

/// Markov partition of T² for a 2×2 hyperbolic automorphism.
#[derive(Debug, Clone, Serialize)]
pub struct TorusPartition {
    pub auto: ToralAutomorphism,
    pub coarse: Vec<Rect>,
    pub cells: Vec<Rect>,
    #[serde(skip)]
    frame: DMatrix<f64>,
    #[serde(skip)]
    frame_inv: DMatrix<f64>,
    /// Eigen-coordinates of the lattice generators e1, e2.
    lattice: [[f64; 2]; 2],
    lambda_u: f64,
    lambda_s: f64,
}

#[derive(Debug, Clone, Serialize)]
pub enum MarkovStructure {
    Circle(CirclePartition),
    Torus(TorusPartition),
}

/// Which Markov structure to build.
pub enum MarkovInput<'a> {
    Circle(u32),
    Automorphism(&'a ToralAutomorphism),
}

pub fn build_markov_structure(input: MarkovInput<'_>) -> Result<MarkovStructure> {
    match input {
        MarkovInput::Circle(k) => {
            if k < 2 {
                return Err(Error::InvalidInput(format!("circle degree {k} < 2")));
            }
            Ok(MarkovStructure::Circle(CirclePartition { k }))
        }
        MarkovInput::Automorphism(auto) => match auto.dim() {
            1 => Err(Error::UnsupportedDimension(1)),
            2 => Ok(MarkovStructure::Torus(TorusPartition::new(auto)?)),
            d => Err(Error::UnsupportedDimension(d)),
        },
    }
}

/// Convenience wrapper that splits the matrix first, propagating
/// hyperbolicity errors.
pub fn markov_for_matrix(matrix: &[Vec<i64>]) -> Result<(ToralAutomorphism, MarkovStructure)> {
    let auto = hyperbolic_split(matrix)?;
    let ms = build_markov_structure(MarkovInput::Automorphism(&auto))?;
    Ok((auto, ms))
}

impl TorusPartition {
    fn new(auto: &ToralAutomorphism) -> Result<Self> {
        if auto.unstable_basis.len() != 1 || auto.stable_basis.len() != 1 {
            return Err(Error::ConstructionFailed("need one unstable and one stable direction".into()));
        }
        let lambda_u = auto.unstable_eigenvalues[0];
        let lambda_s = auto.stable_eigenvalues[0];
        if lambda_u <= 0.0 {
            return Err(Error::ConstructionFailed("negative unstable eigenvalue".into()));
        }
        let mut eu = auto.unstable_basis[0].clone();
        let mut es = auto.stable_basis[0].clone();
        if eu[0] < 0.0 {
            eu.iter_mut().for_each(|c| *c = -*c);
        }
        if es[0] < 0.0 {
            es.iter_mut().for_each(|c| *c = -*c);
        }
        let frame = DMatrix::from_row_slice(2, 2, &[eu[0], es[0], eu[1], es[1]]);
        let frame_inv = frame
            .clone()
            .try_inverse()
            .ok_or_else(|| Error::ConstructionFailed("singular eigen frame".into()))?;
        let e1 = [frame_inv[(0, 0)], frame_inv[(1, 0)]];
        let e2 = [frame_inv[(0, 1)], frame_inv[(1, 1)]];
        let (a1, b1, a2, b2) = (e1[0], e1[1], e2[0], e2[1]);
        if !(a1 > 0.0 && a2 > 0.0 && b1 > 0.0 && b2 < 0.0) {
            return Err(Error::ConstructionFailed(format!(
                "unsupported conjugacy type (lattice eigen-coordinates {a1:.3},{b1:.3},{a2:.3},{b2:.3})"
            )));
        }
        // Two rectangles tiling the torus; sides lie on W^s(0) and W^u(0).
        let pair = vec![
            Rect { alpha: (0.0, a1), beta: (b2, 0.0), parent: 0, target: 0 },
            Rect { alpha: (-a2, 0.0), beta: (-b1, 0.0), parent: 1, target: 1 },
        ];
        let mut part = TorusPartition {
            auto: auto.clone(),
            coarse: Vec::new(),
            cells: Vec::new(),
            frame,
            frame_inv,
            lattice: [e1, e2],
            lambda_u,
            lambda_s,
        };
        // A flips W^s when lambda_s < 0, so the stable boundary must be
        // symmetric about 0: intersect with the point reflection of the pair.
        part.coarse = if lambda_s < 0.0 { part.symmetrize(&pair) } else { pair };
        part.cells = part.refine(&part.coarse.clone())?;
        Ok(part)
    }

    fn lattice_point(&self, m: i64, n: i64) -> [f64; 2] {
        [
            m as f64 * self.lattice[0][0] + n as f64 * self.lattice[1][0],
            m as f64 * self.lattice[0][1] + n as f64 * self.lattice[1][1],
        ]
    }

    fn symmetrize(&self, pair: &[Rect]) -> Vec<Rect> {
        let mut out = Vec::new();
        for r in pair {
            for q in pair {
                for m in -3..=3 {
                    for n in -3..=3 {
                        let t = self.lattice_point(m, n);
                        let alpha = (r.alpha.0.max(-q.alpha.1 + t[0]), r.alpha.1.min(-q.alpha.0 + t[0]));
                        let beta = (r.beta.0.max(-q.beta.1 + t[1]), r.beta.1.min(-q.beta.0 + t[1]));
                        if alpha.1 - alpha.0 > 1e-12 && beta.1 - beta.0 > 1e-12 {
                            let idx = out.len();
                            out.push(Rect { alpha, beta, parent: idx, target: idx });
                        }
                    }
                }
            }
        }
        out
    }

    /// Splits each coarse rectangle into the components of R_i ∩ A^{-1}(R_j).
    fn refine(&self, coarse: &[Rect]) -> Result<Vec<Rect>> {
        let reach = (2.0 * self.lambda_u).ceil() as i64 + 4;
        let mut cells = Vec::new();
        for (i, ri) in coarse.iter().enumerate() {
            let mut pieces: Vec<Rect> = Vec::new();
            for (j, rj) in coarse.iter().enumerate() {
                for m in -reach..=reach {
                    for n in -reach..=reach {
                        let t = self.lattice_point(m, n);
                        let a0 = (rj.alpha.0 + t[0]) / self.lambda_u;
                        let a1 = (rj.alpha.1 + t[0]) / self.lambda_u;
                        let (b0, b1) = {
                            let x = (rj.beta.0 + t[1]) / self.lambda_s;
                            let y = (rj.beta.1 + t[1]) / self.lambda_s;
                            (x.min(y), x.max(y))
                        };
                        let lo = a0.max(ri.alpha.0);
                        let hi = a1.min(ri.alpha.1);
                        if hi - lo <= 1e-12 {
                            continue;
                        }
                        let blo = ((rj.beta.0 + t[1]) / self.lambda_s).min((rj.beta.1 + t[1]) / self.lambda_s);
                        let bhi = ((rj.beta.0 + t[1]) / self.lambda_s).max((rj.beta.1 + t[1]) / self.lambda_s);
                        if bhi.min(ri.beta.1) - blo.max(ri.beta.0) > 1e-12
                            && (a0 < ri.alpha.0 - 1e-9 || a1 > ri.alpha.1 + 1e-9)
                        {
                            return Err(Error::ConstructionFailed(format!(
                                "image of a piece of rectangle {i} does not cross rectangle {j}"
                            )));
                        }
                        let blo = b0.max(ri.beta.0);
                        let bhi = b1.min(ri.beta.1);
                        if bhi - blo <= 1e-12 {
                            continue;
                        }
                        if b0 > ri.beta.0 + 1e-9 || b1 < ri.beta.1 - 1e-9 {
                            return Err(Error::ConstructionFailed(format!(
                                "preimage of rectangle {j} crosses rectangle {i} partially"
                            )));
                        }
                        pieces.push(Rect { alpha: (lo, hi), beta: ri.beta, parent: i, target: j });
                    }
                }
            }
            pieces.sort_by(|a, b| a.alpha.0.total_cmp(&b.alpha.0));
            let covered: f64 = pieces.iter().map(|p| p.alpha.1 - p.alpha.0).sum();
            if (covered - (ri.alpha.1 - ri.alpha.0)).abs() > 1e-9 {
                return Err(Error::ConstructionFailed(format!("rectangle {i} not covered by preimages")));
            }
            cells.extend(pieces);
        }
        Ok(cells)
    }

    pub fn to_eigen(&self, x: &[f64]) -> [f64; 2] {
        let a = self.frame_inv[(0, 0)] * x[0] + self.frame_inv[(0, 1)] * x[1];
        let b = self.frame_inv[(1, 0)] * x[0] + self.frame_inv[(1, 1)] * x[1];
        [a, b]
    }

    pub fn from_eigen(&self, c: [f64; 2]) -> Vec<f64> {
        vec![
            self.frame[(0, 0)] * c[0] + self.frame[(0, 1)] * c[1],
            self.frame[(1, 0)] * c[0] + self.frame[(1, 1)] * c[1],
        ]
    }

    /// First cell (lowest index) containing a lift of `x`, with the local
    /// eigen-coordinates of that lift.
    pub fn locate(&self, x: &[f64]) -> Option<(usize, [f64; 2])> {
        let base = [wrap01(x[0]), wrap01(x[1])];
        let c = self.to_eigen(&base);
        let mut best: Option<(usize, [f64; 2])> = None;
        for m in -3..=3 {
            for n in -3..=3 {
                let t = self.lattice_point(m, n);
                let (a, b) = (c[0] + t[0], c[1] + t[1]);
                for (idx, cell) in self.cells.iter().enumerate() {
                    if best.is_some_and(|(bi, _)| bi <= idx) {
                        break;
                    }
                    if cell.contains(a, b, 1e-13) {
                        best = Some((idx, [a, b]));
                        break;
                    }
                }
            }
        }
        best
    }

    pub fn lambda_u(&self) -> f64 {
        self.lambda_u
    }

    pub fn lambda_s(&self) -> f64 {
        self.lambda_s
    }
}

impl MarkovStructure {
    pub fn num_cells(&self) -> usize {
        match self {
            MarkovStructure::Circle(c) => c.k as usize,
            MarkovStructure::Torus(t) => t.cells.len(),
        }
    }

    pub fn base_dim(&self) -> usize {
        match self {
            MarkovStructure::Circle(_) => 1,
            MarkovStructure::Torus(_) => 2,
        }
    }

    /// Cell of a base point; boundary points go to the lowest index.
    pub fn cell_of(&self, p: &[f64]) -> Option<usize> {
        self.locate(p).map(|(c, _)| c)
    }

    /// Cell and local (unstable, stable) coordinates.
    pub fn locate(&self, p: &[f64]) -> Option<(usize, (f64, f64))> {
        match self {
            MarkovStructure::Circle(c) => {
                if !p[0].is_finite() {
                    return None;
                }
                let u = wrap01(p[0]);
                let t = u * c.k as f64;
                let f = t.floor();
                let cell = if f == t && f > 0.0 { f as usize - 1 } else { f as usize };
                let cell = cell.min(c.k as usize - 1);
                // Boundary u = 0 belongs to cell 0 (lowest index of the two arcs).
                Some((cell, (if cell == 0 && u == 0.0 { 0.0 } else { u }, 0.0)))
            }
            MarkovStructure::Torus(t) => {
                if !(p[0].is_finite() && p[1].is_finite()) {
                    return None;
                }
                t.locate(p).map(|(c, e)| (c, (e[0], e[1])))
            }
        }
    }

    /// Range of the local unstable coordinate over a cell.
    pub fn unstable_range(&self, cell: usize) -> (f64, f64) {
        match self {
            MarkovStructure::Circle(c) => (cell as f64 / c.k as f64, (cell + 1) as f64 / c.k as f64),
            MarkovStructure::Torus(t) => t.cells[cell].alpha,
        }
    }

    pub fn stable_range(&self, cell: usize) -> (f64, f64) {
        match self {
            MarkovStructure::Circle(_) => (0.0, 0.0),
            MarkovStructure::Torus(t) => t.cells[cell].beta,
        }
    }

    /// Base point from local coordinates.
    pub fn point_from_local(&self, u: f64, s: f64) -> Vec<f64> {
        match self {
            MarkovStructure::Circle(_) => vec![wrap01(u)],
            MarkovStructure::Torus(t) => {
                let x = t.from_eigen([u, s]);
                vec![wrap01(x[0]), wrap01(x[1])]
            }
        }
    }

    /// Unstable plaque W^u_i(a): endpoints in local coordinates.
    pub fn unstable_plaque(&self, a: &[f64], cell: usize) -> Option<((f64, f64), (f64, f64))> {
        let (c, (_, s)) = self.locate_in(a, cell)?;
        let (lo, hi) = self.unstable_range(c);
        Some(((lo, s), (hi, s)))
    }

    /// Stable plaque W^s_i(a): endpoints in local coordinates.
    pub fn stable_plaque(&self, a: &[f64], cell: usize) -> Option<((f64, f64), (f64, f64))> {
        let (c, (u, _)) = self.locate_in(a, cell)?;
        let (lo, hi) = self.stable_range(c);
        Some(((u, lo), (u, hi)))
    }

    /// Local coordinates of `a` as a member of the given cell.
    pub fn locate_in(&self, a: &[f64], cell: usize) -> Option<(usize, (f64, f64))> {
        match self {
            MarkovStructure::Circle(c) => {
                let (lo, hi) = self.unstable_range(cell);
                let mut u = wrap01(a[0]);
                if u < lo - 1e-12 && (u + 1.0) <= hi + 1e-12 {
                    u += 1.0;
                }
                let _ = c;
                (u >= lo - 1e-12 && u <= hi + 1e-12).then_some((cell, (u, 0.0)))
            }
            MarkovStructure::Torus(t) => {
                let base = [wrap01(a[0]), wrap01(a[1])];
                let e = t.to_eigen(&base);
                let rect = t.cells.get(cell)?;
                for m in -3..=3 {
                    for n in -3..=3 {
                        let l = t.lattice_point(m, n);
                        let (x, y) = (e[0] + l[0], e[1] + l[1]);
                        if rect.contains(x, y, 1e-12) {
                            return Some((cell, (x, y)));
                        }
                    }
                }
                None
            }
        }
    }

    /// Local product bracket [a, b]: unstable coordinate of `a`, stable
    /// coordinate of `b`, both taken in `cell`.
    pub fn bracket(&self, a: &[f64], b: &[f64], cell: usize) -> Result<Vec<f64>> {
        let (_, (ua, _)) = self.locate_in(a, cell).ok_or(Error::BracketOutOfCell { cell })?;
        let (_, (_, sb)) = self.locate_in(b, cell).ok_or(Error::BracketOutOfCell { cell })?;
        Ok(self.point_from_local(ua, sb))
    }

    pub fn transition(&self) -> Vec<Vec<u8>> {
        match self {
            MarkovStructure::Circle(c) => vec![vec![1; c.k as usize]; c.k as usize],
            MarkovStructure::Torus(t) => t
                .cells
                .iter()
                .map(|ci| t.cells.iter().map(|cj| (cj.parent == ci.target) as u8).collect())
                .collect(),
        }
    }

    pub fn pf_eigenvalue(&self) -> f64 {
        let t = self.transition();
        let n = t.len();
        let m = DMatrix::from_fn(n, n, |i, j| t[i][j] as f64);
        perron_root(&m).0
    }

    pub fn pf_entropy(&self) -> f64 {
        self.pf_eigenvalue().ln()
    }

    /// Distance, measured along the unstable direction, from a base point to
    /// the stable boundary of its cell.
    pub fn stable_boundary_distance(&self, p: &[f64]) -> f64 {
        match self.locate(p) {
            Some((cell, (u, _))) => {
                let (lo, hi) = self.unstable_range(cell);
                (u - lo).min(hi - u).max(0.0)
            }
            None => 0.0,
        }
    }

    /// Maps a base point by the base dynamics.
    pub fn base_map(&self, p: &[f64]) -> Vec<f64> {
        match self {
            MarkovStructure::Circle(c) => vec![wrap01(c.k as f64 * p[0])],
            MarkovStructure::Torus(t) => {
                let y = t.auto.apply(p);
                vec![wrap01(y[0]), wrap01(y[1])]
            }
        }
    }

    /// Checks cover/disjointness, the Markov property, boundary invariance and
    /// the local product structure on random samples.
    pub fn verify<R: Rng>(&self, samples: usize, rng: &mut R) -> MarkovReport {
        match self {
            MarkovStructure::Circle(c) => {
                let mut worst: f64 = 0.0;
                for _ in 0..samples {
                    let u: f64 = rng.gen();
                    let (cell, _) = self.locate(&[u]).unwrap();
                    let image = self.base_map(&[u]);
                    let (lo, hi) = self.unstable_range(cell);
                    // Image of the arc covers the whole circle.
                    worst = worst.max(((hi - lo) * c.k as f64 - 1.0).abs());
                    let _ = image;
                }
                MarkovReport {
                    area_defect: 0.0,
                    overlap_area: 0.0,
                    markov_stable_defect: 0.0,
                    markov_unstable_defect: worst,
                    boundary_s_defect: 0.0,
                    boundary_u_defect: 0.0,
                    bracket_failures: 0,
                    pf_eigenvalue: self.pf_eigenvalue(),
                }
            }
            MarkovStructure::Torus(t) => t.verify(self, samples, rng),
        }
    }

    pub fn to_json(&self) -> serde_json::Value {
        let transition = self.transition();
        let pf = self.pf_eigenvalue();
        match self {
            MarkovStructure::Circle(c) => serde_json::json!({
                "kind": "circle",
                "k": c.k,
                "cells": (0..c.k).map(|i| serde_json::json!({
                    "arc": [i as f64 / c.k as f64, (i + 1) as f64 / c.k as f64]
                })).collect::<Vec<_>>(),
                "transition": transition,
                "pf_eigenvalue": pf,
                "pf_entropy": pf.ln(),
            }),
            MarkovStructure::Torus(t) => {
                let cells: Vec<serde_json::Value> = t
                    .cells
                    .iter()
                    .map(|r| {
                        let eig = [
                            [r.alpha.0, r.beta.0],
                            [r.alpha.1, r.beta.0],
                            [r.alpha.1, r.beta.1],
                            [r.alpha.0, r.beta.1],
                        ];
                        let torus: Vec<Vec<f64>> = eig.iter().map(|c| t.from_eigen(*c)).collect();
                        serde_json::json!({
                            "eigen_vertices": eig,
                            "torus_vertices": torus,
                            "parent": r.parent,
                            "image_parent": r.target,
                        })
                    })
                    .collect();
                serde_json::json!({
                    "kind": "torus2",
                    "matrix": t.auto.matrix,
                    "unstable_direction": t.auto.unstable_basis[0],
                    "stable_direction": t.auto.stable_basis[0],
                    "cells": cells,
                    "transition": transition,
                    "pf_eigenvalue": pf,
                    "pf_entropy": pf.ln(),
                    "base_entropy": t.auto.base_entropy,
                })
            }
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct MarkovReport {
    /// |total cell area − 1| (torus area in eigen-coordinates normalised).
    pub area_defect: f64,
    /// Fraction of sampled points lying in the interior of two cells.
    pub overlap_area: f64,
    pub markov_stable_defect: f64,
    pub markov_unstable_defect: f64,
    pub boundary_s_defect: f64,
    pub boundary_u_defect: f64,
    pub bracket_failures: usize,
    pub pf_eigenvalue: f64,
}

impl MarkovReport {
    pub fn passes(&self, tol: f64) -> bool {
        self.area_defect < 1e-12
            && self.overlap_area < 1e-12
            && self.markov_stable_defect < tol
            && self.markov_unstable_defect < tol
            && self.boundary_s_defect < tol
            && self.boundary_u_defect < tol
            && self.bracket_failures == 0
    }
}

impl TorusPartition {
    fn verify<R: Rng>(&self, ms: &MarkovStructure, samples: usize, rng: &mut R) -> MarkovReport {
        let det = self.frame.determinant().abs();
        let area: f64 = self
            .cells
            .iter()
            .map(|r| (r.alpha.1 - r.alpha.0) * (r.beta.1 - r.beta.0) * det)
            .sum();
        let mut overlaps = 0usize;
        let mut st_defect: f64 = 0.0;
        let mut un_defect: f64 = 0.0;
        let mut bs_defect: f64 = 0.0;
        let mut bu_defect: f64 = 0.0;
        let mut bracket_failures = 0usize;
        let interior = |r: &Rect, a: f64, b: f64| {
            a > r.alpha.0 + 1e-9 && a < r.alpha.1 - 1e-9 && b > r.beta.0 + 1e-9 && b < r.beta.1 - 1e-9
        };
        for _ in 0..samples {
            let x = [rng.gen::<f64>(), rng.gen::<f64>()];
            let e = self.to_eigen(&x);
            let mut hits = 0;
            for m in -3..=3 {
                for n in -3..=3 {
                    let l = self.lattice_point(m, n);
                    for r in &self.cells {
                        if interior(r, e[0] + l[0], e[1] + l[1]) {
                            hits += 1;
                        }
                    }
                }
            }
            if hits > 1 {
                overlaps += 1;
            }
            let Some((cell, (u, s))) = ms.locate(&x) else { continue };
            let rect = self.cells[cell];
            let ax = ms.base_map(&x);
            let Some((jcell, (ju, js))) = ms.locate(&ax) else { continue };
            // Stable plaque maps into the stable plaque of A(x).
            for k in 0..=8 {
                let sb = rect.beta.0 + (rect.beta.1 - rect.beta.0) * k as f64 / 8.0;
                let img = ms.base_map(&ms.point_from_local(u, sb));
                match ms.locate_in(&img, jcell) {
                    Some((_, (iu, _))) => st_defect = st_defect.max((iu - ju).abs()),
                    None => st_defect = st_defect.max(1.0),
                }
            }
            // Unstable plaque of A(x) is covered by the image of x's plaque.
            let jr = self.cells[jcell];
            for ua in [jr.alpha.0, jr.alpha.1] {
                let p = ms.point_from_local(ua, js);
                let back = self.inverse_base(&p);
                match ms.locate_in(&back, cell) {
                    Some((_, (_, bs))) => un_defect = un_defect.max((bs - s).abs()),
                    None => un_defect = un_defect.max(1.0),
                }
            }
            // Stable boundary forward-invariant, unstable boundary backward-invariant.
            let sb = ms.point_from_local(rect.alpha.0, s);
            let img = ms.base_map(&sb);
            bs_defect = bs_defect.max(self.edge_distance(ms, &img, true));
            let ub = ms.point_from_local(u, rect.beta.0);
            let pre = self.inverse_base(&ub);
            bu_defect = bu_defect.max(self.edge_distance(ms, &pre, false));
            // Local product structure for a random partner in the same cell.
            let v = rect.alpha.0 + (rect.alpha.1 - rect.alpha.0) * rng.gen::<f64>();
            let w = rect.beta.0 + (rect.beta.1 - rect.beta.0) * rng.gen::<f64>();
            let y = ms.point_from_local(v, w);
            match ms.bracket(&x, &y, cell) {
                Ok(z) => match ms.locate_in(&z, cell) {
                    Some((_, (zu, zs))) if (zu - u).abs() < 1e-9 && (zs - w).abs() < 1e-9 => {}
                    _ => bracket_failures += 1,
                },
                Err(_) => bracket_failures += 1,
            }
            let _ = ju;
        }
        MarkovReport {
            area_defect: (area - 1.0).abs(),
            overlap_area: overlaps as f64 / samples.max(1) as f64,
            markov_stable_defect: st_defect,
            markov_unstable_defect: un_defect,
            boundary_s_defect: bs_defect,
            boundary_u_defect: bu_defect,
            bracket_failures,
            pf_eigenvalue: ms.pf_eigenvalue(),
        }
    }

    fn inverse_base(&self, p: &[f64]) -> Vec<f64> {
        let a = self.auto.matrix_f64().try_inverse().expect("unimodular");
        let v = &a * DVector::from_column_slice(p);
        vec![wrap01(v[0]), wrap01(v[1])]
    }

    /// Distance from `p` to the nearest stable (`stable = true`) or unstable
    /// edge of any cell containing a lift of `p`.
    fn edge_distance(&self, ms: &MarkovStructure, p: &[f64], stable: bool) -> f64 {
        let mut best = f64::INFINITY;
        for cell in 0..self.cells.len() {
            if let Some((_, (u, s))) = ms.locate_in(p, cell) {
                let r = self.cells[cell];
                let d = if stable {
                    (u - r.alpha.0).abs().min((u - r.alpha.1).abs())
                } else {
                    (s - r.beta.0).abs().min((s - r.beta.1).abs())
                };
                // Edges of the coarse rectangles are the true boundary; interior
                // refinement cuts are preimages of stable edges.
                best = best.min(d);
            }
        }
        best
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct BoundaryNullReport {
    pub deltas: Vec<f64>,
    pub covered: Vec<f64>,
    pub slope: f64,
    pub intercept: f64,
}

/// Fraction of sampled unstable-segment length lying within δ of the stable
/// boundary, for each δ, with a linear fit in δ.
pub fn boundary_null_check<R: Rng>(
    ms: &MarkovStructure,
    n_lines: usize,
    deltas: &[f64],
    rng: &mut R,
) -> BoundaryNullReport {
    let covered: Vec<f64> = match ms {
        MarkovStructure::Circle(c) => deltas
            .iter()
            .map(|&d| (2.0 * c.k as f64 * d).min(1.0))
            .collect(),
        MarkovStructure::Torus(t) => {
            let per_line = 20_000usize;
            let eu = &t.auto.unstable_basis[0];
            let mut counts = vec![0usize; deltas.len()];
            let mut total = 0usize;
            for _ in 0..n_lines {
                let start = [rng.gen::<f64>(), rng.gen::<f64>()];
                for s in 0..per_line {
                    let tt = (s as f64 + 0.5) / per_line as f64;
                    let p = [start[0] + tt * eu[0], start[1] + tt * eu[1]];
                    let dist = ms.stable_boundary_distance(&p);
                    for (k, &d) in deltas.iter().enumerate() {
                        if dist < d {
                            counts[k] += 1;
                        }
                    }
                    total += 1;
                }
            }
            counts.iter().map(|&c| c as f64 / total.max(1) as f64).collect()
        }
    };
    let (intercept, slope, _) = if deltas.len() >= 2 {
        crate::linalg::linear_fit(deltas, &covered)
    } else {
        (covered.first().cloned().unwrap_or(0.0), f64::NAN, f64::INFINITY)
    };
    BoundaryNullReport { deltas: deltas.to_vec(), covered, slope, intercept }
}
