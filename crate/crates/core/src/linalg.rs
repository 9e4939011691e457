//! Small dense symmetric matrix kernels.
//!
//! Everything here is O(d³) dense work on `nalgebra` storage. Vectors are
//! plain slices so that the per-sample loops elsewhere never allocate.

use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

/// Eigenvalue floor applied before inverse powers.
pub const EIGEN_FLOOR: f64 = 1e-12;

/// Largest dimension accepted by the dense kernels.
pub const MAX_DIM: usize = 4096;

#[derive(Debug, Error)]
pub enum LinalgError {
    #[error("symmetric eigensolver did not converge on a {dim}x{dim} matrix")]
    NonConvergence { dim: usize, matrix: Vec<f64> },
    #[error("matrix power {power} of a matrix with eigenvalue {eigenvalue} <= 0 and no floor")]
    Singular { power: f64, eigenvalue: f64 },
    #[error("unsupported matrix power {0}; expected one of 1/2, -1/2, -1, 2")]
    UnsupportedPower(f64),
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("dimension {0} outside 1..={MAX_DIM}")]
    BadDimension(usize),
    #[error("matrix has non-finite entries")]
    NonFinite,
    #[error("matrix is not PSD: min eigenvalue {min_eig} < -{tol}")]
    NotPsd { min_eig: f64, tol: f64 },
}

pub type Result<T> = std::result::Result<T, LinalgError>;

/// A symmetric matrix. Construction symmetrizes as (A + Aᵀ)/2, which is
/// bit-exactly symmetric because floating-point addition commutes.
#[derive(Debug, Clone, PartialEq)]
pub struct SymMatrix {
    m: DMatrix<f64>,
}

/// Eigen-decomposition with eigenvalues sorted in descending order.
#[derive(Debug, Clone)]
pub struct Eigen {
    pub values: Vec<f64>,
    /// Column `i` is the eigenvector for `values[i]`.
    pub vectors: DMatrix<f64>,
}

fn check_dim(d: usize) -> Result<()> {
    if d == 0 || d > MAX_DIM {
        return Err(LinalgError::BadDimension(d));
    }
    Ok(())
}

impl SymMatrix {
    /// Symmetrizes an arbitrary square matrix.
    pub fn from_matrix(a: DMatrix<f64>) -> Result<Self> {
        if a.nrows() != a.ncols() {
            return Err(LinalgError::DimensionMismatch { expected: a.nrows(), got: a.ncols() });
        }
        check_dim(a.nrows())?;
        if a.iter().any(|v| !v.is_finite()) {
            return Err(LinalgError::NonFinite);
        }
        let d = a.nrows();
        let m = DMatrix::from_fn(d, d, |i, j| 0.5 * (a[(i, j)] + a[(j, i)]));
        Ok(Self { m })
    }

    /// Builds from a row-major slice of length d².
    pub fn from_row_major(d: usize, entries: &[f64]) -> Result<Self> {
        if entries.len() != d * d {
            return Err(LinalgError::DimensionMismatch { expected: d * d, got: entries.len() });
        }
        Self::from_matrix(DMatrix::from_row_slice(d, d, entries))
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let d = rows.len();
        let flat: Vec<f64> = rows.iter().flat_map(|r| r.iter().copied()).collect();
        Self::from_row_major(d, &flat)
    }

    pub fn identity(d: usize) -> Self {
        Self { m: DMatrix::identity(d, d) }
    }

    pub fn zeros(d: usize) -> Self {
        Self { m: DMatrix::zeros(d, d) }
    }

    pub fn scaled_identity(d: usize, s: f64) -> Self {
        Self { m: DMatrix::identity(d, d) * s }
    }

    pub fn diag(values: &[f64]) -> Self {
        let d = values.len();
        Self { m: DMatrix::from_fn(d, d, |i, j| if i == j { values[i] } else { 0.0 }) }
    }

    /// `s · x xᵀ`.
    pub fn outer(x: &[f64], s: f64) -> Self {
        let d = x.len();
        Self { m: DMatrix::from_fn(d, d, |i, j| s * x[i] * x[j]) }
    }

    pub fn dim(&self) -> usize {
        self.m.nrows()
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.m[(i, j)]
    }

    pub fn as_matrix(&self) -> &DMatrix<f64> {
        &self.m
    }

    pub fn into_matrix(self) -> DMatrix<f64> {
        self.m
    }

    pub fn to_row_major(&self) -> Vec<f64> {
        let d = self.dim();
        let mut out = Vec::with_capacity(d * d);
        for i in 0..d {
            for j in 0..d {
                out.push(self.m[(i, j)]);
            }
        }
        out
    }

    pub fn add(&self, other: &SymMatrix) -> SymMatrix {
        SymMatrix { m: &self.m + &other.m }
    }

    pub fn sub(&self, other: &SymMatrix) -> SymMatrix {
        SymMatrix { m: &self.m - &other.m }
    }

    pub fn scale(&self, s: f64) -> SymMatrix {
        SymMatrix { m: &self.m * s }
    }

    /// `self + s·I`.
    pub fn shift(&self, s: f64) -> SymMatrix {
        let mut m = self.m.clone();
        for i in 0..self.dim() {
            m[(i, i)] += s;
        }
        SymMatrix { m }
    }

    /// In-place `self += s · x xᵀ`, touching each pair once so symmetry is exact.
    pub fn add_outer(&mut self, x: &[f64], s: f64) {
        let d = self.dim();
        for i in 0..d {
            let xi = s * x[i];
            for j in i..d {
                let v = self.m[(i, j)] + xi * x[j];
                self.m[(i, j)] = v;
                self.m[(j, i)] = v;
            }
        }
    }

    /// In-place addition of an already-symmetric matrix.
    pub fn add_assign(&mut self, other: &SymMatrix) {
        self.m += &other.m;
    }

    pub fn scale_assign(&mut self, s: f64) {
        self.m *= s;
    }

    /// Sets entry (i, j) and (j, i).
    pub fn set_sym(&mut self, i: usize, j: usize, v: f64) {
        self.m[(i, j)] = v;
        self.m[(j, i)] = v;
    }

    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.dim()];
        self.mul_vec_into(x, &mut out);
        out
    }

    pub fn mul_vec_into(&self, x: &[f64], out: &mut [f64]) {
        let d = self.dim();
        debug_assert_eq!(x.len(), d);
        for o in out.iter_mut() {
            *o = 0.0;
        }
        // Column-major storage: accumulate column by column.
        for j in 0..d {
            let xj = x[j];
            if xj == 0.0 {
                continue;
            }
            let col = self.m.column(j);
            for i in 0..d {
                out[i] += col[i] * xj;
            }
        }
    }

    /// `xᵀ A x`.
    pub fn quad_form(&self, x: &[f64]) -> f64 {
        let ax = self.mul_vec(x);
        dot(x, &ax)
    }

    /// `A B A` for symmetric A = self, symmetrized.
    pub fn congruence(&self, b: &SymMatrix) -> SymMatrix {
        let m = &self.m * &b.m * &self.m;
        SymMatrix::from_matrix(m).expect("product of finite matrices")
    }

    /// Plain matrix product (not symmetric in general).
    pub fn matmul(&self, b: &SymMatrix) -> DMatrix<f64> {
        &self.m * &b.m
    }

    pub fn trace(&self) -> f64 {
        self.m.trace()
    }

    pub fn frobenius(&self) -> f64 {
        self.m.norm()
    }

    pub fn max_abs_diff(&self, other: &SymMatrix) -> f64 {
        (&self.m - &other.m).amax()
    }

    pub fn eig(&self) -> Result<Eigen> {
        eig_sym(self)
    }

    pub fn eigenvalues(&self) -> Result<Vec<f64>> {
        Ok(eig_sym(self)?.values)
    }

    pub fn min_eig(&self) -> Result<f64> {
        Ok(*eig_sym(self)?.values.last().expect("dim >= 1"))
    }

    pub fn max_eig(&self) -> Result<f64> {
        Ok(eig_sym(self)?.values[0])
    }

    /// Projection onto the PSD cone: negative eigenvalues set to zero.
    pub fn psd_part(&self) -> Result<SymMatrix> {
        Ok(apply_spectral(&eig_sym(self)?, |v| v.max(0.0)))
    }

    /// Spectral norm.
    pub fn op_norm(&self) -> Result<f64> {
        let v = eig_sym(self)?.values;
        Ok(v[0].abs().max(v[v.len() - 1].abs()))
    }

    pub fn power(&self, p: f64, floor: f64) -> Result<SymMatrix> {
        mat_power(self, p, floor)
    }

    pub fn inverse(&self) -> Result<SymMatrix> {
        mat_power(self, -1.0, 0.0)
    }

    /// Solves `A x = b` for symmetric positive-definite A via eigen-decomposition.
    pub fn solve_spd(&self, b: &[f64]) -> Result<Vec<f64>> {
        Ok(self.inverse()?.mul_vec(b))
    }

    /// `A ⪯ B` up to `tol`, i.e. λ_min(B − A) ≥ −tol.
    pub fn loewner_le(&self, other: &SymMatrix, tol: f64) -> Result<bool> {
        Ok(other.sub(self).min_eig()? >= -tol)
    }
}

impl Serialize for SymMatrix {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        #[derive(Serialize)]
        struct Repr {
            dim: usize,
            entries: Vec<f64>,
        }
        Repr { dim: self.dim(), entries: self.to_row_major() }.serialize(s)
    }
}

impl<'de> Deserialize<'de> for SymMatrix {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        struct Repr {
            dim: usize,
            entries: Vec<f64>,
        }
        let r = Repr::deserialize(d)?;
        SymMatrix::from_row_major(r.dim, &r.entries).map_err(serde::de::Error::custom)
    }
}

/// Witness that a matrix is PSD up to `tol`.
#[derive(Debug, Clone, Serialize)]
pub struct PsdCertificate {
    pub matrix: SymMatrix,
    pub min_eig: f64,
    pub max_eig: f64,
    pub tol: f64,
}

impl PsdCertificate {
    pub fn certify(matrix: &SymMatrix, tol: f64) -> Result<Self> {
        let vals = matrix.eigenvalues()?;
        let (max_eig, min_eig) = (vals[0], vals[vals.len() - 1]);
        if min_eig < -tol {
            return Err(LinalgError::NotPsd { min_eig, tol });
        }
        Ok(Self { matrix: matrix.clone(), min_eig, max_eig, tol })
    }

    /// True when `lo·I ⪯ matrix ⪯ hi·I`.
    pub fn within(&self, lo: f64, hi: f64) -> bool {
        self.min_eig >= lo - self.tol && self.max_eig <= hi + self.tol
    }
}

/// Symmetric eigen-decomposition, eigenvalues descending.
pub fn eig_sym(m: &SymMatrix) -> Result<Eigen> {
    let d = m.dim();
    if d == 1 {
        return Ok(Eigen { values: vec![m.m[(0, 0)]], vectors: DMatrix::identity(1, 1) });
    }
    let eig = SymmetricEigen::try_new(m.m.clone(), f64::EPSILON, 100 * d.max(10))
        .ok_or_else(|| LinalgError::NonConvergence { dim: d, matrix: m.to_row_major() })?;
    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let values = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let vectors = DMatrix::from_fn(d, d, |r, c| eig.eigenvectors[(r, order[c])]);
    Ok(Eigen { values, vectors })
}

fn apply_spectral(e: &Eigen, f: impl Fn(f64) -> f64) -> SymMatrix {
    let d = e.values.len();
    let mut scaled = e.vectors.clone();
    for (c, &v) in e.values.iter().enumerate() {
        let s = f(v);
        for r in 0..d {
            scaled[(r, c)] *= s;
        }
    }
    let m = scaled * e.vectors.transpose();
    SymMatrix::from_matrix(m).expect("finite spectral function")
}

/// Matrix power for p ∈ {1/2, −1/2, −1, 2}. Eigenvalues are clamped to
/// `max(λ, floor)` before the power is applied.
pub fn mat_power(m: &SymMatrix, p: f64, floor: f64) -> Result<SymMatrix> {
    if ![0.5, -0.5, -1.0, 2.0].contains(&p) {
        return Err(LinalgError::UnsupportedPower(p));
    }
    if p == 2.0 {
        return SymMatrix::from_matrix(&m.m * &m.m);
    }
    let e = eig_sym(m)?;
    if p < 0.0 && floor <= 0.0 {
        if let Some(&bad) = e.values.iter().find(|&&v| v <= 0.0) {
            return Err(LinalgError::Singular { power: p, eigenvalue: bad });
        }
    }
    let floor = floor.max(0.0);
    Ok(apply_spectral(&e, |v| {
        let v = v.max(floor);
        match p {
            0.5 => v.sqrt(),
            -0.5 => 1.0 / v.sqrt(),
            _ => 1.0 / v,
        }
    }))
}

/// `sym(A) = (AᵀA)^{1/2}`.
pub fn sym(a: &DMatrix<f64>) -> Result<SymMatrix> {
    let ata = SymMatrix::from_matrix(a.transpose() * a)?;
    mat_power(&ata, 0.5, 0.0)
}

/// `max(min(v, r), −r)`.
pub fn clip(v: f64, r: f64) -> f64 {
    v.min(r).max(-r)
}

/// Euclidean projection onto the ball of radius `r`.
pub fn project_ball(v: &[f64], r: f64) -> Vec<f64> {
    let mut out = v.to_vec();
    project_ball_in_place(&mut out, r);
    out
}

pub fn project_ball_in_place(v: &mut [f64], r: f64) {
    let n = norm(v);
    if n > r {
        let s = r / n;
        for x in v.iter_mut() {
            *x *= s;
        }
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// `y += s·x`.
pub fn axpy(s: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += s * xi;
    }
}

pub fn sub(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x - y).collect()
}

/// `A v` for a general matrix.
pub fn mat_vec(a: &DMatrix<f64>, v: &[f64]) -> Vec<f64> {
    (0..a.nrows()).map(|i| (0..a.ncols()).map(|j| a[(i, j)] * v[j]).sum()).collect()
}

/// Singular values of a general square matrix, descending.
pub fn singular_values(a: &DMatrix<f64>) -> Result<Vec<f64>> {
    let ata = SymMatrix::from_matrix(a.transpose() * a)?;
    Ok(ata.eigenvalues()?.into_iter().map(|v| v.max(0.0).sqrt()).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn random_sym(d: usize, seed: u64) -> SymMatrix {
        // Small LCG keeps the tests independent of the crate's RNG module.
        let mut s = seed.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
        let mut next = || {
            s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            ((s >> 11) as f64 / (1u64 << 53) as f64) * 2.0 - 1.0
        };
        let a = DMatrix::from_fn(d, d, |_, _| next());
        SymMatrix::from_matrix(a).unwrap()
    }

    fn random_pd(d: usize, seed: u64) -> SymMatrix {
        let a = random_sym(d, seed);
        SymMatrix::from_matrix(a.as_matrix() * a.as_matrix()).unwrap().shift(0.1)
    }

    #[test]
    fn psd_part_clips_negative_eigenvalues() {
        let a = random_sym(5, 3);
        let p = a.psd_part().unwrap();
        assert!(p.min_eig().unwrap() >= -1e-12);
        // What is removed is the negative part, which is NSD and orthogonal to p.
        let neg = a.sub(&p);
        assert!(neg.max_eig().unwrap() <= 1e-12);
        assert!(p.matmul(&neg).amax() < 1e-12);
        let pd = random_pd(4, 9);
        assert!(pd.psd_part().unwrap().max_abs_diff(&pd) < 1e-12);
    }

    #[test]
    fn eig_diagonal() {
        let e = eig_sym(&SymMatrix::diag(&[1.0, 3.0])).unwrap();
        assert_eq!(e.values, vec![3.0, 1.0]);
        assert!((e.vectors[(1, 0)].abs() - 1.0).abs() < 1e-15);
        assert!((e.vectors[(0, 1)].abs() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn eig_swap_matrix() {
        let m = SymMatrix::from_rows(&[vec![0.0, 1.0], vec![1.0, 0.0]]).unwrap();
        let e = eig_sym(&m).unwrap();
        assert!((e.values[0] - 1.0).abs() < 1e-14 && (e.values[1] + 1.0).abs() < 1e-14);
        let h = std::f64::consts::FRAC_1_SQRT_2;
        // Eigenvectors are defined up to sign.
        assert!((e.vectors[(0, 0)] * e.vectors[(1, 0)] - 0.5).abs() < 1e-14);
        assert!((e.vectors[(0, 1)] * e.vectors[(1, 1)] + 0.5).abs() < 1e-14);
        assert!((e.vectors[(0, 0)].abs() - h).abs() < 1e-14);
    }

    #[test]
    fn eig_reconstructs_random() {
        for seed in 0..10 {
            let m = random_sym(5, seed);
            let e = eig_sym(&m).unwrap();
            let v = &e.vectors;
            let orth = (v.transpose() * v - DMatrix::identity(5, 5)).amax();
            assert!(orth <= 1e-10);
            let rec = v * DMatrix::from_diagonal(&nalgebra::DVector::from_vec(e.values.clone())) * v.transpose();
            let err = (rec - m.as_matrix()).amax();
            assert!(err <= 1e-8 * (1.0 + m.op_norm().unwrap()));
            assert!(e.values.windows(2).all(|w| w[0] >= w[1]));
        }
    }

    #[test]
    fn powers_of_diagonal() {
        let m = SymMatrix::diag(&[4.0, 9.0]);
        assert!(mat_power(&m, 0.5, 0.0).unwrap().max_abs_diff(&SymMatrix::diag(&[2.0, 3.0])) < 1e-15);
        let r = mat_power(&m, -0.5, 0.0).unwrap();
        assert!(r.max_abs_diff(&SymMatrix::diag(&[0.5, 1.0 / 3.0])) < 1e-15);
        let r = mat_power(&m, 2.0, 0.0).unwrap();
        assert!(r.max_abs_diff(&SymMatrix::diag(&[16.0, 81.0])) < 1e-12);
    }

    #[test]
    fn floor_clamps_before_power() {
        let m = SymMatrix::diag(&[1e-20, 1.0]);
        let r = mat_power(&m, -0.5, 1e-12).unwrap();
        assert!((r.get(0, 0) - 1e6).abs() < 1e-6);
        assert!((r.get(1, 1) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn singular_without_floor() {
        let m = SymMatrix::diag(&[0.0, 1.0]);
        assert!(matches!(mat_power(&m, -1.0, 0.0), Err(LinalgError::Singular { .. })));
        assert!(matches!(mat_power(&m, 3.0, 0.0), Err(LinalgError::UnsupportedPower(_))));
    }

    #[test]
    fn sym_of_orthogonal_and_diagonal() {
        let (c, s) = (0.3f64.cos(), 0.3f64.sin());
        let q = DMatrix::from_row_slice(2, 2, &[c, -s, s, c]);
        assert!(sym(&q).unwrap().max_abs_diff(&SymMatrix::identity(2)) < 1e-14);
        let a = DMatrix::from_row_slice(2, 2, &[2.0, 0.0, 0.0, -3.0]);
        assert!(sym(&a).unwrap().max_abs_diff(&SymMatrix::diag(&[2.0, 3.0])) < 1e-14);
    }

    #[test]
    fn sym_left_orthogonal_invariance() {
        for seed in 0..10 {
            let f = random_pd(4, seed);
            let u = random_pd(4, seed + 100);
            let a = mat_power(&f, -0.5, 0.0).unwrap().matmul(&u);
            let s = sym(&a).unwrap();
            assert!(s.min_eig().unwrap() >= -1e-12);
            let q = random_sym(4, seed + 200).as_matrix().clone().qr().q();
            let s2 = sym(&(q * &a)).unwrap();
            assert!(s.max_abs_diff(&s2) <= 1e-10);
        }
    }

    #[test]
    fn clip_values() {
        assert_eq!(clip(1.5, 1.0), 1.0);
        assert_eq!(clip(-0.2, 1.0), -0.2);
        assert_eq!(clip(-7.0, 2.0), -2.0);
    }

    #[test]
    fn project_ball_values() {
        assert_eq!(project_ball(&[3.0, 4.0], 5.0), vec![3.0, 4.0]);
        let p = project_ball(&[3.0, 4.0], 1.0);
        assert!((p[0] - 0.6).abs() < 1e-15 && (p[1] - 0.8).abs() < 1e-15);
        assert_eq!(project_ball(&[0.0, 0.0], 1.0), vec![0.0, 0.0]);
    }

    #[test]
    fn storage_is_exactly_symmetric() {
        let a = DMatrix::from_row_slice(2, 2, &[1.0, 0.1 + 0.2, 0.3, 2.0]);
        let m = SymMatrix::from_matrix(a).unwrap();
        assert_eq!(m.get(0, 1).to_bits(), m.get(1, 0).to_bits());
    }

    #[test]
    fn dimension_cap() {
        assert!(matches!(
            SymMatrix::from_matrix(DMatrix::zeros(0, 0)),
            Err(LinalgError::BadDimension(0))
        ));
    }

    #[test]
    fn psd_certificate() {
        let c = PsdCertificate::certify(&SymMatrix::diag(&[0.5, 2.0]), 1e-12).unwrap();
        assert!(c.within(0.5, 2.0));
        assert!(!c.within(0.6, 2.0));
        assert!(PsdCertificate::certify(&SymMatrix::diag(&[-1.0, 2.0]), 1e-12).is_err());
    }

    #[test]
    fn serde_round_trip() {
        let m = random_sym(3, 7);
        let js = serde_json::to_string(&m).unwrap();
        let back: SymMatrix = serde_json::from_str(&js).unwrap();
        assert_eq!(m, back);
    }

    proptest! {
        #[test]
        fn power_composition(seed in 0u64..1000, d in 1usize..6) {
            let m = random_pd(d, seed);
            let half = mat_power(&m, 0.5, 0.0).unwrap();
            let sq = mat_power(&half, 2.0, 0.0).unwrap();
            prop_assert!(sq.max_abs_diff(&m) <= 1e-8 * (1.0 + m.op_norm().unwrap()));
            let nh = mat_power(&m, -0.5, 0.0).unwrap();
            let inv = mat_power(&m, -1.0, 0.0).unwrap();
            let nh2 = mat_power(&nh, 2.0, 0.0).unwrap();
            prop_assert!(nh2.max_abs_diff(&inv) <= 1e-8 * (1.0 + inv.op_norm().unwrap()));
            let back = mat_power(&inv, -1.0, 0.0).unwrap();
            prop_assert!(back.max_abs_diff(&m) <= 1e-8 * (1.0 + m.op_norm().unwrap()));
        }

        #[test]
        fn projection_idempotent_and_lipschitz(
            a in prop::collection::vec(-10.0f64..10.0, 3),
            b in prop::collection::vec(-10.0f64..10.0, 3),
            r in 0.1f64..5.0,
        ) {
            let pa = project_ball(&a, r);
            prop_assert!(norm(&pa) <= r * (1.0 + 1e-12));
            let ppa = project_ball(&pa, r);
            prop_assert!(norm(&sub(&pa, &ppa)) <= 1e-12 * r);
            let pb = project_ball(&b, r);
            prop_assert!(norm(&sub(&pa, &pb)) <= norm(&sub(&a, &b)) + 1e-12);
        }
    }
}
