//! Approximate barycentric spanners by determinant doubling.

use nalgebra::{DMatrix, DVector};

use super::env::span_basis;
use crate::linalg::dot;

/// Improvement factor for the swap phase; the result is a C-spanner.
pub const SPANNER_C: f64 = 2.0;

/// Indices of a 2-spanner of `vectors` with one element per dimension of
/// their span. An all-zero set is spanned by its first element.
pub fn barycentric_spanner(vectors: &[Vec<f64>]) -> Vec<usize> {
    if vectors.is_empty() {
        return Vec::new();
    }
    let Some(basis) = span_basis(vectors) else {
        return vec![0];
    };
    let r = basis.len();
    let coords: Vec<DVector<f64>> =
        vectors.iter().map(|v| DVector::from_iterator(r, basis.iter().map(|b| dot(b, v)))).collect();
    let mut m = DMatrix::<f64>::identity(r, r);
    let mut chosen = vec![0usize; r];
    let det_with = |m: &DMatrix<f64>, i: usize, c: &DVector<f64>| {
        let mut trial = m.clone();
        trial.set_column(i, c);
        trial.determinant().abs()
    };
    for i in 0..r {
        let mut best = (0, f64::NEG_INFINITY);
        for (k, c) in coords.iter().enumerate() {
            let v = det_with(&m, i, c);
            if v > best.1 {
                best = (k, v);
            }
        }
        chosen[i] = best.0;
        m.set_column(i, &coords[best.0]);
    }
    'swap: loop {
        let cur = m.determinant().abs();
        for i in 0..r {
            for (k, c) in coords.iter().enumerate() {
                if det_with(&m, i, c) > SPANNER_C * cur {
                    chosen[i] = k;
                    m.set_column(i, c);
                    continue 'swap;
                }
            }
        }
        break;
    }
    chosen
}

/// Coefficients expressing each vector over the spanner, or `None` if some
/// vector is not in its span (residual above `1e-8`).
pub fn spanner_coefficients(vectors: &[Vec<f64>], spanner: &[usize]) -> Option<Vec<Vec<f64>>> {
    let d = vectors.first()?.len();
    let k = spanner.len();
    let a = DMatrix::from_fn(d, k, |i, j| vectors[spanner[j]][i]);
    let svd = a.clone().svd(true, true);
    let mut out = Vec::with_capacity(vectors.len());
    for v in vectors {
        let b = DVector::from_column_slice(v);
        let c = svd.solve(&b, 1e-12).ok()?;
        if (&a * &c - &b).norm() > 1e-8 * (1.0 + b.norm()) {
            return None;
        }
        out.push(c.iter().cloned().collect());
    }
    Some(out)
}

/// Largest |coefficient| over all vectors; the set is a c-spanner for any
/// c at least this value.
pub fn spanner_constant(vectors: &[Vec<f64>], spanner: &[usize]) -> Option<f64> {
    let coefs = spanner_coefficients(vectors, spanner)?;
    Some(coefs.iter().flatten().fold(0.0, |m: f64, c| m.max(c.abs())))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bandits::env::feature_rank;
    use crate::privacy::RngStream;
    use proptest::prelude::*;

    #[test]
    fn standard_basis_is_its_own_spanner() {
        let e: Vec<Vec<f64>> = (0..3).map(|i| (0..3).map(|j| if i == j { 1.0 } else { 0.0 }).collect()).collect();
        let mut s = barycentric_spanner(&e);
        s.sort();
        assert_eq!(s, vec![0, 1, 2]);
    }

    #[test]
    fn collinear_set_picks_the_longest() {
        let v = vec![vec![1.0, 0.0], vec![2.0, 0.0], vec![3.0, 0.0]];
        assert_eq!(barycentric_spanner(&v), vec![2]);
        assert!(spanner_constant(&v, &[2]).unwrap() <= 1.0 + 1e-12);
    }

    #[test]
    fn singleton_and_zero_sets() {
        assert_eq!(barycentric_spanner(&[vec![0.3, 0.4]]), vec![0]);
        assert_eq!(barycentric_spanner(&[vec![0.0, 0.0], vec![0.0, 0.0]]), vec![0]);
    }

    #[test]
    fn random_vectors_in_r3() {
        let mut rng = RngStream::new(17);
        for _ in 0..20 {
            let v: Vec<Vec<f64>> = (0..20).map(|_| (0..3).map(|_| rng.normal()).collect()).collect();
            let s = barycentric_spanner(&v);
            assert!(s.len() <= 3);
            assert!(spanner_constant(&v, &s).unwrap() <= SPANNER_C + 1e-9);
        }
    }

    proptest! {
        #[test]
        fn spanner_certificate_holds(
            vs in prop::collection::vec(prop::collection::vec(-1.0f64..1.0, 4), 1..15),
            flat in 0usize..3,
        ) {
            // Optionally squash onto a lower-dimensional subspace.
            let vs: Vec<Vec<f64>> = vs
                .into_iter()
                .map(|mut v| {
                    for x in v.iter_mut().skip(4 - flat) {
                        *x = 0.0;
                    }
                    v
                })
                .collect();
            let s = barycentric_spanner(&vs);
            prop_assert!(s.len() <= feature_rank(&vs).max(1));
            prop_assert!(spanner_constant(&vs, &s).unwrap() <= SPANNER_C + 1e-9);
        }
    }
}
