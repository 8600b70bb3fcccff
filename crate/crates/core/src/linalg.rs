//! Numeric rank, kernels and small solves, generic over the scalar type.

use nalgebra::{DMatrix, DVector};

use crate::scalar::{abs, Real};

/// Singular values above `rel * sigma_max` (and above `abs_floor`) count.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RankTolerance {
    pub rel: f64,
    pub abs_floor: f64,
}

impl Default for RankTolerance {
    fn default() -> Self {
        RankTolerance {
            rel: 1e-8,
            abs_floor: 1e-12,
        }
    }
}

/// Pad with zero rows or columns to a square matrix; the SVD of the padded
/// matrix has the same nonzero singular values and exposes a full right
/// singular basis.
fn padded<T: Real>(m: &DMatrix<T>) -> DMatrix<T> {
    let n = m.nrows().max(m.ncols()).max(1);
    let mut p = DMatrix::<T>::zeros(n, n);
    p.view_mut((0, 0), (m.nrows(), m.ncols())).copy_from(m);
    p
}

/// Singular values in decreasing order.
pub fn singular_values<T: Real>(m: &DMatrix<T>) -> Vec<T> {
    if m.nrows() == 0 || m.ncols() == 0 {
        return Vec::new();
    }
    let mut s: Vec<T> = m
        .clone()
        .svd(false, false)
        .singular_values
        .iter()
        .copied()
        .collect();
    s.sort_by(|a, b| b.partial_cmp(a).unwrap_or(std::cmp::Ordering::Equal));
    s
}

pub fn numeric_rank<T: Real>(m: &DMatrix<T>, tol: RankTolerance) -> usize {
    let s = singular_values(m);
    let Some(&top) = s.first() else { return 0 };
    let cut = crate::scalar::max(
        top * T::from_f64_lossy(tol.rel),
        T::from_f64_lossy(tol.abs_floor),
    );
    s.iter().filter(|&&v| v > cut).count()
}

/// Orthonormal basis of the right kernel, as columns. Each vector is
/// oriented so its first component above `1e-12` in magnitude is positive.
pub fn kernel<T: Real>(m: &DMatrix<T>, tol: RankTolerance) -> DMatrix<T> {
    let ncols = m.ncols();
    if ncols == 0 {
        return DMatrix::zeros(0, 0);
    }
    if m.nrows() == 0 {
        return DMatrix::identity(ncols, ncols);
    }
    let rank = numeric_rank(m, tol);
    let p = padded(m);
    let svd = p.svd(false, true);
    let v_t = svd.v_t.expect("requested V^T");
    let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
    order.sort_by(|&a, &b| {
        svd.singular_values[b]
            .partial_cmp(&svd.singular_values[a])
            .unwrap_or(std::cmp::Ordering::Equal)
    });
    let dim = ncols - rank;
    let mut k = DMatrix::<T>::zeros(ncols, dim);
    for (c, &row) in order[rank..].iter().take(dim).enumerate() {
        let mut v: DVector<T> = v_t.row(row).transpose().rows(0, ncols).into_owned();
        let norm = v.norm();
        if norm > T::zero() {
            v /= norm;
        }
        if let Some(first) = v.iter().find(|x| abs(**x) > T::from_f64_lossy(1e-12)) {
            if *first < T::zero() {
                v = -v;
            }
        }
        k.set_column(c, &v);
    }
    k
}

/// Solve `a x = b` for square `a`; `None` when singular.
pub fn solve<T: Real>(a: &DMatrix<T>, b: &DVector<T>) -> Option<DVector<T>> {
    a.clone().lu().solve(b)
}

/// Largest absolute entry.
pub fn max_abs<T: Real>(m: &DMatrix<T>) -> T {
    m.iter()
        .fold(T::zero(), |acc, x| crate::scalar::max(acc, abs(*x)))
}

/// Symmetric eigenvalues, ascending.
pub fn symmetric_eigenvalues<T: Real>(m: &DMatrix<T>) -> Vec<T> {
    let sym = (m.clone() + m.transpose()) * T::from_f64_lossy(0.5);
    let mut e: Vec<T> = sym.symmetric_eigen().eigenvalues.iter().copied().collect();
    e.sort_by(|a, b| a.partial_cmp(b).unwrap_or(std::cmp::Ordering::Equal));
    e
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rank_of_wide_and_tall() {
        let m = DMatrix::from_row_slice(2, 3, &[1.0f64, 2.0, 3.0, 2.0, 4.0, 6.0]);
        assert_eq!(numeric_rank(&m, RankTolerance::default()), 1);
        assert_eq!(numeric_rank(&m.transpose(), RankTolerance::default()), 1);
        let z = DMatrix::<f64>::zeros(3, 2);
        assert_eq!(numeric_rank(&z, RankTolerance::default()), 0);
    }

    #[test]
    fn kernel_is_annihilated_and_oriented() {
        let m = DMatrix::from_row_slice(2, 3, &[1.0f64, 0.0, 0.0, 0.0, 1.0, 0.0]);
        let k = kernel(&m, RankTolerance::default());
        assert_eq!(k.ncols(), 1);
        assert!((k[(2, 0)] - 1.0).abs() < 1e-12);
        let m = DMatrix::from_row_slice(1, 2, &[1.0f64, 1.0]);
        let k = kernel(&m, RankTolerance::default());
        assert!((&m * &k).norm() < 1e-12);
        assert!(k[(0, 0)] > 0.0);
    }

    #[test]
    fn single_precision() {
        let m = DMatrix::from_row_slice(2, 2, &[1.0f32, 2.0, 2.0, 4.0]);
        let tol = RankTolerance {
            rel: 1e-5,
            abs_floor: 1e-6,
        };
        assert_eq!(numeric_rank(&m, tol), 1);
    }
}
