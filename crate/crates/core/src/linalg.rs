//! Dense square matrices, Cholesky factorization and triangular solves.
//!
//! Storage is row-major `f64`. Only the pieces the template code needs are
//! here: symmetric positive definite factorization and forward substitution.

use crate::error::{Error, Result};

/// Relative tolerance used by [`cholesky_spd`] to decide whether its input
/// is symmetric.
pub const SYMMETRY_TOLERANCE: f64 = 1e-10;

/// A dense, row-major square matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct SquareMatrix {
    dim: usize,
    data: Vec<f64>,
}

impl SquareMatrix {
    pub fn zeros(dim: usize) -> Self {
        Self {
            dim,
            data: vec![0.0; dim * dim],
        }
    }

    pub fn identity(dim: usize) -> Self {
        let mut m = Self::zeros(dim);
        for i in 0..dim {
            m.data[i * dim + i] = 1.0;
        }
        m
    }

    /// Builds a matrix from row-major data. Fails if `data.len() != dim * dim`.
    pub fn from_row_major(dim: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != dim * dim {
            return Err(Error::DimensionMismatch {
                expected: dim * dim,
                got: data.len(),
            });
        }
        Ok(Self { dim, data })
    }

    pub fn from_rows(rows: &[&[f64]]) -> Result<Self> {
        let dim = rows.len();
        let mut data = Vec::with_capacity(dim * dim);
        for row in rows {
            if row.len() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    got: row.len(),
                });
            }
            data.extend_from_slice(row);
        }
        Ok(Self { dim, data })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.dim + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, value: f64) {
        self.data[i * self.dim + j] = value;
    }

    pub fn add_diagonal(&mut self, value: f64) {
        for i in 0..self.dim {
            self.data[i * self.dim + i] += value;
        }
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    /// Frobenius norm of `self - other`.
    pub fn frobenius_distance(&self, other: &SquareMatrix) -> f64 {
        debug_assert_eq!(self.dim, other.dim);
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt()
    }

    fn check_symmetric(&self) -> Result<()> {
        let scale = self.data.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let tol = SYMMETRY_TOLERANCE * scale;
        for i in 0..self.dim {
            for j in 0..i {
                let diff = (self.get(i, j) - self.get(j, i)).abs();
                if diff > tol || diff.is_nan() {
                    return Err(Error::NotSymmetric {
                        row: i,
                        col: j,
                        diff,
                    });
                }
            }
        }
        Ok(())
    }
}

/// Lower-triangular Cholesky factor `L` with `L·Lᵀ = A` and a strictly
/// positive diagonal. Entries above the diagonal are always zero.
#[derive(Debug, Clone, PartialEq)]
pub struct CholeskyFactor {
    lower: SquareMatrix,
}

impl CholeskyFactor {
    /// Wraps an existing lower-triangular matrix, validating its shape and
    /// diagonal.
    pub fn from_lower(lower: SquareMatrix) -> Result<Self> {
        let n = lower.dim();
        for i in 0..n {
            for j in (i + 1)..n {
                if lower.get(i, j) != 0.0 {
                    return Err(Error::Format(format!(
                        "factor has nonzero entry above the diagonal at ({i}, {j})"
                    )));
                }
            }
            let d = lower.get(i, i);
            if !(d > 0.0 && d.is_finite()) {
                return Err(Error::SingularCovariance { pivot: i, value: d });
            }
        }
        if lower.as_slice().iter().any(|v| !v.is_finite()) {
            return Err(Error::Format("factor contains non-finite values".into()));
        }
        Ok(Self { lower })
    }

    pub fn dim(&self) -> usize {
        self.lower.dim()
    }

    pub fn lower(&self) -> &SquareMatrix {
        &self.lower
    }

    /// Solves `L·y = b` by forward substitution, overwriting `b` with `y`.
    pub fn forward_solve_in_place(&self, b: &mut [f64]) {
        let n = self.dim();
        debug_assert_eq!(b.len(), n);
        for i in 0..n {
            let row = self.lower.row(i);
            let mut acc = b[i];
            for k in 0..i {
                acc -= row[k] * b[k];
            }
            b[i] = acc / row[i];
        }
    }

    /// `L·Lᵀ`.
    pub fn reconstruct(&self) -> SquareMatrix {
        let n = self.dim();
        let mut out = SquareMatrix::zeros(n);
        for i in 0..n {
            let ri = self.lower.row(i);
            for j in 0..=i {
                let rj = self.lower.row(j);
                let v: f64 = ri[..=j].iter().zip(&rj[..=j]).map(|(a, b)| a * b).sum();
                out.set(i, j, v);
                out.set(j, i, v);
            }
        }
        out
    }

    /// Packed lower triangle, row by row: `L[0][0], L[1][0], L[1][1], ...`.
    pub fn packed_lower(&self) -> Vec<f64> {
        let n = self.dim();
        let mut out = Vec::with_capacity(n * (n + 1) / 2);
        for i in 0..n {
            out.extend_from_slice(&self.lower.row(i)[..=i]);
        }
        out
    }

    /// Inverse of [`CholeskyFactor::packed_lower`].
    pub fn from_packed_lower(dim: usize, packed: &[f64]) -> Result<Self> {
        if packed.len() != dim * (dim + 1) / 2 {
            return Err(Error::DimensionMismatch {
                expected: dim * (dim + 1) / 2,
                got: packed.len(),
            });
        }
        let mut lower = SquareMatrix::zeros(dim);
        let mut k = 0;
        for i in 0..dim {
            for j in 0..=i {
                lower.set(i, j, packed[k]);
                k += 1;
            }
        }
        Self::from_lower(lower)
    }
}

/// Cholesky–Banachiewicz factorization of a symmetric positive definite
/// matrix.
///
/// The input must be symmetric to within [`SYMMETRY_TOLERANCE`] relative to
/// its largest entry; only the lower triangle is read. A non-positive or
/// non-finite pivot yields [`Error::SingularCovariance`].
pub fn cholesky_spd(matrix: &SquareMatrix) -> Result<CholeskyFactor> {
    matrix.check_symmetric()?;
    let n = matrix.dim();
    let mut lower = SquareMatrix::zeros(n);
    for i in 0..n {
        for j in 0..=i {
            let (ri, rj) = (lower.row(i), lower.row(j));
            let dot: f64 = ri[..j].iter().zip(&rj[..j]).map(|(a, b)| a * b).sum();
            let v = matrix.get(i, j) - dot;
            if i == j {
                if !(v > 0.0 && v.is_finite()) {
                    return Err(Error::SingularCovariance { pivot: i, value: v });
                }
                lower.set(i, i, v.sqrt());
            } else {
                let value = v / lower.get(j, j);
                lower.set(i, j, value);
            }
        }
    }
    Ok(CholeskyFactor { lower })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_factors_to_identity() {
        let l = cholesky_spd(&SquareMatrix::identity(3)).unwrap();
        assert_eq!(l.lower(), &SquareMatrix::identity(3));
    }

    #[test]
    fn two_by_two_hand_factorization() {
        let a = SquareMatrix::from_rows(&[&[4.0, 2.0], &[2.0, 3.0]]).unwrap();
        let l = cholesky_spd(&a).unwrap();
        let expected = [2.0, 0.0, 1.0, 2f64.sqrt()];
        for (got, want) in l.lower().as_slice().iter().zip(expected) {
            assert!((got - want).abs() < 1e-15, "{got} vs {want}");
        }
        let rel = l.reconstruct().frobenius_distance(&a) / a.frobenius_norm();
        assert!(rel < 1e-15);
    }

    #[test]
    fn indefinite_matrix_is_rejected() {
        // eigenvalues 3 and -1
        let a = SquareMatrix::from_rows(&[&[1.0, 2.0], &[2.0, 1.0]]).unwrap();
        assert!(matches!(
            cholesky_spd(&a),
            Err(Error::SingularCovariance { pivot: 1, .. })
        ));
    }

    #[test]
    fn asymmetric_matrix_is_rejected() {
        let a = SquareMatrix::from_rows(&[&[2.0, 1.0], &[0.5, 2.0]]).unwrap();
        assert!(matches!(cholesky_spd(&a), Err(Error::NotSymmetric { .. })));
    }

    #[test]
    fn tiny_asymmetry_is_tolerated() {
        let a = SquareMatrix::from_rows(&[&[4.0, 2.0], &[2.0 + 1e-14, 3.0]]).unwrap();
        assert!(cholesky_spd(&a).is_ok());
    }

    #[test]
    fn forward_solve_matches_hand_solution() {
        let a = SquareMatrix::from_rows(&[&[4.0, 2.0], &[2.0, 3.0]]).unwrap();
        let l = cholesky_spd(&a).unwrap();
        let mut b = [2.0, 3.0];
        l.forward_solve_in_place(&mut b);
        // 2·y0 = 2, y0 + √2·y1 = 3
        assert_eq!(b[0], 1.0);
        assert!((b[1] - 2.0 / 2f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn packed_round_trip() {
        let a = SquareMatrix::from_rows(&[&[4.0, 2.0, 0.4], &[2.0, 3.0, 0.1], &[0.4, 0.1, 2.0]])
            .unwrap();
        let l = cholesky_spd(&a).unwrap();
        let packed = l.packed_lower();
        assert_eq!(packed.len(), 6);
        assert_eq!(CholeskyFactor::from_packed_lower(3, &packed).unwrap(), l);
    }

    #[test]
    fn from_lower_rejects_upper_entries_and_bad_diagonal() {
        let upper = SquareMatrix::from_rows(&[&[1.0, 1.0], &[0.0, 1.0]]).unwrap();
        assert!(CholeskyFactor::from_lower(upper).is_err());
        let neg = SquareMatrix::from_rows(&[&[1.0, 0.0], &[0.0, -1.0]]).unwrap();
        assert!(CholeskyFactor::from_lower(neg).is_err());
    }
}
