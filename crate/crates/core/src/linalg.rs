//! Dense symmetric / positive-definite matrix kernels.
//!
//! Everything here is a pure function of its inputs. Matrices are small
//! (a few hundred rows at most), so factorizations are dense and direct.

use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type Matrix = DMatrix<f64>;

/// Relative symmetry tolerance accepted by [`SymMatrix::new`].
pub const SYMMETRY_TOL: f64 = 1e-12;

/// Relative pivot threshold (scaled by dimension and max diagonal) below
/// which a Cholesky pivot counts as zero.
pub const PIVOT_TOL: f64 = 1e-14;

/// Eigenvalues at or above `-PSD_TOL * max(1, lambda_max)` count as nonnegative.
pub const PSD_TOL: f64 = 1e-8;

/// A dense real symmetric matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Matrix", into = "Matrix")]
pub struct SymMatrix(Matrix);

impl SymMatrix {
    /// Validates symmetry, then stores `(S + Sᵀ) / 2`.
    pub fn new(m: Matrix) -> Result<Self> {
        if m.nrows() != m.ncols() {
            return Err(Error::dims(format!(
                "symmetric matrix must be square, got {}x{}",
                m.nrows(),
                m.ncols()
            )));
        }
        if m.nrows() == 0 {
            return Err(Error::dims("symmetric matrix must have dim >= 1"));
        }
        let scale = m.amax();
        let asym = (&m - m.transpose()).amax();
        let tol = SYMMETRY_TOL * scale;
        if asym > tol {
            return Err(Error::NotSymmetric { asymmetry: asym, tolerance: tol });
        }
        Ok(Self::symmetrize(m))
    }

    /// Stores `(S + Sᵀ) / 2` without checking. For matrices that are
    /// symmetric up to accumulated round-off.
    pub(crate) fn symmetrize(m: Matrix) -> Self {
        debug_assert!(m.is_square() && m.nrows() > 0);
        let t = m.transpose();
        SymMatrix((m + t) * 0.5)
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        Self::new(matrix_from_rows(rows)?)
    }

    pub fn identity(n: usize) -> Self {
        SymMatrix(Matrix::identity(n, n))
    }

    pub fn scaled_identity(n: usize, s: f64) -> Self {
        SymMatrix(Matrix::identity(n, n) * s)
    }

    pub fn from_diagonal(diag: &[f64]) -> Self {
        SymMatrix(Matrix::from_diagonal(&nalgebra::DVector::from_column_slice(diag)))
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }

    pub fn as_matrix(&self) -> &Matrix {
        &self.0
    }

    pub fn into_matrix(self) -> Matrix {
        self.0
    }

    pub fn trace(&self) -> f64 {
        self.0.trace()
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.0[(i, j)]
    }

    pub(crate) fn add_scaled(&mut self, other: &SymMatrix, scale: f64) {
        self.0 += &other.0 * scale;
    }

    /// `X S Xᵀ`, symmetrized.
    pub fn congruence(&self, x: &Matrix) -> Result<SymMatrix> {
        if x.ncols() != self.dim() {
            return Err(Error::dims(format!(
                "congruence: {}x{} times {}x{}",
                x.nrows(),
                x.ncols(),
                self.dim(),
                self.dim()
            )));
        }
        if x.nrows() == 0 {
            return Err(Error::dims("congruence with an empty map"));
        }
        Ok(Self::symmetrize(x * &self.0 * x.transpose()))
    }
}

impl TryFrom<Matrix> for SymMatrix {
    type Error = Error;
    fn try_from(m: Matrix) -> Result<Self> {
        SymMatrix::new(m)
    }
}

impl From<SymMatrix> for Matrix {
    fn from(s: SymMatrix) -> Matrix {
        s.0
    }
}

/// Builds a dense matrix from row-major nested vectors.
pub fn matrix_from_rows(rows: &[Vec<f64>]) -> Result<Matrix> {
    let nrows = rows.len();
    let ncols = rows.first().map_or(0, Vec::len);
    if rows.iter().any(|r| r.len() != ncols) {
        return Err(Error::dims("ragged row-major matrix"));
    }
    Ok(Matrix::from_fn(nrows, ncols, |i, j| rows[i][j]))
}

pub fn matrix_to_rows(m: &Matrix) -> Vec<Vec<f64>> {
    (0..m.nrows())
        .map(|i| (0..m.ncols()).map(|j| m[(i, j)]).collect())
        .collect()
}

/// Lower-triangular Cholesky factor `L` with `S = L Lᵀ`.
#[derive(Debug, Clone)]
pub struct CholFactor {
    l: Matrix,
}

impl CholFactor {
    pub fn dim(&self) -> usize {
        self.l.nrows()
    }

    pub fn lower(&self) -> &Matrix {
        &self.l
    }

    /// Solves `L X = B` in place.
    pub fn forward_solve_mut(&self, b: &mut Matrix) {
        let n = self.dim();
        for c in 0..b.ncols() {
            for i in 0..n {
                let mut s = b[(i, c)];
                for k in 0..i {
                    s -= self.l[(i, k)] * b[(k, c)];
                }
                b[(i, c)] = s / self.l[(i, i)];
            }
        }
    }

    /// Solves `Lᵀ X = B` in place.
    pub fn backward_solve_mut(&self, b: &mut Matrix) {
        let n = self.dim();
        for c in 0..b.ncols() {
            for i in (0..n).rev() {
                let mut s = b[(i, c)];
                for k in i + 1..n {
                    s -= self.l[(k, i)] * b[(k, c)];
                }
                b[(i, c)] = s / self.l[(i, i)];
            }
        }
    }

    pub fn inverse(&self) -> SymMatrix {
        let n = self.dim();
        let mut x = Matrix::identity(n, n);
        self.forward_solve_mut(&mut x);
        self.backward_solve_mut(&mut x);
        SymMatrix::symmetrize(x)
    }

    pub fn reconstruct(&self) -> Matrix {
        &self.l * self.l.transpose()
    }
}

pub fn cholesky(s: &SymMatrix) -> Result<CholFactor> {
    let a = s.as_matrix();
    let n = s.dim();
    let max_diag = (0..n).map(|i| a[(i, i)]).fold(0.0_f64, f64::max);
    let threshold = n as f64 * PIVOT_TOL * max_diag;
    let mut l = Matrix::zeros(n, n);
    for j in 0..n {
        let mut d = a[(j, j)];
        for k in 0..j {
            d -= l[(j, k)] * l[(j, k)];
        }
        if !(d > threshold) {
            return Err(Error::not_pd(format!(
                "cholesky pivot {j} is {d:e} (threshold {threshold:e})"
            )));
        }
        let ljj = d.sqrt();
        l[(j, j)] = ljj;
        for i in j + 1..n {
            let mut v = a[(i, j)];
            for k in 0..j {
                v -= l[(i, k)] * l[(j, k)];
            }
            l[(i, j)] = v / ljj;
        }
    }
    Ok(CholFactor { l })
}

/// Solves `S X = B` given `S = L Lᵀ`.
pub fn solve_psd(f: &CholFactor, b: &Matrix) -> Result<Matrix> {
    if b.nrows() != f.dim() {
        return Err(Error::dims(format!(
            "solve: factor is {}x{}, right-hand side has {} rows",
            f.dim(),
            f.dim(),
            b.nrows()
        )));
    }
    let mut x = b.clone();
    f.forward_solve_mut(&mut x);
    f.backward_solve_mut(&mut x);
    Ok(x)
}

pub fn logdet(f: &CholFactor) -> f64 {
    2.0 * (0..f.dim()).map(|i| f.l[(i, i)].ln()).sum::<f64>()
}

/// All eigenvalues in ascending order.
pub fn eigenvalues(s: &SymMatrix) -> Vec<f64> {
    let eig = SymmetricEigen::new(s.as_matrix().clone());
    let mut v: Vec<f64> = eig.eigenvalues.iter().copied().collect();
    v.sort_by(f64::total_cmp);
    v
}

/// `(lambda_min, lambda_max)`.
pub fn extreme_eigs(s: &SymMatrix) -> (f64, f64) {
    if s.dim() == 1 {
        let v = s.get(0, 0);
        return (v, v);
    }
    let ev = eigenvalues(s);
    (ev[0], ev[ev.len() - 1])
}

pub fn lambda_max(s: &SymMatrix) -> f64 {
    extreme_eigs(s).1
}

/// True when every eigenvalue is at least `-PSD_TOL * max(1, lambda_max)`.
pub fn is_psd(s: &SymMatrix) -> bool {
    let (lo, hi) = extreme_eigs(s);
    lo >= -PSD_TOL * hi.max(1.0)
}

/// Low-rank term of the inversion lemma for `Y + Aᵀ R⁻¹ A`.
///
/// Holds `W = Y⁻¹ Aᵀ` and the Cholesky factor of the capacitance
/// `C = R + A Y⁻¹ Aᵀ`, so that `(Y + AᵀR⁻¹A)⁻¹ = Y⁻¹ − W C⁻¹ Wᵀ`.
#[derive(Debug, Clone)]
pub struct WoodburyTerm {
    pub w: Matrix,
    pub capacitance: CholFactor,
}

impl WoodburyTerm {
    pub fn new(y_inv: &SymMatrix, a_u: &Matrix, r_u: &SymMatrix) -> Result<Self> {
        let p = y_inv.dim();
        if a_u.ncols() != p {
            return Err(Error::dims(format!(
                "woodbury: A has {} columns, Y is {p}x{p}",
                a_u.ncols()
            )));
        }
        if a_u.nrows() != r_u.dim() {
            return Err(Error::dims(format!(
                "woodbury: A has {} rows, R is {}x{}",
                a_u.nrows(),
                r_u.dim(),
                r_u.dim()
            )));
        }
        let w = y_inv.as_matrix() * a_u.transpose();
        let cap = SymMatrix::symmetrize(r_u.as_matrix() + a_u * &w);
        let capacitance = cholesky(&cap).map_err(|_| {
            Error::not_pd("woodbury capacitance R + A Y⁻¹ Aᵀ; noise covariance must be SPD")
        })?;
        Ok(Self { w, capacitance })
    }

    /// `W C⁻¹ Wᵀ` mapped through `h`: returns `G = L_C⁻¹ (H W)ᵀ` so that the
    /// covariance reduction `H W C⁻¹ Wᵀ Hᵀ` equals `Gᵀ G`.
    pub fn reduction_root(&self, h: Option<&Matrix>) -> Matrix {
        let mut g = match h {
            Some(h) => (h * &self.w).transpose(),
            None => self.w.transpose(),
        };
        self.capacitance.forward_solve_mut(&mut g);
        g
    }

    /// `trace(H W C⁻¹ Wᵀ Hᵀ)`, a sum of squares and therefore nonnegative.
    pub fn trace_reduction(&self, h: Option<&Matrix>) -> f64 {
        self.reduction_root(h).norm_squared()
    }

    /// `Y⁻¹ − W C⁻¹ Wᵀ`.
    pub fn apply(&self, y_inv: &SymMatrix) -> SymMatrix {
        let g = self.reduction_root(None);
        SymMatrix::symmetrize(y_inv.as_matrix() - g.transpose() * g)
    }
}

/// `(Y + A_uᵀ R_u⁻¹ A_u)⁻¹` from `Y⁻¹` by the matrix inversion lemma.
pub fn woodbury_update(y_inv: &SymMatrix, a_u: &Matrix, r_u: &SymMatrix) -> Result<SymMatrix> {
    Ok(WoodburyTerm::new(y_inv, a_u, r_u)?.apply(y_inv))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sym(rows: &[&[f64]]) -> SymMatrix {
        SymMatrix::from_rows(&rows.iter().map(|r| r.to_vec()).collect::<Vec<_>>()).unwrap()
    }

    #[test]
    fn cholesky_identity_and_diagonal() {
        let f = cholesky(&SymMatrix::identity(2)).unwrap();
        assert_eq!(f.lower(), &Matrix::identity(2, 2));
        let f = cholesky(&SymMatrix::from_diagonal(&[4.0, 9.0])).unwrap();
        assert_eq!(f.lower()[(0, 0)], 2.0);
        assert_eq!(f.lower()[(1, 1)], 3.0);
        assert_eq!(f.lower()[(1, 0)], 0.0);
    }

    #[test]
    fn cholesky_reconstructs() {
        let s = sym(&[&[2.0, 1.0], &[1.0, 2.0]]);
        let f = cholesky(&s).unwrap();
        let err = (f.reconstruct() - s.as_matrix()).amax();
        assert!(err < 1e-10 * 2.0);
    }

    #[test]
    fn cholesky_rejects_singular_and_indefinite() {
        assert!(matches!(
            cholesky(&sym(&[&[1.0, 1.0], &[1.0, 1.0]])),
            Err(Error::NotPositiveDefinite { .. })
        ));
        assert!(matches!(
            cholesky(&SymMatrix::from_diagonal(&[1.0, -1.0])),
            Err(Error::NotPositiveDefinite { .. })
        ));
    }

    #[test]
    fn new_rejects_asymmetric() {
        let m = Matrix::from_row_slice(2, 2, &[1.0, 0.5, 0.4, 1.0]);
        assert!(matches!(SymMatrix::new(m), Err(Error::NotSymmetric { .. })));
        let m = Matrix::from_row_slice(2, 3, &[1.0; 6]);
        assert!(matches!(SymMatrix::new(m), Err(Error::DimensionMismatch(_))));
    }

    #[test]
    fn solve_identity_and_diagonal() {
        let b = Matrix::from_row_slice(2, 3, &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
        let x = solve_psd(&cholesky(&SymMatrix::identity(2)).unwrap(), &b).unwrap();
        assert_eq!(x, b);
        let f = cholesky(&SymMatrix::from_diagonal(&[2.0, 4.0])).unwrap();
        let x = solve_psd(&f, &Matrix::identity(2, 2)).unwrap();
        assert!((x - Matrix::from_row_slice(2, 2, &[0.5, 0.0, 0.0, 0.25])).amax() < 1e-15);
        assert!(matches!(
            solve_psd(&f, &Matrix::zeros(3, 1)),
            Err(Error::DimensionMismatch(_))
        ));
    }

    #[test]
    fn extreme_eigs_examples() {
        assert_eq!(extreme_eigs(&SymMatrix::from_diagonal(&[1.0, 3.0])), (1.0, 3.0));
        let (lo, hi) = extreme_eigs(&SymMatrix::identity(5));
        assert!((lo - 1.0).abs() < 1e-12 && (hi - 1.0).abs() < 1e-12);
        // char. polynomial (2 - x)^2 - 1 has roots 1 and 3
        let (lo, hi) = extreme_eigs(&sym(&[&[2.0, 1.0], &[1.0, 2.0]]));
        assert!((lo - 1.0).abs() < 1e-9 && (hi - 3.0).abs() < 1e-9);
    }

    #[test]
    fn woodbury_examples() {
        let a = Matrix::from_row_slice(1, 2, &[1.0, 0.0]);
        let r = SymMatrix::from_diagonal(&[1.0]);
        let up = woodbury_update(&SymMatrix::identity(2), &a, &r).unwrap();
        assert!((up.as_matrix() - Matrix::from_row_slice(2, 2, &[0.5, 0.0, 0.0, 1.0])).amax() < 1e-15);

        let y_inv = sym(&[&[2.0, 0.3], &[0.3, 1.0]]);
        let up = woodbury_update(&y_inv, &Matrix::zeros(2, 2), &SymMatrix::identity(2)).unwrap();
        assert_eq!(up, y_inv);

        let up = woodbury_update(
            &SymMatrix::identity(1),
            &Matrix::from_element(1, 1, 1.0),
            &SymMatrix::from_diagonal(&[0.5]),
        )
        .unwrap();
        assert!((up.get(0, 0) - 1.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn woodbury_rejects_bad_noise() {
        let a = Matrix::from_row_slice(1, 2, &[0.0, 0.0]);
        let r = SymMatrix::from_diagonal(&[-1.0]);
        assert!(matches!(
            woodbury_update(&SymMatrix::identity(2), &a, &r),
            Err(Error::NotPositiveDefinite { .. })
        ));
        let r = SymMatrix::from_diagonal(&[1.0, 1.0]);
        assert!(matches!(
            woodbury_update(&SymMatrix::identity(2), &a, &r),
            Err(Error::DimensionMismatch(_))
        ));
    }

    #[test]
    fn logdet_examples() {
        assert_eq!(logdet(&cholesky(&SymMatrix::identity(3)).unwrap()), 0.0);
        let ld = logdet(&cholesky(&SymMatrix::from_diagonal(&[2.0, 3.0])).unwrap());
        assert!((ld - 6f64.ln()).abs() < 1e-12);
    }
}
