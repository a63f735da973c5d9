//! Dense symmetric eigendecomposition with a deterministic output convention.

use nalgebra::{DMatrix, SymmetricEigen};

use crate::error::{Error, Result};

/// Relative tolerance on `|a_ij - a_ji|` accepted as symmetric.
const SYMMETRY_RTOL: f64 = 1e-12;

/// Eigenpairs of a symmetric matrix, sorted by ascending eigenvalue.
#[derive(Clone, Debug, PartialEq)]
pub struct Eigh {
    pub values: Vec<f64>,
    /// Column `i` is the unit eigenvector for `values[i]`.
    pub vectors: DMatrix<f64>,
}

pub fn check_symmetric(m: &DMatrix<f64>) -> Result<()> {
    if !m.is_square() {
        return Err(Error::ContractViolation(format!(
            "expected a square matrix, got {}x{}",
            m.nrows(),
            m.ncols()
        )));
    }
    if m.iter().any(|v| !v.is_finite()) {
        return Err(Error::ContractViolation(
            "matrix has non-finite entries".into(),
        ));
    }
    let scale = m.amax().max(f64::MIN_POSITIVE);
    let n = m.nrows();
    for j in 0..n {
        for i in (j + 1)..n {
            if (m[(i, j)] - m[(j, i)]).abs() > SYMMETRY_RTOL * scale {
                return Err(Error::ContractViolation(format!(
                    "matrix is not symmetric at ({i}, {j})"
                )));
            }
        }
    }
    Ok(())
}

/// Full eigendecomposition of a symmetric matrix.
///
/// Eigenvalues come back ascending (stable with respect to the solver's
/// order on exact ties). Each eigenvector is signed so that its entry of
/// largest magnitude is positive, the first such entry on ties.
pub fn eigh(m: &DMatrix<f64>) -> Result<Eigh> {
    check_symmetric(m)?;
    let decomposition = SymmetricEigen::new(m.clone());
    let n = m.nrows();

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| {
        decomposition.eigenvalues[a]
            .total_cmp(&decomposition.eigenvalues[b])
            .then(a.cmp(&b))
    });

    let values = order
        .iter()
        .map(|&i| decomposition.eigenvalues[i])
        .collect();
    let mut vectors = DMatrix::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        let column = decomposition.eigenvectors.column(src);
        let mut pivot = 0;
        for (row, v) in column.iter().enumerate() {
            if v.abs() > column[pivot].abs() {
                pivot = row;
            }
        }
        let sign = if column[pivot] < 0.0 { -1.0 } else { 1.0 };
        vectors.set_column(dst, &(column * sign));
    }
    Ok(Eigh { values, vectors })
}

/// Ascending eigenvalues only.
pub fn eigvalsh(m: &DMatrix<f64>) -> Result<Vec<f64>> {
    check_symmetric(m)?;
    let mut values: Vec<f64> = m.clone().symmetric_eigenvalues().iter().copied().collect();
    values.sort_by(f64::total_cmp);
    Ok(values)
}

/// `tr(Pᵀ M P)` without forming the c×c product.
pub fn projected_trace(m: &DMatrix<f64>, basis: &DMatrix<f64>) -> f64 {
    (m * basis).component_mul(basis).sum()
}
