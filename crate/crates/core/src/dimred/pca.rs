//! Principal components from the eigendecomposition of the population
//! covariance matrix.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{Error, Result};

pub(crate) fn column_means(x: &DMatrix<f64>) -> DVector<f64> {
    DVector::from_iterator(x.ncols(), x.column_iter().map(|c| c.mean()))
}

pub(crate) fn center(x: &DMatrix<f64>, mean: &DVector<f64>) -> DMatrix<f64> {
    let mut xc = x.clone();
    for (j, mut col) in xc.column_iter_mut().enumerate() {
        col.add_scalar_mut(-mean[j]);
    }
    xc
}

/// Eigenpairs of the covariance matrix, sorted by descending eigenvalue
/// (ties by original index). Columns of the returned matrix are directions.
pub(crate) fn covariance_eigen(xc: &DMatrix<f64>) -> (Vec<f64>, DMatrix<f64>) {
    let n = xc.nrows() as f64;
    let cov = (xc.transpose() * xc) / n;
    let eig = SymmetricEigen::new(cov);
    let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    order.sort_by(|&a, &b| {
        eig.eigenvalues[b]
            .total_cmp(&eig.eigenvalues[a])
            .then(a.cmp(&b))
    });
    let values = order.iter().map(|&i| eig.eigenvalues[i].max(0.0)).collect();
    let vectors = eig.eigenvectors.select_columns(&order);
    (values, vectors)
}

/// Flips `v` so that its largest-magnitude entry (first on ties) is positive.
/// Returns whether it flipped.
pub(crate) fn orient(mut v: nalgebra::DVectorViewMut<'_, f64>) -> bool {
    let pivot = v
        .iter()
        .enumerate()
        .fold((0, -1.0), |(bi, bv), (i, x)| if x.abs() > bv { (i, x.abs()) } else { (bi, bv) })
        .0;
    if v[pivot] < 0.0 {
        v.neg_mut();
        true
    } else {
        false
    }
}

pub(crate) fn check_rank(x: &DMatrix<f64>, rank: usize) -> Result<()> {
    if rank == 0 || rank > x.nrows().min(x.ncols()) {
        return Err(Error::Validation(format!(
            "rank {rank} must lie in 1..={} for a {}x{} matrix",
            x.nrows().min(x.ncols()),
            x.nrows(),
            x.ncols()
        )));
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::Validation("input has non-finite entries".into()));
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct PcaFit {
    pub mean: DVector<f64>,
    /// rank × features, orthonormal rows.
    pub components: DMatrix<f64>,
    pub scores: DMatrix<f64>,
    /// Variance of every principal direction (all of them, not just `rank`).
    pub eigenvalues: Vec<f64>,
}

pub fn fit(x: &DMatrix<f64>, rank: usize) -> Result<PcaFit> {
    check_rank(x, rank)?;
    let mean = column_means(x);
    let xc = center(x, &mean);
    let (eigenvalues, vectors) = covariance_eigen(&xc);
    let mut directions = vectors.columns(0, rank).into_owned();
    for j in 0..rank {
        orient(directions.column_mut(j));
    }
    let components = directions.transpose();
    let scores = project(x, &mean, &components);
    Ok(PcaFit {
        mean,
        components,
        scores,
        eigenvalues,
    })
}

/// `(x − mean) · componentsᵀ`.
pub fn project(x: &DMatrix<f64>, mean: &DVector<f64>, components: &DMatrix<f64>) -> DMatrix<f64> {
    center(x, mean) * components.transpose()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn collinear_points_have_one_component() {
        let x = DMatrix::from_fn(6, 2, |i, j| (i as f64) * if j == 0 { 1.0 } else { 2.0 });
        let fit = fit(&x, 1).unwrap();
        let total: f64 = fit.eigenvalues.iter().sum();
        assert!(fit.eigenvalues[0] / total > 1.0 - 1e-9);
    }

    #[test]
    fn full_rank_reconstructs_centered_data() {
        let x = DMatrix::from_row_slice(4, 3, &[1.0, 2.0, 0.5, 3.0, 1.0, 2.0, 0.0, 4.0, 1.0, 2.0, 2.0, 2.0]);
        let fit = fit(&x, 3).unwrap();
        let recon = &fit.scores * &fit.components;
        let xc = center(&x, &fit.mean);
        assert!((recon - xc).amax() < 1e-9);
    }

    #[test]
    fn sign_convention_makes_largest_entry_positive() {
        let x = DMatrix::from_row_slice(4, 2, &[1.0, -3.0, 2.0, -6.0, 3.0, -8.0, 4.0, -12.0]);
        let fit = fit(&x, 1).unwrap();
        let row = fit.components.row(0);
        let pivot = row.iter().enumerate().fold((0, -1.0f64), |(bi, bv), (i, v)| if v.abs() > bv { (i, v.abs()) } else { (bi, bv) }).0;
        assert!(row[pivot] > 0.0);
    }
}
