//! Symmetric FastICA with the log-cosh contrast, after PCA whitening.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand_distr::{Distribution, StandardNormal};

use super::pca::{center, check_rank, column_means, covariance_eigen, orient};
use crate::error::{Error, Result};
use crate::rng;

#[derive(Debug, Clone, PartialEq)]
pub struct IcaFit {
    pub mean: DVector<f64>,
    /// rank × features: sources = (x − mean) · projectionᵀ.
    pub projection: DMatrix<f64>,
    /// rank × features: centered data ≈ sources · mixing.
    pub mixing: DMatrix<f64>,
    /// rank × rank orthogonal unmixing matrix acting on whitened data.
    pub unmixing: DMatrix<f64>,
    pub sources: DMatrix<f64>,
    pub iterations: usize,
    pub converged: bool,
}

/// `(W Wᵀ)^{-1/2} W`.
fn symmetric_decorrelation(w: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let eig = SymmetricEigen::new(w * w.transpose());
    if eig.eigenvalues.iter().any(|&v| v.is_nan() || v <= 1e-300) {
        return Err(Error::Numeric("unmixing matrix became singular".into()));
    }
    let inv_sqrt = DMatrix::from_diagonal(&eig.eigenvalues.map(|v| 1.0 / v.sqrt()));
    Ok(&eig.eigenvectors * inv_sqrt * eig.eigenvectors.transpose() * w)
}

pub fn fit(x: &DMatrix<f64>, rank: usize, max_iter: usize, tol: f64, seed: u64) -> Result<IcaFit> {
    check_rank(x, rank)?;
    let n = x.nrows() as f64;
    let mean = column_means(x);
    let xc = center(x, &mean);
    let (values, vectors) = covariance_eigen(&xc);
    let top = values[0];
    if values[..rank].iter().any(|&v| v.is_nan() || v <= 1e-12 * top.max(1e-300)) {
        return Err(Error::Numeric(format!(
            "cannot whiten to {rank} components: covariance has fewer non-null directions"
        )));
    }
    // whitening: rank × features
    let mut whitening = vectors.columns(0, rank).transpose();
    for (k, mut row) in whitening.row_iter_mut().enumerate() {
        row /= values[k].sqrt();
    }
    let z = &xc * whitening.transpose();

    let mut rng = rng::stream(seed, &[rng::TAG_ICA]);
    let init = DMatrix::from_fn(rank, rank, |_, _| StandardNormal.sample(&mut rng));
    let mut w = symmetric_decorrelation(&init)?;

    let mut converged = false;
    let mut iterations = 0;
    for it in 1..=max_iter {
        let u = &z * w.transpose();
        let g = u.map(f64::tanh);
        let g_prime_mean = DVector::from_iterator(
            rank,
            g.column_iter().map(|c| c.iter().map(|t| 1.0 - t * t).sum::<f64>() / n),
        );
        let w_new = (g.transpose() * &z) / n - DMatrix::from_diagonal(&g_prime_mean) * &w;
        let w_new = symmetric_decorrelation(&w_new)?;
        let change = (&w_new * w.transpose())
            .diagonal()
            .iter()
            .map(|d| (d.abs() - 1.0).abs())
            .fold(0.0, f64::max);
        w = w_new;
        iterations = it;
        if change < tol {
            converged = true;
            break;
        }
    }

    let mut projection = &w * &whitening;
    // pinv(P) = E Λ^{1/2} Wᵀ, stored transposed
    let mut sqrt_vectors = vectors.columns(0, rank).into_owned();
    for (k, mut col) in sqrt_vectors.column_iter_mut().enumerate() {
        col *= values[k].sqrt();
    }
    let mut mixing = (sqrt_vectors * w.transpose()).transpose();
    for k in 0..rank {
        let mut row = mixing.row(k).transpose();
        if orient(row.column_mut(0)) {
            mixing.row_mut(k).neg_mut();
            projection.row_mut(k).neg_mut();
            w.row_mut(k).neg_mut();
        }
    }
    let sources = &xc * projection.transpose();
    Ok(IcaFit {
        mean,
        projection,
        mixing,
        unmixing: w,
        sources,
        iterations,
        converged,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn corr(a: &[f64], b: &[f64]) -> f64 {
        let n = a.len() as f64;
        let (ma, mb) = (a.iter().sum::<f64>() / n, b.iter().sum::<f64>() / n);
        let cov: f64 = a.iter().zip(b).map(|(x, y)| (x - ma) * (y - mb)).sum();
        let va: f64 = a.iter().map(|x| (x - ma).powi(2)).sum();
        let vb: f64 = b.iter().map(|y| (y - mb).powi(2)).sum();
        cov / (va * vb).sqrt()
    }

    #[test]
    fn unmixes_two_uniform_sources() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let n = 2000;
        let s = DMatrix::from_fn(n, 2, |_, _| rng.random::<f64>() * 2.0 - 1.0);
        let a = DMatrix::from_row_slice(2, 2, &[1.0, 0.6, 0.4, 1.2]);
        let x = &s * a.transpose();
        let fit = fit(&x, 2, 500, 1e-8, 3).unwrap();
        assert!(fit.converged);
        for k in 0..2 {
            let truth = s.column(k);
            let best = (0..2)
                .map(|j| corr(truth.as_slice(), fit.sources.column(j).as_slice()).abs())
                .fold(0.0, f64::max);
            assert!(best >= 0.95, "source {k} best |r| = {best}");
        }
    }

    #[test]
    fn outputs_have_unit_variance_and_are_reproducible() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let x = DMatrix::from_fn(300, 4, |_, _| StandardNormal.sample(&mut rng));
        let a = fit(&x, 3, 50, 1e-6, 1).unwrap();
        for col in a.sources.column_iter() {
            let var = col.iter().map(|v| v * v).sum::<f64>() / 300.0;
            assert!((var - 1.0).abs() < 1e-6);
        }
        let b = fit(&x, 3, 50, 1e-6, 1).unwrap();
        assert_eq!(a.unmixing, b.unmixing);
    }
}
