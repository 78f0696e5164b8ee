//! Frobenius-norm NMF with Lee–Seung multiplicative updates.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rayon::prelude::*;

use super::nnls::nnls_gram;
use crate::error::{Error, Result};
use crate::rng;

const DENOM_EPS: f64 = 1e-16;

#[derive(Debug, Clone, PartialEq)]
pub struct NmfOptions {
    pub rank: usize,
    pub max_iter: usize,
    pub tol: f64,
    pub seed: u64,
    pub restarts: usize,
}

impl Default for NmfOptions {
    fn default() -> Self {
        NmfOptions {
            rank: 3,
            max_iter: 500,
            tol: 1e-6,
            seed: 0,
            restarts: 5,
        }
    }
}

/// State handed to a step observer after every update.
pub struct NmfStep<'a> {
    pub iteration: usize,
    pub objective: f64,
    pub w: &'a DMatrix<f64>,
    pub h: &'a DMatrix<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NmfFactors {
    pub w: DMatrix<f64>,
    pub h: DMatrix<f64>,
    /// Objective at initialization followed by one entry per step, the last
    /// being the exact nonnegative solve for `W`.
    pub objective_trace: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
}

impl NmfFactors {
    pub fn objective(&self) -> f64 {
        *self.objective_trace.last().expect("trace is never empty")
    }
}

pub fn reconstruction_error(x: &DMatrix<f64>, w: &DMatrix<f64>, h: &DMatrix<f64>) -> f64 {
    (x - w * h).norm_squared()
}

/// Per-row nonnegative least squares for `W` with `H` fixed.
pub fn solve_coordinates(x: &DMatrix<f64>, h: &DMatrix<f64>) -> DMatrix<f64> {
    let gram = h * h.transpose();
    let rhs = h * x.transpose();
    let mut w = DMatrix::zeros(x.nrows(), h.nrows());
    for i in 0..x.nrows() {
        let b: DVector<f64> = rhs.column(i).into_owned();
        w.row_mut(i).copy_from(&nnls_gram(&gram, &b).transpose());
    }
    w
}

pub(crate) fn check_input(x: &DMatrix<f64>, rank: usize) -> Result<()> {
    if let Some(v) = x.iter().find(|v| !v.is_finite() || **v < 0.0) {
        return Err(Error::Precondition(format!(
            "NMF input must be finite and nonnegative, found {v}"
        )));
    }
    if rank == 0 || rank > x.nrows().min(x.ncols()) {
        return Err(Error::Validation(format!(
            "rank {rank} must lie in 1..={} for a {}x{} matrix",
            x.nrows().min(x.ncols()),
            x.nrows(),
            x.ncols()
        )));
    }
    Ok(())
}

/// One multiplicative-update run from the initialization drawn from `rng`.
/// `observer` sees the factors after every update.
pub fn factorize_once<R: Rng>(
    x: &DMatrix<f64>,
    rank: usize,
    max_iter: usize,
    tol: f64,
    rng: &mut R,
    mut observer: impl FnMut(&NmfStep<'_>),
) -> Result<NmfFactors> {
    check_input(x, rank)?;
    let (n, f) = x.shape();
    let scale = x.mean() / rank as f64;
    let mut w = DMatrix::from_fn(n, rank, |_, _| rng.random::<f64>() * scale);
    let mut h = DMatrix::from_fn(rank, f, |_, _| rng.random::<f64>() * scale);

    let mut trace = vec![reconstruction_error(x, &w, &h)];
    let mut converged = false;
    let mut iterations = 0;
    for it in 1..=max_iter {
        let wt = w.transpose();
        let num_h = &wt * x;
        let den_h = (&wt * &w) * &h;
        h.zip_zip_apply(&num_h, &den_h, |v, a, b| *v *= a / (b + DENOM_EPS));

        let ht = h.transpose();
        let num_w = x * &ht;
        let den_w = &w * (&h * &ht);
        w.zip_zip_apply(&num_w, &den_w, |v, a, b| *v *= a / (b + DENOM_EPS));

        let obj = reconstruction_error(x, &w, &h);
        observer(&NmfStep {
            iteration: it,
            objective: obj,
            w: &w,
            h: &h,
        });
        let prev = *trace.last().expect("non-empty");
        trace.push(obj);
        iterations = it;
        if prev <= 0.0 || (prev - obj) / prev < tol {
            converged = true;
            break;
        }
    }

    w = solve_coordinates(x, &h);
    let obj = reconstruction_error(x, &w, &h);
    observer(&NmfStep {
        iteration: iterations + 1,
        objective: obj,
        w: &w,
        h: &h,
    });
    trace.push(obj);

    Ok(NmfFactors {
        w,
        h,
        objective_trace: trace,
        iterations,
        converged,
    })
}

/// Best of `opts.restarts` runs by final objective. Restart `r` draws from the
/// stream `(seed, r)`, so the parallel result equals the serial one.
pub fn factorize(x: &DMatrix<f64>, opts: &NmfOptions) -> Result<(NmfFactors, usize)> {
    check_input(x, opts.rank)?;
    let restarts = opts.restarts.max(1);
    let runs: Vec<NmfFactors> = (0..restarts)
        .into_par_iter()
        .map(|r| {
            let mut rng = rng::stream(opts.seed, &[rng::TAG_NMF, r as u64]);
            factorize_once(x, opts.rank, opts.max_iter, opts.tol, &mut rng, |_| {})
        })
        .collect::<Result<_>>()?;
    let (best, _) = runs
        .iter()
        .enumerate()
        .fold((0, f64::INFINITY), |(bi, bv), (i, r)| {
            if r.objective() < bv {
                (i, r.objective())
            } else {
                (bi, bv)
            }
        });
    Ok((runs.into_iter().nth(best).expect("index in range"), best))
}
