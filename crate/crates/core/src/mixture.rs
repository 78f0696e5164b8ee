//! Gaussian mixture models fitted by EM, BIC model-order selection, and
//! velocity-ordered subtype labels.
//!
//! Components are ranked by the Euclidean norm of their mean: larger
//! progression-space coordinates mean steeper decline, so the component
//! closest to the origin becomes `PDVec1` (slowest) and the farthest `PDVecK`.

use std::io::Write;

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix_serde;
use crate::rng;

const LN_2PI: f64 = 1.837_877_066_409_345_3;
const MASS_EPS: f64 = 10.0 * f64::EPSILON;

#[derive(Debug, Clone, PartialEq)]
pub struct GmmOptions {
    pub max_iter: usize,
    /// Convergence threshold on the per-point mean log-likelihood gain.
    pub tol: f64,
    pub seed: u64,
    pub n_init: usize,
    /// Added to every covariance diagonal after each M-step.
    pub reg_floor: f64,
}

impl Default for GmmOptions {
    fn default() -> Self {
        GmmOptions {
            max_iter: 300,
            tol: 1e-6,
            seed: 0,
            n_init: 10,
            reg_floor: 1e-6,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GmmModel {
    k: usize,
    dim: usize,
    weights: Vec<f64>,
    #[serde(with = "matrix_serde")]
    means: DMatrix<f64>,
    #[serde(with = "matrix_serde::vec")]
    covariances: Vec<DMatrix<f64>>,
    log_likelihood: f64,
    n_iter: usize,
    converged: bool,
    /// `subtype_order[c]` is the 1-based PDVec rank of component `c`.
    subtype_order: Vec<usize>,
    reg_floor: f64,
    best_init: usize,
    log_likelihood_trace: Vec<f64>,
}

/// Per-component Cholesky factors and log normalizers.
struct Components {
    log_weights: Vec<f64>,
    means: DMatrix<f64>,
    factors: Vec<Cholesky<f64, Dyn>>,
    log_norms: Vec<f64>,
}

impl Components {
    fn new(weights: &[f64], means: &DMatrix<f64>, covariances: &[DMatrix<f64>]) -> Result<Self> {
        let d = means.ncols() as f64;
        let mut factors = Vec::with_capacity(covariances.len());
        let mut log_norms = Vec::with_capacity(covariances.len());
        for (c, cov) in covariances.iter().enumerate() {
            let ch = cov.clone().cholesky().ok_or_else(|| {
                Error::Numeric(format!("covariance of component {c} is not positive definite"))
            })?;
            let log_det = 2.0 * ch.l_dirty().diagonal().iter().map(|v| v.ln()).sum::<f64>();
            log_norms.push(-0.5 * (d * LN_2PI + log_det));
            factors.push(ch);
        }
        Ok(Components {
            log_weights: weights.iter().map(|w| w.ln()).collect(),
            means: means.clone(),
            factors,
            log_norms,
        })
    }

    /// Weighted log densities `ln πc + ln N(x; μc, Σc)` for every point and component.
    fn weighted_log_densities(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
        let (n, k) = (x.nrows(), self.factors.len());
        let mut out = DMatrix::zeros(n, k);
        for c in 0..k {
            let l = self.factors[c].l();
            let mut diff = x.clone();
            for i in 0..n {
                let mut row = diff.row_mut(i);
                row -= self.means.row(c);
            }
            // Solve L · z = diffᵀ for all points at once.
            let z = l
                .solve_lower_triangular(&diff.transpose())
                .expect("Cholesky factor has a positive diagonal");
            for i in 0..n {
                let maha = z.column(i).norm_squared();
                out[(i, c)] = self.log_weights[c] + self.log_norms[c] - 0.5 * maha;
            }
        }
        out
    }
}

fn log_sum_exp(row: impl Iterator<Item = f64> + Clone) -> f64 {
    let max = row.clone().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    max + row.map(|v| (v - max).exp()).sum::<f64>().ln()
}

/// Total log-likelihood and responsibilities.
fn e_step(comp: &Components, x: &DMatrix<f64>) -> (f64, DMatrix<f64>) {
    let mut dens = comp.weighted_log_densities(x);
    let mut total = 0.0;
    for i in 0..dens.nrows() {
        let lse = log_sum_exp(dens.row(i).iter().copied());
        total += lse;
        for v in dens.row_mut(i).iter_mut() {
            *v = (*v - lse).exp();
        }
    }
    (total, dens)
}

struct Params {
    weights: Vec<f64>,
    means: DMatrix<f64>,
    covariances: Vec<DMatrix<f64>>,
}

fn m_step(x: &DMatrix<f64>, resp: &DMatrix<f64>, reg_floor: f64) -> Params {
    let (n, d) = x.shape();
    let k = resp.ncols();
    let mass: Vec<f64> = resp.column_iter().map(|c| c.sum() + MASS_EPS).collect();
    let total: f64 = mass.iter().sum();
    let weights = mass.iter().map(|m| m / total).collect();
    let means = DMatrix::from_fn(k, d, |c, j| {
        (0..n).map(|i| resp[(i, c)] * x[(i, j)]).sum::<f64>() / mass[c]
    });
    let covariances = (0..k)
        .map(|c| {
            let mut cov = DMatrix::zeros(d, d);
            let mut diff = DVector::zeros(d);
            for i in 0..n {
                let r = resp[(i, c)];
                if r == 0.0 {
                    continue;
                }
                for j in 0..d {
                    diff[j] = x[(i, j)] - means[(c, j)];
                }
                cov.ger(r, &diff, &diff, 1.0);
            }
            cov /= mass[c];
            // symmetrize against rounding before regularizing
            let cov = (&cov + cov.transpose()) * 0.5;
            cov + DMatrix::identity(d, d) * reg_floor
        })
        .collect();
    Params {
        weights,
        means,
        covariances,
    }
}

/// k-means++ seeding followed by a single assignment pass.
fn kmeans_assignment<R: Rng>(x: &DMatrix<f64>, k: usize, rng: &mut R) -> Vec<usize> {
    let n = x.nrows();
    let dist2 = |i: usize, center: &DVector<f64>| -> f64 {
        (0..x.ncols()).map(|j| (x[(i, j)] - center[j]).powi(2)).sum()
    };
    let mut centers: Vec<DVector<f64>> = Vec::with_capacity(k);
    centers.push(x.row(rng.random_range(0..n)).transpose());
    let mut nearest: Vec<f64> = (0..n).map(|i| dist2(i, &centers[0])).collect();
    while centers.len() < k {
        let total: f64 = nearest.iter().sum();
        let pick = if total > 0.0 {
            let mut target = rng.random::<f64>() * total;
            let mut chosen = n - 1;
            for (i, &d) in nearest.iter().enumerate() {
                if target < d {
                    chosen = i;
                    break;
                }
                target -= d;
            }
            chosen
        } else {
            rng.random_range(0..n)
        };
        let center = x.row(pick).transpose();
        for (i, best) in nearest.iter_mut().enumerate() {
            *best = best.min(dist2(i, &center));
        }
        centers.push(center);
    }
    (0..n)
        .map(|i| {
            let mut best = (0, f64::INFINITY);
            for (c, center) in centers.iter().enumerate() {
                let d = dist2(i, center);
                if d < best.1 {
                    best = (c, d);
                }
            }
            best.0
        })
        .collect()
}

fn validate_coords(x: &DMatrix<f64>, k: usize) -> Result<()> {
    if k == 0 {
        return Err(Error::Validation("mixture needs at least one component".into()));
    }
    if x.ncols() == 0 {
        return Err(Error::Validation("coordinates have zero dimensions".into()));
    }
    if x.nrows() < k {
        return Err(Error::Validation(format!(
            "{} points cannot support {k} components",
            x.nrows()
        )));
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::Validation("coordinates contain non-finite values".into()));
    }
    Ok(())
}

/// Velocity score per component: norm of its mean. Returns 1-based ranks.
fn rank_by_velocity(means: &DMatrix<f64>) -> Vec<usize> {
    let norms: Vec<f64> = means.row_iter().map(|r| r.norm()).collect();
    let mut order: Vec<usize> = (0..norms.len()).collect();
    order.sort_by(|&a, &b| norms[a].total_cmp(&norms[b]).then(a.cmp(&b)));
    let mut ranks = vec![0; norms.len()];
    for (rank, &c) in order.iter().enumerate() {
        ranks[c] = rank + 1;
    }
    ranks
}

/// Result of a single EM run, including the per-iteration trace.
#[derive(Debug, Clone)]
pub struct EmRun {
    pub model: GmmModel,
    /// Log-likelihood of each parameter iterate, initialization first.
    pub trace: Vec<f64>,
}

/// One EM run from the initialization drawn from stream `(seed, k, init_index)`.
pub fn fit_gmm_once(x: &DMatrix<f64>, k: usize, opts: &GmmOptions, init_index: usize) -> Result<EmRun> {
    validate_coords(x, k)?;
    let n = x.nrows() as f64;
    let mut rng = rng::stream(opts.seed, &[rng::TAG_GMM, k as u64, init_index as u64]);
    let assignment = kmeans_assignment(x, k, &mut rng);
    let mut hard = DMatrix::zeros(x.nrows(), k);
    for (i, &c) in assignment.iter().enumerate() {
        hard[(i, c)] = 1.0;
    }
    let mut params = m_step(x, &hard, opts.reg_floor);
    let comp = Components::new(&params.weights, &params.means, &params.covariances)?;
    let (mut ll, mut resp) = e_step(&comp, x);
    let mut trace = vec![ll];
    let mut converged = false;
    let mut n_iter = 0;
    for it in 1..=opts.max_iter {
        let next = m_step(x, &resp, opts.reg_floor);
        let comp = Components::new(&next.weights, &next.means, &next.covariances)?;
        let (ll_next, resp_next) = e_step(&comp, x);
        if !ll_next.is_finite() {
            return Err(Error::Numeric("log-likelihood became non-finite".into()));
        }
        if ll_next < ll - 1e-9 * ll.abs().max(1.0) {
            log::warn!("EM log-likelihood decreased from {ll} to {ll_next} at iteration {it}");
        }
        trace.push(ll_next);
        params = next;
        resp = resp_next;
        n_iter = it;
        let gain = (ll_next - ll) / n;
        ll = ll_next;
        if gain < opts.tol {
            converged = true;
            break;
        }
    }
    let subtype_order = rank_by_velocity(&params.means);
    Ok(EmRun {
        model: GmmModel {
            k,
            dim: x.ncols(),
            weights: params.weights,
            means: params.means,
            covariances: params.covariances,
            log_likelihood: ll,
            n_iter,
            converged,
            subtype_order,
            reg_floor: opts.reg_floor,
            best_init: init_index,
            log_likelihood_trace: trace.clone(),
        },
        trace,
    })
}

/// Best of `opts.n_init` EM runs by final log-likelihood.
pub fn fit_gmm(x: &DMatrix<f64>, k: usize, opts: &GmmOptions) -> Result<GmmModel> {
    validate_coords(x, k)?;
    let runs: Vec<EmRun> = (0..opts.n_init.max(1))
        .into_par_iter()
        .map(|i| fit_gmm_once(x, k, opts, i))
        .collect::<Result<_>>()?;
    let best = runs
        .into_iter()
        .reduce(|best, r| {
            if r.model.log_likelihood > best.model.log_likelihood {
                r
            } else {
                best
            }
        })
        .expect("at least one run");
    Ok(best.model)
}

impl GmmModel {
    /// Builds a model from explicit parameters (e.g. for scoring or tests).
    pub fn from_parameters(
        weights: Vec<f64>,
        means: DMatrix<f64>,
        covariances: Vec<DMatrix<f64>>,
    ) -> Result<Self> {
        let k = weights.len();
        let dim = means.ncols();
        if k == 0 || means.nrows() != k || covariances.len() != k {
            return Err(Error::Validation("inconsistent mixture parameter shapes".into()));
        }
        if covariances.iter().any(|c| c.shape() != (dim, dim)) {
            return Err(Error::Validation("covariance shape does not match dimension".into()));
        }
        let sum: f64 = weights.iter().sum();
        if weights.iter().any(|w| *w < 0.0) || (sum - 1.0).abs() > 1e-12 {
            return Err(Error::Validation("weights must be a probability vector".into()));
        }
        Components::new(&weights, &means, &covariances)?;
        let subtype_order = rank_by_velocity(&means);
        Ok(GmmModel {
            k,
            dim,
            weights,
            means,
            covariances,
            log_likelihood: f64::NAN,
            n_iter: 0,
            converged: true,
            subtype_order,
            reg_floor: 0.0,
            best_init: 0,
            log_likelihood_trace: Vec::new(),
        })
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// k × d component means.
    pub fn means(&self) -> &DMatrix<f64> {
        &self.means
    }

    pub fn covariances(&self) -> &[DMatrix<f64>] {
        &self.covariances
    }

    /// Log-likelihood of the training data at the returned parameters.
    pub fn log_likelihood(&self) -> f64 {
        self.log_likelihood
    }

    pub fn n_iter(&self) -> usize {
        self.n_iter
    }

    pub fn converged(&self) -> bool {
        self.converged
    }

    pub fn subtype_order(&self) -> &[usize] {
        &self.subtype_order
    }

    pub fn reg_floor(&self) -> f64 {
        self.reg_floor
    }

    pub fn log_likelihood_trace(&self) -> &[f64] {
        &self.log_likelihood_trace
    }

    /// Free parameters of a full-covariance mixture: `k−1 + k·d + k·d(d+1)/2`.
    pub fn n_params(&self) -> usize {
        n_params(self.k, self.dim)
    }

    fn components(&self) -> Result<Components> {
        Components::new(&self.weights, &self.means, &self.covariances)
    }

    fn check_dim(&self, x: &DMatrix<f64>) -> Result<()> {
        if x.ncols() != self.dim {
            return Err(Error::Validation(format!(
                "model has dimension {} but coordinates have {}",
                self.dim,
                x.ncols()
            )));
        }
        Ok(())
    }

    /// Posterior component probabilities (n × k, component order).
    pub fn responsibilities(&self, x: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        self.check_dim(x)?;
        Ok(e_step(&self.components()?, x).1)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }
}

pub fn n_params(k: usize, d: usize) -> usize {
    k - 1 + k * d + k * d * (d + 1) / 2
}

/// `Σᵢ ln Σc πc N(xᵢ; μc, Σc)` via log-sum-exp.
pub fn log_likelihood(model: &GmmModel, x: &DMatrix<f64>) -> Result<f64> {
    model.check_dim(x)?;
    Ok(e_step(&model.components()?, x).0)
}

/// `n_params · ln n − 2 · logL`; lower is better.
pub fn bic_value(log_likelihood: f64, n_params: usize, n: usize) -> f64 {
    n_params as f64 * (n as f64).ln() - 2.0 * log_likelihood
}

pub fn bic(model: &GmmModel, x: &DMatrix<f64>) -> Result<f64> {
    Ok(bic_value(log_likelihood(model, x)?, model.n_params(), x.nrows()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Candidate {
    pub k: usize,
    pub log_likelihood: f64,
    pub n_params: usize,
    pub bic: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FailedCandidate {
    pub k: usize,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSelectionReport {
    pub candidates: Vec<Candidate>,
    pub failed: Vec<FailedCandidate>,
    pub chosen_k: usize,
}

/// Fits every `k` in `k_min..=k_max` and keeps the one with the lowest BIC
/// (ties to the smaller `k`). Failed orders are recorded and skipped.
pub fn select_k(
    x: &DMatrix<f64>,
    k_min: usize,
    k_max: usize,
    opts: &GmmOptions,
) -> Result<(ModelSelectionReport, GmmModel)> {
    if k_min == 0 || k_min > k_max {
        return Err(Error::Validation(format!(
            "invalid component range {k_min}..={k_max}"
        )));
    }
    let fits: Vec<(usize, Result<GmmModel>)> = (k_min..=k_max)
        .into_par_iter()
        .map(|k| (k, fit_gmm(x, k, opts)))
        .collect();
    let mut candidates = Vec::new();
    let mut failed = Vec::new();
    let mut best: Option<(f64, GmmModel)> = None;
    for (k, fit) in fits {
        match fit {
            Ok(model) => {
                let b = bic_value(model.log_likelihood, model.n_params(), x.nrows());
                candidates.push(Candidate {
                    k,
                    log_likelihood: model.log_likelihood,
                    n_params: model.n_params(),
                    bic: b,
                });
                if best.as_ref().is_none_or(|(bb, _)| b < *bb) {
                    best = Some((b, model));
                }
            }
            Err(e) => {
                log::warn!("mixture with k = {k} failed: {e}");
                failed.push(FailedCandidate {
                    k,
                    reason: e.to_string(),
                });
            }
        }
    }
    let (_, model) = best.ok_or_else(|| {
        Error::Numeric(format!("every mixture order in {k_min}..={k_max} failed"))
    })?;
    Ok((
        ModelSelectionReport {
            candidates,
            failed,
            chosen_k: model.k,
        },
        model,
    ))
}

/// Subtype label for a 1-based rank.
pub fn subtype_name(rank: usize) -> String {
    format!("PDVec{rank}")
}

#[derive(Debug, Clone, PartialEq)]
pub struct SubtypeAssignment {
    pub patient_ids: Vec<String>,
    /// 1-based PDVec rank per patient.
    pub labels: Vec<usize>,
    /// n × k responsibilities with columns in PDVec rank order.
    pub responsibilities: DMatrix<f64>,
}

impl SubtypeAssignment {
    pub fn label_names(&self) -> Vec<String> {
        self.labels.iter().map(|&r| subtype_name(r)).collect()
    }

    pub fn counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.responsibilities.ncols()];
        for &l in &self.labels {
            counts[l - 1] += 1;
        }
        counts
    }

    /// `patient_id,subtype,resp_1..resp_k`.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wr = csv::Writer::from_writer(w);
        let mut header = vec!["patient_id".to_owned(), "subtype".to_owned()];
        header.extend((1..=self.responsibilities.ncols()).map(|r| format!("resp_{r}")));
        wr.write_record(&header)?;
        for (i, pid) in self.patient_ids.iter().enumerate() {
            let mut row = vec![pid.clone(), subtype_name(self.labels[i])];
            row.extend(self.responsibilities.row(i).iter().map(f64::to_string));
            wr.write_record(&row)?;
        }
        wr.flush().map_err(|e| Error::io("<assignment csv>", e))?;
        Ok(())
    }
}

/// Hard labels and rank-ordered responsibilities; ties go to the lower rank.
pub fn assign_subtypes(
    model: &GmmModel,
    x: &DMatrix<f64>,
    patient_ids: &[String],
) -> Result<SubtypeAssignment> {
    if patient_ids.len() != x.nrows() {
        return Err(Error::Validation(format!(
            "{} patient ids for {} coordinate rows",
            patient_ids.len(),
            x.nrows()
        )));
    }
    let resp = model.responsibilities(x)?;
    let k = model.k;
    let mut ordered = DMatrix::zeros(x.nrows(), k);
    for c in 0..k {
        ordered.set_column(model.subtype_order[c] - 1, &resp.column(c));
    }
    let labels = ordered
        .row_iter()
        .map(|row| {
            let mut best = (0, f64::NEG_INFINITY);
            for (r, &v) in row.iter().enumerate() {
                if v > best.1 {
                    best = (r, v);
                }
            }
            best.0 + 1
        })
        .collect();
    Ok(SubtypeAssignment {
        patient_ids: patient_ids.to_vec(),
        labels,
        responsibilities: ordered,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn blobs(centers: &[&[f64]], per: usize, sd: f64, seed: u64) -> DMatrix<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let d = centers[0].len();
        let mut x = DMatrix::zeros(centers.len() * per, d);
        for (c, center) in centers.iter().enumerate() {
            for i in 0..per {
                for j in 0..d {
                    let z: f64 = StandardNormal.sample(&mut rng);
                    x[(c * per + i, j)] = center[j] + sd * z;
                }
            }
        }
        x
    }

    #[test]
    fn separates_two_distant_clusters() {
        let x = blobs(&[&[0.0, 0.0], &[10.0, 0.0]], 200, 1.0, 1);
        let model = fit_gmm(&x, 2, &GmmOptions::default()).unwrap();
        let mut means: Vec<f64> = model.means().column(0).iter().copied().collect();
        means.sort_by(f64::total_cmp);
        assert!((means[0] - 0.0).abs() < 0.1 && (means[1] - 10.0).abs() < 0.1, "{means:?}");
        let resp = model.responsibilities(&x).unwrap();
        for row in resp.row_iter() {
            assert!(row.max() >= 0.999);
        }
    }

    #[test]
    fn single_component_is_the_sample_moments() {
        let x = blobs(&[&[1.0, -2.0, 0.5]], 80, 1.3, 2);
        let opts = GmmOptions {
            reg_floor: 0.0,
            ..GmmOptions::default()
        };
        let model = fit_gmm(&x, 1, &opts).unwrap();
        let n = x.nrows() as f64;
        let mean = x.row_mean();
        let mut cov = DMatrix::zeros(3, 3);
        for row in x.row_iter() {
            let d = (row - &mean).transpose();
            cov += &d * d.transpose();
        }
        cov /= n;
        assert!((model.means().row(0) - mean).amax() < 1e-9);
        assert!((&model.covariances()[0] - cov).amax() < 1e-9);
    }

    #[test]
    fn duplicated_points_do_not_crash() {
        let x = DMatrix::from_element(10, 2, 3.0);
        let model = fit_gmm(&x, 2, &GmmOptions::default()).unwrap();
        let heavy = if model.weights()[0] > model.weights()[1] { 0 } else { 1 };
        let expected = DMatrix::identity(2, 2) * 1e-6;
        assert!((&model.covariances()[heavy] - expected).amax() < 1e-18);
    }

    #[test]
    fn standard_normal_log_density_at_origin() {
        let model = GmmModel::from_parameters(
            vec![1.0],
            DMatrix::zeros(1, 1),
            vec![DMatrix::identity(1, 1)],
        )
        .unwrap();
        let ll = log_likelihood(&model, &DMatrix::zeros(1, 1)).unwrap();
        assert!((ll + 0.918_938_533_204_672_7).abs() < 1e-12);
    }

    #[test]
    fn identical_components_collapse() {
        let mean = DMatrix::from_row_slice(1, 2, &[0.5, -1.0]);
        let cov = DMatrix::from_row_slice(2, 2, &[2.0, 0.3, 0.3, 1.0]);
        let one = GmmModel::from_parameters(vec![1.0], mean.clone(), vec![cov.clone()]).unwrap();
        let two = GmmModel::from_parameters(
            vec![0.5, 0.5],
            DMatrix::from_row_slice(2, 2, &[0.5, -1.0, 0.5, -1.0]),
            vec![cov.clone(), cov],
        )
        .unwrap();
        let x = blobs(&[&[0.0, 0.0]], 30, 1.0, 3);
        let a = log_likelihood(&one, &x).unwrap();
        let b = log_likelihood(&two, &x).unwrap();
        assert!((a - b).abs() < 1e-9 * a.abs());
        assert!(matches!(
            log_likelihood(&one, &DMatrix::zeros(2, 3)),
            Err(Error::Validation(_))
        ));
    }

    #[test]
    fn bic_examples() {
        assert!((bic_value(-100.0, 5, 50) - 219.560_115_027_140_7).abs() < 1e-9);
        assert!(bic_value(-10.0, 3, 40) < bic_value(-10.0, 4, 40));
        assert_eq!(bic_value(-7.5, 9, 1), 15.0);
        assert_eq!(n_params(3, 2), 2 + 6 + 9);
    }

    #[test]
    fn fixed_range_has_one_candidate() {
        let x = blobs(&[&[0.0], &[5.0]], 40, 1.0, 4);
        let (report, model) = select_k(&x, 2, 2, &GmmOptions::default()).unwrap();
        assert_eq!(report.candidates.len(), 1);
        assert_eq!(model.k(), 2);
    }

    #[test]
    fn too_few_points_is_recorded_not_fatal() {
        let x = blobs(&[&[0.0, 1.0]], 3, 1.0, 5);
        let (report, _) = select_k(&x, 1, 4, &GmmOptions::default()).unwrap();
        assert_eq!(report.failed.iter().map(|f| f.k).collect::<Vec<_>>(), [4]);
        assert!(matches!(fit_gmm(&x, 4, &GmmOptions::default()), Err(Error::Validation(_))));
    }

    #[test]
    fn subtypes_follow_mean_norm() {
        let means = DMatrix::from_row_slice(3, 1, &[0.9, 0.2, 0.5]);
        let covs = vec![DMatrix::identity(1, 1) * 0.01; 3];
        let model = GmmModel::from_parameters(vec![1.0 / 3.0; 3], means, covs).unwrap();
        assert_eq!(model.subtype_order(), &[3, 1, 2]);
        let x = DMatrix::from_row_slice(3, 1, &[0.2, 0.5, 0.9]);
        let ids: Vec<String> = ["a", "b", "c"].iter().map(|s| s.to_string()).collect();
        let a = assign_subtypes(&model, &x, &ids).unwrap();
        assert_eq!(a.labels, [1, 2, 3]);
    }

    #[test]
    fn equidistant_point_ties_to_lower_rank() {
        let means = DMatrix::from_row_slice(2, 1, &[1.0, -2.0]);
        let covs = vec![DMatrix::identity(1, 1); 2];
        let model = GmmModel::from_parameters(vec![0.5, 0.5], means, covs).unwrap();
        let a = assign_subtypes(&model, &DMatrix::from_element(1, 1, -0.5), &["p".into()]).unwrap();
        assert!((a.responsibilities[(0, 0)] - 0.5).abs() < 1e-12);
        assert_eq!(a.labels, [1]);
    }
}
