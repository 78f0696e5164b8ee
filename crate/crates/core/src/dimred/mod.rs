//! Progression-space factorization.
//!
//! The normalized cohort matrix `X` (patients × features) is approximated by
//! `W · H`, with `W` holding the patients' latent coordinates and `H` the
//! feature loadings of each latent dimension. NMF is the primary method; PCA
//! and FastICA are comparison baselines sharing the same output type.

pub mod ica;
pub mod nmf;
pub mod nnls;
pub mod pca;

use std::fmt;
use std::io::Write;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::cohort::{split_feature_name, FeatureMatrix, Normalization};
use crate::error::{Error, Result};
use crate::matrix_serde;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Nmf,
    Pca,
    Ica,
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Method::Nmf => "nmf",
            Method::Pca => "pca",
            Method::Ica => "ica",
        })
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "nmf" => Ok(Method::Nmf),
            "pca" => Ok(Method::Pca),
            "ica" | "fastica" => Ok(Method::Ica),
            other => Err(Error::Validation(format!(
                "unknown dimensionality reduction method `{other}`"
            ))),
        }
    }
}

/// Feature layout and scaling a space was fitted on; held-out matrices must
/// match it before projection.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureSchema {
    pub feature_names: Vec<String>,
    pub normalization: Normalization,
    pub norm_params: Vec<(f64, f64)>,
    /// Raw medians, used to fill features a held-out cohort lacks entirely.
    pub column_medians: Vec<f64>,
}

impl FeatureSchema {
    pub fn of(m: &FeatureMatrix) -> Self {
        FeatureSchema {
            feature_names: m.feature_names().to_vec(),
            normalization: m.normalization(),
            norm_params: m.norm_params().to_vec(),
            column_medians: m.column_medians().to_vec(),
        }
    }

    /// Reorders the columns of a normalized matrix into schema order by name.
    pub fn align(&self, m: &FeatureMatrix) -> Result<FeatureMatrix> {
        if m.normalization() != self.normalization {
            return Err(Error::Schema(format!(
                "matrix is {:?}-normalized but the space expects {:?}",
                m.normalization(),
                self.normalization
            )));
        }
        let mut missing = Vec::new();
        let idx: Vec<usize> = self
            .feature_names
            .iter()
            .filter_map(|name| {
                let found = m.feature_names().iter().position(|n| n == name);
                if found.is_none() {
                    missing.push(name.as_str());
                }
                found
            })
            .collect();
        if !missing.is_empty() {
            return Err(Error::Schema(format!(
                "{} fitted feature(s) absent from input, e.g. {:?}",
                missing.len(),
                &missing[..missing.len().min(5)]
            )));
        }
        let aligned = m.select_columns(&idx);
        if aligned.norm_params() != self.norm_params.as_slice() {
            return Err(Error::Schema(
                "input was normalized with different parameters than the fitted space".into(),
            ));
        }
        Ok(aligned)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitReport {
    pub iterations: usize,
    /// Squared Frobenius reconstruction error of the (centered, for PCA/ICA) input.
    pub final_objective: f64,
    pub converged: bool,
    pub restarts: usize,
    pub best_restart: usize,
    /// NMF objective per update for the winning restart; empty for PCA/ICA.
    pub objective_trace: Vec<f64>,
}

/// A fitted low-rank progression space.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProgressionSpace {
    method: Method,
    rank: usize,
    schema: FeatureSchema,
    patient_ids: Vec<String>,
    #[serde(with = "matrix_serde")]
    patient_coords: DMatrix<f64>,
    #[serde(with = "matrix_serde")]
    loadings: DMatrix<f64>,
    center: Option<Vec<f64>>,
    #[serde(with = "matrix_serde::option")]
    projection: Option<DMatrix<f64>>,
    explained_variance: Vec<f64>,
    dimension_order: Vec<usize>,
    dimension_names: Option<Vec<String>>,
    fit_report: FitReport,
}

impl ProgressionSpace {
    pub fn method(&self) -> Method {
        self.method
    }

    pub fn rank(&self) -> usize {
        self.rank
    }

    pub fn schema(&self) -> &FeatureSchema {
        &self.schema
    }

    pub fn patient_ids(&self) -> &[String] {
        &self.patient_ids
    }

    /// Patients × rank latent coordinates (`W`).
    pub fn patient_coords(&self) -> &DMatrix<f64> {
        &self.patient_coords
    }

    /// Rank × features loadings (`H`).
    pub fn loadings(&self) -> &DMatrix<f64> {
        &self.loadings
    }

    pub fn explained_variance(&self) -> &[f64] {
        &self.explained_variance
    }

    /// Dimension indices sorted by descending explained variance.
    pub fn dimension_order(&self) -> &[usize] {
        &self.dimension_order
    }

    pub fn dimension_names(&self) -> Option<&[String]> {
        self.dimension_names.as_deref()
    }

    pub fn fit_report(&self) -> &FitReport {
        &self.fit_report
    }

    /// Names dimensions after dimension families, one family per dimension.
    /// Each dimension's absolute loading mass is split into per-family
    /// fractions, and the one-to-one matching with the largest total
    /// fraction wins. Unmatched dimensions are `dimK`.
    pub fn with_dimension_names(mut self, families: &DimensionFamilies) -> Self {
        let nf = families.0.len();
        let fractions: Vec<Vec<f64>> = (0..self.rank)
            .map(|k| {
                let mut mass = vec![0.0; nf];
                for (j, name) in self.schema.feature_names.iter().enumerate() {
                    let code = split_feature_name(name).map_or(name.as_str(), |(c, _)| c);
                    if let Some(f) = families.family_of(code) {
                        mass[f] += self.loadings[(k, j)].abs();
                    }
                }
                let total: f64 = self.loadings.row(k).iter().map(|v| v.abs()).sum();
                mass.iter().map(|m| if total > 0.0 { m / total } else { 0.0 }).collect()
            })
            .collect();
        let matching = match_families(&fractions, nf);
        let names = matching
            .iter()
            .enumerate()
            .map(|(k, f)| f.map_or_else(|| format!("dim{}", k + 1), |f| families.0[f].0.clone()))
            .collect();
        self.dimension_names = Some(names);
        self
    }

    /// Label of dimension `k`: its family name if named, else `dimK`.
    pub fn dimension_label(&self, k: usize) -> String {
        self.dimension_names
            .as_ref()
            .map_or_else(|| format!("dim{}", k + 1), |n| n[k].clone())
    }

    /// Two-dimensional view: the highest-variance dimension against the sum
    /// of all remaining dimensions.
    pub fn combined_view(&self, coords: &DMatrix<f64>) -> DMatrix<f64> {
        let lead = self.dimension_order[0];
        DMatrix::from_fn(coords.nrows(), 2, |i, c| {
            if c == 0 {
                coords[(i, lead)]
            } else {
                (0..coords.ncols())
                    .filter(|&k| k != lead)
                    .map(|k| coords[(i, k)])
                    .sum()
            }
        })
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }
}

/// Injective dimension → family matching maximizing the summed fractions.
/// Exhaustive for small problems, greedy by strongest pair otherwise.
fn match_families(fractions: &[Vec<f64>], nf: usize) -> Vec<Option<usize>> {
    let rank = fractions.len();
    if ((nf + 1) as f64).powi(rank as i32) <= 1e6 {
        fn search(
            k: usize,
            fractions: &[Vec<f64>],
            used: &mut Vec<bool>,
            current: &mut Vec<Option<usize>>,
            score: f64,
            best: &mut (f64, Vec<Option<usize>>),
        ) {
            if k == fractions.len() {
                if score > best.0 {
                    *best = (score, current.clone());
                }
                return;
            }
            for f in 0..used.len() {
                if !used[f] && fractions[k][f] > 0.0 {
                    used[f] = true;
                    current.push(Some(f));
                    search(k + 1, fractions, used, current, score + fractions[k][f], best);
                    current.pop();
                    used[f] = false;
                }
            }
            current.push(None);
            search(k + 1, fractions, used, current, score, best);
            current.pop();
        }
        let mut best = (-1.0, vec![None; rank]);
        search(0, fractions, &mut vec![false; nf], &mut Vec::new(), 0.0, &mut best);
        return best.1;
    }
    let mut pairs: Vec<(usize, usize)> = (0..rank)
        .flat_map(|k| (0..nf).map(move |f| (k, f)))
        .filter(|&(k, f)| fractions[k][f] > 0.0)
        .collect();
    pairs.sort_by(|a, b| fractions[b.0][b.1].total_cmp(&fractions[a.0][a.1]).then(a.cmp(b)));
    let mut out = vec![None; rank];
    let mut used = vec![false; nf];
    for (k, f) in pairs {
        if out[k].is_none() && !used[f] {
            out[k] = Some(f);
            used[f] = true;
        }
    }
    out
}

/// Which coordinates downstream clustering sees.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum View {
    /// All `rank` dimensions.
    Full,
    /// [`ProgressionSpace::combined_view`].
    Combined2d,
}

impl FromStr for View {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "full" => Ok(View::Full),
            "combined2d" => Ok(View::Combined2d),
            other => Err(Error::Validation(format!(
                "unknown view `{other}` (expected full or combined2d)"
            ))),
        }
    }
}

impl View {
    pub fn apply(self, space: &ProgressionSpace, coords: &DMatrix<f64>) -> DMatrix<f64> {
        match self {
            View::Full => coords.clone(),
            View::Combined2d => space.combined_view(coords),
        }
    }
}

/// Ordered map from family name (e.g. `motor`) to the code prefixes it owns.
#[derive(Debug, Clone, PartialEq)]
pub struct DimensionFamilies(pub Vec<(String, Vec<String>)>);

impl Default for DimensionFamilies {
    fn default() -> Self {
        DimensionFamilies(
            ["motor", "cognitive", "sleep"]
                .iter()
                .map(|f| (f.to_string(), vec![f.to_string()]))
                .collect(),
        )
    }
}

impl DimensionFamilies {
    pub fn family_of(&self, code: &str) -> Option<usize> {
        self.0
            .iter()
            .position(|(_, prefixes)| prefixes.iter().any(|p| code.starts_with(p.as_str())))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DimredOptions {
    pub method: Method,
    pub rank: usize,
    pub max_iter: usize,
    pub tol: f64,
    pub seed: u64,
    /// NMF restarts; ignored by PCA and ICA.
    pub restarts: usize,
}

impl Default for DimredOptions {
    fn default() -> Self {
        DimredOptions {
            method: Method::Nmf,
            rank: 3,
            max_iter: 500,
            tol: 1e-6,
            seed: 0,
            restarts: 5,
        }
    }
}

pub fn fit(m: &FeatureMatrix, opts: &DimredOptions) -> Result<ProgressionSpace> {
    match opts.method {
        Method::Nmf => fit_nmf(m, opts.rank, opts.max_iter, opts.tol, opts.seed, opts.restarts),
        Method::Pca => fit_pca(m, opts.rank),
        Method::Ica => fit_ica(m, opts.rank, opts.max_iter, opts.tol, opts.seed),
    }
}

fn finish(
    m: &FeatureMatrix,
    method: Method,
    coords: DMatrix<f64>,
    loadings: DMatrix<f64>,
    center: Option<Vec<f64>>,
    projection: Option<DMatrix<f64>>,
    fit_report: FitReport,
) -> ProgressionSpace {
    let rank = coords.ncols();
    let mut space = ProgressionSpace {
        method,
        rank,
        schema: FeatureSchema::of(m),
        patient_ids: m.patient_ids().to_vec(),
        patient_coords: coords,
        loadings,
        center,
        projection,
        explained_variance: Vec::new(),
        dimension_order: (0..rank).collect(),
        dimension_names: None,
        fit_report,
    };
    let shares = variance_shares(&space, m.values(), &space.patient_coords);
    space.dimension_order = order_by_share(&shares);
    space.explained_variance = shares;
    space
}

/// Lee–Seung NMF; best of `restarts` by final objective.
pub fn fit_nmf(
    m: &FeatureMatrix,
    rank: usize,
    max_iter: usize,
    tol: f64,
    seed: u64,
    restarts: usize,
) -> Result<ProgressionSpace> {
    let opts = nmf::NmfOptions {
        rank,
        max_iter,
        tol,
        seed,
        restarts,
    };
    let (fit, best) = nmf::factorize(m.values(), &opts)?;
    let report = FitReport {
        iterations: fit.iterations,
        final_objective: fit.objective(),
        converged: fit.converged,
        restarts: restarts.max(1),
        best_restart: best,
        objective_trace: fit.objective_trace.clone(),
    };
    Ok(finish(m, Method::Nmf, fit.w, fit.h, None, None, report))
}

pub fn fit_pca(m: &FeatureMatrix, rank: usize) -> Result<ProgressionSpace> {
    let fit = pca::fit(m.values(), rank)?;
    let xc = pca::center(m.values(), &fit.mean);
    let report = FitReport {
        iterations: 1,
        final_objective: (xc - &fit.scores * &fit.components).norm_squared(),
        converged: true,
        restarts: 1,
        best_restart: 0,
        objective_trace: Vec::new(),
    };
    Ok(finish(
        m,
        Method::Pca,
        fit.scores,
        fit.components,
        Some(fit.mean.iter().copied().collect()),
        None,
        report,
    ))
}

pub fn fit_ica(
    m: &FeatureMatrix,
    rank: usize,
    max_iter: usize,
    tol: f64,
    seed: u64,
) -> Result<ProgressionSpace> {
    let fit = ica::fit(m.values(), rank, max_iter, tol, seed)?;
    if !fit.converged {
        log::warn!("FastICA did not converge in {max_iter} iterations");
    }
    let xc = pca::center(m.values(), &fit.mean);
    let report = FitReport {
        iterations: fit.iterations,
        final_objective: (xc - &fit.sources * &fit.mixing).norm_squared(),
        converged: fit.converged,
        restarts: 1,
        best_restart: 0,
        objective_trace: Vec::new(),
    };
    Ok(finish(
        m,
        Method::Ica,
        fit.sources,
        fit.mixing,
        Some(fit.mean.iter().copied().collect()),
        Some(fit.projection),
        report,
    ))
}

fn project_values(space: &ProgressionSpace, x: &DMatrix<f64>) -> DMatrix<f64> {
    match space.method {
        Method::Nmf => nmf::solve_coordinates(x, &space.loadings),
        Method::Pca | Method::Ica => {
            let mean = DVector::from_column_slice(space.center.as_deref().unwrap_or_default());
            let directions = space.projection.as_ref().unwrap_or(&space.loadings);
            pca::project(x, &mean, directions)
        }
    }
}

/// Maps patients of a matrix normalized with the fitted parameters into the
/// space. Columns are matched by name.
pub fn project(space: &ProgressionSpace, m: &FeatureMatrix) -> Result<DMatrix<f64>> {
    let aligned = space.schema.align(m)?;
    Ok(project_values(space, aligned.values()))
}

fn population_variance(v: impl Iterator<Item = f64> + Clone) -> f64 {
    let n = v.clone().count() as f64;
    if n == 0.0 {
        return 0.0;
    }
    let mean = v.clone().sum::<f64>() / n;
    v.map(|x| (x - mean).powi(2)).sum::<f64>() / n
}

/// Share of total column variance carried by each rank-one term
/// `coords[:, k] · loadings[k, :]`, clamped to `[0, 1]`.
fn variance_shares(space: &ProgressionSpace, x: &DMatrix<f64>, coords: &DMatrix<f64>) -> Vec<f64> {
    let total: f64 = x
        .column_iter()
        .map(|c| population_variance(c.iter().copied()))
        .sum();
    (0..space.rank)
        .map(|k| {
            if total <= 0.0 {
                return 0.0;
            }
            let term = population_variance(coords.column(k).iter().copied())
                * space.loadings.row(k).norm_squared();
            (term / total).clamp(0.0, 1.0)
        })
        .collect()
}

fn order_by_share(shares: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..shares.len()).collect();
    order.sort_by(|&a, &b| shares[b].total_cmp(&shares[a]).then(a.cmp(&b)));
    order
}

/// Per-dimension share of `m`'s total variance captured by the space.
pub fn explained_variance(space: &ProgressionSpace, m: &FeatureMatrix) -> Result<Vec<f64>> {
    let aligned = space.schema.align(m)?;
    let coords = project_values(space, aligned.values());
    Ok(variance_shares(space, aligned.values(), &coords))
}

/// Writes `patient_id,<header...>` rows.
pub fn write_coordinates_csv<W: Write>(
    w: W,
    patient_ids: &[String],
    header: &[String],
    coords: &DMatrix<f64>,
) -> Result<()> {
    let mut wr = csv::Writer::from_writer(w);
    let mut head = vec!["patient_id".to_owned()];
    head.extend(header.iter().cloned());
    wr.write_record(&head)?;
    for (i, pid) in patient_ids.iter().enumerate() {
        let mut row = vec![pid.clone()];
        row.extend(coords.row(i).iter().map(f64::to_string));
        wr.write_record(&row)?;
    }
    wr.flush().map_err(|e| Error::io("<coordinates csv>", e))?;
    Ok(())
}
