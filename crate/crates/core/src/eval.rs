//! Cross-validation, ROC analysis, partition agreement and the harness that
//! replays a trained pipeline on an external cohort.

use std::collections::BTreeMap;
use std::fmt;
use std::io::Write;

use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cohort::{self, apply_normalization, split_feature_name, CohortLabel, FeatureMatrix, VisitTable};
use crate::dimred::{self, ProgressionSpace, View};
use crate::error::{Error, Result};
use crate::forest::{self, ForestModel, ForestParams};
use crate::mixture::{self, GmmModel, SubtypeAssignment};
use crate::rng;

/// Assigns every sample to one of `k` folds. Each class is shuffled and dealt
/// round-robin, continuing from where the previous class stopped, so fold
/// sizes differ by at most one overall and per class.
pub fn stratified_kfold<T: Ord + fmt::Display>(labels: &[T], k: usize, seed: u64) -> Result<Vec<usize>> {
    if k < 2 {
        return Err(Error::Validation(format!(
            "cross-validation needs at least 2 folds, got {k}"
        )));
    }
    let mut by_class: BTreeMap<&T, Vec<usize>> = BTreeMap::new();
    for (i, l) in labels.iter().enumerate() {
        by_class.entry(l).or_default().push(i);
    }
    if let Some((class, members)) = by_class.iter().find(|(_, m)| m.len() < k) {
        return Err(Error::Validation(format!(
            "class `{class}` has {} member(s), fewer than the {k} folds",
            members.len()
        )));
    }
    let mut rng = rng::stream(seed, &[rng::TAG_FOLDS]);
    let mut folds = vec![0; labels.len()];
    let mut offset = 0;
    for members in by_class.values_mut() {
        members.shuffle(&mut rng);
        for (j, &i) in members.iter().enumerate() {
            folds[i] = (offset + j) % k;
        }
        offset = (offset + members.len()) % k;
    }
    Ok(folds)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RocCurve {
    pub fpr: Vec<f64>,
    pub tpr: Vec<f64>,
    /// Score cutoff for each point (`score >= threshold` is positive); the
    /// first point uses +∞.
    pub thresholds: Vec<f64>,
    pub auc: f64,
}

impl RocCurve {
    /// `fpr,tpr,threshold`.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wr = csv::Writer::from_writer(w);
        wr.write_record(["fpr", "tpr", "threshold"])?;
        for i in 0..self.fpr.len() {
            wr.write_record([
                self.fpr[i].to_string(),
                self.tpr[i].to_string(),
                self.thresholds[i].to_string(),
            ])?;
        }
        wr.flush().map_err(|e| Error::io("<roc csv>", e))?;
        Ok(())
    }
}

/// Threshold sweep over distinct scores, highest first. Samples sharing a
/// score enter together, giving a diagonal segment.
pub fn roc_curve(scores: &[f64], labels: &[bool]) -> Result<RocCurve> {
    if scores.len() != labels.len() {
        return Err(Error::Validation(format!(
            "{} scores for {} labels",
            scores.len(),
            labels.len()
        )));
    }
    if scores.iter().any(|s| !s.is_finite()) {
        return Err(Error::Validation("scores must be finite".into()));
    }
    let pos = labels.iter().filter(|&&l| l).count();
    let neg = labels.len() - pos;
    if pos == 0 || neg == 0 {
        return Err(Error::Validation(
            "ROC needs both positive and negative samples".into(),
        ));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));

    let mut curve = RocCurve {
        fpr: vec![0.0],
        tpr: vec![0.0],
        thresholds: vec![f64::INFINITY],
        auc: 0.0,
    };
    let (mut tp, mut fp) = (0usize, 0usize);
    let mut i = 0;
    while i < order.len() {
        let s = scores[order[i]];
        while i < order.len() && scores[order[i]] == s {
            if labels[order[i]] {
                tp += 1;
            } else {
                fp += 1;
            }
            i += 1;
        }
        curve.fpr.push(fp as f64 / neg as f64);
        curve.tpr.push(tp as f64 / pos as f64);
        curve.thresholds.push(s);
    }
    curve.auc = trapezoid(&curve.fpr, &curve.tpr);
    Ok(curve)
}

fn trapezoid(x: &[f64], y: &[f64]) -> f64 {
    x.windows(2)
        .zip(y.windows(2))
        .map(|(x, y)| (x[1] - x[0]) * (y[1] + y[0]) / 2.0)
        .sum()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MacroAuc {
    pub classes: Vec<String>,
    /// `None` for classes absent from the labels.
    pub per_class: Vec<Option<f64>>,
    pub macro_auc: f64,
}

impl MacroAuc {
    pub fn class_auc(&self, class: &str) -> Option<f64> {
        let i = self.classes.iter().position(|c| c == class)?;
        self.per_class[i]
    }
}

/// One-vs-rest ROC for every class column of `proba`. `labels` index into
/// `classes`.
pub fn macro_ovr_auc(
    proba: &DMatrix<f64>,
    labels: &[usize],
    classes: &[String],
) -> Result<(MacroAuc, Vec<Option<RocCurve>>)> {
    if proba.nrows() != labels.len() || proba.ncols() != classes.len() {
        return Err(Error::Validation(format!(
            "probability matrix is {}x{} for {} labels and {} classes",
            proba.nrows(),
            proba.ncols(),
            labels.len(),
            classes.len()
        )));
    }
    if let Some(&bad) = labels.iter().find(|&&l| l >= classes.len()) {
        return Err(Error::Validation(format!("label index {bad} out of range")));
    }
    let present = (0..classes.len()).filter(|c| labels.contains(c)).count();
    if present < 2 {
        return Err(Error::Validation(format!(
            "one-vs-rest AUC needs at least two classes present, found {present}"
        )));
    }
    let mut per_class = Vec::with_capacity(classes.len());
    let mut curves = Vec::with_capacity(classes.len());
    for (c, name) in classes.iter().enumerate() {
        if !labels.contains(&c) {
            log::warn!("class `{name}` has no samples; excluded from the macro AUC");
            per_class.push(None);
            curves.push(None);
            continue;
        }
        let truth: Vec<bool> = labels.iter().map(|&l| l == c).collect();
        let curve = roc_curve(proba.column(c).as_slice(), &truth)?;
        per_class.push(Some(curve.auc));
        curves.push(Some(curve));
    }
    let defined: Vec<f64> = per_class.iter().flatten().copied().collect();
    let macro_auc = defined.iter().sum::<f64>() / defined.len() as f64;
    Ok((
        MacroAuc {
            classes: classes.to_vec(),
            per_class,
            macro_auc,
        },
        curves,
    ))
}

fn choose2(n: usize) -> f64 {
    let n = n as f64;
    n * (n - 1.0) / 2.0
}

/// Chance-corrected pair-counting agreement between two partitions.
pub fn adjusted_rand_index<A: Ord, B: Ord>(a: &[A], b: &[B]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::Validation(format!(
            "partitions cover {} and {} elements",
            a.len(),
            b.len()
        )));
    }
    let mut table: BTreeMap<(&A, &B), usize> = BTreeMap::new();
    let mut rows: BTreeMap<&A, usize> = BTreeMap::new();
    let mut cols: BTreeMap<&B, usize> = BTreeMap::new();
    for (x, y) in a.iter().zip(b) {
        *table.entry((x, y)).or_default() += 1;
        *rows.entry(x).or_default() += 1;
        *cols.entry(y).or_default() += 1;
    }
    let index: f64 = table.values().map(|&n| choose2(n)).sum();
    let row_sum: f64 = rows.values().map(|&n| choose2(n)).sum();
    let col_sum: f64 = cols.values().map(|&n| choose2(n)).sum();
    let pairs = choose2(a.len());
    if pairs == 0.0 {
        return Ok(1.0);
    }
    let expected = row_sum * col_sum / pairs;
    let max = (row_sum + col_sum) / 2.0;
    if max == expected {
        return Ok(1.0);
    }
    Ok((index - expected) / (max - expected))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvReport {
    pub n_samples: usize,
    pub k: usize,
    pub classes: Vec<String>,
    /// Fold index per sample.
    pub fold_assignment: Vec<usize>,
    pub fold_sizes: Vec<usize>,
    pub per_fold: Vec<MacroAuc>,
    /// Headline numbers from the pooled out-of-fold probabilities.
    pub pooled: MacroAuc,
    /// `confusion[true][predicted]`.
    pub confusion: Vec<Vec<usize>>,
    pub precision: Vec<Option<f64>>,
    pub recall: Vec<Option<f64>>,
    #[serde(skip)]
    pub roc_curves: Vec<Option<RocCurve>>,
}

impl CvReport {
    pub fn macro_auc(&self) -> f64 {
        self.pooled.macro_auc
    }
}

/// Trains a forest on each `k − 1` folds and scores the held-out fold.
pub fn cross_validate(
    x: &DMatrix<f64>,
    labels: &[String],
    feature_names: &[String],
    params: &ForestParams,
    k: usize,
    seed: u64,
) -> Result<CvReport> {
    if labels.len() != x.nrows() {
        return Err(Error::Validation(format!(
            "{} labels for {} rows",
            labels.len(),
            x.nrows()
        )));
    }
    let folds = stratified_kfold(labels, k, seed)?;
    let mut classes: Vec<String> = labels.to_vec();
    classes.sort();
    classes.dedup();
    let y: Vec<usize> = labels
        .iter()
        .map(|l| classes.binary_search(l).expect("classes built from labels"))
        .collect();

    let per_fold: Vec<(Vec<usize>, DMatrix<f64>)> = (0..k)
        .into_par_iter()
        .map(|f| {
            let train: Vec<usize> = (0..x.nrows()).filter(|&i| folds[i] != f).collect();
            let test: Vec<usize> = (0..x.nrows()).filter(|&i| folds[i] == f).collect();
            let fold_params = ForestParams {
                seed: rng::derive_seed(params.seed, &[rng::TAG_CV, f as u64]),
                ..params.clone()
            };
            let train_labels: Vec<String> = train.iter().map(|&i| labels[i].clone()).collect();
            let model = forest::train_forest(&x.select_rows(&train), &train_labels, feature_names, &fold_params)
                .map_err(|e| e.context(format!("fold {f}")))?;
            let proba = forest::predict_proba(&model, &x.select_rows(&test))?;
            // re-index columns into the global class order
            let mut full = DMatrix::zeros(test.len(), classes.len());
            for (c, name) in model.classes().iter().enumerate() {
                let g = classes.binary_search(name).expect("fold classes are a subset");
                full.set_column(g, &proba.column(c));
            }
            Ok((test, full))
        })
        .collect::<Result<_>>()?;

    let mut oof = DMatrix::zeros(x.nrows(), classes.len());
    let mut fold_aucs = Vec::with_capacity(k);
    for (f, (test, proba)) in per_fold.iter().enumerate() {
        for (r, &i) in test.iter().enumerate() {
            oof.set_row(i, &proba.row(r));
        }
        let fold_y: Vec<usize> = test.iter().map(|&i| y[i]).collect();
        let (auc, _) = macro_ovr_auc(proba, &fold_y, &classes).map_err(|e| e.context(format!("fold {f}")))?;
        fold_aucs.push(auc);
    }
    let (pooled, roc_curves) = macro_ovr_auc(&oof, &y, &classes)?;

    let nc = classes.len();
    let mut confusion = vec![vec![0; nc]; nc];
    for (i, row) in oof.row_iter().enumerate() {
        let pred = row
            .iter()
            .enumerate()
            .fold((0, f64::NEG_INFINITY), |b, (c, &p)| if p > b.1 { (c, p) } else { b })
            .0;
        confusion[y[i]][pred] += 1;
    }
    let ratio = |num: usize, den: usize| (den > 0).then(|| num as f64 / den as f64);
    let precision = (0..nc)
        .map(|c| ratio(confusion[c][c], (0..nc).map(|t| confusion[t][c]).sum()))
        .collect();
    let recall = (0..nc)
        .map(|c| ratio(confusion[c][c], confusion[c].iter().sum()))
        .collect();
    let mut fold_sizes = vec![0; k];
    folds.iter().for_each(|&f| fold_sizes[f] += 1);

    Ok(CvReport {
        n_samples: x.nrows(),
        k,
        classes,
        fold_assignment: folds,
        fold_sizes,
        per_fold: fold_aucs,
        pooled,
        confusion,
        precision,
        recall,
        roc_curves,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WindowReport {
    /// Last visit month included in the input.
    pub horizon: u32,
    pub n_features: usize,
    pub report: CvReport,
}

/// Cross-validates on the columns up to each horizon, e.g. `[0, 12, 24]` for
/// baseline, first year, and first two years.
pub fn windowed_experiment(
    m: &FeatureMatrix,
    labels: &[String],
    horizons: &[u32],
    params: &ForestParams,
    k: usize,
    seed: u64,
) -> Result<Vec<WindowReport>> {
    horizons
        .iter()
        .map(|&h| {
            let cols = m.columns_up_to_month(h);
            if cols.is_empty() {
                return Err(Error::Validation(format!(
                    "input window up to month {h} contains no features"
                )));
            }
            let window = m.select_columns(&cols);
            let report = cross_validate(window.values(), labels, window.feature_names(), params, k, seed)
                .map_err(|e| e.context(format!("window {h}m")))?;
            Ok(WindowReport {
                horizon: h,
                n_features: cols.len(),
                report,
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReplicationOptions {
    /// External patients kept for scoring, matching the training selection.
    pub cohorts: Vec<CohortLabel>,
    /// Coordinates the mixture was fitted on.
    pub view: View,
    /// Classes below this share of patients raise the imbalance flag.
    pub imbalance_threshold: f64,
}

impl Default for ReplicationOptions {
    fn default() -> Self {
        ReplicationOptions {
            cohorts: vec![CohortLabel::PD],
            view: View::Full,
            imbalance_threshold: 0.1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicationReport {
    pub n_patients: usize,
    pub shared_codes: Vec<String>,
    /// Training codes the external cohort lacks (filled with training medians).
    pub missing_codes: Vec<String>,
    /// External codes the trained models never saw (ignored).
    pub extra_codes: Vec<String>,
    pub filled_features: usize,
    pub classes: Vec<String>,
    pub class_counts: Vec<usize>,
    pub class_fractions: Vec<f64>,
    pub imbalanced: bool,
    pub per_class_auc: Vec<Option<f64>>,
    /// `None` when fewer than two subtypes were assigned.
    pub macro_auc: Option<f64>,
}

fn codes_of(names: &[String]) -> Vec<String> {
    let mut codes: Vec<String> = names
        .iter()
        .map(|n| split_feature_name(n).map_or(n.as_str(), |(c, _)| c).to_owned())
        .collect();
    codes.sort();
    codes.dedup();
    codes
}

/// Normalizes an external cohort with the training parameters, projects it,
/// assigns subtypes with the trained mixture and scores the trained forest
/// against those assignments.
pub fn external_replication(
    space: &ProgressionSpace,
    gmm: &GmmModel,
    model: &ForestModel,
    external: &VisitTable,
    opts: &ReplicationOptions,
) -> Result<(ReplicationReport, SubtypeAssignment)> {
    let schema = space.schema();
    let trained_codes = codes_of(&schema.feature_names);
    let external_codes = external.assessment_codes();
    let shared: Vec<String> = trained_codes
        .iter()
        .filter(|c| external_codes.contains(c))
        .cloned()
        .collect();
    if shared.is_empty() {
        return Err(Error::Schema(format!(
            "no assessment codes in common; trained on {:?}, external has {:?}",
            trained_codes, external_codes
        )));
    }
    let missing_codes: Vec<String> = trained_codes
        .iter()
        .filter(|c| !shared.contains(c))
        .cloned()
        .collect();
    let extra_codes: Vec<String> = external_codes
        .iter()
        .filter(|c| !trained_codes.contains(c))
        .cloned()
        .collect();
    if !missing_codes.is_empty() {
        log::warn!("external cohort lacks {missing_codes:?}; using training medians");
    }

    let selected = external.filter_cohorts(&opts.cohorts)?;
    if selected.n_patients() == 0 {
        return Err(Error::Schema(format!(
            "external cohort has no patients labelled {:?}",
            opts.cohorts
        )));
    }
    let raw = cohort::vectorize(&cohort::impute(&selected)?)?;

    let mut filled = 0;
    let mut values = DMatrix::zeros(raw.n_patients(), schema.feature_names.len());
    for (j, name) in schema.feature_names.iter().enumerate() {
        match raw.feature_names().iter().position(|n| n == name) {
            Some(src) => values.set_column(j, &raw.values().column(src)),
            None => {
                filled += 1;
                values.column_mut(j).fill(schema.column_medians[j]);
            }
        }
    }
    let aligned = FeatureMatrix::from_raw(
        raw.patient_ids().to_vec(),
        raw.cohort_labels().to_vec(),
        schema.feature_names.clone(),
        values,
    )?;
    let normalized = apply_normalization(&aligned, schema.normalization, &schema.norm_params)?;
    let coords = dimred::project(space, &normalized)?;
    let assignment = mixture::assign_subtypes(gmm, &opts.view.apply(space, &coords), normalized.patient_ids())?;

    let forest_cols = model
        .feature_names()
        .iter()
        .map(|name| {
            schema.feature_names.iter().position(|n| n == name).ok_or_else(|| {
                Error::Schema(format!("forest feature `{name}` is not part of the progression space"))
            })
        })
        .collect::<Result<Vec<usize>>>()?;
    let proba = forest::predict_proba(model, &normalized.values().select_columns(&forest_cols))?;

    let classes = model.classes().to_vec();
    let y = assignment
        .label_names()
        .iter()
        .map(|l| {
            classes.iter().position(|c| c == l).ok_or_else(|| {
                Error::Schema(format!("subtype `{l}` was never seen by the forest"))
            })
        })
        .collect::<Result<Vec<usize>>>()?;
    let n = y.len();
    let mut class_counts = vec![0; classes.len()];
    y.iter().for_each(|&c| class_counts[c] += 1);
    let class_fractions: Vec<f64> = class_counts.iter().map(|&c| c as f64 / n as f64).collect();
    let imbalanced = class_fractions.iter().any(|&f| f < opts.imbalance_threshold);

    let (per_class_auc, macro_auc) = match macro_ovr_auc(&proba, &y, &classes) {
        Ok((auc, _)) => (auc.per_class, Some(auc.macro_auc)),
        Err(e) => {
            log::warn!("replication AUC undefined: {e}");
            (vec![None; classes.len()], None)
        }
    };
    Ok((
        ReplicationReport {
            n_patients: n,
            shared_codes: shared,
            missing_codes,
            extra_codes,
            filled_features: filled,
            classes,
            class_counts,
            class_fractions,
            imbalanced,
            per_class_auc,
            macro_auc,
        },
        assignment,
    ))
}
