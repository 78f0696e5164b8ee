//! Visit-level ingestion and the patient × feature matrix.
//!
//! Long-format visit rows are snapped onto a fixed visit schedule, gaps are
//! imputed (last observation carried forward, then the cohort median for the
//! cell), and every patient's series is flattened into one row whose columns
//! are `code@month` pairs in schedule-major order.

use std::collections::{BTreeSet, HashMap};
use std::fmt;
use std::io::{Read, Write};
use std::str::FromStr;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Enrollment category of a participant.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum CohortLabel {
    PD,
    Prodromal,
    HC,
    SWEDD,
}

impl CohortLabel {
    pub const ALL: [CohortLabel; 4] = [
        CohortLabel::PD,
        CohortLabel::Prodromal,
        CohortLabel::HC,
        CohortLabel::SWEDD,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            CohortLabel::PD => "PD",
            CohortLabel::Prodromal => "Prodromal",
            CohortLabel::HC => "HC",
            CohortLabel::SWEDD => "SWEDD",
        }
    }
}

impl fmt::Display for CohortLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for CohortLabel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        CohortLabel::ALL
            .into_iter()
            .find(|l| l.as_str().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| Error::Validation(format!("unknown cohort label `{s}`")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VisitObservation {
    pub patient_id: String,
    pub cohort_label: CohortLabel,
    pub visit_month: u32,
    pub assessment_code: String,
    pub value: f64,
}

/// Configured visit schedule and the snapping window for observed months.
#[derive(Debug, Clone, PartialEq)]
pub struct ScheduleConfig {
    pub months: Vec<u32>,
    pub snap_window: u32,
}

impl Default for ScheduleConfig {
    fn default() -> Self {
        ScheduleConfig {
            months: vec![0, 12, 24, 36, 48],
            snap_window: 3,
        }
    }
}

impl ScheduleConfig {
    pub fn validate(&self) -> Result<()> {
        if self.months.first() != Some(&0) {
            return Err(Error::Validation(
                "visit schedule must start at month 0".into(),
            ));
        }
        if self.months.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Validation(
                "visit schedule must be strictly increasing".into(),
            ));
        }
        Ok(())
    }

    /// Nearest schedule point within the snap window; ties go to the earlier point.
    pub fn snap(&self, month: u32) -> Option<u32> {
        self.months
            .iter()
            .copied()
            .min_by_key(|&m| m.abs_diff(month))
            .filter(|m| m.abs_diff(month) <= self.snap_window)
    }
}

/// Long-format visit data for one cohort.
///
/// Observations are kept in canonical order: patients in order of first
/// appearance, then visit month, then assessment code.
#[derive(Debug, Clone, PartialEq)]
pub struct VisitTable {
    observations: Vec<VisitObservation>,
    schedule: Vec<u32>,
    assessment_codes: Vec<String>,
    patients: Vec<(String, CohortLabel)>,
}

impl VisitTable {
    /// Builds a table from observations already aligned to `schedule`.
    pub fn new(observations: Vec<VisitObservation>, schedule: Vec<u32>) -> Result<Self> {
        if !schedule.is_empty() && schedule[0] != 0 {
            return Err(Error::Validation(format!(
                "schedule must start at baseline month 0, got {schedule:?}"
            )));
        }
        if schedule.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Validation(format!(
                "schedule must be strictly increasing, got {schedule:?}"
            )));
        }
        let codes: BTreeSet<&str> = observations
            .iter()
            .map(|o| o.assessment_code.as_str())
            .collect();
        let assessment_codes: Vec<String> = codes.into_iter().map(str::to_owned).collect();

        let mut patients: Vec<(String, CohortLabel)> = Vec::new();
        let mut patient_index: HashMap<&str, usize> = HashMap::new();
        for o in &observations {
            if !o.value.is_finite() {
                return Err(Error::Validation(format!(
                    "non-finite value for patient {} code {}",
                    o.patient_id, o.assessment_code
                )));
            }
            if schedule.binary_search(&o.visit_month).is_err() {
                return Err(Error::Validation(format!(
                    "visit month {} of patient {} is not on the schedule",
                    o.visit_month, o.patient_id
                )));
            }
            match patient_index.get(o.patient_id.as_str()) {
                Some(&i) if patients[i].1 != o.cohort_label => {
                    return Err(Error::Validation(format!(
                        "patient {} has conflicting cohort labels {} and {}",
                        o.patient_id, patients[i].1, o.cohort_label
                    )));
                }
                Some(_) => {}
                None => {
                    patient_index.insert(&o.patient_id, patients.len());
                    patients.push((o.patient_id.clone(), o.cohort_label));
                }
            }
        }

        let code_index: HashMap<&str, usize> = assessment_codes
            .iter()
            .enumerate()
            .map(|(i, c)| (c.as_str(), i))
            .collect();
        let mut keyed: Vec<((usize, u32, usize), VisitObservation)> = observations
            .iter()
            .map(|o| {
                (
                    (
                        patient_index[o.patient_id.as_str()],
                        o.visit_month,
                        code_index[o.assessment_code.as_str()],
                    ),
                    o.clone(),
                )
            })
            .collect();
        keyed.sort_by_key(|(k, _)| *k);
        for w in keyed.windows(2) {
            if w[0].0 == w[1].0 {
                let o = &w[0].1;
                return Err(Error::Conflict(format!(
                    "duplicate observation for patient {}, month {}, code {}",
                    o.patient_id, o.visit_month, o.assessment_code
                )));
            }
        }

        Ok(VisitTable {
            observations: keyed.into_iter().map(|(_, o)| o).collect(),
            schedule,
            assessment_codes,
            patients,
        })
    }

    pub fn observations(&self) -> &[VisitObservation] {
        &self.observations
    }

    pub fn schedule(&self) -> &[u32] {
        &self.schedule
    }

    pub fn assessment_codes(&self) -> &[String] {
        &self.assessment_codes
    }

    /// Patient ids with their cohort label, in order of first appearance.
    pub fn patients(&self) -> &[(String, CohortLabel)] {
        &self.patients
    }

    pub fn n_patients(&self) -> usize {
        self.patients.len()
    }

    /// Keeps only patients whose cohort label is in `labels`.
    pub fn filter_cohorts(&self, labels: &[CohortLabel]) -> Result<VisitTable> {
        let kept = self
            .observations
            .iter()
            .filter(|o| labels.contains(&o.cohort_label))
            .cloned()
            .collect();
        VisitTable::new(kept, self.schedule.clone())
    }

    /// Dense patient × month × code view of the observations.
    fn cube(&self) -> Cube {
        let np = self.patients.len();
        let nm = self.schedule.len();
        let nc = self.assessment_codes.len();
        let mut cells = vec![None; np * nm * nc];
        let patient_index: HashMap<&str, usize> = self
            .patients
            .iter()
            .enumerate()
            .map(|(i, (p, _))| (p.as_str(), i))
            .collect();
        let code_index: HashMap<&str, usize> = self
            .assessment_codes
            .iter()
            .enumerate()
            .map(|(i, c)| (c.as_str(), i))
            .collect();
        for o in &self.observations {
            let p = patient_index[o.patient_id.as_str()];
            let m = self
                .schedule
                .binary_search(&o.visit_month)
                .expect("months validated on construction");
            let c = code_index[o.assessment_code.as_str()];
            cells[(p * nm + m) * nc + c] = Some(o.value);
        }
        Cube { nm, nc, cells }
    }

    /// Writes the table in the visit CSV format.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wr = csv::Writer::from_writer(w);
        wr.write_record([
            "patient_id",
            "cohort_label",
            "visit_month",
            "assessment_code",
            "value",
        ])?;
        for o in &self.observations {
            wr.write_record([
                o.patient_id.as_str(),
                o.cohort_label.as_str(),
                &o.visit_month.to_string(),
                o.assessment_code.as_str(),
                &o.value.to_string(),
            ])?;
        }
        wr.flush().map_err(|e| Error::io("<visit csv>", e))?;
        Ok(())
    }
}

struct Cube {
    nm: usize,
    nc: usize,
    cells: Vec<Option<f64>>,
}

impl Cube {
    fn get(&self, p: usize, m: usize, c: usize) -> Option<f64> {
        self.cells[(p * self.nm + m) * self.nc + c]
    }
}

const REQUIRED_COLUMNS: [&str; 5] = [
    "patient_id",
    "cohort_label",
    "visit_month",
    "assessment_code",
    "value",
];

/// Parses the long-format visit CSV.
///
/// Observed months are snapped to the nearest configured schedule point within
/// `schedule.snap_window`; rows that fall outside every window are skipped with
/// a warning. The resulting schedule is the sorted set of snapped months.
pub fn parse_visits<R: Read>(input: R, schedule: &ScheduleConfig) -> Result<VisitTable> {
    schedule.validate()?;
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(input);
    let headers = rdr.headers().map_err(|e| Error::Parse {
        line: 1,
        message: e.to_string(),
    })?;
    let mut col = [0usize; 5];
    for (slot, name) in col.iter_mut().zip(REQUIRED_COLUMNS) {
        *slot = headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::Parse {
                line: 1,
                message: format!("missing required column `{name}`"),
            })?;
    }
    let width = headers.len();

    let mut observations = Vec::new();
    let mut months = BTreeSet::new();
    for record in rdr.records() {
        let record = record.map_err(|e| Error::Parse {
            line: e.position().map_or(0, |p| p.line()),
            message: e.to_string(),
        })?;
        let line = record.position().map_or(0, |p| p.line());
        if record.len() != width {
            return Err(Error::Parse {
                line,
                message: format!("expected {width} fields, found {}", record.len()),
            });
        }
        let field = |i: usize| &record[col[i]];
        let cohort_label: CohortLabel = field(1).parse()?;
        let raw_month: u32 = field(2).parse().map_err(|_| Error::Parse {
            line,
            message: format!("visit_month `{}` is not a non-negative integer", field(2)),
        })?;
        let value: f64 = field(4).parse().map_err(|_| Error::Parse {
            line,
            message: format!("value `{}` is not numeric", field(4)),
        })?;
        if !value.is_finite() {
            return Err(Error::Parse {
                line,
                message: format!("value `{}` is not finite", field(4)),
            });
        }
        if field(0).is_empty() || field(3).is_empty() {
            return Err(Error::Parse {
                line,
                message: "empty patient_id or assessment_code".into(),
            });
        }
        let Some(visit_month) = schedule.snap(raw_month) else {
            log::warn!("line {line}: month {raw_month} is not within ±{} of any scheduled visit; row ignored", schedule.snap_window);
            continue;
        };
        months.insert(visit_month);
        observations.push(VisitObservation {
            patient_id: field(0).to_owned(),
            cohort_label,
            visit_month,
            assessment_code: field(3).to_owned(),
            value,
        });
    }
    VisitTable::new(observations, months.into_iter().collect())
}

fn median(values: &mut [f64]) -> f64 {
    values.sort_by(f64::total_cmp);
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    }
}

/// Fills every (patient, month, code) cell: last observation carried forward
/// within the patient first, then the median of the observed values for that
/// (code, month) across the whole table.
pub fn impute(table: &VisitTable) -> Result<VisitTable> {
    let cube = table.cube();
    let (np, nm, nc) = (table.patients.len(), cube.nm, cube.nc);

    let mut medians = vec![0.0; nm * nc];
    for m in 0..nm {
        for c in 0..nc {
            let mut seen: Vec<f64> = (0..np).filter_map(|p| cube.get(p, m, c)).collect();
            if seen.is_empty() {
                return Err(Error::Unimputable {
                    code: table.assessment_codes[c].clone(),
                    month: table.schedule[m],
                });
            }
            medians[m * nc + c] = median(&mut seen);
        }
    }

    let mut observations = Vec::with_capacity(np * nm * nc);
    for (p, (pid, label)) in table.patients.iter().enumerate() {
        let mut carried: Vec<Option<f64>> = vec![None; nc];
        for m in 0..nm {
            for c in 0..nc {
                let value = match cube.get(p, m, c) {
                    Some(v) => {
                        carried[c] = Some(v);
                        v
                    }
                    None => carried[c].unwrap_or(medians[m * nc + c]),
                };
                observations.push(VisitObservation {
                    patient_id: pid.clone(),
                    cohort_label: *label,
                    visit_month: table.schedule[m],
                    assessment_code: table.assessment_codes[c].clone(),
                    value,
                });
            }
        }
    }
    VisitTable::new(observations, table.schedule.clone())
}

/// How the values of a [`FeatureMatrix`] have been scaled.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Normalization {
    Raw,
    MinMax,
    ZScore,
}

impl FromStr for Normalization {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "raw" => Ok(Normalization::Raw),
            "minmax" => Ok(Normalization::MinMax),
            "zscore" => Ok(Normalization::ZScore),
            other => Err(Error::Validation(format!(
                "unknown normalization `{other}` (expected minmax or zscore)"
            ))),
        }
    }
}

/// Splits a `code@month` feature name.
pub fn split_feature_name(name: &str) -> Option<(&str, u32)> {
    let (code, month) = name.rsplit_once('@')?;
    Some((code, month.parse().ok()?))
}

/// Patients × features matrix with its scaling metadata.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    patient_ids: Vec<String>,
    cohort_labels: Vec<CohortLabel>,
    feature_names: Vec<String>,
    values: DMatrix<f64>,
    normalization: Normalization,
    norm_params: Vec<(f64, f64)>,
    column_medians: Vec<f64>,
}

impl FeatureMatrix {
    /// Builds a raw matrix. Column medians are computed from `values`.
    pub fn from_raw(
        patient_ids: Vec<String>,
        cohort_labels: Vec<CohortLabel>,
        feature_names: Vec<String>,
        values: DMatrix<f64>,
    ) -> Result<Self> {
        if patient_ids.len() != values.nrows()
            || cohort_labels.len() != values.nrows()
            || feature_names.len() != values.ncols()
        {
            return Err(Error::Validation(format!(
                "matrix is {}x{} but has {} patient ids, {} labels and {} feature names",
                values.nrows(),
                values.ncols(),
                patient_ids.len(),
                cohort_labels.len(),
                feature_names.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Validation("feature matrix has non-finite entries".into()));
        }
        let column_medians = values
            .column_iter()
            .map(|c| {
                if c.is_empty() {
                    0.0
                } else {
                    median(&mut c.iter().copied().collect::<Vec<_>>())
                }
            })
            .collect();
        Ok(FeatureMatrix {
            patient_ids,
            cohort_labels,
            feature_names,
            values,
            normalization: Normalization::Raw,
            norm_params: Vec::new(),
            column_medians,
        })
    }

    pub fn patient_ids(&self) -> &[String] {
        &self.patient_ids
    }

    pub fn cohort_labels(&self) -> &[CohortLabel] {
        &self.cohort_labels
    }

    pub fn feature_names(&self) -> &[String] {
        &self.feature_names
    }

    pub fn values(&self) -> &DMatrix<f64> {
        &self.values
    }

    pub fn normalization(&self) -> Normalization {
        self.normalization
    }

    /// Per-feature `(min, max)` for minmax or `(mean, std)` for zscore; empty when raw.
    pub fn norm_params(&self) -> &[(f64, f64)] {
        &self.norm_params
    }

    /// Medians of the raw (pre-normalization) columns.
    pub fn column_medians(&self) -> &[f64] {
        &self.column_medians
    }

    pub fn n_patients(&self) -> usize {
        self.values.nrows()
    }

    pub fn n_features(&self) -> usize {
        self.values.ncols()
    }

    /// Row subset, in the order given.
    pub fn select_rows(&self, rows: &[usize]) -> FeatureMatrix {
        FeatureMatrix {
            patient_ids: rows.iter().map(|&r| self.patient_ids[r].clone()).collect(),
            cohort_labels: rows.iter().map(|&r| self.cohort_labels[r]).collect(),
            feature_names: self.feature_names.clone(),
            values: self.values.select_rows(rows),
            normalization: self.normalization,
            norm_params: self.norm_params.clone(),
            column_medians: self.column_medians.clone(),
        }
    }

    /// Column subset, in the order given.
    pub fn select_columns(&self, cols: &[usize]) -> FeatureMatrix {
        FeatureMatrix {
            patient_ids: self.patient_ids.clone(),
            cohort_labels: self.cohort_labels.clone(),
            feature_names: cols.iter().map(|&c| self.feature_names[c].clone()).collect(),
            values: self.values.select_columns(cols),
            normalization: self.normalization,
            norm_params: if self.norm_params.is_empty() {
                Vec::new()
            } else {
                cols.iter().map(|&c| self.norm_params[c]).collect()
            },
            column_medians: cols.iter().map(|&c| self.column_medians[c]).collect(),
        }
    }

    /// Rows whose cohort label is one of `labels`.
    pub fn rows_with_labels(&self, labels: &[CohortLabel]) -> Vec<usize> {
        self.cohort_labels
            .iter()
            .enumerate()
            .filter(|(_, l)| labels.contains(l))
            .map(|(i, _)| i)
            .collect()
    }

    /// Columns whose visit month is at most `horizon`.
    pub fn columns_up_to_month(&self, horizon: u32) -> Vec<usize> {
        self.feature_names
            .iter()
            .enumerate()
            .filter(|(_, n)| split_feature_name(n).is_some_and(|(_, m)| m <= horizon))
            .map(|(i, _)| i)
            .collect()
    }

    /// Writes `patient_id,<feature names...>`, one row per patient.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wr = csv::Writer::from_writer(w);
        let mut header = vec!["patient_id".to_owned()];
        header.extend(self.feature_names.iter().cloned());
        wr.write_record(&header)?;
        for (i, pid) in self.patient_ids.iter().enumerate() {
            let mut row = vec![pid.clone()];
            row.extend(self.values.row(i).iter().map(f64::to_string));
            wr.write_record(&row)?;
        }
        wr.flush().map_err(|e| Error::io("<feature csv>", e))?;
        Ok(())
    }
}

/// Flattens each patient's series into one row of `code@month` columns.
pub fn vectorize(table: &VisitTable) -> Result<FeatureMatrix> {
    let cube = table.cube();
    let (np, nm, nc) = (table.patients.len(), cube.nm, cube.nc);
    let mut values = DMatrix::zeros(np, nm * nc);
    for p in 0..np {
        for m in 0..nm {
            for c in 0..nc {
                values[(p, m * nc + c)] = cube.get(p, m, c).ok_or_else(|| {
                    Error::Precondition(format!(
                        "patient {} has no value for {}@{}; impute before vectorizing",
                        table.patients[p].0, table.assessment_codes[c], table.schedule[m]
                    ))
                })?;
            }
        }
    }
    let feature_names = table
        .schedule
        .iter()
        .flat_map(|m| table.assessment_codes.iter().map(move |c| format!("{c}@{m}")))
        .collect();
    FeatureMatrix::from_raw(
        table.patients.iter().map(|(p, _)| p.clone()).collect(),
        table.patients.iter().map(|(_, l)| *l).collect(),
        feature_names,
        values,
    )
}

/// Removes every assessment code whose within-patient range never exceeds
/// `epsilon` for any patient. All columns of a dropped code go together.
pub fn drop_static_features(m: &FeatureMatrix, epsilon: f64) -> Result<FeatureMatrix> {
    if m.normalization != Normalization::Raw {
        return Err(Error::Precondition(
            "drop_static_features expects a raw matrix".into(),
        ));
    }
    let mut code_columns: Vec<(String, Vec<usize>)> = Vec::new();
    for (j, name) in m.feature_names.iter().enumerate() {
        let code = split_feature_name(name).map_or(name.as_str(), |(c, _)| c);
        match code_columns.iter_mut().find(|(c, _)| c == code) {
            Some((_, cols)) => cols.push(j),
            None => code_columns.push((code.to_owned(), vec![j])),
        }
    }

    let mut keep = Vec::new();
    for (code, cols) in &code_columns {
        let max_range = (0..m.n_patients())
            .map(|p| {
                let (lo, hi) = cols.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &j| {
                    let v = m.values[(p, j)];
                    (lo.min(v), hi.max(v))
                });
                hi - lo
            })
            .fold(f64::NEG_INFINITY, f64::max);
        if max_range > epsilon {
            keep.extend(cols.iter().copied());
        } else {
            log::info!("dropping non-progressing assessment `{code}` (max within-patient range {max_range})");
        }
    }
    if keep.is_empty() {
        return Err(Error::Degenerate(format!(
            "every assessment code has within-patient range ≤ {epsilon}"
        )));
    }
    keep.sort_unstable();
    Ok(m.select_columns(&keep))
}

fn fit_column_params(column: &[f64], method: Normalization) -> (f64, f64) {
    let n = column.len() as f64;
    match method {
        Normalization::MinMax => column
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v))),
        Normalization::ZScore => {
            let mean = column.iter().sum::<f64>() / n;
            let var = column.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
            (mean, var.sqrt())
        }
        Normalization::Raw => (0.0, 1.0),
    }
}

fn scale_value(v: f64, (a, b): (f64, f64), method: Normalization) -> f64 {
    match method {
        Normalization::MinMax => {
            let range = b - a;
            if range > 0.0 {
                ((v - a) / range).clamp(0.0, 1.0)
            } else {
                0.0
            }
        }
        Normalization::ZScore => {
            if b > 0.0 {
                (v - a) / b
            } else {
                0.0
            }
        }
        Normalization::Raw => v,
    }
}

/// Scales each column by min-max or population z-score. Constant columns map
/// to 0 under both methods.
pub fn normalize(m: &FeatureMatrix, method: Normalization) -> Result<FeatureMatrix> {
    if m.normalization != Normalization::Raw {
        return Err(Error::Precondition("normalize expects a raw matrix".into()));
    }
    if method == Normalization::Raw {
        return Ok(m.clone());
    }
    let params: Vec<(f64, f64)> = m
        .values
        .column_iter()
        .map(|c| fit_column_params(c.as_slice(), method))
        .collect();
    apply_normalization(m, method, &params)
}

/// Applies stored column parameters to a raw matrix with the same columns.
/// Min-max output is clipped to `[0, 1]` so held-out patients stay in range.
pub fn apply_normalization(
    m: &FeatureMatrix,
    method: Normalization,
    params: &[(f64, f64)],
) -> Result<FeatureMatrix> {
    if m.normalization != Normalization::Raw {
        return Err(Error::Precondition(
            "stored normalization must be applied to a raw matrix".into(),
        ));
    }
    if method != Normalization::Raw && params.len() != m.n_features() {
        return Err(Error::Schema(format!(
            "{} normalization parameters for {} features",
            params.len(),
            m.n_features()
        )));
    }
    let mut values = m.values.clone();
    if method != Normalization::Raw {
        for (j, mut col) in values.column_iter_mut().enumerate() {
            for v in col.iter_mut() {
                *v = scale_value(*v, params[j], method);
            }
        }
    }
    Ok(FeatureMatrix {
        values,
        normalization: method,
        norm_params: if method == Normalization::Raw {
            Vec::new()
        } else {
            params.to_vec()
        },
        ..m.clone()
    })
}
