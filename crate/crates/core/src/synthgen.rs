//! Synthetic longitudinal cohorts with planted progression subtypes.
//!
//! Every code tied to dimension `d` is generated as
//! `intercept[p, d] + velocity[g, d] * month + N(0, noise_std)`, where the
//! per-patient intercept is drawn around the group's baseline mean. Afterwards
//! a `missing_rate` fraction of cells is deleted at random.

use std::fmt;
use std::io::Write;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::cohort::{CohortLabel, VisitObservation, VisitTable};
use crate::error::{Error, Result};
use crate::rng;

/// Planted ground-truth group.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Group {
    PDVec1,
    PDVec2,
    PDVec3,
    HC,
}

impl Group {
    pub const ALL: [Group; 4] = [Group::PDVec1, Group::PDVec2, Group::PDVec3, Group::HC];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Group::PDVec1 => "PDVec1",
            Group::PDVec2 => "PDVec2",
            Group::PDVec3 => "PDVec3",
            Group::HC => "HC",
        }
    }

    pub fn cohort_label(self) -> CohortLabel {
        match self {
            Group::HC => CohortLabel::HC,
            _ => CohortLabel::PD,
        }
    }
}

impl fmt::Display for Group {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Group {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Group::ALL
            .into_iter()
            .find(|g| g.as_str().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| Error::Validation(format!("unknown group `{s}`")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CohortSpec {
    /// Indexed by [`Group::index`].
    pub n_patients_per_group: [usize; 4],
    pub dimensions: Vec<String>,
    /// Per-group, per-dimension slope in units per month.
    pub velocity_means: [Vec<f64>; 4],
    /// Per-group, per-dimension mean level at month 0.
    pub baseline_means: [Vec<f64>; 4],
    /// Per-dimension standard deviation of each patient's intercept around
    /// the group mean.
    pub baseline_std: Vec<f64>,
    pub noise_std: f64,
    pub codes_per_dimension: usize,
    pub schedule: Vec<u32>,
    pub missing_rate: f64,
    pub seed: u64,
}

impl Default for CohortSpec {
    fn default() -> Self {
        CohortSpec {
            n_patients_per_group: [150, 150, 150, 100],
            dimensions: vec!["motor".into(), "cognitive".into(), "sleep".into()],
            velocity_means: [
                vec![0.10, 0.01, 0.03],
                vec![0.25, 0.02, 0.05],
                vec![0.40, 0.03, 0.07],
                vec![0.0, 0.0, 0.0],
            ],
            baseline_means: [
                vec![10.0, 4.0, 5.0],
                vec![13.0, 4.3, 5.5],
                vec![16.0, 4.6, 6.0],
                vec![3.0, 4.0, 5.0],
            ],
            baseline_std: vec![1.5, 0.5, 1.5],
            noise_std: 1.0,
            codes_per_dimension: 5,
            schedule: vec![0, 12, 24, 36, 48],
            missing_rate: 0.05,
            seed: 42,
        }
    }
}

impl CohortSpec {
    pub fn n_patients(&self) -> usize {
        self.n_patients_per_group.iter().sum()
    }

    /// Code identifiers, dimension-major: `motor_1..motor_k, cognitive_1, ...`.
    pub fn codes(&self) -> Vec<(String, usize)> {
        self.dimensions
            .iter()
            .enumerate()
            .flat_map(|(d, name)| {
                (1..=self.codes_per_dimension).map(move |i| (format!("{name}_{i}"), d))
            })
            .collect()
    }

    pub fn validate(&self) -> Result<()> {
        let nd = self.dimensions.len();
        if nd == 0 {
            return Err(Error::Validation("at least one dimension is required".into()));
        }
        for g in Group::ALL {
            let (v, b) = (&self.velocity_means[g.index()], &self.baseline_means[g.index()]);
            if v.len() != nd || b.len() != nd {
                return Err(Error::Validation(format!(
                    "group {g} needs {nd} velocities and baselines, got {} and {}",
                    v.len(),
                    b.len()
                )));
            }
            if v.iter().chain(b).any(|x| !x.is_finite()) {
                return Err(Error::Validation(format!("group {g} has non-finite parameters")));
            }
        }
        if self.velocity_means[Group::HC.index()].iter().any(|&v| v != 0.0) {
            return Err(Error::Validation("HC velocities must be 0 on every dimension".into()));
        }
        let motor = self
            .dimensions
            .iter()
            .position(|d| d == "motor")
            .unwrap_or(0);
        let [v1, v2, v3, _] = &self.velocity_means;
        if !(v1[motor] < v2[motor] && v2[motor] < v3[motor]) {
            return Err(Error::Validation(format!(
                "velocities on `{}` must increase PDVec1 < PDVec2 < PDVec3",
                self.dimensions[motor]
            )));
        }
        if self.baseline_std.len() != nd {
            return Err(Error::Validation(format!(
                "baseline_std needs {nd} entries, got {}",
                self.baseline_std.len()
            )));
        }
        if !(self.noise_std >= 0.0 && self.baseline_std.iter().all(|s| *s >= 0.0)) {
            return Err(Error::Validation("noise and baseline std must be ≥ 0".into()));
        }
        if self.codes_per_dimension == 0 {
            return Err(Error::Validation("codes_per_dimension must be ≥ 1".into()));
        }
        if !(0.0..1.0).contains(&self.missing_rate) {
            return Err(Error::Validation("missing_rate must lie in [0, 1)".into()));
        }
        if self.schedule.first() != Some(&0) || self.schedule.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Validation(
                "schedule must start at 0 and increase strictly".into(),
            ));
        }
        Ok(())
    }
}

/// Planted group of every generated patient, in patient order.
#[derive(Debug, Clone, PartialEq)]
pub struct Truth(pub Vec<(String, Group)>);

impl Truth {
    pub fn group_of(&self, patient_id: &str) -> Option<Group> {
        self.0.iter().find(|(p, _)| p == patient_id).map(|(_, g)| *g)
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wr = csv::Writer::from_writer(w);
        wr.write_record(["patient_id", "group"])?;
        for (p, g) in &self.0 {
            wr.write_record([p.as_str(), g.as_str()])?;
        }
        wr.flush().map_err(|e| Error::io("<truth csv>", e))?;
        Ok(())
    }
}

const STREAM_ASSIGN: u64 = 1;
const STREAM_INTERCEPT: u64 = 2;
const STREAM_NOISE: u64 = 3;
const STREAM_MISSING: u64 = 4;

pub fn generate_cohort(spec: &CohortSpec) -> Result<(VisitTable, Truth)> {
    spec.validate()?;
    let n = spec.n_patients();
    if n == 0 {
        return Err(Error::Degenerate("cohort spec has zero patients".into()));
    }

    let mut groups: Vec<Group> = Group::ALL
        .iter()
        .flat_map(|&g| std::iter::repeat_n(g, spec.n_patients_per_group[g.index()]))
        .collect();
    groups.shuffle(&mut rng::stream(spec.seed, &[rng::TAG_SYNTH, STREAM_ASSIGN]));

    let width = n.to_string().len().max(4);
    let ids: Vec<String> = (1..=n).map(|i| format!("S{i:0width$}")).collect();

    let standard = Normal::new(0.0, 1.0).expect("unit normal");
    let mut intercept_rng = rng::stream(spec.seed, &[rng::TAG_SYNTH, STREAM_INTERCEPT]);
    let mut noise_rng = rng::stream(spec.seed, &[rng::TAG_SYNTH, STREAM_NOISE]);
    let mut missing_rng = rng::stream(spec.seed, &[rng::TAG_SYNTH, STREAM_MISSING]);
    let codes = spec.codes();

    let mut observations = Vec::with_capacity(n * spec.schedule.len() * codes.len());
    for (pid, &group) in ids.iter().zip(&groups) {
        let g = group.index();
        let intercepts: Vec<f64> = spec.baseline_means[g]
            .iter()
            .zip(&spec.baseline_std)
            .map(|(b, sd)| b + sd * standard.sample(&mut intercept_rng))
            .collect();
        for &month in &spec.schedule {
            for (code, d) in &codes {
                let noise = spec.noise_std * standard.sample(&mut noise_rng);
                let deleted = missing_rng.random::<f64>() < spec.missing_rate;
                if deleted {
                    continue;
                }
                observations.push(VisitObservation {
                    patient_id: pid.clone(),
                    cohort_label: group.cohort_label(),
                    visit_month: month,
                    assessment_code: code.clone(),
                    value: intercepts[*d] + spec.velocity_means[g][*d] * f64::from(month) + noise,
                });
            }
        }
    }
    let table = VisitTable::new(observations, spec.schedule.clone())?;
    let truth = Truth(ids.into_iter().zip(groups).collect());
    Ok((table, truth))
}
