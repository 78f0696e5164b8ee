//! Pipeline configuration: a flat `section.key = value` text file.
//!
//! Blank lines and lines starting with `#` are ignored. Every key has a
//! default, unknown or repeated keys are rejected, and list values are comma
//! separated. Any `families.<name> = prefix, ...` line replaces the default
//! motor/cognitive/sleep families with the ones given, in file order.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::cohort::{CohortLabel, Normalization, ScheduleConfig};
use crate::dimred::{DimensionFamilies, DimredOptions, View};
use crate::error::{Error, Result};
use crate::forest::{ClassWeight, ForestParams};
use crate::mixture::GmmOptions;
use crate::synthgen::{CohortSpec, Group};

#[derive(Debug, Clone, PartialEq)]
pub struct Paths {
    /// Visits CSV analysed by `run`.
    pub input: Option<PathBuf>,
    pub output: PathBuf,
    /// Visits CSV replayed by `replicate`.
    pub external: Option<PathBuf>,
    /// Output directory of an earlier `run`.
    pub artifacts: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineConfig {
    /// Overrides the seed of every stochastic stage.
    pub seed: u64,
    pub paths: Paths,
    pub synth: CohortSpec,
    pub schedule: ScheduleConfig,
    pub normalization: Normalization,
    pub static_epsilon: f64,
    /// Cohorts clustered into subtypes and used for prediction.
    pub subtype_cohorts: Vec<CohortLabel>,
    pub dimred: DimredOptions,
    pub gmm: GmmOptions,
    pub k_min: usize,
    pub k_max: usize,
    pub view: View,
    pub forest: ForestParams,
    pub cv_folds: usize,
    /// Input-window horizons in months.
    pub windows: Vec<u32>,
    pub families: DimensionFamilies,
    pub imbalance_threshold: f64,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            seed: 42,
            paths: Paths {
                input: None,
                output: PathBuf::from("out"),
                external: None,
                artifacts: None,
            },
            synth: CohortSpec::default(),
            schedule: ScheduleConfig::default(),
            normalization: Normalization::MinMax,
            static_epsilon: 1e-9,
            subtype_cohorts: vec![CohortLabel::PD],
            dimred: DimredOptions::default(),
            gmm: GmmOptions::default(),
            k_min: 1,
            k_max: 6,
            view: View::Full,
            forest: ForestParams::default(),
            cv_folds: 5,
            windows: vec![0, 12, 24],
            families: DimensionFamilies::default(),
            imbalance_threshold: 0.1,
        }
    }
}

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T>
where
    T::Err: fmt::Display,
{
    value
        .trim()
        .parse()
        .map_err(|e| Error::Config(format!("`{key}`: cannot parse `{value}`: {e}")))
}

fn parse_list<T: FromStr>(key: &str, value: &str) -> Result<Vec<T>>
where
    T::Err: fmt::Display,
{
    value
        .split(',')
        .map(str::trim)
        .filter(|v| !v.is_empty())
        .map(|v| parse(key, v))
        .collect()
}

fn parse_bool(key: &str, value: &str) -> Result<bool> {
    match value.trim().to_ascii_lowercase().as_str() {
        "true" | "yes" | "on" | "1" => Ok(true),
        "false" | "no" | "off" | "0" => Ok(false),
        _ => Err(Error::Config(format!("`{key}`: expected a boolean, got `{value}`"))),
    }
}

/// `none`/`auto` or an integer.
fn parse_optional(key: &str, value: &str) -> Result<Option<usize>> {
    match value.trim().to_ascii_lowercase().as_str() {
        "none" | "auto" | "unlimited" => Ok(None),
        _ => parse(key, value).map(Some),
    }
}

/// Parses `a..b`, `a-b` or `a:b` (inclusive).
pub fn parse_k_range(s: &str) -> Result<(usize, usize)> {
    let (a, b) = s
        .split_once("..")
        .or_else(|| s.split_once('-'))
        .or_else(|| s.split_once(':'))
        .ok_or_else(|| Error::Config(format!("k range `{s}` is not of the form MIN..MAX")))?;
    let a = a.trim_end_matches('=');
    let b = b.trim_start_matches('=');
    Ok((parse("k range", a)?, parse("k range", b)?))
}

fn group_key(suffix: &str) -> Option<Group> {
    suffix.parse().ok()
}

impl PipelineConfig {
    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = PipelineConfig::default();
        let mut seen: Vec<String> = Vec::new();
        let mut custom_families = false;
        for (n, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                Error::Config(format!("line {}: expected `key = value`, got `{line}`", n + 1))
            })?;
            let key = key.trim();
            if seen.iter().any(|k| k == key) {
                return Err(Error::Config(format!("line {}: key `{key}` set twice", n + 1)));
            }
            seen.push(key.to_owned());
            if let Some(family) = key.strip_prefix("families.") {
                if !custom_families {
                    cfg.families.0.clear();
                    custom_families = true;
                }
                cfg.families
                    .0
                    .push((family.to_owned(), parse_list(key, value)?));
                continue;
            }
            cfg.set(key, value.trim())
                .map_err(|e| match e {
                    Error::Config(m) => Error::Config(format!("line {}: {m}", n + 1)),
                    other => other,
                })?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    /// Applies one `key = value` pair.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let k = key;
        let v = value;
        match key {
            "seed" => self.seed = parse(k, v)?,
            "paths.input" => self.paths.input = Some(v.into()),
            "paths.output" => self.paths.output = v.into(),
            "paths.external" => self.paths.external = Some(v.into()),
            "paths.artifacts" => self.paths.artifacts = Some(v.into()),

            "synth.dimensions" => self.synth.dimensions = parse_list(k, v)?,
            "synth.baseline_std" => self.synth.baseline_std = parse_list(k, v)?,
            "synth.noise_std" => self.synth.noise_std = parse(k, v)?,
            "synth.codes_per_dimension" => self.synth.codes_per_dimension = parse(k, v)?,
            "synth.months" => self.synth.schedule = parse_list(k, v)?,
            "synth.missing_rate" => self.synth.missing_rate = parse(k, v)?,

            "cohort.months" => self.schedule.months = parse_list(k, v)?,
            "cohort.snap_window" => self.schedule.snap_window = parse(k, v)?,
            "cohort.normalization" => self.normalization = parse(k, v)?,
            "cohort.static_epsilon" => self.static_epsilon = parse(k, v)?,
            "cohort.subtype_cohorts" => self.subtype_cohorts = parse_list(k, v)?,

            "dimred.method" => self.dimred.method = parse(k, v)?,
            "dimred.rank" => self.dimred.rank = parse(k, v)?,
            "dimred.max_iter" => self.dimred.max_iter = parse(k, v)?,
            "dimred.tol" => self.dimred.tol = parse(k, v)?,
            "dimred.restarts" => self.dimred.restarts = parse(k, v)?,

            "gmm.k_min" => self.k_min = parse(k, v)?,
            "gmm.k_max" => self.k_max = parse(k, v)?,
            "gmm.n_init" => self.gmm.n_init = parse(k, v)?,
            "gmm.max_iter" => self.gmm.max_iter = parse(k, v)?,
            "gmm.tol" => self.gmm.tol = parse(k, v)?,
            "gmm.reg_floor" => self.gmm.reg_floor = parse(k, v)?,
            "gmm.view" => self.view = parse(k, v)?,

            "forest.n_trees" => self.forest.n_trees = parse(k, v)?,
            "forest.max_depth" => self.forest.max_depth = parse_optional(k, v)?,
            "forest.min_samples_leaf" => self.forest.min_samples_leaf = parse(k, v)?,
            "forest.mtry" => self.forest.mtry = parse_optional(k, v)?,
            "forest.bootstrap" => self.forest.bootstrap = parse_bool(k, v)?,
            "forest.class_weight" => self.forest.class_weight = parse::<ClassWeight>(k, v)?,

            "cv.folds" => self.cv_folds = parse(k, v)?,
            "cv.windows" => self.windows = parse_list(k, v)?,

            "replicate.imbalance_threshold" => self.imbalance_threshold = parse(k, v)?,

            _ => {
                let group_field = key
                    .strip_prefix("synth.")
                    .and_then(|rest| rest.split_once('_'))
                    .and_then(|(field, g)| group_key(g).map(|g| (field, g)));
                match group_field {
                    Some(("n", g)) => self.synth.n_patients_per_group[g.index()] = parse(k, v)?,
                    Some(("velocity", g)) => self.synth.velocity_means[g.index()] = parse_list(k, v)?,
                    Some(("baseline", g)) => self.synth.baseline_means[g.index()] = parse_list(k, v)?,
                    _ => return Err(Error::Config(format!("unknown key `{key}`"))),
                }
            }
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.k_min == 0 || self.k_min > self.k_max {
            return bad(format!("gmm.k_min {} / gmm.k_max {} do not form a range", self.k_min, self.k_max));
        }
        if self.dimred.rank == 0 {
            return bad("dimred.rank must be ≥ 1".into());
        }
        if self.cv_folds < 2 {
            return bad("cv.folds must be ≥ 2".into());
        }
        if self.windows.is_empty() {
            return bad("cv.windows must list at least one horizon".into());
        }
        if self.subtype_cohorts.is_empty() {
            return bad("cohort.subtype_cohorts must not be empty".into());
        }
        if self.forest.n_trees == 0 || self.forest.min_samples_leaf == 0 {
            return bad("forest.n_trees and forest.min_samples_leaf must be ≥ 1".into());
        }
        if self.gmm.n_init == 0 {
            return bad("gmm.n_init must be ≥ 1".into());
        }
        if !(0.0..=1.0).contains(&self.imbalance_threshold) {
            return bad("replicate.imbalance_threshold must lie in [0, 1]".into());
        }
        self.schedule.validate()?;
        Ok(())
    }

    /// Synthetic cohort spec with the global seed applied.
    pub fn cohort_spec(&self) -> CohortSpec {
        CohortSpec {
            seed: self.seed,
            ..self.synth.clone()
        }
    }

    pub fn dimred_options(&self) -> DimredOptions {
        DimredOptions {
            seed: self.seed,
            ..self.dimred.clone()
        }
    }

    pub fn gmm_options(&self) -> GmmOptions {
        GmmOptions {
            seed: self.seed,
            ..self.gmm.clone()
        }
    }

    pub fn forest_params(&self) -> ForestParams {
        ForestParams {
            seed: self.seed,
            ..self.forest.clone()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dimred::Method;

    #[test]
    fn empty_file_gives_defaults() {
        assert_eq!(PipelineConfig::parse("# nothing\n\n").unwrap(), PipelineConfig::default());
    }

    #[test]
    fn keys_are_applied() {
        let cfg = PipelineConfig::parse(
            "seed = 7\ngmm.k_max = 4\ndimred.method = pca\nforest.max_depth = 6\n\
             forest.mtry = auto\nsynth.n_hc = 20\nsynth.velocity_pdvec2 = 0.2, 0.1, 0.1\n\
             cv.windows = 0, 12\nfamilies.motion = motor, updrs\n",
        )
        .unwrap();
        assert_eq!(cfg.seed, 7);
        assert_eq!(cfg.k_max, 4);
        assert_eq!(cfg.dimred.method, Method::Pca);
        assert_eq!(cfg.forest.max_depth, Some(6));
        assert_eq!(cfg.forest.mtry, None);
        assert_eq!(cfg.synth.n_patients_per_group[Group::HC.index()], 20);
        assert_eq!(cfg.synth.velocity_means[Group::PDVec2.index()], vec![0.2, 0.1, 0.1]);
        assert_eq!(cfg.windows, vec![0, 12]);
        assert_eq!(cfg.families.0, vec![("motion".to_string(), vec!["motor".to_string(), "updrs".to_string()])]);
        assert_eq!(cfg.forest_params().seed, 7);
    }

    #[test]
    fn unknown_key_is_named() {
        let err = PipelineConfig::parse("synth.n_patiens = 3").unwrap_err();
        assert!(matches!(err, Error::Config(_)));
        assert!(err.to_string().contains("synth.n_patiens"));
    }

    #[test]
    fn malformed_lines_are_rejected() {
        assert!(PipelineConfig::parse("seed").is_err());
        assert!(PipelineConfig::parse("seed = x").is_err());
        assert!(PipelineConfig::parse("seed = 1\nseed = 2").is_err());
        assert!(PipelineConfig::parse("gmm.k_min = 5\ngmm.k_max = 2").is_err());
    }

    #[test]
    fn k_ranges() {
        assert_eq!(parse_k_range("1..6").unwrap(), (1, 6));
        assert_eq!(parse_k_range("2-5").unwrap(), (2, 5));
        assert_eq!(parse_k_range("1..=3").unwrap(), (1, 3));
        assert!(parse_k_range("4").is_err());
    }
}
