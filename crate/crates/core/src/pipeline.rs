//! End-to-end orchestration behind the `synth`, `run` and `replicate`
//! subcommands.
//!
//! [`analyze`] runs every stage in memory; the `cmd_*` functions add file
//! output. Each run directory gets a `MANIFEST` listing completed stages and
//! written files, ending in `complete` or in the stage that failed
//! (`REPLICATION_MANIFEST` for `replicate`).

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::cohort::{self, CohortLabel, FeatureMatrix, VisitTable};
use crate::config::PipelineConfig;
use crate::dimred::{self, ProgressionSpace, View};
use crate::error::{Error, Result};
use crate::eval::{self, ReplicationOptions, ReplicationReport, WindowReport};
use crate::forest::{self, ForestModel};
use crate::mixture::{self, GmmModel, ModelSelectionReport, SubtypeAssignment};
use crate::synthgen::{self, Group};

/// Everything `run` computes.
#[derive(Debug, Clone)]
pub struct Analysis {
    /// Imputed, vectorized matrix after dropping non-progressing codes.
    pub raw: FeatureMatrix,
    pub normalized: FeatureMatrix,
    pub space: ProgressionSpace,
    /// Rows of `normalized` that were clustered into subtypes.
    pub subtype_rows: Vec<usize>,
    pub selection: ModelSelectionReport,
    pub gmm: GmmModel,
    pub assignment: SubtypeAssignment,
    pub windows: Vec<WindowReport>,
    /// Forest on the first window, trained on every subtyped patient.
    pub forest: ForestModel,
}

fn stage<T>(name: &str, f: impl FnOnce() -> Result<T>) -> Result<T> {
    log::info!("stage {name}");
    f().map_err(|e| e.context(format!("stage `{name}`")))
}

/// ingest → impute → vectorize → drop static → normalize → dimred →
/// select_k → assign → windowed CV → final forest.
pub fn analyze(table: &VisitTable, cfg: &PipelineConfig) -> Result<Analysis> {
    let mut progress = |_: &str| Ok(());
    analyze_with(table, cfg, &mut progress)
}

fn analyze_with(
    table: &VisitTable,
    cfg: &PipelineConfig,
    done: &mut dyn FnMut(&str) -> Result<()>,
) -> Result<Analysis> {
    let imputed = stage("impute", || cohort::impute(table))?;
    done("impute")?;
    let raw = stage("vectorize", || {
        cohort::drop_static_features(&cohort::vectorize(&imputed)?, cfg.static_epsilon)
    })?;
    done("vectorize")?;
    let normalized = stage("normalize", || cohort::normalize(&raw, cfg.normalization))?;
    done("normalize")?;
    let space = stage("dimred", || {
        Ok(dimred::fit(&normalized, &cfg.dimred_options())?.with_dimension_names(&cfg.families))
    })?;
    done("dimred")?;

    let subtype_rows = normalized.rows_with_labels(&cfg.subtype_cohorts);
    let (selection, gmm, assignment) = stage("mixture", || {
        if subtype_rows.is_empty() {
            return Err(Error::Validation(format!(
                "no patients in cohorts {:?}",
                cfg.subtype_cohorts
            )));
        }
        let coords = cfg
            .view
            .apply(&space, &space.patient_coords().select_rows(&subtype_rows));
        let (selection, gmm) = mixture::select_k(&coords, cfg.k_min, cfg.k_max, &cfg.gmm_options())?;
        let ids: Vec<String> = subtype_rows
            .iter()
            .map(|&i| normalized.patient_ids()[i].clone())
            .collect();
        let assignment = mixture::assign_subtypes(&gmm, &coords, &ids)?;
        Ok((selection, gmm, assignment))
    })?;
    done("mixture")?;

    let labels = assignment.label_names();
    let subtyped = normalized.select_rows(&subtype_rows);
    let windows = stage("cross-validation", || {
        eval::windowed_experiment(
            &subtyped,
            &labels,
            &cfg.windows,
            &cfg.forest_params(),
            cfg.cv_folds,
            cfg.seed,
        )
    })?;
    done("cross-validation")?;
    let forest = stage("forest", || {
        let window = subtyped.select_columns(&subtyped.columns_up_to_month(cfg.windows[0]));
        forest::train_forest(window.values(), &labels, window.feature_names(), &cfg.forest_params())
    })?;
    done("forest")?;

    Ok(Analysis {
        raw,
        normalized,
        space,
        subtype_rows,
        selection,
        gmm,
        assignment,
        windows,
        forest,
    })
}

/// Settings `replicate` needs to replay a run, stored in `summary.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplaySettings {
    pub view: View,
    pub subtype_cohorts: Vec<CohortLabel>,
}

/// Tracks written files and completed stages for the MANIFEST.
struct RunDir {
    root: PathBuf,
    manifest: &'static str,
    stages: Vec<String>,
    files: Vec<String>,
}

impl RunDir {
    fn create(root: &Path, manifest: &'static str) -> Result<Self> {
        fs::create_dir_all(root).map_err(|e| Error::io(root, e))?;
        Ok(RunDir {
            root: root.to_owned(),
            manifest,
            stages: Vec::new(),
            files: Vec::new(),
        })
    }

    fn write(&mut self, name: &str, f: impl FnOnce(&mut BufWriter<File>) -> Result<()>) -> Result<()> {
        let path = self.root.join(name);
        let file = File::create(&path).map_err(|e| Error::io(&path, e))?;
        let mut w = BufWriter::new(file);
        f(&mut w)?;
        w.flush().map_err(|e| Error::io(&path, e))?;
        self.files.push(name.to_owned());
        Ok(())
    }

    fn write_text(&mut self, name: &str, text: &str) -> Result<()> {
        self.write(name, |w| {
            w.write_all(text.as_bytes())
                .and_then(|_| w.write_all(b"\n"))
                .map_err(|e| Error::io(name, e))
        })
    }

    fn finish(&self, outcome: &Result<()>) -> Result<()> {
        let mut text = String::new();
        for s in &self.stages {
            text.push_str(&format!("stage {s} ok\n"));
        }
        for f in &self.files {
            text.push_str(&format!("file {f}\n"));
        }
        match outcome {
            Ok(()) => text.push_str("complete\n"),
            Err(e) => text.push_str(&format!("failed: {e}\n")),
        }
        let path = self.root.join(self.manifest);
        fs::write(&path, text).map_err(|e| Error::io(&path, e))
    }
}

fn read_visits(path: &Path, cfg: &PipelineConfig) -> Result<VisitTable> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    cohort::parse_visits(std::io::BufReader::new(file), &cfg.schedule)
}

/// Writes `visits.csv` and `truth.csv`; returns the per-group patient counts.
pub fn cmd_synth(cfg: &PipelineConfig) -> Result<Vec<(Group, usize)>> {
    let spec = cfg.cohort_spec();
    let (table, truth) = synthgen::generate_cohort(&spec)?;
    let out = &cfg.paths.output;
    fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    let visits = out.join("visits.csv");
    table.write_csv(BufWriter::new(File::create(&visits).map_err(|e| Error::io(&visits, e))?))?;
    let truth_path = out.join("truth.csv");
    truth.write_csv(BufWriter::new(File::create(&truth_path).map_err(|e| Error::io(&truth_path, e))?))?;
    Ok(Group::ALL
        .iter()
        .map(|&g| (g, spec.n_patients_per_group[g.index()]))
        .collect())
}

/// Runs the full analysis on `paths.input` and writes every report into
/// `paths.output`.
pub fn cmd_run(cfg: &PipelineConfig) -> Result<Analysis> {
    let input = cfg
        .paths
        .input
        .clone()
        .ok_or_else(|| Error::Config("no input file (set paths.input)".into()))?;
    let mut dir = RunDir::create(&cfg.paths.output, "MANIFEST")?;
    let mut result: Option<Analysis> = None;
    let outcome = run_into(&input, cfg, &mut dir, &mut result);
    dir.finish(&outcome)?;
    outcome.map(|_| result.expect("successful run stores its analysis"))
}

fn run_into(input: &Path, cfg: &PipelineConfig, dir: &mut RunDir, slot: &mut Option<Analysis>) -> Result<()> {
    let table = stage("ingest", || read_visits(input, cfg))?;
    dir.stages.push("ingest".into());
    let mut stages = Vec::new();
    let analysis = analyze_with(&table, cfg, &mut |s| {
        stages.push(s.to_owned());
        Ok(())
    });
    dir.stages.extend(stages);
    let a = analysis?;

    let space = &a.space;
    let labels: Vec<String> = (0..space.rank()).map(|k| space.dimension_label(k)).collect();
    dir.write("features.csv", |w| a.normalized.write_csv(w))?;
    dir.write_text("progression_space.json", &space.to_json()?)?;
    dir.write("coordinates.csv", |w| {
        dimred::write_coordinates_csv(w, space.patient_ids(), &labels, space.patient_coords())
    })?;
    let lead = space.dimension_label(space.dimension_order()[0]);
    dir.write("progression_2d.csv", |w| {
        dimred::write_coordinates_csv(
            w,
            space.patient_ids(),
            &[lead.clone(), "other".to_owned()],
            &space.combined_view(space.patient_coords()),
        )
    })?;
    dir.write_text("gmm.json", &a.gmm.to_json()?)?;
    dir.write("assignments.csv", |w| a.assignment.write_csv(w))?;
    dir.write("importances.csv", |w| {
        forest::write_importances_csv(w, &forest::feature_importance(&a.forest))
    })?;
    for win in &a.windows {
        for (class, curve) in win.report.classes.iter().zip(&win.report.roc_curves) {
            if let Some(curve) = curve {
                dir.write(&format!("roc_m{}_{class}.csv", win.horizon), |w| curve.write_csv(w))?;
            }
        }
    }
    dir.write_text("cv_report.json", &serde_json::to_string_pretty(&a.windows)?)?;
    dir.write_text("forest.json", &a.forest.to_json()?)?;
    dir.write_text("summary.json", &serde_json::to_string_pretty(&summary(&a, cfg))?)?;
    dir.stages.push("reports".into());
    *slot = Some(a);
    Ok(())
}

fn summary(a: &Analysis, cfg: &PipelineConfig) -> serde_json::Value {
    let space = &a.space;
    let shares: serde_json::Map<String, serde_json::Value> = (0..space.rank())
        .map(|k| (space.dimension_label(k), json!(space.explained_variance()[k])))
        .collect();
    let order: Vec<String> = space
        .dimension_order()
        .iter()
        .map(|&k| space.dimension_label(k))
        .collect();
    let windows: Vec<_> = a
        .windows
        .iter()
        .map(|w| {
            json!({
                "horizon": w.horizon,
                "n_features": w.n_features,
                "macro_auc": w.report.macro_auc(),
                "per_class_auc": w.report.pooled.per_class,
            })
        })
        .collect();
    json!({
        "seed": cfg.seed,
        "method": space.method().to_string(),
        "rank": space.rank(),
        "n_patients": a.normalized.n_patients(),
        "n_features": a.normalized.n_features(),
        "n_subtyped": a.subtype_rows.len(),
        "explained_variance": shares,
        "dimension_order": order,
        "chosen_k": a.selection.chosen_k,
        "model_selection": a.selection,
        "subtype_counts": a.assignment.counts(),
        "windows": windows,
        "oob_error": a.forest.oob_error(),
        "replay": ReplaySettings {
            view: cfg.view,
            subtype_cohorts: cfg.subtype_cohorts.clone(),
        },
    })
}

fn read_artifact(dir: &Path, name: &str) -> Result<String> {
    let path = dir.join(name);
    fs::read_to_string(&path).map_err(|e| Error::io(&path, e))
}

/// Replays the models stored in `artifacts` on the `external` visits file.
/// Writes `replication.json` and `replication_assignments.csv`.
pub fn cmd_replicate(cfg: &PipelineConfig, artifacts: &Path, external: &Path) -> Result<ReplicationReport> {
    let space = ProgressionSpace::from_json(&read_artifact(artifacts, "progression_space.json")?)?;
    let gmm = GmmModel::from_json(&read_artifact(artifacts, "gmm.json")?)?;
    let model = ForestModel::from_json(&read_artifact(artifacts, "forest.json")?)?;
    let summary: serde_json::Value = serde_json::from_str(&read_artifact(artifacts, "summary.json")?)?;
    let replay: ReplaySettings = serde_json::from_value(summary["replay"].clone())?;

    let table = stage("ingest", || read_visits(external, cfg))?;
    let opts = ReplicationOptions {
        cohorts: replay.subtype_cohorts,
        view: replay.view,
        imbalance_threshold: cfg.imbalance_threshold,
    };
    let (report, assignment) = stage("replication", || {
        eval::external_replication(&space, &gmm, &model, &table, &opts)
    })?;

    let mut dir = RunDir::create(&cfg.paths.output, "REPLICATION_MANIFEST")?;
    dir.stages.push("replication".into());
    let outcome = dir
        .write_text("replication.json", &serde_json::to_string_pretty(&report)?)
        .and_then(|_| dir.write("replication_assignments.csv", |w| assignment.write_csv(w)));
    dir.finish(&outcome)?;
    outcome.map(|_| report)
}
