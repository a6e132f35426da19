//! Batch driver: harmonize → evaluate → stats over a case manifest.
//!
//! Every command reads a [`RunConfig`], processes cases on a worker pool and
//! aggregates results in manifest order, so reports do not depend on
//! scheduling. Output files are written atomically.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::cohort::{balance_cohort, read_manifest, write_manifest, CaseRecord};
use crate::error::{Error, Result};
use crate::fsutil::write_atomic;
use crate::harmonize::RecipeBook;
use crate::metrics::{evaluate_case, CaseMetrics, EvalOptions, HdPolicy};
use crate::nifti::{read_label_volume, write_label_volume_auto};
use crate::phantom::{generate_study, GeneratedStudy, StudySpec};
use crate::scheme::{ALL_45, AMOS_16, AMOS_PANCREAS, PANCREAS, REF_8};
use crate::study::{format_p, run_study, Descriptive, StudyResult};
use crate::volume::{Label, DEFAULT_REL_TOL};

pub const ENV_MANIFEST: &str = "PANCSTUDY_MANIFEST";
pub const ENV_OUT: &str = "PANCSTUDY_OUT";
pub const ENV_RECIPE: &str = "PANCSTUDY_RECIPE";

pub const METRICS_FILE: &str = "metrics.csv";
pub const METRICS_SUMMARY_FILE: &str = "metrics_summary.txt";
pub const STUDY_FILE: &str = "study.json";
pub const TABLES_FILE: &str = "tables.txt";

/// One prediction set in the manifest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelColumn {
    pub name: String,
    pub column: String,
    #[serde(default = "default_model_code")]
    pub code: Label,
    #[serde(default = "default_model_scheme")]
    pub scheme: String,
}

fn default_model_code() -> Label {
    PANCREAS
}
fn default_model_scheme() -> String {
    ALL_45.to_owned()
}
fn default_reference_code() -> Label {
    AMOS_PANCREAS
}
fn default_reference_scheme() -> String {
    AMOS_16.to_owned()
}
fn default_reference_column() -> String {
    "reference".to_owned()
}
fn default_rel_tol() -> f64 {
    DEFAULT_REL_TOL
}
fn default_targets() -> Vec<String> {
    vec![REF_8.to_owned(), ALL_45.to_owned()]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub manifest: PathBuf,
    pub out: PathBuf,
    /// Harmonization recipe file; the built-in recipe when absent.
    #[serde(default)]
    pub recipe: Option<PathBuf>,
    /// Worker threads; all cores when absent.
    #[serde(default)]
    pub jobs: Option<usize>,
    /// Any case-level failure makes the command fail.
    #[serde(default)]
    pub strict: bool,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub hd_policy: HdPolicy,
    #[serde(default)]
    pub min_voxels: usize,
    #[serde(default = "default_rel_tol")]
    pub rel_tol: f64,
    #[serde(default)]
    pub auto_resample: bool,
    #[serde(default = "default_reference_column")]
    pub reference_column: String,
    #[serde(default = "default_reference_code")]
    pub reference_code: Label,
    #[serde(default = "default_reference_scheme")]
    pub reference_scheme: String,
    #[serde(default)]
    pub models: Vec<ModelColumn>,
    /// Recipes run by `harmonize`.
    #[serde(default = "default_targets")]
    pub harmonize: Vec<String>,
}

impl RunConfig {
    pub fn new(manifest: impl Into<PathBuf>, out: impl Into<PathBuf>) -> Self {
        RunConfig {
            manifest: manifest.into(),
            out: out.into(),
            recipe: None,
            jobs: None,
            strict: false,
            seed: 0,
            hd_policy: HdPolicy::default(),
            min_voxels: 0,
            rel_tol: DEFAULT_REL_TOL,
            auto_resample: false,
            reference_column: default_reference_column(),
            reference_code: AMOS_PANCREAS,
            reference_scheme: default_reference_scheme(),
            models: Vec::new(),
            harmonize: default_targets(),
        }
    }

    /// Parses TOML; relative paths resolve against `base_dir`.
    pub fn from_toml(text: &str, base_dir: &Path) -> Result<Self> {
        let mut cfg: RunConfig = toml::from_str(text)?;
        let resolve = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base_dir.join(&*p);
            }
        };
        resolve(&mut cfg.manifest);
        resolve(&mut cfg.out);
        if let Some(r) = cfg.recipe.as_mut() {
            resolve(r);
        }
        Ok(cfg)
    }

    /// Loads a config file and applies the path environment overrides.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let base = path.parent().unwrap_or(Path::new("."));
        let mut cfg = Self::from_toml(&text, base)?;
        cfg.apply_env();
        Ok(cfg)
    }

    pub fn apply_env(&mut self) {
        if let Some(v) = std::env::var_os(ENV_MANIFEST) {
            self.manifest = v.into();
        }
        if let Some(v) = std::env::var_os(ENV_OUT) {
            self.out = v.into();
        }
        if let Some(v) = std::env::var_os(ENV_RECIPE) {
            self.recipe = Some(v.into());
        }
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string_pretty(self).map_err(|e| Error::InvalidArgument(format!("config: {e}")))
    }

    pub fn recipe_book(&self) -> Result<RecipeBook> {
        match &self.recipe {
            Some(p) => RecipeBook::from_path(p),
            None => Ok(RecipeBook::builtin().clone()),
        }
    }

    /// Checks referenced files and that every configured code belongs to its scheme.
    pub fn validate(&self) -> Result<()> {
        if !self.manifest.is_file() {
            return Err(Error::Manifest(format!("{} does not exist", self.manifest.display())));
        }
        if let Some(r) = &self.recipe {
            if !r.is_file() {
                return Err(Error::Recipe(format!("{} does not exist", r.display())));
            }
        }
        let book = self.recipe_book()?;
        let schemes = book.schemes();
        let check = |scheme: &str, code: Label| -> Result<()> {
            if code == 0 || !schemes.get(scheme)?.contains(code) {
                return Err(Error::InvalidArgument(format!("code {code} is not a {scheme} label")));
            }
            Ok(())
        };
        check(&self.reference_scheme, self.reference_code)?;
        for m in &self.models {
            check(&m.scheme, m.code)?;
        }
        if !self.rel_tol.is_finite() || self.rel_tol < 0.0 {
            return Err(Error::InvalidArgument("rel_tol must be >= 0".into()));
        }
        Ok(())
    }

    fn pool(&self) -> Result<rayon::ThreadPool> {
        rayon::ThreadPoolBuilder::new()
            .num_threads(self.jobs.unwrap_or(0))
            .build()
            .map_err(|e| Error::InvalidArgument(format!("thread pool: {e}")))
    }

    fn eval_options(&self, model: &ModelColumn) -> EvalOptions {
        EvalOptions {
            policy: self.hd_policy,
            min_voxels: self.min_voxels,
            rel_tol: self.rel_tol,
            auto_resample: self.auto_resample,
            ..EvalOptions::new(self.reference_code, model.code)
        }
    }
}

/// Case-level outcome of a batch command.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct RunReport {
    pub succeeded: usize,
    pub failed: Vec<(String, String)>,
}

impl RunReport {
    fn from_results<T>(cases: &[CaseRecord], results: &[Result<T>]) -> Self {
        let mut report = RunReport::default();
        for (case, r) in cases.iter().zip(results) {
            match r {
                Ok(_) => report.succeeded += 1,
                Err(e) => {
                    log::error!("case {} failed: {e}", case.case_id);
                    report.failed.push((case.case_id.clone(), e.to_string()));
                }
            }
        }
        report
    }

    /// Process exit status: nonzero only for strict runs with failures.
    pub fn exit_code(&self, strict: bool) -> i32 {
        i32::from(strict && !self.failed.is_empty())
    }
}

fn run_cases<T: Send>(
    cfg: &RunConfig,
    cases: &[CaseRecord],
    f: impl Fn(&CaseRecord) -> Result<T> + Sync,
) -> Result<Vec<Result<T>>> {
    use rayon::prelude::*;
    Ok(cfg.pool()?.install(|| cases.par_iter().map(&f).collect()))
}

fn column<'a>(case: &'a CaseRecord, name: &str) -> Result<&'a Path> {
    case.path(name)
        .ok_or_else(|| Error::Manifest(format!("case {}: missing column {name}", case.case_id)))
}

fn ensure_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

pub fn harmonized_file_name(case_id: &str, recipe: &str) -> String {
    format!("{case_id}_{}.nii.gz", recipe.to_ascii_lowercase().replace('_', ""))
}

#[derive(Debug, Clone, PartialEq)]
pub struct HarmonizeOutput {
    pub report: RunReport,
    /// Manifest listing the harmonized volumes, one column per recipe.
    pub manifest: PathBuf,
}

/// Applies the configured recipes to every case's `panorama` / `ts` inputs and
/// writes `<out>/harmonized/<case>_<recipe>.nii.gz` plus a rule log.
pub fn cmd_harmonize(cfg: &RunConfig) -> Result<HarmonizeOutput> {
    let book = cfg.recipe_book()?;
    for r in &cfg.harmonize {
        book.recipe(r)?;
    }
    let cases = read_manifest(&cfg.manifest)?;
    let dir = cfg.out.join("harmonized");
    ensure_dir(&dir)?;
    let slots: Vec<&str> = book.inputs().keys().map(String::as_str).collect();

    let results = run_cases(cfg, &cases, |case| {
        let mut inputs = Vec::with_capacity(slots.len());
        for &slot in &slots {
            let (vol, _) = read_label_volume(column(case, slot)?)?;
            inputs.push((slot, vol));
        }
        let refs: Vec<(&str, &_)> = inputs.iter().map(|(s, v)| (*s, v)).collect();
        let mut written = Vec::new();
        let mut log_rows = Vec::new();
        for recipe in &cfg.harmonize {
            let h = book.apply(recipe, &refs)?;
            for entry in &h.log {
                log::debug!("{} {recipe}: {} changed {}", case.case_id, entry.rule, entry.changed_voxels);
                log_rows.push((recipe.clone(), entry.rule.clone(), entry.changed_voxels));
            }
            let path = dir.join(harmonized_file_name(&case.case_id, recipe));
            write_label_volume_auto(&h.volume, &path)?;
            written.push((recipe.to_ascii_lowercase(), path));
        }
        Ok((written, log_rows))
    })?;
    let report = RunReport::from_results(&cases, &results);

    let mut out_cases = Vec::new();
    let mut log_csv = csv::Writer::from_writer(Vec::new());
    log_csv.write_record(["case_id", "recipe", "rule", "changed_voxels"])?;
    for (case, r) in cases.iter().zip(results) {
        if let Ok((written, log_rows)) = r {
            for (recipe, rule, n) in log_rows {
                log_csv.write_record([case.case_id.as_str(), &recipe, &rule, &n.to_string()])?;
            }
            out_cases.push(CaseRecord {
                case_id: case.case_id.clone(),
                pdac: case.pdac,
                paths: written,
            });
        }
    }
    let log_bytes = log_csv.into_inner().map_err(|e| Error::InvalidArgument(e.to_string()))?;
    write_atomic(&dir.join("rules.csv"), &log_bytes)?;
    let manifest = dir.join("manifest.csv");
    write_manifest(&out_cases, &manifest, Some(&dir))?;
    log::info!(
        "harmonized {} cases, {} failed",
        report.succeeded,
        report.failed.len()
    );
    Ok(HarmonizeOutput { report, manifest })
}

pub fn write_metrics(metrics: &[CaseMetrics], path: impl AsRef<Path>) -> Result<()> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["case_id", "model_id", "dsc", "hd_mm", "detected", "hd_imputed"])?;
    let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
    for m in metrics {
        w.write_record([
            m.case_id.clone(),
            m.model_id.clone(),
            opt(m.dsc),
            opt(m.hd_mm),
            m.detected.to_string(),
            m.hd_imputed.to_string(),
        ])?;
    }
    let bytes = w.into_inner().map_err(|e| Error::InvalidArgument(e.to_string()))?;
    write_atomic(path.as_ref(), &bytes)
}

pub fn read_metrics(path: impl AsRef<Path>) -> Result<Vec<CaseMetrics>> {
    let path = path.as_ref();
    let mut r = csv::Reader::from_path(path)
        .map_err(|e| Error::Manifest(format!("{}: {e}", path.display())))?;
    let bad = |what: &str, v: &str| Error::Manifest(format!("{}: bad {what} {v:?}", path.display()));
    let mut out = Vec::new();
    for row in r.records() {
        let row = row?;
        let field = |i: usize| row.get(i).unwrap_or_default();
        let num = |i: usize, what: &str| -> Result<Option<f64>> {
            match field(i) {
                "" => Ok(None),
                v => v.parse().map(Some).map_err(|_| bad(what, v)),
            }
        };
        let flag = |i: usize, what: &str| -> Result<bool> {
            field(i).parse().map_err(|_| bad(what, field(i)))
        };
        out.push(CaseMetrics {
            case_id: field(0).to_owned(),
            model_id: field(1).to_owned(),
            dsc: num(2, "dsc")?,
            hd_mm: num(3, "hd_mm")?,
            detected: flag(4, "detected")?,
            hd_imputed: flag(5, "hd_imputed")?,
        });
    }
    Ok(out)
}

/// Per-model mean ± SD and detection failures over all rows of a metrics table.
pub fn metrics_summary(metrics: &[CaseMetrics], models: &[String]) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "{:<16} {:>6} {:>16} {:>18} {:>9}", "model", "cases", "DSC", "HD (mm)", "failures");
    for m in models {
        let rows: Vec<&CaseMetrics> = metrics.iter().filter(|r| &r.model_id == m).collect();
        let fmt = |vals: Vec<f64>, dec: usize| match Descriptive::of(&vals) {
            Some(d) => format!("{:.*} ± {:.*}", dec, d.mean, dec, d.sd),
            None => "n/a".to_owned(),
        };
        let _ = writeln!(
            out,
            "{:<16} {:>6} {:>16} {:>18} {:>9}",
            m,
            rows.len(),
            fmt(rows.iter().filter_map(|r| r.dsc).collect(), 3),
            fmt(rows.iter().filter_map(|r| r.hd_mm).collect(), 2),
            rows.iter().filter(|r| !r.detected).count()
        );
    }
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvaluateOutput {
    pub report: RunReport,
    pub metrics: Vec<CaseMetrics>,
    pub metrics_path: PathBuf,
}

/// Evaluates every configured model against the reference column and writes
/// `<out>/metrics.csv` (one row per case and model) plus a summary.
/// A case fails as a whole if any of its volumes cannot be evaluated.
pub fn cmd_evaluate(cfg: &RunConfig) -> Result<EvaluateOutput> {
    if cfg.models.is_empty() {
        return Err(Error::InvalidArgument("no models configured".into()));
    }
    cfg.validate()?;
    let cases = read_manifest(&cfg.manifest)?;
    ensure_dir(&cfg.out)?;

    let results = run_cases(cfg, &cases, |case| {
        let (reference, _) = read_label_volume(column(case, &cfg.reference_column)?)?;
        cfg.models
            .iter()
            .map(|m| {
                let (pred, _) = read_label_volume(column(case, &m.column)?)?;
                evaluate_case(&case.case_id, &m.name, &reference, &pred, &cfg.eval_options(m))
            })
            .collect::<Result<Vec<_>>>()
    })?;
    let report = RunReport::from_results(&cases, &results);
    let metrics: Vec<CaseMetrics> = results.into_iter().flatten().flatten().collect();

    let metrics_path = cfg.out.join(METRICS_FILE);
    write_metrics(&metrics, &metrics_path)?;
    let names: Vec<String> = cfg.models.iter().map(|m| m.name.clone()).collect();
    let mut summary = metrics_summary(&metrics, &names);
    if !report.failed.is_empty() {
        let _ = writeln!(summary, "\nfailed cases: {}", report.failed.len());
        for (id, e) in &report.failed {
            let _ = writeln!(summary, "  {id}: {e}");
        }
    }
    write_atomic(&cfg.out.join(METRICS_SUMMARY_FILE), summary.as_bytes())?;
    log::info!("evaluated {} cases, {} failed", report.succeeded, report.failed.len());
    Ok(EvaluateOutput {
        report,
        metrics,
        metrics_path,
    })
}

/// Runs the test battery over a metrics table and writes `study.json` and
/// `tables.txt` into `out_dir`.
pub fn cmd_stats(metrics_path: impl AsRef<Path>, out_dir: impl AsRef<Path>, models: &[String]) -> Result<StudyResult> {
    let metrics = read_metrics(metrics_path)?;
    let study = run_study(&metrics, models)?;
    let out_dir = out_dir.as_ref();
    ensure_dir(out_dir)?;
    write_atomic(&out_dir.join(STUDY_FILE), study.to_json()?.as_bytes())?;
    write_atomic(&out_dir.join(TABLES_FILE), study.render_tables().as_bytes())?;
    Ok(study)
}

/// Renders the plain-text tables of a saved `study.json`.
pub fn cmd_report(study_json: impl AsRef<Path>) -> Result<String> {
    let path = study_json.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let study = StudyResult::from_json(&text)?;
    let mut out = study.render_tables();
    if study.n_dropped_incomplete > 0 {
        let _ = writeln!(out, "\n{} incomplete cases excluded", study.n_dropped_incomplete);
    }
    let _ = writeln!(
        out,
        "\nomnibus detection test: Q = {:.3}, p {}",
        study.detection.omnibus.statistic,
        match format_p(study.detection.omnibus.p_value) {
            p if p.starts_with('<') => p,
            p => format!("= {p}"),
        }
    );
    Ok(out)
}

/// Generates a phantom study and writes a ready-to-run `run.toml` next to it.
pub fn cmd_phantom(spec: &StudySpec, out_dir: impl AsRef<Path>) -> Result<(GeneratedStudy, PathBuf)> {
    let out_dir = out_dir.as_ref();
    let generated = generate_study(spec, out_dir)?;
    let mut cfg = RunConfig::new("manifest.csv", "results");
    cfg.seed = spec.seed;
    cfg.reference_code = spec.target_code;
    cfg.models = generated
        .models
        .iter()
        .map(|(name, column)| ModelColumn {
            name: name.clone(),
            column: column.clone(),
            code: spec.prediction_code,
            scheme: default_model_scheme(),
        })
        .collect();
    let cfg_path = out_dir.join("run.toml");
    write_atomic(&cfg_path, cfg.to_toml()?.as_bytes())?;
    Ok((generated, cfg_path))
}

/// Writes a PDAC-balanced copy of `manifest` to `out`.
pub fn cmd_cohort(manifest: impl AsRef<Path>, seed: u64, out: impl AsRef<Path>) -> Result<Vec<CaseRecord>> {
    let cases = read_manifest(manifest)?;
    let balanced = balance_cohort(&cases, seed)?;
    let out = out.as_ref();
    if let Some(dir) = out.parent().filter(|d| !d.as_os_str().is_empty()) {
        ensure_dir(dir)?;
    }
    write_manifest(&balanced, out, out.parent())?;
    log::info!("balanced {} cases down to {}", cases.len(), balanced.len());
    Ok(balanced)
}
