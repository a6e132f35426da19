//! Full batch run on a synthetic 50-case study: generate, evaluate, test, report.
//!
//! Pass an output directory to keep the files; a temporary one is used otherwise.

use pancstudy::phantom::StudySpec;
use pancstudy::pipeline::{self, RunConfig};

fn run_in(dir: &std::path::Path) -> pancstudy::Result<String> {
    let spec = StudySpec::from_toml(include_str!("../data/phantom_study.toml"))?;
    let (generated, cfg_path) = pipeline::cmd_phantom(&spec, dir)?;
    let cfg = RunConfig::load(&cfg_path)?;
    let eval = pipeline::cmd_evaluate(&cfg)?;
    let models: Vec<String> = cfg.models.iter().map(|m| m.name.clone()).collect();
    pipeline::cmd_stats(&eval.metrics_path, &cfg.out, &models)?;
    let report = pipeline::cmd_report(cfg.out.join(pipeline::STUDY_FILE))?;
    Ok(format!(
        "{} cases, {} metric rows in {}\n\n{report}",
        generated.cases.len(),
        eval.metrics.len(),
        eval.metrics_path.display()
    ))
}

pub fn run() -> pancstudy::Result<String> {
    let dir = tempfile::tempdir().map_err(|e| pancstudy::Error::InvalidArgument(e.to_string()))?;
    run_in(dir.path())
}

fn main() -> pancstudy::Result<()> {
    match std::env::args_os().nth(1) {
        Some(dir) => print!("{}", run_in(std::path::Path::new(&dir))?),
        None => print!("{}", run()?),
    }
    Ok(())
}
