use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use pancstudy::metrics::HdPolicy;
use pancstudy::phantom::StudySpec;
use pancstudy::pipeline::{self, RunConfig};

#[derive(Parser)]
#[command(name = "pancstudy", version, about = "Label harmonization, segmentation metrics and paired statistics")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct RunArgs {
    /// Run configuration (TOML).
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    manifest: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    jobs: Option<usize>,
    #[arg(long)]
    strict: bool,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, value_parser = clap::builder::PossibleValuesParser::new(["missing", "impute-diagonal"]))]
    hd_policy: Option<String>,
    #[arg(long)]
    min_voxels: Option<usize>,
}

impl RunArgs {
    fn config(&self) -> pancstudy::Result<RunConfig> {
        let mut cfg = match &self.config {
            Some(p) => RunConfig::load(p)?,
            None => {
                let mut cfg = RunConfig::new(
                    self.manifest.clone().unwrap_or_else(|| "manifest.csv".into()),
                    self.out.clone().unwrap_or_else(|| "results".into()),
                );
                cfg.apply_env();
                cfg
            }
        };
        if let Some(m) = &self.manifest {
            cfg.manifest = m.clone();
        }
        if let Some(o) = &self.out {
            cfg.out = o.clone();
        }
        if self.jobs.is_some() {
            cfg.jobs = self.jobs;
        }
        cfg.strict |= self.strict;
        if let Some(s) = self.seed {
            cfg.seed = s;
        }
        if let Some(p) = &self.hd_policy {
            cfg.hd_policy = p.parse::<HdPolicy>()?;
        }
        if let Some(v) = self.min_voxels {
            cfg.min_voxels = v;
        }
        Ok(cfg)
    }
}

#[derive(Subcommand)]
enum Command {
    /// Build REF_8 / ALL_45 volumes from PANORAMA + TS inputs.
    Harmonize(RunArgs),
    /// Compute DSC, HD and detection per case and model.
    Evaluate(RunArgs),
    /// Run the test battery on a metrics table.
    Stats {
        #[command(flatten)]
        run: RunArgs,
        /// Metrics table; defaults to <out>/metrics.csv.
        #[arg(long)]
        metrics: Option<PathBuf>,
    },
    /// Generate a synthetic study from a study spec (TOML).
    Phantom {
        spec: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Write a PDAC-balanced manifest.
    Cohort {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Print the tables of a saved study.json.
    Report { study: PathBuf },
}

fn run(cli: Cli) -> pancstudy::Result<i32> {
    match cli.command {
        Command::Harmonize(args) => {
            let cfg = args.config()?;
            let out = pipeline::cmd_harmonize(&cfg)?;
            println!("{}", out.manifest.display());
            Ok(out.report.exit_code(cfg.strict))
        }
        Command::Evaluate(args) => {
            let cfg = args.config()?;
            let out = pipeline::cmd_evaluate(&cfg)?;
            println!("{}", out.metrics_path.display());
            Ok(out.report.exit_code(cfg.strict))
        }
        Command::Stats { run, metrics } => {
            let cfg = run.config()?;
            let metrics = metrics.unwrap_or_else(|| cfg.out.join(pipeline::METRICS_FILE));
            let models: Vec<String> = cfg.models.iter().map(|m| m.name.clone()).collect();
            let study = pipeline::cmd_stats(&metrics, &cfg.out, &models)?;
            print!("{}", study.render_tables());
            Ok(0)
        }
        Command::Phantom { spec, out } => {
            let text = std::fs::read_to_string(&spec)
                .map_err(|e| pancstudy::Error::InvalidArgument(format!("{}: {e}", spec.display())))?;
            let (study, cfg) = pipeline::cmd_phantom(&StudySpec::from_toml(&text)?, &out)?;
            println!("{} cases; config {}", study.cases.len(), cfg.display());
            Ok(0)
        }
        Command::Cohort { manifest, seed, out } => {
            let cases = pipeline::cmd_cohort(&manifest, seed, &out)?;
            println!("{} cases written to {}", cases.len(), out.display());
            Ok(0)
        }
        Command::Report { study } => {
            print!("{}", pipeline::cmd_report(&study)?);
            Ok(0)
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match run(Cli::parse()) {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            log::error!("{e}");
            ExitCode::from(2)
        }
    }
}
