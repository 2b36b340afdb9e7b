use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use pawp_core::pipeline::report::{dca_from_predictions, format_table, read_predictions, read_report, report_from_predictions, write_report};
use pawp_core::pipeline::{ingest, run_pipeline_with, synthesize, PipelineHooks, Preset, RunConfig, Stage, SynthSpec};
use pawp_core::{Error, Result};

#[derive(Parser)]
#[command(name = "pawp", version, about = "Tensor-feature PAWP classification pipeline")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct ConfigArgs {
    /// Run configuration (TOML).
    #[arg(long, short)]
    config: PathBuf,
    /// Overrides `output_dir`.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Overrides `seed`.
    #[arg(long)]
    seed: Option<u64>,
}

impl ConfigArgs {
    fn load(&self) -> Result<RunConfig> {
        let mut cfg = RunConfig::load(&self.config)?;
        if let Some(o) = &self.out {
            cfg.output_dir = o.clone();
        }
        if let Some(s) = self.seed {
            cfg.seed = s;
        }
        Ok(cfg)
    }
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic cohort with a manifest, landmarks and run config.
    Synth {
        #[arg(long, default_value = "easy")]
        preset: Preset,
        #[arg(long, default_value_t = 600)]
        subjects: usize,
        /// Native in-plane size.
        #[arg(long, default_value_t = 64)]
        size: usize,
        #[arg(long, default_value_t = 20)]
        phases: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Resolutions written into the generated run config (default: native size).
        #[arg(long, value_delimiter = ',')]
        resolutions: Vec<usize>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Parse and validate the manifest, tensors and landmarks.
    IngestCheck(ConfigArgs),
    /// Normalize, register and downsample; writes `preprocessed/<res>/`.
    Preprocess(ConfigArgs),
    /// Run quality binning on the training split.
    Bin(ConfigArgs),
    /// Binning, grid search and final fits; writes predictions and models.
    Train(ConfigArgs),
    /// Compute report metrics from a predictions file.
    Evaluate {
        #[arg(long)]
        predictions: PathBuf,
        #[arg(long, default_value_t = 5)]
        partitions: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Decision curve of one model (default: the best test AUC).
    Dca {
        #[arg(long)]
        predictions: PathBuf,
        #[arg(long, requires = "resolution")]
        model: Option<String>,
        #[arg(long, requires = "model")]
        resolution: Option<usize>,
        #[arg(long)]
        out: PathBuf,
    },
    /// The full pipeline.
    Run(ConfigArgs),
    /// Print the report table of a finished run.
    Report {
        #[arg(long)]
        run_dir: PathBuf,
    },
}

fn staged(args: &ConfigArgs, stage: Stage) -> Result<()> {
    let cfg = args.load()?;
    let outcome = run_pipeline_with(&cfg, stage, &PipelineHooks::default())?;
    let s = &outcome.summary;
    println!(
        "{} subjects ({} excluded), train {}, test {}",
        s.subjects, s.excluded, s.train, s.test
    );
    if let Some(b) = &outcome.binning {
        println!(
            "binning: removed {} bin(s), {} training subjects kept, validation AUC {:.4}",
            b.chosen,
            s.train_after_binning,
            b.best_auc()
        );
    }
    if !outcome.report.is_empty() {
        print!("{}", format_table(&outcome.report));
    }
    if let (Some(m), Some(a)) = (&s.best_model, s.dca_advantage_030_070) {
        println!("best model {m}: net benefit above both defaults on {:.0}% of thresholds 0.30-0.70", a * 100.0);
    }
    println!("artifacts in {}", outcome.output_dir.display());
    Ok(())
}

fn ingest_check(args: &ConfigArgs) -> Result<()> {
    let cfg = args.load()?;
    let data = ingest(&cfg)?;
    if data.is_empty() {
        println!("manifest {} lists no subjects", cfg.manifest.display());
        return Ok(());
    }
    println!(
        "{} subjects ({} high PAWP), tabular columns [{}]",
        data.len(),
        data.positives(),
        data.tabular_names.join(", ")
    );
    if let Some([r, c, p]) = data.image_dims {
        println!("images {r}x{c}x{p}");
    }
    if let Some(l) = &data.landmarks {
        println!("{} landmark records", l.len());
    }
    Ok(())
}

fn evaluate(predictions: &Path, partitions: usize, out: Option<&Path>) -> Result<()> {
    let rows = read_predictions(predictions)?;
    let report = report_from_predictions(&rows, partitions)?;
    if let Some(o) = out {
        write_report(o, &report)?;
    }
    print!("{}", format_table(&report));
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Synth {
            preset,
            subjects,
            size,
            phases,
            seed,
            resolutions,
            out,
        } => {
            let mut spec = SynthSpec::preset(preset, subjects, size, phases, seed);
            if !resolutions.is_empty() {
                spec.resolutions = resolutions;
            }
            std::fs::create_dir_all(&out).map_err(|e| Error::io(&out, e))?;
            let o = synthesize(&spec, &out)?;
            println!("wrote {} subjects; run config {}", subjects, o.config.display());
            Ok(())
        }
        Command::IngestCheck(a) => ingest_check(&a),
        Command::Preprocess(a) => staged(&a, Stage::Preprocess),
        Command::Bin(a) => staged(&a, Stage::Bin),
        Command::Train(a) => staged(&a, Stage::Train),
        Command::Run(a) => staged(&a, Stage::Full),
        Command::Evaluate {
            predictions,
            partitions,
            out,
        } => evaluate(&predictions, partitions, out.as_deref()),
        Command::Dca {
            predictions,
            model,
            resolution,
            out,
        } => {
            let rows = read_predictions(&predictions)?;
            let key = model.as_deref().zip(resolution);
            let ((m, r), curve) = dca_from_predictions(&rows, key)?;
            curve.write_csv(&out)?;
            println!(
                "{m}@{r}: net benefit above both defaults on {:.0}% of thresholds 0.30-0.70",
                curve.advantage_in_band(0.30, 0.70) * 100.0
            );
            Ok(())
        }
        Command::Report { run_dir } => {
            let report = read_report(&run_dir.join("report.csv"))?;
            print!("{}", format_table(&report));
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
