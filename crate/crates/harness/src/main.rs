use std::path::{Path, PathBuf};
use std::process::ExitCode;

use cedc_core::metrics::{build_length_curve, le_auc};
use cedc_core::predictor::Learner;
use cedc_core::tasks::TaskKind;
use cedc_harness::{
    emit_report, load_report, preset, run_experiment, verify_paths, zero_shot_eval, HarnessError,
    Result, RunConfig, RunReport,
};
use cedc_nn::OptimizerConfig;
use clap::{Parser, Subcommand};

#[derive(Parser)]
#[command(
    name = "cedc",
    version,
    about = "Counter-example driven curricula on algorithmic tasks"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args)]
struct Output {
    /// Output directory [default: $CEDC_OUT_DIR/<name>, else runs/<name>]
    #[arg(long)]
    out: Option<PathBuf>,
    /// Replace a non-empty output directory
    #[arg(long)]
    overwrite: bool,
    /// Comma-separated seeds, overriding the configuration
    #[arg(long, value_delimiter = ',')]
    seed: Vec<u64>,
    /// Root for default output directories
    #[arg(
        long,
        env = "CEDC_OUT_DIR",
        default_value = "runs",
        hide_env_values = true
    )]
    out_root: PathBuf,
}

impl Output {
    fn dir(&self, cfg_dir: Option<&Path>, name: &str) -> PathBuf {
        self.out
            .clone()
            .or_else(|| cfg_dir.map(Path::to_path_buf))
            .unwrap_or_else(|| self.out_root.join(name))
    }
}

#[derive(Subcommand)]
enum Command {
    /// Run one configuration
    Train {
        #[arg(long)]
        config: PathBuf,
        #[command(flatten)]
        output: Output,
    },
    /// Run a named preset
    Preset {
        name: String,
        /// Overrides applied to every run of the preset
        #[arg(long)]
        config: Option<PathBuf>,
        #[command(flatten)]
        output: Output,
    },
    /// Evaluate a checkpoint: zero-shot accuracy, or a length curve with --lengths
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        task: TaskKind,
        #[arg(long, value_delimiter = ',')]
        lengths: Vec<usize>,
        /// Training maximum the lengths must exceed
        #[arg(long, default_value_t = 0)]
        trained_max: usize,
        #[arg(long, default_value_t = 500)]
        n: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Re-emit tables from a stored report.json
    Report {
        run: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Re-check dataset files (or every dataset of a run directory) against the oracles
    VerifyDataset {
        #[arg(required = true)]
        paths: Vec<PathBuf>,
        #[arg(long)]
        task: Option<TaskKind>,
    },
}

fn summarize(report: &RunReport) {
    println!(
        "{:<28} LE-AUC {:.3} ± {:.3}  in-dist {:.3}  per seed {:?}",
        report.name,
        report.le_auc.mean,
        report.le_auc.sd,
        report.in_distribution_accuracy.mean,
        report.le_auc.values
    );
    for (task, s) in &report.zero_shot {
        println!("{:<28} zero-shot {task} {:.3} ± {:.3}", "", s.mean, s.sd);
    }
}

fn with_seeds(mut cfg: RunConfig, seeds: &[u64]) -> RunConfig {
    if !seeds.is_empty() {
        cfg.run.seeds = seeds.to_vec();
    }
    cfg
}

fn run(cli: Cli) -> Result<bool> {
    match cli.command {
        Command::Train { config, output } => {
            let cfg = with_seeds(RunConfig::load(&config)?, &output.seed);
            let name = config
                .file_stem()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_else(|| "run".into());
            let dir = output.dir(cfg.run.out_dir.as_deref(), &name);
            summarize(&run_experiment(&cfg, &name, &dir, output.overwrite)?);
            println!("wrote {}", dir.display());
        }
        Command::Preset {
            name,
            config,
            output,
        } => {
            let overrides = config
                .map(|p| std::fs::read_to_string(&p).map(|t| (p, t)))
                .transpose()?;
            let runs = preset(&name)?;
            let root = output.dir(None, &name);
            cedc_harness::run::prepare_out_dir(&root, output.overwrite)?;
            for (run_name, base) in runs {
                let cfg = match &overrides {
                    Some((path, text)) => merge(&base, text, path)?,
                    None => base,
                };
                let cfg = with_seeds(cfg, &output.seed);
                summarize(&run_experiment(
                    &cfg,
                    &run_name,
                    &root.join(&run_name),
                    true,
                )?);
            }
            std::fs::remove_file(root.join(cedc_harness::INCOMPLETE_MARKER))?;
            println!("wrote {}", root.display());
        }
        Command::Eval {
            checkpoint,
            task,
            lengths,
            trained_max,
            n,
            seed,
        } => {
            let (learner, _) =
                Learner::load_checkpoint(&checkpoint, OptimizerConfig::default(), seed)?;
            if lengths.is_empty() {
                println!(
                    "{task} accuracy {:.4}",
                    zero_shot_eval(&learner, task.task(), n, seed)?
                );
            } else {
                let curve =
                    build_length_curve(&learner, task.task(), &lengths, n, seed, trained_max)?;
                println!("length,accuracy,n");
                for p in curve.points() {
                    println!("{},{},{}", p.length, p.accuracy, p.n);
                }
                println!("# LE-AUC {:.4}", le_auc(&curve)?);
            }
        }
        Command::Report { run, out } => {
            let path = if run.is_dir() {
                run.join("report.json")
            } else {
                run.clone()
            };
            let report = load_report(&path)?;
            let dir = out.unwrap_or_else(|| path.parent().unwrap_or(Path::new(".")).to_path_buf());
            for p in emit_report(&report, &dir)? {
                println!("wrote {}", p.display());
            }
            summarize(&report);
        }
        Command::VerifyDataset { paths, task } => {
            let checks = verify_paths(&paths, task)?;
            let mut bad = 0;
            for c in &checks {
                println!(
                    "{}: {} records, {} violations ({})",
                    c.path.display(),
                    c.records,
                    c.violations.len(),
                    c.task
                );
                for v in c.violations.iter().take(10) {
                    println!("  line {}: {:?}: {}", v.line, v.input, v.reason);
                }
                bad += c.violations.len();
            }
            println!("{} files, {bad} violations", checks.len());
            return Ok(bad == 0);
        }
    }
    Ok(true)
}

/// Applies the keys present in `text` on top of `base`.
fn merge(base: &RunConfig, text: &str, path: &Path) -> Result<RunConfig> {
    let overrides: toml::Table = toml::from_str(text).map_err(|source| HarnessError::Toml {
        path: path.display().to_string(),
        source,
    })?;
    let mut merged: toml::Table =
        toml::from_str(&base.to_toml()?).map_err(|source| HarnessError::Toml {
            path: "preset".into(),
            source,
        })?;
    for (section, value) in overrides {
        match (merged.get_mut(&section), value) {
            (Some(toml::Value::Table(dst)), toml::Value::Table(src)) => dst.extend(src),
            (_, v) => {
                merged.insert(section, v);
            }
        }
    }
    RunConfig::from_toml(&toml::to_string(&merged)?, &path.display().to_string())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
