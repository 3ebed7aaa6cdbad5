use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use lshn_cli::commands::{self, SweepKind};
use lshn_cli::verify::{self, EnergyBattery, Fault};
use lshn_cli::{CliError, ExperimentConfig};

#[derive(Parser)]
#[command(name = "lshn", version, about = "Latent structured Hopfield network experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Experiment config (TOML).
    #[arg(long)]
    config: PathBuf,
    /// Output directory; defaults to `<out_dir>/<name>` from the config.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Overrides the config seed. The config hash includes the override.
    #[arg(long)]
    seed: Option<u64>,
}

impl Common {
    fn load(&self) -> Result<ExperimentConfig, CliError> {
        let mut cfg = ExperimentConfig::load(&self.config)?;
        if let Some(s) = self.seed {
            cfg.seed = s;
        }
        Ok(cfg)
    }
}

#[derive(Subcommand)]
enum Command {
    /// Train a model and write the checkpoint and loss history.
    Train {
        #[command(flatten)]
        common: Common,
        #[arg(short, long)]
        verbose: bool,
    },
    /// Evaluate a checkpoint on every configured corruption.
    Eval {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        #[arg(long)]
        threads: Option<usize>,
    },
    /// Decoded states over time for a few cues, one column per cue.
    RecallGrid {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        /// Stored-pattern indices; defaults to the config's figure section.
        #[arg(long, value_delimiter = ',')]
        patterns: Option<Vec<usize>>,
        /// Time steps to show as rows.
        #[arg(long, value_delimiter = ',')]
        steps: Option<Vec<usize>>,
    },
    /// Per-neuron deviation from the target latent over time.
    Heatmap {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        #[arg(long)]
        pattern: Option<usize>,
        /// Index into the config's eval specs.
        #[arg(long, default_value_t = 0)]
        spec: usize,
    },
    /// Run the property battery.
    Verify {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, hide = true)]
        inject_fault: Option<Fault>,
    },
    /// Capacity or noise sweep with CSV and plot output.
    Sweep {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_enum)]
        kind: SweepKind,
        /// Trained model for noise sweeps.
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        #[arg(long)]
        threads: Option<usize>,
    },
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Train { common, verbose } => {
            let cfg = common.load()?;
            let out = commands::output_dir(&cfg, common.out.as_deref());
            let res = commands::cmd_train(&cfg, &out, verbose)?;
            println!("wrote {} and {}", res.checkpoint.display(), res.loss_csv.display());
        }
        Command::Eval {
            common,
            checkpoint,
            threads,
        } => {
            let cfg = common.load()?;
            let out = commands::output_dir(&cfg, common.out.as_deref());
            let ckpt = commands::checkpoint_path(&out, checkpoint.as_deref());
            let res = commands::cmd_eval(&cfg, &ckpt, &out, threads)?;
            println!("wrote {}", res.metrics_csv.display());
        }
        Command::RecallGrid {
            common,
            checkpoint,
            patterns,
            steps,
        } => {
            let cfg = common.load()?;
            let out = commands::output_dir(&cfg, common.out.as_deref());
            let ckpt = commands::checkpoint_path(&out, checkpoint.as_deref());
            let patterns = patterns.unwrap_or_else(|| cfg.figures.recall_patterns.clone());
            let steps = steps.unwrap_or_else(|| cfg.figures.recall_steps.clone());
            let path = commands::cmd_recall_grid(&cfg, &ckpt, &out, &patterns, &steps)?;
            println!("wrote {}", path.display());
        }
        Command::Heatmap {
            common,
            checkpoint,
            pattern,
            spec,
        } => {
            let cfg = common.load()?;
            let out = commands::output_dir(&cfg, common.out.as_deref());
            let ckpt = commands::checkpoint_path(&out, checkpoint.as_deref());
            let pattern = pattern.unwrap_or(cfg.figures.heatmap_pattern);
            let path = commands::cmd_heatmap(&cfg, &ckpt, &out, pattern, spec)?;
            println!("wrote {}", path.display());
        }
        Command::Verify {
            config,
            out,
            seed,
            inject_fault,
        } => {
            let cfg = config.as_deref().map(ExperimentConfig::load).transpose()?;
            let seed = seed.or(cfg.as_ref().map(|c| c.seed)).unwrap_or(0);
            let hash = cfg.as_ref().map_or_else(|| "none".to_string(), |c| c.hash_hex());
            let results = verify::run_battery(seed, &EnergyBattery::default(), inject_fault);
            for r in &results {
                println!(
                    "{} {:<22} {:>8.2}s  seed {}  {}",
                    if r.passed { "PASS" } else { "FAIL" },
                    r.name,
                    r.seconds,
                    r.seed,
                    r.detail
                );
            }
            let dir = out.or_else(|| cfg.as_ref().map(|c| commands::output_dir(c, None)));
            if let Some(dir) = dir {
                let path = dir.join("verify.csv");
                commands::ensure_dir(&dir)?;
                commands::write_file(&path, verify::report_csv(&results, &hash).as_bytes())?;
                println!("wrote {}", path.display());
            }
            let failed = results.iter().filter(|r| !r.passed).count();
            if failed > 0 {
                return Err(CliError::ChecksFailed {
                    failed,
                    total: results.len(),
                });
            }
        }
        Command::Sweep {
            common,
            kind,
            checkpoint,
            threads,
        } => {
            let cfg = common.load()?;
            let out = commands::output_dir(&cfg, common.out.as_deref());
            let res = commands::cmd_sweep(&cfg, kind, checkpoint.as_deref(), &out, threads)?;
            println!("wrote {} and {}", res.csv.display(), res.plot.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
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
