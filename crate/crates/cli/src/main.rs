use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};

use rin::analysis::{write_aee_csv, TraceSignal};
use rin::harness::{
    analyze_checkpoint, check_output_dir, materialize, run_experiment, summarize_runs, verify_suite, write_summary_csv,
    AnalyzeOptions, ExperimentConfig, RunStatus,
};

#[derive(Parser)]
#[command(name = "rin", version, about = "Train and diagnose recurrent identity networks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the experiment described by a config file.
    Train {
        #[arg(long)]
        config: PathBuf,
        /// Replaces `seeds.model`.
        #[arg(long)]
        seed: Option<u64>,
        /// Replaces `output.dir`.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Validate the config and inputs without writing anything.
        #[arg(long)]
        dry_run: bool,
    },
    /// Write estimation-error series for a checkpoint as CSV.
    Analyze {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        checkpoint: PathBuf,
        /// Output file; stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, default_value_t = 256)]
        samples: usize,
        #[arg(long)]
        layer: Option<usize>,
        /// Trace an LSTM's memory cell instead of its output.
        #[arg(long)]
        memory_cell: bool,
    },
    /// Materialize the datasets a config describes.
    GenData {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run the gradient and expansion identity checks.
    Verify {
        /// Seeds per gradient-check configuration.
        #[arg(long, default_value_t = 10)]
        seeds: u64,
    },
    /// Summarize the metrics of finished runs.
    Report {
        #[arg(required = true)]
        runs: Vec<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn load(path: &Path) -> Result<(ExperimentConfig, String)> {
    Ok(ExperimentConfig::load(path)?)
}

fn sink(out: &Option<PathBuf>) -> Result<Box<dyn Write>> {
    Ok(match out {
        Some(p) => Box::new(BufWriter::new(File::create(p).with_context(|| format!("creating {}", p.display()))?)),
        None => Box::new(io::stdout().lock()),
    })
}

fn train(config: PathBuf, seed: Option<u64>, out: Option<PathBuf>, dry_run: bool) -> Result<ExitCode> {
    let (mut cfg, text) = load(&config)?;
    if let Some(s) = seed {
        cfg.seeds.model = s;
    }
    if let Some(dir) = out {
        cfg.output.dir = dir;
    }
    if dry_run {
        check_output_dir(&cfg.output.dir)?;
        if let rin::harness::TaskConfig::Pixel { images, labels, .. } = &cfg.task {
            for p in [images, labels] {
                if !p.is_file() {
                    bail!("{} does not exist", p.display());
                }
            }
        }
        println!("config ok: {} {}x{} -> {}", cfg.model.arch, cfg.model.layers, cfg.model.hidden, cfg.output.dir.display());
        return Ok(ExitCode::SUCCESS);
    }
    let outcome = run_experiment(&cfg, &text)?;
    let summary = |split: &str, metric: &str| {
        outcome
            .metrics
            .last(split, metric)
            .map_or(String::new(), |v| format!(" {split} {metric} {v:.6}"))
    };
    println!(
        "{:?} after {} epochs:{}{}{}",
        outcome.status,
        outcome.epochs_completed,
        summary("test", "mse"),
        summary("test", "loss"),
        summary("test", "accuracy")
    );
    Ok(match outcome.status {
        RunStatus::Diverged { .. } => ExitCode::from(3),
        _ => ExitCode::SUCCESS,
    })
}

fn run(cli: Cli) -> Result<ExitCode> {
    match cli.command {
        Command::Train {
            config,
            seed,
            out,
            dry_run,
        } => train(config, seed, out, dry_run),
        Command::Analyze {
            config,
            checkpoint,
            out,
            samples,
            layer,
            memory_cell,
        } => {
            let (cfg, _) = load(&config)?;
            let opts = AnalyzeOptions {
                samples,
                layer,
                signal: if memory_cell { TraceSignal::MemoryCell } else { TraceSignal::Output },
            };
            let a = analyze_checkpoint(&cfg, &checkpoint, &opts)?;
            write_aee_csv(sink(&out)?, &a.reports)?;
            eprintln!("aee_vs_final at T: {:e}", a.final_step_error);
            eprintln!("telescoping residual: {:e}", a.telescoping_error);
            if let Some((closed, lambda)) = a.expansion_error {
                eprintln!("expansion residual: {closed:e}, h0 + lambda residual: {lambda:e}");
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::GenData { config, out } => {
            let (cfg, _) = load(&config)?;
            for path in materialize(&cfg, &out)? {
                println!("{}", path.display());
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::Verify { seeds } => {
            let mut ok = true;
            for c in verify_suite(seeds)? {
                ok &= c.passed();
                println!(
                    "{:<5} {:<13} cases {:>4}  worst {:.3e}  tolerance {:.0e}",
                    if c.passed() { "PASS" } else { "FAIL" },
                    c.name,
                    c.cases,
                    c.worst,
                    c.tolerance
                );
            }
            Ok(if ok { ExitCode::SUCCESS } else { ExitCode::FAILURE })
        }
        Command::Report { runs, out } => {
            write_summary_csv(sink(&out)?, &summarize_runs(&runs)?)?;
            Ok(ExitCode::SUCCESS)
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
