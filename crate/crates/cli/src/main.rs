//! `bench`: sweep runner, summarizer and test-image writer.

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Parser, Subcommand};
use dgvc::experiment::{parse_results_csv, write_outputs, write_plot_data, write_summary_csv, Status};
use dgvc::{run_sweep, summarize, synthesize_test_image, ExperimentSpec, ImageKind};

#[derive(Parser)]
#[command(name = "bench", version, about = "One-bit recovery benchmark harness")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the sweep described by a spec file.
    Run {
        #[arg(long)]
        spec: PathBuf,
        /// Overrides `output_dir` from the spec file.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Summarize a results CSV into per-(rate, algorithm) medians.
    Summarize {
        csv: PathBuf,
        /// Also write the plot data to this file.
        #[arg(long)]
        plot: Option<PathBuf>,
    },
    /// Write a synthetic test image as PGM.
    Image {
        #[arg(long)]
        kind: ImageKind,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 32)]
        rows: usize,
        #[arg(long, default_value_t = 32)]
        cols: usize,
        #[arg(long, default_value_t = 1)]
        seed: u64,
    },
}

fn workers_from_env() -> anyhow::Result<Option<usize>> {
    match std::env::var("BENCH_WORKERS") {
        Ok(v) => {
            let w: usize = v.trim().parse().with_context(|| format!("BENCH_WORKERS='{v}' is not a count"))?;
            if w == 0 {
                bail!("BENCH_WORKERS must be at least 1");
            }
            Ok(Some(w))
        }
        Err(_) => Ok(None),
    }
}

fn run(cli: Cli) -> anyhow::Result<bool> {
    match cli.command {
        Command::Run { spec, out } => {
            let mut sweep =
                ExperimentSpec::from_file(&spec).with_context(|| format!("reading spec {}", spec.display()))?;
            if let Some(dir) = out {
                sweep.output_dir = dir;
            }
            if let Some(w) = workers_from_env()? {
                sweep.workers = Some(w);
            }
            let rows = run_sweep(&sweep)?;
            let files = write_outputs(&rows, &sweep.output_dir)?;
            let failed = rows.iter().filter(|r| r.status == Status::Failed).count();
            println!("{} cells, {failed} failed", rows.len());
            println!("results: {}", files.results.display());
            println!("summary: {}", files.summary.display());
            println!("plot data: {}", files.plot.display());
            Ok(failed == 0)
        }
        Command::Summarize { csv, plot } => {
            let text = std::fs::read_to_string(&csv).with_context(|| format!("reading {}", csv.display()))?;
            let summary = summarize(&parse_results_csv(&text)?)?;
            let mut stdout = std::io::stdout().lock();
            write_summary_csv(&summary, &mut stdout)?;
            if let Some(path) = plot {
                let mut buf = Vec::new();
                write_plot_data(&summary, &mut buf)?;
                std::fs::write(&path, buf).with_context(|| format!("writing {}", path.display()))?;
            }
            Ok(summary.iter().all(|s| s.failures == 0))
        }
        Command::Image { kind, out, rows, cols, seed } => {
            let image = synthesize_test_image(kind, rows, cols, seed)?;
            image.write_pgm(&out).with_context(|| format!("writing {}", out.display()))?;
            Ok(true)
        }
    }
}

fn main() -> ExitCode {
    env_logger::init();
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
