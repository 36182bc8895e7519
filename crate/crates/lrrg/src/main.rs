use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use lrrg::commands;
use lrrg::config::{Layer, RunConfig};

#[derive(Parser)]
#[command(name = "lrrg", version, about = "Dual-loop quality-robust training on a synthetic multi-regime corpus")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate the per-regime train/val/test datasets and the auxiliary benchmark.
    GenData(Common),
    /// Extract retake pairs from metadata, grade them and report consistency.
    Curate(Common),
    /// Train one run per (mode, seed).
    Train(Common),
    /// Score trained parameters on the benchmarks.
    Eval(Common),
    /// Per-regime-pair gradient coherence and per-benchmark F1 gaps.
    Probe(Common),
}

#[derive(Args)]
struct Common {
    /// key=value config file.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// key=value overrides, applied after the config file.
    #[arg(value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

impl Common {
    fn resolve(&self) -> anyhow::Result<RunConfig> {
        let mut layers = Vec::new();
        if let Some(p) = &self.config {
            layers.push(Layer::from_file(p)?);
        }
        let mut flags = Layer::from_args(&self.overrides)?;
        if let Some(s) = self.seed {
            flags.push("seed", s);
        }
        if let Some(o) = &self.out {
            flags.push("out", o.display());
        }
        layers.push(flags);
        Ok(RunConfig::resolve(&layers, |k| std::env::var(k).ok())?)
    }
}

fn run(cli: Cli) -> anyhow::Result<()> {
    match cli.command {
        Command::GenData(c) => {
            let s = commands::gen_data(&c.resolve()?)?;
            println!("wrote {} files ({} studies)", s.files.len(), s.studies);
        }
        Command::Curate(c) => {
            let s = commands::curate(&c.resolve()?)?;
            match s.consistency_rate {
                Some(r) => println!(
                    "{} studies, {} retake pairs, consistency_rate {r:.4} ({}/{}, {} grader)",
                    s.studies, s.pairs, s.consistent, s.pairs, s.grader
                ),
                None => println!("{} studies, no qualifying retake pairs", s.studies),
            }
        }
        Command::Train(c) => {
            let s = commands::train(&c.resolve()?)?;
            for (mode, seed, loss) in s.runs {
                println!("{mode} seed {seed}: final outer loss {loss:.4}");
            }
        }
        Command::Eval(c) => {
            let s = commands::eval(&c.resolve()?)?;
            println!("wrote {} ({} rows)", s.csv.display(), s.rows.len());
        }
        Command::Probe(c) => {
            let s = commands::probe(&c.resolve()?)?;
            for (label, seed, pairs) in &s.pairs {
                let cells: Vec<String> = pairs
                    .iter()
                    .map(|p| match p.mean_cos {
                        Some(c) => format!("{}/{} {c:.3}", p.a, p.b),
                        None => format!("{}/{} undefined", p.a, p.b),
                    })
                    .collect();
                println!("{label} seed {seed}: {}", cells.join(", "));
            }
            println!("wrote {} and {}", s.coherence_csv.display(), s.gaps_csv.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
