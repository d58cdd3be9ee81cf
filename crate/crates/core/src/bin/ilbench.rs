use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Parser, Subcommand, ValueEnum};

use ilbench::cliff::{build_cliff, CliffConfig};
use ilbench::harness::{emit_outputs, run_experiment, ExperimentConfig};
use ilbench::mdp::MdpBundle;
use ilbench::verify::{run_suite, Suite};

#[derive(Parser)]
#[command(name = "ilbench", version, about = "Tabular imitation learning under annotation budgets")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run an experiment described by a JSON config.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Worker threads; defaults to all cores.
        #[arg(long, env = "ILBENCH_THREADS")]
        threads: Option<usize>,
        /// Output directory; overrides `output_dir` in the config.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run the randomized property checks and print a pass/fail table.
    Verify {
        #[arg(long, value_enum, default_value_t = SuiteArg::All)]
        suite: SuiteArg,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Write a cliff MDP with its expert policy as JSON.
    Cliff {
        #[arg(long, default_value = "figure2")]
        preset: String,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum SuiteArg {
    Lemmas,
    Bounds,
    All,
}

fn main() -> ExitCode {
    match real_main() {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

fn real_main() -> anyhow::Result<ExitCode> {
    match Cli::parse().command {
        Command::Run { config, threads, out } => {
            let cfg = ExperimentConfig::read(&config).with_context(|| format!("reading {}", config.display()))?;
            let Some(dir) = out.or_else(|| cfg.output_dir.clone()) else {
                bail!("no output directory: pass --out or set output_dir in the config");
            };
            let result = run_experiment(&cfg, threads)?;
            for path in emit_outputs(&result, &cfg, &dir)? {
                println!("wrote {}", path.display());
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::Verify { suite, seed } => {
            let suite = match suite {
                SuiteArg::Lemmas => Suite::Lemmas,
                SuiteArg::Bounds => Suite::Bounds,
                SuiteArg::All => Suite::All,
            };
            let outcomes = run_suite(suite, seed);
            let width = outcomes.iter().map(|o| o.name.len()).max().unwrap_or(0);
            let mut all = true;
            for o in &outcomes {
                all &= o.passed;
                println!(
                    "{:<4} {:<width$}  {:>7.2}s  {}",
                    if o.passed { "PASS" } else { "FAIL" },
                    o.name,
                    o.seconds,
                    o.detail
                );
            }
            Ok(if all { ExitCode::SUCCESS } else { ExitCode::FAILURE })
        }
        Command::Cliff { preset, out } => {
            let world = build_cliff(&CliffConfig::preset(&preset)?)?;
            MdpBundle::new(&world.mdp, Some(&world.expert), None).write(&out)?;
            println!("wrote {} ({} states)", out.display(), world.mdp.num_states());
            Ok(ExitCode::SUCCESS)
        }
    }
}
