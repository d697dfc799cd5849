use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use sgp_bench::config::{ExperimentConfig, KnotInit, KnotSelection, ModelKind, RosterEntry};
use sgp_bench::demos::{spike_demo, synth_demo};
use sgp_bench::experiment::{emit_results, run_experiment, summary_text};
use sgp_bench::{BenchError, Result};
use sparse_gp::knots::{OatConfig, ProposalMethod};
use sparse_gp::optimizer::OptimizerConfig;

#[derive(Parser)]
#[command(name = "sgp-bench", version, about = "Sparse GP benchmark driver")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    #[arg(long, global = true)]
    verbose: bool,
}

#[derive(Clone, Copy, ValueEnum)]
enum ProposalArg {
    Bo,
    Rs,
}

#[derive(Clone, Copy, ValueEnum)]
enum ObjectiveArg {
    Vfe,
    Fic,
}

#[derive(Args)]
struct Common {
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    max_knots: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Fit a single OAT model on run 0 of a configured dataset.
    Fit {
        #[arg(long)]
        config: PathBuf,
        #[command(flatten)]
        common: Common,
        #[arg(long, value_enum, default_value = "bo")]
        proposal: ProposalArg,
        #[arg(long, value_enum, default_value = "vfe")]
        objective: ObjectiveArg,
    },
    /// Run every roster model on every split.
    Experiment {
        #[arg(long)]
        config: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// Five-knot 1-D fit and a sixth-knot ELBO sweep, written as CSV.
    SpikeDemo {
        #[command(flatten)]
        common: Common,
    },
    /// OAT-BO fit and simultaneous refinement on 300 synthetic 1-D points.
    SynthDemo {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_enum, default_value = "bo")]
        proposal: ProposalArg,
    },
}

fn apply(cfg: &mut ExperimentConfig, common: &Common) {
    if let Some(s) = common.seed {
        cfg.rng_seed = s;
    }
    if let Some(o) = &common.out {
        cfg.output_dir = o.clone();
    }
    if let Some(k) = common.max_knots {
        cfg.oat.max_knots = k;
    }
}

fn write(path: &Path, contents: &str) -> Result<()> {
    fs::write(path, contents).map_err(|e| BenchError::Io(format!("{}: {e}", path.display())))
}

fn experiment(cfg: &ExperimentConfig, verbose: bool) -> Result<bool> {
    if verbose {
        eprintln!("{} runs x {} models on {}", cfg.n_runs, cfg.roster.len(), cfg.dataset.display());
    }
    let outcome = run_experiment(cfg)?;
    emit_results(&outcome, &cfg.output_dir)?;
    print!("{}", summary_text(&outcome));
    if verbose {
        eprintln!("wrote {}", cfg.output_dir.display());
    }
    Ok(outcome.failures() == 0)
}

fn run(cli: Cli) -> Result<bool> {
    match cli.command {
        Command::Experiment { config, common } => {
            let mut cfg = ExperimentConfig::from_json_file(&config)?;
            apply(&mut cfg, &common);
            experiment(&cfg, cli.verbose)
        }
        Command::Fit { config, common, proposal, objective } => {
            let mut cfg = ExperimentConfig::from_json_file(&config)?;
            apply(&mut cfg, &common);
            let selection = match proposal {
                ProposalArg::Bo => KnotSelection::OatBo,
                ProposalArg::Rs => KnotSelection::OatRs,
            };
            let kind = match objective {
                ObjectiveArg::Vfe => ModelKind::Vfe,
                ObjectiveArg::Fic => ModelKind::Fic,
            };
            cfg.roster = vec![RosterEntry::new("model", selection, kind, KnotInit::Kmeans)];
            cfg.n_runs = 1;
            experiment(&cfg, cli.verbose)
        }
        Command::SpikeDemo { common } => {
            let out = common.out.unwrap_or_else(|| PathBuf::from("."));
            fs::create_dir_all(&out)?;
            let sweep = spike_demo(100, 501, common.seed.unwrap_or(0), &OptimizerConfig::default())?;
            write(&out.join("spike.csv"), &sweep.to_csv())?;
            println!("five-knot ELBO {:.6}", sweep.baseline);
            for c in &sweep.checks {
                println!(
                    "knot {:>8.4}: at {:.6}  -{:.2}: {:.6}  +{:.2}: {:.6}  {}",
                    c.knot,
                    c.at_knot,
                    sweep.offset,
                    c.left,
                    sweep.offset,
                    c.right,
                    if c.is_local_max() { "local max" } else { "not a local max" }
                );
            }
            Ok(true)
        }
        Command::SynthDemo { common, proposal } => {
            let out = common.out.unwrap_or_else(|| PathBuf::from("."));
            fs::create_dir_all(&out)?;
            let oat = OatConfig {
                max_knots: common.max_knots.unwrap_or(80),
                proposal: match proposal {
                    ProposalArg::Bo => ProposalMethod::Bo,
                    ProposalArg::Rs => ProposalMethod::Rs,
                },
                ..OatConfig::default()
            };
            let fit = synth_demo(common.seed.unwrap_or(0), &oat, &OptimizerConfig::default())?;
            write(&out.join("synth_data.csv"), &fit.data_csv())?;
            write(&out.join("synth_curve.csv"), &fit.curve_csv())?;
            write(&out.join("synth_knots.csv"), &fit.knots_csv())?;
            println!(
                "OAT knots {}  ELBO {:.4}  refined ELBO {:.4}",
                fit.oat_knots.len(),
                fit.oat_objective,
                fit.refined_objective
            );
            Ok(true)
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => {
            eprintln!("one or more models failed; see the summary");
            ExitCode::FAILURE
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
