//! Batch experiment runner for the d2md engine.

use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};

use d2md_core::experiment::{
    self, build_instance, ExperimentConfig, ReplicationObserver, SweepPoint,
};
use d2md_core::matching;
use d2md_core::model::PowerAllocation;

#[derive(Parser)]
#[command(name = "d2md", version, about = "Energy-efficient D2MD channel and power allocation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Profile {
    /// Desk-scale runs: 20 feasible replications per sweep point.
    Ci,
    /// Full-scale runs: 200 feasible replications per sweep point.
    Paper,
}

impl Profile {
    fn replications(self) -> usize {
        match self {
            Profile::Ci => 20,
            Profile::Paper => 200,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Run the experiment described by a JSON config and write a CSV table.
    Run {
        /// Path to the experiment config (JSON).
        config: PathBuf,
        /// Output CSV path.
        #[arg(long, default_value = "results.csv")]
        out: PathBuf,
        /// Override the number of feasible replications per sweep point.
        #[arg(long)]
        replications: Option<usize>,
        /// Override the base seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Replication-count profile; --replications wins if both are given.
        #[arg(long, value_enum)]
        profile: Option<Profile>,
        /// Dump matching and solver traces to stderr.
        #[arg(long)]
        trace: bool,
    },
}

fn main() -> Result<()> {
    let cli = Cli::parse();
    match cli.command {
        Command::Run {
            config,
            out,
            replications,
            seed,
            profile,
            trace,
        } => run(config, out, replications, seed, profile, trace),
    }
}

fn run(
    config_path: PathBuf,
    out: PathBuf,
    replications: Option<usize>,
    seed: Option<u64>,
    profile: Option<Profile>,
    trace: bool,
) -> Result<()> {
    let mut config = ExperimentConfig::load(&config_path)
        .with_context(|| format!("loading config {}", config_path.display()))?;
    if let Some(profile) = profile {
        config.replications = profile.replications();
    }
    if let Some(n) = replications {
        config.replications = n;
    }
    if let Some(s) = seed {
        config.base_seed = s;
    }
    if config.replications == 0 {
        bail!("replications must be at least 1");
    }

    eprintln!(
        "running '{}': {} sweep point(s), {} feasible replication(s) each, seed {}",
        config.name,
        experiment::sweep_points(&config).len(),
        config.replications,
        config.base_seed
    );

    let mut traced_points: Vec<SweepPoint> = Vec::new();
    let mut observer: Box<ReplicationObserver> = if trace {
        Box::new(move |point, seed, solution| {
            match solution {
                Some(sol) => eprintln!(
                    "trace point(power={} dBm, K={}, M={}, r={}, s={}, rates={}/{}) seed={} feasible gee={:.4} wee={:.4} outer={} dinkelbach={:.2}",
                    point.max_power_dbm,
                    point.num_groups,
                    point.num_channels,
                    point.reuse_factor,
                    point.split_factor,
                    point.min_rate_cue,
                    point.min_rate_group,
                    seed,
                    sol.metrics.gee,
                    sol.metrics.wee,
                    sol.outer_iterations,
                    sol.dinkelbach_rounds,
                ),
                None => eprintln!(
                    "trace point(power={} dBm, K={}, M={}) seed={} infeasible",
                    point.max_power_dbm, point.num_groups, point.num_channels, seed
                ),
            }
            if solution.is_some() && !traced_points.contains(point) {
                traced_points.push(*point);
                if let Ok((scenario, gains)) = build_instance_for_trace(point, seed) {
                    let probe = PowerAllocation::uniform_probe(&scenario);
                    let outcome = matching::match_with_capacities(
                        &scenario,
                        &gains,
                        &probe,
                        scenario.split_factor,
                        scenario.reuse_factor,
                    );
                    eprintln!("match trace (seed {seed}):\n{}", outcome.trace_text());
                }
            }
        })
    } else {
        Box::new(|_, _, _| {})
    };

    // the observer needs the config for instance rebuilds; capture it via a
    // thread local copy instead of borrowing across the call
    CONFIG_FOR_TRACE.with(|slot| *slot.borrow_mut() = Some(config.clone()));

    let rows = experiment::run_experiment_observed(&config, &mut observer)
        .context("running experiment")?;
    experiment::emit_csv(&rows, &out)
        .with_context(|| format!("writing CSV to {}", out.display()))?;

    for row in &rows {
        println!(
            "power={} dBm K={} M={} r={} s={} rates={}/{}: gee={} wee={} feasible={} infeasible={}",
            row.max_power_dbm,
            row.num_groups,
            row.num_channels,
            row.reuse_factor,
            row.split_factor,
            row.min_rate_cue,
            row.min_rate_group,
            experiment::format_sig6(row.mean_gee),
            experiment::format_sig6(row.mean_wee),
            row.feasible_count,
            row.infeasible_count
        );
    }
    println!("wrote {}", out.display());
    Ok(())
}

thread_local! {
    static CONFIG_FOR_TRACE: std::cell::RefCell<Option<ExperimentConfig>> =
        const { std::cell::RefCell::new(None) };
}

fn build_instance_for_trace(
    point: &SweepPoint,
    seed: u64,
) -> Result<(d2md_core::Scenario64, d2md_core::GainTable64)> {
    CONFIG_FOR_TRACE.with(|slot| {
        let borrowed = slot.borrow();
        let config = borrowed.as_ref().context("trace config not set")?;
        build_instance(config, point, seed).map_err(Into::into)
    })
}
