//! `phidiv`: estimation, tests, power planning and the Monte Carlo
//! experiments, driven by a TOML config and writing CSV files plus a
//! manifest into `--out`.

mod config;
mod experiments;
mod output;
mod plot;

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Result;
use clap::{Args, Parser, Subcommand};

use config::{ExperimentConfig, Overrides};

#[derive(Debug, Parser)]
#[command(name = "phidiv", version, about = "Dual phi-divergence estimation and testing")]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Debug, Clone, Args)]
struct Common {
    /// TOML config file, or a manifest.toml from an earlier run.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Base seed; replication i uses seed + i.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, default_value = "phidiv-out")]
    out: PathBuf,
    /// Monte Carlo replications.
    #[arg(long)]
    reps: Option<usize>,
    /// Test level ε.
    #[arg(long)]
    level: Option<f64>,
}

#[derive(Debug, Subcommand)]
enum Cmd {
    /// Minimum dual (or dual at theta0) estimate with standard errors.
    Estimate(Common),
    /// Test H0: theta = theta0.
    TestSimple(Common),
    /// Test a null with coordinates fixed by `fix`.
    TestComposite(Common),
    /// Approximate power, or the sample size reaching a target power.
    PowerPlan(Common),
    /// Empirical rejection rates against the power approximation.
    PowerCurve(Common),
    /// Empirical law of the likelihood ratio under a mixture null.
    GlrEcdf(Common),
    /// Empirical law of the signed-weight dual chi-square.
    #[command(name = "dualchi2-ecdf")]
    DualChi2Ecdf(Common),
    /// Confidence region for mixture weights on a grid.
    Confreg(Common),
    /// Test for the number of mixture components, or a weight vector.
    MixtureTest(Common),
    /// Write plot.gp for the run in --out.
    PlotScript {
        #[arg(long, default_value = "phidiv-out")]
        out: PathBuf,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    Estimate,
    TestSimple,
    TestComposite,
    PowerPlan,
    PowerCurve,
    GlrEcdf,
    DualChi2Ecdf,
    ConfReg,
    MixtureTest,
    PlotScript,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Estimate => "estimate",
            Command::TestSimple => "test-simple",
            Command::TestComposite => "test-composite",
            Command::PowerPlan => "power-plan",
            Command::PowerCurve => "power-curve",
            Command::GlrEcdf => "glr-ecdf",
            Command::DualChi2Ecdf => "dualchi2-ecdf",
            Command::ConfReg => "confreg",
            Command::MixtureTest => "mixture-test",
            Command::PlotScript => "plot-script",
        }
    }

    fn plots(self) -> bool {
        matches!(self, Command::PowerCurve | Command::GlrEcdf | Command::DualChi2Ecdf)
    }
}

fn split(cmd: Cmd) -> (Command, Option<Common>, Option<PathBuf>) {
    let (command, common) = match cmd {
        Cmd::Estimate(c) => (Command::Estimate, c),
        Cmd::TestSimple(c) => (Command::TestSimple, c),
        Cmd::TestComposite(c) => (Command::TestComposite, c),
        Cmd::PowerPlan(c) => (Command::PowerPlan, c),
        Cmd::PowerCurve(c) => (Command::PowerCurve, c),
        Cmd::GlrEcdf(c) => (Command::GlrEcdf, c),
        Cmd::DualChi2Ecdf(c) => (Command::DualChi2Ecdf, c),
        Cmd::Confreg(c) => (Command::ConfReg, c),
        Cmd::MixtureTest(c) => (Command::MixtureTest, c),
        Cmd::PlotScript { out } => return (Command::PlotScript, None, Some(out)),
    };
    (command, Some(common), None)
}

fn run(cli: Cli) -> Result<()> {
    let (command, common, plot_dir) = split(cli.command);
    let Some(common) = common else {
        let path = plot::write(&plot_dir.expect("plot-script has --out"))?;
        println!("wrote {}", path.display());
        return Ok(());
    };
    let file = match &common.config {
        Some(p) => config::load(p, command)?,
        None => ExperimentConfig::default(),
    };
    let overrides = Overrides {
        seed: common.seed,
        level: common.level,
        reps: common.reps,
    };
    let resolved = config::resolve(command, file, &overrides)?;
    let outcome = experiments::run(command, &resolved)?;
    output::write_run(&common.out, command.name(), &resolved, outcome.tables)?;
    for line in &outcome.lines {
        println!("{line}");
    }
    if command.plots() {
        plot::write(&common.out)?;
    }
    println!("outputs in {}", common.out.display());
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
