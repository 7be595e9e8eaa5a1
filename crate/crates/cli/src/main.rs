mod cmd;
mod config;
mod oracles;
mod run;

use std::process::ExitCode;

use anyhow::Result;
use clap::{Parser, Subcommand};

use cmd::{compare, fit, sample, stub, sweep2d, taxonomy, validate};
use config::{apply_file, Common};

#[derive(Parser)]
#[command(name = "maps", version, about = "Scene-factor sensitivity analysis of image classifiers")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Search each mesh's scene space for a configuration the oracle recognizes.
    Validate {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        opts: validate::ValidateOpts,
    },
    /// Score Latin hypercube designs and store one margin record per scene.
    Sample {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        opts: sample::SampleOpts,
    },
    /// Fit linear and polynomial surrogates per (oracle, mesh).
    Fit {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        opts: fit::FitOpts,
    },
    /// Distances between models' sensitivity profiles, with clustering.
    Compare {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        opts: compare::CompareOpts,
    },
    /// Semantic clusters, coverage and depth model over a class taxonomy.
    Taxonomy {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        opts: taxonomy::TaxonomyOpts,
    },
    /// Target-class confidence over a two-parameter grid.
    Sweep2d {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        opts: sweep2d::SweepOpts,
    },
    #[command(hide = true)]
    StubOracle(stub::StubOpts),
}

fn dispatch(command: Command) -> Result<()> {
    macro_rules! with_file {
        ($name:literal, $common:ident, $opts:ident, $f:path) => {{
            let (mut c, mut o) = ($common, $opts);
            apply_file(&mut c, &mut o, $name)?;
            $f(c, o)
        }};
    }
    match command {
        Command::Validate { common, opts } => with_file!("validate", common, opts, validate::run),
        Command::Sample { common, opts } => with_file!("sample", common, opts, sample::run),
        Command::Fit { common, opts } => with_file!("fit", common, opts, fit::run),
        Command::Compare { common, opts } => with_file!("compare", common, opts, compare::run),
        Command::Taxonomy { common, opts } => with_file!("taxonomy", common, opts, taxonomy::run),
        Command::Sweep2d { common, opts } => with_file!("sweep2d", common, opts, sweep2d::run),
        Command::StubOracle(opts) => stub::run(opts),
    }
}

fn main() -> ExitCode {
    match dispatch(Cli::parse().command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
