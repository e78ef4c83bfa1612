//! Command-line front end: run simulations, compare frame directories and
//! inspect compiled parameters.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Context;
use clap::{Args, Parser, Subcommand};
use newsflow::config::RunConfig;
use newsflow::news_params::dump_table;
use newsflow::output::compare_dirs;
use newsflow::scenario::{run_config, Scenario};
use newsflow::timestep::Scheme;
use newsflow::Error;

#[derive(Parser)]
#[command(name = "newsflow", version, about = "2D NEWS macroscopic traffic simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the configured scenario and write frames and summaries.
    Simulate(ConfigArgs),
    /// Compare two frame directories.
    Compare {
        a: PathBuf,
        b: PathBuf,
        /// Write difference frames and report.txt here.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Print the per-intersection parameter table and time step candidates.
    Params {
        #[command(flatten)]
        config: ConfigArgs,
        /// Also write the table and one raster per parameter to this directory.
        #[arg(long, value_name = "DIR")]
        dump: Option<PathBuf>,
    },
}

#[derive(Args)]
struct ConfigArgs {
    #[arg(long, short)]
    config: PathBuf,
    /// Override a config key, e.g. `--set grid.nx=24`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

impl ConfigArgs {
    fn load(&self) -> newsflow::Result<RunConfig> {
        let mut cfg = RunConfig::load(&self.config)?;
        // override paths are relative to the working directory
        for o in &self.overrides {
            let (k, v) = o
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("override `{o}` is not KEY=VALUE")))?;
            cfg.set(k.trim(), v.trim(), Path::new("."))?;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

fn exit_code(err: &anyhow::Error) -> u8 {
    match err.downcast_ref::<Error>() {
        Some(Error::BoundViolation { .. }) => 4,
        Some(Error::Validation(_)) | Some(Error::Shape(_)) => 3,
        _ => 2,
    }
}

fn simulate(args: &ConfigArgs) -> anyhow::Result<()> {
    let cfg = args.load()?;
    std::fs::create_dir_all(&cfg.output)
        .with_context(|| format!("creating {}", cfg.output.display()))?;
    std::fs::write(cfg.output.join("config.txt"), cfg.to_text())?;
    let set = run_config(&cfg)?;
    for r in &set.outcomes {
        let p = &r.timestep.plan;
        println!(
            "{}: dt = {:.4} s ({}), K = {}, {} steps, {} rhs evaluations, {:.3} vehicles at end, {:.2} s",
            r.scheme.name(),
            p.dt_general,
            r.timestep.binding,
            p.subcycles,
            r.stats.steps,
            r.stats.rhs_evaluations(),
            r.final_state.total_vehicles(),
            r.wall_time.as_secs_f64()
        );
    }
    if let Some(c) = &set.comparison {
        println!("max |split - unsplit| / max |unsplit| = {:.4e}", c.max_relative());
    }
    println!("output in {}", cfg.output.display());
    Ok(())
}

fn params(args: &ConfigArgs, dump: Option<&Path>) -> anyhow::Result<()> {
    let cfg = args.load()?;
    let sc = Scenario::load(&cfg)?;
    let table = dump_table(&sc.network, &sc.params);
    print!("{table}");
    for scheme in [Scheme::Split, Scheme::Unsplit] {
        let t = sc.plan(&cfg, scheme)?;
        eprintln!(
            "{}: advection {:.4} s, mixing {}, io {:.4} s -> dt {:.4} s ({}), K = {}",
            scheme.name(),
            t.dt_advection,
            t.dt_mixing.map_or("none".into(), |v| format!("{v:.4} s")),
            t.dt_io,
            t.plan.dt_general,
            t.binding,
            t.plan.subcycles
        );
    }
    if let Some(dir) = dump {
        std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
        std::fs::write(dir.join("intersections.tsv"), &table)?;
        for (name, values) in sc.fields.named_rasters() {
            std::fs::write(dir.join(format!("{name}.csv")), sc.fields.dump_raster(&values))?;
        }
        eprintln!("parameter dump in {}", dir.display());
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Simulate(args) => simulate(args),
        Command::Compare { a, b, out } => compare_dirs(a, b, out.as_deref())
            .map(|r| print!("{}", r.to_text()))
            .map_err(Into::into),
        Command::Params { config, dump } => params(config, dump.as_deref()),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            log::error!("{e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
