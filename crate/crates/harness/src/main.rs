use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};
use skh_harness::{config_hash, read_rows, run_experiment, summarize, write_rows, ExperimentConfig, ExperimentKind, HarnessError};

#[derive(Parser)]
#[command(name = "skh", version, about = "Frank-Wolfe quadrature and kernel herding filter experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Quadrature of a random Gaussian mixture.
    Quad(RunArgs),
    /// Particle filters on a state-space model.
    Filter(RunArgs),
    /// Rao-Blackwellized filters on the conditionally linear model.
    Rbpf(RunArgs),
    /// Median, quartiles, min and max per method and N of a metrics CSV.
    Summarize {
        input: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    config: PathBuf,
    /// Overrides `experiment.output`; stdout when neither is set.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    workers: Option<usize>,
    /// Use the grid sizes of the published experiments.
    #[arg(long)]
    paper_scale: bool,
}

fn sink(path: Option<&PathBuf>) -> Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(
            File::create(p).with_context(|| format!("cannot create {}", p.display()))?,
        )),
        None => Box::new(BufWriter::new(io::stdout())),
    })
}

fn run(kind: ExperimentKind, args: &RunArgs) -> Result<()> {
    let (mut cfg, text) = ExperimentConfig::load(&args.config)?;
    if cfg.experiment.kind != kind {
        return Err(HarnessError::Config(format!(
            "config describes a `{}` experiment, not `{}`",
            cfg.experiment.kind.name(),
            kind.name()
        ))
        .into());
    }
    if args.workers == Some(0) {
        return Err(HarnessError::Config("--workers must be at least 1".into()).into());
    }
    if args.paper_scale {
        cfg.paper_scale();
    }
    let rows = run_experiment(&cfg, &config_hash(&text, args.paper_scale), args.workers)?;
    let out = args.out.as_ref().or(cfg.experiment.output.as_ref());
    write_rows(sink(out)?, &rows)?;
    Ok(())
}

fn summarize_file(input: &PathBuf, out: Option<&PathBuf>) -> Result<()> {
    let f = File::open(input).with_context(|| format!("cannot open {}", input.display()))?;
    let (summary, warnings) = summarize(&read_rows(f)?);
    for w in warnings {
        eprintln!("warning: {w}");
    }
    let mut w = csv::Writer::from_writer(sink(out)?);
    for r in &summary {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let res = match &cli.command {
        Command::Quad(a) => run(ExperimentKind::Quad, a),
        Command::Filter(a) => run(ExperimentKind::Filter, a),
        Command::Rbpf(a) => run(ExperimentKind::Rbpf, a),
        Command::Summarize { input, out } => summarize_file(input, out.as_ref()),
    };
    match res {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            let code = e.downcast_ref::<HarnessError>().map_or(1, HarnessError::exit_code);
            ExitCode::from(code as u8)
        }
    }
}
