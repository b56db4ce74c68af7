use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use lumpcirc::config::{ChamberKind, ReportFormat, RunConfig, RunMode};
use lumpcirc::run::{self, exit};
use lumpcirc::{verify, Error};

#[derive(Parser, Debug)]
#[command(name = "lumpcirc", version, about = "Closed-loop circulation model with an energy ledger")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Run the configured model, write timeseries.csv and a report.
    Simulate(Common),
    /// Run with the left ventricle replaced by an external chamber.
    Couple {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_enum)]
        chamber: Chamber,
        /// Root-find tolerance on the volume mismatch [mL].
        #[arg(long)]
        tol: Option<f64>,
    },
    /// Simulate and print the energy report to stdout.
    EnergyReport(Common),
    /// Run the invariant and audit suite; exit 1 on any failure.
    Verify(Common),
}

#[derive(Args, Debug)]
struct Common {
    #[arg(long)]
    config: PathBuf,
    /// Beats to simulate.
    #[arg(long)]
    beats: Option<usize>,
    /// Trailing beats to analyze.
    #[arg(long)]
    analyze_beats: Option<usize>,
    /// Time step [s].
    #[arg(long)]
    dt: Option<f64>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum)]
    format: Option<Format>,
}

#[derive(ValueEnum, Clone, Copy, Debug)]
enum Chamber {
    Elastance,
    Nonlinear,
}

#[derive(ValueEnum, Clone, Copy, Debug)]
enum Format {
    Text,
    Json,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { exit::USAGE } else { exit::OK });
        }
    };
    match dispatch(cli.command) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(run::exit_code(&e))
        }
    }
}

fn configure(common: &Common) -> Result<RunConfig, Error> {
    let mut cfg = run::load_config(&common.config)?;
    if let Some(beats) = common.beats {
        cfg.beats = beats;
        cfg.analyze_beats = cfg.analyze_beats.min(beats);
    }
    if let Some(n) = common.analyze_beats {
        cfg.analyze_beats = n;
    }
    if let Some(dt) = common.dt {
        cfg.solver.dt = dt;
        if cfg.solver.sample_stride < dt {
            cfg.solver.sample_stride = dt;
        }
    }
    if let Some(dir) = &common.out {
        cfg.output.dir = dir.clone();
    }
    if let Some(f) = common.format {
        cfg.output.format = match f {
            Format::Text => ReportFormat::Text,
            Format::Json => ReportFormat::Json,
        };
    }
    run::revalidate(&cfg)?;
    Ok(cfg)
}

fn simulate_and_write(cfg: &RunConfig) -> Result<u8, Error> {
    let out = run::execute(cfg)?;
    let report = run::report(cfg, &out)?;
    let written = run::write_outputs(cfg, &out, &report)?;
    println!("wrote {}", written.csv.display());
    println!("wrote {}", written.report.display());
    Ok(exit::OK)
}

fn dispatch(command: Command) -> Result<u8, Error> {
    match command {
        Command::Simulate(common) => simulate_and_write(&configure(&common)?),
        Command::Couple { common, chamber, tol } => {
            let mut cfg = configure(&common)?;
            cfg.mode = RunMode::Coupled;
            cfg.chamber = match chamber {
                Chamber::Elastance => ChamberKind::Elastance,
                Chamber::Nonlinear => ChamberKind::Nonlinear,
            };
            if let Some(tol) = tol {
                cfg.coupling.tol = tol;
            }
            run::revalidate(&cfg)?;
            simulate_and_write(&cfg)
        }
        Command::EnergyReport(common) => {
            let cfg = configure(&common)?;
            let out = run::execute(&cfg)?;
            let report = run::report(&cfg, &out)?;
            print!("{}", run::render(&cfg, &report));
            Ok(exit::OK)
        }
        Command::Verify(common) => {
            let cfg = configure(&common)?;
            let checks = verify::verify(&cfg)?;
            match cfg.output.format {
                ReportFormat::Text => print!("{}", verify::render(&checks)),
                ReportFormat::Json => println!(
                    "{}",
                    serde_json::to_string_pretty(&checks).expect("checks serialize")
                ),
            }
            Ok(if verify::all_passed(&checks) {
                exit::OK
            } else {
                exit::VERIFY_FAILED
            })
        }
    }
}
