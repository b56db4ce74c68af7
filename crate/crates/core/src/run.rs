//! Run orchestration shared by the CLI and the C interface.

use std::fs;
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use crate::config::{parse_config, ChamberKind, ReportFormat, RunConfig, RunMode};
use crate::coupling::{nonlinear_test_chamber, reference_elastance_chamber, simulate_coupled, CoupledRun};
use crate::error::{Error, Result};
use crate::integrate::{simulate, Trajectory};
use crate::output::{build_report, report_json, report_text, write_csv, Report};

/// Process exit codes.
pub mod exit {
    pub const OK: u8 = 0;
    pub const VERIFY_FAILED: u8 = 1;
    pub const USAGE: u8 = 2;
    pub const CONFIG: u8 = 3;
    pub const INTEGRATION: u8 = 4;
    pub const COUPLING: u8 = 5;
    pub const IO: u8 = 6;
    pub const ANALYSIS: u8 = 7;
}

pub fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Param(_) | Error::Config(_) => exit::CONFIG,
        Error::Integration(_) => exit::INTEGRATION,
        Error::Coupling(_) => exit::COUPLING,
        Error::Io { .. } => exit::IO,
        Error::Analysis(_) => exit::ANALYSIS,
    }
}

pub fn load_config(path: &Path) -> Result<RunConfig> {
    let text = fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    Ok(parse_config(&text)?)
}

/// Re-checks a configuration after overrides.
pub fn revalidate(cfg: &RunConfig) -> Result<()> {
    cfg.params.validate()?;
    cfg.solver.validate(cfg.params.t_beat)?;
    cfg.coupling.validate()?;
    if cfg.analyze_beats == 0 || cfg.analyze_beats > cfg.beats {
        return Err(crate::error::ConfigError::Inconsistent(format!(
            "analyze_beats = {} must lie in 1..={}",
            cfg.analyze_beats, cfg.beats
        ))
        .into());
    }
    if cfg.beats > cfg.solver.max_beats {
        return Err(crate::error::ConfigError::Inconsistent(format!(
            "beats = {} exceeds solver.max_beats = {}",
            cfg.beats, cfg.solver.max_beats
        ))
        .into());
    }
    Ok(())
}

/// Result of one configured run.
pub struct RunOutput {
    pub trajectory: Trajectory,
    /// Present for coupled runs.
    pub coupled: Option<CoupledRun>,
}

pub fn execute(cfg: &RunConfig) -> Result<RunOutput> {
    match cfg.mode {
        RunMode::Monolithic => Ok(RunOutput {
            trajectory: simulate(&cfg.params, &cfg.initial, cfg.beats, &cfg.solver)?,
            coupled: None,
        }),
        RunMode::Coupled => {
            let range = cfg.coupling.range();
            let run = match cfg.chamber {
                ChamberKind::Elastance => {
                    let ch = reference_elastance_chamber(&cfg.params, range);
                    simulate_coupled(&ch, &cfg.params, &cfg.initial, cfg.beats, &cfg.solver, &cfg.coupling)?
                }
                ChamberKind::Nonlinear => {
                    let ch = nonlinear_test_chamber(&cfg.params, cfg.nonlinear, range)?;
                    simulate_coupled(&ch, &cfg.params, &cfg.initial, cfg.beats, &cfg.solver, &cfg.coupling)?
                }
            };
            Ok(RunOutput {
                trajectory: run.trajectory.clone(),
                coupled: Some(run),
            })
        }
    }
}

pub fn report(cfg: &RunConfig, out: &RunOutput) -> Result<Report> {
    build_report(
        &cfg.name,
        &out.trajectory,
        &cfg.params,
        cfg.analyze_beats,
        cfg.solver.periodicity_tol,
    )
}

pub fn render(cfg: &RunConfig, report: &Report) -> String {
    match cfg.output.format {
        ReportFormat::Text => report_text(report),
        ReportFormat::Json => report_json(report),
    }
}

/// Files written by `write_outputs`.
pub struct Written {
    pub csv: PathBuf,
    pub report: PathBuf,
}

/// Writes `timeseries.csv` and `report.txt` or `report.json` into the output directory.
pub fn write_outputs(cfg: &RunConfig, out: &RunOutput, report: &Report) -> Result<Written> {
    let dir = &cfg.output.dir;
    let io = |path: &Path| {
        let path = path.to_path_buf();
        move |source| Error::Io { path, source }
    };
    fs::create_dir_all(dir).map_err(io(dir))?;
    let csv = dir.join("timeseries.csv");
    let file = fs::File::create(&csv).map_err(io(&csv))?;
    write_csv(BufWriter::new(file), &out.trajectory, &cfg.params).map_err(io(&csv))?;
    let name = match cfg.output.format {
        ReportFormat::Text => "report.txt",
        ReportFormat::Json => "report.json",
    };
    let report_path = dir.join(name);
    fs::write(&report_path, render(cfg, report)).map_err(io(&report_path))?;
    Ok(Written {
        csv,
        report: report_path,
    })
}
