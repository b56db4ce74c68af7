//! Time-series CSV and run reports.

use std::io::{self, Write};

use serde::{Deserialize, Serialize};

use crate::energy::{
    balance_residual_of, clinical_from_summary, energy_series, power_structure, stored_energy_rate,
    summarize_series, ClinicalEstimate, EnergySnapshot, PowerStructure, WorkSummary,
};
use crate::error::Error;
use crate::integrate::{detect_periodic_regime, ClosureMode, Trajectory};
use crate::model::{CirculationState, DerivedState, ModelParams};

/// CSV column names: time, c1, c2, then the energy ledger.
pub fn csv_header() -> Vec<&'static str> {
    let mut cols = vec!["t"];
    cols.extend(CirculationState::NAMES);
    cols.extend(DerivedState::NAMES);
    cols.extend(EnergySnapshot::COLUMNS);
    cols
}

/// Writes one row per sample. LF line endings, `{:.12e}` numbers.
pub fn write_csv<W: Write>(mut w: W, traj: &Trajectory, params: &ModelParams) -> io::Result<()> {
    writeln!(w, "{}", csv_header().join(","))?;
    for s in &traj.samples {
        let snap = crate::energy::snapshot_with(s.t, &s.state, &s.derived, params, traj.mode);
        let dm_dt = stored_energy_rate(s, params, traj.mode);
        let mut row = String::with_capacity(64 * 20);
        row.push_str(&format!("{:.12e}", s.t));
        let values = s
            .state
            .to_array()
            .into_iter()
            .chain(s.derived.to_array())
            .chain(snap.values(dm_dt));
        for v in values {
            row.push_str(&format!(",{v:.12e}"));
        }
        writeln!(w, "{row}")?;
    }
    w.flush()
}

/// Parsed CSV: header and numeric rows.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub header: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

impl Table {
    pub fn column(&self, name: &str) -> Option<Vec<f64>> {
        let i = self.header.iter().position(|h| h == name)?;
        Some(self.rows.iter().map(|r| r[i]).collect())
    }
}

pub fn read_csv(text: &str) -> Result<Table, String> {
    let mut lines = text.lines();
    let header: Vec<String> = lines
        .next()
        .ok_or("empty file")?
        .split(',')
        .map(str::to_string)
        .collect();
    let mut rows = Vec::new();
    for (i, line) in lines.enumerate() {
        let row = line
            .split(',')
            .map(|f| f.parse::<f64>().map_err(|e| format!("row {}: {e}", i + 1)))
            .collect::<Result<Vec<_>, _>>()?;
        if row.len() != header.len() {
            return Err(format!("row {}: {} fields, header has {}", i + 1, row.len(), header.len()));
        }
        rows.push(row);
    }
    Ok(Table { header, rows })
}

/// Reference daily-work figures for comparison, in kJ. Errors are signed fractions.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReferenceFigures {
    pub total_kj: f64,
    pub lv_kj: f64,
    pub rv_kj: f64,
    pub atria_kj: f64,
    pub clinical_a_kj: f64,
    pub clinical_a_err_total: f64,
    pub clinical_a_err_lv: f64,
    pub clinical_b_kj: f64,
    pub clinical_b_err_total: f64,
    pub clinical_b_err_lv: f64,
}

pub const REFERENCE: ReferenceFigures = ReferenceFigures {
    total_kj: 182.5,
    lv_kj: 155.9,
    rv_kj: 24.8,
    atria_kj: 1.8,
    clinical_a_kj: 152.4,
    clinical_a_err_total: -0.16,
    clinical_a_err_lv: -0.02,
    clinical_b_kj: 138.8,
    clinical_b_err_total: -0.24,
    clinical_b_err_lv: -0.11,
};

/// Relative tolerance on |W_act + W_diss| / W_act at periodic regime.
pub const WORK_BALANCE_TOL: f64 = 0.01;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PeriodicitySummary {
    pub tol: f64,
    pub converged: bool,
    pub beat_index: usize,
    pub last_distance: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BalanceSummary {
    pub max_abs: f64,
    pub dissipation_scale: f64,
    pub normalized: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub name: String,
    pub mode: ClosureMode,
    pub beats_simulated: usize,
    pub analyzed_beats: usize,
    /// Absent when fewer than two beats were simulated.
    pub periodicity: Option<PeriodicitySummary>,
    pub work: WorkSummary,
    /// `None` for a passive heart.
    pub work_balance_ok: Option<bool>,
    pub balance: BalanceSummary,
    pub structure: PowerStructure,
    pub clinical: Option<ClinicalEstimate>,
    /// Why `clinical` is absent.
    pub clinical_note: Option<String>,
    pub reference: ReferenceFigures,
}

/// Analyzes the last `analyze_beats` beats of `traj`.
pub fn build_report(
    name: &str,
    traj: &Trajectory,
    params: &ModelParams,
    analyze_beats: usize,
    periodic_tol: f64,
) -> Result<Report, Error> {
    if analyze_beats == 0 || analyze_beats > traj.beats() {
        return Err(Error::Analysis(format!(
            "cannot analyze {analyze_beats} beats of a {}-beat trajectory",
            traj.beats()
        )));
    }
    let periodicity = if traj.beats() >= 2 {
        let p = detect_periodic_regime(traj, periodic_tol)?;
        Some(PeriodicitySummary {
            tol: periodic_tol,
            converged: p.converged,
            beat_index: p.beat_index,
            last_distance: *p.distances.last().unwrap_or(&f64::NAN),
        })
    } else {
        None
    };
    let window = traj.last_beats(analyze_beats);
    let series = energy_series(&window, params);
    let work = summarize_series(&window, &series, periodic_tol)?;
    let residual = balance_residual_of(&series);
    let (clinical, clinical_note) = match clinical_from_summary(&window, &work) {
        Ok(c) => (Some(c), None),
        Err(e) => (None, Some(e.to_string())),
    };
    Ok(Report {
        name: name.to_string(),
        mode: traj.mode,
        beats_simulated: traj.beats(),
        analyzed_beats: analyze_beats,
        periodicity,
        work_balance_ok: (!work.degenerate).then(|| work.work_balance.abs() <= WORK_BALANCE_TOL),
        work,
        balance: BalanceSummary {
            max_abs: residual.max_abs,
            dissipation_scale: residual.dissipation_scale,
            normalized: residual.normalized,
        },
        structure: power_structure(&series),
        clinical,
        clinical_note,
        reference: REFERENCE,
    })
}

pub fn report_json(report: &Report) -> String {
    serde_json::to_string_pretty(report).expect("report serializes")
}

pub fn report_text(r: &Report) -> String {
    let w = &r.work;
    let mut s = String::new();
    let mut line = |text: String| {
        s.push_str(&text);
        s.push('\n');
    };
    let mode = match r.mode {
        ClosureMode::Monolithic => "monolithic",
        ClosureMode::Coupled => "coupled",
    };
    line(format!("run            {} ({mode})", r.name));
    line(format!(
        "beats          {} simulated, last {} analyzed",
        r.beats_simulated, r.analyzed_beats
    ));
    match &r.periodicity {
        Some(p) if p.converged => line(format!(
            "periodic       from beat {} (tol {:.1e}, last distance {:.2e})",
            p.beat_index, p.tol, p.last_distance
        )),
        Some(p) => line(format!(
            "periodic       not reached in {} beats (tol {:.1e}, last distance {:.2e})",
            p.beat_index, p.tol, p.last_distance
        )),
        None => line("periodic       not checked (fewer than 2 beats)".into()),
    }
    line(String::new());
    line("work over analyzed window [mmHg mL] / [J]".into());
    line(format!("  W_act        {:>14.4} {:>12.6}", w.w_act, w.w_act_joule));
    line(format!("  W_diss       {:>14.4} {:>12.6}", w.w_diss, w.w_diss_joule));
    line(format!("  W_ex         {:>14.4}", w.w_ex));
    let verdict = match r.work_balance_ok {
        None => "n/a (no active work)".to_string(),
        Some(ok) => format!(
            "{} (|W_act + W_diss| / W_act = {:.3e}, limit {:.0e})",
            if ok { "pass" } else { "FAIL" },
            w.work_balance.abs(),
            WORK_BALANCE_TOL
        ),
    };
    line(format!("  balance      {verdict}"));
    line(format!(
        "  ledger       max residual {:.3e}, normalized {:.3e}",
        r.balance.max_abs, r.balance.normalized
    ));
    line(String::new());
    line(format!(
        "daily work [kJ]      model {:>8.1}   reference {:>8.1}",
        w.daily_work_kj, r.reference.total_kj
    ));
    let c = w.daily_work_chambers_kj;
    let rows = [
        ("LV", c[1], Some(r.reference.lv_kj)),
        ("RV", c[3], Some(r.reference.rv_kj)),
        ("LA", c[0], None),
        ("RA", c[2], None),
        ("atria", c[0] + c[2], Some(r.reference.atria_kj)),
    ];
    for (name, model, reference) in rows {
        let reference = reference.map_or(String::new(), |v| format!("{v:>8.1}"));
        line(format!("  {name:<6}               {model:>8.1}             {reference}"));
    }
    line(format!(
        "  mean power           {:.4} W",
        w.mean_active_power_watt
    ));
    line(String::new());
    match (&r.clinical, &r.clinical_note) {
        (Some(c), _) => {
            line(format!(
                "clinical estimates   SV {:.1} mL, p_mean {:.1} mmHg, p_max {:.1}, p_min {:.1}",
                c.stroke_volume, c.p_mean, c.p_max, c.p_min
            ));
            line(format!(
                "  (a) p_mean SV      {:>8.1} kJ/day  err vs total {:+.1}%  vs LV {:+.1}%   reference {:.1} kJ, {:+.0}% / {:+.0}%",
                c.daily_a_kj,
                100.0 * c.err_a_total,
                100.0 * c.err_a_lv,
                r.reference.clinical_a_kj,
                100.0 * r.reference.clinical_a_err_total,
                100.0 * r.reference.clinical_a_err_lv
            ));
            line(format!(
                "  (b) (max+2min)/3   {:>8.1} kJ/day  err vs total {:+.1}%  vs LV {:+.1}%   reference {:.1} kJ, {:+.0}% / {:+.0}%",
                c.daily_b_kj,
                100.0 * c.err_b_total,
                100.0 * c.err_b_lv,
                r.reference.clinical_b_kj,
                100.0 * r.reference.clinical_b_err_total,
                100.0 * r.reference.clinical_b_err_lv
            ));
        }
        (None, Some(note)) => line(format!("clinical estimates   skipped: {note}")),
        (None, None) => {}
    }
    line(String::new());
    line(format!(
        "power structure      active support {:.3}, dissipation support {:.3}",
        r.structure.active_support, r.structure.dissipation_support
    ));
    let e = r.structure.compartment_mean_energy;
    line(format!(
        "  mean stored energy ar_sys {:.1}, ven_sys {:.1}, ar_pul {:.1}, ven_pul {:.1}",
        e[0], e[1], e[2], e[3]
    ));
    s
}
