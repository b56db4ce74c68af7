//! Runtime audit suite behind the `verify` subcommand.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::config::RunConfig;
use crate::coupling::{
    nonlinear_test_chamber, reference_elastance_chamber, simulate_coupled, CoupledRun,
};
use crate::energy::{
    balance_refinement, balance_residual_of, clinical_from_summary, energy_series, sub_balances,
    summarize_series,
};
use crate::error::Error;
use crate::integrate::{detect_periodic_regime, simulate, Method, SolverConfig, Trajectory};
use crate::model::{total_blood_volume, CirculationState, ModelParams};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    Pass,
    Fail,
    /// Not applicable to this configuration.
    Skip,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Check {
    pub name: &'static str,
    pub status: Status,
    pub value: f64,
    pub limit: f64,
    pub detail: String,
}

impl Check {
    fn at_most(name: &'static str, value: f64, limit: f64, detail: impl Into<String>) -> Self {
        Self {
            name,
            status: if value <= limit { Status::Pass } else { Status::Fail },
            value,
            limit,
            detail: detail.into(),
        }
    }

    fn skip(name: &'static str, detail: impl Into<String>) -> Self {
        Self {
            name,
            status: Status::Skip,
            value: f64::NAN,
            limit: f64::NAN,
            detail: detail.into(),
        }
    }
}

pub fn all_passed(checks: &[Check]) -> bool {
    checks.iter().all(|c| c.status != Status::Fail)
}

/// Uniform random state over a physiological box, for identity audits.
pub fn random_state<R: Rng>(rng: &mut R, params: &ModelParams) -> (f64, CirculationState) {
    let t = rng.gen_range(0.0..params.t_beat);
    let mut a = [0.0; CirculationState::LEN];
    for v in &mut a[0..4] {
        *v = rng.gen_range(1.0..250.0);
    }
    for p in &mut a[4..8] {
        *p = rng.gen_range(-5.0..150.0);
    }
    for q in &mut a[8..12] {
        *q = rng.gen_range(-600.0..600.0);
    }
    (t, CirculationState::from_array(a))
}

pub const SUB_BALANCE_SAMPLES: usize = 1000;
pub const SUB_BALANCE_TOL: f64 = 1e-12;
pub const BALANCE_TOL: f64 = 1e-3;
pub const DRIFT_TOL: f64 = 1e-10;
pub const WORK_BALANCE_TOL: f64 = 1e-2;
pub const EXTERNAL_TOL: f64 = 1e-6;
pub const COUPLING_MATCH_TOL: f64 = 1e-3;
pub const POWER_AUDIT_TOL: f64 = 1e-3;

/// Runs every audit on the configured model. Errors only on a failed run.
pub fn verify(cfg: &RunConfig) -> Result<Vec<Check>, Error> {
    let params = &cfg.params;
    let mut checks = Vec::new();

    checks.push(sub_balance_check(params));

    let traj = simulate(params, &cfg.initial, cfg.beats, &cfg.solver)?;
    checks.push(drift_check(&traj, params));
    checks.push(dissipation_check(&traj, params));

    let last = traj.last_beats(1);
    let series = energy_series(&last, params);
    let residual = balance_residual_of(&series);
    checks.push(Check::at_most(
        "energy_balance",
        residual.normalized,
        BALANCE_TOL,
        format!("max |residual| {:.3e} over last beat", residual.max_abs),
    ));
    if cfg.solver.method == Method::Rk4 && last.len() > 4 {
        let r = balance_refinement(&last, params);
        let dev = (r.ratio - 4.0).abs();
        checks.push(Check::at_most(
            "balance_refinement",
            dev,
            0.5,
            format!("defect ratio {:.3} at halved stride ({} switch intervals skipped)", r.ratio, r.skipped),
        ));
    } else {
        checks.push(Check::skip("balance_refinement", "needs fixed-step samples"));
    }

    let tol = cfg.solver.periodicity_tol;
    let periodic = if traj.beats() >= 2 {
        let p = detect_periodic_regime(&traj, tol)?;
        checks.push(Check {
            name: "periodicity",
            status: if p.converged { Status::Pass } else { Status::Fail },
            value: *p.distances.last().unwrap(),
            limit: tol,
            detail: format!("first periodic beat {}", p.beat_index),
        });
        p.converged
    } else {
        checks.push(Check::skip("periodicity", "fewer than 2 beats"));
        false
    };

    let work = summarize_series(&last, &series, tol)?;
    if !periodic || work.degenerate {
        checks.push(Check::skip("work_balance", "needs a periodic, active run"));
        checks.push(Check::skip("external_work", "needs a periodic, active run"));
    } else if !params.p_ex.is_constant() {
        checks.push(Check::skip("work_balance", "external pressure varies in time"));
        checks.push(Check::skip("external_work", "external pressure varies in time"));
    } else {
        checks.push(Check::at_most(
            "work_balance",
            work.work_balance.abs(),
            WORK_BALANCE_TOL,
            format!("W_act {:.4} W_diss {:.4} mmHg mL", work.w_act, work.w_diss),
        ));
        checks.push(Check::at_most(
            "external_work",
            work.external_relative,
            EXTERNAL_TOL,
            format!("W_ex {:.3e} mmHg mL", work.w_ex),
        ));
    }

    match clinical_from_summary(&last, &work) {
        Ok(c) => {
            let ok = c.err_a_total < 0.0 && c.err_a_lv.abs() < c.err_a_total.abs() && c.power_b < c.power_a;
            checks.push(Check {
                name: "clinical_structure",
                status: if ok { Status::Pass } else { Status::Fail },
                value: c.err_a_total,
                limit: 0.0,
                detail: format!(
                    "(a) {:+.1}% total {:+.1}% LV, (b) {:+.1}% total",
                    100.0 * c.err_a_total,
                    100.0 * c.err_a_lv,
                    100.0 * c.err_b_total
                ),
            });
        }
        Err(e) => checks.push(Check::skip("clinical_structure", e.to_string())),
    }

    checks.extend(coupling_checks(cfg)?);
    Ok(checks)
}

fn sub_balance_check(params: &ModelParams) -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
    let mut worst = 0.0f64;
    let mut worst_name = "";
    for _ in 0..SUB_BALANCE_SAMPLES {
        let (t, c1) = random_state(&mut rng, params);
        for b in sub_balances(t, &c1, params) {
            if b.relative_error() > worst {
                worst = b.relative_error();
                worst_name = b.name;
            }
        }
    }
    Check::at_most(
        "sub_balances",
        worst,
        SUB_BALANCE_TOL,
        format!("{SUB_BALANCE_SAMPLES} random states, worst {worst_name}"),
    )
}

fn drift_check(traj: &Trajectory, params: &ModelParams) -> Check {
    let v0 = total_blood_volume(&traj.samples[0].state, params);
    let worst = traj
        .samples
        .iter()
        .map(|s| (total_blood_volume(&s.state, params) - v0).abs())
        .fold(0.0f64, f64::max);
    let per_beat = worst / v0 / traj.beats().max(1) as f64;
    Check::at_most("volume_drift", per_beat, DRIFT_TOL, format!("total volume {v0:.3} mL"))
}

fn dissipation_check(traj: &Trajectory, params: &ModelParams) -> Check {
    let worst = energy_series(traj, params)
        .iter()
        .flat_map(|s| s.dissipation.valves.into_iter().chain(s.dissipation.compartments))
        .fold(f64::NEG_INFINITY, f64::max);
    Check::at_most("dissipation_sign", worst, 0.0, format!("{} samples", traj.len()))
}

fn coupling_checks(cfg: &RunConfig) -> Result<Vec<Check>, Error> {
    let params = &cfg.params;
    let solver = SolverConfig {
        method: Method::Rk4,
        ..cfg.solver
    };
    if solver.validate(params.t_beat).is_err() {
        return Ok(vec![Check::skip("coupling", "solver step does not fit a fixed-step run")]);
    }
    let mono = simulate(params, &cfg.initial, 1, &solver)?;
    let range = cfg.coupling.range();
    let mut checks = Vec::new();

    let elastance = reference_elastance_chamber(params, range);
    let run = simulate_coupled(&elastance, params, &cfg.initial, 1, &solver, &cfg.coupling)?;
    let (dv, dp) = trajectory_mismatch(&mono, &run.trajectory);
    checks.push(Check::at_most(
        "coupling_match",
        dv.max(dp),
        COUPLING_MATCH_TOL,
        format!("V_lv {dv:.2e}, p_lv {dp:.2e} relative"),
    ));
    checks.push(Check::at_most(
        "coupling_constraint",
        run.max_residual,
        cfg.coupling.tol,
        "max |V_0D - V_chamber| mL",
    ));
    checks.push(power_check("power_identity_elastance", &run, params));

    let nonlinear = nonlinear_test_chamber(params, cfg.nonlinear, range)?;
    let run = simulate_coupled(&nonlinear, params, &cfg.initial, 1, &solver, &cfg.coupling)?;
    checks.push(power_check("power_identity_nonlinear", &run, params));
    Ok(checks)
}

/// Max-norm mismatch of V_lv and p_lv, each relative to the monolithic peak.
pub fn trajectory_mismatch(reference: &Trajectory, other: &Trajectory) -> (f64, f64) {
    let peak = |f: &dyn Fn(usize) -> f64| (0..reference.len()).map(f).fold(0.0f64, |m, v| m.max(v.abs()));
    let v_scale = peak(&|i| reference.samples[i].state.v_lv);
    let p_scale = peak(&|i| reference.samples[i].derived.p_lv);
    let mut dv = 0.0f64;
    let mut dp = 0.0f64;
    for (a, b) in reference.samples.iter().zip(&other.samples) {
        dv = dv.max((a.state.v_lv - b.state.v_lv).abs());
        dp = dp.max((a.derived.p_lv - b.derived.p_lv).abs());
    }
    (dv / v_scale, dp / p_scale)
}

fn power_check(name: &'static str, run: &CoupledRun, params: &ModelParams) -> Check {
    let audit = run.beat_power_audit(1);
    let series = energy_series(&run.trajectory, params);
    let diss = balance_residual_of(&series).dissipation_scale;
    Check::at_most(
        name,
        audit.difference.abs() / diss,
        POWER_AUDIT_TOL,
        format!("chamber {:.4} vs fluid {:.4} mmHg mL", audit.chamber_work, audit.fluid_work),
    )
}

pub fn render(checks: &[Check]) -> String {
    let mut out = String::new();
    for c in checks {
        let tag = match c.status {
            Status::Pass => "PASS",
            Status::Fail => "FAIL",
            Status::Skip => "SKIP",
        };
        let numbers = if c.status == Status::Skip {
            String::new()
        } else {
            format!("{:.3e} (limit {:.1e})  ", c.value, c.limit)
        };
        out.push_str(&format!("{tag}  {:<26}{numbers}{}\n", c.name, c.detail));
    }
    out
}
