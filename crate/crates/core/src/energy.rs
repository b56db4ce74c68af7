//! Mechanical-energy bookkeeping: stored energies, active, dissipated and
//! external powers, the balance dM/dt = Pi_act + Pi_diss + Pi_ex, beat work
//! integrals and the clinical mean-pressure work estimators.
//!
//! Energies are in mmHg·mL and powers in mmHg·mL/s. Conversion to SI happens
//! only in the reported summaries.

use serde::{Deserialize, Serialize};

use crate::error::Error;
use crate::integrate::{normalized_distance, ClosureMode, Sample, Trajectory};
use crate::model::{
    rhs_full, valve_resistance, Chamber, CirculationState, Compartment, DerivedState,
    ModelParams, Valve,
};

/// 1 mmHg·mL in joules.
pub const JOULE_PER_MMHG_ML: f64 = 1.33322e-4;
pub const SECONDS_PER_DAY: f64 = 86400.0;

/// Mean power [mmHg·mL/s] to work per day [kJ].
pub fn daily_work_kj(mean_power: f64) -> f64 {
    mean_power * JOULE_PER_MMHG_ML * SECONDS_PER_DAY / 1000.0
}

/// Stored energies. Arrays follow `Chamber::ALL` and `Compartment::ALL`.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct StoredEnergy {
    pub chambers: [f64; 4],
    pub elastic: [f64; 4],
    pub kinetic: [f64; 4],
    pub total: f64,
}

/// One power term per chamber, in `Chamber::ALL` order.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ChamberPower {
    pub chambers: [f64; 4],
    pub total: f64,
}

impl ChamberPower {
    fn from_terms(chambers: [f64; 4]) -> Self {
        Self {
            chambers,
            total: chambers.iter().sum(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Dissipation {
    /// `Valve::ALL` order.
    pub valves: [f64; 4],
    /// `Compartment::ALL` order.
    pub compartments: [f64; 4],
    pub total: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnergySnapshot {
    pub t: f64,
    pub mode: ClosureMode,
    pub stored: StoredEnergy,
    /// In coupled mode the LV entry is the boundary power p_lv (q_av - q_mv)
    /// and the LV stored and external terms are zero.
    pub active: ChamberPower,
    pub dissipation: Dissipation,
    pub external: ChamberPower,
}

impl EnergySnapshot {
    pub const COLUMNS: [&'static str; 35] = [
        "e_la", "e_lv", "e_ra", "e_rv",
        "e_ar_sys", "e_ven_sys", "e_ar_pul", "e_ven_pul",
        "k_ar_sys", "k_ven_sys", "k_ar_pul", "k_ven_pul",
        "m_total",
        "pi_act_la", "pi_act_lv", "pi_act_ra", "pi_act_rv", "pi_act",
        "pi_diss_mv", "pi_diss_av", "pi_diss_tv", "pi_diss_pv",
        "pi_diss_ar_sys", "pi_diss_ven_sys", "pi_diss_ar_pul", "pi_diss_ven_pul", "pi_diss",
        "pi_ex_la", "pi_ex_lv", "pi_ex_ra", "pi_ex_rv", "pi_ex",
        "dm_dt", "pi_sum", "balance_rate_defect",
    ];

    pub fn total_power(&self) -> f64 {
        self.active.total + self.dissipation.total + self.external.total
    }

    /// Values in `COLUMNS` order. `dm_dt` is supplied by the caller.
    pub fn values(&self, dm_dt: f64) -> [f64; 35] {
        let s = &self.stored;
        let mut out = [0.0; 35];
        let parts = [
            &s.chambers[..],
            &s.elastic[..],
            &s.kinetic[..],
            &[s.total],
            &self.active.chambers[..],
            &[self.active.total],
            &self.dissipation.valves[..],
            &self.dissipation.compartments[..],
            &[self.dissipation.total],
            &self.external.chambers[..],
            &[self.external.total],
            &[dm_dt, self.total_power(), dm_dt - self.total_power()],
        ];
        let mut i = 0;
        for p in parts {
            for &v in p {
                out[i] = v;
                i += 1;
            }
        }
        out
    }
}

/// Twelve storage terms and their sum.
pub fn mechanical_energy(c1: &CirculationState, params: &ModelParams) -> StoredEnergy {
    let chambers = Chamber::ALL.map(|c| {
        let ch = params.chamber(c);
        0.5 * ch.e_pass * (c1.volume(c) - ch.v0).powi(2)
    });
    let elastic = Compartment::ALL.map(|k| 0.5 * params.compartment(k).c * c1.pressure(k).powi(2));
    let kinetic = Compartment::ALL.map(|k| 0.5 * params.compartment(k).l * c1.flow(k).powi(2));
    let total = chambers.iter().chain(&elastic).chain(&kinetic).sum();
    StoredEnergy {
        chambers,
        elastic,
        kinetic,
        total,
    }
}

/// Pi_i = -E_act,i(t) (V_i - V0_i) dV_i/dt
pub fn active_power(
    t: f64,
    c1: &CirculationState,
    dc1dt: &CirculationState,
    params: &ModelParams,
) -> ChamberPower {
    ChamberPower::from_terms(Chamber::ALL.map(|c| {
        let ch = params.chamber(c);
        -ch.active_elastance(t, params.t_beat) * (c1.volume(c) - ch.v0) * dc1dt.volume(c)
    }))
}

/// Valve terms -dp^2 / R(dp) and compartment terms -R Q^2.
pub fn dissipated_power(c1: &CirculationState, c2: &DerivedState, params: &ModelParams) -> Dissipation {
    let valves = Valve::ALL.map(|v| {
        let (up, down) = v.pressures(c1, c2);
        -(up - down).powi(2) / valve_resistance(up, down, params.valve(v))
    });
    let compartments = Compartment::ALL.map(|k| -params.compartment(k).r * c1.flow(k).powi(2));
    let total = valves.iter().chain(&compartments).sum();
    Dissipation {
        valves,
        compartments,
        total,
    }
}

/// Pi_i = -p_ex(t) dV_i/dt
pub fn external_power(t: f64, dc1dt: &CirculationState, params: &ModelParams) -> ChamberPower {
    let p_ex = params.p_ex.at(t);
    ChamberPower::from_terms(Chamber::ALL.map(|c| -p_ex * dc1dt.volume(c)))
}

/// All terms at one instant, with the derived state taken as given.
pub fn snapshot_with(
    t: f64,
    c1: &CirculationState,
    c2: &DerivedState,
    params: &ModelParams,
    mode: ClosureMode,
) -> EnergySnapshot {
    let d = rhs_full(t, c1, c2, params);
    let mut stored = mechanical_energy(c1, params);
    let mut active = active_power(t, c1, &d, params);
    let mut external = external_power(t, &d, params);
    if mode == ClosureMode::Coupled {
        let lv = 1;
        stored.total -= stored.chambers[lv];
        stored.chambers[lv] = 0.0;
        active.chambers[lv] = c2.p_lv * (c2.q_av - c2.q_mv);
        active.total = active.chambers.iter().sum();
        external.chambers[lv] = 0.0;
        external.total = external.chambers.iter().sum();
    }
    EnergySnapshot {
        t,
        mode,
        stored,
        active,
        dissipation: dissipated_power(c1, c2, params),
        external,
    }
}

pub fn snapshot(t: f64, c1: &CirculationState, params: &ModelParams) -> EnergySnapshot {
    let c2 = crate::model::derived_state(t, c1, params);
    snapshot_with(t, c1, &c2, params, ClosureMode::Monolithic)
}

fn sample_snapshot(s: &Sample, params: &ModelParams, mode: ClosureMode) -> EnergySnapshot {
    snapshot_with(s.t, &s.state, &s.derived, params, mode)
}

/// Energy snapshot at every sample of the trajectory.
pub fn energy_series(traj: &Trajectory, params: &ModelParams) -> Vec<EnergySnapshot> {
    traj.samples
        .iter()
        .map(|s| sample_snapshot(s, params, traj.mode))
        .collect()
}

/// Exact rate dM/dt at a sample, from the right-hand side.
pub fn stored_energy_rate(s: &Sample, params: &ModelParams, mode: ClosureMode) -> f64 {
    let d = rhs_full(s.t, &s.state, &s.derived, params);
    let c1 = &s.state;
    let chambers: f64 = Chamber::ALL
        .iter()
        .filter(|&&c| !(mode == ClosureMode::Coupled && c == Chamber::Lv))
        .map(|&c| {
            let ch = params.chamber(c);
            ch.e_pass * (c1.volume(c) - ch.v0) * d.volume(c)
        })
        .sum();
    let vascular: f64 = Compartment::ALL
        .iter()
        .map(|&k| {
            let p = params.compartment(k);
            p.c * c1.pressure(k) * d.pressure(k) + p.l * c1.flow(k) * d.flow(k)
        })
        .sum();
    chambers + vascular
}

fn trapezoid(t: &[f64], y: &[f64]) -> f64 {
    t.windows(2)
        .zip(y.windows(2))
        .map(|(t, y)| 0.5 * (t[1] - t[0]) * (y[0] + y[1]))
        .sum()
}

fn cumulative_trapezoid(t: &[f64], y: &[f64]) -> Vec<f64> {
    let mut acc = 0.0;
    let mut out = Vec::with_capacity(t.len());
    out.push(0.0);
    for i in 1..t.len() {
        acc += 0.5 * (t[i] - t[i - 1]) * (y[i] + y[i - 1]);
        out.push(acc);
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BalanceResidual {
    pub t: Vec<f64>,
    /// r(t) = M(t) - M(t0) - int_t0^t (Pi_act + Pi_diss + Pi_ex) ds
    pub residual: Vec<f64>,
    pub max_abs: f64,
    /// int |Pi_diss| dt over the trajectory.
    pub dissipation_scale: f64,
    /// `max_abs / dissipation_scale`, 0 when both vanish.
    pub normalized: f64,
}

/// Integral energy-balance residual by trapezoidal quadrature on the samples.
pub fn balance_residual(traj: &Trajectory, params: &ModelParams) -> BalanceResidual {
    balance_residual_of(&energy_series(traj, params))
}

pub fn balance_residual_of(series: &[EnergySnapshot]) -> BalanceResidual {
    let t: Vec<f64> = series.iter().map(|s| s.t).collect();
    let power: Vec<f64> = series.iter().map(EnergySnapshot::total_power).collect();
    let diss: Vec<f64> = series.iter().map(|s| s.dissipation.total.abs()).collect();
    let integral = cumulative_trapezoid(&t, &power);
    let m0 = series.first().map_or(0.0, |s| s.stored.total);
    let residual: Vec<f64> = series
        .iter()
        .zip(&integral)
        .map(|(s, i)| s.stored.total - m0 - i)
        .collect();
    let max_abs = residual.iter().fold(0.0f64, |m, r| m.max(r.abs()));
    let dissipation_scale = trapezoid(&t, &diss);
    BalanceResidual {
        t,
        residual,
        max_abs,
        dissipation_scale,
        normalized: ratio_or_zero(max_abs, dissipation_scale),
    }
}

/// Quadrature self-convergence of the balance on smooth intervals.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BalanceRefinement {
    /// Sum of |local balance defect| over the kept intervals at stride 2h.
    pub coarse: f64,
    /// The same intervals resolved at stride h.
    pub fine: f64,
    /// coarse / fine; about 4 for trapezoidal quadrature.
    pub ratio: f64,
    pub intervals: usize,
    /// Intervals skipped because a valve switched inside them.
    pub skipped: usize,
}

/// Compares local balance defects at the trajectory stride h and at 2h.
///
/// The local defect of an interval is M(t1) - M(t0) minus the trapezoidal
/// integral of the total power over it. Intervals in which any valve changes
/// state are skipped: the power has a slope discontinuity there and the
/// local error loses an order.
pub fn balance_refinement(traj: &Trajectory, params: &ModelParams) -> BalanceRefinement {
    let series = energy_series(traj, params);
    let open: Vec<[bool; 4]> = traj
        .samples
        .iter()
        .map(|s| {
            Valve::ALL.map(|v| {
                let (up, down) = v.pressures(&s.state, &s.derived);
                up >= down
            })
        })
        .collect();
    let defect = |i: usize, j: usize| {
        let (a, b) = (&series[i], &series[j]);
        b.stored.total - a.stored.total - 0.5 * (b.t - a.t) * (a.total_power() + b.total_power())
    };
    let (mut coarse, mut fine, mut intervals, mut skipped) = (0.0, 0.0, 0, 0);
    let mut i = 0;
    while i + 2 < series.len() {
        if open[i] != open[i + 1] || open[i + 1] != open[i + 2] {
            skipped += 1;
        } else {
            coarse += defect(i, i + 2).abs();
            fine += (defect(i, i + 1) + defect(i + 1, i + 2)).abs();
            intervals += 1;
        }
        i += 2;
    }
    BalanceRefinement {
        coarse,
        fine,
        ratio: coarse / fine,
        intervals,
        skipped,
    }
}

fn ratio_or_zero(num: f64, den: f64) -> f64 {
    if num == 0.0 {
        0.0
    } else {
        num / den
    }
}

/// Beat-level work integrals and derived daily figures.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorkSummary {
    pub mode: ClosureMode,
    pub beats: usize,
    pub duration: f64,
    /// Work terms in mmHg·mL.
    pub w_act: f64,
    pub w_diss: f64,
    pub w_ex: f64,
    pub w_act_chambers: [f64; 4],
    pub w_diss_valves: [f64; 4],
    pub w_diss_compartments: [f64; 4],
    pub w_act_joule: f64,
    pub w_diss_joule: f64,
    /// (W_act + W_diss) / W_act, 0 for a degenerate zero-work window.
    pub work_balance: f64,
    /// W_ex relative to int |Pi_diss| dt.
    pub external_relative: f64,
    /// Mean active power [mmHg·mL/s] and [W].
    pub mean_active_power: f64,
    pub mean_active_power_watt: f64,
    pub daily_work_kj: f64,
    pub daily_work_chambers_kj: [f64; 4],
    /// Start-to-end state distance over the window.
    pub periodicity_distance: f64,
    pub periodic: bool,
    /// No active work at all (passive heart).
    pub degenerate: bool,
}

/// Work integrals over the whole trajectory, which must span whole beats.
///
/// `periodic` is set when the start and end states agree to `periodic_tol` in
/// the scale-normalized norm; the work balance W_act + W_diss = 0 is only
/// expected at periodic regime with constant external pressure.
pub fn work_integrals(traj: &Trajectory, params: &ModelParams, periodic_tol: f64) -> Result<WorkSummary, Error> {
    summarize_series(traj, &energy_series(traj, params), periodic_tol)
}

/// `work_integrals` with a precomputed energy series of `traj`.
pub fn summarize_series(
    traj: &Trajectory,
    series: &[EnergySnapshot],
    periodic_tol: f64,
) -> Result<WorkSummary, Error> {
    if series.len() != traj.samples.len() {
        return Err(Error::Analysis("energy series does not match the trajectory".into()));
    }
    if traj.beats() == 0 || traj.samples.len() < 2 {
        return Err(Error::Analysis("work integrals need at least one complete beat".into()));
    }
    let first = traj.samples.first().unwrap();
    let last = traj.samples.last().unwrap();
    let duration = last.t - first.t;
    let beats = traj.beats();
    if ((duration / traj.t_beat) - beats as f64).abs() > 1e-9 * beats as f64 {
        return Err(Error::Analysis(format!(
            "window of {duration} s is not a whole number of {} s beats",
            traj.t_beat
        )));
    }
    Ok(summarize(traj, series, periodic_tol))
}

fn summarize(traj: &Trajectory, series: &[EnergySnapshot], periodic_tol: f64) -> WorkSummary {
    let t: Vec<f64> = series.iter().map(|s| s.t).collect();
    let integrate = |f: &dyn Fn(&EnergySnapshot) -> f64| {
        let y: Vec<f64> = series.iter().map(f).collect();
        trapezoid(&t, &y)
    };
    let w_act_chambers: [f64; 4] = std::array::from_fn(|i| integrate(&|s| s.active.chambers[i]));
    let w_diss_valves: [f64; 4] = std::array::from_fn(|i| integrate(&|s| s.dissipation.valves[i]));
    let w_diss_compartments: [f64; 4] =
        std::array::from_fn(|i| integrate(&|s| s.dissipation.compartments[i]));
    let w_act = integrate(&|s| s.active.total);
    let w_diss = integrate(&|s| s.dissipation.total);
    let w_ex = integrate(&|s| s.external.total);
    let diss_abs = integrate(&|s| s.dissipation.total.abs());
    let duration = t[t.len() - 1] - t[0];
    let mean = w_act / duration;
    let periodicity_distance = normalized_distance(
        &traj.samples,
        &traj.samples[0].state,
        &traj.samples[traj.samples.len() - 1].state,
    );
    WorkSummary {
        mode: traj.mode,
        beats: traj.beats(),
        duration,
        w_act,
        w_diss,
        w_ex,
        w_act_chambers,
        w_diss_valves,
        w_diss_compartments,
        w_act_joule: w_act * JOULE_PER_MMHG_ML,
        w_diss_joule: w_diss * JOULE_PER_MMHG_ML,
        work_balance: ratio_or_zero(w_act + w_diss, w_act),
        external_relative: ratio_or_zero(w_ex.abs(), diss_abs),
        mean_active_power: mean,
        mean_active_power_watt: mean * JOULE_PER_MMHG_ML,
        daily_work_kj: daily_work_kj(mean),
        daily_work_chambers_kj: w_act_chambers.map(|w| daily_work_kj(w / duration)),
        periodicity_distance,
        periodic: periodicity_distance <= periodic_tol,
        degenerate: w_act == 0.0,
    }
}

/// Mean-pressure work estimators compared against the model's active work.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClinicalEstimate {
    /// Time-averaged systemic arterial pressure [mmHg].
    pub p_mean: f64,
    pub p_max: f64,
    pub p_min: f64,
    /// p_max / 3 + 2 p_min / 3 [mmHg].
    pub p_mean_approx: f64,
    /// max V_LV - min V_LV [mL].
    pub stroke_volume: f64,
    /// Estimate (a): p_mean SV / T [mmHg·mL/s].
    pub power_a: f64,
    /// Estimate (b): p_mean_approx SV / T [mmHg·mL/s].
    pub power_b: f64,
    pub daily_a_kj: f64,
    pub daily_b_kj: f64,
    /// Model mean active power, total and LV only [mmHg·mL/s].
    pub model_total: f64,
    pub model_lv: f64,
    /// Signed relative errors (estimate - model) / model.
    pub err_a_total: f64,
    pub err_a_lv: f64,
    pub err_b_total: f64,
    pub err_b_lv: f64,
}

/// Clinical estimators on a periodic trajectory. Refuses non-periodic input.
pub fn clinical_work_estimate(
    traj: &Trajectory,
    params: &ModelParams,
    periodic_tol: f64,
) -> Result<ClinicalEstimate, Error> {
    let summary = work_integrals(traj, params, periodic_tol)?;
    clinical_from_summary(traj, &summary)
}

pub fn clinical_from_summary(traj: &Trajectory, summary: &WorkSummary) -> Result<ClinicalEstimate, Error> {
    if !summary.periodic {
        return Err(Error::Analysis(format!(
            "trajectory is not periodic (start/end distance {:.3e}); simulate more beats",
            summary.periodicity_distance
        )));
    }
    if summary.degenerate {
        return Err(Error::Analysis("no active work over the window".into()));
    }
    let t: Vec<f64> = traj.samples.iter().map(|s| s.t).collect();
    let p: Vec<f64> = traj.samples.iter().map(|s| s.state.p_ar_sys).collect();
    let duration = summary.duration;
    let p_mean = trapezoid(&t, &p) / duration;
    let p_max = p.iter().copied().fold(f64::MIN, f64::max);
    let p_min = p.iter().copied().fold(f64::MAX, f64::min);
    let v = traj.samples.iter().map(|s| s.state.v_lv);
    let stroke_volume = v.clone().fold(f64::MIN, f64::max) - v.fold(f64::MAX, f64::min);
    let p_mean_approx = p_max / 3.0 + 2.0 * p_min / 3.0;
    let power_a = p_mean * stroke_volume / traj.t_beat;
    let power_b = p_mean_approx * stroke_volume / traj.t_beat;
    let model_total = summary.mean_active_power;
    let model_lv = summary.w_act_chambers[1] / duration;
    let rel = |est: f64, model: f64| (est - model) / model;
    Ok(ClinicalEstimate {
        p_mean,
        p_max,
        p_min,
        p_mean_approx,
        stroke_volume,
        power_a,
        power_b,
        daily_a_kj: daily_work_kj(power_a),
        daily_b_kj: daily_work_kj(power_b),
        model_total,
        model_lv,
        err_a_total: rel(power_a, model_total),
        err_a_lv: rel(power_a, model_lv),
        err_b_total: rel(power_b, model_total),
        err_b_lv: rel(power_b, model_lv),
    })
}

/// Time structure of the power terms over a window.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PowerStructure {
    /// Fraction of the window where Pi_act exceeds 5% of its peak.
    pub active_support: f64,
    /// Fraction of the window where |Pi_diss| exceeds 5% of its peak.
    pub dissipation_support: f64,
    /// Time-averaged stored energy E + K of each compartment [mmHg·mL].
    pub compartment_mean_energy: [f64; 4],
}

pub const SUPPORT_THRESHOLD: f64 = 0.05;

/// Support fractions count each sample interval by its left endpoint.
pub fn power_structure(series: &[EnergySnapshot]) -> PowerStructure {
    let n = series.len().saturating_sub(1);
    let support = |f: &dyn Fn(&EnergySnapshot) -> f64| {
        let peak = series.iter().map(f).fold(0.0f64, f64::max);
        if n == 0 || peak <= 0.0 {
            return 0.0;
        }
        let dt_total = series[n].t - series[0].t;
        series
            .windows(2)
            .filter(|w| f(&w[0]) > SUPPORT_THRESHOLD * peak)
            .map(|w| w[1].t - w[0].t)
            .sum::<f64>()
            / dt_total
    };
    let t: Vec<f64> = series.iter().map(|s| s.t).collect();
    let duration = t.last().copied().unwrap_or(0.0) - t.first().copied().unwrap_or(0.0);
    let compartment_mean_energy = std::array::from_fn(|k| {
        if duration <= 0.0 {
            return 0.0;
        }
        let e: Vec<f64> = series
            .iter()
            .map(|s| s.stored.elastic[k] + s.stored.kinetic[k])
            .collect();
        trapezoid(&t, &e) / duration
    });
    PowerStructure {
        active_support: support(&|s| s.active.total),
        dissipation_support: support(&|s| -s.dissipation.total),
        compartment_mean_energy,
    }
}

/// One pointwise sub-balance identity: `lhs == rhs` up to roundoff.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SubBalance {
    pub name: &'static str,
    pub lhs: f64,
    pub rhs: f64,
    /// Sum of magnitudes of the individual terms, for relative comparison.
    pub scale: f64,
}

impl SubBalance {
    pub fn relative_error(&self) -> f64 {
        ratio_or_zero((self.lhs - self.rhs).abs(), self.scale)
    }
}

/// Per-element energy identities whose sum is the total balance:
/// chambers p_i dV_i/dt = dE_i/dt - Pi_act,i - Pi_ex,i;
/// valves dp Q = -Pi_valve;
/// reservoirs p (Q_in - Q_out) = dE/dt;
/// conductors (p - p_downstream) Q = dK/dt - Pi_R.
pub fn sub_balances(t: f64, c1: &CirculationState, params: &ModelParams) -> Vec<SubBalance> {
    let c2 = crate::model::derived_state(t, c1, params);
    let d = rhs_full(t, c1, &c2, params);
    let act = active_power(t, c1, &d, params);
    let ex = external_power(t, &d, params);
    let diss = dissipated_power(c1, &c2, params);
    let mut out = Vec::with_capacity(16);

    const CHAMBER_NAMES: [&str; 4] = ["chamber_la", "chamber_lv", "chamber_ra", "chamber_rv"];
    for (i, &c) in Chamber::ALL.iter().enumerate() {
        let ch = params.chamber(c);
        let lhs = c2.pressure(c) * d.volume(c);
        let de = ch.e_pass * (c1.volume(c) - ch.v0) * d.volume(c);
        out.push(SubBalance {
            name: CHAMBER_NAMES[i],
            lhs,
            rhs: de - act.chambers[i] - ex.chambers[i],
            scale: lhs.abs() + de.abs() + act.chambers[i].abs() + ex.chambers[i].abs(),
        });
    }

    const VALVE_NAMES: [&str; 4] = ["valve_mv", "valve_av", "valve_tv", "valve_pv"];
    for (i, &v) in Valve::ALL.iter().enumerate() {
        let (up, down) = v.pressures(c1, &c2);
        let lhs = (up - down) * c2.flow(v);
        out.push(SubBalance {
            name: VALVE_NAMES[i],
            lhs,
            rhs: -diss.valves[i],
            scale: lhs.abs() + diss.valves[i].abs(),
        });
    }

    let inflow = [c2.q_av, c1.q_ar_sys, c2.q_pv, c1.q_ar_pul];
    let downstream = [c1.p_ven_sys, c2.p_ra, c1.p_ven_pul, c2.p_la];
    const RESERVOIR_NAMES: [&str; 4] = [
        "reservoir_ar_sys",
        "reservoir_ven_sys",
        "reservoir_ar_pul",
        "reservoir_ven_pul",
    ];
    const CONDUCTOR_NAMES: [&str; 4] = [
        "conductor_ar_sys",
        "conductor_ven_sys",
        "conductor_ar_pul",
        "conductor_ven_pul",
    ];
    for (i, &k) in Compartment::ALL.iter().enumerate() {
        let par = params.compartment(k);
        let (p, q) = (c1.pressure(k), c1.flow(k));
        let a = p * inflow[i];
        let b = p * q;
        let de = par.c * p * d.pressure(k);
        out.push(SubBalance {
            name: RESERVOIR_NAMES[i],
            lhs: a - b,
            rhs: de,
            scale: a.abs() + b.abs() + de.abs(),
        });
    }
    for (i, &k) in Compartment::ALL.iter().enumerate() {
        let par = params.compartment(k);
        let (p, q) = (c1.pressure(k), c1.flow(k));
        let lhs = (p - downstream[i]) * q;
        let dk = par.l * q * d.flow(k);
        out.push(SubBalance {
            name: CONDUCTOR_NAMES[i],
            lhs,
            rhs: dk - diss.compartments[i],
            scale: lhs.abs() + dk.abs() + diss.compartments[i].abs(),
        });
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::ExternalPressure;

    fn zero_state(params: &ModelParams) -> CirculationState {
        CirculationState {
            v_la: params.la.v0,
            v_lv: params.lv.v0,
            v_ra: params.ra.v0,
            v_rv: params.rv.v0,
            ..Default::default()
        }
    }

    #[test]
    fn stored_energy_examples() {
        let params = ModelParams::physiological_default();
        let z = zero_state(&params);
        assert_eq!(mechanical_energy(&z, &params).total, 0.0);

        let mut s = z;
        s.v_lv = params.lv.v0 + 100.0;
        let e = mechanical_energy(&s, &params);
        assert!((e.chambers[1] - 400.0).abs() < 1e-9);

        let mut p = params;
        p.ar_sys.c = 2.0;
        let mut s = z;
        s.p_ar_sys = 10.0;
        assert!((mechanical_energy(&s, &p).elastic[0] - 100.0).abs() < 1e-12);
    }

    #[test]
    fn valve_dissipation_example() {
        let mut params = ModelParams::physiological_default();
        params.mv.r_min = 0.05;
        let c2 = DerivedState {
            p_la: 5.0,
            ..DerivedState::default()
        };
        let d = dissipated_power(&CirculationState::default(), &c2, &params);
        assert!((d.valves[0] + 500.0).abs() < 1e-9);
    }

    #[test]
    fn external_power_example() {
        let mut params = ModelParams::physiological_default();
        params.p_ex = ExternalPressure::Constant { value: 1.0 };
        let d = CirculationState {
            v_la: -1.0,
            v_lv: -2.0,
            ..Default::default()
        };
        assert!((external_power(0.0, &d, &params).total - 3.0).abs() < 1e-12);
        params.p_ex = ExternalPressure::Constant { value: 0.0 };
        assert_eq!(external_power(0.0, &d, &params).total, 0.0);
    }

    #[test]
    fn passive_heart_has_no_active_power() {
        let mut params = ModelParams::physiological_default();
        for c in Chamber::ALL {
            params.chamber_mut(c).e_act_max = 0.0;
        }
        let c1 = CirculationState::physiological_default();
        for t in [0.0, 0.1, 0.65] {
            let d = crate::model::rhs(t, &c1, &params);
            assert_eq!(active_power(t, &c1, &d, &params).total, 0.0);
        }
    }

    #[test]
    fn contraction_with_shrinking_volume_is_positive_work() {
        let params = ModelParams::physiological_default();
        let c1 = CirculationState::physiological_default();
        let d = CirculationState {
            v_lv: -50.0,
            ..Default::default()
        };
        let p = active_power(0.2, &c1, &d, &params);
        assert!(p.chambers[1] > 0.0);
    }

    #[test]
    fn rate_of_stored_energy_matches_power_sum() {
        let params = ModelParams::physiological_default();
        let c1 = CirculationState::physiological_default();
        for t in [0.0, 0.1, 0.25, 0.65] {
            let c2 = crate::model::derived_state(t, &c1, &params);
            let s = Sample { t, state: c1, derived: c2 };
            let rate = stored_energy_rate(&s, &params, ClosureMode::Monolithic);
            let pi = snapshot(t, &c1, &params).total_power();
            assert!((rate - pi).abs() <= 1e-11 * rate.abs().max(pi.abs()).max(1.0));
        }
    }

    #[test]
    fn daily_work_conversion() {
        // 100 mmHg * 70 mL / 0.8 s
        let p: f64 = 100.0 * 70.0 / 0.8;
        assert!((p - 8750.0).abs() < 1e-9);
        assert!((p * JOULE_PER_MMHG_ML - 1.1666).abs() < 1e-4);
        assert!((daily_work_kj(p) - 100.8).abs() < 0.05);
    }

    #[test]
    fn columns_and_values_line_up() {
        let params = ModelParams::physiological_default();
        let s = snapshot(0.1, &CirculationState::physiological_default(), &params);
        let v = s.values(1.0);
        assert_eq!(v[12], s.stored.total);
        assert_eq!(v[17], s.active.total);
        assert_eq!(v[26], s.dissipation.total);
        assert_eq!(v[31], s.external.total);
        assert_eq!(v[32], 1.0);
    }
}
