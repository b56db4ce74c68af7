//! Partitioned coupling of the circulation with an external LV chamber.
//!
//! The LV elastance element is removed and its pressure becomes the unknown
//! that enforces equal volumes on both sides at the end of every step. Each
//! step solves the scalar equation
//!
//! ```text
//! r(p) = V_lv^0D(t + dt; p) - V_chamber(t + dt; p) = 0
//! ```
//!
//! where the circulation is advanced with the LV pressure interpolated
//! linearly from its accepted value at t to the trial value p at t + dt.
//! r is strictly decreasing in p when the chamber volume increases with
//! pressure, so the root is unique and found with a bracketed secant.

use std::cell::{Cell, RefCell};

use serde::{Deserialize, Serialize};

use crate::error::CouplingError;
use crate::integrate::{dopri5_step, rk4_step, ClosureMode, Method, Sample, SolverConfig, Trajectory};
use crate::model::{
    derived_state_reduced, elastance_at, rhs_reduced, ChamberParams, CirculationState, ExternalPressure,
    ModelParams,
};
use crate::root::{bracketed_secant, RootError};

/// A pressure-driven chamber that can replace the LV elastance element.
///
/// Contract: for a fixed internal history, the volume after `advance` is
/// continuous and strictly increasing in `p_lv` over `admissible_range`, and
/// `advance` is deterministic.
pub trait ExternalChamber {
    type State: Clone + std::fmt::Debug;

    /// Pressure interval [p_lo, p_hi] in which trial pressures may lie [mmHg].
    fn admissible_range(&self) -> (f64, f64);

    /// Internal state holding `volume` at time `t`, and the pressure it implies.
    fn initialize(&self, t: f64, volume: f64) -> Result<(Self::State, f64), String>;

    /// State at `t + dt` under the cavity pressure `p_lv`.
    fn advance(&self, state: &Self::State, t: f64, dt: f64, p_lv: f64) -> Result<Self::State, String>;

    fn volume(&self, state: &Self::State) -> f64;
}

/// Volume of a stateless chamber.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChamberVolume {
    pub v: f64,
}

/// V = v0 + (p - p_ex) / E(t): the inverse of the LV elastance law.
#[derive(Debug, Clone, PartialEq)]
pub struct ElastanceChamber {
    pub params: ChamberParams,
    pub t_beat: f64,
    pub p_ex: ExternalPressure,
    pub range: (f64, f64),
}

pub fn reference_elastance_chamber(params: &ModelParams, range: (f64, f64)) -> ElastanceChamber {
    ElastanceChamber {
        params: params.lv,
        t_beat: params.t_beat,
        p_ex: params.p_ex,
        range,
    }
}

impl ElastanceChamber {
    pub fn volume_at(&self, t: f64, p_lv: f64) -> f64 {
        self.params.v0 + (p_lv - self.p_ex.at(t)) / elastance_at(&self.params, t, self.t_beat)
    }

    pub fn pressure_at(&self, t: f64, v: f64) -> f64 {
        self.p_ex.at(t) + elastance_at(&self.params, t, self.t_beat) * (v - self.params.v0)
    }
}

impl ExternalChamber for ElastanceChamber {
    type State = ChamberVolume;

    fn admissible_range(&self) -> (f64, f64) {
        self.range
    }

    fn initialize(&self, t: f64, volume: f64) -> Result<(ChamberVolume, f64), String> {
        Ok((ChamberVolume { v: volume }, self.pressure_at(t, volume)))
    }

    fn advance(&self, _state: &ChamberVolume, t: f64, dt: f64, p_lv: f64) -> Result<ChamberVolume, String> {
        Ok(ChamberVolume {
            v: self.volume_at(t + dt, p_lv),
        })
    }

    fn volume(&self, state: &ChamberVolume) -> f64 {
        state.v
    }
}

/// Stiffening chamber p = p_ex + E(t)(V - v0) + alpha (exp(beta (V - v0)) - 1),
/// with E(t) the elastance of `params`. Inverted numerically for V.
#[derive(Debug, Clone, PartialEq)]
pub struct NonlinearChamber {
    pub params: ChamberParams,
    pub t_beat: f64,
    pub p_ex: ExternalPressure,
    /// Exponential stiffness [mmHg].
    pub alpha: f64,
    /// Exponent [1/mL].
    pub beta: f64,
    pub range: (f64, f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NonlinearParams {
    pub alpha: f64,
    pub beta: f64,
}

impl Default for NonlinearParams {
    fn default() -> Self {
        Self {
            alpha: 0.5,
            beta: 0.03,
        }
    }
}

pub fn nonlinear_test_chamber(
    params: &ModelParams,
    nonlinear: NonlinearParams,
    range: (f64, f64),
) -> Result<NonlinearChamber, crate::error::ParamError> {
    use crate::error::ParamError;
    if !(nonlinear.alpha > 0.0 && nonlinear.alpha.is_finite()) {
        return Err(ParamError::new("nonlinear.alpha", nonlinear.alpha, "must be > 0"));
    }
    if !(nonlinear.beta > 0.0 && nonlinear.beta.is_finite()) {
        return Err(ParamError::new("nonlinear.beta", nonlinear.beta, "must be > 0"));
    }
    Ok(NonlinearChamber {
        params: params.lv,
        t_beat: params.t_beat,
        p_ex: params.p_ex,
        alpha: nonlinear.alpha,
        beta: nonlinear.beta,
        range,
    })
}

impl NonlinearChamber {
    pub fn pressure_at(&self, t: f64, v: f64) -> f64 {
        let x = v - self.params.v0;
        self.p_ex.at(t)
            + elastance_at(&self.params, t, self.t_beat) * x
            + self.alpha * (self.beta * x).exp_m1()
    }

    /// Solves the pressure law for V.
    pub fn volume_at(&self, t: f64, p_lv: f64) -> Result<f64, String> {
        let e = elastance_at(&self.params, t, self.t_beat);
        let dp = p_lv - self.p_ex.at(t);
        // g(x) = E x + alpha (e^{beta x} - 1) - dp is increasing, with its
        // root between 0 and dp / E
        let g = |x: f64| e * x + self.alpha * (self.beta * x).exp_m1() - dp;
        let (a, b) = (0.0f64, dp / e);
        let (lo, hi) = (a.min(b), a.max(b));
        let scale = dp.abs().max(1.0);
        match bracketed_secant(g, lo, hi, 1e-14 * scale, 1e-14 * (hi - lo).max(1.0), 200) {
            Ok(r) => Ok(self.params.v0 + r.x),
            Err(RootError::MaxIterations(best)) => Err(format!(
                "volume inversion did not converge at p = {p_lv} mmHg (residual {:e})",
                best.fx
            )),
            Err(RootError::NotBracketed { .. }) => Err(format!("volume inversion failed at p = {p_lv} mmHg")),
        }
    }
}

impl ExternalChamber for NonlinearChamber {
    type State = ChamberVolume;

    fn admissible_range(&self) -> (f64, f64) {
        self.range
    }

    fn initialize(&self, t: f64, volume: f64) -> Result<(ChamberVolume, f64), String> {
        Ok((ChamberVolume { v: volume }, self.pressure_at(t, volume)))
    }

    fn advance(&self, _state: &ChamberVolume, t: f64, dt: f64, p_lv: f64) -> Result<ChamberVolume, String> {
        Ok(ChamberVolume {
            v: self.volume_at(t + dt, p_lv)?,
        })
    }

    fn volume(&self, state: &ChamberVolume) -> f64 {
        state.v
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CouplingConfig {
    /// Volume-constraint tolerance [mL].
    pub tol: f64,
    pub max_iter: usize,
    /// Initial half-width of the pressure bracket around the last p_lv [mmHg].
    pub window: f64,
    /// Admissible LV pressure interval [mmHg].
    pub p_min: f64,
    pub p_max: f64,
}

impl Default for CouplingConfig {
    fn default() -> Self {
        Self {
            tol: 1e-8,
            max_iter: 100,
            window: 1.0,
            p_min: -50.0,
            p_max: 400.0,
        }
    }
}

impl CouplingConfig {
    pub fn validate(&self) -> Result<(), crate::error::ParamError> {
        use crate::error::ParamError;
        if !(self.tol > 0.0 && self.tol.is_finite()) {
            return Err(ParamError::new("coupling.tol", self.tol, "must be > 0"));
        }
        if self.max_iter == 0 {
            return Err(ParamError::new("coupling.max_iter", 0.0, "must be >= 1"));
        }
        if !(self.window > 0.0 && self.window.is_finite()) {
            return Err(ParamError::new("coupling.window", self.window, "must be > 0"));
        }
        if !(self.p_min.is_finite() && self.p_max.is_finite() && self.p_min < self.p_max) {
            return Err(ParamError::new(
                "coupling.p_max",
                self.p_max,
                format!("must be finite and above coupling.p_min = {}", self.p_min),
            ));
        }
        Ok(())
    }

    pub fn range(&self) -> (f64, f64) {
        (self.p_min, self.p_max)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoupledState<S> {
    pub t: f64,
    pub c1: CirculationState,
    pub chamber: S,
    /// Accepted LV pressure (the multiplier) [mmHg].
    pub p_lv: f64,
}

impl<S> CoupledState<S> {
    pub fn mismatch<C: ExternalChamber<State = S>>(&self, chamber: &C) -> f64 {
        self.c1.v_lv - chamber.volume(&self.chamber)
    }
}

/// Coupled state at t with the chamber initialized to the circulation's LV volume.
pub fn initial_coupled_state<C: ExternalChamber>(
    chamber: &C,
    t: f64,
    c1: &CirculationState,
) -> Result<CoupledState<C::State>, CouplingError> {
    let (state, p_lv) = chamber
        .initialize(t, c1.v_lv)
        .map_err(|reason| CouplingError::ChamberAdvance { p_lv: f64::NAN, reason })?;
    Ok(CoupledState {
        t,
        c1: *c1,
        chamber: state,
        p_lv,
    })
}

/// Circulation advanced over [t, t + dt] with p_lv linear from `p0` to `p1`.
fn advance_circulation(
    t: f64,
    c1: &CirculationState,
    dt: f64,
    p0: f64,
    p1: f64,
    params: &ModelParams,
    method: Method,
) -> CirculationState {
    let mut f = |s: f64, y: CirculationState| {
        let w = (s - t) / dt;
        rhs_reduced(s, &y, p0 + w * (p1 - p0), params)
    };
    match method {
        Method::Rk4 => rk4_step(&mut f, t, *c1, dt),
        Method::Dopri5 => dopri5_step(&mut f, t, *c1, dt).0,
    }
}

/// V_lv^0D(t + dt) - V_chamber(t + dt) at a trial pressure. Does not modify `state`.
pub fn coupling_residual<C: ExternalChamber>(
    chamber: &C,
    state: &CoupledState<C::State>,
    dt: f64,
    p_lv_trial: f64,
    params: &ModelParams,
    solver: &SolverConfig,
) -> Result<f64, CouplingError> {
    if dt == 0.0 {
        return Ok(state.mismatch(chamber));
    }
    let c1 = advance_circulation(state.t, &state.c1, dt, state.p_lv, p_lv_trial, params, solver.method);
    let ch = chamber
        .advance(&state.chamber, state.t, dt, p_lv_trial)
        .map_err(|reason| CouplingError::ChamberAdvance { p_lv: p_lv_trial, reason })?;
    Ok(c1.v_lv - chamber.volume(&ch))
}

/// Diagnostics of one accepted coupled step.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepReport {
    pub residual: f64,
    pub iterations: usize,
    /// Residual evaluations spent widening the bracket.
    pub bracket_evaluations: usize,
}

/// Advances the coupled system by `dt`, solving for the LV pressure.
pub fn solve_coupled_step<C: ExternalChamber>(
    chamber: &C,
    state: &CoupledState<C::State>,
    dt: f64,
    params: &ModelParams,
    solver: &SolverConfig,
    cfg: &CouplingConfig,
) -> Result<(CoupledState<C::State>, StepReport), CouplingError> {
    let t = state.t;
    let (a_lo, a_hi) = chamber.admissible_range();
    let (a_lo, a_hi) = (a_lo.max(cfg.p_min), a_hi.min(cfg.p_max));
    let failure: RefCell<Option<CouplingError>> = RefCell::new(None);
    let evaluations = Cell::new(0usize);
    let mut r = |p: f64| -> f64 {
        evaluations.set(evaluations.get() + 1);
        match coupling_residual(chamber, state, dt, p, params, solver) {
            Ok(v) => v,
            Err(e) => {
                failure.borrow_mut().get_or_insert(e);
                // zero stops the root finder; the stored error is reported
                0.0
            }
        }
    };

    // bracket with r(lo) > 0 > r(hi), widening around the last multiplier
    let centre = state.p_lv.clamp(a_lo, a_hi);
    let mut w = cfg.window;
    let mut lo = (centre - w).max(a_lo);
    let mut hi = (centre + w).min(a_hi);
    let mut r_lo = r(lo);
    let mut r_hi = r(hi);
    loop {
        if let Some(e) = failure.borrow_mut().take() {
            return Err(e);
        }
        if r_lo > 0.0 && r_hi < 0.0 || r_lo.abs() <= cfg.tol || r_hi.abs() <= cfg.tol {
            break;
        }
        let stuck_lo = lo <= a_lo;
        let stuck_hi = hi >= a_hi;
        if (r_lo <= 0.0 && stuck_lo) || (r_hi >= 0.0 && stuck_hi) || (stuck_lo && stuck_hi) {
            return Err(CouplingError::Bracket {
                t,
                p_lo: lo,
                p_hi: hi,
                r_lo,
                r_hi,
            });
        }
        w *= 2.0;
        if r_lo <= 0.0 {
            // root lies below lo
            hi = lo;
            r_hi = r_lo;
            lo = (centre - w).max(a_lo);
            r_lo = r(lo);
        } else {
            lo = hi;
            r_lo = r_hi;
            hi = (centre + w).min(a_hi);
            r_hi = r(hi);
        }
    }
    let bracket_evaluations = evaluations.get();

    let root = bracketed_secant(&mut r, lo, hi, cfg.tol, 0.0, cfg.max_iter);
    if let Some(e) = failure.borrow_mut().take() {
        return Err(e);
    }
    let root = match root {
        Ok(root) => root,
        Err(RootError::MaxIterations(best)) => {
            return Err(CouplingError::NoConvergence {
                t,
                iterations: best.iterations,
                residual: best.fx,
                tol: cfg.tol,
            })
        }
        Err(RootError::NotBracketed { f_lo, f_hi }) => {
            return Err(CouplingError::Bracket {
                t,
                p_lo: lo,
                p_hi: hi,
                r_lo: f_lo,
                r_hi: f_hi,
            })
        }
    };

    let p = root.x;
    let c1 = advance_circulation(t, &state.c1, dt, state.p_lv, p, params, solver.method);
    let ch = chamber
        .advance(&state.chamber, t, dt, p)
        .map_err(|reason| CouplingError::ChamberAdvance { p_lv: p, reason })?;
    let next = CoupledState {
        t: t + dt,
        c1,
        chamber: ch,
        p_lv: p,
    };
    let residual = next.mismatch(chamber);
    if let Some(component) = c1.first_non_finite() {
        return Err(crate::error::IntegrationError::NonFinite { t: t + dt, component }.into());
    }
    Ok((
        next,
        StepReport {
            residual,
            iterations: root.iterations,
            bracket_evaluations,
        },
    ))
}

/// Per-step record of a coupled run, at every step boundary.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoupledRun {
    /// Trajectory with the accepted p_lv in each derived state.
    pub trajectory: Trajectory,
    pub dt: f64,
    /// Times of the step boundaries, starting at 0.
    pub t: Vec<f64>,
    pub p_lv: Vec<f64>,
    pub chamber_volume: Vec<f64>,
    /// p_lv (q_mv - q_av) from the circulation side at each boundary.
    pub fluid_power: Vec<f64>,
    /// Report for the step ending at each boundary (none for the first).
    pub steps: Vec<StepReport>,
    pub max_residual: f64,
}

/// Runs the coupled system for `n_beats` from `c1_0` at t = 0.
pub fn simulate_coupled<C: ExternalChamber>(
    chamber: &C,
    params: &ModelParams,
    c1_0: &CirculationState,
    n_beats: usize,
    solver: &SolverConfig,
    cfg: &CouplingConfig,
) -> Result<CoupledRun, CouplingError> {
    use crate::error::IntegrationError;
    if n_beats == 0 {
        return Err(IntegrationError::Precondition("n_beats must be >= 1".into()).into());
    }
    params.validate().map_err(IntegrationError::from)?;
    solver.validate(params.t_beat).map_err(IntegrationError::from)?;
    cfg.validate().map_err(IntegrationError::from)?;
    if solver.method != Method::Rk4 {
        return Err(IntegrationError::Precondition(
            "coupled runs use fixed steps; set the solver method to rk4".into(),
        )
        .into());
    }

    let dt = solver.dt;
    let steps_per_sample = solver.steps_per_sample();
    let samples_per_beat = (params.t_beat / solver.sample_stride).round() as usize;
    let n_steps = samples_per_beat * steps_per_sample * n_beats;

    let mut state = initial_coupled_state(chamber, 0.0, c1_0)?;
    let sample_of = |st: &CoupledState<C::State>| Sample {
        t: st.t,
        state: st.c1,
        derived: derived_state_reduced(st.t, &st.c1, st.p_lv, params),
    };
    let record = |st: &CoupledState<C::State>, s: &Sample| {
        (
            st.p_lv,
            chamber.volume(&st.chamber),
            st.p_lv * (s.derived.q_mv - s.derived.q_av),
        )
    };

    let first = sample_of(&state);
    let mut samples = vec![first];
    let (p0, v0, f0) = record(&state, &first);
    let mut run_t = vec![0.0];
    let mut p_lv = vec![p0];
    let mut chamber_volume = vec![v0];
    let mut fluid_power = vec![f0];
    let mut steps = Vec::with_capacity(n_steps);
    let mut max_residual = state.mismatch(chamber).abs();

    for n in 0..n_steps {
        let (mut next, report) = solve_coupled_step(chamber, &state, dt, params, solver, cfg)?;
        // step boundaries on the n * dt grid
        next.t = (n + 1) as f64 * dt;
        for (i, v) in [next.c1.v_la, next.c1.v_lv, next.c1.v_ra, next.c1.v_rv].into_iter().enumerate() {
            if v <= 0.0 {
                return Err(IntegrationError::NonPositiveVolume {
                    t: next.t,
                    component: CirculationState::NAMES[i],
                    volume: v,
                }
                .into());
            }
        }
        max_residual = max_residual.max(report.residual.abs());
        let s = sample_of(&next);
        let (p, v, f) = record(&next, &s);
        run_t.push(next.t);
        p_lv.push(p);
        chamber_volume.push(v);
        fluid_power.push(f);
        steps.push(report);
        if (n + 1) % steps_per_sample == 0 {
            samples.push(s);
        }
        state = next;
    }

    Ok(CoupledRun {
        trajectory: Trajectory {
            mode: ClosureMode::Coupled,
            samples,
            stride: solver.sample_stride,
            t_beat: params.t_beat,
            beat_markers: (0..=n_beats).map(|b| b * samples_per_beat).collect(),
        },
        dt,
        t: run_t,
        p_lv,
        chamber_volume,
        fluid_power,
        steps,
        max_residual,
    })
}

/// Boundary work seen from the chamber and from the circulation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PowerAudit {
    /// Sum over steps of mean(p_lv) times the chamber volume change [mmHg·mL].
    pub chamber_work: f64,
    /// Trapezoidal integral of p_lv (q_mv - q_av) [mmHg·mL].
    pub fluid_work: f64,
    pub difference: f64,
}

/// Power audit over step boundaries `from..=to`.
pub fn power_audit(run: &CoupledRun, from: usize, to: usize) -> PowerAudit {
    let mut chamber_work = 0.0;
    let mut fluid_work = 0.0;
    for n in from..to {
        let dt = run.t[n + 1] - run.t[n];
        chamber_work += 0.5 * (run.p_lv[n] + run.p_lv[n + 1]) * (run.chamber_volume[n + 1] - run.chamber_volume[n]);
        fluid_work += 0.5 * dt * (run.fluid_power[n] + run.fluid_power[n + 1]);
    }
    PowerAudit {
        chamber_work,
        fluid_work,
        difference: chamber_work - fluid_work,
    }
}

impl CoupledRun {
    /// Step-boundary index of the start of beat `k` (1-based).
    pub fn beat_start(&self, k: usize) -> usize {
        ((k - 1) as f64 * self.trajectory.t_beat / self.dt).round() as usize
    }

    pub fn beat_power_audit(&self, k: usize) -> PowerAudit {
        power_audit(self, self.beat_start(k), self.beat_start(k + 1))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{chamber_pressure, derived_state};

    fn setup() -> (ModelParams, CirculationState, SolverConfig, CouplingConfig) {
        (
            ModelParams::physiological_default(),
            CirculationState::physiological_default(),
            SolverConfig::default(),
            CouplingConfig::default(),
        )
    }

    #[test]
    fn elastance_chamber_examples() {
        let (params, ..) = setup();
        let ch = reference_elastance_chamber(&params, (-50.0, 400.0));
        assert_eq!(ch.volume_at(0.7, 0.0), params.lv.v0);
        let mut lv = params.lv;
        lv.e_pass = 2.0;
        lv.e_act_max = 0.0;
        let ch = ElastanceChamber { params: lv, ..ch };
        assert!((ch.volume_at(0.3, 10.0) - (lv.v0 + 5.0)).abs() < 1e-12);
    }

    #[test]
    fn nonlinear_chamber_round_trip() {
        let (params, ..) = setup();
        let ch = nonlinear_test_chamber(&params, NonlinearParams::default(), (-50.0, 400.0)).unwrap();
        for &t in &[0.0, 0.1, 0.2, 0.5] {
            for &v in &[3.0, 5.0, 40.0, 120.0, 160.0] {
                let p = ch.pressure_at(t, v);
                let back = ch.volume_at(t, p).unwrap();
                assert!((back - v).abs() <= 1e-10, "t {t} v {v} back {back}");
            }
        }
    }

    #[test]
    fn nonlinear_chamber_at_rest_pressure_is_v0() {
        let (mut params, ..) = setup();
        params.lv.e_act_max = 0.0;
        let ch = nonlinear_test_chamber(&params, NonlinearParams::default(), (-50.0, 400.0)).unwrap();
        assert!((ch.volume_at(0.1, 0.0).unwrap() - params.lv.v0).abs() < 1e-12);
    }

    #[test]
    fn nonlinear_chamber_small_alpha_approaches_elastance_chamber() {
        let (params, ..) = setup();
        let lin = reference_elastance_chamber(&params, (-50.0, 400.0));
        let nl = nonlinear_test_chamber(&params, NonlinearParams { alpha: 1e-12, beta: 0.03 }, (-50.0, 400.0))
            .unwrap();
        for &p in &[0.0, 8.0, 90.0] {
            assert!((nl.volume_at(0.15, p).unwrap() - lin.volume_at(0.15, p)).abs() < 1e-8);
        }
    }

    #[test]
    fn nonlinear_chamber_rejects_bad_params() {
        let (params, ..) = setup();
        assert!(nonlinear_test_chamber(&params, NonlinearParams { alpha: 0.0, beta: 0.1 }, (0.0, 1.0)).is_err());
        assert!(nonlinear_test_chamber(&params, NonlinearParams { alpha: 1.0, beta: -0.1 }, (0.0, 1.0)).is_err());
    }

    #[test]
    fn residual_with_zero_dt_is_current_mismatch() {
        let (params, c1, solver, cfg) = setup();
        let ch = reference_elastance_chamber(&params, cfg.range());
        let mut st = initial_coupled_state(&ch, 0.0, &c1).unwrap();
        st.c1.v_lv += 0.25;
        for p in [-10.0, 5.0, 100.0] {
            let r = coupling_residual(&ch, &st, 0.0, p, &params, &solver).unwrap();
            assert!((r - 0.25).abs() < 1e-12);
        }
    }

    #[test]
    fn residual_decreases_with_trial_pressure() {
        let (params, c1, solver, cfg) = setup();
        let ch = reference_elastance_chamber(&params, cfg.range());
        let st = initial_coupled_state(&ch, 0.0, &c1).unwrap();
        let rs: Vec<f64> = (-20..=60)
            .map(|i| coupling_residual(&ch, &st, 1e-4, i as f64 * 5.0, &params, &solver).unwrap())
            .collect();
        assert!(rs.windows(2).all(|w| w[1] < w[0]));
    }

    #[test]
    fn coupled_step_satisfies_constraint_and_matches_elastance_law() {
        let (params, c1, solver, cfg) = setup();
        let ch = reference_elastance_chamber(&params, cfg.range());
        let st = initial_coupled_state(&ch, 0.0, &c1).unwrap();
        let (next, report) = solve_coupled_step(&ch, &st, 1e-4, &params, &solver, &cfg).unwrap();
        assert!(report.residual.abs() <= cfg.tol);
        let e = elastance_at(&params.lv, 1e-4, params.t_beat);
        let p_law = chamber_pressure(e, next.c1.v_lv, params.lv.v0, 0.0);
        assert!((next.p_lv - p_law).abs() < 1e-6);
        let c2 = derived_state(0.0, &c1, &params);
        assert!((st.p_lv - c2.p_lv).abs() < 1e-12);
    }

    /// Volume does not respond to pressure.
    struct RigidChamber;

    impl ExternalChamber for RigidChamber {
        type State = f64;
        fn admissible_range(&self) -> (f64, f64) {
            (-50.0, 400.0)
        }
        fn initialize(&self, _t: f64, volume: f64) -> Result<(f64, f64), String> {
            Ok((volume, 10.0))
        }
        fn advance(&self, state: &f64, _t: f64, _dt: f64, _p: f64) -> Result<f64, String> {
            Ok(*state)
        }
        fn volume(&self, state: &f64) -> f64 {
            *state
        }
    }

    #[test]
    fn rigid_chamber_is_reported_not_accepted() {
        let (params, c1, solver, cfg) = setup();
        let mut st = initial_coupled_state(&RigidChamber, 0.0, &c1).unwrap();
        // closing a 100 mL gap in one step needs pressures far outside the
        // admissible interval
        st.chamber -= 100.0;
        let err = solve_coupled_step(&RigidChamber, &st, 1e-4, &params, &solver, &cfg).unwrap_err();
        assert!(matches!(err, CouplingError::Bracket { .. } | CouplingError::NoConvergence { .. }));
    }

    struct FailingChamber;

    impl ExternalChamber for FailingChamber {
        type State = f64;
        fn admissible_range(&self) -> (f64, f64) {
            (-50.0, 400.0)
        }
        fn initialize(&self, _t: f64, volume: f64) -> Result<(f64, f64), String> {
            Ok((volume, 10.0))
        }
        fn advance(&self, _s: &f64, _t: f64, _dt: f64, p: f64) -> Result<f64, String> {
            Err(format!("refused p = {p}"))
        }
        fn volume(&self, state: &f64) -> f64 {
            *state
        }
    }

    #[test]
    fn chamber_failure_carries_trial_pressure() {
        let (params, c1, solver, cfg) = setup();
        let st = initial_coupled_state(&FailingChamber, 0.0, &c1).unwrap();
        match solve_coupled_step(&FailingChamber, &st, 1e-4, &params, &solver, &cfg) {
            Err(CouplingError::ChamberAdvance { p_lv, reason }) => {
                assert!(p_lv.is_finite());
                assert!(reason.contains("refused"));
            }
            other => panic!("expected ChamberAdvance, got {other:?}"),
        }
    }
}
