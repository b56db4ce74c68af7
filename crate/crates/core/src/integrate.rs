//! Time integration of the monolithic model, trajectory recording and
//! periodic-regime detection.
//!
//! The valve law makes the right-hand side only Lipschitz in the state (the
//! flow is continuous but its slope jumps when a valve gradient changes sign),
//! and the activation pulses have kinks in their second derivative at known
//! times. A plain fixed-step scheme loses its nominal order at both. The
//! fixed-step path therefore splits a step at activation breakpoints and, when
//! `locate_events` is set, at the located valve switching instants. The
//! adaptive path only clamps its step size around switches.

use serde::{Deserialize, Serialize};

use crate::error::{IntegrationError, ParamError};
use crate::model::{
    derived_state, derived_state_frozen, rhs, rhs_full, Chamber, CirculationState, DerivedState, ModelParams, Valve,
};
use crate::root::{bracketed_secant, RootError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    /// Classical fourth-order Runge–Kutta with fixed step `dt`.
    Rk4,
    /// Dormand–Prince 5(4) embedded pair with step-size control.
    Dopri5,
}

impl Method {
    pub fn order(self) -> u32 {
        match self {
            Method::Rk4 => 4,
            Method::Dopri5 => 5,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    /// Fixed step, or the initial and switch-clamp step of the adaptive method [s].
    pub dt: f64,
    pub method: Method,
    pub atol: f64,
    pub rtol: f64,
    pub max_beats: usize,
    pub periodicity_tol: f64,
    /// Output sampling stride [s]; an integer multiple of `dt` for `Rk4`.
    pub sample_stride: f64,
    /// Split fixed steps at located valve switching instants.
    pub locate_events: bool,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            dt: 1e-4,
            method: Method::Rk4,
            atol: 1e-8,
            rtol: 1e-8,
            max_beats: 200,
            periodicity_tol: 1e-4,
            sample_stride: 1e-4,
            locate_events: true,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self, t_beat: f64) -> Result<(), ParamError> {
        let pos = |name: &str, v: f64| {
            if v.is_finite() && v > 0.0 {
                Ok(())
            } else {
                Err(ParamError::new(name, v, "must be > 0"))
            }
        };
        pos("solver.dt", self.dt)?;
        pos("solver.atol", self.atol)?;
        pos("solver.rtol", self.rtol)?;
        pos("solver.periodicity_tol", self.periodicity_tol)?;
        pos("solver.sample_stride", self.sample_stride)?;
        if self.max_beats == 0 {
            return Err(ParamError::new("solver.max_beats", 0.0, "must be >= 1"));
        }
        if !is_integer_ratio(t_beat, self.sample_stride) {
            return Err(ParamError::new(
                "solver.sample_stride",
                self.sample_stride,
                format!("must divide the beat period {t_beat} s"),
            ));
        }
        if self.method == Method::Rk4 && !is_integer_ratio(self.sample_stride, self.dt) {
            return Err(ParamError::new(
                "solver.dt",
                self.dt,
                format!("must divide the sample stride {} s", self.sample_stride),
            ));
        }
        Ok(())
    }

    pub fn steps_per_sample(&self) -> usize {
        (self.sample_stride / self.dt).round() as usize
    }
}

fn is_integer_ratio(num: f64, den: f64) -> bool {
    let r = num / den;
    r.round() >= 1.0 && (r - r.round()).abs() <= 1e-9 * r.max(1.0)
}

// ---------------------------------------------------------------------------
// Generic explicit schemes

/// Vector-space operation needed by the explicit schemes.
pub trait OdeState: Copy {
    /// `self + a * x`
    fn axpy(self, a: f64, x: Self) -> Self;
    /// `a * self`
    fn scale(self, a: f64) -> Self;
}

impl OdeState for f64 {
    fn axpy(self, a: f64, x: Self) -> Self {
        self + a * x
    }
    fn scale(self, a: f64) -> Self {
        a * self
    }
}

impl OdeState for CirculationState {
    fn axpy(self, a: f64, x: Self) -> Self {
        self + a * x
    }
    fn scale(self, a: f64) -> Self {
        a * self
    }
}

/// One classical RK4 step.
pub fn rk4_step<T, F>(f: &mut F, t: f64, y: T, h: f64) -> T
where
    T: OdeState,
    F: FnMut(f64, T) -> T,
{
    let k1 = f(t, y);
    let k2 = f(t + 0.5 * h, y.axpy(0.5 * h, k1));
    let k3 = f(t + 0.5 * h, y.axpy(0.5 * h, k2));
    let k4 = f(t + h, y.axpy(h, k3));
    y.axpy(h / 6.0, k1)
        .axpy(h / 3.0, k2)
        .axpy(h / 3.0, k3)
        .axpy(h / 6.0, k4)
}

fn combine<T: OdeState>(y: T, h: f64, terms: &[(f64, T)]) -> T {
    terms.iter().fold(y, |acc, &(a, k)| acc.axpy(h * a, k))
}

/// One Dormand–Prince 5(4) step: (fifth-order solution, embedded error estimate).
pub fn dopri5_step<T, F>(f: &mut F, t: f64, y: T, h: f64) -> (T, T)
where
    T: OdeState,
    F: FnMut(f64, T) -> T,
{
    const C2: f64 = 1.0 / 5.0;
    const C3: f64 = 3.0 / 10.0;
    const C4: f64 = 4.0 / 5.0;
    const C5: f64 = 8.0 / 9.0;
    const A21: f64 = 1.0 / 5.0;
    const A31: f64 = 3.0 / 40.0;
    const A32: f64 = 9.0 / 40.0;
    const A41: f64 = 44.0 / 45.0;
    const A42: f64 = -56.0 / 15.0;
    const A43: f64 = 32.0 / 9.0;
    const A51: f64 = 19372.0 / 6561.0;
    const A52: f64 = -25360.0 / 2187.0;
    const A53: f64 = 64448.0 / 6561.0;
    const A54: f64 = -212.0 / 729.0;
    const A61: f64 = 9017.0 / 3168.0;
    const A62: f64 = -355.0 / 33.0;
    const A63: f64 = 46732.0 / 5247.0;
    const A64: f64 = 49.0 / 176.0;
    const A65: f64 = -5103.0 / 18656.0;
    const B1: f64 = 35.0 / 384.0;
    const B3: f64 = 500.0 / 1113.0;
    const B4: f64 = 125.0 / 192.0;
    const B5: f64 = -2187.0 / 6784.0;
    const B6: f64 = 11.0 / 84.0;
    // b - b_hat
    const E1: f64 = 71.0 / 57600.0;
    const E3: f64 = -71.0 / 16695.0;
    const E4: f64 = 71.0 / 1920.0;
    const E5: f64 = -17253.0 / 339200.0;
    const E6: f64 = 22.0 / 525.0;
    const E7: f64 = -1.0 / 40.0;

    let k1 = f(t, y);
    let k2 = f(t + C2 * h, combine(y, h, &[(A21, k1)]));
    let k3 = f(t + C3 * h, combine(y, h, &[(A31, k1), (A32, k2)]));
    let k4 = f(t + C4 * h, combine(y, h, &[(A41, k1), (A42, k2), (A43, k3)]));
    let k5 = f(
        t + C5 * h,
        combine(y, h, &[(A51, k1), (A52, k2), (A53, k3), (A54, k4)]),
    );
    let k6 = f(
        t + h,
        combine(y, h, &[(A61, k1), (A62, k2), (A63, k3), (A64, k4), (A65, k5)]),
    );
    let y5 = combine(y, h, &[(B1, k1), (B3, k3), (B4, k4), (B5, k5), (B6, k6)]);
    let k7 = f(t + h, y5);
    let err = combine(
        k1.scale(h * E1),
        h,
        &[(E3, k3), (E4, k4), (E5, k5), (E6, k6), (E7, k7)],
    );
    (y5, err)
}

// ---------------------------------------------------------------------------
// Circulation stepping

fn scheme_step(
    method: Method,
    t: f64,
    y: CirculationState,
    h: f64,
    params: &ModelParams,
    open: Option<[bool; 4]>,
) -> CirculationState {
    let mut f = |t: f64, y: CirculationState| match open {
        None => rhs(t, &y, params),
        Some(o) => rhs_full(t, &y, &derived_state_frozen(t, &y, o, params), params),
    };
    match method {
        Method::Rk4 => rk4_step(&mut f, t, y, h),
        Method::Dopri5 => dopri5_step(&mut f, t, y, h).0,
    }
}

/// Forward pressure gradient (upstream minus downstream) across each valve.
pub fn valve_gradients(t: f64, c1: &CirculationState, params: &ModelParams) -> [f64; 4] {
    let c2 = derived_state(t, c1, params);
    Valve::ALL.map(|v| {
        let (up, down) = v.pressures(c1, &c2);
        up - down
    })
}

fn open_flags(g: &[f64; 4]) -> [bool; 4] {
    g.map(|x| x >= 0.0)
}

/// First activation breakpoint strictly inside (t0, t1), if any.
fn next_breakpoint(breakpoints: &[f64], t_beat: f64, t0: f64, t1: f64) -> Option<f64> {
    let guard = 1e-12 * t_beat.max(t1.abs());
    let beat_start = (t0 / t_beat).floor() * t_beat;
    [beat_start, beat_start + t_beat]
        .iter()
        .flat_map(|&s| breakpoints.iter().map(move |&b| s + b))
        .filter(|&b| b > t0 + guard && b < t1 - guard)
        .min_by(f64::total_cmp)
}

fn activation_breakpoints_mod_beat(params: &ModelParams) -> Vec<f64> {
    let mut b: Vec<f64> = Chamber::ALL
        .iter()
        .flat_map(|&c| params.chamber(c).breakpoints())
        .map(|x| x.rem_euclid(params.t_beat))
        .collect();
    b.sort_by(f64::total_cmp);
    b.dedup_by(|a, c| (*a - *c).abs() <= 1e-12 * params.t_beat);
    b
}

const MAX_EVENT_SPLITS: usize = 16;

/// Advance `c1` from `t` by `dt` with the configured scheme.
///
/// For `Method::Dopri5` this is one step of the fifth-order solution without
/// error control. Both schemes are split at activation breakpoints and, with
/// `config.locate_events`, at valve switching instants.
pub fn step(
    t: f64,
    c1: &CirculationState,
    dt: f64,
    params: &ModelParams,
    config: &SolverConfig,
) -> Result<CirculationState, IntegrationError> {
    if dt.is_nan() || dt <= 0.0 {
        return Err(IntegrationError::Precondition(format!(
            "step size must be > 0, got {dt}"
        )));
    }
    let breakpoints = activation_breakpoints_mod_beat(params);
    let y = advance_split(t, *c1, dt, params, config, &breakpoints);
    if let Some(component) = y.first_non_finite() {
        return Err(IntegrationError::NonFinite { t: t + dt, component });
    }
    Ok(y)
}

fn advance_split(
    t: f64,
    c1: CirculationState,
    dt: f64,
    params: &ModelParams,
    config: &SolverConfig,
    breakpoints: &[f64],
) -> CirculationState {
    let method = config.method;
    let t_end = t + dt;
    let mut t_cur = t;
    let mut y = c1;
    // valve states carried over from a located event
    let mut carried: Option<[bool; 4]> = None;
    let mut splits = 0;

    loop {
        let remaining = t_end - t_cur;
        if remaining <= 1e-14 * dt {
            return y;
        }
        let (h, at_breakpoint) = match next_breakpoint(breakpoints, params.t_beat, t_cur, t_end) {
            Some(b) => (b - t_cur, true),
            None => (remaining, false),
        };
        if !config.locate_events || splits >= MAX_EVENT_SPLITS {
            y = scheme_step(method, t_cur, y, h, params, None);
            t_cur = if at_breakpoint { t_cur + h } else { t_end };
            continue;
        }

        let g0 = valve_gradients(t_cur, &y, params);
        let open = carried.unwrap_or_else(|| open_flags(&g0));
        let y_next = scheme_step(method, t_cur, y, h, params, Some(open));
        if y_next.first_non_finite().is_some() {
            return y_next;
        }
        let g1 = valve_gradients(t_cur + h, &y_next, params);

        // valves whose frozen state is contradicted at the end of the substep
        let mut first: Option<f64> = None;
        let mut theta = [f64::NAN; 4];
        for i in 0..4 {
            if open[i] == (g1[i] >= 0.0) {
                continue;
            }
            let gi = |th: f64| {
                let ys = scheme_step(method, t_cur, y, th * h, params, Some(open));
                valve_gradients(t_cur + th * h, &ys, params)[i]
            };
            let scale = g0[i].abs().max(g1[i].abs());
            let th = match bracketed_secant(gi, 0.0, 1.0, 1e-13 * scale, 1e-13, 100) {
                Ok(r) => r.x,
                Err(RootError::MaxIterations(best)) => best.x,
                // wrong state from the start
                Err(RootError::NotBracketed { .. }) => 0.0,
            };
            theta[i] = th;
            first = Some(first.map_or(th, |f: f64| f.min(th)));
        }

        match first {
            Some(th) if th < 1.0 - 1e-12 => {
                if th > 0.0 {
                    y = scheme_step(method, t_cur, y, th * h, params, Some(open));
                    t_cur += th * h;
                }
                let mut next = open;
                for i in 0..4 {
                    if (theta[i] - th).abs() <= 1e-9 {
                        next[i] = !next[i];
                    }
                }
                carried = Some(next);
                splits += 1;
            }
            _ => {
                y = y_next;
                t_cur = if at_breakpoint { t_cur + h } else { t_end };
                carried = None;
            }
        }
    }
}

// ---------------------------------------------------------------------------
// Trajectories

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub t: f64,
    pub state: CirculationState,
    pub derived: DerivedState,
}

/// How the LV pressure in the derived state was obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClosureMode {
    /// From the LV elastance law.
    Monolithic,
    /// Imposed by an external chamber through the volume constraint.
    Coupled,
}

/// Samples on a uniform grid of spacing `stride`, with every beat start
/// `k * t_beat` a sample.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub mode: ClosureMode,
    pub samples: Vec<Sample>,
    pub stride: f64,
    pub t_beat: f64,
    /// Sample index of each beat boundary, starting with the first sample.
    pub beat_markers: Vec<usize>,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Number of complete beats.
    pub fn beats(&self) -> usize {
        self.beat_markers.len().saturating_sub(1)
    }

    /// Samples of beat `k` (1-based), both boundaries included.
    pub fn beat(&self, k: usize) -> &[Sample] {
        &self.samples[self.beat_markers[k - 1]..=self.beat_markers[k]]
    }

    /// Sub-trajectory covering beats `first..=last` (1-based).
    pub fn beats_window(&self, first: usize, last: usize) -> Trajectory {
        assert!(first >= 1 && last >= first && last <= self.beats());
        let lo = self.beat_markers[first - 1];
        let hi = self.beat_markers[last];
        Trajectory {
            mode: self.mode,
            samples: self.samples[lo..=hi].to_vec(),
            stride: self.stride,
            t_beat: self.t_beat,
            beat_markers: self.beat_markers[first - 1..=last]
                .iter()
                .map(|m| m - lo)
                .collect(),
        }
    }

    /// The last `n` complete beats.
    pub fn last_beats(&self, n: usize) -> Trajectory {
        let b = self.beats();
        self.beats_window(b + 1 - n.min(b), b)
    }

    /// Keep every `every`-th sample. Beat markers must stay on the grid.
    pub fn subsample(&self, every: usize) -> Trajectory {
        assert!(every >= 1);
        assert!(
            self.beat_markers.iter().all(|m| m % every == 0),
            "beat markers must be multiples of the subsampling factor"
        );
        Trajectory {
            mode: self.mode,
            samples: self.samples.iter().step_by(every).copied().collect(),
            stride: self.stride * every as f64,
            t_beat: self.t_beat,
            beat_markers: self.beat_markers.iter().map(|m| m / every).collect(),
        }
    }
}

fn check_state(t: f64, y: &CirculationState) -> Result<(), IntegrationError> {
    if let Some(component) = y.first_non_finite() {
        return Err(IntegrationError::NonFinite { t, component });
    }
    for (i, v) in [y.v_la, y.v_lv, y.v_ra, y.v_rv].into_iter().enumerate() {
        if v <= 0.0 {
            return Err(IntegrationError::NonPositiveVolume {
                t,
                component: CirculationState::NAMES[i],
                volume: v,
            });
        }
    }
    Ok(())
}

fn sample(t: f64, state: CirculationState, params: &ModelParams) -> Sample {
    Sample {
        t,
        state,
        derived: derived_state(t, &state, params),
    }
}

/// Integrate over `n_beats` heartbeats from `c1_0` at t = 0.
pub fn simulate(
    params: &ModelParams,
    c1_0: &CirculationState,
    n_beats: usize,
    config: &SolverConfig,
) -> Result<Trajectory, IntegrationError> {
    if n_beats == 0 {
        return Err(IntegrationError::Precondition("n_beats must be >= 1".into()));
    }
    params.validate()?;
    config.validate(params.t_beat)?;
    check_state(0.0, c1_0)?;

    let samples_per_beat = (params.t_beat / config.sample_stride).round() as usize;
    let n_samples = samples_per_beat * n_beats;
    let sample_time = |k: usize| k as f64 * config.sample_stride;

    let mut samples = Vec::with_capacity(n_samples + 1);
    samples.push(sample(0.0, *c1_0, params));
    let breakpoints = activation_breakpoints_mod_beat(params);
    let mut y = *c1_0;
    let mut h_adapt = config.dt;

    for k in 0..n_samples {
        let (t0, t1) = (sample_time(k), sample_time(k + 1));
        match config.method {
            Method::Rk4 => {
                let n = config.steps_per_sample();
                let h = (t1 - t0) / n as f64;
                for j in 0..n {
                    let t = t0 + j as f64 * h;
                    y = advance_split(t, y, h, params, config, &breakpoints);
                    check_state(t + h, &y)?;
                }
            }
            Method::Dopri5 => {
                y = adaptive_interval(t0, t1, y, &mut h_adapt, params, config, &breakpoints)?;
            }
        }
        samples.push(sample(t1, y, params));
    }

    Ok(Trajectory {
        mode: ClosureMode::Monolithic,
        samples,
        stride: config.sample_stride,
        t_beat: params.t_beat,
        beat_markers: (0..=n_beats).map(|b| b * samples_per_beat).collect(),
    })
}

fn error_norm(y0: &CirculationState, y1: &CirculationState, err: &CirculationState, cfg: &SolverConfig) -> f64 {
    let (a, b, e) = (y0.to_array(), y1.to_array(), err.to_array());
    (0..CirculationState::LEN)
        .map(|i| e[i].abs() / (cfg.atol + cfg.rtol * a[i].abs().max(b[i].abs())))
        .fold(0.0, f64::max)
}

/// Adaptive Dormand–Prince integration over [t0, t1].
fn adaptive_interval(
    t0: f64,
    t1: f64,
    y0: CirculationState,
    h: &mut f64,
    params: &ModelParams,
    cfg: &SolverConfig,
    breakpoints: &[f64],
) -> Result<CirculationState, IntegrationError> {
    let h_min = 1e-12 * params.t_beat;
    let h_switch = cfg.dt;
    let mut t = t0;
    let mut y = y0;
    let mut f = |t: f64, y: CirculationState| rhs(t, &y, params);

    while t1 - t > 1e-14 * params.t_beat {
        let limit = next_breakpoint(breakpoints, params.t_beat, t, t1).unwrap_or(t1);
        let hs = h.min(limit - t);
        let (y5, err) = dopri5_step(&mut f, t, y, hs);
        let en = error_norm(&y, &y5, &err, cfg);
        if !en.is_finite() || en > 1.0 {
            let shrink = if en.is_finite() { (0.9 * en.powf(-0.2)).max(0.2) } else { 0.2 };
            *h = hs * shrink;
            if *h < h_min {
                return Err(IntegrationError::StepUnderflow { t, h: *h });
            }
            continue;
        }
        let switched = open_flags(&valve_gradients(t, &y, params))
            != open_flags(&valve_gradients(t + hs, &y5, params));
        if switched && hs > h_switch * (1.0 + 1e-9) {
            *h = (0.25 * hs).max(h_switch);
            continue;
        }
        t = if hs == limit - t { limit } else { t + hs };
        y = y5;
        check_state(t, &y)?;
        let grow = if en > 0.0 { (0.9 * en.powf(-0.2)).min(5.0) } else { 5.0 };
        *h = if switched { hs } else { hs * grow.max(1.0) }.min(cfg.sample_stride);
    }
    Ok(y)
}

// ---------------------------------------------------------------------------
// Periodicity

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Periodicity {
    pub converged: bool,
    /// First beat meeting the tolerance, or the last beat examined.
    pub beat_index: usize,
    /// Normalized beat-to-beat distance for beats 1..=n.
    pub distances: Vec<f64>,
}

/// Scale-normalized distance between two states.
///
/// Each component is scaled by its largest magnitude over `window`;
/// components identically zero there are skipped. Returns the scaled
/// max-norm of `b - a` relative to the scaled max-norm of `b`.
pub fn normalized_distance(window: &[Sample], a: &CirculationState, b: &CirculationState) -> f64 {
    let mut scale = [0.0f64; CirculationState::LEN];
    for s in window {
        for (sc, v) in scale.iter_mut().zip(s.state.to_array()) {
            *sc = sc.max(v.abs());
        }
    }
    let (a, b) = (a.to_array(), b.to_array());
    let mut diff = 0.0f64;
    let mut norm = 0.0f64;
    for i in 0..CirculationState::LEN {
        if scale[i] > 0.0 {
            diff = diff.max((b[i] - a[i]).abs() / scale[i]);
            norm = norm.max(b[i].abs() / scale[i]);
        }
    }
    if diff == 0.0 {
        0.0
    } else {
        diff / norm
    }
}

/// Distance between the states at the start and end of beat `k` (1-based),
/// normalized over beats k-1 and k.
pub fn beat_distance(traj: &Trajectory, k: usize) -> f64 {
    let lo = traj.beat_markers[k.saturating_sub(2)];
    let hi = traj.beat_markers[k];
    normalized_distance(
        &traj.samples[lo..=hi],
        &traj.samples[traj.beat_markers[k - 1]].state,
        &traj.samples[hi].state,
    )
}

/// First beat k whose end state repeats the previous beat's end state to `tol`.
pub fn detect_periodic_regime(traj: &Trajectory, tol: f64) -> Result<Periodicity, IntegrationError> {
    let n = traj.beats();
    if n < 2 {
        return Err(IntegrationError::Precondition(format!(
            "periodicity detection needs at least 2 complete beats, trajectory has {n}"
        )));
    }
    let distances: Vec<f64> = (1..=n).map(|k| beat_distance(traj, k)).collect();
    let hit = distances.iter().position(|&d| d <= tol);
    Ok(Periodicity {
        converged: hit.is_some(),
        beat_index: hit.map_or(n, |i| i + 1),
        distances,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::total_blood_volume;

    #[test]
    fn rk4_on_exponential_decay_has_order_four() {
        // y' = -y, y(0) = 1 against exp(-1)
        let err = |n: usize| {
            let h = 1.0 / n as f64;
            let mut y = 1.0f64;
            let mut f = |_t: f64, y: f64| -y;
            for i in 0..n {
                y = rk4_step(&mut f, i as f64 * h, y, h);
            }
            (y - (-1.0f64).exp()).abs()
        };
        let orders: Vec<f64> = [10, 20, 40, 80]
            .windows(2)
            .map(|w| (err(w[0]) / err(w[1])).log2())
            .collect();
        for p in orders {
            assert!((p - 4.0).abs() <= 0.2, "observed order {p}");
        }
    }

    #[test]
    fn dopri5_on_exponential_decay_has_order_five() {
        let err = |n: usize| {
            let h = 1.0 / n as f64;
            let mut y = 1.0f64;
            let mut f = |_t: f64, y: f64| -y;
            for i in 0..n {
                y = dopri5_step(&mut f, i as f64 * h, y, h).0;
            }
            (y - (-1.0f64).exp()).abs()
        };
        let p = (err(8) / err(16)).log2();
        assert!((p - 5.0).abs() <= 0.3, "observed order {p}");
    }

    #[test]
    fn step_is_consistent_with_rhs() {
        let params = ModelParams::physiological_default();
        let c1 = CirculationState::physiological_default();
        let cfg = SolverConfig::default();
        let d = rhs(0.05, &c1, &params).to_array();
        let defect = |h: f64| {
            let y = step(0.05, &c1, h, &params, &cfg).unwrap().to_array();
            (0..12)
                .map(|i| (y[i] - c1.to_array()[i] - h * d[i]).abs())
                .fold(0.0, f64::max)
        };
        // o(h): defect/h shrinks with h
        let r1 = defect(1e-4) / 1e-4;
        let r2 = defect(1e-5) / 1e-5;
        assert!(r2 < 0.2 * r1, "{r1} {r2}");
    }

    #[test]
    fn step_preserves_blood_volume() {
        let params = ModelParams::physiological_default();
        let c1 = CirculationState::physiological_default();
        for method in [Method::Rk4, Method::Dopri5] {
            let cfg = SolverConfig { method, ..Default::default() };
            let y = step(0.0, &c1, 1e-3, &params, &cfg).unwrap();
            let (a, b) = (total_blood_volume(&c1, &params), total_blood_volume(&y, &params));
            assert!(((a - b) / a).abs() <= 1e-12);
        }
    }

    #[test]
    fn step_rejects_nonpositive_dt_and_non_finite_states() {
        let params = ModelParams::physiological_default();
        let cfg = SolverConfig::default();
        let mut c1 = CirculationState::physiological_default();
        assert!(step(0.0, &c1, 0.0, &params, &cfg).is_err());
        c1.q_ar_pul = f64::NAN;
        match step(0.0, &c1, 1e-4, &params, &cfg) {
            Err(IntegrationError::NonFinite { component, .. }) => assert!(!component.is_empty()),
            other => panic!("expected NonFinite, got {other:?}"),
        }
    }

    #[test]
    fn breakpoint_search() {
        let b = [0.0, 0.3, 0.45];
        assert_eq!(next_breakpoint(&b, 0.8, 0.29, 0.31), Some(0.3));
        assert_eq!(next_breakpoint(&b, 0.8, 0.3, 0.31), None);
        let x = next_breakpoint(&b, 0.8, 1.09, 1.11).unwrap();
        assert!((x - 1.1).abs() < 1e-12);
        assert!(next_breakpoint(&b, 0.8, 1.55, 1.65).is_some());
    }

    #[test]
    fn config_validation() {
        let cfg = SolverConfig { sample_stride: 3e-4, ..Default::default() };
        assert!(cfg.validate(0.8).is_err());
        let cfg = SolverConfig { dt: 3e-5, ..Default::default() };
        assert!(cfg.validate(0.8).is_err());
        SolverConfig::default().validate(0.8).unwrap();
    }

    fn synthetic(n_beats: usize, per_beat: usize, f: impl Fn(f64) -> [f64; 12]) -> Trajectory {
        let t_beat = 1.0;
        let stride = t_beat / per_beat as f64;
        let samples = (0..=n_beats * per_beat)
            .map(|i| {
                let t = i as f64 * stride;
                Sample {
                    t,
                    state: CirculationState::from_array(f(t)),
                    derived: DerivedState::default(),
                }
            })
            .collect();
        Trajectory {
            mode: ClosureMode::Monolithic,
            samples,
            stride,
            t_beat,
            beat_markers: (0..=n_beats).map(|b| b * per_beat).collect(),
        }
    }

    #[test]
    fn periodicity_on_repeating_and_constant_signals() {
        let rep = synthetic(2, 50, |t| {
            let s = (2.0 * std::f64::consts::PI * t).sin();
            std::array::from_fn(|i| (i as f64 + 1.0) * (1.0 + 0.3 * s))
        });
        let p = detect_periodic_regime(&rep, 1e-12).unwrap();
        assert!(p.converged);
        assert_eq!(p.beat_index, 1);

        let constant = synthetic(3, 10, |_| [2.5; 12]);
        let p = detect_periodic_regime(&constant, 1e-9).unwrap();
        assert_eq!((p.converged, p.beat_index), (true, 1));
    }

    #[test]
    fn periodicity_requires_two_beats() {
        let one = synthetic(1, 10, |_| [1.0; 12]);
        assert!(matches!(
            detect_periodic_regime(&one, 1e-3),
            Err(IntegrationError::Precondition(_))
        ));
    }

    #[test]
    fn periodicity_geometric_decay_matches_log2_estimate() {
        // beat-to-beat difference halves each beat; sin vanishes at beat boundaries
        let traj = synthetic(30, 40, |t| {
            let s = (2.0 * std::f64::consts::PI * t).sin();
            let decay = 0.5f64.powf(t);
            std::array::from_fn(|i| (i as f64 + 1.0) * (1.0 + decay + 0.5 * s))
        });
        for tol in [1e-2, 1e-3, 1e-4, 1e-6] {
            let p = detect_periodic_regime(&traj, tol).unwrap();
            let expected = (1.0f64 / tol).log2().ceil() as i64;
            assert!(p.converged);
            assert!(
                (p.beat_index as i64 - expected).abs() <= 1,
                "tol {tol}: got {} expected {expected}",
                p.beat_index
            );
        }
    }
}
