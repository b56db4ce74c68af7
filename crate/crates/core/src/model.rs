//! Closed-loop lumped-parameter circulation: four time-varying elastance
//! chambers, four diode valves and four RLC vascular compartments.
//!
//! Units are mmHg, mL and s throughout. The state vector holds the chamber
//! volumes, the compartment pressures and the compartment flows (12 entries);
//! the derived vector holds the chamber pressures and the valve flows
//! (8 entries), which are algebraic functions of time and state.

use std::f64::consts::PI;
use std::ops::{Add, Mul, Sub};

use serde::{Deserialize, Serialize};

use crate::error::ParamError;

/// Dynamic state: chamber volumes [mL], compartment pressures [mmHg],
/// compartment flows [mL/s]. Field order is the serialization order.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct CirculationState {
    pub v_la: f64,
    pub v_lv: f64,
    pub v_ra: f64,
    pub v_rv: f64,
    pub p_ar_sys: f64,
    pub p_ven_sys: f64,
    pub p_ar_pul: f64,
    pub p_ven_pul: f64,
    pub q_ar_sys: f64,
    pub q_ven_sys: f64,
    pub q_ar_pul: f64,
    pub q_ven_pul: f64,
}

impl CirculationState {
    pub const LEN: usize = 12;
    pub const NAMES: [&'static str; 12] = [
        "v_la",
        "v_lv",
        "v_ra",
        "v_rv",
        "p_ar_sys",
        "p_ven_sys",
        "p_ar_pul",
        "p_ven_pul",
        "q_ar_sys",
        "q_ven_sys",
        "q_ar_pul",
        "q_ven_pul",
    ];

    pub fn to_array(&self) -> [f64; 12] {
        [
            self.v_la,
            self.v_lv,
            self.v_ra,
            self.v_rv,
            self.p_ar_sys,
            self.p_ven_sys,
            self.p_ar_pul,
            self.p_ven_pul,
            self.q_ar_sys,
            self.q_ven_sys,
            self.q_ar_pul,
            self.q_ven_pul,
        ]
    }

    pub fn from_array(a: [f64; 12]) -> Self {
        Self {
            v_la: a[0],
            v_lv: a[1],
            v_ra: a[2],
            v_rv: a[3],
            p_ar_sys: a[4],
            p_ven_sys: a[5],
            p_ar_pul: a[6],
            p_ven_pul: a[7],
            q_ar_sys: a[8],
            q_ven_sys: a[9],
            q_ar_pul: a[10],
            q_ven_pul: a[11],
        }
    }

    pub fn volume(&self, chamber: Chamber) -> f64 {
        match chamber {
            Chamber::La => self.v_la,
            Chamber::Lv => self.v_lv,
            Chamber::Ra => self.v_ra,
            Chamber::Rv => self.v_rv,
        }
    }

    pub fn pressure(&self, compartment: Compartment) -> f64 {
        match compartment {
            Compartment::ArSys => self.p_ar_sys,
            Compartment::VenSys => self.p_ven_sys,
            Compartment::ArPul => self.p_ar_pul,
            Compartment::VenPul => self.p_ven_pul,
        }
    }

    pub fn flow(&self, compartment: Compartment) -> f64 {
        match compartment {
            Compartment::ArSys => self.q_ar_sys,
            Compartment::VenSys => self.q_ven_sys,
            Compartment::ArPul => self.q_ar_pul,
            Compartment::VenPul => self.q_ven_pul,
        }
    }

    /// First non-finite component, if any.
    pub fn first_non_finite(&self) -> Option<&'static str> {
        self.to_array()
            .iter()
            .zip(Self::NAMES)
            .find(|(v, _)| !v.is_finite())
            .map(|(_, n)| n)
    }
}

impl Add for CirculationState {
    type Output = Self;
    fn add(self, rhs: Self) -> Self {
        let (a, b) = (self.to_array(), rhs.to_array());
        Self::from_array(std::array::from_fn(|i| a[i] + b[i]))
    }
}

impl Sub for CirculationState {
    type Output = Self;
    fn sub(self, rhs: Self) -> Self {
        let (a, b) = (self.to_array(), rhs.to_array());
        Self::from_array(std::array::from_fn(|i| a[i] - b[i]))
    }
}

impl Mul<CirculationState> for f64 {
    type Output = CirculationState;
    fn mul(self, rhs: CirculationState) -> CirculationState {
        let a = rhs.to_array();
        CirculationState::from_array(a.map(|x| self * x))
    }
}

/// Algebraic quantities: chamber pressures [mmHg] and valve flows [mL/s].
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct DerivedState {
    pub p_lv: f64,
    pub p_la: f64,
    pub p_rv: f64,
    pub p_ra: f64,
    pub q_mv: f64,
    pub q_av: f64,
    pub q_tv: f64,
    pub q_pv: f64,
}

impl DerivedState {
    pub const LEN: usize = 8;
    pub const NAMES: [&'static str; 8] = [
        "p_lv", "p_la", "p_rv", "p_ra", "q_mv", "q_av", "q_tv", "q_pv",
    ];

    pub fn to_array(&self) -> [f64; 8] {
        [
            self.p_lv, self.p_la, self.p_rv, self.p_ra, self.q_mv, self.q_av, self.q_tv, self.q_pv,
        ]
    }

    pub fn from_array(a: [f64; 8]) -> Self {
        Self {
            p_lv: a[0],
            p_la: a[1],
            p_rv: a[2],
            p_ra: a[3],
            q_mv: a[4],
            q_av: a[5],
            q_tv: a[6],
            q_pv: a[7],
        }
    }

    pub fn pressure(&self, chamber: Chamber) -> f64 {
        match chamber {
            Chamber::La => self.p_la,
            Chamber::Lv => self.p_lv,
            Chamber::Ra => self.p_ra,
            Chamber::Rv => self.p_rv,
        }
    }

    pub fn flow(&self, valve: Valve) -> f64 {
        match valve {
            Valve::Mv => self.q_mv,
            Valve::Av => self.q_av,
            Valve::Tv => self.q_tv,
            Valve::Pv => self.q_pv,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Chamber {
    La,
    Lv,
    Ra,
    Rv,
}

impl Chamber {
    pub const ALL: [Chamber; 4] = [Chamber::La, Chamber::Lv, Chamber::Ra, Chamber::Rv];

    pub fn key(self) -> &'static str {
        match self {
            Chamber::La => "la",
            Chamber::Lv => "lv",
            Chamber::Ra => "ra",
            Chamber::Rv => "rv",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Valve {
    Mv,
    Av,
    Tv,
    Pv,
}

impl Valve {
    pub const ALL: [Valve; 4] = [Valve::Mv, Valve::Av, Valve::Tv, Valve::Pv];

    pub fn key(self) -> &'static str {
        match self {
            Valve::Mv => "mv",
            Valve::Av => "av",
            Valve::Tv => "tv",
            Valve::Pv => "pv",
        }
    }

    /// (upstream, downstream) pressures across the valve in flow direction.
    pub fn pressures(self, c1: &CirculationState, c2: &DerivedState) -> (f64, f64) {
        match self {
            Valve::Mv => (c2.p_la, c2.p_lv),
            Valve::Av => (c2.p_lv, c1.p_ar_sys),
            Valve::Tv => (c2.p_ra, c2.p_rv),
            Valve::Pv => (c2.p_rv, c1.p_ar_pul),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Compartment {
    ArSys,
    VenSys,
    ArPul,
    VenPul,
}

impl Compartment {
    pub const ALL: [Compartment; 4] = [
        Compartment::ArSys,
        Compartment::VenSys,
        Compartment::ArPul,
        Compartment::VenPul,
    ];

    pub fn key(self) -> &'static str {
        match self {
            Compartment::ArSys => "ar_sys",
            Compartment::VenSys => "ven_sys",
            Compartment::ArPul => "ar_pul",
            Compartment::VenPul => "ven_pul",
        }
    }
}

/// Time-varying elastance chamber.
///
/// The activation pulse starts at `onset` within each beat, rises as a
/// half-cosine over `t_contract`, falls as a half-cosine over `t_relax` and
/// is zero for the rest of the beat.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChamberParams {
    /// Passive elastance [mmHg/mL].
    pub e_pass: f64,
    /// Peak active elastance [mmHg/mL].
    pub e_act_max: f64,
    /// Unstressed volume [mL].
    pub v0: f64,
    /// Activation onset within the beat [s].
    pub onset: f64,
    /// Contraction duration [s].
    pub t_contract: f64,
    /// Relaxation duration [s].
    pub t_relax: f64,
}

impl ChamberParams {
    pub fn validate(&self, prefix: &str, t_beat: f64) -> Result<(), ParamError> {
        positive(&format!("{prefix}.e_pass"), self.e_pass)?;
        non_negative(&format!("{prefix}.e_act_max"), self.e_act_max)?;
        non_negative(&format!("{prefix}.v0"), self.v0)?;
        non_negative(&format!("{prefix}.onset"), self.onset)?;
        positive(&format!("{prefix}.t_contract"), self.t_contract)?;
        positive(&format!("{prefix}.t_relax"), self.t_relax)?;
        let end = self.onset + self.t_contract + self.t_relax;
        if end > t_beat * (1.0 + 1e-12) {
            return Err(ParamError::new(
                format!("{prefix}.onset"),
                self.onset,
                format!("activation ends at {end} s, after the beat period {t_beat} s"),
            ));
        }
        Ok(())
    }

    /// Activation shape a(t) in [0, 1].
    pub fn activation(&self, t: f64, t_beat: f64) -> f64 {
        let tau = t.rem_euclid(t_beat) - self.onset;
        if tau < 0.0 {
            0.0
        } else if tau < self.t_contract {
            // (1 - cos x) / 2 without cancellation near the onset
            (0.5 * PI * tau / self.t_contract).sin().powi(2)
        } else if tau < self.t_contract + self.t_relax {
            (0.5 * PI * (tau - self.t_contract) / self.t_relax).cos().powi(2)
        } else {
            0.0
        }
    }

    pub fn active_elastance(&self, t: f64, t_beat: f64) -> f64 {
        self.e_act_max * self.activation(t, t_beat)
    }

    /// Times within [0, t_beat) where the activation pulse changes branch.
    pub fn breakpoints(&self) -> [f64; 3] {
        [
            self.onset,
            self.onset + self.t_contract,
            self.onset + self.t_contract + self.t_relax,
        ]
    }
}

/// Total elastance E(t) = e_pass + e_act_max * a(t).
pub fn elastance_at(chamber: &ChamberParams, t: f64, t_beat: f64) -> f64 {
    chamber.e_pass + chamber.active_elastance(t, t_beat)
}

/// p = p_ex + E (V - V0)
pub fn chamber_pressure(e: f64, v: f64, v0: f64, p_ex: f64) -> f64 {
    p_ex + e * (v - v0)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ValveParams {
    pub r_min: f64,
    pub r_max: f64,
}

impl ValveParams {
    pub fn validate(&self, prefix: &str) -> Result<(), ParamError> {
        positive(&format!("{prefix}.r_min"), self.r_min)?;
        finite(&format!("{prefix}.r_max"), self.r_max)?;
        if self.r_max <= self.r_min {
            return Err(ParamError::new(
                format!("{prefix}.r_max"),
                self.r_max,
                format!("must exceed r_min = {}", self.r_min),
            ));
        }
        Ok(())
    }
}

/// Diode resistance: open (`r_min`) under a forward or zero gradient.
pub fn valve_resistance(p_upstream: f64, p_downstream: f64, valve: &ValveParams) -> f64 {
    if p_upstream >= p_downstream {
        valve.r_min
    } else {
        valve.r_max
    }
}

pub fn valve_flow(p_upstream: f64, p_downstream: f64, valve: &ValveParams) -> f64 {
    (p_upstream - p_downstream) / valve_resistance(p_upstream, p_downstream, valve)
}

/// Resistance [mmHg·s/mL], compliance [mL/mmHg], inertance [mmHg·s²/mL].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CompartmentParams {
    pub r: f64,
    pub c: f64,
    pub l: f64,
}

impl CompartmentParams {
    pub fn validate(&self, prefix: &str) -> Result<(), ParamError> {
        positive(&format!("{prefix}.r"), self.r)?;
        positive(&format!("{prefix}.c"), self.c)?;
        positive(&format!("{prefix}.l"), self.l)
    }
}

/// Pressure exerted on the heart by surrounding tissue.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ExternalPressure {
    Constant { value: f64 },
    /// `mean + amplitude * sin(2 pi t / period)`
    Sinusoid {
        mean: f64,
        amplitude: f64,
        period: f64,
    },
}

impl ExternalPressure {
    pub fn at(&self, t: f64) -> f64 {
        match *self {
            ExternalPressure::Constant { value } => value,
            ExternalPressure::Sinusoid {
                mean,
                amplitude,
                period,
            } => mean + amplitude * (2.0 * PI * t / period).sin(),
        }
    }

    pub fn is_constant(&self) -> bool {
        match *self {
            ExternalPressure::Constant { .. } => true,
            ExternalPressure::Sinusoid { amplitude, .. } => amplitude == 0.0,
        }
    }
}

impl Default for ExternalPressure {
    fn default() -> Self {
        ExternalPressure::Constant { value: 0.0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    pub la: ChamberParams,
    pub lv: ChamberParams,
    pub ra: ChamberParams,
    pub rv: ChamberParams,
    pub mv: ValveParams,
    pub av: ValveParams,
    pub tv: ValveParams,
    pub pv: ValveParams,
    pub ar_sys: CompartmentParams,
    pub ven_sys: CompartmentParams,
    pub ar_pul: CompartmentParams,
    pub ven_pul: CompartmentParams,
    /// Heartbeat period [s].
    pub t_beat: f64,
    pub p_ex: ExternalPressure,
}

impl ModelParams {
    pub fn chamber(&self, c: Chamber) -> &ChamberParams {
        match c {
            Chamber::La => &self.la,
            Chamber::Lv => &self.lv,
            Chamber::Ra => &self.ra,
            Chamber::Rv => &self.rv,
        }
    }

    pub fn chamber_mut(&mut self, c: Chamber) -> &mut ChamberParams {
        match c {
            Chamber::La => &mut self.la,
            Chamber::Lv => &mut self.lv,
            Chamber::Ra => &mut self.ra,
            Chamber::Rv => &mut self.rv,
        }
    }

    pub fn valve(&self, v: Valve) -> &ValveParams {
        match v {
            Valve::Mv => &self.mv,
            Valve::Av => &self.av,
            Valve::Tv => &self.tv,
            Valve::Pv => &self.pv,
        }
    }

    pub fn valve_mut(&mut self, v: Valve) -> &mut ValveParams {
        match v {
            Valve::Mv => &mut self.mv,
            Valve::Av => &mut self.av,
            Valve::Tv => &mut self.tv,
            Valve::Pv => &mut self.pv,
        }
    }

    pub fn compartment(&self, c: Compartment) -> &CompartmentParams {
        match c {
            Compartment::ArSys => &self.ar_sys,
            Compartment::VenSys => &self.ven_sys,
            Compartment::ArPul => &self.ar_pul,
            Compartment::VenPul => &self.ven_pul,
        }
    }

    pub fn compartment_mut(&mut self, c: Compartment) -> &mut CompartmentParams {
        match c {
            Compartment::ArSys => &mut self.ar_sys,
            Compartment::VenSys => &mut self.ven_sys,
            Compartment::ArPul => &mut self.ar_pul,
            Compartment::VenPul => &mut self.ven_pul,
        }
    }

    pub fn validate(&self) -> Result<(), ParamError> {
        positive("t_beat", self.t_beat)?;
        for c in Chamber::ALL {
            self.chamber(c)
                .validate(&format!("chamber.{}", c.key()), self.t_beat)?;
        }
        for v in Valve::ALL {
            self.valve(v).validate(&format!("valve.{}", v.key()))?;
        }
        for c in Compartment::ALL {
            self.compartment(c)
                .validate(&format!("compartment.{}", c.key()))?;
        }
        match self.p_ex {
            ExternalPressure::Constant { value } => finite("p_ex.mean", value)?,
            ExternalPressure::Sinusoid {
                mean,
                amplitude,
                period,
            } => {
                finite("p_ex.mean", mean)?;
                finite("p_ex.amplitude", amplitude)?;
                positive("p_ex.period", period)?;
            }
        }
        Ok(())
    }

    /// Sorted, de-duplicated activation breakpoints of all chambers within one beat.
    pub fn activation_breakpoints(&self) -> Vec<f64> {
        let mut out: Vec<f64> = Chamber::ALL
            .iter()
            .flat_map(|&c| self.chamber(c).breakpoints())
            .filter(|&b| b > 0.0 && b < self.t_beat)
            .collect();
        out.sort_by(f64::total_cmp);
        out.dedup_by(|a, b| (*a - *b).abs() <= 1e-12 * self.t_beat);
        out
    }

    /// Reference parameter set: textbook-range pressures and stroke volume.
    pub fn physiological_default() -> Self {
        let ventricle_timing = |e_pass, e_act_max, v0| ChamberParams {
            e_pass,
            e_act_max,
            v0,
            onset: 0.0,
            t_contract: 0.25,
            t_relax: 0.15,
        };
        let atrium_timing = |e_pass, e_act_max, v0| ChamberParams {
            e_pass,
            e_act_max,
            v0,
            onset: 0.6,
            t_contract: 0.1,
            t_relax: 0.1,
        };
        let valve = ValveParams {
            r_min: 0.0075,
            r_max: 75006.2,
        };
        Self {
            la: atrium_timing(0.09, 0.07, 4.0),
            lv: ventricle_timing(0.08, 2.75, 5.0),
            ra: atrium_timing(0.07, 0.06, 4.0),
            rv: ventricle_timing(0.05, 0.55, 10.0),
            mv: valve,
            av: valve,
            tv: valve,
            pv: valve,
            ar_sys: CompartmentParams {
                r: 1.0,
                c: 1.6,
                l: 5e-3,
            },
            ven_sys: CompartmentParams {
                r: 0.05,
                c: 60.0,
                l: 5e-4,
            },
            ar_pul: CompartmentParams {
                r: 0.08,
                c: 10.0,
                l: 5e-4,
            },
            ven_pul: CompartmentParams {
                r: 0.035,
                c: 16.0,
                l: 5e-4,
            },
            t_beat: 0.8,
            p_ex: ExternalPressure::Constant { value: 0.0 },
        }
    }
}

impl CirculationState {
    /// End-diastolic volumes, resting pressures, zero flows.
    pub fn physiological_default() -> Self {
        Self {
            v_la: 72.0,
            v_lv: 116.0,
            v_ra: 60.0,
            v_rv: 116.0,
            p_ar_sys: 84.0,
            p_ven_sys: 9.6,
            p_ar_pul: 16.0,
            p_ven_pul: 11.0,
            q_ar_sys: 0.0,
            q_ven_sys: 0.0,
            q_ar_pul: 0.0,
            q_ven_pul: 0.0,
        }
    }
}

/// Chamber pressures with an optional imposed LV pressure, then valve flows.
/// `open` fixes the valve states instead of reading them from the gradients.
fn derived_with(
    t: f64,
    c1: &CirculationState,
    params: &ModelParams,
    p_lv: Option<f64>,
    open: Option<[bool; 4]>,
) -> DerivedState {
    let p_ex = params.p_ex.at(t);
    let press = |ch: &ChamberParams, v: f64| {
        chamber_pressure(elastance_at(ch, t, params.t_beat), v, ch.v0, p_ex)
    };
    let p_la = press(&params.la, c1.v_la);
    let p_lv = p_lv.unwrap_or_else(|| press(&params.lv, c1.v_lv));
    let p_ra = press(&params.ra, c1.v_ra);
    let p_rv = press(&params.rv, c1.v_rv);
    let flow = |i: usize, up: f64, down: f64, v: &ValveParams| match open {
        None => valve_flow(up, down, v),
        Some(o) => (up - down) / if o[i] { v.r_min } else { v.r_max },
    };
    DerivedState {
        p_lv,
        p_la,
        p_rv,
        p_ra,
        q_mv: flow(0, p_la, p_lv, &params.mv),
        q_av: flow(1, p_lv, c1.p_ar_sys, &params.av),
        q_tv: flow(2, p_ra, p_rv, &params.tv),
        q_pv: flow(3, p_rv, c1.p_ar_pul, &params.pv),
    }
}

/// Algebraic closure c2 = W(t, c1).
pub fn derived_state(t: f64, c1: &CirculationState, params: &ModelParams) -> DerivedState {
    derived_with(t, c1, params, None, None)
}

/// Reduced closure: `p_lv` is imposed instead of computed from the LV elastance.
pub fn derived_state_reduced(
    t: f64,
    c1: &CirculationState,
    p_lv: f64,
    params: &ModelParams,
) -> DerivedState {
    derived_with(t, c1, params, Some(p_lv), None)
}

/// Closure with the valve states held fixed (MV, AV, TV, PV order), as used
/// between located valve events.
pub fn derived_state_frozen(t: f64, c1: &CirculationState, open: [bool; 4], params: &ModelParams) -> DerivedState {
    derived_with(t, c1, params, None, Some(open))
}

/// Right-hand side dc1/dt = D(t, c1, c2).
pub fn rhs_full(
    _t: f64,
    c1: &CirculationState,
    c2: &DerivedState,
    params: &ModelParams,
) -> CirculationState {
    let (ar_s, ven_s, ar_p, ven_p) = (&params.ar_sys, &params.ven_sys, &params.ar_pul, &params.ven_pul);
    CirculationState {
        v_la: c1.q_ven_pul - c2.q_mv,
        v_lv: c2.q_mv - c2.q_av,
        v_ra: c1.q_ven_sys - c2.q_tv,
        v_rv: c2.q_tv - c2.q_pv,
        p_ar_sys: (c2.q_av - c1.q_ar_sys) / ar_s.c,
        p_ven_sys: (c1.q_ar_sys - c1.q_ven_sys) / ven_s.c,
        p_ar_pul: (c2.q_pv - c1.q_ar_pul) / ar_p.c,
        p_ven_pul: (c1.q_ar_pul - c1.q_ven_pul) / ven_p.c,
        q_ar_sys: ((c1.p_ar_sys - c1.p_ven_sys) - ar_s.r * c1.q_ar_sys) / ar_s.l,
        q_ven_sys: ((c1.p_ven_sys - c2.p_ra) - ven_s.r * c1.q_ven_sys) / ven_s.l,
        q_ar_pul: ((c1.p_ar_pul - c1.p_ven_pul) - ar_p.r * c1.q_ar_pul) / ar_p.l,
        q_ven_pul: ((c1.p_ven_pul - c2.p_la) - ven_p.r * c1.q_ven_pul) / ven_p.l,
    }
}

/// Monolithic right-hand side with the closure evaluated internally.
pub fn rhs(t: f64, c1: &CirculationState, params: &ModelParams) -> CirculationState {
    rhs_full(t, c1, &derived_state(t, c1, params), params)
}

/// Right-hand side with the LV pressure imposed (coupled mode).
pub fn rhs_reduced(
    t: f64,
    c1: &CirculationState,
    p_lv: f64,
    params: &ModelParams,
) -> CirculationState {
    rhs_full(t, c1, &derived_state_reduced(t, c1, p_lv, params), params)
}

/// Stressed blood volume: chamber volumes plus C * p of each compartment.
/// Unstressed compartment volumes are constant and omitted.
pub fn total_blood_volume(c1: &CirculationState, params: &ModelParams) -> f64 {
    c1.v_la
        + c1.v_lv
        + c1.v_ra
        + c1.v_rv
        + params.ar_sys.c * c1.p_ar_sys
        + params.ven_sys.c * c1.p_ven_sys
        + params.ar_pul.c * c1.p_ar_pul
        + params.ven_pul.c * c1.p_ven_pul
}

fn finite(name: &str, v: f64) -> Result<(), ParamError> {
    if v.is_finite() {
        Ok(())
    } else {
        Err(ParamError::new(name, v, "must be finite"))
    }
}

fn positive(name: &str, v: f64) -> Result<(), ParamError> {
    finite(name, v)?;
    if v > 0.0 {
        Ok(())
    } else {
        Err(ParamError::new(name, v, "must be > 0"))
    }
}

fn non_negative(name: &str, v: f64) -> Result<(), ParamError> {
    finite(name, v)?;
    if v >= 0.0 {
        Ok(())
    } else {
        Err(ParamError::new(name, v, "must be >= 0"))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn chamber() -> ChamberParams {
        ChamberParams {
            e_pass: 0.08,
            e_act_max: 2.75,
            v0: 5.0,
            onset: 0.1,
            t_contract: 0.3,
            t_relax: 0.15,
        }
    }

    #[test]
    fn elastance_rest_peak_and_range() {
        let ch = chamber();
        let tb = 0.8;
        assert_eq!(elastance_at(&ch, 0.05, tb), ch.e_pass);
        assert_eq!(elastance_at(&ch, 0.7, tb), ch.e_pass);
        assert_relative_eq!(elastance_at(&ch, 0.4, tb), ch.e_pass + ch.e_act_max, epsilon = 1e-14);
        for i in 0..=1600 {
            let t = i as f64 * 1e-3 - 0.4;
            let e = elastance_at(&ch, t, tb);
            assert!(e >= ch.e_pass && e <= ch.e_pass + ch.e_act_max);
            assert_relative_eq!(e, elastance_at(&ch, t + tb, tb), epsilon = 1e-12);
        }
    }

    #[test]
    fn elastance_is_continuous_across_branches() {
        let ch = chamber();
        for b in ch.breakpoints() {
            let lo = elastance_at(&ch, b - 1e-9, 0.8);
            let hi = elastance_at(&ch, b + 1e-9, 0.8);
            assert!((lo - hi).abs() < 1e-6, "jump at {b}: {lo} vs {hi}");
        }
    }

    #[test]
    fn chamber_pressure_examples() {
        assert_eq!(chamber_pressure(1.0, 7.0, 7.0, 0.0), 0.0);
        assert_relative_eq!(chamber_pressure(0.08, 105.0, 5.0, 0.0), 8.0, epsilon = 1e-12);
        assert_eq!(chamber_pressure(1.0, 20.0, 10.0, 5.0), 15.0);
    }

    #[test]
    fn valve_diode_convention() {
        let v = ValveParams {
            r_min: 0.05,
            r_max: 1e5,
        };
        assert_eq!(valve_resistance(10.0, 5.0, &v), v.r_min);
        assert_eq!(valve_resistance(5.0, 10.0, &v), v.r_max);
        assert_eq!(valve_resistance(3.0, 3.0, &v), v.r_min);
        assert_eq!(valve_flow(3.0, 3.0, &v), 0.0);
        assert_relative_eq!(valve_flow(6.0, 1.0, &v), 100.0, epsilon = 1e-12);
        assert_relative_eq!(valve_flow(1.0, 6.0, &v), -5e-5, epsilon = 1e-18);
    }

    #[test]
    fn zero_state_has_zero_derived_and_rhs() {
        let mut p = ModelParams::physiological_default();
        p.p_ex = ExternalPressure::Constant { value: 0.0 };
        let c1 = CirculationState {
            v_la: p.la.v0,
            v_lv: p.lv.v0,
            v_ra: p.ra.v0,
            v_rv: p.rv.v0,
            ..Default::default()
        };
        let c2 = derived_state(0.13, &c1, &p);
        assert_eq!(c2, DerivedState::default());
        assert_eq!(rhs_full(0.13, &c1, &c2, &p).to_array(), [0.0; 12]);
    }

    #[test]
    fn single_mitral_flow_moves_volume_between_left_chambers() {
        let p = ModelParams::physiological_default();
        let c1 = CirculationState::default();
        let c2 = DerivedState {
            q_mv: 42.0,
            ..Default::default()
        };
        let d = rhs_full(0.0, &c1, &c2, &p);
        assert_eq!(d.v_la, -42.0);
        assert_eq!(d.v_lv, 42.0);
        assert_eq!((d.v_ra, d.v_rv), (0.0, 0.0));
    }

    #[test]
    fn total_blood_volume_sums_chambers() {
        let p = ModelParams::physiological_default();
        assert_eq!(total_blood_volume(&CirculationState::default(), &p), 0.0);
        let c1 = CirculationState {
            v_la: 100.0,
            v_lv: 120.0,
            v_ra: 90.0,
            v_rv: 110.0,
            ..Default::default()
        };
        assert_eq!(total_blood_volume(&c1, &p), 420.0);
    }

    #[test]
    fn reduced_closure_keeps_imposed_lv_pressure() {
        let p = ModelParams::physiological_default();
        let c1 = CirculationState::physiological_default();
        let c2 = derived_state_reduced(0.2, &c1, 55.5, &p);
        assert_eq!(c2.p_lv, 55.5);
        // p_lv equal to both neighbours stops LV volume change
        let mut c1b = c1;
        c1b.p_ar_sys = derived_state(0.2, &c1, &p).p_la;
        let p_eq = c1b.p_ar_sys;
        assert_eq!(rhs_reduced(0.2, &c1b, p_eq, &p).v_lv, 0.0);
    }

    #[test]
    fn default_params_validate() {
        ModelParams::physiological_default().validate().unwrap();
        let mut p = ModelParams::physiological_default();
        p.av.r_max = p.av.r_min;
        assert_eq!(p.validate().unwrap_err().name, "valve.av.r_max");
        let mut p = ModelParams::physiological_default();
        p.lv.t_relax = 0.6;
        assert!(p.validate().is_err());
    }
}
