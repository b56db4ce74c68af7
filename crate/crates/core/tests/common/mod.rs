//! Independent oracles for integration tests. Written from the model
//! definitions, not from the library's energy module.
#![allow(dead_code)]

use std::f64::consts::PI;

use lumpcirc::integrate::{Sample, Trajectory};
use lumpcirc::model::{ChamberParams, CirculationState, DerivedState, ModelParams};

pub mod tolerances;

pub fn activation(ch: &ChamberParams, t: f64, t_beat: f64) -> f64 {
    let mut s = t % t_beat;
    if s < 0.0 {
        s += t_beat;
    }
    let tau = s - ch.onset;
    if tau < 0.0 || tau >= ch.t_contract + ch.t_relax {
        0.0
    } else if tau < ch.t_contract {
        (PI * tau / (2.0 * ch.t_contract)).sin().powi(2)
    } else {
        (PI * (tau - ch.t_contract) / (2.0 * ch.t_relax)).cos().powi(2)
    }
}

/// Chambers in LA, LV, RA, RV order.
pub fn chambers(p: &ModelParams) -> [&ChamberParams; 4] {
    [&p.la, &p.lv, &p.ra, &p.rv]
}

pub fn volumes(c: &CirculationState) -> [f64; 4] {
    [c.v_la, c.v_lv, c.v_ra, c.v_rv]
}

/// dV/dt of each chamber from the valve and venous flows.
pub fn volume_rates(c: &CirculationState, d: &DerivedState) -> [f64; 4] {
    [
        c.q_ven_pul - d.q_mv,
        d.q_mv - d.q_av,
        c.q_ven_sys - d.q_tv,
        d.q_tv - d.q_pv,
    ]
}

/// Stored mechanical energy; `skip_lv` drops the LV term.
pub fn stored(c: &CirculationState, p: &ModelParams, skip_lv: bool) -> f64 {
    let mut e = 0.0;
    for (i, (ch, v)) in chambers(p).iter().zip(volumes(c)).enumerate() {
        if !(skip_lv && i == 1) {
            e += 0.5 * ch.e_pass * (v - ch.v0) * (v - ch.v0);
        }
    }
    let comps = [
        (&p.ar_sys, c.p_ar_sys, c.q_ar_sys),
        (&p.ven_sys, c.p_ven_sys, c.q_ven_sys),
        (&p.ar_pul, c.p_ar_pul, c.q_ar_pul),
        (&p.ven_pul, c.p_ven_pul, c.q_ven_pul),
    ];
    for (k, pr, q) in comps {
        e += 0.5 * k.c * pr * pr + 0.5 * k.l * q * q;
    }
    e
}

/// Valve dissipation as -dp q, vascular as -R Q^2.
pub fn dissipation_terms(c: &CirculationState, d: &DerivedState, p: &ModelParams) -> [f64; 8] {
    [
        -(d.p_la - d.p_lv) * d.q_mv,
        -(d.p_lv - c.p_ar_sys) * d.q_av,
        -(d.p_ra - d.p_rv) * d.q_tv,
        -(d.p_rv - c.p_ar_pul) * d.q_pv,
        -p.ar_sys.r * c.q_ar_sys * c.q_ar_sys,
        -p.ven_sys.r * c.q_ven_sys * c.q_ven_sys,
        -p.ar_pul.r * c.q_ar_pul * c.q_ar_pul,
        -p.ven_pul.r * c.q_ven_pul * c.q_ven_pul,
    ]
}

pub fn dissipation(c: &CirculationState, d: &DerivedState, p: &ModelParams) -> f64 {
    dissipation_terms(c, d, p).iter().sum()
}

/// Active power per chamber, monolithic closure.
pub fn active_terms(s: &Sample, p: &ModelParams) -> [f64; 4] {
    let rates = volume_rates(&s.state, &s.derived);
    let v = volumes(&s.state);
    let mut out = [0.0; 4];
    for (i, ch) in chambers(p).iter().enumerate() {
        let e_act = ch.e_act_max * activation(ch, s.t, p.t_beat);
        out[i] = -e_act * (v[i] - ch.v0) * rates[i];
    }
    out
}

pub fn active(s: &Sample, p: &ModelParams) -> f64 {
    active_terms(s, p).iter().sum()
}

pub fn external(s: &Sample, p: &ModelParams) -> f64 {
    -p.p_ex.at(s.t) * volume_rates(&s.state, &s.derived).iter().sum::<f64>()
}

pub fn trapezoid(t: &[f64], y: &[f64]) -> f64 {
    (1..t.len()).map(|i| 0.5 * (t[i] - t[i - 1]) * (y[i] + y[i - 1])).sum()
}

/// Integral of `f` over the samples of `traj`.
pub fn integral(traj: &Trajectory, f: impl Fn(&Sample) -> f64) -> f64 {
    let t: Vec<f64> = traj.samples.iter().map(|s| s.t).collect();
    let y: Vec<f64> = traj.samples.iter().map(f).collect();
    trapezoid(&t, &y)
}

/// sum V + sum C p
pub fn blood_volume(c: &CirculationState, p: &ModelParams) -> f64 {
    c.v_la
        + c.v_lv
        + c.v_ra
        + c.v_rv
        + p.ar_sys.c * c.p_ar_sys
        + p.ven_sys.c * c.p_ven_sys
        + p.ar_pul.c * c.p_ar_pul
        + p.ven_pul.c * c.p_ven_pul
}

/// Valve gradients in MV, AV, TV, PV order.
pub fn valve_gradients(c: &CirculationState, d: &DerivedState) -> [f64; 4] {
    [d.p_la - d.p_lv, d.p_lv - c.p_ar_sys, d.p_ra - d.p_rv, d.p_rv - c.p_ar_pul]
}

pub fn max_abs(v: impl IntoIterator<Item = f64>) -> f64 {
    v.into_iter().fold(0.0, |m, x| m.max(x.abs()))
}
