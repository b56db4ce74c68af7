mod common;

use common::tolerances::SUB_BALANCE;
use lumpcirc::energy::{dissipated_power, snapshot, stored_energy_rate, sub_balances};
use lumpcirc::integrate::{simulate, ClosureMode, Sample, SolverConfig};
use lumpcirc::model::*;
use proptest::prelude::*;

fn params() -> ModelParams {
    ModelParams::physiological_default()
}

fn state() -> impl Strategy<Value = (f64, CirculationState)> {
    (
        0.0..0.8f64,
        prop::array::uniform4(1.0..250.0f64),
        prop::array::uniform4(-5.0..150.0f64),
        prop::array::uniform4(-600.0..600.0f64),
    )
        .prop_map(|(t, v, p, q)| {
            let mut a = [0.0; 12];
            a[..4].copy_from_slice(&v);
            a[4..8].copy_from_slice(&p);
            a[8..].copy_from_slice(&q);
            (t, CirculationState::from_array(a))
        })
}

fn valve() -> impl Strategy<Value = ValveParams> {
    (1e-4..1.0f64, 1.0..1e6f64).prop_map(|(r_min, ratio)| ValveParams {
        r_min,
        r_max: r_min * (1.0 + ratio),
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn valve_flow_follows_the_gradient(v in valve(), up in -200.0..200.0f64, down in -200.0..200.0f64) {
        let q = valve_flow(up, down, &v);
        prop_assert!(q * (up - down) >= 0.0);
    }

    #[test]
    fn reverse_leakage_is_bounded(v in valve(), up in -200.0..200.0f64, gap in 1e-9..200.0f64) {
        let down = up + gap;
        let q = valve_flow(up, down, &v);
        prop_assert!(q.abs() <= (down - up) / v.r_max * (1.0 + 1e-15));
    }

    #[test]
    fn reduced_rhs_with_native_p_lv_matches_full((t, c1) in state()) {
        let p = params();
        let c2 = derived_state(t, &c1, &p);
        let full = rhs_full(t, &c1, &c2, &p).to_array();
        let reduced = rhs_reduced(t, &c1, c2.p_lv, &p).to_array();
        for i in 0..12 {
            prop_assert_eq!(full[i], reduced[i]);
        }
    }

    #[test]
    fn volume_rate_vanishes((t, c1) in state()) {
        let p = params();
        let d = rhs(t, &c1, &p);
        let rate = d.v_la + d.v_lv + d.v_ra + d.v_rv
            + p.ar_sys.c * d.p_ar_sys + p.ven_sys.c * d.p_ven_sys
            + p.ar_pul.c * d.p_ar_pul + p.ven_pul.c * d.p_ven_pul;
        let scale: f64 = [d.v_la, d.v_lv, d.v_ra, d.v_rv].iter().map(|x| x.abs()).sum::<f64>()
            + p.ar_sys.c * d.p_ar_sys.abs() + p.ven_sys.c * d.p_ven_sys.abs()
            + p.ar_pul.c * d.p_ar_pul.abs() + p.ven_pul.c * d.p_ven_pul.abs();
        prop_assert!(rate.abs() <= 1e-13 * scale.max(1.0), "rate {rate:e} scale {scale:e}");
    }

    #[test]
    fn elastance_is_periodic_and_bounded(t in -5.0..5.0f64, k in 1..20i32) {
        let p = params();
        for ch in [&p.la, &p.lv, &p.ra, &p.rv] {
            let e = elastance_at(ch, t, p.t_beat);
            let shifted = elastance_at(ch, t + k as f64 * p.t_beat, p.t_beat);
            prop_assert!((e - shifted).abs() <= 1e-9 * e, "{e} vs {shifted}");
            prop_assert!(e >= ch.e_pass && e <= ch.e_pass + ch.e_act_max);
            let oracle = ch.e_pass + ch.e_act_max * common::activation(ch, t, p.t_beat);
            prop_assert!((e - oracle).abs() <= 1e-12 * e);
        }
    }

    #[test]
    fn sub_balances_hold((t, c1) in state()) {
        for b in sub_balances(t, &c1, &params()) {
            prop_assert!(b.relative_error() <= SUB_BALANCE, "{} {:e}", b.name, b.relative_error());
        }
    }

    #[test]
    fn dissipation_never_positive((t, c1) in state()) {
        let p = params();
        let d = dissipated_power(&c1, &derived_state(t, &c1, &p), &p);
        for x in d.valves.iter().chain(&d.compartments) {
            prop_assert!(*x <= 0.0);
        }
        let sum: f64 = d.valves.iter().chain(&d.compartments).sum();
        prop_assert_eq!(sum, d.total);
    }

    #[test]
    fn power_terms_match_oracle((t, c1) in state()) {
        let p = params();
        let s = Sample { t, state: c1, derived: derived_state(t, &c1, &p) };
        let snap = snapshot(t, &c1, &p);
        let act = common::active(&s, &p);
        let diss = common::dissipation(&c1, &s.derived, &p);
        let act_scale: f64 = common::active_terms(&s, &p).iter().map(|x| x.abs()).sum();
        prop_assert!((snap.active.total - act).abs() <= 1e-12 * act_scale, "{} vs {act}", snap.active.total);
        prop_assert!((snap.dissipation.total - diss).abs() <= 1e-11 * diss.abs().max(1.0));
        prop_assert!((snap.stored.total - common::stored(&c1, &p, false)).abs() <= 1e-12 * snap.stored.total);
        // dM/dt from the right-hand side equals the power sum
        let rate = stored_energy_rate(&s, &p, ClosureMode::Monolithic);
        let scale = act_scale + diss.abs() + rate.abs();
        prop_assert!((rate - snap.total_power()).abs() <= 1e-12 * scale.max(1.0));
    }
}

#[test]
fn simulation_is_deterministic() {
    let p = params();
    let cfg = SolverConfig::default();
    let c0 = CirculationState::physiological_default();
    let a = simulate(&p, &c0, 2, &cfg).unwrap();
    let b = simulate(&p, &c0, 2, &cfg).unwrap();
    assert_eq!(a.len(), b.len());
    for (x, y) in a.samples.iter().zip(&b.samples) {
        assert_eq!(x.t.to_bits(), y.t.to_bits());
        for (u, v) in x.state.to_array().iter().zip(y.state.to_array()) {
            assert_eq!(u.to_bits(), v.to_bits());
        }
    }
}
