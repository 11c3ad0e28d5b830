use approx::assert_relative_eq;
use proptest::prelude::*;
use relblow::config::{merge, noniso_family, noniso_weak, set_path, RunConfig};
use relblow::criteria::{
    classify_iso, Character, InitialData, IsoVerdict, NonisoContext, NonisoVerdict,
};
use relblow::eos::{GasParams, Polytropic, PressureLaw};
use relblow::initial::{InitialSpec, LawKind, Profile};
use relblow::isentropic::{
    admissible_gap, from_riemann_iso, quantity_y, to_riemann_iso, RiemannPairIso,
};
use relblow::nonisentropic::{from_riemann_law, to_riemann_law};
use relblow::solver::{Boundary, Grid};
use serde_json::json;
use std::sync::Mutex;

fn gamma() -> impl Strategy<Value = f64> {
    prop_oneof![Just(1.4), Just(5.0 / 3.0), Just(2.0), Just(2.9), Just(3.0)]
}

fn character(d: f64) -> Character {
    if d > 0.0 {
        Character::R
    } else if d < 0.0 {
        Character::C
    } else {
        Character::N
    }
}

fn sine_data(amp_rho: f64, amp_u: f64, phase: f64, p: GasParams) -> InitialData {
    let spec = InitialSpec::Primitive {
        rho: Profile::Sine {
            base: 0.1,
            amplitude: amp_rho,
            wavelength: 4.0,
            phase: 0.0,
        },
        u: Profile::Sine {
            base: 0.0,
            amplitude: amp_u,
            wavelength: 4.0,
            phase,
        },
        s: Profile::Constant { value: 0.0 },
    };
    let grid = Grid {
        x_min: 0.0,
        x_max: 4.0,
        cells: 64,
        boundary: Boundary::Periodic,
    };
    InitialData::from_spec(&spec, &grid, 2, LawKind::Isentropic, p).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn iso_transform_round_trips(g in gamma(), w in -0.5f64..0.5, frac in 1e-3f64..0.95) {
        let p = GasParams::default().with_gamma(g);
        let pair = RiemannPairIso::new(w, w + frac * admissible_gap(&p));
        let (rho, u) = from_riemann_iso(pair, &p).unwrap();
        let back = to_riemann_iso(rho, u, &p).unwrap();
        prop_assert!((back.w - pair.w).abs() < 1e-9 && (back.z - pair.z).abs() < 1e-9);
    }

    #[test]
    fn polytropic_transform_round_trips(g in gamma(), rho in 1e-3f64..0.5, u in -0.6f64..0.6, s in -1.0f64..1.0) {
        let law = Polytropic::new(GasParams::default().with_gamma(g));
        prop_assume!(law.state(rho, s).unwrap().p_rho < 1.0);
        let t = to_riemann_law(&law, rho, u, s).unwrap();
        let (r2, u2, s2) = from_riemann_law(&law, t).unwrap();
        assert_relative_eq!(r2, rho, max_relative = 1e-9);
        prop_assert!((u2 - u).abs() < 1e-9 && s2 == s);
    }

    /// The positive weights never change the R/C character.
    #[test]
    fn weighting_preserves_character(amp_rho in 0.0f64..0.05, amp_u in -0.05f64..0.05, phase in 0.0f64..6.3) {
        let d = sine_data(amp_rho, amp_u, phase, GasParams::default());
        let rep = classify_iso(&d).unwrap();
        for i in 0..d.len() {
            prop_assert_eq!(rep.backward[i], character(d.xi0[i]));
            prop_assert_eq!(rep.forward[i], character(d.zeta0[i]));
        }
    }

    /// Density at the sound-speed limit: 𝒴 ≥ 1 for γ = 3.
    #[test]
    fn y_is_at_least_one_for_gamma_three(rho in 1e-8f64..0.3) {
        let p = GasParams::default().with_gamma(3.0);
        prop_assert!(quantity_y(rho, &p).unwrap() >= 1.0);
    }

    #[test]
    fn eos_is_monotone(g in gamma(), rho in 1e-4f64..1.0, s in -1.0f64..1.0, dr in 1e-3f64..0.5) {
        let law = Polytropic::new(GasParams::default().with_gamma(g));
        let (a, b) = (law.state(rho, s).unwrap(), law.state(rho * (1.0 + dr), s).unwrap());
        prop_assert!(a.p > 0.0 && b.p > a.p && b.n > a.n && a.n <= rho);
    }

    #[test]
    fn merge_is_idempotent_and_overrides_win(cells in 8usize..5000, t_end in 0.1f64..10.0) {
        let base = RunConfig::default().to_value();
        let over = json!({ "grid": { "cells": cells }, "time": { "t_end": t_end } });
        let mut once = base.clone();
        merge(&mut once, over.clone());
        let mut twice = once.clone();
        merge(&mut twice, over);
        prop_assert_eq!(&once, &twice);
        let mut set = base;
        set_path(&mut set, "grid.cells", json!(cells)).unwrap();
        set_path(&mut set, "time.t_end", json!(t_end)).unwrap();
        prop_assert_eq!(&once, &set);
        let cfg = RunConfig::from_value(once).unwrap();
        prop_assert_eq!((cfg.grid.cells, cfg.time.t_end), (cells, t_end));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]

    /// Rarefaction-only data is global; adding any compression makes it
    /// finite-time, and a stronger compression never predicts a later time.
    #[test]
    fn iso_verdict_is_monotone_in_compression(amp in 0.005f64..0.03, scale in 1.1f64..3.0) {
        let p = GasParams::default();
        let weak = classify_iso(&sine_data(amp, 0.0, 0.0, p)).unwrap();
        let strong = classify_iso(&sine_data(amp * scale, 0.0, 0.0, p)).unwrap();
        prop_assert_eq!(weak.iso_verdict, Some(IsoVerdict::FiniteTime));
        prop_assert_eq!(strong.iso_verdict, Some(IsoVerdict::FiniteTime));
        prop_assert!(strong.predicted_window.unwrap().t_riccati < weak.predicted_window.unwrap().t_riccati);
        let flat = classify_iso(&sine_data(0.0, 0.0, 0.0, p)).unwrap();
        prop_assert_eq!(flat.iso_verdict, Some(IsoVerdict::Global));
    }

    /// Steeper members of the compression family never lose the guarantee.
    #[test]
    fn noniso_verdict_is_monotone_in_steepness(s in 1.0f64..8.0, factor in 1.05f64..2.0) {
        static CTX: Mutex<Option<NonisoContext>> = Mutex::new(None);
        let cfg = noniso_weak().unwrap();
        let mut guard = CTX.lock().unwrap();
        let ctx = guard.get_or_insert_with(|| NonisoContext::new(cfg.criteria.noniso()));
        let mut verdict = |k: f64| {
            let spec = noniso_family(&cfg.gas, k).unwrap();
            let d = InitialData::from_spec(&spec, &cfg.grid, cfg.criteria.data_refinement, cfg.law, cfg.gas).unwrap();
            ctx.classify(&d).unwrap().noniso.unwrap().verdict
        };
        let (a, b) = (verdict(s), verdict(s * factor));
        prop_assert!(a != NonisoVerdict::BlowupGuaranteed || b == NonisoVerdict::BlowupGuaranteed);
    }
}
