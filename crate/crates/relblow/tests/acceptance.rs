//! Acceptance run: one PASS/FAIL line per criterion, non-zero exit if any
//! criterion fails. Run with `cargo test -p relblow --test acceptance`.

use relblow::config::{iso_compression, iso_rarefaction, noniso_flip, noniso_weak, RunConfig};
use relblow::criteria::{classify_iso, InitialData, NonisoContext};
use relblow::driver::{self, Simulation};
use relblow::eos::{asymptotic_orders_check, GasParams};
use relblow::initial::{InitialSpec, Profile};
use relblow::numerics::fit::logspace;
use relblow::solver::{trace_characteristic, CharTrace, TraceSettings};
use relblow::verify::{self, CheckEntry, SuiteResult};
use std::time::Instant;

struct Outcome {
    passed: bool,
    summary: String,
}

fn outcome(passed: bool, summary: impl Into<String>) -> Outcome {
    Outcome {
        passed,
        summary: summary.into(),
    }
}

fn gas(gamma: f64) -> GasParams {
    GasParams::default().with_gamma(gamma)
}

fn worst<'a>(entries: impl IntoIterator<Item = &'a CheckEntry>) -> (bool, f64) {
    entries.into_iter().fold((true, 0.0f64), |(ok, m), e| {
        (ok && e.passed, m.max(e.max_residual))
    })
}

fn pick<'a>(suite: &'a SuiteResult, name: &str) -> &'a CheckEntry {
    suite
        .entry(name)
        .unwrap_or_else(|| panic!("suite has no entry {name}"))
}

const SEED: u64 = 20_240_607;

fn c1() -> Outcome {
    let start = Instant::now();
    let mut entries = vec![];
    for g in [1.4, 2.0, 5.0 / 3.0, 3.0] {
        let es = verify::eos_entries(&gas(g)).unwrap();
        entries.extend(
            es.into_iter()
                .filter(|e| e.name == "eos.derivatives_vs_differences"),
        );
    }
    let secs = start.elapsed().as_secs_f64();
    let (ok, m) = worst(&entries);
    outcome(
        ok && m < 1e-6 && secs < 5.0,
        format!("EOS derivatives vs differences, 20x20 grid, 4 gammas: max rel err {m:.2e} (< 1e-6), {secs:.2} s (< 5 s)"),
    )
}

fn c2() -> Outcome {
    let rhos = logspace(1e-6, 1e-2, 25);
    let mut dev = 0.0f64;
    let mut ok = true;
    // γ = 1.4 at c = 10: at c = 1 the window is not yet asymptotic for it.
    for (g, c) in [(1.4, 10.0), (5.0 / 3.0, 1.0), (2.0, 1.0), (3.0, 1.0)] {
        let p = GasParams { c, ..gas(g) };
        let o = asymptotic_orders_check(&p, &rhos, 0.0).unwrap();
        for (slope, want) in [(o.p, g), (o.dp_drho, g - 1.0), (o.dp_ds, g)] {
            let d = ((slope - want) / want).abs();
            dev = dev.max(d);
            ok &= d < 0.02;
        }
    }
    outcome(ok, format!("small-density slopes of P, dP/drho, dP/dS on [1e-6, 1e-2]: max rel deviation {dev:.2e} (< 2%)"))
}

fn c3() -> Outcome {
    let mut entries = vec![];
    for g in [1.4, 2.0, 3.0] {
        entries.extend(verify::transform_entries(&gas(g), SEED, 1000).unwrap());
    }
    let rt = entries.iter().filter(|e| e.name.ends_with("round_trip"));
    let (ok_rt, m_rt) = worst(rt);
    let (ok_q, m_q) = worst(
        entries
            .iter()
            .filter(|e| e.name == "transform.iso_arctan_vs_quadrature"),
    );
    let n_ok = entries.iter().all(|e| e.samples == 1000);
    outcome(
        ok_rt && ok_q && n_ok,
        format!("round trips on 1000 states per gamma: {m_rt:.2e} (< 1e-9); Arctan vs quadrature {m_q:.2e} (< 1e-10)"),
    )
}

fn c4() -> Outcome {
    let mut entries = vec![];
    for g in [1.4, 2.0, 2.9] {
        entries.extend(verify::weight_entries(&gas(g), SEED, 100).unwrap());
    }
    let (ok, m) = worst(&entries);
    outcome(
        ok && m < 1e-5,
        format!(
            "h1/h2 and h/g defining relations, 100 points per gamma: max residual {m:.2e} (< 1e-5)"
        ),
    )
}

fn c5() -> Outcome {
    let mut fd = vec![];
    let mut exact = vec![];
    for g in [1.4, 2.0, 2.9] {
        for e in verify::derivative_pack_entries(&gas(g), SEED, 100).unwrap() {
            if e.name == "calculus.exact_antisymmetry" {
                exact.push(e);
            } else {
                fd.push(e);
            }
        }
    }
    let (ok_fd, m_fd) = worst(&fd);
    let (ok_ex, m_ex) = worst(&exact);
    outcome(
        ok_fd && ok_ex,
        format!("closed-form partials vs differences {m_fd:.2e} (< 1e-5); antisymmetries {m_ex:.2e} (< 1e-12)"),
    )
}

fn c6(iso: &SuiteResult, poly: &SuiteResult) -> Outcome {
    let names = [
        "solver.constant_state",
        "solver.conservation_per_step",
        "solver.entropy_maximum_principle",
        "solver.self_convergence_order",
    ];
    let ok = names
        .iter()
        .all(|n| pick(iso, n).passed && pick(poly, n).passed);
    let order = |s: &SuiteResult| {
        pick(s, "solver.self_convergence_order").detail["orders"]
            .as_array()
            .unwrap()
            .iter()
            .map(|v| v.as_f64().unwrap())
            .fold(f64::INFINITY, f64::min)
    };
    let cons = pick(iso, "solver.conservation_per_step")
        .max_residual
        .max(pick(poly, "solver.conservation_per_step").max_residual);
    let still = pick(iso, "solver.constant_state")
        .max_residual
        .max(pick(poly, "solver.constant_state").max_residual);
    outcome(
        ok,
        format!(
            "constant state {still:.1e}; L1 order {:.3} / {:.3} (>= 1.8); per-step conservation {cons:.1e} (< 1e-10); entropy range kept",
            order(iso),
            order(poly)
        ),
    )
}

fn ratio_text(e: &CheckEntry) -> String {
    let r: Vec<String> = e.detail["ratios"]
        .as_array()
        .unwrap()
        .iter()
        .map(|v| format!("{:.2}", v.as_f64().unwrap()))
        .collect();
    r.join("/")
}

fn c7(iso: &SuiteResult) -> Outcome {
    let w = pick(iso, "characteristics.w_along_1");
    let z = pick(iso, "characteristics.z_along_2");
    let levels = w.detail["cells"].as_array().unwrap().len();
    outcome(
        w.passed && z.passed && levels >= 3,
        format!(
            "drift ratios over {levels} levels: w along 1 {}, z along 2 {} (each >= 2)",
            ratio_text(w),
            ratio_text(z)
        ),
    )
}

struct BlowupRuns {
    rarefaction: Simulation,
    compression: Simulation,
    compression_cfg: RunConfig,
    t_star: f64,
    x_star: f64,
    seconds: f64,
}

fn blowup_runs() -> BlowupRuns {
    let start = Instant::now();
    let comp = iso_compression();
    let rare = iso_rarefaction();
    let window = classify_iso(&driver::initial_data(&comp).unwrap())
        .unwrap()
        .predicted_window
        .unwrap();
    let (rarefaction, compression) = std::thread::scope(|sc| {
        let r = sc.spawn(|| driver::simulate(&rare).unwrap());
        let c = driver::simulate(&comp).unwrap();
        (r.join().unwrap(), c)
    });
    BlowupRuns {
        rarefaction,
        compression,
        compression_cfg: comp,
        t_star: window.t_riccati,
        x_star: window.x_star,
        seconds: start.elapsed().as_secs_f64(),
    }
}

fn c8(b: &BlowupRuns) -> Outcome {
    let r = b.rarefaction.summary();
    let rare_ok =
        r.completed && r.t_last >= 50.0 - 1e-9 && r.max_dx_z_ratio < 2.0 && r.cells == 4096;
    let obs = b.compression.observation.as_ref().unwrap();
    let t_obs = obs.t_blowup.unwrap_or(f64::NAN);
    let t_growth = obs.t_growth.unwrap_or(f64::NAN);
    let err = (t_obs - b.t_star).abs() / b.t_star;
    let comp_ok = obs.declared
        && t_growth < b.t_star
        && err < 0.2
        && b.compression.history.grid.cells == 4096;
    outcome(
        rare_ok && comp_ok && b.seconds < 300.0,
        format!(
            "rarefaction to t = {:.0}: max|dxz| ratio {:.3} (< 2); compression: 100x growth at {t_growth:.4} < t* = {:.4}, \
             refinement ratio {:.3}, declared at {t_obs:.4} ({:.1}% off); {:.0} s (< 300 s)",
            r.t_last,
            r.max_dx_z_ratio,
            b.t_star,
            obs.refinement_ratio,
            100.0 * err,
            b.seconds
        ),
    )
}

fn c9(b: &BlowupRuns) -> Outcome {
    let e = verify::riccati_fidelity_entry(
        &b.compression.history,
        &b.compression_cfg.gas,
        b.x_star,
        0.8 * b.t_star,
    )
    .unwrap();
    outcome(
        e.passed,
        format!("reconstructed 1/xi vs field along the 1-characteristic to 0.8 t*: max rel err {:.2e} (< 5%)", e.max_residual),
    )
}

fn c10(b: &BlowupRuns) -> Outcome {
    let cfg = &b.compression_cfg;
    let law = cfg.law.build(cfg.gas);
    let mut traces: Vec<CharTrace> = vec![];
    for fam in [1u8, 2] {
        for x in verify::trace_seeds(&cfg.grid, 8) {
            traces.push(
                trace_characteristic(
                    &b.compression.history,
                    fam,
                    x,
                    law.as_ref(),
                    TraceSettings::default(),
                )
                .unwrap(),
            );
        }
    }
    let e = verify::density_bound_entry(&traces, &cfg.gas);
    outcome(
        e.passed && cfg.gas.gamma == 2.0,
        format!(
            "inf rho(1+t)^4 = {:.3e} (> 0) over both families; worst last/first quartile ratio {:.3} (>= 0.5)",
            e.detail["inf_rho_times_1pt_pow"].as_f64().unwrap(),
            e.detail["worst_quartile_ratio"].as_f64().unwrap()
        ),
    )
}

/// Regula falsi (Illinois) on a continuous function with a sign change.
fn illinois(mut f: impl FnMut(f64) -> f64, mut a: f64, mut b: f64, rel_tol: f64) -> f64 {
    let (mut fa, mut fb) = (f(a), f(b));
    assert!(fa * fb < 0.0, "no sign change on [{a}, {b}]");
    let mut side = 0;
    for _ in 0..100 {
        let c = (a * fb - b * fa) / (fb - fa);
        let fc = f(c);
        if fc * fb < 0.0 {
            (a, fa) = (b, fb);
            side = 0;
        } else if side == 1 {
            fa *= 0.5;
        } else {
            side = 1;
        }
        (b, fb) = (c, fc);
        if (b - a).abs() < rel_tol * b.abs() || fc == 0.0 {
            break;
        }
    }
    b
}

fn c11() -> Outcome {
    // Constant entropy: the coupling vanishes and both thresholds are exactly zero.
    let mut flat = noniso_weak().unwrap();
    flat.initial = InitialSpec::Primitive {
        rho: Profile::Sine {
            base: 0.1,
            amplitude: 0.03,
            wavelength: 20.0,
            phase: 0.0,
        },
        u: Profile::Constant { value: 0.0 },
        s: Profile::Constant { value: 0.4 },
    };
    let mut ctx = NonisoContext::new(flat.criteria.noniso());
    let zero = driver::thresholds(&flat, &mut ctx)
        .unwrap()
        .thresholds
        .unwrap();
    let zero_ok = zero.n1 == 0.0 && zero.n2 == 0.0;

    let weak = noniso_weak().unwrap();
    let mut ctx = NonisoContext::new(weak.criteria.noniso());
    let t = driver::thresholds(&weak, &mut ctx)
        .unwrap()
        .thresholds
        .unwrap();
    let rel = |a: f64, b: f64| (a - b).abs() / b.abs();
    let lv = &t.levels;
    let (a, b) = (&lv[lv.len() - 2], &lv[lv.len() - 1]);
    let change = rel(a.n1, b.n1).max(rel(a.n2, b.n2));
    let refine_ok = t.converged && lv.len() >= 2 && change < 0.01;

    let flip = noniso_flip(&weak, &mut ctx, 1e-4).unwrap();
    let family = |s: f64| -> InitialData {
        let spec = relblow::config::noniso_family(&weak.gas, s).unwrap();
        InitialData::from_spec(
            &spec,
            &weak.grid,
            weak.criteria.data_refinement,
            weak.law,
            weak.gas,
        )
        .unwrap()
    };
    let mut margin = |s: f64| {
        let sec = ctx.classify(&family(s)).unwrap().noniso.unwrap();
        (sec.min_r0.0 + sec.constants.n1).min(sec.min_q0.0 + sec.constants.n2)
    };
    let (lo, hi) = (0.5 * flip.s_star, 2.0 * flip.s_star);
    let root = illinois(&mut margin, lo, hi, 1e-7);
    let agree = rel(flip.s_star, root);
    outcome(
        zero_ok && refine_ok && agree < 5e-4,
        format!(
            "constant entropy N1 = {}, N2 = {}; last refinement change {:.2e} (< 1%); flip s* = {:.5} vs root {:.5} (rel {agree:.1e} < 5e-4)",
            zero.n1, zero.n2, change, flip.s_star, root
        ),
    )
}

fn c12(poly: &SuiteResult) -> Outcome {
    let t1 = pick(poly, "conserved.theta1_along_1");
    let t2 = pick(poly, "conserved.theta2_along_1");
    let weak = noniso_weak().unwrap();
    let data = driver::initial_data(&weak).unwrap();
    let mut ctx = NonisoContext::new(weak.criteria.noniso());
    let sec = ctx.classify(&data).unwrap().noniso.unwrap();
    let history = driver::run_on(&weak, weak.grid).unwrap();
    let seeds = verify::trace_seeds(&weak.grid, 8);
    let r = verify::r_bound_entry(&history, &data, sec.constants.n1, sec.sup_r0, &seeds).unwrap();
    outcome(
        t1.passed && t2.passed && r.passed,
        format!(
            "drift ratios theta1 {}, theta2 {} (>= 2); max(r - max(N1, sup r0)) = {:.3e} along 3-characteristics",
            ratio_text(t1),
            ratio_text(t2),
            r.detail["max_r_minus_bound"].as_f64().unwrap()
        ),
    )
}

fn main() {
    let start = Instant::now();
    let (blow, mut results) = std::thread::scope(|sc| {
        let blow = sc.spawn(blowup_runs);
        let suites = sc.spawn(|| {
            (
                verify::run_dynamics_suite(&verify::smooth_iso_config()).unwrap(),
                verify::run_dynamics_suite(&verify::smooth_polytropic_config()).unwrap(),
            )
        });
        let mut results = vec![
            (1, c1()),
            (2, c2()),
            (3, c3()),
            (4, c4()),
            (5, c5()),
            (11, c11()),
        ];
        let (iso, poly) = suites.join().unwrap();
        results.extend([(6, c6(&iso, &poly)), (7, c7(&iso)), (12, c12(&poly))]);
        (blow.join().unwrap(), results)
    });
    results.extend([(8, c8(&blow)), (9, c9(&blow)), (10, c10(&blow))]);
    results.sort_by_key(|r| r.0);
    let mut failed = 0;
    for (n, o) in &results {
        println!(
            "criterion {n:>2}: {} {}",
            if o.passed { "PASS" } else { "FAIL" },
            o.summary
        );
        failed += usize::from(!o.passed);
    }
    println!(
        "{} of {} criteria passed ({:.0} s)",
        results.len() - failed,
        results.len(),
        start.elapsed().as_secs_f64()
    );
    if failed > 0 {
        std::process::exit(1);
    }
}
