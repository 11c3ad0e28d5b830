//! Finite-volume solver, primitive recovery and characteristic tracing.
//!
//! Conserved variables are D = (c⁴ρ+Pu²)/(c²(c²−u²)) and m = (c²ρ+P)u/(c²−u²);
//! the entropy is carried as a non-conservative tracer obeying ∂tS + u∂xS = 0.
//! Cells also keep their chart coordinate (ρ for the barotropic law, the
//! rest-mass density n for the polytropic gas) so that reconstruction and flux
//! evaluation never solve the implicit EOS.

pub mod monitor;
pub mod scheme;
pub mod trace;

pub use monitor::{
    gradient_series, monitor_blowup, BlowupObservation, BlowupSettings, GradientSeries,
};
pub use scheme::{run, step, Boundary, Grid, RunEvent, RunHistory, RunSettings, Solver};
pub use trace::{
    snapshot_samples, trace_characteristic, trace_many, weighted_gradients_non, TraceSettings,
};

use crate::eos::{PressureLaw, ThermoState};
use crate::error::{Error, Result};
use crate::numerics::roots::newton_bracketed;
use serde::{Deserialize, Serialize};

/// Relative residual required of primitive recovery.
pub const RECOVERY_TOL: f64 = 1e-12;

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ConservedState {
    #[serde(rename = "D")]
    pub d: f64,
    pub m: f64,
    /// Entropy tracer (equal to S).
    pub sigma: f64,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Primitive {
    pub rho: f64,
    pub u: f64,
    pub s: f64,
}

impl Primitive {
    pub fn new(rho: f64, u: f64, s: f64) -> Self {
        Primitive { rho, u, s }
    }
}

/// Centered differences of the Riemann invariants and of S at a cell.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct CellGradients {
    pub dx_w: f64,
    pub dx_z: f64,
    pub dx_s: f64,
    pub dxx_s: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct FieldSnapshot {
    pub t: f64,
    pub xs: Vec<f64>,
    pub prim: Vec<Primitive>,
    pub cons: Vec<ConservedState>,
    pub grads: Option<Vec<CellGradients>>,
}

/// One sample along a traced characteristic.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct CharSample {
    pub t: f64,
    pub x: f64,
    pub rho: f64,
    pub u: f64,
    pub s: f64,
    pub w: f64,
    pub z: f64,
    pub dx_w: f64,
    pub dx_z: f64,
    pub eta: f64,
    /// e^{h1}∂x w (barotropic law only).
    pub xi: f64,
    /// e^{h2}∂x z (barotropic law only).
    pub zeta: f64,
    /// ñ = cn/√(c²−u²)
    pub n_t: f64,
    /// η/ñ
    pub theta1: f64,
    /// (∂xxS − (η/ñ)∂xñ)/ñ²
    pub theta2: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct CharTrace {
    pub family: u8,
    pub samples: Vec<CharSample>,
    /// The path left the domain or the stored history before the end time.
    pub truncated: bool,
}

/// Physical flux and conserved state of a thermodynamic state moving at u.
#[derive(Clone, Copy, Debug)]
pub(crate) struct FluxState {
    pub cons: [f64; 2],
    pub flux: [f64; 2],
    pub lambda_min: f64,
    pub lambda_max: f64,
}

pub(crate) fn flux_state(st: &ThermoState, u: f64, c: f64) -> FluxState {
    let c2 = c * c;
    let lor = 1.0 / (c2 - u * u);
    let enth = c2 * st.rho + st.p;
    let m = enth * u * lor;
    let d = (c2 * c2 * st.rho + st.p * u * u) * lor / c2;
    let sound = st.p_rho.max(0.0).sqrt();
    let (_, l2, l3) = crate::nonisentropic::eigenvalues_from_sound(u, sound, c);
    FluxState {
        cons: [d, m],
        flux: [m, m * u + st.p],
        lambda_min: l3,
        lambda_max: l2,
    }
}

fn check_primitive(prim: &Primitive, st: &ThermoState, c: f64) -> Result<()> {
    if !(prim.rho >= 0.0) || !prim.rho.is_finite() {
        return Err(Error::domain(format!(
            "density must be finite and ≥ 0, got {}",
            prim.rho
        )));
    }
    if !(prim.u.abs() < c) {
        return Err(Error::domain(format!(
            "|u| must be below c = {c}, got {}",
            prim.u
        )));
    }
    if !(st.p_rho.sqrt() < c) {
        return Err(Error::Admissibility(format!(
            "√∂ρP = {} is not below c = {c} at ρ = {}",
            st.p_rho.sqrt(),
            prim.rho
        )));
    }
    Ok(())
}

pub fn prim_to_cons(prim: &Primitive, law: &dyn PressureLaw) -> Result<ConservedState> {
    let c = law.params().c;
    let st = law.state(prim.rho, prim.s)?;
    check_primitive(prim, &st, c)?;
    let f = flux_state(&st, prim.u, c);
    Ok(ConservedState {
        d: f.cons[0],
        m: f.cons[1],
        sigma: prim.s,
    })
}

/// Recovered primitive state together with its chart coordinate.
#[derive(Clone, Copy, Debug)]
pub struct Recovered {
    pub prim: Primitive,
    pub chart: f64,
    pub iterations: usize,
}

/// Invert the conserved map at entropy S = `cons.sigma`.
///
/// With Π = c²D + P the map gives u = c²m/Π and ρ = D − m²/Π, so the chart
/// coordinate solves ρ(χ) − D + m²/(c²D + P(χ)) = 0, a monotone equation on
/// [0, D] (χ ≤ ρ ≤ D). `chart_guess` seeds the safeguarded Newton iteration.
pub fn cons_to_prim(
    cons: &ConservedState,
    law: &dyn PressureLaw,
    chart_guess: Option<f64>,
) -> Result<Recovered> {
    let c = law.params().c;
    let (d, m, s) = (cons.d, cons.m, cons.sigma);
    if !d.is_finite() || !m.is_finite() || !s.is_finite() {
        return Err(Error::domain("non-finite conserved state"));
    }
    if d == 0.0 && m == 0.0 {
        return Ok(Recovered {
            prim: Primitive::new(0.0, 0.0, s),
            chart: 0.0,
            iterations: 0,
        });
    }
    if !(d > 0.0) || !(m.abs() < c * d) {
        return Err(Error::domain(format!(
            "conserved state (D, m) = ({d}, {m}) has no admissible preimage"
        )));
    }
    let c2 = c * c;
    let m2 = m * m;
    let residual = |x: f64| {
        let (st, drho) = law.state_at_chart(x, s);
        let pi = c2 * d + st.p;
        let v = st.rho - d + m2 / pi;
        let dv = drho * (1.0 - m2 * st.p_rho / (pi * pi));
        (v, dv)
    };
    let guess = chart_guess.unwrap_or(d - m2 / (c2 * d));
    let (x, iterations) = recovery_newton(residual, d, guess)?;
    let (st, _) = law.state_at_chart(x, s);
    let pi = c2 * d + st.p;
    let u = c2 * m / pi;
    let prim = Primitive::new(st.rho, u, s);
    let fs = flux_state(&st, u, c);
    let res = ((fs.cons[0] - d).abs() + (fs.cons[1] - m).abs()) / (d + m.abs());
    if !(res <= RECOVERY_TOL) || !(u.abs() < c) {
        return Err(Error::NonConvergence {
            method: "primitive recovery",
            iterations,
            detail: format!("residual {res:e} at (D, m, S) = ({d}, {m}, {s})"),
        });
    }
    Ok(Recovered {
        prim,
        chart: x,
        iterations,
    })
}

/// Newton on the increasing residual over [0, hi], stopping on a roundoff-level
/// residual; falls back to the generic bracketed solver if it stalls.
fn recovery_newton<F: Fn(f64) -> (f64, f64)>(f: F, hi: f64, guess: f64) -> Result<(f64, usize)> {
    let (mut lo, mut up) = (0.0, hi);
    let mut x = if guess > 0.0 && guess < hi {
        guess
    } else {
        0.5 * hi
    };
    let scale = 4.0 * f64::EPSILON * hi;
    for it in 1..=40 {
        let (v, dv) = f(x);
        if v.abs() <= scale {
            return Ok((x, it));
        }
        if v > 0.0 {
            up = x;
        } else {
            lo = x;
        }
        let next = x - v / dv;
        x = if dv > 0.0 && next > lo && next < up {
            next
        } else {
            0.5 * (lo + up)
        };
        if up - lo <= 4.0 * f64::EPSILON * up {
            return Ok((x, it));
        }
    }
    newton_bracketed(f, 0.0, hi, x, 4.0 * f64::EPSILON, 200)
}
