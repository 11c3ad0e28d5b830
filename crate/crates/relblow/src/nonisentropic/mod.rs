//! Riemann-variable calculus of the full 3×3 system.
//!
//! Coordinates are (w, z, Ŝ) with w, z = c·artanh(u/c) ∓ F(ρ, S) and
//! F(ρ, S) = ∫₀^ρ c²√∂σP/(c²σ + P) dσ. The eigenvalues are λ1 = u and
//! λ2,3 = c·tanh(G/2), c·tanh(H/2) with
//! H = (w+z)/c + ln((c−√Λ)/(c+√Λ)), G = (w+z)/c + ln((c+√Λ)/(c−√Λ)), Λ = ∂ρP.
//!
//! Point formulas live here; [`calculus::Calculus`] adds the weights h, g, L, M,
//! their partials and the decoupled-ODE coefficients on top of cached
//! fixed-entropy profiles ([`slice::EntropySlice`]).

pub mod calculus;
pub mod slice;
pub mod thresholds;

pub use calculus::{
    weights_h_g_l_m, Calculus, Coefficients, OdeFamily, OdeRhs, Partials, PointState, Weights,
};
pub use thresholds::{
    constants_226, constants_226_with, density_lower_bound_check, psi_psi_k, thresholds_n1_n2,
    Box3, ConservedBounds, CriteriaConstants, DensityBoundReport, InitialProfiles, PsiPsiK,
    SearchGrid, ThresholdReport, ThresholdSettings,
};

use crate::eos::{GasParams, Polytropic, PressureLaw, ThermoState};
use crate::error::{Error, Result};
use crate::numerics::diff;
use crate::numerics::quad::{gauss_kronrod, QuadSettings};
use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RiemannTriple {
    pub w: f64,
    pub z: f64,
    pub s_hat: f64,
}

impl RiemannTriple {
    pub fn new(w: f64, z: f64, s_hat: f64) -> Self {
        RiemannTriple { w, z, s_hat }
    }

    pub fn half_gap(&self) -> f64 {
        0.5 * (self.z - self.w)
    }
}

/// Gradient variables at a point.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GradientStateNon {
    /// ∂x w
    pub alpha: f64,
    /// ∂x z
    pub beta: f64,
    /// ∂x S
    pub eta: f64,
    /// α − aη
    pub alpha_t: f64,
    /// β + aη
    pub beta_t: f64,
    /// cn/√(c²−u²)
    pub n_t: f64,
    /// e^h α̃ − Lηñ
    pub r: f64,
    /// e^g β̃ − Mηñ
    pub q: f64,
}

/// Quantities transported unchanged along 1-characteristics.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ConservedAlongFlow {
    /// η/ñ
    pub theta1: f64,
    /// (∂xxS − (η/ñ)∂xñ)/ñ²
    pub theta2: f64,
}

impl ConservedAlongFlow {
    pub fn from_gradients(eta: f64, dxx_s: f64, n_t: f64, dx_n_t: f64) -> Self {
        let theta1 = eta / n_t;
        ConservedAlongFlow {
            theta1,
            theta2: (dxx_s - theta1 * dx_n_t) / (n_t * n_t),
        }
    }
}

/// Integrands of the fixed-entropy profile at one thermodynamic state.
#[derive(Clone, Copy, Debug, Default)]
pub struct Integrands {
    /// ∂ρF = c²√Λ/(c²ρ+P)
    pub i_f: f64,
    /// ∂S of the F integrand at fixed ρ, i.e. ∂ρ∂SF
    pub i_fs: f64,
    /// (c+√Λ)²/(2(c²ρ+P))
    pub jh: f64,
    /// (c−√Λ)²/(2(c²ρ+P))
    pub jg: f64,
    /// jh − 1/(2ρ)
    pub jh_reg: f64,
    /// jg − 1/(2ρ)
    pub jg_reg: f64,
    /// ∂S jh at fixed ρ
    pub jh_s: f64,
    /// ∂S jg at fixed ρ
    pub jg_s: f64,
    /// ∂ρa
    pub da_drho: f64,
}

pub fn integrands(st: &ThermoState, c: f64) -> Integrands {
    let c2 = c * c;
    let s = st.p_rho.sqrt();
    if !(st.rho > 0.0) || !(s > 0.0) {
        return Integrands::default();
    }
    let enth = c2 * st.rho + st.p;
    let ds_s = st.p_rhos / (2.0 * s);
    let i_f = c2 * s / enth;
    let i_fs = c2 * ds_s / enth - c2 * s * st.p_s / (enth * enth);
    let lam = st.p_rho;
    let num_h = 2.0 * c * s * st.rho + lam * st.rho - st.p;
    let num_g = -2.0 * c * s * st.rho + lam * st.rho - st.p;
    let da_drho = -i_fs
        + c2 / enth * (2.0 * lam * st.p_rhos - st.p_s * st.p_rhorho) / (2.0 * s * lam)
        - st.p_s * c2 * (c2 + lam) / (enth * enth * s);
    Integrands {
        i_f,
        i_fs,
        jh: (c + s).powi(2) / (2.0 * enth),
        jg: (c - s).powi(2) / (2.0 * enth),
        jh_reg: num_h / (2.0 * st.rho * enth),
        jg_reg: num_g / (2.0 * st.rho * enth),
        jh_s: (c + s) * ds_s / enth - (c + s).powi(2) * st.p_s / (2.0 * enth * enth),
        jg_s: -(c - s) * ds_s / enth - (c - s).powi(2) * st.p_s / (2.0 * enth * enth),
        da_drho,
    }
}

/// τ-space integrand of a profile channel: value·dρ/dτ at τ, with ρ = ρ(m = τ^p).
pub(crate) fn chart_integrand<F: Fn(&Integrands) -> f64>(
    law: &dyn PressureLaw,
    tau: f64,
    s: f64,
    channel: &F,
) -> f64 {
    if tau <= 0.0 {
        return 0.0;
    }
    let p = law.params().chart_exponent();
    let m = tau.powf(p);
    let (st, drho_dm) = law.state_at_chart(m, s);
    let dm_dtau = p * m / tau;
    channel(&integrands(&st, law.params().c)) * drho_dm * dm_dtau
}

fn chart_tau(law: &dyn PressureLaw, rho: f64, s: f64) -> Result<f64> {
    Ok(law
        .chart_of(rho, s)?
        .powf(1.0 / law.params().chart_exponent()))
}

fn profile_integral<F: Fn(&Integrands) -> f64>(
    law: &dyn PressureLaw,
    rho: f64,
    s: f64,
    settings: QuadSettings,
    channel: F,
) -> Result<f64> {
    if !(rho >= 0.0) {
        return Err(Error::domain(format!(
            "density must be non-negative, got {rho}"
        )));
    }
    if rho == 0.0 {
        return Ok(0.0);
    }
    let t = chart_tau(law, rho, s)?;
    Ok(gauss_kronrod(
        |tau| chart_integrand(law, tau, s, &channel),
        0.0,
        t,
        settings,
    )?
    .value)
}

/// F(ρ, S) = (z−w)/2 for any pressure law.
pub fn f_of_law(law: &dyn PressureLaw, rho: f64, s: f64, settings: QuadSettings) -> Result<f64> {
    profile_integral(law, rho, s, settings, |i| i.i_f)
}

/// ∂SF(ρ, S) by quadrature of the S-derivative of the integrand.
pub fn df_ds_law(law: &dyn PressureLaw, rho: f64, s: f64, settings: QuadSettings) -> Result<f64> {
    profile_integral(law, rho, s, settings, |i| i.i_fs)
}

/// F(ρ, S) for the polytropic gas.
#[allow(non_snake_case)]
pub fn F_of(rho: f64, s: f64, params: &GasParams) -> Result<f64> {
    f_of_law(&Polytropic::new(*params), rho, s, QuadSettings::default())
}

/// Solve F(ρ, S) = target for ρ; returns the thermodynamic state.
///
/// Newton in the chart variable τ with F advanced by incremental quadrature
/// between iterates, bracketed by bisection.
pub fn invert_f(
    law: &dyn PressureLaw,
    target: f64,
    s: f64,
    settings: QuadSettings,
) -> Result<ThermoState> {
    if !(target >= 0.0) || !target.is_finite() {
        return Err(Error::domain(format!(
            "half gap (z−w)/2 must be non-negative, got {target}"
        )));
    }
    if target == 0.0 {
        return law.state(0.0, s);
    }
    let p = law.params().chart_exponent();
    let slope = |tau: f64| chart_integrand(law, tau, s, &|i: &Integrands| i.i_f);
    let step_integral =
        |a: f64, b: f64| -> Result<f64> { Ok(gauss_kronrod(|t| slope(t), a, b, settings)?.value) };
    let probe = 1e-8;
    let mut tau = target / slope(probe).max(1e-300);
    if !tau.is_finite() || tau <= 0.0 {
        tau = 1.0;
    }
    let mut f_tau = step_integral(0.0, tau)?;
    let (mut lo, mut f_lo) = (0.0, 0.0);
    let mut hi: Option<(f64, f64)> = None;
    for it in 0..200 {
        let r = f_tau - target;
        if r.abs() <= 1e-14 * target.max(1e-300) {
            break;
        }
        if r < 0.0 {
            lo = tau;
            f_lo = f_tau;
        } else {
            hi = Some((tau, f_tau));
        }
        let d = slope(tau);
        let mut next = tau - r / d;
        match hi {
            Some((h, _)) => {
                if !(next > lo && next < h) || !next.is_finite() {
                    next = 0.5 * (lo + h);
                }
            }
            None => {
                if !next.is_finite() || next <= tau {
                    next = 2.0 * tau;
                }
                next = next.min(4.0 * tau);
            }
        }
        // Advance F from the nearest point with a known value.
        let (base, f_base) = match hi {
            Some((h, fh)) if (next - h).abs() < (next - lo).abs() => (h, fh),
            _ => (lo, f_lo),
        };
        f_tau = f_base + step_integral(base, next)?;
        let moved = (next - tau).abs();
        tau = next;
        if moved <= 4.0 * f64::EPSILON * tau {
            break;
        }
        if it == 199 {
            return Err(Error::NonConvergence {
                method: "F inversion",
                iterations: it,
                detail: format!("target {target}, S = {s}"),
            });
        }
    }
    let (mut st, _) = law.state_at_chart(tau.powf(p), s);
    if st.rho.is_finite() {
        st.rho = st.rho.max(0.0);
    }
    Ok(st)
}

pub(crate) fn check_entropy(s: f64, params: &GasParams) -> Result<()> {
    let b = params.entropy_bound;
    if !s.is_finite() || s.abs() > b * (1.0 + 1e-12) + 1e-12 {
        return Err(Error::domain(format!(
            "|S| = {} exceeds the entropy bound B = {b}",
            s.abs()
        )));
    }
    Ok(())
}

pub(crate) fn check_sonic(st: &ThermoState, c: f64) -> Result<()> {
    if !(st.p_rho < c * c) {
        return Err(Error::Admissibility(format!(
            "√∂ρP = {} is not below c = {c} at ρ = {}",
            st.p_rho.sqrt(),
            st.rho
        )));
    }
    Ok(())
}

pub fn to_riemann_law(law: &dyn PressureLaw, rho: f64, u: f64, s: f64) -> Result<RiemannTriple> {
    let params = law.params();
    let c = params.c;
    if !(u.abs() < c) {
        return Err(Error::domain(format!("|u| must be below c = {c}, got {u}")));
    }
    check_entropy(s, params)?;
    let st = law.state(rho, s)?;
    check_sonic(&st, c)?;
    let f = f_of_law(law, rho, s, QuadSettings::tight())?;
    let mid = c * (u / c).atanh();
    Ok(RiemannTriple {
        w: mid - f,
        z: mid + f,
        s_hat: s,
    })
}

pub fn from_riemann_law(law: &dyn PressureLaw, triple: RiemannTriple) -> Result<(f64, f64, f64)> {
    let params = law.params();
    check_entropy(triple.s_hat, params)?;
    let st = invert_f(law, triple.half_gap(), triple.s_hat, QuadSettings::tight())?;
    check_sonic(&st, params.c)?;
    let u = params.c * ((triple.w + triple.z) / (2.0 * params.c)).tanh();
    Ok((st.rho, u, triple.s_hat))
}

pub fn to_riemann_non(rho: f64, u: f64, s: f64, params: &GasParams) -> Result<RiemannTriple> {
    to_riemann_law(&Polytropic::new(*params), rho, u, s)
}

pub fn from_riemann_non(triple: RiemannTriple, params: &GasParams) -> Result<(f64, f64, f64)> {
    from_riemann_law(&Polytropic::new(*params), triple)
}

/// (H, G) from (w+z) and the sound speed √Λ.
pub fn h_g_arguments(w_plus_z: f64, sound: f64, c: f64) -> (f64, f64) {
    let base = w_plus_z / c;
    let log = ((c - sound) / (c + sound)).ln();
    (base + log, base - log)
}

/// (λ1, λ2, λ3) = (u, c²(u+s)/(c²+us), c²(u−s)/(c²−us)).
pub fn eigenvalues_non(rho: f64, u: f64, s: f64, params: &GasParams) -> Result<(f64, f64, f64)> {
    eigenvalues_law(&Polytropic::new(*params), rho, u, s)
}

pub fn eigenvalues_law(law: &dyn PressureLaw, rho: f64, u: f64, s: f64) -> Result<(f64, f64, f64)> {
    let c = law.params().c;
    if !(u.abs() < c) {
        return Err(Error::domain(format!("|u| must be below c = {c}, got {u}")));
    }
    let st = law.state(rho, s)?;
    check_sonic(&st, c)?;
    Ok(eigenvalues_from_sound(u, st.p_rho.sqrt(), c))
}

pub fn eigenvalues_from_sound(u: f64, sound: f64, c: f64) -> (f64, f64, f64) {
    let c2 = c * c;
    (
        u,
        c2 * (u + sound) / (c2 + u * sound),
        c2 * (u - sound) / (c2 - u * sound),
    )
}

/// a(ρ, S) from the integral representation
/// −∫₀^ρ ∂S[c²√∂σP/(c²σ+P)] dσ + c²∂SP/((P+ρc²)√∂ρP).
pub fn a_coefficient(rho: f64, s: f64, params: &GasParams) -> Result<f64> {
    a_coefficient_law(&Polytropic::new(*params), rho, s)
}

pub fn a_coefficient_law(law: &dyn PressureLaw, rho: f64, s: f64) -> Result<f64> {
    if rho == 0.0 {
        return Ok(0.0);
    }
    let st = law.state(rho, s)?;
    let c2 = law.params().c * law.params().c;
    let df_ds = df_ds_law(law, rho, s, QuadSettings::tight())?;
    Ok(-df_ds + c2 * st.p_s / ((st.p + rho * c2) * st.p_rho.sqrt()))
}

/// a(ρ, S) assembled as −∂SF + (∂SP/∂ρP)∂ρF with ∂SF from Richardson differences
/// of F in S and ∂ρF, ∂SP, ∂ρP from the closed forms. Independent of
/// [`a_coefficient`]'s integral route.
pub fn a_coefficient_assembled(rho: f64, s: f64, params: &GasParams) -> Result<f64> {
    if rho == 0.0 {
        return Ok(0.0);
    }
    let law = Polytropic::new(*params);
    let st = law.state(rho, s)?;
    let h = 1e-2 * params.cv().min(1.0);
    let mut failure = None;
    let df_ds = diff::richardson(
        |t| match f_of_law(&law, rho, t, QuadSettings::tight()) {
            Ok(v) => v,
            Err(e) => {
                failure = Some(e);
                f64::NAN
            }
        },
        s,
        h,
    );
    if let Some(e) = failure {
        return Err(e);
    }
    let df_drho = integrands(&st, params.c).i_f;
    Ok(-df_ds + st.p_s / st.p_rho * df_drho)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::eos::Barotropic;
    use crate::numerics::fit;

    fn gas(g: f64) -> GasParams {
        GasParams::new(g, 1.0, 1.0, 1.0, 1.0).unwrap()
    }

    #[test]
    fn f_examples() {
        assert_eq!(F_of(0.0, 0.3, &gas(2.0)).unwrap(), 0.0);
        let law = Barotropic::new(gas(3.0));
        let f = f_of_law(&law, 1.0, 0.0, QuadSettings::tight()).unwrap();
        assert!((f - 3f64.sqrt() * std::f64::consts::FRAC_PI_4).abs() < 1e-12);
        for g in [1.4, 2.0, 2.9] {
            let rhos = fit::logspace(1e-8, 1e-5, 12);
            let fs: Vec<f64> = rhos
                .iter()
                .map(|r| F_of(*r, 0.0, &gas(g)).unwrap())
                .collect();
            let slope = fit::loglog_slope(&rhos, &fs).unwrap();
            assert!(
                (slope / (0.5 * (g - 1.0)) - 1.0).abs() < 0.02,
                "γ={g}: {slope}"
            );
        }
    }

    #[test]
    fn f_increasing_and_derivative_consistent() {
        let p = gas(5.0 / 3.0);
        let law = Polytropic::new(p);
        let mut last = 0.0;
        for rho in [1e-4, 1e-2, 0.3, 1.0, 5.0] {
            let f = F_of(rho, 0.2, &p).unwrap();
            assert!(f > last);
            last = f;
            let st = law.state(rho, 0.2).unwrap();
            let fd = diff::richardson(|r| F_of(r, 0.2, &p).unwrap(), rho, 1e-3 * rho);
            assert!((fd - integrands(&st, 1.0).i_f).abs() < 1e-8 * fd);
        }
    }

    #[test]
    fn inversion_round_trip() {
        let p = gas(2.0);
        let law = Polytropic::new(p);
        for rho in [1e-9, 1e-3, 0.4, 3.0, 50.0] {
            let f = f_of_law(&law, rho, -0.4, QuadSettings::tight()).unwrap();
            let st = invert_f(&law, f, -0.4, QuadSettings::tight()).unwrap();
            assert!((st.rho - rho).abs() < 1e-11 * rho, "{rho}: {}", st.rho);
        }
    }

    #[test]
    fn riemann_round_trip_and_vacuum() {
        let p = gas(1.4);
        let t = to_riemann_non(0.0, 0.0, 0.3, &p).unwrap();
        assert_eq!((t.w, t.z, t.s_hat), (0.0, 0.0, 0.3));
        for (rho, u, s) in [(0.01, 0.3, -0.5), (0.7, -0.9, 1.0), (2.0, 0.0, 0.0)] {
            let t = to_riemann_non(rho, u, s, &p).unwrap();
            let (r2, u2, s2) = from_riemann_non(t, &p).unwrap();
            assert!((r2 - rho).abs() < 1e-10 * rho && (u2 - u).abs() < 1e-12 && s2 == s);
        }
        assert!(to_riemann_non(0.1, 0.1, 1.5, &p).is_err());
    }

    #[test]
    fn eigenvalue_examples_and_ordering() {
        let p = gas(2.0);
        let law = Polytropic::new(p);
        let (l1, l2, l3) = eigenvalues_non(0.3, 0.0, 0.1, &p).unwrap();
        let s = law.state(0.3, 0.1).unwrap().sound_speed();
        assert!(l1 == 0.0 && (l2 - s).abs() < 1e-15 && (l3 + s).abs() < 1e-15);
        assert_eq!(eigenvalues_non(0.0, 0.4, 0.0, &p).unwrap(), (0.4, 0.4, 0.4));
        let (l1, l2, l3) = eigenvalues_non(0.3, 0.7, -0.2, &p).unwrap();
        assert!(l3 < l1 && l1 < l2);
        let t = to_riemann_non(0.3, 0.7, -0.2, &p).unwrap();
        let s = law.state(0.3, -0.2).unwrap().sound_speed();
        let (h, g) = h_g_arguments(t.w + t.z, s, 1.0);
        assert!((l2 - (1.0 - 2.0 / (g.exp() + 1.0))).abs() < 1e-10);
        assert!((l3 - (1.0 - 2.0 / (h.exp() + 1.0))).abs() < 1e-10);
    }

    #[test]
    fn a_two_routes_agree_and_scale() {
        let p = gas(2.0);
        for (rho, s) in [(0.01, 0.0), (0.5, -0.7), (3.0, 0.9)] {
            let a1 = a_coefficient(rho, s, &p).unwrap();
            let a2 = a_coefficient_assembled(rho, s, &p).unwrap();
            assert!((a1 - a2).abs() < 1e-6 * a1.abs().max(1e-12), "{a1} vs {a2}");
        }
        assert_eq!(a_coefficient(0.0, 0.3, &p).unwrap(), 0.0);
        let law = Barotropic::new(p);
        assert_eq!(a_coefficient_law(&law, 0.4, 0.2).unwrap(), 0.0);
        let rhos = fit::logspace(1e-7, 1e-4, 10);
        let aa: Vec<f64> = rhos
            .iter()
            .map(|r| a_coefficient(*r, 0.2, &p).unwrap())
            .collect();
        let slope = fit::loglog_slope(&rhos, &aa).unwrap();
        assert!((slope - 0.5).abs() < 0.025, "{slope}");
    }

    #[test]
    fn da_drho_matches_differences() {
        let p = gas(1.4);
        let law = Polytropic::new(p);
        for (rho, s) in [(0.02, 0.3), (0.8, -0.5)] {
            let st = law.state(rho, s).unwrap();
            let exact = integrands(&st, 1.0).da_drho;
            let fd = diff::richardson(|r| a_coefficient(r, s, &p).unwrap(), rho, 1e-2 * rho);
            assert!((exact - fd).abs() < 1e-7 * exact.abs(), "{exact} vs {fd}");
        }
    }
}
