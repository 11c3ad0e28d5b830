//! Polytropic equation of state.
//!
//! Two pressure laws share one interface: the barotropic law `P = k²ρ^γ` of the
//! isentropic system, and the polytropic gas `P = (γ−1)n^γ e^{S/Cv}` in which the
//! rest-mass density `n` is defined implicitly by `n^γ e^{S/Cv} + c²(n − ρ) = 0`.
//!
//! Everything downstream integrates in an *explicit chart*: the polytropic gas
//! is explicit in `(n, S)` (`ρ = n + n^γ e^{S/Cv}/c²`), so quadratures over ρ are
//! carried out in `n` and the implicit relation is only solved at endpoints.

use crate::error::{Error, Result};
use crate::numerics::fit;
use crate::numerics::roots::newton_bracketed;
use serde::{Deserialize, Serialize};

/// Relative tolerance of the rest-mass root solve.
pub const TOL_EOS: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GasParams {
    pub gamma: f64,
    pub c: f64,
    pub k: f64,
    #[serde(rename = "R")]
    pub r_gas: f64,
    /// Entropy magnitude bound B; states with |S| > B are rejected by the non-isentropic calculus.
    #[serde(rename = "B")]
    pub entropy_bound: f64,
}

impl Default for GasParams {
    fn default() -> Self {
        GasParams {
            gamma: 2.0,
            c: 1.0,
            k: 1.0,
            r_gas: 1.0,
            entropy_bound: 1.0,
        }
    }
}

impl GasParams {
    pub fn new(gamma: f64, c: f64, k: f64, r_gas: f64, entropy_bound: f64) -> Result<Self> {
        let p = GasParams {
            gamma,
            c,
            k,
            r_gas,
            entropy_bound,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn with_gamma(self, gamma: f64) -> Self {
        GasParams { gamma, ..self }
    }

    pub fn with_c(self, c: f64) -> Self {
        GasParams { c, ..self }
    }

    pub fn validate(&self) -> Result<()> {
        let finite = [self.gamma, self.c, self.k, self.r_gas, self.entropy_bound]
            .iter()
            .all(|v| v.is_finite());
        if !finite {
            return Err(Error::validation("gas parameters must be finite"));
        }
        if self.gamma <= 1.0 {
            return Err(Error::validation(format!(
                "gamma must exceed 1, got {}",
                self.gamma
            )));
        }
        if self.c <= 0.0 || self.k <= 0.0 || self.r_gas <= 0.0 {
            return Err(Error::validation("c, k and R must be positive"));
        }
        if self.entropy_bound < 0.0 {
            return Err(Error::validation("entropy bound B must be non-negative"));
        }
        Ok(())
    }

    /// Specific heat at constant volume, R/(γ−1).
    pub fn cv(&self) -> f64 {
        self.r_gas / (self.gamma - 1.0)
    }

    /// Exponent of the chart σ = τ^p that regularizes the σ^{(γ−3)/2} endpoint.
    pub fn chart_exponent(&self) -> f64 {
        2.0 / (self.gamma - 1.0)
    }
}

/// A point of the polytropic law with its derived rest-mass density and pressure.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EosPoint {
    pub rho: f64,
    pub s: f64,
    pub n: f64,
    pub p: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EosDerivatives {
    pub dp_drho: f64,
    pub dp_ds: f64,
    pub d2p_drhods: f64,
    pub d2p_drho2: f64,
    pub dn_drho: f64,
    pub dn_ds: f64,
}

pub fn pressure_isentropic(rho: f64, params: &GasParams) -> Result<f64> {
    if !(rho >= 0.0) {
        return Err(Error::domain(format!(
            "density must be non-negative, got {rho}"
        )));
    }
    Ok(params.k * params.k * rho.powf(params.gamma))
}

fn check_density(rho: f64) -> Result<()> {
    if rho >= 0.0 && rho.is_finite() {
        Ok(())
    } else {
        Err(Error::domain(format!(
            "density must be finite and non-negative, got {rho}"
        )))
    }
}

/// Rest-mass density n(ρ, S): the unique root in [0, ρ] of n^γ e^{S/Cv} + c²(n − ρ).
pub fn rest_mass_density(rho: f64, s: f64, params: &GasParams) -> Result<f64> {
    check_density(rho)?;
    if rho == 0.0 {
        return Ok(0.0);
    }
    let g = params.gamma;
    let c2 = params.c * params.c;
    let e = (s / params.cv()).exp();
    let residual = |n: f64| (n.powf(g) * e + c2 * (n - rho), g * n.powf(g - 1.0) * e + c2);
    // Both candidates lie right of the root and the residual is convex, so Newton
    // from their minimum descends monotonically.
    let x0 = rho.min((c2 * rho / e).powf(1.0 / g));
    let (n, _) = newton_bracketed(residual, 0.0, rho, x0, 4.0 * f64::EPSILON, 200)?;
    let (r, _) = residual(n);
    if r.abs() > TOL_EOS * (c2 * rho).max(1.0) {
        return Err(Error::NonConvergence {
            method: "rest-mass density",
            iterations: 200,
            detail: format!("residual {r:e} at rho = {rho}, S = {s}"),
        });
    }
    Ok(n)
}

pub fn eos_point(rho: f64, s: f64, params: &GasParams) -> Result<EosPoint> {
    let n = rest_mass_density(rho, s, params)?;
    let p = (params.gamma - 1.0) * n.powf(params.gamma) * (s / params.cv()).exp();
    Ok(EosPoint { rho, s, n, p })
}

/// P(ρ, S) for the polytropic gas.
pub fn pressure_full(rho: f64, s: f64, params: &GasParams) -> Result<f64> {
    Ok(eos_point(rho, s, params)?.p)
}

/// Closed-form first and second derivatives of P and first derivatives of n.
///
/// At ρ = 0 the finite vacuum limits are returned; ∂ρρP diverges there for γ < 2
/// and is reported as a domain error.
pub fn eos_derivatives(rho: f64, s: f64, params: &GasParams) -> Result<EosDerivatives> {
    check_density(rho)?;
    let n = rest_mass_density(rho, s, params)?;
    let st = polytropic_state_at_n(n, s, params);
    if rho == 0.0 && params.gamma < 2.0 {
        return Err(Error::domain("∂ρρP is singular at vacuum for γ < 2"));
    }
    Ok(st.derivatives())
}

/// Fitted log–log slopes of P, ∂ρP, ∂SP, ∂SρP against ρ at fixed S.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AsymptoticOrders {
    pub p: f64,
    pub dp_drho: f64,
    pub dp_ds: f64,
    pub d2p_drhods: f64,
}

pub fn asymptotic_orders_check(
    params: &GasParams,
    rho_sequence: &[f64],
    s: f64,
) -> Result<AsymptoticOrders> {
    if rho_sequence.len() < 3 {
        return Err(Error::validation("need at least three densities"));
    }
    if rho_sequence.iter().any(|r| !(*r > 0.0)) {
        return Err(Error::validation("densities must be positive"));
    }
    let (lo, hi) = rho_sequence
        .iter()
        .fold((f64::INFINITY, 0.0f64), |(a, b), r| (a.min(*r), b.max(*r)));
    if hi / lo < 1e3 {
        return Err(Error::validation(
            "density sequence must span at least three decades",
        ));
    }
    let mut cols = [vec![], vec![], vec![], vec![]];
    for &rho in rho_sequence {
        let st = Polytropic::new(*params).state(rho, s)?;
        cols[0].push(st.p);
        cols[1].push(st.p_rho);
        cols[2].push(st.p_s);
        cols[3].push(st.p_rhos);
    }
    Ok(AsymptoticOrders {
        p: fit::loglog_slope(rho_sequence, &cols[0])?,
        dp_drho: fit::loglog_slope(rho_sequence, &cols[1])?,
        dp_ds: fit::loglog_slope(rho_sequence, &cols[2])?,
        d2p_drhods: fit::loglog_slope(rho_sequence, &cols[3])?,
    })
}

/// Thermodynamic state with every pressure partial the calculus needs.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ThermoState {
    pub rho: f64,
    pub s: f64,
    /// Rest-mass density. The barotropic law has none and reports n = ρ.
    pub n: f64,
    pub p: f64,
    pub p_rho: f64,
    pub p_s: f64,
    pub p_rhorho: f64,
    pub p_rhos: f64,
    pub n_rho: f64,
    pub n_s: f64,
}

impl ThermoState {
    pub fn derivatives(&self) -> EosDerivatives {
        EosDerivatives {
            dp_drho: self.p_rho,
            dp_ds: self.p_s,
            d2p_drhods: self.p_rhos,
            d2p_drho2: self.p_rhorho,
            dn_drho: self.n_rho,
            dn_ds: self.n_s,
        }
    }

    /// Local sound speed √∂ρP.
    pub fn sound_speed(&self) -> f64 {
        self.p_rho.sqrt()
    }
}

/// Pressure law interface used by the Riemann-variable calculus and the solver.
pub trait PressureLaw: Send + Sync {
    fn params(&self) -> &GasParams;

    fn state(&self, rho: f64, s: f64) -> Result<ThermoState>;

    /// State at chart coordinate `m` (explicit in `(m, S)`), together with dρ/dm.
    fn state_at_chart(&self, m: f64, s: f64) -> (ThermoState, f64);

    /// Chart coordinate of density ρ at entropy S.
    fn chart_of(&self, rho: f64, s: f64) -> Result<f64>;

    /// True when P does not depend on S.
    fn is_barotropic(&self) -> bool;
}

/// The isentropic law P = k²ρ^γ.
#[derive(Clone, Copy, Debug)]
pub struct Barotropic {
    params: GasParams,
}

impl Barotropic {
    pub fn new(params: GasParams) -> Self {
        Barotropic { params }
    }
}

impl PressureLaw for Barotropic {
    fn params(&self) -> &GasParams {
        &self.params
    }

    fn state(&self, rho: f64, s: f64) -> Result<ThermoState> {
        check_density(rho)?;
        Ok(self.state_at_chart(rho, s).0)
    }

    fn state_at_chart(&self, rho: f64, s: f64) -> (ThermoState, f64) {
        let g = self.params.gamma;
        let k2 = self.params.k * self.params.k;
        let rg1 = if rho > 0.0 { rho.powf(g - 1.0) } else { 0.0 };
        let p_rhorho = if rho > 0.0 {
            g * (g - 1.0) * k2 * rho.powf(g - 2.0)
        } else if g < 2.0 {
            f64::INFINITY
        } else if g == 2.0 {
            2.0 * k2
        } else {
            0.0
        };
        let st = ThermoState {
            rho,
            s,
            n: rho,
            p: k2 * rho * rg1,
            p_rho: g * k2 * rg1,
            p_s: 0.0,
            p_rhorho,
            p_rhos: 0.0,
            n_rho: 1.0,
            n_s: 0.0,
        };
        (st, 1.0)
    }

    fn chart_of(&self, rho: f64, _s: f64) -> Result<f64> {
        check_density(rho)?;
        Ok(rho)
    }

    fn is_barotropic(&self) -> bool {
        true
    }
}

/// The polytropic gas P = (γ−1)n^γ e^{S/Cv}, charted by the rest-mass density.
#[derive(Clone, Copy, Debug)]
pub struct Polytropic {
    params: GasParams,
}

impl Polytropic {
    pub fn new(params: GasParams) -> Self {
        Polytropic { params }
    }
}

/// Explicit polytropic state at rest-mass density n.
pub fn polytropic_state_at_n(n: f64, s: f64, params: &GasParams) -> ThermoState {
    let g = params.gamma;
    let c2 = params.c * params.c;
    let cv = params.cv();
    let e = (s / cv).exp();
    // x = n^{γ−1} e^{S/Cv}; every derivative below is rational in (n, x).
    let x = if n > 0.0 { n.powf(g - 1.0) * e } else { 0.0 };
    let dn = g * x + c2;
    let p_rhorho = if n > 0.0 {
        c2 * c2 * c2 * g * (g - 1.0).powi(2) * (x / n) / (dn * dn * dn)
    } else if g < 2.0 {
        f64::INFINITY
    } else if g == 2.0 {
        2.0 * e
    } else {
        0.0
    };
    ThermoState {
        rho: n + n * x / c2,
        s,
        n,
        p: (g - 1.0) * n * x,
        p_rho: c2 * g * (g - 1.0) * x / dn,
        p_s: c2 * (g - 1.0) * n * x / (cv * dn),
        p_rhorho,
        p_rhos: c2 * c2 * g * (g - 1.0) * x * (c2 + x) / (cv * dn * dn * dn),
        n_rho: c2 / dn,
        n_s: -n * x / (cv * dn),
    }
}

impl PressureLaw for Polytropic {
    fn params(&self) -> &GasParams {
        &self.params
    }

    fn state(&self, rho: f64, s: f64) -> Result<ThermoState> {
        let n = rest_mass_density(rho, s, &self.params)?;
        let mut st = polytropic_state_at_n(n, s, &self.params);
        // Keep the caller's ρ exactly; the chart reproduces it to roundoff.
        st.rho = rho;
        Ok(st)
    }

    fn state_at_chart(&self, n: f64, s: f64) -> (ThermoState, f64) {
        let st = polytropic_state_at_n(n, s, &self.params);
        // dρ/dn = (γx + c²)/c² = 1/∂ρn.
        let drho_dn = 1.0 / st.n_rho;
        (st, drho_dn)
    }

    fn chart_of(&self, rho: f64, s: f64) -> Result<f64> {
        rest_mass_density(rho, s, &self.params)
    }

    fn is_barotropic(&self) -> bool {
        false
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::diff;

    fn gas(gamma: f64, c: f64) -> GasParams {
        GasParams::new(gamma, c, 1.0, 1.0, 1.0).unwrap()
    }

    #[test]
    fn isentropic_pressure_examples() {
        let p = GasParams::new(2.0, 1.0, 1.0, 1.0, 0.0).unwrap();
        assert_eq!(pressure_isentropic(2.0, &p).unwrap(), 4.0);
        assert_eq!(pressure_isentropic(0.0, &p).unwrap(), 0.0);
        let q = GasParams::new(1.4, 1.0, 0.5, 1.0, 0.0).unwrap();
        assert_eq!(pressure_isentropic(1.0, &q).unwrap(), 0.25);
        assert!(pressure_isentropic(-1.0, &q).is_err());
    }

    #[test]
    fn quadratic_rest_mass_case() {
        let p = gas(2.0, 1.0);
        assert!((rest_mass_density(2.0, 0.0, &p).unwrap() - 1.0).abs() < 1e-15);
        assert!((pressure_full(2.0, 0.0, &p).unwrap() - 1.0).abs() < 1e-15);
        assert_eq!(rest_mass_density(0.0, 0.4, &p).unwrap(), 0.0);
        assert_eq!(pressure_full(0.0, -0.4, &p).unwrap(), 0.0);
    }

    #[test]
    fn rest_mass_matches_bisection_oracle() {
        let p = gas(5.0 / 3.0, 1.0);
        let (rho, s) = (0.7, 0.3);
        let e = (s / p.cv()).exp();
        let res = |n: f64| n.powf(p.gamma) * e + (n - rho);
        let (mut lo, mut hi) = (0.0, rho);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if res(mid) > 0.0 {
                hi = mid
            } else {
                lo = mid
            }
        }
        let n = rest_mass_density(rho, s, &p).unwrap();
        assert!((n - lo).abs() < 1e-14);
        assert!(res(n).abs() < 1e-12);
    }

    #[test]
    fn pressure_matches_fixed_point_oracle() {
        // Independent route: iterate P = (γ−1)(ρ − P/((γ−1)c²))^γ e^{S/Cv}.
        let p = gas(1.4, 10.0);
        let (rho, s) = (0.5, -0.2);
        let e = (s / p.cv()).exp();
        let g = p.gamma;
        let mut pk = 0.0;
        for _ in 0..200 {
            pk = (g - 1.0) * (rho - pk / ((g - 1.0) * 100.0)).powf(g) * e;
        }
        let pf = pressure_full(rho, s, &p).unwrap();
        let implicit = pf - (g - 1.0) * (rho - pf / ((g - 1.0) * 100.0)).powf(g) * e;
        assert!(implicit.abs() < 1e-10);
        assert!((pf - pk).abs() < 1e-13 * pk);
    }

    #[test]
    fn closed_form_sound_speed_example() {
        let d = eos_derivatives(2.0, 0.0, &gas(2.0, 1.0)).unwrap();
        assert!((d.dp_drho - 2.0 / 3.0).abs() < 1e-14);
    }

    #[test]
    fn derivatives_match_finite_differences() {
        for &g in &[1.4, 5.0 / 3.0, 2.0, 3.0] {
            let p = gas(g, 1.0);
            for &rho in &[1e-3, 0.05, 0.9] {
                for &s in &[-1.0, 0.2, 1.0] {
                    let d = eos_derivatives(rho, s, &p).unwrap();
                    let pf = |r: f64, s: f64| pressure_full(r, s, &p).unwrap();
                    let nf = |r: f64, s: f64| rest_mass_density(r, s, &p).unwrap();
                    let h = diff::default_step(rho);
                    let checks = [
                        (d.dp_drho, diff::central(|r| pf(r, s), rho, h)),
                        (d.dp_ds, diff::richardson(|t| pf(rho, t), s, 1e-2)),
                        (d.dn_drho, diff::central(|r| nf(r, s), rho, h)),
                        (d.dn_ds, diff::richardson(|t| nf(rho, t), s, 1e-2)),
                        (
                            d.d2p_drho2,
                            diff::richardson_second(|r| pf(r, s), rho, 1e-2 * rho),
                        ),
                        (
                            d.d2p_drhods,
                            diff::richardson_mixed(pf, rho, s, 1e-2 * rho, 1e-2),
                        ),
                    ];
                    for (i, (exact, fd)) in checks.iter().enumerate() {
                        assert!(
                            ((exact - fd) / exact).abs() < 1e-6,
                            "γ={g} ρ={rho} S={s} #{i}: {exact} vs {fd}"
                        );
                    }
                }
            }
        }
    }

    #[test]
    fn rho_dn_drho_relation_and_vacuum_limit() {
        let p = gas(2.0, 1.0);
        for &rho in &[1e-6, 0.1, 2.0, 30.0] {
            let st = Polytropic::new(p).state(rho, 0.3).unwrap();
            let x = st.p / ((p.gamma - 1.0) * st.n);
            let exact = st.n * (1.0 + x) / (1.0 + p.gamma * x);
            assert!((rho * st.n_rho - exact).abs() < 1e-13 * st.n);
        }
        let st = Polytropic::new(p).state(1e-12, 0.0).unwrap();
        assert!((1e-12 * st.n_rho / st.n - 1.0).abs() < 1e-10);
    }

    #[test]
    fn vacuum_limits() {
        let p = gas(2.0, 1.0);
        let d = eos_derivatives(0.0, 0.0, &p).unwrap();
        assert_eq!(d.dp_drho, 0.0);
        assert_eq!(d.dn_drho, 1.0);
        assert!(eos_derivatives(0.0, 0.0, &gas(1.4, 1.0)).is_err());
        let tiny = eos_derivatives(1e-10, 0.0, &p).unwrap();
        assert!(tiny.dp_drho < 1e-9);
    }

    #[test]
    fn asymptotic_slopes() {
        let rhos = fit::logspace(1e-6, 1e-2, 25);
        let o = asymptotic_orders_check(&gas(2.0, 1.0), &rhos, 0.0).unwrap();
        assert!((o.p - 2.0).abs() < 0.02);
        let o = asymptotic_orders_check(&gas(1.4, 10.0), &rhos, 0.0).unwrap();
        assert!((o.dp_drho - 0.4).abs() < 0.02);
        let o = asymptotic_orders_check(&gas(3.0, 1.0), &rhos, 0.0).unwrap();
        assert!((o.dp_ds - 3.0).abs() < 0.06);
        assert!(asymptotic_orders_check(&gas(2.0, 1.0), &rhos[..2], 0.0).is_err());
        assert!(
            asymptotic_orders_check(&gas(2.0, 1.0), &fit::logspace(1e-3, 1e-2, 5), 0.0).is_err()
        );
    }

    #[test]
    fn chart_reproduces_density() {
        let law = Polytropic::new(gas(5.0 / 3.0, 2.0));
        for &rho in &[1e-8, 0.3, 7.0] {
            let n = law.chart_of(rho, -0.5).unwrap();
            let (st, drho_dn) = law.state_at_chart(n, -0.5);
            assert!((st.rho - rho).abs() < 1e-14 * rho);
            let fd = diff::richardson(|m| law.state_at_chart(m, -0.5).0.rho, n, 1e-3 * n);
            assert!((drho_dn - fd).abs() < 1e-9 * drho_dn);
        }
    }
}
