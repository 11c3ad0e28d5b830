//! Riemann-invariant calculus of the 2×2 isentropic system with P = k²ρ^γ.
//!
//! With Y = (z−w)(γ−1)/(4c√γ) the state is explicit:
//! u = c·tanh((w+z)/(2c)), kρ^{(γ−1)/2}/c = tan Y, √P′ = c√γ·tan Y.
//! The eigenvalues are λ1 = c·tanh(H1/2), λ2 = c·tanh(H2/2) with
//! H1,2 = (w+z)/c + ln((1 ∓ √γ tan Y)/(1 ± √γ tan Y)).
//!
//! Gradient variables: ξ = e^{h1}∂x w obeys ∂−ξ = −(e^{−h1}∂wλ1)ξ² along
//! 1-characteristics (∂− = ∂t + λ1∂x), and ζ = e^{h2}∂x z obeys
//! ∂+ζ = −(e^{−h2}∂zλ2)ζ² along 2-characteristics.

use crate::eos::GasParams;
use crate::error::{Error, Result};
use crate::numerics::quad::QuadSettings;
use crate::solver::CharTrace;
use serde::{Deserialize, Serialize};

/// Densities below this are treated as vacuum by the weight functions.
pub const RHO_FLOOR: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RiemannPairIso {
    pub w: f64,
    pub z: f64,
}

impl RiemannPairIso {
    pub fn new(w: f64, z: f64) -> Self {
        RiemannPairIso { w, z }
    }

    /// Mirror image under x → −x: (w, z) → (−z, −w).
    pub fn reflected(self) -> Self {
        RiemannPairIso {
            w: -self.z,
            z: -self.w,
        }
    }
}

/// Spatial gradients at a point and their weighted forms.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GradientStateIso {
    pub dx_w: f64,
    pub dx_z: f64,
    /// e^{h1}·∂x w
    pub xi: f64,
    /// e^{h2}·∂x z
    pub zeta: f64,
}

impl GradientStateIso {
    pub fn new(pair: RiemannPairIso, dx_w: f64, dx_z: f64, params: &GasParams) -> Result<Self> {
        let (h1, h2) = weights_h1_h2(pair, params)?;
        Ok(GradientStateIso {
            dx_w,
            dx_z,
            xi: h1.exp() * dx_w,
            zeta: h2.exp() * dx_z,
        })
    }
}

/// Upper bound on z − w for which √P′ < c.
pub fn admissible_gap(params: &GasParams) -> f64 {
    let g = params.gamma;
    4.0 * params.c * g.sqrt() / (g - 1.0) * (1.0 / g.sqrt()).atan()
}

fn gap_scale(params: &GasParams) -> f64 {
    (params.gamma - 1.0) / (4.0 * params.c * params.gamma.sqrt())
}

/// Y(w, z) = (z − w)(γ−1)/(4c√γ) = Arctan(kρ^{(γ−1)/2}/c).
pub fn angle_y(pair: RiemannPairIso, params: &GasParams) -> f64 {
    (pair.z - pair.w) * gap_scale(params)
}

fn check_velocity(u: f64, c: f64) -> Result<()> {
    if u.is_finite() && u.abs() < c {
        Ok(())
    } else {
        Err(Error::domain(format!(
            "|u| must be below c = {c}, got u = {u}"
        )))
    }
}

pub fn to_riemann_iso(rho: f64, u: f64, params: &GasParams) -> Result<RiemannPairIso> {
    if !(rho >= 0.0) || !rho.is_finite() {
        return Err(Error::domain(format!(
            "density must be non-negative, got {rho}"
        )));
    }
    let c = params.c;
    check_velocity(u, c)?;
    let mid = c * (u / c).atanh();
    let half_gap =
        0.5 * ((params.k * rho.powf(0.5 * (params.gamma - 1.0)) / c).atan()) / gap_scale(params);
    Ok(RiemannPairIso {
        w: mid - half_gap,
        z: mid + half_gap,
    })
}

pub fn from_riemann_iso(pair: RiemannPairIso, params: &GasParams) -> Result<(f64, f64)> {
    check_admissible(pair, params)?;
    let c = params.c;
    let u = c * ((pair.w + pair.z) / (2.0 * c)).tanh();
    let y = angle_y(pair, params);
    let rho = (c / params.k * y.tan()).powf(2.0 / (params.gamma - 1.0));
    Ok((rho, u))
}

fn check_admissible(pair: RiemannPairIso, params: &GasParams) -> Result<()> {
    let gap = pair.z - pair.w;
    if !gap.is_finite() || !(pair.w + pair.z).is_finite() {
        return Err(Error::domain("non-finite Riemann invariants"));
    }
    if gap < 0.0 {
        return Err(Error::domain(format!(
            "z − w must be non-negative, got {gap}"
        )));
    }
    if gap >= admissible_gap(params) {
        return Err(Error::Admissibility(format!(
            "z − w = {gap} reaches the sonic bound {}",
            admissible_gap(params)
        )));
    }
    Ok(())
}

/// (z − w) by adaptive quadrature of 2∫₀^ρ c²√P′/(c²σ + P) dσ, in the chart σ = τ^{2/(γ−1)}.
pub fn riemann_gap_by_quadrature(rho: f64, params: &GasParams) -> Result<f64> {
    let law = crate::eos::Barotropic::new(*params);
    Ok(2.0 * crate::nonisentropic::f_of_law(&law, rho, 0.0, QuadSettings::tight())?)
}

/// Sound speed √P′ = k√γ ρ^{(γ−1)/2}.
pub fn sound_speed(rho: f64, params: &GasParams) -> f64 {
    params.k * params.gamma.sqrt() * rho.powf(0.5 * (params.gamma - 1.0))
}

pub fn eigenvalues_iso(rho: f64, u: f64, params: &GasParams) -> Result<(f64, f64)> {
    if !(rho >= 0.0) {
        return Err(Error::domain(format!(
            "density must be non-negative, got {rho}"
        )));
    }
    let c = params.c;
    check_velocity(u, c)?;
    let s = sound_speed(rho, params);
    if s >= c {
        return Err(Error::Admissibility(format!(
            "√P′ = {s} is not below c = {c}"
        )));
    }
    let c2 = c * c;
    Ok(((u - s) / (1.0 - u * s / c2), (u + s) / (1.0 + u * s / c2)))
}

/// (H1, H2) with λi = c·tanh(Hi/2).
pub fn h_arguments(pair: RiemannPairIso, params: &GasParams) -> (f64, f64) {
    let sg = params.gamma.sqrt() * angle_y(pair, params).tan();
    let base = (pair.w + pair.z) / params.c;
    let log = ((1.0 - sg) / (1.0 + sg)).ln();
    (base + log, base - log)
}

pub fn eigenvalues_from_invariants(pair: RiemannPairIso, params: &GasParams) -> (f64, f64) {
    let (h1, h2) = h_arguments(pair, params);
    (params.c * (0.5 * h1).tanh(), params.c * (0.5 * h2).tanh())
}

/// Partials of (λ1, λ2) in (w, z): `[∂wλ1, ∂zλ1, ∂wλ2, ∂zλ2]`.
pub fn eigenvalue_partials(pair: RiemannPairIso, params: &GasParams) -> [f64; 4] {
    let c = params.c;
    let g = params.gamma;
    let y = angle_y(pair, params);
    let t = y.tan();
    // d/dw of the log term of H1 is +q, d/dz is −q.
    let q = (g - 1.0) / (2.0 * c * y.cos().powi(2) * (1.0 - g * t * t));
    let (h1, h2) = h_arguments(pair, params);
    let s1 = 0.5 * c / (0.5 * h1).cosh().powi(2);
    let s2 = 0.5 * c / (0.5 * h2).cosh().powi(2);
    [
        s1 * (1.0 / c + q),
        s1 * (1.0 / c - q),
        s2 * (1.0 / c - q),
        s2 * (1.0 / c + q),
    ]
}

/// The closed form ∂wλ1 = E(1+γ)cos(2Y)sec²Y / (1 + E − (E−1)√γ tan Y)² with E = e^{(w+z)/c},
/// valid for c = 1 only (the general-c case is [`eigenvalue_partials`]).
pub fn dw_lambda1_closed_form(pair: RiemannPairIso, params: &GasParams) -> f64 {
    let g = params.gamma;
    let y = angle_y(pair, params);
    let e = ((pair.w + pair.z) / params.c).exp();
    let den = 1.0 + e - (e - 1.0) * g.sqrt() * y.tan();
    e * (1.0 + g) * (2.0 * y).cos() / y.cos().powi(2) / (den * den)
}

fn h1_raw(pair: RiemannPairIso, params: &GasParams) -> f64 {
    let g = params.gamma;
    let c = params.c;
    let y = angle_y(pair, params);
    let e = ((pair.w + pair.z) / c).exp();
    let (sy, cy) = y.sin_cos();
    (3.0 * g - 1.0) / (2.0 * g - 2.0) * cy.ln()
        + (g - 3.0) / (2.0 * g - 2.0) * sy.ln()
        + (pair.z - pair.w) / (2.0 * c)
        - ((1.0 + e) * cy - (e - 1.0) * g.sqrt() * sy).ln()
}

/// Weights h1, h2 solving ∂z h1 = ∂zλ1/(λ1−λ2) and ∂w h2 = ∂wλ2/(λ2−λ1).
///
/// h2 is obtained from h1 through the mirror symmetry (w, z) → (−z, −w), which
/// swaps the two families.
pub fn weights_h1_h2(pair: RiemannPairIso, params: &GasParams) -> Result<(f64, f64)> {
    check_admissible(pair, params)?;
    let (rho, _) = from_riemann_iso(pair, params)?;
    if rho < RHO_FLOOR || pair.z <= pair.w {
        return Err(Error::SingularWeight(format!(
            "vacuum state (ρ = {rho:e}) has no finite weights"
        )));
    }
    Ok((h1_raw(pair, params), h1_raw(pair.reflected(), params)))
}

/// e^{−h1}∂wλ1, the Riccati coefficient along 1-characteristics.
pub fn riccati_coefficient_1(pair: RiemannPairIso, params: &GasParams) -> Result<f64> {
    let (h1, _) = weights_h1_h2(pair, params)?;
    Ok((-h1).exp() * eigenvalue_partials(pair, params)[0])
}

/// e^{−h2}∂zλ2, the Riccati coefficient along 2-characteristics.
pub fn riccati_coefficient_2(pair: RiemannPairIso, params: &GasParams) -> Result<f64> {
    riccati_coefficient_1(pair.reflected(), params)
}

/// 𝒴 = (y/√(1+y²))^{(3−γ)/(2γ−2)}·(1+y²)^{(γ+1)/(4γ−4)} with y = kρ^{(γ−1)/2}/c.
pub fn quantity_y(rho: f64, params: &GasParams) -> Result<f64> {
    if !(rho > 0.0) {
        return Err(Error::domain(format!("𝒴 needs ρ > 0, got {rho}")));
    }
    let g = params.gamma;
    let y = params.k * rho.powf(0.5 * (g - 1.0)) / params.c;
    let one = 1.0 + y * y;
    Ok((y / one.sqrt()).powf((3.0 - g) / (2.0 * g - 2.0)) * one.powf((g + 1.0) / (4.0 * g - 4.0)))
}

/// Explicit form of e^{−h1}∂wλ1 in primitive variables:
/// c·e^{−2√γ Arctan(y)/(γ−1)}(c+u)(γ+1)𝒴(1−y²) / (2c² − 2u√P′).
pub fn riccati_coefficient_explicit(rho: f64, u: f64, params: &GasParams) -> Result<f64> {
    let g = params.gamma;
    let c = params.c;
    let y = params.k * rho.powf(0.5 * (g - 1.0)) / c;
    let yy = quantity_y(rho, params)?;
    Ok(c * (-2.0 * g.sqrt() * y.atan() / (g - 1.0)).exp()
        * (c + u)
        * (g + 1.0)
        * yy
        * (1.0 - y * y)
        / (2.0 * c * c - 2.0 * u * sound_speed(rho, params)))
}

/// Reconstructed reciprocal gradient along a characteristic.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RiccatiPrediction {
    pub times: Vec<f64>,
    /// ∫₀ᵗ κ ds with κ the family's Riccati coefficient.
    pub cumulative: Vec<f64>,
    /// 1/ξ(0) + cumulative (or 1/ζ for family 2).
    pub reciprocal: Vec<f64>,
    /// Zero crossing of the reciprocal when the initial gradient is negative.
    pub blowup_time: Option<f64>,
    /// True when the crossing lies beyond the last sample and was extrapolated
    /// with the final coefficient.
    pub extrapolated: bool,
}

/// Exact Riccati solution 1/ξ(t) = 1/ξ(0) + ∫₀ᵗ e^{−h1}∂wλ1 ds along a traced
/// 1-characteristic (or the ζ analogue along a 2-characteristic), integrated by
/// the trapezoidal rule over the trace samples.
pub fn riccati_reciprocal_integral(
    trace: &CharTrace,
    params: &GasParams,
) -> Result<RiccatiPrediction> {
    let samples = &trace.samples;
    if samples.is_empty() {
        return Err(Error::validation("empty characteristic trace"));
    }
    let coeff: fn(RiemannPairIso, &GasParams) -> Result<f64> = match trace.family {
        1 => riccati_coefficient_1,
        2 => riccati_coefficient_2,
        f => {
            return Err(Error::validation(format!(
                "isentropic Riccati needs family 1 or 2, got {f}"
            )))
        }
    };
    let g0 = if trace.family == 1 {
        samples[0].xi
    } else {
        samples[0].zeta
    };
    if g0 == 0.0 || !g0.is_finite() {
        return Err(Error::Domain(
            "initial weighted gradient is zero: reciprocal undefined".into(),
        ));
    }
    let mut times = Vec::with_capacity(samples.len());
    let mut kappa = Vec::with_capacity(samples.len());
    for s in samples {
        times.push(s.t);
        kappa.push(coeff(RiemannPairIso::new(s.w, s.z), params)?);
    }
    let mut cumulative = vec![0.0; samples.len()];
    for i in 1..samples.len() {
        cumulative[i] =
            cumulative[i - 1] + 0.5 * (kappa[i] + kappa[i - 1]) * (times[i] - times[i - 1]);
    }
    let reciprocal: Vec<f64> = cumulative.iter().map(|q| 1.0 / g0 + q).collect();
    let mut blowup_time = None;
    let mut extrapolated = false;
    if g0 < 0.0 {
        for i in 1..reciprocal.len() {
            if reciprocal[i] >= 0.0 {
                let (a, b) = (reciprocal[i - 1], reciprocal[i]);
                blowup_time = Some(times[i - 1] + (times[i] - times[i - 1]) * (-a) / (b - a));
                break;
            }
        }
        if blowup_time.is_none() {
            let last = reciprocal.len() - 1;
            if kappa[last] > 0.0 {
                blowup_time = Some(times[last] - reciprocal[last] / kappa[last]);
                extrapolated = true;
            }
        }
    }
    Ok(RiccatiPrediction {
        times,
        cumulative,
        reciprocal,
        blowup_time,
        extrapolated,
    })
}
