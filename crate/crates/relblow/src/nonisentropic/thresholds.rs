//! Data-level constants: ψ, Ψ, K(c,B), E(c,B), the box constants V, U1, U2,
//! max|w|, max|z|, M2, and the compression thresholds N1, N2.

use super::calculus::{assemble_coefficients, Calculus, Coefficients};
use super::slice::{Channel, EntropySlice};
use super::{integrands, ConservedAlongFlow, RiemannTriple};
use crate::eos::{GasParams, Polytropic, PressureLaw};
use crate::error::{Error, Result};
use crate::numerics::quad::{gauss_kronrod, QuadSettings};
use crate::numerics::roots::{brent, golden_max, scan_max};
use crate::solver::CharTrace;
use serde::{Deserialize, Serialize};

/// Resolution of the (log ρ, S) searches behind K and Ψ.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SearchGrid {
    pub rho_points: usize,
    pub s_points: usize,
}

impl Default for SearchGrid {
    fn default() -> Self {
        SearchGrid {
            rho_points: 161,
            s_points: 33,
        }
    }
}

/// Upper end of the K search when E(c,B) is infinite.
pub const K_RHO_CAP: f64 = 1e6;
/// Lower end of the K and Ψ searches, relative to the upper end.
const SEARCH_FLOOR: f64 = 1e-12;

/// ψ, Ψ, K and E for an entropy bound B.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct PsiPsiK {
    pub params: GasParams,
    pub b: f64,
    /// sup |a|/(z−w) over the searched set.
    pub k: f64,
    /// (ρ, S) where K is attained.
    pub k_argmax: (f64, f64),
    /// E(c,B); infinite when √∂ρP < c for every ρ.
    pub e: f64,
    /// Upper density of the K search (E, or [`K_RHO_CAP`] when E = ∞).
    pub k_rho_top: f64,
    /// |a|/(z−w) at the top of the K search divided by K; near 1 means the
    /// sup sits at the cap.
    pub k_tail_ratio: f64,
    pub grid: SearchGrid,
}

fn law_of(params: &GasParams) -> Polytropic {
    Polytropic::new(*params)
}

/// inf over S ∈ [−B, B] of c²√∂ρP/(c²ρ+P) at density ρ.
fn inf_integrand(law: &dyn PressureLaw, rho: f64, b: f64) -> f64 {
    let c = law.params().c;
    let f = |s: f64| match law.state(rho, s) {
        Ok(st) => -integrands(&st, c).i_f,
        Err(_) => f64::NEG_INFINITY,
    };
    if b == 0.0 {
        return -f(0.0);
    }
    -scan_max(f, -b, b, 9, 1e-9 * b.max(1e-12)).1
}

/// ψ(ρ) = ∫₀^ρ inf_S c²√∂σP/(c²σ+P) dσ.
pub fn psi(params: &GasParams, b: f64, rho: f64) -> Result<f64> {
    if !(rho >= 0.0) {
        return Err(Error::domain(format!("ψ needs ρ ≥ 0, got {rho}")));
    }
    if rho == 0.0 {
        return Ok(0.0);
    }
    let law = law_of(params);
    let p = params.chart_exponent();
    let t_end = rho.powf(1.0 / p);
    // σ = t^p removes the σ^{(γ−3)/2} endpoint behaviour.
    let q = gauss_kronrod(
        |t| {
            if t <= 0.0 {
                return 0.0;
            }
            let sigma = t.powf(p);
            inf_integrand(&law, sigma, b) * p * sigma / t
        },
        0.0,
        t_end,
        QuadSettings {
            abs_tol: 1e-12,
            rel_tol: 1e-10,
            max_intervals: 400,
        },
    )?;
    Ok(q.value)
}

/// ψ⁻¹(y) by bracketed root-finding on the increasing function ψ.
pub fn psi_inverse(params: &GasParams, b: f64, y: f64) -> Result<f64> {
    if !(y >= 0.0) || !y.is_finite() {
        return Err(Error::domain(format!("ψ⁻¹ needs a finite y ≥ 0, got {y}")));
    }
    if y == 0.0 {
        return Ok(0.0);
    }
    let mut hi = 1.0;
    let mut grown = 0;
    while psi(params, b, hi)? < y {
        hi *= 4.0;
        grown += 1;
        if grown > 60 {
            return Err(Error::NonConvergence {
                method: "ψ⁻¹ bracket",
                iterations: grown,
                detail: format!("ψ stays below {y}"),
            });
        }
    }
    let mut failure = None;
    let root = brent(
        |r| match psi(params, b, r) {
            Ok(v) => v - y,
            Err(e) => {
                failure.get_or_insert(e);
                f64::NAN
            }
        },
        0.0,
        hi,
        1e-13 * hi,
        200,
    )?;
    match failure {
        Some(e) => Err(e),
        None => Ok(root),
    }
}

/// E(c,B) = sup{ρ : √∂ρP < c, |S| ≤ B}. Infinite when ∂ρP < c² everywhere
/// (γ ≤ 2 for the polytropic law).
pub fn sonic_density_cap(params: &GasParams, b: f64) -> Result<f64> {
    let law = law_of(params);
    let c2 = params.c * params.c;
    let mut cap: f64 = 0.0;
    for s in [-b, b] {
        let excess = |rho: f64| {
            law.state(rho, s)
                .map(|st| st.p_rho - c2)
                .unwrap_or(f64::NAN)
        };
        let mut hi = 1.0;
        let mut tries = 0;
        while excess(hi) < 0.0 {
            hi *= 10.0;
            tries += 1;
            if tries > 30 {
                return Ok(f64::INFINITY);
            }
        }
        let root = brent(excess, 0.0, hi, 1e-14 * hi, 300)?;
        cap = cap.max(root);
    }
    Ok(cap)
}

fn entropy_grid(b: f64, n: usize) -> Vec<f64> {
    if b == 0.0 || n < 2 {
        return vec![0.0];
    }
    (0..n)
        .map(|i| -b + 2.0 * b * i as f64 / (n - 1) as f64)
        .collect()
}

/// Maximize `ratio(slice, τ)` over a geometric τ grid and the entropy grid,
/// then polish with golden searches in log τ and S.
fn slice_search<F>(
    law: &dyn PressureLaw,
    b: f64,
    rho_top: f64,
    grid: SearchGrid,
    ratio: F,
) -> Result<(f64, f64, f64, f64)>
where
    F: Fn(&dyn PressureLaw, &EntropySlice, f64) -> f64,
{
    let p = law.params().chart_exponent();
    let mut best = (f64::NEG_INFINITY, 0.0, 0.0);
    let mut top_value = f64::NEG_INFINITY;
    for &s in &entropy_grid(b, grid.s_points) {
        let sl = EntropySlice::build(law, s, rho_top, 0.0)?;
        let t_hi = sl.tau_max() / (1.0 + 1e-9);
        let t_lo = t_hi * SEARCH_FLOOR.powf(1.0 / p);
        let n = grid.rho_points.max(2);
        for i in 0..n {
            let lt = t_lo.ln() + (t_hi / t_lo).ln() * i as f64 / (n - 1) as f64;
            let v = ratio(law, &sl, lt.exp());
            if v > best.0 {
                best = (v, lt, s);
            }
            if i == n - 1 {
                top_value = top_value.max(v);
            }
        }
    }
    // Local polish around the best cell.
    let (mut v, mut lt, mut s) = best;
    let dlt = -SEARCH_FLOOR.ln() / p / (grid.rho_points.max(2) - 1) as f64;
    let ds = if b == 0.0 {
        0.0
    } else {
        2.0 * b / (grid.s_points.max(2) - 1) as f64
    };
    for _ in 0..2 {
        let sl = EntropySlice::build(law, s, rho_top, 0.0)?;
        let lt_max = (sl.tau_max() / (1.0 + 1e-9)).ln();
        let (lt2, v2) = golden_max(
            |x| ratio(law, &sl, x.min(lt_max).exp()),
            lt - dlt,
            (lt + dlt).min(lt_max),
            1e-7,
        );
        if v2 > v {
            v = v2;
            lt = lt2.min(lt_max);
        }
        if ds > 0.0 {
            let tau = lt.exp();
            let m = tau.powf(p);
            let rho = law.state_at_chart(m, s).0.rho;
            let (s2, v3) = golden_max(
                |sv| {
                    let Ok(sl) = EntropySlice::build(law, sv, rho_top, 0.0) else {
                        return f64::NEG_INFINITY;
                    };
                    let Ok(ch) = law.chart_of(rho, sv) else {
                        return f64::NEG_INFINITY;
                    };
                    ratio(law, &sl, ch.powf(1.0 / p).min(sl.tau_max()))
                },
                (s - ds).max(-b),
                (s + ds).min(b),
                1e-7,
            );
            if v3 > v {
                v = v3;
                lt = law.chart_of(rho, s2)?.powf(1.0 / p).ln();
                s = s2;
            }
        }
    }
    let rho = law.state_at_chart(lt.exp().powf(p), s).0.rho;
    Ok((v, rho, s, top_value))
}

fn k_ratio(law: &dyn PressureLaw, sl: &EntropySlice, tau: f64) -> f64 {
    let (st, _) = law.state_at_chart(tau.powf(sl.chart_exponent()), sl.s);
    let f = sl.value(Channel::F, tau);
    if !(f > 0.0) {
        return 0.0;
    }
    let i = integrands(&st, law.params().c).i_f;
    let a = -sl.value(Channel::FS, tau) + st.p_s / st.p_rho * i;
    a.abs() / (2.0 * f)
}

fn big_psi_ratio(law: &dyn PressureLaw, sl: &EntropySlice, tau: f64) -> f64 {
    let (st, _) = law.state_at_chart(tau.powf(sl.chart_exponent()), sl.s);
    let f = sl.value(Channel::F, tau);
    if !(f > 0.0) {
        return 0.0;
    }
    st.p_rho.sqrt() / f
}

/// Compute K(c,B) and E(c,B) for entropy bound `b`; ψ and Ψ are methods.
pub fn psi_psi_k(params: &GasParams, b: f64, grid: SearchGrid) -> Result<PsiPsiK> {
    params.validate()?;
    if !(b >= 0.0) {
        return Err(Error::validation(format!(
            "entropy bound must be ≥ 0, got {b}"
        )));
    }
    let law = law_of(params);
    let e = sonic_density_cap(params, b)?;
    let k_rho_top = if e.is_finite() {
        e * (1.0 - 1e-9)
    } else {
        K_RHO_CAP
    };
    let (k, rho, s, top) = slice_search(&law, b, k_rho_top, grid, k_ratio)?;
    Ok(PsiPsiK {
        params: *params,
        b,
        k,
        k_argmax: (rho, s),
        e,
        k_rho_top,
        k_tail_ratio: if k > 0.0 { top / k } else { 0.0 },
        grid,
    })
}

impl PsiPsiK {
    pub fn psi(&self, rho: f64) -> Result<f64> {
        psi(&self.params, self.b, rho)
    }

    pub fn psi_inverse(&self, y: f64) -> Result<f64> {
        psi_inverse(&self.params, self.b, y)
    }

    /// Ψ(κ) = max over [0,κ]×[−B,B] of 2√∂ρP/(z−w).
    pub fn big_psi(&self, kappa: f64) -> Result<f64> {
        if !(kappa > 0.0) {
            return Err(Error::domain(format!("Ψ needs κ > 0, got {kappa}")));
        }
        let top = if self.e.is_finite() {
            kappa.min(self.e * (1.0 - 1e-9))
        } else {
            kappa
        };
        Ok(slice_search(&law_of(&self.params), self.b, top, self.grid, big_psi_ratio)?.0)
    }
}

/// Initial data sampled on a grid, in Riemann variables.
#[derive(Clone, Debug, Default, Serialize, Deserialize)]
pub struct InitialProfiles {
    pub x: Vec<f64>,
    pub w0: Vec<f64>,
    pub z0: Vec<f64>,
    pub s0: Vec<f64>,
}

impl InitialProfiles {
    pub fn total_variation_s0(&self) -> f64 {
        self.s0.windows(2).map(|p| (p[1] - p[0]).abs()).sum()
    }

    /// ε = ½ inf (z0 − w0).
    pub fn lower_gap(&self) -> f64 {
        0.5 * self
            .z0
            .iter()
            .zip(&self.w0)
            .map(|(z, w)| z - w)
            .fold(f64::INFINITY, f64::min)
    }

    fn sup_abs(v: &[f64]) -> f64 {
        v.iter().fold(0.0, |m, x| m.max(x.abs()))
    }
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
pub struct CriteriaConstants {
    #[serde(rename = "K")]
    pub k: f64,
    #[serde(rename = "E")]
    pub e: f64,
    #[serde(rename = "V")]
    pub v: f64,
    pub tv_s0: f64,
    #[serde(rename = "U1")]
    pub u1: f64,
    #[serde(rename = "U2")]
    pub u2: f64,
    pub max_w: f64,
    pub max_z: f64,
    #[serde(rename = "M2")]
    pub m2: f64,
    /// Ψ(M2)·(max|z| + max|w|)/2, required below c.
    pub assumption_23_value: f64,
    /// c minus the value above.
    pub assumption_23_margin: f64,
    pub eps: f64,
    pub b: f64,
    #[serde(rename = "N1")]
    pub n1: f64,
    #[serde(rename = "N2")]
    pub n2: f64,
}

impl CriteriaConstants {
    pub fn assumption_23_holds(&self) -> bool {
        self.assumption_23_margin > 0.0
    }
}

/// The constants built from the initial data with B = `params.entropy_bound`.
pub fn constants_226(profiles: &InitialProfiles, params: &GasParams) -> Result<CriteriaConstants> {
    let ppk = psi_psi_k(params, params.entropy_bound, SearchGrid::default())?;
    constants_226_with(profiles, &ppk)
}

pub fn constants_226_with(profiles: &InitialProfiles, ppk: &PsiPsiK) -> Result<CriteriaConstants> {
    if profiles.w0.is_empty()
        || profiles.w0.len() != profiles.z0.len()
        || profiles.s0.len() != profiles.w0.len()
    {
        return Err(Error::validation(
            "initial profiles must be non-empty and of equal length",
        ));
    }
    let sup_s = InitialProfiles::sup_abs(&profiles.s0);
    if sup_s > ppk.b * (1.0 + 1e-12) + 1e-12 {
        return Err(Error::validation(format!(
            "sup|S0| = {sup_s} exceeds the entropy bound B = {}",
            ppk.b
        )));
    }
    let k = ppk.k;
    let tv = profiles.total_variation_s0();
    let v = (k * tv).exp();
    let sw = InitialProfiles::sup_abs(&profiles.w0);
    let sz = InitialProfiles::sup_abs(&profiles.z0);
    let u1 = sw * v + k * v * v * sz * tv;
    let u2 = sz * v + k * v * v * sw * tv;
    let kvs = (k * v * tv).powi(2);
    let grow = 1.0 + kvs * kvs.exp();
    let (max_w, max_z) = (u1 * grow, u2 * grow);
    let half = 0.5 * (max_z + max_w);
    let m2 = ppk.psi_inverse(half)?;
    let c = ppk.params.c;
    let value = if m2 > 0.0 {
        ppk.big_psi(m2)? * half
    } else {
        0.0
    };
    Ok(CriteriaConstants {
        k,
        e: ppk.e,
        v,
        tv_s0: tv,
        u1,
        u2,
        max_w,
        max_z,
        m2,
        assumption_23_value: value,
        assumption_23_margin: c - value,
        eps: profiles.lower_gap(),
        b: ppk.b,
        n1: 0.0,
        n2: 0.0,
    })
}

/// The set 𝒩 = {|z| ≤ max|z|, |w| ≤ max|w|, |S| ≤ B} plus the data needed to
/// evaluate weights on it.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Box3 {
    pub max_w: f64,
    pub max_z: f64,
    pub b: f64,
    /// Lower gap ε of the data.
    pub eps: f64,
    /// Density bound on 𝒩 (M2).
    pub rho_max: f64,
}

impl Box3 {
    pub fn from_constants(k: &CriteriaConstants) -> Self {
        Box3 {
            max_w: k.max_w,
            max_z: k.max_z,
            b: k.b,
            eps: k.eps,
            rho_max: k.m2,
        }
    }
}

/// sup |θ1|, sup |θ2| over the initial data.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ConservedBounds {
    pub theta1: f64,
    pub theta2: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ThresholdSettings {
    /// Coarse points per axis of (z, w, S).
    pub grid: usize,
    /// Fraction of coarse cells refined.
    pub refine_fraction: f64,
    /// Relative change below which refinement stops.
    pub tolerance: f64,
    pub max_levels: usize,
    /// Points whose ñ-partial cancellation is below this are excluded.
    pub cancellation_floor: f64,
}

impl Default for ThresholdSettings {
    fn default() -> Self {
        ThresholdSettings {
            grid: 33,
            refine_fraction: 0.01,
            tolerance: 5e-3,
            max_levels: 4,
            cancellation_floor: 1e-6,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct RefinementLevel {
    pub spacing_divisor: usize,
    pub points: usize,
    #[serde(rename = "N1")]
    pub n1: f64,
    #[serde(rename = "N2")]
    pub n2: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ThresholdReport {
    #[serde(rename = "N1")]
    pub n1: f64,
    #[serde(rename = "N2")]
    pub n2: f64,
    pub argmax_n1: Option<RiemannTriple>,
    pub argmax_n2: Option<RiemannTriple>,
    pub levels: Vec<RefinementLevel>,
    /// Relative change of (N1, N2) over the last refinement level.
    pub last_change: (f64, f64),
    pub converged: bool,
    pub evaluated: usize,
    pub excluded_cancellation: usize,
    pub skipped_inadmissible: usize,
}

/// The squared threshold candidates at one point, maximized in closed form
/// over |θ1| ≤ T1, |θ2| ≤ T2.
///
/// a3 is linear in θ1 and a4 = θ1²·C1 + θ2·C2, so
/// sup (a3²/(2k) + |a4|) = T1²·a3(1,0)²/(2k) + T1²|a4(1,0)| + T2|a4(0,1)|.
fn point_candidates(
    cal: &Calculus,
    t: RiemannTriple,
    bounds: ConservedBounds,
) -> Result<(f64, f64, f64)> {
    let pt = cal.point(t)?;
    let pd = cal.partials(&pt)?;
    let wt = cal.weights(&pt)?;
    let one = assemble_coefficients(
        &pt,
        &pd,
        &wt,
        ConservedAlongFlow {
            theta1: 1.0,
            theta2: 0.0,
        },
    );
    let two = assemble_coefficients(
        &pt,
        &pd,
        &wt,
        ConservedAlongFlow {
            theta1: 0.0,
            theta2: 1.0,
        },
    );
    let cand = |k: f64, c3: f64, c4a: f64, c4b: f64| {
        let x =
            bounds.theta1.powi(2) * (c3 * c3 / (2.0 * k) + c4a.abs()) + bounds.theta2 * c4b.abs();
        2.0 / k * x
    };
    let n1 = cand(one.k3, one.a[3], one.a[4], two.a[4]);
    let n2 = cand(one.k2, one.b[3], one.b[4], two.b[4]);
    Ok((n1, n2, pd.n_t_cancellation))
}

/// Threshold candidate values at a point for explicit θ (no sup over θ).
pub fn threshold_candidates_at(
    cal: &Calculus,
    t: RiemannTriple,
    conserved: ConservedAlongFlow,
) -> Result<Coefficients> {
    cal.coefficients(t, conserved)
}

struct Evaluated {
    t: RiemannTriple,
    n1sq: f64,
    n2sq: f64,
}

/// N1 and N2 as suprema over 𝒩 × θ-box: coarse grid, then repeated local
/// refinement (halved spacing) around the top cells.
pub fn thresholds_n1_n2(
    params: &GasParams,
    bx: Box3,
    bounds: ConservedBounds,
    settings: ThresholdSettings,
) -> Result<ThresholdReport> {
    if !(bx.max_w > 0.0 || bx.max_z > 0.0) || bx.max_w < 0.0 || bx.max_z < 0.0 || bx.b < 0.0 {
        return Err(Error::validation(format!("empty or malformed box {bx:?}")));
    }
    if !(bounds.theta1 >= 0.0 && bounds.theta2 >= 0.0) {
        return Err(Error::validation(format!(
            "conserved bounds must be ≥ 0, got {bounds:?}"
        )));
    }
    if bounds.theta1 == 0.0 && bounds.theta2 == 0.0 {
        // Every coefficient carries θ1 or θ2.
        return Ok(ThresholdReport {
            converged: true,
            ..ThresholdReport::default()
        });
    }
    let cal = Calculus::new(*params, bx.eps, bx.rho_max * 1.05)?;
    let g = settings.grid.max(3);
    let axis = |m: f64, n: usize| -> Vec<f64> {
        (0..n)
            .map(|i| -m + 2.0 * m * i as f64 / (n - 1) as f64)
            .collect()
    };
    let zs = axis(bx.max_z, g);
    let ws = axis(bx.max_w, g);
    let ss = if bx.b == 0.0 {
        vec![0.0]
    } else {
        axis(bx.b, g)
    };
    let spacing = [
        2.0 * bx.max_z / (g - 1) as f64,
        2.0 * bx.max_w / (g - 1) as f64,
        if bx.b == 0.0 {
            0.0
        } else {
            2.0 * bx.b / (g - 1) as f64
        },
    ];
    let mut report = ThresholdReport::default();
    let eval = |t: RiemannTriple, report: &mut ThresholdReport| -> Option<Evaluated> {
        if !(t.z > t.w)
            || t.z.abs() > bx.max_z * (1.0 + 1e-12)
            || t.w.abs() > bx.max_w * (1.0 + 1e-12)
            || t.s_hat.abs() > bx.b * (1.0 + 1e-12)
        {
            return None;
        }
        match point_candidates(&cal, t, bounds) {
            Ok((n1, n2, cancel)) => {
                report.evaluated += 1;
                if cancel < settings.cancellation_floor {
                    report.excluded_cancellation += 1;
                    return None;
                }
                if !n1.is_finite() || !n2.is_finite() {
                    report.skipped_inadmissible += 1;
                    return None;
                }
                Some(Evaluated {
                    t,
                    n1sq: n1,
                    n2sq: n2,
                })
            }
            Err(_) => {
                report.skipped_inadmissible += 1;
                None
            }
        }
    };
    let mut all = Vec::new();
    for &s in &ss {
        for &w in &ws {
            for &z in &zs {
                if let Some(e) = eval(RiemannTriple::new(w, z, s), &mut report) {
                    all.push(e);
                }
            }
        }
    }
    if all.is_empty() {
        return Err(Error::validation(
            "no admissible point in the threshold box",
        ));
    }
    let best = |v: &[Evaluated]| -> (f64, f64, RiemannTriple, RiemannTriple) {
        let mut b1 = (f64::NEG_INFINITY, v[0].t);
        let mut b2 = (f64::NEG_INFINITY, v[0].t);
        for e in v {
            if e.n1sq > b1.0 {
                b1 = (e.n1sq, e.t);
            }
            if e.n2sq > b2.0 {
                b2 = (e.n2sq, e.t);
            }
        }
        (b1.0, b2.0, b1.1, b2.1)
    };
    let (mut n1sq, mut n2sq, mut arg1, mut arg2) = best(&all);
    report.levels.push(RefinementLevel {
        spacing_divisor: 1,
        points: all.len(),
        n1: n1sq.max(0.0).sqrt(),
        n2: n2sq.max(0.0).sqrt(),
    });
    let top = ((all.len() as f64 * settings.refine_fraction).ceil() as usize).max(1);
    let mut seeds: Vec<RiemannTriple> = {
        let mut by1: Vec<&Evaluated> = all.iter().collect();
        by1.sort_by(|a, b| b.n1sq.total_cmp(&a.n1sq));
        let mut by2: Vec<&Evaluated> = all.iter().collect();
        by2.sort_by(|a, b| b.n2sq.total_cmp(&a.n2sq));
        by1.iter()
            .take(top)
            .chain(by2.iter().take(top))
            .map(|e| e.t)
            .collect()
    };
    let mut divisor = 1;
    let mut converged = false;
    let mut change = (f64::INFINITY, f64::INFINITY);
    for _ in 0..settings.max_levels {
        divisor *= 2;
        let h = spacing.map(|d| d / divisor as f64);
        let mut level = Vec::new();
        let mut seen = std::collections::HashSet::new();
        for seed in &seeds {
            for dz in -1..=1 {
                for dw in -1..=1 {
                    for ds in -1..=1 {
                        if dz == 0 && dw == 0 && ds == 0 {
                            continue;
                        }
                        if h[2] == 0.0 && ds != 0 {
                            continue;
                        }
                        let t = RiemannTriple::new(
                            seed.w + dw as f64 * h[1],
                            seed.z + dz as f64 * h[0],
                            seed.s_hat + ds as f64 * h[2],
                        );
                        let key = (t.w.to_bits(), t.z.to_bits(), t.s_hat.to_bits());
                        if !seen.insert(key) {
                            continue;
                        }
                        if let Some(e) = eval(t, &mut report) {
                            level.push(e);
                        }
                    }
                }
            }
        }
        let prev = (n1sq.max(0.0).sqrt(), n2sq.max(0.0).sqrt());
        if !level.is_empty() {
            let (l1, l2, a1, a2) = best(&level);
            if l1 > n1sq {
                n1sq = l1;
                arg1 = a1;
            }
            if l2 > n2sq {
                n2sq = l2;
                arg2 = a2;
            }
        }
        let now = (n1sq.max(0.0).sqrt(), n2sq.max(0.0).sqrt());
        let rel = |a: f64, b: f64| if b > 0.0 { (b - a).abs() / b } else { 0.0 };
        change = (rel(prev.0, now.0), rel(prev.1, now.1));
        report.levels.push(RefinementLevel {
            spacing_divisor: divisor,
            points: level.len(),
            n1: now.0,
            n2: now.1,
        });
        if change.0 < settings.tolerance && change.1 < settings.tolerance {
            converged = true;
            break;
        }
        let mut next: Vec<&Evaluated> = level.iter().collect();
        next.sort_by(|a, b| {
            (b.n1sq / n1sq.max(1e-300))
                .max(b.n2sq / n2sq.max(1e-300))
                .total_cmp(&(a.n1sq / n1sq.max(1e-300)).max(a.n2sq / n2sq.max(1e-300)))
        });
        seeds = vec![arg1, arg2];
        seeds.extend(next.iter().take(top).map(|e| e.t));
    }
    report.n1 = n1sq.max(0.0).sqrt();
    report.n2 = n2sq.max(0.0).sqrt();
    report.argmax_n1 = Some(arg1);
    report.argmax_n2 = Some(arg2);
    report.last_change = change;
    report.converged = converged;
    Ok(report)
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct DensityBoundReport {
    pub applicable: bool,
    /// (3−γ)/4
    pub exponent: f64,
    pub samples: usize,
    /// inf over samples of ρ^{(3−γ)/4}(1+t).
    pub inf_product: f64,
    /// Smallest D with ρ^{(3−γ)/4} ≥ 1/(D(t+1)) on the samples.
    pub fitted_d: f64,
    pub first_quartile_mean: f64,
    pub last_quartile_mean: f64,
    /// last/first quartile mean ≥ 0.5 on every trace.
    pub no_decay: bool,
    pub worst_quartile_ratio: f64,
    pub note: String,
}

/// Check ρ^{(3−γ)/4}(t,x(t))·(1+t) stays bounded below along traced paths.
///
/// Quartiles are taken in time per trace; `no_decay` requires the mean of the
/// product over the last quarter of each trace's time span to be at least half
/// of its mean over the first quarter.
pub fn density_lower_bound_check(traces: &[CharTrace], params: &GasParams) -> DensityBoundReport {
    let g = params.gamma;
    if !(g > 1.0 && g < 3.0) {
        return DensityBoundReport {
            applicable: false,
            note: format!("γ = {g} outside (1, 3)"),
            ..Default::default()
        };
    }
    let exponent = (3.0 - g) / 4.0;
    let mut inf = f64::INFINITY;
    let mut samples = 0;
    let mut worst = f64::INFINITY;
    let (mut first_sum, mut first_n, mut last_sum, mut last_n) = (0.0, 0usize, 0.0, 0usize);
    for tr in traces {
        if tr.samples.len() < 4 {
            continue;
        }
        let t0 = tr.samples.first().unwrap().t;
        let t1 = tr.samples.last().unwrap().t;
        let span = t1 - t0;
        let (mut fs, mut fnn, mut ls, mut ln) = (0.0, 0usize, 0.0, 0usize);
        for smp in &tr.samples {
            let prod = smp.rho.max(0.0).powf(exponent) * (1.0 + smp.t);
            inf = inf.min(prod);
            samples += 1;
            if smp.t <= t0 + 0.25 * span {
                fs += prod;
                fnn += 1;
            }
            if smp.t >= t1 - 0.25 * span {
                ls += prod;
                ln += 1;
            }
        }
        if fnn > 0 && ln > 0 {
            let ratio = (ls / ln as f64) / (fs / fnn as f64);
            worst = worst.min(ratio);
            first_sum += fs;
            first_n += fnn;
            last_sum += ls;
            last_n += ln;
        }
    }
    if samples == 0 {
        return DensityBoundReport {
            applicable: true,
            exponent,
            note: "no samples".into(),
            ..Default::default()
        };
    }
    DensityBoundReport {
        applicable: true,
        exponent,
        samples,
        inf_product: inf,
        fitted_d: if inf > 0.0 { 1.0 / inf } else { f64::INFINITY },
        first_quartile_mean: first_sum / first_n.max(1) as f64,
        last_quartile_mean: last_sum / last_n.max(1) as f64,
        no_decay: worst >= 0.5,
        worst_quartile_ratio: worst,
        note: String::new(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nonisentropic::f_of_law;
    use crate::solver::CharSample;

    fn gas() -> GasParams {
        GasParams::default()
    }

    #[test]
    fn psi_basics() {
        let p = gas();
        assert_eq!(psi(&p, 0.5, 0.0).unwrap(), 0.0);
        let mut last = 0.0;
        for rho in [1e-4, 0.01, 0.3, 2.0] {
            let v = psi(&p, 0.5, rho).unwrap();
            assert!(v > last);
            last = v;
            // ψ ≤ F(·, S) for every S in range.
            for s in [-0.5, 0.0, 0.5] {
                let f = f_of_law(&Polytropic::new(p), rho, s, QuadSettings::tight()).unwrap();
                assert!(v <= f * (1.0 + 1e-9));
            }
        }
        let law = Polytropic::new(p);
        let f = f_of_law(&law, 0.7, 0.0, QuadSettings::tight()).unwrap();
        assert!((psi(&p, 0.0, 0.7).unwrap() - f).abs() < 1e-10);
        let y = psi(&p, 0.5, 1.3).unwrap();
        assert!((psi_inverse(&p, 0.5, y).unwrap() - 1.3).abs() < 1e-8);
    }

    #[test]
    fn k_ratio_matches_direct_a() {
        let p = gas().with_gamma(5.0 / 3.0);
        let law = Polytropic::new(p);
        let sl = EntropySlice::build(&law, 0.3, 5.0, 0.0).unwrap();
        for tau in [0.05, 0.4, 0.9 * sl.tau_max()] {
            let (st, _) = law.state_at_chart(tau.powf(sl.chart_exponent()), 0.3);
            let f = f_of_law(&law, st.rho, 0.3, QuadSettings::tight()).unwrap();
            let a = crate::nonisentropic::a_coefficient(st.rho, 0.3, &p).unwrap();
            let want = a.abs() / (2.0 * f);
            assert!(
                (k_ratio(&law, &sl, tau) - want).abs() < 1e-8 * want,
                "{tau}"
            );
        }
    }

    #[test]
    fn sonic_cap() {
        assert!(sonic_density_cap(&gas(), 1.0).unwrap().is_infinite());
        let p = gas().with_gamma(3.0);
        let b = 0.5;
        let e = sonic_density_cap(&p, b).unwrap();
        // Closed form at S = −B: x* = c²/(γ(γ−2)), n* = (x* e^{B/Cv})^{1/(γ−1)}, ρ* = n*(1 + x*/c²).
        let x = 1.0 / 3.0;
        let n = (x * (b / p.cv()).exp()).powf(0.5);
        assert!((e - n * (1.0 + x)).abs() < 1e-10 * e);
    }

    #[test]
    fn k_refinement_and_limits() {
        let p = gas();
        let coarse = psi_psi_k(
            &p,
            1.0,
            SearchGrid {
                rho_points: 81,
                s_points: 17,
            },
        )
        .unwrap();
        let fine = psi_psi_k(
            &p,
            1.0,
            SearchGrid {
                rho_points: 161,
                s_points: 33,
            },
        )
        .unwrap();
        assert!(coarse.k > 0.0);
        assert!(
            (coarse.k - fine.k).abs() < 0.01 * fine.k,
            "{} {}",
            coarse.k,
            fine.k
        );
        let zero = psi_psi_k(&p, 0.0, SearchGrid::default()).unwrap();
        assert!(zero.k > 0.0, "a ≠ 0 at S = 0 for the polytropic law");
    }

    #[test]
    fn constant_entropy_constants() {
        let p = GasParams {
            entropy_bound: 0.0,
            ..gas()
        };
        let prof = InitialProfiles {
            x: vec![0.0, 1.0, 2.0],
            w0: vec![-0.2, -0.1, -0.3],
            z0: vec![0.2, 0.25, 0.1],
            s0: vec![0.0; 3],
        };
        let k = constants_226(&prof, &p).unwrap();
        assert_eq!(k.v, 1.0);
        assert_eq!(k.u1, 0.3);
        assert_eq!(k.max_w, k.u1);
        assert_eq!(k.max_z, 0.25);
        assert!((k.eps - 0.175).abs() < 1e-15);
        assert!(k.assumption_23_holds());
        let mono = InitialProfiles {
            s0: vec![-0.3, 0.1, 0.4],
            ..prof
        };
        assert!((mono.total_variation_s0() - 0.7).abs() < 1e-15);
    }

    #[test]
    fn thresholds_vanish_without_entropy_variation() {
        let bx = Box3 {
            max_w: 0.3,
            max_z: 0.3,
            b: 0.2,
            eps: 0.05,
            rho_max: 2.0,
        };
        let r = thresholds_n1_n2(
            &gas(),
            bx,
            ConservedBounds::default(),
            ThresholdSettings::default(),
        )
        .unwrap();
        assert_eq!((r.n1, r.n2), (0.0, 0.0));
    }

    #[test]
    fn thresholds_refine_and_grow_with_bounds() {
        let p = GasParams {
            entropy_bound: 0.2,
            ..gas()
        };
        let bx = Box3 {
            max_w: 0.3,
            max_z: 0.3,
            b: 0.2,
            eps: 0.05,
            rho_max: 3.0,
        };
        let s = ThresholdSettings {
            grid: 9,
            ..Default::default()
        };
        let small = thresholds_n1_n2(
            &p,
            bx,
            ConservedBounds {
                theta1: 0.1,
                theta2: 0.1,
            },
            s,
        )
        .unwrap();
        let big = thresholds_n1_n2(
            &p,
            bx,
            ConservedBounds {
                theta1: 0.2,
                theta2: 0.3,
            },
            s,
        )
        .unwrap();
        assert!(small.n1 > 0.0 && small.n2 > 0.0);
        assert!(big.n1 > small.n1 && big.n2 > small.n2);
        assert!(small.converged, "{:?}", small.levels);
    }

    #[test]
    fn density_check_equality_case() {
        let p = gas();
        let samples: Vec<CharSample> = (0..50)
            .map(|i| {
                let t = i as f64 * 0.2;
                CharSample {
                    t,
                    rho: (1.0 + t).powi(-4),
                    ..Default::default()
                }
            })
            .collect();
        let tr = CharTrace {
            family: 2,
            samples,
            truncated: false,
        };
        let r = density_lower_bound_check(&[tr], &p);
        assert!((r.inf_product - 1.0).abs() < 1e-12);
        assert!((r.worst_quartile_ratio - 1.0).abs() < 1e-12 && r.no_decay);
        assert!(!density_lower_bound_check(&[], &p.with_gamma(3.0)).applicable);
    }
}
