//! Static classification of initial data: the isentropic global/finite-time
//! dichotomy and the non-isentropic strong-compression criterion.

use crate::eos::GasParams;
use crate::error::{Error, Result};
use crate::initial::{check_uniform, InitialSpec, LawKind};
use crate::isentropic::{
    admissible_gap, from_riemann_iso, quantity_y, riccati_coefficient_1, riccati_coefficient_2,
    to_riemann_iso, weights_h1_h2, RiemannPairIso, RHO_FLOOR,
};
use crate::nonisentropic::{
    constants_226_with, psi_psi_k, thresholds_n1_n2, to_riemann_law, Box3, Calculus,
    ConservedAlongFlow, ConservedBounds, CriteriaConstants, InitialProfiles, PsiPsiK, SearchGrid,
    ThresholdReport, ThresholdSettings,
};
use crate::numerics::diff;
use crate::numerics::roots::scan_max;
use crate::solver::{BlowupObservation, Grid, Primitive};
use serde::{Deserialize, Serialize};
use std::collections::HashMap;

/// Sampled initial data with every derived quantity the classifiers use.
///
/// Spatial derivatives are fourth-order differences on the sample grid
/// (periodic wrap or one-sided stencils at the ends). Derivatives of w and z
/// below the round-off floor of the differencing are set to zero, so a
/// constant state is classified as exactly neutral.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct InitialData {
    pub law: LawKind,
    pub params: GasParams,
    pub periodic: bool,
    pub x: Vec<f64>,
    pub rho0: Vec<f64>,
    pub u0: Vec<f64>,
    #[serde(rename = "S0")]
    pub s0: Vec<f64>,
    pub w0: Vec<f64>,
    pub z0: Vec<f64>,
    pub dx_w0: Vec<f64>,
    pub dx_z0: Vec<f64>,
    /// e^{h1}∂xw0 (isentropic law only; 0 at vacuum points).
    pub xi0: Vec<f64>,
    /// e^{h2}∂xz0 (isentropic law only).
    pub zeta0: Vec<f64>,
    pub eta0: Vec<f64>,
    pub dxx_s0: Vec<f64>,
    pub n_t0: Vec<f64>,
    pub dx_n_t0: Vec<f64>,
    pub theta1: Vec<f64>,
    pub theta2: Vec<f64>,
}

impl InitialData {
    /// Build from primitive samples on a uniform grid. With the isentropic law
    /// the entropy column is ignored (η ≡ 0).
    pub fn from_samples(
        x: Vec<f64>,
        prim: &[Primitive],
        law: LawKind,
        params: GasParams,
        periodic: bool,
    ) -> Result<Self> {
        if x.len() != prim.len() || x.len() < 6 {
            return Err(Error::validation(
                "initial data needs at least six samples with matching columns",
            ));
        }
        params.validate()?;
        let dx = check_uniform(&x)?;
        let law_obj = law.boxed(params);
        let n = x.len();
        let (mut w0, mut z0) = (Vec::with_capacity(n), Vec::with_capacity(n));
        let (mut n_t0, mut s0) = (Vec::with_capacity(n), Vec::with_capacity(n));
        for (xi, p) in x.iter().zip(prim) {
            let at = |e: Error| Error::validation(format!("initial state at x = {xi}: {e}"));
            let (w, z, s) = match law {
                LawKind::Isentropic => {
                    let pr = to_riemann_iso(p.rho, p.u, &params).map_err(at)?;
                    if pr.z - pr.w >= admissible_gap(&params) {
                        return Err(at(Error::Admissibility("sound speed reaches c".into())));
                    }
                    (pr.w, pr.z, 0.0)
                }
                LawKind::Polytropic => {
                    let t = to_riemann_law(law_obj.as_ref(), p.rho, p.u, p.s).map_err(at)?;
                    (t.w, t.z, p.s)
                }
            };
            w0.push(w);
            z0.push(z);
            s0.push(s);
            let nn = law_obj.state(p.rho, s).map_err(at)?.n;
            n_t0.push(params.c * nn / (params.c * params.c - p.u * p.u).sqrt());
        }
        let d1 = |v: &[f64]| {
            if periodic {
                diff::first_derivative_4_periodic(v, dx)
            } else {
                diff::first_derivative_4(v, dx)
            }
        };
        let d2 = |v: &[f64]| {
            if periodic {
                diff::second_derivative_4_periodic(v, dx)
            } else {
                diff::second_derivative_4(v, dx)
            }
        };
        let scale = w0.iter().chain(&z0).fold(1.0f64, |m, v| m.max(v.abs()));
        let floor = 32.0 * f64::EPSILON * scale / dx;
        let clean = |v: Vec<f64>| {
            v.into_iter()
                .map(|d| if d.abs() <= floor { 0.0 } else { d })
                .collect::<Vec<_>>()
        };
        let dx_w0 = clean(d1(&w0));
        let dx_z0 = clean(d1(&z0));
        let (eta0, dxx_s0) = if law == LawKind::Isentropic || s0.iter().all(|s| *s == s0[0]) {
            (vec![0.0; n], vec![0.0; n])
        } else {
            (d1(&s0), d2(&s0))
        };
        let dx_n_t0 = d1(&n_t0);
        let (mut theta1, mut theta2) = (Vec::with_capacity(n), Vec::with_capacity(n));
        for i in 0..n {
            let c = ConservedAlongFlow::from_gradients(eta0[i], dxx_s0[i], n_t0[i], dx_n_t0[i]);
            theta1.push(if n_t0[i] > 0.0 { c.theta1 } else { 0.0 });
            theta2.push(if n_t0[i] > 0.0 { c.theta2 } else { 0.0 });
        }
        let (mut xi0, mut zeta0) = (vec![], vec![]);
        if law == LawKind::Isentropic {
            for i in 0..n {
                let pair = RiemannPairIso::new(w0[i], z0[i]);
                if prim[i].rho < RHO_FLOOR {
                    xi0.push(0.0);
                    zeta0.push(0.0);
                    continue;
                }
                let (h1, h2) = weights_h1_h2(pair, &params)?;
                xi0.push(h1.exp() * dx_w0[i]);
                zeta0.push(h2.exp() * dx_z0[i]);
            }
        }
        Ok(InitialData {
            law,
            params,
            periodic,
            rho0: prim.iter().map(|p| p.rho).collect(),
            u0: prim.iter().map(|p| p.u).collect(),
            x,
            s0,
            w0,
            z0,
            dx_w0,
            dx_z0,
            xi0,
            zeta0,
            eta0,
            dxx_s0,
            n_t0,
            dx_n_t0,
            theta1,
            theta2,
        })
    }

    /// Sample an initial-data description at `refinement` points per cell of `grid` (or at the
    /// CSV's own points).
    pub fn from_spec(
        spec: &InitialSpec,
        grid: &Grid,
        refinement: usize,
        law: LawKind,
        params: GasParams,
    ) -> Result<Self> {
        let law_obj = law.build(params);
        let (x, prim) = spec.data_points(grid, refinement, law_obj.as_ref())?;
        let periodic = grid.boundary == crate::solver::Boundary::Periodic
            && !matches!(spec, InitialSpec::Csv { .. });
        Self::from_samples(x, &prim, law, params, periodic)
    }

    pub fn len(&self) -> usize {
        self.x.len()
    }

    pub fn is_empty(&self) -> bool {
        self.x.is_empty()
    }

    pub fn profiles(&self) -> InitialProfiles {
        InitialProfiles {
            x: self.x.clone(),
            w0: self.w0.clone(),
            z0: self.z0.clone(),
            s0: self.s0.clone(),
        }
    }

    /// sup |θ1|, sup |θ2| over the samples.
    pub fn conserved_bounds(&self) -> ConservedBounds {
        let sup = |v: &[f64]| v.iter().fold(0.0f64, |m, x| m.max(x.abs()));
        ConservedBounds {
            theta1: sup(&self.theta1),
            theta2: sup(&self.theta2),
        }
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
}

/// Local R/C character of one family at one point.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Character {
    R,
    C,
    /// Zero derivative.
    N,
}

impl Character {
    fn of(d: f64) -> Self {
        if d > 0.0 {
            Character::R
        } else if d < 0.0 {
            Character::C
        } else {
            Character::N
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AssumptionCheck {
    pub name: String,
    pub holds: bool,
    pub value: f64,
    pub limit: f64,
    /// Distance to the limit on the admissible side (negative when violated).
    pub margin: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum IsoVerdict {
    Global,
    FiniteTime,
    OutsideTheory,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum NonisoVerdict {
    BlowupGuaranteed,
    Inconclusive,
    OutsideTheory,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct CharacterCounts {
    pub forward_r: usize,
    pub forward_c: usize,
    pub backward_r: usize,
    pub backward_c: usize,
    pub neutral: usize,
}

/// Riccati blow-up time estimates for the isentropic case.
///
/// Along each characteristic 1/ξ(t) = 1/ξ(0) + ∫κ, and (w, z) stay inside the
/// initial range box, so the box extremes of κ bracket the crossing time.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct BlowupWindow {
    pub family: u8,
    pub x_star: f64,
    /// ξ0 or ζ0 at x*.
    pub weighted_gradient: f64,
    /// min over x of −1/(κ(w0, z0)·ξ0): the Riccati time with the coefficient
    /// frozen at its initial value (exact for a simple wave).
    pub t_riccati: f64,
    /// Using the largest κ on the box.
    pub t_lower: f64,
    /// Using the smallest κ on the box (infinite if it vanishes).
    pub t_upper: f64,
    pub kappa_range: (f64, f64),
    /// Range of κ/𝒴 on the box, the empirical Cg band.
    pub cg_band: (f64, f64),
    /// Numerical blow-up time from an attached run.
    pub observed: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Witness {
    pub x: f64,
    /// "r" or "q".
    pub quantity: String,
    pub value: f64,
    pub threshold: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct NonisoSection {
    pub verdict: NonisoVerdict,
    pub constants: CriteriaConstants,
    pub bounds: ConservedBounds,
    pub thresholds: Option<ThresholdReport>,
    pub r0: Vec<f64>,
    pub q0: Vec<f64>,
    pub min_r0: (f64, f64),
    pub min_q0: (f64, f64),
    pub sup_r0: f64,
    pub sup_q0: f64,
    /// min(min r0 + N1, min q0 + N2); negative means blow-up is guaranteed.
    pub margin: f64,
    pub witness: Option<Witness>,
    /// r0 < 0 or q0 < 0 somewhere (compression in the informal sense, which
    /// does not by itself guarantee blow-up).
    pub informal_compression: bool,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CriteriaReport {
    pub assumptions: Vec<AssumptionCheck>,
    pub x: Vec<f64>,
    /// Sign of ∂xz.
    pub forward: Vec<Character>,
    /// Sign of ∂xw.
    pub backward: Vec<Character>,
    pub counts: CharacterCounts,
    /// (value, x) of inf ξ0 and inf ζ0 (isentropic law).
    pub min_xi0: Option<(f64, f64)>,
    pub min_zeta0: Option<(f64, f64)>,
    pub iso_verdict: Option<IsoVerdict>,
    pub noniso: Option<NonisoSection>,
    pub predicted_window: Option<BlowupWindow>,
}

impl CriteriaReport {
    fn characters(data: &InitialData) -> Self {
        let forward: Vec<Character> = data.dx_z0.iter().map(|d| Character::of(*d)).collect();
        let backward: Vec<Character> = data.dx_w0.iter().map(|d| Character::of(*d)).collect();
        let mut counts = CharacterCounts::default();
        for (f, b) in forward.iter().zip(&backward) {
            match f {
                Character::R => counts.forward_r += 1,
                Character::C => counts.forward_c += 1,
                Character::N => counts.neutral += 1,
            }
            match b {
                Character::R => counts.backward_r += 1,
                Character::C => counts.backward_c += 1,
                Character::N => counts.neutral += 1,
            }
        }
        CriteriaReport {
            assumptions: vec![],
            x: data.x.clone(),
            forward,
            backward,
            counts,
            min_xi0: None,
            min_zeta0: None,
            iso_verdict: None,
            noniso: None,
            predicted_window: None,
        }
    }

    /// Record the observed numerical blow-up time in the window.
    pub fn attach_observation(&mut self, obs: &BlowupObservation) {
        if let Some(w) = self.predicted_window.as_mut() {
            w.observed = obs.t_blowup;
        }
    }
}

fn argmin(x: &[f64], v: &[f64]) -> (f64, f64) {
    v.iter()
        .zip(x)
        .fold((f64::INFINITY, f64::NAN), |(m, mx), (val, xx)| {
            if *val < m {
                (*val, *xx)
            } else {
                (m, mx)
            }
        })
}

fn check(name: &str, value: f64, limit: f64, below: bool) -> AssumptionCheck {
    let margin = if below { limit - value } else { value - limit };
    AssumptionCheck {
        name: name.into(),
        holds: margin > 0.0,
        value,
        limit,
        margin,
    }
}

fn range(v: &[f64]) -> (f64, f64) {
    v.iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), x| {
            (a.min(*x), b.max(*x))
        })
}

/// κ and κ/𝒴 ranges of one family over the box of initial invariant ranges.
fn kappa_box(data: &InitialData, family: u8) -> Result<((f64, f64), (f64, f64))> {
    let p = &data.params;
    let coeff = if family == 1 {
        riccati_coefficient_1
    } else {
        riccati_coefficient_2
    };
    let (wl, wh) = range(&data.w0);
    let (zl, zh) = range(&data.z0);
    let n = 65;
    let mut k = (f64::INFINITY, 0.0f64);
    let mut cg = (f64::INFINITY, 0.0f64);
    let mut visit = |pair: RiemannPairIso| -> Result<()> {
        let Ok((rho, _)) = from_riemann_iso(pair, p) else {
            return Ok(());
        };
        if rho < RHO_FLOOR {
            return Ok(());
        }
        let kv = coeff(pair, p)?;
        let y = quantity_y(rho, p)?;
        k = (k.0.min(kv), k.1.max(kv));
        cg = (cg.0.min(kv / y), cg.1.max(kv / y));
        Ok(())
    };
    for i in 0..n {
        for j in 0..n {
            let w = wl + (wh - wl) * i as f64 / (n - 1) as f64;
            let z = zl + (zh - zl) * j as f64 / (n - 1) as f64;
            if z > w {
                visit(RiemannPairIso::new(w, z))?;
            }
        }
    }
    for (w, z) in data.w0.iter().zip(&data.z0) {
        visit(RiemannPairIso::new(*w, *z))?;
    }
    Ok((k, cg))
}

/// Global/finite-time dichotomy for isentropic data.
pub fn classify_iso(data: &InitialData) -> Result<CriteriaReport> {
    if data.law != LawKind::Isentropic {
        return Err(Error::validation(
            "classify_iso needs data sampled with the isentropic law",
        ));
    }
    let p = &data.params;
    let mut rep = CriteriaReport::characters(data);
    let gap_min = data
        .z0
        .iter()
        .zip(&data.w0)
        .map(|(z, w)| z - w)
        .fold(f64::INFINITY, f64::min);
    let spread = range(&data.z0).1 - range(&data.w0).0;
    rep.assumptions
        .push(check("z0 - w0 > 0", gap_min, 0.0, false));
    rep.assumptions.push(check(
        "sup z0 - inf w0 < sonic bound",
        spread,
        admissible_gap(p),
        true,
    ));
    rep.min_xi0 = Some(argmin(&data.x, &data.xi0));
    rep.min_zeta0 = Some(argmin(&data.x, &data.zeta0));
    if rep.assumptions.iter().any(|a| !a.holds) {
        rep.iso_verdict = Some(IsoVerdict::OutsideTheory);
        return Ok(rep);
    }
    let worst = rep.min_xi0.unwrap().0.min(rep.min_zeta0.unwrap().0);
    if worst >= 0.0 {
        rep.iso_verdict = Some(IsoVerdict::Global);
        return Ok(rep);
    }
    rep.iso_verdict = Some(IsoVerdict::FiniteTime);
    let mut best: Option<BlowupWindow> = None;
    for family in [1u8, 2] {
        let g = if family == 1 { &data.xi0 } else { &data.zeta0 };
        if !g.iter().any(|v| *v < 0.0) {
            continue;
        }
        let (kr, cg) = kappa_box(data, family)?;
        let coeff = if family == 1 {
            riccati_coefficient_1
        } else {
            riccati_coefficient_2
        };
        let mut win = BlowupWindow {
            family,
            t_riccati: f64::INFINITY,
            t_lower: f64::INFINITY,
            t_upper: f64::INFINITY,
            kappa_range: kr,
            cg_band: cg,
            ..Default::default()
        };
        for i in 0..data.len() {
            if g[i] >= 0.0 {
                continue;
            }
            let k0 = coeff(RiemannPairIso::new(data.w0[i], data.z0[i]), p)?;
            let t = -1.0 / (k0 * g[i]);
            if t < win.t_riccati {
                win.t_riccati = t;
                win.x_star = data.x[i];
                win.weighted_gradient = g[i];
            }
            win.t_lower = win.t_lower.min(-1.0 / (kr.1 * g[i]));
            if kr.0 > 0.0 {
                win.t_upper = win.t_upper.min(-1.0 / (kr.0 * g[i]));
            }
        }
        if best.as_ref().map_or(true, |b| win.t_riccati < b.t_riccati) {
            best = Some(win);
        }
    }
    rep.predicted_window = best;
    Ok(rep)
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct NonisoSettings {
    pub search: SearchGrid,
    pub thresholds: ThresholdSettings,
}

/// Constants of the barotropic law: no entropy coupling, K = 0, V = 1.
fn barotropic_constants(data: &InitialData) -> Result<CriteriaConstants> {
    let p = &data.params;
    let sup = |v: &[f64]| v.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    let (u1, u2) = (sup(&data.w0), sup(&data.z0));
    let half = 0.5 * (u1 + u2);
    let gap = admissible_gap(p);
    let e = (p.c * p.c / (p.k * p.k * p.gamma)).powf(1.0 / (p.gamma - 1.0));
    let (m2, value) = if 2.0 * half >= gap {
        (e, f64::INFINITY)
    } else {
        let (m2, _) = from_riemann_iso(RiemannPairIso::new(-half, half), p)?;
        // Ψ(M2) = max over (0, M2] of √P′/F.
        let ratio = |rho: f64| {
            let pr = to_riemann_iso(rho, 0.0, p).unwrap();
            crate::isentropic::sound_speed(rho, p) / (0.5 * (pr.z - pr.w))
        };
        let (_, psi) = scan_max(|t: f64| ratio(m2 * t.max(1e-12)), 0.0, 1.0, 257, 1e-10);
        (m2, psi * half)
    };
    Ok(CriteriaConstants {
        k: 0.0,
        e,
        v: 1.0,
        tv_s0: 0.0,
        u1,
        u2,
        max_w: u1,
        max_z: u2,
        m2,
        assumption_23_value: value,
        assumption_23_margin: p.c - value,
        eps: data.lower_gap(),
        b: 0.0,
        n1: 0.0,
        n2: 0.0,
    })
}

type ThresholdKey = [u64; 7];

/// Reusable state for repeated non-isentropic classifications with the same
/// gas: the ψ/Ψ/K tables and threshold reports keyed by their exact inputs.
pub struct NonisoContext {
    settings: NonisoSettings,
    ppk: Option<(GasParams, PsiPsiK)>,
    cache: HashMap<ThresholdKey, ThresholdReport>,
    /// Number of threshold searches actually run.
    pub threshold_runs: usize,
}

impl NonisoContext {
    pub fn new(settings: NonisoSettings) -> Self {
        NonisoContext {
            settings,
            ppk: None,
            cache: HashMap::new(),
            threshold_runs: 0,
        }
    }

    fn constants(&mut self, data: &InitialData) -> Result<CriteriaConstants> {
        if data.law == LawKind::Isentropic {
            return barotropic_constants(data);
        }
        let fresh = self.ppk.as_ref().map_or(true, |(p, _)| *p != data.params);
        if fresh {
            let ppk = psi_psi_k(
                &data.params,
                data.params.entropy_bound,
                self.settings.search,
            )?;
            self.ppk = Some((data.params, ppk));
        }
        constants_226_with(&data.profiles(), &self.ppk.as_ref().unwrap().1)
    }

    fn thresholds(
        &mut self,
        params: &GasParams,
        bx: Box3,
        bounds: ConservedBounds,
    ) -> Result<ThresholdReport> {
        let key = [
            bx.max_w.to_bits(),
            bx.max_z.to_bits(),
            bx.b.to_bits(),
            bx.eps.to_bits(),
            bx.rho_max.to_bits(),
            bounds.theta1.to_bits(),
            bounds.theta2.to_bits(),
        ];
        if let Some(r) = self.cache.get(&key) {
            return Ok(r.clone());
        }
        let r = thresholds_n1_n2(params, bx, bounds, self.settings.thresholds)?;
        self.threshold_runs += 1;
        self.cache.insert(key, r.clone());
        Ok(r)
    }

    /// Constants, conserved-quantity bounds and, when the sound-speed
    /// assumption holds, the thresholds (with N1, N2 copied into the constants).
    pub fn thresholds_for(
        &mut self,
        data: &InitialData,
    ) -> Result<(CriteriaConstants, ConservedBounds, Option<ThresholdReport>)> {
        let mut k = self.constants(data)?;
        let bounds = data.conserved_bounds();
        if !k.assumption_23_holds() {
            return Ok((k, bounds, None));
        }
        let r = self.thresholds(&data.params, Box3::from_constants(&k), bounds)?;
        k.n1 = r.n1;
        k.n2 = r.n2;
        Ok((k, bounds, Some(r)))
    }

    /// Strong-compression classification. Data containing vacuum (ε ≤ 0) is refused.
    pub fn classify(&mut self, data: &InitialData) -> Result<CriteriaReport> {
        let eps = data.lower_gap();
        if !(eps > 0.0) {
            return Err(Error::OutsideTheory(format!(
                "initial data contains vacuum: ε = ½ inf(z0 − w0) = {eps} ≤ 0"
            )));
        }
        let params = data.params;
        let mut rep = CriteriaReport::characters(data);
        let (k, bounds, thresholds) = self.thresholds_for(data)?;
        rep.assumptions
            .push(check("inf(z0 - w0) > 0", 2.0 * eps, 0.0, false));
        rep.assumptions.push(check(
            "Psi(M2)(max|z| + max|w|)/2 < c",
            k.assumption_23_value,
            params.c,
            true,
        ));
        let rho_max = data.rho0.iter().fold(0.0f64, |m, r| m.max(*r)) * 1.05;
        let cal = Calculus::with_law(data.law.boxed(params), eps, rho_max)?;
        let (mut r0, mut q0) = (
            Vec::with_capacity(data.len()),
            Vec::with_capacity(data.len()),
        );
        for i in 0..data.len() {
            let pt = cal.point_from_primitive(data.rho0[i], data.u0[i], data.s0[i])?;
            let wt = cal.weights(&pt)?;
            let eta = data.eta0[i];
            r0.push(wt.h.exp() * (data.dx_w0[i] - pt.a * eta) - wt.l * eta * pt.n_t);
            q0.push(wt.g.exp() * (data.dx_z0[i] + pt.a * eta) - wt.m * eta * pt.n_t);
        }
        let min_r0 = argmin(&data.x, &r0);
        let min_q0 = argmin(&data.x, &q0);
        let sup = |v: &[f64]| v.iter().fold(f64::NEG_INFINITY, |m, x| m.max(*x));
        let margin = (min_r0.0 + k.n1).min(min_q0.0 + k.n2);
        let witness = if thresholds.is_none() {
            None
        } else if min_r0.0 + k.n1 < 0.0 && min_r0.0 + k.n1 <= min_q0.0 + k.n2 {
            Some(Witness {
                x: min_r0.1,
                quantity: "r".into(),
                value: min_r0.0,
                threshold: k.n1,
            })
        } else if min_q0.0 + k.n2 < 0.0 {
            Some(Witness {
                x: min_q0.1,
                quantity: "q".into(),
                value: min_q0.0,
                threshold: k.n2,
            })
        } else {
            None
        };
        let verdict = if thresholds.is_none() {
            NonisoVerdict::OutsideTheory
        } else if witness.is_some() {
            NonisoVerdict::BlowupGuaranteed
        } else {
            NonisoVerdict::Inconclusive
        };
        rep.noniso = Some(NonisoSection {
            verdict,
            constants: k,
            bounds,
            thresholds,
            informal_compression: min_r0.0 < 0.0 || min_q0.0 < 0.0,
            sup_r0: sup(&r0),
            sup_q0: sup(&q0),
            r0,
            q0,
            min_r0,
            min_q0,
            margin,
            witness,
        });
        Ok(rep)
    }
}

pub fn classify_noniso(data: &InitialData, settings: NonisoSettings) -> Result<CriteriaReport> {
    NonisoContext::new(settings).classify(data)
}

/// Result of locating the verdict flip along a one-parameter data family.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct FlipSearch {
    /// Midpoint of the final bracket.
    pub s_star: f64,
    /// (largest inconclusive s, smallest blow-up-guaranteed s).
    pub bracket: (f64, f64),
    pub iterations: usize,
    #[serde(rename = "N1")]
    pub n1: f64,
    #[serde(rename = "N2")]
    pub n2: f64,
    pub threshold_runs: usize,
}

/// Bisection in s for the flip from "inconclusive" (at `lo`) to "blow-up
/// guaranteed" (at `hi`), stopping when the bracket is below `rel_tol`·hi.
pub fn verdict_flip_bisection<F>(
    mut family: F,
    ctx: &mut NonisoContext,
    lo: f64,
    hi: f64,
    rel_tol: f64,
) -> Result<FlipSearch>
where
    F: FnMut(f64) -> Result<InitialData>,
{
    let mut verdict = |s: f64| -> Result<(NonisoVerdict, f64, f64)> {
        let rep = ctx.classify(&family(s)?)?;
        let sec = rep.noniso.unwrap();
        Ok((sec.verdict, sec.constants.n1, sec.constants.n2))
    };
    let (v_lo, ..) = verdict(lo)?;
    let (v_hi, n1, n2) = verdict(hi)?;
    if v_lo != NonisoVerdict::Inconclusive || v_hi != NonisoVerdict::BlowupGuaranteed {
        return Err(Error::validation(format!(
            "bracket [{lo}, {hi}] does not straddle the flip: {v_lo:?} / {v_hi:?}"
        )));
    }
    let (mut a, mut b) = (lo, hi);
    let mut it = 0;
    while b - a > rel_tol * b.abs() && it < 200 {
        let m = 0.5 * (a + b);
        match verdict(m)?.0 {
            NonisoVerdict::BlowupGuaranteed => b = m,
            NonisoVerdict::Inconclusive => a = m,
            NonisoVerdict::OutsideTheory => {
                return Err(Error::OutsideTheory(format!(
                    "family leaves the theory's scope at s = {m}"
                )))
            }
        }
        it += 1;
    }
    Ok(FlipSearch {
        s_star: 0.5 * (a + b),
        bracket: (a, b),
        iterations: it,
        n1,
        n2,
        threshold_runs: ctx.threshold_runs,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::initial::Profile;
    use crate::solver::Boundary;

    fn iso() -> GasParams {
        GasParams::new(2.0, 1.0, 1.0, 1.0, 0.0).unwrap()
    }

    fn grid(cells: usize, boundary: Boundary) -> Grid {
        Grid {
            x_min: 0.0,
            x_max: 4.0,
            cells,
            boundary,
        }
    }

    fn constant(v: f64) -> Profile {
        Profile::Constant { value: v }
    }

    #[test]
    fn constant_state_is_global_and_neutral() {
        let spec = InitialSpec::Primitive {
            rho: constant(0.1),
            u: constant(0.2),
            s: constant(0.0),
        };
        let d = InitialData::from_spec(
            &spec,
            &grid(32, Boundary::Periodic),
            2,
            LawKind::Isentropic,
            iso(),
        )
        .unwrap();
        let r = classify_iso(&d).unwrap();
        assert_eq!(r.iso_verdict, Some(IsoVerdict::Global));
        assert!(r
            .forward
            .iter()
            .chain(&r.backward)
            .all(|c| *c == Character::N));
        assert!(d.xi0.iter().chain(&d.zeta0).all(|v| *v == 0.0));
    }

    #[test]
    fn rarefaction_global_compression_finite() {
        let p = iso();
        let bg = to_riemann_iso(0.1, 0.0, &p).unwrap();
        let ramp = |base: f64, a: f64| Profile::TanhRamp {
            left: base - a,
            right: base + a,
            center: 2.0,
            width: 0.5,
        };
        let rare = InitialSpec::Invariants {
            w: ramp(bg.w, 0.1),
            z: ramp(bg.z, 0.1),
            s: constant(0.0),
        };
        let g = grid(64, Boundary::Outflow);
        let d = InitialData::from_spec(&rare, &g, 2, LawKind::Isentropic, p).unwrap();
        assert_eq!(
            classify_iso(&d).unwrap().iso_verdict,
            Some(IsoVerdict::Global)
        );
        let comp = InitialSpec::Invariants {
            w: ramp(bg.w, -0.1),
            z: constant(bg.z),
            s: constant(0.0),
        };
        let d = InitialData::from_spec(&comp, &g, 2, LawKind::Isentropic, p).unwrap();
        let r = classify_iso(&d).unwrap();
        assert_eq!(r.iso_verdict, Some(IsoVerdict::FiniteTime));
        let w = r.predicted_window.unwrap();
        assert_eq!(w.family, 1);
        assert!(w.t_lower <= w.t_riccati && w.t_riccati <= w.t_upper);
        assert!((w.x_star - 2.0).abs() < 0.1);
    }

    #[test]
    fn sonic_data_is_outside_theory() {
        let p = iso();
        let gap = admissible_gap(&p);
        let spec = InitialSpec::Invariants {
            w: Profile::Sine {
                base: -0.46 * gap,
                amplitude: 0.05 * gap,
                wavelength: 4.0,
                phase: 0.0,
            },
            z: Profile::Sine {
                base: 0.46 * gap,
                amplitude: 0.05 * gap,
                wavelength: 4.0,
                phase: 0.0,
            },
            s: constant(0.0),
        };
        let d = InitialData::from_spec(
            &spec,
            &grid(32, Boundary::Periodic),
            2,
            LawKind::Isentropic,
            p,
        )
        .unwrap();
        let r = classify_iso(&d).unwrap();
        assert_eq!(r.iso_verdict, Some(IsoVerdict::OutsideTheory));
        assert!(r.assumptions[1].margin < 0.0);
    }

    #[test]
    fn noniso_refuses_vacuum_and_zero_thresholds_for_constant_entropy() {
        let p = iso();
        let spec = InitialSpec::Primitive {
            rho: Profile::Sine {
                base: 0.1,
                amplitude: 0.1,
                wavelength: 4.0,
                phase: 0.0,
            },
            u: constant(0.0),
            s: constant(0.0),
        };
        let d = InitialData::from_spec(
            &spec,
            &grid(32, Boundary::Periodic),
            2,
            LawKind::Isentropic,
            p,
        );
        // ρ touches zero at the sine minimum only up to sampling; force vacuum explicitly.
        let mut d = d.unwrap();
        d.w0[3] = d.z0[3];
        assert!(matches!(
            classify_noniso(&d, NonisoSettings::default()),
            Err(Error::OutsideTheory(_))
        ));

        let spec = InitialSpec::Primitive {
            rho: Profile::Sine {
                base: 0.1,
                amplitude: 0.03,
                wavelength: 4.0,
                phase: 0.0,
            },
            u: constant(0.0),
            s: constant(0.0),
        };
        let d = InitialData::from_spec(
            &spec,
            &grid(32, Boundary::Periodic),
            2,
            LawKind::Isentropic,
            p,
        )
        .unwrap();
        let iso_rep = classify_iso(&d).unwrap();
        let non = classify_noniso(&d, NonisoSettings::default()).unwrap();
        let sec = non.noniso.as_ref().unwrap();
        assert_eq!((sec.constants.n1, sec.constants.n2), (0.0, 0.0));
        assert_eq!(sec.verdict, NonisoVerdict::BlowupGuaranteed);
        assert_eq!(iso_rep.iso_verdict, Some(IsoVerdict::FiniteTime));
        for i in 0..d.len() {
            assert_eq!(sec.r0[i] < 0.0, d.xi0[i] < 0.0);
            assert_eq!(sec.q0[i] < 0.0, d.zeta0[i] < 0.0);
        }
    }
}
