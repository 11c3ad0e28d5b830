//! Fixed-entropy profile tables.
//!
//! Every weight of the 3×3 calculus is an integral in ρ at fixed S. The
//! integrands are analytic in τ = m^{1/p} (m the chart variable of the law,
//! p = 2/(γ−1)), so a slice stores them on geometric Chebyshev panels in τ
//! together with spectral antiderivatives. Cumulative integrals, F inversion
//! and node-based quadratures of w- or z-dependent integrands (L, M) are then
//! cheap.

use super::{integrands, Integrands};
use crate::eos::{PressureLaw, ThermoState};
use crate::error::{Error, Result};
use crate::numerics::cheb;

/// Chebyshev points per panel.
pub const PANEL_NODES: usize = 16;
/// Ratio of consecutive geometric panel ends.
const PANEL_RATIO: f64 = 1.6;
/// First panel [0, τ₀] with τ₀ = TAU_FLOOR·τ_max.
const TAU_FLOOR: f64 = 1e-6;

/// Cumulative channels.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Channel {
    /// F(ρ, S)
    F = 0,
    /// ∂SF
    FS = 1,
    /// ∫₀^ρ (jh − 1/(2σ)) dσ
    Rh = 2,
    /// ∫₀^ρ (jg − 1/(2σ)) dσ
    Rg = 3,
    /// ∫₀^ρ ∂S jh dσ
    JhS = 4,
    /// ∫₀^ρ ∂S jg dσ
    JgS = 5,
}

const CHANNELS: usize = 6;

fn channel_value(i: &Integrands, ch: usize) -> f64 {
    match ch {
        0 => i.i_f,
        1 => i.i_fs,
        2 => i.jh_reg,
        3 => i.jg_reg,
        4 => i.jh_s,
        _ => i.jg_s,
    }
}

/// One Chebyshev node of the table.
#[derive(Clone, Copy, Debug)]
pub struct Node {
    pub tau: f64,
    pub state: ThermoState,
    pub ints: Integrands,
    /// dρ/dτ at the node.
    pub drho_dtau: f64,
    /// Cumulative channel values at the node.
    pub cum: [f64; CHANNELS],
    /// √∂ρP
    pub sound: f64,
    /// (c−√Λ)/(c+√Λ)
    pub kappa: f64,
    /// w-independent factor of the L integrand:
    /// 2√(c√Λ)/(c+√Λ)·e^{−J_h}·n·∂ρa·dρ/dτ. Zero when no lower gap is set.
    pub l_factor: f64,
    /// Same for M with J_g.
    pub m_factor: f64,
}

#[derive(Clone, Debug)]
struct Panel {
    lo: f64,
    hi: f64,
    /// Integrand coefficients per channel (in τ).
    coef: Vec<Vec<f64>>,
    /// Antiderivative coefficients per channel, zero at `lo`.
    anti: Vec<Vec<f64>>,
    /// Cumulative channel values at `lo`.
    start: [f64; CHANNELS],
}

impl Panel {
    fn mid(&self) -> f64 {
        0.5 * (self.lo + self.hi)
    }

    fn half(&self) -> f64 {
        0.5 * (self.hi - self.lo)
    }

    fn local(&self, tau: f64) -> f64 {
        ((tau - self.mid()) / self.half()).clamp(-1.0, 1.0)
    }
}

/// Data at the lower-gap density ρε = F⁻¹(ε, S).
#[derive(Clone, Copy, Debug)]
pub struct EpsData {
    pub rho: f64,
    pub rh: f64,
    pub rg: f64,
    pub jh: f64,
    pub jg: f64,
    /// F_S/I at ρε, i.e. −∂Ŝρ on the level set.
    pub fs_over_i: f64,
    pub jh_s_cum: f64,
    pub jg_s_cum: f64,
}

#[derive(Clone, Debug)]
pub struct EntropySlice {
    pub s: f64,
    pub c: f64,
    p: f64,
    panels: Vec<Panel>,
    nodes: Vec<Node>,
    cheb_x: Vec<f64>,
    fejer: Vec<f64>,
    pub eps: EpsData,
}

impl EntropySlice {
    /// Tabulate the profile at entropy `s` for densities up to `rho_max`,
    /// with lower gap ε (F(ρε, s) = ε).
    pub fn build(law: &dyn PressureLaw, s: f64, rho_max: f64, eps: f64) -> Result<Self> {
        let params = law.params();
        let p = params.chart_exponent();
        let c = params.c;
        let tau_max = law.chart_of(rho_max, s)?.powf(1.0 / p) * (1.0 + 1e-9);
        if !(tau_max > 0.0) || !tau_max.is_finite() {
            return Err(Error::domain(format!(
                "cannot tabulate up to ρ = {rho_max}"
            )));
        }
        let mut ends = vec![0.0];
        let mut t = tau_max * TAU_FLOOR;
        while t < tau_max / PANEL_RATIO {
            ends.push(t);
            t *= PANEL_RATIO;
        }
        ends.push(tau_max);
        let cheb_x = cheb::nodes(PANEL_NODES);
        let fejer = cheb::fejer_weights(PANEL_NODES);
        let mut panels = Vec::with_capacity(ends.len() - 1);
        let mut nodes = Vec::with_capacity((ends.len() - 1) * PANEL_NODES);
        let mut start = [0.0; CHANNELS];
        for win in ends.windows(2) {
            let (lo, hi) = (win[0], win[1]);
            let (mid, half) = (0.5 * (lo + hi), 0.5 * (hi - lo));
            let mut panel_nodes = Vec::with_capacity(PANEL_NODES);
            for &x in &cheb_x {
                let tau = mid + half * x;
                let m = tau.powf(p);
                let (state, drho_dm) = law.state_at_chart(m, s);
                let drho_dtau = drho_dm * p * m / tau;
                let sound = state.p_rho.sqrt();
                panel_nodes.push(Node {
                    tau,
                    state,
                    ints: integrands(&state, c),
                    drho_dtau,
                    cum: [0.0; CHANNELS],
                    sound,
                    kappa: (c - sound) / (c + sound),
                    l_factor: 0.0,
                    m_factor: 0.0,
                });
            }
            let mut coef = Vec::with_capacity(CHANNELS);
            let mut anti = Vec::with_capacity(CHANNELS);
            for ch in 0..CHANNELS {
                let vals: Vec<f64> = panel_nodes
                    .iter()
                    .map(|nd| channel_value(&nd.ints, ch) * nd.drho_dtau)
                    .collect();
                let a = cheb::coefficients(&vals);
                anti.push(cheb::antiderivative(&a, half));
                coef.push(a);
            }
            for (nd, &x) in panel_nodes.iter_mut().zip(&cheb_x) {
                for ch in 0..CHANNELS {
                    nd.cum[ch] = start[ch] + cheb::clenshaw(&anti[ch], x);
                }
            }
            let panel = Panel {
                lo,
                hi,
                coef,
                anti,
                start,
            };
            for ch in 0..CHANNELS {
                start[ch] += cheb::clenshaw(&panel.anti[ch], 1.0);
            }
            panels.push(panel);
            nodes.extend(panel_nodes);
        }
        if nodes.iter().any(|nd| !nd.cum.iter().all(|v| v.is_finite())) {
            return Err(Error::NonConvergence {
                method: "profile tabulation",
                iterations: 0,
                detail: format!("non-finite profile integral at S = {s}"),
            });
        }
        let mut slice = EntropySlice {
            s,
            c,
            p,
            panels,
            nodes,
            cheb_x,
            fejer,
            eps: EpsData {
                rho: 0.0,
                rh: 0.0,
                rg: 0.0,
                jh: 0.0,
                jg: 0.0,
                fs_over_i: 0.0,
                jh_s_cum: 0.0,
                jg_s_cum: 0.0,
            },
        };
        if eps > 0.0 {
            let tau_e = slice.invert_f(eps)?;
            let (st, _) = law.state_at_chart(tau_e.powf(p), s);
            let ints = integrands(&st, c);
            slice.eps = EpsData {
                rho: st.rho,
                rh: slice.value(Channel::Rh, tau_e),
                rg: slice.value(Channel::Rg, tau_e),
                jh: ints.jh,
                jg: ints.jg,
                fs_over_i: slice.value(Channel::FS, tau_e) / ints.i_f,
                jh_s_cum: slice.value(Channel::JhS, tau_e),
                jg_s_cum: slice.value(Channel::JgS, tau_e),
            };
            let e = slice.eps;
            for nd in slice.nodes.iter_mut() {
                let st = &nd.state;
                if !(st.rho > 0.0) {
                    continue;
                }
                let base = 0.5 * (4.0 * c * nd.sound).ln()
                    - (c + nd.sound).ln()
                    - 0.5 * (st.rho / e.rho).ln();
                let scale = st.n * nd.ints.da_drho * nd.drho_dtau;
                nd.l_factor = (base - nd.cum[Channel::Rh as usize] + e.rh).exp() * scale;
                nd.m_factor = (base - nd.cum[Channel::Rg as usize] + e.rg).exp() * scale;
            }
        }
        Ok(slice)
    }

    pub fn chart_exponent(&self) -> f64 {
        self.p
    }

    pub fn tau_max(&self) -> f64 {
        self.panels.last().map(|p| p.hi).unwrap_or(0.0)
    }

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    fn panel_index(&self, tau: f64) -> usize {
        let idx = self.panels.partition_point(|p| p.hi < tau);
        idx.min(self.panels.len() - 1)
    }

    /// Cumulative channel value at τ.
    pub fn value(&self, ch: Channel, tau: f64) -> f64 {
        let pn = &self.panels[self.panel_index(tau)];
        let k = ch as usize;
        pn.start[k] + cheb::clenshaw(&pn.anti[k], pn.local(tau))
    }

    /// Channel integrand (already multiplied by dρ/dτ) at τ.
    pub fn integrand(&self, ch: Channel, tau: f64) -> f64 {
        let pn = &self.panels[self.panel_index(tau)];
        cheb::clenshaw(&pn.coef[ch as usize], pn.local(tau))
    }

    pub fn f_max(&self) -> f64 {
        let last = self.panels.last().unwrap();
        last.start[0] + cheb::clenshaw(&last.anti[0], 1.0)
    }

    /// τ with F(τ) = target.
    pub fn invert_f(&self, target: f64) -> Result<f64> {
        if !(target >= 0.0) {
            return Err(Error::domain(format!(
                "half gap must be non-negative, got {target}"
            )));
        }
        if target == 0.0 {
            return Ok(0.0);
        }
        if target > self.f_max() * (1.0 + 1e-13) {
            return Err(Error::domain(format!(
                "half gap {target} exceeds the tabulated range {} at S = {}",
                self.f_max(),
                self.s
            )));
        }
        let k = self
            .panels
            .partition_point(|p| p.start[0] + cheb::clenshaw(&p.anti[0], 1.0) < target)
            .min(self.panels.len() - 1);
        let pn = &self.panels[k];
        let goal = target - pn.start[0];
        let (mut lo, mut hi) = (-1.0, 1.0);
        let mut x = 0.0;
        for _ in 0..100 {
            let r = cheb::clenshaw(&pn.anti[0], x) - goal;
            if r < 0.0 {
                lo = x;
            } else {
                hi = x;
            }
            let d = cheb::clenshaw(&pn.coef[0], x) * pn.half();
            let mut next = x - r / d;
            if !(next > lo && next < hi) {
                next = 0.5 * (lo + hi);
            }
            if (next - x).abs() < 1e-16 || hi - lo < 1e-16 {
                x = next;
                break;
            }
            x = next;
        }
        Ok(pn.mid() + pn.half() * x)
    }

    /// ∫₀^{τ_end} f(node) dτ where `f` already carries dρ/dτ.
    ///
    /// Full panels use the Fejér rule; the panel holding τ_end is integrated
    /// through its Chebyshev interpolant.
    pub fn integrate<F: FnMut(&Node) -> f64>(&self, tau_end: f64, mut f: F) -> f64 {
        self.integrate_pair(tau_end, |nd| (f(nd), 0.0)).0
    }

    /// Two integrals sharing one pass over the nodes.
    pub fn integrate_pair<F: FnMut(&Node) -> (f64, f64)>(
        &self,
        tau_end: f64,
        mut f: F,
    ) -> (f64, f64) {
        if tau_end <= 0.0 {
            return (0.0, 0.0);
        }
        let last = self.panel_index(tau_end);
        let (mut t0, mut t1) = (0.0, 0.0);
        for (k, pn) in self.panels.iter().enumerate().take(last) {
            let nodes = &self.nodes[k * PANEL_NODES..(k + 1) * PANEL_NODES];
            let (mut s0, mut s1) = (0.0, 0.0);
            for (nd, w) in nodes.iter().zip(&self.fejer) {
                let (a, b) = f(nd);
                s0 += w * a;
                s1 += w * b;
            }
            t0 += s0 * pn.half();
            t1 += s1 * pn.half();
        }
        let pn = &self.panels[last];
        let mut v0 = [0.0; PANEL_NODES];
        let mut v1 = [0.0; PANEL_NODES];
        for (j, nd) in self.nodes[last * PANEL_NODES..(last + 1) * PANEL_NODES]
            .iter()
            .enumerate()
        {
            (v0[j], v1[j]) = f(nd);
        }
        let x = pn.local(tau_end);
        let a0 = cheb::antiderivative(&cheb::coefficients(&v0), pn.half());
        let a1 = cheb::antiderivative(&cheb::coefficients(&v1), pn.half());
        (t0 + cheb::clenshaw(&a0, x), t1 + cheb::clenshaw(&a1, x))
    }

    /// Node positions on [−1, 1] used by every panel.
    pub fn reference_nodes(&self) -> &[f64] {
        &self.cheb_x
    }
}
