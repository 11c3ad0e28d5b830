//! Characteristic tracing through a stored run history.
//!
//! Family numbering follows the law: for the barotropic law 1 and 2 are the
//! slow and fast acoustic families (w and z are their invariants); for the
//! polytropic gas 1 is the particle path λ1 = u, 2 the fast and 3 the slow
//! acoustic family.

use super::{CharSample, CharTrace, Primitive, RunHistory};
use crate::eos::PressureLaw;
use crate::error::{Error, Result};
use crate::isentropic::{to_riemann_iso, weights_h1_h2};
use crate::nonisentropic::calculus::Calculus;
use crate::nonisentropic::{df_ds_law, eigenvalues_from_sound, integrands, to_riemann_law};
use crate::numerics::quad::QuadSettings;
use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceSettings {
    /// RK2 steps per stored snapshot interval.
    pub substeps: usize,
    /// Stop time (defaults to the end of the history).
    pub t_end: Option<f64>,
    /// Compute w and z along the path (a quadrature per sample for the polytropic gas).
    pub invariants: bool,
}

impl Default for TraceSettings {
    fn default() -> Self {
        TraceSettings {
            substeps: 2,
            t_end: None,
            invariants: true,
        }
    }
}

/// Primitive state and its first derivatives (and ∂xxS) at a point.
#[derive(Clone, Copy, Debug, Default)]
pub(crate) struct PointField {
    pub prim: Primitive,
    pub d_rho: f64,
    pub d_u: f64,
    pub d_s: f64,
    pub dd_s: f64,
}

impl PointField {
    fn lerp(a: &PointField, b: &PointField, th: f64) -> PointField {
        let l = |x: f64, y: f64| x + th * (y - x);
        PointField {
            prim: Primitive::new(
                l(a.prim.rho, b.prim.rho),
                l(a.prim.u, b.prim.u),
                l(a.prim.s, b.prim.s),
            ),
            d_rho: l(a.d_rho, b.d_rho),
            d_u: l(a.d_u, b.d_u),
            d_s: l(a.d_s, b.d_s),
            dd_s: l(a.dd_s, b.dd_s),
        }
    }
}

/// Cell field with centered differences.
pub(crate) fn cell_field(h: &RunHistory, k: usize, i: isize) -> PointField {
    let g = &h.grid;
    let n = g.cells as isize;
    let p = &h.snapshots[k].prim;
    let periodic = g.boundary == super::Boundary::Periodic;
    let idx = |j: isize| -> usize {
        if periodic {
            j.rem_euclid(n) as usize
        } else {
            j.clamp(0, n - 1) as usize
        }
    };
    let i = idx(i) as isize;
    let dx = g.dx();
    let (a, b, c) = (p[idx(i - 1)], p[i as usize], p[idx(i + 1)]);
    // One-sided at outflow edges.
    let (h1, h2) = if periodic || (i > 0 && i < n - 1) {
        (2.0 * dx, dx * dx)
    } else {
        (dx, f64::INFINITY)
    };
    PointField {
        prim: b,
        d_rho: (c.rho - a.rho) / h1,
        d_u: (c.u - a.u) / h1,
        d_s: (c.s - a.s) / h1,
        dd_s: if h2.is_finite() {
            (c.s - 2.0 * b.s + a.s) / h2
        } else {
            0.0
        },
    }
}

/// Bilinear interpolation in (t, x). None outside the stored window.
pub(crate) fn field_at(h: &RunHistory, t: f64, x: f64) -> Option<PointField> {
    let snaps = &h.snapshots;
    if snaps.is_empty() || t < snaps[0].t - 1e-12 || t > snaps.last()?.t + 1e-12 {
        return None;
    }
    let g = &h.grid;
    let len = g.x_max - g.x_min;
    let x = match g.boundary {
        super::Boundary::Periodic => g.x_min + (x - g.x_min).rem_euclid(len),
        super::Boundary::Outflow => {
            if x < g.x_min || x > g.x_max {
                return None;
            }
            x
        }
    };
    let dx = g.dx();
    let pos = (x - g.x_min) / dx - 0.5;
    let i0 = pos.floor();
    let th_x = pos - i0;
    let i0 = i0 as isize;
    // Snapshots are stored at a uniform cadence apart from the last one.
    let k = match snaps.binary_search_by(|s| s.t.total_cmp(&t)) {
        Ok(k) => k.min(snaps.len().saturating_sub(2)),
        Err(k) => k.saturating_sub(1).min(snaps.len().saturating_sub(2)),
    };
    let at_time = |k: usize| {
        let a = cell_field(h, k, i0);
        let b = cell_field(h, k, i0 + 1);
        // Clamp at outflow edges where i0 + 1 would repeat a cell.
        PointField::lerp(&a, &b, th_x)
    };
    if snaps.len() == 1 {
        return Some(at_time(0));
    }
    let (ta, tb) = (snaps[k].t, snaps[k + 1].t);
    let th_t = ((t - ta) / (tb - ta)).clamp(0.0, 1.0);
    Some(PointField::lerp(&at_time(k), &at_time(k + 1), th_t))
}

fn family_speed(law: &dyn PressureLaw, family: u8, f: &PointField) -> Result<f64> {
    let c = law.params().c;
    let st = law.state(f.prim.rho.max(0.0), f.prim.s)?;
    let (l1, l2, l3) = eigenvalues_from_sound(f.prim.u, st.p_rho.max(0.0).sqrt(), c);
    match (law.is_barotropic(), family) {
        (true, 1) => Ok(l3),
        (true, 2) => Ok(l2),
        (false, 1) => Ok(l1),
        (false, 2) => Ok(l2),
        (false, 3) => Ok(l3),
        _ => Err(Error::validation(format!(
            "family {family} is not defined for this law (barotropic: 1, 2; polytropic: 1, 2, 3)"
        ))),
    }
}

/// Per-cell samples of snapshot `k`, invariants included.
pub fn snapshot_samples(
    history: &RunHistory,
    k: usize,
    law: &dyn PressureLaw,
) -> Result<Vec<CharSample>> {
    let snap = &history.snapshots[k];
    (0..history.grid.cells)
        .map(|i| {
            sample_at(
                law,
                snap.t,
                snap.xs[i],
                &cell_field(history, k, i as isize),
                true,
            )
        })
        .collect()
}

/// Along-path quantities at one point.
pub(crate) fn sample_at(
    law: &dyn PressureLaw,
    t: f64,
    x: f64,
    f: &PointField,
    invariants: bool,
) -> Result<CharSample> {
    let params = law.params();
    let c = params.c;
    let Primitive { rho, u, s } = f.prim;
    let st = law.state(rho, s)?;
    let c2 = c * c;
    let ints = integrands(&st, c);
    let f_s = if law.is_barotropic() || f.d_s == 0.0 {
        0.0
    } else {
        df_ds_law(law, rho, s, QuadSettings::default())?
    };
    let du = c2 / (c2 - u * u) * f.d_u;
    let df = ints.i_f * f.d_rho + f_s * f.d_s;
    let (dx_w, dx_z) = (du - df, du + df);
    let (mut w, mut z) = (f64::NAN, f64::NAN);
    let (mut xi, mut zeta) = (f64::NAN, f64::NAN);
    if law.is_barotropic() {
        let pair = to_riemann_iso(rho, u, params)?;
        w = pair.w;
        z = pair.z;
        if let Ok((h1, h2)) = weights_h1_h2(pair, params) {
            xi = h1.exp() * dx_w;
            zeta = h2.exp() * dx_z;
        }
    } else if invariants {
        let tr = to_riemann_law(law, rho, u, s)?;
        w = tr.w;
        z = tr.z;
    }
    let root = (c2 - u * u).sqrt();
    let n_t = c * st.n / root;
    let dn_t = c / root * (st.n_rho * f.d_rho + st.n_s * f.d_s)
        + c * st.n * u / (root * root * root) * f.d_u;
    let theta1 = f.d_s / n_t;
    let theta2 = (f.dd_s - theta1 * dn_t) / (n_t * n_t);
    Ok(CharSample {
        t,
        x,
        rho,
        u,
        s,
        w,
        z,
        dx_w,
        dx_z,
        eta: f.d_s,
        xi,
        zeta,
        n_t,
        theta1,
        theta2,
    })
}

/// Integrate dx/dt = λ_family with Heun's method through the interpolated field.
pub fn trace_characteristic(
    history: &RunHistory,
    family: u8,
    x0: f64,
    law: &dyn PressureLaw,
    settings: TraceSettings,
) -> Result<CharTrace> {
    let snaps = &history.snapshots;
    if snaps.len() < 2 {
        return Err(Error::validation(
            "tracing needs at least two stored snapshots",
        ));
    }
    let t_stop = settings
        .t_end
        .unwrap_or(history.t_last())
        .min(history.t_last());
    let f0 = field_at(history, snaps[0].t, x0)
        .ok_or_else(|| Error::validation(format!("seed x0 = {x0} lies outside the domain")))?;
    family_speed(law, family, &f0)?;
    let mut samples = vec![sample_at(law, snaps[0].t, x0, &f0, settings.invariants)?];
    let mut truncated = false;
    let (mut t, mut x) = (snaps[0].t, x0);
    'outer: for k in 0..snaps.len() - 1 {
        let (ta, tb) = (snaps[k].t, snaps[k + 1].t);
        if ta >= t_stop {
            break;
        }
        let tb = tb.min(t_stop);
        let m = settings.substeps.max(1);
        let h = (tb - ta) / m as f64;
        for j in 0..m {
            let t_next = if j + 1 == m {
                tb
            } else {
                ta + (j + 1) as f64 * h
            };
            let dt = t_next - t;
            let Some(fa) = field_at(history, t, x) else {
                truncated = true;
                break 'outer;
            };
            let va = family_speed(law, family, &fa)?;
            let Some(fb) = field_at(history, t_next, x + dt * va) else {
                truncated = true;
                break 'outer;
            };
            let vb = family_speed(law, family, &fb)?;
            let x_next = x + 0.5 * dt * (va + vb);
            let Some(fe) = field_at(history, t_next, x_next) else {
                truncated = true;
                break 'outer;
            };
            t = t_next;
            x = x_next;
            if j + 1 == m {
                match sample_at(law, t, x, &fe, settings.invariants) {
                    Ok(s) => samples.push(s),
                    Err(_) => {
                        truncated = true;
                        break 'outer;
                    }
                }
            }
        }
    }
    if t < t_stop - 1e-12 {
        truncated = true;
    }
    Ok(CharTrace {
        family,
        samples,
        truncated,
    })
}

pub fn trace_many(
    history: &RunHistory,
    family: u8,
    seeds: &[f64],
    law: &dyn PressureLaw,
    settings: TraceSettings,
) -> Result<Vec<CharTrace>> {
    seeds
        .iter()
        .map(|&x0| trace_characteristic(history, family, x0, law, settings))
        .collect()
}

/// (r, q) = (e^h(∂xw − aη) − Lηñ, e^g(∂xz + aη) − Mηñ) at each trace sample.
pub fn weighted_gradients_non(trace: &CharTrace, cal: &Calculus) -> Result<Vec<(f64, f64)>> {
    trace
        .samples
        .iter()
        .map(|s| {
            let pt = cal.point_from_primitive(s.rho, s.u, s.s)?;
            let wt = cal.weights(&pt)?;
            let r = wt.h.exp() * (s.dx_w - pt.a * s.eta) - wt.l * s.eta * pt.n_t;
            let q = wt.g.exp() * (s.dx_z + pt.a * s.eta) - wt.m * s.eta * pt.n_t;
            Ok((r, q))
        })
        .collect()
}
