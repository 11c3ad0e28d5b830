//! Gradient time series and the two-grid blow-up declaration.

use super::trace::cell_field;
use super::RunHistory;
use crate::eos::PressureLaw;
use crate::error::{Error, Result};
use crate::nonisentropic::{df_ds_law, integrands};
use crate::numerics::quad::QuadSettings;
use serde::{Deserialize, Serialize};

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct GradientSeries {
    pub times: Vec<f64>,
    pub max_dx_w: Vec<f64>,
    pub max_dx_z: Vec<f64>,
    /// Location of max(|∂xw|, |∂xz|).
    pub argmax_x: Vec<f64>,
    pub min_rho: Vec<f64>,
}

impl GradientSeries {
    /// max(|∂xw|, |∂xz|) at each time.
    pub fn combined(&self) -> Vec<f64> {
        self.max_dx_w
            .iter()
            .zip(&self.max_dx_z)
            .map(|(a, b)| a.max(*b))
            .collect()
    }

    /// Linear interpolation of the combined series.
    pub fn combined_at(&self, t: f64) -> Option<f64> {
        let c = self.combined();
        let ts = &self.times;
        if ts.is_empty() || t < ts[0] - 1e-12 || t > *ts.last()? + 1e-12 {
            return None;
        }
        let k = ts
            .partition_point(|&s| s <= t)
            .clamp(1, ts.len().max(2) - 1);
        if ts.len() == 1 {
            return Some(c[0]);
        }
        let (ta, tb) = (ts[k - 1], ts[k]);
        let th = if tb > ta {
            ((t - ta) / (tb - ta)).clamp(0.0, 1.0)
        } else {
            0.0
        };
        Some(c[k - 1] + th * (c[k] - c[k - 1]))
    }
}

/// max|∂xw|, max|∂xz| and min ρ at every stored snapshot. Gradients are
/// centered differences of (ρ, u, S) mapped through the chain rule.
pub fn gradient_series(history: &RunHistory, law: &dyn PressureLaw) -> Result<GradientSeries> {
    let c = law.params().c;
    let c2 = c * c;
    let xs = history.grid.centers();
    let mut out = GradientSeries::default();
    for (k, snap) in history.snapshots.iter().enumerate() {
        let (mut gw, mut gz, mut arg, mut rmin) = (0.0f64, 0.0f64, xs[0], f64::INFINITY);
        for i in 0..history.grid.cells {
            let f = cell_field(history, k, i as isize);
            let p = f.prim;
            let st = law.state(p.rho, p.s)?;
            let f_s = if law.is_barotropic() || f.d_s == 0.0 {
                0.0
            } else {
                df_ds_law(law, p.rho, p.s, QuadSettings::default())?
            };
            let du = c2 / (c2 - p.u * p.u) * f.d_u;
            let df = integrands(&st, c).i_f * f.d_rho + f_s * f.d_s;
            let (aw, az) = ((du - df).abs(), (du + df).abs());
            if aw.max(az) > gw.max(gz) {
                arg = xs[i];
            }
            gw = gw.max(aw);
            gz = gz.max(az);
            rmin = rmin.min(p.rho);
        }
        out.times.push(snap.t);
        out.max_dx_w.push(gw);
        out.max_dx_z.push(gz);
        out.argmax_x.push(arg);
        out.min_rho.push(rmin);
    }
    Ok(out)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BlowupSettings {
    /// Required growth of the fine-grid max gradient over its initial value.
    pub growth_factor: f64,
    /// Accepted fine/coarse ratio of the max gradient at matching times.
    pub ratio_band: (f64, f64),
}

impl Default for BlowupSettings {
    fn default() -> Self {
        BlowupSettings {
            growth_factor: 100.0,
            ratio_band: (1.6, 2.4),
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct BlowupObservation {
    pub declared: bool,
    /// First time both conditions hold on the fine grid.
    pub t_blowup: Option<f64>,
    pub x_blowup: Option<f64>,
    /// (last stored time before declaration, declaration time).
    pub window: Option<(f64, f64)>,
    pub growth_at_declaration: f64,
    pub refinement_ratio: f64,
    /// First time the growth condition alone holds.
    pub t_growth: Option<f64>,
    pub max_growth: f64,
    pub fine: GradientSeries,
    pub coarse: GradientSeries,
}

/// Declare numerical blow-up when the fine-grid gradient has grown by
/// `growth_factor` and the fine/coarse ratio at the same time lies in
/// `ratio_band` (a resolution-limited front sharpens in proportion to 1/Δx).
pub fn monitor_blowup(
    coarse: &GradientSeries,
    fine: &GradientSeries,
    settings: BlowupSettings,
) -> Result<BlowupObservation> {
    if fine.times.is_empty() || coarse.times.is_empty() {
        return Err(Error::validation(
            "blow-up monitor needs non-empty gradient series",
        ));
    }
    let g = fine.combined();
    let g0 = g[0];
    let mut obs = BlowupObservation {
        fine: fine.clone(),
        coarse: coarse.clone(),
        ..Default::default()
    };
    if !(g0 > 0.0) {
        return Ok(obs);
    }
    for (k, (&t, &gk)) in fine.times.iter().zip(&g).enumerate() {
        let growth = gk / g0;
        obs.max_growth = obs.max_growth.max(growth);
        if growth < settings.growth_factor {
            continue;
        }
        obs.t_growth.get_or_insert(t);
        let Some(gc) = coarse.combined_at(t) else {
            continue;
        };
        let ratio = gk / gc;
        if ratio >= settings.ratio_band.0 && ratio <= settings.ratio_band.1 {
            obs.declared = true;
            obs.t_blowup = Some(t);
            obs.x_blowup = Some(fine.argmax_x[k]);
            obs.window = Some((if k > 0 { fine.times[k - 1] } else { t }, t));
            obs.growth_at_declaration = growth;
            obs.refinement_ratio = ratio;
            break;
        }
    }
    Ok(obs)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn series(ts: &[f64], g: &[f64]) -> GradientSeries {
        GradientSeries {
            times: ts.to_vec(),
            max_dx_w: g.to_vec(),
            max_dx_z: vec![0.0; g.len()],
            argmax_x: vec![0.5; g.len()],
            min_rho: vec![1.0; g.len()],
        }
    }

    #[test]
    fn declaration_needs_growth_and_doubling() {
        let ts = [0.0, 1.0, 2.0, 3.0];
        let fine = series(&ts, &[1.0, 50.0, 150.0, 400.0]);
        let coarse = series(&ts, &[1.0, 45.0, 120.0, 200.0]);
        let o = monitor_blowup(&coarse, &fine, BlowupSettings::default()).unwrap();
        assert!(o.declared);
        assert_eq!(o.t_growth, Some(2.0));
        assert_eq!(o.t_blowup, Some(3.0));
        assert_eq!(o.window, Some((2.0, 3.0)));
        let flat = series(&ts, &[1.0, 1.0, 1.0, 1.0]);
        assert!(
            !monitor_blowup(&flat, &flat, BlowupSettings::default())
                .unwrap()
                .declared
        );
    }
}
