//! HLL fluxes, MUSCL-minmod reconstruction in (chart, u, S), SSP-RK2 in time.

use super::{cons_to_prim, flux_state, prim_to_cons, ConservedState, FieldSnapshot, Primitive};
use crate::eos::PressureLaw;
use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};
use std::sync::Arc;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Boundary {
    #[default]
    Periodic,
    /// Zero-gradient extrapolation.
    Outflow,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Grid {
    pub x_min: f64,
    pub x_max: f64,
    pub cells: usize,
    #[serde(default)]
    pub boundary: Boundary,
}

impl Grid {
    pub fn validate(&self) -> Result<()> {
        if !(self.x_max > self.x_min) || !self.x_min.is_finite() || !self.x_max.is_finite() {
            return Err(Error::validation(format!(
                "grid needs x_min < x_max, got [{}, {}]",
                self.x_min, self.x_max
            )));
        }
        if self.cells < 8 {
            return Err(Error::validation(format!(
                "grid needs at least 8 cells, got {}",
                self.cells
            )));
        }
        Ok(())
    }

    pub fn dx(&self) -> f64 {
        (self.x_max - self.x_min) / self.cells as f64
    }

    pub fn centers(&self) -> Vec<f64> {
        let dx = self.dx();
        (0..self.cells)
            .map(|i| self.x_min + (i as f64 + 0.5) * dx)
            .collect()
    }

    pub fn refined(&self) -> Grid {
        Grid {
            cells: 2 * self.cells,
            ..*self
        }
    }

    /// Index of a ghost-extended array position (may be out of range).
    fn wrap(&self, i: isize) -> usize {
        let n = self.cells as isize;
        match self.boundary {
            Boundary::Periodic => i.rem_euclid(n) as usize,
            Boundary::Outflow => i.clamp(0, n - 1) as usize,
        }
    }
}

fn minmod(a: f64, b: f64) -> f64 {
    if a * b <= 0.0 {
        0.0
    } else if a.abs() < b.abs() {
        a
    } else {
        b
    }
}

/// Solver state: conserved variables, recovered primitives and charts.
pub struct Solver {
    law: Arc<dyn PressureLaw>,
    pub grid: Grid,
    pub cfl: f64,
    pub t: f64,
    cons: Vec<ConservedState>,
    prim: Vec<Primitive>,
    chart: Vec<f64>,
    pub steps: usize,
}

impl Solver {
    pub fn new(
        law: Arc<dyn PressureLaw>,
        grid: Grid,
        cfl: f64,
        initial: &[Primitive],
    ) -> Result<Self> {
        grid.validate()?;
        if !(cfl > 0.0 && cfl < 1.0) {
            return Err(Error::validation(format!(
                "cfl must lie in (0, 1), got {cfl}"
            )));
        }
        if initial.len() != grid.cells {
            return Err(Error::validation(format!(
                "initial data has {} cells, grid has {}",
                initial.len(),
                grid.cells
            )));
        }
        let mut cons = Vec::with_capacity(grid.cells);
        let mut chart = Vec::with_capacity(grid.cells);
        for (i, p) in initial.iter().enumerate() {
            let c = prim_to_cons(p, law.as_ref()).map_err(|e| Error::Recovery {
                cell: i,
                t: 0.0,
                detail: e.to_string(),
            })?;
            cons.push(c);
            chart.push(law.chart_of(p.rho, p.s)?);
        }
        Ok(Solver {
            law,
            grid,
            cfl,
            t: 0.0,
            cons,
            prim: initial.to_vec(),
            chart,
            steps: 0,
        })
    }

    pub fn from_snapshot(
        law: Arc<dyn PressureLaw>,
        grid: Grid,
        cfl: f64,
        snap: &FieldSnapshot,
    ) -> Result<Self> {
        let mut s = Solver::new(law, grid, cfl, &snap.prim)?;
        s.t = snap.t;
        Ok(s)
    }

    pub fn law(&self) -> &dyn PressureLaw {
        self.law.as_ref()
    }

    pub fn prim(&self) -> &[Primitive] {
        &self.prim
    }

    pub fn cons(&self) -> &[ConservedState] {
        &self.cons
    }

    pub fn snapshot(&self) -> FieldSnapshot {
        FieldSnapshot {
            t: self.t,
            xs: self.grid.centers(),
            prim: self.prim.clone(),
            cons: self.cons.clone(),
            grads: None,
        }
    }

    /// max over cells of |λ2|, |λ3|.
    pub fn max_speed(&self) -> f64 {
        let c = self.law.params().c;
        let mut vmax: f64 = 0.0;
        for (p, &x) in self.prim.iter().zip(&self.chart) {
            let (st, _) = self.law.state_at_chart(x, p.s);
            let f = flux_state(&st, p.u, c);
            vmax = vmax.max(f.lambda_min.abs()).max(f.lambda_max.abs());
        }
        vmax
    }

    pub fn stable_dt(&self) -> f64 {
        let v = self.max_speed();
        if v > 0.0 {
            self.cfl * self.grid.dx() / v
        } else {
            self.cfl * self.grid.dx() / self.law.params().c
        }
    }

    /// Semi-discrete right-hand side for (D, m, S).
    fn rhs(&self, prim: &[Primitive], chart: &[f64], out: &mut [[f64; 3]]) {
        let n = self.grid.cells;
        let g = &self.grid;
        let c = self.law.params().c;
        let dx = g.dx();
        let at = |i: isize| -> (f64, f64, f64) {
            let k = g.wrap(i);
            (chart[k], prim[k].u, prim[k].s)
        };
        // Limited slopes of cells −1..n (index shifted by one).
        let slopes: Vec<[f64; 3]> = (-1..=n as isize)
            .map(|i| {
                let (a0, b0, c0) = at(i - 1);
                let (a1, b1, c1) = at(i);
                let (a2, b2, c2) = at(i + 1);
                [
                    minmod(a1 - a0, a2 - a1),
                    minmod(b1 - b0, b2 - b1),
                    minmod(c1 - c0, c2 - c1),
                ]
            })
            .collect();
        // Faces i−½ for i = 0..=n; face f sits between cells f−1 and f.
        let mut flux = vec![[0.0; 2]; n + 1];
        let mut s_left = vec![0.0; n + 1];
        let mut s_right = vec![0.0; n + 1];
        for f in 0..=n {
            let il = f as isize - 1;
            let ir = f as isize;
            let (xl, ul, sl) = at(il);
            let (xr, ur, sr) = at(ir);
            let dl = slopes[f];
            let dr = slopes[f + 1];
            let (xl, ul, sl) = (xl + 0.5 * dl[0], ul + 0.5 * dl[1], sl + 0.5 * dl[2]);
            let (xr, ur, sr) = (xr - 0.5 * dr[0], ur - 0.5 * dr[1], sr - 0.5 * dr[2]);
            s_left[f] = sl;
            s_right[f] = sr;
            let (stl, _) = self.law.state_at_chart(xl.max(0.0), sl);
            let (str_, _) = self.law.state_at_chart(xr.max(0.0), sr);
            let fl = flux_state(&stl, ul, c);
            let fr = flux_state(&str_, ur, c);
            let a = fl.lambda_min.min(fr.lambda_min).min(0.0);
            let b = fl.lambda_max.max(fr.lambda_max).max(0.0);
            for k in 0..2 {
                flux[f][k] = if b - a > 0.0 {
                    (b * fl.flux[k] - a * fr.flux[k] + a * b * (fr.cons[k] - fl.cons[k])) / (b - a)
                } else {
                    0.5 * (fl.flux[k] + fr.flux[k])
                };
            }
        }
        for i in 0..n {
            out[i][0] = -(flux[i + 1][0] - flux[i][0]) / dx;
            out[i][1] = -(flux[i + 1][1] - flux[i][1]) / dx;
            let u = prim[i].u;
            // Upwind differences of the face values reconstructed from the upwind side.
            out[i][2] = if u > 0.0 {
                -u * (s_left[i + 1] - s_left[i]) / dx
            } else {
                -u * (s_right[i + 1] - s_right[i]) / dx
            };
        }
    }

    fn recover(
        &self,
        cons: &[ConservedState],
        guess: &[f64],
        t: f64,
    ) -> Result<(Vec<Primitive>, Vec<f64>)> {
        let mut prim = Vec::with_capacity(cons.len());
        let mut chart = Vec::with_capacity(cons.len());
        for (i, (cs, &g)) in cons.iter().zip(guess).enumerate() {
            let r = cons_to_prim(cs, self.law.as_ref(), Some(g)).map_err(|e| Error::Recovery {
                cell: i,
                t,
                detail: e.to_string(),
            })?;
            prim.push(r.prim);
            chart.push(r.chart);
        }
        Ok((prim, chart))
    }

    /// One SSP-RK2 step of size `dt`. State is unchanged on error.
    pub fn advance(&mut self, dt: f64) -> Result<()> {
        let n = self.grid.cells;
        let mut k = vec![[0.0; 3]; n];
        self.rhs(&self.prim, &self.chart, &mut k);
        let stage: Vec<ConservedState> = self
            .cons
            .iter()
            .zip(&k)
            .map(|(u, r)| ConservedState {
                d: u.d + dt * r[0],
                m: u.m + dt * r[1],
                sigma: u.sigma + dt * r[2],
            })
            .collect();
        let (p1, x1) = self.recover(&stage, &self.chart, self.t + dt)?;
        self.rhs(&p1, &x1, &mut k);
        let next: Vec<ConservedState> = self
            .cons
            .iter()
            .zip(&stage)
            .zip(&k)
            .map(|((u0, u1), r)| ConservedState {
                d: 0.5 * u0.d + 0.5 * (u1.d + dt * r[0]),
                m: 0.5 * u0.m + 0.5 * (u1.m + dt * r[1]),
                sigma: 0.5 * u0.sigma + 0.5 * (u1.sigma + dt * r[2]),
            })
            .collect();
        let (p2, x2) = self.recover(&next, &x1, self.t + dt)?;
        self.cons = next;
        self.prim = p2;
        self.chart = x2;
        self.t += dt;
        self.steps += 1;
        Ok(())
    }

    /// Step with the CFL time step (capped by `dt_max`); returns the step taken.
    pub fn step(&mut self, dt_max: f64) -> Result<f64> {
        let dt = self.stable_dt().min(dt_max);
        self.advance(dt)?;
        Ok(dt)
    }
}

/// One CFL-limited step from a snapshot.
pub fn step(
    snapshot: &FieldSnapshot,
    cfl: f64,
    law: Arc<dyn PressureLaw>,
    grid: Grid,
) -> Result<FieldSnapshot> {
    let mut s = Solver::from_snapshot(law, grid, cfl, snapshot)?;
    s.step(f64::INFINITY)?;
    Ok(s.snapshot())
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunSettings {
    pub t_end: f64,
    #[serde(default = "default_cfl")]
    pub cfl: f64,
    /// Time between stored snapshots.
    pub output_interval: f64,
    #[serde(default = "default_max_steps")]
    pub max_steps: usize,
}

fn default_cfl() -> f64 {
    0.4
}

fn default_max_steps() -> usize {
    10_000_000
}

impl RunSettings {
    pub fn validate(&self) -> Result<()> {
        if !(self.t_end > 0.0) || !self.t_end.is_finite() {
            return Err(Error::validation(format!(
                "t_end must be positive, got {}",
                self.t_end
            )));
        }
        if !(self.output_interval > 0.0) {
            return Err(Error::validation("output_interval must be positive"));
        }
        if !(self.cfl > 0.0 && self.cfl < 1.0) {
            return Err(Error::validation(format!(
                "cfl must lie in (0, 1), got {}",
                self.cfl
            )));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunEvent {
    pub t: f64,
    pub kind: String,
    pub detail: String,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RunHistory {
    pub grid: Grid,
    pub settings: RunSettings,
    pub snapshots: Vec<FieldSnapshot>,
    pub events: Vec<RunEvent>,
    /// Reached t_end without a recovery failure.
    pub completed: bool,
    pub steps: usize,
}

impl RunHistory {
    pub fn t_last(&self) -> f64 {
        self.snapshots.last().map(|s| s.t).unwrap_or(0.0)
    }
}

/// Run to `t_end`, storing a snapshot every `output_interval` (time steps are
/// shortened to land on output times). A recovery failure ends the run and is
/// recorded as an event; the history up to it is kept.
pub fn run(
    law: Arc<dyn PressureLaw>,
    grid: Grid,
    initial: &[Primitive],
    settings: RunSettings,
) -> Result<RunHistory> {
    settings.validate()?;
    let mut solver = Solver::new(law, grid, settings.cfl, initial)?;
    let mut snapshots = vec![solver.snapshot()];
    let mut events = Vec::new();
    let mut completed = false;
    let mut k_out = 1usize;
    loop {
        let t_out = (k_out as f64 * settings.output_interval).min(settings.t_end);
        let remaining = t_out - solver.t;
        if remaining <= 1e-12 * settings.t_end {
            solver.t = t_out;
            snapshots.push(solver.snapshot());
            if t_out >= settings.t_end {
                completed = true;
                break;
            }
            k_out += 1;
            continue;
        }
        if solver.steps >= settings.max_steps {
            events.push(RunEvent {
                t: solver.t,
                kind: "max-steps".into(),
                detail: format!("stopped after {} steps", solver.steps),
            });
            break;
        }
        let dt = solver.stable_dt();
        // Avoid a sliver step right before an output time.
        let dt = if dt >= remaining {
            remaining
        } else if dt > 0.5 * remaining {
            0.5 * remaining
        } else {
            dt
        };
        if let Err(e) = solver.advance(dt) {
            events.push(RunEvent {
                t: solver.t,
                kind: "recovery-failure".into(),
                detail: e.to_string(),
            });
            break;
        }
    }
    Ok(RunHistory {
        grid,
        settings,
        snapshots,
        events,
        completed,
        steps: solver.steps,
    })
}
