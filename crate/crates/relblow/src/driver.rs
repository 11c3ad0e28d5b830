//! Mode implementations shared by the command line and the test suites.

use crate::config::RunConfig;
use crate::criteria::{
    classify_iso, CriteriaReport, InitialData, IsoVerdict, NonisoContext, NonisoVerdict,
};
use crate::error::{Error, Result};
use crate::initial::LawKind;
use crate::nonisentropic::{ConservedBounds, CriteriaConstants, ThresholdReport};
use crate::solver::{
    gradient_series, monitor_blowup, run, BlowupObservation, GradientSeries, Grid, Primitive,
    RunHistory,
};
use serde::{Deserialize, Serialize};
use std::time::Instant;

/// Cell-center samples of the configured initial state on `grid`.
pub fn initial_state(cfg: &RunConfig, grid: &Grid) -> Result<Vec<Primitive>> {
    let law = cfg.law.build(cfg.gas);
    cfg.initial.sample(&grid.centers(), law.as_ref())
}

pub fn run_on(cfg: &RunConfig, grid: Grid) -> Result<RunHistory> {
    let init = initial_state(cfg, &grid)?;
    run(cfg.law.build(cfg.gas), grid, &init, cfg.time)
}

pub struct Simulation {
    pub history: RunHistory,
    pub series: GradientSeries,
    /// Blow-up monitor against the coarse companion run.
    pub observation: Option<BlowupObservation>,
    pub seconds: f64,
}

/// Summary of a simulation, suitable for JSON output. Wall time is left
/// out so reports are reproducible.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SimulationSummary {
    pub cells: usize,
    pub steps: usize,
    pub completed: bool,
    pub t_last: f64,
    pub initial_max_dx_w: f64,
    pub initial_max_dx_z: f64,
    /// Largest max|∂xz| over the run divided by its initial value.
    pub max_dx_z_ratio: f64,
    pub max_dx_w_ratio: f64,
    pub min_rho: f64,
    pub blowup_declared: bool,
    pub t_blowup: Option<f64>,
    pub x_blowup: Option<f64>,
    pub max_growth: f64,
    pub events: Vec<crate::solver::RunEvent>,
}

impl Simulation {
    pub fn summary(&self) -> SimulationSummary {
        let s = &self.series;
        let ratio = |v: &[f64]| {
            let m = v.iter().fold(0.0f64, |a, b| a.max(*b));
            if v[0] > 0.0 {
                m / v[0]
            } else {
                f64::NAN
            }
        };
        let obs = self.observation.as_ref();
        SimulationSummary {
            cells: self.history.grid.cells,
            steps: self.history.steps,
            completed: self.history.completed,
            t_last: self.history.t_last(),
            initial_max_dx_w: s.max_dx_w[0],
            initial_max_dx_z: s.max_dx_z[0],
            max_dx_z_ratio: ratio(&s.max_dx_z),
            max_dx_w_ratio: ratio(&s.max_dx_w),
            min_rho: s.min_rho.iter().fold(f64::INFINITY, |a, b| a.min(*b)),
            blowup_declared: obs.is_some_and(|o| o.declared),
            t_blowup: obs.and_then(|o| o.t_blowup),
            x_blowup: obs.and_then(|o| o.x_blowup),
            max_growth: obs.map_or(f64::NAN, |o| o.max_growth),
            events: self.history.events.clone(),
        }
    }
}

/// Run the configured problem; with monitoring on, the coarse companion run
/// executes on a second thread.
pub fn simulate(cfg: &RunConfig) -> Result<Simulation> {
    let start = Instant::now();
    let law = cfg.law.build(cfg.gas);
    let fine_grid = cfg.grid;
    let coarse_grid = Grid {
        cells: cfg.grid.cells / cfg.monitor.coarse_factor,
        ..cfg.grid
    };
    let (fine, coarse) = std::thread::scope(|sc| {
        let coarse = cfg
            .monitor
            .enabled
            .then(|| sc.spawn(|| run_on(cfg, coarse_grid)));
        let fine = run_on(cfg, fine_grid);
        let coarse = coarse.map(|h| h.join().expect("coarse run thread panicked"));
        (fine, coarse)
    });
    let history = fine?;
    let series = gradient_series(&history, law.as_ref())?;
    let observation = match coarse {
        Some(c) => {
            let cs = gradient_series(&c?, law.as_ref())?;
            Some(monitor_blowup(&cs, &series, cfg.monitor.settings())?)
        }
        None => None,
    };
    Ok(Simulation {
        history,
        series,
        observation,
        seconds: start.elapsed().as_secs_f64(),
    })
}

pub fn initial_data(cfg: &RunConfig) -> Result<InitialData> {
    InitialData::from_spec(
        &cfg.initial,
        &cfg.grid,
        cfg.criteria.data_refinement,
        cfg.law,
        cfg.gas,
    )
}

/// Criteria report of the configured data. Isentropic data gets the dichotomy
/// and the strong-compression section (with zero thresholds); polytropic data
/// gets the strong-compression section only.
pub fn criteria(cfg: &RunConfig, ctx: &mut NonisoContext) -> Result<CriteriaReport> {
    let data = initial_data(cfg)?;
    let mut rep = match cfg.law {
        LawKind::Isentropic => {
            let mut rep = classify_iso(&data)?;
            if rep.iso_verdict != Some(IsoVerdict::OutsideTheory) {
                rep.noniso = ctx.classify(&data)?.noniso;
            }
            rep
        }
        LawKind::Polytropic => ctx.classify(&data)?,
    };
    if cfg.criteria.attach_run && rep.iso_verdict == Some(IsoVerdict::FiniteTime) {
        let sim = simulate(cfg)?;
        if let Some(obs) = &sim.observation {
            rep.attach_observation(obs);
        }
    }
    Ok(rep)
}

/// True when the report says the data lies outside the theory's scope.
pub fn outside_theory(rep: &CriteriaReport) -> bool {
    rep.iso_verdict == Some(IsoVerdict::OutsideTheory)
        || rep
            .noniso
            .as_ref()
            .is_some_and(|n| n.verdict == NonisoVerdict::OutsideTheory)
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ThresholdsOutput {
    pub constants: CriteriaConstants,
    pub bounds: ConservedBounds,
    pub thresholds: Option<ThresholdReport>,
}

pub fn thresholds(cfg: &RunConfig, ctx: &mut NonisoContext) -> Result<ThresholdsOutput> {
    let data = initial_data(cfg)?;
    if !(data.lower_gap() > 0.0) {
        return Err(Error::OutsideTheory("initial data contains vacuum".into()));
    }
    let (constants, bounds, thresholds) = ctx.thresholds_for(&data)?;
    Ok(ThresholdsOutput {
        constants,
        bounds,
        thresholds,
    })
}
