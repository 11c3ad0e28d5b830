//! `relblow <mode> [--preset NAME] [--config PATH] [--set key=value]... [--out DIR] [--seed N]`
//!
//! Exit codes: 0 success, 1 usage or configuration error, 2 numerical
//! failure (including failed verification checks), 3 outside theory.

use clap::{Parser, ValueEnum};
use relblow::config::{Mode, RunConfig, PRESETS};
use relblow::criteria::{IsoVerdict, NonisoContext};
use relblow::driver::{self, Simulation};
use relblow::error::Error;
use relblow::initial::LawKind;
use relblow::isentropic::{quantity_y, riccati_reciprocal_integral};
use relblow::solver::{snapshot_samples, trace_characteristic, TraceSettings};
use relblow::verify::{run_dynamics_suite, run_identity_suite, SuiteResult};
use serde::Serialize;
use serde_json::{json, Value};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum ModeArg {
    Simulate,
    Criteria,
    Thresholds,
    VerifyIdentities,
    VerifyDynamics,
    Sweep,
}

impl From<ModeArg> for Mode {
    fn from(m: ModeArg) -> Mode {
        match m {
            ModeArg::Simulate => Mode::Simulate,
            ModeArg::Criteria => Mode::Criteria,
            ModeArg::Thresholds => Mode::Thresholds,
            ModeArg::VerifyIdentities => Mode::VerifyIdentities,
            ModeArg::VerifyDynamics => Mode::VerifyDynamics,
            ModeArg::Sweep => Mode::Sweep,
        }
    }
}

#[derive(Parser, Debug)]
#[command(
    name = "relblow",
    version,
    about = "Gradient blow-up criteria and simulations for 1D relativistic Euler flow"
)]
struct Cli {
    /// Mode to run; overrides `mode` from the config.
    mode: Option<ModeArg>,
    /// Start from a bundled preset.
    #[arg(long)]
    preset: Option<String>,
    /// TOML configuration merged over the preset or defaults.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Dotted-path override, e.g. `grid.cells=1024`; values parse as JSON, else as strings.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    sets: Vec<String>,
    /// Output directory (overrides outputs.dir).
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// List the bundled presets and exit.
    #[arg(long)]
    list_presets: bool,
}

/// Failure of a mode, carrying its exit code.
#[derive(Debug)]
struct Failure {
    code: u8,
    message: String,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match e {
            Error::Validation(_) => 1,
            Error::OutsideTheory(_) => 3,
            _ => 2,
        };
        Failure {
            code,
            message: e.to_string(),
        }
    }
}

fn io_failure(path: &Path, e: impl std::fmt::Display) -> Failure {
    Failure {
        code: 2,
        message: format!("{}: {e}", path.display()),
    }
}

type Outcome = Result<u8, Failure>;

fn load_config(cli: &Cli) -> Result<RunConfig, Failure> {
    let file = match &cli.config {
        Some(path) => {
            let text = std::fs::read_to_string(path).map_err(|e| Failure {
                code: 1,
                message: format!("{}: {e}", path.display()),
            })?;
            let table: toml::Value = toml::from_str(&text).map_err(|e| Failure {
                code: 1,
                message: format!("{}: {e}", path.display()),
            })?;
            Some(serde_json::to_value(table).map_err(|e| Failure {
                code: 1,
                message: e.to_string(),
            })?)
        }
        None => None,
    };
    let mut sets = cli.sets.clone();
    if let Some(m) = cli.mode {
        sets.push(format!(
            "mode={}",
            serde_json::to_string(&Mode::from(m)).unwrap()
        ));
    }
    if let Some(s) = cli.seed {
        sets.push(format!("seed={s}"));
    }
    if let Some(dir) = &cli.out {
        sets.push(format!(
            "outputs.dir={}",
            serde_json::to_string(&dir.to_string_lossy()).unwrap()
        ));
    }
    Ok(RunConfig::resolve(cli.preset.as_deref(), file, &sets)?)
}

/// Output files of one run, each with its column list where tabular.
#[derive(Default, Serialize)]
struct Artifacts {
    files: Vec<Value>,
}

impl Artifacts {
    fn json(&mut self, dir: &Path, name: &str, value: &impl Serialize) -> Result<(), Failure> {
        let path = dir.join(name);
        let text = serde_json::to_string_pretty(value).map_err(|e| io_failure(&path, e))?;
        std::fs::write(&path, text + "\n").map_err(|e| io_failure(&path, e))?;
        self.files.push(json!({ "name": name, "format": "json" }));
        Ok(())
    }

    fn csv(
        &mut self,
        dir: &Path,
        name: &str,
        header: &[&str],
        rows: impl IntoIterator<Item = Vec<f64>>,
    ) -> Result<(), Failure> {
        let path = dir.join(name);
        let mut w = csv::Writer::from_path(&path).map_err(|e| io_failure(&path, e))?;
        w.write_record(header).map_err(|e| io_failure(&path, e))?;
        for row in rows {
            w.write_record(row.iter().map(|v| v.to_string()))
                .map_err(|e| io_failure(&path, e))?;
        }
        w.flush().map_err(|e| io_failure(&path, e))?;
        self.files
            .push(json!({ "name": name, "format": "csv", "columns": header }));
        Ok(())
    }

    fn text(&mut self, dir: &Path, name: &str, body: &str) -> Result<(), Failure> {
        let path = dir.join(name);
        std::fs::write(&path, body).map_err(|e| io_failure(&path, e))?;
        self.files.push(json!({ "name": name, "format": "text" }));
        Ok(())
    }
}

fn write_manifest(
    dir: &Path,
    cfg: &RunConfig,
    status: &str,
    code: u8,
    artifacts: &Artifacts,
) -> Result<(), Failure> {
    let manifest = json!({
        "program": "relblow",
        "version": env!("CARGO_PKG_VERSION"),
        "status": status,
        "exit_code": code,
        "config": cfg.to_value(),
        "files": artifacts.files,
    });
    let path = dir.join("manifest.json");
    let text = serde_json::to_string_pretty(&manifest).map_err(|e| io_failure(&path, e))?;
    std::fs::write(&path, text + "\n").map_err(|e| io_failure(&path, e))
}

fn simulate_outputs(
    cfg: &RunConfig,
    sim: &Simulation,
    dir: &Path,
    art: &mut Artifacts,
) -> Result<(), Failure> {
    let law = cfg.law.build(cfg.gas);
    let h = &sim.history;
    let stride = cfg.outputs.field_stride.max(1);
    let mut rows = vec![];
    for k in (0..h.snapshots.len()).filter(|k| k % stride == 0 || *k + 1 == h.snapshots.len()) {
        for s in snapshot_samples(h, k, law.as_ref())? {
            rows.push(vec![s.t, s.x, s.rho, s.u, s.s, s.w, s.z, s.dx_w, s.dx_z]);
        }
    }
    art.csv(
        dir,
        "fields.csv",
        &["t", "x", "rho", "u", "S", "w", "z", "dxw", "dxz"],
        rows,
    )?;
    let g = &sim.series;
    art.csv(
        dir,
        "gradients.csv",
        &["t", "max_dxw", "max_dxz", "argmax_x", "min_rho"],
        (0..g.times.len()).map(|i| {
            vec![
                g.times[i],
                g.max_dx_w[i],
                g.max_dx_z[i],
                g.argmax_x[i],
                g.min_rho[i],
            ]
        }),
    )?;
    art.json(dir, "summary.json", &sim.summary())?;
    if let Some(obs) = &sim.observation {
        art.json(dir, "blowup.json", obs)?;
    }
    // The predicted 1-characteristic of compressive isentropic data, with the
    // Riccati integral accumulated along it.
    if cfg.law == LawKind::Isentropic {
        let data = driver::initial_data(cfg)?;
        let rep = relblow::criteria::classify_iso(&data)?;
        if let (Some(IsoVerdict::FiniteTime), Some(w)) = (rep.iso_verdict, rep.predicted_window) {
            let tr = trace_characteristic(h, 1, w.x_star, law.as_ref(), TraceSettings::default())?;
            let pred = riccati_reciprocal_integral(&tr, &cfg.gas)?;
            let rows = tr.samples.iter().zip(&pred.cumulative).map(|(s, c)| {
                let y = quantity_y(s.rho, &cfg.gas).unwrap_or(f64::NAN);
                vec![s.t, s.x, s.rho, s.u, s.w, s.z, s.xi, s.zeta, y, *c]
            });
            art.csv(
                dir,
                "trace.csv",
                &[
                    "t",
                    "x",
                    "rho",
                    "u",
                    "w",
                    "z",
                    "xi",
                    "zeta",
                    "Y",
                    "cumulative_integral",
                ],
                rows,
            )?;
        }
    }
    Ok(())
}

fn suite_outcome(suites: &[SuiteResult]) -> u8 {
    if suites.iter().all(|s| s.passed) {
        0
    } else {
        2
    }
}

/// Run one resolved configuration into `dir` and return its exit code.
fn run_mode(cfg: &RunConfig, dir: &Path, art: &mut Artifacts) -> Outcome {
    match cfg.mode {
        Mode::Simulate => {
            let sim = driver::simulate(cfg)?;
            simulate_outputs(cfg, &sim, dir, art)?;
            let s = sim.summary();
            println!(
                "simulate: {} cells, {} steps, t = {:.6}, max|dxz| ratio {:.3}, blow-up declared {} ({:.1} s)",
                s.cells, s.steps, s.t_last, s.max_dx_z_ratio, s.blowup_declared, sim.seconds
            );
            Ok(if s.completed || s.blowup_declared {
                0
            } else {
                2
            })
        }
        Mode::Criteria => {
            let mut ctx = NonisoContext::new(cfg.criteria.noniso());
            let rep = driver::criteria(cfg, &mut ctx)?;
            art.json(dir, "criteria.json", &rep)?;
            let iso = rep.iso_verdict.map(|v| serde_json::to_string(&v).unwrap());
            let non = rep
                .noniso
                .as_ref()
                .map(|n| serde_json::to_string(&n.verdict).unwrap());
            println!(
                "criteria: isentropic {} / strong compression {}",
                iso.as_deref().unwrap_or("n/a"),
                non.as_deref().unwrap_or("n/a")
            );
            Ok(if driver::outside_theory(&rep) { 3 } else { 0 })
        }
        Mode::Thresholds => {
            let mut ctx = NonisoContext::new(cfg.criteria.noniso());
            let out = driver::thresholds(cfg, &mut ctx)?;
            art.json(dir, "thresholds.json", &out)?;
            match &out.thresholds {
                Some(t) => println!("thresholds: N1 = {:.6}, N2 = {:.6}", t.n1, t.n2),
                None => println!("thresholds: entropy-coupling assumption fails, no thresholds"),
            }
            Ok(if out.thresholds.is_some() { 0 } else { 3 })
        }
        Mode::VerifyIdentities => {
            let mut suites = vec![];
            for &g in &cfg.verify.gammas {
                let s = run_identity_suite(cfg.gas.with_gamma(g), cfg.seed, cfg.verify.samples)?;
                println!("gamma = {g}\n{}", s.table());
                suites.push(s);
            }
            let table: String = suites
                .iter()
                .map(|s| format!("gamma = {}\n{}\n", s.params.gamma, s.table()))
                .collect();
            art.json(dir, "identities.json", &suites)?;
            art.text(dir, "identities.txt", &table)?;
            Ok(suite_outcome(&suites))
        }
        Mode::VerifyDynamics => {
            let s = run_dynamics_suite(cfg)?;
            println!("{}", s.table());
            art.json(dir, "dynamics.json", &s)?;
            art.text(dir, "dynamics.txt", &s.table())?;
            Ok(suite_outcome(std::slice::from_ref(&s)))
        }
        Mode::Sweep => run_sweep(cfg, dir, art),
    }
}

/// Run a configuration in its own directory and write its manifest there.
fn run_in_dir(cfg: &RunConfig, dir: &Path) -> Result<u8, Failure> {
    std::fs::create_dir_all(dir).map_err(|e| io_failure(dir, e))?;
    let mut art = Artifacts::default();
    let (code, status) = match run_mode(cfg, dir, &mut art) {
        Ok(0) => (0, "ok".to_string()),
        Ok(3) => (3, "outside-theory".to_string()),
        Ok(c) => (c, "failed".to_string()),
        Err(f) => {
            eprintln!("error: {}", f.message);
            let status = if f.code == 3 {
                "outside-theory"
            } else {
                "error"
            };
            (f.code, format!("{status}: {}", f.message))
        }
    };
    write_manifest(dir, cfg, &status, code, &art)?;
    Ok(code)
}

/// One run per sweep value on a bounded pool; each run writes to
/// `run-NNN/`. Outside-theory runs are results, so the sweep exits with the
/// most severe code among configuration and numerical failures only.
fn run_sweep(cfg: &RunConfig, dir: &Path, art: &mut Artifacts) -> Outcome {
    let sw = &cfg.sweep;
    let base = cfg.to_value();
    let mut jobs = vec![];
    for (i, v) in sw.values.iter().enumerate() {
        let mut tree = base.clone();
        relblow::config::set_path(&mut tree, "mode", serde_json::to_value(sw.mode).unwrap())?;
        relblow::config::set_path(&mut tree, &sw.key, v.clone())?;
        let sub = format!("run-{i:03}");
        relblow::config::set_path(
            &mut tree,
            "outputs.dir",
            json!(dir.join(&sub).to_string_lossy()),
        )?;
        let run_cfg = RunConfig::from_value(tree).and_then(|c| c.validate().map(|_| c))?;
        jobs.push((sub, v.clone(), run_cfg));
    }
    let next = AtomicUsize::new(0);
    let results = Mutex::new(vec![None; jobs.len()]);
    std::thread::scope(|sc| {
        for _ in 0..sw.workers.min(jobs.len()) {
            sc.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::SeqCst);
                let Some((sub, _, c)) = jobs.get(i) else {
                    break;
                };
                let code = run_in_dir(c, &dir.join(sub)).unwrap_or_else(|f| f.code);
                results.lock().unwrap()[i] = Some(code);
            });
        }
    });
    let results = results.into_inner().unwrap();
    let index: Vec<Value> = jobs
        .iter()
        .zip(&results)
        .map(|((sub, v, _), code)| json!({ "dir": sub, "key": sw.key, "value": v, "exit_code": code }))
        .collect();
    art.json(dir, "sweep.json", &index)?;
    for row in &index {
        println!(
            "sweep: {} = {} -> exit {}",
            sw.key, row["value"], row["exit_code"]
        );
    }
    Ok(results
        .iter()
        .map(|c| c.unwrap_or(2))
        .filter(|c| *c != 3)
        .max()
        .unwrap_or(0))
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    if cli.list_presets {
        for p in PRESETS {
            println!("{p}");
        }
        return ExitCode::SUCCESS;
    }
    let cfg = match load_config(&cli) {
        Ok(c) => c,
        Err(f) => {
            eprintln!("error: {}", f.message);
            return ExitCode::from(f.code);
        }
    };
    let dir = PathBuf::from(&cfg.outputs.dir);
    match run_in_dir(&cfg, &dir) {
        Ok(code) => ExitCode::from(code),
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}
