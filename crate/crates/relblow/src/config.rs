//! Run configuration, bundled presets and layered overrides.
//!
//! A configuration is resolved in three layers: a preset (or the defaults),
//! then a structured file, then `key.path=value` overrides. Layers are merged
//! as JSON trees and deserialized once at the end, so unknown or mistyped
//! fields are reported with their full path.

use crate::criteria::{
    verdict_flip_bisection, FlipSearch, InitialData, NonisoContext, NonisoSettings, NonisoVerdict,
};
use crate::eos::GasParams;
use crate::error::{Error, Result};
use crate::initial::{InitialSpec, LawKind, Profile};
use crate::isentropic::to_riemann_iso;
use crate::nonisentropic::{to_riemann_law, SearchGrid, ThresholdSettings};
use crate::solver::{BlowupSettings, Boundary, Grid, RunSettings};
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};
use std::f64::consts::PI;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    Simulate,
    #[default]
    Criteria,
    Thresholds,
    VerifyIdentities,
    VerifyDynamics,
    Sweep,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    pub dir: String,
    /// Write every n-th stored snapshot to the field CSV (0 disables it).
    pub field_stride: usize,
}

impl Default for OutputConfig {
    fn default() -> Self {
        OutputConfig {
            dir: "out".into(),
            field_stride: 1,
        }
    }
}

/// Two-grid blow-up monitoring of `simulate` runs.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MonitorConfig {
    pub enabled: bool,
    /// The companion run uses cells / coarse_factor.
    pub coarse_factor: usize,
    pub growth_factor: f64,
    pub ratio_band: (f64, f64),
}

impl Default for MonitorConfig {
    fn default() -> Self {
        let b = BlowupSettings::default();
        MonitorConfig {
            enabled: true,
            coarse_factor: 2,
            growth_factor: b.growth_factor,
            ratio_band: b.ratio_band,
        }
    }
}

impl MonitorConfig {
    pub fn settings(&self) -> BlowupSettings {
        BlowupSettings {
            growth_factor: self.growth_factor,
            ratio_band: self.ratio_band,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CriteriaConfig {
    /// Initial-data samples per solver cell.
    pub data_refinement: usize,
    pub search: SearchGrid,
    pub thresholds: ThresholdSettings,
    /// Run the solver on both grids and attach the observed blow-up time.
    pub attach_run: bool,
}

impl Default for CriteriaConfig {
    fn default() -> Self {
        CriteriaConfig {
            data_refinement: 2,
            search: SearchGrid::default(),
            thresholds: ThresholdSettings::default(),
            attach_run: false,
        }
    }
}

impl CriteriaConfig {
    pub fn noniso(&self) -> NonisoSettings {
        NonisoSettings {
            search: self.search,
            thresholds: self.thresholds,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VerifyConfig {
    /// Random states per identity and exponent.
    pub samples: usize,
    pub gammas: Vec<f64>,
    /// Refinement levels of the dynamic checks; grid.cells is the finest.
    pub levels: usize,
    /// Characteristics traced per family.
    pub traces: usize,
}

impl Default for VerifyConfig {
    fn default() -> Self {
        VerifyConfig {
            samples: 100,
            gammas: vec![1.4, 5.0 / 3.0, 2.0, 2.9, 3.0],
            levels: 3,
            traces: 6,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    /// Mode executed for every value.
    pub mode: Mode,
    /// Dotted configuration path that is varied.
    pub key: String,
    pub values: Vec<Value>,
    pub workers: usize,
}

impl Default for SweepConfig {
    fn default() -> Self {
        SweepConfig {
            mode: Mode::Criteria,
            key: String::new(),
            values: vec![],
            workers: 4,
        }
    }
}

/// Provenance of a preset, echoed into manifests.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PresetInfo {
    pub name: String,
    #[serde(default)]
    pub details: Value,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub mode: Mode,
    pub seed: u64,
    pub gas: GasParams,
    pub law: LawKind,
    pub grid: Grid,
    pub time: RunSettings,
    pub initial: InitialSpec,
    pub outputs: OutputConfig,
    pub monitor: MonitorConfig,
    pub criteria: CriteriaConfig,
    pub verify: VerifyConfig,
    pub sweep: SweepConfig,
    pub preset: Option<PresetInfo>,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            mode: Mode::default(),
            seed: 0,
            gas: GasParams::default(),
            law: LawKind::Isentropic,
            grid: Grid {
                x_min: 0.0,
                x_max: 1.0,
                cells: 256,
                boundary: Boundary::Periodic,
            },
            time: RunSettings {
                t_end: 1.0,
                cfl: 0.4,
                output_interval: 0.05,
                max_steps: 10_000_000,
            },
            initial: InitialSpec::Primitive {
                rho: Profile::Constant { value: 0.1 },
                u: Profile::Constant { value: 0.0 },
                s: Profile::Constant { value: 0.0 },
            },
            outputs: OutputConfig::default(),
            monitor: MonitorConfig::default(),
            criteria: CriteriaConfig::default(),
            verify: VerifyConfig::default(),
            sweep: SweepConfig::default(),
            preset: None,
        }
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        let ctx = |field: &str, e: Error| match e {
            Error::Validation(m) => Error::validation(format!("{field}: {m}")),
            other => other,
        };
        self.gas.validate().map_err(|e| ctx("gas", e))?;
        self.grid.validate().map_err(|e| ctx("grid", e))?;
        self.time.validate().map_err(|e| ctx("time", e))?;
        self.initial
            .validate(self.law)
            .map_err(|e| ctx("initial", e))?;
        let m = &self.monitor;
        if m.coarse_factor < 2 || self.grid.cells / m.coarse_factor < 8 {
            return Err(Error::validation(
                "monitor.coarse_factor must be ≥ 2 and leave at least 8 coarse cells",
            ));
        }
        if !(m.growth_factor > 1.0) || !(m.ratio_band.0 > 0.0 && m.ratio_band.1 > m.ratio_band.0) {
            return Err(Error::validation("monitor: growth_factor must exceed 1 and ratio_band must be an increasing positive pair"));
        }
        if self.criteria.data_refinement < 2 {
            return Err(Error::validation(
                "criteria.data_refinement must be at least 2",
            ));
        }
        let v = &self.verify;
        if v.samples == 0 || v.levels < 3 || v.traces == 0 {
            return Err(Error::validation(
                "verify: samples and traces must be positive and levels at least 3",
            ));
        }
        for g in &v.gammas {
            self.gas
                .with_gamma(*g)
                .validate()
                .map_err(|e| ctx("verify.gammas", e))?;
        }
        if self.mode == Mode::Sweep {
            let s = &self.sweep;
            if s.key.is_empty() || s.values.is_empty() || s.workers == 0 {
                return Err(Error::validation(
                    "sweep: key, values and a positive worker count are required",
                ));
            }
            if s.mode == Mode::Sweep {
                return Err(Error::validation("sweep.mode cannot itself be sweep"));
            }
        }
        if self.outputs.dir.is_empty() {
            return Err(Error::validation("outputs.dir must not be empty"));
        }
        Ok(())
    }

    pub fn to_value(&self) -> Value {
        serde_json::to_value(self).expect("configuration serializes")
    }

    /// Deserialize a merged tree, reporting the path of the offending field.
    pub fn from_value(v: Value) -> Result<Self> {
        serde_path_to_error::deserialize(v).map_err(|e| {
            let path = e.path().to_string();
            Error::validation(format!("{path}: {}", e.into_inner()))
        })
    }

    /// Resolve preset, file tree and overrides, then validate.
    pub fn resolve(preset: Option<&str>, file: Option<Value>, sets: &[String]) -> Result<Self> {
        let mut tree = match preset {
            Some(name) => preset_config(name)?.to_value(),
            None => RunConfig::default().to_value(),
        };
        if let Some(f) = file {
            merge(&mut tree, f);
        }
        for s in sets {
            let (key, value) = parse_set(s)?;
            set_path(&mut tree, &key, value)?;
        }
        let cfg = Self::from_value(tree)?;
        cfg.validate()?;
        Ok(cfg)
    }
}

/// Recursive merge of `over` into `base`. A tagged object whose tag differs
/// from the base replaces it instead of merging.
pub fn merge(base: &mut Value, over: Value) {
    match (base, over) {
        (Value::Object(b), Value::Object(o)) => {
            for tag in ["kind", "family"] {
                if let (Some(x), Some(y)) = (b.get(tag), o.get(tag)) {
                    if x != y {
                        *b = o;
                        return;
                    }
                }
            }
            for (k, v) in o {
                match b.get_mut(&k) {
                    Some(slot) => merge(slot, v),
                    None => {
                        b.insert(k, v);
                    }
                }
            }
        }
        (b, o) => *b = o,
    }
}

/// Split `a.b.c=value`; the value is read as JSON when possible and as a
/// plain string otherwise.
pub fn parse_set(s: &str) -> Result<(String, Value)> {
    let (k, v) = s
        .split_once('=')
        .ok_or_else(|| Error::validation(format!("override `{s}` is not of the form key=value")))?;
    let k = k.trim();
    if k.is_empty() {
        return Err(Error::validation(format!(
            "override `{s}` has an empty key"
        )));
    }
    let v = v.trim();
    let value = serde_json::from_str(v).unwrap_or_else(|_| Value::String(v.to_string()));
    Ok((k.to_string(), value))
}

/// Set a dotted path, creating intermediate tables.
pub fn set_path(tree: &mut Value, key: &str, value: Value) -> Result<()> {
    let mut cur = tree;
    let parts: Vec<&str> = key.split('.').collect();
    for (i, part) in parts.iter().enumerate() {
        if !cur.is_object() {
            return Err(Error::validation(format!(
                "cannot set `{key}`: `{}` is not a table",
                parts[..i].join(".")
            )));
        }
        let map: &mut Map<String, Value> = cur.as_object_mut().unwrap();
        if i + 1 == parts.len() {
            match map.get_mut(*part) {
                Some(slot) => merge(slot, value),
                None => {
                    map.insert(part.to_string(), value);
                }
            }
            return Ok(());
        }
        cur = map
            .entry(part.to_string())
            .or_insert_with(|| Value::Object(Map::new()));
    }
    Ok(())
}

pub const PRESETS: [&str; 4] = [
    "iso-rarefaction",
    "iso-compression",
    "noniso-weak",
    "noniso-strong",
];

/// Slope amplitude of the compressive preset; the focusing time is 1/slope.
pub const COMPRESSION_SLOPE: f64 = 0.2 * PI / 2.0;

pub fn preset_config(name: &str) -> Result<RunConfig> {
    match name {
        "iso-rarefaction" => Ok(iso_rarefaction()),
        "iso-compression" => Ok(iso_compression()),
        "noniso-weak" => noniso_weak(),
        "noniso-strong" => noniso_strong(),
        _ => Err(Error::validation(format!(
            "unknown preset `{name}` (available: {})",
            PRESETS.join(", ")
        ))),
    }
}

fn iso_gas() -> GasParams {
    GasParams::default()
}

/// Both invariants rise through a tanh ramp on a resting background: a pure
/// rarefaction spreading into a slowly thinning gas.
pub fn iso_rarefaction() -> RunConfig {
    let gas = iso_gas();
    let bg = to_riemann_iso(0.1, 0.0, &gas).expect("admissible background");
    let a = 0.2 * (bg.z - bg.w);
    let ramp = |base: f64| Profile::TanhRamp {
        left: base - a,
        right: base + a,
        center: 0.0,
        width: 2.0,
    };
    RunConfig {
        mode: Mode::Simulate,
        law: LawKind::Isentropic,
        gas,
        grid: Grid {
            x_min: -60.0,
            x_max: 60.0,
            cells: 4096,
            boundary: Boundary::Outflow,
        },
        time: RunSettings {
            t_end: 50.0,
            cfl: 0.4,
            output_interval: 0.5,
            max_steps: 10_000_000,
        },
        initial: InitialSpec::Invariants {
            w: ramp(bg.w),
            z: ramp(bg.z),
            s: Profile::Constant { value: 0.0 },
        },
        preset: Some(PresetInfo {
            name: "iso-rarefaction".into(),
            details: Value::Null,
        }),
        ..RunConfig::default()
    }
}

/// A 1-simple wave whose characteristic speed is a smoothed triangle wave:
/// on the falling flank the speed is linear in x, so every characteristic
/// there focuses at the same time 1/slope.
pub fn iso_compression() -> RunConfig {
    let t_star = 1.0 / COMPRESSION_SLOPE;
    RunConfig {
        mode: Mode::Simulate,
        law: LawKind::Isentropic,
        gas: iso_gas(),
        grid: Grid {
            x_min: 0.0,
            x_max: 4.0,
            cells: 4096,
            boundary: Boundary::Periodic,
        },
        time: RunSettings {
            t_end: 1.1 * t_star,
            cfl: 0.4,
            output_interval: t_star / 200.0,
            max_steps: 10_000_000,
        },
        initial: InitialSpec::SimpleWave {
            family: 1,
            rho: 0.1,
            u: 0.0,
            speed: Profile::SmoothTriangle {
                base: 0.0,
                slope: -COMPRESSION_SLOPE,
                wavelength: 4.0,
                sharpness: 6.0,
                phase: 0.0,
            },
        },
        outputs: OutputConfig {
            field_stride: 20,
            ..OutputConfig::default()
        },
        preset: Some(PresetInfo {
            name: "iso-compression".into(),
            details: serde_json::json!({ "focusing_time": t_star }),
        }),
        ..RunConfig::default()
    }
}

/// Width of the compression ramp at unit steepness.
pub const NONISO_WIDTH: f64 = 2.0;

/// Non-isentropic family: an entropy bump at x = −4 and, where S is flat, a
/// compressive ramp in w of fixed height whose width is NONISO_WIDTH/s. Only
/// the ramp steepness varies with s, so every bound entering N1 and N2 stays
/// the same across the family.
pub fn noniso_family(gas: &GasParams, s: f64) -> Result<InitialSpec> {
    let law = LawKind::Polytropic.boxed(*gas);
    let bg = to_riemann_law(law.as_ref(), 0.1, 0.0, 0.0)?;
    Ok(InitialSpec::Invariants {
        w: Profile::SmoothStep {
            left: bg.w + 0.1,
            right: bg.w - 0.1,
            center: 4.0,
            width: NONISO_WIDTH / s,
        },
        z: Profile::Constant { value: bg.z },
        s: Profile::GaussianBump {
            base: 0.0,
            amplitude: 0.3,
            center: -4.0,
            width: 1.0,
        },
    })
}

fn noniso_base(name: &str, s: f64, details: Value) -> Result<RunConfig> {
    let gas = GasParams::default();
    Ok(RunConfig {
        mode: Mode::Criteria,
        law: LawKind::Polytropic,
        grid: Grid {
            x_min: -10.0,
            x_max: 10.0,
            cells: 512,
            boundary: Boundary::Outflow,
        },
        time: RunSettings {
            t_end: 2.0,
            cfl: 0.4,
            output_interval: 0.05,
            max_steps: 10_000_000,
        },
        initial: noniso_family(&gas, s)?,
        gas,
        preset: Some(PresetInfo {
            name: name.into(),
            details,
        }),
        ..RunConfig::default()
    })
}

pub fn noniso_weak() -> Result<RunConfig> {
    noniso_base("noniso-weak", 1.0, serde_json::json!({ "steepness": 1.0 }))
}

/// Locate the steepness where the family's verdict flips to "blow-up
/// guaranteed" (relative bracket `rel_tol`).
pub fn noniso_flip(cfg: &RunConfig, ctx: &mut NonisoContext, rel_tol: f64) -> Result<FlipSearch> {
    let family = |s: f64| -> Result<InitialData> {
        let spec = noniso_family(&cfg.gas, s)?;
        InitialData::from_spec(
            &spec,
            &cfg.grid,
            cfg.criteria.data_refinement,
            cfg.law,
            cfg.gas,
        )
    };
    let mut hi = 2.0;
    loop {
        let v = ctx.classify(&family(hi)?)?.noniso.map(|n| n.verdict);
        if v == Some(NonisoVerdict::BlowupGuaranteed) {
            break;
        }
        if v != Some(NonisoVerdict::Inconclusive) || hi > 1e3 {
            return Err(Error::validation(
                "compression family never reaches the blow-up threshold",
            ));
        }
        hi *= 2.0;
    }
    verdict_flip_bisection(family, ctx, 1.0, hi, rel_tol)
}

/// The family at 1.25 times the flip steepness.
pub fn noniso_strong() -> Result<RunConfig> {
    let weak = noniso_weak()?;
    let mut ctx = NonisoContext::new(weak.criteria.noniso());
    let flip = noniso_flip(&weak, &mut ctx, 1e-4)?;
    let s = 1.25 * flip.s_star;
    noniso_base(
        "noniso-strong",
        s,
        serde_json::json!({ "steepness": s, "flip": flip }),
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn overrides_merge_and_report_paths() {
        let c = RunConfig::resolve(
            Some("iso-compression"),
            None,
            &["grid.cells=512".into(), "mode=criteria".into()],
        )
        .unwrap();
        assert_eq!(c.grid.cells, 512);
        assert_eq!(c.mode, Mode::Criteria);
        assert!(matches!(c.initial, InitialSpec::SimpleWave { .. }));
        let e = RunConfig::resolve(None, None, &["grid.cels=512".into()]).unwrap_err();
        assert!(e.to_string().contains("grid"), "{e}");
        let e = RunConfig::resolve(None, None, &["grid.cells=\"many\"".into()]).unwrap_err();
        assert!(e.to_string().contains("grid.cells"), "{e}");
        assert!(RunConfig::resolve(Some("nope"), None, &[]).is_err());
    }

    #[test]
    fn tagged_override_replaces_the_profile() {
        let file = serde_json::json!({
            "initial": { "kind": "primitive",
                "rho": { "family": "sine", "base": 0.2, "amplitude": 0.05, "wavelength": 1.0 },
                "u": { "family": "constant", "value": 0.0 },
                "S": { "family": "constant", "value": 0.0 } }
        });
        let c = RunConfig::resolve(Some("iso-compression"), Some(file), &[]).unwrap();
        assert!(matches!(c.initial, InitialSpec::Primitive { .. }));
    }

    #[test]
    fn defaults_round_trip() {
        let c = RunConfig::default();
        assert_eq!(RunConfig::from_value(c.to_value()).unwrap(), c);
        let r = iso_rarefaction();
        r.validate().unwrap();
        assert_eq!(RunConfig::from_value(r.to_value()).unwrap(), r);
    }
}
