//! Analytic initial profiles, CSV input, and their sampling on a grid.

use crate::eos::{Barotropic, GasParams, Polytropic, PressureLaw};
use crate::error::{Error, Result};
use crate::isentropic::{
    admissible_gap, eigenvalues_from_invariants, from_riemann_iso, to_riemann_iso, RiemannPairIso,
};
use crate::nonisentropic::{from_riemann_law, RiemannTriple};
use crate::numerics::quad::{gauss_kronrod, QuadSettings};
use crate::numerics::roots::brent;
use crate::solver::{Grid, Primitive};
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use std::path::{Path, PathBuf};
use std::sync::Arc;

/// Which pressure law drives a run.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LawKind {
    /// P = k²ρ^γ, entropy ignored.
    #[default]
    Isentropic,
    /// The implicit polytropic law with entropy.
    Polytropic,
}

impl LawKind {
    pub fn build(self, params: GasParams) -> Arc<dyn PressureLaw> {
        match self {
            LawKind::Isentropic => Arc::new(Barotropic::new(params)),
            LawKind::Polytropic => Arc::new(Polytropic::new(params)),
        }
    }

    pub fn boxed(self, params: GasParams) -> Box<dyn PressureLaw> {
        match self {
            LawKind::Isentropic => Box::new(Barotropic::new(params)),
            LawKind::Polytropic => Box::new(Polytropic::new(params)),
        }
    }
}

/// Scalar profile families.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "kebab-case", deny_unknown_fields)]
pub enum Profile {
    Constant {
        value: f64,
    },
    GaussianBump {
        base: f64,
        amplitude: f64,
        center: f64,
        width: f64,
    },
    TanhRamp {
        left: f64,
        right: f64,
        center: f64,
        width: f64,
    },
    /// C³ step with exact plateaus outside center ± width/2.
    SmoothStep {
        left: f64,
        right: f64,
        center: f64,
        width: f64,
    },
    Sine {
        base: f64,
        amplitude: f64,
        wavelength: f64,
        #[serde(default)]
        phase: f64,
    },
    /// Periodic ramps of slope ±`slope` with corners rounded by `sharpness`
    /// (the derivative is slope·tanh(β cos θ)/tanh β).
    SmoothTriangle {
        base: f64,
        slope: f64,
        wavelength: f64,
        sharpness: f64,
        #[serde(default)]
        phase: f64,
    },
}

fn smooth_step_unit(t: f64) -> f64 {
    let t = t.clamp(0.0, 1.0);
    t.powi(4) * (35.0 - 84.0 * t + 70.0 * t * t - 20.0 * t.powi(3))
}

/// ∫₀^θ tanh(β cos t)/tanh β dt, periodic and odd in θ.
fn triangle_primitive(theta: f64, beta: f64) -> Result<f64> {
    let th = theta.rem_euclid(2.0 * PI);
    let norm = beta.tanh();
    let q = gauss_kronrod(
        |t| (beta * t.cos()).tanh() / norm,
        0.0,
        th,
        QuadSettings::tight(),
    )?;
    Ok(q.value)
}

impl Profile {
    pub fn validate(&self) -> Result<()> {
        let positive = |name: &str, v: f64| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(Error::validation(format!(
                    "profile {name} must be positive, got {v}"
                )))
            }
        };
        match *self {
            Profile::Constant { .. } => Ok(()),
            Profile::GaussianBump { width, .. }
            | Profile::TanhRamp { width, .. }
            | Profile::SmoothStep { width, .. } => positive("width", width),
            Profile::Sine { wavelength, .. } => positive("wavelength", wavelength),
            Profile::SmoothTriangle {
                wavelength,
                sharpness,
                ..
            } => {
                positive("wavelength", wavelength)?;
                positive("sharpness", sharpness)
            }
        }
    }

    pub fn value(&self, x: f64) -> Result<f64> {
        Ok(match *self {
            Profile::Constant { value } => value,
            Profile::GaussianBump {
                base,
                amplitude,
                center,
                width,
            } => base + amplitude * (-((x - center) / width).powi(2)).exp(),
            Profile::TanhRamp {
                left,
                right,
                center,
                width,
            } => left + 0.5 * (right - left) * (1.0 + ((x - center) / width).tanh()),
            Profile::SmoothStep {
                left,
                right,
                center,
                width,
            } => left + (right - left) * smooth_step_unit((x - center) / width + 0.5),
            Profile::Sine {
                base,
                amplitude,
                wavelength,
                phase,
            } => base + amplitude * (2.0 * PI * (x - phase) / wavelength).sin(),
            Profile::SmoothTriangle {
                base,
                slope,
                wavelength,
                sharpness,
                phase,
            } => {
                let k = 2.0 * PI / wavelength;
                base + slope / k * triangle_primitive(k * (x - phase), sharpness)?
            }
        })
    }
}

/// How the initial state is specified.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum InitialSpec {
    Primitive {
        rho: Profile,
        u: Profile,
        #[serde(rename = "S")]
        s: Profile,
    },
    /// Riemann variables (w, z) and entropy.
    Invariants {
        w: Profile,
        z: Profile,
        #[serde(rename = "S")]
        s: Profile,
    },
    /// Isentropic simple wave on a constant background (ρ, u): the family's
    /// characteristic speed is its background value plus `speed`, the other
    /// invariant is constant.
    SimpleWave {
        family: u8,
        rho: f64,
        u: f64,
        speed: Profile,
    },
    /// Columns x, rho, u, S on a uniform grid.
    Csv { path: PathBuf },
}

/// Uniformly spaced samples read from CSV.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SampledProfile {
    pub x: Vec<f64>,
    pub rho: Vec<f64>,
    pub u: Vec<f64>,
    pub s: Vec<f64>,
}

#[derive(Deserialize)]
struct CsvRow {
    x: f64,
    rho: f64,
    u: f64,
    #[serde(rename = "S")]
    s: f64,
}

pub fn load_csv(path: &Path) -> Result<SampledProfile> {
    let mut rdr = csv::Reader::from_path(path).map_err(|e| {
        Error::validation(format!("cannot read initial data {}: {e}", path.display()))
    })?;
    let mut out = SampledProfile::default();
    for (i, row) in rdr.deserialize::<CsvRow>().enumerate() {
        let r =
            row.map_err(|e| Error::validation(format!("{} row {}: {e}", path.display(), i + 1)))?;
        out.x.push(r.x);
        out.rho.push(r.rho);
        out.u.push(r.u);
        out.s.push(r.s);
    }
    if out.x.len() < 6 {
        return Err(Error::validation(format!(
            "{} holds fewer than six samples",
            path.display()
        )));
    }
    check_uniform(&out.x)?;
    Ok(out)
}

pub(crate) fn check_uniform(x: &[f64]) -> Result<f64> {
    let dx = (x[x.len() - 1] - x[0]) / (x.len() - 1) as f64;
    if !(dx > 0.0) {
        return Err(Error::validation("sample points must increase"));
    }
    for (i, p) in x.windows(2).enumerate() {
        if ((p[1] - p[0]) - dx).abs() > 1e-6 * dx {
            return Err(Error::validation(format!(
                "sample spacing is not uniform near index {i}"
            )));
        }
    }
    Ok(dx)
}

fn lerp_at(xs: &[f64], ys: &[f64], x: f64) -> f64 {
    let k = xs.partition_point(|&v| v <= x).clamp(1, xs.len() - 1);
    let th = ((x - xs[k - 1]) / (xs[k] - xs[k - 1])).clamp(0.0, 1.0);
    ys[k - 1] + th * (ys[k] - ys[k - 1])
}

fn simple_wave(
    family: u8,
    rho: f64,
    u: f64,
    speed: &Profile,
    xs: &[f64],
    params: &GasParams,
) -> Result<Vec<Primitive>> {
    if family != 1 && family != 2 {
        return Err(Error::validation(format!(
            "simple-wave family must be 1 or 2, got {family}"
        )));
    }
    let bg = to_riemann_iso(rho, u, params)?;
    let gap = admissible_gap(params);
    let lam = |v: f64| {
        if family == 1 {
            eigenvalues_from_invariants(RiemannPairIso::new(v, bg.z), params).0
        } else {
            eigenvalues_from_invariants(RiemannPairIso::new(bg.w, v), params).1
        }
    };
    // The varying invariant ranges over the admissible interval where the
    // family speed is strictly increasing.
    let (lo, hi) = if family == 1 {
        (bg.z - gap * (1.0 - 1e-12), bg.z)
    } else {
        (bg.w, bg.w + gap * (1.0 - 1e-12))
    };
    let base = if family == 1 { lam(bg.w) } else { lam(bg.z) };
    xs.iter()
        .map(|&x| {
            let target = base + speed.value(x)?;
            let v = brent(|v| lam(v) - target, lo, hi, 1e-15, 200).map_err(|_| {
                Error::validation(format!(
                    "simple-wave speed {target} at x = {x} is not attainable"
                ))
            })?;
            let pair = if family == 1 {
                RiemannPairIso::new(v, bg.z)
            } else {
                RiemannPairIso::new(bg.w, v)
            };
            let (r, u) = from_riemann_iso(pair, params)?;
            Ok(Primitive::new(r, u, 0.0))
        })
        .collect()
}

impl InitialSpec {
    pub fn validate(&self, law: LawKind) -> Result<()> {
        match self {
            InitialSpec::Primitive { rho, u, s } | InitialSpec::Invariants { w: rho, z: u, s } => {
                rho.validate()?;
                u.validate()?;
                s.validate()
            }
            InitialSpec::SimpleWave { speed, .. } => {
                if law != LawKind::Isentropic {
                    return Err(Error::validation(
                        "simple-wave initial data needs the isentropic law",
                    ));
                }
                speed.validate()
            }
            InitialSpec::Csv { .. } => Ok(()),
        }
    }

    /// Primitive state at each point.
    pub fn sample(&self, xs: &[f64], law: &dyn PressureLaw) -> Result<Vec<Primitive>> {
        let params = law.params();
        let at = |x: f64, r: Result<Primitive>| {
            r.map_err(|e| Error::validation(format!("initial state at x = {x}: {e}")))
        };
        match self {
            InitialSpec::Primitive { rho, u, s } => xs
                .iter()
                .map(|&x| {
                    at(
                        x,
                        (|| Ok(Primitive::new(rho.value(x)?, u.value(x)?, s.value(x)?)))(),
                    )
                })
                .collect(),
            InitialSpec::Invariants { w, z, s } => xs
                .iter()
                .map(|&x| {
                    at(
                        x,
                        (|| {
                            let (w, z, s) = (w.value(x)?, z.value(x)?, s.value(x)?);
                            if law.is_barotropic() {
                                let (r, u) = from_riemann_iso(RiemannPairIso::new(w, z), params)?;
                                Ok(Primitive::new(r, u, s))
                            } else {
                                let (r, u, s) = from_riemann_law(law, RiemannTriple::new(w, z, s))?;
                                Ok(Primitive::new(r, u, s))
                            }
                        })(),
                    )
                })
                .collect(),
            InitialSpec::SimpleWave {
                family,
                rho,
                u,
                speed,
            } => simple_wave(*family, *rho, *u, speed, xs, params),
            InitialSpec::Csv { path } => {
                let d = load_csv(path)?;
                let (a, b) = (d.x[0], d.x[d.x.len() - 1]);
                xs.iter()
                    .map(|&x| {
                        if x < a - 1e-9 * (b - a) || x > b + 1e-9 * (b - a) {
                            return Err(Error::validation(format!(
                                "x = {x} lies outside the CSV range [{a}, {b}]"
                            )));
                        }
                        Ok(Primitive::new(
                            lerp_at(&d.x, &d.rho, x),
                            lerp_at(&d.x, &d.u, x),
                            lerp_at(&d.x, &d.s, x),
                        ))
                    })
                    .collect()
            }
        }
    }

    /// Sample points for derivative estimates: `refinement` points per solver
    /// cell for analytic data, the file's own points for CSV data (which must
    /// be at least twice as fine as the solver grid).
    pub fn data_points(
        &self,
        grid: &Grid,
        refinement: usize,
        law: &dyn PressureLaw,
    ) -> Result<(Vec<f64>, Vec<Primitive>)> {
        if refinement < 2 {
            return Err(Error::validation(format!(
                "initial data must be sampled at least twice as finely as the solver grid, got {refinement}"
            )));
        }
        if let InitialSpec::Csv { path } = self {
            let d = load_csv(path)?;
            if d.x.len() < 2 * grid.cells {
                return Err(Error::validation(format!(
                    "{} has {} samples; the solver grid of {} cells needs at least {}",
                    path.display(),
                    d.x.len(),
                    grid.cells,
                    2 * grid.cells
                )));
            }
            let prim = (0..d.x.len())
                .map(|i| Primitive::new(d.rho[i], d.u[i], d.s[i]))
                .collect();
            return Ok((d.x, prim));
        }
        let fine = Grid {
            cells: grid.cells * refinement,
            ..*grid
        };
        let xs = fine.centers();
        let prim = self.sample(&xs, law)?;
        Ok((xs, prim))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::diff;

    #[test]
    fn profile_values() {
        let g = Profile::GaussianBump {
            base: 1.0,
            amplitude: 2.0,
            center: 0.5,
            width: 0.1,
        };
        assert_eq!(g.value(0.5).unwrap(), 3.0);
        let s = Profile::SmoothStep {
            left: 1.0,
            right: -1.0,
            center: 0.0,
            width: 2.0,
        };
        assert_eq!(s.value(-1.0).unwrap(), 1.0);
        assert_eq!(s.value(5.0).unwrap(), -1.0);
        assert!(s.value(0.0).unwrap().abs() < 1e-15);
        let t = Profile::TanhRamp {
            left: 0.0,
            right: 2.0,
            center: 0.0,
            width: 1.0,
        };
        assert_eq!(t.value(0.0).unwrap(), 1.0);
    }

    #[test]
    fn smooth_triangle_slopes_and_period() {
        let p = Profile::SmoothTriangle {
            base: 0.0,
            slope: 0.3,
            wavelength: 4.0,
            sharpness: 5.0,
            phase: 0.0,
        };
        let v = |x: f64| p.value(x).unwrap();
        assert!((v(0.3) - v(4.3)).abs() < 1e-12);
        assert!((v(-0.7) + v(0.7)).abs() < 1e-12);
        // Flank centers: x = 0 (rising) and x = 2 (falling).
        let d = |x: f64| diff::richardson(v, x, 1e-3);
        assert!((d(0.0) - 0.3).abs() < 1e-9);
        assert!((d(2.0) + 0.3).abs() < 1e-9);
    }

    #[test]
    fn simple_wave_speed_is_prescribed() {
        let p = GasParams::new(2.0, 1.0, 1.0, 1.0, 0.0).unwrap();
        let law = Barotropic::new(p);
        let speed = Profile::Sine {
            base: 0.0,
            amplitude: 0.05,
            wavelength: 1.0,
            phase: 0.0,
        };
        let spec = InitialSpec::SimpleWave {
            family: 1,
            rho: 0.1,
            u: 0.0,
            speed: speed.clone(),
        };
        let xs = [0.0, 0.25, 0.6];
        let prim = spec.sample(&xs, &law).unwrap();
        let bg = to_riemann_iso(0.1, 0.0, &p).unwrap();
        let base = eigenvalues_from_invariants(bg, &p).0;
        for (x, q) in xs.iter().zip(&prim) {
            let pair = to_riemann_iso(q.rho, q.u, &p).unwrap();
            assert!((pair.z - bg.z).abs() < 1e-12);
            let l1 = eigenvalues_from_invariants(pair, &p).0;
            assert!((l1 - base - speed.value(*x).unwrap()).abs() < 1e-12);
        }
    }

    #[test]
    fn specs_round_trip_through_json() {
        let spec = InitialSpec::Invariants {
            w: Profile::Constant { value: -0.3 },
            z: Profile::Sine {
                base: 0.3,
                amplitude: 0.01,
                wavelength: 2.0,
                phase: 0.0,
            },
            s: Profile::Constant { value: 0.0 },
        };
        let js = serde_json::to_string(&spec).unwrap();
        assert_eq!(serde_json::from_str::<InitialSpec>(&js).unwrap(), spec);
        let bad = r#"{"kind":"primitive","rho":{"family":"constant","value":1,"typo":2},"u":{"family":"constant","value":0},"S":{"family":"constant","value":0}}"#;
        assert!(serde_json::from_str::<InitialSpec>(bad).is_err());
    }
}
