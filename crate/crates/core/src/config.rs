//! Experiment configuration: a flat TOML format with one section per
//! concern, plus the built-in driver-shape catalog shared by the
//! finite-dimensional and field experiments.

use serde::{Deserialize, Serialize};

use crate::drivers::{Mark, MarkSpace};
use crate::error::{Error, Result};
use crate::field::{FieldDrivers, FieldMode};
use crate::rng::path_rng;
use crate::semimartingale::DriverFD;
use rand::Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentKind {
    FdIto,
    LpItoThm21,
    LpItoThm22,
    MollifierStudy,
    Fubini,
    AprioriSweep,
}

impl ExperimentKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            ExperimentKind::FdIto => "fd_ito",
            ExperimentKind::LpItoThm21 => "lp_ito_thm21",
            ExperimentKind::LpItoThm22 => "lp_ito_thm22",
            ExperimentKind::MollifierStudy => "mollifier_study",
            ExperimentKind::Fubini => "fubini",
            ExperimentKind::AprioriSweep => "apriori_sweep",
        }
    }
}

fn default_one() -> f64 {
    1.0
}
fn default_m() -> usize {
    1
}
fn default_amplitude() -> f64 {
    1.0
}
fn default_radius() -> f64 {
    0.5
}
fn default_frequency() -> f64 {
    1.0
}
fn default_tolerance() -> f64 {
    1e-6
}
fn default_eps_multiples() -> Vec<f64> {
    vec![8.0, 4.0, 2.0]
}

/// One entry of the built-in driver-shape catalog.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct DriverSpec {
    /// One of: constant, bump, ramp, sinusoid, randomized.
    pub id: String,
    #[serde(default = "default_amplitude")]
    pub amplitude: f64,
    /// Support radius of the shape (spatial kinds) or time scale (fd kinds).
    #[serde(default = "default_radius")]
    pub radius: f64,
    #[serde(default)]
    pub center: f64,
    #[serde(default = "default_frequency")]
    pub frequency: f64,
    /// Multiplies the value by `(1 + time_slope * t)`.
    #[serde(default)]
    pub time_slope: f64,
    /// For jump amplitudes: flip the sign with the mark's parity.
    #[serde(default)]
    pub mark_sign_flip: bool,
    /// For jump amplitudes: scale by the mark's value.
    #[serde(default)]
    pub mark_scale: bool,
    /// Extra seed for the randomized-coefficient shape.
    #[serde(default)]
    pub seed_offset: u64,
}

impl DriverSpec {
    pub fn constant(amplitude: f64) -> Self {
        DriverSpec {
            id: "constant".into(),
            amplitude,
            radius: default_radius(),
            center: 0.0,
            frequency: 1.0,
            time_slope: 0.0,
            mark_sign_flip: false,
            mark_scale: false,
            seed_offset: 0,
        }
    }

    fn coefficients(&self) -> [f64; 3] {
        let mut rng = path_rng(0x6d6f_6c6c ^ self.seed_offset, 0);
        [rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)]
    }

    /// Compactly supported spatial profile; distances measured from
    /// `(center, 0, ..., 0)` with support radius `radius`.
    pub fn shape(&self, x: &[f64]) -> Result<f64> {
        let mut q = 0.0;
        for (a, &xi) in x.iter().enumerate() {
            let d = if a == 0 { xi - self.center } else { xi };
            q += (d / self.radius) * (d / self.radius);
        }
        let window = if q >= 1.0 { 0.0 } else { (1.0 - 1.0 / (1.0 - q)).exp() };
        let x1 = x[0] - self.center;
        Ok(match self.id.as_str() {
            "constant" => {
                if q < 1.0 {
                    1.0
                } else {
                    0.0
                }
            }
            "bump" => window,
            "ramp" => (1.0 - q.sqrt()).max(0.0),
            "sinusoid" => (2.0 * std::f64::consts::PI * self.frequency * x1).sin() * window,
            "randomized" => {
                let c = self.coefficients();
                let mut s = 0.0;
                for (j, cj) in c.iter().enumerate() {
                    s += cj
                        * ((j + 1) as f64 * std::f64::consts::PI * x1 / self.radius).sin();
                }
                s * window
            }
            other => return Err(Error::config(format!("unknown driver id '{other}'"))),
        })
    }

    /// Scalar time profile for finite-dimensional experiments.
    pub fn time_value(&self, t: f64) -> Result<f64> {
        let base = match self.id.as_str() {
            "constant" => 1.0,
            "ramp" => t,
            "sinusoid" => (2.0 * std::f64::consts::PI * self.frequency * t).sin(),
            "bump" => {
                let q = ((t - self.center) / self.radius).powi(2);
                if q >= 1.0 {
                    0.0
                } else {
                    (1.0 - 1.0 / (1.0 - q)).exp()
                }
            }
            "randomized" => self.coefficients()[0],
            other => return Err(Error::config(format!("unknown driver id '{other}'"))),
        };
        Ok(self.amplitude * base * (1.0 + self.time_slope * t))
    }

    pub fn space_time_value(&self, t: f64, x: &[f64]) -> Result<f64> {
        Ok(self.amplitude * self.shape(x)? * (1.0 + self.time_slope * t))
    }

    fn mark_factor(&self, z: &Mark) -> f64 {
        let mut factor = 1.0;
        if self.mark_sign_flip {
            factor *= match z {
                Mark::Index(i) => {
                    if i % 2 == 0 {
                        1.0
                    } else {
                        -1.0
                    }
                }
                Mark::Point(p) => {
                    if p[0] >= 0.0 {
                        1.0
                    } else {
                        -1.0
                    }
                }
            };
        }
        if self.mark_scale {
            factor *= match z {
                Mark::Index(i) => (*i + 1) as f64,
                Mark::Point(p) => p[0],
            };
        }
        factor
    }

    pub fn validate(&self) -> Result<()> {
        self.shape(&[0.0]).map(|_| ())?;
        if !(self.radius.is_finite() && self.radius > 0.0) {
            return Err(Error::config(format!("driver '{}': radius must be positive", self.id)));
        }
        if !self.amplitude.is_finite() {
            return Err(Error::config(format!("driver '{}': amplitude must be finite", self.id)));
        }
        Ok(())
    }
}

/// One catalog row for `list-drivers`.
pub struct CatalogEntry {
    pub id: &'static str,
    pub summary: &'static str,
    pub parameters: &'static str,
}

pub fn driver_catalog() -> Vec<CatalogEntry> {
    vec![
        CatalogEntry {
            id: "constant",
            summary: "indicator of the ball |x - center| < radius (constant in time experiments: 1)",
            parameters: "amplitude, radius, center, time_slope",
        },
        CatalogEntry {
            id: "bump",
            summary: "smooth bump exp(-1/(1-q)) supported on |x - center| < radius",
            parameters: "amplitude, radius, center, time_slope",
        },
        CatalogEntry {
            id: "ramp",
            summary: "tent profile 1 - |x - center|/radius, clipped at 0 (time: t)",
            parameters: "amplitude, radius, center, time_slope",
        },
        CatalogEntry {
            id: "sinusoid",
            summary: "sin(2 pi frequency (x1 - center)) windowed by the bump",
            parameters: "amplitude, radius, center, frequency, time_slope",
        },
        CatalogEntry {
            id: "randomized",
            summary: "3-mode random Fourier profile with seed-derived coefficients",
            parameters: "amplitude, radius, center, seed_offset, time_slope",
        },
    ]
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(rename_all = "snake_case")]
pub struct MarkSpaceSpec {
    /// One of: finite_uniform, finite, box.
    pub kind: String,
    #[serde(default)]
    pub n_marks: usize,
    #[serde(default)]
    pub lambda: f64,
    #[serde(default)]
    pub probs: Vec<f64>,
    #[serde(default)]
    pub bounds: Vec<(f64, f64)>,
    #[serde(default)]
    pub resolution: usize,
}

impl MarkSpaceSpec {
    pub fn build(&self) -> Result<MarkSpace> {
        match self.kind.as_str() {
            "finite_uniform" => MarkSpace::finite_uniform(self.n_marks.max(1), self.lambda),
            "finite" => MarkSpace::finite_set(self.probs.clone(), self.lambda),
            "box" => MarkSpace::boxed(self.bounds.clone(), self.resolution, self.lambda),
            other => Err(Error::config(format!("mark_space.kind: unknown kind '{other}'"))),
        }
    }
}

impl Default for MarkSpaceSpec {
    fn default() -> Self {
        MarkSpaceSpec {
            kind: "finite_uniform".into(),
            n_marks: 1,
            lambda: 0.0,
            probs: Vec::new(),
            bounds: Vec::new(),
            resolution: 0,
        }
    }
}

/// Driver assignment per role. `g` has one spec per Wiener driver, `fi` one
/// per axis (second-theorem mode only).
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq, Default)]
pub struct DriversSpec {
    pub initial: Option<DriverSpec>,
    pub f0: Option<DriverSpec>,
    #[serde(default)]
    pub fi: Vec<DriverSpec>,
    #[serde(default)]
    pub g: Vec<DriverSpec>,
    pub h: Option<DriverSpec>,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq, Default)]
pub struct FubiniSpec {
    pub lambda_points: Vec<f64>,
    #[serde(default)]
    pub lambda_weights: Vec<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct ExperimentConfig {
    pub kind: ExperimentKind,
    #[serde(default = "default_one")]
    pub p: f64,
    #[serde(default = "default_m")]
    pub m: usize,
    #[serde(default = "default_m")]
    pub space_dim: usize,
    #[serde(default = "default_one")]
    pub horizon: f64,
    pub n_steps: usize,
    #[serde(default = "default_one")]
    pub half_width: f64,
    #[serde(default)]
    pub n_cells_axis: usize,
    #[serde(default)]
    pub n_wiener: usize,
    pub k_paths: u64,
    #[serde(default)]
    pub master_seed: u64,
    /// Evaluation time; defaults to the horizon.
    #[serde(default)]
    pub eval_time: Option<f64>,
    /// Relative residual tolerance for configured assertions.
    #[serde(default = "default_tolerance")]
    pub residual_tolerance: f64,
    #[serde(default = "default_eps_multiples")]
    pub mollifier_eps_multiples: Vec<f64>,
    #[serde(default)]
    pub mark_space: MarkSpaceSpec,
    #[serde(default)]
    pub drivers: DriversSpec,
    #[serde(default)]
    pub fubini: FubiniSpec,
    /// Worker threads for path-parallel stages; 0 = library default.
    #[serde(default)]
    pub n_workers: usize,
}

impl ExperimentConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig =
            toml::from_str(text).map_err(|e| Error::config(format!("config parse error: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_path(path: &std::path::Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_toml_str(&text)
    }

    pub fn needs_field(&self) -> bool {
        matches!(
            self.kind,
            ExperimentKind::LpItoThm21
                | ExperimentKind::LpItoThm22
                | ExperimentKind::MollifierStudy
                | ExperimentKind::AprioriSweep
        )
    }

    pub fn field_mode(&self) -> FieldMode {
        match self.kind {
            ExperimentKind::LpItoThm22 | ExperimentKind::AprioriSweep => FieldMode::Thm22,
            _ => FieldMode::Thm21,
        }
    }

    pub fn eval_time(&self) -> f64 {
        self.eval_time.unwrap_or(self.horizon)
    }

    pub fn validate(&self) -> Result<()> {
        if self.kind != ExperimentKind::Fubini && !(self.p.is_finite() && self.p >= 2.0) {
            return Err(Error::config(format!("p: must be >= 2, got {}", self.p)));
        }
        if !(self.horizon.is_finite() && self.horizon > 0.0) {
            return Err(Error::config(format!("horizon: must be positive, got {}", self.horizon)));
        }
        if self.n_steps == 0 {
            return Err(Error::config("n_steps: must be positive"));
        }
        if self.k_paths == 0 {
            return Err(Error::config("k_paths: must be positive"));
        }
        if !(self.residual_tolerance.is_finite() && self.residual_tolerance > 0.0) {
            return Err(Error::config(format!(
                "residual_tolerance: must be positive, got {}",
                self.residual_tolerance
            )));
        }
        if self.field_mode() == FieldMode::Thm22 && self.needs_field() && self.m != 1 {
            return Err(Error::config(format!(
                "m: second-theorem experiments require m = 1, got {}",
                self.m
            )));
        }
        if self.needs_field() {
            if self.n_cells_axis < 4 {
                return Err(Error::config(format!(
                    "n_cells_axis: need at least 4 cells per axis, got {}",
                    self.n_cells_axis
                )));
            }
            if self.space_dim == 0 || self.space_dim > 3 {
                return Err(Error::config(format!(
                    "space_dim: must be 1..3, got {}",
                    self.space_dim
                )));
            }
        }
        if let Some(t) = self.eval_time {
            if !(t > 0.0 && t <= self.horizon) {
                return Err(Error::config(format!(
                    "eval_time: must lie in (0, horizon], got {t}"
                )));
            }
        }
        for (role, spec) in self.driver_specs() {
            spec.validate()
                .map_err(|e| Error::config(format!("drivers.{role}: {e}")))?;
        }
        if self.kind == ExperimentKind::Fubini && self.fubini.lambda_points.is_empty() {
            return Err(Error::config("fubini.lambda_points: must be nonempty"));
        }
        if !self.fubini.lambda_weights.is_empty()
            && self.fubini.lambda_weights.len() != self.fubini.lambda_points.len()
        {
            return Err(Error::config(
                "fubini.lambda_weights: length must match fubini.lambda_points",
            ));
        }
        self.mark_space.build()?;
        Ok(())
    }

    fn driver_specs(&self) -> Vec<(String, &DriverSpec)> {
        let mut out = Vec::new();
        if let Some(s) = &self.drivers.initial {
            out.push(("initial".to_string(), s));
        }
        if let Some(s) = &self.drivers.f0 {
            out.push(("f0".to_string(), s));
        }
        for (i, s) in self.drivers.fi.iter().enumerate() {
            out.push((format!("fi[{i}]"), s));
        }
        for (i, s) in self.drivers.g.iter().enumerate() {
            out.push((format!("g[{i}]"), s));
        }
        if let Some(s) = &self.drivers.h {
            out.push(("h".to_string(), s));
        }
        out
    }

    /// Materialize finite-dimensional drivers (components share the spec's
    /// time profile; component i is scaled by `1/(i+1)` so M > 1 states are
    /// not colinear).
    pub fn build_driver_fd(&self) -> Result<DriverFD> {
        let m = self.m;
        let rw = self.n_wiener;
        let mut d = DriverFD::zero(m, rw);
        if let Some(spec) = self.drivers.f0.clone() {
            d.drift = Box::new(move |t| {
                let v = spec.time_value(t).unwrap_or(0.0);
                (0..m).map(|i| v / (i + 1) as f64).collect()
            });
        }
        if !self.drivers.g.is_empty() {
            if self.drivers.g.len() != rw {
                return Err(Error::config(format!(
                    "drivers.g: expected one spec per wiener driver ({rw}), got {}",
                    self.drivers.g.len()
                )));
            }
            let specs: Vec<DriverSpec> = self.drivers.g.clone();
            d.diffusion = Box::new(move |t| {
                (0..m)
                    .map(|i| {
                        specs
                            .iter()
                            .map(|s| s.time_value(t).unwrap_or(0.0) / (i + 1) as f64)
                            .collect()
                    })
                    .collect()
            });
        }
        if let Some(spec) = self.drivers.h.clone() {
            d.jump = Box::new(move |t, z| {
                let v = spec.time_value(t).unwrap_or(0.0) * spec.mark_factor(z);
                (0..m).map(|i| v / (i + 1) as f64).collect()
            });
        }
        Ok(d)
    }

    /// Materialize field drivers from the specs.
    pub fn build_field_drivers(&self) -> Result<FieldDrivers> {
        let m = self.m;
        let rw = self.n_wiener;
        let mode = self.field_mode();
        if mode == FieldMode::Thm22 && self.drivers.fi.len() != self.space_dim {
            return Err(Error::config(format!(
                "drivers.fi: second-theorem experiments need one spec per axis ({}), got {}",
                self.space_dim,
                self.drivers.fi.len()
            )));
        }
        let mut d = FieldDrivers::zero(m, rw, mode);
        if let Some(spec) = self.drivers.initial.clone() {
            d.initial = Box::new(move |x| {
                let v = spec.space_time_value(0.0, x).unwrap_or(0.0);
                (0..m).map(|i| v / (i + 1) as f64).collect()
            });
        }
        if let Some(spec) = self.drivers.f0.clone() {
            d.f0 = Box::new(move |t, x| {
                let v = spec.space_time_value(t, x).unwrap_or(0.0);
                (0..m).map(|i| v / (i + 1) as f64).collect()
            });
        }
        d.fi = self
            .drivers
            .fi
            .iter()
            .cloned()
            .map(|spec| {
                Box::new(move |t: f64, x: &[f64]| spec.space_time_value(t, x).unwrap_or(0.0))
                    as Box<dyn Fn(f64, &[f64]) -> f64 + Sync>
            })
            .collect();
        if !self.drivers.g.is_empty() {
            if self.drivers.g.len() != rw {
                return Err(Error::config(format!(
                    "drivers.g: expected one spec per wiener driver ({rw}), got {}",
                    self.drivers.g.len()
                )));
            }
            let specs: Vec<DriverSpec> = self.drivers.g.clone();
            d.g = Box::new(move |t, x| {
                (0..m)
                    .map(|i| {
                        specs
                            .iter()
                            .map(|s| s.space_time_value(t, x).unwrap_or(0.0) / (i + 1) as f64)
                            .collect()
                    })
                    .collect()
            });
        }
        if let Some(spec) = self.drivers.h.clone() {
            d.h = Box::new(move |t, x, z| {
                let v = spec.space_time_value(t, x).unwrap_or(0.0) * spec.mark_factor(z);
                (0..m).map(|i| v / (i + 1) as f64).collect()
            });
        }
        d.validate()?;
        Ok(d)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
kind = "fd_ito"
p = 2.0
n_steps = 16
k_paths = 4
"#;

    #[test]
    fn minimal_config_parses() {
        let cfg = ExperimentConfig::from_toml_str(MINIMAL).unwrap();
        assert_eq!(cfg.kind, ExperimentKind::FdIto);
        assert_eq!(cfg.eval_time(), 1.0);
    }

    #[test]
    fn rejects_small_p_naming_field() {
        let text = MINIMAL.replace("p = 2.0", "p = 1.5");
        let err = ExperimentConfig::from_toml_str(&text).unwrap_err().to_string();
        assert!(err.contains("p:"), "{err}");
    }

    #[test]
    fn rejects_thm22_with_m2() {
        let text = r#"
kind = "lp_ito_thm22"
p = 2.0
m = 2
n_steps = 8
n_cells_axis = 8
k_paths = 1
"#;
        let err = ExperimentConfig::from_toml_str(text).unwrap_err().to_string();
        assert!(err.contains("m:"), "{err}");
    }

    #[test]
    fn rejects_unknown_driver_id() {
        let text = format!(
            "{MINIMAL}\n[drivers.f0]\nid = \"warp\"\n"
        );
        let err = ExperimentConfig::from_toml_str(&text).unwrap_err().to_string();
        assert!(err.contains("warp"), "{err}");
    }

    #[test]
    fn rejects_bad_tolerance() {
        let text = format!("{MINIMAL}\nresidual_tolerance = -1.0\n");
        let err = ExperimentConfig::from_toml_str(&text).unwrap_err().to_string();
        assert!(err.contains("residual_tolerance"), "{err}");
    }

    #[test]
    fn catalog_ids_round_trip_through_config() {
        for entry in driver_catalog() {
            let text = format!(
                "{MINIMAL}\n[drivers.f0]\nid = \"{}\"\namplitude = 0.5\n",
                entry.id
            );
            let cfg = ExperimentConfig::from_toml_str(&text).unwrap();
            assert_eq!(cfg.drivers.f0.as_ref().unwrap().id, entry.id);
            cfg.build_driver_fd().unwrap();
        }
        assert!(driver_catalog().len() >= 5);
    }

    #[test]
    fn driver_shapes_have_compact_support() {
        for entry in driver_catalog() {
            let spec = DriverSpec { id: entry.id.into(), ..DriverSpec::constant(1.0) };
            assert_eq!(spec.shape(&[0.9]).unwrap(), 0.0, "{} leaks outside", entry.id);
            assert_eq!(spec.shape(&[-2.0]).unwrap(), 0.0);
        }
    }

    #[test]
    fn randomized_driver_is_seed_deterministic() {
        let a = DriverSpec { id: "randomized".into(), seed_offset: 7, ..DriverSpec::constant(1.0) };
        let b = a.clone();
        assert_eq!(a.shape(&[0.2]).unwrap(), b.shape(&[0.2]).unwrap());
        let c = DriverSpec { seed_offset: 8, ..a.clone() };
        assert_ne!(a.shape(&[0.2]).unwrap(), c.shape(&[0.2]).unwrap());
    }

    #[test]
    fn config_serializes_back_to_toml() {
        let cfg = ExperimentConfig::from_toml_str(MINIMAL).unwrap();
        let text = toml::to_string(&cfg).unwrap();
        let back = ExperimentConfig::from_toml_str(&text).unwrap();
        assert_eq!(cfg, back);
    }
}
