use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::models::{PhaseState, ThreeBodyParams, ToyParams};
use crate::stability::{Indicator, POSITIVITY_TOL};

/// Earth mass in solar masses.
pub const EARTH_MASS: f64 = 3.003_489e-6;

fn default_seed() -> u64 {
    0
}

fn default_out() -> PathBuf {
    PathBuf::from("out")
}

fn default_tol() -> f64 {
    POSITIVITY_TOL
}

/// A complete, reproducible experiment description.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    #[serde(flatten)]
    pub kind: ExperimentKind,
    #[serde(default = "default_seed")]
    pub rng_seed: u64,
    #[serde(default = "default_out")]
    pub output_dir: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ExperimentKind {
    ToyRun(ToyRunConfig),
    TodaSweep(TodaSweepConfig),
    TodaPoincare(TodaPoincareConfig),
    CelestialRun(CelestialConfig),
}

impl ExperimentKind {
    pub fn name(&self) -> &'static str {
        match self {
            ExperimentKind::ToyRun(_) => "toy_run",
            ExperimentKind::TodaSweep(_) => "toda_sweep",
            ExperimentKind::TodaPoincare(_) => "toda_poincare",
            ExperimentKind::CelestialRun(_) => "celestial_run",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ToyRunConfig {
    #[serde(flatten)]
    pub toy: ToyParams,
    pub step: f64,
    pub t_final: f64,
    pub xi0: [f64; 2],
    pub eta0: [f64; 2],
    pub tol: f64,
}

impl Default for ToyRunConfig {
    fn default() -> Self {
        Self {
            toy: ToyParams::new(5.0),
            step: 1e-3,
            t_final: 12.0,
            xi0: [1.0, 0.0],
            eta0: [0.0, 0.0],
            tol: POSITIVITY_TOL,
        }
    }
}

/// `steps` evenly spaced energies from `min` to `max` inclusive.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnergyGrid {
    pub min: f64,
    pub max: f64,
    pub steps: usize,
}

impl EnergyGrid {
    pub fn values(&self) -> Vec<f64> {
        match self.steps {
            0 => Vec::new(),
            1 => vec![self.min],
            n => {
                let d = (self.max - self.min) / (n - 1) as f64;
                (0..n).map(|i| self.min + i as f64 * d).collect()
            }
        }
    }
}

/// Energy sweep of the Toda system. Each ensemble member starts on the
/// section `x = 0`, `p_y = 0` with `y` uniform over the accessible range and
/// `p_x > 0` fixed by the energy.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TodaSweepConfig {
    pub energies: EnergyGrid,
    pub ensemble: usize,
    pub step: f64,
    pub t_final: f64,
    pub indicator: Indicator,
    pub tol: f64,
}

impl Default for TodaSweepConfig {
    fn default() -> Self {
        Self {
            energies: EnergyGrid {
                min: 0.18,
                max: 0.24,
                steps: 7,
            },
            ensemble: 16,
            step: 1e-3,
            t_final: 200.0,
            indicator: Indicator::Gem,
            tol: POSITIVITY_TOL,
        }
    }
}

/// Poincaré section (`x = 0`, `p_x > 0`) of several Toda orbits at one
/// energy, started at evenly spaced `y` on the same section with `p_y = 0`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TodaPoincareConfig {
    pub energy: f64,
    pub orbits: usize,
    pub step: f64,
    pub t_final: f64,
    pub max_points: usize,
    pub indicator: Indicator,
    pub tol: f64,
}

impl Default for TodaPoincareConfig {
    fn default() -> Self {
        Self {
            energy: 0.215,
            orbits: 8,
            step: 1e-3,
            t_final: 1000.0,
            max_points: 400,
            indicator: Indicator::Gem,
            tol: POSITIVITY_TOL,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CelestialModel {
    Kepler,
    #[serde(alias = "threebody")]
    ThreeBody,
}

impl std::str::FromStr for CelestialModel {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s.to_ascii_lowercase().as_str() {
            "kepler" => Ok(CelestialModel::Kepler),
            "threebody" | "three_body" | "three-body" => Ok(CelestialModel::ThreeBody),
            other => Err(format!(
                "unknown model '{other}' (expected kepler or threebody)"
            )),
        }
    }
}

/// Kepler or restricted three-body orbit started at periapsis of the ellipse
/// `(a, ecc)`, or from a raw `initial` state when given.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CelestialConfig {
    pub model: CelestialModel,
    pub a: f64,
    pub ecc: f64,
    pub m_e: f64,
    /// Perturber parameters; defaults to Jupiter on a circular 5.2 AU orbit.
    pub three_body: Option<ThreeBodyParams>,
    pub initial: Option<PhaseState>,
    /// Indicator driving the deviation; both spectra are always reported.
    pub indicator: Indicator,
    pub step: f64,
    /// Horizon in orbital periods of the `(a, ecc)` ellipse, unless
    /// `t_final` is set.
    pub periods: f64,
    pub t_final: Option<f64>,
    /// Write every n-th sample to the orbit and eigenvalue tables.
    pub output_stride: usize,
    pub tol: f64,
}

impl Default for CelestialConfig {
    fn default() -> Self {
        Self {
            model: CelestialModel::Kepler,
            a: 1.0,
            ecc: 0.9,
            m_e: EARTH_MASS,
            three_body: None,
            initial: None,
            indicator: Indicator::Gem,
            step: 5e-5,
            periods: 2.5,
            t_final: None,
            output_stride: 20,
            tol: default_tol(),
        }
    }
}

fn positive(name: &str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(Error::Config(format!("{name} must be positive, got {v}")))
    }
}

fn non_negative(name: &str, v: f64) -> Result<()> {
    if v >= 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(Error::Config(format!(
            "{name} must be non-negative, got {v}"
        )))
    }
}

impl ExperimentConfig {
    pub fn new(kind: ExperimentKind) -> Self {
        Self {
            kind,
            rng_seed: default_seed(),
            output_dir: default_out(),
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        match &self.kind {
            ExperimentKind::ToyRun(c) => {
                c.toy.validate().map_err(Error::Config)?;
                positive("step", c.step)?;
                positive("t_final", c.t_final)?;
                non_negative("tol", c.tol)?;
                if c.xi0.iter().chain(&c.eta0).any(|x| !x.is_finite()) {
                    return Err(Error::Config("xi0/eta0 must be finite".into()));
                }
            }
            ExperimentKind::TodaSweep(c) => {
                if c.energies.steps == 0 {
                    return Err(Error::Config("energy grid must be non-empty".into()));
                }
                positive("e_min", c.energies.min)?;
                positive("e_max", c.energies.max)?;
                if c.energies.max < c.energies.min {
                    return Err(Error::Config("e_max must not be below e_min".into()));
                }
                if c.ensemble == 0 {
                    return Err(Error::Config("ensemble must be non-empty".into()));
                }
                positive("step", c.step)?;
                positive("t_final", c.t_final)?;
                non_negative("tol", c.tol)?;
            }
            ExperimentKind::TodaPoincare(c) => {
                positive("energy", c.energy)?;
                if c.orbits == 0 {
                    return Err(Error::Config("orbits must be positive".into()));
                }
                positive("step", c.step)?;
                positive("t_final", c.t_final)?;
                non_negative("tol", c.tol)?;
            }
            ExperimentKind::CelestialRun(c) => {
                positive("a", c.a)?;
                if !(0.0..1.0).contains(&c.ecc) {
                    return Err(Error::Config(format!(
                        "ecc must lie in [0, 1), got {}",
                        c.ecc
                    )));
                }
                positive("m_e", c.m_e)?;
                positive("step", c.step)?;
                match c.t_final {
                    Some(t) => positive("t_final", t)?,
                    None => positive("periods", c.periods)?,
                }
                if c.output_stride == 0 {
                    return Err(Error::Config("output_stride must be positive".into()));
                }
                non_negative("tol", c.tol)?;
                if let Some(p) = &c.three_body {
                    p.validate().map_err(Error::Config)?;
                }
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_values() {
        let g = EnergyGrid {
            min: 0.18,
            max: 0.24,
            steps: 7,
        };
        let v = g.values();
        assert_eq!(v.len(), 7);
        assert_eq!(v[0], 0.18);
        assert!((v[6] - 0.24).abs() < 1e-15);
        assert_eq!(
            EnergyGrid {
                min: 0.2,
                max: 0.3,
                steps: 1
            }
            .values(),
            vec![0.2]
        );
    }

    #[test]
    fn json_round_trip_with_defaults() {
        let cfg = ExperimentConfig::from_json(r#"{"kind": "toy_run", "delta_t": 0.1}"#).unwrap();
        match &cfg.kind {
            ExperimentKind::ToyRun(c) => {
                assert_eq!(c.toy.delta_t, 0.1);
                assert_eq!(c.toy.rho, 1.0);
                assert_eq!(c.step, 1e-3);
            }
            other => panic!("{other:?}"),
        }
        let text = serde_json::to_string(&cfg).unwrap();
        assert_eq!(ExperimentConfig::from_json(&text).unwrap(), cfg);
    }

    #[test]
    fn invalid_configs_are_rejected() {
        for bad in [
            r#"{"kind": "toy_run", "delta_t": -1}"#,
            r#"{"kind": "toda_sweep", "energies": {"min": 0.2, "max": 0.3, "steps": 0}}"#,
            r#"{"kind": "toda_sweep", "ensemble": 0}"#,
            r#"{"kind": "celestial_run", "ecc": 1.2}"#,
            r#"{"kind": "celestial_run", "step": 0}"#,
            r#"{"kind": "nope"}"#,
        ] {
            assert!(
                matches!(ExperimentConfig::from_json(bad), Err(Error::Config(_))),
                "{bad}"
            );
        }
    }

    #[test]
    fn celestial_model_names() {
        assert_eq!(
            "threebody".parse::<CelestialModel>().unwrap(),
            CelestialModel::ThreeBody
        );
        assert_eq!(
            "Kepler".parse::<CelestialModel>().unwrap(),
            CelestialModel::Kepler
        );
        assert!("sun".parse::<CelestialModel>().is_err());
    }
}
