//! Experiment configuration, read from TOML.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::coefficients::{MediumParams, Shape};
use crate::effective::fdtd::{ConvolutionCoefficient, Excitation};
use crate::effective::SelfCellRule;
use crate::error::{Error, Result};
use crate::incident::Pulse;
use crate::numerics::Point;
use crate::placement::{Domain, KField};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub domain: Domain,
    pub k: KField,
    pub medium: MediumParams,
    pub shape: Shape,
    /// Multiplies the scattering strength of every bubble (and of the
    /// effective medium) without touching the resonance coefficient.
    pub b_bar_factor: f64,
    pub pulse: Pulse,
    pub source: Point,
    pub probes: ProbeSettings,
    pub times: TimeSettings,
    /// Bubble sizes of the sweep, strictly decreasing.
    pub deltas: Vec<f64>,
    pub grid: GridSettings,
    /// Lower bound on the spectrum used by the smallness condition.
    pub lambda1: f64,
    pub seed: u64,
    /// Entries whose predicted cost M^2 * steps exceeds this are skipped.
    pub cost_budget: f64,
    /// Run sweep entries concurrently.
    pub parallel_sweep: bool,
    pub fdtd: FdtdSettings,
    pub laplace: LaplaceSettings,
    pub output: Option<PathBuf>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            domain: Domain::unit_cube(),
            k: KField::default(),
            medium: MediumParams::default(),
            shape: Shape::default(),
            b_bar_factor: 1.0,
            pulse: Pulse::window(3.0),
            source: [-1.0, 0.5, 0.5],
            probes: ProbeSettings::default(),
            times: TimeSettings::default(),
            deltas: vec![8e-3, 4e-3, 2e-3, 1e-3],
            grid: GridSettings::default(),
            lambda1: 1.0 / 3.0,
            seed: 0,
            cost_budget: 5e10,
            parallel_sweep: false,
            fdtd: FdtdSettings::default(),
            laplace: LaplaceSettings::default(),
            output: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProbeSettings {
    pub count: usize,
    /// Probe radius as a multiple of the domain's circumradius.
    pub radius_factor: f64,
    /// Directions closer than this angle (degrees) to the source are skipped.
    pub exclusion_deg: f64,
    /// Explicit probe points; overrides the generated set.
    pub points: Option<Vec<Point>>,
}

impl Default for ProbeSettings {
    fn default() -> Self {
        ProbeSettings {
            count: 6,
            radius_factor: 2.0,
            exclusion_deg: 45.0,
            points: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TimeSettings {
    pub t_end: f64,
    /// Spacing of the probe samples.
    pub sample_step: f64,
    /// Solver step; chosen from the delays and the pulse when absent.
    pub step: Option<f64>,
}

impl Default for TimeSettings {
    fn default() -> Self {
        TimeSettings {
            t_end: 16.0,
            sample_step: 0.05,
            step: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridSettings {
    /// Snap the cell count per edge to round(eps^{-1/3}) so the cells tile a
    /// box domain exactly.
    pub snap_tiling: bool,
    /// Voxels per cell edge of the effective grid.
    pub refine: usize,
    pub self_rule: SelfCellRule,
}

impl Default for GridSettings {
    fn default() -> Self {
        GridSettings {
            snap_tiling: true,
            refine: 1,
            self_rule: SelfCellRule::EquivalentBall,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FdtdSettings {
    pub dx: f64,
    pub padding: f64,
    /// Effective scattering strength b times kappa = 1 used by `solve-fdtd`.
    pub b: f64,
    pub hbar: f64,
    pub dispersive: bool,
    pub excitation: Excitation,
    pub residual: Option<ConvolutionCoefficient>,
    /// Voxel edge of the integral-equation reference; none skips it.
    pub reference_edge: Option<f64>,
}

impl Default for FdtdSettings {
    fn default() -> Self {
        FdtdSettings {
            dx: 1.0 / 16.0,
            padding: 1.5,
            b: 1.0,
            hbar: 1.0,
            dispersive: true,
            excitation: Excitation::ScatteredField,
            residual: Some(ConvolutionCoefficient::Derived),
            reference_edge: Some(0.125),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LaplaceSettings {
    pub voxel_edge: f64,
    pub b: f64,
    pub hbar: f64,
    pub sigmas: Vec<f64>,
    pub omegas: Vec<f64>,
    pub bromwich_sigma: f64,
    pub bromwich_omega_max: f64,
    pub bromwich_points: usize,
    /// End of the window compared against time marching.
    pub bromwich_t_end: f64,
}

impl Default for LaplaceSettings {
    fn default() -> Self {
        LaplaceSettings {
            voxel_edge: 0.125,
            b: 1.0,
            hbar: 1.0,
            sigmas: vec![2.0, 4.0],
            omegas: vec![0.0, 1.0, 2.0, 4.0, 8.0, 16.0, 32.0, 64.0],
            bromwich_sigma: 0.6,
            bromwich_omega_max: 25.0,
            bromwich_points: 64,
            bromwich_t_end: 12.0,
        }
    }
}

impl ExperimentConfig {
    pub fn from_toml_str(s: &str) -> Result<Self> {
        let cfg: ExperimentConfig = toml::from_str(s).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string_pretty(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        self.domain.validate()?;
        self.medium.validate()?;
        self.pulse.validate()?;
        self.shape.constants()?;
        let bad = |m: &str| Err(Error::Config(m.to_string()));
        if !(self.b_bar_factor >= 0.0) {
            return bad("b_bar_factor must be nonnegative");
        }
        if self.deltas.iter().any(|d| !(*d > 0.0 && *d < 1.0)) {
            return bad("every delta must lie in (0, 1)");
        }
        if self.deltas.windows(2).any(|w| w[1] >= w[0]) {
            return bad("deltas must be strictly decreasing");
        }
        if !(self.times.t_end > 0.0) || !(self.times.sample_step > 0.0) {
            return bad("t_end and sample_step must be positive");
        }
        if self.grid.refine == 0 {
            return bad("grid.refine must be at least 1");
        }
        if !(self.lambda1 > 0.0) {
            return bad("lambda1 must be positive");
        }
        if self.domain.contains(self.source, 1e-12) {
            return bad("the source must lie outside the domain");
        }
        if let Some(points) = &self.probes.points {
            if let Some(p) = points.iter().find(|p| self.domain.contains(**p, 1e-9)) {
                return Err(Error::Config(format!("probe {p:?} is not strictly outside the domain")));
            }
        }
        Ok(())
    }
}
