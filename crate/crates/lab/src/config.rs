//! JSON run configuration.
//!
//! Physical parameters have no defaults; only cadences, tolerances and
//! numerical options do. Unknown keys are rejected.

use std::path::{Path, PathBuf};

use axisym_core::biot_savart::StreamBoundary;
use axisym_core::evolution::{DiffusionMethod, Scheme};
use axisym_core::initial::InitialCondition;
use axisym_core::simulation::RunSettings;
use axisym_core::HalfPlaneGrid;
use serde::{Deserialize, Serialize};

use crate::error::{LabError, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    pub nr: usize,
    pub nz: usize,
    pub r_max: f64,
    pub z_min: f64,
    pub z_max: f64,
}

impl GridConfig {
    pub fn build(&self) -> Result<HalfPlaneGrid> {
        HalfPlaneGrid::new(self.nr, self.nz, self.r_max, self.z_min, self.z_max)
            .map_err(|e| LabError::config(format!("grid: {e}")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SchemeName {
    XiSemilagrangian,
    OmegaConservative,
}

impl From<SchemeName> for Scheme {
    fn from(s: SchemeName) -> Self {
        match s {
            SchemeName::XiSemilagrangian => Scheme::XiSemiLagrangian,
            SchemeName::OmegaConservative => Scheme::OmegaConservative,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DiffusionName {
    #[default]
    BackwardEuler,
    CrankNicolson,
}

impl From<DiffusionName> for DiffusionMethod {
    fn from(d: DiffusionName) -> Self {
        match d {
            DiffusionName::BackwardEuler => DiffusionMethod::BackwardEuler,
            DiffusionName::CrankNicolson => DiffusionMethod::CrankNicolson,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BoundaryName {
    #[default]
    Homogeneous,
    KernelCorrected,
}

impl From<BoundaryName> for StreamBoundary {
    fn from(b: BoundaryName) -> Self {
        match b {
            BoundaryName::Homogeneous => StreamBoundary::Homogeneous,
            BoundaryName::KernelCorrected => StreamBoundary::KernelCorrected,
        }
    }
}

/// Initial relative vorticity.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum IcSpec {
    GaussianRing {
        r0: f64,
        z0: f64,
        sigma: f64,
        amplitude: f64,
    },
    HillVortex {
        a: f64,
        amplitude: f64,
    },
    /// `p` defaults to the largest monitored exponent.
    SingularRing {
        r0: f64,
        #[serde(default)]
        z0: f64,
        alpha: f64,
        cutoff: f64,
        outer_radius: f64,
        amplitude: f64,
        #[serde(default)]
        p: Option<f64>,
    },
    /// ξ read from an AXF1 checkpoint on the same grid.
    Checkpoint {
        path: PathBuf,
    },
    /// Sum of several data, e.g. rings of opposite sign.
    Superposition {
        terms: Vec<IcSpec>,
    },
}

/// Passive particles traced alongside the run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TracerConfig {
    /// Explicit seeds `(r, z)`.
    #[serde(default)]
    pub seeds: Vec<[f64; 2]>,
    /// Additional seeds drawn uniformly from `[r_lo, r_hi] × [z_lo, z_hi]`
    /// with the run's RNG seed.
    #[serde(default)]
    pub random: Option<RandomSeeds>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RandomSeeds {
    pub count: usize,
    pub region: [f64; 4],
}

/// Test-function library and β family for the renormalization check.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RenormConfig {
    /// `[r_lo, r_hi, z_lo, z_hi]` of the test-function centres.
    pub region: [f64; 4],
    #[serde(default = "default_library_size")]
    pub library_size: usize,
    /// Scale of the built-in β family (cutoff and cap).
    pub beta_scale: f64,
}

fn default_library_size() -> usize {
    32
}

/// Sweep-specific parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    /// Radius of the 3-D ball about the origin for the Cauchy table.
    pub ball_radius: f64,
    /// Exponent of the energy-deficit bound check.
    pub bound_p: f64,
}

fn default_p_list() -> Vec<f64> {
    vec![1.0, 1.5, 2.0, 3.0]
}

fn default_true() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub grid: GridConfig,
    pub nu: f64,
    pub tfinal: f64,
    pub cfl: f64,
    pub dt_max: f64,
    pub scheme: SchemeName,
    pub ic: IcSpec,
    #[serde(default = "default_p_list")]
    pub p_list: Vec<f64>,
    /// Time between diagnostics rows; absent means every step.
    #[serde(default)]
    pub output_interval: Option<f64>,
    /// Write a checkpoint every this many diagnostics rows (the final state
    /// is always written).
    #[serde(default)]
    pub checkpoint_every: Option<usize>,
    /// Overrides the CFL step.
    #[serde(default)]
    pub fixed_dt: Option<f64>,
    #[serde(default)]
    pub diffusion: DiffusionName,
    #[serde(default)]
    pub boundary: BoundaryName,
    #[serde(default = "default_true")]
    pub reproducible: bool,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub tracers: Option<TracerConfig>,
    #[serde(default)]
    pub renorm: Option<RenormConfig>,
    #[serde(default)]
    pub sweep: Option<SweepConfig>,
}

fn resolve_paths(ic: &mut IcSpec, base: &Path) {
    match ic {
        IcSpec::Checkpoint { path } if path.is_relative() => *path = base.join(&*path),
        IcSpec::Superposition { terms } => terms.iter_mut().for_each(|t| resolve_paths(t, base)),
        _ => {}
    }
}

fn check(cond: bool, key: &str, msg: impl std::fmt::Display) -> Result<()> {
    if cond {
        Ok(())
    } else {
        Err(LabError::config(format!("{key}: {msg}")))
    }
}

fn check_region(key: &str, r: &[f64; 4]) -> Result<()> {
    check(r.iter().all(|v| v.is_finite()), key, "entries must be finite")?;
    check(r[0] > 0.0 && r[0] < r[1], key, "need 0 < r_lo < r_hi")?;
    check(r[2] < r[3], key, "need z_lo < z_hi")
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: RunConfig = serde_json::from_str(text).map_err(|e| LabError::config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Reads a config file. Relative checkpoint paths are taken relative to
    /// the file's directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| LabError::io(path, e))?;
        let mut cfg = Self::from_json(&text).map_err(|e| match e {
            LabError::Config(m) => LabError::config(format!("{}: {m}", path.display())),
            other => other,
        })?;
        if let Some(base) = path.parent() {
            resolve_paths(&mut cfg.ic, base);
        }
        Ok(cfg)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    /// Range checks beyond what the schema expresses.
    pub fn validate(&self) -> Result<()> {
        let g = &self.grid;
        check(g.nr >= 4, "grid.nr", format!("must be >= 4 (got {})", g.nr))?;
        check(g.nz >= 4, "grid.nz", format!("must be >= 4 (got {})", g.nz))?;
        check(g.r_max.is_finite() && g.r_max > 0.0, "grid.r_max", "must be positive")?;
        check(
            g.z_min.is_finite() && g.z_max.is_finite() && g.z_min < g.z_max,
            "grid.z_min",
            "must be below grid.z_max",
        )?;
        check(
            self.nu.is_finite() && self.nu >= 0.0,
            "nu",
            format!("must be >= 0 (got {})", self.nu),
        )?;
        check(
            self.tfinal.is_finite() && self.tfinal >= 0.0,
            "tfinal",
            format!("must be >= 0 (got {})", self.tfinal),
        )?;
        check(
            self.cfl > 0.0 && self.cfl <= 1.0,
            "cfl",
            format!("must lie in (0, 1] (got {})", self.cfl),
        )?;
        check(
            self.dt_max.is_finite() && self.dt_max > 0.0,
            "dt_max",
            "must be positive",
        )?;
        check(!self.p_list.is_empty(), "p_list", "must not be empty")?;
        for &p in &self.p_list {
            check(
                p.is_finite() && p >= 1.0,
                "p_list",
                format!("entries must be finite and >= 1 (got {p})"),
            )?;
        }
        if let Some(h) = self.output_interval {
            check(h.is_finite() && h > 0.0, "output_interval", "must be positive")?;
        }
        if let Some(k) = self.checkpoint_every {
            check(k > 0, "checkpoint_every", "must be positive")?;
        }
        if let Some(dt) = self.fixed_dt {
            check(dt.is_finite() && dt > 0.0, "fixed_dt", "must be positive")?;
        }
        self.validate_ic(&self.ic, "ic")?;
        if let Some(t) = &self.tracers {
            for (k, s) in t.seeds.iter().enumerate() {
                let key = format!("tracers.seeds[{k}]");
                check(
                    s[0] > 0.0 && s[0] < g.r_max && s[1] > g.z_min && s[1] < g.z_max,
                    &key,
                    "must lie inside the domain",
                )?;
            }
            if let Some(rs) = &t.random {
                check_region("tracers.random.region", &rs.region)?;
            }
        }
        if let Some(r) = &self.renorm {
            check_region("renorm.region", &r.region)?;
            check(r.library_size > 0, "renorm.library_size", "must be positive")?;
            check(
                r.beta_scale.is_finite() && r.beta_scale > 0.0,
                "renorm.beta_scale",
                "must be positive",
            )?;
        }
        if let Some(s) = &self.sweep {
            check(
                s.ball_radius.is_finite() && s.ball_radius > 0.0,
                "sweep.ball_radius",
                "must be positive",
            )?;
            check(s.bound_p > 1.0 && s.bound_p.is_finite(), "sweep.bound_p", "must be > 1")?;
        }
        Ok(())
    }

    fn validate_ic(&self, ic: &IcSpec, key: &str) -> Result<()> {
        match ic {
            IcSpec::Checkpoint { .. } => Ok(()),
            IcSpec::Superposition { terms } => {
                check(!terms.is_empty(), &format!("{key}.terms"), "must not be empty")?;
                for (k, t) in terms.iter().enumerate() {
                    self.validate_ic(t, &format!("{key}.terms[{k}]"))?;
                }
                Ok(())
            }
            other => {
                let core = self.core_ic(other).expect("analytic data");
                core.validate().map_err(|e| LabError::config(format!("{key}: {e}")))
            }
        }
    }

    /// The core description of an analytic datum; `None` for checkpoints and
    /// superpositions.
    pub fn core_ic(&self, ic: &IcSpec) -> Option<InitialCondition> {
        Some(match *ic {
            IcSpec::GaussianRing {
                r0,
                z0,
                sigma,
                amplitude,
            } => InitialCondition::GaussianRing {
                r0,
                z0,
                sigma,
                amplitude,
            },
            IcSpec::HillVortex { a, amplitude } => InitialCondition::HillVortex { a, amplitude },
            IcSpec::SingularRing {
                r0,
                z0,
                alpha,
                cutoff,
                outer_radius,
                amplitude,
                p,
            } => InitialCondition::SingularRing {
                r0,
                z0,
                alpha,
                cutoff,
                outer_radius,
                amplitude,
                p: p.unwrap_or_else(|| self.p_list.iter().copied().fold(1.0, f64::max)),
            },
            IcSpec::Checkpoint { .. } | IcSpec::Superposition { .. } => return None,
        })
    }

    pub fn settings(&self) -> RunSettings {
        RunSettings {
            scheme: self.scheme.into(),
            nu: self.nu,
            tfinal: self.tfinal,
            cfl: self.cfl,
            dt_max: self.dt_max,
            fixed_dt: self.fixed_dt,
            output_interval: self.output_interval,
            diffusion: self.diffusion.into(),
        }
    }
}
