//! Single runs: initial data, the time loop with its output files, replay
//! for the renormalization check, and checkpoint diagnostics.

use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::time::Instant;

use axisym_core::biot_savart::{check_divergence, StreamSolver};
use axisym_core::diagnostics::{self, DiagnosticsRecord};
use axisym_core::evolution::{Evolver, FlowSource, FluidState};
use axisym_core::initial::make_initial_condition;
use axisym_core::lagrangian::{builtin_betas, test_function_library, FlowTracer, RenormAccumulator, TransportMonitor};
use axisym_core::simulation::{run_observed, RunObserver, RunOutcome};
use axisym_core::{FieldRole, HalfPlaneGrid, ScalarField, VelocityField};
use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};
use serde::Serialize;

use crate::checkpoint::Checkpoint;
use crate::config::{IcSpec, RunConfig};
use crate::error::{LabError, Result};
use crate::output::{DiagnosticsWriter, FlowMapWriter};

pub const CONFIG_FILE: &str = "config.json";
pub const DIAGNOSTICS_FILE: &str = "diagnostics.csv";
pub const SUMMARY_FILE: &str = "summary.json";
pub const FINAL_CHECKPOINT: &str = "final.axf1";
pub const FLOWMAP_FILE: &str = "flowmap.csv";
pub const RENORM_FILE: &str = "renorm.json";

/// Samples the configured initial relative vorticity.
pub fn initial_field(cfg: &RunConfig, grid: &HalfPlaneGrid) -> Result<ScalarField> {
    field_for(cfg, &cfg.ic, grid, "ic")
}

fn field_for(cfg: &RunConfig, ic: &IcSpec, grid: &HalfPlaneGrid, key: &str) -> Result<ScalarField> {
    match ic {
        IcSpec::Checkpoint { path } => {
            let cp = Checkpoint::load(path)?;
            if cp.xi.grid != *grid {
                return Err(LabError::config(format!(
                    "{key}.path: checkpoint grid does not match the configured grid"
                )));
            }
            Ok(cp.xi)
        }
        IcSpec::Superposition { terms } => {
            let mut sum = ScalarField::zeros(*grid, FieldRole::RelativeVorticity);
            for (k, t) in terms.iter().enumerate() {
                let f = field_for(cfg, t, grid, &format!("{key}.terms[{k}]"))?;
                sum.values.iter_mut().zip(&f.values).for_each(|(a, b)| *a += b);
            }
            Ok(sum)
        }
        other => {
            let core = cfg.core_ic(other).expect("analytic datum");
            make_initial_condition(&core, grid).map_err(|e| LabError::config(format!("{key}: {e}")))
        }
    }
}

/// Biot–Savart evolver with the configured boundary treatment.
pub fn evolver(cfg: &RunConfig, grid: HalfPlaneGrid) -> Result<Evolver> {
    let solver = StreamSolver::new(grid).with_boundary(cfg.boundary.into());
    Ok(Evolver::new(grid, FlowSource::BiotSavart(solver), cfg.p_list.clone())?)
}

/// Explicit tracer seeds followed by the random ones.
pub fn tracer_seeds(cfg: &RunConfig) -> Vec<(f64, f64)> {
    let Some(t) = &cfg.tracers else {
        return Vec::new();
    };
    let mut seeds: Vec<(f64, f64)> = t.seeds.iter().map(|s| (s[0], s[1])).collect();
    if let Some(rs) = &t.random {
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let mut unit = || (rng.next_u64() >> 11) as f64 / (1u64 << 53) as f64;
        let [r_lo, r_hi, z_lo, z_hi] = rs.region;
        for _ in 0..rs.count {
            let r = r_lo + (r_hi - r_lo) * unit();
            let z = z_lo + (z_hi - z_lo) * unit();
            seeds.push((r, z));
        }
    }
    seeds
}

/// `∫_H |ω| r² d(r,z)`, the unsigned second moment.
pub fn abs_moment(xi: &ScalarField) -> f64 {
    let g = xi.grid;
    let area = g.cell_area();
    (0..g.nr)
        .map(|i| {
            let r = g.r(i);
            let s: f64 = xi.values[i * g.nz..(i + 1) * g.nz].iter().map(|v| v.abs()).sum();
            s * r * r * r * area
        })
        .sum()
}

/// Contents of `summary.json`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunSummary {
    pub steps: u64,
    pub t_final: f64,
    pub records: usize,
    /// `(p, worst relative per-step increase of Σ r|ξ|^p)`.
    pub worst_lp_increase: Vec<(f64, f64)>,
    pub worst_dissipation_excess: Vec<(f64, f64)>,
    pub min_blend_theta: f64,
    pub min_xi_ratio: f64,
    pub max_elliptic_iterations: usize,
    pub energy_balance_residual: f64,
    /// Worst `|I(t) − I₀| / |I₀|` for the impulse `I = ∫ ω r²`.
    pub impulse_drift: f64,
    /// `max_t ∫|ω(t)| r² / ∫|ω₀| r²`, which is 1 for one-signed data.
    pub moment_ratio_max: f64,
    pub tracers: usize,
    pub tracers_exited: usize,
    pub axis_violations: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub wall_seconds: Option<f64>,
}

/// Per-step bookkeeping shared by `run` and the replay in `renorm-check`.
struct LabObserver<'a> {
    diagnostics: Option<DiagnosticsWriter>,
    flowmap: Option<FlowMapWriter>,
    checkpoints: Option<(&'a Path, usize)>,
    records_seen: usize,
    tracer: Option<FlowTracer>,
    last_u: Option<VelocityField>,
    renorm: Option<RenormAccumulator>,
    transport: Option<TransportMonitor>,
    moment0: f64,
    moment_ratio_max: f64,
    velocities: Option<Vec<(f64, VelocityField)>>,
}

impl LabObserver<'_> {
    fn new() -> Self {
        Self {
            diagnostics: None,
            flowmap: None,
            checkpoints: None,
            records_seen: 0,
            tracer: None,
            last_u: None,
            renorm: None,
            transport: None,
            moment0: 0.0,
            moment_ratio_max: 1.0,
            velocities: None,
        }
    }
}

impl RunObserver for LabObserver<'_> {
    fn on_step(&mut self, state: &FluidState) -> axisym_core::Result<()> {
        let m = abs_moment(&state.xi);
        if state.step_index == 0 {
            self.moment0 = m;
        } else if self.moment0 > 0.0 {
            self.moment_ratio_max = self.moment_ratio_max.max(m / self.moment0);
        }
        if let Some(tr) = &mut self.tracer {
            if let Some(prev) = &self.last_u {
                tr.advance(prev, &state.u, state.t)?;
            }
            self.last_u = Some(state.u.clone());
        }
        if let Some(acc) = &mut self.renorm {
            acc.observe(state.t, &state.xi, &state.u)?;
        }
        if let Some(mon) = &mut self.transport {
            mon.observe(state.t, &state.xi, &state.u)?;
        }
        Ok(())
    }

    fn on_record(&mut self, record: &DiagnosticsRecord, state: &FluidState) -> axisym_core::Result<()> {
        // IO failures cannot travel through the core error type; they are
        // kept and reported after the loop.
        if let Some(w) = &mut self.diagnostics {
            w.push(record);
        }
        if let (Some(w), Some(tr)) = (&mut self.flowmap, &self.tracer) {
            w.push(state.t, tr.map());
        }
        if let Some((dir, every)) = self.checkpoints {
            if self.records_seen > 0 && self.records_seen.is_multiple_of(every) {
                let cp = Checkpoint {
                    t: state.t,
                    nu: state.nu,
                    xi: state.xi.clone(),
                };
                let path = dir.join(format!("checkpoint_{:05}.axf1", self.records_seen));
                if let Err(e) = cp.save(&path) {
                    if let Some(w) = &mut self.diagnostics {
                        w.fail(e);
                    }
                }
            }
        }
        if let Some(v) = &mut self.velocities {
            v.push((state.t, state.u.clone()));
        }
        self.records_seen += 1;
        Ok(())
    }
}

fn create_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| LabError::io(dir, e))
}

pub(crate) fn write_json(path: &Path, value: &impl Serialize) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).expect("report serializes");
    text.push('\n');
    std::fs::write(path, text).map_err(|e| LabError::io(path, e))
}

/// Outcome of [`execute_run`] with the paths it wrote.
#[derive(Debug)]
pub struct RunResult {
    pub outcome: RunOutcome,
    pub summary: RunSummary,
    pub dir: PathBuf,
    /// Velocity at every diagnostics row, when requested.
    pub velocities: Vec<(f64, VelocityField)>,
}

/// Runs `cfg` and writes `config.json`, `diagnostics.csv`, checkpoints,
/// `flowmap.csv` (with tracers) and `summary.json` into `dir`. Diagnostics
/// rows already written survive a failing step.
pub fn execute_run(cfg: &RunConfig, dir: &Path) -> Result<RunResult> {
    execute_with(cfg, dir, None, false)
}

/// [`execute_run`] starting from a given field and keeping the velocity at
/// every diagnostics row. Sweeps use it so that every member shares one
/// bit-identical initial field.
pub fn execute_run_from(cfg: &RunConfig, dir: &Path, xi0: ScalarField) -> Result<RunResult> {
    execute_with(cfg, dir, Some(xi0), true)
}

fn execute_with(cfg: &RunConfig, dir: &Path, xi0: Option<ScalarField>, keep_velocities: bool) -> Result<RunResult> {
    cfg.validate()?;
    create_dir(dir)?;
    let grid = cfg.grid.build()?;
    let xi0 = match xi0 {
        Some(f) => f,
        None => initial_field(cfg, &grid)?,
    };
    std::fs::write(dir.join(CONFIG_FILE), cfg.to_json() + "\n").map_err(|e| LabError::io(dir.join(CONFIG_FILE), e))?;
    let started = Instant::now();
    let mut obs = LabObserver::new();
    if keep_velocities {
        obs.velocities = Some(Vec::new());
    }
    obs.diagnostics = Some(DiagnosticsWriter::create(&dir.join(DIAGNOSTICS_FILE), &cfg.p_list)?);
    if let Some(every) = cfg.checkpoint_every {
        obs.checkpoints = Some((dir, every));
    }
    let seeds = tracer_seeds(cfg);
    if !seeds.is_empty() {
        obs.tracer = Some(FlowTracer::new(grid, seeds, 0.0).map_err(|e| LabError::config(format!("tracers: {e}")))?);
        obs.flowmap = Some(FlowMapWriter::create(&dir.join(FLOWMAP_FILE))?);
    }
    let mut ev = evolver(cfg, grid)?;
    let result = run_observed(&mut ev, xi0, &cfg.settings(), &mut obs);
    let diag_status = obs.diagnostics.take().map(|w| w.finish()).unwrap_or(Ok(()));
    let flow_status = obs.flowmap.take().map(|w| w.finish()).unwrap_or(Ok(()));
    let outcome = result?;
    diag_status?;
    flow_status?;
    let fs = &outcome.final_state;
    Checkpoint {
        t: fs.t,
        nu: fs.nu,
        xi: fs.xi.clone(),
    }
    .save(&dir.join(FINAL_CHECKPOINT))?;
    let summary = summarize(cfg, &outcome, &obs, started);
    write_json(&dir.join(SUMMARY_FILE), &summary)?;
    let velocities = obs.velocities.take().unwrap_or_default();
    Ok(RunResult {
        outcome,
        summary,
        dir: dir.to_path_buf(),
        velocities,
    })
}

fn summarize(cfg: &RunConfig, outcome: &RunOutcome, obs: &LabObserver<'_>, started: Instant) -> RunSummary {
    let m = &outcome.monitor;
    let paired = |v: &[f64]| cfg.p_list.iter().copied().zip(v.iter().copied()).collect::<Vec<_>>();
    let i0 = outcome.records[0].impulse;
    let impulse_drift = outcome
        .records
        .iter()
        .map(|r| {
            if i0 != 0.0 {
                (r.impulse - i0).abs() / i0.abs()
            } else {
                r.impulse.abs()
            }
        })
        .fold(0.0, f64::max);
    let (tracers, exited, axis) = match &obs.tracer {
        Some(t) => (
            t.map().seeds.len(),
            t.map().exit_time.iter().filter(|e| e.is_some()).count(),
            t.map().axis_violations,
        ),
        None => (0, 0, 0),
    };
    RunSummary {
        steps: m.steps,
        t_final: outcome.final_state.t,
        records: outcome.records.len(),
        worst_lp_increase: paired(&m.worst_lp_increase),
        worst_dissipation_excess: paired(&m.worst_dissipation_excess),
        min_blend_theta: m.min_blend_theta,
        min_xi_ratio: m.min_xi_ratio,
        max_elliptic_iterations: m.max_elliptic_iterations,
        energy_balance_residual: diagnostics::energy_balance_residual(&outcome.records),
        impulse_drift,
        moment_ratio_max: obs.moment_ratio_max,
        tracers,
        tracers_exited: exited,
        axis_violations: axis,
        wall_seconds: (!cfg.reproducible).then(|| started.elapsed().as_secs_f64()),
    }
}

/// Per-β entry of `renorm.json`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BetaResidual {
    pub beta: String,
    pub residual: f64,
    /// Worst relative drift of `∫ β(ξ(t)) r`.
    pub mass_drift: f64,
}

/// Contents of `renorm.json`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RenormReport {
    pub nu: f64,
    pub steps: u64,
    pub library_size: usize,
    pub betas: Vec<BetaResidual>,
    pub composition_defect: f64,
    pub jacobian_defect: f64,
    pub seeds: usize,
}

/// Replays the run stored in `run_dir` (from its `config.json`) and
/// evaluates the weak renormalized residual for the built-in β family, or
/// for the one named `beta`, over the configured test-function library.
/// Composition and Jacobian defects use the run's tracers, or a 5 × 5
/// lattice over the library region. Writes `renorm.json`.
pub fn renorm_check(run_dir: &Path, beta: Option<&str>) -> Result<RenormReport> {
    let cfg = RunConfig::load(&run_dir.join(CONFIG_FILE))?;
    let rc = cfg
        .renorm
        .clone()
        .ok_or_else(|| LabError::config("renorm: section required for renorm-check"))?;
    let grid = cfg.grid.build()?;
    let mut betas = builtin_betas(rc.beta_scale);
    if let Some(name) = beta {
        betas.retain(|b| b.name == name);
        if betas.is_empty() {
            let known: Vec<String> = builtin_betas(1.0).into_iter().map(|b| b.name).collect();
            return Err(LabError::config(format!(
                "--beta: unknown name {name:?} (known: {})",
                known.join(", ")
            )));
        }
    }
    let [r_lo, r_hi, z_lo, z_hi] = rc.region;
    let horizon = cfg.tfinal.max(f64::MIN_POSITIVE);
    let tests = test_function_library(r_lo, r_hi, z_lo, z_hi, horizon, rc.library_size)
        .map_err(|e| LabError::config(format!("renorm: {e}")))?;
    let mut seeds = tracer_seeds(&cfg);
    if seeds.is_empty() {
        for a in 0..5 {
            for b in 0..5 {
                seeds.push((
                    r_lo + (r_hi - r_lo) * a as f64 / 4.0,
                    z_lo + (z_hi - z_lo) * b as f64 / 4.0,
                ));
            }
        }
    }
    let n_seeds = seeds.len();
    let mut obs = LabObserver::new();
    obs.renorm = Some(RenormAccumulator::new(grid, betas, tests));
    obs.transport = Some(TransportMonitor::new(grid, seeds)?);
    let mut ev = evolver(&cfg, grid)?;
    let xi0 = initial_field(&cfg, &grid)?;
    let outcome = run_observed(&mut ev, xi0, &cfg.settings(), &mut obs)?;
    let acc = obs.renorm.take().expect("accumulator");
    let mon = obs.transport.take().expect("monitor");
    let betas = acc
        .residuals()
        .into_iter()
        .zip(acc.beta_mass_drift())
        .map(|((beta, residual), (_, mass_drift))| BetaResidual {
            beta,
            residual,
            mass_drift,
        })
        .collect();
    let report = RenormReport {
        nu: cfg.nu,
        steps: outcome.monitor.steps,
        library_size: rc.library_size,
        betas,
        composition_defect: mon.composition,
        jacobian_defect: mon.jacobian,
        seeds: n_seeds,
    };
    write_json(&run_dir.join(RENORM_FILE), &report)?;
    Ok(report)
}

/// Diagnostics of a checkpointed state, as printed by `diag`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CheckpointDiagnostics {
    pub t: f64,
    pub nu: f64,
    pub nr: usize,
    pub nz: usize,
    pub lp_norms: Vec<(f64, f64)>,
    pub linf: f64,
    pub xi_min: f64,
    pub xi_max: f64,
    pub impulse: f64,
    pub abs_moment: f64,
    pub energy: f64,
    pub enstrophy: f64,
    pub grad_u_sq: f64,
    pub enstrophy_identity_residual: f64,
    pub divergence_residual: f64,
    pub elliptic_iterations: usize,
    pub elliptic_residual: f64,
}

pub fn diag_checkpoint(path: &Path, boundary: crate::config::BoundaryName) -> Result<CheckpointDiagnostics> {
    let cp = Checkpoint::load(path)?;
    let g = cp.xi.grid;
    let omega = ScalarField::omega_from_xi(&cp.xi);
    let mut solver = StreamSolver::new(g).with_boundary(boundary.into());
    let (psi, report) = solver.solve(&omega)?;
    let u = axisym_core::biot_savart::velocity_from_stream(&psi);
    Ok(CheckpointDiagnostics {
        t: cp.t,
        nu: cp.nu,
        nr: g.nr,
        nz: g.nz,
        lp_norms: [1.0, 1.5, 2.0, 3.0]
            .iter()
            .map(|&p| (p, diagnostics::lp_norm(&cp.xi, p)))
            .collect(),
        linf: cp.xi.max_abs(),
        xi_min: cp.xi.min(),
        xi_max: cp.xi.max(),
        impulse: diagnostics::impulse(&cp.xi),
        abs_moment: abs_moment(&cp.xi),
        energy: diagnostics::kinetic_energy(&u),
        enstrophy: diagnostics::enstrophy(&omega),
        grad_u_sq: diagnostics::grad_u_sq(&u),
        enstrophy_identity_residual: diagnostics::enstrophy_identity_residual(&u, &omega)?,
        divergence_residual: check_divergence(&u),
        elliptic_iterations: report.iterations,
        elliptic_residual: report.residual,
    })
}

/// Contents of `domain_check.json`: the same run on the configured domain
/// and on one twice as large at equal spacing.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DomainCheck {
    pub base: DomainRow,
    pub doubled: DomainRow,
    /// Relative differences `|doubled − base| / |doubled|` at the final time.
    pub energy_change: f64,
    pub impulse_change: f64,
    pub enstrophy_change: f64,
    pub lp_change: Vec<(f64, f64)>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DomainRow {
    pub nr: usize,
    pub nz: usize,
    pub r_max: f64,
    pub z_min: f64,
    pub z_max: f64,
    pub energy: f64,
    pub impulse: f64,
    pub enstrophy: f64,
    pub enstrophy_identity_residual: f64,
    pub lp_norms: Vec<(f64, f64)>,
}

/// Runs `cfg` in `dir/base` and on the doubled domain in `dir/doubled`
/// (same spacing, `z` range doubled about its centre) and writes
/// `domain_check.json`.
pub fn domain_check(cfg: &RunConfig, dir: &Path) -> Result<DomainCheck> {
    let mut big = cfg.clone();
    big.grid.nr *= 2;
    big.grid.nz *= 2;
    big.grid.r_max *= 2.0;
    let mid = 0.5 * (cfg.grid.z_min + cfg.grid.z_max);
    let half = cfg.grid.z_max - cfg.grid.z_min;
    big.grid.z_min = mid - half;
    big.grid.z_max = mid + half;
    big.tracers = None;
    let mut base_cfg = cfg.clone();
    base_cfg.tracers = None;
    let a = execute_run(&base_cfg, &dir.join("base"))?;
    let b = execute_run(&big, &dir.join("doubled"))?;
    let row = |r: &RunResult, c: &RunConfig| -> Result<DomainRow> {
        let last = r.outcome.records.last().expect("at least one record");
        let fs = &r.outcome.final_state;
        Ok(DomainRow {
            nr: c.grid.nr,
            nz: c.grid.nz,
            r_max: c.grid.r_max,
            z_min: c.grid.z_min,
            z_max: c.grid.z_max,
            energy: last.energy,
            impulse: last.impulse,
            enstrophy: last.enstrophy,
            enstrophy_identity_residual: diagnostics::enstrophy_identity_residual(&fs.u, &fs.omega())?,
            lp_norms: last.lp_norms.clone(),
        })
    };
    let (ra, rb) = (row(&a, &base_cfg)?, row(&b, &big)?);
    let rel = |x: f64, y: f64| {
        if y != 0.0 {
            (y - x).abs() / y.abs()
        } else {
            (y - x).abs()
        }
    };
    let report = DomainCheck {
        energy_change: rel(ra.energy, rb.energy),
        impulse_change: rel(ra.impulse, rb.impulse),
        enstrophy_change: rel(ra.enstrophy, rb.enstrophy),
        lp_change: ra
            .lp_norms
            .iter()
            .zip(&rb.lp_norms)
            .map(|(x, y)| (x.0, rel(x.1, y.1)))
            .collect(),
        base: ra,
        doubled: rb,
    };
    write_json(&dir.join("domain_check.json"), &report)?;
    Ok(report)
}

pub(crate) fn buffered(path: &Path) -> Result<BufWriter<File>> {
    let f = File::create(path).map_err(|e| LabError::io(path, e))?;
    Ok(BufWriter::new(f))
}
