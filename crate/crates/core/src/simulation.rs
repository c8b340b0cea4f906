//! Time loop with diagnostics sampling and per-step invariant monitors.

use alloc::vec;
use alloc::vec::Vec;

use crate::diagnostics::DiagnosticsRecord;
use crate::error::{invalid, Result};
use crate::evolution::{cfl_dt, DiffusionMethod, Evolver, FluidState, Scheme, TimeStepPlan};
use crate::grid::ScalarField;

#[derive(Debug, Clone, PartialEq)]
pub struct RunSettings {
    pub scheme: Scheme,
    pub nu: f64,
    pub tfinal: f64,
    pub cfl: f64,
    pub dt_max: f64,
    /// Overrides the CFL step; used by sweeps so that every member shares
    /// one schedule.
    pub fixed_dt: Option<f64>,
    /// Time between diagnostics rows; `None` records every step.
    pub output_interval: Option<f64>,
    pub diffusion: DiffusionMethod,
}

impl RunSettings {
    pub fn validate(&self) -> Result<()> {
        if !(self.nu >= 0.0 && self.nu.is_finite()) {
            return Err(invalid(alloc::format!("nu must be >= 0 (got {})", self.nu)));
        }
        if !(self.tfinal >= 0.0 && self.tfinal.is_finite()) {
            return Err(invalid(alloc::format!("tfinal must be >= 0 (got {})", self.tfinal)));
        }
        if !(self.cfl > 0.0 && self.cfl <= 1.0) {
            return Err(invalid(alloc::format!("cfl must lie in (0, 1] (got {})", self.cfl)));
        }
        if !(self.dt_max > 0.0 && self.dt_max.is_finite()) {
            return Err(invalid(alloc::format!("dt_max must be positive (got {})", self.dt_max)));
        }
        if let Some(dt) = self.fixed_dt {
            if !(dt > 0.0 && dt.is_finite()) {
                return Err(invalid(alloc::format!("fixed dt must be positive (got {dt})")));
            }
        }
        if let Some(dt) = self.output_interval {
            if !(dt > 0.0 && dt.is_finite()) {
                return Err(invalid(alloc::format!("output interval must be positive (got {dt})")));
            }
        }
        Ok(())
    }
}

/// Worst per-step behaviour seen during a run.
#[derive(Debug, Clone, PartialEq)]
pub struct StepMonitor {
    pub steps: u64,
    /// Per monitored `p`: `max (F_after − F_before) / F_before` over steps,
    /// with `F = Σ r |ξ|^p`.
    pub worst_lp_increase: Vec<f64>,
    /// Per monitored `p`: `max [(F_after − F_before)/p + D] / (F_before/p)`,
    /// the relative violation of the discrete dissipation inequality.
    pub worst_dissipation_excess: Vec<f64>,
    pub min_blend_theta: f64,
    /// `min_t min ξ(t) / max ξ₀` (only meaningful for `ξ₀ ≥ 0`).
    pub min_xi_ratio: f64,
    pub max_elliptic_iterations: usize,
}

#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub records: Vec<DiagnosticsRecord>,
    pub final_state: FluidState,
    pub monitor: StepMonitor,
}

/// Hooks into the time loop.
pub trait RunObserver {
    /// Called for the initial state and after every step.
    fn on_step(&mut self, _state: &FluidState) -> Result<()> {
        Ok(())
    }

    /// Called for every diagnostics row as soon as it exists, so a caller
    /// can persist partial output before an error aborts the loop.
    fn on_record(&mut self, record: &DiagnosticsRecord, state: &FluidState) -> Result<()>;
}

struct RecordsOnly<F>(F);

impl<F> RunObserver for RecordsOnly<F>
where
    F: FnMut(&DiagnosticsRecord, &FluidState) -> Result<()>,
{
    fn on_record(&mut self, record: &DiagnosticsRecord, state: &FluidState) -> Result<()> {
        (self.0)(record, state)
    }
}

/// Runs from `xi0` at `t = 0` to `settings.tfinal`; `observer` sees every
/// diagnostics row as soon as it exists.
pub fn run(
    evolver: &mut Evolver,
    xi0: ScalarField,
    settings: &RunSettings,
    observer: impl FnMut(&DiagnosticsRecord, &FluidState) -> Result<()>,
) -> Result<RunOutcome> {
    run_observed(evolver, xi0, settings, &mut RecordsOnly(observer))
}

/// [`run`] with a per-step hook.
pub fn run_observed(
    evolver: &mut Evolver,
    xi0: ScalarField,
    settings: &RunSettings,
    observer: &mut dyn RunObserver,
) -> Result<RunOutcome> {
    settings.validate()?;
    let ps = evolver.p_list.clone();
    let mut state = evolver.initial_state(xi0, settings.nu, 0.0)?;
    let xi_max0 = state.xi.max();
    let energy0 = crate::diagnostics::kinetic_energy(&state.u);
    let mut cumulative = vec![0.0; ps.len()];
    let mut monitor = StepMonitor {
        steps: 0,
        worst_lp_increase: vec![f64::NEG_INFINITY; ps.len()],
        worst_dissipation_excess: vec![f64::NEG_INFINITY; ps.len()],
        min_blend_theta: 1.0,
        min_xi_ratio: if xi_max0 > 0.0 { state.xi.min() / xi_max0 } else { 0.0 },
        max_elliptic_iterations: 0,
    };
    let mut records = Vec::new();
    let first = DiagnosticsRecord::compute(&state, &ps, energy0, &cumulative)?;
    observer.on_step(&state)?;
    observer.on_record(&first, &state)?;
    records.push(first);

    let tfinal = settings.tfinal;
    let eps = 1e-12 * tfinal.max(1.0);
    let mut next_output = settings.output_interval.map_or(tfinal, |h| h.min(tfinal));
    let mut output_index = 1u64;
    while state.t < tfinal - eps {
        let mut dt = settings
            .fixed_dt
            .unwrap_or_else(|| cfl_dt(&state, settings.cfl, settings.dt_max));
        let target = if settings.output_interval.is_some() {
            next_output
        } else {
            tfinal
        };
        let mut clipped = false;
        if state.t + dt >= target - eps {
            dt = target - state.t;
            clipped = true;
        }
        let plan = TimeStepPlan::new(dt, settings.cfl)?.with_diffusion(settings.diffusion);
        let (mut next, report) = evolver.step(settings.scheme, &state, &plan)?;
        if clipped {
            next.t = target;
        }
        for (k, &p) in ps.iter().enumerate() {
            let (before, after) = (report.lp_functional_before[k], report.lp_functional_after[k]);
            cumulative[k] += report.dissipation[k];
            if before > 0.0 {
                monitor.worst_lp_increase[k] = monitor.worst_lp_increase[k].max((after - before) / before);
                let excess = ((after - before) / p + report.dissipation[k]) / (before / p);
                monitor.worst_dissipation_excess[k] = monitor.worst_dissipation_excess[k].max(excess);
            }
        }
        monitor.steps += 1;
        monitor.min_blend_theta = monitor.min_blend_theta.min(report.blend_theta);
        if xi_max0 > 0.0 {
            monitor.min_xi_ratio = monitor.min_xi_ratio.min(next.xi.min() / xi_max0);
        }
        if let Some(e) = &report.elliptic {
            monitor.max_elliptic_iterations = monitor.max_elliptic_iterations.max(e.iterations);
        }
        state = next;
        observer.on_step(&state)?;
        let due = match settings.output_interval {
            None => true,
            Some(_) => clipped,
        };
        if due {
            let rec = DiagnosticsRecord::compute(&state, &ps, energy0, &cumulative)?;
            observer.on_record(&rec, &state)?;
            records.push(rec);
            if let Some(h) = settings.output_interval {
                output_index += 1;
                next_output = (output_index as f64 * h).min(tfinal);
            }
        }
    }
    Ok(RunOutcome {
        records,
        final_state: state,
        monitor,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::evolution::{FlowSource, FrozenFlow};
    use crate::grid::{FieldRole, HalfPlaneGrid};

    fn settings(tfinal: f64, interval: Option<f64>) -> RunSettings {
        RunSettings {
            scheme: Scheme::XiSemiLagrangian,
            nu: 0.01,
            tfinal,
            cfl: 0.5,
            dt_max: 0.03,
            fixed_dt: None,
            output_interval: interval,
            diffusion: DiffusionMethod::BackwardEuler,
        }
    }

    #[test]
    fn zero_final_time_gives_one_row() {
        let g = HalfPlaneGrid::new(8, 16, 2.0, -2.0, 2.0).unwrap();
        let xi = g.sample(FieldRole::RelativeVorticity, |r, z| libm::exp(-(r * r + z * z)));
        let mut ev = Evolver::biot_savart(g, vec![1.0, 2.0]).unwrap();
        let out = run(&mut ev, xi, &settings(0.0, Some(0.1)), |_, _| Ok(())).unwrap();
        assert_eq!(out.records.len(), 1);
        assert_eq!(out.monitor.steps, 0);
    }

    #[test]
    fn output_times_are_hit_exactly() {
        let g = HalfPlaneGrid::new(8, 16, 2.0, -2.0, 2.0).unwrap();
        let xi = g.sample(FieldRole::RelativeVorticity, |r, z| libm::exp(-(r * r + z * z)));
        let mut ev = Evolver::new(g, FlowSource::Frozen(FrozenFlow::zero(g)), vec![1.0, 2.0]).unwrap();
        let mut seen = Vec::new();
        let out = run(&mut ev, xi, &settings(0.25, Some(0.1)), |r, _| {
            seen.push(r.t);
            Ok(())
        })
        .unwrap();
        assert_eq!(seen, vec![0.0, 0.1, 0.2, 0.25]);
        assert_eq!(out.records.len(), 4);
        assert!(out.monitor.worst_lp_increase.iter().all(|v| *v <= 1e-12));
        assert!(out.monitor.worst_dissipation_excess.iter().all(|v| *v <= 1e-12));
    }
}
