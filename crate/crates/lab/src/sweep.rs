//! Vanishing-viscosity sweep: one run per viscosity on a shared grid, field
//! and time-step schedule, compared pairwise and through their energy
//! deficits.

use std::path::Path;

use axisym_core::evolution::cfl_dt;
use axisym_core::{VelocityField, TWO_PI};
use rayon::prelude::*;
use serde::Serialize;

use crate::config::RunConfig;
use crate::error::{LabError, Result};
use crate::output::format_p;
use crate::run::{evolver, execute_run_from, initial_field, write_json, RunResult};

pub const SWEEP_FILE: &str = "sweep.json";

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MemberSummary {
    pub nu: f64,
    pub dir: String,
    pub steps: u64,
    pub energy_deficit: f64,
    pub energy_balance_residual: f64,
    pub impulse_drift: f64,
}

/// `‖u_{ν_k}(t) − u_{ν_{k+1}}(t)‖_{L²(B_R)}` at each sampled time.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CauchyRow {
    pub nu_a: f64,
    pub nu_b: f64,
    pub differences: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DeficitEntry {
    pub nu: f64,
    pub t: f64,
    pub deficit: f64,
}

/// Log-log fit of the final-time deficit against `ν`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DeficitFit {
    pub t: f64,
    pub exponent: f64,
    pub residual: f64,
}

/// `deficit(ν, t) ≤ C (νt)^{1 − 3/(2p)}` with `C` fitted on the largest `ν`
/// and checked on every member.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BoundCheck {
    pub p: f64,
    pub exponent: f64,
    pub constant: f64,
    /// `max deficit / (C (νt)^e)` over all members and times.
    pub worst_ratio: f64,
    pub holds: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepResult {
    pub nus: Vec<f64>,
    pub dt: f64,
    pub ball_radius: f64,
    pub members: Vec<MemberSummary>,
    pub times: Vec<f64>,
    pub cauchy: Vec<CauchyRow>,
    /// Whether the pairwise differences decrease along the sequence at
    /// every sampled time after the first.
    pub cauchy_monotone: bool,
    pub deficits: Vec<DeficitEntry>,
    pub deficit_fit: Option<DeficitFit>,
    pub bound: Option<BoundCheck>,
}

/// `‖a − b‖_{L²(B_R)}` over the 3-D ball of radius `radius` about the
/// origin.
pub fn ball_l2_difference(a: &VelocityField, b: &VelocityField, radius: f64) -> f64 {
    let g = a.grid;
    let area = g.cell_area();
    let mut s = 0.0;
    for i in 0..g.nr {
        let r = g.r(i);
        for j in 0..g.nz {
            let z = g.z(j);
            if r * r + z * z > radius * radius {
                continue;
            }
            let k = g.idx(i, j);
            let (dr, dz) = (a.ur[k] - b.ur[k], a.uz[k] - b.uz[k]);
            s += (dr * dr + dz * dz) * r * area;
        }
    }
    (TWO_PI * s).sqrt()
}

fn regression(x: &[f64], y: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx) * (a - mx)).sum();
    let slope = sxy / sxx;
    let ss: f64 = x.iter().zip(y).map(|(a, b)| (b - my - slope * (a - mx)).powi(2)).sum();
    (slope, (ss / n).sqrt())
}

/// The deficit exponent `1 − 3/(2p)` of the rough-data bound.
pub fn deficit_bound_exponent(p: f64) -> f64 {
    1.0 - 1.5 / p
}

fn bound_check(p: f64, deficits: &[DeficitEntry], largest_nu: f64) -> Option<BoundCheck> {
    let e = deficit_bound_exponent(p);
    let scale = |d: &DeficitEntry| (d.nu * d.t).powf(e);
    let constant = deficits
        .iter()
        .filter(|d| d.nu == largest_nu && d.t > 0.0 && d.nu > 0.0)
        .map(|d| d.deficit / scale(d))
        .fold(f64::NEG_INFINITY, f64::max);
    if !constant.is_finite() || constant <= 0.0 {
        return None;
    }
    let worst_ratio = deficits
        .iter()
        .filter(|d| d.t > 0.0 && d.nu > 0.0)
        .map(|d| d.deficit / (constant * scale(d)))
        .fold(f64::NEG_INFINITY, f64::max);
    Some(BoundCheck {
        p,
        exponent: e,
        constant,
        worst_ratio,
        holds: worst_ratio <= 1.0 + 1e-9,
    })
}

/// Runs every viscosity in `nus` (strictly decreasing, at least four) into
/// `dir/nu_<k>` and writes `sweep.json`. Members run concurrently; all
/// share the initial field and the step `dt` (the configured `fixed_dt`, or
/// the CFL step of the initial velocity).
pub fn sweep(cfg: &RunConfig, nus: &[f64], dir: &Path) -> Result<SweepResult> {
    cfg.validate()?;
    let sc = cfg
        .sweep
        .clone()
        .ok_or_else(|| LabError::config("sweep: section required for the sweep command"))?;
    if nus.len() < 4 {
        return Err(LabError::config(format!(
            "--nus: need at least 4 viscosities (got {})",
            nus.len()
        )));
    }
    if nus.iter().any(|nu| !(nu.is_finite() && *nu >= 0.0)) {
        return Err(LabError::config("--nus: viscosities must be finite and >= 0"));
    }
    if nus.windows(2).any(|w| w[1] >= w[0]) {
        return Err(LabError::config("--nus: viscosities must be strictly decreasing"));
    }
    std::fs::create_dir_all(dir).map_err(|e| LabError::io(dir, e))?;
    let grid = cfg.grid.build()?;
    let xi0 = initial_field(cfg, &grid)?;
    let dt = match cfg.fixed_dt {
        Some(dt) => dt,
        None => {
            let mut ev = evolver(cfg, grid)?;
            let state = ev.initial_state(xi0.clone(), nus[0], 0.0)?;
            cfl_dt(&state, cfg.cfl, cfg.dt_max)
        }
    };
    let results: Vec<Result<RunResult>> = nus
        .par_iter()
        .enumerate()
        .map(|(k, &nu)| {
            let mut member = cfg.clone();
            member.nu = nu;
            member.fixed_dt = Some(dt);
            execute_run_from(&member, &dir.join(format!("nu_{k}")), xi0.clone()).map_err(|e| LabError::SweepMember {
                nu,
                source: Box::new(e),
            })
        })
        .collect();
    let mut runs = Vec::with_capacity(results.len());
    for r in results {
        runs.push(r?);
    }

    let members = runs
        .iter()
        .zip(nus)
        .enumerate()
        .map(|(k, (r, &nu))| MemberSummary {
            nu,
            dir: format!("nu_{k}"),
            steps: r.summary.steps,
            energy_deficit: r.outcome.records.last().map_or(0.0, |x| x.energy_deficit),
            energy_balance_residual: r.summary.energy_balance_residual,
            impulse_drift: r.summary.impulse_drift,
        })
        .collect();
    let times: Vec<f64> = runs[0].velocities.iter().map(|(t, _)| *t).collect();
    for r in &runs[1..] {
        let other: Vec<f64> = r.velocities.iter().map(|(t, _)| *t).collect();
        if other != times {
            return Err(LabError::config("sweep members produced different output times"));
        }
    }
    let cauchy: Vec<CauchyRow> = runs
        .windows(2)
        .zip(nus.windows(2))
        .map(|(pair, nu)| CauchyRow {
            nu_a: nu[0],
            nu_b: nu[1],
            differences: pair[0]
                .velocities
                .iter()
                .zip(&pair[1].velocities)
                .map(|((_, a), (_, b))| ball_l2_difference(a, b, sc.ball_radius))
                .collect(),
        })
        .collect();
    let cauchy_monotone =
        (1..times.len()).all(|k| cauchy.windows(2).all(|w| w[1].differences[k] < w[0].differences[k]));
    let deficits: Vec<DeficitEntry> = runs
        .iter()
        .zip(nus)
        .flat_map(|(r, &nu)| {
            r.outcome.records.iter().map(move |x| DeficitEntry {
                nu,
                t: x.t,
                deficit: x.energy_deficit,
            })
        })
        .collect();
    let t_last = *times.last().unwrap_or(&0.0);
    let finals: Vec<(f64, f64)> = runs
        .iter()
        .zip(nus)
        .filter_map(|(r, &nu)| {
            let d = r.outcome.records.last()?.energy_deficit;
            (d > 0.0 && nu > 0.0).then(|| (nu.ln(), d.ln()))
        })
        .collect();
    let deficit_fit = (finals.len() >= 2 && t_last > 0.0).then(|| {
        let (x, y): (Vec<f64>, Vec<f64>) = finals.into_iter().unzip();
        let (exponent, residual) = regression(&x, &y);
        DeficitFit {
            t: t_last,
            exponent,
            residual,
        }
    });
    let bound = bound_check(sc.bound_p, &deficits, nus[0]);
    let result = SweepResult {
        nus: nus.to_vec(),
        dt,
        ball_radius: sc.ball_radius,
        members,
        times,
        cauchy,
        cauchy_monotone,
        deficits,
        deficit_fit,
        bound,
    };
    write_json(&dir.join(SWEEP_FILE), &result)?;
    Ok(result)
}

/// Human-readable one-line summary of a sweep.
pub fn describe(s: &SweepResult) -> String {
    let fit = s
        .deficit_fit
        .as_ref()
        .map_or("n/a".to_string(), |f| format!("{:.3}", f.exponent));
    let bound = s.bound.as_ref().map_or("n/a".to_string(), |b| {
        format!("p={} C={:.4e} holds={}", format_p(b.p), b.constant, b.holds)
    });
    format!(
        "{} members, deficit exponent {fit}, bound {bound}, Cauchy monotone {}",
        s.members.len(),
        s.cauchy_monotone
    )
}
