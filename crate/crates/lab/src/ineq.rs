//! Randomized inequality suites with parallel evaluation and JSON reports.
//!
//! Members are evaluated in parallel and collected in family order before
//! any reduction, so reports do not depend on the thread count.

use std::path::{Path, PathBuf};

use axisym_core::inequality::{
    ap_product_weight, member_ratio, random_family, refine_member, sample_balls, summarize_ap, summarize_suite,
    top_indices, Ball3D, BoxQuadrature, FamilyMember, Suite, SuiteReport, SuiteSpec, TestFunctionSpec, REFINE_STARTS,
};
use rayon::prelude::*;
use serde::Serialize;
use serde_json::{json, Value};

use crate::error::{LabError, Result};
use crate::output::format_p;
use crate::run::write_json;

/// Default exponent of each suite (`γ` for Hardy).
pub fn default_p(suite: Suite) -> f64 {
    match suite {
        Suite::Ap => 1.5,
        Suite::Sobolev | Suite::Nash => 2.0,
        Suite::Interp => 1.8,
        Suite::Hardy => 0.0,
    }
}

/// Default sample count: `10⁵` balls for A_p, `10³` functions otherwise.
pub fn default_samples(suite: Suite) -> usize {
    match suite {
        Suite::Ap => 100_000,
        _ => 1000,
    }
}

fn ap_values(p: f64, w: f64, balls: &[Ball3D]) -> Result<Vec<f64>> {
    let values: std::result::Result<Vec<f64>, _> = balls.par_iter().map(|b| ap_product_weight(p, w, b)).collect();
    Ok(values?)
}

fn member_values(spec: &SuiteSpec, family: &[FamilyMember], quad: &BoxQuadrature) -> Result<Vec<f64>> {
    let values: std::result::Result<Vec<f64>, _> = family.par_iter().map(|m| member_ratio(spec, m, quad)).collect();
    Ok(values?)
}

fn refined(
    spec: &SuiteSpec,
    family: &[FamilyMember],
    values: &[f64],
    quad: &BoxQuadrature,
) -> Vec<(FamilyMember, f64)> {
    top_indices(values, REFINE_STARTS)
        .par_iter()
        .map(|&i| refine_member(spec, &family[i], values[i], quad))
        .collect()
}

/// Runs a suite. For A_p, `weight` replaces the weight exponent (`p` by
/// default; 0 gives the constant-weight control).
pub fn evaluate(spec: &SuiteSpec, weight: Option<f64>) -> Result<SuiteReport> {
    Ok(evaluate_nested(spec, weight, &[spec.samples])?.remove(0))
}

/// Reports for the leading `sizes[k]` members of one family (or one ball
/// sample), sharing the evaluations. Used for the doubling check: the
/// family of size `2N` extends the one of size `N`.
pub fn evaluate_nested(spec: &SuiteSpec, weight: Option<f64>, sizes: &[usize]) -> Result<Vec<SuiteReport>> {
    let n = sizes.iter().copied().max().unwrap_or(0);
    if n == 0 {
        return Err(LabError::config("--samples: must be positive"));
    }
    if spec.suite == Suite::Ap {
        let w = weight.unwrap_or(spec.p);
        let balls = sample_balls(n, spec.seed);
        let values = ap_values(spec.p, w, &balls)?;
        return Ok(sizes
            .iter()
            .map(|&m| {
                let scan = summarize_ap(spec.p, w, &balls[..m], &values[..m]);
                let mut s = axisym_core::inequality::ap_report(&SuiteSpec { samples: m, ..*spec }, &scan);
                s.samples = m;
                s
            })
            .collect());
    }
    let quad = BoxQuadrature::default();
    let family = random_family(n, spec.seed);
    let values = member_values(spec, &family, &quad)?;
    sizes
        .iter()
        .map(|&m| {
            let sub = SuiteSpec { samples: m, ..*spec };
            let refined = refined(&sub, &family[..m], &values[..m], &quad);
            Ok(summarize_suite(&sub, &family[..m], &values[..m], &refined, &quad)?)
        })
        .collect()
}

/// JSON description of the maximizing member or ball.
pub fn argmax_params(report: &SuiteReport) -> Value {
    if let Some(b) = report.argmax_ball {
        return json!({ "d": b.d, "x3": b.x3, "radius": b.radius, "far_field": b.is_far_field() });
    }
    let Some(m) = report.argmax else {
        return Value::Null;
    };
    let mut v = match m.f {
        TestFunctionSpec::Gaussian {
            rc,
            zc,
            wr,
            wz,
            amplitude,
            cutoff,
        } => {
            json!({ "family": "gaussian", "rc": rc, "zc": zc, "wr": wr, "wz": wz, "amplitude": amplitude, "cutoff": cutoff })
        }
        TestFunctionSpec::RingBump {
            rc,
            zc,
            radius,
            width,
            amplitude,
        } => {
            json!({ "family": "ring_bump", "rc": rc, "zc": zc, "radius": radius, "width": width, "amplitude": amplitude })
        }
        TestFunctionSpec::PolyBump { rc, zc, wr, wz, coeffs } => {
            json!({ "family": "poly_bump", "rc": rc, "zc": zc, "wr": wr, "wz": wz, "coeffs": coeffs })
        }
    };
    if report.suite == Suite::Hardy {
        v["strip"] = json!(m.strip);
    }
    v["unit"] = json!(m.unit);
    v
}

/// The JSON report written by `verify ineq`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IneqReport {
    pub suite: String,
    pub p: f64,
    pub samples: usize,
    pub empirical_sup: f64,
    pub argmax_params: Value,
    pub seed: u64,
    /// Supremum over the random sample before the local search.
    pub sampled_sup: f64,
    pub non_finite: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub scale_defect: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub weight_exponent: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub far_field_sup: Option<f64>,
    /// `3^p`, the far-field bound, for the A_p suite.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub far_field_bound: Option<f64>,
}

impl IneqReport {
    pub fn new(report: &SuiteReport, weight: Option<f64>) -> Self {
        let ap = report.suite == Suite::Ap;
        Self {
            suite: report.suite.name().into(),
            p: report.p,
            samples: report.samples,
            empirical_sup: report.empirical_sup,
            argmax_params: argmax_params(report),
            seed: report.seed,
            sampled_sup: report.sampled_sup,
            non_finite: report.non_finite,
            scale_defect: report.scale_defect,
            weight_exponent: ap.then(|| weight.unwrap_or(report.p)),
            far_field_sup: report.far_field_sup,
            far_field_bound: ap.then(|| 3f64.powf(report.p)),
        }
    }

    pub fn file_name(&self) -> String {
        format!("ineq_{}_p{}_seed{}.json", self.suite, format_p(self.p), self.seed)
    }
}

/// Runs a suite and writes its report into `dir`.
pub fn verify(spec: &SuiteSpec, weight: Option<f64>, dir: &Path) -> Result<(IneqReport, PathBuf)> {
    if spec.suite == Suite::Ap && !(spec.p > 1.0 && spec.p < 2.0) {
        return Err(LabError::config(format!(
            "--p: the A_p suite needs p in (1, 2) (got {})",
            spec.p
        )));
    }
    let report = IneqReport::new(&evaluate(spec, weight)?, weight);
    std::fs::create_dir_all(dir).map_err(|e| LabError::io(dir, e))?;
    let path = dir.join(report.file_name());
    write_json(&path, &report)?;
    Ok((report, path))
}
