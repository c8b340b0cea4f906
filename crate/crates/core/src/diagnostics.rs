//! Conserved and monitored quantities.
//!
//! Every norm labelled "3-D" carries the factor `2π` from the azimuthal
//! integration, so `‖f‖_{L^p(R³)}^p = 2π ∫_H |f|^p r d(r,z)`.

use alloc::vec::Vec;

use crate::error::{invalid, Error, Result};
use crate::evolution::FluidState;
use crate::grid::{gradient, integrate_weighted, AxisParity, ScalarField, VelocityField};
use crate::TWO_PI;

/// One time-stamped row of monitored quantities.
#[derive(Debug, Clone, PartialEq)]
pub struct DiagnosticsRecord {
    pub t: f64,
    pub nu: f64,
    /// `(p, ‖ξ‖_{L^p(R³)})` for each monitored finite `p`.
    pub lp_norms: Vec<(f64, f64)>,
    pub linf_norm: f64,
    pub impulse: f64,
    pub energy: f64,
    pub enstrophy: f64,
    pub grad_u_sq: f64,
    /// `(p, 2π ∫₀ᵗ D_p)`: cumulative realized dissipation of `|ξ|^p / p`.
    pub dissipation: Vec<(f64, f64)>,
    /// `‖u₀‖² − ‖u(t)‖²`.
    pub energy_deficit: f64,
}

impl DiagnosticsRecord {
    /// Evaluates every column for `state`. `dissipation` holds the
    /// cumulative half-plane dissipation per entry of `ps` and is scaled by
    /// `2π` here.
    pub fn compute(state: &FluidState, ps: &[f64], initial_energy: f64, dissipation: &[f64]) -> Result<Self> {
        if dissipation.len() != ps.len() {
            return Err(invalid("one dissipation entry per monitored exponent is required"));
        }
        let omega = state.omega();
        let energy = kinetic_energy(&state.u);
        let rec = Self {
            t: state.t,
            nu: state.nu,
            lp_norms: ps.iter().map(|&p| (p, lp_norm(&state.xi, p))).collect(),
            linf_norm: state.xi.max_abs(),
            impulse: impulse(&state.xi),
            energy,
            enstrophy: enstrophy(&omega),
            grad_u_sq: grad_u_sq(&state.u),
            dissipation: ps.iter().zip(dissipation).map(|(&p, d)| (p, TWO_PI * d)).collect(),
            energy_deficit: initial_energy - energy,
        };
        if !rec.is_finite() {
            return Err(Error::NonFinite { step: state.step_index });
        }
        Ok(rec)
    }

    pub fn is_finite(&self) -> bool {
        let scalars = [
            self.t,
            self.nu,
            self.linf_norm,
            self.impulse,
            self.energy,
            self.enstrophy,
            self.grad_u_sq,
            self.energy_deficit,
        ];
        scalars.iter().all(|v| v.is_finite())
            && self.lp_norms.iter().all(|(_, v)| v.is_finite())
            && self.dissipation.iter().all(|(_, v)| v.is_finite())
    }

    /// Stored `‖ξ‖_{L^p(R³)}`, or the max norm for `p = ∞`.
    pub fn norm(&self, p: f64) -> Option<f64> {
        if p == f64::INFINITY {
            return Some(self.linf_norm);
        }
        self.lp_norms.iter().find(|(q, _)| *q == p).map(|(_, v)| *v)
    }
}

/// `‖ξ‖_{L^p(R³)}`; `p = ∞` gives the max norm.
pub fn lp_norm(xi: &ScalarField, p: f64) -> f64 {
    if p == f64::INFINITY {
        return xi.max_abs();
    }
    let s = integrate_weighted(xi, 1.0, p).unwrap_or(f64::NAN);
    libm::pow(TWO_PI * s, 1.0 / p)
}

pub fn lp_norm_xi(state: &FluidState, p: f64) -> Result<f64> {
    if !(p >= 1.0) {
        return Err(invalid(alloc::format!("p must be >= 1 (got {p})")));
    }
    Ok(lp_norm(&state.xi, p))
}

/// `∫_H ω r² d(r,z) = ∫_H ξ r³ d(r,z)`, signed, without the `2π`.
pub fn impulse(xi: &ScalarField) -> f64 {
    let g = xi.grid;
    let area = g.cell_area();
    (0..g.nr)
        .map(|i| {
            let r = g.r(i);
            let s: f64 = xi.values[i * g.nz..(i + 1) * g.nz].iter().sum();
            s * r * r * r * area
        })
        .sum()
}

/// `‖u‖²_{L²(R³)}`.
pub fn kinetic_energy(u: &VelocityField) -> f64 {
    let g = u.grid;
    let area = g.cell_area();
    let mut total = 0.0;
    for i in 0..g.nr {
        let row = i * g.nz..(i + 1) * g.nz;
        let s: f64 = u.ur[row.clone()]
            .iter()
            .zip(&u.uz[row])
            .map(|(a, b)| a * a + b * b)
            .sum();
        total += s * g.r(i) * area;
    }
    TWO_PI * total
}

/// `‖ω‖²_{L²(R³)}`.
pub fn enstrophy(omega: &ScalarField) -> f64 {
    TWO_PI * integrate_weighted(omega, 1.0, 2.0).unwrap_or(f64::NAN)
}

/// Pointwise `|∇_x u|²` of an axisymmetric swirl-free field, storage order.
pub fn grad_u_density(u: &VelocityField) -> Vec<f64> {
    let g = u.grid;
    let ur = ScalarField {
        grid: g,
        values: u.ur.clone(),
        role: crate::FieldRole::Passive,
    };
    let uz = ScalarField {
        grid: g,
        values: u.uz.clone(),
        role: crate::FieldRole::Passive,
    };
    let (dr_ur, dz_ur) = gradient(&ur, AxisParity::Odd);
    let (dr_uz, dz_uz) = gradient(&uz, AxisParity::Even);
    let mut out = Vec::with_capacity(g.len());
    for i in 0..g.nr {
        let r = g.r(i);
        for j in 0..g.nz {
            let k = i * g.nz + j;
            let hoop = u.ur[k] / r;
            out.push(
                dr_ur.values[k] * dr_ur.values[k]
                    + hoop * hoop
                    + dz_ur.values[k] * dz_ur.values[k]
                    + dr_uz.values[k] * dr_uz.values[k]
                    + dz_uz.values[k] * dz_uz.values[k],
            );
        }
    }
    out
}

/// `‖∇_x u‖²_{L²(R³)}`.
pub fn grad_u_sq(u: &VelocityField) -> f64 {
    let g = u.grid;
    let d = grad_u_density(u);
    let area = g.cell_area();
    let mut total = 0.0;
    for i in 0..g.nr {
        let s: f64 = d[i * g.nz..(i + 1) * g.nz].iter().sum();
        total += s * g.r(i) * area;
    }
    TWO_PI * total
}

/// `|‖∇u‖² − ‖ω‖²| / ‖ω‖²`, or the absolute difference when `ω = 0`.
pub fn enstrophy_identity_residual(u: &VelocityField, omega: &ScalarField) -> Result<f64> {
    u.grid.same_as(&omega.grid)?;
    let e = enstrophy(omega);
    let d = (grad_u_sq(u) - e).abs();
    Ok(if e > 0.0 { d / e } else { d })
}

/// `max_t |E(t) + 2ν ∫₀ᵗ ‖∇u‖² − E(0)| / E(0)`, with the time integral by
/// the trapezoid rule over the records. The factor 2 follows from
/// `d/dt ‖u‖² = −2ν ‖∇u‖²`.
pub fn energy_balance_residual(records: &[DiagnosticsRecord]) -> f64 {
    let Some(first) = records.first() else {
        return 0.0;
    };
    let e0 = first.energy;
    let mut integral = 0.0;
    let mut worst: f64 = 0.0;
    for w in records.windows(2) {
        let (a, b) = (&w[0], &w[1]);
        integral += 0.5 * (b.t - a.t) * (a.nu * a.grad_u_sq + b.nu * b.grad_u_sq);
        let defect = b.energy + 2.0 * integral - e0;
        worst = worst.max(defect.abs());
    }
    if e0 > 0.0 {
        worst / e0
    } else {
        worst
    }
}

/// `(3/2)(1/p − 1/q)`.
pub fn decay_exponent(p: f64, q: f64) -> f64 {
    let iq = if q == f64::INFINITY { 0.0 } else { 1.0 / q };
    1.5 * (1.0 / p - iq)
}

/// Least-squares power law over a window of records.
#[derive(Debug, Clone, PartialEq)]
pub struct RateFit {
    /// Decay exponent of `‖ξ(t)‖_q / ‖ξ(t)‖_p` against `νt`.
    pub exponent: f64,
    /// Decay exponent of `‖ξ(t)‖_q` alone.
    pub raw_exponent: f64,
    pub window: (f64, f64),
    /// RMS residual of the log-log regression for `exponent`.
    pub residual: f64,
    /// `sup_t ‖ξ(t)‖_q (νt)^e / ‖ξ₀‖_p` with `e` the theoretical exponent.
    pub bound_constant: f64,
    pub samples: usize,
}

/// Slope and RMS residual of `y` against `x`.
fn regression(x: &[f64], y: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx) * (a - mx)).sum();
    let slope = sxy / sxx;
    let ss: f64 = x
        .iter()
        .zip(y)
        .map(|(a, b)| {
            let e = b - my - slope * (a - mx);
            e * e
        })
        .sum();
    (slope, libm::sqrt(ss / n))
}

/// Fits the decay of `‖ξ‖_q` against `νt` on records with `t ∈ [t0, t1]`.
///
/// The self-similar heat profile makes `‖ξ‖_q / ‖ξ‖_p` decay exactly like
/// `(νt)^{-(3/2)(1/p−1/q)}`, so that ratio is the fitted quantity; the raw
/// decay of `‖ξ‖_q` is reported alongside. Both norms must be present in the
/// records. The window must cover at least one decade.
pub fn decay_rate_fit(records: &[DiagnosticsRecord], p: f64, q: f64, t0: f64, t1: f64) -> Result<RateFit> {
    if !(q >= p && p >= 1.0) {
        return Err(invalid(alloc::format!("need 1 <= p <= q (got p={p}, q={q})")));
    }
    let first = records
        .first()
        .ok_or_else(|| Error::InsufficientSpan("no records".into()))?;
    let norm0 = first
        .norm(p)
        .ok_or_else(|| invalid(alloc::format!("p={p} is not monitored")))?;
    if first.norm(q).is_none() {
        return Err(invalid(alloc::format!("q={q} is not monitored")));
    }
    let e = decay_exponent(p, q);
    let mut xs = Vec::new();
    let mut ratio = Vec::new();
    let mut raw = Vec::new();
    let mut bound_constant: f64 = 0.0;
    let mut lo = f64::INFINITY;
    let mut hi: f64 = 0.0;
    for rec in records.iter().filter(|r| r.t >= t0 && r.t <= t1 && r.t > 0.0) {
        let nt = rec.nu * rec.t;
        let (np, nq) = (rec.norm(p).unwrap_or(f64::NAN), rec.norm(q).unwrap_or(f64::NAN));
        if !(nt > 0.0 && np > 0.0 && nq > 0.0) {
            continue;
        }
        xs.push(libm::log(nt));
        ratio.push(libm::log(nq / np));
        raw.push(libm::log(nq));
        bound_constant = bound_constant.max(nq * libm::pow(nt, e) / norm0);
        lo = lo.min(rec.t);
        hi = hi.max(rec.t);
    }
    if xs.len() < 3 || !(hi >= 10.0 * lo) {
        return Err(Error::InsufficientSpan(alloc::format!(
            "{} usable records spanning [{lo}, {hi}]; need at least 3 over one decade",
            xs.len()
        )));
    }
    let (slope, residual) = regression(&xs, &ratio);
    let (raw_slope, _) = regression(&xs, &raw);
    Ok(RateFit {
        exponent: -slope,
        raw_exponent: -raw_slope,
        window: (lo, hi),
        residual,
        bound_constant,
        samples: xs.len(),
    })
}

/// Result of [`local_w1p_check`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LocalW1pReport {
    /// `‖u‖_{W^{1,p*}(B_R)}` over the 3-D ball.
    pub norm: f64,
    /// `‖ξ₀‖_{L^p(R³)} + ‖ω₀‖_{L¹(H)}`.
    pub data_norm: f64,
    pub ratio: f64,
}

/// `‖u‖_{W^{1,p*}(B_R)}` for the 3-D ball of radius `radius` about the
/// origin, compared with the size of the initial data.
pub fn local_w1p_check(
    state: &FluidState,
    radius: f64,
    p_star: f64,
    xi0_lp: f64,
    omega0_l1: f64,
) -> Result<LocalW1pReport> {
    let g = state.grid();
    if !(radius > 0.0 && radius <= g.r_max && -radius >= g.z_min && radius <= g.z_max) {
        return Err(invalid(alloc::format!(
            "ball of radius {radius} does not fit in the domain"
        )));
    }
    if !(p_star > 1.0 && p_star <= 2.0) {
        return Err(invalid(alloc::format!("p_star must lie in (1, 2] (got {p_star})")));
    }
    let d = grad_u_density(&state.u);
    let area = g.cell_area();
    let mut total = 0.0;
    for i in 0..g.nr {
        let r = g.r(i);
        for j in 0..g.nz {
            let z = g.z(j);
            if r * r + z * z > radius * radius {
                continue;
            }
            let k = g.idx(i, j);
            let u2 = state.u.ur[k] * state.u.ur[k] + state.u.uz[k] * state.u.uz[k];
            total += (libm::pow(u2, 0.5 * p_star) + libm::pow(d[k], 0.5 * p_star)) * r * area;
        }
    }
    let norm = libm::pow(TWO_PI * total, 1.0 / p_star);
    let data_norm = xi0_lp + omega0_l1;
    let ratio = if data_norm > 0.0 { norm / data_norm } else { 0.0 };
    Ok(LocalW1pReport { norm, data_norm, ratio })
}

/// `‖u‖_{L^{2p/(2−p)}(H)} / ‖ω‖_{L^p(H)}` with the flat measure on `H`.
/// Returns 0 when `ω = 0`.
pub fn sobolev_embedding_ratio(u: &VelocityField, omega: &ScalarField, p: f64) -> Result<f64> {
    if !(p > 1.0 && p < 2.0) {
        return Err(invalid(alloc::format!("p must lie in (1, 2) (got {p})")));
    }
    u.grid.same_as(&omega.grid)?;
    let q = 2.0 * p / (2.0 - p);
    let area = u.grid.cell_area();
    let uq: f64 =
        u.ur.iter()
            .zip(&u.uz)
            .map(|(a, b)| libm::pow(a * a + b * b, 0.5 * q))
            .sum::<f64>()
            * area;
    let wp = integrate_weighted(omega, 0.0, p)?;
    if wp == 0.0 {
        return Ok(0.0);
    }
    Ok(libm::pow(uq, 1.0 / q) / libm::pow(wp, 1.0 / p))
}

/// `ν (p−1) ∫_H |ξ|^{p−2} |∇ξ|² r d(r,z)`, the instantaneous dissipation
/// of `(1/p) ∫ |ξ|^p r`. Cells with `ξ = 0` contribute nothing.
pub fn dissipation_rate(xi: &ScalarField, nu: f64, p: f64) -> Result<f64> {
    if !(p >= 1.0) {
        return Err(invalid(alloc::format!("p must be >= 1 (got {p})")));
    }
    let g = xi.grid;
    let (dr, dz) = gradient(xi, AxisParity::Even);
    let area = g.cell_area();
    let mut total = 0.0;
    for i in 0..g.nr {
        for j in 0..g.nz {
            let k = g.idx(i, j);
            let v = xi.values[k].abs();
            if v == 0.0 {
                continue;
            }
            let g2 = dr.values[k] * dr.values[k] + dz.values[k] * dz.values[k];
            total += libm::pow(v, p - 2.0) * g2 * g.r(i) * area;
        }
    }
    Ok(nu * (p - 1.0) * total)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{FieldRole, HalfPlaneGrid};

    fn rec(t: f64, nu: f64, energy: f64, grad: f64) -> DiagnosticsRecord {
        DiagnosticsRecord {
            t,
            nu,
            lp_norms: Vec::new(),
            linf_norm: 0.0,
            impulse: 0.0,
            energy,
            enstrophy: 0.0,
            grad_u_sq: grad,
            dissipation: Vec::new(),
            energy_deficit: 0.0,
        }
    }

    #[test]
    fn exponents() {
        assert_eq!(decay_exponent(1.0, f64::INFINITY), 1.5);
        assert_eq!(decay_exponent(2.0, f64::INFINITY), 0.75);
    }

    #[test]
    fn energy_balance_exact_decay() {
        // E = e^{-2νλ t} with ‖∇u‖² = λ E
        let (nu, lam) = (0.1, 3.0);
        let records: Vec<_> = (0..=2000)
            .map(|k| {
                let t = k as f64 * 1e-3;
                let e = libm::exp(-2.0 * nu * lam * t);
                rec(t, nu, e, lam * e)
            })
            .collect();
        assert!(energy_balance_residual(&records) < 1e-6);
        assert_eq!(energy_balance_residual(&records[..1]), 0.0);
    }

    #[test]
    fn rigid_translation_energy() {
        let g = HalfPlaneGrid::new(8, 8, 1.0, 0.0, 1.0).unwrap();
        let u = VelocityField::sample(g, |_, _| (0.0, 2.0));
        // 2π ∫ 4 r dr dz over the unit square
        assert!((kinetic_energy(&u) - 4.0 * core::f64::consts::PI).abs() < 1e-12);
        let zero = ScalarField::zeros(g, FieldRole::RelativeVorticity);
        assert_eq!(lp_norm(&zero, 1.0), 0.0);
        assert_eq!(impulse(&zero), 0.0);
    }

    #[test]
    fn short_window_is_rejected() {
        let records: Vec<_> = (1..5)
            .map(|k| {
                let mut r = rec(k as f64, 1.0, 0.0, 0.0);
                r.lp_norms = alloc::vec![(1.0, 1.0)];
                r.linf_norm = 1.0 / k as f64;
                r
            })
            .collect();
        assert!(matches!(
            decay_rate_fit(&records, 1.0, f64::INFINITY, 0.0, 10.0),
            Err(Error::InsufficientSpan(_))
        ));
    }
}
