//! Empirical constants of the weighted inequalities behind the estimates:
//! the Muckenhoupt condition for `r^{-p}`, weighted maximal regularity,
//! weighted Sobolev, Hardy, interpolation and Nash inequalities.
//!
//! Everything here measures ratios over families of test functions or
//! balls. A finite, stable supremum is evidence, never a proof, and the
//! reported constants belong to the family that produced them.

use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::PI;

use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};

use crate::error::{invalid, Result};
use crate::grid::{ScalarField, VelocityField};
use crate::quadrature::{tanh_sinh, GaussLegendre};
use crate::special::{ellip_e, ellip_ke};

/// A ball in `R³`, described by the distance `d` of its centre to the
/// symmetry axis, the centre's height and its radius.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Ball3D {
    pub d: f64,
    pub x3: f64,
    pub radius: f64,
}

impl Ball3D {
    pub fn new(d: f64, x3: f64, radius: f64) -> Result<Self> {
        if !(radius > 0.0 && d >= 0.0 && radius.is_finite() && d.is_finite() && x3.is_finite()) {
            return Err(invalid("ball needs radius > 0 and axis distance d >= 0"));
        }
        Ok(Self { d, x3, radius })
    }

    /// From Cartesian centre coordinates.
    pub fn from_center(x1: f64, x2: f64, x3: f64, radius: f64) -> Result<Self> {
        Self::new(libm::hypot(x1, x2), x3, radius)
    }

    pub fn is_far_field(&self) -> bool {
        self.d >= 2.0 * self.radius
    }

    pub fn volume(&self) -> f64 {
        4.0 / 3.0 * PI * self.radius * self.radius * self.radius
    }

    /// Area of the cylinder `{|x'| = r}` inside the ball, in closed form
    /// through complete elliptic integrals.
    pub fn cylinder_section(&self, r: f64) -> f64 {
        let (d, rr) = (self.d, self.radius);
        let c_plus_b = rr * rr - (r - d) * (r - d);
        if !(c_plus_b > 0.0) || r <= 0.0 {
            return 0.0;
        }
        if d == 0.0 {
            return 4.0 * PI * r * libm::sqrt(c_plus_b);
        }
        let m = 4.0 * r * d / c_plus_b;
        // ∫₀^θ₀ √(c + b cos θ) dθ with c + b = R² − (r − d)², b = 2rd
        let angular = if m <= 1.0 {
            2.0 * libm::sqrt(c_plus_b) * ellip_e(m)
        } else {
            let k = libm::sqrt(m);
            let (kk, e) = ellip_ke(1.0 / m);
            2.0 * libm::sqrt(c_plus_b) * (k * e - (m - 1.0) / k * kk)
        };
        4.0 * r * angular
    }

    /// `∫_B g(|x'|) dx` by tanh-sinh in the axis distance, split where the
    /// cylinder section changes form.
    pub fn integrate_radial(&self, tol: f64, g: impl FnMut(f64) -> f64) -> f64 {
        self.integrate_radial_graded(tol, 1.0, g)
    }

    /// As [`integrate_radial`](Self::integrate_radial), with `r = b u^k` on
    /// a piece starting at the axis. For `g ~ r^{-w}` the choice
    /// `k = 1/(2 − w)` makes the transformed integrand bounded there.
    pub fn integrate_radial_graded(&self, tol: f64, k: f64, mut g: impl FnMut(f64) -> f64) -> f64 {
        let (d, rr) = (self.d, self.radius);
        let lo = (d - rr).max(0.0);
        let hi = d + rr;
        let mut f = |r: f64| g(r) * self.cylinder_section(r);
        let kink = rr - d;
        let mut piece = |a: f64, b: f64| -> f64 {
            if a == 0.0 && k != 1.0 {
                tanh_sinh(0.0, 1.0, tol, |u| {
                    let r = b * libm::pow(u, k);
                    // the transformed integrand is bounded, so nodes this close
                    // to the axis carry no weight worth keeping (and r^{-w}
                    // would overflow there)
                    if r > 1e-100 * b {
                        f(r) * k * r / u
                    } else {
                        0.0
                    }
                })
            } else {
                tanh_sinh(a, b, tol, &mut f)
            }
        };
        if kink > lo && kink < hi {
            piece(lo, kink) + piece(kink, hi)
        } else {
            piece(lo, hi)
        }
    }
}

const AP_TOL: f64 = 1e-11;

/// `(⨍_B m)(⨍_B m^{-q/p})^{p/q}` for `m = r^{-w}` and `1/p + 1/q = 1`.
/// `w = p` is the weight of the maximal-regularity estimate and `w = 0`
/// is the constant control.
pub fn ap_product_weight(p: f64, w: f64, ball: &Ball3D) -> Result<f64> {
    if !(p > 1.0 && p.is_finite()) {
        return Err(invalid(alloc::format!("A_p needs p > 1 (got {p})")));
    }
    let touches_axis = ball.d < ball.radius;
    if touches_axis && w >= 2.0 {
        return Err(invalid(alloc::format!(
            "r^-{w} is not integrable near the axis in three dimensions (needs exponent < 2)"
        )));
    }
    let q = p / (p - 1.0);
    let dual = w * q / p;
    let vol = ball.volume();
    let grade = if w > 0.0 { 1.0 / (2.0 - w) } else { 1.0 };
    let a = ball.integrate_radial_graded(AP_TOL, grade, |r| libm::pow(r, -w)) / vol;
    let b = ball.integrate_radial(AP_TOL, |r| libm::pow(r, dual)) / vol;
    Ok(a * libm::pow(b, p / q))
}

/// The Muckenhoupt product for the weight `m = r^{-p}`.
pub fn ap_product(p: f64, ball: &Ball3D) -> Result<f64> {
    ap_product_weight(p, p, ball)
}

/// Uniform `[0, 1)` from 53 random bits.
pub fn unit_f64(rng: &mut ChaCha8Rng) -> f64 {
    (rng.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

fn log_uniform(rng: &mut ChaCha8Rng, lo: f64, hi: f64) -> f64 {
    log_map(unit_f64(rng), lo, hi)
}

/// Balls with radius log-uniform over `[1e-2, 1e2]` and `d/R` log-uniform
/// over `[1e-2, 1e2]`.
pub fn sample_balls(count: usize, seed: u64) -> Vec<Ball3D> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|_| {
            let radius = log_uniform(&mut rng, 1e-2, 1e2);
            let ratio = log_uniform(&mut rng, 1e-2, 1e2);
            let x3 = (unit_f64(&mut rng) - 0.5) * 2.0 * radius;
            Ball3D {
                d: ratio * radius,
                x3,
                radius,
            }
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ApScan {
    pub p: f64,
    pub weight_exponent: f64,
    pub samples: usize,
    pub sup: f64,
    pub argmax: Ball3D,
    pub far_field_sup: f64,
    pub far_field_samples: usize,
    pub near_field_sup: f64,
    pub non_finite: usize,
}

/// Folds per-ball products into a scan summary; the order of `values`
/// must match `balls` so that ties resolve deterministically.
pub fn summarize_ap(p: f64, w: f64, balls: &[Ball3D], values: &[f64]) -> ApScan {
    let mut out = ApScan {
        p,
        weight_exponent: w,
        samples: balls.len(),
        sup: f64::NEG_INFINITY,
        argmax: balls.first().copied().unwrap_or(Ball3D {
            d: 0.0,
            x3: 0.0,
            radius: 1.0,
        }),
        far_field_sup: f64::NEG_INFINITY,
        far_field_samples: 0,
        near_field_sup: f64::NEG_INFINITY,
        non_finite: 0,
    };
    for (b, &v) in balls.iter().zip(values) {
        if !v.is_finite() {
            out.non_finite += 1;
            continue;
        }
        if v > out.sup {
            out.sup = v;
            out.argmax = *b;
        }
        if b.is_far_field() {
            out.far_field_samples += 1;
            out.far_field_sup = out.far_field_sup.max(v);
        } else {
            out.near_field_sup = out.near_field_sup.max(v);
        }
    }
    out
}

/// Empirical supremum of the Muckenhoupt product over `count` random balls.
pub fn ap_scan(p: f64, w: f64, count: usize, seed: u64) -> Result<ApScan> {
    let balls = sample_balls(count, seed);
    let values = balls
        .iter()
        .map(|b| ap_product_weight(p, w, b))
        .collect::<Result<Vec<_>>>()?;
    Ok(summarize_ap(p, w, &balls, &values))
}

/// `‖(1/r)∇_x u‖_{L^p(R³)} / ‖ξ‖_{L^p(R³)}` on the grid, with `|∇_x u|`
/// including the hoop term `u_r/r`. Returns 0 when `ξ ≡ 0`.
pub fn weighted_maxreg_ratio(u: &VelocityField, xi: &ScalarField, p: f64) -> Result<f64> {
    u.grid.same_as(&xi.grid)?;
    if !(p >= 1.0 && p.is_finite()) {
        return Err(invalid(alloc::format!("p must be finite and >= 1 (got {p})")));
    }
    let g = u.grid;
    let denom = crate::diagnostics::lp_norm(xi, p);
    if denom == 0.0 {
        return Ok(0.0);
    }
    let density = crate::diagnostics::grad_u_density(u);
    let mut acc = 0.0;
    for i in 0..g.nr {
        let r = g.r(i);
        for j in 0..g.nz {
            acc += libm::pow(libm::sqrt(density[g.idx(i, j)]) / r, p) * g.r_weight(i);
        }
    }
    Ok(libm::pow(2.0 * PI * acc, 1.0 / p) / denom)
}

#[inline]
fn poly_bump(x2: f64) -> (f64, f64) {
    // b(ρ²) = (1 − ρ²)⁴ and db/d(ρ²)
    if x2 >= 1.0 {
        (0.0, 0.0)
    } else {
        let q = 1.0 - x2;
        let q3 = q * q * q;
        (q3 * q, -4.0 * q3)
    }
}

/// Smooth cutoff: 1 on `[0, c/2]`, quintic ramp to 0 at `c`.
#[inline]
fn soft_cutoff(rho: f64, c: f64) -> (f64, f64) {
    let x = (rho - 0.5 * c) / (0.5 * c);
    if x <= 0.0 {
        (1.0, 0.0)
    } else if x >= 1.0 {
        (0.0, 0.0)
    } else {
        let s = x * x * x * (10.0 - 15.0 * x + 6.0 * x * x);
        let ds = 30.0 * x * x * (1.0 - x) * (1.0 - x);
        (1.0 - s, -ds / (0.5 * c))
    }
}

/// A compactly supported test function on the half-plane with its gradient
/// in closed form.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TestFunctionSpec {
    /// `A exp(−ρ²)` with `ρ² = ((r−rc)/wr)² + ((z−zc)/wz)²`, cut off
    /// smoothly between `ρ = cutoff/2` and `ρ = cutoff`.
    Gaussian {
        rc: f64,
        zc: f64,
        wr: f64,
        wz: f64,
        amplitude: f64,
        cutoff: f64,
    },
    /// `A (1 − ((s − radius)/width)²)⁴` with `s` the distance to `(rc, zc)`.
    RingBump {
        rc: f64,
        zc: f64,
        radius: f64,
        width: f64,
        amplitude: f64,
    },
    /// `(c₀ + c₁x + c₂y + c₃xy)(1 − x² − y²)⁴` with `x = (r−rc)/wr`,
    /// `y = (z−zc)/wz`.
    PolyBump {
        rc: f64,
        zc: f64,
        wr: f64,
        wz: f64,
        coeffs: [f64; 4],
    },
}

impl TestFunctionSpec {
    /// `(f, ∂_r f, ∂_z f)`.
    pub fn eval(&self, r: f64, z: f64) -> (f64, f64, f64) {
        match *self {
            TestFunctionSpec::Gaussian {
                rc,
                zc,
                wr,
                wz,
                amplitude,
                cutoff,
            } => {
                let (x, y) = ((r - rc) / wr, (z - zc) / wz);
                let rho = libm::hypot(x, y);
                let (chi, dchi) = soft_cutoff(rho, cutoff);
                if chi == 0.0 {
                    return (0.0, 0.0, 0.0);
                }
                let e = amplitude * libm::exp(-rho * rho);
                // d/dρ [e χ] = e (χ' − 2ρ χ); dρ/dx = x/ρ
                let radial = if rho > 0.0 {
                    e * (dchi - 2.0 * rho * chi) / rho
                } else {
                    -2.0 * e
                };
                (e * chi, radial * x / wr, radial * y / wz)
            }
            TestFunctionSpec::RingBump {
                rc,
                zc,
                radius,
                width,
                amplitude,
            } => {
                let (dr, dz) = (r - rc, z - zc);
                let s = libm::hypot(dr, dz);
                let x = (s - radius) / width;
                let (b, db) = poly_bump(x * x);
                if b == 0.0 || s == 0.0 {
                    return (amplitude * b, 0.0, 0.0);
                }
                let ds = amplitude * db * 2.0 * x / width;
                (amplitude * b, ds * dr / s, ds * dz / s)
            }
            TestFunctionSpec::PolyBump {
                rc,
                zc,
                wr,
                wz,
                coeffs: c,
            } => {
                let (x, y) = ((r - rc) / wr, (z - zc) / wz);
                let (b, db) = poly_bump(x * x + y * y);
                let poly = c[0] + c[1] * x + c[2] * y + c[3] * x * y;
                let px = c[1] + c[3] * y;
                let py = c[2] + c[3] * x;
                (
                    poly * b,
                    (px * b + poly * db * 2.0 * x) / wr,
                    (py * b + poly * db * 2.0 * y) / wz,
                )
            }
        }
    }

    /// `[r_lo, r_hi] × [z_lo, z_hi]` containing the support.
    pub fn support_box(&self) -> (f64, f64, f64, f64) {
        match *self {
            TestFunctionSpec::Gaussian {
                rc, zc, wr, wz, cutoff, ..
            } => (
                (rc - cutoff * wr).max(0.0),
                rc + cutoff * wr,
                zc - cutoff * wz,
                zc + cutoff * wz,
            ),
            TestFunctionSpec::RingBump {
                rc, zc, radius, width, ..
            } => {
                let e = radius + width;
                ((rc - e).max(0.0), rc + e, zc - e, zc + e)
            }
            TestFunctionSpec::PolyBump { rc, zc, wr, wz, .. } => ((rc - wr).max(0.0), rc + wr, zc - wz, zc + wz),
        }
    }

    /// The function `x ↦ f(λ x)`.
    pub fn dilated(&self, lambda: f64) -> Self {
        let l = lambda;
        match *self {
            TestFunctionSpec::Gaussian {
                rc,
                zc,
                wr,
                wz,
                amplitude,
                cutoff,
            } => TestFunctionSpec::Gaussian {
                rc: rc / l,
                zc: zc / l,
                wr: wr / l,
                wz: wz / l,
                amplitude,
                cutoff,
            },
            TestFunctionSpec::RingBump {
                rc,
                zc,
                radius,
                width,
                amplitude,
            } => TestFunctionSpec::RingBump {
                rc: rc / l,
                zc: zc / l,
                radius: radius / l,
                width: width / l,
                amplitude,
            },
            TestFunctionSpec::PolyBump { rc, zc, wr, wz, coeffs } => TestFunctionSpec::PolyBump {
                rc: rc / l,
                zc: zc / l,
                wr: wr / l,
                wz: wz / l,
                coeffs,
            },
        }
    }

    pub fn family_name(&self) -> &'static str {
        match self {
            TestFunctionSpec::Gaussian { .. } => "gaussian",
            TestFunctionSpec::RingBump { .. } => "ring_bump",
            TestFunctionSpec::PolyBump { .. } => "poly_bump",
        }
    }
}

/// Tensor composite Gauss–Legendre quadrature on boxes.
#[derive(Debug, Clone)]
pub struct BoxQuadrature {
    rule: GaussLegendre,
    panels: usize,
}

impl Default for BoxQuadrature {
    fn default() -> Self {
        Self::new(6, 16)
    }
}

impl BoxQuadrature {
    pub fn new(nodes: usize, panels: usize) -> Self {
        Self {
            rule: GaussLegendre::new(nodes),
            panels: panels.max(1),
        }
    }

    /// `∫∫ f(r, z) dr dz` over the box.
    pub fn integrate(&self, (r0, r1, z0, z1): (f64, f64, f64, f64), mut f: impl FnMut(f64, f64) -> f64) -> f64 {
        if !(r1 > r0 && z1 > z0) {
            return 0.0;
        }
        let (rs, rw) = self.rule.composite_points(r0, r1, self.panels);
        let (zs, zw) = self.rule.composite_points(z0, z1, self.panels);
        let mut total = 0.0;
        for (r, wr) in rs.iter().zip(&rw) {
            let mut row = 0.0;
            for (z, wz) in zs.iter().zip(&zw) {
                row += wz * f(*r, *z);
            }
            total += wr * row;
        }
        total
    }

    /// Several integrals of the same function at once.
    pub fn integrate_many<const N: usize>(
        &self,
        bx: (f64, f64, f64, f64),
        mut f: impl FnMut(f64, f64) -> [f64; N],
    ) -> [f64; N] {
        let (r0, r1, z0, z1) = bx;
        let mut total = [0.0; N];
        if !(r1 > r0 && z1 > z0) {
            return total;
        }
        let (rs, rw) = self.rule.composite_points(r0, r1, self.panels);
        let (zs, zw) = self.rule.composite_points(z0, z1, self.panels);
        for (r, wr) in rs.iter().zip(&rw) {
            for (z, wz) in zs.iter().zip(&zw) {
                let v = f(*r, *z);
                for k in 0..N {
                    total[k] += wr * wz * v[k];
                }
            }
        }
        total
    }
}

/// Exponents of the weighted Sobolev inequality
/// `(∫|f|^t r^α)^{1/t} ≲ (∫|∇f|^s r^β)^{1/s}` on the half-plane.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SobolevExponents {
    pub s: f64,
    pub t: f64,
    pub alpha: f64,
    pub beta: f64,
}

impl SobolevExponents {
    /// Checks `1 ≤ s ≤ t < ∞`, the balance `(2+α)/t = (2−s+β)/s` and
    /// `α + t > 0`, naming the violated condition.
    pub fn new(s: f64, t: f64, alpha: f64, beta: f64) -> Result<Self> {
        if !(s >= 1.0 && s <= t && t.is_finite()) {
            return Err(invalid(alloc::format!("need 1 <= s <= t < inf (s = {s}, t = {t})")));
        }
        let lhs = (2.0 + alpha) / t;
        let rhs = (2.0 - s + beta) / s;
        if (lhs - rhs).abs() > 1e-12 * (1.0 + lhs.abs()) {
            return Err(invalid(alloc::format!(
                "scaling balance (2+alpha)/t = (2-s+beta)/s fails: {lhs} vs {rhs}"
            )));
        }
        if !(alpha + t > 0.0) {
            return Err(invalid(alloc::format!(
                "alpha + t > 0 fails (alpha = {alpha}, t = {t})"
            )));
        }
        Ok(Self { s, t, alpha, beta })
    }

    /// The tuple used to derive the interpolation inequality for exponent
    /// `p`: weight `r` on the left, `t = (16p−12)/(7p−6)`,
    /// `s = (16p−12)/(13p−10)`, `β = (11p−10)/(13p−10)`.
    pub fn interpolation_tuple(p: f64) -> Result<Self> {
        if !(p > 1.0 && p <= 2.0) {
            return Err(invalid(alloc::format!("p must lie in (1, 2] (got {p})")));
        }
        let t = (16.0 * p - 12.0) / (7.0 * p - 6.0);
        let s = (16.0 * p - 12.0) / (13.0 * p - 10.0);
        let beta = (11.0 * p - 10.0) / (13.0 * p - 10.0);
        Self::new(s, t, 1.0, beta)
    }
}

fn ratio(num: f64, den: f64) -> f64 {
    if num == 0.0 {
        0.0
    } else {
        num / den
    }
}

fn grad_norm(fr: f64, fz: f64) -> f64 {
    libm::hypot(fr, fz)
}

/// `(∫|f|^t r^α)^{1/t} / (∫|∇f|^s r^β)^{1/s}` over the half-plane.
pub fn weighted_sobolev_ratio(f: &TestFunctionSpec, e: &SobolevExponents, quad: &BoxQuadrature) -> f64 {
    let [a, b] = quad.integrate_many(f.support_box(), |r, z| {
        let (v, fr, fz) = f.eval(r, z);
        [
            libm::pow(v.abs(), e.t) * libm::pow(r, e.alpha),
            libm::pow(grad_norm(fr, fz), e.s) * libm::pow(r, e.beta),
        ]
    });
    ratio(libm::pow(a, 1.0 / e.t), libm::pow(b, 1.0 / e.s))
}

/// `∫_A |f − g| r^γ / ∫_B |∇f| r^{γ+1}` with `g(r, z) = f(2r, z)`,
/// `A = [R, 2R] × R` and `B = [R, 4R] × R`.
pub fn hardy_ratio(f: &TestFunctionSpec, gamma: f64, strip: f64, quad: &BoxQuadrature) -> Result<f64> {
    if !(gamma > -1.0) {
        return Err(invalid(alloc::format!(
            "Hardy inequality needs gamma > -1 (got {gamma})"
        )));
    }
    if !(strip > 0.0 && strip.is_finite()) {
        return Err(invalid("strip radius R must be positive"));
    }
    let (r0, r1, z0, z1) = f.support_box();
    // on A, f − g is supported where r or 2r meets the support
    let a_box = ((0.5 * r0).max(strip), r1.min(2.0 * strip), z0, z1);
    let num = quad.integrate(a_box, |r, z| {
        let (v, _, _) = f.eval(r, z);
        let (w, _, _) = f.eval(2.0 * r, z);
        (v - w).abs() * libm::pow(r, gamma)
    });
    let b_box = (r0.max(strip), r1.min(4.0 * strip), z0, z1);
    let den = quad.integrate(b_box, |r, z| {
        let (_, fr, fz) = f.eval(r, z);
        grad_norm(fr, fz) * libm::pow(r, gamma + 1.0)
    });
    Ok(ratio(num, den))
}

/// `λ = (3p − 3)/(7p − 6)`.
pub fn interpolation_lambda(p: f64) -> f64 {
    (3.0 * p - 3.0) / (7.0 * p - 6.0)
}

/// `(∫|f|⁴ r)^{1/4}` divided by
/// `(∫f² r)^{λ/2} (∫|∇f|² r)^{1/4} (∫|∇f|^p r^{1−p})^{(1/2−λ)/p}`.
pub fn interpolation_ratio(f: &TestFunctionSpec, p: f64, quad: &BoxQuadrature) -> Result<f64> {
    if !(p > 1.0 && p <= 2.0) {
        return Err(invalid(alloc::format!("p must lie in (1, 2] (got {p})")));
    }
    let bx = f.support_box();
    if bx.0 <= 0.0 && p > 1.0 {
        // r^{1−p} against |∇f|^p is integrable in r for p < 2, but the
        // family is meant to stay away from the axis
        return Err(invalid(
            "support touches the axis; r^(1-p) weight would be evaluated at r = 0",
        ));
    }
    let lambda = interpolation_lambda(p);
    let [l4, l2, g2, gp] = quad.integrate_many(bx, |r, z| {
        let (v, fr, fz) = f.eval(r, z);
        let gn = grad_norm(fr, fz);
        let v2 = v * v;
        [
            v2 * v2 * r,
            v2 * r,
            gn * gn * r,
            libm::pow(gn, p) * libm::pow(r, 1.0 - p),
        ]
    });
    let rhs = libm::pow(l2, lambda / 2.0) * libm::pow(g2, 0.25) * libm::pow(gp, (0.5 - lambda) / p);
    Ok(ratio(libm::pow(l4, 0.25), rhs))
}

/// `‖f‖₂ / (‖f‖₁^{2/5} ‖∇f‖₂^{3/5})` in `R³` for the axisymmetric extension.
pub fn nash_ratio(f: &TestFunctionSpec, quad: &BoxQuadrature) -> f64 {
    let [l1, l2, g2] = quad.integrate_many(f.support_box(), |r, z| {
        let (v, fr, fz) = f.eval(r, z);
        let w = 2.0 * PI * r;
        [v.abs() * w, v * v * w, (fr * fr + fz * fz) * w]
    });
    ratio(libm::sqrt(l2), libm::pow(l1, 0.4) * libm::pow(g2, 0.3))
}

/// Inequality suites with randomized families.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Suite {
    Ap,
    Sobolev,
    Interp,
    Nash,
    Hardy,
}

impl Suite {
    pub fn name(self) -> &'static str {
        match self {
            Suite::Ap => "ap",
            Suite::Sobolev => "sobolev",
            Suite::Interp => "interp",
            Suite::Nash => "nash",
            Suite::Hardy => "hardy",
        }
    }

    pub fn from_name(s: &str) -> Option<Self> {
        Some(match s {
            "ap" => Suite::Ap,
            "sobolev" => Suite::Sobolev,
            "interp" => Suite::Interp,
            "nash" => Suite::Nash,
            "hardy" => Suite::Hardy,
            _ => return None,
        })
    }
}

/// Coordinates of a family member in the unit cube: scale, height,
/// aspect, axis offset, amplitude, three shape parameters, strip radius.
pub const FAMILY_DIM: usize = 9;

/// One family member; Hardy samples also carry a strip radius.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FamilyMember {
    /// 0: Gaussian, 1: ring bump, 2: polynomial bump.
    pub kind: u8,
    pub unit: [f64; FAMILY_DIM],
    pub f: TestFunctionSpec,
    pub strip: f64,
}

fn log_map(u: f64, lo: f64, hi: f64) -> f64 {
    libm::exp(libm::log(lo) + u * (libm::log(hi) - libm::log(lo)))
}

/// Maps unit-cube coordinates to a member. Every member has its support
/// strictly inside `r > 0`, and the shape ranges are bounded so that the
/// scale-invariant ratios have a finite supremum over the family.
pub fn member_from_unit(kind: u8, unit: [f64; FAMILY_DIM]) -> FamilyMember {
    let u = unit;
    let scale = log_map(u[0], 0.1, 10.0);
    let zc = (u[1] - 0.5) * 4.0 * scale;
    let aspect = log_map(u[2], 0.25, 4.0);
    let offset = 1.2 + 8.8 * u[3];
    let amplitude = log_map(u[4], 0.1, 10.0);
    let f = match kind % 3 {
        0 => {
            let (wr, wz) = (scale, scale * aspect);
            let cutoff = 4.0;
            TestFunctionSpec::Gaussian {
                rc: offset * cutoff * wr,
                zc,
                wr,
                wz,
                amplitude,
                cutoff,
            }
        }
        1 => {
            let width = scale * (0.2 + 0.6 * u[5]);
            let radius = scale;
            TestFunctionSpec::RingBump {
                rc: offset * (radius + width),
                zc,
                radius,
                width,
                amplitude,
            }
        }
        _ => {
            let (wr, wz) = (scale, scale * aspect);
            let c = |x: f64| amplitude * (2.0 * x - 1.0);
            TestFunctionSpec::PolyBump {
                rc: offset * wr,
                zc,
                wr,
                wz,
                coeffs: [amplitude, c(u[5]), c(u[6]), c(u[7])],
            }
        }
    };
    let (r0, r1, _, _) = f.support_box();
    // strips [R, 4R] that overlap the support
    let strip = log_map(u[8], 0.25 * r0, r1);
    FamilyMember {
        kind: kind % 3,
        unit,
        f,
        strip,
    }
}

/// `count` members cycling through the three families, uniform in the unit
/// cube.
pub fn random_family(count: usize, seed: u64) -> Vec<FamilyMember> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|k| {
            let mut unit = [0.0; FAMILY_DIM];
            for x in unit.iter_mut() {
                *x = unit_f64(&mut rng);
            }
            member_from_unit((k % 3) as u8, unit)
        })
        .collect()
}

/// Parameters of a randomized suite.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SuiteSpec {
    pub suite: Suite,
    /// Exponent `p` (interpolation, A_p, Sobolev tuple); `gamma` for Hardy.
    pub p: f64,
    pub samples: usize,
    pub seed: u64,
}

/// Empirical supremum of a suite, with the member that attains it.
#[derive(Debug, Clone, PartialEq)]
pub struct SuiteReport {
    pub suite: Suite,
    pub p: f64,
    pub samples: usize,
    pub seed: u64,
    /// Supremum after the local search from the best sampled members.
    pub empirical_sup: f64,
    /// Supremum over the random sample alone.
    pub sampled_sup: f64,
    pub argmax: Option<FamilyMember>,
    pub argmax_ball: Option<Ball3D>,
    pub non_finite: usize,
    /// Worst `|ratio(f) − ratio(f(λ·))| / ratio(f)` over the members
    /// checked, for λ ∈ {0.37, 3.7}; `None` where no invariance is claimed.
    pub scale_defect: Option<f64>,
    /// Far-field supremum for the A_p suite.
    pub far_field_sup: Option<f64>,
}

/// Evaluates one member of a function suite.
pub fn member_ratio(spec: &SuiteSpec, m: &FamilyMember, quad: &BoxQuadrature) -> Result<f64> {
    match spec.suite {
        Suite::Sobolev => {
            let e = SobolevExponents::interpolation_tuple(spec.p)?;
            Ok(weighted_sobolev_ratio(&m.f, &e, quad))
        }
        Suite::Interp => interpolation_ratio(&m.f, spec.p, quad),
        Suite::Nash => Ok(nash_ratio(&m.f, quad)),
        Suite::Hardy => hardy_ratio(&m.f, spec.p, m.strip, quad),
        Suite::Ap => Err(invalid("the A_p suite samples balls, not functions")),
    }
}

/// Members whose scale invariance is checked (the first few of the family).
pub const SCALE_CHECKS: usize = 32;
/// Best sampled members used as starting points of the local search.
pub const REFINE_STARTS: usize = 4;

fn dilated_member(m: &FamilyMember, lambda: f64) -> FamilyMember {
    FamilyMember {
        f: m.f.dilated(lambda),
        strip: m.strip / lambda,
        ..*m
    }
}

/// Compass search in the unit cube that maximizes the ratio, starting
/// from `m`. Members that cannot be evaluated count as `−∞`.
pub fn refine_member(spec: &SuiteSpec, m: &FamilyMember, start: f64, quad: &BoxQuadrature) -> (FamilyMember, f64) {
    let eval = |c: &FamilyMember| {
        member_ratio(spec, c, quad)
            .ok()
            .filter(|v| v.is_finite())
            .unwrap_or(f64::NEG_INFINITY)
    };
    let (mut best, mut value) = (*m, start);
    let mut step = 0.1;
    while step >= 2e-3 {
        let mut improved = false;
        for d in 0..FAMILY_DIM {
            for dir in [1.0, -1.0] {
                let mut unit = best.unit;
                unit[d] = (unit[d] + dir * step).clamp(0.0, 1.0);
                if unit[d] == best.unit[d] {
                    continue;
                }
                let cand = member_from_unit(best.kind, unit);
                let v = eval(&cand);
                if v > value {
                    best = cand;
                    value = v;
                    improved = true;
                }
            }
        }
        if !improved {
            step *= 0.5;
        }
    }
    (best, value)
}

/// Indices of the `k` largest finite values, ties to the earlier index.
pub fn top_indices(values: &[f64], k: usize) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..values.len()).filter(|&i| values[i].is_finite()).collect();
    idx.sort_by(|&a, &b| values[b].total_cmp(&values[a]).then(a.cmp(&b)));
    idx.truncate(k);
    idx
}

/// Folds member ratios (in family order) and the refined maxima into a
/// report, computing the scale defect on the first [`SCALE_CHECKS`]
/// members.
pub fn summarize_suite(
    spec: &SuiteSpec,
    family: &[FamilyMember],
    values: &[f64],
    refined: &[(FamilyMember, f64)],
    quad: &BoxQuadrature,
) -> Result<SuiteReport> {
    let mut sup = f64::NEG_INFINITY;
    let mut argmax = None;
    let mut non_finite = 0;
    for (m, &v) in family.iter().zip(values) {
        if !v.is_finite() {
            non_finite += 1;
            continue;
        }
        if v > sup {
            sup = v;
            argmax = Some(*m);
        }
    }
    let sampled_sup = sup;
    for (m, v) in refined {
        if *v > sup {
            sup = *v;
            argmax = Some(*m);
        }
    }
    let mut defect: f64 = 0.0;
    for (m, &v) in family.iter().zip(values).take(SCALE_CHECKS) {
        if !(v > 0.0) {
            continue;
        }
        for lambda in [0.37, 3.7] {
            let w = member_ratio(spec, &dilated_member(m, lambda), quad)?;
            defect = defect.max((w - v).abs() / v);
        }
    }
    Ok(SuiteReport {
        suite: spec.suite,
        p: spec.p,
        samples: family.len(),
        seed: spec.seed,
        empirical_sup: sup,
        sampled_sup,
        argmax,
        argmax_ball: None,
        non_finite,
        scale_defect: Some(defect),
        far_field_sup: None,
    })
}

/// Runs a suite sequentially. The lab crate parallelizes the member map and
/// the local searches and reuses the same summaries.
pub fn run_suite(spec: &SuiteSpec) -> Result<SuiteReport> {
    if spec.suite == Suite::Ap {
        let scan = ap_scan(spec.p, spec.p, spec.samples, spec.seed)?;
        return Ok(ap_report(spec, &scan));
    }
    let quad = BoxQuadrature::default();
    let family = random_family(spec.samples, spec.seed);
    let values = family
        .iter()
        .map(|m| member_ratio(spec, m, &quad))
        .collect::<Result<Vec<_>>>()?;
    let refined: Vec<_> = top_indices(&values, REFINE_STARTS)
        .into_iter()
        .map(|i| refine_member(spec, &family[i], values[i], &quad))
        .collect();
    summarize_suite(spec, &family, &values, &refined, &quad)
}

pub fn ap_report(spec: &SuiteSpec, scan: &ApScan) -> SuiteReport {
    SuiteReport {
        suite: Suite::Ap,
        p: spec.p,
        samples: scan.samples,
        seed: spec.seed,
        empirical_sup: scan.sup,
        sampled_sup: scan.sup,
        argmax: None,
        argmax_ball: Some(scan.argmax),
        non_finite: scan.non_finite,
        scale_defect: None,
        far_field_sup: Some(scan.far_field_sup),
    }
}

/// Hardy ratios of one function along `γ → −1⁺`.
pub fn hardy_gamma_sweep(
    f: &TestFunctionSpec,
    strip: f64,
    gammas: &[f64],
    quad: &BoxQuadrature,
) -> Result<Vec<(f64, f64)>> {
    let mut out = vec![];
    for &g in gammas {
        out.push((g, hardy_ratio(f, g, strip, quad)?));
    }
    Ok(out)
}
