//! Particle paths of the flow, transport identities along them, the weak
//! renormalized-transport residual and backward-transport duality.

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use crate::biot_savart::stream_separable_shifted;
use crate::error::{invalid, Result};
use crate::grid::{AxisParity, FieldRole, HalfPlaneGrid, ScalarField, VelocityField};
use crate::interp::Sampler;
use crate::linalg::Separable;

/// Velocity snapshots, linear in time between them and constant outside.
#[derive(Debug, Clone, PartialEq)]
pub struct VelocitySeries {
    pub times: Vec<f64>,
    pub fields: Vec<VelocityField>,
}

impl VelocitySeries {
    pub fn new(times: Vec<f64>, fields: Vec<VelocityField>) -> Result<Self> {
        if times.is_empty() || times.len() != fields.len() {
            return Err(invalid("velocity series needs one field per time and at least one"));
        }
        if times.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(invalid("velocity series times must increase strictly"));
        }
        for f in &fields[1..] {
            fields[0].grid.same_as(&f.grid)?;
        }
        Ok(Self { times, fields })
    }

    /// A steady field.
    pub fn constant(field: VelocityField) -> Self {
        Self {
            times: vec![0.0],
            fields: vec![field],
        }
    }

    pub fn grid(&self) -> HalfPlaneGrid {
        self.fields[0].grid
    }

    /// Interval index and weight of the later snapshot at time `t`.
    fn bracket(&self, t: f64) -> (usize, f64) {
        let n = self.times.len();
        if n == 1 || t <= self.times[0] {
            return (0, 0.0);
        }
        if t >= self.times[n - 1] {
            return (n - 2, 1.0);
        }
        let k = self.times.partition_point(|&s| s <= t) - 1;
        let w = (t - self.times[k]) / (self.times[k + 1] - self.times[k]);
        (k, w)
    }

    /// The interpolated field at time `t`.
    pub fn at_time(&self, t: f64) -> VelocityField {
        let (k, w) = self.bracket(t);
        if self.times.len() == 1 || w == 0.0 {
            return self.fields[k].clone();
        }
        lerp_velocity(&self.fields[k], &self.fields[k + 1], w)
    }

    pub fn max_speed(&self) -> f64 {
        self.fields
            .iter()
            .map(|f| {
                let (a, b) = f.max_abs();
                a.max(b)
            })
            .fold(0.0, f64::max)
    }
}

fn lerp_velocity(a: &VelocityField, b: &VelocityField, w: f64) -> VelocityField {
    let mix = |x: &[f64], y: &[f64]| -> Vec<f64> { x.iter().zip(y).map(|(p, q)| p + w * (q - p)).collect() };
    VelocityField {
        grid: a.grid,
        ur: mix(&a.ur, &b.ur),
        uz: mix(&a.uz, &b.uz),
    }
}

/// Bicubic evaluation of a velocity field at a point.
fn sample_velocity(u: &VelocityField, r: f64, z: f64) -> (f64, f64) {
    let sr = Sampler::new(u.grid, &u.ur, AxisParity::Odd);
    let sz = Sampler::new(u.grid, &u.uz, AxisParity::Even);
    (sr.bicubic(r, z), sz.bicubic(r, z))
}

/// Trajectories of the seeds, sampled at `times`.
#[derive(Debug, Clone, PartialEq)]
pub struct FlowMap {
    pub seeds: Vec<(f64, f64)>,
    pub times: Vec<f64>,
    /// `positions[k][s]` is `φ(times[k], seeds[s])`.
    pub positions: Vec<Vec<(f64, f64)>>,
    /// Time at which a seed left the truncated domain; it stays frozen there.
    pub exit_time: Vec<Option<f64>>,
    /// RK sub-steps that ended with `r < 0` (reflected back).
    pub axis_violations: usize,
}

impl FlowMap {
    pub fn is_active(&self, seed: usize, k: usize) -> bool {
        self.exit_time[seed].is_none_or(|te| te > self.times[k])
    }
}

/// Integrates `dφ/dt = u(t, φ)` with classical RK4 between velocity
/// snapshots, interpolating bicubically in space and linearly in time.
#[derive(Debug, Clone)]
pub struct FlowTracer {
    grid: HalfPlaneGrid,
    map: FlowMap,
    current: Vec<(f64, f64)>,
    t: f64,
}

impl FlowTracer {
    pub fn new(grid: HalfPlaneGrid, seeds: Vec<(f64, f64)>, t0: f64) -> Result<Self> {
        for &(r, z) in &seeds {
            if !(r > 0.0 && grid.contains(r, z)) {
                return Err(invalid(alloc::format!("seed ({r}, {z}) is not inside the domain")));
            }
        }
        let n = seeds.len();
        Ok(Self {
            grid,
            current: seeds.clone(),
            map: FlowMap {
                seeds: seeds.clone(),
                times: vec![t0],
                positions: vec![seeds],
                exit_time: vec![None; n],
                axis_violations: 0,
            },
            t: t0,
        })
    }

    pub fn time(&self) -> f64 {
        self.t
    }

    pub fn positions(&self) -> &[(f64, f64)] {
        &self.current
    }

    pub fn map(&self) -> &FlowMap {
        &self.map
    }

    pub fn finish(self) -> FlowMap {
        self.map
    }

    /// Advances from the tracer's time `t0` (where the velocity is `u0`) to
    /// `t1` (velocity `u1`) and appends the positions at `t1`.
    pub fn advance(&mut self, u0: &VelocityField, u1: &VelocityField, t1: f64) -> Result<()> {
        self.grid.same_as(&u0.grid)?;
        self.grid.same_as(&u1.grid)?;
        let t0 = self.t;
        let span = t1 - t0;
        if !(span >= 0.0) {
            return Err(invalid("flow tracer cannot step backwards"));
        }
        let g = self.grid;
        let speed = {
            let (a, b) = u0.max_abs();
            let (c, d) = u1.max_abs();
            a.max(b).max(c).max(d)
        };
        let n = libm::ceil(span * speed / (0.5 * g.hr.min(g.hz))).max(1.0) as usize;
        let h = span / n as f64;
        let vel = |s: f64, r: f64, z: f64| -> (f64, f64) {
            let w = if span > 0.0 { (s - t0) / span } else { 0.0 };
            let (a, b) = sample_velocity(u0, r, z);
            if w == 0.0 {
                return (a, b);
            }
            let (c, d) = sample_velocity(u1, r, z);
            (a + w * (c - a), b + w * (d - b))
        };
        for (s_idx, pos) in self.current.iter_mut().enumerate() {
            if self.map.exit_time[s_idx].is_some() {
                continue;
            }
            let (mut r, mut z) = *pos;
            for step in 0..n {
                let s = t0 + step as f64 * h;
                let k1 = vel(s, r, z);
                let k2 = vel(s + 0.5 * h, r + 0.5 * h * k1.0, z + 0.5 * h * k1.1);
                let k3 = vel(s + 0.5 * h, r + 0.5 * h * k2.0, z + 0.5 * h * k2.1);
                let k4 = vel(s + h, r + h * k3.0, z + h * k3.1);
                let mut rn = r + h / 6.0 * (k1.0 + 2.0 * k2.0 + 2.0 * k3.0 + k4.0);
                let zn = z + h / 6.0 * (k1.1 + 2.0 * k2.1 + 2.0 * k3.1 + k4.1);
                if rn < 0.0 {
                    self.map.axis_violations += 1;
                    rn = -rn;
                }
                if rn > g.r_max || zn < g.z_min || zn > g.z_max {
                    self.map.exit_time[s_idx] = Some(s + h);
                    break;
                }
                r = rn;
                z = zn;
            }
            *pos = (r, z);
        }
        self.t = t1;
        self.map.times.push(t1);
        self.map.positions.push(self.current.clone());
        Ok(())
    }
}

/// Traces `seeds` through `series` from its first time to `t_final`,
/// recording positions at every snapshot time in between and at `t_final`.
pub fn trace_flow(series: &VelocitySeries, seeds: Vec<(f64, f64)>, t_final: f64) -> Result<FlowMap> {
    let t0 = series.times[0];
    if !(t_final >= t0) {
        return Err(invalid("t_final precedes the first velocity snapshot"));
    }
    let mut tracer = FlowTracer::new(series.grid(), seeds, t0)?;
    let mut stops: Vec<f64> = series
        .times
        .iter()
        .copied()
        .filter(|&t| t > t0 && t < t_final)
        .collect();
    if t_final > t0 {
        stops.push(t_final);
    }
    let mut prev = series.at_time(t0);
    for t in stops {
        let next = series.at_time(t);
        tracer.advance(&prev, &next, t)?;
        prev = next;
    }
    Ok(tracer.finish())
}

/// `max |ξ(t_k, φ(t_k, x)) − ξ₀(x)|` over active seeds, with `xi[k]` the
/// field at `flow.times[k]`.
pub fn composition_check(xi: &[ScalarField], flow: &FlowMap) -> Result<f64> {
    if xi.len() != flow.times.len() {
        return Err(invalid("one ξ snapshot per flow time is required"));
    }
    let s0 = Sampler::new(xi[0].grid, &xi[0].values, AxisParity::Even);
    let base: Vec<f64> = flow.seeds.iter().map(|&(r, z)| s0.bicubic(r, z)).collect();
    let mut worst: f64 = 0.0;
    for (k, field) in xi.iter().enumerate() {
        let s = Sampler::new(field.grid, &field.values, AxisParity::Even);
        for (i, &(r, z)) in flow.positions[k].iter().enumerate() {
            if flow.is_active(i, k) {
                worst = worst.max((s.bicubic(r, z) - base[i]).abs());
            }
        }
    }
    Ok(worst)
}

/// `max |ω(t_k, φ) − ω₀(x) φ^r / r|`: the statement that `r / φ^r` is the
/// Jacobian of the flow, in the form it takes for `ω = r ξ`.
pub fn jacobian_check(omega: &[ScalarField], flow: &FlowMap) -> Result<f64> {
    if omega.len() != flow.times.len() {
        return Err(invalid("one ω snapshot per flow time is required"));
    }
    let s0 = Sampler::new(omega[0].grid, &omega[0].values, AxisParity::Odd);
    let base: Vec<f64> = flow.seeds.iter().map(|&(r, z)| s0.bicubic(r, z)).collect();
    let mut worst: f64 = 0.0;
    for (k, field) in omega.iter().enumerate() {
        let s = Sampler::new(field.grid, &field.values, AxisParity::Odd);
        for (i, &(r, z)) in flow.positions[k].iter().enumerate() {
            if flow.is_active(i, k) {
                let r0 = flow.seeds[i].0;
                worst = worst.max((s.bicubic(r, z) - base[i] * r / r0).abs());
            }
        }
    }
    Ok(worst)
}

/// Seeds for [`flow_jacobian_defect`]: each centre followed by its four
/// neighbours at `±eps` in `r` and `z`.
pub fn jacobian_stencil_seeds(centres: &[(f64, f64)], eps: f64) -> Vec<(f64, f64)> {
    let mut out = Vec::with_capacity(5 * centres.len());
    for &(r, z) in centres {
        out.extend_from_slice(&[(r, z), (r + eps, z), (r - eps, z), (r, z + eps), (r, z - eps)]);
    }
    out
}

/// `max |det Dφ − r/φ^r| / (r/φ^r)` with `Dφ` by central differences over
/// seeds laid out by [`jacobian_stencil_seeds`].
pub fn flow_jacobian_defect(flow: &FlowMap, eps: f64) -> Result<f64> {
    if !flow.seeds.len().is_multiple_of(5) {
        return Err(invalid("seeds must come in groups of five"));
    }
    let mut worst: f64 = 0.0;
    for (k, pos) in flow.positions.iter().enumerate() {
        for c in 0..flow.seeds.len() / 5 {
            let b = 5 * c;
            if !(0..5).all(|o| flow.is_active(b + o, k)) {
                continue;
            }
            let d = 2.0 * eps;
            let drr = (pos[b + 1].0 - pos[b + 2].0) / d;
            let dzr = (pos[b + 1].1 - pos[b + 2].1) / d;
            let drz = (pos[b + 3].0 - pos[b + 4].0) / d;
            let dzz = (pos[b + 3].1 - pos[b + 4].1) / d;
            let det = drr * dzz - drz * dzr;
            let expect = flow.seeds[b].0 / pos[b].0;
            worst = worst.max((det - expect).abs() / expect);
        }
    }
    Ok(worst)
}

#[inline]
fn smoothstep5(x: f64) -> f64 {
    if x <= 0.0 {
        0.0
    } else if x >= 1.0 {
        1.0
    } else {
        x * x * x * (10.0 - 15.0 * x + 6.0 * x * x)
    }
}

/// A bounded `C¹` function vanishing on `|s| ≤ delta`:
/// `β(s) = ρ(s) · cap · tanh(|s|^k / cap)`, times `sign(s)` when `odd`,
/// with `ρ` a quintic ramp from 0 at `|s| = delta` to 1 at `2 delta`.
#[derive(Debug, Clone, PartialEq)]
pub struct RenormFunction {
    pub name: String,
    pub k: f64,
    pub odd: bool,
    pub delta: f64,
    pub cap: f64,
}

impl RenormFunction {
    pub fn new(name: &str, k: f64, odd: bool, delta: f64, cap: f64) -> Result<Self> {
        if !(k >= 0.0 && delta > 0.0 && cap > 0.0 && k.is_finite() && delta.is_finite() && cap.is_finite()) {
            return Err(invalid(
                "renormalization function needs k >= 0 and positive delta and cap",
            ));
        }
        Ok(Self {
            name: name.into(),
            k,
            odd,
            delta,
            cap,
        })
    }

    pub fn eval(&self, s: f64) -> f64 {
        let a = s.abs();
        if a <= self.delta {
            return 0.0;
        }
        let rho = smoothstep5((a - self.delta) / self.delta);
        let v = rho * self.cap * libm::tanh(libm::pow(a, self.k) / self.cap);
        if self.odd && s < 0.0 {
            -v
        } else {
            v
        }
    }
}

/// The built-in family scaled to data of magnitude `scale`.
pub fn builtin_betas(scale: f64) -> Vec<RenormFunction> {
    let delta = 0.05 * scale;
    let mk = |name: &str, k: f64, odd: bool| RenormFunction {
        name: name.into(),
        k,
        odd,
        delta,
        cap: if k == 0.0 { 1.0 } else { libm::pow(scale, k) },
    };
    vec![
        mk("clip_abs", 1.0, false),
        mk("clip_square", 2.0, false),
        mk("clip_signed", 1.0, true),
        mk("clip_cube", 3.0, true),
        mk("plateau", 0.0, false),
    ]
}

/// `f(t, r, z) = η(t / horizon) b((r − rc)/wr) b((z − zc)/wz)` with
/// `η(s) = (1 − s²)³` and `b(x) = (1 − x²)⁴` on their supports.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TestFunction {
    pub rc: f64,
    pub wr: f64,
    pub zc: f64,
    pub wz: f64,
    pub horizon: f64,
}

#[inline]
fn bump(x: f64) -> (f64, f64) {
    if x.abs() >= 1.0 {
        (0.0, 0.0)
    } else {
        let q = 1.0 - x * x;
        let q3 = q * q * q;
        (q3 * q, -8.0 * x * q3)
    }
}

impl TestFunction {
    pub fn time_factor(&self, t: f64) -> (f64, f64) {
        let s = t / self.horizon;
        if !(0.0..1.0).contains(&s) {
            return (0.0, 0.0);
        }
        let q = 1.0 - s * s;
        (q * q * q, -6.0 * s * q * q / self.horizon)
    }

    /// `(f, ∂_t f, ∂_r f, ∂_z f)`.
    pub fn eval(&self, t: f64, r: f64, z: f64) -> (f64, f64, f64, f64) {
        let (e, de) = self.time_factor(t);
        let (br, dbr) = bump((r - self.rc) / self.wr);
        let (bz, dbz) = bump((z - self.zc) / self.wz);
        (
            e * br * bz,
            de * br * bz,
            e * dbr / self.wr * bz,
            e * br * dbz / self.wz,
        )
    }
}

/// `count` test functions on a lattice over the box
/// `[r_lo, r_hi] × [z_lo, z_hi]`, alternating two widths and two time
/// horizons. Supports stay inside `r > 0`.
pub fn test_function_library(
    r_lo: f64,
    r_hi: f64,
    z_lo: f64,
    z_hi: f64,
    horizon: f64,
    count: usize,
) -> Result<Vec<TestFunction>> {
    if !(r_lo > 0.0 && r_hi > r_lo && z_hi > z_lo && horizon > 0.0) {
        return Err(invalid(
            "test-function box must satisfy 0 < r_lo < r_hi, z_lo < z_hi, horizon > 0",
        ));
    }
    let side = 4usize;
    let dr = (r_hi - r_lo) / side as f64;
    let dz = (z_hi - z_lo) / side as f64;
    let mut out = Vec::with_capacity(count);
    for m in 0..count {
        let a = m % side;
        let b = (m / side) % side;
        let c = m / (side * side);
        let rc = r_lo + (a as f64 + 0.5) * dr;
        let zc = z_lo + (b as f64 + 0.5) * dz;
        let grow = if c.is_multiple_of(2) { 0.8 } else { 1.6 };
        let wr = (grow * dr).min(0.9 * rc);
        let wz = grow * dz;
        let h = if c.is_multiple_of(2) { horizon } else { 0.5 * horizon };
        out.push(TestFunction {
            rc,
            wr,
            zc,
            wz,
            horizon: h,
        });
    }
    Ok(out)
}

/// Streaming evaluation of the weak renormalized-transport residual
/// `∫₀ᵀ∫_H β(ξ)(∂_t f + u·∇f) r + ∫_H β(ξ₀) f(0) r` for every pair of a
/// `β` and a test function, with the trapezoid rule over the observed
/// times.
#[derive(Debug, Clone)]
pub struct RenormAccumulator {
    grid: HalfPlaneGrid,
    betas: Vec<RenormFunction>,
    tests: Vec<TestFunction>,
    /// Per pair: running integral, running normalization.
    sum: Vec<f64>,
    norm: Vec<f64>,
    last: Option<(f64, Vec<f64>, Vec<f64>)>,
    /// Per β: `∫ β(ξ₀) r` and the worst drift of `∫ β(ξ(t)) r`.
    beta_mass0: Vec<f64>,
    beta_drift: Vec<f64>,
}

impl RenormAccumulator {
    pub fn new(grid: HalfPlaneGrid, betas: Vec<RenormFunction>, tests: Vec<TestFunction>) -> Self {
        let n = betas.len() * tests.len();
        let nb = betas.len();
        Self {
            grid,
            betas,
            tests,
            sum: vec![0.0; n],
            norm: vec![0.0; n],
            last: None,
            beta_mass0: vec![0.0; nb],
            beta_drift: vec![0.0; nb],
        }
    }

    /// Adds the state at time `t`; calls must come in increasing time
    /// order, starting at `t = 0`.
    pub fn observe(&mut self, t: f64, xi: &ScalarField, u: &VelocityField) -> Result<()> {
        let g = self.grid;
        g.same_as(&xi.grid)?;
        g.same_as(&u.grid)?;
        let nb = self.betas.len();
        let area = g.cell_area();
        let bvals: Vec<Vec<f64>> = self
            .betas
            .iter()
            .map(|b| xi.values.iter().map(|&s| b.eval(s)).collect())
            .collect();
        let mut integrand = vec![0.0; self.sum.len()];
        let mut abs_integrand = vec![0.0; self.sum.len()];
        let first = self.last.is_none();
        for (ti, f) in self.tests.iter().enumerate() {
            let (e, _) = f.time_factor(t);
            let (_, de) = f.time_factor(t);
            if e == 0.0 && de == 0.0 && !first {
                continue;
            }
            let i_lo = libm::floor((f.rc - f.wr) / g.hr - 0.5).max(0.0) as usize;
            let i_hi = (libm::ceil((f.rc + f.wr) / g.hr + 0.5).max(0.0) as usize).min(g.nr);
            let j_lo = libm::floor((f.zc - f.wz - g.z_min) / g.hz - 0.5).max(0.0) as usize;
            let j_hi = (libm::ceil((f.zc + f.wz - g.z_min) / g.hz + 0.5).max(0.0) as usize).min(g.nz);
            for i in i_lo..i_hi {
                let r = g.r(i);
                for j in j_lo..j_hi {
                    let (fv, ft, fr, fz) = f.eval(t, r, g.z(j));
                    let k = g.idx(i, j);
                    let transport = (ft + u.ur[k] * fr + u.uz[k] * fz) * r * area;
                    let initial = if first { fv * r * area } else { 0.0 };
                    for (bi, bv) in bvals.iter().enumerate() {
                        let slot = bi * self.tests.len() + ti;
                        integrand[slot] += bv[k] * transport;
                        abs_integrand[slot] += (bv[k] * transport).abs();
                        if first {
                            self.sum[slot] += bv[k] * initial;
                            self.norm[slot] += (bv[k] * initial).abs();
                        }
                    }
                }
            }
        }
        for bi in 0..nb {
            let mass: f64 = (0..g.nr)
                .map(|i| {
                    let s: f64 = bvals[bi][i * g.nz..(i + 1) * g.nz].iter().sum();
                    s * g.r(i) * area
                })
                .sum();
            if first {
                self.beta_mass0[bi] = mass;
            } else {
                self.beta_drift[bi] = self.beta_drift[bi].max((mass - self.beta_mass0[bi]).abs());
            }
        }
        if let Some((t_prev, prev, prev_abs)) = &self.last {
            let h = t - t_prev;
            if !(h >= 0.0) {
                return Err(invalid("renormalization observations must be in time order"));
            }
            for s in 0..self.sum.len() {
                self.sum[s] += 0.5 * h * (prev[s] + integrand[s]);
                self.norm[s] += 0.5 * h * (prev_abs[s] + abs_integrand[s]);
            }
        }
        self.last = Some((t, integrand, abs_integrand));
        Ok(())
    }

    /// Per β: `max` over test functions of `|residual| / normalization`.
    /// Pairs whose normalization vanishes count as zero.
    pub fn residuals(&self) -> Vec<(String, f64)> {
        let nt = self.tests.len();
        self.betas
            .iter()
            .enumerate()
            .map(|(bi, b)| {
                let worst = (0..nt)
                    .map(|ti| {
                        let s = bi * nt + ti;
                        if self.norm[s] > 0.0 {
                            self.sum[s].abs() / self.norm[s]
                        } else {
                            0.0
                        }
                    })
                    .fold(0.0, f64::max);
                (b.name.clone(), worst)
            })
            .collect()
    }

    /// Per β: worst `|∫β(ξ(t)) r − ∫β(ξ₀) r| / |∫β(ξ₀) r|`.
    pub fn beta_mass_drift(&self) -> Vec<(String, f64)> {
        self.betas
            .iter()
            .enumerate()
            .map(|(bi, b)| {
                let m = self.beta_mass0[bi].abs();
                (
                    b.name.clone(),
                    if m > 0.0 {
                        self.beta_drift[bi] / m
                    } else {
                        self.beta_drift[bi]
                    },
                )
            })
            .collect()
    }
}

/// Weak residual for one `β` over a test-function library, from stored
/// snapshots (`xi[k]`, `u[k]` at `times[k]`, `times[0] = 0`).
pub fn renorm_residual(
    times: &[f64],
    xi: &[ScalarField],
    u: &[VelocityField],
    beta: &RenormFunction,
    tests: &[TestFunction],
) -> Result<f64> {
    if times.len() != xi.len() || times.len() != u.len() || times.is_empty() {
        return Err(invalid("times, ξ and u series must have equal nonzero length"));
    }
    let mut acc = RenormAccumulator::new(xi[0].grid, vec![beta.clone()], tests.to_vec());
    for k in 0..times.len() {
        acc.observe(times[k], &xi[k], &u[k])?;
    }
    Ok(acc.residuals()[0].1)
}

/// Records the composition and Jacobian defects along a run without
/// storing snapshots.
#[derive(Debug, Clone)]
pub struct TransportMonitor {
    tracer: FlowTracer,
    last_u: Option<VelocityField>,
    xi0: Vec<f64>,
    omega0: Vec<f64>,
    pub composition: f64,
    pub jacobian: f64,
}

impl TransportMonitor {
    pub fn new(grid: HalfPlaneGrid, seeds: Vec<(f64, f64)>) -> Result<Self> {
        Ok(Self {
            tracer: FlowTracer::new(grid, seeds, 0.0)?,
            last_u: None,
            xi0: Vec::new(),
            omega0: Vec::new(),
            composition: 0.0,
            jacobian: 0.0,
        })
    }

    pub fn observe(&mut self, t: f64, xi: &ScalarField, u: &VelocityField) -> Result<()> {
        let omega = ScalarField::omega_from_xi(xi);
        let sx = Sampler::new(xi.grid, &xi.values, AxisParity::Even);
        let so = Sampler::new(omega.grid, &omega.values, AxisParity::Odd);
        match self.last_u.take() {
            None => {
                self.xi0 = self.tracer.positions().iter().map(|&(r, z)| sx.bicubic(r, z)).collect();
                self.omega0 = self.tracer.positions().iter().map(|&(r, z)| so.bicubic(r, z)).collect();
                self.tracer.t = t;
                self.tracer.map.times[0] = t;
            }
            Some(prev) => {
                self.tracer.advance(&prev, u, t)?;
                let map = &self.tracer.map;
                let k = map.times.len() - 1;
                for (i, &(r, z)) in self.tracer.current.iter().enumerate() {
                    if !map.is_active(i, k) {
                        continue;
                    }
                    self.composition = self.composition.max((sx.bicubic(r, z) - self.xi0[i]).abs());
                    let r0 = map.seeds[i].0;
                    self.jacobian = self.jacobian.max((so.bicubic(r, z) - self.omega0[i] * r / r0).abs());
                }
            }
        }
        self.last_u = Some(u.clone());
        Ok(())
    }

    pub fn flow(&self) -> &FlowMap {
        self.tracer.map()
    }
}

/// One semi-Lagrangian step of `∂_t θ + a·∇θ = 0` for a smooth field, with
/// the advecting field `a_mid` taken at the middle of the step: midpoint
/// backtracking and unclipped bicubic interpolation.
fn transport_step(theta: &ScalarField, a_mid: &VelocityField, dt: f64, parity: AxisParity) -> ScalarField {
    let g = theta.grid;
    let s = Sampler::new(g, &theta.values, parity);
    let mut out = vec![0.0; g.len()];
    for i in 0..g.nr {
        let r = g.r(i);
        for j in 0..g.nz {
            let z = g.z(j);
            let k = g.idx(i, j);
            let rm = r - 0.5 * dt * a_mid.ur[k];
            let zm = z - 0.5 * dt * a_mid.uz[k];
            let (ar, az) = sample_velocity(a_mid, rm, zm);
            out[k] = s.bicubic((r - dt * ar).abs(), z - dt * az);
        }
    }
    ScalarField {
        grid: g,
        values: out,
        role: theta.role,
    }
}

fn negated(u: &VelocityField) -> VelocityField {
    VelocityField {
        grid: u.grid,
        ur: u.ur.iter().map(|v| -v).collect(),
        uz: u.uz.iter().map(|v| -v).collect(),
    }
}

fn axpy_field(y: &mut ScalarField, a: f64, x: &ScalarField) {
    y.values.iter_mut().zip(&x.values).for_each(|(p, q)| *p += a * q);
}

/// `∫_H a b r d(r,z)`.
pub fn inner_r(a: &ScalarField, b: &ScalarField) -> f64 {
    let g = a.grid;
    let area = g.cell_area();
    (0..g.nr)
        .map(|i| {
            let row = i * g.nz..(i + 1) * g.nz;
            let s: f64 = a.values[row.clone()]
                .iter()
                .zip(&b.values[row])
                .map(|(x, y)| x * y)
                .sum();
            s * g.r(i) * area
        })
        .sum()
}

/// Forward transport `∂_t θ + u·∇θ = 0` on `[0, t_final]` in `steps` equal
/// steps; returns `θ` at every step time.
pub fn transport_forward(
    series: &VelocitySeries,
    theta0: &ScalarField,
    t_final: f64,
    steps: usize,
) -> Result<Vec<ScalarField>> {
    series.grid().same_as(&theta0.grid)?;
    if steps == 0 || !(t_final > 0.0) {
        return Err(invalid("need steps >= 1 and t_final > 0"));
    }
    let dt = t_final / steps as f64;
    let mut out = Vec::with_capacity(steps + 1);
    out.push(theta0.clone());
    for k in 0..steps {
        let mid = series.at_time((k as f64 + 0.5) * dt);
        let next = transport_step(&out[k], &mid, dt, AxisParity::Even);
        out.push(next);
    }
    Ok(out)
}

/// Backward-Euler solver for `f − τ ν (∂_r² − (1/r)∂_r + ∂_z²) f = b` with
/// homogeneous Dirichlet data. The operator equals `−r L` with `L` the
/// stream-function operator, so each solve is a shifted stream solve.
#[derive(Debug, Clone)]
struct DualDiffusion {
    grid: HalfPlaneGrid,
    cached: Option<(f64, Separable)>,
}

impl DualDiffusion {
    fn step(&mut self, f: &ScalarField, a: f64) -> ScalarField {
        let g = self.grid;
        if self.cached.as_ref().is_none_or(|(c, _)| *c != a) {
            let shift: Vec<f64> = (0..g.nr).map(|i| 1.0 / (a * g.r(i))).collect();
            self.cached = Some((a, stream_separable_shifted(&g, &shift)));
        }
        let (_, sep) = self.cached.as_ref().expect("cached above");
        let mut rhs = f.values.clone();
        for i in 0..g.nr {
            let s = 1.0 / (a * g.r(i));
            rhs[i * g.nz..(i + 1) * g.nz].iter_mut().for_each(|v| *v *= s);
        }
        let mut x = vec![0.0; g.len()];
        sep.solve(&rhs, &mut x);
        ScalarField {
            grid: g,
            values: x,
            role: f.role,
        }
    }
}

/// Solves `−∂_t f − u·∇f = χ + ν(Δf − (1/r)∂_r f)`, `f(t_final) = 0`,
/// backwards in `steps` equal steps. The source enters by the trapezoid
/// rule around each advection step, and diffusion (if any) is split
/// symmetrically around it. Returns `f` at the step times, earliest first.
pub fn solve_backward_transport(
    series: &VelocitySeries,
    chi: impl Fn(f64) -> ScalarField,
    nu: f64,
    t_final: f64,
    steps: usize,
) -> Result<Vec<ScalarField>> {
    let g = series.grid();
    if steps == 0 || !(t_final > 0.0) {
        return Err(invalid("need steps >= 1 and t_final > 0"));
    }
    if !(nu >= 0.0 && nu.is_finite()) {
        return Err(invalid(alloc::format!("nu must be >= 0 (got {nu})")));
    }
    let dt = t_final / steps as f64;
    let mut diffusion = DualDiffusion { grid: g, cached: None };
    let mut f = ScalarField::zeros(g, FieldRole::Dual);
    let mut out = vec![f.clone()];
    for k in (0..steps).rev() {
        let t_hi = (k + 1) as f64 * dt;
        let t_lo = k as f64 * dt;
        let c_hi = chi(t_hi);
        g.same_as(&c_hi.grid)?;
        axpy_field(&mut f, 0.5 * dt, &c_hi);
        if nu > 0.0 {
            f = diffusion.step(&f, 0.5 * dt * nu);
        }
        // in reversed time s = t_final − t the field is carried by −u
        let mid = negated(&series.at_time(t_lo + 0.5 * dt));
        f = transport_step(&f, &mid, dt, AxisParity::Even);
        if nu > 0.0 {
            f = diffusion.step(&f, 0.5 * dt * nu);
        }
        let c_lo = chi(t_lo);
        axpy_field(&mut f, 0.5 * dt, &c_lo);
        if !f.is_finite() {
            return Err(crate::error::Error::NonFinite {
                step: (steps - k) as u64,
            });
        }
        out.push(f.clone());
    }
    out.reverse();
    Ok(out)
}

/// Both sides of the transport duality and their normalized mismatch.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DualityReport {
    /// `∫₀ᵀ ∫_H θ χ r d(r,z) dt`.
    pub lhs: f64,
    /// `∫_H θ(0) f(0) r − ∫_H θ(T) f(T) r`.
    pub rhs: f64,
    pub defect: f64,
}

/// For `θ` transported forward and `f` solving the backward problem with
/// source `χ`, `∫₀ᵀ∫ θχ r = ∫ θ(0)f(0) r − ∫ θ(T)f(T) r`. All series are
/// sampled at `times`; the time integral uses the trapezoid rule.
pub fn duality_check(
    theta: &[ScalarField],
    f: &[ScalarField],
    chi: &[ScalarField],
    times: &[f64],
) -> Result<DualityReport> {
    let n = times.len();
    if n == 0 || theta.len() != n || f.len() != n || chi.len() != n {
        return Err(invalid("θ, f, χ and times must have equal nonzero length"));
    }
    let mut lhs = 0.0;
    let mut prev = inner_r(&theta[0], &chi[0]);
    for k in 1..n {
        let cur = inner_r(&theta[k], &chi[k]);
        lhs += 0.5 * (times[k] - times[k - 1]) * (prev + cur);
        prev = cur;
    }
    let rhs = inner_r(&theta[0], &f[0]) - inner_r(&theta[n - 1], &f[n - 1]);
    let defect = (lhs - rhs).abs() / (lhs.abs() + rhs.abs() + 1e-300);
    Ok(DualityReport { lhs, rhs, defect })
}
