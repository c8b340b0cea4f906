//! Velocity reconstruction from vorticity.
//!
//! The production path solves `Lψ = ω` with
//! `L = −∂_r((1/r)∂_r) − (1/r)∂_z²` and differentiates the Stokes stream
//! function. The validation path sums the vortex-ring kernel directly.
//!
//! The discrete operator is a finite-volume discretization with fluxes
//! `(1/r)∂_r ψ` on the faces `r_{i±1/2}`. On the axis the flux is taken from
//! the local behaviour `ψ ≈ c r²`, which is exact for `ψ = r²`. The assembled
//! matrix is symmetric for the flat (unweighted) Euclidean inner product.

use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::PI;

use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};

use crate::error::{invalid, Error, Result};
use crate::grid::{gradient, AxisParity, FieldRole, HalfPlaneGrid, ScalarField, VelocityField};
use crate::linalg::{pcg_separable, Separable, Stencil5, ZClosure};
use crate::special::ellip_ke;

/// Boundary data used for the stream-function solve.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum StreamBoundary {
    /// `ψ = 0` on the outer and top/bottom boundaries (and on the axis).
    #[default]
    Homogeneous,
    /// Boundary values from the free-space ring kernel summed against `ω`.
    KernelCorrected,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StreamFunction {
    pub psi: ScalarField,
    pub boundary: StreamBoundary,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EllipticSolveReport {
    pub iterations: usize,
    /// Relative residual `‖b − Aψ‖₂ / ‖b‖₂`.
    pub residual: f64,
    /// Seconds; `None` when no clock was available to the caller.
    pub wall_time: Option<f64>,
}

/// Assembled stream-function operator for a fixed grid, with warm starts
/// between consecutive solves.
#[derive(Debug, Clone)]
pub struct StreamSolver {
    grid: HalfPlaneGrid,
    op: Stencil5,
    pre: Separable,
    warm: Vec<f64>,
    pub tol: f64,
    pub max_iter: usize,
    pub boundary: StreamBoundary,
}

impl StreamSolver {
    pub fn new(grid: HalfPlaneGrid) -> Self {
        let pre = stream_separable(&grid);
        Self {
            grid,
            op: pre.stencil(),
            pre,
            warm: vec![0.0; grid.len()],
            tol: 1e-10,
            max_iter: 200,
            boundary: StreamBoundary::Homogeneous,
        }
    }

    pub fn with_tolerance(mut self, tol: f64) -> Self {
        self.tol = tol;
        self
    }

    pub fn with_boundary(mut self, boundary: StreamBoundary) -> Self {
        self.boundary = boundary;
        self
    }

    pub fn grid(&self) -> &HalfPlaneGrid {
        &self.grid
    }

    pub fn operator(&self) -> &Stencil5 {
        &self.op
    }

    /// Forgets the warm start.
    pub fn reset(&mut self) {
        self.warm.iter_mut().for_each(|v| *v = 0.0);
    }

    pub fn solve(&mut self, omega: &ScalarField) -> Result<(StreamFunction, EllipticSolveReport)> {
        self.grid.same_as(&omega.grid)?;
        if !(self.tol > 0.0 && self.tol <= 1e-2) {
            return Err(invalid(alloc::format!(
                "tolerance must lie in (0, 1e-2] (got {})",
                self.tol
            )));
        }
        omega.ensure_finite()?;
        let mut rhs = omega.values.clone();
        if self.boundary == StreamBoundary::KernelCorrected {
            add_boundary_terms(&self.grid, omega, &mut rhs);
        }
        let out = pcg_separable(&self.op, &self.pre, &rhs, &mut self.warm, self.tol, self.max_iter);
        let report = EllipticSolveReport {
            iterations: out.iterations,
            residual: out.residual,
            wall_time: None,
        };
        if !out.converged || !self.warm.iter().all(|v| v.is_finite()) {
            self.reset();
            return Err(Error::NotConverged(report));
        }
        let psi = ScalarField {
            grid: self.grid,
            values: self.warm.clone(),
            role: FieldRole::Stream,
        };
        Ok((
            StreamFunction {
                psi,
                boundary: self.boundary,
            },
            report,
        ))
    }
}

/// Solves `Lψ = ω` with `ψ = 0` on every boundary.
pub fn solve_stream_function(omega: &ScalarField, tol: f64) -> Result<(StreamFunction, EllipticSolveReport)> {
    StreamSolver::new(omega.grid).with_tolerance(tol).solve(omega)
}

/// Matrix of `L` (rows scaled by the cell area) with homogeneous Dirichlet
/// conditions folded into the diagonal.
pub fn stream_operator(g: &HalfPlaneGrid) -> Stencil5 {
    stream_separable(g).stencil()
}

fn stream_separable(g: &HalfPlaneGrid) -> Separable {
    stream_separable_shifted(g, &vec![0.0; g.nr])
}

/// The stream operator plus `diag(shift_i) ⊗ I`.
pub(crate) fn stream_separable_shifted(g: &HalfPlaneGrid, shift: &[f64]) -> Separable {
    let nr = g.nr;
    let hr2 = g.hr * g.hr;
    let mut t_diag = vec![0.0; nr];
    let mut t_off = vec![0.0; nr - 1];
    let mut d = vec![0.0; nr];
    for i in 0..nr {
        let r = g.r(i);
        let c_out = if i + 1 < nr {
            1.0 / (g.face_r(i + 1) * hr2)
        } else {
            2.0 / (g.r_max * hr2)
        };
        let c_in = if i == 0 {
            2.0 / (r * r * g.hr)
        } else {
            1.0 / (g.face_r(i) * hr2)
        };
        t_diag[i] = c_out + c_in + shift[i];
        if i + 1 < nr {
            t_off[i] = -c_out;
        }
        d[i] = 1.0 / r;
    }
    Separable::new(t_diag, t_off, d, g.nz, g.hz, ZClosure::Dirichlet)
}

/// Applies the discrete `L` (homogeneous Dirichlet) to `psi`.
pub fn apply_stream_operator(psi: &ScalarField) -> ScalarField {
    let a = stream_operator(&psi.grid);
    let mut out = vec![0.0; psi.values.len()];
    a.apply(&psi.values, &mut out);
    ScalarField {
        grid: psi.grid,
        values: out,
        role: FieldRole::Vorticity,
    }
}

fn add_boundary_terms(g: &HalfPlaneGrid, omega: &ScalarField, rhs: &mut [f64]) {
    let (nr, nz) = (g.nr, g.nz);
    let hr2 = g.hr * g.hr;
    let hz2 = g.hz * g.hz;
    let sources = collect_sources(omega);
    if sources.is_empty() {
        return;
    }
    for j in 0..nz {
        let psi_b = kernel_stream_at(&sources, g.r_max, g.z(j));
        rhs[(nr - 1) * nz + j] += 2.0 * psi_b / (g.r_max * hr2);
    }
    for i in 0..nr {
        let r = g.r(i);
        let lo = kernel_stream_at(&sources, r, g.z_min);
        let hi = kernel_stream_at(&sources, r, g.z_max);
        rhs[i * nz] += 2.0 * lo / (r * hz2);
        rhs[i * nz + nz - 1] += 2.0 * hi / (r * hz2);
    }
}

/// Cells whose vorticity is below `1e-16 max|ω|` are dropped; their total
/// contribution is far below the solver tolerance.
fn collect_sources(omega: &ScalarField) -> Vec<(f64, f64, f64)> {
    let g = &omega.grid;
    let area = g.cell_area();
    let floor = 1e-16 * omega.max_abs();
    let mut out = Vec::new();
    for i in 0..g.nr {
        for j in 0..g.nz {
            let w = omega.at(i, j);
            if w.abs() > floor {
                out.push((g.r(i), g.z(j), w * area));
            }
        }
    }
    out
}

fn kernel_stream_at(sources: &[(f64, f64, f64)], r: f64, z: f64) -> f64 {
    sources.iter().map(|&(rs, zs, c)| c * ring_stream(r, z, rs, zs)).sum()
}

/// Stokes stream function at `(r, z)` of a unit-circulation vortex ring of
/// radius `rs` at height `zs`.
pub fn ring_stream(r: f64, z: f64, rs: f64, zs: f64) -> f64 {
    let dz = z - zs;
    let a2 = (r + rs) * (r + rs) + dz * dz;
    let m = 4.0 * r * rs / a2;
    if m <= 0.0 {
        return 0.0;
    }
    let k = libm::sqrt(m);
    if m < 1e-6 {
        // leading term of the series: (π/16) k³ (1 + 3m/4)
        return libm::sqrt(r * rs) / (2.0 * PI) * PI / 16.0 * k * m * (1.0 + 0.75 * m);
    }
    let (kk, ee) = ellip_ke(m);
    libm::sqrt(r * rs) / (2.0 * PI) * ((2.0 / k - k) * kk - (2.0 / k) * ee)
}

/// Velocity `(u^r, u^z)` at `(r, z)` induced by a unit-circulation vortex
/// ring of radius `rs` at height `zs`. Positive circulation drives the flow
/// through the ring in the `+z` direction.
pub fn ring_velocity(r: f64, z: f64, rs: f64, zs: f64) -> (f64, f64) {
    let dz = z - zs;
    let a2 = (r + rs) * (r + rs) + dz * dz;
    let b2 = (r - rs) * (r - rs) + dz * dz;
    let m = 4.0 * r * rs / a2;
    let a = libm::sqrt(a2);
    if r < 1e-9 * rs {
        let uz = rs * rs / (2.0 * libm::pow(rs * rs + dz * dz, 1.5));
        return (0.0, uz);
    }
    let (kk, ee) = ellip_ke(m);
    let uz = (kk + (rs * rs - r * r - dz * dz) / b2 * ee) / (2.0 * PI * a);
    let ur = dz / (2.0 * PI * r * a) * (-kk + (rs * rs + r * r + dz * dz) / b2 * ee);
    (ur, uz)
}

/// Direct kernel summation `u(x) = Σ_cells G(x, y) ω(y) hr hz`, skipping the
/// cell that contains `x`.
pub fn kernel_velocity(omega: &ScalarField, points: &[(f64, f64)]) -> Result<Vec<(f64, f64)>> {
    omega.ensure_finite()?;
    let g = &omega.grid;
    let sources = collect_sources(omega);
    let mut out = Vec::with_capacity(points.len());
    for &(r, z) in points {
        if !(r > 0.0) || !r.is_finite() || !z.is_finite() {
            return Err(invalid(alloc::format!(
                "query point ({r}, {z}) is not inside the half-plane"
            )));
        }
        let own = g.locate(r, z);
        let (mut ur, mut uz) = (0.0, 0.0);
        for &(rs, zs, c) in &sources {
            if let Some((i, j)) = own {
                if (rs - g.r(i)).abs() < 0.25 * g.hr && (zs - g.z(j)).abs() < 0.25 * g.hz {
                    continue;
                }
            }
            let (a, b) = ring_velocity(r, z, rs, zs);
            ur += c * a;
            uz += c * b;
        }
        out.push((ur, uz));
    }
    Ok(out)
}

/// `u^r = −(1/r)∂_z ψ`, `u^z = (1/r)∂_r ψ` at the cell centres.
pub fn velocity_from_stream(psi: &StreamFunction) -> VelocityField {
    let f = &psi.psi;
    let g = f.grid;
    let (dr, dz) = gradient(f, AxisParity::Even);
    let mut u = VelocityField::zeros(g);
    for i in 0..g.nr {
        let inv = 1.0 / g.r(i);
        for j in 0..g.nz {
            let k = g.idx(i, j);
            u.ur[k] = -inv * dz.values[k];
            u.uz[k] = inv * dr.values[k];
        }
    }
    u
}

/// Velocity of `ω` through a fresh stream-function solve.
pub fn velocity_from_vorticity(omega: &ScalarField, tol: f64) -> Result<VelocityField> {
    let (psi, _) = solve_stream_function(omega, tol)?;
    Ok(velocity_from_stream(&psi))
}

/// Pointwise `(1/r)∂_r(r u^r) + ∂_z u^z` at the cell centres.
pub fn divergence(u: &VelocityField) -> ScalarField {
    let g = u.grid;
    let mut rur = ScalarField::zeros(g, FieldRole::Test);
    let uz = ScalarField {
        grid: g,
        values: u.uz.clone(),
        role: FieldRole::Test,
    };
    for i in 0..g.nr {
        let r = g.r(i);
        for j in 0..g.nz {
            let k = g.idx(i, j);
            rur.values[k] = r * u.ur[k];
        }
    }
    let (d_rur, _) = gradient(&rur, AxisParity::Even);
    let (_, d_uz) = gradient(&uz, AxisParity::Even);
    let mut out = ScalarField::zeros(g, FieldRole::Test);
    for i in 0..g.nr {
        let inv = 1.0 / g.r(i);
        for j in 0..g.nz {
            let k = g.idx(i, j);
            out.values[k] = inv * d_rur.values[k] + d_uz.values[k];
        }
    }
    out
}

/// Discrete `L²(r d(r,z))` norm of the cylindrical divergence.
pub fn check_divergence(u: &VelocityField) -> f64 {
    let d = divergence(u);
    let g = u.grid;
    let mut s = 0.0;
    for i in 0..g.nr {
        let w = g.r_weight(i);
        for j in 0..g.nz {
            let v = d.at(i, j);
            s += w * v * v;
        }
    }
    libm::sqrt(s)
}

/// Sampling regime for [`kernel_decay_sample`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DecayRegime {
    /// Separation comparable to both radii.
    Coincident,
    /// `|z − z̄| ≫ r + r̄`.
    FarField,
    /// Source radius tending to zero.
    NearAxis,
    /// Log-uniform over all of the above scales.
    All,
}

#[derive(Debug, Clone, PartialEq)]
pub struct KernelDecayReport {
    pub samples: usize,
    /// `sup |G| (|r − r̄| + |z − z̄|)` over the samples.
    pub sup: f64,
    /// `(r, z, r̄, z̄)` of the maximizer.
    pub argmax: (f64, f64, f64, f64),
}

fn log_uniform(rng: &mut ChaCha8Rng, lo: f64, hi: f64) -> f64 {
    let u = (rng.next_u64() >> 11) as f64 / (1u64 << 53) as f64;
    libm::exp(libm::log(lo) + u * (libm::log(hi) - libm::log(lo)))
}

fn unit(rng: &mut ChaCha8Rng) -> f64 {
    (rng.next_u64() >> 11) as f64 / (1u64 << 53) as f64
}

/// Randomized estimate of `sup |G|·(|r − r̄| + |z − z̄|)` for the velocity
/// kernel `G` of a unit ring, within one sampling regime.
pub fn kernel_decay_sample(regime: DecayRegime, sample_count: usize, seed: u64) -> KernelDecayReport {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut best = KernelDecayReport {
        samples: sample_count,
        sup: 0.0,
        argmax: (0.0, 0.0, 0.0, 0.0),
    };
    for _ in 0..sample_count {
        let scale = log_uniform(&mut rng, 1e-3, 1e3);
        let sign = if unit(&mut rng) < 0.5 { -1.0 } else { 1.0 };
        let (r, rb, dz) = match regime {
            DecayRegime::Coincident => {
                let r = scale;
                let rb = r * log_uniform(&mut rng, 0.5, 2.0);
                let dz = sign * r * log_uniform(&mut rng, 1e-3, 2.0);
                (r, rb, dz)
            }
            DecayRegime::FarField => {
                let r = scale;
                let rb = r * log_uniform(&mut rng, 0.1, 10.0);
                let dz = sign * (r + rb) * log_uniform(&mut rng, 10.0, 1e4);
                (r, rb, dz)
            }
            DecayRegime::NearAxis => {
                let r = scale;
                let rb = r * log_uniform(&mut rng, 1e-6, 1e-2);
                let dz = sign * r * log_uniform(&mut rng, 1e-2, 10.0);
                (r, rb, dz)
            }
            DecayRegime::All => {
                let r = scale;
                let rb = log_uniform(&mut rng, 1e-3, 1e3);
                let dz = sign * log_uniform(&mut rng, 1e-4, 1e4);
                (r, rb, dz)
            }
        };
        let (ur, uz) = ring_velocity(r, dz, rb, 0.0);
        let prod = libm::hypot(ur, uz) * ((r - rb).abs() + dz.abs());
        if prod.is_finite() && prod > best.sup {
            best.sup = prod;
            best.argmax = (r, dz, rb, 0.0);
        }
    }
    best
}

/// Empirical `sup |G|·(|r − r̄| + |z − z̄|)` over randomly sampled pairs on
/// dyadic scales from `10⁻³` to `10³`.
pub fn kernel_decay_check(sample_count: usize, seed: u64) -> Result<f64> {
    if sample_count < 1000 {
        return Err(invalid(alloc::format!(
            "sample_count must be >= 1000 (got {sample_count})"
        )));
    }
    Ok(kernel_decay_sample(DecayRegime::All, sample_count, seed).sup)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ring_velocity_is_curl_of_ring_stream() {
        let (rs, zs) = (1.0, 0.2);
        let h = 1e-5;
        for &(r, z) in &[(0.3, 0.5), (1.4, -0.7), (2.5, 3.0), (0.9, 0.25)] {
            let dpr = (ring_stream(r + h, z, rs, zs) - ring_stream(r - h, z, rs, zs)) / (2.0 * h);
            let dpz = (ring_stream(r, z + h, rs, zs) - ring_stream(r, z - h, rs, zs)) / (2.0 * h);
            let (ur, uz) = ring_velocity(r, z, rs, zs);
            assert!((ur + dpz / r).abs() < 1e-7 * (1.0 + ur.abs()), "ur at ({r},{z})");
            assert!((uz - dpr / r).abs() < 1e-7 * (1.0 + uz.abs()), "uz at ({r},{z})");
        }
    }

    #[test]
    fn on_axis_ring_velocity() {
        let (_, uz) = ring_velocity(1e-7, 0.0, 2.0, 0.0);
        assert!((uz - 0.25).abs() < 1e-6);
        let (ur, uz) = ring_velocity(1e-12, 0.0, 2.0, 0.0);
        assert_eq!(ur, 0.0);
        assert!((uz - 0.25).abs() < 1e-12);
    }

    #[test]
    fn operator_is_exact_on_r_squared() {
        let g = HalfPlaneGrid::new(16, 8, 2.0, -1.0, 1.0).unwrap();
        let a = stream_operator(&g);
        let psi = g.sample(FieldRole::Stream, |r, _| r * r);
        let mut y = vec![0.0; g.len()];
        a.apply(&psi.values, &mut y);
        // interior rows away from the Dirichlet edges see L(r²) = 0
        for i in 0..g.nr - 1 {
            for j in 1..g.nz - 1 {
                assert!(y[g.idx(i, j)].abs() < 1e-10, "row ({i},{j}) = {}", y[g.idx(i, j)]);
            }
        }
    }

    #[test]
    fn zero_vorticity_gives_zero_stream() {
        let g = HalfPlaneGrid::new(8, 8, 1.0, -1.0, 1.0).unwrap();
        let (psi, rep) = solve_stream_function(&ScalarField::zeros(g, FieldRole::Vorticity), 1e-8).unwrap();
        assert!(rep.iterations <= 1);
        assert!(psi.psi.values.iter().all(|v| *v == 0.0));
        assert!(solve_stream_function(&ScalarField::zeros(g, FieldRole::Vorticity), 0.5).is_err());
    }

    #[test]
    fn rigid_translation_stream() {
        let g = HalfPlaneGrid::new(8, 8, 1.0, -1.0, 1.0).unwrap();
        let psi = StreamFunction {
            psi: g.sample(FieldRole::Stream, |r, _| 0.5 * r * r),
            boundary: StreamBoundary::Homogeneous,
        };
        let u = velocity_from_stream(&psi);
        for k in 0..g.len() {
            assert!(u.ur[k].abs() < 1e-14);
            assert!((u.uz[k] - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn divergence_examples() {
        let g = HalfPlaneGrid::new(16, 16, 1.0, -1.0, 1.0).unwrap();
        let u = VelocityField::sample(g, |r, z| (r, -2.0 * z));
        assert!(check_divergence(&u) < 1e-12);
        let u = VelocityField::sample(g, |_, _| (1.0, 0.0));
        assert!(check_divergence(&u) > 1.0);
    }

    #[test]
    fn decay_check_rejects_small_samples() {
        assert!(kernel_decay_check(10, 1).is_err());
        let s = kernel_decay_check(2000, 1).unwrap();
        assert!(s.is_finite() && s > 0.0);
    }
}
