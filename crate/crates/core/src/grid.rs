//! Cell-centred discretization of the truncated half-plane
//! `(0, r_max) × (z_min, z_max)`.
//!
//! Storage is row-major in `r` with `z` fastest: the value of cell `(i, j)`
//! sits at `i * nz + j`. Cell centres are `r_i = (i + 1/2) hr` and
//! `z_j = z_min + (j + 1/2) hz`, so no sample ever lands on the axis.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{invalid, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HalfPlaneGrid {
    pub nr: usize,
    pub nz: usize,
    pub r_max: f64,
    pub z_min: f64,
    pub z_max: f64,
    pub hr: f64,
    pub hz: f64,
}

impl HalfPlaneGrid {
    /// Builds the grid. Cell counts must be at least 4 in each direction.
    pub fn new(nr: usize, nz: usize, r_max: f64, z_min: f64, z_max: f64) -> Result<Self> {
        if nr < 4 || nz < 4 {
            return Err(invalid(alloc::format!(
                "cell counts must be >= 4 (got nr={nr}, nz={nz})"
            )));
        }
        if !(r_max.is_finite() && r_max > 0.0) {
            return Err(invalid(alloc::format!("r_max must be positive (got {r_max})")));
        }
        if !(z_min.is_finite() && z_max.is_finite() && z_min < z_max) {
            return Err(invalid(alloc::format!("need z_min < z_max (got {z_min}, {z_max})")));
        }
        Ok(Self {
            nr,
            nz,
            r_max,
            z_min,
            z_max,
            hr: r_max / nr as f64,
            hz: (z_max - z_min) / nz as f64,
        })
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.nr * self.nz
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    #[inline]
    pub fn idx(&self, i: usize, j: usize) -> usize {
        i * self.nz + j
    }

    /// Radius of the centre of column `i`.
    #[inline]
    pub fn r(&self, i: usize) -> f64 {
        (i as f64 + 0.5) * self.hr
    }

    /// Radius of the face between columns `i - 1` and `i` (`face_r(0) == 0`).
    #[inline]
    pub fn face_r(&self, i: usize) -> f64 {
        i as f64 * self.hr
    }

    #[inline]
    pub fn z(&self, j: usize) -> f64 {
        self.z_min + (j as f64 + 0.5) * self.hz
    }

    #[inline]
    pub fn face_z(&self, j: usize) -> f64 {
        self.z_min + j as f64 * self.hz
    }

    #[inline]
    pub fn cell_area(&self) -> f64 {
        self.hr * self.hz
    }

    /// `r_i hr hz`: the midpoint weight of cell `(i, ·)` for the measure `r d(r,z)`.
    #[inline]
    pub fn r_weight(&self, i: usize) -> f64 {
        self.r(i) * self.hr * self.hz
    }

    /// Cell containing `(r, z)`, or `None` outside the truncated domain.
    pub fn locate(&self, r: f64, z: f64) -> Option<(usize, usize)> {
        if !(r > 0.0 && r < self.r_max && z > self.z_min && z < self.z_max) {
            return None;
        }
        let i = ((r / self.hr) as usize).min(self.nr - 1);
        let j = (((z - self.z_min) / self.hz) as usize).min(self.nz - 1);
        Some((i, j))
    }

    pub fn contains(&self, r: f64, z: f64) -> bool {
        r >= 0.0 && r <= self.r_max && z >= self.z_min && z <= self.z_max
    }

    pub(crate) fn same_as(&self, other: &Self) -> Result<()> {
        if self == other {
            Ok(())
        } else {
            Err(Error::GridMismatch(alloc::format!(
                "{}x{} vs {}x{}",
                self.nr,
                self.nz,
                other.nr,
                other.nz
            )))
        }
    }

    /// Samples `f(r, z)` at every cell centre.
    pub fn sample(&self, role: FieldRole, mut f: impl FnMut(f64, f64) -> f64) -> ScalarField {
        let mut values = Vec::with_capacity(self.len());
        for i in 0..self.nr {
            let r = self.r(i);
            for j in 0..self.nz {
                values.push(f(r, self.z(j)));
            }
        }
        ScalarField {
            grid: *self,
            values,
            role,
        }
    }

    /// Cell averages of `f` using an `n × n` midpoint sub-grid per cell.
    pub fn sample_cell_average(&self, role: FieldRole, n: usize, mut f: impl FnMut(f64, f64) -> f64) -> ScalarField {
        let n = n.max(1);
        let inv = 1.0 / (n * n) as f64;
        let mut values = Vec::with_capacity(self.len());
        for i in 0..self.nr {
            let r0 = self.face_r(i);
            for j in 0..self.nz {
                let z0 = self.face_z(j);
                let mut acc = 0.0;
                for a in 0..n {
                    let r = r0 + (a as f64 + 0.5) * self.hr / n as f64;
                    for b in 0..n {
                        acc += f(r, z0 + (b as f64 + 0.5) * self.hz / n as f64);
                    }
                }
                values.push(acc * inv);
            }
        }
        ScalarField {
            grid: *self,
            values,
            role,
        }
    }
}

/// What a scalar field represents. Only used for bookkeeping and for the
/// default axis symmetry.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FieldRole {
    RelativeVorticity,
    Vorticity,
    Stream,
    Passive,
    Dual,
    Test,
}

impl FieldRole {
    /// Reflection symmetry across the axis: `ω` vanishes there (odd), the
    /// others are even functions of `r`.
    pub fn axis_parity(self) -> AxisParity {
        match self {
            FieldRole::Vorticity => AxisParity::Odd,
            _ => AxisParity::Even,
        }
    }
}

/// Ghost-cell reflection rule at `r = 0`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AxisParity {
    Even,
    Odd,
}

impl AxisParity {
    #[inline]
    pub fn sign(self) -> f64 {
        match self {
            AxisParity::Even => 1.0,
            AxisParity::Odd => -1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScalarField {
    pub grid: HalfPlaneGrid,
    pub values: Vec<f64>,
    pub role: FieldRole,
}

impl ScalarField {
    pub fn zeros(grid: HalfPlaneGrid, role: FieldRole) -> Self {
        Self {
            grid,
            values: vec![0.0; grid.len()],
            role,
        }
    }

    pub fn from_values(grid: HalfPlaneGrid, role: FieldRole, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(invalid(alloc::format!(
                "expected {} values, got {}",
                grid.len(),
                values.len()
            )));
        }
        Ok(Self { grid, values, role })
    }

    #[inline]
    pub fn at(&self, i: usize, j: usize) -> f64 {
        self.values[self.grid.idx(i, j)]
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    pub fn ensure_finite(&self) -> Result<()> {
        if self.is_finite() {
            Ok(())
        } else {
            Err(invalid("field contains non-finite values"))
        }
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn scaled(&self, alpha: f64) -> Self {
        let mut out = self.clone();
        out.values.iter_mut().for_each(|v| *v *= alpha);
        out
    }

    /// `ω = r ξ` from a relative vorticity field.
    pub fn omega_from_xi(xi: &ScalarField) -> ScalarField {
        let g = xi.grid;
        let mut values = xi.values.clone();
        for i in 0..g.nr {
            let r = g.r(i);
            values[i * g.nz..(i + 1) * g.nz].iter_mut().for_each(|v| *v *= r);
        }
        ScalarField {
            grid: g,
            values,
            role: FieldRole::Vorticity,
        }
    }

    /// `ξ = ω / r` from a vorticity field.
    pub fn xi_from_omega(omega: &ScalarField) -> ScalarField {
        let g = omega.grid;
        let mut values = omega.values.clone();
        for i in 0..g.nr {
            let inv = 1.0 / g.r(i);
            values[i * g.nz..(i + 1) * g.nz].iter_mut().for_each(|v| *v *= inv);
        }
        ScalarField {
            grid: g,
            values,
            role: FieldRole::RelativeVorticity,
        }
    }
}

/// Velocity `(u^r, u^z)` at cell centres.
#[derive(Debug, Clone, PartialEq)]
pub struct VelocityField {
    pub grid: HalfPlaneGrid,
    pub ur: Vec<f64>,
    pub uz: Vec<f64>,
}

impl VelocityField {
    pub fn zeros(grid: HalfPlaneGrid) -> Self {
        Self {
            grid,
            ur: vec![0.0; grid.len()],
            uz: vec![0.0; grid.len()],
        }
    }

    /// Samples an analytic velocity at the cell centres.
    pub fn sample(grid: HalfPlaneGrid, mut f: impl FnMut(f64, f64) -> (f64, f64)) -> Self {
        let mut out = Self::zeros(grid);
        for i in 0..grid.nr {
            for j in 0..grid.nz {
                let k = grid.idx(i, j);
                let (a, b) = f(grid.r(i), grid.z(j));
                out.ur[k] = a;
                out.uz[k] = b;
            }
        }
        out
    }

    pub fn max_abs(&self) -> (f64, f64) {
        let a = self.ur.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let b = self.uz.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        (a, b)
    }

    pub fn is_finite(&self) -> bool {
        self.ur.iter().chain(self.uz.iter()).all(|v| v.is_finite())
    }

    /// Second-order extrapolation of `u^r` to `r = 0` in every row.
    pub fn axis_ur(&self) -> Vec<f64> {
        let g = self.grid;
        (0..g.nz)
            .map(|j| {
                let u0 = self.ur[g.idx(0, j)];
                let u1 = self.ur[g.idx(1, j)];
                // values at r = h/2 and 3h/2, linear extrapolation to 0
                1.5 * u0 - 0.5 * u1
            })
            .collect()
    }
}

/// `∫_H |f|^p r^k d(r,z)` by midpoint quadrature, summed in storage order.
pub fn integrate_weighted(f: &ScalarField, k: f64, p: f64) -> Result<f64> {
    if !(p >= 1.0) {
        return Err(invalid(alloc::format!("p must be >= 1 (got {p})")));
    }
    let g = f.grid;
    let area = g.cell_area();
    let mut total = 0.0;
    for i in 0..g.nr {
        let w = weight_power(g.r(i), k) * area;
        let row = &f.values[i * g.nz..(i + 1) * g.nz];
        let s: f64 = if p == 1.0 {
            row.iter().map(|v| v.abs()).sum()
        } else if p == 2.0 {
            row.iter().map(|v| v * v).sum()
        } else {
            row.iter().map(|v| libm::pow(v.abs(), p)).sum()
        };
        total += w * s;
    }
    Ok(total)
}

#[inline]
pub(crate) fn weight_power(r: f64, k: f64) -> f64 {
    if k == 0.0 {
        1.0
    } else if k == 1.0 {
        r
    } else if k == 2.0 {
        r * r
    } else if k == 3.0 {
        r * r * r
    } else {
        libm::pow(r, k)
    }
}

/// `(∂_r f, ∂_z f)` at cell centres.
///
/// Central differences inside, second-order one-sided differences at the
/// outer edges, and a reflected ghost column at the axis whose sign is given
/// by `parity`.
pub fn gradient(f: &ScalarField, parity: AxisParity) -> (ScalarField, ScalarField) {
    let g = f.grid;
    let (nr, nz) = (g.nr, g.nz);
    let v = &f.values;
    let mut dr = vec![0.0; g.len()];
    let mut dz = vec![0.0; g.len()];
    let ir = 1.0 / (2.0 * g.hr);
    let iz = 1.0 / (2.0 * g.hz);
    let s = parity.sign();
    for i in 0..nr {
        for j in 0..nz {
            let k = i * nz + j;
            dr[k] = if i == 0 {
                (v[k + nz] - s * v[k]) * ir
            } else if i == nr - 1 {
                (3.0 * v[k] - 4.0 * v[k - nz] + v[k - 2 * nz]) * ir
            } else {
                (v[k + nz] - v[k - nz]) * ir
            };
            dz[k] = if j == 0 {
                (-3.0 * v[k] + 4.0 * v[k + 1] - v[k + 2]) * iz
            } else if j == nz - 1 {
                (3.0 * v[k] - 4.0 * v[k - 1] + v[k - 2]) * iz
            } else {
                (v[k + 1] - v[k - 1]) * iz
            };
        }
    }
    (
        ScalarField {
            grid: g,
            values: dr,
            role: f.role,
        },
        ScalarField {
            grid: g,
            values: dz,
            role: f.role,
        },
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn build_grid_examples() {
        let g = HalfPlaneGrid::new(4, 4, 1.0, -1.0, 1.0).unwrap();
        assert_eq!(g.hr, 0.25);
        assert_eq!(g.r(0), 0.125);
        let g = HalfPlaneGrid::new(256, 512, 4.0, -4.0, 4.0).unwrap();
        assert_eq!(g.hr, 1.0 / 64.0);
        assert_eq!(g.hz, 1.0 / 64.0);
        assert!(HalfPlaneGrid::new(2, 4, 1.0, 0.0, 1.0).is_err());
        assert!(HalfPlaneGrid::new(4, 4, 0.0, 0.0, 1.0).is_err());
        assert!(HalfPlaneGrid::new(4, 4, 1.0, 1.0, 1.0).is_err());
        assert!(HalfPlaneGrid::new(4, 4, -1.0, 0.0, 1.0).is_err());
    }

    #[test]
    fn centres_are_off_axis_and_reproducible() {
        let a = HalfPlaneGrid::new(37, 11, 2.5, -0.3, 1.7).unwrap();
        let b = HalfPlaneGrid::new(37, 11, 2.5, -0.3, 1.7).unwrap();
        assert_eq!(a, b);
        for i in 0..a.nr {
            assert!(a.r(i) > 0.0);
            assert_eq!(a.r(i).to_bits(), b.r(i).to_bits());
        }
    }

    #[test]
    fn integrate_weighted_examples() {
        let g = HalfPlaneGrid::new(64, 64, 1.0, 0.0, 1.0).unwrap();
        let one = g.sample(FieldRole::Test, |_, _| 1.0);
        let v = integrate_weighted(&one, 1.0, 1.0).unwrap();
        assert!((v - 0.5).abs() < 1e-14);
        let f = g.sample(FieldRole::Test, |r, _| r);
        let v = integrate_weighted(&f, 1.0, 2.0).unwrap();
        assert!((v - 0.25).abs() < 2.0 * g.hr * g.hr);
        assert!(integrate_weighted(&f, 1.0, 0.5).is_err());
    }

    #[test]
    fn gradient_exact_on_quadratics() {
        let g = HalfPlaneGrid::new(8, 10, 1.0, -1.0, 1.0).unwrap();
        let c = g.sample(FieldRole::Test, |_, _| 3.25);
        let (a, b) = gradient(&c, AxisParity::Even);
        assert!(a.max_abs() == 0.0 && b.max_abs() == 0.0);

        let f = g.sample(FieldRole::Test, |r, z| r * r + z);
        let (dr, dz) = gradient(&f, AxisParity::Even);
        for i in 0..g.nr {
            for j in 0..g.nz {
                assert!((dr.at(i, j) - 2.0 * g.r(i)).abs() < 1e-12);
                assert!((dz.at(i, j) - 1.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn omega_xi_roundtrip() {
        let g = HalfPlaneGrid::new(6, 5, 1.0, 0.0, 1.0).unwrap();
        let xi = g.sample(FieldRole::RelativeVorticity, |r, z| r + z);
        let om = ScalarField::omega_from_xi(&xi);
        for i in 0..g.nr {
            for j in 0..g.nz {
                assert_eq!(om.at(i, j), g.r(i) * xi.at(i, j));
            }
        }
        let back = ScalarField::xi_from_omega(&om);
        for (a, b) in back.values.iter().zip(&xi.values) {
            assert!((a - b).abs() < 1e-14);
        }
    }
}
