//! Interpolation of cell-centred data at arbitrary points of the domain.
//!
//! Indices left of the axis are reflected with the sign of the field's
//! [`AxisParity`]; indices beyond the other edges are clamped.

use crate::grid::{AxisParity, HalfPlaneGrid};

#[derive(Debug, Clone, Copy)]
pub struct Sampler<'a> {
    pub grid: HalfPlaneGrid,
    pub values: &'a [f64],
    pub parity: AxisParity,
}

#[inline]
fn cubic_weights(t: f64) -> [f64; 4] {
    let tm1 = t - 1.0;
    let tm2 = t - 2.0;
    let tp1 = t + 1.0;
    [
        -t * tm1 * tm2 / 6.0,
        tp1 * tm1 * tm2 / 2.0,
        -tp1 * t * tm2 / 2.0,
        tp1 * t * tm1 / 6.0,
    ]
}

impl<'a> Sampler<'a> {
    pub fn new(grid: HalfPlaneGrid, values: &'a [f64], parity: AxisParity) -> Self {
        debug_assert_eq!(values.len(), grid.len());
        Self { grid, values, parity }
    }

    /// Value at lattice index `(i, j)` with ghost handling.
    #[inline]
    pub fn node(&self, i: isize, j: isize) -> f64 {
        let g = &self.grid;
        let jj = j.clamp(0, g.nz as isize - 1) as usize;
        if i < 0 {
            let ii = ((-1 - i) as usize).min(g.nr - 1);
            self.parity.sign() * self.values[ii * g.nz + jj]
        } else {
            let ii = (i as usize).min(g.nr - 1);
            self.values[ii * g.nz + jj]
        }
    }

    #[inline]
    fn frac(&self, r: f64, z: f64) -> (isize, f64, isize, f64) {
        let x = r / self.grid.hr - 0.5;
        let y = (z - self.grid.z_min) / self.grid.hz - 0.5;
        let xf = libm::floor(x);
        let yf = libm::floor(y);
        (xf as isize, x - xf, yf as isize, y - yf)
    }

    pub fn bilinear(&self, r: f64, z: f64) -> f64 {
        let (i, tx, j, ty) = self.frac(r, z);
        let a = self.node(i, j) * (1.0 - ty) + self.node(i, j + 1) * ty;
        let b = self.node(i + 1, j) * (1.0 - ty) + self.node(i + 1, j + 1) * ty;
        a * (1.0 - tx) + b * tx
    }

    /// Tensor-product cubic Lagrange interpolation on the 4×4 neighbourhood.
    pub fn bicubic(&self, r: f64, z: f64) -> f64 {
        let (i, tx, j, ty) = self.frac(r, z);
        let wx = cubic_weights(tx);
        let wy = cubic_weights(ty);
        let mut s = 0.0;
        for (a, wa) in wx.iter().enumerate() {
            let ii = i - 1 + a as isize;
            let mut row = 0.0;
            for (b, wb) in wy.iter().enumerate() {
                row += wb * self.node(ii, j - 1 + b as isize);
            }
            s += wa * row;
        }
        s
    }

    /// `(|δ²_r| + |δ²_z|)/4` at node `(i, j)`: how far a smooth function
    /// with these second differences (mixed term included) can exceed the
    /// node value within half a cell.
    pub fn curvature_allowance(&self, i: isize, j: isize) -> f64 {
        let c = self.node(i, j);
        let d2r = self.node(i - 1, j) - 2.0 * c + self.node(i + 1, j);
        let d2z = self.node(i, j - 1) - 2.0 * c + self.node(i, j + 1);
        0.25 * (d2r.abs() + d2z.abs())
    }

    /// Range of the enclosing 2×2 cell corners widened by the largest
    /// corner [`curvature_allowance`](Self::curvature_allowance).
    pub fn curvature_range(&self, r: f64, z: f64) -> (f64, f64) {
        let (i, _, j, _) = self.frac(r, z);
        let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
        let mut allowance: f64 = 0.0;
        for a in 0..2 {
            for b in 0..2 {
                let c = self.node(i + a, j + b);
                lo = lo.min(c);
                hi = hi.max(c);
                allowance = allowance.max(self.curvature_allowance(i + a, j + b));
            }
        }
        (lo - allowance, hi + allowance)
    }

    /// Bicubic value clipped to the range of the enclosing 2×2 cell corners.
    pub fn bicubic_clipped(&self, r: f64, z: f64) -> f64 {
        let (i, _, j, _) = self.frac(r, z);
        let c = [
            self.node(i, j),
            self.node(i + 1, j),
            self.node(i, j + 1),
            self.node(i + 1, j + 1),
        ];
        let lo = c.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = c.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        self.bicubic(r, z).clamp(lo, hi)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::FieldRole;

    #[test]
    fn reproduces_cubics_away_from_edges() {
        let g = HalfPlaneGrid::new(16, 16, 2.0, -1.0, 1.0).unwrap();
        let f = g.sample(FieldRole::Test, |r, z| r * r * r - 2.0 * r * z * z + z);
        let s = Sampler::new(g, &f.values, AxisParity::Even);
        for &(r, z) in &[(0.73, 0.11), (1.21, -0.37), (0.5, 0.5)] {
            let exact = r * r * r - 2.0 * r * z * z + z;
            assert!((s.bicubic(r, z) - exact).abs() < 1e-12);
        }
        let lin = g.sample(FieldRole::Test, |r, z| 3.0 * r - z);
        let s = Sampler::new(g, &lin.values, AxisParity::Even);
        assert!((s.bilinear(0.9, 0.3) - 2.4).abs() < 1e-12);
    }

    #[test]
    fn node_values_and_parity() {
        let g = HalfPlaneGrid::new(8, 8, 1.0, 0.0, 1.0).unwrap();
        let f = g.sample(FieldRole::Test, |r, z| r + 10.0 * z);
        let s = Sampler::new(g, &f.values, AxisParity::Odd);
        assert_eq!(s.node(-1, 3), -f.at(0, 3));
        assert_eq!(s.node(-2, 3), -f.at(1, 3));
        assert_eq!(s.node(20, 30), f.at(7, 7));
        // interpolation at a centre returns the stored value
        assert!((s.bicubic(g.r(3), g.z(4)) - f.at(3, 4)).abs() < 1e-14);
    }

    #[test]
    fn clipped_stays_in_local_range() {
        let g = HalfPlaneGrid::new(8, 8, 1.0, 0.0, 1.0).unwrap();
        let mut f = crate::grid::ScalarField::zeros(g, FieldRole::Test);
        f.values[g.idx(4, 4)] = 1.0;
        let s = Sampler::new(g, &f.values, AxisParity::Even);
        for k in 0..50 {
            let r = 0.05 + 0.018 * k as f64;
            let v = s.bicubic_clipped(r, 0.52);
            assert!((0.0..=1.0).contains(&v));
        }
    }
}
