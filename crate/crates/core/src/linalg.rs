//! Symmetric five-point operators on the `nr × nz` cell lattice and a
//! preconditioned conjugate-gradient solver for them.

use crate::transform::Dct;
use alloc::vec;
use alloc::vec::Vec;

/// A symmetric matrix with the sparsity of the five-point stencil.
///
/// `east[k]` couples cell `k = (i, j)` with `(i + 1, j)`, `north[k]` couples
/// it with `(i, j + 1)`. Entries that would leave the lattice are zero.
#[derive(Debug, Clone)]
pub struct Stencil5 {
    pub nr: usize,
    pub nz: usize,
    pub diag: Vec<f64>,
    pub east: Vec<f64>,
    pub north: Vec<f64>,
}

impl Stencil5 {
    pub fn zeros(nr: usize, nz: usize) -> Self {
        let n = nr * nz;
        Self {
            nr,
            nz,
            diag: vec![0.0; n],
            east: vec![0.0; n],
            north: vec![0.0; n],
        }
    }

    pub fn len(&self) -> usize {
        self.nr * self.nz
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// `y = A x`.
    pub fn apply(&self, x: &[f64], y: &mut [f64]) {
        let (nr, nz) = (self.nr, self.nz);
        for i in 0..nr {
            let base = i * nz;
            for j in 0..nz {
                let k = base + j;
                let mut s = self.diag[k] * x[k];
                if j + 1 < nz {
                    s += self.north[k] * x[k + 1];
                }
                if j > 0 {
                    s += self.north[k - 1] * x[k - 1];
                }
                if i + 1 < nr {
                    s += self.east[k] * x[k + nz];
                }
                if i > 0 {
                    s += self.east[k - nz] * x[k - nz];
                }
                y[k] = s;
            }
        }
    }

    /// Adds `alpha * other` entrywise.
    pub fn add_scaled(&mut self, alpha: f64, other: &Stencil5) {
        for (a, b) in self.diag.iter_mut().zip(&other.diag) {
            *a += alpha * b;
        }
        for (a, b) in self.east.iter_mut().zip(&other.east) {
            *a += alpha * b;
        }
        for (a, b) in self.north.iter_mut().zip(&other.north) {
            *a += alpha * b;
        }
    }
}

/// Outcome of a successful or failed conjugate-gradient solve.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CgOutcome {
    pub iterations: usize,
    /// `‖b − A x‖₂ / ‖b‖₂` at exit.
    pub residual: f64,
    pub converged: bool,
}

/// Jacobi-preconditioned conjugate gradients for a symmetric positive
/// definite [`Stencil5`], starting from the contents of `x`.
pub fn pcg(a: &Stencil5, b: &[f64], x: &mut [f64], tol: f64, max_iter: usize) -> CgOutcome {
    let inv_diag: Vec<f64> = a.diag.iter().map(|d| 1.0 / d).collect();
    pcg_with(a, b, x, tol, max_iter, |r, z| {
        for k in 0..r.len() {
            z[k] = r[k] * inv_diag[k];
        }
    })
}

/// Boundary closure of the `z` second-difference matrix.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ZClosure {
    /// Odd reflection across the end faces (value zero on the face).
    Dirichlet,
    /// Even reflection (zero flux).
    Neumann,
}

/// Operator of the form `A = T ⊗ I + diag(d) ⊗ K`, where `T` is a symmetric
/// tridiagonal matrix in `r`, `d > 0`, and `K` is the cell-centred
/// `−∂_z²` matrix with the given closure. `A` is inverted exactly by a
/// sine/cosine transform in `z` followed by one tridiagonal solve per mode.
#[derive(Debug, Clone)]
pub struct Separable {
    nr: usize,
    nz: usize,
    t_diag: Vec<f64>,
    t_off: Vec<f64>,
    d: Vec<f64>,
    hz: f64,
    closure: ZClosure,
    /// Orthonormal basis, `basis[m * nz + j]`.
    basis: Vec<f64>,
    lambda: Vec<f64>,
    /// Thomas factors per `(i, m)`.
    cprime: Vec<f64>,
    inv_den: Vec<f64>,
    /// Fast transform when `nz` is a power of two, with the mode norms.
    fast: Option<(Dct, Vec<f64>)>,
}

impl Separable {
    pub fn new(t_diag: Vec<f64>, t_off: Vec<f64>, d: Vec<f64>, nz: usize, hz: f64, closure: ZClosure) -> Self {
        let nr = t_diag.len();
        assert_eq!(t_off.len() + 1, nr);
        assert_eq!(d.len(), nr);
        let pi = core::f64::consts::PI;
        let mut basis = vec![0.0; nz * nz];
        let mut lambda = vec![0.0; nz];
        let nzf = nz as f64;
        for m in 0..nz {
            // Dirichlet modes are indexed 1..=nz, Neumann modes 0..nz
            let (mm, norm) = match closure {
                ZClosure::Dirichlet => {
                    let mm = (m + 1) as f64;
                    (
                        mm,
                        if m + 1 == nz {
                            libm::sqrt(1.0 / nzf)
                        } else {
                            libm::sqrt(2.0 / nzf)
                        },
                    )
                }
                ZClosure::Neumann => (
                    m as f64,
                    if m == 0 {
                        libm::sqrt(1.0 / nzf)
                    } else {
                        libm::sqrt(2.0 / nzf)
                    },
                ),
            };
            let s = libm::sin(0.5 * pi * mm / nzf);
            lambda[m] = 4.0 * s * s / (hz * hz);
            for j in 0..nz {
                let arg = pi * mm * (j as f64 + 0.5) / nzf;
                basis[m * nz + j] = norm
                    * match closure {
                        ZClosure::Dirichlet => libm::sin(arg),
                        ZClosure::Neumann => libm::cos(arg),
                    };
            }
        }
        let mut cprime = vec![0.0; nr * nz];
        let mut inv_den = vec![0.0; nr * nz];
        for m in 0..nz {
            let mut prev_c = 0.0;
            for i in 0..nr {
                let a = t_diag[i] + lambda[m] * d[i];
                let lower = if i > 0 { t_off[i - 1] } else { 0.0 };
                let den = a - lower * prev_c;
                let inv = 1.0 / den;
                let c = if i + 1 < nr { t_off[i] * inv } else { 0.0 };
                cprime[i * nz + m] = c;
                inv_den[i * nz + m] = inv;
                prev_c = c;
            }
        }
        let fast = Dct::new(nz).map(|dct| {
            let norms = (0..nz)
                .map(|m| {
                    let edge = match closure {
                        ZClosure::Dirichlet => m + 1 == nz,
                        ZClosure::Neumann => m == 0,
                    };
                    libm::sqrt(if edge { 1.0 } else { 2.0 } / nzf)
                })
                .collect();
            (dct, norms)
        });
        Self {
            nr,
            nz,
            t_diag,
            t_off,
            d,
            hz,
            closure,
            basis,
            lambda,
            cprime,
            inv_den,
            fast,
        }
    }

    /// The same operator as a [`Stencil5`].
    pub fn stencil(&self) -> Stencil5 {
        let (nr, nz) = (self.nr, self.nz);
        let mut a = Stencil5::zeros(nr, nz);
        let ih2 = 1.0 / (self.hz * self.hz);
        for i in 0..nr {
            for j in 0..nz {
                let k = i * nz + j;
                let mut kz = 2.0 * ih2;
                if j == 0 || j == nz - 1 {
                    kz += match self.closure {
                        ZClosure::Dirichlet => ih2,
                        ZClosure::Neumann => -ih2,
                    };
                }
                a.diag[k] = self.t_diag[i] + self.d[i] * kz;
                if i + 1 < nr {
                    a.east[k] = self.t_off[i];
                }
                if j + 1 < nz {
                    a.north[k] = -self.d[i] * ih2;
                }
            }
        }
        a
    }

    /// `x = A⁻¹ b`.
    pub fn solve(&self, b: &[f64], x: &mut [f64]) {
        let (nr, nz) = (self.nr, self.nz);
        let mut hat = vec![0.0; nr * nz];
        for i in 0..nr {
            self.forward(&b[i * nz..(i + 1) * nz], &mut hat[i * nz..(i + 1) * nz]);
        }
        // forward sweep, vectorized across modes
        for i in 0..nr {
            for m in 0..nz {
                let k = i * nz + m;
                let prev = if i > 0 { self.t_off[i - 1] * hat[k - nz] } else { 0.0 };
                hat[k] = (hat[k] - prev) * self.inv_den[k];
            }
        }
        for i in (0..nr.saturating_sub(1)).rev() {
            for m in 0..nz {
                let k = i * nz + m;
                hat[k] -= self.cprime[k] * hat[k + nz];
            }
        }
        for i in 0..nr {
            self.inverse(&hat[i * nz..(i + 1) * nz], &mut x[i * nz..(i + 1) * nz]);
        }
    }

    /// Mode coefficients of one `z` row.
    fn forward(&self, row: &[f64], hat: &mut [f64]) {
        let nz = self.nz;
        match (&self.fast, self.closure) {
            (Some((dct, norms)), ZClosure::Neumann) => {
                dct.dct2(row, hat);
                hat.iter_mut().zip(norms).for_each(|(h, n)| *h *= n);
            }
            (Some((dct, norms)), ZClosure::Dirichlet) => {
                // sin(πm(2j+1)/2n) = (−1)^j cos(π(n−m)(2j+1)/2n)
                let flipped: Vec<f64> = row
                    .iter()
                    .enumerate()
                    .map(|(j, v)| if j % 2 == 0 { *v } else { -v })
                    .collect();
                let mut c = vec![0.0; nz];
                dct.dct2(&flipped, &mut c);
                for m in 0..nz {
                    hat[m] = norms[m] * c[nz - 1 - m];
                }
            }
            (None, _) => {
                for m in 0..nz {
                    hat[m] = dot(&self.basis[m * nz..(m + 1) * nz], row);
                }
            }
        }
    }

    fn inverse(&self, hat: &[f64], out: &mut [f64]) {
        let nz = self.nz;
        match (&self.fast, self.closure) {
            (Some((dct, norms)), ZClosure::Neumann) => {
                let c: Vec<f64> = hat.iter().zip(norms).map(|(h, n)| h * n).collect();
                dct.dct3(&c, out);
            }
            (Some((dct, norms)), ZClosure::Dirichlet) => {
                let c: Vec<f64> = (0..nz).map(|k| norms[nz - 1 - k] * hat[nz - 1 - k]).collect();
                dct.dct3(&c, out);
                out.iter_mut().skip(1).step_by(2).for_each(|v| *v = -*v);
            }
            (None, _) => {
                out.iter_mut().for_each(|v| *v = 0.0);
                for m in 0..nz {
                    let q = &self.basis[m * nz..(m + 1) * nz];
                    for (o, qj) in out.iter_mut().zip(q) {
                        *o += hat[m] * qj;
                    }
                }
            }
        }
    }

    pub fn eigenvalues(&self) -> &[f64] {
        &self.lambda
    }
}

/// Conjugate gradients preconditioned by an exact separable inverse.
pub fn pcg_separable(a: &Stencil5, pre: &Separable, b: &[f64], x: &mut [f64], tol: f64, max_iter: usize) -> CgOutcome {
    pcg_with(a, b, x, tol, max_iter, |r, z| pre.solve(r, z))
}

fn pcg_with(
    a: &Stencil5,
    b: &[f64],
    x: &mut [f64],
    tol: f64,
    max_iter: usize,
    mut precond: impl FnMut(&[f64], &mut [f64]),
) -> CgOutcome {
    let n = a.len();
    let bnorm = libm::sqrt(dot(b, b));
    if bnorm == 0.0 {
        x.iter_mut().for_each(|v| *v = 0.0);
        return CgOutcome {
            iterations: 0,
            residual: 0.0,
            converged: true,
        };
    }
    let mut r = vec![0.0; n];
    a.apply(x, &mut r);
    for k in 0..n {
        r[k] = b[k] - r[k];
    }
    let mut res = libm::sqrt(dot(&r, &r)) / bnorm;
    if res <= tol {
        return CgOutcome {
            iterations: 0,
            residual: res,
            converged: true,
        };
    }
    let mut z = vec![0.0; n];
    precond(&r, &mut z);
    let mut p = z.clone();
    let mut q = vec![0.0; n];
    let mut rz = dot(&r, &z);
    for it in 1..=max_iter {
        a.apply(&p, &mut q);
        let pq = dot(&p, &q);
        if !(pq > 0.0) {
            return CgOutcome {
                iterations: it,
                residual: res,
                converged: false,
            };
        }
        let alpha = rz / pq;
        let mut rr = 0.0;
        for k in 0..n {
            x[k] += alpha * p[k];
            r[k] -= alpha * q[k];
            rr += r[k] * r[k];
        }
        res = libm::sqrt(rr) / bnorm;
        if res <= tol {
            return CgOutcome {
                iterations: it,
                residual: res,
                converged: true,
            };
        }
        precond(&r, &mut z);
        let rz_new = dot(&r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        for k in 0..n {
            p[k] = z[k] + beta * p[k];
        }
    }
    CgOutcome {
        iterations: max_iter,
        residual: res,
        converged: false,
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn laplacian(nr: usize, nz: usize) -> Stencil5 {
        let mut a = Stencil5::zeros(nr, nz);
        for i in 0..nr {
            for j in 0..nz {
                let k = i * nz + j;
                a.diag[k] = 4.0;
                if i + 1 < nr {
                    a.east[k] = -1.0;
                }
                if j + 1 < nz {
                    a.north[k] = -1.0;
                }
            }
        }
        a
    }

    #[test]
    fn apply_is_symmetric() {
        let a = laplacian(5, 7);
        let n = a.len();
        let x: Vec<f64> = (0..n).map(|k| libm::sin(k as f64)).collect();
        let y: Vec<f64> = (0..n).map(|k| libm::cos(3.0 * k as f64)).collect();
        let mut ax = vec![0.0; n];
        let mut ay = vec![0.0; n];
        a.apply(&x, &mut ax);
        a.apply(&y, &mut ay);
        assert!((dot(&ax, &y) - dot(&x, &ay)).abs() < 1e-12);
    }

    #[test]
    fn separable_inverse_is_exact() {
        for (closure, nz) in [
            (ZClosure::Dirichlet, 9),
            (ZClosure::Neumann, 9),
            (ZClosure::Dirichlet, 16),
            (ZClosure::Neumann, 16),
        ] {
            let nr = 7;
            let t_diag: Vec<f64> = (0..nr).map(|i| 3.0 + i as f64).collect();
            let t_off: Vec<f64> = (0..nr - 1).map(|i| -1.0 - 0.1 * i as f64).collect();
            let d: Vec<f64> = (0..nr).map(|i| 1.0 / (i as f64 + 0.5)).collect();
            let sep = Separable::new(t_diag, t_off, d, nz, 0.3, closure);
            let a = sep.stencil();
            let xs: Vec<f64> = (0..nr * nz).map(|k| libm::cos(0.7 * k as f64)).collect();
            let mut b = vec![0.0; nr * nz];
            a.apply(&xs, &mut b);
            let mut x = vec![0.0; nr * nz];
            sep.solve(&b, &mut x);
            for (u, v) in x.iter().zip(&xs) {
                assert!((u - v).abs() < 1e-11, "{closure:?}");
            }
        }
    }

    #[test]
    fn pcg_solves_dirichlet_laplacian() {
        let a = laplacian(20, 30);
        let n = a.len();
        let xs: Vec<f64> = (0..n).map(|k| libm::sin(0.1 * k as f64)).collect();
        let mut b = vec![0.0; n];
        a.apply(&xs, &mut b);
        let mut x = vec![0.0; n];
        let out = pcg(&a, &b, &mut x, 1e-12, 1000);
        assert!(out.converged);
        for (u, v) in x.iter().zip(&xs) {
            assert!((u - v).abs() < 1e-9);
        }
        let mut x0 = vec![1.0; n];
        let out = pcg(&a, &vec![0.0; n], &mut x0, 1e-12, 10);
        assert_eq!(out.iterations, 0);
        assert!(x0.iter().all(|v| *v == 0.0));
    }
}
