//! Initial relative-vorticity fields and the Hill's-vortex closed form.

use crate::error::{invalid, Result};
use crate::grid::{FieldRole, HalfPlaneGrid, ScalarField};

#[derive(Debug, Clone, PartialEq)]
pub enum InitialCondition {
    /// `ξ = A exp(−((r−r₀)² + (z−z₀)²) / (2σ²))`. With `r₀ = 0` this is a
    /// Gaussian blob centred on the axis.
    GaussianRing {
        r0: f64,
        z0: f64,
        sigma: f64,
        amplitude: f64,
    },
    /// `ξ = A` on the ball `r² + z² ≤ a²`, zero outside.
    HillVortex { a: f64, amplitude: f64 },
    /// `ξ = A max(d, cutoff)^{−α}` tapered to zero at `outer_radius`, where
    /// `d` is the distance to `(r₀, z₀)` in the half-plane.
    SingularRing {
        r0: f64,
        z0: f64,
        alpha: f64,
        cutoff: f64,
        outer_radius: f64,
        amplitude: f64,
        /// Exponent of the Lebesgue space the datum must belong to.
        p: f64,
    },
}

impl InitialCondition {
    /// Whether the datum is nonnegative by construction.
    pub fn is_nonnegative(&self) -> bool {
        match *self {
            InitialCondition::GaussianRing { amplitude, .. }
            | InitialCondition::HillVortex { amplitude, .. }
            | InitialCondition::SingularRing { amplitude, .. } => amplitude >= 0.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let pos = |name: &str, v: f64| -> Result<()> {
            if v.is_finite() && v > 0.0 {
                Ok(())
            } else {
                Err(invalid(alloc::format!("{name} must be positive (got {v})")))
            }
        };
        let fin = |name: &str, v: f64| -> Result<()> {
            if v.is_finite() {
                Ok(())
            } else {
                Err(invalid(alloc::format!("{name} must be finite")))
            }
        };
        match *self {
            InitialCondition::GaussianRing {
                r0,
                z0,
                sigma,
                amplitude,
            } => {
                if !(r0.is_finite() && r0 >= 0.0) {
                    return Err(invalid(alloc::format!("r0 must be >= 0 (got {r0})")));
                }
                fin("z0", z0)?;
                pos("sigma", sigma)?;
                fin("amplitude", amplitude)
            }
            InitialCondition::HillVortex { a, amplitude } => {
                pos("a", a)?;
                fin("amplitude", amplitude)
            }
            InitialCondition::SingularRing {
                r0,
                z0,
                alpha,
                cutoff,
                outer_radius,
                amplitude,
                p,
            } => {
                if !(r0.is_finite() && r0 >= 0.0) {
                    return Err(invalid(alloc::format!("r0 must be >= 0 (got {r0})")));
                }
                fin("z0", z0)?;
                pos("cutoff", cutoff)?;
                pos("outer_radius", outer_radius)?;
                fin("amplitude", amplitude)?;
                if !(p.is_finite() && p >= 1.0) {
                    return Err(invalid(alloc::format!("p must be >= 1 (got {p})")));
                }
                if !(alpha.is_finite() && alpha >= 0.0) {
                    return Err(invalid(alloc::format!("alpha must be >= 0 (got {alpha})")));
                }
                if r0 > 0.0 && outer_radius >= r0 {
                    return Err(invalid("singular_ring outer_radius must be smaller than r0"));
                }
                let limit = singular_exponent_limit(r0, p);
                if alpha >= limit {
                    return Err(invalid(alloc::format!(
                        "singular_ring alpha={alpha} is not below {limit} required for an L^{p} datum"
                    )));
                }
                Ok(())
            }
        }
    }
}

/// Largest admissible `α` (exclusive) for `d^{−α}` to lie in `L^p(R³)`: the
/// singular set is a point when `r₀ = 0` (codimension 3) and a circle
/// otherwise (codimension 2).
pub fn singular_exponent_limit(r0: f64, p: f64) -> f64 {
    let codim = if r0 == 0.0 { 3.0 } else { 2.0 };
    codim / p
}

fn taper(d: f64, outer: f64) -> f64 {
    let inner = 0.5 * outer;
    if d <= inner {
        1.0
    } else if d >= outer {
        0.0
    } else {
        let s = (d - inner) / (outer - inner);
        let c = libm::cos(0.5 * core::f64::consts::PI * s);
        c * c
    }
}

/// Samples the datum at the cell centres. For `SingularRing` the cutoff is
/// raised to half a cell if it was smaller; [`effective_cutoff`] returns it.
pub fn make_initial_condition(ic: &InitialCondition, grid: &HalfPlaneGrid) -> Result<ScalarField> {
    ic.validate()?;
    let f = match *ic {
        InitialCondition::GaussianRing {
            r0,
            z0,
            sigma,
            amplitude,
        } => {
            let s2 = 2.0 * sigma * sigma;
            grid.sample(FieldRole::RelativeVorticity, |r, z| {
                let d2 = (r - r0) * (r - r0) + (z - z0) * (z - z0);
                amplitude * libm::exp(-d2 / s2)
            })
        }
        InitialCondition::HillVortex { a, amplitude } => grid.sample(FieldRole::RelativeVorticity, |r, z| {
            if r * r + z * z <= a * a {
                amplitude
            } else {
                0.0
            }
        }),
        InitialCondition::SingularRing {
            r0,
            z0,
            alpha,
            outer_radius,
            amplitude,
            ..
        } => {
            let c = effective_cutoff(ic, grid);
            grid.sample(FieldRole::RelativeVorticity, |r, z| {
                let d = libm::hypot(r - r0, z - z0);
                amplitude * libm::pow(d.max(c), -alpha) * taper(d, outer_radius)
            })
        }
    };
    f.ensure_finite()?;
    Ok(f)
}

/// Cutoff radius actually used when sampling a singular datum.
pub fn effective_cutoff(ic: &InitialCondition, grid: &HalfPlaneGrid) -> f64 {
    match *ic {
        InitialCondition::SingularRing { cutoff, .. } => cutoff.max(0.5 * grid.hr.max(grid.hz)),
        _ => 0.0,
    }
}

/// Hill's spherical vortex of radius `a` with `ξ = A` inside, in the frame
/// where the fluid is at rest at infinity.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HillVortex {
    pub a: f64,
    pub amplitude: f64,
}

impl HillVortex {
    /// Translation speed `2Aa²/15` along `+z`.
    pub fn speed(&self) -> f64 {
        2.0 * self.amplitude * self.a * self.a / 15.0
    }

    pub fn stream(&self, r: f64, z: f64) -> f64 {
        let (a, am) = (self.a, self.amplitude);
        let rho2 = r * r + z * z;
        if rho2 <= a * a {
            am / 10.0 * r * r * (a * a - rho2) + am * a * a / 15.0 * r * r
        } else {
            am * libm::pow(a, 5.0) / 15.0 * r * r / libm::pow(rho2, 1.5)
        }
    }

    pub fn velocity(&self, r: f64, z: f64) -> (f64, f64) {
        let (a, am) = (self.a, self.amplitude);
        let rho2 = r * r + z * z;
        if rho2 <= a * a {
            let ur = am / 5.0 * r * z;
            let uz = am / 10.0 * (2.0 * a * a - 4.0 * r * r - 2.0 * z * z) + 2.0 * am * a * a / 15.0;
            (ur, uz)
        } else {
            let c = am * libm::pow(a, 5.0) / 15.0;
            let rho5 = libm::pow(rho2, 2.5);
            let ur = 3.0 * c * r * z / rho5;
            let uz = c * (2.0 * z * z - r * r) / rho5;
            (ur, uz)
        }
    }

    /// Velocity in the frame moving with the vortex.
    pub fn comoving_velocity(&self, r: f64, z: f64) -> (f64, f64) {
        let (ur, uz) = self.velocity(r, z);
        (ur, uz - self.speed())
    }

    /// `‖u‖²_{L²(R³)} = (20/7) π a³ U²`.
    pub fn energy(&self) -> f64 {
        let u = self.speed();
        20.0 / 7.0 * core::f64::consts::PI * libm::pow(self.a, 3.0) * u * u
    }

    /// `∫_H ω r² d(r,z) = 4 A a⁵ / 15`.
    pub fn impulse(&self) -> f64 {
        4.0 * self.amplitude * libm::pow(self.a, 5.0) / 15.0
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hill_indicator() {
        let g = HalfPlaneGrid::new(32, 64, 2.0, -2.0, 2.0).unwrap();
        let f = make_initial_condition(&InitialCondition::HillVortex { a: 1.0, amplitude: 1.0 }, &g).unwrap();
        for i in 0..g.nr {
            for j in 0..g.nz {
                let (r, z) = (g.r(i), g.z(j));
                let inside = r * r + z * z <= 1.0;
                assert_eq!(f.at(i, j), if inside { 1.0 } else { 0.0 });
            }
        }
    }

    #[test]
    fn singular_rule() {
        let point = |alpha| InitialCondition::SingularRing {
            r0: 0.0,
            z0: 0.0,
            alpha,
            cutoff: 0.01,
            outer_radius: 1.0,
            amplitude: 1.0,
            p: 1.5,
        };
        assert!(point(1.9).validate().is_ok());
        assert!(point(2.1).validate().is_err());
        let ring = InitialCondition::SingularRing {
            r0: 1.0,
            z0: 0.0,
            alpha: 1.2,
            cutoff: 0.01,
            outer_radius: 0.5,
            amplitude: 1.0,
            p: 1.5,
        };
        assert!(ring.validate().is_ok());
        let ring = InitialCondition::SingularRing {
            r0: 1.0,
            z0: 0.0,
            alpha: 1.4,
            cutoff: 0.01,
            outer_radius: 0.5,
            amplitude: 1.0,
            p: 1.5,
        };
        assert!(ring.validate().is_err());
    }

    #[test]
    fn hill_stream_is_continuous_and_matches_velocity() {
        let h = HillVortex { a: 1.3, amplitude: 2.0 };
        // continuity across the sphere
        let t = 0.7f64;
        let (r, z) = (1.3 * libm::sin(t), 1.3 * libm::cos(t));
        let e = 1e-9;
        assert!((h.stream(r * (1.0 - e), z * (1.0 - e)) - h.stream(r * (1.0 + e), z * (1.0 + e))).abs() < 1e-7);
        // comoving stream function vanishes on the sphere
        assert!((h.stream(r, z) - 0.5 * h.speed() * r * r).abs() < 1e-12);
        let d = 1e-6;
        for &(r, z) in &[(0.4, 0.3), (1.5, 0.9), (0.2, -2.0)] {
            let (ur, uz) = h.velocity(r, z);
            let pr = (h.stream(r + d, z) - h.stream(r - d, z)) / (2.0 * d);
            let pz = (h.stream(r, z + d) - h.stream(r, z - d)) / (2.0 * d);
            assert!((ur + pz / r).abs() < 1e-7);
            assert!((uz - pr / r).abs() < 1e-7);
        }
    }
}
