//! Complete elliptic integrals by the arithmetic-geometric mean.
//!
//! Both functions take the parameter `m = k²` (the scipy convention).

use core::f64::consts::PI;

/// `K(m) = ∫₀^{π/2} (1 − m sin²θ)^{-1/2} dθ` for `m < 1`.
pub fn ellip_k(m: f64) -> f64 {
    ellip_ke(m).0
}

/// `E(m) = ∫₀^{π/2} (1 − m sin²θ)^{1/2} dθ` for `m ≤ 1`.
pub fn ellip_e(m: f64) -> f64 {
    if m == 1.0 {
        return 1.0;
    }
    ellip_ke(m).1
}

/// `(K(m), E(m))` from a single AGM iteration.
pub fn ellip_ke(m: f64) -> (f64, f64) {
    debug_assert!(m < 1.0, "m = {m}");
    let mut a = 1.0;
    let mut b = libm::sqrt(1.0 - m);
    // Σ 2^{n-1} c_n², starting with c_0² = m
    let mut sum = 0.5 * m;
    let mut pow2 = 0.5;
    for _ in 0..40 {
        let c = 0.5 * (a - b);
        let an = 0.5 * (a + b);
        b = libm::sqrt(a * b);
        a = an;
        pow2 *= 2.0;
        sum += pow2 * c * c;
        if c.abs() <= 1e-16 * a {
            break;
        }
    }
    let k = PI / (2.0 * a);
    (k, k * (1.0 - sum))
}
