//! Unnormalized DCT-II / DCT-III of power-of-two length via a complex FFT.

use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::PI;

#[derive(Debug, Clone)]
pub(crate) struct Dct {
    n: usize,
    /// `exp(−2πik/n)` for `k < n/2`.
    roots: Vec<(f64, f64)>,
    /// `exp(−iπm/(2n))` for `m < n`.
    shift: Vec<(f64, f64)>,
    bitrev: Vec<usize>,
}

impl Dct {
    pub fn new(n: usize) -> Option<Self> {
        if n < 2 || !n.is_power_of_two() {
            return None;
        }
        let roots = (0..n / 2)
            .map(|k| {
                let a = -2.0 * PI * k as f64 / n as f64;
                (libm::cos(a), libm::sin(a))
            })
            .collect();
        let shift = (0..n)
            .map(|m| {
                let a = -PI * m as f64 / (2.0 * n as f64);
                (libm::cos(a), libm::sin(a))
            })
            .collect();
        let bits = n.trailing_zeros();
        let bitrev = (0..n).map(|k| k.reverse_bits() >> (usize::BITS - bits)).collect();
        Some(Self {
            n,
            roots,
            shift,
            bitrev,
        })
    }

    /// In-place forward FFT (`inverse = false`) or unscaled inverse FFT.
    fn fft(&self, re: &mut [f64], im: &mut [f64], inverse: bool) {
        let n = self.n;
        for k in 0..n {
            let j = self.bitrev[k];
            if j > k {
                re.swap(k, j);
                im.swap(k, j);
            }
        }
        let mut len = 2;
        while len <= n {
            let step = n / len;
            let half = len / 2;
            for start in (0..n).step_by(len) {
                for k in 0..half {
                    let (wr, mut wi) = self.roots[k * step];
                    if inverse {
                        wi = -wi;
                    }
                    let a = start + k;
                    let b = a + half;
                    let tr = re[b] * wr - im[b] * wi;
                    let ti = re[b] * wi + im[b] * wr;
                    re[b] = re[a] - tr;
                    im[b] = im[a] - ti;
                    re[a] += tr;
                    im[a] += ti;
                }
            }
            len *= 2;
        }
    }

    /// `X_m = Σ_j x_j cos(πm(2j+1)/(2n))`.
    pub fn dct2(&self, x: &[f64], out: &mut [f64]) {
        let n = self.n;
        let mut re = vec![0.0; n];
        let mut im = vec![0.0; n];
        for k in 0..n / 2 {
            re[k] = x[2 * k];
            re[n - 1 - k] = x[2 * k + 1];
        }
        self.fft(&mut re, &mut im, false);
        for m in 0..n {
            let (c, s) = self.shift[m];
            out[m] = re[m] * c - im[m] * s;
        }
    }

    /// `x_j = Σ_m c_m cos(πm(2j+1)/(2n))`.
    pub fn dct3(&self, c: &[f64], out: &mut [f64]) {
        let n = self.n;
        let mut re = vec![0.0; n];
        let mut im = vec![0.0; n];
        // Y_m = X_m − i X_{n−m} with X the DCT-II coefficients of the result
        for m in 0..n {
            let xm = if m == 0 { c[0] } else { 0.5 * c[m] };
            let xr = if m == 0 { 0.0 } else { 0.5 * c[n - m] };
            let (yr, yi) = (xm, -xr);
            // V_m = conj(shift_m) · Y_m
            let (sc, ss) = self.shift[m];
            re[m] = yr * sc + yi * ss;
            im[m] = yi * sc - yr * ss;
        }
        self.fft(&mut re, &mut im, true);
        // the unscaled inverse already carries the factor n that undoes 1/n
        for k in 0..n / 2 {
            out[2 * k] = re[k];
            out[2 * k + 1] = re[n - 1 - k];
        }
    }
}
