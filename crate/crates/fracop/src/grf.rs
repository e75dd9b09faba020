//! Periodic Gaussian random fields by spectral synthesis.
//!
//! A field on `[0, 1)^d` is `u(x) = Σ_m c_m exp(2πi m·x)` over the integer
//! modes with every `|m_i| ≤ K`, where `c_{-m} = conj(c_m)` and
//! `E|c_m|² = λ_m ∝ (4π²|m|² + τ²)^(-exponent)`, normalized so the pointwise
//! variance is `sigma²`. Coefficients are drawn in a fixed mode order that
//! does not depend on the grid, so the same seed yields samples of the same
//! continuous field at every resolution fine enough to hold the `K` modes.

use std::f64::consts::PI;
use std::sync::Arc;

use fracop_core::C64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rustfft::{Fft, FftPlanner};

#[derive(Clone, Debug, PartialEq)]
pub struct GrfSpec {
    pub ndim: usize,
    pub exponent: f64,
    pub tau: f64,
    pub sigma: f64,
    /// Highest mode index per axis.
    pub max_mode: usize,
    pub seed: u64,
}

impl Default for GrfSpec {
    fn default() -> Self {
        Self {
            ndim: 1,
            exponent: 2.0,
            tau: 5.0,
            sigma: 1.0,
            max_mode: 12,
            seed: 0,
        }
    }
}

/// Mode coefficients on the box `[-K, K]^d`, row-major with offset `K`.
#[derive(Clone, Debug, PartialEq)]
pub struct Modes {
    pub ndim: usize,
    pub k: usize,
    pub coeffs: Vec<C64>,
}

impl Modes {
    fn side(&self) -> usize {
        2 * self.k + 1
    }

    /// Integer mode of a flat index.
    pub fn mode(&self, idx: usize) -> [i64; 2] {
        let s = self.side();
        let k = self.k as i64;
        if self.ndim == 1 {
            [idx as i64 - k, 0]
        } else {
            [(idx / s) as i64 - k, (idx % s) as i64 - k]
        }
    }

    /// Multiplies every coefficient by `f(m)`.
    pub fn scaled(&self, f: impl Fn([i64; 2]) -> f64) -> Modes {
        let coeffs = self
            .coeffs
            .iter()
            .enumerate()
            .map(|(i, &c)| c * f(self.mode(i)))
            .collect();
        Modes { coeffs, ..self.clone() }
    }

    /// Real samples at `i / n` on every axis, row-major.
    pub fn synthesize(&self, n: usize) -> Vec<f64> {
        assert!(n > 2 * self.k, "grid {n} cannot hold mode {}", self.k);
        let fft = FftPlanner::new().plan_fft_inverse(n);
        let pos = |m: i64| m.rem_euclid(n as i64) as usize;
        if self.ndim == 1 {
            let mut buf = vec![C64::new(0.0, 0.0); n];
            for (i, &c) in self.coeffs.iter().enumerate() {
                buf[pos(self.mode(i)[0])] += c;
            }
            fft.process(&mut buf);
            return buf.iter().map(|z| z.re).collect();
        }
        let mut buf = vec![C64::new(0.0, 0.0); n * n];
        for (i, &c) in self.coeffs.iter().enumerate() {
            let [a, b] = self.mode(i);
            buf[pos(a) * n + pos(b)] += c;
        }
        inverse_2d(&mut buf, n, &fft);
        buf.iter().map(|z| z.re).collect()
    }
}

fn inverse_2d(buf: &mut [C64], n: usize, fft: &Arc<dyn Fft<f64>>) {
    // rows, then columns through a transpose
    fft.process(buf);
    let mut t = vec![C64::new(0.0, 0.0); n * n];
    for i in 0..n {
        for j in 0..n {
            t[j * n + i] = buf[i * n + j];
        }
    }
    fft.process(&mut t);
    for i in 0..n {
        for j in 0..n {
            buf[i * n + j] = t[j * n + i];
        }
    }
}

impl GrfSpec {
    /// Unnormalized spectral density at integer mode `m`.
    pub fn density(&self, m: [i64; 2]) -> f64 {
        let m2 = (m[0] * m[0] + m[1] * m[1]) as f64;
        (4.0 * PI * PI * m2 + self.tau * self.tau).powf(-self.exponent)
    }

    fn effective_k(&self, n: usize) -> usize {
        self.max_mode.min((n.max(1) - 1) / 2)
    }

    /// Coefficients of sample `index` for a grid of length `n` per axis.
    pub fn modes(&self, index: u64, n: usize) -> Modes {
        let k = self.effective_k(n);
        let side = 2 * k + 1;
        let count = if self.ndim == 1 { side } else { side * side };
        let shell = Modes {
            ndim: self.ndim,
            k,
            coeffs: vec![C64::new(0.0, 0.0); count],
        };
        let total: f64 = (0..count).map(|i| self.density(shell.mode(i))).sum();
        let norm = self.sigma * self.sigma / total;
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(index);
        let mut coeffs = shell.coeffs.clone();
        // the upper half of the box in row-major order, mirrored into the lower
        let centre = count / 2;
        for i in centre..count {
            let lam = norm * self.density(shell.mode(i));
            let a: f64 = StandardNormal.sample(&mut rng);
            if i == centre {
                coeffs[i] = C64::new(lam.sqrt() * a, 0.0);
            } else {
                let b: f64 = StandardNormal.sample(&mut rng);
                let c = C64::new(a, b) * (lam / 2.0).sqrt();
                coeffs[i] = c;
                coeffs[count - 1 - i] = c.conj();
            }
        }
        Modes { coeffs, ..shell }
    }

    /// Sample `index` on a grid of `n` points per axis.
    pub fn sample(&self, index: u64, n: usize) -> Vec<f64> {
        self.modes(index, n).synthesize(n)
    }
}

/// Sample 0 of `spec` on `n` points per axis.
pub fn sample_grf(spec: &GrfSpec, n: usize) -> Vec<f64> {
    spec.sample(0, n)
}
