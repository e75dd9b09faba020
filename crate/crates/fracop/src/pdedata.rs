//! Synthetic operator-learning datasets.
//!
//! Every generator derives sample `i` from `(seed, i)` alone, so output is
//! identical for any thread count, and the same seed at a different grid
//! size samples the same continuous inputs.

use std::f64::consts::PI;

use fracop_core::C64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use rustfft::FftPlanner;

use crate::error::{Error, Result};
use crate::grf::GrfSpec;
use crate::nodf::{Dataset, Dtype};

fn real(v: &[f64]) -> Vec<C64> {
    v.iter().map(|&x| C64::new(x, 0.0)).collect()
}

fn collect(
    n_samples: usize,
    input_shape: Vec<usize>,
    output_shape: Vec<usize>,
    f: impl Fn(usize) -> Result<(Vec<f64>, Vec<f64>)> + Sync,
) -> Result<Dataset> {
    let pairs: Vec<(Vec<f64>, Vec<f64>)> = (0..n_samples).into_par_iter().map(&f).collect::<Result<_>>()?;
    let inputs = pairs.iter().flat_map(|p| real(&p.0)).collect();
    let outputs = pairs.iter().flat_map(|p| real(&p.1)).collect();
    Dataset::new(Dtype::F64, input_shape, output_shape, inputs, outputs)
}

#[derive(Clone, Debug, PartialEq)]
pub struct HeatParams {
    pub t_final: f64,
    pub diffusivity: f64,
    pub grf: GrfSpec,
}

impl Default for HeatParams {
    fn default() -> Self {
        Self {
            t_final: 0.1,
            diffusivity: 0.01,
            grf: GrfSpec::default(),
        }
    }
}

/// Periodic heat equation `u_t = ν u_xx` on `[0, 1)`, solved exactly per
/// Fourier mode: `c_m(T) = c_m(0) exp(-ν (2πm)² T)`.
pub fn gen_heat1d(n_samples: usize, grid_n: usize, p: &HeatParams, seed: u64) -> Result<Dataset> {
    let grf = GrfSpec { ndim: 1, seed, ..p.grf.clone() };
    collect(n_samples, vec![grid_n, 1], vec![grid_n, 1], |i| {
        let modes = grf.modes(i as u64, grid_n);
        let decayed = modes.scaled(|m| {
            let k = 2.0 * PI * m[0] as f64;
            (-p.diffusivity * k * k * p.t_final).exp()
        });
        Ok((modes.synthesize(grid_n), decayed.synthesize(grid_n)))
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct BurgersParams {
    pub t_final: f64,
    pub viscosity: f64,
    /// Time step as a fraction of `dx / max|u₀|`.
    pub cfl: f64,
    pub grf: GrfSpec,
}

impl Default for BurgersParams {
    fn default() -> Self {
        Self {
            t_final: 0.5,
            viscosity: 0.02,
            cfl: 0.2,
            grf: GrfSpec { sigma: 0.5, ..GrfSpec::default() },
        }
    }
}

/// Viscous Burgers `u_t + (u²/2)_x = ν u_xx` on `[0, 1)` from `u0`, by
/// pseudo-spectral integrating-factor RK4 with the 2/3 dealiasing rule.
pub fn solve_burgers(u0: &[f64], t_final: f64, viscosity: f64, cfl: f64) -> Option<Vec<f64>> {
    let n = u0.len();
    let mut planner = FftPlanner::new();
    let fwd = planner.plan_fft_forward(n);
    let inv = planner.plan_fft_inverse(n);
    let wave = |i: usize| -> f64 {
        let m = if i <= n / 2 { i as i64 } else { i as i64 - n as i64 };
        2.0 * PI * m as f64
    };
    let cutoff = n / 3;
    let keep: Vec<bool> = (0..n).map(|i| i.min(n - i) <= cutoff).collect();

    let umax = u0.iter().fold(0.0f64, |a, &b| a.max(b.abs())).max(1e-12);
    let dt_max = cfl / (n as f64 * umax);
    let steps = ((t_final / dt_max).ceil() as usize).max(1);
    let dt = t_final / steps as f64;
    let half: Vec<f64> = (0..n).map(|i| (-viscosity * wave(i) * wave(i) * dt / 2.0).exp()).collect();
    let full: Vec<f64> = half.iter().map(|e| e * e).collect();

    // -(u²/2)_x in spectral space, dealiased
    let nonlinear = |uh: &[C64]| -> Vec<C64> {
        let mut u: Vec<C64> = uh.iter().zip(&keep).map(|(&z, &k)| if k { z } else { C64::new(0.0, 0.0) }).collect();
        inv.process(&mut u);
        let mut sq: Vec<C64> = u.iter().map(|z| C64::new(0.5 * z.re * z.re / (n * n) as f64, 0.0)).collect();
        fwd.process(&mut sq);
        sq.iter()
            .enumerate()
            .map(|(i, &z)| if keep[i] { z * C64::new(0.0, -wave(i)) } else { C64::new(0.0, 0.0) })
            .collect()
    };

    let mut uh: Vec<C64> = u0.iter().map(|&x| C64::new(x, 0.0)).collect();
    fwd.process(&mut uh);
    let lin = |v: &[C64], e: &[f64]| -> Vec<C64> { v.iter().zip(e).map(|(z, s)| z * s).collect() };
    let axpy = |a: &[C64], s: f64, b: &[C64]| -> Vec<C64> { a.iter().zip(b).map(|(x, y)| x + y * s).collect() };
    for _ in 0..steps {
        let a: Vec<C64> = nonlinear(&uh).into_iter().map(|z| z * dt).collect();
        let b: Vec<C64> = nonlinear(&lin(&axpy(&uh, 0.5, &a), &half)).into_iter().map(|z| z * dt).collect();
        let c: Vec<C64> = nonlinear(&axpy(&lin(&uh, &half), 0.5, &b)).into_iter().map(|z| z * dt).collect();
        let d_in: Vec<C64> = lin(&uh, &full).iter().zip(lin(&c, &half)).map(|(x, y)| x + y).collect();
        let d: Vec<C64> = nonlinear(&d_in).into_iter().map(|z| z * dt).collect();
        for i in 0..n {
            uh[i] = uh[i] * full[i] + (a[i] * full[i] + (b[i] + c[i]) * (2.0 * half[i]) + d[i]) / 6.0;
        }
        if uh.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return None;
        }
    }
    inv.process(&mut uh);
    Some(uh.iter().map(|z| z.re / n as f64).collect())
}

pub fn gen_burgers1d(n_samples: usize, grid_n: usize, p: &BurgersParams, seed: u64) -> Result<Dataset> {
    if !(p.viscosity > 0.0) {
        return Err(Error::Usage("viscosity must be positive".into()));
    }
    let grf = GrfSpec { ndim: 1, seed, ..p.grf.clone() };
    collect(n_samples, vec![grid_n, 1], vec![grid_n, 1], |i| {
        let u0 = grf.sample(i as u64, grid_n);
        let u = solve_burgers(&u0, p.t_final, p.viscosity, p.cfl).ok_or(Error::BlowUp(i))?;
        Ok((u0, u))
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct DarcyParams {
    /// Ratio of the high to the low coefficient value; the low value is 1.
    pub contrast: f64,
    /// Constant forcing.
    pub beta: f64,
    pub grf: GrfSpec,
}

impl Default for DarcyParams {
    fn default() -> Self {
        Self {
            contrast: 9.0,
            beta: 1.0,
            grf: GrfSpec { ndim: 2, exponent: 2.0, tau: 3.0, max_mode: 12, ..GrfSpec::default() },
        }
    }
}

/// `-∇·(a ∇u) = f` on the unit square with `u = 0` on the boundary, on an
/// `n x n` node grid including the boundary (`h = 1/(n-1)`), by the
/// five-point scheme with harmonic-mean face coefficients.
#[derive(Clone, Debug)]
pub struct DarcyProblem {
    pub n: usize,
    pub a: Vec<f64>,
}

impl DarcyProblem {
    fn m(&self) -> usize {
        self.n - 2
    }

    fn face(&self, p: usize, q: usize) -> f64 {
        let (x, y) = (self.a[p], self.a[q]);
        2.0 * x * y / (x + y)
    }

    /// Coefficients `(east, west, north, south)` between interior node
    /// `(i, j)` and its neighbours, scaled by `1/h²`.
    fn stencil(&self, i: usize, j: usize) -> [f64; 4] {
        let n = self.n;
        let h2 = ((n - 1) * (n - 1)) as f64;
        let p = i * n + j;
        [
            self.face(p, p + 1) * h2,
            self.face(p, p - 1) * h2,
            self.face(p, p + n) * h2,
            self.face(p, p - n) * h2,
        ]
    }

    /// `A_h u` on interior unknowns (row-major over the `(n-2)²` interior).
    pub fn apply(&self, u: &[f64]) -> Vec<f64> {
        let m = self.m();
        let mut out = vec![0.0; m * m];
        for i in 0..m {
            for j in 0..m {
                let [e, w, no, s] = self.stencil(i + 1, j + 1);
                let at = |di: isize, dj: isize| -> f64 {
                    let (r, c) = (i as isize + di, j as isize + dj);
                    if r < 0 || c < 0 || r >= m as isize || c >= m as isize {
                        0.0
                    } else {
                        u[r as usize * m + c as usize]
                    }
                };
                out[i * m + j] = (e + w + no + s) * u[i * m + j] - e * at(0, 1) - w * at(0, -1) - no * at(1, 0) - s * at(-1, 0);
            }
        }
        out
    }

    /// Banded Cholesky factor of `A_h`, lower band of width `n - 2`.
    fn factor(&self) -> Option<Vec<f64>> {
        let m = self.m();
        let size = m * m;
        let bw = m;
        let row = bw + 1;
        // band[i * row + (i - j)] = L[i][j] for i - bw <= j <= i
        let mut band = vec![0.0; size * row];
        let entry = |i: usize, j: usize| -> f64 {
            // A[i][j] for j <= i
            let (ri, ci) = (i / m, i % m);
            let [e, w, no, s] = self.stencil(ri + 1, ci + 1);
            if i == j {
                e + w + no + s
            } else if i - j == 1 && ci > 0 {
                -w
            } else if i - j == m {
                -s
            } else {
                0.0
            }
        };
        for j in 0..size {
            for i in j..(j + bw + 1).min(size) {
                let lo = i.saturating_sub(bw);
                let mut s = entry(i, j);
                for k in lo..j {
                    s -= band[i * row + (i - k)] * band[j * row + (j - k)];
                }
                if i == j {
                    if s <= 0.0 {
                        return None;
                    }
                    band[j * row] = s.sqrt();
                } else {
                    band[i * row + (i - j)] = s / band[j * row];
                }
            }
        }
        Some(band)
    }

    fn substitute(&self, band: &[f64], rhs: &[f64]) -> Vec<f64> {
        let m = self.m();
        let size = m * m;
        let row = m + 1;
        let mut y = rhs.to_vec();
        for i in 0..size {
            let lo = i.saturating_sub(m);
            let mut s = y[i];
            for k in lo..i {
                s -= band[i * row + (i - k)] * y[k];
            }
            y[i] = s / band[i * row];
        }
        for i in (0..size).rev() {
            let hi = (i + m + 1).min(size);
            let mut s = y[i];
            for k in i + 1..hi {
                s -= band[k * row + (k - i)] * y[k];
            }
            y[i] = s / band[i * row];
        }
        y
    }

    /// Interior solution and the relative residual `‖A_h u - f‖ / ‖f‖`.
    pub fn solve(&self, beta: f64) -> Option<(Vec<f64>, f64)> {
        let m = self.m();
        let f = vec![beta; m * m];
        let band = self.factor()?;
        let mut u = self.substitute(&band, &f);
        let fnorm = f.iter().map(|v| v * v).sum::<f64>().sqrt();
        let resid = |u: &[f64]| {
            let r: Vec<f64> = self.apply(u).iter().zip(&f).map(|(a, b)| b - a).collect();
            (r.iter().map(|v| v * v).sum::<f64>().sqrt() / fnorm, r)
        };
        let (mut rel, r) = resid(&u);
        if rel >= 1e-12 {
            let du = self.substitute(&band, &r);
            u.iter_mut().zip(du).for_each(|(a, b)| *a += b);
            rel = resid(&u).0;
        }
        Some((u, rel))
    }

    /// Interior solution embedded in the full grid with zero boundary.
    pub fn embed(&self, interior: &[f64]) -> Vec<f64> {
        let (n, m) = (self.n, self.m());
        let mut full = vec![0.0; n * n];
        for i in 0..m {
            full[(i + 1) * n + 1..(i + 1) * n + 1 + m].copy_from_slice(&interior[i * m..(i + 1) * m]);
        }
        full
    }
}

/// Two-level medium: `contrast` where the field is positive, 1 elsewhere.
pub fn darcy_coefficient(grf: &GrfSpec, index: u64, n: usize, contrast: f64) -> Vec<f64> {
    grf.sample(index, n)
        .into_iter()
        .map(|g| if g > 0.0 { contrast } else { 1.0 })
        .collect()
}

pub fn gen_darcy2d(n_samples: usize, grid_n: usize, p: &DarcyParams, seed: u64) -> Result<Dataset> {
    if grid_n < 16 {
        return Err(Error::Usage(format!("Darcy grid must be at least 16, got {grid_n}")));
    }
    let grf = GrfSpec { ndim: 2, seed, ..p.grf.clone() };
    collect(n_samples, vec![grid_n, grid_n, 1], vec![grid_n, grid_n, 1], |i| {
        let problem = DarcyProblem {
            n: grid_n,
            a: darcy_coefficient(&grf, i as u64, grid_n, p.contrast),
        };
        let (u, residual) = problem.solve(p.beta).ok_or(Error::SolverDivergence { sample: i, residual: f64::NAN })?;
        if !(residual < 1e-10) {
            return Err(Error::SolverDivergence { sample: i, residual });
        }
        Ok((problem.a.clone(), problem.embed(&u)))
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct ChirpParams {
    /// Chirp rates are drawn with magnitude in this range and a random sign.
    pub rate_range: (f64, f64),
    /// Fractional order of the domain in which the filter acts.
    pub order: f64,
    /// Pass band `|u| <= cutoff` in that domain.
    pub cutoff: f64,
    pub chirps: usize,
}

impl Default for ChirpParams {
    fn default() -> Self {
        Self {
            rate_range: (0.2, 1.2),
            order: 0.5,
            cutoff: 1.0,
            chirps: 3,
        }
    }
}

/// Coordinates `(i - n/2) / √n`, the natural sampling of the continuous
/// transform on `n` points.
pub fn natural_grid(n: usize) -> Vec<f64> {
    let s = (n as f64).sqrt();
    (0..n).map(|i| (i as f64 - (n / 2) as f64) / s).collect()
}

/// Quadrature of the continuous kernel
/// `K_a(u, x) = √(1 - j cot φ) exp(jπ (cot φ (u² + x²) - 2 csc φ u x))`,
/// `φ = aπ/2`, on the natural grid: entry `(u_i, x_k)` times the spacing.
/// Valid for orders that are not multiples of 2.
pub fn chirp_kernel(n: usize, order: f64) -> Vec<C64> {
    let x = natural_grid(n);
    let dx = 1.0 / (n as f64).sqrt();
    let phi = order * PI / 2.0;
    let (cot, csc) = (phi.cos() / phi.sin(), 1.0 / phi.sin());
    let amp = C64::new(1.0, -cot).sqrt() * dx;
    let mut k = Vec::with_capacity(n * n);
    for &u in &x {
        for &xv in &x {
            let ph = PI * (cot * (u * u + xv * xv) - 2.0 * csc * u * xv);
            k.push(amp * C64::from_polar(1.0, ph));
        }
    }
    k
}

fn matvec(m: &[C64], v: &[C64]) -> Vec<C64> {
    let n = v.len();
    m.chunks(n).map(|row| row.iter().zip(v).map(|(a, b)| a * b).sum()).collect()
}

/// Fixed filter of the chirp task: transform to order `a`, keep
/// `|u| <= cutoff`, transform back.
pub struct ChirpFilter {
    forward: Vec<C64>,
    inverse: Vec<C64>,
    pass: Vec<bool>,
}

impl ChirpFilter {
    pub fn new(n: usize, p: &ChirpParams) -> Self {
        Self {
            forward: chirp_kernel(n, p.order),
            inverse: chirp_kernel(n, -p.order),
            pass: natural_grid(n).iter().map(|u| u.abs() <= p.cutoff).collect(),
        }
    }

    pub fn apply(&self, f: &[f64]) -> Vec<C64> {
        let v: Vec<C64> = f.iter().map(|&x| C64::new(x, 0.0)).collect();
        let spec: Vec<C64> = matvec(&self.forward, &v)
            .into_iter()
            .zip(&self.pass)
            .map(|(z, &keep)| if keep { z } else { C64::new(0.0, 0.0) })
            .collect();
        matvec(&self.inverse, &spec)
    }
}

/// Sum of Gaussian-windowed linear chirps on the natural grid.
pub fn chirp_signal(n: usize, p: &ChirpParams, seed: u64, index: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    let x = natural_grid(n);
    // the window keeps the local frequency |r x + f| well below Nyquist √n / 2
    let width = (n as f64).sqrt() / 12.0;
    let mut out = vec![0.0; n];
    for _ in 0..p.chirps {
        let amp = rng.random_range(0.5..1.0);
        let rate = rng.random_range(p.rate_range.0..=p.rate_range.1) * if rng.random_bool(0.5) { 1.0 } else { -1.0 };
        let freq = rng.random_range(-1.0..1.0);
        let phase = rng.random_range(0.0..2.0 * PI);
        let shift = rng.random_range(-0.5..0.5) * width;
        for (o, &xv) in out.iter_mut().zip(&x) {
            let t = xv - shift;
            *o += amp * (-t * t / (2.0 * width * width)).exp() * (PI * rate * t * t + 2.0 * PI * freq * t + phase).cos();
        }
    }
    out
}

/// Inputs: one chirp superposition channel. Outputs: real and imaginary
/// parts of the filtered field, as two channels.
pub fn gen_chirp_operator(n_samples: usize, grid_n: usize, p: &ChirpParams, seed: u64) -> Result<Dataset> {
    if !(p.rate_range.0 >= 0.0 && p.rate_range.0 <= p.rate_range.1) {
        return Err(Error::Usage("rate range must satisfy 0 <= low <= high".into()));
    }
    if (p.order / 2.0).fract() == 0.0 {
        return Err(Error::Usage("chirp filter order must not be a multiple of 2".into()));
    }
    let filter = ChirpFilter::new(grid_n, p);
    collect(n_samples, vec![grid_n, 1], vec![grid_n, 2], |i| {
        let f = chirp_signal(grid_n, p, seed, i as u64);
        let y = filter.apply(&f);
        Ok((f, y.iter().flat_map(|z| [z.re, z.im]).collect()))
    })
}
