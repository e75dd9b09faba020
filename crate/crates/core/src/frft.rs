//! Discrete fractional Fourier transform by eigendecomposition.
//!
//! The transform of order `a` on an axis of length `n` is
//! `F^a = V diag(exp(-j (π/2) a k)) Vᵀ`, where the columns of `V` are real,
//! orthonormal, Hermite–Gaussian-like eigenvectors of a symmetric matrix `S`
//! that commutes with the DFT, and `k` is the Hermite order assigned to each
//! eigenvector. Because the eigenvalue phases are explicit, every fractional
//! power is exactly unitary, orders add (`F^a F^b = F^(a+b)`), and the
//! derivative with respect to `a` is available in closed form.
//!
//! `S = C + diag(ĉ)` where `C` is the circulant matrix of a central
//! second-difference stencil and `ĉ` its DFT. The classic construction uses
//! the three-point stencil (tridiagonal plus corners); wider stencils keep the
//! same commuting structure while making the low-order eigenvectors converge
//! to sampled Hermite–Gaussians, which is what lets the discrete transform
//! track the continuous one. [`FrftPlan::new`] uses the widest stencil that
//! fits in one period.
//!
//! Indices are centered: sample `i` sits at coordinate `i - n/2`, so order 1
//! is the unitary DFT with zero frequency in the middle of the axis and order
//! 2 is the parity map `x[i] -> x[(n - i) mod n]`.

use alloc::collections::BTreeMap;
use alloc::sync::Arc;
use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::{FRAC_PI_2, PI};
use core::ops::Range;

use nalgebra::{DMatrix, SymmetricEigen};

use crate::ctensor::{CTensor, C64, ZERO};
use crate::error::{shape_err, Error, Result};

/// Transform order. `1.0` is the ordinary Fourier transform; the rotation
/// angle in the time-frequency plane is `order * π/2`. Period 4.
#[derive(Clone, Copy, Debug, PartialEq, PartialOrd)]
pub struct FracOrder(pub f64);

impl FracOrder {
    pub fn angle(self) -> f64 {
        self.0 * FRAC_PI_2
    }

    /// Representative in `[0, 4)`.
    pub fn reduced(self) -> f64 {
        self.0.rem_euclid(4.0)
    }
}

impl From<f64> for FracOrder {
    fn from(a: f64) -> Self {
        FracOrder(a)
    }
}

/// Orthonormality tolerance enforced when a plan is built.
const ORTHO_TOL: f64 = 1e-10;

/// Precomputed eigenbasis for one axis length.
#[derive(Clone, Debug, PartialEq)]
pub struct FrftPlan {
    n: usize,
    stencil_half_width: usize,
    /// `n x n`, row-major, rows in centered sample order; column `j` is eigenvector `j`.
    eigvecs: Vec<f64>,
    /// Hermite order of each eigenvector (DFT eigenvalue `(-j)^k`).
    eig_index: Vec<u32>,
}

/// Coefficients `c_0..=c_p` of the order-`2p` central difference for the second derivative.
fn second_difference_stencil(p: usize) -> Vec<f64> {
    let mut c = vec![0.0; p + 1];
    let mut c0 = 0.0;
    for k in 1..=p {
        // (p!)^2 / ((p-k)! (p+k)!) as a running product
        let mut ratio = 1.0;
        for i in 1..=k {
            ratio *= (p - i + 1) as f64 / (p + i) as f64;
        }
        let sign = if k % 2 == 1 { 1.0 } else { -1.0 };
        c[k] = 2.0 * sign * ratio / (k * k) as f64;
        c0 -= 2.0 / (k * k) as f64;
    }
    c[0] = c0;
    c
}

/// Dense commuting matrix `S` in natural (uncentered) index order.
fn commuting_matrix(n: usize, half_width: usize) -> Vec<f64> {
    let stencil = second_difference_stencil(half_width);
    let mut circ = vec![0.0; n];
    for (k, &v) in stencil.iter().enumerate() {
        circ[k % n] += v;
        if k > 0 {
            circ[(n - k % n) % n] += v;
        }
    }
    let mut s = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            s[i * n + j] = circ[(j + n - i) % n];
        }
        let mut d = 0.0;
        for (k, &v) in circ.iter().enumerate() {
            d += v * libm::cos(2.0 * PI * (k * i) as f64 / n as f64);
        }
        s[i * n + i] += d;
    }
    s
}

/// Sparse orthonormal basis vector: list of (index, weight).
type SparseVec = Vec<(usize, f64)>;

/// Even and odd bases with respect to `i -> -i mod n`.
fn parity_bases(n: usize) -> (Vec<SparseVec>, Vec<SparseVec>) {
    let r = core::f64::consts::FRAC_1_SQRT_2;
    let mut even = vec![vec![(0, 1.0)]];
    let mut odd = Vec::new();
    for m in 1..(n + 1) / 2 {
        even.push(vec![(m, r), (n - m, r)]);
        odd.push(vec![(m, r), (n - m, -r)]);
    }
    if n % 2 == 0 {
        even.push(vec![(n / 2, 1.0)]);
    }
    (even, odd)
}

/// Eigenvectors of `S` restricted to a parity block, sorted by descending
/// eigenvalue (ascending Hermite order), expanded back to length `n`.
fn block_eigenvectors(s: &[f64], n: usize, basis: &[SparseVec]) -> Vec<Vec<f64>> {
    let dim = basis.len();
    if dim == 0 {
        return Vec::new();
    }
    let mut block = DMatrix::<f64>::zeros(dim, dim);
    for (a, va) in basis.iter().enumerate() {
        for (b, vb) in basis.iter().enumerate().skip(a) {
            let mut acc = 0.0;
            for &(i, wi) in va {
                for &(j, wj) in vb {
                    acc += wi * wj * s[i * n + j];
                }
            }
            block[(a, b)] = acc;
            block[(b, a)] = acc;
        }
    }
    let eig = SymmetricEigen::new(block);
    let mut order: Vec<usize> = (0..dim).collect();
    order.sort_by(|&x, &y| eig.eigenvalues[y].total_cmp(&eig.eigenvalues[x]));
    order
        .into_iter()
        .map(|col| {
            let mut v = vec![0.0; n];
            for (b, vb) in basis.iter().enumerate() {
                let coef = eig.eigenvectors[(b, col)];
                for &(i, w) in vb {
                    v[i] += coef * w;
                }
            }
            v
        })
        .collect()
}

impl FrftPlan {
    /// Plan with the widest second-difference stencil that fits in one period.
    pub fn new(n: usize) -> Result<Self> {
        Self::with_stencil(n, n.saturating_sub(1) / 2)
    }

    /// Plan built from the order-`2 * half_width` second-difference stencil.
    /// `half_width = 1` gives the classic tridiagonal-plus-corners matrix.
    pub fn with_stencil(n: usize, half_width: usize) -> Result<Self> {
        if n < 2 {
            return Err(shape_err!("fractional transform needs n >= 2, got {n}"));
        }
        let half_width = half_width.clamp(1, ((n - 1) / 2).max(1));
        let s = commuting_matrix(n, half_width);
        let (even_basis, odd_basis) = parity_bases(n);
        let even = block_eigenvectors(&s, n, &even_basis);
        let odd = block_eigenvectors(&s, n, &odd_basis);

        // Even vectors take orders 0, 2, 4, ...; odd vectors 1, 3, 5, ...
        // For even n this yields 0..=n-2 plus n (order n-1 is skipped).
        let mut columns: Vec<(u32, Vec<f64>)> = even
            .into_iter()
            .enumerate()
            .map(|(i, v)| (2 * i as u32, v))
            .chain(odd.into_iter().enumerate().map(|(i, v)| (2 * i as u32 + 1, v)))
            .collect();
        columns.sort_by_key(|(k, _)| *k);

        let half = n / 2;
        let mut eigvecs = vec![0.0; n * n];
        let mut eig_index = Vec::with_capacity(n);
        for (j, (k, v)) in columns.iter().enumerate() {
            eig_index.push(*k);
            for row in 0..n {
                // centered row i holds natural index (i - n/2) mod n
                eigvecs[row * n + j] = v[(row + n - half) % n];
            }
        }
        let plan = Self {
            n,
            stencil_half_width: half_width,
            eigvecs,
            eig_index,
        };
        let deviation = plan.orthonormality_error();
        if !(deviation < ORTHO_TOL) {
            return Err(Error::DegenerateEigenspace { n, deviation });
        }
        Ok(plan)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn stencil_half_width(&self) -> usize {
        self.stencil_half_width
    }

    /// Row-major `n x n` eigenvector matrix (columns are eigenvectors).
    pub fn eigvecs(&self) -> &[f64] {
        &self.eigvecs
    }

    pub fn eig_index(&self) -> &[u32] {
        &self.eig_index
    }

    /// Rebuilds a plan from stored parts, re-checking orthonormality.
    pub fn from_parts(
        n: usize,
        stencil_half_width: usize,
        eigvecs: Vec<f64>,
        eig_index: Vec<u32>,
    ) -> Result<Self> {
        if eigvecs.len() != n * n || eig_index.len() != n {
            return Err(shape_err!("plan parts do not match n={n}"));
        }
        let plan = Self {
            n,
            stencil_half_width,
            eigvecs,
            eig_index,
        };
        let deviation = plan.orthonormality_error();
        if !(deviation < ORTHO_TOL) {
            return Err(Error::DegenerateEigenspace { n, deviation });
        }
        Ok(plan)
    }

    /// `max |VᵀV - I|`.
    pub fn orthonormality_error(&self) -> f64 {
        let n = self.n;
        let mut worst: f64 = 0.0;
        for a in 0..n {
            for b in a..n {
                let mut acc = 0.0;
                for r in 0..n {
                    acc += self.eigvecs[r * n + a] * self.eigvecs[r * n + b];
                }
                let target = if a == b { 1.0 } else { 0.0 };
                worst = worst.max((acc - target).abs());
            }
        }
        worst
    }

    fn phases(&self, a: FracOrder) -> Vec<C64> {
        let a = a.reduced();
        self.eig_index
            .iter()
            .map(|&k| C64::from_polar(1.0, -FRAC_PI_2 * a * k as f64))
            .collect()
    }

    /// `rows x cols` block of `V diag(w) Vᵀ`.
    fn spectral_block(&self, weights: &[C64], rows: Range<usize>, cols: Range<usize>) -> CTensor {
        let n = self.n;
        let (nr, nc) = (rows.len(), cols.len());
        let mut out = vec![ZERO; nr * nc];
        let mut scaled = vec![ZERO; n];
        for (ri, r) in rows.enumerate() {
            let vr = &self.eigvecs[r * n..(r + 1) * n];
            for ((s, &v), &w) in scaled.iter_mut().zip(vr).zip(weights) {
                *s = w * v;
            }
            for (ci, c) in cols.clone().enumerate() {
                let vc = &self.eigvecs[c * n..(c + 1) * n];
                let mut acc = ZERO;
                for (&s, &v) in scaled.iter().zip(vc) {
                    acc += s * v;
                }
                out[ri * nc + ci] = acc;
            }
        }
        CTensor::new(vec![nr, nc], out).expect("block shape")
    }

    /// The full `n x n` matrix `F^a`.
    pub fn fractional_matrix(&self, a: FracOrder) -> CTensor {
        self.spectral_block(&self.phases(a), 0..self.n, 0..self.n)
    }

    /// `dF^a / da`.
    pub fn derivative_matrix(&self, a: FracOrder) -> CTensor {
        let w = self.derivative_weights(a);
        self.spectral_block(&w, 0..self.n, 0..self.n)
    }

    fn derivative_weights(&self, a: FracOrder) -> Vec<C64> {
        self.phases(a)
            .into_iter()
            .zip(&self.eig_index)
            .map(|(p, &k)| p * C64::new(0.0, -FRAC_PI_2 * k as f64))
            .collect()
    }

    /// Rows `rows` of `F^a` and of `dF^a/da`.
    pub fn row_block(&self, a: FracOrder, rows: Range<usize>) -> (CTensor, CTensor) {
        let m = self.spectral_block(&self.phases(a), rows.clone(), 0..self.n);
        let dm = self.spectral_block(&self.derivative_weights(a), rows, 0..self.n);
        (m, dm)
    }
}

/// Unitary centered DFT, `exp(-2πj (k - n/2)(i - n/2) / n) / √n`, by direct formula.
pub fn centered_dft(n: usize) -> CTensor {
    let half = (n / 2) as f64;
    let scale = 1.0 / libm::sqrt(n as f64);
    CTensor::from_fn(&[n, n], |idx| {
        let (k, i) = ((idx / n) as f64 - half, (idx % n) as f64 - half);
        let phase = -2.0 * PI * libm::fmod(k * i, n as f64) / n as f64;
        C64::from_polar(scale, phase)
    })
}

/// Parity about the centered origin: `x[i] -> x[(n - i) mod n]`.
pub fn parity_matrix(n: usize) -> CTensor {
    let mut p = CTensor::zeros(&[n, n]);
    for i in 0..n {
        p.data_mut()[i * n + (n - i) % n] = C64::new(1.0, 0.0);
    }
    p
}

/// Plans keyed by axis length. Build once with `&mut`, then share by `&`.
#[derive(Clone, Debug, Default)]
pub struct PlanCache {
    plans: BTreeMap<usize, Arc<FrftPlan>>,
}

impl PlanCache {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn get(&self, n: usize) -> Option<Arc<FrftPlan>> {
        self.plans.get(&n).cloned()
    }

    pub fn get_or_build(&mut self, n: usize) -> Result<Arc<FrftPlan>> {
        if let Some(p) = self.plans.get(&n) {
            return Ok(p.clone());
        }
        let plan = Arc::new(FrftPlan::new(n)?);
        self.plans.insert(n, plan.clone());
        Ok(plan)
    }

    /// Looks up a cached plan, building an uncached one on a miss.
    pub fn get_or_build_uncached(&self, n: usize) -> Result<Arc<FrftPlan>> {
        match self.get(n) {
            Some(p) => Ok(p),
            None => FrftPlan::new(n).map(Arc::new),
        }
    }

    pub fn insert(&mut self, plan: FrftPlan) {
        self.plans.insert(plan.n(), Arc::new(plan));
    }

    pub fn lengths(&self) -> impl Iterator<Item = usize> + '_ {
        self.plans.keys().copied()
    }

    pub fn plans(&self) -> impl Iterator<Item = &Arc<FrftPlan>> {
        self.plans.values()
    }
}

/// Separable transform: `F^{orders[i]}` along `axes[i]` for each `i`.
pub fn frft(t: &CTensor, axes: &[usize], orders: &[FracOrder], cache: &mut PlanCache) -> Result<CTensor> {
    if axes.len() != orders.len() {
        return Err(shape_err!(
            "{} axes but {} orders",
            axes.len(),
            orders.len()
        ));
    }
    let mut out = t.clone();
    for (&axis, &order) in axes.iter().zip(orders) {
        let n = *t
            .shape()
            .get(axis)
            .ok_or_else(|| shape_err!("axis {axis} out of range for {:?}", t.shape()))?;
        let plan = cache.get_or_build(n)?;
        out = out.axis_apply(axis, &plan.fractional_matrix(order))?;
    }
    Ok(out)
}

/// Derivative of a real loss with respect to the order of a transform applied
/// along `axis`: `Re Σ conj(g) ⊙ (dF^a/da · x)` where `g` is the upstream
/// gradient (`∂L/∂Re + j ∂L/∂Im`) of the transform output.
pub fn frft_grad_alpha(
    plan: &FrftPlan,
    a: FracOrder,
    axis: usize,
    upstream: &CTensor,
    input: &CTensor,
) -> Result<f64> {
    let dx = input.axis_apply(axis, &plan.derivative_matrix(a))?;
    if dx.shape() != upstream.shape() {
        return Err(shape_err!(
            "upstream {:?} vs transformed input {:?}",
            upstream.shape(),
            dx.shape()
        ));
    }
    Ok(upstream
        .data()
        .iter()
        .zip(dx.data())
        .map(|(g, d)| (g.conj() * d).re)
        .sum())
}

/// Fractional convolution by the product rule
/// `H^a(m) = F^a(m) G^a(m) exp(-jπ m² cot(aπ/2))`, returned as samples of
/// the continuous convolution (`grid_step · √n · F^{-a}(...)`).
///
/// Sample `i` sits at `m_i = (i - n/2) · grid_step`. The discrete transform
/// approximates the continuous one when `grid_step = 1/√n`. At `a = 1` the
/// result is exactly `grid_step` times the circular convolution sum on the
/// centered grid, for any `grid_step`.
pub fn frft_convolve(
    f: &CTensor,
    g: &CTensor,
    a: FracOrder,
    grid_step: f64,
    plan: &FrftPlan,
) -> Result<CTensor> {
    let n = plan.n();
    if f.shape() != [n] || g.shape() != [n] {
        return Err(shape_err!(
            "frft_convolve expects [{n}] inputs, got {:?} and {:?}",
            f.shape(),
            g.shape()
        ));
    }
    if a.0.rem_euclid(2.0) == 0.0 {
        return Err(Error::SingularOrder(a.0));
    }
    let forward = plan.fractional_matrix(a);
    let inverse = plan.fractional_matrix(FracOrder(-a.0));
    let ff = forward.matmul(&f.clone().reshape(&[n, 1])?)?;
    let gg = forward.matmul(&g.clone().reshape(&[n, 1])?)?;
    let angle = a.angle();
    let cot = libm::cos(angle) / libm::sin(angle);
    // cot(π/2) is ~6e-17 in floating point; treat exact odd orders as cot = 0.
    let cot = if a.0.rem_euclid(2.0) == 1.0 { 0.0 } else { cot };
    let half = (n / 2) as f64;
    let product = CTensor::from_fn(&[n, 1], |i| {
        let m = (i as f64 - half) * grid_step;
        ff.data()[i] * gg.data()[i] * C64::from_polar(1.0, -PI * m * m * cot)
    });
    let h = inverse.matmul(&product)?;
    h.scale(C64::new(grid_step * libm::sqrt(n as f64), 0.0))
        .reshape(&[n])
}
