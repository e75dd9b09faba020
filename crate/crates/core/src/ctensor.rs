//! Dense complex tensors.
//!
//! A [`CTensor`] is a row-major buffer of [`C64`] values with an explicit
//! shape. Every module in the crate passes fields, weights and spectra around
//! in this form. Broadcasting is limited to tensor-scalar operations; anything
//! richer is expressed with [`CTensor::axis_apply`] or [`CTensor::matmul`].

use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::{FRAC_1_SQRT_2, PI};

use num_complex::Complex64;

use crate::error::{shape_err, Result};

pub type C64 = Complex64;

pub const ZERO: C64 = C64::new(0.0, 0.0);
pub const ONE: C64 = C64::new(1.0, 0.0);
pub const J: C64 = C64::new(0.0, 1.0);

#[derive(Clone, Debug, PartialEq)]
pub struct CTensor {
    shape: Vec<usize>,
    data: Vec<C64>,
}

impl CTensor {
    pub fn new(shape: Vec<usize>, data: Vec<C64>) -> Result<Self> {
        let expected: usize = shape.iter().product();
        if expected != data.len() {
            return Err(shape_err!(
                "shape {:?} needs {} elements, got {}",
                shape,
                expected,
                data.len()
            ));
        }
        Ok(Self { shape, data })
    }

    pub fn zeros(shape: &[usize]) -> Self {
        let n = shape.iter().product();
        Self {
            shape: shape.to_vec(),
            data: vec![ZERO; n],
        }
    }

    pub fn scalar(value: C64) -> Self {
        Self {
            shape: Vec::new(),
            data: vec![value],
        }
    }

    pub fn eye(n: usize) -> Self {
        let mut t = Self::zeros(&[n, n]);
        for i in 0..n {
            t.data[i * n + i] = ONE;
        }
        t
    }

    /// Embeds a real buffer as a tensor with zero imaginary part.
    pub fn from_real(shape: &[usize], values: &[f64]) -> Result<Self> {
        Self::new(
            shape.to_vec(),
            values.iter().map(|&x| C64::new(x, 0.0)).collect(),
        )
    }

    pub fn from_fn(shape: &[usize], mut f: impl FnMut(usize) -> C64) -> Self {
        let n: usize = shape.iter().product();
        let data: Vec<C64> = (0..n).map(&mut f).collect();
        Self {
            shape: shape.to_vec(),
            data,
        }
    }

    #[inline]
    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    #[inline]
    pub fn data(&self) -> &[C64] {
        &self.data
    }

    /// Mutable access for in-place construction. Callers must keep elements finite.
    #[inline]
    pub fn data_mut(&mut self) -> &mut [C64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<C64> {
        self.data
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.data.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    #[inline]
    pub fn rank(&self) -> usize {
        self.shape.len()
    }

    pub fn reshape(self, shape: &[usize]) -> Result<Self> {
        let n: usize = shape.iter().product();
        if n != self.data.len() {
            return Err(shape_err!("cannot reshape {:?} into {:?}", self.shape, shape));
        }
        Ok(Self {
            shape: shape.to_vec(),
            data: self.data,
        })
    }

    pub fn real_parts(&self) -> Vec<f64> {
        self.data.iter().map(|z| z.re).collect()
    }

    pub fn imag_parts(&self) -> Vec<f64> {
        self.data.iter().map(|z| z.im).collect()
    }

    fn check_same_shape(&self, other: &CTensor, what: &str) -> Result<()> {
        if self.shape != other.shape {
            return Err(shape_err!("{what}: {:?} vs {:?}", self.shape, other.shape));
        }
        Ok(())
    }

    fn zip_with(&self, other: &CTensor, what: &str, f: impl Fn(C64, C64) -> C64) -> Result<Self> {
        self.check_same_shape(other, what)?;
        let data: Vec<C64> = self
            .data
            .iter()
            .zip(&other.data)
            .map(|(&a, &b)| f(a, b))
            .collect();
        Ok(Self {
            shape: self.shape.clone(),
            data,
        })
    }

    pub fn add(&self, other: &CTensor) -> Result<Self> {
        self.zip_with(other, "add", |a, b| a + b)
    }

    pub fn sub(&self, other: &CTensor) -> Result<Self> {
        self.zip_with(other, "sub", |a, b| a - b)
    }

    pub fn mul(&self, other: &CTensor) -> Result<Self> {
        self.zip_with(other, "mul", |a, b| a * b)
    }

    pub fn add_scalar(&self, c: C64) -> Self {
        self.map(|z| z + c)
    }

    pub fn scale(&self, c: C64) -> Self {
        self.map(|z| z * c)
    }

    pub fn conj(&self) -> Self {
        self.map(|z| z.conj())
    }

    pub fn map(&self, f: impl Fn(C64) -> C64) -> Self {
        let data: Vec<C64> = self.data.iter().map(|&z| f(z)).collect();
        Self {
            shape: self.shape.clone(),
            data,
        }
    }

    /// In-place `self += other`.
    pub fn add_assign(&mut self, other: &CTensor) -> Result<()> {
        self.check_same_shape(other, "add_assign")?;
        for (a, &b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
        Ok(())
    }

    /// Real part kept, imaginary part zeroed.
    pub fn real_part(&self) -> Self {
        self.map(|z| C64::new(z.re, 0.0))
    }

    /// Complex matrix product of `[m, k] x [k, n]`.
    pub fn matmul(&self, other: &CTensor) -> Result<Self> {
        if self.rank() != 2 || other.rank() != 2 || self.shape[1] != other.shape[0] {
            return Err(shape_err!("matmul: {:?} x {:?}", self.shape, other.shape));
        }
        let (m, k, n) = (self.shape[0], self.shape[1], other.shape[1]);
        let mut out = vec![ZERO; m * n];
        for i in 0..m {
            let row = &mut out[i * n..(i + 1) * n];
            for p in 0..k {
                let a = self.data[i * k + p];
                let b = &other.data[p * n..(p + 1) * n];
                for (o, &bv) in row.iter_mut().zip(b) {
                    *o += a * bv;
                }
            }
        }
        Ok(Self {
            shape: vec![m, n],
            data: out,
        })
    }

    /// Conjugate transpose of a matrix.
    pub fn adjoint(&self) -> Result<Self> {
        if self.rank() != 2 {
            return Err(shape_err!("adjoint of rank-{} tensor", self.rank()));
        }
        let (m, n) = (self.shape[0], self.shape[1]);
        let mut out = vec![ZERO; m * n];
        for i in 0..m {
            for j in 0..n {
                out[j * m + i] = self.data[i * n + j].conj();
            }
        }
        Ok(Self {
            shape: vec![n, m],
            data: out,
        })
    }

    /// Contracts the rows of `m` (`[r, n]`) against axis `axis` of length `n`,
    /// treating every other axis as batch. The output has length `r` along `axis`.
    pub fn axis_apply(&self, axis: usize, m: &CTensor) -> Result<Self> {
        if axis >= self.rank() {
            return Err(shape_err!("axis {axis} out of range for {:?}", self.shape));
        }
        if m.rank() != 2 || m.shape[1] != self.shape[axis] {
            return Err(shape_err!(
                "axis_apply: matrix {:?} against axis {axis} of {:?}",
                m.shape,
                self.shape
            ));
        }
        let n = self.shape[axis];
        let r = m.shape[0];
        let outer: usize = self.shape[..axis].iter().product();
        let inner: usize = self.shape[axis + 1..].iter().product();
        let mut shape = self.shape.clone();
        shape[axis] = r;
        let mut out = vec![ZERO; outer * r * inner];
        for o in 0..outer {
            let src = &self.data[o * n * inner..(o + 1) * n * inner];
            let dst = &mut out[o * r * inner..(o + 1) * r * inner];
            if inner == 1 {
                for (i, d) in dst.iter_mut().enumerate() {
                    let row = &m.data[i * n..(i + 1) * n];
                    let mut acc = ZERO;
                    for (&a, &x) in row.iter().zip(src) {
                        acc += a * x;
                    }
                    *d = acc;
                }
            } else {
                for i in 0..r {
                    let d = &mut dst[i * inner..(i + 1) * inner];
                    for k in 0..n {
                        let a = m.data[i * n + k];
                        if a == ZERO {
                            continue;
                        }
                        let s = &src[k * inner..(k + 1) * inner];
                        for (dv, &sv) in d.iter_mut().zip(s) {
                            *dv += a * sv;
                        }
                    }
                }
            }
        }
        Ok(Self { shape, data: out })
    }

    /// Zero-pads axis `axis` at its end by `extra` cells.
    pub fn pad_axis(&self, axis: usize, extra: usize) -> Result<Self> {
        let len = self.axis_len(axis)?;
        self.resize_axis(axis, len + extra)
    }

    /// Keeps the first `len` entries along `axis`.
    pub fn crop_axis(&self, axis: usize, len: usize) -> Result<Self> {
        let cur = self.axis_len(axis)?;
        if len > cur {
            return Err(shape_err!("crop to {len} exceeds axis length {cur}"));
        }
        self.resize_axis(axis, len)
    }

    fn axis_len(&self, axis: usize) -> Result<usize> {
        self.shape
            .get(axis)
            .copied()
            .ok_or_else(|| shape_err!("axis {axis} out of range for {:?}", self.shape))
    }

    fn resize_axis(&self, axis: usize, new_len: usize) -> Result<Self> {
        let cur = self.axis_len(axis)?;
        let outer: usize = self.shape[..axis].iter().product();
        let inner: usize = self.shape[axis + 1..].iter().product();
        let mut shape = self.shape.clone();
        shape[axis] = new_len;
        let mut out = vec![ZERO; outer * new_len * inner];
        let keep = cur.min(new_len) * inner;
        for o in 0..outer {
            out[o * new_len * inner..o * new_len * inner + keep]
                .copy_from_slice(&self.data[o * cur * inner..o * cur * inner + keep]);
        }
        Ok(Self { shape, data: out })
    }

    /// Complex sum in sequential row-major order.
    pub fn sum(&self) -> C64 {
        let mut acc = ZERO;
        for &z in &self.data {
            acc += z;
        }
        acc
    }

    /// Sum of squared magnitudes in sequential row-major order.
    pub fn sq_l2_norm(&self) -> f64 {
        let mut acc = 0.0;
        for z in &self.data {
            acc += z.re * z.re + z.im * z.im;
        }
        acc
    }

    pub fn l2_norm(&self) -> f64 {
        libm::sqrt(self.sq_l2_norm())
    }

    /// `GeLU(Re z) + j GeLU(Im z)` elementwise.
    pub fn cgelu(&self) -> Self {
        self.map(cgelu)
    }

    /// `‖self − other‖ / ‖other‖`, for tests and diagnostics.
    pub fn rel_diff(&self, other: &CTensor) -> Result<f64> {
        let d = self.sub(other)?;
        let den = other.l2_norm();
        Ok(if den == 0.0 { d.l2_norm() } else { d.l2_norm() / den })
    }

    pub fn max_abs_diff(&self, other: &CTensor) -> Result<f64> {
        let d = self.sub(other)?;
        Ok(d.data.iter().map(|z| z.norm()).fold(0.0, f64::max))
    }
}

/// Standard normal CDF via the error function.
#[inline]
pub fn normal_cdf(x: f64) -> f64 {
    0.5 * (1.0 + libm::erf(x * FRAC_1_SQRT_2))
}

/// Exact GeLU, `x Φ(x)`.
#[inline]
pub fn gelu(x: f64) -> f64 {
    x * normal_cdf(x)
}

/// `d/dx [x Φ(x)] = Φ(x) + x φ(x)`.
#[inline]
pub fn gelu_derivative(x: f64) -> f64 {
    let pdf = libm::exp(-0.5 * x * x) / libm::sqrt(2.0 * PI);
    normal_cdf(x) + x * pdf
}

#[inline]
pub fn cgelu(z: C64) -> C64 {
    C64::new(gelu(z.re), gelu(z.im))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random(shape: &[usize], seed: u64) -> CTensor {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        CTensor::from_fn(shape, |_| {
            C64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))
        })
    }

    #[test]
    fn elementwise_basics() {
        let a = CTensor::scalar(C64::new(1.0, 1.0));
        let b = CTensor::scalar(C64::new(1.0, -1.0));
        assert_eq!(a.mul(&b).unwrap().data()[0], C64::new(2.0, 0.0));
        assert_eq!(
            CTensor::scalar(C64::new(3.0, 4.0)).conj().data()[0],
            C64::new(3.0, -4.0)
        );
        let x = random(&[3, 4], 1);
        assert_eq!(x.add_scalar(ZERO), x);
        assert_eq!(x.add(&CTensor::zeros(&[3, 4])).unwrap(), x);
        assert!(x.add(&CTensor::zeros(&[4, 3])).is_err());
    }

    #[test]
    fn new_rejects_wrong_length() {
        assert!(CTensor::new(vec![2, 2], vec![ZERO; 3]).is_err());
    }

    #[test]
    fn matmul_identity_is_exact() {
        let x = random(&[5, 3], 2);
        assert_eq!(CTensor::eye(5).matmul(&x).unwrap(), x);
    }

    #[test]
    fn matmul_permutation() {
        let p = CTensor::from_real(&[2, 2], &[0.0, 1.0, 1.0, 0.0]).unwrap();
        let v = CTensor::new(vec![2, 1], vec![C64::new(1.0, 2.0), C64::new(-3.0, 0.5)]).unwrap();
        let out = p.matmul(&v).unwrap();
        assert_eq!(out.data(), &[v.data()[1], v.data()[0]]);
        assert!(p.matmul(&CTensor::zeros(&[3, 1])).is_err());
    }

    #[test]
    fn matmul_associativity() {
        let a = random(&[8, 8], 3);
        let b = random(&[8, 8], 4);
        let c = random(&[8, 8], 5);
        let left = a.matmul(&b.matmul(&c).unwrap()).unwrap();
        let right = a.matmul(&b).unwrap().matmul(&c).unwrap();
        assert!(left.rel_diff(&right).unwrap() < 1e-12);
    }

    #[test]
    fn axis_apply_identity_and_errors() {
        let t = random(&[4, 3, 2], 6);
        assert_eq!(t.axis_apply(0, &CTensor::eye(4)).unwrap(), t);
        assert_eq!(t.axis_apply(2, &CTensor::eye(2)).unwrap(), t);
        assert!(t.axis_apply(1, &CTensor::eye(4)).is_err());
        assert!(t.axis_apply(3, &CTensor::eye(4)).is_err());
    }

    #[test]
    fn axis_apply_matches_slice_loop() {
        let t = random(&[3, 5], 7);
        let m = random(&[5, 5], 8);
        let out = t.axis_apply(1, &m).unwrap();
        for row in 0..3 {
            for i in 0..5 {
                let mut acc = ZERO;
                for k in 0..5 {
                    acc += m.data()[i * 5 + k] * t.data()[row * 5 + k];
                }
                assert!((out.data()[row * 5 + i] - acc).norm() < 1e-14);
            }
        }
        let m0 = random(&[3, 3], 9);
        let out0 = t.axis_apply(0, &m0).unwrap();
        for col in 0..5 {
            for i in 0..3 {
                let mut acc = ZERO;
                for k in 0..3 {
                    acc += m0.data()[i * 3 + k] * t.data()[k * 5 + col];
                }
                assert!((out0.data()[i * 5 + col] - acc).norm() < 1e-14);
            }
        }
    }

    #[test]
    fn axis_apply_commutes_across_axes() {
        let t = random(&[4, 4, 4], 10);
        let a = random(&[4, 4], 11);
        let b = random(&[4, 4], 12);
        let ab = t.axis_apply(0, &a).unwrap().axis_apply(2, &b).unwrap();
        let ba = t.axis_apply(2, &b).unwrap().axis_apply(0, &a).unwrap();
        assert!(ab.rel_diff(&ba).unwrap() < 1e-12);
    }

    #[test]
    fn axis_apply_composes_as_product() {
        let t = random(&[4, 6, 3], 13);
        let a = random(&[6, 6], 14);
        let b = random(&[6, 6], 15);
        let once = t.axis_apply(1, &a.matmul(&b).unwrap()).unwrap();
        let twice = t.axis_apply(1, &b).unwrap().axis_apply(1, &a).unwrap();
        assert!(once.rel_diff(&twice).unwrap() < 1e-12);
    }

    #[test]
    fn reductions() {
        assert_eq!(CTensor::zeros(&[4, 4]).sq_l2_norm(), 0.0);
        let mut e = CTensor::zeros(&[5]);
        e.data_mut()[2] = ONE;
        assert_eq!(e.sq_l2_norm(), 1.0);
        let v = CTensor::new(vec![2], vec![C64::new(1.0, 2.0), C64::new(3.0, -1.0)]).unwrap();
        assert_eq!(v.sum(), C64::new(4.0, 1.0));
    }

    #[test]
    fn cgelu_values() {
        assert_eq!(cgelu(ZERO), ZERO);
        for &x in &[-2.5, -0.3, 0.0, 0.7, 3.0] {
            let z = cgelu(C64::new(x, 0.0));
            assert_eq!(z.re, gelu(x));
            assert_eq!(z.im, 0.0);
        }
        // Φ(−10) ≈ 7.62e−24, so GeLU(−10) ≈ −7.6e−23.
        let tail = cgelu(C64::new(-10.0, -10.0));
        assert!(tail.norm() < 1e-6);
        let t = random(&[16], 16);
        assert_eq!(t.cgelu(), t.cgelu());
    }

    #[test]
    fn gelu_derivative_matches_differences() {
        for &x in &[-3.0, -1.0, -0.2, 0.0, 0.5, 2.0] {
            let h = 1e-6;
            let fd = (gelu(x + h) - gelu(x - h)) / (2.0 * h);
            assert!((fd - gelu_derivative(x)).abs() < 1e-8);
        }
    }

    #[test]
    fn pad_and_crop_round_trip() {
        let t = random(&[2, 3, 4], 17);
        let p = t.pad_axis(1, 2).unwrap();
        assert_eq!(p.shape(), &[2, 5, 4]);
        assert_eq!(p.crop_axis(1, 3).unwrap(), t);
        assert!(t.crop_axis(1, 4).is_err());
    }

    #[test]
    fn adjoint_is_conjugate_transpose() {
        let m = random(&[3, 5], 18);
        let a = m.adjoint().unwrap();
        assert_eq!(a.shape(), &[5, 3]);
        assert_eq!(a.data()[4 * 3 + 1], m.data()[5 + 4].conj());
    }
}
