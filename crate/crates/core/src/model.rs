//! The complex neural operator and its variants.
//!
//! Data flow for a batch `[B, S.., in_channels]` of real fields:
//!
//! 1. append normalized grid coordinates `i / N` per spatial axis;
//! 2. lift to a complex latent of `width` channels (real embedding, a learned
//!    imaginary part, then a complex residual block);
//! 3. zero-pad every spatial axis by `padding` cells;
//! 4. `n_layers` spectral layers `v -> σ(W v + b + Σ_branches K v)`, with σ
//!    skipped on the last layer;
//! 5. crop, project through two complex linear maps, keep the real part.
//!
//! Branch 0 is `F^{-α} R^α trunc(F^α v)`: the `modes` central indices of the
//! order-α domain on each axis are kept and mixed by one channel matrix per
//! retained mode. Every further branch is `F^{-α'} R^{α'} trunc(F^{α'} v)`
//! with a single channel matrix shared by all retained modes (a pointwise
//! convolution in the α' domain). At order 1 the kept indices are the lowest
//! DFT frequencies, so branch 0 alone is an FNO spectral convolution.
//!
//! The inverse transform is taken as the adjoint of the forward row block,
//! `F^{-α}[:, kept] = (F^α[kept, :])ᴴ`, which is exact because the discrete
//! transform is unitary.
//!
//! The discrete fractional transform of length N is tied to its own grid, so
//! at a fractional order the same weights describe a different continuous
//! operator at every resolution. Setting `spectral_grid` pins the transform
//! length: each branch interpolates onto that grid, transforms there and
//! interpolates back, which makes a trained model resolution-consistent for
//! band-limited inputs.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::sync::Arc;
use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::PI;
use core::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::autodiff::{AxisKernel, Tape, Var};
use crate::ctensor::{CTensor, C64, J};
use crate::error::{shape_err, Error, Result};
use crate::frft::{FracOrder, FrftPlan, PlanCache};

#[derive(Clone, Debug, PartialEq)]
pub struct ConoConfig {
    pub in_channels: usize,
    pub out_channels: usize,
    pub width: usize,
    pub n_layers: usize,
    /// Retained indices per spatial axis in each spectral branch.
    pub modes: usize,
    pub alpha_init: f64,
    pub alpha_prime_init: f64,
    pub use_alias_free: bool,
    pub grid_ndim: usize,
    pub padding: usize,
    /// Branch 0 is the per-mode α branch; the rest are pointwise α' branches.
    pub branches: usize,
    pub use_bias: bool,
    /// `false` gives a real latent with real channel maps and real GeLU.
    pub complex: bool,
    /// `false` freezes every order at its initial value.
    pub learn_orders: bool,
    /// When nonzero, every spectral branch trig-resamples each padded axis
    /// to this length before the transform and back afterwards, so the
    /// fractional kernels act identically at any input resolution. Zero
    /// transforms at the padded length itself.
    pub spectral_grid: usize,
}

impl Default for ConoConfig {
    fn default() -> Self {
        Self {
            in_channels: 1,
            out_channels: 1,
            width: 64,
            n_layers: 4,
            modes: 12,
            alpha_init: 1.0,
            alpha_prime_init: 0.5,
            use_alias_free: true,
            grid_ndim: 2,
            padding: 11,
            branches: 2,
            use_bias: true,
            complex: true,
            learn_orders: true,
            spectral_grid: 0,
        }
    }
}

impl ConoConfig {
    pub fn validate(&self) -> Result<()> {
        let fail = |m: &str| Err(Error::Config(m.to_string()));
        if self.n_layers == 0 {
            return fail("n_layers must be at least 1");
        }
        if self.width == 0 || self.in_channels == 0 || self.out_channels == 0 {
            return fail("channel counts must be positive");
        }
        if self.modes == 0 {
            return fail("modes must be positive");
        }
        if !(1..=2).contains(&self.grid_ndim) {
            return fail("grid_ndim must be 1 or 2");
        }
        if self.branches == 0 {
            return fail("branches must be at least 1");
        }
        if !self.alpha_init.is_finite() || !self.alpha_prime_init.is_finite() {
            return fail("orders must be finite");
        }
        if self.spectral_grid > 0 && 2 * self.modes > self.spectral_grid {
            return fail("modes exceed Nyquist for spectral_grid");
        }
        Ok(())
    }

    /// Number of trainable real scalars; complex entries count twice.
    ///
    /// With `c = in_channels + grid_ndim`, `w = width`, `o = out_channels`,
    /// `K = modes^grid_ndim`, `r = 2` for a complex latent (else 1),
    /// `β = 1` with bias (else 0), `q = grid_ndim` if orders learn (else 0)
    /// and `L` layers of `br` branches:
    ///
    /// ```text
    /// lift       c·w + w + (r - 1)·w² + 2·r·w²
    /// per layer  r·w² + β·r·w + 2·K·w² + 2·(br - 1)·w² + br·q
    /// projection r·(w² + w) + r·(w·o + o)
    /// ```
    pub fn parameter_count(&self) -> usize {
        let c = self.in_channels + self.grid_ndim;
        let (w, o) = (self.width, self.out_channels);
        let k = self.modes.pow(self.grid_ndim as u32);
        let r = if self.complex { 2 } else { 1 };
        let beta = usize::from(self.use_bias);
        let q = if self.learn_orders { self.grid_ndim } else { 0 };
        let br = self.branches;
        let lift = c * w + w + (r - 1) * w * w + 2 * r * w * w;
        let layer = r * w * w + beta * r * w + 2 * k * w * w + 2 * (br - 1) * w * w + br * q;
        let proj = r * (w * w + w) + r * (w * o + o);
        lift + self.n_layers * layer + proj
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ParamKind {
    Complex,
    Real,
    /// A real fractional order.
    Order,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Param {
    pub name: String,
    pub kind: ParamKind,
    pub value: CTensor,
    pub trainable: bool,
}

/// Named parameters; a parameter's slot is its position.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ParamStore {
    params: Vec<Param>,
    index: BTreeMap<String, usize>,
}

impl ParamStore {
    pub fn push(&mut self, name: &str, kind: ParamKind, value: CTensor, trainable: bool) -> usize {
        let slot = self.params.len();
        self.index.insert(name.to_string(), slot);
        self.params.push(Param {
            name: name.to_string(),
            kind,
            value,
            trainable,
        });
        slot
    }

    pub fn slot(&self, name: &str) -> Option<usize> {
        self.index.get(name).copied()
    }

    fn require(&self, name: &str) -> Result<usize> {
        self.slot(name)
            .ok_or_else(|| Error::Config(format!("missing parameter {name}")))
    }

    pub fn get(&self, slot: usize) -> &Param {
        &self.params[slot]
    }

    pub fn get_mut(&mut self, slot: usize) -> &mut Param {
        &mut self.params[slot]
    }

    pub fn by_name(&self, name: &str) -> Option<&Param> {
        self.slot(name).map(|s| &self.params[s])
    }

    pub fn iter(&self) -> impl Iterator<Item = &Param> {
        self.params.iter()
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    /// Names of trainable parameters, in slot order.
    pub fn parameter_slots(&self) -> Vec<&str> {
        self.params
            .iter()
            .filter(|p| p.trainable)
            .map(|p| p.name.as_str())
            .collect()
    }

    /// Trainable real scalars.
    pub fn scalar_count(&self) -> usize {
        self.params
            .iter()
            .filter(|p| p.trainable)
            .map(|p| match p.kind {
                ParamKind::Complex => 2 * p.value.len(),
                _ => p.value.len(),
            })
            .sum()
    }

    /// Records every parameter as a leaf; frozen ones become constants.
    pub fn bind(&self, tape: &mut Tape) -> Vec<Var> {
        self.params
            .iter()
            .enumerate()
            .map(|(slot, p)| {
                if p.trainable {
                    tape.param(p.value.clone(), slot, p.kind != ParamKind::Complex)
                } else {
                    tape.constant(p.value.clone())
                }
            })
            .collect()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Variant {
    NoBias,
    NoFrft,
    NoComplex,
    NoAliasFree,
}

impl Variant {
    pub const ALL: [Variant; 4] = [
        Variant::NoBias,
        Variant::NoFrft,
        Variant::NoComplex,
        Variant::NoAliasFree,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Variant::NoBias => "no_bias",
            Variant::NoFrft => "no_frft",
            Variant::NoComplex => "no_complex",
            Variant::NoAliasFree => "no_alias_free",
        }
    }
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Variant::ALL
            .into_iter()
            .find(|v| v.name() == s)
            .ok_or_else(|| Error::UnknownVariant(s.to_string()))
    }
}

/// `[to, from]` band-limited trigonometric interpolation of a periodic
/// signal sampled at `i / from` onto the points `j / to`. Content above the
/// smaller grid's band is dropped; its Nyquist bin is split evenly between
/// `±band` going up and folded going down, so resampling up and back is the
/// identity.
pub fn trig_resample(from: usize, to: usize) -> CTensor {
    let band = from.min(to);
    let half = band / 2;
    let nyq = match (band % 2 == 0, to.cmp(&from)) {
        (false, _) => 0.0,
        (true, core::cmp::Ordering::Greater) => 1.0,
        (true, core::cmp::Ordering::Less) => 2.0,
        (true, core::cmp::Ordering::Equal) => return CTensor::eye(from),
    };
    let top = if band % 2 == 0 { half } else { half + 1 };
    let (ff, tf) = (from as f64, to as f64);
    CTensor::from_fn(&[to, from], |idx| {
        let (j, i) = ((idx / from) as f64, (idx % from) as f64);
        let theta = 2.0 * PI * (j / tf - i / ff);
        let mut s = 1.0;
        for k in 1..top {
            s += 2.0 * libm::cos(k as f64 * theta);
        }
        C64::new((s + nyq * libm::cos(half as f64 * theta)) / ff, 0.0)
    })
}

/// Band-limited resampling between `n` and `2n` points.
#[derive(Clone, Debug)]
pub struct Resampler {
    /// `[2n, n]` trigonometric interpolation; even output samples reproduce the input.
    pub up: Arc<AxisKernel>,
    /// `[n, 2n]` ideal low-pass to the original band, then decimation.
    pub down: Arc<AxisKernel>,
}

impl Resampler {
    /// Requires even `n`. The Nyquist bin is split evenly between `±n/2` on
    /// the way up and folded back on the way down, so `down · up = I`.
    pub fn new(n: usize) -> Result<Self> {
        if n == 0 || n % 2 != 0 {
            return Err(shape_err!("alias-free activation needs even axis lengths, got {n}"));
        }
        Ok(Self {
            up: Arc::new(AxisKernel { matrix: trig_resample(n, 2 * n), dmatrix: None }),
            down: Arc::new(AxisKernel { matrix: trig_resample(2 * n, n), dmatrix: None }),
        })
    }
}

/// Central `modes` indices of a centered axis of length `n`.
pub fn kept_range(n: usize, modes: usize) -> core::ops::Range<usize> {
    let start = n / 2 - modes / 2;
    start..start + modes
}

#[derive(Clone, Debug)]
pub struct ConoModel {
    config: ConoConfig,
    params: ParamStore,
    plans: PlanCache,
    resamplers: BTreeMap<usize, Arc<Resampler>>,
}

fn gaussian(shape: &[usize], std: f64, complex: bool, rng: &mut ChaCha8Rng) -> CTensor {
    CTensor::from_fn(shape, |_| {
        let re: f64 = StandardNormal.sample(rng);
        let im: f64 = if complex { StandardNormal.sample(rng) } else { 0.0 };
        C64::new(re * std, im * std)
    })
}

impl ConoModel {
    /// Fresh model with seeded initialization: Gaussian weights with variance
    /// `1/fan_in` on each of Re and Im, `R^α` further divided by the retained
    /// mode count, zero biases, orders at their configured initial values.
    pub fn new(config: ConoConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut p = ParamStore::default();
        let w = config.width;
        let cx = config.complex;
        let wkind = if cx { ParamKind::Complex } else { ParamKind::Real };
        let std = |fan_in: usize| 1.0 / libm::sqrt(fan_in as f64);
        let c_in = config.in_channels + config.grid_ndim;

        p.push("lift.embed.w", ParamKind::Real, gaussian(&[c_in, w], std(c_in), false, &mut rng), true);
        p.push("lift.embed.b", ParamKind::Real, CTensor::zeros(&[w]), true);
        if cx {
            p.push("lift.imag.w", ParamKind::Real, gaussian(&[w, w], std(w), false, &mut rng), true);
        }
        p.push("lift.res1.w", wkind, gaussian(&[w, w], std(w), cx, &mut rng), true);
        p.push("lift.res2.w", wkind, gaussian(&[w, w], std(w), cx, &mut rng), true);

        let kept = config.modes.pow(config.grid_ndim as u32);
        let mut r_shape = vec![config.modes; config.grid_ndim];
        r_shape.extend([w, w]);
        for l in 0..config.n_layers {
            p.push(&format!("layer{l}.w"), wkind, gaussian(&[w, w], std(w), cx, &mut rng), true);
            if config.use_bias {
                p.push(&format!("layer{l}.b"), wkind, CTensor::zeros(&[w]), true);
            }
            let r = gaussian(&r_shape, std(w) / kept as f64, true, &mut rng);
            p.push(&format!("layer{l}.r_alpha"), ParamKind::Complex, r, true);
            for br in 1..config.branches {
                let r = gaussian(&[w, w], std(w), true, &mut rng);
                p.push(&format!("layer{l}.r_alpha_prime{br}"), ParamKind::Complex, r, true);
            }
            for br in 0..config.branches {
                let init = if br == 0 { config.alpha_init } else { config.alpha_prime_init };
                for ax in 0..config.grid_ndim {
                    let v = CTensor::scalar(C64::new(init, 0.0));
                    p.push(&order_name(l, br, ax), ParamKind::Order, v, config.learn_orders);
                }
            }
        }
        let o = config.out_channels;
        p.push("proj.q1.w", wkind, gaussian(&[w, w], std(w), cx, &mut rng), true);
        p.push("proj.q1.b", wkind, CTensor::zeros(&[w]), true);
        p.push("proj.q2.w", wkind, gaussian(&[w, o], std(w), cx, &mut rng), true);
        p.push("proj.q2.b", wkind, CTensor::zeros(&[o]), true);

        Ok(Self {
            config,
            params: p,
            plans: PlanCache::new(),
            resamplers: BTreeMap::new(),
        })
    }

    /// FNO baseline: real latent, orders frozen at 1, one branch, plain GeLU.
    pub fn fno(mut config: ConoConfig, seed: u64) -> Result<Self> {
        config.complex = false;
        config.learn_orders = false;
        config.alpha_init = 1.0;
        config.branches = 1;
        config.use_alias_free = false;
        Self::new(config, seed)
    }

    /// Reassembles a model from a stored configuration and parameters.
    pub fn from_parts(config: ConoConfig, params: ParamStore) -> Result<Self> {
        config.validate()?;
        let reference = Self::new(config.clone(), 0)?;
        if reference.params.len() != params.len() {
            return Err(Error::Config("parameter list does not match configuration".into()));
        }
        for (a, b) in reference.params.iter().zip(params.iter()) {
            if a.name != b.name || a.kind != b.kind || a.value.shape() != b.value.shape() {
                return Err(Error::Config(format!("parameter {} does not match configuration", b.name)));
            }
        }
        Ok(Self {
            config,
            params,
            plans: PlanCache::new(),
            resamplers: BTreeMap::new(),
        })
    }

    pub fn config(&self) -> &ConoConfig {
        &self.config
    }

    pub fn params(&self) -> &ParamStore {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamStore {
        &mut self.params
    }

    pub fn plans(&self) -> &PlanCache {
        &self.plans
    }

    pub fn insert_plan(&mut self, plan: FrftPlan) {
        self.plans.insert(plan);
    }

    /// Current orders as `(name, value)`.
    pub fn orders(&self) -> Vec<(String, f64)> {
        self.params
            .iter()
            .filter(|p| p.kind == ParamKind::Order)
            .map(|p| (p.name.clone(), p.value.data()[0].re))
            .collect()
    }

    fn padded_len(&self, n: usize) -> usize {
        n + self.config.padding
    }

    /// Length of the fractional transforms for an input axis of length `n`.
    pub fn transform_len(&self, n: usize) -> usize {
        match self.config.spectral_grid {
            0 => self.padded_len(n),
            g => g,
        }
    }

    /// Checks an input spatial shape against the truncation and resampling
    /// requirements.
    pub fn check_spatial(&self, spatial: &[usize]) -> Result<()> {
        if spatial.len() != self.config.grid_ndim {
            return Err(shape_err!(
                "expected {} spatial axes, got {:?}",
                self.config.grid_ndim,
                spatial
            ));
        }
        for &n in spatial {
            let np = self.padded_len(n);
            let nt = self.transform_len(n);
            if 2 * self.config.modes > nt {
                return Err(Error::Config(format!(
                    "{} modes exceed Nyquist for transform length {nt}",
                    self.config.modes
                )));
            }
            if self.config.use_alias_free && np % 2 != 0 {
                return Err(shape_err!("alias-free activation needs even padded lengths, got {np}"));
            }
        }
        Ok(())
    }

    /// Builds and caches plans and resamplers for the given spatial shape so
    /// that later forward passes do no eigendecompositions.
    pub fn ensure_plans(&mut self, spatial: &[usize]) -> Result<()> {
        self.check_spatial(spatial)?;
        for &n in spatial {
            let np = self.padded_len(n);
            self.plans.get_or_build(self.transform_len(n))?;
            if self.config.use_alias_free && !self.resamplers.contains_key(&np) {
                self.resamplers.insert(np, Arc::new(Resampler::new(np)?));
            }
        }
        Ok(())
    }

    fn plan(&self, n: usize) -> Result<Arc<FrftPlan>> {
        self.plans.get_or_build_uncached(n)
    }

    fn resampler(&self, n: usize) -> Result<Arc<Resampler>> {
        match self.resamplers.get(&n) {
            Some(r) => Ok(r.clone()),
            None => Ok(Arc::new(Resampler::new(n)?)),
        }
    }

    /// Appends grid coordinates `i / N` as extra channels of a real batch
    /// `[B, S.., in_channels]`.
    pub fn with_grid(&self, input: &CTensor) -> Result<CTensor> {
        let shape = input.shape();
        let d = self.config.grid_ndim;
        if shape.len() != d + 2 || shape[d + 1] != self.config.in_channels {
            return Err(shape_err!(
                "input {:?} is not [B, {} spatial axes, {}]",
                shape,
                d,
                self.config.in_channels
            ));
        }
        let spatial = &shape[1..d + 1];
        let points: usize = spatial.iter().product();
        let cin = self.config.in_channels;
        let cout = cin + d;
        let mut out = Vec::with_capacity(shape[0] * points * cout);
        for b in 0..shape[0] {
            for pt in 0..points {
                let base = (b * points + pt) * cin;
                out.extend_from_slice(&input.data()[base..base + cin]);
                let mut rem = pt;
                let mut coords = [0.0; 2];
                for ax in (0..d).rev() {
                    coords[ax] = (rem % spatial[ax]) as f64 / spatial[ax] as f64;
                    rem /= spatial[ax];
                }
                out.extend(coords[..d].iter().map(|&c| C64::new(c, 0.0)));
            }
        }
        let mut s = shape.to_vec();
        s[d + 1] = cout;
        CTensor::new(s, out)
    }

    fn var(&self, vars: &[Var], name: &str) -> Result<Var> {
        Ok(vars[self.params.require(name)?])
    }

    /// `[B, S.., in + d] -> [B, S.., width]`.
    pub fn lift_tape(&self, tape: &mut Tape, vars: &[Var], x: Var) -> Result<Var> {
        let h = tape.matmul(x, self.var(vars, "lift.embed.w")?)?;
        let h = tape.add_bias(h, self.var(vars, "lift.embed.b")?)?;
        let z = if self.config.complex {
            let im = tape.matmul(h, self.var(vars, "lift.imag.w")?)?;
            let im = tape.scale(im, J)?;
            tape.add(h, im)?
        } else {
            h
        };
        let r = tape.matmul(z, self.var(vars, "lift.res1.w")?)?;
        let r = tape.cgelu(r)?;
        let r = tape.matmul(r, self.var(vars, "lift.res2.w")?)?;
        let r = tape.cgelu(r)?;
        tape.add(z, r)
    }

    /// Order variable for `(layer, branch, axis)` and whether it carries a gradient.
    fn order(&self, tape: &Tape, vars: &[Var], l: usize, br: usize, ax: usize) -> Result<(f64, Option<Var>)> {
        let slot = self.params.require(&order_name(l, br, ax))?;
        let v = vars[slot];
        let a = tape.value(v).data()[0].re;
        Ok((a, self.params.get(slot).trainable.then_some(v)))
    }

    /// One spectral branch: forward row blocks on every axis, the mixing
    /// `mix`, then the adjoint row blocks.
    fn branch(
        &self,
        tape: &mut Tape,
        vars: &[Var],
        v: Var,
        l: usize,
        br: usize,
        mix: impl FnOnce(&mut Tape, Var) -> Result<Var>,
    ) -> Result<Var> {
        let d = self.config.grid_ndim;
        let mut inverse = Vec::with_capacity(d);
        let mut t = v;
        for ax in 0..d {
            let n = tape.value(v).shape()[ax + 1];
            let nt = if self.config.spectral_grid > 0 { self.config.spectral_grid } else { n };
            let plan = self.plan(nt)?;
            let (a, order) = self.order(tape, vars, l, br, ax)?;
            let (mut m, mut dm) = plan.row_block(FracOrder(a), kept_range(nt, self.config.modes));
            let (mut mi, mut dmi) = (m.adjoint()?, dm.adjoint()?);
            if nt != n {
                let (there, back) = (trig_resample(n, nt), trig_resample(nt, n));
                m = m.matmul(&there)?;
                dm = dm.matmul(&there)?;
                mi = back.matmul(&mi)?;
                dmi = back.matmul(&dmi)?;
            }
            let inv = AxisKernel {
                matrix: mi,
                dmatrix: order.map(|_| dmi),
            };
            let fwd = AxisKernel {
                matrix: m,
                dmatrix: order.map(|_| dm),
            };
            t = tape.axis_linear(t, ax + 1, Arc::new(fwd), order)?;
            inverse.push((Arc::new(inv), order));
        }
        t = mix(tape, t)?;
        for (ax, (k, order)) in inverse.into_iter().enumerate() {
            t = tape.axis_linear(t, ax + 1, k, order)?;
        }
        Ok(t)
    }

    /// `σ(W v + b + Σ branches)` on a padded latent `[B, S.., width]`.
    pub fn spectral_layer_tape(
        &self,
        tape: &mut Tape,
        vars: &[Var],
        v: Var,
        l: usize,
        is_last: bool,
    ) -> Result<Var> {
        let mut acc = tape.matmul(v, self.var(vars, &format!("layer{l}.w"))?)?;
        if self.config.use_bias {
            acc = tape.add_bias(acc, self.var(vars, &format!("layer{l}.b"))?)?;
        }
        let r = self.var(vars, &format!("layer{l}.r_alpha"))?;
        let a = self.branch(tape, vars, v, l, 0, |t, x| t.mode_mix(x, r))?;
        acc = tape.add(acc, a)?;
        for br in 1..self.config.branches {
            let r = self.var(vars, &format!("layer{l}.r_alpha_prime{br}"))?;
            let b = self.branch(tape, vars, v, l, br, |t, x| t.matmul(x, r))?;
            acc = tape.add(acc, b)?;
        }
        if !self.config.complex {
            acc = tape.real_part(acc)?;
        }
        if is_last {
            Ok(acc)
        } else {
            self.activate_tape(tape, acc, self.config.use_alias_free)
        }
    }

    /// CGeLU, optionally evaluated on a twice-finer grid and low-passed back.
    pub fn activate_tape(&self, tape: &mut Tape, v: Var, alias_free: bool) -> Result<Var> {
        if !alias_free {
            return tape.cgelu(v);
        }
        let d = tape.value(v).rank() - 2;
        let mut downs = Vec::with_capacity(d);
        let mut t = v;
        for ax in 0..d {
            let r = self.resampler(tape.value(v).shape()[ax + 1])?;
            t = tape.axis_linear(t, ax + 1, r.up.clone(), None)?;
            downs.push(r.down.clone());
        }
        t = tape.cgelu(t)?;
        for (ax, k) in downs.into_iter().enumerate() {
            t = tape.axis_linear(t, ax + 1, k, None)?;
        }
        Ok(t)
    }

    /// Latent `[B, S.., width]` to real output `[B, S.., out_channels]`.
    pub fn project_tape(&self, tape: &mut Tape, vars: &[Var], v: Var) -> Result<Var> {
        let q = tape.matmul(v, self.var(vars, "proj.q1.w")?)?;
        let q = tape.add_bias(q, self.var(vars, "proj.q1.b")?)?;
        let q = tape.cgelu(q)?;
        let q = tape.matmul(q, self.var(vars, "proj.q2.w")?)?;
        let q = tape.add_bias(q, self.var(vars, "proj.q2.b")?)?;
        tape.real_part(q)
    }

    /// Full forward pass on a real batch `[B, S.., in_channels]` already on the tape.
    pub fn forward_tape(&self, tape: &mut Tape, vars: &[Var], input: &CTensor) -> Result<Var> {
        let d = self.config.grid_ndim;
        if input.rank() != d + 2 {
            return Err(shape_err!("input {:?} is not [B, S.., C]", input.shape()));
        }
        let spatial = input.shape()[1..d + 1].to_vec();
        self.check_spatial(&spatial)?;
        let x = tape.constant(self.with_grid(input)?);
        let mut v = self.lift_tape(tape, vars, x)?;
        if self.config.padding > 0 {
            for ax in 0..d {
                v = tape.pad(v, ax + 1, self.config.padding)?;
            }
        }
        for l in 0..self.config.n_layers {
            v = self.spectral_layer_tape(tape, vars, v, l, l + 1 == self.config.n_layers)?;
        }
        if self.config.padding > 0 {
            for (ax, &n) in spatial.iter().enumerate() {
                v = tape.crop(v, ax + 1, n)?;
            }
        }
        self.project_tape(tape, vars, v)
    }

    /// Real output `[B, S.., out_channels]` (imaginary parts are zero).
    pub fn forward(&self, input: &CTensor) -> Result<CTensor> {
        let mut tape = Tape::new();
        let vars = self.params.bind(&mut tape);
        let out = self.forward_tape(&mut tape, &vars, input)?;
        Ok(tape.value(out).clone())
    }

    /// Lift alone, for inspection: `[B, S.., in_channels] -> [B, S.., width]`.
    pub fn lift(&self, input: &CTensor) -> Result<CTensor> {
        let mut tape = Tape::new();
        let vars = self.params.bind(&mut tape);
        let x = tape.constant(self.with_grid(input)?);
        let out = self.lift_tape(&mut tape, &vars, x)?;
        Ok(tape.value(out).clone())
    }

    /// Layer `l` applied to a latent `[B, S.., width]`.
    pub fn spectral_layer(&self, v: &CTensor, l: usize, is_last: bool) -> Result<CTensor> {
        if l >= self.config.n_layers {
            return Err(Error::Config(format!("no layer {l}")));
        }
        let mut tape = Tape::new();
        let vars = self.params.bind(&mut tape);
        let x = tape.constant(v.clone());
        let out = self.spectral_layer_tape(&mut tape, &vars, x, l, is_last)?;
        Ok(tape.value(out).clone())
    }

    pub fn activate(&self, v: &CTensor, alias_free: bool) -> Result<CTensor> {
        let mut tape = Tape::new();
        let x = tape.constant(v.clone());
        let out = self.activate_tape(&mut tape, x, alias_free)?;
        Ok(tape.value(out).clone())
    }
}

pub fn order_name(layer: usize, branch: usize, axis: usize) -> String {
    if branch == 0 {
        format!("layer{layer}.alpha{axis}")
    } else {
        format!("layer{layer}.alpha_prime{branch}.{axis}")
    }
}

/// The model with one component removed. Parameters shared with the
/// original keep their values.
pub fn make_ablation(model: &ConoModel, variant: Variant) -> Result<ConoModel> {
    let mut cfg = model.config.clone();
    match variant {
        Variant::NoBias => cfg.use_bias = false,
        Variant::NoFrft => {
            cfg.learn_orders = false;
            cfg.alpha_init = 1.0;
            cfg.alpha_prime_init = 1.0;
        }
        Variant::NoComplex => cfg.complex = false,
        Variant::NoAliasFree => cfg.use_alias_free = false,
    }
    let mut out = ConoModel::new(cfg, 0)?;
    for slot in 0..out.params.len() {
        let name = out.params.get(slot).name.clone();
        let Some(old) = model.params.by_name(&name) else { continue };
        let target = out.params.get_mut(slot);
        if variant == Variant::NoFrft && target.kind == ParamKind::Order {
            continue;
        }
        target.value = match target.kind {
            ParamKind::Complex => old.value.clone(),
            _ => old.value.real_part(),
        };
    }
    out.plans = model.plans.clone();
    out.resamplers = model.resamplers.clone();
    Ok(out)
}
