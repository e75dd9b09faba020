//! NODF dataset container.
//!
//! ```text
//! offset        size        field
//! 0             4           magic b"NODF"
//! 4             1           version (1)
//! 5             1           dtype: 0 = f64, 1 = c128 (re then im)
//! 6             8           sample count
//! 14            1           input rank r
//! 15            8·r         input dims
//! ..            1           output rank s
//! ..            8·s         output dims
//! ..            ..          payload: every input sample, then every output
//!                           sample, row-major
//! ```
//!
//! All integers and floats are little-endian. The payload length must match
//! the header exactly.

use std::path::Path;

use fracop_core::train::Samples;
use fracop_core::{CTensor, C64};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};

pub const MAGIC: &[u8; 4] = b"NODF";
pub const VERSION: u8 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Dtype {
    F64,
    C128,
}

impl Dtype {
    pub fn size(self) -> usize {
        match self {
            Dtype::F64 => 8,
            Dtype::C128 => 16,
        }
    }

    fn tag(self) -> u8 {
        match self {
            Dtype::F64 => 0,
            Dtype::C128 => 1,
        }
    }
}

/// A dataset of paired fields. Shapes exclude the sample axis and end with
/// the channel (variate) axis.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub dtype: Dtype,
    pub input_shape: Vec<usize>,
    pub output_shape: Vec<usize>,
    pub inputs: Vec<C64>,
    pub outputs: Vec<C64>,
}

/// Little-endian reader over a byte slice.
pub(crate) struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    pub(crate) fn new(bytes: &'a [u8]) -> Self {
        Self { bytes, pos: 0 }
    }

    pub(crate) fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        match end {
            Some(end) => {
                let s = &self.bytes[self.pos..end];
                self.pos = end;
                Ok(s)
            }
            None => Err(Error::TruncatedFile {
                expected: self.pos.saturating_add(n),
                found: self.bytes.len(),
            }),
        }
    }

    pub(crate) fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    pub(crate) fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    pub(crate) fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    pub(crate) fn dims(&mut self) -> Result<Vec<usize>> {
        let rank = self.u8()? as usize;
        (0..rank)
            .map(|_| {
                let d = self.u64()?;
                usize::try_from(d).map_err(|_| Error::Format(format!("dimension {d} too large")))
            })
            .collect()
    }

    pub(crate) fn remaining(&self) -> usize {
        self.bytes.len() - self.pos
    }
}

pub(crate) fn put_dims(out: &mut Vec<u8>, dims: &[usize]) {
    out.push(dims.len() as u8);
    for &d in dims {
        out.extend_from_slice(&(d as u64).to_le_bytes());
    }
}

pub(crate) fn put_values(out: &mut Vec<u8>, values: &[C64], dtype: Dtype) {
    for v in values {
        out.extend_from_slice(&v.re.to_le_bytes());
        if dtype == Dtype::C128 {
            out.extend_from_slice(&v.im.to_le_bytes());
        }
    }
}

pub(crate) fn get_values(r: &mut Reader, count: usize, dtype: Dtype) -> Result<Vec<C64>> {
    (0..count)
        .map(|_| {
            let re = r.f64()?;
            let im = if dtype == Dtype::C128 { r.f64()? } else { 0.0 };
            Ok(C64::new(re, im))
        })
        .collect()
}

fn checked_product(dims: &[usize]) -> Result<usize> {
    dims.iter()
        .try_fold(1usize, |acc, &d| acc.checked_mul(d))
        .ok_or_else(|| Error::Format(format!("shape {dims:?} overflows")))
}

impl Dataset {
    pub fn new(dtype: Dtype, input_shape: Vec<usize>, output_shape: Vec<usize>, inputs: Vec<C64>, outputs: Vec<C64>) -> Result<Self> {
        let d = Dataset {
            dtype,
            input_shape,
            output_shape,
            inputs,
            outputs,
        };
        d.validate()?;
        Ok(d)
    }

    fn validate(&self) -> Result<()> {
        let (pi, po) = (checked_product(&self.input_shape)?, checked_product(&self.output_shape)?);
        if pi == 0 || po == 0 || self.inputs.len() % pi != 0 || self.outputs.len() != self.inputs.len() / pi * po {
            return Err(Error::Format(format!(
                "payload of {} inputs / {} outputs does not fit shapes {:?} / {:?}",
                self.inputs.len(),
                self.outputs.len(),
                self.input_shape,
                self.output_shape
            )));
        }
        if self.dtype == Dtype::F64 && self.inputs.iter().chain(&self.outputs).any(|z| z.im != 0.0) {
            return Err(Error::Format("f64 dataset holds complex values".into()));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.inputs.len() / self.input_shape.iter().product::<usize>()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn encode(&self) -> Vec<u8> {
        let size = self.dtype.size() * (self.inputs.len() + self.outputs.len());
        let mut out = Vec::with_capacity(64 + size);
        out.extend_from_slice(MAGIC);
        out.push(VERSION);
        out.push(self.dtype.tag());
        out.extend_from_slice(&(self.len() as u64).to_le_bytes());
        put_dims(&mut out, &self.input_shape);
        put_dims(&mut out, &self.output_shape);
        put_values(&mut out, &self.inputs, self.dtype);
        put_values(&mut out, &self.outputs, self.dtype);
        out
    }

    pub fn decode(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader::new(bytes);
        if r.take(4)? != MAGIC {
            return Err(Error::Format("bad magic, not a NODF file".into()));
        }
        let version = r.u8()?;
        if version != VERSION {
            return Err(Error::Format(format!("unsupported NODF version {version}")));
        }
        let dtype = match r.u8()? {
            0 => Dtype::F64,
            1 => Dtype::C128,
            t => return Err(Error::Format(format!("unknown dtype tag {t}"))),
        };
        let count = r.u64()?;
        let input_shape = r.dims()?;
        let output_shape = r.dims()?;
        let per = checked_product(&input_shape)?
            .checked_add(checked_product(&output_shape)?)
            .ok_or_else(|| Error::Format("shape overflow".into()))?;
        let payload = usize::try_from(count)
            .ok()
            .and_then(|c| c.checked_mul(per))
            .and_then(|v| v.checked_mul(dtype.size()))
            .ok_or_else(|| Error::Format(format!("sample count {count} is implausible")))?;
        if r.remaining() < payload {
            return Err(Error::TruncatedFile {
                expected: bytes.len() - r.remaining() + payload,
                found: bytes.len(),
            });
        }
        if r.remaining() > payload {
            return Err(Error::Format(format!(
                "{} trailing bytes after payload",
                r.remaining() - payload
            )));
        }
        let count = count as usize;
        let inputs = get_values(&mut r, count * checked_product(&input_shape)?, dtype)?;
        let outputs = get_values(&mut r, count * checked_product(&output_shape)?, dtype)?;
        Dataset::new(dtype, input_shape, output_shape, inputs, outputs)
    }

    pub fn read(path: &Path) -> Result<Self> {
        Self::decode(&std::fs::read(path).map_err(Error::io(path))?)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.encode()).map_err(Error::io(path))
    }

    /// Tensors `[n, input_shape..]` and `[n, output_shape..]`.
    pub fn samples(&self) -> Result<Samples> {
        let n = self.len();
        let mut si = vec![n];
        si.extend(&self.input_shape);
        let mut so = vec![n];
        so.extend(&self.output_shape);
        Ok(Samples::new(
            CTensor::new(si, self.inputs.clone())?,
            CTensor::new(so, self.outputs.clone())?,
        )?)
    }

    pub fn from_samples(dtype: Dtype, s: &Samples) -> Result<Self> {
        Dataset::new(
            dtype,
            s.inputs.shape()[1..].to_vec(),
            s.outputs.shape()[1..].to_vec(),
            s.inputs.data().to_vec(),
            s.outputs.data().to_vec(),
        )
    }

    /// The first `⌈ratio · n⌉` samples.
    pub fn subsample(&self, ratio: f64) -> Result<Self> {
        if !(ratio > 0.0 && ratio <= 1.0) {
            return Err(Error::Usage(format!("ratio {ratio} is outside (0, 1]")));
        }
        let keep = ((ratio * self.len() as f64).ceil() as usize).min(self.len());
        let pi: usize = self.input_shape.iter().product();
        let po: usize = self.output_shape.iter().product();
        Dataset::new(
            self.dtype,
            self.input_shape.clone(),
            self.output_shape.clone(),
            self.inputs[..keep * pi].to_vec(),
            self.outputs[..keep * po].to_vec(),
        )
    }

    /// Population standard deviation of the whole input block.
    pub fn input_std(&self) -> f64 {
        let n = self.inputs.len() as f64;
        let mean: C64 = self.inputs.iter().sum::<C64>() / n;
        (self.inputs.iter().map(|z| (z - mean).norm_sqr()).sum::<f64>() / n).sqrt()
    }

    /// Adds `gamma · σ_D · N(0, 1)` to every input value, where `σ_D` is the
    /// standard deviation of the full input block. Outputs are untouched.
    /// Complex datasets split the noise power evenly between Re and Im.
    pub fn add_noise(&self, gamma: f64, seed: u64) -> Result<Self> {
        if !(gamma >= 0.0) {
            return Err(Error::Usage(format!("noise level {gamma} must be non-negative")));
        }
        let mut out = self.clone();
        if gamma == 0.0 {
            return Ok(out);
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(2);
        let sigma = gamma * self.input_std();
        match self.dtype {
            Dtype::F64 => {
                for v in &mut out.inputs {
                    let e: f64 = StandardNormal.sample(&mut rng);
                    v.re += sigma * e;
                }
            }
            Dtype::C128 => {
                let s = sigma / std::f64::consts::SQRT_2;
                for v in &mut out.inputs {
                    let (a, b): (f64, f64) = (StandardNormal.sample(&mut rng), StandardNormal.sample(&mut rng));
                    *v += C64::new(s * a, s * b);
                }
            }
        }
        Ok(out)
    }

    /// Sample `index` of the inputs (or outputs) as CSV: one row per point
    /// of a 1-D field, a grid for 2-D fields, channels side by side.
    pub fn field_csv(&self, index: usize, output: bool) -> Result<String> {
        let (shape, data) = if output {
            (&self.output_shape, &self.outputs)
        } else {
            (&self.input_shape, &self.inputs)
        };
        if index >= self.len() {
            return Err(Error::Usage(format!("sample {index} out of {}", self.len())));
        }
        let per: usize = shape.iter().product();
        let field = &data[index * per..(index + 1) * per];
        let channels = *shape.last().expect("non-empty shape");
        let row_len = if shape.len() >= 3 { shape[shape.len() - 2] * channels } else { channels };
        let complex = self.dtype == Dtype::C128;
        let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(vec![]);
        for row in field.chunks(row_len) {
            let cells: Vec<String> = row
                .iter()
                .flat_map(|z| {
                    let mut c = vec![z.re.to_string()];
                    if complex {
                        c.push(z.im.to_string());
                    }
                    c
                })
                .collect();
            w.write_record(&cells).map_err(|e| Error::Format(e.to_string()))?;
        }
        let bytes = w.into_inner().map_err(|e| Error::Format(e.to_string()))?;
        Ok(String::from_utf8(bytes).expect("ascii numbers"))
    }
}
