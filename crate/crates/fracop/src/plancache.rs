//! On-disk persistence of transform plans.
//!
//! When `FRACOP_CACHE_DIR` is set, eigendecompositions are stored there as
//! `frft-<n>-w<half_width>.plan` and reused by later runs. Unreadable or
//! damaged files are rebuilt and overwritten.
//!
//! ```text
//! magic b"FRFP", version u8 (1), n u64, half_width u64,
//! n × u64 eigenvalue indices, n² × f64 eigenvectors (row-major)
//! ```

use std::path::{Path, PathBuf};

use fracop_core::frft::FrftPlan;
use fracop_core::ConoModel;

use crate::error::{Error, Result};
use crate::nodf::Reader;

pub const ENV_VAR: &str = "FRACOP_CACHE_DIR";
const MAGIC: &[u8; 4] = b"FRFP";

pub fn cache_dir() -> Option<PathBuf> {
    std::env::var_os(ENV_VAR).filter(|v| !v.is_empty()).map(PathBuf::from)
}

pub fn encode_plan(plan: &FrftPlan) -> Vec<u8> {
    let n = plan.n();
    let mut out = Vec::with_capacity(21 + 8 * n * (n + 1));
    out.extend_from_slice(MAGIC);
    out.push(1);
    out.extend_from_slice(&(n as u64).to_le_bytes());
    out.extend_from_slice(&(plan.stencil_half_width() as u64).to_le_bytes());
    for &k in plan.eig_index() {
        out.extend_from_slice(&u64::from(k).to_le_bytes());
    }
    for v in plan.eigvecs() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

pub fn decode_plan(bytes: &[u8]) -> Result<FrftPlan> {
    let mut r = Reader::new(bytes);
    if r.take(4)? != MAGIC || r.u8()? != 1 {
        return Err(Error::Format("not a version 1 plan file".into()));
    }
    let n = r.u64()? as usize;
    let width = r.u64()? as usize;
    if r.remaining() != 8 * n * (n + 1) {
        return Err(Error::Format("plan payload length does not match n".into()));
    }
    let index = (0..n).map(|_| r.u64().map(|k| k as u32)).collect::<Result<_>>()?;
    let vecs = (0..n * n).map(|_| r.f64()).collect::<Result<_>>()?;
    Ok(FrftPlan::from_parts(n, width, vecs, index)?)
}

fn default_width(n: usize) -> usize {
    (n.saturating_sub(1) / 2).max(1)
}

pub fn plan_path(dir: &Path, n: usize) -> PathBuf {
    dir.join(format!("frft-{n}-w{}.plan", default_width(n)))
}

/// The default plan for length `n`, from `dir` when present.
pub fn load_or_build(dir: &Path, n: usize) -> Result<FrftPlan> {
    let path = plan_path(dir, n);
    if let Ok(bytes) = std::fs::read(&path) {
        if let Ok(plan) = decode_plan(&bytes) {
            if plan.n() == n && plan.stencil_half_width() == default_width(n) {
                return Ok(plan);
            }
        }
    }
    let plan = FrftPlan::new(n)?;
    std::fs::create_dir_all(dir).map_err(Error::io(dir))?;
    // write then rename so concurrent runs never read half a file
    let tmp = path.with_extension(format!("tmp{}", std::process::id()));
    std::fs::write(&tmp, encode_plan(&plan)).map_err(Error::io(&tmp))?;
    std::fs::rename(&tmp, &path).map_err(Error::io(&path))?;
    Ok(plan)
}

/// Loads the plans `model` needs for `spatial` from the cache directory, if
/// one is configured, then builds whatever is still missing.
pub fn prepare(model: &mut ConoModel, spatial: &[usize]) -> Result<()> {
    model.check_spatial(spatial)?;
    if let Some(dir) = cache_dir() {
        for &n in spatial {
            let nt = model.transform_len(n);
            if model.plans().get(nt).is_none() {
                model.insert_plan(load_or_build(&dir, nt)?);
            }
        }
    }
    Ok(model.ensure_plans(spatial)?)
}
