//! Model checkpoints, in the primitive encoding of NODF.
//!
//! ```text
//! magic b"NOCK", version u8 (1)
//! u64 length, then the model configuration as key=value text (UTF-8)
//! u64 parameter count, then per parameter:
//!     u64 name length, name bytes
//!     u8 kind (0 complex, 1 real, 2 order), u8 trainable
//!     rank u8 + dims u64, values as c128
//! ```

use std::path::Path;

use fracop_core::model::{ParamKind, ParamStore};
use fracop_core::{CTensor, ConoConfig, ConoModel};

use crate::config::{parse_pairs, render_pairs};
use crate::error::{Error, Result};
use crate::nodf::{get_values, put_dims, put_values, Dtype, Reader};

pub const MAGIC: &[u8; 4] = b"NOCK";
pub const VERSION: u8 = 1;

pub fn config_pairs(c: &ConoConfig) -> Vec<(String, String)> {
    [
        ("in_channels", c.in_channels.to_string()),
        ("out_channels", c.out_channels.to_string()),
        ("width", c.width.to_string()),
        ("n_layers", c.n_layers.to_string()),
        ("modes", c.modes.to_string()),
        ("alpha_init", c.alpha_init.to_string()),
        ("alpha_prime_init", c.alpha_prime_init.to_string()),
        ("use_alias_free", c.use_alias_free.to_string()),
        ("grid_ndim", c.grid_ndim.to_string()),
        ("padding", c.padding.to_string()),
        ("branches", c.branches.to_string()),
        ("use_bias", c.use_bias.to_string()),
        ("complex", c.complex.to_string()),
        ("learn_orders", c.learn_orders.to_string()),
        ("spectral_grid", c.spectral_grid.to_string()),
    ]
    .into_iter()
    .map(|(k, v)| (k.to_string(), v))
    .collect()
}

fn config_from_pairs(pairs: &[(String, String)]) -> Result<ConoConfig> {
    let mut c = ConoConfig::default();
    let mut seen = 0;
    for (k, v) in pairs {
        let bad = || Error::Format(format!("checkpoint config: bad value `{v}` for {k}"));
        let int = || v.parse::<usize>().map_err(|_| bad());
        let real = || v.parse::<f64>().map_err(|_| bad());
        let flag = || v.parse::<bool>().map_err(|_| bad());
        match k.as_str() {
            "in_channels" => c.in_channels = int()?,
            "out_channels" => c.out_channels = int()?,
            "width" => c.width = int()?,
            "n_layers" => c.n_layers = int()?,
            "modes" => c.modes = int()?,
            "alpha_init" => c.alpha_init = real()?,
            "alpha_prime_init" => c.alpha_prime_init = real()?,
            "use_alias_free" => c.use_alias_free = flag()?,
            "grid_ndim" => c.grid_ndim = int()?,
            "padding" => c.padding = int()?,
            "branches" => c.branches = int()?,
            "use_bias" => c.use_bias = flag()?,
            "complex" => c.complex = flag()?,
            "learn_orders" => c.learn_orders = flag()?,
            "spectral_grid" => c.spectral_grid = int()?,
            _ => return Err(Error::Format(format!("checkpoint config: unknown key {k}"))),
        }
        seen += 1;
    }
    if seen != 15 {
        return Err(Error::Format(format!("checkpoint config has {seen} of 15 keys")));
    }
    Ok(c)
}

fn kind_tag(k: ParamKind) -> u8 {
    match k {
        ParamKind::Complex => 0,
        ParamKind::Real => 1,
        ParamKind::Order => 2,
    }
}

pub fn encode(config: &ConoConfig, params: &ParamStore) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.push(VERSION);
    let text = render_pairs(&config_pairs(config));
    out.extend_from_slice(&(text.len() as u64).to_le_bytes());
    out.extend_from_slice(text.as_bytes());
    out.extend_from_slice(&(params.len() as u64).to_le_bytes());
    for p in params.iter() {
        out.extend_from_slice(&(p.name.len() as u64).to_le_bytes());
        out.extend_from_slice(p.name.as_bytes());
        out.push(kind_tag(p.kind));
        out.push(u8::from(p.trainable));
        put_dims(&mut out, p.value.shape());
        put_values(&mut out, p.value.data(), Dtype::C128);
    }
    out
}

pub fn decode(bytes: &[u8]) -> Result<ConoModel> {
    let mut r = Reader::new(bytes);
    if r.take(4)? != MAGIC {
        return Err(Error::Format("bad magic, not a checkpoint".into()));
    }
    let version = r.u8()?;
    if version != VERSION {
        return Err(Error::Format(format!("unsupported checkpoint version {version}")));
    }
    let len = r.u64()? as usize;
    let text = std::str::from_utf8(r.take(len)?).map_err(|_| Error::Format("config is not UTF-8".into()))?;
    let config = config_from_pairs(&parse_pairs(text).map_err(|e| Error::Format(e.to_string()))?)?;
    let count = r.u64()?;
    let mut params = ParamStore::default();
    for _ in 0..count {
        let len = r.u64()? as usize;
        let name = std::str::from_utf8(r.take(len)?)
            .map_err(|_| Error::Format("parameter name is not UTF-8".into()))?
            .to_string();
        let kind = match r.u8()? {
            0 => ParamKind::Complex,
            1 => ParamKind::Real,
            2 => ParamKind::Order,
            t => return Err(Error::Format(format!("unknown parameter kind {t}"))),
        };
        let trainable = r.u8()? != 0;
        let dims = r.dims()?;
        let size: usize = dims.iter().product();
        if size.saturating_mul(16) > r.remaining() {
            return Err(Error::TruncatedFile {
                expected: bytes.len() - r.remaining() + size.saturating_mul(16),
                found: bytes.len(),
            });
        }
        let values = get_values(&mut r, size, Dtype::C128)?;
        params.push(&name, kind, CTensor::new(dims, values)?, trainable);
    }
    if r.remaining() != 0 {
        return Err(Error::Format(format!("{} trailing bytes in checkpoint", r.remaining())));
    }
    ConoModel::from_parts(config, params).map_err(|e| Error::Format(format!("checkpoint does not match its configuration: {e}")))
}

pub fn save(path: &Path, config: &ConoConfig, params: &ParamStore) -> Result<()> {
    std::fs::write(path, encode(config, params)).map_err(Error::io(path))
}

pub fn load(path: &Path) -> Result<ConoModel> {
    decode(&std::fs::read(path).map_err(Error::io(path))?)
}
