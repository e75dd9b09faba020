//! Flat `key=value` configuration files and run manifests.
//!
//! One setting per line, `#` starts a comment line, surrounding whitespace is
//! ignored. Keys beginning with `manifest.` are metadata written by the tool
//! and are skipped when a manifest is read back as a configuration, so any
//! manifest can be passed to `--config` to repeat its run.
//!
//! Training keys:
//!
//! | key | meaning |
//! |---|---|
//! | `data`, `test_data` | dataset paths; without `test_data` the last sixth of `data` is held out |
//! | `arch` | `cono` or `fno` |
//! | `ablation` | `none`, `no_bias`, `no_frft`, `no_complex`, `no_alias_free` |
//! | `width`, `n_layers`, `modes`, `padding`, `branches` | architecture sizes |
//! | `alpha_init`, `alpha_prime_init` | initial fractional orders |
//! | `spectral_grid` | fixed transform length for resolution-consistent branches, 0 for none |
//! | `use_alias_free`, `use_bias`, `complex`, `learn_orders` | `true` / `false` |
//! | `in_channels`, `out_channels`, `grid_ndim` | taken from the dataset when absent |
//! | `epochs`, `batch_size`, `lr`, `step_size`, `gamma`, `seed` | optimisation |
//! | `alpha_lr_multiplier`, `noise_gamma`, `data_ratio` | optimisation and data protocol |
//! | `model_seed` | initialization seed, defaults to `seed` |

use std::fmt::Display;
use std::path::Path;
use std::str::FromStr;

use fracop_core::{ConoConfig, TrainConfig, Variant};

use crate::error::{Error, Result};

/// Ordered `(key, value)` pairs of a configuration text.
pub fn parse_pairs(text: &str) -> Result<Vec<(String, String)>> {
    let mut out = Vec::new();
    for (no, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| Error::Usage(format!("line {}: expected key=value, got `{line}`", no + 1)))?;
        out.push((k.trim().to_string(), v.trim().to_string()));
    }
    Ok(out)
}

pub fn read_pairs(path: &Path) -> Result<Vec<(String, String)>> {
    let text = std::fs::read_to_string(path).map_err(Error::io(path))?;
    parse_pairs(&text)
}

/// Parses a `key=value` override as given on the command line.
pub fn parse_override(s: &str) -> Result<(String, String)> {
    let (k, v) = s
        .split_once('=')
        .ok_or_else(|| Error::Usage(format!("override `{s}` is not key=value")))?;
    Ok((k.trim().to_string(), v.trim().to_string()))
}

pub fn render_pairs(pairs: &[(String, String)]) -> String {
    pairs.iter().map(|(k, v)| format!("{k}={v}\n")).collect()
}

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T>
where
    T::Err: Display,
{
    value
        .parse()
        .map_err(|e| Error::Usage(format!("bad value `{value}` for {key}: {e}")))
}

fn pair(k: &str, v: impl Display) -> (String, String) {
    (k.to_string(), v.to_string())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Arch {
    Cono,
    Fno,
}

impl FromStr for Arch {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "cono" => Ok(Arch::Cono),
            "fno" => Ok(Arch::Fno),
            _ => Err(format!("unknown architecture `{s}`")),
        }
    }
}

impl Display for Arch {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Arch::Cono => "cono",
            Arch::Fno => "fno",
        })
    }
}

/// Everything a training run depends on.
#[derive(Clone, Debug, PartialEq)]
pub struct TrainSettings {
    pub data: Option<String>,
    pub test_data: Option<String>,
    pub arch: Arch,
    pub ablation: Option<Variant>,
    pub model: ConoConfig,
    pub train: TrainConfig,
    pub model_seed: Option<u64>,
    /// Keys for channel counts and dimension that were set explicitly.
    pub shape_keys: Vec<String>,
}

impl Default for TrainSettings {
    fn default() -> Self {
        Self {
            data: None,
            test_data: None,
            arch: Arch::Cono,
            ablation: None,
            model: ConoConfig::default(),
            train: TrainConfig::default(),
            model_seed: None,
            shape_keys: Vec::new(),
        }
    }
}

impl TrainSettings {
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let m = &mut self.model;
        let t = &mut self.train;
        match key {
            "data" => self.data = Some(value.to_string()),
            "test_data" => self.test_data = Some(value.to_string()),
            "arch" => self.arch = parse(key, value)?,
            "ablation" => {
                self.ablation = match value {
                    "none" => None,
                    v => Some(v.parse()?),
                }
            }
            "in_channels" | "out_channels" | "grid_ndim" => {
                let v = parse(key, value)?;
                match key {
                    "in_channels" => m.in_channels = v,
                    "out_channels" => m.out_channels = v,
                    _ => m.grid_ndim = v,
                }
                if !self.shape_keys.iter().any(|k| k == key) {
                    self.shape_keys.push(key.to_string());
                }
            }
            "width" => m.width = parse(key, value)?,
            "n_layers" => m.n_layers = parse(key, value)?,
            "modes" => m.modes = parse(key, value)?,
            "padding" => m.padding = parse(key, value)?,
            "branches" => m.branches = parse(key, value)?,
            "alpha_init" => m.alpha_init = parse(key, value)?,
            "alpha_prime_init" => m.alpha_prime_init = parse(key, value)?,
            "use_alias_free" => m.use_alias_free = parse(key, value)?,
            "use_bias" => m.use_bias = parse(key, value)?,
            "complex" => m.complex = parse(key, value)?,
            "learn_orders" => m.learn_orders = parse(key, value)?,
            "spectral_grid" => m.spectral_grid = parse(key, value)?,
            "epochs" => t.epochs = parse(key, value)?,
            "batch_size" => t.batch_size = parse(key, value)?,
            "lr" => t.lr = parse(key, value)?,
            "step_size" => t.step_size = parse(key, value)?,
            "gamma" => t.gamma = parse(key, value)?,
            "seed" => t.seed = parse(key, value)?,
            "alpha_lr_multiplier" => t.alpha_lr_multiplier = parse(key, value)?,
            "noise_gamma" => t.noise_gamma = parse(key, value)?,
            "data_ratio" => t.data_ratio = parse(key, value)?,
            "model_seed" => self.model_seed = Some(parse(key, value)?),
            k if k.starts_with("manifest.") => {}
            _ => return Err(Error::Usage(format!("unknown configuration key `{key}`"))),
        }
        Ok(())
    }

    pub fn apply(&mut self, pairs: &[(String, String)]) -> Result<()> {
        pairs.iter().try_for_each(|(k, v)| self.set(k, v))
    }

    pub fn model_seed(&self) -> u64 {
        self.model_seed.unwrap_or(self.train.seed)
    }

    /// Resolved settings in a fixed key order; reading them back yields an
    /// equal value.
    pub fn to_pairs(&self) -> Vec<(String, String)> {
        let (m, t) = (&self.model, &self.train);
        let mut out = Vec::new();
        if let Some(d) = &self.data {
            out.push(pair("data", d));
        }
        if let Some(d) = &self.test_data {
            out.push(pair("test_data", d));
        }
        out.push(pair("arch", self.arch));
        out.push(pair("ablation", self.ablation.map_or("none", |v| v.name())));
        for k in ["in_channels", "out_channels", "grid_ndim"] {
            if self.shape_keys.iter().any(|s| s == k) {
                let v = match k {
                    "in_channels" => m.in_channels,
                    "out_channels" => m.out_channels,
                    _ => m.grid_ndim,
                };
                out.push(pair(k, v));
            }
        }
        out.extend([
            pair("width", m.width),
            pair("n_layers", m.n_layers),
            pair("modes", m.modes),
            pair("padding", m.padding),
            pair("branches", m.branches),
            pair("alpha_init", m.alpha_init),
            pair("alpha_prime_init", m.alpha_prime_init),
            pair("use_alias_free", m.use_alias_free),
            pair("use_bias", m.use_bias),
            pair("complex", m.complex),
            pair("learn_orders", m.learn_orders),
            pair("spectral_grid", m.spectral_grid),
            pair("epochs", t.epochs),
            pair("batch_size", t.batch_size),
            pair("lr", t.lr),
            pair("step_size", t.step_size),
            pair("gamma", t.gamma),
            pair("seed", t.seed),
            pair("alpha_lr_multiplier", t.alpha_lr_multiplier),
            pair("noise_gamma", t.noise_gamma),
            pair("data_ratio", t.data_ratio),
        ]);
        if let Some(s) = self.model_seed {
            out.push(pair("model_seed", s));
        }
        out
    }
}

/// Dataset generation settings.
#[derive(Clone, Debug, PartialEq)]
pub struct GenSettings {
    pub task: String,
    pub n: usize,
    pub grid: usize,
    pub seed: u64,
    /// Generator-specific keys; unknown ones are rejected at generation.
    pub extra: Vec<(String, String)>,
}

impl GenSettings {
    pub fn to_pairs(&self) -> Vec<(String, String)> {
        let mut out = vec![
            pair("task", &self.task),
            pair("n", self.n),
            pair("grid", self.grid),
            pair("seed", self.seed),
        ];
        out.extend(self.extra.iter().cloned());
        out
    }

    pub fn from_pairs(pairs: &[(String, String)]) -> Result<Self> {
        let mut s = GenSettings {
            task: String::new(),
            n: 0,
            grid: 0,
            seed: 0,
            extra: Vec::new(),
        };
        for (k, v) in pairs {
            match k.as_str() {
                "task" => s.task = v.clone(),
                "n" => s.n = parse(k, v)?,
                "grid" => s.grid = parse(k, v)?,
                "seed" => s.seed = parse(k, v)?,
                k if k.starts_with("manifest.") => {}
                _ => s.set_extra(k, v),
            }
        }
        Ok(s)
    }

    pub fn set_extra(&mut self, key: &str, value: &str) {
        match self.extra.iter_mut().find(|(k, _)| k == key) {
            Some(entry) => entry.1 = value.to_string(),
            None => self.extra.push((key.to_string(), value.to_string())),
        }
    }

    pub fn get<T: FromStr>(&self, key: &str) -> Result<Option<T>>
    where
        T::Err: Display,
    {
        self.extra
            .iter()
            .find(|(k, _)| k == key)
            .map(|(k, v)| parse(k, v))
            .transpose()
    }
}

/// Record of one invocation, written next to its outputs.
#[derive(Clone, Debug, PartialEq)]
pub struct RunManifest {
    pub command: String,
    pub config_path: Option<String>,
    pub settings: Vec<(String, String)>,
    pub artifacts: Vec<(String, String)>,
    pub started_unix: u64,
    pub finished_unix: u64,
    pub threads: usize,
}

pub const MANIFEST_FILE: &str = "manifest.txt";

pub fn unix_now() -> u64 {
    std::time::SystemTime::now()
        .duration_since(std::time::UNIX_EPOCH)
        .map_or(0, |d| d.as_secs())
}

impl RunManifest {
    pub fn render(&self) -> String {
        let mut meta = vec![
            pair("manifest.command", &self.command),
            pair("manifest.tool_version", env!("CARGO_PKG_VERSION")),
            pair("manifest.config_path", self.config_path.as_deref().unwrap_or("")),
            pair("manifest.threads", self.threads),
            pair("manifest.started_unix", self.started_unix),
            pair("manifest.finished_unix", self.finished_unix),
        ];
        for (k, v) in &self.artifacts {
            meta.push(pair(&format!("manifest.artifact.{k}"), v));
        }
        format!("# fracop run manifest\n{}{}", render_pairs(&meta), render_pairs(&self.settings))
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.render()).map_err(Error::io(path))
    }
}
