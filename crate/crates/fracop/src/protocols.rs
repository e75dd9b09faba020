//! Training runs and the evaluation protocols built on them: resolution
//! transfer, input noise, training-set size and component ablations.

use fracop_core::train::{evaluate, train_loop, EpochRow, Executor, Samples, TrainOutcome};
use fracop_core::{make_ablation, ConoModel, Variant};

use crate::config::{Arch, TrainSettings};
use crate::error::{Error, Result};
use crate::nodf::Dataset;
use crate::plancache;

/// Spatial axes of a batch `[n, S.., c]`.
pub fn spatial_of(s: &Samples) -> Vec<usize> {
    let shape = s.inputs.shape();
    shape[1..shape.len() - 1].to_vec()
}

/// Fills channel counts and dimension from the dataset, rejecting explicit
/// settings that disagree with it.
pub fn resolve_shapes(settings: &mut TrainSettings, data: &Dataset) -> Result<()> {
    let found = [
        ("in_channels", *data.input_shape.last().unwrap_or(&0)),
        ("out_channels", *data.output_shape.last().unwrap_or(&0)),
        ("grid_ndim", data.input_shape.len().saturating_sub(1)),
    ];
    for (key, value) in found {
        let slot = match key {
            "in_channels" => &mut settings.model.in_channels,
            "out_channels" => &mut settings.model.out_channels,
            _ => &mut settings.model.grid_ndim,
        };
        if settings.shape_keys.iter().any(|k| k == key) && *slot != value {
            return Err(Error::Incompatible(format!("{key}={} but the dataset has {value}", *slot)));
        }
        *slot = value;
    }
    Ok(())
}

/// Freshly initialized model for the settings (architecture, then ablation).
pub fn build_model(settings: &TrainSettings) -> Result<ConoModel> {
    let seed = settings.model_seed();
    let base = match settings.arch {
        Arch::Cono => ConoModel::new(settings.model.clone(), seed)?,
        Arch::Fno => ConoModel::fno(settings.model.clone(), seed)?,
    };
    Ok(match settings.ablation {
        Some(v) => make_ablation(&base, v)?,
        None => base,
    })
}

/// Train and test samples after the data protocol of `settings.train`.
///
/// Without a separate test set the last sixth of `data` is held out. Noise is
/// drawn for the whole input block of `data`, with its standard deviation,
/// but only the training part keeps it. The ratio then keeps the leading
/// share of the training part.
pub fn prepare_data(settings: &TrainSettings, data: &Dataset, test: Option<&Dataset>) -> Result<(Samples, Samples)> {
    let cfg = &settings.train;
    let noisy = data.add_noise(cfg.noise_gamma, cfg.seed)?;
    let (train, test) = match test {
        Some(t) => (noisy.samples()?, t.samples()?),
        None => {
            let (train, _) = noisy.samples()?.split_final_sixth()?;
            let (_, test) = data.samples()?.split_final_sixth()?;
            (train, test)
        }
    };
    let train = Dataset::from_samples(data.dtype, &train)?.subsample(cfg.data_ratio)?.samples()?;
    if test.inputs.rank() != train.inputs.rank() {
        return Err(Error::Incompatible("test set has a different layout".into()));
    }
    Ok((train, test))
}

pub struct Run {
    pub model: ConoModel,
    pub outcome: TrainOutcome,
}

/// One complete training run.
pub fn run(
    settings: &TrainSettings,
    data: &Dataset,
    test: Option<&Dataset>,
    exec: &dyn Executor,
    on_epoch: &mut dyn FnMut(&EpochRow),
) -> Result<Run> {
    let mut settings = settings.clone();
    resolve_shapes(&mut settings, data)?;
    if let Some(t) = test {
        if t.input_shape.last() != data.input_shape.last() || t.output_shape.last() != data.output_shape.last() {
            return Err(Error::Incompatible("test set channels differ from the training set".into()));
        }
    }
    let (train, held_out) = prepare_data(&settings, data, test)?;
    let mut model = build_model(&settings)?;
    plancache::prepare(&mut model, &spatial_of(&train))?;
    plancache::prepare(&mut model, &spatial_of(&held_out))?;
    let outcome = train_loop(&mut model, &train, &held_out, &settings.train, exec, on_epoch)?;
    Ok(Run { model, outcome })
}

/// Checks that a dataset fits a trained model's channels and dimension.
pub fn check_compatible(model: &ConoModel, data: &Dataset) -> Result<()> {
    let c = model.config();
    let ndim = data.input_shape.len().saturating_sub(1);
    let cin = *data.input_shape.last().unwrap_or(&0);
    let cout = *data.output_shape.last().unwrap_or(&0);
    if ndim != c.grid_ndim || cin != c.in_channels || cout != c.out_channels {
        return Err(Error::Incompatible(format!(
            "model expects {}-D fields with {} -> {} channels, dataset has {ndim}-D with {cin} -> {cout}",
            c.grid_ndim, c.in_channels, c.out_channels
        )));
    }
    Ok(())
}

/// Relative L2 of `model` on every sample of `data`.
pub fn evaluate_dataset(model: &mut ConoModel, data: &Samples, batch: usize) -> Result<f64> {
    plancache::prepare(model, &spatial_of(data))?;
    Ok(evaluate(model, data, batch)?)
}

#[derive(Clone, Debug, PartialEq)]
pub struct ResolutionRow {
    pub resolution: usize,
    pub rel_l2: f64,
}

/// Evaluates one fixed model on the same task sampled at several grids.
pub fn protocol_resolution(model: &mut ConoModel, sets: &[(usize, Samples)], batch: usize) -> Result<Vec<ResolutionRow>> {
    let mut sorted: Vec<&(usize, Samples)> = sets.iter().collect();
    sorted.sort_by_key(|(r, _)| *r);
    // Nyquist is checked up front at the coarsest grid
    if let Some((_, s)) = sorted.first() {
        model.check_spatial(&spatial_of(s))?;
    }
    sets.iter()
        .map(|(resolution, s)| {
            Ok(ResolutionRow {
                resolution: *resolution,
                rel_l2: evaluate_dataset(model, s, batch)?,
            })
        })
        .collect()
}

pub fn resolution_csv(rows: &[ResolutionRow]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["resolution", "rel_l2"]).map_err(csv_err)?;
    for r in rows {
        w.write_record([r.resolution.to_string(), r.rel_l2.to_string()]).map_err(csv_err)?;
    }
    finish(w)
}

/// One point of a training sweep.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Setting {
    Noise(f64),
    Ratio(f64),
    Ablation(Option<Variant>),
}

impl Setting {
    pub fn protocol(&self) -> &'static str {
        match self {
            Setting::Noise(_) => "noise",
            Setting::Ratio(_) => "data_ratio",
            Setting::Ablation(_) => "ablation",
        }
    }

    pub fn label(&self) -> String {
        match self {
            Setting::Noise(g) | Setting::Ratio(g) => g.to_string(),
            Setting::Ablation(v) => v.map_or("full", |v| v.name()).to_string(),
        }
    }

    fn apply(&self, s: &mut TrainSettings) {
        match *self {
            Setting::Noise(g) => s.train.noise_gamma = g,
            Setting::Ratio(r) => s.train.data_ratio = r,
            Setting::Ablation(v) => s.ablation = v,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SweepRow {
    pub setting: Setting,
    pub seed: u64,
    pub final_test_rel_l2: f64,
    pub best_test_rel_l2: f64,
    /// Largest change of any fractional order over the run.
    pub order_drift: f64,
}

/// Trains one model per `(setting, seed)`, settings outermost. The seed sets
/// both initialization and shuffling.
pub fn protocol_sweep(
    base: &TrainSettings,
    data: &Dataset,
    test: Option<&Dataset>,
    settings: &[Setting],
    seeds: &[u64],
    exec: &dyn Executor,
    progress: &mut dyn FnMut(&SweepRow),
) -> Result<Vec<SweepRow>> {
    let mut rows = Vec::new();
    for setting in settings {
        for &seed in seeds {
            let mut s = base.clone();
            s.train.seed = seed;
            s.model_seed = Some(seed);
            setting.apply(&mut s);
            let initial: Vec<f64> = {
                let mut probe = s.clone();
                resolve_shapes(&mut probe, data)?;
                build_model(&probe)?.orders().into_iter().map(|(_, a)| a).collect()
            };
            let r = run(&s, data, test, exec, &mut |_| {})?;
            let log = &r.outcome.log;
            let order_drift = log
                .rows
                .iter()
                .flat_map(|row| row.orders.iter().zip(&initial).map(|(a, b)| (a - b).abs()))
                .fold(0.0, f64::max);
            let row = SweepRow {
                setting: *setting,
                seed,
                final_test_rel_l2: log.last().map_or(f64::NAN, |r| r.test_rel_l2),
                best_test_rel_l2: log.rows.iter().map(|r| r.test_rel_l2).fold(f64::INFINITY, f64::min),
                order_drift,
            };
            progress(&row);
            rows.push(row);
        }
    }
    Ok(rows)
}

/// Mean final test error per setting, in first-appearance order.
pub fn sweep_means(rows: &[SweepRow]) -> Vec<(Setting, f64)> {
    let mut out: Vec<(Setting, f64, usize)> = Vec::new();
    for r in rows {
        match out.iter_mut().find(|(s, _, _)| *s == r.setting) {
            Some(e) => {
                e.1 += r.final_test_rel_l2;
                e.2 += 1;
            }
            None => out.push((r.setting, r.final_test_rel_l2, 1)),
        }
    }
    out.into_iter().map(|(s, t, c)| (s, t / c as f64)).collect()
}

/// Per-seed rows followed by one `mean` row per setting.
pub fn sweep_csv(rows: &[SweepRow]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["protocol", "setting", "seed", "final_test_rel_l2", "best_test_rel_l2", "order_drift"])
        .map_err(csv_err)?;
    for r in rows {
        w.write_record([
            r.setting.protocol().to_string(),
            r.setting.label(),
            r.seed.to_string(),
            r.final_test_rel_l2.to_string(),
            r.best_test_rel_l2.to_string(),
            r.order_drift.to_string(),
        ])
        .map_err(csv_err)?;
    }
    for (s, mean) in sweep_means(rows) {
        w.write_record([s.protocol().to_string(), s.label(), "mean".into(), mean.to_string(), String::new(), String::new()])
            .map_err(csv_err)?;
    }
    finish(w)
}

fn csv_err(e: csv::Error) -> Error {
    Error::Format(format!("csv: {e}"))
}

fn finish(w: csv::Writer<Vec<u8>>) -> Result<String> {
    let bytes = w.into_inner().map_err(|e| Error::Format(format!("csv: {e}")))?;
    String::from_utf8(bytes).map_err(|e| Error::Format(e.to_string()))
}
