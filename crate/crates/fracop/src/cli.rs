//! The `fracop` command line.

use std::fmt::Write as _;
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use fracop_core::frft::{frft, FrftPlan, PlanCache};
use fracop_core::train::{MetricsLog, Samples};
use fracop_core::{CTensor, FracOrder, Variant, C64};

use crate::checkpoint;
use crate::config::{self, GenSettings, RunManifest, TrainSettings, MANIFEST_FILE};
use crate::error::{Error, Result};
use crate::exec::Pool;
use crate::nodf::Dataset;
use crate::pdedata::{self, BurgersParams, ChirpParams, DarcyParams, HeatParams};
use crate::plancache;
use crate::protocols::{self, Setting};

#[derive(Parser, Debug)]
#[command(name = "fracop", version, about = "Fractional-order neural operators on synthetic PDE tasks")]
pub struct Cli {
    /// Worker threads; 1 gives bit-reproducible runs.
    #[arg(long, global = true, default_value_t = 1)]
    pub threads: usize,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Generate a dataset.
    Gen(GenArgs),
    /// Train a model on a dataset.
    Train(TrainArgs),
    /// Evaluate a checkpoint or run a protocol.
    Eval(EvalArgs),
    /// Fractional Fourier transform magnitude and phase of a field.
    Frft(FrftArgs),
    /// Print metadata of a dataset, checkpoint or plan file.
    Inspect(InspectArgs),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Task {
    Heat1d,
    Burgers1d,
    Darcy2d,
    Chirp,
}

impl Task {
    fn name(self) -> &'static str {
        match self {
            Task::Heat1d => "heat1d",
            Task::Burgers1d => "burgers1d",
            Task::Darcy2d => "darcy2d",
            Task::Chirp => "chirp",
        }
    }
}

#[derive(Args, Debug)]
pub struct GenArgs {
    pub task: Option<Task>,
    /// Number of samples.
    #[arg(long)]
    pub n: Option<usize>,
    /// Points per axis.
    #[arg(long)]
    pub grid: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Settings file, e.g. a previous manifest.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Generator parameter as key=value (t_final, diffusivity, viscosity,
    /// cfl, contrast, beta, rate_min, rate_max, order, cutoff, chirps,
    /// sigma, tau, exponent, max_mode).
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub set: Vec<String>,
    #[arg(short, long)]
    pub output: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct TrainArgs {
    #[arg(long)]
    pub data: Option<PathBuf>,
    #[arg(long)]
    pub test_data: Option<PathBuf>,
    /// Run directory for manifest, checkpoints and metrics.
    #[arg(short, long)]
    pub out: PathBuf,
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Any configuration key as key=value; applied after the file.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub set: Vec<String>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub ablation: Option<String>,
    #[arg(long)]
    pub arch: Option<String>,
    /// Suppress per-epoch progress on stderr.
    #[arg(long)]
    pub quiet: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Protocol {
    Test,
    Resolution,
    Noise,
    DataRatio,
    Ablation,
}

#[derive(Args, Debug)]
pub struct EvalArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long, value_enum, default_value_t = Protocol::Test)]
    pub protocol: Protocol,
    /// Dataset(s); the resolution protocol takes one per resolution.
    #[arg(long, value_delimiter = ',')]
    pub data: Vec<PathBuf>,
    #[arg(long)]
    pub test_data: Option<PathBuf>,
    /// Evaluate only the last sixth of each dataset.
    #[arg(long)]
    pub holdout: bool,
    /// Resolutions to generate for the resolution protocol.
    #[arg(long, value_delimiter = ',')]
    pub res: Vec<usize>,
    /// Task used to generate resolution data.
    #[arg(long)]
    pub task: Option<Task>,
    #[arg(long, default_value_t = 40)]
    pub n: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, value_delimiter = ',')]
    pub gamma: Vec<f64>,
    #[arg(long, value_delimiter = ',')]
    pub ratio: Vec<f64>,
    /// Ablation variants; `full` is the unmodified model.
    #[arg(long, value_delimiter = ',')]
    pub variants: Vec<String>,
    #[arg(long, value_delimiter = ',', default_values_t = [0u64, 1, 2])]
    pub seeds: Vec<u64>,
    /// Training settings for the sweep protocols.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub set: Vec<String>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long, default_value_t = 20)]
    pub batch_size: usize,
    #[arg(short, long)]
    pub output: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct FrftArgs {
    /// Field as CSV (one column per 1-D field, a grid for 2-D) or NODF.
    #[arg(long)]
    pub input: PathBuf,
    /// Sample of a NODF file.
    #[arg(long, default_value_t = 0)]
    pub index: usize,
    /// Channel of a NODF sample.
    #[arg(long, default_value_t = 0)]
    pub channel: usize,
    /// Use the output field of a NODF sample.
    #[arg(long)]
    pub target: bool,
    #[arg(long, value_delimiter = ',', required = true, allow_negative_numbers = true)]
    pub order: Vec<f64>,
    /// Axes to transform; all by default.
    #[arg(long, value_delimiter = ',')]
    pub axes: Vec<usize>,
    /// Output prefix; files are `<prefix>_a<order>_magnitude.csv` and
    /// `<prefix>_a<order>_phase.csv`.
    #[arg(short, long, default_value = "frft")]
    pub output: String,
}

#[derive(Args, Debug)]
pub struct InspectArgs {
    pub path: PathBuf,
    /// Export one sample of a dataset as CSV.
    #[arg(long)]
    pub export: Option<usize>,
    /// Export the output field instead of the input.
    #[arg(long)]
    pub target: bool,
    #[arg(short, long)]
    pub output: Option<PathBuf>,
}

pub fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Gen(a) => cmd_gen(a, cli.threads),
        Command::Train(a) => cmd_train(a, cli.threads),
        Command::Eval(a) => cmd_eval(a, cli.threads),
        Command::Frft(a) => cmd_frft(a),
        Command::Inspect(a) => cmd_inspect(a),
    }
}

/// Writes to stdout, ignoring a closed pipe.
fn emit(text: &str) {
    let _ = std::io::stdout().write_all(text.as_bytes());
}

fn overrides(set: &[String]) -> Result<Vec<(String, String)>> {
    set.iter().map(|s| config::parse_override(s)).collect()
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(Error::io(path))
}

fn gen_settings(a: &GenArgs) -> Result<GenSettings> {
    let mut s = match &a.config {
        Some(p) => GenSettings::from_pairs(&config::read_pairs(p)?)?,
        None => GenSettings { task: String::new(), n: 0, grid: 0, seed: 0, extra: Vec::new() },
    };
    if let Some(t) = a.task {
        s.task = t.name().to_string();
    }
    if let Some(n) = a.n {
        s.n = n;
    }
    if let Some(g) = a.grid {
        s.grid = g;
    }
    if let Some(seed) = a.seed {
        s.seed = seed;
    }
    for (k, v) in overrides(&a.set)? {
        s.set_extra(&k, &v);
    }
    if s.task.is_empty() {
        return Err(Error::Usage("no task given".into()));
    }
    if s.n == 0 || s.grid == 0 {
        return Err(Error::Usage("--n and --grid must be positive".into()));
    }
    Ok(s)
}

const GEN_KEYS: &[(&str, &[&str])] = &[
    ("heat1d", &["t_final", "diffusivity", "sigma", "tau", "exponent", "max_mode"]),
    ("burgers1d", &["t_final", "viscosity", "cfl", "sigma", "tau", "exponent", "max_mode"]),
    ("darcy2d", &["contrast", "beta", "sigma", "tau", "exponent", "max_mode"]),
    ("chirp", &["rate_min", "rate_max", "order", "cutoff", "chirps"]),
];

/// Runs the generator a settings record describes.
pub fn generate(s: &GenSettings) -> Result<Dataset> {
    let allowed = GEN_KEYS
        .iter()
        .find(|(t, _)| *t == s.task)
        .ok_or_else(|| Error::Usage(format!("unknown task `{}`", s.task)))?
        .1;
    if let Some((k, _)) = s.extra.iter().find(|(k, _)| !allowed.contains(&k.as_str())) {
        return Err(Error::Usage(format!("`{k}` is not a {} parameter", s.task)));
    }
    if s.grid < 8 {
        return Err(Error::Usage(format!("grid must be at least 8, got {}", s.grid)));
    }
    let grf = |mut g: crate::grf::GrfSpec| -> Result<crate::grf::GrfSpec> {
        if let Some(v) = s.get("sigma")? {
            g.sigma = v;
        }
        if let Some(v) = s.get("tau")? {
            g.tau = v;
        }
        if let Some(v) = s.get("exponent")? {
            g.exponent = v;
        }
        if let Some(v) = s.get("max_mode")? {
            g.max_mode = v;
        }
        Ok(g)
    };
    match s.task.as_str() {
        "heat1d" => {
            let d = HeatParams::default();
            let p = HeatParams {
                t_final: s.get("t_final")?.unwrap_or(d.t_final),
                diffusivity: s.get("diffusivity")?.unwrap_or(d.diffusivity),
                grf: grf(d.grf)?,
            };
            pdedata::gen_heat1d(s.n, s.grid, &p, s.seed)
        }
        "burgers1d" => {
            let d = BurgersParams::default();
            let p = BurgersParams {
                t_final: s.get("t_final")?.unwrap_or(d.t_final),
                viscosity: s.get("viscosity")?.unwrap_or(d.viscosity),
                cfl: s.get("cfl")?.unwrap_or(d.cfl),
                grf: grf(d.grf)?,
            };
            pdedata::gen_burgers1d(s.n, s.grid, &p, s.seed)
        }
        "darcy2d" => {
            let d = DarcyParams::default();
            let p = DarcyParams {
                contrast: s.get("contrast")?.unwrap_or(d.contrast),
                beta: s.get("beta")?.unwrap_or(d.beta),
                grf: grf(d.grf)?,
            };
            pdedata::gen_darcy2d(s.n, s.grid, &p, s.seed)
        }
        _ => {
            let d = ChirpParams::default();
            let p = ChirpParams {
                rate_range: (s.get("rate_min")?.unwrap_or(d.rate_range.0), s.get("rate_max")?.unwrap_or(d.rate_range.1)),
                order: s.get("order")?.unwrap_or(d.order),
                cutoff: s.get("cutoff")?.unwrap_or(d.cutoff),
                chirps: s.get("chirps")?.unwrap_or(d.chirps),
            };
            pdedata::gen_chirp_operator(s.n, s.grid, &p, s.seed)
        }
    }
}

fn cmd_gen(a: GenArgs, threads: usize) -> Result<()> {
    let started = config::unix_now();
    let s = gen_settings(&a)?;
    let out = a.output.clone().unwrap_or_else(|| PathBuf::from(format!("{}.nodf", s.task)));
    let pool = Pool::new(threads)?;
    let data = pool.install(|| generate(&s))?;
    data.write(&out)?;
    let manifest = RunManifest {
        command: "gen".into(),
        config_path: a.config.as_ref().map(|p| p.display().to_string()),
        settings: s.to_pairs(),
        artifacts: vec![("dataset".into(), out.display().to_string())],
        started_unix: started,
        finished_unix: config::unix_now(),
        threads,
    };
    manifest.write(&manifest_path_for(&out))?;
    println!(
        "{}: {} {} samples, input {:?}, output {:?}, seed {}",
        out.display(),
        s.task,
        data.len(),
        data.input_shape,
        data.output_shape,
        s.seed
    );
    Ok(())
}

/// `<file>.manifest.txt` beside a generated file.
pub fn manifest_path_for(out: &Path) -> PathBuf {
    let mut name = out.file_name().map(|n| n.to_os_string()).unwrap_or_default();
    name.push(".manifest.txt");
    out.with_file_name(name)
}

fn train_settings(a: &TrainArgs) -> Result<TrainSettings> {
    let mut s = TrainSettings::default();
    if let Some(p) = &a.config {
        s.apply(&config::read_pairs(p)?)?;
    }
    s.apply(&overrides(&a.set)?)?;
    if let Some(d) = &a.data {
        s.data = Some(d.display().to_string());
    }
    if let Some(d) = &a.test_data {
        s.test_data = Some(d.display().to_string());
    }
    if let Some(e) = a.epochs {
        s.train.epochs = e;
    }
    if let Some(seed) = a.seed {
        s.train.seed = seed;
    }
    if let Some(v) = &a.ablation {
        s.set("ablation", v)?;
    }
    if let Some(v) = &a.arch {
        s.set("arch", v)?;
    }
    Ok(s)
}

fn cmd_train(a: TrainArgs, threads: usize) -> Result<()> {
    let started = config::unix_now();
    let clock = Instant::now();
    let mut s = train_settings(&a)?;
    let data_path = s.data.clone().ok_or_else(|| Error::Usage("no dataset: pass --data".into()))?;
    let data = Dataset::read(Path::new(&data_path))?;
    let test = s.test_data.as_ref().map(|p| Dataset::read(Path::new(p))).transpose()?;
    protocols::resolve_shapes(&mut s, &data)?;
    s.model.validate()?;
    s.train.validate()?;
    fs::create_dir_all(&a.out).map_err(Error::io(&a.out))?;

    let pool = Pool::new(threads)?;
    let mut rows = Vec::new();
    let mut timing = String::from("epoch,wall_seconds\n");
    let quiet = a.quiet;
    let result = protocols::run(&s, &data, test.as_ref(), &pool, &mut |row| {
        let t = clock.elapsed().as_secs_f64();
        timing.push_str(&format!("{},{t}\n", row.epoch));
        if !quiet {
            eprintln!(
                "epoch {:>4}  train {:.6}  test {:.6}  lr {:e}",
                row.epoch, row.train_rel_l2, row.test_rel_l2, row.lr
            );
        }
        rows.push(row.clone());
    });
    let metrics_path = a.out.join("metrics.csv");
    let timing_path = a.out.join("timing.csv");
    let run = match result {
        Ok(r) => r,
        Err(e) => {
            // keep what was logged before the failure
            let names = protocols::build_model(&s).map(|m| m.orders().into_iter().map(|(n, _)| n).collect()).unwrap_or_default();
            write_text(&metrics_path, &MetricsLog { order_names: names, rows }.to_csv())?;
            write_text(&timing_path, &timing)?;
            return Err(e);
        }
    };
    let best_path = a.out.join("best.ckpt");
    let final_path = a.out.join("final.ckpt");
    checkpoint::save(&best_path, run.model.config(), &run.outcome.best)?;
    checkpoint::save(&final_path, run.model.config(), run.model.params())?;
    write_text(&metrics_path, &run.outcome.log.to_csv())?;
    write_text(&timing_path, &timing)?;
    let manifest = RunManifest {
        command: "train".into(),
        config_path: a.config.as_ref().map(|p| p.display().to_string()),
        settings: s.to_pairs(),
        artifacts: vec![
            ("best_checkpoint".into(), best_path.display().to_string()),
            ("final_checkpoint".into(), final_path.display().to_string()),
            ("metrics".into(), metrics_path.display().to_string()),
            ("timing".into(), timing_path.display().to_string()),
        ],
        started_unix: started,
        finished_unix: config::unix_now(),
        threads,
    };
    manifest.write(&a.out.join(MANIFEST_FILE))?;
    let last = run.outcome.log.last().expect("at least one epoch");
    let best = &run.outcome.log.rows[run.outcome.best_epoch];
    println!(
        "trained {} epochs: final test rel_l2 {}, best {} at epoch {}",
        run.outcome.log.rows.len(),
        last.test_rel_l2,
        best.test_rel_l2,
        run.outcome.best_epoch
    );
    Ok(())
}

fn load_samples(path: &Path, holdout: bool) -> Result<(Dataset, Samples)> {
    let d = Dataset::read(path)?;
    let s = d.samples()?;
    let s = if holdout { s.split_final_sixth()?.1 } else { s };
    Ok((d, s))
}

fn sweep_base(model: &fracop_core::ConoModel, a: &EvalArgs) -> Result<TrainSettings> {
    let mut s = TrainSettings::default();
    s.apply(&checkpoint::config_pairs(model.config()))?;
    if let Some(p) = &a.config {
        s.apply(&config::read_pairs(p)?)?;
    }
    s.apply(&overrides(&a.set)?)?;
    if let Some(e) = a.epochs {
        s.train.epochs = e;
    }
    Ok(s)
}

fn cmd_eval(a: EvalArgs, threads: usize) -> Result<()> {
    let mut model = checkpoint::load(&a.checkpoint)?;
    let batch = a.batch_size.max(1);
    let csv = match a.protocol {
        Protocol::Test => {
            if a.data.is_empty() {
                return Err(Error::Usage("--data is required".into()));
            }
            let mut out = String::from("dataset,rel_l2\n");
            for p in &a.data {
                let (d, s) = load_samples(p, a.holdout)?;
                protocols::check_compatible(&model, &d)?;
                let e = protocols::evaluate_dataset(&mut model, &s, batch)?;
                out.push_str(&format!("{},{e}\n", p.display()));
            }
            out
        }
        Protocol::Resolution => {
            let mut sets = Vec::new();
            if let Some(task) = a.task {
                if a.res.is_empty() {
                    return Err(Error::Usage("--res is required with --task".into()));
                }
                for &r in &a.res {
                    let g = GenSettings { task: task.name().into(), n: a.n, grid: r, seed: a.seed, extra: overrides(&a.set)? };
                    let d = generate(&g)?;
                    protocols::check_compatible(&model, &d)?;
                    let s = d.samples()?;
                    sets.push((r, if a.holdout { s.split_final_sixth()?.1 } else { s }));
                }
            } else {
                if a.data.is_empty() {
                    return Err(Error::Usage("pass --data files or --task with --res".into()));
                }
                for p in &a.data {
                    let (d, s) = load_samples(p, a.holdout)?;
                    protocols::check_compatible(&model, &d)?;
                    sets.push((d.input_shape[0], s));
                }
            }
            protocols::resolution_csv(&protocols::protocol_resolution(&mut model, &sets, batch)?)?
        }
        Protocol::Noise | Protocol::DataRatio | Protocol::Ablation => {
            let path = a.data.first().ok_or_else(|| Error::Usage("--data is required".into()))?;
            let data = Dataset::read(path)?;
            protocols::check_compatible(&model, &data)?;
            let test = a.test_data.as_ref().map(|p| Dataset::read(p)).transpose()?;
            let settings: Vec<Setting> = match a.protocol {
                Protocol::Noise => a.gamma.iter().map(|&g| Setting::Noise(g)).collect(),
                Protocol::DataRatio => a.ratio.iter().map(|&r| Setting::Ratio(r)).collect(),
                _ => a
                    .variants
                    .iter()
                    .map(|v| match v.as_str() {
                        "full" => Ok(Setting::Ablation(None)),
                        v => Ok(Setting::Ablation(Some(v.parse::<Variant>()?))),
                    })
                    .collect::<Result<_>>()?,
            };
            if settings.is_empty() {
                return Err(Error::Usage("empty settings grid (--gamma, --ratio or --variants)".into()));
            }
            let base = sweep_base(&model, &a)?;
            let pool = Pool::new(threads)?;
            let rows = protocols::protocol_sweep(&base, &data, test.as_ref(), &settings, &a.seeds, &pool, &mut |r| {
                eprintln!("{} {} seed {}: {}", r.setting.protocol(), r.setting.label(), r.seed, r.final_test_rel_l2)
            })?;
            protocols::sweep_csv(&rows)?
        }
    };
    emit(&csv);
    if let Some(o) = &a.output {
        write_text(o, &csv)?;
    }
    Ok(())
}

/// A single real field from CSV: one column is a 1-D field, several
/// columns a 2-D grid.
pub fn read_field_csv(path: &Path) -> Result<CTensor> {
    let text = fs::read_to_string(path).map_err(Error::io(path))?;
    let mut reader = csv::ReaderBuilder::new().has_headers(false).from_reader(text.as_bytes());
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (i, rec) in reader.records().enumerate() {
        let rec = rec.map_err(|e| Error::Usage(format!("{}: {e}", path.display())))?;
        let row = rec
            .iter()
            .map(|c| c.trim().parse::<f64>())
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|_| Error::Usage(format!("{}: row {} is not numeric", path.display(), i + 1)))?;
        rows.push(row);
    }
    let cols = rows.first().map_or(0, Vec::len);
    if rows.is_empty() || cols == 0 || rows.iter().any(|r| r.len() != cols) || rows.iter().flatten().any(|v| !v.is_finite()) {
        return Err(Error::Usage(format!("{}: not a rectangular numeric field", path.display())));
    }
    let values: Vec<f64> = rows.concat();
    let shape = if cols == 1 { vec![rows.len()] } else { vec![rows.len(), cols] };
    Ok(CTensor::from_real(&shape, &values)?)
}

fn field_from_nodf(path: &Path, index: usize, channel: usize, target: bool) -> Result<CTensor> {
    let d = Dataset::read(path)?;
    let (shape, data) = if target { (&d.output_shape, &d.outputs) } else { (&d.input_shape, &d.inputs) };
    let channels = *shape.last().expect("non-empty shape");
    if index >= d.len() || channel >= channels {
        return Err(Error::Usage(format!("sample {index} channel {channel} not in {}", path.display())));
    }
    let per: usize = shape.iter().product();
    let field: Vec<C64> = data[index * per..(index + 1) * per].iter().skip(channel).step_by(channels).copied().collect();
    Ok(CTensor::new(shape[..shape.len() - 1].to_vec(), field)?)
}

fn grid_csv(t: &CTensor, f: impl Fn(C64) -> f64) -> String {
    let cols = if t.rank() == 2 { t.shape()[1] } else { 1 };
    t.data()
        .chunks(cols)
        .map(|row| row.iter().map(|&z| f(z).to_string()).collect::<Vec<_>>().join(",") + "\n")
        .collect()
}

fn cmd_frft(a: FrftArgs) -> Result<()> {
    let is_nodf = fs::read(&a.input).map_err(Error::io(&a.input))?.starts_with(crate::nodf::MAGIC);
    let field = if is_nodf {
        field_from_nodf(&a.input, a.index, a.channel, a.target)?
    } else {
        read_field_csv(&a.input)?
    };
    let axes: Vec<usize> = if a.axes.is_empty() { (0..field.rank()).collect() } else { a.axes.clone() };
    if axes.iter().any(|&ax| ax >= field.rank()) {
        return Err(Error::Usage(format!("axes {axes:?} out of range for a {}-D field", field.rank())));
    }
    let mut cache = PlanCache::new();
    for &ax in &axes {
        let n = field.shape()[ax];
        if cache.get(n).is_none() {
            let plan = match plancache::cache_dir() {
                Some(dir) => plancache::load_or_build(&dir, n)?,
                None => FrftPlan::new(n)?,
            };
            cache.insert(plan);
        }
    }
    for &order in &a.order {
        if !order.is_finite() {
            return Err(Error::Usage(format!("order {order} is not finite")));
        }
        let orders = vec![FracOrder(order); axes.len()];
        let y = frft(&field, &axes, &orders, &mut cache)?;
        let stem = format!("{}_a{order}", a.output);
        let mag = PathBuf::from(format!("{stem}_magnitude.csv"));
        let phase = PathBuf::from(format!("{stem}_phase.csv"));
        write_text(&mag, &grid_csv(&y, |z| z.norm()))?;
        write_text(&phase, &grid_csv(&y, |z| z.arg()))?;
        println!("order {order}: {} {}", mag.display(), phase.display());
    }
    Ok(())
}

fn cmd_inspect(a: InspectArgs) -> Result<()> {
    let bytes = fs::read(&a.path).map_err(Error::io(&a.path))?;
    let mut out = String::new();
    if bytes.starts_with(crate::nodf::MAGIC) {
        let d = Dataset::decode(&bytes)?;
        let _ = writeln!(out, "kind: dataset");
        let _ = writeln!(out, "version: {}", crate::nodf::VERSION);
        let _ = writeln!(out, "dtype: {:?}", d.dtype);
        let _ = writeln!(out, "samples: {}", d.len());
        let _ = writeln!(out, "input_shape: {:?}", d.input_shape);
        let _ = writeln!(out, "output_shape: {:?}", d.output_shape);
        let _ = writeln!(out, "bytes: {}", bytes.len());
        let _ = writeln!(out, "input_std: {}", d.input_std());
        if let Some(i) = a.export {
            let csv = d.field_csv(i, a.target)?;
            match &a.output {
                Some(o) => write_text(o, &csv)?,
                None => out.push_str(&csv),
            }
        }
        emit(&out);
        return Ok(());
    }
    if a.export.is_some() {
        return Err(Error::Usage("--export needs a dataset".into()));
    }
    if bytes.starts_with(checkpoint::MAGIC) {
        let m = checkpoint::decode(&bytes)?;
        let _ = writeln!(out, "kind: checkpoint");
        let _ = writeln!(out, "version: {}", checkpoint::VERSION);
        for (k, v) in checkpoint::config_pairs(m.config()) {
            let _ = writeln!(out, "{k}: {v}");
        }
        let _ = writeln!(out, "tensors: {}", m.params().len());
        let _ = writeln!(out, "trainable_scalars: {}", m.params().scalar_count());
        for (name, value) in m.orders() {
            let _ = writeln!(out, "{name}: {value}");
        }
        emit(&out);
        return Ok(());
    }
    let plan = plancache::decode_plan(&bytes).map_err(|_| Error::Format(format!("{}: unrecognised file", a.path.display())))?;
    let _ = writeln!(out, "kind: frft plan");
    let _ = writeln!(out, "n: {}", plan.n());
    let _ = writeln!(out, "stencil_half_width: {}", plan.stencil_half_width());
    let _ = writeln!(out, "orthonormality_error: {:e}", plan.orthonormality_error());
    emit(&out);
    Ok(())
}

/// Entry point: parses arguments, runs, and maps errors to exit codes.
pub fn main() -> i32 {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match run(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
