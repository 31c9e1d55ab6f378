//! The `sqd-unwrap` command line: `gen`, `train`, `unwrap` and `compare`.
//!
//! Exit codes are 0 on success, 1 for user errors (bad flags, unreadable or
//! inconsistent inputs) and 2 for internal failures.

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::datagen::{generate_dataset, load_dataset, split_indices, DatasetManifest, GenConfig};
use crate::error::{Error, Result};
use crate::losses::{LossKind, Pooling};
use crate::network::{ArchConfig, Network};
use crate::phase::{congruence_fraction, nrmse_offset_corrected, PhaseImage, WrappedImage, DEFAULT_CONGRUENCE_TOL};
use crate::qgpu::qgpu_unwrap;
use crate::training::{evaluate_timed, predict, train_on, MetricsReport, Method, TrainConfig, TrainHistory};

/// Environment variable that caps the worker thread count.
pub const THREADS_ENV: &str = "SQD_THREADS";

#[derive(Debug, Parser)]
#[command(name = "sqd-unwrap", version, about = "Learned and classical 2-D phase unwrapping")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic wrapped/true phase dataset.
    Gen(GenArgs),
    /// Train the network on a dataset.
    Train(TrainArgs),
    /// Unwrap a single image with a trained model or the quality-guided baseline.
    Unwrap(UnwrapArgs),
    /// Score several methods on a dataset and write comparison reports.
    Compare(CompareArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Preset {
    /// Default surface statistics zoomed to the requested size.
    Full,
    /// Smoother low-fringe surfaces for desk-scale experiments.
    Toy,
}

#[derive(Debug, Clone, Args)]
pub struct GenArgs {
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 6000)]
    pub count: usize,
    /// Image side in pixels.
    #[arg(long, default_value_t = 256)]
    pub size: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Comma-separated SNR levels in dB, e.g. 0,5,10,20,60. Omit for noise-free data.
    #[arg(long, value_delimiter = ',')]
    pub noise: Vec<f64>,
    #[arg(long, value_enum, default_value_t = Preset::Full)]
    pub preset: Preset,
    /// Network stages the data must support (size must divide by 2^stages).
    /// Defaults to 4 for the full preset and 3 for the toy preset.
    #[arg(long)]
    pub stages: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ArchPreset {
    /// Four stages, filters 32/64/128/256.
    Full,
    /// Three stages, filters 16/32/64.
    Toy,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum PoolingArg {
    Joint,
    PerImage,
}

#[derive(Debug, Clone, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub data: PathBuf,
    /// Directory for the checkpoint and history files.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, value_enum, default_value_t = ArchPreset::Full)]
    pub arch: ArchPreset,
    /// Build the plain U-Net without the SQD-LSTM bottleneck.
    #[arg(long)]
    pub no_sqd: bool,
    /// `lc` (variance + total variation) or `mse`.
    #[arg(long, default_value = "lc")]
    pub loss: LossKind,
    #[arg(long, value_enum, default_value_t = PoolingArg::Joint)]
    pub pooling: PoolingArg,
    #[arg(long, default_value_t = 1e-3)]
    pub lr: f64,
    #[arg(long, default_value_t = 8)]
    pub batch_size: usize,
    #[arg(long, default_value_t = 10)]
    pub epochs: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Images held out for testing (default: one sixth of the dataset).
    #[arg(long)]
    pub test_count: Option<usize>,
    /// Suppress per-epoch progress lines.
    #[arg(long)]
    pub quiet: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum UnwrapMethod {
    Model,
    Qgpu,
}

#[derive(Debug, Clone, Args)]
pub struct UnwrapArgs {
    /// Wrapped image as JSON (`{"height", "width", "values"}`).
    #[arg(long, conflicts_with_all = ["data", "index"])]
    pub input: Option<PathBuf>,
    /// Dataset directory to take the image from (with `--index`).
    #[arg(long, requires = "index")]
    pub data: Option<PathBuf>,
    #[arg(long)]
    pub index: Option<usize>,
    #[arg(long, value_enum)]
    pub method: UnwrapMethod,
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    /// Where to write the unwrapped phase as JSON.
    #[arg(long)]
    pub out: PathBuf,
    /// Optional 16-bit PGM rendering (min/max recorded in `<file>.json`).
    #[arg(long)]
    pub export: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct CompareArgs {
    #[arg(long)]
    pub data: PathBuf,
    /// Output directory for report.json, report.txt, sweep.csv and timing.json.
    #[arg(long)]
    pub out: PathBuf,
    /// Built-in methods: identity, qgpu, oracle.
    #[arg(long, value_delimiter = ',', default_value = "identity,qgpu")]
    pub methods: Vec<String>,
    /// Trained model to include, as NAME=CHECKPOINT. Repeatable.
    #[arg(long = "model")]
    pub models: Vec<String>,
    /// Evaluate the held-out split of this size (as used by `train`)
    /// instead of the whole dataset.
    #[arg(long)]
    pub test_count: Option<usize>,
    /// Split seed; must match the training seed to reuse its test split.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

/// Parses `args` and runs the command, returning the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    configure_threads();
    match dispatch(cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            if e.is_user_error() {
                1
            } else {
                2
            }
        }
    }
}

/// Applies the thread cap from [`THREADS_ENV`] if it is set.
pub fn configure_threads() {
    if let Some(n) = std::env::var(THREADS_ENV).ok().and_then(|v| v.parse::<usize>().ok()) {
        // A second call in the same process keeps the first pool.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n.max(1)).build_global();
    }
}

fn dispatch(cmd: Command) -> Result<()> {
    match cmd {
        Command::Gen(a) => {
            let m = cmd_gen(&a)?;
            println!("{}", manifest_summary(&m, &a.out));
        }
        Command::Train(a) => {
            let out = cmd_train(&a)?;
            println!("checkpoint: {}", out.checkpoint.display());
            println!("history:    {}", out.history.display());
        }
        Command::Unwrap(a) => {
            let s = cmd_unwrap(&a)?;
            println!("congruence fraction: {:.6}", s.congruence);
            if let Some(n) = s.nrmse_pct {
                println!("nrmse (offset corrected): {n:.6}%");
            }
        }
        Command::Compare(a) => {
            let r = cmd_compare(&a)?;
            print!("{}", render_table(&r, None));
        }
    }
    Ok(())
}

fn gen_config(a: &GenArgs) -> Result<GenConfig> {
    let base = match a.preset {
        Preset::Full => GenConfig::for_size(a.size),
        Preset::Toy => GenConfig {
            image_size: a.size,
            ..GenConfig::toy()
        },
    };
    let stages = a.stages.unwrap_or(match a.preset {
        Preset::Full => 4,
        Preset::Toy => 3,
    });
    let f = 1usize << stages;
    if !a.size.is_multiple_of(f) {
        return Err(Error::Config(format!(
            "--size {} must be divisible by 2^{stages} = {f}; try {}",
            a.size,
            (a.size / f).max(1) * f
        )));
    }
    let cfg = GenConfig {
        count: a.count,
        seed: a.seed,
        noise_menu: a.noise.clone(),
        ..base
    };
    cfg.validate()?;
    Ok(cfg)
}

pub fn cmd_gen(a: &GenArgs) -> Result<DatasetManifest> {
    generate_dataset(&gen_config(a)?, &a.out)
}

fn manifest_summary(m: &DatasetManifest, dir: &Path) -> String {
    let mut s = format!(
        "wrote {} images of {}x{} to {}\n",
        m.count,
        m.height,
        m.width,
        dir.display()
    );
    let mut counts: BTreeMap<String, usize> = BTreeMap::new();
    for r in &m.records {
        *counts.entry(snr_label(r.snr_db)).or_default() += 1;
    }
    for (k, v) in counts {
        let _ = writeln!(s, "  snr {k:>5}: {v} images");
    }
    s
}

fn snr_label(snr: Option<f64>) -> String {
    snr.map_or_else(|| "inf".to_string(), |v| format!("{v}"))
}

/// Paths written by [`cmd_train`].
#[derive(Debug, Clone)]
pub struct TrainFiles {
    pub checkpoint: PathBuf,
    pub history: PathBuf,
    pub timing: PathBuf,
}

/// File tag combining architecture and loss, e.g. `sqd_lc` or `unet_mse`.
pub fn run_tag(use_sqd: bool, loss: LossKind) -> String {
    format!("{}_{}", if use_sqd { "sqd" } else { "unet" }, loss.name())
}

pub fn cmd_train(a: &TrainArgs) -> Result<TrainFiles> {
    let ds = load_dataset(&a.data)?;
    let arch = ArchConfig {
        use_sqd: !a.no_sqd,
        ..match a.arch {
            ArchPreset::Full => ArchConfig::default(),
            ArchPreset::Toy => ArchConfig::toy(),
        }
    };
    let cfg = TrainConfig {
        arch,
        loss: a.loss,
        pooling: match a.pooling {
            PoolingArg::Joint => Pooling::Joint,
            PoolingArg::PerImage => Pooling::PerImage,
        },
        lr: a.lr,
        batch_size: a.batch_size,
        epochs: a.epochs,
        seed: a.seed,
        test_count: a.test_count.unwrap_or(ds.len() / 6),
        ..TrainConfig::new(&a.data)
    };
    let quiet = a.quiet;
    let outcome = train_on(&ds, &cfg, |r| {
        if !quiet {
            eprintln!(
                "epoch {:>3}  loss {:.5}  test nrmse {:.3}%",
                r.epoch, r.train_loss, r.test_nrmse_pct
            );
        }
    })?;
    fs::create_dir_all(&a.out).map_err(|e| Error::io(format!("creating {}", a.out.display()), e))?;
    let tag = run_tag(cfg.arch.use_sqd, cfg.loss);
    let files = TrainFiles {
        checkpoint: a.out.join(format!("model_{tag}.ckpt")),
        history: a.out.join(format!("history_{tag}.json")),
        timing: a.out.join(format!("timing_{tag}.json")),
    };
    outcome.model.save(&files.checkpoint)?;
    write_json(&files.history, &outcome.history)?;
    write_json(
        &files.timing,
        &serde_json::json!({ "epoch_seconds": outcome.epoch_seconds }),
    )?;
    Ok(files)
}

/// Result of [`cmd_unwrap`].
#[derive(Debug, Clone)]
pub struct UnwrapSummary {
    pub congruence: f64,
    /// Only available when the image came from a dataset.
    pub nrmse_pct: Option<f64>,
    pub output: PhaseImage,
}

pub fn cmd_unwrap(a: &UnwrapArgs) -> Result<UnwrapSummary> {
    let (wrapped, truth) = match (&a.input, &a.data, a.index) {
        (Some(p), _, _) => (read_wrapped(p)?, None),
        (None, Some(d), Some(i)) => {
            let ds = load_dataset(d)?;
            if i >= ds.len() {
                return Err(Error::InvalidInput(format!("index {i} out of range (dataset has {})", ds.len())));
            }
            (ds.wrapped(i)?, Some(ds.truth(i)?))
        }
        _ => return Err(Error::Config("give --input FILE or --data DIR --index N".into())),
    };
    let output = match a.method {
        UnwrapMethod::Qgpu => qgpu_unwrap(&wrapped)?,
        UnwrapMethod::Model => {
            let ckpt = a
                .checkpoint
                .as_ref()
                .ok_or_else(|| Error::Config("--method model needs --checkpoint".into()))?;
            let mut net = Network::<f32>::load(ckpt)?;
            predict(&mut net, &wrapped)?
        }
    };
    let congruence = congruence_fraction(&output, &wrapped, DEFAULT_CONGRUENCE_TOL)?;
    let nrmse_pct = truth.map(|t| nrmse_offset_corrected(&output, &t)).transpose()?;
    write_json(&a.out, &output)?;
    if let Some(p) = &a.export {
        export_pgm(&output, p)?;
    }
    Ok(UnwrapSummary {
        congruence,
        nrmse_pct,
        output,
    })
}

/// Sidecar written next to a PGM export.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PgmSidecar {
    pub min: f64,
    pub max: f64,
    pub maxval: u16,
    pub mapping: String,
}

/// Writes a 16-bit binary PGM. Pixel `p` encodes
/// `min + p / 65535 · (max − min)`; a constant image renders as all zeros.
pub fn export_pgm(img: &PhaseImage, path: &Path) -> Result<PgmSidecar> {
    let (h, w) = img.dims();
    let (min, max) = (img.min(), img.max());
    let span = max - min;
    let mut bytes = format!("P5\n{w} {h}\n65535\n").into_bytes();
    for &v in img.values() {
        let p = if span > 0.0 {
            ((v - min) / span * 65535.0).round().clamp(0.0, 65535.0) as u16
        } else {
            0
        };
        bytes.extend_from_slice(&p.to_be_bytes());
    }
    fs::write(path, bytes).map_err(|e| Error::io(format!("writing {}", path.display()), e))?;
    let sidecar = PgmSidecar {
        min,
        max,
        maxval: 65535,
        mapping: "value = min + pixel / 65535 * (max - min)".into(),
    };
    let mut side = path.as_os_str().to_owned();
    side.push(".json");
    write_json(Path::new(&side), &sidecar)?;
    Ok(sidecar)
}

/// Reference figures at full scale (256×256, 5000 training images), in
/// percent NRMSE, shown beside the desk-scale results.
pub const REFERENCE_FULL_SCALE: [(&str, Option<f64>, Option<f64>); 5] = [
    ("unet (mse)", Some(14.24), None),
    ("unet (lc)", Some(2.75), None),
    ("qgpu", Some(1e-13), Some(5.04)),
    ("sqd-lstm", Some(0.84), Some(0.90)),
    ("sqd-lstm at 0 dB", None, Some(1.26)),
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReferenceRow {
    pub method: String,
    pub noise_free_nrmse_pct: Option<f64>,
    pub noisy_nrmse_pct: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub tool: String,
    pub version: String,
    /// Flags that determine the report, echoed back.
    pub config: serde_json::Value,
    /// SHA-256 of every input file, keyed by role.
    pub artifacts: BTreeMap<String, String>,
    /// All scores are NRMSE in percent after removing the best global offset.
    pub methods: Vec<MetricsReport>,
    pub reference_full_scale: Vec<ReferenceRow>,
}

pub fn sha256_file(path: &Path) -> Result<String> {
    let bytes = fs::read(path).map_err(|e| Error::io(format!("reading {}", path.display()), e))?;
    Ok(hex(&Sha256::digest(&bytes)))
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().fold(String::new(), |mut s, b| {
        let _ = write!(s, "{b:02x}");
        s
    })
}

pub fn cmd_compare(a: &CompareArgs) -> Result<RunReport> {
    let ds = load_dataset(&a.data)?;
    let indices: Vec<usize> = match a.test_count {
        Some(t) => split_indices(ds.len(), t, a.seed)?.test,
        None => (0..ds.len()).collect(),
    };
    let mut artifacts = BTreeMap::new();
    for f in [crate::datagen::MANIFEST_FILE, crate::datagen::WRAPPED_FILE, crate::datagen::TRUTH_FILE] {
        artifacts.insert(format!("dataset/{f}"), sha256_file(&a.data.join(f))?);
    }
    let mut methods = Vec::new();
    let mut timing = BTreeMap::new();
    for name in &a.methods {
        let method = match name.as_str() {
            "identity" => Method::Identity,
            "qgpu" => Method::Qgpu,
            "oracle" => Method::Oracle,
            other => {
                return Err(Error::Config(format!(
                    "unknown method '{other}' (built-ins: identity, qgpu, oracle; use --model for networks)"
                )))
            }
        };
        let (r, secs) = evaluate_timed(method, &ds, &indices)?;
        timing.insert(name.clone(), secs);
        methods.push(r);
    }
    for spec in &a.models {
        let (name, path) = spec
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("--model expects NAME=CHECKPOINT, got '{spec}'")))?;
        let path = Path::new(path);
        artifacts.insert(format!("model/{name}"), sha256_file(path)?);
        let mut net = Network::<f32>::load(path)?;
        let (mut r, secs) = evaluate_timed(Method::Model(&mut net), &ds, &indices)?;
        r.method = name.to_string();
        timing.insert(name.to_string(), secs);
        methods.push(r);
    }
    let report = RunReport {
        tool: env!("CARGO_PKG_NAME").into(),
        version: env!("CARGO_PKG_VERSION").into(),
        config: serde_json::json!({
            "methods": a.methods,
            "models": a.models.iter().map(|m| m.split('=').next().unwrap_or(m)).collect::<Vec<_>>(),
            "test_count": a.test_count,
            "seed": a.seed,
            "n_images": indices.len(),
        }),
        artifacts,
        methods,
        reference_full_scale: REFERENCE_FULL_SCALE
            .iter()
            .map(|&(m, a, b)| ReferenceRow {
                method: m.into(),
                noise_free_nrmse_pct: a,
                noisy_nrmse_pct: b,
            })
            .collect(),
    };
    fs::create_dir_all(&a.out).map_err(|e| Error::io(format!("creating {}", a.out.display()), e))?;
    write_json(&a.out.join("report.json"), &report)?;
    write_json(&a.out.join("timing.json"), &serde_json::json!({ "seconds_per_image": timing }))?;
    write_text(&a.out.join("report.txt"), &render_table(&report, Some(&timing)))?;
    write_text(&a.out.join("sweep.csv"), &sweep_csv(&report.methods))?;
    Ok(report)
}

/// Noise sweep rows: `snr_db,method,mean_nrmse_pct,n_images`, noise-free
/// images labelled `inf`.
pub fn sweep_csv(methods: &[MetricsReport]) -> String {
    let mut s = String::from("snr_db,method,mean_nrmse_pct,n_images\n");
    for m in methods {
        for b in &m.buckets {
            let _ = writeln!(s, "{},{},{:.6},{}", snr_label(b.snr_db), m.method, b.mean_nrmse_pct, b.n_images);
        }
    }
    s
}

/// Aligned text table; timings are appended when given.
pub fn render_table(r: &RunReport, timing: Option<&BTreeMap<String, f64>>) -> String {
    let mut snrs: Vec<Option<f64>> = Vec::new();
    for m in &r.methods {
        for b in &m.buckets {
            if !snrs.contains(&b.snr_db) {
                snrs.push(b.snr_db);
            }
        }
    }
    snrs.sort_by(|a, b| match (a, b) {
        (Some(x), Some(y)) => x.total_cmp(y),
        (a, b) => a.is_some().cmp(&b.is_some()),
    });
    let mut s = String::new();
    let _ = write!(s, "{:<14}{:>12}{:>12}{:>12}", "method", "mean %", "median %", "congruent");
    for snr in &snrs {
        let _ = write!(s, "{:>12}", format!("{} dB", snr_label(*snr)));
    }
    if timing.is_some() {
        let _ = write!(s, "{:>14}", "s/image");
    }
    s.push('\n');
    for m in &r.methods {
        let _ = write!(
            s,
            "{:<14}{:>12.4}{:>12.4}{:>12.4}",
            m.method, m.mean_nrmse_pct, m.median_nrmse_pct, m.mean_congruence
        );
        for snr in &snrs {
            match m.buckets.iter().find(|b| b.snr_db == *snr) {
                Some(b) => {
                    let _ = write!(s, "{:>12.4}", b.mean_nrmse_pct);
                }
                None => {
                    let _ = write!(s, "{:>12}", "-");
                }
            }
        }
        if let Some(t) = timing {
            let _ = write!(s, "{:>14.6}", t.get(&m.method).copied().unwrap_or(f64::NAN));
        }
        s.push('\n');
    }
    let _ = writeln!(s, "\nNRMSE in percent of the true range, best global offset removed.");
    let _ = writeln!(s, "Full-scale reference (256x256, 5000 training images):");
    for row in &r.reference_full_scale {
        let f = |v: Option<f64>| v.map_or_else(|| "-".to_string(), |x| format!("{x}%"));
        let _ = writeln!(
            s,
            "  {:<18} noise-free {:>8}  noisy {:>8}",
            row.method,
            f(row.noise_free_nrmse_pct),
            f(row.noisy_nrmse_pct)
        );
    }
    s
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    write_text(path, &text)
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::io(format!("writing {}", path.display()), e))
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(format!("reading {}", path.display()), e))?;
    serde_json::from_str(&text).map_err(|e| Error::InvalidInput(format!("{}: {e}", path.display())))
}

#[derive(Deserialize)]
struct RawImage {
    height: usize,
    width: usize,
    values: Vec<f64>,
}

/// Reads a wrapped image stored as `{"height", "width", "values"}` JSON,
/// checking that every value lies in (-π, π].
pub fn read_wrapped(path: &Path) -> Result<WrappedImage> {
    let raw: RawImage = read_json(path)?;
    WrappedImage::new(raw.height, raw.width, raw.values)
}

/// Reads a training history written by `train`.
pub fn read_history(path: &Path) -> Result<TrainHistory> {
    read_json(path)
}
