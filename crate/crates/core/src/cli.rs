//! Command-line front end.
//!
//! Exit codes: 0 success, 1 I/O or data error, 2 usage error (bad flags,
//! bad config), 3 optimisation diverged.

use std::ffi::OsString;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};
use serde::Deserialize;

use crate::error::Error;
use crate::io::{
    export_comparison, export_slice, load_params, load_volume, load_volume_with_header,
    save_affine, save_ddf, save_volume, StoredParams, VolumeKind,
};
use crate::loss::{dice_score, label_comparison_map, lncc, ssd, LnccConfig, DEFAULT_DICE_SMOOTH};
use crate::optimize::{
    register_affine, register_ddf, warp_with_result, AffineRegConfig, DdfRegConfig, FinalParams,
    ImageLoss, OptimRun, Regularizer, RunConfig,
};
use crate::phantom::{make_phantom, GroundTruth, PhantomSpec, PhantomWarp, SmoothDdfSpec};
use crate::resample::resample;
use crate::transform::{apply_ddf, warp_grid_affine, RandomTransformSpec};
use crate::volume::{reference_grid, AffineParams, Shape3};

pub const EXIT_OK: i32 = 0;
pub const EXIT_IO: i32 = 1;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_DIVERGED: i32 = 3;

#[derive(Debug, Parser)]
#[command(
    name = "volreg",
    version,
    about = "3D affine and DDF image registration"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Write a synthetic phantom pair and the warp relating them.
    Synth(SynthArgs),
    /// Register a moving volume to a fixed one.
    Register(RegisterArgs),
    /// Resample a volume with stored affine or DDF parameters.
    Warp(WarpArgs),
    /// Print a similarity or overlap score between two volumes.
    Eval(EvalArgs),
    /// Write a colour-coded TP/FP/FN/TN slice comparing two label volumes.
    Compare(CompareArgs),
    /// Write one slice of a volume as a greyscale PGM.
    Slice(SliceArgs),
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum WarpSpec {
    Affine(f64),
    Ddf(f64),
}

fn parse_warp(s: &str) -> Result<WarpSpec, String> {
    let (kind, value) = s
        .split_once(':')
        .ok_or_else(|| format!("expected affine:SCALE or ddf:AMPLITUDE, got {s:?}"))?;
    let value: f64 = value
        .parse()
        .map_err(|_| format!("not a number: {value:?}"))?;
    if !(value >= 0.0 && value.is_finite()) {
        return Err(format!(
            "warp magnitude must be finite and >= 0, got {value}"
        ));
    }
    match kind {
        "affine" => Ok(WarpSpec::Affine(value)),
        "ddf" => Ok(WarpSpec::Ddf(value)),
        _ => Err(format!("unknown warp kind {kind:?}; use affine or ddf")),
    }
}

fn parse_shape(s: &str) -> Result<Shape3, String> {
    let dims: Vec<usize> = s
        .split(',')
        .map(|d| d.trim().parse().map_err(|_| format!("bad dimension {d:?}")))
        .collect::<Result<_, _>>()?;
    match *dims.as_slice() {
        [a, b, c] if a >= 3 && b >= 3 && c >= 3 => Ok(Shape3::new(a, b, c)),
        [_, _, _] => Err("every dimension must be at least 3".into()),
        _ => Err(format!("expected D1,D2,D3, got {s:?}")),
    }
}

#[derive(Debug, clap::Args)]
struct SynthArgs {
    #[arg(long, value_parser = parse_shape, default_value = "32,32,32")]
    shape: Shape3,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 5)]
    blobs: usize,
    /// affine:SCALE or ddf:AMPLITUDE (voxels); omitted means no warp.
    #[arg(long, value_parser = parse_warp)]
    warp: Option<WarpSpec>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Mode {
    Affine,
    Ddf,
}

#[derive(Debug, clap::Args)]
struct RegisterArgs {
    #[arg(long, value_enum)]
    mode: Mode,
    #[arg(long)]
    moving: PathBuf,
    #[arg(long)]
    fixed: PathBuf,
    /// JSON file overriding default settings; unknown keys are rejected.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Seed for the initial displacement field (required for ddf mode).
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: PathBuf,
    /// Also warp this label volume with the result.
    #[arg(long)]
    moving_labels: Option<PathBuf>,
}

#[derive(Debug, clap::Args)]
struct WarpArgs {
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    params: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Metric {
    Ssd,
    Lncc,
    Dice,
}

#[derive(Debug, clap::Args)]
struct EvalArgs {
    #[arg(long)]
    a: PathBuf,
    #[arg(long)]
    b: PathBuf,
    #[arg(long, value_enum)]
    metric: Metric,
    #[arg(long, default_value_t = 9)]
    window: usize,
}

#[derive(Debug, clap::Args)]
struct CompareArgs {
    #[arg(long)]
    pred: PathBuf,
    #[arg(long)]
    truth: PathBuf,
    #[arg(long, default_value_t = 0.5)]
    thresh: f64,
    #[arg(long, default_value_t = 2)]
    axis: usize,
    #[arg(long)]
    index: usize,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, clap::Args)]
struct SliceArgs {
    #[arg(long)]
    input: PathBuf,
    #[arg(long, default_value_t = 2)]
    axis: usize,
    #[arg(long)]
    index: usize,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug)]
enum CliError {
    Usage(String),
    Run(Error),
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        CliError::Run(e)
    }
}

impl CliError {
    fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => EXIT_USAGE,
            CliError::Run(Error::Divergence { .. }) => EXIT_DIVERGED,
            CliError::Run(Error::InvalidConfig(_) | Error::IndexOutOfRange { .. }) => EXIT_USAGE,
            CliError::Run(_) => EXIT_IO,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Usage(msg) => write!(f, "{msg}"),
            CliError::Run(e) => write!(f, "{e}"),
        }
    }
}

type CliResult<T> = std::result::Result<T, CliError>;

/// Parses `args` (including the program name) and runs the command,
/// returning the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    let result = match cli.command {
        Command::Synth(a) => cmd_synth(a),
        Command::Register(a) => cmd_register(a),
        Command::Warp(a) => cmd_warp(a),
        Command::Eval(a) => cmd_eval(a),
        Command::Compare(a) => cmd_compare(a),
        Command::Slice(a) => cmd_slice(a),
    };
    match result {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

fn create_dir(dir: &Path) -> CliResult<()> {
    fs::create_dir_all(dir).map_err(|source| {
        Error::Io {
            path: dir.to_path_buf(),
            source,
        }
        .into()
    })
}

fn write_text(path: &Path, text: &str) -> CliResult<()> {
    fs::write(path, text).map_err(|source| {
        Error::Io {
            path: path.to_path_buf(),
            source,
        }
        .into()
    })
}

fn cmd_synth(args: SynthArgs) -> CliResult<()> {
    let warp = match args.warp {
        None => PhantomWarp::None,
        Some(WarpSpec::Affine(scale)) => {
            PhantomWarp::Affine(RandomTransformSpec::new(scale, args.seed)?)
        }
        Some(WarpSpec::Ddf(amplitude)) => PhantomWarp::SmoothDdf(SmoothDdfSpec {
            amplitude,
            components: 3,
            seed: args.seed,
        }),
    };
    let spec = PhantomSpec {
        n_blobs: args.blobs,
        ..PhantomSpec::new(args.shape, args.seed)
    }
    .with_warp(warp);
    let phantom = make_phantom(&spec)?;

    create_dir(&args.out)?;
    let out = &args.out;
    save_volume(
        &out.join("fixed_image"),
        &phantom.fixed_image,
        VolumeKind::Image,
    )?;
    save_volume(
        &out.join("fixed_labels"),
        &phantom.fixed_labels,
        VolumeKind::Label,
    )?;
    save_volume(
        &out.join("moving_image"),
        &phantom.moving_image,
        VolumeKind::Image,
    )?;
    save_volume(
        &out.join("moving_labels"),
        &phantom.moving_labels,
        VolumeKind::Label,
    )?;
    let truth = match &phantom.ground_truth {
        GroundTruth::Identity => {
            save_affine(&out.join("ground_truth.json"), &AffineParams::identity())?;
            "ground_truth.json"
        }
        GroundTruth::Affine(theta) => {
            save_affine(&out.join("ground_truth.json"), theta)?;
            "ground_truth.json"
        }
        GroundTruth::Ddf(field) => {
            save_ddf(&out.join("ground_truth_ddf"), field)?;
            "ground_truth_ddf"
        }
    };
    let [d1, d2, d3] = args.shape.dims();
    println!(
        "synth shape={d1}x{d2}x{d3} seed={} blobs={} out={} files=fixed_image,fixed_labels,moving_image,moving_labels,{truth}",
        args.seed,
        args.blobs,
        out.display()
    );
    Ok(())
}

/// Keys accepted in an affine config file; anything missing keeps its default.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct AffineConfigFile {
    loss: Option<String>,
    lncc_window: Option<usize>,
    lncc_eps: Option<f64>,
    lr: Option<f64>,
    iters: Option<usize>,
    log_every: Option<usize>,
    early_stop: Option<bool>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct DdfConfigFile {
    loss: Option<String>,
    lncc_window: Option<usize>,
    lncc_eps: Option<f64>,
    regularizer: Option<String>,
    weight_deform_loss: Option<f64>,
    lr: Option<f64>,
    iters: Option<usize>,
    ddf_init_std: Option<f64>,
    log_every: Option<usize>,
    early_stop: Option<bool>,
}

fn read_config<T: for<'de> Deserialize<'de> + Default>(path: Option<&Path>) -> CliResult<T> {
    let Some(path) = path else {
        return Ok(T::default());
    };
    let text = fs::read(path).map_err(|e| match e.kind() {
        std::io::ErrorKind::NotFound => Error::MissingFile(path.to_path_buf()),
        _ => Error::Io {
            path: path.to_path_buf(),
            source: e,
        },
    })?;
    serde_json::from_slice(&text)
        .map_err(|e| CliError::Usage(format!("config {}: {e}", path.display())))
}

fn image_loss(
    name: Option<&str>,
    default: ImageLoss,
    window: Option<usize>,
    eps: Option<f64>,
) -> CliResult<ImageLoss> {
    let base = match default {
        ImageLoss::Lncc(cfg) => cfg,
        ImageLoss::Ssd => LnccConfig::default(),
    };
    let lncc_cfg = LnccConfig {
        window: window.unwrap_or(base.window),
        eps: eps.unwrap_or(base.eps),
    };
    match name {
        None => Ok(match default {
            ImageLoss::Ssd => ImageLoss::Ssd,
            ImageLoss::Lncc(_) => ImageLoss::Lncc(lncc_cfg),
        }),
        Some("ssd") => Ok(ImageLoss::Ssd),
        Some("lncc") => Ok(ImageLoss::Lncc(lncc_cfg)),
        Some(other) => Err(CliError::Usage(format!(
            "unknown loss {other:?}; use ssd or lncc"
        ))),
    }
}

fn regularizer(name: Option<&str>) -> CliResult<Regularizer> {
    match name {
        None | Some("bending") => Ok(Regularizer::Bending),
        Some("gradient-l1") => Ok(Regularizer::GradL1),
        Some("gradient-l2") => Ok(Regularizer::GradL2),
        Some(other) => Err(CliError::Usage(format!(
            "unknown regularizer {other:?}; use bending, gradient-l1 or gradient-l2"
        ))),
    }
}

fn affine_config(file: AffineConfigFile) -> CliResult<AffineRegConfig> {
    let d = AffineRegConfig::default();
    Ok(AffineRegConfig {
        loss: image_loss(
            file.loss.as_deref(),
            d.loss,
            file.lncc_window,
            file.lncc_eps,
        )?,
        lr: file.lr.unwrap_or(d.lr),
        iters: file.iters.unwrap_or(d.iters),
        log_every: file.log_every.unwrap_or(d.log_every),
        early_stop: file.early_stop.unwrap_or(d.early_stop),
    })
}

fn ddf_config(file: DdfConfigFile, seed: u64) -> CliResult<DdfRegConfig> {
    let d = DdfRegConfig::with_seed(seed);
    Ok(DdfRegConfig {
        loss: image_loss(
            file.loss.as_deref(),
            d.loss,
            file.lncc_window,
            file.lncc_eps,
        )?,
        regularizer: regularizer(file.regularizer.as_deref())?,
        weight_deform_loss: file.weight_deform_loss.unwrap_or(d.weight_deform_loss),
        lr: file.lr.unwrap_or(d.lr),
        iters: file.iters.unwrap_or(d.iters),
        ddf_init_std: file.ddf_init_std.unwrap_or(d.ddf_init_std),
        log_every: file.log_every.unwrap_or(d.log_every),
        seed,
        early_stop: file.early_stop.unwrap_or(d.early_stop),
    })
}

fn trace_csv(run: &OptimRun) -> String {
    let mut csv = String::from("iteration,total,image,deform\n");
    for r in &run.trace {
        let _ = writeln!(csv, "{},{},{},{}", r.iteration, r.total, r.image, r.deform);
    }
    csv
}

fn cmd_register(args: RegisterArgs) -> CliResult<()> {
    let config = args.config.as_deref();
    // Validate everything that comes from flags before touching the inputs.
    let run_cfg = match args.mode {
        Mode::Affine => RunConfig::Affine(affine_config(read_config(config)?)?),
        Mode::Ddf => {
            let seed = args
                .seed
                .ok_or_else(|| CliError::Usage("--seed is required for --mode ddf".into()))?;
            RunConfig::Ddf(ddf_config(read_config(config)?, seed)?)
        }
    };
    match &run_cfg {
        RunConfig::Affine(c) => c.validate()?,
        RunConfig::Ddf(c) => c.validate()?,
    }

    let (moving_header, moving) = load_volume_with_header(&args.moving)?;
    let fixed = load_volume(&args.fixed)?;
    let labels = args.moving_labels.as_deref().map(load_volume).transpose()?;

    let run = match &run_cfg {
        RunConfig::Affine(c) => register_affine(&moving, &fixed, c)?,
        RunConfig::Ddf(c) => register_ddf(&moving, &fixed, c)?,
    };
    let grid = reference_grid(fixed.shape())?;
    let warped = warp_with_result(&run, &moving, &grid)?;
    let warped_labels = labels
        .map(|l| warp_with_result(&run, &l, &grid))
        .transpose()?;

    create_dir(&args.out)?;
    let out = &args.out;
    let params_name = match &run.params {
        FinalParams::Affine(theta) => {
            save_affine(&out.join("params.json"), theta)?;
            "params.json"
        }
        FinalParams::Ddf(field) => {
            save_ddf(&out.join("ddf"), field)?;
            "ddf"
        }
    };
    write_text(&out.join("trace.csv"), &trace_csv(&run))?;
    save_volume(&out.join("warped"), &warped, moving_header.kind)?;
    if let Some(l) = &warped_labels {
        save_volume(&out.join("warped_labels"), l, VolumeKind::Label)?;
    }
    let last = run.last();
    println!(
        "register mode={} iterations={} initial={} final={} params={params_name}",
        match args.mode {
            Mode::Affine => "affine",
            Mode::Ddf => "ddf",
        },
        run.iterations_run,
        run.first().total,
        last.total,
    );
    Ok(())
}

fn cmd_warp(args: WarpArgs) -> CliResult<()> {
    let (header, input) = load_volume_with_header(&args.input)?;
    let grid = reference_grid(input.shape())?;
    let warped_grid = match load_params(&args.params)? {
        StoredParams::Affine(theta) => warp_grid_affine(&grid, &theta),
        StoredParams::Ddf(field) => apply_ddf(&grid, &field)?,
    };
    let warped = resample(&input, &warped_grid);
    if let Some(dir) = args.out.parent().filter(|d| !d.as_os_str().is_empty()) {
        create_dir(dir)?;
    }
    save_volume(&args.out, &warped, header.kind)?;
    Ok(())
}

/// `x` with nine significant digits.
pub fn format_sig9(x: f64) -> String {
    if x == 0.0 {
        return "0".into();
    }
    let magnitude = x.abs().log10().floor() as i32;
    if (-5..9).contains(&magnitude) {
        format!("{:.*}", (8 - magnitude).max(0) as usize, x)
    } else {
        format!("{x:.8e}")
    }
}

fn cmd_eval(args: EvalArgs) -> CliResult<()> {
    let a = load_volume(&args.a)?;
    let b = load_volume(&args.b)?;
    let value = match args.metric {
        Metric::Ssd => ssd(&a, &b)?.value,
        Metric::Lncc => {
            let cfg = LnccConfig {
                window: args.window,
                ..LnccConfig::default()
            };
            lncc(&a, &b, &cfg)?.value
        }
        Metric::Dice => dice_score(&a, &b, DEFAULT_DICE_SMOOTH)?.value,
    };
    println!("{}", format_sig9(value));
    Ok(())
}

fn cmd_compare(args: CompareArgs) -> CliResult<()> {
    let pred = load_volume(&args.pred)?;
    let truth = load_volume(&args.truth)?;
    let map = label_comparison_map(&pred, &truth, args.thresh)?;
    export_comparison(&map, args.axis, args.index, &args.out)?;
    Ok(())
}

fn cmd_slice(args: SliceArgs) -> CliResult<()> {
    let v = load_volume(&args.input)?;
    export_slice(&v, args.axis, args.index, &args.out)?;
    Ok(())
}
