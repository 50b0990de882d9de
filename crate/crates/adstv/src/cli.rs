//! The `adstv` command line.

use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use adstv_core::image::add_gaussian_noise;
use adstv_core::metrics::QualityReport;
use adstv_core::solver::Constraint;
use adstv_core::tensor::{DirectionalParams, SchattenOrder};
use adstv_core::{Image, NoiseSpec};
use clap::{Args, Parser, Subcommand};

use crate::bench::{self, BenchConfig};
use crate::io::{load_image, save_image, IoError};
use crate::pipeline::{Pipeline, Regularizer};
use crate::{Error, Result};

#[derive(Debug, Parser)]
#[command(name = "adstv", version, about = "Direction-guided structure tensor TV denoising")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Denoise one image.
    Denoise(DenoiseArgs),
    /// Add seeded Gaussian noise to an image.
    AddNoise(AddNoiseArgs),
    /// Print PSNR and SSIM of a test image against a reference.
    Metrics(MetricsArgs),
    /// Sweep parameters over a corpus and write the best runs as CSV.
    Bench(BenchArgs),
    /// Write the estimated alpha_minus and theta fields as PFM.
    Estimate(EstimateArgs),
}

/// Solver settings shared by `denoise` and `bench`.
#[derive(Debug, Args)]
pub struct SolverArgs {
    #[arg(long, default_value_t = 0.5)]
    pub kernel_sigma: f64,
    #[arg(long, default_value_t = 3)]
    pub kernel_support: usize,
    /// Schatten order of the regularizer (1 or 2).
    #[arg(long, default_value_t = 1.0)]
    pub q: f64,
    #[arg(long, default_value_t = 100)]
    pub iters: usize,
    #[arg(long, default_value_t = 1e-5)]
    pub tol: f64,
    /// Drop the [0, 1] range constraint.
    #[arg(long)]
    pub unconstrained: bool,
    /// Only accept dual steps that do not decrease the dual objective.
    #[arg(long)]
    pub monotone: bool,
}

/// Direction estimator settings.
#[derive(Debug, Args)]
pub struct EstimatorArgs {
    /// Number of estimator scales (default: 2, or 3 when --noise-sigma >= 0.2).
    #[arg(long)]
    pub scales: Option<usize>,
    /// Structure-tensor window (default by image size).
    #[arg(long)]
    pub st_support: Option<usize>,
    /// Noise level of the input, used to choose the number of scales.
    #[arg(long)]
    pub noise_sigma: Option<f64>,
    /// Pre-smoothing for the eadtv orientation estimate.
    #[arg(long, default_value_t = 1.5)]
    pub eadtv_sigma: f64,
}

#[derive(Debug, Args)]
pub struct DenoiseArgs {
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub output: PathBuf,
    #[arg(long, default_value = "adstv")]
    pub regularizer: String,
    #[arg(long)]
    pub tau: f64,
    /// Required for adstv and eadtv.
    #[arg(long)]
    pub alpha_plus: Option<f64>,
    /// Constant orientation (radians) replacing the estimated one.
    #[arg(long)]
    pub theta: Option<f64>,
    /// Directory for alpha_minus.pfm and theta.pfm.
    #[arg(long)]
    pub dump_fields: Option<PathBuf>,
    #[command(flatten)]
    pub solver: SolverArgs,
    #[command(flatten)]
    pub estimator: EstimatorArgs,
}

#[derive(Debug, Args)]
pub struct AddNoiseArgs {
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub output: PathBuf,
    #[arg(long)]
    pub sigma: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Args)]
pub struct MetricsArgs {
    #[arg(long = "ref")]
    pub reference: PathBuf,
    #[arg(long)]
    pub test: PathBuf,
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    #[arg(long)]
    pub corpus: PathBuf,
    #[arg(long, value_delimiter = ',', default_value = "0.1")]
    pub sigmas: Vec<f64>,
    #[arg(long, value_delimiter = ',', default_value = "tv,eadtv,stv,adstv")]
    pub regularizers: Vec<String>,
    /// Comma-separated list or `auto` (20 log-spaced values in [0.01, 0.5]).
    #[arg(long, default_value = "auto")]
    pub tau_grid: String,
    /// Comma-separated list (default 2,3,...,30).
    #[arg(long, value_delimiter = ',')]
    pub alpha_grid: Option<Vec<f64>>,
    /// Golden-section steps refining tau around the best grid value.
    #[arg(long, default_value_t = 0)]
    pub tau_refine: usize,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[command(flatten)]
    pub solver: SolverArgs,
    #[arg(long)]
    pub scales: Option<usize>,
    #[arg(long)]
    pub st_support: Option<usize>,
    #[arg(long, default_value_t = 1.5)]
    pub eadtv_sigma: f64,
}

#[derive(Debug, Args)]
pub struct EstimateArgs {
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub out_dir: PathBuf,
    #[arg(long, default_value = "adstv")]
    pub regularizer: String,
    #[arg(long)]
    pub alpha_plus: f64,
    #[command(flatten)]
    pub estimator: EstimatorArgs,
}

/// Parse, run and map the outcome to an exit status.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = match e.kind() {
                clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = e.print();
            return code;
        }
    };
    let stdout = std::io::stdout();
    match run(cli, &mut stdout.lock()) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

pub fn run(cli: Cli, out: &mut dyn Write) -> Result<()> {
    match cli.command {
        Command::Denoise(a) => denoise(a, out),
        Command::AddNoise(a) => add_noise(a),
        Command::Metrics(a) => metrics(a, out),
        Command::Bench(a) => bench(a),
        Command::Estimate(a) => estimate(a),
    }
}

fn solver_pipeline(regularizer: Regularizer, s: &SolverArgs) -> Result<Pipeline> {
    Ok(Pipeline {
        regularizer,
        kernel_sigma: s.kernel_sigma,
        kernel_support: s.kernel_support,
        q: SchattenOrder::from_q(s.q)?,
        max_iters: s.iters,
        rel_tol: s.tol,
        constraint: if s.unconstrained { Constraint::Unconstrained } else { Constraint::UNIT_BOX },
        monotone: s.monotone,
        ..Pipeline::default()
    })
}

fn with_estimator(p: Pipeline, e: &EstimatorArgs) -> Result<Pipeline> {
    if e.noise_sigma.is_some_and(|s| !(s >= 0.0)) {
        return Err(Error::Invalid("--noise-sigma must be nonnegative".into()));
    }
    Ok(Pipeline {
        scales: e.scales,
        st_support: e.st_support,
        noise_sigma: e.noise_sigma,
        eadtv_sigma: e.eadtv_sigma,
        ..p
    })
}

fn alpha_for(reg: Regularizer, alpha: Option<f64>) -> Result<f64> {
    match (reg.uses_alpha(), alpha) {
        (true, Some(a)) => Ok(a),
        (true, None) => Err(Error::Invalid(format!("--alpha-plus is required for {reg}"))),
        (false, _) => Ok(1.0),
    }
}

fn write_fields(dp: &DirectionalParams, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|source| IoError::Io {
        path: dir.display().to_string(),
        source,
    })?;
    let (w, h) = (dp.width(), dp.height());
    save_image(&Image::new(w, h, 1, dp.alpha_minus().to_vec())?, dir.join("alpha_minus.pfm"))?;
    save_image(&Image::new(w, h, 1, dp.theta().to_vec())?, dir.join("theta.pfm"))?;
    Ok(())
}

fn denoise(a: DenoiseArgs, out: &mut dyn Write) -> Result<()> {
    let reg: Regularizer = a.regularizer.parse()?;
    let alpha = alpha_for(reg, a.alpha_plus)?;
    if !a.tau.is_finite() || a.tau < 0.0 {
        return Err(Error::Invalid("--tau must be finite and nonnegative".into()));
    }
    let pipeline = Pipeline {
        theta: a.theta,
        ..with_estimator(solver_pipeline(reg, &a.solver)?, &a.estimator)?
    };
    pipeline.solver_config(a.tau.max(f64::MIN_POSITIVE))?;
    if let Some(t) = a.theta {
        if !(0.0..std::f64::consts::PI).contains(&t) {
            return Err(Error::Invalid("--theta must lie in [0, pi)".into()));
        }
    }
    let noisy = load_image(&a.input)?;
    let prepared = pipeline.prepare_for_alpha(&noisy, alpha)?;
    if let Some(dir) = &a.dump_fields {
        match pipeline.params(&prepared, alpha)? {
            Some(dp) => write_fields(&dp, dir)?,
            None => return Err(Error::Invalid(format!("{reg} has no direction fields to dump"))),
        }
    }
    let run = pipeline.run(&noisy, &prepared, a.tau, alpha)?;
    save_image(&run.image, &a.output)?;
    writeln!(out, "iters={} converged={}", run.iterations, run.converged).ok();
    Ok(())
}

fn add_noise(a: AddNoiseArgs) -> Result<()> {
    let spec = NoiseSpec::new(a.sigma, a.seed)?;
    let img = load_image(&a.input)?;
    save_image(&add_gaussian_noise(&img, spec), &a.output)?;
    Ok(())
}

/// Six decimals, `inf` for identical images.
pub fn format_metric(v: f64) -> String {
    if v == f64::INFINITY {
        "inf".into()
    } else {
        format!("{v:.6}")
    }
}

fn metrics(a: MetricsArgs, out: &mut dyn Write) -> Result<()> {
    let reference = load_image(&a.reference)?;
    let test = load_image(&a.test)?;
    let r = QualityReport::compute(&reference, &test)?;
    writeln!(out, "psnr={} ssim={}", format_metric(r.psnr_db), format_metric(r.ssim)).ok();
    Ok(())
}

pub fn parse_tau_grid(s: &str) -> Result<Vec<f64>> {
    if s.trim().eq_ignore_ascii_case("auto") {
        return Ok(bench::default_tau_grid());
    }
    s.split(',')
        .map(|t| {
            t.trim()
                .parse::<f64>()
                .map_err(|_| Error::Invalid(format!("bad tau value {t:?}")))
        })
        .collect()
}

fn bench(a: BenchArgs) -> Result<()> {
    let regularizers = a
        .regularizers
        .iter()
        .map(|r| r.parse())
        .collect::<Result<Vec<Regularizer>>>()?;
    let pipeline = Pipeline {
        scales: a.scales,
        st_support: a.st_support,
        eadtv_sigma: a.eadtv_sigma,
        ..solver_pipeline(Regularizer::Adstv, &a.solver)?
    };
    pipeline.solver_config(1.0)?;
    let cfg = BenchConfig {
        sigmas: a.sigmas,
        regularizers,
        tau_grid: parse_tau_grid(&a.tau_grid)?,
        alpha_grid: a.alpha_grid.unwrap_or_else(bench::default_alpha_grid),
        tau_refine: a.tau_refine,
        seed: a.seed,
        pipeline,
    };
    cfg.validate()?;
    let corpus = bench::load_corpus(&a.corpus)?;
    let outcomes = bench::run_bench(&corpus, &cfg)?;
    for o in &outcomes {
        if !o.energy_descent || !o.finite {
            eprintln!(
                "warning: {} {} sigma={}: energy_descent={} finite={}",
                o.record.image_id, o.record.regularizer, o.record.sigma_eta, o.energy_descent, o.finite
            );
        }
    }
    let records: Vec<_> = outcomes.into_iter().map(|o| o.record).collect();
    let file = fs::File::create(&a.out).map_err(|source| IoError::Io {
        path: a.out.display().to_string(),
        source,
    })?;
    bench::write_csv(&records, std::io::BufWriter::new(file))
}

fn estimate(a: EstimateArgs) -> Result<()> {
    let reg: Regularizer = a.regularizer.parse()?;
    if !reg.uses_alpha() {
        return Err(Error::Invalid(format!("{reg} has no direction fields")));
    }
    let pipeline = with_estimator(Pipeline { regularizer: reg, ..Pipeline::default() }, &a.estimator)?;
    let img = load_image(&a.input)?;
    let prepared = pipeline.prepare(&img)?;
    let dp = pipeline
        .params(&prepared, a.alpha_plus)?
        .ok_or_else(|| Error::Invalid("no direction fields".into()))?;
    write_fields(&dp, &a.out_dir)
}
