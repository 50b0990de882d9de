//! Parameter sweeps over a corpus of clean images, keeping the best-PSNR
//! run per (image, noise level, regularizer).

use std::io::Write;
use std::path::Path;
use std::time::Instant;

use adstv_core::image::add_gaussian_noise;
use adstv_core::metrics::{psnr, ssim};
use adstv_core::{Image, NoiseSpec};
use rayon::prelude::*;

use crate::io::load_image;
use crate::pipeline::{Pipeline, Regularizer};
use crate::{Error, Result};

pub const CSV_HEADER: [&str; 10] = [
    "image_id",
    "regularizer",
    "sigma_eta",
    "tau",
    "alpha_plus",
    "psnr_db",
    "ssim",
    "iters",
    "wall_seconds",
    "seed",
];

#[derive(Debug, Clone, PartialEq)]
pub struct RunRecord {
    pub image_id: String,
    pub regularizer: Regularizer,
    pub sigma_eta: f64,
    pub tau: f64,
    pub alpha_plus: f64,
    pub psnr_db: f64,
    pub ssim: f64,
    pub iters: usize,
    pub wall_seconds: f64,
    pub seed: u64,
}

fn fmt6(v: f64) -> String {
    if v == f64::INFINITY {
        "inf".to_string()
    } else {
        format!("{v:.6}")
    }
}

impl RunRecord {
    pub fn fields(&self) -> [String; 10] {
        [
            self.image_id.clone(),
            self.regularizer.to_string(),
            fmt6(self.sigma_eta),
            fmt6(self.tau),
            fmt6(self.alpha_plus),
            fmt6(self.psnr_db),
            fmt6(self.ssim),
            self.iters.to_string(),
            fmt6(self.wall_seconds),
            self.seed.to_string(),
        ]
    }
}

pub fn write_csv<W: Write>(records: &[RunRecord], out: W) -> Result<()> {
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(out);
    w.write_record(CSV_HEADER)?;
    for r in records {
        w.write_record(r.fields())?;
    }
    w.flush().map_err(csv::Error::from)?;
    Ok(())
}

/// 20 log-spaced values in `[0.01, 0.5]`.
pub fn default_tau_grid() -> Vec<f64> {
    log_grid(0.01, 0.5, 20)
}

pub fn log_grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![lo];
    }
    let (a, b) = (lo.ln(), hi.ln());
    (0..n).map(|i| (a + (b - a) * i as f64 / (n - 1) as f64).exp()).collect()
}

/// 2, 3, ..., 30.
pub fn default_alpha_grid() -> Vec<f64> {
    (2..=30).map(f64::from).collect()
}

/// FNV-1a over the image id, the bits of `sigma` and the master seed, so
/// every regularizer sees the same noise for a given image and level.
pub fn tuple_seed(image_id: &str, sigma: f64, master: u64) -> u64 {
    const OFFSET: u64 = 0xcbf29ce484222325;
    const PRIME: u64 = 0x100000001b3;
    let mut h = OFFSET;
    let bytes = image_id
        .as_bytes()
        .iter()
        .copied()
        .chain([0xff])
        .chain(sigma.to_bits().to_le_bytes())
        .chain(master.to_le_bytes());
    for b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(PRIME);
    }
    h
}

#[derive(Debug, Clone)]
pub struct BenchConfig {
    pub sigmas: Vec<f64>,
    pub regularizers: Vec<Regularizer>,
    pub tau_grid: Vec<f64>,
    pub alpha_grid: Vec<f64>,
    /// Golden-section steps on `log tau` around the best grid point.
    pub tau_refine: usize,
    pub seed: u64,
    /// Solver and estimator settings; the regularizer field is overridden.
    pub pipeline: Pipeline,
}

impl Default for BenchConfig {
    fn default() -> Self {
        Self {
            sigmas: vec![0.1],
            regularizers: Regularizer::ALL.to_vec(),
            tau_grid: default_tau_grid(),
            alpha_grid: default_alpha_grid(),
            tau_refine: 0,
            seed: 0,
            pipeline: Pipeline::default(),
        }
    }
}

impl BenchConfig {
    pub fn validate(&self) -> Result<()> {
        if self.sigmas.is_empty() || self.regularizers.is_empty() || self.tau_grid.is_empty() {
            return Err(Error::Invalid("sigma, regularizer and tau lists must be nonempty".into()));
        }
        if self.sigmas.iter().any(|s| !(*s >= 0.0) || !s.is_finite()) {
            return Err(Error::Invalid("noise levels must be finite and nonnegative".into()));
        }
        if self.tau_grid.iter().any(|t| !(*t >= 0.0) || !t.is_finite()) {
            return Err(Error::Invalid("tau values must be finite and nonnegative".into()));
        }
        if self.regularizers.iter().any(|r| r.uses_alpha())
            && (self.alpha_grid.is_empty() || self.alpha_grid.iter().any(|a| !(*a >= 1.0) || !a.is_finite()))
        {
            return Err(Error::Invalid("alpha grid must be nonempty with values >= 1".into()));
        }
        Ok(())
    }
}

/// One evaluated parameter point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepPoint {
    pub alpha_plus: f64,
    pub tau: f64,
    pub psnr_db: f64,
    pub iters: usize,
}

#[derive(Debug, Clone)]
pub struct TupleOutcome {
    pub record: RunRecord,
    pub sweep: Vec<SweepPoint>,
    /// Every run had an output energy no larger than that of the noisy
    /// input or of its projection onto the constraint set.
    pub energy_descent: bool,
    /// No run hit non-finite values.
    pub finite: bool,
}

struct Best {
    point: SweepPoint,
    image: Image,
    solve_seconds: f64,
}

struct Sweeper<'a> {
    clean: &'a Image,
    noisy: &'a Image,
    pipeline: &'a Pipeline,
    prepared: crate::pipeline::Prepared,
    sweep: Vec<SweepPoint>,
    best: Option<Best>,
    energy_descent: bool,
    finite: bool,
}

impl Sweeper<'_> {
    fn eval(&mut self, tau: f64, alpha: f64) -> Result<f64> {
        let start = Instant::now();
        let run = match self.pipeline.run(self.noisy, &self.prepared, tau, alpha) {
            Ok(run) => run,
            Err(Error::Core(adstv_core::Error::NonFinite { .. })) => {
                self.finite = false;
                return Ok(f64::NEG_INFINITY);
            }
            Err(e) => return Err(e),
        };
        let seconds = start.elapsed().as_secs_f64();
        if run.image.data().iter().any(|v| !v.is_finite()) {
            self.finite = false;
            return Ok(f64::NEG_INFINITY);
        }
        if run.energies.is_some_and(|e| !e.descended()) {
            self.energy_descent = false;
        }
        let p = psnr(self.clean, &run.image)?;
        let point = SweepPoint {
            alpha_plus: alpha,
            tau,
            psnr_db: p,
            iters: run.iterations,
        };
        self.sweep.push(point);
        if self.best.as_ref().is_none_or(|b| p > b.point.psnr_db) {
            self.best = Some(Best {
                point,
                image: run.image,
                solve_seconds: seconds,
            });
        }
        Ok(p)
    }

    /// Grid sweep, then golden-section refinement in `log tau`.
    fn sweep_tau(&mut self, grid: &[f64], refine: usize, alpha: f64) -> Result<()> {
        let scores = grid
            .iter()
            .map(|&t| self.eval(t, alpha))
            .collect::<Result<Vec<f64>>>()?;
        if refine == 0 || grid.len() < 2 {
            return Ok(());
        }
        let mut sorted: Vec<(f64, f64)> = grid.iter().copied().zip(scores).filter(|(t, _)| *t > 0.0).collect();
        sorted.sort_by(|a, b| a.0.total_cmp(&b.0));
        let Some(k) = (0..sorted.len()).max_by(|&i, &j| sorted[i].1.total_cmp(&sorted[j].1).then(j.cmp(&i))) else {
            return Ok(());
        };
        let lo = sorted[k.saturating_sub(1)].0.ln();
        let hi = sorted[(k + 1).min(sorted.len() - 1)].0.ln();
        if hi <= lo {
            return Ok(());
        }
        let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
        let (mut a, mut b) = (lo, hi);
        let mut c = b - inv_phi * (b - a);
        let mut d = a + inv_phi * (b - a);
        let mut fc = self.eval(c.exp(), alpha)?;
        let mut fd = self.eval(d.exp(), alpha)?;
        for _ in 2..refine {
            if fc >= fd {
                b = d;
                d = c;
                fd = fc;
                c = b - inv_phi * (b - a);
                fc = self.eval(c.exp(), alpha)?;
            } else {
                a = c;
                c = d;
                fc = fd;
                d = a + inv_phi * (b - a);
                fd = self.eval(d.exp(), alpha)?;
            }
        }
        Ok(())
    }
}

/// Add noise, sweep parameters and keep the best-PSNR configuration.
pub fn run_tuple(image_id: &str, clean: &Image, sigma: f64, reg: Regularizer, cfg: &BenchConfig) -> Result<TupleOutcome> {
    let seed = tuple_seed(image_id, sigma, cfg.seed);
    let noisy = add_gaussian_noise(clean, NoiseSpec::new(sigma, seed)?);
    let pipeline = Pipeline {
        regularizer: reg,
        noise_sigma: cfg.pipeline.noise_sigma.or(Some(sigma)),
        ..cfg.pipeline.clone()
    };
    let start = Instant::now();
    let prepared = pipeline.prepare(&noisy)?;
    let prep_seconds = start.elapsed().as_secs_f64();
    let mut s = Sweeper {
        clean,
        noisy: &noisy,
        pipeline: &pipeline,
        prepared,
        sweep: Vec::new(),
        best: None,
        energy_descent: true,
        finite: true,
    };
    let alphas: &[f64] = if reg.uses_alpha() { &cfg.alpha_grid } else { &[1.0] };
    for &alpha in alphas {
        s.sweep_tau(&cfg.tau_grid, cfg.tau_refine, alpha)?;
    }
    let best = s
        .best
        .take()
        .ok_or_else(|| Error::Invalid(format!("{image_id}: every run diverged")))?;
    let record = RunRecord {
        image_id: image_id.to_string(),
        regularizer: reg,
        sigma_eta: sigma,
        tau: best.point.tau,
        alpha_plus: best.point.alpha_plus,
        psnr_db: best.point.psnr_db,
        ssim: ssim(clean, &best.image)?,
        iters: best.point.iters,
        wall_seconds: prep_seconds + best.solve_seconds,
        seed,
    };
    Ok(TupleOutcome {
        record,
        sweep: s.sweep,
        energy_descent: s.energy_descent,
        finite: s.finite,
    })
}

/// Every (image, sigma, regularizer) tuple, in corpus order, run on the
/// rayon pool.
pub fn run_bench(corpus: &[(String, Image)], cfg: &BenchConfig) -> Result<Vec<TupleOutcome>> {
    cfg.validate()?;
    if corpus.is_empty() {
        return Err(Error::Invalid("empty corpus".into()));
    }
    let tuples: Vec<(&str, &Image, f64, Regularizer)> = corpus
        .iter()
        .flat_map(|(id, img)| {
            cfg.sigmas
                .iter()
                .flat_map(move |&s| cfg.regularizers.iter().map(move |&r| (id.as_str(), img, s, r)))
        })
        .collect();
    tuples
        .into_par_iter()
        .map(|(id, img, s, r)| run_tuple(id, img, s, r, cfg))
        .collect()
}

/// All PGM/PPM/PFM files of a directory, sorted by name, keyed by stem.
pub fn load_corpus(dir: impl AsRef<Path>) -> Result<Vec<(String, Image)>> {
    let dir = dir.as_ref();
    let entries = std::fs::read_dir(dir).map_err(|source| crate::io::IoError::Io {
        path: dir.display().to_string(),
        source,
    })?;
    let mut paths: Vec<_> = entries
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_file() && crate::io::Format::from_path(p).is_ok())
        .collect();
    paths.sort();
    let mut out = Vec::with_capacity(paths.len());
    for p in paths {
        let id = p.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
        out.push((id, load_image(&p)?));
    }
    if out.is_empty() {
        return Err(Error::Invalid(format!("no PGM/PPM/PFM images in {}", dir.display())));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grids() {
        let g = default_tau_grid();
        assert_eq!(g.len(), 20);
        assert!((g[0] - 0.01).abs() < 1e-15 && (g[19] - 0.5).abs() < 1e-12);
        assert!(g.windows(2).all(|w| (w[1] / w[0] - g[1] / g[0]).abs() < 1e-9));
        assert_eq!(default_alpha_grid().len(), 29);
    }

    #[test]
    fn seeds_differ_by_tuple_but_not_by_regularizer() {
        let a = tuple_seed("lena", 0.1, 7);
        assert_eq!(a, tuple_seed("lena", 0.1, 7));
        assert_ne!(a, tuple_seed("lena", 0.2, 7));
        assert_ne!(a, tuple_seed("lenb", 0.1, 7));
        assert_ne!(a, tuple_seed("lena", 0.1, 8));
    }

    #[test]
    fn csv_layout() {
        let rec = RunRecord {
            image_id: "img".into(),
            regularizer: Regularizer::Stv,
            sigma_eta: 0.1,
            tau: 0.05,
            alpha_plus: 1.0,
            psnr_db: 27.123456789,
            ssim: 0.8,
            iters: 100,
            wall_seconds: 1.5,
            seed: 42,
        };
        let mut buf = Vec::new();
        write_csv(&[rec], &mut buf).unwrap();
        assert_eq!(
            String::from_utf8(buf).unwrap(),
            "image_id,regularizer,sigma_eta,tau,alpha_plus,psnr_db,ssim,iters,wall_seconds,seed\n\
             img,stv,0.100000,0.050000,1.000000,27.123457,0.800000,100,1.500000,42\n"
        );
    }

    #[test]
    fn best_row_is_sweep_maximum() {
        let clean = crate::synth::stripes(24, 24, 6.0, 0.5);
        let cfg = BenchConfig {
            regularizers: vec![Regularizer::Tv],
            tau_grid: vec![0.01, 0.05, 0.2],
            tau_refine: 4,
            ..BenchConfig::default()
        };
        let out = run_tuple("s", &clean, 0.1, Regularizer::Tv, &cfg).unwrap();
        assert_eq!(out.sweep.len(), 3 + 4);
        let max = out.sweep.iter().map(|p| p.psnr_db).fold(f64::NEG_INFINITY, f64::max);
        assert_eq!(out.record.psnr_db, max);
        assert_eq!(out.record.alpha_plus, 1.0);
        assert!(out.energy_descent && out.finite);
    }

    #[test]
    fn validation() {
        let mut cfg = BenchConfig::default();
        assert!(cfg.validate().is_ok());
        cfg.alpha_grid = vec![0.5];
        assert!(cfg.validate().is_err());
        cfg.regularizers = vec![Regularizer::Tv];
        assert!(cfg.validate().is_ok());
        cfg.tau_grid.clear();
        assert!(cfg.validate().is_err());
        assert!(run_bench(&[], &BenchConfig::default()).is_err());
    }
}
