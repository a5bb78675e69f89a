//! Local kernel benchmarks: sequential baseline against each worker count.
//!
//! Speedup is the baseline's time divided by the compared run's time, each
//! the median of several repetitions.

use std::fmt::Write as _;
use std::path::Path;
use std::str::FromStr;
use std::time::Instant;

use gpc_core::demosaic::{demosaic_bilinear, demosaic_gradient, BayerImage, CfaPhase};
use gpc_core::lsq::{batch_fit, ScanLineSet};
use gpc_core::parexec::{Executor, Sequential};
use gpc_core::wire::{dtype_size, flags, ParamMap};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::client::{load_input, ClientError};
use crate::pool::ThreadPool;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BenchTask {
    Bilinear,
    Gradient,
    Polyfit,
}

#[derive(Debug, thiserror::Error)]
pub enum BenchError {
    #[error("unknown benchmark task {0:?} (expected bilinear, gradient or lsq)")]
    UnknownTask(String),
    #[error("bad dimensions {0:?} (expected ROWSxCOLS)")]
    BadDims(String),
    #[error("input: {0}")]
    Input(#[from] ClientError),
    #[error("input: {0}")]
    BadInput(String),
}

impl FromStr for BenchTask {
    type Err = BenchError;

    fn from_str(s: &str) -> Result<Self, BenchError> {
        match s.to_ascii_lowercase().as_str() {
            "bilinear" | "bayer_bilinear" => Ok(BenchTask::Bilinear),
            "gradient" | "bayer_gradient" => Ok(BenchTask::Gradient),
            "lsq" | "polyfit" | "lsq_polyfit" | "lsqfit" => Ok(BenchTask::Polyfit),
            _ => Err(BenchError::UnknownTask(s.to_string())),
        }
    }
}

impl BenchTask {
    pub fn flag(self) -> &'static str {
        match self {
            BenchTask::Bilinear => flags::BAYER_BILINEAR,
            BenchTask::Gradient => flags::BAYER_GRADIENT,
            BenchTask::Polyfit => flags::LSQ_POLYFIT,
        }
    }
}

/// Parses `ROWSxCOLS` (also accepts `*` or `,` as the separator).
pub fn parse_dims(s: &str) -> Result<(usize, usize), BenchError> {
    let bad = || BenchError::BadDims(s.to_string());
    let (a, b) = s.split_once(['x', 'X', '*', ',']).ok_or_else(bad)?;
    let a: usize = a.trim().parse().map_err(|_| bad())?;
    let b: usize = b.trim().parse().map_err(|_| bad())?;
    if a == 0 || b == 0 {
        return Err(bad());
    }
    Ok((a, b))
}

#[derive(Debug, Clone)]
pub struct BenchConfig {
    pub task: BenchTask,
    pub input: Option<std::path::PathBuf>,
    /// Image `rows x cols`, or scan lines `lines x pixels`. Defaults to
    /// 2048x2048 for demosaic and 6x6000 for fitting.
    pub dims: Option<(usize, usize)>,
    pub orders: Vec<usize>,
    pub workers: Vec<usize>,
    pub reps: usize,
    pub seed: u64,
}

impl BenchConfig {
    pub fn new(task: BenchTask) -> Self {
        BenchConfig {
            task,
            input: None,
            dims: None,
            orders: vec![1, 2, 3],
            workers: vec![1, crate::host_cores()],
            reps: 5,
            seed: 0x5eed,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchRow {
    pub task: &'static str,
    /// Problem description, e.g. `2048x2048` or `6x6000 order=3`.
    pub case: String,
    /// `None` for the sequential baseline.
    pub workers: Option<usize>,
    pub median_ms: f64,
    /// Baseline time / this row's time.
    pub speedup: f64,
}

pub const TSV_HEADER: &str = "task\tcase\tworkers\tmedian_ms\tspeedup";

impl BenchRow {
    pub fn tsv(&self) -> String {
        let workers = self.workers.map_or_else(|| "seq".to_string(), |w| w.to_string());
        format!("{}\t{}\t{}\t{:.3}\t{:.2}", self.task, self.case, workers, self.median_ms, self.speedup)
    }
}

pub fn to_tsv(rows: &[BenchRow]) -> String {
    let mut out = String::from(TSV_HEADER);
    out.push('\n');
    for r in rows {
        let _ = writeln!(out, "{}", r.tsv());
    }
    out
}

pub fn median(mut xs: Vec<f64>) -> f64 {
    assert!(!xs.is_empty(), "median of nothing");
    xs.sort_by(f64::total_cmp);
    let n = xs.len();
    if n % 2 == 1 {
        xs[n / 2]
    } else {
        (xs[n / 2 - 1] + xs[n / 2]) / 2.0
    }
}

/// Median wall time of `reps` runs of `f`, in milliseconds.
pub fn time_median(reps: usize, mut f: impl FnMut()) -> f64 {
    let samples = (0..reps.max(1))
        .map(|_| {
            let t = Instant::now();
            f();
            t.elapsed().as_secs_f64() * 1e3
        })
        .collect();
    median(samples)
}

pub fn synthetic_mosaic(rows: usize, cols: usize, seed: u64) -> BayerImage {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let samples = (0..rows * cols).map(|_| rng.gen()).collect();
    BayerImage::new(rows, cols, CfaPhase::Rggb, samples).expect("dimensions are at least 2x2")
}

/// Smooth scan lines (a cubic profile per line) with a little noise.
pub fn synthetic_lines(lines: usize, pixels: usize, seed: u64) -> ScanLineSet {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = pixels as f64;
    let mut y = Vec::with_capacity(lines * pixels);
    for _ in 0..lines {
        let c: [f64; 4] = [rng.gen_range(0.0..100.0), rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)];
        for i in 0..pixels {
            let t = i as f64 / n;
            let v = c[0] + 50.0 * (c[1] * t + c[2] * t * t + c[3] * t * t * t);
            y.push(v + rng.gen_range(-0.5..0.5));
        }
    }
    ScanLineSet::new(lines, pixels, y).expect("shape matches")
}

fn load_mosaic(cfg: &BenchConfig, path: &Path) -> Result<BayerImage, BenchError> {
    let mut params = ParamMap::new();
    if let Some((r, c)) = cfg.dims {
        params = params.with("rows", r).with("cols", c);
    }
    let bytes = load_input(path, cfg.task.flag(), &mut params)?;
    let dim = |k| params.get(k).and_then(|v| v.parse().ok()).ok_or_else(|| BenchError::BadInput(format!("{k} unknown; pass --dims")));
    BayerImage::from_le_bytes(dim("rows")?, dim("cols")?, CfaPhase::Rggb, &bytes)
        .map_err(|e| BenchError::BadInput(e.to_string()))
}

fn load_lines(cfg: &BenchConfig, path: &Path) -> Result<ScanLineSet, BenchError> {
    let mut params = ParamMap::new();
    if let Some((l, p)) = cfg.dims {
        params = params.with("lines", l).with("pixels", p);
    }
    let bytes = load_input(path, flags::LSQ_POLYFIT, &mut params)?;
    let get = |k| params.get(k).and_then(|v| v.parse().ok()).ok_or_else(|| BenchError::BadInput(format!("{k} unknown; pass --dims")));
    let elem = params.get("dtype").and_then(dtype_size).unwrap_or(8);
    ScanLineSet::from_le_bytes(get("lines")?, get("pixels")?, elem, &bytes).map_err(|e| BenchError::BadInput(e.to_string()))
}

fn compare(
    task: &'static str,
    case: String,
    cfg: &BenchConfig,
    run: &dyn Fn(&dyn Executor),
) -> Vec<BenchRow> {
    let baseline = time_median(cfg.reps, || run(&Sequential));
    let mut rows = vec![BenchRow { task, case: case.clone(), workers: None, median_ms: baseline, speedup: 1.0 }];
    for &w in &cfg.workers {
        let pool = ThreadPool::new(w);
        let t = time_median(cfg.reps, || run(&pool));
        rows.push(BenchRow { task, case: case.clone(), workers: Some(w), median_ms: t, speedup: baseline / t });
    }
    rows
}

/// Runs the benchmark, returning one baseline row plus one row per worker
/// count (per order, for fitting).
pub fn run(cfg: &BenchConfig) -> Result<Vec<BenchRow>, BenchError> {
    match cfg.task {
        BenchTask::Bilinear | BenchTask::Gradient => {
            let img = match &cfg.input {
                Some(p) => load_mosaic(cfg, p)?,
                None => {
                    let (r, c) = cfg.dims.unwrap_or((2048, 2048));
                    if r < 2 || c < 2 {
                        return Err(BenchError::BadDims(format!("{r}x{c}")));
                    }
                    synthetic_mosaic(r, c, cfg.seed)
                }
            };
            let kernel = if cfg.task == BenchTask::Bilinear { demosaic_bilinear } else { demosaic_gradient };
            let case = format!("{}x{}", img.rows(), img.cols());
            Ok(compare(cfg.task.flag(), case, cfg, &|e| {
                std::hint::black_box(kernel(e, &img));
            }))
        }
        BenchTask::Polyfit => {
            let data = match &cfg.input {
                Some(p) => load_lines(cfg, p)?,
                None => {
                    let (l, p) = cfg.dims.unwrap_or((6, 6000));
                    synthetic_lines(l, p, cfg.seed)
                }
            };
            let mut rows = Vec::new();
            for &m in &cfg.orders {
                let case = format!("{}x{} order={m}", data.lines(), data.pixels());
                rows.extend(compare(cfg.task.flag(), case, cfg, &|e| {
                    std::hint::black_box(batch_fit(e, &data, m));
                }));
            }
            Ok(rows)
        }
    }
}
