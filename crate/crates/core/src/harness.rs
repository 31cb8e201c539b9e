//! Experiment harness: synthetic ground truth, overlap metrics, run reports
//! and line-oriented bench manifests.

use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{ImageGrid, Mask};
use crate::io;
use crate::lambda::{LambdaBounds, Strategy};
use crate::solver::{segment, SegmentationResult, SolverConfig};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_IO: i32 = 2;
pub const EXIT_NUMERIC: i32 = 3;

/// Process exit code for an error.
pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::Parameter(_) => EXIT_USAGE,
        Error::Io { .. } | Error::Parse { .. } | Error::UnsupportedFormat(_) => EXIT_IO,
        Error::Degenerate(_) | Error::Dimension(_) => EXIT_NUMERIC,
    }
}

/// Build a strategy from CLI-style parameters. `cen` needs `lambda`
/// (optionally checked against bounds); the adaptive rules need both bounds.
pub fn build_strategy(
    name: &str,
    lambda: Option<f64>,
    lambda_min: Option<f64>,
    lambda_max: Option<f64>,
) -> Result<Strategy> {
    let bounds = || -> Result<LambdaBounds> {
        match (lambda_min, lambda_max) {
            (Some(lo), Some(hi)) => LambdaBounds::new(lo, hi),
            _ => Err(Error::param(format!("strategy {name} needs lambda_min and lambda_max"))),
        }
    };
    let s = match name.to_ascii_lowercase().as_str() {
        "cen" | "constant" => {
            let lambda = lambda.ok_or_else(|| Error::param("strategy cen needs lambda"))?;
            match (lambda_min, lambda_max) {
                (None, None) => Strategy::constant(lambda),
                _ => Strategy::constant_within(lambda, bounds()?)?,
            }
        }
        "ctd" => Strategy::ctd(bounds()?),
        "mm" => Strategy::mm(bounds()?),
        "thr" => Strategy::thr(bounds()?),
        other => return Err(Error::param(format!("unknown strategy {other:?}"))),
    };
    s.validate()?;
    Ok(s)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Shape {
    Disk,
    Square,
    TwoBlobs,
    Checker,
}

impl FromStr for Shape {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "disk" => Ok(Shape::Disk),
            "square" => Ok(Shape::Square),
            "two-blobs" => Ok(Shape::TwoBlobs),
            "checker" => Ok(Shape::Checker),
            other => Err(Error::param(format!("unknown shape {other:?}"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SynthSpec {
    pub shape: Shape,
    pub rows: usize,
    pub cols: usize,
    pub fg: f64,
    pub bg: f64,
    pub seed: u64,
    /// Cell side for [`Shape::Checker`].
    pub cell: usize,
}

impl SynthSpec {
    pub fn new(shape: Shape, rows: usize, cols: usize) -> Self {
        Self { shape, rows, cols, fg: 0.8, bg: 0.2, seed: 0, cell: 8 }
    }

    /// Equal intensities give an image the solver cannot split.
    pub fn is_degenerate(&self) -> bool {
        self.fg == self.bg
    }
}

/// Parse `MxN` (rows × cols).
pub fn parse_size(s: &str) -> Result<(usize, usize)> {
    let bad = || Error::param(format!("size must look like 64x64, got {s:?}"));
    let (m, n) = s.split_once(['x', 'X']).ok_or_else(bad)?;
    let m: usize = m.trim().parse().map_err(|_| bad())?;
    let n: usize = n.trim().parse().map_err(|_| bad())?;
    if m == 0 || n == 0 {
        return Err(bad());
    }
    Ok((m, n))
}

fn in_disk(i: usize, j: usize, ci: f64, cj: f64, r: f64) -> bool {
    let (y, x) = (i as f64 + 0.5 - ci, j as f64 + 0.5 - cj);
    x * x + y * y <= r * r
}

/// Ground-truth mask for a synthetic shape. Disks are rasterized by pixel
/// centres: `(i + ½ − cᵢ)² + (j + ½ − cⱼ)² ≤ r²`.
pub fn synth_mask(spec: &SynthSpec) -> Result<Mask> {
    let (m, n) = (spec.rows, spec.cols);
    if m < 4 || n < 4 {
        return Err(Error::param(format!("synthetic images must be at least 4x4, got {m}x{n}")));
    }
    let short = m.min(n) as f64;
    let mask = match spec.shape {
        Shape::Disk => {
            let (ci, cj, r) = (m as f64 / 2.0, n as f64 / 2.0, short / 4.0);
            Mask::from_fn(m, n, |i, j| in_disk(i, j, ci, cj, r))
        }
        Shape::Square => {
            let side = m.min(n) / 2;
            let (i0, j0) = ((m - side) / 2, (n - side) / 2);
            Mask::from_fn(m, n, |i, j| (i0..i0 + side).contains(&i) && (j0..j0 + side).contains(&j))
        }
        Shape::TwoBlobs => {
            let r = short / 6.0;
            let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
            let mut centre = || {
                (rng.random_range(r..m as f64 - r), rng.random_range(r..n as f64 - r))
            };
            let a = centre();
            let mut b = centre();
            for _ in 0..1000 {
                if (a.0 - b.0).hypot(a.1 - b.1) > 2.0 * r + 1.0 {
                    break;
                }
                b = centre();
            }
            Mask::from_fn(m, n, |i, j| in_disk(i, j, a.0, a.1, r) || in_disk(i, j, b.0, b.1, r))
        }
        Shape::Checker => {
            if spec.cell == 0 {
                return Err(Error::param("checker cell must be positive"));
            }
            Mask::from_fn(m, n, |i, j| (i / spec.cell + j / spec.cell) % 2 == 0)
        }
    };
    Ok(mask)
}

/// Two-valued image and its exact ground truth.
pub fn synthesize(spec: &SynthSpec) -> Result<(ImageGrid, Mask)> {
    for v in [spec.fg, spec.bg] {
        if !(0.0..=1.0).contains(&v) {
            return Err(Error::param(format!("intensities must lie in [0, 1], got {v}")));
        }
    }
    let mask = synth_mask(spec)?;
    let img = ImageGrid::from_fn(spec.rows, spec.cols, |i, j| if mask.get(i, j) { spec.fg } else { spec.bg });
    Ok((img, mask))
}

/// `(2|A∩B|/(|A|+|B|), |A∩B|/|A∪B|)`; two empty masks score `(1, 1)`.
pub fn dice_jaccard(pred: &Mask, truth: &Mask) -> Result<(f64, f64)> {
    if pred.shape() != truth.shape() {
        return Err(Error::Dimension(format!(
            "prediction {:?} vs ground truth {:?}",
            pred.shape(),
            truth.shape()
        )));
    }
    let (mut inter, mut a, mut b) = (0usize, 0usize, 0usize);
    for (&p, &t) in pred.as_slice().iter().zip(truth.as_slice()) {
        inter += usize::from(p && t);
        a += usize::from(p);
        b += usize::from(t);
    }
    if a + b == 0 {
        return Ok((1.0, 1.0));
    }
    let union = a + b - inter;
    Ok((2.0 * inter as f64 / (a + b) as f64, inter as f64 / union as f64))
}

/// One row of a run report.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub image: String,
    pub strategy: String,
    pub lambda_min: Option<f64>,
    pub lambda_max: Option<f64>,
    pub mu: Option<f64>,
    pub it: Option<usize>,
    pub it_gs_mean: Option<f64>,
    pub dice: Option<f64>,
    pub jaccard: Option<f64>,
    pub wall_ms: Option<f64>,
    pub error: Option<String>,
}

impl RunReport {
    pub fn from_result(
        image: &str,
        strategy: &Strategy,
        cfg: &SolverConfig,
        res: &SegmentationResult,
        metrics: Option<(f64, f64)>,
        wall_ms: Option<f64>,
    ) -> Self {
        let (lambda_min, lambda_max) = strategy.lambda_range();
        Self {
            image: image.to_owned(),
            strategy: strategy.name().to_owned(),
            lambda_min: Some(lambda_min),
            lambda_max: Some(lambda_max),
            mu: Some(cfg.mu),
            it: Some(res.outer_iterations),
            it_gs_mean: Some(res.mean_gs_iterations),
            dice: metrics.map(|m| m.0),
            jaccard: metrics.map(|m| m.1),
            wall_ms,
            error: None,
        }
    }

    fn cells(&self) -> Vec<String> {
        fn opt<T: ToString>(v: &Option<T>) -> String {
            v.as_ref().map_or_else(|| "-".to_owned(), T::to_string)
        }
        vec![
            self.image.clone(),
            self.strategy.clone(),
            opt(&self.lambda_min),
            opt(&self.lambda_max),
            opt(&self.mu),
            opt(&self.it),
            self.it_gs_mean.map_or_else(|| "-".into(), |v| format!("{v:.1}")),
            self.dice.map_or_else(|| "-".into(), |v| format!("{v:.4}")),
            self.jaccard.map_or_else(|| "-".into(), |v| format!("{v:.4}")),
            self.wall_ms.map_or_else(|| "-".into(), |v| format!("{v:.1}")),
            opt(&self.error),
        ]
    }
}

pub const REPORT_COLUMNS: [&str; 11] = [
    "image",
    "strategy",
    "lambda_min",
    "lambda_max",
    "mu",
    "it",
    "it_gs_mean",
    "dice",
    "jaccard",
    "wall_ms",
    "error",
];

/// Whitespace-aligned table for humans.
pub fn format_report_table(rows: &[RunReport]) -> String {
    let cells: Vec<Vec<String>> = rows.iter().map(RunReport::cells).collect();
    let mut widths: Vec<usize> = REPORT_COLUMNS.iter().map(|c| c.len()).collect();
    for row in &cells {
        for (w, c) in widths.iter_mut().zip(row) {
            *w = (*w).max(c.len());
        }
    }
    let line = |row: &[String]| {
        let s: Vec<String> = row.iter().zip(&widths).map(|(c, w)| format!("{c:<w$}")).collect();
        s.join("  ").trim_end().to_owned() + "\n"
    };
    let header: Vec<String> = REPORT_COLUMNS.iter().map(|c| c.to_string()).collect();
    let mut out = line(&header);
    for row in &cells {
        out += &line(row);
    }
    out
}

/// Comma-separated form with a header row.
pub fn report_to_csv(rows: &[RunReport]) -> Result<String> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(Vec::new());
    let csv_err = |e: csv::Error| Error::param(format!("report encoding: {e}"));
    w.write_record(REPORT_COLUMNS).map_err(csv_err)?;
    for r in rows {
        w.serialize(r).map_err(csv_err)?;
    }
    let bytes = w.into_inner().map_err(|e| Error::param(format!("report encoding: {e}")))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

pub fn report_from_csv(text: &str) -> Result<Vec<RunReport>> {
    let mut r = csv::Reader::from_reader(text.as_bytes());
    r.deserialize()
        .map(|row| row.map_err(|e| Error::Parse { path: PathBuf::from("<report>"), msg: e.to_string() }))
        .collect()
}

/// One line of a bench manifest.
#[derive(Clone, Debug, PartialEq)]
pub struct ManifestRow {
    pub line: usize,
    pub id: String,
    pub image: PathBuf,
    pub truth: Option<PathBuf>,
    pub strategy: Strategy,
    pub cfg: SolverConfig,
    /// Gaussian noise on the 0–255 scale applied after loading.
    pub noise_sigma: f64,
    pub noise_seed: u64,
    pub out_mask: Option<PathBuf>,
}

/// A manifest line that could not be parsed, kept so it shows up in the report.
#[derive(Clone, Debug, PartialEq)]
pub struct ManifestError {
    pub line: usize,
    pub label: String,
    pub message: String,
}

fn parse_manifest_line(line_no: usize, line: &str, base: &Path) -> std::result::Result<ManifestRow, String> {
    let mut kv = std::collections::BTreeMap::new();
    for tok in line.split_whitespace() {
        let (k, v) = tok.split_once('=').ok_or_else(|| format!("expected key=value, got {tok:?}"))?;
        if kv.insert(k.to_owned(), v.to_owned()).is_some() {
            return Err(format!("duplicate key {k:?}"));
        }
    }
    let take = |kv: &mut std::collections::BTreeMap<String, String>, k: &str| kv.remove(k);
    fn num<T: FromStr>(k: &str, v: Option<String>) -> std::result::Result<Option<T>, String> {
        v.map(|v| v.parse::<T>().map_err(|_| format!("bad value for {k}: {v:?}"))).transpose()
    }
    let resolve = |p: String| {
        let p = PathBuf::from(p);
        if p.is_absolute() { p } else { base.join(p) }
    };

    let image = take(&mut kv, "image").ok_or("missing image=")?;
    let strategy_name = take(&mut kv, "strategy").ok_or("missing strategy=")?;
    let lambda = num::<f64>("lambda", take(&mut kv, "lambda"))?;
    let lambda_min = num::<f64>("lambda_min", take(&mut kv, "lambda_min"))?;
    let lambda_max = num::<f64>("lambda_max", take(&mut kv, "lambda_max"))?;
    let strategy = build_strategy(&strategy_name, lambda, lambda_min, lambda_max).map_err(|e| e.to_string())?;

    let mut cfg = SolverConfig::new(num::<f64>("mu", take(&mut kv, "mu"))?.ok_or("missing mu=")?);
    if let Some(v) = num("alpha", take(&mut kv, "alpha"))? {
        cfg.alpha = v;
    }
    if let Some(v) = num("tol", take(&mut kv, "tol"))? {
        cfg.tol = v;
    }
    if let Some(v) = num("maxit", take(&mut kv, "maxit"))? {
        cfg.maxit = v;
    }
    if let Some(v) = num("tol_gs", take(&mut kv, "tol_gs"))? {
        cfg.tol_gs = v;
    }
    if let Some(v) = num("maxit_gs", take(&mut kv, "maxit_gs"))? {
        cfg.maxit_gs = v;
    }
    cfg.validate().map_err(|e| e.to_string())?;

    let noise_sigma = num("noise_sigma", take(&mut kv, "noise_sigma"))?.unwrap_or(0.0);
    let noise_seed = num("noise_seed", take(&mut kv, "noise_seed"))?.unwrap_or(0);
    let truth = take(&mut kv, "truth").map(resolve);
    let out_mask = take(&mut kv, "out_mask").map(resolve);
    let id = take(&mut kv, "id").unwrap_or_else(|| {
        Path::new(&image).file_stem().map_or_else(|| image.clone(), |s| s.to_string_lossy().into_owned())
    });
    if let Some(k) = kv.keys().next() {
        return Err(format!("unknown key {k:?}"));
    }
    Ok(ManifestRow {
        line: line_no,
        id,
        image: resolve(image),
        truth,
        strategy,
        cfg,
        noise_sigma,
        noise_seed,
        out_mask,
    })
}

/// Parse a manifest: one run per line as whitespace-separated `key=value`
/// fields; `#` starts a comment. Relative paths resolve against `base`.
///
/// Keys: `image`, `strategy` (cen|ctd|mm|thr), `mu` are required; `lambda`
/// (cen) or `lambda_min`/`lambda_max` (adaptive); optional `id`, `truth`,
/// `alpha`, `tol`, `maxit`, `tol_gs`, `maxit_gs`, `noise_sigma`,
/// `noise_seed`, `out_mask`.
pub fn parse_manifest(text: &str, base: &Path) -> Vec<std::result::Result<ManifestRow, ManifestError>> {
    text.lines()
        .enumerate()
        .filter_map(|(n, raw)| {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                return None;
            }
            Some(parse_manifest_line(n + 1, line, base).map_err(|message| ManifestError {
                line: n + 1,
                label: line
                    .split_whitespace()
                    .find_map(|t| t.strip_prefix("id=").or_else(|| t.strip_prefix("image=")))
                    .unwrap_or("?")
                    .to_owned(),
                message,
            }))
        })
        .collect()
}

fn run_row_inner(row: &ManifestRow, timing: bool) -> Result<RunReport> {
    let mut ubar = io::load_image(&row.image)?;
    if row.noise_sigma > 0.0 {
        ubar = io::add_gaussian_noise(&ubar, row.noise_sigma, row.noise_seed)?;
    }
    let start = Instant::now();
    let res = segment(&ubar, &row.strategy, &row.cfg)?;
    let wall = start.elapsed().as_secs_f64() * 1e3;
    let metrics = match &row.truth {
        Some(p) => Some(dice_jaccard(&res.mask, &io::load_mask(p)?)?),
        None => None,
    };
    if let Some(p) = &row.out_mask {
        io::save_mask(&res.mask, p)?;
    }
    Ok(RunReport::from_result(&row.id, &row.strategy, &row.cfg, &res, metrics, timing.then_some(wall)))
}

pub fn run_row(row: &ManifestRow, timing: bool) -> RunReport {
    run_row_inner(row, timing).unwrap_or_else(|e| {
        let (lambda_min, lambda_max) = row.strategy.lambda_range();
        RunReport {
            image: row.id.clone(),
            strategy: row.strategy.name().to_owned(),
            lambda_min: Some(lambda_min),
            lambda_max: Some(lambda_max),
            mu: Some(row.cfg.mu),
            it: None,
            it_gs_mean: None,
            dice: None,
            jaccard: None,
            wall_ms: None,
            error: Some(e.to_string()),
        }
    })
}

fn error_report(e: &ManifestError) -> RunReport {
    RunReport {
        image: e.label.clone(),
        strategy: "-".into(),
        lambda_min: None,
        lambda_max: None,
        mu: None,
        it: None,
        it_gs_mean: None,
        dice: None,
        jaccard: None,
        wall_ms: None,
        error: Some(format!("line {}: {}", e.line, e.message)),
    }
}

/// Run every manifest row (in parallel) and return reports in manifest order.
pub fn run_bench(rows: &[std::result::Result<ManifestRow, ManifestError>], timing: bool) -> Vec<RunReport> {
    rows.par_iter()
        .map(|r| match r {
            Ok(row) => run_row(row, timing),
            Err(e) => error_report(e),
        })
        .collect()
}
