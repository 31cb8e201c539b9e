//! Per-pixel fidelity weights `Λ = (λᵢⱼ)` and the rules that build them.
//!
//! Every adaptive rule maps into `[λ_min, λ_max]`:
//!
//! * **CTD**: `λ = max{λ_min/λ_max, 1 − ρ}·λ_max`, with `ρ` the relative
//!   reduction of local total variation under Gaussian low-pass filtering
//!   (near 0 on cartoon pixels, near 1 on texture).
//! * **MM**: same shape with `ω`, the distance of a pixel to its local mean,
//!   forced to 1 where mean and median filters disagree by at least `t`.
//! * **THR**: `λ = 10^η`, `η = log λ_max − (1 − u)(log λ_max − log λ_min)`,
//!   evaluated on the evolving solution `u` rather than the input image.
//!
//! The solver divides every map by the spread of the initial fidelity
//! residual (see [`fidelity_spread`]) before using it.

use crate::error::{Error, Result};
use crate::filters::{gaussian_kernel, mean_filter, median_filter};
use crate::grid::{convolve, gradient_magnitude, ImageGrid, Kernel};

/// LTV values below this are treated as flat: `ρ = 0` (cartoon).
pub const LTV_EPS: f64 = 1e-12;

/// Smallest admissible fidelity spread for [`scale_lambda_map`].
pub const SPREAD_EPS: f64 = 1e-12;

/// `0 < λ_min < λ_max < ∞`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LambdaBounds {
    min: f64,
    max: f64,
}

impl LambdaBounds {
    pub fn new(min: f64, max: f64) -> Result<Self> {
        if !(min > 0.0 && min < max && max.is_finite()) {
            return Err(Error::param(format!(
                "lambda bounds must satisfy 0 < min < max < inf, got ({min}, {max})"
            )));
        }
        Ok(Self { min, max })
    }

    pub fn min(&self) -> f64 {
        self.min
    }

    pub fn max(&self) -> f64 {
        self.max
    }

    pub fn contains(&self, lambda: f64) -> bool {
        (self.min..=self.max).contains(&lambda)
    }

    fn clamp(&self, lambda: f64) -> f64 {
        lambda.clamp(self.min, self.max)
    }
}

/// Strictly positive, finite weight per pixel.
#[derive(Clone, Debug, PartialEq)]
pub struct LambdaMap(ImageGrid);

impl LambdaMap {
    pub fn new(values: ImageGrid) -> Result<Self> {
        if values.iter().any(|&v| !(v > 0.0)) {
            return Err(Error::param("lambda values must be strictly positive"));
        }
        Ok(Self(values))
    }

    pub fn uniform(rows: usize, cols: usize, lambda: f64) -> Result<Self> {
        if !(lambda > 0.0 && lambda.is_finite()) {
            return Err(Error::param(format!("lambda must be positive, got {lambda}")));
        }
        Ok(Self(ImageGrid::filled(rows, cols, lambda)))
    }

    pub fn as_grid(&self) -> &ImageGrid {
        &self.0
    }

    pub fn into_grid(self) -> ImageGrid {
        self.0
    }

    pub fn shape(&self) -> (usize, usize) {
        self.0.shape()
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.0.get(i, j)
    }

    pub fn min(&self) -> f64 {
        self.0.min()
    }

    pub fn max(&self) -> f64 {
        self.0.max()
    }

    /// Affine map `(λ − λ_min)/(λ_max − λ_min)` clamped to `[0, 1]`, for display.
    pub fn normalized(&self, bounds: LambdaBounds) -> ImageGrid {
        let span = bounds.max - bounds.min;
        self.0.map(|v| ((v - bounds.min) / span).clamp(0.0, 1.0))
    }
}

/// Which rule produces `Λ`, with its hyperparameters.
#[derive(Clone, Debug, PartialEq)]
pub enum Strategy {
    /// The original non-adaptive model: `λᵢⱼ = λ` everywhere.
    Constant { lambda: f64 },
    /// Cartoon/texture indicator with a Gaussian low-pass filter.
    Ctd { bounds: LambdaBounds, kernel_size: usize, sigma: f64 },
    /// Mean/median filter weights.
    Mm { bounds: LambdaBounds, mean_window: usize, median_window: usize, cutoff: f64 },
    /// Log-linear thresholding of the current iterate.
    Thr { bounds: LambdaBounds },
}

impl Strategy {
    pub fn constant(lambda: f64) -> Self {
        Strategy::Constant { lambda }
    }

    /// Constant `λ`, checked against user bounds.
    pub fn constant_within(lambda: f64, bounds: LambdaBounds) -> Result<Self> {
        if !bounds.contains(lambda) {
            return Err(Error::param(format!(
                "lambda {lambda} outside [{}, {}]",
                bounds.min, bounds.max
            )));
        }
        Ok(Strategy::Constant { lambda })
    }

    /// CTD with a 3×3 Gaussian, σ = 2.
    pub fn ctd(bounds: LambdaBounds) -> Self {
        Strategy::Ctd { bounds, kernel_size: 3, sigma: 2.0 }
    }

    /// MM with mean window 3, median window 7 and cutoff 0.5.
    pub fn mm(bounds: LambdaBounds) -> Self {
        Strategy::Mm { bounds, mean_window: 3, median_window: 7, cutoff: 0.5 }
    }

    pub fn thr(bounds: LambdaBounds) -> Self {
        Strategy::Thr { bounds }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Strategy::Constant { .. } => "cen",
            Strategy::Ctd { .. } => "ctd",
            Strategy::Mm { .. } => "mm",
            Strategy::Thr { .. } => "thr",
        }
    }

    /// `(λ_min, λ_max)`; a constant strategy reports `(λ, λ)`.
    pub fn lambda_range(&self) -> (f64, f64) {
        match self {
            Strategy::Constant { lambda } => (*lambda, *lambda),
            Strategy::Ctd { bounds, .. } | Strategy::Mm { bounds, .. } | Strategy::Thr { bounds } => {
                (bounds.min, bounds.max)
            }
        }
    }

    pub fn bounds(&self) -> Option<LambdaBounds> {
        match self {
            Strategy::Constant { .. } => None,
            Strategy::Ctd { bounds, .. } | Strategy::Mm { bounds, .. } | Strategy::Thr { bounds } => {
                Some(*bounds)
            }
        }
    }

    /// Whether the map must be rebuilt from the current iterate each step.
    pub fn is_dynamic(&self) -> bool {
        matches!(self, Strategy::Thr { .. })
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            Strategy::Constant { lambda } => {
                if !(lambda > 0.0 && lambda.is_finite()) {
                    return Err(Error::param(format!("lambda must be positive, got {lambda}")));
                }
            }
            Strategy::Ctd { kernel_size, sigma, .. } => {
                gaussian_kernel(kernel_size, sigma)?;
            }
            Strategy::Mm { mean_window, median_window, cutoff, .. } => {
                check_mm(mean_window, median_window, cutoff)?;
            }
            Strategy::Thr { .. } => {}
        }
        Ok(())
    }

    /// Map built from the initial iterate `u⁰ = ū`.
    pub fn initial_map(&self, ubar: &ImageGrid) -> Result<LambdaMap> {
        self.validate()?;
        match *self {
            Strategy::Constant { lambda } => LambdaMap::uniform(ubar.rows(), ubar.cols(), lambda),
            Strategy::Ctd { bounds, kernel_size, sigma } => {
                lambda_ctd(ubar, bounds, &gaussian_kernel(kernel_size, sigma)?)
            }
            Strategy::Mm { bounds, mean_window, median_window, cutoff } => {
                lambda_mm(ubar, bounds, mean_window, median_window, cutoff)
            }
            Strategy::Thr { bounds } => lambda_thr(ubar, bounds),
        }
    }
}

fn check_mm(h1: usize, h2: usize, t: f64) -> Result<()> {
    for h in [h1, h2] {
        if h == 0 || h % 2 == 0 {
            return Err(Error::param(format!("filter window must be odd, got {h}")));
        }
    }
    if !(t > 0.0 && t <= 1.0) {
        return Err(Error::param(format!("cutoff must lie in (0, 1], got {t}")));
    }
    Ok(())
}

/// `LTVσ(u) = Lσ * |∇u|`.
pub fn local_total_variation(u: &ImageGrid, k: &Kernel) -> ImageGrid {
    convolve(&gradient_magnitude(u), k)
}

/// `ρ = (LTV(u) − LTV(L*u)) / LTV(u)`, clamped to `[0, 1]`; flat pixels get 0.
pub fn relative_reduction_rate(u: &ImageGrid, k: &Kernel) -> ImageGrid {
    let ltv = local_total_variation(u, k);
    let ltv_smooth = local_total_variation(&convolve(u, k), k);
    ltv.zip_map(&ltv_smooth, |a, b| {
        if a < LTV_EPS {
            0.0
        } else {
            ((a - b) / a).clamp(0.0, 1.0)
        }
    })
}

/// `max{λ_min/λ_max, 1 − x}·λ_max`, written as `max{λ_min, (1 − x)λ_max}`
/// so both endpoints are hit exactly.
fn damped(bounds: LambdaBounds, x: f64) -> f64 {
    bounds.clamp(((1.0 - x) * bounds.max).max(bounds.min))
}

pub fn lambda_ctd(ubar: &ImageGrid, bounds: LambdaBounds, k: &Kernel) -> Result<LambdaMap> {
    let rho = relative_reduction_rate(ubar, k);
    LambdaMap::new(rho.map(|r| damped(bounds, r)))
}

/// `ω = |ū − L_{h1}*ū|` where `|L_{h1}*ū − M_{h2}*ū| < t`, else 1.
pub fn mm_weights(ubar: &ImageGrid, h1: usize, h2: usize, t: f64) -> Result<ImageGrid> {
    check_mm(h1, h2, t)?;
    let mean = mean_filter(ubar, h1)?;
    let median = median_filter(ubar, h2)?;
    let (m, n) = ubar.shape();
    Ok(ImageGrid::from_fn(m, n, |i, j| {
        let (mu, md) = (mean.get(i, j), median.get(i, j));
        if (mu - md).abs() < t {
            (ubar.get(i, j) - mu).abs().min(1.0)
        } else {
            1.0
        }
    }))
}

pub fn lambda_mm(
    ubar: &ImageGrid,
    bounds: LambdaBounds,
    h1: usize,
    h2: usize,
    t: f64,
) -> Result<LambdaMap> {
    let omega = mm_weights(ubar, h1, h2, t)?;
    LambdaMap::new(omega.map(|w| damped(bounds, w)))
}

/// `λ = 10^η`, `η = e_max − (1 − u)(e_max − e_min)`. Exact at `u ∈ {0, 1}`.
pub fn lambda_thr(u: &ImageGrid, bounds: LambdaBounds) -> Result<LambdaMap> {
    let (emin, emax) = (bounds.min.log10(), bounds.max.log10());
    LambdaMap::new(u.map(|v| {
        if v >= 1.0 {
            bounds.max
        } else if v <= 0.0 {
            bounds.min
        } else {
            bounds.clamp(10f64.powf(emax - (1.0 - v) * (emax - emin)))
        }
    }))
}

/// `sᵢⱼ = (c₁ − ūᵢⱼ)² − (c₂ − ūᵢⱼ)²`.
pub fn fidelity_indicator(ubar: &ImageGrid, c1: f64, c2: f64) -> ImageGrid {
    ubar.map(|v| (c1 - v) * (c1 - v) - (c2 - v) * (c2 - v))
}

/// `max sᵢⱼ − min sᵢⱼ`, the scale applied to every map.
pub fn fidelity_spread(ubar: &ImageGrid, c1: f64, c2: f64) -> f64 {
    let s = fidelity_indicator(ubar, c1, c2);
    s.max() - s.min()
}

/// Divide every weight by the fidelity spread.
pub fn scale_lambda_map(lam: &LambdaMap, spread: f64) -> Result<LambdaMap> {
    if !(spread > SPREAD_EPS) || !spread.is_finite() {
        return Err(Error::Degenerate(format!(
            "fidelity spread {spread:e} too small; the image has no two-phase contrast"
        )));
    }
    LambdaMap::new(lam.as_grid().map(|v| v / spread))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::{assert_abs_diff_eq, assert_relative_eq};
    use proptest::prelude::*;
    use super::Strategy;
    use proptest::strategy::Strategy as _;

    fn b(min: f64, max: f64) -> LambdaBounds {
        LambdaBounds::new(min, max).unwrap()
    }

    fn unit_grid(max: usize) -> impl proptest::strategy::Strategy<Value = ImageGrid> {
        (1..=max, 1..=max).prop_flat_map(|(m, n)| {
            prop::collection::vec(0.0f64..=1.0, m * n)
                .prop_map(move |v| ImageGrid::new(m, n, v).unwrap())
        })
    }

    #[test]
    fn bounds_validation() {
        assert!(LambdaBounds::new(0.0, 1.0).is_err());
        assert!(LambdaBounds::new(5.0, 5.0).is_err());
        assert!(LambdaBounds::new(6.0, 5.0).is_err());
        assert!(LambdaBounds::new(1.0, f64::INFINITY).is_err());
        assert!(Strategy::constant_within(0.7e3, b(100.0, 1000.0)).is_ok());
        assert!(Strategy::constant_within(2e3, b(100.0, 1000.0)).is_err());
    }

    #[test]
    fn ltv_cases() {
        let k = gaussian_kernel(3, 2.0).unwrap();
        assert_eq!(local_total_variation(&ImageGrid::filled(5, 5, 0.3), &k), ImageGrid::zeros(5, 5));

        let mut delta = ImageGrid::zeros(5, 5);
        delta.set(2, 2, 1.0);
        assert_eq!(
            local_total_variation(&delta, &Kernel::identity()),
            gradient_magnitude(&delta)
        );
    }

    #[test]
    fn rho_degenerate_cases() {
        let k = gaussian_kernel(3, 2.0).unwrap();
        assert_eq!(relative_reduction_rate(&ImageGrid::filled(6, 6, 0.8), &k), ImageGrid::zeros(6, 6));
        let u = ImageGrid::from_fn(6, 6, |i, j| ((i * 7 + j * 3) % 5) as f64 / 4.0);
        assert_eq!(relative_reduction_rate(&u, &Kernel::identity()), ImageGrid::zeros(6, 6));
    }

    #[test]
    fn rho_on_checkerboard_is_texture() {
        let u = ImageGrid::from_fn(8, 8, |i, j| ((i + j) % 2) as f64);
        let rho = relative_reduction_rate(&u, &gaussian_kernel(3, 2.0).unwrap());
        // smoothing a checkerboard removes most of its variation
        for i in 0..7 {
            for j in 0..7 {
                assert!(rho.get(i, j) > 0.5, "rho({i},{j}) = {}", rho.get(i, j));
            }
        }
    }

    #[test]
    fn ctd_formula_points() {
        let bounds = b(100.0, 1000.0);
        assert_eq!(damped(bounds, 0.0), 1000.0);
        assert_eq!(damped(bounds, 1.0), 100.0);
        assert_eq!(damped(bounds, 0.5), 500.0);
        assert_eq!(damped(b(900.0, 40000.0), 1.0), 900.0);
    }

    #[test]
    fn ctd_on_flat_image_is_lambda_max() {
        let lam = lambda_ctd(&ImageGrid::filled(4, 4, 0.5), b(10.0, 50.0), &gaussian_kernel(3, 2.0).unwrap()).unwrap();
        assert!(lam.as_grid().iter().all(|&v| v == 50.0));
    }

    #[test]
    fn mm_weight_cases() {
        let w = mm_weights(&ImageGrid::filled(5, 5, 0.6), 3, 7, 0.5).unwrap();
        assert_eq!(w, ImageGrid::zeros(5, 5));
        assert!(mm_weights(&ImageGrid::filled(2, 2, 0.1), 3, 7, 0.0).is_err());
        assert!(mm_weights(&ImageGrid::filled(2, 2, 0.1), 4, 7, 0.5).is_err());

        // a bright square in a dark field: near its corner the 3x3 mean and
        // the 7x7 median disagree by more than t = 0.3
        let u = ImageGrid::from_fn(9, 9, |i, j| if i >= 4 && j >= 4 { 1.0 } else { 0.0 });
        let mean = mean_filter(&u, 3).unwrap();
        let median = median_filter(&u, 7).unwrap();
        let w = mm_weights(&u, 3, 7, 0.3).unwrap();
        let mut hit = false;
        for i in 0..9 {
            for j in 0..9 {
                if (mean.get(i, j) - median.get(i, j)).abs() >= 0.3 {
                    assert_eq!(w.get(i, j), 1.0);
                    hit = true;
                }
            }
        }
        assert!(hit);
    }

    #[test]
    fn mm_lambda_points() {
        let bounds = b(10.0, 50.0);
        assert_eq!(damped(bounds, 0.0), 50.0);
        assert_eq!(damped(bounds, 1.0), 10.0);
        assert_eq!(damped(bounds, 0.25), 37.5);
    }

    #[test]
    fn thr_points() {
        let u = ImageGrid::new(1, 3, vec![0.0, 0.5, 1.0]).unwrap();
        let lam = lambda_thr(&u, b(4000.0, 8000.0)).unwrap();
        assert_eq!(lam.get(0, 0), 4000.0);
        assert_relative_eq!(lam.get(0, 1), (4000.0f64 * 8000.0).sqrt(), max_relative = 1e-12);
        assert_abs_diff_eq!(lam.get(0, 1), 5656.854, epsilon = 1e-3);
        assert_eq!(lam.get(0, 2), 8000.0);
    }

    #[test]
    fn scaling() {
        let lam = LambdaMap::uniform(3, 3, 7.0).unwrap();
        assert_eq!(scale_lambda_map(&lam, 1.0).unwrap(), lam);
        assert!(scale_lambda_map(&lam, 2.0).unwrap().as_grid().iter().all(|&v| v == 3.5));
        assert!(matches!(scale_lambda_map(&lam, 0.0), Err(Error::Degenerate(_))));
    }

    #[test]
    fn spread_matches_exhaustive_scan() {
        let ubar = ImageGrid::from_fn(7, 5, |i, j| ((i * 5 + j) % 11) as f64 / 10.0);
        let (c1, c2) = (0.73, 0.21);
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for &v in ubar.iter() {
            let s = (c1 - v).powi(2) - (c2 - v).powi(2);
            lo = lo.min(s);
            hi = hi.max(s);
        }
        assert_abs_diff_eq!(fidelity_spread(&ubar, c1, c2), hi - lo, epsilon = 1e-15);
    }

    #[test]
    fn normalized_heatmap_values() {
        let bounds = b(2.0, 6.0);
        let lam = LambdaMap::new(ImageGrid::new(1, 4, vec![2.0, 4.0, 6.0, 9.0]).unwrap()).unwrap();
        assert_eq!(lam.normalized(bounds).as_slice(), &[0.0, 0.5, 1.0, 1.0]);
    }

    proptest! {
        #[test]
        fn maps_stay_in_bounds(u in unit_grid(12), lo in 1.0f64..1e3, ratio in 1.01f64..100.0) {
            let bounds = b(lo, lo * ratio);
            for s in [Strategy::ctd(bounds), Strategy::mm(bounds), Strategy::thr(bounds)] {
                let lam = s.initial_map(&u).unwrap();
                prop_assert!(lam.as_grid().iter().all(|&v| bounds.contains(v)), "{}", s.name());
            }
        }

        #[test]
        fn thr_is_monotone(u in unit_grid(8), bump in 0.0f64..1.0) {
            let bounds = b(170.0, 800.0);
            let v = u.map(|x| (x + bump).min(1.0));
            let a = lambda_thr(&u, bounds).unwrap();
            let c = lambda_thr(&v, bounds).unwrap();
            for (x, y) in a.as_grid().iter().zip(c.as_grid().iter()) {
                prop_assert!(x <= y);
            }
        }

        #[test]
        fn ctd_is_antitone_in_rho(r1 in 0.0f64..=1.0, r2 in 0.0f64..=1.0) {
            let bounds = b(900.0, 40000.0);
            let (lo, hi) = if r1 <= r2 { (r1, r2) } else { (r2, r1) };
            prop_assert!(damped(bounds, hi) <= damped(bounds, lo));
        }
    }
}
