//! Alternating minimization with split Bregman iterations.
//!
//! One outer iteration `k`:
//!
//! 1. (THR only) rebuild `Λ` from `u^{k−1}`;
//! 2. closed-form region means `c₁, c₂` from `u^{k−1}`;
//! 3. residual `r = Λ ⊙ ((c₁ − ū)² − (c₂ − ū)²)`;
//! 4. `u^k` from Gauss–Seidel sweeps on the u-subproblem, then clamped to `[0, 1]`;
//! 5. `d = S(∇u^k + b^{k−1}, 1/μ)`;
//! 6. `b^k = b^{k−1} + ∇u^k − d^k`.
//!
//! The u-subproblem minimizes
//!
//! ```text
//! ⟨r, u⟩ + μ/2 ‖d − ∇u − b‖² + θμ/2 ‖u − u^{k−1}‖²
//! ```
//!
//! whose optimality system is `(θI − Δ) u = θu^{k−1} − r/μ − div(d − b)`.
//! The proximal term (`θ = SolverConfig::prox`) vanishes at a fixed point
//! and makes the system strictly diagonally dominant; without it the
//! Neumann Laplacian is singular.

use std::fmt::Write as _;

use log::warn;

use crate::error::{Error, Result};
use crate::grid::{divergence_adjoint, forward_diff_x, forward_diff_y, project_unit_interval, ImageGrid, Mask};
use crate::lambda::{fidelity_spread, lambda_thr, scale_lambda_map, LambdaMap, Strategy};

/// Denominators of the region means below this trigger the fallback.
pub const DENOM_EPS: f64 = 1e-12;

#[derive(Clone, Debug, PartialEq)]
pub struct SolverConfig {
    /// Split Bregman penalty `μ`.
    pub mu: f64,
    /// Outer tolerance on successive mean-squared-change differences.
    pub tol: f64,
    pub maxit: usize,
    /// Gauss–Seidel tolerance on `msd^l / msd¹`.
    pub tol_gs: f64,
    pub maxit_gs: usize,
    /// Mask threshold, `Σ = {u > alpha}`.
    pub alpha: f64,
    /// Proximal weight `θ` of the u-subproblem, relative to `μ`.
    pub prox: f64,
}

impl SolverConfig {
    pub fn new(mu: f64) -> Self {
        Self { mu, ..Self::default() }
    }

    pub fn validate(&self) -> Result<()> {
        let positive = |name: &str, v: f64| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(Error::param(format!("{name} must be positive, got {v}")))
            }
        };
        positive("mu", self.mu)?;
        positive("tol", self.tol)?;
        positive("tol_gs", self.tol_gs)?;
        positive("prox", self.prox)?;
        if self.maxit == 0 || self.maxit_gs == 0 {
            return Err(Error::param("iteration caps must be at least 1"));
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::param(format!("alpha must lie in (0, 1), got {}", self.alpha)));
        }
        Ok(())
    }
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self { mu: 1e3, tol: 1e-6, maxit: 30, tol_gs: 1e-2, maxit_gs: 50, alpha: 0.5, prox: 1.0 }
    }
}

/// Per-iteration record, one row of the convergence trace.
#[derive(Clone, Debug, PartialEq)]
pub struct StepRecord {
    pub k: usize,
    /// `(1/mn) Σ (u^k − u^{k−1})²`.
    pub diff: f64,
    pub gs_iters: usize,
    pub c1: f64,
    pub c2: f64,
    /// `‖δx⁺u^k − dx^k‖₂`.
    pub gap_x: f64,
    /// `‖δy⁺u^k − dy^k‖₂`.
    pub gap_y: f64,
}

#[derive(Clone, Debug)]
pub struct SolverState {
    pub u: ImageGrid,
    pub dx: ImageGrid,
    pub dy: ImageGrid,
    pub bx: ImageGrid,
    pub by: ImageGrid,
    pub c1: f64,
    pub c2: f64,
    pub k: usize,
    pub trace: Vec<StepRecord>,
}

impl SolverState {
    /// `u⁰ = ū`, `d⁰ = b⁰ = 0`.
    pub fn initial(ubar: &ImageGrid) -> Self {
        let (m, n) = ubar.shape();
        Self {
            u: ubar.clone(),
            dx: ImageGrid::zeros(m, n),
            dy: ImageGrid::zeros(m, n),
            bx: ImageGrid::zeros(m, n),
            by: ImageGrid::zeros(m, n),
            c1: 0.0,
            c2: 0.0,
            k: 0,
            trace: Vec::new(),
        }
    }

    pub fn diff_history(&self) -> Vec<f64> {
        self.trace.iter().map(|s| s.diff).collect()
    }

    pub fn gs_counts(&self) -> Vec<usize> {
        self.trace.iter().map(|s| s.gs_iters).collect()
    }
}

#[derive(Clone, Debug)]
pub struct SegmentationResult {
    pub u: ImageGrid,
    pub mask: Mask,
    pub c1: f64,
    pub c2: f64,
    pub outer_iterations: usize,
    pub mean_gs_iterations: f64,
    /// Stopped by the tolerance test rather than the iteration cap.
    pub converged: bool,
    /// Unscaled `Λ` used in the last iteration.
    pub lambda: LambdaMap,
    /// Fidelity spread the maps were divided by.
    pub spread: f64,
    pub trace: Vec<StepRecord>,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RegionMeans {
    pub c1: f64,
    pub c2: f64,
    /// Set when the corresponding denominator vanished and the global mean
    /// of `ū` was used instead.
    pub c1_fallback: bool,
    pub c2_fallback: bool,
}

/// Weighted region means:
/// `c₁ = Σλūu / Σλu`, `c₂ = Σλū(1−u) / Σλ(1−u)`.
pub fn update_region_means(u: &ImageGrid, ubar: &ImageGrid, lam: &LambdaMap) -> Result<RegionMeans> {
    u.check_shape(ubar, "region means")?;
    u.check_shape(lam.as_grid(), "region means")?;
    let (mut n1, mut d1, mut n2, mut d2) = (0.0, 0.0, 0.0, 0.0);
    for ((&ui, &vi), &li) in u.iter().zip(ubar.iter()).zip(lam.as_grid().iter()) {
        let w1 = li * ui;
        let w2 = li * (1.0 - ui);
        n1 += w1 * vi;
        d1 += w1;
        n2 += w2 * vi;
        d2 += w2;
    }
    let global = ubar.mean();
    let c1_fallback = d1 < DENOM_EPS;
    let c2_fallback = d2 < DENOM_EPS;
    Ok(RegionMeans {
        c1: if c1_fallback { global } else { n1 / d1 },
        c2: if c2_fallback { global } else { n2 / d2 },
        c1_fallback,
        c2_fallback,
    })
}

/// `rᵢⱼ = λᵢⱼ((c₁ − ūᵢⱼ)² − (c₂ − ūᵢⱼ)²)`.
pub fn fidelity_residual(ubar: &ImageGrid, lam: &LambdaMap, c1: f64, c2: f64) -> ImageGrid {
    ubar.zip_map(lam.as_grid(), |v, l| l * ((c1 - v) * (c1 - v) - (c2 - v) * (c2 - v)))
}

/// Objective of the relaxed model for fixed `c₁, c₂, Λ`: anisotropic TV plus
/// the weighted two-region fidelity.
pub fn model_energy(u: &ImageGrid, ubar: &ImageGrid, lam: &LambdaMap, c1: f64, c2: f64) -> f64 {
    let tv: f64 = forward_diff_x(u).iter().map(|v| v.abs()).sum::<f64>()
        + forward_diff_y(u).iter().map(|v| v.abs()).sum::<f64>();
    let fid: f64 = u
        .iter()
        .zip(ubar.iter())
        .zip(lam.as_grid().iter())
        .map(|((&ui, &vi), &li)| li * ((c1 - vi).powi(2) * ui + (c2 - vi).powi(2) * (1.0 - ui)))
        .sum();
    tv + fid
}

/// Soft-thresholding `sign(v)·max{|v| − γ, 0}`.
#[inline]
pub fn shrink_scalar(v: f64, gamma: f64) -> f64 {
    if v > gamma {
        v - gamma
    } else if v < -gamma {
        v + gamma
    } else {
        0.0
    }
}

pub fn shrink(v: &ImageGrid, gamma: f64) -> ImageGrid {
    v.map(|x| shrink_scalar(x, gamma))
}

/// Data of one u-subproblem.
#[derive(Clone, Debug)]
pub struct USubproblem<'a> {
    pub r: &'a ImageGrid,
    pub dx: &'a ImageGrid,
    pub dy: &'a ImageGrid,
    pub bx: &'a ImageGrid,
    pub by: &'a ImageGrid,
    /// Previous outer iterate, centre of the proximal term.
    pub u_prev: &'a ImageGrid,
    pub mu: f64,
    pub prox: f64,
}

impl USubproblem<'_> {
    /// `⟨r, u⟩ + μ/2 ‖d − ∇u − b‖² + θμ/2 ‖u − u_prev‖²`.
    pub fn objective(&self, u: &ImageGrid) -> f64 {
        let gx = forward_diff_x(u);
        let gy = forward_diff_y(u);
        let mut q = 0.0;
        for idx in 0..u.len() {
            let ex = self.dx.as_slice()[idx] - gx.as_slice()[idx] - self.bx.as_slice()[idx];
            let ey = self.dy.as_slice()[idx] - gy.as_slice()[idx] - self.by.as_slice()[idx];
            let ep = u.as_slice()[idx] - self.u_prev.as_slice()[idx];
            q += self.r.as_slice()[idx] * u.as_slice()[idx]
                + 0.5 * self.mu * (ex * ex + ey * ey)
                + 0.5 * self.prox * self.mu * ep * ep;
        }
        q
    }

    /// Right-hand side `θu_prev − r/μ − div(d − b)`.
    pub fn rhs(&self) -> Result<ImageGrid> {
        let px = self.dx.zip_map(self.bx, |d, b| d - b);
        let py = self.dy.zip_map(self.by, |d, b| d - b);
        let div = divergence_adjoint(&px, &py)?;
        let (m, n) = self.r.shape();
        Ok(ImageGrid::from_fn(m, n, |i, j| {
            self.prox * self.u_prev.get(i, j) - self.r.get(i, j) / self.mu - div.get(i, j)
        }))
    }

    /// Lexicographic Gauss–Seidel on `(θI − Δ)u = rhs`, starting from `u0`,
    /// without projection. Stops once `msd^l ≤ tol·msd¹` or after `maxit`
    /// sweeps; returns the iterate and the number of sweeps.
    pub fn gauss_seidel(&self, u0: &ImageGrid, tol: f64, maxit: usize) -> Result<(ImageGrid, usize)> {
        let rhs = self.rhs()?;
        u0.check_shape(&rhs, "gauss-seidel start")?;
        let (m, n) = u0.shape();
        let mut u = u0.clone();
        let mut msd_first = None;
        let mut sweeps = 0;
        while sweeps < maxit {
            sweeps += 1;
            let mut sq = 0.0;
            let v = u.as_mut_slice();
            for i in 0..m {
                for j in 0..n {
                    let idx = i * n + j;
                    let mut acc = rhs.as_slice()[idx];
                    let mut count = 0.0;
                    if i > 0 {
                        acc += v[idx - n];
                        count += 1.0;
                    }
                    if i + 1 < m {
                        acc += v[idx + n];
                        count += 1.0;
                    }
                    if j > 0 {
                        acc += v[idx - 1];
                        count += 1.0;
                    }
                    if j + 1 < n {
                        acc += v[idx + 1];
                        count += 1.0;
                    }
                    let new = acc / (self.prox + count);
                    sq += (new - v[idx]) * (new - v[idx]);
                    v[idx] = new;
                }
            }
            let msd = sq / (m * n) as f64;
            match msd_first {
                None => {
                    if msd == 0.0 {
                        break;
                    }
                    msd_first = Some(msd);
                }
                Some(first) => {
                    if msd <= tol * first {
                        break;
                    }
                }
            }
        }
        Ok((u, sweeps))
    }
}

/// Gauss–Seidel solve of the u-subproblem warm-started at the current
/// iterate, followed by projection onto `[0, 1]`.
pub fn solve_u_subproblem(state: &SolverState, r: &ImageGrid, cfg: &SolverConfig) -> Result<(ImageGrid, usize)> {
    let sub = USubproblem {
        r,
        dx: &state.dx,
        dy: &state.dy,
        bx: &state.bx,
        by: &state.by,
        u_prev: &state.u,
        mu: cfg.mu,
        prox: cfg.prox,
    };
    let (u, iters) = sub.gauss_seidel(&state.u, cfg.tol_gs, cfg.maxit_gs)?;
    Ok((project_unit_interval(&u), iters))
}

/// Shrinkage and Bregman updates given a fresh `u^k`:
/// `d = S(∇u + b, 1/μ)`, `b ← b + ∇u − d`. Returns the constraint gaps.
fn update_splitting(state: &mut SolverState, mu: f64) -> (f64, f64) {
    let gx = forward_diff_x(&state.u);
    let gy = forward_diff_y(&state.u);
    state.dx = shrink(&gx.zip_map(&state.bx, |g, b| g + b), 1.0 / mu);
    state.dy = shrink(&gy.zip_map(&state.by, |g, b| g + b), 1.0 / mu);
    let ex = gx.zip_map(&state.dx, |g, d| g - d);
    let ey = gy.zip_map(&state.dy, |g, d| g - d);
    state.bx = state.bx.zip_map(&ex, |b, e| b + e);
    state.by = state.by.zip_map(&ey, |b, e| b + e);
    (ex.norm_l2(), ey.norm_l2())
}

/// `|diff^k − diff^{k−1}| ≤ tol` or `k ≥ maxit`.
pub fn outer_stopped(diff_history: &[f64], k: usize, cfg: &SolverConfig) -> bool {
    if k >= cfg.maxit {
        return true;
    }
    match diff_history {
        [.., prev, last] => (last - prev).abs() <= cfg.tol,
        _ => false,
    }
}

/// Stepwise driver for the adaptive segmentation.
#[derive(Clone, Debug)]
pub struct SplitBregman {
    ubar: ImageGrid,
    strategy: Strategy,
    cfg: SolverConfig,
    spread: f64,
    lambda: LambdaMap,
    scaled: LambdaMap,
    state: SolverState,
}

impl SplitBregman {
    /// Initializes `u⁰ = ū`, `d⁰ = b⁰ = 0`, `Λ = f(ū)`, and the scale
    /// `max s − min s` of `s = (c₁ − ū)² − (c₂ − ū)²` at the initial means.
    pub fn new(ubar: &ImageGrid, strategy: Strategy, cfg: SolverConfig) -> Result<Self> {
        cfg.validate()?;
        strategy.validate()?;
        if !ubar.is_unit_range() {
            return Err(Error::param("input image must take values in [0, 1]"));
        }
        let lambda = strategy.initial_map(ubar)?;
        let means = update_region_means(ubar, ubar, &lambda)?;
        let spread = fidelity_spread(ubar, means.c1, means.c2);
        let scaled = scale_lambda_map(&lambda, spread)?;
        let mut state = SolverState::initial(ubar);
        state.c1 = means.c1;
        state.c2 = means.c2;
        Ok(Self { ubar: ubar.clone(), strategy, cfg, spread, lambda, scaled, state })
    }

    pub fn state(&self) -> &SolverState {
        &self.state
    }

    pub fn config(&self) -> &SolverConfig {
        &self.cfg
    }

    /// Unscaled `Λ` currently in use.
    pub fn lambda(&self) -> &LambdaMap {
        &self.lambda
    }

    /// `Λ` divided by the fidelity spread, as consumed by the iteration.
    pub fn scaled_lambda(&self) -> &LambdaMap {
        &self.scaled
    }

    pub fn spread(&self) -> f64 {
        self.spread
    }

    pub fn is_stopped(&self) -> bool {
        outer_stopped(&self.state.diff_history(), self.state.k, &self.cfg)
    }

    /// One outer iteration. Returns the record appended to the trace.
    pub fn step(&mut self) -> Result<&StepRecord> {
        if let Strategy::Thr { bounds } = self.strategy {
            self.lambda = lambda_thr(&self.state.u, bounds)?;
            self.scaled = scale_lambda_map(&self.lambda, self.spread)?;
        }
        let means = update_region_means(&self.state.u, &self.ubar, &self.scaled)?;
        if means.c1_fallback || means.c2_fallback {
            warn!(
                "iteration {}: empty region, falling back to the global mean (c1: {}, c2: {})",
                self.state.k + 1,
                means.c1_fallback,
                means.c2_fallback
            );
        }
        self.state.c1 = means.c1;
        self.state.c2 = means.c2;

        let r = fidelity_residual(&self.ubar, &self.scaled, means.c1, means.c2);
        let (u, gs_iters) = solve_u_subproblem(&self.state, &r, &self.cfg)?;
        let diff = u.mean_sq_diff(&self.state.u);
        self.state.u = u;
        let (gap_x, gap_y) = update_splitting(&mut self.state, self.cfg.mu);

        self.state.k += 1;
        self.state.trace.push(StepRecord {
            k: self.state.k,
            diff,
            gs_iters,
            c1: means.c1,
            c2: means.c2,
            gap_x,
            gap_y,
        });
        Ok(self.state.trace.last().expect("just pushed"))
    }

    /// Iterate until the stopping rule fires, then threshold.
    pub fn run(mut self) -> Result<SegmentationResult> {
        loop {
            self.step()?;
            if self.is_stopped() {
                break;
            }
        }
        let converged = {
            let h = self.state.diff_history();
            h.len() >= 2 && (h[h.len() - 1] - h[h.len() - 2]).abs() <= self.cfg.tol
        };
        let gs = self.state.gs_counts();
        let mean_gs = gs.iter().sum::<usize>() as f64 / gs.len() as f64;
        Ok(SegmentationResult {
            mask: self.state.u.threshold(self.cfg.alpha),
            u: self.state.u,
            c1: self.state.c1,
            c2: self.state.c2,
            outer_iterations: self.state.k,
            mean_gs_iterations: mean_gs,
            converged,
            lambda: self.lambda,
            spread: self.spread,
            trace: self.state.trace,
        })
    }
}

/// Segment `ubar` with the given weight strategy.
pub fn segment(ubar: &ImageGrid, strategy: &Strategy, cfg: &SolverConfig) -> Result<SegmentationResult> {
    SplitBregman::new(ubar, strategy.clone(), cfg.clone())?.run()
}

/// Plain-text convergence table: `k diff gs_iters c1 c2`, one row per
/// outer iteration.
pub fn format_trace(trace: &[StepRecord]) -> String {
    let mut out = String::from("# k\tdiff\tgs_iters\tc1\tc2\n");
    for s in trace {
        let _ = writeln!(out, "{}\t{:.6e}\t{}\t{:.10}\t{:.10}", s.k, s.diff, s.gs_iters, s.c1, s.c2);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use crate::lambda::LambdaBounds;

    fn disk(size: usize, fg: f64, bg: f64) -> ImageGrid {
        let c = size as f64 / 2.0;
        let r = size as f64 / 4.0;
        ImageGrid::from_fn(size, size, |i, j| {
            let (y, x) = (i as f64 + 0.5 - c, j as f64 + 0.5 - c);
            if x * x + y * y <= r * r { fg } else { bg }
        })
    }

    #[test]
    fn config_validation() {
        assert!(SolverConfig::default().validate().is_ok());
        assert!(SolverConfig { alpha: 1.0, ..Default::default() }.validate().is_err());
        assert!(SolverConfig { mu: 0.0, ..Default::default() }.validate().is_err());
        assert!(SolverConfig { maxit_gs: 0, ..Default::default() }.validate().is_err());
    }

    #[test]
    fn region_means_simple_cases() {
        let half = ImageGrid::filled(3, 3, 0.5);
        let lam = LambdaMap::uniform(3, 3, 4.0).unwrap();
        let m = update_region_means(&half, &half, &lam).unwrap();
        assert_abs_diff_eq!(m.c1, 0.5, epsilon = 1e-15);
        assert_abs_diff_eq!(m.c2, 0.5, epsilon = 1e-15);

        let ubar = ImageGrid::new(1, 4, vec![0.9, 0.7, 0.1, 0.3]).unwrap();
        let u = ImageGrid::new(1, 4, vec![1.0, 1.0, 0.0, 0.0]).unwrap();
        let lam = LambdaMap::uniform(1, 4, 123.0).unwrap();
        let m = update_region_means(&u, &ubar, &lam).unwrap();
        assert_abs_diff_eq!(m.c1, 0.8, epsilon = 1e-14);
        assert_abs_diff_eq!(m.c2, 0.2, epsilon = 1e-14);
        assert!(!m.c1_fallback && !m.c2_fallback);
    }

    #[test]
    fn region_means_fall_back_on_empty_region() {
        let ubar = ImageGrid::new(1, 4, vec![0.9, 0.7, 0.1, 0.3]).unwrap();
        let lam = LambdaMap::uniform(1, 4, 1.0).unwrap();
        let m = update_region_means(&ImageGrid::zeros(1, 4), &ubar, &lam).unwrap();
        assert!(m.c1_fallback && !m.c2_fallback);
        assert_abs_diff_eq!(m.c1, 0.5, epsilon = 1e-15);
        let m = update_region_means(&ImageGrid::filled(1, 4, 1.0), &ubar, &lam).unwrap();
        assert!(m.c2_fallback && !m.c1_fallback);
        assert_abs_diff_eq!(m.c2, 0.5, epsilon = 1e-15);
    }

    #[test]
    fn residual_cases() {
        let ubar = ImageGrid::new(1, 3, vec![0.2, 0.5, 0.9]).unwrap();
        let lam = LambdaMap::uniform(1, 3, 2.0).unwrap();
        assert_eq!(fidelity_residual(&ubar, &lam, 0.4, 0.4), ImageGrid::zeros(1, 3));
        let r = fidelity_residual(&ubar, &lam, 0.1, 0.9);
        assert_abs_diff_eq!(r.get(0, 0), -0.96, epsilon = 1e-15);
        assert_abs_diff_eq!(r.get(0, 1), 0.0, epsilon = 1e-15);
        assert!(r.get(0, 2) > 0.0);
    }

    #[test]
    fn shrink_cases() {
        assert_eq!(shrink_scalar(0.0, 0.3), 0.0);
        assert_eq!(shrink_scalar(2.0, 0.5), 1.5);
        assert_eq!(shrink_scalar(-2.0, 0.5), -1.5);
        assert_eq!(shrink_scalar(0.5, 0.5), 0.0);
        for v in (-20..=20).map(|x| x as f64 / 10.0) {
            for g in [0.1, 0.5, 1.0, 2.5] {
                let reference = v.signum() * (v.abs() - g).max(0.0);
                assert_abs_diff_eq!(shrink_scalar(v, g), reference, epsilon = 1e-15);
                if v.abs() <= g {
                    assert_eq!(shrink_scalar(v, g), 0.0);
                }
            }
        }
    }

    #[test]
    fn stopping_rule() {
        let cfg = SolverConfig::default();
        assert!(outer_stopped(&[0.0, 0.0], 2, &cfg));
        assert!(outer_stopped(&[1.0, 0.5], 30, &cfg));
        assert!(!outer_stopped(&[1e-3, 9e-4], 2, &cfg));
        assert!(!outer_stopped(&[1e-3], 1, &cfg));
    }

    #[test]
    fn gs_keeps_constant_when_rhs_vanishes() {
        let z = ImageGrid::zeros(5, 4);
        let u0 = ImageGrid::filled(5, 4, 0.5);
        let sub = USubproblem { r: &z, dx: &z, dy: &z, bx: &z, by: &z, u_prev: &u0, mu: 1e3, prox: 1.0 };
        let (u, iters) = sub.gauss_seidel(&u0, 1e-2, 50).unwrap();
        assert_eq!(u, u0);
        assert_eq!(iters, 1);
    }

    #[test]
    fn binary_image_one_step() {
        let ubar = disk(16, 1.0, 0.0);
        let mut sb = SplitBregman::new(&ubar, Strategy::constant(500.0), SolverConfig::new(1e3)).unwrap();
        sb.step().unwrap();
        let s = sb.state();
        assert!(s.u.is_unit_range());
        assert_abs_diff_eq!(s.c1, 1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(s.c2, 0.0, epsilon = 1e-15);
    }

    #[test]
    fn constant_image_is_degenerate() {
        let err = SplitBregman::new(&ImageGrid::filled(8, 8, 0.4), Strategy::constant(100.0), SolverConfig::default());
        assert!(matches!(err, Err(Error::Degenerate(_))));
        let err = SplitBregman::new(&ImageGrid::zeros(8, 8), Strategy::constant(100.0), SolverConfig::default());
        assert!(matches!(err, Err(Error::Degenerate(_))));
    }

    #[test]
    fn thr_map_follows_previous_iterate() {
        let ubar = disk(16, 0.8, 0.2);
        let bounds = LambdaBounds::new(170.0, 800.0).unwrap();
        let mut sb = SplitBregman::new(&ubar, Strategy::thr(bounds), SolverConfig::new(100.0)).unwrap();
        for _ in 0..4 {
            let prev = sb.state().u.clone();
            sb.step().unwrap();
            assert_eq!(sb.lambda(), &lambda_thr(&prev, bounds).unwrap());
        }
    }

    #[test]
    fn disk_is_recovered() {
        let ubar = disk(32, 0.8, 0.2);
        let res = segment(&ubar, &Strategy::constant(1e3), &SolverConfig::new(1e3)).unwrap();
        assert_eq!(res.mask, ubar.threshold(0.5));
        assert!(res.outer_iterations <= 30);
        assert_eq!(res.mask, res.u.threshold(0.5));
        let gs = res.trace.iter().map(|s| s.gs_iters).sum::<usize>() as f64 / res.trace.len() as f64;
        assert_eq!(res.mean_gs_iterations, gs);
    }

    #[test]
    fn trace_table_has_one_row_per_iteration() {
        let ubar = disk(16, 0.8, 0.2);
        let res = segment(&ubar, &Strategy::constant(700.0), &SolverConfig::new(1e3)).unwrap();
        let table = format_trace(&res.trace);
        assert_eq!(table.lines().count(), res.outer_iterations + 1);
        assert!(table.lines().nth(1).unwrap().starts_with("1\t"));
    }
}
