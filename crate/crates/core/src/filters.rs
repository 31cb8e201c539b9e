//! Gaussian, mean and median filters. All borders are replicated.

use crate::error::{Error, Result};
use crate::grid::{convolve, ImageGrid, Kernel};

fn check_window(window: usize) -> Result<()> {
    if window == 0 || window % 2 == 0 {
        return Err(Error::param(format!("window must be odd and positive, got {window}")));
    }
    Ok(())
}

/// Rotationally symmetric Gaussian kernel `∝ exp(−(a² + b²)/(2σ²))`,
/// normalized to unit sum.
pub fn gaussian_kernel(size: usize, sigma: f64) -> Result<Kernel> {
    check_window(size)?;
    if !(sigma > 0.0 && sigma.is_finite()) {
        return Err(Error::param(format!("sigma must be positive, got {sigma}")));
    }
    let r = (size / 2) as isize;
    let denom = 2.0 * sigma * sigma;
    let mut w = Vec::with_capacity(size * size);
    for a in -r..=r {
        for b in -r..=r {
            w.push((-((a * a + b * b) as f64) / denom).exp());
        }
    }
    let total: f64 = w.iter().sum();
    w.iter_mut().for_each(|v| *v /= total);
    Kernel::new(size, w)
}

/// Arithmetic mean over a `window × window` neighbourhood.
pub fn mean_filter(u: &ImageGrid, window: usize) -> Result<ImageGrid> {
    check_window(window)?;
    let (lo, hi) = (u.min(), u.max());
    // a mean never leaves the input range; the clamp only absorbs rounding
    Ok(convolve(u, &Kernel::uniform(window)?).map(|v| v.clamp(lo, hi)))
}

/// Exact median over a `window × window` neighbourhood.
pub fn median_filter(u: &ImageGrid, window: usize) -> Result<ImageGrid> {
    check_window(window)?;
    let r = (window / 2) as isize;
    let mid = window * window / 2;
    let mut buf = Vec::with_capacity(window * window);
    let (m, n) = u.shape();
    Ok(ImageGrid::from_fn(m, n, |i, j| {
        buf.clear();
        for a in -r..=r {
            for b in -r..=r {
                buf.push(u.get_clamped(i as isize + a, j as isize + b));
            }
        }
        *buf.select_nth_unstable_by(mid, f64::total_cmp).1
    }))
}
