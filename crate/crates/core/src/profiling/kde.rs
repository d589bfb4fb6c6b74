//! One-dimensional Gaussian kernel density estimation over latency samples.

use std::f64::consts::PI;

use serde::Serialize;

use super::percentile::{percentile_sorted, sorted_finite};
use super::StatsError;

pub const DEFAULT_GRID_POINTS: usize = 512;

/// Kernel contributions beyond this many bandwidths are below 1e-10 and
/// skipped.
const KERNEL_CUTOFF: f64 = 7.0;

/// Density estimate sampled on an even grid.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct KdeProfile {
    pub grid: Vec<f64>,
    pub density: Vec<f64>,
    pub bandwidth_ms: f64,
    pub n_samples: usize,
}

impl KdeProfile {
    /// Trapezoidal integral of the density over the grid.
    pub fn integral(&self) -> f64 {
        trapezoid(&self.grid, &self.density)
    }

    pub fn max_density(&self) -> f64 {
        self.density.iter().copied().fold(0.0, f64::max)
    }
}

fn trapezoid(x: &[f64], y: &[f64]) -> f64 {
    x.windows(2)
        .zip(y.windows(2))
        .map(|(xs, ys)| 0.5 * (xs[1] - xs[0]) * (ys[0] + ys[1]))
        .sum()
}

/// Silverman's rule: `0.9 * min(sd, IQR / 1.34) * n^(-1/5)`.
///
/// Falls back to the standard deviation alone when the IQR is zero.
pub fn silverman_bandwidth(sorted: &[f64]) -> f64 {
    let n = sorted.len() as f64;
    let mean = sorted.iter().sum::<f64>() / n;
    let var = sorted.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    let sd = var.sqrt();
    let iqr = percentile_sorted(sorted, 0.75) - percentile_sorted(sorted, 0.25);
    let spread = if iqr > 0.0 { sd.min(iqr / 1.34) } else { sd };
    0.9 * spread * n.powf(-0.2)
}

/// Gaussian KDE on `grid_points` even points spanning `[min - 3h, max + 3h]`.
///
/// Mass falling outside the grid is redistributed by normalizing the
/// sampled density to unit trapezoidal integral.
pub fn kde(samples: &[f64], bandwidth: Option<f64>, grid_points: usize) -> Result<KdeProfile, StatsError> {
    let sorted = sorted_finite(samples)?;
    if sorted.first() == sorted.last() {
        return Err(StatsError::Degenerate);
    }
    if grid_points < 2 {
        return Err(StatsError::BadParameter(format!(
            "grid_points must be >= 2, got {grid_points}"
        )));
    }
    let h = match bandwidth {
        Some(h) if h.is_finite() && h > 0.0 => h,
        Some(h) => return Err(StatsError::BadParameter(format!("bandwidth must be positive, got {h}"))),
        None => silverman_bandwidth(&sorted),
    };
    let lo = sorted[0] - 3.0 * h;
    let hi = sorted[sorted.len() - 1] + 3.0 * h;
    let step = (hi - lo) / (grid_points - 1) as f64;
    let grid: Vec<f64> = (0..grid_points).map(|i| lo + step * i as f64).collect();

    let norm = 1.0 / ((2.0 * PI).sqrt() * h * sorted.len() as f64);
    let reach = KERNEL_CUTOFF * h;
    let mut start = 0usize;
    let mut density: Vec<f64> = Vec::with_capacity(grid_points);
    for &x in &grid {
        while start < sorted.len() && sorted[start] < x - reach {
            start += 1;
        }
        let sum: f64 = sorted[start..]
            .iter()
            .take_while(|&&s| s <= x + reach)
            .map(|&s| {
                let z = (x - s) / h;
                (-0.5 * z * z).exp()
            })
            .sum();
        density.push(sum * norm);
    }

    let area = trapezoid(&grid, &density);
    if area > 0.0 {
        density.iter_mut().for_each(|d| *d /= area);
    }
    Ok(KdeProfile {
        grid,
        density,
        bandwidth_ms: h,
        n_samples: sorted.len(),
    })
}

/// Locations of strict local maxima whose topographic prominence is at
/// least `min_prominence * max(density)`, ascending.
///
/// Prominence of a peak is its height above the higher of the two lowest
/// points separating it from higher terrain (or the grid edge) on each side.
pub fn modes(profile: &KdeProfile, min_prominence: f64) -> Vec<f64> {
    let d = &profile.density;
    let threshold = min_prominence * profile.max_density();
    let mut out = Vec::new();
    for i in 1..d.len().saturating_sub(1) {
        if !(d[i] > d[i - 1] && d[i] > d[i + 1]) {
            continue;
        }
        let mut left_min = d[i];
        for &v in d[..i].iter().rev() {
            if v > d[i] {
                break;
            }
            left_min = left_min.min(v);
        }
        let mut right_min = d[i];
        for &v in &d[i + 1..] {
            if v > d[i] {
                break;
            }
            right_min = right_min.min(v);
        }
        let prominence = d[i] - left_min.max(right_min);
        if prominence >= threshold && prominence > 0.0 {
            out.push(profile.grid[i]);
        }
    }
    out
}
