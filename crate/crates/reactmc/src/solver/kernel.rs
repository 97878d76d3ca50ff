//! Radial heat-kernel weights and the diffusion step.
//!
//! The n-dimensional Green's function integrated over the angular
//! coordinates leaves a one-dimensional kernel in `(r, r~)`, with
//! `sigma = 4 D dt`:
//!
//! | n | kernel (times `dr`)                                                        |
//! |---|-----------------------------------------------------------------------------|
//! | 1 | `(pi sigma)^-1/2 [g(r - r~) + g(r + r~)]`                                    |
//! | 2 | `(pi sigma)^-1 2 pi r~ g(r - r~) i0e(2 r r~ / sigma)`                        |
//! | 3 | `(pi sigma)^-1/2 (r~ / r) [g(r - r~) - g(r + r~)]`                           |
//!
//! where `g(x) = exp(-x^2 / sigma)` and `i0e(z) = exp(-z) I0(z)`. These are
//! the `cosh`, `I0` and `sinh` forms with the large exponentials folded
//! together, so no intermediate overflows.

use crate::error::{Error, Result};
use crate::model::{RadialField, RadialGrid};

/// Kernel support in units of `sqrt(4 D dt)`; the weight there is `exp(-64)`.
const SUPPORT: f64 = 8.0;

/// Exponentially scaled modified Bessel function `exp(-x) I0(x)` for `x >= 0`.
pub fn i0e(x: f64) -> f64 {
    let x = x.abs();
    if x <= 25.0 {
        let q = 0.25 * x * x;
        let mut term = 1.0;
        let mut sum = 1.0;
        let mut k = 1.0;
        while term > 1e-17 * sum {
            term *= q / (k * k);
            sum += term;
            k += 1.0;
        }
        sum * (-x).exp()
    } else {
        let mut term = 1.0;
        let mut sum = 1.0;
        let mut k = 1.0_f64;
        loop {
            let next = term * (2.0 * k - 1.0).powi(2) / (8.0 * k * x);
            if next < 1e-17 * sum || next > term {
                break;
            }
            term = next;
            sum += term;
            k += 1.0;
        }
        sum / (2.0 * std::f64::consts::PI * x).sqrt()
    }
}

/// Banded transition matrix of one diffusion step for one species.
#[derive(Debug, Clone)]
pub struct KernelMatrix {
    pub species: char,
    pub size: usize,
    /// First column of each row.
    starts: Vec<usize>,
    /// Offset of each row's weights in `weights`; one extra trailing entry.
    offsets: Vec<usize>,
    weights: Vec<f64>,
}

impl KernelMatrix {
    /// Identity operator (zero diffusion coefficient).
    pub fn identity(species: char, size: usize) -> Self {
        Self {
            species,
            size,
            starts: (0..size).collect(),
            offsets: (0..=size).collect(),
            weights: vec![1.0; size],
        }
    }

    /// Nonzero band of row `j` as `(first column, weights)`.
    pub fn row(&self, j: usize) -> (usize, &[f64]) {
        (self.starts[j], &self.weights[self.offsets[j]..self.offsets[j + 1]])
    }

    /// Dense entry `W[j][k]`.
    pub fn entry(&self, j: usize, k: usize) -> f64 {
        let (start, w) = self.row(j);
        if k >= start && k < start + w.len() {
            w[k - start]
        } else {
            0.0
        }
    }

    /// `out = W * input`.
    pub fn apply(&self, input: &[f64], out: &mut [f64]) {
        for (j, o) in out.iter_mut().enumerate() {
            let (start, w) = self.row(j);
            let x = &input[start..start + w.len()];
            *o = w.iter().zip(x).map(|(a, b)| a * b).sum();
        }
    }
}

/// Builds the one-step kernel for diffusion coefficient `diff`.
///
/// Entries farther apart than `integration_radius` are dropped, and each
/// row is rescaled to sum to one so that uniform fields are fixed points.
pub fn build_kernel(
    grid: &RadialGrid,
    diff: f64,
    dt: f64,
    integration_radius: Option<f64>,
    species: char,
) -> Result<KernelMatrix> {
    let m = grid.len();
    if diff == 0.0 {
        return Ok(KernelMatrix::identity(species, m));
    }
    let sigma = 4.0 * diff * dt;
    let dr = grid.dr;
    let mut reach = SUPPORT * sigma.sqrt() + dr;
    if let Some(r) = integration_radius {
        reach = reach.min(r);
    }
    let half = (reach / dr).floor() as usize;
    let pref_odd = dr / (std::f64::consts::PI * sigma).sqrt();
    let pref_2d = dr * 2.0 / sigma;

    let mut starts = Vec::with_capacity(m);
    let mut offsets = Vec::with_capacity(m + 1);
    let mut weights = Vec::with_capacity(m * (2 * half + 1));
    offsets.push(0);
    for j in 0..m {
        let r = grid.radii[j];
        let lo = j.saturating_sub(half);
        let hi = (j + half).min(m - 1);
        let row_start = weights.len();
        for k in lo..=hi {
            let rt = grid.radii[k];
            let gm = (-(r - rt).powi(2) / sigma).exp();
            let w = match grid.dim {
                1 => pref_odd * (gm + (-(r + rt).powi(2) / sigma).exp()),
                2 => pref_2d * rt * gm * i0e(2.0 * r * rt / sigma),
                _ => pref_odd * (rt / r) * (gm - (-(r + rt).powi(2) / sigma).exp()),
            };
            weights.push(w);
        }
        let row = &mut weights[row_start..];
        let sum: f64 = row.iter().sum();
        if !(sum.is_finite() && sum > 0.0) || row.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(Error::KernelOverflow { species, row: j });
        }
        row.iter_mut().for_each(|w| *w /= sum);
        starts.push(lo);
        offsets.push(weights.len());
    }
    Ok(KernelMatrix { species, size: m, starts, offsets, weights })
}

/// One diffusion step of `field` under `kernel`.
pub fn diffusion_step(field: &RadialField, kernel: &KernelMatrix) -> Result<RadialField> {
    if field.conc.len() != kernel.size {
        return Err(Error::GridMismatch { field: field.conc.len(), expected: kernel.size });
    }
    let mut out = vec![0.0; kernel.size];
    kernel.apply(&field.conc, &mut out);
    Ok(RadialField { grid: field.grid.clone(), conc: out, time: field.time })
}
