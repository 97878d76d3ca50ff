//! Expected receiver counts: the radial profile integrated over the receiver.
//!
//! A sphere of radius `r` about the transmitter meets the receiver ball
//! (centre at distance `d`, radius `a`) in a cap of area
//! `2 pi r^2 (1 - cos t*)`, `cos t* = (r^2 + d^2 - a^2) / (2 r d)`; in two
//! dimensions the intersection is an arc of length `2 r t*`, and in one it
//! is a single point. Substituting `r = d - a cos u` removes the square-root
//! behaviour at both ends of `[d - a, d + a]`.

use crate::error::{Error, Result};
use crate::model::{RadialField, ReactionDiffusionConfig};

/// Gauss-Legendre nodes and weights on `[-1, 1]`, 8 points.
const GL_X: [f64; 8] = [
    -0.960_289_856_497_536_3,
    -0.796_666_477_413_626_7,
    -0.525_532_409_916_329_0,
    -0.183_434_642_495_649_8,
    0.183_434_642_495_649_8,
    0.525_532_409_916_329_0,
    0.796_666_477_413_626_7,
    0.960_289_856_497_536_3,
];
const GL_W: [f64; 8] = [
    0.101_228_536_290_376_3,
    0.222_381_034_453_374_5,
    0.313_706_645_877_887_3,
    0.362_683_783_378_362_0,
    0.362_683_783_378_362_0,
    0.313_706_645_877_887_3,
    0.222_381_034_453_374_5,
    0.101_228_536_290_376_3,
];

/// Below this `a/d` ratio the receiver is treated as a point sample.
pub const POINT_RECEIVER_RATIO: f64 = 0.05;

/// Measure of the origin-centred sphere of radius `r` inside the receiver.
pub fn intersection_measure(dim: u8, r: f64, d: f64, a: f64) -> f64 {
    if r <= (d - a).abs() || r >= d + a {
        return 0.0;
    }
    match dim {
        1 => 1.0,
        2 => {
            let c = ((r * r + d * d - a * a) / (2.0 * r * d)).clamp(-1.0, 1.0);
            2.0 * r * c.acos()
        }
        // 2 pi r^2 (1 - cos t*) simplified.
        _ => std::f64::consts::PI * r * (a * a - (r - d) * (r - d)) / d,
    }
}

/// Integrates `field` over the receiver described by `config`.
pub fn observe(field: &RadialField, config: &ReactionDiffusionConfig) -> Result<f64> {
    let (d, a) = (config.distance, config.rx_radius);
    let r_max = field.grid.r_max();
    if d + a > r_max {
        return Err(Error::ReceiverOutsideGrid { inner: d - a, outer: d + a, r_max });
    }
    if a == 0.0 {
        return Ok(0.0);
    }
    if a / d < POINT_RECEIVER_RATIO {
        return Ok(field.at(d) * config.rx_volume());
    }
    let dim = field.grid.dim;
    let dr = field.grid.dr;
    // Breakpoints in u where r crosses a grid node (kinks of the interpolant).
    let mut cuts = vec![0.0];
    let k0 = (((d - a) / dr - 0.5).ceil().max(0.0)) as usize;
    let mut k = k0;
    loop {
        let rk = (k as f64 + 0.5) * dr;
        if rk >= d + a {
            break;
        }
        if rk > d - a {
            cuts.push(((d - rk) / a).clamp(-1.0, 1.0).acos());
        }
        k += 1;
    }
    cuts.push(std::f64::consts::PI);
    let mut total = 0.0;
    for w in cuts.windows(2) {
        let (u0, u1) = (w[0], w[1]);
        let (mid, half) = (0.5 * (u0 + u1), 0.5 * (u1 - u0));
        for (x, wt) in GL_X.iter().zip(GL_W) {
            let u = mid + half * x;
            let r = d - a * u.cos();
            let jac = a * u.sin();
            total += wt * half * field.at(r) * intersection_measure(dim, r, d, a) * jac;
        }
    }
    Ok(total)
}
