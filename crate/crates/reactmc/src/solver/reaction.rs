//! Exact reaction-only update for `A + B <-> 0`.
//!
//! The pair `dC/dt = kb - kf C_A C_B` keeps `c1 = C_A - C_B` fixed, which
//! leaves a scalar Riccati equation. Writing `C_A = r_A + u` around the
//! positive root `r_A` of `kf x (x - c1) = kb` gives the logistic form
//!
//! ```text
//! u(t) = u0 exp(-c2 t) / (1 + kf u0 t phi(c2 t)),   phi(x) = (1 - exp(-x)) / x
//! ```
//!
//! with `c2 = kf sqrt(c1^2 + 4 kb/kf)`. This is the closed form in its
//! rationalized shape; it never overflows and its denominator stays above 1/2.

use crate::error::{Error, Result};

/// `(1 - exp(-x)) / x`, continuous at zero.
fn phi(x: f64) -> f64 {
    if x < 1e-8 {
        1.0 - 0.5 * x
    } else {
        -f64::exp_m1(-x) / x
    }
}

fn check_inputs(ca: f64, cb: f64) -> Result<()> {
    if !(ca >= 0.0 && cb >= 0.0) {
        return Err(Error::Precondition(format!(
            "reaction step needs nonnegative concentrations (got {ca:e}, {cb:e})"
        )));
    }
    Ok(())
}

/// Advances both concentrations by `dt` under the reaction-only dynamics.
///
/// Dispatches to [`reaction_step_backward_only`] when `kf = 0` and to
/// [`reaction_step_forward_only`] when `kb = 0`.
pub fn reaction_step(ca: f64, cb: f64, kf: f64, kb: f64, dt: f64) -> Result<(f64, f64)> {
    check_inputs(ca, cb)?;
    if kf == 0.0 {
        return Ok(reaction_step_backward_only(ca, cb, kb, dt));
    }
    if kb == 0.0 {
        return reaction_step_forward_only(ca, cb, kf, dt);
    }
    Ok(riccati(ca, cb, kf, kb, dt))
}

fn riccati(ca: f64, cb: f64, kf: f64, kb: f64, dt: f64) -> (f64, f64) {
    let c1 = ca - cb;
    let kw = kb / kf;
    let s = c1.hypot(2.0 * kw.sqrt());
    // Positive roots for each species, each computed without cancellation.
    let (ra, rb) = if c1 >= 0.0 {
        (0.5 * (s + c1), 2.0 * kw / (s + c1))
    } else {
        (2.0 * kw / (s - c1), 0.5 * (s - c1))
    };
    let c2 = kf * s;
    // Shift the smaller species; it carries the relative precision.
    let (r_small, c_small) = if c1 >= 0.0 { (rb, cb) } else { (ra, ca) };
    let u0 = c_small - r_small;
    let x = c2 * dt;
    let u = u0 * (-x).exp() / (1.0 + kf * u0 * dt * phi(x));
    let small = (r_small + u).max(0.0);
    let large = small + c1.abs();
    if c1 >= 0.0 {
        (large, small)
    } else {
        (small, large)
    }
}

/// Exact `kb -> 0` limit: `dC/dt = -kf C_A C_B`.
pub fn reaction_step_forward_only(ca: f64, cb: f64, kf: f64, dt: f64) -> Result<(f64, f64)> {
    check_inputs(ca, cb)?;
    if !(kf > 0.0) {
        return Err(Error::Precondition("forward-only step needs kf > 0".into()));
    }
    if ca == 0.0 && cb == 0.0 {
        return Ok((0.0, 0.0));
    }
    let c1 = ca - cb;
    if c1.abs() < 1e-9 * (ca + cb) {
        let c = 0.5 * (ca + cb);
        let v = 1.0 / (kf * dt + 1.0 / c);
        return Ok((v + 0.5 * c1, v - 0.5 * c1));
    }
    let (p, q) = if c1 > 0.0 { (ca, cb) } else { (cb, ca) };
    let c = p - q;
    let x = kf * c * dt;
    // q(t) = c q e^{-x} / (c + q (1 - e^{-x})), algebraically the c5 form.
    let q_new = c * q * (-x).exp() / (c - q * f64::exp_m1(-x));
    let p_new = q_new + c;
    Ok(if c1 > 0.0 { (p_new, q_new) } else { (q_new, p_new) })
}

/// Exact `kf -> 0` limit: linear production.
pub fn reaction_step_backward_only(ca: f64, cb: f64, kb: f64, dt: f64) -> (f64, f64) {
    (ca + kb * dt, cb + kb * dt)
}
