//! Deterministic channel-response engine.
//!
//! Each time step injects the releases due at that step into the innermost
//! cell, then evaluates a diffusion-only step (radial Green's-function
//! convolution) and a reaction-only step (closed-form Riccati update) from
//! the same post-injection field and combines them additively:
//! `C(t + dt) = C_df + C_rc - C`.

pub mod kernel;
pub mod observe;
pub mod reaction;

use std::sync::Arc;

pub use kernel::{build_kernel, diffusion_step, i0e, KernelMatrix};
pub use observe::{intersection_measure, observe};
pub use reaction::{reaction_step, reaction_step_backward_only, reaction_step_forward_only};

use crate::error::{Error, Result};
use crate::model::{validate, ChannelResponse, RadialField, RadialGrid, ReactionDiffusionConfig, ReleaseSchedule};

/// Loop state of the time-stepping solver.
#[derive(Debug, Clone, PartialEq)]
pub struct SolverState {
    pub field_a: RadialField,
    pub field_b: RadialField,
    pub step: usize,
    pub time: f64,
}

/// Species selector.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Species {
    A,
    B,
}

impl Species {
    pub fn tag(self) -> char {
        match self {
            Species::A => 'A',
            Species::B => 'B',
        }
    }
}

/// Builds the diffusion kernel of `species` for `config`.
pub fn build_species_kernel(config: &ReactionDiffusionConfig, species: Species) -> Result<KernelMatrix> {
    let grid = RadialGrid::from_config(config);
    let diff = match species {
        Species::A => config.diff_a,
        Species::B => config.diff_b,
    };
    build_kernel(&grid, diff, config.dt, config.integration_radius, species.tag())
}

/// Adds the releases scheduled at time `t` to the innermost cell.
pub fn inject(state: &SolverState, schedule: &ReleaseSchedule, t: f64, dt: f64) -> SolverState {
    let step = (t / dt).round() as i64;
    let due = |list: &[crate::model::Release]| -> f64 {
        list.iter()
            .filter(|r| (r.time / dt).round() as i64 == step)
            .map(|r| r.count)
            .sum()
    };
    let mut out = state.clone();
    let v0 = state.field_a.grid.measure[0];
    out.field_a.conc[0] += due(&schedule.releases_a) / v0;
    out.field_b.conc[0] += due(&schedule.releases_b) / v0;
    out
}

/// Reaction-only update without input checks, for the inner loop.
#[inline]
fn react(ca: f64, cb: f64, kf: f64, kb: f64, dt: f64) -> (f64, f64) {
    reaction_step(ca.max(0.0), cb.max(0.0), kf, kb, dt).unwrap_or((ca, cb))
}

/// Solver for one configuration; kernels are shared read-only.
#[derive(Debug, Clone)]
pub struct Solver {
    pub config: ReactionDiffusionConfig,
    pub grid: Arc<RadialGrid>,
    pub kernel_a: Arc<KernelMatrix>,
    pub kernel_b: Arc<KernelMatrix>,
}

impl Solver {
    pub fn new(config: &ReactionDiffusionConfig) -> Result<Self> {
        let config = validate(config.clone())?;
        let grid = Arc::new(RadialGrid::from_config(&config));
        let kernel_a = Arc::new(build_species_kernel(&config, Species::A)?);
        let kernel_b = if config.diff_b == config.diff_a {
            let mut k = (*kernel_a).clone();
            k.species = 'B';
            Arc::new(k)
        } else {
            Arc::new(build_species_kernel(&config, Species::B)?)
        };
        let d = config.distance + config.rx_radius;
        if d > grid.r_max() {
            return Err(Error::ReceiverOutsideGrid {
                inner: config.distance - config.rx_radius,
                outer: d,
                r_max: grid.r_max(),
            });
        }
        Ok(Self { config, grid, kernel_a, kernel_b })
    }

    /// Uniform initial field at `init_conc`.
    pub fn initial_state(&self) -> SolverState {
        SolverState {
            field_a: RadialField::uniform(self.grid.clone(), self.config.init_conc_a, 0.0),
            field_b: RadialField::uniform(self.grid.clone(), self.config.init_conc_b, 0.0),
            step: 0,
            time: 0.0,
        }
    }

    /// Expected receiver counts `(ybar_a, ybar_b)` for the current state.
    pub fn observe(&self, state: &SolverState) -> Result<(f64, f64)> {
        Ok((observe(&state.field_a, &self.config)?, observe(&state.field_b, &self.config)?))
    }

    /// Advances one step, first injecting `add_a`/`add_b` molecules at the origin.
    pub fn advance(&self, state: &mut SolverState, add_a: f64, add_b: f64) {
        let cfg = &self.config;
        let v0 = self.grid.measure[0];
        state.field_a.conc[0] += add_a / v0;
        state.field_b.conc[0] += add_b / v0;
        let m = self.grid.len();
        let mut df_a = vec![0.0; m];
        let mut df_b = vec![0.0; m];
        self.kernel_a.apply(&state.field_a.conc, &mut df_a);
        self.kernel_b.apply(&state.field_b.conc, &mut df_b);
        let reactive = cfg.kf > 0.0 || cfg.kb > 0.0;
        let ca = &mut state.field_a.conc;
        let cb = &mut state.field_b.conc;
        for j in 0..m {
            if reactive {
                let (ra, rb) = react(ca[j], cb[j], cfg.kf, cfg.kb, cfg.dt);
                ca[j] = (df_a[j] + ra - ca[j]).max(0.0);
                cb[j] = (df_b[j] + rb - cb[j]).max(0.0);
            } else {
                ca[j] = df_a[j];
                cb[j] = df_b[j];
            }
        }
        state.step += 1;
        state.time = state.step as f64 * cfg.dt;
        state.field_a.time = state.time;
        state.field_b.time = state.time;
    }

    /// Runs the schedule to `t_max`, observing at every step.
    pub fn run(&self, schedule: &ReleaseSchedule) -> Result<ChannelResponse> {
        let cfg = &self.config;
        let n = cfg.n_steps();
        check_schedule(cfg, schedule)?;
        let (add_a, add_b) = release_table(cfg, schedule, n);
        let mut state = self.initial_state();
        let mut cr = ChannelResponse::default();
        for m in 0..=n {
            let (a, b) = self.observe(&state).map_err(|e| Error::Step {
                step: m,
                time: state.time,
                source: Box::new(e),
            })?;
            cr.push(state.time, a, b);
            if m < n {
                self.advance(&mut state, add_a[m], add_b[m]);
            }
        }
        Ok(cr)
    }
}

fn check_schedule(cfg: &ReactionDiffusionConfig, schedule: &ReleaseSchedule) -> Result<()> {
    if schedule.last_time() > cfg.t_max + 0.5 * cfg.dt {
        return Err(Error::Precondition(format!(
            "release at {:e} s lies beyond t_max = {:e} s",
            schedule.last_time(),
            cfg.t_max
        )));
    }
    if cfg.kf > 0.0 && schedule.has_overlap(cfg.dt) {
        return Err(Error::Precondition(
            "A and B releases share a time step while the species react".into(),
        ));
    }
    Ok(())
}

/// Per-step injected counts for a schedule over `n` steps.
pub(crate) fn release_table(cfg: &ReactionDiffusionConfig, schedule: &ReleaseSchedule, n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut a = vec![0.0; n + 1];
    let mut b = vec![0.0; n + 1];
    for r in &schedule.releases_a {
        let k = cfg.step_of(r.time);
        if k <= n {
            a[k] += r.count;
        }
    }
    for r in &schedule.releases_b {
        let k = cfg.step_of(r.time);
        if k <= n {
            b[k] += r.count;
        }
    }
    (a, b)
}

/// Channel response of `schedule` from `t = 0` to `t_max`.
pub fn compute_cr(config: &ReactionDiffusionConfig, schedule: &ReleaseSchedule) -> Result<ChannelResponse> {
    Solver::new(config)?.run(schedule)
}

/// One explicit Euler step of the reaction-diffusion equations with a
/// conservative finite-volume Laplacian; a cross-check path only.
pub fn first_order_step(state: &SolverState, config: &ReactionDiffusionConfig) -> Result<SolverState> {
    let grid = &state.field_a.grid;
    let m = grid.len();
    let dr = grid.dr;
    let dt = config.dt;
    let face = |k: usize| crate::model::shell_density(grid.dim, k as f64 * dr);
    let lap = |c: &[f64], j: usize| -> f64 {
        let inner = if j == 0 { 0.0 } else { face(j) * (c[j] - c[j - 1]) };
        let outer = if j + 1 == m { 0.0 } else { face(j + 1) * (c[j + 1] - c[j]) };
        (outer - inner) / (grid.measure[j] * dr)
    };
    let mut out = state.clone();
    let (ca, cb) = (&state.field_a.conc, &state.field_b.conc);
    for j in 0..m {
        let rate = config.kb - config.kf * ca[j] * cb[j];
        let a = ca[j] + dt * (config.diff_a * lap(ca, j) + rate);
        let b = cb[j] + dt * (config.diff_b * lap(cb, j) + rate);
        if a < 0.0 || b < 0.0 {
            return Err(Error::FirstOrderUnstable { node: j });
        }
        out.field_a.conc[j] = a;
        out.field_b.conc[j] = b;
    }
    out.step += 1;
    out.time = out.step as f64 * dt;
    out.field_a.time = out.time;
    out.field_b.time = out.time;
    Ok(out)
}
