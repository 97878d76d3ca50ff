//! Particle-based stochastic oracle in three dimensions.
//!
//! Each trial tracks individual molecules: Brownian displacement, removal
//! of A-B pairs closer than the binding radius, Poisson production of new
//! pairs inside a cube, and counting inside the receiver ball. Trials are
//! seeded from `(seed, trial index)` and run in parallel.

use rand::rngs::SmallRng;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson, StandardNormal};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::model::{equilibrium_concentration, validate, ReactionDiffusionConfig, ReleaseSchedule};

pub type Vec3 = [f64; 3];

/// Which closed form produced the binding radius.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Regime {
    /// `dt` far below the critical time: diffusion-limited formula.
    Small,
    /// `dt` far above the critical time: activation-limited formula.
    Large,
}

/// Critical time separating the two binding-radius regimes.
pub fn critical_time(kf: f64, da: f64, db: f64) -> f64 {
    kf * kf / (32.0 * std::f64::consts::PI.powi(2) * (da + db).powi(3))
}

/// Binding radius for the forward reaction and the regime used.
pub fn binding_radius(kf: f64, da: f64, db: f64, dt: f64) -> Result<(f64, Regime)> {
    if !(kf >= 0.0) {
        return Err(Error::Precondition("binding radius needs kf >= 0".into()));
    }
    if kf == 0.0 {
        return Ok((0.0, Regime::Large));
    }
    let t_crt = critical_time(kf, da, db);
    let small_max = t_crt / 10.0;
    let large_min = 2.25 * t_crt * 10.0;
    if dt <= small_max {
        Ok((kf / (4.0 * std::f64::consts::PI * (da + db)), Regime::Small))
    } else if dt >= large_min {
        Ok(((3.0 * kf * dt / (4.0 * std::f64::consts::PI)).cbrt(), Regime::Large))
    } else {
        Err(Error::IntermediateRegime { dt, t_crt, small_max, large_min })
    }
}

/// Unbinding radius: twice the binding radius for small steps, zero otherwise.
pub fn unbinding_radius(rho_b: f64, regime: Regime) -> f64 {
    match regime {
        Regime::Small => 2.0 * rho_b,
        Regime::Large => 0.0,
    }
}

/// Volume swept per unit time by one A-B pair in the steady state of the
/// step-then-react scheme, for binding radius `rho_b` and rms per-axis
/// relative step `sigma`.
///
/// `production` optionally re-inserts pairs at separation `rho_u` at the
/// mass-action rate `kf`, as zeroth-order production does at equilibrium.
///
/// The pair distribution `g(r)` is iterated on a radial grid: a Gaussian
/// relative displacement, removal of everything inside `rho_b`, then the
/// produced pairs. The outer boundary holds `g = 1`; two boundary radii are
/// combined assuming `1 / rate` is linear in the inverse boundary radius.
pub fn steady_state_rate(rho_b: f64, sigma: f64, dt: f64, production: Option<(f64, f64)>) -> f64 {
    if !(rho_b > 0.0 && sigma > 0.0) {
        return 0.0;
    }
    let source = production.map(|(rho_u, kf)| (rho_u, kf * dt));
    let reach = (10.0 * sigma).max(rho_b).max(production.map_or(0.0, |p| 2.0 * p.0));
    let (r1, k1) = (rho_b + reach, rdf_swept_volume(rho_b, sigma, reach, source));
    let (r2, k2) = (rho_b + 2.0 * reach, rdf_swept_volume(rho_b, sigma, 2.0 * reach, source));
    let beta = (1.0 / k2 - 1.0 / k1) / (1.0 / r1 - 1.0 / r2);
    let alpha = 1.0 / k2 + beta / r2;
    1.0 / (alpha * dt)
}

/// Steady-state volume removed per step with `g = 1` held beyond `rho_b + reach`.
fn rdf_swept_volume(rho_b: f64, sigma: f64, reach: f64, source: Option<(f64, f64)>) -> f64 {
    const PER_CELL: f64 = 16.0;
    const TAIL: f64 = 8.0;
    let m = (PER_CELL * rho_b / sigma.min(rho_b)).ceil() as usize;
    let h = rho_b / m as f64;
    let first = ((rho_b - TAIL * sigma).max(0.0) / h).floor() as usize;
    let n_free = ((rho_b + reach) / h).ceil() as usize;
    let n_all = n_free + (TAIL * sigma / h).ceil() as usize;
    let r = |i: usize| (i as f64 + 0.5) * h;
    let shell = |i: usize| 4.0 * std::f64::consts::PI * r(i) * r(i) * h;
    let band = (TAIL * sigma / h).ceil() as usize;
    let norm = h / ((2.0 * std::f64::consts::PI).sqrt() * sigma);
    let two_s2 = 2.0 * sigma * sigma;
    // Row i holds the weights of the source cells lo..hi, scaled by r'^2 / r^2
    // so that the iteration acts on g directly.
    let rows: Vec<(usize, Vec<f64>)> = (first..n_free)
        .map(|i| {
            let lo = i.saturating_sub(band).max(first);
            let hi = (i + band + 1).min(n_all);
            let ri = r(i);
            let w = (lo..hi)
                .map(|j| {
                    let rj = r(j);
                    let k = (ri / rj) * norm * ((-(ri - rj).powi(2) / two_s2).exp() - (-(ri + rj).powi(2) / two_s2).exp());
                    k * rj * rj / (ri * ri)
                })
                .collect();
            (lo, w)
        })
        .collect();
    // Produced pairs are shared linearly between the two cells around rho_u.
    let source = source.map(|(rho_u, volume)| {
        let x = (rho_u / h - 0.5).clamp(first as f64, (n_free - 2) as f64);
        let cell = x.floor() as usize;
        let frac = x - cell as f64;
        (cell, volume * (1.0 - frac) / shell(cell), volume * frac / shell(cell + 1))
    });
    let mut g: Vec<f64> = (0..n_all).map(|i| if i < m { 0.0 } else { 1.0 }).collect();
    let mut next = g.clone();
    let mut swept = 0.0;
    for _ in 0..20_000 {
        for (row, (lo, w)) in rows.iter().enumerate() {
            next[first + row] = w.iter().zip(&g[*lo..]).map(|(a, b)| a * b).sum();
        }
        let now: f64 = (first..m).map(|i| shell(i) * next[i]).sum();
        for v in &mut next[first..m] {
            *v = 0.0;
        }
        if let Some((cell, lower, upper)) = source {
            next[cell] += lower;
            next[cell + 1] += upper;
        }
        std::mem::swap(&mut g, &mut next);
        let done = (now - swept).abs() <= 1e-10 * now;
        swept = now;
        if done {
            break;
        }
    }
    swept
}

/// Unbinding radius at which production at the equilibrium rate keeps the
/// steady-state forward rate of the closed-form binding radius equal to `kf`.
///
/// Pairs produced together react again before they separate unless `rho_u`
/// is large enough; pairs produced far apart leave the depletion around
/// reacting pairs unfilled. The result is zero when coincident pairs already
/// react no faster than `kf`, and twice the binding radius for small steps.
pub fn balanced_unbinding_radius(kf: f64, da: f64, db: f64, dt: f64) -> Result<f64> {
    let (rho_b, regime) = binding_radius(kf, da, db, dt)?;
    let sigma = (2.0 * (da + db) * dt).sqrt();
    if regime == Regime::Small || kf == 0.0 || !(sigma > 0.0) {
        return Ok(unbinding_radius(rho_b, regime));
    }
    let excess = |rho_u: f64| steady_state_rate(rho_b, sigma, dt, Some((rho_u, kf))) / kf - 1.0;
    if excess(0.0) <= 0.0 {
        return Ok(0.0);
    }
    let (mut lo, mut hi) = (0.0, rho_b + 4.0 * sigma);
    if excess(hi) > 0.0 {
        return Err(Error::BindingRadius(kf));
    }
    while hi - lo > 1e-4 * rho_b {
        let mid = 0.5 * (lo + hi);
        if excess(mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// How the binding radius and the placement of produced pairs are chosen.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum BindingRule {
    /// Closed-form radius of the step regime; partners produced
    /// [`unbinding_radius`] apart.
    ClosedForm,
    /// Closed-form radius; partners produced [`balanced_unbinding_radius`]
    /// apart.
    #[default]
    Balanced,
}

impl BindingRule {
    pub fn name(self) -> &'static str {
        match self {
            BindingRule::ClosedForm => "closed-form",
            BindingRule::Balanced => "balanced",
        }
    }
}

impl std::str::FromStr for BindingRule {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "closed-form" => Ok(BindingRule::ClosedForm),
            "balanced" => Ok(BindingRule::Balanced),
            other => Err(Error::Precondition(format!("unknown binding rule '{other}' (closed-form, balanced)"))),
        }
    }
}

/// Simulation-box and reaction choices.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ParticleSettings {
    /// Cube side; `None` picks [`default_box_side`].
    pub box_side: Option<f64>,
    pub binding: BindingRule,
}

/// Box side and reaction radii shared by all trials of a run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrialGeometry {
    pub box_side: f64,
    pub rho_b: f64,
    pub rho_u: f64,
}

impl TrialGeometry {
    pub fn new(config: &ReactionDiffusionConfig, settings: &ParticleSettings) -> Result<Self> {
        let box_side = settings.box_side.unwrap_or_else(|| default_box_side(config));
        let (rho_b, rho_u) = match settings.binding {
            BindingRule::ClosedForm => {
                let (rho_b, regime) = binding_radius(config.kf, config.diff_a, config.diff_b, config.dt)?;
                (rho_b, unbinding_radius(rho_b, regime))
            }
            BindingRule::Balanced => (
                binding_radius(config.kf, config.diff_a, config.diff_b, config.dt)?.0,
                balanced_unbinding_radius(config.kf, config.diff_a, config.diff_b, config.dt)?,
            ),
        };
        Ok(Self { box_side, rho_b, rho_u })
    }
}

/// Cube side that covers the receiver plus six reaction-diffusion screening
/// lengths `sqrt(D / (2 kf C_eq))`, beyond which background depletion at the
/// cube faces does not reach the receiver.
pub fn default_box_side(config: &ReactionDiffusionConfig) -> f64 {
    let reach = config.distance + config.rx_radius;
    let ceq = equilibrium_concentration(config).map(|c| c.0).unwrap_or(0.0);
    if ceq > 0.0 {
        let d = config.diff_a.max(config.diff_b);
        let ell = (d / (2.0 * config.kf * ceq)).sqrt();
        2.0 * (reach + 4.0 * ell)
    } else {
        2.0 * reach
    }
}

/// Molecule positions of one trial.
#[derive(Debug, Clone)]
pub struct ParticleWorld {
    pub pos_a: Vec<Vec3>,
    pub pos_b: Vec<Vec3>,
    pub box_side: f64,
    pub center: Vec3,
    pub rho_b: f64,
    pub rho_u: f64,
    pub seed: u64,
    pub rng: ChaCha8Rng,
    /// Fast generator for Brownian increments, seeded from `rng`.
    motion: SmallRng,
    scratch: Scratch,
}

/// Reusable buffers of the reaction pass.
#[derive(Debug, Clone, Default)]
struct Scratch {
    head: Vec<u32>,
    next: Vec<u32>,
    a_alive: Vec<bool>,
    b_alive: Vec<bool>,
    visits_per_query: f64,
}

fn retain_flagged(v: &mut Vec<Vec3>, keep: &[bool]) {
    let mut w = 0;
    for r in 0..v.len() {
        if keep[r] {
            v[w] = v[r];
            w += 1;
        }
    }
    v.truncate(w);
}

/// Matches each `query` molecule to its nearest free `table` molecule within
/// `rho`. Partners are bucketed in a hashed cell list.
/// Survivor flags land in `a_alive`/`b_alive`, with `swapped` meaning the
/// query species is B.
fn greedy_pairs(query: &[Vec3], table: &[Vec3], rho: f64, sc: &mut Scratch, swapped: bool) -> usize {
    // Coarse cells are cheaper until the chains get long inside dense
    // clouds; the previous pass's chain statistics pick the side.
    let side = if sc.visits_per_query > 8.0 { 2.0 } else { 6.0 };
    let inv_cell = 1.0 / (side * rho);
    let n = table.len();
    let slots = (2 * n).next_power_of_two();
    let shift = 64 - slots.trailing_zeros();
    let hash = |i: i64, j: i64, k: i64| -> usize {
        let key = (i as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15)
            ^ (j as u64).wrapping_mul(0xC2B2_AE3D_27D4_EB4F)
            ^ (k as u64).wrapping_mul(0x1656_67B1_9E37_79F9);
        (key.wrapping_mul(0x9E37_79B9_7F4A_7C15) >> shift) as usize
    };
    // Round-to-nearest through the mantissa of 1.5 * 2^52: branch-free and
    // monotone, which is all the cell lookup needs.
    const MAGIC: f64 = 6_755_399_441_055_744.0;
    let coord = |x: f64| (x * inv_cell + MAGIC).to_bits() as i64;

    sc.head.clear();
    sc.head.resize(slots, u32::MAX);
    sc.next.clear();
    sc.next.resize(n, u32::MAX);
    let (q_alive, t_alive) = if swapped { (&mut sc.b_alive, &mut sc.a_alive) } else { (&mut sc.a_alive, &mut sc.b_alive) };
    q_alive.clear();
    q_alive.resize(query.len(), true);
    t_alive.clear();
    t_alive.resize(n, true);
    // Insert in descending order so every chain lists ascending indices.
    for it in (0..n).rev() {
        let p = &table[it];
        let h = hash(coord(p[0]), coord(p[1]), coord(p[2]));
        sc.next[it] = sc.head[h];
        sc.head[h] = it as u32;
    }

    let rho2 = rho * rho;
    let mut removed = 0;
    let mut visits = 0usize;
    for (iq, pq) in query.iter().enumerate() {
        let lo = [coord(pq[0] - rho), coord(pq[1] - rho), coord(pq[2] - rho)];
        let hi = [coord(pq[0] + rho), coord(pq[1] + rho), coord(pq[2] + rho)];
        let mut best = u32::MAX;
        let mut best_d2 = rho2;
        for i in lo[0]..=hi[0] {
            for j in lo[1]..=hi[1] {
                for k in lo[2]..=hi[2] {
                    let mut it = sc.head[hash(i, j, k)];
                    while it != u32::MAX {
                        let t = it as usize;
                        visits += 1;
                        if t_alive[t] {
                            let pt = &table[t];
                            let d2 = (pq[0] - pt[0]).powi(2) + (pq[1] - pt[1]).powi(2) + (pq[2] - pt[2]).powi(2);
                            if d2 < best_d2 || (d2 == best_d2 && best != u32::MAX && it < best) {
                                best_d2 = d2;
                                best = it;
                            }
                        }
                        it = sc.next[t];
                    }
                }
            }
        }
        if best != u32::MAX {
            t_alive[best as usize] = false;
            q_alive[iq] = false;
            removed += 1;
        }
    }
    // Normalised to the coarse side so the choice does not oscillate.
    let scale = if side == 2.0 { 27.0 } else { 1.0 };
    sc.visits_per_query = scale * visits as f64 / query.len() as f64;
    removed
}

impl ParticleWorld {
    /// Empty world with its own RNG stream `(seed, stream)`.
    pub fn new(box_side: f64, rho_b: f64, rho_u: f64, seed: u64, stream: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(stream);
        let motion = SmallRng::from_rng(&mut rng);
        Self {
            pos_a: Vec::new(),
            pos_b: Vec::new(),
            box_side,
            center: [0.0; 3],
            rho_b,
            rho_u,
            seed,
            rng,
            motion,
            scratch: Scratch::default(),
        }
    }

    /// Molecule counts `(M_A, M_B)`.
    pub fn counts(&self) -> (usize, usize) {
        (self.pos_a.len(), self.pos_b.len())
    }

    pub fn volume(&self) -> f64 {
        self.box_side.powi(3)
    }

    fn uniform_in_box(&mut self) -> Vec3 {
        let h = 0.5 * self.box_side;
        let c = self.center;
        [
            c[0] + self.rng.random_range(-h..h),
            c[1] + self.rng.random_range(-h..h),
            c[2] + self.rng.random_range(-h..h),
        ]
    }

    /// Adds `count` molecules of each species uniformly in the box.
    pub fn seed_uniform(&mut self, count_a: usize, count_b: usize) {
        for _ in 0..count_a {
            let p = self.uniform_in_box();
            self.pos_a.push(p);
        }
        for _ in 0..count_b {
            let p = self.uniform_in_box();
            self.pos_b.push(p);
        }
    }

    /// Releases molecules at the transmitter (origin).
    pub fn release(&mut self, n_a: usize, n_b: usize) {
        self.pos_a.extend(std::iter::repeat_n([0.0; 3], n_a));
        self.pos_b.extend(std::iter::repeat_n([0.0; 3], n_b));
    }

    /// Independent normal increments with per-axis std `sqrt(2 D dt)`.
    pub fn brownian_pass(&mut self, diff_a: f64, diff_b: f64, dt: f64) {
        let sa = (2.0 * diff_a * dt).sqrt();
        let sb = (2.0 * diff_b * dt).sqrt();
        let rng = &mut self.motion;
        for (pos, s) in [(&mut self.pos_a, sa), (&mut self.pos_b, sb)] {
            if s == 0.0 {
                continue;
            }
            for p in pos.iter_mut() {
                for x in p.iter_mut() {
                    let z: f64 = StandardNormal.sample(rng);
                    *x += s * z;
                }
            }
        }
    }

    /// Removes greedily matched A-B pairs closer than `rho_b`; returns the
    /// number of pairs removed.
    ///
    /// Molecules of the less numerous species (A on ties) are visited in
    /// ascending index order, each taking the nearest still available
    /// partner, ties going to the lower index.
    pub fn forward_reaction_pass(&mut self) -> usize {
        let rho = self.rho_b;
        if rho <= 0.0 || self.pos_a.is_empty() || self.pos_b.is_empty() {
            return 0;
        }
        let sc = &mut self.scratch;
        let removed = if self.pos_a.len() <= self.pos_b.len() {
            greedy_pairs(&self.pos_a, &self.pos_b, rho, sc, false)
        } else {
            greedy_pairs(&self.pos_b, &self.pos_a, rho, sc, true)
        };
        if removed > 0 {
            retain_flagged(&mut self.pos_a, &sc.a_alive);
            retain_flagged(&mut self.pos_b, &sc.b_alive);
        }
        removed
    }

    /// Inserts `Poisson(V kb dt)` new A-B pairs; returns the number inserted.
    pub fn backward_reaction_pass(&mut self, kb: f64, dt: f64) -> usize {
        let mean = self.volume() * kb * dt;
        if !(mean > 0.0) {
            return 0;
        }
        let n = Poisson::new(mean).expect("positive mean").sample(&mut self.rng) as usize;
        for _ in 0..n {
            let a = self.uniform_in_box();
            let b = if self.rho_u > 0.0 {
                let dir = random_direction(&mut self.rng);
                [a[0] + self.rho_u * dir[0], a[1] + self.rho_u * dir[1], a[2] + self.rho_u * dir[2]]
            } else {
                a
            };
            self.pos_a.push(a);
            self.pos_b.push(b);
        }
        n
    }

    /// Molecules of each species inside the ball of radius `a` at `(d, 0, 0)`.
    pub fn count_in_receiver(&self, d: f64, a: f64) -> (u32, u32) {
        let a2 = a * a;
        let inside = |p: &Vec3| (p[0] - d).powi(2) + p[1] * p[1] + p[2] * p[2] <= a2;
        (
            self.pos_a.iter().filter(|p| inside(p)).count() as u32,
            self.pos_b.iter().filter(|p| inside(p)).count() as u32,
        )
    }
}

/// Uniformly distributed unit vector.
pub fn random_direction<R: Rng>(rng: &mut R) -> Vec3 {
    let z: f64 = rng.random_range(-1.0..1.0);
    let phi: f64 = rng.random_range(0.0..std::f64::consts::TAU);
    let s = (1.0 - z * z).sqrt();
    [s * phi.cos(), s * phi.sin(), z]
}

/// Receiver counts of every trial at every step.
#[derive(Debug, Clone, PartialEq)]
pub struct ParticleEnsemble {
    pub times: Vec<f64>,
    /// `counts_a[trial][step]`.
    pub counts_a: Vec<Vec<u32>>,
    pub counts_b: Vec<Vec<u32>>,
}

impl ParticleEnsemble {
    pub fn n_trials(&self) -> usize {
        self.counts_a.len()
    }

    /// Ensemble mean per instant.
    pub fn mean(&self) -> (Vec<f64>, Vec<f64>) {
        (column_mean(&self.counts_a), column_mean(&self.counts_b))
    }

    /// Ensemble variance (unbiased) per instant.
    pub fn variance(&self) -> (Vec<f64>, Vec<f64>) {
        (column_var(&self.counts_a), column_var(&self.counts_b))
    }

    /// Half-width of the normal-approximation 95% band on the mean.
    pub fn half_width(&self) -> (Vec<f64>, Vec<f64>) {
        let n = self.n_trials() as f64;
        let (va, vb) = self.variance();
        let hw = |v: Vec<f64>| v.into_iter().map(|x| 1.96 * (x / n).sqrt()).collect();
        (hw(va), hw(vb))
    }

    /// Index of the recorded instant closest to `t`.
    pub fn index_of(&self, t: f64) -> usize {
        let mut best = 0;
        for (i, &ti) in self.times.iter().enumerate() {
            if (ti - t).abs() < (self.times[best] - t).abs() {
                best = i;
            }
        }
        best
    }

    /// Empirical distribution `(count, frequency)` of one species at instant `step`.
    pub fn histogram(&self, species_a: bool, step: usize) -> Vec<(u32, f64)> {
        let data = if species_a { &self.counts_a } else { &self.counts_b };
        let max = data.iter().map(|c| c[step]).max().unwrap_or(0) as usize;
        let mut h = vec![0usize; max + 1];
        for c in data {
            h[c[step] as usize] += 1;
        }
        let n = data.len() as f64;
        h.into_iter().enumerate().map(|(k, c)| (k as u32, c as f64 / n)).collect()
    }

    pub fn mean_csv(&self) -> String {
        let (ma, mb) = self.mean();
        let mut s = String::from("t,ybar_a,ybar_b,n_trials\n");
        for i in 0..self.times.len() {
            s.push_str(&format!("{:e},{:e},{:e},{}\n", self.times[i], ma[i], mb[i], self.n_trials()));
        }
        s
    }

    pub fn histogram_csv(&self, species_a: bool, step: usize) -> String {
        let mut s = String::from("count,freq\n");
        for (k, f) in self.histogram(species_a, step) {
            s.push_str(&format!("{k},{f:e}\n"));
        }
        s
    }
}

fn column_mean(rows: &[Vec<u32>]) -> Vec<f64> {
    let n = rows.len() as f64;
    let m = rows.first().map_or(0, |r| r.len());
    (0..m).map(|j| rows.iter().map(|r| r[j] as f64).sum::<f64>() / n).collect()
}

fn column_var(rows: &[Vec<u32>]) -> Vec<f64> {
    let mean = column_mean(rows);
    let n = rows.len() as f64;
    mean.iter()
        .enumerate()
        .map(|(j, mu)| rows.iter().map(|r| (r[j] as f64 - mu).powi(2)).sum::<f64>() / (n - 1.0).max(1.0))
        .collect()
}

/// Runs one trial; returns receiver counts at `t = m dt` for `m = 0..=n_steps`.
pub fn run_trial(
    config: &ReactionDiffusionConfig,
    schedule: &ReleaseSchedule,
    geometry: &TrialGeometry,
    seed: u64,
    trial: u64,
) -> Result<(Vec<u32>, Vec<u32>)> {
    let mut w = ParticleWorld::new(geometry.box_side, geometry.rho_b, geometry.rho_u, seed, trial);
    let n = config.n_steps();
    let (add_a, add_b) = crate::solver::release_table(config, schedule, n);
    if config.init_conc_a > 0.0 || config.init_conc_b > 0.0 {
        let v = w.volume();
        let draw = |rng: &mut ChaCha8Rng, c: f64| {
            if c * v > 0.0 {
                Poisson::new(c * v).expect("positive mean").sample(rng) as usize
            } else {
                0
            }
        };
        let na = draw(&mut w.rng, config.init_conc_a);
        let nb = draw(&mut w.rng, config.init_conc_b);
        w.seed_uniform(na, nb);
    }
    let (d, a) = (config.distance, config.rx_radius);
    let mut ya = Vec::with_capacity(n + 1);
    let mut yb = Vec::with_capacity(n + 1);
    let (c0a, c0b) = w.count_in_receiver(d, a);
    ya.push(c0a);
    yb.push(c0b);
    for m in 0..n {
        w.release(add_a[m].round() as usize, add_b[m].round() as usize);
        w.brownian_pass(config.diff_a, config.diff_b, config.dt);
        w.forward_reaction_pass();
        w.backward_reaction_pass(config.kb, config.dt);
        let (ca, cb) = w.count_in_receiver(d, a);
        ya.push(ca);
        yb.push(cb);
    }
    Ok((ya, yb))
}

/// Runs `n_trials` independent trials of the particle simulation.
pub fn run_particle_sim(
    config: &ReactionDiffusionConfig,
    schedule: &ReleaseSchedule,
    n_trials: usize,
    seed: u64,
    settings: &ParticleSettings,
) -> Result<ParticleEnsemble> {
    let config = validate(config.clone())?;
    if config.dim != 3 {
        return Err(Error::Precondition("the particle simulator is three-dimensional".into()));
    }
    let geometry = TrialGeometry::new(&config, settings)?;
    let results: Vec<Result<(Vec<u32>, Vec<u32>)>> = (0..n_trials as u64)
        .into_par_iter()
        .map(|trial| run_trial(&config, schedule, &geometry, seed, trial))
        .collect();
    let mut counts_a = Vec::with_capacity(n_trials);
    let mut counts_b = Vec::with_capacity(n_trials);
    for r in results {
        let (a, b) = r?;
        counts_a.push(a);
        counts_b.push(b);
    }
    let times = (0..=config.n_steps()).map(|m| m as f64 * config.dt).collect();
    Ok(ParticleEnsemble { times, counts_a, counts_b })
}
