//! Modulation schedules and detectors for Poisson receiver counts.
//!
//! A receiver that counts only type-A molecules is a 1TM receiver; one that
//! counts both species is a 2TM receiver. Means for every bit sequence come
//! from the solver, evaluated over a prefix tree of symbol intervals so that
//! sequences sharing a prefix share its computation.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rand_distr::{Distribution, Poisson};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{
    equilibrium_concentration, validate, CrTable, ReactionDiffusionConfig, ReleaseSchedule, SchemeKind,
};
use crate::solver::{Solver, SolverState};

/// Means below this are clamped before taking logarithms or ratios.
pub const MEAN_FLOOR: f64 = 1e-6;

/// A modulation family with its secondary-release offsets.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModulationScheme {
    pub kind: SchemeKind,
    /// Offset of the A release for bit 0 (OSK).
    pub tau0: Option<f64>,
    /// Offset of the B release for bit 1 (OOK, OSK).
    pub tau1: Option<f64>,
}

impl ModulationScheme {
    /// Scheme without offsets; the non-reactive two-species OOK fixes `tau1 = 0`.
    pub fn new(kind: SchemeKind) -> Self {
        let tau1 = (kind == SchemeKind::NonReactiveOOK2TM).then_some(0.0);
        Self { kind, tau0: None, tau1 }
    }

    pub fn with_taus(kind: SchemeKind, tau0: f64, tau1: f64) -> Self {
        Self { kind, tau0: Some(tau0), tau1: Some(tau1) }
    }

    /// True if the schedule depends on `tau0`/`tau1` from [`compute_tau`].
    pub fn needs_tau(&self) -> bool {
        matches!(self.kind, SchemeKind::OOK | SchemeKind::OSK)
    }

    /// Fills missing offsets from [`compute_tau`].
    pub fn resolve(mut self, config: &ReactionDiffusionConfig) -> Result<Self> {
        if self.needs_tau() && (self.tau1.is_none() || (self.kind == SchemeKind::OSK && self.tau0.is_none())) {
            let (t0, t1) = compute_tau(config)?;
            self.tau0 = self.tau0.or(Some(t0));
            self.tau1 = self.tau1.or(Some(t1));
        }
        Ok(self)
    }

    /// Releases `(offset within the symbol, count)` of each species for one bit.
    #[allow(clippy::type_complexity)]
    pub fn symbol_releases(&self, bit: u8, config: &ReactionDiffusionConfig) -> Result<(Vec<(f64, f64)>, Vec<(f64, f64)>)> {
        let (na, nb) = (config.n_tx_a, config.n_tx_b);
        let tau = |t: Option<f64>| -> Result<f64> {
            let t = t.ok_or(Error::MissingTau(self.kind.name()))?;
            if !(t >= 0.0 && t < config.t_symb) {
                return Err(Error::Precondition(format!("tau = {t:e} s must lie in [0, t_symb)")));
            }
            Ok(t)
        };
        Ok(match (self.kind, bit) {
            (SchemeKind::MoSK, 1) => (vec![(0.0, na)], vec![]),
            (SchemeKind::MoSK, _) => (vec![], vec![(0.0, nb)]),
            (SchemeKind::OOK | SchemeKind::NonReactiveOOK2TM, 1) => (vec![(0.0, na)], vec![(tau(self.tau1)?, nb)]),
            (SchemeKind::OOK | SchemeKind::NonReactiveOOK2TM, _) => (vec![], vec![]),
            (SchemeKind::OSK, 1) => (vec![(0.0, na)], vec![(tau(self.tau1)?, nb)]),
            (SchemeKind::OSK, _) => (vec![(tau(self.tau0)?, na)], vec![(0.0, nb)]),
            (SchemeKind::ConvOOK1TM, 1) => (vec![(0.0, na)], vec![]),
            (SchemeKind::ConvOOK1TM, _) => (vec![], vec![]),
        })
    }
}

impl fmt::Display for ModulationScheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.kind.name())
    }
}

/// Release schedule of a bit sequence, symbol `k` starting at `k t_symb`.
pub fn build_schedule(scheme: &ModulationScheme, bits: &[u8], config: &ReactionDiffusionConfig) -> Result<ReleaseSchedule> {
    let mut times_a = Vec::new();
    let mut times_b = Vec::new();
    for (k, &bit) in bits.iter().enumerate() {
        let start = k as f64 * config.t_symb;
        let (ra, rb) = scheme.symbol_releases(bit, config)?;
        times_a.extend(ra.into_iter().map(|(t, n)| crate::model::Release { time: start + t, count: n }));
        times_b.extend(rb.into_iter().map(|(t, n)| crate::model::Release { time: start + t, count: n }));
    }
    ReleaseSchedule::new(times_a, times_b)
}

/// Same system with the reactions switched off and a uniform background
/// at the reactive equilibrium, so both carry the same noise level.
pub fn non_reactive(config: &ReactionDiffusionConfig) -> ReactionDiffusionConfig {
    let ceq = equilibrium_concentration(config).map(|c| c.0).unwrap_or(0.0);
    ReactionDiffusionConfig { kf: 0.0, kb: 0.0, init_conc_a: ceq, init_conc_b: ceq, ..config.clone() }
}

/// Configuration a scheme is evaluated under: the two benchmark kinds are
/// non-reactive by definition, the others use `config` as given.
pub fn channel_config(config: &ReactionDiffusionConfig, kind: SchemeKind) -> ReactionDiffusionConfig {
    match kind {
        SchemeKind::ConvOOK1TM | SchemeKind::NonReactiveOOK2TM if config.kf > 0.0 || config.kb > 0.0 => non_reactive(config),
        _ => config.clone(),
    }
}

/// Peak instants `(tau0, tau1)` of the single-release responses of B and A.
///
/// Each species is released alone at `t = 0` with zero initial field; the
/// argmax over `(0, t_symb)` on the step grid is returned, ties to the
/// earliest step.
pub fn compute_tau(config: &ReactionDiffusionConfig) -> Result<(f64, f64)> {
    let mut cfg = config.clone();
    cfg.init_conc_a = 0.0;
    cfg.init_conc_b = 0.0;
    let solver = Solver::new(&cfg)?;
    let n = cfg.step_of(cfg.t_symb);
    let peak = |add_a: f64, add_b: f64, pick_a: bool| -> Result<f64> {
        let mut state = solver.initial_state();
        let (mut best, mut best_step) = (0.0, 0);
        for m in 0..n.saturating_sub(1) {
            if m == 0 {
                solver.advance(&mut state, add_a, add_b);
            } else {
                solver.advance(&mut state, 0.0, 0.0);
            }
            let (a, b) = solver.observe(&state)?;
            let y = if pick_a { a } else { b };
            if y > best {
                best = y;
                best_step = state.step;
            }
        }
        if best_step == 0 {
            return Err(Error::FlatResponse(if pick_a { 'A' } else { 'B' }));
        }
        Ok(best_step as f64 * cfg.dt)
    };
    let tau1 = peak(cfg.n_tx_a, 0.0, true)?;
    let tau0 = peak(0.0, cfg.n_tx_b, false)?;
    Ok((tau0, tau1))
}

/// Sample means of every bit prefix up to length `depth`.
///
/// `levels[k][p]` holds `[ybar_a, ybar_b]` at `k t_symb + t_samp` for the
/// prefix `p` of length `k + 1`, packed oldest bit first.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SymbolTree {
    pub levels: Vec<Vec<[f64; 2]>>,
}

impl SymbolTree {
    pub fn depth(&self) -> usize {
        self.levels.len()
    }

    /// Means at each of the `depth` sample instants for the full sequence `index`.
    pub fn sequence_means(&self, index: usize) -> Vec<[f64; 2]> {
        let k = self.depth();
        (0..k).map(|j| self.levels[j][index >> (k - 1 - j)]).collect()
    }
}

/// Step layout of one symbol interval.
struct Interval {
    steps: usize,
    sample: usize,
    rel_a: [Vec<f64>; 2],
    rel_b: [Vec<f64>; 2],
}

fn interval_layout(config: &ReactionDiffusionConfig, scheme: &ModulationScheme) -> Result<Interval> {
    let steps = config.step_of(config.t_symb);
    let sample = config.step_of(config.t_samp);
    if sample == 0 || sample >= steps {
        return Err(Error::Precondition("t_symb and t_samp must span distinct time steps".into()));
    }
    let mut rel_a = [vec![0.0; steps], vec![0.0; steps]];
    let mut rel_b = [vec![0.0; steps], vec![0.0; steps]];
    for bit in 0..2u8 {
        let (ra, rb) = scheme.symbol_releases(bit, config)?;
        for (t, n) in ra {
            rel_a[bit as usize][config.step_of(t).min(steps - 1)] += n;
        }
        for (t, n) in rb {
            rel_b[bit as usize][config.step_of(t).min(steps - 1)] += n;
        }
        if config.kf > 0.0 && (0..steps).any(|m| rel_a[bit as usize][m] > 0.0 && rel_b[bit as usize][m] > 0.0) {
            return Err(Error::Precondition(format!(
                "{} releases A and B in the same time step while the species react",
                scheme.kind
            )));
        }
    }
    Ok(Interval { steps, sample, rel_a, rel_b })
}

/// Evaluates all bit sequences of length `depth` with zero history.
///
/// Linear systems (`kf = kb = 0`) are assembled by superposition of the two
/// single-release responses; otherwise the prefix tree is walked depth first
/// with one solver state per level.
pub fn evaluate_symbol_tree(config: &ReactionDiffusionConfig, scheme: &ModulationScheme, depth: usize) -> Result<SymbolTree> {
    if depth == 0 {
        return Err(Error::Precondition("sequence length must be at least 1".into()));
    }
    let config = validate(config.clone())?;
    let layout = interval_layout(&config, scheme)?;
    let solver = Solver::new(&config)?;
    if config.kf == 0.0 && config.kb == 0.0 {
        return superpose(&solver, &layout, depth);
    }
    let state = solver.initial_state();
    let levels = expand(&solver, &layout, state, 0, depth)?;
    Ok(SymbolTree { levels })
}

fn run_interval(solver: &Solver, layout: &Interval, state: &mut SolverState, bit: usize, last: bool) -> Result<[f64; 2]> {
    let start = state.step;
    let mut sample = None;
    let end = if last { layout.sample } else { layout.steps };
    for m in 0..end {
        solver.advance(state, layout.rel_a[bit][m], layout.rel_b[bit][m]);
        if m + 1 == layout.sample {
            let (a, b) = solver.observe(state).map_err(|e| Error::Step {
                step: state.step,
                time: state.time,
                source: Box::new(e),
            })?;
            sample = Some([a, b]);
        }
    }
    debug_assert_eq!(state.step, start + end);
    Ok(sample.expect("sample step lies inside the interval"))
}

fn expand(solver: &Solver, layout: &Interval, state: SolverState, level: usize, depth: usize) -> Result<Vec<Vec<[f64; 2]>>> {
    let last = level + 1 == depth;
    let branch = |bit: usize| -> Result<([f64; 2], Vec<Vec<[f64; 2]>>)> {
        let mut s = state.clone();
        let sample = run_interval(solver, layout, &mut s, bit, last)?;
        let sub = if last { Vec::new() } else { expand(solver, layout, s, level + 1, depth)? };
        Ok((sample, sub))
    };
    // The first few levels fan out to the thread pool.
    let (zero, one) = if level < 3 && !last {
        rayon::join(|| branch(0), || branch(1))
    } else {
        (branch(0), branch(1))
    };
    let (s0, sub0) = zero?;
    let (s1, sub1) = one?;
    let mut levels = vec![vec![s0, s1]];
    for (a, b) in sub0.into_iter().zip(sub1) {
        let mut v = a;
        v.extend(b);
        levels.push(v);
    }
    Ok(levels)
}

fn superpose(solver: &Solver, layout: &Interval, depth: usize) -> Result<SymbolTree> {
    let s = layout.steps;
    let horizon = depth * s + 1;
    // Trajectory of the background, then responses to one molecule of
    // each species released at step 0 on an empty field.
    let trajectory = |add: [f64; 2], empty: bool| -> Result<Vec<[f64; 2]>> {
        let mut st = solver.initial_state();
        if empty {
            st.field_a.conc.iter_mut().for_each(|c| *c = 0.0);
            st.field_b.conc.iter_mut().for_each(|c| *c = 0.0);
        }
        let mut out = vec![[0.0; 2]; horizon];
        for (m, o) in out.iter_mut().enumerate() {
            if m > 0 {
                let first = if m == 1 { 1.0 } else { 0.0 };
                solver.advance(&mut st, first * add[0], first * add[1]);
            }
            let (a, b) = solver.observe(&st)?;
            *o = [a, b];
        }
        Ok(out)
    };
    let bg = trajectory([0.0, 0.0], false)?;
    let ha = trajectory([1.0, 0.0], true)?;
    let hb = trajectory([0.0, 1.0], true)?;
    // Contribution of bit `bit` sent in interval `j` to the sample of interval `k`.
    let contrib = |bit: usize, j: usize, k: usize| -> [f64; 2] {
        let t = k * s + layout.sample;
        let mut y = [0.0; 2];
        for m in 0..s {
            let step = j * s + m;
            let (na, nb) = (layout.rel_a[bit][m], layout.rel_b[bit][m]);
            if step >= t || (na == 0.0 && nb == 0.0) {
                continue;
            }
            let lag = t - step;
            for c in 0..2 {
                y[c] += na * ha[lag][c] + nb * hb[lag][c];
            }
        }
        y
    };
    let mut table = vec![[[0.0; 2]; 2]; depth * depth];
    for j in 0..depth {
        for k in j..depth {
            table[j * depth + k] = [contrib(0, j, k), contrib(1, j, k)];
        }
    }
    let levels = (0..depth)
        .map(|k| {
            (0..1usize << (k + 1))
                .map(|p| {
                    let y0 = bg[k * s + layout.sample];
                    let mut y = y0;
                    for j in 0..=k {
                        let bit = (p >> (k - j)) & 1;
                        let c = table[j * depth + k][bit];
                        y[0] += c[0];
                        y[1] += c[1];
                    }
                    [y[0].max(0.0), y[1].max(0.0)]
                })
                .collect()
        })
        .collect();
    Ok(SymbolTree { levels })
}

/// Means for every (current bit, `L - 1` previous bits) with zero history
/// before the `L`-symbol window, sampled at `(L - 1) t_symb + t_samp`.
pub fn build_cr_table(config: &ReactionDiffusionConfig, scheme: &ModulationScheme, memory_len: usize) -> Result<CrTable> {
    if memory_len == 0 {
        return Err(Error::Precondition("memory length L must be at least 1".into()));
    }
    let tree = evaluate_symbol_tree(config, scheme, memory_len)?;
    Ok(table_from_tree(&tree, scheme.kind))
}

/// Reads the CR table of memory `depth` off the last level of a tree.
pub fn table_from_tree(tree: &SymbolTree, kind: SchemeKind) -> CrTable {
    let l = tree.depth();
    let n_isi = 1usize << (l - 1);
    let last = &tree.levels[l - 1];
    let mut means = vec![[0.0; 2]; 2 * n_isi];
    for isi in 0..n_isi {
        for s in 0..2 {
            means[s * n_isi + isi] = last[isi * 2 + s];
        }
    }
    CrTable { memory_len: l, scheme: kind, means }
}

/// Receiver type: counts A only, or both species.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ReceiverKind {
    #[serde(rename = "1tm")]
    OneType,
    #[serde(rename = "2tm")]
    TwoType,
}

impl ReceiverKind {
    pub fn name(self) -> &'static str {
        match self {
            ReceiverKind::OneType => "1tm",
            ReceiverKind::TwoType => "2tm",
        }
    }
}

impl FromStr for ReceiverKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "1tm" => Ok(ReceiverKind::OneType),
            "2tm" => Ok(ReceiverKind::TwoType),
            _ => Err(Error::Precondition(format!("unknown receiver '{s}' (expected 1tm or 2tm)"))),
        }
    }
}

/// Detector family.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum DetectorKind {
    /// Knows the true ISI sequence.
    #[serde(rename = "genie")]
    Genie,
    /// Uses its own past decisions as the ISI sequence.
    #[serde(rename = "ml")]
    MlEstimatedIsi,
    /// Ignores ISI altogether.
    #[serde(rename = "isi-neglecting")]
    IsiNeglecting,
}

impl DetectorKind {
    pub const ALL: [DetectorKind; 3] = [DetectorKind::Genie, DetectorKind::MlEstimatedIsi, DetectorKind::IsiNeglecting];

    pub fn name(self) -> &'static str {
        match self {
            DetectorKind::Genie => "genie",
            DetectorKind::MlEstimatedIsi => "ml",
            DetectorKind::IsiNeglecting => "isi-neglecting",
        }
    }
}

impl FromStr for DetectorKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let lower = s.to_ascii_lowercase();
        DetectorKind::ALL
            .into_iter()
            .find(|d| d.name() == lower)
            .ok_or_else(|| Error::Precondition(format!("unknown detector '{s}' (expected genie, ml or isi-neglecting)")))
    }
}

/// Receiver counts of one symbol.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct Observation {
    pub y_a: u32,
    pub y_b: u32,
}

/// Decision rule of one table entry.
///
/// The 2TM rule decides 1 iff `y_A >= alpha y_B + beta` when `chi > 0` and
/// iff `y_A <= alpha y_B + beta` when `chi < 0`; the 1TM rule compares
/// `y_A` with `gamma` the same way.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Thresholds {
    pub alpha: f64,
    pub beta: f64,
    pub chi: f64,
    pub gamma: f64,
}

impl Thresholds {
    /// Thresholds from the means under bit 0 and bit 1.
    pub fn from_means(m0: [f64; 2], m1: [f64; 2]) -> Self {
        let [a0, b0] = m0.map(|m| m.max(MEAN_FLOOR));
        let [a1, b1] = m1.map(|m| m.max(MEAN_FLOOR));
        let chi = (a1 / a0).ln();
        let alpha = (b0 / b1).ln() / chi;
        let beta = ((a1 - a0) + (b1 - b0)) / chi;
        let gamma = (a1 - a0) / chi;
        Self { alpha, beta, chi, gamma }
    }

    fn check(&self) -> Result<()> {
        if self.chi == 0.0 || !self.chi.is_finite() {
            return Err(Error::UninformativeChannel);
        }
        Ok(())
    }

    pub fn decide_2tm(&self, obs: Observation) -> Result<u8> {
        self.check()?;
        let (ya, yb) = (obs.y_a as f64, obs.y_b as f64);
        let rhs = self.alpha * yb + self.beta;
        Ok(u8::from(if self.chi > 0.0 { ya >= rhs } else { ya <= rhs }))
    }

    pub fn decide_1tm(&self, obs: Observation) -> Result<u8> {
        self.check()?;
        let ya = obs.y_a as f64;
        Ok(u8::from(if self.chi > 0.0 { ya >= self.gamma } else { ya <= self.gamma }))
    }

    pub fn decide(&self, obs: Observation, receiver: ReceiverKind) -> Result<u8> {
        match receiver {
            ReceiverKind::OneType => self.decide_1tm(obs),
            ReceiverKind::TwoType => self.decide_2tm(obs),
        }
    }
}

/// Thresholds for every ISI sequence of a table.
#[derive(Debug, Clone, PartialEq)]
pub struct DetectorThresholds {
    pub memory_len: usize,
    /// Indexed by the ISI sequence, oldest bit most significant.
    pub per_isi: Vec<Thresholds>,
}

impl DetectorThresholds {
    pub fn from_table(table: &CrTable) -> Self {
        let per_isi = (0..table.n_isi())
            .map(|isi| Thresholds::from_means(table.get(0, isi), table.get(1, isi)))
            .collect();
        Self { memory_len: table.memory_len, per_isi }
    }

    /// Decision with the ISI sequence given as the `L - 1` previous bits, oldest first.
    pub fn decide(&self, obs: Observation, isi: usize, receiver: ReceiverKind) -> Result<u8> {
        self.per_isi[isi].decide(obs, receiver)
    }
}

fn isi_index(table: &CrTable, isi: &[u8]) -> Result<usize> {
    if isi.len() + 1 != table.memory_len {
        return Err(Error::Precondition(format!(
            "ISI sequence has {} bits, table memory needs {}",
            isi.len(),
            table.memory_len - 1
        )));
    }
    Ok(crate::model::bits_to_index(isi))
}

/// Genie-aided joint ML decision with a 2TM receiver.
pub fn detect_genie_2tm(obs: Observation, table: &CrTable, isi: &[u8]) -> Result<u8> {
    let i = isi_index(table, isi)?;
    Thresholds::from_means(table.get(0, i), table.get(1, i)).decide_2tm(obs)
}

/// Genie-aided ML decision with a 1TM receiver.
pub fn detect_genie_1tm(obs: Observation, table: &CrTable, isi: &[u8]) -> Result<u8> {
    let i = isi_index(table, isi)?;
    Thresholds::from_means(table.get(0, i), table.get(1, i)).decide_1tm(obs)
}

/// Decision-feedback detection of a block: each symbol uses the genie rule
/// keyed by the previous `L - 1` decisions, with zeros before the block.
pub fn detect_ml_estimated_isi(stream: &[Observation], table: &CrTable, receiver: ReceiverKind) -> Result<Vec<u8>> {
    detect_ml_with(stream, &DetectorThresholds::from_table(table), receiver)
}

/// [`detect_ml_estimated_isi`] with precomputed thresholds.
pub fn detect_ml_with(stream: &[Observation], th: &DetectorThresholds, receiver: ReceiverKind) -> Result<Vec<u8>> {
    let mask = (1usize << (th.memory_len - 1)) - 1;
    let mut history = 0usize;
    let mut out = Vec::with_capacity(stream.len());
    for &obs in stream {
        let bit = th.decide(obs, history, receiver)?;
        out.push(bit);
        history = ((history << 1) | bit as usize) & mask;
    }
    Ok(out)
}

/// ISI-neglecting decision: `y_A >= y_B` for 2TM, `y_A >= gamma` for 1TM with
/// `gamma` taken from ISI-free (`L = 1`) thresholds.
pub fn detect_isi_neglecting(obs: Observation, isi_free: &Thresholds, receiver: ReceiverKind) -> Result<u8> {
    match receiver {
        ReceiverKind::TwoType => Ok(u8::from(obs.y_a >= obs.y_b)),
        ReceiverKind::OneType => isi_free.decide_1tm(obs),
    }
}

/// Independent Poisson counts with the given means.
pub fn sample_observation<R: Rng + ?Sized>(means: [f64; 2], rng: &mut R) -> Observation {
    let mut draw = |m: f64| -> u32 {
        if m > 0.0 {
            Poisson::new(m).expect("positive finite mean").sample(rng) as u32
        } else {
            0
        }
    };
    let y_a = draw(means[0]);
    let y_b = draw(means[1]);
    Observation { y_a, y_b }
}
