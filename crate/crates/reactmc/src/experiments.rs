//! Monte Carlo BER estimation over full-memory block means, and parameter
//! sweeps of the channel response.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io;
use crate::model::{ChannelResponse, CrTable, ReactionDiffusionConfig, ReleaseSchedule, SchemeKind};
use crate::signaling::{
    channel_config, detect_isi_neglecting, detect_ml_with, evaluate_symbol_tree, sample_observation, table_from_tree,
    DetectorKind, DetectorThresholds, ModulationScheme, Observation, ReceiverKind, SymbolTree, Thresholds,
};
use crate::solver::compute_cr;

/// Longest block whose `2^K` sequences are evaluated exhaustively.
pub const MAX_BLOCK_LEN: usize = 12;

/// Stand-in forward rate for instantaneous reactions.
pub const INSTANT_KF: f64 = 1e-13;

/// Two-sided 95% normal quantile.
const Z95: f64 = 1.959_963_984_540_054;

#[derive(Serialize)]
struct CacheKey<'a> {
    config: &'a ReactionDiffusionConfig,
    scheme: &'a ModulationScheme,
    block_len: usize,
}

/// Per-symbol means of every `K`-bit block, with zero history before the block.
///
/// Results are cached as JSON under `cache_dir` keyed by a hash of the
/// configuration, the scheme with its offsets, and `K`.
pub fn precompute_block_means(
    config: &ReactionDiffusionConfig,
    scheme: &ModulationScheme,
    block_len: usize,
    cache_dir: Option<&Path>,
) -> Result<SymbolTree> {
    if block_len == 0 || block_len > MAX_BLOCK_LEN {
        return Err(Error::BlockTooLong(block_len));
    }
    let path = cache_dir.map(|dir| cache_path(dir, config, scheme, block_len));
    if let Some(path) = &path {
        if let Ok(text) = std::fs::read_to_string(path) {
            if let Ok(tree) = serde_json::from_str::<SymbolTree>(&text) {
                if tree.depth() == block_len {
                    return Ok(tree);
                }
            }
        }
    }
    let tree = evaluate_symbol_tree(config, scheme, block_len)?;
    if let Some(path) = &path {
        io::write_file(path, &serde_json::to_string(&tree).expect("tree serializes"))?;
    }
    Ok(tree)
}

/// Cache file for one (config, scheme, K) combination.
pub fn cache_path(dir: &Path, config: &ReactionDiffusionConfig, scheme: &ModulationScheme, block_len: usize) -> PathBuf {
    let key = CacheKey { config, scheme, block_len };
    let hash = io::sha256_hex(serde_json::to_string(&key).expect("key serializes").as_bytes());
    dir.join(format!("block-means-{}.json", &hash[..32]))
}

/// CR table of memory `L` read off a block tree of depth at least `L`.
pub fn table_from_block_means(tree: &SymbolTree, kind: SchemeKind, memory_len: usize) -> Result<CrTable> {
    if memory_len == 0 || memory_len > tree.depth() {
        return Err(Error::Precondition(format!(
            "memory length {memory_len} must lie in 1..={}",
            tree.depth()
        )));
    }
    let prefix = SymbolTree { levels: tree.levels[..memory_len].to_vec() };
    Ok(table_from_tree(&prefix, kind))
}

/// Bit-error estimate of one detector.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BerEstimate {
    pub detector: DetectorKind,
    pub errors: u64,
    pub bits: u64,
    pub ber: f64,
    /// Half-width of the 95% confidence interval.
    pub ci: f64,
}

#[derive(Debug, Clone, Copy, Default)]
struct Tally {
    errors: u64,
    squares: u64,
}

/// Monte Carlo settings shared by every detector on the same observations.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BlockSimulation {
    pub block_len: usize,
    pub memory_len: usize,
    pub receiver: ReceiverKind,
    pub n_blocks: u64,
    pub seed: u64,
}

/// Runs all `detectors` on one shared set of simulated blocks.
///
/// Block `b` draws its bits and counts from a ChaCha8 stream selected by
/// `(seed, b)`, so results do not depend on thread count, detector set, or
/// channel parameters. The confidence half-width uses the spread of the
/// per-block error counts, which reduces to the binomial width when errors
/// are independent.
pub fn simulate_detectors(tree: &SymbolTree, kind: SchemeKind, sim: &BlockSimulation, detectors: &[DetectorKind]) -> Result<Vec<BerEstimate>> {
    let k = sim.block_len;
    if k == 0 || k > tree.depth() {
        return Err(Error::Precondition(format!("block length {k} must lie in 1..={}", tree.depth())));
    }
    if sim.memory_len == 0 || sim.memory_len > k {
        return Err(Error::Precondition(format!("memory length {} must lie in 1..={k}", sim.memory_len)));
    }
    if sim.n_blocks == 0 {
        return Err(Error::Precondition("at least one block is required".into()));
    }
    let table = table_from_block_means(tree, kind, sim.memory_len)?;
    let thresholds = DetectorThresholds::from_table(&table);
    let isi_free = Thresholds::from_means(tree.levels[0][0], tree.levels[0][1]);
    let tree = SymbolTree { levels: tree.levels[..k].to_vec() };
    let mask = (1usize << (sim.memory_len - 1)) - 1;

    let run_block = |b: u64| -> Result<Vec<u64>> {
        let mut rng = ChaCha8Rng::seed_from_u64(sim.seed);
        rng.set_stream(b);
        let index = (0..k).fold(0usize, |acc, _| (acc << 1) | rng.random_range(0..2usize));
        let means = tree.sequence_means(index);
        let obs: Vec<Observation> = means.iter().map(|m| sample_observation(*m, &mut rng)).collect();
        let bit = |j: usize| ((index >> (k - 1 - j)) & 1) as u8;
        let mut errs = Vec::with_capacity(detectors.len());
        for &det in detectors {
            let decided: Vec<u8> = match det {
                DetectorKind::Genie => obs
                    .iter()
                    .enumerate()
                    .map(|(j, o)| {
                        // True previous bits; positions before the block read as zero.
                        let isi = (index >> (k - j)) & mask;
                        thresholds.decide(*o, isi, sim.receiver)
                    })
                    .collect::<Result<_>>()?,
                DetectorKind::MlEstimatedIsi => detect_ml_with(&obs, &thresholds, sim.receiver)?,
                DetectorKind::IsiNeglecting => obs
                    .iter()
                    .map(|o| detect_isi_neglecting(*o, &isi_free, sim.receiver))
                    .collect::<Result<_>>()?,
            };
            errs.push(decided.iter().enumerate().filter(|(j, d)| **d != bit(*j)).count() as u64);
        }
        Ok(errs)
    };

    let per_block: Vec<Vec<u64>> = (0..sim.n_blocks).into_par_iter().map(run_block).collect::<Result<_>>()?;
    let mut tallies = vec![Tally::default(); detectors.len()];
    for errs in &per_block {
        for (t, &e) in tallies.iter_mut().zip(errs) {
            t.errors += e;
            t.squares += e * e;
        }
    }

    let n = sim.n_blocks as f64;
    Ok(detectors
        .iter()
        .zip(tallies)
        .map(|(&detector, t)| {
            let bits = sim.n_blocks * k as u64;
            let ber = t.errors as f64 / bits as f64;
            // Per-block error fraction: sample mean and variance.
            let mean = t.errors as f64 / n / k as f64;
            let var = if sim.n_blocks > 1 {
                ((t.squares as f64 / (k * k) as f64) - n * mean * mean).max(0.0) / (n - 1.0)
            } else {
                0.0
            };
            BerEstimate { detector, errors: t.errors, bits, ber, ci: Z95 * (var / n).sqrt() }
        })
        .collect())
}

/// One BER experiment over a sweep of transmitted molecule counts.
#[derive(Debug, Clone, PartialEq)]
pub struct BerRun {
    pub scheme: ModulationScheme,
    pub detectors: Vec<DetectorKind>,
    pub receiver: ReceiverKind,
    pub block_len: usize,
    pub memory_len: usize,
    pub n_blocks: u64,
    /// Molecules per release, applied to both species.
    pub n_tx: Vec<f64>,
    pub seed: u64,
}

/// BER of one detector at one sweep point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BerPoint {
    pub n_tx: f64,
    pub tau0: Option<f64>,
    pub tau1: Option<f64>,
    #[serde(flatten)]
    pub estimate: BerEstimate,
}

/// Runs `run` under `config`; missing offsets are recomputed for every `N`.
pub fn run_ber(run: &BerRun, config: &ReactionDiffusionConfig, cache_dir: Option<&Path>) -> Result<Vec<BerPoint>> {
    let mut out = Vec::new();
    for &n in &run.n_tx {
        if !(n > 0.0 && n.is_finite()) {
            return Err(Error::Precondition(format!("molecule count {n} must be positive")));
        }
        let mut cfg = config.clone();
        cfg.n_tx_a = n;
        cfg.n_tx_b = n;
        let cfg = channel_config(&cfg, run.scheme.kind);
        let scheme = run.scheme.resolve(&cfg)?;
        let tree = precompute_block_means(&cfg, &scheme, run.block_len, cache_dir)?;
        let sim = BlockSimulation {
            block_len: run.block_len,
            memory_len: run.memory_len,
            receiver: run.receiver,
            n_blocks: run.n_blocks,
            seed: run.seed,
        };
        for estimate in simulate_detectors(&tree, scheme.kind, &sim, &run.detectors)? {
            out.push(BerPoint { n_tx: n, tau0: scheme.tau0, tau1: scheme.tau1, estimate });
        }
    }
    Ok(out)
}

/// CSV of BER points: `x,value,ci` followed by identifying columns.
pub fn ber_csv(points: &[BerPoint]) -> String {
    let mut s = String::from("x,value,ci,detector,errors,bits\n");
    for p in points {
        let e = &p.estimate;
        s.push_str(&format!("{:e},{:e},{:e},{},{},{}\n", p.n_tx, e.ber, e.ci, e.detector.name(), e.errors, e.bits));
    }
    s
}

/// BER of the chosen detectors as the memory `L` varies, at fixed `K`.
pub fn sweep_memory_len(tree: &SymbolTree, kind: SchemeKind, base: &BlockSimulation, memory: &[usize], detectors: &[DetectorKind]) -> Result<Vec<(usize, Vec<BerEstimate>)>> {
    memory
        .iter()
        .map(|&l| Ok((l, simulate_detectors(tree, kind, &BlockSimulation { memory_len: l, ..*base }, detectors)?)))
        .collect()
}

/// BER as the block length `K` varies; one tree of the largest depth serves all.
pub fn sweep_block_len(tree: &SymbolTree, kind: SchemeKind, base: &BlockSimulation, blocks: &[usize], detectors: &[DetectorKind]) -> Result<Vec<(usize, Vec<BerEstimate>)>> {
    blocks
        .iter()
        .map(|&k| Ok((k, simulate_detectors(tree, kind, &BlockSimulation { block_len: k, ..*base }, detectors)?)))
        .collect()
}

/// Parameter varied by a channel-response sweep.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum SweepParameter {
    #[serde(rename = "diff_b")]
    DiffB,
    #[serde(rename = "kf")]
    Kf,
    #[serde(rename = "kb")]
    Kb,
}

impl SweepParameter {
    pub const ALL: [SweepParameter; 3] = [SweepParameter::DiffB, SweepParameter::Kf, SweepParameter::Kb];

    pub fn name(self) -> &'static str {
        match self {
            SweepParameter::DiffB => "diff_b",
            SweepParameter::Kf => "kf",
            SweepParameter::Kb => "kb",
        }
    }

    /// The reference values of each sweep.
    pub fn default_values(self) -> Vec<f64> {
        match self {
            SweepParameter::DiffB => [0.1, 0.5, 1.0, 2.0, 10.0].map(|x| x * 1e-10).to_vec(),
            SweepParameter::Kf => [0.0, 0.01, 0.1, 1.0, 10.0, f64::INFINITY].map(|x| x * 1e-17).to_vec(),
            SweepParameter::Kb => [0.0, 1.0, 10.0, 100.0].map(|x| x * 1e25).to_vec(),
        }
    }

    /// Release times `(A, B)` used for this sweep.
    pub fn schedule_times(self) -> (f64, f64) {
        match self {
            SweepParameter::Kf => (0.0, 100e-6),
            SweepParameter::DiffB | SweepParameter::Kb => (200e-6, 300e-6),
        }
    }

    /// Configuration for one sweep value.
    pub fn apply(self, config: &ReactionDiffusionConfig, value: f64) -> ReactionDiffusionConfig {
        let mut c = config.clone();
        match self {
            SweepParameter::DiffB => {
                c.diff_b = value;
                // Slow species need a finer grid for the kernel to resolve one step.
                c.dr = c.dr.min(c.max_dr());
            }
            SweepParameter::Kf => {
                c.kb = 0.0;
                c.kf = if value.is_infinite() { INSTANT_KF } else { value };
            }
            SweepParameter::Kb => c.kb = value,
        }
        c
    }
}

impl fmt::Display for SweepParameter {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for SweepParameter {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let lower = s.to_ascii_lowercase();
        SweepParameter::ALL
            .into_iter()
            .find(|p| p.name() == lower)
            .ok_or_else(|| Error::Precondition(format!("unknown sweep parameter '{s}' (expected diff_b, kf or kb)")))
    }
}

/// One channel response per value, each with the sweep's own release schedule.
pub fn sweep_parameter(config: &ReactionDiffusionConfig, parameter: SweepParameter, values: &[f64]) -> Result<Vec<(f64, ChannelResponse)>> {
    let (ta, tb) = parameter.schedule_times();
    values
        .par_iter()
        .map(|&v| {
            let c = parameter.apply(config, v);
            let schedule = ReleaseSchedule::from_times(&[ta], c.n_tx_a, &[tb], c.n_tx_b)?;
            Ok((v, compute_cr(&c, &schedule)?))
        })
        .collect()
}

/// Long-format CSV of a sweep family: `value,t,ybar_a,ybar_b`.
pub fn sweep_csv(parameter: SweepParameter, family: &[(f64, ChannelResponse)]) -> String {
    let mut s = format!("{},t,ybar_a,ybar_b\n", parameter.name());
    for (v, cr) in family {
        for j in 0..cr.len() {
            s.push_str(&format!("{v:e},{:e},{:e},{:e}\n", cr.times[j], cr.ybar_a[j], cr.ybar_b[j]));
        }
    }
    s
}

/// Time for `ybar_a` to fall from its maximum after `t_from` to 10% above
/// its terminal level, measured from the maximum.
pub fn decay_width(cr: &ChannelResponse, t_from: f64) -> Option<f64> {
    let start = cr.index_of(t_from);
    let terminal = *cr.ybar_a.last()?;
    let (peak_j, peak) = cr.ybar_a[start..]
        .iter()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |best, (j, &y)| if y > best.1 { (j, y) } else { best });
    let peak_j = start + peak_j;
    let level = terminal + 0.1 * (peak - terminal);
    let end = (peak_j..cr.len()).find(|&j| cr.ybar_a[j] <= level)?;
    Some(cr.times[end] - cr.times[peak_j])
}
