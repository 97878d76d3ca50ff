//! Command-line front end.
//!
//! Every subcommand loads a configuration (reference values when `--config` is
//! absent), applies `--set key=value` overrides, writes its CSV output under
//! `--out`, and records a `manifest.json` next to it. Exit status is 0 on
//! success, 1 for invalid input and 2 when a run fails.

use std::ffi::OsString;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand};

use crate::error::{Error, Result};
use crate::experiments::{ber_csv, run_ber, sweep_csv, sweep_parameter, BerRun, SweepParameter};
use crate::io::{write_file, Manifest};
use crate::model::{ReactionDiffusionConfig, ReleaseSchedule, SchemeKind};
use crate::particles::{run_particle_sim, BindingRule, ParticleSettings};
use crate::signaling::{build_cr_table, channel_config, compute_tau, non_reactive, DetectorKind, ModulationScheme, ReceiverKind};
use crate::solver::compute_cr;

#[derive(Debug, Parser)]
#[command(name = "reactmc", version, about = "Reactive molecular communication channel simulator")]
pub struct Cli {
    /// Worker threads (default: available cores).
    #[arg(long, global = true)]
    pub threads: Option<usize>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args, Clone)]
pub struct Common {
    /// JSON configuration; reference values when omitted.
    #[arg(long)]
    pub config: Option<PathBuf>,

    /// Override one configuration field, e.g. `--set kf=0`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,

    /// Output directory.
    #[arg(long, default_value = "out")]
    pub out: PathBuf,

    /// Seed for every random draw.
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
}

#[derive(Debug, Args, Clone)]
pub struct Releases {
    /// Release instants of species A [s], comma separated.
    #[arg(long = "release-a", value_delimiter = ',', allow_hyphen_values = true)]
    pub release_a: Vec<f64>,

    /// Release instants of species B [s], comma separated.
    #[arg(long = "release-b", value_delimiter = ',', allow_hyphen_values = true)]
    pub release_b: Vec<f64>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Mean channel response of a release schedule.
    Cr {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        releases: Releases,
    },
    /// Particle ensemble: mean counts and histograms.
    Particle {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        releases: Releases,
        /// Number of independent trials.
        #[arg(long, default_value_t = 1000)]
        trials: usize,
        /// Instants [s] at which count histograms are written.
        #[arg(long = "hist-at", value_delimiter = ',', default_values_t = [200e-6, 300e-6, 400e-6])]
        hist_at: Vec<f64>,
        /// Side of the periodic simulation box [m].
        #[arg(long)]
        box_side: Option<f64>,
        /// Reaction radii: `balanced` or `closed-form`.
        #[arg(long, default_value = "balanced")]
        binding: BindingRule,
    },
    /// Peak instants tau0 (species B) and tau1 (species A).
    Tau {
        #[command(flatten)]
        common: Common,
    },
    /// Mean counts for every current bit and ISI sequence.
    Table {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value = "osk")]
        scheme: SchemeKind,
        /// Memory length L.
        #[arg(long, default_value_t = 5)]
        memory: usize,
        /// Evaluate without reactions, background at the reactive equilibrium.
        #[arg(long)]
        non_reactive: bool,
    },
    /// Monte Carlo bit error rate over a sweep of molecule counts.
    Ber {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value = "osk")]
        scheme: SchemeKind,
        /// Detector(s); all three when omitted.
        #[arg(long = "detector", value_delimiter = ',')]
        detectors: Vec<DetectorKind>,
        #[arg(long, default_value = "2tm")]
        receiver: ReceiverKind,
        /// Block length K.
        #[arg(long, default_value_t = 8)]
        block_len: usize,
        /// Detector memory L.
        #[arg(long, default_value_t = 5)]
        memory: usize,
        #[arg(long, default_value_t = 10_000)]
        blocks: u64,
        /// Molecules per release.
        #[arg(long = "n-tx", value_delimiter = ',', default_values_t = [1250.0, 2500.0, 5000.0, 10000.0])]
        n_tx: Vec<f64>,
        /// Directory for cached block means.
        #[arg(long)]
        cache: Option<PathBuf>,
        /// Evaluate without reactions, background at the reactive equilibrium.
        #[arg(long)]
        non_reactive: bool,
    },
    /// Family of channel responses over one parameter.
    Sweep {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        parameter: SweepParameter,
        /// Parameter values; the reference set when omitted. `inf` selects instant reactions.
        #[arg(long, value_delimiter = ',')]
        values: Vec<f64>,
    },
}

impl Command {
    fn common(&self) -> &Common {
        match self {
            Command::Cr { common, .. }
            | Command::Particle { common, .. }
            | Command::Tau { common }
            | Command::Table { common, .. }
            | Command::Ber { common, .. }
            | Command::Sweep { common, .. } => common,
        }
    }

    fn name(&self) -> &'static str {
        match self {
            Command::Cr { .. } => "cr",
            Command::Particle { .. } => "particle",
            Command::Tau { .. } => "tau",
            Command::Table { .. } => "table",
            Command::Ber { .. } => "ber",
            Command::Sweep { .. } => "sweep",
        }
    }
}

macro_rules! from_str_parser {
    ($($t:ty),*) => {$(
        impl clap::builder::ValueParserFactory for $t {
            type Parser = clap::builder::ValueParser;
            fn value_parser() -> Self::Parser {
                clap::builder::ValueParser::new(|s: &str| s.parse::<$t>().map_err(|e| e.to_string()))
            }
        }
    )*};
}

from_str_parser!(SchemeKind, DetectorKind, ReceiverKind, SweepParameter, BindingRule);

/// Loads the configuration and applies overrides.
pub fn load_config(common: &Common) -> Result<ReactionDiffusionConfig> {
    let mut config = match &common.config {
        Some(path) => ReactionDiffusionConfig::from_json_file(path)?,
        None => ReactionDiffusionConfig::reference(),
    };
    for item in &common.overrides {
        let (key, value) = item
            .split_once('=')
            .ok_or_else(|| Error::Precondition(format!("override '{item}' is not KEY=VALUE")))?;
        config.set_field(key.trim(), value.trim())?;
    }
    crate::model::validate(config)
}

fn schedule(config: &ReactionDiffusionConfig, releases: &Releases) -> Result<ReleaseSchedule> {
    ReleaseSchedule::from_times(&releases.release_a, config.n_tx_a, &releases.release_b, config.n_tx_b)
}

/// Runs one parsed command; returns the paths written.
pub fn execute(command: &Command) -> Result<Vec<PathBuf>> {
    let common = command.common();
    let config = load_config(common)?;
    let out = &common.out;
    let mut written = Vec::new();
    let mut emit = |name: &str, text: &str| -> Result<()> {
        let path = out.join(name);
        write_file(&path, text)?;
        written.push(path);
        Ok(())
    };
    match command {
        Command::Cr { releases, .. } => {
            let cr = compute_cr(&config, &schedule(&config, releases)?)?;
            emit("cr.csv", &cr.to_csv())?;
        }
        Command::Particle { releases, trials, hist_at, box_side, binding, .. } => {
            let settings = ParticleSettings { box_side: *box_side, binding: *binding };
            let ens = run_particle_sim(&config, &schedule(&config, releases)?, *trials, common.seed, &settings)?;
            emit("particle_mean.csv", &ens.mean_csv())?;
            for &t in hist_at {
                let j = ens.index_of(t);
                let us = (ens.times[j] * 1e6).round();
                emit(&format!("hist_a_{us}us.csv"), &ens.histogram_csv(true, j))?;
                emit(&format!("hist_b_{us}us.csv"), &ens.histogram_csv(false, j))?;
            }
        }
        Command::Tau { .. } => {
            let (tau0, tau1) = compute_tau(&config)?;
            println!("tau0 = {tau0:e} s");
            println!("tau1 = {tau1:e} s");
            emit("tau.csv", &format!("tau0,tau1\n{tau0:e},{tau1:e}\n"))?;
        }
        Command::Table { scheme, memory, non_reactive: nr, .. } => {
            let cfg = if *nr { non_reactive(&config) } else { channel_config(&config, *scheme) };
            let s = ModulationScheme::new(*scheme).resolve(&cfg)?;
            let table = build_cr_table(&cfg, &s, *memory)?;
            emit("table.csv", &table.to_csv())?;
        }
        Command::Ber { scheme, detectors, receiver, block_len, memory, blocks, n_tx, cache, non_reactive: nr, .. } => {
            let run = BerRun {
                scheme: ModulationScheme::new(*scheme),
                detectors: if detectors.is_empty() { DetectorKind::ALL.to_vec() } else { detectors.clone() },
                receiver: *receiver,
                block_len: *block_len,
                memory_len: *memory,
                n_blocks: *blocks,
                n_tx: n_tx.clone(),
                seed: common.seed,
            };
            let config = if *nr { non_reactive(&config) } else { config };
            let points = run_ber(&run, &config, cache.as_deref())?;
            emit("ber.csv", &ber_csv(&points))?;
        }
        Command::Sweep { parameter, values, .. } => {
            let values = if values.is_empty() { parameter.default_values() } else { values.clone() };
            let family = sweep_parameter(&config, *parameter, &values)?;
            emit(&format!("sweep_{}.csv", parameter.name()), &sweep_csv(*parameter, &family))?;
        }
    }
    Ok(written)
}

fn run(cli: &Cli) -> Result<()> {
    let start = Instant::now();
    let written = execute(&cli.command)?;
    let common = cli.command.common();
    let config = load_config(common)?;
    let manifest = Manifest {
        command: cli.command.name().to_owned(),
        config_hash: config.content_hash(),
        seed: Some(common.seed),
        threads: rayon::current_num_threads(),
        outputs: written.iter().map(|p| file_name(p)).collect(),
        runtime_seconds: start.elapsed().as_secs_f64(),
    };
    manifest.write(&common.out.join("manifest.json"))
}

fn file_name(p: &Path) -> String {
    p.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default()
}

/// Parses `args` (including the program name) and runs; returns the exit code.
pub fn main<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    let threads = cli.threads.unwrap_or(0);
    let result = match rayon::ThreadPoolBuilder::new().num_threads(threads).build() {
        Ok(pool) => pool.install(|| run(&cli)),
        Err(e) => Err(Error::Precondition(format!("cannot start {threads} threads: {e}"))),
    };
    match result {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            if e.is_validation() {
                1
            } else {
                2
            }
        }
    }
}
