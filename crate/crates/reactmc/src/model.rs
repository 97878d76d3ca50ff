//! Domain types shared by every module: configuration, radial fields,
//! release schedules, channel responses and CR tables.
//!
//! All quantities are strict SI: concentrations in molecule·m⁻ⁿ, rates in
//! the matching powers of metres, times in seconds.

use std::fmt;
use std::path::Path;
use std::str::FromStr;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result, Violation, Violations};
use crate::io;

/// Avogadro constant [1/mol].
pub const AVOGADRO: f64 = 6.022_140_76e23;

/// Converts a molar concentration [mol/L] to molecules per cubic metre.
pub fn molar_to_si(conc: f64) -> f64 {
    conc * 1e3 * AVOGADRO
}

/// Converts molecules per cubic metre to a molar concentration [mol/L].
pub fn si_to_molar(conc: f64) -> f64 {
    conc / (1e3 * AVOGADRO)
}

/// Converts a second-order rate in 1/(M·s) to m³/(molecule·s).
pub fn kf_molar_to_si(kf: f64) -> f64 {
    kf / (1e3 * AVOGADRO)
}

/// Converts a zeroth-order rate in M/s to molecule/(m³·s).
pub fn kb_molar_to_si(kb: f64) -> f64 {
    kb * 1e3 * AVOGADRO
}

/// Physical, system and numerical constants of one scenario.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReactionDiffusionConfig {
    pub dim: u8,
    pub diff_a: f64,
    pub diff_b: f64,
    pub kf: f64,
    pub kb: f64,
    pub n_tx_a: f64,
    pub n_tx_b: f64,
    pub distance: f64,
    pub rx_radius: f64,
    pub t_symb: f64,
    pub t_samp: f64,
    pub dt: f64,
    pub t_max: f64,
    pub dr: f64,
    pub r_max: f64,
    #[serde(default)]
    pub integration_radius: Option<f64>,
    pub init_conc_a: f64,
    pub init_conc_b: f64,
}

impl Default for ReactionDiffusionConfig {
    fn default() -> Self {
        Self::reference()
    }
}

impl ReactionDiffusionConfig {
    /// Default system parameters of the reference scenario.
    pub fn reference() -> Self {
        Self {
            dim: 3,
            diff_a: 1e-10,
            diff_b: 1e-10,
            kf: 1e-17,
            kb: 1e25,
            n_tx_a: 5e3,
            n_tx_b: 5e3,
            distance: 250e-9,
            rx_radius: 50e-9,
            t_symb: 200e-6,
            t_samp: 100e-6,
            dt: 1e-6,
            t_max: 5e-3,
            dr: 5e-9,
            r_max: 5e-6,
            integration_radius: None,
            init_conc_a: 0.0,
            init_conc_b: 0.0,
        }
    }

    /// Reads a JSON config; keys must match the field names exactly.
    pub fn from_json_file(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
            path: path.to_owned(),
            source,
        })?;
        serde_json::from_str(&text).map_err(|source| Error::Json {
            path: path.to_owned(),
            source,
        })
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    /// Hex SHA-256 of the canonical JSON encoding.
    pub fn content_hash(&self) -> String {
        io::sha256_hex(serde_json::to_string(self).expect("config serializes").as_bytes())
    }

    /// Sets one field from its textual value, as used by `key=value` overrides.
    pub fn set_field(&mut self, key: &str, value: &str) -> Result<()> {
        let mut json = serde_json::to_value(&*self).expect("config serializes");
        let map = json.as_object_mut().expect("config is an object");
        if !map.contains_key(key) {
            return Err(Error::Precondition(format!("unknown config key '{key}'")));
        }
        let parsed: serde_json::Value = if value == "null" || value == "none" {
            serde_json::Value::Null
        } else {
            serde_json::from_str(value)
                .map_err(|_| Error::Precondition(format!("cannot parse value '{value}' for key '{key}'")))?
        };
        map.insert(key.to_owned(), parsed);
        *self = serde_json::from_value(json)
            .map_err(|e| Error::Precondition(format!("bad value for '{key}': {e}")))?;
        Ok(())
    }

    /// Receiver volume: ball, disk or interval depending on `dim`.
    pub fn rx_volume(&self) -> f64 {
        let a = self.rx_radius;
        match self.dim {
            1 => 2.0 * a,
            2 => std::f64::consts::PI * a * a,
            _ => 4.0 / 3.0 * std::f64::consts::PI * a * a * a,
        }
    }

    /// Number of time steps up to `t_max`.
    pub fn n_steps(&self) -> usize {
        (self.t_max / self.dt).round() as usize
    }

    /// Index of the grid time nearest to `t`.
    pub fn step_of(&self, t: f64) -> usize {
        (t / self.dt).round().max(0.0) as usize
    }

    /// Returns every violated invariant, or `Ok(())`.
    pub fn check(&self) -> Result<(), Violations> {
        let mut out = Vec::new();
        let mut push = |field: &'static str, message: String| out.push(Violation { field, message });

        if !(1..=3).contains(&self.dim) {
            push("dim", format!("dim in {{1,2,3}} violated (got {})", self.dim));
        }
        let nonneg = [
            ("diff_a", self.diff_a),
            ("diff_b", self.diff_b),
            ("kf", self.kf),
            ("kb", self.kb),
            ("n_tx_a", self.n_tx_a),
            ("n_tx_b", self.n_tx_b),
            ("distance", self.distance),
            ("rx_radius", self.rx_radius),
            ("t_symb", self.t_symb),
            ("t_samp", self.t_samp),
            ("t_max", self.t_max),
            ("init_conc_a", self.init_conc_a),
            ("init_conc_b", self.init_conc_b),
        ];
        for (field, v) in nonneg {
            if !(v.is_finite() && v >= 0.0) {
                push(field, format!("{field} >= 0 violated (got {v:e})"));
            }
        }
        if !(self.dt.is_finite() && self.dt > 0.0) {
            push("dt", format!("dt > 0 violated (got {:e})", self.dt));
        }
        if !(self.dr.is_finite() && self.dr > 0.0) {
            push("dr", format!("dr > 0 violated (got {:e})", self.dr));
        }
        if !(self.r_max > self.distance + self.rx_radius) {
            push(
                "r_max",
                format!(
                    "r_max > distance + rx_radius violated ({:e} <= {:e})",
                    self.r_max,
                    self.distance + self.rx_radius
                ),
            );
        }
        if !(self.t_samp < self.t_symb) {
            push("t_samp", format!("t_samp < t_symb violated ({:e} >= {:e})", self.t_samp, self.t_symb));
        }
        if !(self.rx_radius < self.distance) {
            push(
                "rx_radius",
                format!(
                    "receiver contains transmitter (rx_radius {:e} >= distance {:e})",
                    self.rx_radius, self.distance
                ),
            );
        }
        let d_min = [self.diff_a, self.diff_b]
            .into_iter()
            .filter(|d| *d > 0.0)
            .fold(f64::INFINITY, f64::min);
        if d_min.is_finite() && self.dt > 0.0 {
            let bound = (2.0 * d_min * self.dt).sqrt();
            if self.dr > bound * (1.0 + 1e-12) {
                push(
                    "dr",
                    format!("dr <= sqrt(2 min(D) dt) violated ({:e} > {:e})", self.dr, bound),
                );
            }
        }
        if let Some(r) = self.integration_radius {
            if !(r.is_finite() && r > 0.0) {
                push("integration_radius", format!("integration_radius > 0 violated (got {r:e})"));
            }
        }
        if out.is_empty() {
            Ok(())
        } else {
            Err(Violations(out))
        }
    }

    /// Largest admissible grid spacing for the current diffusion coefficients and step.
    pub fn max_dr(&self) -> f64 {
        let d_min = [self.diff_a, self.diff_b]
            .into_iter()
            .filter(|d| *d > 0.0)
            .fold(f64::INFINITY, f64::min);
        (2.0 * d_min * self.dt).sqrt()
    }
}

/// Returns the config unchanged when every invariant holds, otherwise the
/// complete list of violations.
pub fn validate(config: ReactionDiffusionConfig) -> Result<ReactionDiffusionConfig> {
    config.check().map_err(Error::Invalid)?;
    Ok(config)
}

/// Symmetric equilibrium `C_A = C_B = sqrt(kb/kf)`.
pub fn equilibrium_concentration(config: &ReactionDiffusionConfig) -> Result<(f64, f64)> {
    if config.kf <= 0.0 {
        return Err(Error::NoEquilibrium);
    }
    let c = (config.kb / config.kf).sqrt();
    Ok((c, c))
}

/// Cell-centred radial grid `r_k = (k + 1/2) dr` with shell measures.
#[derive(Debug, Clone, PartialEq)]
pub struct RadialGrid {
    pub dim: u8,
    pub dr: f64,
    pub radii: Vec<f64>,
    /// Shell measure of each cell: `2 dr`, `2 pi r dr` or `4 pi r^2 dr`.
    pub measure: Vec<f64>,
}

impl RadialGrid {
    pub fn new(dim: u8, dr: f64, r_max: f64) -> Self {
        let m = (r_max / dr).round().max(1.0) as usize;
        let radii: Vec<f64> = (0..m).map(|k| (k as f64 + 0.5) * dr).collect();
        let measure = radii.iter().map(|&r| shell_density(dim, r) * dr).collect();
        Self { dim, dr, radii, measure }
    }

    pub fn from_config(config: &ReactionDiffusionConfig) -> Self {
        Self::new(config.dim, config.dr, config.r_max)
    }

    pub fn len(&self) -> usize {
        self.radii.len()
    }

    pub fn is_empty(&self) -> bool {
        self.radii.is_empty()
    }

    pub fn r_max(&self) -> f64 {
        self.radii.len() as f64 * self.dr
    }
}

/// Surface measure of the origin-centred sphere of radius `r` in `dim` dimensions
/// (for `dim = 1` both half-lines are counted).
pub fn shell_density(dim: u8, r: f64) -> f64 {
    match dim {
        1 => 2.0,
        2 => 2.0 * std::f64::consts::PI * r,
        _ => 4.0 * std::f64::consts::PI * r * r,
    }
}

/// Concentration profile of one species at one instant.
#[derive(Debug, Clone, PartialEq)]
pub struct RadialField {
    pub grid: Arc<RadialGrid>,
    pub conc: Vec<f64>,
    pub time: f64,
}

impl RadialField {
    pub fn uniform(grid: Arc<RadialGrid>, value: f64, time: f64) -> Self {
        let conc = vec![value; grid.len()];
        Self { grid, conc, time }
    }

    /// Total number of molecules represented by the field.
    pub fn mass(&self) -> f64 {
        self.conc.iter().zip(&self.grid.measure).map(|(c, m)| c * m).sum()
    }

    /// Linear interpolation of the profile at radius `r` (clamped at the ends).
    pub fn at(&self, r: f64) -> f64 {
        let dr = self.grid.dr;
        let x = r / dr - 0.5;
        if x <= 0.0 {
            return self.conc[0];
        }
        let k = x.floor() as usize;
        if k + 1 >= self.conc.len() {
            return *self.conc.last().unwrap();
        }
        let w = x - k as f64;
        self.conc[k] * (1.0 - w) + self.conc[k + 1] * w
    }
}

/// One release event: time [s] and molecule count.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Release {
    pub time: f64,
    pub count: f64,
}

/// Release instants of both species with the attached counts.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ReleaseSchedule {
    pub releases_a: Vec<Release>,
    pub releases_b: Vec<Release>,
}

impl ReleaseSchedule {
    pub fn new(releases_a: Vec<Release>, releases_b: Vec<Release>) -> Result<Self> {
        for r in releases_a.iter().chain(&releases_b) {
            if !(r.time.is_finite() && r.time >= 0.0 && r.count.is_finite() && r.count >= 0.0) {
                return Err(Error::Precondition(format!(
                    "release (t = {:e}, N = {:e}) must have finite nonnegative time and count",
                    r.time, r.count
                )));
            }
        }
        Ok(Self { releases_a, releases_b })
    }

    /// Releases of `n_a` type-A molecules at each of `times_a` and `n_b` type-B at `times_b`.
    pub fn from_times(times_a: &[f64], n_a: f64, times_b: &[f64], n_b: f64) -> Result<Self> {
        Self::new(
            times_a.iter().map(|&time| Release { time, count: n_a }).collect(),
            times_b.iter().map(|&time| Release { time, count: n_b }).collect(),
        )
    }

    pub fn is_empty(&self) -> bool {
        self.releases_a.is_empty() && self.releases_b.is_empty()
    }

    /// True when some A and some B release land on the same time step.
    pub fn has_overlap(&self, dt: f64) -> bool {
        let step = |t: f64| (t / dt).round() as i64;
        self.releases_a
            .iter()
            .any(|a| self.releases_b.iter().any(|b| step(a.time) == step(b.time)))
    }

    /// Same releases shifted by `offset` seconds.
    pub fn shifted(&self, offset: f64) -> Self {
        let shift = |v: &Vec<Release>| {
            v.iter()
                .map(|r| Release { time: r.time + offset, count: r.count })
                .collect()
        };
        Self { releases_a: shift(&self.releases_a), releases_b: shift(&self.releases_b) }
    }

    /// Appends the releases of `other`.
    pub fn extend(&mut self, other: &ReleaseSchedule) {
        self.releases_a.extend_from_slice(&other.releases_a);
        self.releases_b.extend_from_slice(&other.releases_b);
    }

    pub fn last_time(&self) -> f64 {
        self.releases_a
            .iter()
            .chain(&self.releases_b)
            .map(|r| r.time)
            .fold(0.0, f64::max)
    }
}

/// Expected receiver counts over time.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ChannelResponse {
    pub times: Vec<f64>,
    pub ybar_a: Vec<f64>,
    pub ybar_b: Vec<f64>,
}

impl ChannelResponse {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn push(&mut self, t: f64, a: f64, b: f64) {
        self.times.push(t);
        self.ybar_a.push(a);
        self.ybar_b.push(b);
    }

    /// Index of the sample closest to `t`.
    pub fn index_of(&self, t: f64) -> usize {
        let mut best = 0;
        for (i, &ti) in self.times.iter().enumerate() {
            if (ti - t).abs() < (self.times[best] - t).abs() {
                best = i;
            }
        }
        best
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("t,ybar_a,ybar_b\n");
        for i in 0..self.len() {
            s.push_str(&format!("{:e},{:e},{:e}\n", self.times[i], self.ybar_a[i], self.ybar_b[i]));
        }
        s
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        io::write_file(path.as_ref(), &self.to_csv())
    }
}

/// Modulation scheme families.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum SchemeKind {
    #[serde(rename = "mosk")]
    MoSK,
    #[serde(rename = "ook")]
    OOK,
    #[serde(rename = "osk")]
    OSK,
    #[serde(rename = "conv-ook-1tm")]
    ConvOOK1TM,
    #[serde(rename = "nonreactive-ook-2tm")]
    NonReactiveOOK2TM,
}

impl SchemeKind {
    pub const ALL: [SchemeKind; 5] = [
        SchemeKind::MoSK,
        SchemeKind::OOK,
        SchemeKind::OSK,
        SchemeKind::ConvOOK1TM,
        SchemeKind::NonReactiveOOK2TM,
    ];

    pub fn name(self) -> &'static str {
        match self {
            SchemeKind::MoSK => "mosk",
            SchemeKind::OOK => "ook",
            SchemeKind::OSK => "osk",
            SchemeKind::ConvOOK1TM => "conv-ook-1tm",
            SchemeKind::NonReactiveOOK2TM => "nonreactive-ook-2tm",
        }
    }
}

impl fmt::Display for SchemeKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for SchemeKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let lower = s.to_ascii_lowercase();
        SchemeKind::ALL
            .into_iter()
            .find(|k| k.name() == lower)
            .ok_or_else(|| Error::Precondition(format!("unknown scheme '{s}'")))
    }
}

/// Mean receiver counts for every (current symbol, ISI sequence) pair.
///
/// ISI sequences are encoded as integers with the oldest bit most significant.
#[derive(Debug, Clone, PartialEq)]
pub struct CrTable {
    pub memory_len: usize,
    pub scheme: SchemeKind,
    /// Indexed by `s * 2^(L-1) + isi`; each entry is `[ybar_a, ybar_b]`.
    pub means: Vec<[f64; 2]>,
}

impl CrTable {
    pub fn n_isi(&self) -> usize {
        1 << (self.memory_len - 1)
    }

    pub fn len(&self) -> usize {
        self.means.len()
    }

    pub fn is_empty(&self) -> bool {
        self.means.is_empty()
    }

    pub fn get(&self, s: u8, isi: usize) -> [f64; 2] {
        self.means[s as usize * self.n_isi() + isi]
    }

    /// Looks up an entry with the ISI sequence given as bits, oldest first.
    pub fn get_bits(&self, s: u8, isi: &[u8]) -> [f64; 2] {
        self.get(s, bits_to_index(isi))
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("s,isi_bits,ybar_a,ybar_b\n");
        let l1 = self.memory_len - 1;
        for s in 0..2u8 {
            for isi in 0..self.n_isi() {
                let [a, b] = self.get(s, isi);
                out.push_str(&format!("{s},{},{a:e},{b:e}\n", index_to_bit_string(isi, l1)));
            }
        }
        out
    }
}

/// Packs bits (oldest first) into an integer with the oldest bit most significant.
pub fn bits_to_index(bits: &[u8]) -> usize {
    bits.iter().fold(0usize, |acc, &b| (acc << 1) | (b & 1) as usize)
}

/// Unpacks `len` bits, oldest first.
pub fn index_to_bits(index: usize, len: usize) -> Vec<u8> {
    (0..len).rev().map(|i| ((index >> i) & 1) as u8).collect()
}

pub fn index_to_bit_string(index: usize, len: usize) -> String {
    index_to_bits(index, len).iter().map(|b| if *b == 1 { '1' } else { '0' }).collect()
}
