use std::fmt;
use std::path::PathBuf;

/// One violated configuration invariant.
#[derive(Debug, Clone, PartialEq)]
pub struct Violation {
    pub field: &'static str,
    pub message: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.field, self.message)
    }
}

/// Every violation found while validating a configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct Violations(pub Vec<Violation>);

impl Violations {
    pub fn iter(&self) -> impl Iterator<Item = &Violation> {
        self.0.iter()
    }

    /// True when some violation message contains `needle`.
    pub fn mentions(&self, needle: &str) -> bool {
        self.0.iter().any(|v| v.message.contains(needle) || v.field == needle)
    }
}

impl fmt::Display for Violations {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, v) in self.0.iter().enumerate() {
            if i > 0 {
                f.write_str("; ")?;
            }
            write!(f, "{v}")?;
        }
        Ok(())
    }
}

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    Invalid(Violations),
    #[error("precondition violated: {0}")]
    Precondition(String),
    #[error("no finite equilibrium: forward rate kf is zero")]
    NoEquilibrium,
    #[error("kernel for species {species} is not finite at row {row}; increase dr or dt")]
    KernelOverflow { species: char, row: usize },
    #[error("grid mismatch: field has {field} points, operator expects {expected}")]
    GridMismatch { field: usize, expected: usize },
    #[error("receiver [{inner:e}, {outer:e}] m lies outside the grid (r_max = {r_max:e} m)")]
    ReceiverOutsideGrid { inner: f64, outer: f64, r_max: f64 },
    #[error("dt too large for first-order path: negative concentration at node {node}")]
    FirstOrderUnstable { node: usize },
    #[error("step {step} (t = {time:e} s): {source}")]
    Step {
        step: usize,
        time: f64,
        #[source]
        source: Box<Error>,
    },
    #[error("intermediate binding regime: dt = {dt:e} s is within a factor of 10 of T_crt = {t_crt:e} s; choose dt <= {small_max:e} s or dt >= {large_min:e} s")]
    IntermediateRegime { dt: f64, t_crt: f64, small_max: f64, large_min: f64 },
    #[error("binding radius for kf = {0:e} did not converge")]
    BindingRadius(f64),
    #[error("scheme {0} needs tau values; run compute_tau first")]
    MissingTau(&'static str),
    #[error("flat channel response: species {0} never reaches the receiver")]
    FlatResponse(char),
    #[error("uninformative channel: equal means under both hypotheses")]
    UninformativeChannel,
    #[error("block length K = {0} exceeds the supported maximum of 12")]
    BlockTooLong(usize),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
}

impl Error {
    /// True for errors caused by user input rather than by a failing run.
    pub fn is_validation(&self) -> bool {
        match self {
            Error::Invalid(_)
            | Error::Precondition(_)
            | Error::IntermediateRegime { .. }
            | Error::MissingTau(_)
            | Error::BlockTooLong(_)
            | Error::Json { .. }
            | Error::ReceiverOutsideGrid { .. } => true,
            Error::Io { source, .. } => source.kind() == std::io::ErrorKind::NotFound,
            _ => false,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
