use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("point {point:?} lies outside the domain {domain}")]
    Domain { point: Vec<f64>, domain: String },

    #[error("target has zero variance under the design; cannot calibrate noise")]
    DegenerateSignal,

    #[error("only {found} positive eigenvalues in fit range {range:?}, need at least 3")]
    InsufficientSpectrum { found: usize, range: (usize, usize) },

    #[error("parameter {name} = {value} is outside the admissible regime ({requirement})")]
    OutOfRegime {
        name: &'static str,
        value: f64,
        requirement: &'static str,
    },

    #[error("factorization failed: {message} (condition estimate {condition:.3e})")]
    Numerical { message: String, condition: f64 },

    #[error("degenerate smoother: {0}")]
    DegenerateSmoother(String),

    #[error("selection failed: every grid point was degenerate")]
    Selection,

    #[error("cannot split {n} observations with fraction {frac}")]
    Split { n: usize, frac: f64 },

    #[error("empty smoothness grid on axis {axis}: width {width} is below the step {step}")]
    EmptyGrid { axis: usize, width: f64, step: f64 },

    #[error("candidate {index} (h = {h}) failed: {source}")]
    Candidate {
        index: usize,
        h: f64,
        #[source]
        source: Box<Error>,
    },

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{}: {message}", path.display())]
    Parse { path: PathBuf, message: String },
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
