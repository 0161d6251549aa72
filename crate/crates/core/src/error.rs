use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// A configuration value violates a type invariant.
    #[error("invalid `{field}`: {reason}")]
    Invalid { field: String, reason: String },

    #[error("unknown preset `{0}` (available: beam-1MHz, beam-455kHz)")]
    UnknownPreset(String),

    /// Beam touches an electrode somewhere on its span.
    #[error("overclosure: modal displacement {q:.6e} m closes the {gap:.3e} m gap")]
    Overclosure { q: f64, gap: f64 },

    /// Overclosure hit while integrating in time.
    #[error("overclosure at t = {t:.6e} s (q = {q:.6e} m): pull-in or excessive drive")]
    TransientOverclosure { t: f64, q: f64 },

    /// Overclosure during a doubling run, with an amplitude to retry at.
    #[error(
        "beam reached the electrode at t = {t:.6e} s (q = {q:.6e} m); input-gap pull-in is \
         {pull_in:.2} V, retry with v_amp below about {suggested_v_amp:.2} V"
    )]
    DriveTooLarge {
        t: f64,
        q: f64,
        pull_in: f64,
        suggested_v_amp: f64,
    },

    #[error("pull-in: no stable equilibrium at {voltage:.4} V")]
    PullIn { voltage: f64 },

    #[error("pull-in bracket failure: equilibrium still stable at {upper:.1} V")]
    BracketFailure { upper: f64 },

    #[error("quadrature did not converge: {coarse:.12e} vs {fine:.12e}")]
    Quadrature { coarse: f64, fine: f64 },

    #[error("eigen iteration did not converge for mode {mode} (backward error {residual:.3e})")]
    EigenNonConvergence { mode: usize, residual: f64 },

    #[error("mass matrix is not positive definite")]
    SingularMass,

    #[error("non-finite input sample at index {0}")]
    NonFinite(usize),

    #[error("no resonance peak found")]
    NoPeak,

    #[error("half-power crossing lies outside the analysed band ({side} side)")]
    HalfPowerOutOfBand { side: &'static str },

    #[error("harmonic at {freq:.6e} Hz is beyond Nyquist ({nyquist:.6e} Hz)")]
    BeyondNyquist { freq: f64, nyquist: f64 },

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("JSON: {0}")]
    Json(#[from] serde_json::Error),

    #[error("CSV: {0}")]
    Csv(#[from] csv::Error),
}

impl Error {
    pub fn invalid(field: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::Invalid {
            field: field.into(),
            reason: reason.into(),
        }
    }

    /// True for errors caused by bad user input rather than by the physics.
    pub fn is_validation(&self) -> bool {
        matches!(
            self,
            Error::Invalid { .. } | Error::UnknownPreset(_) | Error::Json(_) | Error::Io { .. }
        )
    }
}
