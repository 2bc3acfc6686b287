//! Error type shared across the crate.

use thiserror::Error;

/// Errors produced by model construction and the security pipeline.
#[derive(Debug, Clone, Error)]
pub enum Error {
    /// A parameter violated its domain invariant. Carries the offending
    /// field name so config-level callers can point at the bad input.
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParam { name: &'static str, reason: String },

    /// The dispersion product k = 2*beta2*L vanished; the conjugate basis
    /// is undefined without it.
    #[error("dispersion product k must be nonzero")]
    ZeroDispersion,

    /// Residual arrival-time/dispersed coupling too large for the
    /// conjugate-basis analysis.
    #[error("residual T-D coupling {found:.3e} exceeds {limit:.3e}; increase the dispersion product")]
    ResidualCoupling { found: f64, limit: f64 },

    /// I1^2 < 4*I2 beyond tolerance when extracting symplectic eigenvalues.
    #[error("symplectic decomposition unstable: I1^2 - 4*I2 = -{deficit:.3e}")]
    SymplecticInstability { deficit: f64 },

    /// Conditioning on a basis whose pinched variance is zero.
    #[error("degenerate conditioning: pinched variance is zero")]
    DegenerateConditioning,

    /// A correlation coefficient reached or exceeded unity.
    #[error("unphysical correlation coefficient |mu| = {mu} >= 1")]
    UnphysicalCorrelation { mu: f64 },

    /// Click bookkeeping with zero total click probability.
    #[error("click probabilities undefined: p + d = 0")]
    NoClickMass,

    /// No (eps, eta) pair on the measured-noise line satisfies the
    /// physicality constraints; the measurement is inconsistent.
    #[error("measured noise xi = {xi} admits no physical (eps, eta) interpretation")]
    EmptyNoiseRegion { xi: f64 },

    /// A photon-number series failed to reach the requested tail bound.
    #[error("series truncation failed: tail bound {tail:.3e} above {limit:.3e}")]
    Truncation { tail: f64, limit: f64 },

    /// Bisection for the source operating point cannot satisfy the bound.
    #[error("multiphoton bound {bound} unattainable")]
    UnattainableBound { bound: f64 },

    /// Noise estimation was asked to run on too small a sample.
    #[error("insufficient sifted data: need at least {needed} pairs per basis, got {got}")]
    InsufficientData { needed: usize, got: usize },
}

pub type Result<T> = std::result::Result<T, Error>;
