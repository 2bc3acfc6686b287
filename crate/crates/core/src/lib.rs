//! Secret-key-capacity engine and frame-level Monte Carlo simulator for a
//! dispersive-optics high-dimensional QKD protocol.
//!
//! The pipeline runs Gaussian covariance matrices through three stages:
//! the noiseless biphoton model ([`gaussian`]), the eavesdropper and
//! detector transformations ([`noise`]), and the collective-attack
//! security bounds ([`security`]). [`source`] models the heralded photon
//! source and [`montecarlo`] validates the analytic covariances with
//! event-level simulation.

pub mod error;
pub mod gaussian;
pub mod montecarlo;
pub mod noise;
pub mod security;
pub mod source;

pub use error::{Error, Result};
pub use gaussian::{
    build_noiseless_cov, conjugacy_ratio, dispersed_correlation_time, schmidt_dimension,
    AuxScales, CovMatrix4, DispersionParams, SourceParams,
};
pub use montecarlo::{
    estimate_noise, sift, simulate, Basis, ClickKind, FrameOutcome, NoiseEstimate, SiftedPair,
    SiftedSample, SimConfig, Simulation,
};
pub use noise::{
    apply_detector_model, apply_eve_noise, click_probabilities, eps_from_eta_xi,
    measured_from_eve, physical_noise_region, sigma_delta_from_xi, theta_from_eps_eta,
    xi_from_eps_eta, xi_from_sigma_delta, ClickProbabilities, EveNoise, LinkParams,
    MeasuredNoise,
};
pub use security::{
    capacity_at, conditional_cov, entropy_f, holevo_information, key_rate, mutual_information,
    secret_key_capacity, symplectic_invariants, worst_case_capacity, CapacityInputs,
    CapacityReport, ConditioningBasis, RateConvention, RateReport, SymplecticInvariants,
};
pub use source::{
    bose_einstein_pmf, herald_failure_prob, heralded_output_dist, operating_point,
    switch_transmissivity, HeraldParams, PhotonNumberDist,
};
