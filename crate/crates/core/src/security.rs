//! Collective-attack security bounds: symplectic decomposition, Holevo
//! information, mutual information, the secret-key capacity
//! Delta I = beta I(A;B) - chi(A;E), and the secure key rate.
//!
//! The symplectic analysis runs in normalized units where the commutator
//! floor sits at 1/2; covariances arrive in ps^2 and carry the dispersion
//! product k used for the conversion.

use nalgebra::Matrix2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gaussian::{CovMatrix4, DispersionParams, SourceParams};
use crate::noise::{
    apply_detector_model, apply_eve_noise, click_probabilities, physical_noise_region,
    ClickProbabilities, EveNoise, LinkParams,
};

/// Relative size of normalized T-D cross terms above which the
/// sector-decoupled symplectic analysis refuses to run.
const COUPLING_TOLERANCE: f64 = 1e-6;

/// Gaussian-state entropy kernel
/// f(x) = (x + 1/2) log2(x + 1/2) - (x - 1/2) log2(x - 1/2), with
/// f(1/2) = 0 by the 0 log 0 convention. Inputs within 1e-9 below 1/2 are
/// clamped to the vacuum floor; anything lower is rejected.
pub fn entropy_f(x: f64) -> Result<f64> {
    if x < 0.5 - 1e-9 {
        return Err(Error::InvalidParam {
            name: "entropy_f.x",
            reason: format!("symplectic eigenvalue {x} below vacuum floor 1/2"),
        });
    }
    let x = x.max(0.5);
    let plus = x + 0.5;
    let minus = x - 0.5;
    let lead = plus * plus.log2();
    if minus == 0.0 {
        // lead = 1 * log2(1) = 0 at the floor
        return Ok(lead);
    }
    Ok(lead - minus * minus.log2())
}

/// Symplectic invariants and eigenvalues of a two-mode covariance matrix.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SymplecticInvariants {
    pub i1: f64,
    pub i2: f64,
    pub d_plus: f64,
    pub d_minus: f64,
}

/// Sector view of the normalized matrix once T-D cross terms are certified
/// negligible: (a1, a2) Alice's diagonal, (b1, b2) Bob's, (c1, c2) the
/// cross-party couplings in the T and D sectors.
struct Sectors {
    a1: f64,
    a2: f64,
    b1: f64,
    b2: f64,
    c1: f64,
    c2: f64,
}

fn sectors(gamma: &CovMatrix4, k_ps2: f64) -> Result<Sectors> {
    let coupling = gamma.residual_td_coupling(k_ps2);
    if coupling > COUPLING_TOLERANCE {
        return Err(Error::ResidualCoupling {
            found: coupling,
            limit: COUPLING_TOLERANCE,
        });
    }
    let n = gamma.to_normalized(k_ps2);
    Ok(Sectors {
        a1: n[(0, 0)],
        a2: n[(1, 1)],
        b1: n[(2, 2)],
        b2: n[(3, 3)],
        c1: n[(0, 2)],
        c2: n[(1, 3)],
    })
}

/// I1 = det gAA + det gBB + 2 det gAB, I2 = det Gamma, and
/// d(+/-) = sqrt((I1 +/- sqrt(I1^2 - 4 I2)) / 2).
///
/// The discriminant is evaluated through the factored sector identity
/// (p - q)^2 + 4 (a2 c1 + b1 c2)(a1 c2 + b2 c1), which vanishes without
/// cancellation on pure states; the naive I1^2 - 4 I2 loses enough digits
/// there to miss the vacuum floor by orders of magnitude.
pub fn symplectic_invariants(gamma: &CovMatrix4, k_ps2: f64) -> Result<SymplecticInvariants> {
    let s = sectors(gamma, k_ps2)?;
    let p = s.a1 * s.a2;
    let q = s.b1 * s.b2;
    let r = s.c1 * s.c2;

    let i1 = p + q + 2.0 * r;
    let i2 = (s.a1 * s.b1 - s.c1 * s.c1) * (s.a2 * s.b2 - s.c2 * s.c2);
    let disc = {
        let diff = p - q;
        let f1 = s.a2 * s.c1 + s.b1 * s.c2;
        let f2 = s.a1 * s.c2 + s.b2 * s.c1;
        diff * diff + 4.0 * f1 * f2
    };
    if disc < -1e-9 * i1 * i1 {
        return Err(Error::SymplecticInstability { deficit: -disc });
    }
    let root = disc.max(0.0).sqrt();
    let d_plus = ((i1 + root) / 2.0).sqrt();
    let d_minus = ((i1 - root).max(0.0) / 2.0).sqrt();
    Ok(SymplecticInvariants {
        i1,
        i2,
        d_plus,
        d_minus,
    })
}

/// Which of Alice's observables Bob's state is conditioned on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ConditioningBasis {
    ArrivalTime,
    Dispersed,
}

/// Bob's conditional covariance gB|x = gBB - gBA (X gAA X)^+ gAB in
/// normalized units, where X pinches out the measured component and the
/// inverse is the Moore-Penrose pseudoinverse of the rank-one result.
pub fn conditional_cov(
    gamma: &CovMatrix4,
    k_ps2: f64,
    basis: ConditioningBasis,
) -> Result<Matrix2<f64>> {
    let n = gamma.to_normalized(k_ps2);
    let g_aa = n.fixed_view::<2, 2>(0, 0);
    let g_ab = n.fixed_view::<2, 2>(0, 2).into_owned();
    let g_ba = n.fixed_view::<2, 2>(2, 0).into_owned();
    let g_bb = n.fixed_view::<2, 2>(2, 2).into_owned();

    let idx = match basis {
        ConditioningBasis::ArrivalTime => 0,
        ConditioningBasis::Dispersed => 1,
    };
    let pinched = g_aa[(idx, idx)];
    if pinched <= 0.0 {
        return Err(Error::DegenerateConditioning);
    }
    let mut pinv = Matrix2::zeros();
    pinv[(idx, idx)] = 1.0 / pinched;
    Ok(g_bb - g_ba * pinv * g_ab)
}

/// Holevo bound on Eve's information about Alice's data under collective
/// attacks: chi = S(rho_AB) - (S(rho_B|t) + S(rho_B|w)) / 2, evaluated on
/// Gamma' (detector imperfections do not help Eve).
pub fn holevo_information(gamma_p: &CovMatrix4, k_ps2: f64) -> Result<f64> {
    let inv = symplectic_invariants(gamma_p, k_ps2)?;
    let s_ab = entropy_f(inv.d_plus)? + entropy_f(inv.d_minus)?;
    let g_t = conditional_cov(gamma_p, k_ps2, ConditioningBasis::ArrivalTime)?;
    let g_w = conditional_cov(gamma_p, k_ps2, ConditioningBasis::Dispersed)?;
    let s_t = entropy_f(g_t.determinant().max(0.0).sqrt())?;
    let s_w = entropy_f(g_w.determinant().max(0.0).sqrt())?;
    Ok(s_ab - 0.5 * (s_t + s_w))
}

/// Classical mutual information of the two arrival-time records:
/// I(A;B) = (log2(1/(1-muT^2)) + log2(1/(1-muD^2))) / 4 from the
/// correlation coefficients of Gamma''. Unit-independent, so the ps^2
/// representation is used directly.
pub fn mutual_information(gamma_pp: &CovMatrix4) -> Result<f64> {
    let m = gamma_pp.matrix();
    let mu_t = m[(0, 2)] / (m[(0, 0)] * m[(2, 2)]).sqrt();
    let mu_d = m[(1, 3)] / (m[(1, 1)] * m[(3, 3)]).sqrt();
    for mu in [mu_t, mu_d] {
        if !(mu.abs() < 1.0) {
            return Err(Error::UnphysicalCorrelation { mu });
        }
    }
    Ok(0.25 * ((1.0 / (1.0 - mu_t * mu_t)).log2() + (1.0 / (1.0 - mu_d * mu_d)).log2()))
}

/// Secret-key capacity report for one noise point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CapacityReport {
    pub mutual_info_bits: f64,
    pub holevo_bits: f64,
    /// beta * I(A;B) - chi(A;E), bits per character. May be negative;
    /// `abort` flags that case rather than clamping.
    pub delta_i_bpc: f64,
    pub beta: f64,
    pub worst_case_noise: EveNoise,
    pub abort: bool,
}

/// Delta I = beta I(A;B)(Gamma'') - chi(A;E)(Gamma') at one noise point.
pub fn secret_key_capacity(
    gamma_p: &CovMatrix4,
    gamma_pp: &CovMatrix4,
    k_ps2: f64,
    beta: f64,
    noise: &EveNoise,
) -> Result<CapacityReport> {
    if !(0.0..=1.0).contains(&beta) {
        return Err(Error::InvalidParam {
            name: "security.beta",
            reason: "must be in [0, 1]".to_owned(),
        });
    }
    let chi = holevo_information(gamma_p, k_ps2)?;
    let mi = mutual_information(gamma_pp)?;
    let delta_i = beta * mi - chi;
    Ok(CapacityReport {
        mutual_info_bits: mi,
        holevo_bits: chi,
        delta_i_bpc: delta_i,
        beta,
        worst_case_noise: *noise,
        abort: delta_i <= 0.0,
    })
}

/// Everything the worst-case search needs besides the measured noise.
#[derive(Debug, Clone, Copy)]
pub struct CapacityInputs<'a> {
    pub gamma: &'a CovMatrix4,
    pub src: &'a SourceParams,
    pub disp: &'a DispersionParams,
    pub link: &'a LinkParams,
    pub beta: f64,
    pub region_grid: usize,
}

/// Capacity at a single (eps, eta) point: Gamma -> Gamma' -> Gamma''.
pub fn capacity_at(noise: &EveNoise, inputs: &CapacityInputs<'_>) -> Result<CapacityReport> {
    let k = inputs.disp.dispersion_product_ps2();
    let gamma_p = apply_eve_noise(inputs.gamma, noise)?;
    let clicks = click_probabilities(inputs.src, inputs.link)?;
    let gamma_pp = apply_detector_model(&gamma_p, &clicks, inputs.link)?;
    secret_key_capacity(&gamma_p, &gamma_pp, k, inputs.beta, noise)
}

/// Minimum Delta I over every physical (eps, eta) consistent with the
/// measured xi. Ties break toward larger eta (the more pessimistic
/// correlation loss), so the result is deterministic.
pub fn worst_case_capacity(xi: f64, inputs: &CapacityInputs<'_>) -> Result<CapacityReport> {
    let region = physical_noise_region(xi, inputs.region_grid, inputs.gamma, inputs.src, inputs.disp)?;
    let mut worst: Option<CapacityReport> = None;
    for pair in &region {
        let report = capacity_at(pair, inputs)?;
        worst = match worst {
            Some(best) if report.delta_i_bpc > best.delta_i_bpc => Some(best),
            _ => Some(report),
        };
    }
    // region is nonempty by construction
    Ok(worst.expect("nonempty noise region"))
}

/// Which reading of the rate formula R = Delta I * P_C * gamma_nu to use.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RateConvention {
    /// P_C is the per-party single-click probability conditioned on a pair
    /// being generated, times the sifting factor; gamma_nu carries the pair
    /// rate.
    Paper,
    /// R = Delta I * frame rate * Pr[both exactly one click, same basis],
    /// with the unconditional click probabilities, so the pair probability
    /// is counted once.
    Strict,
}

impl RateConvention {
    pub fn as_str(&self) -> &'static str {
        match self {
            RateConvention::Paper => "paper",
            RateConvention::Strict => "strict",
        }
    }
}

/// Secure-rate report in bits per second.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RateReport {
    pub rate_bps: f64,
    /// Probability factor applied to the per-second rate (see convention).
    pub p_c: f64,
    /// Pair generation rate, pairs/s.
    pub gamma_nu_hz: f64,
    /// Frame rate, frames/s.
    pub frame_rate_hz: f64,
    pub convention: RateConvention,
}

/// Secret-key rate from a capacity report: gamma_nu = p_nu / (6 sigma_coh).
pub fn key_rate(
    capacity: &CapacityReport,
    src: &SourceParams,
    link: &LinkParams,
    clicks: &ClickProbabilities,
    convention: RateConvention,
    sifting_factor: f64,
) -> Result<RateReport> {
    if !(0.0..=1.0).contains(&sifting_factor) {
        return Err(Error::InvalidParam {
            name: "security.sifting",
            reason: "must be in [0, 1]".to_owned(),
        });
    }
    let frame_s = src.frame_duration_ps() * 1e-12;
    let frame_rate_hz = 1.0 / frame_s;
    let gamma_nu_hz = src.pair_prob / frame_s;
    let p_d = link.dark_prob_per_frame(src.frame_duration_ps())?;

    let (p_c, rate_bps) = match convention {
        RateConvention::Paper => {
            // one-click probability per party given a generated pair
            let c_a = (1.0 - link.loss_a()) * (1.0 - p_d) + link.loss_a() * p_d;
            let c_b = (1.0 - link.loss_b()) * (1.0 - p_d) + link.loss_b() * p_d;
            let p_c = sifting_factor * c_a * c_b;
            (p_c, capacity.delta_i_bpc * p_c * gamma_nu_hz)
        }
        RateConvention::Strict => {
            let p_c = sifting_factor
                * (clicks.p_a + clicks.d_a)
                * (clicks.p_b + clicks.d_b);
            (p_c, capacity.delta_i_bpc * p_c * frame_rate_hz)
        }
    };
    Ok(RateReport {
        rate_bps,
        p_c,
        gamma_nu_hz,
        frame_rate_hz,
        convention,
    })
}
