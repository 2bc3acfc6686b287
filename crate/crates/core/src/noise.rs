//! Channel and detector noise: the Eve transformation Gamma -> Gamma', the
//! detector transformation Gamma' -> Gamma'', and conversions between the
//! model noise parameters (eps, eta) and the measurable ones (xi, theta,
//! sigma_delta).

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gaussian::{schmidt_dimension, CovMatrix4, DispersionParams, SourceParams};
use crate::security;

/// Grid resolution for the physical-noise-region search. The secret-key
/// capacity depends only weakly on where the measured noise splits between
/// eps and eta, so a modest grid is enough.
pub const DEFAULT_REGION_GRID: usize = 200;

/// Eve/channel noise in the model parameterization.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EveNoise {
    /// Excess-noise fraction on Bob's variances.
    pub eps: f64,
    /// Correlation-loss fraction on the cross blocks.
    pub eta: f64,
}

impl EveNoise {
    pub const NONE: EveNoise = EveNoise { eps: 0.0, eta: 0.0 };

    pub fn new(eps: f64, eta: f64) -> Result<Self> {
        let n = Self { eps, eta };
        n.validate()?;
        Ok(n)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.eps >= 0.0) {
            return Err(invalid("noise.eps", "must be >= 0"));
        }
        if !(0.0..=1.0).contains(&self.eta) {
            return Err(invalid("noise.eta", "must be in [0, 1]"));
        }
        Ok(())
    }
}

/// Noise in the experimentally measurable parameterization.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeasuredNoise {
    /// Relative growth of the difference variance Var[T_A - T_B].
    pub xi: f64,
    /// Relative shrinkage of the sum variance Var[T_A + T_B].
    pub theta: f64,
    /// Equivalent correlation-time offset (ps).
    pub sigma_delta_ps: f64,
}

/// Fiber channel and detector parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinkParams {
    /// Fiber attenuation (dB/km).
    pub alpha_db_per_km: f64,
    /// Channel length between Alice and Bob (km).
    pub length_km: f64,
    /// Alice's system detection efficiency.
    pub eta_det_a: f64,
    /// Bob's system detection efficiency.
    pub eta_det_b: f64,
    /// Detector timing jitter standard deviation (ps).
    pub jitter_ps: f64,
    /// Dark count rate (counts/s).
    pub dark_rate_hz: f64,
}

impl LinkParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha_db_per_km >= 0.0) {
            return Err(invalid("link.alpha_db_per_km", "must be >= 0"));
        }
        if !(self.length_km >= 0.0) {
            return Err(invalid("link.length_km", "must be >= 0"));
        }
        for (name, v) in [
            ("link.eta_det_a", self.eta_det_a),
            ("link.eta_det_b", self.eta_det_b),
        ] {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::InvalidParam {
                    name,
                    reason: "must be in [0, 1]".to_owned(),
                });
            }
        }
        if !(self.jitter_ps >= 0.0) {
            return Err(invalid("link.jitter_ps", "must be >= 0"));
        }
        if !(self.dark_rate_hz >= 0.0) {
            return Err(invalid("link.dark_rate_hz", "must be >= 0"));
        }
        Ok(())
    }

    /// Channel power transmission 10^(-alpha L / 10).
    pub fn transmission(&self) -> f64 {
        10f64.powf(-self.alpha_db_per_km * self.length_km / 10.0)
    }

    /// Alice's loss: her photon never leaves the lab, so only detector
    /// efficiency contributes.
    pub fn loss_a(&self) -> f64 {
        1.0 - self.eta_det_a
    }

    /// Bob's loss: detector efficiency times fiber transmission.
    pub fn loss_b(&self) -> f64 {
        1.0 - self.eta_det_b * self.transmission()
    }

    /// Dark-count probability per frame of the given duration.
    pub fn dark_prob_per_frame(&self, frame_ps: f64) -> Result<f64> {
        let p = self.dark_rate_hz * frame_ps * 1e-12;
        if p > 1.0 {
            return Err(invalid(
                "link.dark_rate_hz",
                "dark-count probability per frame exceeds 1",
            ));
        }
        Ok(p)
    }
}

impl Default for LinkParams {
    fn default() -> Self {
        Self {
            alpha_db_per_km: 0.2,
            length_km: 0.0,
            eta_det_a: 0.93,
            eta_det_b: 0.93,
            jitter_ps: 20.0,
            dark_rate_hz: 1000.0,
        }
    }
}

/// Per-party photon/dark click probabilities and the conditional fractions
/// given a single click.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClickProbabilities {
    pub p_a: f64,
    pub p_b: f64,
    pub d_a: f64,
    pub d_b: f64,
    pub r_nu_a: f64,
    pub r_nu_b: f64,
    pub r_d_a: f64,
    pub r_d_b: f64,
}

/// Gamma' from Gamma: Alice's block untouched (Eve never sees her photon),
/// cross blocks scaled by (1 - eta), Bob's block by (1 + eps). The same
/// factors act on arrival-time and dispersed rows alike.
pub fn apply_eve_noise(gamma: &CovMatrix4, noise: &EveNoise) -> Result<CovMatrix4> {
    noise.validate()?;
    let mut m = *gamma.matrix();
    let cross = 1.0 - noise.eta;
    let bob = 1.0 + noise.eps;
    for i in 0..2 {
        for j in 2..4 {
            m[(i, j)] *= cross;
            m[(j, i)] *= cross;
        }
    }
    for i in 2..4 {
        for j in 2..4 {
            m[(i, j)] *= bob;
        }
    }
    Ok(CovMatrix4::from_matrix_unchecked(m))
}

/// Photon/dark click bookkeeping for one frame, per party.
///
/// A photon click requires a generated pair that survives the loss with no
/// dark count in the frame; a dark click requires a dark count with no
/// detected photon.
pub fn click_probabilities(src: &SourceParams, link: &LinkParams) -> Result<ClickProbabilities> {
    src.validate()?;
    link.validate()?;
    let p_d = link.dark_prob_per_frame(src.frame_duration_ps())?;
    let p_nu = src.pair_prob;

    let party = |loss: f64| -> Result<(f64, f64, f64, f64)> {
        let p = p_nu * (1.0 - loss) * (1.0 - p_d);
        let d = (p_nu * loss + (1.0 - p_nu)) * p_d;
        let total = p + d;
        if total == 0.0 {
            return Err(Error::NoClickMass);
        }
        let r_nu = p / total;
        // complement rather than d/total so the two fractions sum to 1 exactly
        Ok((p, d, r_nu, 1.0 - r_nu))
    };

    let (p_a, d_a, r_nu_a, r_d_a) = party(link.loss_a())?;
    let (p_b, d_b, r_nu_b, r_d_b) = party(link.loss_b())?;
    Ok(ClickProbabilities {
        p_a,
        p_b,
        d_a,
        d_b,
        r_nu_a,
        r_nu_b,
        r_d_a,
        r_d_b,
    })
}

/// Gamma'' from Gamma': jitter and dark counts fold into the variances.
///
/// Cross-party covariances pick up R_nuA * R_nuB, diagonals become
/// R_nu (Var + sigma_J^2) + R_d * Var[dark], and dark clicks are uniform
/// over a window of six standard deviations of Alice's corresponding
/// variable, so Var[dark] = (6 sqrt(Var_A'))^2 / 12 = 3 Var_A'.
pub fn apply_detector_model(
    gamma_p: &CovMatrix4,
    clicks: &ClickProbabilities,
    link: &LinkParams,
) -> Result<CovMatrix4> {
    let g = gamma_p.matrix();
    for i in 0..4 {
        if !(g[(i, i)] > 0.0) {
            return Err(invalid("gamma_p", "variances must be positive"));
        }
    }
    let sj2 = link.jitter_ps * link.jitter_ps;
    let dark_t = 3.0 * g[(0, 0)]; // F = 6 sqrt(Var[T_A'])
    let dark_d = 3.0 * g[(1, 1)]; // E = 6 sqrt(Var[D_A'])
    let r_nu = [clicks.r_nu_a, clicks.r_nu_a, clicks.r_nu_b, clicks.r_nu_b];
    let r_d = [clicks.r_d_a, clicks.r_d_a, clicks.r_d_b, clicks.r_d_b];

    let mut m = *g;
    for i in 0..4 {
        for j in 0..4 {
            if i == j {
                continue;
            }
            if i / 2 == j / 2 {
                // within one party a dark count contributes no covariance
                m[(i, j)] = r_nu[i] * g[(i, j)];
            } else {
                m[(i, j)] = r_nu[i] * r_nu[j] * g[(i, j)];
            }
        }
    }
    for i in 0..4 {
        let dark = if i % 2 == 0 { dark_t } else { dark_d };
        m[(i, i)] = r_nu[i] * (g[(i, i)] + sj2) + r_d[i] * dark;
    }
    Ok(CovMatrix4::from_matrix_unchecked(m))
}

/// eps from (eta, xi) on the measured-noise line:
/// eps = (xi - 2 eta (d^2 - 1/4)) / (d^2 + 1/4).
pub fn eps_from_eta_xi(eta: f64, xi: f64, d: f64) -> Result<f64> {
    check_dim(d)?;
    Ok((xi - 2.0 * eta * (d * d - 0.25)) / (d * d + 0.25))
}

/// xi from (eps, eta): the forward direction of the same linear relation.
pub fn xi_from_eps_eta(noise: &EveNoise, d: f64) -> Result<f64> {
    check_dim(d)?;
    Ok(noise.eps * (d * d + 0.25) + 2.0 * noise.eta * (d * d - 0.25))
}

/// theta from (eps, eta), derived from the sum-variance identity:
/// theta = (2 eta (u - v) - eps (u + v)) / (4u) with u/v = 4 d^2.
pub fn theta_from_eps_eta(noise: &EveNoise, d: f64) -> Result<f64> {
    check_dim(d)?;
    let d2 = d * d;
    Ok((2.0 * noise.eta * (4.0 * d2 - 1.0) - noise.eps * (4.0 * d2 + 1.0)) / (16.0 * d2))
}

/// sigma_delta = sigma_cor (sqrt(1 + xi) - 1).
pub fn sigma_delta_from_xi(xi: f64, sigma_cor_ps: f64) -> f64 {
    sigma_cor_ps * ((1.0 + xi).sqrt() - 1.0)
}

/// xi = (1 + sigma_delta / sigma_cor)^2 - 1.
pub fn xi_from_sigma_delta(sigma_delta_ps: f64, sigma_cor_ps: f64) -> f64 {
    let r = 1.0 + sigma_delta_ps / sigma_cor_ps;
    r * r - 1.0
}

/// Full measurable description of an (eps, eta) pair.
pub fn measured_from_eve(noise: &EveNoise, d: f64, sigma_cor_ps: f64) -> Result<MeasuredNoise> {
    let xi = xi_from_eps_eta(noise, d)?;
    Ok(MeasuredNoise {
        xi,
        theta: theta_from_eps_eta(noise, d)?,
        sigma_delta_ps: sigma_delta_from_xi(xi, sigma_cor_ps),
    })
}

/// All (eps, eta) pairs on the xi line that a physical eavesdropper could
/// realize: a uniform eta grid with endpoints, filtered by
/// (i) no mutual-information gain, (ii) symplectic eigenvalues >= 1/2,
/// (iii) the measured time correlation only degrades.
pub fn physical_noise_region(
    xi: f64,
    grid_size: usize,
    gamma: &CovMatrix4,
    src: &SourceParams,
    disp: &DispersionParams,
) -> Result<Vec<EveNoise>> {
    if !(xi >= 0.0) {
        return Err(invalid("noise.xi", "must be >= 0"));
    }
    if grid_size < 2 {
        return Err(invalid("noise.region_grid", "must be >= 2"));
    }
    if xi == 0.0 {
        return Ok(vec![EveNoise::NONE]);
    }
    let d = schmidt_dimension(src);
    check_dim(d)?;
    let k = disp.dispersion_product_ps2();
    let eta_max = (xi / (2.0 * (d * d - 0.25))).min(1.0);

    let i_noiseless = security::mutual_information(gamma)?;
    let var_diff_0 = gamma.var_time_diff();

    let mut region = Vec::with_capacity(grid_size);
    for idx in 0..grid_size {
        let eta = eta_max * idx as f64 / (grid_size - 1) as f64;
        let eps = eps_from_eta_xi(eta, xi, d)?;
        // the eta endpoint maps to eps = 0 exactly up to rounding
        let eps = if eps.abs() < 1e-15 { 0.0 } else { eps };
        if eps < 0.0 {
            continue;
        }
        let pair = EveNoise { eps, eta };
        let gamma_p = apply_eve_noise(gamma, &pair)?;

        // (iii) Eve can only degrade the time correlation
        if gamma_p.var_time_diff() < var_diff_0 * (1.0 - 1e-12) {
            continue;
        }
        // (ii) physical symplectic spectrum
        match security::symplectic_invariants(&gamma_p, k) {
            Ok(inv) if inv.d_minus >= 0.5 - 1e-9 => {}
            _ => continue,
        }
        // (i) data processing: no mutual-information gain
        match security::mutual_information(&gamma_p) {
            Ok(i_eve) if i_eve <= i_noiseless + 1e-9 => {}
            _ => continue,
        }
        region.push(pair);
    }

    if region.is_empty() {
        return Err(Error::EmptyNoiseRegion { xi });
    }
    Ok(region)
}

fn check_dim(d: f64) -> Result<()> {
    if !(d > 0.5) {
        return Err(invalid("d", "Schmidt number must be > 1/2"));
    }
    Ok(())
}

fn invalid(name: &'static str, reason: &str) -> Error {
    Error::InvalidParam {
        name,
        reason: reason.to_owned(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gaussian::build_noiseless_cov;

    fn fig2() -> (SourceParams, DispersionParams, CovMatrix4) {
        let src = SourceParams::new(1920.0, 30.0, 0.607).unwrap();
        let disp = DispersionParams::from_product(1e8).unwrap();
        let g = build_noiseless_cov(&src, &disp).unwrap();
        (src, disp, g)
    }

    #[test]
    fn eve_identity_and_full_decorrelation() {
        let (_, _, g) = fig2();
        let same = apply_eve_noise(&g, &EveNoise::NONE).unwrap();
        assert_eq!(same.matrix(), g.matrix());

        let dead = apply_eve_noise(&g, &EveNoise { eps: 0.0, eta: 1.0 }).unwrap();
        for i in 0..2 {
            for j in 2..4 {
                assert_eq!(dead.entry(i, j), 0.0);
                assert_eq!(dead.entry(j, i), 0.0);
            }
        }
    }

    #[test]
    fn eve_scales_bob_and_cross_blocks() {
        let (_, _, g) = fig2();
        let n = EveNoise {
            eps: 6.3e-5,
            eta: 6.3e-5,
        };
        let gp = apply_eve_noise(&g, &n).unwrap();
        // Alice's block bitwise untouched
        for i in 0..2 {
            for j in 0..2 {
                assert_eq!(gp.entry(i, j), g.entry(i, j));
            }
        }
        assert_eq!(gp.entry(2, 2), g.entry(2, 2) * 1.000063);
        assert_eq!(gp.entry(0, 2), g.entry(0, 2) * 0.999937);
    }

    #[test]
    fn eve_rejects_out_of_range() {
        let (_, _, g) = fig2();
        assert!(apply_eve_noise(&g, &EveNoise { eps: -0.1, eta: 0.0 }).is_err());
        assert!(apply_eve_noise(&g, &EveNoise { eps: 0.0, eta: 1.5 }).is_err());
    }

    #[test]
    fn click_probabilities_no_dark_counts() {
        let src = SourceParams::new(1920.0, 30.0, 0.607).unwrap();
        let link = LinkParams {
            dark_rate_hz: 0.0,
            ..LinkParams::default()
        };
        let c = click_probabilities(&src, &link).unwrap();
        assert_eq!(c.r_nu_a, 1.0);
        assert_eq!(c.r_d_a, 0.0);
        assert_eq!(c.r_nu_b, 1.0);
        assert_eq!(c.r_d_b, 0.0);
    }

    #[test]
    fn click_probabilities_ideal() {
        let src = SourceParams::new(1920.0, 30.0, 1.0).unwrap();
        let link = LinkParams {
            eta_det_a: 1.0,
            eta_det_b: 1.0,
            dark_rate_hz: 0.0,
            length_km: 0.0,
            ..LinkParams::default()
        };
        let c = click_probabilities(&src, &link).unwrap();
        assert_eq!(c.p_a, 1.0);
        assert_eq!(c.d_a, 0.0);
    }

    #[test]
    fn click_probabilities_hundred_km() {
        // oracle: the scalar chain evaluated independently
        let src = SourceParams::new(1920.0, 30.0, 0.607).unwrap();
        let link = LinkParams {
            length_km: 100.0,
            ..LinkParams::default()
        };
        let c = click_probabilities(&src, &link).unwrap();

        let p_d: f64 = 1000.0 * 6.0 * 1920.0 * 1e-12;
        assert!((p_d - 1.152e-5).abs() < 1e-12);
        let trans = 10f64.powf(-0.2 * 100.0 / 10.0);
        assert!((trans - 1e-2).abs() < 1e-12);
        let one_minus_lb = 0.93 * trans;
        let expect_pb = 0.607 * one_minus_lb * (1.0 - p_d);
        assert!((c.p_b - expect_pb).abs() < 1e-15);
        assert!((c.p_b - 5.645e-3).abs() < 1e-5);
        // conditional fractions always complementary
        assert_eq!(c.r_nu_a + c.r_d_a, 1.0);
        assert_eq!(c.r_nu_b + c.r_d_b, 1.0);
    }

    #[test]
    fn detector_model_identity_with_perfect_detectors() {
        let (src, _, g) = fig2();
        let link = LinkParams {
            jitter_ps: 0.0,
            dark_rate_hz: 0.0,
            eta_det_a: 1.0,
            eta_det_b: 1.0,
            ..LinkParams::default()
        };
        let clicks = click_probabilities(&src, &link).unwrap();
        let gpp = apply_detector_model(&g, &clicks, &link).unwrap();
        assert_eq!(gpp.matrix(), g.matrix());
    }

    #[test]
    fn dark_count_variance_is_three_times_reference() {
        // (6 sqrt(Var))^2 / 12 = 3 Var
        let var: f64 = 1234.5;
        let window = 6.0 * var.sqrt();
        assert!((window * window / 12.0 - 3.0 * var).abs() < 1e-9);
    }

    #[test]
    fn jitter_adds_exactly_on_diagonal() {
        let (src, _, g) = fig2();
        let link = LinkParams {
            jitter_ps: 20.0,
            dark_rate_hz: 0.0,
            eta_det_a: 1.0,
            eta_det_b: 1.0,
            ..LinkParams::default()
        };
        let clicks = click_probabilities(&src, &link).unwrap();
        assert_eq!(clicks.r_nu_a, 1.0);
        let gpp = apply_detector_model(&g, &clicks, &link).unwrap();
        for i in 0..4 {
            assert_eq!(gpp.entry(i, i), g.entry(i, i) + 400.0);
        }
        // off-diagonals untouched when R_nu = 1
        assert_eq!(gpp.entry(0, 2), g.entry(0, 2));
    }

    #[test]
    fn detector_model_monotone_in_jitter() {
        let (src, _, g) = fig2();
        let mut prev: Option<CovMatrix4> = None;
        for sj in [0.0, 5.0, 20.0, 100.0] {
            let link = LinkParams {
                jitter_ps: sj,
                ..LinkParams::default()
            };
            let clicks = click_probabilities(&src, &link).unwrap();
            let gpp = apply_detector_model(&g, &clicks, &link).unwrap();
            if let Some(p) = prev {
                for i in 0..4 {
                    assert!(gpp.entry(i, i) >= p.entry(i, i));
                }
            }
            prev = Some(gpp);
        }
    }

    #[test]
    fn eps_xi_conversions() {
        // one-term case
        let eps = eps_from_eta_xi(0.0, 0.82, 64.0).unwrap();
        assert!((eps - 0.82 / (64.0 * 64.0 + 0.25)).abs() < 1e-18);

        // quoted scenario: eta = 6.3e-5, xi = 0.78, d = 64
        let eps = eps_from_eta_xi(6.3e-5, 0.78, 64.0).unwrap();
        let oracle = (0.78 - 2.0 * 6.3e-5 * (4096.0 - 0.25)) / (4096.0 + 0.25);
        assert!((eps - oracle).abs() < 1e-15);
        assert!(eps > 6.3e-5 && eps < 6.6e-5, "eps = {eps}");

        // sigma_delta at xi = 0.78
        let sd = sigma_delta_from_xi(0.78, 30.0);
        assert!((sd - 10.0).abs() < 0.1, "sigma_delta = {sd}");
        assert!((xi_from_sigma_delta(sd, 30.0) - 0.78).abs() < 1e-12);
    }

    #[test]
    fn eps_xi_round_trip() {
        for eta in [0.0, 1e-5, 3e-4] {
            for xi in [0.0, 0.1, 0.78, 2.0] {
                for d in [8.0, 64.0] {
                    let eps = eps_from_eta_xi(eta, xi, d).unwrap();
                    if eps < 0.0 {
                        continue;
                    }
                    let back = xi_from_eps_eta(&EveNoise { eps, eta }, d).unwrap();
                    assert!((back - xi).abs() <= 1e-12 * xi.max(1.0));
                }
            }
        }
    }

    #[test]
    fn difference_variance_matches_xi() {
        let (src, _, g) = fig2();
        let d = schmidt_dimension(&src);
        let xi = 0.78;
        for eta in [0.0, 3e-5, 6.3e-5] {
            let eps = eps_from_eta_xi(eta, xi, d).unwrap();
            let gp = apply_eve_noise(&g, &EveNoise { eps, eta }).unwrap();
            let expect = (1.0 + xi) * 900.0;
            assert!(
                (gp.var_time_diff() - expect).abs() < 1e-9 * expect,
                "eta = {eta}"
            );
        }
    }

    #[test]
    fn sum_variance_matches_theta() {
        let (src, _, g) = fig2();
        let d = schmidt_dimension(&src);
        let n = EveNoise {
            eps: 6.3e-5,
            eta: 6.3e-5,
        };
        let theta = theta_from_eps_eta(&n, d).unwrap();
        let gp = apply_eve_noise(&g, &n).unwrap();
        let expect = (1.0 - theta) * g.var_time_sum();
        assert!((gp.var_time_sum() - expect).abs() < 1e-9 * expect);
    }

    #[test]
    fn region_zero_xi_is_origin() {
        let (src, disp, g) = fig2();
        let region = physical_noise_region(0.0, 200, &g, &src, &disp).unwrap();
        assert_eq!(region, vec![EveNoise::NONE]);
    }

    #[test]
    fn region_bounds_and_physicality() {
        let (src, disp, g) = fig2();
        let d = schmidt_dimension(&src);
        let xi = 0.78;
        let region = physical_noise_region(xi, 50, &g, &src, &disp).unwrap();
        assert!(!region.is_empty());
        let eta_max = xi / (2.0 * (d * d - 0.25));
        // endpoints present
        assert_eq!(region.first().unwrap().eta, 0.0);
        assert!((region.last().unwrap().eta - eta_max).abs() < 1e-15);
        let k = disp.dispersion_product_ps2();
        for pair in &region {
            assert!(pair.eps >= 0.0);
            assert!(pair.eta <= eta_max + 1e-15);
            let gp = apply_eve_noise(&g, pair).unwrap();
            let inv = security::symplectic_invariants(&gp, k).unwrap();
            assert!(inv.d_minus >= 0.5 - 1e-9);
        }
    }
}
