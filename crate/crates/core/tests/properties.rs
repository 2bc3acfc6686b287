//! Cross-module invariants: randomized algebraic properties and the
//! statistical behavior of the frame simulator.

use doqkd_core::*;
use proptest::prelude::*;

fn source_strategy() -> impl Strategy<Value = SourceParams> {
    // sigma_cor in ps, Schmidt number >= 1 so the ordering invariant holds
    (1.0f64..200.0, 1.0f64..200.0, 0.0f64..=1.0).prop_map(|(sigma_cor, d, p)| {
        SourceParams::new(d * sigma_cor, sigma_cor, p).unwrap()
    })
}

proptest! {
    #[test]
    fn covariance_symmetry_and_block_identities(
        src in source_strategy(),
        k_exp in 6.0f64..12.0,
    ) {
        let disp = DispersionParams::from_product(10f64.powf(k_exp)).unwrap();
        let g = build_noiseless_cov(&src, &disp).unwrap();
        let m = g.matrix();
        let scale = m[(0, 0)].abs().max(m[(1, 1)].abs());
        for i in 0..4 {
            for j in 0..4 {
                prop_assert!((m[(i, j)] - m[(j, i)]).abs() <= 1e-12 * scale);
            }
        }
        let s_cor2 = src.sigma_cor_ps * src.sigma_cor_ps;
        let s_coh2 = src.sigma_coh_ps * src.sigma_coh_ps;
        prop_assert!((g.var_time_diff() - s_cor2).abs() <= 1e-9 * s_cor2);
        prop_assert!((g.var_time_sum() - 4.0 * s_coh2).abs() <= 1e-9 * 4.0 * s_coh2);
    }

    #[test]
    fn eps_xi_round_trip_is_identity(
        eta in 0.0f64..1e-3,
        xi in 0.0f64..3.0,
        d in 2.0f64..128.0,
    ) {
        let eps = eps_from_eta_xi(eta, xi, d).unwrap();
        let noise = EveNoise { eps, eta };
        let back = xi_from_eps_eta(&noise, d).unwrap();
        prop_assert!((back - xi).abs() <= 1e-12 * xi.max(1.0));
    }

    #[test]
    fn click_fractions_are_complementary(
        p_nu in 0.001f64..=1.0,
        eta_det in 0.01f64..=1.0,
        length in 0.0f64..400.0,
        dark_rate in 0.0f64..1e6,
    ) {
        let src = SourceParams::new(1920.0, 30.0, p_nu).unwrap();
        let link = LinkParams {
            alpha_db_per_km: 0.2,
            length_km: length,
            eta_det_a: eta_det,
            eta_det_b: eta_det,
            jitter_ps: 20.0,
            dark_rate_hz: dark_rate,
        };
        let c = click_probabilities(&src, &link).unwrap();
        prop_assert_eq!(c.r_nu_a + c.r_d_a, 1.0);
        prop_assert_eq!(c.r_nu_b + c.r_d_b, 1.0);
        prop_assert!(c.p_a >= 0.0 && c.p_a <= 1.0);
        prop_assert!(c.d_b >= 0.0 && c.d_b <= 1.0);
    }

    #[test]
    fn covariance_json_round_trip(
        src in source_strategy(),
    ) {
        let disp = DispersionParams::from_product(1e8).unwrap();
        let g = build_noiseless_cov(&src, &disp).unwrap();
        let json = serde_json::to_string(&g).unwrap();
        let back: CovMatrix4 = serde_json::from_str(&json).unwrap();
        for i in 0..4 {
            for j in 0..4 {
                prop_assert_eq!(back.entry(i, j).to_bits(), g.entry(i, j).to_bits());
            }
        }
    }

    #[test]
    fn dispersion_never_sharpens_correlation(
        sigma_cor in 0.5f64..500.0,
        tot in -1e5f64..1e5,
    ) {
        let s = dispersed_correlation_time(sigma_cor, tot, 0.0).unwrap();
        prop_assert!(s >= sigma_cor * (1.0 - 1e-12));
    }
}

/// Empirical same-basis covariances approach the model blocks at the
/// 1/sqrt(n) Monte Carlo rate: each tenfold sample increase shrinks the
/// aggregate error by a factor between 2 and 5.
#[test]
fn empirical_covariance_converges_at_sqrt_n() {
    let src = SourceParams::new(1920.0, 30.0, 1.0).unwrap();
    let disp = DispersionParams::from_product(1e8).unwrap();
    let link = LinkParams {
        eta_det_a: 1.0,
        eta_det_b: 1.0,
        jitter_ps: 0.0,
        dark_rate_hz: 0.0,
        length_km: 0.0,
        alpha_db_per_km: 0.2,
    };
    let eve = EveNoise { eps: 6.3e-5, eta: 6.3e-5 };
    let gamma = build_noiseless_cov(&src, &disp).unwrap();
    let gamma_p = apply_eve_noise(&gamma, &eve).unwrap();

    let error_at = |n_frames: u64| -> f64 {
        let cfg = SimConfig {
            src,
            disp,
            link,
            eve,
            n_frames,
            seed: 20_240_601,
            basis_bias: 0.5,
        };
        let sample = sift(Simulation::new(cfg).unwrap());
        let est = estimate_noise(&sample, &src, true).unwrap();
        // aggregate relative error over the six measurable block entries
        let mut sq = 0.0;
        for (i, j) in [(0, 0), (0, 2), (2, 2), (1, 1), (1, 3), (3, 3)] {
            let model = gamma_p.entry(i, j);
            let rel = (est.empirical.entry(i, j) - model) / model;
            sq += rel * rel;
        }
        (sq / 6.0).sqrt()
    };

    let e4 = error_at(10_000);
    let e5 = error_at(100_000);
    let e6 = error_at(1_000_000);
    let r45 = e4 / e5;
    let r56 = e5 / e6;
    println!("convergence: e(1e4) = {e4:.3e}, e(1e5) = {e5:.3e}, e(1e6) = {e6:.3e}");
    assert!(
        (2.0..=5.0).contains(&r45),
        "decade ratio 1e4->1e5 out of range: {r45}"
    );
    assert!(
        (2.0..=5.0).contains(&r56),
        "decade ratio 1e5->1e6 out of range: {r56}"
    );
}

/// Dark-count arrival times are uniform over the measurement window: the
/// Kolmogorov-Smirnov statistic against the uniform law stays below the 1%
/// critical value with 1e5 clicks.
#[test]
fn dark_click_times_are_uniform() {
    let src = SourceParams::new(1920.0, 30.0, 0.0).unwrap();
    let disp = DispersionParams::from_product(1e8).unwrap();
    // p_d ~ 0.5 per frame so darks accumulate quickly
    let link = LinkParams {
        dark_rate_hz: 4.34e7,
        ..LinkParams::default()
    };
    let cfg = SimConfig {
        src,
        disp,
        link,
        eve: EveNoise::NONE,
        n_frames: 220_000,
        seed: 99,
        basis_bias: 1.0, // time basis throughout: one fixed window
    };
    let gamma = build_noiseless_cov(&src, &disp).unwrap();
    let half = 3.0 * gamma.entry(0, 0).sqrt();

    let mut times: Vec<f64> = Simulation::new(cfg)
        .unwrap()
        .filter(|f| f.click_a == ClickKind::Dark)
        .map(|f| f.t_a_ps.unwrap())
        .take(100_000)
        .collect();
    assert!(times.len() == 100_000, "collected {}", times.len());

    times.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = times.len() as f64;
    let mut ks: f64 = 0.0;
    for (i, t) in times.iter().enumerate() {
        let cdf = (t + half) / (2.0 * half);
        let lo = i as f64 / n;
        let hi = (i + 1) as f64 / n;
        ks = ks.max((cdf - lo).abs()).max((hi - cdf).abs());
    }
    let critical = 1.628 / n.sqrt();
    println!("KS statistic = {ks:.5e}, 1% critical = {critical:.5e}");
    assert!(ks < critical);
}
