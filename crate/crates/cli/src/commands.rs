//! Command implementations: single-point capacity, the two sweep families,
//! heralding curves, and the frame-level simulation with closure report.

use std::path::Path;

use anyhow::{bail, Result};
use serde_json::json;

use doqkd_core::{
    bose_einstein_pmf, build_noiseless_cov, capacity_at, click_probabilities, estimate_noise,
    heralded_output_dist, key_rate, operating_point, sift, worst_case_capacity, xi_from_eps_eta,
    xi_from_sigma_delta, CapacityInputs, CapacityReport, RateConvention, RateReport, Simulation,
};

use crate::config::RunConfig;
use crate::output::{emit, field_f64, field_opt_f64, Csv};

/// Exit status carrying the security-abort distinction.
pub const EXIT_OK: i32 = 0;
pub const EXIT_ABORT: i32 = 2;

/// Single-point capacity and rate; prints a JSON report. Exit code 2
/// signals Delta I <= 0 (no distillable key); everything else is 0.
pub fn capacity(cfg: &RunConfig, out: Option<&Path>) -> Result<i32> {
    let src = cfg.source_params()?;
    let disp = cfg.dispersion_params()?;
    let link = cfg.link_params();
    let gamma = build_noiseless_cov(&src, &disp)?;
    let xi = cfg.xi();
    let inputs = CapacityInputs {
        gamma: &gamma,
        src: &src,
        disp: &disp,
        link: &link,
        beta: cfg.security.beta,
        region_grid: cfg.noise.region_grid,
    };
    let report = worst_case_capacity(xi, &inputs)?;
    let clicks = click_probabilities(&src, &link)?;
    let rate_paper = key_rate(
        &report,
        &src,
        &link,
        &clicks,
        RateConvention::Paper,
        cfg.security.sifting,
    )?;
    let rate_strict = key_rate(
        &report,
        &src,
        &link,
        &clicks,
        RateConvention::Strict,
        cfg.security.sifting,
    )?;

    let doc = json!({
        "sigma_delta_ps": cfg.sigma_delta_ps(),
        "xi": xi,
        "capacity": report,
        "rate_paper": rate_paper,
        "rate_strict": rate_strict,
        "rate_selected": cfg.convention()?.as_str(),
        "config": cfg,
    });
    emit(out, &format!("{}\n", serde_json::to_string_pretty(&doc)?))?;
    Ok(if report.abort { EXIT_ABORT } else { EXIT_OK })
}

const SWEEP_COLUMNS: [&str; 11] = [
    "axis_value",
    "d",
    "xi",
    "eps",
    "eta",
    "mutual_info_bits",
    "holevo_bits",
    "delta_i_bpc",
    "abort",
    "rate_bps",
    "convention",
];

fn sweep_header(axis: &str) -> Vec<&str> {
    let mut cols = SWEEP_COLUMNS.to_vec();
    cols[0] = axis;
    cols
}

fn sweep_row(
    csv: &mut Csv,
    axis_value: f64,
    d: u32,
    xi: f64,
    report: &CapacityReport,
    rate: &RateReport,
) {
    csv.row(&[
        field_f64(axis_value),
        d.to_string(),
        field_f64(xi),
        field_f64(report.worst_case_noise.eps),
        field_f64(report.worst_case_noise.eta),
        field_f64(report.mutual_info_bits),
        field_f64(report.holevo_bits),
        field_f64(report.delta_i_bpc),
        (report.abort as u8).to_string(),
        field_f64(rate.rate_bps),
        rate.convention.as_str().to_owned(),
    ]);
}

fn axis_points(cfg: &RunConfig) -> Result<Vec<f64>> {
    let s = &cfg.sweep;
    if s.points < 2 {
        bail!("sweep.points: must be >= 2");
    }
    if s.stop <= s.start {
        bail!("sweep.stop: must exceed sweep.start");
    }
    Ok((0..s.points)
        .map(|i| s.start + (s.stop - s.start) * i as f64 / (s.points - 1) as f64)
        .collect())
}

/// Resolve the sweep axis for a command; an untouched default section is
/// re-aimed at the command's natural axis and range.
fn resolve_axis(cfg: &RunConfig, wanted: &str) -> Result<RunConfig> {
    let mut cfg = cfg.clone();
    if cfg.sweep.axis != wanted {
        if cfg.sweep == crate::config::SweepSection::default() {
            cfg.sweep.axis = wanted.to_owned();
            if wanted == "sigma_delta_ps" {
                cfg.sweep.start = 0.0;
                cfg.sweep.stop = 30.0;
                cfg.sweep.points = 61;
            }
        } else {
            bail!(
                "sweep.axis: this command sweeps `{wanted}` but the config says `{}`",
                cfg.sweep.axis
            );
        }
    }
    Ok(cfg)
}

/// Secret-key capacity and rate versus channel length, one curve per
/// dimension in the config list.
pub fn sweep_length(cfg: &RunConfig, out: Option<&Path>) -> Result<i32> {
    let cfg = resolve_axis(cfg, "length_km")?;
    let lengths = axis_points(&cfg)?;
    let convention = cfg.convention()?;
    let disp = cfg.dispersion_params()?;
    let sigma_delta = cfg.sigma_delta_ps();

    let mut csv = Csv::new(&sweep_header("length_km"));
    for idx in 0..cfg.sweep.d_list.len() {
        let d = cfg.sweep.d_list[idx];
        let src = cfg.source_for_dimension(idx)?;
        let gamma = build_noiseless_cov(&src, &disp)?;
        let xi = xi_from_sigma_delta(sigma_delta, src.sigma_cor_ps);
        for &length in &lengths {
            let link = doqkd_core::LinkParams {
                length_km: length,
                ..cfg.link_params()
            };
            let inputs = CapacityInputs {
                gamma: &gamma,
                src: &src,
                disp: &disp,
                link: &link,
                beta: cfg.security.beta,
                region_grid: cfg.noise.region_grid,
            };
            let report = worst_case_capacity(xi, &inputs)?;
            let clicks = click_probabilities(&src, &link)?;
            let rate = key_rate(&report, &src, &link, &clicks, convention, cfg.security.sifting)?;
            sweep_row(&mut csv, length, d, xi, &report, &rate);
        }
    }
    emit(out, &csv.finish())?;
    Ok(EXIT_OK)
}

/// Worst-case capacity versus the measured noise offset sigma_delta.
pub fn sweep_noise(cfg: &RunConfig, out: Option<&Path>) -> Result<i32> {
    let cfg = resolve_axis(cfg, "sigma_delta_ps")?;
    let offsets = axis_points(&cfg)?;
    let convention = cfg.convention()?;
    let disp = cfg.dispersion_params()?;
    let link = cfg.link_params();

    let mut csv = Csv::new(&sweep_header("sigma_delta_ps"));
    for idx in 0..cfg.sweep.d_list.len() {
        let d = cfg.sweep.d_list[idx];
        let src = cfg.source_for_dimension(idx)?;
        let gamma = build_noiseless_cov(&src, &disp)?;
        let clicks = click_probabilities(&src, &link)?;
        for &sd in &offsets {
            let xi = xi_from_sigma_delta(sd, src.sigma_cor_ps);
            let inputs = CapacityInputs {
                gamma: &gamma,
                src: &src,
                disp: &disp,
                link: &link,
                beta: cfg.security.beta,
                region_grid: cfg.noise.region_grid,
            };
            let report = worst_case_capacity(xi, &inputs)?;
            let rate = key_rate(&report, &src, &link, &clicks, convention, cfg.security.sifting)?;
            sweep_row(&mut csv, sd, d, xi, &report, &rate);
        }
    }
    emit(out, &csv.finish())?;
    Ok(EXIT_OK)
}

/// Heralded-source curves: single-photon probability and multiphoton
/// fraction versus the per-frame pair rate, for the heralded circuit and
/// the bare multimode statistics, plus the bound-saturating operating
/// point per dimension.
pub fn herald(cfg: &RunConfig, out: Option<&Path>) -> Result<i32> {
    if cfg.herald.mu_f_points < 2 {
        bail!("herald.mu_f_points: must be >= 2");
    }
    let mut csv = Csv::new(&[
        "d",
        "mu_f",
        "p_one_heralded",
        "p_multi_heralded",
        "p_one_gbe",
        "p_multi_gbe",
        "at_operating_point",
    ]);
    let eta_s = doqkd_core::switch_transmissivity(cfg.herald.switch_loss_db);

    for &d in &cfg.sweep.d_list {
        for i in 0..cfg.herald.mu_f_points {
            let mu_f =
                cfg.herald.mu_f_max * i as f64 / (cfg.herald.mu_f_points - 1) as f64;
            let hp = cfg.herald_params(d, mu_f)?;
            let dist = heralded_output_dist(&hp, 2)?;
            let (p1_gbe, multi_gbe) = gbe_stats(mu_f, d)?;
            csv.row(&[
                d.to_string(),
                field_f64(mu_f),
                field_f64(dist.prob(1)),
                field_f64(dist.multiphoton_given_any()),
                field_f64(p1_gbe),
                field_f64(multi_gbe),
                "0".to_owned(),
            ]);
        }
        let (mu_star, p_one) = operating_point(d, cfg.herald.eta_d, eta_s, cfg.herald.bound)?;
        let hp = cfg.herald_params(d, mu_star)?;
        let dist = heralded_output_dist(&hp, 2)?;
        let (p1_gbe, multi_gbe) = gbe_stats(mu_star, d)?;
        csv.row(&[
            d.to_string(),
            field_f64(mu_star),
            field_f64(p_one),
            field_f64(dist.multiphoton_given_any()),
            field_f64(p1_gbe),
            field_f64(multi_gbe),
            "1".to_owned(),
        ]);
    }
    emit(out, &csv.finish())?;
    Ok(EXIT_OK)
}

fn gbe_stats(mu_f: f64, d: u32) -> Result<(f64, f64)> {
    let p0 = bose_einstein_pmf(mu_f, 0, d)?;
    let p1 = bose_einstein_pmf(mu_f, 1, d)?;
    let any = 1.0 - p0;
    let multi = if any > 0.0 {
        ((any - p1) / any).max(0.0)
    } else {
        0.0
    };
    Ok((p1, multi))
}

/// Frame-level simulation: outcome CSV plus a closure report comparing the
/// estimated noise against the injected model.
pub fn simulate(cfg: &RunConfig, out: &Path, summary: Option<&Path>) -> Result<i32> {
    let sim_cfg = cfg.sim_config()?;
    let sim = Simulation::new(sim_cfg)?;

    let mut csv = Csv::new(&[
        "frame_index",
        "basis_a",
        "basis_b",
        "click_a",
        "click_b",
        "t_a_ps",
        "t_b_ps",
    ]);
    let mut outcomes = Vec::with_capacity(sim_cfg.n_frames as usize);
    for f in sim.iter() {
        csv.row(&[
            f.frame_index.to_string(),
            f.basis_a.as_str().to_owned(),
            f.basis_b.as_str().to_owned(),
            f.click_a.as_str().to_owned(),
            f.click_b.as_str().to_owned(),
            field_opt_f64(f.t_a_ps),
            field_opt_f64(f.t_b_ps),
        ]);
        outcomes.push(f);
    }
    emit(Some(out), &csv.finish())?;

    let sample = sift(outcomes);
    let src = sim_cfg.src;
    let est = estimate_noise(&sample, &src, cfg.sim.use_truth_labels)?;

    let disp = cfg.dispersion_params()?;
    let link = cfg.link_params();
    let gamma = build_noiseless_cov(&src, &disp)?;
    let inputs = CapacityInputs {
        gamma: &gamma,
        src: &src,
        disp: &disp,
        link: &link,
        beta: cfg.security.beta,
        region_grid: cfg.noise.region_grid,
    };
    let capacity_estimated = worst_case_capacity(est.measured.xi.max(0.0), &inputs)?;
    let capacity_injected = capacity_at(&sim_cfg.eve, &inputs)?;
    let xi_injected = xi_from_eps_eta(&sim_cfg.eve, doqkd_core::schmidt_dimension(&src))?;

    let doc = json!({
        "xi_hat": est.measured.xi,
        "std_error_xi": est.std_error_xi,
        "theta_hat": est.measured.theta,
        "sigma_delta_hat_ps": est.measured.sigma_delta_ps,
        "n_frames": sample.n_frames,
        "n_time_pairs": est.n_time_pairs,
        "n_dispersed_pairs": est.n_dispersed_pairs,
        "discarded_basis_mismatch": sample.discarded_basis_mismatch,
        "discarded_click": sample.discarded_click,
        "empirical_gamma": est.empirical,
        "injected": { "eps": sim_cfg.eve.eps, "eta": sim_cfg.eve.eta, "xi": xi_injected },
        "capacity_at_xi_hat": capacity_estimated,
        "capacity_at_injected": capacity_injected,
        "config": cfg,
    });
    emit(summary, &format!("{}\n", serde_json::to_string_pretty(&doc)?))?;
    Ok(EXIT_OK)
}

