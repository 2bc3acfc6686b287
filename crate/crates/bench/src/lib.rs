//! Shared fixtures for the pipeline benchmarks.

use doqkd_core::*;

pub fn fig2_source() -> SourceParams {
    SourceParams::new(1920.0, 30.0, 0.607).unwrap()
}

pub fn fig2_link(length_km: f64) -> LinkParams {
    LinkParams {
        alpha_db_per_km: 0.2,
        length_km,
        eta_det_a: 0.93,
        eta_det_b: 0.93,
        jitter_ps: 20.0,
        dark_rate_hz: 1000.0,
    }
}

pub fn dispersion() -> DispersionParams {
    DispersionParams::from_product(1e8).unwrap()
}
