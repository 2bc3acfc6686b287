use criterion::{black_box, criterion_group, criterion_main, Criterion};

use doqkd_bench::{dispersion, fig2_link, fig2_source};
use doqkd_core::*;

fn bench_covariance(c: &mut Criterion) {
    let src = fig2_source();
    let disp = dispersion();
    c.bench_function("noiseless_covariance", |b| {
        b.iter(|| build_noiseless_cov(black_box(&src), black_box(&disp)).unwrap())
    });
}

fn bench_holevo(c: &mut Criterion) {
    let src = fig2_source();
    let disp = dispersion();
    let gamma = build_noiseless_cov(&src, &disp).unwrap();
    let gamma_p = apply_eve_noise(&gamma, &EveNoise { eps: 6.3e-5, eta: 6.3e-5 }).unwrap();
    let k = disp.dispersion_product_ps2();
    c.bench_function("holevo_information", |b| {
        b.iter(|| holevo_information(black_box(&gamma_p), black_box(k)).unwrap())
    });
}

fn bench_worst_case(c: &mut Criterion) {
    let src = fig2_source();
    let disp = dispersion();
    let link = fig2_link(100.0);
    let gamma = build_noiseless_cov(&src, &disp).unwrap();
    let inputs = CapacityInputs {
        gamma: &gamma,
        src: &src,
        disp: &disp,
        link: &link,
        beta: 0.9,
        region_grid: 200,
    };
    let xi = xi_from_sigma_delta(10.0, src.sigma_cor_ps);
    c.bench_function("worst_case_capacity_200pt", |b| {
        b.iter(|| worst_case_capacity(black_box(xi), black_box(&inputs)).unwrap())
    });
}

fn bench_simulation(c: &mut Criterion) {
    let cfg = SimConfig {
        src: fig2_source(),
        disp: dispersion(),
        link: fig2_link(0.0),
        eve: EveNoise::NONE,
        n_frames: 10_000,
        seed: 7,
        basis_bias: 0.5,
    };
    c.bench_function("simulate_10k_frames", |b| {
        b.iter(|| {
            let sim = Simulation::new(black_box(cfg)).unwrap();
            sim.iter().filter(|f| f.click_a.clicked()).count()
        })
    });
}

fn bench_operating_point(c: &mut Criterion) {
    let eta_s = switch_transmissivity(1.0);
    c.bench_function("herald_operating_point_d64", |b| {
        b.iter(|| operating_point(black_box(64), 0.93, eta_s, 0.01).unwrap())
    });
}

criterion_group!(
    benches,
    bench_covariance,
    bench_holevo,
    bench_worst_case,
    bench_simulation,
    bench_operating_point
);
criterion_main!(benches);
