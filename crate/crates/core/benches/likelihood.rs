//! Sequential vs rayon on the hot paths. Build with `--no-default-features`
//! to time the fully sequential crate; with the default build the
//! `sequential` rows run the same work through a one-thread pool.

use cagelogit::design::{Cell, Design};
use cagelogit::estimation::{fit_mixture_em, FitConfig, ModelSpec};
use cagelogit::likelihood::{loglik_matrix, panel_loglik, subject_loglik, Dataset, MixtureSpec};
use cagelogit::models::{BeliefParams, Params, StructuralLogitParams};
use cagelogit::par;
use cagelogit::simulate::{simulate_choice_panel, Generator, SimSpec};
use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use std::hint::black_box;

fn mixed(beta: (f64, f64, f64), sigma: f64, eta: f64) -> Params {
    Params::StructuralLogit(StructuralLogitParams::new(
        BeliefParams::new(beta.0, beta.1, beta.2),
        sigma,
        eta,
    ))
}

fn data(subjects: usize) -> Dataset {
    let design = Design::new(2.0 / 3.0, 0.5, 6).unwrap();
    let schedule = (0..40)
        .map(|t| Cell {
            prior: 0.1 * ((t % 9) + 1) as f64,
            design,
        })
        .collect();
    let generator = Generator::Mixture(
        MixtureSpec::new(
            vec![mixed((0.0, 1.0, 1.0), 0.05, 0.0), mixed((0.0, 2.0, 0.5), 0.2, 0.0)],
            vec![0.5, 0.5],
        )
        .unwrap(),
    );
    simulate_choice_panel(&SimSpec {
        schedule,
        generator,
        subjects,
        seed: 1,
    })
    .unwrap()
    .data
}

fn threads() -> Vec<(&'static str, usize)> {
    let all = std::thread::available_parallelism().map_or(1, |n| n.get());
    vec![("sequential", 1), ("parallel", all)]
}

fn bench_panel(c: &mut Criterion) {
    let data = data(400);
    let params = mixed((0.1, 1.2, 0.9), 0.3, 0.8);
    let mut group = c.benchmark_group("mixed_logit_panel_loglik");
    group.bench_function("plain_iterator", |b| {
        b.iter(|| {
            data.subjects
                .iter()
                .map(|s| subject_loglik(&params, s).unwrap().value)
                .sum::<f64>()
        })
    });
    for (name, n) in threads() {
        group.bench_with_input(BenchmarkId::new(name, n), &n, |b, &n| {
            b.iter(|| par::with_threads(n, || black_box(panel_loglik(&params, &data).unwrap())))
        });
    }
    group.finish();
}

fn bench_matrix(c: &mut Criterion) {
    let data = data(400);
    let components = vec![
        mixed((0.0, 1.0, 1.0), 0.1, 0.5),
        mixed((0.0, 2.0, 0.5), 0.2, 0.5),
        mixed((0.3, 0.7, 1.2), 0.4, 0.0),
    ];
    let mut group = c.benchmark_group("mixture_loglik_matrix");
    for (name, n) in threads() {
        group.bench_with_input(BenchmarkId::new(name, n), &n, |b, &n| {
            b.iter(|| par::with_threads(n, || black_box(loglik_matrix(&components, &data).unwrap())))
        });
    }
    group.finish();
}

fn bench_em(c: &mut Criterion) {
    let data = data(200);
    let config = FitConfig {
        restarts: 2,
        ..FitConfig::default()
    };
    let mut group = c.benchmark_group("em_two_types");
    group.sample_size(10);
    for (name, n) in threads() {
        group.bench_with_input(BenchmarkId::new(name, n), &n, |b, &n| {
            b.iter(|| {
                par::with_threads(n, || {
                    black_box(fit_mixture_em(&ModelSpec::STRUCTURAL_LOGIT, 2, &data, &config).unwrap())
                })
            })
        });
    }
    group.finish();
}

criterion_group!(benches, bench_panel, bench_matrix, bench_em);
criterion_main!(benches);
