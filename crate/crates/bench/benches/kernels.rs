//! Microbenchmarks for the hot paths: copula derivative bundles, one full
//! log-likelihood + gradient sweep, and a small penalized fit.

use criterion::{black_box, criterion_group, criterion_main, Criterion};

use brbvs_core::fit::trust_region_fit;
use brbvs_core::likelihood::{loglik_grad, prepare};
use brbvs_core::measures::ce_measure;
use brbvs_core::{
    CensoringStatus, CopulaFamily, ModelDesign, ModelSpec, PredictorSpec, SurvivalDataset,
    SurvivalLink,
};
use nalgebra::DMatrix;
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;

fn mixed_dataset(n: usize, seed: u64) -> SurvivalDataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let p = 2;
    let cov = DMatrix::from_fn(n, p, |_, _| rng.gen::<f64>() * 2.0 - 1.0);
    let draw = |rng: &mut ChaCha8Rng| 0.1 + 1.9 * rng.gen::<f64>();
    let mut s1 = Vec::new();
    let mut s2 = Vec::new();
    for i in 0..n {
        let t1 = draw(&mut rng);
        let t2 = draw(&mut rng);
        let (a, b) = match i % 4 {
            0 => (CensoringStatus::Uncensored(t1), CensoringStatus::Uncensored(t2)),
            1 => (CensoringStatus::Right(t1), CensoringStatus::Interval(t2, t2 + 0.5)),
            2 => (CensoringStatus::left(t1), CensoringStatus::Right(t2)),
            _ => (CensoringStatus::Interval(t1, t1 + 0.5), CensoringStatus::left(t2)),
        };
        s1.push(a);
        s2.push(b);
    }
    let names = (0..p).map(|j| format!("x{}", j + 1)).collect();
    SurvivalDataset::new(s1, s2, cov, names).unwrap()
}

fn spec(copula: CopulaFamily) -> ModelSpec {
    ModelSpec {
        copula,
        links: (SurvivalLink::PH, SurvivalLink::PO),
        eta1: PredictorSpec::with_baseline(vec![0, 1]),
        eta2: PredictorSpec::with_baseline(vec![0]),
        eta3: PredictorSpec::intercept_only(),
    }
}

fn copula_derivs(c: &mut Criterion) {
    let mut group = c.benchmark_group("copula_derivs");
    for (fam, theta) in [
        (CopulaFamily::Independence, 1.0),
        (CopulaFamily::Clayton, 2.0),
        (CopulaFamily::Plackett, 3.0),
    ] {
        group.bench_function(fam.code(), |b| {
            b.iter(|| {
                let mut acc = 0.0;
                for i in 1..100 {
                    let u = i as f64 / 100.0;
                    let d = fam.derivs(black_box(u), black_box(1.0 - u), theta).unwrap();
                    acc += d.density;
                }
                acc
            })
        });
    }
    group.finish();
}

fn loglik_sweep(c: &mut Criterion) {
    let ds = mixed_dataset(400, 3);
    let design = ModelDesign::build(&spec(CopulaFamily::Clayton), &ds).unwrap();
    let prep = prepare(&design, &ds);
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let delta: Vec<f64> = (0..design.n_coef()).map(|_| rng.gen::<f64>() * 1.2 - 1.8).collect();
    c.bench_function("loglik_grad_n400", |b| {
        b.iter(|| loglik_grad(&design, &prep, black_box(&delta)).unwrap())
    });
}

fn small_fit(c: &mut Criterion) {
    let ds = mixed_dataset(150, 17);
    let design = ModelDesign::build(&spec(CopulaFamily::Clayton), &ds).unwrap();
    let lambdas = vec![1.0; design.n_penalty_blocks()];
    let mut group = c.benchmark_group("fit");
    group.sample_size(10);
    group.bench_function("trust_region_n150", |b| {
        b.iter(|| trust_region_fit(&design, &ds, black_box(&lambdas), None).unwrap())
    });
    group.finish();
}

fn entropy_measure(c: &mut Criterion) {
    let mut rng = ChaCha8Rng::seed_from_u64(29);
    let n = 800;
    let a: Vec<f64> = (0..n).map(|_| rng.gen::<f64>()).collect();
    let b_col: Vec<f64> = a.iter().map(|v| v + 0.3 * rng.gen::<f64>()).collect();
    c.bench_function("ce_measure_n800", |b| {
        b.iter(|| ce_measure(black_box(&a), black_box(&b_col)).unwrap())
    });
}

criterion_group!(benches, copula_derivs, loglik_sweep, small_fit, entropy_measure);
criterion_main!(benches);
