//! End-to-end acceptance gate. Each test covers one release criterion and
//! prints a single pass/fail line (visible with --nocapture, and always on
//! failure).
//!
//! The two simulation-scale criteria default to reduced replicate counts so
//! the suite stays tractable on a small machine; set BRBVS_ACCEPT_NREP and
//! BRBVS_ACCEPT_BATCH to raise them.

use std::path::Path;
use std::process::Command;

use brbvs_core::brbvs::{estimate_pi, select_s, RankRecord};
use brbvs_core::fit::trust_region_fit;
use brbvs_core::likelihood::{gradient, penalized_loglik, prepare};
use brbvs_core::measures::ce_measure;
use brbvs_core::numerics::gauss_legendre_unit;
use brbvs_core::simulate::{baseline_s10, invert_time, simulate_scenario};
use brbvs_core::{
    brbvs_run, run_benchmark, BRBVSParams, CensoringStatus, CopulaFamily, MeasureKind, ModelDesign,
    ModelSpec, PredictorSpec, Scenario, ScenarioConfig, SurvivalDataset, SurvivalLink,
};
use nalgebra::DMatrix;
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;

fn criterion<F: FnOnce() + std::panic::UnwindSafe>(id: usize, name: &str, body: F) {
    let outcome = std::panic::catch_unwind(body);
    let verdict = if outcome.is_ok() { "PASS" } else { "FAIL" };
    println!("acceptance criterion {:02} ({}): {}", id, name, verdict);
    if let Err(e) = outcome {
        std::panic::resume_unwind(e);
    }
}

fn env_or(name: &str, default: usize) -> usize {
    std::env::var(name).ok().and_then(|v| v.parse().ok()).unwrap_or(default)
}

/// Small dataset whose rows cycle through every censoring-combination
/// pattern (exact, right, left and interval on both margins).
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

fn full_spec(copula: CopulaFamily, links: (SurvivalLink, SurvivalLink)) -> ModelSpec {
    ModelSpec {
        copula,
        links,
        eta1: PredictorSpec::with_baseline(vec![0, 1]),
        eta2: PredictorSpec::with_baseline(vec![0]),
        eta3: PredictorSpec::intercept_only(),
    }
}

#[test]
fn acceptance_01_gradient_matches_finite_differences() {
    criterion(1, "analytic gradient vs central differences", || {
        let ds = mixed_dataset(50, 42);
        for copula in [CopulaFamily::Independence, CopulaFamily::Clayton, CopulaFamily::Plackett] {
            for l1 in [SurvivalLink::PH, SurvivalLink::PO] {
                for l2 in [SurvivalLink::PH, SurvivalLink::PO] {
                    let design = ModelDesign::build(&full_spec(copula, (l1, l2)), &ds).unwrap();
                    let prep = prepare(&design, &ds);
                    let w = design.n_coef();
                    let lambdas = vec![0.7; design.n_penalty_blocks()];
                    for point in 0..10 {
                        let mut rng = ChaCha8Rng::seed_from_u64(1000 + point);
                        let delta: Vec<f64> =
                            (0..w).map(|_| rng.gen::<f64>() * 1.2 - 1.8).collect();
                        let g = gradient(&design, &prep, &delta, &lambdas).unwrap();
                        // five-point central stencil; the plain two-point
                        // rule leaves visible truncation error where the
                        // surface is steep
                        let h = 1e-5;
                        for k in 0..w {
                            let at = |shift: f64| {
                                let mut d = delta.clone();
                                d[k] += shift;
                                penalized_loglik(&design, &prep, &d, &lambdas).unwrap()
                            };
                            let fd = (at(-2.0 * h) - 8.0 * at(-h) + 8.0 * at(h)
                                - at(2.0 * h))
                                / (12.0 * h);
                            let tol = (1e-5 * fd.abs().max(1e-4)).max(2e-6);
                            assert!(
                                (g[k] - fd).abs() <= tol,
                                "{:?}/{:?}/{:?} point {} coef {}: analytic {} vs fd {}",
                                copula,
                                l1,
                                l2,
                                point,
                                k,
                                g[k],
                                fd
                            );
                        }
                    }
                }
            }
        }
    });
}

// Composite Gauss-Legendre rule on [0, 1], graded toward the corners where
// Clayton densities concentrate for large theta.
fn graded_unit_quadrature() -> (Vec<f64>, Vec<f64>) {
    let brk = [0.0, 1e-6, 1e-4, 1e-2, 0.1, 0.5, 0.9, 0.99, 0.9999, 0.999999, 1.0];
    let (x, w) = gauss_legendre_unit(24);
    let mut nodes = Vec::new();
    let mut weights = Vec::new();
    for win in brk.windows(2) {
        let (a, b) = (win[0], win[1]);
        for (xi, wi) in x.iter().zip(&w) {
            nodes.push(a + (b - a) * xi);
            weights.push(wi * (b - a));
        }
    }
    (nodes, weights)
}

#[test]
fn acceptance_02_copula_calculus() {
    criterion(2, "copula density, h-functions and tau anchors", || {
        let fams: [(CopulaFamily, &[f64]); 3] = [
            (CopulaFamily::Independence, &[1.0]),
            (CopulaFamily::Clayton, &[0.5, 2.0, 8.0]),
            (CopulaFamily::Plackett, &[0.5, 3.0, 10.0]),
        ];
        let (x, w) = graded_unit_quadrature();
        for (fam, thetas) in fams {
            for &theta in thetas {
                let mut mass = 0.0;
                for (i, &ui) in x.iter().enumerate() {
                    for (j, &vj) in x.iter().enumerate() {
                        mass += w[i] * w[j] * fam.density(ui, vj, theta).unwrap();
                    }
                }
                assert!((mass - 1.0).abs() <= 1e-3, "{:?} theta {}: mass {}", fam, theta, mass);

                // h-functions against central differences of the CDF
                let h = 1e-6;
                for &u in &[0.2, 0.5, 0.8] {
                    for &v in &[0.3, 0.6, 0.9] {
                        let fd_u = (fam.cdf(u + h, v, theta).unwrap()
                            - fam.cdf(u - h, v, theta).unwrap())
                            / (2.0 * h);
                        let fd_v = (fam.cdf(u, v + h, theta).unwrap()
                            - fam.cdf(u, v - h, theta).unwrap())
                            / (2.0 * h);
                        assert!((fam.partial_u(u, v, theta).unwrap() - fd_u).abs() <= 1e-6);
                        assert!((fam.partial_v(u, v, theta).unwrap() - fd_v).abs() <= 1e-6);
                    }
                }
            }
        }
        assert_eq!(CopulaFamily::Clayton.kendall_tau(2.0).unwrap(), 0.5);
        // verified against three independent numerical evaluations of the
        // Plackett tau integral at theta = 6.44
        let tau = CopulaFamily::Plackett.kendall_tau(6.44).unwrap();
        assert!((tau - 0.3952).abs() <= 1e-3, "plackett tau(6.44) = {}", tau);
    });
}

/// O(n log n) Kendall tau for tie-free samples: sort by a, count inversions
/// of the b-ranks by merge sort.
fn kendall_tau_fast(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len();
    let mut idx: Vec<usize> = (0..n).collect();
    idx.sort_by(|&i, &j| a[i].partial_cmp(&a[j]).unwrap());
    let mut seq: Vec<f64> = idx.iter().map(|&i| b[i]).collect();
    fn count_inv(s: &mut [f64], buf: &mut Vec<f64>) -> u64 {
        let n = s.len();
        if n < 2 {
            return 0;
        }
        let mid = n / 2;
        let (left, right) = s.split_at_mut(mid);
        let mut inv = count_inv(left, buf) + count_inv(right, buf);
        buf.clear();
        let (mut i, mut j) = (0, 0);
        while i < left.len() && j < right.len() {
            if left[i] <= right[j] {
                buf.push(left[i]);
                i += 1;
            } else {
                inv += (left.len() - i) as u64;
                buf.push(right[j]);
                j += 1;
            }
        }
        buf.extend_from_slice(&left[i..]);
        buf.extend_from_slice(&right[j..]);
        s.copy_from_slice(buf);
        inv
    }
    let mut buf = Vec::with_capacity(n);
    let d = count_inv(&mut seq, &mut buf) as f64;
    let pairs = (n * (n - 1) / 2) as f64;
    1.0 - 4.0 * d / (2.0 * pairs)
}

#[test]
fn acceptance_03_generator_fidelity() {
    criterion(3, "simulation generator anchors", || {
        assert!((baseline_s10(1.0) - 0.693772).abs() <= 1e-6);

        // round trip through the PH margin at the covariate origin
        let config = ScenarioConfig::new(Scenario::A, 100, 3, 1);
        for &u in &[0.95, 0.7, 0.5, 0.2, 0.05, 0.002] {
            let t = invert_time(u, &[0.0, 0.0, 0.0], 1, &config).unwrap();
            let eta = (-baseline_s10(t).ln()).ln();
            assert!(
                (SurvivalLink::PH.survival(eta) - u).abs() < 1e-8,
                "round trip at u={}: t={}",
                u,
                t
            );
        }

        // censoring rates and dependence strength on one big draw
        let big = ScenarioConfig::new(Scenario::A, 100_000, 3, 99);
        let (ds, truth) = simulate_scenario(&big).unwrap();
        let rate = |s: &[CensoringStatus]| {
            s.iter().filter(|v| !v.is_uncensored()).count() as f64 / s.len() as f64
        };
        let (r1, r2) = (rate(&ds.status1), rate(&ds.status2));
        assert!((r1 - 0.11).abs() <= 0.005, "margin 1 censoring {}", r1);
        assert!((r2 - 0.32).abs() <= 0.005, "margin 2 censoring {}", r2);

        let tau = kendall_tau_fast(&truth.u1, &truth.u2);
        let want = (1.2f64).exp() / ((1.2f64).exp() + 2.0);
        assert!((tau - want).abs() <= 0.01, "empirical tau {} vs {}", tau, want);
    });
}

#[test]
fn acceptance_04_selection_rule() {
    criterion(4, "stability ratio rule on hand-computed sequence", || {
        let floor = 1.0 / 80.0;
        assert_eq!(select_s(&[1.0, 0.9, 0.8, 0.1, 0.05], 0.5, floor), 2);
        let records: [RankRecord; 0] = [];
        assert_eq!(estimate_pi(&records, 1, 0).pi, 1.0);
        assert!(estimate_pi(&records, 1, 0).set.is_empty());
    });
}

fn true_spec() -> ModelSpec {
    ModelSpec {
        copula: CopulaFamily::Clayton,
        links: (SurvivalLink::PH, SurvivalLink::PO),
        eta1: PredictorSpec::with_baseline(vec![0, 1]),
        eta2: PredictorSpec::with_baseline(vec![0, 2]),
        eta3: PredictorSpec::intercept_only(),
    }
}

#[test]
fn acceptance_05_parameter_recovery() {
    criterion(5, "single-fit parameter recovery at n=800", || {
        let start = std::time::Instant::now();
        let config = ScenarioConfig::new(Scenario::A, 800, 3, 4242);
        let (ds, _) = simulate_scenario(&config).unwrap();
        let design = ModelDesign::build(&true_spec(), &ds).unwrap();
        let lambdas = vec![1.0; design.n_penalty_blocks()];
        let fit = trust_region_fit(&design, &ds, &lambdas, None).unwrap();
        assert!(fit.converged, "not converged: grad_norm {}", fit.grad_norm);
        assert!(fit.grad_norm < 1e-5);
        let (o1, o2, _) = design.offsets();
        let b11 = fit.delta[o1 + design.d1.linear_coef_index(0).unwrap()];
        let b12 = fit.delta[o1 + design.d1.linear_coef_index(1).unwrap()];
        let b21 = fit.delta[o2 + design.d2.linear_coef_index(0).unwrap()];
        let b22 = fit.delta[o2 + design.d2.linear_coef_index(2).unwrap()];
        for (est, want) in [(b11, -1.5), (b12, 1.7), (b21, -1.5), (b22, -1.3)] {
            assert!((est - want).abs() <= 0.4, "estimate {} vs truth {}", est, want);
        }
        assert!(start.elapsed().as_secs() <= 120, "fit took {:?}", start.elapsed());
    });
}

fn desk_params(seed: u64, metric: MeasureKind) -> BRBVSParams {
    BRBVSParams {
        b: 20,
        m: 400,
        k_max: 6,
        tau: 0.5,
        seed,
        copula: CopulaFamily::Clayton,
        links: (SurvivalLink::PH, SurvivalLink::PO),
        metric,
    }
}

fn check_desk_scale(scenario: Scenario, seed: u64, n_rep: usize) {
    let config = ScenarioConfig::new(scenario, 800, 20, seed);
    let params = desk_params(seed, MeasureKind::Fim);
    let (metrics, logs) = run_benchmark(&config, &params, n_rep).unwrap();
    for log in &logs {
        assert!(log.error.is_none(), "replicate {} failed: {:?}", log.rep, log.error);
    }
    let m1 = &metrics.margins[0];
    let m2 = &metrics.margins[1];
    assert!(m1.mean_hits >= 1.9, "{:?} margin 1 mean hits {}", scenario, m1.mean_hits);
    assert!(m2.mean_hits >= 2.8, "{:?} margin 2 mean hits {}", scenario, m2.mean_hits);
    assert!(m1.fp_raw <= 0.3, "{:?} margin 1 raw FP {}", scenario, m1.fp_raw);
    let exact = m1
        .set_frequency
        .iter()
        .find(|(set, _)| set == &vec![0, 1])
        .map(|(_, pct)| *pct)
        .unwrap_or(0.0);
    assert!(exact >= 70.0, "{:?} margin 1 exact-set frequency {}%", scenario, exact);
}

#[test]
fn acceptance_06_desk_scale_selection() {
    criterion(6, "bootstrap selection quality at desk scale", || {
        let n_rep = env_or("BRBVS_ACCEPT_NREP", 5);
        check_desk_scale(Scenario::A, 310, n_rep);
        check_desk_scale(Scenario::B, 310, n_rep);
    });
}

#[test]
fn acceptance_07_measure_comparison() {
    criterion(7, "FIM vs Abs vs CE ordering", || {
        let n_rep = env_or("BRBVS_ACCEPT_BATCH", 3);
        let mut fim_wins = 0;
        let mut fim_exact = Vec::new();
        for batch in 0..3u64 {
            let seed = 7100 + 37 * batch;
            let config = ScenarioConfig::new(Scenario::A, 800, 20, seed);
            let (fim, _) =
                run_benchmark(&config, &desk_params(seed, MeasureKind::Fim), n_rep).unwrap();
            let (abs, _) =
                run_benchmark(&config, &desk_params(seed, MeasureKind::Abs), n_rep).unwrap();
            if fim.margins[0].fp_raw <= abs.margins[0].fp_raw {
                fim_wins += 1;
            }
            let exact = fim.margins[0]
                .set_frequency
                .iter()
                .find(|(set, _)| set == &vec![0, 1])
                .map(|(_, pct)| *pct)
                .unwrap_or(0.0);
            fim_exact.push(exact);
        }
        assert!(fim_wins >= 2, "FIM beat Abs on margin-1 FP in only {}/3 batches", fim_wins);

        // CE should put {x1, x2} on top of margin 1 much less often than
        // FIM does; a replicate whose selected set is exactly {x1, x2}
        // necessarily has it as the best pair, so the FIM exact-set rate
        // bounds its top-two rate from below.
        let ce_reps = 12;
        let mut ce_top2 = 0.0;
        for rep in 0..ce_reps {
            let config = ScenarioConfig::new(Scenario::A, 800, 20, 9000 + rep);
            let (ds, _) = simulate_scenario(&config).unwrap();
            let result = brbvs_run(&ds, &desk_params(9000 + rep, MeasureKind::Ce)).unwrap();
            if result.top_sets[0][1].set == vec![0, 1] {
                ce_top2 += 100.0 / ce_reps as f64;
            }
        }
        let fim_lb = fim_exact.iter().sum::<f64>() / fim_exact.len() as f64;
        assert!(
            ce_top2 < fim_lb,
            "CE top-two rate {}% is not below FIM's {}%",
            ce_top2,
            fim_lb
        );
    });
}

#[test]
fn acceptance_08_edf_limits() {
    criterion(8, "edf at the unpenalized and fully penalized limits", || {
        let ds = mixed_dataset(60, 7);
        let design = ModelDesign::build(
            &full_spec(CopulaFamily::Clayton, (SurvivalLink::PH, SurvivalLink::PO)),
            &ds,
        )
        .unwrap();
        let xi = design.n_coef() as f64;
        let free = trust_region_fit(&design, &ds, &[0.0, 0.0], None).unwrap();
        assert!((free.edf - xi).abs() < 1e-8, "unpenalized edf {} vs xi {}", free.edf, xi);

        // total penalty rank from the block eigenvalues
        let zeta: f64 = design
            .penalty_blocks()
            .iter()
            .map(|(_, s)| {
                let eig = s.clone().symmetric_eigen().eigenvalues;
                let top = eig.iter().cloned().fold(0.0_f64, f64::max);
                eig.iter().filter(|&&e| e > 1e-10 * top).count() as f64
            })
            .sum();
        let stiff = trust_region_fit(&design, &ds, &[1e8, 1e8], None).unwrap();
        assert!(
            (stiff.edf - (xi - zeta)).abs() <= 0.1,
            "stiff edf {} vs xi - zeta = {}",
            stiff.edf,
            xi - zeta
        );
    });
}

#[test]
fn acceptance_09_entropy_estimator() {
    criterion(9, "copula entropy estimator on Gaussian benchmarks", || {
        let n = 1000;
        let mut dep = Vec::new();
        let mut ind = Vec::new();
        for seed in 0..20u64 {
            let mut rng = ChaCha8Rng::seed_from_u64(500 + seed);
            let mut a = Vec::with_capacity(n);
            let mut b = Vec::with_capacity(n);
            let mut c = Vec::with_capacity(n);
            for _ in 0..n {
                let z1: f64 = rand_distr::StandardNormal.sample(&mut rng);
                let z2: f64 = rand_distr::StandardNormal.sample(&mut rng);
                let z3: f64 = rand_distr::StandardNormal.sample(&mut rng);
                a.push(z1);
                b.push(0.5 * z1 + (1.0f64 - 0.25).sqrt() * z2);
                c.push(z3);
            }
            dep.push(ce_measure(&a, &b).unwrap());
            ind.push(ce_measure(&a, &c).unwrap());
        }
        let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
        let want = -0.5 * (1.0f64 - 0.25).ln(); // 0.1438
        assert!((mean(&dep) - want).abs() <= 0.05, "dependent MI {}", mean(&dep));
        assert!(mean(&ind).abs() <= 0.05, "independent MI {}", mean(&ind));
    });
}

fn run_bin(args: &[&str]) {
    let status = Command::new(env!("CARGO_BIN_EXE_brbvs"))
        .args(args)
        .status()
        .expect("binary runs");
    assert!(status.success(), "brbvs {:?} failed", args);
}

fn dir_snapshot(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files: Vec<(String, Vec<u8>)> = std::fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let e = e.unwrap();
            (e.file_name().into_string().unwrap(), std::fs::read(e.path()).unwrap())
        })
        .collect();
    files.sort();
    files
}

#[test]
fn acceptance_10_worker_determinism() {
    criterion(10, "byte-identical output across worker counts", || {
        let tmp = tempfile::tempdir().unwrap();
        let root = tmp.path();
        let sim = root.join("sim");
        run_bin(&["simulate", "--n", "200", "--p", "4", "--seed", "7", "--out", sim.to_str().unwrap()]);
        let data = sim.join("dataset.csv");

        let mut select_runs = Vec::new();
        let mut bench_runs = Vec::new();
        for workers in ["1", "4", "8"] {
            let sel = root.join(format!("sel{}", workers));
            run_bin(&[
                "select", "--data", data.to_str().unwrap(), "--B", "6", "--m", "100", "--kmax",
                "3", "--metric", "FIM", "--seed", "3", "--workers", workers, "--out",
                sel.to_str().unwrap(),
            ]);
            select_runs.push(dir_snapshot(&sel));
            let ben = root.join(format!("ben{}", workers));
            run_bin(&[
                "bench", "--n", "150", "--p", "4", "--n-rep", "2", "--B", "3", "--m", "75",
                "--kmax", "3", "--metric", "CE", "--seed", "5", "--workers", workers, "--out",
                ben.to_str().unwrap(),
            ]);
            bench_runs.push(dir_snapshot(&ben));
        }
        assert_eq!(select_runs[0], select_runs[1], "select differs between 1 and 4 workers");
        assert_eq!(select_runs[0], select_runs[2], "select differs between 1 and 8 workers");
        assert_eq!(bench_runs[0], bench_runs[1], "bench differs between 1 and 4 workers");
        assert_eq!(bench_runs[0], bench_runs[2], "bench differs between 1 and 8 workers");
    });
}
