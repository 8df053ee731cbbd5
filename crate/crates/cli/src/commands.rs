//! The five subcommands: simulate, fit, select, choose, bench.

use std::io::Write as _;
use std::path::{Path, PathBuf};

use brbvs_core::measures::MeasureKind;
use brbvs_core::simulate::{self, Scenario, ScenarioConfig};
use brbvs_core::{
    benchmark, brbvs_run, select_smoothing, BRBVSParams, CopulaFamily, ModelDesign, SurvivalDataset,
    SurvivalLink,
};
use serde::Serialize;

use crate::cli_args::CommonArgs;
use crate::config::RunConfig;
use crate::data::{load_dataset, write_dataset};
use crate::errors::AppError;
use crate::model_build::{build_model_spec, parse_copula, parse_link};
use crate::report;

fn ensure_out(dir: &Path) -> Result<(), AppError> {
    std::fs::create_dir_all(dir).map_err(|e| AppError::io("creating output directory", e))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), AppError> {
    let text = serde_json::to_string_pretty(value)
        .map_err(|e| AppError::Numeric(format!("serializing {}: {}", path.display(), e)))?;
    std::fs::write(path, text + "\n").map_err(|e| AppError::io("writing json", e))
}

fn scenario_config(cfg: &RunConfig, args: &CommonArgs) -> Result<ScenarioConfig, AppError> {
    let block = cfg.scenario.clone().unwrap_or(crate::config::ScenarioBlock {
        scenario: None,
        n: None,
        p: None,
        scenario_b_intercept: false,
    });
    let code = args
        .scenario
        .clone()
        .or(block.scenario)
        .unwrap_or_else(|| "A".to_string());
    let scenario = Scenario::parse(&code)
        .ok_or_else(|| AppError::Config(format!("unknown scenario {:?} (expected A or B)", code)))?;
    let n = args.n.or(block.n).unwrap_or(800);
    let p = args.p.or(block.p).unwrap_or(20);
    let seed = args.seed.or(cfg.seed).unwrap_or(1);
    let mut sc = ScenarioConfig::new(scenario, n, p, seed);
    sc.scenario_b_intercept = block.scenario_b_intercept;
    sc.validate()?;
    Ok(sc)
}

fn brbvs_params(
    cfg: &RunConfig,
    args: &CommonArgs,
    ds: &SurvivalDataset,
) -> Result<BRBVSParams, AppError> {
    let block = cfg.brbvs.clone();
    let get = |f: fn(&crate::config::BrbvsConfig) -> Option<usize>| block.as_ref().and_then(f);
    let metric_code = args
        .metric
        .clone()
        .or_else(|| block.as_ref().and_then(|b| b.metric.clone()))
        .unwrap_or_else(|| "FIM".to_string());
    let metric = MeasureKind::parse(&metric_code)
        .ok_or_else(|| AppError::Config(format!("unknown metric {:?} (expected FIM, Abs or CE)", metric_code)))?;
    let copula_code = args
        .copula
        .clone()
        .or_else(|| cfg.model.as_ref().map(|m| m.copula.clone()))
        .unwrap_or_else(|| "C0".to_string());
    let margins = parse_margin_pair(
        args.margins
            .clone()
            .or_else(|| cfg.model.as_ref().map(|m| format!("{},{}", m.margins[0], m.margins[1])))
            .unwrap_or_else(|| "PH,PO".to_string()),
    )?;
    Ok(BRBVSParams {
        b: args.b_reps.or(get(|b| b.b)).unwrap_or(50),
        m: args.m.or(get(|b| b.m)).unwrap_or_else(|| (ds.n() / 2).max(1)),
        k_max: args.kmax.or(get(|b| b.kmax)).unwrap_or_else(|| ds.p().min(10)),
        tau: args
            .tau
            .or_else(|| block.as_ref().and_then(|b| b.tau))
            .unwrap_or(0.5),
        seed: args.seed.or(cfg.seed).unwrap_or(1),
        copula: parse_copula(&copula_code)?,
        links: margins,
        metric,
    })
}

fn parse_margin_pair(s: String) -> Result<(SurvivalLink, SurvivalLink), AppError> {
    let parts: Vec<&str> = s.split(',').map(str::trim).collect();
    if parts.len() != 2 {
        return Err(AppError::Config(format!(
            "--margins expects two comma-separated links, got {:?}",
            s
        )));
    }
    Ok((parse_link(parts[0])?, parse_link(parts[1])?))
}

#[derive(Serialize)]
struct TruthSidecar {
    scenario: String,
    n: usize,
    p: usize,
    seed: u64,
    beta1: (f64, f64),
    beta2: (f64, f64),
    beta3: (f64, f64, f64, f64),
    s1: Vec<String>,
    s2: Vec<String>,
    censor_bounds: (f64, f64),
    achieved_censoring: (f64, f64),
}

pub fn cmd_simulate(cfg: &RunConfig, args: &CommonArgs) -> Result<(), AppError> {
    let sc = scenario_config(cfg, args)?;
    ensure_out(&args.out)?;
    let (ds, truth) = simulate::simulate_scenario(&sc)?;
    let rate = |s: &[brbvs_core::CensoringStatus]| {
        s.iter().filter(|v| !v.is_uncensored()).count() as f64 / s.len() as f64
    };
    write_dataset(&args.out.join("dataset.csv"), &ds)?;
    write_json(
        &args.out.join("truth.json"),
        &TruthSidecar {
            scenario: sc.scenario.code().to_string(),
            n: sc.n,
            p: sc.p,
            seed: sc.seed,
            beta1: sc.beta1,
            beta2: sc.beta2,
            beta3: sc.beta3,
            s1: vec!["x1".into(), "x2".into()],
            s2: vec!["x1".into(), "x2".into(), "x3".into()],
            censor_bounds: truth.censor_bounds,
            achieved_censoring: (rate(&ds.status1), rate(&ds.status2)),
        },
    )?;
    println!("wrote {} rows to {}", ds.n(), args.out.join("dataset.csv").display());
    Ok(())
}

pub fn cmd_fit(cfg: &RunConfig, args: &CommonArgs) -> Result<(), AppError> {
    let data = require_data(args)?;
    let ds = load_dataset(&data, &cfg.categorical)?;
    let model = cfg
        .model
        .as_ref()
        .ok_or_else(|| AppError::Config("fit requires a model block in the config".into()))?;
    let spec = build_model_spec(model, &ds)?;
    let design = ModelDesign::build(&spec, &ds)?;
    ensure_out(&args.out)?;
    let (_, fit) = select_smoothing(&design, &ds)?;
    let fit_report = report::build_report(&design, &fit, &ds.covariate_names)?;
    write_json(&args.out.join("fit.json"), &fit_report)?;
    let x0 = contour_profile(cfg, &ds)?;
    for margin in 1..=2 {
        let d = if margin == 1 { &design.d1 } else { &design.d2 };
        if d.has_baseline() {
            report::write_baseline_curve(
                &args.out.join(format!("baseline_margin{}.csv", margin)),
                &design,
                &fit,
                margin,
                &x0,
                &ds.observed_times(margin),
            )?;
        }
    }
    if cfg.contour.is_some() {
        let grid = cfg.contour.as_ref().map(|c| c.grid).unwrap_or(40);
        let r1 = range_of(&ds.observed_times(1));
        let r2 = range_of(&ds.observed_times(2));
        report::write_contour_grid(
            &args.out.join("contour.csv"),
            &design,
            &fit,
            &x0,
            r1,
            r2,
            grid,
        )?;
    }
    if !fit.converged {
        eprintln!(
            "warning: fit did not converge (grad_norm={:.3e} after {} iterations)",
            fit.grad_norm, fit.iterations
        );
    }
    println!("wrote fit report to {}", args.out.join("fit.json").display());
    Ok(())
}

fn range_of(times: &[f64]) -> (f64, f64) {
    times
        .iter()
        .fold((f64::INFINITY, 0.0_f64), |(l, h), &t| (l.min(t), h.max(t)))
}

fn contour_profile(cfg: &RunConfig, ds: &SurvivalDataset) -> Result<Vec<f64>, AppError> {
    let mut x0 = vec![0.0; ds.p()];
    if let Some(c) = &cfg.contour {
        for (name, value) in &c.x0 {
            let j = ds
                .covariate_names
                .iter()
                .position(|n| n == name)
                .ok_or_else(|| AppError::Config(format!("contour profile covariate {:?} not in the dataset", name)))?;
            x0[j] = *value;
        }
    }
    Ok(x0)
}

fn require_data(args: &CommonArgs) -> Result<PathBuf, AppError> {
    args.data
        .clone()
        .ok_or_else(|| AppError::Config("this subcommand requires --data <csv>".into()))
}

pub fn cmd_select(cfg: &RunConfig, args: &CommonArgs) -> Result<(), AppError> {
    let data = require_data(args)?;
    let ds = load_dataset(&data, &cfg.categorical)?;
    let params = brbvs_params(cfg, args, &ds)?;
    ensure_out(&args.out)?;
    let result = brbvs_run(&ds, &params)?;
    write_json(&args.out.join("brbvs.json"), &result)?;

    // human-readable summary
    let mut text = String::new();
    text.push_str(&format!(
        "metric: {}  kmax: {}  copula: {}  margins: {},{}\n",
        params.metric.code(),
        params.k_max,
        params.copula.code(),
        params.links.0.code(),
        params.links.1.code()
    ));
    text.push_str(&format!(
        "B: {}  m: {}  tau: {}  seed: {}\n",
        params.b, params.m, params.tau, params.seed
    ));
    for margin in 0..2 {
        let names: Vec<&str> =
            result.s_hat[margin].iter().map(|&j| result.covariate_names[j].as_str()).collect();
        text.push_str(&format!("\nSets of Relevant Covariates, margin {}:\n", margin + 1));
        text.push_str(&format!("  selected: {{{}}}\n", names.join(", ")));
        for (k, top) in result.top_sets[margin].iter().enumerate() {
            let set: Vec<&str> =
                top.set.iter().map(|&j| result.covariate_names[j].as_str()).collect();
            text.push_str(&format!(
                "  k={}: {{{}}} pi={:.3}\n",
                k + 1,
                set.join(", "),
                top.pi
            ));
        }
    }
    if result.kmax_warning {
        text.push_str("\nwarning: a selected set reached kmax; increase kmax and rerun\n");
    }
    if result.non_converged > 0 {
        text.push_str(&format!(
            "\nnote: {}/{} ranking fits did not converge\n",
            result.non_converged, result.total_fits
        ));
    }
    let mut f = std::fs::File::create(args.out.join("summary.txt"))
        .map_err(|e| AppError::io("creating summary", e))?;
    f.write_all(text.as_bytes()).map_err(|e| AppError::io("writing summary", e))?;
    print!("{}", text);

    // bar-chart data: covariate, margin, rank-1 selection frequency
    let mut w = csv::Writer::from_path(args.out.join("frequency.csv"))
        .map_err(|e| AppError::Data(e.to_string()))?;
    w.write_record(["covariate", "margin", "rank", "percent"])
        .map_err(|e| AppError::Data(e.to_string()))?;
    for margin in 0..2 {
        for (j, name) in result.covariate_names.iter().enumerate() {
            for (pos, pct) in result.frequency[margin][j].iter().enumerate() {
                w.write_record([
                    name.clone(),
                    (margin + 1).to_string(),
                    (pos + 1).to_string(),
                    format!("{}", pct),
                ])
                .map_err(|e| AppError::Data(e.to_string()))?;
            }
        }
    }
    w.flush().map_err(|e| AppError::io("flushing frequency table", e))?;
    Ok(())
}

pub fn cmd_choose(cfg: &RunConfig, args: &CommonArgs) -> Result<(), AppError> {
    let data = require_data(args)?;
    let ds = load_dataset(&data, &cfg.categorical)?;
    let model = cfg
        .model
        .as_ref()
        .ok_or_else(|| AppError::Config("choose requires a model block in the config".into()))?;
    ensure_out(&args.out)?;
    #[derive(Serialize)]
    struct Row {
        copula: String,
        link1: String,
        link2: String,
        loglik: Option<f64>,
        edf: Option<f64>,
        aic: Option<f64>,
        bic: Option<f64>,
        converged: Option<bool>,
        error: Option<String>,
    }
    let mut rows = Vec::new();
    for copula in [CopulaFamily::Independence, CopulaFamily::Clayton, CopulaFamily::Plackett] {
        for link1 in [SurvivalLink::PH, SurvivalLink::PO] {
            for link2 in [SurvivalLink::PH, SurvivalLink::PO] {
                let mut model = model.clone();
                model.copula = copula.code().to_string();
                model.margins = [link1.code().to_string(), link2.code().to_string()];
                let outcome = build_model_spec(&model, &ds)
                    .and_then(|spec| ModelDesign::build(&spec, &ds).map_err(AppError::from))
                    .and_then(|design| select_smoothing(&design, &ds).map_err(AppError::from));
                rows.push(match outcome {
                    Ok((_, fit)) => Row {
                        copula: copula.code().into(),
                        link1: link1.code().into(),
                        link2: link2.code().into(),
                        loglik: Some(fit.loglik),
                        edf: Some(fit.edf),
                        aic: Some(fit.aic),
                        bic: Some(fit.bic),
                        converged: Some(fit.converged),
                        error: None,
                    },
                    Err(e) => Row {
                        copula: copula.code().into(),
                        link1: link1.code().into(),
                        link2: link2.code().into(),
                        loglik: None,
                        edf: None,
                        aic: None,
                        bic: None,
                        converged: None,
                        error: Some(e.to_string()),
                    },
                });
            }
        }
    }
    rows.sort_by(|a, b| match (a.aic, b.aic) {
        (Some(x), Some(y)) => x.partial_cmp(&y).unwrap(),
        (Some(_), None) => std::cmp::Ordering::Less,
        (None, Some(_)) => std::cmp::Ordering::Greater,
        (None, None) => std::cmp::Ordering::Equal,
    });
    let mut w = csv::Writer::from_path(args.out.join("choose.csv"))
        .map_err(|e| AppError::Data(e.to_string()))?;
    w.write_record(["copula", "link1", "link2", "loglik", "edf", "aic", "bic", "converged", "error"])
        .map_err(|e| AppError::Data(e.to_string()))?;
    let opt = |v: Option<f64>| v.map(|x| format!("{}", x)).unwrap_or_default();
    for r in &rows {
        w.write_record([
            r.copula.clone(),
            r.link1.clone(),
            r.link2.clone(),
            opt(r.loglik),
            opt(r.edf),
            opt(r.aic),
            opt(r.bic),
            r.converged.map(|c| c.to_string()).unwrap_or_default(),
            r.error.clone().unwrap_or_default(),
        ])
        .map_err(|e| AppError::Data(e.to_string()))?;
    }
    w.flush().map_err(|e| AppError::io("flushing choose table", e))?;
    println!("wrote 12-row model grid to {}", args.out.join("choose.csv").display());
    Ok(())
}

pub fn cmd_bench(cfg: &RunConfig, args: &CommonArgs) -> Result<(), AppError> {
    ensure_out(&args.out)?;
    let bench = cfg.bench.clone().unwrap_or(crate::config::BenchConfig {
        scenarios: vec![],
        n: vec![],
        p: vec![],
        metrics: vec![],
        n_rep: None,
    });
    let scenarios = if bench.scenarios.is_empty() {
        vec![args.scenario.clone().unwrap_or_else(|| "A".into())]
    } else {
        bench.scenarios.clone()
    };
    let ns = if bench.n.is_empty() { vec![args.n.unwrap_or(800)] } else { bench.n.clone() };
    let ps = if bench.p.is_empty() { vec![args.p.unwrap_or(20)] } else { bench.p.clone() };
    let metrics = if bench.metrics.is_empty() {
        vec![args.metric.clone().unwrap_or_else(|| "FIM".into())]
    } else {
        bench.metrics.clone()
    };
    let n_rep = args.n_rep.or(bench.n_rep).unwrap_or(20);

    let mut mw = csv::Writer::from_path(args.out.join("bench.csv"))
        .map_err(|e| AppError::Data(e.to_string()))?;
    mw.write_record([
        "scenario", "n", "p", "metric", "margin", "fp_raw", "fn_raw", "fp_norm", "fn_norm",
        "mean_size", "mean_hits", "n_rep", "failures",
    ])
    .map_err(|e| AppError::Data(e.to_string()))?;
    let mut fw = csv::Writer::from_path(args.out.join("set_frequency.csv"))
        .map_err(|e| AppError::Data(e.to_string()))?;
    fw.write_record(["scenario", "n", "p", "metric", "margin", "set", "percent"])
        .map_err(|e| AppError::Data(e.to_string()))?;
    let mut rw = csv::Writer::from_path(args.out.join("replicates.csv"))
        .map_err(|e| AppError::Data(e.to_string()))?;
    rw.write_record(["scenario", "n", "p", "metric", "rep", "s_hat1", "s_hat2", "error"])
        .map_err(|e| AppError::Data(e.to_string()))?;

    for scode in &scenarios {
        for &n in &ns {
            for &p in &ps {
                for mcode in &metrics {
                    let mut cell_args = args.clone();
                    cell_args.scenario = Some(scode.clone());
                    cell_args.n = Some(n);
                    cell_args.p = Some(p);
                    cell_args.metric = Some(mcode.clone());
                    let sc = scenario_config(cfg, &cell_args)?;
                    let mut params = brbvs_params_for_bench(cfg, &cell_args, n, p)?;
                    params.k_max = params.k_max.min(p);
                    let (metrics_out, logs) = benchmark::run_benchmark(&sc, &params, n_rep)?;
                    for (margin, mm) in metrics_out.margins.iter().enumerate() {
                        mw.write_record([
                            scode.clone(),
                            n.to_string(),
                            p.to_string(),
                            mcode.clone(),
                            (margin + 1).to_string(),
                            format!("{}", mm.fp_raw),
                            format!("{}", mm.fn_raw),
                            format!("{}", mm.fp_norm),
                            format!("{}", mm.fn_norm),
                            format!("{}", mm.mean_size),
                            format!("{}", mm.mean_hits),
                            metrics_out.n_rep.to_string(),
                            metrics_out.failures.to_string(),
                        ])
                        .map_err(|e| AppError::Data(e.to_string()))?;
                        for (set, pct) in &mm.set_frequency {
                            let names: Vec<String> =
                                set.iter().map(|j| format!("x{}", j + 1)).collect();
                            fw.write_record([
                                scode.clone(),
                                n.to_string(),
                                p.to_string(),
                                mcode.clone(),
                                (margin + 1).to_string(),
                                names.join("+"),
                                format!("{}", pct),
                            ])
                            .map_err(|e| AppError::Data(e.to_string()))?;
                        }
                    }
                    for log in &logs {
                        let fmt_set = |s: &Vec<usize>| {
                            s.iter().map(|j| format!("x{}", j + 1)).collect::<Vec<_>>().join("+")
                        };
                        rw.write_record([
                            scode.clone(),
                            n.to_string(),
                            p.to_string(),
                            mcode.clone(),
                            log.rep.to_string(),
                            log.s_hat.as_ref().map(|s| fmt_set(&s[0])).unwrap_or_default(),
                            log.s_hat.as_ref().map(|s| fmt_set(&s[1])).unwrap_or_default(),
                            log.error.clone().unwrap_or_default(),
                        ])
                        .map_err(|e| AppError::Data(e.to_string()))?;
                    }
                }
            }
        }
    }
    mw.flush().map_err(|e| AppError::io("flushing bench table", e))?;
    fw.flush().map_err(|e| AppError::io("flushing set frequencies", e))?;
    rw.flush().map_err(|e| AppError::io("flushing replicate log", e))?;
    println!("wrote benchmark tables to {}", args.out.display());
    Ok(())
}

/// Like brbvs_params but without a dataset; defaults come from (n, p).
fn brbvs_params_for_bench(
    cfg: &RunConfig,
    args: &CommonArgs,
    n: usize,
    p: usize,
) -> Result<BRBVSParams, AppError> {
    let block = cfg.brbvs.clone();
    let get = |f: fn(&crate::config::BrbvsConfig) -> Option<usize>| block.as_ref().and_then(f);
    let metric_code = args.metric.clone().unwrap_or_else(|| "FIM".to_string());
    let metric = MeasureKind::parse(&metric_code)
        .ok_or_else(|| AppError::Config(format!("unknown metric {:?}", metric_code)))?;
    Ok(BRBVSParams {
        b: args.b_reps.or(get(|b| b.b)).unwrap_or(20),
        m: args.m.or(get(|b| b.m)).unwrap_or_else(|| (n / 2).max(1)),
        k_max: args.kmax.or(get(|b| b.kmax)).unwrap_or_else(|| p.min(6)),
        tau: args
            .tau
            .or_else(|| block.as_ref().and_then(|b| b.tau))
            .unwrap_or(0.5),
        seed: args.seed.or(cfg.seed).unwrap_or(1),
        copula: CopulaFamily::Clayton,
        links: (SurvivalLink::PH, SurvivalLink::PO),
        metric,
    })
}
