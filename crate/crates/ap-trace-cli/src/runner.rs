//! Subcommand dispatch: build the manifest, validate, run the experiment
//! on a sized thread pool, and write the report pair.

use crate::manifest::{validate, Cli, Command, CommonArgs, ExperimentManifest, Violation, MANIFEST_SCHEMA_VERSION};
use crate::report::{csv_header, csv_line, Report};
use anyhow::{anyhow, Context, Result};
use ap_trace_core::estimators::{
    default_anchor, run_covariance, run_excursion_tail, run_ldp, run_moments, run_nesting,
    run_scaling, LdpOptions, PathParams,
};
use ap_trace_core::geometry::{APConfig, Point};
use ap_trace_core::oracle::exhaustive_walk_distribution;
use serde::Serialize;
use serde_json::json;
use std::fmt::Write as _;
use std::path::PathBuf;
use std::time::Instant;

pub fn run_cli(cli: Cli) -> i32 {
    let workers = resolve_threads(cli.threads);
    let out = cli.out.clone();
    match dispatch(cli, workers) {
        Ok((manifest, results, csv, wall)) => {
            let report = Report::new(manifest, &results, wall, workers);
            match out {
                Some(dir) => {
                    if let Err(e) = report.write(&dir, &csv) {
                        eprintln!("{}", json!({"error": format!("write failed: {e}")}));
                        return 1;
                    }
                    println!(
                        "{}",
                        json!({
                            "report": dir.join("report.json"),
                            "series": dir.join("series.csv"),
                            "results_sha256": report.results_sha256,
                        })
                    );
                }
                None => {
                    println!("{}", serde_json::to_string_pretty(&report).unwrap());
                }
            }
            0
        }
        Err(RunError::Invalid(violations, out)) => {
            let record = json!({"error": "invalid manifest", "violations": violations});
            eprintln!("{record}");
            if let Some(dir) = out {
                let _ = std::fs::create_dir_all(&dir)
                    .and_then(|_| std::fs::write(dir.join("error.json"), record.to_string()));
            }
            2
        }
        Err(RunError::Failed(e)) => {
            eprintln!("{}", json!({"error": e.to_string()}));
            1
        }
    }
}

enum RunError {
    Invalid(Vec<Violation>, Option<PathBuf>),
    Failed(anyhow::Error),
}

impl From<anyhow::Error> for RunError {
    fn from(e: anyhow::Error) -> Self {
        RunError::Failed(e)
    }
}

fn resolve_threads(flag: Option<usize>) -> usize {
    flag.or_else(|| {
        std::env::var("AP_TRACE_THREADS")
            .ok()
            .and_then(|v| v.parse().ok())
    })
    .unwrap_or_else(|| {
        std::thread::available_parallelism()
            .map(|n| n.get())
            .unwrap_or(1)
    })
    .max(1)
}

fn base_manifest(kind: &str, c: &CommonArgs, workers: usize, out: &Option<PathBuf>) -> ExperimentManifest {
    ExperimentManifest {
        schema_version: MANIFEST_SCHEMA_VERSION,
        kind: kind.into(),
        dim: c.dim,
        delta: c.delta,
        domain_radius: c.domain_radius,
        horizon: c.horizon,
        dt_base: c.dt_base,
        seed: c.seed,
        cap: c.cap,
        k: None,
        eps: None,
        trials: None,
        ladder: None,
        trials_per_rung: None,
        n_ladder: None,
        lambda: None,
        r: None,
        s: None,
        exact: None,
        acceptance_floor: None,
        dump_quantile: None,
        workers,
        out: out.as_ref().map(|p| p.display().to_string()),
    }
}

type RunOutput = (ExperimentManifest, serde_json::Value, String, f64);

fn dispatch(cli: Cli, workers: usize) -> Result<RunOutput, RunError> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| RunError::Failed(anyhow!(e)))?;
    let out = cli.out.clone();

    // validate subcommand never fails; it reports
    if let Command::Validate { manifest } = &cli.cmd {
        let text = std::fs::read_to_string(manifest)
            .with_context(|| format!("reading {}", manifest.display()))
            .map_err(RunError::Failed)?;
        let m: ExperimentManifest = serde_json::from_str(&text)
            .context("parsing manifest JSON")
            .map_err(RunError::Failed)?;
        let violations = validate(&m);
        let results = json!({"violations": violations, "runnable": violations.is_empty()});
        let csv = format!("{}field,message\n{}", csv_line("validate"), {
            let mut s = String::new();
            for v in &violations {
                let _ = writeln!(s, "{},{}", v.field, v.message.replace(',', ";"));
            }
            s
        });
        return Ok((m, results, csv, 0.0));
    }

    let start = Instant::now();
    let (manifest, results, csv) = pool.install(|| run_experiment(&cli, workers, &out))?;
    Ok((manifest, results, csv, start.elapsed().as_secs_f64()))
}

fn guard(m: &ExperimentManifest, out: &Option<PathBuf>) -> Result<(), RunError> {
    let violations = validate(m);
    if violations.is_empty() {
        Ok(())
    } else {
        Err(RunError::Invalid(violations, out.clone()))
    }
}

fn run_experiment(
    cli: &Cli,
    workers: usize,
    out: &Option<PathBuf>,
) -> Result<(ExperimentManifest, serde_json::Value, String), RunError> {
    match &cli.cmd {
        Command::Moments { common, k, eps, trials } => {
            let mut m = base_manifest("moments", common, workers, out);
            m.k = Some(*k);
            m.eps = Some(*eps);
            m.trials = Some(*trials);
            guard(&m, out)?;
            let cfg = config(common, *k, *eps)?;
            let path = path_params(common);
            let report = run_moments(&cfg, &path, *trials, common.seed)
                .map_err(|e| RunError::Failed(anyhow!(e)))?;
            let mut csv = csv_line("moments");
            csv.push_str(csv_header("moments"));
            csv.push('\n');
            let _ = writeln!(
                csv,
                "{},{},{},{},{},{},{},{},{}",
                report.eps,
                report.k,
                report.trials,
                report.mean_x,
                report.stderr_x,
                report.mean_x2,
                report.stderr_x2,
                report.p_positive,
                report.stderr_p
            );
            Ok((m, to_value(&report)?, csv))
        }
        Command::Scaling { common, k, ladder, trials } => {
            let trials_per_rung = if trials.len() == 1 {
                vec![trials[0]; ladder.len()]
            } else {
                trials.clone()
            };
            let mut m = base_manifest("scaling", common, workers, out);
            m.k = Some(*k);
            m.ladder = Some(ladder.clone());
            m.trials_per_rung = Some(trials_per_rung.clone());
            guard(&m, out)?;
            let cfg = config(common, *k, *ladder.first().unwrap_or(&0.1))?;
            let path = path_params(common);
            let series = run_scaling(&cfg, ladder, &trials_per_rung, &path, common.seed)
                .map_err(|e| RunError::Failed(anyhow!(e)))?;
            let mut csv = csv_line("scaling");
            csv.push_str(csv_header("scaling"));
            csv.push('\n');
            for p in &series.points {
                let _ = writeln!(
                    csv,
                    "{},{},{},{},{},{}",
                    p.eps, p.trials, p.mean_x, p.stderr_x, p.p_positive, p.stderr_p
                );
            }
            Ok((m, to_value(&series)?, csv))
        }
        Command::Nesting { common, k, eps, lambda, trials } => {
            let mut m = base_manifest("nesting", common, workers, out);
            m.k = Some(*k);
            m.eps = Some(*eps);
            m.lambda = Some(*lambda);
            m.trials = Some(*trials);
            guard(&m, out)?;
            let cfg = config(common, *k, *eps)?;
            let path = path_params(common);
            let report = run_nesting(&cfg, &path, *trials, *eps, *lambda, common.seed)
                .map_err(|e| RunError::Failed(anyhow!(e)))?;
            let mut csv = csv_line("nesting");
            csv.push_str(csv_header("nesting"));
            csv.push('\n');
            let _ = writeln!(
                csv,
                "{},{},{},{},{},{},{}",
                report.eps,
                report.lambda,
                report.trials,
                report.coarse_positive,
                report.fine_checked,
                report.fine_positive,
                report.violations
            );
            Ok((m, to_value(&report)?, csv))
        }
        Command::Covariance { common, k, eps, trials, floor } => {
            let mut m = base_manifest("covariance", common, workers, out);
            m.k = Some(*k);
            m.eps = Some(*eps);
            m.trials = Some(*trials);
            m.acceptance_floor = Some(*floor);
            guard(&m, out)?;
            let cfg = config(common, *k, *eps)?;
            let path = path_params(common);
            let anchor = default_anchor(&cfg).map_err(|e| RunError::Failed(anyhow!(e)))?;
            let report = run_covariance(&cfg, &anchor, &path, *trials, *floor, common.seed)
                .map_err(|e| RunError::Failed(anyhow!(e)))?;
            let mut csv = csv_line("covariance");
            csv.push_str(csv_header("covariance"));
            csv.push('\n');
            for ((a, b), (c, se)) in &report.cov {
                let _ = writeln!(csv, "{a},{b},{c},{se}");
            }
            Ok((m, to_value(&report)?, csv))
        }
        Command::Excursion { common, r, s, trials } => {
            let mut m = base_manifest("excursion", common, workers, out);
            m.r = Some(*r);
            m.s = Some(*s);
            m.trials = Some(*trials);
            guard(&m, out)?;
            let path = path_params(common);
            let mut center = vec![0.0; common.dim];
            center[0] = *r; // origin sits on the entry sphere
            let centers = vec![Point::new(&center).map_err(|e| RunError::Failed(anyhow!(e)))?];
            let report = run_excursion_tail(&centers, *r, *s, &path, *trials, common.seed)
                .map_err(|e| RunError::Failed(anyhow!(e)))?;
            let mut csv = csv_line("excursion");
            csv.push_str(csv_header("excursion"));
            csv.push('\n');
            for (mm, p, se) in &report.tail {
                let _ = writeln!(csv, "{mm},{p},{se}");
            }
            Ok((m, to_value(&report)?, csv))
        }
        Command::Ldp { common, n, trials, exact, dump_quantile } => {
            let mut m = base_manifest("ldp", common, workers, out);
            m.n_ladder = Some(n.clone());
            m.trials = Some(*trials);
            m.exact = Some(*exact);
            m.dump_quantile = *dump_quantile;
            guard(&m, out)?;
            let opts = LdpOptions {
                dump_quantile: *dump_quantile,
                ..LdpOptions::default()
            };
            let report = run_ldp(common.dim, n, *trials, common.seed, &opts)
                .map_err(|e| RunError::Failed(anyhow!(e)))?;
            let exact_cmp = if *exact {
                Some(exact_comparison(&report).map_err(RunError::Failed)?)
            } else {
                None
            };
            let mut csv = csv_line("ldp");
            csv.push_str(csv_header("ldp"));
            csv.push('\n');
            for p in &report.points {
                let total: u64 = p.histogram.values().sum();
                let exact_dist = if *exact {
                    exhaustive_walk_distribution(p.n).ok()
                } else {
                    None
                };
                for (&count, &freq) in &p.histogram {
                    let emp = freq as f64 / total as f64;
                    let ex = exact_dist
                        .as_ref()
                        .map(|d| d.prob_f64(count).to_string())
                        .unwrap_or_default();
                    let _ = writeln!(csv, "{},{},{},{}", p.n, count, emp, ex);
                }
            }
            let results = json!({"ldp": report, "exact_comparison": exact_cmp});
            Ok((m, results, csv))
        }
        Command::Oracle { common, n } => {
            let mut m = base_manifest("oracle", common, workers, out);
            m.n_ladder = Some(vec![*n]);
            guard(&m, out)?;
            let dist = exhaustive_walk_distribution(*n).map_err(|e| RunError::Failed(anyhow!(e)))?;
            #[derive(Serialize)]
            struct OracleRow {
                count: u64,
                numerator: String,
                denominator: String,
                prob: f64,
            }
            let rows: Vec<OracleRow> = dist
                .pmf
                .iter()
                .map(|(&c, r)| OracleRow {
                    count: c,
                    numerator: r.numer().to_string(),
                    denominator: r.denom().to_string(),
                    prob: dist.prob_f64(c),
                })
                .collect();
            let mut csv = csv_line("oracle");
            csv.push_str(csv_header("oracle"));
            csv.push('\n');
            for r in &rows {
                let _ = writeln!(csv, "{},{}", r.count, r.prob);
            }
            Ok((m, json!({"n": n, "pmf": rows}), csv))
        }
        Command::Validate { .. } => unreachable!("handled in dispatch"),
    }
}

fn config(c: &CommonArgs, k: usize, eps: f64) -> Result<APConfig, RunError> {
    APConfig::with_domain(k, eps, c.delta, c.dim, c.domain_radius)
        .map_err(|e| RunError::Failed(anyhow!(e)))
}

fn path_params(c: &CommonArgs) -> PathParams {
    PathParams { horizon: c.horizon, dt_base: c.dt_base }
}

fn to_value<T: Serialize>(v: &T) -> Result<serde_json::Value, RunError> {
    serde_json::to_value(v).map_err(|e| RunError::Failed(anyhow!(e)))
}

/// Per-bin z-scores of the empirical ldp histogram against the exhaustive
/// d = 1 distribution.
fn exact_comparison(report: &ap_trace_core::estimators::LdpReport) -> Result<serde_json::Value> {
    let mut per_n = Vec::new();
    for p in &report.points {
        let dist = exhaustive_walk_distribution(p.n)?;
        let total: u64 = p.histogram.values().sum();
        let mut bins = Vec::new();
        let mut max_z: f64 = 0.0;
        let mut counts: Vec<u64> = p.histogram.keys().copied().collect();
        for c in dist.pmf.keys() {
            if !counts.contains(c) {
                counts.push(*c);
            }
        }
        counts.sort_unstable();
        for c in counts {
            let emp = p.histogram.get(&c).copied().unwrap_or(0) as f64 / total as f64;
            let exact = dist.prob_f64(c);
            let se = (exact * (1.0 - exact) / total as f64).sqrt();
            let z = if se > 0.0 { (emp - exact) / se } else { 0.0 };
            max_z = max_z.max(z.abs());
            bins.push(json!({"count": c, "empirical": emp, "exact": exact, "z": z}));
        }
        per_n.push(json!({"n": p.n, "bins": bins, "max_abs_z": max_z}));
    }
    Ok(json!(per_n))
}
