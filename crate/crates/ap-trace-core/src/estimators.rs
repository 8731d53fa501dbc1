//! Monte Carlo experiment runners: moment estimation for the tuple count,
//! scaling ladders, scale nesting, conditional covariance of window
//! indicators, excursion tails, and 3-AP counts in random-walk ranges.
//!
//! Every runner draws trial i from the counter-based stream i of the base
//! seed and merges per-trial outputs in trial order, so reports are
//! identical for any worker count.

use crate::bm::{
    excursion_count, hit_cells, hit_cells_from_vertices, hits_ball, refine_near, sample_path_stream,
    BallSpec, BmError, RefinePolicy,
};
use crate::detector::{any_tuple, enumerate_x_multi, window_counts, scale_range, DetectorError};
use crate::geometry::{APCandidate, APConfig, GeometryError, Point};
use crate::oracle::OracleError;
use crate::srw::{walk_range_stream, SrwError};
use crate::stats::{geometric_ratio, loglog_slope, proportion, quantile_sorted, Welford};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::time::Instant;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum EstimatorError {
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Sampler(#[from] BmError),
    #[error(transparent)]
    Detector(#[from] DetectorError),
    #[error(transparent)]
    Walk(#[from] SrwError),
    #[error(transparent)]
    Oracle(#[from] OracleError),
    #[error("need at least {0} trials")]
    TooFewTrials(usize),
    #[error("ladder must be geometric with at least 3 rungs: {0}")]
    BadLadder(String),
    #[error(
        "conditioning acceptance rate {rate:.5} below floor {floor}; \
         rejection conditioning infeasible at these parameters"
    )]
    AcceptanceTooLow { rate: f64, floor: f64 },
}

/// Path-sampling parameters shared by the Brownian experiments.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct PathParams {
    pub horizon: f64,
    pub dt_base: f64,
}

impl Default for PathParams {
    fn default() -> Self {
        Self { horizon: 1.0, dt_base: 1e-3 }
    }
}

/// Moment estimates for the tuple count at one (eps, k).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MomentReport {
    pub eps: f64,
    pub k: usize,
    pub trials: usize,
    pub mean_x: f64,
    pub stderr_x: f64,
    pub mean_x2: f64,
    pub stderr_x2: f64,
    pub p_positive: f64,
    pub stderr_p: f64,
    /// Mean per-trial bucket counts, bucket n -> average count.
    pub bucket_profile: BTreeMap<u32, f64>,
    pub seed: u64,
    pub runtime_secs: f64,
}

/// Joint run over several tuple lengths with shared paths and cells.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct JointMomentRun {
    pub reports: Vec<MomentReport>,
    /// per_path[ki][trial] = X for that tuple length on that path.
    pub per_path: Vec<Vec<u64>>,
}

/// Estimate moments for every requested tuple length on common paths.
pub fn run_moments_joint(
    cfg: &APConfig,
    ks: &[usize],
    path: &PathParams,
    trials: usize,
    seed: u64,
) -> Result<JointMomentRun, EstimatorError> {
    if trials == 0 {
        return Err(EstimatorError::TooFewTrials(1));
    }
    let start = Instant::now();
    let per_trial: Vec<Result<Vec<(u64, BTreeMap<u32, u64>)>, EstimatorError>> = (0..trials)
        .into_par_iter()
        .map(|t| {
            let p = sample_path_stream(cfg.dim, path.horizon, path.dt_base, seed, t as u64)?;
            let cells = hit_cells(&p, cfg.eps, cfg.domain_radius);
            let stats = enumerate_x_multi(&cells, cfg, ks, 0)?;
            Ok(stats
                .into_iter()
                .map(|s| (s.x_total, s.bucket_counts))
                .collect())
        })
        .collect();

    let mut ks_sorted = ks.to_vec();
    ks_sorted.sort_unstable();
    ks_sorted.dedup();
    let nk = ks_sorted.len();
    let mut per_path = vec![Vec::with_capacity(trials); nk];
    let mut w_x = vec![Welford::default(); nk];
    let mut w_x2 = vec![Welford::default(); nk];
    let mut positives = vec![0u64; nk];
    let mut bucket_sums: Vec<BTreeMap<u32, u64>> = vec![BTreeMap::new(); nk];
    for r in per_trial {
        let r = r?;
        for (i, (x, buckets)) in r.into_iter().enumerate() {
            per_path[i].push(x);
            let xf = x as f64;
            w_x[i].add(xf);
            w_x2[i].add(xf * xf);
            if x > 0 {
                positives[i] += 1;
            }
            for (b, c) in buckets {
                *bucket_sums[i].entry(b).or_insert(0) += c;
            }
        }
    }
    let runtime = start.elapsed().as_secs_f64();
    let reports = (0..nk)
        .map(|i| {
            let (p, se_p) = proportion(positives[i], trials as u64);
            MomentReport {
                eps: cfg.eps,
                k: ks_sorted[i],
                trials,
                mean_x: w_x[i].mean(),
                stderr_x: w_x[i].stderr(),
                mean_x2: w_x2[i].mean(),
                stderr_x2: w_x2[i].stderr(),
                p_positive: p,
                stderr_p: se_p,
                bucket_profile: bucket_sums[i]
                    .iter()
                    .map(|(&b, &c)| (b, c as f64 / trials as f64))
                    .collect(),
                seed,
                runtime_secs: runtime,
            }
        })
        .collect();
    Ok(JointMomentRun { reports, per_path })
}

/// Single-length moment run.
pub fn run_moments(
    cfg: &APConfig,
    path: &PathParams,
    trials: usize,
    seed: u64,
) -> Result<MomentReport, EstimatorError> {
    Ok(run_moments_joint(cfg, &[cfg.k], path, trials, seed)?
        .reports
        .pop()
        .unwrap())
}

/// One rung of a scaling ladder.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ScalingPoint {
    pub eps: f64,
    pub trials: usize,
    pub mean_x: f64,
    pub stderr_x: f64,
    pub p_positive: f64,
    pub stderr_p: f64,
}

/// Moment statistics across a geometric eps ladder with common random
/// numbers, and the weighted log-log slope of the mean count.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ScalingSeries {
    pub k: usize,
    pub points: Vec<ScalingPoint>,
    pub slope: Option<f64>,
    pub slope_stderr: Option<f64>,
    pub seed: u64,
}

/// Validate that a ladder is geometric (constant ratio within 1%).
pub fn check_ladder(ladder: &[f64]) -> Result<(), EstimatorError> {
    if ladder.len() < 3 {
        return Err(EstimatorError::BadLadder(format!(
            "{} rungs",
            ladder.len()
        )));
    }
    if ladder.iter().any(|&e| e <= 0.0) {
        return Err(EstimatorError::BadLadder("nonpositive rung".into()));
    }
    let r0 = ladder[1] / ladder[0];
    for w in ladder.windows(2) {
        let r = w[1] / w[0];
        if (r / r0 - 1.0).abs() > 0.01 {
            return Err(EstimatorError::BadLadder("ratios differ".into()));
        }
    }
    Ok(())
}

/// Run the ladder; `trials_per_rung` may shrink for fine rungs (trial i of
/// every rung shares stream i, preserving common random numbers on the
/// shared prefix).
pub fn run_scaling(
    cfg_template: &APConfig,
    ladder: &[f64],
    trials_per_rung: &[usize],
    path: &PathParams,
    seed: u64,
) -> Result<ScalingSeries, EstimatorError> {
    check_ladder(ladder)?;
    if trials_per_rung.len() != ladder.len() {
        return Err(EstimatorError::BadLadder(
            "trials list must match ladder length".into(),
        ));
    }
    let mut points = Vec::with_capacity(ladder.len());
    for (&eps, &trials) in ladder.iter().zip(trials_per_rung) {
        let cfg = APConfig { eps, ..*cfg_template };
        cfg.check()?;
        let run = run_moments(&cfg, path, trials, seed)?;
        points.push(ScalingPoint {
            eps,
            trials,
            mean_x: run.mean_x,
            stderr_x: run.stderr_x,
            p_positive: run.p_positive,
            stderr_p: run.stderr_p,
        });
    }
    let fit_input: Vec<(f64, f64, f64)> = points
        .iter()
        .map(|p| (p.eps, p.mean_x, p.stderr_x))
        .collect();
    let fit = loglog_slope(&fit_input);
    Ok(ScalingSeries {
        k: cfg_template.k,
        points,
        slope: fit.map(|f| f.0),
        slope_stderr: fit.map(|f| f.1),
        seed,
    })
}

/// Nesting check: on each path, a positive count at scale lambda * eps
/// must come with a positive count at scale eps. Both scales are read off
/// one skeleton refined for the finer scale, so the implication reduces to
/// the snapping arithmetic it is meant to exercise.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct NestingReport {
    pub eps: f64,
    pub lambda: f64,
    pub trials: usize,
    pub coarse_positive: usize,
    pub fine_checked: usize,
    pub fine_positive: usize,
    pub violations: usize,
    pub violation_fraction: f64,
    pub seed: u64,
    pub runtime_secs: f64,
}

pub fn run_nesting(
    cfg_template: &APConfig,
    path: &PathParams,
    trials: usize,
    eps: f64,
    lambda: f64,
    seed: u64,
) -> Result<NestingReport, EstimatorError> {
    if trials == 0 {
        return Err(EstimatorError::TooFewTrials(1));
    }
    let coarse_cfg = APConfig { eps, ..*cfg_template };
    coarse_cfg.check()?;
    let fine_cfg = APConfig { eps: eps * lambda, ..*cfg_template };
    fine_cfg.check()?;
    let start = Instant::now();

    // outcome per path: (coarse_positive, fine_checked, fine_positive)
    let outcomes: Vec<Result<(bool, bool, bool), EstimatorError>> = (0..trials)
        .into_par_iter()
        .map(|t| {
            let p = sample_path_stream(
                cfg_template.dim,
                path.horizon,
                path.dt_base,
                seed,
                t as u64,
            )?;
            let focus = Point::origin(cfg_template.dim).unwrap();
            let vertices = refine_near(
                &p,
                &focus,
                cfg_template.domain_radius + eps,
                fine_cfg.eps / 8.0,
            );
            let coarse_cells = hit_cells_from_vertices(
                &vertices,
                eps,
                cfg_template.domain_radius,
                cfg_template.dim,
            );
            if any_tuple(&coarse_cells, &coarse_cfg)? {
                // implication cannot fail on this path
                return Ok((true, false, false));
            }
            let fine_cells = hit_cells_from_vertices(
                &vertices,
                fine_cfg.eps,
                cfg_template.domain_radius,
                cfg_template.dim,
            );
            let fine_pos = any_tuple(&fine_cells, &fine_cfg)?;
            Ok((false, true, fine_pos))
        })
        .collect();

    let mut coarse_positive = 0;
    let mut fine_checked = 0;
    let mut fine_positive = 0;
    let mut violations = 0;
    for o in outcomes {
        let (cp, fc, fp) = o?;
        coarse_positive += cp as usize;
        fine_checked += fc as usize;
        fine_positive += fp as usize;
        violations += (fp && fc) as usize;
    }
    Ok(NestingReport {
        eps,
        lambda,
        trials,
        coarse_positive,
        fine_checked,
        fine_positive,
        violations,
        violation_fraction: violations as f64 / trials as f64,
        seed,
        runtime_secs: start.elapsed().as_secs_f64(),
    })
}

/// Conditional covariance of the window-count positivity indicators
/// around a fixed anchor, conditioning on the anchor hit event by
/// rejection.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CovarianceReport {
    pub eps: f64,
    pub k: usize,
    pub anchor: Vec<Vec<f64>>,
    pub trials: usize,
    pub accepted: usize,
    pub acceptance_rate: f64,
    pub scales: Vec<u32>,
    /// scale -> (P(X_k > 0 | anchor hit), stderr)
    pub p_window: BTreeMap<u32, (f64, f64)>,
    /// (k, l) -> (cov estimate, stderr)
    pub cov: Vec<((u32, u32), (f64, f64))>,
    pub seed: u64,
    pub runtime_secs: f64,
}

/// Default exact-grid anchor: a centered axis-aligned AP with the widest
/// admissible gap that keeps all points inside the domain.
pub fn default_anchor(cfg: &APConfig) -> Result<APCandidate, EstimatorError> {
    let spacing = cfg.eps / 3.0;
    let reach = 0.9 * cfg.domain_radius;
    let half_span = reach.min((cfg.k - 1) as f64 * 0.5 * cfg.domain_radius);
    let gap_cells = (half_span * 2.0 / (cfg.k - 1) as f64 / spacing).floor() as i32;
    let gap = gap_cells as f64 * spacing;
    if gap < cfg.gap_floor() {
        return Err(EstimatorError::BadLadder(
            "no admissible anchor gap for this config".into(),
        ));
    }
    let offset = (cfg.k as i32 - 1) * gap_cells / 2;
    let pts: Vec<Point> = (0..cfg.k)
        .map(|i| {
            let mut c = vec![0.0; cfg.dim];
            c[0] = (i as i32 * gap_cells - offset) as f64 * spacing;
            Point::new(&c).unwrap()
        })
        .collect();
    Ok(APCandidate::new(pts, cfg)?)
}

pub fn run_covariance(
    cfg: &APConfig,
    anchor: &APCandidate,
    path: &PathParams,
    trials: usize,
    acceptance_floor: f64,
    seed: u64,
) -> Result<CovarianceReport, EstimatorError> {
    if trials == 0 {
        return Err(EstimatorError::TooFewTrials(1));
    }
    let start = Instant::now();
    let scales: Vec<u32> = scale_range(cfg)?.collect();
    let balls: Vec<BallSpec> = anchor
        .points
        .iter()
        .map(|p| BallSpec::new(*p, cfg.eps))
        .collect();

    // rejection stage: keep only paths hitting every anchor ball
    let indicator_rows: Vec<Result<Option<Vec<bool>>, EstimatorError>> = (0..trials)
        .into_par_iter()
        .map(|t| {
            let p = sample_path_stream(cfg.dim, path.horizon, path.dt_base, seed, t as u64)?;
            for b in &balls {
                if !hits_ball(&p, b, RefinePolicy::Bridge)? {
                    return Ok(None);
                }
            }
            let cells = hit_cells(&p, cfg.eps, cfg.domain_radius);
            let counts = window_counts(&cells, anchor, cfg)?;
            Ok(Some(
                scales.iter().map(|s| counts.get(s).copied().unwrap_or(0) > 0).collect(),
            ))
        })
        .collect();

    let mut rows: Vec<Vec<bool>> = Vec::new();
    for r in indicator_rows {
        if let Some(row) = r? {
            rows.push(row);
        }
    }
    let accepted = rows.len();
    let rate = accepted as f64 / trials as f64;
    if rate < acceptance_floor {
        return Err(EstimatorError::AcceptanceTooLow { rate, floor: acceptance_floor });
    }

    let n = accepted as f64;
    let mut p_window = BTreeMap::new();
    for (i, &s) in scales.iter().enumerate() {
        let hits = rows.iter().filter(|r| r[i]).count() as u64;
        p_window.insert(s, proportion(hits, accepted as u64));
    }
    let mut cov = Vec::new();
    for (i, &si) in scales.iter().enumerate() {
        for (j, &sj) in scales.iter().enumerate() {
            if j < i {
                continue;
            }
            let mean_a = rows.iter().filter(|r| r[i]).count() as f64 / n;
            let mean_b = rows.iter().filter(|r| r[j]).count() as f64 / n;
            let mut w = Welford::default();
            for r in &rows {
                let a = r[i] as u8 as f64 - mean_a;
                let b = r[j] as u8 as f64 - mean_b;
                w.add(a * b);
            }
            cov.push(((si, sj), (w.mean(), w.stderr())));
        }
    }
    Ok(CovarianceReport {
        eps: cfg.eps,
        k: cfg.k,
        anchor: anchor
            .points
            .iter()
            .map(|p| p.coords().to_vec())
            .collect(),
        trials,
        accepted,
        acceptance_rate: rate,
        scales,
        p_window,
        cov,
        seed,
        runtime_secs: start.elapsed().as_secs_f64(),
    })
}

/// Excursion-count tail for a family of centers at entry radius r and
/// exit radius s.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExcursionReport {
    pub r: f64,
    pub s: f64,
    pub trials: usize,
    pub histogram: BTreeMap<u32, u64>,
    /// (m, empirical P(M >= m), stderr)
    pub tail: Vec<(u32, f64, f64)>,
    pub ratio: Option<f64>,
    pub ratio_stderr: Option<f64>,
    pub seed: u64,
    pub runtime_secs: f64,
}

pub fn run_excursion_tail(
    centers: &[Point],
    r: f64,
    s: f64,
    path: &PathParams,
    trials: usize,
    seed: u64,
) -> Result<ExcursionReport, EstimatorError> {
    if trials == 0 {
        return Err(EstimatorError::TooFewTrials(1));
    }
    let start = Instant::now();
    let dim = centers
        .first()
        .map(|c| c.dim())
        .ok_or(EstimatorError::TooFewTrials(1))?;
    let balls: Vec<BallSpec> = centers.iter().map(|c| BallSpec::new(*c, r)).collect();
    let counts: Vec<Result<u32, EstimatorError>> = (0..trials)
        .into_par_iter()
        .map(|t| {
            let p = sample_path_stream(dim, path.horizon, path.dt_base, seed, t as u64)?;
            Ok(excursion_count(&p, &balls, r, s)?)
        })
        .collect();
    let mut histogram: BTreeMap<u32, u64> = BTreeMap::new();
    let mut ms: Vec<u32> = Vec::with_capacity(trials);
    for c in counts {
        let m = c?;
        *histogram.entry(m).or_insert(0) += 1;
        ms.push(m);
    }
    let max_m = histogram.keys().max().copied().unwrap_or(0);
    let mut tail = Vec::new();
    let n = trials as u64;
    for m in 1..=max_m {
        let ge: u64 = histogram
            .iter()
            .filter(|(&mm, _)| mm >= m)
            .map(|(_, &c)| c)
            .sum();
        let (p, se) = proportion(ge, n);
        tail.push((m, p, se));
    }
    // geometric fit over the entered trials only
    let entered: Vec<u32> = ms.iter().copied().filter(|&m| m >= 1).collect();
    let fit = geometric_ratio(&entered);
    Ok(ExcursionReport {
        r,
        s,
        trials,
        histogram,
        tail,
        ratio: fit.map(|f| f.0),
        ratio_stderr: fit.map(|f| f.1),
        seed,
        runtime_secs: start.elapsed().as_secs_f64(),
    })
}

/// Distribution of exact 3-AP counts in the range of an n-step walk.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LdpPoint {
    pub n: usize,
    pub trials: usize,
    pub mean: f64,
    pub stderr: f64,
    pub variance: f64,
    pub histogram: BTreeMap<u64, u64>,
    pub q90: f64,
    pub q99: f64,
    /// Ranges conditioned on counts at or above the dump quantile,
    /// serialized as sorted site lists.
    pub conditioned_ranges: Vec<Vec<Vec<i64>>>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LdpReport {
    pub d: usize,
    pub points: Vec<LdpPoint>,
    /// log-log growth of the mean count in n, when measurable.
    pub growth_exponent: Option<f64>,
    pub growth_stderr: Option<f64>,
    /// True when the step budget cut the ladder short.
    pub partial: bool,
    pub seed: u64,
    pub runtime_secs: f64,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct LdpOptions {
    /// Dump ranges whose count reaches this quantile of the empirical
    /// distribution (None disables dumps).
    pub dump_quantile: Option<f64>,
    pub dump_max: usize,
    /// Abort (flag partial) once n * trials across rungs exceeds this.
    pub step_budget: u64,
}

impl Default for LdpOptions {
    fn default() -> Self {
        Self { dump_quantile: None, dump_max: 8, step_budget: 2_000_000_000 }
    }
}

pub fn run_ldp(
    d: usize,
    n_ladder: &[usize],
    trials: usize,
    seed: u64,
    opts: &LdpOptions,
) -> Result<LdpReport, EstimatorError> {
    if trials == 0 || n_ladder.is_empty() {
        return Err(EstimatorError::TooFewTrials(1));
    }
    let start = Instant::now();
    let mut points = Vec::new();
    let mut spent = 0u64;
    let mut partial = false;
    for (rung, &n) in n_ladder.iter().enumerate() {
        let cost = n as u64 * trials as u64;
        if spent + cost > opts.step_budget {
            partial = true;
            break;
        }
        spent += cost;
        let counts: Vec<Result<(u64, Option<Vec<Vec<i64>>>), EstimatorError>> = (0..trials)
            .into_par_iter()
            .map(|t| {
                // stream space partitioned by rung so rungs stay independent
                let stream = (rung as u64) << 32 | t as u64;
                let range = walk_range_stream(d, n, seed, stream)?;
                let c = crate::detector::count_3aps_exact(&range);
                let sites = if opts.dump_quantile.is_some() {
                    Some(
                        range
                            .sorted_sites()
                            .iter()
                            .map(|s| s[..d].to_vec())
                            .collect(),
                    )
                } else {
                    None
                };
                Ok((c, sites))
            })
            .collect();
        let mut w = Welford::default();
        let mut histogram: BTreeMap<u64, u64> = BTreeMap::new();
        let mut cs: Vec<f64> = Vec::with_capacity(trials);
        let mut dumps_pool: Vec<(u64, Vec<Vec<i64>>)> = Vec::new();
        for c in counts {
            let (count, sites) = c?;
            w.add(count as f64);
            *histogram.entry(count).or_insert(0) += 1;
            cs.push(count as f64);
            if let Some(sites) = sites {
                dumps_pool.push((count, sites));
            }
        }
        cs.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let q90 = quantile_sorted(&cs, 0.90);
        let q99 = quantile_sorted(&cs, 0.99);
        let conditioned_ranges = match opts.dump_quantile {
            Some(q) => {
                let thresh = quantile_sorted(&cs, q);
                dumps_pool
                    .into_iter()
                    .filter(|(c, _)| *c as f64 >= thresh)
                    .take(opts.dump_max)
                    .map(|(_, s)| s)
                    .collect()
            }
            None => Vec::new(),
        };
        points.push(LdpPoint {
            n,
            trials,
            mean: w.mean(),
            stderr: w.stderr(),
            variance: w.variance(),
            histogram,
            q90,
            q99,
            conditioned_ranges,
        });
    }
    let fit_input: Vec<(f64, f64, f64)> = points
        .iter()
        .filter(|p| p.mean > 0.0)
        .map(|p| (p.n as f64, p.mean, p.stderr.max(1e-9)))
        .collect();
    let fit = if fit_input.len() >= 2 {
        loglog_slope(&fit_input)
    } else {
        None
    };
    Ok(LdpReport {
        d,
        points,
        growth_exponent: fit.map(|f| f.0),
        growth_stderr: fit.map(|f| f.1),
        partial,
        seed,
        runtime_secs: start.elapsed().as_secs_f64(),
    })
}

/// Hitting-rate estimate for one ball, the verification primitive.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct HitRateReport {
    pub trials: usize,
    pub hits: u64,
    pub rate: f64,
    pub stderr: f64,
    pub seed: u64,
    pub runtime_secs: f64,
}

pub fn run_hit_rate(
    ball: &BallSpec,
    dim: usize,
    path: &PathParams,
    trials: usize,
    seed: u64,
) -> Result<HitRateReport, EstimatorError> {
    if trials == 0 {
        return Err(EstimatorError::TooFewTrials(1));
    }
    let start = Instant::now();
    let hits: Vec<Result<bool, EstimatorError>> = (0..trials)
        .into_par_iter()
        .map(|t| {
            let p = sample_path_stream(dim, path.horizon, path.dt_base, seed, t as u64)?;
            Ok(hits_ball(&p, ball, RefinePolicy::Bridge)?)
        })
        .collect();
    let mut count = 0u64;
    for h in hits {
        count += h? as u64;
    }
    let (rate, se) = proportion(count, trials as u64);
    Ok(HitRateReport {
        trials,
        hits: count,
        rate,
        stderr: se,
        seed,
        runtime_secs: start.elapsed().as_secs_f64(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn moments_smoke_k2() {
        let cfg = APConfig::new(2, 0.25, 0.6, 3).unwrap();
        let r = run_moments(&cfg, &PathParams::default(), 1, 7).unwrap();
        assert!(r.p_positive == 0.0 || r.p_positive == 1.0);
        assert!(r.mean_x >= 0.0);
    }

    #[test]
    fn moments_variance_nonnegative() {
        let cfg = APConfig::new(5, 0.0625, 0.4, 3).unwrap();
        let r = run_moments(&cfg, &PathParams::default(), 16, 11).unwrap();
        assert!(r.mean_x2 + 1e-9 >= r.mean_x * r.mean_x);
        assert!((0.0..=1.0).contains(&r.p_positive));
    }

    #[test]
    fn joint_run_shares_paths() {
        let cfg = APConfig::new(5, 0.0625, 0.4, 3).unwrap();
        let joint = run_moments_joint(&cfg, &[5, 6], &PathParams::default(), 6, 3).unwrap();
        assert_eq!(joint.reports.len(), 2);
        assert_eq!(joint.per_path[0].len(), 6);
        // rerun reproduces exactly
        let again = run_moments_joint(&cfg, &[5, 6], &PathParams::default(), 6, 3).unwrap();
        assert_eq!(joint.per_path, again.per_path);
    }

    #[test]
    fn ladder_validation() {
        assert!(check_ladder(&[0.125, 0.0625, 0.03125]).is_ok());
        assert!(check_ladder(&[0.125, 0.0625]).is_err());
        assert!(check_ladder(&[0.125, 0.07, 0.03]).is_err());
    }

    #[test]
    fn ldp_zero_steps() {
        let r = run_ldp(3, &[0], 10, 5, &LdpOptions::default()).unwrap();
        assert_eq!(r.points[0].mean, 0.0);
        assert_eq!(r.points[0].histogram.get(&0), Some(&10));
    }

    #[test]
    fn stderr_scaling_sanity() {
        // doubling trials shrinks the stderr of the mean by ~sqrt(2)
        let cfg = APConfig::new(5, 0.0625, 0.4, 3).unwrap();
        let path = PathParams { horizon: 0.5, dt_base: 1e-3 };
        let a = run_moments(&cfg, &path, 40, 19).unwrap();
        let b = run_moments(&cfg, &path, 80, 19).unwrap();
        let ratio = a.stderr_x / b.stderr_x;
        assert!(
            (ratio - std::f64::consts::SQRT_2).abs() < 0.2 * std::f64::consts::SQRT_2 + 0.35,
            "ratio {ratio}"
        );
    }
}
