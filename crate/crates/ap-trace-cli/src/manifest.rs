//! Experiment manifests: the full parameter block of a run, its CLI
//! surface, and validation. A manifest round-trips through JSON
//! losslessly and every report embeds a hash of its worker-independent
//! part.

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};
use std::path::PathBuf;

pub const MANIFEST_SCHEMA_VERSION: u32 = 1;

#[derive(Parser, Debug)]
#[command(name = "ap-trace", version, about = "Monte Carlo experiments on arithmetic progressions in Brownian traces and random-walk ranges")]
pub struct Cli {
    /// Worker threads (falls back to AP_TRACE_THREADS, then all cores)
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// Output directory for report.json and series.csv
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    #[command(subcommand)]
    pub cmd: Command,
}

#[derive(Args, Debug, Clone)]
pub struct CommonArgs {
    /// Ambient dimension
    #[arg(long, default_value_t = 3)]
    pub dim: usize,
    /// Separation scale delta
    #[arg(long, default_value_t = 0.1)]
    pub delta: f64,
    /// Domain ball radius
    #[arg(long, default_value_t = 1.0)]
    pub domain_radius: f64,
    /// Path horizon T
    #[arg(long, default_value_t = 1.0)]
    pub horizon: f64,
    /// Base sampling step
    #[arg(long, default_value_t = 1e-3)]
    pub dt_base: f64,
    /// Base seed; trial i draws from stream i
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Cap on retained tuple records
    #[arg(long, default_value_t = 1_000_000)]
    pub cap: usize,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Estimate E[X], E[X^2], P(X>0) at one scale
    Moments {
        #[command(flatten)]
        common: CommonArgs,
        /// Tuple length k
        #[arg(long, default_value_t = 5)]
        k: usize,
        /// Approximation scale eps
        #[arg(long)]
        eps: f64,
        #[arg(long, default_value_t = 100)]
        trials: usize,
    },
    /// Moment statistics across a geometric eps ladder
    Scaling {
        #[command(flatten)]
        common: CommonArgs,
        #[arg(long, default_value_t = 5)]
        k: usize,
        /// Comma-separated eps ladder, e.g. 0.0625,0.03125,0.015625
        #[arg(long, value_delimiter = ',')]
        ladder: Vec<f64>,
        /// Trials per rung: one value, or one per rung
        #[arg(long, value_delimiter = ',', default_value = "100")]
        trials: Vec<usize>,
    },
    /// Check X(lambda eps) > 0 implies X(eps) > 0 pathwise
    Nesting {
        #[command(flatten)]
        common: CommonArgs,
        #[arg(long, default_value_t = 5)]
        k: usize,
        #[arg(long)]
        eps: f64,
        #[arg(long, default_value_t = 0.25)]
        lambda: f64,
        #[arg(long, default_value_t = 1000)]
        trials: usize,
    },
    /// Conditional covariance of window indicators around an anchor
    Covariance {
        #[command(flatten)]
        common: CommonArgs,
        #[arg(long, default_value_t = 3)]
        k: usize,
        #[arg(long)]
        eps: f64,
        #[arg(long, default_value_t = 10_000)]
        trials: usize,
        /// Abort when the conditioning acceptance rate falls below this
        #[arg(long, default_value_t = 0.002)]
        floor: f64,
    },
    /// Excursion-count tail for the single-ball radial experiment
    Excursion {
        #[command(flatten)]
        common: CommonArgs,
        /// Entry radius
        #[arg(long)]
        r: f64,
        /// Exit radius
        #[arg(long)]
        s: f64,
        #[arg(long, default_value_t = 100_000)]
        trials: usize,
    },
    /// Distribution of exact 3-AP counts in the walk range
    Ldp {
        #[command(flatten)]
        common: CommonArgs,
        /// Comma-separated ladder of step counts
        #[arg(long, value_delimiter = ',')]
        n: Vec<usize>,
        #[arg(long, default_value_t = 10_000)]
        trials: usize,
        /// Compare against the exhaustive d=1 oracle (n <= 12)
        #[arg(long, default_value_t = false)]
        exact: bool,
        /// Dump ranges with counts at or above this quantile
        #[arg(long)]
        dump_quantile: Option<f64>,
    },
    /// Exact references: exhaustive d=1 walk distribution
    Oracle {
        #[command(flatten)]
        common: CommonArgs,
        /// Walk length for the exhaustive distribution (n <= 12)
        #[arg(long)]
        n: usize,
    },
    /// Validate a manifest file and list violations
    Validate {
        /// Manifest JSON to check
        #[arg(long)]
        manifest: PathBuf,
    },
}

/// Full parameter block of one experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentManifest {
    pub schema_version: u32,
    pub kind: String,
    pub dim: usize,
    pub delta: f64,
    pub domain_radius: f64,
    pub horizon: f64,
    pub dt_base: f64,
    pub seed: u64,
    pub cap: usize,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub k: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub eps: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub trials: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub ladder: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub trials_per_rung: Option<Vec<usize>>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub n_ladder: Option<Vec<usize>>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub lambda: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub r: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub s: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub exact: Option<bool>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub acceptance_floor: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub dump_quantile: Option<f64>,
    /// Worker count and output path are delivery details: recorded here,
    /// excluded from the manifest hash.
    pub workers: usize,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub out: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Violation {
    pub field: String,
    pub message: String,
}

fn ap_violations(out: &mut Vec<Violation>, dim: usize, k: usize, eps: f64, delta: f64, radius: f64) {
    if !(1..=5).contains(&dim) {
        out.push(Violation { field: "dim".into(), message: "dim must be 1..=5".into() });
    }
    if !(2..=8).contains(&k) {
        out.push(Violation { field: "k".into(), message: "k must be 2..=8".into() });
    }
    if !(eps > 0.0 && eps.is_finite()) {
        out.push(Violation { field: "eps".into(), message: "eps must be positive".into() });
    }
    if !(delta > 0.0 && delta.is_finite()) {
        out.push(Violation { field: "delta".into(), message: "delta must be positive".into() });
    }
    if eps > 0.0 && delta > 0.0 {
        if eps >= delta / 4.0 {
            out.push(Violation {
                field: "eps".into(),
                message: format!("eps < delta/4 required, got eps = {eps}, delta = {delta}"),
            });
        }
        if delta > 2.0 * radius {
            out.push(Violation {
                field: "delta".into(),
                message: "delta exceeds the domain diameter".into(),
            });
        }
    }
    if !(radius > 0.0 && radius.is_finite()) {
        out.push(Violation {
            field: "domain_radius".into(),
            message: "domain_radius must be positive".into(),
        });
    }
}

/// Check a manifest; an empty list means runnable.
pub fn validate(m: &ExperimentManifest) -> Vec<Violation> {
    let mut v = Vec::new();
    if m.horizon <= 0.0 || m.dt_base <= 0.0 {
        v.push(Violation {
            field: "horizon/dt_base".into(),
            message: "horizon and dt_base must be positive".into(),
        });
    }
    let need_trials = |v: &mut Vec<Violation>, t: Option<usize>| {
        if t.unwrap_or(0) == 0 {
            v.push(Violation { field: "trials".into(), message: "trials must be >= 1".into() });
        }
    };
    match m.kind.as_str() {
        "moments" => {
            ap_violations(&mut v, m.dim, m.k.unwrap_or(0), m.eps.unwrap_or(0.0), m.delta, m.domain_radius);
            need_trials(&mut v, m.trials);
        }
        "scaling" => {
            let ladder = m.ladder.clone().unwrap_or_default();
            if ladder.len() < 3 {
                v.push(Violation {
                    field: "ladder".into(),
                    message: "ladder needs at least 3 rungs".into(),
                });
            } else {
                let r0 = ladder[1] / ladder[0];
                if ladder.windows(2).any(|w| (w[1] / w[0] / r0 - 1.0).abs() > 0.01) {
                    v.push(Violation {
                        field: "ladder".into(),
                        message: "ladder must be geometric".into(),
                    });
                }
            }
            for &eps in &ladder {
                ap_violations(&mut v, m.dim, m.k.unwrap_or(0), eps, m.delta, m.domain_radius);
            }
            if let Some(tpr) = &m.trials_per_rung {
                if tpr.len() != ladder.len() && tpr.len() != 1 {
                    v.push(Violation {
                        field: "trials".into(),
                        message: "trials list must have one entry or one per rung".into(),
                    });
                }
                if tpr.iter().any(|&t| t == 0) {
                    v.push(Violation { field: "trials".into(), message: "trials must be >= 1".into() });
                }
            }
        }
        "nesting" => {
            let eps = m.eps.unwrap_or(0.0);
            let lambda = m.lambda.unwrap_or(0.0);
            ap_violations(&mut v, m.dim, m.k.unwrap_or(0), eps, m.delta, m.domain_radius);
            if !(lambda > 0.0 && lambda < 1.0) {
                v.push(Violation {
                    field: "lambda".into(),
                    message: "lambda must lie in (0, 1)".into(),
                });
            } else {
                ap_violations(&mut v, m.dim, m.k.unwrap_or(0), eps * lambda, m.delta, m.domain_radius);
            }
            need_trials(&mut v, m.trials);
        }
        "covariance" => {
            ap_violations(&mut v, m.dim, m.k.unwrap_or(0), m.eps.unwrap_or(0.0), m.delta, m.domain_radius);
            need_trials(&mut v, m.trials);
            match m.acceptance_floor {
                Some(f) if f > 0.0 && f < 1.0 => {}
                _ => v.push(Violation {
                    field: "floor".into(),
                    message: "acceptance floor must lie in (0, 1)".into(),
                }),
            }
        }
        "excursion" => {
            let (r, s) = (m.r.unwrap_or(0.0), m.s.unwrap_or(0.0));
            if !(r > 0.0 && r < s) {
                v.push(Violation { field: "r/s".into(), message: "need 0 < r < s".into() });
            }
            need_trials(&mut v, m.trials);
        }
        "ldp" => {
            if m.n_ladder.as_deref().unwrap_or(&[]).is_empty() {
                v.push(Violation { field: "n".into(), message: "need at least one n".into() });
            }
            if m.exact == Some(true) {
                if m.dim != 1 {
                    v.push(Violation {
                        field: "exact".into(),
                        message: "exact comparison requires dim = 1".into(),
                    });
                }
                if m.n_ladder.as_deref().unwrap_or(&[]).iter().any(|&n| n > 12) {
                    v.push(Violation {
                        field: "exact".into(),
                        message: "exhaustive oracle needs n <= 12".into(),
                    });
                }
            }
            if let Some(q) = m.dump_quantile {
                if !(0.0..=1.0).contains(&q) {
                    v.push(Violation {
                        field: "dump_quantile".into(),
                        message: "quantile must lie in [0, 1]".into(),
                    });
                }
            }
            need_trials(&mut v, m.trials);
            if !(1..=5).contains(&m.dim) {
                v.push(Violation { field: "dim".into(), message: "dim must be 1..=5".into() });
            }
        }
        "oracle" => {
            if m.n_ladder.as_deref().unwrap_or(&[]).first().copied().unwrap_or(99) > 12 {
                v.push(Violation { field: "n".into(), message: "exhaustive oracle needs n <= 12".into() });
            }
        }
        other => v.push(Violation { field: "kind".into(), message: format!("unknown kind {other}") }),
    }
    v
}

#[cfg(test)]
mod tests {
    use super::*;

    fn base(kind: &str) -> ExperimentManifest {
        ExperimentManifest {
            schema_version: MANIFEST_SCHEMA_VERSION,
            kind: kind.into(),
            dim: 3,
            delta: 0.4,
            domain_radius: 1.0,
            horizon: 1.0,
            dt_base: 1e-3,
            seed: 7,
            cap: 1000,
            k: Some(5),
            eps: Some(0.0625),
            trials: Some(10),
            ladder: None,
            trials_per_rung: None,
            n_ladder: None,
            lambda: None,
            r: None,
            s: None,
            exact: None,
            acceptance_floor: None,
            dump_quantile: None,
            workers: 1,
            out: None,
        }
    }

    #[test]
    fn valid_default_is_clean() {
        assert!(validate(&base("moments")).is_empty());
    }

    #[test]
    fn eps_equal_delta_flagged() {
        let mut m = base("moments");
        m.eps = Some(0.4);
        let v = validate(&m);
        assert!(v.iter().any(|x| x.message.contains("eps < delta/4")), "{v:?}");
    }

    #[test]
    fn empty_ladder_flagged() {
        let mut m = base("scaling");
        m.ladder = Some(vec![]);
        let v = validate(&m);
        assert!(v.iter().any(|x| x.field == "ladder"));
    }

    #[test]
    fn manifest_roundtrip() {
        let mut m = base("scaling");
        m.ladder = Some(vec![0.0625, 0.03125, 0.015625]);
        m.trials_per_rung = Some(vec![16, 8, 4]);
        let s = serde_json::to_string(&m).unwrap();
        let back: ExperimentManifest = serde_json::from_str(&s).unwrap();
        assert_eq!(m, back);
    }
}
