//! Brute-force references for the fast detectors, plus closed-form
//! reference probabilities. Oracles re-evaluate the membership formulas
//! directly over plain nested scans; they share no data structures or
//! search strategy with the production enumerators.

use crate::detector::{bucket_of, CountStatistic};
use crate::geometry::{APCandidate, APConfig, Point, MAX_DIM};
use crate::grid::CellSet;
use crate::srw::RangeSet;
use num_bigint::BigInt;
use num_rational::BigRational;
use std::collections::BTreeMap;
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum OracleError {
    #[error("oracle budget exceeded: {0}")]
    BudgetExceeded(String),
    #[error("oracle input invalid: {0}")]
    BadInput(String),
}

/// Hard caps for exhaustive scans.
#[derive(Debug, Clone, Copy)]
pub struct OracleBudget {
    pub max_cells: usize,
    pub max_sites: usize,
    pub max_tuples: u64,
}

impl Default for OracleBudget {
    fn default() -> Self {
        Self { max_cells: 300, max_sites: 500, max_tuples: 5_000_000 }
    }
}

#[inline]
fn dist(a: &[f64], b: &[f64], dim: usize) -> f64 {
    let mut s = 0.0;
    for i in 0..dim {
        let d = a[i] - b[i];
        s += d * d;
    }
    s.sqrt()
}

/// Exhaustive enumeration of admissible tuples by plain recursive scans
/// over the full cell list, with the membership inequalities evaluated
/// inline at each level.
pub fn brute_enumerate_x(
    cells: &CellSet,
    cfg: &APConfig,
    budget: &OracleBudget,
) -> Result<CountStatistic, OracleError> {
    cfg.check().map_err(|e| OracleError::BadInput(e.to_string()))?;
    if cells.len() > budget.max_cells {
        return Err(OracleError::BudgetExceeded(format!(
            "{} cells > {}",
            cells.len(),
            budget.max_cells
        )));
    }
    let dim = cfg.dim;
    let spacing = cells.spacing();
    if (spacing - cfg.eps / 3.0).abs() > 1e-12 * (cfg.eps / 3.0).max(1.0) {
        return Err(OracleError::BadInput("spacing does not match eps/3".into()));
    }

    // centers and norms, in the cell set's canonical order, domain-filtered
    let mut centers: Vec<[f64; MAX_DIM]> = Vec::new();
    let mut ints: Vec<[i32; MAX_DIM]> = Vec::new();
    for c in cells.cells() {
        let mut ctr = [0.0f64; MAX_DIM];
        for a in 0..dim {
            ctr[a] = c.cell()[a] as f64 * spacing;
        }
        if dist(&ctr, &[0.0; MAX_DIM], dim) <= cfg.domain_radius {
            centers.push(ctr);
            let mut ii = [0i32; MAX_DIM];
            ii[..dim].copy_from_slice(&c.cell()[..dim]);
            ints.push(ii);
        }
    }

    let n = centers.len();
    let k = cfg.k;
    let gap_floor = cfg.delta - 2.0 * cfg.eps;
    let tol = 4.0 * cfg.eps;

    let mut x_total = 0u64;
    let mut buckets: BTreeMap<u32, u64> = BTreeMap::new();
    let mut kept: Vec<Vec<usize>> = Vec::new();

    let mut tuple: Vec<usize> = Vec::with_capacity(k);
    // recursive lexicographic scan; positions filled left to right
    fn extend(
        depth: usize,
        k: usize,
        n: usize,
        dim: usize,
        tol: f64,
        gap_floor: f64,
        centers: &[[f64; MAX_DIM]],
        ints: &[[i32; MAX_DIM]],
        tuple: &mut Vec<usize>,
        x_total: &mut u64,
        buckets: &mut BTreeMap<u32, u64>,
        kept: &mut Vec<Vec<usize>>,
        eps: f64,
        max_tuples: u64,
    ) -> Result<(), OracleError> {
        if depth == k {
            // canonical orientation: first lexicographically <= last
            if ints[tuple[0]].as_slice() > ints[tuple[k - 1]].as_slice() {
                return Ok(());
            }
            *x_total += 1;
            if *x_total > max_tuples {
                return Err(OracleError::BudgetExceeded(format!(
                    "more than {max_tuples} tuples"
                )));
            }
            let d0 = tuple
                .iter()
                .map(|&s| dist(&centers[s], &[0.0; MAX_DIM], dim))
                .fold(f64::INFINITY, f64::min);
            *buckets.entry(bucket_of(d0, eps)).or_insert(0) += 1;
            kept.push(tuple.clone());
            return Ok(());
        }
        for cand in 0..n {
            if depth >= 1 {
                let g = dist(&centers[cand], &centers[tuple[depth - 1]], dim);
                if g < gap_floor {
                    continue;
                }
            }
            if depth >= 2 {
                // |x_{i-1} + x_{i+1} - 2 x_i| over the last three
                let a = &centers[tuple[depth - 2]];
                let b = &centers[tuple[depth - 1]];
                let c = &centers[cand];
                let mut s = 0.0;
                for i in 0..dim {
                    let v = a[i] + c[i] - 2.0 * b[i];
                    s += v * v;
                }
                if s.sqrt() > tol {
                    continue;
                }
            }
            tuple.push(cand);
            extend(
                depth + 1,
                k,
                n,
                dim,
                tol,
                gap_floor,
                centers,
                ints,
                tuple,
                x_total,
                buckets,
                kept,
                eps,
                max_tuples,
            )?;
            tuple.pop();
        }
        Ok(())
    }

    extend(
        0,
        k,
        n,
        dim,
        tol,
        gap_floor,
        &centers,
        &ints,
        &mut tuple,
        &mut x_total,
        &mut buckets,
        &mut kept,
        cfg.eps,
        budget.max_tuples,
    )?;

    let mut tuples = Vec::with_capacity(kept.len());
    let mut d0 = Vec::with_capacity(kept.len());
    for slots in kept {
        let points: Vec<Point> = slots
            .iter()
            .map(|&s| Point::new(&centers[s][..dim]).unwrap())
            .collect();
        let dd = points
            .iter()
            .map(|p| p.norm())
            .fold(f64::INFINITY, f64::min);
        let defect = if k >= 3 {
            let mut worst = 0.0f64;
            for w in points.windows(3) {
                let mut s = 0.0;
                for i in 0..dim {
                    let v = w[0].coords()[i] + w[2].coords()[i] - 2.0 * w[1].coords()[i];
                    s += v * v;
                }
                worst = worst.max(s.sqrt());
            }
            worst
        } else {
            0.0
        };
        let min_gap = points
            .windows(2)
            .map(|w| w[0].dist(&w[1]))
            .fold(f64::INFINITY, f64::min);
        tuples.push(APCandidate { points, eps: cfg.eps, defect, min_gap });
        d0.push(dd);
    }

    Ok(CountStatistic {
        k,
        x_total,
        tuples,
        d0,
        truncated: false,
        bucket_counts: buckets,
    })
}

/// Exact unordered nondegenerate 3-AP count by triple scan: every
/// 3-subset is tested for each possible middle element.
pub fn brute_3aps(range: &RangeSet, budget: &OracleBudget) -> Result<u64, OracleError> {
    if range.len() > budget.max_sites {
        return Err(OracleError::BudgetExceeded(format!(
            "{} sites > {}",
            range.len(),
            budget.max_sites
        )));
    }
    let sites = range.sorted_sites();
    let d = range.d;
    let is_middle = |a: &[i64; MAX_DIM], m: &[i64; MAX_DIM], b: &[i64; MAX_DIM]| {
        (0..d).all(|t| a[t] + b[t] == 2 * m[t])
    };
    let mut count = 0u64;
    for i in 0..sites.len() {
        for j in (i + 1)..sites.len() {
            for l in (j + 1)..sites.len() {
                let (a, b, c) = (&sites[i], &sites[j], &sites[l]);
                if is_middle(a, b, c) || is_middle(b, a, c) || is_middle(a, c, b) {
                    count += 1;
                }
            }
        }
    }
    Ok(count)
}

/// Exact distribution of the 3-AP count of a one-dimensional n-step walk
/// range, by enumerating all 2^n walks with rational probabilities.
#[derive(Debug, Clone)]
pub struct ExactDistribution {
    pub n: usize,
    pub pmf: BTreeMap<u64, BigRational>,
}

impl ExactDistribution {
    pub fn total(&self) -> BigRational {
        let mut s = BigRational::from(BigInt::from(0));
        for v in self.pmf.values() {
            s += v;
        }
        s
    }

    pub fn prob_f64(&self, count: u64) -> f64 {
        self.pmf
            .get(&count)
            .map(|r| rational_to_f64(r))
            .unwrap_or(0.0)
    }
}

fn rational_to_f64(r: &BigRational) -> f64 {
    let num = r.numer();
    let den = r.denom();
    // counts here are tiny; direct conversion is exact enough
    let n: f64 = num.to_string().parse().unwrap();
    let d: f64 = den.to_string().parse().unwrap();
    n / d
}

pub fn exhaustive_walk_distribution(n: usize) -> Result<ExactDistribution, OracleError> {
    if n > 12 {
        return Err(OracleError::BudgetExceeded(format!("n = {n} > 12")));
    }
    let mut freq: BTreeMap<u64, u64> = BTreeMap::new();
    let total = 1u64 << n;
    for mask in 0..total {
        // bit = 1 is a +1 step
        let mut pos = 0i64;
        let mut lo = 0i64;
        let mut hi = 0i64;
        for b in 0..n {
            pos += if (mask >> b) & 1 == 1 { 1 } else { -1 };
            lo = lo.min(pos);
            hi = hi.max(pos);
        }
        // range is the full interval [lo, hi]; count integer 3-APs in it
        let mut count = 0u64;
        for x in lo..=hi {
            for z in (x + 1)..=hi {
                if (x + z) % 2 == 0 {
                    count += 1;
                }
            }
        }
        *freq.entry(count).or_insert(0) += 1;
    }
    let denom = BigInt::from(total);
    let pmf = freq
        .into_iter()
        .map(|(c, f)| (c, BigRational::new(BigInt::from(f), denom.clone())))
        .collect();
    Ok(ExactDistribution { n, pmf })
}

// ---------------------------------------------------------------------------
// closed-form references
// ---------------------------------------------------------------------------

/// erf by Taylor series, accurate to ~1e-12 for |x| <= 3, saturating
/// beyond. Reference-quality only; not a general-purpose special function.
pub fn erf_ref(x: f64) -> f64 {
    if x < 0.0 {
        return -erf_ref(-x);
    }
    if x > 5.0 {
        return 1.0;
    }
    let mut term = x;
    let mut sum = x;
    let x2 = x * x;
    for n in 1..120 {
        term *= -x2 / n as f64;
        let add = term / (2 * n + 1) as f64;
        sum += add;
        if add.abs() < 1e-17 {
            break;
        }
    }
    sum * 2.0 / std::f64::consts::PI.sqrt()
}

pub fn erfc_ref(x: f64) -> f64 {
    1.0 - erf_ref(x)
}

/// First-passage probability of 3-d Brownian motion to a sphere of radius
/// `radius` at center distance `start_dist`, within time `horizon`:
/// (R/L) erfc((L-R) / sqrt(2 T)). The infinite-horizon limit is R/L.
pub fn sphere_hit_prob_3d(start_dist: f64, radius: f64, horizon: f64) -> f64 {
    if start_dist <= radius {
        return 1.0;
    }
    (radius / start_dist) * erfc_ref((start_dist - radius) / (2.0 * horizon).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::snap_to_grid;

    #[test]
    fn brute_empty_and_planted() {
        let cfg = APConfig::new(5, 0.05, 0.2, 3).unwrap();
        let spacing = cfg.eps / 3.0;
        let empty = CellSet::new(spacing, 3, 1.0);
        assert_eq!(
            brute_enumerate_x(&empty, &cfg, &OracleBudget::default())
                .unwrap()
                .x_total,
            0
        );
        let pts: Vec<Point> = (0..5)
            .map(|i| Point::new(&[-0.6 + 0.3 * i as f64, 0.0, 0.0]).unwrap())
            .collect();
        let cells = CellSet::from_cells(
            spacing,
            3,
            1.0,
            pts.iter().map(|p| snap_to_grid(p, spacing)),
        );
        let stat = brute_enumerate_x(&cells, &cfg, &OracleBudget::default()).unwrap();
        assert_eq!(stat.x_total, 1);
    }

    #[test]
    fn brute_3aps_hand_cases() {
        let sites: Vec<[i64; MAX_DIM]> = (0..4)
            .map(|i| {
                let mut s = [0i64; MAX_DIM];
                s[0] = i;
                s
            })
            .collect();
        let range = RangeSet::from_sites(sites, 3, 1);
        assert_eq!(brute_3aps(&range, &OracleBudget::default()).unwrap(), 2);
        let single = RangeSet::from_sites(vec![[0; MAX_DIM]], 0, 1);
        assert_eq!(brute_3aps(&single, &OracleBudget::default()).unwrap(), 0);
    }

    #[test]
    fn walk_distribution_exact() {
        let d = exhaustive_walk_distribution(1).unwrap();
        assert_eq!(d.pmf.len(), 1);
        assert_eq!(d.prob_f64(0), 1.0);
        let d2 = exhaustive_walk_distribution(2).unwrap();
        assert_eq!(d2.total(), BigRational::from(BigInt::from(1)));
        // n = 2: walks ++/-- give ranges of 3 sites (one 3-AP), +-/-+ give 2 sites
        assert_eq!(d2.prob_f64(1), 0.5);
        assert_eq!(d2.prob_f64(0), 0.5);
        for n in 3..=8 {
            let dn = exhaustive_walk_distribution(n).unwrap();
            assert_eq!(dn.total(), BigRational::from(BigInt::from(1)), "n = {n}");
        }
    }

    #[test]
    fn erf_reference_values() {
        // table values to ~1e-7
        assert!((erf_ref(0.5) - 0.5204998778).abs() < 1e-9);
        assert!((erf_ref(1.0) - 0.8427007929).abs() < 1e-9);
        assert!((erf_ref(2.0) - 0.9953222650).abs() < 1e-9);
        assert!((erfc_ref(0.0875) - (1.0 - erf_ref(0.0875))).abs() < 1e-15);
    }

    #[test]
    fn sphere_hit_prob_limits() {
        // infinite-horizon limit approaches R/L
        let p = sphere_hit_prob_3d(2.0, 0.25, 1e9);
        assert!((p - 0.125).abs() < 1e-4);
        assert_eq!(sphere_hit_prob_3d(0.1, 0.25, 1.0), 1.0);
        // finite horizon strictly smaller
        assert!(sphere_hit_prob_3d(2.0, 0.25, 200.0) < 0.125);
    }
}
