//! Simple random walk on Z^d and its range (the set of visited sites).

use crate::geometry::MAX_DIM;
use crate::rng::trial_rng;
use rand::Rng;
use serde::{Deserialize, Serialize};
use std::collections::HashSet;
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum SrwError {
    #[error("dimension {0} outside supported range 1..={MAX_DIM}")]
    BadDimension(usize),
}

/// A lattice site, padded to MAX_DIM; unused axes stay zero.
pub type Site = [i64; MAX_DIM];

/// A sampled walk with its full site sequence retained.
#[derive(Debug, Clone)]
pub struct LatticeWalk {
    sites: Vec<Site>,
    dim: usize,
    seed: u64,
    stream: u64,
}

impl LatticeWalk {
    pub fn sites(&self) -> &[Site] {
        &self.sites
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn steps(&self) -> usize {
        self.sites.len() - 1
    }

    /// The walk with every step reflected through the origin.
    pub fn reflected(&self) -> LatticeWalk {
        let sites = self
            .sites
            .iter()
            .map(|s| {
                let mut t = [0i64; MAX_DIM];
                for i in 0..self.dim {
                    t[i] = -s[i];
                }
                t
            })
            .collect();
        LatticeWalk { sites, dim: self.dim, seed: self.seed, stream: self.stream }
    }
}

/// Deduplicated visited sites of a walk.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RangeSet {
    sites: HashSet<Site>,
    pub n: usize,
    pub d: usize,
}

impl RangeSet {
    pub fn contains(&self, s: &Site) -> bool {
        self.sites.contains(s)
    }

    pub fn len(&self) -> usize {
        self.sites.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sites.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &Site> {
        self.sites.iter()
    }

    /// Sites in sorted order, for deterministic output.
    pub fn sorted_sites(&self) -> Vec<Site> {
        let mut v: Vec<Site> = self.sites.iter().copied().collect();
        v.sort_unstable();
        v
    }

    pub fn from_sites<I: IntoIterator<Item = Site>>(sites: I, n: usize, d: usize) -> Self {
        Self { sites: sites.into_iter().collect(), n, d }
    }

    /// The range reflected through the origin.
    pub fn negated(&self) -> RangeSet {
        let sites = self
            .sites
            .iter()
            .map(|s| {
                let mut t = [0i64; MAX_DIM];
                for i in 0..self.d {
                    t[i] = -s[i];
                }
                t
            })
            .collect();
        Self { sites, n: self.n, d: self.d }
    }
}

/// Sample an n-step walk with uniform +-e_i moves, retaining all sites.
pub fn sample_walk_stream(
    d: usize,
    n: usize,
    seed: u64,
    stream: u64,
) -> Result<LatticeWalk, SrwError> {
    if d == 0 || d > MAX_DIM {
        return Err(SrwError::BadDimension(d));
    }
    let mut rng = trial_rng(seed, stream);
    let mut sites = Vec::with_capacity(n + 1);
    let mut cur = [0i64; MAX_DIM];
    sites.push(cur);
    for _ in 0..n {
        let dir = rng.gen_range(0..2 * d);
        let axis = dir / 2;
        cur[axis] += if dir % 2 == 0 { 1 } else { -1 };
        sites.push(cur);
    }
    Ok(LatticeWalk { sites, dim: d, seed, stream })
}

/// `sample_walk_stream` on stream 0.
pub fn sample_walk(d: usize, n: usize, seed: u64) -> Result<LatticeWalk, SrwError> {
    sample_walk_stream(d, n, seed, 0)
}

/// The range of a retained walk.
pub fn range_of(walk: &LatticeWalk) -> RangeSet {
    RangeSet {
        sites: walk.sites.iter().copied().collect(),
        n: walk.steps(),
        d: walk.dim,
    }
}

/// Stream a walk directly into its range without retaining the site
/// sequence; identical distribution and seeding as `sample_walk_stream`.
pub fn walk_range_stream(d: usize, n: usize, seed: u64, stream: u64) -> Result<RangeSet, SrwError> {
    if d == 0 || d > MAX_DIM {
        return Err(SrwError::BadDimension(d));
    }
    let mut rng = trial_rng(seed, stream);
    let mut sites = HashSet::with_capacity(n + 1);
    let mut cur = [0i64; MAX_DIM];
    sites.insert(cur);
    for _ in 0..n {
        let dir = rng.gen_range(0..2 * d);
        let axis = dir / 2;
        cur[axis] += if dir % 2 == 0 { 1 } else { -1 };
        sites.insert(cur);
    }
    Ok(RangeSet { sites, n, d })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_steps_is_origin() {
        let w = sample_walk(3, 0, 1).unwrap();
        let r = range_of(&w);
        assert_eq!(r.len(), 1);
        assert!(r.contains(&[0; MAX_DIM]));
    }

    #[test]
    fn deterministic_and_l1_steps() {
        let a = sample_walk(2, 500, 42).unwrap();
        let b = sample_walk(2, 500, 42).unwrap();
        assert_eq!(a.sites(), b.sites());
        for w in a.sites().windows(2) {
            let l1: i64 = (0..2).map(|i| (w[1][i] - w[0][i]).abs()).sum();
            assert_eq!(l1, 1);
        }
    }

    #[test]
    fn range_bound_and_streaming_agree() {
        for seed in 0..10 {
            let w = sample_walk(3, 2000, seed).unwrap();
            let r = range_of(&w);
            assert!(r.len() <= 2001);
            let streamed = walk_range_stream(3, 2000, seed, 0).unwrap();
            assert_eq!(r.sorted_sites(), streamed.sorted_sites());
        }
    }

    #[test]
    fn range_matches_sort_dedup_oracle() {
        let w = sample_walk(2, 5000, 7).unwrap();
        let mut sorted: Vec<Site> = w.sites().to_vec();
        sorted.sort_unstable();
        sorted.dedup();
        assert_eq!(range_of(&w).sorted_sites(), sorted);
    }

    #[test]
    fn reflection_negates_range() {
        let w = sample_walk(3, 1000, 13).unwrap();
        let r = range_of(&w);
        let rr = range_of(&w.reflected());
        assert_eq!(r.negated().sorted_sites(), rr.sorted_sites());
    }

    #[test]
    fn transient_range_grows_linearly() {
        // d = 3: |range| / n stabilizes; crude two-point slope check
        let mut r1 = 0.0;
        let mut r2 = 0.0;
        let trials = 20;
        for s in 0..trials {
            r1 += walk_range_stream(3, 10_000, 900 + s, 0).unwrap().len() as f64;
            r2 += walk_range_stream(3, 20_000, 900 + s, 1).unwrap().len() as f64;
        }
        let ratio = (r2 / trials as f64) / (r1 / trials as f64);
        assert!((ratio - 2.0).abs() < 0.1, "ratio {ratio}");
    }
}
