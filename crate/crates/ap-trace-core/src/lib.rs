//! Monte Carlo machinery for approximate arithmetic progressions in the
//! trace of Brownian motion and for exact 3-term progressions in the
//! range of simple random walk.
//!
//! The crate is organized around a per-path pipeline: sample a Brownian
//! path, extract the lattice cells whose eps-balls it hits, enumerate the
//! eps-approximate separated progressions among those cells, and
//! aggregate moments, positivity frequencies, scale buckets, window
//! indicators, excursion tails, and walk-range counts across seeded
//! trials. Brute-force oracles cross-check every fast counter.

pub mod bm;
pub mod detector;
pub mod estimators;
pub mod geometry;
pub mod grid;
pub mod oracle;
pub mod rng;
pub mod srw;
pub mod stats;

pub use bm::{hit_cells, hits_ball, sample_path, sample_path_stream, BallSpec, PathSample, RefinePolicy};
pub use detector::{bucketize, count_3aps_exact, enumerate_x, window_counts, CountStatistic};
pub use geometry::{ap_defect, is_candidate, snap_to_grid, APCandidate, APConfig, GridIndex, Point};
pub use grid::CellSet;
pub use srw::{range_of, sample_walk, LatticeWalk, RangeSet};
