//! Enumeration of eps-approximate arithmetic progressions over hit cells,
//! the scale-bucket decomposition of the count, windowed counts around an
//! anchor tuple, and exact 3-AP counting in lattice ranges.
//!
//! The enumerator anchors on the two endpoints (x_1, x_k). Once both ends
//! are fixed, the defect inequalities confine every interior position to a
//! ball of radius O(k^2 eps) around the linear interpolation (the discrete
//! Green's function bound), and each newly placed point pins its interval
//! neighbors to 2 eps midpoint balls, so chains cannot wander along the
//! path the way forward extrapolation lets them. Candidate positions are
//! pre-screened against an exact distance transform of the hit set before
//! any cell is touched. Filters only over-approximate; every emitted tuple
//! passes the exact membership conditions, so output matches brute force.

use crate::geometry::{is_candidate, APCandidate, APConfig, GridIndex, Point, MAX_DIM};
use crate::grid::CellSet;
use crate::srw::RangeSet;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::sync::atomic::{AtomicBool, Ordering};
use thiserror::Error;

/// Default cap on retained tuple records; exact totals are always kept.
pub const DEFAULT_TUPLE_CAP: usize = 1_000_000;

#[derive(Debug, Error, PartialEq)]
pub enum DetectorError {
    #[error("cell set spacing {0} does not match cfg eps/3 = {1}")]
    SpacingMismatch(f64, f64),
    #[error("cell set is {0}-d but config is {1}-d")]
    DimensionMismatch(usize, usize),
    #[error("cell set domain radius {0} does not match config {1}")]
    DomainMismatch(f64, f64),
    #[error("config invalid: {0}")]
    BadConfig(String),
    #[error("tuple records were truncated; per-tuple data unavailable")]
    MissingPerTupleData,
    #[error("anchor tuple leaves the domain ball")]
    AnchorOutsideDomain,
    #[error("no admissible scale windows for this config")]
    NoScales,
    #[error("acceleration grid would need {0} cells; config too fine for this domain")]
    GridTooLarge(usize),
}

/// The counting statistic: total over admissible tuples of the hit-cell
/// set, dyadic distance-to-origin bucket counts, and per-tuple records up
/// to a cap.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CountStatistic {
    pub k: usize,
    pub x_total: u64,
    pub tuples: Vec<APCandidate>,
    /// Distance to origin of each retained tuple, parallel to `tuples`.
    pub d0: Vec<f64>,
    /// True when `x_total` exceeded the record cap.
    pub truncated: bool,
    /// n -> #{tuples with eps 2^n < d(0,x) <= eps 2^{n+1}}, bucket 0 with
    /// the lower bound removed. Maintained exactly even past the cap.
    pub bucket_counts: BTreeMap<u32, u64>,
}

/// One dyadic window around an anchor tuple.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScaleWindow {
    pub k_scale: u32,
    pub band_lo: f64,
    pub band_hi: f64,
}

impl ScaleWindow {
    pub fn new(k_scale: u32, eps: f64) -> Self {
        let band_lo = (1u64 << k_scale) as f64 * eps;
        Self { k_scale, band_lo, band_hi: 2.0 * band_lo }
    }
}

/// Dyadic bucket of a distance-to-origin value.
pub fn bucket_of(d0: f64, eps: f64) -> u32 {
    let ratio = d0 / eps;
    if ratio <= 2.0 {
        0
    } else {
        (ratio.log2().ceil() as u32).saturating_sub(1)
    }
}

/// Re-derive the bucket decomposition from retained per-tuple data.
/// Errors when records were truncated.
pub fn bucketize(stat: &CountStatistic, eps: f64) -> Result<BTreeMap<u32, u64>, DetectorError> {
    if stat.truncated {
        return Err(DetectorError::MissingPerTupleData);
    }
    let mut out = BTreeMap::new();
    for &d0 in &stat.d0 {
        *out.entry(bucket_of(d0, eps)).or_insert(0u64) += 1;
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// geometry of the fill plan
// ---------------------------------------------------------------------------

/// Green's-function drift bound: with both ends of an L-segment chain
/// fixed and all second differences at most 4 eps, node `off` sits within
/// green_units(L, off) * 4 eps of the linear interpolation.
fn green_units(l: usize, off: usize) -> f64 {
    let mut s = 0.0;
    for j in 1..l {
        s += (off.min(j) as f64) * ((l - off.max(j)) as f64) / l as f64;
    }
    s
}

/// One interior position fill: interpolate between two already-placed
/// positions and search a ball around that point.
#[derive(Debug, Clone, Copy)]
struct FillStep {
    pos: usize,
    left: usize,
    right: usize,
    /// interpolation weight of the right anchor
    w: f64,
    /// search radius in units of eps
    radius_eps: f64,
}

/// Bisection fill plan for interior positions 2..k-1 (1-based), anchors
/// at 1 and k. Larger intervals are split first so every later ball is as
/// tight as the defect inequalities allow.
fn fill_plan(k: usize) -> Vec<FillStep> {
    let mut steps = Vec::new();
    let mut intervals = vec![(1usize, k)];
    while let Some(idx) = intervals
        .iter()
        .enumerate()
        .filter(|(_, &(a, b))| b - a >= 2)
        .max_by_key(|(_, &(a, b))| b - a)
        .map(|(i, _)| i)
    {
        let (a, b) = intervals.remove(idx);
        let l = b - a;
        let off = l / 2;
        let pos = a + off;
        steps.push(FillStep {
            pos,
            left: a,
            right: b,
            w: off as f64 / l as f64,
            radius_eps: green_units(l, off) * 4.0,
        });
        if pos - a >= 2 {
            intervals.push((a, pos));
        }
        if b - pos >= 2 {
            intervals.push((pos, b));
        }
    }
    steps
}

/// Sound lower bound on the endpoint span of an admissible tuple: gap
/// vectors deviate from the mean gap by at most the worst consecutive
/// Green-bound difference.
fn span_floor(cfg: &APConfig) -> f64 {
    let l = cfg.k - 1;
    let mut worst = 0.0f64;
    for i in 0..l {
        let mut s = 0.0;
        for j in 1..l {
            let gi = (i.min(j) as f64) * ((l - i.max(j)) as f64) / l as f64;
            let gi1 = ((i + 1).min(j) as f64) * ((l - (i + 1).max(j)) as f64) / l as f64;
            s += (gi1 - gi).abs();
        }
        worst = worst.max(s);
    }
    let mean_gap_floor = cfg.gap_floor() - worst * 4.0 * cfg.eps;
    (l as f64) * mean_gap_floor.max(0.0)
}

// ---------------------------------------------------------------------------
// workspace: cells bucketed by super-cell + exact distance transform
// ---------------------------------------------------------------------------

/// Candidate-iteration buckets are 6 cells = 2 eps wide; the distance
/// transform runs on a finer 3-cell = eps lattice.
const BUCKET_FACTOR: i64 = 6;
const DIST_FACTOR: i64 = 3;
const MAX_ACCEL_CELLS: usize = 1 << 28;

struct Grid {
    min_u: [i64; MAX_DIM],
    side: [i64; MAX_DIM],
    strides: [usize; MAX_DIM],
    len: usize,
}

impl Grid {
    fn build(dim: usize, half_extent: f64, spacing: f64) -> Result<Self, DetectorError> {
        let half = (half_extent / spacing).ceil() as i64 + 2;
        let mut min_u = [0i64; MAX_DIM];
        let mut side = [1i64; MAX_DIM];
        for a in 0..dim {
            min_u[a] = -half;
            side[a] = 2 * half + 1;
        }
        let mut len = 1usize;
        for a in 0..dim {
            len = len
                .checked_mul(side[a] as usize)
                .ok_or(DetectorError::GridTooLarge(usize::MAX))?;
        }
        if len > MAX_ACCEL_CELLS {
            return Err(DetectorError::GridTooLarge(len));
        }
        let mut strides = [0usize; MAX_DIM];
        let mut acc = 1usize;
        for a in (0..dim).rev() {
            strides[a] = acc;
            acc *= side[a] as usize;
        }
        Ok(Self { min_u, side, strides, len })
    }

    /// Linear id of integer coords, clamped into the grid (clamping only
    /// produces filter false positives, never false negatives).
    #[inline]
    fn lin_clamped(&self, u: &[i64], dim: usize) -> usize {
        let mut lin = 0usize;
        for a in 0..dim {
            let v = (u[a] - self.min_u[a]).clamp(0, self.side[a] - 1);
            lin += v as usize * self.strides[a];
        }
        lin
    }
}

struct Workspace {
    dim: usize,
    h: f64,
    // cell data reordered by bucket id
    centers: Vec<[f64; MAX_DIM]>,
    cells_i: Vec<[i32; MAX_DIM]>,
    norms: Vec<f64>,
    buckets: Grid,
    csr: Vec<u32>,
    occupied: Vec<u32>,
    occ_centers: Vec<[f64; MAX_DIM]>,
    // exact squared distance (in dist-lattice units) to the nearest
    // dist-cell containing a hit cell
    dist: Grid,
    dist_w: f64,
    dist2: Vec<f32>,
    /// query slack in dist-lattice units: worst offset of a hit cell
    /// within its dist-cell plus worst offset of the query point
    dist_slack: f64,
}

impl Workspace {
    fn build(cells: &CellSet, cfg: &APConfig) -> Result<Self, DetectorError> {
        let dim = cfg.dim;
        let h = cells.spacing();
        let bucket_w = h * BUCKET_FACTOR as f64;
        let dist_w = h * DIST_FACTOR as f64;
        let sqrt_d = (dim as f64).sqrt();

        // the largest interior search ball plus interpolation slack
        let plan = fill_plan(cfg.k.max(3));
        let max_radius = plan
            .iter()
            .map(|s| s.radius_eps)
            .fold(4.0, f64::max)
            * cfg.eps
            + 2.0 * bucket_w * sqrt_d;
        let half_extent = cfg.domain_radius + max_radius + dist_w;

        let buckets = Grid::build(dim, half_extent, bucket_w)?;
        let dist = Grid::build(dim, half_extent, dist_w)?;

        // domain-filter, then counting-sort cells by bucket id
        let in_domain: Vec<&GridIndex> = cells
            .cells()
            .iter()
            .filter(|c| {
                let mut nrm = 0.0;
                for a in 0..dim {
                    let x = c.cell()[a] as f64 * h;
                    nrm += x * x;
                }
                nrm.sqrt() <= cfg.domain_radius
            })
            .collect();
        let n = in_domain.len();
        let bucket_of_cell = |cell: &[i32]| -> usize {
            let mut u = [0i64; MAX_DIM];
            for a in 0..dim {
                u[a] = (cell[a] as i64).div_euclid(BUCKET_FACTOR);
            }
            buckets.lin_clamped(&u, dim)
        };
        let mut counts = vec![0u32; buckets.len + 1];
        let mut lin_ids = Vec::with_capacity(n);
        for c in &in_domain {
            let lin = bucket_of_cell(c.cell());
            lin_ids.push(lin);
            counts[lin + 1] += 1;
        }
        for i in 0..buckets.len {
            counts[i + 1] += counts[i];
        }
        let csr = counts;
        let mut centers = vec![[0.0f64; MAX_DIM]; n];
        let mut cells_i = vec![[0i32; MAX_DIM]; n];
        let mut norms = vec![0.0f64; n];
        let mut cursor = csr.clone();
        for (c, &lin) in in_domain.iter().zip(&lin_ids) {
            let slot = cursor[lin] as usize;
            cursor[lin] += 1;
            let mut ctr = [0.0f64; MAX_DIM];
            let mut ii = [0i32; MAX_DIM];
            let mut nrm = 0.0;
            for a in 0..dim {
                ii[a] = c.cell()[a];
                ctr[a] = c.cell()[a] as f64 * h;
                nrm += ctr[a] * ctr[a];
            }
            centers[slot] = ctr;
            cells_i[slot] = ii;
            norms[slot] = nrm.sqrt();
        }

        let mut occupied = Vec::new();
        let mut occ_centers = Vec::new();
        for lin in 0..buckets.len {
            if csr[lin + 1] > csr[lin] {
                occupied.push(lin as u32);
                let mut rem = lin;
                let mut ctr = [0.0f64; MAX_DIM];
                for a in 0..dim {
                    let u = (rem / buckets.strides[a]) as i64 + buckets.min_u[a];
                    rem %= buckets.strides[a];
                    ctr[a] = (u * BUCKET_FACTOR) as f64 * h + 2.5 * h;
                }
                occ_centers.push(ctr);
            }
        }

        // exact squared distance transform on the dist lattice; seeds at
        // the dist-cell nearest each hit cell (round-to-nearest thirds)
        let mut dist2 = vec![f32::INFINITY; dist.len];
        for c in &in_domain {
            let mut u = [0i64; MAX_DIM];
            for a in 0..dim {
                u[a] = ((c.cell()[a] as i64) + 1).div_euclid(DIST_FACTOR);
            }
            dist2[dist.lin_clamped(&u, dim)] = 0.0;
        }
        distance_transform(&mut dist2, &dist, dim);

        // per-axis offsets: a hit cell sits within 1/3 dist-unit of its
        // rounded seed, a query point within 1/2 of its rounded node
        let dist_slack = sqrt_d * (1.0 / 3.0) + sqrt_d * 0.5;

        Ok(Self {
            dim,
            h,
            centers,
            cells_i,
            norms,
            buckets,
            csr,
            occupied,
            occ_centers,
            dist,
            dist_w,
            dist2,
            dist_slack,
        })
    }

    /// Could a hit cell lie within `radius` of `t`? Exact distance
    /// transform lookup with lattice slack; false means definitely not.
    #[inline]
    fn near(&self, t: &[f64; MAX_DIM], radius: f64) -> bool {
        let mut u = [0i64; MAX_DIM];
        for a in 0..self.dim {
            u[a] = (t[a] / self.dist_w + 0.5).floor() as i64;
        }
        let d2 = self.dist2[self.dist.lin_clamped(&u, self.dim)] as f64;
        let r = radius / self.dist_w + self.dist_slack;
        d2 <= r * r
    }

    /// Iterate cell slots whose center could lie within `radius` of `t`.
    #[inline]
    fn for_cells_near<F: FnMut(usize)>(&self, t: &[f64; MAX_DIM], radius: f64, mut f: F) {
        let mut lo = [0i64; MAX_DIM];
        let mut hi = [0i64; MAX_DIM];
        for a in 0..self.dim {
            let qlo = (t[a] - radius) / self.h;
            let qhi = (t[a] + radius) / self.h;
            lo[a] = ((qlo / BUCKET_FACTOR as f64).floor() as i64 - self.buckets.min_u[a]).max(0);
            hi[a] = ((qhi / BUCKET_FACTOR as f64).floor() as i64 - self.buckets.min_u[a])
                .min(self.buckets.side[a] - 1);
            if lo[a] > hi[a] {
                return;
            }
        }
        let mut u = lo;
        'outer: loop {
            let mut lin = 0usize;
            for a in 0..self.dim {
                lin += u[a] as usize * self.buckets.strides[a];
            }
            let start = self.csr[lin] as usize;
            let end = self.csr[lin + 1] as usize;
            for slot in start..end {
                f(slot);
            }
            for a in (0..self.dim).rev() {
                u[a] += 1;
                if u[a] <= hi[a] {
                    continue 'outer;
                }
                u[a] = lo[a];
            }
            break;
        }
    }
}

/// Felzenszwalb squared Euclidean distance transform, separable per axis,
/// in lattice units.
fn distance_transform(grid: &mut [f32], g: &Grid, dim: usize) {
    let mut f_buf: Vec<f32> = Vec::new();
    let mut d_buf: Vec<f32> = Vec::new();
    let mut v_buf: Vec<usize> = Vec::new();
    let mut z_buf: Vec<f32> = Vec::new();
    for a in 0..dim {
        let len = g.side[a] as usize;
        let stride = g.strides[a];
        let outer = g.len / len;
        f_buf.resize(len, 0.0);
        d_buf.resize(len, 0.0);
        v_buf.resize(len, 0);
        z_buf.resize(len + 1, 0.0);
        for line in 0..outer {
            // base index from the other axes
            let mut rem = line;
            let mut base = 0usize;
            for b in 0..dim {
                if b == a {
                    continue;
                }
                let s = g.side[b] as usize;
                base += (rem % s) * g.strides[b];
                rem /= s;
            }
            for (p, f) in f_buf.iter_mut().enumerate() {
                *f = grid[base + p * stride];
            }
            // lower envelope of parabolas
            let mut kk = 0usize;
            v_buf[0] = 0;
            z_buf[0] = f32::NEG_INFINITY;
            z_buf[1] = f32::INFINITY;
            for q in 1..len {
                if f_buf[q] == f32::INFINITY {
                    continue;
                }
                loop {
                    let p = v_buf[kk];
                    if f_buf[p] == f32::INFINITY {
                        // empty envelope so far
                        v_buf[kk] = q;
                        break;
                    }
                    let s = (f_buf[q] + (q * q) as f32 - f_buf[p] - (p * p) as f32)
                        / (2 * q - 2 * p) as f32;
                    if s <= z_buf[kk] {
                        if kk == 0 {
                            v_buf[0] = q;
                            break;
                        }
                        kk -= 1;
                    } else {
                        kk += 1;
                        v_buf[kk] = q;
                        z_buf[kk] = s;
                        z_buf[kk + 1] = f32::INFINITY;
                        break;
                    }
                }
            }
            if f_buf[v_buf[0]] == f32::INFINITY {
                continue; // whole line empty
            }
            let mut kk2 = 0usize;
            for (q, d) in d_buf.iter_mut().enumerate() {
                while z_buf[kk2 + 1] < q as f32 {
                    kk2 += 1;
                }
                let p = v_buf[kk2];
                let dq = q as f32 - p as f32;
                *d = dq * dq + f_buf[p];
            }
            for (p, d) in d_buf.iter().enumerate() {
                grid[base + p * stride] = *d;
            }
        }
    }
}

#[inline]
fn sq_dist(a: &[f64; MAX_DIM], b: &[f64; MAX_DIM], dim: usize) -> f64 {
    let mut s = 0.0;
    for i in 0..dim {
        let d = a[i] - b[i];
        s += d * d;
    }
    s
}

// ---------------------------------------------------------------------------
// enumeration
// ---------------------------------------------------------------------------

struct EnumParams {
    dim: usize,
    eps: f64,
    k: usize,
    gap_floor2: f64,
    defect2: f64,
    span_lo2: f64,
    span_hi2: f64,
    plan: Vec<FillStep>,
    cap: usize,
}

impl EnumParams {
    fn new(cfg: &APConfig, cap: usize) -> Self {
        let span_lo = span_floor(cfg);
        let span_hi = 2.0 * cfg.domain_radius;
        Self {
            dim: cfg.dim,
            eps: cfg.eps,
            k: cfg.k,
            gap_floor2: cfg.gap_floor() * cfg.gap_floor(),
            defect2: cfg.defect_ceiling() * cfg.defect_ceiling(),
            span_lo2: span_lo * span_lo,
            span_hi2: span_hi * span_hi,
            plan: fill_plan(cfg.k),
            cap,
        }
    }
}

#[derive(Default)]
struct Partial {
    x_total: u64,
    buckets: BTreeMap<u32, u64>,
    records: Vec<(Vec<usize>, f64, f64)>, // slots (by position), defect, min_gap
}

struct FillState {
    /// slot per position (1-based positions, index 0 unused)
    slots: Vec<usize>,
    filled: Vec<bool>,
    scratch: Vec<Vec<usize>>,
}

impl FillState {
    fn new(k: usize) -> Self {
        Self {
            slots: vec![usize::MAX; k + 1],
            filled: vec![false; k + 1],
            scratch: vec![Vec::new(); k + 1],
        }
    }
}

/// Exact checks available once `pos` is placed: gaps against adjacent
/// filled positions and defect windows whose three members are all known.
#[inline]
fn local_checks_pass(ws: &Workspace, p: &EnumParams, st: &FillState, pos: usize, slot: usize) -> bool {
    let c = ws.centers[slot];
    for adj in [pos.wrapping_sub(1), pos + 1] {
        if adj >= 1 && adj <= p.k && st.filled[adj] {
            if sq_dist(&c, &ws.centers[st.slots[adj]], p.dim) < p.gap_floor2 {
                return false;
            }
        }
    }
    for mid in [pos.wrapping_sub(1), pos, pos + 1] {
        if mid < 2 || mid + 1 > p.k {
            continue;
        }
        let (l, m, r) = (mid - 1, mid, mid + 1);
        let known = |q: usize| q == pos || st.filled[q];
        if !(known(l) && known(m) && known(r)) {
            continue;
        }
        let get = |q: usize| {
            if q == pos {
                &c
            } else {
                &ws.centers[st.slots[q]]
            }
        };
        let (a, b, d) = (get(l), get(m), get(r));
        let mut s = 0.0;
        for i in 0..p.dim {
            let v = a[i] + d[i] - 2.0 * b[i];
            s += v * v;
        }
        if s > p.defect2 {
            return false;
        }
    }
    true
}

fn fill_rec(
    ws: &Workspace,
    p: &EnumParams,
    st: &mut FillState,
    step_idx: usize,
    out: &mut Partial,
    stop: Option<&AtomicBool>,
) -> bool {
    if step_idx == p.plan.len() {
        emit(ws, p, st, out);
        return stop.is_some();
    }
    let step = p.plan[step_idx];
    let left = ws.centers[st.slots[step.left]];
    let right = ws.centers[st.slots[step.right]];
    let mut t = [0.0f64; MAX_DIM];
    for a in 0..p.dim {
        t[a] = left[a] + step.w * (right[a] - left[a]);
    }
    let radius = step.radius_eps * p.eps;
    if !ws.near(&t, radius) {
        return false;
    }
    // peek at the next step's ball before iterating candidates
    let mut cand = std::mem::take(&mut st.scratch[step.pos]);
    cand.clear();
    let r_guard = radius * (1.0 + 1e-12) + 1e-12;
    ws.for_cells_near(&t, radius, |slot| cand.push(slot));
    let r2 = r_guard * r_guard;
    let mut found = false;
    for &slot in &cand {
        let c = ws.centers[slot];
        if sq_dist(&c, &t, p.dim) > r2 {
            continue;
        }
        if !local_checks_pass(ws, p, st, step.pos, slot) {
            continue;
        }
        st.slots[step.pos] = slot;
        st.filled[step.pos] = true;
        let done = fill_rec(ws, p, st, step_idx + 1, out, stop);
        st.filled[step.pos] = false;
        if done {
            found = true;
            break;
        }
    }
    st.scratch[step.pos] = cand;
    found
}

fn emit(ws: &Workspace, p: &EnumParams, st: &FillState, out: &mut Partial) {
    // final exact verification: every defect window and every gap
    let mut defect_max2 = 0.0f64;
    let mut gap_min2 = f64::INFINITY;
    let mut d0 = f64::INFINITY;
    for pos in 1..=p.k {
        let slot = st.slots[pos];
        d0 = d0.min(ws.norms[slot]);
        if pos + 1 <= p.k {
            let g = sq_dist(&ws.centers[slot], &ws.centers[st.slots[pos + 1]], p.dim);
            gap_min2 = gap_min2.min(g);
        }
        if pos >= 2 && pos + 1 <= p.k {
            let a = ws.centers[st.slots[pos - 1]];
            let b = ws.centers[slot];
            let c = ws.centers[st.slots[pos + 1]];
            let mut s = 0.0;
            for i in 0..p.dim {
                let v = a[i] + c[i] - 2.0 * b[i];
                s += v * v;
            }
            defect_max2 = defect_max2.max(s);
        }
    }
    if defect_max2 > p.defect2 || gap_min2 < p.gap_floor2 {
        return;
    }
    out.x_total += 1;
    *out.buckets.entry(bucket_of(d0, p.eps)).or_insert(0) += 1;
    if out.records.len() < p.cap {
        let slots: Vec<usize> = (1..=p.k).map(|pos| st.slots[pos]).collect();
        out.records.push((slots, defect_max2.sqrt(), gap_min2.sqrt()));
    }
}

/// Iterate endpoint pairs from one occupied bucket, filling interiors.
/// Returns true when `stop` is set and a tuple was found (existence mode).
#[allow(clippy::too_many_arguments)]
fn pairs_from_bucket(
    ws: &Workspace,
    p: &EnumParams,
    b1: usize,
    st: &mut FillState,
    out: &mut Partial,
    stop: Option<&AtomicBool>,
) -> bool {
    let sqrt_d = (p.dim as f64).sqrt();
    let bucket_slack = 2.0 * 2.5 * ws.h * sqrt_d;
    let span_lo_b = (p.span_lo2.sqrt() - bucket_slack).max(0.0);
    let span_hi_b = p.span_hi2.sqrt() + bucket_slack;
    let c1 = ws.occ_centers[b1];
    let lin1 = ws.occupied[b1] as usize;
    let cells1 = ws.csr[lin1] as usize..ws.csr[lin1 + 1] as usize;

    for b2 in 0..ws.occupied.len() {
        if let Some(flag) = stop {
            if flag.load(Ordering::Relaxed) {
                return true;
            }
        }
        let c2 = ws.occ_centers[b2];
        let d2 = sq_dist(&c1, &c2, p.dim);
        if d2 < span_lo_b * span_lo_b || d2 > span_hi_b * span_hi_b {
            continue;
        }
        // bucket-level interior feasibility
        let mut ok = true;
        for step in &p.plan {
            if step.left != 1 || step.right != p.k {
                break; // only the first split has both anchors at the ends
            }
            let mut t = [0.0f64; MAX_DIM];
            for a in 0..p.dim {
                t[a] = c1[a] + step.w * (c2[a] - c1[a]);
            }
            if !ws.near(&t, step.radius_eps * p.eps + bucket_slack) {
                ok = false;
                break;
            }
        }
        if !ok {
            continue;
        }
        let lin2 = ws.occupied[b2] as usize;
        let cells2 = ws.csr[lin2] as usize..ws.csr[lin2 + 1] as usize;
        for x1 in cells1.clone() {
            let p1 = ws.centers[x1];
            for xk in cells2.clone() {
                // canonical orientation once at pair level
                if ws.cells_i[x1].as_slice() >= ws.cells_i[xk].as_slice() {
                    continue;
                }
                let pk = ws.centers[xk];
                let d2 = sq_dist(&p1, &pk, p.dim);
                if d2 < p.span_lo2 || d2 > p.span_hi2 {
                    continue;
                }
                // exact-pair interior feasibility for every planned ball
                let mut okp = true;
                for step in &p.plan {
                    if step.left != 1 || step.right != p.k {
                        break;
                    }
                    let mut t = [0.0f64; MAX_DIM];
                    for a in 0..p.dim {
                        t[a] = p1[a] + step.w * (pk[a] - p1[a]);
                    }
                    if !ws.near(&t, step.radius_eps * p.eps) {
                        okp = false;
                        break;
                    }
                }
                if !okp {
                    continue;
                }
                st.slots[1] = x1;
                st.slots[p.k] = xk;
                st.filled.iter_mut().for_each(|f| *f = false);
                st.filled[1] = true;
                st.filled[p.k] = true;
                if p.k == 2 {
                    emit(ws, p, st, out);
                    if stop.is_some() && out.x_total > 0 {
                        if let Some(flag) = stop {
                            flag.store(true, Ordering::Relaxed);
                        }
                        return true;
                    }
                    continue;
                }
                let done = fill_rec(ws, p, st, 0, out, stop);
                if stop.is_some() && (done || out.x_total > 0) {
                    if let Some(flag) = stop {
                        flag.store(true, Ordering::Relaxed);
                    }
                    return true;
                }
            }
        }
    }
    false
}

fn check_inputs(cells: &CellSet, cfg: &APConfig) -> Result<(), DetectorError> {
    cfg.check().map_err(|e| DetectorError::BadConfig(e.to_string()))?;
    let want = cfg.eps / 3.0;
    if (cells.spacing() - want).abs() > 1e-12 * want.max(1.0) {
        return Err(DetectorError::SpacingMismatch(cells.spacing(), want));
    }
    if cells.dim() != cfg.dim {
        return Err(DetectorError::DimensionMismatch(cells.dim(), cfg.dim));
    }
    if (cells.domain_radius() - cfg.domain_radius).abs() > 1e-12 {
        return Err(DetectorError::DomainMismatch(
            cells.domain_radius(),
            cfg.domain_radius,
        ));
    }
    Ok(())
}

fn enumerate_one(
    cfg: &APConfig,
    cap: usize,
    ws: &Workspace,
) -> Result<CountStatistic, DetectorError> {
    let p = EnumParams::new(cfg, cap);
    let n_occ = ws.occupied.len();
    let chunk = (n_occ / (rayon::current_num_threads() * 8).max(1)).max(1);
    let idx: Vec<usize> = (0..n_occ).collect();
    let partials: Vec<Partial> = idx
        .par_chunks(chunk)
        .map(|chunk_ids| {
            let mut out = Partial::default();
            let mut st = FillState::new(p.k);
            for &b1 in chunk_ids {
                pairs_from_bucket(ws, &p, b1, &mut st, &mut out, None);
            }
            out
        })
        .collect();

    // deterministic merge in chunk order
    let mut x_total = 0u64;
    let mut buckets: BTreeMap<u32, u64> = BTreeMap::new();
    let mut records: Vec<(Vec<usize>, f64, f64)> = Vec::new();
    for part in partials {
        x_total += part.x_total;
        for (b, c) in part.buckets {
            *buckets.entry(b).or_insert(0) += c;
        }
        for r in part.records {
            if records.len() < cap {
                records.push(r);
            }
        }
    }
    let truncated = (records.len() as u64) < x_total;
    let mut tuples = Vec::with_capacity(records.len());
    let mut d0 = Vec::with_capacity(records.len());
    for (slots, defect, mgap) in records {
        let points: Vec<Point> = slots
            .iter()
            .map(|&s| Point::new(&ws.centers[s][..cfg.dim]).unwrap())
            .collect();
        let dist0 = points
            .iter()
            .map(|pt| pt.norm())
            .fold(f64::INFINITY, f64::min);
        assert!(
            is_candidate(&points, cfg).unwrap_or(false),
            "emitted tuple fails candidate re-verification"
        );
        tuples.push(APCandidate { points, eps: cfg.eps, defect, min_gap: mgap });
        d0.push(dist0);
    }
    Ok(CountStatistic {
        k: cfg.k,
        x_total,
        tuples,
        d0,
        truncated,
        bucket_counts: buckets,
    })
}

/// Enumerate the counting statistic for every requested tuple length over
/// shared cells. `cfg` supplies eps/delta/dim/domain; its own k is
/// ignored in favor of `ks`.
pub fn enumerate_x_multi(
    cells: &CellSet,
    cfg: &APConfig,
    ks: &[usize],
    cap: usize,
) -> Result<Vec<CountStatistic>, DetectorError> {
    if ks.is_empty() || ks.iter().any(|&k| !(2..=8).contains(&k)) {
        return Err(DetectorError::BadConfig("requested k outside 2..=8".into()));
    }
    let mut ks_sorted: Vec<usize> = ks.to_vec();
    ks_sorted.sort_unstable();
    ks_sorted.dedup();
    for &k in &ks_sorted {
        let c = APConfig { k, ..*cfg };
        c.check().map_err(|e| DetectorError::BadConfig(e.to_string()))?;
    }
    check_inputs(cells, &APConfig { k: ks_sorted[0], ..*cfg })?;
    let ws_cfg = APConfig { k: *ks_sorted.last().unwrap(), ..*cfg };
    let ws = Workspace::build(cells, &ws_cfg)?;
    ks_sorted
        .iter()
        .map(|&k| enumerate_one(&APConfig { k, ..*cfg }, cap, &ws))
        .collect()
}

/// Enumerate the counting statistic for a single tuple length.
pub fn enumerate_x(cells: &CellSet, cfg: &APConfig) -> Result<CountStatistic, DetectorError> {
    enumerate_x_capped(cells, cfg, DEFAULT_TUPLE_CAP)
}

pub fn enumerate_x_capped(
    cells: &CellSet,
    cfg: &APConfig,
    cap: usize,
) -> Result<CountStatistic, DetectorError> {
    Ok(enumerate_x_multi(cells, cfg, &[cfg.k], cap)?.pop().unwrap())
}

/// Decide whether any admissible tuple exists, stopping at the first hit.
/// Same filters and exact checks as `enumerate_x`; only the stopping rule
/// differs, so positivity agrees with `x_total > 0` by construction.
pub fn any_tuple(cells: &CellSet, cfg: &APConfig) -> Result<bool, DetectorError> {
    check_inputs(cells, cfg)?;
    let ws = Workspace::build(cells, cfg)?;
    let p = EnumParams::new(cfg, 0);
    let found = AtomicBool::new(false);
    let n_occ = ws.occupied.len();
    let chunk = (n_occ / (rayon::current_num_threads() * 16).max(1)).max(1);
    let idx: Vec<usize> = (0..n_occ).collect();
    idx.par_chunks(chunk).for_each(|chunk_ids| {
        if found.load(Ordering::Relaxed) {
            return;
        }
        let mut st = FillState::new(p.k);
        let mut out = Partial::default();
        for &b1 in chunk_ids {
            if found.load(Ordering::Relaxed) {
                return;
            }
            if pairs_from_bucket(&ws, &p, b1, &mut st, &mut out, Some(&found)) || out.x_total > 0 {
                found.store(true, Ordering::Relaxed);
                return;
            }
        }
    });
    Ok(found.load(Ordering::Relaxed))
}

// ---------------------------------------------------------------------------
// scale windows around an anchor
// ---------------------------------------------------------------------------

/// Available window scales: the dyadic range from the separation scale
/// when eps is deep enough below delta, otherwise from the domain size.
pub fn scale_range(cfg: &APConfig) -> Result<std::ops::RangeInclusive<u32>, DetectorError> {
    let paper_k = (cfg.delta / (4.0 * cfg.eps)).log2().floor() as i64;
    let domain_k = (cfg.domain_radius / cfg.eps).log2().floor() as i64;
    let hi = if paper_k >= 1 { paper_k } else { domain_k };
    if hi < 1 {
        return Err(DetectorError::NoScales);
    }
    Ok(1..=(hi as u32))
}

/// X_k for each admissible scale: the number of admissible tuples y with
/// 2^k eps <= |y_i - x_i| < 2^{k+1} eps for every position i.
pub fn window_counts(
    cells: &CellSet,
    anchor: &APCandidate,
    cfg: &APConfig,
) -> Result<BTreeMap<u32, u64>, DetectorError> {
    let scales: Vec<u32> = scale_range(cfg)?.collect();
    let mut out = BTreeMap::new();
    for s in scales {
        out.insert(s, window_count_scale(cells, anchor, cfg, s, false)? as u64);
    }
    Ok(out)
}

/// Positivity of X_k at one scale, early-exiting on the first find.
pub fn window_positive(
    cells: &CellSet,
    anchor: &APCandidate,
    cfg: &APConfig,
    k_scale: u32,
) -> Result<bool, DetectorError> {
    Ok(window_count_scale(cells, anchor, cfg, k_scale, true)? > 0)
}

fn window_count_scale(
    cells: &CellSet,
    anchor: &APCandidate,
    cfg: &APConfig,
    k_scale: u32,
    first_only: bool,
) -> Result<u64, DetectorError> {
    check_inputs(cells, cfg)?;
    if anchor.points.len() != cfg.k {
        return Err(DetectorError::BadConfig(format!(
            "anchor has {} points, config k = {}",
            anchor.points.len(),
            cfg.k
        )));
    }
    if anchor.points.iter().any(|pt| pt.norm() > cfg.domain_radius) {
        return Err(DetectorError::AnchorOutsideDomain);
    }
    let ws = Workspace::build(cells, cfg)?;
    let p = EnumParams::new(cfg, 0);
    let w = ScaleWindow::new(k_scale, cfg.eps);
    let dim = cfg.dim;
    let k = cfg.k;
    let mut anchor_pts: Vec<[f64; MAX_DIM]> = Vec::with_capacity(k);
    for pt in &anchor.points {
        let mut c = [0.0f64; MAX_DIM];
        c[..dim].copy_from_slice(pt.coords());
        anchor_pts.push(c);
    }
    let lo2 = w.band_lo * w.band_lo;
    let hi2 = w.band_hi * w.band_hi;
    let in_band = |c: &[f64; MAX_DIM], i: usize| {
        let d = sq_dist(c, &anchor_pts[i], dim);
        d >= lo2 && d < hi2
    };

    let mut y1s: Vec<usize> = Vec::new();
    ws.for_cells_near(&anchor_pts[0], w.band_hi, |slot| {
        if in_band(&ws.centers[slot], 0) {
            y1s.push(slot);
        }
    });
    let mut yks: Vec<usize> = Vec::new();
    ws.for_cells_near(&anchor_pts[k - 1], w.band_hi, |slot| {
        if in_band(&ws.centers[slot], k - 1) {
            yks.push(slot);
        }
    });

    let mut st = FillState::new(k);
    let mut count = 0u64;
    for &y1 in &y1s {
        let p1 = ws.centers[y1];
        for &yk in &yks {
            if y1 == yk {
                continue;
            }
            let pk = ws.centers[yk];
            let d2 = sq_dist(&p1, &pk, dim);
            if d2 < p.span_lo2 || d2 > p.span_hi2 {
                continue;
            }
            let mut okp = true;
            for step in &p.plan {
                if step.left != 1 || step.right != k {
                    break;
                }
                let mut t = [0.0f64; MAX_DIM];
                for a in 0..dim {
                    t[a] = p1[a] + step.w * (pk[a] - p1[a]);
                }
                if !ws.near(&t, step.radius_eps * p.eps) {
                    okp = false;
                    break;
                }
            }
            if !okp {
                continue;
            }
            st.slots[1] = y1;
            st.slots[k] = yk;
            st.filled.iter_mut().for_each(|f| *f = false);
            st.filled[1] = true;
            st.filled[k] = true;
            count += window_fill(&ws, &p, &mut st, 0, &anchor_pts, lo2, hi2, first_only);
            if first_only && count > 0 {
                return Ok(count);
            }
        }
    }
    Ok(count)
}

#[allow(clippy::too_many_arguments)]
fn window_fill(
    ws: &Workspace,
    p: &EnumParams,
    st: &mut FillState,
    step_idx: usize,
    anchor: &[[f64; MAX_DIM]],
    lo2: f64,
    hi2: f64,
    first_only: bool,
) -> u64 {
    if step_idx == p.plan.len() {
        return window_emit(ws, p, st, anchor, lo2, hi2);
    }
    let step = p.plan[step_idx];
    let left = ws.centers[st.slots[step.left]];
    let right = ws.centers[st.slots[step.right]];
    let mut t = [0.0f64; MAX_DIM];
    for a in 0..p.dim {
        t[a] = left[a] + step.w * (right[a] - left[a]);
    }
    let radius = step.radius_eps * p.eps;
    if !ws.near(&t, radius) {
        return 0;
    }
    let mut cand = std::mem::take(&mut st.scratch[step.pos]);
    cand.clear();
    ws.for_cells_near(&t, radius, |slot| cand.push(slot));
    let r_guard = radius * (1.0 + 1e-12) + 1e-12;
    let r2 = r_guard * r_guard;
    let mut total = 0u64;
    for &slot in &cand {
        let c = ws.centers[slot];
        if sq_dist(&c, &t, p.dim) > r2 {
            continue;
        }
        let band = sq_dist(&c, &anchor[step.pos - 1], p.dim);
        if band < lo2 || band >= hi2 {
            continue;
        }
        if !local_checks_pass(ws, p, st, step.pos, slot) {
            continue;
        }
        st.slots[step.pos] = slot;
        st.filled[step.pos] = true;
        total += window_fill(ws, p, st, step_idx + 1, anchor, lo2, hi2, first_only);
        st.filled[step.pos] = false;
        if first_only && total > 0 {
            break;
        }
    }
    st.scratch[step.pos] = cand;
    total
}

fn window_emit(
    ws: &Workspace,
    p: &EnumParams,
    st: &FillState,
    anchor: &[[f64; MAX_DIM]],
    lo2: f64,
    hi2: f64,
) -> u64 {
    let k = p.k;
    // bands at the endpoints were enforced during selection; interiors in
    // window_fill. Exact defect/gap verification as in emit.
    let mut defect_max2 = 0.0f64;
    let mut gap_min2 = f64::INFINITY;
    for pos in 1..=k {
        let slot = st.slots[pos];
        if pos + 1 <= k {
            gap_min2 =
                gap_min2.min(sq_dist(&ws.centers[slot], &ws.centers[st.slots[pos + 1]], p.dim));
        }
        if pos >= 2 && pos + 1 <= k {
            let a = ws.centers[st.slots[pos - 1]];
            let b = ws.centers[slot];
            let c = ws.centers[st.slots[pos + 1]];
            let mut s = 0.0;
            for i in 0..p.dim {
                let v = a[i] + c[i] - 2.0 * b[i];
                s += v * v;
            }
            defect_max2 = defect_max2.max(s);
        }
    }
    if defect_max2 > p.defect2 || gap_min2 < p.gap_floor2 {
        return 0;
    }
    // endpoint band membership (positions 1 and k)
    for (pos, idx) in [(1usize, 0usize), (k, k - 1)] {
        let d = sq_dist(&ws.centers[st.slots[pos]], &anchor[idx], p.dim);
        if d < lo2 || d >= hi2 {
            return 0;
        }
    }
    // count each geometric tuple once: ordered matches come in both
    // orientations, keep the canonical one unless its reversal is not a
    // band match at all
    let first = &ws.cells_i[st.slots[1]];
    let last = &ws.cells_i[st.slots[k]];
    if first.as_slice() <= last.as_slice() {
        return 1;
    }
    let rev_matches = (0..k).all(|i| {
        let c = ws.centers[st.slots[k - i]];
        let d = sq_dist(&c, &anchor[i], p.dim);
        d >= lo2 && d < hi2
    });
    u64::from(!rev_matches)
}

// ---------------------------------------------------------------------------
// exact 3-AP counting in lattice ranges
// ---------------------------------------------------------------------------

/// Number of unordered nondegenerate 3-term APs {x, y, z} in the range:
/// ordered pairs (x, z) with x lex-below z and componentwise-even sum,
/// counted when the midpoint is present.
pub fn count_3aps_exact(range: &RangeSet) -> u64 {
    let sites = range.sorted_sites();
    let d = range.d;
    let mut count = 0u64;
    for i in 0..sites.len() {
        for j in (i + 1)..sites.len() {
            let a = &sites[i];
            let b = &sites[j];
            let mut mid = [0i64; MAX_DIM];
            let mut even = true;
            for t in 0..d {
                let s = a[t] + b[t];
                if s & 1 != 0 {
                    even = false;
                    break;
                }
                mid[t] = s >> 1;
            }
            if even && range.contains(&mid) {
                count += 1;
            }
        }
    }
    count
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::snap_to_grid;

    fn cellset_from_points(points: &[Point], cfg: &APConfig) -> CellSet {
        let spacing = cfg.eps / 3.0;
        CellSet::from_cells(
            spacing,
            cfg.dim,
            cfg.domain_radius,
            points.iter().map(|p| snap_to_grid(p, spacing)),
        )
    }

    fn exact_ap(start: &[f64], step: &[f64], k: usize) -> Vec<Point> {
        (0..k)
            .map(|i| {
                let c: Vec<f64> = start
                    .iter()
                    .zip(step)
                    .map(|(s, g)| s + i as f64 * g)
                    .collect();
                Point::new(&c).unwrap()
            })
            .collect()
    }

    #[test]
    fn fill_plan_shapes() {
        assert!(fill_plan(2).is_empty());
        let p3 = fill_plan(3);
        assert_eq!(p3.len(), 1);
        assert_eq!((p3[0].pos, p3[0].left, p3[0].right), (2, 1, 3));
        assert!((p3[0].radius_eps - 2.0).abs() < 1e-12); // 2 eps midpoint ball
        let p5 = fill_plan(5);
        assert_eq!(p5.len(), 3);
        assert_eq!(p5[0].pos, 3);
        assert!((p5[0].radius_eps - 8.0).abs() < 1e-12);
        assert!((p5[1].radius_eps - 2.0).abs() < 1e-12);
        let p6 = fill_plan(6);
        assert_eq!(p6[0].pos, 3); // splits (1,6) at offset 2
    }

    #[test]
    fn planted_five_ap_counts_once() {
        let cfg = APConfig::new(5, 0.05, 0.4, 3).unwrap();
        let pts = exact_ap(&[-0.7, 0.0, 0.0], &[0.35, 0.0, 0.0], 5);
        let cells = cellset_from_points(&pts, &cfg);
        let stat = enumerate_x(&cells, &cfg).unwrap();
        assert_eq!(stat.x_total, 1);
        assert_eq!(stat.tuples.len(), 1);
        assert!(!stat.truncated);
        let total: u64 = stat.bucket_counts.values().sum();
        assert_eq!(total, stat.x_total);
        assert!(any_tuple(&cells, &cfg).unwrap());
    }

    #[test]
    fn empty_cells_zero() {
        let cfg = APConfig::new(4, 0.05, 0.4, 3).unwrap();
        let cells = CellSet::new(cfg.eps / 3.0, 3, 1.0);
        let stat = enumerate_x(&cells, &cfg).unwrap();
        assert_eq!(stat.x_total, 0);
        assert!(!any_tuple(&cells, &cfg).unwrap());
    }

    #[test]
    fn spacing_mismatch_rejected() {
        let cfg = APConfig::new(4, 0.05, 0.4, 3).unwrap();
        let cells = CellSet::new(0.01, 3, 1.0);
        assert!(matches!(
            enumerate_x(&cells, &cfg),
            Err(DetectorError::SpacingMismatch(_, _))
        ));
    }

    #[test]
    fn pair_count_smoke_k2() {
        let cfg = APConfig::new(2, 0.05, 0.4, 2).unwrap();
        let pts = vec![
            Point::new(&[-0.25, 0.0]).unwrap(),
            Point::new(&[0.25, 0.0]).unwrap(),
        ];
        let cells = cellset_from_points(&pts, &cfg);
        let stat = enumerate_x(&cells, &cfg).unwrap();
        assert_eq!(stat.x_total, 1);
    }

    #[test]
    fn multi_k_shares_cells() {
        let cfg = APConfig::new(5, 0.05, 0.4, 3).unwrap();
        let pts = exact_ap(&[-0.875, 0.0, 0.0], &[0.35, 0.0, 0.0], 6);
        let cells = cellset_from_points(&pts, &cfg);
        let stats = enumerate_x_multi(&cells, &cfg, &[5, 6], DEFAULT_TUPLE_CAP).unwrap();
        // a 6-point exact AP holds two 5-windows and one 6-tuple
        assert_eq!(stats[0].k, 5);
        assert_eq!(stats[0].x_total, 2);
        assert_eq!(stats[1].k, 6);
        assert_eq!(stats[1].x_total, 1);
    }

    #[test]
    fn jittered_plant_still_found() {
        // perturb an exact AP by less than the tolerance; still one tuple
        let cfg = APConfig::new(5, 0.05, 0.4, 3).unwrap();
        let mut pts = exact_ap(&[-0.64, 0.05, -0.1], &[0.32, -0.02, 0.04], 5);
        let spacing = cfg.eps / 3.0;
        // shift one interior point by ~eps/2 sideways
        let c = pts[2].coords().to_vec();
        pts[2] = Point::new(&[c[0], c[1] + 0.02, c[2]]).unwrap();
        let cells = cellset_from_points(&pts, &cfg);
        let stat = enumerate_x(&cells, &cfg).unwrap();
        assert_eq!(stat.x_total, 1, "{:?}", stat.tuples);
        let snapped: Vec<GridIndex> = pts.iter().map(|p| snap_to_grid(p, spacing)).collect();
        let tuple_cells: Vec<GridIndex> = stat.tuples[0]
            .points
            .iter()
            .map(|p| snap_to_grid(p, spacing))
            .collect();
        assert_eq!(snapped, tuple_cells);
    }

    #[test]
    fn bucket_arithmetic() {
        let eps = 0.01;
        assert_eq!(bucket_of(1.5 * eps, eps), 0);
        assert_eq!(bucket_of(5.0 * eps, eps), 2);
        assert_eq!(bucket_of(0.5 * eps, eps), 0);
        assert_eq!(bucket_of(4.0 * eps, eps), 1);
    }

    #[test]
    fn bucketize_matches_running_buckets() {
        let cfg = APConfig::new(3, 0.04, 0.4, 2).unwrap();
        let mut pts = exact_ap(&[-0.5, 0.1], &[0.4, 0.0], 3);
        pts.extend(exact_ap(&[0.05, -0.45], &[0.0, 0.4], 3));
        let cells = cellset_from_points(&pts, &cfg);
        let stat = enumerate_x(&cells, &cfg).unwrap();
        assert!(stat.x_total >= 2);
        let rederived = bucketize(&stat, cfg.eps).unwrap();
        assert_eq!(rederived, stat.bucket_counts);
        let total: u64 = rederived.values().sum();
        assert_eq!(total, stat.x_total);
    }

    #[test]
    fn window_counts_anchor_alone_is_zero() {
        let cfg = APConfig::new(3, 0.02, 0.4, 3).unwrap();
        let pts = exact_ap(&[-0.4, 0.0, 0.0], &[0.4, 0.0, 0.0], 3);
        let cells = cellset_from_points(&pts, &cfg);
        let anchor_pts: Vec<Point> =
            cells.cells().iter().map(|c| c.center(cfg.eps / 3.0)).collect();
        let anchor = APCandidate::new(anchor_pts, &cfg).unwrap();
        let counts = window_counts(&cells, &anchor, &cfg).unwrap();
        assert!(counts.values().all(|&v| v == 0), "{counts:?}");
    }

    #[test]
    fn window_counts_planted_translate() {
        let cfg = APConfig::new(3, 0.02, 0.4, 3).unwrap();
        let base = exact_ap(&[-0.45, 0.0, 0.0], &[0.4, 0.0, 0.0], 3);
        let spacing = cfg.eps / 3.0;
        let anchor_pts: Vec<Point> = base
            .iter()
            .map(|p| snap_to_grid(p, spacing).center(spacing))
            .collect();
        let anchor = APCandidate::new(anchor_pts.clone(), &cfg).unwrap();
        // translate by 1.5 * 2^k eps along y for scale k = 2
        let k_scale = 2u32;
        let shift = 1.5 * (1 << k_scale) as f64 * cfg.eps;
        let translated: Vec<Point> = anchor_pts
            .iter()
            .map(|p| {
                let mut c = p.coords().to_vec();
                c[1] += shift;
                Point::new(&c).unwrap()
            })
            .collect();
        let mut all = anchor_pts.clone();
        all.extend(translated);
        let cells = cellset_from_points(&all, &cfg);
        let counts = window_counts(&cells, &anchor, &cfg).unwrap();
        assert!(counts.contains_key(&k_scale), "scale {k_scale} missing: {counts:?}");
        for (s, c) in &counts {
            if *s == k_scale {
                assert_eq!(*c, 1, "scale {s}");
            } else {
                assert_eq!(*c, 0, "scale {s}");
            }
        }
        assert!(window_positive(&cells, &anchor, &cfg, k_scale).unwrap());
        assert!(!window_positive(&cells, &anchor, &cfg, 1).unwrap());
    }

    #[test]
    fn scale_ranges() {
        // deep regime: delta/(4 eps) = 8 -> scales 1..=3
        let fine = APConfig::new(3, 0.0125, 0.4, 3).unwrap();
        assert_eq!(scale_range(&fine).unwrap(), 1..=3);
        // coarse regime falls back to the domain scale
        let coarse = APConfig::new(3, 0.125, 0.8, 3).unwrap();
        assert_eq!(scale_range(&coarse).unwrap(), 1..=3);
    }

    #[test]
    fn three_aps_interval() {
        let sites: Vec<[i64; MAX_DIM]> = (0..4)
            .map(|i| {
                let mut s = [0i64; MAX_DIM];
                s[0] = i;
                s
            })
            .collect();
        let range = RangeSet::from_sites(sites, 3, 1);
        assert_eq!(count_3aps_exact(&range), 2);
    }

    #[test]
    fn three_aps_single_site() {
        let range = RangeSet::from_sites(vec![[0i64; MAX_DIM]], 0, 3);
        assert_eq!(count_3aps_exact(&range), 0);
    }

    #[test]
    fn three_aps_translation_negation_invariant() {
        let w = crate::srw::sample_walk(2, 300, 5).unwrap();
        let r = crate::srw::range_of(&w);
        let base = count_3aps_exact(&r);
        let shifted: Vec<[i64; MAX_DIM]> = r
            .iter()
            .map(|s| {
                let mut t = *s;
                t[0] += 7;
                t[1] -= 3;
                t
            })
            .collect();
        let shifted = RangeSet::from_sites(shifted, r.n, 2);
        assert_eq!(count_3aps_exact(&shifted), base);
        assert_eq!(count_3aps_exact(&r.negated()), base);
    }

    #[test]
    fn distance_transform_exact_on_small_grid() {
        let g = Grid::build(2, 1.0, 0.25).unwrap();
        let mut d = vec![f32::INFINITY; g.len];
        // two seeds
        let seeds = [[2i64, -3], [-1, 4]];
        for s in &seeds {
            d[g.lin_clamped(s, 2)] = 0.0;
        }
        distance_transform(&mut d, &g, 2);
        for x in -4..=4i64 {
            for y in -4..=4i64 {
                let lin = g.lin_clamped(&[x, y], 2);
                let best = seeds
                    .iter()
                    .map(|s| {
                        let dx = (x - s[0]) as f32;
                        let dy = (y - s[1]) as f32;
                        dx * dx + dy * dy
                    })
                    .fold(f32::INFINITY, f32::min);
                assert_eq!(d[lin], best, "({x},{y})");
            }
        }
    }
}
