//! Brownian path sampling, ball-hitting with Brownian-bridge refinement,
//! hit-cell extraction, and excursion counting.
//!
//! Paths are piecewise-sampled at a base step; any query that needs finer
//! resolution subdivides steps by drawing midpoints from the exact bridge
//! law. Midpoints are keyed by their dyadic node address (see `rng`), so
//! every query against the same path sees one consistent realization: a
//! node refined for one ball has the same value when another ball, or a
//! coarser scale, refines it later.

use crate::geometry::{snap_to_grid, GridIndex, Point, MAX_DIM};
use crate::grid::CellSet;
use crate::rng::{node_gaussians, node_key, trial_rng};
use rand::Rng;
use rand_distr::StandardNormal;
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum BmError {
    #[error("horizon and dt_base must be positive finite, got T = {0}, dt = {1}")]
    BadTime(f64, f64),
    #[error("dimension {0} outside supported range 1..={MAX_DIM}")]
    BadDimension(usize),
    #[error("dimension mismatch: path is {0}-d, query is {1}-d")]
    DimensionMismatch(usize, usize),
    #[error("excursion radii need r < s, got r = {0}, s = {1}")]
    BadRadii(f64, f64),
    #[error("excursion balls must be pairwise s-disjoint")]
    OverlappingBalls,
    #[error("invalid path data: {0}")]
    BadPath(String),
}

/// A closed ball used for hitting queries.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BallSpec {
    pub center: Point,
    pub radius: f64,
}

impl BallSpec {
    pub fn new(center: Point, radius: f64) -> Self {
        assert!(radius > 0.0);
        Self { center, radius }
    }
}

/// Whether hitting queries may subdivide steps with bridge midpoints.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RefinePolicy {
    /// Recursive bridge subdivision: split any step whose segment comes
    /// within radius + 4 sqrt(dt) of the center until sqrt(dt) <= radius/8.
    Bridge,
    /// Sampled vertices only; no subdivision.
    Direct,
}

/// A sampled Brownian trajectory from the origin.
#[derive(Debug, Clone)]
pub struct PathSample {
    times: Vec<f64>,
    points: Vec<Point>,
    dt_base: f64,
    seed: u64,
    stream: u64,
}

impl PathSample {
    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn points(&self) -> &[Point] {
        &self.points
    }

    pub fn dim(&self) -> usize {
        self.points[0].dim()
    }

    pub fn dt_base(&self) -> f64 {
        self.dt_base
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn stream(&self) -> u64 {
        self.stream
    }

    pub fn horizon(&self) -> f64 {
        *self.times.last().unwrap()
    }

    /// Assemble a path from explicit data. Intended for fixtures and
    /// degenerate cases; sampled paths come from `sample_path`.
    pub fn from_parts(
        times: Vec<f64>,
        points: Vec<Point>,
        dt_base: f64,
        seed: u64,
        stream: u64,
    ) -> Result<Self, BmError> {
        if times.len() != points.len() || times.len() < 2 {
            return Err(BmError::BadPath("need matching times/points, len >= 2".into()));
        }
        if !times.windows(2).all(|w| w[1] > w[0]) {
            return Err(BmError::BadPath("times must be strictly increasing".into()));
        }
        let d = points[0].dim();
        if points.iter().any(|p| p.dim() != d) {
            return Err(BmError::BadPath("mixed dimensions".into()));
        }
        Ok(Self { times, points, dt_base, seed, stream })
    }
}

/// Sample a Brownian path on [0, T] with ceil(T / dt_base) steps, the last
/// step shortened to land on T exactly. Deterministic per (seed, stream).
pub fn sample_path_stream(
    dim: usize,
    horizon: f64,
    dt_base: f64,
    seed: u64,
    stream: u64,
) -> Result<PathSample, BmError> {
    if dim == 0 || dim > MAX_DIM {
        return Err(BmError::BadDimension(dim));
    }
    if !(horizon > 0.0 && horizon.is_finite() && dt_base > 0.0 && dt_base.is_finite()) {
        return Err(BmError::BadTime(horizon, dt_base));
    }
    let steps = (horizon / dt_base).ceil() as usize;
    let steps = steps.max(1);
    let mut rng = trial_rng(seed, stream);
    let mut times = Vec::with_capacity(steps + 1);
    let mut points = Vec::with_capacity(steps + 1);
    times.push(0.0);
    points.push(Point::origin(dim).unwrap());
    let mut cur = [0.0f64; MAX_DIM];
    let mut t = 0.0;
    for i in 0..steps {
        let dt = if i + 1 == steps { horizon - t } else { dt_base };
        let sd = dt.sqrt();
        for c in cur.iter_mut().take(dim) {
            let z: f64 = rng.sample(StandardNormal);
            *c += sd * z;
        }
        t = if i + 1 == steps { horizon } else { t + dt_base };
        times.push(t);
        points.push(Point::new(&cur[..dim]).unwrap());
    }
    Ok(PathSample { times, points, dt_base, seed, stream })
}

/// `sample_path_stream` on stream 0.
pub fn sample_path(
    dim: usize,
    horizon: f64,
    dt_base: f64,
    seed: u64,
) -> Result<PathSample, BmError> {
    sample_path_stream(dim, horizon, dt_base, seed, 0)
}

#[inline]
fn sq_dist(a: &[f64], b: &[f64], dim: usize) -> f64 {
    let mut s = 0.0;
    for i in 0..dim {
        let d = a[i] - b[i];
        s += d * d;
    }
    s
}

/// Distance from point `c` to segment [a, b].
#[inline]
fn segment_dist(a: &[f64], b: &[f64], c: &[f64], dim: usize) -> f64 {
    let mut ab2 = 0.0;
    let mut dot = 0.0;
    for i in 0..dim {
        let e = b[i] - a[i];
        ab2 += e * e;
        dot += (c[i] - a[i]) * e;
    }
    if ab2 == 0.0 {
        return sq_dist(a, c, dim).sqrt();
    }
    let t = (dot / ab2).clamp(0.0, 1.0);
    let mut s = 0.0;
    for i in 0..dim {
        let p = a[i] + t * (b[i] - a[i]);
        let d = p - c[i];
        s += d * d;
    }
    s.sqrt()
}

/// Bridge midpoint of the dyadic interval (`level`, `offset`) of base step
/// `step`, whose endpoints are `a`, `b` over duration `dt`.
#[inline]
fn bridge_midpoint(
    path: &PathSample,
    step: u32,
    level: u32,
    offset: u32,
    a: &[f64; MAX_DIM],
    b: &[f64; MAX_DIM],
    dt: f64,
    dim: usize,
) -> [f64; MAX_DIM] {
    let key = node_key(path.seed, path.stream, step, level + 1, 2 * offset + 1);
    let mut z = [0.0f64; MAX_DIM];
    node_gaussians(key, dim, &mut z);
    let sd = dt.sqrt() * 0.5;
    let mut m = [0.0f64; MAX_DIM];
    for i in 0..dim {
        m[i] = 0.5 * (a[i] + b[i]) + sd * z[i];
    }
    m
}

fn hits_rec(
    path: &PathSample,
    step: u32,
    level: u32,
    offset: u32,
    a: &[f64; MAX_DIM],
    b: &[f64; MAX_DIM],
    dt: f64,
    center: &[f64; MAX_DIM],
    radius: f64,
    dim: usize,
) -> bool {
    let sd = dt.sqrt();
    if sd <= radius / 8.0 {
        return false;
    }
    if segment_dist(a, b, center, dim) > radius + 4.0 * sd {
        return false;
    }
    let m = bridge_midpoint(path, step, level, offset, a, b, dt, dim);
    if sq_dist(&m, center, dim) <= radius * radius {
        return true;
    }
    let half = dt * 0.5;
    hits_rec(path, step, level + 1, 2 * offset, a, &m, half, center, radius, dim)
        || hits_rec(path, step, level + 1, 2 * offset + 1, &m, b, half, center, radius, dim)
}

/// Ball-hitting decision: true when any sampled point lies inside the
/// ball, or when bridge refinement produces an intra-step point inside.
pub fn hits_ball(path: &PathSample, ball: &BallSpec, refine: RefinePolicy) -> Result<bool, BmError> {
    let dim = path.dim();
    if ball.center.dim() != dim {
        return Err(BmError::DimensionMismatch(dim, ball.center.dim()));
    }
    let mut center = [0.0f64; MAX_DIM];
    center[..dim].copy_from_slice(ball.center.coords());
    let r2 = ball.radius * ball.radius;

    let raw = |p: &Point| {
        let mut c = [0.0f64; MAX_DIM];
        c[..dim].copy_from_slice(p.coords());
        c
    };
    let first = raw(&path.points[0]);
    if sq_dist(&first, &center, dim) <= r2 {
        return Ok(true);
    }
    let mut a = first;
    for i in 1..path.points.len() {
        let b = raw(&path.points[i]);
        if sq_dist(&b, &center, dim) <= r2 {
            return Ok(true);
        }
        if refine == RefinePolicy::Bridge {
            let dt = path.times[i] - path.times[i - 1];
            if hits_rec(path, (i - 1) as u32, 0, 0, &a, &b, dt, &center, ball.radius, dim) {
                return Ok(true);
            }
        }
        a = b;
    }
    Ok(false)
}

/// A refined polyline of the path: the base vertices plus all bridge
/// vertices down to `target_sqrt_dt` wherever the path comes near the
/// focus ball (center, radius), with the 4 sqrt(dt) proximity inflation.
/// Far steps stay coarse; their omitted sub-vertices could not have
/// mattered to queries inside the focus.
pub fn refine_near(
    path: &PathSample,
    focus_center: &Point,
    focus_radius: f64,
    target_sqrt_dt: f64,
) -> Vec<Point> {
    let dim = path.dim();
    let target_dt = target_sqrt_dt * target_sqrt_dt;
    let mut center = [0.0f64; MAX_DIM];
    center[..dim].copy_from_slice(focus_center.coords());

    let mut out: Vec<Point> = Vec::with_capacity(path.points.len());
    out.push(path.points[0]);

    struct Ctx<'a> {
        path: &'a PathSample,
        dim: usize,
        center: [f64; MAX_DIM],
        focus_radius: f64,
        target_dt: f64,
    }
    fn rec(
        ctx: &Ctx,
        step: u32,
        level: u32,
        offset: u32,
        a: &[f64; MAX_DIM],
        b: &[f64; MAX_DIM],
        dt: f64,
        out: &mut Vec<Point>,
    ) {
        if dt <= ctx.target_dt
            || segment_dist(a, b, &ctx.center, ctx.dim) > ctx.focus_radius + 4.0 * dt.sqrt()
        {
            out.push(Point::new(&b[..ctx.dim]).unwrap());
            return;
        }
        let m = bridge_midpoint(ctx.path, step, level, offset, a, b, dt, ctx.dim);
        let half = dt * 0.5;
        rec(ctx, step, level + 1, 2 * offset, a, &m, half, out);
        rec(ctx, step, level + 1, 2 * offset + 1, &m, b, half, out);
    }

    let ctx = Ctx { path, dim, center, focus_radius, target_dt };
    let raw = |p: &Point| {
        let mut c = [0.0f64; MAX_DIM];
        c[..dim].copy_from_slice(p.coords());
        c
    };
    let mut a = raw(&path.points[0]);
    for i in 1..path.points.len() {
        let b = raw(&path.points[i]);
        let dt = path.times[i] - path.times[i - 1];
        rec(&ctx, (i - 1) as u32, 0, 0, &a, &b, dt, &mut out);
        a = b;
    }
    out
}

/// Collect the lattice cells (spacing eps / 3) whose center lies in the
/// closed domain ball and within eps of some vertex of `vertices`.
pub fn hit_cells_from_vertices(
    vertices: &[Point],
    eps: f64,
    domain_radius: f64,
    dim: usize,
) -> CellSet {
    let spacing = eps / 3.0;
    let mut set = CellSet::new(spacing, dim, domain_radius);
    let eps2 = eps * eps;
    let r2 = domain_radius * domain_radius;

    let mut prev: Option<[f64; MAX_DIM]> = None;
    let mut lo = [0i64; MAX_DIM];
    let mut hi = [0i64; MAX_DIM];
    let mut idx = [0i64; MAX_DIM];
    for v in vertices {
        let mut vc = [0.0f64; MAX_DIM];
        vc[..dim].copy_from_slice(v.coords());
        // a vertex whose eps-ball was fully covered by the previous vertex
        // cannot contribute new cells
        if let Some(p) = prev {
            if sq_dist(&p, &vc, dim) == 0.0 {
                continue;
            }
        }
        for i in 0..dim {
            lo[i] = ((vc[i] - eps) / spacing).ceil() as i64;
            hi[i] = ((vc[i] + eps) / spacing).floor() as i64;
            idx[i] = lo[i];
        }
        'cells: loop {
            let mut c = [0.0f64; MAX_DIM];
            let mut inside = 0.0;
            for i in 0..dim {
                c[i] = idx[i] as f64 * spacing;
                inside += c[i] * c[i];
            }
            if inside <= r2 && sq_dist(&c, &vc, dim) <= eps2 {
                let covered_by_prev = match prev {
                    Some(p) => sq_dist(&c, &p, dim) <= eps2,
                    None => false,
                };
                if !covered_by_prev {
                    let mut cell = [0i32; MAX_DIM];
                    for i in 0..dim {
                        cell[i] = idx[i] as i32;
                    }
                    set.insert(GridIndex::new(&cell[..dim]).unwrap());
                }
            }
            // odometer over the cube
            for i in (0..dim).rev() {
                idx[i] += 1;
                if idx[i] <= hi[i] {
                    continue 'cells;
                }
                idx[i] = lo[i];
            }
            break;
        }
        prev = Some(vc);
    }
    set.finish();
    set
}

/// Hit cells of a path at scale eps: refine near the domain ball to
/// sqrt(dt) <= eps / 8, then keep every cell whose center the refined
/// polyline approaches within eps.
pub fn hit_cells(path: &PathSample, eps: f64, domain_radius: f64) -> CellSet {
    let dim = path.dim();
    let focus = Point::origin(dim).unwrap();
    let vertices = refine_near(path, &focus, domain_radius + eps, eps / 8.0);
    hit_cells_from_vertices(&vertices, eps, domain_radius, dim)
}

/// Count completed enter-r / exit-s excursion pairs around a family of
/// pairwise s-disjoint balls.
pub fn excursion_count(
    path: &PathSample,
    balls: &[BallSpec],
    r: f64,
    s: f64,
) -> Result<u32, BmError> {
    if !(r < s) || r <= 0.0 {
        return Err(BmError::BadRadii(r, s));
    }
    let dim = path.dim();
    for b in balls {
        if b.center.dim() != dim {
            return Err(BmError::DimensionMismatch(dim, b.center.dim()));
        }
    }
    for (i, a) in balls.iter().enumerate() {
        for b in balls.iter().skip(i + 1) {
            if a.center.dist(&b.center) <= 2.0 * s {
                return Err(BmError::OverlappingBalls);
            }
        }
    }
    if balls.is_empty() {
        return Ok(0);
    }

    // refine near every ball at entry resolution
    let mut vertices: Option<Vec<Point>> = None;
    for b in balls {
        let v = match vertices {
            None => refine_near(path, &b.center, s, r / 8.0),
            Some(_) => {
                // multi-ball: refine once against a bounding focus
                break;
            }
        };
        vertices = Some(v);
    }
    let vertices = if balls.len() == 1 {
        vertices.unwrap()
    } else {
        // bounding ball around all centers keeps refinement consistent
        let mut c = [0.0f64; MAX_DIM];
        for b in balls {
            for i in 0..dim {
                c[i] += b.center.coords()[i];
            }
        }
        for v in c.iter_mut().take(dim) {
            *v /= balls.len() as f64;
        }
        let centroid = Point::new(&c[..dim]).unwrap();
        let spread = balls
            .iter()
            .map(|b| b.center.dist(&centroid))
            .fold(0.0f64, f64::max);
        refine_near(path, &centroid, spread + s, r / 8.0)
    };

    let mut m = 0u32;
    let mut inside = false;
    for v in &vertices {
        let dmin = balls
            .iter()
            .map(|b| v.dist(&b.center))
            .fold(f64::INFINITY, f64::min);
        if !inside {
            if dmin <= r {
                inside = true;
            }
        } else if dmin > s {
            inside = false;
            m += 1;
        }
    }
    Ok(m)
}

/// Convenience: the snapped cell of a sampled point, for containment tests.
pub fn snapped_cell(p: &Point, eps: f64) -> GridIndex {
    snap_to_grid(p, eps / 3.0)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_path_shape() {
        let p = sample_path(3, 0.5, 0.5, 9).unwrap();
        assert_eq!(p.points().len(), 2);
        assert_eq!(p.points()[0], Point::origin(3).unwrap());
        assert_eq!(p.times(), &[0.0, 0.5]);
    }

    #[test]
    fn deterministic_per_seed() {
        let a = sample_path(3, 1.0, 0.01, 123).unwrap();
        let b = sample_path(3, 1.0, 0.01, 123).unwrap();
        assert_eq!(a.points(), b.points());
        let c = sample_path(3, 1.0, 0.01, 124).unwrap();
        assert_ne!(a.points(), c.points());
    }

    #[test]
    fn rejects_bad_params() {
        assert!(sample_path(3, 0.0, 0.1, 1).is_err());
        assert!(sample_path(3, 1.0, -0.1, 1).is_err());
        assert!(sample_path(6, 1.0, 0.1, 1).is_err());
    }

    #[test]
    fn terminal_variance_matches_dt() {
        // W(1) per-coordinate variance should be 1 within 2%
        let n = 100_000;
        let mut sum = 0.0;
        let mut sumsq = 0.0;
        for i in 0..n {
            let p = sample_path_stream(1, 1.0, 1.0, 77, i).unwrap();
            let w = p.points().last().unwrap().coords()[0];
            sum += w;
            sumsq += w * w;
        }
        let mean = sum / n as f64;
        let var = sumsq / n as f64 - mean * mean;
        assert!((var - 1.0).abs() < 0.02, "var = {var}");
        assert!(mean.abs() < 0.02, "mean = {mean}");
    }

    #[test]
    fn hits_when_point_inside() {
        let path = PathSample::from_parts(
            vec![0.0, 1.0],
            vec![Point::origin(3).unwrap(), Point::new(&[2.0, 0.0, 0.0]).unwrap()],
            1.0,
            1,
            0,
        )
        .unwrap();
        let ball = BallSpec::new(Point::new(&[2.0, 0.0, 0.0]).unwrap(), 0.1);
        assert!(hits_ball(&path, &ball, RefinePolicy::Bridge).unwrap());
    }

    #[test]
    fn far_path_never_refines() {
        // min segment distance beyond radius + 6 sqrt(dt): no hit possible
        let dt = 0.0001;
        let mut times = vec![0.0];
        let mut pts = vec![Point::origin(3).unwrap()];
        for i in 1..=100 {
            times.push(i as f64 * dt);
            pts.push(Point::new(&[i as f64 * 0.001, 0.0, 0.0]).unwrap());
        }
        let path = PathSample::from_parts(times, pts, dt, 5, 0).unwrap();
        let ball = BallSpec::new(Point::new(&[0.0, 1.0, 0.0]).unwrap(), 0.05);
        assert!(!hits_ball(&path, &ball, RefinePolicy::Bridge).unwrap());
    }

    #[test]
    fn dimension_mismatch_rejected() {
        let path = sample_path(3, 0.1, 0.1, 1).unwrap();
        let ball = BallSpec::new(Point::new(&[0.0, 0.0]).unwrap(), 0.1);
        assert!(matches!(
            hits_ball(&path, &ball, RefinePolicy::Bridge),
            Err(BmError::DimensionMismatch(3, 2))
        ));
    }

    #[test]
    fn monotone_in_radius_on_fixed_corpus() {
        // hit at radius rho implies hit at 2 rho for the same path
        for seed in 0..40u64 {
            let path = sample_path(3, 1.0, 0.001, 1000 + seed).unwrap();
            let center = Point::new(&[0.4, 0.1, -0.2]).unwrap();
            let small = BallSpec::new(center, 0.05);
            let big = BallSpec::new(center, 0.10);
            if hits_ball(&path, &small, RefinePolicy::Bridge).unwrap() {
                assert!(hits_ball(&path, &big, RefinePolicy::Bridge).unwrap());
            }
        }
    }

    #[test]
    fn degenerate_path_hits_only_origin_cells() {
        // constant path, base resolution already below the refinement stop
        let eps = 0.3;
        let n = 20;
        let times: Vec<f64> = (0..=n).map(|i| i as f64 * 1e-4).collect();
        let pts = vec![Point::origin(3).unwrap(); n + 1];
        let path = PathSample::from_parts(times, pts, 1e-4, 3, 0).unwrap();
        let cells = hit_cells(&path, eps, 1.0);
        let spacing = eps / 3.0;
        for c in cells.cells() {
            assert!(c.center(spacing).norm() <= eps + 1e-12);
        }
        // and every in-ball cell center within eps of the origin is present
        let reach = (eps / spacing).ceil() as i32;
        let mut expected = 0;
        for x in -reach..=reach {
            for y in -reach..=reach {
                for z in -reach..=reach {
                    let g = GridIndex::new(&[x, y, z]).unwrap();
                    if g.center(spacing).norm() <= eps {
                        expected += 1;
                        assert!(cells.contains(&g));
                    }
                }
            }
        }
        assert_eq!(cells.len(), expected);
    }

    #[test]
    fn hit_cells_cover_snapped_sample_points() {
        let path = sample_path(3, 0.3, 0.001, 21).unwrap();
        let eps = 0.1;
        let cells = hit_cells(&path, eps, 1.0);
        for p in path.points() {
            if p.norm() <= 1.0 - eps {
                let g = snapped_cell(p, eps);
                assert!(cells.contains(&g), "missing snapped cell of {:?}", p);
            }
        }
    }

    #[test]
    fn hit_cells_match_exhaustive_scan_at_coarse_eps() {
        // dt small enough that neither route refines: decisions coincide
        let eps = 0.25;
        let path = sample_path(3, 0.05, 0.0005, 99).unwrap();
        let cells = hit_cells(&path, eps, 1.0);
        let spacing = eps / 3.0;
        let reach = (1.0 / spacing).ceil() as i32;
        let mut brute = 0usize;
        for x in -reach..=reach {
            for y in -reach..=reach {
                for z in -reach..=reach {
                    let g = GridIndex::new(&[x, y, z]).unwrap();
                    let c = g.center(spacing);
                    if c.norm() > 1.0 {
                        continue;
                    }
                    let ball = BallSpec::new(c, eps);
                    if hits_ball(&path, &ball, RefinePolicy::Bridge).unwrap() {
                        brute += 1;
                        assert!(cells.contains(&g), "fast set missing {:?}", g);
                    }
                }
            }
        }
        assert_eq!(cells.len(), brute);
    }

    #[test]
    fn excursions_zero_when_far() {
        let path = sample_path(3, 0.5, 0.001, 11).unwrap();
        let ball = BallSpec::new(Point::new(&[50.0, 0.0, 0.0]).unwrap(), 1.0);
        assert_eq!(excursion_count(&path, &[ball], 0.5, 1.0).unwrap(), 0);
    }

    #[test]
    fn excursion_preconditions() {
        let path = sample_path(3, 0.1, 0.01, 1).unwrap();
        let b = BallSpec::new(Point::origin(3).unwrap(), 1.0);
        assert!(matches!(
            excursion_count(&path, &[b], 0.2, 0.1),
            Err(BmError::BadRadii(_, _))
        ));
        let b2 = BallSpec::new(Point::new(&[0.15, 0.0, 0.0]).unwrap(), 1.0);
        assert!(matches!(
            excursion_count(&path, &[b, b2], 0.05, 0.1),
            Err(BmError::OverlappingBalls)
        ));
    }

    #[test]
    fn excursions_monotone_in_r() {
        let center = Point::new(&[0.05, 0.0, 0.0]).unwrap();
        for seed in 0..20u64 {
            let path = sample_path(3, 1.0, 0.001, 300 + seed).unwrap();
            let ball = BallSpec::new(center, 1.0);
            let m_small = excursion_count(&path, &[ball], 0.02, 0.2).unwrap();
            let m_big = excursion_count(&path, &[ball], 0.05, 0.2).unwrap();
            assert!(m_small <= m_big, "seed {seed}: {m_small} > {m_big}");
        }
    }
}
