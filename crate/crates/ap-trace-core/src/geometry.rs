//! Dimension-generic points, grids, and the exact/approximate
//! arithmetic-progression predicates the samplers and detectors consume.
//!
//! A tuple (x_1, ..., x_k) is an eps-approximate AP when every interior
//! point satisfies |x_{i-1} + x_{i+1} - 2 x_i| <= 4 eps, and it is
//! delta-separated when consecutive points are at distance >= delta - 2 eps.
//! All inequalities are closed so boundary cases are deterministic.

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Largest supported ambient dimension.
pub const MAX_DIM: usize = 5;

#[derive(Debug, Error, PartialEq)]
pub enum GeometryError {
    #[error("dimension {0} outside supported range 1..={MAX_DIM}")]
    BadDimension(usize),
    #[error("dimension mismatch: {0} vs {1}")]
    DimensionMismatch(usize, usize),
    #[error("need at least 3 points for an AP defect, got {0}")]
    TooFewPoints(usize),
    #[error("tuple length {got} does not match configured k = {want}")]
    WrongTupleLength { got: usize, want: usize },
    #[error("invalid config: {0}")]
    BadConfig(String),
}

/// A point in R^d, d <= 5. Copy-friendly so hot loops avoid allocation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Point {
    coords: [f64; MAX_DIM],
    dim: u8,
}

impl Point {
    pub fn new(coords: &[f64]) -> Result<Self, GeometryError> {
        let d = coords.len();
        if d == 0 || d > MAX_DIM {
            return Err(GeometryError::BadDimension(d));
        }
        let mut c = [0.0; MAX_DIM];
        c[..d].copy_from_slice(coords);
        Ok(Self { coords: c, dim: d as u8 })
    }

    /// Origin of R^d.
    pub fn origin(dim: usize) -> Result<Self, GeometryError> {
        Self::new(&vec![0.0; dim])
    }

    pub fn dim(&self) -> usize {
        self.dim as usize
    }

    pub fn coords(&self) -> &[f64] {
        &self.coords[..self.dim as usize]
    }

    pub fn norm(&self) -> f64 {
        self.coords().iter().map(|c| c * c).sum::<f64>().sqrt()
    }

    pub fn dist(&self, other: &Point) -> f64 {
        debug_assert_eq!(self.dim, other.dim);
        self.coords()
            .iter()
            .zip(other.coords())
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt()
    }

    /// Lexicographic comparison by coordinates; total order on equal dims.
    pub fn lex_le(&self, other: &Point) -> bool {
        for (a, b) in self.coords().iter().zip(other.coords()) {
            if a < b {
                return true;
            }
            if a > b {
                return false;
            }
        }
        true
    }
}

/// A cell of the detection lattice. The spacing lives one level up (in
/// `CellSet` or the snapping call) so the index stays hashable.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct GridIndex {
    cell: [i32; MAX_DIM],
    dim: u8,
}

impl GridIndex {
    pub fn new(cell: &[i32]) -> Result<Self, GeometryError> {
        let d = cell.len();
        if d == 0 || d > MAX_DIM {
            return Err(GeometryError::BadDimension(d));
        }
        let mut c = [0; MAX_DIM];
        c[..d].copy_from_slice(cell);
        Ok(Self { cell: c, dim: d as u8 })
    }

    pub fn dim(&self) -> usize {
        self.dim as usize
    }

    pub fn cell(&self) -> &[i32] {
        &self.cell[..self.dim as usize]
    }

    /// Cell center at the given spacing.
    pub fn center(&self, spacing: f64) -> Point {
        let mut c = [0.0; MAX_DIM];
        for (i, &v) in self.cell().iter().enumerate() {
            c[i] = v as f64 * spacing;
        }
        Point { coords: c, dim: self.dim }
    }
}

/// Snap a point to the nearest lattice cell, rounding half up per
/// coordinate; the returned center is within spacing * sqrt(d) / 2 of `p`.
pub fn snap_to_grid(p: &Point, spacing: f64) -> GridIndex {
    debug_assert!(spacing > 0.0);
    let mut c = [0; MAX_DIM];
    for (i, &v) in p.coords().iter().enumerate() {
        c[i] = (v / spacing + 0.5).floor() as i32;
    }
    GridIndex { cell: c, dim: p.dim }
}

/// Maximum interior deviation from an exact AP:
/// max_i |x_{i-1} + x_{i+1} - 2 x_i|. Zero exactly on exact APs.
pub fn ap_defect(points: &[Point]) -> Result<f64, GeometryError> {
    if points.len() < 3 {
        return Err(GeometryError::TooFewPoints(points.len()));
    }
    let d = points[0].dim();
    for p in points {
        if p.dim() != d {
            return Err(GeometryError::DimensionMismatch(d, p.dim()));
        }
    }
    let mut worst = 0.0f64;
    for w in points.windows(3) {
        let mut s = 0.0;
        for i in 0..d {
            let v = w[0].coords()[i] + w[2].coords()[i] - 2.0 * w[1].coords()[i];
            s += v * v;
        }
        worst = worst.max(s.sqrt());
    }
    Ok(worst)
}

/// Minimum distance between consecutive tuple points.
pub fn min_gap(points: &[Point]) -> f64 {
    points
        .windows(2)
        .map(|w| w[0].dist(&w[1]))
        .fold(f64::INFINITY, f64::min)
}

/// Experiment-level AP parameters. `delta` is the separation scale and
/// `eps` the approximation scale; candidate tuples live in the closed ball
/// of radius `domain_radius` around the origin.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct APConfig {
    pub k: usize,
    pub eps: f64,
    pub delta: f64,
    pub dim: usize,
    pub domain_radius: f64,
}

impl APConfig {
    pub fn new(k: usize, eps: f64, delta: f64, dim: usize) -> Result<Self, GeometryError> {
        Self::with_domain(k, eps, delta, dim, 1.0)
    }

    pub fn with_domain(
        k: usize,
        eps: f64,
        delta: f64,
        dim: usize,
        domain_radius: f64,
    ) -> Result<Self, GeometryError> {
        let cfg = Self { k, eps, delta, dim, domain_radius };
        cfg.check()?;
        Ok(cfg)
    }

    /// Hard validity: rejects configs where the separation condition
    /// degenerates (delta <= 2 eps would admit zero-difference tuples).
    pub fn check(&self) -> Result<(), GeometryError> {
        if self.dim == 0 || self.dim > MAX_DIM {
            return Err(GeometryError::BadDimension(self.dim));
        }
        if !(2..=8).contains(&self.k) {
            return Err(GeometryError::BadConfig(format!(
                "k = {} outside 2..=8",
                self.k
            )));
        }
        if !(self.eps > 0.0 && self.eps.is_finite()) {
            return Err(GeometryError::BadConfig("eps must be positive".into()));
        }
        if !(self.delta > 0.0 && self.delta.is_finite()) {
            return Err(GeometryError::BadConfig("delta must be positive".into()));
        }
        if self.delta <= 2.0 * self.eps {
            return Err(GeometryError::BadConfig(format!(
                "delta = {} must exceed 2 eps = {} or separation degenerates",
                self.delta,
                2.0 * self.eps
            )));
        }
        if self.delta > 2.0 * self.domain_radius {
            return Err(GeometryError::BadConfig(format!(
                "delta = {} exceeds domain diameter {}",
                self.delta,
                2.0 * self.domain_radius
            )));
        }
        if !(self.domain_radius > 0.0 && self.domain_radius.is_finite()) {
            return Err(GeometryError::BadConfig("domain_radius must be positive".into()));
        }
        Ok(())
    }

    /// Soft regime check: the asymptotic analysis wants eps < delta / 4.
    /// Callers may still run outside the regime; `validate`-style tooling
    /// reports it as a violation.
    pub fn in_asymptotic_regime(&self) -> bool {
        self.eps < self.delta / 4.0
    }

    /// Separation threshold for consecutive gaps.
    pub fn gap_floor(&self) -> f64 {
        self.delta - 2.0 * self.eps
    }

    /// Defect tolerance.
    pub fn defect_ceiling(&self) -> f64 {
        4.0 * self.eps
    }

    /// Sound upper bound on the first gap of any admissible tuple: gaps
    /// drift by at most 4 eps per step and the span fits in the domain
    /// ball, so g_1 <= 2 R / (k-1) + 2 eps (k-2).
    pub fn gap_ceiling(&self) -> f64 {
        2.0 * self.domain_radius / (self.k as f64 - 1.0)
            + 2.0 * self.eps * (self.k as f64 - 2.0)
    }
}

/// A detected tuple with its approximation defect and separation margin,
/// stored in canonical orientation (first point lex <= last point).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct APCandidate {
    pub points: Vec<Point>,
    pub eps: f64,
    pub defect: f64,
    pub min_gap: f64,
}

impl APCandidate {
    /// Build from a tuple, canonicalizing orientation. Fails when the
    /// membership conditions do not hold for `cfg`.
    pub fn new(points: Vec<Point>, cfg: &APConfig) -> Result<Self, GeometryError> {
        if !is_candidate(&points, cfg)? {
            return Err(GeometryError::BadConfig(
                "tuple fails candidate conditions".into(),
            ));
        }
        let mut points = points;
        if !points[0].lex_le(points.last().unwrap()) {
            points.reverse();
        }
        let defect = if points.len() >= 3 { ap_defect(&points)? } else { 0.0 };
        let min_gap = min_gap(&points);
        Ok(Self { points, eps: cfg.eps, defect, min_gap })
    }

    /// Distance from the origin to the nearest tuple point.
    pub fn dist_to_origin(&self) -> f64 {
        self.points
            .iter()
            .map(|p| p.norm())
            .fold(f64::INFINITY, f64::min)
    }
}

/// Membership test: defect <= 4 eps, consecutive gaps >= delta - 2 eps,
/// and every point inside the closed domain ball. Closed inequalities
/// throughout; k = 2 tuples have no interior, hence no defect condition.
pub fn is_candidate(points: &[Point], cfg: &APConfig) -> Result<bool, GeometryError> {
    if points.len() != cfg.k {
        return Err(GeometryError::WrongTupleLength { got: points.len(), want: cfg.k });
    }
    if points.len() >= 3 {
        let defect = ap_defect(points)?;
        if defect > cfg.defect_ceiling() {
            return Ok(false);
        }
    } else {
        let d = points[0].dim();
        for p in points {
            if p.dim() != d {
                return Err(GeometryError::DimensionMismatch(d, p.dim()));
            }
        }
    }
    if min_gap(points) < cfg.gap_floor() {
        return Ok(false);
    }
    Ok(points.iter().all(|p| p.norm() <= cfg.domain_radius))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pt(c: &[f64]) -> Point {
        Point::new(c).unwrap()
    }

    #[test]
    fn defect_exact_ap_is_zero() {
        let pts = [pt(&[0., 0., 0.]), pt(&[1., 0., 0.]), pt(&[2., 0., 0.])];
        assert_eq!(ap_defect(&pts).unwrap(), 0.0);
    }

    #[test]
    fn defect_unit_offset() {
        let pts = [pt(&[0., 0., 0.]), pt(&[1., 0., 0.]), pt(&[2., 1., 0.])];
        assert_eq!(ap_defect(&pts).unwrap(), 1.0);
    }

    #[test]
    fn defect_errors() {
        assert_eq!(
            ap_defect(&[pt(&[0.]), pt(&[1.])]).unwrap_err(),
            GeometryError::TooFewPoints(2)
        );
        let mixed = [pt(&[0., 0.]), pt(&[1., 0.]), pt(&[2.])];
        assert!(matches!(
            ap_defect(&mixed).unwrap_err(),
            GeometryError::DimensionMismatch(2, 1)
        ));
    }

    #[test]
    fn candidate_separation() {
        let cfg = APConfig::new(3, 0.01, 0.1, 3).unwrap();
        let wide = [pt(&[0., 0., 0.]), pt(&[0.5, 0., 0.]), pt(&[1.0, 0., 0.])];
        assert!(is_candidate(&wide, &cfg).unwrap());
        let tight = [pt(&[0., 0., 0.]), pt(&[0.01, 0., 0.]), pt(&[0.02, 0., 0.])];
        assert!(!is_candidate(&tight, &cfg).unwrap());
    }

    #[test]
    fn candidate_defect_boundary_closed() {
        // defect exactly 4 eps stays a candidate
        let cfg = APConfig::new(3, 0.05, 0.3, 3).unwrap();
        let pts = [
            pt(&[0., 0., 0.]),
            pt(&[0.4, 0., 0.]),
            pt(&[0.8, 0.2, 0.]), // defect = |(0,0.2,0)| = 0.2 = 4 eps
        ];
        assert_eq!(ap_defect(&pts).unwrap(), 0.2);
        assert!(is_candidate(&pts, &cfg).unwrap());
    }

    #[test]
    fn candidate_domain_ball() {
        let cfg = APConfig::new(3, 0.01, 0.1, 3).unwrap();
        let out = [pt(&[0.6, 0., 0.]), pt(&[0.8, 0., 0.]), pt(&[1.01, 0., 0.])];
        assert!(!is_candidate(&out, &cfg).unwrap());
    }

    #[test]
    fn snap_half_up() {
        assert_eq!(snap_to_grid(&pt(&[0.49, 0., 0.]), 1.0).cell(), &[0, 0, 0]);
        assert_eq!(snap_to_grid(&pt(&[0.5, 0., 0.]), 1.0).cell(), &[1, 0, 0]);
        assert_eq!(snap_to_grid(&pt(&[-0.5, 0., 0.]), 1.0).cell(), &[0, 0, 0]);
    }

    #[test]
    fn snap_idempotent_on_centers() {
        let g = GridIndex::new(&[3, -2, 7]).unwrap();
        let c = g.center(0.25);
        assert_eq!(snap_to_grid(&c, 0.25), g);
    }

    #[test]
    fn config_invariants() {
        assert!(APConfig::new(5, 0.01, 0.1, 3).is_ok());
        // separation degenerates
        assert!(APConfig::new(5, 0.06, 0.1, 3).is_err());
        // k out of range
        assert!(APConfig::new(9, 0.01, 0.1, 3).is_err());
        // delta wider than the domain
        assert!(APConfig::with_domain(5, 0.01, 2.5, 3, 1.0).is_err());
        // regime flag is soft
        let coarse = APConfig::new(5, 0.03, 0.1, 3).unwrap();
        assert!(!coarse.in_asymptotic_regime());
        let fine = APConfig::new(5, 0.02, 0.1, 3).unwrap();
        assert!(fine.in_asymptotic_regime());
    }

    #[test]
    fn candidate_canonicalizes() {
        let cfg = APConfig::new(3, 0.01, 0.2, 2).unwrap();
        let fwd = vec![pt(&[-0.4, 0.]), pt(&[0., 0.]), pt(&[0.4, 0.])];
        let rev: Vec<Point> = fwd.iter().rev().cloned().collect();
        let a = APCandidate::new(fwd, &cfg).unwrap();
        let b = APCandidate::new(rev, &cfg).unwrap();
        assert_eq!(a, b);
    }
}
