//! Sibson natural-neighbour interpolation in the x-y plane.
//!
//! The Voronoi cell the query would own after insertion is built by
//! clipping a bounding square with the bisector half-planes against every
//! sample. Each neighbour's weight is the share of that cell taken from the
//! neighbour's original Voronoi cell, found by clipping again with the
//! neighbour's own bisectors.

use crate::error::{invalid, Error, Result};

type P2 = [f64; 2];

/// Natural neighbours of a query and their Sibson weights.
#[derive(Debug, Clone, PartialEq)]
pub struct NniWeights {
    pub query: P2,
    /// `(sample index, weight)` ascending by index.
    pub weights: Vec<(usize, f64)>,
}

/// How the weights were obtained.
#[derive(Debug, Clone, PartialEq)]
pub enum NniOutcome {
    Interior(NniWeights),
    /// Query on or outside the convex hull: nearest sample index.
    Exterior(usize),
}

/// Sample set prepared for repeated queries.
#[derive(Debug, Clone)]
pub struct NaturalNeighbor {
    points: Vec<P2>,
    hull: Vec<P2>,
    extent: f64,
}

fn cross(o: P2, a: P2, b: P2) -> f64 {
    (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])
}

fn convex_hull(points: &[P2]) -> Vec<P2> {
    let mut p = points.to_vec();
    p.sort_by(|a, b| a[0].total_cmp(&b[0]).then(a[1].total_cmp(&b[1])));
    p.dedup();
    if p.len() < 3 {
        return p;
    }
    let mut lower: Vec<P2> = Vec::new();
    for &q in &p {
        while lower.len() >= 2 && cross(lower[lower.len() - 2], lower[lower.len() - 1], q) <= 0.0 {
            lower.pop();
        }
        lower.push(q);
    }
    let mut upper: Vec<P2> = Vec::new();
    for &q in p.iter().rev() {
        while upper.len() >= 2 && cross(upper[upper.len() - 2], upper[upper.len() - 1], q) <= 0.0 {
            upper.pop();
        }
        upper.push(q);
    }
    lower.pop();
    upper.pop();
    lower.extend(upper);
    lower
}

fn polygon_area(poly: &[P2]) -> f64 {
    let n = poly.len();
    if n < 3 {
        return 0.0;
    }
    0.5 * (0..n)
        .map(|i| {
            let (a, b) = (poly[i], poly[(i + 1) % n]);
            a[0] * b[1] - b[0] * a[1]
        })
        .sum::<f64>()
}

/// Keeps the part of a convex polygon closer to `keep` than to `other`.
fn clip(poly: &[P2], keep: P2, other: P2) -> Vec<P2> {
    let a = [other[0] - keep[0], other[1] - keep[1]];
    let b = (other[0] * other[0] + other[1] * other[1] - keep[0] * keep[0] - keep[1] * keep[1]) / 2.0;
    let side = |p: P2| a[0] * p[0] + a[1] * p[1] - b;
    let mut out = Vec::with_capacity(poly.len() + 1);
    for i in 0..poly.len() {
        let (p, q) = (poly[i], poly[(i + 1) % poly.len()]);
        let (sp, sq) = (side(p), side(q));
        if sp <= 0.0 {
            out.push(p);
        }
        if (sp < 0.0 && sq > 0.0) || (sp > 0.0 && sq < 0.0) {
            let t = sp / (sp - sq);
            out.push([p[0] + t * (q[0] - p[0]), p[1] + t * (q[1] - p[1])]);
        }
    }
    out
}

impl NaturalNeighbor {
    /// Requires at least three non-collinear samples.
    pub fn new(points: &[P2]) -> Result<Self> {
        if points.len() < 3 {
            return Err(invalid("natural-neighbour interpolation needs at least 3 samples"));
        }
        if points.iter().flatten().any(|v| !v.is_finite()) {
            return Err(invalid("sample coordinates must be finite"));
        }
        for i in 0..points.len() {
            if points[..i].contains(&points[i]) {
                return Err(invalid(format!("sample {i} coincides with an earlier sample")));
            }
        }
        let hull = convex_hull(points);
        let (mut lo, mut hi) = ([f64::MAX; 2], [f64::MIN; 2]);
        for p in points {
            for d in 0..2 {
                lo[d] = lo[d].min(p[d]);
                hi[d] = hi[d].max(p[d]);
            }
        }
        let extent = (hi[0] - lo[0]).max(hi[1] - lo[1]);
        if hull.len() < 3 || polygon_area(&hull).abs() <= 1e-12 * extent * extent {
            return Err(invalid("samples are collinear"));
        }
        Ok(Self { points: points.to_vec(), hull, extent })
    }

    pub fn points(&self) -> &[P2] {
        &self.points
    }

    /// Strictly inside the hull, with a small relative margin.
    pub fn strictly_inside(&self, q: P2) -> bool {
        let n = self.hull.len();
        let tol = 1e-9 * self.extent * self.extent;
        (0..n).all(|i| cross(self.hull[i], self.hull[(i + 1) % n], q) > tol)
    }

    fn nearest(&self, q: P2) -> usize {
        let d = |p: &P2| (p[0] - q[0]).powi(2) + (p[1] - q[1]).powi(2);
        let mut best = 0;
        for i in 1..self.points.len() {
            if d(&self.points[i]) < d(&self.points[best]) {
                best = i;
            }
        }
        best
    }

    /// Sibson weights at `q`, or the nearest sample when `q` is not strictly
    /// inside the hull.
    pub fn weights(&self, q: P2) -> NniOutcome {
        let tol = 1e-12 * self.extent;
        if let Some(i) = self.points.iter().position(|p| (p[0] - q[0]).hypot(p[1] - q[1]) <= tol) {
            return NniOutcome::Interior(NniWeights { query: q, weights: vec![(i, 1.0)] });
        }
        if !self.strictly_inside(q) {
            return NniOutcome::Exterior(self.nearest(q));
        }
        // The cell of an interior query is bounded but grows without limit as
        // the query nears the hull, so the bounding box expands until the
        // clipped cell no longer touches it.
        let mut r = 4.0 * self.extent;
        let cell = loop {
            let mut cell = vec![[q[0] - r, q[1] - r], [q[0] + r, q[1] - r], [q[0] + r, q[1] + r], [q[0] - r, q[1] + r]];
            for p in &self.points {
                cell = clip(&cell, q, *p);
            }
            let reach = cell.iter().map(|v| (v[0] - q[0]).abs().max((v[1] - q[1]).abs())).fold(0.0, f64::max);
            if reach < r * (1.0 - 1e-9) {
                break cell;
            }
            if r > 1e12 * self.extent {
                return NniOutcome::Exterior(self.nearest(q));
            }
            r *= 8.0;
        };
        let cell_area = polygon_area(&cell);
        let reach = cell.iter().map(|v| (v[0] - q[0]).hypot(v[1] - q[1])).fold(0.0, f64::max);
        let mut weights = Vec::new();
        for (i, pi) in self.points.iter().enumerate() {
            if (pi[0] - q[0]).hypot(pi[1] - q[1]) > 2.0 * reach * (1.0 + 1e-9) {
                continue;
            }
            let mut part = cell.clone();
            for (j, pj) in self.points.iter().enumerate() {
                if j != i && !part.is_empty() {
                    part = clip(&part, *pi, *pj);
                }
            }
            let a = polygon_area(&part);
            if a > 1e-14 * cell_area {
                weights.push((i, a / cell_area));
            }
        }
        NniOutcome::Interior(NniWeights { query: q, weights })
    }

    /// Interpolated value; exterior queries take the nearest sample's value.
    pub fn interpolate(&self, values: &[f64], q: P2) -> Result<f64> {
        if values.len() != self.points.len() {
            return Err(Error::DimensionMismatch("one value per sample required".into()));
        }
        Ok(match self.weights(q) {
            NniOutcome::Interior(w) => w.weights.iter().map(|(i, wi)| wi * values[*i]).sum(),
            NniOutcome::Exterior(i) => values[i],
        })
    }
}

/// CQI at `query` as the rounded Sibson combination of sample CQIs, clamped
/// to `1..=15`. Queries outside the hull copy the nearest sample's CQI.
pub fn nni_cqi(samples: &[(P2, u8)], query: P2) -> Result<u8> {
    let pts: Vec<P2> = samples.iter().map(|s| s.0).collect();
    let nn = NaturalNeighbor::new(&pts)?;
    nni_cqi_with(&nn, &samples.iter().map(|s| s.1).collect::<Vec<_>>(), query)
}

/// As [`nni_cqi`] with a prepared sample set.
pub fn nni_cqi_with(nn: &NaturalNeighbor, cqis: &[u8], query: P2) -> Result<u8> {
    if cqis.len() != nn.points.len() {
        return Err(Error::DimensionMismatch("one CQI per sample required".into()));
    }
    match nn.weights(query) {
        NniOutcome::Interior(w) => {
            let v: f64 = w.weights.iter().map(|(i, wi)| wi * cqis[*i] as f64).sum();
            Ok(v.round().clamp(1.0, 15.0) as u8)
        }
        NniOutcome::Exterior(i) => {
            log::info!("query ({:.2}, {:.2}) outside the sample hull; using nearest CQI", query[0], query[1]);
            Ok(cqis[i])
        }
    }
}
