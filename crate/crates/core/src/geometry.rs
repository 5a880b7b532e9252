//! Point clouds, farthest point sampling, ball-query grouping and feature
//! gathering.
//!
//! The O(N·M) distance scan in [`ball_query`] is the reference path.
//! [`ball_query_grid`] buckets points into a uniform grid and must return
//! exactly the same neighborhoods.

use std::cmp::Ordering;
use std::collections::HashMap;

use crate::error::{Error, Result};

pub type Point = [f64; 3];

/// Row-aligned per-point feature block.
#[derive(Clone, Debug, PartialEq)]
pub struct Features {
    width: usize,
    data: Vec<f64>,
}

impl Features {
    pub fn new(width: usize, data: Vec<f64>) -> Result<Self> {
        if width == 0 && !data.is_empty() || width > 0 && !data.len().is_multiple_of(width) {
            return Err(Error::dim(format!(
                "{} feature values do not split into rows of width {width}",
                data.len()
            )));
        }
        Ok(Features { width, data })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn rows(&self) -> usize {
        self.data.len().checked_div(self.width).unwrap_or(0)
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.width..(i + 1) * self.width]
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PointCloud {
    points: Vec<Point>,
    features: Option<Features>,
}

impl PointCloud {
    pub fn new(points: Vec<Point>) -> Result<Self> {
        if let Some(i) = points.iter().position(|p| p.iter().any(|c| !c.is_finite())) {
            return Err(Error::Degenerate(format!("point {i} has a non-finite coordinate")));
        }
        Ok(PointCloud { points, features: None })
    }

    pub fn with_features(points: Vec<Point>, features: Features) -> Result<Self> {
        if features.rows() != points.len() {
            return Err(Error::dim(format!(
                "{} feature rows for {} points",
                features.rows(),
                points.len()
            )));
        }
        let mut cloud = PointCloud::new(points)?;
        cloud.features = Some(features);
        Ok(cloud)
    }

    pub fn points(&self) -> &[Point] {
        &self.points
    }

    pub fn features(&self) -> Option<&Features> {
        self.features.as_ref()
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn centroid(&self) -> Point {
        let n = self.points.len().max(1) as f64;
        let mut c = [0.0; 3];
        for p in &self.points {
            for a in 0..3 {
                c[a] += p[a];
            }
        }
        c.map(|v| v / n)
    }

    /// Index of the point with the lexicographically smallest `(x, y, z)`.
    pub fn lexicographic_min_index(&self) -> Option<usize> {
        (0..self.points.len()).min_by(|&a, &b| lex_cmp(&self.points[a], &self.points[b]))
    }

    /// Reorders points (and feature rows) so that output row `i` is input row `perm[i]`.
    pub fn permuted(&self, perm: &[usize]) -> Result<Self> {
        if perm.len() != self.len() {
            return Err(Error::dim("permutation length differs from point count"));
        }
        let points = perm.iter().map(|&i| self.points[i]).collect();
        let features = match &self.features {
            Some(f) => {
                let mut data = Vec::with_capacity(f.data.len());
                for &i in perm {
                    data.extend_from_slice(f.row(i));
                }
                Some(Features::new(f.width, data)?)
            }
            None => None,
        };
        Ok(PointCloud { points, features })
    }

    pub fn map_points(&self, f: impl Fn(&Point) -> Point) -> Result<Self> {
        let mut out = PointCloud::new(self.points.iter().map(f).collect())?;
        out.features = self.features.clone();
        Ok(out)
    }
}

pub(crate) fn lex_cmp(a: &Point, b: &Point) -> Ordering {
    a[0].total_cmp(&b[0])
        .then(a[1].total_cmp(&b[1]))
        .then(a[2].total_cmp(&b[2]))
}

#[inline]
pub fn dist2(a: &Point, b: &Point) -> f64 {
    let dx = a[0] - b[0];
    let dy = a[1] - b[1];
    let dz = a[2] - b[2];
    dx * dx + dy * dy + dz * dz
}

/// Recenters on the centroid and scales so the farthest point has norm 1.
pub fn normalize_unit_sphere(cloud: &PointCloud) -> Result<PointCloud> {
    if cloud.is_empty() {
        return Err(Error::Degenerate("cannot normalize an empty cloud".into()));
    }
    let c = cloud.centroid();
    let centered: Vec<Point> = cloud
        .points
        .iter()
        .map(|p| [p[0] - c[0], p[1] - c[1], p[2] - c[2]])
        .collect();
    let max_norm = centered.iter().map(|p| dist2(p, &[0.0; 3]).sqrt()).fold(0.0, f64::max);
    let scale = if max_norm > 0.0 { 1.0 / max_norm } else { 1.0 };
    Ok(PointCloud {
        points: centered.into_iter().map(|p| p.map(|v| v * scale)).collect(),
        features: cloud.features.clone(),
    })
}

/// Greedy farthest point sampling starting from `start`.
///
/// Each step picks the unselected point whose distance to the selected set
/// is largest; ties go to the smallest index.
pub fn farthest_point_sample(points: &[Point], count: usize, start: usize) -> Result<Vec<usize>> {
    let n = points.len();
    if count > n {
        return Err(Error::Count {
            requested: count,
            available: n,
        });
    }
    if count == 0 {
        return Err(Error::Parameter("sample count must be at least 1".into()));
    }
    if start >= n {
        return Err(Error::Index { index: start, len: n });
    }
    let mut min_d2 = vec![f64::INFINITY; n];
    let mut chosen = Vec::with_capacity(count);
    let mut last = start;
    chosen.push(start);
    min_d2[start] = f64::NEG_INFINITY;
    while chosen.len() < count {
        let anchor = points[last];
        let mut best = usize::MAX;
        let mut best_d = f64::NEG_INFINITY;
        for (i, (p, md)) in points.iter().zip(min_d2.iter_mut()).enumerate() {
            if *md == f64::NEG_INFINITY {
                continue;
            }
            let d = dist2(p, &anchor);
            if d < *md {
                *md = d;
            }
            if best == usize::MAX || *md > best_d {
                best = i;
                best_d = *md;
            }
        }
        min_d2[best] = f64::NEG_INFINITY;
        chosen.push(best);
        last = best;
    }
    Ok(chosen)
}

/// Radius-bounded, k-capped neighborhoods around a set of centers.
#[derive(Clone, Debug, PartialEq)]
pub struct GroupedNeighborhood {
    /// Source indices of the centers when they were sampled from the cloud.
    pub center_indices: Option<Vec<usize>>,
    pub centers: Vec<Point>,
    /// `M×k` neighbor ids, row-major.
    pub indices: Vec<usize>,
    pub group_size: usize,
    /// `M×k×3` offsets `p_i - p_j`.
    pub grouped_points: Vec<f64>,
    /// `M×k×(3+c)` rows of `[offset ⧺ gathered features]`, set by [`sample_and_group`].
    pub grouped_features: Option<Features>,
    pub radius: f64,
    pub valid_counts: Vec<usize>,
}

impl GroupedNeighborhood {
    pub fn n_groups(&self) -> usize {
        self.centers.len()
    }

    pub fn group(&self, j: usize) -> &[usize] {
        &self.indices[j * self.group_size..(j + 1) * self.group_size]
    }

    /// Neighbors found before padding.
    pub fn valid_group(&self, j: usize) -> &[usize] {
        &self.group(j)[..self.valid_counts[j]]
    }
}

fn check_query(radius: f64, k: usize) -> Result<()> {
    if !radius.is_finite() || radius <= 0.0 {
        return Err(Error::Parameter(format!("radius must be positive, got {radius}")));
    }
    if k < 1 {
        return Err(Error::Parameter("group size must be at least 1".into()));
    }
    Ok(())
}

// Nearest first; equal distances ordered by coordinates so the choice does
// not depend on input order. Index is the final key for exact duplicates.
fn select_neighbors(
    points: &[Point],
    center: &Point,
    candidates: impl Iterator<Item = usize>,
    r2: f64,
    k: usize,
) -> Vec<usize> {
    let mut hits: Vec<(f64, usize)> = candidates
        .filter_map(|i| {
            let d = dist2(&points[i], center);
            (d <= r2).then_some((d, i))
        })
        .collect();
    hits.sort_by(|a, b| {
        a.0.total_cmp(&b.0)
            .then_with(|| lex_cmp(&points[a.1], &points[b.1]))
            .then(a.1.cmp(&b.1))
    });
    hits.truncate(k);
    hits.into_iter().map(|(_, i)| i).collect()
}

fn assemble(
    points: &[Point],
    centers: &[Point],
    selections: Vec<Vec<usize>>,
    radius: f64,
    k: usize,
) -> Result<GroupedNeighborhood> {
    let m = centers.len();
    let mut indices = Vec::with_capacity(m * k);
    let mut grouped_points = Vec::with_capacity(m * k * 3);
    let mut valid_counts = Vec::with_capacity(m);
    for (j, (sel, c)) in selections.into_iter().zip(centers).enumerate() {
        if sel.is_empty() {
            return Err(Error::Degenerate(format!(
                "center {j} has no points within radius {radius}"
            )));
        }
        valid_counts.push(sel.len());
        for slot in 0..k {
            let i = *sel.get(slot).unwrap_or(&sel[0]);
            indices.push(i);
            let p = points[i];
            grouped_points.extend_from_slice(&[p[0] - c[0], p[1] - c[1], p[2] - c[2]]);
        }
    }
    Ok(GroupedNeighborhood {
        center_indices: None,
        centers: centers.to_vec(),
        indices,
        group_size: k,
        grouped_points,
        grouped_features: None,
        radius,
        valid_counts,
    })
}

/// Reference ball query: a full distance scan per center.
pub fn ball_query(points: &[Point], centers: &[Point], radius: f64, k: usize) -> Result<GroupedNeighborhood> {
    check_query(radius, k)?;
    let r2 = radius * radius;
    let selections = centers
        .iter()
        .map(|c| select_neighbors(points, c, 0..points.len(), r2, k))
        .collect();
    assemble(points, centers, selections, radius, k)
}

type Cell = (i64, i64, i64);

/// Uniform grid with cells slightly wider than the query radius, so every
/// neighbor within the radius lies in the 27 cells around the center's cell.
pub struct UniformGrid {
    cell: f64,
    buckets: HashMap<Cell, Vec<usize>>,
}

impl UniformGrid {
    pub fn new(points: &[Point], radius: f64) -> Result<Self> {
        check_query(radius, 1)?;
        let cell = radius * (1.0 + 1e-9);
        let mut buckets: HashMap<Cell, Vec<usize>> = HashMap::new();
        for (i, p) in points.iter().enumerate() {
            buckets.entry(Self::key(p, cell)).or_default().push(i);
        }
        Ok(UniformGrid { cell, buckets })
    }

    fn key(p: &Point, cell: f64) -> Cell {
        (
            (p[0] / cell).floor() as i64,
            (p[1] / cell).floor() as i64,
            (p[2] / cell).floor() as i64,
        )
    }

    pub fn candidates(&self, center: &Point) -> Vec<usize> {
        let (cx, cy, cz) = Self::key(center, self.cell);
        let mut out = Vec::new();
        for dx in -1..=1 {
            for dy in -1..=1 {
                for dz in -1..=1 {
                    if let Some(b) = self.buckets.get(&(cx + dx, cy + dy, cz + dz)) {
                        out.extend_from_slice(b);
                    }
                }
            }
        }
        out
    }
}

/// Grid-accelerated ball query; returns the same neighborhoods as [`ball_query`].
pub fn ball_query_grid(points: &[Point], centers: &[Point], radius: f64, k: usize) -> Result<GroupedNeighborhood> {
    check_query(radius, k)?;
    let grid = UniformGrid::new(points, radius)?;
    let r2 = radius * radius;
    let selections = centers
        .iter()
        .map(|c| select_neighbors(points, c, grid.candidates(c).into_iter(), r2, k))
        .collect();
    assemble(points, centers, selections, radius, k)
}

/// `features` is `N×width`; returns the `len(indices)×width` block of looked-up rows.
pub fn gather_features(features: &[f64], width: usize, indices: &[usize]) -> Result<Vec<f64>> {
    let n = features.len().checked_div(width).unwrap_or(0);
    let mut out = Vec::with_capacity(indices.len() * width);
    for &i in indices {
        if i >= n {
            return Err(Error::Index { index: i, len: n });
        }
        out.extend_from_slice(&features[i * width..(i + 1) * width]);
    }
    Ok(out)
}

/// FPS, then ball query around the sampled centers, then feature gather.
pub fn sample_and_group(
    cloud: &PointCloud,
    count: usize,
    radius: f64,
    k: usize,
    start: usize,
) -> Result<GroupedNeighborhood> {
    let centers_idx = farthest_point_sample(cloud.points(), count, start)?;
    let centers: Vec<Point> = centers_idx.iter().map(|&i| cloud.points()[i]).collect();
    let mut grouped = ball_query(cloud.points(), &centers, radius, k)?;
    let (c, gathered) = match cloud.features() {
        Some(f) => (f.width(), gather_features(f.data(), f.width(), &grouped.indices)?),
        None => (0, Vec::new()),
    };
    let rows = grouped.indices.len();
    let mut data = Vec::with_capacity(rows * (3 + c));
    for r in 0..rows {
        data.extend_from_slice(&grouped.grouped_points[r * 3..r * 3 + 3]);
        data.extend_from_slice(&gathered[r * c..(r + 1) * c]);
    }
    grouped.grouped_features = Some(Features::new(3 + c, data)?);
    grouped.center_indices = Some(centers_idx);
    Ok(grouped)
}
