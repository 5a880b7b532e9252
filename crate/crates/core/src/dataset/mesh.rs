//! OFF meshes and area-weighted surface sampling.

use std::fmt::Write as _;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::geometry::{Point, PointCloud};

/// Triangle mesh. Polygons are fanned into triangles on load.
#[derive(Clone, Debug, PartialEq)]
pub struct Mesh {
    pub vertices: Vec<Point>,
    pub faces: Vec<[usize; 3]>,
}

impl Mesh {
    pub fn new(vertices: Vec<Point>, faces: Vec<[usize; 3]>) -> Result<Self> {
        let v = vertices.len();
        if let Some(&bad) = faces.iter().flatten().find(|&&i| i >= v) {
            return Err(Error::Index { index: bad, len: v });
        }
        Ok(Mesh { vertices, faces })
    }

    pub fn triangle(&self, f: usize) -> [Point; 3] {
        self.faces[f].map(|i| self.vertices[i])
    }

    pub fn triangle_area(&self, f: usize) -> f64 {
        let [a, b, c] = self.triangle(f);
        let u = [b[0] - a[0], b[1] - a[1], b[2] - a[2]];
        let v = [c[0] - a[0], c[1] - a[1], c[2] - a[2]];
        let cx = u[1] * v[2] - u[2] * v[1];
        let cy = u[2] * v[0] - u[0] * v[2];
        let cz = u[0] * v[1] - u[1] * v[0];
        0.5 * (cx * cx + cy * cy + cz * cz).sqrt()
    }

    pub fn total_area(&self) -> f64 {
        (0..self.faces.len()).map(|f| self.triangle_area(f)).sum()
    }
}

struct Lines<'a> {
    inner: std::iter::Enumerate<std::str::Lines<'a>>,
    last: usize,
}

impl<'a> Lines<'a> {
    /// Next line with content, as `(1-based line number, text without comment)`.
    fn next_content(&mut self) -> Option<(usize, &'a str)> {
        for (i, raw) in self.inner.by_ref() {
            self.last = i + 1;
            let text = raw.split('#').next().unwrap_or("").trim();
            if !text.is_empty() {
                return Some((i + 1, text));
            }
        }
        None
    }
}

fn perr(line: usize, msg: impl Into<String>) -> Error {
    Error::Parse { line, msg: msg.into() }
}

fn parse_count(tok: &str, line: usize, what: &str) -> Result<usize> {
    tok.parse()
        .map_err(|_| perr(line, format!("{what} `{tok}` is not a non-negative integer")))
}

/// Parses ASCII OFF.
///
/// Accepts `#` comments, blank lines and the fused `OFF<V> <F> <E>` header
/// variant found in ModelNet. Face lines may carry trailing color values;
/// anything after the last face is an error.
pub fn parse_off(bytes: &[u8]) -> Result<Mesh> {
    let text = std::str::from_utf8(bytes).map_err(|e| perr(0, format!("not UTF-8: {e}")))?;
    let mut lines = Lines {
        inner: text.lines().enumerate(),
        last: 0,
    };
    let (hline, header) = lines.next_content().ok_or_else(|| perr(1, "empty file"))?;
    let rest = header
        .strip_prefix("OFF")
        .ok_or_else(|| perr(hline, format!("expected `OFF` header, found `{header}`")))?
        .trim();
    let (cline, counts) = if rest.is_empty() {
        lines
            .next_content()
            .ok_or_else(|| perr(hline, "missing vertex/face/edge counts"))?
    } else {
        (hline, rest)
    };
    let toks: Vec<&str> = counts.split_whitespace().collect();
    if toks.len() != 3 {
        return Err(perr(
            cline,
            format!("expected `V F E` counts, found {} tokens", toks.len()),
        ));
    }
    let nv = parse_count(toks[0], cline, "vertex count")?;
    let nf = parse_count(toks[1], cline, "face count")?;
    parse_count(toks[2], cline, "edge count")?;

    let mut vertices = Vec::with_capacity(nv);
    for k in 0..nv {
        let (line, text) = lines
            .next_content()
            .ok_or_else(|| perr(lines.last, format!("expected {nv} vertices, found {k}")))?;
        let vals: Vec<&str> = text.split_whitespace().collect();
        if vals.len() != 3 {
            return Err(perr(line, format!("vertex needs 3 coordinates, found {}", vals.len())));
        }
        let mut p = [0.0; 3];
        for (slot, tok) in p.iter_mut().zip(&vals) {
            *slot = tok
                .parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| perr(line, format!("bad coordinate `{tok}`")))?;
        }
        vertices.push(p);
    }

    let mut faces = Vec::with_capacity(nf);
    for k in 0..nf {
        let (line, text) = lines
            .next_content()
            .ok_or_else(|| perr(lines.last, format!("expected {nf} faces, found {k}")))?;
        let toks: Vec<&str> = text.split_whitespace().collect();
        let n = parse_count(toks[0], line, "polygon size")?;
        if n < 3 {
            return Err(perr(line, format!("polygon with {n} vertices")));
        }
        if toks.len() < n + 1 {
            return Err(perr(line, format!("polygon of {n} lists {} indices", toks.len() - 1)));
        }
        if let Some(bad) = toks[n + 1..].iter().find(|t| t.parse::<f64>().is_err()) {
            return Err(perr(line, format!("bad trailing token `{bad}`")));
        }
        let mut idx = Vec::with_capacity(n);
        for tok in &toks[1..=n] {
            let i = parse_count(tok, line, "vertex index")?;
            if i >= nv {
                return Err(perr(line, format!("vertex index {i} out of range for {nv} vertices")));
            }
            idx.push(i);
        }
        for t in 1..n - 1 {
            faces.push([idx[0], idx[t], idx[t + 1]]);
        }
    }
    if let Some((line, text)) = lines.next_content() {
        return Err(perr(line, format!("unexpected content after faces: `{text}`")));
    }
    Ok(Mesh { vertices, faces })
}

pub fn serialize_off(mesh: &Mesh) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "OFF\n{} {} 0", mesh.vertices.len(), mesh.faces.len());
    for v in &mesh.vertices {
        let _ = writeln!(out, "{} {} {}", v[0], v[1], v[2]);
    }
    for f in &mesh.faces {
        let _ = writeln!(out, "3 {} {} {}", f[0], f[1], f[2]);
    }
    out
}

/// Draws `n` points uniformly over the surface: triangles are chosen with
/// probability proportional to area, positions uniformly in barycentric
/// coordinates.
pub fn sample_mesh(mesh: &Mesh, n: usize, seed: u64) -> Result<PointCloud> {
    let mut cumulative = Vec::with_capacity(mesh.faces.len());
    let mut total = 0.0;
    for f in 0..mesh.faces.len() {
        total += mesh.triangle_area(f);
        cumulative.push(total);
    }
    if total.is_nan() || total <= 0.0 {
        return Err(Error::Degenerate("mesh has zero surface area".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut points = Vec::with_capacity(n);
    for _ in 0..n {
        let target = rng.random::<f64>() * total;
        let f = cumulative.partition_point(|&c| c <= target).min(cumulative.len() - 1);
        let [a, b, c] = mesh.triangle(f);
        let s = rng.random::<f64>().sqrt();
        let r = rng.random::<f64>();
        let (u, v, w) = (1.0 - s, s * (1.0 - r), s * r);
        points.push(std::array::from_fn(|k| u * a[k] + v * b[k] + w * c[k]));
    }
    PointCloud::new(points)
}
