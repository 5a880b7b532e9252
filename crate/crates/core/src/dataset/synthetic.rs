//! Procedural shape meshes for tests, smoke runs and desk-scale training.

use std::f64::consts::{PI, TAU};
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use rand::Rng;
use rayon::prelude::*;

use crate::augmentation::{rotate_y, sample_rng};
use crate::error::{Error, Result};
use crate::geometry::Point;

use super::index::{DatasetIndex, IndexEntry, Split};
use super::mesh::{serialize_off, Mesh};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Shape {
    Sphere,
    Cube,
    Plate,
    Cylinder,
    Cone,
    Torus,
    Pyramid,
    Prism,
    Cross,
    Table,
}

impl Shape {
    pub const ALL: [Shape; 10] = [
        Shape::Sphere,
        Shape::Cube,
        Shape::Plate,
        Shape::Cylinder,
        Shape::Cone,
        Shape::Torus,
        Shape::Pyramid,
        Shape::Prism,
        Shape::Cross,
        Shape::Table,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Shape::Sphere => "sphere",
            Shape::Cube => "cube",
            Shape::Plate => "plate",
            Shape::Cylinder => "cylinder",
            Shape::Cone => "cone",
            Shape::Torus => "torus",
            Shape::Pyramid => "pyramid",
            Shape::Prism => "prism",
            Shape::Cross => "cross",
            Shape::Table => "table",
        }
    }
}

impl fmt::Display for Shape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Shape {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Shape::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown synthetic shape `{s}`")))
    }
}

#[derive(Default)]
struct Builder {
    vertices: Vec<Point>,
    faces: Vec<[usize; 3]>,
}

impl Builder {
    fn cuboid(&mut self, center: Point, half: Point) {
        let o = self.vertices.len();
        for k in 0..8 {
            let s = |bit: usize| if k >> bit & 1 == 1 { 1.0 } else { -1.0 };
            self.vertices.push([
                center[0] + s(0) * half[0],
                center[1] + s(1) * half[1],
                center[2] + s(2) * half[2],
            ]);
        }
        for q in [
            [0, 2, 3, 1],
            [4, 5, 7, 6],
            [0, 1, 5, 4],
            [2, 6, 7, 3],
            [0, 4, 6, 2],
            [1, 3, 7, 5],
        ] {
            self.quad(o + q[0], o + q[1], o + q[2], o + q[3]);
        }
    }

    fn quad(&mut self, a: usize, b: usize, c: usize, d: usize) {
        self.faces.push([a, b, c]);
        self.faces.push([a, c, d]);
    }

    /// Grid-tessellated surface over (u, v) in [0,1]^2.
    fn surface(&mut self, nu: usize, nv: usize, f: impl Fn(f64, f64) -> Point) {
        let o = self.vertices.len();
        for j in 0..=nv {
            for i in 0..=nu {
                self.vertices.push(f(i as f64 / nu as f64, j as f64 / nv as f64));
            }
        }
        let at = |i: usize, j: usize| o + j * (nu + 1) + i;
        for j in 0..nv {
            for i in 0..nu {
                self.quad(at(i, j), at(i + 1, j), at(i + 1, j + 1), at(i, j + 1));
            }
        }
    }

    fn disk(&mut self, y: f64, rx: f64, rz: f64) {
        self.surface(24, 2, |u, v| [v * rx * (TAU * u).cos(), y, v * rz * (TAU * u).sin()]);
    }

    fn finish(self) -> Mesh {
        Mesh {
            vertices: self.vertices,
            faces: self.faces,
        }
    }
}

/// A random instance of `shape`: per-axis proportions vary by about ±20% and
/// the whole mesh is turned by a random angle about the vertical axis.
pub fn shape_mesh(shape: Shape, rng: &mut impl Rng) -> Mesh {
    let mut j = |lo: f64, hi: f64| rng.random_range(lo..=hi);
    let mut b = Builder::default();
    match shape {
        Shape::Sphere => {
            let (rx, ry, rz) = (j(0.9, 1.1), j(0.9, 1.1), j(0.9, 1.1));
            b.surface(24, 16, |u, v| {
                let (t, p) = (PI * v, TAU * u);
                [rx * t.sin() * p.cos(), ry * t.cos(), rz * t.sin() * p.sin()]
            });
        }
        Shape::Cube => b.cuboid([0.0; 3], [j(0.85, 1.15), j(0.85, 1.15), j(0.85, 1.15)]),
        Shape::Plate => b.cuboid([0.0; 3], [j(0.8, 1.2), j(0.03, 0.08), j(0.8, 1.2)]),
        Shape::Cylinder => {
            let (r, h) = (j(0.4, 0.6), j(0.8, 1.2));
            b.surface(24, 4, |u, v| {
                [r * (TAU * u).cos(), h * (2.0 * v - 1.0), r * (TAU * u).sin()]
            });
            b.disk(h, r, r);
            b.disk(-h, r, r);
        }
        Shape::Cone => {
            let (r, h) = (j(0.6, 0.9), j(0.8, 1.2));
            b.surface(24, 4, |u, v| {
                let rr = r * (1.0 - v);
                [rr * (TAU * u).cos(), h * (2.0 * v - 1.0), rr * (TAU * u).sin()]
            });
            b.disk(-h, r, r);
        }
        Shape::Torus => {
            let (big, small) = (j(0.9, 1.1), j(0.25, 0.35));
            b.surface(32, 12, |u, v| {
                let (p, t) = (TAU * u, TAU * v);
                let ring = big + small * t.cos();
                [ring * p.cos(), small * t.sin(), ring * p.sin()]
            });
        }
        Shape::Pyramid => {
            let (w, d, h) = (j(0.8, 1.2), j(0.8, 1.2), j(0.8, 1.2));
            b.vertices = vec![[-w, -h, -d], [w, -h, -d], [w, -h, d], [-w, -h, d], [0.0, h, 0.0]];
            b.faces = vec![[0, 1, 2], [0, 2, 3], [0, 4, 1], [1, 4, 2], [2, 4, 3], [3, 4, 0]];
        }
        Shape::Prism => {
            let (w, h, l) = (j(0.8, 1.2), j(0.8, 1.2), j(1.2, 1.6));
            b.vertices = vec![
                [-w, -h, -l],
                [w, -h, -l],
                [0.0, h, -l],
                [-w, -h, l],
                [w, -h, l],
                [0.0, h, l],
            ];
            b.faces = vec![[0, 2, 1], [3, 4, 5]];
            b.quad(0, 1, 4, 3);
            b.quad(1, 2, 5, 4);
            b.quad(2, 0, 3, 5);
        }
        Shape::Cross => {
            let (t, l) = (j(0.12, 0.18), j(0.9, 1.1));
            b.cuboid([0.0; 3], [l, t, t]);
            b.cuboid([0.0; 3], [t, l, t]);
            b.cuboid([0.0; 3], [t, t, l]);
        }
        Shape::Table => {
            let (w, d, h, leg) = (j(0.9, 1.1), j(0.6, 0.9), j(0.6, 0.9), j(0.05, 0.08));
            b.cuboid([0.0, h, 0.0], [w, 0.05, d]);
            for (sx, sz) in [(-1.0, -1.0), (1.0, -1.0), (1.0, 1.0), (-1.0, 1.0)] {
                b.cuboid([sx * (w - leg), 0.0, sz * (d - leg)], [leg, h, leg]);
            }
        }
    }
    let angle = rng.random_range(0.0..TAU);
    let mut mesh = b.finish();
    for v in &mut mesh.vertices {
        *v = rotate_y(v, angle);
    }
    mesh
}

/// Writes `<root>/<shape>/<split>/<shape>_<i:04>.off` for each shape and
/// returns the matching index. Deterministic given `seed`.
pub fn write_shape_dataset(
    root: &Path,
    shapes: &[Shape],
    train: usize,
    test: usize,
    seed: u64,
) -> Result<DatasetIndex> {
    let mut jobs = Vec::new();
    for (c, &shape) in shapes.iter().enumerate() {
        for i in 1..=train + test {
            let split = if i <= train { Split::Train } else { Split::Test };
            jobs.push((c, shape, i, split));
        }
    }
    let entries = jobs
        .par_iter()
        .map(|&(c, shape, i, split)| {
            let mut rng = sample_rng(seed, (c as u64) << 32 | i as u64);
            let mesh = shape_mesh(shape, &mut rng);
            let dir = root.join(shape.name()).join(split.name());
            std::fs::create_dir_all(&dir)?;
            let instance = format!("{}_{i:04}", shape.name());
            let path = dir.join(format!("{instance}.off"));
            std::fs::write(&path, serialize_off(&mesh))?;
            Ok(IndexEntry {
                class: shape.name().to_string(),
                instance,
                split,
                path,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    DatasetIndex::new(entries, shapes.iter().map(|s| s.name().to_string()).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::flat::detect_flat;
    use crate::dataset::mesh::{parse_off, sample_mesh};

    #[test]
    fn every_shape_has_area_and_valid_faces() {
        let mut rng = sample_rng(0, 0);
        for s in Shape::ALL {
            let m = shape_mesh(s, &mut rng);
            assert!(m.total_area() > 0.1, "{s}");
            let back = parse_off(serialize_off(&m).as_bytes()).unwrap();
            assert_eq!(back.faces, m.faces);
        }
    }

    #[test]
    fn plates_are_not_flat_but_thin() {
        let mut rng = sample_rng(1, 0);
        let cloud = sample_mesh(&shape_mesh(Shape::Plate, &mut rng), 2000, 0).unwrap();
        assert!(!detect_flat(&cloud, 1e-4).unwrap());
        assert!(detect_flat(&cloud, 1e-1).unwrap());
    }

    #[test]
    fn dataset_writer_is_deterministic() {
        let a = tempfile::tempdir().unwrap();
        let b = tempfile::tempdir().unwrap();
        let ia = write_shape_dataset(a.path(), &Shape::ALL[..2], 2, 1, 4).unwrap();
        let ib = write_shape_dataset(b.path(), &Shape::ALL[..2], 2, 1, 4).unwrap();
        assert_eq!(ia.len(), 6);
        for (x, y) in ia.entries().iter().zip(ib.entries()) {
            assert_eq!(std::fs::read(&x.path).unwrap(), std::fs::read(&y.path).unwrap());
        }
        assert_eq!(DatasetIndex::scan(a.path()).unwrap().len(), 6);
    }
}
