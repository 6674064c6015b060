//! Structured triangulations of rectangles, point location, and the
//! barycentric observation projector.

use std::io::{BufRead, Write};
use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sparse::CscMatrix;

/// Axis-aligned rectangle `[x0, x1] × [y0, y1]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Rect {
    pub x0: f64,
    pub x1: f64,
    pub y0: f64,
    pub y1: f64,
}

impl Rect {
    pub fn new(x0: f64, x1: f64, y0: f64, y1: f64) -> Self {
        Self { x0, x1, y0, y1 }
    }

    pub fn width(&self) -> f64 {
        self.x1 - self.x0
    }

    pub fn height(&self) -> f64 {
        self.y1 - self.y0
    }

    pub fn area(&self) -> f64 {
        self.width() * self.height()
    }

    pub fn expand(&self, by: f64) -> Rect {
        Rect::new(self.x0 - by, self.x1 + by, self.y0 - by, self.y1 + by)
    }

    pub fn contains(&self, p: [f64; 2]) -> bool {
        p[0] >= self.x0 && p[0] <= self.x1 && p[1] >= self.y0 && p[1] <= self.y1
    }

    /// Nearest point of the rectangle.
    pub fn clamp(&self, p: [f64; 2]) -> [f64; 2] {
        [p[0].clamp(self.x0, self.x1), p[1].clamp(self.y0, self.y1)]
    }
}

/// Triangle mesh with counter-clockwise triangles.
#[derive(Debug, Clone)]
pub struct TriMesh {
    vertices: Vec<[f64; 2]>,
    triangles: Vec<[usize; 3]>,
    interest: Rect,
    extension: f64,
    centroids: Vec<[f64; 2]>,
    areas: Vec<f64>,
    locator: Arc<Locator>,
}

impl TriMesh {
    /// Builds a mesh from raw parts; clockwise triangles are reoriented.
    pub fn from_parts(vertices: Vec<[f64; 2]>, mut triangles: Vec<[usize; 3]>, interest: Rect, extension: f64) -> Result<Self> {
        let nv = vertices.len();
        let mut centroids = Vec::with_capacity(triangles.len());
        let mut areas = Vec::with_capacity(triangles.len());
        for (t, tri) in triangles.iter_mut().enumerate() {
            if tri.iter().any(|&v| v >= nv) {
                return Err(Error::InvalidArgument(format!("triangle {t} references a missing vertex")));
            }
            let a2 = area2(&vertices, *tri);
            if a2 == 0.0 || !a2.is_finite() {
                return Err(Error::DegenerateTriangle(t));
            }
            if a2 < 0.0 {
                tri.swap(1, 2);
            }
            let [a, b, c] = tri.map(|v| vertices[v]);
            centroids.push([(a[0] + b[0] + c[0]) / 3.0, (a[1] + b[1] + c[1]) / 3.0]);
            areas.push(a2.abs() / 2.0);
        }
        let locator = Arc::new(Locator::new(&vertices, &triangles));
        Ok(Self {
            vertices,
            triangles,
            interest,
            extension,
            centroids,
            areas,
            locator,
        })
    }

    pub fn n_vertices(&self) -> usize {
        self.vertices.len()
    }

    pub fn n_triangles(&self) -> usize {
        self.triangles.len()
    }

    pub fn vertices(&self) -> &[[f64; 2]] {
        &self.vertices
    }

    pub fn triangles(&self) -> &[[usize; 3]] {
        &self.triangles
    }

    pub fn centroids(&self) -> &[[f64; 2]] {
        &self.centroids
    }

    pub fn areas(&self) -> &[f64] {
        &self.areas
    }

    pub fn interest_rect(&self) -> Rect {
        self.interest
    }

    pub fn extension_width(&self) -> f64 {
        self.extension
    }

    pub fn total_area(&self) -> f64 {
        self.areas.iter().sum()
    }

    /// Index of the triangle containing `p`, if any.
    pub fn locate(&self, p: [f64; 2]) -> Option<usize> {
        self.locator.locate(&self.vertices, &self.triangles, p)
    }

    /// Barycentric coordinates of `p` in triangle `t`.
    pub fn barycentric(&self, t: usize, p: [f64; 2]) -> [f64; 3] {
        barycentric(&self.vertices, self.triangles[t], p)
    }

    /// Constant gradients of the three hat functions of triangle `t`.
    pub fn gradients_p1(&self, t: usize) -> Result<[[f64; 2]; 3]> {
        gradients_p1(&self.vertices, self.triangles[t]).ok_or(Error::DegenerateTriangle(t))
    }

    /// Observation projector: row `i` holds the barycentric weights of location `i`.
    pub fn projector(&self, locations: &[[f64; 2]]) -> Result<CscMatrix> {
        let mut trip = Vec::with_capacity(3 * locations.len());
        for (i, &p) in locations.iter().enumerate() {
            let t = self.locate(p).ok_or(Error::OutsideMesh { x: p[0], y: p[1] })?;
            let w = self.barycentric(t, p);
            for (k, &v) in self.triangles[t].iter().enumerate() {
                if w[k] != 0.0 {
                    trip.push((i, v, w[k]));
                }
            }
        }
        Ok(CscMatrix::from_triplets(locations.len(), self.n_vertices(), &trip)?)
    }

    /// Vertex indices lying inside `r`.
    pub fn vertices_in(&self, r: &Rect) -> Vec<usize> {
        (0..self.n_vertices()).filter(|&i| r.contains(self.vertices[i])).collect()
    }

    /// Writes the plain-text mesh format.
    pub fn write<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "vertices {}", self.vertices.len())?;
        for v in &self.vertices {
            writeln!(w, "{} {}", v[0], v[1])?;
        }
        writeln!(w, "triangles {}", self.triangles.len())?;
        for t in &self.triangles {
            writeln!(w, "{} {} {}", t[0], t[1], t[2])?;
        }
        Ok(())
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let f = std::fs::File::create(path)?;
        self.write(std::io::BufWriter::new(f))?;
        Ok(())
    }

    /// Reads the plain-text mesh format. Without an explicit interest
    /// rectangle, the vertex bounding box is used and the extension is zero.
    pub fn read<R: BufRead>(r: R, interest: Option<(Rect, f64)>) -> Result<Self> {
        let mut lines = r.lines().filter(|l| l.as_ref().map_or(true, |s| !s.trim().is_empty()));
        let mut next = || -> Result<String> {
            lines
                .next()
                .ok_or_else(|| Error::Parse("unexpected end of mesh file".into()))?
                .map_err(Error::from)
        };
        let count = |line: &str, key: &str| -> Result<usize> {
            let mut it = line.split_whitespace();
            if it.next() != Some(key) {
                return Err(Error::Parse(format!("expected `{key} N`, got `{line}`")));
            }
            it.next()
                .and_then(|s| s.parse().ok())
                .ok_or_else(|| Error::Parse(format!("bad count in `{line}`")))
        };
        let nv = count(&next()?, "vertices")?;
        let mut vertices = Vec::with_capacity(nv);
        for _ in 0..nv {
            let l = next()?;
            let xs: Vec<f64> = l
                .split_whitespace()
                .map(|s| s.parse::<f64>().map_err(|_| Error::Parse(format!("bad vertex `{l}`"))))
                .collect::<Result<_>>()?;
            if xs.len() != 2 {
                return Err(Error::Parse(format!("bad vertex `{l}`")));
            }
            vertices.push([xs[0], xs[1]]);
        }
        let nt = count(&next()?, "triangles")?;
        let mut triangles = Vec::with_capacity(nt);
        for _ in 0..nt {
            let l = next()?;
            let ix: Vec<usize> = l
                .split_whitespace()
                .map(|s| s.parse::<usize>().map_err(|_| Error::Parse(format!("bad triangle `{l}`"))))
                .collect::<Result<_>>()?;
            if ix.len() != 3 {
                return Err(Error::Parse(format!("bad triangle `{l}`")));
            }
            triangles.push([ix[0], ix[1], ix[2]]);
        }
        let (rect, ext) = interest.unwrap_or_else(|| (bounding_box(&vertices), 0.0));
        Self::from_parts(vertices, triangles, rect, ext)
    }

    pub fn load(path: &Path, interest: Option<(Rect, f64)>) -> Result<Self> {
        let f = std::fs::File::open(path)?;
        Self::read(std::io::BufReader::new(f), interest)
    }
}

/// Structured criss-cross triangulation of `interest` expanded by `extension`.
///
/// Cells are split along alternating diagonals so that no direction is
/// preferred. The grid spacing is the largest spacing not exceeding
/// `target_edge_length` that divides each side evenly.
pub fn build_rect_mesh(interest: Rect, extension: f64, target_edge_length: f64) -> Result<TriMesh> {
    if !(target_edge_length > 0.0) {
        return Err(Error::InvalidArgument("edge length must be positive".into()));
    }
    if !(interest.width() > 0.0 && interest.height() > 0.0) || extension < 0.0 {
        return Err(Error::InvalidArgument("rectangle must have positive size and non-negative extension".into()));
    }
    let outer = interest.expand(extension);
    let nx = ((outer.width() / target_edge_length) - 1e-9).ceil().max(1.0) as usize;
    let ny = ((outer.height() / target_edge_length) - 1e-9).ceil().max(1.0) as usize;
    let mut vertices = Vec::with_capacity((nx + 1) * (ny + 1));
    for j in 0..=ny {
        let y = if j == ny { outer.y1 } else { outer.y0 + outer.height() * j as f64 / ny as f64 };
        for i in 0..=nx {
            let x = if i == nx { outer.x1 } else { outer.x0 + outer.width() * i as f64 / nx as f64 };
            vertices.push([x, y]);
        }
    }
    let id = |i: usize, j: usize| j * (nx + 1) + i;
    let mut triangles = Vec::with_capacity(2 * nx * ny);
    for j in 0..ny {
        for i in 0..nx {
            let (v00, v10, v01, v11) = (id(i, j), id(i + 1, j), id(i, j + 1), id(i + 1, j + 1));
            if (i + j) % 2 == 0 {
                triangles.push([v00, v10, v11]);
                triangles.push([v00, v11, v01]);
            } else {
                triangles.push([v00, v10, v01]);
                triangles.push([v10, v11, v01]);
            }
        }
    }
    TriMesh::from_parts(vertices, triangles, interest, extension)
}

/// `projector(mesh, locations)`.
pub fn projector(mesh: &TriMesh, locations: &[[f64; 2]]) -> Result<CscMatrix> {
    mesh.projector(locations)
}

fn bounding_box(v: &[[f64; 2]]) -> Rect {
    let mut r = Rect::new(f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
    for p in v {
        r.x0 = r.x0.min(p[0]);
        r.x1 = r.x1.max(p[0]);
        r.y0 = r.y0.min(p[1]);
        r.y1 = r.y1.max(p[1]);
    }
    r
}

fn area2(v: &[[f64; 2]], t: [usize; 3]) -> f64 {
    let [a, b, c] = t.map(|i| v[i]);
    (b[0] - a[0]) * (c[1] - a[1]) - (c[0] - a[0]) * (b[1] - a[1])
}

/// Hat-function gradients; `None` for a zero-area triangle.
pub fn gradients_p1(v: &[[f64; 2]], t: [usize; 3]) -> Option<[[f64; 2]; 3]> {
    let a2 = area2(v, t);
    if a2 == 0.0 || !a2.is_finite() {
        return None;
    }
    let [p0, p1, p2] = t.map(|i| v[i]);
    Some([
        [(p1[1] - p2[1]) / a2, (p2[0] - p1[0]) / a2],
        [(p2[1] - p0[1]) / a2, (p0[0] - p2[0]) / a2],
        [(p0[1] - p1[1]) / a2, (p1[0] - p0[0]) / a2],
    ])
}

fn barycentric(v: &[[f64; 2]], t: [usize; 3], p: [f64; 2]) -> [f64; 3] {
    let [a, b, c] = t.map(|i| v[i]);
    let a2 = area2(v, t);
    let l1 = ((p[0] - a[0]) * (c[1] - a[1]) - (c[0] - a[0]) * (p[1] - a[1])) / a2;
    let l2 = ((b[0] - a[0]) * (p[1] - a[1]) - (p[0] - a[0]) * (b[1] - a[1])) / a2;
    [1.0 - l1 - l2, l1, l2]
}

/// Uniform bucket grid over the bounding box; each bucket lists the
/// triangles whose bounding boxes overlap it.
#[derive(Debug)]
struct Locator {
    bbox: Rect,
    nx: usize,
    ny: usize,
    buckets: Vec<Vec<u32>>,
}

const INSIDE_TOL: f64 = 1e-10;

impl Locator {
    fn new(v: &[[f64; 2]], tris: &[[usize; 3]]) -> Self {
        let bbox = bounding_box(v);
        let side = ((tris.len() as f64).sqrt().ceil() as usize).max(1);
        let (nx, ny) = (side, side);
        let mut buckets = vec![Vec::new(); nx * ny];
        let loc = Self {
            bbox,
            nx,
            ny,
            buckets: Vec::new(),
        };
        for (t, tri) in tris.iter().enumerate() {
            let tb = bounding_box(&tri.map(|i| v[i]));
            let (i0, j0) = loc.cell([tb.x0, tb.y0]);
            let (i1, j1) = loc.cell([tb.x1, tb.y1]);
            for j in j0..=j1 {
                for i in i0..=i1 {
                    buckets[j * nx + i].push(t as u32);
                }
            }
        }
        Self { buckets, ..loc }
    }

    fn cell(&self, p: [f64; 2]) -> (usize, usize) {
        let fx = (p[0] - self.bbox.x0) / self.bbox.width().max(f64::MIN_POSITIVE);
        let fy = (p[1] - self.bbox.y0) / self.bbox.height().max(f64::MIN_POSITIVE);
        let i = ((fx * self.nx as f64).floor().max(0.0) as usize).min(self.nx - 1);
        let j = ((fy * self.ny as f64).floor().max(0.0) as usize).min(self.ny - 1);
        (i, j)
    }

    fn locate(&self, v: &[[f64; 2]], tris: &[[usize; 3]], p: [f64; 2]) -> Option<usize> {
        if !(p[0].is_finite() && p[1].is_finite()) {
            return None;
        }
        let tol = INSIDE_TOL * (self.bbox.width() + self.bbox.height());
        if p[0] < self.bbox.x0 - tol || p[0] > self.bbox.x1 + tol || p[1] < self.bbox.y0 - tol || p[1] > self.bbox.y1 + tol {
            return None;
        }
        let (i, j) = self.cell(p);
        let mut best: Option<(usize, f64)> = None;
        for &t in &self.buckets[j * self.nx + i] {
            let w = barycentric(v, tris[t as usize], p);
            let m = w[0].min(w[1]).min(w[2]);
            if m >= 0.0 {
                return Some(t as usize);
            }
            if best.map_or(true, |(_, bm)| m > bm) {
                best = Some((t as usize, m));
            }
        }
        best.filter(|&(_, m)| m >= -INSIDE_TOL).map(|(t, _)| t)
    }
}
