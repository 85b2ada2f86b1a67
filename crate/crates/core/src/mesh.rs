//! Triangulations of rectangles with full edge topology.
//!
//! Every edge records the two adjacent triangles. Following the usual DG
//! convention the `plus` triangle is the one with the larger global index and
//! the stored unit normal is the outward normal of `plus`. A boundary edge has
//! only a `plus` triangle.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::path::Path;

use crate::{Error, Result};

pub type Point = [f64; 2];

/// Axis-aligned rectangle `[x0, x1] × [y0, y1]`.
#[derive(Clone, Copy, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct Rect {
    pub x0: f64,
    pub x1: f64,
    pub y0: f64,
    pub y1: f64,
}

impl Rect {
    pub const fn new(x0: f64, x1: f64, y0: f64, y1: f64) -> Self {
        Self { x0, x1, y0, y1 }
    }

    pub const fn unit_square() -> Self {
        Self::new(0.0, 1.0, 0.0, 1.0)
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

    /// Closed containment with an absolute slack `tol`.
    pub fn contains(&self, p: Point, tol: f64) -> bool {
        p[0] >= self.x0 - tol && p[0] <= self.x1 + tol && p[1] >= self.y0 - tol && p[1] <= self.y1 + tol
    }

    /// Parses `x0,y0,x1,y1`.
    pub fn parse_corners(s: &str) -> Result<Self> {
        let v: Vec<f64> = s
            .split(',')
            .map(|t| t.trim().parse::<f64>())
            .collect::<Result<_, _>>()
            .map_err(|_| Error::Parse(format!("expected x0,y0,x1,y1, got `{s}`")))?;
        if v.len() != 4 {
            return Err(Error::Parse(format!("expected x0,y0,x1,y1, got `{s}`")));
        }
        Ok(Self::new(v[0], v[2], v[1], v[3]))
    }
}

/// How each grid cell is split into two triangles.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum DiagonalRule {
    /// Every diagonal runs from the lower-left to the upper-right corner.
    #[default]
    UniformNe,
    /// As `UniformNe`, with the two corner cells flipped so no triangle has
    /// two boundary edges.
    CornerSafe,
}

impl std::str::FromStr for DiagonalRule {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "uniform-ne" => Ok(Self::UniformNe),
            "corner-safe" => Ok(Self::CornerSafe),
            _ => Err(Error::Parse(format!("unknown mesh rule `{s}` (uniform-ne | corner-safe)"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Edge {
    pub vertices: [usize; 2],
    /// Adjacent triangle with the larger index (the only one on the boundary).
    pub plus: usize,
    pub minus: Option<usize>,
    /// Unit outward normal of `plus`.
    pub normal: Point,
    pub length: f64,
}

impl Edge {
    pub fn is_boundary(&self) -> bool {
        self.minus.is_none()
    }
}

/// Per-triangle quantities derived from the vertex coordinates.
#[derive(Clone, Debug, PartialEq)]
pub struct TriangleGeometry {
    pub area: f64,
    pub diameter: f64,
    pub centroid: Point,
    /// Constant gradients of the three barycentric coordinates.
    pub grad_lambda: [Point; 3],
}

impl TriangleGeometry {
    fn new(p: [Point; 3]) -> Self {
        let area = 0.5 * ((p[1][0] - p[0][0]) * (p[2][1] - p[0][1]) - (p[2][0] - p[0][0]) * (p[1][1] - p[0][1]));
        let inv = 0.5 / area;
        let grad = |j: usize, k: usize| [(p[j][1] - p[k][1]) * inv, (p[k][0] - p[j][0]) * inv];
        let d = |a: Point, b: Point| ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt();
        Self {
            area,
            diameter: d(p[0], p[1]).max(d(p[1], p[2])).max(d(p[2], p[0])),
            centroid: [(p[0][0] + p[1][0] + p[2][0]) / 3.0, (p[0][1] + p[1][1] + p[2][1]) / 3.0],
            grad_lambda: [grad(1, 2), grad(2, 0), grad(0, 1)],
        }
    }

    /// Barycentric coordinates of `x` (affine, so valid outside the triangle too).
    #[inline]
    pub fn barycentric(&self, x: Point) -> [f64; 3] {
        let dx = x[0] - self.centroid[0];
        let dy = x[1] - self.centroid[1];
        let g = &self.grad_lambda;
        [
            1.0 / 3.0 + g[0][0] * dx + g[0][1] * dy,
            1.0 / 3.0 + g[1][0] * dx + g[1][1] * dy,
            1.0 / 3.0 + g[2][0] * dx + g[2][1] * dy,
        ]
    }
}

#[derive(Clone, Debug)]
pub struct Mesh {
    pub(crate) vertices: Vec<Point>,
    pub(crate) triangles: Vec<[usize; 3]>,
    pub(crate) edges: Vec<Edge>,
    pub(crate) element_edges: Vec<[usize; 3]>,
    pub(crate) geometry: Vec<TriangleGeometry>,
    pub(crate) domain: Rect,
    pub(crate) spacing: Option<f64>,
}

impl Mesh {
    /// Builds topology from raw vertices and triangles. Clockwise triangles
    /// are reoriented; degenerate ones are rejected.
    pub fn from_parts(vertices: Vec<Point>, mut triangles: Vec<[usize; 3]>) -> Result<Self> {
        let mut geometry = Vec::with_capacity(triangles.len());
        for (t, tri) in triangles.iter_mut().enumerate() {
            if tri.iter().any(|&v| v >= vertices.len()) {
                return Err(Error::Topology {
                    entity: "triangle",
                    index: t,
                    message: "vertex index out of range".into(),
                });
            }
            let mut g = TriangleGeometry::new(tri.map(|v| vertices[v]));
            if g.area < 0.0 {
                tri.swap(1, 2);
                g = TriangleGeometry::new(tri.map(|v| vertices[v]));
            }
            if !(g.area > 0.0) {
                return Err(Error::Geometry {
                    element: t,
                    message: "zero-area triangle".into(),
                });
            }
            geometry.push(g);
        }

        let mut lookup: HashMap<(usize, usize), usize> = HashMap::new();
        let mut adjacency: Vec<([usize; 2], Vec<usize>)> = Vec::new();
        let mut element_edges = vec![[0usize; 3]; triangles.len()];
        for (t, tri) in triangles.iter().enumerate() {
            for k in 0..3 {
                // local edge k is opposite local vertex k
                let a = tri[(k + 1) % 3];
                let b = tri[(k + 2) % 3];
                let key = (a.min(b), a.max(b));
                let e = *lookup.entry(key).or_insert_with(|| {
                    adjacency.push(([a, b], Vec::new()));
                    adjacency.len() - 1
                });
                adjacency[e].1.push(t);
                element_edges[t][k] = e;
            }
        }

        let mut edges = Vec::with_capacity(adjacency.len());
        for (e, (verts, tris)) in adjacency.into_iter().enumerate() {
            let (plus, minus) = match tris.as_slice() {
                [t] => (*t, None),
                [a, b] => ((*a).max(*b), Some((*a).min(*b))),
                _ => {
                    return Err(Error::Topology {
                        entity: "edge",
                        index: e,
                        message: format!("shared by {} triangles", tris.len()),
                    })
                }
            };
            let pa = vertices[verts[0]];
            let pb = vertices[verts[1]];
            let length = ((pb[0] - pa[0]).powi(2) + (pb[1] - pa[1]).powi(2)).sqrt();
            let mut normal = [(pb[1] - pa[1]) / length, -(pb[0] - pa[0]) / length];
            let c = geometry[plus].centroid;
            let mid = [0.5 * (pa[0] + pb[0]), 0.5 * (pa[1] + pb[1])];
            if normal[0] * (mid[0] - c[0]) + normal[1] * (mid[1] - c[1]) < 0.0 {
                normal = [-normal[0], -normal[1]];
            }
            edges.push(Edge {
                vertices: verts,
                plus,
                minus,
                normal,
                length,
            });
        }

        let (mut x0, mut x1, mut y0, mut y1) = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
        for p in &vertices {
            x0 = x0.min(p[0]);
            x1 = x1.max(p[0]);
            y0 = y0.min(p[1]);
            y1 = y1.max(p[1]);
        }

        Ok(Self {
            vertices,
            triangles,
            edges,
            element_edges,
            geometry,
            domain: Rect::new(x0, x1, y0, y1),
            spacing: None,
        })
    }

    pub fn vertices(&self) -> &[Point] {
        &self.vertices
    }

    pub fn triangles(&self) -> &[[usize; 3]] {
        &self.triangles
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    /// Edge indices of a triangle; local edge `k` is opposite local vertex `k`.
    pub fn element_edges(&self, t: usize) -> [usize; 3] {
        self.element_edges[t]
    }

    pub fn geometry(&self, t: usize) -> &TriangleGeometry {
        &self.geometry[t]
    }

    pub fn num_elements(&self) -> usize {
        self.triangles.len()
    }

    pub fn num_edges(&self) -> usize {
        self.edges.len()
    }

    pub fn num_boundary_edges(&self) -> usize {
        self.edges.iter().filter(|e| e.is_boundary()).count()
    }

    pub fn domain(&self) -> Rect {
        self.domain
    }

    /// Structured grid spacing when generated, else the largest diameter.
    pub fn spacing(&self) -> f64 {
        self.spacing.unwrap_or_else(|| self.max_diameter())
    }

    pub fn max_diameter(&self) -> f64 {
        self.geometry.iter().map(|g| g.diameter).fold(0.0, f64::max)
    }

    pub fn element_vertices(&self, t: usize) -> [Point; 3] {
        self.triangles[t].map(|v| self.vertices[v])
    }

    pub fn edge_endpoints(&self, e: usize) -> [Point; 2] {
        self.edges[e].vertices.map(|v| self.vertices[v])
    }

    pub fn total_area(&self) -> f64 {
        self.geometry.iter().map(|g| g.area).sum()
    }
}

/// Generates an `nx × ny` grid on `domain`, two triangles per cell.
pub fn generate_structured_rect(domain: Rect, nx: usize, ny: usize, rule: DiagonalRule) -> Result<Mesh> {
    if nx < 2 || ny < 2 {
        return Err(Error::InvalidArgument(format!("grid needs nx, ny >= 2 (got {nx} x {ny})")));
    }
    if !(domain.width() > 0.0 && domain.height() > 0.0) {
        return Err(Error::InvalidArgument("rectangle has non-positive extent".into()));
    }
    let mut vertices = Vec::with_capacity((nx + 1) * (ny + 1));
    for j in 0..=ny {
        for i in 0..=nx {
            vertices.push([
                domain.x0 + domain.width() * i as f64 / nx as f64,
                domain.y0 + domain.height() * j as f64 / ny as f64,
            ]);
        }
    }
    let id = |i: usize, j: usize| j * (nx + 1) + i;
    let mut triangles = Vec::with_capacity(2 * nx * ny);
    for j in 0..ny {
        for i in 0..nx {
            let (ll, lr, ur, ul) = (id(i, j), id(i + 1, j), id(i + 1, j + 1), id(i, j + 1));
            let flip = rule == DiagonalRule::CornerSafe && ((i == nx - 1 && j == 0) || (i == 0 && j == ny - 1));
            if flip {
                triangles.push([ll, lr, ul]);
                triangles.push([lr, ur, ul]);
            } else {
                triangles.push([ll, lr, ur]);
                triangles.push([ll, ur, ul]);
            }
        }
    }
    let mut mesh = Mesh::from_parts(vertices, triangles)?;
    mesh.domain = domain;
    mesh.spacing = Some(domain.width() / nx as f64);
    Ok(mesh)
}

/// Grid with spacing `1 / level` in both directions on `domain`.
pub fn generate_level(domain: Rect, level: usize, rule: DiagonalRule) -> Result<Mesh> {
    let nx = (domain.width() * level as f64).round() as usize;
    let ny = (domain.height() * level as f64).round() as usize;
    generate_structured_rect(domain, nx, ny, rule)
}

#[derive(Clone, Debug, PartialEq, serde::Serialize)]
pub struct MeshReport {
    /// Largest element diameter.
    pub h: f64,
    pub min_diameter: f64,
    pub max_diameter: f64,
    pub double_boundary_elements: usize,
    /// Largest diameter ratio over edge-adjacent triangles.
    pub quasi_uniformity_ratio: f64,
    /// Set when a zero penalty is requested on a mesh with triangles that
    /// have two boundary edges.
    pub zero_penalty_warning: bool,
}

impl MeshReport {
    pub const QUASI_UNIFORMITY_LIMIT: f64 = 4.0;

    pub fn is_quasi_uniform(&self) -> bool {
        self.quasi_uniformity_ratio <= Self::QUASI_UNIFORMITY_LIMIT
    }
}

/// Re-derives and checks the topology, then summarizes the mesh.
pub fn validate_mesh(mesh: &Mesh, zero_penalty_requested: bool) -> Result<MeshReport> {
    let mut refs = vec![0usize; mesh.num_elements()];
    let mut boundary_count = vec![0usize; mesh.num_elements()];
    for (t, g) in mesh.geometry.iter().enumerate() {
        let fresh = TriangleGeometry::new(mesh.element_vertices(t));
        if !(fresh.area > 0.0) || (fresh.area - g.area).abs() > 1e-12 * fresh.area {
            return Err(Error::Geometry {
                element: t,
                message: format!("signed area {} is not positive or disagrees with the cached value", fresh.area),
            });
        }
    }
    for (e, edge) in mesh.edges.iter().enumerate() {
        let topo = |message: &str| Error::Topology {
            entity: "edge",
            index: e,
            message: message.to_string(),
        };
        if edge.plus >= mesh.num_elements() {
            return Err(topo("dangling plus triangle"));
        }
        let tri_has = |t: usize| {
            let tri = mesh.triangles[t];
            tri.contains(&edge.vertices[0]) && tri.contains(&edge.vertices[1])
        };
        if !tri_has(edge.plus) {
            return Err(topo("plus triangle does not contain the edge"));
        }
        refs[edge.plus] += 1;
        let [pa, pb] = mesh.edge_endpoints(e);
        let len = ((pb[0] - pa[0]).powi(2) + (pb[1] - pa[1]).powi(2)).sqrt();
        if (len - edge.length).abs() > 1e-14 * len.max(1.0) {
            return Err(topo("stored length disagrees with vertex distance"));
        }
        let n = edge.normal;
        let tangent_dot = n[0] * (pb[0] - pa[0]) + n[1] * (pb[1] - pa[1]);
        if ((n[0] * n[0] + n[1] * n[1]) - 1.0).abs() > 1e-12 || tangent_dot.abs() > 1e-12 * len {
            return Err(topo("normal is not a unit normal"));
        }
        let cp = mesh.geometry[edge.plus].centroid;
        let mid = [0.5 * (pa[0] + pb[0]), 0.5 * (pa[1] + pb[1])];
        if n[0] * (mid[0] - cp[0]) + n[1] * (mid[1] - cp[1]) <= 0.0 {
            return Err(topo("normal does not point out of the plus triangle"));
        }
        match edge.minus {
            None => boundary_count[edge.plus] += 1,
            Some(m) => {
                if m >= mesh.num_elements() {
                    return Err(topo("dangling minus triangle"));
                }
                if m >= edge.plus {
                    return Err(topo("plus triangle must carry the larger index"));
                }
                if !tri_has(m) {
                    return Err(topo("minus triangle does not contain the edge"));
                }
                refs[m] += 1;
                let cm = mesh.geometry[m].centroid;
                if n[0] * (cm[0] - cp[0]) + n[1] * (cm[1] - cp[1]) <= 0.0 {
                    return Err(topo("normal does not point into the minus triangle"));
                }
            }
        }
    }
    if let Some(t) = refs.iter().position(|&r| r != 3) {
        return Err(Error::Topology {
            entity: "triangle",
            index: t,
            message: format!("referenced by {} edges instead of 3", refs[t]),
        });
    }

    let diam: Vec<f64> = mesh.geometry.iter().map(|g| g.diameter).collect();
    let max_diameter = diam.iter().copied().fold(0.0, f64::max);
    let min_diameter = diam.iter().copied().fold(f64::INFINITY, f64::min);
    let quasi_uniformity_ratio = mesh
        .edges
        .iter()
        .filter_map(|e| e.minus.map(|m| (diam[e.plus] / diam[m]).max(diam[m] / diam[e.plus])))
        .fold(1.0, f64::max);
    let double_boundary_elements = boundary_count.iter().filter(|&&c| c > 1).count();
    Ok(MeshReport {
        h: max_diameter,
        min_diameter,
        max_diameter,
        double_boundary_elements,
        quasi_uniformity_ratio,
        zero_penalty_warning: zero_penalty_requested && double_boundary_elements > 0,
    })
}

/// Marks triangles whose three vertices lie in the closed box.
pub fn subdomain_mask(mesh: &Mesh, region: Rect) -> Vec<bool> {
    let tol = 1e-12 * mesh.domain.width().abs().max(mesh.domain.height().abs()).max(1.0);
    (0..mesh.num_elements())
        .map(|t| mesh.element_vertices(t).iter().all(|&p| region.contains(p, tol)))
        .collect()
}

/// Writes `<stem>.node` and `<stem>.ele` (1-based, Triangle layout).
pub fn write_triangle_files(mesh: &Mesh, stem: &Path) -> Result<()> {
    let mut node = format!("{} 2 0 0\n", mesh.vertices.len());
    for (i, p) in mesh.vertices.iter().enumerate() {
        let _ = writeln!(node, "{} {:.17e} {:.17e}", i + 1, p[0], p[1]);
    }
    let mut ele = format!("{} 3 0\n", mesh.triangles.len());
    for (t, tri) in mesh.triangles.iter().enumerate() {
        let _ = writeln!(ele, "{} {} {} {}", t + 1, tri[0] + 1, tri[1] + 1, tri[2] + 1);
    }
    let node_path = stem.with_extension("node");
    let ele_path = stem.with_extension("ele");
    std::fs::write(&node_path, node).map_err(|e| Error::io(&node_path, e))?;
    std::fs::write(&ele_path, ele).map_err(|e| Error::io(&ele_path, e))?;
    Ok(())
}

/// Reads `<stem>.node` / `<stem>.ele`. Attributes and boundary markers are ignored.
pub fn read_triangle_files(stem: &Path) -> Result<Mesh> {
    let node_path = stem.with_extension("node");
    let ele_path = stem.with_extension("ele");
    let node = std::fs::read_to_string(&node_path).map_err(|e| Error::io(&node_path, e))?;
    let ele = std::fs::read_to_string(&ele_path).map_err(|e| Error::io(&ele_path, e))?;

    fn records(text: &str) -> impl Iterator<Item = Vec<&str>> {
        text.lines()
            .map(|l| l.split('#').next().unwrap_or("").trim())
            .filter(|l| !l.is_empty())
            .map(|l| l.split_whitespace().collect())
    }
    let bad = |what: &str| Error::Parse(format!("malformed {what} file"));

    let mut nodes = records(&node);
    let header = nodes.next().ok_or_else(|| bad("node"))?;
    let count: usize = header[0].parse().map_err(|_| bad("node"))?;
    let mut vertices = vec![[0.0; 2]; count];
    let mut first_index = None;
    for rec in nodes.take(count) {
        if rec.len() < 3 {
            return Err(bad("node"));
        }
        let idx: usize = rec[0].parse().map_err(|_| bad("node"))?;
        let base = *first_index.get_or_insert(idx);
        let x: f64 = rec[1].parse().map_err(|_| bad("node"))?;
        let y: f64 = rec[2].parse().map_err(|_| bad("node"))?;
        *vertices.get_mut(idx - base).ok_or_else(|| bad("node"))? = [x, y];
    }
    let base = first_index.unwrap_or(1);

    let mut eles = records(&ele);
    let header = eles.next().ok_or_else(|| bad("ele"))?;
    let count: usize = header[0].parse().map_err(|_| bad("ele"))?;
    let mut triangles = Vec::with_capacity(count);
    for rec in eles.take(count) {
        if rec.len() < 4 {
            return Err(bad("ele"));
        }
        let mut tri = [0usize; 3];
        for k in 0..3 {
            let v: usize = rec[k + 1].parse().map_err(|_| bad("ele"))?;
            tri[k] = v.checked_sub(base).ok_or_else(|| bad("ele"))?;
        }
        triangles.push(tri);
    }
    Mesh::from_parts(vertices, triangles)
}
