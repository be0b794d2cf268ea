//! Union Jack triangulations and nested refinement.
//!
//! The initial meshes split every unit square along both diagonals. Uniform
//! refinement replaces each triangle by four similar ones through edge
//! midpoints; graded refinement moves the split point of every edge touching
//! the singular corner so that the segment containing the corner is
//! `kappa` times the other segment. Meshes are immutable once built.

use std::collections::BTreeMap;
use std::io::Write;

use thiserror::Error;

pub type Point = [f64; 2];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Domain {
    UnitSquare,
    LShape,
}

/// How one refinement step splits edges.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum RefinementRule {
    Uniform,
    Graded { kappa: f64, singular_point: Point },
}

#[derive(Debug, Error, PartialEq)]
pub enum MeshError {
    #[error("non-conforming input: vertex {vertex} hangs on edge ({a}, {b})")]
    NonConformingInput { vertex: usize, a: usize, b: usize },
    #[error("graded refinement: singular point ({0}, {1}) is not a mesh vertex")]
    SingularPointNotVertex(f64, f64),
}

/// Record of one split parent edge: the inserted vertex and the split
/// position measured from the lower-indexed endpoint.
#[derive(Debug, Clone, Copy)]
pub struct EdgeSplit {
    pub vertex: usize,
    pub ratio: f64,
}

#[derive(Debug, Clone)]
pub struct Mesh {
    pub vertices: Vec<Point>,
    /// Vertex index triples, counterclockwise.
    pub triangles: Vec<[usize; 3]>,
    pub boundary_vertex: Vec<bool>,
    pub level: u32,
    /// For refined meshes: index of each triangle's parent in the previous
    /// level. Absent on an initial mesh.
    pub parent_triangle: Option<Vec<usize>>,
    /// For refined meshes: split data per parent edge, keyed by the sorted
    /// coarse vertex pair.
    pub edge_midpoints: BTreeMap<(usize, usize), EdgeSplit>,
}

fn edge_key(a: usize, b: usize) -> (usize, usize) {
    if a < b {
        (a, b)
    } else {
        (b, a)
    }
}

fn signed_area(p0: Point, p1: Point, p2: Point) -> f64 {
    0.5 * ((p1[0] - p0[0]) * (p2[1] - p0[1]) - (p2[0] - p0[0]) * (p1[1] - p0[1]))
}

impl Mesh {
    fn new_initial(vertices: Vec<Point>, triangles: Vec<[usize; 3]>, boundary: Vec<bool>) -> Mesh {
        let mut mesh = Mesh {
            vertices,
            triangles,
            boundary_vertex: boundary,
            level: 1,
            parent_triangle: None,
            edge_midpoints: BTreeMap::new(),
        };
        mesh.orient_ccw();
        mesh
    }

    fn orient_ccw(&mut self) {
        for tri in self.triangles.iter_mut() {
            let [a, b, c] = *tri;
            if signed_area(self.vertices[a], self.vertices[b], self.vertices[c]) < 0.0 {
                tri.swap(1, 2);
            }
        }
    }

    pub fn n_vertices(&self) -> usize {
        self.vertices.len()
    }

    pub fn n_triangles(&self) -> usize {
        self.triangles.len()
    }

    pub fn triangle_area(&self, t: usize) -> f64 {
        let [a, b, c] = self.triangles[t];
        signed_area(self.vertices[a], self.vertices[b], self.vertices[c])
    }

    pub fn total_area(&self) -> f64 {
        (0..self.n_triangles()).map(|t| self.triangle_area(t)).sum()
    }

    /// Edge -> number of incident triangles, keys sorted.
    pub fn edge_counts(&self) -> BTreeMap<(usize, usize), u32> {
        let mut edges = BTreeMap::new();
        for tri in &self.triangles {
            for (a, b) in [(tri[0], tri[1]), (tri[1], tri[2]), (tri[2], tri[0])] {
                *edges.entry(edge_key(a, b)).or_insert(0u32) += 1;
            }
        }
        edges
    }

    /// Plain-text dump: header "NV NT", NV lines "x y flag", NT lines
    /// "i j k parent" (parent -1 on an initial mesh). Debug aid only.
    pub fn write_text(&self, w: &mut impl Write) -> std::io::Result<()> {
        writeln!(w, "{} {}", self.n_vertices(), self.n_triangles())?;
        for (v, flag) in self.vertices.iter().zip(&self.boundary_vertex) {
            writeln!(w, "{} {} {}", v[0], v[1], u8::from(*flag))?;
        }
        for (t, tri) in self.triangles.iter().enumerate() {
            let parent = self
                .parent_triangle
                .as_ref()
                .map_or(-1, |p| p[t] as i64);
            writeln!(w, "{} {} {} {}", tri[0], tri[1], tri[2], parent)?;
        }
        Ok(())
    }
}

/// Initial Union Jack triangulation of the requested domain.
pub fn build_initial_mesh(domain: Domain) -> Mesh {
    match domain {
        Domain::UnitSquare => {
            let vertices = vec![[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0], [0.5, 0.5]];
            let triangles = vec![[0, 1, 4], [1, 2, 4], [2, 3, 4], [3, 0, 4]];
            let boundary = vec![true, true, true, true, false];
            Mesh::new_initial(vertices, triangles, boundary)
        }
        Domain::LShape => {
            // (-1,1)^2 minus [0,1]x[-1,0]: three unit squares, each split
            // Union Jack style around its center.
            let squares = [
                ([-1.0, -1.0], [0.0, 0.0]),
                ([-1.0, 0.0], [0.0, 1.0]),
                ([0.0, 0.0], [1.0, 1.0]),
            ];
            let mut vertices: Vec<Point> = Vec::new();
            let mut index: BTreeMap<(u64, u64), usize> = BTreeMap::new();
            let mut triangles = Vec::new();
            let mut vertex_id = |vertices: &mut Vec<Point>, p: Point| -> usize {
                *index
                    .entry((p[0].to_bits(), p[1].to_bits()))
                    .or_insert_with(|| {
                        vertices.push(p);
                        vertices.len() - 1
                    })
            };
            for (lo, hi) in squares {
                let corners = [
                    [lo[0], lo[1]],
                    [hi[0], lo[1]],
                    [hi[0], hi[1]],
                    [lo[0], hi[1]],
                ];
                let center = [0.5 * (lo[0] + hi[0]), 0.5 * (lo[1] + hi[1])];
                let c = vertex_id(&mut vertices, center);
                let ids: Vec<usize> = corners
                    .iter()
                    .map(|&p| vertex_id(&mut vertices, p))
                    .collect();
                for k in 0..4 {
                    triangles.push([ids[k], ids[(k + 1) % 4], c]);
                }
            }
            let boundary = vertices
                .iter()
                .map(|&p| on_lshape_boundary(p))
                .collect();
            Mesh::new_initial(vertices, triangles, boundary)
        }
    }
}

fn on_lshape_boundary(p: Point) -> bool {
    let [x, y] = p;
    let outer = x == -1.0 || y == -1.0 || x == 1.0 || y == 1.0;
    let reentrant = (y == 0.0 && x >= 0.0) || (x == 0.0 && y <= 0.0);
    outer || reentrant
}

/// Splits every triangle in four. Uniform refinement uses edge midpoints;
/// graded refinement splits edges incident to the singular point at the
/// `kappa/(1+kappa)` position from that point. `kappa = 1` reproduces the
/// uniform rule bit for bit.
pub fn refine(mesh: &Mesh, rule: RefinementRule) -> Result<Mesh, MeshError> {
    let edges = mesh.edge_counts();
    check_conforming(mesh, &edges)?;

    let singular = match rule {
        RefinementRule::Uniform => None,
        RefinementRule::Graded {
            kappa,
            singular_point,
        } => {
            assert!(
                kappa > 0.0 && kappa <= 1.0,
                "graded ratio must lie in (0, 1]"
            );
            let idx = mesh
                .vertices
                .iter()
                .position(|&v| v == singular_point)
                .ok_or(MeshError::SingularPointNotVertex(
                    singular_point[0],
                    singular_point[1],
                ))?;
            Some((idx, kappa))
        }
    };

    let mut vertices = mesh.vertices.clone();
    let mut boundary = mesh.boundary_vertex.clone();
    let mut splits: BTreeMap<(usize, usize), EdgeSplit> = BTreeMap::new();
    for (&(a, b), &count) in &edges {
        let t = match singular {
            Some((s, kappa)) if a == s => kappa / (1.0 + kappa),
            Some((s, kappa)) if b == s => 1.0 / (1.0 + kappa),
            _ => 0.5,
        };
        let pa = vertices[a];
        let pb = vertices[b];
        let p = [
            (1.0 - t) * pa[0] + t * pb[0],
            (1.0 - t) * pa[1] + t * pb[1],
        ];
        let vertex = vertices.len();
        vertices.push(p);
        boundary.push(count == 1);
        splits.insert((a, b), EdgeSplit { vertex, ratio: t });
    }

    let mut triangles = Vec::with_capacity(4 * mesh.n_triangles());
    let mut parents = Vec::with_capacity(4 * mesh.n_triangles());
    for (t, tri) in mesh.triangles.iter().enumerate() {
        let [a, b, c] = *tri;
        let mab = splits[&edge_key(a, b)].vertex;
        let mbc = splits[&edge_key(b, c)].vertex;
        let mca = splits[&edge_key(c, a)].vertex;
        for child in [[a, mab, mca], [mab, b, mbc], [mca, mbc, c], [mab, mbc, mca]] {
            triangles.push(child);
            parents.push(t);
        }
    }

    Ok(Mesh {
        vertices,
        triangles,
        boundary_vertex: boundary,
        level: mesh.level + 1,
        parent_triangle: Some(parents),
        edge_midpoints: splits,
    })
}

fn check_conforming(
    mesh: &Mesh,
    edges: &BTreeMap<(usize, usize), u32>,
) -> Result<(), MeshError> {
    // Adjacency needed for the hanging-vertex scan below.
    let mut adjacent: Vec<Vec<usize>> = vec![Vec::new(); mesh.n_vertices()];
    for &(a, b) in edges.keys() {
        adjacent[a].push(b);
        adjacent[b].push(a);
    }
    for (&(a, b), &count) in edges {
        if count > 2 {
            return Err(MeshError::NonConformingInput { vertex: a, a, b });
        }
        if count == 1 {
            // A hanging vertex on (a, b) shows up as a neighbor of `a`
            // strictly between the endpoints.
            let pa = mesh.vertices[a];
            let pb = mesh.vertices[b];
            for &m in &adjacent[a] {
                if m == b {
                    continue;
                }
                let pm = mesh.vertices[m];
                let cross = (pb[0] - pa[0]) * (pm[1] - pa[1]) - (pb[1] - pa[1]) * (pm[0] - pa[0]);
                let len2 = (pb[0] - pa[0]).powi(2) + (pb[1] - pa[1]).powi(2);
                if cross.abs() > 1e-12 * len2 {
                    continue;
                }
                let dot = (pb[0] - pa[0]) * (pm[0] - pa[0]) + (pb[1] - pa[1]) * (pm[1] - pa[1]);
                if dot > 1e-12 * len2 && dot < (1.0 - 1e-12) * len2 {
                    return Err(MeshError::NonConformingInput { vertex: m, a, b });
                }
            }
        }
    }
    Ok(())
}

/// Mesh parameter h: the maximum triangle diameter (longest edge).
pub fn mesh_size(mesh: &Mesh) -> f64 {
    assert!(!mesh.triangles.is_empty(), "mesh_size of an empty mesh");
    let mut h: f64 = 0.0;
    for tri in &mesh.triangles {
        for (a, b) in [(tri[0], tri[1]), (tri[1], tri[2]), (tri[2], tri[0])] {
            let pa = mesh.vertices[a];
            let pb = mesh.vertices[b];
            let len = ((pa[0] - pb[0]).powi(2) + (pa[1] - pb[1]).powi(2)).sqrt();
            h = h.max(len);
        }
    }
    h
}
