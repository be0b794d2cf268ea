//! Degree-of-freedom maps and assembly for the mixed Stokes discretization.
//!
//! Velocity: continuous vector P2 with homogeneous Dirichlet data eliminated.
//! Pressure: piecewise constant (P2-P0) or continuous P1 (Taylor-Hood),
//! without boundary conditions. The assembled blocks follow the sign
//! convention `b(v, q) = -int q div v`, which makes the Schur complement
//! positive definite on mean-zero pressures.

use std::collections::BTreeMap;

use thiserror::Error;

use crate::mesh::{Mesh, Point};
use crate::quadrature::TriangleRule;
use crate::solution::ManufacturedSolution;
use crate::sparse::SparseMatrix;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ElementPair {
    P2P0,
    TaylorHood,
}

#[derive(Debug, Error)]
pub enum AssemblyError {
    #[error("nonpositive area in triangle {0}; quadrature undefined")]
    QuadratureFailure(usize),
}

/// Scalar P2 node numbering: vertices first, then one node per edge
/// (midpoint). Velocity dofs interleave the two components of each free
/// scalar node; Dirichlet nodes carry no dof.
#[derive(Debug, Clone)]
pub struct DofSpace {
    pub pair: ElementPair,
    pub n_vertices: usize,
    /// Sorted vertex pairs; edge id = position.
    pub edges: Vec<(usize, usize)>,
    /// Scalar P2 node ids per triangle: [v0, v1, v2, e01, e12, e20].
    pub tri_nodes: Vec<[usize; 6]>,
    pub boundary_node: Vec<bool>,
    /// Scalar node -> free scalar slot, None on Dirichlet nodes.
    pub free_index: Vec<Option<usize>>,
    /// Complexity measure N_k: scalar Laplacian dofs.
    pub n_free_scalar: usize,
    pub n_velocity_free: usize,
    pub n_pressure: usize,
}

impl DofSpace {
    pub fn n_scalar_nodes(&self) -> usize {
        self.n_vertices + self.edges.len()
    }

    /// Global velocity dof of (scalar node, component), if free.
    pub fn velocity_dof(&self, node: usize, component: usize) -> Option<usize> {
        debug_assert!(component < 2);
        self.free_index[node].map(|f| 2 * f + component)
    }

    pub fn node_position(&self, mesh: &Mesh, node: usize) -> Point {
        if node < self.n_vertices {
            mesh.vertices[node]
        } else {
            let (a, b) = self.edges[node - self.n_vertices];
            let pa = mesh.vertices[a];
            let pb = mesh.vertices[b];
            [0.5 * (pa[0] + pb[0]), 0.5 * (pa[1] + pb[1])]
        }
    }
}

/// Enumerates P2 nodes and pressure dofs for the pair on this mesh.
pub fn build_dofs(mesh: &Mesh, pair: ElementPair) -> DofSpace {
    let n_vertices = mesh.n_vertices();
    let counts = mesh.edge_counts();
    let edges: Vec<(usize, usize)> = counts.keys().copied().collect();
    let edge_id: BTreeMap<(usize, usize), usize> =
        edges.iter().enumerate().map(|(i, &e)| (e, i)).collect();

    let key = |a: usize, b: usize| if a < b { (a, b) } else { (b, a) };
    let tri_nodes: Vec<[usize; 6]> = mesh
        .triangles
        .iter()
        .map(|&[a, b, c]| {
            [
                a,
                b,
                c,
                n_vertices + edge_id[&key(a, b)],
                n_vertices + edge_id[&key(b, c)],
                n_vertices + edge_id[&key(c, a)],
            ]
        })
        .collect();

    let mut boundary_node = vec![false; n_vertices + edges.len()];
    for (v, &flag) in mesh.boundary_vertex.iter().enumerate() {
        boundary_node[v] = flag;
    }
    for (&e, &count) in &counts {
        if count == 1 {
            boundary_node[n_vertices + edge_id[&e]] = true;
        }
    }

    let mut free_index = vec![None; boundary_node.len()];
    let mut n_free_scalar = 0;
    for (node, &on_boundary) in boundary_node.iter().enumerate() {
        if !on_boundary {
            free_index[node] = Some(n_free_scalar);
            n_free_scalar += 1;
        }
    }

    let n_pressure = match pair {
        ElementPair::P2P0 => mesh.n_triangles(),
        ElementPair::TaylorHood => n_vertices,
    };

    DofSpace {
        pair,
        n_vertices,
        edges,
        tri_nodes,
        boundary_node,
        free_index,
        n_free_scalar,
        n_velocity_free: 2 * n_free_scalar,
        n_pressure,
    }
}

/// Assembled discrete Stokes system over free velocity dofs.
pub struct StokesDiscretization {
    /// Vector Laplacian, SPD on free dofs.
    pub a: SparseMatrix,
    /// Mixed form, `b(v, q) = -int q div v`; rows are pressure dofs.
    pub b: SparseMatrix,
    /// Pressure mass matrix.
    pub mp: SparseMatrix,
    /// Load functional over free velocity dofs.
    pub f_vec: Vec<f64>,
    /// Constraint data, signed to match the chosen b.
    pub g_vec: Vec<f64>,
    pub dofs: DofSpace,
    pub mesh: Mesh,
    /// Mp applied to the constant-one pressure; used for mean projections.
    pub mp_one: Vec<f64>,
    /// Domain area = 1^T Mp 1.
    pub volume: f64,
}

/// P2 shape values and barycentric derivatives at one quadrature point.
fn p2_shape(lam: [f64; 3]) -> ([f64; 6], [[f64; 3]; 6]) {
    let [l0, l1, l2] = lam;
    let values = [
        l0 * (2.0 * l0 - 1.0),
        l1 * (2.0 * l1 - 1.0),
        l2 * (2.0 * l2 - 1.0),
        4.0 * l0 * l1,
        4.0 * l1 * l2,
        4.0 * l2 * l0,
    ];
    let deriv = [
        [4.0 * l0 - 1.0, 0.0, 0.0],
        [0.0, 4.0 * l1 - 1.0, 0.0],
        [0.0, 0.0, 4.0 * l2 - 1.0],
        [4.0 * l1, 4.0 * l0, 0.0],
        [0.0, 4.0 * l2, 4.0 * l1],
        [4.0 * l2, 0.0, 4.0 * l0],
    ];
    (values, deriv)
}

/// Geometry of one triangle: positive area and constant barycentric
/// gradients.
struct TriangleGeometry {
    area: f64,
    grad_lambda: [[f64; 2]; 3],
    corners: [Point; 3],
}

fn triangle_geometry(mesh: &Mesh, t: usize) -> Result<TriangleGeometry, AssemblyError> {
    let [a, b, c] = mesh.triangles[t];
    let pa = mesh.vertices[a];
    let pb = mesh.vertices[b];
    let pc = mesh.vertices[c];
    let two_a = (pb[0] - pa[0]) * (pc[1] - pa[1]) - (pc[0] - pa[0]) * (pb[1] - pa[1]);
    if two_a <= 0.0 {
        return Err(AssemblyError::QuadratureFailure(t));
    }
    let grad_lambda = [
        [(pb[1] - pc[1]) / two_a, (pc[0] - pb[0]) / two_a],
        [(pc[1] - pa[1]) / two_a, (pa[0] - pc[0]) / two_a],
        [(pa[1] - pb[1]) / two_a, (pb[0] - pa[0]) / two_a],
    ];
    Ok(TriangleGeometry {
        area: 0.5 * two_a,
        grad_lambda,
        corners: [pa, pb, pc],
    })
}

fn map_point(geo: &TriangleGeometry, lam: [f64; 3]) -> Point {
    [
        lam[0] * geo.corners[0][0] + lam[1] * geo.corners[1][0] + lam[2] * geo.corners[2][0],
        lam[0] * geo.corners[0][1] + lam[1] * geo.corners[1][1] + lam[2] * geo.corners[2][1],
    ]
}

/// Assembles the Stokes system with the default degree-6 rule.
pub fn assemble_stokes(
    mesh: &Mesh,
    pair: ElementPair,
    ms: &ManufacturedSolution,
) -> Result<StokesDiscretization, AssemblyError> {
    assemble_stokes_with_rule(mesh, pair, ms, &TriangleRule::degree6())
}

pub fn assemble_stokes_with_rule(
    mesh: &Mesh,
    pair: ElementPair,
    ms: &ManufacturedSolution,
    rule: &TriangleRule,
) -> Result<StokesDiscretization, AssemblyError> {
    let dofs = build_dofs(mesh, pair);
    let n_v = dofs.n_velocity_free;
    let n_p = dofs.n_pressure;
    let n_tri = mesh.n_triangles();

    // shape data is mesh independent; evaluate once per quadrature point
    let shapes: Vec<([f64; 6], [[f64; 3]; 6])> =
        rule.points.iter().map(|&lam| p2_shape(lam)).collect();

    let mut k_pairs: Vec<(u64, f64)> = Vec::with_capacity(36 * n_tri);
    let mut b_pairs: Vec<(u64, f64)> = Vec::with_capacity(36 * n_tri);
    let mut mp_pairs: Vec<(u64, f64)> = Vec::with_capacity(9 * n_tri);
    let mut f_scalar = vec![[0.0f64; 2]; dofs.n_scalar_nodes()];
    let mut g_vec = vec![0.0f64; n_p];

    for t in 0..n_tri {
        let geo = triangle_geometry(mesh, t)?;
        let nodes = dofs.tri_nodes[t];
        let verts = mesh.triangles[t];

        let mut k_loc = [[0.0f64; 6]; 6];
        // b_loc[m][k][c]: pressure basis m against d phi_k / d x_c
        let mut b_loc = [[[0.0f64; 2]; 6]; 3];
        let mut mp_loc = [[0.0f64; 3]; 3];
        let mut f_loc = [[0.0f64; 2]; 6];
        let mut g_loc = [0.0f64; 3];

        for (q, (&lam, &w)) in rule.points.iter().zip(&rule.weights).enumerate() {
            let (phi, dphi) = &shapes[q];
            let wa = w * geo.area;
            // physical gradients of the six shape functions
            let mut grad = [[0.0f64; 2]; 6];
            for k in 0..6 {
                for i in 0..3 {
                    let d = dphi[k][i];
                    if d != 0.0 {
                        grad[k][0] += d * geo.grad_lambda[i][0];
                        grad[k][1] += d * geo.grad_lambda[i][1];
                    }
                }
            }
            for i in 0..6 {
                for j in i..6 {
                    let v = wa * (grad[i][0] * grad[j][0] + grad[i][1] * grad[j][1]);
                    k_loc[i][j] += v;
                    if i != j {
                        k_loc[j][i] += v;
                    }
                }
            }
            let x = map_point(&geo, lam);
            let fx = (ms.body_force)(x);
            let gx = (ms.divergence)(x);
            match pair {
                ElementPair::P2P0 => {
                    for k in 0..6 {
                        b_loc[0][k][0] -= wa * grad[k][0];
                        b_loc[0][k][1] -= wa * grad[k][1];
                    }
                    mp_loc[0][0] += wa;
                    g_loc[0] -= wa * gx;
                }
                ElementPair::TaylorHood => {
                    for m in 0..3 {
                        let chi = lam[m];
                        for k in 0..6 {
                            b_loc[m][k][0] -= wa * chi * grad[k][0];
                            b_loc[m][k][1] -= wa * chi * grad[k][1];
                        }
                        for n in 0..3 {
                            mp_loc[m][n] += wa * chi * lam[n];
                        }
                        g_loc[m] -= wa * chi * gx;
                    }
                }
            }
            for k in 0..6 {
                f_loc[k][0] += wa * fx[0] * phi[k];
                f_loc[k][1] += wa * fx[1] * phi[k];
            }
        }

        // scatter with Dirichlet rows/columns eliminated
        for i in 0..6 {
            let Some(fi) = dofs.free_index[nodes[i]] else {
                continue;
            };
            for j in 0..6 {
                if let Some(fj) = dofs.free_index[nodes[j]] {
                    k_pairs.push((((fi as u64) << 32) | fj as u64, k_loc[i][j]));
                }
            }
            f_scalar[nodes[i]][0] += f_loc[i][0];
            f_scalar[nodes[i]][1] += f_loc[i][1];
        }
        match pair {
            ElementPair::P2P0 => {
                for k in 0..6 {
                    if let Some(fk) = dofs.free_index[nodes[k]] {
                        for c in 0..2 {
                            b_pairs.push((
                                ((t as u64) << 32) | (2 * fk + c) as u64,
                                b_loc[0][k][c],
                            ));
                        }
                    }
                }
                mp_pairs.push((((t as u64) << 32) | t as u64, mp_loc[0][0]));
                g_vec[t] += g_loc[0];
            }
            ElementPair::TaylorHood => {
                for m in 0..3 {
                    let pm = verts[m] as u64;
                    for k in 0..6 {
                        if let Some(fk) = dofs.free_index[nodes[k]] {
                            for c in 0..2 {
                                b_pairs.push((
                                    (pm << 32) | (2 * fk + c) as u64,
                                    b_loc[m][k][c],
                                ));
                            }
                        }
                    }
                    for n in 0..3 {
                        mp_pairs.push(((pm << 32) | verts[n] as u64, mp_loc[m][n]));
                    }
                    g_vec[verts[m]] += g_loc[m];
                }
            }
        }
    }

    // expand the scalar stiffness to the interleaved vector operator
    let k_scalar =
        SparseMatrix::from_keyed_pairs(dofs.n_free_scalar, dofs.n_free_scalar, &mut k_pairs);
    drop(k_pairs);
    let a = interleave_two_components(&k_scalar);
    let b = SparseMatrix::from_keyed_pairs(n_p, n_v, &mut b_pairs);
    drop(b_pairs);
    let mp = SparseMatrix::from_keyed_pairs(n_p, n_p, &mut mp_pairs);

    let mut f_vec = vec![0.0; n_v];
    for (node, load) in f_scalar.iter().enumerate() {
        if let Some(f) = dofs.free_index[node] {
            f_vec[2 * f] = load[0];
            f_vec[2 * f + 1] = load[1];
        }
    }

    let mp_one = mp.matvec(&vec![1.0; n_p]).expect("square mass matrix");
    let volume = mp_one.iter().sum();

    Ok(StokesDiscretization {
        a,
        b,
        mp,
        f_vec,
        g_vec,
        dofs,
        mesh: mesh.clone(),
        mp_one,
        volume,
    })
}

/// Block-expands a scalar operator K to the interleaved two-component
/// operator diag(K, K) under dof numbering 2i + c.
fn interleave_two_components(k: &SparseMatrix) -> SparseMatrix {
    let n = k.n_rows();
    let mut pairs: Vec<(u64, f64)> = Vec::with_capacity(2 * k.nnz());
    for r in 0..n {
        let (cols, vals) = k.row(r);
        for c in 0..2u64 {
            for (col, val) in cols.iter().zip(vals) {
                pairs.push(((((2 * r) as u64 + c) << 32) | ((2 * col) as u64 + c), *val));
            }
        }
    }
    SparseMatrix::from_keyed_pairs(2 * n, 2 * n, &mut pairs)
}

/// Expands a free velocity coefficient vector to per-node component values,
/// zero on Dirichlet nodes.
pub fn expand_velocity(dofs: &DofSpace, u: &[f64]) -> Vec<[f64; 2]> {
    assert_eq!(u.len(), dofs.n_velocity_free);
    let mut out = vec![[0.0; 2]; dofs.n_scalar_nodes()];
    for node in 0..dofs.n_scalar_nodes() {
        if let Some(f) = dofs.free_index[node] {
            out[node] = [u[2 * f], u[2 * f + 1]];
        }
    }
    out
}

/// Energy (H1 seminorm) distance between the discrete velocity and the exact
/// one: `( sum_T int_T |grad u_h - grad u|^2 )^(1/2)` by quadrature.
pub fn energy_error(
    u_h: &[f64],
    disc: &StokesDiscretization,
    ms: &ManufacturedSolution,
) -> f64 {
    let rule = TriangleRule::degree6();
    let shapes: Vec<([f64; 6], [[f64; 3]; 6])> =
        rule.points.iter().map(|&lam| p2_shape(lam)).collect();
    let nodal = expand_velocity(&disc.dofs, u_h);
    let mut total = 0.0;
    for t in 0..disc.mesh.n_triangles() {
        let geo = triangle_geometry(&disc.mesh, t).expect("assembled mesh");
        let nodes = disc.dofs.tri_nodes[t];
        for (q, (&lam, &w)) in rule.points.iter().zip(&rule.weights).enumerate() {
            let (_, dphi) = &shapes[q];
            let mut grad_h = [[0.0f64; 2]; 2];
            for k in 0..6 {
                let mut g = [0.0f64; 2];
                for i in 0..3 {
                    let d = dphi[k][i];
                    if d != 0.0 {
                        g[0] += d * geo.grad_lambda[i][0];
                        g[1] += d * geo.grad_lambda[i][1];
                    }
                }
                let coeff = nodal[nodes[k]];
                for c in 0..2 {
                    grad_h[c][0] += coeff[c] * g[0];
                    grad_h[c][1] += coeff[c] * g[1];
                }
            }
            let x = map_point(&geo, lam);
            let grad_exact = (ms.velocity_grad)(x);
            let mut diff2 = 0.0;
            for c in 0..2 {
                for d in 0..2 {
                    let e = grad_h[c][d] - grad_exact[c][d];
                    diff2 += e * e;
                }
            }
            total += w * geo.area * diff2;
        }
    }
    total.sqrt()
}

/// Evaluates the discrete pressure at a barycentric point of triangle `t`.
fn pressure_at(disc: &StokesDiscretization, p_h: &[f64], t: usize, lam: [f64; 3]) -> f64 {
    match disc.dofs.pair {
        ElementPair::P2P0 => p_h[t],
        ElementPair::TaylorHood => {
            let [a, b, c] = disc.mesh.triangles[t];
            lam[0] * p_h[a] + lam[1] * p_h[b] + lam[2] * p_h[c]
        }
    }
}

/// L2 distance between discrete and exact pressure after removing the mean
/// of each over the domain.
pub fn l2_pressure_error(
    p_h: &[f64],
    disc: &StokesDiscretization,
    ms: &ManufacturedSolution,
) -> f64 {
    let rule = TriangleRule::degree6();
    let mut mean_h = 0.0;
    let mut mean_exact = 0.0;
    for t in 0..disc.mesh.n_triangles() {
        let geo = triangle_geometry(&disc.mesh, t).expect("assembled mesh");
        for (&lam, &w) in rule.points.iter().zip(&rule.weights) {
            let x = map_point(&geo, lam);
            mean_h += w * geo.area * pressure_at(disc, p_h, t, lam);
            mean_exact += w * geo.area * (ms.pressure)(x);
        }
    }
    mean_h /= disc.volume;
    mean_exact /= disc.volume;

    let mut total = 0.0;
    for t in 0..disc.mesh.n_triangles() {
        let geo = triangle_geometry(&disc.mesh, t).expect("assembled mesh");
        for (&lam, &w) in rule.points.iter().zip(&rule.weights) {
            let x = map_point(&geo, lam);
            let diff =
                (pressure_at(disc, p_h, t, lam) - mean_h) - ((ms.pressure)(x) - mean_exact);
            total += w * geo.area * diff * diff;
        }
    }
    total.sqrt()
}

/// Scalar P1 element stiffness, exposed as a kernel check.
pub fn p1_stiffness_element(corners: [Point; 3]) -> [[f64; 3]; 3] {
    let [pa, pb, pc] = corners;
    let two_a = (pb[0] - pa[0]) * (pc[1] - pa[1]) - (pc[0] - pa[0]) * (pb[1] - pa[1]);
    let grads = [
        [(pb[1] - pc[1]) / two_a, (pc[0] - pb[0]) / two_a],
        [(pc[1] - pa[1]) / two_a, (pa[0] - pc[0]) / two_a],
        [(pa[1] - pb[1]) / two_a, (pb[0] - pa[0]) / two_a],
    ];
    let area = 0.5 * two_a;
    let mut k = [[0.0; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            k[i][j] = area * (grads[i][0] * grads[j][0] + grads[i][1] * grads[j][1]);
        }
    }
    k
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::{build_initial_mesh, refine, Domain, RefinementRule};
    use crate::solution::builtin_solution;

    fn square_mesh(levels: u32) -> Mesh {
        let mut mesh = build_initial_mesh(Domain::UnitSquare);
        for _ in 1..levels {
            mesh = refine(&mesh, RefinementRule::Uniform).unwrap();
        }
        mesh
    }

    #[test]
    fn dof_counts_on_initial_square() {
        let mesh = square_mesh(1);
        let th = build_dofs(&mesh, ElementPair::TaylorHood);
        assert_eq!(th.n_scalar_nodes(), 13); // 5 vertices + 8 edge midpoints
        assert_eq!(th.boundary_node.iter().filter(|&&b| b).count(), 8);
        assert_eq!(th.n_free_scalar, 5);
        assert_eq!(th.n_velocity_free, 10);
        assert_eq!(th.n_pressure, 5);

        let p0 = build_dofs(&mesh, ElementPair::P2P0);
        assert_eq!(p0.n_pressure, 4);
    }

    #[test]
    fn dof_counts_after_refinement() {
        let mesh = square_mesh(2);
        let th = build_dofs(&mesh, ElementPair::TaylorHood);
        assert_eq!(th.n_pressure, 13);
    }

    #[test]
    fn p1_stiffness_reference_triangle() {
        let k = p1_stiffness_element([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]]);
        let want = [
            [1.0, -0.5, -0.5],
            [-0.5, 0.5, 0.0],
            [-0.5, 0.0, 0.5],
        ];
        for i in 0..3 {
            for j in 0..3 {
                assert!((k[i][j] - want[i][j]).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn p0_mass_is_triangle_areas() {
        let mesh = square_mesh(2);
        let ms = builtin_solution(Domain::UnitSquare);
        let disc = assemble_stokes(&mesh, ElementPair::P2P0, &ms).unwrap();
        let diag = disc.mp.diagonal();
        for t in 0..mesh.n_triangles() {
            assert!((diag[t] - mesh.triangle_area(t)).abs() < 1e-14);
        }
        assert_eq!(disc.mp.nnz(), mesh.n_triangles());
    }

    #[test]
    fn a_is_symmetric_and_positive() {
        let mesh = square_mesh(3);
        let ms = builtin_solution(Domain::UnitSquare);
        for pair in [ElementPair::TaylorHood, ElementPair::P2P0] {
            let disc = assemble_stokes(&mesh, pair, &ms).unwrap();
            assert!(disc.a.asymmetry() < 1e-12);
            // 20 deterministic pseudo-random vectors
            let n = disc.a.n_rows();
            let mut state = 1u64;
            for _ in 0..20 {
                let v: Vec<f64> = (0..n)
                    .map(|_| {
                        state = state
                            .wrapping_mul(6364136223846793005)
                            .wrapping_add(1442695040888963407);
                        ((state >> 33) as f64) / (1u64 << 31) as f64 - 1.0
                    })
                    .collect();
                let av = disc.a.matvec(&v).unwrap();
                let vav = crate::sparse::dot(&v, &av).unwrap();
                assert!(vav > 0.0);
            }
        }
    }

    #[test]
    fn b_rows_kill_constant_fields_on_interior_support() {
        let mesh = square_mesh(3);
        let ms = builtin_solution(Domain::UnitSquare);
        for pair in [ElementPair::TaylorHood, ElementPair::P2P0] {
            let disc = assemble_stokes(&mesh, pair, &ms).unwrap();
            // pressure dofs whose support touches no Dirichlet node
            let mut interior = vec![true; disc.dofs.n_pressure];
            for t in 0..mesh.n_triangles() {
                let touches_boundary = disc.dofs.tri_nodes[t]
                    .iter()
                    .any(|&n| disc.dofs.boundary_node[n]);
                if touches_boundary {
                    match pair {
                        ElementPair::P2P0 => interior[t] = false,
                        ElementPair::TaylorHood => {
                            for &v in &mesh.triangles[t] {
                                interior[v] = false;
                            }
                        }
                    }
                }
            }
            assert!(interior.iter().any(|&x| x), "mesh too coarse for the check");
            for c in 0..2 {
                for (m, &is_interior) in interior.iter().enumerate() {
                    if !is_interior {
                        continue;
                    }
                    let (cols, vals) = disc.b.row(m);
                    let sum: f64 = cols
                        .iter()
                        .zip(vals)
                        .filter(|(col, _)| *col % 2 == c)
                        .map(|(_, v)| v)
                        .sum();
                    assert!(sum.abs() < 1e-12, "row {m} comp {c}: {sum}");
                }
            }
        }
    }

    #[test]
    fn galerkin_consistency_of_first_equation() {
        // For any fixed p: u = A^{-1}(f - B^T p) satisfies
        // a(u, v) + b(v, p) = <f, v> for all basis v.
        let mesh = square_mesh(2);
        let ms = builtin_solution(Domain::UnitSquare);
        let disc = assemble_stokes(&mesh, ElementPair::TaylorHood, &ms).unwrap();
        let p: Vec<f64> = (0..disc.dofs.n_pressure)
            .map(|i| (i as f64 * 0.37).sin())
            .collect();
        let btp = disc.b.matvec_transpose(&p).unwrap();
        let rhs: Vec<f64> = disc
            .f_vec
            .iter()
            .zip(&btp)
            .map(|(f, b)| f - b)
            .collect();
        let u = crate::sparse::spd_solve(&disc.a, &rhs).unwrap();
        let au = disc.a.matvec(&u).unwrap();
        let scale = crate::sparse::norm2(&disc.f_vec).max(1.0);
        for i in 0..u.len() {
            assert!(
                (au[i] + btp[i] - disc.f_vec[i]).abs() < 1e-10 * scale,
                "residual at dof {i}"
            );
        }
    }

    #[test]
    fn quadrature_order_is_sufficient() {
        // doubling the rule degree leaves A and B unchanged to 1e-12 relative
        let mesh = square_mesh(2);
        let ms = builtin_solution(Domain::UnitSquare);
        for pair in [ElementPair::TaylorHood, ElementPair::P2P0] {
            let base = assemble_stokes(&mesh, pair, &ms).unwrap();
            let doubled =
                assemble_stokes_with_rule(&mesh, pair, &ms, &TriangleRule::conical(12))
                    .unwrap();
            let da = base.a.to_dense();
            let db = doubled.a.to_dense();
            let scale = da.iter().fold(0.0f64, |m, v| m.max(v.abs()));
            for (x, y) in da.iter().zip(&db) {
                assert!((x - y).abs() <= 1e-12 * scale);
            }
            let ba = base.b.to_dense();
            let bb = doubled.b.to_dense();
            let scale_b = ba.iter().fold(0.0f64, |m, v| m.max(v.abs()));
            for (x, y) in ba.iter().zip(&bb) {
                assert!((x - y).abs() <= 1e-12 * scale_b);
            }
        }
    }

    #[test]
    fn energy_error_vanishes_for_p2_exact_velocity() {
        // u1 = 2((1-x-y)^2 + x^2 + y^2) - 1 is a global quadratic that is
        // zero at the three edge midpoints of the reference triangle. With
        // the vertex boundary flags cleared, the free dofs are exactly the
        // vertices, the eliminated midpoint dofs carry the value zero, and
        // the P2 interpolant reproduces u1. The energy error must be
        // quadrature-exact zero.
        let ms = ManufacturedSolution {
            velocity: Box::new(|p| {
                let l0 = 1.0 - p[0] - p[1];
                [2.0 * (l0 * l0 + p[0] * p[0] + p[1] * p[1]) - 1.0, 0.0]
            }),
            velocity_grad: Box::new(|p| {
                [
                    [
                        8.0 * p[0] + 4.0 * p[1] - 4.0,
                        4.0 * p[0] + 8.0 * p[1] - 4.0,
                    ],
                    [0.0, 0.0],
                ]
            }),
            pressure: Box::new(|_| 0.0),
            body_force: Box::new(|_| [0.0, 0.0]),
            divergence: Box::new(|p| 8.0 * p[0] + 4.0 * p[1] - 4.0),
        };
        let mesh = Mesh {
            vertices: vec![[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]],
            triangles: vec![[0, 1, 2]],
            boundary_vertex: vec![false, false, false],
            level: 1,
            parent_triangle: None,
            edge_midpoints: BTreeMap::new(),
        };
        let disc = assemble_stokes(&mesh, ElementPair::TaylorHood, &ms).unwrap();
        assert_eq!(disc.dofs.n_free_scalar, 3);
        let mut u_h = vec![0.0; disc.dofs.n_velocity_free];
        for node in 0..disc.dofs.n_scalar_nodes() {
            if let Some(f) = disc.dofs.free_index[node] {
                let x = disc.dofs.node_position(&mesh, node);
                u_h[2 * f] = (ms.velocity)(x)[0];
            }
        }
        let err = energy_error(&u_h, &disc, &ms);
        assert!(err < 1e-12, "energy error {err}");
    }

    #[test]
    fn energy_error_of_zero_is_solution_energy() {
        // |u|^2 = int |grad u|^2 = 1/(4 pi^2) for the square solution
        let ms = builtin_solution(Domain::UnitSquare);
        let mesh = square_mesh(4);
        let disc = assemble_stokes(&mesh, ElementPair::TaylorHood, &ms).unwrap();
        let zero = vec![0.0; disc.dofs.n_velocity_free];
        let got = energy_error(&zero, &disc, &ms);
        let want = 1.0 / (2.0 * std::f64::consts::PI);
        assert!((got - want).abs() < 1e-6, "{got} vs {want}");
    }

    #[test]
    fn interpolation_error_decays_quadratically() {
        let ms = builtin_solution(Domain::UnitSquare);
        let mut errors = Vec::new();
        let mut mesh = square_mesh(3);
        for _ in 0..2 {
            let disc = assemble_stokes(&mesh, ElementPair::TaylorHood, &ms).unwrap();
            let mut u_h = vec![0.0; disc.dofs.n_velocity_free];
            for node in 0..disc.dofs.n_scalar_nodes() {
                if let Some(f) = disc.dofs.free_index[node] {
                    let x = disc.dofs.node_position(&mesh, node);
                    let u = (ms.velocity)(x);
                    u_h[2 * f] = u[0];
                    u_h[2 * f + 1] = u[1];
                }
            }
            errors.push(energy_error(&u_h, &disc, &ms));
            mesh = refine(&mesh, RefinementRule::Uniform).unwrap();
        }
        let ratio = errors[0] / errors[1];
        assert!(
            (3.6..=4.4).contains(&ratio),
            "interpolation ratio {ratio}, errors {errors:?}"
        );
    }

    #[test]
    fn pressure_error_mean_invariance_and_exactness() {
        let ms = builtin_solution(Domain::UnitSquare);
        let mesh = square_mesh(3);
        let disc = assemble_stokes(&mesh, ElementPair::TaylorHood, &ms).unwrap();
        // a linear pressure lies in the Taylor-Hood space: errors vanish
        let linear = ManufacturedSolution {
            velocity: Box::new(|_| [0.0, 0.0]),
            velocity_grad: Box::new(|_| [[0.0; 2]; 2]),
            pressure: Box::new(|p| p[0] - 0.5),
            body_force: Box::new(|_| [0.0, 0.0]),
            divergence: Box::new(|_| 0.0),
        };
        let nodal: Vec<f64> = (0..disc.dofs.n_pressure)
            .map(|v| (linear.pressure)(mesh.vertices[v]))
            .collect();
        let err = l2_pressure_error(&nodal, &disc, &linear);
        assert!(err < 1e-12, "exact reproduction failed: {err}");

        // adding a constant must not change the error
        let shifted: Vec<f64> = nodal.iter().map(|v| v + 3.7).collect();
        let err_shifted = l2_pressure_error(&shifted, &disc, &linear);
        assert!((err - err_shifted).abs() < 1e-12);
    }

    #[test]
    fn p0_projection_error_halves_per_level() {
        let ms = builtin_solution(Domain::UnitSquare);
        let mut mesh = square_mesh(3);
        let mut errors = Vec::new();
        for _ in 0..2 {
            let disc = assemble_stokes(&mesh, ElementPair::P2P0, &ms).unwrap();
            // L2 projection onto P0: triangle averages of the exact pressure
            let rule = TriangleRule::degree6();
            let mut proj = vec![0.0; disc.dofs.n_pressure];
            for t in 0..mesh.n_triangles() {
                let geo = super::triangle_geometry(&mesh, t).unwrap();
                let mut avg = 0.0;
                for (&lam, &w) in rule.points.iter().zip(&rule.weights) {
                    avg += w * (ms.pressure)(super::map_point(&geo, lam));
                }
                proj[t] = avg;
            }
            errors.push(l2_pressure_error(&proj, &disc, &ms));
            mesh = refine(&mesh, RefinementRule::Uniform).unwrap();
        }
        let ratio = errors[0] / errors[1];
        assert!((1.8..=2.2).contains(&ratio), "ratio {ratio}");
    }
}
