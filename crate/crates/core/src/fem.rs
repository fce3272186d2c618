//! P1 finite element assembly on interior nodes (Dirichlet conditions by
//! elimination). Every integral uses the same 3-point rule, exact for
//! polynomials of degree 2 on each triangle.

use crate::error::{FiberError, Result};
use crate::linalg::SparseMatrix;
use crate::mesh::Mesh;
use crate::{parallel, Vector};

/// Barycentric coordinates of the 3 quadrature points; each has weight `area / 3`.
pub const QUADRATURE_BARYCENTRIC: [[f64; 3]; 3] = [
    [2.0 / 3.0, 1.0 / 6.0, 1.0 / 6.0],
    [1.0 / 6.0, 2.0 / 3.0, 1.0 / 6.0],
    [1.0 / 6.0, 1.0 / 6.0, 2.0 / 3.0],
];
pub const POINTS_PER_TRIANGLE: usize = 3;

/// Quadrature points and weights for every triangle; triangle `t` owns entries
/// `3t .. 3t + 3`.
#[derive(Debug, Clone)]
pub struct QuadratureTable {
    pub points: Vec<[f64; 2]>,
    pub weights: Vec<f64>,
}

impl QuadratureTable {
    pub fn new(mesh: &Mesh) -> Self {
        let mut points = Vec::with_capacity(POINTS_PER_TRIANGLE * mesh.num_triangles());
        let mut weights = Vec::with_capacity(points.capacity());
        for t in 0..mesh.num_triangles() {
            let c = mesh.corners(t);
            let w = mesh.signed_area(t).abs() / 3.0;
            for bary in QUADRATURE_BARYCENTRIC {
                points.push([
                    bary[0] * c[0][0] + bary[1] * c[1][0] + bary[2] * c[2][0],
                    bary[0] * c[0][1] + bary[1] * c[1][1] + bary[2] * c[2][1],
                ]);
                weights.push(w);
            }
        }
        Self { points, weights }
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }
}

/// Which vertices carry unknowns in an assembly.
#[derive(Clone, Copy)]
enum Dofs {
    Interior,
    All,
}

impl Dofs {
    fn count(self, mesh: &Mesh) -> usize {
        match self {
            Dofs::Interior => mesh.num_interior(),
            Dofs::All => mesh.num_vertices(),
        }
    }

    fn index(self, mesh: &Mesh, vertex: usize) -> Option<usize> {
        match self {
            Dofs::Interior => mesh.interior_index(vertex),
            Dofs::All => Some(vertex),
        }
    }
}

fn checked_area(mesh: &Mesh, t: usize) -> Result<f64> {
    let area = mesh.signed_area(t);
    let c = mesh.corners(t);
    let scale = (0..3)
        .map(|k| {
            let (p, q) = (c[k], c[(k + 1) % 3]);
            (p[0] - q[0]).powi(2) + (p[1] - q[1]).powi(2)
        })
        .fold(0.0, f64::max);
    if !(area > 1e-14 * scale) {
        return Err(FiberError::DegenerateTriangle { index: t, area });
    }
    Ok(area)
}

fn check_mesh(mesh: &Mesh) -> Result<()> {
    for t in 0..mesh.num_triangles() {
        checked_area(mesh, t)?;
    }
    Ok(())
}

/// Gradients of the three barycentric functions of triangle `t`.
fn gradients(mesh: &Mesh, t: usize) -> [[f64; 2]; 3] {
    let [p0, p1, p2] = mesh.corners(t);
    let twice = 2.0 * mesh.signed_area(t);
    [
        [(p1[1] - p2[1]) / twice, (p2[0] - p1[0]) / twice],
        [(p2[1] - p0[1]) / twice, (p0[0] - p2[0]) / twice],
        [(p0[1] - p1[1]) / twice, (p1[0] - p0[0]) / twice],
    ]
}

fn element_stiffness(mesh: &Mesh, t: usize) -> [[f64; 3]; 3] {
    let g = gradients(mesh, t);
    let area = mesh.signed_area(t);
    let mut k = [[0.0; 3]; 3];
    for a in 0..3 {
        for b in 0..3 {
            k[a][b] = area * (g[a][0] * g[b][0] + g[a][1] * g[b][1]);
        }
    }
    k
}

/// `∫ w θ_a θ_b` on triangle `t` with `w` given at its quadrature points.
fn element_weighted_mass(mesh: &Mesh, t: usize, weight: [f64; 3]) -> [[f64; 3]; 3] {
    let qw = mesh.signed_area(t) / 3.0;
    let mut m = [[0.0; 3]; 3];
    for (q, bary) in QUADRATURE_BARYCENTRIC.iter().enumerate() {
        for a in 0..3 {
            for b in 0..3 {
                m[a][b] += qw * weight[q] * bary[a] * bary[b];
            }
        }
    }
    m
}

fn assemble_matrix<F>(mesh: &Mesh, dofs: Dofs, element: F) -> Result<SparseMatrix>
where
    F: Fn(usize) -> [[f64; 3]; 3] + Sync + Send,
{
    check_mesh(mesh)?;
    let locals = parallel::map_range(mesh.num_triangles(), element);
    let n = dofs.count(mesh);
    let mut triplets = Vec::with_capacity(9 * mesh.num_triangles());
    for (t, local) in locals.iter().enumerate() {
        let tri = mesh.triangles()[t];
        for a in 0..3 {
            let Some(i) = dofs.index(mesh, tri[a]) else {
                continue;
            };
            for b in 0..3 {
                if let Some(j) = dofs.index(mesh, tri[b]) {
                    triplets.push((i, j, local[a][b]));
                }
            }
        }
    }
    Ok(SparseMatrix::from_triplets(n, n, &triplets))
}

fn assemble_vector<F>(mesh: &Mesh, dofs: Dofs, element: F) -> Result<Vector>
where
    F: Fn(usize) -> Result<[f64; 3]> + Sync + Send,
{
    check_mesh(mesh)?;
    let locals = parallel::map_range(mesh.num_triangles(), element);
    let mut out = Vector::zeros(dofs.count(mesh));
    for (t, local) in locals.into_iter().enumerate() {
        let local = local?;
        let tri = mesh.triangles()[t];
        for a in 0..3 {
            if let Some(i) = dofs.index(mesh, tri[a]) {
                out[i] += local[a];
            }
        }
    }
    Ok(out)
}

/// Stiffness matrix `∫ ∇θ_i · ∇θ_j` on interior nodes.
pub fn assemble_stiffness(mesh: &Mesh) -> Result<SparseMatrix> {
    assemble_matrix(mesh, Dofs::Interior, |t| element_stiffness(mesh, t))
}

/// Stiffness matrix over all vertices (boundary included).
pub fn assemble_stiffness_full(mesh: &Mesh) -> Result<SparseMatrix> {
    assemble_matrix(mesh, Dofs::All, |t| element_stiffness(mesh, t))
}

pub fn assemble_mass(mesh: &Mesh) -> Result<SparseMatrix> {
    assemble_matrix(mesh, Dofs::Interior, |t| {
        element_weighted_mass(mesh, t, [1.0; 3])
    })
}

pub fn assemble_mass_full(mesh: &Mesh) -> Result<SparseMatrix> {
    assemble_matrix(mesh, Dofs::All, |t| {
        element_weighted_mass(mesh, t, [1.0; 3])
    })
}

/// `∫ w θ_i θ_j` with `w` tabulated at every quadrature point.
pub fn assemble_weighted_mass(mesh: &Mesh, weight: &[f64]) -> Result<SparseMatrix> {
    let expected = POINTS_PER_TRIANGLE * mesh.num_triangles();
    if weight.len() != expected {
        return Err(FiberError::DimensionMismatch {
            expected,
            got: weight.len(),
        });
    }
    assemble_matrix(mesh, Dofs::Interior, |t| {
        element_weighted_mass(
            mesh,
            t,
            [weight[3 * t], weight[3 * t + 1], weight[3 * t + 2]],
        )
    })
}

fn element_load<F>(mesh: &Mesh, t: usize, field: &F) -> [f64; 3]
where
    F: Fn(f64, f64) -> f64,
{
    let c = mesh.corners(t);
    let qw = mesh.signed_area(t) / 3.0;
    let mut out = [0.0; 3];
    for bary in QUADRATURE_BARYCENTRIC {
        let x = bary[0] * c[0][0] + bary[1] * c[1][0] + bary[2] * c[2][0];
        let y = bary[0] * c[0][1] + bary[1] * c[1][1] + bary[2] * c[2][1];
        let v = qw * field(x, y);
        for a in 0..3 {
            out[a] += v * bary[a];
        }
    }
    out
}

/// Load vector `∫ field · θ_i` on interior nodes.
pub fn assemble_load<F>(mesh: &Mesh, field: F) -> Result<Vector>
where
    F: Fn(f64, f64) -> f64 + Sync + Send,
{
    assemble_vector(mesh, Dofs::Interior, |t| Ok(element_load(mesh, t, &field)))
}

pub fn assemble_load_full<F>(mesh: &Mesh, field: F) -> Result<Vector>
where
    F: Fn(f64, f64) -> f64 + Sync + Send,
{
    assemble_vector(mesh, Dofs::All, |t| Ok(element_load(mesh, t, &field)))
}

/// Nodal values of triangle `t` for the zero extension of interior vector `u`.
fn local_values(mesh: &Mesh, t: usize, u: &Vector) -> [f64; 3] {
    mesh.triangles()[t].map(|v| mesh.interior_index(v).map_or(0.0, |i| u[i]))
}

fn check_len(mesh: &Mesh, u: &Vector) -> Result<()> {
    if u.len() != mesh.num_interior() {
        return Err(FiberError::DimensionMismatch {
            expected: mesh.num_interior(),
            got: u.len(),
        });
    }
    Ok(())
}

/// Values of the P1 interpolant of `u` (zero on the boundary) at every quadrature point.
pub fn values_at_quadrature(mesh: &Mesh, u: &Vector) -> Result<Vec<f64>> {
    check_len(mesh, u)?;
    let per_triangle = parallel::map_range(mesh.num_triangles(), |t| {
        let nodal = local_values(mesh, t, u);
        QUADRATURE_BARYCENTRIC.map(|b| b[0] * nodal[0] + b[1] * nodal[1] + b[2] * nodal[2])
    });
    Ok(per_triangle.into_iter().flatten().collect())
}

/// `∫ f(u_h) θ_i` with `f` evaluated at the quadrature points of the interpolant.
pub fn assemble_nonlinear_load<F>(mesh: &Mesh, u: &Vector, f: F) -> Result<Vector>
where
    F: Fn(f64) -> f64 + Sync + Send,
{
    check_len(mesh, u)?;
    assemble_vector(mesh, Dofs::Interior, |t| {
        let nodal = local_values(mesh, t, u);
        let qw = mesh.signed_area(t) / 3.0;
        let mut out = [0.0; 3];
        for bary in QUADRATURE_BARYCENTRIC {
            let uq = bary[0] * nodal[0] + bary[1] * nodal[1] + bary[2] * nodal[2];
            let v = f(uq);
            if !v.is_finite() {
                return Err(FiberError::InvalidParameter(format!(
                    "nonlinearity returned {v} at u = {uq}"
                )));
            }
            for a in 0..3 {
                out[a] += qw * v * bary[a];
            }
        }
        Ok(out)
    })
}

/// The discrete operators of one mesh: stiffness `K`, mass `M` and the
/// quadrature table shared by every integral.
#[derive(Debug, Clone)]
pub struct FemSystem {
    pub mesh: Mesh,
    pub stiffness: SparseMatrix,
    pub mass: SparseMatrix,
    pub quadrature: QuadratureTable,
}

impl FemSystem {
    pub fn new(mesh: Mesh) -> Result<Self> {
        let stiffness = assemble_stiffness(&mesh)?;
        let mass = assemble_mass(&mesh)?;
        let quadrature = QuadratureTable::new(&mesh);
        Ok(Self {
            mesh,
            stiffness,
            mass,
            quadrature,
        })
    }

    pub fn dim(&self) -> usize {
        self.mesh.num_interior()
    }

    pub fn weighted_mass(&self, weight: &[f64]) -> Result<SparseMatrix> {
        assemble_weighted_mass(&self.mesh, weight)
    }

    pub fn load<F>(&self, field: F) -> Result<Vector>
    where
        F: Fn(f64, f64) -> f64 + Sync + Send,
    {
        assemble_load(&self.mesh, field)
    }

    pub fn nonlinear_load<F>(&self, u: &Vector, f: F) -> Result<Vector>
    where
        F: Fn(f64) -> f64 + Sync + Send,
    {
        assemble_nonlinear_load(&self.mesh, u, f)
    }

    pub fn values_at_quadrature(&self, u: &Vector) -> Result<Vec<f64>> {
        values_at_quadrature(&self.mesh, u)
    }

    /// Nodal interpolant of a field on interior nodes.
    pub fn interpolate<F>(&self, field: F) -> Vector
    where
        F: Fn(f64, f64) -> f64,
    {
        Vector::from_fn(self.dim(), |i, _| {
            let [x, y] = self.mesh.vertices()[self.mesh.interior_vertex(i)];
            field(x, y)
        })
    }
}
