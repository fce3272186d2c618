//! P1 triangulations of polygonal domains.

use std::collections::HashMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{FiberError, Result};

/// A triangulated polygon with Dirichlet bookkeeping.
///
/// Unknowns live on interior (unflagged) vertices only; `interior_index` maps a
/// vertex id to its dense unknown index.
#[derive(Debug, Clone, PartialEq)]
pub struct Mesh {
    vertices: Vec<[f64; 2]>,
    triangles: Vec<[usize; 3]>,
    boundary: Vec<bool>,
    interior_index: Vec<Option<usize>>,
    interior_vertices: Vec<usize>,
}

#[derive(Serialize, Deserialize)]
struct MeshFile {
    vertices: Vec<[f64; 2]>,
    triangles: Vec<[usize; 3]>,
    boundary: Vec<u8>,
}

/// Twice the signed area of the triangle `(a, b, c)`.
fn cross(a: [f64; 2], b: [f64; 2], c: [f64; 2]) -> f64 {
    (b[0] - a[0]) * (c[1] - a[1]) - (c[0] - a[0]) * (b[1] - a[1])
}

impl Mesh {
    /// Builds a mesh from explicit lists. Fails only on out-of-range indices or a
    /// length mismatch; geometric checks are left to [`Mesh::validate`].
    pub fn new(
        vertices: Vec<[f64; 2]>,
        triangles: Vec<[usize; 3]>,
        boundary: Vec<bool>,
    ) -> Result<Self> {
        if boundary.len() != vertices.len() {
            return Err(FiberError::DimensionMismatch {
                expected: vertices.len(),
                got: boundary.len(),
            });
        }
        if let Some(t) = triangles
            .iter()
            .position(|t| t.iter().any(|&v| v >= vertices.len()))
        {
            return Err(FiberError::InvalidMesh(format!(
                "triangle {t} references a vertex out of range"
            )));
        }
        let mut interior_index = vec![None; vertices.len()];
        let mut interior_vertices = Vec::new();
        for (v, &b) in boundary.iter().enumerate() {
            if !b {
                interior_index[v] = Some(interior_vertices.len());
                interior_vertices.push(v);
            }
        }
        Ok(Self {
            vertices,
            triangles,
            boundary,
            interior_index,
            interior_vertices,
        })
    }

    pub fn vertices(&self) -> &[[f64; 2]] {
        &self.vertices
    }

    pub fn triangles(&self) -> &[[usize; 3]] {
        &self.triangles
    }

    pub fn boundary_mask(&self) -> &[bool] {
        &self.boundary
    }

    pub fn num_vertices(&self) -> usize {
        self.vertices.len()
    }

    pub fn num_triangles(&self) -> usize {
        self.triangles.len()
    }

    pub fn num_interior(&self) -> usize {
        self.interior_vertices.len()
    }

    pub fn interior_index(&self, vertex: usize) -> Option<usize> {
        self.interior_index[vertex]
    }

    /// Vertex id of interior unknown `i`.
    pub fn interior_vertex(&self, i: usize) -> usize {
        self.interior_vertices[i]
    }

    pub fn corners(&self, t: usize) -> [[f64; 2]; 3] {
        let [a, b, c] = self.triangles[t];
        [self.vertices[a], self.vertices[b], self.vertices[c]]
    }

    pub fn signed_area(&self, t: usize) -> f64 {
        let [a, b, c] = self.corners(t);
        0.5 * cross(a, b, c)
    }

    pub fn total_area(&self) -> f64 {
        (0..self.triangles.len())
            .map(|t| self.signed_area(t).abs())
            .sum()
    }

    /// Undirected edges with the number of triangles using each.
    pub fn edge_counts(&self) -> HashMap<(usize, usize), usize> {
        let mut edges = HashMap::new();
        for t in &self.triangles {
            for k in 0..3 {
                let (a, b) = (t[k], t[(k + 1) % 3]);
                *edges.entry((a.min(b), a.max(b))).or_insert(0) += 1;
            }
        }
        edges
    }

    /// Area enclosed by the boundary edges (edges used by exactly one triangle),
    /// oriented as in their triangle.
    pub fn boundary_enclosed_area(&self) -> f64 {
        let counts = self.edge_counts();
        let mut twice = 0.0;
        for t in &self.triangles {
            for k in 0..3 {
                let (a, b) = (t[k], t[(k + 1) % 3]);
                if counts[&(a.min(b), a.max(b))] == 1 {
                    let (p, q) = (self.vertices[a], self.vertices[b]);
                    twice += p[0] * q[1] - q[0] * p[1];
                }
            }
        }
        0.5 * twice
    }

    pub fn validate(&self) -> MeshReport {
        let mut checks = Vec::new();

        let negative: Vec<usize> = (0..self.triangles.len())
            .filter(|&t| !(self.signed_area(t) > 0.0))
            .collect();
        checks.push(Check::new(
            "positive_area",
            negative.is_empty(),
            if negative.is_empty() {
                "all triangles counter-clockwise".to_string()
            } else {
                format!(
                    "negative area in triangles {:?}",
                    &negative[..negative.len().min(8)]
                )
            },
        ));

        let counts = self.edge_counts();
        let mut on_boundary = vec![false; self.vertices.len()];
        for (&(a, b), &c) in &counts {
            if c == 1 {
                on_boundary[a] = true;
                on_boundary[b] = true;
            }
        }
        let unflagged: Vec<usize> = (0..self.vertices.len())
            .filter(|&v| on_boundary[v] && !self.boundary[v])
            .collect();
        let bijective = self
            .interior_vertices
            .iter()
            .enumerate()
            .all(|(i, &v)| self.interior_index[v] == Some(i) && !self.boundary[v]);
        checks.push(Check::new(
            "boundary_flags",
            unflagged.is_empty() && bijective,
            if unflagged.is_empty() {
                format!("{} interior unknowns", self.num_interior())
            } else {
                format!(
                    "boundary vertices not flagged: {:?}",
                    &unflagged[..unflagged.len().min(8)]
                )
            },
        ));

        let over_shared = counts.values().filter(|&&c| c > 2).count();
        checks.push(Check::new(
            "manifold_edges",
            over_shared == 0,
            format!("{over_shared} edges shared by more than two triangles"),
        ));

        let euler = self.vertices.len() as i64 - counts.len() as i64 + self.triangles.len() as i64;
        checks.push(Check::new(
            "euler",
            euler == 1,
            format!("V - E + T = {euler}"),
        ));

        let total = self.total_area();
        let enclosed = self.boundary_enclosed_area();
        let rel = (total - enclosed).abs() / enclosed.abs().max(f64::MIN_POSITIVE);
        checks.push(Check::new(
            "area",
            rel <= 1e-12,
            format!("triangles {total}, polygon {enclosed}"),
        ));

        MeshReport { checks }
    }

    pub fn to_json(&self) -> String {
        let file = MeshFile {
            vertices: self.vertices.clone(),
            triangles: self.triangles.clone(),
            boundary: self.boundary.iter().map(|&b| u8::from(b)).collect(),
        };
        let mut s = serde_json::to_string(&file).expect("mesh serializes");
        s.push('\n');
        s
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: MeshFile = serde_json::from_str(text)?;
        if let Some(bad) = file.boundary.iter().find(|&&b| b > 1) {
            return Err(FiberError::InvalidMesh(format!(
                "boundary flag {bad} is not 0 or 1"
            )));
        }
        Mesh::new(
            file.vertices,
            file.triangles,
            file.boundary.into_iter().map(|b| b == 1).collect(),
        )
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path.as_ref(), self.to_json()).map_err(|e| FiberError::io(path, e))
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let text = std::fs::read_to_string(path.as_ref()).map_err(|e| FiberError::io(&path, e))?;
        Self::from_json(&text)
    }
}

/// Uniform triangulation of `[0, width] × [0, height]` with `nx × ny` cells, each
/// split along its lower-left to upper-right diagonal. Vertices are numbered
/// row-major by `(y, x)`.
pub fn uniform_rectangle_mesh(width: f64, height: f64, nx: usize, ny: usize) -> Result<Mesh> {
    if !(width > 0.0 && width.is_finite() && height > 0.0 && height.is_finite()) {
        return Err(FiberError::InvalidParameter(format!(
            "rectangle dimensions must be positive, got {width} x {height}"
        )));
    }
    if nx == 0 || ny == 0 {
        return Err(FiberError::InvalidParameter(format!(
            "cell counts must be at least 1, got {nx} x {ny}"
        )));
    }
    let mut vertices = Vec::with_capacity((nx + 1) * (ny + 1));
    let mut boundary = Vec::with_capacity((nx + 1) * (ny + 1));
    for j in 0..=ny {
        for i in 0..=nx {
            vertices.push([i as f64 * width / nx as f64, j as f64 * height / ny as f64]);
            boundary.push(i == 0 || i == nx || j == 0 || j == ny);
        }
    }
    let mut triangles = Vec::with_capacity(2 * nx * ny);
    for j in 0..ny {
        for i in 0..nx {
            let v00 = j * (nx + 1) + i;
            let v10 = v00 + 1;
            let v01 = v00 + nx + 1;
            let v11 = v01 + 1;
            triangles.push([v00, v10, v11]);
            triangles.push([v00, v11, v01]);
        }
    }
    Mesh::new(vertices, triangles, boundary)
}

#[derive(Debug, Clone, Serialize)]
pub struct Check {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

impl Check {
    fn new(name: &'static str, passed: bool, detail: String) -> Self {
        Self {
            name,
            passed,
            detail,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct MeshReport {
    pub checks: Vec<Check>,
}

impl MeshReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn check(&self, name: &str) -> Option<&Check> {
        self.checks.iter().find(|c| c.name == name)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn smallest_mesh() {
        let m = uniform_rectangle_mesh(1.0, 2.0, 1, 1).unwrap();
        assert_eq!(m.num_vertices(), 4);
        assert_eq!(m.num_triangles(), 2);
        assert_eq!(m.num_interior(), 0);
        assert!(m.validate().passed());
    }

    #[test]
    fn two_by_two_counts() {
        let m = uniform_rectangle_mesh(1.0, 2.0, 2, 2).unwrap();
        assert_eq!(m.num_vertices(), 9);
        assert_eq!(m.num_triangles(), 8);
        assert_eq!(m.num_interior(), 1);
        assert_eq!(m.vertices()[m.interior_vertex(0)], [0.5, 1.0]);
        assert!(m.validate().passed());
    }

    #[test]
    fn fine_mesh_area() {
        let m = uniform_rectangle_mesh(1.0, 2.0, 16, 32).unwrap();
        assert!((m.total_area() - 2.0).abs() <= 1e-12 * 2.0);
    }

    #[test]
    fn bad_dimensions() {
        assert!(uniform_rectangle_mesh(0.0, 2.0, 2, 2).is_err());
        assert!(uniform_rectangle_mesh(1.0, -2.0, 2, 2).is_err());
        assert!(uniform_rectangle_mesh(1.0, 2.0, 0, 2).is_err());
    }

    #[test]
    fn clockwise_triangle_fails_orientation() {
        let m = uniform_rectangle_mesh(1.0, 2.0, 2, 2).unwrap();
        let mut tris = m.triangles().to_vec();
        tris[3].swap(1, 2);
        let bad = Mesh::new(m.vertices().to_vec(), tris, m.boundary_mask().to_vec()).unwrap();
        let report = bad.validate();
        assert!(!report.check("positive_area").unwrap().passed);
    }

    #[test]
    fn duplicated_triangle_fails_euler() {
        // 1x1 mesh: V=4, E=5, T=2 gives 1; one more copy of a triangle leaves E at 5
        // and makes T=3, so V-E+T=2.
        let m = uniform_rectangle_mesh(1.0, 2.0, 1, 1).unwrap();
        let mut tris = m.triangles().to_vec();
        tris.push(tris[0]);
        let bad = Mesh::new(m.vertices().to_vec(), tris, m.boundary_mask().to_vec()).unwrap();
        let report = bad.validate();
        let euler = report.check("euler").unwrap();
        assert!(!euler.passed);
        assert_eq!(euler.detail, "V - E + T = 2");
    }

    #[test]
    fn unflagged_boundary_vertex_detected() {
        let m = uniform_rectangle_mesh(1.0, 1.0, 2, 2).unwrap();
        let mut mask = m.boundary_mask().to_vec();
        mask[1] = false;
        let bad = Mesh::new(m.vertices().to_vec(), m.triangles().to_vec(), mask).unwrap();
        assert!(!bad.validate().check("boundary_flags").unwrap().passed);
    }

    #[test]
    fn json_roundtrip_is_bit_exact() {
        let m = uniform_rectangle_mesh(1.0, 2.0, 3, 7).unwrap();
        let text = m.to_json();
        let back = Mesh::from_json(&text).unwrap();
        assert_eq!(back, m);
        assert_eq!(back.to_json(), text);
    }

    #[test]
    fn general_polygon_l_shape() {
        // L-shaped polygon from three unit squares, split by hand
        let vertices = vec![
            [0.0, 0.0],
            [1.0, 0.0],
            [2.0, 0.0],
            [0.0, 1.0],
            [1.0, 1.0],
            [2.0, 1.0],
            [0.0, 2.0],
            [1.0, 2.0],
        ];
        let triangles = vec![
            [0, 1, 4],
            [0, 4, 3],
            [1, 2, 5],
            [1, 5, 4],
            [3, 4, 7],
            [3, 7, 6],
        ];
        let boundary = vec![true; 8];
        let m = Mesh::new(vertices, triangles, boundary).unwrap();
        let report = m.validate();
        assert!(report.passed(), "{report:?}");
        assert!((m.total_area() - 3.0).abs() < 1e-12);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(48))]
        #[test]
        fn uniform_meshes_validate(nx in 1usize..=64, ny in 1usize..=64, w in 0.1f64..10.0, h in 0.1f64..10.0) {
            let m = uniform_rectangle_mesh(w, h, nx, ny).unwrap();
            prop_assert!(m.validate().passed());
            prop_assert_eq!(m.num_interior(), (nx - 1) * (ny - 1));
            let mut seen = vec![false; m.num_interior()];
            for v in 0..m.num_vertices() {
                if let Some(i) = m.interior_index(v) {
                    prop_assert!(!seen[i]);
                    seen[i] = true;
                }
            }
            prop_assert!(seen.into_iter().all(|s| s));
        }
    }
}
