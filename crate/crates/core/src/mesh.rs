//! Friedrichs–Keller triangulations of the unit square and P1 assembly.
//!
//! Nodes are numbered lexicographically by `(x2, x1)`: node `k = j (n + 1) + i`
//! sits at `(i h, j h)`. Every grid cell is split along its bottom-left to
//! top-right diagonal. Homogeneous Dirichlet conditions are imposed by
//! elimination, so assembled matrices live on interior nodes only, again in
//! lexicographic order.

use std::ops::{Deref, DerefMut};

use crate::error::{Error, Result};
use crate::operators::SparseSpd;

#[derive(Debug, Clone)]
pub struct StructuredTriMesh {
    n: usize,
    h: f64,
    coords: Vec<[f64; 2]>,
    triangles: Vec<[usize; 3]>,
    interior: Vec<usize>,
    boundary: Vec<usize>,
    // node -> interior index
    interior_index: Vec<Option<usize>>,
}

impl StructuredTriMesh {
    /// Friedrichs–Keller triangulation with `n` subdivisions per side.
    pub fn friedrichs_keller(n: usize) -> Result<Self> {
        if n < 2 {
            return Err(Error::InvalidArgument(format!(
                "mesh needs at least 2 subdivisions per side to have an interior node, got {n}"
            )));
        }
        let h = 1.0 / n as f64;
        let side = n + 1;
        let node = |i: usize, j: usize| j * side + i;

        let mut coords = Vec::with_capacity(side * side);
        let mut interior = Vec::with_capacity((n - 1) * (n - 1));
        let mut boundary = Vec::with_capacity(4 * n);
        let mut interior_index = vec![None; side * side];
        for j in 0..side {
            for i in 0..side {
                let k = node(i, j);
                // i * h drifts for large n; i / n hits 1.0 exactly
                coords.push([i as f64 / n as f64, j as f64 / n as f64]);
                if i == 0 || j == 0 || i == n || j == n {
                    boundary.push(k);
                } else {
                    interior_index[k] = Some(interior.len());
                    interior.push(k);
                }
            }
        }

        let mut triangles = Vec::with_capacity(2 * n * n);
        for j in 0..n {
            for i in 0..n {
                let bl = node(i, j);
                let br = node(i + 1, j);
                let tl = node(i, j + 1);
                let tr = node(i + 1, j + 1);
                triangles.push([bl, br, tr]);
                triangles.push([bl, tr, tl]);
            }
        }

        Ok(Self {
            n,
            h,
            coords,
            triangles,
            interior,
            boundary,
            interior_index,
        })
    }

    pub fn subdivisions(&self) -> usize {
        self.n
    }

    pub fn width(&self) -> f64 {
        self.h
    }

    pub fn coords(&self) -> &[[f64; 2]] {
        &self.coords
    }

    pub fn triangles(&self) -> &[[usize; 3]] {
        &self.triangles
    }

    pub fn interior_nodes(&self) -> &[usize] {
        &self.interior
    }

    pub fn boundary_nodes(&self) -> &[usize] {
        &self.boundary
    }

    pub fn num_nodes(&self) -> usize {
        self.coords.len()
    }

    pub fn num_interior(&self) -> usize {
        self.interior.len()
    }

    /// Interior index of a global node, `None` on the boundary.
    pub fn interior_index(&self, node: usize) -> Option<usize> {
        self.interior_index.get(node).copied().flatten()
    }

    /// Coordinates of the `i`-th interior node.
    pub fn interior_coord(&self, i: usize) -> [f64; 2] {
        self.coords[self.interior[i]]
    }

    /// Twice the signed area of a triangle.
    pub fn signed_area(&self, t: usize) -> f64 {
        let [a, b, c] = self.triangles[t].map(|k| self.coords[k]);
        0.5 * ((b[0] - a[0]) * (c[1] - a[1]) - (c[0] - a[0]) * (b[1] - a[1]))
    }

    /// Extends an interior field by zero to all mesh nodes.
    pub fn extend_by_zero(&self, values: &[f64]) -> Vec<f64> {
        let mut full = vec![0.0; self.num_nodes()];
        for (&k, &v) in self.interior.iter().zip(values) {
            full[k] = v;
        }
        full
    }

    /// P1 stiffness matrix `∫ ∇φᵢ·∇φⱼ` on interior nodes.
    pub fn assemble_stiffness(&self) -> SparseSpd {
        self.assemble(|area, grads| {
            let mut k = [[0.0; 3]; 3];
            for a in 0..3 {
                for b in 0..3 {
                    k[a][b] = area * (grads[a][0] * grads[b][0] + grads[a][1] * grads[b][1]);
                }
            }
            k
        })
    }

    /// P1 mass matrix on interior nodes; `lumped` replaces each row by its
    /// full (pre-elimination) row sum on the diagonal.
    pub fn assemble_mass(&self, lumped: bool) -> SparseSpd {
        if lumped {
            self.assemble(|area, _| {
                let d = area / 3.0;
                [[d, 0.0, 0.0], [0.0, d, 0.0], [0.0, 0.0, d]]
            })
        } else {
            self.assemble(|area, _| {
                let d = area / 6.0;
                let o = area / 12.0;
                [[d, o, o], [o, d, o], [o, o, d]]
            })
        }
    }

    fn assemble(&self, local: impl Fn(f64, [[f64; 2]; 3]) -> [[f64; 3]; 3]) -> SparseSpd {
        let mut triplets = Vec::with_capacity(self.triangles.len() * 9);
        for tri in &self.triangles {
            let [p0, p1, p2] = tri.map(|k| self.coords[k]);
            let det = (p1[0] - p0[0]) * (p2[1] - p0[1]) - (p2[0] - p0[0]) * (p1[1] - p0[1]);
            let area = 0.5 * det.abs();
            // gradients of the barycentric coordinates
            let grads = [
                [(p1[1] - p2[1]) / det, (p2[0] - p1[0]) / det],
                [(p2[1] - p0[1]) / det, (p0[0] - p2[0]) / det],
                [(p0[1] - p1[1]) / det, (p1[0] - p0[0]) / det],
            ];
            let k = local(area, grads);
            for a in 0..3 {
                let Some(r) = self.interior_index(tri[a]) else {
                    continue;
                };
                for b in 0..3 {
                    if let Some(c) = self.interior_index(tri[b]) {
                        if k[a][b] != 0.0 {
                            triplets.push((r, c, k[a][b]));
                        }
                    }
                }
            }
        }
        SparseSpd::from_triplets(self.num_interior(), triplets)
            .expect("assembled element matrices are symmetric")
    }

    /// Nodal interpolant of `f` on the interior nodes.
    pub fn interpolate(&self, f: impl Fn(f64, f64) -> f64) -> Result<NodalField> {
        let mut values = Vec::with_capacity(self.num_interior());
        for &k in &self.interior {
            let [x1, x2] = self.coords[k];
            let v = f(x1, x2);
            if !v.is_finite() {
                return Err(Error::InvalidInput(format!(
                    "interpolated function is not finite at ({x1}, {x2})"
                )));
            }
            values.push(v);
        }
        Ok(NodalField::new(values))
    }
}

/// Coefficient vector of a P1 function over the interior nodes (boundary
/// values are zero).
#[derive(Debug, Clone, PartialEq)]
pub struct NodalField(Vec<f64>);

impl NodalField {
    pub fn new(values: Vec<f64>) -> Self {
        Self(values)
    }

    pub fn zeros(n: usize) -> Self {
        Self(vec![0.0; n])
    }

    pub fn constant(n: usize, v: f64) -> Self {
        Self(vec![v; n])
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }
}

impl Deref for NodalField {
    type Target = [f64];
    fn deref(&self) -> &[f64] {
        &self.0
    }
}

impl DerefMut for NodalField {
    fn deref_mut(&mut self) -> &mut [f64] {
        &mut self.0
    }
}

impl From<Vec<f64>> for NodalField {
    fn from(v: Vec<f64>) -> Self {
        Self(v)
    }
}
