//! Sparse SPD linear algebra.
//!
//! [`SparseSpd`] stores a symmetric matrix in full CSR layout and caches its
//! sparse Cholesky factorization, as well as the factorizations of a few
//! principal submatrices (the restricted Poisson operators `𝕊(O)`).
//!
//! Coefficient vectors ([`NodalField`]) and load vectors ([`DualVector`]) are
//! distinct types: the stiffness matrix maps the former to the latter, its
//! inverse maps back, and an `L²` function enters a dual pairing only after
//! multiplication by the mass matrix.

use std::collections::HashMap;
use std::ops::{Deref, DerefMut};
use std::sync::{Arc, Once, OnceLock, RwLock};

use faer::linalg::solvers::Solve;
use faer::sparse::linalg::solvers::Llt;
use faer::sparse::{SparseColMat, Triplet};
use faer::{MatMut, Side};

use crate::error::{Error, Result};
use crate::mesh::NodalField;

/// Problems above this size are solved by preconditioned CG by default.
pub const DIRECT_SOLVE_LIMIT: usize = 300_000;

/// Default relative tolerance of the iterative solver.
pub const CG_DEFAULT_TOL: f64 = 1e-12;

const RESTRICTED_CACHE_CAPACITY: usize = 8;

/// Load vector: the coefficients `⟨f, φᵢ⟩` of a functional on the interior
/// basis functions.
#[derive(Debug, Clone, PartialEq)]
pub struct DualVector(Vec<f64>);

impl DualVector {
    pub fn new(values: Vec<f64>) -> Self {
        Self(values)
    }

    pub fn zeros(n: usize) -> Self {
        Self(vec![0.0; n])
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }

    /// Pairing `⟨f, v⟩ = fᵀv`.
    pub fn pair(&self, v: &NodalField) -> f64 {
        dot(&self.0, v)
    }
}

impl Deref for DualVector {
    type Target = [f64];
    fn deref(&self) -> &[f64] {
        &self.0
    }
}

impl DerefMut for DualVector {
    fn deref_mut(&mut self) -> &mut [f64] {
        &mut self.0
    }
}

impl From<Vec<f64>> for DualVector {
    fn from(v: Vec<f64>) -> Self {
        Self(v)
    }
}

/// Sorted set of unknown indices; the discrete counterpart of an open set.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Default)]
pub struct NodeSet(Vec<usize>);

impl NodeSet {
    /// Builds a set from arbitrary indices, all of which must lie below `dim`.
    pub fn new(mut indices: Vec<usize>, dim: usize) -> Result<Self> {
        indices.sort_unstable();
        indices.dedup();
        if let Some(&bad) = indices.iter().find(|&&i| i >= dim) {
            return Err(Error::InvalidArgument(format!(
                "node index {bad} out of range for dimension {dim}"
            )));
        }
        Ok(Self(indices))
    }

    pub fn empty() -> Self {
        Self(Vec::new())
    }

    pub fn full(dim: usize) -> Self {
        Self((0..dim).collect())
    }

    pub fn from_mask(mask: &[bool]) -> Self {
        Self(
            mask.iter()
                .enumerate()
                .filter_map(|(i, &m)| m.then_some(i))
                .collect(),
        )
    }

    pub fn to_mask(&self, dim: usize) -> Vec<bool> {
        let mut mask = vec![false; dim];
        for &i in &self.0 {
            mask[i] = true;
        }
        mask
    }

    pub fn indices(&self) -> &[usize] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn contains(&self, i: usize) -> bool {
        self.0.binary_search(&i).is_ok()
    }

    pub fn complement(&self, dim: usize) -> Self {
        let mask = self.to_mask(dim);
        Self((0..dim).filter(|&i| !mask[i]).collect())
    }

    pub fn intersection(&self, other: &Self) -> Self {
        Self(self.0.iter().copied().filter(|&i| other.contains(i)).collect())
    }

    pub fn union(&self, other: &Self) -> Self {
        let mut v: Vec<usize> = self.0.iter().chain(&other.0).copied().collect();
        v.sort_unstable();
        v.dedup();
        Self(v)
    }

    pub fn is_subset(&self, other: &Self) -> bool {
        self.0.iter().all(|&i| other.contains(i))
    }
}

/// Sparse Cholesky factor `A = L Lᵀ`.
pub struct Cholesky {
    llt: Llt<usize, f64>,
    dim: usize,
}

impl std::fmt::Debug for Cholesky {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Cholesky").field("dim", &self.dim).finish()
    }
}

// Sequential factorizations keep repeated runs bitwise reproducible.
fn init_parallelism() {
    static INIT: Once = Once::new();
    INIT.call_once(|| faer::set_global_parallelism(faer::Par::Seq));
}

impl Cholesky {
    fn from_csr(
        dim: usize,
        entries: impl Iterator<Item = (usize, usize, f64)>,
    ) -> Result<Self> {
        init_parallelism();
        let triplets: Vec<_> = entries
            .filter(|&(r, c, _)| r >= c)
            .map(|(r, c, v)| Triplet::new(r, c, v))
            .collect();
        let mat = SparseColMat::<usize, f64>::try_new_from_triplets(dim, dim, &triplets)
            .map_err(|e| Error::InvalidArgument(format!("sparse matrix creation: {e:?}")))?;
        let llt = mat
            .sp_cholesky(Side::Lower)
            .map_err(|e| Error::NotSpd(e.to_string()))?;
        Ok(Self { llt, dim })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn solve_in_place(&self, rhs: &mut [f64]) {
        assert_eq!(rhs.len(), self.dim, "right-hand side length");
        if self.dim == 0 {
            return;
        }
        let view = MatMut::from_column_major_slice_mut(rhs, self.dim, 1);
        self.llt.solve_in_place(view);
    }

    pub fn solve(&self, rhs: &[f64]) -> Vec<f64> {
        let mut x = rhs.to_vec();
        self.solve_in_place(&mut x);
        x
    }
}

/// Factorization of the principal submatrix `A_OO`, applied as the
/// zero-extended solution operator `𝕊(O)`.
#[derive(Debug)]
pub struct RestrictedFactor {
    set: NodeSet,
    dim: usize,
    chol: Option<Cholesky>,
}

impl RestrictedFactor {
    pub fn set(&self) -> &NodeSet {
        &self.set
    }

    /// `δ` with `δᵢ = 0` off `O` and `(Aδ)ᵢ = fᵢ` on `O`.
    pub fn apply(&self, f: &[f64]) -> Vec<f64> {
        assert_eq!(f.len(), self.dim, "load length");
        let mut out = vec![0.0; self.dim];
        if let Some(chol) = &self.chol {
            let mut local: Vec<f64> = self.set.indices().iter().map(|&i| f[i]).collect();
            chol.solve_in_place(&mut local);
            for (&i, v) in self.set.indices().iter().zip(local) {
                out[i] = v;
            }
        }
        out
    }

    /// Solves `A_OO x = g` for a right-hand side given on `O` only.
    pub fn solve_local(&self, g: &mut [f64]) {
        assert_eq!(g.len(), self.set.len());
        if let Some(chol) = &self.chol {
            chol.solve_in_place(g);
        }
    }
}

/// Symmetric positive definite sparse matrix in CSR layout (both triangles
/// stored).
pub struct SparseSpd {
    dim: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    vals: Vec<f64>,
    factor: OnceLock<Arc<Cholesky>>,
    restricted: RwLock<HashMap<NodeSet, Arc<RestrictedFactor>>>,
}

impl std::fmt::Debug for SparseSpd {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("SparseSpd")
            .field("dim", &self.dim)
            .field("nnz", &self.vals.len())
            .finish()
    }
}

impl Clone for SparseSpd {
    fn clone(&self) -> Self {
        Self {
            dim: self.dim,
            row_ptr: self.row_ptr.clone(),
            col_idx: self.col_idx.clone(),
            vals: self.vals.clone(),
            factor: OnceLock::new(),
            restricted: RwLock::new(HashMap::new()),
        }
    }
}

impl SparseSpd {
    /// Builds the matrix from `(row, col, value)` triplets; duplicates are
    /// summed. Rejects out-of-range indices and asymmetric input.
    pub fn from_triplets(dim: usize, mut triplets: Vec<(usize, usize, f64)>) -> Result<Self> {
        if let Some(&(r, c, _)) = triplets.iter().find(|&&(r, c, _)| r >= dim || c >= dim) {
            return Err(Error::InvalidArgument(format!(
                "entry ({r}, {c}) out of range for dimension {dim}"
            )));
        }
        if triplets.iter().any(|t| !t.2.is_finite()) {
            return Err(Error::InvalidInput("non-finite matrix entry".into()));
        }
        triplets.sort_by_key(|t| (t.0, t.1));
        let mut row_ptr = vec![0usize; dim + 1];
        let mut col_idx = Vec::with_capacity(triplets.len());
        let mut vals: Vec<f64> = Vec::with_capacity(triplets.len());
        let mut last: Option<(usize, usize)> = None;
        for (r, c, v) in triplets {
            if last == Some((r, c)) {
                *vals.last_mut().unwrap() += v;
            } else {
                col_idx.push(c);
                vals.push(v);
                row_ptr[r + 1] += 1;
                last = Some((r, c));
            }
        }
        for r in 0..dim {
            row_ptr[r + 1] += row_ptr[r];
        }
        let mat = Self {
            dim,
            row_ptr,
            col_idx,
            vals,
            factor: OnceLock::new(),
            restricted: RwLock::new(HashMap::new()),
        };
        mat.check_symmetric()?;
        Ok(mat)
    }

    /// Tridiagonal matrix with constant bands.
    pub fn tridiagonal(dim: usize, diag: f64, off: f64) -> Result<Self> {
        let mut t = Vec::with_capacity(3 * dim);
        for i in 0..dim {
            t.push((i, i, diag));
            if i + 1 < dim {
                t.push((i, i + 1, off));
                t.push((i + 1, i, off));
            }
        }
        Self::from_triplets(dim, t)
    }

    fn check_symmetric(&self) -> Result<()> {
        for r in 0..self.dim {
            for (c, v) in self.row(r) {
                let w = self.get(c, r);
                if (v - w).abs() > 1e-14 * v.abs().max(w.abs()) {
                    return Err(Error::InvalidArgument(format!(
                        "matrix not symmetric at ({r}, {c}): {v} vs {w}"
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn nnz(&self) -> usize {
        self.vals.len()
    }

    pub fn row(&self, r: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let range = self.row_ptr[r]..self.row_ptr[r + 1];
        self.col_idx[range.clone()]
            .iter()
            .copied()
            .zip(self.vals[range].iter().copied())
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        let range = self.row_ptr[r]..self.row_ptr[r + 1];
        match self.col_idx[range.clone()].binary_search(&c) {
            Ok(k) => self.vals[range.start + k],
            Err(_) => 0.0,
        }
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.dim).map(|i| self.get(i, i)).collect()
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.dim];
        self.apply_into(x, &mut y);
        y
    }

    pub fn apply_into(&self, x: &[f64], y: &mut [f64]) {
        assert_eq!(x.len(), self.dim);
        assert_eq!(y.len(), self.dim);
        for (r, out) in y.iter_mut().enumerate() {
            *out = self.row(r).map(|(c, v)| v * x[c]).sum();
        }
    }

    /// The load vector `A v` of a coefficient vector.
    pub fn load(&self, v: &NodalField) -> DualVector {
        DualVector(self.apply(v))
    }

    /// `xᵀ A x`.
    pub fn quad_form(&self, x: &[f64]) -> f64 {
        dot(x, &self.apply(x))
    }

    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        let mut d = vec![vec![0.0; self.dim]; self.dim];
        for (r, row) in d.iter_mut().enumerate() {
            for (c, v) in self.row(r) {
                row[c] = v;
            }
        }
        d
    }

    /// The principal submatrix `A_OO`, indexed by position within `O`.
    pub fn principal_submatrix(&self, set: &NodeSet) -> Result<SparseSpd> {
        let local = self.local_index(set)?;
        let mut t = Vec::new();
        for (lr, &r) in set.indices().iter().enumerate() {
            for (c, v) in self.row(r) {
                if local[c] != usize::MAX {
                    t.push((lr, local[c], v));
                }
            }
        }
        SparseSpd::from_triplets(set.len(), t)
    }

    fn local_index(&self, set: &NodeSet) -> Result<Vec<usize>> {
        if let Some(&bad) = set.indices().last().filter(|&&i| i >= self.dim) {
            return Err(Error::InvalidArgument(format!(
                "node index {bad} out of range for dimension {}",
                self.dim
            )));
        }
        let mut local = vec![usize::MAX; self.dim];
        for (l, &i) in set.indices().iter().enumerate() {
            local[i] = l;
        }
        Ok(local)
    }

    /// Cached Cholesky factor of the whole matrix.
    pub fn factor(&self) -> Result<Arc<Cholesky>> {
        if let Some(f) = self.factor.get() {
            return Ok(f.clone());
        }
        let chol = Arc::new(Cholesky::from_csr(self.dim, self.triplet_iter())?);
        Ok(self.factor.get_or_init(|| chol).clone())
    }

    fn triplet_iter(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        (0..self.dim).flat_map(move |r| self.row(r).map(move |(c, v)| (r, c, v)))
    }

    /// Factor of `A_OO` without touching the cache.
    pub fn restricted_factor_uncached(&self, set: &NodeSet) -> Result<RestrictedFactor> {
        let local = self.local_index(set)?;
        let chol = if set.is_empty() {
            None
        } else {
            let entries = set.indices().iter().enumerate().flat_map(|(lr, &r)| {
                let local = &local;
                self.row(r)
                    .filter(move |&(c, _)| local[c] != usize::MAX)
                    .map(move |(c, v)| (lr, local[c], v))
            });
            Some(Cholesky::from_csr(set.len(), entries)?)
        };
        Ok(RestrictedFactor {
            set: set.clone(),
            dim: self.dim,
            chol,
        })
    }

    /// Factor of `A_OO`, cached per node set.
    pub fn restricted_factor(&self, set: &NodeSet) -> Result<Arc<RestrictedFactor>> {
        if let Some(f) = self.restricted.read().unwrap().get(set) {
            return Ok(f.clone());
        }
        let f = Arc::new(self.restricted_factor_uncached(set)?);
        let mut cache = self.restricted.write().unwrap();
        if cache.len() >= RESTRICTED_CACHE_CAPACITY {
            cache.clear();
        }
        Ok(cache.entry(set.clone()).or_insert(f).clone())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SolveMethod {
    Direct,
    /// Jacobi-preconditioned CG stopping at `‖Ax − b‖₂ ≤ tol · max(1, ‖b‖₂)`.
    Cg { tol: f64, max_iter: usize },
}

impl SolveMethod {
    /// Direct below [`DIRECT_SOLVE_LIMIT`] unknowns, CG above.
    pub fn auto(dim: usize) -> Self {
        if dim <= DIRECT_SOLVE_LIMIT {
            SolveMethod::Direct
        } else {
            SolveMethod::Cg {
                tol: CG_DEFAULT_TOL,
                max_iter: 20 * dim,
            }
        }
    }
}

pub fn solve_spd(a: &SparseSpd, b: &DualVector, method: SolveMethod) -> Result<NodalField> {
    check_len(a, b.len())?;
    match method {
        SolveMethod::Direct => Ok(NodalField::new(a.factor()?.solve(b))),
        SolveMethod::Cg { tol, max_iter } => {
            if !(tol > 0.0) {
                return Err(Error::InvalidArgument(format!("cg tolerance must be positive, got {tol}")));
            }
            let inv_diag: Vec<f64> = a.diagonal().iter().map(|d| 1.0 / d).collect();
            let out = pcg(
                |x, y| a.apply_into(x, y),
                |r, z| z.iter_mut().zip(r).zip(&inv_diag).for_each(|((z, r), d)| *z = r * d),
                b,
                None,
                CgOptions {
                    tol,
                    max_iter,
                    criterion: CgCriterion::Euclidean,
                },
            )?;
            Ok(NodalField::new(out.x))
        }
    }
}

/// `y = (−Δ)⁻¹ f` with `A` the stiffness matrix.
pub fn poisson_solve(a: &SparseSpd, f: &DualVector) -> Result<NodalField> {
    solve_spd(a, f, SolveMethod::auto(a.dim()))
}

/// The restricted Poisson solution `𝕊(O) f`.
pub fn restricted_poisson(a: &SparseSpd, set: &NodeSet, f: &DualVector) -> Result<NodalField> {
    check_len(a, f.len())?;
    Ok(NodalField::new(a.restricted_factor(set)?.apply(f)))
}

/// `√(fᵀ A⁻¹ f)`, the `H⁻¹` norm of a load vector.
pub fn dual_norm(a: &SparseSpd, f: &DualVector) -> Result<f64> {
    let y = poisson_solve(a, f)?;
    Ok(f.pair(&y).max(0.0).sqrt())
}

/// `√(vᵀ A v)`.
pub fn energy_norm(a: &SparseSpd, v: &[f64]) -> f64 {
    a.quad_form(v).max(0.0).sqrt()
}

/// `√(vᵀ M v)`.
pub fn l2_norm(m: &SparseSpd, v: &[f64]) -> f64 {
    m.quad_form(v).max(0.0).sqrt()
}

fn check_len(a: &SparseSpd, len: usize) -> Result<()> {
    if len != a.dim() {
        return Err(Error::InvalidArgument(format!(
            "vector length {len} does not match matrix dimension {}",
            a.dim()
        )));
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum CgCriterion {
    /// `‖r‖₂ ≤ tol · max(1, ‖b‖₂)`
    Euclidean,
    /// `√(rᵀ P⁻¹ r) ≤ tol · √(bᵀ P⁻¹ b)` with `P` the preconditioner.
    Preconditioned,
}

#[derive(Debug, Clone, Copy)]
pub struct CgOptions {
    pub tol: f64,
    pub max_iter: usize,
    pub criterion: CgCriterion,
}

#[derive(Debug, Clone)]
pub struct CgOutcome {
    pub x: Vec<f64>,
    pub iterations: usize,
    pub residual: f64,
}

/// Preconditioned conjugate gradients for an SPD operator given as closures
/// `apply(x, y)` (y ← Ax) and `precond(r, z)` (z ← P⁻¹r).
pub fn pcg(
    mut apply: impl FnMut(&[f64], &mut [f64]),
    mut precond: impl FnMut(&[f64], &mut [f64]),
    b: &[f64],
    x0: Option<&[f64]>,
    opts: CgOptions,
) -> Result<CgOutcome> {
    let n = b.len();
    let mut x = x0.map_or_else(|| vec![0.0; n], <[f64]>::to_vec);
    let mut r = vec![0.0; n];
    let mut z = vec![0.0; n];
    let mut q = vec![0.0; n];

    apply(&x, &mut q);
    r.iter_mut().zip(b).zip(&q).for_each(|((r, b), q)| *r = b - q);
    precond(&r, &mut z);

    let threshold = match opts.criterion {
        CgCriterion::Euclidean => opts.tol * norm2(b).max(1.0),
        CgCriterion::Preconditioned => {
            let mut zb = vec![0.0; n];
            precond(b, &mut zb);
            opts.tol * dot(b, &zb).max(0.0).sqrt()
        }
    };
    let measure = |r: &[f64], z: &[f64]| match opts.criterion {
        CgCriterion::Euclidean => norm2(r),
        CgCriterion::Preconditioned => dot(r, z).max(0.0).sqrt(),
    };

    let mut rz = dot(&r, &z);
    let mut residual = measure(&r, &z);
    if residual <= threshold {
        return Ok(CgOutcome {
            x,
            iterations: 0,
            residual,
        });
    }
    let mut p = z.clone();
    for it in 1..=opts.max_iter {
        apply(&p, &mut q);
        let pq = dot(&p, &q);
        if !(pq > 0.0) {
            return Err(Error::NotSpd(format!("cg found direction with pᵀAp = {pq:e}")));
        }
        let alpha = rz / pq;
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * q[i];
        }
        precond(&r, &mut z);
        let rz_new = dot(&r, &z);
        residual = measure(&r, &z);
        if residual <= threshold {
            return Ok(CgOutcome {
                x,
                iterations: it,
                residual,
            });
        }
        let beta = rz_new / rz;
        rz = rz_new;
        for i in 0..n {
            p[i] = z[i] + beta * p[i];
        }
    }
    Err(Error::Convergence {
        method: "conjugate gradients",
        iterations: opts.max_iter,
        residual,
    })
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm2(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

pub fn norm_inf(a: &[f64]) -> f64 {
    a.iter().fold(0.0, |m, x| m.max(x.abs()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::StructuredTriMesh;

    #[test]
    fn scalar_solves() {
        let a = SparseSpd::from_triplets(1, vec![(0, 0, 4.0)]).unwrap();
        let b = DualVector::new(vec![8.0]);
        assert_eq!(&solve_spd(&a, &b, SolveMethod::Direct).unwrap()[..], &[2.0]);
        let cg = SolveMethod::Cg {
            tol: 1e-14,
            max_iter: 10,
        };
        assert!((solve_spd(&a, &b, cg).unwrap()[0] - 2.0).abs() < 1e-14);
        let zero = DualVector::zeros(1);
        assert_eq!(&poisson_solve(&a, &zero).unwrap()[..], &[0.0]);
    }

    #[test]
    fn duplicates_are_summed() {
        let a = SparseSpd::from_triplets(2, vec![(0, 0, 1.0), (0, 0, 1.0), (1, 1, 3.0)]).unwrap();
        assert_eq!(a.to_dense(), vec![vec![2.0, 0.0], vec![0.0, 3.0]]);
        assert_eq!(a.nnz(), 2);
    }

    #[test]
    fn rejects_bad_matrices() {
        assert!(matches!(
            SparseSpd::from_triplets(2, vec![(0, 1, 1.0)]),
            Err(Error::InvalidArgument(_))
        ));
        assert!(SparseSpd::from_triplets(2, vec![(2, 0, 1.0)]).is_err());
        let indefinite = SparseSpd::from_triplets(2, vec![(0, 0, 1.0), (1, 1, -1.0)]).unwrap();
        let b = DualVector::new(vec![1.0, 1.0]);
        assert!(matches!(
            solve_spd(&indefinite, &b, SolveMethod::Direct),
            Err(Error::NotSpd(_))
        ));
    }

    #[test]
    fn cg_reports_nonconvergence() {
        let mesh = StructuredTriMesh::friedrichs_keller(16).unwrap();
        let a = mesh.assemble_stiffness();
        let b = DualVector::new(vec![1.0; a.dim()]);
        let err = solve_spd(&a, &b, SolveMethod::Cg { tol: 1e-14, max_iter: 3 }).unwrap_err();
        assert!(matches!(err, Error::Convergence { iterations: 3, .. }));
        assert!(solve_spd(&a, &b, SolveMethod::Cg { tol: 0.0, max_iter: 3 }).is_err());
    }

    #[test]
    fn cg_meets_its_residual_contract() {
        let mesh = StructuredTriMesh::friedrichs_keller(16).unwrap();
        let a = mesh.assemble_stiffness();
        let b = DualVector::new((0..a.dim()).map(|i| (i % 5) as f64 - 2.0).collect());
        let tol = 1e-10;
        let x = solve_spd(&a, &b, SolveMethod::Cg { tol, max_iter: 1000 }).unwrap();
        let r: Vec<f64> = a.apply(&x).iter().zip(b.iter()).map(|(ax, b)| ax - b).collect();
        assert!(norm2(&r) <= tol * norm2(&b).max(1.0));
    }

    #[test]
    fn restricted_poisson_edge_sets() {
        let mesh = StructuredTriMesh::friedrichs_keller(6).unwrap();
        let a = mesh.assemble_stiffness();
        let f = DualVector::new((0..a.dim()).map(|i| (i as f64).sin()).collect());
        let full = restricted_poisson(&a, &NodeSet::full(a.dim()), &f).unwrap();
        let y = poisson_solve(&a, &f).unwrap();
        for (p, q) in full.iter().zip(y.iter()) {
            assert!((p - q).abs() < 1e-13);
        }
        let none = restricted_poisson(&a, &NodeSet::empty(), &f).unwrap();
        assert!(none.iter().all(|&v| v == 0.0));
        assert!(NodeSet::new(vec![a.dim()], a.dim()).is_err());
    }

    #[test]
    fn node_set_algebra() {
        let s = NodeSet::new(vec![4, 1, 1, 3], 6).unwrap();
        assert_eq!(s.indices(), &[1, 3, 4]);
        assert_eq!(s.complement(6).indices(), &[0, 2, 5]);
        let t = NodeSet::new(vec![0, 3], 6).unwrap();
        assert_eq!(s.intersection(&t).indices(), &[3]);
        assert_eq!(s.union(&t).indices(), &[0, 1, 3, 4]);
        assert!(NodeSet::new(vec![3], 6).unwrap().is_subset(&s));
        assert_eq!(NodeSet::from_mask(&s.to_mask(6)), s);
    }

    #[test]
    fn norms() {
        let mesh = StructuredTriMesh::friedrichs_keller(8).unwrap();
        let a = mesh.assemble_stiffness();
        let m = mesh.assemble_mass(false);
        let zero = vec![0.0; a.dim()];
        assert_eq!(energy_norm(&a, &zero), 0.0);
        assert_eq!(l2_norm(&m, &zero), 0.0);
        assert_eq!(dual_norm(&a, &DualVector::zeros(a.dim())).unwrap(), 0.0);
        let f = m.load(&NodalField::constant(a.dim(), 1.0));
        let y = poisson_solve(&a, &f).unwrap();
        let lhs = energy_norm(&a, &y);
        let rhs = dual_norm(&a, &f).unwrap();
        assert!((lhs - rhs).abs() <= 1e-13 * rhs);
    }
}
