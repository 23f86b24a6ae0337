//! Angled subspaces of a finite-dimensional Gram-weighted inner-product space.
//!
//! Everything here is dense. A subspace is held by a Gram-orthonormal basis
//! `B` (columns), so its orthogonal projector is `P = B Bᵀ G` and the
//! cosine of the minimal angle between two subspaces is the largest singular
//! value of the basis correlation matrix `B₁ᵀ G B₂`.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::operators::{poisson_solve, DualVector, NodeSet, SparseSpd};

/// Operations needing `c₀ < 1` refuse angles this close to zero.
pub const DEGENERATE_ANGLE_TOL: f64 = 1e-12;

/// Above this size operator norms use power iteration instead of a dense SVD.
pub const DENSE_NORM_LIMIT: usize = 500;

/// Largest interior-node count accepted by [`fem_angle_bridge`].
pub const BRIDGE_MAX_DOF: usize = 400;

#[derive(Debug, Clone)]
pub struct InnerProductSpace {
    gram: DMatrix<f64>,
    // G = L Lᵀ
    chol_l: DMatrix<f64>,
    chol_l_inv: DMatrix<f64>,
}

impl InnerProductSpace {
    pub fn new(gram: DMatrix<f64>) -> Result<Self> {
        if !gram.is_square() {
            return Err(Error::InvalidArgument("gram matrix must be square".into()));
        }
        let n = gram.nrows();
        let asym = (&gram - gram.transpose()).abs().max();
        if asym > 1e-12 * gram.abs().max().max(1.0) {
            return Err(Error::InvalidArgument(format!("gram matrix not symmetric ({asym:e})")));
        }
        let chol = gram
            .clone()
            .cholesky()
            .ok_or_else(|| Error::NotSpd("gram matrix".into()))?;
        let chol_l = chol.l();
        let chol_l_inv = chol_l
            .solve_lower_triangular(&DMatrix::identity(n, n))
            .ok_or_else(|| Error::NotSpd("gram factor is singular".into()))?;
        Ok(Self {
            gram,
            chol_l,
            chol_l_inv,
        })
    }

    pub fn euclidean(n: usize) -> Self {
        Self::new(DMatrix::identity(n, n)).expect("identity is SPD")
    }

    pub fn dim(&self) -> usize {
        self.gram.nrows()
    }

    pub fn gram(&self) -> &DMatrix<f64> {
        &self.gram
    }

    pub fn inner(&self, x: &DVector<f64>, y: &DVector<f64>) -> f64 {
        x.dot(&(&self.gram * y))
    }

    pub fn norm(&self, x: &DVector<f64>) -> f64 {
        self.inner(x, x).max(0.0).sqrt()
    }

    /// `Lᵀ T L⁻ᵀ`: the matrix of `T` in a Gram-orthonormal coordinate system.
    fn to_orthonormal_coords(&self, t: &DMatrix<f64>) -> DMatrix<f64> {
        self.chol_l.transpose() * t * self.chol_l_inv.transpose()
    }

    /// Operator norm of `T` induced by the Gram norm.
    pub fn operator_norm(&self, t: &DMatrix<f64>) -> f64 {
        largest_singular_value(&self.to_orthonormal_coords(t))
    }

    /// Operator norm of a `2n × 2n` block operator on `H × H` with the
    /// product norm.
    pub fn block_operator_norm(&self, t: &DMatrix<f64>) -> f64 {
        let n = self.dim();
        assert_eq!(t.shape(), (2 * n, 2 * n));
        let mut l = DMatrix::zeros(2 * n, 2 * n);
        let mut l_inv = DMatrix::zeros(2 * n, 2 * n);
        for b in 0..2 {
            l.view_mut((b * n, b * n), (n, n)).copy_from(&self.chol_l);
            l_inv.view_mut((b * n, b * n), (n, n)).copy_from(&self.chol_l_inv);
        }
        largest_singular_value(&(l.transpose() * t * l_inv.transpose()))
    }
}

/// Largest singular value: dense SVD up to [`DENSE_NORM_LIMIT`], power
/// iteration on `MᵀM` beyond.
pub fn largest_singular_value(m: &DMatrix<f64>) -> f64 {
    if m.nrows() == 0 || m.ncols() == 0 {
        return 0.0;
    }
    if m.nrows().max(m.ncols()) <= DENSE_NORM_LIMIT {
        m.clone().svd(false, false).singular_values.max()
    } else {
        power_iteration_norm(m, 10_000, 1e-11)
    }
}

pub fn power_iteration_norm(m: &DMatrix<f64>, max_iter: usize, tol: f64) -> f64 {
    let n = m.ncols();
    let mut x = DVector::from_fn(n, |i, _| 1.0 + ((i * 7919) % 13) as f64 / 13.0);
    x /= x.norm();
    let mut sigma = 0.0;
    for _ in 0..max_iter {
        let y = m.transpose() * (m * &x);
        let ny = y.norm();
        if ny == 0.0 {
            return 0.0;
        }
        let next = ny.sqrt();
        x = y / ny;
        if (next - sigma).abs() <= tol * next {
            return next;
        }
        sigma = next;
    }
    sigma
}

/// Subspace represented by a Gram-orthonormal basis.
#[derive(Debug, Clone)]
pub struct Subspace<'s> {
    space: &'s InnerProductSpace,
    basis: DMatrix<f64>,
}

impl<'s> Subspace<'s> {
    pub fn zero(space: &'s InnerProductSpace) -> Self {
        Self {
            space,
            basis: DMatrix::zeros(space.dim(), 0),
        }
    }

    pub fn space(&self) -> &'s InnerProductSpace {
        self.space
    }

    pub fn basis(&self) -> &DMatrix<f64> {
        &self.basis
    }

    pub fn dim(&self) -> usize {
        self.basis.ncols()
    }

    /// `P = B Bᵀ G`.
    pub fn projector(&self) -> DMatrix<f64> {
        &self.basis * (self.basis.transpose() * self.space.gram())
    }

    /// Orthogonal complement within the ambient space.
    pub fn complement(&self, rank_tol: f64) -> Subspace<'s> {
        let n = self.space.dim();
        let residual = DMatrix::identity(n, n) - self.projector();
        orthonormal_basis(self.space, &residual, rank_tol)
    }
}

/// Gram-orthonormal basis of the span of the generator columns.
///
/// Modified Gram–Schmidt with column pivoting and one reorthogonalization
/// pass; a generator is dropped once its deflated Gram norm is below
/// `rank_tol`.
pub fn orthonormal_basis<'s>(
    space: &'s InnerProductSpace,
    generators: &DMatrix<f64>,
    rank_tol: f64,
) -> Subspace<'s> {
    let n = space.dim();
    assert_eq!(generators.nrows(), n, "generator length");
    let g = space.gram();
    let mut rest: Vec<DVector<f64>> = generators.column_iter().map(|c| c.into_owned()).collect();
    let mut basis: Vec<DVector<f64>> = Vec::new();
    while !rest.is_empty() && basis.len() < n {
        let (p, best) = rest
            .iter()
            .map(|v| space.norm(v))
            .enumerate()
            .fold((0, -1.0), |acc, (i, nv)| if nv > acc.1 { (i, nv) } else { acc });
        if best < rank_tol || best == 0.0 {
            break;
        }
        let mut q = rest.swap_remove(p);
        for b in &basis {
            let c = b.dot(&(g * &q));
            q.axpy(-c, b, 1.0);
        }
        let nq = space.norm(&q);
        if nq < rank_tol || nq == 0.0 {
            continue;
        }
        q /= nq;
        let gq = g * &q;
        for v in rest.iter_mut() {
            let c = gq.dot(v);
            v.axpy(-c, &q, 1.0);
        }
        basis.push(q);
    }
    let basis = if basis.is_empty() {
        DMatrix::zeros(n, 0)
    } else {
        DMatrix::from_columns(&basis)
    };
    Subspace { space, basis }
}

/// `c₀(W₁, W₂) = ‖P₁P₂‖`, the cosine of the minimal angle.
pub fn min_angle_cosine(w1: &Subspace<'_>, w2: &Subspace<'_>) -> f64 {
    if w1.dim() == 0 || w2.dim() == 0 {
        return 0.0;
    }
    let corr = w1.basis.transpose() * w1.space.gram() * &w2.basis;
    largest_singular_value(&corr).min(1.0)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SineReport {
    /// `√(1 − c₀²)`
    pub derived: f64,
    /// `inf { dist(x₁, W₂) : x₁ ∈ W₁, ‖x₁‖ = 1 }`
    pub direct: f64,
}

/// Sine of the minimal angle, computed two independent ways.
pub fn min_angle_sine(w1: &Subspace<'_>, w2: &Subspace<'_>) -> SineReport {
    let c0 = min_angle_cosine(w1, w2);
    let derived = (1.0 - c0 * c0).max(0.0).sqrt();
    let direct = if w1.dim() == 0 || w2.dim() == 0 {
        1.0
    } else {
        let space = w1.space;
        let n = space.dim();
        let residual = (DMatrix::identity(n, n) - w2.projector()) * &w1.basis;
        let coords = space.chol_l.transpose() * residual;
        coords.svd(false, false).singular_values.min().min(1.0)
    };
    SineReport { derived, direct }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum MiddleSolve {
    /// Dense LU of `I − P₂P₁`.
    Dense,
    /// `Σ_{k < terms} (P₂P₁)ᵏ`.
    Neumann { terms: usize },
}

/// Inverse of the block operator `R₁ = [[I, P₁], [P₂, I]]` via its
/// triangular factorization with middle block `(I − P₂P₁)⁻¹`.
#[derive(Debug, Clone)]
pub struct R1Inverse {
    p1: DMatrix<f64>,
    p2: DMatrix<f64>,
    c0: f64,
    mode: MiddleSolve,
    middle_lu: Option<nalgebra::LU<f64, nalgebra::Dyn, nalgebra::Dyn>>,
}

impl R1Inverse {
    pub fn new(w1: &Subspace<'_>, w2: &Subspace<'_>, mode: MiddleSolve) -> Result<Self> {
        let c0 = min_angle_cosine(w1, w2);
        if c0 >= 1.0 - DEGENERATE_ANGLE_TOL {
            return Err(Error::AngleDegenerate { c0 });
        }
        let p1 = w1.projector();
        let p2 = w2.projector();
        let n = p1.nrows();
        let middle_lu = match mode {
            MiddleSolve::Dense => Some((DMatrix::identity(n, n) - &p2 * &p1).lu()),
            MiddleSolve::Neumann { .. } => None,
        };
        Ok(Self {
            p1,
            p2,
            c0,
            mode,
            middle_lu,
        })
    }

    pub fn c0(&self) -> f64 {
        self.c0
    }

    pub fn p1(&self) -> &DMatrix<f64> {
        &self.p1
    }

    pub fn p2(&self) -> &DMatrix<f64> {
        &self.p2
    }

    /// `(I − P₂P₁)⁻¹ v`
    pub fn middle_inverse(&self, v: &DMatrix<f64>) -> DMatrix<f64> {
        match (&self.mode, &self.middle_lu) {
            (MiddleSolve::Dense, Some(lu)) => lu.solve(v).expect("I − P₂P₁ is invertible when c₀ < 1"),
            (MiddleSolve::Neumann { terms }, _) => {
                let q = &self.p2 * &self.p1;
                let mut term = v.clone();
                let mut sum = v.clone();
                for _ in 1..*terms {
                    term = &q * term;
                    sum += &term;
                }
                sum
            }
            _ => unreachable!("dense mode always carries its factorization"),
        }
    }

    /// Solves `R₁ (x, y) = (a, b)`; the right-hand sides may hold several
    /// columns.
    pub fn apply(&self, a: &DMatrix<f64>, b: &DMatrix<f64>) -> (DMatrix<f64>, DMatrix<f64>) {
        let lower = b - &self.p2 * a;
        let y = self.middle_inverse(&lower);
        let x = a - &self.p1 * &y;
        (x, y)
    }

    /// Forward application `R₁ (x, y) = (x + P₁y, P₂x + y)`.
    pub fn apply_r1(&self, x: &DMatrix<f64>, y: &DMatrix<f64>) -> (DMatrix<f64>, DMatrix<f64>) {
        (x + &self.p1 * y, &self.p2 * x + y)
    }

    /// The `2n × 2n` matrix of `R₁⁻¹`.
    pub fn to_matrix(&self) -> DMatrix<f64> {
        let n = self.p1.nrows();
        let id = DMatrix::<f64>::identity(n, n);
        let zero = DMatrix::<f64>::zeros(n, n);
        let (x1, y1) = self.apply(&id, &zero);
        let (x2, y2) = self.apply(&zero, &id);
        let mut m = DMatrix::zeros(2 * n, 2 * n);
        m.view_mut((0, 0), (n, n)).copy_from(&x1);
        m.view_mut((n, 0), (n, n)).copy_from(&y1);
        m.view_mut((0, n), (n, n)).copy_from(&x2);
        m.view_mut((n, n), (n, n)).copy_from(&y2);
        m
    }

    /// `4 / (1 − c₀)`, the bound on `‖R₁⁻¹‖`.
    pub fn norm_bound(&self) -> f64 {
        4.0 / (1.0 - self.c0)
    }
}

/// Orthogonal projection onto `W₁ + W₂` as `(I I) R₁⁻¹ (P₁; P₂)`.
pub fn project_onto_sum(w1: &Subspace<'_>, w2: &Subspace<'_>) -> Result<DMatrix<f64>> {
    let inv = R1Inverse::new(w1, w2, MiddleSolve::Dense)?;
    let (x, y) = inv.apply(&inv.p1, &inv.p2);
    Ok(x + y)
}

/// The same projection in the closed form
/// `P₁ + (I − P₁)(I − P₂P₁)⁻¹P₂(I − P₁)`.
pub fn project_onto_sum_closed_form(w1: &Subspace<'_>, w2: &Subspace<'_>) -> Result<DMatrix<f64>> {
    let inv = R1Inverse::new(w1, w2, MiddleSolve::Dense)?;
    let n = inv.p1.nrows();
    let q1 = DMatrix::identity(n, n) - &inv.p1;
    let inner = inv.middle_inverse(&(&inv.p2 * &q1));
    Ok(&inv.p1 + &q1 * inner)
}

/// Partial sum over `k < terms` of the symmetric series
/// `P₁(P₂P₁)ᵏ + (P₂P₁)ᵏP₂ − (P₁P₂)ᵏ⁺¹ − (P₂P₁)ᵏ⁺¹`.
pub fn project_onto_sum_series(w1: &Subspace<'_>, w2: &Subspace<'_>, terms: usize) -> DMatrix<f64> {
    let p1 = w1.projector();
    let p2 = w2.projector();
    let n = p1.nrows();
    let p21 = &p2 * &p1;
    let p12 = &p1 * &p2;
    let mut pow21 = DMatrix::<f64>::identity(n, n);
    let mut pow12 = DMatrix::<f64>::identity(n, n);
    let mut sum = DMatrix::zeros(n, n);
    for _ in 0..terms {
        let next21 = &p21 * &pow21;
        let next12 = &p12 * &pow12;
        sum += &p1 * &pow21 + &pow21 * &p2 - &next12 - &next21;
        pow21 = next21;
        pow12 = next12;
    }
    sum
}

#[derive(Debug, Clone, PartialEq)]
pub struct BridgeReport {
    pub c0: f64,
    pub dim_w1: usize,
    pub dim_w2: usize,
    /// `max |(I − P) − A 𝕊(O₁ ∩ O₂)|` entrywise.
    pub deviation: f64,
}

/// Checks, in `H⁻¹ ≅ Rⁿ` with Gram matrix `A⁻¹`, that the projection onto
/// `W(O₁) + W(O₂)` with `W(O) = (A span{eᵢ : i ∈ O})^⊥` equals
/// `I − A 𝕊(O₁ ∩ O₂)`.
pub fn fem_angle_bridge(a: &SparseSpd, o1: &NodeSet, o2: &NodeSet) -> Result<BridgeReport> {
    let n = a.dim();
    if n > BRIDGE_MAX_DOF {
        return Err(Error::SizeLimit {
            what: "dense angle bridge",
            dim: n,
            limit: BRIDGE_MAX_DOF,
        });
    }
    for set in [o1, o2] {
        if set.indices().last().is_some_and(|&i| i >= n) {
            return Err(Error::InvalidArgument("node set out of range".into()));
        }
    }
    // Gram matrix A⁻¹ assembled column by column from the cached factor.
    let mut gram = DMatrix::zeros(n, n);
    for j in 0..n {
        let mut e = vec![0.0; n];
        e[j] = 1.0;
        let col = poisson_solve(a, &DualVector::new(e))?;
        gram.set_column(j, &DVector::from_vec(col.into_inner()));
    }
    let gram = (&gram + gram.transpose()) * 0.5;
    let space = InnerProductSpace::new(gram)?;

    let rank_tol = 1e-10;
    let image = |set: &NodeSet| {
        let mut m = DMatrix::zeros(n, set.len());
        for (k, &i) in set.indices().iter().enumerate() {
            for (r, v) in a.row(i) {
                // A is symmetric: column i equals row i
                m[(r, k)] = v;
            }
        }
        orthonormal_basis(&space, &m, rank_tol)
    };
    let w1 = image(o1).complement(rank_tol);
    let w2 = image(o2).complement(rank_tol);
    let c0 = min_angle_cosine(&w1, &w2);
    let p = project_onto_sum(&w1, &w2)?;

    let both = o1.intersection(o2);
    let factor = a.restricted_factor(&both)?;
    let mut deviation = 0.0f64;
    for j in 0..n {
        let mut e = vec![0.0; n];
        e[j] = 1.0;
        let col = a.apply(&factor.apply(&e));
        for i in 0..n {
            let id = if i == j { 1.0 } else { 0.0 };
            deviation = deviation.max((id - p[(i, j)] - col[i]).abs());
        }
    }
    Ok(BridgeReport {
        c0,
        dim_w1: w1.dim(),
        dim_w2: w2.dim(),
        deviation,
    })
}
