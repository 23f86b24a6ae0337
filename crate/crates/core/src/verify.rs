//! Seeded randomized checks of the angled-subspace calculus.
//!
//! Each trial draws a random SPD Gram matrix and two random subspaces and
//! records, per property, the worst deviation seen across trials.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::mesh::StructuredTriMesh;
use crate::operators::NodeSet;
use crate::oracles::dense_sum_projector;
use crate::subspaces::{
    fem_angle_bridge, min_angle_cosine, min_angle_sine, orthonormal_basis, project_onto_sum,
    project_onto_sum_closed_form, project_onto_sum_series, InnerProductSpace, MiddleSolve, R1Inverse,
};

/// Trials whose cosine exceeds this are redrawn: the checks are about
/// identities, not about conditioning near a vanishing angle.
pub const MAX_TRIAL_COSINE: f64 = 0.98;

const RANK_TOL: f64 = 1e-10;

/// Worst deviations per property. `norm_bound_excess` is
/// `max(0, ‖R₁⁻¹‖ − 4/(1 − c₀))`.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct SuiteReport {
    pub trials: usize,
    pub symmetry: f64,
    pub pythagoras: f64,
    pub norm_characterization: f64,
    pub projector_vs_oracle: f64,
    pub closed_form: f64,
    pub neumann_identity: f64,
    pub r1_round_trip: f64,
    pub norm_bound_excess: f64,
    pub series: f64,
    pub absorption: f64,
    pub idempotence: f64,
    /// Whether a trial with `W₁ = W₂` was correctly rejected.
    pub degenerate_rejected: bool,
}

impl SuiteReport {
    pub fn rows(&self) -> Vec<(&'static str, f64)> {
        vec![
            ("symmetry", self.symmetry),
            ("pythagoras", self.pythagoras),
            ("norm_characterization", self.norm_characterization),
            ("projector_vs_oracle", self.projector_vs_oracle),
            ("closed_form", self.closed_form),
            ("neumann_identity", self.neumann_identity),
            ("r1_round_trip", self.r1_round_trip),
            ("norm_bound_excess", self.norm_bound_excess),
            ("series", self.series),
            ("absorption", self.absorption),
            ("idempotence", self.idempotence),
        ]
    }

    pub fn max_deviation(&self) -> f64 {
        self.rows().iter().fold(0.0f64, |m, (_, v)| m.max(*v))
    }

    pub fn passes(&self, tol: f64) -> bool {
        self.max_deviation() <= tol && self.degenerate_rejected
    }
}

fn random_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> DMatrix<f64> {
    DMatrix::from_fn(rows, cols, |_, _| rng.random_range(-1.0..1.0))
}

/// `QᵀQ/n + I/5`, symmetrized.
pub fn random_gram(rng: &mut ChaCha8Rng, n: usize) -> DMatrix<f64> {
    let q = random_matrix(rng, n, n);
    let g = q.transpose() * &q / n as f64 + DMatrix::identity(n, n) * 0.2;
    (&g + g.transpose()) * 0.5
}

fn max_abs(m: &DMatrix<f64>) -> f64 {
    m.abs().max()
}

/// Runs `trials` random instances of dimension `2..=max_dim`.
pub fn subspace_suite(seed: u64, trials: usize, max_dim: usize) -> Result<SuiteReport> {
    if max_dim < 2 {
        return Err(Error::InvalidArgument(format!("max_dim must be at least 2, got {max_dim}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut rep = SuiteReport {
        trials,
        ..SuiteReport::default()
    };
    for _ in 0..trials {
        let n = rng.random_range(2..=max_dim);
        let space = InnerProductSpace::new(random_gram(&mut rng, n))?;
        let (g1, g2, w1, w2) = loop {
            let k1 = rng.random_range(1..n);
            let k2 = rng.random_range(1..=n - k1);
            // extra generators beyond the rank exercise the deflation
            let g1 = random_matrix(&mut rng, n, k1);
            let mut g2 = random_matrix(&mut rng, n, k2);
            if k2 >= 2 {
                let extra = g2.column(0) * 0.5 - g2.column(1) * 2.0;
                g2 = g2.insert_column(k2, 0.0);
                g2.set_column(k2, &extra);
            }
            let w1 = orthonormal_basis(&space, &g1, RANK_TOL);
            let w2 = orthonormal_basis(&space, &g2, RANK_TOL);
            if min_angle_cosine(&w1, &w2) <= MAX_TRIAL_COSINE {
                break (g1, g2, w1, w2);
            }
        };
        let c0 = min_angle_cosine(&w1, &w2);
        let p1 = w1.projector();
        let p2 = w2.projector();
        let id = DMatrix::<f64>::identity(n, n);

        rep.symmetry = rep.symmetry.max((c0 - min_angle_cosine(&w2, &w1)).abs());
        let s = min_angle_sine(&w1, &w2);
        rep.pythagoras = rep
            .pythagoras
            .max((s.direct * s.direct + c0 * c0 - 1.0).abs())
            .max((s.derived - s.direct).abs());
        rep.norm_characterization = rep
            .norm_characterization
            .max((space.operator_norm(&(&p1 * &p2)) - c0).abs());

        let p = project_onto_sum(&w1, &w2)?;
        let oracle = dense_sum_projector(&space, &g1, &g2, RANK_TOL);
        rep.projector_vs_oracle = rep.projector_vs_oracle.max(max_abs(&(&p - oracle)));
        rep.closed_form = rep
            .closed_form
            .max(max_abs(&(&p - project_onto_sum_closed_form(&w1, &w2)?)));

        let lhs = (&id - &p2 * &p1)
            .try_inverse()
            .ok_or_else(|| Error::InvalidInput("I − P₂P₁ singular".into()))?;
        let inner = (&id - &p1 * &p2)
            .try_inverse()
            .ok_or_else(|| Error::InvalidInput("I − P₁P₂ singular".into()))?;
        let rhs = &id + &p2 * inner * &p1;
        rep.neumann_identity = rep.neumann_identity.max(max_abs(&(lhs - rhs)));

        let inv = R1Inverse::new(&w1, &w2, MiddleSolve::Dense)?;
        let a = random_matrix(&mut rng, n, 1);
        let b = random_matrix(&mut rng, n, 1);
        let (x, y) = inv.apply(&a, &b);
        let (ra, rb) = inv.apply_r1(&x, &y);
        rep.r1_round_trip = rep
            .r1_round_trip
            .max(max_abs(&(ra - &a)))
            .max(max_abs(&(rb - &b)));
        let norm = space.block_operator_norm(&inv.to_matrix());
        rep.norm_bound_excess = rep.norm_bound_excess.max((norm - inv.norm_bound()).max(0.0));

        // (P₂P₁)ᵏ has norm ≤ c₀^(2k−1); take enough terms to push it below 1e-14
        let terms = if c0 == 0.0 {
            1
        } else {
            ((1e-14f64.ln() / c0.ln() + 1.0) / 2.0).ceil() as usize + 1
        };
        let series = project_onto_sum_series(&w1, &w2, terms);
        rep.series = rep.series.max(max_abs(&(series - &p)));

        rep.absorption = rep
            .absorption
            .max(max_abs(&(&p * &p1 - &p1)))
            .max(max_abs(&(&p * &p2 - &p2)));
        let g = space.gram();
        rep.idempotence = rep
            .idempotence
            .max(max_abs(&(&p * &p - &p)))
            .max(max_abs(&(g * &p - p.transpose() * g)));
    }

    let space = InnerProductSpace::new(random_gram(&mut rng, 4))?;
    let gens = random_matrix(&mut rng, 4, 2);
    let w = orthonormal_basis(&space, &gens, RANK_TOL);
    rep.degenerate_rejected = matches!(
        R1Inverse::new(&w, &w, MiddleSolve::Dense),
        Err(Error::AngleDegenerate { .. })
    );
    Ok(rep)
}

/// Random pair with `O₁ ∪ O₂` covering every node, the condition for the
/// two complements to enclose a positive angle.
pub fn random_admissible_pair(rng: &mut ChaCha8Rng, dim: usize) -> (NodeSet, NodeSet) {
    let m1: Vec<bool> = (0..dim).map(|_| rng.random_bool(0.6)).collect();
    let m2: Vec<bool> = m1.iter().map(|&a| !a || rng.random_bool(0.5)).collect();
    (NodeSet::from_mask(&m1), NodeSet::from_mask(&m2))
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct BridgeSummary {
    pub pairs: usize,
    pub max_deviation: f64,
    pub max_c0: f64,
}

/// Runs the FEM bridge on `pairs` random admissible set pairs.
pub fn bridge_suite(seed: u64, subdivisions: usize, pairs: usize) -> Result<BridgeSummary> {
    let mesh = StructuredTriMesh::friedrichs_keller(subdivisions)?;
    let a = mesh.assemble_stiffness();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = BridgeSummary {
        pairs,
        ..Default::default()
    };
    for _ in 0..pairs {
        let (o1, o2) = random_admissible_pair(&mut rng, a.dim());
        let rep = fem_angle_bridge(&a, &o1, &o2)?;
        out.max_deviation = out.max_deviation.max(rep.deviation);
        out.max_c0 = out.max_c0.max(rep.c0);
    }
    Ok(out)
}

/// Random vector with entries in `[-1, 1)`.
pub fn random_vector(rng: &mut ChaCha8Rng, n: usize) -> DVector<f64> {
    DVector::from_fn(n, |_, _| rng.random_range(-1.0..1.0))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn small_suite_passes() {
        let rep = subspace_suite(3, 10, 12).unwrap();
        assert!(rep.passes(1e-9), "{rep:?}");
        assert_eq!(rep.trials, 10);
    }

    #[test]
    fn empty_suite() {
        let rep = subspace_suite(0, 0, 40).unwrap();
        assert_eq!(rep.max_deviation(), 0.0);
        assert!(rep.degenerate_rejected);
    }

    #[test]
    fn deterministic() {
        assert_eq!(subspace_suite(11, 5, 20).unwrap(), subspace_suite(11, 5, 20).unwrap());
    }

    #[test]
    fn admissible_pairs_cover() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..20 {
            let (a, b) = random_admissible_pair(&mut rng, 30);
            assert_eq!(a.union(&b).len(), 30);
        }
    }

    #[test]
    fn bridge_on_small_mesh() {
        let s = bridge_suite(5, 4, 5).unwrap();
        assert!(s.max_deviation <= 1e-9, "{s:?}");
        assert!(s.max_c0 < 1.0);
    }
}
