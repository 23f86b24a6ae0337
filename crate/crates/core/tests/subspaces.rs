use nalgebra::{DMatrix, DVector};
use obstakit::error::Error;
use obstakit::mesh::StructuredTriMesh;
use obstakit::operators::NodeSet;
use obstakit::oracles::dense_sum_projector;
use obstakit::subspaces::{
    fem_angle_bridge, min_angle_cosine, min_angle_sine, orthonormal_basis, project_onto_sum,
    project_onto_sum_series, InnerProductSpace, MiddleSolve, R1Inverse, Subspace,
};
use obstakit::verify::{random_gram, subspace_suite};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const TOL: f64 = 1e-10;

fn span<'s>(space: &'s InnerProductSpace, cols: &[&[f64]]) -> Subspace<'s> {
    let n = space.dim();
    let g = DMatrix::from_fn(n, cols.len(), |r, c| cols[c][r]);
    orthonormal_basis(space, &g, TOL)
}

fn max_abs(m: &DMatrix<f64>) -> f64 {
    m.abs().max()
}

#[test]
fn rank_deflation() {
    let e = InnerProductSpace::euclidean(3);
    assert_eq!(span(&e, &[&[1.0, 0.0, 0.0], &[2.0, 0.0, 0.0]]).dim(), 1);
    assert_eq!(span(&e, &[&[0.0; 3]]).dim(), 0);

    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let space = InnerProductSpace::new(random_gram(&mut rng, 8)).unwrap();
    // 5 generators of which two are combinations of the others
    let base = DMatrix::from_fn(8, 3, |_, _| rng.random_range(-1.0..1.0));
    let mix = DMatrix::from_fn(3, 5, |_, _| rng.random_range(-1.0..1.0));
    let gens = &base * &mix;
    let w = orthonormal_basis(&space, &gens, TOL);
    assert_eq!(w.dim(), gens.clone().svd(false, false).rank(1e-10));
    let b = w.basis();
    assert!(max_abs(&(b.transpose() * space.gram() * b - DMatrix::identity(3, 3))) < 1e-12);
}

#[test]
fn projector_examples() {
    let e = InnerProductSpace::euclidean(2);
    let p = span(&e, &[&[1.0, 0.0]]).projector();
    assert!(max_abs(&(p - DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, 0.0])))) < 1e-15);
    let whole = span(&e, &[&[1.0, 2.0], &[0.0, 1.0]]).projector();
    assert!(max_abs(&(whole - DMatrix::identity(2, 2))) < 1e-14);

    // weighted least squares oracle: P x = B (BᵀGB)⁻¹ BᵀG x
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let space = InnerProductSpace::new(random_gram(&mut rng, 7)).unwrap();
    let gens = DMatrix::from_fn(7, 3, |_, _| rng.random_range(-1.0..1.0));
    let g = space.gram();
    let oracle = &gens * (gens.transpose() * g * &gens).try_inverse().unwrap() * gens.transpose() * g;
    let p = orthonormal_basis(&space, &gens, TOL).projector();
    assert!(max_abs(&(p - oracle)) < 1e-11);
}

#[test]
fn angle_examples() {
    let e = InnerProductSpace::euclidean(3);
    for theta in [0.1f64, 0.7, 1.3, 2.5] {
        let w1 = span(&e, &[&[1.0, 0.0, 0.0]]);
        let w2 = span(&e, &[&[theta.cos(), theta.sin(), 0.0]]);
        assert!((min_angle_cosine(&w1, &w2) - theta.cos().abs()).abs() < 1e-14);
        let s = min_angle_sine(&w1, &w2);
        assert!((s.direct - theta.sin().abs()).abs() < 1e-14);
        assert!((s.derived - theta.sin().abs()).abs() < 1e-7);
    }
    let w1 = span(&e, &[&[1.0, 0.0, 0.0]]);
    let w2 = span(&e, &[&[0.0, 1.0, 0.0]]);
    assert_eq!(min_angle_cosine(&w1, &w2), 0.0);
    assert!(min_angle_sine(&w1, &w1).direct < 1e-7);
    assert_eq!(min_angle_cosine(&w1, &Subspace::zero(&e)), 0.0);
}

#[test]
fn cosine_against_sampling_and_svd() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let space = InnerProductSpace::new(random_gram(&mut rng, 10)).unwrap();
    let g1 = DMatrix::from_fn(10, 3, |_, _| rng.random_range(-1.0..1.0));
    let g2 = DMatrix::from_fn(10, 2, |_, _| rng.random_range(-1.0..1.0));
    let (w1, w2) = (orthonormal_basis(&space, &g1, TOL), orthonormal_basis(&space, &g2, TOL));
    let c0 = min_angle_cosine(&w1, &w2);

    // SVD of the Gram cross block of the generator spans, whitened separately
    let g = space.gram();
    let whiten = |x: &DMatrix<f64>| {
        let s = (x.transpose() * g * x).cholesky().unwrap();
        x * s.l().transpose().try_inverse().unwrap()
    };
    let cross = whiten(&g1).transpose() * g * whiten(&g2);
    let oracle = cross.singular_values().max();
    assert!((c0 - oracle).abs() < 1e-11);

    let mut sampled = 0.0f64;
    for _ in 0..20_000 {
        let a = &g1 * DVector::from_fn(3, |_, _| rng.random_range(-1.0..1.0));
        let b = &g2 * DVector::from_fn(2, |_, _| rng.random_range(-1.0..1.0));
        sampled = sampled.max(space.inner(&a, &b).abs() / (space.norm(&a) * space.norm(&b)));
    }
    assert!(sampled <= c0 + 1e-12);
    assert!(c0 - sampled < 1e-2);
}

#[test]
fn sum_projector_examples() {
    let e = InnerProductSpace::euclidean(4);
    let w1 = span(&e, &[&[1.0, 0.0, 0.0, 0.0]]);
    let w2 = span(&e, &[&[0.0, 1.0, 0.0, 0.0]]);
    let p = project_onto_sum(&w1, &w2).unwrap();
    assert!(max_abs(&(&p - (w1.projector() + w2.projector()))) < 1e-15);

    let s = std::f64::consts::FRAC_1_SQRT_2;
    let w2 = span(&e, &[&[s, s, 0.0, 0.0]]);
    let p = project_onto_sum(&w1, &w2).unwrap();
    let plane = DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, 1.0, 0.0, 0.0]));
    assert!(max_abs(&(p - plane)) < 1e-14);

    assert!(matches!(
        project_onto_sum(&w1, &w1),
        Err(Error::AngleDegenerate { c0 }) if c0 >= 1.0 - 1e-12
    ));
    let only = dense_sum_projector(&e, &DMatrix::from_column_slice(4, 1, &[1.0, 0.0, 0.0, 0.0]), &DMatrix::zeros(4, 0), TOL);
    assert!(max_abs(&(only - w1.projector())) < 1e-15);
}

#[test]
fn r1_inverse_with_orthogonal_pair() {
    let e = InnerProductSpace::euclidean(3);
    let w1 = span(&e, &[&[1.0, 0.0, 0.0]]);
    let w2 = span(&e, &[&[0.0, 1.0, 0.0], &[0.0, 0.0, 1.0]]);
    for mode in [MiddleSolve::Dense, MiddleSolve::Neumann { terms: 4 }] {
        let inv = R1Inverse::new(&w1, &w2, mode).unwrap();
        assert_eq!(inv.c0(), 0.0);
        // R₁ = [[I, P₁],[P₂, I]] block inverse from a dense 6×6 solve
        let mut r1 = DMatrix::identity(6, 6);
        r1.view_mut((0, 3), (3, 3)).copy_from(&w1.projector());
        r1.view_mut((3, 0), (3, 3)).copy_from(&w2.projector());
        let oracle = r1.try_inverse().unwrap();
        assert!(max_abs(&(inv.to_matrix() - oracle)) < 1e-14);
    }
    let zero = Subspace::zero(&e);
    let inv = R1Inverse::new(&w1, &zero, MiddleSolve::Dense).unwrap();
    let a = DMatrix::from_column_slice(3, 1, &[1.0, 2.0, 3.0]);
    let b = DMatrix::from_column_slice(3, 1, &[-1.0, 0.5, 4.0]);
    let (x, y) = inv.apply(&a, &b);
    assert!(max_abs(&(&y - &b)) < 1e-15);
    assert!(max_abs(&(&x - (&a - w1.projector() * &b))) < 1e-15);
}

#[test]
fn series_converges_at_rate_c0() {
    let e = InnerProductSpace::euclidean(2);
    let theta = std::f64::consts::FRAC_PI_3; // c0 = 1/2
    let w1 = span(&e, &[&[1.0, 0.0]]);
    let w2 = span(&e, &[&[theta.cos(), theta.sin()]]);
    let exact = project_onto_sum(&w1, &w2).unwrap();
    let err: Vec<f64> = (1..8).map(|k| max_abs(&(project_onto_sum_series(&w1, &w2, k) - &exact))).collect();
    for w in err.windows(2) {
        let ratio = w[0] / w[1];
        assert!(ratio > 3.0 && ratio < 5.0, "{err:?}");
    }
}

#[test]
fn bridge_trivial_cases() {
    let mesh = StructuredTriMesh::friedrichs_keller(6).unwrap();
    let a = mesh.assemble_stiffness();
    let n = a.dim();
    let all = NodeSet::full(n);
    let r = fem_angle_bridge(&a, &all, &all).unwrap();
    assert_eq!((r.dim_w1, r.dim_w2), (0, 0));
    assert!(r.deviation < 1e-12);
    let half: Vec<bool> = (0..n).map(|i| i % 2 == 0).collect();
    let o1 = NodeSet::from_mask(&half);
    let o2 = o1.complement(n);
    let r = fem_angle_bridge(&a, &o1, &o2).unwrap();
    assert_eq!(r.dim_w1 + r.dim_w2, n);
    assert!(r.deviation < 1e-10);

    let big = StructuredTriMesh::friedrichs_keller(24).unwrap().assemble_stiffness();
    assert!(matches!(
        fem_angle_bridge(&big, &NodeSet::full(big.dim()), &NodeSet::empty()),
        Err(Error::SizeLimit { .. })
    ));
}

#[test]
fn suite_at_acceptance_size() {
    let rep = subspace_suite(20240601, 100, 40).unwrap();
    assert!(rep.passes(1e-9), "{rep:?}");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn cosine_is_symmetric_and_bounded(seed in any::<u64>(), n in 2usize..12) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let space = InnerProductSpace::new(random_gram(&mut rng, n)).unwrap();
        let k1 = rng.random_range(1..=n);
        let k2 = rng.random_range(1..=n);
        let w1 = orthonormal_basis(&space, &DMatrix::from_fn(n, k1, |_, _| rng.random_range(-1.0..1.0)), TOL);
        let w2 = orthonormal_basis(&space, &DMatrix::from_fn(n, k2, |_, _| rng.random_range(-1.0..1.0)), TOL);
        let c12 = min_angle_cosine(&w1, &w2);
        prop_assert!((c12 - min_angle_cosine(&w2, &w1)).abs() < 1e-12);
        prop_assert!((0.0..=1.0 + 1e-12).contains(&c12));
    }
}
