//! Semismooth Newton method for the box-constrained optimal control problem
//!
//! ```text
//! minimize ½‖y − y_D‖²_{L²} + ν/2 ‖u‖²_{H₀¹}   s.t.  −Δy = u,  ψ ≤ u ≤ φ.
//! ```
//!
//! The optimal state is the root of `Q(y) = y − (−Δ)⁻¹ S(ν⁻¹(−Δ)⁻¹(y_D − y))`
//! with `S` the bilateral obstacle solution operator. Discretely every
//! `(−Δ)⁻¹` applied to an L² function `v` is `A⁻¹(M v)`, and the obstacle
//! operator receives its argument as the load vector `M z`. This is the only
//! place that convention is encoded.

use crate::error::{Error, Result};
use crate::mesh::{NodalField, StructuredTriMesh};
use crate::obstacle::{
    newton_inactive_set, solve_bilateral, InactiveSetStrategy, ObstacleProblem, ObstacleSolution,
    PdasOptions,
};
use crate::operators::{
    dot, l2_norm, pcg, poisson_solve, CgCriterion, CgOptions, DualVector, NodeSet, SparseSpd,
};

/// Regularization of the benchmark configuration.
pub const BENCHMARK_NU: f64 = 1e-5;
/// Control bound of the benchmark configuration, `−5 ≤ u ≤ 5`.
pub const BENCHMARK_BOUND: f64 = 5.0;
/// Residual tolerance of the benchmark configuration.
pub const BENCHMARK_TOL: f64 = 1e-12;

/// Desired state of the benchmark configuration.
pub fn benchmark_target(x1: f64, x2: f64) -> f64 {
    10.0 * (-x1 - x2 + 1.0)
}

#[derive(Debug, Clone)]
pub struct ControlProblem {
    a: SparseSpd,
    m: SparseSpd,
    nu: f64,
    y_d: NodalField,
    lower: Vec<f64>,
    upper: Vec<f64>,
}

impl ControlProblem {
    pub fn new(
        a: SparseSpd,
        m: SparseSpd,
        nu: f64,
        y_d: NodalField,
        lower: Vec<f64>,
        upper: Vec<f64>,
    ) -> Result<Self> {
        let n = a.dim();
        if m.dim() != n {
            return Err(Error::InvalidArgument(format!(
                "mass dimension {} differs from stiffness dimension {n}",
                m.dim()
            )));
        }
        if !(nu > 0.0) || !nu.is_finite() {
            return Err(Error::InvalidArgument(format!("ν must be positive and finite, got {nu}")));
        }
        if y_d.len() != n {
            return Err(Error::InvalidArgument(format!(
                "target length {} differs from dimension {n}",
                y_d.len()
            )));
        }
        if y_d.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("target state is not finite".into()));
        }
        // validates the bounds
        ObstacleProblem::new(&a, DualVector::zeros(n), lower.clone(), upper.clone())?;
        Ok(Self {
            a,
            m,
            nu,
            y_d,
            lower,
            upper,
        })
    }

    /// Assembles stiffness and mass on `mesh` and interpolates the target.
    pub fn on_mesh(
        mesh: &StructuredTriMesh,
        lumped: bool,
        nu: f64,
        y_d: impl Fn(f64, f64) -> f64,
        lower: f64,
        upper: f64,
    ) -> Result<Self> {
        let n = mesh.num_interior();
        Self::new(
            mesh.assemble_stiffness(),
            mesh.assemble_mass(lumped),
            nu,
            mesh.interpolate(y_d)?,
            vec![lower; n],
            vec![upper; n],
        )
    }

    /// `ν = 1e-5`, `y_D = 10(1 − x₁ − x₂)`, `−5 ≤ u ≤ 5`.
    pub fn benchmark(mesh: &StructuredTriMesh, lumped: bool) -> Result<Self> {
        Self::on_mesh(
            mesh,
            lumped,
            BENCHMARK_NU,
            benchmark_target,
            -BENCHMARK_BOUND,
            BENCHMARK_BOUND,
        )
    }

    pub fn stiffness(&self) -> &SparseSpd {
        &self.a
    }

    pub fn mass(&self) -> &SparseSpd {
        &self.m
    }

    pub fn nu(&self) -> f64 {
        self.nu
    }

    pub fn target(&self) -> &NodalField {
        &self.y_d
    }

    pub fn lower(&self) -> &[f64] {
        &self.lower
    }

    pub fn upper(&self) -> &[f64] {
        &self.upper
    }

    pub fn dim(&self) -> usize {
        self.a.dim()
    }

    /// `A⁻¹ M v`, the discrete `(−Δ)⁻¹` of an L² function.
    pub fn inverse_laplacian(&self, v: &[f64]) -> Result<NodalField> {
        poisson_solve(&self.a, &DualVector::new(self.m.apply(v)))
    }

    /// The obstacle problem whose solution is the control for a given `z`.
    pub fn obstacle_problem(&self, z: &[f64]) -> Result<ObstacleProblem<'_>> {
        ObstacleProblem::new(
            &self.a,
            DualVector::new(self.m.apply(z)),
            self.lower.clone(),
            self.upper.clone(),
        )
    }

    /// `½(y − y_D)ᵀM(y − y_D) + ν/2 uᵀAu` with `y = A⁻¹Mu`.
    pub fn objective(&self, u: &[f64]) -> Result<f64> {
        let y = self.inverse_laplacian(u)?;
        let e: Vec<f64> = y.iter().zip(self.y_d.iter()).map(|(a, b)| a - b).collect();
        Ok(0.5 * self.m.quad_form(&e) + 0.5 * self.nu * self.a.quad_form(u))
    }

    /// Evaluates `Q(y)` together with its intermediate quantities.
    pub fn residual_map(&self, y: &[f64], pdas: &PdasOptions) -> Result<ResidualEval> {
        if y.len() != self.dim() {
            return Err(Error::InvalidArgument(format!(
                "state length {} differs from dimension {}",
                y.len(),
                self.dim()
            )));
        }
        let diff: Vec<f64> = self.y_d.iter().zip(y).map(|(d, y)| d - y).collect();
        let mut z = self.inverse_laplacian(&diff)?;
        z.iter_mut().for_each(|v| *v /= self.nu);
        let prob = self.obstacle_problem(&z)?;
        let sol = solve_bilateral(&prob, pdas)?;
        let y_tilde = self.inverse_laplacian(&sol.y)?;
        let q: Vec<f64> = y.iter().zip(y_tilde.iter()).map(|(a, b)| a - b).collect();
        let residual = l2_norm(&self.m, &q);
        Ok(ResidualEval {
            z,
            sol,
            y_tilde,
            q: NodalField::new(q),
            residual,
        })
    }

    /// `M G h = M h + ν⁻¹ Bᵀ A_OO⁻¹ B h` with `B = E_Oᵀ M A⁻¹ M`.
    pub fn newton_matrix_apply(&self, set: &NodeSet, h: &[f64]) -> Result<Vec<f64>> {
        let restricted = self.a.restricted_factor(set)?;
        let full = self.a.factor()?;
        let mut out = vec![0.0; h.len()];
        apply_newton_matrix(self, &full, &restricted, h, &mut out);
        Ok(out)
    }

    /// One step of the method: solves `G y_{i+1} = ỹ_i + ν⁻¹ A⁻¹ M 𝕊(O)(M A⁻¹ M y_i)`,
    /// multiplied through by `M`, with matrix-free CG preconditioned by `M`.
    pub fn newton_step(
        &self,
        y: &[f64],
        y_tilde: &[f64],
        set: &NodeSet,
        inner: &InnerSolve,
    ) -> Result<NewtonStep> {
        if set.is_empty() {
            return Ok(NewtonStep {
                y: NodalField::new(y_tilde.to_vec()),
                cg_iterations: 0,
            });
        }
        let restricted = self.a.restricted_factor(set)?;
        let full = self.a.factor()?;
        let mass = self.m.factor()?;

        // rhs = M ỹ + ν⁻¹ Bᵀ A_OO⁻¹ B y = M ỹ + (M G y − M y)
        let mut rhs = vec![0.0; y.len()];
        apply_newton_matrix(self, &full, &restricted, y, &mut rhs);
        let my = self.m.apply(y);
        let mt = self.m.apply(y_tilde);
        for i in 0..rhs.len() {
            rhs[i] += mt[i] - my[i];
        }

        let out = pcg(
            |x, out| apply_newton_matrix(self, &full, &restricted, x, out),
            |r, z| {
                z.copy_from_slice(r);
                mass.solve_in_place(z);
            },
            &rhs,
            Some(y),
            CgOptions {
                tol: inner.tol,
                max_iter: inner.max_iter,
                criterion: CgCriterion::Preconditioned,
            },
        )?;
        Ok(NewtonStep {
            y: NodalField::new(out.x),
            cg_iterations: out.iterations,
        })
    }

    /// Runs the method from `y0` until `‖y_i − ỹ_i‖_M ≤ tol`.
    ///
    /// The reported iteration count is the index `i` at which the check
    /// passes, i.e. the number of Newton steps taken.
    pub fn solve(&self, y0: &NodalField, opts: &ControlOptions) -> Result<ControlRun> {
        if !(opts.tol >= 0.0) {
            return Err(Error::InvalidArgument(format!("tolerance must be ≥ 0, got {}", opts.tol)));
        }
        let mut y = y0.to_vec();
        let mut iterates: Vec<ControlIterate> = Vec::new();
        for i in 0..=opts.max_iter {
            let eval = self.residual_map(&y, &opts.pdas)?;
            let prob = self.obstacle_problem(&eval.z)?;
            let set = newton_inactive_set(&eval.sol, &prob, &opts.strategy)?;
            let done = eval.residual <= opts.tol;
            iterates.push(ControlIterate {
                y: NodalField::new(y.clone()),
                z: eval.z,
                u: eval.sol.y.clone(),
                y_tilde: eval.y_tilde,
                residual: eval.residual,
                inactive: set,
                obstacle: eval.sol,
                cg_iterations: 0,
            });
            if done {
                let mut run = ControlRun::finish(iterates, true);
                run.verification = Some(self.verify(&run, &opts.pdas)?);
                return Ok(run);
            }
            if i == opts.max_iter {
                break;
            }
            let last = iterates.last().unwrap();
            let step = self.newton_step(&y, &last.y_tilde, &last.inactive, &opts.inner)?;
            iterates.last_mut().unwrap().cg_iterations = step.cg_iterations;
            y = step.y.into_inner();
        }
        Err(Error::ControlNonConvergence(Box::new(ControlRun::finish(
            iterates, false,
        ))))
    }

    /// Post-hoc checks of a converged run: one extra residual evaluation at
    /// the state `ȳ = A⁻¹Mū` of the final control.
    fn verify(&self, run: &ControlRun, pdas: &PdasOptions) -> Result<Verification> {
        let eval = self.residual_map(&run.y_bar, pdas)?;
        let du: Vec<f64> = eval.sol.y.iter().zip(run.u_bar.iter()).map(|(a, b)| a - b).collect();
        let feasibility = run
            .u_bar
            .iter()
            .zip(self.lower.iter().zip(&self.upper))
            .fold(0.0f64, |m, (&u, (&lo, &up))| m.max(lo - u).max(u - up));
        Ok(Verification {
            state_residual: eval.residual,
            control_deviation: l2_norm(&self.m, &du),
            feasibility,
        })
    }
}

fn apply_newton_matrix(
    prob: &ControlProblem,
    full: &crate::operators::Cholesky,
    restricted: &crate::operators::RestrictedFactor,
    h: &[f64],
    out: &mut [f64],
) {
    // B h = E_Oᵀ M A⁻¹ M h, then Bᵀ A_OO⁻¹ (B h) = M A⁻¹ M 𝕊(O)(M A⁻¹ M h)
    let mut w = prob.m.apply(h);
    full.solve_in_place(&mut w);
    let w = prob.m.apply(&w);
    let d = restricted.apply(&w);
    let mut v = prob.m.apply(&d);
    full.solve_in_place(&mut v);
    let v = prob.m.apply(&v);
    prob.m.apply_into(h, out);
    let s = 1.0 / prob.nu;
    out.iter_mut().zip(&v).for_each(|(o, v)| *o += s * v);
}

#[derive(Debug, Clone)]
pub struct ResidualEval {
    /// `ν⁻¹ A⁻¹ M (y_D − y)`
    pub z: NodalField,
    /// Obstacle solve with load `M z`; `sol.y` is the control `u`.
    pub sol: ObstacleSolution,
    /// `A⁻¹ M u`
    pub y_tilde: NodalField,
    pub q: NodalField,
    /// `‖q‖_M`
    pub residual: f64,
}

#[derive(Debug, Clone, Copy)]
pub struct InnerSolve {
    /// Relative tolerance in the `M⁻¹` norm of the CG residual.
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for InnerSolve {
    fn default() -> Self {
        Self {
            tol: 1e-13,
            max_iter: 2_000,
        }
    }
}

#[derive(Debug, Clone)]
pub struct NewtonStep {
    pub y: NodalField,
    pub cg_iterations: usize,
}

#[derive(Debug, Clone)]
pub struct ControlOptions {
    pub tol: f64,
    pub max_iter: usize,
    pub strategy: InactiveSetStrategy,
    pub pdas: PdasOptions,
    pub inner: InnerSolve,
}

impl Default for ControlOptions {
    fn default() -> Self {
        Self {
            tol: BENCHMARK_TOL,
            max_iter: 30,
            strategy: InactiveSetStrategy::Maximal,
            pdas: PdasOptions::default(),
            inner: InnerSolve::default(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct ControlIterate {
    pub y: NodalField,
    pub z: NodalField,
    pub u: NodalField,
    pub y_tilde: NodalField,
    /// `‖y − ỹ‖_M`
    pub residual: f64,
    /// Set `O` generating the Newton derivative at this iterate.
    pub inactive: NodeSet,
    pub obstacle: ObstacleSolution,
    /// CG iterations of the step taken from this iterate (0 for the last).
    pub cg_iterations: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Verification {
    /// `‖Q(ȳ)‖_M`
    pub state_residual: f64,
    /// `‖S(M z(ȳ)) − ū‖_M`: first-order optimality of `ū`.
    pub control_deviation: f64,
    pub feasibility: f64,
}

impl Verification {
    pub fn passes(&self, tol: f64) -> bool {
        self.state_residual <= 10.0 * tol
            && self.control_deviation <= 10.0 * tol
            && self.feasibility <= 0.0
    }
}

#[derive(Debug, Clone)]
pub struct ControlRun {
    pub iterations: Vec<ControlIterate>,
    pub converged: bool,
    /// `r_{i+1} / r_i`
    pub ratios: Vec<f64>,
    pub u_bar: NodalField,
    /// `A⁻¹ M ū`
    pub y_bar: NodalField,
    pub verification: Option<Verification>,
}

impl ControlRun {
    fn finish(iterations: Vec<ControlIterate>, converged: bool) -> Self {
        let ratios = iterations
            .windows(2)
            .map(|w| w[1].residual / w[0].residual)
            .collect();
        let last = iterations.last().expect("at least one iterate");
        Self {
            u_bar: last.u.clone(),
            y_bar: last.y_tilde.clone(),
            ratios,
            iterations,
            converged,
            verification: None,
        }
    }

    /// Newton steps taken before the residual check passed.
    pub fn newton_iterations(&self) -> usize {
        self.iterations.len() - 1
    }

    pub fn residuals(&self) -> Vec<f64> {
        self.iterations.iter().map(|it| it.residual).collect()
    }

    pub fn final_obstacle(&self) -> &ObstacleSolution {
        &self.iterations.last().unwrap().obstacle
    }

    /// Strictly decreasing ratios over the last three steps; `None` when
    /// there are fewer than three.
    pub fn superlinear_tail(&self) -> Option<bool> {
        if self.ratios.len() < 3 {
            return None;
        }
        let tail = &self.ratios[self.ratios.len() - 3..];
        Some(tail[1] < tail[0] && tail[2] < tail[1])
    }
}

/// `zᵀ(MG)z − zᵀMz`, nonnegative by coercivity of the Newton matrix.
pub fn coercivity_gap(prob: &ControlProblem, set: &NodeSet, z: &[f64]) -> Result<f64> {
    let mg = prob.newton_matrix_apply(set, z)?;
    Ok(dot(z, &mg) - prob.m.quad_form(z))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small(nu: f64, target: impl Fn(f64, f64) -> f64, bound: f64) -> ControlProblem {
        let mesh = StructuredTriMesh::friedrichs_keller(8).unwrap();
        ControlProblem::on_mesh(&mesh, false, nu, target, -bound, bound).unwrap()
    }

    #[test]
    fn zero_target_is_a_fixed_point() {
        let prob = small(1e-3, |_, _| 0.0, 1.0);
        let eval = prob.residual_map(&vec![0.0; prob.dim()], &PdasOptions::default()).unwrap();
        assert!(eval.z.iter().all(|&v| v == 0.0));
        assert!(eval.sol.y.iter().all(|&v| v == 0.0));
        assert_eq!(eval.residual, 0.0);
        let run = prob.solve(&NodalField::zeros(prob.dim()), &ControlOptions::default()).unwrap();
        assert!(run.converged);
        assert_eq!(run.newton_iterations(), 0);
        assert!(run.u_bar.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn heavy_regularization_kills_the_control() {
        let prob = small(1e6, benchmark_target, 5.0);
        let y: Vec<f64> = (0..prob.dim()).map(|i| (i as f64).sin()).collect();
        let eval = prob.residual_map(&y, &PdasOptions::default()).unwrap();
        let un = l2_norm(prob.mass(), &eval.sol.y);
        assert!(un < 1e-5, "{un}");
        let dq: Vec<f64> = eval.q.iter().zip(&y).map(|(q, y)| q - y).collect();
        assert!(l2_norm(prob.mass(), &dq) < 1e-6 * l2_norm(prob.mass(), &y));
    }

    #[test]
    fn empty_set_step_returns_y_tilde() {
        let prob = small(1e-2, benchmark_target, 1.0);
        let y = vec![0.3; prob.dim()];
        let yt: Vec<f64> = (0..prob.dim()).map(|i| i as f64).collect();
        let step = prob
            .newton_step(&y, &yt, &NodeSet::empty(), &InnerSolve::default())
            .unwrap();
        assert_eq!(&step.y[..], &yt[..]);
    }

    #[test]
    fn coercive_newton_matrix() {
        let prob = small(1e-4, benchmark_target, 5.0);
        let set = NodeSet::new((0..prob.dim()).step_by(2).collect(), prob.dim()).unwrap();
        for k in 0..5 {
            let z: Vec<f64> = (0..prob.dim()).map(|i| ((i * 31 + k * 7) as f64).cos()).collect();
            assert!(coercivity_gap(&prob, &set, &z).unwrap() >= -1e-12);
        }
    }

    #[test]
    fn rejects_bad_parameters() {
        let mesh = StructuredTriMesh::friedrichs_keller(4).unwrap();
        assert!(ControlProblem::on_mesh(&mesh, false, 0.0, |_, _| 0.0, -1.0, 1.0).is_err());
        assert!(ControlProblem::on_mesh(&mesh, false, 1.0, |_, _| 0.0, 1.0, -1.0).is_err());
        assert!(ControlProblem::on_mesh(&mesh, false, 1.0, |_, _| f64::NAN, -1.0, 1.0).is_err());
    }

    #[test]
    fn benchmark_on_coarse_mesh() {
        let mesh = StructuredTriMesh::friedrichs_keller(16).unwrap();
        let prob = ControlProblem::benchmark(&mesh, false).unwrap();
        let run = prob.solve(&NodalField::zeros(prob.dim()), &ControlOptions::default()).unwrap();
        assert!(run.converged);
        assert!(run.verification.unwrap().feasibility <= 0.0);
        assert!(run.u_bar.contains(&5.0) && run.u_bar.contains(&-5.0));
    }
}
