//! Discrete unilateral and bilateral obstacle problems.
//!
//! Find `y` with `ψ ≤ y ≤ φ` and `(A y − f)ᵀ (v − y) ≥ 0` for all admissible
//! `v`. The multiplier `λ = f − A y` splits into `λ_ψ = min(0, λ)`, supported
//! on the lower contact set, and `λ^φ = max(0, λ)` on the upper one.
//!
//! Infinite bounds are stored as `±∞`, never as large finite numbers.

use std::collections::HashMap;

use crate::error::{Error, Result};
use crate::mesh::NodalField;
use crate::operators::{
    energy_norm, l2_norm, norm_inf, poisson_solve, restricted_poisson, DualVector, NodeSet,
    SparseSpd,
};

/// Feasibility tolerance on `ψ ≤ y ≤ φ`.
pub const FEAS_TOL: f64 = 1e-10;
/// Complementarity tolerance (relative to the load scale).
pub const COMP_TOL: f64 = 1e-10;
/// `|λᵢ|` below this counts as zero when building Newton-derivative sets.
pub const ACT_TOL: f64 = 1e-12;

/// Times the gap weight `c` may be raised after a repeated active-set pair
/// before the solver gives up with [`Error::Cycling`].
pub const MAX_ESCALATIONS: usize = 3;
const ESCALATION_FACTOR: f64 = 100.0;

#[derive(Debug, Clone)]
pub struct ObstacleProblem<'a> {
    a: &'a SparseSpd,
    load: DualVector,
    lower: Vec<f64>,
    upper: Vec<f64>,
}

impl<'a> ObstacleProblem<'a> {
    pub fn new(a: &'a SparseSpd, load: DualVector, lower: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        let n = a.dim();
        if load.len() != n || lower.len() != n || upper.len() != n {
            return Err(Error::InvalidArgument(format!(
                "obstacle data lengths (load {}, lower {}, upper {}) must equal dimension {n}",
                load.len(),
                lower.len(),
                upper.len()
            )));
        }
        if load.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("obstacle load is not finite".into()));
        }
        for i in 0..n {
            let (lo, up) = (lower[i], upper[i]);
            if lo.is_nan() || up.is_nan() || lo == f64::INFINITY || up == f64::NEG_INFINITY {
                return Err(Error::InvalidArgument(format!(
                    "invalid bounds [{lo}, {up}] at node {i}"
                )));
            }
            if lo >= up {
                return Err(Error::InvalidArgument(format!(
                    "infeasible bounds at node {i}: lower {lo} is not below upper {up}"
                )));
            }
        }
        Ok(Self { a, load, lower, upper })
    }

    pub fn unilateral_lower(a: &'a SparseSpd, load: DualVector, lower: Vec<f64>) -> Result<Self> {
        let upper = vec![f64::INFINITY; a.dim()];
        Self::new(a, load, lower, upper)
    }

    pub fn unilateral_upper(a: &'a SparseSpd, load: DualVector, upper: Vec<f64>) -> Result<Self> {
        let lower = vec![f64::NEG_INFINITY; a.dim()];
        Self::new(a, load, lower, upper)
    }

    pub fn stiffness(&self) -> &'a SparseSpd {
        self.a
    }

    pub fn load(&self) -> &DualVector {
        &self.load
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

    /// Same constraints, different load.
    pub fn with_load(&self, load: DualVector) -> Result<Self> {
        Self::new(self.a, load, self.lower.clone(), self.upper.clone())
    }

    fn load_scale(&self) -> f64 {
        norm_inf(&self.load).max(1.0)
    }
}

/// Individually reported blocks of the complementarity system.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct KktReport {
    /// `max(ψ − y, y − φ, 0)`
    pub feasibility: f64,
    /// Wrong-signed multiplier mass, relative to the load scale.
    pub sign: f64,
    /// `max |λᵢ| · gapᵢ`, relative to the load scale.
    pub complementarity: f64,
    /// `max |(f − A y)ᵢ|` over inactive nodes, relative to the load scale.
    pub stationarity: f64,
}

impl KktReport {
    pub fn max(&self) -> f64 {
        self.feasibility
            .max(self.sign)
            .max(self.complementarity)
            .max(self.stationarity)
    }
}

#[derive(Debug, Clone)]
pub struct ObstacleSolution {
    pub y: NodalField,
    /// `λ = f − A y`, exactly zero on the inactive set.
    pub lambda: DualVector,
    pub active_lower: NodeSet,
    pub active_upper: NodeSet,
    pub inactive: NodeSet,
    /// `min(0, λ)`
    pub lambda_lower: DualVector,
    /// `max(0, λ)`
    pub lambda_upper: DualVector,
    pub kkt: KktReport,
    pub kkt_residual: f64,
    pub iterations: usize,
}

#[derive(Debug, Clone, Copy)]
pub struct PdasOptions {
    /// Weight of the primal gap in the active-set prediction, relative to
    /// the diagonal of the stiffness matrix.
    pub c: f64,
    pub max_iter: usize,
    pub tol: f64,
}

impl Default for PdasOptions {
    fn default() -> Self {
        Self {
            c: 1.0,
            max_iter: 500,
            tol: 1e-10,
        }
    }
}

/// Primal-dual active set solve starting from the unconstrained solution
/// clamped to the bounds.
pub fn solve_bilateral(prob: &ObstacleProblem<'_>, opts: &PdasOptions) -> Result<ObstacleSolution> {
    solve_bilateral_from(prob, opts, None)
}

/// As [`solve_bilateral`], optionally starting from given active sets
/// `(lower, upper)`.
pub fn solve_bilateral_from(
    prob: &ObstacleProblem<'_>,
    opts: &PdasOptions,
    initial: Option<(&NodeSet, &NodeSet)>,
) -> Result<ObstacleSolution> {
    if !(opts.c > 0.0) || !(opts.tol >= 0.0) {
        return Err(Error::InvalidArgument(format!(
            "pdas needs c > 0 and tol ≥ 0, got c = {}, tol = {}",
            opts.c, opts.tol
        )));
    }
    let n = prob.dim();
    let diag = prob.a.diagonal();
    let scale = prob.load_scale();
    let bound_scale = prob
        .lower
        .iter()
        .chain(&prob.upper)
        .filter(|b| b.is_finite())
        .fold(1.0f64, |m, b| m.max(b.abs()));
    let diag_scale = diag.iter().fold(0.0f64, |m, d| m.max(*d));
    let mut c = opts.c;
    // Ties λᵢ + c dᵢ (yᵢ − ψᵢ) ≈ 0 (biactive nodes) fall to the inactive side.
    let tie = |c: f64| 64.0 * f64::EPSILON * scale.max(c * diag_scale * bound_scale);

    let mut masks = match initial {
        Some((lo, up)) => {
            let (ml, mu) = (lo.to_mask(n), up.to_mask(n));
            if ml.iter().zip(&mu).any(|(a, b)| *a && *b) {
                return Err(Error::InvalidArgument("initial active sets overlap".into()));
            }
            (ml, mu)
        }
        None => {
            let y0: Vec<f64> = poisson_solve(prob.a, &prob.load)?
                .iter()
                .zip(prob.lower.iter().zip(&prob.upper))
                .map(|(&v, (&lo, &up))| v.clamp(lo, up))
                .collect();
            let lambda0 = residual(prob, &y0);
            predict(prob, &diag, &y0, &lambda0, c, tie(c))
        }
    };

    let mut seen: HashMap<(Vec<bool>, Vec<bool>), usize> = HashMap::new();
    let mut escalations = 0;
    let mut last: Option<ObstacleSolution> = None;
    for it in 1..=opts.max_iter {
        if let Some(&first_seen) = seen.get(&masks) {
            // Small c lets nodes jump between the two bounds and can cycle;
            // retry from the last iterate with a stiffer gap weight.
            let prev = last.as_ref().expect("a repeat needs a previous iterate");
            if escalations == MAX_ESCALATIONS {
                return Err(Error::Cycling {
                    first_seen,
                    iteration: it,
                });
            }
            escalations += 1;
            c *= ESCALATION_FACTOR;
            seen.clear();
            masks = predict(prob, &diag, &prev.y, &prev.lambda, c, tie(c));
        }
        seen.insert(masks.clone(), it);

        let sol = reduced_solve(prob, &masks.0, &masks.1, it)?;
        if sol.kkt_residual <= opts.tol {
            return release_biactive(prob, sol, &masks, tie(c), opts.tol);
        }
        let next = predict(prob, &diag, &sol.y, &sol.lambda, c, tie(c));
        if next == masks {
            // Stable sets but KKT above tolerance: accuracy floor of the solve.
            return Err(Error::ObstacleNonConvergence {
                iterations: it,
                residual: sol.kkt_residual,
                last: Box::new(sol),
            });
        }
        masks = next;
        last = Some(sol);
    }
    let last = last.expect("max_iter ≥ 1 produced an iterate");
    Err(Error::ObstacleNonConvergence {
        iterations: opts.max_iter,
        residual: last.kkt_residual,
        last: Box::new(last),
    })
}

/// Moves active nodes whose multiplier vanishes to the inactive side, as long
/// as the re-solved system still meets the tolerance.
fn release_biactive(
    prob: &ObstacleProblem<'_>,
    sol: ObstacleSolution,
    masks: &(Vec<bool>, Vec<bool>),
    tie: f64,
    tol: f64,
) -> Result<ObstacleSolution> {
    let zero = |i: usize| sol.lambda[i].abs() <= tie;
    let lower: Vec<bool> = masks.0.iter().enumerate().map(|(i, &a)| a && !zero(i)).collect();
    let upper: Vec<bool> = masks.1.iter().enumerate().map(|(i, &a)| a && !zero(i)).collect();
    if lower == masks.0 && upper == masks.1 {
        return Ok(sol);
    }
    let released = reduced_solve(prob, &lower, &upper, sol.iterations)?;
    Ok(if released.kkt_residual <= tol { released } else { sol })
}

pub fn solve_unilateral_lower(
    a: &SparseSpd,
    load: DualVector,
    lower: Vec<f64>,
    opts: &PdasOptions,
) -> Result<ObstacleSolution> {
    solve_bilateral(&ObstacleProblem::unilateral_lower(a, load, lower)?, opts)
}

pub fn solve_unilateral_upper(
    a: &SparseSpd,
    load: DualVector,
    upper: Vec<f64>,
    opts: &PdasOptions,
) -> Result<ObstacleSolution> {
    solve_bilateral(&ObstacleProblem::unilateral_upper(a, load, upper)?, opts)
}

fn residual(prob: &ObstacleProblem<'_>, y: &[f64]) -> Vec<f64> {
    prob.a
        .apply(y)
        .iter()
        .zip(prob.load.iter())
        .map(|(ay, f)| f - ay)
        .collect()
}

fn predict(
    prob: &ObstacleProblem<'_>,
    diag: &[f64],
    y: &[f64],
    lambda: &[f64],
    c: f64,
    tie: f64,
) -> (Vec<bool>, Vec<bool>) {
    let n = y.len();
    let mut lower = vec![false; n];
    let mut upper = vec![false; n];
    for i in 0..n {
        // ±∞ bounds never activate: the expressions evaluate to ±∞.
        let w = c * diag[i];
        lower[i] = lambda[i] + w * (y[i] - prob.lower[i]) < -tie;
        upper[i] = !lower[i] && lambda[i] + w * (y[i] - prob.upper[i]) > tie;
    }
    (lower, upper)
}

fn reduced_solve(
    prob: &ObstacleProblem<'_>,
    lower: &[bool],
    upper: &[bool],
    iterations: usize,
) -> Result<ObstacleSolution> {
    let n = prob.dim();
    let mut y = vec![0.0; n];
    for i in 0..n {
        if lower[i] {
            y[i] = prob.lower[i];
        } else if upper[i] {
            y[i] = prob.upper[i];
        }
    }
    let inactive_mask: Vec<bool> = (0..n).map(|i| !lower[i] && !upper[i]).collect();
    let inactive = NodeSet::from_mask(&inactive_mask);
    let mut rhs: Vec<f64> = inactive
        .indices()
        .iter()
        .map(|&i| {
            let coupling: f64 = prob
                .a
                .row(i)
                .filter(|&(j, _)| !inactive_mask[j])
                .map(|(j, v)| v * y[j])
                .sum();
            prob.load[i] - coupling
        })
        .collect();
    let factor = prob.a.restricted_factor_uncached(&inactive)?;
    factor.solve_local(&mut rhs);
    for (&i, v) in inactive.indices().iter().zip(rhs) {
        y[i] = v;
    }

    let mut lambda = residual(prob, &y);
    let scale = prob.load_scale().max(norm_inf(&lambda));
    let mut kkt = KktReport::default();
    for &i in inactive.indices() {
        kkt.stationarity = kkt.stationarity.max(lambda[i].abs() / scale);
        lambda[i] = 0.0;
    }
    for i in 0..n {
        kkt.feasibility = kkt
            .feasibility
            .max(prob.lower[i] - y[i])
            .max(y[i] - prob.upper[i]);
        let gap_lower = y[i] - prob.lower[i];
        let gap_upper = prob.upper[i] - y[i];
        if lower[i] {
            kkt.sign = kkt.sign.max(lambda[i] / scale);
            kkt.complementarity = kkt.complementarity.max((lambda[i] * gap_lower).abs() / scale);
        } else if upper[i] {
            kkt.sign = kkt.sign.max(-lambda[i] / scale);
            kkt.complementarity = kkt.complementarity.max((lambda[i] * gap_upper).abs() / scale);
        }
    }

    let lambda_lower: Vec<f64> = lambda.iter().map(|&l| l.min(0.0)).collect();
    let lambda_upper: Vec<f64> = lambda.iter().map(|&l| l.max(0.0)).collect();
    Ok(ObstacleSolution {
        y: NodalField::new(y),
        lambda: DualVector::new(lambda),
        active_lower: NodeSet::from_mask(lower),
        active_upper: NodeSet::from_mask(upper),
        inactive,
        lambda_lower: DualVector::new(lambda_lower),
        lambda_upper: DualVector::new(lambda_upper),
        kkt_residual: kkt.max(),
        kkt,
        iterations,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DecompositionReport {
    /// `max |S_ψ(f − λ^φ) − y|`
    pub lower_deviation: f64,
    /// `max |S^φ(f − λ_ψ) − y|`
    pub upper_deviation: f64,
}

impl DecompositionReport {
    pub fn max(&self) -> f64 {
        self.lower_deviation.max(self.upper_deviation)
    }
}

/// Re-solves the two unilateral problems with the other multiplier moved
/// into the load and compares both states with `sol.y`.
pub fn cross_check_decomposition(
    sol: &ObstacleSolution,
    prob: &ObstacleProblem<'_>,
    opts: &PdasOptions,
) -> Result<DecompositionReport> {
    let shifted = |mult: &DualVector| {
        DualVector::new(prob.load.iter().zip(mult.iter()).map(|(f, l)| f - l).collect())
    };
    // Each unilateral solve starts from the matching contact set of `sol`;
    // the KKT test at tolerance still decides acceptance.
    let none = NodeSet::empty();
    let lower = solve_bilateral_from(
        &ObstacleProblem::unilateral_lower(prob.a, shifted(&sol.lambda_upper), prob.lower.clone())?,
        opts,
        Some((&sol.active_lower, &none)),
    )?;
    let upper = solve_bilateral_from(
        &ObstacleProblem::unilateral_upper(prob.a, shifted(&sol.lambda_lower), prob.upper.clone())?,
        opts,
        Some((&none, &sol.active_upper)),
    )?;
    let dev = |y: &NodalField| {
        y.iter()
            .zip(sol.y.iter())
            .fold(0.0f64, |m, (a, b)| m.max((a - b).abs()))
    };
    Ok(DecompositionReport {
        lower_deviation: dev(&lower.y),
        upper_deviation: dev(&upper.y),
    })
}

/// Largest violations of `min(Aφ, f) ≤ Ay ≤ max(Aψ, f)`, where a bound is
/// read as `±∞` at nodes whose stencil touches an infinite value.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OrderBoundsReport {
    pub below: f64,
    pub above: f64,
}

/// Discrete Lewy–Stampacchia bounds. A diagnostic only: with boundary values
/// eliminated the discrete inequalities may fail near the boundary.
pub fn order_bounds(sol: &ObstacleSolution, prob: &ObstacleProblem<'_>) -> OrderBoundsReport {
    let image = |b: &[f64], inf: f64| -> Vec<f64> {
        (0..prob.dim())
            .map(|i| {
                let mut acc = 0.0;
                for (j, v) in prob.a.row(i) {
                    if !b[j].is_finite() {
                        return inf;
                    }
                    acc += v * b[j];
                }
                acc
            })
            .collect()
    };
    let upper = image(&prob.upper, f64::INFINITY);
    let lower = image(&prob.lower, f64::NEG_INFINITY);
    let ay = prob.a.apply(&sol.y);
    let mut rep = OrderBoundsReport { below: 0.0, above: 0.0 };
    for i in 0..prob.dim() {
        let f = prob.load[i];
        rep.below = rep.below.max(upper[i].min(f) - ay[i]);
        rep.above = rep.above.max(ay[i] - lower[i].max(f));
    }
    rep
}

#[derive(Debug, Clone, PartialEq)]
pub enum InactiveSetStrategy {
    /// All nodes off the multiplier support, `{i : |λᵢ| ≤ ACT_TOL}`; biactive
    /// nodes included.
    Maximal,
    /// Only nodes strictly between the obstacles.
    Strict,
    /// A caller-provided set, checked against the admissible range.
    Custom(NodeSet),
}

/// Nodes strictly between the obstacles, `{ψᵢ + FEAS_TOL < yᵢ < φᵢ − FEAS_TOL}`.
pub fn strictly_inactive(sol: &ObstacleSolution, prob: &ObstacleProblem<'_>) -> NodeSet {
    let mask: Vec<bool> = (0..prob.dim())
        .map(|i| prob.lower[i] + FEAS_TOL < sol.y[i] && sol.y[i] < prob.upper[i] - FEAS_TOL)
        .collect();
    NodeSet::from_mask(&mask)
}

/// Complement of the multiplier support.
pub fn multiplier_free(lambda: &[f64]) -> NodeSet {
    let mask: Vec<bool> = lambda.iter().map(|l| l.abs() <= ACT_TOL).collect();
    NodeSet::from_mask(&mask)
}

/// A set `O` with `{ψ < y < φ} ⊂ O ⊂ {λ = 0}` generating the Newton
/// derivative `𝕊(O)`.
pub fn newton_inactive_set(
    sol: &ObstacleSolution,
    prob: &ObstacleProblem<'_>,
    strategy: &InactiveSetStrategy,
) -> Result<NodeSet> {
    match strategy {
        InactiveSetStrategy::Maximal => Ok(multiplier_free(&sol.lambda)),
        InactiveSetStrategy::Strict => Ok(strictly_inactive(sol, prob)),
        InactiveSetStrategy::Custom(set) => {
            let n = prob.dim();
            if let Some(&bad) = set.indices().iter().find(|&&i| i >= n) {
                return Err(Error::InvalidArgument(format!("node {bad} out of range")));
            }
            if let Some(&i) = strictly_inactive(sol, prob)
                .indices()
                .iter()
                .find(|&&i| !set.contains(i))
            {
                return Err(Error::InvalidArgument(format!(
                    "node {i} is strictly inactive but missing from the custom set"
                )));
            }
            if let Some(&i) = set.indices().iter().find(|&&i| sol.lambda[i].abs() > ACT_TOL) {
                return Err(Error::InvalidArgument(format!(
                    "node {i} lies in the multiplier support (λ = {:e})",
                    sol.lambda[i]
                )));
            }
            Ok(set.clone())
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProbeRow {
    pub t: f64,
    pub remainder: f64,
    /// Number of nodes whose activity differs from the base point.
    pub switched: usize,
}

/// Newton-derivative remainder along `u + t M h`:
/// `‖S(u + tMh) − S(u) − 𝕊(O_t)(tMh)‖_A / (t ‖h‖_M)`, where `O_t` is the
/// maximal inactive set at the perturbed point.
///
/// The increment `S(u + tMh) − S(u)` is computed as the solution of the
/// obstacle problem shifted by `S(u)` (bounds `ψ − y`, `φ − y`, load
/// `λ + tMh`), so it does not suffer cancellation for small `t`.
pub fn semismoothness_probe(
    prob: &ObstacleProblem<'_>,
    base: &ObstacleSolution,
    mass: &SparseSpd,
    direction: &NodalField,
    ts: &[f64],
    opts: &PdasOptions,
) -> Result<Vec<ProbeRow>> {
    let a = prob.a;
    let mh = mass.load(direction);
    let h_norm = l2_norm(mass, direction);
    let lower: Vec<f64> = prob.lower.iter().zip(base.y.iter()).map(|(b, y)| b - y).collect();
    let upper: Vec<f64> = prob.upper.iter().zip(base.y.iter()).map(|(b, y)| b - y).collect();
    let mut rows = Vec::with_capacity(ts.len());
    for &t in ts {
        if !(t > 0.0) {
            return Err(Error::InvalidArgument(format!("probe step must be positive, got {t}")));
        }
        if h_norm == 0.0 {
            rows.push(ProbeRow {
                t,
                remainder: 0.0,
                switched: 0,
            });
            continue;
        }
        let step = DualVector::new(mh.iter().map(|v| t * v).collect());
        let load = DualVector::new(base.lambda.iter().zip(step.iter()).map(|(l, s)| l + s).collect());
        let shifted = ObstacleProblem::new(a, load, lower.clone(), upper.clone())?;
        let inc = solve_bilateral_from(
            &shifted,
            opts,
            Some((&base.active_lower, &base.active_upper)),
        )?;
        let set = multiplier_free(&inc.lambda);
        let delta = restricted_poisson(a, &set, &step)?;
        let diff: Vec<f64> = inc.y.iter().zip(delta.iter()).map(|(d, s)| d - s).collect();
        let switched = (inc.active_lower.indices().len() + base.active_lower.len())
            - 2 * inc.active_lower.intersection(&base.active_lower).len()
            + (inc.active_upper.len() + base.active_upper.len())
            - 2 * inc.active_upper.intersection(&base.active_upper).len();
        rows.push(ProbeRow {
            t,
            remainder: energy_norm(a, &diff) / (t * h_norm),
            switched,
        });
    }
    Ok(rows)
}
