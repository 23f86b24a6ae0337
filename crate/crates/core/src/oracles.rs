//! Slow, dense, brute-force reference implementations.
//!
//! Nothing here shares code paths with the sparse solvers: systems are
//! solved by dense LU, projectors are built from SVDs, and the obstacle
//! problem is solved by trying every active-set assignment.

use std::fmt::Write as _;

use nalgebra::{DMatrix, DVector};

use crate::control::ControlProblem;
use crate::error::{Error, Result};
use crate::operators::SparseSpd;
use crate::subspaces::InnerProductSpace;

pub type DenseMatrix = DMatrix<f64>;

/// Largest dimension accepted by [`enumerate_obstacle`].
pub const ENUMERATION_LIMIT: usize = 15;

/// Version string written into fixture headers.
pub const FIXTURE_VERSION: &str = "obstakit-fixture 1";

pub fn dense(a: &SparseSpd) -> DenseMatrix {
    let n = a.dim();
    let mut m = DMatrix::zeros(n, n);
    for r in 0..n {
        for (c, v) in a.row(r) {
            m[(r, c)] = v;
        }
    }
    m
}

pub fn dense_solve(a: &DenseMatrix, b: &[f64]) -> Result<Vec<f64>> {
    a.clone()
        .lu()
        .solve(&DVector::from_column_slice(b))
        .map(|x| x.as_slice().to_vec())
        .ok_or_else(|| Error::InvalidArgument("singular dense system".into()))
}

/// `tridiag(−1, 2, −1)` on `n` interior nodes of a uniform 1D grid.
pub fn chain_stiffness(n: usize) -> Result<SparseSpd> {
    SparseSpd::tridiagonal(n, 2.0, -1.0)
}

/// Consistent 1D mass `h/6 · tridiag(1, 4, 1)` with `h = 1/(n + 1)`.
pub fn chain_mass(n: usize) -> Result<SparseSpd> {
    let h = 1.0 / (n + 1) as f64;
    SparseSpd::tridiagonal(n, 4.0 * h / 6.0, h / 6.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activity {
    Lower,
    Upper,
    Free,
}

#[derive(Debug, Clone)]
pub struct EnumeratedSolution {
    pub y: Vec<f64>,
    pub lambda: Vec<f64>,
    pub activity: Vec<Activity>,
    /// Number of assignments passing the KKT test; above one only with
    /// biactive nodes, where all passing assignments share `y`.
    pub passing: usize,
}

/// Solves the obstacle problem by testing all `3ⁿ` assignments of nodes to
/// lower-active, upper-active and free. Among the passing assignments the
/// one with the fewest active nodes is returned, so biactive nodes are free.
pub fn enumerate_obstacle(
    a: &DenseMatrix,
    f: &[f64],
    lower: &[f64],
    upper: &[f64],
) -> Result<EnumeratedSolution> {
    let n = f.len();
    if n > ENUMERATION_LIMIT {
        return Err(Error::SizeLimit {
            what: "active-set enumeration",
            dim: n,
            limit: ENUMERATION_LIMIT,
        });
    }
    if a.shape() != (n, n) || lower.len() != n || upper.len() != n {
        return Err(Error::InvalidArgument("enumeration data dimensions differ".into()));
    }
    let scale = f
        .iter()
        .chain(lower.iter().chain(upper).filter(|b| b.is_finite()))
        .fold(1.0f64, |m, v| m.max(v.abs()));
    let tol = 1e-11 * scale;

    let mut best: Option<EnumeratedSolution> = None;
    let mut passing = 0;
    let mut activity = vec![Activity::Free; n];
    let total = 3usize.pow(n as u32);
    'assign: for code in 0..total {
        let mut c = code;
        for slot in activity.iter_mut() {
            *slot = match c % 3 {
                0 => Activity::Free,
                1 => Activity::Lower,
                _ => Activity::Upper,
            };
            c /= 3;
        }
        let mut y = vec![0.0; n];
        for i in 0..n {
            match activity[i] {
                Activity::Lower if lower[i].is_finite() => y[i] = lower[i],
                Activity::Upper if upper[i].is_finite() => y[i] = upper[i],
                Activity::Free => {}
                _ => continue 'assign,
            }
        }
        let free: Vec<usize> = (0..n).filter(|&i| activity[i] == Activity::Free).collect();
        if !free.is_empty() {
            let k = free.len();
            let sub = DMatrix::from_fn(k, k, |r, c| a[(free[r], free[c])]);
            let rhs: Vec<f64> = free
                .iter()
                .map(|&i| f[i] - (0..n).filter(|&j| activity[j] != Activity::Free).map(|j| a[(i, j)] * y[j]).sum::<f64>())
                .collect();
            let x = dense_solve(&sub, &rhs)?;
            for (&i, v) in free.iter().zip(x) {
                y[i] = v;
            }
        }
        let ay = a * DVector::from_column_slice(&y);
        let lambda: Vec<f64> = (0..n).map(|i| f[i] - ay[i]).collect();
        let ok = (0..n).all(|i| {
            let feasible = y[i] >= lower[i] - tol && y[i] <= upper[i] + tol;
            let sign = match activity[i] {
                Activity::Lower => lambda[i] <= tol,
                Activity::Upper => lambda[i] >= -tol,
                Activity::Free => true,
            };
            feasible && sign
        });
        if !ok {
            continue;
        }
        passing += 1;
        let active = activity.iter().filter(|&&s| s != Activity::Free).count();
        let better = best.as_ref().is_none_or(|b| {
            active < b.activity.iter().filter(|&&s| s != Activity::Free).count()
        });
        if better {
            let mut lambda = lambda;
            for &i in &free {
                lambda[i] = 0.0;
            }
            best = Some(EnumeratedSolution {
                y,
                lambda,
                activity: activity.clone(),
                passing: 0,
            });
        }
    }
    let mut sol = best.ok_or_else(|| Error::InvalidInput("no assignment satisfies the KKT system".into()))?;
    sol.passing = passing;
    Ok(sol)
}

/// Projector onto the span of the concatenated generators, from an SVD in
/// Gram-orthonormal coordinates.
pub fn dense_sum_projector(
    space: &InnerProductSpace,
    gens1: &DenseMatrix,
    gens2: &DenseMatrix,
    rank_tol: f64,
) -> DenseMatrix {
    let n = space.dim();
    let k = gens1.ncols() + gens2.ncols();
    if k == 0 {
        return DMatrix::zeros(n, n);
    }
    let mut c = DMatrix::zeros(n, k);
    c.view_mut((0, 0), (n, gens1.ncols())).copy_from(gens1);
    c.view_mut((0, gens1.ncols()), (n, gens2.ncols())).copy_from(gens2);
    let l = space.gram().clone().cholesky().expect("gram is SPD").l();
    let svd = (l.transpose() * c).svd(true, false);
    let u = svd.u.expect("requested");
    let keep: Vec<usize> = (0..svd.singular_values.len())
        .filter(|&i| svd.singular_values[i] > rank_tol)
        .collect();
    let ur = DMatrix::from_fn(n, keep.len(), |r, j| u[(r, keep[j])]);
    // P = L⁻ᵀ U Uᵀ Lᵀ
    let lt_inv = l.transpose().try_inverse().expect("triangular factor is invertible");
    lt_inv * &ur * ur.transpose() * l.transpose()
}

/// `(F(u + t h) − F(u)) / t`
pub fn fd_directional_derivative(
    map: impl Fn(&[f64]) -> Result<Vec<f64>>,
    u: &[f64],
    h: &[f64],
    t: f64,
) -> Result<Vec<f64>> {
    if !(t != 0.0 && t.is_finite()) {
        return Err(Error::InvalidArgument(format!("difference step must be finite and nonzero, got {t}")));
    }
    let base = map(u)?;
    let shifted: Vec<f64> = u.iter().zip(h).map(|(a, b)| a + t * b).collect();
    let moved = map(&shifted)?;
    Ok(moved.iter().zip(&base).map(|(a, b)| (a - b) / t).collect())
}

#[derive(Debug, Clone)]
pub struct GradientRun {
    pub u: Vec<f64>,
    pub objective: f64,
    pub steps: usize,
    /// False if the step budget ran out first.
    pub converged: bool,
}

/// Projected gradient descent on the reduced objective
/// `J(u) = ½(Su − y_D)ᵀM(Su − y_D) + ν/2 uᵀAu`, `S = A⁻¹M`, using the
/// Euclidean gradient, step `rate / L` and componentwise clamping. Stops
/// once an update moves no component by more than `1e-13 · max(1, ‖u‖∞)`.
pub fn projected_gradient_control(prob: &ControlProblem, max_steps: usize, rate: f64) -> Result<GradientRun> {
    if !(rate > 0.0 && rate <= 1.0) {
        return Err(Error::InvalidArgument(format!("rate must lie in (0, 1], got {rate}")));
    }
    let (hess, lin) = reduced_quadratic(prob)?;
    let lip = hess.clone().symmetric_eigen().eigenvalues.max();
    let step = rate / lip;
    let n = prob.dim();
    let (lo, up) = (prob.lower(), prob.upper());
    let mut u = DVector::from_fn(n, |i, _| 0.0f64.clamp(lo[i], up[i]));
    let mut converged = false;
    let mut steps = 0;
    while steps < max_steps {
        steps += 1;
        let g = &hess * &u - &lin;
        let next = DVector::from_fn(n, |i, _| (u[i] - step * g[i]).clamp(lo[i], up[i]));
        let moved = (&next - &u).amax();
        u = next;
        if moved <= 1e-13 * u.amax().max(1.0) {
            converged = true;
            break;
        }
    }
    let u = u.as_slice().to_vec();
    Ok(GradientRun {
        objective: prob.objective(&u)?,
        u,
        steps,
        converged,
    })
}

/// Minimizer of the reduced objective without bounds, by a dense solve.
pub fn unconstrained_control(prob: &ControlProblem) -> Result<Vec<f64>> {
    let (hess, lin) = reduced_quadratic(prob)?;
    dense_solve(&hess, lin.as_slice())
}

// J(u) = ½uᵀHu − bᵀu + const with H = SᵀMS + νA, b = SᵀM y_D.
fn reduced_quadratic(prob: &ControlProblem) -> Result<(DenseMatrix, DVector<f64>)> {
    let a = dense(prob.stiffness());
    let m = dense(prob.mass());
    let s = a.clone().lu().solve(&m).ok_or_else(|| Error::NotSpd("dense stiffness".into()))?;
    let sm = s.transpose() * &m;
    let hess = &sm * &s + &a * prob.nu();
    let hess = (&hess + hess.transpose()) * 0.5;
    let lin = sm * DVector::from_column_slice(prob.target());
    Ok((hess, lin))
}

#[derive(Debug, Clone, PartialEq)]
pub struct Fixture {
    pub seed: u64,
    pub generator: String,
    pub values: Vec<f64>,
}

/// Fixture text: a version line, `seed` and `generator` header lines, then
/// one value per line.
pub fn format_fixture(fixture: &Fixture) -> String {
    let mut out = String::new();
    writeln!(out, "# {FIXTURE_VERSION}").unwrap();
    writeln!(out, "# seed: {}", fixture.seed).unwrap();
    writeln!(out, "# generator: {}", fixture.generator).unwrap();
    for v in &fixture.values {
        writeln!(out, "{v:.16e}").unwrap();
    }
    out
}

pub fn parse_fixture(text: &str) -> Result<Fixture> {
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, l)) if l.trim() == format!("# {FIXTURE_VERSION}") => {}
        _ => {
            return Err(Error::Parse {
                line: 1,
                msg: format!("expected '# {FIXTURE_VERSION}'"),
            })
        }
    }
    let mut seed = None;
    let mut generator = None;
    let mut values = Vec::new();
    for (idx, raw) in lines {
        let line_no = idx + 1;
        let line = raw.trim();
        if line.is_empty() {
            continue;
        }
        if let Some(header) = line.strip_prefix('#') {
            if !values.is_empty() {
                return Err(Error::Parse {
                    line: line_no,
                    msg: "header line after values".into(),
                });
            }
            let (key, value) = header.split_once(':').ok_or_else(|| Error::Parse {
                line: line_no,
                msg: "header lines look like '# key: value'".into(),
            })?;
            let value = value.trim();
            match key.trim() {
                "seed" => {
                    let s = value.parse::<u64>().map_err(|e| Error::Parse {
                        line: line_no,
                        msg: format!("seed: {e}"),
                    })?;
                    if seed.replace(s).is_some() {
                        return Err(Error::Parse {
                            line: line_no,
                            msg: "duplicate seed".into(),
                        });
                    }
                }
                "generator" => {
                    if value.is_empty() {
                        return Err(Error::Parse {
                            line: line_no,
                            msg: "empty generator".into(),
                        });
                    }
                    if generator.replace(value.to_string()).is_some() {
                        return Err(Error::Parse {
                            line: line_no,
                            msg: "duplicate generator".into(),
                        });
                    }
                }
                other => {
                    return Err(Error::Parse {
                        line: line_no,
                        msg: format!("unknown header key '{other}'"),
                    })
                }
            }
            continue;
        }
        let v: f64 = line.parse().map_err(|e| Error::Parse {
            line: line_no,
            msg: format!("'{line}': {e}"),
        })?;
        if !v.is_finite() {
            return Err(Error::Parse {
                line: line_no,
                msg: "values must be finite".into(),
            });
        }
        values.push(v);
    }
    Ok(Fixture {
        seed: seed.ok_or_else(|| Error::Parse {
            line: 0,
            msg: "missing seed".into(),
        })?,
        generator: generator.ok_or_else(|| Error::Parse {
            line: 0,
            msg: "missing generator".into(),
        })?,
        values,
    })
}
