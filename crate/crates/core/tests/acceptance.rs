//! Acceptance criteria, one line each. Run with
//! `cargo test -p obstakit --test acceptance`.

use std::process::ExitCode;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use obstakit::control::{coercivity_gap, ControlOptions, ControlProblem, ControlRun};
use obstakit::mesh::{NodalField, StructuredTriMesh};
use obstakit::obstacle::{
    cross_check_decomposition, newton_inactive_set, semismoothness_probe, solve_bilateral,
    InactiveSetStrategy, ObstacleProblem, PdasOptions,
};
use obstakit::operators::{dual_norm, energy_norm, norm_inf, DualVector};
use obstakit::oracles::{chain_stiffness, dense, enumerate_obstacle, Activity};
use obstakit::verify::{bridge_suite, subspace_suite};

const WIDTHS: [usize; 4] = [32, 64, 128, 256];

struct Line {
    id: usize,
    name: &'static str,
    pass: bool,
    detail: String,
}

fn benchmark_run(n: usize, lumped: bool) -> (ControlProblem, ControlRun) {
    let mesh = StructuredTriMesh::friedrichs_keller(n).unwrap();
    let prob = ControlProblem::benchmark(&mesh, lumped).unwrap();
    let run = prob
        .solve(&NodalField::zeros(prob.dim()), &ControlOptions::default())
        .unwrap();
    (prob, run)
}

fn mesh_independence(runs: &[(usize, ControlProblem, ControlRun)], secs: f64) -> Line {
    let counts: Vec<usize> = runs.iter().map(|(_, _, r)| r.newton_iterations()).collect();
    let lumped: Vec<usize> = WIDTHS
        .iter()
        .take(2)
        .map(|&n| benchmark_run(n, true).1.newton_iterations())
        .collect();
    let constant = counts.windows(2).all(|w| w[0] == w[1]);
    let verified = runs
        .iter()
        .all(|(_, _, r)| r.converged && r.verification.is_some_and(|v| v.passes(1e-12)));
    Line {
        id: 1,
        name: "mesh-independent Newton iteration count",
        pass: constant && counts[0] == 2 && verified && secs <= 120.0,
        detail: format!(
            "h = 1/32..1/256 iterations {counts:?} (consistent mass, steps before the check passes); \
             lumped mass at 1/32, 1/64: {lumped:?}; {secs:.1} s"
        ),
    }
}

fn saturation(runs: &[(usize, ControlProblem, ControlRun)]) -> Line {
    let (_, prob, run) = runs.iter().find(|(n, _, _)| *n == 64).unwrap();
    let dof = prob.dim() as f64;
    let up = run.u_bar.iter().filter(|&&u| u == 5.0).count() as f64 / dof;
    let lo = run.u_bar.iter().filter(|&&u| u == -5.0).count() as f64 / dof;
    let obst = run.final_obstacle();
    let lam = obst
        .inactive
        .indices()
        .iter()
        .fold(0.0f64, |m, &i| m.max(obst.lambda[i].abs()));
    Line {
        id: 2,
        name: "control saturation and multiplier support",
        pass: up >= 0.01 && lo >= 0.01 && lam <= 1e-9,
        detail: format!(
            "h = 1/64: u = 5 on {:.1}%, u = -5 on {:.1}% of nodes, max |lambda| on inactive set {lam:.1e}",
            100.0 * up,
            100.0 * lo
        ),
    }
}

fn subspaces() -> Line {
    let t = Instant::now();
    let rep = subspace_suite(20_240_601, 120, 40).unwrap();
    let secs = t.elapsed().as_secs_f64();
    Line {
        id: 3,
        name: "angled-subspace identities",
        pass: rep.passes(1e-9) && secs <= 60.0,
        detail: format!(
            "{} random instances, dim <= 40, max deviation {:.1e}, degenerate pair rejected: {}; {secs:.1} s",
            rep.trials,
            rep.max_deviation(),
            rep.degenerate_rejected
        ),
    }
}

/// Random 1D instance; with `biactive`, built from a prescribed solution
/// that touches a bound with zero multiplier at some node.
fn chain_instance(rng: &mut ChaCha8Rng, biactive: bool) -> (usize, Vec<f64>, Vec<f64>, Vec<f64>) {
    let n = rng.random_range(1..=8);
    let a = dense(&chain_stiffness(n).unwrap());
    let kind = rng.random_range(0..3);
    let mut lower: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..-0.1)).collect();
    let mut upper: Vec<f64> = (0..n).map(|_| rng.random_range(0.1..1.0)).collect();
    if kind == 1 {
        lower.iter_mut().for_each(|v| *v = f64::NEG_INFINITY);
    } else if kind == 2 {
        upper.iter_mut().for_each(|v| *v = f64::INFINITY);
    }
    let f = if biactive {
        let mut y = vec![0.0; n];
        let mut lam = vec![0.0; n];
        for i in 0..n {
            let (lo, up) = (lower[i], upper[i]);
            match rng.random_range(0..4) {
                0 if lo.is_finite() => {
                    y[i] = lo;
                    lam[i] = -rng.random_range(0.1..2.0);
                }
                1 if up.is_finite() => {
                    y[i] = up;
                    lam[i] = rng.random_range(0.1..2.0);
                }
                2 => y[i] = if lo.is_finite() { lo } else { up },
                _ => y[i] = rng.random_range(-0.09..0.09),
            }
        }
        let ay = &a * nalgebra::DVector::from_column_slice(&y);
        (0..n).map(|i| ay[i] + lam[i]).collect()
    } else {
        (0..n).map(|_| rng.random_range(-3.0..3.0)).collect()
    };
    (n, f, lower, upper)
}

fn obstacle_oracle() -> Line {
    let t = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let (mut worst, mut mismatches, mut biactive_nodes, mut count) = (0.0f64, 0, 0, 0);
    for k in 0..240 {
        let (n, f, lower, upper) = chain_instance(&mut rng, k % 3 == 0);
        let a = chain_stiffness(n).unwrap();
        let oracle = enumerate_obstacle(&dense(&a), &f, &lower, &upper).unwrap();
        let prob = ObstacleProblem::new(&a, DualVector::new(f), lower, upper).unwrap();
        let sol = solve_bilateral(&prob, &PdasOptions::default()).unwrap();
        for i in 0..n {
            worst = worst.max((sol.y[i] - oracle.y[i]).abs());
            let expected = match oracle.activity[i] {
                Activity::Lower => sol.active_lower.contains(i),
                Activity::Upper => sol.active_upper.contains(i),
                Activity::Free => sol.inactive.contains(i),
            };
            if !expected {
                mismatches += 1;
            }
        }
        if oracle.passing > 1 {
            biactive_nodes += 1;
        }
        count += 1;
    }
    let secs = t.elapsed().as_secs_f64();
    Line {
        id: 4,
        name: "PDAS agrees with 3^n active-set enumeration",
        pass: worst <= 1e-10 && mismatches == 0 && secs <= 60.0,
        detail: format!(
            "{count} instances (n <= 8, {biactive_nodes} with biactive nodes), max state error {worst:.1e}, \
             active-set mismatches {mismatches}; {secs:.1} s"
        ),
    }
}

fn lipschitz() -> Line {
    let mesh = StructuredTriMesh::friedrichs_keller(16).unwrap();
    let a = mesh.assemble_stiffness();
    let m = mesh.assemble_mass(false);
    let n = a.dim();
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let (mut violations, mut worst) = (0, f64::NEG_INFINITY);
    for _ in 0..100 {
        let lo = -rng.random_range(0.01..0.1);
        let up = rng.random_range(0.01..0.1);
        let mut load = || {
            let v: Vec<f64> = (0..n).map(|_| rng.random_range(-10.0..10.0)).collect();
            m.load(&NodalField::new(v))
        };
        let (f1, f2) = (load(), load());
        let s = |f: &DualVector| {
            let p = ObstacleProblem::new(&a, f.clone(), vec![lo; n], vec![up; n]).unwrap();
            solve_bilateral(&p, &PdasOptions::default()).unwrap().y
        };
        let (y1, y2) = (s(&f1), s(&f2));
        let dy: Vec<f64> = y1.iter().zip(y2.iter()).map(|(a, b)| a - b).collect();
        let df = DualVector::new(f1.iter().zip(f2.iter()).map(|(a, b)| a - b).collect());
        let gap = energy_norm(&a, &dy) - dual_norm(&a, &df).unwrap();
        worst = worst.max(gap);
        if gap > 1e-12 {
            violations += 1;
        }
    }
    Line {
        id: 5,
        name: "obstacle solution map is 1-Lipschitz from dual to energy norm",
        pass: violations == 0,
        detail: format!("100 load pairs at h = 1/16, violations {violations}, max excess {worst:.1e}"),
    }
}

fn coercivity() -> Line {
    let (prob, run) = benchmark_run(32, false);
    let set = &run.iterations[0].inactive;
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    let (mut violations, mut worst) = (0, f64::INFINITY);
    for _ in 0..100 {
        let z: Vec<f64> = (0..prob.dim()).map(|_| rng.random_range(-1.0..1.0)).collect();
        let zz: f64 = z.iter().map(|v| v * v).sum();
        let gap = coercivity_gap(&prob, set, &z).unwrap();
        worst = worst.min(gap / zz);
        if gap < -1e-12 * zz {
            violations += 1;
        }
    }
    Line {
        id: 6,
        name: "Newton matrix dominates the mass matrix",
        pass: violations == 0,
        detail: format!(
            "100 directions at h = 1/32 on the first inactive set (|O| = {}), violations {violations}, \
             min (z'MGz - z'Mz)/|z|^2 = {worst:.2e}",
            set.len()
        ),
    }
}

fn semismoothness() -> Line {
    let mesh = StructuredTriMesh::friedrichs_keller(32).unwrap();
    let prob = ControlProblem::benchmark(&mesh, false).unwrap();
    let m = prob.mass();
    let z0 = prob
        .inverse_laplacian(prob.target())
        .unwrap()
        .iter()
        .map(|v| v / prob.nu())
        .collect::<Vec<_>>();
    let obst = prob.obstacle_problem(&z0).unwrap();
    let opts = PdasOptions::default();
    let base = solve_bilateral(&obst, &opts).unwrap();
    let scale = norm_inf(&z0);
    let ts = [1e-1, 1e-2, 1e-3, 1e-4, 1e-5, 1e-6];
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    let mut pass = true;
    let mut ratios = Vec::new();
    for _ in 0..5 {
        let h: Vec<f64> = (0..prob.dim()).map(|_| scale * rng.random_range(-1.0..1.0)).collect();
        let rows = semismoothness_probe(&obst, &base, m, &NodalField::new(h), &ts, &opts).unwrap();
        let r: Vec<f64> = rows.iter().map(|row| row.remainder).collect();
        let monotone = r[2..].windows(2).all(|w| w[1] <= w[0]);
        let ratio = r[5] / r[0];
        pass &= monotone && r[0] > 0.0 && ratio <= 1e-3;
        ratios.push(ratio);
    }
    Line {
        id: 7,
        name: "Newton-derivative remainder decays",
        pass,
        detail: format!(
            "5 directions at h = 1/32, t = 1e-1..1e-6, r(1e-6)/r(1e-1) = {}",
            ratios.iter().map(|r| format!("{r:.1e}")).collect::<Vec<_>>().join(", ")
        ),
    }
}

fn bridge() -> Line {
    let s = bridge_suite(23, 8, 20).unwrap();
    Line {
        id: 8,
        name: "projection onto W(O1) + W(O2) matches restricted Poisson map",
        pass: s.pairs == 20 && s.max_deviation <= 1e-9,
        detail: format!(
            "20 admissible pairs at h = 1/8, max deviation {:.1e}, max c0 {:.4}",
            s.max_deviation, s.max_c0
        ),
    }
}

fn decomposition(runs: &[(usize, ControlProblem, ControlRun)]) -> Line {
    let opts = PdasOptions::default();
    let mut worst = 0.0f64;
    let mut checked = 0;
    for (_, prob, run) in runs {
        for it in &run.iterations {
            let obst = prob.obstacle_problem(&it.z).unwrap();
            worst = worst.max(cross_check_decomposition(&it.obstacle, &obst, &opts).unwrap().max());
            // the Newton set is admissible at every iterate
            newton_inactive_set(&it.obstacle, &obst, &InactiveSetStrategy::Custom(it.inactive.clone()))
                .unwrap();
            checked += 1;
        }
    }
    Line {
        id: 9,
        name: "multiplier decomposition reproduces the state",
        pass: worst <= 1e-9,
        detail: format!("{checked} iterates over h = 1/32..1/256, max deviation {worst:.1e}"),
    }
}

fn main() -> ExitCode {
    let t = Instant::now();
    let runs: Vec<(usize, ControlProblem, ControlRun)> = WIDTHS
        .iter()
        .map(|&n| {
            let (p, r) = benchmark_run(n, false);
            (n, p, r)
        })
        .collect();
    let sweep_secs = t.elapsed().as_secs_f64();

    let lines = vec![
        mesh_independence(&runs, sweep_secs),
        saturation(&runs),
        subspaces(),
        obstacle_oracle(),
        lipschitz(),
        coercivity(),
        semismoothness(),
        bridge(),
        decomposition(&runs),
    ];
    let mut failed = 0;
    for l in &lines {
        println!(
            "criterion {}: {} [{}] {}",
            l.id,
            if l.pass { "PASS" } else { "FAIL" },
            l.name,
            l.detail
        );
        failed += usize::from(!l.pass);
    }
    println!("{} of {} criteria passed", lines.len() - failed, lines.len());
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
