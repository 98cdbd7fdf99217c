//! Acceptance suite. Each test prints one `criterion N: PASS|FAIL` line.

use std::sync::OnceLock;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use privlqr::allocator::{
    incentive_weights, solve_coefficients, solve_incentives, SolverOptions, SourceNoise,
};
use privlqr::harness::{
    monte_carlo_regret, run_sweep, write_sweep_csv, Experiment, ExperimentConfig, Method, Solved,
};
use privlqr::lqr::{compile_lqr, regret_quadratic, regret_rollout, LqrSystem};
use privlqr::privacy::{
    laplace_variance, laplace_variance_derivative, privacy_budget, sample_laplace, PrivacyProfile,
};
use privlqr::rng::substream;

fn default_experiment() -> &'static Experiment {
    static EXP: OnceLock<Experiment> = OnceLock::new();
    EXP.get_or_init(|| Experiment::build(&ExperimentConfig::default_arima()).unwrap())
}

fn solved_sweep() -> &'static Vec<(Solved, Solved)> {
    static SWEEP: OnceLock<Vec<(Solved, Solved)>> = OnceLock::new();
    SWEEP.get_or_init(|| {
        let exp = default_experiment();
        exp.config
            .sweep
            .iter()
            .map(|&rho| (exp.solve(rho, Method::Acs).unwrap(), exp.solve(rho, Method::Uniform).unwrap()))
            .collect()
    })
}

fn report(n: u32, ok: bool, detail: &str) {
    println!("criterion {n}: {} ({detail})", if ok { "PASS" } else { "FAIL" });
}

fn random_matrix(rng: &mut ChaCha8Rng, r: usize, c: usize) -> DMatrix<f64> {
    DMatrix::from_fn(r, c, |_, _| rng.random_range(-1.0..1.0))
}

fn random_system(rng: &mut ChaCha8Rng) -> LqrSystem {
    let n = rng.random_range(1..=4);
    let m = rng.random_range(1..=4);
    let p = rng.random_range(1..=4);
    let horizon = rng.random_range(1..=8);
    let a = random_matrix(rng, n, n) * 0.6;
    let b = random_matrix(rng, n, m);
    let c = random_matrix(rng, n, p);
    let gq = random_matrix(rng, n, n);
    let gr = random_matrix(rng, m, m);
    let q = &gq * gq.transpose() + DMatrix::identity(n, n) * 0.1;
    let r = &gr * gr.transpose() + DMatrix::identity(m, m) * 0.1;
    let x0 = random_matrix(rng, n, 1).column(0).into_owned();
    LqrSystem::new(a, b, c, q, r, horizon, x0).unwrap()
}

#[test]
fn criterion_1_regret_oracle_equivalence() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let systems = 128;
    let mut worst: f64 = 0.0;
    for _ in 0..systems {
        let sys = random_system(&mut rng);
        let compiled = compile_lqr(&sys).unwrap();
        let len = compiled.series_len();
        for _ in 0..4 {
            let truth = DVector::from_fn(len, |_, _| rng.random_range(-2.0..2.0));
            let forecast = &truth + DVector::from_fn(len, |_, _| rng.random_range(-1.0..1.0));
            let quad = regret_quadratic(&compiled, &forecast, &truth).unwrap();
            let roll = regret_rollout(&sys, &compiled, &sys.x0, &forecast, &truth).unwrap();
            worst = worst.max((quad - roll).abs() / roll.abs().max(1e-300));
        }
    }
    let ok = worst <= 1e-8;
    report(1, ok, &format!("{systems} systems, max relative gap {worst:.2e}"));
    assert!(ok);
}

#[test]
fn criterion_2_analytic_matches_monte_carlo() {
    let exp = default_experiment();
    let trials = 100_000;
    let mut worst: f64 = 0.0;
    let mut lines = Vec::new();
    for (acs, uniform) in solved_sweep() {
        for s in [acs, uniform] {
            let stats = monte_carlo_regret(exp, &s.allocation, trials, exp.config.base_seed, 4).unwrap();
            let z = (stats.mean - s.expected_regret).abs() / stats.std_error();
            worst = worst.max(z);
            lines.push(format!(
                "  rho={:<5} {:<8} analytic {:.6e} empirical {:.6e} +- {:.2e} z={z:.2}",
                s.rho_total,
                s.method.to_string(),
                s.expected_regret,
                stats.mean,
                stats.std_error()
            ));
        }
    }
    let ok = worst <= 3.0;
    report(2, ok, &format!("{trials} trials per point, max |z| {worst:.2}"));
    for l in lines {
        println!("{l}");
    }
    assert!(ok);
}

#[test]
fn criterion_3_acs_dominates_uniform() {
    let mut ok = true;
    let mut ratios = Vec::new();
    for (acs, uniform) in solved_sweep() {
        let rep = acs.report.as_ref().unwrap();
        let monotone = rep.objective_trace.windows(2).all(|w| w[1] <= w[0]);
        let dominates = acs.expected_regret <= uniform.expected_regret;
        ok &= monotone && dominates && acs.converged;
        ratios.push(format!("{}: {:.3}", acs.rho_total, uniform.expected_regret / acs.expected_regret));
    }
    report(3, ok, &format!("Uniform/ACS ratio per sweep point {}", ratios.join(", ")));
    assert!(ok);
}

fn reference_profiles() -> [PrivacyProfile; 3] {
    [
        PrivacyProfile::new(1.0, 4.0, 1.5, 0.3).unwrap(),
        PrivacyProfile::new(1.0, 8.0, 2.5, 0.6).unwrap(),
        PrivacyProfile::new(1.0, 12.0, 3.5, 0.9).unwrap(),
    ]
}

fn simplex3(steps: usize) -> Vec<[f64; 3]> {
    let h = 1.0 / steps as f64;
    (0..=steps)
        .flat_map(|i| (0..=steps - i).map(move |j| [i as f64 * h, j as f64 * h, (steps - i - j) as f64 * h]))
        .collect()
}

#[test]
fn criterion_4_subproblems_match_oracles() {
    let opts = SolverOptions::default();
    let profiles = reference_profiles();
    let mut failures = Vec::new();

    // pT = 1: inverse-variance weights are optimal.
    let psi1 = DMatrix::from_element(1, 1, 3.0);
    let sig = [0.05, 0.2, 0.01];
    let srcs1: Vec<SourceNoise> = profiles
        .iter()
        .zip(sig)
        .map(|(p, s)| SourceNoise { privacy: *p, sigma: DMatrix::from_element(1, 1, s) })
        .collect();
    let rho = [0.1, 0.4, 0.5];
    let h: Vec<f64> = srcs1
        .iter()
        .zip(rho)
        .map(|(s, r)| 3.0 * (s.sigma[(0, 0)] + laplace_variance(r, &s.privacy).unwrap()))
        .collect();
    let closed = 1.0 / h.iter().map(|x| 1.0 / x).sum::<f64>();
    let init1 = vec![DVector::from_element(1, 1.0 / 3.0); 3];
    let sol = solve_coefficients(&psi1, &srcs1, &rho, &init1, &opts).unwrap();
    if (sol.objective - closed).abs() > 1e-12 * closed || sol.kkt_residual > 1e-6 {
        failures.push(format!("closed form {closed} vs {}", sol.objective));
    }

    // pT = 2, three sources: coefficient grid.
    let psi = DMatrix::from_row_slice(2, 2, &[2.0, 0.7, 0.7, 1.0]);
    let srcs: Vec<SourceNoise> = profiles
        .iter()
        .zip([
            DMatrix::from_row_slice(2, 2, &[0.05, 0.04, 0.04, 0.06]),
            DMatrix::from_row_slice(2, 2, &[0.4, -0.1, -0.1, 0.2]),
            DMatrix::from_row_slice(2, 2, &[0.9, 0.5, 0.5, 0.9]),
        ])
        .map(|(p, s)| SourceNoise { privacy: *p, sigma: s })
        .collect();
    let rho = [0.2, 0.5, 1.3];
    let init = vec![DVector::from_element(2, 1.0 / 3.0); 3];
    let sol = solve_coefficients(&psi, &srcs, &rho, &init, &opts).unwrap();
    let steps = 40;
    let grid = simplex3(steps);
    let mut best = f64::INFINITY;
    let mut coeffs = vec![DVector::zeros(2); 3];
    for g0 in &grid {
        for g1 in &grid {
            for i in 0..3 {
                coeffs[i][0] = g0[i];
                coeffs[i][1] = g1[i];
            }
            let alloc = privlqr::allocator::Allocation { coeffs: coeffs.clone(), incentives: rho.to_vec() };
            best = best.min(privlqr::allocator::expected_regret(&psi, &srcs, &alloc).unwrap());
        }
    }
    // Grid resolution in objective: the optimum is within one step of a grid point.
    let resolution = 1e-2 * best;
    if sol.objective > best + 1e-12 || best - sol.objective > resolution || sol.kkt_residual > 1e-6 {
        failures.push(format!("coefficient grid {best} vs {}", sol.objective));
    }

    // pT = 2, three sources: incentive grid over the ρ simplex.
    let total = 1.0;
    let weights = incentive_weights(&psi, &sol.value);
    let lap_obj = |r: &[f64]| -> f64 {
        weights.iter().zip(&profiles).zip(r).map(|((a, p), &x)| a * laplace_variance(x, p).unwrap()).sum()
    };
    let fixed = sol.objective - lap_obj(&rho);
    let isol = solve_incentives(&psi, &srcs, &sol.value, total, &[total / 3.0; 3], &opts).unwrap();
    let steps = 400;
    let grid_best = simplex3(steps)
        .iter()
        .map(|g| lap_obj(&[g[0] * total, g[1] * total, g[2] * total]))
        .fold(f64::INFINITY, f64::min)
        + fixed;
    let slope = weights
        .iter()
        .zip(&profiles)
        .map(|(a, p)| a * laplace_variance_derivative(0.0, p).abs())
        .fold(0.0, f64::max);
    let resolution = 2.0 * slope * total / steps as f64;
    if isol.objective > grid_best + 1e-12 || grid_best - isol.objective > resolution || isol.kkt_residual > 1e-6 {
        failures.push(format!("incentive grid {grid_best} vs {}", isol.objective));
    }

    // Every configured instance.
    let mut worst_kkt: f64 = 0.0;
    for (acs, _) in solved_sweep() {
        worst_kkt = worst_kkt.max(acs.report.as_ref().unwrap().max_kkt_residual);
    }
    if worst_kkt > 1e-6 {
        failures.push(format!("configured KKT residual {worst_kkt:e}"));
    }

    let ok = failures.is_empty();
    let detail = if ok {
        format!("closed form, coefficient and incentive grids agree; configured max KKT {worst_kkt:.2e}")
    } else {
        failures.join("; ")
    };
    report(4, ok, &detail);
    assert!(ok);
}

#[test]
fn criterion_5_privacy_mechanism_statistics() {
    let samples = 1_000_000;
    let grid: Vec<f64> = (0..=2000).map(|i| i as f64 * 0.005).collect();
    let mut failures = Vec::new();
    let mut worst_var: f64 = 0.0;
    for (i, p) in reference_profiles().iter().enumerate() {
        for (k, rho) in [0.0, 0.5, 2.0].into_iter().enumerate() {
            let eps = privacy_budget(rho, p).unwrap();
            let mut rng = substream(99, i as u64, k as u64);
            let xs = sample_laplace(&mut rng, p.sen / eps, samples).unwrap();
            let mean = xs.mean();
            let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (samples - 1) as f64;
            let rel = (var / laplace_variance(rho, p).unwrap() - 1.0).abs();
            worst_var = worst_var.max(rel);
        }
        let eps: Vec<f64> = grid.iter().map(|&r| privacy_budget(r, p).unwrap()).collect();
        if !eps.iter().all(|&e| e > 0.0 && e < p.alpha) {
            failures.push(format!("source {i}: budget leaves (0, alpha)"));
        }
        let var: Vec<f64> = grid.iter().map(|&r| laplace_variance(r, p).unwrap()).collect();
        if !var.windows(2).all(|w| w[1] < w[0]) {
            failures.push(format!("source {i}: variance not decreasing"));
        }
        if !var.windows(3).all(|w| w[1] <= 0.5 * (w[0] + w[2]) * (1.0 + 1e-14)) {
            failures.push(format!("source {i}: variance not convex"));
        }
    }
    if worst_var > 0.02 {
        failures.push(format!("Laplace variance off by {:.2}%", 100.0 * worst_var));
    }
    let ok = failures.is_empty();
    let detail = if ok {
        format!("max Laplace variance error {:.3}% at 10^6 samples; budget, monotonicity and convexity hold", 100.0 * worst_var)
    } else {
        failures.join("; ")
    };
    report(5, ok, &detail);
    assert!(ok);
}

#[test]
fn criterion_6_regret_curve_shape() {
    let exp = default_experiment();
    let sweep = solved_sweep();
    let floor = exp.floor_regret().unwrap();
    let regrets: Vec<f64> = sweep.iter().map(|(a, _)| a.expected_regret).collect();
    let gaps: Vec<f64> = regrets.iter().map(|r| r - floor).collect();

    let non_increasing = regrets.windows(2).all(|w| w[1] <= w[0]);
    let toward_floor = gaps.iter().all(|&g| g >= -1e-9)
        && gaps.windows(2).all(|w| w[1] <= w[0])
        && gaps[gaps.len() - 1] <= 0.05 * gaps[0];

    let trace: Vec<f64> = exp.sources.iter().map(|s| s.sigma.trace()).collect();
    let most_accurate = argmin(&trace);
    let widest_alpha = argmax(&exp.sources.iter().map(|s| s.privacy.alpha).collect::<Vec<_>>());
    let small = &sweep[0].0;
    let large = &sweep[sweep.len() - 1].0;
    let small_leader = argmax(&small.allocation.mean_coefficients());
    let large_leader = argmax(&large.allocation.mean_coefficients());
    let small_ok = small_leader == most_accurate;
    let large_ok = large_leader == widest_alpha;

    let ok = non_increasing && toward_floor && small_ok && large_ok;
    report(
        6,
        ok,
        &format!(
            "non-increasing {non_increasing}; gap to floor {floor:.4e} shrinks {:.3e} -> {:.3e}: {toward_floor}; \
             smallest tr(Sigma) source {most_accurate}, leader at rho={} is {small_leader}: {small_ok}; \
             largest alpha source {widest_alpha}, leader at rho={} is {large_leader}: {large_ok}",
            gaps[0],
            gaps[gaps.len() - 1],
            small.rho_total,
            large.rho_total,
        ),
    );
    println!("  tr(Sigma) per source: {trace:?}");
    for (acs, _) in sweep {
        println!(
            "  rho={:<5} regret {:.4e} mean c {:.3?} rho_i {:.3?}",
            acs.rho_total,
            acs.expected_regret,
            acs.allocation.mean_coefficients(),
            acs.allocation.incentives
        );
    }
    assert!(ok);
}

fn argmax(xs: &[f64]) -> usize {
    (0..xs.len()).fold(0, |b, i| if xs[i] > xs[b] { i } else { b })
}

fn argmin(xs: &[f64]) -> usize {
    (0..xs.len()).fold(0, |b, i| if xs[i] < xs[b] { i } else { b })
}

#[test]
fn criterion_7_csv_is_identical_across_worker_counts() {
    let mut cfg = ExperimentConfig::default_arima();
    cfg.trials = 3000;
    let exp = Experiment::build(&cfg).unwrap();
    let csv_for = |workers: usize| {
        let results = run_sweep(&exp, cfg.base_seed, workers).unwrap();
        let mut buf = Vec::new();
        write_sweep_csv(&mut buf, &results).unwrap();
        buf
    };
    let reference = csv_for(1);
    let rebuilt = Experiment::build(&cfg).unwrap();
    let again = {
        let results = run_sweep(&rebuilt, cfg.base_seed, 1).unwrap();
        let mut buf = Vec::new();
        write_sweep_csv(&mut buf, &results).unwrap();
        buf
    };
    let mut ok = again == reference;
    for workers in [2, 3, 8] {
        ok &= csv_for(workers) == reference;
    }
    report(7, ok, &format!("{} CSV bytes identical for 1, 2, 3 and 8 workers and a rebuilt experiment", reference.len()));
    assert!(ok);
}
