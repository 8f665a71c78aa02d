//! End-to-end acceptance gate. Each test checks one release criterion at its
//! stated tolerance and prints a single PASS/FAIL line (visible with
//! `cargo test --test acceptance -- --nocapture`).
//!
//! The two reference configurations are the bundled medium_producer
//! (no price impact, exponential jumps) and major_producer (price impact,
//! heavy-tailed jumps, near-critical value propagation).

use extraction_game::equilibrium::{
    find_equilibrium, fk_matrix, payoff_rate_coeffs, solve_a1, solve_a2_two_state, TaxAssignment,
};
use extraction_game::levy::{jump_integral, jump_integral_quadrature};
use extraction_game::model::{self, Contract, LevyMeasureSpec, MarketModel, SimConfig};
use extraction_game::oracle::{propagate, stationary_value, truncated_value};
use extraction_game::sim::{collect_path_stats, deviation_test, estimate_payoffs, Policy};
use std::path::PathBuf;
use std::time::Instant;

fn config(name: &str) -> (MarketModel, Contract, SimConfig) {
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../configs").join(name);
    model::load_config(&path).unwrap_or_else(|e| panic!("loading {name}: {e}"))
}

fn medium() -> (MarketModel, Contract, SimConfig) {
    config("medium_producer.toml")
}

fn major() -> (MarketModel, Contract, SimConfig) {
    config("major_producer.toml")
}

fn report(line: &str, ok: bool) {
    println!("{line} -> {}", if ok { "PASS" } else { "FAIL" });
    assert!(ok, "{line}");
}

fn inf_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0f64, |a, x| a.max(x.abs()))
}

fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

fn max_rel_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs() / y.abs()).fold(0.0, f64::max)
}

#[test]
fn c01_company_coefficients_match_published_4dp() {
    let (m, contract, _) = medium();
    let hi = solve_a1(&TaxAssignment::uniform(0.2, 2), &m, &contract).unwrap();
    let lo = solve_a1(&TaxAssignment::uniform(0.0, 2), &m, &contract).unwrap();
    assert_eq!(hi.len(), 1, "rho = 0 linear system has a unique solution");
    assert_eq!(lo.len(), 1);
    let d_hi = max_abs_diff(&hi[0], &[0.2535, 0.1288]);
    let d_lo = max_abs_diff(&lo[0], &[0.3169, 0.1610]);

    let reps = 100u32;
    let t0 = Instant::now();
    for _ in 0..reps {
        std::hint::black_box(solve_a1(&TaxAssignment::uniform(0.2, 2), &m, &contract).unwrap());
    }
    let per_call = t0.elapsed() / reps;

    report(
        &format!(
            "c01 company value coefficients at both tax bounds within 1e-3 of published 4dp \
             (diffs {d_hi:.1e}, {d_lo:.1e}; {per_call:?}/solve)"
        ),
        d_hi <= 1e-3 && d_lo <= 1e-3 && per_call.as_micros() < 1000,
    );
}

#[test]
fn c02_medium_equilibrium_tax_and_gain_are_exact() {
    let (m, contract, _) = medium();
    let eq = find_equilibrium(&m, &contract).unwrap();
    let k_exact = eq.k == vec![1.0 / 30.0, 1.0 / 30.0];
    report(
        &format!(
            "c02 equilibrium tax ({:?}) at upper bound and gain K = 1/(2a) bit-exact",
            eq.u2.rates()
        ),
        eq.u2.rates() == [0.2, 0.2] && k_exact,
    );
}

#[test]
fn c03_major_root_set_and_selected_gains() {
    let (m, contract, _) = major();
    let roots = solve_a1(&TaxAssignment::uniform(0.2, 2), &m, &contract).unwrap();
    let two_real = roots.len() == 2;
    // Sorted by first component: admissible branch first, then the large one.
    let d0 = max_rel_diff(&roots[0], &[37.2674, 29.6747]);
    let d1 = max_rel_diff(&roots[1], &[194.783, 155.06]);

    let eq = find_equilibrium(&m, &contract).unwrap();
    let dk = max_abs_diff(&eq.k, &[0.133539, 0.157267]);
    let kk: Vec<f64> = eq.k.iter().map(|k| k - contract.a * k * k).collect();
    let dkk = max_abs_diff(&kk, &[0.0978738, 0.107801]);

    report(
        &format!(
            "c03 major-producer roots: exactly two real vectors within 0.5% (diffs {d0:.1e}, \
             {d1:.1e}), selected K within 1e-4 ({dk:.1e}), K-aK^2 within 1e-5 ({dkk:.1e})"
        ),
        two_real && d0 <= 5e-3 && d1 <= 5e-3 && dk <= 1e-4 && dkk <= 1e-5,
    );
}

#[test]
fn c04_major_government_coefficients_within_1pct() {
    let (m, contract, _) = major();
    let eq = find_equilibrium(&m, &contract).unwrap();
    let d = max_rel_diff(&eq.a2, &[195.654, 155.792]);
    report(
        &format!("c04 government value coefficients within 1% of published values (diff {d:.1e})"),
        d <= 1e-2,
    );
}

#[test]
fn c05_value_propagation_identity_both_configs() {
    let mut ok = true;
    let mut worst_r1 = 0.0f64;
    let mut worst_a2 = 0.0f64;
    let mut elapsed = std::time::Duration::ZERO;
    for cfg in ["medium_producer.toml", "major_producer.toml"] {
        let (m, contract, _) = config(cfg);
        let eq = find_equilibrium(&m, &contract).unwrap();
        let t0 = Instant::now();
        let h = fk_matrix(&eq.k, &m, &contract);
        let (c1, _) = payoff_rate_coeffs(&eq.k, &eq.u2, &contract);
        let r1: f64 = (0..2)
            .map(|i| (h[(i, 0)] * eq.a1[0] + h[(i, 1)] * eq.a1[1] + c1[i]).abs())
            .fold(0.0, f64::max);
        let closed = solve_a2_two_state(&eq.k, &eq.u2, &m, &contract).unwrap();
        elapsed += t0.elapsed();
        let rel_a2 = max_rel_diff(&closed, &eq.a2);
        worst_r1 = worst_r1.max(r1 / (1.0 + inf_norm(&eq.a1)));
        worst_a2 = worst_a2.max(rel_a2);
        ok &= r1 <= 1e-10 * (1.0 + inf_norm(&eq.a1)) && rel_a2 <= 1e-12;
    }
    report(
        &format!(
            "c05 value-propagation identity <= 1e-10 scaled ({worst_r1:.1e}) and independent a2 \
             route agrees to 1e-12 ({worst_a2:.1e}; {elapsed:?} for both configs)"
        ),
        ok && elapsed.as_micros() < 2000,
    );
}

#[test]
fn c06_jump_integral_closed_form_vs_quadrature_grid() {
    let t0 = Instant::now();
    let mut worst = 0.0f64;
    for eta in [1.0, 5.0, 10.0] {
        let levy = LevyMeasureSpec::Exponential { eta };
        for gamma in [0.01, 0.05, 0.09] {
            let q = jump_integral_quadrature(&levy, gamma, 1e-8).unwrap();
            worst = worst.max((jump_integral(&levy, gamma) - q).abs());
        }
    }
    for gamma in [0.022, 0.03] {
        let q = jump_integral_quadrature(&LevyMeasureSpec::HeavySymmetric, gamma, 1e-8).unwrap();
        worst = worst.max((jump_integral(&LevyMeasureSpec::HeavySymmetric, gamma) - q).abs());
    }
    let elapsed = t0.elapsed();
    report(
        &format!("c06 jump-integral quadrature grid agrees within 1e-6 ({worst:.1e}; {elapsed:?})"),
        worst <= 1e-6 && elapsed.as_secs() < 1,
    );
}

#[test]
fn c07_monte_carlo_vs_stationary_value_medium() {
    let (m, contract, sim) = medium();
    let eq = find_equilibrium(&m, &contract).unwrap();
    let h = fk_matrix(&eq.k, &m, &contract);
    let (_, c2) = payoff_rate_coeffs(&eq.k, &eq.u2, &contract);
    let x0sq = sim.x0 * sim.x0;
    let v2 = stationary_value(&h, &c2).unwrap();
    // Independent numerical cross-check of the targets.
    assert!((eq.a1[0] - 0.25350593369594715).abs() <= 1e-10);
    assert!((v2[0] - 0.802768790037).abs() <= 1e-9);
    let targets = [eq.a1[0] * x0sq, v2[0] * x0sq];

    let t0 = Instant::now();
    let est = estimate_payoffs(&m, &contract, &Policy::from_equilibrium(&eq), &sim);
    let secs = t0.elapsed().as_secs_f64();

    let mut ok = true;
    let mut msg = String::new();
    for (j, target) in targets.iter().enumerate() {
        let tol = (3.0 * est.std_error[j]).max(0.02 * target);
        let diff = (est.mean[j] - target).abs();
        ok &= diff <= tol;
        msg.push_str(&format!(" J{}: |{:.4e}-{target:.4e}|<={tol:.1e}", j + 1, est.mean[j]));
    }
    report(
        &format!(
            "c07 medium-producer Monte Carlo within max(3SE, 2%) of stationary values \
             ({} paths, horizon {}, {secs:.0}s):{msg}",
            est.n_paths, est.horizon
        ),
        ok,
    );
}

#[test]
fn c08_monte_carlo_vs_truncated_oracle_major() {
    let (m, contract, sim) = major();
    let eq = find_equilibrium(&m, &contract).unwrap();
    let h = fk_matrix(&eq.k, &m, &contract);
    let (c1, c2) = payoff_rate_coeffs(&eq.k, &eq.u2, &contract);
    let x0sq = sim.x0 * sim.x0;
    let i0 = sim.i0_index();
    let v1 = truncated_value(&h, &c1, sim.horizon, 1e-10);
    let v2 = truncated_value(&h, &c2, sim.horizon, 1e-10);
    // Near-critical: the stationary tail is out of reach, the truncated
    // values are the only honest Monte Carlo targets. Pin them against
    // independently computed references first.
    assert!((v1.coeffs[i0] - 0.8538352586).abs() / 0.8538352586 <= 1e-6);
    assert!((v2.coeffs[i0] - 4.482635108).abs() / 4.482635108 <= 1e-6);
    let targets = [v1.coeffs[i0] * x0sq, v2.coeffs[i0] * x0sq];

    let t0 = Instant::now();
    let est = estimate_payoffs(&m, &contract, &Policy::from_equilibrium(&eq), &sim);
    let secs = t0.elapsed().as_secs_f64();

    let mut ok = true;
    let mut msg = String::new();
    for (j, target) in targets.iter().enumerate() {
        let tol = 3.0 * est.std_error[j];
        let diff = (est.mean[j] - target).abs();
        ok &= diff <= tol;
        msg.push_str(&format!(" J{}: |{:.4e}-{target:.4e}|<={tol:.1e}", j + 1, est.mean[j]));
    }
    report(
        &format!(
            "c08 major-producer Monte Carlo within 3SE of truncated oracle at horizon {} \
             ({} paths, {secs:.0}s):{msg}",
            est.horizon, est.n_paths
        ),
        ok,
    );
}

#[test]
fn c09_deviation_dominance_medium() {
    let (m, contract, sim) = medium();
    let eq = find_equilibrium(&m, &contract).unwrap();
    let scales = [0.5, 0.8, 1.2, 1.5];

    // Oracle side: stationary value of every scaled deviation sits strictly
    // below the equilibrium coefficients, componentwise.
    let reference: [(f64, [f64; 2]); 2] =
        [(0.5, [0.1901294503, 0.09659180828]), (0.8, [0.2433656963, 0.1236375146])];
    let mut dominated = true;
    let mut pinned = true;
    for kappa in scales {
        let k_dev: Vec<f64> = eq.k.iter().map(|k| kappa * k).collect();
        let h_dev = fk_matrix(&k_dev, &m, &contract);
        let c1_dev = payoff_rate_coeffs(&k_dev, &eq.u2, &contract).0;
        let v_dev = stationary_value(&h_dev, &c1_dev).unwrap();
        dominated &= v_dev.iter().zip(&eq.a1).all(|(d, e)| d < e);
        // The payoff rate is quadratic in kappa, so 0.5/1.5 and 0.8/1.2 pair up.
        let key = if kappa < 1.0 { kappa } else { 2.0 - kappa };
        let frozen = reference.iter().find(|(k, _)| *k == key).unwrap().1;
        pinned &= max_rel_diff(&v_dev, &frozen) <= 1e-8;
        if kappa == 0.5 {
            // Published rounded pair for the heaviest cut.
            pinned &= max_abs_diff(&v_dev, &[0.190125, 0.0966]) <= 1e-4;
        }
    }

    // Monte Carlo side with common random numbers, reduced budget.
    let dev_sim = SimConfig { n_paths: 2000, horizon: 100.0, ..sim };
    let rep = deviation_test(&m, &contract, &eq, &scales, &dev_sim);
    let mc_ok = rep.all_pass();
    let flips_negative = rep
        .entries
        .iter()
        .filter(|c| c.player == 2)
        .all(|c| c.mc_delta < 0.0 && c.oracle_truncated_delta < 0.0);
    assert_eq!(rep.entries.iter().filter(|c| c.player == 2).count(), 2);

    report(
        &format!(
            "c09 deviation dominance: oracle strict for scales {scales:?} (pinned {pinned}), \
             MC sign agreement {mc_ok}, tax flips lower J2 {flips_negative}"
        ),
        dominated && pinned && mc_ok && flips_negative,
    );
}

#[test]
fn c10_terminal_second_moments_vs_ode_medium() {
    let (m, contract, sim_base) = medium();
    let eq = find_equilibrium(&m, &contract).unwrap();
    let sim = SimConfig { horizon: 5.0, dt: 1e-3, n_paths: 50_000, ..sim_base };

    // Undiscounted second-moment flow is the value matrix plus r on the diagonal.
    let mut flow = fk_matrix(&eq.k, &m, &contract).transpose();
    for i in 0..2 {
        flow[(i, i)] += contract.r;
    }
    let mut init = vec![0.0; 2];
    init[sim.i0_index()] = sim.x0 * sim.x0;
    let expect = propagate(&flow, &init, sim.horizon, 1e-10);
    assert!(max_rel_diff(&expect, &[0.5675427124, 0.8499684841]) <= 1e-6);

    let t0 = Instant::now();
    let stats = collect_path_stats(&m, &contract, &Policy::from_equilibrium(&eq), &sim);
    let secs = t0.elapsed().as_secs_f64();

    let n = stats.len() as f64;
    let mut ok = true;
    let mut msg = String::new();
    for (j, target) in expect.iter().enumerate() {
        let mean: f64 = stats
            .iter()
            .map(|s| if s.terminal_regime == j { s.terminal_price * s.terminal_price } else { 0.0 })
            .sum::<f64>()
            / n;
        let var: f64 = stats
            .iter()
            .map(|s| {
                let v = if s.terminal_regime == j { s.terminal_price * s.terminal_price } else { 0.0 };
                (v - mean) * (v - mean)
            })
            .sum::<f64>()
            / (n - 1.0);
        let se = (var / n).sqrt();
        ok &= (mean - target).abs() <= 3.0 * se;
        msg.push_str(&format!(" regime {}: |{mean:.4e}-{target:.4e}|<={:.1e}", j + 1, 3.0 * se));
    }
    report(
        &format!("c10 terminal second moments match the moment ODE at 3SE (50000 paths, {secs:.0}s):{msg}"),
        ok,
    );
}

#[test]
fn c11_verify_command_is_byte_deterministic() {
    let bin = env!("CARGO_BIN_EXE_extraction-game");
    let cfg = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../configs/medium_producer.toml");
    let run = || {
        std::process::Command::new(bin)
            .args(["verify", "--config"])
            .arg(&cfg)
            .args(["--paths", "400"])
            .output()
            .expect("spawning verify")
    };
    let first = run();
    let second = run();
    let identical = first.stdout == second.stdout && first.status == second.status;
    let nonempty = first.stdout.starts_with(b"verification suite");
    report(
        &format!(
            "c11 two verify runs byte-identical ({} bytes, status {:?})",
            first.stdout.len(),
            first.status.code()
        ),
        identical && nonempty,
    );
}
