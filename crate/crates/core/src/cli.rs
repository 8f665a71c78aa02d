//! Command-line interface: solve, verify, simulate, grid.
//!
//! Exit codes: 0 success, 1 input/validation error, 2 no equilibrium,
//! 3 verification failure. All outputs are deterministic for a fixed
//! configuration and seed, so repeated runs are byte-identical and reports
//! can be diffed in CI.

use crate::equilibrium::{
    find_equilibrium_at, fk_matrix, payoff_rate_coeffs, solve_a2_two_state, Equilibrium,
};
use crate::levy::{jump_integral, jump_integral_quadrature};
use crate::model::{self, ConfigDoc, Contract, MarketModel, SimConfig};
use crate::oracle::{stationary_value, truncated_value};
use crate::sim::{deviation_test, estimate_payoffs, simulate_path, Policy, SamplePath};
use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use std::fmt::Write as _;
use std::path::PathBuf;

pub const EXIT_OK: u8 = 0;
pub const EXIT_INPUT: u8 = 1;
pub const EXIT_NO_EQUILIBRIUM: u8 = 2;
pub const EXIT_VERIFY_FAILED: u8 = 3;

#[derive(Debug, Parser)]
#[command(
    name = "extraction-game",
    version,
    about = "Nash equilibria of a stochastic extraction/taxation game under regime-switching jump-diffusion prices"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Solve the closed-form equilibrium and write a JSON report.
    Solve(SolveArgs),
    /// Cross-check closed form, ODE oracle, and Monte Carlo; exit 3 on FAIL.
    Verify(VerifyArgs),
    /// Simulate paths; dump trajectories and a payoff summary.
    Simulate(SimulateArgs),
    /// Tabulate both players' value functions on a price grid (CSV).
    Grid(GridArgs),
}

#[derive(Debug, Args)]
pub struct CommonArgs {
    /// Configuration file (TOML: model, contract, sim).
    #[arg(long)]
    pub config: PathBuf,
    /// Override sim.n_paths.
    #[arg(long)]
    pub paths: Option<usize>,
    /// Override sim.seed.
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Args)]
pub struct SolveArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    /// Write the JSON report here instead of standard output.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct VerifyArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    /// Replace the solved a1 vector (comma-separated) before the identity
    /// checks; exists to prove the checks can fail.
    #[arg(long, hide = true, value_name = "V1,V2,...")]
    pub override_a1: Option<String>,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    /// Output directory for path dumps and summary.json.
    #[arg(long)]
    pub out: PathBuf,
    /// Number of paths to dump as CSV files.
    #[arg(long, default_value_t = 0)]
    pub dump: usize,
}

#[derive(Debug, Args)]
pub struct GridArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    /// Output CSV file.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 0.0)]
    pub x_min: f64,
    #[arg(long)]
    pub x_max: f64,
    /// Number of grid points (linear spacing).
    #[arg(long, default_value_t = 101)]
    pub points: usize,
}

pub fn run(cli: Cli) -> u8 {
    match cli.command {
        Command::Solve(args) => cmd_solve(&args),
        Command::Verify(args) => cmd_verify(&args),
        Command::Simulate(args) => cmd_simulate(&args),
        Command::Grid(args) => cmd_grid(&args),
    }
}

fn load_with_overrides(common: &CommonArgs) -> Result<(MarketModel, Contract, SimConfig), u8> {
    let (market, contract, mut sim) = match model::load_config(&common.config) {
        Ok(v) => v,
        Err(e) => {
            eprintln!("error: {e}");
            return Err(EXIT_INPUT);
        }
    };
    if let Some(p) = common.paths {
        sim.n_paths = p;
    }
    if let Some(s) = common.seed {
        sim.seed = s;
    }
    let report = model::validate_sim(&sim, &market);
    if !report.is_valid() {
        eprintln!("error: invalid configuration:\n{report}");
        return Err(EXIT_INPUT);
    }
    Ok((market, contract, sim))
}

fn solve_or_code(
    market: &MarketModel,
    contract: &Contract,
    sim: &SimConfig,
) -> Result<Equilibrium, u8> {
    match find_equilibrium_at(market, contract, Some(sim.x0)) {
        Ok(eq) => Ok(eq),
        Err(e) => {
            eprintln!("error: {e}");
            Err(EXIT_NO_EQUILIBRIUM)
        }
    }
}

#[derive(Serialize)]
struct EquilibriumSection {
    u2: Vec<f64>,
    a1: Vec<f64>,
    a2: Vec<f64>,
    k: Vec<f64>,
    abscissa: f64,
    fk_residual: f64,
}

impl EquilibriumSection {
    fn new(eq: &Equilibrium) -> EquilibriumSection {
        EquilibriumSection {
            u2: eq.u2.rates().to_vec(),
            a1: eq.a1.clone(),
            a2: eq.a2.clone(),
            k: eq.k.clone(),
            abscissa: eq.abscissa,
            fk_residual: eq.fk_residual,
        }
    }
}

#[derive(Serialize)]
struct RootSection {
    u2: Vec<f64>,
    a1: Vec<f64>,
    k: Vec<f64>,
    abscissa: f64,
    admissible: bool,
    rejection: Option<String>,
}

#[derive(Serialize)]
struct EquilibriumReport {
    config: ConfigDoc,
    equilibrium: EquilibriumSection,
    roots: Vec<RootSection>,
    warnings: Vec<String>,
}

fn build_report(
    market: &MarketModel,
    contract: &Contract,
    sim: &SimConfig,
    eq: &Equilibrium,
) -> EquilibriumReport {
    EquilibriumReport {
        config: ConfigDoc { model: market.clone(), contract: *contract, sim: *sim },
        equilibrium: EquilibriumSection::new(eq),
        roots: eq
            .all_roots
            .iter()
            .map(|r| RootSection {
                u2: r.u2.clone(),
                a1: r.a1.clone(),
                k: r.k.clone(),
                abscissa: r.abscissa,
                admissible: r.admissible,
                rejection: r.rejection.clone(),
            })
            .collect(),
        warnings: eq.warnings.clone(),
    }
}

fn cmd_solve(args: &SolveArgs) -> u8 {
    let (market, contract, sim) = match load_with_overrides(&args.common) {
        Ok(v) => v,
        Err(c) => return c,
    };
    let eq = match solve_or_code(&market, &contract, &sim) {
        Ok(eq) => eq,
        Err(c) => return c,
    };
    let report = build_report(&market, &contract, &sim, &eq);
    let mut json = serde_json::to_string_pretty(&report).expect("report serializes");
    json.push('\n');
    match &args.out {
        Some(path) => {
            if let Err(e) = std::fs::write(path, &json) {
                eprintln!("error: cannot write {}: {e}", path.display());
                return EXIT_INPUT;
            }
            print!("{}", human_summary(&eq));
            println!("report written to {}", path.display());
        }
        None => print!("{json}"),
    }
    EXIT_OK
}

fn human_summary(eq: &Equilibrium) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "equilibrium: {} regime(s)", eq.a1.len());
    for i in 0..eq.a1.len() {
        let _ = writeln!(
            out,
            "  regime {}: u2 = {}, K = {:.6}, a1 = {:.6}, a2 = {:.6}",
            i + 1,
            eq.u2.rates()[i],
            eq.k[i],
            eq.a1[i],
            eq.a2[i]
        );
    }
    let _ = writeln!(
        out,
        "  abscissa = {:.6e}, value-propagation residual = {:.3e}",
        eq.abscissa, eq.fk_residual
    );
    let admissible = eq.all_roots.iter().filter(|r| r.admissible).count();
    let _ = writeln!(out, "  roots examined: {}, admissible: {}", eq.all_roots.len(), admissible);
    for w in &eq.warnings {
        let _ = writeln!(out, "  warning: {w}");
    }
    out
}

struct CheckLog {
    text: String,
    failures: usize,
}

impl CheckLog {
    fn new() -> CheckLog {
        CheckLog { text: String::new(), failures: 0 }
    }

    fn line(&mut self, s: &str) {
        self.text.push_str(s);
        self.text.push('\n');
    }

    fn check(&mut self, desc: String, pass: bool) {
        if !pass {
            self.failures += 1;
        }
        self.line(&format!("{desc} -> {}", if pass { "PASS" } else { "FAIL" }));
    }
}

fn inf_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0f64, |acc, x| acc.max(x.abs()))
}

fn cmd_verify(args: &VerifyArgs) -> u8 {
    let (market, contract, sim) = match load_with_overrides(&args.common) {
        Ok(v) => v,
        Err(c) => return c,
    };
    if sim.n_paths < 2 {
        eprintln!("error: verification needs sim.n_paths >= 2");
        return EXIT_INPUT;
    }
    let eq = match solve_or_code(&market, &contract, &sim) {
        Ok(eq) => eq,
        Err(c) => return c,
    };
    let mut a1 = eq.a1.clone();
    if let Some(spec) = &args.override_a1 {
        match parse_vector(spec, market.m()) {
            Ok(v) => a1 = v,
            Err(msg) => {
                eprintln!("error: --override-a1: {msg}");
                return EXIT_INPUT;
            }
        }
    }

    let mut log = CheckLog::new();
    log.line("verification suite");

    // (a) closed-form jump integral against the quadrature oracle.
    let mut worst = 0.0f64;
    for reg in &market.regimes {
        let closed = jump_integral(&market.levy, reg.gamma);
        match jump_integral_quadrature(&market.levy, reg.gamma, 1e-8) {
            Ok(q) => worst = worst.max((closed - q).abs()),
            Err(e) => {
                log.check(format!("[a] jump integral quadrature: {e}"), false);
                worst = f64::NAN;
                break;
            }
        }
    }
    if worst.is_finite() {
        log.check(
            format!("[a] jump integral closed form vs quadrature: max |diff| = {worst:.3e} (gate 1.0e-6)"),
            worst <= 1e-6,
        );
    }

    // (b) the quadratic system rearranged as a linear identity in a1, and the
    // linear system residual of a2.
    let h = fk_matrix(&eq.k, &market, &contract);
    let (c1, c2) = payoff_rate_coeffs(&eq.k, &eq.u2, &contract);
    let m = market.m();
    let resid = |coeffs: &[f64], c: &[f64]| -> f64 {
        (0..m)
            .map(|i| {
                let row: f64 = (0..m).map(|j| h[(i, j)] * coeffs[j]).sum();
                (row + c[i]).abs()
            })
            .fold(0.0, f64::max)
    };
    let r1 = resid(&a1, &c1);
    let gate1 = 1e-10 * (1.0 + inf_norm(&a1));
    log.check(
        format!("[b] value-propagation identity for a1: residual = {r1:.3e} (gate {gate1:.3e})"),
        r1 <= gate1,
    );
    let r2 = resid(&eq.a2, &c2);
    let gate2 = 1e-12 * (1.0 + inf_norm(&eq.a2) * h.amax().max(1.0));
    log.check(
        format!("[b] linear system residual for a2: residual = {r2:.3e} (gate {gate2:.3e})"),
        r2 <= gate2,
    );

    // (c) independent two-regime determinant formulas.
    if m == 2 {
        match solve_a2_two_state(&eq.k, &eq.u2, &market, &contract) {
            Ok(closed) => {
                let rel = (0..2)
                    .map(|i| (closed[i] - eq.a2[i]).abs() / eq.a2[i].abs().max(1.0))
                    .fold(0.0, f64::max);
                log.check(
                    format!("[c] two-regime closed-form a2 agreement: rel diff = {rel:.3e} (gate 1.0e-12)"),
                    rel <= 1e-12,
                );
            }
            Err(e) => log.check(format!("[c] two-regime closed-form a2: {e}"), false),
        }
    } else {
        log.line(&format!("[c] two-regime closed-form a2 agreement: SKIP ({m} regimes)"));
    }

    // (d) Monte Carlo payoffs against the ODE oracle. Near-critical systems
    // (tail above 1% of the stationary value at the configured horizon) are
    // compared at the truncated horizon only.
    let policy = Policy::from_equilibrium(&eq);
    let est = estimate_payoffs(&market, &contract, &policy, &sim);
    let i0 = sim.i0_index();
    let x0sq = sim.x0 * sim.x0;
    log.line(&format!(
        "[d] monte carlo payoffs ({} paths, horizon {}, {} floor events):",
        est.n_paths, est.horizon, est.floor_events
    ));
    let mut near_critical = false;
    for (player, c) in [(1usize, &c1), (2usize, &c2)] {
        let tv = truncated_value(&h, c, sim.horizon, 1e-10);
        let stat = stationary_value(&h, c).ok();
        let mc = est.mean[player - 1];
        let se = est.std_error[player - 1];
        let stationary_usable = match (&stat, tv.tail_bound) {
            (Some(sv), Some(tail)) => tail <= 0.01 * sv[i0].abs(),
            _ => false,
        };
        if stationary_usable {
            let target = stat.as_ref().unwrap()[i0] * x0sq;
            let tol = (3.0 * se).max(0.02 * target.abs());
            log.check(
                format!(
                    "    player {player}: mc {mc:.6e} (se {se:.3e}) vs stationary {target:.6e} (tol {tol:.3e})"
                ),
                (mc - target).abs() <= tol,
            );
        } else {
            near_critical = true;
            let target = tv.coeffs[i0] * x0sq;
            log.check(
                format!(
                    "    player {player}: mc {mc:.6e} (se {se:.3e}) vs truncated {target:.6e} (tol {:.3e})",
                    3.0 * se
                ),
                (mc - target).abs() <= 3.0 * se,
            );
        }
    }
    if near_critical {
        log.line(&format!(
            "    note: stationary MC skipped: near-critical abscissa {:.1e}; truncated comparison used",
            eq.abscissa
        ));
    }

    // (e) empirical Nash deviations, on a reduced budget.
    let mut dev_sim = sim;
    dev_sim.n_paths = sim.n_paths.min(1000);
    dev_sim.horizon = sim.horizon.min(100.0);
    let dev = deviation_test(&market, &contract, &eq, &[0.5, 0.8, 1.2, 1.5], &dev_sim);
    log.line(&format!(
        "[e] deviation tests ({} paths, horizon {}):",
        dev.n_paths, dev.horizon
    ));
    for case in &dev.entries {
        let stat_txt = match case.oracle_stationary_delta {
            Some(d) => format!("{d:.3e}"),
            None => "n/a".to_string(),
        };
        log.check(
            format!(
                "    {}: stationary {stat_txt}, truncated {:.3e}, mc {:.3e} (se {:.3e})",
                case.label, case.oracle_truncated_delta, case.mc_delta, case.mc_std_error
            ),
            case.pass,
        );
        if let Some(note) = &case.note {
            log.line(&format!("      note: {note}"));
        }
    }

    if log.failures == 0 {
        log.line("result: all checks passed");
    } else {
        log.line(&format!("result: {} check(s) failed", log.failures));
    }
    print!("{}", log.text);
    if log.failures == 0 {
        EXIT_OK
    } else {
        EXIT_VERIFY_FAILED
    }
}

fn parse_vector(spec: &str, m: usize) -> Result<Vec<f64>, String> {
    let vals: Result<Vec<f64>, _> = spec.split(',').map(|p| p.trim().parse::<f64>()).collect();
    match vals {
        Ok(v) if v.len() == m => Ok(v),
        Ok(v) => Err(format!("expected {m} components, got {}", v.len())),
        Err(e) => Err(e.to_string()),
    }
}

fn cmd_simulate(args: &SimulateArgs) -> u8 {
    let (market, contract, sim) = match load_with_overrides(&args.common) {
        Ok(v) => v,
        Err(c) => return c,
    };
    if sim.n_paths < 2 {
        eprintln!("error: payoff estimation needs sim.n_paths >= 2");
        return EXIT_INPUT;
    }
    if args.dump > sim.n_paths {
        eprintln!("error: --dump {} exceeds sim.n_paths {}", args.dump, sim.n_paths);
        return EXIT_INPUT;
    }
    let eq = match solve_or_code(&market, &contract, &sim) {
        Ok(eq) => eq,
        Err(c) => return c,
    };
    if let Err(e) = std::fs::create_dir_all(&args.out) {
        eprintln!("error: cannot create {}: {e}", args.out.display());
        return EXIT_INPUT;
    }

    let policy = Policy::from_equilibrium(&eq);
    let est = estimate_payoffs(&market, &contract, &policy, &sim);

    let mut dumped = Vec::new();
    for k in 0..args.dump {
        let path = simulate_path(&market, &contract, &policy, &sim, k as u64);
        let name = format!("path_{k:04}.csv");
        let file = args.out.join(&name);
        if let Err(e) = std::fs::write(&file, path_csv(&path)) {
            eprintln!("error: cannot write {}: {e}", file.display());
            return EXIT_INPUT;
        }
        dumped.push(name);
    }

    #[derive(Serialize)]
    struct PayoffSection {
        mean: [f64; 2],
        std_error: [f64; 2],
        n_paths: usize,
        horizon: f64,
        floor_events: u64,
    }
    #[derive(Serialize)]
    struct SimulationSummary {
        config: ConfigDoc,
        equilibrium: EquilibriumSection,
        payoff: PayoffSection,
        dumped_paths: Vec<String>,
    }
    let summary = SimulationSummary {
        config: ConfigDoc { model: market.clone(), contract, sim },
        equilibrium: EquilibriumSection::new(&eq),
        payoff: PayoffSection {
            mean: est.mean,
            std_error: est.std_error,
            n_paths: est.n_paths,
            horizon: est.horizon,
            floor_events: est.floor_events,
        },
        dumped_paths: dumped,
    };
    let mut json = serde_json::to_string_pretty(&summary).expect("summary serializes");
    json.push('\n');
    let summary_file = args.out.join("summary.json");
    if let Err(e) = std::fs::write(&summary_file, &json) {
        eprintln!("error: cannot write {}: {e}", summary_file.display());
        return EXIT_INPUT;
    }

    println!(
        "J1 = {:.6e} (se {:.3e}), J2 = {:.6e} (se {:.3e}), {} paths, {} floor events",
        est.mean[0], est.std_error[0], est.mean[1], est.std_error[1], est.n_paths, est.floor_events
    );
    println!("wrote {} path file(s) and summary.json to {}", args.dump, args.out.display());
    EXIT_OK
}

fn path_csv(path: &SamplePath) -> String {
    let mut out = String::with_capacity(path.times.len() * 96 + 64);
    out.push_str("t,x,regime,u1,u2,disc_L1,disc_L2\n");
    for i in 0..path.times.len() {
        let _ = writeln!(
            out,
            "{:.16e},{:.16e},{},{:.16e},{:.16e},{:.16e},{:.16e}",
            path.times[i],
            path.prices[i],
            path.regimes[i] + 1,
            path.extraction[i],
            path.tax[i],
            path.disc_l1[i],
            path.disc_l2[i]
        );
    }
    out
}

fn cmd_grid(args: &GridArgs) -> u8 {
    let (market, contract, sim) = match load_with_overrides(&args.common) {
        Ok(v) => v,
        Err(c) => return c,
    };
    if !(args.x_min >= 0.0 && args.x_min < args.x_max && args.x_max.is_finite()) {
        eprintln!("error: grid range requires 0 <= x-min < x-max (finite)");
        return EXIT_INPUT;
    }
    if args.points < 2 {
        eprintln!("error: grid needs at least 2 points");
        return EXIT_INPUT;
    }
    let eq = match solve_or_code(&market, &contract, &sim) {
        Ok(eq) => eq,
        Err(c) => return c,
    };

    let m = market.m();
    let mut out = String::new();
    out.push('x');
    for j in 1..=m {
        let _ = write!(out, ",v1_r{j}");
    }
    for j in 1..=m {
        let _ = write!(out, ",v2_r{j}");
    }
    out.push('\n');
    let step = (args.x_max - args.x_min) / (args.points - 1) as f64;
    for i in 0..args.points {
        let x = if i + 1 == args.points { args.x_max } else { args.x_min + step * i as f64 };
        let _ = write!(out, "{x:.16e}");
        for a in eq.a1.iter().chain(eq.a2.iter()) {
            let _ = write!(out, ",{:.16e}", a * x * x);
        }
        out.push('\n');
    }
    if let Err(e) = std::fs::write(&args.out, &out) {
        eprintln!("error: cannot write {}: {e}", args.out.display());
        return EXIT_INPUT;
    }
    println!(
        "wrote {} grid rows over [{}, {}] to {}",
        args.points,
        args.x_min,
        args.x_max,
        args.out.display()
    );
    EXIT_OK
}
