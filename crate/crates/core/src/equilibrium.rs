//! Closed-form equilibrium of the extraction/taxation game.
//!
//! Quadratic value ansatz: player `j`'s value in regime `i` is
//! `V_j(x, i) = a_j(i) x^2`. The producer coefficients `a1` solve one coupled
//! quadratic per regime,
//!
//! ```text
//! alpha(i) a1(i)^2 + b(i) a1(i) + c(i) + sum_{j != i} q_ij a1(j) = 0
//! alpha(i) = rho^2 / (a theta (1 - u2(i)))
//! b(i)     = sigma(i)^2 - r + 2 mu(i) - sum_{j != i} q_ij - rho/a + J(i)
//! c(i)     = theta (1 - u2(i)) / (4a)
//! ```
//!
//! with `J(i)` the jump correction from [`crate::levy::jump_integral`]. The
//! optimal extraction is proportional, `u1 = K(i) x`, the optimal tax is
//! bang-bang at the contract bounds, and the government coefficients `a2`
//! follow from a linear Feynman-Kac system driven by the matrix [`fk_matrix`].

use crate::levy::jump_integral;
use crate::model::{Contract, MarketModel};
use nalgebra::{Complex, DMatrix, DVector};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum EquilibriumError {
    #[error("tax rate {rate} in regime {regime} leaves no taxable profit share")]
    DegenerateTax { regime: usize, rate: f64 },
    #[error("no real solution of the value-coefficient system")]
    NoRealRoot,
    #[error("value-propagation system is singular (determinant {det:e})")]
    SingularSystem { det: f64 },
    #[error("no self-consistent admissible equilibrium")]
    NoEquilibrium,
}

/// Per-regime tax rates, each at one of the contract bounds in equilibrium
/// contexts. Plain rates so deviation policies can reuse the type.
#[derive(Debug, Clone, PartialEq)]
pub struct TaxAssignment(pub Vec<f64>);

impl TaxAssignment {
    pub fn uniform(rate: f64, m: usize) -> TaxAssignment {
        TaxAssignment(vec![rate; m])
    }

    /// Bit `i` of `mask` set means regime `i+1` taxes at `u2_max`.
    pub fn from_mask(contract: &Contract, m: usize, mask: usize) -> TaxAssignment {
        TaxAssignment(
            (0..m)
                .map(|i| if mask & (1 << i) != 0 { contract.u2_max } else { contract.u2_min })
                .collect(),
        )
    }

    pub fn rates(&self) -> &[f64] {
        &self.0
    }
}

/// Coefficients of the coupled per-regime quadratics for `a1`.
struct QuadSystem {
    alpha: Vec<f64>,
    b: Vec<f64>,
    c: Vec<f64>,
}

fn quad_system(
    u2: &TaxAssignment,
    model: &MarketModel,
    contract: &Contract,
) -> Result<QuadSystem, EquilibriumError> {
    let m = model.m();
    assert_eq!(u2.0.len(), m, "tax assignment dimension mismatch");
    let mut sys = QuadSystem { alpha: Vec::with_capacity(m), b: Vec::with_capacity(m), c: Vec::with_capacity(m) };
    for i in 0..m {
        let share = 1.0 - u2.0[i];
        if share <= 0.0 {
            return Err(EquilibriumError::DegenerateTax { regime: i + 1, rate: u2.0[i] });
        }
        let reg = model.regimes[i];
        let j = jump_integral(&model.levy, reg.gamma);
        sys.alpha.push(contract.rho * contract.rho / (contract.a * contract.theta * share));
        sys.b.push(
            reg.sigma * reg.sigma - contract.r + 2.0 * reg.mu
                - model.exit_rate(i)
                - contract.rho / contract.a
                + j,
        );
        sys.c.push(contract.theta * share / (4.0 * contract.a));
    }
    Ok(sys)
}

fn residual_of(sys: &QuadSystem, q: &[Vec<f64>], a1: &[f64]) -> Vec<f64> {
    let m = a1.len();
    (0..m)
        .map(|i| {
            let coupling: f64 =
                (0..m).filter(|&j| j != i).map(|j| q[i][j] * a1[j]).sum();
            sys.alpha[i] * a1[i] * a1[i] + sys.b[i] * a1[i] + sys.c[i] + coupling
        })
        .collect()
}

/// Residual of the producer coefficient system at `a1`; zero at a solution.
pub fn a1_residual(
    a1: &[f64],
    u2: &TaxAssignment,
    model: &MarketModel,
    contract: &Contract,
) -> Result<Vec<f64>, EquilibriumError> {
    assert_eq!(a1.len(), model.m(), "a1 dimension mismatch");
    let sys = quad_system(u2, model, contract)?;
    Ok(residual_of(&sys, &model.q, a1))
}

fn inf_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0f64, |acc, x| acc.max(x.abs()))
}

/// Acceptance gate shared by every solver route.
fn residual_ok(sys: &QuadSystem, q: &[Vec<f64>], a1: &[f64]) -> bool {
    a1.iter().all(|x| x.is_finite())
        && inf_norm(&residual_of(sys, q, a1)) <= 1e-10 * (1.0 + inf_norm(a1))
}

/// Damped Newton refinement on the full residual system. Returns the refined
/// point if the iteration converges to the residual gate.
fn newton_polish(sys: &QuadSystem, q: &[Vec<f64>], start: &[f64]) -> Option<Vec<f64>> {
    let m = start.len();
    let mut x = start.to_vec();
    if x.iter().any(|v| !v.is_finite()) {
        return None;
    }
    for _ in 0..80 {
        let res = residual_of(sys, q, &x);
        let rn = inf_norm(&res);
        if rn <= 1e-13 * (1.0 + inf_norm(&x)) {
            return Some(x);
        }
        let jac = DMatrix::from_fn(m, m, |i, j| {
            if i == j { 2.0 * sys.alpha[i] * x[i] + sys.b[i] } else { q[i][j] }
        });
        let rhs = DVector::from_iterator(m, res.iter().map(|r| -r));
        let step = jac.lu().solve(&rhs)?;
        let mut lambda = 1.0;
        let mut accepted = false;
        while lambda >= 1e-8 {
            let trial: Vec<f64> = (0..m).map(|i| x[i] + lambda * step[i]).collect();
            if inf_norm(&residual_of(sys, q, &trial)) <= (1.0 - 0.25 * lambda) * rn {
                x = trial;
                accepted = true;
                break;
            }
            lambda *= 0.5;
        }
        if !accepted {
            return None;
        }
    }
    let res = residual_of(sys, q, &x);
    (inf_norm(&res) <= 1e-10 * (1.0 + inf_norm(&x))).then_some(x)
}

/// Real roots of a real polynomial (ascending coefficients, `coeffs[k]` on
/// `x^k`) via the balanced companion matrix.
fn polynomial_real_roots(coeffs: &[f64]) -> Vec<f64> {
    // Trim the leading coefficient if it vanished (degenerate degree).
    let mut c = coeffs.to_vec();
    while c.len() > 1 && c.last() == Some(&0.0) {
        c.pop();
    }
    let n = c.len() - 1;
    if n == 0 {
        return Vec::new();
    }
    let lead = c[n];
    // Monic, then rescale the variable x = s y to tame wide coefficient ranges.
    let monic: Vec<f64> = (0..n).map(|k| c[k] / lead).collect();
    let mut s = 0.0f64;
    for (k, m) in monic.iter().enumerate() {
        // monic[k] multiplies x^k; its magnitude contributes at power n-k.
        let mag = m.abs().powf(1.0 / (n - k) as f64);
        s = s.max(mag);
    }
    if s == 0.0 {
        return vec![0.0];
    }
    let mut companion = DMatrix::<f64>::zeros(n, n);
    for i in 1..n {
        companion[(i, i - 1)] = 1.0;
    }
    let mut sk = 1.0;
    for (k, item) in monic.iter().enumerate() {
        // scaled coefficient of y^k: monic[k] / s^{n-k}
        companion[(k, n - 1)] = -item / (s.powi(n as i32) / sk);
        sk *= s;
    }
    let eigen: DVector<Complex<f64>> = companion.complex_eigenvalues();
    eigen
        .iter()
        .filter(|e| e.im.abs() <= 1e-6 * (1.0 + e.re.abs()))
        .map(|e| e.re * s)
        .collect()
}

fn scalar_quadratic_roots(alpha: f64, b: f64, c: f64) -> Vec<f64> {
    if alpha == 0.0 {
        if b == 0.0 {
            return Vec::new();
        }
        return vec![-c / b];
    }
    let disc = b * b - 4.0 * alpha * c;
    if disc < 0.0 {
        return Vec::new();
    }
    // Citardauq pairing avoids cancellation for the small root.
    let sq = disc.sqrt();
    let q = -0.5 * (b + b.signum() * sq);
    if q == 0.0 {
        return vec![0.0];
    }
    vec![q / alpha, c / q]
}

/// All real solutions of the producer coefficient system, sorted by the first
/// component. Method per shape: linear solve for `rho = 0`; scalar or quartic
/// elimination (companion-matrix roots) for one and two regimes; multistart
/// damped Newton from a fixed start set (the `rho = 0` solution with sign and
/// scale perturbations x0.5, x1, x2, x4, plus the origin) otherwise. Every
/// candidate is Newton-polished and gated on the relative residual before it
/// is returned.
pub fn solve_a1(
    u2: &TaxAssignment,
    model: &MarketModel,
    contract: &Contract,
) -> Result<Vec<Vec<f64>>, EquilibriumError> {
    let sys = quad_system(u2, model, contract)?;
    let q = &model.q;
    let m = model.m();

    let mut seeds: Vec<Vec<f64>> = Vec::new();
    if contract.rho == 0.0 {
        if let Some(sol) = linear_solution(&sys, q) {
            seeds.push(sol);
        }
    } else if m == 1 {
        for x in scalar_quadratic_roots(sys.alpha[0], sys.b[0], sys.c[0]) {
            seeds.push(vec![x]);
        }
    } else if m == 2 {
        seeds = two_regime_seeds(&sys, q);
    } else {
        let base = linear_solution(&sys, q).unwrap_or_else(|| vec![0.0; m]);
        for scale in [1.0, 0.5, 2.0, 4.0] {
            for sign in [1.0, -1.0] {
                seeds.push(base.iter().map(|v| sign * scale * v).collect());
            }
        }
        seeds.push(vec![0.0; m]);
    }

    let mut roots: Vec<Vec<f64>> = Vec::new();
    for seed in seeds {
        let Some(polished) = newton_polish(&sys, q, &seed) else { continue };
        if !residual_ok(&sys, q, &polished) {
            continue;
        }
        let duplicate = roots.iter().any(|r| {
            let scale = 1.0 + inf_norm(r).max(inf_norm(&polished));
            r.iter().zip(&polished).all(|(a, b)| (a - b).abs() <= 1e-8 * scale)
        });
        if !duplicate {
            roots.push(polished);
        }
    }
    roots.sort_by(|a, b| a[0].partial_cmp(&b[0]).unwrap());
    if roots.is_empty() {
        return Err(EquilibriumError::NoRealRoot);
    }
    Ok(roots)
}

/// Solution of the system with the quadratic terms dropped (exact for
/// `rho = 0`, Newton starting point otherwise).
fn linear_solution(sys: &QuadSystem, q: &[Vec<f64>]) -> Option<Vec<f64>> {
    let m = sys.b.len();
    let mat = DMatrix::from_fn(m, m, |i, j| if i == j { sys.b[i] } else { q[i][j] });
    let rhs = DVector::from_iterator(m, sys.c.iter().map(|c| -c));
    mat.lu().solve(&rhs).map(|v| v.iter().copied().collect())
}

/// Candidate solutions for two regimes with `rho > 0`: eliminate one variable
/// into a quartic when the coupling allows, fall back to decoupled quadratics
/// when a row of the generator is zero.
fn two_regime_seeds(sys: &QuadSystem, q: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let (a1c, a2c) = (sys.alpha[0], sys.alpha[1]);
    let (b1, b2) = (sys.b[0], sys.b[1]);
    let (c1, c2) = (sys.c[0], sys.c[1]);
    let (q12, q21) = (q[0][1], q[1][0]);
    let mut seeds = Vec::new();
    if q12 != 0.0 {
        // y = -(a1c x^2 + b1 x + c1)/q12 substituted into the second equation:
        // a2c (a1c x^2 + b1 x + c1)^2 - b2 q12 (a1c x^2 + b1 x + c1)
        //   + q12^2 (c2 + q21 x) = 0
        let p4 = a2c * a1c * a1c;
        let p3 = 2.0 * a2c * a1c * b1;
        let p2 = a2c * (b1 * b1 + 2.0 * a1c * c1) - b2 * q12 * a1c;
        let p1 = 2.0 * a2c * b1 * c1 - b2 * q12 * b1 + q12 * q12 * q21;
        let p0 = a2c * c1 * c1 - b2 * q12 * c1 + q12 * q12 * c2;
        for x in polynomial_real_roots(&[p0, p1, p2, p3, p4]) {
            let y = -(a1c * x * x + b1 * x + c1) / q12;
            seeds.push(vec![x, y]);
        }
    } else {
        // First equation decouples; enumerate its roots, then solve the second
        // conditional quadratic for each.
        for x in scalar_quadratic_roots(a1c, b1, c1) {
            for y in scalar_quadratic_roots(a2c, b2, c2 + q21 * x) {
                seeds.push(vec![x, y]);
            }
        }
    }
    seeds
}

/// Proportional extraction gains `K(i) = 1/(2a) - rho a1(i) / (a theta (1 - u2(i)))`.
/// With `rho = 0` this is exactly `1/(2a)` in every regime.
pub fn extraction_gain(
    a1: &[f64],
    u2: &TaxAssignment,
    contract: &Contract,
) -> Result<Vec<f64>, EquilibriumError> {
    assert_eq!(a1.len(), u2.0.len(), "dimension mismatch");
    a1.iter()
        .zip(&u2.0)
        .enumerate()
        .map(|(i, (a1i, u2i))| {
            let share = 1.0 - u2i;
            if share <= 0.0 {
                return Err(EquilibriumError::DegenerateTax { regime: i + 1, rate: *u2i });
            }
            Ok(1.0 / (2.0 * contract.a)
                - contract.rho * a1i / (contract.a * contract.theta * share))
        })
        .collect()
}

/// Government's pointwise-optimal bang-bang tax: `u2_max` where the producer's
/// profit rate coefficient `K - a K^2` is nonnegative (ties included), `u2_min`
/// where it is negative.
pub fn tax_best_response(k: &[f64], contract: &Contract) -> TaxAssignment {
    TaxAssignment(
        k.iter()
            .map(|&ki| {
                if ki - contract.a * ki * ki >= 0.0 { contract.u2_max } else { contract.u2_min }
            })
            .collect(),
    )
}

/// Generator of `t -> E[e^{-rt} X(t)^2 g(alpha(t))]` under proportional
/// extraction `u1 = K(i) x`:
/// diagonal `P(i) = sigma(i)^2 - r + 2(mu(i) - rho K(i)) - sum_{j != i} q_ij + J(i)`,
/// off-diagonal `q_ij`.
pub fn fk_matrix(k: &[f64], model: &MarketModel, contract: &Contract) -> DMatrix<f64> {
    let m = model.m();
    assert_eq!(k.len(), m, "gain dimension mismatch");
    DMatrix::from_fn(m, m, |i, j| {
        if i == j {
            let reg = model.regimes[i];
            reg.sigma * reg.sigma - contract.r + 2.0 * (reg.mu - contract.rho * k[i])
                - model.exit_rate(i)
                + jump_integral(&model.levy, reg.gamma)
        } else {
            model.q[i][j]
        }
    })
}

/// Largest real part of the eigenvalues; negative means the discounted
/// second-moment system decays and stationary values exist.
pub fn stability_abscissa(h: &DMatrix<f64>) -> f64 {
    h.complex_eigenvalues().iter().map(|e| e.re).fold(f64::NEG_INFINITY, f64::max)
}

/// Instantaneous payoff-rate coefficients per unit `x^2`:
/// `c1(i) = theta (1 - u2(i)) (K - aK^2)(i)` for the producer,
/// `c2(i) = (1 - theta + theta u2(i)) (K - aK^2)(i)` for the government.
pub fn payoff_rate_coeffs(
    k: &[f64],
    u2: &TaxAssignment,
    contract: &Contract,
) -> (Vec<f64>, Vec<f64>) {
    assert_eq!(k.len(), u2.0.len(), "dimension mismatch");
    let profit: Vec<f64> = k.iter().map(|&ki| ki - contract.a * ki * ki).collect();
    let c1 = profit
        .iter()
        .zip(&u2.0)
        .map(|(p, u)| contract.theta * (1.0 - u) * p)
        .collect();
    let c2 = profit
        .iter()
        .zip(&u2.0)
        .map(|(p, u)| (1.0 - contract.theta + contract.theta * u) * p)
        .collect();
    (c1, c2)
}

/// Government value coefficients from the linear Feynman-Kac system
/// `(-H) a2 = c2`.
pub fn solve_a2(
    k: &[f64],
    u2: &TaxAssignment,
    model: &MarketModel,
    contract: &Contract,
) -> Result<Vec<f64>, EquilibriumError> {
    let h = fk_matrix(k, model, contract);
    let (_, c2) = payoff_rate_coeffs(k, u2, contract);
    solve_neg_h(&h, &c2)
}

pub(crate) fn solve_neg_h(h: &DMatrix<f64>, c: &[f64]) -> Result<Vec<f64>, EquilibriumError> {
    let m = h.nrows();
    let neg = -h.clone();
    let lu = neg.lu();
    let det = lu.determinant();
    let scale = h.amax().max(1.0).powi(m as i32);
    if det.abs() <= 1e-14 * scale {
        return Err(EquilibriumError::SingularSystem { det });
    }
    let rhs = DVector::from_column_slice(c);
    let sol = lu.solve(&rhs).ok_or(EquilibriumError::SingularSystem { det })?;
    Ok(sol.iter().copied().collect())
}

/// Two-regime government coefficients by the explicit determinant formulas
/// (independent cross-check of [`solve_a2`]): with `R = -c2` and `P` the
/// diagonal of `H`,
/// `A2(1) = (R(1) P(2) - q12 R(2)) / (P(1) P(2) - q12 q21)` and symmetrically.
pub fn solve_a2_two_state(
    k: &[f64],
    u2: &TaxAssignment,
    model: &MarketModel,
    contract: &Contract,
) -> Result<[f64; 2], EquilibriumError> {
    assert_eq!(model.m(), 2, "two-regime closed form");
    let reg = |i: usize| {
        let rp = model.regimes[i];
        rp.sigma * rp.sigma - contract.r + 2.0 * (rp.mu - contract.rho * k[i])
            - model.exit_rate(i)
            + jump_integral(&model.levy, rp.gamma)
    };
    let (p1, p2) = (reg(0), reg(1));
    let (q12, q21) = (model.q[0][1], model.q[1][0]);
    let (_, c2) = payoff_rate_coeffs(k, u2, contract);
    let (r1, r2) = (-c2[0], -c2[1]);
    let det = p1 * p2 - q12 * q21;
    let scale = [p1, p2, q12, q21].iter().fold(1.0f64, |s, v| s.max(v.abs())).powi(2);
    if det.abs() <= 1e-14 * scale {
        return Err(EquilibriumError::SingularSystem { det });
    }
    Ok([(r1 * p2 - q12 * r2) / det, (p1 * r2 - q21 * r1) / det])
}

/// One candidate root examined during equilibrium search.
#[derive(Debug, Clone)]
pub struct CandidateRoot {
    /// Tax rates of the assignment the root was solved under.
    pub u2: Vec<f64>,
    pub a1: Vec<f64>,
    pub k: Vec<f64>,
    pub abscissa: f64,
    /// Passes admissibility (a1 >= 0, K >= 0, stable) and best-response
    /// consistency.
    pub admissible: bool,
    /// First failed check, regime indices one-based (e.g. "K(1) < 0").
    pub rejection: Option<String>,
}

/// Feedback Nash equilibrium of the game.
#[derive(Debug, Clone)]
pub struct Equilibrium {
    pub u2: TaxAssignment,
    pub a1: Vec<f64>,
    pub a2: Vec<f64>,
    /// Proportional extraction gains.
    pub k: Vec<f64>,
    /// Stability abscissa of the value-propagation matrix.
    pub abscissa: f64,
    /// `max_i |(H a1 + c1)(i)|`, recorded as a consistency diagnostic.
    pub fk_residual: f64,
    /// Every real root examined, with verdicts.
    pub all_roots: Vec<CandidateRoot>,
    pub warnings: Vec<String>,
}

fn rejection_reason(
    a1: &[f64],
    k: &[f64],
    abscissa: f64,
    u2: &TaxAssignment,
    contract: &Contract,
) -> Option<String> {
    for (i, v) in a1.iter().enumerate() {
        if *v < 0.0 {
            return Some(format!("A1({}) < 0", i + 1));
        }
    }
    for (i, v) in k.iter().enumerate() {
        if *v < 0.0 {
            return Some(format!("K({}) < 0", i + 1));
        }
    }
    if abscissa >= 0.0 {
        return Some(format!("unstable: abscissa {abscissa:.3e} >= 0"));
    }
    for (i, &ki) in k.iter().enumerate() {
        let profit = ki - contract.a * ki * ki;
        if profit > 0.0 && u2.0[i] != contract.u2_max {
            return Some(format!("tax best response prefers u2_max in regime {}", i + 1));
        }
        if profit < 0.0 && u2.0[i] != contract.u2_min {
            return Some(format!("tax best response prefers u2_min in regime {}", i + 1));
        }
        // profit == 0: either bound is a best response.
    }
    None
}

/// Search every bang-bang tax assignment for self-consistent admissible
/// equilibria and select the producer-preferred one (largest `a1(1)`).
pub fn find_equilibrium(
    model: &MarketModel,
    contract: &Contract,
) -> Result<Equilibrium, EquilibriumError> {
    find_equilibrium_at(model, contract, None)
}

/// As [`find_equilibrium`], additionally warning when the equilibrium
/// extraction rate exceeds `u1_max` at the reference price `x_ref`.
pub fn find_equilibrium_at(
    model: &MarketModel,
    contract: &Contract,
    x_ref: Option<f64>,
) -> Result<Equilibrium, EquilibriumError> {
    let m = model.m();
    let mut all_roots: Vec<CandidateRoot> = Vec::new();
    let mut survivors: Vec<usize> = Vec::new();

    for mask in 0..(1usize << m) {
        let u2 = TaxAssignment::from_mask(contract, m, mask);
        let roots = match solve_a1(&u2, model, contract) {
            Ok(r) => r,
            Err(EquilibriumError::NoRealRoot) => continue,
            Err(e) => return Err(e),
        };
        for a1 in roots {
            let k = extraction_gain(&a1, &u2, contract)?;
            let h = fk_matrix(&k, model, contract);
            let abscissa = stability_abscissa(&h);
            let rejection = rejection_reason(&a1, &k, abscissa, &u2, contract);
            let admissible = rejection.is_none();
            if admissible {
                survivors.push(all_roots.len());
            }
            all_roots.push(CandidateRoot {
                u2: u2.0.clone(),
                a1,
                k,
                abscissa,
                admissible,
                rejection,
            });
        }
    }

    let Some(&best) = survivors
        .iter()
        .max_by(|&&x, &&y| all_roots[x].a1[0].partial_cmp(&all_roots[y].a1[0]).unwrap())
    else {
        return Err(EquilibriumError::NoEquilibrium);
    };

    let mut warnings = Vec::new();
    if survivors.len() > 1 {
        warnings.push(format!(
            "{} admissible equilibria found; selected the one with the largest A1(1)",
            survivors.len()
        ));
    }

    let chosen = all_roots[best].clone();
    let u2 = TaxAssignment(chosen.u2.clone());
    let h = fk_matrix(&chosen.k, model, contract);
    let (c1, _) = payoff_rate_coeffs(&chosen.k, &u2, contract);
    let a2 = solve_a2(&chosen.k, &u2, model, contract)?;

    // The quadratic system rearranges exactly into H a1 + c1 = 0; a large
    // residual indicates a numerically unreliable root.
    let a1_vec = DVector::from_column_slice(&chosen.a1);
    let fk = &h * &a1_vec + DVector::from_column_slice(&c1);
    let fk_residual = fk.amax();
    if fk_residual > 1e-8 * (1.0 + inf_norm(&chosen.a1)) {
        warnings.push(format!(
            "value-propagation identity violated: residual {fk_residual:.3e}"
        ));
    }

    if let Some(x) = x_ref {
        for (i, &ki) in chosen.k.iter().enumerate() {
            let u1 = ki * x;
            if u1 > contract.u1_max {
                warnings.push(format!(
                    "equilibrium extraction {u1:.6} in regime {} exceeds u1_max {} at reference price {x}",
                    i + 1,
                    contract.u1_max
                ));
            }
        }
    }

    Ok(Equilibrium {
        u2,
        a1: chosen.a1,
        a2,
        k: chosen.k,
        abscissa: chosen.abscissa,
        fk_residual,
        all_roots,
        warnings,
    })
}
