//! Power allocation with statistical CSIT at the central station.
//!
//! After ZF, `|a_ik|^2` is Gamma distributed with shape `d = M - K̃ + 1` and
//! scale `beta_ik = sigma_ik / d`, so the received SNR of user `k` for fixed
//! powers has Laplace transform `prod_i (1 + s beta_ik p_ik)^(-d)`. The
//! allocation minimizes the product-form Chernoff bound on the joint outage,
//! alternating between the per-user Chernoff parameters `lambda_k` and
//! per-BS power splits.

use crate::channel::LinkVariances;
use crate::error::{Error, Result};
use crate::rates::PowerAllocation;

const BISECTION_STEPS: usize = 200;

#[derive(Debug, Clone, PartialEq)]
pub struct ChernoffProblem {
    bs: usize,
    served: usize,
    /// `beta_ik = sigma_ik / dof`, row-major B x K̃.
    beta: Vec<f64>,
    c: Vec<f64>,
    budgets: Vec<f64>,
    dof: u32,
}

impl ChernoffProblem {
    /// `sigma` is B x K̃ (only the served users), `c` the target SNRs.
    pub fn new(sigma: Vec<Vec<f64>>, c: Vec<f64>, budgets: Vec<f64>, dof: u32) -> Result<Self> {
        let bs = sigma.len();
        if bs == 0 || budgets.len() != bs {
            return Err(Error::InvalidInput("one variance row per BS budget required".into()));
        }
        let served = c.len();
        if served == 0 || sigma.iter().any(|r| r.len() != served) {
            return Err(Error::InvalidInput("variance rows must match the number of targets".into()));
        }
        if dof == 0 {
            return Err(Error::InvalidInput("degrees of freedom M - K + 1 must be at least 1".into()));
        }
        if c.iter().any(|x| !(x.is_finite() && *x > 0.0)) {
            return Err(Error::InvalidInput("target SNRs must be positive".into()));
        }
        if budgets.iter().any(|b| !(b.is_finite() && *b >= 0.0)) {
            return Err(Error::InvalidInput("budgets must be finite and nonnegative".into()));
        }
        let d = f64::from(dof);
        let beta: Vec<f64> = sigma.into_iter().flatten().map(|s| s / d).collect();
        if beta.iter().any(|b| !(b.is_finite() && *b > 0.0)) {
            return Err(Error::InvalidInput("variances must be positive".into()));
        }
        Ok(Self {
            bs,
            served,
            beta,
            c,
            budgets,
            dof,
        })
    }

    /// Problem for the served users `served` of a full variance matrix,
    /// with `M` antennas per BS.
    pub fn from_variances(
        sigma: &LinkVariances,
        served: &[usize],
        c: Vec<f64>,
        budgets: Vec<f64>,
        antennas: usize,
    ) -> Result<Self> {
        if served.len() > antennas {
            return Err(Error::InvalidInput("more served users than antennas".into()));
        }
        let dof = (antennas - served.len() + 1) as u32;
        let rows = (0..sigma.bs())
            .map(|i| served.iter().map(|&k| sigma.get(i, k)).collect())
            .collect();
        Self::new(rows, c, budgets, dof)
    }

    pub fn bs(&self) -> usize {
        self.bs
    }

    pub fn served(&self) -> usize {
        self.served
    }

    pub fn beta(&self, i: usize, k: usize) -> f64 {
        self.beta[i * self.served + k]
    }

    pub fn target_snr(&self, k: usize) -> f64 {
        self.c[k]
    }

    pub fn budgets(&self) -> &[f64] {
        &self.budgets
    }

    pub fn dof(&self) -> u32 {
        self.dof
    }

    /// Same problem with every budget replaced.
    pub fn with_budgets(&self, budgets: Vec<f64>) -> Result<Self> {
        if budgets.len() != self.bs {
            return Err(Error::InvalidInput("budget count mismatch".into()));
        }
        Ok(Self {
            budgets,
            ..self.clone()
        })
    }

    /// `sum_i beta_ik p_ik`
    pub fn mean_snr(&self, p_col: &[f64], k: usize) -> f64 {
        p_col.iter().enumerate().map(|(i, p)| self.beta(i, k) * p).sum()
    }
}

/// `E[exp(-s Delta_k)] = prod_i (1 + s p_ik beta_ik)^(-dof)`
pub fn laplace_transform(p_col: &[f64], prob: &ChernoffProblem, k: usize, s: f64) -> f64 {
    log_laplace(p_col, prob, k, s).exp()
}

fn log_laplace(p_col: &[f64], prob: &ChernoffProblem, k: usize, s: f64) -> f64 {
    let d = f64::from(prob.dof);
    -d * p_col
        .iter()
        .enumerate()
        .map(|(i, p)| (s * p * prob.beta(i, k)).ln_1p())
        .sum::<f64>()
}

/// `h_k = exp(lambda c_k) * laplace_transform(lambda)`
pub fn chernoff_term(lambda: f64, p_col: &[f64], prob: &ChernoffProblem, k: usize) -> f64 {
    (lambda * prob.c[k] + log_laplace(p_col, prob, k, lambda)).exp()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LambdaSolution {
    pub lambda: f64,
    /// `c_k / dof >= sum_i beta_ik p_ik`: the minimizer is `lambda = 0`
    /// and the bound is trivial (`h_k >= 1`).
    pub trivial: bool,
}

/// Minimizer of `h_k` over `lambda >= 0`: the root of
/// `c_k / dof = sum_i beta_ik p_ik / (1 + lambda beta_ik p_ik)`.
///
/// The right side decreases strictly from `sum beta p` to zero, so the root
/// is bracketed by `[0, dof B / c_k + 1 / min beta p]` and found by bisection.
pub fn solve_lambda(p_col: &[f64], prob: &ChernoffProblem, k: usize) -> LambdaSolution {
    let target = prob.c[k] / f64::from(prob.dof);
    let terms: Vec<f64> = p_col
        .iter()
        .enumerate()
        .map(|(i, p)| prob.beta(i, k) * p)
        .filter(|x| *x > 0.0)
        .collect();
    let total: f64 = terms.iter().sum();
    if !(target < total) {
        return LambdaSolution {
            lambda: 0.0,
            trivial: true,
        };
    }
    let rhs = |lambda: f64| terms.iter().map(|x| x / (1.0 + lambda * x)).sum::<f64>();
    let smallest = terms.iter().copied().fold(f64::INFINITY, f64::min);
    let (mut lo, mut hi) = (0.0, terms.len() as f64 / target + 1.0 / smallest);
    for _ in 0..BISECTION_STEPS {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if rhs(mid) > target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    LambdaSolution {
        lambda: 0.5 * (lo + hi),
        trivial: false,
    }
}

/// Relative residual of the stationarity equation for `lambda`.
pub fn lambda_residual(lambda: f64, p_col: &[f64], prob: &ChernoffProblem, k: usize) -> f64 {
    let target = prob.c[k] / f64::from(prob.dof);
    let rhs: f64 = p_col
        .iter()
        .enumerate()
        .map(|(i, p)| {
            let x = prob.beta(i, k) * p;
            x / (1.0 + lambda * x)
        })
        .sum();
    (rhs - target).abs() / target
}

/// Quadratic closed form of the two-BS stationarity equation, with
/// `x = beta_1k p_1k`, `y = beta_2k p_2k`, `r = c_k / dof`:
/// `lambda = [-(x + y - 2xy/r) + sqrt((x - y)^2 + (2xy/r)^2)] / (2xy)`.
/// When one product vanishes the single-term root `1/r - 1/(x + y)` applies.
///
/// Kept as an independent cross-check of [`solve_lambda`]; not used by the
/// allocation itself.
pub fn closed_form_lambda_two_bs(x: f64, y: f64, c: f64, dof: u32) -> f64 {
    let r = c / f64::from(dof);
    if x == 0.0 || y == 0.0 {
        return 1.0 / r - 1.0 / (x + y);
    }
    let q = 2.0 * x * y / r;
    (-(x + y - q) + ((x - y).powi(2) + q * q).sqrt()) / (2.0 * x * y)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChernoffOptions {
    pub max_sweeps: usize,
    /// Relative change of the joint bound `1 - f` over one sweep.
    pub tolerance: f64,
    /// Largest relative spread of the power multipliers at a BS.
    pub kkt_tolerance: f64,
}

impl Default for ChernoffOptions {
    fn default() -> Self {
        Self {
            max_sweeps: 1_000,
            tolerance: 1e-10,
            kkt_tolerance: 1e-8,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChernoffState {
    pub lambda: Vec<f64>,
    pub p: PowerAllocation,
    /// `h_k(lambda_k, p^k)`; exactly 1 for users whose bound is trivial.
    pub h: Vec<f64>,
    /// `f = prod_k (1 - h_k)`
    pub objective: f64,
    pub sweeps: usize,
    /// Objective after every per-BS update.
    pub history: Vec<f64>,
    /// Users left without power because their bound could not drop below 1.
    pub flagged: Vec<usize>,
}

/// `1 - prod_k (1 - min(h_k, 1))`
pub fn approx_outage_bound(state: &ChernoffState) -> f64 {
    joint_bound_from_terms(&state.h)
}

fn joint_bound_from_terms(h: &[f64]) -> f64 {
    // 1 - prod (1 - h_k) accurate for tiny h_k
    -h.iter().map(|x| (-x.min(1.0)).ln_1p()).sum::<f64>().exp_m1()
}

/// Minimized per-user Chernoff bound `min_lambda h_k` for fixed powers.
pub fn per_user_bound(prob: &ChernoffProblem, p: &PowerAllocation, k: usize) -> f64 {
    let col = p.column(k);
    let sol = solve_lambda(&col, prob, k);
    if sol.trivial {
        1.0
    } else {
        chernoff_term(sol.lambda, &col, prob, k).min(1.0)
    }
}

/// Product-form joint bound for an arbitrary feasible allocation.
pub fn joint_bound(prob: &ChernoffProblem, p: &PowerAllocation) -> f64 {
    let h: Vec<f64> = (0..prob.served).map(|k| per_user_bound(prob, p, k)).collect();
    joint_bound_from_terms(&h)
}

/// Left side of the power KKT condition,
/// `h_k / (1 - h_k) * beta_ik lambda_k / (1 + p_ik beta_ik lambda_k)`.
pub fn phi(prob: &ChernoffProblem, lambda: &[f64], p: &PowerAllocation, i: usize, k: usize) -> f64 {
    let h = chernoff_term(lambda[k], &p.column(k), prob, k);
    let bl = prob.beta(i, k) * lambda[k];
    h / (1.0 - h) * bl / (1.0 + p.get(i, k) * bl)
}

/// Largest relative spread of `phi_ik` among the powered users of each BS,
/// together with any violation by unpowered users.
pub fn power_kkt_residual(prob: &ChernoffProblem, state: &ChernoffState) -> f64 {
    kkt_spread(prob, &state.lambda, &state.p, &state.flagged)
}

fn kkt_spread(prob: &ChernoffProblem, lambda: &[f64], p: &PowerAllocation, flagged: &[usize]) -> f64 {
    let mut worst: f64 = 0.0;
    for i in 0..prob.bs {
        let live: Vec<usize> = (0..prob.served).filter(|k| !flagged.contains(k)).collect();
        let values: Vec<(f64, bool)> = live
            .iter()
            .map(|&k| (phi(prob, lambda, p, i, k), p.get(i, k) > 0.0))
            .collect();
        let level = values.iter().map(|v| v.0).fold(0.0, f64::max);
        if level <= 0.0 {
            continue;
        }
        for (v, on) in values {
            if on {
                worst = worst.max((level - v) / level);
            }
        }
    }
    worst
}

/// Alternating minimization of the product Chernoff bound.
pub fn algorithm_a2(prob: &ChernoffProblem) -> Result<ChernoffState> {
    algorithm_a2_with(prob, ChernoffOptions::default())
}

/// Users whose bound stays trivial under the equal split are switched off
/// and their share goes to the others, repeatedly; the remaining users start
/// from an equal split. Each sweep then updates, BS by BS, every `lambda_k`
/// for the current powers and the BS's power vector for those `lambda`.
pub fn algorithm_a2_with(prob: &ChernoffProblem, opts: ChernoffOptions) -> Result<ChernoffState> {
    let (bs, served) = (prob.bs, prob.served);
    let mut active: Vec<usize> = (0..served).collect();
    let mut flagged = Vec::new();
    let mut p = split_equally(prob, &active);
    loop {
        let newly: Vec<usize> = active
            .iter()
            .copied()
            .filter(|&k| solve_lambda(&p.column(k), prob, k).trivial)
            .collect();
        if newly.is_empty() {
            break;
        }
        active.retain(|k| !newly.contains(k));
        flagged.extend(newly);
        p = split_equally(prob, &active);
    }
    flagged.sort_unstable();

    if active.is_empty() {
        let p = PowerAllocation::equal(prob.budgets.clone(), served);
        return Ok(ChernoffState {
            lambda: vec![0.0; served],
            p,
            h: vec![1.0; served],
            objective: 0.0,
            sweeps: 0,
            history: Vec::new(),
            flagged,
        });
    }

    let mut lambda = vec![0.0; served];
    update_lambda(prob, &p, &active, &mut lambda);
    let mut objective = objective_at(prob, &p, &lambda, &flagged);
    let mut history = vec![objective];
    let mut bound = bound_at(prob, &p, &lambda, &flagged);

    let mut sweeps = 0;
    let mut converged = false;
    while sweeps < opts.max_sweeps {
        sweeps += 1;
        let before = bound;
        for i in 0..bs {
            update_lambda(prob, &p, &active, &mut lambda);
            if prob.budgets[i] > 0.0 {
                let row = line_search(prob, &p, &lambda, &active, i);
                p.set_row(i, &row);
            }
            objective = objective_at(prob, &p, &lambda, &flagged);
            history.push(objective);
        }
        bound = bound_at(prob, &p, &lambda, &flagged);
        // relative change of 1 - f, which stays resolvable when f is near 1
        let settled = (bound - before).abs() <= opts.tolerance * bound;
        let mut fresh = lambda.clone();
        update_lambda(prob, &p, &active, &mut fresh);
        if settled && kkt_spread(prob, &fresh, &p, &flagged) <= opts.kkt_tolerance {
            converged = true;
            break;
        }
    }

    update_lambda(prob, &p, &active, &mut lambda);
    let h: Vec<f64> = (0..served)
        .map(|k| {
            if flagged.contains(&k) {
                1.0
            } else {
                chernoff_term(lambda[k], &p.column(k), prob, k)
            }
        })
        .collect();
    objective = h.iter().map(|x| 1.0 - x.min(1.0)).product();
    history.push(objective);
    let state = ChernoffState {
        lambda,
        p,
        h,
        objective,
        sweeps,
        history,
        flagged,
    };
    if converged {
        Ok(state)
    } else {
        Err(Error::ChernoffNotConverged {
            sweeps,
            state: Box::new(state),
        })
    }
}

fn split_equally(prob: &ChernoffProblem, active: &[usize]) -> PowerAllocation {
    let mut p = PowerAllocation::zeros(prob.budgets.clone(), prob.served);
    if active.is_empty() {
        return p;
    }
    for i in 0..prob.bs {
        let share = prob.budgets[i] / active.len() as f64;
        for &k in active {
            p.set(i, k, share);
        }
    }
    p
}

fn update_lambda(prob: &ChernoffProblem, p: &PowerAllocation, active: &[usize], lambda: &mut [f64]) {
    for &k in active {
        lambda[k] = solve_lambda(&p.column(k), prob, k).lambda;
    }
}

fn objective_at(prob: &ChernoffProblem, p: &PowerAllocation, lambda: &[f64], flagged: &[usize]) -> f64 {
    if !flagged.is_empty() {
        return 0.0;
    }
    (0..prob.served)
        .map(|k| 1.0 - chernoff_term(lambda[k], &p.column(k), prob, k).min(1.0))
        .product()
}

fn bound_at(prob: &ChernoffProblem, p: &PowerAllocation, lambda: &[f64], flagged: &[usize]) -> f64 {
    if !flagged.is_empty() {
        return 1.0;
    }
    let h: Vec<f64> = (0..prob.served)
        .map(|k| chernoff_term(lambda[k], &p.column(k), prob, k))
        .collect();
    joint_bound_from_terms(&h)
}

/// Per-user view of the BS-`i` subproblem with everything else frozen:
/// `ln h_k(q) = rest - dof ln(1 + b q)` with `b = beta_ik lambda_k`.
struct UserSlice {
    rest: f64,
    b: f64,
    dof: f64,
    /// Smallest power keeping `h_k < 1`.
    floor: f64,
}

impl UserSlice {
    fn phi(&self, q: f64) -> f64 {
        let log_h = self.rest - self.dof * (self.b * q).ln_1p();
        if log_h >= 0.0 {
            return f64::INFINITY;
        }
        let h = log_h.exp();
        // h / (1 - h) without cancellation near h = 1
        h / -log_h.exp_m1() * self.b / (1.0 + self.b * q)
    }

    /// Power with `phi(q) = mu`, or zero if `phi(0) <= mu`.
    fn power_at(&self, mu: f64, scale: f64) -> f64 {
        if self.floor == 0.0 && self.phi(0.0) <= mu {
            return 0.0;
        }
        let mut lo = self.floor;
        let mut hi = self.floor.max(scale).max(f64::MIN_POSITIVE) * 2.0;
        let mut guard = 0;
        while self.phi(hi) > mu && guard < 2_000 {
            lo = hi;
            hi *= 2.0;
            guard += 1;
        }
        for _ in 0..BISECTION_STEPS {
            let mid = 0.5 * (lo + hi);
            if mid <= lo || mid >= hi {
                break;
            }
            if self.phi(mid) > mu {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        0.5 * (lo + hi)
    }
}

/// Powers of BS `i` meeting its budget with a common multiplier
/// `phi_ik = mu_i` for the powered users (outer bisection on `ln mu`).
fn line_search(prob: &ChernoffProblem, p: &PowerAllocation, lambda: &[f64], active: &[usize], i: usize) -> Vec<f64> {
    let budget = prob.budgets[i];
    let dof = f64::from(prob.dof);
    let slices: Vec<UserSlice> = active
        .iter()
        .map(|&k| {
            let mut rest = lambda[k] * prob.c[k];
            for j in 0..prob.bs {
                if j != i {
                    rest -= dof * (prob.beta(j, k) * lambda[k] * p.get(j, k)).ln_1p();
                }
            }
            let b = prob.beta(i, k) * lambda[k];
            let floor = if rest > 0.0 { (rest / dof).exp_m1() / b } else { 0.0 };
            UserSlice { rest, b, dof, floor }
        })
        .collect();

    let total = |mu: f64| slices.iter().map(|s| s.power_at(mu, budget)).sum::<f64>();
    let current: Vec<f64> = active.iter().map(|&k| p.get(i, k)).collect();
    let seed = slices
        .iter()
        .zip(&current)
        .map(|(s, q)| s.phi(*q))
        .filter(|v| v.is_finite() && *v > 0.0)
        .fold(0.0, f64::max)
        .max(f64::MIN_POSITIVE);

    let (mut lo, mut hi) = (seed.ln(), seed.ln());
    while total(lo.exp()) < budget && lo > -700.0 {
        lo -= 2.0;
    }
    while total(hi.exp()) > budget && hi < 700.0 {
        hi += 2.0;
    }
    for _ in 0..BISECTION_STEPS {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if total(mid.exp()) > budget {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let mu = (0.5 * (lo + hi)).exp();
    let mut powers: Vec<f64> = slices.iter().map(|s| s.power_at(mu, budget)).collect();
    let sum: f64 = powers.iter().sum();
    if sum > 0.0 {
        let scale = budget / sum;
        for q in &mut powers {
            *q *= scale;
        }
    }
    let mut row = vec![0.0; prob.served];
    for (q, &k) in powers.into_iter().zip(active) {
        row[k] = q;
    }
    row
}

#[cfg(test)]
mod tests {
    use super::*;

    fn problem(rows: Vec<Vec<f64>>, c: Vec<f64>, budgets: Vec<f64>, dof: u32) -> ChernoffProblem {
        ChernoffProblem::new(rows, c, budgets, dof).unwrap()
    }

    #[test]
    fn laplace_examples() {
        let prob = problem(vec![vec![1.0]], vec![1.0], vec![1.0], 1);
        assert_eq!(laplace_transform(&[3.0], &prob, 0, 0.0), 1.0);
        assert_eq!(laplace_transform(&[0.0], &prob, 0, 5.0), 1.0);
        assert!((laplace_transform(&[1.0], &prob, 0, 1.0) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn chernoff_term_examples() {
        let prob = problem(vec![vec![1.0]], vec![2.0], vec![1.0], 1);
        assert!((chernoff_term(0.0, &[1.0], &prob, 0) - 1.0).abs() < 1e-15);
        let h = chernoff_term(0.7, &[0.0], &prob, 0);
        assert!((h - (0.7f64 * 2.0).exp()).abs() < 1e-12);
        assert!(h > 1.0);
    }

    #[test]
    fn trivial_lambda() {
        // sum beta p = 1 <= c / dof = 2
        let prob = problem(vec![vec![1.0]], vec![2.0], vec![1.0], 1);
        let sol = solve_lambda(&[1.0], &prob, 0);
        assert!(sol.trivial);
        assert_eq!(sol.lambda, 0.0);
    }

    #[test]
    fn single_term_lambda() {
        // dof = 3, sigma = 3 -> beta = 1; p = 2 -> beta p = 2; c = 1.5
        let prob = problem(vec![vec![3.0]], vec![1.5], vec![2.0], 3);
        let sol = solve_lambda(&[2.0], &prob, 0);
        let expect = 3.0 / 1.5 - 1.0 / 2.0;
        assert!((sol.lambda - expect).abs() < 1e-12 * expect);
    }

    #[test]
    fn two_bs_lambda_matches_closed_form() {
        let prob = problem(vec![vec![0.9], vec![2.4]], vec![1.3], vec![1.0, 1.0], 3);
        let p = [1.7, 0.6];
        let sol = solve_lambda(&p, &prob, 0);
        let cf = closed_form_lambda_two_bs(0.3 * 1.7, 0.8 * 0.6, 1.3, 3);
        assert!((sol.lambda - cf).abs() <= 1e-10 * cf);
        assert!(lambda_residual(sol.lambda, &p, &prob, 0) < 1e-8);
    }

    #[test]
    fn closed_form_lambda_is_grid_minimum() {
        // dof = 3, beta p = (1, 1), c = 1
        let prob = problem(vec![vec![3.0], vec![3.0]], vec![1.0], vec![1.0, 1.0], 3);
        let p = [1.0, 1.0];
        let lambda = closed_form_lambda_two_bs(1.0, 1.0, 1.0, 3);
        let at = chernoff_term(lambda, &p, &prob, 0);
        let grid_min = (0..=200_000)
            .map(|j| chernoff_term(j as f64 * 1e-4, &p, &prob, 0))
            .fold(f64::INFINITY, f64::min);
        assert!(at <= grid_min + 1e-15);
        // two equal terms: 1/2 = 2 / (1 + lambda) -> lambda = 5
        assert!((lambda - 5.0).abs() < 1e-12);
    }

    #[test]
    fn symmetric_problem_splits_equally() {
        let prob = problem(vec![vec![1.0, 1.0], vec![1.0, 1.0]], vec![3.0, 3.0], vec![100.0, 60.0], 2);
        let state = algorithm_a2(&prob).unwrap();
        for i in 0..2 {
            let half = prob.budgets()[i] / 2.0;
            for k in 0..2 {
                assert!((state.p.get(i, k) - half).abs() < 1e-6 * half);
            }
        }
    }

    #[test]
    fn a2_improves_on_equal_power() {
        let prob = problem(vec![vec![1.0, 0.2], vec![0.3, 1.5]], vec![7.0, 1.0], vec![200.0, 200.0], 3);
        let state = algorithm_a2(&prob).unwrap();
        let eq = joint_bound(&prob, &PowerAllocation::equal(vec![200.0, 200.0], 2));
        assert!(approx_outage_bound(&state) <= eq + 1e-15);
        for pair in state.history.windows(2) {
            assert!(pair[1] >= pair[0] - 1e-12);
        }
        for i in 0..2 {
            assert!((state.p.row_total(i) - 200.0).abs() <= 1e-10 * 200.0);
        }
        for k in 0..2 {
            assert!(lambda_residual(state.lambda[k], &state.p.column(k), &prob, k) < 1e-8);
        }
        let r = power_kkt_residual(&prob, &state);
        assert!(r < 1e-6, "kkt {r} sweeps {} p {:?} lambda {:?} h {:?}", state.sweeps, state.p, state.lambda, state.h);
    }

    #[test]
    fn hopeless_user_is_switched_off() {
        // user 1 needs c/dof = 100 but can collect at most beta (P1 + P2) = 2
        let prob = problem(vec![vec![1.0, 1.0], vec![1.0, 1.0]], vec![100.0, 0.5], vec![1.0, 1.0], 1);
        let state = algorithm_a2(&prob).unwrap();
        assert_eq!(state.flagged, vec![0]);
        assert_eq!(state.p.column(0), vec![0.0, 0.0]);
        assert!((state.p.get(0, 1) - 1.0).abs() < 1e-12);
        assert_eq!(approx_outage_bound(&state), 1.0);
    }

    #[test]
    fn all_hopeless_users_get_equal_power() {
        let prob = problem(vec![vec![1.0, 1.0]], vec![100.0, 100.0], vec![1.0], 1);
        let state = algorithm_a2(&prob).unwrap();
        assert_eq!(state.flagged, vec![0, 1]);
        assert_eq!(state.p.row(0), &[0.5, 0.5]);
        assert_eq!(approx_outage_bound(&state), 1.0);
    }

    #[test]
    fn bound_limits() {
        let mut state = ChernoffState {
            lambda: vec![1.0, 1.0],
            p: PowerAllocation::equal(vec![1.0], 2),
            h: vec![0.0, 0.0],
            objective: 1.0,
            sweeps: 0,
            history: vec![],
            flagged: vec![],
        };
        assert_eq!(approx_outage_bound(&state), 0.0);
        state.h = vec![0.2, 1.3];
        assert_eq!(approx_outage_bound(&state), 1.0);
    }

    #[test]
    fn h_is_convex_with_interior_minimum() {
        let prob = problem(vec![vec![1.0], vec![0.5]], vec![2.0], vec![1.0, 1.0], 2);
        let p = [4.0, 3.0];
        let sol = solve_lambda(&p, &prob, 0);
        let grid: Vec<f64> = (0..400).map(|j| chernoff_term(j as f64 * 0.01, &p, &prob, 0)).collect();
        for w in grid.windows(3) {
            assert!(w[0] - 2.0 * w[1] + w[2] > -1e-14);
        }
        let at = chernoff_term(sol.lambda, &p, &prob, 0);
        assert!(grid.iter().all(|g| *g >= at - 1e-15));
    }
}
