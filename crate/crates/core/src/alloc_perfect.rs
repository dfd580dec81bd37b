//! Power allocation with perfect CSIT at the central station.
//!
//! The inner problem maximizes a weighted sum rate over the parallel MISO
//! channels by iterative multi-BS waterfilling: each BS in turn waterfills
//! its own budget while the other BSs' contributions `c_ik` are treated as
//! extra noise. The outer problem moves the weights by projected subgradient
//! steps until the rates are proportional to the targets (rate balancing).

use log::debug;

use crate::channel::EffectiveChannel;
use crate::error::{Error, Result};
use crate::rates::{user_rate, PowerAllocation, TargetRates};

const BISECTION_STEPS: usize = 200;

#[derive(Debug, Clone, PartialEq)]
pub struct WaterfillOutcome {
    pub powers: Vec<f64>,
    /// Water level `mu`; zero when nothing was allocated.
    pub water_level: f64,
    /// Set when no user has both positive gain and positive weight.
    pub degenerate: bool,
}

fn eligible(gain: f64, weight: f64) -> bool {
    gain > 0.0 && weight > 0.0
}

fn fill(level: f64, gains: &[f64], noise: &[f64], weights: &[f64], out: &mut [f64]) -> f64 {
    let mut total = 0.0;
    for k in 0..gains.len() {
        out[k] = if eligible(gains[k], weights[k]) {
            (weights[k] * level - noise[k] / gains[k]).max(0.0)
        } else {
            0.0
        };
        total += out[k];
    }
    total
}

/// Single-BS weighted waterfilling `p_k = [w_k mu - n_k / g_k]_+` with
/// `sum_k p_k = budget`.
///
/// `mu` is bracketed by bisection on the monotone map `mu -> sum_k p_k`;
/// once the active set is pinned down the level is recomputed in closed form
/// on that set so the budget is met to rounding.
pub fn waterfill_single_bs(gains: &[f64], noise_plus_interf: &[f64], weights: &[f64], budget: f64) -> WaterfillOutcome {
    let n = gains.len();
    debug_assert_eq!(noise_plus_interf.len(), n);
    debug_assert_eq!(weights.len(), n);
    let mut powers = vec![0.0; n];
    let active: Vec<usize> = (0..n).filter(|&k| eligible(gains[k], weights[k])).collect();
    if active.is_empty() || !(budget > 0.0) {
        return WaterfillOutcome {
            powers,
            water_level: 0.0,
            degenerate: active.is_empty(),
        };
    }

    let min_w = active.iter().map(|&k| weights[k]).fold(f64::INFINITY, f64::min);
    let floor_sum: f64 = active.iter().map(|&k| noise_plus_interf[k] / gains[k]).sum();
    let (mut lo, mut hi) = (0.0, (budget + floor_sum) / min_w);
    for _ in 0..BISECTION_STEPS {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if fill(mid, gains, noise_plus_interf, weights, &mut powers) < budget {
            lo = mid;
        } else {
            hi = mid;
        }
    }

    let mut level = 0.5 * (lo + hi);
    let on: Vec<usize> = active
        .iter()
        .copied()
        .filter(|&k| weights[k] * level > noise_plus_interf[k] / gains[k])
        .collect();
    if !on.is_empty() {
        let w_sum: f64 = on.iter().map(|&k| weights[k]).sum();
        let f_sum: f64 = on.iter().map(|&k| noise_plus_interf[k] / gains[k]).sum();
        let exact = (budget + f_sum) / w_sum;
        let consistent = active
            .iter()
            .all(|&k| (weights[k] * exact > noise_plus_interf[k] / gains[k]) == on.contains(&k));
        if consistent {
            level = exact;
        }
    }
    fill(level, gains, noise_plus_interf, weights, &mut powers);
    WaterfillOutcome {
        powers,
        water_level: level,
        degenerate: false,
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WaterfillOptions {
    pub max_sweeps: usize,
    /// Relative change of the objective over one sweep.
    pub objective_tol: f64,
    /// Largest power change over one sweep, relative to the largest budget.
    pub power_tol: f64,
}

impl Default for WaterfillOptions {
    fn default() -> Self {
        Self {
            max_sweeps: 10_000,
            objective_tol: 1e-10,
            power_tol: 1e-10,
        }
    }
}

/// State of the iterative waterfilling after the last completed sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct WaterfillState {
    pub p: PowerAllocation,
    /// `c_ik = sum_{j != i} |a_jk|^2 p_jk`, row-major B x K̃.
    pub c_interf: Vec<f64>,
    /// Weighted sum rate in bits.
    pub objective: f64,
    pub iteration: usize,
    /// Objective after every single-BS waterfilling step.
    pub history: Vec<f64>,
}

/// `sum_k w_k log2(1 + sum_i |a_ik|^2 p_ik)`
pub fn weighted_sum_rate(eff: &EffectiveChannel, weights: &[f64], p: &PowerAllocation) -> f64 {
    (0..eff.num_served())
        .map(|k| weights[k] * user_rate(&eff.power_column(k), &p.column(k)))
        .sum()
}

pub fn user_rates(eff: &EffectiveChannel, p: &PowerAllocation) -> Vec<f64> {
    (0..eff.num_served()).map(|k| user_rate(&eff.power_column(k), &p.column(k))).collect()
}

fn interference(eff: &EffectiveChannel, p: &PowerAllocation, i: usize, k: usize) -> f64 {
    (0..eff.bs()).filter(|&j| j != i).map(|j| eff.power_gain(j, k) * p.get(j, k)).sum()
}

fn check_inputs(eff: &EffectiveChannel, weights: &[f64], budgets: &[f64]) -> Result<()> {
    if weights.len() != eff.num_served() || budgets.len() != eff.bs() {
        return Err(Error::InvalidInput("weights/budgets do not match the effective channel".into()));
    }
    if weights.iter().any(|w| !(w.is_finite() && *w >= 0.0)) || weights.iter().all(|w| *w == 0.0) {
        return Err(Error::InvalidInput("weights must be nonnegative and not all zero".into()));
    }
    if budgets.iter().any(|b| !(b.is_finite() && *b >= 0.0)) {
        return Err(Error::InvalidInput("budgets must be finite and nonnegative".into()));
    }
    Ok(())
}

/// Weighted sum rate maximization over the parallel MISO channels,
/// starting from zero power.
pub fn iterative_waterfilling(eff: &EffectiveChannel, weights: &[f64], budgets: &[f64]) -> Result<WaterfillState> {
    let init = PowerAllocation::zeros(budgets.to_vec(), eff.num_served());
    iterative_waterfilling_from(eff, weights, &init, WaterfillOptions::default())
}

/// Iterative waterfilling from an arbitrary feasible starting point.
pub fn iterative_waterfilling_from(
    eff: &EffectiveChannel,
    weights: &[f64],
    init: &PowerAllocation,
    opts: WaterfillOptions,
) -> Result<WaterfillState> {
    let budgets = init.budgets();
    check_inputs(eff, weights, budgets)?;
    let (bs, served) = (eff.bs(), eff.num_served());
    let mut p = init.clone();
    let mut objective = weighted_sum_rate(eff, weights, &p);
    let mut history = Vec::new();
    let scale = budgets.iter().copied().fold(0.0, f64::max).max(f64::MIN_POSITIVE);
    let mut c_interf = vec![0.0; bs * served];
    let mut noise = vec![0.0; served];

    for sweep in 1..=opts.max_sweeps {
        let before = objective;
        let mut moved: f64 = 0.0;
        for i in 0..bs {
            for (k, n) in noise.iter_mut().enumerate() {
                *n = 1.0 + interference(eff, &p, i, k);
            }
            let out = waterfill_single_bs(&eff.power_row(i), &noise, weights, budgets[i]);
            for k in 0..served {
                moved = moved.max((out.powers[k] - p.get(i, k)).abs());
            }
            p.set_row(i, &out.powers);
            objective = weighted_sum_rate(eff, weights, &p);
            history.push(objective);
        }
        let rel = (objective - before).abs() / objective.abs().max(f64::MIN_POSITIVE);
        if rel < opts.objective_tol && moved <= opts.power_tol * scale {
            for i in 0..bs {
                for k in 0..served {
                    c_interf[i * served + k] = interference(eff, &p, i, k);
                }
            }
            return Ok(WaterfillState {
                p,
                c_interf,
                objective,
                iteration: sweep,
                history,
            });
        }
    }
    for i in 0..bs {
        for k in 0..served {
            c_interf[i * served + k] = interference(eff, &p, i, k);
        }
    }
    Err(Error::WaterfillNotConverged(Box::new(WaterfillState {
        p,
        c_interf,
        objective,
        iteration: opts.max_sweeps,
        history,
    })))
}

/// Largest relative violation of the weighted-sum-rate KKT conditions.
///
/// At BS `i` the marginal utility `phi_ik = w_k |a_ik|^2 / (1 + sum_j |a_jk|^2 p_jk)`
/// must be the same for every user with `p_ik > 0` and no larger for the
/// others; the budget must be exhausted whenever some user is eligible.
pub fn kkt_residual(eff: &EffectiveChannel, weights: &[f64], p: &PowerAllocation) -> f64 {
    let served = eff.num_served();
    let snr: Vec<f64> = (0..served)
        .map(|k| (0..eff.bs()).map(|j| eff.power_gain(j, k) * p.get(j, k)).sum::<f64>())
        .collect();
    let mut worst: f64 = 0.0;
    for i in 0..eff.bs() {
        let phi: Vec<f64> = (0..served)
            .map(|k| weights[k] * eff.power_gain(i, k) / (1.0 + snr[k]))
            .collect();
        let level = phi.iter().copied().fold(0.0, f64::max);
        if level <= 0.0 {
            continue;
        }
        for k in 0..served {
            if p.get(i, k) > 0.0 {
                worst = worst.max((level - phi[k]) / level);
            }
        }
        let budget = p.budgets()[i];
        if budget > 0.0 {
            worst = worst.max((p.row_total(i) - budget).abs() / budget);
        }
    }
    worst
}

/// Step size schedule of the weight update.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum StepRule {
    /// `s_n = s_0 / sqrt(n)`.
    InverseSqrt,
    /// Start at `s_0` and halve whenever two consecutive subgradients point
    /// in opposing directions.
    #[default]
    Halving,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BalanceOptions {
    /// Initial step `s_0`.
    pub initial_step: f64,
    pub step_rule: StepRule,
    pub max_iterations: usize,
    /// Stop once `max_k |R_k / alpha_k - R_1| <= tolerance * R_1`.
    pub tolerance: f64,
}

impl Default for BalanceOptions {
    fn default() -> Self {
        Self {
            initial_step: 0.1,
            step_rule: StepRule::Halving,
            max_iterations: 5_000,
            tolerance: 1e-4,
        }
    }
}

/// Iterate of the rate-balancing subgradient loop.
#[derive(Debug, Clone, PartialEq)]
pub struct BalanceState {
    /// Simplex weights `theta_k`.
    pub theta: Vec<f64>,
    pub rates: Vec<f64>,
    /// `Delta_k = R_k / alpha_k - R_1`.
    pub subgradient: Vec<f64>,
    pub step_index: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BalanceOutcome {
    pub p: PowerAllocation,
    pub rates: Vec<f64>,
    /// Best iterate.
    pub state: BalanceState,
    /// `max_k |Delta_k| / R_1` of the returned iterate.
    pub residual: f64,
    pub iterations: usize,
    pub converged: bool,
}

impl BalanceOutcome {
    /// Largest common scale `r` such that `alpha_k r <= R_k` for all `k`;
    /// the rate tuple `alpha r` is achievable and exactly proportional.
    pub fn balanced_rate(&self, alpha: &[f64]) -> f64 {
        self.rates
            .iter()
            .zip(alpha)
            .map(|(r, a)| r / a)
            .fold(f64::INFINITY, f64::min)
    }
}

/// Euclidean projection onto the probability simplex.
pub fn project_simplex(v: &[f64]) -> Vec<f64> {
    let mut u = v.to_vec();
    u.sort_by(|a, b| b.total_cmp(a));
    let mut cumsum = 0.0;
    let mut shift = 0.0;
    for (j, x) in u.iter().enumerate() {
        cumsum += x;
        let t = (cumsum - 1.0) / (j + 1) as f64;
        if x - t > 0.0 {
            shift = t;
        }
    }
    v.iter().map(|x| (x - shift).max(0.0)).collect()
}

/// Rate balancing with the default options.
pub fn rate_balance(eff: &EffectiveChannel, targets: &TargetRates, budgets: &[f64]) -> Result<BalanceOutcome> {
    rate_balance_with(eff, targets, budgets, BalanceOptions::default())
}

/// Find powers whose rates are proportional to the targets, via projected
/// subgradient descent on the simplex weights of the weighted-sum-rate dual.
///
/// The inner waterfilling is warm-started from the previous iterate; its
/// optimum is unique so the start only affects the sweep count. If exact
/// proportionality is not reached within the iteration budget the iterate
/// with the smallest `max_k |Delta_k|` is returned with `converged = false`.
pub fn rate_balance_with(
    eff: &EffectiveChannel,
    targets: &TargetRates,
    budgets: &[f64],
    opts: BalanceOptions,
) -> Result<BalanceOutcome> {
    let served = eff.num_served();
    if targets.len() != served {
        return Err(Error::InvalidInput(format!("{} targets for {served} served users", targets.len())));
    }
    let alpha = targets
        .alpha()
        .ok_or_else(|| Error::InvalidInput("rate balancing needs strictly positive targets".into()))?;
    let dead: Vec<usize> = (0..served)
        .filter(|&k| (0..eff.bs()).all(|i| eff.power_gain(i, k) == 0.0))
        .collect();
    if !dead.is_empty() {
        return Err(Error::BalancingInfeasible { users: dead });
    }

    let mut theta = vec![1.0 / served as f64; served];
    let mut p = PowerAllocation::zeros(budgets.to_vec(), served);
    let mut best: Option<(f64, PowerAllocation, BalanceState)> = None;
    let inner = WaterfillOptions::default();
    let mut step = opts.initial_step;
    let mut previous: Option<Vec<f64>> = None;

    for n in 1..=opts.max_iterations {
        let weights: Vec<f64> = theta.iter().zip(&alpha).map(|(t, a)| t / a).collect();
        let state = match iterative_waterfilling_from(eff, &weights, &p, inner) {
            Ok(s) => s,
            Err(Error::WaterfillNotConverged(s)) => *s,
            Err(e) => return Err(e),
        };
        p = state.p;
        let rates = user_rates(eff, &p);
        let subgradient: Vec<f64> = rates.iter().zip(&alpha).map(|(r, a)| r / a - rates[0]).collect();
        let spread = subgradient.iter().fold(0.0f64, |m, d| m.max(d.abs()));
        let residual = if rates[0] > 0.0 { spread / rates[0] } else { f64::INFINITY };
        let candidate = BalanceState {
            theta: theta.clone(),
            rates: rates.clone(),
            subgradient: subgradient.clone(),
            step_index: n,
        };
        if best.as_ref().is_none_or(|(r, _, _)| residual < *r) {
            best = Some((residual, p.clone(), candidate));
        }
        if residual <= opts.tolerance || served == 1 {
            break;
        }
        match opts.step_rule {
            StepRule::InverseSqrt => step = opts.initial_step / (n as f64).sqrt(),
            StepRule::Halving => {
                if let Some(prev) = &previous {
                    let dot: f64 = prev.iter().zip(&subgradient).map(|(a, b)| a * b).sum();
                    if dot < 0.0 {
                        step *= 0.5;
                    }
                }
                if step < 1e-16 {
                    break;
                }
            }
        }
        previous = Some(subgradient.clone());
        let moved: Vec<f64> = theta.iter().zip(&subgradient).map(|(t, d)| t - step * d).collect();
        theta = project_simplex(&moved);
    }

    let (residual, p, state) = best.expect("at least one iteration");
    let converged = residual <= opts.tolerance || served == 1;
    if !converged {
        debug!("rate balancing stopped with residual {residual:.3e}");
    }
    Ok(BalanceOutcome {
        rates: state.rates.clone(),
        p,
        iterations: state.step_index,
        state,
        residual,
        converged,
    })
}

/// Per-user and joint success of the rate-balancing policy.
#[derive(Debug, Clone, PartialEq)]
pub struct BalancedOutage {
    pub per_user: Vec<bool>,
    pub joint: bool,
    /// Common normalized rate `R_k / alpha_k` of the balanced point; `None`
    /// when the verdict was certified without running the balancing loop.
    pub balanced_rate: Option<f64>,
    /// False if the balancing loop stopped above its tolerance.
    pub converged: bool,
}

impl BalancedOutage {
    fn common(ok: bool, users: usize, balanced_rate: Option<f64>, converged: bool) -> Self {
        Self {
            per_user: vec![ok; users],
            joint: ok,
            balanced_rate,
            converged,
        }
    }
}

/// Outage indicators under rate balancing, computed by running the loop.
///
/// The balanced tuple is `alpha_k r`, so user `k` succeeds iff
/// `gamma_k <= alpha_k r`, i.e. iff `gamma_1 <= r`: either every user
/// succeeds or every user fails. A user with zero gain everywhere pins
/// `r = 0`.
pub fn outage_indicator_by_balancing(
    eff: &EffectiveChannel,
    targets: &TargetRates,
    budgets: &[f64],
) -> Result<BalancedOutage> {
    let (rate, converged) = match rate_balance(eff, targets, budgets) {
        Ok(out) => {
            let alpha = targets.alpha().expect("validated by rate_balance");
            (out.balanced_rate(&alpha), out.converged)
        }
        Err(Error::BalancingInfeasible { .. }) => (0.0, true),
        Err(e) => return Err(e),
    };
    let ok = targets.gamma()[0] <= rate;
    Ok(BalancedOutage::common(ok, targets.len(), Some(rate), converged))
}

/// Same verdict as [`outage_indicator_by_balancing`], skipping the loop when
/// the answer is already certain: the balanced policy succeeds exactly when
/// the target tuple lies in the rate region, so
/// - a user missing its target even with every BS's full budget fails all;
/// - a target tuple already met by the equal split succeeds for all.
pub fn outage_indicator_balanced(eff: &EffectiveChannel, targets: &TargetRates, budgets: &[f64]) -> Result<BalancedOutage> {
    let served = eff.num_served();
    if targets.len() != served || budgets.len() != eff.bs() {
        return Err(Error::InvalidInput("targets and budgets must match the effective channel".into()));
    }
    let gamma = targets.gamma();
    let single_user_miss = (0..served).any(|k| user_rate(&eff.power_column(k), budgets) < gamma[k]);
    if single_user_miss {
        return Ok(BalancedOutage::common(false, served, None, true));
    }
    let equal = PowerAllocation::equal(budgets.to_vec(), served);
    if user_rates(eff, &equal).iter().zip(gamma).all(|(r, g)| r >= g) {
        return Ok(BalancedOutage::common(true, served, None, true));
    }
    outage_indicator_by_balancing(eff, targets, budgets)
}
