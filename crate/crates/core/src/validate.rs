//! Self-check suites run by `netmimo validate`.

use std::fmt;

use rand::Rng;
use statrs::distribution::{ContinuousCDF, Gamma as GammaLaw};

use crate::alloc_perfect::{iterative_waterfilling, kkt_residual};
use crate::alloc_stat::{algorithm_a2, closed_form_lambda_two_bs, power_kkt_residual, solve_lambda, ChernoffProblem};
use crate::channel::{effective_channel, sample_channel, EffectiveChannel, LinkVariances};
use crate::error::{Error, Result};
use crate::rng::substream;
use crate::scheduler::{direct_selection, make_partition, oracle_select, run_protocol, PartitionRule};
use crate::stats::{ks_critical, ks_statistic, mean};

pub const SUITES: [&str; 5] = ["lemma1", "kkt", "eq22", "oracle", "dds"];

#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub value: f64,
    pub limit: f64,
}

impl fmt::Display for Check {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "check={} status={} value={:e} limit={:e}",
            self.name,
            if self.passed { "pass" } else { "fail" },
            self.value,
            self.limit
        )
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SuiteReport {
    pub suite: String,
    pub checks: Vec<Check>,
}

impl SuiteReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    /// One `suite=... check=...` line per check and a closing summary line.
    pub fn summary(&self) -> String {
        let mut out = String::new();
        for c in &self.checks {
            out.push_str(&format!("suite={} {c}\n", self.suite));
        }
        let failed = self.checks.iter().filter(|c| !c.passed).count();
        out.push_str(&format!(
            "suite={} result={} passed={} failed={}\n",
            self.suite,
            if failed == 0 { "pass" } else { "fail" },
            self.checks.len() - failed,
            failed
        ));
        out
    }
}

fn below(name: impl Into<String>, value: f64, limit: f64) -> Check {
    Check {
        name: name.into(),
        passed: value < limit,
        value,
        limit,
    }
}

pub fn run_suite(name: &str, seed: u64) -> Result<SuiteReport> {
    let checks = match name {
        "lemma1" => lemma1(seed, 100_000)?,
        "kkt" => kkt(seed, 100)?,
        "eq22" => eq22(seed, 1_000),
        "oracle" => oracle(seed, 10_000)?,
        "dds" => dds(seed, 10_000)?,
        other => {
            return Err(Error::Config(format!(
                "unknown suite `{other}`; available: {}",
                SUITES.join(", ")
            )))
        }
    };
    Ok(SuiteReport {
        suite: name.to_string(),
        checks,
    })
}

/// KS test of `|a_ik|^2` against Gamma(dof, 1/dof) and a 1% mean check.
pub fn lemma1(seed: u64, draws: usize) -> Result<Vec<Check>> {
    let mut checks = Vec::new();
    for (b, m, kt) in [(2usize, 2usize, 2usize), (2, 4, 2)] {
        let sigma = LinkVariances::uniform(b, kt, 1.0)?;
        let served: Vec<usize> = (0..kt).collect();
        let mut samples = Vec::with_capacity(draws);
        let mut t = 0;
        while samples.len() < draws {
            let mut rng = substream(seed, t);
            t += 1;
            let real = sample_channel(&sigma, m, &mut rng);
            match effective_channel(&real, &served) {
                Ok(eff) => samples.push(eff.power_gain(0, 0)),
                Err(Error::IllConditioned { .. }) => continue,
                Err(e) => return Err(e),
            }
        }
        let dof = (m - kt + 1) as f64;
        let law = GammaLaw::new(dof, dof).map_err(|e| Error::InvalidInput(e.to_string()))?;
        let avg = mean(&samples);
        let d = ks_statistic(&mut samples, |x| law.cdf(x));
        let tag = format!("B{b}_M{m}_K{kt}");
        checks.push(below(format!("ks_{tag}"), d, ks_critical(0.01, draws)));
        checks.push(below(format!("mean_{tag}"), (avg - 1.0).abs(), 0.01));
    }
    Ok(checks)
}

fn random_effective<R: Rng>(rng: &mut R, bs: usize, served: usize) -> Result<EffectiveChannel> {
    let rows = (0..bs)
        .map(|_| (0..served).map(|_| rng.random_range(0.05..3.0)).collect())
        .collect();
    EffectiveChannel::from_power_gains(rows, (0..served).collect())
}

/// KKT residuals of the weighted waterfilling and of the Chernoff allocation.
pub fn kkt(seed: u64, instances: u64) -> Result<Vec<Check>> {
    let mut worst_a1: f64 = 0.0;
    let mut worst_a2: f64 = 0.0;
    for n in 0..instances {
        let mut rng = substream(seed, n);
        let eff = random_effective(&mut rng, 2, 2)?;
        let w: Vec<f64> = (0..2).map(|_| rng.random_range(0.1..1.0)).collect();
        let budgets: Vec<f64> = (0..2).map(|_| rng.random_range(0.5..20.0)).collect();
        let st = iterative_waterfilling(&eff, &w, &budgets)?;
        worst_a1 = worst_a1.max(kkt_residual(&eff, &w, &st.p));

        let sigma: Vec<Vec<f64>> = (0..2).map(|_| (0..2).map(|_| rng.random_range(0.2..2.0)).collect()).collect();
        let c: Vec<f64> = (0..2).map(|_| rng.random_range(0.5..3.0)).collect();
        let prob = ChernoffProblem::new(sigma, c, vec![rng.random_range(10.0..100.0); 2], rng.random_range(1..4))?;
        let state = match algorithm_a2(&prob) {
            Ok(s) => s,
            Err(Error::ChernoffNotConverged { state, .. }) => *state,
            Err(e) => return Err(e),
        };
        worst_a2 = worst_a2.max(power_kkt_residual(&prob, &state));
    }
    Ok(vec![below("a1_kkt", worst_a1, 1e-6), below("a2_kkt", worst_a2, 1e-6)])
}

/// Two-BS quadratic closed form against the generic bisection root.
pub fn eq22(seed: u64, tuples: u64) -> Vec<Check> {
    let mut worst: f64 = 0.0;
    for n in 0..tuples {
        let mut rng = substream(seed, n);
        let dof: u32 = rng.random_range(1..5);
        let sigma = vec![vec![rng.random_range(0.1..2.0)], vec![rng.random_range(0.1..2.0)]];
        let p = [rng.random_range(0.1..10.0), rng.random_range(0.1..10.0)];
        let beta = [sigma[0][0] / f64::from(dof), sigma[1][0] / f64::from(dof)];
        let (x, y) = (beta[0] * p[0], beta[1] * p[1]);
        // keep the generic branch: c / dof < x + y
        let c = rng.random_range(0.05..0.95) * (x + y) * f64::from(dof);
        let prob = ChernoffProblem::new(sigma, vec![c], vec![p[0], p[1]], dof).expect("positive inputs");
        let sol = solve_lambda(&p, &prob, 0);
        let exact = closed_form_lambda_two_bs(x, y, c, dof);
        worst = worst.max((sol.lambda - exact).abs() / exact);
    }
    vec![below("closed_form_rel_err", worst, 1e-8)]
}

/// Sorting oracle against brute-force enumeration of all user subsets.
pub fn oracle(seed: u64, cases: u64) -> Result<Vec<Check>> {
    let mut mismatches = 0u64;
    for n in 0..cases {
        let mut rng = substream(seed, n);
        let users = rng.random_range(2..7usize);
        let group = rng.random_range(1..=users);
        let norms: Vec<f64> = (0..users).map(|_| rng.random::<f64>()).collect();
        let chosen = oracle_select(&norms, group)?;
        let best_min = chosen.iter().map(|&k| norms[k]).fold(f64::INFINITY, f64::min);
        let mut brute = f64::NEG_INFINITY;
        for mask in 0u32..(1 << users) {
            if mask.count_ones() as usize != group {
                continue;
            }
            let m = (0..users)
                .filter(|k| mask >> k & 1 == 1)
                .map(|k| norms[k])
                .fold(f64::INFINITY, f64::min);
            brute = brute.max(m);
        }
        if best_min != brute {
            mismatches += 1;
        }
    }
    Ok(vec![below("oracle_mismatches", mismatches as f64, 0.5)])
}

/// Message protocol against direct enumeration of the selection rule.
pub fn dds(seed: u64, cases: u64) -> Result<Vec<Check>> {
    let mut mismatches = 0u64;
    let mut bad_counts = 0u64;
    for n in 0..cases {
        let mut rng = substream(seed, n);
        let bs = rng.random_range(1..5usize);
        let group = rng.random_range(1..4usize);
        let users = group * rng.random_range(1..5usize) + rng.random_range(0..group);
        let gains: Vec<Vec<f64>> = (0..bs).map(|_| (0..users).map(|_| rng.random::<f64>()).collect()).collect();
        let part = make_partition(users, group, PartitionRule::Consecutive)?;
        let out = run_protocol(n, &gains, &part)?;
        if out.decision != direct_selection(&gains, &part) {
            mismatches += 1;
        }
        if out.messages.len() != bs + 1 {
            bad_counts += 1;
        }
    }
    Ok(vec![
        below("protocol_mismatches", mismatches as f64, 0.5),
        below("message_count_errors", bad_counts as f64, 0.5),
    ])
}

