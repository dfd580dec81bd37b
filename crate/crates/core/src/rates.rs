//! Achievable rates and outage indicators.
//!
//! Rates are in bits per channel use throughout.

use crate::error::{Error, Result};

/// Relative slack allowed on per-BS budgets.
pub const BUDGET_SLACK: f64 = 1e-9;

/// Powers `p_ik` (row-major, B x K̃) under per-BS budgets `P_i`.
#[derive(Debug, Clone, PartialEq)]
pub struct PowerAllocation {
    served: usize,
    p: Vec<f64>,
    budgets: Vec<f64>,
}

impl PowerAllocation {
    pub fn new(rows: Vec<Vec<f64>>, budgets: Vec<f64>) -> Result<Self> {
        if rows.len() != budgets.len() || rows.is_empty() {
            return Err(Error::InvalidInput("one power row per BS budget required".into()));
        }
        let served = rows[0].len();
        if rows.iter().any(|r| r.len() != served) {
            return Err(Error::InvalidInput("power rows must have equal length".into()));
        }
        let alloc = Self {
            served,
            p: rows.into_iter().flatten().collect(),
            budgets,
        };
        alloc.check()?;
        Ok(alloc)
    }

    /// `zeros` for every BS.
    pub fn zeros(budgets: Vec<f64>, served: usize) -> Self {
        Self {
            served,
            p: vec![0.0; budgets.len() * served],
            budgets,
        }
    }

    /// `p_ik = P_i / K̃`.
    pub fn equal(budgets: Vec<f64>, served: usize) -> Self {
        let p = budgets
            .iter()
            .flat_map(|&b| std::iter::repeat_n(b / served as f64, served))
            .collect();
        Self { served, p, budgets }
    }

    pub fn check(&self) -> Result<()> {
        if let Some(b) = self.budgets.iter().find(|b| !(b.is_finite() && **b >= 0.0)) {
            return Err(Error::InvalidInput(format!("budget {b} must be finite and nonnegative")));
        }
        if self.p.iter().any(|x| !(x.is_finite() && *x >= 0.0)) {
            return Err(Error::InvalidInput("powers must be finite and nonnegative".into()));
        }
        for i in 0..self.bs() {
            let total = self.row_total(i);
            if total > self.budgets[i] * (1.0 + BUDGET_SLACK) {
                return Err(Error::InvalidInput(format!(
                    "BS {} uses {total} out of budget {}",
                    i + 1,
                    self.budgets[i]
                )));
            }
        }
        Ok(())
    }

    pub fn bs(&self) -> usize {
        self.budgets.len()
    }

    pub fn served(&self) -> usize {
        self.served
    }

    pub fn budgets(&self) -> &[f64] {
        &self.budgets
    }

    pub fn get(&self, i: usize, k: usize) -> f64 {
        self.p[i * self.served + k]
    }

    pub fn set(&mut self, i: usize, k: usize, value: f64) {
        self.p[i * self.served + k] = value;
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.p[i * self.served..(i + 1) * self.served]
    }

    pub fn set_row(&mut self, i: usize, values: &[f64]) {
        self.p[i * self.served..(i + 1) * self.served].copy_from_slice(values);
    }

    pub fn column(&self, k: usize) -> Vec<f64> {
        (0..self.bs()).map(|i| self.get(i, k)).collect()
    }

    pub fn row_total(&self, i: usize) -> f64 {
        self.row(i).iter().sum()
    }
}

/// Target rates `gamma_k`, their ratios `alpha_k = gamma_k / gamma_1` and
/// target SNRs `c_k = 2^gamma_k - 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct TargetRates {
    gamma: Vec<f64>,
    c: Vec<f64>,
}

impl TargetRates {
    pub fn new(gamma: Vec<f64>) -> Result<Self> {
        if gamma.is_empty() {
            return Err(Error::InvalidInput("at least one target rate required".into()));
        }
        if let Some(g) = gamma.iter().find(|g| !(g.is_finite() && **g >= 0.0)) {
            return Err(Error::InvalidInput(format!("target rate {g} must be finite and nonnegative")));
        }
        let c = gamma.iter().map(|g| g.exp2() - 1.0).collect();
        Ok(Self { gamma, c })
    }

    pub fn len(&self) -> usize {
        self.gamma.len()
    }

    pub fn is_empty(&self) -> bool {
        self.gamma.is_empty()
    }

    pub fn gamma(&self) -> &[f64] {
        &self.gamma
    }

    pub fn snr(&self) -> &[f64] {
        &self.c
    }

    /// Ratios to the first target; `None` unless every target is positive.
    pub fn alpha(&self) -> Option<Vec<f64>> {
        if self.gamma.iter().all(|g| *g > 0.0) {
            Some(self.gamma.iter().map(|g| g / self.gamma[0]).collect())
        } else {
            None
        }
    }
}

/// `log2(1 + sum_i |a_ik|^2 p_ik)`.
pub fn user_rate(power_gains: &[f64], powers: &[f64]) -> f64 {
    received_snr(power_gains, powers).ln_1p() / std::f64::consts::LN_2
}

/// `sum_i |a_ik|^2 p_ik`.
pub fn received_snr(power_gains: &[f64], powers: &[f64]) -> f64 {
    power_gains.iter().zip(powers).map(|(g, p)| g * p).sum()
}

/// Joint success: every user meets its target (equality counts as success).
pub fn in_region(rates: &[f64], targets: &TargetRates) -> bool {
    per_user_success(rates, targets).into_iter().all(|ok| ok)
}

pub fn per_user_success(rates: &[f64], targets: &TargetRates) -> Vec<bool> {
    rates.iter().zip(targets.gamma()).map(|(r, g)| g <= r).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn rate_examples() {
        assert_eq!(user_rate(&[1.0, 2.0], &[0.0, 0.0]), 0.0);
        assert!((user_rate(&[1.0], &[1.0]) - 1.0).abs() < 1e-15);
        assert!((user_rate(&[2.0, 0.5], &[1.0, 2.0]) - 2.0).abs() < 1e-15);
    }

    #[test]
    fn region_examples() {
        let zero = TargetRates::new(vec![0.0, 0.0]).unwrap();
        assert!(in_region(&[0.0, 0.0], &zero));
        let t = TargetRates::new(vec![3.0, 1.0]).unwrap();
        assert!(in_region(&[3.0, 1.0], &t));
        assert!(!in_region(&[2.9, 1.5], &t));
        assert_eq!(t.alpha().unwrap(), vec![1.0, 1.0 / 3.0]);
        assert_eq!(t.snr(), &[7.0, 1.0]);
        assert!(zero.alpha().is_none());
    }

    #[test]
    fn allocation_budget_check() {
        assert!(PowerAllocation::new(vec![vec![0.5, 0.5]], vec![1.0]).is_ok());
        assert!(PowerAllocation::new(vec![vec![0.6, 0.5]], vec![1.0]).is_err());
        assert!(PowerAllocation::new(vec![vec![-0.1, 0.5]], vec![1.0]).is_err());
        let eq = PowerAllocation::equal(vec![2.0, 4.0], 2);
        assert_eq!(eq.row(1), &[2.0, 2.0]);
        assert_eq!(eq.column(0), vec![1.0, 2.0]);
    }

    proptest! {
        #[test]
        fn rate_is_monotone(g in proptest::collection::vec(0.0f64..10.0, 3),
                            p in proptest::collection::vec(0.0f64..10.0, 3),
                            idx in 0usize..3, bump in 0.0f64..5.0) {
            let base = user_rate(&g, &p);
            let mut p2 = p.clone();
            p2[idx] += bump;
            prop_assert!(user_rate(&g, &p2) >= base);
            let mut g2 = g.clone();
            g2[idx] += bump;
            prop_assert!(user_rate(&g2, &p) >= base);
        }
    }
}
