//! JSON scenario files.

use std::path::Path;

use serde::Deserialize;

use crate::channel::{variances_from_topology, LinkVariances, Topology1D};
use crate::error::{Error, Result};
use crate::rates::TargetRates;
use crate::scheduler::PartitionRule;
use crate::sim::{IndependenceMode, Scenario, Strategy};

fn default_trials() -> u64 {
    1_000_000
}

fn default_max_events() -> Option<u64> {
    Some(10_000)
}

fn default_block() -> u64 {
    4_096
}

fn default_trace_rounds() -> u64 {
    8
}

/// On-disk form of a [`Scenario`]. Field names follow the usual notation:
/// `B` base stations, `M` antennas per BS, `K` users, `K_served` users per
/// scheduling group.
#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioFile {
    #[serde(rename = "B")]
    pub bs: usize,
    #[serde(rename = "M")]
    pub antennas: usize,
    #[serde(rename = "K")]
    pub users: usize,
    #[serde(rename = "K_served")]
    pub served: usize,
    pub seed: u64,
    /// Target rates in bits per channel use.
    pub targets: Vec<f64>,
    pub snr_db: Vec<f64>,
    pub strategies: Vec<Strategy>,
    #[serde(default)]
    pub budget_scale: Option<Vec<f64>>,
    /// B x K table of link variances; mutually exclusive with `topology`.
    #[serde(default)]
    pub variances: Option<Vec<Vec<f64>>>,
    #[serde(default)]
    pub topology: Option<Topology1D>,
    #[serde(default)]
    pub independence: IndependenceMode,
    #[serde(default = "default_trials")]
    pub trials: u64,
    #[serde(default = "default_max_events")]
    pub max_events: Option<u64>,
    #[serde(default)]
    pub partition: PartitionRule,
    #[serde(default = "default_block")]
    pub block: u64,
    /// UT 1 positions for position sweeps.
    #[serde(default)]
    pub positions: Option<Vec<f64>>,
    #[serde(default = "default_trace_rounds")]
    pub trace_rounds: u64,
}

impl ScenarioFile {
    pub fn parse(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    pub fn variances(&self) -> Result<LinkVariances> {
        let v = match (&self.variances, &self.topology) {
            (Some(_), Some(_)) => return Err(Error::Config("give either `variances` or `topology`, not both".into())),
            (Some(rows), None) => LinkVariances::new(rows.clone()),
            (None, Some(topo)) => variances_from_topology(topo),
            (None, None) => LinkVariances::uniform(self.bs.max(1), self.users.max(1), 1.0),
        };
        v.map_err(|e| Error::Config(e.to_string()))
    }

    /// Build and validate the scenario.
    pub fn scenario(&self) -> Result<Scenario> {
        let sc = Scenario {
            bs: self.bs,
            antennas: self.antennas,
            users: self.users,
            served: self.served,
            budget_scale: self.budget_scale.clone().unwrap_or_else(|| vec![1.0; self.bs]),
            variances: self.variances()?,
            targets: TargetRates::new(self.targets.clone()).map_err(|e| Error::Config(e.to_string()))?,
            strategies: self.strategies.clone(),
            independence: self.independence,
            trials: self.trials,
            max_events: self.max_events,
            seed: self.seed,
            snr_db: self.snr_db.clone(),
            partition: self.partition,
            block: self.block,
        };
        sc.validate()?;
        Ok(sc)
    }
}

/// Parse `start:stop:step` (dB, inclusive of `stop` up to rounding).
pub fn parse_snr_range(spec: &str) -> Result<Vec<f64>> {
    let parts: Vec<&str> = spec.split(':').collect();
    let nums: Vec<f64> = parts
        .iter()
        .map(|p| p.trim().parse::<f64>())
        .collect::<std::result::Result<_, _>>()
        .map_err(|e| Error::Config(format!("bad snr range `{spec}`: {e}")))?;
    let [start, stop, step] = nums[..] else {
        return Err(Error::Config(format!("snr range `{spec}` must be start:stop:step")));
    };
    if !(step > 0.0) || !(stop >= start) || !start.is_finite() || !stop.is_finite() {
        return Err(Error::Config(format!("snr range `{spec}` must have step > 0 and stop >= start")));
    }
    let n = ((stop - start) / step + 1e-9).floor() as usize;
    Ok((0..=n).map(|j| start + step * j as f64).collect())
}
