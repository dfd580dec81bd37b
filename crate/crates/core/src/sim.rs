//! Monte Carlo outage engine.
//!
//! Trial `t` draws its channel from substream `t` of the scenario seed, and
//! every strategy and SNR point is evaluated on that same draw (common
//! random numbers). Trials run in fixed-size blocks; after each block the
//! integer tallies are merged and SNR points that have collected enough
//! outage events stop. Block boundaries do not depend on the thread count,
//! so results are identical for any degree of parallelism.

use log::warn;
use rand::Rng;
use rand_distr::{Distribution, Gamma};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::alloc_perfect::outage_indicator_balanced;
use crate::alloc_stat::{algorithm_a2, ChernoffProblem};
use crate::channel::{
    effective_channel, noncooperative_effective, sample_channel, variances_from_topology, EffectiveChannel,
    LinkVariances, Topology1D,
};
use crate::error::{Error, Result};
use crate::rates::{per_user_success, user_rate, PowerAllocation, TargetRates};
use crate::rng::substream;
use crate::scheduler::{make_partition, run_protocol, Message, Partition, PartitionRule};
use crate::stats::{linear_fit, wilson_halfwidth};

/// Redraws allowed per trial before an ill-conditioned channel is fatal.
const MAX_RESAMPLES: usize = 1_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Allocation {
    EqualPower,
    A1Balanced,
    A2Chernoff,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum Beamforming {
    #[default]
    Cooperative,
    Noncooperative,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Strategy {
    pub allocation: Allocation,
    #[serde(default)]
    pub beamforming: Beamforming,
    #[serde(default)]
    pub dds: bool,
}

impl Strategy {
    pub const fn new(allocation: Allocation, beamforming: Beamforming, dds: bool) -> Self {
        Self {
            allocation,
            beamforming,
            dds,
        }
    }

    pub const fn cooperative(allocation: Allocation) -> Self {
        Self::new(allocation, Beamforming::Cooperative, false)
    }

    /// Each BS sends only its own user's message at full power.
    pub const fn noncooperative() -> Self {
        Self::new(Allocation::EqualPower, Beamforming::Noncooperative, false)
    }

    pub fn label(&self) -> String {
        let bf = match self.beamforming {
            Beamforming::Cooperative => "coop",
            Beamforming::Noncooperative => "noncoop",
        };
        let alloc = match (self.beamforming, self.allocation) {
            (Beamforming::Noncooperative, _) => "full",
            (_, Allocation::EqualPower) => "equal",
            (_, Allocation::A1Balanced) => "a1",
            (_, Allocation::A2Chernoff) => "a2",
        };
        if self.dds {
            format!("dds-{bf}-{alloc}")
        } else {
            format!("{bf}-{alloc}")
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum IndependenceMode {
    /// Gains taken from the actual per-realization ZF output.
    #[default]
    Correlated,
    /// Every `|a_ik|^2` drawn independently from its Gamma marginal.
    Independent,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub bs: usize,
    pub antennas: usize,
    pub users: usize,
    pub served: usize,
    /// `P_i = budget_scale[i] * 10^(snr_db / 10)`.
    pub budget_scale: Vec<f64>,
    pub variances: LinkVariances,
    pub targets: TargetRates,
    pub strategies: Vec<Strategy>,
    pub independence: IndependenceMode,
    pub trials: u64,
    /// Stop an SNR point once this many joint outages are seen.
    pub max_events: Option<u64>,
    pub seed: u64,
    pub snr_db: Vec<f64>,
    pub partition: PartitionRule,
    pub block: u64,
}

impl Scenario {
    /// Symmetric scenario with unit variances and equal budgets.
    pub fn symmetric(bs: usize, antennas: usize, users: usize, served: usize, gamma: Vec<f64>, seed: u64) -> Result<Self> {
        Ok(Self {
            bs,
            antennas,
            users,
            served,
            budget_scale: vec![1.0; bs],
            variances: LinkVariances::uniform(bs, users, 1.0)?,
            targets: TargetRates::new(gamma)?,
            strategies: vec![Strategy::cooperative(Allocation::EqualPower)],
            independence: IndependenceMode::Correlated,
            trials: 10_000,
            max_events: Some(10_000),
            seed,
            snr_db: vec![0.0, 10.0, 20.0],
            partition: PartitionRule::Consecutive,
            block: 4_096,
        })
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        if self.bs == 0 || self.antennas == 0 || self.users == 0 || self.served == 0 {
            return bad("B, M, K and K_served must be positive".into());
        }
        if self.served > self.antennas.min(self.users) {
            return bad(format!(
                "K_served = {} exceeds min(M, K) = {}",
                self.served,
                self.antennas.min(self.users)
            ));
        }
        if self.trials == 0 || self.block == 0 {
            return bad("trials and block size must be at least 1".into());
        }
        if self.snr_db.is_empty() || self.snr_db.windows(2).any(|w| !(w[0] < w[1])) {
            return bad("snr grid must be nonempty and strictly increasing".into());
        }
        if self.snr_db.iter().any(|s| !s.is_finite()) {
            return bad("snr grid must be finite".into());
        }
        if self.budget_scale.len() != self.bs || self.budget_scale.iter().any(|b| !(b.is_finite() && *b >= 0.0)) {
            return bad("budget_scale needs one nonnegative entry per BS".into());
        }
        if self.variances.bs() != self.bs || self.variances.users() != self.users {
            return bad(format!(
                "variances are {}x{} but the scenario is {}x{}",
                self.variances.bs(),
                self.variances.users(),
                self.bs,
                self.users
            ));
        }
        if self.targets.len() != self.served {
            return bad(format!("{} targets for {} served users", self.targets.len(), self.served));
        }
        if self.strategies.is_empty() {
            return bad("at least one strategy required".into());
        }
        for s in &self.strategies {
            if s.beamforming == Beamforming::Noncooperative {
                if s.dds {
                    return bad("non-cooperative ZF cannot be combined with DDS".into());
                }
                if self.served != self.bs {
                    return bad("non-cooperative ZF serves exactly one user per BS (K_served = B)".into());
                }
            }
            if s.beamforming == Beamforming::Cooperative
                && s.allocation != Allocation::EqualPower
                && self.targets.alpha().is_none()
            {
                return bad(format!("{} needs strictly positive targets", s.label()));
            }
        }
        Ok(())
    }

    pub fn budgets(&self, snr_db: f64) -> Vec<f64> {
        let p = 10f64.powf(snr_db / 10.0);
        self.budget_scale.iter().map(|s| s * p).collect()
    }

    pub fn dof(&self) -> usize {
        self.antennas - self.served + 1
    }

    fn base_set(&self) -> Vec<usize> {
        (0..self.served).collect()
    }
}

/// Tallies at one SNR point.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OutagePoint {
    pub snr_db: f64,
    pub trials: u64,
    pub joint_events: u64,
    pub user_events: Vec<u64>,
    /// Trials dropped because the allocation failed.
    pub excluded: u64,
    /// Balancing runs that stopped above tolerance (kept).
    pub unconverged: u64,
}

impl OutagePoint {
    pub fn joint_outage(&self) -> f64 {
        self.joint_events as f64 / self.trials as f64
    }

    pub fn user_outage(&self, k: usize) -> f64 {
        self.user_events[k] as f64 / self.trials as f64
    }

    /// 95% Wilson half-width of the joint outage.
    pub fn halfwidth(&self) -> f64 {
        wilson_halfwidth(self.joint_events, self.trials)
    }

    pub fn user_halfwidth(&self, k: usize) -> f64 {
        wilson_halfwidth(self.user_events[k], self.trials)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OutageCurve {
    pub strategy: Strategy,
    pub points: Vec<OutagePoint>,
}

impl OutageCurve {
    /// `(snr_db, outage)` of user `k`.
    pub fn user_curve(&self, k: usize) -> Vec<(f64, f64)> {
        self.points.iter().map(|p| (p.snr_db, p.user_outage(k))).collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunReport {
    pub curves: Vec<OutageCurve>,
    /// Ill-conditioned channel draws that were redrawn.
    pub resamples: u64,
    /// Users never scheduled because K̃ does not divide K.
    pub leftover_users: Vec<usize>,
    pub warnings: Vec<String>,
    /// Protocol messages of the first `trace_rounds` DDS rounds.
    pub trace: Vec<Message>,
}

impl RunReport {
    pub fn curve(&self, strategy: &Strategy) -> Option<&OutageCurve> {
        self.curves.iter().find(|c| c.strategy == *strategy)
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct RunOptions {
    /// Number of leading trials whose DDS messages are recorded.
    pub trace_rounds: u64,
}

/// Per-trial channel view shared by all strategies.
struct Draw {
    /// Effective channel of the fixed set `0..K̃`.
    base: Option<EffectiveChannel>,
    /// Effective channel of the DDS winner, with its group index.
    scheduled: Option<(usize, EffectiveChannel)>,
    /// `a_kk` of the non-cooperative pairing.
    noncoop: Option<Vec<f64>>,
    messages: Vec<Message>,
    resamples: u64,
}

struct Context<'a> {
    sc: &'a Scenario,
    partition: Partition,
    need_base: bool,
    need_dds: bool,
    need_noncoop: bool,
    /// A2 allocations per SNR point: one for the base set and one per group.
    a2_base: Vec<Option<PowerAllocation>>,
    a2_groups: Vec<Vec<PowerAllocation>>,
    gamma_laws: Vec<Gamma<f64>>,
}

fn solve_a2(sc: &Scenario, set: &[usize], budgets: Vec<f64>, warnings: &mut Vec<String>, snr: f64) -> Result<PowerAllocation> {
    let prob = ChernoffProblem::from_variances(&sc.variances, set, sc.targets.snr().to_vec(), budgets, sc.antennas)?;
    let state = match algorithm_a2(&prob) {
        Ok(s) => s,
        Err(Error::ChernoffNotConverged { state, sweeps }) => {
            warnings.push(format!("a2 not converged after {sweeps} sweeps at {snr} dB"));
            *state
        }
        Err(e) => return Err(e),
    };
    if !state.flagged.is_empty() {
        warnings.push(format!(
            "a2 bound trivial for users {:?} at {snr} dB; equal split among the rest",
            state.flagged.iter().map(|k| set[*k] + 1).collect::<Vec<_>>()
        ));
    }
    Ok(state.p)
}

impl<'a> Context<'a> {
    fn new(sc: &'a Scenario, warnings: &mut Vec<String>) -> Result<Self> {
        let partition = make_partition(sc.users, sc.served, sc.partition)?;
        let need_dds = sc.strategies.iter().any(|s| s.dds);
        let need_base = sc
            .strategies
            .iter()
            .any(|s| !s.dds && s.beamforming == Beamforming::Cooperative);
        let need_noncoop = sc.strategies.iter().any(|s| s.beamforming == Beamforming::Noncooperative);
        let wants_a2 = |dds: bool| {
            sc.strategies.iter().any(|s| {
                s.dds == dds && s.allocation == Allocation::A2Chernoff && s.beamforming == Beamforming::Cooperative
            })
        };
        let mut a2_base = Vec::new();
        let mut a2_groups = Vec::new();
        for &snr in &sc.snr_db {
            a2_base.push(if wants_a2(false) {
                Some(solve_a2(sc, &sc.base_set(), sc.budgets(snr), warnings, snr)?)
            } else {
                None
            });
            let mut groups = Vec::new();
            if wants_a2(true) {
                for set in &partition.sets {
                    groups.push(solve_a2(sc, set, sc.budgets(snr), warnings, snr)?);
                }
            }
            a2_groups.push(groups);
        }
        let dof = sc.dof() as f64;
        let mut gamma_laws = Vec::new();
        if sc.independence == IndependenceMode::Independent {
            for i in 0..sc.bs {
                for k in 0..sc.users {
                    let scale = sc.variances.get(i, k) / dof;
                    gamma_laws.push(Gamma::new(dof, scale).map_err(|e| Error::InvalidInput(e.to_string()))?);
                }
            }
        }
        Ok(Self {
            sc,
            partition,
            need_base,
            need_dds,
            need_noncoop,
            a2_base,
            a2_groups,
            gamma_laws,
        })
    }

    fn draw(&self, trial: u64) -> Result<Draw> {
        let sc = self.sc;
        let mut rng = substream(sc.seed, trial);
        let mut resamples = 0;
        loop {
            match self.try_draw(&mut rng, trial) {
                Ok(mut d) => {
                    d.resamples = resamples;
                    return Ok(d);
                }
                Err(Error::IllConditioned { .. }) if (resamples as usize) < MAX_RESAMPLES => resamples += 1,
                Err(e) => return Err(e),
            }
        }
    }

    fn try_draw<R: Rng>(&self, rng: &mut R, trial: u64) -> Result<Draw> {
        let sc = self.sc;
        let base_set = sc.base_set();
        // rows[i][k] = |a_ik|^2, with ZF inside each user's group
        let mut group_gains: Option<Vec<Vec<f64>>> = None;
        let mut group_eff: Vec<EffectiveChannel> = Vec::new();
        let (base, noncoop) = match sc.independence {
            IndependenceMode::Correlated => {
                let real = sample_channel(&sc.variances, sc.antennas, rng);
                let base = if self.need_base {
                    Some(effective_channel(&real, &base_set)?)
                } else {
                    None
                };
                let noncoop = if self.need_noncoop {
                    Some(noncooperative_effective(&real, &base_set)?)
                } else {
                    None
                };
                if self.need_dds {
                    let mut rows = vec![vec![0.0; sc.users]; sc.bs];
                    for set in &self.partition.sets {
                        let eff = effective_channel(&real, set)?;
                        for (i, row) in rows.iter_mut().enumerate() {
                            for (j, &k) in set.iter().enumerate() {
                                row[k] = eff.power_gain(i, j);
                            }
                        }
                        group_eff.push(eff);
                    }
                    group_gains = Some(rows);
                }
                (base, noncoop)
            }
            IndependenceMode::Independent => {
                let rows: Vec<Vec<f64>> = (0..sc.bs)
                    .map(|i| (0..sc.users).map(|k| self.gamma_laws[i * sc.users + k].sample(rng)).collect())
                    .collect();
                let sub = |set: &[usize]| {
                    EffectiveChannel::from_power_gains(
                        rows.iter().map(|r| set.iter().map(|&k| r[k]).collect()).collect(),
                        set.to_vec(),
                    )
                };
                let base = if self.need_base { Some(sub(&base_set)?) } else { None };
                let noncoop = self
                    .need_noncoop
                    .then(|| base_set.iter().enumerate().map(|(i, &k)| rows[i][k].sqrt()).collect());
                if self.need_dds {
                    for set in &self.partition.sets {
                        group_eff.push(sub(set)?);
                    }
                    group_gains = Some(rows);
                }
                (base, noncoop)
            }
        };
        let mut messages = Vec::new();
        let scheduled = match group_gains {
            Some(rows) => {
                let out = run_protocol(trial, &rows, &self.partition)?;
                messages = out.messages;
                let u = out.decision.winning_set_index;
                Some((u, group_eff.swap_remove(u)))
            }
            None => None,
        };
        Ok(Draw {
            base,
            scheduled,
            noncoop,
            messages,
            resamples: 0,
        })
    }
}

/// Result of one strategy at one SNR on one draw.
enum Outcome {
    Evaluated { success: Vec<bool>, unconverged: bool },
    Excluded,
}

fn evaluate(ctx: &Context, draw: &Draw, strategy: &Strategy, point: usize) -> Outcome {
    let sc = ctx.sc;
    let snr = sc.snr_db[point];
    let budgets = sc.budgets(snr);
    let targets = &sc.targets;
    if strategy.beamforming == Beamforming::Noncooperative {
        let gains = draw.noncoop.as_ref().expect("non-cooperative gains drawn");
        let rates: Vec<f64> = gains
            .iter()
            .zip(&budgets)
            .map(|(a, p)| user_rate(&[a * a], &[*p]))
            .collect();
        return Outcome::Evaluated {
            success: per_user_success(&rates, targets),
            unconverged: false,
        };
    }
    let (eff, group) = if strategy.dds {
        let (u, eff) = draw.scheduled.as_ref().expect("scheduled set drawn");
        (eff, Some(*u))
    } else {
        (draw.base.as_ref().expect("base set drawn"), None)
    };
    match strategy.allocation {
        Allocation::EqualPower => {
            let p = PowerAllocation::equal(budgets, sc.served);
            Outcome::Evaluated {
                success: success_with(eff, &p, targets),
                unconverged: false,
            }
        }
        Allocation::A2Chernoff => {
            let p = match group {
                Some(u) => &ctx.a2_groups[point][u],
                None => ctx.a2_base[point].as_ref().expect("a2 allocation cached"),
            };
            Outcome::Evaluated {
                success: success_with(eff, p, targets),
                unconverged: false,
            }
        }
        Allocation::A1Balanced => match outage_indicator_balanced(eff, targets, &budgets) {
            Ok(out) => Outcome::Evaluated {
                unconverged: !out.converged,
                success: out.per_user,
            },
            Err(_) => Outcome::Excluded,
        },
    }
}

fn success_with(eff: &EffectiveChannel, p: &PowerAllocation, targets: &TargetRates) -> Vec<bool> {
    let rates: Vec<f64> = (0..eff.num_served())
        .map(|k| user_rate(&eff.power_column(k), &p.column(k)))
        .collect();
    per_user_success(&rates, targets)
}

/// Integer tallies for every `(strategy, snr)` point, flattened.
#[derive(Debug, Clone, PartialEq, Eq)]
struct Tally {
    width: usize,
    /// Per point: trials, joint, excluded, unconverged, users...
    counts: Vec<u64>,
    resamples: u64,
}

impl Tally {
    fn new(points: usize, served: usize) -> Self {
        let width = 4 + served;
        Self {
            width,
            counts: vec![0; points * width],
            resamples: 0,
        }
    }

    fn merge(mut self, other: Tally) -> Tally {
        for (a, b) in self.counts.iter_mut().zip(other.counts) {
            *a += b;
        }
        self.resamples += other.resamples;
        self
    }

    fn slot(&mut self, point: usize) -> &mut [u64] {
        &mut self.counts[point * self.width..(point + 1) * self.width]
    }
}

/// Evaluate every strategy of the scenario on common channel draws.
pub fn compare_strategies(sc: &Scenario) -> Result<RunReport> {
    run_with(sc, RunOptions::default())
}

pub fn run_with(sc: &Scenario, opts: RunOptions) -> Result<RunReport> {
    sc.validate()?;
    let mut warnings = Vec::new();
    let ctx = Context::new(sc, &mut warnings)?;
    let n_snr = sc.snr_db.len();
    let n_points = sc.strategies.len() * n_snr;
    let mut active = vec![true; n_points];
    let mut total = Tally::new(n_points, sc.served);
    let mut trace = Vec::new();

    let mut start = 0;
    while start < sc.trials && active.iter().any(|a| *a) {
        let end = (start + sc.block).min(sc.trials);
        let block = (start..end)
            .into_par_iter()
            .map(|t| -> Result<(Tally, Vec<Message>)> {
                let draw = ctx.draw(t)?;
                let mut tally = Tally::new(n_points, sc.served);
                tally.resamples = draw.resamples;
                for (s, strategy) in sc.strategies.iter().enumerate() {
                    for point in 0..n_snr {
                        let idx = s * n_snr + point;
                        if !active[idx] {
                            continue;
                        }
                        let slot = tally.slot(idx);
                        match evaluate(&ctx, &draw, strategy, point) {
                            Outcome::Excluded => slot[2] += 1,
                            Outcome::Evaluated { success, unconverged } => {
                                slot[0] += 1;
                                if success.iter().any(|ok| !ok) {
                                    slot[1] += 1;
                                }
                                if unconverged {
                                    slot[3] += 1;
                                }
                                for (k, ok) in success.iter().enumerate() {
                                    if !ok {
                                        slot[4 + k] += 1;
                                    }
                                }
                            }
                        }
                    }
                }
                let messages = if t < opts.trace_rounds { draw.messages } else { Vec::new() };
                Ok((tally, messages))
            })
            .collect::<Result<Vec<_>>>()?;
        for (tally, messages) in block {
            total = total.merge(tally);
            trace.extend(messages);
        }
        if let Some(limit) = sc.max_events {
            for (idx, flag) in active.iter_mut().enumerate() {
                if total.counts[idx * total.width + 1] >= limit {
                    *flag = false;
                }
            }
        }
        start = end;
    }

    let mut curves = Vec::with_capacity(sc.strategies.len());
    for (s, strategy) in sc.strategies.iter().enumerate() {
        let mut points = Vec::with_capacity(n_snr);
        for (point, &snr_db) in sc.snr_db.iter().enumerate() {
            let slot = total.slot(s * n_snr + point).to_vec();
            if slot[2] > 0 {
                warnings.push(format!("{}: {} trials excluded at {snr_db} dB", strategy.label(), slot[2]));
            }
            points.push(OutagePoint {
                snr_db,
                trials: slot[0],
                joint_events: slot[1],
                excluded: slot[2],
                unconverged: slot[3],
                user_events: slot[4..].to_vec(),
            });
        }
        curves.push(OutageCurve {
            strategy: *strategy,
            points,
        });
    }
    if total.resamples > 0 {
        warnings.push(format!("{} ill-conditioned draws resampled", total.resamples));
    }
    if !ctx.partition.leftover.is_empty() && ctx.need_dds {
        warnings.push(format!(
            "users {:?} excluded from scheduling",
            ctx.partition.leftover.iter().map(|k| k + 1).collect::<Vec<_>>()
        ));
    }
    for w in &warnings {
        warn!("{w}");
    }
    Ok(RunReport {
        curves,
        resamples: total.resamples,
        leftover_users: if ctx.need_dds { ctx.partition.leftover.clone() } else { Vec::new() },
        warnings,
        trace,
    })
}

/// Outage curve of a single strategy.
pub fn outage_curve(sc: &Scenario, strategy: Strategy) -> Result<OutageCurve> {
    let single = Scenario {
        strategies: vec![strategy],
        ..sc.clone()
    };
    Ok(compare_strategies(&single)?.curves.remove(0))
}

/// Per-user outage curves `(snr_db, outage)` of a single strategy.
pub fn individual_outage_curve(sc: &Scenario, strategy: Strategy) -> Result<Vec<Vec<(f64, f64)>>> {
    let curve = outage_curve(sc, strategy)?;
    Ok((0..sc.served).map(|k| curve.user_curve(k)).collect())
}

#[derive(Debug, Clone, PartialEq)]
pub struct PositionPoint {
    pub x: f64,
    pub report: RunReport,
}

/// Move UT 1 through `positions`, recomputing path-loss variances, and
/// evaluate every strategy at the scenario's SNR grid. All positions reuse
/// the same seed.
pub fn position_sweep(sc: &Scenario, topo: &Topology1D, positions: &[f64]) -> Result<Vec<PositionPoint>> {
    let mut out = Vec::with_capacity(positions.len());
    for &x in positions {
        let mut t = topo.clone();
        t.ut_positions[0] = x;
        let variances = variances_from_topology(&t)?;
        let moved = Scenario {
            variances,
            ..sc.clone()
        };
        let mut report = compare_strategies(&moved)?;
        if !(0.0..=2.0).contains(&x) {
            report.warnings.push(format!("UT 1 position {x} is outside [0, 2]"));
        }
        out.push(PositionPoint { x, report });
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DiversityEstimate {
    pub slope: f64,
    pub slope_stderr: f64,
    /// SNR range (dB) of the fitted points.
    pub fit_window: (f64, f64),
    pub r_squared: f64,
    pub points: usize,
}

/// Outage range and event count a point must satisfy to enter the fit.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FitWindow {
    pub min_outage: f64,
    pub max_outage: f64,
    pub min_events: u64,
}

impl Default for FitWindow {
    fn default() -> Self {
        Self {
            min_outage: 1e-5,
            max_outage: 1e-2,
            min_events: 100,
        }
    }
}

/// Least-squares slope of `-log10(P_out)` against `snr_db / 10`.
pub fn diversity_slope(curve: &OutageCurve, window: FitWindow) -> Result<DiversityEstimate> {
    let pts: Vec<(f64, f64, u64)> = curve
        .points
        .iter()
        .map(|p| (p.snr_db, p.joint_outage(), p.joint_events))
        .collect();
    diversity_slope_of(&pts, window)
}

/// As [`diversity_slope`], from raw `(snr_db, outage, events)` triples.
pub fn diversity_slope_of(points: &[(f64, f64, u64)], window: FitWindow) -> Result<DiversityEstimate> {
    let used: Vec<&(f64, f64, u64)> = points
        .iter()
        .filter(|(_, p, n)| *p >= window.min_outage && *p <= window.max_outage && *n >= window.min_events)
        .collect();
    if used.len() < 3 {
        return Err(Error::InsufficientData {
            qualifying: used.len(),
            required: 3,
        });
    }
    let xs: Vec<f64> = used.iter().map(|p| p.0 / 10.0).collect();
    let ys: Vec<f64> = used.iter().map(|p| -p.1.log10()).collect();
    let fit = linear_fit(&xs, &ys);
    Ok(DiversityEstimate {
        slope: fit.slope,
        slope_stderr: fit.slope_stderr,
        fit_window: (used[0].0, used[used.len() - 1].0),
        r_squared: fit.r_squared,
        points: used.len(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn single_link() -> Scenario {
        let mut sc = Scenario::symmetric(1, 1, 1, 1, vec![1.0], 3).unwrap();
        sc.trials = 20_000;
        sc.snr_db = vec![0.0, 5.0, 10.0];
        sc
    }

    #[test]
    fn zero_targets_never_fail() {
        let mut sc = Scenario::symmetric(2, 2, 2, 2, vec![0.0, 0.0], 1).unwrap();
        sc.trials = 2_000;
        let curve = outage_curve(&sc, Strategy::cooperative(Allocation::EqualPower)).unwrap();
        assert!(curve.points.iter().all(|p| p.joint_events == 0));
    }

    #[test]
    fn zero_budget_always_fails() {
        let mut sc = Scenario::symmetric(2, 2, 2, 2, vec![1.0, 1.0], 1).unwrap();
        sc.trials = 500;
        sc.budget_scale = vec![0.0, 0.0];
        sc.strategies = vec![
            Strategy::cooperative(Allocation::EqualPower),
            Strategy::cooperative(Allocation::A2Chernoff),
            Strategy::cooperative(Allocation::A1Balanced),
        ];
        let report = compare_strategies(&sc).unwrap();
        for c in &report.curves {
            assert!(c.points.iter().all(|p| p.joint_events == p.trials), "{}", c.strategy.label());
        }
    }

    #[test]
    fn exponential_closed_form() {
        let sc = single_link();
        let curve = outage_curve(&sc, Strategy::cooperative(Allocation::EqualPower)).unwrap();
        for p in &curve.points {
            let exact = 1.0 - (-1.0 / 10f64.powf(p.snr_db / 10.0)).exp();
            assert!((p.joint_outage() - exact).abs() <= 3.0 * p.halfwidth());
        }
    }

    #[test]
    fn thread_count_does_not_matter() {
        let mut sc = Scenario::symmetric(2, 3, 4, 2, vec![2.0, 1.0], 9).unwrap();
        sc.trials = 3_000;
        sc.block = 700;
        sc.max_events = Some(200);
        sc.strategies = vec![
            Strategy::cooperative(Allocation::EqualPower),
            Strategy::new(Allocation::EqualPower, Beamforming::Cooperative, true),
        ];
        let run = |threads| {
            rayon::ThreadPoolBuilder::new()
                .num_threads(threads)
                .build()
                .unwrap()
                .install(|| compare_strategies(&sc).unwrap())
        };
        assert_eq!(run(1), run(4));
    }

    #[test]
    fn early_stop_respects_event_budget() {
        let mut sc = single_link();
        sc.snr_db = vec![-5.0];
        sc.max_events = Some(100);
        sc.block = 50;
        let curve = outage_curve(&sc, Strategy::cooperative(Allocation::EqualPower)).unwrap();
        let p = &curve.points[0];
        assert!(p.joint_events >= 100 && p.trials < 2_000);
    }

    #[test]
    fn synthetic_power_law_slope() {
        let pts: Vec<(f64, f64, u64)> = (0..6)
            .map(|j| {
                let snr = 10.0 + 5.0 * j as f64;
                (snr, 10f64.powf(-3.0 * snr / 10.0) * 1e3, 1_000)
            })
            .collect();
        let window = FitWindow {
            min_outage: 1e-30,
            max_outage: 1.0,
            min_events: 100,
        };
        let est = diversity_slope_of(&pts, window).unwrap();
        assert!((est.slope - 3.0).abs() < 1e-6);
        assert!(matches!(
            diversity_slope_of(&pts[..2], window),
            Err(Error::InsufficientData { qualifying: 2, .. })
        ));
    }

    #[test]
    fn invalid_scenarios() {
        let mut sc = Scenario::symmetric(2, 2, 2, 2, vec![1.0, 1.0], 1).unwrap();
        sc.snr_db = vec![10.0, 5.0];
        assert!(sc.validate().is_err());
        let mut sc = Scenario::symmetric(2, 2, 4, 3, vec![1.0; 3], 1).unwrap();
        assert!(sc.validate().is_err());
        sc.served = 2;
        sc.targets = TargetRates::new(vec![1.0, 1.0]).unwrap();
        sc.strategies = vec![Strategy::new(Allocation::EqualPower, Beamforming::Noncooperative, true)];
        assert!(sc.validate().is_err());
    }
}
