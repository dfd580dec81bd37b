//! Distributed diversity scheduling.
//!
//! The users are split into a fixed partition of groups of size K̃. Each BS
//! reports the group maximizing its worst local gain together with that
//! value; the central station picks the best report and broadcasts the
//! winning group. One scheduling round costs B uplink messages and one
//! broadcast.

use std::fmt;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::substream;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case", tag = "kind", deny_unknown_fields)]
pub enum PartitionRule {
    /// `{0..K̃}, {K̃..2K̃}, ...`
    #[default]
    Consecutive,
    /// Blocks of a seeded random permutation.
    Random { seed: u64 },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Partition {
    pub sets: Vec<Vec<usize>>,
    /// Users left out when K̃ does not divide K.
    pub leftover: Vec<usize>,
}

impl Partition {
    pub fn group_size(&self) -> usize {
        self.sets[0].len()
    }

    /// Group containing user `k`, if any.
    pub fn set_of(&self, k: usize) -> Option<usize> {
        self.sets.iter().position(|s| s.contains(&k))
    }
}

/// Fixed partition of `users` users into `floor(K / K̃)` groups of `group_size`.
pub fn make_partition(users: usize, group_size: usize, rule: PartitionRule) -> Result<Partition> {
    if group_size == 0 || group_size > users {
        return Err(Error::InvalidInput(format!(
            "group size {group_size} must lie in 1..={users}"
        )));
    }
    let mut order: Vec<usize> = (0..users).collect();
    if let PartitionRule::Random { seed } = rule {
        order.shuffle(&mut substream(seed, u64::MAX));
    }
    let kappa = users / group_size;
    let sets = order[..kappa * group_size]
        .chunks(group_size)
        .map(<[usize]>::to_vec)
        .collect();
    Ok(Partition {
        sets,
        leftover: order[kappa * group_size..].to_vec(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BsReport {
    pub bs_id: usize,
    /// Zero-based group index.
    pub set_index: usize,
    pub value: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CsDecision {
    pub winning_set_index: usize,
    pub winning_bs: usize,
    pub winning_value: f64,
}

fn worst_gain(gains_row: &[f64], set: &[usize]) -> f64 {
    set.iter().map(|&k| gains_row[k]).fold(f64::INFINITY, f64::min)
}

/// BS-side step: `max_U min_{k in U} |a_ik|^2` over the partition, lowest
/// group index on ties. `gains_row` is indexed by user.
pub fn bs_local_report(bs_id: usize, gains_row: &[f64], part: &Partition) -> BsReport {
    let mut best = BsReport {
        bs_id,
        set_index: 0,
        value: worst_gain(gains_row, &part.sets[0]),
    };
    for (u, set) in part.sets.iter().enumerate().skip(1) {
        let v = worst_gain(gains_row, set);
        if v > best.value {
            best.set_index = u;
            best.value = v;
        }
    }
    best
}

/// CS-side step: largest reported value, lowest BS id then lowest group on ties.
pub fn cs_select(reports: &[BsReport]) -> Result<CsDecision> {
    let first = reports
        .first()
        .ok_or_else(|| Error::InvalidInput("central station received no reports".into()))?;
    let mut win = *first;
    for r in &reports[1..] {
        let better = r.value > win.value
            || (r.value == win.value && (r.bs_id, r.set_index) < (win.bs_id, win.set_index));
        if better {
            win = *r;
        }
    }
    Ok(CsDecision {
        winning_set_index: win.set_index,
        winning_bs: win.bs_id,
        winning_value: win.value,
    })
}

/// Centralized evaluation of the same rule by enumerating every
/// `(BS, group)` pair. `gains[i][k] = |a_ik|^2`.
pub fn direct_selection(gains: &[Vec<f64>], part: &Partition) -> CsDecision {
    let mut best = CsDecision {
        winning_set_index: 0,
        winning_bs: 0,
        winning_value: f64::NEG_INFINITY,
    };
    for (i, row) in gains.iter().enumerate() {
        for (u, set) in part.sets.iter().enumerate() {
            let v = worst_gain(row, set);
            if v > best.winning_value {
                best = CsDecision {
                    winning_set_index: u,
                    winning_bs: i,
                    winning_value: v,
                };
            }
        }
    }
    best
}

/// Best K̃-subset for `max_U min_{k in U} ||a^k||^2`.
///
/// For any K̃-subset, its worst member is no better than the K̃-th largest
/// norm overall, and the top-K̃ set attains exactly that value, so sorting
/// replaces the enumeration over all subsets. Ties go to the lower index.
pub fn oracle_select(norms: &[f64], group_size: usize) -> Result<Vec<usize>> {
    if group_size == 0 || group_size > norms.len() {
        return Err(Error::InvalidInput("group size must lie in 1..=K".into()));
    }
    let mut order: Vec<usize> = (0..norms.len()).collect();
    order.sort_by(|&a, &b| norms[b].total_cmp(&norms[a]).then(a.cmp(&b)));
    let mut pick = order[..group_size].to_vec();
    pick.sort_unstable();
    Ok(pick)
}

/// Diversity of the distributed scheme, `B floor(K/K̃) (M - K̃ + 1)`, and the
/// upper bound of the centralized optimum, `B (K - K̃ + 1)(M - K̃ + 1)`.
pub fn diversity_bounds(bs: usize, users: usize, group_size: usize, antennas: usize) -> Result<(usize, usize)> {
    if group_size == 0 || group_size > antennas.min(users) {
        return Err(Error::InvalidInput("group size must lie in 1..=min(M, K)".into()));
    }
    let per_link = antennas - group_size + 1;
    let lower = bs * (users / group_size) * per_link;
    let upper = bs * (users - group_size + 1) * per_link;
    Ok((lower, upper))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Sender {
    Bs(usize),
    CentralStation,
}

impl fmt::Display for Sender {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Sender::Bs(i) => write!(f, "bs{}", i + 1),
            Sender::CentralStation => write!(f, "cs"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Payload {
    Report(BsReport),
    Decision(CsDecision),
}

impl fmt::Display for Payload {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Payload::Report(r) => write!(f, "report(set={},value={:.12e})", r.set_index + 1, r.value),
            Payload::Decision(d) => write!(
                f,
                "decision(set={},bs={},value={:.12e})",
                d.winning_set_index + 1,
                d.winning_bs + 1,
                d.winning_value
            ),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Message {
    pub round: u64,
    pub sender: Sender,
    pub payload: Payload,
}

impl fmt::Display for Message {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "round={} sender={} payload={}", self.round, self.sender, self.payload)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScheduleOutcome {
    pub decision: CsDecision,
    pub selected: Vec<usize>,
    /// Uplink reports in BS order, then the broadcast.
    pub messages: Vec<Message>,
}

/// One synchronous scheduling round over a lossless backhaul.
/// `gains[i][k] = |a_ik|^2` with ZF computed inside each user's group.
pub fn run_protocol(round: u64, gains: &[Vec<f64>], part: &Partition) -> Result<ScheduleOutcome> {
    let reports: Vec<BsReport> = gains
        .iter()
        .enumerate()
        .map(|(i, row)| bs_local_report(i, row, part))
        .collect();
    let decision = cs_select(&reports)?;
    let mut messages: Vec<Message> = reports
        .iter()
        .map(|r| Message {
            round,
            sender: Sender::Bs(r.bs_id),
            payload: Payload::Report(*r),
        })
        .collect();
    messages.push(Message {
        round,
        sender: Sender::CentralStation,
        payload: Payload::Decision(decision),
    });
    Ok(ScheduleOutcome {
        selected: part.sets[decision.winning_set_index].clone(),
        decision,
        messages,
    })
}
