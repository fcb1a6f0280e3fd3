//! Link-level evaluation: SINR, rates, interference measures, energy
//! efficiency and constraint checking for a fixed channel assignment and
//! power allocation.

use thiserror::Error;

use crate::num::{real, Real};
use crate::scenario::{GainTable, Scenario};

/// Relative tolerance used by the feasibility report when comparing rates and
/// budgets produced by the iterative solver.
pub const FEASIBILITY_REL_TOL: f64 = 1e-9;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("group {group} does not transmit on channel {channel}")]
    ChannelNotAssigned { group: usize, channel: usize },
}

/// Binary channel-allocation matrix (K rows of groups, M columns of channels).
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Assignment {
    delta: Vec<Vec<bool>>,
}

impl Assignment {
    pub fn empty(num_groups: usize, num_channels: usize) -> Self {
        Self {
            delta: vec![vec![false; num_channels]; num_groups],
        }
    }

    pub fn num_groups(&self) -> usize {
        self.delta.len()
    }

    pub fn num_channels(&self) -> usize {
        self.delta.first().map_or(0, |row| row.len())
    }

    pub fn assigned(&self, k: usize, m: usize) -> bool {
        self.delta[k][m]
    }

    pub fn set(&mut self, k: usize, m: usize, value: bool) {
        self.delta[k][m] = value;
    }

    /// Number of channels used by group `k` (split-factor usage).
    pub fn row_sum(&self, k: usize) -> usize {
        self.delta[k].iter().filter(|v| **v).count()
    }

    /// Number of groups sharing channel `m` (reuse-factor usage).
    pub fn col_sum(&self, m: usize) -> usize {
        self.delta.iter().filter(|row| row[m]).count()
    }

    /// Channels used by group `k`, ascending.
    pub fn channels_of(&self, k: usize) -> Vec<usize> {
        (0..self.num_channels()).filter(|&m| self.delta[k][m]).collect()
    }

    /// Groups transmitting on channel `m`, ascending.
    pub fn groups_on(&self, m: usize) -> Vec<usize> {
        (0..self.num_groups()).filter(|&k| self.delta[k][m]).collect()
    }

    /// All assigned (group, channel) pairs in row-major order.
    pub fn assigned_pairs(&self) -> Vec<(usize, usize)> {
        let mut out = Vec::new();
        for k in 0..self.num_groups() {
            for m in 0..self.num_channels() {
                if self.delta[k][m] {
                    out.push((k, m));
                }
            }
        }
        out
    }

    /// Checks the split (row) and reuse (column) capacity constraints.
    pub fn capacity_ok(&self, split: usize, reuse: usize) -> bool {
        (0..self.num_groups()).all(|k| self.row_sum(k) <= split)
            && (0..self.num_channels()).all(|m| self.col_sum(m) <= reuse)
    }
}

/// Transmit powers in watt: one per CUE plus a K x M matrix for the groups.
#[derive(Debug, Clone, PartialEq)]
pub struct PowerAllocation<T> {
    pub cue: Vec<T>,
    pub group: Vec<Vec<T>>,
}

impl<T: Real> PowerAllocation<T> {
    pub fn zeros(num_groups: usize, num_channels: usize) -> Self {
        Self {
            cue: vec![T::zero(); num_channels],
            group: vec![vec![T::zero(); num_channels]; num_groups],
        }
    }

    /// Probe allocation used to rank interference before any optimization:
    /// CUEs at full budget and each group budget split uniformly over all M
    /// channels. Does not respect the support invariant on purpose.
    pub fn uniform_probe(scenario: &Scenario<T>) -> Self {
        let m = scenario.num_channels();
        let over_m = T::one() / crate::num::real_from_usize(m);
        Self {
            cue: scenario.max_power_cue.clone(),
            group: scenario
                .max_power_group
                .iter()
                .map(|budget| vec![*budget * over_m; m])
                .collect(),
        }
    }

    /// Budget split uniformly over the channels each group actually uses;
    /// CUEs at full budget.
    pub fn uniform_split(scenario: &Scenario<T>, assignment: &Assignment) -> Self {
        let mut powers = Self::zeros(scenario.num_groups(), scenario.num_channels());
        powers.cue = scenario.max_power_cue.clone();
        for k in 0..scenario.num_groups() {
            let used = assignment.channels_of(k);
            if used.is_empty() {
                continue;
            }
            let share = scenario.max_power_group[k] / crate::num::real_from_usize(used.len());
            for m in used {
                powers.group[k][m] = share;
            }
        }
        powers
    }

    /// Total transmit power over all users, in watt.
    pub fn total_transmit(&self) -> T {
        let cue: T = self.cue.iter().fold(T::zero(), |a, b| a + *b);
        let grp: T = self
            .group
            .iter()
            .flatten()
            .fold(T::zero(), |a, b| a + *b);
        cue + grp
    }
}

/// Per-user and system-level efficiency figures for one evaluation.
#[derive(Debug, Clone, PartialEq)]
pub struct Metrics<T> {
    pub rate_cue: Vec<T>,
    pub rate_group: Vec<T>,
    pub ee_cue: Vec<T>,
    pub ee_group: Vec<T>,
    /// Global energy efficiency: aggregate rate over circuit plus transmit power.
    pub gee: T,
    /// Weighted minimum (max-min) energy efficiency.
    pub wee: T,
    pub total_power: T,
}

impl<T: Real> Metrics<T> {
    pub fn aggregate_rate(&self) -> T {
        let c: T = self.rate_cue.iter().fold(T::zero(), |a, b| a + *b);
        let g: T = self.rate_group.iter().fold(T::zero(), |a, b| a + *b);
        c + g
    }
}

fn safe_div<T: Real>(num: T, den: T) -> T {
    if den > T::zero() {
        num / den
    } else {
        T::zero()
    }
}

/// Circuit power charged to the transmitter of group `k`: once per used
/// channel when the split factor allows multi-channel operation, once in
/// total otherwise. An idle transmitter still draws its base circuit power.
pub fn group_circuit_power<T: Real>(
    scenario: &Scenario<T>,
    assignment: &Assignment,
    k: usize,
) -> T {
    let base = scenario.circuit_power_group[k];
    if scenario.split_factor > 1 {
        base * crate::num::real_from_usize(assignment.row_sum(k).max(1))
    } else {
        base
    }
}

/// SINR at receiver `rcv` of group `k` on channel `m`.
pub fn sinr_d2d<T: Real>(
    k: usize,
    rcv: usize,
    m: usize,
    assignment: &Assignment,
    powers: &PowerAllocation<T>,
    gains: &GainTable<T>,
    scenario: &Scenario<T>,
) -> Result<T, ModelError> {
    if !assignment.assigned(k, m) {
        return Err(ModelError::ChannelNotAssigned { group: k, channel: m });
    }
    let signal = gains.group_to_receiver(k, k, rcv, m) * powers.group[k][m];
    let mut denom = scenario.noise_power + powers.cue[m] * gains.cue_to_receiver(k, rcv, m);
    for j in 0..scenario.num_groups() {
        if j != k && assignment.assigned(j, m) {
            denom = denom + powers.group[j][m] * gains.group_to_receiver(j, k, rcv, m);
        }
    }
    Ok(safe_div(signal, denom))
}

/// SINR of CUE `m` at the base station.
pub fn sinr_cue<T: Real>(
    m: usize,
    assignment: &Assignment,
    powers: &PowerAllocation<T>,
    gains: &GainTable<T>,
    scenario: &Scenario<T>,
) -> T {
    let signal = gains.cue_to_bs(m) * powers.cue[m];
    let mut denom = scenario.noise_power;
    for k in 0..scenario.num_groups() {
        if assignment.assigned(k, m) {
            denom = denom + powers.group[k][m] * gains.group_to_bs(k, m);
        }
    }
    safe_div(signal, denom)
}

/// Normalized rate of CUE `m` in bit/s/Hz.
pub fn rate_cue<T: Real>(
    m: usize,
    assignment: &Assignment,
    powers: &PowerAllocation<T>,
    gains: &GainTable<T>,
    scenario: &Scenario<T>,
) -> T {
    (T::one() + sinr_cue(m, assignment, powers, gains, scenario)).log2()
}

/// Worst-receiver SINR of group `k` on channel `m`.
pub fn min_sinr_group<T: Real>(
    k: usize,
    m: usize,
    assignment: &Assignment,
    powers: &PowerAllocation<T>,
    gains: &GainTable<T>,
    scenario: &Scenario<T>,
) -> Result<T, ModelError> {
    let mut worst = T::infinity();
    for rcv in 0..scenario.receivers_of(k) {
        let s = sinr_d2d(k, rcv, m, assignment, powers, gains, scenario)?;
        if s < worst {
            worst = s;
        }
    }
    Ok(worst)
}

/// Per-channel aggregated rate of group `k` on channel `m`: the multicast
/// rate is set by the weakest receiver and counted once per receiver.
pub fn rate_group_on_channel<T: Real>(
    k: usize,
    m: usize,
    assignment: &Assignment,
    powers: &PowerAllocation<T>,
    gains: &GainTable<T>,
    scenario: &Scenario<T>,
) -> Result<T, ModelError> {
    let worst = min_sinr_group(k, m, assignment, powers, gains, scenario)?;
    let s_k: T = crate::num::real_from_usize(scenario.receivers_of(k));
    Ok(s_k * (T::one() + worst).log2())
}

/// Aggregated rate of group `k` over all its channels, in bit/s/Hz.
pub fn rate_group<T: Real>(
    k: usize,
    assignment: &Assignment,
    powers: &PowerAllocation<T>,
    gains: &GainTable<T>,
    scenario: &Scenario<T>,
) -> T {
    let mut total = T::zero();
    for m in 0..scenario.num_channels() {
        if assignment.assigned(k, m) {
            total = total
                + rate_group_on_channel(k, m, assignment, powers, gains, scenario)
                    .expect("channel is assigned");
        }
    }
    total
}

/// Aggregate interference power received by group `k` on channel `m`: the
/// worst receiver's sum of the CUE contribution and of all co-channel group
/// transmitters.
pub fn interference_group<T: Real>(
    k: usize,
    m: usize,
    assignment: &Assignment,
    powers: &PowerAllocation<T>,
    gains: &GainTable<T>,
    scenario: &Scenario<T>,
) -> T {
    let mut worst = T::zero();
    for rcv in 0..scenario.receivers_of(k) {
        let mut level = powers.cue[m] * gains.cue_to_receiver(k, rcv, m);
        for j in 0..scenario.num_groups() {
            if j != k && assignment.assigned(j, m) {
                level = level + powers.group[j][m] * gains.group_to_receiver(j, k, rcv, m);
            }
        }
        if level > worst {
            worst = level;
        }
    }
    worst
}

/// Aggregate interference power received on channel `m` at the base station
/// from the co-channel group transmitters.
pub fn interference_cue<T: Real>(
    m: usize,
    assignment: &Assignment,
    powers: &PowerAllocation<T>,
    gains: &GainTable<T>,
    scenario: &Scenario<T>,
) -> T {
    let mut total = T::zero();
    for k in 0..scenario.num_groups() {
        if assignment.assigned(k, m) {
            total = total + powers.group[k][m] * gains.group_to_bs(k, m);
        }
    }
    total
}

/// Evaluates every rate and energy-efficiency figure for the given state.
pub fn metrics<T: Real>(
    assignment: &Assignment,
    powers: &PowerAllocation<T>,
    gains: &GainTable<T>,
    scenario: &Scenario<T>,
) -> Metrics<T> {
    let m_ch = scenario.num_channels();
    let k_gr = scenario.num_groups();

    let rate_cue_v: Vec<T> = (0..m_ch)
        .map(|m| rate_cue(m, assignment, powers, gains, scenario))
        .collect();
    let rate_grp_v: Vec<T> = (0..k_gr)
        .map(|k| rate_group(k, assignment, powers, gains, scenario))
        .collect();

    let ee_cue: Vec<T> = (0..m_ch)
        .map(|m| safe_div(rate_cue_v[m], scenario.circuit_power_cue[m] + powers.cue[m]))
        .collect();
    let ee_group: Vec<T> = (0..k_gr)
        .map(|k| {
            let tx: T = powers.group[k].iter().fold(T::zero(), |a, b| a + *b);
            safe_div(rate_grp_v[k], group_circuit_power(scenario, assignment, k) + tx)
        })
        .collect();

    let circuit_total = (0..m_ch).fold(T::zero(), |a, m| a + scenario.circuit_power_cue[m])
        + (0..k_gr).fold(T::zero(), |a, k| a + group_circuit_power(scenario, assignment, k));
    let total_power = powers.total_transmit();
    let aggregate = rate_cue_v.iter().chain(&rate_grp_v).fold(T::zero(), |a, b| a + *b);
    let gee = safe_div(aggregate, circuit_total + total_power);

    let mut wee = T::infinity();
    for (m, ee) in ee_cue.iter().enumerate() {
        let w = scenario.weight_cue[m] * *ee;
        if w < wee {
            wee = w;
        }
    }
    for (k, ee) in ee_group.iter().enumerate() {
        let w = scenario.weight_group[k] * *ee;
        if w < wee {
            wee = w;
        }
    }
    if !wee.is_finite() {
        wee = T::zero();
    }

    Metrics {
        rate_cue: rate_cue_v,
        rate_group: rate_grp_v,
        ee_cue,
        ee_group,
        gee,
        wee,
        total_power,
    }
}

/// Pass/fail outcome per constraint family.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FeasibilityReport {
    /// Group power budgets (sum over channels within budget).
    pub power_budget_group: bool,
    /// CUE power budgets.
    pub power_budget_cue: bool,
    /// Group minimum aggregated rates.
    pub min_rate_group: bool,
    /// CUE minimum rates.
    pub min_rate_cue: bool,
    /// Per-channel group rate floors; trivially satisfied when the split
    /// factor is one.
    pub min_rate_per_channel: bool,
    /// Split factor: channels per group.
    pub split: bool,
    /// Reuse factor: groups per channel.
    pub reuse: bool,
    /// Nonnegative powers supported only on assigned channels.
    pub nonnegative: bool,
}

impl FeasibilityReport {
    pub fn all(&self) -> bool {
        self.power_budget_group
            && self.power_budget_cue
            && self.min_rate_group
            && self.min_rate_cue
            && self.min_rate_per_channel
            && self.split
            && self.reuse
            && self.nonnegative
    }
}

/// Checks every constraint family of the optimization problem and reports
/// pass/fail per family.
pub fn check_feasible<T: Real>(
    assignment: &Assignment,
    powers: &PowerAllocation<T>,
    gains: &GainTable<T>,
    scenario: &Scenario<T>,
) -> FeasibilityReport {
    let tol: T = real(FEASIBILITY_REL_TOL);
    let k_gr = scenario.num_groups();
    let m_ch = scenario.num_channels();
    let ge = |value: T, target: T| value >= target - tol * target.max(T::one());
    let le = |value: T, budget: T| value <= budget + tol * budget.max(T::one());

    let power_budget_group = (0..k_gr).all(|k| {
        let total: T = powers.group[k].iter().fold(T::zero(), |a, b| a + *b);
        le(total, scenario.max_power_group[k])
    });
    let power_budget_cue = (0..m_ch).all(|m| le(powers.cue[m], scenario.max_power_cue[m]));

    let min_rate_group = (0..k_gr).all(|k| {
        ge(
            rate_group(k, assignment, powers, gains, scenario),
            scenario.min_rate_group[k],
        )
    });
    let min_rate_cue = (0..m_ch).all(|m| {
        ge(
            rate_cue(m, assignment, powers, gains, scenario),
            scenario.min_rate_cue[m],
        )
    });

    let min_rate_per_channel = scenario.split_factor == 1
        || assignment.assigned_pairs().iter().all(|&(k, m)| {
            ge(
                rate_group_on_channel(k, m, assignment, powers, gains, scenario)
                    .expect("pair is assigned"),
                scenario.min_rate_per_channel[k][m],
            )
        });

    let split = (0..k_gr).all(|k| assignment.row_sum(k) <= scenario.split_factor);
    let reuse = (0..m_ch).all(|m| assignment.col_sum(m) <= scenario.reuse_factor);

    let nonnegative = powers.cue.iter().all(|p| *p >= T::zero())
        && (0..k_gr).all(|k| {
            (0..m_ch).all(|m| {
                let p = powers.group[k][m];
                p >= T::zero() && (assignment.assigned(k, m) || p == T::zero())
            })
        });

    FeasibilityReport {
        power_budget_group,
        power_budget_cue,
        min_rate_group,
        min_rate_cue,
        min_rate_per_channel,
        split,
        reuse,
        nonnegative,
    }
}
