//! Interference-based preference construction and stable channel assignment
//! for the one-to-one, many-to-one and many-to-many regimes.
//!
//! The matchers run the round-based procedure of the reference design: one
//! fresh slot per channel per round, groups proposing in index order, and the
//! accumulated interference recomputed from the partial assignment between
//! rounds. Because the round slicing alone cannot guarantee the absence of
//! blocking pairs across rounds, each matcher finishes with a deferred
//! acceptance sweep at full capacities under the preference snapshot of the
//! final round; the returned assignment is stable with respect to that
//! snapshot.

use std::collections::{BTreeSet, VecDeque};

use crate::model::{interference_group, Assignment, PowerAllocation};
use crate::num::Real;
use crate::scenario::{GainTable, Scenario};

/// Ordered preference lists: channels per group (ascending interference) and
/// groups per channel (ascending marginal interference contribution).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PreferenceLists {
    /// `d2md_pl[k]` ranks all channels for group `k`, most preferred first.
    pub d2md_pl: Vec<Vec<usize>>,
    /// `cue_pl[m]` ranks all groups for channel `m`, most preferred first.
    pub cue_pl: Vec<Vec<usize>>,
}

impl PreferenceLists {
    pub fn num_groups(&self) -> usize {
        self.d2md_pl.len()
    }

    pub fn num_channels(&self) -> usize {
        self.cue_pl.len()
    }

    /// Each list must be a permutation of the full opposite index set.
    pub fn validate(&self) -> bool {
        let k = self.num_groups();
        let m = self.num_channels();
        let is_perm = |list: &Vec<usize>, n: usize| {
            let mut seen = vec![false; n];
            list.len() == n
                && list.iter().all(|&i| {
                    if i < n && !seen[i] {
                        seen[i] = true;
                        true
                    } else {
                        false
                    }
                })
        };
        self.d2md_pl.iter().all(|l| is_perm(l, m)) && self.cue_pl.iter().all(|l| is_perm(l, k))
    }

    /// `rank[k][m]`: position of channel `m` in group `k`'s list (0 = best).
    fn d2md_ranks(&self) -> Vec<Vec<usize>> {
        let m = self.num_channels();
        self.d2md_pl
            .iter()
            .map(|list| {
                let mut rank = vec![0usize; m];
                for (pos, &ch) in list.iter().enumerate() {
                    rank[ch] = pos;
                }
                rank
            })
            .collect()
    }

    /// `rank[m][k]`: position of group `k` in channel `m`'s list (0 = best).
    fn cue_ranks(&self) -> Vec<Vec<usize>> {
        let k = self.num_groups();
        self.cue_pl
            .iter()
            .map(|list| {
                let mut rank = vec![0usize; k];
                for (pos, &g) in list.iter().enumerate() {
                    rank[g] = pos;
                }
                rank
            })
            .collect()
    }
}

fn sort_ascending_by<T: Real>(values: &[T]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..values.len()).collect();
    idx.sort_by(|&a, &b| {
        values[a]
            .partial_cmp(&values[b])
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(a.cmp(&b))
    });
    idx
}

/// Builds both preference lists from the interference levels implied by the
/// given (possibly partial) assignment and power allocation. Groups rank
/// channels by ascending received interference; channels rank groups by
/// ascending marginal interference contribution. Ties break towards the
/// lower index.
pub fn build_preferences<T: Real>(
    assignment: &Assignment,
    powers: &PowerAllocation<T>,
    gains: &GainTable<T>,
    scenario: &Scenario<T>,
) -> PreferenceLists {
    let k_gr = scenario.num_groups();
    let m_ch = scenario.num_channels();
    let d2md_pl = (0..k_gr)
        .map(|k| {
            let levels: Vec<T> = (0..m_ch)
                .map(|m| interference_group(k, m, assignment, powers, gains, scenario))
                .collect();
            sort_ascending_by(&levels)
        })
        .collect();
    let cue_pl = (0..m_ch)
        .map(|m| {
            let contributions: Vec<T> = (0..k_gr)
                .map(|k| powers.group[k][m] * gains.group_to_bs(k, m))
                .collect();
            sort_ascending_by(&contributions)
        })
        .collect();
    PreferenceLists { d2md_pl, cue_pl }
}

/// Outcome of one matcher invocation: the final (stabilized) assignment plus
/// the committed assignment at the end of each round, for trace inspection.
#[derive(Debug, Clone)]
pub struct MatchOutcome {
    pub assignment: Assignment,
    /// Committed assignment after each executed round.
    pub rounds: Vec<Assignment>,
    /// Preference snapshot used by the final round and the stability sweep.
    pub final_prefs: PreferenceLists,
    /// Total number of proposals performed, all phases included.
    pub proposals: usize,
}

impl MatchOutcome {
    /// Structured text dump of the preference tables and the round-by-round
    /// match trace.
    pub fn trace_text(&self) -> String {
        use std::fmt::Write;
        let mut out = String::new();
        for (k, list) in self.final_prefs.d2md_pl.iter().enumerate() {
            let _ = writeln!(out, "group {k} prefers channels {list:?}");
        }
        for (m, list) in self.final_prefs.cue_pl.iter().enumerate() {
            let _ = writeln!(out, "channel {m} prefers groups {list:?}");
        }
        for (i, round) in self.rounds.iter().enumerate() {
            let _ = writeln!(out, "round {}: {:?}", i + 1, round.assigned_pairs());
        }
        let _ = writeln!(out, "final: {:?}", self.assignment.assigned_pairs());
        out
    }
}

/// One round of the slotted proposal game. Each channel offers a single new
/// slot; a group displaced from a slot is barred from that channel for the
/// rest of the round and re-enters the queue only when it holds nothing at
/// all (otherwise it waits for the next round on the free list).
struct RoundState<'a> {
    prefs: &'a PreferenceLists,
    cue_rank: Vec<Vec<usize>>,
    split: usize,
    committed: &'a Assignment,
    slot: Vec<Option<usize>>,
    tentative: Vec<usize>,
    pointer: Vec<usize>,
    banned: Vec<BTreeSet<usize>>,
    queue: VecDeque<usize>,
    in_queue: Vec<bool>,
    free: BTreeSet<usize>,
    proposals: usize,
}

impl<'a> RoundState<'a> {
    fn new(
        prefs: &'a PreferenceLists,
        split: usize,
        committed: &'a Assignment,
        participants: &[usize],
    ) -> Self {
        let k = prefs.num_groups();
        let m = prefs.num_channels();
        let mut in_queue = vec![false; k];
        for &g in participants {
            in_queue[g] = true;
        }
        Self {
            prefs,
            cue_rank: prefs.cue_ranks(),
            split,
            committed,
            slot: vec![None; m],
            tentative: vec![0; k],
            pointer: vec![0; k],
            banned: vec![BTreeSet::new(); k],
            queue: participants.iter().copied().collect(),
            in_queue,
            free: BTreeSet::new(),
            proposals: 0,
        }
    }

    fn holdings(&self, k: usize) -> usize {
        self.committed.row_sum(k) + self.tentative[k]
    }

    fn displace(&mut self, k: usize, channel: usize) {
        self.tentative[k] -= 1;
        self.banned[k].insert(channel);
        if self.holdings(k) == 0 {
            self.free.remove(&k);
            if !self.in_queue[k] {
                self.queue.push_back(k);
                self.in_queue[k] = true;
            }
        } else {
            self.free.insert(k);
        }
    }

    fn run(mut self) -> (Vec<Option<usize>>, Vec<usize>, usize) {
        while let Some(k) = self.queue.pop_front() {
            self.in_queue[k] = false;
            loop {
                if self.holdings(k) >= self.split {
                    break; // satisfied for this round
                }
                let Some(&m) = self.prefs.d2md_pl[k].get(self.pointer[k]) else {
                    self.free.insert(k);
                    break;
                };
                self.pointer[k] += 1;
                if self.banned[k].contains(&m) || self.committed.assigned(k, m) {
                    continue;
                }
                self.proposals += 1;
                match self.slot[m] {
                    None => {
                        self.slot[m] = Some(k);
                        self.tentative[k] += 1;
                    }
                    Some(holder) if self.cue_rank[m][k] < self.cue_rank[m][holder] => {
                        self.slot[m] = Some(k);
                        self.tentative[k] += 1;
                        self.displace(holder, m);
                    }
                    Some(_) => {} // rejected, try the next preference
                }
            }
        }
        let next: Vec<usize> = self.free.iter().copied().collect();
        (self.slot, next, self.proposals)
    }
}

/// Group-proposing deferred acceptance at full capacities: groups acquire up
/// to `split` channels in preference order, channels hold their `reuse` most
/// preferred proposers. The outcome has no blocking pair with respect to the
/// given lists.
fn deferred_acceptance(prefs: &PreferenceLists, split: usize, reuse: usize) -> (Assignment, usize) {
    let k_gr = prefs.num_groups();
    let m_ch = prefs.num_channels();
    let cue_rank = prefs.cue_ranks();
    let mut holders: Vec<Vec<usize>> = vec![Vec::new(); m_ch];
    let mut held: Vec<usize> = vec![0; k_gr];
    let mut pointer = vec![0usize; k_gr];
    let mut queue: VecDeque<usize> = (0..k_gr).collect();
    let mut in_queue = vec![true; k_gr];
    let mut proposals = 0usize;

    while let Some(k) = queue.pop_front() {
        in_queue[k] = false;
        while held[k] < split && pointer[k] < m_ch {
            let m = prefs.d2md_pl[k][pointer[k]];
            pointer[k] += 1;
            proposals += 1;
            if holders[m].len() < reuse {
                holders[m].push(k);
                held[k] += 1;
            } else {
                let (worst_pos, &worst) = holders[m]
                    .iter()
                    .enumerate()
                    .max_by_key(|(_, &g)| cue_rank[m][g])
                    .expect("channel at capacity has holders");
                if cue_rank[m][k] < cue_rank[m][worst] {
                    holders[m].swap_remove(worst_pos);
                    held[worst] -= 1;
                    if !in_queue[worst] {
                        queue.push_back(worst);
                        in_queue[worst] = true;
                    }
                    holders[m].push(k);
                    held[k] += 1;
                }
            }
        }
    }

    let mut assignment = Assignment::empty(k_gr, m_ch);
    for (m, hs) in holders.iter().enumerate() {
        for &k in hs {
            assignment.set(k, m, true);
        }
    }
    (assignment, proposals)
}

/// Runs the round-sliced game for `reuse` rounds with per-round preference
/// recomputation, then the stabilization sweep on the final snapshot.
fn run_rounds(
    mut prefs_for_round: impl FnMut(usize, &Assignment) -> PreferenceLists,
    split: usize,
    reuse: usize,
    num_groups: usize,
    num_channels: usize,
) -> MatchOutcome {
    let mut committed = Assignment::empty(num_groups, num_channels);
    let mut participants: Vec<usize> = (0..num_groups).collect();
    let mut rounds = Vec::new();
    let mut proposals = 0usize;
    let mut final_prefs = prefs_for_round(0, &committed);

    for round in 0..reuse {
        if participants.is_empty() {
            break;
        }
        if round > 0 {
            final_prefs = prefs_for_round(round, &committed);
        }
        let state = RoundState::new(&final_prefs, split, &committed, &participants);
        let (slots, next, n) = state.run();
        proposals += n;
        for (m, holder) in slots.iter().enumerate() {
            if let Some(k) = *holder {
                committed.set(k, m, true);
            }
        }
        rounds.push(committed.clone());
        participants = next;
    }

    let (assignment, n) = deferred_acceptance(&final_prefs, split, reuse);
    proposals += n;
    MatchOutcome {
        assignment,
        rounds,
        final_prefs,
        proposals,
    }
}

/// One-to-one matching through plain deferred acceptance with groups
/// proposing. Groups left without a channel (when K > M) simply stay
/// unmatched.
pub fn match_one_to_one(prefs: &PreferenceLists) -> Assignment {
    deferred_acceptance(prefs, 1, 1).0
}

/// Many-to-one matching on a fixed preference profile: up to `reuse` groups
/// per channel, one channel per group.
pub fn match_many_to_one_profile(prefs: &PreferenceLists, reuse: usize) -> MatchOutcome {
    run_rounds(
        |_, _| prefs.clone(),
        1,
        reuse,
        prefs.num_groups(),
        prefs.num_channels(),
    )
}

/// Many-to-many matching on a fixed preference profile: up to `split`
/// channels per group and `reuse` groups per channel.
pub fn match_many_to_many_profile(
    prefs: &PreferenceLists,
    split: usize,
    reuse: usize,
) -> MatchOutcome {
    run_rounds(
        |_, _| prefs.clone(),
        split,
        reuse,
        prefs.num_groups(),
        prefs.num_channels(),
    )
}

/// Interference-driven matching with explicit capacities: the preference
/// lists are rebuilt from the accumulated interference of the partial
/// assignment before every round.
pub fn match_with_capacities<T: Real>(
    scenario: &Scenario<T>,
    gains: &GainTable<T>,
    initial_powers: &PowerAllocation<T>,
    split: usize,
    reuse: usize,
) -> MatchOutcome {
    run_rounds(
        |_, committed| build_preferences(committed, initial_powers, gains, scenario),
        split,
        reuse,
        scenario.num_groups(),
        scenario.num_channels(),
    )
}

/// Many-to-one matching driven by the scenario interference model: one
/// channel per group, up to the scenario reuse factor per channel.
pub fn match_many_to_one<T: Real>(
    scenario: &Scenario<T>,
    gains: &GainTable<T>,
    initial_powers: &PowerAllocation<T>,
) -> MatchOutcome {
    match_with_capacities(scenario, gains, initial_powers, 1, scenario.reuse_factor)
}

/// Many-to-many matching driven by the scenario interference model.
pub fn match_many_to_many<T: Real>(
    scenario: &Scenario<T>,
    gains: &GainTable<T>,
    initial_powers: &PowerAllocation<T>,
) -> MatchOutcome {
    match_with_capacities(
        scenario,
        gains,
        initial_powers,
        scenario.split_factor,
        scenario.reuse_factor,
    )
}

/// Searches for a blocking pair: an unmatched (group, channel) pair in which
/// the group has spare quota or prefers the channel to one of its matches,
/// while the channel has spare capacity or prefers the group to one of its
/// holders. Returns the first witness in (group index, preference order).
pub fn find_blocking_pair(
    assignment: &Assignment,
    prefs: &PreferenceLists,
    reuse: usize,
    split: usize,
) -> Option<(usize, usize)> {
    let d2md_rank = prefs.d2md_ranks();
    let cue_rank = prefs.cue_ranks();
    let k_gr = prefs.num_groups();

    for k in 0..k_gr {
        let held = assignment.channels_of(k);
        let worst_held = held.iter().map(|&m| d2md_rank[k][m]).max();
        for &m in &prefs.d2md_pl[k] {
            if assignment.assigned(k, m) {
                continue;
            }
            let group_wants = held.len() < split
                || worst_held.is_some_and(|w| d2md_rank[k][m] < w);
            if !group_wants {
                continue;
            }
            let holders = assignment.groups_on(m);
            let channel_wants = holders.len() < reuse
                || holders.iter().any(|&h| cue_rank[m][k] < cue_rank[m][h]);
            if channel_wants {
                return Some((k, m));
            }
        }
    }
    None
}

/// True when the assignment admits no blocking pair under the given lists
/// and capacities.
pub fn is_stable(
    assignment: &Assignment,
    prefs: &PreferenceLists,
    reuse: usize,
    split: usize,
) -> bool {
    find_blocking_pair(assignment, prefs, reuse, split).is_none()
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Preference tables of the worked one-to-one example (four groups, four
    /// channels).
    fn table_iii() -> PreferenceLists {
        PreferenceLists {
            d2md_pl: vec![
                vec![3, 0, 2, 1],
                vec![3, 0, 1, 2],
                vec![3, 1, 0, 2],
                vec![3, 1, 0, 2],
            ],
            cue_pl: vec![
                vec![2, 3, 1, 0],
                vec![3, 2, 0, 1],
                vec![3, 2, 0, 1],
                vec![2, 3, 1, 0],
            ],
        }
    }

    /// Preference tables of the worked many-to-one example (four groups, two
    /// channels).
    fn table_iv() -> PreferenceLists {
        PreferenceLists {
            d2md_pl: vec![vec![1, 0], vec![1, 0], vec![0, 1], vec![0, 1]],
            cue_pl: vec![vec![2, 0, 1, 3], vec![3, 2, 0, 1]],
        }
    }

    fn pairs(a: &Assignment) -> Vec<(usize, usize)> {
        a.assigned_pairs()
    }

    #[test]
    fn one_to_one_reproduces_worked_example() {
        let prefs = table_iii();
        assert!(prefs.validate());
        let a = match_one_to_one(&prefs);
        assert_eq!(pairs(&a), vec![(0, 2), (1, 0), (2, 3), (3, 1)]);
        assert!(is_stable(&a, &prefs, 1, 1));
    }

    #[test]
    fn one_to_one_single_pair() {
        let prefs = PreferenceLists {
            d2md_pl: vec![vec![0]],
            cue_pl: vec![vec![0]],
        };
        let a = match_one_to_one(&prefs);
        assert_eq!(pairs(&a), vec![(0, 0)]);
    }

    #[test]
    fn one_to_one_leaves_groups_unmatched_when_k_exceeds_m() {
        let prefs = PreferenceLists {
            d2md_pl: vec![vec![0], vec![0], vec![0]],
            cue_pl: vec![vec![1, 0, 2]],
        };
        let a = match_one_to_one(&prefs);
        assert_eq!(pairs(&a), vec![(1, 0)]);
        assert!(is_stable(&a, &prefs, 1, 1));
    }

    #[test]
    fn many_to_one_round_one_matches_worked_example() {
        let prefs = table_iv();
        let out = match_many_to_one_profile(&prefs, 2);
        assert_eq!(pairs(&out.rounds[0]), vec![(2, 0), (3, 1)]);
        // final outcome fills both channels to capacity
        assert_eq!(out.assignment.col_sum(0), 2);
        assert_eq!(out.assignment.col_sum(1), 2);
        assert!((0..4).all(|k| out.assignment.row_sum(k) == 1));
        assert!(is_stable(&out.assignment, &prefs, 2, 1));
    }

    #[test]
    fn many_to_one_with_unit_reuse_equals_one_to_one() {
        let prefs = table_iii();
        let out = match_many_to_one_profile(&prefs, 1);
        assert_eq!(out.assignment, match_one_to_one(&prefs));
    }

    #[test]
    fn many_to_many_round_one_matches_worked_example() {
        let prefs = table_iii();
        let out = match_many_to_many_profile(&prefs, 2, 2);
        // end of round one: group 0 on channel 2, group 2 on channel 3,
        // group 3 on channels 0 and 1
        assert_eq!(pairs(&out.rounds[0]), vec![(0, 2), (2, 3), (3, 0), (3, 1)]);
        assert!(out.assignment.capacity_ok(2, 2));
        assert!(is_stable(&out.assignment, &prefs, 2, 2));
    }

    #[test]
    fn many_to_many_with_unit_split_equals_many_to_one() {
        let prefs = table_iv();
        let a = match_many_to_many_profile(&prefs, 1, 2).assignment;
        let b = match_many_to_one_profile(&prefs, 2).assignment;
        assert_eq!(a, b);
    }

    #[test]
    fn blocking_pair_found_after_swapping_channels() {
        let prefs = table_iii();
        let mut a = match_one_to_one(&prefs);
        // swap the channels of groups 0 and 2: (0,2),(2,3) -> (0,3),(2,2)
        a.set(0, 2, false);
        a.set(2, 3, false);
        a.set(0, 3, true);
        a.set(2, 2, true);
        let witness = find_blocking_pair(&a, &prefs, 1, 1);
        assert!(witness.is_some());
    }

    #[test]
    fn empty_assignment_with_spare_capacity_is_unstable() {
        let prefs = table_iii();
        let a = Assignment::empty(4, 4);
        assert!(!is_stable(&a, &prefs, 1, 1));
    }

    #[test]
    fn tie_breaks_produce_index_order() {
        use crate::scenario::{Group, Point};
        // all-equal interference: both lists must come out in index order
        let scenario = crate::scenario::Scenario::<f64> {
            cell_radius: 100.0,
            groups: (0..2)
                .map(|_| Group {
                    head: Point::new(0.0, 0.0),
                    receivers: vec![Point::new(0.0, 0.0)],
                })
                .collect(),
            cue_positions: vec![Point::new(0.0, 0.0); 2],
            noise_power: 1.0,
            circuit_power_cue: vec![0.0; 2],
            circuit_power_group: vec![0.0; 2],
            max_power_cue: vec![1.0; 2],
            max_power_group: vec![1.0; 2],
            min_rate_cue: vec![0.0; 2],
            min_rate_group: vec![0.0; 2],
            min_rate_per_channel: vec![vec![0.0; 2]; 2],
            split_factor: 1,
            reuse_factor: 1,
            weight_cue: vec![1.0; 2],
            weight_group: vec![1.0; 2],
        };
        let ones = |v: f64| {
            crate::scenario::GainTable::from_parts(
                vec![v; 2],
                vec![vec![v; 2]; 2],
                vec![vec![vec![vec![v; 2]]; 2]; 2],
                vec![vec![vec![v; 2]]; 2],
            )
            .unwrap()
        };
        let gains = ones(1.0);
        let powers = PowerAllocation::uniform_probe(&scenario);
        let prefs = build_preferences(&Assignment::empty(2, 2), &powers, &gains, &scenario);
        assert_eq!(prefs.d2md_pl, vec![vec![0, 1], vec![0, 1]]);
        assert_eq!(prefs.cue_pl, vec![vec![0, 1], vec![0, 1]]);
    }

    #[test]
    fn random_profiles_yield_stable_outputs() {
        use rand::seq::SliceRandom;
        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(99);
        for trial in 0..200 {
            let k = 2 + (trial % 5);
            let m = 2 + (trial % 4);
            let mut d2md_pl = Vec::new();
            for _ in 0..k {
                let mut l: Vec<usize> = (0..m).collect();
                l.shuffle(&mut rng);
                d2md_pl.push(l);
            }
            let mut cue_pl = Vec::new();
            for _ in 0..m {
                let mut l: Vec<usize> = (0..k).collect();
                l.shuffle(&mut rng);
                cue_pl.push(l);
            }
            let prefs = PreferenceLists { d2md_pl, cue_pl };
            let a = match_one_to_one(&prefs);
            assert!(is_stable(&a, &prefs, 1, 1), "trial {trial}: {a:?}");
            let out = match_many_to_one_profile(&prefs, 2);
            assert!(is_stable(&out.assignment, &prefs, 2, 1), "trial {trial}");
            let out = match_many_to_many_profile(&prefs, 2, 2);
            assert!(is_stable(&out.assignment, &prefs, 2, 2), "trial {trial}");
            assert!(out.assignment.capacity_ok(2, 2));
        }
    }
}
