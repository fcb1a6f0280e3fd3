//! Problem-instance generation: node placement, clustering and channel gains.
//!
//! A [`Scenario`] bundles the geometry of one cell (group heads, receivers,
//! cellular users), the radio budgets and the rate targets. Instances can be
//! drawn at random (Poisson point process plus KNN or distance-limited
//! clustering) or loaded from a JSON document in which powers are expressed
//! in dBm.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp, Poisson};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::num::{dbm_to_watt, real, watt_to_dbm, Real};

/// Minimum transmitter-receiver distance in meters used when evaluating the
/// path loss, so that near-coincident nodes cannot produce gains above the
/// fade value.
pub const MIN_PATH_DISTANCE_M: f64 = 1.0;

/// Retry budget for clustering before giving up on a point set.
pub const CLUSTER_RETRY_LIMIT: usize = 100;

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("not enough points to form {wanted} groups (retry limit {retries} exhausted)")]
    InsufficientPoints { wanted: usize, retries: usize },
    #[error("scenario invariant violated: {0}")]
    Invalid(String),
    #[error("failed to read scenario from {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("failed to parse scenario document: {0}")]
    Parse(#[from] serde_json::Error),
}

/// A 2-D position in meters, relative to the base station at the origin.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Point<T> {
    pub x: T,
    pub y: T,
}

impl<T: Real> Point<T> {
    pub fn new(x: T, y: T) -> Self {
        Self { x, y }
    }

    pub fn distance(&self, other: &Self) -> T {
        let dx = self.x - other.x;
        let dy = self.y - other.y;
        (dx * dx + dy * dy).sqrt()
    }

    /// Distance to the base station at the origin.
    pub fn norm(&self) -> T {
        (self.x * self.x + self.y * self.y).sqrt()
    }
}

/// One multicast group: a designated transmitter plus its receivers.
#[derive(Debug, Clone, PartialEq)]
pub struct Group<T> {
    pub head: Point<T>,
    pub receivers: Vec<Point<T>>,
}

impl<T: Real> Group<T> {
    /// Number of receivers in the group.
    pub fn receiver_count(&self) -> usize {
        self.receivers.len()
    }
}

/// A full problem instance. Powers are stored in watt and rates in bit/s/Hz.
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario<T> {
    pub cell_radius: T,
    pub groups: Vec<Group<T>>,
    pub cue_positions: Vec<Point<T>>,
    pub noise_power: T,
    pub circuit_power_cue: Vec<T>,
    pub circuit_power_group: Vec<T>,
    pub max_power_cue: Vec<T>,
    pub max_power_group: Vec<T>,
    pub min_rate_cue: Vec<T>,
    pub min_rate_group: Vec<T>,
    /// Per-channel rate floor for every (group, channel) pair; only active
    /// when the split factor is above one.
    pub min_rate_per_channel: Vec<Vec<T>>,
    pub split_factor: usize,
    pub reuse_factor: usize,
    pub weight_cue: Vec<T>,
    pub weight_group: Vec<T>,
}

impl<T: Real> Scenario<T> {
    /// Number of D2MD groups (`K`).
    pub fn num_groups(&self) -> usize {
        self.groups.len()
    }

    /// Number of cellular users and orthogonal channels (`M`).
    pub fn num_channels(&self) -> usize {
        self.cue_positions.len()
    }

    /// Receiver count of group `k`.
    pub fn receivers_of(&self, k: usize) -> usize {
        self.groups[k].receiver_count()
    }

    /// Checks the structural invariants of the instance.
    pub fn validate(&self) -> Result<(), ScenarioError> {
        let k = self.num_groups();
        let m = self.num_channels();
        if k == 0 || m == 0 {
            return Err(ScenarioError::Invalid("need K >= 1 and M >= 1".into()));
        }
        if self.split_factor == 0 || self.reuse_factor == 0 {
            return Err(ScenarioError::Invalid("need s >= 1 and r >= 1".into()));
        }
        for (idx, g) in self.groups.iter().enumerate() {
            if g.receivers.is_empty() {
                return Err(ScenarioError::Invalid(format!(
                    "group {idx} has no receivers"
                )));
            }
            let radius_slack = self.cell_radius * real(1.0 + 1e-9);
            if g.head.norm() > radius_slack
                || g.receivers.iter().any(|p| p.norm() > radius_slack)
            {
                return Err(ScenarioError::Invalid(format!(
                    "group {idx} has a member outside the cell"
                )));
            }
        }
        let zero = T::zero();
        let lens_ok = self.circuit_power_cue.len() == m
            && self.max_power_cue.len() == m
            && self.min_rate_cue.len() == m
            && self.weight_cue.len() == m
            && self.circuit_power_group.len() == k
            && self.max_power_group.len() == k
            && self.min_rate_group.len() == k
            && self.weight_group.len() == k
            && self.min_rate_per_channel.len() == k
            && self.min_rate_per_channel.iter().all(|row| row.len() == m);
        if !lens_ok {
            return Err(ScenarioError::Invalid(
                "parameter vector lengths inconsistent with K and M".into(),
            ));
        }
        let nonneg = self
            .circuit_power_cue
            .iter()
            .chain(&self.circuit_power_group)
            .chain(&self.max_power_cue)
            .chain(&self.max_power_group)
            .chain(&self.min_rate_cue)
            .chain(&self.min_rate_group)
            .chain(self.min_rate_per_channel.iter().flatten())
            .all(|v| *v >= zero)
            && self.noise_power >= zero;
        if !nonneg {
            return Err(ScenarioError::Invalid(
                "powers and rates must be nonnegative".into(),
            ));
        }
        if self
            .weight_cue
            .iter()
            .chain(&self.weight_group)
            .any(|w| *w <= zero)
        {
            return Err(ScenarioError::Invalid("weights must be positive".into()));
        }
        Ok(())
    }
}

/// All link gains of one fading realization, in linear scale.
///
/// `d2d[tx][rx_group][rcv][m]` holds the gain from the transmitter of group
/// `tx` to receiver `rcv` of group `rx_group` on channel `m`; the diagonal
/// `tx == rx_group` is the intended link, the rest are cross-group
/// interference paths.
#[derive(Debug, Clone, PartialEq)]
pub struct GainTable<T> {
    pub(crate) cue_bs: Vec<T>,
    pub(crate) grp_bs: Vec<Vec<T>>,
    pub(crate) d2d: Vec<Vec<Vec<Vec<T>>>>,
    pub(crate) cue_rcv: Vec<Vec<Vec<T>>>,
}

impl<T: Real> GainTable<T> {
    /// Assembles a gain table from explicit per-link entries, checking that
    /// the dimensions are mutually consistent. Intended for hand-built
    /// instances; randomly generated tables come from [`compute_gains`].
    pub fn from_parts(
        cue_bs: Vec<T>,
        grp_bs: Vec<Vec<T>>,
        d2d: Vec<Vec<Vec<Vec<T>>>>,
        cue_rcv: Vec<Vec<Vec<T>>>,
    ) -> Result<Self, ScenarioError> {
        let m = cue_bs.len();
        let k = grp_bs.len();
        let dims_ok = grp_bs.iter().all(|row| row.len() == m)
            && d2d.len() == k
            && d2d.iter().all(|per_tx| {
                per_tx.len() == k
                    && per_tx.iter().enumerate().all(|(rx, rcvs)| {
                        rcvs.len() == cue_rcv[rx].len()
                            && rcvs.iter().all(|ch| ch.len() == m)
                    })
            })
            && cue_rcv.len() == k
            && cue_rcv
                .iter()
                .all(|rcvs| rcvs.iter().all(|ch| ch.len() == m));
        if !dims_ok {
            return Err(ScenarioError::Invalid(
                "gain table dimensions are inconsistent".into(),
            ));
        }
        Ok(Self {
            cue_bs,
            grp_bs,
            d2d,
            cue_rcv,
        })
    }
    /// Gain of CUE `m` towards the base station on its own channel.
    pub fn cue_to_bs(&self, m: usize) -> T {
        self.cue_bs[m]
    }

    /// Gain of the group-`k` transmitter towards the base station on channel `m`.
    pub fn group_to_bs(&self, k: usize, m: usize) -> T {
        self.grp_bs[k][m]
    }

    /// Gain from the transmitter of group `tx` to receiver `rcv` of group
    /// `rx_group` on channel `m`.
    pub fn group_to_receiver(&self, tx: usize, rx_group: usize, rcv: usize, m: usize) -> T {
        self.d2d[tx][rx_group][rcv][m]
    }

    /// Gain from CUE `m` to receiver `rcv` of group `k`.
    pub fn cue_to_receiver(&self, k: usize, rcv: usize, m: usize) -> T {
        self.cue_rcv[k][rcv][m]
    }

    pub fn num_channels(&self) -> usize {
        self.cue_bs.len()
    }

    pub fn num_groups(&self) -> usize {
        self.grp_bs.len()
    }

    /// All entries must be finite and nonnegative; zero or NaN indicates a bug
    /// upstream.
    pub fn validate(&self) -> bool {
        let ok = |v: &T| v.is_finite() && *v >= T::zero();
        self.cue_bs.iter().all(ok)
            && self.grp_bs.iter().flatten().all(ok)
            && self
                .d2d
                .iter()
                .flatten()
                .flatten()
                .flatten()
                .all(ok)
            && self.cue_rcv.iter().flatten().flatten().all(ok)
    }
}

/// Mixes a base seed with a stream salt so that the generation stages
/// (placement, clustering, fading) consume independent, reproducible streams.
pub fn mix_seed(seed: u64, salt: u64) -> u64 {
    // splitmix64 finalizer
    let mut z = seed ^ salt.wrapping_mul(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Draws a homogeneous Poisson point process on a disc of the given radius.
///
/// The point count follows Poisson(density * pi * radius^2) and the points
/// are uniform on the disc. A zero mean yields an empty set.
pub fn generate_ppp<T: Real>(density: f64, radius: f64, seed: u64) -> Vec<Point<T>> {
    let mean = density * std::f64::consts::PI * radius * radius;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let count = if mean > 0.0 {
        Poisson::new(mean)
            .expect("positive Poisson mean")
            .sample(&mut rng) as usize
    } else {
        0
    };
    (0..count)
        .map(|_| {
            let u: f64 = rng.gen();
            let v: f64 = rng.gen();
            let r = radius * u.sqrt();
            let theta = 2.0 * std::f64::consts::PI * v;
            Point::new(real(r * theta.cos()), real(r * theta.sin()))
        })
        .collect()
}

fn choose_heads<T: Real>(
    points: &[Point<T>],
    k: usize,
    rng: &mut ChaCha8Rng,
) -> Vec<usize> {
    // partial Fisher-Yates over the index set
    let mut idx: Vec<usize> = (0..points.len()).collect();
    for i in 0..k {
        let j = rng.gen_range(i..idx.len());
        idx.swap(i, j);
    }
    idx.truncate(k);
    idx
}

/// Index of the nearest head for `p`; ties resolved towards the lower head
/// index.
fn nearest_head<T: Real>(p: &Point<T>, heads: &[Point<T>]) -> (usize, T) {
    let mut best = 0usize;
    let mut best_d = p.distance(&heads[0]);
    for (h, head) in heads.iter().enumerate().skip(1) {
        let d = p.distance(head);
        if d < best_d {
            best_d = d;
            best = h;
        }
    }
    (best, best_d)
}

/// KNN clustering: `k` heads drawn uniformly from the point set, every other
/// point attached to its nearest head. A draw is accepted only when all `k`
/// groups reach `group_size` members (head included); each group is then
/// trimmed to its `group_size - 1` nearest receivers. Head selection is
/// redrawn up to [`CLUSTER_RETRY_LIMIT`] times.
pub fn cluster_knn<T: Real>(
    points: &[Point<T>],
    k: usize,
    group_size: usize,
    seed: u64,
) -> Result<Vec<Group<T>>, ScenarioError> {
    if k == 0 {
        return Ok(Vec::new());
    }
    let receivers_needed = group_size.saturating_sub(1).max(1);
    if points.len() < k * (receivers_needed + 1) {
        return Err(ScenarioError::InsufficientPoints {
            wanted: k,
            retries: 0,
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for attempt in 0..CLUSTER_RETRY_LIMIT {
        let head_idx = choose_heads(points, k, &mut rng);
        let heads: Vec<Point<T>> = head_idx.iter().map(|&i| points[i]).collect();
        // members[h] collects (distance, point index) of points whose nearest
        // head is h
        let mut members: Vec<Vec<(T, usize)>> = vec![Vec::new(); k];
        for (i, p) in points.iter().enumerate() {
            if head_idx.contains(&i) {
                continue;
            }
            let (h, d) = nearest_head(p, &heads);
            members[h].push((d, i));
        }
        if members.iter().all(|m| m.len() >= receivers_needed) {
            let groups = heads
                .into_iter()
                .zip(members)
                .map(|(head, mut m)| {
                    m.sort_by(|a, b| {
                        a.0.partial_cmp(&b.0)
                            .unwrap_or(std::cmp::Ordering::Equal)
                            .then(a.1.cmp(&b.1))
                    });
                    m.truncate(receivers_needed);
                    Group {
                        head,
                        receivers: m.into_iter().map(|(_, i)| points[i]).collect(),
                    }
                })
                .collect();
            return Ok(groups);
        }
        let _ = attempt;
    }
    Err(ScenarioError::InsufficientPoints {
        wanted: k,
        retries: CLUSTER_RETRY_LIMIT,
    })
}

/// Distance-limited clustering: `k` heads drawn at random, every point within
/// `d_max_fraction * cell_radius` of a head becomes a receiver of the nearest
/// such head. Heads of empty groups are dropped and replacement heads drawn
/// until every group has at least one receiver, up to the retry limit. Groups
/// may end up heterogeneous in size; unicast groups are allowed.
pub fn cluster_dl<T: Real>(
    points: &[Point<T>],
    k: usize,
    d_max_fraction: f64,
    cell_radius: f64,
    seed: u64,
) -> Result<Vec<Group<T>>, ScenarioError> {
    assert!(
        d_max_fraction > 0.0 && d_max_fraction <= 1.0,
        "d_max_fraction must lie in (0, 1]"
    );
    if k == 0 {
        return Ok(Vec::new());
    }
    if points.len() < 2 * k {
        return Err(ScenarioError::InsufficientPoints {
            wanted: k,
            retries: 0,
        });
    }
    let d_max: T = real(d_max_fraction * cell_radius);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut head_idx = choose_heads(points, k, &mut rng);
    for _ in 0..CLUSTER_RETRY_LIMIT {
        let heads: Vec<Point<T>> = head_idx.iter().map(|&i| points[i]).collect();
        let mut members: Vec<Vec<usize>> = vec![Vec::new(); k];
        for (i, p) in points.iter().enumerate() {
            if head_idx.contains(&i) {
                continue;
            }
            let (h, d) = nearest_head(p, &heads);
            if d <= d_max {
                members[h].push(i);
            }
        }
        if members.iter().all(|m| !m.is_empty()) {
            let groups = heads
                .into_iter()
                .zip(members)
                .map(|(head, m)| Group {
                    head,
                    receivers: m.into_iter().map(|i| points[i]).collect(),
                })
                .collect();
            return Ok(groups);
        }
        // Keep the heads that gathered receivers, redraw the rest from the
        // unused points.
        let keep: Vec<usize> = head_idx
            .iter()
            .zip(&members)
            .filter(|(_, m)| !m.is_empty())
            .map(|(&i, _)| i)
            .collect();
        let used: std::collections::BTreeSet<usize> = keep.iter().copied().collect();
        let pool: Vec<usize> = (0..points.len()).filter(|i| !used.contains(i)).collect();
        if pool.len() < k - keep.len() {
            break;
        }
        let mut fresh = keep;
        let mut pool = pool;
        while fresh.len() < k {
            let j = rng.gen_range(0..pool.len());
            fresh.push(pool.swap_remove(j));
        }
        head_idx = fresh;
    }
    Err(ScenarioError::InsufficientPoints {
        wanted: k,
        retries: CLUSTER_RETRY_LIMIT,
    })
}

fn fade<T: Real>(exp: &Exp<f64>, rng: &mut ChaCha8Rng) -> T {
    real(exp.sample(rng))
}

fn path_gain<T: Real>(a: &Point<T>, b: &Point<T>, alpha: f64, f: T) -> T {
    let d = a.distance(b).to_f64().unwrap().max(MIN_PATH_DISTANCE_M);
    f * real(d.powf(-alpha))
}

/// Draws one fading realization for every link of the scenario.
///
/// Each gain is `F * d^(-alpha)` with `F` a unit-mean exponential fade drawn
/// independently per link and channel, and `d` the distance clamped below by
/// [`MIN_PATH_DISTANCE_M`]. Deterministic for a fixed seed.
pub fn compute_gains<T: Real>(
    scenario: &Scenario<T>,
    path_loss_exponent: f64,
    seed: u64,
) -> GainTable<T> {
    let k = scenario.num_groups();
    let m = scenario.num_channels();
    let bs = Point::new(T::zero(), T::zero());
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let exp = Exp::new(1.0).expect("unit-rate exponential");

    let cue_bs: Vec<T> = (0..m)
        .map(|i| path_gain(&scenario.cue_positions[i], &bs, path_loss_exponent, fade(&exp, &mut rng)))
        .collect();

    let grp_bs: Vec<Vec<T>> = (0..k)
        .map(|g| {
            (0..m)
                .map(|_| path_gain(&scenario.groups[g].head, &bs, path_loss_exponent, fade(&exp, &mut rng)))
                .collect()
        })
        .collect();

    let d2d: Vec<Vec<Vec<Vec<T>>>> = (0..k)
        .map(|tx| {
            (0..k)
                .map(|rx| {
                    scenario.groups[rx]
                        .receivers
                        .iter()
                        .map(|rcv| {
                            (0..m)
                                .map(|_| {
                                    path_gain(
                                        &scenario.groups[tx].head,
                                        rcv,
                                        path_loss_exponent,
                                        fade(&exp, &mut rng),
                                    )
                                })
                                .collect()
                        })
                        .collect()
                })
                .collect()
        })
        .collect();

    let cue_rcv: Vec<Vec<Vec<T>>> = (0..k)
        .map(|g| {
            scenario.groups[g]
                .receivers
                .iter()
                .map(|rcv| {
                    (0..m)
                        .map(|ch| {
                            path_gain(
                                &scenario.cue_positions[ch],
                                rcv,
                                path_loss_exponent,
                                fade(&exp, &mut rng),
                            )
                        })
                        .collect()
                })
                .collect()
        })
        .collect();

    GainTable {
        cue_bs,
        grp_bs,
        d2d,
        cue_rcv,
    }
}

// ---------------------------------------------------------------------------
// On-disk representation: JSON with powers in dBm, lengths in meters.
// ---------------------------------------------------------------------------

#[derive(Debug, Serialize, Deserialize)]
struct GroupFile {
    head: [f64; 2],
    receivers: Vec<[f64; 2]>,
}

#[derive(Debug, Serialize, Deserialize)]
struct ScenarioFile {
    cell_radius_m: f64,
    groups: Vec<GroupFile>,
    cue_positions: Vec<[f64; 2]>,
    noise_power_dbm: f64,
    circuit_power_cue_dbm: Vec<f64>,
    circuit_power_group_dbm: Vec<f64>,
    max_power_cue_dbm: Vec<f64>,
    max_power_group_dbm: Vec<f64>,
    min_rate_cue: Vec<f64>,
    min_rate_group: Vec<f64>,
    min_rate_per_channel: Vec<Vec<f64>>,
    split_factor: usize,
    reuse_factor: usize,
    weight_cue: Vec<f64>,
    weight_group: Vec<f64>,
}

impl<T: Real> Scenario<T> {
    /// Serializes the scenario to the JSON document format (powers in dBm).
    pub fn to_json(&self) -> Result<String, ScenarioError> {
        let f = |v: &T| watt_to_dbm(v.to_f64().unwrap());
        let file = ScenarioFile {
            cell_radius_m: self.cell_radius.to_f64().unwrap(),
            groups: self
                .groups
                .iter()
                .map(|g| GroupFile {
                    head: [g.head.x.to_f64().unwrap(), g.head.y.to_f64().unwrap()],
                    receivers: g
                        .receivers
                        .iter()
                        .map(|p| [p.x.to_f64().unwrap(), p.y.to_f64().unwrap()])
                        .collect(),
                })
                .collect(),
            cue_positions: self
                .cue_positions
                .iter()
                .map(|p| [p.x.to_f64().unwrap(), p.y.to_f64().unwrap()])
                .collect(),
            noise_power_dbm: f(&self.noise_power),
            circuit_power_cue_dbm: self.circuit_power_cue.iter().map(&f).collect(),
            circuit_power_group_dbm: self.circuit_power_group.iter().map(&f).collect(),
            max_power_cue_dbm: self.max_power_cue.iter().map(&f).collect(),
            max_power_group_dbm: self.max_power_group.iter().map(&f).collect(),
            min_rate_cue: self.min_rate_cue.iter().map(|v| v.to_f64().unwrap()).collect(),
            min_rate_group: self
                .min_rate_group
                .iter()
                .map(|v| v.to_f64().unwrap())
                .collect(),
            min_rate_per_channel: self
                .min_rate_per_channel
                .iter()
                .map(|row| row.iter().map(|v| v.to_f64().unwrap()).collect())
                .collect(),
            split_factor: self.split_factor,
            reuse_factor: self.reuse_factor,
            weight_cue: self.weight_cue.iter().map(|v| v.to_f64().unwrap()).collect(),
            weight_group: self
                .weight_group
                .iter()
                .map(|v| v.to_f64().unwrap())
                .collect(),
        };
        Ok(serde_json::to_string_pretty(&file)?)
    }

    /// Parses a scenario from the JSON document format and validates it.
    pub fn from_json(text: &str) -> Result<Self, ScenarioError> {
        let file: ScenarioFile = serde_json::from_str(text)?;
        let pt = |xy: &[f64; 2]| Point::new(real(xy[0]), real(xy[1]));
        let w = |dbm: &f64| real::<T>(dbm_to_watt(*dbm));
        let scenario = Scenario {
            cell_radius: real(file.cell_radius_m),
            groups: file
                .groups
                .iter()
                .map(|g| Group {
                    head: pt(&g.head),
                    receivers: g.receivers.iter().map(pt).collect(),
                })
                .collect(),
            cue_positions: file.cue_positions.iter().map(pt).collect(),
            noise_power: w(&file.noise_power_dbm),
            circuit_power_cue: file.circuit_power_cue_dbm.iter().map(w).collect(),
            circuit_power_group: file.circuit_power_group_dbm.iter().map(w).collect(),
            max_power_cue: file.max_power_cue_dbm.iter().map(w).collect(),
            max_power_group: file.max_power_group_dbm.iter().map(w).collect(),
            min_rate_cue: file.min_rate_cue.iter().map(|v| real(*v)).collect(),
            min_rate_group: file.min_rate_group.iter().map(|v| real(*v)).collect(),
            min_rate_per_channel: file
                .min_rate_per_channel
                .iter()
                .map(|row| row.iter().map(|v| real(*v)).collect())
                .collect(),
            split_factor: file.split_factor,
            reuse_factor: file.reuse_factor,
            weight_cue: file.weight_cue.iter().map(|v| real(*v)).collect(),
            weight_group: file.weight_group.iter().map(|v| real(*v)).collect(),
        };
        scenario.validate()?;
        Ok(scenario)
    }

    /// Loads a scenario document from a file path.
    pub fn load(path: &std::path::Path) -> Result<Self, ScenarioError> {
        let text = std::fs::read_to_string(path).map_err(|source| ScenarioError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_json(&text)
    }

    /// Saves the scenario document to a file path.
    pub fn save(&self, path: &std::path::Path) -> Result<(), ScenarioError> {
        let text = self.to_json()?;
        std::fs::write(path, text).map_err(|source| ScenarioError::Io {
            path: path.display().to_string(),
            source,
        })
    }
}
