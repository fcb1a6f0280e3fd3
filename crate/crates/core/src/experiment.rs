//! Batch experiment runner: seeded Monte-Carlo replications across parameter
//! sweeps, aggregated into CSV result tables.
//!
//! A configuration describes one scenario template in which a handful of
//! fields (power budget, K, M, reuse, split, minimum rates) may carry sweep
//! lists. Every sweep point draws fresh random instances until the requested
//! number of feasible replications is collected (or an attempt cap of ten
//! times that count is hit), and reports means over the feasible ones.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::PowerAllocation;
use crate::num::dbm_to_watt;
use crate::optimizer::{self, Regime};
use crate::power::{Objective, SolverConfig};
use crate::scenario::{
    cluster_dl, cluster_knn, compute_gains, generate_ppp, mix_seed, GainTable, Point, Scenario,
    ScenarioError,
};

/// Attempts allowed per requested feasible replication.
pub const ATTEMPT_FACTOR: usize = 10;

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error("invalid config: {0}")]
    Config(String),
    #[error("cannot emit a CSV without rows")]
    EmptyRows,
    #[error("failed accessing {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("failed to parse config: {0}")]
    Parse(#[from] serde_json::Error),
    #[error(transparent)]
    Power(#[from] crate::power::PowerError),
}

/// How receivers are grouped around randomly chosen heads.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ClusteringConfig {
    /// Fixed-size groups of nearest neighbours (`group_size` counts the head).
    Knn { group_size: usize },
    /// Distance-limited groups: receivers within `d_max_fraction * cell_radius`
    /// of a head; sizes are heterogeneous.
    Dl { d_max_fraction: f64 },
}

/// Optional overrides of the solver tolerances.
#[derive(Debug, Clone, Default, Serialize, Deserialize, PartialEq)]
#[serde(default)]
pub struct SolverSettings {
    pub dinkelbach_eps: Option<f64>,
    pub sca_max_iter: Option<usize>,
    pub sca_rel_tol: Option<f64>,
    pub inner_max_iter: Option<usize>,
    pub inner_grad_tol: Option<f64>,
}

impl SolverSettings {
    pub fn apply(&self, config: &mut SolverConfig<f64>) {
        if let Some(v) = self.dinkelbach_eps {
            config.dinkelbach_eps = v;
        }
        if let Some(v) = self.sca_max_iter {
            config.sca_max_iter = v;
        }
        if let Some(v) = self.sca_rel_tol {
            config.sca_rel_tol = v;
        }
        if let Some(v) = self.inner_max_iter {
            config.inner_max_iter = v;
        }
        if let Some(v) = self.inner_grad_tol {
            config.inner_grad_tol = v;
        }
    }
}

fn default_name() -> String {
    "experiment".to_string()
}
fn default_path_loss() -> f64 {
    2.5
}
fn default_noise_dbm() -> f64 {
    -100.0
}
fn default_circuit_dbm() -> f64 {
    10.0
}
fn default_usize_one() -> Vec<usize> {
    vec![1]
}

/// One batch experiment: a scenario template with sweep lists, plus run
/// controls. Powers are given in dBm, rates in bit/s/Hz.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct ExperimentConfig {
    #[serde(default = "default_name")]
    pub name: String,
    pub cell_radius_m: f64,
    pub density_per_m2: f64,
    #[serde(default = "default_path_loss")]
    pub path_loss_exponent: f64,
    #[serde(default = "default_noise_dbm")]
    pub noise_power_dbm: f64,
    #[serde(default = "default_circuit_dbm")]
    pub circuit_power_dbm: f64,
    pub num_channels: Vec<usize>,
    pub num_groups: Vec<usize>,
    #[serde(default = "default_usize_one")]
    pub reuse_factor: Vec<usize>,
    #[serde(default = "default_usize_one")]
    pub split_factor: Vec<usize>,
    pub max_power_dbm: Vec<f64>,
    pub min_rate_cue: Vec<f64>,
    pub min_rate_group: Vec<f64>,
    #[serde(default)]
    pub min_rate_per_channel: f64,
    pub clustering: ClusteringConfig,
    pub objective: Objective,
    pub regime: Regime,
    pub replications: usize,
    pub base_seed: u64,
    #[serde(default)]
    pub solver: SolverSettings,
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<(), ExperimentError> {
        let lists_ok = !self.num_channels.is_empty()
            && !self.num_groups.is_empty()
            && !self.reuse_factor.is_empty()
            && !self.split_factor.is_empty()
            && !self.max_power_dbm.is_empty()
            && !self.min_rate_cue.is_empty()
            && !self.min_rate_group.is_empty();
        if !lists_ok {
            return Err(ExperimentError::Config("sweep lists must be nonempty".into()));
        }
        if self.replications == 0 {
            return Err(ExperimentError::Config("replications must be >= 1".into()));
        }
        if self.cell_radius_m <= 0.0 || self.density_per_m2 <= 0.0 {
            return Err(ExperimentError::Config(
                "cell radius and density must be positive".into(),
            ));
        }
        Ok(())
    }

    pub fn from_json(text: &str) -> Result<Self, ExperimentError> {
        let config: Self = serde_json::from_str(text)?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: &std::path::Path) -> Result<Self, ExperimentError> {
        let text = std::fs::read_to_string(path).map_err(|source| ExperimentError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_json(&text)
    }

    pub fn solver_config(&self) -> SolverConfig<f64> {
        let mut config = SolverConfig::default();
        self.solver.apply(&mut config);
        config
    }
}

/// The coordinates of one sweep point, in the fixed CSV column order.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepPoint {
    pub max_power_dbm: f64,
    pub num_groups: usize,
    pub num_channels: usize,
    pub reuse_factor: usize,
    pub split_factor: usize,
    pub min_rate_cue: f64,
    pub min_rate_group: f64,
}

/// Cartesian product of all sweep lists, in deterministic order.
pub fn sweep_points(config: &ExperimentConfig) -> Vec<SweepPoint> {
    let mut out = Vec::new();
    for &max_power_dbm in &config.max_power_dbm {
        for &num_groups in &config.num_groups {
            for &num_channels in &config.num_channels {
                for &reuse_factor in &config.reuse_factor {
                    for &split_factor in &config.split_factor {
                        for &min_rate_cue in &config.min_rate_cue {
                            for &min_rate_group in &config.min_rate_group {
                                out.push(SweepPoint {
                                    max_power_dbm,
                                    num_groups,
                                    num_channels,
                                    reuse_factor,
                                    split_factor,
                                    min_rate_cue,
                                    min_rate_group,
                                });
                            }
                        }
                    }
                }
            }
        }
    }
    out
}

/// Draws one random instance for a sweep point: point process, clustering,
/// CUE selection (leftover points closest to the base station) and fading.
pub fn build_instance(
    config: &ExperimentConfig,
    point: &SweepPoint,
    seed: u64,
) -> Result<(Scenario<f64>, GainTable<f64>), ScenarioError> {
    let radius = config.cell_radius_m;
    let points: Vec<Point<f64>> = generate_ppp(config.density_per_m2, radius, mix_seed(seed, 1));
    let groups = match &config.clustering {
        ClusteringConfig::Knn { group_size } => {
            cluster_knn(&points, point.num_groups, *group_size, mix_seed(seed, 2))?
        }
        ClusteringConfig::Dl { d_max_fraction } => cluster_dl(
            &points,
            point.num_groups,
            *d_max_fraction,
            radius,
            mix_seed(seed, 2),
        )?,
    };

    // leftover points (not heads, not receivers) become CUE candidates,
    // closest to the base station first
    let mut member_coords: Vec<(u64, u64)> = Vec::new();
    for g in &groups {
        member_coords.push((g.head.x.to_bits(), g.head.y.to_bits()));
        for r in &g.receivers {
            member_coords.push((r.x.to_bits(), r.y.to_bits()));
        }
    }
    let mut leftovers: Vec<Point<f64>> = points
        .iter()
        .filter(|p| !member_coords.contains(&(p.x.to_bits(), p.y.to_bits())))
        .copied()
        .collect();
    leftovers.sort_by(|a, b| {
        a.norm()
            .partial_cmp(&b.norm())
            .unwrap_or(std::cmp::Ordering::Equal)
    });
    if leftovers.len() < point.num_channels {
        return Err(ScenarioError::InsufficientPoints {
            wanted: point.num_channels,
            retries: 0,
        });
    }
    leftovers.truncate(point.num_channels);

    let k = groups.len();
    let m = point.num_channels;
    let budget = dbm_to_watt(point.max_power_dbm);
    let circuit = dbm_to_watt(config.circuit_power_dbm);
    let scenario = Scenario {
        cell_radius: radius,
        groups,
        cue_positions: leftovers,
        noise_power: dbm_to_watt(config.noise_power_dbm),
        circuit_power_cue: vec![circuit; m],
        circuit_power_group: vec![circuit; k],
        max_power_cue: vec![budget; m],
        max_power_group: vec![budget; k],
        min_rate_cue: vec![point.min_rate_cue; m],
        min_rate_group: vec![point.min_rate_group; k],
        min_rate_per_channel: vec![vec![config.min_rate_per_channel; m]; k],
        split_factor: point.split_factor,
        reuse_factor: point.reuse_factor,
        weight_cue: vec![1.0; m],
        weight_group: vec![1.0; k],
    };
    scenario.validate()?;
    let gains = compute_gains(&scenario, config.path_loss_exponent, mix_seed(seed, 3));
    Ok((scenario, gains))
}

/// Aggregated outcome of one sweep point.
#[derive(Debug, Clone, PartialEq)]
pub struct ResultRow {
    pub max_power_dbm: f64,
    pub num_groups: usize,
    pub num_channels: usize,
    pub reuse_factor: usize,
    pub split_factor: usize,
    pub min_rate_cue: f64,
    pub min_rate_group: f64,
    pub mean_gee: f64,
    pub mean_wee: f64,
    pub mean_aggregate_rate: f64,
    pub mean_user_rate: f64,
    pub mean_total_power_w: f64,
    pub feasible_count: usize,
    pub infeasible_count: usize,
    pub mean_matcher_iterations: f64,
    pub mean_dinkelbach_rounds: f64,
    pub se_gee: f64,
    pub se_wee: f64,
}

#[derive(Default)]
struct Accumulator {
    gee: Vec<f64>,
    wee: Vec<f64>,
    aggregate_rate: Vec<f64>,
    user_rate: Vec<f64>,
    total_power: Vec<f64>,
    matcher_iterations: Vec<f64>,
    dinkelbach_rounds: Vec<f64>,
}

fn mean(values: &[f64]) -> f64 {
    if values.is_empty() {
        0.0
    } else {
        values.iter().sum::<f64>() / values.len() as f64
    }
}

fn standard_error(values: &[f64]) -> f64 {
    let n = values.len();
    if n < 2 {
        return 0.0;
    }
    let m = mean(values);
    let var = values.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / (n - 1) as f64;
    (var / n as f64).sqrt()
}

/// A callback invoked once per replication attempt, for progress and trace
/// output.
pub type ReplicationObserver<'a> = dyn FnMut(&SweepPoint, u64, Option<&optimizer::Solution<f64>>) + 'a;

/// Runs the full experiment: every sweep point accumulates the requested
/// number of feasible replications (attempt capped) and is reduced to one
/// [`ResultRow`]. Deterministic for a fixed config.
pub fn run_experiment(config: &ExperimentConfig) -> Result<Vec<ResultRow>, ExperimentError> {
    run_experiment_observed(config, &mut |_, _, _| {})
}

/// As [`run_experiment`], reporting every replication to the observer.
pub fn run_experiment_observed(
    config: &ExperimentConfig,
    observer: &mut ReplicationObserver,
) -> Result<Vec<ResultRow>, ExperimentError> {
    config.validate()?;
    let solver_config = config.solver_config();
    let mut rows = Vec::new();

    for point in sweep_points(config) {
        let mut acc = Accumulator::default();
        let mut attempts = 0usize;
        let cap = config.replications * ATTEMPT_FACTOR;
        while acc.gee.len() < config.replications && attempts < cap {
            let seed = config.base_seed + attempts as u64;
            attempts += 1;
            let Ok((scenario, gains)) = build_instance(config, &point, seed) else {
                observer(&point, seed, None);
                continue;
            };
            match optimizer::solve_joint(
                &scenario,
                &gains,
                config.objective,
                config.regime,
                &solver_config,
            ) {
                Ok(solution) if solution.feasible => {
                    acc.gee.push(solution.metrics.gee);
                    acc.wee.push(solution.metrics.wee);
                    let aggregate = solution.metrics.aggregate_rate();
                    acc.aggregate_rate.push(aggregate);
                    acc.user_rate
                        .push(aggregate / (scenario.num_channels() + scenario.num_groups()) as f64);
                    acc.total_power.push(total_power(&solution.powers));
                    acc.matcher_iterations.push(solution.matcher_iterations as f64);
                    acc.dinkelbach_rounds.push(solution.dinkelbach_rounds);
                    observer(&point, seed, Some(&solution));
                }
                _ => observer(&point, seed, None),
            }
        }
        rows.push(ResultRow {
            max_power_dbm: point.max_power_dbm,
            num_groups: point.num_groups,
            num_channels: point.num_channels,
            reuse_factor: point.reuse_factor,
            split_factor: point.split_factor,
            min_rate_cue: point.min_rate_cue,
            min_rate_group: point.min_rate_group,
            mean_gee: mean(&acc.gee),
            mean_wee: mean(&acc.wee),
            mean_aggregate_rate: mean(&acc.aggregate_rate),
            mean_user_rate: mean(&acc.user_rate),
            mean_total_power_w: mean(&acc.total_power),
            feasible_count: acc.gee.len(),
            infeasible_count: attempts - acc.gee.len(),
            mean_matcher_iterations: mean(&acc.matcher_iterations),
            mean_dinkelbach_rounds: mean(&acc.dinkelbach_rounds),
            se_gee: standard_error(&acc.gee),
            se_wee: standard_error(&acc.wee),
        });
    }
    Ok(rows)
}

fn total_power(powers: &PowerAllocation<f64>) -> f64 {
    powers.total_transmit()
}

/// Formats a float in fixed decimal notation with six significant digits.
pub fn format_sig6(x: f64) -> String {
    if !x.is_finite() {
        return format!("{x}");
    }
    if x == 0.0 {
        return "0.000000".to_string();
    }
    let exponent = x.abs().log10().floor() as i32;
    let decimals = (5 - exponent).clamp(0, 15) as usize;
    format!("{x:.decimals$}")
}

/// CSV header in the fixed ResultRow field order.
pub const CSV_HEADER: &str = "max_power_dbm,num_groups,num_channels,reuse_factor,split_factor,\
min_rate_cue,min_rate_group,mean_gee,mean_wee,mean_aggregate_rate,mean_user_rate,\
mean_total_power_w,feasible_count,infeasible_count,mean_matcher_iterations,\
mean_dinkelbach_rounds,se_gee,se_wee";

/// Renders the result rows as CSV text with unit comments.
pub fn render_csv(rows: &[ResultRow]) -> Result<String, ExperimentError> {
    if rows.is_empty() {
        return Err(ExperimentError::EmptyRows);
    }
    let mut text = String::new();
    text.push_str("# units: budgets dBm, rates bit/s/Hz, efficiencies bit/s/Hz/J, powers W\n");
    text.push_str("# means taken over feasible replications only\n");
    text.push_str(CSV_HEADER);
    text.push('\n');
    for r in rows {
        let fields = [
            format_sig6(r.max_power_dbm),
            r.num_groups.to_string(),
            r.num_channels.to_string(),
            r.reuse_factor.to_string(),
            r.split_factor.to_string(),
            format_sig6(r.min_rate_cue),
            format_sig6(r.min_rate_group),
            format_sig6(r.mean_gee),
            format_sig6(r.mean_wee),
            format_sig6(r.mean_aggregate_rate),
            format_sig6(r.mean_user_rate),
            format_sig6(r.mean_total_power_w),
            r.feasible_count.to_string(),
            r.infeasible_count.to_string(),
            format_sig6(r.mean_matcher_iterations),
            format_sig6(r.mean_dinkelbach_rounds),
            format_sig6(r.se_gee),
            format_sig6(r.se_wee),
        ];
        text.push_str(&fields.join(","));
        text.push('\n');
    }
    Ok(text)
}

/// Writes the result rows to a CSV file; nothing is created for empty input.
pub fn emit_csv(rows: &[ResultRow], path: &std::path::Path) -> Result<(), ExperimentError> {
    let text = render_csv(rows)?;
    std::fs::write(path, text).map_err(|source| ExperimentError::Io {
        path: path.display().to_string(),
        source,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny_config() -> ExperimentConfig {
        ExperimentConfig {
            name: "tiny".into(),
            cell_radius_m: 500.0,
            density_per_m2: 250.0 / (std::f64::consts::PI * 500.0 * 500.0),
            path_loss_exponent: 2.5,
            noise_power_dbm: -100.0,
            circuit_power_dbm: 10.0,
            num_channels: vec![2],
            num_groups: vec![2],
            reuse_factor: vec![1],
            split_factor: vec![1],
            max_power_dbm: vec![10.0],
            min_rate_cue: vec![0.1],
            min_rate_group: vec![0.1],
            min_rate_per_channel: 0.0,
            clustering: ClusteringConfig::Knn { group_size: 3 },
            objective: Objective::Gee,
            regime: Regime::OneToOne,
            replications: 1,
            base_seed: 11,
            solver: SolverSettings::default(),
        }
    }

    #[test]
    fn single_feasible_replication_produces_one_row() {
        let config = tiny_config();
        let rows = run_experiment(&config).unwrap();
        assert_eq!(rows.len(), 1);
        assert_eq!(rows[0].feasible_count, 1);
        assert_eq!(
            rows[0].feasible_count + rows[0].infeasible_count,
            rows[0].feasible_count + rows[0].infeasible_count
        );
        assert!(rows[0].mean_gee > 0.0);
    }

    #[test]
    fn same_config_yields_identical_csv() {
        let config = tiny_config();
        let a = render_csv(&run_experiment(&config).unwrap()).unwrap();
        let b = render_csv(&run_experiment(&config).unwrap()).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn empty_rows_refuse_to_emit() {
        let err = render_csv(&[]).unwrap_err();
        assert!(matches!(err, ExperimentError::EmptyRows));
    }

    #[test]
    fn csv_round_trip_preserves_six_significant_digits() {
        let config = tiny_config();
        let rows = run_experiment(&config).unwrap();
        let text = render_csv(&rows).unwrap();
        let data_line = text
            .lines()
            .find(|l| !l.starts_with('#') && !l.starts_with("max_power"))
            .unwrap();
        let fields: Vec<f64> = data_line.split(',').map(|f| f.parse().unwrap()).collect();
        assert!((fields[7] - rows[0].mean_gee).abs() <= 1e-5 * rows[0].mean_gee.abs().max(1.0));
        assert!((fields[0] - rows[0].max_power_dbm).abs() <= 1e-9);
    }

    #[test]
    fn sig6_formatting() {
        assert_eq!(format_sig6(791.42), "791.420");
        assert_eq!(format_sig6(0.0), "0.000000");
        assert_eq!(format_sig6(-5.0), "-5.00000");
        assert_eq!(format_sig6(0.001234), "0.00123400");
    }

    #[test]
    fn config_json_round_trip() {
        let config = tiny_config();
        let text = serde_json::to_string_pretty(&config).unwrap();
        let back = ExperimentConfig::from_json(&text).unwrap();
        assert_eq!(config, back);
    }

    #[test]
    fn config_rejects_empty_sweeps_and_zero_replications() {
        let mut config = tiny_config();
        config.max_power_dbm.clear();
        assert!(config.validate().is_err());
        let mut config = tiny_config();
        config.replications = 0;
        assert!(config.validate().is_err());
    }

    #[test]
    fn sweep_product_order_is_deterministic() {
        let mut config = tiny_config();
        config.max_power_dbm = vec![0.0, 10.0];
        config.min_rate_cue = vec![0.1, 0.2];
        let points = sweep_points(&config);
        assert_eq!(points.len(), 4);
        assert_eq!(points[0].max_power_dbm, 0.0);
        assert_eq!(points[0].min_rate_cue, 0.1);
        assert_eq!(points[1].min_rate_cue, 0.2);
        assert_eq!(points[2].max_power_dbm, 10.0);
    }
}
