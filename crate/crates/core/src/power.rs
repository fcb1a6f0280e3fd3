//! Power control for a fixed channel assignment.
//!
//! The transmit-power subproblem is a fractional program: a sum (or minimum)
//! of rates over consumed power. Rates are made concave through the tight
//! logarithmic minorant in the exponential variables `q = log2 p`, the ratio
//! is handled by (generalized) Dinkelbach iterations, and each Dinkelbach
//! subproblem is solved by a spectral projected-gradient ascent with a
//! logarithmic barrier on the rate and budget constraints.

use serde::Serialize;
use thiserror::Error;

use crate::model::{self, Assignment, Metrics, PowerAllocation};
use crate::num::{real, real_from_usize, Real};
use crate::scenario::{GainTable, Scenario};

/// Powers below this level (in watt) are reported as zero.
pub const POWER_FLOOR: f64 = 1e-12;

/// Smallest SINR used when anchoring the concave approximation.
pub const ANCHOR_FLOOR: f64 = 1e-12;

#[derive(Debug, Error)]
pub enum PowerError {
    #[error("no feasible power allocation for this assignment")]
    Infeasible,
    #[error("ratio denominator must be positive (got {0})")]
    NonPositiveDenominator(f64),
    #[error("inner solver failure: {0}")]
    InnerSolverFailure(String),
    #[error("domain error: {0}")]
    Domain(String),
}

/// Which efficiency figure the solver maximizes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Objective {
    /// Global energy efficiency: aggregate rate over total consumed power.
    Gee,
    /// Weighted minimum per-user energy efficiency (max-min fairness).
    Mee,
}

/// Solver tolerances and iteration caps.
#[derive(Debug, Clone, Copy)]
pub struct SolverConfig<T> {
    pub dinkelbach_eps: T,
    pub dinkelbach_max_iter: usize,
    pub sca_max_iter: usize,
    pub sca_rel_tol: T,
    pub inner_max_iter: usize,
    pub inner_grad_tol: T,
}

impl<T: Real> Default for SolverConfig<T> {
    fn default() -> Self {
        Self {
            dinkelbach_eps: real(1e-6),
            dinkelbach_max_iter: 60,
            sca_max_iter: 50,
            sca_rel_tol: real(1e-4),
            inner_max_iter: 600,
            inner_grad_tol: real(1e-6),
        }
    }
}

/// Coefficients of the concave minorant `a log2(x) + b <= log2(1 + x)`,
/// tight at the anchor SINR.
pub fn sca_params<T: Real>(gamma_bar: T) -> Result<(T, T), PowerError> {
    if gamma_bar <= T::zero() || !gamma_bar.is_finite() {
        return Err(PowerError::Domain(format!(
            "SCA anchor must be positive, got {gamma_bar}"
        )));
    }
    let a = gamma_bar / (T::one() + gamma_bar);
    let b = (T::one() + gamma_bar).log2() - a * gamma_bar.log2();
    Ok((a, b))
}

/// Minorant coefficients for every rate term: one pair per CUE and one pair
/// per assigned (group, channel), the latter anchored at the worst-receiver
/// SINR.
#[derive(Debug, Clone)]
pub struct ScaParams<T> {
    pub cue: Vec<(T, T)>,
    pub group: Vec<Vec<Option<(T, T)>>>,
}

impl<T: Real> ScaParams<T> {
    /// Anchors the approximation at the SINRs implied by the given powers.
    pub fn at_anchor(
        assignment: &Assignment,
        powers: &PowerAllocation<T>,
        gains: &GainTable<T>,
        scenario: &Scenario<T>,
    ) -> Self {
        let floor: T = real(ANCHOR_FLOOR);
        let cue = (0..scenario.num_channels())
            .map(|m| {
                let g = model::sinr_cue(m, assignment, powers, gains, scenario).max(floor);
                sca_params(g).expect("floored anchor is positive")
            })
            .collect();
        let group = (0..scenario.num_groups())
            .map(|k| {
                (0..scenario.num_channels())
                    .map(|m| {
                        if assignment.assigned(k, m) {
                            let g = model::min_sinr_group(k, m, assignment, powers, gains, scenario)
                                .expect("assigned pair")
                                .max(floor);
                            Some(sca_params(g).expect("floored anchor is positive"))
                        } else {
                            None
                        }
                    })
                    .collect()
            })
            .collect();
        Self { cue, group }
    }
}

// ---------------------------------------------------------------------------
// Dinkelbach drivers
// ---------------------------------------------------------------------------

/// Inner maximizer output for a single-ratio fractional program.
pub struct RatioEval<X, T> {
    pub x: X,
    pub numerator: T,
    pub denominator: T,
}

/// Inner maximizer output for a family of ratios (max-min programs).
pub struct MultiRatioEval<X, T> {
    pub x: X,
    /// One (numerator, denominator) pair per ratio.
    pub ratios: Vec<(T, T)>,
}

/// Result of a Dinkelbach run.
#[derive(Debug, Clone)]
pub struct DinkelbachOutcome<X, T> {
    pub x: X,
    pub lambda: T,
    pub iterations: usize,
    /// The lambda iterate after each round; nondecreasing for exact inner
    /// maximizers.
    pub lambda_trace: Vec<T>,
}

/// Dinkelbach's algorithm: iterates `lambda <- f(x*)/g(x*)` where `x*`
/// maximizes `f - lambda g`, until the max value drops below `eps` relative
/// to the numerator scale.
pub fn dinkelbach<X, T: Real>(
    mut inner: impl FnMut(T) -> Result<RatioEval<X, T>, PowerError>,
    eps: T,
    max_iter: usize,
) -> Result<DinkelbachOutcome<X, T>, PowerError> {
    let mut lambda = T::zero();
    let mut trace = Vec::new();
    for it in 1..=max_iter {
        let eval = inner(lambda)?;
        if eval.denominator <= T::zero() {
            return Err(PowerError::NonPositiveDenominator(
                eval.denominator.to_f64().unwrap_or(f64::NAN),
            ));
        }
        let gap = eval.numerator - lambda * eval.denominator;
        let ratio = eval.numerator / eval.denominator;
        trace.push(ratio);
        if gap <= eps * eval.numerator.abs().max(T::one()) || it == max_iter {
            return Ok(DinkelbachOutcome {
                x: eval.x,
                lambda: ratio,
                iterations: it,
                lambda_trace: trace,
            });
        }
        lambda = ratio;
    }
    unreachable!("loop returns at max_iter")
}

/// Generalized Dinkelbach for max-min ratio families: iterates
/// `lambda <- min_i f_i(x*)/g_i(x*)` where `x*` maximizes
/// `min_i (f_i - lambda g_i)`.
pub fn generalized_dinkelbach<X, T: Real>(
    mut inner: impl FnMut(T) -> Result<MultiRatioEval<X, T>, PowerError>,
    eps: T,
    max_iter: usize,
) -> Result<DinkelbachOutcome<X, T>, PowerError> {
    let mut lambda = T::zero();
    let mut trace = Vec::new();
    for it in 1..=max_iter {
        let eval = inner(lambda)?;
        if eval.ratios.is_empty() {
            return Err(PowerError::InnerSolverFailure("empty ratio family".into()));
        }
        let mut gap = T::infinity();
        let mut ratio = T::infinity();
        let mut scale = T::one();
        for &(f, g) in &eval.ratios {
            if g <= T::zero() {
                return Err(PowerError::NonPositiveDenominator(
                    g.to_f64().unwrap_or(f64::NAN),
                ));
            }
            gap = gap.min(f - lambda * g);
            ratio = ratio.min(f / g);
            scale = scale.max(f.abs());
        }
        trace.push(ratio);
        if gap <= eps * scale || it == max_iter {
            return Ok(DinkelbachOutcome {
                x: eval.x,
                lambda: ratio,
                iterations: it,
                lambda_trace: trace,
            });
        }
        lambda = ratio;
    }
    unreachable!("loop returns at max_iter")
}

// ---------------------------------------------------------------------------
// Inner concave subproblem
// ---------------------------------------------------------------------------

/// Which minimum-rate constraints the subproblem enforces.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RateEnforcement {
    /// All users must meet their floors; an uncovered group with a positive
    /// floor makes the assignment infeasible outright.
    Full,
    /// Only groups holding at least one channel are constrained. Used while
    /// baselines grow a partial assignment.
    AssignedOnly,
}

/// One optimization variable of the inner subproblem. Powers live in the
/// exponential domain `q = log2 p`; the epigraph variables bound every
/// receiver's minorant from below so that the subproblem stays smooth.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PowerVar {
    /// CUE transmit power on its own channel, `q = log2 p`.
    Cue(usize),
    /// Group transmit power on an assigned channel, `q = log2 p`.
    Group(usize, usize),
    /// Worst-receiver minorant rate of an assigned (group, channel) pair.
    ChannelRate(usize, usize),
    /// Minimum weighted per-user efficiency gap (max-min objective only).
    MinUser,
}

/// Box half-width for the auxiliary (non-power) variables.
const AUX_BOUND: f64 = 1e6;

/// Reusable evaluation buffers for one subproblem.
struct Scratch<T> {
    p: Vec<T>,
    dc: Vec<T>,
    cue_rate: Vec<T>,
    /// Per receiver term: log2 SINR, denominator, epigraph slack.
    l_val: Vec<T>,
    d_val: Vec<T>,
    c_epi: Vec<T>,
    grp_rate: Vec<T>,
    grp_tx: Vec<T>,
    /// Gradient weight multiplying the minorant gradient of each receiver term.
    w_l: Vec<T>,
    /// Gradient weight multiplying the CUE minorant gradient per channel.
    w_cue: Vec<T>,
    /// Gradient weight on each epigraph variable.
    w_t: Vec<T>,
    /// Power-decay weight per variable (multiplies `-ln2 p_i`).
    w_pwr: Vec<T>,
    grad: Vec<T>,
    /// Barrier slacks of the last evaluation in a fixed order, for the
    /// fraction-to-the-boundary rule of the Newton line search.
    slacks: Vec<T>,
}

impl<T: Real> Scratch<T> {
    fn new(num_vars: usize, num_channels: usize, num_groups: usize, num_rterms: usize, num_pairs: usize) -> Self {
        Self {
            p: vec![T::zero(); num_vars],
            dc: vec![T::zero(); num_channels],
            cue_rate: vec![T::zero(); num_channels],
            l_val: vec![T::zero(); num_rterms],
            d_val: vec![T::zero(); num_rterms],
            c_epi: vec![T::zero(); num_rterms],
            grp_rate: vec![T::zero(); num_groups],
            grp_tx: vec![T::zero(); num_groups],
            w_l: vec![T::zero(); num_rterms],
            w_cue: vec![T::zero(); num_channels],
            w_t: vec![T::zero(); num_pairs],
            w_pwr: vec![T::zero(); num_vars],
            grad: vec![T::zero(); num_vars],
            slacks: Vec::new(),
        }
    }
}

/// The concave subproblem for one (assignment, objective) pair.
///
/// The min over receivers inside every group rate is written in epigraph
/// form: an auxiliary rate variable per assigned (group, channel) pair is
/// kept below every receiver's concave minorant through barrier terms, so
/// the whole barrier objective is smooth and its Hessian is available in
/// closed form. The max-min objective adds one more epigraph variable under
/// all per-user efficiency gaps.
pub struct InnerProblem<'a, T: Real> {
    scenario: &'a Scenario<T>,
    gains: &'a GainTable<T>,
    objective: Objective,
    vars: Vec<PowerVar>,
    var_of_cue: Vec<usize>,
    var_of_pair: Vec<Vec<Option<usize>>>,
    /// Assigned (group, channel, power var) triples in row-major order.
    pairs: Vec<(usize, usize, usize)>,
    /// Epigraph variable index per pair.
    tvar: Vec<usize>,
    /// Max-min gap variable (objective Mee only).
    uvar: Option<usize>,
    /// Pair positions owned by each group.
    group_pairs: Vec<Vec<usize>>,
    /// Co-channel transmitters per channel as (group, power var).
    occupants: Vec<Vec<(usize, usize)>>,
    /// Flattened receiver terms: (pair position, receiver index).
    rterms: Vec<(usize, usize)>,
    lo: Vec<T>,
    hi: Vec<T>,
    /// Groups whose aggregated rate floor is enforced.
    rate_group: Vec<bool>,
    /// CUEs whose rate floor is enforced.
    rate_cue: Vec<bool>,
    /// Per-channel floors are active only in split mode.
    per_channel: bool,
    /// Groups with two or more channels get a budget barrier (a single
    /// channel is capped by its box bound alone).
    budget_barrier: Vec<bool>,
    has_barrier: bool,
    tau_cue_total: T,
    tau_grp_eff: Vec<T>,
    scratch: std::cell::RefCell<Scratch<T>>,
}

impl<'a, T: Real> InnerProblem<'a, T> {
    pub fn new(
        scenario: &'a Scenario<T>,
        gains: &'a GainTable<T>,
        assignment: &'a Assignment,
        objective: Objective,
        enforcement: RateEnforcement,
    ) -> Result<Self, PowerError> {
        let k_gr = scenario.num_groups();
        let m_ch = scenario.num_channels();
        let q_floor: T = real(POWER_FLOOR.log2());
        let aux: T = real(AUX_BOUND);

        if enforcement == RateEnforcement::Full {
            for k in 0..k_gr {
                if assignment.row_sum(k) == 0 && scenario.min_rate_group[k] > T::zero() {
                    return Err(PowerError::Infeasible);
                }
            }
        }

        let mut vars = Vec::new();
        let mut lo = Vec::new();
        let mut hi = Vec::new();
        let mut var_of_cue = Vec::with_capacity(m_ch);
        for m in 0..m_ch {
            var_of_cue.push(vars.len());
            vars.push(PowerVar::Cue(m));
            lo.push(q_floor);
            hi.push(scenario.max_power_cue[m].max(real(POWER_FLOOR)).log2());
        }
        let mut var_of_pair = vec![vec![None; m_ch]; k_gr];
        let mut pairs = Vec::new();
        let mut group_pairs = vec![Vec::new(); k_gr];
        let mut occupants = vec![Vec::new(); m_ch];
        for k in 0..k_gr {
            for m in 0..m_ch {
                if assignment.assigned(k, m) {
                    let var = vars.len();
                    var_of_pair[k][m] = Some(var);
                    vars.push(PowerVar::Group(k, m));
                    lo.push(q_floor);
                    hi.push(scenario.max_power_group[k].max(real(POWER_FLOOR)).log2());
                    group_pairs[k].push(pairs.len());
                    pairs.push((k, m, var));
                    occupants[m].push((k, var));
                }
            }
        }
        let mut tvar = Vec::with_capacity(pairs.len());
        for &(k, m, _) in &pairs {
            tvar.push(vars.len());
            vars.push(PowerVar::ChannelRate(k, m));
            lo.push(-aux);
            hi.push(aux);
        }
        let uvar = match objective {
            Objective::Gee => None,
            Objective::Mee => {
                let v = vars.len();
                vars.push(PowerVar::MinUser);
                lo.push(-aux);
                hi.push(aux);
                Some(v)
            }
        };

        let mut rterms = Vec::new();
        for (pi, &(k, _, _)) in pairs.iter().enumerate() {
            for rcv in 0..scenario.receivers_of(k) {
                rterms.push((pi, rcv));
            }
        }

        let rate_group: Vec<bool> = (0..k_gr)
            .map(|k| scenario.min_rate_group[k] > T::zero() && assignment.row_sum(k) > 0)
            .collect();
        let rate_cue: Vec<bool> =
            (0..m_ch).map(|m| scenario.min_rate_cue[m] > T::zero()).collect();
        let budget_barrier: Vec<bool> =
            (0..k_gr).map(|k| assignment.row_sum(k) >= 2).collect();
        let per_channel = scenario.split_factor > 1;
        let has_barrier = !rterms.is_empty()
            || uvar.is_some()
            || rate_cue.iter().any(|b| *b)
            || budget_barrier.iter().any(|b| *b);
        let tau_cue_total = scenario
            .circuit_power_cue
            .iter()
            .fold(T::zero(), |a, b| a + *b);
        let tau_grp_eff = (0..k_gr)
            .map(|k| model::group_circuit_power(scenario, assignment, k))
            .collect();
        let scratch = std::cell::RefCell::new(Scratch::new(
            vars.len(),
            m_ch,
            k_gr,
            rterms.len(),
            pairs.len(),
        ));

        Ok(Self {
            scenario,
            gains,
            objective,
            vars,
            var_of_cue,
            var_of_pair,
            pairs,
            tvar,
            uvar,
            group_pairs,
            occupants,
            rterms,
            lo,
            hi,
            rate_group,
            rate_cue,
            per_channel,
            budget_barrier,
            has_barrier,
            tau_cue_total,
            tau_grp_eff,
            scratch,
        })
    }

    pub fn variables(&self) -> &[PowerVar] {
        &self.vars
    }

    pub fn bounds(&self) -> (&[T], &[T]) {
        (&self.lo, &self.hi)
    }

    /// Whether any barrier constraint is active for this subproblem.
    pub fn has_barrier_constraints(&self) -> bool {
        self.has_barrier
    }

    /// Total circuit power with per-channel group accounting.
    fn tau_total(&self) -> T {
        self.tau_cue_total + self.tau_grp_eff.iter().fold(T::zero(), |a, b| a + *b)
    }

    /// Exponential-domain powers with the auxiliary variables zeroed; the
    /// caller projects the epigraph once approximation anchors exist.
    pub fn raw_from_powers(&self, powers: &PowerAllocation<T>) -> Vec<T> {
        let floor: T = real(POWER_FLOOR);
        self.vars
            .iter()
            .enumerate()
            .map(|(i, var)| match *var {
                PowerVar::Cue(m) => powers.cue[m].max(floor).log2().max(self.lo[i]).min(self.hi[i]),
                PowerVar::Group(k, m) => {
                    powers.group[k][m].max(floor).log2().max(self.lo[i]).min(self.hi[i])
                }
                _ => T::zero(),
            })
            .collect()
    }

    /// Full starting vector for the given powers: exponential-domain powers,
    /// epigraph rates strictly below their receiver minorants, and the
    /// max-min gap variable strictly below every user gap (at `lambda = 0`).
    pub fn q_from_powers(&self, powers: &PowerAllocation<T>, sca: &ScaParams<T>) -> Vec<T> {
        let mut q = self.raw_from_powers(powers);
        self.project_epigraph(&mut q, sca, T::zero());
        q
    }

    /// Re-seats the auxiliary variables strictly inside their constraints:
    /// every epigraph rate sits a standoff below its receiver minorants
    /// (shrunk further whenever a rate floor leaves less room), and the
    /// max-min gap variable sits below every user gap at the given `lambda`.
    pub fn project_epigraph(&self, q: &mut [T], sca: &ScaParams<T>, lambda: T) {
        let tiny: T = real(1e-300);
        let floor_eps: T = real(1e-12);
        let mut worst_of = vec![T::zero(); self.pairs.len()];
        for (pi, &(k, m, var)) in self.pairs.iter().enumerate() {
            let (a, b) = sca.group[k][m].expect("assigned pair has coefficients");
            let cue_var = self.var_of_cue[m];
            let mut worst = T::infinity();
            for rcv in 0..self.scenario.receivers_of(k) {
                let mut d = self.scenario.noise_power
                    + self.gains.cue_to_receiver(k, rcv, m) * q[cue_var].exp2();
                for &(j, jvar) in &self.occupants[m] {
                    if j != k {
                        d = d + self.gains.group_to_receiver(j, k, rcv, m) * q[jvar].exp2();
                    }
                }
                let l = self.gains.group_to_receiver(k, k, rcv, m).max(tiny).log2() + q[var]
                    - d.max(tiny).log2();
                worst = worst.min(a * l + b);
            }
            worst_of[pi] = worst;
        }
        for k in 0..self.scenario.num_groups() {
            if self.group_pairs[k].is_empty() {
                continue;
            }
            let s_k: T = real_from_usize(self.scenario.receivers_of(k));
            // a group whose epigraph rates violate a minorant or a rate floor
            // gets re-seated; strictly feasible groups keep their warm values
            let mut reseat = false;
            for &pi in &self.group_pairs[k] {
                if q[self.tvar[pi]] >= worst_of[pi] - floor_eps {
                    reseat = true;
                }
                if self.per_channel {
                    let (_, m, _) = self.pairs[pi];
                    let floor = self.scenario.min_rate_per_channel[k][m];
                    if floor > T::zero() && s_k * q[self.tvar[pi]] <= floor {
                        reseat = true;
                    }
                }
            }
            if self.rate_group[k] {
                let total: T = self
                    .group_pairs[k]
                    .iter()
                    .fold(T::zero(), |a, &pi| a + q[self.tvar[pi]]);
                if s_k * total <= self.scenario.min_rate_group[k] {
                    reseat = true;
                }
            }
            if !reseat {
                continue;
            }
            let mut group_allowance = T::infinity();
            if self.rate_group[k] {
                let total: T = self
                    .group_pairs[k]
                    .iter()
                    .fold(T::zero(), |a, &pi| a + worst_of[pi]);
                let slack = s_k * total - self.scenario.min_rate_group[k];
                let pairs_k: T = real_from_usize(self.group_pairs[k].len());
                group_allowance = slack / (s_k * pairs_k * real(2.0));
            }
            for &pi in &self.group_pairs[k] {
                let worst = worst_of[pi];
                let mut delta = real::<T>(1e-6) * (T::one() + worst.abs());
                delta = delta.min(group_allowance);
                if self.per_channel {
                    let (_, m, _) = self.pairs[pi];
                    let floor = self.scenario.min_rate_per_channel[k][m];
                    if floor > T::zero() {
                        delta = delta.min((s_k * worst - floor) / (s_k * real(2.0)));
                    }
                }
                q[self.tvar[pi]] = worst - delta.max(floor_eps);
            }
        }
        if let Some(u) = self.uvar {
            let mut s = self.scratch.borrow_mut();
            self.compute_values(q, sca, &mut s);
            let mut worst = T::infinity();
            for m in 0..self.scenario.num_channels() {
                let gap = self.scenario.weight_cue[m] * s.cue_rate[m]
                    - lambda * (self.scenario.circuit_power_cue[m] + s.p[self.var_of_cue[m]]);
                worst = worst.min(gap);
            }
            for k in 0..self.scenario.num_groups() {
                let gap = self.scenario.weight_group[k] * s.grp_rate[k]
                    - lambda * (self.tau_grp_eff[k] + s.grp_tx[k]);
                worst = worst.min(gap);
            }
            drop(s);
            if q[u] >= worst - floor_eps {
                let margin = real::<T>(1e-6) * (T::one() + worst.abs());
                q[u] = worst - margin;
            }
        }
    }

    /// Extracts the power allocation, dropping below-floor powers to zero.
    pub fn powers_from_q(&self, q: &[T]) -> PowerAllocation<T> {
        let mut powers =
            PowerAllocation::zeros(self.scenario.num_groups(), self.scenario.num_channels());
        let floor: T = real(POWER_FLOOR * (1.0 + 1e-9));
        for (i, var) in self.vars.iter().enumerate() {
            match *var {
                PowerVar::Cue(m) => {
                    let p = q[i].exp2();
                    powers.cue[m] = if p <= floor { T::zero() } else { p };
                }
                PowerVar::Group(k, m) => {
                    let p = q[i].exp2();
                    powers.group[k][m] = if p <= floor { T::zero() } else { p };
                }
                _ => {}
            }
        }
        powers
    }

    /// log2 SINR of CUE `m` plus denominator shares (var, h p / D).
    fn cue_log_sinr(&self, q: &[T], p: &[T], m: usize) -> (T, Vec<(usize, T)>) {
        let tiny: T = real(1e-300);
        let mut d = self.scenario.noise_power;
        let mut terms = Vec::new();
        for &(k, var) in &self.occupants[m] {
            let contribution = self.gains.group_to_bs(k, m) * p[var];
            d = d + contribution;
            terms.push((var, contribution));
        }
        let d = d.max(tiny);
        for t in &mut terms {
            t.1 = t.1 / d;
        }
        let value = self.gains.cue_to_bs(m).max(tiny).log2() + q[self.var_of_cue[m]] - d.log2();
        (value, terms)
    }

    /// log2 SINR of receiver `rcv` in group `k` on channel `m`, with
    /// denominator shares as (var, h p / D).
    fn d2d_log_sinr(
        &self,
        q: &[T],
        p: &[T],
        k: usize,
        rcv: usize,
        m: usize,
    ) -> (T, Vec<(usize, T)>) {
        let tiny: T = real(1e-300);
        let own = self.var_of_pair[k][m].expect("assigned pair");
        let cue_var = self.var_of_cue[m];
        let mut d = self.scenario.noise_power;
        let mut terms = Vec::new();
        let cue_term = self.gains.cue_to_receiver(k, rcv, m) * p[cue_var];
        d = d + cue_term;
        terms.push((cue_var, cue_term));
        for &(j, jvar) in &self.occupants[m] {
            if j != k {
                let contribution = self.gains.group_to_receiver(j, k, rcv, m) * p[jvar];
                d = d + contribution;
                terms.push((jvar, contribution));
            }
        }
        let d = d.max(tiny);
        for t in &mut terms {
            t.1 = t.1 / d;
        }
        let value =
            self.gains.group_to_receiver(k, k, rcv, m).max(tiny).log2() + q[own] - d.log2();
        (value, terms)
    }

    /// Value pass: powers, CUE rates, receiver log-SINRs with denominators,
    /// epigraph slacks, group rates and transmit sums.
    fn compute_values(&self, q: &[T], sca: &ScaParams<T>, s: &mut Scratch<T>) {
        let tiny: T = real(1e-300);
        for i in 0..q.len() {
            s.p[i] = q[i].exp2();
        }
        for m in 0..self.scenario.num_channels() {
            let mut dc = self.scenario.noise_power;
            for &(k, var) in &self.occupants[m] {
                dc = dc + self.gains.group_to_bs(k, m) * s.p[var];
            }
            let dc = dc.max(tiny);
            s.dc[m] = dc;
            let lc =
                self.gains.cue_to_bs(m).max(tiny).log2() + q[self.var_of_cue[m]] - dc.log2();
            let (a, b) = sca.cue[m];
            s.cue_rate[m] = a * lc + b;
        }
        for g in s.grp_rate.iter_mut() {
            *g = T::zero();
        }
        for g in s.grp_tx.iter_mut() {
            *g = T::zero();
        }
        for (ri, &(pi, rcv)) in self.rterms.iter().enumerate() {
            let (k, m, var) = self.pairs[pi];
            let (a, b) = sca.group[k][m].expect("assigned pair has coefficients");
            let cue_var = self.var_of_cue[m];
            let mut d =
                self.scenario.noise_power + self.gains.cue_to_receiver(k, rcv, m) * s.p[cue_var];
            for &(j, jvar) in &self.occupants[m] {
                if j != k {
                    d = d + self.gains.group_to_receiver(j, k, rcv, m) * s.p[jvar];
                }
            }
            let d = d.max(tiny);
            let l = self.gains.group_to_receiver(k, k, rcv, m).max(tiny).log2() + q[var]
                - d.log2();
            s.l_val[ri] = l;
            s.d_val[ri] = d;
            s.c_epi[ri] = a * l + b - q[self.tvar[pi]];
        }
        for (pi, &(k, _, var)) in self.pairs.iter().enumerate() {
            let s_k: T = real_from_usize(self.scenario.receivers_of(k));
            s.grp_rate[k] = s.grp_rate[k] + s_k * q[self.tvar[pi]];
            s.grp_tx[k] = s.grp_tx[k] + s.p[var];
        }
    }

    /// Objective, barrier terms and gradient assembly. Returns `None` when
    /// any barrier slack is nonpositive. Gradient weights are accumulated per
    /// rate term so each term's gradient is materialized at most once.
    fn eval(&self, q: &[T], sca: &ScaParams<T>, lambda: T, mu: T, s: &mut Scratch<T>) -> Option<T> {
        self.compute_values(q, sca, s);
        let ln2: T = real(std::f64::consts::LN_2);
        let n = self.vars.len();
        let m_ch = self.scenario.num_channels();
        let k_gr = self.scenario.num_groups();
        for w in s.w_l.iter_mut() {
            *w = T::zero();
        }
        for w in s.w_cue.iter_mut() {
            *w = T::zero();
        }
        for w in s.w_t.iter_mut() {
            *w = T::zero();
        }
        for w in s.w_pwr.iter_mut() {
            *w = T::zero();
        }

        // objective
        let mut value;
        match self.objective {
            Objective::Gee => {
                let mut v = -lambda * self.tau_total();
                for m in 0..m_ch {
                    v = v + s.cue_rate[m];
                    s.w_cue[m] = T::one();
                }
                for (pi, &(k, _, _)) in self.pairs.iter().enumerate() {
                    let s_k: T = real_from_usize(self.scenario.receivers_of(k));
                    v = v + s_k * q[self.tvar[pi]];
                    s.w_t[pi] = s_k;
                }
                for (i, var) in self.vars.iter().enumerate() {
                    if matches!(var, PowerVar::Cue(_) | PowerVar::Group(..)) {
                        v = v - lambda * s.p[i];
                        s.w_pwr[i] = s.w_pwr[i] + lambda;
                    }
                }
                value = v;
            }
            Objective::Mee => {
                value = q[self.uvar.expect("max-min variable")];
            }
        }

        // barrier slacks: positivity checked always, weights only when mu > 0
        s.slacks.clear();
        let mut slack_list: Vec<T> = std::mem::take(&mut s.slacks);
        let mut barrier = |slack: T, value: &mut T| -> Option<T> {
            slack_list.push(slack);
            if slack <= T::zero() {
                return None;
            }
            if mu > T::zero() {
                *value = *value + mu * slack.ln();
                Some(mu / slack)
            } else {
                Some(T::zero())
            }
        };

        // epigraph: t below every receiver minorant
        for ri in 0..self.rterms.len() {
            let w = barrier(s.c_epi[ri], &mut value)?;
            s.w_l[ri] = s.w_l[ri] + w;
            s.w_t[self.rterms[ri].0] = s.w_t[self.rterms[ri].0] - w;
        }
        // CUE rate floors
        for m in 0..m_ch {
            if self.rate_cue[m] {
                let w = barrier(s.cue_rate[m] - self.scenario.min_rate_cue[m], &mut value)?;
                s.w_cue[m] = s.w_cue[m] + w;
            }
        }
        // group rate floors and budgets
        for k in 0..k_gr {
            let s_k: T = real_from_usize(self.scenario.receivers_of(k));
            if self.rate_group[k] {
                let w = barrier(s.grp_rate[k] - self.scenario.min_rate_group[k], &mut value)?;
                for &pi in &self.group_pairs[k] {
                    s.w_t[pi] = s.w_t[pi] + w * s_k;
                }
            }
            if self.budget_barrier[k] {
                let w = barrier(self.scenario.max_power_group[k] - s.grp_tx[k], &mut value)?;
                for &pi in &self.group_pairs[k] {
                    let var = self.pairs[pi].2;
                    s.w_pwr[var] = s.w_pwr[var] + w;
                }
            }
        }
        // per-channel rate floors
        if self.per_channel {
            for (pi, &(k, m, _)) in self.pairs.iter().enumerate() {
                let floor = self.scenario.min_rate_per_channel[k][m];
                if floor <= T::zero() {
                    continue;
                }
                let s_k: T = real_from_usize(self.scenario.receivers_of(k));
                let w = barrier(s_k * q[self.tvar[pi]] - floor, &mut value)?;
                s.w_t[pi] = s.w_t[pi] + w * s_k;
            }
        }
        // max-min user gaps
        if let Some(u) = self.uvar {
            for m in 0..m_ch {
                let gap = self.scenario.weight_cue[m] * s.cue_rate[m]
                    - lambda * (self.scenario.circuit_power_cue[m] + s.p[self.var_of_cue[m]])
                    - q[u];
                let w = barrier(gap, &mut value)?;
                s.w_cue[m] = s.w_cue[m] + w * self.scenario.weight_cue[m];
                s.w_pwr[self.var_of_cue[m]] = s.w_pwr[self.var_of_cue[m]] + w * lambda;
            }
            for k in 0..k_gr {
                let gap = self.scenario.weight_group[k] * s.grp_rate[k]
                    - lambda * (self.tau_grp_eff[k] + s.grp_tx[k])
                    - q[u];
                let w = barrier(gap, &mut value)?;
                let s_k: T = real_from_usize(self.scenario.receivers_of(k));
                for &pi in &self.group_pairs[k] {
                    s.w_t[pi] = s.w_t[pi] + w * self.scenario.weight_group[k] * s_k;
                    let var = self.pairs[pi].2;
                    s.w_pwr[var] = s.w_pwr[var] + w * lambda;
                }
            }
        }

        s.slacks = slack_list;

        // gradient pass
        for g in s.grad.iter_mut() {
            *g = T::zero();
        }
        for m in 0..m_ch {
            if s.w_cue[m] == T::zero() {
                continue;
            }
            let (a, _) = sca.cue[m];
            let w = s.w_cue[m] * a;
            let own = self.var_of_cue[m];
            s.grad[own] = s.grad[own] + w;
            for &(k, var) in &self.occupants[m] {
                s.grad[var] =
                    s.grad[var] - w * self.gains.group_to_bs(k, m) * s.p[var] / s.dc[m];
            }
        }
        for (ri, &(pi, rcv)) in self.rterms.iter().enumerate() {
            if s.w_l[ri] == T::zero() {
                continue;
            }
            let (k, m, var) = self.pairs[pi];
            let (a, _) = sca.group[k][m].expect("assigned pair has coefficients");
            let w = s.w_l[ri] * a;
            let d = s.d_val[ri];
            s.grad[var] = s.grad[var] + w;
            let cue_var = self.var_of_cue[m];
            s.grad[cue_var] =
                s.grad[cue_var] - w * self.gains.cue_to_receiver(k, rcv, m) * s.p[cue_var] / d;
            for &(j, jvar) in &self.occupants[m] {
                if j != k {
                    s.grad[jvar] = s.grad[jvar]
                        - w * self.gains.group_to_receiver(j, k, rcv, m) * s.p[jvar] / d;
                }
            }
        }
        for (pi, w) in s.w_t.iter().enumerate() {
            if *w != T::zero() {
                let t = self.tvar[pi];
                s.grad[t] = s.grad[t] + *w;
            }
        }
        for i in 0..n {
            if s.w_pwr[i] != T::zero() {
                s.grad[i] = s.grad[i] - s.w_pwr[i] * ln2 * s.p[i];
            }
        }
        if let Some(u) = self.uvar {
            // d(objective)/du = 1; each of the (M + K) user-gap barriers
            // contributes -mu/gap, already folded through the weights of the
            // other variables; the u-component must be added directly
            let mut du = T::one();
            if mu > T::zero() {
                for m in 0..m_ch {
                    let gap = self.scenario.weight_cue[m] * s.cue_rate[m]
                        - lambda * (self.scenario.circuit_power_cue[m] + s.p[self.var_of_cue[m]])
                        - q[u];
                    du = du - mu / gap;
                }
                for k in 0..k_gr {
                    let gap = self.scenario.weight_group[k] * s.grp_rate[k]
                        - lambda * (self.tau_grp_eff[k] + s.grp_tx[k])
                        - q[u];
                    du = du - mu / gap;
                }
            }
            s.grad[u] = du;
        }

        Some(value)
    }

    /// Analytic Hessian of the barrier objective, valid right after [`Self::eval`]
    /// has filled the scratch for the same point. Every log-SINR term
    /// contributes `-a ln2 (diag(u) - u u^T)` over its denominator shares,
    /// power terms a diagonal, and each barrier constraint its rank-one
    /// curvature.
    fn hessian(&self, q: &[T], sca: &ScaParams<T>, lambda: T, mu: T, s: &Scratch<T>, h: &mut [T]) {
        let n = self.vars.len();
        debug_assert_eq!(h.len(), n * n);
        for v in h.iter_mut() {
            *v = T::zero();
        }
        let ln2: T = real(std::f64::consts::LN_2);
        let ln2sq = ln2 * ln2;
        let m_ch = self.scenario.num_channels();
        let k_gr = self.scenario.num_groups();

        let mut shares: Vec<(usize, T)> = Vec::with_capacity(n);
        let mut gs: Vec<T> = vec![T::zero(); n];

        let curvature_block = |weight: T, a: T, shares: &[(usize, T)], h: &mut [T]| {
            let w = weight * a * ln2;
            if w == T::zero() {
                return;
            }
            for &(v1, u1) in shares {
                h[v1 * n + v1] = h[v1 * n + v1] - w * u1;
                for &(v2, u2) in shares {
                    h[v1 * n + v2] = h[v1 * n + v2] + w * u1 * u2;
                }
            }
        };
        let rank_one = |scale: T, gs: &[T], h: &mut [T]| {
            for i in 0..n {
                if gs[i] == T::zero() {
                    continue;
                }
                for j in 0..n {
                    if gs[j] != T::zero() {
                        h[i * n + j] = h[i * n + j] - scale * gs[i] * gs[j];
                    }
                }
            }
        };
        let add_rate_grad = |coeff: T, a: T, own: usize, shares: &[(usize, T)], gs: &mut [T]| {
            gs[own] = gs[own] + coeff * a;
            for &(v, u) in shares {
                gs[v] = gs[v] - coeff * a * u;
            }
        };

        let cue_shares = |m: usize, shares: &mut Vec<(usize, T)>| {
            shares.clear();
            for &(k, var) in &self.occupants[m] {
                shares.push((var, self.gains.group_to_bs(k, m) * s.p[var] / s.dc[m]));
            }
        };
        let rterm_shares = |ri: usize, shares: &mut Vec<(usize, T)>| {
            let (pi, rcv) = self.rterms[ri];
            let (k, m, _) = self.pairs[pi];
            let d = s.d_val[ri];
            shares.clear();
            let cue_var = self.var_of_cue[m];
            shares.push((
                cue_var,
                self.gains.cue_to_receiver(k, rcv, m) * s.p[cue_var] / d,
            ));
            for &(j, jvar) in &self.occupants[m] {
                if j != k {
                    shares.push((jvar, self.gains.group_to_receiver(j, k, rcv, m) * s.p[jvar] / d));
                }
            }
        };

        // curvature of every weighted log-SINR term
        for m in 0..m_ch {
            if s.w_cue[m] == T::zero() {
                continue;
            }
            let (a, _) = sca.cue[m];
            cue_shares(m, &mut shares);
            curvature_block(s.w_cue[m], a, &shares, h);
        }
        for ri in 0..self.rterms.len() {
            if s.w_l[ri] == T::zero() {
                continue;
            }
            let (pi, _) = self.rterms[ri];
            let (k, m, _) = self.pairs[pi];
            let (a, _) = sca.group[k][m].expect("assigned pair has coefficients");
            rterm_shares(ri, &mut shares);
            curvature_block(s.w_l[ri], a, &shares, h);
        }
        // separable power curvature (objective and barrier weights combined)
        for i in 0..n {
            if s.w_pwr[i] != T::zero() {
                h[i * n + i] = h[i * n + i] - s.w_pwr[i] * ln2sq * s.p[i];
            }
        }

        if mu <= T::zero() {
            return;
        }

        // rank-one barrier corrections, one per constraint
        for ri in 0..self.rterms.len() {
            let (pi, _) = self.rterms[ri];
            let (k, m, var) = self.pairs[pi];
            let (a, _) = sca.group[k][m].expect("assigned pair has coefficients");
            for g in gs.iter_mut() {
                *g = T::zero();
            }
            rterm_shares(ri, &mut shares);
            add_rate_grad(T::one(), a, var, &shares, &mut gs);
            gs[self.tvar[pi]] = -T::one();
            rank_one(mu / (s.c_epi[ri] * s.c_epi[ri]), &gs, h);
        }
        for m in 0..m_ch {
            if !self.rate_cue[m] {
                continue;
            }
            let slack = s.cue_rate[m] - self.scenario.min_rate_cue[m];
            let (a, _) = sca.cue[m];
            for g in gs.iter_mut() {
                *g = T::zero();
            }
            cue_shares(m, &mut shares);
            add_rate_grad(T::one(), a, self.var_of_cue[m], &shares, &mut gs);
            rank_one(mu / (slack * slack), &gs, h);
        }
        for k in 0..k_gr {
            let s_k: T = real_from_usize(self.scenario.receivers_of(k));
            if self.rate_group[k] {
                let slack = s.grp_rate[k] - self.scenario.min_rate_group[k];
                for g in gs.iter_mut() {
                    *g = T::zero();
                }
                for &pi in &self.group_pairs[k] {
                    gs[self.tvar[pi]] = s_k;
                }
                rank_one(mu / (slack * slack), &gs, h);
            }
            if self.budget_barrier[k] {
                let slack = self.scenario.max_power_group[k] - s.grp_tx[k];
                for g in gs.iter_mut() {
                    *g = T::zero();
                }
                for &pi in &self.group_pairs[k] {
                    let var = self.pairs[pi].2;
                    gs[var] = -ln2 * s.p[var];
                }
                rank_one(mu / (slack * slack), &gs, h);
            }
        }
        if self.per_channel {
            for (pi, &(k, m, _)) in self.pairs.iter().enumerate() {
                let floor = self.scenario.min_rate_per_channel[k][m];
                if floor <= T::zero() {
                    continue;
                }
                let s_k: T = real_from_usize(self.scenario.receivers_of(k));
                let slack = s_k * q[self.tvar[pi]] - floor;
                for g in gs.iter_mut() {
                    *g = T::zero();
                }
                gs[self.tvar[pi]] = s_k;
                rank_one(mu / (slack * slack), &gs, h);
            }
        }
        if let Some(u) = self.uvar {
            for m in 0..m_ch {
                let gap = self.scenario.weight_cue[m] * s.cue_rate[m]
                    - lambda * (self.scenario.circuit_power_cue[m] + s.p[self.var_of_cue[m]])
                    - q[u];
                let (a, _) = sca.cue[m];
                for g in gs.iter_mut() {
                    *g = T::zero();
                }
                cue_shares(m, &mut shares);
                add_rate_grad(self.scenario.weight_cue[m], a, self.var_of_cue[m], &shares, &mut gs);
                let own = self.var_of_cue[m];
                gs[own] = gs[own] - lambda * ln2 * s.p[own];
                gs[u] = -T::one();
                rank_one(mu / (gap * gap), &gs, h);
            }
            for k in 0..k_gr {
                let gap = self.scenario.weight_group[k] * s.grp_rate[k]
                    - lambda * (self.tau_grp_eff[k] + s.grp_tx[k])
                    - q[u];
                let s_k: T = real_from_usize(self.scenario.receivers_of(k));
                for g in gs.iter_mut() {
                    *g = T::zero();
                }
                for &pi in &self.group_pairs[k] {
                    gs[self.tvar[pi]] = self.scenario.weight_group[k] * s_k;
                    let var = self.pairs[pi].2;
                    gs[var] = -lambda * ln2 * s.p[var];
                }
                gs[u] = -T::one();
                rank_one(mu / (gap * gap), &gs, h);
            }
        }
    }

    /// Analytic Hessian at `q` (row-major), for verification against finite
    /// differences of the gradient.
    pub fn value_grad_hessian(
        &self,
        q: &[T],
        sca: &ScaParams<T>,
        lambda: T,
        mu: T,
    ) -> Option<(T, Vec<T>, Vec<T>)> {
        let mut s = self.scratch.borrow_mut();
        let v = self.eval(q, sca, lambda, mu, &mut s)?;
        let n = self.vars.len();
        let mut h = vec![T::zero(); n * n];
        self.hessian(q, sca, lambda, mu, &s, &mut h);
        Some((v, s.grad.clone(), h))
    }

    /// Value and gradient of the barrier objective
    /// `Phi(q) + mu * sum log(slack)`; `None` outside the barrier domain.
    ///
    /// `Phi` is the Dinkelbach objective at the given `lambda`: the sum of
    /// approximated rates minus `lambda` times total consumed power (GEE), or
    /// the max-min epigraph variable (MEE).
    pub fn value_and_grad(
        &self,
        q: &[T],
        sca: &ScaParams<T>,
        lambda: T,
        mu: T,
    ) -> Option<(T, Vec<T>)> {
        let mut scratch = self.scratch.borrow_mut();
        let value = self.eval(q, sca, lambda, mu, &mut scratch)?;
        Some((value, scratch.grad.clone()))
    }

    /// All barrier constraint slacks at `q` in a fixed order.
    pub fn constraint_slacks(&self, q: &[T], sca: &ScaParams<T>) -> Vec<T> {
        let mut s = self.scratch.borrow_mut();
        self.compute_values(q, sca, &mut s);
        let mut out = Vec::new();
        out.extend_from_slice(&s.c_epi);
        for m in 0..self.scenario.num_channels() {
            if self.rate_cue[m] {
                out.push(s.cue_rate[m] - self.scenario.min_rate_cue[m]);
            }
        }
        for k in 0..self.scenario.num_groups() {
            if self.rate_group[k] {
                out.push(s.grp_rate[k] - self.scenario.min_rate_group[k]);
            }
            if self.budget_barrier[k] {
                out.push(self.scenario.max_power_group[k] - s.grp_tx[k]);
            }
        }
        if self.per_channel {
            for (pi, &(k, m, _)) in self.pairs.iter().enumerate() {
                if self.scenario.min_rate_per_channel[k][m] > T::zero() {
                    let s_k: T = real_from_usize(self.scenario.receivers_of(k));
                    out.push(s_k * q[self.tvar[pi]] - self.scenario.min_rate_per_channel[k][m]);
                }
            }
        }
        out
    }

    /// Approximated numerator/denominator pieces at `q`: the total-rate over
    /// total-power ratio, and the per-user ratio family. Group rates are the
    /// epigraph values, which never exceed the worst-receiver minorant.
    pub fn approx_ratios(&self, q: &[T], sca: &ScaParams<T>) -> (T, T, Vec<(T, T)>) {
        let mut s = self.scratch.borrow_mut();
        self.compute_values(q, sca, &mut s);
        let m_ch = self.scenario.num_channels();
        let k_gr = self.scenario.num_groups();
        let mut f_total = T::zero();
        let mut per_user = Vec::with_capacity(m_ch + k_gr);
        let mut p_total = T::zero();
        for m in 0..m_ch {
            f_total = f_total + s.cue_rate[m];
            per_user.push((
                self.scenario.weight_cue[m] * s.cue_rate[m],
                self.scenario.circuit_power_cue[m] + s.p[self.var_of_cue[m]],
            ));
            p_total = p_total + s.p[self.var_of_cue[m]];
        }
        for k in 0..k_gr {
            f_total = f_total + s.grp_rate[k];
            per_user.push((
                self.scenario.weight_group[k] * s.grp_rate[k],
                self.tau_grp_eff[k] + s.grp_tx[k],
            ));
            p_total = p_total + s.grp_tx[k];
        }
        let g_total = self.tau_total() + p_total;
        (f_total, g_total, per_user)
    }

    /// Restoration objective: the smallest normalized slack over the true
    /// rate constraints and group budgets, with the subgradient of the
    /// active term. Positive means strictly feasible. Auxiliary variables do
    /// not participate.
    pub fn true_min_slack(&self, q: &[T]) -> (T, Vec<T>) {
        let p: Vec<T> = q.iter().map(|v| v.exp2()).collect();
        let ln2: T = real(std::f64::consts::LN_2);
        let n = self.vars.len();
        let one = T::one();
        let mut best = T::infinity();
        let mut best_grad = vec![T::zero(); n];
        let consider = |slack: T, grad: Vec<T>, best: &mut T, best_grad: &mut Vec<T>| {
            if slack < *best {
                *best = slack;
                *best_grad = grad;
            }
        };

        for m in 0..self.scenario.num_channels() {
            if !self.rate_cue[m] {
                continue;
            }
            // true rate: log2(1 + sinr); d/dq = sinr/(1+sinr) * dlog2(sinr)/dq
            let (l, terms) = self.cue_log_sinr(q, &p, m);
            let sinr = l.exp2();
            let rate = (one + sinr).log2();
            let a = sinr / (one + sinr);
            let norm = self.scenario.min_rate_cue[m].max(one);
            let mut grad = vec![T::zero(); n];
            grad[self.var_of_cue[m]] = a / norm;
            for (v, share) in &terms {
                grad[*v] = grad[*v] - a * *share / norm;
            }
            consider(
                (rate - self.scenario.min_rate_cue[m]) / norm,
                grad,
                &mut best,
                &mut best_grad,
            );
        }

        for k in 0..self.scenario.num_groups() {
            let s_k: T = real_from_usize(self.scenario.receivers_of(k));
            let mut total = T::zero();
            let mut tgrad = vec![T::zero(); n];
            let mut active_any = false;
            for m in 0..self.scenario.num_channels() {
                let Some(own) = self.var_of_pair[k][m] else {
                    continue;
                };
                active_any = true;
                // worst receiver true rate on the channel
                let mut worst = T::infinity();
                let mut worst_grad = vec![T::zero(); n];
                for rcv in 0..self.scenario.receivers_of(k) {
                    let (l, terms) = self.d2d_log_sinr(q, &p, k, rcv, m);
                    let sinr = l.exp2();
                    let rate = (one + sinr).log2();
                    if rate < worst {
                        worst = rate;
                        let a = sinr / (one + sinr);
                        let mut g = vec![T::zero(); n];
                        g[own] = a;
                        for (v, share) in &terms {
                            g[*v] = g[*v] - a * *share;
                        }
                        worst_grad = g;
                    }
                }
                total = total + s_k * worst;
                for i in 0..n {
                    tgrad[i] = tgrad[i] + s_k * worst_grad[i];
                }
                if self.per_channel && self.scenario.min_rate_per_channel[k][m] > T::zero() {
                    let norm = self.scenario.min_rate_per_channel[k][m].max(one);
                    let grad: Vec<T> = worst_grad.iter().map(|v| s_k * *v / norm).collect();
                    consider(
                        (s_k * worst - self.scenario.min_rate_per_channel[k][m]) / norm,
                        grad,
                        &mut best,
                        &mut best_grad,
                    );
                }
            }
            if self.rate_group[k] && active_any {
                let norm = self.scenario.min_rate_group[k].max(one);
                let grad: Vec<T> = tgrad.iter().map(|v| *v / norm).collect();
                consider(
                    (total - self.scenario.min_rate_group[k]) / norm,
                    grad,
                    &mut best,
                    &mut best_grad,
                );
            }
            if self.budget_barrier[k] {
                let mut tx = T::zero();
                let mut grad = vec![T::zero(); n];
                let budget = self.scenario.max_power_group[k];
                for m in 0..self.scenario.num_channels() {
                    if let Some(v) = self.var_of_pair[k][m] {
                        tx = tx + p[v];
                        grad[v] = -ln2 * p[v] / budget;
                    }
                }
                consider((budget - tx) / budget, grad, &mut best, &mut best_grad);
            }
        }

        if best == T::infinity() {
            // no constraints at all
            best = T::one();
        }
        (best, best_grad)
    }
}

// ---------------------------------------------------------------------------
// Spectral projected-gradient ascent over a box
// ---------------------------------------------------------------------------

fn clamp_vec<T: Real>(q: &mut [T], lo: &[T], hi: &[T]) {
    for i in 0..q.len() {
        q[i] = q[i].max(lo[i]).min(hi[i]);
    }
}

/// Maximizes a concave function over box bounds by projected gradient ascent
/// with Barzilai-Borwein steps and an Armijo line search. The callback
/// returns `None` outside the (barrier) domain.
fn spg_ascend<T: Real>(
    f: &mut impl FnMut(&[T]) -> Option<(T, Vec<T>)>,
    precond: &impl Fn(&[T], &mut [T]),
    q0: &[T],
    lo: &[T],
    hi: &[T],
    grad_tol: T,
    max_iter: usize,
) -> Result<(Vec<T>, T, usize), PowerError> {
    let n = q0.len();
    let mut q = q0.to_vec();
    clamp_vec(&mut q, lo, hi);
    let (mut value, mut grad) = f(&q).ok_or_else(|| {
        PowerError::InnerSolverFailure("line search started outside the barrier domain".into())
    })?;
    if n == 0 {
        return Ok((q, value, 0));
    }

    let c1: T = real(1e-4);
    let mut alpha = {
        let gmax = grad.iter().fold(T::zero(), |a, g| a.max(g.abs()));
        T::one() / gmax.max(T::one())
    };
    // nonmonotone (GLL) reference window: temporary decreases are allowed as
    // long as the trial beats the worst recent value
    let window = 10usize;
    let mut recent: std::collections::VecDeque<T> = std::collections::VecDeque::new();
    recent.push_back(value);
    let mut stalls = 0usize;
    let mut flat_steps = 0usize;
    let mut iters = 0usize;

    for _ in 0..max_iter {
        iters += 1;
        // first-order stationarity on the box
        let mut pg = T::zero();
        for i in 0..n {
            let step = (q[i] + grad[i]).max(lo[i]).min(hi[i]) - q[i];
            pg = pg.max(step.abs());
        }
        if pg <= grad_tol * value.abs().max(T::one()) {
            break;
        }

        let mut dir = vec![T::zero(); n];
        let mut dinv = vec![T::one(); n];
        precond(&q, &mut dinv);
        let mut dir_norm = T::zero();
        for i in 0..n {
            dir[i] = (q[i] + alpha * dinv[i] * grad[i]).max(lo[i]).min(hi[i]) - q[i];
            dir_norm = dir_norm.max(dir[i].abs());
        }
        if dir_norm <= real(1e-16) {
            alpha = alpha * real(10.0);
            stalls += 1;
            if stalls > 5 {
                break;
            }
            continue;
        }
        let slope = grad.iter().zip(&dir).fold(T::zero(), |a, (g, d)| a + *g * *d);

        // GLL backtracking along the projected direction
        let reference = recent.iter().fold(T::infinity(), |a, v| a.min(*v));
        let mut t = T::one();
        let mut accepted = None;
        for _ in 0..60 {
            let trial: Vec<T> = (0..n).map(|i| q[i] + t * dir[i]).collect();
            if let Some((v, g)) = f(&trial) {
                if v >= reference + c1 * t * slope || v > value {
                    accepted = Some((trial, v, g));
                    break;
                }
            }
            t = t * real(0.5);
        }
        let Some((q_new, v_new, g_new)) = accepted else {
            alpha = alpha * real(0.1);
            stalls += 1;
            if stalls > 5 {
                break;
            }
            continue;
        };
        stalls = 0;

        // Barzilai-Borwein step for the next iterate
        let mut ss = T::zero();
        let mut sy = T::zero();
        for i in 0..n {
            let s = q_new[i] - q[i];
            let y = g_new[i] - grad[i];
            ss = ss + s * s;
            sy = sy + s * y;
        }
        alpha = if sy < -real::<T>(1e-300) {
            (ss / -sy).max(real(1e-12)).min(real(1e12))
        } else {
            #[cfg(feature = "solver-stats")]
            solver_stats::BB_NONCONCAVE.fetch_add(1, std::sync::atomic::Ordering::Relaxed);
            (alpha * real(10.0)).min(real(1e12))
        };

        let best_recent = recent.iter().fold(T::neg_infinity(), |a, v| a.max(*v));
        let relative_gain = (v_new - best_recent) / best_recent.abs().max(T::one());
        recent.push_back(v_new);
        if recent.len() > window {
            recent.pop_front();
        }
        q = q_new;
        value = v_new;
        grad = g_new;
        if relative_gain < real(1e-15) {
            flat_steps += 1;
            if flat_steps >= 4 {
                break;
            }
        } else {
            flat_steps = 0;
        }
    }
    Ok((q, value, iters))
}

/// In-place Cholesky factorization of a symmetric positive definite matrix
/// (row-major, lower triangle used); returns false on a nonpositive pivot.
fn cholesky_factor<T: Real>(a: &mut [T], n: usize) -> bool {
    for j in 0..n {
        let mut d = a[j * n + j];
        for k in 0..j {
            d = d - a[j * n + k] * a[j * n + k];
        }
        if d <= T::zero() || !d.is_finite() {
            return false;
        }
        let d = d.sqrt();
        a[j * n + j] = d;
        for i in j + 1..n {
            let mut v = a[i * n + j];
            for k in 0..j {
                v = v - a[i * n + k] * a[j * n + k];
            }
            a[i * n + j] = v / d;
        }
    }
    true
}

fn cholesky_solve<T: Real>(l: &[T], n: usize, b: &mut [T]) {
    for i in 0..n {
        let mut v = b[i];
        for k in 0..i {
            v = v - l[i * n + k] * b[k];
        }
        b[i] = v / l[i * n + i];
    }
    for i in (0..n).rev() {
        let mut v = b[i];
        for k in i + 1..n {
            v = v - l[k * n + i] * b[k];
        }
        b[i] = v / l[i * n + i];
    }
}

/// Projected Newton ascent for the barrier subproblem: active box bounds are
/// frozen, the reduced Newton system is solved with a regularized Cholesky
/// factorization, and a backtracking line search walks the projected arc. A
/// projected-gradient step is the fallback whenever the Newton direction is
/// rejected.
fn newton_maximize<T: Real>(
    problem: &InnerProblem<T>,
    sca: &ScaParams<T>,
    lambda: T,
    mu: T,
    q0: &[T],
    grad_tol: T,
    max_iter: usize,
) -> Result<(Vec<T>, T, usize), PowerError> {
    let (lo, hi) = problem.bounds();
    let n = q0.len();
    let mut q = q0.to_vec();
    clamp_vec(&mut q, lo, hi);
    if n == 0 {
        return Ok((q, T::zero(), 0));
    }

    let mut hess = vec![T::zero(); n * n];
    let eval_all = |q: &[T], hess: &mut [T]| -> Option<(T, Vec<T>, Vec<T>)> {
        let mut s = problem.scratch.borrow_mut();
        let v = problem.eval(q, sca, lambda, mu, &mut s)?;
        problem.hessian(q, sca, lambda, mu, &s, hess);
        Some((v, s.grad.clone(), s.slacks.clone()))
    };
    let eval_value = |q: &[T]| -> Option<(T, Vec<T>)> {
        let mut s = problem.scratch.borrow_mut();
        let v = problem.eval(q, sca, lambda, mu, &mut s)?;
        Some((v, s.slacks.clone()))
    };

    let (mut value, mut grad, mut slacks) = eval_all(&q, &mut hess).ok_or_else(|| {
        PowerError::InnerSolverFailure("Newton started outside the barrier domain".into())
    })?;

    let c1: T = real(1e-4);
    let edge: T = real(1e-12);
    let mut iters = 0usize;
    let mut reduced: Vec<T> = Vec::new();
    let mut rhs: Vec<T> = Vec::new();

    for _ in 0..max_iter {
        iters += 1;
        // projected-gradient stationarity on the box
        let mut pg = T::zero();
        for i in 0..n {
            let step = (q[i] + grad[i]).max(lo[i]).min(hi[i]) - q[i];
            pg = pg.max(step.abs());
        }
        if pg <= grad_tol * value.abs().max(T::one()) {
            break;
        }

        // free set: coordinates not pinned at an active bound
        let free: Vec<usize> = (0..n)
            .filter(|&i| {
                !((q[i] <= lo[i] + edge && grad[i] < T::zero())
                    || (q[i] >= hi[i] - edge && grad[i] > T::zero()))
            })
            .collect();
        let nf = free.len();
        let mut dir = vec![T::zero(); n];
        if nf > 0 {
            // reduced system (-H + tau I) d = g over the free coordinates
            reduced.clear();
            reduced.resize(nf * nf, T::zero());
            rhs.clear();
            rhs.resize(nf, T::zero());
            let mut max_diag = T::zero();
            for (a, &i) in free.iter().enumerate() {
                rhs[a] = grad[i];
                for (b, &j) in free.iter().enumerate() {
                    let v = -hess[i * n + j];
                    reduced[a * nf + b] = v;
                    if a == b {
                        max_diag = max_diag.max(v.abs());
                    }
                }
            }
            let mut tau = real::<T>(1e-8) * max_diag.max(T::one());
            let mut solved = false;
            for _ in 0..12 {
                let mut factor = reduced.clone();
                for a in 0..nf {
                    factor[a * nf + a] = factor[a * nf + a] + tau;
                }
                if cholesky_factor(&mut factor, nf) {
                    let mut d = rhs.clone();
                    cholesky_solve(&factor, nf, &mut d);
                    for (a, &i) in free.iter().enumerate() {
                        dir[i] = d[a];
                    }
                    solved = true;
                    break;
                }
                tau = tau * real(100.0);
            }
            if !solved {
                for &i in &free {
                    dir[i] = grad[i];
                }
            }
            // trust cap: flat coordinates (powers at the floor) make the
            // regularized direction explode; a bounded step per iteration
            // still crosses the whole box in a few rounds
            let trust: T = real(12.0);
            let dmax = dir.iter().fold(T::zero(), |a, d| a.max(d.abs()));
            if dmax > trust {
                let shrink = trust / dmax;
                for d in dir.iter_mut() {
                    *d = *d * shrink;
                }
            }
        }
        let slope = grad.iter().zip(&dir).fold(T::zero(), |a, (g, d)| a + *g * *d);
        if slope <= T::zero() {
            for d in dir.iter_mut() {
                *d = T::zero();
            }
            for &i in &free {
                dir[i] = grad[i];
            }
        }

        // backtracking along the projected arc; the fraction-to-the-boundary
        // rule refuses steps that collapse any barrier slack by more than a
        // factor of two hundred, keeping the iterates numerically interior
        let boundary_fraction: T = real(5e-3);
        let mut accepted = None;
        let mut t = T::one();
        for _ in 0..50 {
            let trial: Vec<T> = (0..n)
                .map(|i| (q[i] + t * dir[i]).max(lo[i]).min(hi[i]))
                .collect();
            let pred = grad
                .iter()
                .zip(&trial)
                .zip(&q)
                .fold(T::zero(), |a, ((g, t_i), q_i)| a + *g * (*t_i - *q_i));
            if pred > T::zero() {
                if let Some((v, trial_slacks)) = eval_value(&trial) {
                    let interior = trial_slacks
                        .iter()
                        .zip(&slacks)
                        .all(|(new_s, old_s)| *new_s >= boundary_fraction * *old_s);
                    if interior && v >= value + c1 * pred {
                        accepted = Some((trial, v));
                        break;
                    }
                }
            }
            t = t * real(0.5);
        }
        let Some((q_new, _)) = accepted else {
            break; // no ascent step exists at fp resolution
        };
        q = q_new;
        let Some((v_new, g_new, s_new)) = eval_all(&q, &mut hess) else {
            break;
        };
        let gain = (v_new - value) / value.abs().max(T::one());
        value = v_new;
        grad = g_new;
        slacks = s_new;
        if gain < real(1e-15) {
            break;
        }
    }
    Ok((q, value, iters))
}

/// Barrier continuation: solves the Dinkelbach subproblem at `lambda` for a
/// decreasing barrier weight, warm-starting each stage. The full schedule is
/// only needed when the start point is far from the optimum (the first
/// subproblem of an approximation round); warm-started re-solves jump to the
/// final stage.
fn barrier_solve<T: Real>(
    problem: &InnerProblem<T>,
    sca: &ScaParams<T>,
    lambda: T,
    q_start: &[T],
    config: &SolverConfig<T>,
    full_schedule: bool,
) -> Result<Vec<T>, PowerError> {
    let mut q = q_start.to_vec();
    // the max-min gap constraints move with lambda; restore strict interior
    problem.project_epigraph(&mut q, sca, lambda);
    if !problem.has_barrier_constraints() {
        let (qq, _, _) = newton_maximize(
            problem,
            sca,
            lambda,
            T::zero(),
            &q,
            config.inner_grad_tol,
            config.inner_max_iter,
        )?;
        return Ok(qq);
    }
    if problem
        .value_and_grad(&q, sca, lambda, T::zero())
        .is_none()
    {
        return Err(PowerError::Infeasible);
    }
    // the barrier weight tracks the (stable) aggregate rate scale; scaling by
    // the Dinkelbach objective would collapse mu as the gap goes to zero
    let (f0, _, _) = problem.approx_ratios(&q, sca);
    let scale = f0.abs().max(T::one());
    let stages: &[f64] = if full_schedule {
        &[1e-2, 1e-4, 1e-6]
    } else {
        &[1e-6]
    };
    for (i, &factor) in stages.iter().enumerate() {
        let mu = scale * real(factor);
        let tol = if i + 1 == stages.len() {
            config.inner_grad_tol
        } else {
            config.inner_grad_tol * real(100.0)
        };
        let (qq, _, _) =
            newton_maximize(problem, sca, lambda, mu, &q, tol, config.inner_max_iter)?;
        q = qq;
    }
    Ok(q)
}

/// Restores strict feasibility by maximizing the smallest normalized true
/// slack from a handful of deterministic starting points.
fn restore_feasible<T: Real>(
    problem: &InnerProblem<T>,
    scenario: &Scenario<T>,
    assignment: &Assignment,
    config: &SolverConfig<T>,
) -> Result<Vec<T>, PowerError> {
    let margin: T = real(1e-6);
    let starts: Vec<f64> = vec![1.0 - 1e-6, 0.5, 0.1, 0.01];
    for scale in starts {
        let mut powers = PowerAllocation::uniform_split(scenario, assignment);
        let s: T = real(scale);
        for p in powers.cue.iter_mut() {
            *p = *p * s;
        }
        for row in powers.group.iter_mut() {
            for p in row.iter_mut() {
                *p = *p * s;
            }
        }
        let q0 = problem.raw_from_powers(&powers);
        let (slack0, _) = problem.true_min_slack(&q0);
        if slack0 >= margin {
            return Ok(q0);
        }
        let mut f = |x: &[T]| Some(problem.true_min_slack(x));
        let identity = |_: &[T], d: &mut [T]| {
            for v in d.iter_mut() {
                *v = T::one();
            }
        };
        let (lo, hi) = problem.bounds();
        let (q, slack, _) = spg_ascend(
            &mut f,
            &identity,
            &q0,
            lo,
            hi,
            config.inner_grad_tol,
            config.inner_max_iter,
        )?;
        if slack >= margin {
            return Ok(q);
        }
    }
    Err(PowerError::Infeasible)
}

/// Solves the concave subproblem at a fixed Dinkelbach parameter and returns
/// the resulting power allocation.
pub fn solve_inner<T: Real>(
    lambda: T,
    sca: &ScaParams<T>,
    assignment: &Assignment,
    gains: &GainTable<T>,
    scenario: &Scenario<T>,
    objective: Objective,
    config: &SolverConfig<T>,
) -> Result<PowerAllocation<T>, PowerError> {
    let problem = InnerProblem::new(scenario, gains, assignment, objective, RateEnforcement::Full)?;
    let mut start = PowerAllocation::uniform_split(scenario, assignment);
    shrink_multi_channel_rows(&mut start, assignment, real(1.0 - 1e-6));
    let mut q0 = problem.raw_from_powers(&start);
    let (slack, _) = problem.true_min_slack(&q0);
    if slack <= T::zero() {
        q0 = restore_feasible(&problem, scenario, assignment, config)?;
    }
    problem.project_epigraph(&mut q0, sca, lambda);
    let q = barrier_solve(&problem, sca, lambda, &q0, config, true)?;
    Ok(problem.powers_from_q(&q))
}

fn shrink_multi_channel_rows<T: Real>(
    powers: &mut PowerAllocation<T>,
    assignment: &Assignment,
    factor: T,
) {
    for k in 0..assignment.num_groups() {
        if assignment.row_sum(k) >= 2 {
            for p in powers.group[k].iter_mut() {
                *p = *p * factor;
            }
        }
    }
}

/// Convergence bookkeeping for one power solve.
#[derive(Debug, Clone, Serialize)]
pub struct Diagnostics {
    pub sca_iterations: usize,
    pub dinkelbach_total: usize,
    /// Mean Dinkelbach rounds per fractional subproblem.
    pub dinkelbach_mean: f64,
    /// Lambda trajectory of the final subproblem.
    pub lambda_trace: Vec<f64>,
    /// True objective after each outer approximation round.
    pub objective_trace: Vec<f64>,
}

impl Diagnostics {
    /// Structured text form for convergence plots.
    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("diagnostics serialize")
    }
}

/// Power solve result: the allocation, its true metrics and diagnostics.
#[derive(Debug, Clone)]
pub struct PowerSolveOutput<T> {
    pub powers: PowerAllocation<T>,
    pub metrics: Metrics<T>,
    pub diagnostics: Diagnostics,
}

fn true_objective<T: Real>(metrics: &Metrics<T>, objective: Objective) -> T {
    match objective {
        Objective::Gee => metrics.gee,
        Objective::Mee => metrics.wee,
    }
}

/// Maximizes the selected efficiency objective over the transmit powers for
/// a fixed assignment, enforcing every rate floor.
pub fn optimize_power<T: Real>(
    assignment: &Assignment,
    gains: &GainTable<T>,
    scenario: &Scenario<T>,
    objective: Objective,
    config: &SolverConfig<T>,
) -> Result<PowerSolveOutput<T>, PowerError> {
    optimize_power_with(
        assignment,
        gains,
        scenario,
        objective,
        config,
        RateEnforcement::Full,
    )
}

/// As [`optimize_power`], with explicit control over which rate floors the
/// subproblem enforces (baselines evaluate partial assignments).
pub fn optimize_power_with<T: Real>(
    assignment: &Assignment,
    gains: &GainTable<T>,
    scenario: &Scenario<T>,
    objective: Objective,
    config: &SolverConfig<T>,
    enforcement: RateEnforcement,
) -> Result<PowerSolveOutput<T>, PowerError> {
    let problem = InnerProblem::new(scenario, gains, assignment, objective, enforcement)?;

    let mut start = PowerAllocation::uniform_split(scenario, assignment);
    shrink_multi_channel_rows(&mut start, assignment, real(1.0 - 1e-6));
    let mut q = problem.raw_from_powers(&start);
    let (slack, _) = problem.true_min_slack(&q);
    if slack <= T::zero() {
        q = restore_feasible(&problem, scenario, assignment, config)?;
    }

    let mut best_powers = problem.powers_from_q(&q);
    let mut best_metrics = model::metrics(assignment, &best_powers, gains, scenario);
    let mut best_obj = true_objective(&best_metrics, objective);

    let mut diagnostics = Diagnostics {
        sca_iterations: 0,
        dinkelbach_total: 0,
        dinkelbach_mean: 0.0,
        lambda_trace: Vec::new(),
        objective_trace: vec![best_obj.to_f64().unwrap_or(f64::NAN)],
    };

    let tiny: T = real(1e-12);
    for _ in 0..config.sca_max_iter {
        // anchor at the incumbent and re-solve the fractional program
        let anchor_powers = PowerAllocation {
            cue: q_powers_cue(&problem, &q, scenario.num_channels()),
            group: q_powers_group(&problem, &q, scenario),
        };
        let sca = ScaParams::at_anchor(assignment, &anchor_powers, gains, scenario);
        // fresh anchors move the minorants; pull the epigraph variables back
        // inside before the first subproblem of the round
        problem.project_epigraph(&mut q, &sca, T::zero());

        let mut warm = q.clone();
        let mut first_solve = true;
        let outcome = match objective {
            Objective::Gee => dinkelbach(
                |lambda| {
                    let sol = barrier_solve(&problem, &sca, lambda, &warm, config, first_solve)?;
                    first_solve = false;
                    warm = sol.clone();
                    let (f, g, _) = problem.approx_ratios(&sol, &sca);
                    Ok(RatioEval {
                        x: sol,
                        numerator: f,
                        denominator: g,
                    })
                },
                config.dinkelbach_eps,
                config.dinkelbach_max_iter,
            )?,
            Objective::Mee => generalized_dinkelbach(
                |lambda| {
                    let sol = barrier_solve(&problem, &sca, lambda, &warm, config, first_solve)?;
                    first_solve = false;
                    warm = sol.clone();
                    let (_, _, per_user) = problem.approx_ratios(&sol, &sca);
                    Ok(MultiRatioEval {
                        x: sol,
                        ratios: per_user,
                    })
                },
                config.dinkelbach_eps,
                config.dinkelbach_max_iter,
            )?,
        };

        diagnostics.sca_iterations += 1;
        diagnostics.dinkelbach_total += outcome.iterations;
        diagnostics.lambda_trace = outcome
            .lambda_trace
            .iter()
            .map(|l| l.to_f64().unwrap_or(f64::NAN))
            .collect();

        let q_new = outcome.x;
        let powers_new = problem.powers_from_q(&q_new);
        let metrics_new = model::metrics(assignment, &powers_new, gains, scenario);
        let obj_new = true_objective(&metrics_new, objective);
        diagnostics
            .objective_trace
            .push(obj_new.to_f64().unwrap_or(f64::NAN));

        if obj_new < best_obj - tiny * best_obj.abs().max(T::one()) {
            // inexact inner solve failed to improve; keep the incumbent
            break;
        }
        let gain = (obj_new - best_obj) / best_obj.abs().max(tiny);
        q = q_new;
        best_powers = powers_new;
        best_metrics = metrics_new;
        best_obj = obj_new;
        if gain < config.sca_rel_tol {
            break;
        }
    }

    diagnostics.dinkelbach_mean = if diagnostics.sca_iterations > 0 {
        diagnostics.dinkelbach_total as f64 / diagnostics.sca_iterations as f64
    } else {
        0.0
    };

    Ok(PowerSolveOutput {
        powers: best_powers,
        metrics: best_metrics,
        diagnostics,
    })
}

fn q_powers_cue<T: Real>(problem: &InnerProblem<T>, q: &[T], m_ch: usize) -> Vec<T> {
    let mut out = vec![T::zero(); m_ch];
    for (i, var) in problem.variables().iter().enumerate() {
        if let PowerVar::Cue(m) = *var {
            out[m] = q[i].exp2();
        }
    }
    out
}

fn q_powers_group<T: Real>(problem: &InnerProblem<T>, q: &[T], scenario: &Scenario<T>) -> Vec<Vec<T>> {
    let mut out = vec![vec![T::zero(); scenario.num_channels()]; scenario.num_groups()];
    for (i, var) in problem.variables().iter().enumerate() {
        if let PowerVar::Group(k, m) = *var {
            out[k][m] = q[i].exp2();
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario::{Group, Point};
    use approx::assert_relative_eq;

    #[test]
    fn sca_params_reference_values() {
        let (a, b) = sca_params(1.0f64).unwrap();
        assert_relative_eq!(a, 0.5, max_relative = 1e-12);
        assert_relative_eq!(b, 1.0, max_relative = 1e-12);

        let (a, b) = sca_params(3.0f64).unwrap();
        assert_relative_eq!(a, 0.75, max_relative = 1e-12);
        assert_relative_eq!(b, 2.0 - 0.75 * 3f64.log2(), max_relative = 1e-12);
        assert_relative_eq!(b, 0.8112781244591328, max_relative = 1e-9);

        assert!(sca_params(0.0f64).is_err());
        assert!(sca_params(-1.0f64).is_err());
    }

    #[test]
    fn sca_minorant_is_tight_at_anchor() {
        for gamma_bar in [0.01f64, 0.5, 1.0, 7.3, 1234.5] {
            let (a, b) = sca_params(gamma_bar).unwrap();
            let lhs = a * gamma_bar.log2() + b;
            let rhs = (1.0 + gamma_bar).log2();
            assert!((lhs - rhs).abs() <= 1e-12, "anchor {gamma_bar}");
        }
    }

    #[test]
    fn dinkelbach_linear_fractional_oracle() {
        // max (2x+1)/(x+1) over [0,1]: increasing ratio, optimum x=1, 3/2
        let inner = |lambda: f64| {
            let x = if 2.0 - lambda >= 0.0 { 1.0 } else { 0.0 };
            Ok(RatioEval {
                x,
                numerator: 2.0 * x + 1.0,
                denominator: x + 1.0,
            })
        };
        let out = dinkelbach(inner, 1e-9, 50).unwrap();
        assert_relative_eq!(out.lambda, 1.5, epsilon = 1e-6);
        assert_relative_eq!(out.x, 1.0, epsilon = 1e-12);
        for w in out.lambda_trace.windows(2) {
            assert!(w[1] >= w[0] - 1e-12);
        }
    }

    #[test]
    fn dinkelbach_equal_ratio_is_identity() {
        // f = g: ratio is one everywhere
        let inner = |lambda: f64| {
            let x = 0.3;
            let v = x + 1.0;
            let _ = lambda;
            Ok(RatioEval {
                x,
                numerator: v,
                denominator: v,
            })
        };
        let out = dinkelbach(inner, 1e-9, 50).unwrap();
        assert_relative_eq!(out.lambda, 1.0, epsilon = 1e-9);
    }

    #[test]
    fn dinkelbach_affine_over_constant() {
        // max x/1 on [0,1] -> 1 at x=1
        let inner = |lambda: f64| {
            let _ = lambda;
            Ok(RatioEval {
                x: 1.0,
                numerator: 1.0,
                denominator: 1.0,
            })
        };
        let out = dinkelbach(inner, 1e-9, 50).unwrap();
        assert_relative_eq!(out.lambda, 1.0, epsilon = 1e-9);
    }

    #[test]
    fn generalized_dinkelbach_symmetric_max_min() {
        // ratios x and 1-x over [0,1]: max-min at x = 1/2, value 1/2.
        // inner max of min(x, 1-x) - lambda is at x = 1/2 regardless.
        let inner = |lambda: f64| {
            let x = 0.5;
            let _ = lambda;
            Ok(MultiRatioEval {
                x,
                ratios: vec![(x, 1.0), (1.0 - x, 1.0)],
            })
        };
        let out = generalized_dinkelbach(inner, 1e-9, 50).unwrap();
        assert_relative_eq!(out.lambda, 0.5, epsilon = 1e-9);
        assert_relative_eq!(out.x, 0.5, epsilon = 1e-12);
    }

    #[test]
    fn generalized_dinkelbach_single_and_duplicated_ratios() {
        let single = |lambda: f64| {
            let x = if 2.0 - lambda >= 0.0 { 1.0 } else { 0.0 };
            Ok(RatioEval {
                x,
                numerator: 2.0 * x + 1.0,
                denominator: x + 1.0,
            })
        };
        let multi = |lambda: f64| {
            let x = if 2.0 - lambda >= 0.0 { 1.0 } else { 0.0 };
            let f = 2.0 * x + 1.0;
            let g = x + 1.0;
            Ok(MultiRatioEval {
                x,
                ratios: vec![(f, g), (f, g)],
            })
        };
        let a = dinkelbach(single, 1e-9, 50).unwrap();
        let b = generalized_dinkelbach(multi, 1e-9, 50).unwrap();
        assert_relative_eq!(a.lambda, b.lambda, epsilon = 1e-12);
    }

    /// One CUE, no groups, exact 1-D structure: h = sigma^2 = 1 so the SINR
    /// equals the power.
    fn single_cue_scenario() -> (Scenario<f64>, GainTable<f64>, Assignment) {
        let scenario = Scenario {
            cell_radius: 100.0,
            groups: vec![Group {
                head: Point::new(1.0, 0.0),
                receivers: vec![Point::new(2.0, 0.0)],
            }],
            cue_positions: vec![Point::new(10.0, 0.0)],
            noise_power: 1.0,
            circuit_power_cue: vec![1.0],
            circuit_power_group: vec![1.0],
            max_power_cue: vec![4.0],
            max_power_group: vec![1.0],
            min_rate_cue: vec![0.0],
            min_rate_group: vec![0.0],
            min_rate_per_channel: vec![vec![0.0]],
            split_factor: 1,
            reuse_factor: 1,
            weight_cue: vec![1.0],
            weight_group: vec![1.0],
        };
        let gains = GainTable::from_parts(
            vec![1.0],
            vec![vec![0.0]],
            vec![vec![vec![vec![1.0]]]],
            vec![vec![vec![0.0]]],
        )
        .unwrap();
        // group stays unassigned: pure single-CUE problem
        let assignment = Assignment::empty(1, 1);
        (scenario, gains, assignment)
    }

    #[test]
    fn solve_inner_matches_one_dimensional_calculus() {
        // maximize a*log2(p) + b - lambda (tau + p) anchored at p = 1:
        // a = 1/2, and with lambda = 1/(2 ln 2) the optimum of the true
        // objective log2(1+p) - lambda (1+p) also sits at p = 1.
        let (scenario, gains, assignment) = single_cue_scenario();
        let config = SolverConfig::<f64>::default();
        let mut anchor = PowerAllocation::zeros(1, 1);
        anchor.cue[0] = 1.0;
        let sca = ScaParams::at_anchor(&assignment, &anchor, &gains, &scenario);
        let lambda = 1.0 / (2.0 * std::f64::consts::LN_2);
        let powers =
            solve_inner(lambda, &sca, &assignment, &gains, &scenario, Objective::Gee, &config)
                .unwrap();
        assert_relative_eq!(powers.cue[0], 1.0, max_relative = 1e-4);
    }

    #[test]
    fn solve_inner_lambda_zero_saturates_budgets() {
        let (scenario, gains, assignment) = single_cue_scenario();
        let config = SolverConfig::<f64>::default();
        let mut anchor = PowerAllocation::zeros(1, 1);
        anchor.cue[0] = 4.0;
        let sca = ScaParams::at_anchor(&assignment, &anchor, &gains, &scenario);
        let powers =
            solve_inner(0.0, &sca, &assignment, &gains, &scenario, Objective::Gee, &config)
                .unwrap();
        // objective at the solution must be at least the budget corner value
        let problem = InnerProblem::new(
            &scenario,
            &gains,
            &assignment,
            Objective::Gee,
            RateEnforcement::Full,
        )
        .unwrap();
        let q = problem.q_from_powers(&powers, &sca);
        let (v_sol, _) = problem.value_and_grad(&q, &sca, 0.0, 0.0).unwrap();
        let mut corner = PowerAllocation::zeros(1, 1);
        corner.cue[0] = scenario.max_power_cue[0];
        let qc = problem.q_from_powers(&corner, &sca);
        let (v_corner, _) = problem.value_and_grad(&qc, &sca, 0.0, 0.0).unwrap();
        assert!(v_sol >= v_corner - 1e-8, "{v_sol} vs {v_corner}");
    }

    #[test]
    fn solve_inner_empty_assignment_keeps_group_powers_zero() {
        let (scenario, gains, assignment) = single_cue_scenario();
        let config = SolverConfig::<f64>::default();
        let mut anchor = PowerAllocation::zeros(1, 1);
        anchor.cue[0] = 1.0;
        let sca = ScaParams::at_anchor(&assignment, &anchor, &gains, &scenario);
        let powers =
            solve_inner(0.1, &sca, &assignment, &gains, &scenario, Objective::Gee, &config)
                .unwrap();
        assert_eq!(powers.group[0][0], 0.0);
    }

    /// One CUE and one unicast group with zero cross gains: the GEE problem
    /// decouples into two independent 1-D problems.
    fn decoupled_scenario() -> (Scenario<f64>, GainTable<f64>, Assignment) {
        let (mut scenario, _, _) = single_cue_scenario();
        scenario.max_power_cue = vec![4.0];
        scenario.max_power_group = vec![4.0];
        let gains = GainTable::from_parts(
            vec![1.0],
            vec![vec![0.0]],
            vec![vec![vec![vec![1.0]]]],
            vec![vec![vec![0.0]]],
        )
        .unwrap();
        let mut assignment = Assignment::empty(1, 1);
        assignment.set(0, 0, true);
        (scenario, gains, assignment)
    }

    #[test]
    fn optimize_power_decoupled_matches_calculus() {
        // Both users see h/sigma^2 = 1 with tau = 1 each and unit receiver
        // count, so GEE = (log2(1+pc) + log2(1+pg)) / (2 + pc + pg).
        // By symmetry the optimum has pc = pg = p*, with p* solving
        // d/dp [2 log2(1+p) / (2 + 2p)] = 0, i.e.
        // (1+p) ln(1+p) = (2/2 + p) ... computed numerically below by a grid.
        let (scenario, gains, assignment) = decoupled_scenario();
        let config = SolverConfig::<f64>::default();
        let out = optimize_power(&assignment, &gains, &scenario, Objective::Gee, &config).unwrap();

        // dense 1-D oracle over the symmetric axis and a 2-D refinement
        let gee = |pc: f64, pg: f64| {
            ((1.0 + pc).log2() + (1.0 + pg).log2()) / (2.0 + pc + pg)
        };
        let mut best = 0.0f64;
        let n = 4000;
        for i in 0..=n {
            for j in 0..=n / 40 {
                let pc = 4.0 * i as f64 / n as f64;
                let pg = 4.0 * j as f64 / (n / 40) as f64;
                best = best.max(gee(pc, pg));
            }
        }
        assert!(
            out.metrics.gee >= 0.999 * best,
            "solver {} vs grid oracle {}",
            out.metrics.gee,
            best
        );
    }

    #[test]
    fn optimize_power_never_worse_than_uniform_split() {
        let (scenario, gains, assignment) = decoupled_scenario();
        let config = SolverConfig::<f64>::default();
        let out = optimize_power(&assignment, &gains, &scenario, Objective::Gee, &config).unwrap();
        let uniform = PowerAllocation::uniform_split(&scenario, &assignment);
        let m0 = model::metrics(&assignment, &uniform, &gains, &scenario);
        assert!(out.metrics.gee >= m0.gee - 1e-9);
        // the recorded true-objective trajectory is nondecreasing
        for w in out.diagnostics.objective_trace.windows(2) {
            assert!(w[1] >= w[0] - 1e-9, "{:?}", out.diagnostics.objective_trace);
        }
    }

    #[test]
    fn optimize_power_flags_uncovered_group_as_infeasible() {
        let (mut scenario, gains, _) = single_cue_scenario();
        scenario.min_rate_group = vec![0.5];
        let assignment = Assignment::empty(1, 1);
        let config = SolverConfig::<f64>::default();
        let err = optimize_power(&assignment, &gains, &scenario, Objective::Gee, &config)
            .unwrap_err();
        assert!(matches!(err, PowerError::Infeasible));
    }

    #[test]
    fn optimize_power_respects_power_budgets_and_support() {
        let (scenario, gains, assignment) = decoupled_scenario();
        let config = SolverConfig::<f64>::default();
        let out = optimize_power(&assignment, &gains, &scenario, Objective::Gee, &config).unwrap();
        let report = model::check_feasible(&assignment, &out.powers, &gains, &scenario);
        assert!(report.power_budget_cue);
        assert!(report.power_budget_group);
        assert!(report.nonnegative);
    }

    #[test]
    fn optimize_power_mee_runs_on_decoupled_instance() {
        let (scenario, gains, assignment) = decoupled_scenario();
        let config = SolverConfig::<f64>::default();
        let out = optimize_power(&assignment, &gains, &scenario, Objective::Mee, &config).unwrap();
        assert!(out.metrics.wee > 0.0);
        // max-min never exceeds the GEE optimum's weakest user by definition
        let report = model::check_feasible(&assignment, &out.powers, &gains, &scenario);
        assert!(report.all(), "{report:?}");
    }

    #[test]
    fn analytic_gradient_and_hessian_match_finite_differences() {
        let (scenario, gains, assignment) = decoupled_scenario();
        let problem = InnerProblem::new(
            &scenario,
            &gains,
            &assignment,
            Objective::Gee,
            RateEnforcement::Full,
        )
        .unwrap();
        let anchor = PowerAllocation::uniform_split(&scenario, &assignment);
        let sca = ScaParams::at_anchor(&assignment, &anchor, &gains, &scenario);
        let q = problem.q_from_powers(&anchor, &sca);
        let n = q.len();
        let lambda = 0.3;
        let mu = 1e-3;
        let (_, grad, hess) = problem.value_grad_hessian(&q, &sca, lambda, mu).unwrap();
        let h = 1e-6;
        for i in 0..n {
            let mut qp = q.clone();
            qp[i] += h;
            let mut qm = q.clone();
            qm[i] -= h;
            let (vp, gp) = problem.value_and_grad(&qp, &sca, lambda, mu).unwrap();
            let (vm, gm) = problem.value_and_grad(&qm, &sca, lambda, mu).unwrap();
            let fd = (vp - vm) / (2.0 * h);
            assert_relative_eq!(grad[i], fd, max_relative = 1e-4, epsilon = 1e-8);
            for j in 0..n {
                let fd_h = (gp[j] - gm[j]) / (2.0 * h);
                assert_relative_eq!(hess[j * n + i], fd_h, max_relative = 1e-3, epsilon = 1e-6);
            }
        }
    }
}
