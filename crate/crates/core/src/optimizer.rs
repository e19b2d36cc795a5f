//! Closed-form offloading decisions, multiplier bounds, server-share
//! allocation and the admission loop.
//!
//! The program being solved is
//!
//! ```text
//! min  sum_i E_i(alpha_i)
//! s.t. sum_i alpha_i * gamma_i / (T - alpha_i * k_i) <= 1,   0 <= alpha_i <= 1
//! ```
//!
//! where `k_i` is the communication delay coefficient and `gamma_i` the
//! server time of the whole task. Each constraint term is convex and
//! increasing in `alpha_i`, the objective is linear, so the stationary point
//! of the Lagrangian is the global optimum. For a fixed multiplier `nu` the
//! per-user minimiser is
//!
//! ```text
//! alpha_i(nu) = min(u_i, (T - sqrt(nu * gamma_i * T / s_i))^+ / k_i)
//! ```
//!
//! with `s_i = -(E'_tr + E'_u)` the marginal saving and
//! `u_i = min(1, (1 - delta) * T / k_i)` the upper clip. `alpha_i(nu)` is
//! constant outside `[nu_up_i, nu_zero_i]`, so the server load is a
//! piecewise function of `nu` with at most `2N` breakpoints, and on each
//! piece it has the form `A - P + Q / sqrt(nu)`. [`solve`] locates the piece
//! where the load crosses 1 and solves for `nu` exactly.

use std::cmp::Ordering;
use std::fmt;

use thiserror::Error;

use crate::model::{Scenario, UserDevice, UserId};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SolveError {
    #[error("user {0} fails the energy gate; its share is fixed at 0")]
    NotGated(UserId),
    #[error("user {0} puts no load on the server; its multiplier bound is unbounded")]
    ZeroGamma(UserId),
    #[error("no user passes the energy gate")]
    NoCandidates,
    #[error("user {user}: share {alpha} leaves no execution time within the delay budget")]
    NoExecutionBudget { user: UserId, alpha: f64 },
    #[error("share vector has {got} entries for {expected} users")]
    LengthMismatch { expected: usize, got: usize },
    #[error(
        "admission loop exceeded {limit} drops (nu = {nu}, load = {load}, dropped = {dropped})"
    )]
    IterationLimit {
        limit: usize,
        nu: f64,
        load: f64,
        dropped: usize,
    },
    #[error("candidate multipliers exhausted with server load {load} (nu = {nu})")]
    CandidatesExhausted { nu: f64, load: f64 },
    #[error("invalid scenario: {0}")]
    InvalidScenario(String),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverOptions {
    pub load_tolerance: f64,
    /// Fraction of `T_max` always left for server execution.
    pub execution_margin: f64,
    /// Cap on dropped users; `None` means the number of users.
    pub max_drop_iterations: Option<usize>,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            load_tolerance: 1e-9,
            execution_margin: 1e-6,
            max_drop_iterations: None,
        }
    }
}

impl SolverOptions {
    pub fn validate(&self) -> Result<(), SolveError> {
        if !(self.load_tolerance > 0.0) {
            return Err(SolveError::InvalidScenario(format!(
                "load_tolerance must be positive, got {}",
                self.load_tolerance
            )));
        }
        if !(0.0..1.0).contains(&self.execution_margin) {
            return Err(SolveError::InvalidScenario(format!(
                "execution_margin must lie in [0, 1), got {}",
                self.execution_margin
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum LoadStatus {
    Underloaded,
    FullyLoaded,
    Overloaded,
}

impl LoadStatus {
    pub fn as_str(&self) -> &'static str {
        match self {
            LoadStatus::Underloaded => "underloaded",
            LoadStatus::FullyLoaded => "fully_loaded",
            LoadStatus::Overloaded => "overloaded",
        }
    }
}

impl fmt::Display for LoadStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for LoadStatus {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "underloaded" => Ok(LoadStatus::Underloaded),
            "fully_loaded" => Ok(LoadStatus::FullyLoaded),
            "overloaded" => Ok(LoadStatus::Overloaded),
            other => Err(format!("unknown load status `{other}`")),
        }
    }
}

/// Offloading decision for every user of a scenario, indexed like
/// `Scenario::users`.
#[derive(Debug, Clone, PartialEq)]
pub struct OffloadSolution {
    pub alpha: Vec<f64>,
    pub nu: f64,
    pub psi: Vec<f64>,
    pub rho: Vec<f64>,
    pub status: LoadStatus,
    /// Gated users whose share was driven to zero, in drop order.
    pub dropped: Vec<UserId>,
    pub server_load: f64,
}

/// Per-user constants of the program at a given delay budget.
#[derive(Debug, Clone, Copy)]
struct Terms {
    k: f64,
    gamma: f64,
    saving: f64,
}

impl Terms {
    fn new(scenario: &Scenario, u: &UserDevice) -> Self {
        Terms {
            k: u.comm_delay_coeff(),
            gamma: u.gamma(&scenario.server),
            saving: u.marginal_saving(),
        }
    }
}

fn upper_clip(t_max: f64, k: f64, margin: f64) -> f64 {
    if k <= 0.0 {
        1.0
    } else {
        (t_max * (1.0 - margin) / k).min(1.0)
    }
}

fn closed_form(t_max: f64, terms: Terms, nu: f64, margin: f64) -> f64 {
    let Terms { k, gamma, saving } = terms;
    let back_off = (nu * gamma * t_max / saving).sqrt();
    let unclipped = (t_max - back_off).max(0.0) / k;
    unclipped.min(upper_clip(t_max, k, margin))
}

/// True iff offloading lowers the device's energy at the margin,
/// `-E'_tr - E'_u > 0`.
pub fn energy_gate(u: &UserDevice) -> bool {
    u.marginal_saving() > 0.0
}

/// Optimal share of a gated user for multiplier `nu`.
///
/// `min(1, (T - sqrt(nu * gamma * T / s))^+ / k)`, additionally capped at
/// `(1 - delta) * T / k` so some execution time always remains.
pub fn alpha_closed_form(
    scenario: &Scenario,
    user: &UserDevice,
    t_max: f64,
    nu: f64,
    opts: &SolverOptions,
) -> Result<f64, SolveError> {
    if !energy_gate(user) {
        return Err(SolveError::NotGated(user.id));
    }
    Ok(closed_form(
        t_max,
        Terms::new(scenario, user),
        nu,
        opts.execution_margin,
    ))
}

/// Multiplier at which the user's unclipped share reaches exactly 1,
/// `((T - k)^+)^2 * s / (gamma * T)`.
pub fn nu_hat(scenario: &Scenario, user: &UserDevice, t_max: f64) -> Result<f64, SolveError> {
    if !energy_gate(user) {
        return Err(SolveError::NotGated(user.id));
    }
    let terms = Terms::new(scenario, user);
    if terms.gamma <= 0.0 {
        return Err(SolveError::ZeroGamma(user.id));
    }
    let slack = (t_max - terms.k).max(0.0);
    Ok(slack * slack * terms.saving / (terms.gamma * t_max))
}

/// Smallest `nu_hat` over gated users: no overloaded optimum has a smaller
/// multiplier.
pub fn nu_lower_bound(scenario: &Scenario) -> Result<f64, SolveError> {
    let mut best: Option<f64> = None;
    for u in scenario.users.iter().filter(|u| energy_gate(u)) {
        let v = nu_hat(scenario, u, scenario.delay_budget)?;
        best = Some(best.map_or(v, |b: f64| b.min(v)));
    }
    best.ok_or(SolveError::NoCandidates)
}

fn check_len(scenario: &Scenario, alpha: &[f64]) -> Result<(), SolveError> {
    if alpha.len() != scenario.users.len() {
        return Err(SolveError::LengthMismatch {
            expected: scenario.users.len(),
            got: alpha.len(),
        });
    }
    Ok(())
}

/// Server share each user needs so its execution fits the residual budget,
/// `alpha * gamma / (T - alpha * k)`.
pub fn allocate_rho(scenario: &Scenario, alpha: &[f64]) -> Result<Vec<f64>, SolveError> {
    check_len(scenario, alpha)?;
    let t_max = scenario.delay_budget;
    scenario
        .users
        .iter()
        .zip(alpha)
        .map(|(u, &a)| {
            if a == 0.0 {
                return Ok(0.0);
            }
            let budget = t_max - a * u.comm_delay_coeff();
            if !(budget > 0.0) {
                return Err(SolveError::NoExecutionBudget {
                    user: u.id,
                    alpha: a,
                });
            }
            Ok(a * u.gamma(&scenario.server) / budget)
        })
        .collect()
}

/// Fraction of server capacity demanded by `alpha`; feasible iff `<= 1`.
pub fn server_load(scenario: &Scenario, alpha: &[f64]) -> Result<f64, SolveError> {
    Ok(allocate_rho(scenario, alpha)?.iter().sum())
}

/// Lagrangian `sum E_i + nu * (load - 1) - sum psi_i * alpha_i`.
pub fn lagrangian(
    scenario: &Scenario,
    alpha: &[f64],
    nu: f64,
    psi: &[f64],
) -> Result<f64, SolveError> {
    check_len(scenario, alpha)?;
    check_len(scenario, psi)?;
    let load = server_load(scenario, alpha)?;
    let mut value = nu * (load - 1.0);
    for ((u, &a), &p) in scenario.users.iter().zip(alpha).zip(psi) {
        // linear in alpha, evaluated through the slopes so alpha may leave [0, 1]
        value += -u.energy_slope_local() + a * (u.energy_slope_local() + u.energy_slope_transmit());
        value -= p * a;
    }
    Ok(value)
}

/// A gated user with its threshold multipliers.
#[derive(Debug, Clone, Copy)]
struct Active {
    index: usize,
    terms: Terms,
    upper: f64,
    /// Share stays at `upper` for `nu <= nu_up`.
    nu_up: f64,
    /// Share is 0 for `nu >= nu_zero`.
    nu_zero: f64,
}

impl Active {
    fn new(index: usize, terms: Terms, t_max: f64, margin: f64) -> Self {
        let upper = upper_clip(t_max, terms.k, margin);
        let (nu_up, nu_zero) = if terms.gamma > 0.0 {
            let slack = t_max - upper * terms.k;
            (
                slack * slack * terms.saving / (terms.gamma * t_max),
                t_max * terms.saving / terms.gamma,
            )
        } else {
            (f64::INFINITY, f64::INFINITY)
        };
        Active {
            index,
            terms,
            upper,
            nu_up,
            nu_zero,
        }
    }

    fn load_term(&self, alpha: f64, t_max: f64) -> f64 {
        if alpha == 0.0 {
            0.0
        } else {
            alpha * self.terms.gamma / (t_max - alpha * self.terms.k)
        }
    }
}

fn load_at(active: &[Active], t_max: f64, nu: f64, margin: f64) -> f64 {
    active
        .iter()
        .map(|a| a.load_term(closed_form(t_max, a.terms, nu, margin), t_max))
        .sum()
}

/// Exact multiplier on the piece `(lo, hi]` where the load crosses 1.
fn root_on_piece(active: &[Active], t_max: f64, lo: f64, hi: f64) -> f64 {
    let mut saturated = 0.0;
    let mut offset = 0.0;
    let mut numerator = 0.0;
    for a in active {
        if a.nu_up >= hi {
            saturated += a.load_term(a.upper, t_max);
        } else if a.nu_zero > lo {
            let Terms { k, gamma, saving } = a.terms;
            offset += gamma / k;
            numerator += (gamma * t_max * saving).sqrt() / k;
        }
    }
    let denominator = 1.0 - saturated + offset;
    if numerator <= 0.0 || denominator <= 0.0 {
        return hi;
    }
    let root = numerator / denominator;
    (root * root).clamp(lo, hi)
}

fn drop_order(scenario: &Scenario, a: &Active, b: &Active) -> Ordering {
    let (ua, ub) = (&scenario.users[a.index], &scenario.users[b.index]);
    a.nu_zero
        .total_cmp(&b.nu_zero)
        .then(ub.link.distance.total_cmp(&ua.link.distance))
        .then(ua.id.cmp(&ub.id))
}

fn complete(
    scenario: &Scenario,
    alpha: Vec<f64>,
    nu: f64,
    status: LoadStatus,
    dropped: Vec<UserId>,
) -> Result<OffloadSolution, SolveError> {
    let t_max = scenario.delay_budget;
    let psi = scenario
        .users
        .iter()
        .zip(&alpha)
        .map(|(u, &a)| {
            if a > 0.0 {
                0.0
            } else {
                // stationarity at alpha = 0: E'_tr + E'_u + nu * gamma / T - psi = 0
                -u.marginal_saving() + nu * u.gamma(&scenario.server) / t_max
            }
        })
        .collect();
    let rho = allocate_rho(scenario, &alpha)?;
    let server_load = rho.iter().sum();
    Ok(OffloadSolution {
        alpha,
        nu,
        psi,
        rho,
        status,
        dropped,
        server_load,
    })
}

fn prepare(scenario: &Scenario, opts: &SolverOptions) -> Result<Vec<Active>, SolveError> {
    scenario
        .validate()
        .map_err(|e| SolveError::InvalidScenario(e.to_string()))?;
    opts.validate()?;
    let t_max = scenario.delay_budget;
    Ok(scenario
        .users
        .iter()
        .enumerate()
        .filter(|(_, u)| energy_gate(u))
        .map(|(i, u)| Active::new(i, Terms::new(scenario, u), t_max, opts.execution_margin))
        .collect())
}

/// Energy-optimal shares, multipliers and server allocation.
///
/// Users failing the energy gate keep everything local. The rest start at
/// their `nu = 0` share; if the server is overloaded there, `nu` is raised
/// through the candidate thresholds (the `nu_hat` values at which users
/// leave full offloading and the values at which they are dropped) until
/// the load falls to 1, and the exact root on that piece is taken.
pub fn solve(scenario: &Scenario, opts: &SolverOptions) -> Result<OffloadSolution, SolveError> {
    let active = prepare(scenario, opts)?;
    let t_max = scenario.delay_budget;
    let margin = opts.execution_margin;
    let n = scenario.users.len();

    let mut alpha = vec![0.0; n];
    for a in &active {
        alpha[a.index] = a.upper;
    }
    let load0 = load_at(&active, t_max, 0.0, margin);
    if load0 <= 1.0 {
        return complete(scenario, alpha, 0.0, LoadStatus::Underloaded, Vec::new());
    }

    let mut breakpoints: Vec<f64> = active
        .iter()
        .flat_map(|a| [a.nu_up, a.nu_zero])
        .filter(|v| v.is_finite() && *v > 0.0)
        .collect();
    breakpoints.sort_by(f64::total_cmp);
    breakpoints.dedup();

    // load is non-increasing in nu and 0 at the largest drop threshold
    let first_feasible =
        breakpoints.partition_point(|&nu| load_at(&active, t_max, nu, margin) > 1.0);
    let Some(&hi) = breakpoints.get(first_feasible) else {
        return Err(SolveError::CandidatesExhausted {
            nu: breakpoints.last().copied().unwrap_or(0.0),
            load: load0,
        });
    };
    let lo = if first_feasible == 0 {
        0.0
    } else {
        breakpoints[first_feasible - 1]
    };
    let nu = root_on_piece(&active, t_max, lo, hi);

    let mut dropped: Vec<Active> = Vec::new();
    for a in &active {
        let share = closed_form(t_max, a.terms, nu, margin);
        alpha[a.index] = share;
        if share == 0.0 {
            dropped.push(*a);
        }
    }
    let limit = opts.max_drop_iterations.unwrap_or(n);
    if dropped.len() > limit {
        return Err(SolveError::IterationLimit {
            limit,
            nu,
            load: load_at(&active, t_max, nu, margin),
            dropped: dropped.len(),
        });
    }
    dropped.sort_by(|a, b| drop_order(scenario, a, b));
    let status = if dropped.is_empty() {
        LoadStatus::FullyLoaded
    } else {
        LoadStatus::Overloaded
    };
    let dropped = dropped.iter().map(|a| scenario.users[a.index].id).collect();
    complete(scenario, alpha, nu, status, dropped)
}

/// The admission loop read literally: `nu` only takes `nu_hat` values, and
/// each step drops (sets to 0) the still-admitted user owning the smallest
/// positive `nu_hat` before re-evaluating all shares.
///
/// Kept for comparison with [`solve`]; it is feasible but generally not
/// optimal, and it fails when no positive candidate is left.
pub fn solve_discrete(
    scenario: &Scenario,
    opts: &SolverOptions,
) -> Result<OffloadSolution, SolveError> {
    let active = prepare(scenario, opts)?;
    let t_max = scenario.delay_budget;
    let margin = opts.execution_margin;
    let n = scenario.users.len();
    let limit = opts.max_drop_iterations.unwrap_or(n);

    let mut candidates: Vec<(usize, f64)> = Vec::new();
    for a in &active {
        let u = &scenario.users[a.index];
        candidates.push((a.index, nu_hat(scenario, u, t_max)?));
    }
    let mut admitted: Vec<bool> = vec![false; n];
    for a in &active {
        admitted[a.index] = true;
    }
    let lookup = |index: usize| active.iter().find(|a| a.index == index).copied();

    let mut nu = 0.0;
    let mut dropped = Vec::new();
    loop {
        let alpha: Vec<f64> = (0..n)
            .map(|i| match lookup(i) {
                Some(a) if admitted[i] => closed_form(t_max, a.terms, nu, margin),
                _ => 0.0,
            })
            .collect();
        let load = server_load(scenario, &alpha)?;
        if load <= 1.0 {
            let status = match (nu > 0.0, dropped.is_empty()) {
                (false, _) => LoadStatus::Underloaded,
                (true, true) => LoadStatus::FullyLoaded,
                (true, false) => LoadStatus::Overloaded,
            };
            return complete(scenario, alpha, nu, status, dropped);
        }
        if dropped.len() >= limit {
            return Err(SolveError::IterationLimit {
                limit,
                nu,
                load,
                dropped: dropped.len(),
            });
        }
        let pick = candidates
            .iter()
            .enumerate()
            .filter(|(_, (i, v))| admitted[*i] && alpha[*i] > 0.0 && *v > 0.0)
            .min_by(|(_, (i, v)), (_, (j, w))| {
                let (ui, uj) = (&scenario.users[*i], &scenario.users[*j]);
                v.total_cmp(w)
                    .then(uj.link.distance.total_cmp(&ui.link.distance))
                    .then(ui.id.cmp(&uj.id))
            })
            .map(|(pos, &(i, v))| (pos, i, v));
        let Some((pos, index, value)) = pick else {
            return Err(SolveError::CandidatesExhausted { nu, load });
        };
        nu = value;
        admitted[index] = false;
        dropped.push(scenario.users[index].id);
        candidates.remove(pos);
    }
}

/// Verification of a candidate solution against the KKT system.
#[derive(Debug, Clone, PartialEq)]
pub struct KktReport {
    /// `E'_tr + E'_u + nu * dg/dalpha - psi` per user, joules. Zero for users
    /// sitting on an upper clip (their bound multiplier is reported instead).
    pub stationarity_residual: Vec<f64>,
    /// Multiplier of the active upper clip, `-(E'_tr + E'_u + nu * dg/dalpha)`;
    /// must be non-negative. Zero for users below their clip.
    pub upper_multiplier: Vec<f64>,
    /// `1 - server_load`; `-f64::MAX` when some share leaves no execution time.
    pub primal_feasibility: f64,
    /// Largest distance of any share outside `[0, 1]`.
    pub box_violation: f64,
    pub nu_nonnegative: bool,
    pub psi_nonnegative: Vec<bool>,
    pub psi_alpha: Vec<f64>,
    /// `nu * (server_load - 1)`.
    pub nu_slack: f64,
    pub max_abs_residual: f64,
}

/// Thresholds a [`KktReport`] is judged against.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KktTolerances {
    pub primal: f64,
    pub stationarity: f64,
    pub slackness: f64,
}

impl Default for KktTolerances {
    fn default() -> Self {
        Self {
            primal: 1e-9,
            stationarity: 1e-8,
            slackness: 1e-9,
        }
    }
}

impl KktReport {
    pub fn max_interior_stationarity(&self) -> f64 {
        self.stationarity_residual
            .iter()
            .fold(0.0, |m, r| m.max(r.abs()))
    }

    pub fn violations(&self, tol: &KktTolerances) -> Vec<String> {
        let mut out = Vec::new();
        if self.primal_feasibility < -tol.primal {
            out.push(format!("primal slack {}", self.primal_feasibility));
        }
        if self.box_violation > 0.0 {
            out.push(format!("share outside [0, 1] by {}", self.box_violation));
        }
        if !self.nu_nonnegative {
            out.push("nu < 0".to_owned());
        }
        for (i, ok) in self.psi_nonnegative.iter().enumerate() {
            if !ok {
                out.push(format!("psi[{i}] < 0"));
            }
        }
        for (i, p) in self.psi_alpha.iter().enumerate() {
            if *p != 0.0 {
                out.push(format!("psi[{i}] * alpha[{i}] = {p}"));
            }
        }
        for (i, m) in self.upper_multiplier.iter().enumerate() {
            if *m < -tol.stationarity {
                out.push(format!("upper-bound multiplier[{i}] = {m}"));
            }
        }
        let worst = self.max_interior_stationarity();
        if worst > tol.stationarity {
            out.push(format!("stationarity residual {worst}"));
        }
        if self.nu_slack.abs() > tol.slackness {
            out.push(format!("nu * (load - 1) = {}", self.nu_slack));
        }
        out
    }

    pub fn passes(&self, tol: &KktTolerances) -> bool {
        self.violations(tol).is_empty()
    }
}

/// Evaluate the KKT conditions at `sol`. Reports; does not judge.
pub fn kkt_residuals(
    scenario: &Scenario,
    sol: &OffloadSolution,
    opts: &SolverOptions,
) -> Result<KktReport, SolveError> {
    check_len(scenario, &sol.alpha)?;
    check_len(scenario, &sol.psi)?;
    let t_max = scenario.delay_budget;
    let nu = sol.nu;

    let mut load = 0.0;
    let mut budget_ok = true;
    let mut box_violation: f64 = 0.0;
    let mut stationarity = Vec::with_capacity(sol.alpha.len());
    let mut upper_multiplier = Vec::with_capacity(sol.alpha.len());

    for ((u, &a), &psi) in scenario.users.iter().zip(&sol.alpha).zip(&sol.psi) {
        let terms = Terms::new(scenario, u);
        box_violation = box_violation.max(-a).max(a - 1.0);
        let budget = t_max - a * terms.k;
        if a != 0.0 {
            if budget > 0.0 {
                load += a * terms.gamma / budget;
            } else {
                budget_ok = false;
            }
        }
        let marginal = -terms.saving
            + if budget > 0.0 {
                nu * terms.gamma * t_max / (budget * budget)
            } else {
                f64::MAX
            };
        let upper = upper_clip(t_max, terms.k, opts.execution_margin);
        let at_upper = a > 0.0 && a >= upper;
        if at_upper {
            stationarity.push(0.0);
            upper_multiplier.push(-(marginal - psi));
        } else {
            stationarity.push(marginal - psi);
            upper_multiplier.push(0.0);
        }
    }

    let primal_feasibility = if budget_ok { 1.0 - load } else { -f64::MAX };
    let nu_slack = if budget_ok {
        nu * (load - 1.0)
    } else {
        f64::MAX
    };
    let psi_alpha: Vec<f64> = sol.psi.iter().zip(&sol.alpha).map(|(p, a)| p * a).collect();
    let max_abs_residual = stationarity
        .iter()
        .chain(&psi_alpha)
        .fold(0.0f64, |m, r| m.max(r.abs()))
        .min(f64::MAX);
    Ok(KktReport {
        stationarity_residual: stationarity,
        upper_multiplier,
        primal_feasibility,
        box_violation,
        nu_nonnegative: nu >= 0.0,
        psi_nonnegative: sol.psi.iter().map(|p| *p >= 0.0).collect(),
        psi_alpha,
        nu_slack,
        max_abs_residual,
    })
}
