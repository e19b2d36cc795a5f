//! Brute-force and numeric checks of the optimizer, independent of its
//! breakpoint walk: exhaustive grid search over the joint shares, plain
//! bisection on the multiplier, and a finite-difference Hessian probe.

use rayon::prelude::*;
use thiserror::Error;

use crate::metrics::optimized_energy;
use crate::model::{ModelError, Scenario};
use crate::optimizer::{
    allocate_rho, alpha_closed_form, energy_gate, lagrangian, server_load, LoadStatus,
    OffloadSolution, SolveError, SolverOptions,
};
use crate::units::grid;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum OracleError {
    #[error("{n} users exceeds the grid-search limit of {max}")]
    TooManyUsers { n: usize, max: usize },
    #[error("grid step {0} must lie in (0, 0.5]")]
    BadStep(f64),
    #[error("no grid point satisfies the capacity constraint")]
    NoFeasiblePoint,
    #[error("load stays above 1 up to nu = {nu}; no bracket")]
    NotBracketing { nu: f64 },
    #[error("load increases from {lo} to {hi} between nu = {nu_lo} and nu = {nu_hi}")]
    NonMonotone {
        nu_lo: f64,
        nu_hi: f64,
        lo: f64,
        hi: f64,
    },
    #[error("infeasible shares: {0}")]
    Infeasible(String),
    #[error(transparent)]
    Solve(#[from] SolveError),
    #[error(transparent)]
    Model(#[from] ModelError),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridSpec {
    pub step: f64,
    pub max_users: usize,
}

impl Default for GridSpec {
    fn default() -> Self {
        Self {
            step: 1.0 / 200.0,
            max_users: 3,
        }
    }
}

/// Per-user tables over the grid: energy and load term of every feasible
/// grid share.
struct Tables {
    points: Vec<f64>,
    energy: Vec<Vec<f64>>,
    load: Vec<Vec<f64>>,
    /// Number of leading grid points within each user's clip.
    feasible: Vec<usize>,
}

fn tables(scenario: &Scenario, spec: &GridSpec, margin: f64) -> Result<Tables, OracleError> {
    let mut points = grid(0.0, 1.0, spec.step);
    if points.last().is_some_and(|&p| p < 1.0 - 1e-12) {
        points.push(1.0);
    }
    let t_max = scenario.delay_budget;
    let mut energy = Vec::new();
    let mut load = Vec::new();
    let mut feasible = Vec::new();
    for u in &scenario.users {
        let k = u.comm_delay_coeff();
        let gamma = u.gamma(&scenario.server);
        let top = if k > 0.0 {
            (t_max * (1.0 - margin) / k).min(1.0)
        } else {
            1.0
        };
        let count = points.iter().take_while(|&&p| p <= top).count();
        let mut e = Vec::with_capacity(count);
        let mut l = Vec::with_capacity(count);
        for &p in &points[..count] {
            e.push(u.energy_total(p.min(1.0))?);
            l.push(if p == 0.0 {
                0.0
            } else {
                p * gamma / (t_max - p * k)
            });
        }
        energy.push(e);
        load.push(l);
        feasible.push(count);
    }
    Ok(Tables {
        points,
        energy,
        load,
        feasible,
    })
}

#[derive(Debug, Clone, PartialEq)]
struct Best {
    energy: f64,
    share_sum: f64,
    index: Vec<usize>,
}

impl Best {
    /// Lower energy wins, then the larger total share, then the
    /// lexicographically smaller index so the reduction is order-free.
    fn better(self, other: Best) -> Best {
        let ord = self
            .energy
            .total_cmp(&other.energy)
            .then(other.share_sum.total_cmp(&self.share_sum))
            .then(self.index.cmp(&other.index));
        if ord.is_le() {
            self
        } else {
            other
        }
    }
}

fn search_from(t: &Tables, first: usize) -> Option<Best> {
    let n = t.energy.len();
    let mut index = vec![0usize; n];
    index[0] = first;
    let mut best: Option<Best> = None;
    loop {
        let load: f64 = (0..n).map(|i| t.load[i][index[i]]).sum();
        if load <= 1.0 {
            let energy: f64 = (0..n).map(|i| t.energy[i][index[i]]).sum();
            let share_sum: f64 = (0..n).map(|i| t.points[index[i]]).sum();
            let cand = Best {
                energy,
                share_sum,
                index: index.clone(),
            };
            best = Some(match best {
                Some(b) => b.better(cand),
                None => cand,
            });
        }
        // odometer over users 1..n
        let mut i = n - 1;
        loop {
            if i == 0 {
                return best;
            }
            index[i] += 1;
            if index[i] < t.feasible[i] {
                break;
            }
            index[i] = 0;
            i -= 1;
        }
    }
}

/// Exhaustive minimum of the total energy over the grid `{0, step, ..., 1}^N`.
///
/// Shares beyond a user's execution clip are skipped, with the same margin
/// the solver uses. The multipliers are not estimated: `nu` and `psi` of the
/// result are zero and `status` is read off the shares (all gated users at
/// their largest grid share: underloaded; some gated user at 0: overloaded).
pub fn grid_search(
    scenario: &Scenario,
    spec: &GridSpec,
    opts: &SolverOptions,
) -> Result<OffloadSolution, OracleError> {
    let n = scenario.users.len();
    if n > spec.max_users {
        return Err(OracleError::TooManyUsers {
            n,
            max: spec.max_users,
        });
    }
    if !(spec.step > 0.0 && spec.step <= 0.5) {
        return Err(OracleError::BadStep(spec.step));
    }
    scenario
        .validate()
        .map_err(|e| SolveError::InvalidScenario(e.to_string()))?;
    let t = tables(scenario, spec, opts.execution_margin)?;
    let best = (0..t.feasible[0])
        .into_par_iter()
        .filter_map(|first| search_from(&t, first))
        .reduce_with(Best::better)
        .ok_or(OracleError::NoFeasiblePoint)?;

    let alpha: Vec<f64> = best.index.iter().map(|&j| t.points[j]).collect();
    let gated: Vec<usize> = (0..n)
        .filter(|&i| energy_gate(&scenario.users[i]))
        .collect();
    let dropped: Vec<_> = gated
        .iter()
        .filter(|&&i| alpha[i] == 0.0)
        .map(|&i| scenario.users[i].id)
        .collect();
    let status = if gated.iter().all(|&i| best.index[i] + 1 == t.feasible[i]) {
        LoadStatus::Underloaded
    } else if dropped.is_empty() {
        LoadStatus::FullyLoaded
    } else {
        LoadStatus::Overloaded
    };
    let rho = allocate_rho(scenario, &alpha)?;
    let server_load = rho.iter().sum();
    Ok(OffloadSolution {
        alpha,
        nu: 0.0,
        psi: vec![0.0; n],
        rho,
        status,
        dropped,
        server_load,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct OracleComparison {
    pub oracle_energy: f64,
    pub solver_energy: f64,
    /// `solver_energy - oracle_energy`.
    pub energy_gap: f64,
    pub max_alpha_deviation: f64,
    /// Largest deviation over users strictly inside `(0, 1)` in both results.
    pub max_interior_deviation: f64,
    /// The solver's shares pass the oracle's feasibility test: inside the box
    /// and the execution clip, load at most `1 + 1e-9`.
    pub oracle_feasible: bool,
    /// `N * step * max_i |E'_tr,i + E'_u,i|`.
    pub gap_bound: f64,
}

impl OracleComparison {
    pub fn within_bounds(&self, spec: &GridSpec) -> bool {
        self.oracle_feasible
            && self.energy_gap <= self.gap_bound
            && self.max_interior_deviation <= 2.0 * spec.step
    }
}

/// Lipschitz bound of the linear objective over one grid cell.
pub fn gap_bound(scenario: &Scenario, spec: &GridSpec) -> f64 {
    let worst = scenario
        .users
        .iter()
        .map(|u| u.marginal_saving().abs())
        .fold(0.0, f64::max);
    scenario.users.len() as f64 * spec.step * worst
}

pub fn compare(
    scenario: &Scenario,
    solver: &OffloadSolution,
    oracle: &OffloadSolution,
    spec: &GridSpec,
    opts: &SolverOptions,
) -> Result<OracleComparison, OracleError> {
    let n = scenario.users.len();
    for sol in [solver, oracle] {
        if sol.alpha.len() != n {
            return Err(SolveError::LengthMismatch {
                expected: n,
                got: sol.alpha.len(),
            }
            .into());
        }
    }
    let t_max = scenario.delay_budget;
    let in_clip = scenario.users.iter().zip(&solver.alpha).all(|(u, &a)| {
        let k = u.comm_delay_coeff();
        (0.0..=1.0).contains(&a) && a * k <= t_max * (1.0 - opts.execution_margin) * (1.0 + 1e-12)
    });
    let oracle_feasible =
        in_clip && server_load(scenario, &solver.alpha).is_ok_and(|l| l <= 1.0 + 1e-9);
    let solver_energy = if in_clip {
        optimized_energy(scenario, solver)?
    } else {
        f64::INFINITY
    };
    let oracle_energy = optimized_energy(scenario, oracle)?;
    let mut max_alpha_deviation: f64 = 0.0;
    let mut max_interior_deviation: f64 = 0.0;
    let interior = |a: f64| a > 0.0 && a < 1.0;
    for (&a, &b) in solver.alpha.iter().zip(&oracle.alpha) {
        let d = (a - b).abs();
        max_alpha_deviation = max_alpha_deviation.max(d);
        if interior(a) && interior(b) {
            max_interior_deviation = max_interior_deviation.max(d);
        }
    }
    Ok(OracleComparison {
        oracle_energy,
        solver_energy,
        energy_gap: solver_energy - oracle_energy,
        max_alpha_deviation,
        max_interior_deviation,
        oracle_feasible,
        gap_bound: gap_bound(scenario, spec),
    })
}

fn closed_form_load(
    scenario: &Scenario,
    nu: f64,
    opts: &SolverOptions,
) -> Result<f64, OracleError> {
    let t_max = scenario.delay_budget;
    let alpha = scenario
        .users
        .iter()
        .map(|u| {
            if energy_gate(u) {
                alpha_closed_form(scenario, u, t_max, nu, opts)
            } else {
                Ok(0.0)
            }
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(server_load(scenario, &alpha)?)
}

/// Multiplier at which the closed-form shares load the server to `1 +- tol`,
/// by bisection. Returns 0 when the server is not overloaded at `nu = 0`.
///
/// The load must fall monotonically across the bracket; an increase between
/// two probes is reported as an error.
pub fn continuous_dual_search(
    scenario: &Scenario,
    tol: f64,
    opts: &SolverOptions,
) -> Result<f64, OracleError> {
    let load0 = closed_form_load(scenario, 0.0, opts)?;
    if load0 <= 1.0 {
        return Ok(0.0);
    }
    let mut lo = 0.0;
    let mut load_lo = load0;
    let mut hi = 1e-12;
    let mut load_hi = closed_form_load(scenario, hi, opts)?;
    while load_hi > 1.0 {
        if hi > 1e300 {
            return Err(OracleError::NotBracketing { nu: hi });
        }
        check_monotone(hi, hi * 16.0, load_hi, f64::NAN)?;
        lo = hi;
        load_lo = load_hi;
        hi *= 16.0;
        let next = closed_form_load(scenario, hi, opts)?;
        check_monotone(lo, hi, load_lo, next)?;
        load_hi = next;
    }
    for _ in 0..400 {
        if (load_hi - 1.0).abs() <= tol {
            return Ok(hi);
        }
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        let load_mid = closed_form_load(scenario, mid, opts)?;
        check_monotone(lo, mid, load_lo, load_mid)?;
        check_monotone(mid, hi, load_mid, load_hi)?;
        if load_mid > 1.0 {
            lo = mid;
            load_lo = load_mid;
        } else {
            hi = mid;
            load_hi = load_mid;
        }
    }
    Ok(hi)
}

fn check_monotone(nu_lo: f64, nu_hi: f64, lo: f64, hi: f64) -> Result<(), OracleError> {
    if hi > lo {
        Err(OracleError::NonMonotone {
            nu_lo,
            nu_hi,
            lo,
            hi,
        })
    } else {
        Ok(())
    }
}

/// Analytic and finite-difference curvature of the Lagrangian at one point.
#[derive(Debug, Clone, PartialEq)]
pub struct HessianReport {
    /// `2 nu gamma_i T k_i / (T - alpha_i k_i)^3`.
    pub analytic_diagonal: Vec<f64>,
    pub numeric_diagonal: Vec<f64>,
    /// Largest `|numeric - analytic| / analytic` over entries above the noise
    /// floor.
    pub max_diagonal_rel_error: f64,
    /// Largest mixed partial, relative to `sqrt(H_ii H_jj)`.
    pub max_cross_partial: f64,
    pub passes: bool,
}

const DIAGONAL_TOL: f64 = 1e-5;
const CROSS_TOL: f64 = 1e-6;

/// Curvature probe of the Lagrangian at feasible `alpha`.
///
/// Each coordinate is perturbed by `h_i = 1e-3 (T - alpha_i k_i) / k_i`
/// (capped at 1e-3), small against the pole of the load term. Roundoff in
/// the Lagrangian value limits how small an entry can be resolved; entries
/// below that floor are compared absolutely against it.
pub fn hessian_report(
    scenario: &Scenario,
    alpha: &[f64],
    nu: f64,
    opts: &SolverOptions,
) -> Result<HessianReport, OracleError> {
    let n = scenario.users.len();
    if alpha.len() != n {
        return Err(SolveError::LengthMismatch {
            expected: n,
            got: alpha.len(),
        }
        .into());
    }
    let t_max = scenario.delay_budget;
    for (u, &a) in scenario.users.iter().zip(alpha) {
        let top = (t_max * (1.0 - opts.execution_margin) / u.comm_delay_coeff()).min(1.0);
        if !(0.0..=top).contains(&a) {
            return Err(OracleError::Infeasible(format!(
                "user {} share {a} outside [0, {top}]",
                u.id
            )));
        }
    }
    let load = server_load(scenario, alpha)?;
    if load > 1.0 + 1e-9 {
        return Err(OracleError::Infeasible(format!("server load {load}")));
    }
    if !(nu >= 0.0) {
        return Err(OracleError::Infeasible(format!("multiplier {nu}")));
    }

    let psi = vec![0.0; n];
    let value = |x: &[f64]| lagrangian(scenario, x, nu, &psi);
    let center = value(alpha)?;
    let steps: Vec<f64> = scenario
        .users
        .iter()
        .zip(alpha)
        .map(|(u, &a)| {
            let k = u.comm_delay_coeff();
            (1e-3 * (t_max - a * k) / k).min(1e-3)
        })
        .collect();
    let floor = |h2: f64| 64.0 * f64::EPSILON * center.abs().max(1e-300) / h2;

    let analytic: Vec<f64> = scenario
        .users
        .iter()
        .zip(alpha)
        .map(|(u, &a)| {
            let k = u.comm_delay_coeff();
            let gamma = u.gamma(&scenario.server);
            2.0 * nu * gamma * t_max * k / (t_max - a * k).powi(3)
        })
        .collect();

    let mut numeric = Vec::with_capacity(n);
    let mut max_rel: f64 = 0.0;
    let mut passes = analytic.iter().all(|h| *h >= 0.0 && h.is_finite());
    let mut probe = alpha.to_vec();
    for i in 0..n {
        let h = steps[i];
        probe[i] = alpha[i] + h;
        let up = value(&probe)?;
        probe[i] = alpha[i] - h;
        let down = value(&probe)?;
        probe[i] = alpha[i];
        let fd = (up - 2.0 * center + down) / (h * h);
        let noise = floor(h * h);
        let err = (fd - analytic[i]).abs();
        if analytic[i] > noise {
            max_rel = max_rel.max(err / analytic[i]);
            passes &= err <= DIAGONAL_TOL * analytic[i];
        } else {
            passes &= err <= noise;
        }
        numeric.push(fd);
    }

    let mut max_cross: f64 = 0.0;
    for i in 0..n {
        for j in (i + 1)..n {
            let (hi, hj) = (steps[i], steps[j]);
            let mut eval = |di: f64, dj: f64| {
                probe[i] = alpha[i] + di;
                probe[j] = alpha[j] + dj;
                let v = value(&probe);
                probe[i] = alpha[i];
                probe[j] = alpha[j];
                v
            };
            let mixed = (eval(hi, hj)? - eval(hi, -hj)? - eval(-hi, hj)? + eval(-hi, -hj)?)
                / (4.0 * hi * hj);
            let scale = (analytic[i] * analytic[j]).sqrt();
            let noise = floor(hi * hj);
            if scale > 0.0 {
                max_cross = max_cross.max(mixed.abs() / scale);
            }
            passes &= mixed.abs() <= CROSS_TOL * scale + noise;
        }
    }

    Ok(HessianReport {
        analytic_diagonal: analytic,
        numeric_diagonal: numeric,
        max_diagonal_rel_error: max_rel,
        max_cross_partial: max_cross,
        passes,
    })
}

/// True iff the Lagrangian's Hessian at `alpha` is diagonal with
/// non-negative entries, as far as finite differences can tell.
pub fn hessian_check(
    scenario: &Scenario,
    alpha: &[f64],
    nu: f64,
    opts: &SolverOptions,
) -> Result<bool, OracleError> {
    Ok(hessian_report(scenario, alpha, nu, opts)?.passes)
}
