//! Offloading percentage, energy totals and the delay/bandwidth sweeps.
//!
//! Every sweep keeps one placement (the config's seed) across all of its
//! points and only varies the swept parameter. Rows are solved in parallel
//! and returned in input order.

use rayon::prelude::*;
use thiserror::Error;

use crate::config::ScenarioConfig;
use crate::model::{ModelError, Scenario};
use crate::optimizer::{solve, LoadStatus, OffloadSolution, SolveError, SolverOptions};
use crate::scenario::{generate, ScenarioError};
use crate::units::grid;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SweepError {
    #[error(transparent)]
    Scenario(#[from] ScenarioError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("solve failed at t_max = {t_max} s, bandwidth fraction {fraction}: {source}")]
    Solve {
        t_max: f64,
        fraction: f64,
        source: SolveError,
    },
    #[error("invalid sweep grid: {0}")]
    Grid(String),
}

/// Data-weighted mean share, `sum alpha_i D_i / sum D_i`.
pub fn offloading_percentage(scenario: &Scenario, sol: &OffloadSolution) -> f64 {
    let (offloaded, total) = scenario
        .users
        .iter()
        .zip(&sol.alpha)
        .fold((0.0, 0.0), |(o, t), (u, a)| {
            (o + a * u.uplink_bits(), t + u.uplink_bits())
        });
    offloaded / total
}

/// Energy with every task processed locally.
pub fn baseline_energy(scenario: &Scenario) -> f64 {
    scenario
        .users
        .iter()
        .map(|u| u.compute.energy_per_cycle * u.local_compute_load())
        .sum()
}

pub fn optimized_energy(scenario: &Scenario, sol: &OffloadSolution) -> Result<f64, ModelError> {
    scenario
        .users
        .iter()
        .zip(&sol.alpha)
        .map(|(u, &a)| u.energy_total(a))
        .sum()
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricsRow {
    pub t_max: f64,
    pub bandwidth_fraction: f64,
    pub n_users: usize,
    pub seed: u64,
    pub lambda: f64,
    pub e_sum_opt: f64,
    pub e_sum_baseline: f64,
    pub nu: f64,
    pub status: LoadStatus,
    pub n_dropped: usize,
}

impl MetricsRow {
    pub fn new(scenario: &Scenario, sol: &OffloadSolution) -> Result<Self, ModelError> {
        Ok(MetricsRow {
            t_max: scenario.delay_budget,
            bandwidth_fraction: scenario.bandwidth_fraction,
            n_users: scenario.users.len(),
            seed: scenario.seed,
            lambda: offloading_percentage(scenario, sol),
            e_sum_opt: optimized_energy(scenario, sol)?,
            e_sum_baseline: baseline_energy(scenario),
            nu: sol.nu,
            status: sol.status,
            n_dropped: sol.dropped.len(),
        })
    }
}

fn check_increasing(values: &[f64], what: &str) -> Result<(), SweepError> {
    if values.is_empty() {
        return Err(SweepError::Grid(format!("no {what} values")));
    }
    if let Some(v) = values.iter().find(|v| !(**v > 0.0) || !v.is_finite()) {
        return Err(SweepError::Grid(format!(
            "{what} value {v} is not positive"
        )));
    }
    if let Some(w) = values.windows(2).find(|w| w[1] <= w[0]) {
        return Err(SweepError::Grid(format!(
            "{what} values must be strictly increasing ({} then {})",
            w[0], w[1]
        )));
    }
    Ok(())
}

fn solve_at(
    base: &Scenario,
    t_max: f64,
    opts: &SolverOptions,
) -> Result<(Scenario, OffloadSolution), SweepError> {
    let mut scenario = base.clone();
    scenario.delay_budget = t_max;
    let sol = solve(&scenario, opts).map_err(|source| SweepError::Solve {
        t_max,
        fraction: scenario.bandwidth_fraction,
        source,
    })?;
    Ok((scenario, sol))
}

/// One row per delay budget, all over the placement drawn from `config`.
pub fn sweep_tmax(
    config: &ScenarioConfig,
    t_values: &[f64],
    opts: &SolverOptions,
) -> Result<Vec<MetricsRow>, SweepError> {
    check_increasing(t_values, "t_max")?;
    let base = generate(config)?;
    t_values
        .par_iter()
        .map(|&t| {
            let (scenario, sol) = solve_at(&base, t, opts)?;
            Ok(MetricsRow::new(&scenario, &sol)?)
        })
        .collect()
}

/// [`sweep_tmax`] for each bandwidth fraction in turn, fraction-major.
pub fn sweep_grid(
    config: &ScenarioConfig,
    t_values: &[f64],
    fractions: &[f64],
    opts: &SolverOptions,
) -> Result<Vec<MetricsRow>, SweepError> {
    check_fractions(fractions)?;
    let mut rows = Vec::with_capacity(t_values.len() * fractions.len());
    for &f in fractions {
        rows.extend(sweep_tmax(
            &config.clone().with_bandwidth_fraction(f),
            t_values,
            opts,
        )?);
    }
    Ok(rows)
}

fn check_fractions(fractions: &[f64]) -> Result<(), SweepError> {
    if fractions.is_empty() {
        return Err(SweepError::Grid("no bandwidth fractions".into()));
    }
    if let Some(f) = fractions.iter().find(|f| !(**f > 0.0 && **f <= 1.0)) {
        return Err(SweepError::Grid(format!(
            "bandwidth fraction {f} is outside (0, 1]"
        )));
    }
    Ok(())
}

/// Delay grid and flatness threshold for [`cutoff_delay`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CutoffArgs {
    pub t_start: f64,
    pub t_end: f64,
    pub step: f64,
    /// Forward-difference slope of the offloading percentage, per second,
    /// below which it counts as flat.
    pub slope_tol: f64,
}

impl Default for CutoffArgs {
    fn default() -> Self {
        Self {
            t_start: 0.05e-3,
            t_end: 50e-3,
            step: 0.05e-3,
            slope_tol: 1e-6,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CutoffResult {
    pub t_c: f64,
    pub grid_step: f64,
    pub lambda_at_tc: f64,
    /// False when the percentage was still rising at the end of the grid; `t_c`
    /// is then the last grid point.
    pub saturated: bool,
}

/// Smallest grid delay from which the offloading percentage stays flat.
///
/// A grid point qualifies when the forward slope there and at every later
/// grid point is below `slope_tol`.
pub fn cutoff_delay(
    config: &ScenarioConfig,
    args: &CutoffArgs,
    opts: &SolverOptions,
) -> Result<CutoffResult, SweepError> {
    if !(args.step > 0.0) || !(args.t_start > 0.0) || !(args.t_end > args.t_start) {
        return Err(SweepError::Grid(format!(
            "cut-off grid needs 0 < t_start < t_end and step > 0 (got {}, {}, {})",
            args.t_start, args.t_end, args.step
        )));
    }
    let t_values = grid(args.t_start, args.t_end, args.step);
    if t_values.len() < 2 {
        return Err(SweepError::Grid(
            "cut-off grid has fewer than two points".into(),
        ));
    }
    let lambda: Vec<f64> = sweep_tmax(config, &t_values, opts)?
        .iter()
        .map(|r| r.lambda)
        .collect();
    let last_steep = lambda
        .windows(2)
        .rposition(|w| (w[1] - w[0]) / args.step >= args.slope_tol);
    let (index, saturated) = match last_steep {
        None => (0, true),
        Some(m) if m + 2 == lambda.len() => (m + 1, false),
        Some(m) => (m + 1, true),
    };
    Ok(CutoffResult {
        t_c: t_values[index],
        grid_step: args.step,
        lambda_at_tc: lambda[index],
        saturated,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TradeoffCell {
    pub bandwidth_fraction: f64,
    pub n_users: usize,
    pub cutoff: CutoffResult,
}

/// Cut-off delay for every `(fraction, N)` pair, fraction-major.
pub fn bandwidth_tradeoff(
    config: &ScenarioConfig,
    fractions: &[f64],
    n_values: &[usize],
    args: &CutoffArgs,
    opts: &SolverOptions,
) -> Result<Vec<TradeoffCell>, SweepError> {
    check_fractions(fractions)?;
    if n_values.is_empty() || n_values.contains(&0) {
        return Err(SweepError::Grid("user counts must be positive".into()));
    }
    let cells: Vec<(f64, usize)> = fractions
        .iter()
        .flat_map(|&f| n_values.iter().map(move |&n| (f, n)))
        .collect();
    cells
        .par_iter()
        .map(|&(f, n)| {
            let cfg = config.clone().with_bandwidth_fraction(f).with_users(n);
            Ok(TradeoffCell {
                bandwidth_fraction: f,
                n_users: n,
                cutoff: cutoff_delay(&cfg, args, opts)?,
            })
        })
        .collect()
}
