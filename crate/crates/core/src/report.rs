//! CSV output: sweep rows, cut-off tables and the two-section solution file.
//!
//! Sweep and cut-off tables carry 12 significant digits. The solution file
//! stores every float in shortest round-trip form so that a solution read
//! back is bit-identical to the one written, which `verify` relies on.

use std::fmt::Write as _;

use thiserror::Error;

use crate::metrics::{
    baseline_energy, offloading_percentage, optimized_energy, MetricsRow, TradeoffCell,
};
use crate::model::{ModelError, Scenario, UserId};
use crate::optimizer::{LoadStatus, OffloadSolution};

pub const METRICS_HEADER: &str =
    "t_max_s,bandwidth_fraction,n_users,seed,lambda,e_sum_opt_j,e_sum_baseline_j,nu,status,n_dropped";

pub const CUTOFF_HEADER: &str = "bandwidth_fraction,n_users,t_c_s,saturated";

pub const SOLUTION_HEADER: &str = "user_id,distance_m,alpha,rho,psi";

/// 12 significant digits in scientific notation.
pub fn sig12(v: f64) -> String {
    format!("{v:.11e}")
}

pub fn metrics_csv(rows: &[MetricsRow]) -> String {
    let mut out = String::from(METRICS_HEADER);
    out.push('\n');
    for r in rows {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{}",
            sig12(r.t_max),
            sig12(r.bandwidth_fraction),
            r.n_users,
            r.seed,
            sig12(r.lambda),
            sig12(r.e_sum_opt),
            sig12(r.e_sum_baseline),
            sig12(r.nu),
            r.status,
            r.n_dropped
        );
    }
    out
}

pub fn cutoff_csv(cells: &[TradeoffCell]) -> String {
    let mut out = String::from(CUTOFF_HEADER);
    out.push('\n');
    for c in cells {
        let _ = writeln!(
            out,
            "{},{},{},{}",
            sig12(c.bandwidth_fraction),
            c.n_users,
            sig12(c.cutoff.t_c),
            c.cutoff.saturated
        );
    }
    out
}

fn exact(v: f64) -> String {
    format!("{v:e}")
}

/// Per-user table, a blank line, then `key,value` summary rows.
pub fn solution_csv(scenario: &Scenario, sol: &OffloadSolution) -> Result<String, ModelError> {
    let mut out = String::from(SOLUTION_HEADER);
    out.push('\n');
    for (i, u) in scenario.users.iter().enumerate() {
        let _ = writeln!(
            out,
            "{},{},{},{},{}",
            u.id,
            exact(u.link.distance),
            exact(sol.alpha[i]),
            exact(sol.rho[i]),
            exact(sol.psi[i])
        );
    }
    let dropped: Vec<String> = sol.dropped.iter().map(UserId::to_string).collect();
    out.push_str("\nkey,value\n");
    let _ = writeln!(out, "nu,{}", exact(sol.nu));
    let _ = writeln!(out, "status,{}", sol.status);
    let _ = writeln!(out, "server_load,{}", exact(sol.server_load));
    let _ = writeln!(
        out,
        "lambda,{}",
        exact(offloading_percentage(scenario, sol))
    );
    let _ = writeln!(
        out,
        "e_sum_opt_j,{}",
        exact(optimized_energy(scenario, sol)?)
    );
    let _ = writeln!(out, "e_sum_baseline_j,{}", exact(baseline_energy(scenario)));
    let _ = writeln!(out, "n_dropped,{}", sol.dropped.len());
    let _ = writeln!(out, "dropped,{}", dropped.join(";"));
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("solution line {line}: {message}")]
pub struct SolutionParseError {
    pub line: usize,
    pub message: String,
}

/// A solution file read back: the per-user ids and the decision itself.
#[derive(Debug, Clone, PartialEq)]
pub struct SolutionFile {
    pub ids: Vec<UserId>,
    pub solution: OffloadSolution,
}

fn err(line: usize, message: impl Into<String>) -> SolutionParseError {
    SolutionParseError {
        line,
        message: message.into(),
    }
}

fn float(text: &str, line: usize) -> Result<f64, SolutionParseError> {
    let v: f64 = text
        .trim()
        .parse()
        .map_err(|_| err(line, format!("`{text}` is not a number")))?;
    if v.is_finite() {
        Ok(v)
    } else {
        Err(err(line, format!("`{text}` is not finite")))
    }
}

fn user_id(text: &str, line: usize) -> Result<UserId, SolutionParseError> {
    text.trim()
        .parse()
        .map(UserId)
        .map_err(|_| err(line, format!("`{text}` is not a user id")))
}

/// Parse the output of [`solution_csv`]. Derived summary rows (`lambda`,
/// energies, `n_dropped`) are accepted and ignored.
pub fn parse_solution_csv(text: &str) -> Result<SolutionFile, SolutionParseError> {
    let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l.trim()));
    match lines.next() {
        Some((_, h)) if h == SOLUTION_HEADER => {}
        Some((n, h)) => {
            return Err(err(
                n,
                format!("expected header `{SOLUTION_HEADER}`, got `{h}`"),
            ))
        }
        None => return Err(err(0, "empty solution file")),
    }
    let mut ids = Vec::new();
    let (mut alpha, mut rho, mut psi) = (Vec::new(), Vec::new(), Vec::new());
    let mut summary_at = None;
    for (n, line) in lines.by_ref() {
        if line.is_empty() {
            continue;
        }
        if line == "key,value" {
            summary_at = Some(n);
            break;
        }
        let fields: Vec<&str> = line.split(',').collect();
        let [id, distance, a, r, p] = fields.as_slice() else {
            return Err(err(n, format!("expected 5 fields, got {}", fields.len())));
        };
        let id = user_id(id, n)?;
        float(distance, n)?;
        if ids.contains(&id) {
            return Err(err(n, format!("duplicate user id {id}")));
        }
        ids.push(id);
        alpha.push(float(a, n)?);
        rho.push(float(r, n)?);
        psi.push(float(p, n)?);
    }
    let Some(summary_line) = summary_at else {
        return Err(err(0, "missing `key,value` summary section"));
    };
    if ids.is_empty() {
        return Err(err(summary_line, "no user rows"));
    }
    let (mut nu, mut status, mut server_load, mut dropped) = (None, None, None, None);
    for (n, line) in lines {
        if line.is_empty() {
            continue;
        }
        let (key, value) = line
            .split_once(',')
            .ok_or_else(|| err(n, format!("expected `key,value`, got `{line}`")))?;
        let slot_taken = |taken: bool| {
            if taken {
                Err(err(n, format!("duplicate key `{key}`")))
            } else {
                Ok(())
            }
        };
        match key {
            "nu" => {
                slot_taken(nu.is_some())?;
                nu = Some(float(value, n)?);
            }
            "status" => {
                slot_taken(status.is_some())?;
                status = Some(value.parse::<LoadStatus>().map_err(|m| err(n, m))?);
            }
            "server_load" => {
                slot_taken(server_load.is_some())?;
                server_load = Some(float(value, n)?);
            }
            "dropped" => {
                slot_taken(dropped.is_some())?;
                let list = if value.trim().is_empty() {
                    Vec::new()
                } else {
                    value
                        .split(';')
                        .map(|v| user_id(v, n))
                        .collect::<Result<Vec<_>, _>>()?
                };
                dropped = Some(list);
            }
            "lambda" | "e_sum_opt_j" | "e_sum_baseline_j" => {
                float(value, n)?;
            }
            "n_dropped" => {
                value
                    .trim()
                    .parse::<usize>()
                    .map_err(|_| err(n, format!("`{value}` is not a count")))?;
            }
            other => return Err(err(n, format!("unknown key `{other}`"))),
        }
    }
    let missing = |what: &str| err(0, format!("missing `{what}` row"));
    Ok(SolutionFile {
        ids,
        solution: OffloadSolution {
            alpha,
            nu: nu.ok_or_else(|| missing("nu"))?,
            psi,
            rho,
            status: status.ok_or_else(|| missing("status"))?,
            dropped: dropped.unwrap_or_default(),
            server_load: server_load.ok_or_else(|| missing("server_load"))?,
        },
    })
}
