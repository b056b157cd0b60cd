//! Directional transferability between agents from workspace manipulability,
//! and chain planning over a fleet of trained pairs.
//!
//! For a mapping from A to B:
//!
//! ```text
//! L = length_B / max(length_A, length_B)
//! S = |{cells of A where M_B - M_A >= 0}| / |cells of A|
//! D = sigmoid(sum over cells of A with M_B < M_A of M_A ln(M_A / max(M_B, eps)))
//! T = alpha L [S + (1 - D)(1 - S)]
//! ```
//!
//! Cells that B never reached count with `M_B = 0`.

mod fleet;

use std::io::Write;

use crate::error::{Error, Result};
use crate::kinematics::{sample_workspace_within, Aabb, AgentModel, WorkspaceGrid};

pub use fleet::{
    min_models, plan_chain, AgentKind, CandidateEval, ChainPlan, FleetAgent, FleetEdge, FleetGraph,
    Objective, QueryPath,
};

/// Floor applied to `M_B` inside the dissimilarity logarithm.
pub const MANIPULABILITY_FLOOR: f64 = 1e-6;

/// Smallest alpha returned; keeps alpha inside (0, 1].
pub const ALPHA_MIN: f64 = 1e-12;

const RANGE_SLACK: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct TransferabilityReport {
    pub from: String,
    pub to: String,
    pub length_ratio: f64,
    pub sufficient_ratio: f64,
    pub dissimilarity: f64,
    pub alpha: f64,
    pub transferability: f64,
}

impl TransferabilityReport {
    /// Recomputes T from the stored components.
    pub fn recomputed(&self) -> Result<f64> {
        transferability(
            self.alpha,
            self.length_ratio,
            self.sufficient_ratio,
            self.dissimilarity,
        )
    }
}

pub fn length_ratio(length_a: f64, length_b: f64) -> Result<f64> {
    if !(length_a > 0.0 && length_b > 0.0 && length_a.is_finite() && length_b.is_finite()) {
        return Err(Error::invalid(format!(
            "lengths must be finite and > 0 (got {length_a}, {length_b})"
        )));
    }
    Ok(length_b / length_a.max(length_b))
}

fn comparable(grid_a: &WorkspaceGrid, grid_b: &WorkspaceGrid) -> Result<()> {
    grid_a.check_comparable(grid_b)?;
    if grid_a.is_empty() {
        return Err(Error::invalid("workspace of A is empty"));
    }
    Ok(())
}

pub fn sufficient_ratio(grid_a: &WorkspaceGrid, grid_b: &WorkspaceGrid) -> Result<f64> {
    comparable(grid_a, grid_b)?;
    let sufficient = grid_a
        .cells
        .iter()
        .filter(|(cell, m_a)| grid_b.get(cell).unwrap_or(0.0) - **m_a >= 0.0)
        .count();
    Ok(sufficient as f64 / grid_a.len() as f64)
}

/// The sum inside the sigmoid; `None` when the lack region is empty.
pub fn dissimilarity_sum(grid_a: &WorkspaceGrid, grid_b: &WorkspaceGrid) -> Result<Option<f64>> {
    comparable(grid_a, grid_b)?;
    let mut any = false;
    let mut sum = 0.0;
    for (cell, &m_a) in &grid_a.cells {
        let m_b = grid_b.get(cell).unwrap_or(0.0);
        if m_b - m_a < 0.0 {
            any = true;
            sum += m_a * (m_a / m_b.max(MANIPULABILITY_FLOOR)).ln();
        }
    }
    Ok(any.then_some(sum))
}

pub fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Dissimilarity in the lack-of-manipulability region, 0 when that region
/// is empty.
pub fn dissimilarity(grid_a: &WorkspaceGrid, grid_b: &WorkspaceGrid) -> Result<f64> {
    Ok(dissimilarity_sum(grid_a, grid_b)?.map_or(0.0, sigmoid))
}

fn check_range(
    name: &str,
    v: f64,
    lo: f64,
    hi: f64,
    open_low: bool,
    open_high: bool,
) -> Result<()> {
    let low_ok = if open_low {
        v > lo
    } else {
        v >= lo - RANGE_SLACK
    };
    let high_ok = if open_high {
        v < hi
    } else {
        v <= hi + RANGE_SLACK
    };
    if v.is_finite() && low_ok && high_ok {
        Ok(())
    } else {
        Err(Error::invalid(format!("{name} = {v} is out of range")))
    }
}

pub fn transferability(alpha: f64, length_ratio: f64, s: f64, d: f64) -> Result<f64> {
    check_range("alpha", alpha, 0.0, 1.0, true, false)?;
    check_range("length ratio", length_ratio, 0.0, 1.0, true, false)?;
    check_range("sufficient ratio", s, 0.0, 1.0, false, false)?;
    // The sigmoid saturates to exactly 1 in floating point for large sums.
    check_range("dissimilarity", d, 0.0, 1.0, false, false)?;
    Ok(alpha * length_ratio * (s + (1.0 - d) * (1.0 - s)))
}

/// Best sensor sigma in the system over the noisier sensor of the pair.
pub fn alpha_for_pair(sigma_a: f64, sigma_b: f64, sigma_best: f64) -> Result<f64> {
    for s in [sigma_a, sigma_b, sigma_best] {
        if !(s >= 0.0 && s.is_finite()) {
            return Err(Error::invalid(format!(
                "sensor sigma {s} must be finite and >= 0"
            )));
        }
    }
    let worst = sigma_a.max(sigma_b);
    if worst == 0.0 {
        return Ok(1.0);
    }
    Ok((sigma_best / worst).clamp(ALPHA_MIN, 1.0))
}

pub fn chain_transferability(hops: &[f64]) -> Result<f64> {
    for &t in hops {
        check_range("hop transferability", t, 0.0, 1.0, false, false)?;
    }
    Ok(hops.iter().product())
}

pub fn report(
    from: &str,
    to: &str,
    lengths: (f64, f64),
    grid_from: &WorkspaceGrid,
    grid_to: &WorkspaceGrid,
    alpha: f64,
) -> Result<TransferabilityReport> {
    let l = length_ratio(lengths.0, lengths.1)?;
    let s = sufficient_ratio(grid_from, grid_to)?;
    let d = dissimilarity(grid_from, grid_to)?;
    let t = transferability(alpha, l, s, d)?;
    Ok(TransferabilityReport {
        from: from.to_string(),
        to: to.to_string(),
        length_ratio: l,
        sufficient_ratio: s,
        dissimilarity: d,
        alpha,
        transferability: t,
    })
}

/// Workspace sampling settings for comparing two agents.
#[derive(Debug, Clone, PartialEq)]
pub struct WorkspaceOptions {
    pub n_samples: usize,
    /// Defaults to the longer agent's total length over 20.
    pub cell_size: Option<f64>,
    pub seed: u64,
    pub chain_a: String,
    pub chain_b: String,
}

/// Both agents' grids over a shared box enclosing both reaches.
pub fn paired_grids(
    a: &AgentModel,
    b: &AgentModel,
    opts: &WorkspaceOptions,
) -> Result<(WorkspaceGrid, WorkspaceGrid)> {
    let cell = opts
        .cell_size
        .unwrap_or(a.total_length().max(b.total_length()) / 20.0);
    let bounds =
        Aabb::cube(a.chain_reach(&opts.chain_a)?).union(&Aabb::cube(b.chain_reach(&opts.chain_b)?));
    let ga = sample_workspace_within(a, &opts.chain_a, opts.n_samples, cell, bounds, opts.seed)?;
    let gb = sample_workspace_within(b, &opts.chain_b, opts.n_samples, cell, bounds, opts.seed)?;
    Ok((ga, gb))
}

/// Reports for A to B and B to A. Lengths come from each agent's
/// reference length.
pub fn analyze_pair(
    a: &AgentModel,
    b: &AgentModel,
    opts: &WorkspaceOptions,
    alpha: f64,
) -> Result<[TransferabilityReport; 2]> {
    let (ga, gb) = paired_grids(a, b, opts)?;
    let (la, lb) = (a.reference_length(), b.reference_length());
    Ok([
        report(a.name(), b.name(), (la, lb), &ga, &gb, alpha)?,
        report(b.name(), a.name(), (lb, la), &gb, &ga, alpha)?,
    ])
}

/// CSV with columns `from,to,L,one_minus_S,one_minus_D,alpha,T,E`; `errors`
/// supplies the optional measured error per report.
pub fn write_reports_csv<W: Write>(
    mut w: W,
    reports: &[TransferabilityReport],
    errors: &[Option<f64>],
) -> Result<()> {
    writeln!(w, "from,to,L,one_minus_S,one_minus_D,alpha,T,E")?;
    for (i, r) in reports.iter().enumerate() {
        let e = errors
            .get(i)
            .copied()
            .flatten()
            .map_or(String::new(), |e| e.to_string());
        writeln!(
            w,
            "{},{},{},{},{},{},{},{}",
            r.from,
            r.to,
            r.length_ratio,
            1.0 - r.sufficient_ratio,
            1.0 - r.dissimilarity,
            r.alpha,
            r.transferability,
            e
        )?;
    }
    Ok(())
}
