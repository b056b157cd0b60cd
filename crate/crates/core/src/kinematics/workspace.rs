//! Sampled reachable workspace with the best manipulability seen per cell.

use std::collections::BTreeMap;

use nalgebra::Vector3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::agent::AgentModel;
use super::{chain_jacobian, manipulability_of};
use crate::error::{Error, Result};

/// Samples per RNG substream. Batch `b` always draws from stream `b`, so a
/// run with more samples extends, never reshuffles, a shorter one.
const BATCH: usize = 4096;

pub type CellIndex = [i64; 3];

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Aabb {
    pub min: Vector3<f64>,
    pub max: Vector3<f64>,
}

impl Aabb {
    pub fn cube(half_extent: f64) -> Self {
        Aabb {
            min: Vector3::repeat(-half_extent),
            max: Vector3::repeat(half_extent),
        }
    }

    pub fn union(&self, other: &Aabb) -> Aabb {
        Aabb {
            min: self.min.inf(&other.min),
            max: self.max.sup(&other.max),
        }
    }

    pub fn contains(&self, other: &Aabb) -> bool {
        (0..3).all(|i| self.min[i] <= other.min[i] && self.max[i] >= other.max[i])
    }

    fn index_range(&self, cell_size: f64) -> (CellIndex, CellIndex) {
        (cell_of(&self.min, cell_size), cell_of(&self.max, cell_size))
    }
}

fn cell_of(p: &Vector3<f64>, cell_size: f64) -> CellIndex {
    [
        (p.x / cell_size).floor() as i64,
        (p.y / cell_size).floor() as i64,
        (p.z / cell_size).floor() as i64,
    ]
}

/// Cells are anchored at the base origin: cell `i` spans
/// `[i * cell_size, (i + 1) * cell_size)` on each axis.
#[derive(Debug, Clone, PartialEq)]
pub struct WorkspaceGrid {
    pub cell_size: f64,
    pub bounds: Aabb,
    pub cells: BTreeMap<CellIndex, f64>,
    pub samples_used: usize,
    pub seed: u64,
}

impl WorkspaceGrid {
    pub fn cell_of(&self, p: &Vector3<f64>) -> CellIndex {
        cell_of(p, self.cell_size)
    }

    pub fn get(&self, cell: &CellIndex) -> Option<f64> {
        self.cells.get(cell).copied()
    }

    pub fn len(&self) -> usize {
        self.cells.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }

    pub fn index_in_bounds(&self, cell: &CellIndex) -> bool {
        let (lo, hi) = self.bounds.index_range(self.cell_size);
        (0..3).all(|i| cell[i] >= lo[i] && cell[i] <= hi[i])
    }

    /// Center of a cell in meters.
    pub fn cell_center(&self, cell: &CellIndex) -> Vector3<f64> {
        Vector3::new(
            (cell[0] as f64 + 0.5) * self.cell_size,
            (cell[1] as f64 + 0.5) * self.cell_size,
            (cell[2] as f64 + 0.5) * self.cell_size,
        )
    }

    /// Two grids are comparable cell by cell only with the same cell size and bounds.
    pub fn check_comparable(&self, other: &WorkspaceGrid) -> Result<()> {
        if self.cell_size != other.cell_size {
            return Err(Error::invalid(format!(
                "workspace grids differ in cell size ({} vs {})",
                self.cell_size, other.cell_size
            )));
        }
        if self.bounds != other.bounds {
            return Err(Error::invalid("workspace grids differ in bounds"));
        }
        Ok(())
    }
}

/// Samples `n_samples` joint configurations uniformly inside the joint limits
/// and records the maximum chain manipulability per occupied cell.
///
/// Bounds default to the cube enclosing the chain's reach.
pub fn sample_workspace(
    agent: &AgentModel,
    chain: &str,
    n_samples: usize,
    cell_size: f64,
    seed: u64,
) -> Result<WorkspaceGrid> {
    let reach = agent.chain_reach(chain)?;
    sample_workspace_within(agent, chain, n_samples, cell_size, Aabb::cube(reach), seed)
}

/// Like [`sample_workspace`] with explicit bounds, which must enclose the
/// chain's reach. Use a shared box when two agents' grids will be compared.
pub fn sample_workspace_within(
    agent: &AgentModel,
    chain: &str,
    n_samples: usize,
    cell_size: f64,
    bounds: Aabb,
    seed: u64,
) -> Result<WorkspaceGrid> {
    if n_samples == 0 {
        return Err(Error::invalid("n_samples must be > 0"));
    }
    if !(cell_size.is_finite() && cell_size > 0.0) {
        return Err(Error::invalid("cell_size must be > 0"));
    }
    let reach = agent.chain_reach(chain)?;
    if !bounds.contains(&Aabb::cube(reach)) {
        return Err(Error::invalid(format!(
            "bounds do not enclose the reach ({reach} m) of chain `{chain}`"
        )));
    }
    let spec = agent.chain(chain)?.clone();
    let tip_link = *spec.joints.last().expect("chains are non-empty");
    let limits: Vec<[f64; 2]> = agent.joints().iter().map(|j| j.limits).collect();

    let batches = n_samples.div_ceil(BATCH);
    let partial: Vec<BTreeMap<CellIndex, f64>> = (0..batches)
        .into_par_iter()
        .map(|b| {
            let count = BATCH.min(n_samples - b * BATCH);
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(b as u64);
            let mut cells = BTreeMap::new();
            let mut angles = vec![0.0; limits.len()];
            for _ in 0..count {
                for (a, [lo, hi]) in angles.iter_mut().zip(&limits) {
                    *a = rng.random_range(*lo..=*hi);
                }
                let frames = agent.frames(&angles);
                let tip = frames.link_ends[tip_link];
                let m = manipulability_of(&chain_jacobian(&frames, &spec.joints));
                let cell = cell_of(&tip, cell_size);
                let slot = cells.entry(cell).or_insert(0.0_f64);
                *slot = slot.max(m);
            }
            cells
        })
        .collect();

    let mut cells = BTreeMap::new();
    for part in partial {
        for (cell, m) in part {
            let slot = cells.entry(cell).or_insert(0.0_f64);
            *slot = slot.max(m);
        }
    }
    Ok(WorkspaceGrid {
        cell_size,
        bounds,
        cells,
        samples_used: n_samples,
        seed,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kinematics::planar_arm;

    #[test]
    fn deterministic_for_equal_seeds() {
        let a = planar_arm("a", &[0.6, 0.4]).unwrap();
        let b = planar_arm("b", &[0.6, 0.4]).unwrap();
        let ga = sample_workspace(&a, "arm", 10_000, 0.05, 3).unwrap();
        let gb = sample_workspace(&b, "arm", 10_000, 0.05, 3).unwrap();
        assert_eq!(ga.cells, gb.cells);
        assert!(!ga.is_empty());
    }

    #[test]
    fn one_link_cells_hug_the_unit_circle() {
        let arm = planar_arm("one", &[1.0]).unwrap();
        let cell = 0.05;
        let grid = sample_workspace(&arm, "arm", 20_000, cell, 9).unwrap();
        let diag = cell * 3f64.sqrt();
        for idx in grid.cells.keys() {
            let r = grid.cell_center(idx).norm();
            assert!((r - 1.0).abs() <= diag, "cell {idx:?} at radius {r}");
            assert!(grid.index_in_bounds(idx));
        }
    }

    #[test]
    fn more_samples_never_lower_a_cell() {
        let arm = planar_arm("two", &[0.5, 0.5]).unwrap();
        for n in [1_000, 5_000, 9_000] {
            let small = sample_workspace(&arm, "arm", n, 0.05, 11).unwrap();
            let large = sample_workspace(&arm, "arm", 2 * n, 0.05, 11).unwrap();
            for (cell, m) in &small.cells {
                assert!(large.cells[cell] >= *m);
            }
        }
    }

    #[test]
    fn rejects_bad_inputs() {
        let arm = planar_arm("two", &[0.5, 0.5]).unwrap();
        assert!(sample_workspace(&arm, "arm", 0, 0.05, 1).is_err());
        assert!(sample_workspace(&arm, "arm", 10, 0.0, 1).is_err());
        assert!(sample_workspace(&arm, "leg", 10, 0.05, 1).is_err());
        assert!(sample_workspace_within(&arm, "arm", 10, 0.05, Aabb::cube(0.5), 1).is_err());
    }
}
