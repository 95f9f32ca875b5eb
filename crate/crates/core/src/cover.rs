//! Greedy set-cover minimization of condition chains.

use alloc::collections::BTreeSet;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::model::{ConditionChain, CoverageAtom};
use crate::paths::{atom_universe, atoms_of};

/// Pick chains until every atom of the input is covered, each time taking
/// the chain that covers the most still-uncovered atoms (lowest `path_id`
/// on ties). The result is in selection order.
pub fn minimize(paths: &[ConditionChain]) -> Vec<ConditionChain> {
    let atoms: Vec<BTreeSet<CoverageAtom>> = paths.iter().map(atoms_of).collect();
    let mut uncovered = atom_universe(paths);
    let mut taken = alloc::vec![false; paths.len()];
    let mut selected = Vec::new();

    if uncovered.is_empty() {
        // No branch conditions at all: a single chain exercises the method.
        if let Some(first) = paths.iter().min_by_key(|p| p.path_id) {
            selected.push(first.clone());
        }
        return selected;
    }

    while !uncovered.is_empty() {
        let best = (0..paths.len())
            .filter(|&i| !taken[i])
            .map(|i| (atoms[i].intersection(&uncovered).count(), i))
            .max_by(|(ga, ia), (gb, ib)| ga.cmp(gb).then(paths[*ib].path_id.cmp(&paths[*ia].path_id)));
        let Some((gain, i)) = best else { break };
        // The universe is built from these very chains, so some chain
        // always makes progress.
        assert!(gain > 0, "uncovered atoms that no chain covers");
        taken[i] = true;
        for a in &atoms[i] {
            uncovered.remove(a);
        }
        selected.push(paths[i].clone());
    }
    selected
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoverageSummary {
    pub covered: usize,
    pub total: usize,
    pub ratio: f64,
    pub uncovered: Vec<CoverageAtom>,
}

pub fn coverage_report(selected: &[ConditionChain], all: &[ConditionChain]) -> CoverageSummary {
    let universe = atom_universe(all);
    let hit = atom_universe(selected);
    let uncovered: Vec<_> = universe.difference(&hit).cloned().collect();
    let total = universe.len();
    let covered = total - uncovered.len();
    let ratio = if total == 0 {
        if selected.is_empty() { 0.0 } else { 1.0 }
    } else {
        covered as f64 / total as f64
    };
    CoverageSummary { covered, total, ratio, uncovered }
}
