//! Condition-chain enumeration over a control-flow graph.
//!
//! The traversal is a depth-first preorder walk from the entry. Every branch
//! outcome is explored in the order its target is declared. A branch site
//! may be evaluated at most `max_occurrences_per_site` times along one path;
//! at its last permitted evaluation only the outcomes that leave the
//! innermost loop around the site are followed, and the resulting step is
//! flagged loop-terminating.

use alloc::collections::BTreeSet;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::model::{BlockId, ConditionChain, ConditionStep, ControlFlowGraph, CoverageAtom, TermKind};
use crate::validate::natural_loops;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TraversalConfig {
    pub max_occurrences_per_site: u32,
    pub max_paths: usize,
}

impl Default for TraversalConfig {
    fn default() -> Self {
        TraversalConfig { max_occurrences_per_site: 2, max_paths: 4096 }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum PathError {
    #[error("more than {0} paths")]
    PathBudgetExceeded(usize),
    #[error("malformed cfg: {0}")]
    MalformedCfg(String),
}

pub const UNIT_RETURN: &str = "unit";

/// Per-branch-block facts the traversal needs, indexed like `cfg.blocks`.
struct Prepared {
    /// For branch blocks: whether each target (declaration order) leaves the
    /// innermost natural loop containing the block.
    leaves_loop: Vec<Vec<bool>>,
    target_idx: Vec<Vec<usize>>,
}

fn prepare(cfg: &ControlFlowGraph) -> Result<Prepared, PathError> {
    let index = cfg.index();
    let loops = natural_loops(cfg);
    let mut leaves_loop = Vec::with_capacity(cfg.blocks.len());
    let mut target_idx = Vec::with_capacity(cfg.blocks.len());
    for b in &cfg.blocks {
        let innermost = loops.iter().filter(|l| l.body.contains(&b.id)).min_by_key(|l| l.body.len());
        let mut leaves = Vec::with_capacity(b.term.targets.len());
        let mut idx = Vec::with_capacity(b.term.targets.len());
        for t in &b.term.targets {
            let i = *index
                .get(&t.to)
                .ok_or_else(|| PathError::MalformedCfg(alloc::format!("bb{} targets missing bb{}", b.id, t.to)))?;
            idx.push(i);
            leaves.push(innermost.is_some_and(|l| !l.body.contains(&t.to)));
        }
        leaves_loop.push(leaves);
        target_idx.push(idx);
    }
    Ok(Prepared { leaves_loop, target_idx })
}

struct State {
    block: usize,
    steps: Vec<ConditionStep>,
    occurrences: Vec<u32>,
    /// Blocks entered since the last branch; revisiting one means a
    /// branch-free cycle that can never reach an exit.
    since_branch: Vec<usize>,
}

pub fn enumerate_paths(cfg: &ControlFlowGraph, config: &TraversalConfig) -> Result<Vec<ConditionChain>, PathError> {
    if config.max_occurrences_per_site == 0 {
        return Err(PathError::MalformedCfg("max_occurrences_per_site must be at least 1".into()));
    }
    let index = cfg.index();
    let entry = *index
        .get(&cfg.entry)
        .ok_or_else(|| PathError::MalformedCfg(alloc::format!("entry bb{} does not exist", cfg.entry)))?;
    let prep = prepare(cfg)?;
    let max_occ = config.max_occurrences_per_site;

    let mut chains = Vec::new();
    let mut stack = vec![State {
        block: entry,
        steps: Vec::new(),
        occurrences: vec![0; cfg.blocks.len()],
        since_branch: vec![entry],
    }];

    while let Some(state) = stack.pop() {
        let block = &cfg.blocks[state.block];
        let term = &block.term;
        if cfg.is_exit(block.id) {
            if term.kind != TermKind::Return {
                return Err(PathError::MalformedCfg(alloc::format!("exit bb{} does not return", block.id)));
            }
            if chains.len() == config.max_paths {
                return Err(PathError::PathBudgetExceeded(config.max_paths));
            }
            chains.push(ConditionChain {
                path_id: chains.len() as u32,
                steps: state.steps,
                return_descriptor: return_descriptor(term.return_expr.as_deref()),
            });
            continue;
        }
        match term.kind {
            TermKind::Return => {
                return Err(PathError::MalformedCfg(alloc::format!("bb{} returns but is not an exit", block.id)));
            }
            TermKind::Goto | TermKind::Call => {
                let [next] = prep.target_idx[state.block][..] else {
                    return Err(PathError::MalformedCfg(alloc::format!("bb{} needs exactly one successor", block.id)));
                };
                if state.since_branch.contains(&next) {
                    continue;
                }
                let mut state = state;
                state.since_branch.push(next);
                state.block = next;
                stack.push(state);
            }
            TermKind::Branch => {
                let cond = term
                    .condition
                    .as_ref()
                    .ok_or_else(|| PathError::MalformedCfg(alloc::format!("branch bb{} has no condition", block.id)))?;
                let occurrence = state.occurrences[state.block] + 1;
                if occurrence > max_occ {
                    continue;
                }
                let terminating = occurrence > 1 && occurrence == max_occ;
                let leaves = &prep.leaves_loop[state.block];
                let restrict = terminating && leaves.iter().any(|&l| l);
                let shape = cond.shape();
                // Reverse so that the first declared target is popped first.
                for (k, target) in term.targets.iter().enumerate().rev() {
                    if restrict && !leaves[k] {
                        continue;
                    }
                    let mut steps = state.steps.clone();
                    steps.push(ConditionStep {
                        site: block.id,
                        occurrence,
                        outcome: target.label.clone(),
                        loop_terminating: terminating,
                        condition: cond.text.clone(),
                        shape,
                    });
                    let mut occurrences = state.occurrences.clone();
                    occurrences[state.block] = occurrence;
                    let next = prep.target_idx[state.block][k];
                    stack.push(State { block: next, steps, occurrences, since_branch: vec![next] });
                }
            }
        }
    }
    Ok(chains)
}

fn return_descriptor(expr: Option<&str>) -> String {
    match expr.map(str::trim) {
        None | Some("") | Some("()") => UNIT_RETURN.to_string(),
        Some(e) => e.to_string(),
    }
}

/// The coverage atoms of one chain: one per step.
pub fn atoms_of(chain: &ConditionChain) -> BTreeSet<CoverageAtom> {
    chain.steps.iter().map(ConditionStep::atom).collect()
}

/// Union of the atoms of every chain.
pub fn atom_universe<'a>(chains: impl IntoIterator<Item = &'a ConditionChain>) -> BTreeSet<CoverageAtom> {
    chains.into_iter().flat_map(|c| c.steps.iter().map(ConditionStep::atom)).collect()
}

/// Whether any site occurs twice with the same occurrence ordinal.
pub fn has_duplicate_steps(chain: &ConditionChain) -> bool {
    let mut seen = BTreeSet::new();
    chain.steps.iter().any(|s| !seen.insert((s.site, s.occurrence)))
}

/// Blocks that lie on a cycle (reachable from themselves).
pub fn cyclic_blocks(cfg: &ControlFlowGraph) -> BTreeSet<BlockId> {
    cfg.blocks
        .iter()
        .filter(|b| {
            let mut seen = BTreeSet::new();
            let mut work: Vec<BlockId> = b.term.targets.iter().map(|t| t.to).collect();
            while let Some(x) = work.pop() {
                if x == b.id {
                    return true;
                }
                if seen.insert(x) {
                    if let Some(blk) = cfg.block(x) {
                        work.extend(blk.term.targets.iter().map(|t| t.to));
                    }
                }
            }
            false
        })
        .map(|b| b.id)
        .collect()
}
