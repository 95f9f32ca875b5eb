//! Oracles and generators for tests: walk replay, exhaustive set cover,
//! diamond graphs and seeded random graphs and chain sets.

use alloc::collections::BTreeSet;
use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

pub use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::model::{
    BasicBlock, BlockId, ConditionChain, ConditionExpr, ConditionShape, ConditionStep, ControlFlowGraph, CoverageAtom,
    Outcome, TermKind, Terminator,
};
use crate::model::Target;
use crate::paths::{atom_universe, atoms_of};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Follow `chain`'s outcomes from the entry; returns the exit reached.
///
/// Fails if a branch site does not match the next step, an outcome has no
/// target, the walk ends with steps left over, or it wanders longer than any
/// real path could.
pub fn replay(cfg: &ControlFlowGraph, chain: &ConditionChain) -> Result<BlockId, String> {
    let mut at = cfg.entry;
    let mut steps = chain.steps.iter();
    let limit = (cfg.blocks.len() + 1) * (chain.steps.len() + 1);
    for _ in 0..limit {
        let b = cfg.block(at).ok_or_else(|| format!("walk reached missing bb{at}"))?;
        match b.term.kind {
            TermKind::Return => {
                if !cfg.is_exit(at) {
                    return Err(format!("bb{at} returns but is not an exit"));
                }
                return match steps.next() {
                    None => Ok(at),
                    Some(s) => Err(format!("exit bb{at} reached with step at bb{} unused", s.site)),
                };
            }
            TermKind::Goto | TermKind::Call => at = b.term.targets[0].to,
            TermKind::Branch => {
                let s = steps.next().ok_or_else(|| format!("branch bb{at} reached with no steps left"))?;
                if s.site != at {
                    return Err(format!("step names bb{} but walk is at bb{at}", s.site));
                }
                at = b
                    .term
                    .targets
                    .iter()
                    .find(|t| t.label == s.outcome)
                    .ok_or_else(|| format!("bb{at} has no `{}` target", s.outcome))?
                    .to;
            }
        }
    }
    Err(String::from("walk did not terminate"))
}

/// Size of a smallest subset of `paths` covering their whole atom universe,
/// by trying every subset. Only for small inputs.
pub fn optimum_cover_size(paths: &[ConditionChain]) -> usize {
    assert!(paths.len() <= 20, "exhaustive search over {} paths", paths.len());
    let universe: Vec<CoverageAtom> = atom_universe(paths).into_iter().collect();
    if universe.is_empty() {
        return 0;
    }
    let masks: Vec<u64> = paths
        .iter()
        .map(|p| {
            let atoms = atoms_of(p);
            universe.iter().enumerate().filter(|(_, a)| atoms.contains(a)).fold(0u64, |m, (i, _)| m | 1 << i)
        })
        .collect();
    let full = if universe.len() == 64 { u64::MAX } else { (1u64 << universe.len()) - 1 };
    let mut best = paths.len();
    for subset in 1u32..(1u32 << paths.len()) {
        let size = subset.count_ones() as usize;
        if size >= best {
            continue;
        }
        let cover = (0..paths.len()).filter(|i| subset & (1 << i) != 0).fold(0u64, |m, i| m | masks[i]);
        if cover == full {
            best = size;
        }
    }
    best
}

fn branch(id: BlockId, cond: &str, t: BlockId, f: BlockId) -> BasicBlock {
    BasicBlock {
        id,
        source_span: (id + 1, id + 1),
        term: Terminator {
            kind: TermKind::Branch,
            condition: Some(ConditionExpr::new(cond)),
            targets: vec![Target { label: Outcome::Bool(true), to: t }, Target { label: Outcome::Bool(false), to: f }],
            return_expr: None,
        },
    }
}

fn goto(id: BlockId, to: BlockId) -> BasicBlock {
    BasicBlock {
        id,
        source_span: (id + 1, id + 1),
        term: Terminator {
            kind: TermKind::Goto,
            condition: None,
            targets: vec![Target { label: Outcome::Label("goto".into()), to }],
            return_expr: None,
        },
    }
}

fn ret(id: BlockId) -> BasicBlock {
    BasicBlock {
        id,
        source_span: (id + 1, id + 1),
        term: Terminator { kind: TermKind::Return, condition: None, targets: vec![], return_expr: None },
    }
}

/// `b` if/else diamonds in sequence: every entry-exit path crosses all `b`
/// branches, so there are `2^b` paths.
pub fn diamonds(b: u32) -> ControlFlowGraph {
    let mut blocks = Vec::new();
    for i in 0..b {
        let (head, then, els, next) = (3 * i, 3 * i + 1, 3 * i + 2, 3 * (i + 1));
        blocks.push(branch(head, &format!("c{i}"), then, els));
        blocks.push(goto(then, next));
        blocks.push(goto(els, next));
    }
    blocks.push(ret(3 * b));
    ControlFlowGraph { entry: 0, exits: vec![3 * b], blocks, declared_back_edges: None }
}

/// `while c {}` as a one-block self loop plus an exit.
pub fn self_loop() -> ControlFlowGraph {
    ControlFlowGraph {
        entry: 0,
        exits: vec![1],
        blocks: vec![branch(0, "c", 0, 1), ret(1)],
        declared_back_edges: None,
    }
}

/// A random structurally valid CFG with `n` blocks (`n >= 2`).
///
/// The last block returns. Every other block either branches or jumps;
/// jumps always go forward, branches have one forward target and one
/// arbitrary target, so every cycle contains a branch and every block can
/// reach the exit.
pub fn random_cfg<R: Rng>(rng: &mut R, n: u32) -> ControlFlowGraph {
    assert!(n >= 2);
    let mut blocks = Vec::new();
    for id in 0..n - 1 {
        let forward = rng.random_range(id + 1..n);
        if rng.random_bool(0.6) {
            let mut other = rng.random_range(0..n);
            if other == forward {
                other = if forward + 1 < n { forward + 1 } else { id };
            }
            let (t, f) = if rng.random_bool(0.5) { (forward, other) } else { (other, forward) };
            blocks.push(branch(id, &format!("c{id}"), t, f));
        } else {
            blocks.push(goto(id, forward));
        }
    }
    blocks.push(ret(n - 1));
    ControlFlowGraph { entry: 0, exits: vec![n - 1], blocks, declared_back_edges: None }
}

/// Random chains over at most `sites` branch sites; each chain visits
/// distinct sites, with occurrence 1 or 2 and a random outcome.
pub fn random_chains<R: Rng>(rng: &mut R, paths: usize, sites: u32) -> Vec<ConditionChain> {
    (0..paths)
        .map(|id| {
            let len = rng.random_range(1..=sites as usize);
            let mut used = BTreeSet::new();
            let mut steps = Vec::new();
            while steps.len() < len {
                let site = rng.random_range(0..sites);
                let occurrence = rng.random_range(1..=2u32);
                if !used.insert((site, occurrence)) {
                    continue;
                }
                steps.push(ConditionStep {
                    site,
                    occurrence,
                    outcome: Outcome::Bool(rng.random_bool(0.5)),
                    loop_terminating: occurrence == 2,
                    condition: format!("c{site}"),
                    shape: ConditionShape::Other,
                });
            }
            ConditionChain { path_id: id as u32, steps, return_descriptor: String::from("unit") }
        })
        .collect()
}
