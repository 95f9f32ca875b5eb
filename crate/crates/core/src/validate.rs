//! Structural validation of a program-model dump plus the dominator and
//! natural-loop analyses the rest of the crate relies on.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use serde::{Deserialize, Serialize};

use crate::model::{BlockId, ConditionShape, ControlFlowGraph, FocalMethod, Outcome, ProgramModel, TermKind};
use crate::shape::classify;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IssueKind {
    DuplicateFunction,
    DuplicateBlock,
    MissingEntry,
    EmptyExits,
    DanglingExit,
    DanglingEdge,
    BranchArity,
    DuplicateLabel,
    MixedLabels,
    SingleSuccessorArity,
    ReturnArity,
    MissingCondition,
    UnexpectedCondition,
    ShapeMismatch,
    ReturnNotExit,
    ExitNotReturn,
    UnexpectedReturnExpr,
    BadSpan,
    BackEdgeMismatch,
    UnknownRef,
}

impl fmt::Display for IssueKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        use IssueKind::*;
        f.write_str(match self {
            DuplicateFunction => "duplicate function id",
            DuplicateBlock => "duplicate block id",
            MissingEntry => "missing entry",
            EmptyExits => "empty exits",
            DanglingExit => "dangling exit",
            DanglingEdge => "dangling edge",
            BranchArity => "branch arity",
            DuplicateLabel => "duplicate label",
            MixedLabels => "mixed labels",
            SingleSuccessorArity => "successor arity",
            ReturnArity => "return arity",
            MissingCondition => "missing condition",
            UnexpectedCondition => "unexpected condition",
            ShapeMismatch => "shape mismatch",
            ReturnNotExit => "return not exit",
            ExitNotReturn => "exit not return",
            UnexpectedReturnExpr => "unexpected return expr",
            BadSpan => "bad span",
            BackEdgeMismatch => "back edge mismatch",
            UnknownRef => "unknown ref",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ValidationIssue {
    /// `function` or `function/bbN`.
    pub entity: String,
    pub kind: IssueKind,
    pub detail: String,
}

impl fmt::Display for ValidationIssue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}: {}", self.entity, self.kind, self.detail)
    }
}

pub fn validate_model(model: &ProgramModel) -> Vec<ValidationIssue> {
    let mut issues = Vec::new();
    let mut seen = BTreeSet::new();
    for f in &model.functions {
        if !seen.insert(f.id.as_str()) {
            issues.push(ValidationIssue {
                entity: f.id.clone(),
                kind: IssueKind::DuplicateFunction,
                detail: format!("function id `{}` appears more than once", f.id),
            });
        }
        issues.extend(validate_cfg(&f.id, &f.cfg));
        issues.extend(validate_refs(f, model));
    }
    issues
}

fn validate_refs(f: &FocalMethod, model: &ProgramModel) -> Vec<ValidationIssue> {
    f.context_refs
        .ref_ids()
        .filter(|id| model.function(id).is_none())
        .map(|id| ValidationIssue {
            entity: f.id.clone(),
            kind: IssueKind::UnknownRef,
            detail: format!("context ref `{id}` names no function in the dump"),
        })
        .collect()
}

/// Every invariant of one graph. `owner` prefixes the entity names.
pub fn validate_cfg(owner: &str, cfg: &ControlFlowGraph) -> Vec<ValidationIssue> {
    let mut issues = Vec::new();
    let mut push = |entity: String, kind, detail: String| issues.push(ValidationIssue { entity, kind, detail });

    let mut ids = BTreeSet::new();
    for b in &cfg.blocks {
        if !ids.insert(b.id) {
            push(format!("{owner}/bb{}", b.id), IssueKind::DuplicateBlock, format!("block {} declared twice", b.id));
        }
    }
    if !ids.contains(&cfg.entry) {
        push(String::from(owner), IssueKind::MissingEntry, format!("entry block {} does not exist", cfg.entry));
    }
    if cfg.exits.is_empty() {
        push(String::from(owner), IssueKind::EmptyExits, String::from("no exit blocks declared"));
    }
    for &e in &cfg.exits {
        if !ids.contains(&e) {
            push(String::from(owner), IssueKind::DanglingExit, format!("exit block {e} does not exist"));
        }
    }

    for b in &cfg.blocks {
        let entity = format!("{owner}/bb{}", b.id);
        let t = &b.term;
        for target in &t.targets {
            if !ids.contains(&target.to) {
                push(entity.clone(), IssueKind::DanglingEdge, format!("edge to nonexistent block {}", target.to));
            }
        }
        match t.kind {
            TermKind::Branch => {
                if t.targets.len() < 2 {
                    push(entity.clone(), IssueKind::BranchArity, format!("branch has {} target(s), needs at least 2", t.targets.len()));
                }
                let labels: BTreeSet<_> = t.targets.iter().map(|x| &x.label).collect();
                if labels.len() != t.targets.len() {
                    push(entity.clone(), IssueKind::DuplicateLabel, String::from("outcome labels are not distinct"));
                }
                let bools = t.targets.iter().filter(|x| matches!(x.label, Outcome::Bool(_))).count();
                if bools != 0 && bools != t.targets.len() {
                    push(entity.clone(), IssueKind::MixedLabels, String::from("boolean and string labels mixed"));
                }
                match &t.condition {
                    None => push(entity.clone(), IssueKind::MissingCondition, String::from("branch without condition")),
                    Some(c) if c.text.trim().is_empty() => {
                        push(entity.clone(), IssueKind::MissingCondition, String::from("branch condition text is empty"))
                    }
                    Some(c) => {
                        if let Some(declared) = c.declared {
                            let actual = classify(&c.text).shape();
                            if declared != ConditionShape::Other && declared != actual {
                                push(
                                    entity.clone(),
                                    IssueKind::ShapeMismatch,
                                    format!("declared {declared:?} but `{}` classifies as {actual:?}", c.text),
                                );
                            }
                        }
                    }
                }
            }
            TermKind::Goto | TermKind::Call => {
                if t.targets.len() != 1 {
                    push(entity.clone(), IssueKind::SingleSuccessorArity, format!("{} has {} targets, needs exactly 1", t.kind, t.targets.len()));
                }
            }
            TermKind::Return => {
                if !t.targets.is_empty() {
                    push(entity.clone(), IssueKind::ReturnArity, format!("return has {} targets", t.targets.len()));
                }
                if !cfg.is_exit(b.id) {
                    push(entity.clone(), IssueKind::ReturnNotExit, String::from("return block not listed in exits"));
                }
            }
        }
        if t.kind != TermKind::Branch && t.condition.is_some() {
            push(entity.clone(), IssueKind::UnexpectedCondition, format!("{} terminator carries a condition", t.kind));
        }
        if t.kind != TermKind::Return && t.return_expr.is_some() {
            push(entity.clone(), IssueKind::UnexpectedReturnExpr, format!("{} terminator carries a return expression", t.kind));
        }
        if b.source_span.0 > b.source_span.1 {
            push(entity.clone(), IssueKind::BadSpan, format!("span {}..{} is reversed", b.source_span.0, b.source_span.1));
        }
    }
    for &e in &cfg.exits {
        if let Some(b) = cfg.block(e) {
            if b.term.kind != TermKind::Return {
                push(format!("{owner}/bb{e}"), IssueKind::ExitNotReturn, format!("exit block ends in {}", b.term.kind));
            }
        }
    }

    // Dominator analysis only makes sense on a structurally sound graph.
    if issues.is_empty() {
        if let Some(declared) = &cfg.declared_back_edges {
            let mut declared = declared.clone();
            declared.sort_unstable();
            declared.dedup();
            let computed = cfg.back_edges();
            if declared != computed {
                issues.push(ValidationIssue {
                    entity: String::from(owner),
                    kind: IssueKind::BackEdgeMismatch,
                    detail: format!("declared {declared:?}, dominator analysis gives {computed:?}"),
                });
            }
        }
    }
    issues
}

/// Immediate dominators of the blocks reachable from the entry.
pub struct Dominators {
    index: BTreeMap<BlockId, usize>,
    ids: Vec<BlockId>,
    /// `idom[i]`, `None` for unreachable blocks; the entry is its own idom.
    idom: Vec<Option<usize>>,
}

impl Dominators {
    /// Iterative algorithm of Cooper, Harvey and Kennedy over reverse postorder.
    pub fn compute(cfg: &ControlFlowGraph) -> Self {
        let index = cfg.index();
        let ids: Vec<BlockId> = cfg.blocks.iter().map(|b| b.id).collect();
        let n = ids.len();
        let succ: Vec<Vec<usize>> = cfg
            .blocks
            .iter()
            .map(|b| b.term.targets.iter().filter_map(|t| index.get(&t.to).copied()).collect())
            .collect();
        let mut idom = vec![None; n];
        let Some(&entry) = index.get(&cfg.entry) else {
            return Dominators { index, ids, idom };
        };

        let rpo = reverse_postorder(entry, &succ);
        let mut order = vec![usize::MAX; n];
        for (i, &b) in rpo.iter().enumerate() {
            order[b] = i;
        }
        let mut preds = vec![Vec::new(); n];
        for &b in &rpo {
            for &s in &succ[b] {
                preds[s].push(b);
            }
        }

        idom[entry] = Some(entry);
        let mut changed = true;
        while changed {
            changed = false;
            for &b in rpo.iter().skip(1) {
                let mut new = None;
                for &p in &preds[b] {
                    if idom[p].is_none() {
                        continue;
                    }
                    new = Some(match new {
                        None => p,
                        Some(cur) => intersect(&idom, &order, p, cur),
                    });
                }
                if new.is_some() && idom[b] != new {
                    idom[b] = new;
                    changed = true;
                }
            }
        }
        Dominators { index, ids, idom }
    }

    pub fn is_reachable(&self, b: BlockId) -> bool {
        self.index.get(&b).is_some_and(|&i| self.idom[i].is_some())
    }

    /// Whether `a` dominates `b` (reflexive).
    pub fn dominates(&self, a: BlockId, b: BlockId) -> bool {
        let (Some(&a), Some(&b)) = (self.index.get(&a), self.index.get(&b)) else {
            return false;
        };
        if self.idom[b].is_none() {
            return false;
        }
        let mut cur = b;
        loop {
            if cur == a {
                return true;
            }
            match self.idom[cur] {
                Some(next) if next != cur => cur = next,
                _ => return false,
            }
        }
    }

    pub fn idom(&self, b: BlockId) -> Option<BlockId> {
        let i = *self.index.get(&b)?;
        self.idom[i].filter(|&d| d != i).map(|d| self.ids[d])
    }

    /// Sorted, deduplicated edges whose target dominates their source.
    pub fn back_edges(&self, cfg: &ControlFlowGraph) -> Vec<(BlockId, BlockId)> {
        let mut out: Vec<_> = cfg
            .edges()
            .filter(|&(from, to)| self.is_reachable(from) && self.dominates(to, from))
            .collect();
        out.sort_unstable();
        out.dedup();
        out
    }
}

fn intersect(idom: &[Option<usize>], order: &[usize], mut a: usize, mut b: usize) -> usize {
    while a != b {
        while order[a] > order[b] {
            a = idom[a].expect("processed block has idom");
        }
        while order[b] > order[a] {
            b = idom[b].expect("processed block has idom");
        }
    }
    a
}

fn reverse_postorder(entry: usize, succ: &[Vec<usize>]) -> Vec<usize> {
    let mut visited = vec![false; succ.len()];
    let mut post = Vec::with_capacity(succ.len());
    let mut stack = vec![(entry, 0usize)];
    visited[entry] = true;
    while let Some((node, next)) = stack.last_mut() {
        if let Some(&s) = succ[*node].get(*next) {
            *next += 1;
            if !visited[s] {
                visited[s] = true;
                stack.push((s, 0));
            }
        } else {
            post.push(*node);
            stack.pop();
        }
    }
    post.reverse();
    post
}

/// A natural loop: a header plus every block that reaches one of the
/// header's back-edge sources without passing through the header.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NaturalLoop {
    pub header: BlockId,
    pub body: BTreeSet<BlockId>,
}

/// Natural loops keyed by header (loops sharing a header are merged).
pub fn natural_loops(cfg: &ControlFlowGraph) -> Vec<NaturalLoop> {
    let mut preds: BTreeMap<BlockId, Vec<BlockId>> = BTreeMap::new();
    for (from, to) in cfg.edges() {
        preds.entry(to).or_default().push(from);
    }
    let mut loops: BTreeMap<BlockId, BTreeSet<BlockId>> = BTreeMap::new();
    for (src, header) in cfg.back_edges() {
        let body = loops.entry(header).or_insert_with(|| BTreeSet::from([header]));
        let mut work = vec![src];
        while let Some(b) = work.pop() {
            if body.insert(b) {
                work.extend(preds.get(&b).into_iter().flatten().copied());
            }
        }
    }
    loops.into_iter().map(|(header, body)| NaturalLoop { header, body }).collect()
}
