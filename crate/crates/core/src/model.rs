//! Shared domain types: the program-model dump, control-flow graphs,
//! condition chains and test artifacts.

use alloc::collections::BTreeMap;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt;

use serde::{Deserialize, Serialize};

use crate::context::ContextRefs;
use crate::shape::classify;

pub type BlockId = u32;

/// Top-level program-model dump: every analysable function of one crate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProgramModel {
    pub version: u32,
    #[serde(rename = "crate", default, skip_serializing_if = "Option::is_none")]
    pub crate_name: Option<String>,
    #[serde(default)]
    pub functions: Vec<FocalMethod>,
}

impl ProgramModel {
    pub fn function(&self, id: &str) -> Option<&FocalMethod> {
        self.functions.iter().find(|f| f.id == id)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FocalMethod {
    pub id: String,
    pub name: String,
    pub signature: String,
    pub body: String,
    #[serde(rename = "file")]
    pub file_path: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub container: Option<String>,
    pub cfg: ControlFlowGraph,
    #[serde(default, skip_serializing_if = "ContextRefs::is_empty")]
    pub context_refs: ContextRefs,
}

impl FocalMethod {
    /// Signature and body as one piece of source text.
    ///
    /// Dumps may store either a bare block (`{ ... }`) or the whole item in
    /// `body`; only the former gets the signature prepended.
    pub fn source_text(&self) -> String {
        let body = self.body.trim();
        if body.starts_with('{') && !self.signature.is_empty() {
            let mut s = String::with_capacity(self.signature.len() + body.len() + 1);
            s.push_str(self.signature.trim_end());
            s.push(' ');
            s.push_str(body);
            s
        } else {
            body.to_string()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ControlFlowGraph {
    pub entry: BlockId,
    pub exits: Vec<BlockId>,
    pub blocks: Vec<BasicBlock>,
    /// Back edges declared by the producer of the dump. Never trusted: see
    /// [`ControlFlowGraph::back_edges`].
    #[serde(rename = "back_edges", default, skip_serializing_if = "Option::is_none")]
    pub declared_back_edges: Option<Vec<(BlockId, BlockId)>>,
}

impl ControlFlowGraph {
    pub fn block(&self, id: BlockId) -> Option<&BasicBlock> {
        self.blocks.iter().find(|b| b.id == id)
    }

    /// Block id to position in `blocks`.
    pub fn index(&self) -> BTreeMap<BlockId, usize> {
        self.blocks.iter().enumerate().map(|(i, b)| (b.id, i)).collect()
    }

    pub fn is_exit(&self, id: BlockId) -> bool {
        self.exits.contains(&id)
    }

    /// Every `(from, to)` edge in block order, then target order.
    pub fn edges(&self) -> impl Iterator<Item = (BlockId, BlockId)> + '_ {
        self.blocks
            .iter()
            .flat_map(|b| b.term.targets.iter().map(move |t| (b.id, t.to)))
    }

    /// Back edges computed by dominator analysis (edges whose target
    /// dominates their source).
    pub fn back_edges(&self) -> Vec<(BlockId, BlockId)> {
        crate::validate::Dominators::compute(self).back_edges(self)
    }

    /// One site per branch-terminated block.
    pub fn branch_sites(&self) -> impl Iterator<Item = BranchSite<'_>> + '_ {
        self.blocks.iter().filter_map(|b| {
            b.term
                .condition
                .as_ref()
                .filter(|_| b.term.kind == TermKind::Branch)
                .map(|expr| BranchSite { site_id: b.id, expr })
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BasicBlock {
    pub id: BlockId,
    #[serde(rename = "span")]
    pub source_span: (u32, u32),
    pub term: Terminator,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TermKind {
    Branch,
    Return,
    Goto,
    Call,
}

impl fmt::Display for TermKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            TermKind::Branch => "branch",
            TermKind::Return => "return",
            TermKind::Goto => "goto",
            TermKind::Call => "call",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(from = "TerminatorWire", into = "TerminatorWire")]
pub struct Terminator {
    pub kind: TermKind,
    pub condition: Option<ConditionExpr>,
    pub targets: Vec<Target>,
    pub return_expr: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Target {
    #[serde(with = "label_as_str")]
    pub label: Outcome,
    pub to: BlockId,
}

#[derive(Serialize, Deserialize)]
struct TerminatorWire {
    kind: TermKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    cond: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    shape: Option<ConditionShape>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    targets: Vec<Target>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    ret: Option<String>,
}

impl From<TerminatorWire> for Terminator {
    fn from(w: TerminatorWire) -> Self {
        let condition = match (w.cond, w.shape) {
            (Some(text), declared) => Some(ConditionExpr { text, declared }),
            // A shape without a predicate is meaningless; keep it so that
            // validation can report it instead of silently dropping it.
            (None, Some(shape)) => Some(ConditionExpr { text: String::new(), declared: Some(shape) }),
            (None, None) => None,
        };
        Terminator { kind: w.kind, condition, targets: w.targets, return_expr: w.ret }
    }
}

impl From<Terminator> for TerminatorWire {
    fn from(t: Terminator) -> Self {
        let (cond, shape) = match t.condition {
            Some(c) => (Some(c.text), c.declared),
            None => (None, None),
        };
        TerminatorWire { kind: t.kind, cond, shape, targets: t.targets, ret: t.return_expr }
    }
}

/// Source-level branch predicate.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConditionExpr {
    pub text: String,
    /// Shape as declared by the dump, if any.
    pub declared: Option<ConditionShape>,
}

impl ConditionExpr {
    pub fn new(text: impl Into<String>) -> Self {
        ConditionExpr { text: text.into(), declared: None }
    }

    /// Declared shape, or the syntactic classification of `text`.
    pub fn shape(&self) -> ConditionShape {
        self.declared.unwrap_or_else(|| classify(&self.text).shape())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum ConditionShape {
    #[serde(rename = "single")]
    SingleBoundary,
    #[serde(rename = "range")]
    RangeBased,
    #[serde(rename = "other")]
    Other,
}

#[derive(Debug, Clone, Copy)]
pub struct BranchSite<'a> {
    pub site_id: BlockId,
    pub expr: &'a ConditionExpr,
}

/// Branch outcome. Two-way branches use booleans; multi-way dispatch uses
/// the target's string label.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Outcome {
    Bool(bool),
    Label(String),
}

impl Outcome {
    pub fn from_label(label: &str) -> Self {
        match label {
            "true" => Outcome::Bool(true),
            "false" => Outcome::Bool(false),
            other => Outcome::Label(other.to_string()),
        }
    }
}

impl fmt::Display for Outcome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Outcome::Bool(b) => write!(f, "{b}"),
            Outcome::Label(s) => f.write_str(s),
        }
    }
}

mod label_as_str {
    use super::Outcome;
    use alloc::string::{String, ToString};
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(o: &Outcome, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&o.to_string())
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Outcome, D::Error> {
        let s = String::deserialize(d)?;
        Ok(Outcome::from_label(&s))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConditionStep {
    pub site: BlockId,
    #[serde(rename = "occ")]
    pub occurrence: u32,
    pub outcome: Outcome,
    #[serde(rename = "loop_term")]
    pub loop_terminating: bool,
    #[serde(rename = "cond", default)]
    pub condition: String,
    #[serde(default = "other_shape")]
    pub shape: ConditionShape,
}

fn other_shape() -> ConditionShape {
    ConditionShape::Other
}

impl ConditionStep {
    pub fn atom(&self) -> CoverageAtom {
        CoverageAtom { site: self.site, occurrence: self.occurrence, outcome: self.outcome.clone() }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConditionChain {
    #[serde(rename = "id")]
    pub path_id: u32,
    pub steps: Vec<ConditionStep>,
    #[serde(rename = "ret")]
    pub return_descriptor: String,
}

/// `(site, occurrence, outcome)`: one element of the set-cover universe.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct CoverageAtom {
    pub site: BlockId,
    pub occurrence: u32,
    pub outcome: Outcome,
}

impl fmt::Display for CoverageAtom {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "(bb{}, {}, {})", self.site, self.occurrence, self.outcome)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TestKind {
    Path,
    BoundaryLow,
    BoundaryHigh,
}

impl fmt::Display for TestKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            TestKind::Path => "path",
            TestKind::BoundaryLow => "boundary-low",
            TestKind::BoundaryHigh => "boundary-high",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TestStatus {
    Generated,
    Compiled,
    Passed,
    Failed,
    Unrepairable,
}

impl TestStatus {
    pub fn can_advance_to(self, next: TestStatus) -> bool {
        use TestStatus::*;
        matches!(
            (self, next),
            (Generated, Compiled) | (Generated, Unrepairable) | (Compiled, Passed) | (Compiled, Failed)
        )
    }

    pub fn compiled(self) -> bool {
        matches!(self, TestStatus::Compiled | TestStatus::Passed | TestStatus::Failed)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, thiserror::Error)]
#[error("illegal test status transition {from:?} -> {to:?}")]
pub struct InvalidTransition {
    pub from: TestStatus,
    pub to: TestStatus,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TestArtifact {
    pub test_id: String,
    pub focal_id: String,
    pub path_id: u32,
    pub kind: TestKind,
    /// Index of the chain step a boundary test targets.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub step: Option<usize>,
    pub source: String,
    pub status: TestStatus,
    pub repair_rounds_used: u32,
    #[serde(default)]
    pub tokens_in: u64,
    #[serde(default)]
    pub tokens_out: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cause: Option<String>,
}

impl TestArtifact {
    pub fn advance(&mut self, to: TestStatus) -> Result<(), InvalidTransition> {
        if self.status.can_advance_to(to) {
            self.status = to;
            Ok(())
        } else {
            Err(InvalidTransition { from: self.status, to })
        }
    }
}
