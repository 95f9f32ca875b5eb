//! Focal-context assembly: the structure and dependency context shown to
//! the model next to the focal method.
//!
//! Dependencies arrive pre-resolved in each function's `context_refs`; this
//! module only orders them, ranks them, resolves `{"ref": id}` items against
//! the dump and trims the result to a token budget.

use alloc::collections::BTreeSet;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::model::{FocalMethod, ProgramModel};
use crate::util::ceil_div;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ContextKind {
    UseStatement,
    GlobalDef,
    ContainerDef,
    FieldDecl,
    MethodSignature,
    MethodFullDef,
    TypeFullDef,
    TypeDecl,
    FunctionFullDef,
    FunctionSignature,
    TraitBound,
    ReturnTypeInfo,
}

impl ContextKind {
    pub fn is_full_definition(self) -> bool {
        matches!(
            self,
            ContextKind::ContainerDef | ContextKind::MethodFullDef | ContextKind::TypeFullDef | ContextKind::FunctionFullDef
        )
    }

    pub fn is_declaration(self) -> bool {
        matches!(
            self,
            ContextKind::FieldDecl | ContextKind::MethodSignature | ContextKind::TypeDecl | ContextKind::FunctionSignature
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Rank {
    Direct,
    Indirect,
    Ambient,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ContextItem {
    pub kind: ContextKind,
    pub text: String,
    pub origin: String,
    pub rank: Rank,
    /// Function id, for items resolved from a `ref`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub id: Option<String>,
}

/// One entry of a `context_refs` list.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ItemRef {
    Ref {
        #[serde(rename = "ref")]
        id: String,
    },
    Inline {
        kind: ContextKind,
        text: String,
        #[serde(default)]
        origin: String,
    },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MethodRef {
    pub item: ItemRef,
    #[serde(default)]
    pub called: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ContainerRefs {
    pub def: ItemRef,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub fields: Vec<ItemRef>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub methods: Vec<MethodRef>,
}

/// Pre-resolved context of one function, as produced by the frontend.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ContextRefs {
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub ambient: Vec<ItemRef>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub container: Option<ContainerRefs>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub direct: Vec<ItemRef>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub indirect: Vec<ItemRef>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub bounds: Vec<ItemRef>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub returns: Vec<ItemRef>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub test: Vec<ItemRef>,
}

impl ContextRefs {
    pub fn is_empty(&self) -> bool {
        *self == ContextRefs::default()
    }

    fn all_items(&self) -> impl Iterator<Item = &ItemRef> {
        let container = self.container.iter().flat_map(|c| {
            core::iter::once(&c.def).chain(c.fields.iter()).chain(c.methods.iter().map(|m| &m.item))
        });
        self.ambient
            .iter()
            .chain(container)
            .chain(self.direct.iter())
            .chain(self.indirect.iter())
            .chain(self.bounds.iter())
            .chain(self.returns.iter())
            .chain(self.test.iter())
    }

    /// Function ids named by `ref` items.
    pub fn ref_ids(&self) -> impl Iterator<Item = &str> {
        self.all_items().filter_map(|i| match i {
            ItemRef::Ref { id } => Some(id.as_str()),
            ItemRef::Inline { .. } => None,
        })
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct FocalContext {
    pub structure: Vec<ContextItem>,
    pub dependency: Vec<ContextItem>,
    pub test_context: Vec<ContextItem>,
    pub token_estimate: usize,
    /// The mandatory items alone exceed the budget.
    pub overflow: bool,
}

impl FocalContext {
    pub fn items(&self) -> impl Iterator<Item = &ContextItem> {
        self.structure.iter().chain(self.dependency.iter()).chain(self.test_context.iter())
    }

    pub fn is_empty(&self) -> bool {
        self.items().next().is_none()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ContextError {
    #[error("context ref `{0}` resolves to nothing in the model")]
    UnknownDependencyRef(String),
    #[error("{section} item of kind {kind:?} must be a {expected}")]
    RankMismatch { section: &'static str, kind: ContextKind, expected: &'static str },
}

/// Estimated prompt tokens for a piece of text: one token per four characters.
pub fn estimate_tokens(chars: usize) -> usize {
    ceil_div(chars, 4)
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum Section {
    Structure,
    Dependency,
    Test,
}

/// Drop priority under budget pressure; lower drops first. `None` is mandatory.
type DropGroup = Option<u8>;

struct Slot {
    item: ContextItem,
    section: Section,
    drop: DropGroup,
}

#[derive(Clone, Copy)]
enum Form {
    Full,
    Declaration,
    AsGiven,
}

struct Resolver<'a> {
    model: &'a ProgramModel,
}

impl Resolver<'_> {
    fn resolve(
        &self,
        r: &ItemRef,
        form: Form,
        member: bool,
        rank: Rank,
        section: &'static str,
    ) -> Result<ContextItem, ContextError> {
        match r {
            ItemRef::Ref { id } => {
                let f = self.model.function(id).ok_or_else(|| ContextError::UnknownDependencyRef(id.clone()))?;
                let (kind, text) = match form {
                    Form::Declaration => {
                        let kind = if member { ContextKind::MethodSignature } else { ContextKind::FunctionSignature };
                        (kind, declaration_of(f))
                    }
                    Form::Full | Form::AsGiven => {
                        let kind = if member { ContextKind::MethodFullDef } else { ContextKind::FunctionFullDef };
                        (kind, f.source_text())
                    }
                };
                Ok(ContextItem { kind, text, origin: f.file_path.clone(), rank, id: Some(id.clone()) })
            }
            ItemRef::Inline { kind, text, origin } => {
                match form {
                    Form::Full if !kind.is_full_definition() => {
                        return Err(ContextError::RankMismatch { section, kind: *kind, expected: "full definition" })
                    }
                    Form::Declaration if !kind.is_declaration() => {
                        return Err(ContextError::RankMismatch { section, kind: *kind, expected: "declaration" })
                    }
                    _ => {}
                }
                Ok(ContextItem { kind: *kind, text: text.clone(), origin: origin.clone(), rank, id: None })
            }
        }
    }
}

fn declaration_of(f: &FocalMethod) -> String {
    let mut s = f.signature.trim_end().to_string();
    s.push(';');
    s
}

/// Assemble the focal context of `focal`, trimmed to `budget_tokens`.
///
/// Item order: ambient, container definition and fields, called member
/// methods (full), other member methods (signatures), direct dependencies
/// (full), indirect dependencies (declarations), trait bounds, return types.
/// Over budget, items are dropped from the tail of indirect dependencies,
/// then non-called member signatures, then trait bounds, then return types.
pub fn build_context(focal: &FocalMethod, model: &ProgramModel, budget_tokens: usize) -> Result<FocalContext, ContextError> {
    let refs = &focal.context_refs;
    let r = Resolver { model };
    let mut slots: Vec<Slot> = Vec::new();
    let mut push = |item, section, drop| slots.push(Slot { item, section, drop });

    for i in &refs.ambient {
        push(r.resolve(i, Form::AsGiven, false, Rank::Ambient, "ambient")?, Section::Structure, None);
    }
    if let Some(c) = &refs.container {
        push(r.resolve(&c.def, Form::AsGiven, false, Rank::Ambient, "container")?, Section::Structure, None);
        for i in &c.fields {
            push(r.resolve(i, Form::AsGiven, false, Rank::Ambient, "field")?, Section::Structure, None);
        }
        for m in c.methods.iter().filter(|m| m.called) {
            push(r.resolve(&m.item, Form::Full, true, Rank::Direct, "called method")?, Section::Structure, None);
        }
        for m in c.methods.iter().filter(|m| !m.called) {
            push(r.resolve(&m.item, Form::Declaration, true, Rank::Indirect, "method")?, Section::Structure, Some(1));
        }
    }
    for i in &refs.direct {
        push(r.resolve(i, Form::Full, false, Rank::Direct, "direct")?, Section::Dependency, None);
    }
    for i in &refs.indirect {
        push(r.resolve(i, Form::Declaration, false, Rank::Indirect, "indirect")?, Section::Dependency, Some(0));
    }
    for i in &refs.bounds {
        push(r.resolve(i, Form::AsGiven, false, Rank::Ambient, "bound")?, Section::Dependency, Some(2));
    }
    for i in &refs.returns {
        push(r.resolve(i, Form::AsGiven, false, Rank::Ambient, "return")?, Section::Dependency, Some(3));
    }
    for i in &refs.test {
        push(r.resolve(i, Form::AsGiven, false, Rank::Ambient, "test")?, Section::Test, None);
    }

    let mut seen = BTreeSet::new();
    slots.retain(|s| seen.insert((s.item.kind, s.item.text.clone())));

    let chars = |slots: &[Slot]| slots.iter().map(|s| s.item.text.chars().count()).sum::<usize>();
    let mut total = chars(&slots);
    while estimate_tokens(total) > budget_tokens {
        let victim = (0..slots.len())
            .filter(|&i| slots[i].drop.is_some())
            .min_by(|&a, &b| slots[a].drop.cmp(&slots[b].drop).then(b.cmp(&a)));
        let Some(i) = victim else { break };
        total -= slots[i].item.text.chars().count();
        slots.remove(i);
    }
    let token_estimate = estimate_tokens(total);

    let mut ctx = FocalContext { token_estimate, overflow: token_estimate > budget_tokens, ..Default::default() };
    for s in slots {
        match s.section {
            Section::Structure => ctx.structure.push(s.item),
            Section::Dependency => ctx.dependency.push(s.item),
            Section::Test => ctx.test_context.push(s.item),
        }
    }
    Ok(ctx)
}

fn render_section(out: &mut String, header: &str, items: &[ContextItem]) {
    if items.is_empty() {
        return;
    }
    if !out.is_empty() {
        out.push_str("\n\n");
    }
    out.push_str("// ");
    out.push_str(header);
    out.push('\n');
    render_items_into(out, items);
}

fn render_items_into(out: &mut String, items: &[ContextItem]) {
    for (i, item) in items.iter().enumerate() {
        if i > 0 {
            out.push_str("\n\n");
        }
        out.push_str(item.text.trim_end());
    }
}

/// Structure, dependency and test context, each under a line-comment header.
pub fn render_context(ctx: &FocalContext) -> String {
    let mut out = String::new();
    render_section(&mut out, "structure context", &ctx.structure);
    render_section(&mut out, "dependency context", &ctx.dependency);
    render_section(&mut out, "test context", &ctx.test_context);
    out
}

/// Structure and dependency context only (the prompt places test context
/// after the focal method).
pub fn render_focal_context(ctx: &FocalContext) -> String {
    let mut out = String::new();
    render_section(&mut out, "structure context", &ctx.structure);
    render_section(&mut out, "dependency context", &ctx.dependency);
    out
}

pub fn render_test_context(ctx: &FocalContext) -> String {
    let mut out = String::new();
    render_items_into(&mut out, &ctx.test_context);
    out
}
