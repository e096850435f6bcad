//! Source-level analysis of a CosmWasm-style contract.
//!
//! The accepted subset is: `use` declarations, constants, functions, structs,
//! enums and type aliases at module level. Attributes are ignored, `impl`
//! blocks and `#[cfg(test)]` modules are skipped, inline modules are flattened.
//! Macros, traits, unions, statics and foreign blocks are rejected.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::path::{Path, PathBuf};

use proc_macro2::{LineColumn, Span};
use syn::spanned::Spanned;
use thiserror::Error;

pub const STORAGE_CRATE: &str = "cw_storage_plus";

/// Names provided by the embedded `cw_types` model library.
pub const LIBRARY_TYPES: &[&str] = &[
    "Option",
    "Result",
    "Coin",
    "BankMsg",
    "CosmosMsg",
    "AttributeValue",
    "Attribute",
    "Response",
    "ContractError",
    "MessageInfo",
    "BlockInfo",
    "ContractInfo",
    "Env",
    "Bank",
    "QuerierWrapper",
    "Deps",
];

/// Entry points that get dedicated model machinery instead of an action.
pub const ENTRY_POINTS: &[&str] = &["instantiate", "execute", "query", "migrate", "sudo", "reply"];

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum FrontendError {
    #[error("{location}: unsupported construct: {construct}")]
    SubsetViolation { location: String, construct: String },
    #[error("{location}: syntax error: {message}")]
    Syntax { location: String, message: String },
    #[error("cannot map type `{ty}`: {reason}")]
    UnmappableType { ty: String, reason: String },
    #[error("handler `{0}` not found")]
    HandlerNotFound(String),
    #[error("handler `{name}` is defined more than once: {locations}")]
    DuplicateHandler { name: String, locations: String },
    #[error("no source files")]
    NoSources,
    #[error("{path}: {message}")]
    Io { path: String, message: String },
}

/// Byte range inside one source unit. Spans never take part in structural comparisons.
#[derive(Debug, Clone, Default, Eq)]
pub struct SourceSpan {
    pub file: usize,
    pub start: usize,
    pub end: usize,
    /// 1-based first line.
    pub line: usize,
}

impl PartialEq for SourceSpan {
    fn eq(&self, _other: &SourceSpan) -> bool {
        true
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DeclKind {
    Use,
    Const,
    Fn,
    Struct,
    Enum,
    TypeAlias,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DeclSpan {
    pub kind: DeclKind,
    pub name: String,
    pub start: usize,
    pub end: usize,
}

#[derive(Debug, Clone)]
pub struct SourceUnit {
    pub path: String,
    pub text: String,
    pub declarations: Vec<DeclSpan>,
}

impl SourceUnit {
    pub fn new(path: impl Into<String>, text: impl Into<String>) -> SourceUnit {
        SourceUnit {
            path: path.into(),
            text: text.into(),
            declarations: Vec::new(),
        }
    }
}

/// A type as written in the contract source.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum SourceType {
    Path { segments: Vec<String>, args: Vec<SourceType> },
    Tuple(Vec<SourceType>),
    Ref(Box<SourceType>),
    /// Anything outside the type grammar, with a short description.
    Other(String),
}

impl SourceType {
    pub fn named(name: &str) -> SourceType {
        SourceType::Path {
            segments: vec![name.to_string()],
            args: vec![],
        }
    }

    pub fn last_segment(&self) -> Option<&str> {
        match self {
            SourceType::Path { segments, .. } => segments.last().map(String::as_str),
            SourceType::Ref(inner) => inner.last_segment(),
            _ => None,
        }
    }
}

impl fmt::Display for SourceType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SourceType::Path { segments, args } => {
                write!(f, "{}", segments.join("::"))?;
                if !args.is_empty() {
                    let args: Vec<String> = args.iter().map(|a| a.to_string()).collect();
                    write!(f, "<{}>", args.join(", "))?;
                }
                Ok(())
            }
            SourceType::Tuple(items) => {
                let items: Vec<String> = items.iter().map(|a| a.to_string()).collect();
                write!(f, "({})", items.join(", "))
            }
            SourceType::Ref(inner) => write!(f, "&{inner}"),
            SourceType::Other(s) => f.write_str(s),
        }
    }
}

/// A type of the modeling language.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ModelType {
    Int,
    Bool,
    Str,
    List(Box<ModelType>),
    Set(Box<ModelType>),
    Map(Box<ModelType>, Box<ModelType>),
    Tuple(Vec<ModelType>),
    Record(Vec<(String, ModelType)>),
    Named { name: String, args: Vec<ModelType> },
}

impl ModelType {
    pub fn named(name: &str) -> ModelType {
        ModelType::Named {
            name: name.to_string(),
            args: vec![],
        }
    }

    /// Named types referenced anywhere inside this type.
    pub fn named_refs(&self, out: &mut BTreeSet<String>) {
        match self {
            ModelType::Int | ModelType::Bool | ModelType::Str => {}
            ModelType::List(t) | ModelType::Set(t) => t.named_refs(out),
            ModelType::Map(k, v) => {
                k.named_refs(out);
                v.named_refs(out);
            }
            ModelType::Tuple(ts) => ts.iter().for_each(|t| t.named_refs(out)),
            ModelType::Record(fs) => fs.iter().for_each(|(_, t)| t.named_refs(out)),
            ModelType::Named { name, args } => {
                out.insert(name.clone());
                args.iter().for_each(|t| t.named_refs(out));
            }
        }
    }
}

impl fmt::Display for ModelType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ModelType::Int => f.write_str("int"),
            ModelType::Bool => f.write_str("bool"),
            ModelType::Str => f.write_str("str"),
            ModelType::List(t) => write!(f, "List[{t}]"),
            ModelType::Set(t) => write!(f, "Set[{t}]"),
            ModelType::Map(k, v) => match k.as_ref() {
                ModelType::Map(..) => write!(f, "({k}) -> {v}"),
                _ => write!(f, "{k} -> {v}"),
            },
            ModelType::Tuple(ts) => {
                let items: Vec<String> = ts.iter().map(|t| t.to_string()).collect();
                write!(f, "({})", items.join(", "))
            }
            ModelType::Record(fs) if fs.is_empty() => f.write_str("{}"),
            ModelType::Record(fs) => {
                let items: Vec<String> = fs.iter().map(|(n, t)| format!("{n}: {t}")).collect();
                write!(f, "{{ {} }}", items.join(", "))
            }
            ModelType::Named { name, args } if args.is_empty() => f.write_str(name),
            ModelType::Named { name, args } => {
                let items: Vec<String> = args.iter().map(|t| t.to_string()).collect();
                write!(f, "{}[{}]", name, items.join(", "))
            }
        }
    }
}

const INT_TYPES: &[&str] = &[
    "u8", "u16", "u32", "u64", "u128", "Uint128", "Uint64", "i32", "i64",
];
// Integer-like types outside the base table, mapped to int as well.
const EXTRA_INT_TYPES: &[&str] = &[
    "usize", "i8", "i16", "i128", "isize", "Uint256", "Uint512", "Int64", "Int128", "Int256", "Timestamp",
];
const WRAPPERS: &[&str] = &["Box", "Rc", "Arc"];

/// Maps a contract source type to a model type.
pub fn map_type(t: &SourceType) -> Result<ModelType, FrontendError> {
    let unmappable = |reason: &str| FrontendError::UnmappableType {
        ty: t.to_string(),
        reason: reason.to_string(),
    };
    match t {
        SourceType::Ref(inner) => map_type(inner),
        SourceType::Tuple(items) => Ok(ModelType::Tuple(
            items.iter().map(map_type).collect::<Result<_, _>>()?,
        )),
        SourceType::Other(kind) => Err(unmappable(kind)),
        SourceType::Path { segments, args } => {
            let name = segments.last().map(String::as_str).unwrap_or("");
            let arity = |n: usize| -> Result<Vec<ModelType>, FrontendError> {
                if args.len() != n {
                    return Err(unmappable(&format!("`{name}` expects {n} type argument(s)")));
                }
                args.iter().map(map_type).collect()
            };
            Ok(match name {
                n if INT_TYPES.contains(&n) || EXTRA_INT_TYPES.contains(&n) => {
                    arity(0)?;
                    ModelType::Int
                }
                "bool" => {
                    arity(0)?;
                    ModelType::Bool
                }
                "String" | "str" => {
                    arity(0)?;
                    ModelType::Str
                }
                "Addr" => {
                    arity(0)?;
                    ModelType::named("Addr")
                }
                "Vec" | "VecDeque" => ModelType::List(Box::new(arity(1)?.remove(0))),
                "HashSet" | "BTreeSet" => ModelType::Set(Box::new(arity(1)?.remove(0))),
                "Option" => ModelType::Named {
                    name: "Option".into(),
                    args: arity(1)?,
                },
                "Map" | "HashMap" | "BTreeMap" => {
                    let mut kv = arity(2)?;
                    let v = kv.pop().unwrap();
                    ModelType::Map(Box::new(kv.pop().unwrap()), Box::new(v))
                }
                "Item" => arity(1)?.remove(0),
                w if WRAPPERS.contains(&w) => arity(1)?.remove(0),
                "Result" => ModelType::Named {
                    name: "Result".into(),
                    args: arity(2)?,
                },
                // The model keeps no type-level distinction for mutability or custom payloads.
                "DepsMut" => ModelType::named("Deps"),
                "Response" => ModelType::named("Response"),
                _ => ModelType::Named {
                    name: name.to_string(),
                    args: args.iter().map(map_type).collect::<Result<_, _>>()?,
                },
            })
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StateKind {
    SingleItem,
    KeyedMap,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StateItem {
    pub name: String,
    pub kind: StateKind,
    pub key_type: Option<ModelType>,
    pub value_type: ModelType,
    pub storage_key: String,
}

impl StateItem {
    pub fn model_type(&self) -> ModelType {
        match &self.key_type {
            Some(k) => ModelType::Map(Box::new(k.clone()), Box::new(self.value_type.clone())),
            None => self.value_type.clone(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mutability {
    Mutating,
    ReadOnly,
    Pure,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HandlerSig {
    pub name: String,
    pub params: Vec<(String, SourceType)>,
    pub mutability: Mutability,
    pub source_span: SourceSpan,
}

impl HandlerSig {
    /// Parameters other than the `Deps`/`DepsMut` family.
    pub fn value_params(&self) -> impl Iterator<Item = &(String, SourceType)> {
        self.params
            .iter()
            .filter(|(_, t)| !matches!(t.last_segment(), Some("Deps" | "DepsMut")))
    }

    pub fn is_entry_point(&self) -> bool {
        ENTRY_POINTS.contains(&self.name.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum VariantFields {
    Unit,
    Tuple(Vec<SourceType>),
    Named(Vec<(String, SourceType)>),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct VariantDecl {
    pub name: String,
    pub fields: VariantFields,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum TypeDeclKind {
    Struct(Vec<(String, SourceType)>),
    TupleStruct(Vec<SourceType>),
    Enum(Vec<VariantDecl>),
    Alias(SourceType),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TypeDecl {
    pub name: String,
    pub generics: Vec<String>,
    pub kind: TypeDeclKind,
}

impl TypeDecl {
    /// Source types mentioned by the declaration.
    pub fn field_types(&self) -> Vec<&SourceType> {
        match &self.kind {
            TypeDeclKind::Struct(fs) => fs.iter().map(|(_, t)| t).collect(),
            TypeDeclKind::TupleStruct(ts) => ts.iter().collect(),
            TypeDeclKind::Enum(vs) => vs
                .iter()
                .flat_map(|v| match &v.fields {
                    VariantFields::Unit => vec![],
                    VariantFields::Tuple(ts) => ts.iter().collect(),
                    VariantFields::Named(fs) => fs.iter().map(|(_, t)| t).collect(),
                })
                .collect(),
            TypeDeclKind::Alias(t) => vec![t],
        }
    }
}

/// Literal value of a simple constant initializer.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ConstValue {
    Int(i128),
    Bool(bool),
    Str(String),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ConstInit {
    /// `path(args)`; `resolved` is the fully qualified callee when name resolution succeeded.
    Call {
        path: Vec<String>,
        turbofish: Vec<SourceType>,
        resolved: Option<Vec<String>>,
        first_arg: Option<String>,
    },
    Value(ConstValue),
    Other,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConstDecl {
    pub name: String,
    pub ty: SourceType,
    pub init: ConstInit,
}

#[derive(Debug, Clone, Default)]
pub struct ContractIR {
    pub state_items: Vec<StateItem>,
    pub handlers: Vec<HandlerSig>,
    pub type_decls: Vec<TypeDecl>,
    /// Variants of the contract's `ExecuteMsg` enum, when it declares one.
    pub messages: Vec<VariantDecl>,
    pub constants: Vec<ConstDecl>,
    /// Named types referenced by the contract but defined nowhere in it.
    pub opaque_types: BTreeSet<String>,
    pub sources: Vec<SourceUnit>,
}

impl PartialEq for ContractIR {
    fn eq(&self, other: &ContractIR) -> bool {
        self.state_items == other.state_items
            && self.handlers == other.handlers
            && self.type_decls == other.type_decls
            && self.messages == other.messages
            && self.constants == other.constants
            && self.opaque_types == other.opaque_types
    }
}

impl ContractIR {
    pub fn type_decl(&self, name: &str) -> Option<&TypeDecl> {
        self.type_decls.iter().find(|t| t.name == name)
    }

    pub fn handler(&self, name: &str) -> Option<&HandlerSig> {
        self.handlers.iter().find(|h| h.name == name)
    }

    pub fn mutating_handlers(&self) -> impl Iterator<Item = &HandlerSig> {
        self.handlers
            .iter()
            .filter(|h| h.mutability == Mutability::Mutating)
    }
}

// ---- parsing ----

struct FileScope {
    /// Local name to fully qualified path, from `use` declarations.
    uses: HashMap<String, Vec<String>>,
    globs: Vec<Vec<String>>,
}

struct RawConst {
    name: String,
    ty: SourceType,
    expr: syn::Expr,
    file: usize,
}

struct Collector<'a> {
    file: usize,
    unit: &'a SourceUnit,
    line_starts: Vec<usize>,
    scope: FileScope,
    decls: Vec<DeclSpan>,
    consts: Vec<RawConst>,
    fns: Vec<HandlerSig>,
    types: Vec<TypeDecl>,
}

fn line_starts(text: &str) -> Vec<usize> {
    let mut v = vec![0];
    v.extend(text.match_indices('\n').map(|(i, _)| i + 1));
    v
}

impl<'a> Collector<'a> {
    fn offset(&self, lc: LineColumn) -> usize {
        let Some(&start) = self.line_starts.get(lc.line.saturating_sub(1)) else {
            return self.unit.text.len();
        };
        let line = &self.unit.text[start..];
        start
            + line
                .char_indices()
                .nth(lc.column)
                .map(|(i, _)| i)
                .unwrap_or(line.len())
    }

    fn location(&self, span: Span) -> String {
        let lc = span.start();
        format!("{}:{}:{}", self.unit.path, lc.line, lc.column + 1)
    }

    fn violation(&self, span: Span, construct: &str) -> FrontendError {
        FrontendError::SubsetViolation {
            location: self.location(span),
            construct: construct.to_string(),
        }
    }

    /// Byte range of an item including its outer attributes and doc comments.
    fn item_range(&self, attrs: &[syn::Attribute], span: Span) -> (usize, usize, usize) {
        let mut start = span.start();
        for a in attrs {
            let s = a.span().start();
            if (s.line, s.column) < (start.line, start.column) {
                start = s;
            }
        }
        (self.offset(start), self.offset(span.end()), start.line)
    }

    fn items(&mut self, items: &[syn::Item]) -> Result<(), FrontendError> {
        for item in items {
            self.item(item)?;
        }
        Ok(())
    }

    fn item(&mut self, item: &syn::Item) -> Result<(), FrontendError> {
        use syn::Item;
        match item {
            Item::Use(u) => {
                collect_use(&u.tree, &mut Vec::new(), &mut self.scope);
                self.push_decl(DeclKind::Use, "", &u.attrs, u.span());
            }
            Item::Const(c) => {
                let name = c.ident.to_string();
                self.consts.push(RawConst {
                    name: name.clone(),
                    ty: source_type(&c.ty),
                    expr: (*c.expr).clone(),
                    file: self.file,
                });
                self.push_decl(DeclKind::Const, &name, &c.attrs, c.span());
            }
            Item::Fn(f) => {
                let name = f.sig.ident.to_string();
                let (start, end, line) = self.item_range(&f.attrs, f.span());
                let mut params = Vec::new();
                for (i, input) in f.sig.inputs.iter().enumerate() {
                    match input {
                        syn::FnArg::Typed(pt) => {
                            let pname = match pt.pat.as_ref() {
                                syn::Pat::Ident(id) => id.ident.to_string(),
                                _ => format!("arg{i}"),
                            };
                            params.push((pname, source_type(&pt.ty)));
                        }
                        syn::FnArg::Receiver(r) => {
                            return Err(self.violation(r.span(), "method receiver outside impl"))
                        }
                    }
                }
                let mutability = classify(&params);
                self.fns.push(HandlerSig {
                    name: name.clone(),
                    params,
                    mutability,
                    source_span: SourceSpan {
                        file: self.file,
                        start,
                        end,
                        line,
                    },
                });
                self.decls.push(DeclSpan {
                    kind: DeclKind::Fn,
                    name,
                    start,
                    end,
                });
            }
            Item::Struct(s) => {
                let name = s.ident.to_string();
                let kind = match &s.fields {
                    syn::Fields::Named(fs) => TypeDeclKind::Struct(
                        fs.named
                            .iter()
                            .map(|f| (f.ident.as_ref().unwrap().to_string(), source_type(&f.ty)))
                            .collect(),
                    ),
                    syn::Fields::Unnamed(fs) => {
                        TypeDeclKind::TupleStruct(fs.unnamed.iter().map(|f| source_type(&f.ty)).collect())
                    }
                    syn::Fields::Unit => TypeDeclKind::Struct(vec![]),
                };
                self.types.push(TypeDecl {
                    name: name.clone(),
                    generics: generics(&s.generics),
                    kind,
                });
                self.push_decl(DeclKind::Struct, &name, &s.attrs, s.span());
            }
            Item::Enum(e) => {
                let name = e.ident.to_string();
                let variants = e
                    .variants
                    .iter()
                    .map(|v| VariantDecl {
                        name: v.ident.to_string(),
                        fields: match &v.fields {
                            syn::Fields::Unit => VariantFields::Unit,
                            syn::Fields::Unnamed(fs) => {
                                VariantFields::Tuple(fs.unnamed.iter().map(|f| source_type(&f.ty)).collect())
                            }
                            syn::Fields::Named(fs) => VariantFields::Named(
                                fs.named
                                    .iter()
                                    .map(|f| (f.ident.as_ref().unwrap().to_string(), source_type(&f.ty)))
                                    .collect(),
                            ),
                        },
                    })
                    .collect();
                self.types.push(TypeDecl {
                    name: name.clone(),
                    generics: generics(&e.generics),
                    kind: TypeDeclKind::Enum(variants),
                });
                self.push_decl(DeclKind::Enum, &name, &e.attrs, e.span());
            }
            Item::Type(t) => {
                let name = t.ident.to_string();
                self.types.push(TypeDecl {
                    name: name.clone(),
                    generics: generics(&t.generics),
                    kind: TypeDeclKind::Alias(source_type(&t.ty)),
                });
                self.push_decl(DeclKind::TypeAlias, &name, &t.attrs, t.span());
            }
            Item::Mod(m) => {
                let test_only = m.attrs.iter().any(is_cfg_test);
                if let (Some((_, items)), false) = (&m.content, test_only) {
                    self.items(items)?;
                }
            }
            Item::Impl(_) | Item::ExternCrate(_) => {}
            Item::Macro(m) => return Err(self.violation(m.span(), "macro invocation")),
            Item::Trait(t) => return Err(self.violation(t.span(), "trait")),
            Item::TraitAlias(t) => return Err(self.violation(t.span(), "trait alias")),
            Item::Union(u) => return Err(self.violation(u.span(), "union")),
            Item::Static(s) => return Err(self.violation(s.span(), "static item")),
            Item::ForeignMod(f) => return Err(self.violation(f.span(), "extern block")),
            other => return Err(self.violation(other.span(), "unrecognized item")),
        }
        Ok(())
    }

    fn push_decl(&mut self, kind: DeclKind, name: &str, attrs: &[syn::Attribute], span: Span) {
        let (start, end, _) = self.item_range(attrs, span);
        self.decls.push(DeclSpan {
            kind,
            name: name.to_string(),
            start,
            end,
        });
    }
}

fn is_cfg_test(a: &syn::Attribute) -> bool {
    a.path().is_ident("cfg")
        && a
            .parse_args::<syn::Meta>()
            .map(|m| m.path().is_ident("test"))
            .unwrap_or(false)
}

fn generics(g: &syn::Generics) -> Vec<String> {
    g.type_params().map(|p| p.ident.to_string()).collect()
}

fn classify(params: &[(String, SourceType)]) -> Mutability {
    let has = |n: &str| params.iter().any(|(_, t)| t.last_segment() == Some(n));
    if has("DepsMut") {
        Mutability::Mutating
    } else if has("Deps") {
        Mutability::ReadOnly
    } else {
        Mutability::Pure
    }
}

fn collect_use(tree: &syn::UseTree, prefix: &mut Vec<String>, scope: &mut FileScope) {
    match tree {
        syn::UseTree::Path(p) => {
            prefix.push(p.ident.to_string());
            collect_use(&p.tree, prefix, scope);
            prefix.pop();
        }
        syn::UseTree::Name(n) => {
            let name = n.ident.to_string();
            if name == "self" {
                if let Some(last) = prefix.last().cloned() {
                    scope.uses.insert(last, prefix.clone());
                }
            } else {
                let mut full = prefix.clone();
                full.push(name.clone());
                scope.uses.insert(name, full);
            }
        }
        syn::UseTree::Rename(r) => {
            let mut full = prefix.clone();
            full.push(r.ident.to_string());
            scope.uses.insert(r.rename.to_string(), full);
        }
        syn::UseTree::Glob(_) => scope.globs.push(prefix.clone()),
        syn::UseTree::Group(g) => {
            for t in &g.items {
                collect_use(t, prefix, scope);
            }
        }
    }
}

fn source_type(t: &syn::Type) -> SourceType {
    match t {
        syn::Type::Path(p) if p.qself.is_none() => {
            let segments: Vec<String> = p.path.segments.iter().map(|s| s.ident.to_string()).collect();
            let args = p
                .path
                .segments
                .last()
                .map(|s| generic_args(&s.arguments))
                .unwrap_or_default();
            SourceType::Path { segments, args }
        }
        syn::Type::Path(_) => SourceType::Other("qualified self type".into()),
        syn::Type::Reference(r) => SourceType::Ref(Box::new(source_type(&r.elem))),
        syn::Type::Tuple(tu) => SourceType::Tuple(tu.elems.iter().map(source_type).collect()),
        syn::Type::Paren(p) => source_type(&p.elem),
        syn::Type::Group(g) => source_type(&g.elem),
        syn::Type::Slice(_) => SourceType::Other("slice type".into()),
        syn::Type::Array(_) => SourceType::Other("array type".into()),
        syn::Type::BareFn(_) => SourceType::Other("function type".into()),
        syn::Type::ImplTrait(_) => SourceType::Other("impl trait type".into()),
        syn::Type::TraitObject(_) => SourceType::Other("trait object type".into()),
        syn::Type::Ptr(_) => SourceType::Other("raw pointer type".into()),
        syn::Type::Never(_) => SourceType::Other("never type".into()),
        syn::Type::Infer(_) => SourceType::Other("inferred type".into()),
        syn::Type::Macro(_) => SourceType::Other("macro type".into()),
        _ => SourceType::Other("unsupported type".into()),
    }
}

fn generic_args(args: &syn::PathArguments) -> Vec<SourceType> {
    match args {
        syn::PathArguments::AngleBracketed(a) => a
            .args
            .iter()
            .filter_map(|g| match g {
                syn::GenericArgument::Type(t) => Some(source_type(t)),
                syn::GenericArgument::Lifetime(_) => None,
                _ => Some(SourceType::Other("generic argument".into())),
            })
            .collect(),
        _ => vec![],
    }
}

fn resolve(path: &[String], scope: &FileScope, local_defs: &BTreeSet<String>) -> Option<Vec<String>> {
    let first = path.first()?;
    if let Some(full) = scope.uses.get(first) {
        let mut out = full.clone();
        out.extend(path[1..].iter().cloned());
        return Some(out);
    }
    if local_defs.contains(first) {
        let mut out = vec!["crate".to_string()];
        out.extend(path.iter().cloned());
        return Some(out);
    }
    if first == STORAGE_CRATE || first == "crate" {
        return Some(path.to_vec());
    }
    // A glob import only resolves the name if exactly one glob is present.
    if scope.globs.len() == 1 {
        let mut out = scope.globs[0].clone();
        out.extend(path.iter().cloned());
        return Some(out);
    }
    None
}

fn const_init(expr: &syn::Expr, scope: &FileScope, local_defs: &BTreeSet<String>) -> ConstInit {
    match expr {
        syn::Expr::Call(call) => {
            let syn::Expr::Path(p) = call.func.as_ref() else {
                return ConstInit::Other;
            };
            let path: Vec<String> = p.path.segments.iter().map(|s| s.ident.to_string()).collect();
            let turbofish = p
                .path
                .segments
                .iter()
                .flat_map(|s| generic_args(&s.arguments))
                .collect();
            let first_arg = call.args.first().and_then(|a| match a {
                syn::Expr::Lit(syn::ExprLit {
                    lit: syn::Lit::Str(s), ..
                }) => Some(s.value()),
                _ => None,
            });
            ConstInit::Call {
                resolved: resolve(&path, scope, local_defs),
                path,
                turbofish,
                first_arg,
            }
        }
        other => const_value(other).map(ConstInit::Value).unwrap_or(ConstInit::Other),
    }
}

fn const_value(expr: &syn::Expr) -> Option<ConstValue> {
    match expr {
        syn::Expr::Lit(l) => match &l.lit {
            syn::Lit::Int(i) => i.base10_parse::<i128>().ok().map(ConstValue::Int),
            syn::Lit::Bool(b) => Some(ConstValue::Bool(b.value)),
            syn::Lit::Str(s) => Some(ConstValue::Str(s.value())),
            _ => None,
        },
        syn::Expr::Paren(p) => const_value(&p.expr),
        syn::Expr::Group(g) => const_value(&g.expr),
        syn::Expr::Unary(u) if matches!(u.op, syn::UnOp::Neg(_)) => match const_value(&u.expr)? {
            ConstValue::Int(n) => Some(ConstValue::Int(-n)),
            _ => None,
        },
        syn::Expr::Binary(b) => {
            let (ConstValue::Int(x), ConstValue::Int(y)) = (const_value(&b.left)?, const_value(&b.right)?) else {
                return None;
            };
            Some(ConstValue::Int(match b.op {
                syn::BinOp::Add(_) => x.checked_add(y)?,
                syn::BinOp::Sub(_) => x.checked_sub(y)?,
                syn::BinOp::Mul(_) => x.checked_mul(y)?,
                syn::BinOp::Div(_) if y != 0 => x / y,
                _ => return None,
            }))
        }
        // `Uint128::new(10)` and friends wrap a plain integer.
        syn::Expr::Call(c) if c.args.len() == 1 => {
            let syn::Expr::Path(p) = c.func.as_ref() else { return None };
            let segs: Vec<String> = p.path.segments.iter().map(|s| s.ident.to_string()).collect();
            let ty = segs.len().checked_sub(2).map(|i| segs[i].as_str())?;
            let ctor = segs.last()?.as_str();
            if (INT_TYPES.contains(&ty) || EXTRA_INT_TYPES.contains(&ty)) && matches!(ctor, "new" | "from") {
                const_value(&c.args[0])
            } else {
                None
            }
        }
        _ => None,
    }
}

/// Parses every source unit and assembles the contract description.
pub fn parse_project(sources: Vec<SourceUnit>) -> Result<ContractIR, FrontendError> {
    if sources.is_empty() {
        return Err(FrontendError::NoSources);
    }
    let mut sources = sources;
    let mut scopes = Vec::new();
    let mut consts = Vec::new();
    let mut handlers = Vec::new();
    let mut types: Vec<TypeDecl> = Vec::new();
    for (i, unit) in sources.iter_mut().enumerate() {
        let file = syn::parse_file(&unit.text).map_err(|e| {
            let lc = e.span().start();
            FrontendError::Syntax {
                location: format!("{}:{}:{}", unit.path, lc.line, lc.column + 1),
                message: e.to_string(),
            }
        })?;
        let mut c = Collector {
            file: i,
            unit,
            line_starts: line_starts(&unit.text),
            scope: FileScope {
                uses: HashMap::new(),
                globs: Vec::new(),
            },
            decls: Vec::new(),
            consts: Vec::new(),
            fns: Vec::new(),
            types: Vec::new(),
        };
        c.items(&file.items)?;
        let Collector {
            scope,
            decls,
            consts: cs,
            fns,
            types: ts,
            ..
        } = c;
        unit.declarations = decls;
        scopes.push(scope);
        consts.extend(cs);
        handlers.extend(fns);
        types.extend(ts);
    }

    let local_defs: BTreeSet<String> = types
        .iter()
        .map(|t| t.name.clone())
        .chain(handlers.iter().map(|h| h.name.clone()))
        .collect();
    let constants: Vec<ConstDecl> = consts
        .iter()
        .map(|c| ConstDecl {
            name: c.name.clone(),
            ty: c.ty.clone(),
            init: const_init(&c.expr, &scopes[c.file], &local_defs),
        })
        .collect();

    let messages = types
        .iter()
        .find(|t| t.name == "ExecuteMsg")
        .and_then(|t| match &t.kind {
            TypeDeclKind::Enum(vs) => Some(vs.clone()),
            _ => None,
        })
        .unwrap_or_default();

    let mut ir = ContractIR {
        state_items: Vec::new(),
        handlers,
        type_decls: types,
        messages,
        constants,
        opaque_types: BTreeSet::new(),
        sources,
    };
    ir.state_items = find_state_items(&ir)?;
    ir.opaque_types = opaque_types(&ir);
    Ok(ir)
}

/// Whether a constant initializer satisfies the three storage-declaration conditions.
pub fn is_storage_declaration(init: &ConstInit) -> Option<StateKind> {
    let ConstInit::Call {
        resolved: Some(full), ..
    } = init
    else {
        return None;
    };
    if full.first().map(String::as_str) != Some(STORAGE_CRATE) || full.len() < 3 {
        return None;
    }
    match (full[full.len() - 2].as_str(), full[full.len() - 1].as_str()) {
        ("Item", "new") => Some(StateKind::SingleItem),
        ("Map", "new") => Some(StateKind::KeyedMap),
        _ => None,
    }
}

/// Constants declared as storage items, in declaration order.
pub fn find_state_items(ir: &ContractIR) -> Result<Vec<StateItem>, FrontendError> {
    let mut out = Vec::new();
    for c in &ir.constants {
        let Some(kind) = is_storage_declaration(&c.init) else {
            continue;
        };
        let ConstInit::Call {
            turbofish, first_arg, ..
        } = &c.init
        else {
            unreachable!()
        };
        let args: Vec<SourceType> = if !turbofish.is_empty() {
            turbofish.clone()
        } else {
            match &c.ty {
                SourceType::Path { args, .. } => args.clone(),
                _ => vec![],
            }
        };
        let (key_type, value_type) = match (kind, args.as_slice()) {
            (StateKind::SingleItem, [v]) => (None, map_type(v)?),
            (StateKind::KeyedMap, [k, v]) => (Some(map_type(k)?), map_type(v)?),
            _ => {
                return Err(FrontendError::UnmappableType {
                    ty: c.ty.to_string(),
                    reason: format!("storage item `{}` has the wrong number of type arguments", c.name),
                })
            }
        };
        out.push(StateItem {
            name: c.name.to_lowercase(),
            kind,
            key_type,
            value_type,
            storage_key: first_arg.clone().unwrap_or_default(),
        });
    }
    Ok(out)
}

/// Every function with its Deps-based classification, in declaration order.
pub fn classify_handlers(ir: &ContractIR) -> Vec<HandlerSig> {
    ir.handlers.clone()
}

/// The complete definition text of the function `name`, including doc comments.
pub fn extract_handler_source<'a>(ir: &'a ContractIR, name: &str) -> Result<&'a str, FrontendError> {
    let found: Vec<&HandlerSig> = ir.handlers.iter().filter(|h| h.name == name).collect();
    match found.as_slice() {
        [] => Err(FrontendError::HandlerNotFound(name.to_string())),
        [h] => {
            let unit = &ir.sources[h.source_span.file];
            Ok(&unit.text[h.source_span.start..h.source_span.end])
        }
        many => Err(FrontendError::DuplicateHandler {
            name: name.to_string(),
            locations: many
                .iter()
                .map(|h| format!("{}:{}", ir.sources[h.source_span.file].path, h.source_span.line))
                .collect::<Vec<_>>()
                .join(", "),
        }),
    }
}

fn opaque_types(ir: &ContractIR) -> BTreeSet<String> {
    let mut refs = BTreeSet::new();
    let mut add = |t: &SourceType| {
        if let Ok(m) = map_type(t) {
            m.named_refs(&mut refs);
        }
    };
    for s in &ir.state_items {
        s.model_type().named_refs(&mut BTreeSet::new());
    }
    for c in &ir.constants {
        if is_storage_declaration(&c.init).is_some() {
            add(&c.ty);
        }
    }
    for h in ir.mutating_handlers() {
        for (_, t) in h.value_params() {
            add(t);
        }
    }
    for t in &ir.type_decls {
        for f in t.field_types() {
            add(f);
        }
    }
    refs.into_iter()
        .filter(|n| {
            n != "Addr"
                && !LIBRARY_TYPES.contains(&n.as_str())
                && ir.type_decl(n).is_none()
                && !ir.type_decls.iter().any(|t| t.generics.contains(n))
        })
        .collect()
}

/// Reads a contract project: `contract.toml` may list `sources`; otherwise every
/// `.rs` file below `src/` is used. Files are ordered lexicographically by path.
pub fn load_project(dir: &Path) -> Result<(String, Vec<SourceUnit>), FrontendError> {
    let io = |p: &Path, e: std::io::Error| FrontendError::Io {
        path: p.display().to_string(),
        message: e.to_string(),
    };
    let manifest_path = dir.join("contract.toml");
    let mut name = dir
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_else(|| "contract".into());
    let mut files: Vec<PathBuf> = Vec::new();
    if manifest_path.exists() {
        let text = std::fs::read_to_string(&manifest_path).map_err(|e| io(&manifest_path, e))?;
        let manifest: toml::Table = text.parse().map_err(|e: toml::de::Error| FrontendError::Io {
            path: manifest_path.display().to_string(),
            message: e.to_string(),
        })?;
        if let Some(n) = manifest.get("name").and_then(|v| v.as_str()) {
            name = n.to_string();
        }
        if let Some(list) = manifest.get("sources").and_then(|v| v.as_array()) {
            files = list
                .iter()
                .filter_map(|v| v.as_str())
                .map(|s| dir.join(s))
                .collect();
        }
    }
    if files.is_empty() {
        let src = dir.join("src");
        let root = if src.is_dir() { src } else { dir.to_path_buf() };
        for entry in walkdir::WalkDir::new(&root) {
            let entry = entry.map_err(|e| FrontendError::Io {
                path: root.display().to_string(),
                message: e.to_string(),
            })?;
            if entry.file_type().is_file() && entry.path().extension().is_some_and(|x| x == "rs") {
                files.push(entry.into_path());
            }
        }
    }
    files.sort();
    let mut units = Vec::new();
    for f in files {
        let text = std::fs::read_to_string(&f).map_err(|e| io(&f, e))?;
        let rel = f.strip_prefix(dir).unwrap_or(&f).to_string_lossy().replace('\\', "/");
        units.push(SourceUnit::new(rel, text));
    }
    Ok((name, units))
}

/// Values of simple literal constants, keyed by name, in declaration order.
pub fn literal_constants(ir: &ContractIR) -> BTreeMap<usize, (&str, &ConstValue)> {
    ir.constants
        .iter()
        .enumerate()
        .filter_map(|(i, c)| match &c.init {
            ConstInit::Value(v) => Some((i, (c.name.as_str(), v))),
            _ => None,
        })
        .collect()
}
