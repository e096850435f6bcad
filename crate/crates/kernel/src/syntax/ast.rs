use num_bigint::BigInt;

use crate::diag::Span;

#[derive(Debug, Clone, PartialEq)]
pub struct Module {
    /// `None` for a bare declaration list without a `module` header.
    pub name: Option<String>,
    pub decls: Vec<Decl>,
    pub span: Span,
}

impl Module {
    pub fn op(&self, name: &str) -> Option<&OpDef> {
        self.decls.iter().find_map(|d| match d {
            Decl::Op(op) if op.name == name => Some(op),
            _ => None,
        })
    }

    pub fn ops(&self) -> impl Iterator<Item = &OpDef> {
        self.decls.iter().filter_map(|d| match d {
            Decl::Op(op) => Some(op),
            _ => None,
        })
    }

    pub fn type_defs(&self) -> impl Iterator<Item = &TypeDef> {
        self.decls.iter().filter_map(|d| match d {
            Decl::Type(t) => Some(t),
            _ => None,
        })
    }

    pub fn vars(&self) -> impl Iterator<Item = &VarDecl> {
        self.decls.iter().filter_map(|d| match d {
            Decl::Var(v) => Some(v),
            _ => None,
        })
    }

    pub fn imports(&self) -> impl Iterator<Item = &Import> {
        self.decls.iter().filter_map(|d| match d {
            Decl::Import(i) => Some(i),
            _ => None,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Decl {
    Import(Import),
    Type(TypeDef),
    Var(VarDecl),
    Const(ConstDecl),
    Op(OpDef),
}

impl Decl {
    pub fn span(&self) -> Span {
        match self {
            Decl::Import(d) => d.span,
            Decl::Type(d) => d.span,
            Decl::Var(d) => d.span,
            Decl::Const(d) => d.span,
            Decl::Op(d) => d.span,
        }
    }

    pub fn name(&self) -> &str {
        match self {
            Decl::Import(d) => &d.module,
            Decl::Type(d) => &d.name,
            Decl::Var(d) => &d.name,
            Decl::Const(d) => &d.name,
            Decl::Op(d) => &d.name,
        }
    }
}

/// `import M.* from "path"`
#[derive(Debug, Clone, PartialEq)]
pub struct Import {
    pub module: String,
    pub from: Option<String>,
    pub span: Span,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TypeDef {
    pub name: String,
    pub params: Vec<String>,
    pub body: TypeDefBody,
    pub span: Span,
}

#[derive(Debug, Clone, PartialEq)]
pub enum TypeDefBody {
    Alias(TypeExpr),
    Sum(Vec<Variant>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Variant {
    pub name: String,
    pub payload: Option<TypeExpr>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct VarDecl {
    pub name: String,
    pub ty: TypeExpr,
    pub span: Span,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConstDecl {
    pub name: String,
    pub ty: TypeExpr,
    pub span: Span,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Qualifier {
    PureVal,
    Val,
    PureDef,
    Def,
    Action,
}

impl Qualifier {
    pub fn keyword(self) -> &'static str {
        match self {
            Qualifier::PureVal => "pure val",
            Qualifier::Val => "val",
            Qualifier::PureDef => "pure def",
            Qualifier::Def => "def",
            Qualifier::Action => "action",
        }
    }

    pub fn is_pure(self) -> bool {
        matches!(self, Qualifier::PureVal | Qualifier::PureDef)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Param {
    pub name: String,
    pub ty: Option<TypeExpr>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OpDef {
    pub qualifier: Qualifier,
    pub name: String,
    /// `None` when written without parentheses.
    pub params: Option<Vec<Param>>,
    pub ret: Option<TypeExpr>,
    pub body: Expr,
    pub span: Span,
    pub name_span: Span,
}

impl OpDef {
    pub fn param_list(&self) -> &[Param] {
        self.params.as_deref().unwrap_or(&[])
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum TypeExpr {
    Int,
    Bool,
    Str,
    /// Lowercase type variable.
    Var(String),
    Named { name: String, args: Vec<TypeExpr> },
    Set(Box<TypeExpr>),
    List(Box<TypeExpr>),
    Map(Box<TypeExpr>, Box<TypeExpr>),
    Tuple(Vec<TypeExpr>),
    Record(Vec<(String, TypeExpr)>),
    Fun(Vec<TypeExpr>, Box<TypeExpr>),
}

impl TypeExpr {
    pub fn named(name: &str) -> TypeExpr {
        TypeExpr::Named {
            name: name.to_string(),
            args: Vec::new(),
        }
    }

    /// Every named type referenced, in first-occurrence order.
    pub fn named_refs(&self, out: &mut Vec<String>) {
        match self {
            TypeExpr::Int | TypeExpr::Bool | TypeExpr::Str | TypeExpr::Var(_) => {}
            TypeExpr::Named { name, args } => {
                if !out.contains(name) {
                    out.push(name.clone());
                }
                for a in args {
                    a.named_refs(out);
                }
            }
            TypeExpr::Set(t) | TypeExpr::List(t) => t.named_refs(out),
            TypeExpr::Map(k, v) => {
                k.named_refs(out);
                v.named_refs(out);
            }
            TypeExpr::Tuple(ts) => ts.iter().for_each(|t| t.named_refs(out)),
            TypeExpr::Record(fs) => fs.iter().for_each(|(_, t)| t.named_refs(out)),
            TypeExpr::Fun(ps, r) => {
                ps.iter().for_each(|t| t.named_refs(out));
                r.named_refs(out);
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Expr {
    pub kind: ExprKind,
    pub span: Span,
}

impl Expr {
    pub fn new(kind: ExprKind, span: Span) -> Expr {
        Expr { kind, span }
    }

    pub fn synth(kind: ExprKind) -> Expr {
        Expr {
            kind,
            span: Span::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum LetKind {
    Val,
    PureVal,
    Def,
    PureDef,
    Nondet,
}

impl LetKind {
    pub fn keyword(self) -> &'static str {
        match self {
            LetKind::Val => "val",
            LetKind::PureVal => "pure val",
            LetKind::Def => "def",
            LetKind::PureDef => "pure def",
            LetKind::Nondet => "nondet",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BlockKind {
    And,
    Or,
    All,
    Any,
}

impl BlockKind {
    pub fn keyword(self) -> &'static str {
        match self {
            BlockKind::And => "and",
            BlockKind::Or => "or",
            BlockKind::All => "all",
            BlockKind::Any => "any",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BinOp {
    Add,
    Sub,
    Mul,
    Div,
    Mod,
    Pow,
    Eq,
    Neq,
    Lt,
    Le,
    Gt,
    Ge,
    And,
    Or,
    Iff,
    Implies,
}

impl BinOp {
    pub fn symbol(self) -> &'static str {
        match self {
            BinOp::Add => "+",
            BinOp::Sub => "-",
            BinOp::Mul => "*",
            BinOp::Div => "/",
            BinOp::Mod => "%",
            BinOp::Pow => "^",
            BinOp::Eq => "==",
            BinOp::Neq => "!=",
            BinOp::Lt => "<",
            BinOp::Le => "<=",
            BinOp::Gt => ">",
            BinOp::Ge => ">=",
            BinOp::And => "and",
            BinOp::Or => "or",
            BinOp::Iff => "iff",
            BinOp::Implies => "implies",
        }
    }

    /// Binding strength; larger binds tighter.
    pub fn precedence(self) -> u8 {
        match self {
            BinOp::Implies => 1,
            BinOp::Iff => 2,
            BinOp::Or => 3,
            BinOp::And => 4,
            BinOp::Eq | BinOp::Neq | BinOp::Lt | BinOp::Le | BinOp::Gt | BinOp::Ge => 5,
            BinOp::Add | BinOp::Sub => 7,
            BinOp::Mul | BinOp::Div | BinOp::Mod => 8,
            BinOp::Pow => 9,
        }
    }

    pub fn right_assoc(self) -> bool {
        matches!(self, BinOp::Pow | BinOp::Implies)
    }
}

/// Precedence of the `a -> b` pair constructor.
pub const ARROW_PREC: u8 = 6;
/// Precedence of unary minus.
pub const UNARY_PREC: u8 = 10;

#[derive(Debug, Clone, PartialEq)]
pub enum Pattern {
    Wildcard,
    Ctor {
        name: String,
        /// `None` for a nullary constructor written without parentheses.
        binder: Option<String>,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct MatchArm {
    pub pattern: Pattern,
    pub body: Expr,
    pub span: Span,
}

#[derive(Debug, Clone, PartialEq)]
pub enum ExprKind {
    Int(BigInt),
    Bool(bool),
    Str(String),
    Name(String),
    /// Operator application. `dot` records the `a.op(b)` spelling.
    App {
        op: String,
        args: Vec<Expr>,
        dot: bool,
    },
    Lambda {
        params: Vec<String>,
        body: Box<Expr>,
    },
    Let {
        kind: LetKind,
        name: String,
        params: Option<Vec<Param>>,
        ty: Option<TypeExpr>,
        value: Box<Expr>,
        body: Box<Expr>,
    },
    If {
        cond: Box<Expr>,
        then: Box<Expr>,
        els: Box<Expr>,
    },
    Match {
        scrutinee: Box<Expr>,
        arms: Vec<MatchArm>,
    },
    Record(Vec<(String, Expr)>),
    /// `{ ...base, f: v }`
    RecordUpdate {
        base: Box<Expr>,
        fields: Vec<(String, Expr)>,
    },
    Tuple(Vec<Expr>),
    List(Vec<Expr>),
    Field {
        base: Box<Expr>,
        name: String,
    },
    Index {
        base: Box<Expr>,
        index: Box<Expr>,
    },
    Neg(Box<Expr>),
    Binary {
        op: BinOp,
        lhs: Box<Expr>,
        rhs: Box<Expr>,
    },
    /// `x' = e`
    Assign {
        name: String,
        value: Box<Expr>,
    },
    Block {
        kind: BlockKind,
        items: Vec<Expr>,
    },
}

impl ExprKind {
    pub fn app(op: &str, args: Vec<Expr>) -> ExprKind {
        ExprKind::App {
            op: op.to_string(),
            args,
            dot: false,
        }
    }
}

pub const KEYWORDS: &[&str] = &[
    "module", "import", "export", "from", "type", "var", "const", "val", "def", "pure", "action",
    "run", "temporal", "nondet", "if", "else", "match", "and", "or", "iff", "implies", "all",
    "any", "true", "false",
];

pub fn is_keyword(word: &str) -> bool {
    KEYWORDS.contains(&word)
}
