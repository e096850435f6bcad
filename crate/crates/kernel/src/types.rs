//! Hindley-Milner style type inference over the model language.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::fmt;

use crate::diag::{codes, Diagnostic, SourceMap, Span};
use crate::program::Program;
use crate::syntax::*;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Ty {
    Int,
    Bool,
    Str,
    Var(u32),
    /// Rigid type parameter of a signature being checked.
    Param(String),
    Set(Box<Ty>),
    List(Box<Ty>),
    Map(Box<Ty>, Box<Ty>),
    Tuple(Vec<Ty>),
    Record(BTreeMap<String, Ty>),
    Sum(String, Vec<Ty>),
    Fun(Vec<Ty>, Box<Ty>),
}

impl Ty {
    pub fn set(t: Ty) -> Ty {
        Ty::Set(Box::new(t))
    }
    pub fn list(t: Ty) -> Ty {
        Ty::List(Box::new(t))
    }
    pub fn map(k: Ty, v: Ty) -> Ty {
        Ty::Map(Box::new(k), Box::new(v))
    }
    pub fn fun(ps: Vec<Ty>, r: Ty) -> Ty {
        Ty::Fun(ps, Box::new(r))
    }
}

impl fmt::Display for Ty {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Ty::Int => f.write_str("int"),
            Ty::Bool => f.write_str("bool"),
            Ty::Str => f.write_str("str"),
            Ty::Var(v) => write!(f, "_t{v}"),
            Ty::Param(p) => f.write_str(p),
            Ty::Set(t) => write!(f, "Set[{t}]"),
            Ty::List(t) => write!(f, "List[{t}]"),
            Ty::Map(k, v) => write!(f, "({k} -> {v})"),
            Ty::Tuple(ts) => {
                f.write_str("(")?;
                for (i, t) in ts.iter().enumerate() {
                    if i > 0 {
                        f.write_str(", ")?;
                    }
                    write!(f, "{t}")?;
                }
                f.write_str(")")
            }
            Ty::Record(fs) => {
                f.write_str("{ ")?;
                for (i, (n, t)) in fs.iter().enumerate() {
                    if i > 0 {
                        f.write_str(", ")?;
                    }
                    write!(f, "{n}: {t}")?;
                }
                f.write_str(" }")
            }
            Ty::Sum(n, args) => {
                f.write_str(n)?;
                if !args.is_empty() {
                    f.write_str("[")?;
                    for (i, t) in args.iter().enumerate() {
                        if i > 0 {
                            f.write_str(", ")?;
                        }
                        write!(f, "{t}")?;
                    }
                    f.write_str("]")?;
                }
                Ok(())
            }
            Ty::Fun(ps, r) => {
                f.write_str("(")?;
                for (i, t) in ps.iter().enumerate() {
                    if i > 0 {
                        f.write_str(", ")?;
                    }
                    write!(f, "{t}")?;
                }
                write!(f, ") => {r}")
            }
        }
    }
}

/// A type with universally quantified variables.
#[derive(Debug, Clone)]
pub struct Scheme {
    pub vars: Vec<u32>,
    pub ty: Ty,
}

impl Scheme {
    pub fn mono(ty: Ty) -> Scheme {
        Scheme {
            vars: Vec::new(),
            ty,
        }
    }
}

#[derive(Debug, Clone)]
struct SumInfo {
    params: Vec<String>,
    variants: Vec<Variant>,
}

#[derive(Debug, Clone)]
enum Global {
    Op {
        qualifier: Qualifier,
        has_params: bool,
        scheme: Scheme,
    },
    Var(Ty),
    Const(Ty),
}

/// Type information gathered from declarations, usable after checking.
#[derive(Debug, Clone, Default)]
pub struct TypeEnv {
    aliases: HashMap<String, (Vec<String>, TypeExpr)>,
    sums: HashMap<String, SumInfo>,
    /// Constructor name to owning sum type.
    ctors: HashMap<String, String>,
}

impl TypeEnv {
    pub fn from_program(program: &Program) -> TypeEnv {
        let mut env = TypeEnv::default();
        for d in program.decls() {
            if let Decl::Type(t) = d {
                env.add(t);
            }
        }
        env
    }

    fn add(&mut self, t: &TypeDef) {
        match &t.body {
            TypeDefBody::Alias(body) => {
                self.aliases
                    .insert(t.name.clone(), (t.params.clone(), body.clone()));
            }
            TypeDefBody::Sum(vs) => {
                for v in vs {
                    self.ctors.insert(v.name.clone(), t.name.clone());
                }
                self.sums.insert(
                    t.name.clone(),
                    SumInfo {
                        params: t.params.clone(),
                        variants: vs.clone(),
                    },
                );
            }
        }
    }

    /// Resolves a closed type expression, expanding aliases.
    pub fn resolve(&self, t: &TypeExpr) -> Result<Ty, String> {
        let mut stack = Vec::new();
        self.resolve_in(t, &HashMap::new(), &mut stack)
    }

    fn resolve_in(
        &self,
        t: &TypeExpr,
        params: &HashMap<String, Ty>,
        stack: &mut Vec<String>,
    ) -> Result<Ty, String> {
        Ok(match t {
            TypeExpr::Int => Ty::Int,
            TypeExpr::Bool => Ty::Bool,
            TypeExpr::Str => Ty::Str,
            TypeExpr::Var(v) => params
                .get(v)
                .cloned()
                .unwrap_or_else(|| Ty::Param(v.clone())),
            TypeExpr::Set(t) => Ty::set(self.resolve_in(t, params, stack)?),
            TypeExpr::List(t) => Ty::list(self.resolve_in(t, params, stack)?),
            TypeExpr::Map(k, v) => Ty::map(
                self.resolve_in(k, params, stack)?,
                self.resolve_in(v, params, stack)?,
            ),
            TypeExpr::Tuple(ts) => Ty::Tuple(
                ts.iter()
                    .map(|t| self.resolve_in(t, params, stack))
                    .collect::<Result<_, _>>()?,
            ),
            TypeExpr::Record(fs) => {
                let mut out = BTreeMap::new();
                for (n, t) in fs {
                    if out.insert(n.clone(), self.resolve_in(t, params, stack)?).is_some() {
                        return Err(format!("duplicate record field '{n}'"));
                    }
                }
                Ty::Record(out)
            }
            TypeExpr::Fun(ps, r) => Ty::fun(
                ps.iter()
                    .map(|t| self.resolve_in(t, params, stack))
                    .collect::<Result<_, _>>()?,
                self.resolve_in(r, params, stack)?,
            ),
            TypeExpr::Named { name, args } => {
                let args: Vec<Ty> = args
                    .iter()
                    .map(|t| self.resolve_in(t, params, stack))
                    .collect::<Result<_, _>>()?;
                if let Some((ps, body)) = self.aliases.get(name) {
                    if ps.len() != args.len() {
                        return Err(format!(
                            "type '{name}' expects {} type arguments, found {}",
                            ps.len(),
                            args.len()
                        ));
                    }
                    if stack.contains(name) {
                        return Err(format!("type alias '{name}' refers to itself"));
                    }
                    stack.push(name.clone());
                    let inner: HashMap<String, Ty> = ps.iter().cloned().zip(args).collect();
                    let r = self.resolve_in(body, &inner, stack);
                    stack.pop();
                    r?
                } else if let Some(info) = self.sums.get(name) {
                    if info.params.len() != args.len() {
                        return Err(format!(
                            "type '{name}' expects {} type arguments, found {}",
                            info.params.len(),
                            args.len()
                        ));
                    }
                    Ty::Sum(name.clone(), args)
                } else {
                    return Err(format!("unknown type '{name}'"));
                }
            }
        })
    }

    /// Payload type of `ctor` when its sum type is instantiated with `args`.
    pub fn ctor_payload(&self, ctor: &str, args: &[Ty]) -> Option<Ty> {
        let sum = self.ctors.get(ctor)?;
        let info = self.sums.get(sum)?;
        let v = info.variants.iter().find(|v| v.name == ctor)?;
        let params: HashMap<String, Ty> = info.params.iter().cloned().zip(args.iter().cloned()).collect();
        Some(match &v.payload {
            Some(p) => self.resolve_in(p, &params, &mut Vec::new()).ok()?,
            None => Ty::Tuple(Vec::new()),
        })
    }

    pub fn ctor_sum(&self, ctor: &str) -> Option<&str> {
        self.ctors.get(ctor).map(|s| s.as_str())
    }

    pub fn variants(&self, sum: &str) -> Option<Vec<(String, bool)>> {
        self.sums.get(sum).map(|info| {
            info.variants
                .iter()
                .map(|v| (v.name.clone(), v.payload.is_some()))
                .collect()
        })
    }

    pub fn is_ctor(&self, name: &str) -> bool {
        self.ctors.contains_key(name)
    }
}

/// Result of checking a program.
#[derive(Debug, Clone, Default)]
pub struct CheckResult {
    pub diagnostics: Vec<Diagnostic>,
    /// Inferred type of every top-level operator that checked cleanly.
    pub op_types: HashMap<String, Scheme>,
}

pub fn typecheck(program: &Program) -> CheckResult {
    let mut c = Checker::new(program);
    c.run();
    CheckResult {
        diagnostics: c.diags,
        op_types: c
            .globals
            .iter()
            .filter_map(|(n, g)| match g {
                Global::Op { scheme, .. } if !c.failed.contains(n) => {
                    Some((n.clone(), scheme.clone()))
                }
                _ => None,
            })
            .collect(),
    }
}

type TResult<T> = Result<T, Diagnostic>;

struct Deferred {
    base: Ty,
    field: String,
    result: Ty,
    span: Span,
}

struct Checker<'p> {
    program: &'p Program,
    sources: &'p SourceMap,
    env: TypeEnv,
    subst: Vec<Option<Ty>>,
    globals: HashMap<String, Global>,
    failed: HashSet<String>,
    diags: Vec<Diagnostic>,
    deferred: Vec<Deferred>,
    /// Qualifier and name of the definition being checked.
    current: (Qualifier, String),
    locals: Vec<(String, Ty)>,
}

impl<'p> Checker<'p> {
    fn new(program: &'p Program) -> Checker<'p> {
        Checker {
            program,
            sources: &program.sources,
            env: TypeEnv::default(),
            subst: Vec::new(),
            globals: HashMap::new(),
            failed: HashSet::new(),
            diags: Vec::new(),
            deferred: Vec::new(),
            current: (Qualifier::PureDef, String::new()),
            locals: Vec::new(),
        }
    }

    fn err(&self, code: &str, msg: impl Into<String>, span: Span) -> Diagnostic {
        Diagnostic::error(code, msg).at(span, self.sources)
    }

    fn fresh(&mut self) -> Ty {
        self.subst.push(None);
        Ty::Var(self.subst.len() as u32 - 1)
    }

    // ---- declarations ----

    fn run(&mut self) {
        self.diags.extend(self.program.missing_imports.iter().cloned());
        let program = self.program;

        // Types first: every name must be unique across types and constructors.
        let mut seen_types: HashSet<String> = HashSet::new();
        let mut seen_ctors: HashSet<String> = HashSet::new();
        for d in program.decls() {
            if let Decl::Type(t) = d {
                if !seen_types.insert(t.name.clone()) {
                    self.diags.push(self.err(
                        codes::DUPLICATE,
                        format!("type '{}' is defined more than once", t.name),
                        t.span,
                    ));
                    continue;
                }
                if let TypeDefBody::Sum(vs) = &t.body {
                    for v in vs {
                        if !seen_ctors.insert(v.name.clone()) {
                            self.diags.push(self.err(
                                codes::DUPLICATE,
                                format!("constructor '{}' is defined more than once", v.name),
                                t.span,
                            ));
                        }
                    }
                }
                self.env.add(t);
            }
        }
        for d in program.decls() {
            if let Decl::Type(t) = d {
                let params: HashMap<String, Ty> = t
                    .params
                    .iter()
                    .map(|p| (p.clone(), Ty::Param(p.clone())))
                    .collect();
                let check = |te: &TypeExpr, env: &TypeEnv| -> Result<(), String> {
                    let mut refs = Vec::new();
                    free_type_vars(te, &mut refs);
                    if let Some(v) = refs.iter().find(|v| !t.params.contains(v)) {
                        return Err(format!("unknown type variable '{v}'"));
                    }
                    env.resolve_in(te, &params, &mut vec![t.name.clone()]).map(|_| ())
                };
                let res = match &t.body {
                    TypeDefBody::Alias(body) => check(body, &self.env),
                    TypeDefBody::Sum(vs) => vs
                        .iter()
                        .filter_map(|v| v.payload.as_ref())
                        .try_for_each(|p| check(p, &self.env)),
                };
                if let Err(msg) = res {
                    let code = if msg.contains("refers to itself") {
                        codes::RECURSION
                    } else {
                        codes::UNKNOWN_TYPE
                    };
                    self.diags.push(self.err(code, msg, t.span));
                }
            }
        }

        // State variables, constants and operator names.
        let mut ops: Vec<&OpDef> = Vec::new();
        for d in program.decls() {
            let (name, span) = match d {
                Decl::Var(v) => (&v.name, v.span),
                Decl::Const(c) => (&c.name, c.span),
                Decl::Op(o) => (&o.name, o.span),
                _ => continue,
            };
            if self.globals.contains_key(name) || self.env.is_ctor(name) && !matches!(d, Decl::Op(_)) {
                self.diags.push(self.err(
                    codes::DUPLICATE,
                    format!("name '{name}' is defined more than once"),
                    span,
                ));
                continue;
            }
            if ops.iter().any(|o| &o.name == name) {
                self.diags.push(self.err(
                    codes::DUPLICATE,
                    format!("name '{name}' is defined more than once"),
                    span,
                ));
                continue;
            }
            match d {
                Decl::Var(v) => match self.env.resolve(&v.ty) {
                    Ok(t) => {
                        self.globals.insert(v.name.clone(), Global::Var(t));
                    }
                    Err(m) => self.diags.push(self.err(codes::UNKNOWN_TYPE, m, v.span)),
                },
                Decl::Const(c) => match self.env.resolve(&c.ty) {
                    Ok(t) => {
                        self.globals.insert(c.name.clone(), Global::Const(t));
                    }
                    Err(m) => self.diags.push(self.err(codes::UNKNOWN_TYPE, m, c.span)),
                },
                Decl::Op(o) => ops.push(o),
                _ => {}
            }
        }

        for op in self.order_ops(&ops) {
            self.check_op(op);
        }
    }

    /// Topological order of operator definitions; cycles are reported.
    fn order_ops<'a>(&mut self, ops: &[&'a OpDef]) -> Vec<&'a OpDef> {
        let index: HashMap<&str, usize> = ops.iter().enumerate().map(|(i, o)| (o.name.as_str(), i)).collect();
        let deps: Vec<Vec<usize>> = ops
            .iter()
            .map(|o| {
                let mut names = BTreeSet::new();
                let mut bound: Vec<String> = o.param_list().iter().map(|p| p.name.clone()).collect();
                free_names(&o.body, &mut bound, &mut names);
                names
                    .iter()
                    .filter_map(|n| index.get(n.as_str()).copied())
                    .collect()
            })
            .collect();
        // 0 = unvisited, 1 = on stack, 2 = done
        let mut state = vec![0u8; ops.len()];
        let mut order = Vec::new();
        let mut reported: HashSet<usize> = HashSet::new();
        fn visit(
            i: usize,
            deps: &[Vec<usize>],
            state: &mut [u8],
            order: &mut Vec<usize>,
            cycles: &mut Vec<usize>,
        ) {
            state[i] = 1;
            for &d in &deps[i] {
                match state[d] {
                    0 => visit(d, deps, state, order, cycles),
                    1 => cycles.push(d),
                    _ => {}
                }
            }
            state[i] = 2;
            order.push(i);
        }
        let mut cycles = Vec::new();
        for i in 0..ops.len() {
            if state[i] == 0 {
                visit(i, &deps, &mut state, &mut order, &mut cycles);
            }
        }
        for c in cycles {
            if reported.insert(c) {
                let op = ops[c];
                self.diags.push(self.err(
                    codes::RECURSION,
                    format!("recursive definition '{}' is not supported", op.name),
                    op.name_span,
                ));
                self.failed.insert(op.name.clone());
            }
        }
        order.into_iter().map(|i| ops[i]).collect()
    }

    fn check_op(&mut self, op: &OpDef) {
        self.current = (op.qualifier, op.name.clone());
        self.locals.clear();
        self.deferred.clear();
        let mut rigid: HashMap<String, Ty> = HashMap::new();
        let result = self.check_op_inner(op, &mut rigid);
        let scheme = match result {
            Ok(ty) => {
                let ty = self.zonk(&ty);
                let ty = self.rigid_to_vars(&ty, &mut HashMap::new());
                let mut vars = Vec::new();
                collect_vars(&ty, &mut vars);
                Scheme { vars, ty }
            }
            Err(d) => {
                self.diags.push(d);
                self.failed.insert(op.name.clone());
                // Poisoned definitions get a fully generic type to avoid cascades.
                let t = self.fresh();
                let ty = match &op.params {
                    Some(ps) => {
                        let ps: Vec<Ty> = ps.iter().map(|_| self.fresh()).collect();
                        Ty::fun(ps, t)
                    }
                    None => t,
                };
                let mut vars = Vec::new();
                collect_vars(&ty, &mut vars);
                Scheme { vars, ty }
            }
        };
        self.globals.insert(
            op.name.clone(),
            Global::Op {
                qualifier: op.qualifier,
                has_params: op.params.is_some(),
                scheme,
            },
        );
    }

    fn check_op_inner(&mut self, op: &OpDef, rigid: &mut HashMap<String, Ty>) -> TResult<Ty> {
        let mut param_tys = Vec::new();
        for p in op.param_list() {
            let t = match &p.ty {
                Some(te) => self.sig_type(te, rigid, op.span)?,
                None => self.fresh(),
            };
            param_tys.push(t.clone());
            self.locals.push((p.name.clone(), t));
        }
        let body_ty = self.infer(&op.body, None)?;
        if let Some(ret) = &op.ret {
            let rt = self.sig_type(ret, rigid, op.span)?;
            self.unify(&rt, &body_ty, op.body.span)?;
        }
        if op.qualifier == Qualifier::Action {
            self.unify(&Ty::Bool, &body_ty, op.body.span)?;
        }
        self.flush_deferred(true)?;
        Ok(match &op.params {
            Some(_) => Ty::fun(param_tys, body_ty),
            None => body_ty,
        })
    }

    fn sig_type(&mut self, te: &TypeExpr, rigid: &mut HashMap<String, Ty>, span: Span) -> TResult<Ty> {
        let mut vars = Vec::new();
        free_type_vars(te, &mut vars);
        for v in vars {
            rigid.entry(v.clone()).or_insert(Ty::Param(v));
        }
        self.env
            .resolve_in(te, rigid, &mut Vec::new())
            .map_err(|m| self.err(codes::UNKNOWN_TYPE, m, span))
    }

    fn rigid_to_vars(&mut self, t: &Ty, map: &mut HashMap<String, Ty>) -> Ty {
        match t {
            Ty::Param(p) => {
                if let Some(v) = map.get(p) {
                    return v.clone();
                }
                let v = self.fresh();
                map.insert(p.clone(), v.clone());
                v
            }
            _ => self.map_ty(t, &mut |c, t| c.rigid_to_vars(t, map)),
        }
    }

    fn map_ty(&mut self, t: &Ty, f: &mut dyn FnMut(&mut Self, &Ty) -> Ty) -> Ty {
        match t {
            Ty::Int | Ty::Bool | Ty::Str | Ty::Var(_) | Ty::Param(_) => t.clone(),
            Ty::Set(x) => Ty::set(f(self, x)),
            Ty::List(x) => Ty::list(f(self, x)),
            Ty::Map(k, v) => {
                let k = f(self, k);
                Ty::map(k, f(self, v))
            }
            Ty::Tuple(ts) => Ty::Tuple(ts.iter().map(|t| f(self, t)).collect()),
            Ty::Record(fs) => Ty::Record(fs.iter().map(|(n, t)| (n.clone(), f(self, t))).collect()),
            Ty::Sum(n, args) => Ty::Sum(n.clone(), args.iter().map(|t| f(self, t)).collect()),
            Ty::Fun(ps, r) => {
                let ps = ps.iter().map(|t| f(self, t)).collect();
                Ty::fun(ps, f(self, r))
            }
        }
    }

    fn instantiate(&mut self, s: &Scheme) -> Ty {
        if s.vars.is_empty() {
            return s.ty.clone();
        }
        let map: HashMap<u32, Ty> = s.vars.iter().map(|v| (*v, self.fresh())).collect();
        subst_vars(&s.ty, &map)
    }

    // ---- unification ----

    fn resolve(&self, t: &Ty) -> Ty {
        let mut t = t.clone();
        while let Ty::Var(v) = t {
            match &self.subst[v as usize] {
                Some(b) => t = b.clone(),
                None => return t,
            }
        }
        t
    }

    fn zonk(&self, t: &Ty) -> Ty {
        match self.resolve(t) {
            Ty::Set(x) => Ty::set(self.zonk(&x)),
            Ty::List(x) => Ty::list(self.zonk(&x)),
            Ty::Map(k, v) => Ty::map(self.zonk(&k), self.zonk(&v)),
            Ty::Tuple(ts) => Ty::Tuple(ts.iter().map(|t| self.zonk(t)).collect()),
            Ty::Record(fs) => Ty::Record(fs.iter().map(|(n, t)| (n.clone(), self.zonk(t))).collect()),
            Ty::Sum(n, args) => Ty::Sum(n, args.iter().map(|t| self.zonk(t)).collect()),
            Ty::Fun(ps, r) => Ty::fun(ps.iter().map(|t| self.zonk(t)).collect(), self.zonk(&r)),
            other => other,
        }
    }

    fn occurs(&self, v: u32, t: &Ty) -> bool {
        match self.resolve(t) {
            Ty::Var(w) => v == w,
            Ty::Set(x) | Ty::List(x) => self.occurs(v, &x),
            Ty::Map(k, x) => self.occurs(v, &k) || self.occurs(v, &x),
            Ty::Tuple(ts) | Ty::Sum(_, ts) => ts.iter().any(|t| self.occurs(v, t)),
            Ty::Record(fs) => fs.values().any(|t| self.occurs(v, t)),
            Ty::Fun(ps, r) => ps.iter().any(|t| self.occurs(v, t)) || self.occurs(v, &r),
            _ => false,
        }
    }

    /// Unifies `expected` with `found`, reporting a mismatch at `span`.
    fn unify(&mut self, expected: &Ty, found: &Ty, span: Span) -> TResult<()> {
        if self.unify_inner(expected, found) {
            Ok(())
        } else {
            Err(self.err(
                codes::TYPE_MISMATCH,
                format!(
                    "type mismatch: expected {}, found {}",
                    self.zonk(expected),
                    self.zonk(found)
                ),
                span,
            ))
        }
    }

    fn unify_inner(&mut self, a: &Ty, b: &Ty) -> bool {
        let a = self.resolve(a);
        let b = self.resolve(b);
        match (&a, &b) {
            (Ty::Var(x), Ty::Var(y)) if x == y => true,
            (Ty::Var(x), t) | (t, Ty::Var(x)) => {
                if self.occurs(*x, t) {
                    return false;
                }
                self.subst[*x as usize] = Some(t.clone());
                true
            }
            (Ty::Int, Ty::Int) | (Ty::Bool, Ty::Bool) | (Ty::Str, Ty::Str) => true,
            (Ty::Param(x), Ty::Param(y)) => x == y,
            (Ty::Set(x), Ty::Set(y)) | (Ty::List(x), Ty::List(y)) => self.unify_inner(x, y),
            (Ty::Map(k1, v1), Ty::Map(k2, v2)) => self.unify_inner(k1, k2) && self.unify_inner(v1, v2),
            (Ty::Tuple(xs), Ty::Tuple(ys)) => {
                xs.len() == ys.len() && xs.iter().zip(ys).all(|(x, y)| self.unify_inner(x, y))
            }
            (Ty::Record(xs), Ty::Record(ys)) => {
                xs.len() == ys.len()
                    && xs.keys().eq(ys.keys())
                    && xs.values().zip(ys.values()).all(|(x, y)| self.unify_inner(x, y))
            }
            (Ty::Sum(n1, xs), Ty::Sum(n2, ys)) => {
                n1 == n2
                    && xs.len() == ys.len()
                    && xs.iter().zip(ys).all(|(x, y)| self.unify_inner(x, y))
            }
            (Ty::Fun(p1, r1), Ty::Fun(p2, r2)) => {
                p1.len() == p2.len()
                    && p1.iter().zip(p2).all(|(x, y)| self.unify_inner(x, y))
                    && self.unify_inner(r1, r2)
            }
            _ => false,
        }
    }

    fn flush_deferred(&mut self, final_pass: bool) -> TResult<()> {
        loop {
            let mut progress = false;
            let pending = std::mem::take(&mut self.deferred);
            for d in pending {
                let base = self.resolve(&d.base);
                if matches!(base, Ty::Var(_)) {
                    self.deferred.push(d);
                    continue;
                }
                progress = true;
                let t = self.field_type(&base, &d.field, d.span)?;
                self.unify(&d.result, &t, d.span)?;
            }
            if !progress || self.deferred.is_empty() {
                break;
            }
        }
        if final_pass {
            if let Some(d) = self.deferred.first() {
                return Err(self.err(
                    codes::AMBIGUOUS,
                    format!("cannot infer the record type for field access '.{}'", d.field),
                    d.span,
                ));
            }
        }
        Ok(())
    }

    fn field_type(&mut self, base: &Ty, field: &str, span: Span) -> TResult<Ty> {
        match base {
            Ty::Record(fs) => fs.get(field).cloned().ok_or_else(|| {
                self.err(
                    codes::FIELD,
                    format!("record has no field '{field}' (type {})", self.zonk(base)),
                    span,
                )
            }),
            Ty::Tuple(ts) => field
                .strip_prefix('_')
                .and_then(|n| n.parse::<usize>().ok())
                .filter(|n| *n >= 1 && *n <= ts.len())
                .map(|n| ts[n - 1].clone())
                .ok_or_else(|| {
                    self.err(
                        codes::FIELD,
                        format!("tuple has no component '{field}' (type {})", self.zonk(base)),
                        span,
                    )
                }),
            other => Err(self.err(
                codes::FIELD,
                format!("field access '.{field}' on non-record type {}", self.zonk(other)),
                span,
            )),
        }
    }

    // ---- expressions ----

    fn mode_error(&self, what: &str, span: Span) -> Diagnostic {
        let (q, name) = &self.current;
        self.err(
            codes::MODE,
            format!("{what} is not allowed in {} '{}'", q.keyword(), name),
            span,
        )
    }

    fn require_action(&self, what: &str, span: Span) -> TResult<()> {
        if self.current.0 == Qualifier::Action {
            Ok(())
        } else {
            Err(self.mode_error(what, span))
        }
    }

    fn lookup_local(&self, name: &str) -> Option<Ty> {
        self.locals
            .iter()
            .rev()
            .find(|(n, _)| n == name)
            .map(|(_, t)| t.clone())
    }

    fn check_global_mode(&self, name: &str, g: &Global, span: Span) -> TResult<()> {
        let q = self.current.0;
        match g {
            Global::Var(_) if q.is_pure() => Err(self.mode_error(
                &format!("reading state variable '{name}'"),
                span,
            )),
            Global::Op { qualifier, .. } => {
                let ok = match q {
                    Qualifier::PureVal | Qualifier::PureDef => qualifier.is_pure(),
                    Qualifier::Val | Qualifier::Def => *qualifier != Qualifier::Action,
                    Qualifier::Action => true,
                };
                if ok {
                    Ok(())
                } else {
                    Err(self.mode_error(
                        &format!("referring to {} '{name}'", qualifier.keyword()),
                        span,
                    ))
                }
            }
            _ => Ok(()),
        }
    }

    fn ctor_type(&mut self, name: &str) -> Option<(Ty, bool)> {
        let sum = self.env.ctors.get(name)?.clone();
        let info = self.env.sums.get(&sum)?.clone();
        let args: Vec<Ty> = info.params.iter().map(|_| self.fresh()).collect();
        let sum_ty = Ty::Sum(sum, args.clone());
        let payload = self.env.ctor_payload(name, &args)?;
        let has_payload = info
            .variants
            .iter()
            .find(|v| v.name == name)
            .map(|v| v.payload.is_some())
            .unwrap_or(false);
        Some((
            if has_payload {
                Ty::fun(vec![payload], sum_ty)
            } else {
                sum_ty
            },
            has_payload,
        ))
    }

    fn infer(&mut self, e: &Expr, hint: Option<&Ty>) -> TResult<Ty> {
        match &e.kind {
            ExprKind::Int(_) => Ok(Ty::Int),
            ExprKind::Bool(_) => Ok(Ty::Bool),
            ExprKind::Str(_) => Ok(Ty::Str),
            ExprKind::Name(n) => self.infer_name(n, e.span),
            ExprKind::App { op, args, .. } => self.infer_app(op, args, e.span),
            ExprKind::Lambda { params, body } => {
                let hinted = hint.map(|h| self.resolve(h));
                let param_tys: Vec<Ty> = match hinted {
                    Some(Ty::Fun(ps, _)) if ps.len() == params.len() => ps,
                    _ => params.iter().map(|_| self.fresh()).collect(),
                };
                let mark = self.locals.len();
                for (p, t) in params.iter().zip(&param_tys) {
                    self.locals.push((p.clone(), t.clone()));
                }
                let r = self.infer(body, None);
                self.locals.truncate(mark);
                Ok(Ty::fun(param_tys, r?))
            }
            ExprKind::Let {
                kind,
                name,
                params,
                ty,
                value,
                body,
            } => {
                if *kind == LetKind::Nondet {
                    self.require_action("nondet", e.span)?;
                }
                let mut rigid = HashMap::new();
                let declared = match (ty, params) {
                    (Some(te), None) => Some(self.sig_type(te, &mut rigid, e.span)?),
                    _ => None,
                };
                let vt = match params {
                    Some(ps) => {
                        let mark = self.locals.len();
                        let mut pts = Vec::new();
                        for p in ps {
                            let t = match &p.ty {
                                Some(te) => self.sig_type(te, &mut rigid, e.span)?,
                                None => self.fresh(),
                            };
                            pts.push(t.clone());
                            self.locals.push((p.name.clone(), t));
                        }
                        let r = self.infer(value, None);
                        self.locals.truncate(mark);
                        let r = r?;
                        if let Some(te) = ty {
                            let rt = self.sig_type(te, &mut rigid, e.span)?;
                            self.unify(&rt, &r, value.span)?;
                        }
                        Ty::fun(pts, r)
                    }
                    None => {
                        let vt = self.infer(value, declared.as_ref())?;
                        if let Some(d) = &declared {
                            self.unify(d, &vt, value.span)?;
                        }
                        vt
                    }
                };
                self.locals.push((name.clone(), vt));
                let r = self.infer(body, hint);
                self.locals.pop();
                r
            }
            ExprKind::If { cond, then, els } => {
                let ct = self.infer(cond, None)?;
                self.unify(&Ty::Bool, &ct, cond.span)?;
                let tt = self.infer(then, hint)?;
                let et = self.infer(els, Some(&tt))?;
                self.unify(&tt, &et, els.span)?;
                Ok(tt)
            }
            ExprKind::Match { scrutinee, arms } => self.infer_match(scrutinee, arms, e.span, hint),
            ExprKind::Record(fields) => {
                let mut out = BTreeMap::new();
                for (n, v) in fields {
                    let t = self.infer(v, None)?;
                    if out.insert(n.clone(), t).is_some() {
                        return Err(self.err(
                            codes::DUPLICATE,
                            format!("duplicate record field '{n}'"),
                            v.span,
                        ));
                    }
                }
                Ok(Ty::Record(out))
            }
            ExprKind::RecordUpdate { base, fields } => {
                let bt = self.infer(base, hint)?;
                let bt = self.resolve(&bt);
                match &bt {
                    Ty::Record(_) => {
                        for (n, v) in fields {
                            let ft = self.field_type(&bt, n, v.span)?;
                            let vt = self.infer(v, Some(&ft))?;
                            self.unify(&ft, &vt, v.span)?;
                        }
                        Ok(bt)
                    }
                    Ty::Var(_) => Err(self.err(
                        codes::AMBIGUOUS,
                        "cannot infer the record type of the spread base",
                        base.span,
                    )),
                    other => Err(self.err(
                        codes::TYPE_MISMATCH,
                        format!("record spread on non-record type {}", self.zonk(other)),
                        base.span,
                    )),
                }
            }
            ExprKind::Tuple(items) => {
                let mut ts = Vec::new();
                for i in items {
                    ts.push(self.infer(i, None)?);
                }
                Ok(Ty::Tuple(ts))
            }
            ExprKind::List(items) => {
                let elem = self.fresh();
                for i in items {
                    let t = self.infer(i, Some(&elem))?;
                    self.unify(&elem, &t, i.span)?;
                }
                Ok(Ty::list(elem))
            }
            ExprKind::Field { base, name } => {
                let bt = self.infer(base, None)?;
                let bt = self.resolve(&bt);
                if matches!(bt, Ty::Var(_)) {
                    let result = self.fresh();
                    self.deferred.push(Deferred {
                        base: bt,
                        field: name.clone(),
                        result: result.clone(),
                        span: e.span,
                    });
                    return Ok(result);
                }
                self.field_type(&bt, name, e.span)
            }
            ExprKind::Index { base, index } => {
                let bt = self.infer(base, None)?;
                let elem = self.fresh();
                self.unify(&Ty::list(elem.clone()), &bt, base.span)?;
                let it = self.infer(index, None)?;
                self.unify(&Ty::Int, &it, index.span)?;
                Ok(elem)
            }
            ExprKind::Neg(inner) => {
                let t = self.infer(inner, None)?;
                self.unify(&Ty::Int, &t, inner.span)?;
                Ok(Ty::Int)
            }
            ExprKind::Binary { op, lhs, rhs } => {
                let lt = self.infer(lhs, None)?;
                let rt = self.infer(rhs, Some(&lt))?;
                match op {
                    BinOp::Eq | BinOp::Neq => {
                        self.unify(&lt, &rt, rhs.span)?;
                        Ok(Ty::Bool)
                    }
                    BinOp::Lt | BinOp::Le | BinOp::Gt | BinOp::Ge => {
                        self.unify(&Ty::Int, &lt, lhs.span)?;
                        self.unify(&Ty::Int, &rt, rhs.span)?;
                        Ok(Ty::Bool)
                    }
                    BinOp::And | BinOp::Or | BinOp::Iff | BinOp::Implies => {
                        self.unify(&Ty::Bool, &lt, lhs.span)?;
                        self.unify(&Ty::Bool, &rt, rhs.span)?;
                        Ok(Ty::Bool)
                    }
                    _ => {
                        self.unify(&Ty::Int, &lt, lhs.span)?;
                        self.unify(&Ty::Int, &rt, rhs.span)?;
                        Ok(Ty::Int)
                    }
                }
            }
            ExprKind::Assign { name, value } => {
                self.require_action("assignment", e.span)?;
                let vt = match self.globals.get(name) {
                    Some(Global::Var(t)) => t.clone(),
                    _ => {
                        return Err(self.err(
                            codes::NAME_NOT_FOUND,
                            format!("state variable '{name}' not found"),
                            e.span,
                        ))
                    }
                };
                let t = self.infer(value, Some(&vt))?;
                self.unify(&vt, &t, value.span)?;
                Ok(Ty::Bool)
            }
            ExprKind::Block { kind, items } => {
                if matches!(kind, BlockKind::All | BlockKind::Any) {
                    self.require_action(&format!("'{}'", kind.keyword()), e.span)?;
                }
                for i in items {
                    let t = self.infer(i, None)?;
                    self.unify(&Ty::Bool, &t, i.span)?;
                }
                Ok(Ty::Bool)
            }
        }
    }

    fn infer_name(&mut self, n: &str, span: Span) -> TResult<Ty> {
        if let Some(t) = self.lookup_local(n) {
            return Ok(t);
        }
        if let Some(g) = self.globals.get(n).cloned() {
            self.check_global_mode(n, &g, span)?;
            return Ok(match g {
                Global::Op { scheme, .. } => self.instantiate(&scheme),
                Global::Var(t) | Global::Const(t) => t,
            });
        }
        if let Some((t, _)) = self.ctor_type(n) {
            return Ok(t);
        }
        Err(self.err(
            codes::NAME_NOT_FOUND,
            format!("name '{n}' not found"),
            span,
        ))
    }

    fn infer_match(
        &mut self,
        scrutinee: &Expr,
        arms: &[MatchArm],
        span: Span,
        hint: Option<&Ty>,
    ) -> TResult<Ty> {
        let st = self.infer(scrutinee, None)?;
        let st = self.resolve(&st);
        let (sum, args) = match &st {
            Ty::Sum(n, a) => (n.clone(), a.clone()),
            Ty::Var(_) => {
                // Infer the sum type from the first constructor pattern.
                let ctor = arms.iter().find_map(|a| match &a.pattern {
                    Pattern::Ctor { name, .. } => Some(name.clone()),
                    _ => None,
                });
                let Some(sum) = ctor.and_then(|c| self.env.ctors.get(&c).cloned()) else {
                    return Err(self.err(
                        codes::AMBIGUOUS,
                        "cannot infer the type of the matched expression",
                        scrutinee.span,
                    ));
                };
                let n = self.env.sums[&sum].params.len();
                let args: Vec<Ty> = (0..n).map(|_| self.fresh()).collect();
                self.unify(&Ty::Sum(sum.clone(), args.clone()), &st, scrutinee.span)?;
                (sum, args)
            }
            other => {
                return Err(self.err(
                    codes::PATTERN,
                    format!("match on non-variant type {}", self.zonk(other)),
                    scrutinee.span,
                ))
            }
        };
        let variants = self.env.variants(&sum).unwrap_or_default();
        let mut covered: HashSet<String> = HashSet::new();
        let mut wildcard = false;
        let result = hint.cloned().unwrap_or_else(|| self.fresh());
        for arm in arms {
            let mark = self.locals.len();
            match &arm.pattern {
                Pattern::Wildcard => wildcard = true,
                Pattern::Ctor { name, binder } => {
                    if !variants.iter().any(|(v, _)| v == name) {
                        return Err(self.err(
                            codes::PATTERN,
                            format!("constructor '{name}' does not belong to type {sum}"),
                            arm.span,
                        ));
                    }
                    covered.insert(name.clone());
                    if let Some(b) = binder {
                        if b != "_" {
                            let payload = self
                                .env
                                .ctor_payload(name, &args)
                                .unwrap_or(Ty::Tuple(Vec::new()));
                            self.locals.push((b.clone(), payload));
                        }
                    }
                }
            }
            let bt = self.infer(&arm.body, Some(&result));
            self.locals.truncate(mark);
            let bt = bt?;
            self.unify(&result, &bt, arm.body.span)?;
        }
        if !wildcard {
            let missing: Vec<&str> = variants
                .iter()
                .filter(|(v, _)| !covered.contains(v))
                .map(|(v, _)| v.as_str())
                .collect();
            if !missing.is_empty() {
                return Err(self.err(
                    codes::NON_EXHAUSTIVE,
                    format!("non-exhaustive match: missing {}", missing.join(", ")),
                    span,
                ));
            }
        }
        Ok(result)
    }

    fn infer_app(&mut self, op: &str, args: &[Expr], span: Span) -> TResult<Ty> {
        // Operators bound locally or at the top level shadow builtins.
        let callee = if let Some(t) = self.lookup_local(op) {
            Some(t)
        } else if let Some(g) = self.globals.get(op).cloned() {
            self.check_global_mode(op, &g, span)?;
            match g {
                Global::Op {
                    scheme,
                    has_params: true,
                    ..
                } => Some(self.instantiate(&scheme)),
                Global::Op { scheme, .. } => Some(self.instantiate(&scheme)),
                Global::Var(t) | Global::Const(t) => Some(t),
            }
        } else if let Some((t, has_payload)) = self.ctor_type(op) {
            if !has_payload {
                if args.len() == 1 {
                    // `None(())` style: accept the unit payload.
                    let at = self.infer(&args[0], None)?;
                    self.unify(&Ty::Tuple(Vec::new()), &at, args[0].span)?;
                    return Ok(t);
                }
                return Err(self.err(
                    codes::ARITY,
                    format!("constructor '{op}' takes no arguments"),
                    span,
                ));
            }
            Some(t)
        } else {
            None
        };
        if let Some(t) = callee {
            let t = self.resolve(&t);
            let (params, ret) = match t {
                Ty::Fun(ps, r) => (ps, *r),
                Ty::Var(_) => {
                    let ps: Vec<Ty> = args.iter().map(|_| self.fresh()).collect();
                    let r = self.fresh();
                    self.unify(&Ty::fun(ps.clone(), r.clone()), &t, span)?;
                    (ps, r)
                }
                other => {
                    return Err(self.err(
                        codes::TYPE_MISMATCH,
                        format!("'{op}' is not an operator (type {})", self.zonk(&other)),
                        span,
                    ))
                }
            };
            return self.apply(op, params, ret, args, span);
        }
        self.infer_builtin(op, args, span)
    }

    fn apply(&mut self, op: &str, params: Vec<Ty>, ret: Ty, args: &[Expr], span: Span) -> TResult<Ty> {
        if params.len() != args.len() {
            return Err(self.err(
                codes::ARITY,
                format!(
                    "operator '{op}' expects {} arguments, found {}",
                    params.len(),
                    args.len()
                ),
                span,
            ));
        }
        for (p, a) in params.iter().zip(args) {
            let at = self.infer(a, Some(p))?;
            self.unify(p, &at, a.span)?;
            // Resolve pending field accesses as soon as argument types become known.
            self.flush_deferred(false)?;
        }
        Ok(ret)
    }

    fn infer_builtin(&mut self, op: &str, args: &[Expr], span: Span) -> TResult<Ty> {
        match op {
            "Set" | "List" => {
                let elem = self.fresh();
                for a in args {
                    let t = self.infer(a, Some(&elem))?;
                    self.unify(&elem, &t, a.span)?;
                }
                return Ok(if op == "Set" { Ty::set(elem) } else { Ty::list(elem) });
            }
            "Map" => {
                let k = self.fresh();
                let v = self.fresh();
                let pair = Ty::Tuple(vec![k.clone(), v.clone()]);
                for a in args {
                    let t = self.infer(a, Some(&pair))?;
                    self.unify(&pair, &t, a.span)?;
                }
                return Ok(Ty::map(k, v));
            }
            "oneOf" => self.require_action("'oneOf'", span)?,
            _ => {}
        }
        let Some((params, ret)) = self.builtin_sig(op) else {
            return Err(self.err(
                codes::NAME_NOT_FOUND,
                format!("operator '{op}' not found"),
                span,
            ));
        };
        self.apply(op, params, ret, args, span)
    }

    fn builtin_sig(&mut self, op: &str) -> Option<(Vec<Ty>, Ty)> {
        use Ty::*;
        let a = self.fresh();
        let b = self.fresh();
        let set = Ty::set;
        let list = Ty::list;
        let map = Ty::map;
        let fun = Ty::fun;
        Some(match op {
            "not" => (vec![Bool], Bool),
            "to" => (vec![Int, Int], set(Int)),
            "range" => (vec![Int, Int], list(Int)),
            "oneOf" => (vec![set(a.clone())], a),
            "contains" => (vec![set(a.clone()), a], Bool),
            "in" => (vec![a.clone(), set(a)], Bool),
            "subseteq" => (vec![set(a.clone()), set(a)], Bool),
            "union" | "intersect" | "exclude" => (vec![set(a.clone()), set(a.clone())], set(a)),
            "size" => (vec![set(a)], Int),
            "filter" => (vec![set(a.clone()), fun(vec![a.clone()], Bool)], set(a)),
            "map" => (vec![set(a.clone()), fun(vec![a], b.clone())], set(b)),
            "exists" | "forall" => (vec![set(a.clone()), fun(vec![a], Bool)], Bool),
            "fold" => (
                vec![set(a.clone()), b.clone(), fun(vec![b.clone(), a], b.clone())],
                b,
            ),
            "flatten" => (vec![set(set(a.clone()))], set(a)),
            "powerset" => (vec![set(a.clone())], set(set(a))),
            "mapBy" => (vec![set(a.clone()), fun(vec![a.clone()], b.clone())], map(a, b)),
            "setToMap" => (vec![set(Tuple(vec![a.clone(), b.clone()]))], map(a, b)),
            "keys" => (vec![map(a.clone(), b)], set(a)),
            "get" => (vec![map(a.clone(), b.clone()), a], b),
            "getOrElse" => (vec![map(a.clone(), b.clone()), a, b.clone()], b),
            "put" | "set" => (
                vec![map(a.clone(), b.clone()), a.clone(), b.clone()],
                map(a, b),
            ),
            "setBy" => (
                vec![map(a.clone(), b.clone()), a.clone(), fun(vec![b.clone()], b.clone())],
                map(a, b),
            ),
            "mapRemove" => (vec![map(a.clone(), b.clone()), a.clone()], map(a, b)),
            "append" => (vec![list(a.clone()), a.clone()], list(a)),
            "concat" => (vec![list(a.clone()), list(a.clone())], list(a)),
            "head" => (vec![list(a.clone())], a),
            "tail" => (vec![list(a.clone())], list(a)),
            "length" => (vec![list(a)], Int),
            "nth" => (vec![list(a.clone()), Int], a),
            "indices" => (vec![list(a)], set(Int)),
            "replaceAt" => (vec![list(a.clone()), Int, a.clone()], list(a)),
            "slice" => (vec![list(a.clone()), Int, Int], list(a)),
            "select" => (vec![list(a.clone()), fun(vec![a.clone()], Bool)], list(a)),
            "foldl" => (
                vec![list(a.clone()), b.clone(), fun(vec![b.clone(), a], b.clone())],
                b,
            ),
            "foldr" => (
                vec![list(a.clone()), b.clone(), fun(vec![a, b.clone()], b.clone())],
                b,
            ),
            _ => return None,
        })
    }
}

/// Names of builtin operators understood by the checker and evaluator.
pub const BUILTINS: &[&str] = &[
    "Set", "List", "Map", "not", "to", "range", "oneOf", "contains", "in", "subseteq", "union",
    "intersect", "exclude", "size", "filter", "map", "exists", "forall", "fold", "flatten",
    "powerset", "mapBy", "setToMap", "keys", "get", "getOrElse", "put", "set", "setBy",
    "mapRemove", "append", "concat", "head", "tail", "length", "nth", "indices", "replaceAt",
    "slice", "select", "foldl", "foldr",
];

fn subst_vars(t: &Ty, map: &HashMap<u32, Ty>) -> Ty {
    match t {
        Ty::Var(v) => map.get(v).cloned().unwrap_or(Ty::Var(*v)),
        Ty::Int | Ty::Bool | Ty::Str | Ty::Param(_) => t.clone(),
        Ty::Set(x) => Ty::set(subst_vars(x, map)),
        Ty::List(x) => Ty::list(subst_vars(x, map)),
        Ty::Map(k, v) => Ty::map(subst_vars(k, map), subst_vars(v, map)),
        Ty::Tuple(ts) => Ty::Tuple(ts.iter().map(|t| subst_vars(t, map)).collect()),
        Ty::Record(fs) => Ty::Record(fs.iter().map(|(n, t)| (n.clone(), subst_vars(t, map))).collect()),
        Ty::Sum(n, args) => Ty::Sum(n.clone(), args.iter().map(|t| subst_vars(t, map)).collect()),
        Ty::Fun(ps, r) => Ty::fun(ps.iter().map(|t| subst_vars(t, map)).collect(), subst_vars(r, map)),
    }
}

fn collect_vars(t: &Ty, out: &mut Vec<u32>) {
    match t {
        Ty::Var(v) => {
            if !out.contains(v) {
                out.push(*v);
            }
        }
        Ty::Int | Ty::Bool | Ty::Str | Ty::Param(_) => {}
        Ty::Set(x) | Ty::List(x) => collect_vars(x, out),
        Ty::Map(k, v) => {
            collect_vars(k, out);
            collect_vars(v, out);
        }
        Ty::Tuple(ts) | Ty::Sum(_, ts) => ts.iter().for_each(|t| collect_vars(t, out)),
        Ty::Record(fs) => fs.values().for_each(|t| collect_vars(t, out)),
        Ty::Fun(ps, r) => {
            ps.iter().for_each(|t| collect_vars(t, out));
            collect_vars(r, out);
        }
    }
}

fn free_type_vars(t: &TypeExpr, out: &mut Vec<String>) {
    match t {
        TypeExpr::Var(v) => {
            if !out.contains(v) {
                out.push(v.clone());
            }
        }
        TypeExpr::Int | TypeExpr::Bool | TypeExpr::Str => {}
        TypeExpr::Named { args, .. } => args.iter().for_each(|a| free_type_vars(a, out)),
        TypeExpr::Set(x) | TypeExpr::List(x) => free_type_vars(x, out),
        TypeExpr::Map(k, v) => {
            free_type_vars(k, out);
            free_type_vars(v, out);
        }
        TypeExpr::Tuple(ts) => ts.iter().for_each(|t| free_type_vars(t, out)),
        TypeExpr::Record(fs) => fs.iter().for_each(|(_, t)| free_type_vars(t, out)),
        TypeExpr::Fun(ps, r) => {
            ps.iter().for_each(|t| free_type_vars(t, out));
            free_type_vars(r, out);
        }
    }
}

/// Names referenced by `e` that are not bound inside it.
pub fn free_names(e: &Expr, bound: &mut Vec<String>, out: &mut BTreeSet<String>) {
    let mark = bound.len();
    match &e.kind {
        ExprKind::Int(_) | ExprKind::Bool(_) | ExprKind::Str(_) => {}
        ExprKind::Name(n) => {
            if !bound.contains(n) {
                out.insert(n.clone());
            }
        }
        ExprKind::App { op, args, .. } => {
            if !bound.contains(op) {
                out.insert(op.clone());
            }
            args.iter().for_each(|a| free_names(a, bound, out));
        }
        ExprKind::Lambda { params, body } => {
            bound.extend(params.iter().cloned());
            free_names(body, bound, out);
        }
        ExprKind::Let {
            name,
            params,
            value,
            body,
            ..
        } => {
            if let Some(ps) = params {
                bound.extend(ps.iter().map(|p| p.name.clone()));
                free_names(value, bound, out);
                bound.truncate(mark);
            } else {
                free_names(value, bound, out);
            }
            bound.push(name.clone());
            free_names(body, bound, out);
        }
        ExprKind::If { cond, then, els } => {
            free_names(cond, bound, out);
            free_names(then, bound, out);
            free_names(els, bound, out);
        }
        ExprKind::Match { scrutinee, arms } => {
            free_names(scrutinee, bound, out);
            for arm in arms {
                let m = bound.len();
                if let Pattern::Ctor {
                    binder: Some(b), ..
                } = &arm.pattern
                {
                    bound.push(b.clone());
                }
                free_names(&arm.body, bound, out);
                bound.truncate(m);
            }
        }
        ExprKind::Record(fs) => fs.iter().for_each(|(_, v)| free_names(v, bound, out)),
        ExprKind::RecordUpdate { base, fields } => {
            free_names(base, bound, out);
            fields.iter().for_each(|(_, v)| free_names(v, bound, out));
        }
        ExprKind::Tuple(items) | ExprKind::List(items) | ExprKind::Block { items, .. } => {
            items.iter().for_each(|i| free_names(i, bound, out))
        }
        ExprKind::Field { base, .. } | ExprKind::Neg(base) => free_names(base, bound, out),
        ExprKind::Index { base, index } => {
            free_names(base, bound, out);
            free_names(index, bound, out);
        }
        ExprKind::Binary { lhs, rhs, .. } => {
            free_names(lhs, bound, out);
            free_names(rhs, bound, out);
        }
        ExprKind::Assign { name, value } => {
            out.insert(name.clone());
            free_names(value, bound, out);
        }
    }
    bound.truncate(mark);
}
