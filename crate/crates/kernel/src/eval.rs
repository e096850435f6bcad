//! Tree-walking evaluator for pure definitions and action bodies.

use std::cell::{Cell, RefCell};
use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::rc::Rc;
use std::sync::Arc;

use num_bigint::BigInt;
use num_traits::{One, Signed, ToPrimitive, Zero};

use crate::diag::{codes, Diagnostic, SourceFile, SourceId, SourceMap, Span};
use crate::program::Program;
use crate::syntax::*;
use crate::value::Value;

/// Default number of evaluation steps allowed per entry point.
pub const DEFAULT_FUEL: u64 = 5_000_000;
const MAX_RANGE: u64 = 1_000_000;
const MAX_POWERSET_BASE: usize = 16;

#[derive(Debug, Clone)]
pub enum EvalError {
    Runtime(Diagnostic),
    /// A nondeterministic choice had no candidates; the enclosing action is disabled.
    Disabled,
}

type EResult<T> = Result<T, EvalError>;

/// Source of nondeterministic decisions while executing actions.
pub trait Chooser {
    /// Index into `options` (ascending order) for the nondeterministic binding `name`.
    fn choose(&mut self, name: &str, options: &[Value]) -> Option<usize>;
    /// Order in which the branches of an `any` block are tried. `labels` name the
    /// operator each branch invokes, when it is a plain call. `depth` is the nesting
    /// level of the block among `any` blocks.
    fn order(&mut self, labels: &[Option<String>], depth: usize) -> Vec<usize>;
}

/// Tries branches in order and always takes the first candidate.
pub struct FirstChooser;

impl Chooser for FirstChooser {
    fn choose(&mut self, _name: &str, options: &[Value]) -> Option<usize> {
        if options.is_empty() {
            None
        } else {
            Some(0)
        }
    }

    fn order(&mut self, labels: &[Option<String>], _depth: usize) -> Vec<usize> {
        (0..labels.len()).collect()
    }
}

/// Outcome of an enabled action.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Transition {
    pub next: BTreeMap<String, Value>,
    pub picks: BTreeMap<String, Value>,
    /// Labels of the outermost `any` branches taken, in execution order.
    pub taken: Vec<String>,
}

#[derive(Clone)]
enum Callable<'p> {
    Closure(Rc<Closure<'p>>),
    Op(&'p OpDef),
    Ctor(String),
}

struct Closure<'p> {
    params: Vec<String>,
    body: Rc<Expr>,
    env: Env<'p>,
}

#[derive(Clone)]
enum Binding<'p> {
    Val(Value),
    Fun(Callable<'p>),
}

#[derive(Clone, Default)]
struct Env<'p>(Option<Rc<EnvNode<'p>>>);

struct EnvNode<'p> {
    name: String,
    binding: Binding<'p>,
    next: Env<'p>,
}

impl<'p> Env<'p> {
    fn bind(&self, name: &str, binding: Binding<'p>) -> Env<'p> {
        Env(Some(Rc::new(EnvNode {
            name: name.to_string(),
            binding,
            next: self.clone(),
        })))
    }

    fn lookup(&self, name: &str) -> Option<&Binding<'p>> {
        let mut cur = self.0.as_ref();
        while let Some(node) = cur {
            if node.name == name {
                return Some(&node.binding);
            }
            cur = node.next.0.as_ref();
        }
        None
    }
}

struct Cx<'c> {
    state: Option<&'c BTreeMap<String, Value>>,
    next: BTreeMap<String, Value>,
    chooser: Option<&'c mut dyn Chooser>,
    picks: BTreeMap<String, Value>,
    taken: Vec<String>,
    any_depth: usize,
}

impl<'c> Cx<'c> {
    fn pure() -> Cx<'c> {
        Cx {
            state: None,
            next: BTreeMap::new(),
            chooser: None,
            picks: BTreeMap::new(),
            taken: Vec::new(),
            any_depth: 0,
        }
    }
}

enum Arg<'p> {
    V(Value),
    F(Callable<'p>),
}

pub struct Evaluator<'p> {
    program: &'p Program,
    sources: SourceMap,
    ops: HashMap<&'p str, &'p OpDef>,
    /// Constructor name to whether it carries a payload.
    ctors: HashMap<String, bool>,
    consts: BTreeSet<&'p str>,
    cache: RefCell<HashMap<String, Value>>,
    fuel: Cell<u64>,
    fuel_limit: u64,
}

impl<'p> Evaluator<'p> {
    pub fn new(program: &'p Program) -> Evaluator<'p> {
        let mut ops = HashMap::new();
        let mut ctors = HashMap::new();
        let mut consts = BTreeSet::new();
        for d in program.decls() {
            match d {
                Decl::Op(op) => {
                    ops.insert(op.name.as_str(), op);
                }
                Decl::Type(TypeDef {
                    body: TypeDefBody::Sum(vs),
                    ..
                }) => {
                    for v in vs {
                        ctors.insert(v.name.clone(), v.payload.is_some());
                    }
                }
                Decl::Const(c) => {
                    consts.insert(c.name.as_str());
                }
                _ => {}
            }
        }
        Evaluator {
            program,
            sources: program.sources.clone(),
            ops,
            ctors,
            consts,
            cache: RefCell::new(HashMap::new()),
            fuel: Cell::new(DEFAULT_FUEL),
            fuel_limit: DEFAULT_FUEL,
        }
    }

    pub fn with_fuel(mut self, fuel: u64) -> Evaluator<'p> {
        self.fuel_limit = fuel;
        self
    }

    /// Registers extra source text so diagnostics on loose expressions render excerpts.
    pub fn add_source(&mut self, id: SourceId, name: &str, text: &str) {
        self.sources.insert(id, Arc::new(SourceFile::new(name, text)));
    }

    pub fn program(&self) -> &'p Program {
        self.program
    }

    fn reset_fuel(&self) {
        self.fuel.set(self.fuel_limit);
    }

    fn runtime(&self, code: &str, msg: impl Into<String>, span: Span) -> EvalError {
        EvalError::Runtime(Diagnostic::error(code, msg).at(span, &self.sources))
    }

    fn internal(&self, msg: impl Into<String>, span: Span) -> EvalError {
        self.runtime(codes::RUNTIME_INTERNAL, msg, span)
    }

    fn finish<T>(&self, r: EResult<T>, span: Span) -> Result<T, Diagnostic> {
        r.map_err(|e| match e {
            EvalError::Runtime(d) => d,
            EvalError::Disabled => Diagnostic::error(
                codes::EMPTY_CHOICE,
                "nondeterministic choice from an empty set",
            )
            .at(span, &self.sources),
        })
    }

    /// Applies the pure definition `name` to `args`.
    pub fn eval_pure(&self, name: &str, args: &[Value]) -> Result<Value, Diagnostic> {
        self.reset_fuel();
        let Some(op) = self.ops.get(name).copied() else {
            return Err(Diagnostic::error(
                codes::NAME_NOT_FOUND,
                format!("definition '{name}' not found"),
            ));
        };
        if !op.qualifier.is_pure() {
            return Err(Diagnostic::error(
                codes::MODE,
                format!("'{name}' is not a pure definition"),
            )
            .at(op.name_span, &self.sources));
        }
        let arity = op.param_list().len();
        if arity != args.len() {
            return Err(Diagnostic::error(
                codes::ARITY,
                format!("'{name}' expects {arity} arguments, found {}", args.len()),
            )
            .at(op.name_span, &self.sources));
        }
        let mut cx = Cx::pure();
        let r = self.call(&Callable::Op(op), args.to_vec(), op.span, &mut cx);
        self.finish(r, op.span)
    }

    /// Evaluates a closed expression in the scope of the program's definitions.
    pub fn eval_expr(&self, e: &Expr) -> Result<Value, Diagnostic> {
        self.reset_fuel();
        let mut cx = Cx::pure();
        let r = self.eval(e, &Env::default(), &mut cx);
        self.finish(r, e.span)
    }

    /// Evaluates a non-action expression reading the given state.
    pub fn eval_in_state(&self, e: &Expr, state: &BTreeMap<String, Value>) -> Result<Value, Diagnostic> {
        self.reset_fuel();
        let mut cx = Cx::pure();
        cx.state = Some(state);
        let r = self.eval(e, &Env::default(), &mut cx);
        self.finish(r, e.span)
    }

    /// Runs the action `name` from `state`. Returns `None` when the action is disabled.
    pub fn run_action(
        &self,
        name: &str,
        args: &[Value],
        state: &BTreeMap<String, Value>,
        chooser: &mut dyn Chooser,
    ) -> Result<Option<Transition>, Diagnostic> {
        self.reset_fuel();
        let Some(op) = self.ops.get(name).copied() else {
            return Err(Diagnostic::error(
                codes::NAME_NOT_FOUND,
                format!("action '{name}' not found"),
            ));
        };
        let mut cx = Cx {
            state: Some(state),
            next: BTreeMap::new(),
            chooser: Some(chooser),
            picks: BTreeMap::new(),
            taken: Vec::new(),
            any_depth: 0,
        };
        let r = self.call(&Callable::Op(op), args.to_vec(), op.span, &mut cx);
        match r {
            Ok(Value::Bool(true)) => Ok(Some(Transition {
                next: cx.next,
                picks: cx.picks,
                taken: cx.taken,
            })),
            Ok(Value::Bool(false)) | Err(EvalError::Disabled) => Ok(None),
            Ok(other) => Err(Diagnostic::error(
                codes::RUNTIME_INTERNAL,
                format!("action '{name}' evaluated to non-boolean {other}"),
            )),
            Err(EvalError::Runtime(d)) => Err(d),
        }
    }

    fn tick(&self, span: Span) -> EResult<()> {
        let f = self.fuel.get();
        if f == 0 {
            return Err(self.runtime(codes::LIMIT, "evaluation step limit exceeded", span));
        }
        self.fuel.set(f - 1);
        Ok(())
    }

    fn call(&self, f: &Callable<'p>, args: Vec<Value>, span: Span, cx: &mut Cx) -> EResult<Value> {
        match f {
            Callable::Closure(c) => {
                if c.params.len() != args.len() {
                    return Err(self.internal("wrong number of arguments to lambda", span));
                }
                let mut env = c.env.clone();
                for (p, a) in c.params.iter().zip(args) {
                    env = env.bind(p, Binding::Val(a));
                }
                self.eval(&c.body, &env, cx)
            }
            Callable::Op(op) => {
                let params = op.param_list();
                if params.len() != args.len() {
                    return Err(self.internal(
                        format!("'{}' expects {} arguments, found {}", op.name, params.len(), args.len()),
                        span,
                    ));
                }
                let mut env = Env::default();
                for (p, a) in params.iter().zip(args) {
                    env = env.bind(&p.name, Binding::Val(a));
                }
                self.eval(&op.body, &env, cx)
            }
            Callable::Ctor(tag) => {
                let payload = args.into_iter().next().unwrap_or_else(Value::unit);
                Ok(Value::variant(tag, payload))
            }
        }
    }

    fn callable(&self, e: &Expr, env: &Env<'p>) -> EResult<Callable<'p>> {
        match &e.kind {
            ExprKind::Lambda { params, body } => Ok(Callable::Closure(Rc::new(Closure {
                params: params.clone(),
                body: Rc::new((**body).clone()),
                env: env.clone(),
            }))),
            ExprKind::Name(n) => {
                if let Some(b) = env.lookup(n) {
                    return match b {
                        Binding::Fun(f) => Ok(f.clone()),
                        Binding::Val(_) => Err(self.internal(format!("'{n}' is not an operator"), e.span)),
                    };
                }
                if let Some(op) = self.ops.get(n.as_str()) {
                    return Ok(Callable::Op(op));
                }
                if self.ctors.contains_key(n) {
                    return Ok(Callable::Ctor(n.clone()));
                }
                Err(self.internal(format!("'{n}' is not an operator"), e.span))
            }
            _ => Err(self.internal("expected an operator argument", e.span)),
        }
    }

    fn eval(&self, e: &Expr, env: &Env<'p>, cx: &mut Cx) -> EResult<Value> {
        self.tick(e.span)?;
        match &e.kind {
            ExprKind::Int(n) => Ok(Value::Int(n.clone())),
            ExprKind::Bool(b) => Ok(Value::Bool(*b)),
            ExprKind::Str(s) => Ok(Value::Str(s.clone())),
            ExprKind::Name(n) => self.eval_name(n, e.span, env, cx),
            ExprKind::App { op, args, .. } => self.eval_app(op, args, e.span, env, cx),
            ExprKind::Lambda { .. } => Err(self.internal("operator used as a value", e.span)),
            ExprKind::Let {
                kind,
                name,
                params,
                value,
                body,
                ..
            } => {
                let binding = if let Some(ps) = params {
                    Binding::Fun(Callable::Closure(Rc::new(Closure {
                        params: ps.iter().map(|p| p.name.clone()).collect(),
                        body: Rc::new((**value).clone()),
                        env: env.clone(),
                    })))
                } else if *kind == LetKind::Nondet {
                    Binding::Val(self.nondet(name, value, env, cx)?)
                } else if let ExprKind::Lambda { .. } = value.kind {
                    Binding::Fun(self.callable(value, env)?)
                } else {
                    Binding::Val(self.eval(value, env, cx)?)
                };
                let env = env.bind(name, binding);
                self.eval(body, &env, cx)
            }
            ExprKind::If { cond, then, els } => {
                if self.eval_bool(cond, env, cx)? {
                    self.eval(then, env, cx)
                } else {
                    self.eval(els, env, cx)
                }
            }
            ExprKind::Match { scrutinee, arms } => {
                let v = self.eval(scrutinee, env, cx)?;
                let Value::Variant { tag, payload } = v else {
                    return Err(self.internal(format!("match on non-variant value {v}"), scrutinee.span));
                };
                for arm in arms {
                    match &arm.pattern {
                        Pattern::Wildcard => return self.eval(&arm.body, env, cx),
                        Pattern::Ctor { name, binder } if *name == tag => {
                            let env = match binder {
                                Some(b) if b != "_" => env.bind(b, Binding::Val((*payload).clone())),
                                _ => env.clone(),
                            };
                            return self.eval(&arm.body, &env, cx);
                        }
                        _ => {}
                    }
                }
                Err(self.runtime(codes::NO_MATCH, format!("no match arm for variant '{tag}'"), e.span))
            }
            ExprKind::Record(fields) => {
                let mut out = BTreeMap::new();
                for (n, v) in fields {
                    out.insert(n.clone(), self.eval(v, env, cx)?);
                }
                Ok(Value::Record(out))
            }
            ExprKind::RecordUpdate { base, fields } => {
                let b = self.eval(base, env, cx)?;
                let Value::Record(mut out) = b else {
                    return Err(self.internal(format!("record spread on non-record {b}"), base.span));
                };
                for (n, v) in fields {
                    let val = self.eval(v, env, cx)?;
                    out.insert(n.clone(), val);
                }
                Ok(Value::Record(out))
            }
            ExprKind::Tuple(items) => Ok(Value::Tuple(self.eval_all(items, env, cx)?)),
            ExprKind::List(items) => Ok(Value::List(self.eval_all(items, env, cx)?)),
            ExprKind::Field { base, name } => {
                let b = self.eval(base, env, cx)?;
                match &b {
                    Value::Record(fs) => fs
                        .get(name)
                        .cloned()
                        .ok_or_else(|| self.internal(format!("record has no field '{name}'"), e.span)),
                    Value::Tuple(items) => name
                        .strip_prefix('_')
                        .and_then(|n| n.parse::<usize>().ok())
                        .filter(|n| *n >= 1 && *n <= items.len())
                        .map(|n| items[n - 1].clone())
                        .ok_or_else(|| self.internal(format!("tuple has no component '{name}'"), e.span)),
                    _ => Err(self.internal(format!("field access '.{name}' on {b}"), e.span)),
                }
            }
            ExprKind::Index { base, index } => {
                let l = self.eval(base, env, cx)?;
                let i = self.eval(index, env, cx)?;
                self.nth(&l, &i, e.span)
            }
            ExprKind::Neg(inner) => {
                let v = self.eval_int(inner, env, cx)?;
                Ok(Value::Int(-v))
            }
            ExprKind::Binary { op, lhs, rhs } => self.eval_binary(*op, lhs, rhs, e.span, env, cx),
            ExprKind::Assign { name, value } => {
                if cx.state.is_none() {
                    return Err(self.internal("assignment outside an action", e.span));
                }
                let v = self.eval(value, env, cx)?;
                if cx.next.contains_key(name) {
                    return Err(self.internal(format!("variable '{name}' assigned twice"), e.span));
                }
                cx.next.insert(name.clone(), v);
                Ok(Value::Bool(true))
            }
            ExprKind::Block { kind, items } => self.eval_block(*kind, items, env, cx),
        }
    }

    fn eval_all(&self, items: &[Expr], env: &Env<'p>, cx: &mut Cx) -> EResult<Vec<Value>> {
        items.iter().map(|i| self.eval(i, env, cx)).collect()
    }

    fn eval_bool(&self, e: &Expr, env: &Env<'p>, cx: &mut Cx) -> EResult<bool> {
        match self.eval(e, env, cx)? {
            Value::Bool(b) => Ok(b),
            v => Err(self.internal(format!("expected a boolean, found {v}"), e.span)),
        }
    }

    fn eval_int(&self, e: &Expr, env: &Env<'p>, cx: &mut Cx) -> EResult<BigInt> {
        match self.eval(e, env, cx)? {
            Value::Int(n) => Ok(n),
            v => Err(self.internal(format!("expected an integer, found {v}"), e.span)),
        }
    }

    fn eval_name(&self, n: &str, span: Span, env: &Env<'p>, cx: &mut Cx) -> EResult<Value> {
        if let Some(b) = env.lookup(n) {
            return match b {
                Binding::Val(v) => Ok(v.clone()),
                Binding::Fun(_) => Err(self.internal(format!("operator '{n}' used as a value"), span)),
            };
        }
        if let Some(op) = self.ops.get(n).copied() {
            if op.params.is_some() {
                return Err(self.internal(format!("operator '{n}' used as a value"), span));
            }
            let cacheable = op.qualifier == Qualifier::PureVal;
            if cacheable {
                if let Some(v) = self.cache.borrow().get(n) {
                    return Ok(v.clone());
                }
            }
            let v = self.eval(&op.body, &Env::default(), cx)?;
            if cacheable {
                self.cache.borrow_mut().insert(n.to_string(), v.clone());
            }
            return Ok(v);
        }
        if let Some(state) = cx.state {
            if let Some(v) = state.get(n) {
                return Ok(v.clone());
            }
        }
        if self.program.main.vars().any(|v| v.name == n) {
            return Err(self.internal(format!("state variable '{n}' has no value"), span));
        }
        if self.consts.contains(n) {
            return Err(self.internal(format!("constant '{n}' has no value"), span));
        }
        if let Some(has_payload) = self.ctors.get(n) {
            if !has_payload {
                return Ok(Value::variant(n, Value::unit()));
            }
            return Err(self.internal(format!("constructor '{n}' used as a value"), span));
        }
        Err(self.internal(format!("name '{n}' not found"), span))
    }

    fn nondet(&self, name: &str, value: &Expr, env: &Env<'p>, cx: &mut Cx) -> EResult<Value> {
        let set = match &value.kind {
            ExprKind::App { op, args, .. } if op == "oneOf" && args.len() == 1 => {
                self.eval(&args[0], env, cx)?
            }
            _ => return self.eval(value, env, cx),
        };
        let Value::Set(options) = set else {
            return Err(self.internal("oneOf expects a set", value.span));
        };
        let v = self.choose(name, options, value.span, cx)?;
        cx.picks.insert(name.to_string(), v.clone());
        Ok(v)
    }

    fn choose(&self, name: &str, options: BTreeSet<Value>, span: Span, cx: &mut Cx) -> EResult<Value> {
        let options: Vec<Value> = options.into_iter().collect();
        let Some(chooser) = cx.chooser.as_deref_mut() else {
            return Err(self.internal("nondeterministic choice outside an action", span));
        };
        match chooser.choose(name, &options) {
            Some(i) if i < options.len() => Ok(options[i].clone()),
            _ => Err(EvalError::Disabled),
        }
    }

    fn eval_block(&self, kind: BlockKind, items: &[Expr], env: &Env<'p>, cx: &mut Cx) -> EResult<Value> {
        match kind {
            BlockKind::And | BlockKind::All => {
                for i in items {
                    if !self.eval_bool(i, env, cx)? {
                        return Ok(Value::Bool(false));
                    }
                }
                Ok(Value::Bool(true))
            }
            BlockKind::Or => {
                for i in items {
                    if self.eval_bool(i, env, cx)? {
                        return Ok(Value::Bool(true));
                    }
                }
                Ok(Value::Bool(false))
            }
            BlockKind::Any => {
                let labels: Vec<Option<String>> = items
                    .iter()
                    .map(|i| match &i.kind {
                        ExprKind::App { op, .. } => Some(op.clone()),
                        ExprKind::Name(n) => Some(n.clone()),
                        _ => None,
                    })
                    .collect();
                let depth = cx.any_depth;
                let order = match cx.chooser.as_deref_mut() {
                    Some(c) => c.order(&labels, depth),
                    None => (0..items.len()).collect(),
                };
                for idx in order {
                    let Some(item) = items.get(idx) else { continue };
                    let saved_next = cx.next.clone();
                    let saved_picks = cx.picks.clone();
                    let saved_taken = cx.taken.len();
                    cx.any_depth += 1;
                    let r = self.eval(item, env, cx);
                    cx.any_depth -= 1;
                    match r {
                        Ok(Value::Bool(true)) => {
                            if depth == 0 {
                                if let Some(l) = &labels[idx] {
                                    cx.taken.insert(saved_taken, l.clone());
                                }
                            }
                            return Ok(Value::Bool(true));
                        }
                        Ok(Value::Bool(false)) | Err(EvalError::Disabled) => {
                            cx.next = saved_next;
                            cx.picks = saved_picks;
                            cx.taken.truncate(saved_taken);
                        }
                        Ok(v) => return Err(self.internal(format!("expected a boolean, found {v}"), item.span)),
                        Err(err) => return Err(err),
                    }
                }
                Ok(Value::Bool(false))
            }
        }
    }

    fn eval_binary(
        &self,
        op: BinOp,
        lhs: &Expr,
        rhs: &Expr,
        span: Span,
        env: &Env<'p>,
        cx: &mut Cx,
    ) -> EResult<Value> {
        match op {
            BinOp::And => {
                return Ok(Value::Bool(self.eval_bool(lhs, env, cx)? && self.eval_bool(rhs, env, cx)?))
            }
            BinOp::Or => {
                return Ok(Value::Bool(self.eval_bool(lhs, env, cx)? || self.eval_bool(rhs, env, cx)?))
            }
            BinOp::Implies => {
                return Ok(Value::Bool(!self.eval_bool(lhs, env, cx)? || self.eval_bool(rhs, env, cx)?))
            }
            BinOp::Iff => {
                return Ok(Value::Bool(self.eval_bool(lhs, env, cx)? == self.eval_bool(rhs, env, cx)?))
            }
            BinOp::Eq | BinOp::Neq => {
                let a = self.eval(lhs, env, cx)?;
                let b = self.eval(rhs, env, cx)?;
                return Ok(Value::Bool((a == b) == (op == BinOp::Eq)));
            }
            _ => {}
        }
        let a = self.eval_int(lhs, env, cx)?;
        let b = self.eval_int(rhs, env, cx)?;
        Ok(match op {
            BinOp::Add => Value::Int(a + b),
            BinOp::Sub => Value::Int(a - b),
            BinOp::Mul => Value::Int(a * b),
            BinOp::Div | BinOp::Mod => {
                if b.is_zero() {
                    return Err(self.runtime(codes::DIVISION_BY_ZERO, "Division by zero", span));
                }
                Value::Int(if op == BinOp::Div { a / b } else { a % b })
            }
            BinOp::Pow => Value::Int(self.pow(&a, &b, span)?),
            BinOp::Lt => Value::Bool(a < b),
            BinOp::Le => Value::Bool(a <= b),
            BinOp::Gt => Value::Bool(a > b),
            BinOp::Ge => Value::Bool(a >= b),
            _ => unreachable!("handled above"),
        })
    }

    fn pow(&self, a: &BigInt, b: &BigInt, span: Span) -> EResult<BigInt> {
        if b.is_negative() {
            return Err(self.runtime(codes::NEGATIVE_EXPONENT, "Exponent must be non-negative", span));
        }
        if a.is_zero() || a.abs().is_one() {
            let even = (b % 2u32).is_zero();
            return Ok(if a.is_zero() {
                if b.is_zero() {
                    BigInt::one()
                } else {
                    BigInt::zero()
                }
            } else if a.is_negative() && !even {
                -BigInt::one()
            } else {
                BigInt::one()
            });
        }
        match b.to_u32() {
            Some(e) if (e as u64) * a.bits() <= 1 << 20 => Ok(a.pow(e)),
            _ => Err(self.runtime(codes::LIMIT, "exponentiation result too large", span)),
        }
    }

    fn nth(&self, l: &Value, i: &Value, span: Span) -> EResult<Value> {
        let (Value::List(items), Value::Int(i)) = (l, i) else {
            return Err(self.internal("indexing expects a list and an integer", span));
        };
        i.to_usize()
            .filter(|i| *i < items.len())
            .map(|i| items[i].clone())
            .ok_or_else(|| self.runtime(codes::INDEX_OUT_OF_RANGE, format!("Out of bounds, nth({i})"), span))
    }

    fn eval_app(&self, op: &str, args: &[Expr], span: Span, env: &Env<'p>, cx: &mut Cx) -> EResult<Value> {
        if let Some(b) = env.lookup(op) {
            let Binding::Fun(f) = b else {
                return Err(self.internal(format!("'{op}' is not an operator"), span));
            };
            let f = f.clone();
            let vals = self.eval_all(args, env, cx)?;
            return self.call(&f, vals, span, cx);
        }
        if let Some(def) = self.ops.get(op).copied() {
            let vals = self.eval_all(args, env, cx)?;
            return self.call(&Callable::Op(def), vals, span, cx);
        }
        if self.ctors.contains_key(op) {
            let vals = self.eval_all(args, env, cx)?;
            return self.call(&Callable::Ctor(op.to_string()), vals, span, cx);
        }
        self.builtin(op, args, span, env, cx)
    }

    fn builtin(&self, op: &str, args: &[Expr], span: Span, env: &Env<'p>, cx: &mut Cx) -> EResult<Value> {
        let fn_pos: Option<usize> = match op {
            "filter" | "map" | "exists" | "forall" | "mapBy" | "select" => Some(1),
            "fold" | "setBy" | "foldl" | "foldr" => Some(2),
            _ => None,
        };
        let mut a = Vec::with_capacity(args.len());
        for (i, arg) in args.iter().enumerate() {
            if Some(i) == fn_pos {
                a.push(Arg::F(self.callable(arg, env)?));
            } else {
                a.push(Arg::V(self.eval(arg, env, cx)?));
            }
        }
        let bad = || self.internal(format!("invalid arguments to '{op}'"), span);
        macro_rules! v {
            ($i:expr) => {
                match a.get($i) {
                    Some(Arg::V(v)) => v,
                    _ => return Err(bad()),
                }
            };
        }
        macro_rules! f {
            ($i:expr) => {
                match a.get($i) {
                    Some(Arg::F(f)) => f.clone(),
                    _ => return Err(bad()),
                }
            };
        }
        macro_rules! set {
            ($i:expr) => {
                match v!($i) {
                    Value::Set(s) => s,
                    _ => return Err(bad()),
                }
            };
        }
        macro_rules! list {
            ($i:expr) => {
                match v!($i) {
                    Value::List(l) => l,
                    _ => return Err(bad()),
                }
            };
        }
        macro_rules! map {
            ($i:expr) => {
                match v!($i) {
                    Value::Map(m) => m,
                    _ => return Err(bad()),
                }
            };
        }
        macro_rules! int {
            ($i:expr) => {
                match v!($i) {
                    Value::Int(n) => n,
                    _ => return Err(bad()),
                }
            };
        }
        let arity = |n: usize| -> EResult<()> {
            if a.len() == n {
                Ok(())
            } else {
                Err(self.internal(format!("'{op}' expects {n} arguments, found {}", a.len()), span))
            }
        };
        let test = |f: &Callable<'p>, x: &Value, cx: &mut Cx| -> EResult<bool> {
            match self.call(f, vec![x.clone()], span, cx)? {
                Value::Bool(b) => Ok(b),
                other => Err(self.internal(format!("predicate returned {other}"), span)),
            }
        };
        match op {
            "Set" => Ok(Value::Set(a.iter().filter_map(|x| match x {
                Arg::V(v) => Some(v.clone()),
                _ => None,
            }).collect())),
            "List" => Ok(Value::List(a.iter().filter_map(|x| match x {
                Arg::V(v) => Some(v.clone()),
                _ => None,
            }).collect())),
            "Map" => {
                let mut m = BTreeMap::new();
                for i in 0..a.len() {
                    match v!(i) {
                        Value::Tuple(kv) if kv.len() == 2 => {
                            m.insert(kv[0].clone(), kv[1].clone());
                        }
                        _ => return Err(bad()),
                    }
                }
                Ok(Value::Map(m))
            }
            "not" => {
                arity(1)?;
                match v!(0) {
                    Value::Bool(b) => Ok(Value::Bool(!b)),
                    _ => Err(bad()),
                }
            }
            "to" | "range" => {
                arity(2)?;
                let (lo, hi) = (int!(0).clone(), int!(1).clone());
                let hi: BigInt = if op == "to" { hi } else { hi - 1 };
                let count: BigInt = (&hi - &lo + 1u32).max(BigInt::zero());
                if count > BigInt::from(MAX_RANGE) {
                    return Err(self.runtime(codes::LIMIT, format!("range of {count} elements is too large"), span));
                }
                let mut items = Vec::new();
                let mut x = lo;
                while x <= hi {
                    items.push(Value::Int(x.clone()));
                    x += 1;
                }
                Ok(if op == "to" {
                    Value::Set(items.into_iter().collect())
                } else {
                    Value::List(items)
                })
            }
            "oneOf" => {
                arity(1)?;
                let s = set!(0).clone();
                self.choose("oneOf", s, span, cx)
            }
            "contains" => {
                arity(2)?;
                Ok(Value::Bool(set!(0).contains(v!(1))))
            }
            "in" => {
                arity(2)?;
                Ok(Value::Bool(set!(1).contains(v!(0))))
            }
            "subseteq" => {
                arity(2)?;
                Ok(Value::Bool(set!(0).is_subset(set!(1))))
            }
            "union" | "intersect" | "exclude" => {
                arity(2)?;
                let (x, y) = (set!(0), set!(1));
                Ok(Value::Set(match op {
                    "union" => x.union(y).cloned().collect(),
                    "intersect" => x.intersection(y).cloned().collect(),
                    _ => x.difference(y).cloned().collect(),
                }))
            }
            "size" => {
                arity(1)?;
                Ok(Value::int(set!(0).len() as u64))
            }
            "filter" => {
                arity(2)?;
                let f = f!(1);
                let mut out = BTreeSet::new();
                for x in set!(0) {
                    if test(&f, x, cx)? {
                        out.insert(x.clone());
                    }
                }
                Ok(Value::Set(out))
            }
            "map" => {
                arity(2)?;
                let f = f!(1);
                let mut out = BTreeSet::new();
                for x in set!(0) {
                    out.insert(self.call(&f, vec![x.clone()], span, cx)?);
                }
                Ok(Value::Set(out))
            }
            "exists" | "forall" => {
                arity(2)?;
                let f = f!(1);
                let want = op == "exists";
                for x in set!(0) {
                    if test(&f, x, cx)? == want {
                        return Ok(Value::Bool(want));
                    }
                }
                Ok(Value::Bool(!want))
            }
            "fold" | "foldl" => {
                arity(3)?;
                let f = f!(2);
                let items: Vec<Value> = if op == "fold" {
                    set!(0).iter().cloned().collect()
                } else {
                    list!(0).clone()
                };
                let mut acc = v!(1).clone();
                for x in items {
                    acc = self.call(&f, vec![acc, x], span, cx)?;
                }
                Ok(acc)
            }
            "foldr" => {
                arity(3)?;
                let f = f!(2);
                let mut acc = v!(1).clone();
                for x in list!(0).iter().rev() {
                    acc = self.call(&f, vec![x.clone(), acc], span, cx)?;
                }
                Ok(acc)
            }
            "flatten" => {
                arity(1)?;
                let mut out = BTreeSet::new();
                for x in set!(0) {
                    match x {
                        Value::Set(inner) => out.extend(inner.iter().cloned()),
                        _ => return Err(bad()),
                    }
                }
                Ok(Value::Set(out))
            }
            "powerset" => {
                arity(1)?;
                let items: Vec<Value> = set!(0).iter().cloned().collect();
                if items.len() > MAX_POWERSET_BASE {
                    return Err(self.runtime(codes::LIMIT, "powerset of a set this large is not supported", span));
                }
                let mut out = BTreeSet::new();
                for mask in 0u32..(1 << items.len()) {
                    out.insert(Value::Set(
                        items
                            .iter()
                            .enumerate()
                            .filter(|(i, _)| mask & (1 << i) != 0)
                            .map(|(_, v)| v.clone())
                            .collect(),
                    ));
                }
                Ok(Value::Set(out))
            }
            "mapBy" => {
                arity(2)?;
                let f = f!(1);
                let mut out = BTreeMap::new();
                for x in set!(0) {
                    out.insert(x.clone(), self.call(&f, vec![x.clone()], span, cx)?);
                }
                Ok(Value::Map(out))
            }
            "setToMap" => {
                arity(1)?;
                let mut out = BTreeMap::new();
                for x in set!(0) {
                    match x {
                        Value::Tuple(kv) if kv.len() == 2 => {
                            out.insert(kv[0].clone(), kv[1].clone());
                        }
                        _ => return Err(bad()),
                    }
                }
                Ok(Value::Map(out))
            }
            "keys" => {
                arity(1)?;
                Ok(Value::Set(map!(0).keys().cloned().collect()))
            }
            "get" => {
                arity(2)?;
                map!(0).get(v!(1)).cloned().ok_or_else(|| {
                    self.runtime(codes::MISSING_KEY, "Called 'get' with a non-existing key", span)
                })
            }
            "getOrElse" => {
                arity(3)?;
                let default = v!(2);
                Ok(map!(0).get(v!(1)).cloned().unwrap_or_else(|| default.clone()))
            }
            "put" => {
                arity(3)?;
                let mut m = map!(0).clone();
                m.insert(v!(1).clone(), v!(2).clone());
                Ok(Value::Map(m))
            }
            "set" => {
                arity(3)?;
                let mut m = map!(0).clone();
                if !m.contains_key(v!(1)) {
                    return Err(self.runtime(codes::SET_MISSING_KEY, "Called 'set' with a non-existing key", span));
                }
                m.insert(v!(1).clone(), v!(2).clone());
                Ok(Value::Map(m))
            }
            "setBy" => {
                arity(3)?;
                let f = f!(2);
                let mut m = map!(0).clone();
                let Some(old) = m.get(v!(1)).cloned() else {
                    return Err(self.runtime(codes::SET_MISSING_KEY, "Called 'setBy' with a non-existing key", span));
                };
                let new = self.call(&f, vec![old], span, cx)?;
                m.insert(v!(1).clone(), new);
                Ok(Value::Map(m))
            }
            "mapRemove" => {
                arity(2)?;
                let mut m = map!(0).clone();
                m.remove(v!(1));
                Ok(Value::Map(m))
            }
            "append" => {
                arity(2)?;
                let mut l = list!(0).clone();
                l.push(v!(1).clone());
                Ok(Value::List(l))
            }
            "concat" => {
                arity(2)?;
                let mut l = list!(0).clone();
                l.extend(list!(1).iter().cloned());
                Ok(Value::List(l))
            }
            "head" => {
                arity(1)?;
                list!(0).first().cloned().ok_or_else(|| {
                    self.runtime(codes::EMPTY_LIST, "Called 'head' on an empty list", span)
                })
            }
            "tail" => {
                arity(1)?;
                let l = list!(0);
                if l.is_empty() {
                    return Err(self.runtime(codes::EMPTY_LIST, "Called 'tail' on an empty list", span));
                }
                Ok(Value::List(l[1..].to_vec()))
            }
            "length" => {
                arity(1)?;
                Ok(Value::int(list!(0).len() as u64))
            }
            "nth" => {
                arity(2)?;
                self.nth(v!(0), v!(1), span)
            }
            "indices" => {
                arity(1)?;
                Ok(Value::Set((0..list!(0).len() as u64).map(Value::int).collect()))
            }
            "replaceAt" => {
                arity(3)?;
                let mut l = list!(0).clone();
                let i = int!(1);
                match i.to_usize().filter(|i| *i < l.len()) {
                    Some(i) => {
                        l[i] = v!(2).clone();
                        Ok(Value::List(l))
                    }
                    None => Err(self.runtime(codes::INDEX_OUT_OF_RANGE, format!("Out of bounds, replaceAt({i})"), span)),
                }
            }
            "slice" => {
                arity(3)?;
                let l = list!(0);
                let (s, e) = (int!(1), int!(2));
                match (s.to_usize(), e.to_usize()) {
                    (Some(s), Some(e)) if s <= e && e <= l.len() => Ok(Value::List(l[s..e].to_vec())),
                    _ => Err(self.runtime(codes::SLICE, format!("slice({s}, {e}) is out of bounds"), span)),
                }
            }
            "select" => {
                arity(2)?;
                let f = f!(1);
                let mut out = Vec::new();
                for x in list!(0) {
                    if test(&f, x, cx)? {
                        out.push(x.clone());
                    }
                }
                Ok(Value::List(out))
            }
            _ => Err(self.internal(format!("operator '{op}' not found"), span)),
        }
    }
}

/// Parses `text` as a loose expression, reporting a parse diagnostic on failure.
pub fn parse_loose_expr(text: &str, sources: &mut SourceMap, id: SourceId, name: &str) -> Result<Expr, Diagnostic> {
    sources.insert(id, Arc::new(SourceFile::new(name, text)));
    parse_expr(id, text).map_err(|e| Diagnostic::error(codes::PARSE, e.message).at(e.span, sources))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::types::typecheck;

    fn program(src: &str) -> Program {
        let p = Program::parse("m.qnt", src).unwrap();
        let d = typecheck(&p).diagnostics;
        assert!(d.is_empty(), "{}", crate::diag::render_all(&d));
        p
    }

    fn eval_src(body: &str) -> Result<Value, Diagnostic> {
        let p = Program::parse(
            "m.qnt",
            &format!("module m {{ import cw_types.* from \"./lib/cw_types\"\n pure val main = {body} }}"),
        )
        .unwrap();
        Evaluator::new(&p).eval_pure("main", &[])
    }

    #[test]
    fn identity() {
        let p = program("module m { pure def id(x: int): int = x }");
        assert_eq!(Evaluator::new(&p).eval_pure("id", &[Value::int(7)]).unwrap(), Value::int(7));
    }

    #[test]
    fn missing_key() {
        let d = eval_src("Map(1 -> 2).get(3)").unwrap_err();
        assert_eq!(d.code, "QNT507");
        assert_eq!(d.message, "Called 'get' with a non-existing key");
        assert_eq!(eval_src("getOrElse(Map(1 -> 2), 3, 0)").unwrap(), Value::int(0));
    }

    #[test]
    fn arithmetic_and_errors() {
        assert_eq!(eval_src("-7 / 2").unwrap(), Value::int(-3));
        assert_eq!(eval_src("-7 % 2").unwrap(), Value::int(-1));
        assert_eq!(eval_src("2 ^ 10").unwrap(), Value::int(1024));
        assert_eq!(eval_src("1 / 0").unwrap_err().code, "QNT503");
        assert_eq!(eval_src("[1, 2][5]").unwrap_err().code, "QNT501");
        assert_eq!(eval_src("List().head()").unwrap_err().code, "QNT502");
        assert_eq!(eval_src("2 ^ (0 - 1)").unwrap_err().code, "QNT504");
    }

    #[test]
    fn collections() {
        assert_eq!(eval_src("1.to(4).filter(x => x % 2 == 0).fold(0, (a, b) => a + b)").unwrap(), Value::int(6));
        assert_eq!(eval_src("[1, 2, 3].foldr(0, (x, acc) => x - acc)").unwrap(), Value::int(2));
        assert_eq!(eval_src("Set(1, 2).mapBy(x => x * 10).get(2)").unwrap(), Value::int(20));
        assert_eq!(eval_src("range(0, 3).select(x => x > 0).length()").unwrap(), Value::int(2));
        assert_eq!(eval_src("{ val f = (x) => x + 1\n f(f(1)) }").unwrap(), Value::int(3));
        assert_eq!(eval_src("{ pure def g(x) = x * 2\n [1, 2].foldl(0, (a, b) => a + g(b)) }").unwrap(), Value::int(6));
    }

    #[test]
    fn library_response_helpers() {
        let v = eval_src("Response_new.add_attribute(\"action\", FromStr(\"deposit\"))").unwrap();
        assert_eq!(v.to_string(), "{ attributes: [{ key: \"action\", value: FromStr(\"deposit\") }], messages: [] }");
        let v = eval_src(
            "must_pay({ sender: \"a\", funds: [{ denom: \"uawesome\", amount: 5 }] }, \"uawesome\")",
        )
        .unwrap();
        assert_eq!(v, Value::variant("Ok", Value::int(5)));
        let v = eval_src(
            "bank_transfer(Map(\"a\" -> Map(\"x\" -> 10)), \"a\", \"b\", \"x\", 4).get(\"b\").get(\"x\")",
        )
        .unwrap();
        assert_eq!(v, Value::int(4));
    }

    #[test]
    fn runtime_excerpt_points_at_call() {
        let src = "module m {\n  pure def f(m: str -> int): int = {\n    val user_balance = m.get(\"x\")\n    user_balance\n  }\n}";
        let p = program(src);
        let d = Evaluator::new(&p)
            .eval_pure("f", &[Value::Map(BTreeMap::new())])
            .unwrap_err();
        let text = d.to_string();
        assert!(text.starts_with("runtime error: error: [QNT507] Called 'get' with a non-existing key"));
        assert!(text.contains("\n val user_balance = m.get(\"x\")\n                    ^^^^^^^^^^"), "{text}");
    }

    #[test]
    fn actions_with_choices() {
        let p = program(
            "module m {\n var x: int\n action init = x' = 0\n action inc = { nondet d = Set(1, 2).oneOf()\n x' = x + d }\n action reset = x' = 0\n action step = any { inc, reset }\n}",
        );
        let ev = Evaluator::new(&p);
        let t = ev.run_action("init", &[], &BTreeMap::new(), &mut FirstChooser).unwrap().unwrap();
        assert_eq!(t.next["x"], Value::int(0));
        let t = ev.run_action("step", &[], &t.next, &mut FirstChooser).unwrap().unwrap();
        assert_eq!(t.next["x"], Value::int(1));
        assert_eq!(t.picks["d"], Value::int(1));
        assert_eq!(t.taken, vec!["inc".to_string()]);
    }
}
