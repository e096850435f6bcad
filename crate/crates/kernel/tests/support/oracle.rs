//! Reference interpreter for a small typed expression language, plus a random
//! generator and a renderer to kernel syntax. Used as the differential oracle
//! for the kernel evaluator.

#![allow(dead_code)]

use std::collections::BTreeMap;

use rand::Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Ty {
    Int,
    Bool,
    IntList,
    IntMap,
}

#[derive(Debug, Clone)]
pub enum E {
    Int(i64),
    Bool(bool),
    Var(String),
    Arith(char, Box<E>, Box<E>),
    Neg(Box<E>),
    Cmp(&'static str, Box<E>, Box<E>),
    Logic(&'static str, Box<E>, Box<E>),
    Not(Box<E>),
    If(Box<E>, Box<E>, Box<E>),
    Let(String, Box<E>, Box<E>),
    List(Vec<E>),
    Nth(Box<E>, Box<E>),
    Length(Box<E>),
    Append(Box<E>, Box<E>),
    MapLit(Vec<(i64, E)>),
    Get(Box<E>, Box<E>),
    GetOrElse(Box<E>, Box<E>, Box<E>),
    Put(Box<E>, Box<E>, Box<E>),
    Field(Box<E>, Box<E>, bool),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum V {
    Int(i128),
    Bool(bool),
    List(Vec<V>),
    Map(BTreeMap<i128, V>),
}

/// Error codes the kernel is expected to report for each failure.
pub const DIV_ZERO: &str = "QNT503";
pub const OUT_OF_RANGE: &str = "QNT501";
pub const MISSING_KEY: &str = "QNT507";
/// Not a kernel error: the oracle's fixed-width integers overflowed, skip the case.
pub const OVERFLOW: &str = "overflow";

pub type R = Result<V, &'static str>;

pub fn eval(e: &E, env: &[(String, V)]) -> R {
    let int = |e: &E| -> Result<i128, &'static str> {
        match eval(e, env)? {
            V::Int(n) => Ok(n),
            other => panic!("oracle: expected int, got {other:?}"),
        }
    };
    let boolean = |e: &E| -> Result<bool, &'static str> {
        match eval(e, env)? {
            V::Bool(b) => Ok(b),
            other => panic!("oracle: expected bool, got {other:?}"),
        }
    };
    let list = |e: &E| -> Result<Vec<V>, &'static str> {
        match eval(e, env)? {
            V::List(l) => Ok(l),
            other => panic!("oracle: expected list, got {other:?}"),
        }
    };
    let map = |e: &E| -> Result<BTreeMap<i128, V>, &'static str> {
        match eval(e, env)? {
            V::Map(m) => Ok(m),
            other => panic!("oracle: expected map, got {other:?}"),
        }
    };
    Ok(match e {
        E::Int(n) => V::Int(*n as i128),
        E::Bool(b) => V::Bool(*b),
        E::Var(x) => env
            .iter()
            .rev()
            .find(|(n, _)| n == x)
            .map(|(_, v)| v.clone())
            .expect("oracle: unbound variable"),
        E::Arith(op, a, b) => {
            let (x, y) = (int(a)?, int(b)?);
            V::Int(match op {
                '+' => x.checked_add(y).ok_or(OVERFLOW)?,
                '-' => x.checked_sub(y).ok_or(OVERFLOW)?,
                '*' => x.checked_mul(y).ok_or(OVERFLOW)?,
                '/' | '%' => {
                    if y == 0 {
                        return Err(DIV_ZERO);
                    }
                    // Truncating division, remainder takes the dividend's sign.
                    let q = x.abs() / y.abs();
                    let q = if (x < 0) != (y < 0) { -q } else { q };
                    if *op == '/' {
                        q
                    } else {
                        x - q.checked_mul(y).ok_or(OVERFLOW)?
                    }
                }
                _ => unreachable!(),
            })
        }
        E::Neg(a) => V::Int(-int(a)?),
        E::Cmp(op, a, b) => {
            if *op == "==" || *op == "!=" {
                let (x, y) = (eval(a, env)?, eval(b, env)?);
                V::Bool((x == y) == (*op == "=="))
            } else {
                let (x, y) = (int(a)?, int(b)?);
                V::Bool(match *op {
                    "<" => x < y,
                    "<=" => x <= y,
                    ">" => x > y,
                    ">=" => x >= y,
                    _ => unreachable!(),
                })
            }
        }
        E::Logic(op, a, b) => {
            let x = boolean(a)?;
            V::Bool(match *op {
                "and" => x && boolean(b)?,
                "or" => x || boolean(b)?,
                "implies" => !x || boolean(b)?,
                _ => unreachable!(),
            })
        }
        E::Not(a) => V::Bool(!boolean(a)?),
        E::If(c, a, b) => {
            if boolean(c)? {
                eval(a, env)?
            } else {
                eval(b, env)?
            }
        }
        E::Let(x, v, body) => {
            let v = eval(v, env)?;
            let mut env2 = env.to_vec();
            env2.push((x.clone(), v));
            eval(body, &env2)?
        }
        E::List(items) => V::List(items.iter().map(|i| eval(i, env)).collect::<Result<_, _>>()?),
        E::Nth(l, i) => {
            let l = list(l)?;
            let i = int(i)?;
            if i < 0 || i as usize >= l.len() {
                return Err(OUT_OF_RANGE);
            }
            l[i as usize].clone()
        }
        E::Length(l) => V::Int(list(l)?.len() as i128),
        E::Append(l, x) => {
            let mut l = list(l)?;
            l.push(eval(x, env)?);
            V::List(l)
        }
        E::MapLit(entries) => {
            let mut m = BTreeMap::new();
            for (k, v) in entries {
                m.insert(*k as i128, eval(v, env)?);
            }
            V::Map(m)
        }
        E::Get(m, k) => {
            let m = map(m)?;
            let k = int(k)?;
            m.get(&k).cloned().ok_or(MISSING_KEY)?
        }
        E::GetOrElse(m, k, d) => {
            let m = map(m)?;
            let k = int(k)?;
            let d = eval(d, env)?;
            m.get(&k).cloned().unwrap_or(d)
        }
        E::Put(m, k, v) => {
            let mut m = map(m)?;
            let k = int(k)?;
            let v = eval(v, env)?;
            m.insert(k, v);
            V::Map(m)
        }
        E::Field(a, b, first) => {
            let a = eval(a, env)?;
            let b = eval(b, env)?;
            if *first {
                a
            } else {
                b
            }
        }
    })
}

/// Kernel source text for `e`, fully parenthesized.
pub fn render(e: &E) -> String {
    match e {
        E::Int(n) if *n < 0 => format!("(-{})", -n),
        E::Int(n) => n.to_string(),
        E::Bool(b) => b.to_string(),
        E::Var(x) => x.clone(),
        E::Arith(op, a, b) => format!("({} {} {})", render(a), op, render(b)),
        E::Neg(a) => format!("(-{})", render(a)),
        E::Cmp(op, a, b) | E::Logic(op, a, b) => format!("({} {} {})", render(a), op, render(b)),
        E::Not(a) => format!("not({})", render(a)),
        E::If(c, a, b) => format!("(if ({}) {} else {})", render(c), render(a), render(b)),
        E::Let(x, v, body) => format!("{{\n  val {} = {}\n  {}\n}}", x, render(v), render(body)),
        E::List(items) => format!("[{}]", items.iter().map(render).collect::<Vec<_>>().join(", ")),
        E::Nth(l, i) => format!("{}.nth({})", render(l), render(i)),
        E::Length(l) => format!("{}.length()", render(l)),
        E::Append(l, x) => format!("{}.append({})", render(l), render(x)),
        E::MapLit(entries) => format!(
            "Map({})",
            entries
                .iter()
                .map(|(k, v)| format!("{} -> {}", render(&E::Int(*k)), render(v)))
                .collect::<Vec<_>>()
                .join(", ")
        ),
        E::Get(m, k) => format!("{}.get({})", render(m), render(k)),
        E::GetOrElse(m, k, d) => format!("{}.getOrElse({}, {})", render(m), render(k), render(d)),
        E::Put(m, k, v) => format!("{}.put({}, {})", render(m), render(k), render(v)),
        E::Field(a, b, first) => format!(
            "{{ l: {}, r: {} }}.{}",
            render(a),
            render(b),
            if *first { "l" } else { "r" }
        ),
    }
}

pub struct Gen<'r, R: Rng> {
    pub rng: &'r mut R,
    scope: Vec<(String, Ty)>,
    fresh: usize,
}

impl<'r, R: Rng> Gen<'r, R> {
    pub fn new(rng: &'r mut R) -> Self {
        Gen {
            rng,
            scope: Vec::new(),
            fresh: 0,
        }
    }

    pub fn any(&mut self, depth: u32) -> (E, Ty) {
        let ty = match self.rng.gen_range(0..6) {
            0 | 1 | 2 => Ty::Int,
            3 => Ty::Bool,
            4 => Ty::IntList,
            _ => Ty::IntMap,
        };
        (self.gen(ty, depth), ty)
    }

    fn small(&mut self) -> i64 {
        self.rng.gen_range(-6..=12)
    }

    fn var_of(&mut self, ty: Ty) -> Option<E> {
        let candidates: Vec<&String> = self.scope.iter().filter(|(_, t)| *t == ty).map(|(n, _)| n).collect();
        if candidates.is_empty() {
            None
        } else {
            let i = self.rng.gen_range(0..candidates.len());
            Some(E::Var(candidates[i].clone()))
        }
    }

    fn leaf(&mut self, ty: Ty) -> E {
        if self.rng.gen_bool(0.3) {
            if let Some(v) = self.var_of(ty) {
                return v;
            }
        }
        match ty {
            Ty::Int => E::Int(self.small()),
            Ty::Bool => E::Bool(self.rng.gen()),
            Ty::IntList => {
                let n = self.rng.gen_range(0..4);
                E::List((0..n).map(|_| E::Int(self.small())).collect())
            }
            Ty::IntMap => {
                let n = self.rng.gen_range(1..4);
                E::MapLit((0..n).map(|i| (i as i64 * 2, E::Int(self.small()))).collect())
            }
        }
    }

    fn b(&mut self, ty: Ty, depth: u32) -> Box<E> {
        Box::new(self.gen(ty, depth))
    }

    pub fn gen(&mut self, ty: Ty, depth: u32) -> E {
        if depth == 0 || self.rng.gen_bool(0.2) {
            return self.leaf(ty);
        }
        let d = depth - 1;
        // Shared constructs for every type.
        match self.rng.gen_range(0..10) {
            0 => return E::If(self.b(Ty::Bool, d), self.b(ty, d), self.b(ty, d)),
            1 => {
                let (v, vty) = self.any(d);
                let name = format!("v{}", self.fresh);
                self.fresh += 1;
                self.scope.push((name.clone(), vty));
                let body = self.gen(ty, d);
                self.scope.pop();
                return E::Let(name, Box::new(v), Box::new(body));
            }
            2 => {
                let first = self.rng.gen();
                let (a, b) = if first {
                    let other = self.any(d).0;
                    (self.gen(ty, d), other)
                } else {
                    (self.any(d).0, self.gen(ty, d))
                };
                return E::Field(Box::new(a), Box::new(b), first);
            }
            _ => {}
        }
        match ty {
            Ty::Int => match self.rng.gen_range(0..9) {
                0..=3 => {
                    let op = ['+', '-', '*', '/', '%'][self.rng.gen_range(0..5)];
                    E::Arith(op, self.b(Ty::Int, d), self.b(Ty::Int, d))
                }
                4 => E::Neg(self.b(Ty::Int, d)),
                5 => E::Nth(self.b(Ty::IntList, d), self.b(Ty::Int, d)),
                6 => E::Length(self.b(Ty::IntList, d)),
                7 => E::Get(self.b(Ty::IntMap, d), self.b(Ty::Int, d)),
                _ => E::GetOrElse(self.b(Ty::IntMap, d), self.b(Ty::Int, d), self.b(Ty::Int, d)),
            },
            Ty::Bool => match self.rng.gen_range(0..4) {
                0 => {
                    let op = ["<", "<=", ">", ">=", "==", "!="][self.rng.gen_range(0..6)];
                    E::Cmp(op, self.b(Ty::Int, d), self.b(Ty::Int, d))
                }
                1 => {
                    let t = [Ty::Int, Ty::Bool, Ty::IntList, Ty::IntMap][self.rng.gen_range(0..4)];
                    let op = ["==", "!="][self.rng.gen_range(0..2)];
                    E::Cmp(op, self.b(t, d), self.b(t, d))
                }
                2 => {
                    let op = ["and", "or", "implies"][self.rng.gen_range(0..3)];
                    E::Logic(op, self.b(Ty::Bool, d), self.b(Ty::Bool, d))
                }
                _ => E::Not(self.b(Ty::Bool, d)),
            },
            Ty::IntList => match self.rng.gen_range(0..2) {
                0 => {
                    let n = self.rng.gen_range(1..4);
                    E::List((0..n).map(|_| self.gen(Ty::Int, d)).collect())
                }
                _ => E::Append(self.b(Ty::IntList, d), self.b(Ty::Int, d)),
            },
            Ty::IntMap => match self.rng.gen_range(0..2) {
                0 => {
                    let n = self.rng.gen_range(1..4);
                    E::MapLit((0..n).map(|i| (i as i64, self.gen(Ty::Int, d))).collect())
                }
                _ => E::Put(self.b(Ty::IntMap, d), self.b(Ty::Int, d), self.b(Ty::Int, d)),
            },
        }
    }
}

/// Outcome of comparing the kernel with the oracle on generated expressions.
#[derive(Debug, Default)]
pub struct DiffReport {
    pub cases: usize,
    pub errors_agreed: usize,
    pub mismatches: Vec<String>,
}

fn to_oracle(v: &quintsynth_kernel::Value) -> Option<V> {
    use num_traits::ToPrimitive;
    use quintsynth_kernel::Value as K;
    Some(match v {
        K::Int(n) => V::Int(n.to_i128()?),
        K::Bool(b) => V::Bool(*b),
        K::List(items) => V::List(items.iter().map(to_oracle).collect::<Option<_>>()?),
        K::Map(m) => {
            let mut out = BTreeMap::new();
            for (k, v) in m {
                let K::Int(k) = k else { return None };
                out.insert(k.to_i128()?, to_oracle(v)?);
            }
            V::Map(out)
        }
        _ => return None,
    })
}

/// Evaluates `cases` generated expressions with both interpreters.
pub fn run_differential(seed: u64, cases: usize) -> DiffReport {
    use quintsynth_kernel::{analyze, Evaluator};
    use rand::SeedableRng;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let mut report = DiffReport::default();
    while report.cases < cases {
        let depth = rng.gen_range(1..=5);
        let (e, _) = Gen::new(&mut rng).any(depth);
        let expected = eval(&e, &[]);
        if expected == Err(OVERFLOW) {
            continue;
        }
        report.cases += 1;
        let text = format!("module m {{\n  pure val main = {}\n}}", render(&e));
        let (program, diags) = analyze("m.qnt", &text);
        if !diags.is_empty() {
            report.mismatches.push(format!(
                "{text}\nrejected: {}",
                quintsynth_kernel::diag::render_all(&diags)
            ));
            continue;
        }
        let program = program.expect("parsed");
        let actual = Evaluator::new(&program).eval_pure("main", &[]);
        match (&expected, &actual) {
            (Ok(x), Ok(y)) if to_oracle(y).as_ref() == Some(x) => {}
            (Err(code), Err(d)) if *code == d.code => report.errors_agreed += 1,
            _ => report.mismatches.push(format!(
                "{text}\noracle: {expected:?}\nkernel: {:?}",
                actual.map(|v| v.to_string()).map_err(|d| d.to_string())
            )),
        }
    }
    report
}
