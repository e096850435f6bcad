//! Runtime values, their kernel-syntax rendering and ITF JSON encoding.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use num_bigint::BigInt;
use num_traits::Signed;
use serde_json::{json, Map as JsonMap, Value as Json};

use crate::syntax::{print_expr, Expr, ExprKind};
use crate::types::{Ty, TypeEnv};

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Value {
    Int(BigInt),
    Bool(bool),
    Str(String),
    List(Vec<Value>),
    Set(BTreeSet<Value>),
    Tuple(Vec<Value>),
    Record(BTreeMap<String, Value>),
    Map(BTreeMap<Value, Value>),
    /// A sum-type constructor applied to its payload; nullary constructors carry `()`.
    Variant { tag: String, payload: Box<Value> },
}

impl Value {
    pub fn int(n: impl Into<BigInt>) -> Value {
        Value::Int(n.into())
    }

    pub fn str(s: impl Into<String>) -> Value {
        Value::Str(s.into())
    }

    pub fn unit() -> Value {
        Value::Tuple(Vec::new())
    }

    pub fn variant(tag: &str, payload: Value) -> Value {
        Value::Variant {
            tag: tag.to_string(),
            payload: Box::new(payload),
        }
    }

    pub fn record<I, K>(fields: I) -> Value
    where
        I: IntoIterator<Item = (K, Value)>,
        K: Into<String>,
    {
        Value::Record(fields.into_iter().map(|(k, v)| (k.into(), v)).collect())
    }

    pub fn as_int(&self) -> Option<&BigInt> {
        match self {
            Value::Int(n) => Some(n),
            _ => None,
        }
    }

    pub fn as_bool(&self) -> Option<bool> {
        match self {
            Value::Bool(b) => Some(*b),
            _ => None,
        }
    }

    pub fn field(&self, name: &str) -> Option<&Value> {
        match self {
            Value::Record(fs) => fs.get(name),
            _ => None,
        }
    }

    /// Kernel expression that evaluates to this value.
    pub fn to_expr(&self) -> Expr {
        let k = match self {
            Value::Int(n) if n.is_negative() => {
                ExprKind::Neg(Box::new(Expr::synth(ExprKind::Int(-n.clone()))))
            }
            Value::Int(n) => ExprKind::Int(n.clone()),
            Value::Bool(b) => ExprKind::Bool(*b),
            Value::Str(s) => ExprKind::Str(s.clone()),
            Value::List(items) => ExprKind::List(items.iter().map(Value::to_expr).collect()),
            Value::Set(items) => ExprKind::app("Set", items.iter().map(Value::to_expr).collect()),
            Value::Tuple(items) => ExprKind::Tuple(items.iter().map(Value::to_expr).collect()),
            Value::Record(fs) => {
                ExprKind::Record(fs.iter().map(|(k, v)| (k.clone(), v.to_expr())).collect())
            }
            Value::Map(m) => ExprKind::app(
                "Map",
                m.iter()
                    .map(|(k, v)| Expr::synth(ExprKind::Tuple(vec![k.to_expr(), v.to_expr()])))
                    .collect(),
            ),
            Value::Variant { tag, payload } => match payload.as_ref() {
                Value::Tuple(t) if t.is_empty() => ExprKind::Name(tag.clone()),
                p => ExprKind::app(tag, vec![p.to_expr()]),
            },
        };
        Expr::synth(k)
    }

    // ---- ITF JSON ----

    pub fn to_itf(&self) -> Json {
        match self {
            Value::Int(n) => json!({ "#bigint": n.to_string() }),
            Value::Bool(b) => Json::Bool(*b),
            Value::Str(s) => Json::String(s.clone()),
            Value::List(items) => Json::Array(items.iter().map(Value::to_itf).collect()),
            Value::Set(items) => json!({ "#set": items.iter().map(Value::to_itf).collect::<Vec<_>>() }),
            Value::Tuple(items) => json!({ "#tup": items.iter().map(Value::to_itf).collect::<Vec<_>>() }),
            Value::Record(fs) => {
                let mut m = JsonMap::new();
                for (k, v) in fs {
                    m.insert(k.clone(), v.to_itf());
                }
                Json::Object(m)
            }
            Value::Map(m) => json!({
                "#map": m.iter().map(|(k, v)| json!([k.to_itf(), v.to_itf()])).collect::<Vec<_>>()
            }),
            Value::Variant { tag, payload } => json!({ "tag": tag, "value": payload.to_itf() }),
        }
    }

    /// Decodes ITF JSON guided by the expected type.
    pub fn from_itf(j: &Json, ty: &Ty, env: &TypeEnv) -> Result<Value, String> {
        let bad = || format!("cannot decode {j} as {ty}");
        Ok(match ty {
            Ty::Int => Value::Int(itf_int(j).ok_or_else(bad)?),
            Ty::Bool => Value::Bool(j.as_bool().ok_or_else(bad)?),
            Ty::Str => Value::Str(j.as_str().ok_or_else(bad)?.to_string()),
            Ty::List(t) => Value::List(
                j.as_array()
                    .ok_or_else(bad)?
                    .iter()
                    .map(|x| Value::from_itf(x, t, env))
                    .collect::<Result<_, _>>()?,
            ),
            Ty::Set(t) => Value::Set(
                j.get("#set")
                    .and_then(Json::as_array)
                    .ok_or_else(bad)?
                    .iter()
                    .map(|x| Value::from_itf(x, t, env))
                    .collect::<Result<_, _>>()?,
            ),
            Ty::Tuple(ts) => {
                let items = j.get("#tup").and_then(Json::as_array).ok_or_else(bad)?;
                if items.len() != ts.len() {
                    return Err(bad());
                }
                Value::Tuple(
                    items
                        .iter()
                        .zip(ts)
                        .map(|(x, t)| Value::from_itf(x, t, env))
                        .collect::<Result<_, _>>()?,
                )
            }
            Ty::Record(fs) => {
                let obj = j.as_object().ok_or_else(bad)?;
                if obj.len() != fs.len() {
                    return Err(bad());
                }
                let mut out = BTreeMap::new();
                for (name, t) in fs {
                    let x = obj
                        .get(name)
                        .ok_or_else(|| format!("missing record field '{name}' in {j}"))?;
                    out.insert(name.clone(), Value::from_itf(x, t, env)?);
                }
                Value::Record(out)
            }
            Ty::Map(kt, vt) => {
                let pairs = j.get("#map").and_then(Json::as_array).ok_or_else(bad)?;
                let mut out = BTreeMap::new();
                for p in pairs {
                    let kv = p.as_array().filter(|a| a.len() == 2).ok_or_else(bad)?;
                    out.insert(
                        Value::from_itf(&kv[0], kt, env)?,
                        Value::from_itf(&kv[1], vt, env)?,
                    );
                }
                Value::Map(out)
            }
            Ty::Sum(_, args) => {
                let tag = j.get("tag").and_then(Json::as_str).ok_or_else(bad)?;
                let payload_ty = env
                    .ctor_payload(tag, args)
                    .ok_or_else(|| format!("unknown constructor '{tag}'"))?;
                let payload = match j.get("value") {
                    Some(v) => Value::from_itf(v, &payload_ty, env)?,
                    None => Value::unit(),
                };
                Value::variant(tag, payload)
            }
            Ty::Var(_) | Ty::Param(_) | Ty::Fun(..) => Value::from_itf_untyped(j)?,
        })
    }

    /// Best-effort decoding without type information.
    pub fn from_itf_untyped(j: &Json) -> Result<Value, String> {
        Ok(match j {
            Json::Bool(b) => Value::Bool(*b),
            Json::String(s) => Value::Str(s.clone()),
            Json::Number(_) => Value::Int(itf_int(j).ok_or("non-integer number")?),
            Json::Array(items) => Value::List(
                items
                    .iter()
                    .map(Value::from_itf_untyped)
                    .collect::<Result<_, _>>()?,
            ),
            Json::Object(obj) => {
                if let Some(n) = itf_int(j) {
                    Value::Int(n)
                } else if let Some(items) = obj.get("#set").and_then(Json::as_array) {
                    Value::Set(items.iter().map(Value::from_itf_untyped).collect::<Result<_, _>>()?)
                } else if let Some(items) = obj.get("#tup").and_then(Json::as_array) {
                    Value::Tuple(items.iter().map(Value::from_itf_untyped).collect::<Result<_, _>>()?)
                } else if let Some(pairs) = obj.get("#map").and_then(Json::as_array) {
                    let mut out = BTreeMap::new();
                    for p in pairs {
                        let kv = p.as_array().filter(|a| a.len() == 2).ok_or("bad map entry")?;
                        out.insert(Value::from_itf_untyped(&kv[0])?, Value::from_itf_untyped(&kv[1])?);
                    }
                    Value::Map(out)
                } else if obj.len() == 2 && obj.contains_key("tag") && obj.contains_key("value") {
                    let tag = obj["tag"].as_str().ok_or("variant tag must be a string")?;
                    Value::variant(tag, Value::from_itf_untyped(&obj["value"])?)
                } else {
                    let mut out = BTreeMap::new();
                    for (k, v) in obj {
                        out.insert(k.clone(), Value::from_itf_untyped(v)?);
                    }
                    Value::Record(out)
                }
            }
            Json::Null => return Err("null is not a value".into()),
        })
    }
}

fn itf_int(j: &Json) -> Option<BigInt> {
    match j {
        Json::Object(o) if o.len() == 1 => o.get("#bigint")?.as_str()?.parse().ok(),
        Json::Number(n) => n.as_i64().map(BigInt::from),
        _ => None,
    }
}

impl fmt::Display for Value {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&print_expr(&self.to_expr()))
    }
}

/// Structural equality; record fields and map entries compare independently of order.
pub fn values_equal(a: &Value, b: &Value) -> bool {
    a == b
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> Value {
        let mut m = BTreeMap::new();
        m.insert(Value::str("alice"), Value::record([("amount", Value::int(5))]));
        Value::record([
            ("balances", Value::Map(m)),
            ("ids", Value::List(vec![Value::int(-1), Value::int(2)])),
            ("tags", Value::Set([Value::str("x")].into_iter().collect())),
            ("pair", Value::Tuple(vec![Value::Bool(true), Value::unit()])),
            ("opt", Value::variant("Some", Value::int(1))),
            ("none", Value::variant("None", Value::unit())),
        ])
    }

    #[test]
    fn untyped_itf_roundtrip() {
        let v = sample();
        assert_eq!(Value::from_itf_untyped(&v.to_itf()).unwrap(), v);
    }

    #[test]
    fn display_is_kernel_syntax() {
        let v = Value::record([("a", Value::int(-3)), ("b", Value::variant("None", Value::unit()))]);
        assert_eq!(v.to_string(), "{ a: -3, b: None }");
        let m: BTreeMap<_, _> = [(Value::int(1), Value::str("x"))].into_iter().collect();
        assert_eq!(Value::Map(m).to_string(), "Map(1 -> \"x\")");
    }

    #[test]
    fn equality_ignores_field_order() {
        let a = Value::record([("a", Value::int(1)), ("b", Value::int(2))]);
        let b = Value::record([("b", Value::int(2)), ("a", Value::int(1))]);
        assert!(values_equal(&a, &b));
        assert!(!values_equal(
            &Value::variant("Err", Value::str("x")),
            &Value::variant("Ok", Value::str("x"))
        ));
    }
}
