use std::fmt::Write;

use super::ast::*;

const ATOM: u8 = 100;
const INDENT: &str = "  ";

pub fn print_module(m: &Module) -> String {
    let mut out = String::new();
    match &m.name {
        Some(name) => {
            let _ = writeln!(out, "module {name} {{");
            for d in &m.decls {
                let text = print_decl(d);
                for line in text.lines() {
                    if line.is_empty() {
                        out.push('\n');
                    } else {
                        let _ = writeln!(out, "{INDENT}{line}");
                    }
                }
                out.push('\n');
            }
            if !m.decls.is_empty() {
                out.pop();
            }
            out.push_str("}\n");
        }
        None => {
            for d in &m.decls {
                out.push_str(&print_decl(d));
                out.push_str("\n\n");
            }
        }
    }
    out
}

pub fn print_decl(d: &Decl) -> String {
    match d {
        Decl::Import(i) => match &i.from {
            Some(from) => format!("import {}.* from {}", i.module, quote(from)),
            None => format!("import {}.*", i.module),
        },
        Decl::Type(t) => {
            let params = if t.params.is_empty() {
                String::new()
            } else {
                format!("[{}]", t.params.join(", "))
            };
            match &t.body {
                TypeDefBody::Alias(ty) => format!("type {}{} = {}", t.name, params, print_type(ty)),
                TypeDefBody::Sum(vs) => {
                    let mut s = format!("type {}{} =", t.name, params);
                    for v in vs {
                        s.push_str("\n  | ");
                        s.push_str(&v.name);
                        if let Some(p) = &v.payload {
                            let _ = write!(s, "({})", print_type(p));
                        }
                    }
                    s
                }
            }
        }
        Decl::Var(v) => format!("var {}: {}", v.name, print_type(&v.ty)),
        Decl::Const(c) => format!("const {}: {}", c.name, print_type(&c.ty)),
        Decl::Op(op) => print_op(op),
    }
}

pub fn print_op(op: &OpDef) -> String {
    let mut s = format!("{} {}", op.qualifier.keyword(), op.name);
    if let Some(params) = &op.params {
        s.push_str(&print_params(params));
    }
    if let Some(ret) = &op.ret {
        let _ = write!(s, ": {}", print_type(ret));
    }
    s.push_str(" = ");
    s.push_str(&print_expr_at(&op.body, 0));
    s
}

fn print_params(params: &[Param]) -> String {
    let items: Vec<String> = params
        .iter()
        .map(|p| match &p.ty {
            Some(t) => format!("{}: {}", p.name, print_type(t)),
            None => p.name.clone(),
        })
        .collect();
    format!("({})", items.join(", "))
}

pub fn print_type(t: &TypeExpr) -> String {
    type_at(t, 0)
}

// Contexts: 0 = anywhere, 1 = left of `->` or operand of `=>`, 2 = atom.
fn type_at(t: &TypeExpr, ctx: u8) -> String {
    match t {
        TypeExpr::Int => "int".into(),
        TypeExpr::Bool => "bool".into(),
        TypeExpr::Str => "str".into(),
        TypeExpr::Var(v) => v.clone(),
        TypeExpr::Named { name, args } => {
            if args.is_empty() {
                name.clone()
            } else {
                let a: Vec<String> = args.iter().map(print_type).collect();
                format!("{}[{}]", name, a.join(", "))
            }
        }
        TypeExpr::Set(t) => format!("Set[{}]", print_type(t)),
        TypeExpr::List(t) => format!("List[{}]", print_type(t)),
        TypeExpr::Map(k, v) => {
            let s = format!("{} -> {}", type_at(k, 1), type_at(v, 0));
            if ctx >= 1 {
                format!("({s})")
            } else {
                s
            }
        }
        TypeExpr::Tuple(ts) => {
            let a: Vec<String> = ts.iter().map(print_type).collect();
            format!("({})", a.join(", "))
        }
        TypeExpr::Record(fs) => {
            if fs.is_empty() {
                return "{}".into();
            }
            let a: Vec<String> = fs
                .iter()
                .map(|(n, t)| format!("{}: {}", n, print_type(t)))
                .collect();
            format!("{{ {} }}", a.join(", "))
        }
        TypeExpr::Fun(ps, r) => {
            let a: Vec<String> = ps.iter().map(print_type).collect();
            let s = format!("({}) => {}", a.join(", "), print_type(r));
            if ctx >= 1 {
                format!("({s})")
            } else {
                s
            }
        }
    }
}

pub fn print_expr(e: &Expr) -> String {
    print_expr_at(e, 0)
}

fn prec(e: &Expr) -> u8 {
    match &e.kind {
        ExprKind::Binary { op, .. } => op.precedence(),
        ExprKind::Neg(_) => UNARY_PREC,
        ExprKind::Lambda { .. } | ExprKind::If { .. } | ExprKind::Assign { .. } => 0,
        _ => ATOM,
    }
}

fn pad(indent: usize) -> String {
    INDENT.repeat(indent)
}

fn operand(e: &Expr, min: u8, indent: usize) -> String {
    let s = print_expr_at(e, indent);
    if prec(e) < min {
        format!("({s})")
    } else {
        s
    }
}

fn print_expr_at(e: &Expr, indent: usize) -> String {
    match &e.kind {
        ExprKind::Int(n) => n.to_string(),
        ExprKind::Bool(b) => b.to_string(),
        ExprKind::Str(s) => quote(s),
        ExprKind::Name(n) => n.clone(),
        ExprKind::App { op, args, dot } => {
            if *dot && !args.is_empty() {
                let recv = operand(&args[0], ATOM, indent);
                let rest: Vec<String> = args[1..].iter().map(|a| print_expr_at(a, indent)).collect();
                format!("{}.{}({})", recv, op, rest.join(", "))
            } else if op == "Map" {
                let all: Vec<String> = args
                    .iter()
                    .map(|a| match &a.kind {
                        ExprKind::Tuple(kv) if kv.len() == 2 => format!(
                            "{} -> {}",
                            operand(&kv[0], ARROW_PREC + 1, indent),
                            operand(&kv[1], ARROW_PREC + 1, indent)
                        ),
                        _ => print_expr_at(a, indent),
                    })
                    .collect();
                format!("{}({})", op, all.join(", "))
            } else {
                let all: Vec<String> = args.iter().map(|a| print_expr_at(a, indent)).collect();
                format!("{}({})", op, all.join(", "))
            }
        }
        ExprKind::Lambda { params, body } => {
            let head = if params.len() == 1 {
                params[0].clone()
            } else {
                format!("({})", params.join(", "))
            };
            format!("{} => {}", head, print_expr_at(body, indent))
        }
        ExprKind::Let { .. } => {
            let mut s = String::from("{\n");
            let mut cur = e;
            while let ExprKind::Let {
                kind,
                name,
                params,
                ty,
                value,
                body,
            } = &cur.kind
            {
                s.push_str(&pad(indent + 1));
                let _ = write!(s, "{} {}", kind.keyword(), name);
                if let Some(ps) = params {
                    s.push_str(&print_params(ps));
                }
                if let Some(t) = ty {
                    let _ = write!(s, ": {}", print_type(t));
                }
                let _ = writeln!(s, " = {}", print_expr_at(value, indent + 1));
                cur = body;
            }
            s.push_str(&pad(indent + 1));
            // A leading minus on its own line would continue the previous value.
            let body = operand(cur, 0, indent + 1);
            if body.starts_with('-') {
                let _ = write!(s, "({body})");
            } else {
                s.push_str(&body);
            }
            s.push('\n');
            s.push_str(&pad(indent));
            s.push('}');
            s
        }
        ExprKind::If { cond, then, els } => format!(
            "if ({}) {} else {}",
            print_expr_at(cond, indent),
            operand(then, 1, indent),
            print_expr_at(els, indent)
        ),
        ExprKind::Match { scrutinee, arms } => {
            let mut s = format!("match {} {{\n", operand(scrutinee, 1, indent));
            for arm in arms {
                let pat = match &arm.pattern {
                    Pattern::Wildcard => "_".to_string(),
                    Pattern::Ctor { name, binder: None } => name.clone(),
                    Pattern::Ctor {
                        name,
                        binder: Some(b),
                    } => format!("{name}({b})"),
                };
                let _ = writeln!(
                    s,
                    "{}| {} => {}",
                    pad(indent + 1),
                    pat,
                    print_expr_at(&arm.body, indent + 1)
                );
            }
            s.push_str(&pad(indent));
            s.push('}');
            s
        }
        ExprKind::Record(fields) => {
            if fields.is_empty() {
                return "{}".into();
            }
            format!("{{ {} }}", fields_text(fields, indent))
        }
        ExprKind::RecordUpdate { base, fields } => {
            if fields.is_empty() {
                format!("{{ ...{} }}", print_expr_at(base, indent))
            } else {
                format!(
                    "{{ ...{}, {} }}",
                    print_expr_at(base, indent),
                    fields_text(fields, indent)
                )
            }
        }
        ExprKind::Tuple(items) => {
            let a: Vec<String> = items.iter().map(|i| print_expr_at(i, indent)).collect();
            if a.len() == 1 {
                format!("({},)", a[0])
            } else {
                format!("({})", a.join(", "))
            }
        }
        ExprKind::List(items) => {
            let a: Vec<String> = items.iter().map(|i| print_expr_at(i, indent)).collect();
            format!("[{}]", a.join(", "))
        }
        ExprKind::Field { base, name } => format!("{}.{}", operand(base, ATOM, indent), name),
        ExprKind::Index { base, index } => format!(
            "{}[{}]",
            operand(base, ATOM, indent),
            print_expr_at(index, indent)
        ),
        ExprKind::Neg(inner) => {
            let s = operand(inner, UNARY_PREC, indent);
            if s.starts_with('-') {
                format!("- {s}")
            } else {
                format!("-{s}")
            }
        }
        ExprKind::Binary { op, lhs, rhs } => {
            let p = op.precedence();
            let (lmin, rmin) = if op.right_assoc() { (p + 1, p) } else { (p, p + 1) };
            format!(
                "{} {} {}",
                operand(lhs, lmin, indent),
                op.symbol(),
                operand(rhs, rmin, indent)
            )
        }
        ExprKind::Assign { name, value } => {
            format!("{}' = {}", name, operand(value, 1, indent))
        }
        ExprKind::Block { kind, items } => {
            if items.is_empty() {
                return format!("{} {{}}", kind.keyword());
            }
            let mut s = format!("{} {{\n", kind.keyword());
            for item in items {
                let _ = writeln!(s, "{}{},", pad(indent + 1), print_expr_at(item, indent + 1));
            }
            s.push_str(&pad(indent));
            s.push('}');
            s
        }
    }
}

fn fields_text(fields: &[(String, Expr)], indent: usize) -> String {
    fields
        .iter()
        .map(|(n, v)| format!("{}: {}", n, print_expr_at(v, indent)))
        .collect::<Vec<_>>()
        .join(", ")
}

pub fn quote(s: &str) -> String {
    let mut out = String::with_capacity(s.len() + 2);
    out.push('"');
    for c in s.chars() {
        match c {
            '"' => out.push_str("\\\""),
            '\\' => out.push_str("\\\\"),
            '\n' => out.push_str("\\n"),
            '\t' => out.push_str("\\t"),
            c => out.push(c),
        }
    }
    out.push('"');
    out
}
