use crate::diag::{SourceId, Span};

use super::ast::*;
use super::lexer::{lex, Tok, Token};

#[derive(Debug, Clone, PartialEq)]
pub struct ParseError {
    pub message: String,
    pub span: Span,
}

type PResult<T> = Result<T, ParseError>;

const MAX_DEPTH: usize = 400;
const DECL_START: &str =
    "{'}', 'import', 'type', 'var', 'const', 'val', 'def', 'pure', 'action'}";
const PATTERN_BINDER: &str = "{'_', LOW_ID, CAP_ID}";

pub fn parse_module(src: SourceId, text: &str) -> PResult<Module> {
    let mut p = Parser::new(src, text)?;
    let module = p.module()?;
    p.expect_eof()?;
    Ok(module)
}

pub fn parse_expr(src: SourceId, text: &str) -> PResult<Expr> {
    let mut p = Parser::new(src, text)?;
    let e = p.expr()?;
    p.expect_eof()?;
    Ok(e)
}

pub fn parse_type(src: SourceId, text: &str) -> PResult<TypeExpr> {
    let mut p = Parser::new(src, text)?;
    let t = p.type_expr()?;
    p.expect_eof()?;
    Ok(t)
}

/// Parses a sequence of declarations without a module header.
pub fn parse_decls(src: SourceId, text: &str) -> PResult<Vec<Decl>> {
    let mut p = Parser::new(src, text)?;
    let mut decls = Vec::new();
    while p.peek() != &Tok::Eof {
        decls.push(p.decl()?);
    }
    Ok(decls)
}

struct Parser {
    toks: Vec<Token>,
    pos: usize,
    depth: usize,
}

impl Parser {
    fn new(src: SourceId, text: &str) -> PResult<Parser> {
        let toks = lex(src, text).map_err(|e| ParseError {
            message: e.message,
            span: e.span,
        })?;
        Ok(Parser {
            toks,
            pos: 0,
            depth: 0,
        })
    }

    fn peek(&self) -> &Tok {
        &self.toks[self.pos].tok
    }

    fn peek_at(&self, n: usize) -> &Tok {
        let i = (self.pos + n).min(self.toks.len() - 1);
        &self.toks[i].tok
    }

    fn span(&self) -> Span {
        self.toks[self.pos].span
    }

    fn prev_span(&self) -> Span {
        self.toks[self.pos.saturating_sub(1)].span
    }

    fn bump(&mut self) -> Token {
        let t = self.toks[self.pos].clone();
        if self.pos < self.toks.len() - 1 {
            self.pos += 1;
        }
        t
    }

    fn at_word(&self, w: &str) -> bool {
        self.peek().is_word(w)
    }

    fn eat(&mut self, t: &Tok) -> bool {
        if self.peek() == t {
            self.bump();
            true
        } else {
            false
        }
    }

    fn eat_word(&mut self, w: &str) -> bool {
        if self.at_word(w) {
            self.bump();
            true
        } else {
            false
        }
    }

    fn mismatch(&self, expected: &str) -> ParseError {
        ParseError {
            message: format!(
                "mismatched input '{}' expecting {}",
                self.peek().describe(),
                expected
            ),
            span: self.span(),
        }
    }

    fn expect(&mut self, t: Tok) -> PResult<Span> {
        if self.peek() == &t {
            Ok(self.bump().span)
        } else {
            Err(self.mismatch(&format!("'{}'", t.describe())))
        }
    }

    fn expect_word(&mut self, w: &str) -> PResult<Span> {
        if self.at_word(w) {
            Ok(self.bump().span)
        } else {
            Err(self.mismatch(&format!("'{w}'")))
        }
    }

    fn expect_eof(&mut self) -> PResult<()> {
        if self.peek() == &Tok::Eof {
            Ok(())
        } else {
            Err(ParseError {
                message: format!("extraneous input '{}' expecting <EOF>", self.peek().describe()),
                span: self.span(),
            })
        }
    }

    fn ident(&mut self) -> PResult<(String, Span)> {
        match self.peek().clone() {
            Tok::LowId(s) if !is_keyword(&s) => Ok((s, self.bump().span)),
            _ => Err(self.mismatch("LOW_ID")),
        }
    }

    fn any_ident(&mut self) -> PResult<(String, Span)> {
        match self.peek().clone() {
            Tok::LowId(s) | Tok::CapId(s) if !is_keyword(&s) => Ok((s, self.bump().span)),
            _ => Err(self.mismatch("{LOW_ID, CAP_ID}")),
        }
    }

    fn cap_ident(&mut self) -> PResult<(String, Span)> {
        match self.peek().clone() {
            Tok::CapId(s) => Ok((s, self.bump().span)),
            _ => Err(self.mismatch("CAP_ID")),
        }
    }

    /// True when the current token sits on the same line as the previous one.
    fn same_line(&self) -> bool {
        !self.toks[self.pos].newline_before
    }

    fn enter(&mut self) -> PResult<()> {
        self.depth += 1;
        if self.depth > MAX_DEPTH {
            return Err(ParseError {
                message: "expression nesting too deep".into(),
                span: self.span(),
            });
        }
        Ok(())
    }

    fn leave(&mut self) {
        self.depth -= 1;
    }

    // ---- declarations ----

    fn module(&mut self) -> PResult<Module> {
        let start = self.span();
        if self.eat_word("module") {
            let (name, _) = self.any_ident()?;
            self.expect(Tok::LBrace)?;
            let mut decls = Vec::new();
            while self.peek() != &Tok::RBrace {
                if self.peek() == &Tok::Eof {
                    return Err(self.mismatch(DECL_START));
                }
                decls.push(self.decl()?);
            }
            let end = self.expect(Tok::RBrace)?;
            Ok(Module {
                name: Some(name),
                decls,
                span: start.to(end),
            })
        } else {
            let mut decls = Vec::new();
            while self.peek() != &Tok::Eof {
                decls.push(self.decl()?);
            }
            Ok(Module {
                name: None,
                decls,
                span: start.to(self.prev_span()),
            })
        }
    }

    fn decl(&mut self) -> PResult<Decl> {
        let start = self.span();
        let word = match self.peek() {
            Tok::LowId(w) => w.clone(),
            _ => return Err(self.mismatch(DECL_START)),
        };
        match word.as_str() {
            "import" => {
                self.bump();
                let (module, _) = self.any_ident()?;
                self.expect(Tok::Dot)?;
                self.expect(Tok::Star)?;
                let from = if self.eat_word("from") {
                    match self.peek().clone() {
                        Tok::Str(s) => {
                            self.bump();
                            Some(s)
                        }
                        _ => return Err(self.mismatch("STRING")),
                    }
                } else {
                    None
                };
                Ok(Decl::Import(Import {
                    module,
                    from,
                    span: start.to(self.prev_span()),
                }))
            }
            "type" => {
                self.bump();
                let (name, _) = self.cap_ident()?;
                let mut params = Vec::new();
                if self.eat(&Tok::LBracket) {
                    loop {
                        let (p, _) = self.ident()?;
                        params.push(p);
                        if !self.eat(&Tok::Comma) {
                            break;
                        }
                    }
                    self.expect(Tok::RBracket)?;
                }
                self.expect(Tok::Assign)?;
                let is_sum = self.peek() == &Tok::Pipe
                    || (matches!(self.peek(), Tok::CapId(_))
                        && matches!(self.peek_at(1), Tok::LParen | Tok::Pipe));
                let body = if is_sum {
                    self.eat(&Tok::Pipe);
                    let mut variants = Vec::new();
                    loop {
                        let (vname, _) = self.cap_ident()?;
                        let payload = if self.eat(&Tok::LParen) {
                            let t = self.type_expr()?;
                            self.expect(Tok::RParen)?;
                            Some(t)
                        } else {
                            None
                        };
                        variants.push(Variant {
                            name: vname,
                            payload,
                        });
                        if !self.eat(&Tok::Pipe) {
                            break;
                        }
                    }
                    TypeDefBody::Sum(variants)
                } else {
                    TypeDefBody::Alias(self.type_expr()?)
                };
                Ok(Decl::Type(TypeDef {
                    name,
                    params,
                    body,
                    span: start.to(self.prev_span()),
                }))
            }
            "var" | "const" => {
                self.bump();
                let (name, _) = self.any_ident()?;
                self.expect(Tok::Colon)?;
                let ty = self.type_expr()?;
                let span = start.to(self.prev_span());
                Ok(if word == "var" {
                    Decl::Var(VarDecl { name, ty, span })
                } else {
                    Decl::Const(ConstDecl { name, ty, span })
                })
            }
            "pure" | "val" | "def" | "action" => {
                self.bump();
                let qualifier = match word.as_str() {
                    "pure" => {
                        if self.eat_word("val") {
                            Qualifier::PureVal
                        } else if self.eat_word("def") {
                            Qualifier::PureDef
                        } else {
                            return Err(self.mismatch("{'val', 'def'}"));
                        }
                    }
                    "val" => Qualifier::Val,
                    "def" => Qualifier::Def,
                    _ => Qualifier::Action,
                };
                let (name, name_span) = self.any_ident()?;
                let params = if self.peek() == &Tok::LParen {
                    Some(self.params()?)
                } else {
                    None
                };
                let ret = if self.eat(&Tok::Colon) {
                    Some(self.type_expr()?)
                } else {
                    None
                };
                self.expect(Tok::Assign)?;
                let body = self.expr()?;
                Ok(Decl::Op(OpDef {
                    qualifier,
                    name,
                    params,
                    ret,
                    span: start.to(self.prev_span()),
                    name_span,
                    body,
                }))
            }
            _ => Err(self.mismatch(DECL_START)),
        }
    }

    fn params(&mut self) -> PResult<Vec<Param>> {
        self.expect(Tok::LParen)?;
        let mut params = Vec::new();
        while self.peek() != &Tok::RParen {
            let name = if self.eat(&Tok::Underscore) {
                "_".to_string()
            } else {
                self.ident()?.0
            };
            let ty = if self.eat(&Tok::Colon) {
                Some(self.type_expr()?)
            } else {
                None
            };
            params.push(Param { name, ty });
            if !self.eat(&Tok::Comma) {
                break;
            }
        }
        self.expect(Tok::RParen)?;
        Ok(params)
    }

    // ---- types ----

    fn type_expr(&mut self) -> PResult<TypeExpr> {
        self.enter()?;
        let t = self.type_arrow()?;
        let t = if self.eat(&Tok::FatArrow) {
            TypeExpr::Fun(vec![t], Box::new(self.type_expr()?))
        } else {
            t
        };
        self.leave();
        Ok(t)
    }

    fn type_arrow(&mut self) -> PResult<TypeExpr> {
        let k = self.type_atom()?;
        if self.eat(&Tok::Arrow) {
            self.enter()?;
            let v = self.type_arrow()?;
            self.leave();
            Ok(TypeExpr::Map(Box::new(k), Box::new(v)))
        } else {
            Ok(k)
        }
    }

    fn type_atom(&mut self) -> PResult<TypeExpr> {
        match self.peek().clone() {
            Tok::LowId(w) => {
                self.bump();
                Ok(match w.as_str() {
                    "int" => TypeExpr::Int,
                    "bool" => TypeExpr::Bool,
                    "str" => TypeExpr::Str,
                    _ => TypeExpr::Var(w),
                })
            }
            Tok::CapId(name) => {
                self.bump();
                let mut args = Vec::new();
                if self.peek() == &Tok::LBracket && self.same_line() {
                    self.bump();
                    loop {
                        args.push(self.type_expr()?);
                        if !self.eat(&Tok::Comma) {
                            break;
                        }
                    }
                    self.expect(Tok::RBracket)?;
                }
                match (name.as_str(), args.len()) {
                    ("Set", 1) => Ok(TypeExpr::Set(Box::new(args.pop().unwrap()))),
                    ("List", 1) => Ok(TypeExpr::List(Box::new(args.pop().unwrap()))),
                    _ => Ok(TypeExpr::Named { name, args }),
                }
            }
            Tok::LBrace => {
                self.bump();
                let mut fields = Vec::new();
                while self.peek() != &Tok::RBrace {
                    let (f, _) = self.field_name()?;
                    self.expect(Tok::Colon)?;
                    fields.push((f, self.type_expr()?));
                    if !self.eat(&Tok::Comma) {
                        break;
                    }
                }
                self.expect(Tok::RBrace)?;
                Ok(TypeExpr::Record(fields))
            }
            Tok::LParen => {
                self.bump();
                let mut items = Vec::new();
                while self.peek() != &Tok::RParen {
                    items.push(self.type_expr()?);
                    if !self.eat(&Tok::Comma) {
                        break;
                    }
                }
                self.expect(Tok::RParen)?;
                if self.eat(&Tok::FatArrow) {
                    return Ok(TypeExpr::Fun(items, Box::new(self.type_expr()?)));
                }
                if items.len() == 1 {
                    Ok(items.pop().unwrap())
                } else {
                    Ok(TypeExpr::Tuple(items))
                }
            }
            _ => Err(self.mismatch("a type")),
        }
    }

    fn field_name(&mut self) -> PResult<(String, Span)> {
        match self.peek().clone() {
            Tok::LowId(s) | Tok::CapId(s) => Ok((s, self.bump().span)),
            _ => Err(self.mismatch("LOW_ID")),
        }
    }

    // ---- expressions ----

    pub fn expr(&mut self) -> PResult<Expr> {
        self.enter()?;
        let r = if self.at_let() {
            self.let_expr()
        } else {
            self.binary(1)
        };
        self.leave();
        r
    }

    fn at_let(&self) -> bool {
        match self.peek() {
            Tok::LowId(w) => match w.as_str() {
                "val" | "def" | "nondet" => true,
                "pure" => self.peek_at(1).is_word("val") || self.peek_at(1).is_word("def"),
                _ => false,
            },
            _ => false,
        }
    }

    fn let_expr(&mut self) -> PResult<Expr> {
        let start = self.span();
        let kind = match self.bump().tok {
            Tok::LowId(w) => match w.as_str() {
                "val" => LetKind::Val,
                "def" => LetKind::Def,
                "nondet" => LetKind::Nondet,
                _ => {
                    if self.bump().tok.is_word("val") {
                        LetKind::PureVal
                    } else {
                        LetKind::PureDef
                    }
                }
            },
            _ => unreachable!("at_let checked the keyword"),
        };
        let (name, _) = self.ident()?;
        let params = if matches!(kind, LetKind::Def | LetKind::PureDef) && self.peek() == &Tok::LParen
        {
            Some(self.params()?)
        } else {
            None
        };
        let ty = if self.eat(&Tok::Colon) {
            Some(self.type_expr()?)
        } else {
            None
        };
        self.expect(Tok::Assign)?;
        let value = self.expr()?;
        let body = self.expr()?;
        let span = start.to(body.span);
        Ok(Expr::new(
            ExprKind::Let {
                kind,
                name,
                params,
                ty,
                value: Box::new(value),
                body: Box::new(body),
            },
            span,
        ))
    }

    fn binop(&self) -> Option<(Option<BinOp>, u8)> {
        let op = match self.peek() {
            Tok::Plus => BinOp::Add,
            Tok::Minus => BinOp::Sub,
            Tok::Star => BinOp::Mul,
            Tok::Slash => BinOp::Div,
            Tok::Percent => BinOp::Mod,
            Tok::Caret => BinOp::Pow,
            Tok::EqEq => BinOp::Eq,
            Tok::NotEq => BinOp::Neq,
            Tok::Lt => BinOp::Lt,
            Tok::Le => BinOp::Le,
            Tok::Gt => BinOp::Gt,
            Tok::Ge => BinOp::Ge,
            Tok::Arrow => return Some((None, ARROW_PREC)),
            Tok::LowId(w) => match w.as_str() {
                "and" => BinOp::And,
                "or" => BinOp::Or,
                "iff" => BinOp::Iff,
                "implies" => BinOp::Implies,
                _ => return None,
            },
            _ => return None,
        };
        Some((Some(op), op.precedence()))
    }

    fn binary(&mut self, min_prec: u8) -> PResult<Expr> {
        let mut lhs = self.unary()?;
        while let Some((op, prec)) = self.binop() {
            if prec < min_prec {
                break;
            }
            self.bump();
            let right_assoc = op.map(|o| o.right_assoc()).unwrap_or(false);
            let next = if right_assoc { prec } else { prec + 1 };
            self.enter()?;
            let rhs = self.binary(next)?;
            self.leave();
            let span = lhs.span.to(rhs.span);
            lhs = match op {
                Some(op) => Expr::new(
                    ExprKind::Binary {
                        op,
                        lhs: Box::new(lhs),
                        rhs: Box::new(rhs),
                    },
                    span,
                ),
                None => Expr::new(ExprKind::Tuple(vec![lhs, rhs]), span),
            };
        }
        Ok(lhs)
    }

    fn unary(&mut self) -> PResult<Expr> {
        if self.peek() == &Tok::Minus {
            let start = self.bump().span;
            self.enter()?;
            let e = self.unary()?;
            self.leave();
            let span = start.to(e.span);
            return Ok(Expr::new(ExprKind::Neg(Box::new(e)), span));
        }
        self.postfix()
    }

    fn postfix(&mut self) -> PResult<Expr> {
        let mut e = self.primary()?;
        loop {
            match self.peek() {
                Tok::Dot => {
                    self.bump();
                    let (name, name_span) = self.field_name()?;
                    if self.peek() == &Tok::LParen && self.same_line() {
                        let (mut args, end) = self.call_args()?;
                        args.insert(0, e);
                        let span = args[0].span.to(end);
                        e = Expr::new(
                            ExprKind::App {
                                op: name,
                                args,
                                dot: true,
                            },
                            span,
                        );
                    } else {
                        let span = e.span.to(name_span);
                        e = Expr::new(
                            ExprKind::Field {
                                base: Box::new(e),
                                name,
                            },
                            span,
                        );
                    }
                }
                Tok::LBracket if self.same_line() => {
                    self.bump();
                    let index = self.expr()?;
                    let end = self.expect(Tok::RBracket)?;
                    let span = e.span.to(end);
                    e = Expr::new(
                        ExprKind::Index {
                            base: Box::new(e),
                            index: Box::new(index),
                        },
                        span,
                    );
                }
                _ => return Ok(e),
            }
        }
    }

    fn call_args(&mut self) -> PResult<(Vec<Expr>, Span)> {
        self.expect(Tok::LParen)?;
        let mut args = Vec::new();
        while self.peek() != &Tok::RParen {
            args.push(self.expr()?);
            if !self.eat(&Tok::Comma) {
                break;
            }
        }
        let end = self.expect(Tok::RParen)?;
        Ok((args, end))
    }

    /// Index of the token after the `)` matching the `(` at the cursor.
    fn after_matching_paren(&self) -> usize {
        let mut depth = 0usize;
        let mut i = self.pos;
        while i < self.toks.len() {
            match self.toks[i].tok {
                Tok::LParen | Tok::LBracket | Tok::LBrace => depth += 1,
                Tok::RParen | Tok::RBracket | Tok::RBrace => {
                    depth = depth.saturating_sub(1);
                    if depth == 0 {
                        return i + 1;
                    }
                }
                Tok::Eof => return i,
                _ => {}
            }
            i += 1;
        }
        i
    }

    fn lambda_body(&mut self, params: Vec<String>, start: Span) -> PResult<Expr> {
        self.expect(Tok::FatArrow)?;
        let body = self.expr()?;
        let span = start.to(body.span);
        Ok(Expr::new(
            ExprKind::Lambda {
                params,
                body: Box::new(body),
            },
            span,
        ))
    }

    fn primary(&mut self) -> PResult<Expr> {
        let start = self.span();
        match self.peek().clone() {
            Tok::Int(n) => {
                self.bump();
                Ok(Expr::new(ExprKind::Int(n), start))
            }
            Tok::Str(s) => {
                self.bump();
                Ok(Expr::new(ExprKind::Str(s), start))
            }
            Tok::Underscore if self.peek_at(1) == &Tok::FatArrow => {
                self.bump();
                self.lambda_body(vec!["_".into()], start)
            }
            Tok::LowId(w) => self.word(w, start),
            Tok::CapId(name) => {
                self.bump();
                if self.peek() == &Tok::LParen && self.same_line() {
                    let (args, end) = self.call_args()?;
                    Ok(Expr::new(
                        ExprKind::App {
                            op: name,
                            args,
                            dot: false,
                        },
                        start.to(end),
                    ))
                } else {
                    Ok(Expr::new(ExprKind::Name(name), start))
                }
            }
            Tok::LParen => {
                let after = self.after_matching_paren();
                if self.toks.get(after).map(|t| &t.tok) == Some(&Tok::FatArrow) {
                    self.bump();
                    let mut params = Vec::new();
                    while self.peek() != &Tok::RParen {
                        if self.eat(&Tok::Underscore) {
                            params.push("_".to_string());
                        } else {
                            params.push(self.ident()?.0);
                        }
                        if !self.eat(&Tok::Comma) {
                            break;
                        }
                    }
                    self.expect(Tok::RParen)?;
                    return self.lambda_body(params, start);
                }
                self.bump();
                let mut items = Vec::new();
                let mut trailing_comma = false;
                while self.peek() != &Tok::RParen {
                    items.push(self.expr()?);
                    trailing_comma = self.eat(&Tok::Comma);
                    if !trailing_comma {
                        break;
                    }
                }
                let end = self.expect(Tok::RParen)?;
                if items.len() == 1 && !trailing_comma {
                    let mut e = items.pop().unwrap();
                    e.span = start.to(end);
                    Ok(e)
                } else {
                    Ok(Expr::new(ExprKind::Tuple(items), start.to(end)))
                }
            }
            Tok::LBracket => {
                self.bump();
                let mut items = Vec::new();
                while self.peek() != &Tok::RBracket {
                    items.push(self.expr()?);
                    if !self.eat(&Tok::Comma) {
                        break;
                    }
                }
                let end = self.expect(Tok::RBracket)?;
                Ok(Expr::new(ExprKind::List(items), start.to(end)))
            }
            Tok::LBrace => self.brace(start),
            _ => Err(self.mismatch("an expression")),
        }
    }

    fn brace(&mut self, start: Span) -> PResult<Expr> {
        self.bump();
        if self.eat(&Tok::Spread) {
            let base = self.expr()?;
            let mut fields = Vec::new();
            while self.eat(&Tok::Comma) {
                if self.peek() == &Tok::RBrace {
                    break;
                }
                fields.push(self.record_field()?);
            }
            let end = self.expect(Tok::RBrace)?;
            return Ok(Expr::new(
                ExprKind::RecordUpdate {
                    base: Box::new(base),
                    fields,
                },
                start.to(end),
            ));
        }
        let is_record = self.peek() == &Tok::RBrace
            || (matches!(self.peek(), Tok::LowId(_) | Tok::CapId(_))
                && self.peek_at(1) == &Tok::Colon);
        if is_record {
            let mut fields = Vec::new();
            while self.peek() != &Tok::RBrace {
                fields.push(self.record_field()?);
                if !self.eat(&Tok::Comma) {
                    break;
                }
            }
            let end = self.expect(Tok::RBrace)?;
            return Ok(Expr::new(ExprKind::Record(fields), start.to(end)));
        }
        let mut e = self.expr()?;
        let end = self.expect(Tok::RBrace)?;
        e.span = start.to(end);
        Ok(e)
    }

    fn record_field(&mut self) -> PResult<(String, Expr)> {
        let (name, _) = self.field_name()?;
        self.expect(Tok::Colon)?;
        Ok((name, self.expr()?))
    }

    fn word(&mut self, w: String, start: Span) -> PResult<Expr> {
        match w.as_str() {
            "true" | "false" => {
                self.bump();
                Ok(Expr::new(ExprKind::Bool(w == "true"), start))
            }
            "if" => {
                self.bump();
                self.expect(Tok::LParen)?;
                let cond = self.expr()?;
                self.expect(Tok::RParen)?;
                let then = self.expr()?;
                self.expect_word("else")?;
                let els = self.expr()?;
                let span = start.to(els.span);
                Ok(Expr::new(
                    ExprKind::If {
                        cond: Box::new(cond),
                        then: Box::new(then),
                        els: Box::new(els),
                    },
                    span,
                ))
            }
            "match" => {
                self.bump();
                let scrutinee = self.binary(1)?;
                self.expect(Tok::LBrace)?;
                let mut arms = Vec::new();
                let mut first = true;
                loop {
                    if self.peek() == &Tok::RBrace && !first {
                        break;
                    }
                    let has_pipe = self.eat(&Tok::Pipe);
                    if !has_pipe && !first {
                        return Err(self.mismatch("{'|', '}'}"));
                    }
                    first = false;
                    let arm_start = self.span();
                    let pattern = self.pattern()?;
                    self.expect(Tok::FatArrow)?;
                    let body = self.expr()?;
                    let span = arm_start.to(body.span);
                    arms.push(MatchArm {
                        pattern,
                        body,
                        span,
                    });
                }
                let end = self.expect(Tok::RBrace)?;
                Ok(Expr::new(
                    ExprKind::Match {
                        scrutinee: Box::new(scrutinee),
                        arms,
                    },
                    start.to(end),
                ))
            }
            "all" | "any" | "and" | "or" if self.peek_at(1) == &Tok::LBrace => {
                self.bump();
                let kind = match w.as_str() {
                    "all" => BlockKind::All,
                    "any" => BlockKind::Any,
                    "and" => BlockKind::And,
                    _ => BlockKind::Or,
                };
                self.expect(Tok::LBrace)?;
                let mut items = Vec::new();
                while self.peek() != &Tok::RBrace {
                    items.push(self.expr()?);
                    if !self.eat(&Tok::Comma) {
                        break;
                    }
                }
                let end = self.expect(Tok::RBrace)?;
                Ok(Expr::new(ExprKind::Block { kind, items }, start.to(end)))
            }
            _ if is_keyword(&w) => Err(self.mismatch("an expression")),
            _ => {
                self.bump();
                match self.peek() {
                    Tok::FatArrow => self.lambda_body(vec![w], start),
                    Tok::LParen if self.same_line() => {
                        let (args, end) = self.call_args()?;
                        Ok(Expr::new(
                            ExprKind::App {
                                op: w,
                                args,
                                dot: false,
                            },
                            start.to(end),
                        ))
                    }
                    Tok::Prime => {
                        self.bump();
                        self.expect(Tok::Assign)?;
                        let value = self.binary(1)?;
                        let span = start.to(value.span);
                        Ok(Expr::new(
                            ExprKind::Assign {
                                name: w,
                                value: Box::new(value),
                            },
                            span,
                        ))
                    }
                    _ => Ok(Expr::new(ExprKind::Name(w), start)),
                }
            }
        }
    }

    fn pattern(&mut self) -> PResult<Pattern> {
        match self.peek().clone() {
            Tok::Underscore => {
                self.bump();
                Ok(Pattern::Wildcard)
            }
            Tok::CapId(name) => {
                self.bump();
                if !self.eat(&Tok::LParen) {
                    return Ok(Pattern::Ctor { name, binder: None });
                }
                let binder = match self.peek().clone() {
                    Tok::Underscore => "_".to_string(),
                    Tok::LowId(b) if !is_keyword(&b) => b,
                    Tok::CapId(b) => b,
                    _ => return Err(self.mismatch(PATTERN_BINDER)),
                };
                self.bump();
                self.expect(Tok::RParen)?;
                Ok(Pattern::Ctor {
                    name,
                    binder: Some(binder),
                })
            }
            _ => Err(self.mismatch("{'_', CAP_ID}")),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn e(s: &str) -> Expr {
        parse_expr(0, s).unwrap_or_else(|err| panic!("{s}: {err:?}"))
    }

    #[test]
    fn literal_pattern_is_rejected() {
        let err = parse_expr(0, "match r {\n  | Ok(true) => 1\n  | Err(_) => 0\n}").unwrap_err();
        assert_eq!(
            err.message,
            "mismatched input 'true' expecting {'_', LOW_ID, CAP_ID}"
        );
        let err = parse_expr(0, "match r { | Some(5) => 1 | None => 0 }").unwrap_err();
        assert!(err.message.starts_with("mismatched input '5'"));
    }

    #[test]
    fn precedence() {
        let a = e("1 + 2 * 3 == 7 and x");
        let b = e("((1 + (2 * 3)) == 7) and x");
        assert_eq!(a, b);
        assert_eq!(e("2 ^ 3 ^ 2"), e("2 ^ (3 ^ 2)"));
        assert_eq!(e("a - b - c"), e("(a - b) - c"));
    }

    #[test]
    fn method_calls_and_fields() {
        let x = e("state.balances.get(info.sender).amount");
        match &x.kind {
            ExprKind::Field { base, name } => {
                assert_eq!(name, "amount");
                assert!(matches!(&base.kind, ExprKind::App { op, dot: true, .. } if op == "get"));
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn call_must_start_on_same_line() {
        let x = e("{ val a = f\n(1, 2) }");
        assert!(matches!(x.kind, ExprKind::Let { .. }));
    }

    #[test]
    fn records_spread_and_blocks() {
        e("{ ...state, last_id: state.last_id + 1, lockups: state.lockups.put(1, { owner: \"a\" }) }");
        e("{ val x = 1\n val y = x + 1\n (x, y) }");
        e("all { x' = 1, y' = x + 1 }");
        e("s.filter(x => x > 1).map((a) => a -> a)");
        e("if (a > b) a else b");
        e("nondet v = Set(1, 2).oneOf()\n step_with(v)");
    }

    #[test]
    fn module_parses() {
        let m = parse_module(
            0,
            "module m {\n import cw_types.* from \"./lib/cw_types\"\n type T = | A(int) | B\n type R = { a: int, b: str -> int }\n var x: int\n pure def f(a: int): int = a + 1\n action init = x' = 0\n}",
        )
        .unwrap();
        assert_eq!(m.decls.len(), 6);
        assert_eq!(parse_module(0, "").unwrap().decls.len(), 0);
    }

    #[test]
    fn errors_point_at_token() {
        let err = parse_expr(0, "a && b").unwrap_err();
        assert_eq!(err.span.start, 2);
    }
}
