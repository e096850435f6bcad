use num_bigint::BigInt;

use crate::diag::{SourceId, Span};

#[derive(Debug, Clone, PartialEq)]
pub enum Tok {
    Int(BigInt),
    Str(String),
    LowId(String),
    CapId(String),
    Underscore,
    LBrace,
    RBrace,
    LParen,
    RParen,
    LBracket,
    RBracket,
    Comma,
    Colon,
    DoubleColon,
    Dot,
    Spread,
    FatArrow,
    Arrow,
    Prime,
    Assign,
    EqEq,
    NotEq,
    Lt,
    Le,
    Gt,
    Ge,
    Plus,
    Minus,
    Star,
    Slash,
    Percent,
    Caret,
    Pipe,
    /// Characters the grammar does not know, e.g. `&&` or `;`.
    Unknown(String),
    Eof,
}

impl Tok {
    /// How the token reads in error messages.
    pub fn describe(&self) -> String {
        match self {
            Tok::Int(n) => n.to_string(),
            Tok::Str(s) => format!("\"{s}\""),
            Tok::LowId(s) | Tok::CapId(s) | Tok::Unknown(s) => s.clone(),
            Tok::Underscore => "_".into(),
            Tok::LBrace => "{".into(),
            Tok::RBrace => "}".into(),
            Tok::LParen => "(".into(),
            Tok::RParen => ")".into(),
            Tok::LBracket => "[".into(),
            Tok::RBracket => "]".into(),
            Tok::Comma => ",".into(),
            Tok::Colon => ":".into(),
            Tok::DoubleColon => "::".into(),
            Tok::Dot => ".".into(),
            Tok::Spread => "...".into(),
            Tok::FatArrow => "=>".into(),
            Tok::Arrow => "->".into(),
            Tok::Prime => "'".into(),
            Tok::Assign => "=".into(),
            Tok::EqEq => "==".into(),
            Tok::NotEq => "!=".into(),
            Tok::Lt => "<".into(),
            Tok::Le => "<=".into(),
            Tok::Gt => ">".into(),
            Tok::Ge => ">=".into(),
            Tok::Plus => "+".into(),
            Tok::Minus => "-".into(),
            Tok::Star => "*".into(),
            Tok::Slash => "/".into(),
            Tok::Percent => "%".into(),
            Tok::Caret => "^".into(),
            Tok::Pipe => "|".into(),
            Tok::Eof => "<EOF>".into(),
        }
    }

    pub fn is_word(&self, word: &str) -> bool {
        matches!(self, Tok::LowId(s) if s == word)
    }
}

#[derive(Debug, Clone)]
pub struct Token {
    pub tok: Tok,
    pub span: Span,
    /// A line break separates this token from the previous one.
    pub newline_before: bool,
}

#[derive(Debug, Clone)]
pub struct LexError {
    pub message: String,
    pub span: Span,
}

pub fn lex(src: SourceId, text: &str) -> Result<Vec<Token>, LexError> {
    let bytes = text.as_bytes();
    let mut out = Vec::new();
    let mut i = 0;
    let mut newline = true;
    while i < bytes.len() {
        let c = bytes[i];
        if c == b'\n' {
            newline = true;
            i += 1;
            continue;
        }
        if c.is_ascii_whitespace() {
            i += 1;
            continue;
        }
        if c == b'/' && bytes.get(i + 1) == Some(&b'/') {
            while i < bytes.len() && bytes[i] != b'\n' {
                i += 1;
            }
            continue;
        }
        if c == b'/' && bytes.get(i + 1) == Some(&b'*') {
            let start = i;
            i += 2;
            loop {
                if i + 1 >= bytes.len() {
                    return Err(LexError {
                        message: "unterminated block comment".into(),
                        span: Span::new(src, start, bytes.len()),
                    });
                }
                if bytes[i] == b'*' && bytes[i + 1] == b'/' {
                    i += 2;
                    break;
                }
                if bytes[i] == b'\n' {
                    newline = true;
                }
                i += 1;
            }
            continue;
        }
        let start = i;
        let tok = if c.is_ascii_digit() {
            while i < bytes.len() && (bytes[i].is_ascii_digit() || bytes[i] == b'_') {
                i += 1;
            }
            let digits: String = text[start..i].chars().filter(|c| *c != '_').collect();
            Tok::Int(digits.parse().expect("digits"))
        } else if c == b'"' {
            i += 1;
            let mut s = String::new();
            loop {
                let Some(ch) = text[i..].chars().next() else {
                    return Err(LexError {
                        message: "unterminated string literal".into(),
                        span: Span::new(src, start, bytes.len()),
                    });
                };
                i += ch.len_utf8();
                match ch {
                    '"' => break,
                    '\\' => {
                        let Some(esc) = text[i..].chars().next() else { continue };
                        i += esc.len_utf8();
                        s.push(match esc {
                            'n' => '\n',
                            't' => '\t',
                            other => other,
                        });
                    }
                    '\n' => {
                        return Err(LexError {
                            message: "unterminated string literal".into(),
                            span: Span::new(src, start, i),
                        })
                    }
                    other => s.push(other),
                }
            }
            Tok::Str(s)
        } else if c.is_ascii_alphabetic() || c == b'_' {
            while i < bytes.len() && (bytes[i].is_ascii_alphanumeric() || bytes[i] == b'_') {
                i += 1;
            }
            let word = &text[start..i];
            if word == "_" {
                Tok::Underscore
            } else if word.as_bytes()[0].is_ascii_uppercase() {
                Tok::CapId(word.to_string())
            } else {
                Tok::LowId(word.to_string())
            }
        } else {
            let two = text.get(i..i + 2).unwrap_or("");
            let three = text.get(i..i + 3).unwrap_or("");
            let (tok, len) = if three == "..." {
                (Tok::Spread, 3)
            } else {
                match two {
                    "=>" => (Tok::FatArrow, 2),
                    "->" => (Tok::Arrow, 2),
                    "==" => (Tok::EqEq, 2),
                    "!=" => (Tok::NotEq, 2),
                    "<=" => (Tok::Le, 2),
                    ">=" => (Tok::Ge, 2),
                    "::" => (Tok::DoubleColon, 2),
                    "&&" | "||" => (Tok::Unknown(two.to_string()), 2),
                    _ => {
                        let t = match c {
                            b'{' => Tok::LBrace,
                            b'}' => Tok::RBrace,
                            b'(' => Tok::LParen,
                            b')' => Tok::RParen,
                            b'[' => Tok::LBracket,
                            b']' => Tok::RBracket,
                            b',' => Tok::Comma,
                            b':' => Tok::Colon,
                            b'.' => Tok::Dot,
                            b'\'' => Tok::Prime,
                            b'=' => Tok::Assign,
                            b'<' => Tok::Lt,
                            b'>' => Tok::Gt,
                            b'+' => Tok::Plus,
                            b'-' => Tok::Minus,
                            b'*' => Tok::Star,
                            b'/' => Tok::Slash,
                            b'%' => Tok::Percent,
                            b'^' => Tok::Caret,
                            b'|' => Tok::Pipe,
                            _ => {
                                let ch = text[i..].chars().next().unwrap();
                                (Tok::Unknown(ch.to_string()), ch.len_utf8()).0
                            }
                        };
                        let len = match &t {
                            Tok::Unknown(s) => s.len(),
                            _ => 1,
                        };
                        (t, len)
                    }
                }
            };
            i += len;
            tok
        };
        out.push(Token {
            tok,
            span: Span::new(src, start, i),
            newline_before: newline,
        });
        newline = false;
    }
    out.push(Token {
        tok: Tok::Eof,
        span: Span::new(src, bytes.len(), bytes.len()),
        newline_before: true,
    });
    Ok(out)
}
