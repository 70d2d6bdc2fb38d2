//! Text grammar for expressions, declarations, edge labels, the system line,
//! and property queries.
//!
//! Precedence follows C conventions: unary > `* / %` > `+ -` > relational >
//! equality > `&&` > `||`. `//` and `/* */` comments are accepted anywhere
//! whitespace is. The full grammar is written out in `docs/format.md`.

use std::fmt;

use thiserror::Error;

use crate::model::expr::{BinaryOp, Expr, QuantKind, UnaryOp};
use crate::model::{SyncDir, Update};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("syntax error at offset {offset}: {message}")]
pub struct SyntaxError {
    pub offset: usize,
    pub message: String,
}

impl SyntaxError {
    fn new(offset: usize, message: impl Into<String>) -> Self {
        SyntaxError {
            offset,
            message: message.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
enum Tok {
    Int(i64),
    Ident(String),
    Punct(&'static str),
    Eof,
}

impl fmt::Display for Tok {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Tok::Int(v) => write!(f, "`{v}`"),
            Tok::Ident(s) => write!(f, "`{s}`"),
            Tok::Punct(p) => write!(f, "`{p}`"),
            Tok::Eof => write!(f, "end of input"),
        }
    }
}

struct Lexer<'a> {
    src: &'a str,
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Lexer<'a> {
    fn new(src: &'a str) -> Self {
        Lexer {
            src,
            bytes: src.as_bytes(),
            pos: 0,
        }
    }

    fn skip_trivia(&mut self) -> Result<(), SyntaxError> {
        loop {
            while self.pos < self.bytes.len() && self.bytes[self.pos].is_ascii_whitespace() {
                self.pos += 1;
            }
            if self.src[self.pos..].starts_with("//") {
                while self.pos < self.bytes.len() && self.bytes[self.pos] != b'\n' {
                    self.pos += 1;
                }
            } else if self.src[self.pos..].starts_with("/*") {
                let start = self.pos;
                match self.src[self.pos + 2..].find("*/") {
                    Some(end) => self.pos += 2 + end + 2,
                    None => return Err(SyntaxError::new(start, "unterminated block comment")),
                }
            } else {
                return Ok(());
            }
        }
    }

    fn next(&mut self) -> Result<(usize, Tok), SyntaxError> {
        self.skip_trivia()?;
        let start = self.pos;
        if self.pos >= self.bytes.len() {
            return Ok((start, Tok::Eof));
        }
        let c = self.bytes[self.pos];
        if c.is_ascii_digit() {
            while self.pos < self.bytes.len() && self.bytes[self.pos].is_ascii_digit() {
                self.pos += 1;
            }
            let text = &self.src[start..self.pos];
            let value: i64 = text
                .parse()
                .map_err(|_| SyntaxError::new(start, format!("integer literal `{text}` too large")))?;
            return Ok((start, Tok::Int(value)));
        }
        if c.is_ascii_alphabetic() || c == b'_' {
            while self.pos < self.bytes.len()
                && (self.bytes[self.pos].is_ascii_alphanumeric() || self.bytes[self.pos] == b'_')
            {
                self.pos += 1;
            }
            return Ok((start, Tok::Ident(self.src[start..self.pos].to_string())));
        }
        const TWO: [&str; 8] = ["&&", "||", "==", "!=", "<=", ">=", ":=", "->"];
        for p in TWO {
            if self.src[self.pos..].starts_with(p) {
                self.pos += 2;
                return Ok((start, Tok::Punct(p)));
            }
        }
        const ONE: [(&str, u8); 18] = [
            ("+", b'+'),
            ("-", b'-'),
            ("*", b'*'),
            ("/", b'/'),
            ("%", b'%'),
            ("<", b'<'),
            (">", b'>'),
            ("!", b'!'),
            ("?", b'?'),
            ("(", b'('),
            (")", b')'),
            ("[", b'['),
            ("]", b']'),
            (",", b','),
            (":", b':'),
            (";", b';'),
            (".", b'.'),
            ("=", b'='),
        ];
        for (p, byte) in ONE {
            if c == byte {
                self.pos += 1;
                return Ok((start, Tok::Punct(p)));
            }
        }
        Err(SyntaxError::new(
            start,
            format!("unexpected character `{}`", &self.src[start..start + 1]),
        ))
    }
}

struct Parser<'a> {
    lexer: Lexer<'a>,
    tok: Tok,
    offset: usize,
}

impl<'a> Parser<'a> {
    fn new(src: &'a str) -> Result<Self, SyntaxError> {
        let mut lexer = Lexer::new(src);
        let (offset, tok) = lexer.next()?;
        Ok(Parser { lexer, tok, offset })
    }

    fn bump(&mut self) -> Result<Tok, SyntaxError> {
        let (offset, next) = self.lexer.next()?;
        self.offset = offset;
        Ok(std::mem::replace(&mut self.tok, next))
    }

    fn eat_punct(&mut self, p: &'static str) -> Result<bool, SyntaxError> {
        if self.tok == Tok::Punct(p) {
            self.bump()?;
            Ok(true)
        } else {
            Ok(false)
        }
    }

    fn expect_punct(&mut self, p: &'static str) -> Result<(), SyntaxError> {
        if !self.eat_punct(p)? {
            return Err(SyntaxError::new(
                self.offset,
                format!("expected `{p}`, found {}", self.tok),
            ));
        }
        Ok(())
    }

    fn expect_ident(&mut self) -> Result<String, SyntaxError> {
        match self.bump()? {
            Tok::Ident(name) => Ok(name),
            other => Err(SyntaxError::new(
                self.offset,
                format!("expected identifier, found {other}"),
            )),
        }
    }

    fn eat_keyword(&mut self, kw: &str) -> Result<bool, SyntaxError> {
        if matches!(&self.tok, Tok::Ident(name) if name == kw) {
            self.bump()?;
            Ok(true)
        } else {
            Ok(false)
        }
    }

    fn expect_keyword(&mut self, kw: &str) -> Result<(), SyntaxError> {
        if !self.eat_keyword(kw)? {
            return Err(SyntaxError::new(
                self.offset,
                format!("expected `{kw}`, found {}", self.tok),
            ));
        }
        Ok(())
    }

    fn expect_eof(&mut self) -> Result<(), SyntaxError> {
        if self.tok != Tok::Eof {
            return Err(SyntaxError::new(
                self.offset,
                format!("unexpected trailing {}", self.tok),
            ));
        }
        Ok(())
    }

    fn expect_int_literal(&mut self) -> Result<i64, SyntaxError> {
        let neg = self.eat_punct("-")?;
        match self.bump()? {
            Tok::Int(v) => Ok(if neg { -v } else { v }),
            other => Err(SyntaxError::new(
                self.offset,
                format!("expected integer literal, found {other}"),
            )),
        }
    }

    // ---- expressions -------------------------------------------------

    fn expr(&mut self) -> Result<Expr, SyntaxError> {
        self.binary(1)
    }

    fn binary(&mut self, min_prec: u8) -> Result<Expr, SyntaxError> {
        let mut lhs = self.unary()?;
        loop {
            let op = match &self.tok {
                Tok::Punct("*") => BinaryOp::Mul,
                Tok::Punct("/") => BinaryOp::Div,
                Tok::Punct("%") => BinaryOp::Rem,
                Tok::Punct("+") => BinaryOp::Add,
                Tok::Punct("-") => BinaryOp::Sub,
                Tok::Punct("<") => BinaryOp::Lt,
                Tok::Punct("<=") => BinaryOp::Le,
                Tok::Punct(">") => BinaryOp::Gt,
                Tok::Punct(">=") => BinaryOp::Ge,
                Tok::Punct("==") => BinaryOp::Eq,
                Tok::Punct("!=") => BinaryOp::Ne,
                Tok::Punct("&&") => BinaryOp::And,
                Tok::Punct("||") => BinaryOp::Or,
                _ => break,
            };
            let prec = op.precedence();
            if prec < min_prec {
                break;
            }
            self.bump()?;
            let rhs = self.binary(prec + 1)?;
            if matches!(op, BinaryOp::Div | BinaryOp::Rem) && matches!(rhs.fold(), Expr::Lit(0)) {
                return Err(SyntaxError::new(
                    self.offset,
                    "division or modulo by a statically-zero literal",
                ));
            }
            lhs = Expr::binary(op, lhs, rhs);
        }
        Ok(lhs)
    }

    fn unary(&mut self) -> Result<Expr, SyntaxError> {
        if self.eat_punct("-")? {
            let e = self.unary()?;
            return Ok(match e {
                Expr::Lit(v) => Expr::Lit(-v),
                other => Expr::Unary(UnaryOp::Neg, Box::new(other)),
            });
        }
        if self.eat_punct("!")? {
            let e = self.unary()?;
            return Ok(Expr::Unary(UnaryOp::Not, Box::new(e)));
        }
        self.primary()
    }

    fn primary(&mut self) -> Result<Expr, SyntaxError> {
        match self.tok.clone() {
            Tok::Int(v) => {
                self.bump()?;
                Ok(Expr::Lit(v))
            }
            Tok::Punct("(") => {
                self.bump()?;
                let e = self.expr()?;
                self.expect_punct(")")?;
                Ok(e)
            }
            Tok::Ident(name) if name == "true" => {
                self.bump()?;
                Ok(Expr::Lit(1))
            }
            Tok::Ident(name) if name == "false" => {
                self.bump()?;
                Ok(Expr::Lit(0))
            }
            Tok::Ident(name) if name == "exists" || name == "forall" => {
                let kind = if name == "exists" {
                    QuantKind::Exists
                } else {
                    QuantKind::Forall
                };
                self.bump()?;
                self.expect_punct("(")?;
                let var = self.expect_ident()?;
                self.expect_punct(":")?;
                let (lo, hi) = self.int_range()?;
                self.expect_punct(")")?;
                self.expect_punct("(")?;
                let body = self.expr()?;
                self.expect_punct(")")?;
                Ok(Expr::Quant {
                    kind,
                    var,
                    lo: Box::new(lo),
                    hi: Box::new(hi),
                    body: Box::new(body),
                })
            }
            Tok::Ident(name) => {
                self.bump()?;
                self.member_suffix(name)
            }
            other => Err(SyntaxError::new(
                self.offset,
                format!("expected expression, found {other}"),
            )),
        }
    }

    /// After an identifier: `.field` or `(index).field`, else a plain
    /// variable reference.
    fn member_suffix(&mut self, name: String) -> Result<Expr, SyntaxError> {
        if self.eat_punct(".")? {
            let field = self.expect_ident()?;
            return Ok(Expr::Member {
                template: name,
                index: None,
                field,
            });
        }
        if self.tok == Tok::Punct("(") {
            // Lookahead: this is a member only if `(expr).ident` follows.
            let save_lexer_pos = self.lexer.pos;
            let save_tok = self.tok.clone();
            let save_offset = self.offset;
            self.bump()?;
            let parse_member = (|| -> Result<Option<(Expr, String)>, SyntaxError> {
                let index = self.expr()?;
                if !self.eat_punct(")")? {
                    return Ok(None);
                }
                if !self.eat_punct(".")? {
                    return Ok(None);
                }
                let field = self.expect_ident()?;
                Ok(Some((index, field)))
            })();
            match parse_member {
                Ok(Some((index, field))) => {
                    return Ok(Expr::Member {
                        template: name,
                        index: Some(Box::new(index)),
                        field,
                    });
                }
                _ => {
                    self.lexer.pos = save_lexer_pos;
                    self.tok = save_tok;
                    self.offset = save_offset;
                }
            }
        }
        Ok(Expr::Var(name))
    }

    /// `int[lo,hi]` with expression bounds (constants folded later).
    fn int_range(&mut self) -> Result<(Expr, Expr), SyntaxError> {
        self.expect_keyword("int")?;
        self.expect_punct("[")?;
        let lo = self.expr()?;
        self.expect_punct(",")?;
        let hi = self.expr()?;
        self.expect_punct("]")?;
        Ok((lo, hi))
    }

    /// An update target: `x`, `T.x`, or `T(3).x` rendered as a display name.
    fn update_target(&mut self) -> Result<String, SyntaxError> {
        let base = self.expect_ident()?;
        if self.eat_punct(".")? {
            let field = self.expect_ident()?;
            return Ok(format!("{base}.{field}"));
        }
        if self.tok == Tok::Punct("(") {
            self.bump()?;
            let index = self.expect_int_literal()?;
            self.expect_punct(")")?;
            self.expect_punct(".")?;
            let field = self.expect_ident()?;
            return Ok(format!("{base}({index}).{field}"));
        }
        Ok(base)
    }
}

/// Parse a complete expression.
pub fn parse_expression(src: &str) -> Result<Expr, SyntaxError> {
    let mut p = Parser::new(src)?;
    let e = p.expr()?;
    p.expect_eof()?;
    Ok(e)
}

/// Parse an assignment label: comma-separated `target = expr` (or `:=`).
/// Empty input is the empty update list.
pub fn parse_updates(src: &str) -> Result<Vec<Update>, SyntaxError> {
    let mut p = Parser::new(src)?;
    let mut updates = Vec::new();
    if p.tok == Tok::Eof {
        return Ok(updates);
    }
    loop {
        let target = p.update_target()?;
        if !p.eat_punct("=")? && !p.eat_punct(":=")? {
            return Err(SyntaxError::new(
                p.offset,
                format!("expected `=` in update, found {}", p.tok),
            ));
        }
        let value = p.expr()?;
        updates.push(Update { target, value });
        if !p.eat_punct(",")? {
            break;
        }
    }
    p.expect_eof()?;
    Ok(updates)
}

/// A select binding before constant folding: `name : int[lo,hi]`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SelectDecl {
    pub name: String,
    pub lo: Expr,
    pub hi: Expr,
}

/// Parse a select label: comma-separated `name : int[lo,hi]`.
pub fn parse_selects(src: &str) -> Result<Vec<SelectDecl>, SyntaxError> {
    let mut p = Parser::new(src)?;
    let mut selects = Vec::new();
    if p.tok == Tok::Eof {
        return Ok(selects);
    }
    loop {
        let name = p.expect_ident()?;
        p.expect_punct(":")?;
        let (lo, hi) = p.int_range()?;
        selects.push(SelectDecl { name, lo, hi });
        if !p.eat_punct(",")? {
            break;
        }
    }
    p.expect_eof()?;
    Ok(selects)
}

/// Parse a synchronisation label: `channel!` or `channel?`.
pub fn parse_sync(src: &str) -> Result<(String, SyncDir), SyntaxError> {
    let mut p = Parser::new(src)?;
    let channel = p.expect_ident()?;
    let dir = if p.eat_punct("!")? {
        SyncDir::Send
    } else if p.eat_punct("?")? {
        SyncDir::Receive
    } else {
        return Err(SyntaxError::new(
            p.offset,
            "expected `!` or `?` after channel name",
        ));
    };
    p.expect_eof()?;
    Ok((channel, dir))
}

/// One parsed declaration statement.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum DeclItem {
    Const { name: String, value: Expr },
    Channels(Vec<String>),
    Var {
        /// Display name; qualified names appear in combined-model files.
        name: String,
        lo: Expr,
        hi: Expr,
        initial: Option<Expr>,
    },
}

/// Parse a declarations section: `const int N = 3;`, `chan a, b;`,
/// `int[lo,hi] x = e, y;`. Unsupported declaration kinds (clocks, arrays,
/// functions, broadcast channels) are reported by name.
pub fn parse_declarations(src: &str) -> Result<Vec<DeclItem>, SyntaxError> {
    let mut p = Parser::new(src)?;
    let mut items = Vec::new();
    loop {
        if p.tok == Tok::Eof {
            return Ok(items);
        }
        let offset = p.offset;
        match &p.tok {
            Tok::Ident(kw) if kw == "const" => {
                p.bump()?;
                p.expect_keyword("int")?;
                let name = p.expect_ident()?;
                p.expect_punct("=")?;
                let value = p.expr()?;
                p.expect_punct(";")?;
                items.push(DeclItem::Const { name, value });
            }
            Tok::Ident(kw) if kw == "chan" => {
                p.bump()?;
                let mut names = vec![p.expect_ident()?];
                while p.eat_punct(",")? {
                    names.push(p.expect_ident()?);
                }
                p.expect_punct(";")?;
                items.push(DeclItem::Channels(names));
            }
            Tok::Ident(kw) if kw == "int" => {
                p.bump()?;
                let (lo, hi) = if p.eat_punct("[")? {
                    let lo = p.expr()?;
                    p.expect_punct(",")?;
                    let hi = p.expr()?;
                    p.expect_punct("]")?;
                    (lo, hi)
                } else {
                    (
                        Expr::Lit(crate::model::VALUE_MIN),
                        Expr::Lit(crate::model::VALUE_MAX),
                    )
                };
                loop {
                    let name = p.var_decl_name()?;
                    let initial = if p.eat_punct("=")? { Some(p.expr()?) } else { None };
                    items.push(DeclItem::Var {
                        name,
                        lo: lo.clone(),
                        hi: hi.clone(),
                        initial,
                    });
                    if !p.eat_punct(",")? {
                        break;
                    }
                }
                p.expect_punct(";")?;
            }
            Tok::Ident(kw) => {
                return Err(SyntaxError::new(
                    offset,
                    format!("unsupported declaration `{kw}`"),
                ));
            }
            other => {
                return Err(SyntaxError::new(
                    offset,
                    format!("expected declaration, found {other}"),
                ));
            }
        }
    }
}

impl Parser<'_> {
    fn var_decl_name(&mut self) -> Result<String, SyntaxError> {
        self.update_target()
    }
}

/// Parse the system section: comments plus one `system A(3), B;` statement.
/// Counts default to 1 and may be constant expressions; `system ;` is the
/// empty instantiation.
pub fn parse_system(src: &str) -> Result<Vec<(String, Expr)>, SyntaxError> {
    let mut p = Parser::new(src)?;
    p.expect_keyword("system")?;
    let mut entries = Vec::new();
    if !p.eat_punct(";")? {
        loop {
            let name = p.expect_ident()?;
            let count = if p.eat_punct("(")? {
                let e = p.expr()?;
                p.expect_punct(")")?;
                e
            } else {
                Expr::Lit(1)
            };
            entries.push((name, count));
            if !p.eat_punct(",")? {
                break;
            }
        }
        p.expect_punct(";")?;
    }
    p.expect_eof()?;
    Ok(entries)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum QueryKind {
    /// `A[] p`: p holds in every reachable state.
    Invariant,
    /// `E<> p`: some reachable state satisfies p.
    Reachability,
}

/// Parse a property query: `A[] expr` or `E<> expr`.
pub fn parse_query(src: &str) -> Result<(QueryKind, Expr), SyntaxError> {
    let mut p = Parser::new(src)?;
    let kind = if p.eat_keyword("A")? {
        p.expect_punct("[")?;
        p.expect_punct("]")?;
        QueryKind::Invariant
    } else if p.eat_keyword("E")? {
        p.expect_punct("<")?;
        p.expect_punct(">")?;
        QueryKind::Reachability
    } else {
        return Err(SyntaxError::new(
            p.offset,
            "expected `A[]` or `E<>` at start of query",
        ));
    };
    let prop = p.expr()?;
    p.expect_eof()?;
    Ok((kind, prop))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn precedence_matches_c() {
        let e = parse_expression("1+2*3").unwrap();
        assert_eq!(crate::model::eval(&e, &std::collections::BTreeMap::new()).unwrap(), 7);
        let e = parse_expression("2*3+1<8 && 1<2 || 0").unwrap();
        assert_eq!(crate::model::eval(&e, &std::collections::BTreeMap::new()).unwrap(), 1);
    }

    #[test]
    fn member_forms() {
        assert_eq!(
            parse_expression("Voter.idle").unwrap(),
            Expr::Member {
                template: "Voter".into(),
                index: None,
                field: "idle".into()
            }
        );
        let e = parse_expression("AI(i).mqual<2").unwrap();
        match e {
            Expr::Binary(BinaryOp::Lt, lhs, _) => match *lhs {
                Expr::Member {
                    template,
                    index: Some(idx),
                    field,
                } => {
                    assert_eq!(template, "AI");
                    assert_eq!(*idx, Expr::Var("i".into()));
                    assert_eq!(field, "mqual");
                }
                other => panic!("expected member, got {other:?}"),
            },
            other => panic!("expected comparison, got {other:?}"),
        }
    }

    #[test]
    fn call_without_member_is_not_a_member() {
        // `f(1)` with no `.field` suffix is not part of the grammar; the
        // lookahead must rewind and fail cleanly on the stray parens.
        assert!(parse_expression("f(1)").is_err());
        assert!(parse_expression("f(1)+2").is_err());
    }

    #[test]
    fn display_roundtrip() {
        for src in [
            "1+2*3",
            "-x+(y-z)*2",
            "a<=b && b<c || !(d==e)",
            "exists(i:int[1,3])(i==x)",
            "forall(i:int[0,2])(AI(i).mqual<2 || !AI(i).wait)",
            "a%b/c",
            "1-2-3",
            "-(a+b)",
            "!(a||b) && c",
        ] {
            let e = parse_expression(src).unwrap();
            let printed = e.to_string();
            let reparsed = parse_expression(&printed).unwrap();
            assert_eq!(e, reparsed, "printing `{src}` as `{printed}` changed structure");
        }
    }

    #[test]
    fn parse_updates_list() {
        let updates = parse_updates("mem_vt = vt, mem_sg=sg").unwrap();
        assert_eq!(updates.len(), 2);
        assert_eq!(updates[0].target, "mem_vt");
        assert_eq!(parse_updates("").unwrap(), vec![]);
        assert!(parse_updates("x = ").is_err());
    }

    #[test]
    fn parse_qualified_update_target() {
        let updates = parse_updates("Voter(2).mem_vt = 1").unwrap();
        assert_eq!(updates[0].target, "Voter(2).mem_vt");
        let updates = parse_updates("Authority.dec_recv = 0").unwrap();
        assert_eq!(updates[0].target, "Authority.dec_recv");
    }

    #[test]
    fn parse_selects_list() {
        let s = parse_selects("vt : int[1,NC], sg : int[0,1]").unwrap();
        assert_eq!(s.len(), 2);
        assert_eq!(s[0].name, "vt");
        assert_eq!(s[0].hi, Expr::Var("NC".into()));
    }

    #[test]
    fn parse_sync_label() {
        assert_eq!(parse_sync("c!").unwrap(), ("c".to_string(), SyncDir::Send));
        assert_eq!(parse_sync("pack?").unwrap(), ("pack".to_string(), SyncDir::Receive));
        assert!(parse_sync("c").is_err());
    }

    #[test]
    fn parse_declarations_section() {
        let items = parse_declarations(
            "// counters\nconst int NV = 2;\nchan decl, pack;\nint[0,NV] ep_sent = 0, b_recv;\n",
        )
        .unwrap();
        assert_eq!(items.len(), 4);
        assert!(matches!(&items[0], DeclItem::Const { name, .. } if name == "NV"));
        assert!(matches!(&items[1], DeclItem::Channels(n) if n.len() == 2));
    }

    #[test]
    fn unsupported_declarations_are_named() {
        let err = parse_declarations("clock t;").unwrap_err();
        assert!(err.message.contains("clock"), "{}", err.message);
        let err = parse_declarations("broadcast chan c;").unwrap_err();
        assert!(err.message.contains("broadcast"), "{}", err.message);
    }

    #[test]
    fn parse_system_line() {
        let entries = parse_system("system Voter(3), Authority;").unwrap();
        assert_eq!(entries.len(), 2);
        assert_eq!(entries[0].0, "Voter");
        assert_eq!(entries[0].1, Expr::Lit(3));
        assert_eq!(entries[1].1, Expr::Lit(1));
    }

    #[test]
    fn parse_queries() {
        let (kind, _) = parse_query("A[](b_recv<=ep_sent && ep_sent<=NV)").unwrap();
        assert_eq!(kind, QueryKind::Invariant);
        let (kind, _) = parse_query("E<> x==1").unwrap();
        assert_eq!(kind, QueryKind::Reachability);
        assert!(parse_query("G x==1").is_err());
    }

    #[test]
    fn static_zero_division_rejected_at_parse() {
        assert!(parse_expression("x/0").is_err());
        assert!(parse_expression("x%(2-2)").is_err());
        assert!(parse_expression("x/2").is_ok());
    }
}
