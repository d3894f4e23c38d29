//! Lexer and recursive-descent parser for the formula subset.
//!
//! Precedence, loosest first: comparison, `+ -`, `* /`, `^`, unary minus.
//! Unary minus binds tighter than `^`, so `-2^2` is `(-2)^2`.

use thiserror::Error;

use super::ast::{BinaryOp, CellRef, Expr, Function, RangeRef};
use crate::address::{column_index, CellAddress, MAX_COL, MAX_ROW};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum FormulaErrorKind {
    #[error("lexical error: {0}")]
    Lexical(String),
    #[error("syntax error: {0}")]
    Syntax(String),
    #[error("unknown function `{0}`")]
    UnknownFunction(String),
    #[error("unknown name `{0}`")]
    UnknownName(String),
    #[error("function {func} does not accept {got} argument(s)")]
    BadArity { func: Function, got: usize },
    #[error("reference `{0}` is out of bounds")]
    OutOfBounds(String),
}

/// A parse failure with the character offset (0-based, counting the
/// leading `=`) where it was detected.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("{kind} at offset {offset}")]
pub struct FormulaError {
    pub kind: FormulaErrorKind,
    pub offset: usize,
}

impl FormulaError {
    fn new(kind: FormulaErrorKind, offset: usize) -> Self {
        Self { kind, offset }
    }

    /// True for plain grammar violations (as opposed to name/arity/bounds).
    pub fn is_syntax(&self) -> bool {
        matches!(self.kind, FormulaErrorKind::Syntax(_))
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Number(f64),
    Str(String),
    Ref(CellRef),
    Ident(String),
    Op(&'static str),
    LParen,
    RParen,
    Comma,
    Colon,
    Eof,
}

struct Lexer {
    chars: Vec<char>,
    pos: usize,
}

impl Lexer {
    fn new(src: &str) -> Self {
        Self {
            chars: src.chars().collect(),
            pos: 0,
        }
    }

    fn peek(&self) -> Option<char> {
        self.chars.get(self.pos).copied()
    }

    fn peek_at(&self, n: usize) -> Option<char> {
        self.chars.get(self.pos + n).copied()
    }

    fn tokens(mut self) -> Result<Vec<(Tok, usize)>, FormulaError> {
        let mut out = Vec::new();
        loop {
            while self.peek().is_some_and(char::is_whitespace) {
                self.pos += 1;
            }
            let start = self.pos;
            let Some(c) = self.peek() else {
                out.push((Tok::Eof, start));
                return Ok(out);
            };
            let tok = match c {
                '0'..='9' | '.' => self.number()?,
                '"' => self.string()?,
                '$' | 'a'..='z' | 'A'..='Z' => self.word()?,
                '(' => self.single(Tok::LParen),
                ')' => self.single(Tok::RParen),
                ',' => self.single(Tok::Comma),
                ':' => self.single(Tok::Colon),
                '+' => self.single(Tok::Op("+")),
                '-' => self.single(Tok::Op("-")),
                '*' => self.single(Tok::Op("*")),
                '/' => self.single(Tok::Op("/")),
                '^' => self.single(Tok::Op("^")),
                '=' => self.single(Tok::Op("=")),
                '<' => match self.peek_at(1) {
                    Some('=') => self.double(Tok::Op("<=")),
                    Some('>') => self.double(Tok::Op("<>")),
                    _ => self.single(Tok::Op("<")),
                },
                '>' => match self.peek_at(1) {
                    Some('=') => self.double(Tok::Op(">=")),
                    _ => self.single(Tok::Op(">")),
                },
                '&' => return Err(lex(start, "text concatenation `&` is not supported")),
                '!' => return Err(lex(start, "cross-sheet references are not supported")),
                other => return Err(lex(start, &format!("unexpected character `{other}`"))),
            };
            out.push((tok, start));
        }
    }

    fn single(&mut self, tok: Tok) -> Tok {
        self.pos += 1;
        tok
    }

    fn double(&mut self, tok: Tok) -> Tok {
        self.pos += 2;
        tok
    }

    fn number(&mut self) -> Result<Tok, FormulaError> {
        let start = self.pos;
        let mut text = String::new();
        while let Some(c) = self.peek().filter(char::is_ascii_digit) {
            text.push(c);
            self.pos += 1;
        }
        if self.peek() == Some('.') {
            text.push('.');
            self.pos += 1;
            while let Some(c) = self.peek().filter(char::is_ascii_digit) {
                text.push(c);
                self.pos += 1;
            }
        }
        if text == "." {
            return Err(lex(start, "malformed number"));
        }
        if matches!(self.peek(), Some('e' | 'E')) {
            let save = self.pos;
            let mut exp = String::from("e");
            self.pos += 1;
            if let Some(sign @ ('+' | '-')) = self.peek() {
                exp.push(sign);
                self.pos += 1;
            }
            let digits_start = self.pos;
            while let Some(c) = self.peek().filter(char::is_ascii_digit) {
                exp.push(c);
                self.pos += 1;
            }
            if self.pos == digits_start {
                self.pos = save;
                return Err(lex(save, "malformed exponent"));
            }
            text.push_str(&exp);
        }
        let value: f64 = text.parse().map_err(|_| lex(start, "malformed number"))?;
        if !value.is_finite() {
            return Err(lex(start, "number out of range"));
        }
        Ok(Tok::Number(value))
    }

    fn string(&mut self) -> Result<Tok, FormulaError> {
        let start = self.pos;
        self.pos += 1;
        let mut text = String::new();
        loop {
            match self.peek() {
                None => return Err(lex(start, "unterminated string")),
                Some('"') if self.peek_at(1) == Some('"') => {
                    text.push('"');
                    self.pos += 2;
                }
                Some('"') => {
                    self.pos += 1;
                    return Ok(Tok::Str(text));
                }
                Some(c) => {
                    text.push(c);
                    self.pos += 1;
                }
            }
        }
    }

    /// `$?letters$?digits` is a reference; bare letters are an identifier.
    fn word(&mut self) -> Result<Tok, FormulaError> {
        let start = self.pos;
        let col_abs = self.peek() == Some('$');
        if col_abs {
            self.pos += 1;
        }
        let mut letters = String::new();
        while let Some(c) = self.peek().filter(char::is_ascii_alphabetic) {
            letters.push(c);
            self.pos += 1;
        }
        if letters.is_empty() {
            return Err(lex(start, "expected column letters after `$`"));
        }
        let row_abs = self.peek() == Some('$');
        if row_abs {
            self.pos += 1;
        }
        let mut digits = String::new();
        while let Some(c) = self.peek().filter(char::is_ascii_digit) {
            digits.push(c);
            self.pos += 1;
        }
        if self.peek().is_some_and(|c| c.is_ascii_alphanumeric() || c == '_' || c == '.') {
            return Err(lex(start, "malformed reference or name"));
        }
        if self.peek() == Some('!') {
            return Err(lex(self.pos, "cross-sheet references are not supported"));
        }
        if digits.is_empty() {
            if col_abs || row_abs {
                return Err(lex(start, "malformed reference"));
            }
            return Ok(Tok::Ident(letters));
        }
        let text: String = self.chars[start..self.pos].iter().collect();
        let out_of_bounds =
            || FormulaError::new(FormulaErrorKind::OutOfBounds(text.clone()), start);
        let col = column_index(&letters).ok_or_else(out_of_bounds)?;
        let row: u64 = digits.parse().map_err(|_| out_of_bounds())?;
        if row == 0 {
            return Err(lex(start, "row numbers start at 1"));
        }
        if col > MAX_COL as u32 || row > MAX_ROW as u64 {
            return Err(out_of_bounds());
        }
        Ok(Tok::Ref(CellRef {
            addr: CellAddress::new(col as u16, row as u32).expect("checked"),
            col_absolute: col_abs,
            row_absolute: row_abs,
        }))
    }
}

fn lex(offset: usize, msg: &str) -> FormulaError {
    FormulaError::new(FormulaErrorKind::Lexical(msg.to_string()), offset)
}

fn syntax(offset: usize, msg: &str) -> FormulaError {
    FormulaError::new(FormulaErrorKind::Syntax(msg.to_string()), offset)
}

struct Parser {
    toks: Vec<(Tok, usize)>,
    pos: usize,
}

impl Parser {
    fn peek(&self) -> &Tok {
        &self.toks[self.pos].0
    }

    fn offset(&self) -> usize {
        self.toks[self.pos].1
    }

    fn bump(&mut self) -> Tok {
        let tok = self.toks[self.pos].0.clone();
        if self.pos + 1 < self.toks.len() {
            self.pos += 1;
        }
        tok
    }

    fn expect(&mut self, want: Tok, what: &str) -> Result<(), FormulaError> {
        if *self.peek() == want {
            self.bump();
            Ok(())
        } else {
            Err(syntax(self.offset(), &format!("expected {what}")))
        }
    }

    fn peek_op(&self, ops: &[&'static str]) -> Option<&'static str> {
        match self.peek() {
            Tok::Op(op) if ops.contains(op) => Some(op),
            _ => None,
        }
    }

    fn comparison(&mut self) -> Result<Expr, FormulaError> {
        let lhs = self.additive()?;
        if let Some(op) = self.peek_op(&["=", "<>", "<", "<=", ">", ">="]) {
            self.bump();
            let rhs = self.additive()?;
            let op = match op {
                "=" => BinaryOp::Eq,
                "<>" => BinaryOp::Ne,
                "<" => BinaryOp::Lt,
                "<=" => BinaryOp::Le,
                ">" => BinaryOp::Gt,
                _ => BinaryOp::Ge,
            };
            return Ok(Expr::binary(op, lhs, rhs));
        }
        Ok(lhs)
    }

    fn additive(&mut self) -> Result<Expr, FormulaError> {
        let mut lhs = self.multiplicative()?;
        while let Some(op) = self.peek_op(&["+", "-"]) {
            self.bump();
            let rhs = self.multiplicative()?;
            let op = if op == "+" { BinaryOp::Add } else { BinaryOp::Sub };
            lhs = Expr::binary(op, lhs, rhs);
        }
        Ok(lhs)
    }

    fn multiplicative(&mut self) -> Result<Expr, FormulaError> {
        let mut lhs = self.power()?;
        while let Some(op) = self.peek_op(&["*", "/"]) {
            self.bump();
            let rhs = self.power()?;
            let op = if op == "*" { BinaryOp::Mul } else { BinaryOp::Div };
            lhs = Expr::binary(op, lhs, rhs);
        }
        Ok(lhs)
    }

    fn power(&mut self) -> Result<Expr, FormulaError> {
        let mut lhs = self.unary()?;
        while self.peek_op(&["^"]).is_some() {
            self.bump();
            let rhs = self.unary()?;
            lhs = Expr::binary(BinaryOp::Pow, lhs, rhs);
        }
        Ok(lhs)
    }

    fn unary(&mut self) -> Result<Expr, FormulaError> {
        if self.peek_op(&["-"]).is_some() {
            self.bump();
            return Ok(Expr::negate(self.atom()?));
        }
        self.atom()
    }

    fn atom(&mut self) -> Result<Expr, FormulaError> {
        let offset = self.offset();
        match self.bump() {
            Tok::Number(n) => Ok(Expr::Number(n)),
            Tok::Str(s) => Ok(Expr::Text(s)),
            Tok::Ref(start) => {
                if *self.peek() == Tok::Colon {
                    self.bump();
                    let end_offset = self.offset();
                    match self.bump() {
                        Tok::Ref(end) => Ok(Expr::Range(RangeRef::new(start, end))),
                        _ => Err(syntax(end_offset, "expected a cell reference after `:`")),
                    }
                } else {
                    Ok(Expr::Ref(start))
                }
            }
            Tok::Ident(name) => {
                if *self.peek() == Tok::LParen {
                    self.call(name, offset)
                } else if name.eq_ignore_ascii_case("TRUE") {
                    Ok(Expr::Bool(true))
                } else if name.eq_ignore_ascii_case("FALSE") {
                    Ok(Expr::Bool(false))
                } else {
                    Err(FormulaError::new(FormulaErrorKind::UnknownName(name), offset))
                }
            }
            Tok::LParen => {
                let inner = self.comparison()?;
                self.expect(Tok::RParen, "`)`")?;
                Ok(inner)
            }
            Tok::Eof => Err(syntax(offset, "unexpected end of formula")),
            other => Err(syntax(offset, &format!("unexpected token {other:?}"))),
        }
    }

    fn call(&mut self, name: String, offset: usize) -> Result<Expr, FormulaError> {
        let func = Function::lookup(&name)
            .ok_or_else(|| FormulaError::new(FormulaErrorKind::UnknownFunction(name), offset))?;
        self.expect(Tok::LParen, "`(`")?;
        let mut args = Vec::new();
        if *self.peek() != Tok::RParen {
            loop {
                args.push(self.comparison()?);
                if *self.peek() == Tok::Comma {
                    self.bump();
                } else {
                    break;
                }
            }
        }
        self.expect(Tok::RParen, "`,` or `)`")?;
        if !func.arity_ok(args.len()) {
            return Err(FormulaError::new(
                FormulaErrorKind::BadArity {
                    func,
                    got: args.len(),
                },
                offset,
            ));
        }
        Ok(Expr::Call(func, args))
    }
}

/// Parses formula text, which must start with `=`.
pub fn parse_formula(text: &str) -> Result<Expr, FormulaError> {
    if !text.starts_with('=') {
        return Err(syntax(0, "formula must start with `=`"));
    }
    let mut toks = Lexer::new(text).tokens()?;
    // drop the leading `=`
    toks.remove(0);
    let mut parser = Parser { toks, pos: 0 };
    let expr = parser.comparison()?;
    if *parser.peek() != Tok::Eof {
        return Err(syntax(parser.offset(), "unexpected trailing input"));
    }
    Ok(expr)
}
