//! Expression mini-language for vector-field components.
//!
//! Grammar (whitespace is insignificant):
//!
//! ```text
//! expr    := term (('+' | '-') term)*
//! term    := unary (('*' | '/') unary)*
//! unary   := '-' unary | power
//! power   := primary ('^' unary)?          (right-associative)
//! primary := number | ident | func '(' expr ')' | '(' expr ')'
//! func    := exp | ln | sin | cos | sqrt | tanh
//! number  := digits ['.' digits] [('e' | 'E') ['+' | '-'] digits]
//! ```
//!
//! Identifiers name the state variables `x1 ... xn`, the perturbation
//! parameter `eps`, or a named constant declared by the model.

use std::collections::BTreeMap;
use std::fmt;

use thiserror::Error;

/// Name of the perturbation parameter inside expressions.
pub const EPS: &str = "eps";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Func {
    Exp,
    Ln,
    Sin,
    Cos,
    Sqrt,
    Tanh,
}

impl Func {
    pub const ALL: [Func; 6] = [Func::Exp, Func::Ln, Func::Sin, Func::Cos, Func::Sqrt, Func::Tanh];

    pub fn name(self) -> &'static str {
        match self {
            Func::Exp => "exp",
            Func::Ln => "ln",
            Func::Sin => "sin",
            Func::Cos => "cos",
            Func::Sqrt => "sqrt",
            Func::Tanh => "tanh",
        }
    }

    pub fn from_name(name: &str) -> Option<Func> {
        Func::ALL.into_iter().find(|f| f.name() == name)
    }

    fn apply(self, a: f64) -> Result<f64, EvalError> {
        let v = match self {
            Func::Exp => a.exp(),
            Func::Ln => {
                if a <= 0.0 {
                    return Err(EvalError::Domain("ln of non-positive argument"));
                }
                a.ln()
            }
            Func::Sin => a.sin(),
            Func::Cos => a.cos(),
            Func::Sqrt => {
                if a < 0.0 {
                    return Err(EvalError::Domain("sqrt of negative argument"));
                }
                a.sqrt()
            }
            Func::Tanh => a.tanh(),
        };
        finite(v, self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BinOp {
    Add,
    Sub,
    Mul,
    Div,
    Pow,
}

impl BinOp {
    fn symbol(self) -> &'static str {
        match self {
            BinOp::Add => "+",
            BinOp::Sub => "-",
            BinOp::Mul => "*",
            BinOp::Div => "/",
            BinOp::Pow => "^",
        }
    }

    fn apply(self, a: f64, b: f64) -> Result<f64, EvalError> {
        let v = match self {
            BinOp::Add => a + b,
            BinOp::Sub => a - b,
            BinOp::Mul => a * b,
            BinOp::Div => {
                if b == 0.0 {
                    return Err(EvalError::Domain("division by zero"));
                }
                a / b
            }
            BinOp::Pow => {
                if a == 0.0 && b < 0.0 {
                    return Err(EvalError::Domain("zero raised to a negative power"));
                }
                a.powf(b)
            }
        };
        finite(v, self.symbol())
    }
}

fn finite(v: f64, op: &'static str) -> Result<f64, EvalError> {
    if v.is_finite() {
        Ok(v)
    } else {
        Err(EvalError::NonFinite(op))
    }
}

/// Expression tree. Immutable once built.
#[derive(Debug, Clone, PartialEq)]
pub enum Ast {
    Const(f64),
    Var(String),
    Neg(Box<Ast>),
    Binary(BinOp, Box<Ast>, Box<Ast>),
    Call(Func, Box<Ast>),
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ParseError {
    #[error("syntax error at offset {offset}: {message}")]
    Syntax { offset: usize, message: String },
    #[error("unknown function `{name}` at offset {offset}")]
    UnknownFunction { name: String, offset: usize },
    #[error("unknown variable `{name}` at offset {offset}")]
    UnknownVariable { name: String, offset: usize },
}

impl ParseError {
    pub fn offset(&self) -> usize {
        match self {
            ParseError::Syntax { offset, .. }
            | ParseError::UnknownFunction { offset, .. }
            | ParseError::UnknownVariable { offset, .. } => *offset,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EvalError {
    #[error("unbound variable `{0}`")]
    Unbound(String),
    #[error("domain error: {0}")]
    Domain(&'static str),
    #[error("non-finite result from `{0}`")]
    NonFinite(&'static str),
}

/// Names an expression may reference: `x1 ... xn`, `eps` and declared parameters.
#[derive(Debug, Clone)]
pub struct VarScope<'a> {
    pub n: usize,
    pub params: Option<&'a BTreeMap<String, f64>>,
}

impl VarScope<'_> {
    pub fn state(n: usize) -> VarScope<'static> {
        VarScope { n, params: None }
    }

    pub fn allows(&self, name: &str) -> bool {
        name == EPS
            || state_index(name).is_some_and(|k| k < self.n)
            || self.params.is_some_and(|p| p.contains_key(name))
    }
}

/// Zero-based index of a state variable name `x<k>`, `k ≥ 1`, without leading zeros.
pub fn state_index(name: &str) -> Option<usize> {
    let digits = name.strip_prefix('x')?;
    if digits.is_empty() || digits.starts_with('0') || !digits.bytes().all(|b| b.is_ascii_digit()) {
        return None;
    }
    digits.parse::<usize>().ok().map(|k| k - 1)
}

pub fn state_name(index: usize) -> String {
    format!("x{}", index + 1)
}

// ---------------------------------------------------------------------------
// Lexer

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Num(f64),
    Ident(String),
    Op(char),
    LParen,
    RParen,
    End,
}

fn lex(src: &str) -> Result<Vec<(Tok, usize)>, ParseError> {
    let bytes = src.as_bytes();
    let mut out = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        let c = bytes[i];
        if c.is_ascii_whitespace() {
            i += 1;
            continue;
        }
        let start = i;
        if c.is_ascii_digit() || c == b'.' {
            while i < bytes.len() && bytes[i].is_ascii_digit() {
                i += 1;
            }
            if i < bytes.len() && bytes[i] == b'.' {
                i += 1;
                while i < bytes.len() && bytes[i].is_ascii_digit() {
                    i += 1;
                }
            }
            if i < bytes.len() && (bytes[i] == b'e' || bytes[i] == b'E') {
                let mut j = i + 1;
                if j < bytes.len() && (bytes[j] == b'+' || bytes[j] == b'-') {
                    j += 1;
                }
                if j < bytes.len() && bytes[j].is_ascii_digit() {
                    while j < bytes.len() && bytes[j].is_ascii_digit() {
                        j += 1;
                    }
                    i = j;
                }
            }
            let text = &src[start..i];
            let value: f64 = text
                .parse()
                .map_err(|_| ParseError::Syntax { offset: start, message: format!("malformed number `{text}`") })?;
            if !value.is_finite() {
                return Err(ParseError::Syntax { offset: start, message: format!("number `{text}` out of range") });
            }
            out.push((Tok::Num(value), start));
        } else if c.is_ascii_alphabetic() || c == b'_' {
            while i < bytes.len() && (bytes[i].is_ascii_alphanumeric() || bytes[i] == b'_') {
                i += 1;
            }
            out.push((Tok::Ident(src[start..i].to_string()), start));
        } else {
            let tok = match c {
                b'+' | b'-' | b'*' | b'/' | b'^' => Tok::Op(c as char),
                b'(' => Tok::LParen,
                b')' => Tok::RParen,
                _ => {
                    let ch = src[start..].chars().next().unwrap_or('?');
                    return Err(ParseError::Syntax { offset: start, message: format!("unexpected character `{ch}`") });
                }
            };
            i += 1;
            out.push((tok, start));
        }
    }
    out.push((Tok::End, src.len()));
    Ok(out)
}

// ---------------------------------------------------------------------------
// Parser

struct Parser<'s, 'c> {
    toks: Vec<(Tok, usize)>,
    pos: usize,
    scope: Option<&'s VarScope<'c>>,
}

impl Parser<'_, '_> {
    fn peek(&self) -> &Tok {
        &self.toks[self.pos].0
    }

    fn offset(&self) -> usize {
        self.toks[self.pos].1
    }

    fn bump(&mut self) -> (Tok, usize) {
        let t = self.toks[self.pos].clone();
        if self.pos + 1 < self.toks.len() {
            self.pos += 1;
        }
        t
    }

    fn unexpected(&self) -> ParseError {
        let message = match self.peek() {
            Tok::End => "unexpected end of input".to_string(),
            Tok::Num(v) => format!("unexpected number `{v}`"),
            Tok::Ident(s) => format!("unexpected identifier `{s}`"),
            Tok::Op(c) => format!("unexpected operator `{c}`"),
            Tok::LParen => "unexpected `(`".to_string(),
            Tok::RParen => "unexpected `)`".to_string(),
        };
        ParseError::Syntax { offset: self.offset(), message }
    }

    fn expr(&mut self) -> Result<Ast, ParseError> {
        let mut lhs = self.term()?;
        loop {
            let op = match self.peek() {
                Tok::Op('+') => BinOp::Add,
                Tok::Op('-') => BinOp::Sub,
                _ => return Ok(lhs),
            };
            self.bump();
            let rhs = self.term()?;
            lhs = Ast::Binary(op, Box::new(lhs), Box::new(rhs));
        }
    }

    fn term(&mut self) -> Result<Ast, ParseError> {
        let mut lhs = self.unary()?;
        loop {
            let op = match self.peek() {
                Tok::Op('*') => BinOp::Mul,
                Tok::Op('/') => BinOp::Div,
                _ => return Ok(lhs),
            };
            self.bump();
            let rhs = self.unary()?;
            lhs = Ast::Binary(op, Box::new(lhs), Box::new(rhs));
        }
    }

    fn unary(&mut self) -> Result<Ast, ParseError> {
        if *self.peek() == Tok::Op('-') {
            self.bump();
            return Ok(Ast::Neg(Box::new(self.unary()?)));
        }
        self.power()
    }

    fn power(&mut self) -> Result<Ast, ParseError> {
        let base = self.primary()?;
        if *self.peek() == Tok::Op('^') {
            self.bump();
            let exponent = self.unary()?;
            return Ok(Ast::Binary(BinOp::Pow, Box::new(base), Box::new(exponent)));
        }
        Ok(base)
    }

    fn primary(&mut self) -> Result<Ast, ParseError> {
        match self.peek().clone() {
            Tok::Num(v) => {
                self.bump();
                Ok(Ast::Const(v))
            }
            Tok::LParen => {
                self.bump();
                let inner = self.expr()?;
                self.expect_rparen()?;
                Ok(inner)
            }
            Tok::Ident(name) => {
                let offset = self.offset();
                self.bump();
                if *self.peek() == Tok::LParen {
                    let func = Func::from_name(&name).ok_or(ParseError::UnknownFunction { name, offset })?;
                    self.bump();
                    let arg = self.expr()?;
                    self.expect_rparen()?;
                    return Ok(Ast::Call(func, Box::new(arg)));
                }
                if Func::from_name(&name).is_some() {
                    return Err(ParseError::Syntax {
                        offset: self.offset(),
                        message: format!("expected `(` after function `{name}`"),
                    });
                }
                if let Some(scope) = self.scope {
                    if !scope.allows(&name) {
                        return Err(ParseError::UnknownVariable { name, offset });
                    }
                }
                Ok(Ast::Var(name))
            }
            _ => Err(self.unexpected()),
        }
    }

    fn expect_rparen(&mut self) -> Result<(), ParseError> {
        if *self.peek() == Tok::RParen {
            self.bump();
            Ok(())
        } else {
            Err(self.unexpected())
        }
    }
}

/// Parses without restricting variable names.
pub fn parse(source: &str) -> Result<Ast, ParseError> {
    parse_inner(source, None)
}

/// Parses and rejects any variable the scope does not declare.
pub fn parse_scoped(source: &str, scope: &VarScope<'_>) -> Result<Ast, ParseError> {
    parse_inner(source, Some(scope))
}

fn parse_inner(source: &str, scope: Option<&VarScope<'_>>) -> Result<Ast, ParseError> {
    let toks = lex(source)?;
    let mut p = Parser { toks, pos: 0, scope };
    if *p.peek() == Tok::End {
        return Err(ParseError::Syntax { offset: 0, message: "empty expression".into() });
    }
    let ast = p.expr()?;
    if *p.peek() != Tok::End {
        return Err(p.unexpected());
    }
    Ok(ast)
}

// ---------------------------------------------------------------------------
// Printing

impl Ast {
    fn precedence(&self) -> u8 {
        match self {
            Ast::Const(c) if c.is_sign_negative() => 3,
            Ast::Const(_) | Ast::Var(_) | Ast::Call(..) => 5,
            Ast::Neg(_) => 3,
            Ast::Binary(BinOp::Add | BinOp::Sub, ..) => 1,
            Ast::Binary(BinOp::Mul | BinOp::Div, ..) => 2,
            Ast::Binary(BinOp::Pow, ..) => 4,
        }
    }

    fn write_child(&self, f: &mut fmt::Formatter<'_>, min_prec: u8) -> fmt::Result {
        if self.precedence() < min_prec {
            write!(f, "({self})")
        } else {
            write!(f, "{self}")
        }
    }
}

impl fmt::Display for Ast {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Ast::Const(c) => write!(f, "{c}"),
            Ast::Var(name) => f.write_str(name),
            Ast::Neg(a) => {
                f.write_str("-")?;
                a.write_child(f, 3)
            }
            Ast::Call(func, a) => write!(f, "{}({a})", func.name()),
            Ast::Binary(op, l, r) => {
                let (lp, rp) = match op {
                    BinOp::Add | BinOp::Sub => (1, 2),
                    BinOp::Mul | BinOp::Div => (2, 3),
                    BinOp::Pow => (5, 3),
                };
                l.write_child(f, lp)?;
                match op {
                    BinOp::Pow => f.write_str("^")?,
                    _ => write!(f, " {} ", op.symbol())?,
                }
                r.write_child(f, rp)
            }
        }
    }
}

// ---------------------------------------------------------------------------
// Evaluation

pub trait Bindings {
    fn lookup(&self, name: &str) -> Option<f64>;
}

impl Bindings for BTreeMap<String, f64> {
    fn lookup(&self, name: &str) -> Option<f64> {
        self.get(name).copied()
    }
}

impl Bindings for std::collections::HashMap<String, f64> {
    fn lookup(&self, name: &str) -> Option<f64> {
        self.get(name).copied()
    }
}

impl Bindings for [(&str, f64)] {
    fn lookup(&self, name: &str) -> Option<f64> {
        self.iter().find(|(k, _)| *k == name).map(|(_, v)| *v)
    }
}

impl<const N: usize> Bindings for [(&str, f64); N] {
    fn lookup(&self, name: &str) -> Option<f64> {
        self.as_slice().lookup(name)
    }
}

impl Ast {
    pub fn eval<B: Bindings + ?Sized>(&self, bindings: &B) -> Result<f64, EvalError> {
        match self {
            Ast::Const(c) => Ok(*c),
            Ast::Var(name) => bindings.lookup(name).ok_or_else(|| EvalError::Unbound(name.clone())),
            Ast::Neg(a) => Ok(-a.eval(bindings)?),
            Ast::Binary(op, l, r) => op.apply(l.eval(bindings)?, r.eval(bindings)?),
            Ast::Call(func, a) => func.apply(a.eval(bindings)?),
        }
    }

    pub fn depends_on(&self, var: &str) -> bool {
        match self {
            Ast::Const(_) => false,
            Ast::Var(name) => name == var,
            Ast::Neg(a) | Ast::Call(_, a) => a.depends_on(var),
            Ast::Binary(_, l, r) => l.depends_on(var) || r.depends_on(var),
        }
    }

    /// Collects variable names in first-occurrence order.
    pub fn variables(&self) -> Vec<String> {
        fn walk(a: &Ast, out: &mut Vec<String>) {
            match a {
                Ast::Const(_) => {}
                Ast::Var(name) => {
                    if !out.contains(name) {
                        out.push(name.clone());
                    }
                }
                Ast::Neg(x) | Ast::Call(_, x) => walk(x, out),
                Ast::Binary(_, l, r) => {
                    walk(l, out);
                    walk(r, out);
                }
            }
        }
        let mut out = Vec::new();
        walk(self, &mut out);
        out
    }

    /// Substitutes named constants for variables.
    pub fn substitute(&self, values: &BTreeMap<String, f64>) -> Ast {
        match self {
            Ast::Var(name) => match values.get(name) {
                Some(v) => Ast::Const(*v),
                None => self.clone(),
            },
            Ast::Const(_) => self.clone(),
            Ast::Neg(a) => Ast::Neg(Box::new(a.substitute(values))),
            Ast::Call(f, a) => Ast::Call(*f, Box::new(a.substitute(values))),
            Ast::Binary(op, l, r) => Ast::Binary(*op, Box::new(l.substitute(values)), Box::new(r.substitute(values))),
        }
    }
}

// ---------------------------------------------------------------------------
// Differentiation

mod build {
    //! Constructors with constant folding and identity elimination only.

    use super::{Ast, BinOp, Func};

    fn as_const(a: &Ast) -> Option<f64> {
        match a {
            Ast::Const(c) => Some(*c),
            _ => None,
        }
    }

    fn fold(op: BinOp, l: &Ast, r: &Ast) -> Option<Ast> {
        let (a, b) = (as_const(l)?, as_const(r)?);
        op.apply(a, b).ok().map(Ast::Const)
    }

    pub fn num(c: f64) -> Ast {
        Ast::Const(c)
    }

    pub fn neg(a: Ast) -> Ast {
        match a {
            Ast::Const(c) => Ast::Const(-c),
            Ast::Neg(inner) => *inner,
            other => Ast::Neg(Box::new(other)),
        }
    }

    pub fn add(l: Ast, r: Ast) -> Ast {
        if let Some(v) = fold(BinOp::Add, &l, &r) {
            return v;
        }
        match (as_const(&l), as_const(&r)) {
            (Some(z), _) if z == 0.0 => r,
            (_, Some(z)) if z == 0.0 => l,
            _ => Ast::Binary(BinOp::Add, Box::new(l), Box::new(r)),
        }
    }

    pub fn sub(l: Ast, r: Ast) -> Ast {
        if let Some(v) = fold(BinOp::Sub, &l, &r) {
            return v;
        }
        match (as_const(&l), as_const(&r)) {
            (_, Some(z)) if z == 0.0 => l,
            (Some(z), _) if z == 0.0 => neg(r),
            _ => Ast::Binary(BinOp::Sub, Box::new(l), Box::new(r)),
        }
    }

    pub fn mul(l: Ast, r: Ast) -> Ast {
        if let Some(v) = fold(BinOp::Mul, &l, &r) {
            return v;
        }
        match (as_const(&l), as_const(&r)) {
            (Some(z), _) | (_, Some(z)) if z == 0.0 => Ast::Const(0.0),
            (Some(o), _) if o == 1.0 => r,
            (_, Some(o)) if o == 1.0 => l,
            _ => Ast::Binary(BinOp::Mul, Box::new(l), Box::new(r)),
        }
    }

    pub fn div(l: Ast, r: Ast) -> Ast {
        if let Some(v) = fold(BinOp::Div, &l, &r) {
            return v;
        }
        match as_const(&r) {
            Some(o) if o == 1.0 => l,
            _ => Ast::Binary(BinOp::Div, Box::new(l), Box::new(r)),
        }
    }

    pub fn pow(l: Ast, r: Ast) -> Ast {
        if let Some(v) = fold(BinOp::Pow, &l, &r) {
            return v;
        }
        match as_const(&r) {
            Some(o) if o == 1.0 => l,
            _ => Ast::Binary(BinOp::Pow, Box::new(l), Box::new(r)),
        }
    }

    pub fn call(f: Func, a: Ast) -> Ast {
        if let Some(c) = as_const(&a) {
            if let Ok(v) = f.apply(c) {
                return Ast::Const(v);
            }
        }
        Ast::Call(f, Box::new(a))
    }
}

/// Exact partial derivative of `ast` with respect to `var`.
pub fn differentiate(ast: &Ast, var: &str) -> Ast {
    use build::*;

    if !ast.depends_on(var) {
        return num(0.0);
    }
    match ast {
        Ast::Const(_) => num(0.0),
        Ast::Var(name) => num(if name == var { 1.0 } else { 0.0 }),
        Ast::Neg(a) => neg(differentiate(a, var)),
        Ast::Binary(op, u, v) => {
            let (u, v) = (u.as_ref(), v.as_ref());
            let du = differentiate(u, var);
            let dv = differentiate(v, var);
            match op {
                BinOp::Add => add(du, dv),
                BinOp::Sub => sub(du, dv),
                BinOp::Mul => add(mul(du, v.clone()), mul(u.clone(), dv)),
                BinOp::Div => div(sub(mul(du, v.clone()), mul(u.clone(), dv)), pow(v.clone(), num(2.0))),
                BinOp::Pow => {
                    if !v.depends_on(var) {
                        // v * u^(v-1) * u'
                        mul(mul(v.clone(), pow(u.clone(), sub(v.clone(), num(1.0)))), du)
                    } else if !u.depends_on(var) {
                        // u^v * ln(u) * v'
                        mul(mul(ast.clone(), call(Func::Ln, u.clone())), dv)
                    } else {
                        // u^v * (v' ln(u) + v u' / u)
                        mul(ast.clone(), add(mul(dv, call(Func::Ln, u.clone())), div(mul(v.clone(), du), u.clone())))
                    }
                }
            }
        }
        Ast::Call(func, a) => {
            let a = a.as_ref();
            let da = differentiate(a, var);
            let outer = match func {
                Func::Exp => call(Func::Exp, a.clone()),
                Func::Ln => div(num(1.0), a.clone()),
                Func::Sin => call(Func::Cos, a.clone()),
                Func::Cos => neg(call(Func::Sin, a.clone())),
                Func::Sqrt => div(num(1.0), mul(num(2.0), call(Func::Sqrt, a.clone()))),
                Func::Tanh => sub(num(1.0), pow(call(Func::Tanh, a.clone()), num(2.0))),
            };
            mul(outer, da)
        }
    }
}

// ---------------------------------------------------------------------------
// Slot-resolved form used on the hot path.

#[derive(Debug, Clone, PartialEq)]
enum Node {
    Const(f64),
    State(usize),
    Eps,
    Neg(Box<Node>),
    Binary(BinOp, Box<Node>, Box<Node>),
    Call(Func, Box<Node>),
}

/// An expression with named constants folded in and variables resolved to
/// state slots, evaluated as `f(x, eps)`.
#[derive(Debug, Clone, PartialEq)]
pub struct CompiledExpr {
    root: Node,
}

#[derive(Debug, Clone, PartialEq, Error)]
#[error("cannot resolve variable `{0}`")]
pub struct ResolveError(pub String);

impl CompiledExpr {
    pub fn new(ast: &Ast, n: usize, params: &BTreeMap<String, f64>) -> Result<Self, ResolveError> {
        fn lower(a: &Ast, n: usize, params: &BTreeMap<String, f64>) -> Result<Node, ResolveError> {
            Ok(match a {
                Ast::Const(c) => Node::Const(*c),
                Ast::Var(name) if name == EPS => Node::Eps,
                Ast::Var(name) => {
                    if let Some(v) = params.get(name) {
                        Node::Const(*v)
                    } else {
                        match state_index(name) {
                            Some(k) if k < n => Node::State(k),
                            _ => return Err(ResolveError(name.clone())),
                        }
                    }
                }
                Ast::Neg(x) => Node::Neg(Box::new(lower(x, n, params)?)),
                Ast::Call(f, x) => Node::Call(*f, Box::new(lower(x, n, params)?)),
                Ast::Binary(op, l, r) => {
                    Node::Binary(*op, Box::new(lower(l, n, params)?), Box::new(lower(r, n, params)?))
                }
            })
        }
        Ok(Self { root: lower(ast, n, params)? })
    }

    pub fn eval(&self, x: &[f64], eps: f64) -> Result<f64, EvalError> {
        fn go(node: &Node, x: &[f64], eps: f64) -> Result<f64, EvalError> {
            match node {
                Node::Const(c) => Ok(*c),
                Node::State(k) => Ok(x[*k]),
                Node::Eps => Ok(eps),
                Node::Neg(a) => Ok(-go(a, x, eps)?),
                Node::Binary(op, l, r) => op.apply(go(l, x, eps)?, go(r, x, eps)?),
                Node::Call(f, a) => f.apply(go(a, x, eps)?),
            }
        }
        go(&self.root, x, eps)
    }

    pub fn is_zero(&self) -> bool {
        self.root == Node::Const(0.0)
    }
}
