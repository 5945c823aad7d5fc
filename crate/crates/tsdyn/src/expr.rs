//! Expression language for coefficients and delays.
//!
//! Grammar, loosest binding first:
//!
//! ```text
//! expr    := 'if' cond 'then' expr 'else' expr | sum
//! cond    := 'scattered' '(' expr ')' | sum cmp sum
//! sum     := product (('+' | '-') product)*
//! product := unary (('*' | '/') unary)*
//! unary   := '-' unary | power
//! power   := atom ('^' unary)?
//! atom    := number | 'e' | 'pi' | 't' | name '(' args ')' | '(' expr ')'
//! ```
//!
//! `^` is right-associative and binds tighter than unary minus, so `-2^2`
//! is `-4` and `2^3^2` is `512`. `floor` and `frac` are the integer and
//! fractional parts; `mu`, `sigma`, `rho`, `rho2` and `scattered` query the
//! time scale.

use std::fmt;

use thiserror::Error;

use crate::tscale::{Loc, ScaleError, TimeScale};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ExprError {
    #[error("syntax error at line {line}, column {column}: {msg}")]
    Syntax { line: usize, column: usize, msg: String },
    #[error("unknown identifier `{name}` at line {line}, column {column}")]
    UnknownIdentifier { name: String, line: usize, column: usize },
    #[error("evaluation error at t = {t}: {msg}")]
    Eval { t: f64, msg: String },
    #[error(transparent)]
    Scale(#[from] ScaleError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BinOp {
    Add,
    Sub,
    Mul,
    Div,
    Pow,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CmpOp {
    Lt,
    Le,
    Gt,
    Ge,
    Eq,
    Ne,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Func {
    Exp,
    Ln,
    Sinh,
    Cosh,
    Sqrt,
    Abs,
    Floor,
    Frac,
    Min,
    Max,
    Mu,
    Sigma,
    Rho,
    Rho2,
}

impl Func {
    fn name(self) -> &'static str {
        match self {
            Func::Exp => "exp",
            Func::Ln => "ln",
            Func::Sinh => "sinh",
            Func::Cosh => "cosh",
            Func::Sqrt => "sqrt",
            Func::Abs => "abs",
            Func::Floor => "floor",
            Func::Frac => "frac",
            Func::Min => "min",
            Func::Max => "max",
            Func::Mu => "mu",
            Func::Sigma => "sigma",
            Func::Rho => "rho",
            Func::Rho2 => "rho2",
        }
    }

    fn from_name(s: &str) -> Option<Func> {
        Some(match s {
            "exp" => Func::Exp,
            "ln" => Func::Ln,
            "sinh" => Func::Sinh,
            "cosh" => Func::Cosh,
            "sqrt" => Func::Sqrt,
            "abs" => Func::Abs,
            "floor" => Func::Floor,
            "frac" => Func::Frac,
            "min" => Func::Min,
            "max" => Func::Max,
            "mu" => Func::Mu,
            "sigma" => Func::Sigma,
            "rho" => Func::Rho,
            "rho2" => Func::Rho2,
            _ => return None,
        })
    }

    fn arity(self) -> usize {
        match self {
            Func::Min | Func::Max => 2,
            _ => 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Cond {
    Cmp(CmpOp, Box<Expr>, Box<Expr>),
    Scattered(Box<Expr>),
}

#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Num(f64),
    E,
    Pi,
    T,
    Neg(Box<Expr>),
    Bin(BinOp, Box<Expr>, Box<Expr>),
    Call(Func, Vec<Expr>),
    If(Box<Cond>, Box<Expr>, Box<Expr>),
}

/// Evaluation context. With `left_limit` set the expression is evaluated
/// as the left limit at `t`: the variable is nudged just below `t` and a
/// right endpoint of a dense interval is treated as a dense point.
#[derive(Debug, Clone, Copy)]
pub struct EvalCtx<'a> {
    pub ts: Option<&'a TimeScale>,
    pub left_limit: bool,
}

pub fn left_nudge(t: f64) -> f64 {
    t - 1e-12 * t.abs().max(1.0)
}

impl Expr {
    pub fn parse(src: &str) -> Result<Expr, ExprError> {
        let toks = lex(src)?;
        let mut p = Parser { toks, pos: 0 };
        let e = p.expr()?;
        let tok = p.peek();
        if tok.kind != Tok::End {
            return Err(p.syntax(tok, "unexpected trailing input"));
        }
        Ok(e)
    }

    pub fn num(v: f64) -> Expr {
        Expr::Num(v)
    }

    pub fn bin(op: BinOp, l: Expr, r: Expr) -> Expr {
        Expr::Bin(op, Box::new(l), Box::new(r))
    }

    /// Replaces every occurrence of `t` with `with`.
    pub fn substitute_t(&self, with: &Expr) -> Expr {
        let sub = |e: &Expr| Box::new(e.substitute_t(with));
        match self {
            Expr::T => with.clone(),
            Expr::Num(_) | Expr::E | Expr::Pi => self.clone(),
            Expr::Neg(a) => Expr::Neg(sub(a)),
            Expr::Bin(op, l, r) => Expr::Bin(*op, sub(l), sub(r)),
            Expr::Call(f, args) => Expr::Call(*f, args.iter().map(|a| a.substitute_t(with)).collect()),
            Expr::If(c, a, b) => {
                let c2 = match c.as_ref() {
                    Cond::Cmp(op, l, r) => Cond::Cmp(*op, sub(l), sub(r)),
                    Cond::Scattered(x) => Cond::Scattered(sub(x)),
                };
                Expr::If(Box::new(c2), sub(a), sub(b))
            }
        }
    }

    /// True when the expression queries the time scale.
    pub fn uses_scale(&self) -> bool {
        match self {
            Expr::Num(_) | Expr::E | Expr::Pi | Expr::T => false,
            Expr::Neg(a) => a.uses_scale(),
            Expr::Bin(_, l, r) => l.uses_scale() || r.uses_scale(),
            Expr::Call(f, args) => {
                matches!(f, Func::Mu | Func::Sigma | Func::Rho | Func::Rho2) || args.iter().any(Expr::uses_scale)
            }
            Expr::If(c, a, b) => {
                let cu = match c.as_ref() {
                    Cond::Cmp(_, l, r) => l.uses_scale() || r.uses_scale(),
                    Cond::Scattered(_) => true,
                };
                cu || a.uses_scale() || b.uses_scale()
            }
        }
    }

    pub fn eval(&self, t: f64, ts: &TimeScale) -> Result<f64, ExprError> {
        self.eval_in(t, EvalCtx { ts: Some(ts), left_limit: false })
    }

    pub fn eval_left(&self, t: f64, ts: &TimeScale) -> Result<f64, ExprError> {
        self.eval_in(left_nudge(t), EvalCtx { ts: Some(ts), left_limit: true })
    }

    /// Evaluation without a time scale; scale primitives fail.
    pub fn eval_free(&self, t: f64) -> Result<f64, ExprError> {
        self.eval_in(t, EvalCtx { ts: None, left_limit: false })
    }

    pub fn eval_in(&self, t: f64, ctx: EvalCtx<'_>) -> Result<f64, ExprError> {
        let fail = |msg: String| ExprError::Eval { t, msg };
        let v = match self {
            Expr::Num(v) => *v,
            Expr::E => std::f64::consts::E,
            Expr::Pi => std::f64::consts::PI,
            Expr::T => t,
            Expr::Neg(a) => -a.eval_in(t, ctx)?,
            Expr::Bin(op, l, r) => {
                let x = l.eval_in(t, ctx)?;
                let y = r.eval_in(t, ctx)?;
                match op {
                    BinOp::Add => x + y,
                    BinOp::Sub => x - y,
                    BinOp::Mul => x * y,
                    BinOp::Div => {
                        if y == 0.0 {
                            return Err(fail("division by zero".into()));
                        }
                        x / y
                    }
                    BinOp::Pow => {
                        let p = x.powf(y);
                        if p.is_nan() {
                            return Err(fail(format!("{x}^{y} is undefined")));
                        }
                        p
                    }
                }
            }
            Expr::Call(f, args) => {
                let x = args[0].eval_in(t, ctx)?;
                match f {
                    Func::Exp => x.exp(),
                    Func::Ln => {
                        if x <= 0.0 {
                            return Err(fail(format!("ln of non-positive value {x}")));
                        }
                        x.ln()
                    }
                    Func::Sinh => x.sinh(),
                    Func::Cosh => x.cosh(),
                    Func::Sqrt => {
                        if x < 0.0 {
                            return Err(fail(format!("sqrt of negative value {x}")));
                        }
                        x.sqrt()
                    }
                    Func::Abs => x.abs(),
                    Func::Floor => x.floor(),
                    Func::Frac => x - x.floor(),
                    Func::Min => x.min(args[1].eval_in(t, ctx)?),
                    Func::Max => x.max(args[1].eval_in(t, ctx)?),
                    Func::Mu | Func::Sigma | Func::Rho | Func::Rho2 => scale_op(*f, x, ctx)?,
                }
            }
            Expr::If(c, a, b) => {
                if c.holds(t, ctx)? {
                    a.eval_in(t, ctx)?
                } else {
                    b.eval_in(t, ctx)?
                }
            }
        };
        if !v.is_finite() {
            return Err(fail(format!("non-finite result in `{self}`")));
        }
        Ok(v)
    }
}

fn scale_op(f: Func, x: f64, ctx: EvalCtx<'_>) -> Result<f64, ExprError> {
    let ts = ctx.ts.ok_or(ExprError::Eval { t: x, msg: format!("{}() needs a time scale", f.name()) })?;
    if ctx.left_limit {
        if let Some(l) = ts.find(x) {
            if matches!(l.loc, Loc::Right | Loc::Interior) {
                return Ok(match f {
                    Func::Mu => 0.0,
                    _ => x,
                });
            }
        }
    }
    Ok(match f {
        Func::Mu => ts.mu(x)?,
        Func::Sigma => ts.sigma(x)?,
        Func::Rho => ts.rho(x)?,
        Func::Rho2 => ts.rho(ts.rho(x)?)?,
        _ => unreachable!("not a scale primitive"),
    })
}

impl Cond {
    fn holds(&self, t: f64, ctx: EvalCtx<'_>) -> Result<bool, ExprError> {
        match self {
            Cond::Cmp(op, l, r) => {
                let x = l.eval_in(t, ctx)?;
                let y = r.eval_in(t, ctx)?;
                Ok(match op {
                    CmpOp::Lt => x < y,
                    CmpOp::Le => x <= y,
                    CmpOp::Gt => x > y,
                    CmpOp::Ge => x >= y,
                    CmpOp::Eq => x == y,
                    CmpOp::Ne => x != y,
                })
            }
            Cond::Scattered(a) => {
                let x = a.eval_in(t, ctx)?;
                let ts = ctx.ts.ok_or(ExprError::Eval { t, msg: "scattered() needs a time scale".into() })?;
                if ctx.left_limit {
                    if let Some(l) = ts.find(x) {
                        if matches!(l.loc, Loc::Right | Loc::Interior) {
                            return Ok(false);
                        }
                    }
                }
                Ok(ts.is_right_scattered(x)?)
            }
        }
    }
}

// ---------------------------------------------------------------- printing

const P_SUM: u8 = 1;
const P_PRODUCT: u8 = 2;
const P_UNARY: u8 = 3;
const P_ATOM: u8 = 5;

fn prec(e: &Expr) -> u8 {
    match e {
        Expr::If(..) => 0,
        Expr::Bin(BinOp::Add | BinOp::Sub, ..) => P_SUM,
        Expr::Bin(BinOp::Mul | BinOp::Div, ..) => P_PRODUCT,
        Expr::Neg(_) => P_UNARY,
        Expr::Bin(BinOp::Pow, ..) => 4,
        Expr::Num(v) if *v < 0.0 || (*v == 0.0 && v.is_sign_negative()) => 0,
        _ => P_ATOM,
    }
}

fn write_at(f: &mut fmt::Formatter<'_>, e: &Expr, min: u8) -> fmt::Result {
    if prec(e) < min {
        write!(f, "(")?;
        write_expr(f, e)?;
        write!(f, ")")
    } else {
        write_expr(f, e)
    }
}

fn write_expr(f: &mut fmt::Formatter<'_>, e: &Expr) -> fmt::Result {
    match e {
        Expr::Num(v) => {
            if *v < 0.0 || (*v == 0.0 && v.is_sign_negative()) {
                write!(f, "-{:?}", -v)
            } else {
                write!(f, "{v:?}")
            }
        }
        Expr::E => write!(f, "e"),
        Expr::Pi => write!(f, "pi"),
        Expr::T => write!(f, "t"),
        Expr::Neg(a) => {
            write!(f, "-")?;
            if matches!(a.as_ref(), Expr::Num(_)) {
                write!(f, "(")?;
                write_expr(f, a)?;
                write!(f, ")")
            } else {
                write_at(f, a, P_UNARY)
            }
        }
        Expr::Bin(op, l, r) => {
            let (sym, lmin, rmin) = match op {
                BinOp::Add => (" + ", P_SUM, P_PRODUCT),
                BinOp::Sub => (" - ", P_SUM, P_PRODUCT),
                BinOp::Mul => (" * ", P_PRODUCT, P_UNARY),
                BinOp::Div => (" / ", P_PRODUCT, P_UNARY),
                BinOp::Pow => ("^", P_ATOM, P_UNARY),
            };
            write_at(f, l, lmin)?;
            write!(f, "{sym}")?;
            write_at(f, r, rmin)
        }
        Expr::Call(func, args) => {
            write!(f, "{}(", func.name())?;
            for (i, a) in args.iter().enumerate() {
                if i > 0 {
                    write!(f, ", ")?;
                }
                write_expr(f, a)?;
            }
            write!(f, ")")
        }
        Expr::If(c, a, b) => {
            write!(f, "if ")?;
            match c.as_ref() {
                Cond::Cmp(op, l, r) => {
                    let sym = match op {
                        CmpOp::Lt => "<",
                        CmpOp::Le => "<=",
                        CmpOp::Gt => ">",
                        CmpOp::Ge => ">=",
                        CmpOp::Eq => "==",
                        CmpOp::Ne => "!=",
                    };
                    write_at(f, l, P_SUM)?;
                    write!(f, " {sym} ")?;
                    write_at(f, r, P_SUM)?;
                }
                Cond::Scattered(x) => {
                    write!(f, "scattered(")?;
                    write_expr(f, x)?;
                    write!(f, ")")?;
                }
            }
            write!(f, " then ")?;
            write_expr(f, a)?;
            write!(f, " else ")?;
            write_expr(f, b)
        }
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write_expr(f, self)
    }
}

// ----------------------------------------------------------------- lexing

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Num(f64),
    Ident(String),
    Plus,
    Minus,
    Star,
    Slash,
    Caret,
    LParen,
    RParen,
    Comma,
    Cmp(CmpOp),
    End,
}

#[derive(Debug, Clone)]
struct Token {
    kind: Tok,
    line: usize,
    column: usize,
}

fn lex(src: &str) -> Result<Vec<Token>, ExprError> {
    let chars: Vec<char> = src.chars().collect();
    let mut out = Vec::new();
    let (mut line, mut col) = (1usize, 1usize);
    let mut i = 0;
    while i < chars.len() {
        let c = chars[i];
        let (l0, c0) = (line, col);
        if c == '\n' {
            line += 1;
            col = 1;
            i += 1;
            continue;
        }
        if c.is_whitespace() {
            i += 1;
            col += 1;
            continue;
        }
        let start = i;
        let kind = if c.is_ascii_digit() || (c == '.' && chars.get(i + 1).is_some_and(|d| d.is_ascii_digit())) {
            while i < chars.len() && (chars[i].is_ascii_digit() || chars[i] == '.') {
                i += 1;
            }
            if i < chars.len() && (chars[i] == 'e' || chars[i] == 'E') {
                let mut j = i + 1;
                if j < chars.len() && (chars[j] == '+' || chars[j] == '-') {
                    j += 1;
                }
                if j < chars.len() && chars[j].is_ascii_digit() {
                    while j < chars.len() && chars[j].is_ascii_digit() {
                        j += 1;
                    }
                    i = j;
                }
            }
            let text: String = chars[start..i].iter().collect();
            let v = text.parse::<f64>().map_err(|_| ExprError::Syntax {
                line: l0,
                column: c0,
                msg: format!("malformed number `{text}`"),
            })?;
            Tok::Num(v)
        } else if c.is_ascii_alphabetic() || c == '_' {
            while i < chars.len() && (chars[i].is_ascii_alphanumeric() || chars[i] == '_') {
                i += 1;
            }
            Tok::Ident(chars[start..i].iter().collect())
        } else {
            let next = chars.get(i + 1).copied();
            let (tok, len) = match (c, next) {
                ('<', Some('=')) => (Tok::Cmp(CmpOp::Le), 2),
                ('>', Some('=')) => (Tok::Cmp(CmpOp::Ge), 2),
                ('=', Some('=')) => (Tok::Cmp(CmpOp::Eq), 2),
                ('!', Some('=')) => (Tok::Cmp(CmpOp::Ne), 2),
                ('<', _) => (Tok::Cmp(CmpOp::Lt), 1),
                ('>', _) => (Tok::Cmp(CmpOp::Gt), 1),
                ('=', _) => (Tok::Cmp(CmpOp::Eq), 1),
                ('+', _) => (Tok::Plus, 1),
                ('-', _) => (Tok::Minus, 1),
                ('*', _) => (Tok::Star, 1),
                ('/', _) => (Tok::Slash, 1),
                ('^', _) => (Tok::Caret, 1),
                ('(', _) => (Tok::LParen, 1),
                (')', _) => (Tok::RParen, 1),
                (',', _) => (Tok::Comma, 1),
                _ => {
                    return Err(ExprError::Syntax { line: l0, column: c0, msg: format!("unexpected character `{c}`") })
                }
            };
            i += len;
            tok
        };
        col += i - start;
        out.push(Token { kind, line: l0, column: c0 });
    }
    out.push(Token { kind: Tok::End, line, column: col });
    Ok(out)
}

// ---------------------------------------------------------------- parsing

struct Parser {
    toks: Vec<Token>,
    pos: usize,
}

impl Parser {
    fn peek(&self) -> Token {
        self.toks[self.pos].clone()
    }

    fn bump(&mut self) -> Token {
        let t = self.peek();
        if self.pos + 1 < self.toks.len() {
            self.pos += 1;
        }
        t
    }

    fn syntax(&self, at: Token, msg: &str) -> ExprError {
        let found = match &at.kind {
            Tok::End => "end of input".to_string(),
            Tok::Num(v) => format!("number {v}"),
            Tok::Ident(s) => format!("`{s}`"),
            other => format!("{other:?}"),
        };
        ExprError::Syntax { line: at.line, column: at.column, msg: format!("{msg} (found {found})") }
    }

    fn is_keyword(&self, kw: &str) -> bool {
        matches!(&self.peek().kind, Tok::Ident(s) if s == kw)
    }

    fn expect(&mut self, want: Tok, what: &str) -> Result<(), ExprError> {
        let t = self.peek();
        if t.kind == want {
            self.bump();
            Ok(())
        } else {
            Err(self.syntax(t, &format!("expected {what}")))
        }
    }

    fn expect_keyword(&mut self, kw: &str) -> Result<(), ExprError> {
        if self.is_keyword(kw) {
            self.bump();
            Ok(())
        } else {
            let t = self.peek();
            Err(self.syntax(t, &format!("expected `{kw}`")))
        }
    }

    fn expr(&mut self) -> Result<Expr, ExprError> {
        if self.is_keyword("if") {
            self.bump();
            let c = self.cond()?;
            self.expect_keyword("then")?;
            let a = self.expr()?;
            self.expect_keyword("else")?;
            let b = self.expr()?;
            return Ok(Expr::If(Box::new(c), Box::new(a), Box::new(b)));
        }
        self.sum()
    }

    fn cond(&mut self) -> Result<Cond, ExprError> {
        if self.is_keyword("scattered") {
            self.bump();
            self.expect(Tok::LParen, "`(`")?;
            let x = self.expr()?;
            self.expect(Tok::RParen, "`)`")?;
            return Ok(Cond::Scattered(Box::new(x)));
        }
        let l = self.sum()?;
        let t = self.peek();
        let op = match t.kind {
            Tok::Cmp(op) => op,
            _ => return Err(self.syntax(t, "expected a comparison")),
        };
        self.bump();
        let r = self.sum()?;
        Ok(Cond::Cmp(op, Box::new(l), Box::new(r)))
    }

    fn sum(&mut self) -> Result<Expr, ExprError> {
        let mut l = self.product()?;
        loop {
            let op = match self.peek().kind {
                Tok::Plus => BinOp::Add,
                Tok::Minus => BinOp::Sub,
                _ => return Ok(l),
            };
            self.bump();
            let r = self.product()?;
            l = Expr::bin(op, l, r);
        }
    }

    fn product(&mut self) -> Result<Expr, ExprError> {
        let mut l = self.unary()?;
        loop {
            let op = match self.peek().kind {
                Tok::Star => BinOp::Mul,
                Tok::Slash => BinOp::Div,
                _ => return Ok(l),
            };
            self.bump();
            let r = self.unary()?;
            l = Expr::bin(op, l, r);
        }
    }

    fn unary(&mut self) -> Result<Expr, ExprError> {
        if self.peek().kind == Tok::Minus {
            self.bump();
            // a signed literal is a single number unless it is a power base
            if let Tok::Num(v) = self.peek().kind {
                if self.toks.get(self.pos + 1).is_none_or(|t| t.kind != Tok::Caret) {
                    self.bump();
                    return Ok(Expr::Num(-v));
                }
            }
            return Ok(Expr::Neg(Box::new(self.unary()?)));
        }
        self.power()
    }

    fn power(&mut self) -> Result<Expr, ExprError> {
        let base = self.atom()?;
        if self.peek().kind == Tok::Caret {
            self.bump();
            let exp = self.unary()?;
            return Ok(Expr::bin(BinOp::Pow, base, exp));
        }
        Ok(base)
    }

    fn atom(&mut self) -> Result<Expr, ExprError> {
        let t = self.bump();
        match t.kind {
            Tok::Num(v) => Ok(Expr::Num(v)),
            Tok::LParen => {
                let e = self.expr()?;
                self.expect(Tok::RParen, "`)`")?;
                Ok(e)
            }
            Tok::Ident(ref name) => match name.as_str() {
                "t" => Ok(Expr::T),
                "e" => Ok(Expr::E),
                "pi" => Ok(Expr::Pi),
                "if" | "then" | "else" | "scattered" => Err(self.syntax(t.clone(), "unexpected keyword")),
                _ => {
                    let Some(func) = Func::from_name(name) else {
                        return Err(ExprError::UnknownIdentifier {
                            name: name.clone(),
                            line: t.line,
                            column: t.column,
                        });
                    };
                    self.expect(Tok::LParen, "`(` after function name")?;
                    let mut args = vec![self.expr()?];
                    while self.peek().kind == Tok::Comma {
                        self.bump();
                        args.push(self.expr()?);
                    }
                    self.expect(Tok::RParen, "`)`")?;
                    if args.len() != func.arity() {
                        return Err(ExprError::Syntax {
                            line: t.line,
                            column: t.column,
                            msg: format!("{} takes {} argument(s), got {}", func.name(), func.arity(), args.len()),
                        });
                    }
                    Ok(Expr::Call(func, args))
                }
            },
            _ => Err(self.syntax(t, "expected a value")),
        }
    }
}
