//! A small arithmetic expression language for closed-form models.
//!
//! Grammar, loosest binding first:
//!
//! ```text
//! expr    := term (('+' | '-') term)*
//! term    := unary (('*' | '/') unary)*
//! unary   := '-' unary | power
//! power   := atom ('^' INTEGER)*
//! atom    := NUMBER | IDENT | FUNC '(' expr (',' expr)* ')' | '(' expr ')'
//! FUNC    := 'min' | 'max' | 'abs'
//! INTEGER := '-'? DIGITS
//! ```
//!
//! Binary operators associate to the left. Implicit multiplication is not
//! supported: write `x*y`, not `xy`.

use std::fmt;

use ndarray::ArrayView2;
use thiserror::Error;

use crate::error::Error;

const MAX_DEPTH: usize = 200;
// Left-associative chains nest one level per operator; bounding the token
// count bounds the depth of the finished tree.
const MAX_TOKENS: usize = 4096;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BinOp {
    Add,
    Sub,
    Mul,
    Div,
}

impl BinOp {
    fn symbol(self) -> char {
        match self {
            BinOp::Add => '+',
            BinOp::Sub => '-',
            BinOp::Mul => '*',
            BinOp::Div => '/',
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Func {
    Min,
    Max,
    Abs,
}

impl Func {
    fn name(self) -> &'static str {
        match self {
            Func::Min => "min",
            Func::Max => "max",
            Func::Abs => "abs",
        }
    }

    fn arity(self) -> usize {
        match self {
            Func::Min | Func::Max => 2,
            Func::Abs => 1,
        }
    }

    fn lookup(name: &str) -> Option<Self> {
        match name {
            "min" => Some(Func::Min),
            "max" => Some(Func::Max),
            "abs" => Some(Func::Abs),
            _ => None,
        }
    }
}

/// Expression tree. Variables are resolved to feature indices at parse time.
#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Num(f64),
    Var { index: usize, name: String },
    Neg(Box<Expr>),
    Binary(BinOp, Box<Expr>, Box<Expr>),
    Pow(Box<Expr>, i32),
    Call(Func, Vec<Expr>),
}

/// Fully parenthesized rendering that parses back to the same tree.
impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Expr::Num(v) => write!(f, "{v}"),
            Expr::Var { name, .. } => f.write_str(name),
            Expr::Neg(e) => write!(f, "(-{e})"),
            Expr::Binary(op, l, r) => write!(f, "({l} {} {r})", op.symbol()),
            Expr::Pow(b, k) => write!(f, "({b}^{k})"),
            Expr::Call(func, args) => {
                write!(f, "{}(", func.name())?;
                for (i, a) in args.iter().enumerate() {
                    if i > 0 {
                        f.write_str(", ")?;
                    }
                    write!(f, "{a}")?;
                }
                f.write_str(")")
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ParseErrorKind {
    UnexpectedChar(char),
    InvalidNumber(String),
    UnknownIdentifier(String),
    UnknownFunction(String),
    NonIntegerExponent,
    WrongArity { func: String, expected: usize, found: usize },
    Expected(&'static str),
    TrailingInput,
    TooDeep,
    TooLong,
}

impl fmt::Display for ParseErrorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::UnexpectedChar(c) => write!(f, "unexpected character `{c}`"),
            Self::InvalidNumber(s) => write!(f, "invalid number `{s}`"),
            Self::UnknownIdentifier(s) => write!(f, "unknown identifier `{s}`"),
            Self::UnknownFunction(s) => write!(f, "unknown function `{s}`"),
            Self::NonIntegerExponent => f.write_str("exponent must be an integer literal"),
            Self::WrongArity {
                func,
                expected,
                found,
            } => write!(f, "`{func}` takes {expected} argument(s), found {found}"),
            Self::Expected(what) => write!(f, "expected {what}"),
            Self::TrailingInput => f.write_str("unexpected trailing input"),
            Self::TooDeep => write!(f, "expression nests deeper than {MAX_DEPTH} levels"),
            Self::TooLong => write!(f, "expression has more than {MAX_TOKENS} tokens"),
        }
    }
}

/// A parse failure with the byte offset where it was detected.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("{kind} at position {position}")]
pub struct ParseError {
    pub kind: ParseErrorKind,
    pub position: usize,
}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Num(f64),
    Ident(String),
    Op(char),
    LParen,
    RParen,
    Comma,
    End,
}

fn tokenize(src: &str) -> Result<Vec<(Tok, usize)>, ParseError> {
    let bytes = src.as_bytes();
    let mut out = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        let c = bytes[i];
        let start = i;
        if c.is_ascii_whitespace() {
            i += 1;
            continue;
        }
        let tok = match c {
            b'+' | b'-' | b'*' | b'/' | b'^' => {
                i += 1;
                Tok::Op(c as char)
            }
            b'(' => {
                i += 1;
                Tok::LParen
            }
            b')' => {
                i += 1;
                Tok::RParen
            }
            b',' => {
                i += 1;
                Tok::Comma
            }
            b'0'..=b'9' | b'.' => {
                while i < bytes.len() && (bytes[i].is_ascii_digit() || bytes[i] == b'.') {
                    i += 1;
                }
                // Exponent part only when digits follow, so `2e` stays an error
                // rather than swallowing an identifier.
                if i < bytes.len() && (bytes[i] == b'e' || bytes[i] == b'E') {
                    let mut k = i + 1;
                    if k < bytes.len() && (bytes[k] == b'+' || bytes[k] == b'-') {
                        k += 1;
                    }
                    if k < bytes.len() && bytes[k].is_ascii_digit() {
                        while k < bytes.len() && bytes[k].is_ascii_digit() {
                            k += 1;
                        }
                        i = k;
                    }
                }
                let text = &src[start..i];
                let v: f64 = text.parse().map_err(|_| ParseError {
                    kind: ParseErrorKind::InvalidNumber(text.to_string()),
                    position: start,
                })?;
                Tok::Num(v)
            }
            c if c.is_ascii_alphabetic() || c == b'_' => {
                while i < bytes.len() && (bytes[i].is_ascii_alphanumeric() || bytes[i] == b'_') {
                    i += 1;
                }
                Tok::Ident(src[start..i].to_string())
            }
            _ => {
                let ch = src[start..].chars().next().unwrap_or('\u{fffd}');
                return Err(ParseError {
                    kind: ParseErrorKind::UnexpectedChar(ch),
                    position: start,
                });
            }
        };
        out.push((tok, start));
        if out.len() > MAX_TOKENS {
            return Err(ParseError {
                kind: ParseErrorKind::TooLong,
                position: start,
            });
        }
    }
    out.push((Tok::End, src.len()));
    Ok(out)
}

struct Parser<'a, S> {
    toks: Vec<(Tok, usize)>,
    pos: usize,
    depth: usize,
    features: &'a [S],
}

impl<S: AsRef<str>> Parser<'_, S> {
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

    fn err<T>(&self, kind: ParseErrorKind) -> Result<T, ParseError> {
        Err(ParseError {
            kind,
            position: self.offset(),
        })
    }

    fn enter(&mut self) -> Result<(), ParseError> {
        self.depth += 1;
        if self.depth > MAX_DEPTH {
            return self.err(ParseErrorKind::TooDeep);
        }
        Ok(())
    }

    fn expr(&mut self) -> Result<Expr, ParseError> {
        self.enter()?;
        let mut lhs = self.term()?;
        loop {
            let op = match self.peek() {
                Tok::Op('+') => BinOp::Add,
                Tok::Op('-') => BinOp::Sub,
                _ => break,
            };
            self.bump();
            let rhs = self.term()?;
            lhs = Expr::Binary(op, Box::new(lhs), Box::new(rhs));
        }
        self.depth -= 1;
        Ok(lhs)
    }

    fn term(&mut self) -> Result<Expr, ParseError> {
        let mut lhs = self.unary()?;
        loop {
            let op = match self.peek() {
                Tok::Op('*') => BinOp::Mul,
                Tok::Op('/') => BinOp::Div,
                _ => break,
            };
            self.bump();
            let rhs = self.unary()?;
            lhs = Expr::Binary(op, Box::new(lhs), Box::new(rhs));
        }
        Ok(lhs)
    }

    fn unary(&mut self) -> Result<Expr, ParseError> {
        if *self.peek() == Tok::Op('-') {
            self.bump();
            self.enter()?;
            let inner = self.unary()?;
            self.depth -= 1;
            return Ok(Expr::Neg(Box::new(inner)));
        }
        self.power()
    }

    fn power(&mut self) -> Result<Expr, ParseError> {
        let mut base = self.atom()?;
        while *self.peek() == Tok::Op('^') {
            self.bump();
            let negative = if *self.peek() == Tok::Op('-') {
                self.bump();
                true
            } else {
                false
            };
            let k = match self.peek() {
                Tok::Num(v) if v.fract() == 0.0 && v.abs() <= i32::MAX as f64 => *v as i32,
                _ => return self.err(ParseErrorKind::NonIntegerExponent),
            };
            self.bump();
            base = Expr::Pow(Box::new(base), if negative { -k } else { k });
        }
        Ok(base)
    }

    fn atom(&mut self) -> Result<Expr, ParseError> {
        let at = self.offset();
        match self.bump().0 {
            Tok::Num(v) => Ok(Expr::Num(v)),
            Tok::LParen => {
                let e = self.expr()?;
                self.expect_rparen()?;
                Ok(e)
            }
            Tok::Ident(name) if *self.peek() == Tok::LParen => {
                let Some(func) = Func::lookup(&name) else {
                    return Err(ParseError {
                        kind: ParseErrorKind::UnknownFunction(name),
                        position: at,
                    });
                };
                self.bump();
                let mut args = vec![self.expr()?];
                while *self.peek() == Tok::Comma {
                    self.bump();
                    args.push(self.expr()?);
                }
                self.expect_rparen()?;
                if args.len() != func.arity() {
                    return Err(ParseError {
                        kind: ParseErrorKind::WrongArity {
                            func: name,
                            expected: func.arity(),
                            found: args.len(),
                        },
                        position: at,
                    });
                }
                Ok(Expr::Call(func, args))
            }
            Tok::Ident(name) => match self.features.iter().position(|f| f.as_ref() == name) {
                Some(index) => Ok(Expr::Var { index, name }),
                None => Err(ParseError {
                    kind: ParseErrorKind::UnknownIdentifier(name),
                    position: at,
                }),
            },
            _ => Err(ParseError {
                kind: ParseErrorKind::Expected("a number, variable, function or `(`"),
                position: at,
            }),
        }
    }

    fn expect_rparen(&mut self) -> Result<(), ParseError> {
        if *self.peek() != Tok::RParen {
            return self.err(ParseErrorKind::Expected("`)`"));
        }
        self.bump();
        Ok(())
    }
}

/// Parses `source`, resolving variables against `feature_names`.
pub fn parse_expr<S: AsRef<str>>(source: &str, feature_names: &[S]) -> Result<Expr, ParseError> {
    let mut p = Parser {
        toks: tokenize(source)?,
        pos: 0,
        depth: 0,
        features: feature_names,
    };
    let e = p.expr()?;
    if *p.peek() != Tok::End {
        return p.err(ParseErrorKind::TrailingInput);
    }
    Ok(e)
}

#[derive(Debug, Clone, Copy)]
enum Op {
    Push(f64),
    Load(usize),
    Neg,
    Bin(BinOp),
    Pow(i32),
    Call(Func),
}

/// An expression flattened to postfix form for repeated batch evaluation.
#[derive(Debug, Clone)]
pub struct Program {
    ops: Vec<Op>,
    max_var: Option<usize>,
}

impl Program {
    pub fn compile(expr: &Expr) -> Self {
        fn emit(e: &Expr, ops: &mut Vec<Op>, max_var: &mut Option<usize>) {
            match e {
                Expr::Num(v) => ops.push(Op::Push(*v)),
                Expr::Var { index, .. } => {
                    *max_var = Some(max_var.map_or(*index, |m: usize| m.max(*index)));
                    ops.push(Op::Load(*index));
                }
                Expr::Neg(inner) => {
                    emit(inner, ops, max_var);
                    ops.push(Op::Neg);
                }
                Expr::Binary(op, l, r) => {
                    emit(l, ops, max_var);
                    emit(r, ops, max_var);
                    ops.push(Op::Bin(*op));
                }
                Expr::Pow(b, k) => {
                    emit(b, ops, max_var);
                    ops.push(Op::Pow(*k));
                }
                Expr::Call(func, args) => {
                    for a in args {
                        emit(a, ops, max_var);
                    }
                    ops.push(Op::Call(*func));
                }
            }
        }
        let mut ops = Vec::new();
        let mut max_var = None;
        emit(expr, &mut ops, &mut max_var);
        Self { ops, max_var }
    }

    fn eval_row(&self, row: &[f64], stack: &mut Vec<f64>) -> Result<f64, &'static str> {
        stack.clear();
        for op in &self.ops {
            match *op {
                Op::Push(v) => stack.push(v),
                Op::Load(j) => stack.push(row[j]),
                Op::Neg => {
                    let v = stack.pop().expect("well-formed program");
                    stack.push(-v);
                }
                Op::Bin(b) => {
                    let r = stack.pop().expect("well-formed program");
                    let l = stack.pop().expect("well-formed program");
                    stack.push(match b {
                        BinOp::Add => l + r,
                        BinOp::Sub => l - r,
                        BinOp::Mul => l * r,
                        BinOp::Div => {
                            if r == 0.0 {
                                return Err("division by zero");
                            }
                            l / r
                        }
                    });
                }
                Op::Pow(k) => {
                    let v = stack.pop().expect("well-formed program");
                    stack.push(v.powi(k));
                }
                Op::Call(f) => {
                    let v = match f {
                        Func::Abs => stack.pop().expect("well-formed program").abs(),
                        Func::Min | Func::Max => {
                            let r = stack.pop().expect("well-formed program");
                            let l = stack.pop().expect("well-formed program");
                            if f == Func::Min {
                                l.min(r)
                            } else {
                                l.max(r)
                            }
                        }
                    };
                    stack.push(v);
                }
            }
        }
        let v = stack.pop().expect("well-formed program");
        if !v.is_finite() {
            return Err("result is not finite");
        }
        Ok(v)
    }

    /// Evaluates every row of `batch`.
    pub fn eval(&self, batch: ArrayView2<'_, f64>) -> Result<Vec<f64>, Error> {
        if let Some(j) = self.max_var {
            if j >= batch.ncols() {
                return Err(Error::LengthMismatch {
                    what: "feature columns",
                    expected: j + 1,
                    actual: batch.ncols(),
                });
            }
        }
        let mut stack = Vec::with_capacity(16);
        let mut row_buf = vec![0.0; batch.ncols()];
        let mut out = Vec::with_capacity(batch.nrows());
        for (i, row) in batch.rows().into_iter().enumerate() {
            let row = match row.as_slice() {
                Some(s) => s,
                None => {
                    row_buf.iter_mut().zip(row.iter()).for_each(|(d, s)| *d = *s);
                    &row_buf
                }
            };
            let v = self.eval_row(row, &mut stack).map_err(|m| Error::Model {
                row: i,
                message: m.to_string(),
            })?;
            out.push(v);
        }
        Ok(out)
    }
}

/// Evaluates `expr` on every row of `batch`.
pub fn eval_expr(expr: &Expr, batch: ArrayView2<'_, f64>) -> Result<Vec<f64>, Error> {
    Program::compile(expr).eval(batch)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::{array, Array2};
    use proptest::prelude::*;

    const XYZ: [&str; 3] = ["x", "y", "z"];

    /// Tree-walking interpreter kept independent of the postfix evaluator.
    fn interpret(e: &Expr, row: &[f64]) -> Option<f64> {
        Some(match e {
            Expr::Num(v) => *v,
            Expr::Var { index, .. } => row[*index],
            Expr::Neg(i) => -interpret(i, row)?,
            Expr::Binary(op, l, r) => {
                let (l, r) = (interpret(l, row)?, interpret(r, row)?);
                match op {
                    BinOp::Add => l + r,
                    BinOp::Sub => l - r,
                    BinOp::Mul => l * r,
                    BinOp::Div if r == 0.0 => return None,
                    BinOp::Div => l / r,
                }
            }
            Expr::Pow(b, k) => interpret(b, row)?.powi(*k),
            Expr::Call(f, args) => {
                let vals: Option<Vec<f64>> = args.iter().map(|a| interpret(a, row)).collect();
                let vals = vals?;
                match f {
                    Func::Min => vals[0].min(vals[1]),
                    Func::Max => vals[0].max(vals[1]),
                    Func::Abs => vals[0].abs(),
                }
            }
        })
    }

    #[test]
    fn joint_drift_table_predictions() {
        let e = parse_expr("x*z + y + z", &XYZ).unwrap();
        let reference = array![[1.0, 1.0, 1.0], [2.0, 2.0, 2.0], [3.0, 3.0, 3.0]];
        let target = array![[3.0, 1.0, 2.0], [1.0, 2.0, 3.0], [2.0, 3.0, 1.0]];
        assert_eq!(eval_expr(&e, reference.view()).unwrap(), [3.0, 8.0, 15.0]);
        assert_eq!(eval_expr(&e, target.view()).unwrap(), [9.0, 8.0, 6.0]);
        assert!(eval_expr(&e, Array2::zeros((0, 3)).view()).unwrap().is_empty());
    }

    #[test]
    fn precedence_and_associativity() {
        let e = parse_expr("x*y - z^2", &XYZ).unwrap();
        assert_eq!(eval_expr(&e, array![[1.0, 2.0, 3.0]].view()).unwrap(), [-7.0]);
        // Power binds tighter than unary minus.
        let e = parse_expr("-z^2", &XYZ).unwrap();
        assert_eq!(eval_expr(&e, array![[0.0, 0.0, 3.0]].view()).unwrap(), [-9.0]);
        let e = parse_expr("x - y - z", &XYZ).unwrap();
        assert_eq!(eval_expr(&e, array![[1.0, 2.0, 3.0]].view()).unwrap(), [-4.0]);
        let e = parse_expr("z / y / x", &XYZ).unwrap();
        assert_eq!(eval_expr(&e, array![[1.0, 2.0, 8.0]].view()).unwrap(), [4.0]);
        let e = parse_expr("min(x, y) + abs(x - y) + max(1e1, z)", &XYZ).unwrap();
        assert_eq!(eval_expr(&e, array![[1.0, 2.0, 3.0]].view()).unwrap(), [12.0]);
    }

    #[test]
    fn errors_carry_positions() {
        let err = parse_expr("x + q", &XYZ).unwrap_err();
        assert_eq!(err.kind, ParseErrorKind::UnknownIdentifier("q".into()));
        assert_eq!(err.position, 4);

        let err = parse_expr("x^2.5", &XYZ).unwrap_err();
        assert_eq!(err.kind, ParseErrorKind::NonIntegerExponent);
        assert_eq!(err.position, 2);
        assert_eq!(
            parse_expr("x^y", &XYZ).unwrap_err().kind,
            ParseErrorKind::NonIntegerExponent
        );
        assert!(parse_expr("x +", &XYZ).is_err());
        assert!(parse_expr("(x", &XYZ).is_err());
        assert!(parse_expr("x y", &XYZ).is_err());
        assert!(parse_expr("min(x)", &XYZ).is_err());
        assert!(parse_expr("sin(x)", &XYZ).is_err());
        assert_eq!(
            parse_expr(&"(".repeat(1_000), &XYZ).unwrap_err().kind,
            ParseErrorKind::TooDeep
        );
        assert_eq!(
            parse_expr(&"-".repeat(1_000), &XYZ).unwrap_err().kind,
            ParseErrorKind::TooDeep
        );
    }

    #[test]
    fn division_by_zero_reports_row() {
        let e = parse_expr("x / y", &XYZ).unwrap();
        let err = eval_expr(&e, array![[1.0, 1.0, 0.0], [1.0, 0.0, 0.0]].view()).unwrap_err();
        assert!(matches!(err, Error::Model { row: 1, .. }));
        let e = parse_expr("x ^ -1", &XYZ).unwrap();
        assert!(eval_expr(&e, array![[0.0, 1.0, 1.0]].view()).is_err());
    }

    fn arb_expr() -> impl Strategy<Value = Expr> {
        let leaf = prop_oneof![
            (-10.0f64..10.0).prop_map(|v| Expr::Num((v * 100.0).round() / 100.0)),
            (0usize..3).prop_map(|i| Expr::Var {
                index: i,
                name: XYZ[i].to_string()
            }),
        ];
        leaf.prop_recursive(6, 64, 4, |inner| {
            prop_oneof![
                inner.clone().prop_map(|e| Expr::Neg(Box::new(e))),
                (
                    prop_oneof![
                        Just(BinOp::Add),
                        Just(BinOp::Sub),
                        Just(BinOp::Mul),
                        Just(BinOp::Div)
                    ],
                    inner.clone(),
                    inner.clone()
                )
                    .prop_map(|(op, l, r)| Expr::Binary(op, Box::new(l), Box::new(r))),
                (inner.clone(), 0i32..4).prop_map(|(b, k)| Expr::Pow(Box::new(b), k)),
                (inner.clone(), inner.clone())
                    .prop_map(|(a, b)| Expr::Call(Func::Min, vec![a, b])),
                (inner.clone(), inner.clone())
                    .prop_map(|(a, b)| Expr::Call(Func::Max, vec![a, b])),
                inner.prop_map(|a| Expr::Call(Func::Abs, vec![a])),
            ]
        })
    }

    /// Literals are non-negative in parsed trees; `Neg(Num)` prints and
    /// reparses the same way, but a negative `Num` would not.
    fn normalize(e: Expr) -> Expr {
        match e {
            Expr::Num(v) if v < 0.0 || (v == 0.0 && v.is_sign_negative()) => {
                Expr::Neg(Box::new(Expr::Num(-v)))
            }
            Expr::Neg(i) => Expr::Neg(Box::new(normalize(*i))),
            Expr::Binary(op, l, r) => {
                Expr::Binary(op, Box::new(normalize(*l)), Box::new(normalize(*r)))
            }
            Expr::Pow(b, k) => Expr::Pow(Box::new(normalize(*b)), k),
            Expr::Call(f, a) => Expr::Call(f, a.into_iter().map(normalize).collect()),
            other => other,
        }
    }

    proptest! {
        #[test]
        fn print_then_parse_is_identity(e in arb_expr()) {
            let e = normalize(e);
            let printed = e.to_string();
            let back = parse_expr(&printed, &XYZ).unwrap();
            prop_assert_eq!(back, e);
        }

        #[test]
        fn postfix_agrees_with_tree_walk(
            e in arb_expr(),
            row in prop::collection::vec(-5.0f64..5.0, 3),
        ) {
            let batch = Array2::from_shape_vec((1, 3), row.clone()).unwrap();
            match (interpret(&e, &row), eval_expr(&e, batch.view())) {
                (Some(expected), Ok(got)) => {
                    let tol = 1e-12 * (1.0 + expected.abs());
                    prop_assert!((got[0] - expected).abs() <= tol || got[0] == expected);
                }
                (Some(expected), Err(_)) => prop_assert!(!expected.is_finite()),
                (None, Err(_)) => {}
                (None, Ok(v)) => prop_assert!(false, "expected division error, got {:?}", v),
            }
        }

        #[test]
        fn parser_never_panics(s in "\\PC{0,40}") {
            let _ = parse_expr(&s, &XYZ);
        }

        #[test]
        fn parser_never_panics_on_grammar_soup(
            s in "[xyz0-9 .eE+*/^(),-]{0,40}|(min|max|abs)\\([xyz, ]{0,6}\\)"
        ) {
            let _ = parse_expr(&s, &XYZ);
        }
    }
}
