//! Scalar expressions over coordinates and velocities.
//!
//! Expressions are parsed against a [`SymbolTable`] that maps names to
//! evaluation slots. Several names may share one slot (aliases), which is
//! how `q_1` and `x` can both denote the first coordinate.
//!
//! Derivatives are symbolic: [`Expr::diff`] returns a new expression tree
//! with light constant folding, so every derivative used downstream is exact
//! up to floating-point rounding.

mod diff;
mod parse;

use std::collections::HashMap;
use std::fmt::Write as _;

use crate::error::{Error, Result};

pub use parse::parse;

pub(crate) use diff::{add, mul, sub};

/// An expression together with its symbolic gradient over every slot.
#[derive(Debug, Clone, PartialEq)]
pub struct Scalar {
    expr: Expr,
    grad: Vec<Expr>,
}

impl Scalar {
    pub fn new(expr: Expr, slots: usize) -> Scalar {
        let grad = (0..slots).map(|s| expr.diff(s)).collect();
        Scalar { expr, grad }
    }

    pub fn constant(value: f64, slots: usize) -> Scalar {
        Scalar::new(Expr::constant(value), slots)
    }

    pub fn expr(&self) -> &Expr {
        &self.expr
    }

    pub fn eval(&self, values: &[f64]) -> Result<f64> {
        self.expr.eval(values)
    }

    /// Partial derivative with respect to one slot.
    pub fn partial(&self, slot: usize, values: &[f64]) -> Result<f64> {
        self.grad[slot].eval(values)
    }

    /// Full gradient; constant-zero partials are skipped without evaluation.
    pub fn gradient(&self, values: &[f64]) -> Result<Vec<f64>> {
        self.grad
            .iter()
            .map(|g| if g.is_zero() { Ok(0.0) } else { g.eval(values) })
            .collect()
    }

    /// True if the expression reads any slot in `slots`.
    pub fn uses_any(&self, slots: std::ops::Range<usize>) -> bool {
        self.expr.uses_any(slots)
    }
}

/// Names visible to the parser, each bound to an evaluation slot.
#[derive(Debug, Clone, PartialEq)]
pub struct SymbolTable {
    names: HashMap<String, usize>,
    primary: Vec<String>,
}

impl SymbolTable {
    /// One slot per name, in order. Names must be unique and the list nonempty.
    pub fn new<I, S>(names: I) -> Result<Self>
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let mut table = SymbolTable {
            names: HashMap::new(),
            primary: Vec::new(),
        };
        for name in names {
            let name = name.into();
            validate_identifier(&name)?;
            if table.names.contains_key(&name) {
                return Err(Error::Symbol(format!("duplicate symbol `{name}`")));
            }
            table.names.insert(name.clone(), table.primary.len());
            table.primary.push(name);
        }
        if table.primary.is_empty() {
            return Err(Error::Symbol("symbol table is empty".into()));
        }
        Ok(table)
    }

    /// Table for an `n`-dimensional chart: slots `0..n` are `q_1..q_n`,
    /// slots `n..2n` are `u_1..u_n`. Each coordinate name becomes an alias
    /// of its `q` slot, and `u_<name>` (or `u_<rest>` for a name `q_<rest>`)
    /// an alias of the matching velocity.
    pub fn for_coordinates<S: AsRef<str>>(coordinates: &[S]) -> Result<Self> {
        let n = coordinates.len();
        let names = (1..=n)
            .map(|i| format!("q_{i}"))
            .chain((1..=n).map(|i| format!("u_{i}")));
        let mut table = SymbolTable::new(names)?;
        for (i, c) in coordinates.iter().enumerate() {
            let c = c.as_ref();
            table.add_alias(c, i)?;
            let velocity = match c.strip_prefix("q_") {
                Some(rest) => format!("u_{rest}"),
                None => format!("u_{c}"),
            };
            table.add_alias(velocity, n + i)?;
        }
        Ok(table)
    }

    /// Makes `alias` resolve to an existing slot.
    pub fn add_alias(&mut self, alias: impl Into<String>, slot: usize) -> Result<()> {
        let alias = alias.into();
        validate_identifier(&alias)?;
        if slot >= self.primary.len() {
            return Err(Error::Symbol(format!("alias `{alias}` targets missing slot {slot}")));
        }
        match self.names.get(&alias) {
            Some(&s) if s == slot => Ok(()),
            Some(_) => Err(Error::Symbol(format!("duplicate symbol `{alias}`"))),
            None => {
                self.names.insert(alias, slot);
                Ok(())
            }
        }
    }

    pub fn lookup(&self, name: &str) -> Option<usize> {
        self.names.get(name).copied()
    }

    pub fn slot_count(&self) -> usize {
        self.primary.len()
    }

    /// The name a slot was declared with (used when printing).
    pub fn name_of(&self, slot: usize) -> &str {
        &self.primary[slot]
    }
}

fn validate_identifier(name: &str) -> Result<()> {
    let mut chars = name.chars();
    let ok = matches!(chars.next(), Some(c) if c.is_ascii_alphabetic() || c == '_')
        && chars.all(|c| c.is_ascii_alphanumeric() || c == '_');
    if !ok || parse::is_function_name(name) {
        return Err(Error::Symbol(format!("`{name}` is not a valid variable name")));
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum UnaryOp {
    Neg,
    Sin,
    Cos,
    Tan,
    Exp,
    Log,
    Sqrt,
    Abs,
}

impl UnaryOp {
    pub fn name(self) -> &'static str {
        match self {
            UnaryOp::Neg => "-",
            UnaryOp::Sin => "sin",
            UnaryOp::Cos => "cos",
            UnaryOp::Tan => "tan",
            UnaryOp::Exp => "exp",
            UnaryOp::Log => "log",
            UnaryOp::Sqrt => "sqrt",
            UnaryOp::Abs => "abs",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BinaryOp {
    Add,
    Sub,
    Mul,
    Div,
    Pow,
}

impl BinaryOp {
    fn symbol(self) -> char {
        match self {
            BinaryOp::Add => '+',
            BinaryOp::Sub => '-',
            BinaryOp::Mul => '*',
            BinaryOp::Div => '/',
            BinaryOp::Pow => '^',
        }
    }
}

#[derive(Debug, Clone)]
pub enum Node {
    Const(f64),
    Var(usize),
    Unary(UnaryOp, Box<Expr>),
    Binary(BinaryOp, Box<Expr>, Box<Expr>),
}

/// An expression tree. `pos` is the byte offset of the source token the
/// node came from; derived nodes inherit the offset of their origin.
#[derive(Debug, Clone)]
pub struct Expr {
    pub node: Node,
    pub pos: usize,
}

// Structural equality; source offsets are ignored.
impl PartialEq for Expr {
    fn eq(&self, other: &Self) -> bool {
        match (&self.node, &other.node) {
            (Node::Const(a), Node::Const(b)) => a.to_bits() == b.to_bits(),
            (Node::Var(a), Node::Var(b)) => a == b,
            (Node::Unary(o1, a), Node::Unary(o2, b)) => o1 == o2 && a == b,
            (Node::Binary(o1, a1, b1), Node::Binary(o2, a2, b2)) => o1 == o2 && a1 == a2 && b1 == b2,
            _ => false,
        }
    }
}

impl Expr {
    pub fn constant(value: f64) -> Expr {
        Expr {
            node: Node::Const(value),
            pos: 0,
        }
    }

    pub fn var(slot: usize) -> Expr {
        Expr {
            node: Node::Var(slot),
            pos: 0,
        }
    }

    pub fn unary(op: UnaryOp, arg: Expr) -> Expr {
        let pos = arg.pos;
        Expr {
            node: Node::Unary(op, Box::new(arg)),
            pos,
        }
    }

    pub fn binary(op: BinaryOp, lhs: Expr, rhs: Expr) -> Expr {
        let pos = lhs.pos;
        Expr {
            node: Node::Binary(op, Box::new(lhs), Box::new(rhs)),
            pos,
        }
    }

    pub fn as_const(&self) -> Option<f64> {
        match self.node {
            Node::Const(c) => Some(c),
            _ => None,
        }
    }

    pub fn is_zero(&self) -> bool {
        self.as_const() == Some(0.0)
    }

    /// True if any variable slot in `slots` occurs in the tree.
    pub fn uses_any(&self, slots: std::ops::Range<usize>) -> bool {
        match &self.node {
            Node::Const(_) => false,
            Node::Var(s) => slots.contains(s),
            Node::Unary(_, a) => a.uses_any(slots),
            Node::Binary(_, a, b) => a.uses_any(slots.clone()) || b.uses_any(slots),
        }
    }

    /// Largest slot index referenced, if any.
    pub fn max_slot(&self) -> Option<usize> {
        match &self.node {
            Node::Const(_) => None,
            Node::Var(s) => Some(*s),
            Node::Unary(_, a) => a.max_slot(),
            Node::Binary(_, a, b) => a.max_slot().max(b.max_slot()),
        }
    }

    /// Evaluates with `values[slot]` bound to each variable.
    ///
    /// Non-finite intermediate values are reported as domain errors at the
    /// offending node.
    pub fn eval(&self, values: &[f64]) -> Result<f64> {
        let v = match &self.node {
            Node::Const(c) => *c,
            Node::Var(s) => *values.get(*s).ok_or(Error::UnboundVariable { slot: *s })?,
            Node::Unary(op, a) => {
                let x = a.eval(values)?;
                match op {
                    UnaryOp::Neg => -x,
                    UnaryOp::Sin => x.sin(),
                    UnaryOp::Cos => x.cos(),
                    UnaryOp::Tan => x.tan(),
                    UnaryOp::Exp => x.exp(),
                    UnaryOp::Log => {
                        if x <= 0.0 {
                            return Err(self.domain(format!("log of non-positive value {x}")));
                        }
                        x.ln()
                    }
                    UnaryOp::Sqrt => {
                        if x < 0.0 {
                            return Err(self.domain(format!("sqrt of negative value {x}")));
                        }
                        x.sqrt()
                    }
                    UnaryOp::Abs => x.abs(),
                }
            }
            Node::Binary(op, a, b) => {
                let x = a.eval(values)?;
                let y = b.eval(values)?;
                match op {
                    BinaryOp::Add => x + y,
                    BinaryOp::Sub => x - y,
                    BinaryOp::Mul => x * y,
                    BinaryOp::Div => {
                        if y == 0.0 {
                            return Err(self.domain("division by zero".into()));
                        }
                        x / y
                    }
                    BinaryOp::Pow => pow(x, y),
                }
            }
        };
        if v.is_finite() {
            Ok(v)
        } else {
            Err(self.domain(format!("non-finite result {v}")))
        }
    }

    fn domain(&self, message: String) -> Error {
        Error::Domain {
            offset: self.pos,
            message,
        }
    }

    /// Exact first or second derivative with respect to the listed slots,
    /// evaluated at `values`.
    pub fn derivative(&self, slots: &[usize], values: &[f64]) -> Result<f64> {
        match slots {
            [a] => self.diff(*a).eval(values),
            [a, b] => self.diff(*a).diff(*b).eval(values),
            _ => Err(Error::Precondition(format!(
                "derivative order must be 1 or 2, got {}",
                slots.len()
            ))),
        }
    }

    /// Renders the tree as parseable source text.
    pub fn to_source(&self, symbols: &SymbolTable) -> String {
        let mut out = String::new();
        self.write_source(symbols, &mut out, 0);
        out
    }

    // Precedence levels: 1 = additive, 2 = multiplicative, 3 = unary minus,
    // 4 = power, 5 = atom.
    fn precedence(&self) -> u8 {
        match &self.node {
            Node::Const(c) if *c < 0.0 || c.is_sign_negative() => 3,
            Node::Const(_) | Node::Var(_) => 5,
            Node::Unary(UnaryOp::Neg, _) => 3,
            Node::Unary(_, _) => 5,
            Node::Binary(BinaryOp::Add | BinaryOp::Sub, _, _) => 1,
            Node::Binary(BinaryOp::Mul | BinaryOp::Div, _, _) => 2,
            Node::Binary(BinaryOp::Pow, _, _) => 4,
        }
    }

    fn write_source(&self, symbols: &SymbolTable, out: &mut String, min_prec: u8) {
        let prec = self.precedence();
        let wrap = prec < min_prec;
        if wrap {
            out.push('(');
        }
        match &self.node {
            Node::Const(c) => {
                if c.is_sign_negative() {
                    let _ = write!(out, "-{}", fmt_number(-c));
                } else {
                    out.push_str(&fmt_number(*c));
                }
            }
            Node::Var(s) => out.push_str(symbols.name_of(*s)),
            Node::Unary(UnaryOp::Neg, a) => {
                out.push('-');
                a.write_source(symbols, out, 3);
            }
            Node::Unary(op, a) => {
                out.push_str(op.name());
                out.push('(');
                a.write_source(symbols, out, 0);
                out.push(')');
            }
            Node::Binary(op, a, b) => {
                let (lmin, rmin) = match op {
                    BinaryOp::Add | BinaryOp::Sub => (1, 2),
                    BinaryOp::Mul | BinaryOp::Div => (2, 3),
                    // right-associative; the left operand must bind tighter
                    BinaryOp::Pow => (5, 3),
                };
                a.write_source(symbols, out, lmin);
                let _ = write!(out, " {} ", op.symbol());
                b.write_source(symbols, out, rmin);
            }
        }
        if wrap {
            out.push(')');
        }
    }
}

fn fmt_number(c: f64) -> String {
    // `{:?}` is the shortest representation that round-trips.
    format!("{c:?}")
}

fn pow(x: f64, y: f64) -> f64 {
    if y.fract() == 0.0 && y.abs() <= i32::MAX as f64 {
        x.powi(y as i32)
    } else {
        x.powf(y)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn table() -> SymbolTable {
        SymbolTable::new(["q_x", "q_y", "u_x", "u_y"]).unwrap()
    }

    #[test]
    fn evaluates_sum_of_squares() {
        let t = table();
        let e = parse("u_x^2 + u_y^2", &t).unwrap();
        assert_eq!(e.eval(&[0.0, 0.0, 3.0, 4.0]).unwrap(), 25.0);
    }

    #[test]
    fn product_with_zero_annihilates() {
        let t = table();
        let e = parse("q_y*u_x", &t).unwrap();
        for u in [-3.0, 0.0, 7.5] {
            assert_eq!(e.eval(&[1.0, 0.0, u, 0.0]).unwrap(), 0.0);
        }
    }

    #[test]
    fn division_by_zero_reports_node() {
        let t = table();
        let e = parse("1 / q_x", &t).unwrap();
        match e.eval(&[0.0, 0.0, 0.0, 0.0]) {
            Err(Error::Domain { offset, .. }) => assert_eq!(offset, 2),
            other => panic!("expected domain error, got {other:?}"),
        }
    }

    #[test]
    fn log_and_sqrt_domains() {
        let t = table();
        assert!(matches!(
            parse("log(q_x)", &t).unwrap().eval(&[0.0; 4]),
            Err(Error::Domain { .. })
        ));
        assert!(matches!(
            parse("sqrt(q_x)", &t).unwrap().eval(&[-1.0, 0.0, 0.0, 0.0]),
            Err(Error::Domain { .. })
        ));
    }

    #[test]
    fn simple_derivatives() {
        let t = table();
        let sq = parse("u_x^2", &t).unwrap();
        assert_eq!(sq.derivative(&[2], &[0.0, 0.0, 3.0, 0.0]).unwrap(), 6.0);
        let prod = parse("u_x*u_y", &t).unwrap();
        for p in [[0.0, 0.0, 1.0, 2.0], [5.0, -1.0, -3.0, 0.5]] {
            assert_eq!(prod.derivative(&[2, 3], &p).unwrap(), 1.0);
        }
    }

    #[test]
    fn sin_derivative_matches_central_difference() {
        let t = table();
        let e = parse("sin(q_y)", &t).unwrap();
        let exact = e.derivative(&[1], &[0.0; 4]).unwrap();
        assert_eq!(exact, 1.0);
        let h = 1e-6;
        let fd = (e.eval(&[0.0, h, 0.0, 0.0]).unwrap() - e.eval(&[0.0, -h, 0.0, 0.0]).unwrap()) / (2.0 * h);
        assert!((exact - fd).abs() <= 1e-9 * exact.abs());
    }

    #[test]
    fn aliases_share_slots() {
        let mut t = SymbolTable::new(["q_1", "u_1"]).unwrap();
        t.add_alias("x", 0).unwrap();
        let e = parse("x + q_1", &t).unwrap();
        assert_eq!(e.eval(&[2.0, 0.0]).unwrap(), 4.0);
        assert!(t.add_alias("u_1", 0).is_err());
    }

    #[test]
    fn coordinate_tables() {
        let t = SymbolTable::for_coordinates(&["x", "y", "theta"]).unwrap();
        assert_eq!(t.lookup("theta"), Some(2));
        assert_eq!(t.lookup("q_3"), Some(2));
        assert_eq!(t.lookup("u_theta"), Some(5));
        assert_eq!(t.lookup("u_1"), Some(3));
        let c = SymbolTable::for_coordinates(&["q_1", "q_2"]).unwrap();
        assert_eq!(c.lookup("u_2"), Some(3));
        assert!(SymbolTable::for_coordinates(&["x", "x"]).is_err());
        assert!(SymbolTable::for_coordinates(&["u_1", "b"]).is_err());
    }

    #[test]
    fn rejects_bad_tables() {
        assert!(SymbolTable::new(Vec::<String>::new()).is_err());
        assert!(SymbolTable::new(["a", "a"]).is_err());
        assert!(SymbolTable::new(["sin"]).is_err());
    }

    #[test]
    fn printing_respects_precedence() {
        let t = table();
        for src in [
            "(q_x + q_y) * u_x",
            "q_x - (q_y - u_x)",
            "q_x ^ q_y ^ 2",
            "(q_x ^ q_y) ^ 2",
            "-q_x ^ 2",
            "(-q_x) ^ 2",
            "q_x / (q_y * u_x)",
        ] {
            let e = parse(src, &t).unwrap();
            let again = parse(&e.to_source(&t), &t).unwrap();
            assert_eq!(e, again, "{src} -> {}", e.to_source(&t));
        }
    }
}
