//! Symbolic differentiation with constant folding.

use super::{pow, BinaryOp, Expr, Node, UnaryOp};

impl Expr {
    /// Partial derivative with respect to the variable in `slot`.
    pub fn diff(&self, slot: usize) -> Expr {
        let pos = self.pos;
        let d = match &self.node {
            Node::Const(_) => Expr::constant(0.0),
            Node::Var(s) => Expr::constant(if *s == slot { 1.0 } else { 0.0 }),
            Node::Unary(op, a) => {
                let da = a.diff(slot);
                if da.is_zero() {
                    return at(Expr::constant(0.0), pos);
                }
                let a = (**a).clone();
                let outer = match op {
                    UnaryOp::Neg => return at(neg(da), pos),
                    UnaryOp::Sin => un(UnaryOp::Cos, a),
                    UnaryOp::Cos => neg(un(UnaryOp::Sin, a)),
                    // 1 + tan(a)^2
                    UnaryOp::Tan => add(Expr::constant(1.0), powc(un(UnaryOp::Tan, a), 2.0)),
                    UnaryOp::Exp => un(UnaryOp::Exp, a),
                    UnaryOp::Log => div(Expr::constant(1.0), a),
                    UnaryOp::Sqrt => div(Expr::constant(0.5), un(UnaryOp::Sqrt, a)),
                    UnaryOp::Abs => div(a.clone(), un(UnaryOp::Abs, a)),
                };
                mul(outer, da)
            }
            Node::Binary(op, a, b) => {
                let da = a.diff(slot);
                let db = b.diff(slot);
                let (a, b) = ((**a).clone(), (**b).clone());
                match op {
                    BinaryOp::Add => add(da, db),
                    BinaryOp::Sub => sub(da, db),
                    BinaryOp::Mul => add(mul(da, b), mul(a, db)),
                    // (da*b - a*db) / b^2
                    BinaryOp::Div => {
                        if db.is_zero() {
                            div(da, b)
                        } else {
                            div(sub(mul(da, b.clone()), mul(a, db)), powc(b, 2.0))
                        }
                    }
                    BinaryOp::Pow => {
                        if let Some(k) = b.as_const() {
                            // k * a^(k-1) * da
                            mul(mul(Expr::constant(k), powc(a, k - 1.0)), da)
                        } else {
                            // a^b * (db*log(a) + b*da/a)
                            let this = bin(BinaryOp::Pow, a.clone(), b.clone());
                            let t1 = mul(db, un(UnaryOp::Log, a.clone()));
                            let t2 = div(mul(b, da), a);
                            mul(this, add(t1, t2))
                        }
                    }
                }
            }
        };
        at(d, pos)
    }
}

fn at(mut e: Expr, pos: usize) -> Expr {
    if matches!(e.node, Node::Const(_)) {
        e.pos = pos;
    }
    if e.pos == 0 {
        e.pos = pos;
    }
    e
}

fn un(op: UnaryOp, a: Expr) -> Expr {
    Expr::unary(op, a)
}

fn bin(op: BinaryOp, a: Expr, b: Expr) -> Expr {
    if let (Some(x), Some(y)) = (a.as_const(), b.as_const()) {
        let v = match op {
            BinaryOp::Add => x + y,
            BinaryOp::Sub => x - y,
            BinaryOp::Mul => x * y,
            BinaryOp::Div => x / y,
            BinaryOp::Pow => pow(x, y),
        };
        if v.is_finite() {
            return Expr::constant(v);
        }
    }
    Expr::binary(op, a, b)
}

pub(crate) fn neg(a: Expr) -> Expr {
    match a.as_const() {
        Some(c) => Expr::constant(-c),
        None => match a.node {
            Node::Unary(UnaryOp::Neg, inner) => *inner,
            _ => un(UnaryOp::Neg, a),
        },
    }
}

pub(crate) fn add(a: Expr, b: Expr) -> Expr {
    if a.is_zero() {
        return b;
    }
    if b.is_zero() {
        return a;
    }
    bin(BinaryOp::Add, a, b)
}

pub(crate) fn sub(a: Expr, b: Expr) -> Expr {
    if b.is_zero() {
        return a;
    }
    if a.is_zero() {
        return neg(b);
    }
    bin(BinaryOp::Sub, a, b)
}

pub(crate) fn mul(a: Expr, b: Expr) -> Expr {
    if a.is_zero() || b.is_zero() {
        return Expr::constant(0.0);
    }
    if a.as_const() == Some(1.0) {
        return b;
    }
    if b.as_const() == Some(1.0) {
        return a;
    }
    bin(BinaryOp::Mul, a, b)
}

fn div(a: Expr, b: Expr) -> Expr {
    if a.is_zero() {
        return Expr::constant(0.0);
    }
    if b.as_const() == Some(1.0) {
        return a;
    }
    bin(BinaryOp::Div, a, b)
}

fn powc(a: Expr, k: f64) -> Expr {
    if k == 0.0 {
        return Expr::constant(1.0);
    }
    if k == 1.0 {
        return a;
    }
    bin(BinaryOp::Pow, a, Expr::constant(k))
}
