//! Random expressions, fields and finite differences shared by the
//! integration tests.
#![allow(dead_code)]

use nonholo_core::expr::{BinaryOp, UnaryOp};
use nonholo_core::{Expr, VectorField};
use rand::Rng;

fn c(v: f64) -> Expr {
    Expr::constant(v)
}

fn un(op: UnaryOp, a: Expr) -> Expr {
    Expr::unary(op, a)
}

fn bin(op: BinaryOp, a: Expr, b: Expr) -> Expr {
    Expr::binary(op, a, b)
}

/// `1 + a·a`, positive everywhere.
fn one_plus_square(a: Expr) -> Expr {
    bin(BinaryOp::Add, c(1.0), bin(BinaryOp::Mul, a.clone(), a))
}

/// A random tree over `vars` slots whose grammar depth is at most `depth`.
///
/// Operators with a restricted domain receive arguments that keep them
/// smooth on all of `R^vars` (division by `1 + b²`, `log(1 + a²)`, ...), so
/// every tree is differentiable wherever it is finite.
pub fn random_expr<R: Rng>(rng: &mut R, depth: usize, vars: usize) -> Expr {
    if depth == 0 || rng.random_bool(0.25) {
        return if rng.random_bool(0.6) {
            Expr::var(rng.random_range(0..vars))
        } else {
            c((rng.random_range(-2.0..2.0f64) * 100.0).round() / 100.0)
        };
    }
    let d = depth - 1;
    match rng.random_range(0..14) {
        0 => bin(BinaryOp::Add, random_expr(rng, d, vars), random_expr(rng, d, vars)),
        1 => bin(BinaryOp::Sub, random_expr(rng, d, vars), random_expr(rng, d, vars)),
        2 | 3 => bin(BinaryOp::Mul, random_expr(rng, d, vars), random_expr(rng, d, vars)),
        4 => bin(
            BinaryOp::Div,
            random_expr(rng, d, vars),
            one_plus_square(random_expr(rng, d, vars)),
        ),
        5 => bin(BinaryOp::Pow, random_expr(rng, d, vars), c(2.0)),
        6 => bin(
            BinaryOp::Pow,
            one_plus_square(random_expr(rng, d, vars)),
            c((rng.random_range(-1.5..1.5f64) * 10.0).round() / 10.0),
        ),
        7 => un(UnaryOp::Neg, random_expr(rng, d, vars)),
        8 => un(UnaryOp::Sin, random_expr(rng, d, vars)),
        9 => un(UnaryOp::Cos, random_expr(rng, d, vars)),
        10 => un(UnaryOp::Tan, un(UnaryOp::Sin, random_expr(rng, d, vars))),
        11 => un(UnaryOp::Exp, un(UnaryOp::Sin, random_expr(rng, d, vars))),
        12 => {
            if rng.random_bool(0.5) {
                un(UnaryOp::Log, one_plus_square(random_expr(rng, d, vars)))
            } else {
                un(UnaryOp::Sqrt, one_plus_square(random_expr(rng, d, vars)))
            }
        }
        _ => {
            let shift = if rng.random_bool(0.5) { 2.0 } else { -2.0 };
            un(
                UnaryOp::Abs,
                bin(BinaryOp::Add, un(UnaryOp::Sin, random_expr(rng, d, vars)), c(shift)),
            )
        }
    }
}

/// Fourth-order central difference of `e` along `slot`.
pub fn central_difference(e: &Expr, slot: usize, point: &[f64], h: f64) -> Option<f64> {
    let at = |dx: f64| {
        let mut p = point.to_vec();
        p[slot] += dx;
        e.eval(&p).ok()
    };
    Some((-at(2.0 * h)? + 8.0 * at(h)? - 8.0 * at(-h)? + at(-2.0 * h)?) / (12.0 * h))
}

/// Random polynomial of degree at most two in the first `n` slots.
pub fn random_quadratic<R: Rng>(rng: &mut R, n: usize) -> Expr {
    let mut e = c(rng.random_range(-1.0..1.0));
    for i in 0..n {
        let lin = bin(BinaryOp::Mul, c(rng.random_range(-1.0..1.0)), Expr::var(i));
        e = bin(BinaryOp::Add, e, lin);
        for j in i..n {
            let quad = bin(
                BinaryOp::Mul,
                c(rng.random_range(-1.0..1.0)),
                bin(BinaryOp::Mul, Expr::var(i), Expr::var(j)),
            );
            e = bin(BinaryOp::Add, e, quad);
        }
    }
    e
}

/// A field on `R^n` with random quadratic components.
pub fn random_field<R: Rng>(rng: &mut R, n: usize) -> VectorField {
    VectorField::new((0..n).map(|_| random_quadratic(rng, n)).collect()).expect("n components")
}
