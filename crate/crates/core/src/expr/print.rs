use std::fmt;

use super::{BinOp, Expr};

const ADD: u8 = 1;
const MUL: u8 = 2;
const NEG: u8 = 3;
const POW: u8 = 4;
const ATOM: u8 = 5;

fn prec(e: &Expr) -> u8 {
    match e {
        Expr::Num(v) if *v < 0.0 || (*v == 0.0 && v.is_sign_negative()) => NEG,
        Expr::Num(_) | Expr::Var(_) | Expr::Const(_) | Expr::Call(..) => ATOM,
        Expr::Neg(_) => NEG,
        Expr::Binary(op, ..) => match op {
            BinOp::Add | BinOp::Sub => ADD,
            BinOp::Mul | BinOp::Div => MUL,
            BinOp::Pow => POW,
        },
    }
}

fn write_num(v: f64, f: &mut fmt::Formatter<'_>) -> fmt::Result {
    if v.fract() == 0.0 && v.abs() < 1e15 {
        write!(f, "{}", v as i64)
    } else {
        // Debug output is the shortest representation that round-trips.
        write!(f, "{v:?}")
    }
}

fn child(e: &Expr, paren: bool, f: &mut fmt::Formatter<'_>) -> fmt::Result {
    if paren {
        f.write_str("(")?;
        write_expr(e, f)?;
        f.write_str(")")
    } else {
        write_expr(e, f)
    }
}

pub(super) fn write_expr(e: &Expr, f: &mut fmt::Formatter<'_>) -> fmt::Result {
    match e {
        // Printed as the negation it parses back to.
        Expr::Num(v) if prec(e) == NEG => {
            f.write_str("-")?;
            write_num(v.abs(), f)
        }
        Expr::Num(v) => write_num(*v, f),
        Expr::Var(v) => f.write_str(v.name()),
        Expr::Const(c) => f.write_str(c.name()),
        Expr::Neg(inner) => {
            f.write_str("-")?;
            child(inner, prec(inner) < NEG, f)
        }
        Expr::Binary(op, l, r) => {
            let p = prec(e);
            let right_assoc = *op == BinOp::Pow;
            let lp = prec(l) < p || (right_assoc && prec(l) == p);
            let rp = prec(r) < p || (!right_assoc && prec(r) == p);
            child(l, lp, f)?;
            match op {
                BinOp::Add | BinOp::Sub => write!(f, " {} ", op.symbol())?,
                _ => write!(f, "{}", op.symbol())?,
            }
            child(r, rp, f)
        }
        Expr::Call(func, args) => {
            write!(f, "{}(", func.name())?;
            for (i, a) in args.iter().enumerate() {
                if i > 0 {
                    f.write_str(", ")?;
                }
                write_expr(a, f)?;
            }
            f.write_str(")")
        }
    }
}
