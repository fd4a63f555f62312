//! Scalar expression language for coefficients, growth terms and initial data.
//!
//! Expressions are written in the variables `x`, `y`, `t`, `p` and the derived
//! radius `r` (`|x|` in 1D, `sqrt(x^2 + y^2)` in 2D). Trees are immutable once
//! parsed and evaluation is pure, so a single [`Expr`] can be shared across
//! worker threads.

mod parse;
mod print;

use std::fmt;

use thiserror::Error;

pub use parse::parse;

/// Variables an expression may reference.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Var {
    X,
    Y,
    T,
    P,
    R,
}

impl Var {
    pub fn name(self) -> &'static str {
        match self {
            Var::X => "x",
            Var::Y => "y",
            Var::T => "t",
            Var::P => "p",
            Var::R => "r",
        }
    }

    pub fn from_name(name: &str) -> Option<Var> {
        Some(match name {
            "x" => Var::X,
            "y" => Var::Y,
            "t" => Var::T,
            "p" => Var::P,
            "r" => Var::R,
            _ => return None,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Constant {
    Pi,
    E,
}

impl Constant {
    pub fn value(self) -> f64 {
        match self {
            Constant::Pi => std::f64::consts::PI,
            Constant::E => std::f64::consts::E,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Constant::Pi => "pi",
            Constant::E => "e",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Func {
    Sin,
    Cos,
    Tanh,
    Cosh,
    Exp,
    Log,
    Sqrt,
    Abs,
    Min,
    Max,
}

impl Func {
    pub fn name(self) -> &'static str {
        match self {
            Func::Sin => "sin",
            Func::Cos => "cos",
            Func::Tanh => "tanh",
            Func::Cosh => "cosh",
            Func::Exp => "exp",
            Func::Log => "log",
            Func::Sqrt => "sqrt",
            Func::Abs => "abs",
            Func::Min => "min",
            Func::Max => "max",
        }
    }

    pub fn from_name(name: &str) -> Option<Func> {
        Some(match name {
            "sin" => Func::Sin,
            "cos" => Func::Cos,
            "tanh" => Func::Tanh,
            "cosh" => Func::Cosh,
            "exp" => Func::Exp,
            "log" => Func::Log,
            "sqrt" => Func::Sqrt,
            "abs" => Func::Abs,
            "min" => Func::Min,
            "max" => Func::Max,
            _ => return None,
        })
    }

    pub fn arity(self) -> usize {
        match self {
            Func::Min | Func::Max => 2,
            _ => 1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BinOp {
    Add,
    Sub,
    Mul,
    Div,
    Pow,
}

impl BinOp {
    pub fn symbol(self) -> char {
        match self {
            BinOp::Add => '+',
            BinOp::Sub => '-',
            BinOp::Mul => '*',
            BinOp::Div => '/',
            BinOp::Pow => '^',
        }
    }
}

/// Abstract syntax tree of a scalar expression.
#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Num(f64),
    Var(Var),
    Const(Constant),
    Neg(Box<Expr>),
    Binary(BinOp, Box<Expr>, Box<Expr>),
    Call(Func, Vec<Expr>),
}

/// Variable bindings for evaluation. `r` is derived from `x` and `y`.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct Env {
    pub x: Option<f64>,
    pub y: Option<f64>,
    pub t: Option<f64>,
    pub p: Option<f64>,
}

impl Env {
    pub fn new() -> Self {
        Self::default()
    }

    /// Spatial point in 1D (`y == None`) or 2D at time `t`.
    pub fn point(x: f64, y: Option<f64>, t: f64) -> Self {
        Env { x: Some(x), y, t: Some(t), p: None }
    }

    pub fn with_x(mut self, x: f64) -> Self {
        self.x = Some(x);
        self
    }

    pub fn with_y(mut self, y: f64) -> Self {
        self.y = Some(y);
        self
    }

    pub fn with_t(mut self, t: f64) -> Self {
        self.t = Some(t);
        self
    }

    pub fn with_p(mut self, p: f64) -> Self {
        self.p = Some(p);
        self
    }

    pub fn get(&self, var: Var) -> Option<f64> {
        match var {
            Var::X => self.x,
            Var::Y => self.y,
            Var::T => self.t,
            Var::P => self.p,
            Var::R => {
                let x = self.x?;
                Some(match self.y {
                    Some(y) => x.hypot(y),
                    None => x.abs(),
                })
            }
        }
    }

    /// Rebinds `var`. `r` is not independently bindable.
    pub fn set(mut self, var: Var, value: f64) -> Self {
        match var {
            Var::X => self.x = Some(value),
            Var::Y => self.y = Some(value),
            Var::T => self.t = Some(value),
            Var::P => self.p = Some(value),
            Var::R => panic!("r is derived from x and y and cannot be bound"),
        }
        self
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ParseError {
    #[error("syntax error at byte {offset}: expected {expected}")]
    Syntax { offset: usize, expected: String },
    #[error("unknown identifier `{name}` at byte {offset}")]
    UnknownIdentifier { name: String, offset: usize },
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EvalError {
    #[error("variable `{}` is not bound", .0.name())]
    Unbound(Var),
    #[error("domain error in {op}: argument {arg}")]
    Domain { op: &'static str, arg: f64 },
}

impl Expr {
    pub fn num(v: f64) -> Self {
        Expr::Num(v)
    }

    pub fn evaluate(&self, env: &Env) -> Result<f64, EvalError> {
        eval(self, env)
    }

    /// True when the tree mentions `var` (directly, or through `r` for x and y).
    pub fn depends_on(&self, var: Var) -> bool {
        match self {
            Expr::Num(_) | Expr::Const(_) => false,
            Expr::Var(v) => *v == var || (*v == Var::R && matches!(var, Var::X | Var::Y)),
            Expr::Neg(e) => e.depends_on(var),
            Expr::Binary(_, l, r) => l.depends_on(var) || r.depends_on(var),
            Expr::Call(_, args) => args.iter().any(|a| a.depends_on(var)),
        }
    }

    /// True when the expression has no variables at all.
    pub fn is_constant(&self) -> bool {
        [Var::X, Var::Y, Var::T, Var::P, Var::R].iter().all(|&v| !self.depends_on(v))
    }
}

/// Evaluates `expr` under `env`. Children are evaluated left to right.
pub fn eval(expr: &Expr, env: &Env) -> Result<f64, EvalError> {
    match expr {
        Expr::Num(v) => Ok(*v),
        Expr::Const(c) => Ok(c.value()),
        Expr::Var(v) => env.get(*v).ok_or(EvalError::Unbound(*v)),
        Expr::Neg(e) => Ok(-eval(e, env)?),
        Expr::Binary(op, l, r) => {
            let a = eval(l, env)?;
            let b = eval(r, env)?;
            match op {
                BinOp::Add => Ok(a + b),
                BinOp::Sub => Ok(a - b),
                BinOp::Mul => Ok(a * b),
                BinOp::Div => {
                    if b == 0.0 {
                        Err(EvalError::Domain { op: "division", arg: b })
                    } else {
                        Ok(a / b)
                    }
                }
                BinOp::Pow => {
                    let v = a.powf(b);
                    if v.is_nan() {
                        Err(EvalError::Domain { op: "power", arg: a })
                    } else {
                        Ok(v)
                    }
                }
            }
        }
        Expr::Call(f, args) => {
            let a = eval(&args[0], env)?;
            Ok(match f {
                Func::Sin => a.sin(),
                Func::Cos => a.cos(),
                Func::Tanh => a.tanh(),
                Func::Cosh => a.cosh(),
                Func::Exp => a.exp(),
                Func::Log => {
                    if a <= 0.0 {
                        return Err(EvalError::Domain { op: "log", arg: a });
                    }
                    a.ln()
                }
                Func::Sqrt => {
                    if a < 0.0 {
                        return Err(EvalError::Domain { op: "sqrt", arg: a });
                    }
                    a.sqrt()
                }
                Func::Abs => a.abs(),
                Func::Min => a.min(eval(&args[1], env)?),
                Func::Max => a.max(eval(&args[1], env)?),
            })
        }
    }
}

/// Default finite-difference step for a variable currently at `value`.
pub fn default_step(value: f64) -> f64 {
    1e-5 * value.abs().max(1.0)
}

/// Centered finite difference of an arbitrary scalar function of the environment.
///
/// Order 1 is `(f(+h) - f(-h)) / 2h`, order 2 is `(f(+h) - 2f(0) + f(-h)) / h^2`.
pub fn fd_derivative_with<F>(
    f: F,
    env: &Env,
    var: Var,
    order: u8,
    h: Option<f64>,
) -> Result<f64, EvalError>
where
    F: Fn(&Env) -> Result<f64, EvalError>,
{
    let center = env.get(var).ok_or(EvalError::Unbound(var))?;
    let h = h.unwrap_or_else(|| default_step(center));
    let plus = f(&env.set(var, center + h))?;
    let minus = f(&env.set(var, center - h))?;
    match order {
        1 => Ok((plus - minus) / (2.0 * h)),
        2 => {
            let mid = f(env)?;
            Ok((plus - 2.0 * mid + minus) / (h * h))
        }
        _ => panic!("finite differences are provided for order 1 and 2 only, got {order}"),
    }
}

/// Centered finite difference of `expr` in `var`.
pub fn fd_derivative(
    expr: &Expr,
    env: &Env,
    var: Var,
    order: u8,
    h: Option<f64>,
) -> Result<f64, EvalError> {
    fd_derivative_with(|e| eval(expr, e), env, var, order, h)
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        print::write_expr(self, f)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ev(src: &str, env: Env) -> Result<f64, EvalError> {
        eval(&parse(src).unwrap(), &env)
    }

    #[test]
    fn precedence_and_associativity() {
        assert_eq!(ev("1+2*3", Env::new()).unwrap(), 7.0);
        assert_eq!(ev("2^3^2", Env::new()).unwrap(), 512.0);
        assert_eq!(ev("-2^2", Env::new()).unwrap(), -4.0);
        assert_eq!(ev("(1+2)*3", Env::new()).unwrap(), 9.0);
        assert_eq!(ev("8/4/2", Env::new()).unwrap(), 1.0);
        assert_eq!(ev("2^-1", Env::new()).unwrap(), 0.5);
    }

    #[test]
    fn unknown_identifier() {
        match parse("log(q)") {
            Err(ParseError::UnknownIdentifier { name, offset }) => {
                assert_eq!(name, "q");
                assert_eq!(offset, 4);
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn syntax_errors_carry_offset() {
        match parse("1 + * 2") {
            Err(ParseError::Syntax { offset, .. }) => assert_eq!(offset, 4),
            other => panic!("unexpected {other:?}"),
        }
        assert!(matches!(parse(""), Err(ParseError::Syntax { offset: 0, .. })));
        assert!(matches!(parse("(1+2"), Err(ParseError::Syntax { offset: 4, .. })));
        assert!(matches!(parse("min(1)"), Err(ParseError::Syntax { .. })));
        assert!(matches!(parse("1 2"), Err(ParseError::Syntax { offset: 2, .. })));
    }

    #[test]
    fn evaluation_examples() {
        assert!(ev("sin(pi)", Env::new()).unwrap().abs() < 1e-12);
        let env = Env::new().with_x(3.0).with_t(1.0);
        assert_eq!(ev("x^2 + t", env).unwrap(), 10.0);
        assert!(matches!(
            ev("1/(x-1)", Env::new().with_x(1.0)),
            Err(EvalError::Domain { op: "division", .. })
        ));
        assert!(matches!(ev("log(-1)", Env::new()), Err(EvalError::Domain { op: "log", .. })));
        assert!(matches!(ev("sqrt(-1)", Env::new()), Err(EvalError::Domain { op: "sqrt", .. })));
        assert_eq!(ev("x + 1", Env::new()), Err(EvalError::Unbound(Var::X)));
    }

    #[test]
    fn radius_is_derived() {
        assert_eq!(ev("r", Env::new().with_x(-2.0)).unwrap(), 2.0);
        assert_eq!(ev("r", Env::new().with_x(3.0).with_y(4.0)).unwrap(), 5.0);
    }

    #[test]
    fn finite_differences() {
        let sq = parse("x^2").unwrap();
        let d1 = fd_derivative(&sq, &Env::new().with_x(1.0), Var::X, 1, None).unwrap();
        assert!((d1 - 2.0).abs() < 1e-8);
        let d2 = fd_derivative(&sq, &Env::new().with_x(0.0), Var::X, 2, None).unwrap();
        assert!((d2 - 2.0).abs() < 1e-6);
        let ex = parse("exp(x)").unwrap();
        let d = fd_derivative(&ex, &Env::new().with_x(0.0), Var::X, 1, None).unwrap();
        assert!((d - 1.0).abs() < 1e-8);
        let bad = parse("sqrt(x)").unwrap();
        assert!(fd_derivative(&bad, &Env::new().with_x(0.0), Var::X, 1, None).is_err());
    }

    #[test]
    fn dependency_tracking() {
        let e = parse("r*t + 1").unwrap();
        assert!(e.depends_on(Var::X));
        assert!(e.depends_on(Var::T));
        assert!(!e.depends_on(Var::P));
        assert!(parse("2*pi").unwrap().is_constant());
    }
}
