//! Scalar math expressions over named variables.
//!
//! Vector fields, desired trajectories and disturbance signals are all
//! supplied as text expressions (`x1*w1 + x2 + u1`, `sin(t)`, ...). This
//! module parses them into immutable ASTs, evaluates them with IEEE
//! semantics (domain errors and non-finite results are reported, never
//! silently propagated), and produces exact symbolic partial derivatives
//! for Jacobian construction.
//!
//! Expressions are immutable after parsing; evaluation is reentrant and
//! safe to call from multiple threads.

mod parse;

pub use parse::{parse, ParseError};

use std::collections::{BTreeSet, HashMap};
use std::fmt;

use thiserror::Error;

/// Binary operators, in source syntax `+ - * / ^`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BinOp {
    Add,
    Sub,
    Mul,
    Div,
    Pow,
}

/// Built-in unary functions.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Func {
    Sin,
    Cos,
    Tan,
    Exp,
    Ln,
    Sqrt,
    Tanh,
    Abs,
}

impl Func {
    pub fn from_name(name: &str) -> Option<Func> {
        Some(match name {
            "sin" => Func::Sin,
            "cos" => Func::Cos,
            "tan" => Func::Tan,
            "exp" => Func::Exp,
            "ln" => Func::Ln,
            "sqrt" => Func::Sqrt,
            "tanh" => Func::Tanh,
            "abs" => Func::Abs,
            _ => return None,
        })
    }

    pub fn name(self) -> &'static str {
        match self {
            Func::Sin => "sin",
            Func::Cos => "cos",
            Func::Tan => "tan",
            Func::Exp => "exp",
            Func::Ln => "ln",
            Func::Sqrt => "sqrt",
            Func::Tanh => "tanh",
            Func::Abs => "abs",
        }
    }
}

/// Abstract syntax tree of a scalar expression.
#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Num(f64),
    Var(String),
    Neg(Box<Expr>),
    Bin(BinOp, Box<Expr>, Box<Expr>),
    Call(Func, Box<Expr>),
}

/// Variable bindings for evaluation. Every free variable of the expression
/// being evaluated must be present.
pub type Binding = HashMap<String, f64>;

/// Evaluation failures: unbound variables, real-domain violations and
/// non-finite intermediate results.
#[derive(Debug, Clone, Error, PartialEq)]
pub enum EvalError {
    #[error("unbound variable `{0}`")]
    UnboundVariable(String),
    #[error("domain error: {0}")]
    Domain(String),
    #[error("non-finite result in `{0}`")]
    NonFinite(String),
}

fn apply_bin(op: BinOp, a: f64, b: f64) -> Result<f64, EvalError> {
    let v = match op {
        BinOp::Add => a + b,
        BinOp::Sub => a - b,
        BinOp::Mul => a * b,
        BinOp::Div => {
            if b == 0.0 {
                return Err(EvalError::Domain("division by zero".into()));
            }
            a / b
        }
        BinOp::Pow => {
            if a < 0.0 && b.fract() != 0.0 {
                return Err(EvalError::Domain(format!(
                    "negative base {a} raised to non-integer exponent {b}"
                )));
            }
            if a == 0.0 && b < 0.0 {
                return Err(EvalError::Domain(format!(
                    "zero raised to negative exponent {b}"
                )));
            }
            a.powf(b)
        }
    };
    if v.is_finite() {
        Ok(v)
    } else {
        Err(EvalError::NonFinite(format!("{a} {op:?} {b}")))
    }
}

fn apply_func(f: Func, x: f64) -> Result<f64, EvalError> {
    let v = match f {
        Func::Sin => x.sin(),
        Func::Cos => x.cos(),
        Func::Tan => x.tan(),
        Func::Exp => x.exp(),
        Func::Ln => {
            if x <= 0.0 {
                return Err(EvalError::Domain(format!("ln of non-positive value {x}")));
            }
            x.ln()
        }
        Func::Sqrt => {
            if x < 0.0 {
                return Err(EvalError::Domain(format!("sqrt of negative value {x}")));
            }
            x.sqrt()
        }
        Func::Tanh => x.tanh(),
        Func::Abs => x.abs(),
    };
    if v.is_finite() {
        Ok(v)
    } else {
        Err(EvalError::NonFinite(format!("{}({x})", f.name())))
    }
}

impl Expr {
    /// Evaluates the expression with all free variables bound.
    pub fn evaluate(&self, binding: &Binding) -> Result<f64, EvalError> {
        match self {
            Expr::Num(v) => Ok(*v),
            Expr::Var(name) => binding
                .get(name)
                .copied()
                .ok_or_else(|| EvalError::UnboundVariable(name.clone())),
            Expr::Neg(inner) => Ok(-inner.evaluate(binding)?),
            Expr::Bin(op, a, b) => apply_bin(*op, a.evaluate(binding)?, b.evaluate(binding)?),
            Expr::Call(f, arg) => apply_func(*f, arg.evaluate(binding)?),
        }
    }

    /// Free variables of the expression, sorted.
    pub fn free_vars(&self) -> BTreeSet<String> {
        let mut out = BTreeSet::new();
        self.collect_vars(&mut out);
        out
    }

    fn collect_vars(&self, out: &mut BTreeSet<String>) {
        match self {
            Expr::Num(_) => {}
            Expr::Var(name) => {
                out.insert(name.clone());
            }
            Expr::Neg(inner) => inner.collect_vars(out),
            Expr::Bin(_, a, b) => {
                a.collect_vars(out);
                b.collect_vars(out);
            }
            Expr::Call(_, arg) => arg.collect_vars(out),
        }
    }

    /// Exact symbolic partial derivative with respect to `var`. The
    /// derivative with respect to a variable that does not occur is the
    /// zero expression. Constant subtrees are folded.
    pub fn differentiate(&self, var: &str) -> Expr {
        match self {
            Expr::Num(_) => Expr::Num(0.0),
            Expr::Var(name) => {
                if name == var {
                    Expr::Num(1.0)
                } else {
                    Expr::Num(0.0)
                }
            }
            Expr::Neg(inner) => neg(inner.differentiate(var)),
            Expr::Bin(op, a, b) => {
                let da = a.differentiate(var);
                let db = b.differentiate(var);
                match op {
                    BinOp::Add => add(da, db),
                    BinOp::Sub => sub(da, db),
                    BinOp::Mul => add(mul(da, (**b).clone()), mul((**a).clone(), db)),
                    BinOp::Div => div(
                        sub(mul(da, (**b).clone()), mul((**a).clone(), db)),
                        pow((**b).clone(), Expr::Num(2.0)),
                    ),
                    BinOp::Pow => {
                        if let Expr::Num(n) = **b {
                            // d(a^n) = n*a^(n-1)*da for constant n
                            mul(
                                mul(Expr::Num(n), pow((**a).clone(), Expr::Num(n - 1.0))),
                                da,
                            )
                        } else {
                            // d(a^b) = a^b * (db*ln(a) + b*da/a)
                            mul(
                                pow((**a).clone(), (**b).clone()),
                                add(
                                    mul(db, call(Func::Ln, (**a).clone())),
                                    div(mul((**b).clone(), da), (**a).clone()),
                                ),
                            )
                        }
                    }
                }
            }
            Expr::Call(f, arg) => {
                let a = (**arg).clone();
                let da = arg.differentiate(var);
                let outer = match f {
                    Func::Sin => call(Func::Cos, a),
                    Func::Cos => neg(call(Func::Sin, a)),
                    Func::Tan => div(Expr::Num(1.0), pow(call(Func::Cos, a), Expr::Num(2.0))),
                    Func::Exp => call(Func::Exp, a),
                    Func::Ln => div(Expr::Num(1.0), a),
                    Func::Sqrt => div(Expr::Num(1.0), mul(Expr::Num(2.0), call(Func::Sqrt, a))),
                    Func::Tanh => sub(Expr::Num(1.0), pow(call(Func::Tanh, a), Expr::Num(2.0))),
                    // |a| differentiates to a/|a| away from zero
                    Func::Abs => div(a.clone(), call(Func::Abs, a)),
                };
                mul(outer, da)
            }
        }
    }

    /// Compiles the expression against a variable layout, resolving names
    /// to slot indices for fast repeated evaluation.
    pub fn compile(&self, layout: &VarLayout) -> Result<SlotExpr, EvalError> {
        Ok(match self {
            Expr::Num(v) => SlotExpr::Num(*v),
            Expr::Var(name) => SlotExpr::Var(
                layout
                    .slot(name)
                    .ok_or_else(|| EvalError::UnboundVariable(name.clone()))?,
            ),
            Expr::Neg(inner) => SlotExpr::Neg(Box::new(inner.compile(layout)?)),
            Expr::Bin(op, a, b) => SlotExpr::Bin(
                *op,
                Box::new(a.compile(layout)?),
                Box::new(b.compile(layout)?),
            ),
            Expr::Call(f, arg) => SlotExpr::Call(*f, Box::new(arg.compile(layout)?)),
        })
    }
}

// Smart constructors: fold constant subtrees and the 0/1 identities so
// derivatives come out in reduced form (`d/dx1 (x1*w1)` renders as `w1`).

fn is_zero(e: &Expr) -> bool {
    matches!(e, Expr::Num(v) if *v == 0.0)
}

fn is_one(e: &Expr) -> bool {
    matches!(e, Expr::Num(v) if *v == 1.0)
}

pub(crate) fn add(a: Expr, b: Expr) -> Expr {
    if is_zero(&a) {
        return b;
    }
    if is_zero(&b) {
        return a;
    }
    if let (Expr::Num(x), Expr::Num(y)) = (&a, &b) {
        if (x + y).is_finite() {
            return Expr::Num(x + y);
        }
    }
    Expr::Bin(BinOp::Add, Box::new(a), Box::new(b))
}

pub(crate) fn sub(a: Expr, b: Expr) -> Expr {
    if is_zero(&b) {
        return a;
    }
    if is_zero(&a) {
        return neg(b);
    }
    if let (Expr::Num(x), Expr::Num(y)) = (&a, &b) {
        if (x - y).is_finite() {
            return Expr::Num(x - y);
        }
    }
    Expr::Bin(BinOp::Sub, Box::new(a), Box::new(b))
}

pub(crate) fn mul(a: Expr, b: Expr) -> Expr {
    if is_zero(&a) || is_zero(&b) {
        return Expr::Num(0.0);
    }
    if is_one(&a) {
        return b;
    }
    if is_one(&b) {
        return a;
    }
    if let (Expr::Num(x), Expr::Num(y)) = (&a, &b) {
        if (x * y).is_finite() {
            return Expr::Num(x * y);
        }
    }
    Expr::Bin(BinOp::Mul, Box::new(a), Box::new(b))
}

pub(crate) fn div(a: Expr, b: Expr) -> Expr {
    if is_zero(&a) {
        return Expr::Num(0.0);
    }
    if is_one(&b) {
        return a;
    }
    if let (Expr::Num(x), Expr::Num(y)) = (&a, &b) {
        if *y != 0.0 && (x / y).is_finite() {
            return Expr::Num(x / y);
        }
    }
    Expr::Bin(BinOp::Div, Box::new(a), Box::new(b))
}

pub(crate) fn pow(a: Expr, b: Expr) -> Expr {
    if is_zero(&b) {
        return Expr::Num(1.0);
    }
    if is_one(&b) {
        return a;
    }
    Expr::Bin(BinOp::Pow, Box::new(a), Box::new(b))
}

pub(crate) fn neg(a: Expr) -> Expr {
    match a {
        Expr::Num(v) => Expr::Num(-v),
        Expr::Neg(inner) => *inner,
        other => Expr::Neg(Box::new(other)),
    }
}

pub(crate) fn call(f: Func, a: Expr) -> Expr {
    if let Expr::Num(v) = a {
        if let Ok(folded) = apply_func(f, v) {
            return Expr::Num(folded);
        }
    }
    Expr::Call(f, Box::new(a))
}

// Rendering with minimal parentheses; `parse(render(e))` evaluates
// identically to `e` at every binding.

fn precedence(e: &Expr) -> u8 {
    match e {
        // negative literal renders with a leading '-', same binding as unary minus
        Expr::Num(v) if v.is_sign_negative() => 1,
        Expr::Num(_) | Expr::Var(_) | Expr::Call(..) => 4,
        Expr::Neg(_) => 1,
        Expr::Bin(BinOp::Add | BinOp::Sub, ..) => 0,
        Expr::Bin(BinOp::Mul | BinOp::Div, ..) => 2,
        Expr::Bin(BinOp::Pow, ..) => 3,
    }
}

fn fmt_child(e: &Expr, min_prec: u8, f: &mut fmt::Formatter<'_>) -> fmt::Result {
    if precedence(e) < min_prec {
        write!(f, "({e})")
    } else {
        write!(f, "{e}")
    }
}

// The right operand of '^' is grammatically a factor: unary minus, another
// power, or an atom. Anything else needs parentheses.
fn fmt_pow_rhs(e: &Expr, f: &mut fmt::Formatter<'_>) -> fmt::Result {
    match e {
        Expr::Neg(_) | Expr::Bin(BinOp::Pow, ..) => write!(f, "{e}"),
        _ if precedence(e) >= 4 => write!(f, "{e}"),
        _ => write!(f, "({e})"),
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Expr::Num(v) => write!(f, "{v:?}"),
            Expr::Var(name) => write!(f, "{name}"),
            Expr::Neg(inner) => {
                write!(f, "-")?;
                fmt_child(inner, 2, f)
            }
            Expr::Bin(op, a, b) => match op {
                BinOp::Add => {
                    fmt_child(a, 0, f)?;
                    write!(f, " + ")?;
                    fmt_child(b, 1, f)
                }
                BinOp::Sub => {
                    fmt_child(a, 0, f)?;
                    write!(f, " - ")?;
                    fmt_child(b, 1, f)
                }
                BinOp::Mul => {
                    fmt_child(a, 2, f)?;
                    write!(f, "*")?;
                    fmt_child(b, 3, f)
                }
                BinOp::Div => {
                    fmt_child(a, 2, f)?;
                    write!(f, "/")?;
                    fmt_child(b, 3, f)
                }
                BinOp::Pow => {
                    fmt_child(a, 4, f)?;
                    write!(f, "^")?;
                    fmt_pow_rhs(b, f)
                }
            },
            Expr::Call(func, arg) => write!(f, "{}({arg})", func.name()),
        }
    }
}

/// Maps variable names to slot indices in a flat evaluation buffer.
///
/// System models use the canonical layout `x1..xn, u1..um, w1..wp, t`.
#[derive(Debug, Clone)]
pub struct VarLayout {
    names: Vec<String>,
    index: HashMap<String, usize>,
}

impl VarLayout {
    pub fn new(names: Vec<String>) -> VarLayout {
        let index = names
            .iter()
            .enumerate()
            .map(|(i, n)| (n.clone(), i))
            .collect();
        VarLayout { names, index }
    }

    /// Canonical layout for an (n, m, p) system: states, inputs,
    /// disturbances, then time.
    pub fn canonical(n: usize, m: usize, p: usize) -> VarLayout {
        let mut names = Vec::with_capacity(n + m + p + 1);
        names.extend((1..=n).map(|i| format!("x{i}")));
        names.extend((1..=m).map(|i| format!("u{i}")));
        names.extend((1..=p).map(|i| format!("w{i}")));
        names.push("t".to_string());
        VarLayout::new(names)
    }

    pub fn slot(&self, name: &str) -> Option<usize> {
        self.index.get(name).copied()
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }
}

/// Expression with variables resolved to slot indices. Produced by
/// [`Expr::compile`]; used on hot paths where name lookups would dominate.
#[derive(Debug, Clone)]
pub enum SlotExpr {
    Num(f64),
    Var(usize),
    Neg(Box<SlotExpr>),
    Bin(BinOp, Box<SlotExpr>, Box<SlotExpr>),
    Call(Func, Box<SlotExpr>),
}

impl SlotExpr {
    pub fn eval(&self, slots: &[f64]) -> Result<f64, EvalError> {
        match self {
            SlotExpr::Num(v) => Ok(*v),
            SlotExpr::Var(i) => Ok(slots[*i]),
            SlotExpr::Neg(inner) => Ok(-inner.eval(slots)?),
            SlotExpr::Bin(op, a, b) => apply_bin(*op, a.eval(slots)?, b.eval(slots)?),
            SlotExpr::Call(f, arg) => apply_func(*f, arg.eval(slots)?),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn bind(pairs: &[(&str, f64)]) -> Binding {
        pairs.iter().map(|(k, v)| (k.to_string(), *v)).collect()
    }

    #[test]
    fn evaluates_example_field_component() {
        let e = parse("x1*w1 + x2 + u1").unwrap();
        let b = bind(&[("x1", 1.0), ("x2", 2.0), ("u1", 0.5), ("w1", -1.0)]);
        assert_eq!(e.evaluate(&b).unwrap(), 1.5);
    }

    #[test]
    fn evaluates_trivial_cases() {
        let b = bind(&[("x2", 0.0), ("u1", 5.0)]);
        assert_eq!(parse("x2*u1").unwrap().evaluate(&b).unwrap(), 0.0);
        assert_eq!(
            parse("exp(0)").unwrap().evaluate(&Binding::new()).unwrap(),
            1.0
        );
        let t0 = bind(&[("t", 0.0)]);
        assert_eq!(parse("sin(t)*2").unwrap().evaluate(&t0).unwrap(), 0.0);
    }

    #[test]
    fn unbound_variable_is_reported() {
        let e = parse("x1 + y").unwrap();
        let b = bind(&[("x1", 1.0)]);
        assert_eq!(e.evaluate(&b), Err(EvalError::UnboundVariable("y".into())));
    }

    #[test]
    fn domain_errors() {
        let b = Binding::new();
        assert!(matches!(
            parse("ln(0)").unwrap().evaluate(&b),
            Err(EvalError::Domain(_))
        ));
        assert!(matches!(
            parse("sqrt(0-1)").unwrap().evaluate(&b),
            Err(EvalError::Domain(_))
        ));
        assert!(matches!(
            parse("1/0").unwrap().evaluate(&b),
            Err(EvalError::Domain(_))
        ));
        // negative base, non-integer exponent stays real-valued by erroring
        assert!(matches!(
            parse("(0-2)^0.5").unwrap().evaluate(&b),
            Err(EvalError::Domain(_))
        ));
        assert_eq!(parse("(0-2)^2").unwrap().evaluate(&b).unwrap(), 4.0);
    }

    #[test]
    fn overflow_is_an_error_not_infinity() {
        let b = Binding::new();
        assert!(matches!(
            parse("exp(1000)").unwrap().evaluate(&b),
            Err(EvalError::NonFinite(_))
        ));
    }

    #[test]
    fn derivative_of_linear_term() {
        let e = parse("x1*w1 + x2 + u1").unwrap();
        assert_eq!(e.differentiate("x1").to_string(), "w1");
        assert_eq!(e.differentiate("x2"), Expr::Num(1.0));
    }

    #[test]
    fn derivative_of_bilinear_term() {
        let e = parse("x2*u1").unwrap();
        assert_eq!(e.differentiate("x2").to_string(), "u1");
    }

    #[test]
    fn derivative_without_dependence_is_zero() {
        let e = parse("sin(x1)").unwrap();
        assert_eq!(e.differentiate("u1"), Expr::Num(0.0));
    }

    #[test]
    fn precedence_identities() {
        let b = bind(&[("a", 2.0), ("b", 3.0), ("c", 4.0)]);
        let pairs = [
            ("a+b*c", "a+(b*c)"),
            ("a^b^c", "a^(b^c)"),
            ("a-b-c", "(a-b)-c"),
            ("a/b/c", "(a/b)/c"),
        ];
        for (lhs, rhs) in pairs {
            let l = parse(lhs).unwrap().evaluate(&b).unwrap();
            let r = parse(rhs).unwrap().evaluate(&b).unwrap();
            assert_eq!(l, r, "{lhs} vs {rhs}");
        }
        // unary minus binds looser than ^
        let v = parse("-a^2").unwrap().evaluate(&b).unwrap();
        assert_eq!(v, -4.0);
    }

    #[test]
    fn derivative_matches_finite_differences() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        let exprs = [
            "x1*w1 + x2 + u1",
            "x2*u1",
            "sin(x1) + cos(x2)*x1",
            "tanh(x1*x2) + exp(x1/4)",
            "sqrt(x1^2 + 4)",
            "x1^3 - 2*x1*x2 + t",
        ];
        for src in exprs {
            let e = parse(src).unwrap();
            let vars: Vec<String> = e.free_vars().into_iter().collect();
            for var in &vars {
                let de = e.differentiate(var);
                for _ in 0..100 {
                    let mut b = Binding::new();
                    for v in &vars {
                        b.insert(v.clone(), rng.gen_range(-2.0..2.0));
                    }
                    let x = b[var];
                    let h = 1e-5 * (1.0 + x.abs());
                    let mut bp = b.clone();
                    bp.insert(var.clone(), x + h);
                    let mut bm = b.clone();
                    bm.insert(var.clone(), x - h);
                    let fd = (e.evaluate(&bp).unwrap() - e.evaluate(&bm).unwrap()) / (2.0 * h);
                    let sym = de.evaluate(&b).unwrap();
                    assert!(
                        (sym - fd).abs() <= 1e-6 * (1.0 + sym.abs()),
                        "{src} d/d{var} at {b:?}: sym {sym} fd {fd}"
                    );
                }
            }
        }
    }

    #[test]
    fn compiled_eval_matches_interpreted() {
        let layout = VarLayout::canonical(2, 1, 1);
        let e = parse("x1*w1 + x2 + u1 - sin(t)").unwrap();
        let c = e.compile(&layout).unwrap();
        let slots = [1.0, 2.0, 0.5, -1.0, 0.3];
        let mut b = Binding::new();
        for (name, v) in layout.names().iter().zip(slots.iter()) {
            b.insert(name.clone(), *v);
        }
        assert_eq!(c.eval(&slots).unwrap(), e.evaluate(&b).unwrap());
    }

    // Random ASTs restricted to total functions so evaluation never
    // domain-errors; used for the render/parse round-trip.
    fn arb_expr() -> impl Strategy<Value = Expr> {
        let leaf = prop_oneof![
            (-8i32..8).prop_map(|v| Expr::Num(v as f64 / 2.0)),
            prop_oneof![Just("x1"), Just("x2"), Just("u1"), Just("t")]
                .prop_map(|s| Expr::Var(s.to_string())),
        ];
        leaf.prop_recursive(4, 48, 3, |inner| {
            prop_oneof![
                (inner.clone(), inner.clone()).prop_map(|(a, b)| Expr::Bin(
                    BinOp::Add,
                    Box::new(a),
                    Box::new(b)
                )),
                (inner.clone(), inner.clone()).prop_map(|(a, b)| Expr::Bin(
                    BinOp::Sub,
                    Box::new(a),
                    Box::new(b)
                )),
                (inner.clone(), inner.clone()).prop_map(|(a, b)| Expr::Bin(
                    BinOp::Mul,
                    Box::new(a),
                    Box::new(b)
                )),
                inner.clone().prop_map(|a| Expr::Neg(Box::new(a))),
                inner
                    .clone()
                    .prop_map(|a| Expr::Call(Func::Sin, Box::new(a))),
                inner
                    .clone()
                    .prop_map(|a| Expr::Call(Func::Cos, Box::new(a))),
                inner
                    .clone()
                    .prop_map(|a| Expr::Call(Func::Tanh, Box::new(a))),
                inner.prop_map(|a| Expr::Call(Func::Abs, Box::new(a))),
            ]
        })
    }

    proptest! {
        #[test]
        fn render_parse_round_trip(e in arb_expr(), x1 in -2.0..2.0f64, x2 in -2.0..2.0f64,
                                   u1 in -2.0..2.0f64, t in -2.0..2.0f64) {
            let rendered = e.to_string();
            let reparsed = parse(&rendered).unwrap();
            let b = bind(&[("x1", x1), ("x2", x2), ("u1", u1), ("t", t)]);
            let lhs = e.evaluate(&b);
            let rhs = reparsed.evaluate(&b);
            match (lhs, rhs) {
                (Ok(a), Ok(b)) => prop_assert_eq!(a.to_bits(), b.to_bits(), "{} -> {}", e, rendered),
                (Err(_), Err(_)) => {}
                (a, b) => prop_assert!(false, "{}: {:?} vs {:?}", rendered, a, b),
            }
        }

        #[test]
        fn deterministic_evaluation(x1 in -5.0..5.0f64, x2 in -5.0..5.0f64) {
            let e = parse("sin(x1)*x2 + x1^3 - tanh(x2)").unwrap();
            let b = bind(&[("x1", x1), ("x2", x2)]);
            let a = e.evaluate(&b).unwrap();
            let c = e.evaluate(&b).unwrap();
            prop_assert_eq!(a.to_bits(), c.to_bits());
        }
    }
}
