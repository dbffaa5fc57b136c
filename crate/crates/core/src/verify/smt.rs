//! Linear real arithmetic terms and formulas printed as SMT-LIB2.

use std::fmt;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Signed};

/// Plain decimal spelling (no exponent) of the shortest decimal that
/// round-trips to `v`. Negative values print as `(- d)`.
pub fn smt_decimal(v: f64) -> String {
    assert!(v.is_finite(), "non-finite constant {v}");
    let (digits, point) = shortest_digits(v.abs());
    let (int_part, frac_part) = if point <= 0 {
        ("0".to_string(), "0".repeat((-point) as usize) + &digits)
    } else if point as usize >= digits.len() {
        (digits.clone() + &"0".repeat(point as usize - digits.len()), String::new())
    } else {
        (digits[..point as usize].to_string(), digits[point as usize..].to_string())
    };
    let frac_part = frac_part.trim_end_matches('0');
    let frac_part = if frac_part.is_empty() { "0" } else { frac_part };
    let d = format!("{int_part}.{frac_part}");
    if v < 0.0 && d != "0.0" {
        format!("(- {d})")
    } else {
        d
    }
}

/// Significant digits of the shortest round-trip rendering of `v >= 0` and
/// the position of the decimal point: `v = 0.d1d2... * 10^point`.
fn shortest_digits(v: f64) -> (String, i32) {
    let text = format!("{v:e}");
    let (mantissa, exp) = text.split_once('e').expect("scientific notation");
    let exp: i32 = exp.parse().expect("integer exponent");
    let digits: String = mantissa.chars().filter(|c| *c != '.').collect();
    (digits, exp + 1)
}

/// The rational number that [`smt_decimal`] spells for `v`.
pub fn decimal_rational(v: f64) -> BigRational {
    assert!(v.is_finite(), "non-finite constant {v}");
    let (digits, point) = shortest_digits(v.abs());
    let mantissa: BigInt = digits.parse().expect("decimal digits");
    let shift = point - digits.len() as i32;
    let ten = BigInt::from(10);
    let r = if shift >= 0 {
        BigRational::from_integer(mantissa * num_traits::pow(ten, shift as usize))
    } else {
        BigRational::new(mantissa, num_traits::pow(ten, (-shift) as usize))
    };
    if v < 0.0 {
        -r
    } else {
        r
    }
}

/// `n.0` for integers, `(/ n.0 d.0)` otherwise, negated as `(- ...)`.
pub fn smt_rational(r: &BigRational) -> String {
    let (n, d) = (r.numer().abs(), r.denom());
    let body = if d.is_one() {
        format!("{n}.0")
    } else {
        format!("(/ {n}.0 {d}.0)")
    };
    if r.is_negative() {
        format!("(- {body})")
    } else {
        body
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Term {
    Var(String),
    Const(f64),
    /// `coefficient * term`
    Scale(f64, Box<Term>),
    Exact(BigRational),
    /// `coefficient * term` with an exact rational coefficient.
    ExactScale(BigRational, Box<Term>),
    Sum(Vec<Term>),
    /// `if condition then a else b`
    Ite(Box<Formula>, Box<Term>, Box<Term>),
}

impl Term {
    pub fn var(name: impl Into<String>) -> Self {
        Term::Var(name.into())
    }

    /// `bias + sum_k coef[k] * vars[k]`, in that order.
    pub fn affine(coef: &[f64], bias: f64, vars: &[Term]) -> Self {
        let mut terms = vec![Term::Const(bias)];
        terms.extend(
            coef.iter()
                .zip(vars)
                .map(|(c, v)| Term::Scale(*c, Box::new(v.clone()))),
        );
        Term::Sum(terms)
    }
}

impl fmt::Display for Term {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Term::Var(name) => write!(f, "{name}"),
            Term::Const(v) => write!(f, "{}", smt_decimal(*v)),
            Term::Scale(c, t) => write!(f, "(* {} {t})", smt_decimal(*c)),
            Term::Exact(r) => write!(f, "{}", smt_rational(r)),
            Term::ExactScale(c, t) => write!(f, "(* {} {t})", smt_rational(c)),
            Term::Sum(ts) => match ts.as_slice() {
                [] => write!(f, "0.0"),
                [t] => write!(f, "{t}"),
                _ => {
                    write!(f, "(+")?;
                    for t in ts {
                        write!(f, " {t}")?;
                    }
                    write!(f, ")")
                }
            },
            Term::Ite(c, a, b) => write!(f, "(ite {c} {a} {b})"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Cmp {
    Le,
    Lt,
    Ge,
    Gt,
    Eq,
}

impl Cmp {
    fn symbol(self) -> &'static str {
        match self {
            Cmp::Le => "<=",
            Cmp::Lt => "<",
            Cmp::Ge => ">=",
            Cmp::Gt => ">",
            Cmp::Eq => "=",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Formula {
    True,
    False,
    Compare(Cmp, Term, Term),
    And(Vec<Formula>),
    Or(Vec<Formula>),
    Not(Box<Formula>),
    Implies(Box<Formula>, Box<Formula>),
    /// Application of a defined Boolean function.
    Apply(String, Vec<Term>),
}

impl Formula {
    pub fn cmp(op: Cmp, lhs: Term, rhs: Term) -> Self {
        Formula::Compare(op, lhs, rhs)
    }

    /// Conjunction with trivial cases folded.
    pub fn and(parts: Vec<Formula>) -> Self {
        let parts: Vec<Formula> = parts.into_iter().filter(|p| *p != Formula::True).collect();
        if parts.contains(&Formula::False) {
            return Formula::False;
        }
        match parts.len() {
            0 => Formula::True,
            1 => parts.into_iter().next().expect("one part"),
            _ => Formula::And(parts),
        }
    }

    /// Disjunction with trivial cases folded.
    pub fn or(parts: Vec<Formula>) -> Self {
        let parts: Vec<Formula> = parts.into_iter().filter(|p| *p != Formula::False).collect();
        if parts.contains(&Formula::True) {
            return Formula::True;
        }
        match parts.len() {
            0 => Formula::False,
            1 => parts.into_iter().next().expect("one part"),
            _ => Formula::Or(parts),
        }
    }

    pub fn implies(lhs: Formula, rhs: Formula) -> Self {
        Formula::Implies(Box::new(lhs), Box::new(rhs))
    }
}

fn write_list(f: &mut fmt::Formatter<'_>, head: &str, items: &[Formula]) -> fmt::Result {
    write!(f, "({head}")?;
    for it in items {
        write!(f, " {it}")?;
    }
    write!(f, ")")
}

impl fmt::Display for Formula {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Formula::True => write!(f, "true"),
            Formula::False => write!(f, "false"),
            Formula::Compare(op, a, b) => write!(f, "({} {a} {b})", op.symbol()),
            Formula::And(ps) => write_list(f, "and", ps),
            Formula::Or(ps) => write_list(f, "or", ps),
            Formula::Not(p) => write!(f, "(not {p})"),
            Formula::Implies(a, b) => write!(f, "(=> {a} {b})"),
            Formula::Apply(name, args) if args.is_empty() => write!(f, "{name}"),
            Formula::Apply(name, args) => {
                write!(f, "({name}")?;
                for a in args {
                    write!(f, " {a}")?;
                }
                write!(f, ")")
            }
        }
    }
}

/// An SMT-LIB2 script kept as ordered command lines.
#[derive(Debug, Clone, PartialEq)]
pub struct SmtScript {
    pub logic: String,
    pub lines: Vec<String>,
}

impl SmtScript {
    pub fn new(logic: &str) -> Self {
        Self {
            logic: logic.to_string(),
            lines: vec![format!("(set-logic {logic})")],
        }
    }

    pub fn comment(&mut self, text: &str) {
        self.lines.push(format!("; {text}"));
    }

    pub fn declare_real(&mut self, name: &str) {
        self.lines.push(format!("(declare-const {name} Real)"));
    }

    pub fn define_bool(&mut self, name: &str, params: &[String], body: &Formula) {
        let params: Vec<String> = params.iter().map(|p| format!("({p} Real)")).collect();
        self.lines
            .push(format!("(define-fun {name} ({}) Bool {body})", params.join(" ")));
    }

    pub fn assert(&mut self, f: &Formula) {
        self.lines.push(format!("(assert {f})"));
    }

    pub fn check_sat(&mut self) {
        self.lines.push("(check-sat)".into());
    }

    pub fn get_model(&mut self) {
        self.lines.push("(get-model)".into());
    }

    pub fn text(&self) -> String {
        let mut s = self.lines.join("\n");
        s.push('\n');
        s
    }
}
