//! S-expression reading and a floating-point evaluator for the fragment of
//! SMT-LIB2 this crate emits. Used to read solver models and to execute
//! encoded policies.

use std::collections::HashMap;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub enum SExpr {
    Atom(String),
    List(Vec<SExpr>),
}

impl SExpr {
    pub fn atom(&self) -> Option<&str> {
        match self {
            SExpr::Atom(a) => Some(a),
            SExpr::List(_) => None,
        }
    }

    pub fn list(&self) -> Option<&[SExpr]> {
        match self {
            SExpr::List(items) => Some(items),
            SExpr::Atom(_) => None,
        }
    }

    /// Head symbol of a list.
    pub fn head(&self) -> Option<&str> {
        self.list().and_then(|l| l.first()).and_then(SExpr::atom)
    }
}

fn parse_error(msg: impl Into<String>) -> Error {
    Error::SolverParse(msg.into())
}

/// Reads every top-level expression in `text`; `;` starts a line comment.
pub fn parse_all(text: &str) -> Result<Vec<SExpr>> {
    let mut stack: Vec<Vec<SExpr>> = vec![Vec::new()];
    let mut chars = text.chars().peekable();
    while let Some(&c) = chars.peek() {
        match c {
            '(' => {
                chars.next();
                stack.push(Vec::new());
            }
            ')' => {
                chars.next();
                let done = stack.pop().expect("stack never empty");
                let parent = stack.last_mut().ok_or_else(|| parse_error("unbalanced ')'"))?;
                parent.push(SExpr::List(done));
            }
            ';' => {
                for c in chars.by_ref() {
                    if c == '\n' {
                        break;
                    }
                }
            }
            '"' => {
                chars.next();
                let mut s = String::from("\"");
                loop {
                    match chars.next() {
                        Some('"') => break,
                        Some(c) => s.push(c),
                        None => return Err(parse_error("unterminated string")),
                    }
                }
                s.push('"');
                stack.last_mut().expect("stack never empty").push(SExpr::Atom(s));
            }
            c if c.is_whitespace() => {
                chars.next();
            }
            _ => {
                let mut atom = String::new();
                while let Some(&c) = chars.peek() {
                    if c.is_whitespace() || c == '(' || c == ')' || c == ';' {
                        break;
                    }
                    atom.push(c);
                    chars.next();
                }
                stack.last_mut().expect("stack never empty").push(SExpr::Atom(atom));
            }
        }
    }
    if stack.len() != 1 {
        return Err(parse_error("unbalanced '('"));
    }
    Ok(stack.pop().expect("top level"))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Value {
    Bool(bool),
    Real(f64),
}

impl Value {
    pub fn as_bool(self) -> Result<bool> {
        match self {
            Value::Bool(b) => Ok(b),
            Value::Real(_) => Err(parse_error("expected a Boolean")),
        }
    }

    pub fn as_real(self) -> Result<f64> {
        match self {
            Value::Real(v) => Ok(v),
            Value::Bool(_) => Err(parse_error("expected a real")),
        }
    }
}

#[derive(Debug, Clone)]
struct Function {
    params: Vec<String>,
    body: SExpr,
}

/// Evaluates terms in `f64`, folding sums left to right.
#[derive(Debug, Clone, Default)]
pub struct Evaluator {
    constants: HashMap<String, Value>,
    functions: HashMap<String, Function>,
}

impl Evaluator {
    pub fn new() -> Self {
        Self::default()
    }

    /// Registers every `define-fun` in a script.
    pub fn from_script(text: &str) -> Result<Self> {
        let mut ev = Self::new();
        for cmd in parse_all(text)? {
            if cmd.head() == Some("define-fun") {
                ev.define(&cmd)?;
            }
        }
        Ok(ev)
    }

    pub fn set(&mut self, name: &str, value: Value) {
        self.constants.insert(name.to_string(), value);
    }

    /// Adds a `(define-fun name ((p T) ...) Sort body)` expression. Nullary
    /// definitions are evaluated immediately.
    pub fn define(&mut self, def: &SExpr) -> Result<()> {
        let items = def.list().ok_or_else(|| parse_error("define-fun is not a list"))?;
        let [_, name, params, _sort, body] = items else {
            return Err(parse_error("malformed define-fun"));
        };
        let name = name.atom().ok_or_else(|| parse_error("define-fun name"))?;
        let params: Vec<String> = params
            .list()
            .ok_or_else(|| parse_error("define-fun parameters"))?
            .iter()
            .map(|p| {
                p.head()
                    .map(str::to_string)
                    .ok_or_else(|| parse_error("define-fun parameter"))
            })
            .collect::<Result<_>>()?;
        if params.is_empty() {
            let v = self.eval(body)?;
            self.set(name, v);
        } else {
            self.functions.insert(
                name.to_string(),
                Function {
                    params,
                    body: body.clone(),
                },
            );
        }
        Ok(())
    }

    pub fn constant(&self, name: &str) -> Option<Value> {
        self.constants.get(name).copied()
    }

    pub fn call(&self, name: &str, args: &[Value]) -> Result<Value> {
        let fun = self
            .functions
            .get(name)
            .ok_or_else(|| parse_error(format!("unknown function {name}")))?;
        if fun.params.len() != args.len() {
            return Err(parse_error(format!("{name} expects {} arguments", fun.params.len())));
        }
        let mut scope = self.clone();
        for (p, a) in fun.params.iter().zip(args) {
            scope.constants.insert(p.clone(), *a);
        }
        scope.eval(&fun.body)
    }

    pub fn eval(&self, e: &SExpr) -> Result<Value> {
        match e {
            SExpr::Atom(a) => match a.as_str() {
                "true" => Ok(Value::Bool(true)),
                "false" => Ok(Value::Bool(false)),
                _ => {
                    if let Some(v) = self.constants.get(a) {
                        return Ok(*v);
                    }
                    a.parse::<f64>()
                        .map(Value::Real)
                        .map_err(|_| parse_error(format!("unbound symbol {a}")))
                }
            },
            SExpr::List(items) => {
                let head = e.head().ok_or_else(|| parse_error("empty application"))?;
                let args = &items[1..];
                let reals = || -> Result<Vec<f64>> {
                    args.iter().map(|a| self.eval(a)?.as_real()).collect()
                };
                let bools = || -> Result<Vec<bool>> {
                    args.iter().map(|a| self.eval(a)?.as_bool()).collect()
                };
                let chain = |ok: fn(f64, f64) -> bool| -> Result<Value> {
                    let r = reals()?;
                    Ok(Value::Bool(r.windows(2).all(|w| ok(w[0], w[1]))))
                };
                match head {
                    "+" => Ok(Value::Real(fold(&reals()?, |a, b| a + b)?)),
                    "*" => Ok(Value::Real(fold(&reals()?, |a, b| a * b)?)),
                    "/" => Ok(Value::Real(fold(&reals()?, |a, b| a / b)?)),
                    "-" => {
                        let r = reals()?;
                        match r.as_slice() {
                            [x] => Ok(Value::Real(-x)),
                            _ => Ok(Value::Real(fold(&r, |a, b| a - b)?)),
                        }
                    }
                    "<=" => chain(|a, b| a <= b),
                    "<" => chain(|a, b| a < b),
                    ">=" => chain(|a, b| a >= b),
                    ">" => chain(|a, b| a > b),
                    "=" => {
                        let vals: Vec<Value> = args.iter().map(|a| self.eval(a)).collect::<Result<_>>()?;
                        Ok(Value::Bool(vals.windows(2).all(|w| w[0] == w[1])))
                    }
                    "ite" => match args {
                        [c, a, b] => {
                            if self.eval(c)?.as_bool()? {
                                self.eval(a)
                            } else {
                                self.eval(b)
                            }
                        }
                        _ => Err(parse_error("ite takes three arguments")),
                    },
                    "and" => Ok(Value::Bool(bools()?.iter().all(|b| *b))),
                    "or" => Ok(Value::Bool(bools()?.iter().any(|b| *b))),
                    "not" => match bools()?.as_slice() {
                        [b] => Ok(Value::Bool(!b)),
                        _ => Err(parse_error("not takes one argument")),
                    },
                    "=>" => {
                        let b = bools()?;
                        // right associative
                        let mut acc = *b.last().ok_or_else(|| parse_error("empty =>"))?;
                        for p in b[..b.len() - 1].iter().rev() {
                            acc = !p || acc;
                        }
                        Ok(Value::Bool(acc))
                    }
                    name => {
                        let vals: Vec<Value> = args.iter().map(|a| self.eval(a)).collect::<Result<_>>()?;
                        self.call(name, &vals)
                    }
                }
            }
        }
    }
}

fn fold(values: &[f64], op: fn(f64, f64) -> f64) -> Result<f64> {
    let (first, rest) = values
        .split_first()
        .ok_or_else(|| parse_error("operator needs arguments"))?;
    Ok(rest.iter().fold(*first, |a, b| op(a, *b)))
}

/// Real-valued assignments from a solver's `get-model` output.
pub fn parse_model(text: &str) -> Result<HashMap<String, f64>> {
    let mut out = HashMap::new();
    let ev = Evaluator::new();
    fn collect(e: &SExpr, ev: &Evaluator, out: &mut HashMap<String, f64>) -> Result<()> {
        if e.head() == Some("define-fun") {
            let items = e.list().expect("list with head");
            if let [_, name, params, _sort, body] = items {
                if params.list().is_some_and(|p| p.is_empty()) {
                    if let (Some(name), Value::Real(v)) = (name.atom(), ev.eval(body)?) {
                        out.insert(name.to_string(), v);
                    }
                }
                return Ok(());
            }
            return Err(parse_error("malformed define-fun in model"));
        }
        if let Some(items) = e.list() {
            for it in items {
                collect(it, ev, out)?;
            }
        }
        Ok(())
    }
    for e in parse_all(text)? {
        collect(&e, &ev, &mut out)?;
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_nested_lists_and_comments() {
        let e = parse_all("(a (b 1.5) ; note\n c) d").unwrap();
        assert_eq!(e.len(), 2);
        assert_eq!(e[0].head(), Some("a"));
        assert_eq!(e[1], SExpr::Atom("d".into()));
        assert!(parse_all("(a (b)").is_err());
        assert!(parse_all("a)").is_err());
    }

    #[test]
    fn evaluates_arithmetic_and_logic() {
        let ev = Evaluator::new();
        let v = |s: &str| ev.eval(&parse_all(s).unwrap()[0]).unwrap();
        assert_eq!(v("(+ 1.0 (* 2.0 3.0) (- 0.5))"), Value::Real(6.5));
        assert_eq!(v("(/ 1.0 4.0)"), Value::Real(0.25));
        assert_eq!(v("(- 3.0 1.0 1.0)"), Value::Real(1.0));
        assert_eq!(v("(and (<= 1.0 1.0) (< 1.0 2.0) (not (> 0.0 1.0)))"), Value::Bool(true));
        assert_eq!(v("(=> false false)"), Value::Bool(true));
        assert_eq!(v("(=> true false)"), Value::Bool(false));
        assert_eq!(v("(or false (= 2.0 2.0))"), Value::Bool(true));
        assert_eq!(v("(ite (< 1.0 2.0) 3.0 4.0)"), Value::Real(3.0));
    }

    #[test]
    fn calls_defined_functions() {
        let ev = Evaluator::from_script(
            "(define-fun pos ((a Real) (b Real)) Bool (> (+ a b) 0.0))\n(define-fun k () Real 2.0)",
        )
        .unwrap();
        assert_eq!(ev.constant("k"), Some(Value::Real(2.0)));
        assert_eq!(
            ev.call("pos", &[Value::Real(1.0), Value::Real(-0.5)]).unwrap(),
            Value::Bool(true)
        );
        assert!(ev.call("pos", &[Value::Real(1.0)]).is_err());
    }

    #[test]
    fn reads_solver_models() {
        let z3 = "(\n  (define-fun y () Real\n    (- (/ 1.0 20.0)))\n  (define-fun x () Real\n    2.5)\n)";
        let m = parse_model(z3).unwrap();
        assert_eq!(m["x"], 2.5);
        assert_eq!(m["y"], -0.05);
        let old = "(model (define-fun x () Real (/ 3.0 4.0)))";
        assert_eq!(parse_model(old).unwrap()["x"], 0.75);
    }
}
