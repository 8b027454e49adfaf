//! Sandboxed expression language for scripted action payloads and toggle
//! state extractors.
//!
//! A script is a single expression over JSON values. There are no loops,
//! assignments or host calls; evaluation always terminates. The names in
//! scope are supplied by the caller through [`Bindings`]; actions use
//! `context`, `tool`, `settings` and `now`, feedback extractors additionally
//! see `message`.
//!
//! ```text
//! { linear: settings.max_speed * 0.5, target: tool.waypoint }
//! message.brightness >= 0.75 ? 2 : (message.brightness >= 0.25 ? 1 : 0)
//! nearest_index([0, 0.5, 1], message.brightness)
//! ```
//!
//! Builtins: `min max abs floor ceil round clamp len str num int
//! index_of nearest_index has`.

use alloc::boxed::Box;
use alloc::collections::BTreeMap;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt;

use serde_json::{Map, Number, Value};

use crate::math;

const MAX_DEPTH: usize = 64;
const MAX_SOURCE: usize = 16 * 1024;
const MAX_STRING: usize = 64 * 1024;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ScriptError {
    #[error("syntax error at {pos}: {msg}")]
    Syntax { pos: usize, msg: String },
    #[error("evaluation error: {0}")]
    Eval(String),
}

fn eval_err<T>(msg: impl Into<String>) -> Result<T, ScriptError> {
    Err(ScriptError::Eval(msg.into()))
}

/// Names visible to a script.
#[derive(Debug, Clone, Default)]
pub struct Bindings<'a> {
    vars: BTreeMap<&'a str, &'a Value>,
}

impl<'a> Bindings<'a> {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with(mut self, name: &'a str, value: &'a Value) -> Self {
        self.vars.insert(name, value);
        self
    }

    pub fn set(&mut self, name: &'a str, value: &'a Value) {
        self.vars.insert(name, value);
    }
}

/// A parsed expression.
#[derive(Debug, Clone, PartialEq)]
pub struct Script {
    source: String,
    expr: Expr,
}

impl Script {
    pub fn parse(source: &str) -> Result<Script, ScriptError> {
        if source.len() > MAX_SOURCE {
            return Err(ScriptError::Syntax {
                pos: 0,
                msg: "script too long".into(),
            });
        }
        let tokens = lex(source)?;
        let mut p = Parser {
            tokens,
            pos: 0,
            depth: 0,
        };
        let expr = p.expr()?;
        if let Some(t) = p.peek() {
            return Err(ScriptError::Syntax {
                pos: t.pos,
                msg: alloc::format!("unexpected {}", t.tok),
            });
        }
        Ok(Script {
            source: source.to_string(),
            expr,
        })
    }

    pub fn source(&self) -> &str {
        &self.source
    }

    pub fn eval(&self, bindings: &Bindings<'_>) -> Result<Value, ScriptError> {
        eval(&self.expr, bindings)
    }
}

/// Parses and evaluates `source` in one go.
pub fn eval_str(source: &str, bindings: &Bindings<'_>) -> Result<Value, ScriptError> {
    Script::parse(source)?.eval(bindings)
}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Num(f64, bool),
    Str(String),
    Ident(String),
    Punct(&'static str),
}

impl fmt::Display for Tok {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Tok::Num(n, _) => write!(f, "number {n}"),
            Tok::Str(s) => write!(f, "string {s:?}"),
            Tok::Ident(s) => write!(f, "`{s}`"),
            Tok::Punct(p) => write!(f, "`{p}`"),
        }
    }
}

#[derive(Debug, Clone)]
struct Token {
    tok: Tok,
    pos: usize,
}

const PUNCT: [&str; 25] = [
    "==", "!=", "<=", ">=", "&&", "||", "<", ">", "+", "-", "*", "/", "%", "!", "?", ":", ".", ",", "(", ")", "[", "]",
    "{", "}", ";",
];

fn lex(src: &str) -> Result<Vec<Token>, ScriptError> {
    let bytes = src.as_bytes();
    let mut out = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        let c = bytes[i];
        if c.is_ascii_whitespace() {
            i += 1;
            continue;
        }
        let start = i;
        if c.is_ascii_digit() {
            let mut is_int = true;
            while i < bytes.len() && bytes[i].is_ascii_digit() {
                i += 1;
            }
            if i + 1 < bytes.len() && bytes[i] == b'.' && bytes[i + 1].is_ascii_digit() {
                is_int = false;
                i += 1;
                while i < bytes.len() && bytes[i].is_ascii_digit() {
                    i += 1;
                }
            }
            if i < bytes.len() && (bytes[i] == b'e' || bytes[i] == b'E') {
                let mut j = i + 1;
                if j < bytes.len() && (bytes[j] == b'+' || bytes[j] == b'-') {
                    j += 1;
                }
                if j < bytes.len() && bytes[j].is_ascii_digit() {
                    is_int = false;
                    i = j;
                    while i < bytes.len() && bytes[i].is_ascii_digit() {
                        i += 1;
                    }
                }
            }
            let text = &src[start..i];
            let n: f64 = text.parse().map_err(|_| ScriptError::Syntax {
                pos: start,
                msg: alloc::format!("bad number `{text}`"),
            })?;
            out.push(Token {
                tok: Tok::Num(n, is_int && n.abs() < 9.0e15),
                pos: start,
            });
            continue;
        }
        if c.is_ascii_alphabetic() || c == b'_' {
            while i < bytes.len() && (bytes[i].is_ascii_alphanumeric() || bytes[i] == b'_') {
                i += 1;
            }
            out.push(Token {
                tok: Tok::Ident(src[start..i].to_string()),
                pos: start,
            });
            continue;
        }
        if c == b'"' || c == b'\'' {
            let quote = c;
            i += 1;
            let mut s = String::new();
            loop {
                let Some(&b) = bytes.get(i) else {
                    return Err(ScriptError::Syntax {
                        pos: start,
                        msg: "unterminated string".into(),
                    });
                };
                if b == quote {
                    i += 1;
                    break;
                }
                if b == b'\\' {
                    let esc = bytes.get(i + 1).copied();
                    s.push(match esc {
                        Some(b'n') => '\n',
                        Some(b't') => '\t',
                        Some(b'\\') => '\\',
                        Some(b'"') => '"',
                        Some(b'\'') => '\'',
                        _ => {
                            return Err(ScriptError::Syntax {
                                pos: i,
                                msg: "bad escape".into(),
                            })
                        }
                    });
                    i += 2;
                    continue;
                }
                // copy one UTF-8 scalar
                let ch = src[i..].chars().next().unwrap_or('\u{fffd}');
                s.push(ch);
                i += ch.len_utf8();
            }
            out.push(Token {
                tok: Tok::Str(s),
                pos: start,
            });
            continue;
        }
        match PUNCT.iter().find(|p| src[i..].starts_with(**p)) {
            Some(p) => {
                i += p.len();
                out.push(Token {
                    tok: Tok::Punct(p),
                    pos: start,
                });
            }
            None => {
                return Err(ScriptError::Syntax {
                    pos: start,
                    msg: alloc::format!("unexpected character `{}`", src[i..].chars().next().unwrap_or('?')),
                })
            }
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
enum Expr {
    Lit(Value),
    Var(String),
    Array(Vec<Expr>),
    Object(Vec<(String, Expr)>),
    Member(Box<Expr>, String),
    Index(Box<Expr>, Box<Expr>),
    Call(String, Vec<Expr>),
    Unary(&'static str, Box<Expr>),
    Binary(&'static str, Box<Expr>, Box<Expr>),
    Cond(Box<Expr>, Box<Expr>, Box<Expr>),
}

struct Parser {
    tokens: Vec<Token>,
    pos: usize,
    depth: usize,
}

impl Parser {
    fn peek(&self) -> Option<&Token> {
        self.tokens.get(self.pos)
    }

    fn at(&self, p: &str) -> bool {
        matches!(self.peek(), Some(Token { tok: Tok::Punct(q), .. }) if *q == p)
    }

    fn eat(&mut self, p: &str) -> bool {
        if self.at(p) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn err<T>(&self, msg: &str) -> Result<T, ScriptError> {
        let pos = self
            .peek()
            .map(|t| t.pos)
            .unwrap_or_else(|| self.tokens.last().map(|t| t.pos + 1).unwrap_or(0));
        let found = self
            .peek()
            .map(|t| t.tok.to_string())
            .unwrap_or_else(|| "end of input".into());
        Err(ScriptError::Syntax {
            pos,
            msg: alloc::format!("{msg}, found {found}"),
        })
    }

    fn expect(&mut self, p: &str) -> Result<(), ScriptError> {
        if self.eat(p) {
            Ok(())
        } else {
            self.err(&alloc::format!("expected `{p}`"))
        }
    }

    fn expr(&mut self) -> Result<Expr, ScriptError> {
        self.depth += 1;
        if self.depth > MAX_DEPTH {
            return self.err("expression nested too deeply");
        }
        let cond = self.binary(0)?;
        let out = if self.eat("?") {
            let a = self.expr()?;
            self.expect(":")?;
            let b = self.expr()?;
            Expr::Cond(Box::new(cond), Box::new(a), Box::new(b))
        } else {
            cond
        };
        self.depth -= 1;
        Ok(out)
    }

    fn binary(&mut self, level: usize) -> Result<Expr, ScriptError> {
        const LEVELS: [&[&str]; 6] = [
            &["||"],
            &["&&"],
            &["==", "!="],
            &["<", "<=", ">", ">="],
            &["+", "-"],
            &["*", "/", "%"],
        ];
        if level == LEVELS.len() {
            return self.unary();
        }
        let mut lhs = self.binary(level + 1)?;
        loop {
            let op = LEVELS[level].iter().find(|op| self.at(op)).copied();
            let Some(op) = op else { break };
            self.pos += 1;
            let rhs = self.binary(level + 1)?;
            lhs = Expr::Binary(op, Box::new(lhs), Box::new(rhs));
        }
        Ok(lhs)
    }

    fn unary(&mut self) -> Result<Expr, ScriptError> {
        for op in ["!", "-"] {
            if self.eat(op) {
                self.depth += 1;
                if self.depth > MAX_DEPTH {
                    return self.err("expression nested too deeply");
                }
                let inner = self.unary()?;
                self.depth -= 1;
                return Ok(Expr::Unary(op, Box::new(inner)));
            }
        }
        self.postfix()
    }

    fn postfix(&mut self) -> Result<Expr, ScriptError> {
        let mut e = self.primary()?;
        loop {
            if self.eat(".") {
                match self.peek().map(|t| t.tok.clone()) {
                    Some(Tok::Ident(name)) => {
                        self.pos += 1;
                        e = Expr::Member(Box::new(e), name);
                    }
                    _ => return self.err("expected field name"),
                }
            } else if self.eat("[") {
                let idx = self.expr()?;
                self.expect("]")?;
                e = Expr::Index(Box::new(e), Box::new(idx));
            } else {
                return Ok(e);
            }
        }
    }

    fn list(&mut self, close: &str) -> Result<Vec<Expr>, ScriptError> {
        let mut items = Vec::new();
        if self.eat(close) {
            return Ok(items);
        }
        loop {
            items.push(self.expr()?);
            if self.eat(close) {
                return Ok(items);
            }
            self.expect(",")?;
            if self.eat(close) {
                return Ok(items);
            }
        }
    }

    fn primary(&mut self) -> Result<Expr, ScriptError> {
        let Some(tok) = self.peek().map(|t| t.tok.clone()) else {
            return self.err("expected expression");
        };
        self.pos += 1;
        match tok {
            Tok::Num(n, true) => Ok(Expr::Lit(Value::from(n as i64))),
            Tok::Num(n, false) => Ok(Expr::Lit(num(n))),
            Tok::Str(s) => Ok(Expr::Lit(Value::String(s))),
            Tok::Ident(name) => match name.as_str() {
                "true" => Ok(Expr::Lit(Value::Bool(true))),
                "false" => Ok(Expr::Lit(Value::Bool(false))),
                "null" => Ok(Expr::Lit(Value::Null)),
                _ if self.eat("(") => {
                    let args = self.list(")")?;
                    Ok(Expr::Call(name, args))
                }
                _ => Ok(Expr::Var(name)),
            },
            Tok::Punct("(") => {
                let e = self.expr()?;
                self.expect(")")?;
                Ok(e)
            }
            Tok::Punct("[") => Ok(Expr::Array(self.list("]")?)),
            Tok::Punct("{") => {
                let mut fields = Vec::new();
                if self.eat("}") {
                    return Ok(Expr::Object(fields));
                }
                loop {
                    let key = match self.peek().map(|t| t.tok.clone()) {
                        Some(Tok::Ident(k)) | Some(Tok::Str(k)) => k,
                        _ => return self.err("expected object key"),
                    };
                    self.pos += 1;
                    self.expect(":")?;
                    fields.push((key, self.expr()?));
                    if self.eat("}") {
                        return Ok(Expr::Object(fields));
                    }
                    self.expect(",")?;
                    if self.eat("}") {
                        return Ok(Expr::Object(fields));
                    }
                }
            }
            _ => {
                self.pos -= 1;
                self.err("expected expression")
            }
        }
    }
}

fn num(f: f64) -> Value {
    Number::from_f64(f).map(Value::Number).unwrap_or(Value::Null)
}

fn as_num(v: &Value, what: &str) -> Result<f64, ScriptError> {
    v.as_f64()
        .ok_or_else(|| ScriptError::Eval(alloc::format!("{what}: expected a number, got {v}")))
}

fn truthy(v: &Value) -> bool {
    match v {
        Value::Null => false,
        Value::Bool(b) => *b,
        Value::Number(n) => n.as_f64().is_some_and(|f| f != 0.0),
        Value::String(s) => !s.is_empty(),
        Value::Array(_) | Value::Object(_) => true,
    }
}

fn to_text(v: &Value) -> String {
    match v {
        Value::String(s) => s.clone(),
        other => other.to_string(),
    }
}

fn values_equal(a: &Value, b: &Value) -> bool {
    match (a, b) {
        (Value::Number(x), Value::Number(y)) => x.as_f64() == y.as_f64(),
        _ => a == b,
    }
}

fn arith(op: &str, a: &Value, b: &Value) -> Result<Value, ScriptError> {
    if op == "+" && (a.is_string() || b.is_string()) {
        let s = to_text(a) + &to_text(b);
        if s.len() > MAX_STRING {
            return eval_err("string too long");
        }
        return Ok(Value::String(s));
    }
    if let (Some(x), Some(y)) = (a.as_i64(), b.as_i64()) {
        let r = match op {
            "+" => x.checked_add(y),
            "-" => x.checked_sub(y),
            "*" => x.checked_mul(y),
            "%" if y != 0 => x.checked_rem(y),
            "/" if y != 0 && x % y == 0 => x.checked_div(y),
            _ => None,
        };
        if let Some(r) = r {
            return Ok(Value::from(r));
        }
    }
    let x = as_num(a, op)?;
    let y = as_num(b, op)?;
    let r = match op {
        "+" => x + y,
        "-" => x - y,
        "*" => x * y,
        "/" => {
            if y == 0.0 {
                return eval_err("division by zero");
            }
            x / y
        }
        "%" => {
            if y == 0.0 {
                return eval_err("division by zero");
            }
            libm::fmod(x, y)
        }
        _ => unreachable!(),
    };
    if !r.is_finite() {
        return eval_err("arithmetic overflow");
    }
    Ok(num(r))
}

fn compare(op: &str, a: &Value, b: &Value) -> Result<Value, ScriptError> {
    let ord = match (a, b) {
        (Value::String(x), Value::String(y)) => x.cmp(y),
        _ => {
            let (x, y) = (as_num(a, op)?, as_num(b, op)?);
            x.partial_cmp(&y)
                .ok_or_else(|| ScriptError::Eval("incomparable".into()))?
        }
    };
    use core::cmp::Ordering::*;
    Ok(Value::Bool(match op {
        "<" => ord == Less,
        "<=" => ord != Greater,
        ">" => ord == Greater,
        ">=" => ord != Less,
        _ => unreachable!(),
    }))
}

fn eval(e: &Expr, b: &Bindings<'_>) -> Result<Value, ScriptError> {
    match e {
        Expr::Lit(v) => Ok(v.clone()),
        Expr::Var(name) => b
            .vars
            .get(name.as_str())
            .map(|v| (*v).clone())
            .ok_or_else(|| ScriptError::Eval(alloc::format!("unknown name `{name}`"))),
        Expr::Array(items) => Ok(Value::Array(
            items.iter().map(|i| eval(i, b)).collect::<Result<_, _>>()?,
        )),
        Expr::Object(fields) => {
            let mut m = Map::new();
            for (k, v) in fields {
                m.insert(k.clone(), eval(v, b)?);
            }
            Ok(Value::Object(m))
        }
        Expr::Member(obj, field) => Ok(match eval(obj, b)? {
            Value::Object(mut m) => m.remove(field).unwrap_or(Value::Null),
            Value::Array(a) if field == "length" => Value::from(a.len()),
            Value::Null => return eval_err(alloc::format!("cannot read `{field}` of null")),
            _ => Value::Null,
        }),
        Expr::Index(obj, idx) => {
            let target = eval(obj, b)?;
            let idx = eval(idx, b)?;
            Ok(match (target, idx) {
                (Value::Array(mut a), Value::Number(n)) => match n.as_u64() {
                    Some(i) if (i as usize) < a.len() => a.swap_remove(i as usize),
                    _ => Value::Null,
                },
                (Value::Object(mut m), Value::String(k)) => m.remove(&k).unwrap_or(Value::Null),
                (Value::Null, _) => return eval_err("cannot index null"),
                _ => Value::Null,
            })
        }
        Expr::Unary(op, inner) => {
            let v = eval(inner, b)?;
            match *op {
                "!" => Ok(Value::Bool(!truthy(&v))),
                _ => match v.as_i64() {
                    Some(i) if i != i64::MIN => Ok(Value::from(-i)),
                    _ => Ok(num(-as_num(&v, "-")?)),
                },
            }
        }
        Expr::Binary(op, l, r) => match *op {
            "&&" => {
                let lv = eval(l, b)?;
                if !truthy(&lv) {
                    Ok(lv)
                } else {
                    eval(r, b)
                }
            }
            "||" => {
                let lv = eval(l, b)?;
                if truthy(&lv) {
                    Ok(lv)
                } else {
                    eval(r, b)
                }
            }
            "==" => Ok(Value::Bool(values_equal(&eval(l, b)?, &eval(r, b)?))),
            "!=" => Ok(Value::Bool(!values_equal(&eval(l, b)?, &eval(r, b)?))),
            "<" | "<=" | ">" | ">=" => compare(op, &eval(l, b)?, &eval(r, b)?),
            _ => arith(op, &eval(l, b)?, &eval(r, b)?),
        },
        Expr::Cond(c, t, f) => {
            if truthy(&eval(c, b)?) {
                eval(t, b)
            } else {
                eval(f, b)
            }
        }
        Expr::Call(name, args) => {
            let args: Vec<Value> = args.iter().map(|a| eval(a, b)).collect::<Result<_, _>>()?;
            call(name, &args)
        }
    }
}

fn arity(name: &str, args: &[Value], n: usize) -> Result<(), ScriptError> {
    if args.len() != n {
        return eval_err(alloc::format!("{name}() takes {n} argument(s), got {}", args.len()));
    }
    Ok(())
}

fn call(name: &str, args: &[Value]) -> Result<Value, ScriptError> {
    let unary_num = |f: fn(f64) -> f64| -> Result<Value, ScriptError> {
        arity(name, args, 1)?;
        let x = as_num(&args[0], name)?;
        let r = f(x);
        if libm::trunc(r) == r && r.abs() < 9.0e15 {
            Ok(Value::from(r as i64))
        } else {
            Ok(num(r))
        }
    };
    match name {
        "abs" => {
            arity(name, args, 1)?;
            match args[0].as_i64() {
                Some(i) if i != i64::MIN => Ok(Value::from(i.abs())),
                _ => Ok(num(as_num(&args[0], name)?.abs())),
            }
        }
        "floor" => unary_num(math::floor),
        "ceil" => unary_num(libm::ceil),
        "round" => unary_num(math::round),
        "min" | "max" => {
            if args.is_empty() {
                return eval_err(alloc::format!("{name}() needs arguments"));
            }
            let mut best = &args[0];
            as_num(best, name)?;
            for a in &args[1..] {
                let (x, y) = (as_num(a, name)?, as_num(best, name)?);
                if (name == "min" && x < y) || (name == "max" && x > y) {
                    best = a;
                }
            }
            Ok(best.clone())
        }
        "clamp" => {
            arity(name, args, 3)?;
            let (x, lo, hi) = (
                as_num(&args[0], name)?,
                as_num(&args[1], name)?,
                as_num(&args[2], name)?,
            );
            if lo > hi {
                return eval_err("clamp(): lower bound above upper bound");
            }
            Ok(if x < lo {
                args[1].clone()
            } else if x > hi {
                args[2].clone()
            } else {
                args[0].clone()
            })
        }
        "len" => {
            arity(name, args, 1)?;
            match &args[0] {
                Value::Array(a) => Ok(Value::from(a.len())),
                Value::Object(o) => Ok(Value::from(o.len())),
                Value::String(s) => Ok(Value::from(s.chars().count())),
                v => eval_err(alloc::format!("len(): unsupported value {v}")),
            }
        }
        "str" => {
            arity(name, args, 1)?;
            Ok(Value::String(to_text(&args[0])))
        }
        "num" => {
            arity(name, args, 1)?;
            match &args[0] {
                Value::Number(_) => Ok(args[0].clone()),
                Value::Bool(b) => Ok(Value::from(*b as i64)),
                Value::String(s) => s
                    .trim()
                    .parse::<f64>()
                    .ok()
                    .filter(|f| f.is_finite())
                    .map(num)
                    .ok_or_else(|| ScriptError::Eval(alloc::format!("num(): cannot parse {s:?}"))),
                v => eval_err(alloc::format!("num(): unsupported value {v}")),
            }
        }
        "int" => unary_num(libm::trunc),
        "has" => {
            arity(name, args, 2)?;
            match (&args[0], &args[1]) {
                (Value::Object(o), Value::String(k)) => Ok(Value::Bool(o.contains_key(k))),
                _ => Ok(Value::Bool(false)),
            }
        }
        "index_of" => {
            arity(name, args, 2)?;
            let Value::Array(a) = &args[0] else {
                return eval_err("index_of(): first argument must be an array");
            };
            Ok(a.iter()
                .position(|x| values_equal(x, &args[1]))
                .map(Value::from)
                .unwrap_or(Value::from(-1)))
        }
        "nearest_index" => {
            arity(name, args, 2)?;
            let Value::Array(a) = &args[0] else {
                return eval_err("nearest_index(): first argument must be an array");
            };
            let x = as_num(&args[1], name)?;
            let mut best: Option<(usize, f64)> = None;
            for (i, v) in a.iter().enumerate() {
                let d = (as_num(v, name)? - x).abs();
                if best.is_none_or(|(_, bd)| d < bd) {
                    best = Some((i, d));
                }
            }
            best.map(|(i, _)| Value::from(i))
                .ok_or_else(|| ScriptError::Eval("nearest_index(): empty array".into()))
        }
        _ => eval_err(alloc::format!("unknown function `{name}`")),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    fn run(src: &str) -> Result<Value, ScriptError> {
        let context = json!({"speed": 0.4, "name": "arm", "list": [1, 2, 3]});
        let settings = json!({"max_speed": 0.8});
        let message = json!({"brightness": 0.5});
        let b = Bindings::new()
            .with("context", &context)
            .with("settings", &settings)
            .with("message", &message);
        eval_str(src, &b)
    }

    #[test]
    fn literals_and_arithmetic() {
        assert_eq!(run("1 + 2 * 3").unwrap(), json!(7));
        assert_eq!(run("(1 + 2) * 3").unwrap(), json!(9));
        assert_eq!(run("7 / 2").unwrap(), json!(3.5));
        assert_eq!(run("8 / 2").unwrap(), json!(4));
        assert_eq!(run("7 % 3").unwrap(), json!(1));
        assert_eq!(run("-2 - -3").unwrap(), json!(1));
        assert_eq!(run("1.5e1").unwrap(), json!(15.0));
        assert_eq!(run("'a' + 1").unwrap(), json!("a1"));
    }

    #[test]
    fn bindings_members_and_objects() {
        assert_eq!(
            run("{linear: settings.max_speed * 0.5, who: context.name}").unwrap(),
            json!({"linear": 0.4, "who": "arm"})
        );
        assert_eq!(run("context.list[1]").unwrap(), json!(2));
        assert_eq!(run("context.list.length").unwrap(), json!(3));
        assert_eq!(run("context.missing").unwrap(), Value::Null);
        assert_eq!(run("context['speed']").unwrap(), json!(0.4));
        assert!(run("context.missing.deeper").is_err());
        assert!(run("tool.waypoint").is_err());
    }

    #[test]
    fn conditionals_and_logic() {
        assert_eq!(
            run("message.brightness >= 0.75 ? 2 : (message.brightness >= 0.25 ? 1 : 0)").unwrap(),
            json!(1)
        );
        assert_eq!(run("true && 0").unwrap(), json!(0));
        assert_eq!(run("null || 'x'").unwrap(), json!("x"));
        assert_eq!(run("!(1 == 1.0)").unwrap(), json!(false));
        assert_eq!(run("'b' > 'a'").unwrap(), json!(true));
    }

    #[test]
    fn builtins() {
        assert_eq!(run("nearest_index([0, 0.5, 1], message.brightness)").unwrap(), json!(1));
        assert_eq!(run("index_of(['a','b'], 'b')").unwrap(), json!(1));
        assert_eq!(run("clamp(5, 0, 3)").unwrap(), json!(3));
        assert_eq!(run("round(2.5)").unwrap(), json!(3));
        assert_eq!(run("min(3, 1.5, 2)").unwrap(), json!(1.5));
        assert_eq!(run("len('héllo')").unwrap(), json!(5));
        assert_eq!(run("num('2.5') + int(1.9)").unwrap(), json!(3.5));
        assert_eq!(run("has(context, 'speed')").unwrap(), json!(true));
        assert!(run("nope(1)").is_err());
        assert!(run("min()").is_err());
    }

    #[test]
    fn syntax_errors_report_position() {
        match Script::parse("1 + ") {
            Err(ScriptError::Syntax { .. }) => {}
            other => panic!("{other:?}"),
        }
        match Script::parse("1 $ 2") {
            Err(ScriptError::Syntax { pos, .. }) => assert_eq!(pos, 2),
            other => panic!("{other:?}"),
        }
        assert!(Script::parse("'open").is_err());
        assert!(Script::parse("(1").is_err());
        assert!(Script::parse("1 2").is_err());
    }

    #[test]
    fn runtime_errors() {
        assert!(run("1 / 0").is_err());
        assert!(run("'a' * 2").is_err());
        assert!(run("9223372036854775807 + 1").is_ok()); // falls back to float
    }

    #[test]
    fn nesting_is_bounded() {
        let deep = "(".repeat(500) + "1" + &")".repeat(500);
        assert!(Script::parse(&deep).is_err());
        let negs = "-".repeat(500) + "1";
        assert!(Script::parse(&negs).is_err());
    }
}
