//! A small s-expression language used to exercise the similarity pipeline
//! without external interpreters.
//!
//! A program is one expression over its arguments. Two dialects share the
//! semantics and differ only in surface tokens: `toy` spells keywords the
//! canonical way (`add`, `if`, `let`) and binds arguments as `x`, `x0`, `x1`;
//! `toyb` uses a different keyword set (`plus`, `cond`, `bind`), arguments
//! `a`, `a0`, `a1`, and writes numerals with an `n` suffix (`3n`, `-2.5n`).
//!
//! ```text
//! ; toy                              ; toyb
//! (if (lt x 10) (mul x 2) (add x 1)) (cond (less a 10n) (times a 2n) (plus a 1n))
//! ```

use std::time::{Duration, Instant};

use serde_json::Value;

use crate::baselines::ast::{GenericAst, NodeKind};

const MAX_NESTING: usize = 200;
const DEADLINE_CHECK_EVERY: u64 = 256;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Dialect {
    Toy,
    ToyB,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Form {
    Let,
    Set,
    Do,
    If,
    While,
}

/// Built-in operations.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Op {
    Add,
    Sub,
    Mul,
    Div,
    Mod,
    Neg,
    Abs,
    Min,
    Max,
    Lt,
    Le,
    Gt,
    Ge,
    Eq,
    Ne,
    And,
    Or,
    Not,
    Len,
    Get,
    List,
    Concat,
    Sum,
}

const FORMS: [(Form, &str, &str); 5] = [
    (Form::Let, "let", "bind"),
    (Form::Set, "set", "assign"),
    (Form::Do, "do", "seq"),
    (Form::If, "if", "cond"),
    (Form::While, "while", "loop"),
];

const OPS: [(Op, &str, &str); 23] = [
    (Op::Add, "add", "plus"),
    (Op::Sub, "sub", "minus"),
    (Op::Mul, "mul", "times"),
    (Op::Div, "div", "quot"),
    (Op::Mod, "mod", "rem"),
    (Op::Neg, "neg", "negate"),
    (Op::Abs, "abs", "magnitude"),
    (Op::Min, "min", "least"),
    (Op::Max, "max", "most"),
    (Op::Lt, "lt", "less"),
    (Op::Le, "le", "lesseq"),
    (Op::Gt, "gt", "greater"),
    (Op::Ge, "ge", "greatereq"),
    (Op::Eq, "eq", "same"),
    (Op::Ne, "ne", "differ"),
    (Op::And, "and", "both"),
    (Op::Or, "or", "either"),
    (Op::Not, "not", "isnt"),
    (Op::Len, "len", "size"),
    (Op::Get, "get", "nth"),
    (Op::List, "list", "mklist"),
    (Op::Concat, "concat", "join"),
    (Op::Sum, "sum", "total"),
];

impl Dialect {
    pub const ALL: [Dialect; 2] = [Dialect::Toy, Dialect::ToyB];

    pub fn language(self) -> &'static str {
        match self {
            Dialect::Toy => "toy",
            Dialect::ToyB => "toyb",
        }
    }

    pub fn for_language(language: &str) -> Option<Dialect> {
        Dialect::ALL.into_iter().find(|d| d.language() == language)
    }

    pub fn extension(self) -> &'static str {
        self.language()
    }

    fn pick(self, pair: (&'static str, &'static str)) -> &'static str {
        match self {
            Dialect::Toy => pair.0,
            Dialect::ToyB => pair.1,
        }
    }

    /// Surface keyword for an operation.
    pub fn op_name(self, op: Op) -> &'static str {
        let (_, a, b) = OPS.iter().find(|(o, _, _)| *o == op).expect("every op is listed");
        self.pick((a, b))
    }

    fn form_name(self, form: Form) -> &'static str {
        let (_, a, b) = FORMS.iter().find(|(f, _, _)| *f == form).expect("every form is listed");
        self.pick((a, b))
    }

    pub fn keyword(self, name: &str) -> &'static str {
        match name {
            "let" => self.form_name(Form::Let),
            "set" => self.form_name(Form::Set),
            "do" => self.form_name(Form::Do),
            "if" => self.form_name(Form::If),
            "while" => self.form_name(Form::While),
            other => panic!("unknown form {other}"),
        }
    }

    fn lookup_form(self, name: &str) -> Option<Form> {
        FORMS.iter().find(|e| self.pick((e.1, e.2)) == name).map(|e| e.0)
    }

    fn lookup_op(self, name: &str) -> Option<Op> {
        OPS.iter().find(|e| self.pick((e.1, e.2)) == name).map(|e| e.0)
    }

    fn true_word(self) -> &'static str {
        self.pick(("true", "yes"))
    }

    fn false_word(self) -> &'static str {
        self.pick(("false", "no"))
    }

    /// Name of argument `i`; argument 0 also answers to the bare prefix.
    pub fn arg_name(self, i: usize) -> String {
        format!("{}{i}", self.pick(("x", "a")))
    }

    pub fn arg_alias(self) -> &'static str {
        self.pick(("x", "a"))
    }

    /// Render an integer literal.
    pub fn int(self, v: i64) -> String {
        match self {
            Dialect::Toy => v.to_string(),
            Dialect::ToyB => format!("{v}n"),
        }
    }

    fn parse_number(self, text: &str) -> Option<Value> {
        let body = match self {
            Dialect::Toy => text,
            Dialect::ToyB => text.strip_suffix('n')?,
        };
        let digits = body.strip_prefix('-').unwrap_or(body);
        if digits.is_empty() || !digits.bytes().all(|b| b.is_ascii_digit() || b == b'.') {
            return None;
        }
        if body.contains('.') {
            body.parse::<f64>().ok().map(Value::from)
        } else {
            body.parse::<i64>().ok().map(Value::from)
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Atom {
    Number(String),
    Str(String),
    Symbol(String),
}

#[derive(Debug, Clone, PartialEq)]
enum Sexp {
    Atom(Atom),
    List(Vec<Sexp>),
}

/// Error from the toy front end or interpreter.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ToyError {
    Syntax(String),
    Runtime(String),
    Timeout,
}

impl std::fmt::Display for ToyError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            ToyError::Syntax(m) => write!(f, "syntax error: {m}"),
            ToyError::Runtime(m) => write!(f, "runtime error: {m}"),
            ToyError::Timeout => f.write_str("time limit exceeded"),
        }
    }
}

fn syntax(msg: impl Into<String>) -> ToyError {
    ToyError::Syntax(msg.into())
}

fn runtime(msg: impl Into<String>) -> ToyError {
    ToyError::Runtime(msg.into())
}

fn read_sexp(text: &str) -> Result<Sexp, ToyError> {
    let mut tokens = Vec::new();
    let mut chars = text.char_indices().peekable();
    while let Some(&(i, c)) = chars.peek() {
        match c {
            ';' => {
                while let Some(&(_, c)) = chars.peek() {
                    if c == '\n' {
                        break;
                    }
                    chars.next();
                }
            }
            '(' | ')' => {
                tokens.push(c.to_string());
                chars.next();
            }
            '"' => {
                let mut stream = serde_json::Deserializer::from_str(&text[i..]).into_iter::<String>();
                match stream.next() {
                    Some(Ok(_)) => {
                        let end = i + stream.byte_offset();
                        tokens.push(text[i..end].to_string());
                        while chars.peek().is_some_and(|&(j, _)| j < end) {
                            chars.next();
                        }
                    }
                    _ => return Err(syntax("unterminated string literal")),
                }
            }
            c if c.is_whitespace() => {
                chars.next();
            }
            _ => {
                let start = i;
                let mut end = i;
                while let Some(&(j, c)) = chars.peek() {
                    if c.is_whitespace() || matches!(c, '(' | ')' | ';' | '"') {
                        break;
                    }
                    end = j + c.len_utf8();
                    chars.next();
                }
                tokens.push(text[start..end].to_string());
            }
        }
    }

    fn build(tokens: &[String], pos: &mut usize, depth: usize) -> Result<Sexp, ToyError> {
        if depth > MAX_NESTING {
            return Err(syntax("expression nests too deeply"));
        }
        let tok = tokens.get(*pos).ok_or_else(|| syntax("unexpected end of program"))?;
        *pos += 1;
        match tok.as_str() {
            "(" => {
                let mut items = Vec::new();
                loop {
                    match tokens.get(*pos).map(String::as_str) {
                        Some(")") => {
                            *pos += 1;
                            return Ok(Sexp::List(items));
                        }
                        Some(_) => items.push(build(tokens, pos, depth + 1)?),
                        None => return Err(syntax("missing ')'")),
                    }
                }
            }
            ")" => Err(syntax("unexpected ')'")),
            t if t.starts_with('"') => Ok(Sexp::Atom(Atom::Str(
                serde_json::from_str(t).map_err(|_| syntax("bad string literal"))?,
            ))),
            t if t.starts_with(|c: char| c.is_ascii_digit() || c == '-') && t.len() > 1 || t.starts_with(|c: char| c.is_ascii_digit()) => {
                Ok(Sexp::Atom(Atom::Number(t.to_string())))
            }
            t => Ok(Sexp::Atom(Atom::Symbol(t.to_string()))),
        }
    }

    let mut pos = 0;
    let tree = build(&tokens, &mut pos, 0)?;
    if pos != tokens.len() {
        return Err(syntax("trailing tokens after the program expression"));
    }
    Ok(tree)
}

#[derive(Debug, Clone, PartialEq)]
enum Expr {
    Const(Value),
    Var(String),
    Call(Op, Vec<Expr>),
    Let(String, Box<Expr>, Box<Expr>),
    Set(String, Box<Expr>),
    Do(Vec<Expr>),
    If(Box<Expr>, Box<Expr>, Box<Expr>),
    While(Box<Expr>, Box<Expr>),
}

/// A parsed toy program.
#[derive(Debug, Clone, PartialEq)]
pub struct Program {
    dialect: Dialect,
    body: Expr,
    tree: Sexp,
}

impl Program {
    pub fn parse(text: &str, dialect: Dialect) -> Result<Self, ToyError> {
        let tree = read_sexp(text)?;
        let body = compile(&tree, dialect)?;
        Ok(Program { dialect, body, tree })
    }

    pub fn dialect(&self) -> Dialect {
        self.dialect
    }

    /// Evaluate on an argument tuple within a wall-clock budget.
    pub fn run(&self, args: &[Value], timeout: Duration) -> Result<Value, ToyError> {
        let mut env: Vec<(String, Val)> = Vec::new();
        for (i, arg) in args.iter().enumerate() {
            let v = from_json(arg)?;
            if i == 0 {
                env.push((self.dialect.arg_alias().to_string(), v.clone()));
            }
            env.push((self.dialect.arg_name(i), v));
        }
        let mut machine = Machine {
            env,
            steps: 0,
            deadline: Instant::now() + timeout,
        };
        let out = machine.eval(&self.body, 0)?;
        to_json(&out)
    }

    /// The program as a generic AST: forms and operations become nodes
    /// labelled with their surface keyword.
    pub fn generic_ast(&self) -> GenericAst {
        GenericAst::node(NodeKind::Module, None, vec![sexp_to_ast(&self.tree, self.dialect)])
    }
}

fn sexp_to_ast(sexp: &Sexp, dialect: Dialect) -> GenericAst {
    match sexp {
        Sexp::Atom(Atom::Number(t)) => GenericAst::leaf(NodeKind::Literal, t.clone()),
        Sexp::Atom(Atom::Str(s)) => GenericAst::leaf(NodeKind::Literal, s.clone()),
        Sexp::Atom(Atom::Symbol(s)) => {
            if s == dialect.true_word() || s == dialect.false_word() {
                GenericAst::leaf(NodeKind::Literal, s.clone())
            } else {
                GenericAst::leaf(NodeKind::Identifier, s.clone())
            }
        }
        Sexp::List(items) => {
            let (head, rest) = match items.split_first() {
                Some((Sexp::Atom(Atom::Symbol(h)), rest)) => (h.clone(), rest),
                _ => {
                    return GenericAst::node(
                        NodeKind::Other,
                        None,
                        items.iter().map(|i| sexp_to_ast(i, dialect)).collect(),
                    )
                }
            };
            let kind = match dialect.lookup_form(&head) {
                Some(Form::Let | Form::Set) => NodeKind::Assign,
                Some(Form::If) => NodeKind::If,
                Some(Form::While) => NodeKind::Loop,
                Some(Form::Do) => NodeKind::Other,
                None => NodeKind::Call,
            };
            GenericAst::node(
                kind,
                Some(head),
                rest.iter().map(|i| sexp_to_ast(i, dialect)).collect(),
            )
        }
    }
}

fn compile(sexp: &Sexp, d: Dialect) -> Result<Expr, ToyError> {
    match sexp {
        Sexp::Atom(Atom::Number(t)) => d
            .parse_number(t)
            .map(Expr::Const)
            .ok_or_else(|| syntax(format!("bad numeral {t:?} for dialect {}", d.language()))),
        Sexp::Atom(Atom::Str(s)) => Ok(Expr::Const(Value::from(s.clone()))),
        Sexp::Atom(Atom::Symbol(s)) => {
            if s == d.true_word() {
                Ok(Expr::Const(Value::Bool(true)))
            } else if s == d.false_word() {
                Ok(Expr::Const(Value::Bool(false)))
            } else if d.lookup_form(s).is_some() || d.lookup_op(s).is_some() {
                Err(syntax(format!("keyword {s:?} used as a variable")))
            } else {
                Ok(Expr::Var(s.clone()))
            }
        }
        Sexp::List(items) => {
            let Some((Sexp::Atom(Atom::Symbol(head)), args)) = items.split_first() else {
                return Err(syntax("expected a keyword at the head of a list"));
            };
            let arity = |n: usize| {
                if args.len() == n {
                    Ok(())
                } else {
                    Err(syntax(format!("{head} takes {n} arguments, got {}", args.len())))
                }
            };
            let name = |e: &Sexp| match e {
                Sexp::Atom(Atom::Symbol(s)) if d.lookup_form(s).is_none() && d.lookup_op(s).is_none() => {
                    Ok(s.clone())
                }
                _ => Err(syntax(format!("{head} expects a variable name"))),
            };
            let sub = |e: &Sexp| compile(e, d).map(Box::new);
            if let Some(form) = d.lookup_form(head) {
                return match form {
                    Form::Let => {
                        arity(3)?;
                        Ok(Expr::Let(name(&args[0])?, sub(&args[1])?, sub(&args[2])?))
                    }
                    Form::Set => {
                        arity(2)?;
                        Ok(Expr::Set(name(&args[0])?, sub(&args[1])?))
                    }
                    Form::Do => {
                        if args.is_empty() {
                            return Err(syntax(format!("{head} needs at least one expression")));
                        }
                        Ok(Expr::Do(args.iter().map(|a| compile(a, d)).collect::<Result<_, _>>()?))
                    }
                    Form::If => {
                        arity(3)?;
                        Ok(Expr::If(sub(&args[0])?, sub(&args[1])?, sub(&args[2])?))
                    }
                    Form::While => {
                        arity(2)?;
                        Ok(Expr::While(sub(&args[0])?, sub(&args[1])?))
                    }
                };
            }
            let op = d
                .lookup_op(head)
                .ok_or_else(|| syntax(format!("unknown operation {head:?}")))?;
            let (min, max) = op_arity(op);
            if args.len() < min || max.is_some_and(|m| args.len() > m) {
                return Err(syntax(format!("wrong number of arguments to {head}")));
            }
            Ok(Expr::Call(op, args.iter().map(|a| compile(a, d)).collect::<Result<_, _>>()?))
        }
    }
}

fn op_arity(op: Op) -> (usize, Option<usize>) {
    match op {
        Op::Neg | Op::Abs | Op::Not | Op::Len | Op::Sum => (1, Some(1)),
        Op::Sub | Op::Div | Op::Mod | Op::Lt | Op::Le | Op::Gt | Op::Ge | Op::Eq | Op::Ne | Op::Get => {
            (2, Some(2))
        }
        Op::Add | Op::Mul | Op::Min | Op::Max | Op::And | Op::Or | Op::Concat => (1, None),
        Op::List => (0, None),
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Val {
    Int(i64),
    Float(f64),
    Bool(bool),
    Str(String),
    List(Vec<Val>),
}

fn from_json(v: &Value) -> Result<Val, ToyError> {
    Ok(match v {
        Value::Bool(b) => Val::Bool(*b),
        Value::Number(n) => match n.as_i64() {
            Some(i) => Val::Int(i),
            None => Val::Float(n.as_f64().ok_or_else(|| runtime("unsupported number"))?),
        },
        Value::String(s) => Val::Str(s.clone()),
        Value::Array(items) => Val::List(items.iter().map(from_json).collect::<Result<_, _>>()?),
        Value::Null | Value::Object(_) => return Err(runtime("unsupported input value")),
    })
}

fn to_json(v: &Val) -> Result<Value, ToyError> {
    Ok(match v {
        Val::Int(i) => Value::from(*i),
        Val::Float(f) => {
            if !f.is_finite() {
                return Err(runtime("non-finite result"));
            }
            Value::from(*f)
        }
        Val::Bool(b) => Value::Bool(*b),
        Val::Str(s) => Value::from(s.clone()),
        Val::List(items) => Value::Array(items.iter().map(to_json).collect::<Result<_, _>>()?),
    })
}

struct Machine {
    env: Vec<(String, Val)>,
    steps: u64,
    deadline: Instant,
}

fn num(v: &Val) -> Result<f64, ToyError> {
    match v {
        Val::Int(i) => Ok(*i as f64),
        Val::Float(f) => Ok(*f),
        _ => Err(runtime("expected a number")),
    }
}

fn boolean(v: &Val) -> Result<bool, ToyError> {
    match v {
        Val::Bool(b) => Ok(*b),
        _ => Err(runtime("expected a boolean")),
    }
}

fn arith(
    a: &Val,
    b: &Val,
    int_op: fn(i64, i64) -> Option<i64>,
    float_op: fn(f64, f64) -> f64,
) -> Result<Val, ToyError> {
    match (a, b) {
        (Val::Int(x), Val::Int(y)) => int_op(*x, *y)
            .map(Val::Int)
            .ok_or_else(|| runtime("integer overflow or division by zero")),
        _ => Ok(Val::Float(float_op(num(a)?, num(b)?))),
    }
}

impl Machine {
    fn tick(&mut self) -> Result<(), ToyError> {
        self.steps += 1;
        if self.steps % DEADLINE_CHECK_EVERY == 0 && Instant::now() >= self.deadline {
            return Err(ToyError::Timeout);
        }
        Ok(())
    }

    fn lookup(&self, name: &str) -> Result<&Val, ToyError> {
        self.env
            .iter()
            .rev()
            .find(|(n, _)| n == name)
            .map(|(_, v)| v)
            .ok_or_else(|| runtime(format!("unbound variable {name:?}")))
    }

    fn eval(&mut self, e: &Expr, depth: usize) -> Result<Val, ToyError> {
        self.tick()?;
        if depth > MAX_NESTING {
            return Err(runtime("evaluation nests too deeply"));
        }
        match e {
            Expr::Const(v) => from_json(v),
            Expr::Var(name) => self.lookup(name).cloned(),
            Expr::Let(name, value, body) => {
                let v = self.eval(value, depth + 1)?;
                self.env.push((name.clone(), v));
                let out = self.eval(body, depth + 1);
                self.env.pop();
                out
            }
            Expr::Set(name, value) => {
                let v = self.eval(value, depth + 1)?;
                let slot = self
                    .env
                    .iter_mut()
                    .rev()
                    .find(|(n, _)| n == name)
                    .ok_or_else(|| runtime(format!("assignment to unbound variable {name:?}")))?;
                slot.1 = v.clone();
                Ok(v)
            }
            Expr::Do(items) => {
                let mut last = Val::Bool(false);
                for item in items {
                    last = self.eval(item, depth + 1)?;
                }
                Ok(last)
            }
            Expr::If(c, t, f) => {
                if boolean(&self.eval(c, depth + 1)?)? {
                    self.eval(t, depth + 1)
                } else {
                    self.eval(f, depth + 1)
                }
            }
            Expr::While(c, body) => {
                let mut iterations = 0i64;
                while boolean(&self.eval(c, depth + 1)?)? {
                    self.eval(body, depth + 1)?;
                    iterations += 1;
                }
                Ok(Val::Int(iterations))
            }
            Expr::Call(op, args) => {
                let vals = args
                    .iter()
                    .map(|a| self.eval(a, depth + 1))
                    .collect::<Result<Vec<_>, _>>()?;
                apply(*op, &vals)
            }
        }
    }
}

fn fold(vals: &[Val], f: impl Fn(&Val, &Val) -> Result<Val, ToyError>) -> Result<Val, ToyError> {
    let mut acc = vals[0].clone();
    for v in &vals[1..] {
        acc = f(&acc, v)?;
    }
    Ok(acc)
}

fn apply(op: Op, v: &[Val]) -> Result<Val, ToyError> {
    match op {
        Op::Add => fold(v, |a, b| arith(a, b, i64::checked_add, |x, y| x + y)),
        Op::Sub => arith(&v[0], &v[1], i64::checked_sub, |x, y| x - y),
        Op::Mul => fold(v, |a, b| arith(a, b, i64::checked_mul, |x, y| x * y)),
        Op::Div => {
            if num(&v[1])? == 0.0 {
                return Err(runtime("division by zero"));
            }
            arith(&v[0], &v[1], i64::checked_div_euclid, |x, y| x / y)
        }
        Op::Mod => {
            if num(&v[1])? == 0.0 {
                return Err(runtime("modulo by zero"));
            }
            arith(&v[0], &v[1], i64::checked_rem_euclid, f64::rem_euclid)
        }
        Op::Neg => match &v[0] {
            Val::Int(i) => i.checked_neg().map(Val::Int).ok_or_else(|| runtime("integer overflow")),
            other => Ok(Val::Float(-num(other)?)),
        },
        Op::Abs => match &v[0] {
            Val::Int(i) => i.checked_abs().map(Val::Int).ok_or_else(|| runtime("integer overflow")),
            other => Ok(Val::Float(num(other)?.abs())),
        },
        Op::Min => fold(v, |a, b| Ok(if num(b)? < num(a)? { b.clone() } else { a.clone() })),
        Op::Max => fold(v, |a, b| Ok(if num(b)? > num(a)? { b.clone() } else { a.clone() })),
        Op::Lt => Ok(Val::Bool(num(&v[0])? < num(&v[1])?)),
        Op::Le => Ok(Val::Bool(num(&v[0])? <= num(&v[1])?)),
        Op::Gt => Ok(Val::Bool(num(&v[0])? > num(&v[1])?)),
        Op::Ge => Ok(Val::Bool(num(&v[0])? >= num(&v[1])?)),
        Op::Eq => Ok(Val::Bool(v[0] == v[1])),
        Op::Ne => Ok(Val::Bool(v[0] != v[1])),
        Op::And => {
            let mut out = true;
            for x in v {
                out &= boolean(x)?;
            }
            Ok(Val::Bool(out))
        }
        Op::Or => {
            let mut out = false;
            for x in v {
                out |= boolean(x)?;
            }
            Ok(Val::Bool(out))
        }
        Op::Not => Ok(Val::Bool(!boolean(&v[0])?)),
        Op::Len => match &v[0] {
            Val::Str(s) => Ok(Val::Int(s.chars().count() as i64)),
            Val::List(items) => Ok(Val::Int(items.len() as i64)),
            _ => Err(runtime("len expects a string or list")),
        },
        Op::Get => {
            let idx = match &v[1] {
                Val::Int(i) if *i >= 0 => *i as usize,
                _ => return Err(runtime("index must be a non-negative integer")),
            };
            match &v[0] {
                Val::List(items) => items.get(idx).cloned().ok_or_else(|| runtime("index out of range")),
                Val::Str(s) => s
                    .chars()
                    .nth(idx)
                    .map(|c| Val::Str(c.to_string()))
                    .ok_or_else(|| runtime("index out of range")),
                _ => Err(runtime("get expects a string or list")),
            }
        }
        Op::List => Ok(Val::List(v.to_vec())),
        Op::Concat => fold(v, |a, b| match (a, b) {
            (Val::Str(x), Val::Str(y)) => Ok(Val::Str(format!("{x}{y}"))),
            (Val::List(x), Val::List(y)) => Ok(Val::List(x.iter().chain(y).cloned().collect())),
            _ => Err(runtime("concat expects two strings or two lists")),
        }),
        Op::Sum => match &v[0] {
            Val::List(items) => {
                let mut acc = Val::Int(0);
                for it in items {
                    acc = arith(&acc, it, i64::checked_add, |x, y| x + y)?;
                }
                Ok(acc)
            }
            _ => Err(runtime("sum expects a list")),
        },
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    fn run(src: &str, d: Dialect, args: Value) -> Result<Value, ToyError> {
        let p = Program::parse(src, d)?;
        p.run(args.as_array().unwrap(), Duration::from_secs(1))
    }

    #[test]
    fn identity_and_arithmetic() {
        assert_eq!(run("x", Dialect::Toy, json!([7])).unwrap(), json!(7));
        assert_eq!(run("(add (mul x 3) 7)", Dialect::Toy, json!([2])).unwrap(), json!(13));
        assert_eq!(run("(plus (times a 3n) 7n)", Dialect::ToyB, json!([2])).unwrap(), json!(13));
        assert_eq!(run("(div x 2)", Dialect::Toy, json!([-7])).unwrap(), json!(-4));
        assert_eq!(run("(mod x 5)", Dialect::Toy, json!([-7])).unwrap(), json!(3));
        assert_eq!(run("(add x 0.5)", Dialect::Toy, json!([1])).unwrap(), json!(1.5));
    }

    #[test]
    fn dialects_do_not_mix() {
        assert!(Program::parse("(plus a 1n)", Dialect::Toy).is_err());
        assert!(Program::parse("(add x 1)", Dialect::ToyB).is_err());
        assert!(Program::parse("(plus a 1)", Dialect::ToyB).is_err());
    }

    #[test]
    fn loops_and_state() {
        let src = "(let i 0 (let acc 0 (do (while (lt i x) (do (set acc (add acc i)) (set i (add i 1)))) acc)))";
        assert_eq!(run(src, Dialect::Toy, json!([5])).unwrap(), json!(10));
    }

    #[test]
    fn strings_lists_and_multiple_args() {
        assert_eq!(run("(len x0)", Dialect::Toy, json!(["hello"])).unwrap(), json!(5));
        assert_eq!(run("(sum (concat x0 x1))", Dialect::Toy, json!([[1, 2], [3]])).unwrap(), json!(6));
        assert_eq!(run("(cond (both a0 (isnt a1)) yes no)", Dialect::ToyB, json!([true, false])).unwrap(), json!(true));
        assert_eq!(run("(get x 1)", Dialect::Toy, json!(["abc"])).unwrap(), json!("b"));
    }

    #[test]
    fn runtime_errors_and_timeouts() {
        assert!(matches!(run("(div x 0)", Dialect::Toy, json!([1])), Err(ToyError::Runtime(_))));
        assert!(matches!(run("(add y 1)", Dialect::Toy, json!([1])), Err(ToyError::Runtime(_))));
        let p = Program::parse("(while true 0)", Dialect::Toy).unwrap();
        let start = Instant::now();
        assert_eq!(p.run(&[json!(1)], Duration::from_millis(50)), Err(ToyError::Timeout));
        assert!(start.elapsed() < Duration::from_secs(2));
    }

    #[test]
    fn comments_are_ignored() {
        assert_eq!(run("; doubles\n(mul x 2) ; done", Dialect::Toy, json!([4])).unwrap(), json!(8));
    }

    #[test]
    fn generic_ast_keeps_surface_labels() {
        let p = Program::parse("(plus (times a 3n) 7n)", Dialect::ToyB).unwrap();
        let ast = p.generic_ast();
        assert_eq!(
            ast.to_sexpr(),
            "(module (call:plus (call:times (identifier:a) (literal:3n)) (literal:7n)))"
        );
        let q = Program::parse("(let t (add x 1) (if (lt t 0) t (neg t)))", Dialect::Toy).unwrap();
        assert_eq!(
            q.generic_ast().to_sexpr(),
            "(module (assign:let (identifier:t) (call:add (identifier:x) (literal:1)) (if:if (call:lt (identifier:t) (literal:0)) (identifier:t) (call:neg (identifier:t)))))"
        );
    }
}
