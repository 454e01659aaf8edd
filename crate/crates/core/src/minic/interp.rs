//! Deterministic fuel-bounded interpreter. It never panics on a parsed program:
//! every failure is reported as a [`RuntimeFault`] inside the [`RunOutcome`].

use std::collections::HashMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use super::ast::*;

pub const DEFAULT_FUEL: u64 = 100_000;

/// Bound on interpreter recursion (statement and expression nesting across calls).
pub const MAX_EVAL_DEPTH: usize = 1500;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Value {
    Int(i64),
    Bool(bool),
}

impl Value {
    pub fn ty(self) -> Type {
        match self {
            Value::Int(_) => Type::Int,
            Value::Bool(_) => Type::Bool,
        }
    }

    fn default_of(ty: Type) -> Value {
        match ty {
            Type::Int => Value::Int(0),
            Type::Bool => Value::Bool(false),
        }
    }
}

impl fmt::Display for Value {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Value::Int(v) => write!(f, "{v}"),
            Value::Bool(b) => write!(f, "{b}"),
        }
    }
}

impl std::str::FromStr for Value {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim() {
            "true" => Ok(Value::Bool(true)),
            "false" => Ok(Value::Bool(false)),
            other => other
                .parse::<i64>()
                .map(Value::Int)
                .map_err(|_| format!("not an int or bool: {other:?}")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum RuntimeFault {
    FuelExhausted,
    DivByZero,
    TypeFault,
    UnboundVar,
    DepthExceeded,
}

impl fmt::Display for RuntimeFault {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunOutcome {
    pub result: Result<Value, RuntimeFault>,
    pub steps_used: u64,
}

enum Flow {
    Normal,
    Break,
    Continue,
    Return(Value),
}

type Exec<T> = Result<T, RuntimeFault>;

/// Runs `entry` with `args`. One step is charged per statement executed, per
/// expression node evaluated and per loop iteration.
pub fn interpret(unit: &SourceUnit, entry: &str, args: &[Value], fuel: u64) -> RunOutcome {
    let mut m = Machine {
        functions: HashMap::new(),
        steps: 0,
        fuel,
        depth: 0,
    };
    for f in &unit.functions {
        m.functions.entry(f.name.as_str()).or_insert(f);
    }
    let result = m.call(entry, args.to_vec());
    RunOutcome {
        result,
        steps_used: m.steps,
    }
}

struct Machine<'a> {
    functions: HashMap<&'a str, &'a FunctionDef>,
    steps: u64,
    fuel: u64,
    depth: usize,
}

#[derive(Default)]
struct Frame {
    scopes: Vec<Vec<(String, Value)>>,
}

impl Frame {
    fn lookup(&self, name: &str) -> Exec<Value> {
        self.scopes
            .iter()
            .rev()
            .flat_map(|s| s.iter().rev())
            .find(|(n, _)| n == name)
            .map(|(_, v)| *v)
            .ok_or(RuntimeFault::UnboundVar)
    }

    fn assign(&mut self, name: &str, value: Value) -> Exec<()> {
        let slot = self
            .scopes
            .iter_mut()
            .rev()
            .flat_map(|s| s.iter_mut().rev())
            .find(|(n, _)| n == name)
            .ok_or(RuntimeFault::UnboundVar)?;
        if slot.1.ty() != value.ty() {
            return Err(RuntimeFault::TypeFault);
        }
        slot.1 = value;
        Ok(())
    }

    fn declare(&mut self, name: &str, value: Value) {
        if let Some(scope) = self.scopes.last_mut() {
            scope.push((name.to_string(), value));
        }
    }
}

fn as_int(v: Value) -> Exec<i64> {
    match v {
        Value::Int(i) => Ok(i),
        Value::Bool(_) => Err(RuntimeFault::TypeFault),
    }
}

fn as_bool(v: Value) -> Exec<bool> {
    match v {
        Value::Bool(b) => Ok(b),
        Value::Int(_) => Err(RuntimeFault::TypeFault),
    }
}

impl<'a> Machine<'a> {
    fn tick(&mut self) -> Exec<()> {
        if self.steps >= self.fuel {
            return Err(RuntimeFault::FuelExhausted);
        }
        self.steps += 1;
        Ok(())
    }

    fn descend(&mut self) -> Exec<()> {
        self.depth += 1;
        if self.depth > MAX_EVAL_DEPTH {
            return Err(RuntimeFault::DepthExceeded);
        }
        Ok(())
    }

    fn call(&mut self, name: &str, args: Vec<Value>) -> Exec<Value> {
        let func = *self.functions.get(name).ok_or(RuntimeFault::UnboundVar)?;
        if func.params.len() != args.len() {
            return Err(RuntimeFault::TypeFault);
        }
        let mut scope = Vec::with_capacity(args.len());
        for (p, a) in func.params.iter().zip(args) {
            if p.ty != a.ty() {
                return Err(RuntimeFault::TypeFault);
            }
            scope.push((p.name.clone(), a));
        }
        let mut frame = Frame {
            scopes: vec![scope],
        };
        // the body shares the parameter scope
        let mut flow = Flow::Normal;
        for s in &func.body.stmts {
            flow = self.exec(&mut frame, s)?;
            if !matches!(flow, Flow::Normal) {
                break;
            }
        }
        match flow {
            Flow::Return(v) if v.ty() == func.ret => Ok(v),
            _ => Err(RuntimeFault::TypeFault),
        }
    }

    fn exec_block(&mut self, frame: &mut Frame, stmts: &'a [Stmt]) -> Exec<Flow> {
        frame.scopes.push(Vec::new());
        for s in stmts {
            let flow = self.exec(frame, s)?;
            if !matches!(flow, Flow::Normal) {
                frame.scopes.pop();
                return Ok(flow);
            }
        }
        frame.scopes.pop();
        Ok(Flow::Normal)
    }

    fn exec(&mut self, frame: &mut Frame, stmt: &'a Stmt) -> Exec<Flow> {
        self.descend()?;
        let out = self.exec_inner(frame, stmt);
        self.depth -= 1;
        out
    }

    fn exec_inner(&mut self, frame: &mut Frame, stmt: &'a Stmt) -> Exec<Flow> {
        self.tick()?;
        match &stmt.kind {
            StmtKind::Decl { ty, vars } => {
                for d in vars {
                    let v = match &d.init {
                        Some(e) => {
                            let v = self.eval(frame, e)?;
                            if v.ty() != *ty {
                                return Err(RuntimeFault::TypeFault);
                            }
                            v
                        }
                        None => Value::default_of(*ty),
                    };
                    frame.declare(&d.name, v);
                }
            }
            StmtKind::Assign { target, value } => {
                let v = self.eval(frame, value)?;
                frame.assign(target, v)?;
            }
            StmtKind::CompoundAssign { target, op, value } => {
                let cur = as_int(frame.lookup(target)?)?;
                let rhs = as_int(self.eval(frame, value)?)?;
                frame.assign(target, Value::Int(arith(*op, cur, rhs)?))?;
            }
            StmtKind::IncDec { target, increment } => {
                let cur = as_int(frame.lookup(target)?)?;
                let next = if *increment {
                    cur.wrapping_add(1)
                } else {
                    cur.wrapping_sub(1)
                };
                frame.assign(target, Value::Int(next))?;
            }
            StmtKind::If {
                cond,
                then_block,
                else_block,
            } => {
                if as_bool(self.eval(frame, cond)?)? {
                    return self.exec_block(frame, &then_block.stmts);
                } else if let Some(b) = else_block {
                    return self.exec_block(frame, &b.stmts);
                }
            }
            StmtKind::While { cond, body } => loop {
                self.tick()?;
                if !as_bool(self.eval(frame, cond)?)? {
                    break;
                }
                match self.exec_block(frame, &body.stmts)? {
                    Flow::Break => break,
                    Flow::Return(v) => return Ok(Flow::Return(v)),
                    Flow::Normal | Flow::Continue => {}
                }
            },
            StmtKind::For {
                init,
                cond,
                step,
                body,
            } => {
                frame.scopes.push(Vec::new());
                let flow = self.run_for(frame, init, cond, step, body);
                frame.scopes.pop();
                return flow;
            }
            StmtKind::Switch { scrutinee, arms } => {
                let v = as_int(self.eval(frame, scrutinee)?)?;
                let start = arms
                    .iter()
                    .position(|a| a.label == CaseLabel::Case(v))
                    .or_else(|| arms.iter().position(|a| a.label == CaseLabel::Default));
                if let Some(start) = start {
                    for arm in &arms[start..] {
                        match self.exec_block(frame, &arm.body)? {
                            Flow::Normal => {}
                            Flow::Break => break,
                            other => return Ok(other),
                        }
                    }
                }
            }
            StmtKind::Return(e) => return Ok(Flow::Return(self.eval(frame, e)?)),
            StmtKind::Block(b) => return self.exec_block(frame, &b.stmts),
            StmtKind::Expr(e) => {
                self.eval(frame, e)?;
            }
            StmtKind::Break => return Ok(Flow::Break),
            StmtKind::Continue => return Ok(Flow::Continue),
        }
        Ok(Flow::Normal)
    }

    fn run_for(
        &mut self,
        frame: &mut Frame,
        init: &'a Option<Box<Stmt>>,
        cond: &'a Option<Expr>,
        step: &'a Option<Box<Stmt>>,
        body: &'a Block,
    ) -> Exec<Flow> {
        if let Some(i) = init {
            self.exec(frame, i)?;
        }
        loop {
            self.tick()?;
            if let Some(c) = cond {
                if !as_bool(self.eval(frame, c)?)? {
                    break;
                }
            }
            match self.exec_block(frame, &body.stmts)? {
                Flow::Break => break,
                Flow::Return(v) => return Ok(Flow::Return(v)),
                Flow::Normal | Flow::Continue => {}
            }
            if let Some(s) = step {
                self.exec(frame, s)?;
            }
        }
        Ok(Flow::Normal)
    }

    fn eval(&mut self, frame: &mut Frame, e: &'a Expr) -> Exec<Value> {
        self.descend()?;
        let out = self.eval_inner(frame, e);
        self.depth -= 1;
        out
    }

    fn eval_inner(&mut self, frame: &mut Frame, e: &'a Expr) -> Exec<Value> {
        self.tick()?;
        match &e.kind {
            ExprKind::Int(v) => Ok(Value::Int(*v)),
            ExprKind::Bool(b) => Ok(Value::Bool(*b)),
            ExprKind::Var(name) => frame.lookup(name),
            ExprKind::Paren(inner) => self.eval(frame, inner),
            ExprKind::Unary(op, operand) => {
                let v = self.eval(frame, operand)?;
                match op {
                    UnOp::Not => Ok(Value::Bool(!as_bool(v)?)),
                    UnOp::Neg => Ok(Value::Int(as_int(v)?.wrapping_neg())),
                }
            }
            ExprKind::Binary(op, l, r) => {
                let lv = self.eval(frame, l)?;
                match op {
                    BinOp::And | BinOp::Or => {
                        let lb = as_bool(lv)?;
                        if (*op == BinOp::And && !lb) || (*op == BinOp::Or && lb) {
                            return Ok(Value::Bool(lb));
                        }
                        Ok(Value::Bool(as_bool(self.eval(frame, r)?)?))
                    }
                    BinOp::Eq | BinOp::Ne => {
                        let rv = self.eval(frame, r)?;
                        if lv.ty() != rv.ty() {
                            return Err(RuntimeFault::TypeFault);
                        }
                        Ok(Value::Bool((lv == rv) == (*op == BinOp::Eq)))
                    }
                    op if op.is_relational() => {
                        let a = as_int(lv)?;
                        let b = as_int(self.eval(frame, r)?)?;
                        Ok(Value::Bool(match op {
                            BinOp::Lt => a < b,
                            BinOp::Le => a <= b,
                            BinOp::Gt => a > b,
                            _ => a >= b,
                        }))
                    }
                    op => {
                        let a = as_int(lv)?;
                        let b = as_int(self.eval(frame, r)?)?;
                        Ok(Value::Int(arith(*op, a, b)?))
                    }
                }
            }
            ExprKind::Ternary(c, a, b) => {
                if as_bool(self.eval(frame, c)?)? {
                    self.eval(frame, a)
                } else {
                    self.eval(frame, b)
                }
            }
            ExprKind::Call(name, args) => {
                let mut values = Vec::with_capacity(args.len());
                for a in args {
                    values.push(self.eval(frame, a)?);
                }
                self.call(name, values)
            }
        }
    }
}

fn arith(op: BinOp, a: i64, b: i64) -> Exec<i64> {
    match op {
        BinOp::Add => Ok(a.wrapping_add(b)),
        BinOp::Sub => Ok(a.wrapping_sub(b)),
        BinOp::Mul => Ok(a.wrapping_mul(b)),
        BinOp::Div if b == 0 => Err(RuntimeFault::DivByZero),
        BinOp::Div => Ok(a.wrapping_div(b)),
        BinOp::Rem if b == 0 => Err(RuntimeFault::DivByZero),
        BinOp::Rem => Ok(a.wrapping_rem(b)),
        _ => Err(RuntimeFault::TypeFault),
    }
}
