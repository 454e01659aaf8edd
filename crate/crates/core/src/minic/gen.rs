//! Seeded random generator of well-typed, always-halting MiniC programs.
//!
//! Loops are counter driven and counters are never assigned outside their loop
//! header, so every generated program terminates. Division by variables is allowed,
//! so some argument vectors fault with `DivByZero`.

use rand::seq::SliceRandom;
use rand::Rng;

use super::ast::*;

#[derive(Debug, Clone)]
pub struct GenConfig {
    /// Maximum statement nesting depth.
    pub max_depth: usize,
    /// Maximum number of statements generated per block (before the final return).
    pub max_block: usize,
    /// Emit a helper function called from the entry function.
    pub helper: bool,
    /// Maximum expression depth.
    pub max_expr_depth: usize,
}

impl Default for GenConfig {
    fn default() -> Self {
        GenConfig {
            max_depth: 3,
            max_block: 4,
            helper: true,
            max_expr_depth: 3,
        }
    }
}

const VAR_POOL: [&str; 12] = ["a", "b", "c", "d", "s", "t", "u", "x", "y", "z", "acc", "tmp"];
const COUNTER_POOL: [&str; 6] = ["i", "j", "k", "m", "w", "q"];

#[derive(Clone)]
struct Var {
    name: String,
    ty: Type,
    mutable: bool,
}

struct Gen<'r, R: Rng> {
    rng: &'r mut R,
    cfg: GenConfig,
    scopes: Vec<Vec<Var>>,
    helper: Option<(String, usize)>,
    loop_depth: usize,
}

/// Generates a unit whose entry function is `main_entry`.
pub fn random_unit<R: Rng>(rng: &mut R, cfg: &GenConfig) -> SourceUnit {
    let mut functions = Vec::new();
    let mut helper = None;
    if cfg.helper {
        let arity = rng.gen_range(1..=2);
        let mut g = Gen::new(rng, cfg.clone(), None);
        functions.push(g.function("helper", arity, Type::Int));
        helper = Some(("helper".to_string(), arity));
    }
    let arity = rng.gen_range(1..=3);
    let mut g = Gen::new(rng, cfg.clone(), helper);
    functions.push(g.function("main_entry", arity, Type::Int));
    let mut unit = SourceUnit { functions };
    unit.renumber();
    unit
}

impl<'r, R: Rng> Gen<'r, R> {
    fn new(rng: &'r mut R, cfg: GenConfig, helper: Option<(String, usize)>) -> Self {
        Gen {
            rng,
            cfg,
            scopes: Vec::new(),
            helper,
            loop_depth: 0,
        }
    }

    fn function(&mut self, name: &str, arity: usize, ret: Type) -> FunctionDef {
        let mut params = Vec::new();
        self.scopes.push(Vec::new());
        for _ in 0..arity {
            // call sites only pass integers
            let ty = if name == "helper" || self.rng.gen_bool(0.8) {
                Type::Int
            } else {
                Type::Bool
            };
            let pname = self.fresh_name(&VAR_POOL);
            self.declare(&pname, ty, true);
            params.push(Param {
                id: 0,
                ty,
                name: pname,
            });
        }
        let mut stmts = self.stmt_list(0);
        stmts.push(Stmt::new(StmtKind::Return(self.expr(ret, 0))));
        self.scopes.pop();
        FunctionDef {
            id: 0,
            name: name.to_string(),
            ret,
            params,
            body: Block::new(stmts),
        }
    }

    fn declare(&mut self, name: &str, ty: Type, mutable: bool) {
        self.scopes.last_mut().unwrap().push(Var {
            name: name.to_string(),
            ty,
            mutable,
        });
    }

    /// A name from `pool` not declared in the innermost scope (shadowing outer ones is fine).
    fn fresh_name(&mut self, pool: &[&str]) -> String {
        let taken: Vec<&str> = self
            .scopes
            .last()
            .map(|s| s.iter().map(|v| v.name.as_str()).collect())
            .unwrap_or_default();
        let counters_visible: Vec<String> = self
            .visible()
            .into_iter()
            .filter(|v| !v.mutable)
            .map(|v| v.name)
            .collect();
        let free: Vec<&str> = pool
            .iter()
            .copied()
            .filter(|n| !taken.contains(n) && !counters_visible.iter().any(|c| c == n))
            .collect();
        match free.choose(self.rng) {
            Some(n) => n.to_string(),
            None => {
                let mut k = 0;
                loop {
                    let candidate = format!("{}{k}", pool[0]);
                    if !taken.contains(&candidate.as_str()) {
                        return candidate;
                    }
                    k += 1;
                }
            }
        }
    }

    /// Innermost-first resolution of every visible name.
    fn visible(&self) -> Vec<Var> {
        let mut seen: Vec<Var> = Vec::new();
        for scope in self.scopes.iter().rev() {
            for v in scope.iter().rev() {
                if !seen.iter().any(|s| s.name == v.name) {
                    seen.push(v.clone());
                }
            }
        }
        seen
    }

    fn pick_var(&mut self, ty: Type, mutable_only: bool) -> Option<String> {
        let candidates: Vec<String> = self
            .visible()
            .into_iter()
            .filter(|v| v.ty == ty && (!mutable_only || v.mutable))
            .map(|v| v.name)
            .collect();
        candidates.choose(self.rng).cloned()
    }

    fn stmt_list(&mut self, depth: usize) -> Vec<Stmt> {
        let n = self.rng.gen_range(1..=self.cfg.max_block);
        let mut out = Vec::new();
        for _ in 0..n {
            out.extend(self.stmt(depth));
        }
        out
    }

    fn scoped_list(&mut self, depth: usize) -> Vec<Stmt> {
        self.scopes.push(Vec::new());
        let list = self.stmt_list(depth);
        self.scopes.pop();
        list
    }

    fn stmt(&mut self, depth: usize) -> Vec<Stmt> {
        let nested = depth < self.cfg.max_depth;
        let choice = self.rng.gen_range(0..if nested { 15 } else { 7 });
        match choice {
            0 | 1 => vec![self.decl()],
            2 => match self.pick_var(Type::Int, true) {
                Some(t) => {
                    let op = *[BinOp::Add, BinOp::Sub, BinOp::Mul, BinOp::Div, BinOp::Rem]
                        .choose(self.rng)
                        .unwrap();
                    let value = self.expr(Type::Int, 1);
                    vec![Stmt::new(StmtKind::CompoundAssign {
                        target: t,
                        op,
                        value,
                    })]
                }
                None => vec![self.decl()],
            },
            3 => match self.pick_var(Type::Int, true) {
                Some(t) => vec![Stmt::new(StmtKind::IncDec {
                    target: t,
                    increment: self.rng.gen_bool(0.5),
                })],
                None => vec![self.decl()],
            },
            4 | 5 => self.assign(),
            6 => {
                if self.loop_depth > 0 && self.rng.gen_bool(0.3) {
                    // guarded jump so the rest of the loop body still runs sometimes
                    let cond = self.expr(Type::Bool, 1);
                    let jump = if self.rng.gen_bool(0.5) {
                        StmtKind::Break
                    } else {
                        StmtKind::Continue
                    };
                    vec![Stmt::new(StmtKind::If {
                        cond,
                        then_block: Block::new(vec![Stmt::new(jump)]),
                        else_block: None,
                    })]
                } else if let Some((name, arity)) = self.helper.clone() {
                    let args = (0..arity).map(|_| self.expr(Type::Int, 1)).collect();
                    vec![Stmt::new(StmtKind::Expr(Expr::new(ExprKind::Call(name, args))))]
                } else {
                    self.assign()
                }
            }
            7 | 8 => {
                let cond = self.expr(Type::Bool, 0);
                self.scopes.push(Vec::new());
                let mut then_stmts = self.stmt_list(depth + 1);
                if self.rng.gen_bool(0.15) {
                    // early return inside a branch
                    then_stmts.push(Stmt::new(StmtKind::Return(self.expr(Type::Int, 1))));
                }
                self.scopes.pop();
                let else_block = match self.rng.gen_range(0..3) {
                    0 => None,
                    1 => Some(Block::new(self.scoped_list(depth + 1))),
                    _ => {
                        let cond2 = self.expr(Type::Bool, 0);
                        let inner_then = Block::new(self.scoped_list(depth + 1));
                        Some(Block::new(vec![Stmt::new(StmtKind::If {
                            cond: cond2,
                            then_block: inner_then,
                            else_block: None,
                        })]))
                    }
                };
                vec![Stmt::new(StmtKind::If {
                    cond,
                    then_block: Block::new(then_stmts),
                    else_block,
                })]
            }
            9 | 10 => vec![self.for_loop(depth)],
            11 => self.while_loop(depth),
            12 => vec![self.switch(depth)],
            13 => vec![Stmt::new(StmtKind::Block(Block::new(self.scoped_list(depth + 1))))],
            _ => match self.pick_var(Type::Int, true) {
                Some(t) => {
                    let c = self.expr(Type::Bool, 1);
                    let a = self.expr(Type::Int, 1);
                    let b = self.expr(Type::Int, 1);
                    vec![Stmt::new(StmtKind::Assign {
                        target: t,
                        value: Expr::ternary(c, a, b),
                    })]
                }
                None => vec![self.decl()],
            },
        }
    }

    fn decl(&mut self) -> Stmt {
        let ty = if self.rng.gen_bool(0.8) { Type::Int } else { Type::Bool };
        let count = if self.rng.gen_bool(0.25) { self.rng.gen_range(2..=3) } else { 1 };
        let mut vars = Vec::new();
        for _ in 0..count {
            let init = if self.rng.gen_bool(0.85) {
                Some(self.expr(ty, 1))
            } else {
                None
            };
            let name = self.fresh_name(&VAR_POOL);
            self.declare(&name, ty, true);
            vars.push(Declarator { id: 0, name, init });
        }
        Stmt::new(StmtKind::Decl { ty, vars })
    }

    fn assign(&mut self) -> Vec<Stmt> {
        let ty = if self.rng.gen_bool(0.8) { Type::Int } else { Type::Bool };
        match self.pick_var(ty, true) {
            Some(t) => {
                let value = self.expr(ty, 0);
                vec![Stmt::new(StmtKind::Assign { target: t, value })]
            }
            None => vec![self.decl()],
        }
    }

    fn for_loop(&mut self, depth: usize) -> Stmt {
        self.scopes.push(Vec::new());
        let counter = self.fresh_name(&COUNTER_POOL);
        self.declare(&counter, Type::Int, false);
        let bound = self.rng.gen_range(0..=4);
        let init = Stmt::new(StmtKind::Decl {
            ty: Type::Int,
            vars: vec![Declarator {
                id: 0,
                name: counter.clone(),
                init: Some(Expr::int(0)),
            }],
        });
        let cond = Expr::binary(BinOp::Lt, Expr::var(&counter), Expr::int(bound));
        let step = Stmt::new(StmtKind::IncDec {
            target: counter,
            increment: true,
        });
        self.loop_depth += 1;
        let body = Block::new(self.scoped_list(depth + 1));
        self.loop_depth -= 1;
        self.scopes.pop();
        Stmt::new(StmtKind::For {
            init: Some(Box::new(init)),
            cond: Some(cond),
            step: Some(Box::new(step)),
            body,
        })
    }

    fn while_loop(&mut self, depth: usize) -> Vec<Stmt> {
        let counter = self.fresh_name(&COUNTER_POOL);
        self.declare(&counter, Type::Int, false);
        let decl = Stmt::new(StmtKind::Decl {
            ty: Type::Int,
            vars: vec![Declarator {
                id: 0,
                name: counter.clone(),
                init: Some(Expr::int(0)),
            }],
        });
        let bound = self.rng.gen_range(0..=4);
        let cond = Expr::binary(BinOp::Lt, Expr::var(&counter), Expr::int(bound));
        self.loop_depth += 1;
        let mut body = vec![Stmt::new(StmtKind::IncDec {
            target: counter,
            increment: true,
        })];
        body.extend(self.scoped_list(depth + 1));
        self.loop_depth -= 1;
        vec![
            decl,
            Stmt::new(StmtKind::While {
                cond,
                body: Block::new(body),
            }),
        ]
    }

    fn switch(&mut self, depth: usize) -> Stmt {
        let scrutinee = self.expr(Type::Int, 1);
        let mut values: Vec<i64> = (-2..=5).collect();
        values.shuffle(self.rng);
        let cases = self.rng.gen_range(1..=3);
        let mut arms = Vec::new();
        // loops inside switch arms would make `break` ambiguous for the generator's jumps
        let saved = self.loop_depth;
        self.loop_depth = 0;
        for &v in values.iter().take(cases) {
            arms.push(self.arm(CaseLabel::Case(v), depth));
        }
        if self.rng.gen_bool(0.6) {
            let at = self.rng.gen_range(0..=arms.len());
            let arm = self.arm(CaseLabel::Default, depth);
            arms.insert(at, arm);
        }
        self.loop_depth = saved;
        Stmt::new(StmtKind::Switch { scrutinee, arms })
    }

    fn arm(&mut self, label: CaseLabel, depth: usize) -> SwitchArm {
        self.scopes.push(Vec::new());
        let mut body = self.stmt_list(depth + 1);
        match self.rng.gen_range(0..10) {
            0 => {} // fallthrough
            1 => body.push(Stmt::new(StmtKind::Return(self.expr(Type::Int, 1)))),
            _ => body.push(Stmt::new(StmtKind::Break)),
        }
        self.scopes.pop();
        SwitchArm { id: 0, label, body }
    }

    fn expr(&mut self, ty: Type, depth: usize) -> Expr {
        let e = match ty {
            Type::Int => self.int_expr(depth),
            Type::Bool => self.bool_expr(depth),
        };
        if self.rng.gen_bool(0.05) {
            Expr::paren(e)
        } else {
            e
        }
    }

    fn int_expr(&mut self, depth: usize) -> Expr {
        let leaf = depth >= self.cfg.max_expr_depth || self.rng.gen_bool(0.35);
        if leaf {
            if self.rng.gen_bool(0.6) {
                if let Some(v) = self.pick_var(Type::Int, false) {
                    return Expr::var(v);
                }
            }
            return Expr::int(self.rng.gen_range(0..=9));
        }
        match self.rng.gen_range(0..10) {
            0..=5 => {
                let op = *[
                    BinOp::Add,
                    BinOp::Add,
                    BinOp::Sub,
                    BinOp::Mul,
                    BinOp::Div,
                    BinOp::Rem,
                ]
                .choose(self.rng)
                .unwrap();
                let l = self.int_expr(depth + 1);
                let r = self.int_expr(depth + 1);
                Expr::binary(op, l, r)
            }
            6 => Expr::unary(UnOp::Neg, self.int_expr(depth + 1)),
            7 => {
                let c = self.bool_expr(depth + 1);
                let a = self.int_expr(depth + 1);
                let b = self.int_expr(depth + 1);
                Expr::paren(Expr::ternary(c, a, b))
            }
            8 if self.helper.is_some() => {
                let (name, arity) = self.helper.clone().unwrap();
                let args = (0..arity).map(|_| self.int_expr(depth + 1)).collect();
                Expr::new(ExprKind::Call(name, args))
            }
            _ => Expr::paren(self.int_expr(depth + 1)),
        }
    }

    fn bool_expr(&mut self, depth: usize) -> Expr {
        let leaf = depth >= self.cfg.max_expr_depth;
        if leaf || self.rng.gen_bool(0.15) {
            if let Some(v) = self.pick_var(Type::Bool, false) {
                return Expr::var(v);
            }
            if leaf {
                return Expr::boolean(self.rng.gen_bool(0.5));
            }
        }
        match self.rng.gen_range(0..9) {
            0..=3 => {
                let op = *[
                    BinOp::Lt,
                    BinOp::Le,
                    BinOp::Gt,
                    BinOp::Ge,
                    BinOp::Eq,
                    BinOp::Ne,
                ]
                .choose(self.rng)
                .unwrap();
                let l = self.int_expr(depth + 1);
                let r = self.int_expr(depth + 1);
                Expr::binary(op, l, r)
            }
            4 => {
                let op = if self.rng.gen_bool(0.5) { BinOp::And } else { BinOp::Or };
                let l = self.bool_expr(depth + 1);
                let r = self.bool_expr(depth + 1);
                Expr::binary(op, l, r)
            }
            5 => Expr::unary(UnOp::Not, self.bool_expr(depth + 1)),
            6 => {
                let op = if self.rng.gen_bool(0.5) { BinOp::Eq } else { BinOp::Ne };
                let l = self.bool_expr(depth + 1);
                let r = self.bool_expr(depth + 1);
                Expr::binary(op, l, r)
            }
            7 => Expr::boolean(self.rng.gen_bool(0.5)),
            _ => Expr::paren(self.bool_expr(depth + 1)),
        }
    }
}
