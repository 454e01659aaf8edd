//! Syntax tree for MiniC.
//!
//! Node ids are assigned in preorder by [`SourceUnit::renumber`]. Every tree
//! handed out by the parser or by a transformation is renumbered, so two trees
//! with the same shape compare equal with the derived `PartialEq`.

use std::fmt;

pub type NodeId = u32;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Type {
    Int,
    Bool,
}

impl fmt::Display for Type {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Type::Int => "int",
            Type::Bool => "bool",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct SourceUnit {
    pub functions: Vec<FunctionDef>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FunctionDef {
    pub id: NodeId,
    pub name: String,
    pub ret: Type,
    pub params: Vec<Param>,
    pub body: Block,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Param {
    pub id: NodeId,
    pub ty: Type,
    pub name: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Block {
    pub stmts: Vec<Stmt>,
}

impl Block {
    pub fn new(stmts: Vec<Stmt>) -> Self {
        Block { stmts }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Stmt {
    pub id: NodeId,
    pub kind: StmtKind,
}

impl Stmt {
    pub fn new(kind: StmtKind) -> Self {
        Stmt { id: 0, kind }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Declarator {
    pub id: NodeId,
    pub name: String,
    pub init: Option<Expr>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CaseLabel {
    Case(i64),
    Default,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SwitchArm {
    pub id: NodeId,
    pub label: CaseLabel,
    pub body: Vec<Stmt>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum StmtKind {
    Decl {
        ty: Type,
        vars: Vec<Declarator>,
    },
    Assign {
        target: String,
        value: Expr,
    },
    CompoundAssign {
        target: String,
        op: BinOp,
        value: Expr,
    },
    IncDec {
        target: String,
        increment: bool,
    },
    If {
        cond: Expr,
        then_block: Block,
        else_block: Option<Block>,
    },
    While {
        cond: Expr,
        body: Block,
    },
    For {
        init: Option<Box<Stmt>>,
        cond: Option<Expr>,
        step: Option<Box<Stmt>>,
        body: Block,
    },
    Switch {
        scrutinee: Expr,
        arms: Vec<SwitchArm>,
    },
    Return(Expr),
    Block(Block),
    Expr(Expr),
    Break,
    Continue,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum UnOp {
    Not,
    Neg,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BinOp {
    Add,
    Sub,
    Mul,
    Div,
    Rem,
    Lt,
    Le,
    Gt,
    Ge,
    Eq,
    Ne,
    And,
    Or,
}

impl BinOp {
    pub fn symbol(self) -> &'static str {
        match self {
            BinOp::Add => "+",
            BinOp::Sub => "-",
            BinOp::Mul => "*",
            BinOp::Div => "/",
            BinOp::Rem => "%",
            BinOp::Lt => "<",
            BinOp::Le => "<=",
            BinOp::Gt => ">",
            BinOp::Ge => ">=",
            BinOp::Eq => "==",
            BinOp::Ne => "!=",
            BinOp::And => "&&",
            BinOp::Or => "||",
        }
    }

    /// Binding strength; larger binds tighter. All binary operators are left associative.
    pub fn precedence(self) -> u8 {
        match self {
            BinOp::Or => PREC_OR,
            BinOp::And => PREC_AND,
            BinOp::Eq | BinOp::Ne => PREC_EQUALITY,
            BinOp::Lt | BinOp::Le | BinOp::Gt | BinOp::Ge => PREC_RELATIONAL,
            BinOp::Add | BinOp::Sub => PREC_ADDITIVE,
            BinOp::Mul | BinOp::Div | BinOp::Rem => PREC_MULTIPLICATIVE,
        }
    }

    /// Operators allowed in `x op= e`.
    pub fn is_arithmetic(self) -> bool {
        matches!(
            self,
            BinOp::Add | BinOp::Sub | BinOp::Mul | BinOp::Div | BinOp::Rem
        )
    }

    pub fn is_relational(self) -> bool {
        matches!(self, BinOp::Lt | BinOp::Le | BinOp::Gt | BinOp::Ge)
    }
}

pub const PREC_TERNARY: u8 = 1;
pub const PREC_OR: u8 = 2;
pub const PREC_AND: u8 = 3;
pub const PREC_EQUALITY: u8 = 4;
pub const PREC_RELATIONAL: u8 = 5;
pub const PREC_ADDITIVE: u8 = 6;
pub const PREC_MULTIPLICATIVE: u8 = 7;
pub const PREC_UNARY: u8 = 8;
pub const PREC_PRIMARY: u8 = 9;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Expr {
    pub id: NodeId,
    pub kind: ExprKind,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ExprKind {
    Int(i64),
    Bool(bool),
    Var(String),
    Unary(UnOp, Box<Expr>),
    Binary(BinOp, Box<Expr>, Box<Expr>),
    Ternary(Box<Expr>, Box<Expr>, Box<Expr>),
    Call(String, Vec<Expr>),
    Paren(Box<Expr>),
}

impl Expr {
    pub fn new(kind: ExprKind) -> Self {
        Expr { id: 0, kind }
    }

    pub fn int(v: i64) -> Self {
        Expr::new(ExprKind::Int(v))
    }

    pub fn boolean(v: bool) -> Self {
        Expr::new(ExprKind::Bool(v))
    }

    pub fn var(name: impl Into<String>) -> Self {
        Expr::new(ExprKind::Var(name.into()))
    }

    pub fn paren(inner: Expr) -> Self {
        Expr::new(ExprKind::Paren(Box::new(inner)))
    }

    pub fn precedence(&self) -> u8 {
        match &self.kind {
            ExprKind::Int(_)
            | ExprKind::Bool(_)
            | ExprKind::Var(_)
            | ExprKind::Call(..)
            | ExprKind::Paren(_) => PREC_PRIMARY,
            ExprKind::Unary(..) => PREC_UNARY,
            ExprKind::Binary(op, ..) => op.precedence(),
            ExprKind::Ternary(..) => PREC_TERNARY,
        }
    }

    /// Builds `lhs op rhs`, parenthesizing operands so the tree survives a print/parse cycle.
    pub fn binary(op: BinOp, lhs: Expr, rhs: Expr) -> Self {
        let prec = op.precedence();
        let lhs = wrap_if(lhs, |e| e.precedence() < prec);
        let rhs = wrap_if(rhs, |e| e.precedence() <= prec);
        Expr::new(ExprKind::Binary(op, Box::new(lhs), Box::new(rhs)))
    }

    pub fn unary(op: UnOp, operand: Expr) -> Self {
        let operand = wrap_if(operand, |e| e.precedence() < PREC_UNARY);
        Expr::new(ExprKind::Unary(op, Box::new(operand)))
    }

    pub fn ternary(cond: Expr, then_e: Expr, else_e: Expr) -> Self {
        let cond = wrap_if(cond, |e| e.precedence() <= PREC_TERNARY);
        Expr::new(ExprKind::Ternary(
            Box::new(cond),
            Box::new(then_e),
            Box::new(else_e),
        ))
    }

    /// Integer constant, spelled as a negation when negative.
    pub fn int_const(v: i64) -> Self {
        if v < 0 {
            Expr::unary(UnOp::Neg, Expr::int(v.unsigned_abs() as i64))
        } else {
            Expr::int(v)
        }
    }

    /// Strips any number of redundant parentheses.
    pub fn unparen(&self) -> &Expr {
        let mut e = self;
        while let ExprKind::Paren(inner) = &e.kind {
            e = inner;
        }
        e
    }

    /// True when evaluating the expression may invoke a function.
    pub fn contains_call(&self) -> bool {
        let mut found = false;
        self.walk(&mut |e| {
            if matches!(e.kind, ExprKind::Call(..)) {
                found = true;
            }
        });
        found
    }

    /// Preorder walk over this expression and all subexpressions.
    pub fn walk(&self, f: &mut dyn FnMut(&Expr)) {
        f(self);
        match &self.kind {
            ExprKind::Int(_) | ExprKind::Bool(_) | ExprKind::Var(_) => {}
            ExprKind::Unary(_, e) | ExprKind::Paren(e) => e.walk(f),
            ExprKind::Binary(_, l, r) => {
                l.walk(f);
                r.walk(f);
            }
            ExprKind::Ternary(c, a, b) => {
                c.walk(f);
                a.walk(f);
                b.walk(f);
            }
            ExprKind::Call(_, args) => {
                for a in args {
                    a.walk(f);
                }
            }
        }
    }

    pub fn walk_mut(&mut self, f: &mut dyn FnMut(&mut Expr)) {
        f(self);
        match &mut self.kind {
            ExprKind::Int(_) | ExprKind::Bool(_) | ExprKind::Var(_) => {}
            ExprKind::Unary(_, e) | ExprKind::Paren(e) => e.walk_mut(f),
            ExprKind::Binary(_, l, r) => {
                l.walk_mut(f);
                r.walk_mut(f);
            }
            ExprKind::Ternary(c, a, b) => {
                c.walk_mut(f);
                a.walk_mut(f);
                b.walk_mut(f);
            }
            ExprKind::Call(_, args) => {
                for a in args {
                    a.walk_mut(f);
                }
            }
        }
    }
}

fn wrap_if(e: Expr, pred: impl Fn(&Expr) -> bool) -> Expr {
    if pred(&e) {
        Expr::paren(e)
    } else {
        e
    }
}

impl Stmt {
    /// Expressions directly owned by this statement (not by nested statements).
    pub fn own_exprs(&self) -> Vec<&Expr> {
        match &self.kind {
            StmtKind::Decl { vars, .. } => vars.iter().filter_map(|d| d.init.as_ref()).collect(),
            StmtKind::Assign { value, .. } | StmtKind::CompoundAssign { value, .. } => vec![value],
            StmtKind::If { cond, .. } | StmtKind::While { cond, .. } => vec![cond],
            StmtKind::For { cond, .. } => cond.iter().collect(),
            StmtKind::Switch { scrutinee, .. } => vec![scrutinee],
            StmtKind::Return(e) | StmtKind::Expr(e) => vec![e],
            StmtKind::IncDec { .. }
            | StmtKind::Block(_)
            | StmtKind::Break
            | StmtKind::Continue => vec![],
        }
    }

    /// Statements nested directly or transitively inside this one, preorder, excluding self.
    pub fn walk_children(&self, f: &mut dyn FnMut(&Stmt)) {
        let visit_list = |list: &[Stmt], f: &mut dyn FnMut(&Stmt)| {
            for s in list {
                f(s);
                s.walk_children(f);
            }
        };
        match &self.kind {
            StmtKind::If {
                then_block,
                else_block,
                ..
            } => {
                visit_list(&then_block.stmts, f);
                if let Some(b) = else_block {
                    visit_list(&b.stmts, f);
                }
            }
            StmtKind::While { body, .. } => visit_list(&body.stmts, f),
            StmtKind::For {
                init, step, body, ..
            } => {
                if let Some(s) = init {
                    f(s);
                    s.walk_children(f);
                }
                if let Some(s) = step {
                    f(s);
                    s.walk_children(f);
                }
                visit_list(&body.stmts, f);
            }
            StmtKind::Switch { arms, .. } => {
                for arm in arms {
                    visit_list(&arm.body, f);
                }
            }
            StmtKind::Block(b) => visit_list(&b.stmts, f),
            _ => {}
        }
    }

    /// Applies `f` to this statement and every nested statement.
    pub fn walk(&self, f: &mut dyn FnMut(&Stmt)) {
        f(self);
        self.walk_children(f);
    }

    /// Every expression reachable from this statement, including nested statements.
    pub fn walk_exprs(&self, f: &mut dyn FnMut(&Expr)) {
        self.walk(&mut |s| {
            for e in s.own_exprs() {
                e.walk(f);
            }
        });
    }
}

impl SourceUnit {
    pub fn function(&self, name: &str) -> Option<&FunctionDef> {
        self.functions.iter().find(|f| f.name == name)
    }

    /// Reassigns node ids in preorder starting at 1.
    pub fn renumber(&mut self) {
        let mut next: NodeId = 1;
        let mut fresh = || {
            let id = next;
            next += 1;
            id
        };
        for func in &mut self.functions {
            func.id = fresh();
            for p in &mut func.params {
                p.id = fresh();
            }
            renumber_list(&mut func.body.stmts, &mut fresh);
        }
    }

    /// Calls `f` on every statement of every function in preorder.
    pub fn walk_stmts(&self, f: &mut dyn FnMut(&FunctionDef, &Stmt)) {
        for func in &self.functions {
            for s in &func.body.stmts {
                s.walk(&mut |st| f(func, st));
            }
        }
    }

    /// Every identifier spelled anywhere in the unit.
    pub fn identifiers(&self) -> std::collections::BTreeSet<String> {
        let mut names = std::collections::BTreeSet::new();
        for func in &self.functions {
            names.insert(func.name.clone());
            for p in &func.params {
                names.insert(p.name.clone());
            }
        }
        self.walk_stmts(&mut |_, s| {
            match &s.kind {
                StmtKind::Decl { vars, .. } => {
                    for d in vars {
                        names.insert(d.name.clone());
                    }
                }
                StmtKind::Assign { target, .. }
                | StmtKind::CompoundAssign { target, .. }
                | StmtKind::IncDec { target, .. } => {
                    names.insert(target.clone());
                }
                _ => {}
            }
            for e in s.own_exprs() {
                e.walk(&mut |e| match &e.kind {
                    ExprKind::Var(n) | ExprKind::Call(n, _) => {
                        names.insert(n.clone());
                    }
                    _ => {}
                });
            }
        });
        names
    }
}

fn renumber_list(list: &mut [Stmt], fresh: &mut impl FnMut() -> NodeId) {
    for s in list {
        renumber_stmt(s, fresh);
    }
}

fn renumber_stmt(s: &mut Stmt, fresh: &mut impl FnMut() -> NodeId) {
    s.id = fresh();
    match &mut s.kind {
        StmtKind::Decl { vars, .. } => {
            for d in vars {
                d.id = fresh();
                if let Some(e) = &mut d.init {
                    renumber_expr(e, fresh);
                }
            }
        }
        StmtKind::Assign { value, .. } | StmtKind::CompoundAssign { value, .. } => {
            renumber_expr(value, fresh)
        }
        StmtKind::IncDec { .. } | StmtKind::Break | StmtKind::Continue => {}
        StmtKind::If {
            cond,
            then_block,
            else_block,
        } => {
            renumber_expr(cond, fresh);
            renumber_list(&mut then_block.stmts, fresh);
            if let Some(b) = else_block {
                renumber_list(&mut b.stmts, fresh);
            }
        }
        StmtKind::While { cond, body } => {
            renumber_expr(cond, fresh);
            renumber_list(&mut body.stmts, fresh);
        }
        StmtKind::For {
            init,
            cond,
            step,
            body,
        } => {
            if let Some(s) = init {
                renumber_stmt(s, fresh);
            }
            if let Some(c) = cond {
                renumber_expr(c, fresh);
            }
            if let Some(s) = step {
                renumber_stmt(s, fresh);
            }
            renumber_list(&mut body.stmts, fresh);
        }
        StmtKind::Switch { scrutinee, arms } => {
            renumber_expr(scrutinee, fresh);
            for arm in arms {
                arm.id = fresh();
                renumber_list(&mut arm.body, fresh);
            }
        }
        StmtKind::Return(e) | StmtKind::Expr(e) => renumber_expr(e, fresh),
        StmtKind::Block(b) => renumber_list(&mut b.stmts, fresh),
    }
}

fn renumber_expr(e: &mut Expr, fresh: &mut impl FnMut() -> NodeId) {
    e.walk_mut(&mut |node| node.id = fresh());
}
