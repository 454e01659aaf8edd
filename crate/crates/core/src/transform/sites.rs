//! Applicability analysis: where each operator may fire.

use std::collections::BTreeMap;

use crate::minic::{
    expr_text, print_source, BinOp, CaseLabel, Expr, ExprKind, NodeId, SourceUnit, Stmt,
    StmtKind, SymbolTable,
};

use super::{OperatorId, Site};

/// Sites for every operator, computed in one pass over a resolved unit.
pub fn collect_sites(unit: &SourceUnit, table: &SymbolTable) -> BTreeMap<OperatorId, Vec<Site>> {
    let mut c = Collector {
        table,
        sites: BTreeMap::new(),
    };
    for op in OperatorId::ALL {
        c.sites.insert(op, Vec::new());
    }
    for (&decl, info) in &table.decls {
        c.push(OperatorId::VarRename, decl, format!("{} '{}'", kind_word(info), info.name));
    }
    for func in &unit.functions {
        c.list(&func.body.stmts);
    }
    for list in c.sites.values_mut() {
        list.sort_by_key(|s| s.node_id);
    }
    c.sites
}

fn kind_word(info: &crate::minic::scope::DeclInfo) -> &'static str {
    match info.kind {
        crate::minic::scope::DeclKind::Param => "parameter",
        crate::minic::scope::DeclKind::Local => "local",
    }
}

struct Collector<'a> {
    table: &'a SymbolTable,
    sites: BTreeMap<OperatorId, Vec<Site>>,
}

impl Collector<'_> {
    fn push(&mut self, op: OperatorId, node_id: NodeId, description: String) {
        self.sites.get_mut(&op).unwrap().push(Site {
            node_id,
            description,
        });
    }

    /// A statement list (block body or switch arm body).
    fn list(&mut self, stmts: &[Stmt]) {
        for (i, s) in stmts.iter().enumerate() {
            self.push(OperatorId::DeadStoreInsert, s.id, format!("before {}", summary(s)));
            if let StmtKind::Decl { vars, .. } = &s.kind {
                if vars.len() >= 2 {
                    self.push(OperatorId::DeclSplit, s.id, summary(s));
                }
            }
            if let StmtKind::Assign { value, .. } = &s.kind {
                if let ExprKind::Ternary(cond, _, _) = &value.kind {
                    if !cond.contains_call() {
                        self.push(OperatorId::TernaryToIf, s.id, summary(s));
                    }
                }
            }
            if let Some(next) = stmts.get(i + 1) {
                if self.swappable(s, next) {
                    self.push(
                        OperatorId::IndependentStmtSwap,
                        s.id,
                        format!("{} <-> {}", summary(s), summary(next)),
                    );
                }
            }
            self.stmt(s);
        }
    }

    fn swappable(&self, a: &Stmt, b: &Stmt) -> bool {
        if !movable(a) || !movable(b) {
            return false;
        }
        let (Some(aa), Some(ab)) = (self.table.access.get(&a.id), self.table.access.get(&b.id))
        else {
            return false;
        };
        aa.independent_of(ab) && stmt_text(a) != stmt_text(b)
    }

    fn stmt(&mut self, s: &Stmt) {
        match &s.kind {
            StmtKind::CompoundAssign { .. } => {
                self.push(OperatorId::CompoundAssignExpand, s.id, summary(s))
            }
            StmtKind::IncDec { .. } => self.push(OperatorId::IncDecExpand, s.id, summary(s)),
            StmtKind::If { cond, .. } => {
                self.push(OperatorId::IfBranchSwap, s.id, summary(s));
                self.condition(cond);
            }
            StmtKind::While { cond, .. } => {
                self.push(OperatorId::WhileToFor, s.id, summary(s));
                self.condition(cond);
            }
            StmtKind::For { cond, body, .. } => {
                if !has_own_jump(&body.stmts, JumpKind::Continue) {
                    self.push(OperatorId::ForToWhile, s.id, summary(s));
                }
                if let Some(c) = cond {
                    self.condition(c);
                }
            }
            StmtKind::Switch { scrutinee, arms } => {
                if switch_convertible(scrutinee, arms) {
                    self.push(OperatorId::SwitchToIfChain, s.id, summary(s));
                }
            }
            _ => {}
        }
        for e in s.own_exprs() {
            self.expr(e);
        }
        match &s.kind {
            StmtKind::If {
                then_block,
                else_block,
                ..
            } => {
                self.list(&then_block.stmts);
                if let Some(b) = else_block {
                    self.list(&b.stmts);
                }
            }
            StmtKind::While { body, .. } => self.list(&body.stmts),
            StmtKind::For {
                init, step, body, ..
            } => {
                if let Some(i) = init {
                    self.stmt(i);
                }
                if let Some(st) = step {
                    self.stmt(st);
                }
                self.list(&body.stmts);
            }
            StmtKind::Switch { arms, .. } => {
                for arm in arms {
                    self.list(&arm.body);
                }
            }
            StmtKind::Block(b) => self.list(&b.stmts),
            _ => {}
        }
    }

    fn condition(&mut self, cond: &Expr) {
        self.push(
            OperatorId::BoolCondNormalize,
            cond.id,
            format!("condition {}", expr_text(cond)),
        );
    }

    fn expr(&mut self, root: &Expr) {
        root.walk(&mut |e| {
            if let ExprKind::Ternary(c, _, _) = &e.kind {
                self.push(
                    OperatorId::BoolCondNormalize,
                    c.id,
                    format!("condition {}", expr_text(c)),
                );
            }
            let ExprKind::Binary(op, l, r) = &e.kind else {
                return;
            };
            let text = expr_text(e);
            self.push(OperatorId::ParenWrap, e.id, text.clone());
            let pure = !l.contains_call() && !r.contains_call();
            let distinct = expr_text(l) != expr_text(r);
            if pure && (op.is_relational() || (matches!(op, BinOp::Eq | BinOp::Ne) && distinct)) {
                self.push(OperatorId::RelationalMirror, e.id, text.clone());
            }
            if pure && distinct && matches!(op, BinOp::Add | BinOp::Mul | BinOp::Eq | BinOp::Ne) {
                self.push(OperatorId::CommutativeSwap, e.id, text);
            }
        });
    }
}

/// Neither calls, jumps, returns nor loops anywhere inside.
fn movable(s: &Stmt) -> bool {
    let mut ok = true;
    s.walk(&mut |st| {
        if matches!(
            st.kind,
            StmtKind::Return(_)
                | StmtKind::Break
                | StmtKind::Continue
                | StmtKind::While { .. }
                | StmtKind::For { .. }
        ) {
            ok = false;
        }
        for e in st.own_exprs() {
            if e.contains_call() {
                ok = false;
            }
        }
    });
    ok
}

#[derive(Clone, Copy, PartialEq, Eq)]
pub(crate) enum JumpKind {
    Break,
    Continue,
}

/// Whether `stmts` contains a jump of `kind` that binds to the enclosing construct,
/// i.e. one not nested inside an inner loop (or, for `break`, an inner switch).
pub(crate) fn has_own_jump(stmts: &[Stmt], kind: JumpKind) -> bool {
    stmts.iter().any(|s| stmt_has_own_jump(s, kind))
}

fn stmt_has_own_jump(s: &Stmt, kind: JumpKind) -> bool {
    match &s.kind {
        StmtKind::Break => kind == JumpKind::Break,
        StmtKind::Continue => kind == JumpKind::Continue,
        StmtKind::While { .. } | StmtKind::For { .. } => false,
        StmtKind::Switch { arms, .. } => {
            kind == JumpKind::Continue && arms.iter().any(|a| has_own_jump(&a.body, kind))
        }
        StmtKind::If {
            then_block,
            else_block,
            ..
        } => {
            has_own_jump(&then_block.stmts, kind)
                || else_block
                    .as_ref()
                    .is_some_and(|b| has_own_jump(&b.stmts, kind))
        }
        StmtKind::Block(b) => has_own_jump(&b.stmts, kind),
        _ => false,
    }
}

/// Every arm ends in `break` or `return`, no other `break` targets the switch, and
/// at least one arm is a `case`.
pub(crate) fn switch_convertible(scrutinee: &Expr, arms: &[crate::minic::SwitchArm]) -> bool {
    if scrutinee.contains_call() || !arms.iter().any(|a| matches!(a.label, CaseLabel::Case(_))) {
        return false;
    }
    arms.iter().all(|arm| match arm.body.split_last() {
        Some((last, rest)) => {
            matches!(last.kind, StmtKind::Break | StmtKind::Return(_))
                && !has_own_jump(rest, JumpKind::Break)
        }
        None => false,
    })
}

fn stmt_text(s: &Stmt) -> String {
    let unit = SourceUnit {
        functions: vec![crate::minic::FunctionDef {
            id: 0,
            name: "_".into(),
            ret: crate::minic::Type::Int,
            params: vec![],
            body: crate::minic::Block::new(vec![s.clone()]),
        }],
    };
    print_source(&unit)
}

/// First line of a statement's canonical text.
pub(crate) fn summary(s: &Stmt) -> String {
    let text = stmt_text(s);
    text.lines()
        .nth(1)
        .map(|l| l.trim().trim_end_matches('{').trim().to_string())
        .unwrap_or_default()
}
