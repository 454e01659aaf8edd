//! The rewrites themselves. Callers check applicability first; these only fail
//! when the anchor node cannot be found.

use crate::minic::{
    BinOp, Block, CaseLabel, Declarator, Expr, ExprKind, NodeId, SourceUnit, Stmt, StmtKind,
    SymbolTable, Type, UnOp,
};

use super::sites::{has_own_jump, JumpKind};
use super::OperatorId;

pub(crate) fn rewrite(
    unit: &mut SourceUnit,
    table: &SymbolTable,
    op: OperatorId,
    id: NodeId,
    seed: u64,
) -> Result<(), String> {
    let found = match op {
        OperatorId::VarRename => rename(unit, table, id, seed),
        OperatorId::ForToWhile => on_stmt(unit, id, for_to_while),
        OperatorId::WhileToFor => on_stmt(unit, id, while_to_for),
        OperatorId::CompoundAssignExpand => on_stmt(unit, id, expand_compound),
        OperatorId::IncDecExpand => on_stmt(unit, id, expand_incdec),
        OperatorId::IfBranchSwap => on_stmt(unit, id, swap_branches),
        OperatorId::TernaryToIf => on_stmt(unit, id, ternary_to_if),
        OperatorId::SwitchToIfChain => on_stmt(unit, id, switch_to_if),
        OperatorId::RelationalMirror => on_expr(unit, id, mirror),
        OperatorId::CommutativeSwap => on_expr(unit, id, commute),
        OperatorId::ParenWrap => on_expr(unit, id, |e| {
            let inner = std::mem::replace(e, Expr::int(0));
            *e = Expr::paren(inner);
        }),
        OperatorId::BoolCondNormalize => on_expr(unit, id, |e| {
            let inner = std::mem::replace(e, Expr::int(0));
            *e = Expr::binary(BinOp::Eq, inner, Expr::boolean(true));
        }),
        OperatorId::DeclSplit => on_list(unit, id, |list, i| {
            let Stmt {
                kind: StmtKind::Decl { ty, vars },
                ..
            } = list.remove(i)
            else {
                unreachable!("DeclSplit anchored on a non-declaration")
            };
            for (k, d) in vars.into_iter().enumerate() {
                list.insert(i + k, Stmt::new(StmtKind::Decl { ty, vars: vec![d] }));
            }
        }),
        OperatorId::DeadStoreInsert => {
            let name = fresh_name(unit, "_ds_", seed % 1000, |k| k + 1, |k| k.to_string());
            on_list(unit, id, |list, i| {
                list.insert(
                    i,
                    Stmt::new(StmtKind::Decl {
                        ty: Type::Int,
                        vars: vec![Declarator {
                            id: 0,
                            name,
                            init: Some(Expr::int(0)),
                        }],
                    }),
                )
            })
        }
        OperatorId::IndependentStmtSwap => on_list(unit, id, |list, i| list.swap(i, i + 1)),
    };
    if found {
        Ok(())
    } else {
        Err(format!("node {id} not found for {op}"))
    }
}

fn splitmix(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    x = (x ^ (x >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    x ^ (x >> 31)
}

fn fresh_name(
    unit: &SourceUnit,
    prefix: &str,
    start: u64,
    next: impl Fn(u64) -> u64,
    spell: impl Fn(u64) -> String,
) -> String {
    let taken = unit.identifiers();
    let mut k = start;
    loop {
        let name = format!("{prefix}{}", spell(k));
        if !taken.contains(&name) {
            return name;
        }
        k = next(k);
    }
}

// ---- traversal -------------------------------------------------------------

fn on_stmt(unit: &mut SourceUnit, id: NodeId, f: impl FnOnce(&mut Stmt)) -> bool {
    let mut f = Some(f);
    let mut visit = |s: &mut Stmt| {
        if s.id == id {
            if let Some(f) = f.take() {
                f(s);
            }
            true
        } else {
            false
        }
    };
    unit.functions
        .iter_mut()
        .any(|func| stmts_mut(&mut func.body.stmts, &mut visit))
}

fn on_list(unit: &mut SourceUnit, id: NodeId, f: impl FnOnce(&mut Vec<Stmt>, usize)) -> bool {
    let mut f = Some(f);
    let mut visit = |list: &mut Vec<Stmt>| match list.iter().position(|s| s.id == id) {
        Some(i) => {
            if let Some(f) = f.take() {
                f(list, i);
            }
            true
        }
        None => false,
    };
    unit.functions
        .iter_mut()
        .any(|func| lists_mut(&mut func.body.stmts, &mut visit))
}

fn on_expr(unit: &mut SourceUnit, id: NodeId, f: impl FnOnce(&mut Expr)) -> bool {
    let mut f = Some(f);
    let mut visit = |s: &mut Stmt| {
        for root in own_exprs_mut(s) {
            root.walk_mut(&mut |e| {
                if e.id == id {
                    if let Some(f) = f.take() {
                        f(e);
                    }
                }
            });
        }
        f.is_none()
    };
    unit.functions
        .iter_mut()
        .any(|func| stmts_mut(&mut func.body.stmts, &mut visit))
}

/// Preorder over every statement, including `for` headers. Stops once `f` returns true.
fn stmts_mut(stmts: &mut [Stmt], f: &mut dyn FnMut(&mut Stmt) -> bool) -> bool {
    stmts.iter_mut().any(|s| stmt_mut(s, f))
}

fn stmt_mut(s: &mut Stmt, f: &mut dyn FnMut(&mut Stmt) -> bool) -> bool {
    if f(s) {
        return true;
    }
    match &mut s.kind {
        StmtKind::If {
            then_block,
            else_block,
            ..
        } => {
            stmts_mut(&mut then_block.stmts, f)
                || else_block
                    .as_mut()
                    .is_some_and(|b| stmts_mut(&mut b.stmts, f))
        }
        StmtKind::While { body, .. } => stmts_mut(&mut body.stmts, f),
        StmtKind::For {
            init, step, body, ..
        } => {
            init.as_mut().is_some_and(|s| stmt_mut(s, f))
                || step.as_mut().is_some_and(|s| stmt_mut(s, f))
                || stmts_mut(&mut body.stmts, f)
        }
        StmtKind::Switch { arms, .. } => arms.iter_mut().any(|a| stmts_mut(&mut a.body, f)),
        StmtKind::Block(b) => stmts_mut(&mut b.stmts, f),
        _ => false,
    }
}

/// Every statement list (blocks and switch arms). Stops once `f` returns true.
fn lists_mut(list: &mut Vec<Stmt>, f: &mut dyn FnMut(&mut Vec<Stmt>) -> bool) -> bool {
    if f(list) {
        return true;
    }
    list.iter_mut().any(|s| match &mut s.kind {
        StmtKind::If {
            then_block,
            else_block,
            ..
        } => {
            lists_mut(&mut then_block.stmts, f)
                || else_block
                    .as_mut()
                    .is_some_and(|b| lists_mut(&mut b.stmts, f))
        }
        StmtKind::While { body, .. } | StmtKind::For { body, .. } => lists_mut(&mut body.stmts, f),
        StmtKind::Switch { arms, .. } => arms.iter_mut().any(|a| lists_mut(&mut a.body, f)),
        StmtKind::Block(b) => lists_mut(&mut b.stmts, f),
        _ => false,
    })
}

fn own_exprs_mut(s: &mut Stmt) -> Vec<&mut Expr> {
    match &mut s.kind {
        StmtKind::Decl { vars, .. } => vars.iter_mut().filter_map(|d| d.init.as_mut()).collect(),
        StmtKind::Assign { value, .. } | StmtKind::CompoundAssign { value, .. } => vec![value],
        StmtKind::If { cond, .. } | StmtKind::While { cond, .. } => vec![cond],
        StmtKind::For { cond, .. } => cond.iter_mut().collect(),
        StmtKind::Switch { scrutinee, .. } => vec![scrutinee],
        StmtKind::Return(e) | StmtKind::Expr(e) => vec![e],
        _ => vec![],
    }
}

// ---- individual rewrites ---------------------------------------------------

fn rename(unit: &mut SourceUnit, table: &SymbolTable, decl: NodeId, seed: u64) -> bool {
    if !table.decls.contains_key(&decl) {
        return false;
    }
    let start = splitmix(seed ^ u64::from(decl).wrapping_mul(0x2545_f491_4f6c_dd1d));
    let name = fresh_name(unit, "v_", start, splitmix, |k| format!("{:04x}", k & 0xffff));
    let bound = |id: NodeId| table.bindings.get(&id) == Some(&decl);
    for func in &mut unit.functions {
        for p in &mut func.params {
            if p.id == decl {
                p.name = name.clone();
            }
        }
        stmts_mut(&mut func.body.stmts, &mut |s: &mut Stmt| {
            let use_site = bound(s.id);
            match &mut s.kind {
                StmtKind::Decl { vars, .. } => {
                    for d in vars.iter_mut().filter(|d| d.id == decl) {
                        d.name = name.clone();
                    }
                }
                StmtKind::Assign { target, .. }
                | StmtKind::CompoundAssign { target, .. }
                | StmtKind::IncDec { target, .. }
                    if use_site =>
                {
                    *target = name.clone();
                }
                _ => {}
            }
            for root in own_exprs_mut(s) {
                root.walk_mut(&mut |e| {
                    if bound(e.id) {
                        if let ExprKind::Var(n) = &mut e.kind {
                            *n = name.clone();
                        }
                    }
                });
            }
            false
        });
    }
    true
}

fn take_kind(s: &mut Stmt) -> StmtKind {
    std::mem::replace(&mut s.kind, StmtKind::Break)
}

fn for_to_while(s: &mut Stmt) {
    let StmtKind::For {
        init,
        cond,
        step,
        body,
    } = take_kind(s)
    else {
        unreachable!()
    };
    debug_assert!(!has_own_jump(&body.stmts, JumpKind::Continue));
    let top_level_decl = body
        .stmts
        .iter()
        .any(|st| matches!(st.kind, StmtKind::Decl { .. }));
    // a declaration in the body must not leak into the scope of the step
    let mut loop_body = if top_level_decl {
        vec![Stmt::new(StmtKind::Block(body))]
    } else {
        body.stmts
    };
    loop_body.extend(step.map(|b| *b));
    let mut outer: Vec<Stmt> = init.map(|b| *b).into_iter().collect();
    outer.push(Stmt::new(StmtKind::While {
        cond: cond.unwrap_or_else(|| Expr::boolean(true)),
        body: Block::new(loop_body),
    }));
    s.kind = StmtKind::Block(Block::new(outer));
}

fn while_to_for(s: &mut Stmt) {
    let StmtKind::While { cond, body } = take_kind(s) else {
        unreachable!()
    };
    s.kind = StmtKind::For {
        init: None,
        cond: Some(cond),
        step: None,
        body,
    };
}

fn expand_compound(s: &mut Stmt) {
    let StmtKind::CompoundAssign { target, op, value } = take_kind(s) else {
        unreachable!()
    };
    let value = Expr::binary(op, Expr::var(target.clone()), value);
    s.kind = StmtKind::Assign { target, value };
}

fn expand_incdec(s: &mut Stmt) {
    let StmtKind::IncDec { target, increment } = take_kind(s) else {
        unreachable!()
    };
    let op = if increment { BinOp::Add } else { BinOp::Sub };
    let value = Expr::binary(op, Expr::var(target.clone()), Expr::int(1));
    s.kind = StmtKind::Assign { target, value };
}

fn swap_branches(s: &mut Stmt) {
    let StmtKind::If {
        cond,
        then_block,
        else_block,
    } = take_kind(s)
    else {
        unreachable!()
    };
    let cond = match cond.kind {
        ExprKind::Var(_) | ExprKind::Bool(_) | ExprKind::Paren(_) | ExprKind::Call(..) => cond,
        _ => Expr::paren(cond),
    };
    s.kind = StmtKind::If {
        cond: Expr::unary(UnOp::Not, cond),
        then_block: else_block.unwrap_or_default(),
        else_block: Some(then_block),
    };
}

fn ternary_to_if(s: &mut Stmt) {
    let StmtKind::Assign { target, value } = take_kind(s) else {
        unreachable!()
    };
    let ExprKind::Ternary(c, a, b) = value.kind else {
        unreachable!()
    };
    let assign = |e: Box<Expr>| {
        Block::new(vec![Stmt::new(StmtKind::Assign {
            target: target.clone(),
            value: *e,
        })])
    };
    s.kind = StmtKind::If {
        cond: *c,
        then_block: assign(a),
        else_block: Some(assign(b)),
    };
}

fn switch_to_if(s: &mut Stmt) {
    let StmtKind::Switch { scrutinee, arms } = take_kind(s) else {
        unreachable!()
    };
    let strip = |mut body: Vec<Stmt>| {
        if matches!(body.last().map(|st| &st.kind), Some(StmtKind::Break)) {
            body.pop();
        }
        body
    };
    let mut default = None;
    let mut cases = Vec::new();
    for arm in arms {
        match arm.label {
            CaseLabel::Default => default = Some(strip(arm.body)),
            CaseLabel::Case(v) => cases.push((v, strip(arm.body))),
        }
    }
    let mut tail = default.filter(|b| !b.is_empty()).map(Block::new);
    for (v, body) in cases.into_iter().rev() {
        let cond = Expr::binary(BinOp::Eq, scrutinee.clone(), Expr::int_const(v));
        let chained = Stmt::new(StmtKind::If {
            cond,
            then_block: Block::new(body),
            else_block: tail,
        });
        tail = Some(Block::new(vec![chained]));
    }
    let mut chain = tail.expect("switch has a case").stmts;
    *s = chain.pop().unwrap();
}

fn mirror(e: &mut Expr) {
    let ExprKind::Binary(op, l, r) = std::mem::replace(&mut e.kind, ExprKind::Int(0)) else {
        unreachable!()
    };
    let flipped = match op {
        BinOp::Lt => BinOp::Gt,
        BinOp::Le => BinOp::Ge,
        BinOp::Gt => BinOp::Lt,
        BinOp::Ge => BinOp::Le,
        other => other,
    };
    e.kind = Expr::binary(flipped, *r, *l).kind;
}

fn commute(e: &mut Expr) {
    let ExprKind::Binary(op, l, r) = std::mem::replace(&mut e.kind, ExprKind::Int(0)) else {
        unreachable!()
    };
    e.kind = Expr::binary(op, *r, *l).kind;
}
