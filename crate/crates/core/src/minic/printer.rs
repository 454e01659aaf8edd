use std::fmt::Write as _;

use super::ast::*;

/// Canonical rendering: 4-space indentation, one statement per line, braces everywhere.
///
/// The printer emits exactly the parentheses present in the tree; trees built through
/// the `Expr` constructors always carry the ones they need.
pub fn print_source(unit: &SourceUnit) -> String {
    let mut out = String::new();
    for (i, func) in unit.functions.iter().enumerate() {
        if i > 0 {
            out.push('\n');
        }
        let params: Vec<String> = func
            .params
            .iter()
            .map(|p| format!("{} {}", p.ty, p.name))
            .collect();
        let _ = writeln!(out, "{} {}({}) {{", func.ret, func.name, params.join(", "));
        print_list(&mut out, &func.body.stmts, 1);
        out.push_str("}\n");
    }
    out
}

fn indent(out: &mut String, level: usize) {
    for _ in 0..level {
        out.push_str("    ");
    }
}

fn print_list(out: &mut String, stmts: &[Stmt], level: usize) {
    for s in stmts {
        print_stmt(out, s, level);
    }
}

fn print_stmt(out: &mut String, stmt: &Stmt, level: usize) {
    indent(out, level);
    match &stmt.kind {
        StmtKind::If { .. } => print_if(out, stmt, level),
        StmtKind::While { cond, body } => {
            let _ = writeln!(out, "while ({}) {{", expr_text(cond));
            print_list(out, &body.stmts, level + 1);
            indent(out, level);
            out.push_str("}\n");
        }
        StmtKind::For {
            init,
            cond,
            step,
            body,
        } => {
            let mut header = String::from("for (");
            if let Some(s) = init {
                header.push_str(&simple_text(s));
            }
            header.push(';');
            if let Some(c) = cond {
                header.push(' ');
                header.push_str(&expr_text(c));
            }
            header.push(';');
            if let Some(s) = step {
                header.push(' ');
                header.push_str(&simple_text(s));
            }
            let _ = writeln!(out, "{header}) {{");
            print_list(out, &body.stmts, level + 1);
            indent(out, level);
            out.push_str("}\n");
        }
        StmtKind::Switch { scrutinee, arms } => {
            let _ = writeln!(out, "switch ({}) {{", expr_text(scrutinee));
            for arm in arms {
                indent(out, level + 1);
                match arm.label {
                    CaseLabel::Case(v) => {
                        let _ = writeln!(out, "case {v}:");
                    }
                    CaseLabel::Default => out.push_str("default:\n"),
                }
                print_list(out, &arm.body, level + 2);
            }
            indent(out, level);
            out.push_str("}\n");
        }
        StmtKind::Block(b) => {
            out.push_str("{\n");
            print_list(out, &b.stmts, level + 1);
            indent(out, level);
            out.push_str("}\n");
        }
        StmtKind::Return(e) => {
            let _ = writeln!(out, "return {};", expr_text(e));
        }
        StmtKind::Break => out.push_str("break;\n"),
        StmtKind::Continue => out.push_str("continue;\n"),
        _ => {
            let _ = writeln!(out, "{};", simple_text(stmt));
        }
    }
}

fn print_if(out: &mut String, stmt: &Stmt, level: usize) {
    let StmtKind::If {
        cond,
        then_block,
        else_block,
    } = &stmt.kind
    else {
        unreachable!()
    };
    let _ = writeln!(out, "if ({}) {{", expr_text(cond));
    print_list(out, &then_block.stmts, level + 1);
    indent(out, level);
    match else_block {
        None => out.push_str("}\n"),
        Some(b) => match b.stmts.as_slice() {
            [nested @ Stmt {
                kind: StmtKind::If { .. },
                ..
            }] => {
                out.push_str("} else ");
                print_if(out, nested, level);
            }
            _ => {
                out.push_str("} else {\n");
                print_list(out, &b.stmts, level + 1);
                indent(out, level);
                out.push_str("}\n");
            }
        },
    }
}

/// Declarations, assignments and expression statements without the trailing `;`.
fn simple_text(stmt: &Stmt) -> String {
    match &stmt.kind {
        StmtKind::Decl { ty, vars } => {
            let parts: Vec<String> = vars
                .iter()
                .map(|d| match &d.init {
                    Some(e) => format!("{} = {}", d.name, expr_text(e)),
                    None => d.name.clone(),
                })
                .collect();
            format!("{ty} {}", parts.join(", "))
        }
        StmtKind::Assign { target, value } => format!("{target} = {}", expr_text(value)),
        StmtKind::CompoundAssign { target, op, value } => {
            format!("{target} {}= {}", op.symbol(), expr_text(value))
        }
        StmtKind::IncDec { target, increment } => {
            format!("{target}{}", if *increment { "++" } else { "--" })
        }
        StmtKind::Expr(e) => expr_text(e),
        // control statements never appear in for-headers of parsed or transformed trees
        _ => String::new(),
    }
}

pub fn expr_text(e: &Expr) -> String {
    let mut out = String::new();
    write_expr(&mut out, e);
    out
}

fn write_expr(out: &mut String, e: &Expr) {
    match &e.kind {
        ExprKind::Int(v) => {
            let _ = write!(out, "{v}");
        }
        ExprKind::Bool(b) => out.push_str(if *b { "true" } else { "false" }),
        ExprKind::Var(name) => out.push_str(name),
        ExprKind::Unary(op, operand) => {
            out.push(match op {
                UnOp::Not => '!',
                UnOp::Neg => '-',
            });
            let inner = expr_text(operand);
            // keep `- -x` from lexing as a decrement
            if *op == UnOp::Neg && inner.starts_with('-') {
                out.push(' ');
            }
            out.push_str(&inner);
        }
        ExprKind::Binary(op, l, r) => {
            write_expr(out, l);
            let _ = write!(out, " {} ", op.symbol());
            write_expr(out, r);
        }
        ExprKind::Ternary(c, a, b) => {
            write_expr(out, c);
            out.push_str(" ? ");
            write_expr(out, a);
            out.push_str(" : ");
            write_expr(out, b);
        }
        ExprKind::Call(name, args) => {
            out.push_str(name);
            out.push('(');
            for (i, a) in args.iter().enumerate() {
                if i > 0 {
                    out.push_str(", ");
                }
                write_expr(out, a);
            }
            out.push(')');
        }
        ExprKind::Paren(inner) => {
            out.push('(');
            write_expr(out, inner);
            out.push(')');
        }
    }
}
