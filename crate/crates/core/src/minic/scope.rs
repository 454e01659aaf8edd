//! Name resolution, static typing and per-statement read/write sets.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use thiserror::Error;

use super::ast::*;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SemanticError {
    #[error("unbound variable '{name}' in function '{function}'")]
    UnboundVar { name: String, function: String },
    #[error("duplicate declaration of '{name}' in the same scope")]
    DuplicateDecl { name: String },
    #[error("call to unknown function '{name}'")]
    CallToUnknownFunction { name: String },
    #[error("function '{name}' expects {expected} arguments, got {found}")]
    ArityMismatch {
        name: String,
        expected: usize,
        found: usize,
    },
    #[error("type mismatch in function '{function}': expected {expected}, found {found}")]
    TypeMismatch {
        function: String,
        expected: Type,
        found: Type,
    },
    #[error("'{keyword}' outside of a loop or switch in function '{function}'")]
    MisplacedJump {
        keyword: &'static str,
        function: String,
    },
    #[error("duplicate case label {value} in function '{function}'")]
    DuplicateCase { value: i64, function: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DeclKind {
    Param,
    Local,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DeclInfo {
    pub name: String,
    pub ty: Type,
    pub function: String,
    pub kind: DeclKind,
}

/// Variable names a statement (including everything nested in it) may read or write.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Access {
    pub reads: BTreeSet<String>,
    pub writes: BTreeSet<String>,
}

impl Access {
    /// No write of one statement is observed or overwritten by the other.
    pub fn independent_of(&self, other: &Access) -> bool {
        self.writes.is_disjoint(&other.reads)
            && self.writes.is_disjoint(&other.writes)
            && other.writes.is_disjoint(&self.reads)
    }
}

#[derive(Debug, Clone, Default)]
pub struct SymbolTable {
    /// Declarations keyed by the node id of the `Param` or `Declarator`.
    pub decls: BTreeMap<NodeId, DeclInfo>,
    /// Use sites (variable expressions and assignment statements) to declaration ids.
    pub bindings: BTreeMap<NodeId, NodeId>,
    /// Read/write sets for every statement.
    pub access: BTreeMap<NodeId, Access>,
}

impl SymbolTable {
    pub fn binding(&self, use_site: NodeId) -> Option<&DeclInfo> {
        self.bindings.get(&use_site).and_then(|d| self.decls.get(d))
    }
}

/// Resolves every name, type-checks the unit and computes statement access sets.
pub fn resolve_scopes(unit: &SourceUnit) -> Result<SymbolTable, SemanticError> {
    let mut signatures: HashMap<&str, (&[Param], Type)> = HashMap::new();
    for f in &unit.functions {
        if signatures
            .insert(f.name.as_str(), (f.params.as_slice(), f.ret))
            .is_some()
        {
            return Err(SemanticError::DuplicateDecl {
                name: f.name.clone(),
            });
        }
    }
    let mut r = Resolver {
        signatures,
        table: SymbolTable::default(),
        scopes: Vec::new(),
        function: String::new(),
        ret: Type::Int,
        loops: 0,
        switches: 0,
    };
    for f in &unit.functions {
        r.function = f.name.clone();
        r.ret = f.ret;
        r.scopes.push(HashMap::new());
        for p in &f.params {
            r.declare(&p.name, p.id, p.ty, DeclKind::Param)?;
        }
        // the body shares the parameter scope
        for s in &f.body.stmts {
            r.stmt(s)?;
        }
        r.scopes.pop();
    }
    Ok(r.table)
}

struct Resolver<'a> {
    signatures: HashMap<&'a str, (&'a [Param], Type)>,
    table: SymbolTable,
    scopes: Vec<HashMap<String, (NodeId, Type)>>,
    function: String,
    ret: Type,
    loops: usize,
    switches: usize,
}

impl Resolver<'_> {
    fn declare(&mut self, name: &str, id: NodeId, ty: Type, kind: DeclKind) -> Result<(), SemanticError> {
        let scope = self.scopes.last_mut().expect("scope stack is never empty");
        if scope.insert(name.to_string(), (id, ty)).is_some() {
            return Err(SemanticError::DuplicateDecl {
                name: name.to_string(),
            });
        }
        self.table.decls.insert(
            id,
            DeclInfo {
                name: name.to_string(),
                ty,
                function: self.function.clone(),
                kind,
            },
        );
        Ok(())
    }

    fn lookup(&self, name: &str) -> Result<(NodeId, Type), SemanticError> {
        self.scopes
            .iter()
            .rev()
            .find_map(|s| s.get(name).copied())
            .ok_or_else(|| SemanticError::UnboundVar {
                name: name.to_string(),
                function: self.function.clone(),
            })
    }

    fn expect_type(&self, expected: Type, found: Type) -> Result<(), SemanticError> {
        if expected == found {
            Ok(())
        } else {
            Err(SemanticError::TypeMismatch {
                function: self.function.clone(),
                expected,
                found,
            })
        }
    }

    fn scoped<T>(&mut self, f: impl FnOnce(&mut Self) -> Result<T, SemanticError>) -> Result<T, SemanticError> {
        self.scopes.push(HashMap::new());
        let out = f(self);
        self.scopes.pop();
        out
    }

    fn block(&mut self, stmts: &[Stmt]) -> Result<(), SemanticError> {
        self.scoped(|r| stmts.iter().try_for_each(|s| r.stmt(s)))
    }

    fn bind_target(&mut self, stmt: NodeId, target: &str) -> Result<Type, SemanticError> {
        let (decl, ty) = self.lookup(target)?;
        self.table.bindings.insert(stmt, decl);
        Ok(ty)
    }

    fn stmt(&mut self, s: &Stmt) -> Result<(), SemanticError> {
        match &s.kind {
            StmtKind::Decl { ty, vars } => {
                for d in vars {
                    if let Some(init) = &d.init {
                        let found = self.expr(init)?;
                        self.expect_type(*ty, found)?;
                    }
                    self.declare(&d.name, d.id, *ty, DeclKind::Local)?;
                }
            }
            StmtKind::Assign { target, value } => {
                let ty = self.bind_target(s.id, target)?;
                let found = self.expr(value)?;
                self.expect_type(ty, found)?;
            }
            StmtKind::CompoundAssign { target, value, .. } => {
                let ty = self.bind_target(s.id, target)?;
                self.expect_type(Type::Int, ty)?;
                let found = self.expr(value)?;
                self.expect_type(Type::Int, found)?;
            }
            StmtKind::IncDec { target, .. } => {
                let ty = self.bind_target(s.id, target)?;
                self.expect_type(Type::Int, ty)?;
            }
            StmtKind::If {
                cond,
                then_block,
                else_block,
            } => {
                let c = self.expr(cond)?;
                self.expect_type(Type::Bool, c)?;
                self.block(&then_block.stmts)?;
                if let Some(b) = else_block {
                    self.block(&b.stmts)?;
                }
            }
            StmtKind::While { cond, body } => {
                let c = self.expr(cond)?;
                self.expect_type(Type::Bool, c)?;
                self.loops += 1;
                let out = self.block(&body.stmts);
                self.loops -= 1;
                out?;
            }
            StmtKind::For {
                init,
                cond,
                step,
                body,
            } => {
                self.scoped(|r| {
                    if let Some(i) = init {
                        r.stmt(i)?;
                    }
                    if let Some(c) = cond {
                        let t = r.expr(c)?;
                        r.expect_type(Type::Bool, t)?;
                    }
                    if let Some(st) = step {
                        r.stmt(st)?;
                    }
                    r.loops += 1;
                    let out = r.block(&body.stmts);
                    r.loops -= 1;
                    out
                })?;
            }
            StmtKind::Switch { scrutinee, arms } => {
                let t = self.expr(scrutinee)?;
                self.expect_type(Type::Int, t)?;
                let mut seen = BTreeSet::new();
                for arm in arms {
                    if let CaseLabel::Case(v) = arm.label {
                        if !seen.insert(v) {
                            return Err(SemanticError::DuplicateCase {
                                value: v,
                                function: self.function.clone(),
                            });
                        }
                    }
                }
                self.switches += 1;
                let out = arms.iter().try_for_each(|arm| self.block(&arm.body));
                self.switches -= 1;
                out?;
            }
            StmtKind::Return(e) => {
                let t = self.expr(e)?;
                self.expect_type(self.ret, t)?;
            }
            StmtKind::Block(b) => self.block(&b.stmts)?,
            StmtKind::Expr(e) => {
                self.expr(e)?;
            }
            StmtKind::Break => {
                if self.loops + self.switches == 0 {
                    return Err(SemanticError::MisplacedJump {
                        keyword: "break",
                        function: self.function.clone(),
                    });
                }
            }
            StmtKind::Continue => {
                if self.loops == 0 {
                    return Err(SemanticError::MisplacedJump {
                        keyword: "continue",
                        function: self.function.clone(),
                    });
                }
            }
        }
        self.table.access.insert(s.id, statement_access(s));
        Ok(())
    }

    fn expr(&mut self, e: &Expr) -> Result<Type, SemanticError> {
        match &e.kind {
            ExprKind::Int(_) => Ok(Type::Int),
            ExprKind::Bool(_) => Ok(Type::Bool),
            ExprKind::Var(name) => {
                let (decl, ty) = self.lookup(name)?;
                self.table.bindings.insert(e.id, decl);
                Ok(ty)
            }
            ExprKind::Unary(op, operand) => {
                let t = self.expr(operand)?;
                let want = match op {
                    UnOp::Not => Type::Bool,
                    UnOp::Neg => Type::Int,
                };
                self.expect_type(want, t)?;
                Ok(want)
            }
            ExprKind::Binary(op, l, r) => {
                let lt = self.expr(l)?;
                let rt = self.expr(r)?;
                match op {
                    BinOp::Eq | BinOp::Ne => {
                        self.expect_type(lt, rt)?;
                        Ok(Type::Bool)
                    }
                    BinOp::And | BinOp::Or => {
                        self.expect_type(Type::Bool, lt)?;
                        self.expect_type(Type::Bool, rt)?;
                        Ok(Type::Bool)
                    }
                    op if op.is_relational() => {
                        self.expect_type(Type::Int, lt)?;
                        self.expect_type(Type::Int, rt)?;
                        Ok(Type::Bool)
                    }
                    _ => {
                        self.expect_type(Type::Int, lt)?;
                        self.expect_type(Type::Int, rt)?;
                        Ok(Type::Int)
                    }
                }
            }
            ExprKind::Ternary(c, a, b) => {
                let ct = self.expr(c)?;
                self.expect_type(Type::Bool, ct)?;
                let at = self.expr(a)?;
                let bt = self.expr(b)?;
                self.expect_type(at, bt)?;
                Ok(at)
            }
            ExprKind::Call(name, args) => {
                let (params, ret) = *self.signatures.get(name.as_str()).ok_or_else(|| {
                    SemanticError::CallToUnknownFunction { name: name.clone() }
                })?;
                if params.len() != args.len() {
                    return Err(SemanticError::ArityMismatch {
                        name: name.clone(),
                        expected: params.len(),
                        found: args.len(),
                    });
                }
                let want: Vec<Type> = params.iter().map(|p| p.ty).collect();
                for (a, w) in args.iter().zip(want) {
                    let t = self.expr(a)?;
                    self.expect_type(w, t)?;
                }
                Ok(ret)
            }
            ExprKind::Paren(inner) => self.expr(inner),
        }
    }
}

/// Read and write sets of a statement by variable name, including nested statements.
///
/// Names rather than declarations are used so that moving a statement across a
/// shadowing declaration is never considered independent.
pub fn statement_access(stmt: &Stmt) -> Access {
    let mut acc = Access::default();
    stmt.walk(&mut |s| {
        match &s.kind {
            StmtKind::Decl { vars, .. } => {
                for d in vars {
                    acc.writes.insert(d.name.clone());
                }
            }
            StmtKind::Assign { target, .. } => {
                acc.writes.insert(target.clone());
            }
            StmtKind::CompoundAssign { target, .. } | StmtKind::IncDec { target, .. } => {
                acc.reads.insert(target.clone());
                acc.writes.insert(target.clone());
            }
            _ => {}
        }
        for e in s.own_exprs() {
            e.walk(&mut |e| {
                if let ExprKind::Var(n) = &e.kind {
                    acc.reads.insert(n.clone());
                }
            });
        }
    });
    acc
}
