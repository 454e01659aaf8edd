use thiserror::Error;

use super::ast::*;
use super::lexer::{lex, Keyword, LexError, Punct, Token, TokenKind};

/// Maximum syntactic nesting (statements plus expressions) the parser accepts.
pub const MAX_NESTING: usize = 96;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ParseError {
    #[error(transparent)]
    Lex(#[from] LexError),
    #[error("{line}:{col}: expected {}", describe_expected(.expected))]
    Syntax {
        line: u32,
        col: u32,
        expected: Vec<String>,
    },
    #[error("{line}:{col}: nesting deeper than {MAX_NESTING} levels")]
    TooDeep { line: u32, col: u32 },
}

impl ParseError {
    pub fn position(&self) -> (u32, u32) {
        match self {
            ParseError::Lex(e) => (e.line, e.col),
            ParseError::Syntax { line, col, .. } | ParseError::TooDeep { line, col } => {
                (*line, *col)
            }
        }
    }
}

fn describe_expected(expected: &[String]) -> String {
    match expected {
        [one] => format!("'{one}'"),
        many => {
            let quoted: Vec<String> = many.iter().map(|e| format!("'{e}'")).collect();
            format!("one of {}", quoted.join(", "))
        }
    }
}

/// Parses MiniC source text into a renumbered [`SourceUnit`].
pub fn parse(src: &str) -> Result<SourceUnit, ParseError> {
    let tokens = lex(src)?;
    let (end_line, end_col) = end_position(src);
    let mut p = Parser {
        tokens,
        pos: 0,
        depth: 0,
        end_line,
        end_col,
    };
    let mut unit = p.unit()?;
    unit.renumber();
    Ok(unit)
}

fn end_position(src: &str) -> (u32, u32) {
    let mut line = 1;
    let mut col = 1;
    for c in src.chars() {
        if c == '\n' {
            line += 1;
            col = 1;
        } else {
            col += 1;
        }
    }
    (line, col)
}

struct Parser {
    tokens: Vec<Token>,
    pos: usize,
    depth: usize,
    end_line: u32,
    end_col: u32,
}

type PResult<T> = Result<T, ParseError>;

impl Parser {
    fn peek(&self) -> Option<&TokenKind> {
        self.tokens.get(self.pos).map(|t| &t.kind)
    }

    fn peek_at(&self, offset: usize) -> Option<&TokenKind> {
        self.tokens.get(self.pos + offset).map(|t| &t.kind)
    }

    fn position(&self) -> (u32, u32) {
        match self.tokens.get(self.pos) {
            Some(t) => (t.line, t.col),
            None => (self.end_line, self.end_col),
        }
    }

    fn error(&self, expected: &[&str]) -> ParseError {
        let (line, col) = self.position();
        ParseError::Syntax {
            line,
            col,
            expected: expected.iter().map(|s| s.to_string()).collect(),
        }
    }

    fn is_punct(&self, p: Punct) -> bool {
        self.peek() == Some(&TokenKind::Punct(p))
    }

    fn is_keyword(&self, k: Keyword) -> bool {
        self.peek() == Some(&TokenKind::Keyword(k))
    }

    fn eat_punct(&mut self, p: Punct) -> bool {
        if self.is_punct(p) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn eat_keyword(&mut self, k: Keyword) -> bool {
        if self.is_keyword(k) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn expect_punct(&mut self, p: Punct) -> PResult<()> {
        if self.eat_punct(p) {
            Ok(())
        } else {
            Err(self.error(&[p.as_str()]))
        }
    }

    fn expect_ident(&mut self) -> PResult<String> {
        match self.peek() {
            Some(TokenKind::Ident(name)) => {
                let name = name.clone();
                self.pos += 1;
                Ok(name)
            }
            _ => Err(self.error(&["identifier"])),
        }
    }

    fn enter(&mut self) -> PResult<()> {
        self.depth += 1;
        if self.depth > MAX_NESTING {
            let (line, col) = self.position();
            return Err(ParseError::TooDeep { line, col });
        }
        Ok(())
    }

    fn leave(&mut self) {
        self.depth -= 1;
    }

    fn peek_type(&self) -> Option<Type> {
        match self.peek() {
            Some(TokenKind::Keyword(Keyword::Int)) => Some(Type::Int),
            Some(TokenKind::Keyword(Keyword::Bool)) => Some(Type::Bool),
            _ => None,
        }
    }

    fn unit(&mut self) -> PResult<SourceUnit> {
        let mut functions = Vec::new();
        loop {
            if self.peek().is_none() && !functions.is_empty() {
                break;
            }
            functions.push(self.function()?);
        }
        Ok(SourceUnit { functions })
    }

    fn function(&mut self) -> PResult<FunctionDef> {
        let ret = self.peek_type().ok_or_else(|| self.error(&["int", "bool"]))?;
        self.pos += 1;
        let name = self.expect_ident()?;
        self.expect_punct(Punct::LParen)?;
        let mut params = Vec::new();
        if let Some(ty) = self.peek_type() {
            self.pos += 1;
            params.push(Param {
                id: 0,
                ty,
                name: self.expect_ident()?,
            });
            while self.eat_punct(Punct::Comma) {
                let ty = self.peek_type().ok_or_else(|| self.error(&["int", "bool"]))?;
                self.pos += 1;
                params.push(Param {
                    id: 0,
                    ty,
                    name: self.expect_ident()?,
                });
            }
        }
        self.expect_punct(Punct::RParen)?;
        let body = self.braced_block()?;
        Ok(FunctionDef {
            id: 0,
            name,
            ret,
            params,
            body,
        })
    }

    fn braced_block(&mut self) -> PResult<Block> {
        self.expect_punct(Punct::LBrace)?;
        self.enter()?;
        let mut stmts = Vec::new();
        while !self.is_punct(Punct::RBrace) {
            if self.peek().is_none() {
                return Err(self.error(&["}"]));
            }
            stmts.push(self.statement()?);
        }
        self.pos += 1;
        self.leave();
        Ok(Block { stmts })
    }

    /// A loop or branch body: a braced block, or a single statement wrapped in one.
    fn body(&mut self) -> PResult<Block> {
        if self.is_punct(Punct::LBrace) {
            self.braced_block()
        } else {
            Ok(Block {
                stmts: vec![self.statement()?],
            })
        }
    }

    fn statement(&mut self) -> PResult<Stmt> {
        self.enter()?;
        let stmt = self.statement_inner();
        self.leave();
        stmt
    }

    fn statement_inner(&mut self) -> PResult<Stmt> {
        let kind = match self.peek() {
            Some(TokenKind::Keyword(Keyword::Int | Keyword::Bool)) => {
                let s = self.declaration()?;
                self.expect_punct(Punct::Semi)?;
                return Ok(s);
            }
            Some(TokenKind::Keyword(Keyword::If)) => {
                self.pos += 1;
                self.expect_punct(Punct::LParen)?;
                let cond = self.expr()?;
                self.expect_punct(Punct::RParen)?;
                let then_block = self.body()?;
                let else_block = if self.eat_keyword(Keyword::Else) {
                    Some(self.body()?)
                } else {
                    None
                };
                StmtKind::If {
                    cond,
                    then_block,
                    else_block,
                }
            }
            Some(TokenKind::Keyword(Keyword::While)) => {
                self.pos += 1;
                self.expect_punct(Punct::LParen)?;
                let cond = self.expr()?;
                self.expect_punct(Punct::RParen)?;
                StmtKind::While {
                    cond,
                    body: self.body()?,
                }
            }
            Some(TokenKind::Keyword(Keyword::For)) => {
                self.pos += 1;
                self.expect_punct(Punct::LParen)?;
                let init = if self.is_punct(Punct::Semi) {
                    None
                } else if self.peek_type().is_some() {
                    Some(Box::new(self.declaration()?))
                } else {
                    Some(Box::new(self.simple_statement()?))
                };
                self.expect_punct(Punct::Semi)?;
                let cond = if self.is_punct(Punct::Semi) {
                    None
                } else {
                    Some(self.expr()?)
                };
                self.expect_punct(Punct::Semi)?;
                let step = if self.is_punct(Punct::RParen) {
                    None
                } else {
                    Some(Box::new(self.simple_statement()?))
                };
                self.expect_punct(Punct::RParen)?;
                StmtKind::For {
                    init,
                    cond,
                    step,
                    body: self.body()?,
                }
            }
            Some(TokenKind::Keyword(Keyword::Switch)) => {
                self.pos += 1;
                self.expect_punct(Punct::LParen)?;
                let scrutinee = self.expr()?;
                self.expect_punct(Punct::RParen)?;
                self.expect_punct(Punct::LBrace)?;
                let mut arms = Vec::new();
                while !self.eat_punct(Punct::RBrace) {
                    arms.push(self.switch_arm()?);
                }
                StmtKind::Switch { scrutinee, arms }
            }
            Some(TokenKind::Keyword(Keyword::Return)) => {
                self.pos += 1;
                let e = self.expr()?;
                self.expect_punct(Punct::Semi)?;
                StmtKind::Return(e)
            }
            Some(TokenKind::Keyword(Keyword::Break)) => {
                self.pos += 1;
                self.expect_punct(Punct::Semi)?;
                StmtKind::Break
            }
            Some(TokenKind::Keyword(Keyword::Continue)) => {
                self.pos += 1;
                self.expect_punct(Punct::Semi)?;
                StmtKind::Continue
            }
            Some(TokenKind::Punct(Punct::LBrace)) => StmtKind::Block(self.braced_block()?),
            _ => {
                let s = self.simple_statement()?;
                self.expect_punct(Punct::Semi)?;
                return Ok(s);
            }
        };
        Ok(Stmt::new(kind))
    }

    fn switch_arm(&mut self) -> PResult<SwitchArm> {
        let label = if self.eat_keyword(Keyword::Case) {
            let negative = self.eat_punct(Punct::Minus);
            let value = match self.peek() {
                Some(TokenKind::Int(v)) => *v,
                _ => return Err(self.error(&["integer literal"])),
            };
            self.pos += 1;
            CaseLabel::Case(if negative { -value } else { value })
        } else if self.eat_keyword(Keyword::Default) {
            CaseLabel::Default
        } else {
            return Err(self.error(&["case", "default", "}"]));
        };
        self.expect_punct(Punct::Colon)?;
        let mut body = Vec::new();
        while !(self.is_keyword(Keyword::Case)
            || self.is_keyword(Keyword::Default)
            || self.is_punct(Punct::RBrace))
        {
            if self.peek().is_none() {
                return Err(self.error(&["}"]));
            }
            body.push(self.statement()?);
        }
        Ok(SwitchArm { id: 0, label, body })
    }

    /// `int a = 1, b` without the trailing semicolon.
    fn declaration(&mut self) -> PResult<Stmt> {
        let ty = self.peek_type().ok_or_else(|| self.error(&["int", "bool"]))?;
        self.pos += 1;
        let mut vars = Vec::new();
        loop {
            let name = self.expect_ident()?;
            let init = if self.eat_punct(Punct::Assign) {
                Some(self.expr()?)
            } else {
                None
            };
            vars.push(Declarator { id: 0, name, init });
            if !self.eat_punct(Punct::Comma) {
                break;
            }
        }
        Ok(Stmt::new(StmtKind::Decl { ty, vars }))
    }

    /// Assignment, compound assignment, increment/decrement or bare expression, without `;`.
    fn simple_statement(&mut self) -> PResult<Stmt> {
        if let Some(TokenKind::Ident(name)) = self.peek() {
            let name = name.clone();
            let compound = |p: &TokenKind| match p {
                TokenKind::Punct(Punct::PlusAssign) => Some(BinOp::Add),
                TokenKind::Punct(Punct::MinusAssign) => Some(BinOp::Sub),
                TokenKind::Punct(Punct::StarAssign) => Some(BinOp::Mul),
                TokenKind::Punct(Punct::SlashAssign) => Some(BinOp::Div),
                TokenKind::Punct(Punct::PercentAssign) => Some(BinOp::Rem),
                _ => None,
            };
            match self.peek_at(1) {
                Some(TokenKind::Punct(Punct::Assign)) => {
                    self.pos += 2;
                    let value = self.expr()?;
                    return Ok(Stmt::new(StmtKind::Assign {
                        target: name,
                        value,
                    }));
                }
                Some(TokenKind::Punct(p @ (Punct::PlusPlus | Punct::MinusMinus))) => {
                    let increment = *p == Punct::PlusPlus;
                    self.pos += 2;
                    return Ok(Stmt::new(StmtKind::IncDec {
                        target: name,
                        increment,
                    }));
                }
                Some(tok) => {
                    if let Some(op) = compound(tok) {
                        self.pos += 2;
                        let value = self.expr()?;
                        return Ok(Stmt::new(StmtKind::CompoundAssign {
                            target: name,
                            op,
                            value,
                        }));
                    }
                }
                None => {}
            }
        }
        let e = self.expr()?;
        Ok(Stmt::new(StmtKind::Expr(e)))
    }

    fn expr(&mut self) -> PResult<Expr> {
        self.enter()?;
        let e = self.ternary();
        self.leave();
        e
    }

    fn ternary(&mut self) -> PResult<Expr> {
        let cond = self.binary(PREC_OR)?;
        if self.eat_punct(Punct::Question) {
            let then_e = self.expr()?;
            self.expect_punct(Punct::Colon)?;
            let else_e = self.expr()?;
            return Ok(Expr::new(ExprKind::Ternary(
                Box::new(cond),
                Box::new(then_e),
                Box::new(else_e),
            )));
        }
        Ok(cond)
    }

    fn binary_op(&self) -> Option<BinOp> {
        let op = match self.peek()? {
            TokenKind::Punct(p) => match p {
                Punct::OrOr => BinOp::Or,
                Punct::AndAnd => BinOp::And,
                Punct::EqEq => BinOp::Eq,
                Punct::NotEq => BinOp::Ne,
                Punct::Lt => BinOp::Lt,
                Punct::Le => BinOp::Le,
                Punct::Gt => BinOp::Gt,
                Punct::Ge => BinOp::Ge,
                Punct::Plus => BinOp::Add,
                Punct::Minus => BinOp::Sub,
                Punct::Star => BinOp::Mul,
                Punct::Slash => BinOp::Div,
                Punct::Percent => BinOp::Rem,
                _ => return None,
            },
            _ => return None,
        };
        Some(op)
    }

    /// Precedence climbing over the left-associative binary levels.
    fn binary(&mut self, min_prec: u8) -> PResult<Expr> {
        if min_prec > PREC_MULTIPLICATIVE {
            return self.unary();
        }
        let mut lhs = self.binary(min_prec + 1)?;
        while let Some(op) = self.binary_op() {
            if op.precedence() != min_prec {
                break;
            }
            self.pos += 1;
            let rhs = self.binary(min_prec + 1)?;
            lhs = Expr::new(ExprKind::Binary(op, Box::new(lhs), Box::new(rhs)));
        }
        Ok(lhs)
    }

    fn unary(&mut self) -> PResult<Expr> {
        let op = if self.is_punct(Punct::Bang) {
            UnOp::Not
        } else if self.is_punct(Punct::Minus) {
            UnOp::Neg
        } else {
            return self.primary();
        };
        self.pos += 1;
        self.enter()?;
        let operand = self.unary();
        self.leave();
        Ok(Expr::new(ExprKind::Unary(op, Box::new(operand?))))
    }

    fn primary(&mut self) -> PResult<Expr> {
        let kind = match self.peek() {
            Some(TokenKind::Int(v)) => {
                let v = *v;
                self.pos += 1;
                ExprKind::Int(v)
            }
            Some(TokenKind::Keyword(Keyword::True)) => {
                self.pos += 1;
                ExprKind::Bool(true)
            }
            Some(TokenKind::Keyword(Keyword::False)) => {
                self.pos += 1;
                ExprKind::Bool(false)
            }
            Some(TokenKind::Ident(name)) => {
                let name = name.clone();
                self.pos += 1;
                if self.eat_punct(Punct::LParen) {
                    let mut args = Vec::new();
                    if !self.is_punct(Punct::RParen) {
                        args.push(self.expr()?);
                        while self.eat_punct(Punct::Comma) {
                            args.push(self.expr()?);
                        }
                    }
                    self.expect_punct(Punct::RParen)?;
                    ExprKind::Call(name, args)
                } else {
                    ExprKind::Var(name)
                }
            }
            Some(TokenKind::Punct(Punct::LParen)) => {
                self.pos += 1;
                let inner = self.expr()?;
                self.expect_punct(Punct::RParen)?;
                ExprKind::Paren(Box::new(inner))
            }
            _ => {
                return Err(self.error(&[
                    "integer literal",
                    "true",
                    "false",
                    "identifier",
                    "(",
                    "!",
                    "-",
                ]))
            }
        };
        Ok(Expr::new(kind))
    }
}
