use super::{
    ArithOp, CmpOp, Evolve, Expr, Function, GlobalDecl, InputDecl, IrError, Program, Stmt,
    VarSort,
};
use crate::rational::{self, Rational};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
#[error("syntax error at {line}:{col}: {message}")]
pub struct ParseError {
    pub line: usize,
    pub col: usize,
    pub message: String,
}

#[derive(Clone, Debug, PartialEq)]
enum Tok {
    Ident(String),
    Num(Rational),
    Str(String),
    Punct(&'static str),
    Eof,
}

#[derive(Clone, Debug)]
struct Token {
    tok: Tok,
    line: usize,
    col: usize,
}

const PUNCT: &[&str] = &[
    "..", "<=", ">=", "==", "&&", "||", "(", ")", "{", "}", ";", ",", "=", "'", ":", "+", "-",
    "*", "/", "<", ">", "!",
];

const KEYWORDS: &[&str] = &[
    "input", "int", "real", "assume", "assert", "havoc", "if", "else", "for", "in", "evolve",
    "call", "print", "main", "fn", "choose", "pow", "true", "false",
];

fn lex(src: &str) -> Result<Vec<Token>, ParseError> {
    let chars: Vec<char> = src.chars().collect();
    let mut out = Vec::new();
    let (mut i, mut line, mut col) = (0usize, 1usize, 1usize);
    let err = |line, col, message: String| ParseError { line, col, message };

    while i < chars.len() {
        let c = chars[i];
        if c == '\n' {
            i += 1;
            line += 1;
            col = 1;
            continue;
        }
        if c.is_whitespace() {
            i += 1;
            col += 1;
            continue;
        }
        if c == '/' && chars.get(i + 1) == Some(&'/') {
            while i < chars.len() && chars[i] != '\n' {
                i += 1;
            }
            continue;
        }
        let (start_line, start_col) = (line, col);
        if c.is_ascii_alphabetic() || c == '_' {
            let start = i;
            while i < chars.len() && (chars[i].is_ascii_alphanumeric() || chars[i] == '_') {
                i += 1;
            }
            col += i - start;
            out.push(Token {
                tok: Tok::Ident(chars[start..i].iter().collect()),
                line: start_line,
                col: start_col,
            });
            continue;
        }
        if c.is_ascii_digit() {
            let start = i;
            while i < chars.len() && chars[i].is_ascii_digit() {
                i += 1;
            }
            // a single '.' followed by a digit continues the literal; ".." is a range
            if i + 1 < chars.len() && chars[i] == '.' && chars[i + 1].is_ascii_digit() {
                i += 1;
                while i < chars.len() && chars[i].is_ascii_digit() {
                    i += 1;
                }
            }
            let text: String = chars[start..i].iter().collect();
            col += i - start;
            let value = rational::parse_decimal(&text)
                .ok_or_else(|| err(start_line, start_col, format!("bad number `{text}`")))?;
            out.push(Token {
                tok: Tok::Num(value),
                line: start_line,
                col: start_col,
            });
            continue;
        }
        if c == '"' {
            let start = i + 1;
            i += 1;
            while i < chars.len() && chars[i] != '"' && chars[i] != '\n' {
                i += 1;
            }
            if i >= chars.len() || chars[i] != '"' {
                return Err(err(start_line, start_col, "unterminated string".into()));
            }
            let text: String = chars[start..i].iter().collect();
            i += 1;
            col += text.chars().count() + 2;
            out.push(Token {
                tok: Tok::Str(text),
                line: start_line,
                col: start_col,
            });
            continue;
        }
        let rest: String = chars[i..chars.len().min(i + 2)].iter().collect();
        match PUNCT.iter().find(|p| rest.starts_with(**p)) {
            Some(p) => {
                i += p.len();
                col += p.len();
                out.push(Token {
                    tok: Tok::Punct(p),
                    line: start_line,
                    col: start_col,
                });
            }
            None => return Err(err(line, col, format!("unexpected character `{c}`"))),
        }
    }
    out.push(Token {
        tok: Tok::Eof,
        line,
        col,
    });
    Ok(out)
}

struct Parser {
    toks: Vec<Token>,
    pos: usize,
}

type PResult<T> = Result<T, ParseError>;

impl Parser {
    fn peek(&self) -> &Tok {
        &self.toks[self.pos].tok
    }

    fn bump(&mut self) -> Tok {
        let t = self.toks[self.pos].tok.clone();
        if self.pos + 1 < self.toks.len() {
            self.pos += 1;
        }
        t
    }

    fn error<T>(&self, message: impl Into<String>) -> PResult<T> {
        let t = &self.toks[self.pos];
        Err(ParseError {
            line: t.line,
            col: t.col,
            message: message.into(),
        })
    }

    fn describe(&self) -> String {
        match self.peek() {
            Tok::Ident(s) => format!("`{s}`"),
            Tok::Num(n) => format!("number {n}"),
            Tok::Str(s) => format!("string \"{s}\""),
            Tok::Punct(p) => format!("`{p}`"),
            Tok::Eof => "end of input".into(),
        }
    }

    fn is_punct(&self, p: &str) -> bool {
        matches!(self.peek(), Tok::Punct(q) if *q == p)
    }

    fn is_word(&self, w: &str) -> bool {
        matches!(self.peek(), Tok::Ident(s) if s == w)
    }

    fn eat_punct(&mut self, p: &str) -> bool {
        if self.is_punct(p) {
            self.bump();
            true
        } else {
            false
        }
    }

    fn expect_punct(&mut self, p: &str) -> PResult<()> {
        if self.eat_punct(p) {
            Ok(())
        } else {
            self.error(format!("expected `{p}`, found {}", self.describe()))
        }
    }

    fn expect_word(&mut self, w: &str) -> PResult<()> {
        if self.is_word(w) {
            self.bump();
            Ok(())
        } else {
            self.error(format!("expected `{w}`, found {}", self.describe()))
        }
    }

    fn ident(&mut self) -> PResult<String> {
        match self.peek() {
            Tok::Ident(s) if !KEYWORDS.contains(&s.as_str()) => {
                let s = s.clone();
                self.bump();
                Ok(s)
            }
            _ => self.error(format!("expected identifier, found {}", self.describe())),
        }
    }

    fn sort(&mut self) -> PResult<VarSort> {
        if self.is_word("int") {
            self.bump();
            Ok(VarSort::Int)
        } else if self.is_word("real") {
            self.bump();
            Ok(VarSort::Real)
        } else {
            self.error(format!("expected `int` or `real`, found {}", self.describe()))
        }
    }

    fn program(&mut self) -> PResult<Program> {
        let mut p = Program::default();
        loop {
            if self.is_word("input") {
                self.bump();
                let sort = self.sort()?;
                let mut names = vec![self.ident()?];
                while self.eat_punct(",") {
                    names.push(self.ident()?);
                }
                let assume = if self.is_word("assume") {
                    self.bump();
                    self.expect_punct("(")?;
                    let e = self.expr()?;
                    self.expect_punct(")")?;
                    Some(e)
                } else {
                    None
                };
                self.expect_punct(";")?;
                let last = names.len() - 1;
                for (k, name) in names.into_iter().enumerate() {
                    p.inputs.push(InputDecl {
                        name,
                        sort,
                        assume: if k == last { assume.clone() } else { None },
                    });
                }
            } else if self.is_word("int") || self.is_word("real") {
                let sort = self.sort()?;
                loop {
                    let name = self.ident()?;
                    let init = if self.eat_punct("=") {
                        Some(self.expr()?)
                    } else {
                        None
                    };
                    p.globals.push(GlobalDecl { name, sort, init });
                    if !self.eat_punct(",") {
                        break;
                    }
                }
                self.expect_punct(";")?;
            } else if self.is_word("fn") {
                self.bump();
                let name = self.ident()?;
                let body = self.block()?;
                p.functions.push(Function { name, body });
            } else if self.is_word("main") {
                self.bump();
                p.main = self.block()?;
                if *self.peek() != Tok::Eof {
                    return self.error(format!(
                        "unexpected {} after main block",
                        self.describe()
                    ));
                }
                return Ok(p);
            } else {
                return self.error(format!(
                    "expected a declaration or `main`, found {}",
                    self.describe()
                ));
            }
        }
    }

    fn block(&mut self) -> PResult<Vec<Stmt>> {
        self.expect_punct("{")?;
        let mut out = Vec::new();
        while !self.is_punct("}") {
            if *self.peek() == Tok::Eof {
                return self.error("unclosed block");
            }
            out.push(self.stmt()?);
        }
        self.bump();
        Ok(out)
    }

    fn paren_expr(&mut self) -> PResult<Expr> {
        self.expect_punct("(")?;
        let e = self.expr()?;
        self.expect_punct(")")?;
        Ok(e)
    }

    fn stmt(&mut self) -> PResult<Stmt> {
        if self.is_punct("{") {
            return Ok(Stmt::Seq(self.block()?));
        }
        let word = match self.peek() {
            Tok::Ident(s) => s.clone(),
            _ => return self.error(format!("expected a statement, found {}", self.describe())),
        };
        match word.as_str() {
            "havoc" => {
                self.bump();
                let v = self.ident()?;
                self.expect_punct(";")?;
                Ok(Stmt::Havoc(v))
            }
            "assume" => {
                self.bump();
                let e = self.paren_expr()?;
                self.expect_punct(";")?;
                Ok(Stmt::Assume(e))
            }
            "assert" => {
                self.bump();
                let cond = self.paren_expr()?;
                let label = if self.eat_punct(":") {
                    match self.bump() {
                        Tok::Str(s) => s,
                        _ => return self.error("expected a string label after `:`"),
                    }
                } else {
                    super::print_expr(&cond)
                };
                self.expect_punct(";")?;
                Ok(Stmt::Assert { cond, label })
            }
            "if" => self.if_stmt(),
            "for" => {
                self.bump();
                let index = self.ident()?;
                self.expect_word("in")?;
                match self.bump() {
                    Tok::Num(n) if n == rational::int(0) => {}
                    _ => return self.error("loop ranges must start at `0`"),
                }
                self.expect_punct("..")?;
                let count = self.additive()?;
                let body = self.block()?;
                Ok(Stmt::For { index, count, body })
            }
            "evolve" => {
                self.bump();
                let time = if self.is_word("time") {
                    self.bump();
                    Some(self.ident()?)
                } else {
                    None
                };
                self.expect_punct("{")?;
                let mut odes = Vec::new();
                while !self.is_punct("}") {
                    let v = self.ident()?;
                    self.expect_punct("'")?;
                    self.expect_punct("=")?;
                    let rhs = self.expr()?;
                    self.expect_punct(";")?;
                    odes.push((v, rhs));
                }
                self.bump();
                if odes.is_empty() {
                    return self.error("evolve block needs at least one equation");
                }
                self.expect_word("dt")?;
                let dt = self.ident()?;
                self.expect_word("steps")?;
                let max_steps = self.expr()?;
                self.expect_punct(";")?;
                Ok(Stmt::Evolve(Evolve {
                    time,
                    odes,
                    dt,
                    max_steps,
                }))
            }
            "call" => {
                self.bump();
                let f = self.ident()?;
                self.expect_punct(";")?;
                Ok(Stmt::Call(f))
            }
            "print" => {
                self.bump();
                self.expect_punct(";")?;
                Ok(Stmt::Print)
            }
            _ => {
                let var = self.ident()?;
                self.expect_punct("=")?;
                if self.is_word("choose") {
                    self.bump();
                    let bound = self.paren_expr()?;
                    self.expect_punct(";")?;
                    return Ok(Stmt::Choose { var, bound });
                }
                let value = self.expr()?;
                self.expect_punct(";")?;
                Ok(Stmt::Assign { var, value })
            }
        }
    }

    fn if_stmt(&mut self) -> PResult<Stmt> {
        self.expect_word("if")?;
        let cond = self.paren_expr()?;
        let then_block = self.block()?;
        let else_block = if self.is_word("else") {
            self.bump();
            if self.is_word("if") {
                vec![self.if_stmt()?]
            } else {
                self.block()?
            }
        } else {
            Vec::new()
        };
        Ok(Stmt::If {
            cond,
            then_block,
            else_block,
        })
    }

    // Precedence, loosest first: || , && , ! , comparison, + - , * / , unary -
    fn expr(&mut self) -> PResult<Expr> {
        let mut lhs = self.conjunction()?;
        while self.eat_punct("||") {
            let rhs = self.conjunction()?;
            lhs = lhs.or(rhs);
        }
        Ok(lhs)
    }

    fn conjunction(&mut self) -> PResult<Expr> {
        let mut lhs = self.negation()?;
        while self.eat_punct("&&") {
            let rhs = self.negation()?;
            lhs = lhs.and(rhs);
        }
        Ok(lhs)
    }

    fn negation(&mut self) -> PResult<Expr> {
        if self.eat_punct("!") {
            return Ok(self.negation()?.not());
        }
        self.comparison()
    }

    fn comparison(&mut self) -> PResult<Expr> {
        let lhs = self.additive()?;
        let op = match self.peek() {
            Tok::Punct("<") => CmpOp::Lt,
            Tok::Punct("<=") => CmpOp::Le,
            Tok::Punct("==") => CmpOp::Eq,
            Tok::Punct(">=") => CmpOp::Ge,
            Tok::Punct(">") => CmpOp::Gt,
            _ => return Ok(lhs),
        };
        self.bump();
        let rhs = self.additive()?;
        Ok(Expr::cmp(op, lhs, rhs))
    }

    fn additive(&mut self) -> PResult<Expr> {
        let mut lhs = self.multiplicative()?;
        loop {
            let op = match self.peek() {
                Tok::Punct("+") => ArithOp::Add,
                Tok::Punct("-") => ArithOp::Sub,
                _ => return Ok(lhs),
            };
            self.bump();
            let rhs = self.multiplicative()?;
            lhs = Expr::Arith(op, Box::new(lhs), Box::new(rhs));
        }
    }

    fn multiplicative(&mut self) -> PResult<Expr> {
        let mut lhs = self.unary()?;
        loop {
            let op = match self.peek() {
                Tok::Punct("*") => ArithOp::Mul,
                Tok::Punct("/") => ArithOp::Div,
                _ => return Ok(lhs),
            };
            self.bump();
            let rhs = self.unary()?;
            lhs = Expr::Arith(op, Box::new(lhs), Box::new(rhs));
        }
    }

    fn unary(&mut self) -> PResult<Expr> {
        if self.eat_punct("-") {
            return Ok(-self.unary()?);
        }
        self.primary()
    }

    fn primary(&mut self) -> PResult<Expr> {
        match self.peek().clone() {
            Tok::Num(n) => {
                self.bump();
                Ok(Expr::Const(n))
            }
            Tok::Punct("(") => self.paren_expr(),
            Tok::Ident(w) if w == "true" || w == "false" => {
                self.bump();
                Ok(Expr::Bool(w == "true"))
            }
            Tok::Ident(w) if w == "pow" => {
                self.bump();
                self.expect_punct("(")?;
                let base = self.expr()?;
                self.expect_punct(",")?;
                let k = match self.bump() {
                    Tok::Num(n) if n.is_integer() => n
                        .numer()
                        .to_string()
                        .parse::<u32>()
                        .ok(),
                    _ => None,
                };
                let Some(k) = k else {
                    return self.error("pow exponent must be a nonnegative integer literal");
                };
                self.expect_punct(")")?;
                Ok(base.pow(k))
            }
            Tok::Ident(_) => Ok(Expr::Var(self.ident()?)),
            _ => self.error(format!("expected an expression, found {}", self.describe())),
        }
    }
}

/// Parses and validates an HSL program.
pub fn parse_program(src: &str) -> Result<Program, IrError> {
    let mut parser = Parser {
        toks: lex(src)?,
        pos: 0,
    };
    let program = parser.program()?;
    program.validate()?;
    Ok(program)
}

/// Parses a standalone expression (no declaration checks).
pub fn parse_expr(src: &str) -> Result<Expr, ParseError> {
    let mut parser = Parser {
        toks: lex(src)?,
        pos: 0,
    };
    let e = parser.expr()?;
    if *parser.peek() != Tok::Eof {
        return parser.error(format!("unexpected {}", parser.describe()));
    }
    Ok(e)
}
