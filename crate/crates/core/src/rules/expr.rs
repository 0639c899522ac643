//! Rule expression language.
//!
//! ```text
//! expression = or_expr ;
//! or_expr    = and_expr , { "OR" , and_expr } ;
//! and_expr   = unary , { "AND" , unary } ;
//! unary      = "NOT" , unary | primary ;
//! primary    = "(" , expression , ")" | "TRUE" | "FALSE" | comparison ;
//! comparison = operand , cmp_op , operand ;
//! operand    = identifier | number ;
//! cmp_op     = "<" | "<=" | "≤" | ">" | ">=" | "≥" | "=" | "==" ;
//! identifier = ( letter | "_" ) , { letter | digit | "_" | "." | ":" } ;
//! number     = [ "+" | "-" ] , digits , [ "." , digits ] , [ ( "e" | "E" ) , [ "+" | "-" ] , digits ] ;
//! ```
//!
//! Keywords are case-insensitive. Token positions in errors are 1-based and
//! count the end of input as a token.

use std::collections::BTreeSet;
use std::fmt;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CmpOp {
    Lt,
    Le,
    Gt,
    Ge,
    Eq,
}

impl CmpOp {
    /// Applies the comparison; equality (and the equality half of `<=`,
    /// `>=`) holds when `|a - b| <= tolerance`.
    pub fn apply(self, a: f64, b: f64, tolerance: f64) -> bool {
        let eq = (a - b).abs() <= tolerance;
        match self {
            CmpOp::Lt => a < b && !eq,
            CmpOp::Le => a < b || eq,
            CmpOp::Gt => a > b && !eq,
            CmpOp::Ge => a > b || eq,
            CmpOp::Eq => eq,
        }
    }

    fn symbol(self) -> &'static str {
        match self {
            CmpOp::Lt => "<",
            CmpOp::Le => "<=",
            CmpOp::Gt => ">",
            CmpOp::Ge => ">=",
            CmpOp::Eq => "=",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Operand {
    Point(String),
    Constant(f64),
}

impl fmt::Display for Operand {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Operand::Point(p) => f.write_str(p),
            Operand::Constant(c) => write!(f, "{c}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Literal(bool),
    Compare { lhs: Operand, op: CmpOp, rhs: Operand },
    Not(Box<Expr>),
    And(Box<Expr>, Box<Expr>),
    Or(Box<Expr>, Box<Expr>),
}

impl Expr {
    pub fn compare(lhs: Operand, op: CmpOp, rhs: Operand) -> Self {
        Expr::Compare { lhs, op, rhs }
    }

    /// Point names referenced anywhere in the tree, sorted.
    pub fn points(&self) -> BTreeSet<String> {
        let mut out = BTreeSet::new();
        self.collect_points(&mut out);
        out
    }

    fn collect_points(&self, out: &mut BTreeSet<String>) {
        match self {
            Expr::Literal(_) => {}
            Expr::Compare { lhs, rhs, .. } => {
                for operand in [lhs, rhs] {
                    if let Operand::Point(p) = operand {
                        out.insert(p.clone());
                    }
                }
            }
            Expr::Not(e) => e.collect_points(out),
            Expr::And(a, b) | Expr::Or(a, b) => {
                a.collect_points(out);
                b.collect_points(out);
            }
        }
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Expr::Literal(true) => f.write_str("TRUE"),
            Expr::Literal(false) => f.write_str("FALSE"),
            Expr::Compare { lhs, op, rhs } => write!(f, "{lhs} {} {rhs}", op.symbol()),
            Expr::Not(e) => write!(f, "NOT ({e})"),
            Expr::And(a, b) => write!(f, "({a}) AND ({b})"),
            Expr::Or(a, b) => write!(f, "({a}) OR ({b})"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum ParseErrorKind {
    Syntax(String),
    UnknownOperator(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParseError {
    /// 1-based token index.
    pub token: usize,
    /// 1-based character column.
    pub column: usize,
    pub kind: ParseErrorKind,
}

impl fmt::Display for ParseError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.kind {
            ParseErrorKind::Syntax(msg) => write!(
                f,
                "syntax error at token {} (column {}): {msg}",
                self.token, self.column
            ),
            ParseErrorKind::UnknownOperator(op) => write!(
                f,
                "unknown operator '{op}' at token {} (column {})",
                self.token, self.column
            ),
        }
    }
}

impl std::error::Error for ParseError {}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Ident(String),
    Number(f64),
    Cmp(CmpOp),
    LParen,
    RParen,
    And,
    Or,
    Not,
    True,
    False,
    End,
}

impl Tok {
    fn describe(&self) -> String {
        match self {
            Tok::Ident(s) => format!("identifier '{s}'"),
            Tok::Number(n) => format!("number {n}"),
            Tok::Cmp(op) => format!("operator '{}'", op.symbol()),
            Tok::LParen => "'('".into(),
            Tok::RParen => "')'".into(),
            Tok::And => "AND".into(),
            Tok::Or => "OR".into(),
            Tok::Not => "NOT".into(),
            Tok::True => "TRUE".into(),
            Tok::False => "FALSE".into(),
            Tok::End => "end of input".into(),
        }
    }
}

struct Spanned {
    tok: Tok,
    column: usize,
}

fn is_op_char(c: char) -> bool {
    matches!(c, '<' | '>' | '=' | '!' | '&' | '|' | '~' | '≤' | '≥' | '≠')
}

fn tokenize(src: &str) -> Result<Vec<Spanned>, ParseError> {
    let chars: Vec<char> = src.chars().collect();
    let mut out = Vec::new();
    let mut i = 0;
    while i < chars.len() {
        let c = chars[i];
        let column = i + 1;
        let index = out.len() + 1;
        if c.is_whitespace() {
            i += 1;
            continue;
        }
        let err = |kind| ParseError {
            token: index,
            column,
            kind,
        };
        if c == '(' || c == ')' {
            out.push(Spanned {
                tok: if c == '(' { Tok::LParen } else { Tok::RParen },
                column,
            });
            i += 1;
        } else if is_op_char(c) {
            let start = i;
            while i < chars.len() && is_op_char(chars[i]) {
                i += 1;
            }
            let op: String = chars[start..i].iter().collect();
            let cmp = match op.as_str() {
                "<" => CmpOp::Lt,
                "<=" | "≤" => CmpOp::Le,
                ">" => CmpOp::Gt,
                ">=" | "≥" => CmpOp::Ge,
                "=" | "==" => CmpOp::Eq,
                _ => return Err(err(ParseErrorKind::UnknownOperator(op))),
            };
            out.push(Spanned {
                tok: Tok::Cmp(cmp),
                column,
            });
        } else if c.is_ascii_digit()
            || c == '.'
            || ((c == '-' || c == '+')
                && chars
                    .get(i + 1)
                    .is_some_and(|n| n.is_ascii_digit() || *n == '.'))
        {
            let start = i;
            i += 1;
            while i < chars.len() {
                let d = chars[i];
                let prev = chars[i - 1];
                let exponent_sign = (d == '-' || d == '+') && (prev == 'e' || prev == 'E');
                if !(d.is_ascii_digit() || matches!(d, '.' | 'e' | 'E') || exponent_sign) {
                    break;
                }
                i += 1;
            }
            let text: String = chars[start..i].iter().collect();
            let value = text.parse::<f64>().map_err(|_| {
                err(ParseErrorKind::Syntax(format!("malformed number '{text}'")))
            })?;
            out.push(Spanned {
                tok: Tok::Number(value),
                column,
            });
        } else if c.is_alphabetic() || c == '_' {
            let start = i;
            while i < chars.len()
                && (chars[i].is_alphanumeric() || matches!(chars[i], '_' | '.' | ':'))
            {
                i += 1;
            }
            let word: String = chars[start..i].iter().collect();
            let tok = match word.to_ascii_uppercase().as_str() {
                "AND" => Tok::And,
                "OR" => Tok::Or,
                "NOT" => Tok::Not,
                "TRUE" => Tok::True,
                "FALSE" => Tok::False,
                _ => Tok::Ident(word),
            };
            out.push(Spanned { tok, column });
        } else {
            return Err(err(ParseErrorKind::Syntax(format!(
                "unexpected character '{c}'"
            ))));
        }
    }
    out.push(Spanned {
        tok: Tok::End,
        column: chars.len() + 1,
    });
    Ok(out)
}

struct Parser {
    toks: Vec<Spanned>,
    pos: usize,
}

impl Parser {
    fn peek(&self) -> &Tok {
        &self.toks[self.pos].tok
    }

    fn next(&mut self) -> Tok {
        let t = self.toks[self.pos].tok.clone();
        if self.pos + 1 < self.toks.len() {
            self.pos += 1;
        }
        t
    }

    fn error_here(&self, msg: String) -> ParseError {
        ParseError {
            token: self.pos + 1,
            column: self.toks[self.pos].column,
            kind: ParseErrorKind::Syntax(msg),
        }
    }

    fn or_expr(&mut self) -> Result<Expr, ParseError> {
        let mut lhs = self.and_expr()?;
        while *self.peek() == Tok::Or {
            self.next();
            let rhs = self.and_expr()?;
            lhs = Expr::Or(Box::new(lhs), Box::new(rhs));
        }
        Ok(lhs)
    }

    fn and_expr(&mut self) -> Result<Expr, ParseError> {
        let mut lhs = self.unary()?;
        while *self.peek() == Tok::And {
            self.next();
            let rhs = self.unary()?;
            lhs = Expr::And(Box::new(lhs), Box::new(rhs));
        }
        Ok(lhs)
    }

    fn unary(&mut self) -> Result<Expr, ParseError> {
        if *self.peek() == Tok::Not {
            self.next();
            return Ok(Expr::Not(Box::new(self.unary()?)));
        }
        self.primary()
    }

    fn primary(&mut self) -> Result<Expr, ParseError> {
        match self.peek().clone() {
            Tok::LParen => {
                self.next();
                let inner = self.or_expr()?;
                if *self.peek() != Tok::RParen {
                    return Err(self.error_here(format!(
                        "expected ')' but found {}",
                        self.peek().describe()
                    )));
                }
                self.next();
                Ok(inner)
            }
            Tok::True => {
                self.next();
                Ok(Expr::Literal(true))
            }
            Tok::False => {
                self.next();
                Ok(Expr::Literal(false))
            }
            _ => self.comparison(),
        }
    }

    fn operand(&mut self) -> Result<Operand, ParseError> {
        match self.peek().clone() {
            Tok::Ident(name) => {
                self.next();
                Ok(Operand::Point(name))
            }
            Tok::Number(v) => {
                self.next();
                Ok(Operand::Constant(v))
            }
            other => Err(self.error_here(format!(
                "expected a point name or number but found {}",
                other.describe()
            ))),
        }
    }

    fn comparison(&mut self) -> Result<Expr, ParseError> {
        let lhs = self.operand()?;
        let op = match self.peek().clone() {
            Tok::Cmp(op) => {
                self.next();
                op
            }
            other => {
                return Err(self.error_here(format!(
                    "expected a comparison operator but found {}",
                    other.describe()
                )))
            }
        };
        let rhs = self.operand()?;
        Ok(Expr::compare(lhs, op, rhs))
    }
}

/// Parses an expression string into its tree.
pub fn parse_expression(src: &str) -> Result<Expr, ParseError> {
    let toks = tokenize(src)?;
    let mut parser = Parser { toks, pos: 0 };
    let expr = parser.or_expr()?;
    if *parser.peek() != Tok::End {
        return Err(parser.error_here(format!(
            "unexpected {} after complete expression",
            parser.peek().describe()
        )));
    }
    Ok(expr)
}
