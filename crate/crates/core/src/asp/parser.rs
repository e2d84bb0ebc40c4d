//! Hand-written lexer and recursive-descent parser for the program grammar.
//!
//! Identifiers `[a-z][A-Za-z0-9_]*` are predicates and constants, `[A-Z]...`
//! are variables. `%` starts a line comment. A backslash-escaped underscore
//! (`want\_go`) is read as a plain underscore.

use super::ground::check_safety;
use super::syntax::{Atom, Builtin, CmpOp, Expr, Program, Rule, Term};
use super::AspError;

#[derive(Debug, Clone, PartialEq)]
pub(crate) enum Tok {
    Ident(String),
    Var(String),
    Int(i64),
    LParen,
    RParen,
    Comma,
    Dot,
    DotDot,
    If,
    Colon,
    Cmp(CmpOp),
    Plus,
    Minus,
    Eof,
}

impl Tok {
    fn describe(&self) -> String {
        match self {
            Tok::Ident(s) | Tok::Var(s) => format!("`{s}`"),
            Tok::Int(i) => format!("`{i}`"),
            Tok::LParen => "`(`".into(),
            Tok::RParen => "`)`".into(),
            Tok::Comma => "`,`".into(),
            Tok::Dot => "`.`".into(),
            Tok::DotDot => "`..`".into(),
            Tok::If => "`:-`".into(),
            Tok::Colon => "`:`".into(),
            Tok::Cmp(op) => format!("`{}`", op.symbol()),
            Tok::Plus => "`+`".into(),
            Tok::Minus => "`-`".into(),
            Tok::Eof => "end of input".into(),
        }
    }
}

#[derive(Debug, Clone)]
pub(crate) struct Spanned {
    pub tok: Tok,
    pub line: usize,
    pub column: usize,
}

pub(crate) fn lex(text: &str) -> Result<Vec<Spanned>, AspError> {
    let chars: Vec<char> = text.chars().collect();
    let mut out = Vec::new();
    let (mut i, mut line, mut col) = (0usize, 1usize, 1usize);
    let err = |line, column, message: String| AspError::Syntax {
        line,
        column,
        message,
    };
    while i < chars.len() {
        let c = chars[i];
        let (start_line, start_col) = (line, col);
        let mut push = |tok: Tok, width: usize, i: &mut usize, col: &mut usize| {
            out.push(Spanned {
                tok,
                line: start_line,
                column: start_col,
            });
            *i += width;
            *col += width;
        };
        match c {
            '\n' => {
                i += 1;
                line += 1;
                col = 1;
            }
            c if c.is_whitespace() => {
                i += 1;
                col += 1;
            }
            '%' => {
                while i < chars.len() && chars[i] != '\n' {
                    i += 1;
                }
            }
            '(' => push(Tok::LParen, 1, &mut i, &mut col),
            ')' => push(Tok::RParen, 1, &mut i, &mut col),
            ',' => push(Tok::Comma, 1, &mut i, &mut col),
            '+' => push(Tok::Plus, 1, &mut i, &mut col),
            '-' => push(Tok::Minus, 1, &mut i, &mut col),
            '.' if chars.get(i + 1) == Some(&'.') => push(Tok::DotDot, 2, &mut i, &mut col),
            '.' => push(Tok::Dot, 1, &mut i, &mut col),
            ':' if chars.get(i + 1) == Some(&'-') => push(Tok::If, 2, &mut i, &mut col),
            ':' => push(Tok::Colon, 1, &mut i, &mut col),
            '=' => push(Tok::Cmp(CmpOp::Eq), 1, &mut i, &mut col),
            '!' if chars.get(i + 1) == Some(&'=') => {
                push(Tok::Cmp(CmpOp::Ne), 2, &mut i, &mut col)
            }
            '<' if chars.get(i + 1) == Some(&'=') => {
                push(Tok::Cmp(CmpOp::Le), 2, &mut i, &mut col)
            }
            '<' => push(Tok::Cmp(CmpOp::Lt), 1, &mut i, &mut col),
            '>' if chars.get(i + 1) == Some(&'=') => {
                push(Tok::Cmp(CmpOp::Ge), 2, &mut i, &mut col)
            }
            '>' => push(Tok::Cmp(CmpOp::Gt), 1, &mut i, &mut col),
            c if c.is_ascii_digit() => {
                let mut j = i;
                while j < chars.len() && chars[j].is_ascii_digit() {
                    j += 1;
                }
                let digits: String = chars[i..j].iter().collect();
                let value: i64 = digits
                    .parse()
                    .ok()
                    .filter(|v| *v <= i64::from(i32::MAX) + 1)
                    .ok_or_else(|| {
                        err(line, col, format!("integer `{digits}` out of range"))
                    })?;
                push(Tok::Int(value), j - i, &mut i, &mut col);
            }
            c if c.is_ascii_alphabetic() => {
                let mut name = String::new();
                let mut j = i;
                while j < chars.len() {
                    match chars[j] {
                        ch if ch.is_ascii_alphanumeric() || ch == '_' => {
                            name.push(ch);
                            j += 1;
                        }
                        '\\' if chars.get(j + 1) == Some(&'_') => {
                            name.push('_');
                            j += 2;
                        }
                        _ => break,
                    }
                }
                let tok = if c.is_ascii_uppercase() {
                    Tok::Var(name)
                } else {
                    Tok::Ident(name)
                };
                push(tok, j - i, &mut i, &mut col);
            }
            other => return Err(err(line, col, format!("unexpected character `{other}`"))),
        }
    }
    out.push(Spanned {
        tok: Tok::Eof,
        line,
        column: col,
    });
    Ok(out)
}

pub(crate) struct Parser {
    toks: Vec<Spanned>,
    pos: usize,
}

impl Parser {
    pub(crate) fn new(text: &str) -> Result<Self, AspError> {
        Ok(Parser {
            toks: lex(text)?,
            pos: 0,
        })
    }

    pub(crate) fn peek(&self) -> &Tok {
        &self.toks[self.pos].tok
    }

    fn peek_at(&self, offset: usize) -> &Tok {
        let idx = (self.pos + offset).min(self.toks.len() - 1);
        &self.toks[idx].tok
    }

    pub(crate) fn bump(&mut self) -> Tok {
        let tok = self.toks[self.pos].tok.clone();
        if self.pos + 1 < self.toks.len() {
            self.pos += 1;
        }
        tok
    }

    pub(crate) fn error(&self, message: impl Into<String>) -> AspError {
        let here = &self.toks[self.pos];
        AspError::Syntax {
            line: here.line,
            column: here.column,
            message: message.into(),
        }
    }

    pub(crate) fn expect(&mut self, tok: Tok) -> Result<(), AspError> {
        if *self.peek() == tok {
            self.bump();
            Ok(())
        } else {
            Err(self.error(format!(
                "expected {}, found {}",
                tok.describe(),
                self.peek().describe()
            )))
        }
    }

    pub(crate) fn at_eof(&self) -> bool {
        matches!(self.peek(), Tok::Eof)
    }

    pub(crate) fn ident(&mut self) -> Result<String, AspError> {
        match self.peek().clone() {
            Tok::Ident(name) => {
                self.bump();
                Ok(name)
            }
            other => Err(self.error(format!("expected identifier, found {}", other.describe()))),
        }
    }

    fn program(&mut self) -> Result<Program, AspError> {
        let mut rules = Vec::new();
        while !self.at_eof() {
            let line = self.toks[self.pos].line;
            let column = self.toks[self.pos].column;
            let rule = self.rule()?;
            check_safety(&rule).map_err(|variable| AspError::Unsafe {
                line,
                column,
                variable,
                rule: rule.to_string(),
            })?;
            rules.push(rule);
        }
        Ok(Program { rules })
    }

    fn rule(&mut self) -> Result<Rule, AspError> {
        let mut rule = Rule::default();
        if *self.peek() != Tok::If {
            rule.head = Some(self.atom()?);
        }
        if *self.peek() == Tok::If {
            self.bump();
            self.body(&mut rule)?;
            if rule.body_is_empty() {
                return Err(self.error("empty rule body"));
            }
        }
        self.expect(Tok::Dot)?;
        Ok(rule)
    }

    fn body(&mut self, rule: &mut Rule) -> Result<(), AspError> {
        loop {
            self.literal(rule)?;
            if *self.peek() == Tok::Comma {
                self.bump();
            } else {
                return Ok(());
            }
        }
    }

    fn literal(&mut self, rule: &mut Rule) -> Result<(), AspError> {
        match self.peek().clone() {
            Tok::Ident(word) if word == "not" && matches!(self.peek_at(1), Tok::Ident(_)) => {
                self.bump();
                rule.neg_body.push(self.atom()?);
            }
            Tok::Ident(_) => {
                let atom = self.atom()?;
                if let Tok::Cmp(op) = *self.peek() {
                    if !atom.args.is_empty() {
                        return Err(self.error("compound term in comparison"));
                    }
                    self.bump();
                    let lhs = self.expr_tail(Expr::Term(Term::Const(atom.predicate)))?;
                    let rhs = self.expr()?;
                    rule.builtins.push(Builtin { op, lhs, rhs });
                } else if matches!(self.peek(), Tok::Plus | Tok::Minus) {
                    if !atom.args.is_empty() {
                        return Err(self.error("compound term in arithmetic"));
                    }
                    let lhs = self.expr_tail(Expr::Term(Term::Const(atom.predicate)))?;
                    let op = self.cmp_op()?;
                    let rhs = self.expr()?;
                    rule.builtins.push(Builtin { op, lhs, rhs });
                } else {
                    rule.pos_body.push(atom);
                }
            }
            Tok::Var(_) | Tok::Int(_) | Tok::LParen | Tok::Minus => {
                let lhs = self.expr()?;
                let op = self.cmp_op()?;
                let rhs = self.expr()?;
                rule.builtins.push(Builtin { op, lhs, rhs });
            }
            other => {
                return Err(self.error(format!("expected body literal, found {}", other.describe())))
            }
        }
        Ok(())
    }

    fn cmp_op(&mut self) -> Result<CmpOp, AspError> {
        match *self.peek() {
            Tok::Cmp(op) => {
                self.bump();
                Ok(op)
            }
            ref other => Err(self.error(format!(
                "expected comparison operator, found {}",
                other.describe()
            ))),
        }
    }

    pub(crate) fn atom(&mut self) -> Result<Atom, AspError> {
        let predicate = self.ident()?;
        let mut args = Vec::new();
        if *self.peek() == Tok::LParen {
            self.bump();
            loop {
                args.push(self.term()?);
                match self.bump() {
                    Tok::Comma => continue,
                    Tok::RParen => break,
                    other => {
                        self.pos -= 1;
                        return Err(self.error(format!(
                            "expected `,` or `)`, found {}",
                            other.describe()
                        )));
                    }
                }
            }
        }
        Ok(Atom { predicate, args })
    }

    fn int(&mut self, negative: bool) -> Result<i32, AspError> {
        match self.peek().clone() {
            Tok::Int(v) => {
                let v = if negative { -v } else { v };
                let v = i32::try_from(v).map_err(|_| self.error("integer out of range"))?;
                self.bump();
                Ok(v)
            }
            other => Err(self.error(format!("expected integer, found {}", other.describe()))),
        }
    }

    fn term(&mut self) -> Result<Term, AspError> {
        match self.peek().clone() {
            Tok::Ident(name) => {
                self.bump();
                Ok(Term::Const(name))
            }
            Tok::Var(name) => {
                self.bump();
                Ok(Term::Var(name))
            }
            Tok::Int(_) | Tok::Minus => {
                let negative = *self.peek() == Tok::Minus;
                if negative {
                    self.bump();
                }
                let lo = self.int(negative)?;
                if *self.peek() == Tok::DotDot {
                    self.bump();
                    let negative = *self.peek() == Tok::Minus;
                    if negative {
                        self.bump();
                    }
                    let hi = self.int(negative)?;
                    Ok(Term::Range(lo, hi))
                } else {
                    Ok(Term::Int(lo))
                }
            }
            other => Err(self.error(format!("expected term, found {}", other.describe()))),
        }
    }

    fn expr(&mut self) -> Result<Expr, AspError> {
        let first = self.primary()?;
        self.expr_tail(first)
    }

    fn expr_tail(&mut self, mut acc: Expr) -> Result<Expr, AspError> {
        loop {
            match self.peek() {
                Tok::Plus => {
                    self.bump();
                    acc = Expr::Add(Box::new(acc), Box::new(self.primary()?));
                }
                Tok::Minus => {
                    self.bump();
                    acc = Expr::Sub(Box::new(acc), Box::new(self.primary()?));
                }
                _ => return Ok(acc),
            }
        }
    }

    fn primary(&mut self) -> Result<Expr, AspError> {
        match self.peek().clone() {
            Tok::LParen => {
                self.bump();
                let inner = self.expr()?;
                self.expect(Tok::RParen)?;
                Ok(inner)
            }
            Tok::Minus => {
                self.bump();
                Ok(Expr::Term(Term::Int(self.int(true)?)))
            }
            Tok::Int(_) => Ok(Expr::Term(Term::Int(self.int(false)?))),
            Tok::Var(v) => {
                self.bump();
                Ok(Expr::Term(Term::Var(v)))
            }
            Tok::Ident(c) => {
                self.bump();
                Ok(Expr::Term(Term::Const(c)))
            }
            other => Err(self.error(format!("expected expression, found {}", other.describe()))),
        }
    }
}

/// Parses program text. Every rule is checked for safety.
pub fn parse_program(text: &str) -> Result<Program, AspError> {
    Parser::new(text)?.program()
}

/// Parses a single atom in surface syntax, e.g. `want_go(c1,t1,ns,2)`.
/// Variables are allowed; see [`parse_ground_atom`] for the strict form.
pub fn parse_atom(text: &str) -> Result<Atom, AspError> {
    let mut parser = Parser::new(text)?;
    let atom = parser.atom()?;
    if !parser.at_eof() {
        return Err(parser.error("trailing input after atom"));
    }
    Ok(atom)
}

pub fn parse_ground_atom(text: &str) -> Result<Atom, AspError> {
    let atom = parse_atom(text)?;
    if !atom.is_ground() {
        return Err(AspError::NonGround(atom.to_string()));
    }
    Ok(atom)
}

/// Parses a comma-separated list of atoms; an optional trailing `.` is
/// accepted. Empty input yields an empty list.
pub fn parse_atom_list(text: &str) -> Result<Vec<Atom>, AspError> {
    let mut parser = Parser::new(text)?;
    let mut atoms = Vec::new();
    while !parser.at_eof() {
        atoms.push(parser.atom()?);
        match parser.peek() {
            Tok::Comma => {
                parser.bump();
            }
            Tok::Dot => {
                parser.bump();
                if !parser.at_eof() {
                    return Err(parser.error("trailing input after `.`"));
                }
            }
            Tok::Eof => {}
            other => {
                return Err(parser.error(format!("expected `,`, found {}", other.describe())))
            }
        }
    }
    Ok(atoms)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_single_rule() {
        let p = parse_program("device_ok :- test_ok.").unwrap();
        assert_eq!(p.rules.len(), 1);
        let rule = &p.rules[0];
        assert_eq!(rule.head, Some(Atom::prop("device_ok")));
        assert_eq!(rule.pos_body, vec![Atom::prop("test_ok")]);
        assert!(rule.neg_body.is_empty());
    }

    #[test]
    fn empty_input_is_empty_program() {
        assert!(parse_program("").unwrap().is_empty());
        assert!(parse_program("  % only a comment\n").unwrap().is_empty());
    }

    #[test]
    fn missing_dot_is_syntax_error() {
        match parse_program("p :- q") {
            Err(AspError::Syntax { line, column, .. }) => {
                assert_eq!((line, column), (1, 7));
            }
            other => panic!("expected syntax error, got {other:?}"),
        }
    }

    #[test]
    fn error_positions_track_lines() {
        let err = parse_program("p.\nq :- r,\n  $.").unwrap_err();
        match err {
            AspError::Syntax { line, column, .. } => assert_eq!((line, column), (3, 3)),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn negation_builtins_and_ranges() {
        let p = parse_program(
            "time(1..5).\n\
             next(Y,X) :- time(X), time(Y), Y = X + 1.\n\
             d(L1,L2) :- lane(L1), lane(L2), L1!=L2, not blocked(L1).\n\
             :- not active(t1).",
        )
        .unwrap();
        assert_eq!(p.rules[0].head.as_ref().unwrap().args, vec![Term::Range(1, 5)]);
        assert_eq!(p.rules[1].builtins.len(), 1);
        assert_eq!(p.rules[2].neg_body[0].predicate, "blocked");
        assert_eq!(p.rules[2].builtins[0].op, CmpOp::Ne);
        assert!(p.rules[3].is_constraint());
    }

    #[test]
    fn escaped_underscore_normalizes() {
        let a = parse_program("want\\_go(c1,t1,ns,2).").unwrap();
        let b = parse_program("want_go(c1,t1,ns,2).").unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn unsafe_rule_names_variable() {
        match parse_program("p(X) :- not q(X).") {
            Err(AspError::Unsafe { variable, .. }) => assert_eq!(variable, "X"),
            other => panic!("{other:?}"),
        }
        match parse_program("p(X,Y) :- q(X).") {
            Err(AspError::Unsafe { variable, .. }) => assert_eq!(variable, "Y"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn negative_integers_and_oversized_literals() {
        let p = parse_program("t(-3). u(X) :- t(X), X < -1.").unwrap();
        assert_eq!(p.rules[0].head.as_ref().unwrap().args, vec![Term::Int(-3)]);
        assert!(parse_program("t(99999999999).").is_err());
    }

    #[test]
    fn atom_helpers() {
        assert_eq!(
            parse_ground_atom("want_go(c1,t1,ns,2)").unwrap().to_string(),
            "want_go(c1,t1,ns,2)"
        );
        assert!(parse_ground_atom("p(X)").is_err());
        assert!(parse_atom("p(a) q").is_err());
        let list = parse_atom_list("car(C), want_go(C,TL,L,T)").unwrap();
        assert_eq!(list.len(), 2);
        assert!(parse_atom_list("").unwrap().is_empty());
    }

    #[test]
    fn display_reparses() {
        let src = "a(1..3).\nr(Y) :- a(X), Y = X - (1 + 2), not b(X).\n:- r(X), X >= 2.\n";
        let p = parse_program(src).unwrap();
        assert_eq!(parse_program(&p.to_string()).unwrap(), p);
    }
}
