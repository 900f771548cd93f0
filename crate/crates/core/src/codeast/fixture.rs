//! A tiny expression language for building test ASTs.
//!
//! ```text
//! body   := stmt (';' stmt)* ';'?
//! stmt   := 'return' expr | ident '=' expr | expr
//! expr   := term (('+' | '-') term)*
//! term   := factor (('*' | '/') factor)*
//! factor := number | ident | ident '(' (expr (',' expr)*)? ')' | '(' expr ')'
//! ```
//!
//! The root is always a `Block`. Leaves are `Name` or `IntLit`.

use super::AstNode;
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Ident(String),
    Num(String),
    Sym(char),
}

fn lex(src: &str) -> Result<Vec<Tok>> {
    let chars: Vec<char> = src.chars().collect();
    let mut toks = Vec::new();
    let mut i = 0;
    while i < chars.len() {
        let c = chars[i];
        if c.is_whitespace() {
            i += 1;
        } else if c.is_ascii_digit() {
            let start = i;
            while i < chars.len() && chars[i].is_ascii_digit() {
                i += 1;
            }
            toks.push(Tok::Num(chars[start..i].iter().collect()));
        } else if c.is_alphabetic() || c == '_' {
            let start = i;
            while i < chars.len() && (chars[i].is_alphanumeric() || chars[i] == '_') {
                i += 1;
            }
            toks.push(Tok::Ident(chars[start..i].iter().collect()));
        } else if "+-*/=();,".contains(c) {
            toks.push(Tok::Sym(c));
            i += 1;
        } else {
            return Err(Error::parse(format!("offset {i}"), format!("unexpected {c:?}")));
        }
    }
    Ok(toks)
}

struct Parser {
    toks: Vec<Tok>,
    pos: usize,
}

impl Parser {
    fn peek(&self) -> Option<&Tok> {
        self.toks.get(self.pos)
    }

    fn peek_sym(&self, c: char) -> bool {
        self.peek() == Some(&Tok::Sym(c))
    }

    fn expect(&mut self, c: char) -> Result<()> {
        if self.peek_sym(c) {
            self.pos += 1;
            Ok(())
        } else {
            Err(Error::parse(format!("token {}", self.pos), format!("expected `{c}`")))
        }
    }

    fn stmt(&mut self) -> Result<AstNode> {
        if let Some(Tok::Ident(name)) = self.peek() {
            if name == "return" {
                self.pos += 1;
                return Ok(AstNode::interior("Return", vec![self.expr()?]));
            }
            if self.toks.get(self.pos + 1) == Some(&Tok::Sym('=')) {
                let target = AstNode::leaf("Name", name.clone());
                self.pos += 2;
                return Ok(AstNode::interior("Assign", vec![target, self.expr()?]));
            }
        }
        self.expr()
    }

    fn binary(&mut self, ops: &[(char, &str)], next: fn(&mut Self) -> Result<AstNode>) -> Result<AstNode> {
        let mut lhs = next(self)?;
        'outer: loop {
            for &(sym, kind) in ops {
                if self.peek_sym(sym) {
                    self.pos += 1;
                    let rhs = next(self)?;
                    lhs = AstNode::interior(kind, vec![lhs, rhs]);
                    continue 'outer;
                }
            }
            return Ok(lhs);
        }
    }

    fn expr(&mut self) -> Result<AstNode> {
        self.binary(&[('+', "Plus"), ('-', "Minus")], Self::term)
    }

    fn term(&mut self) -> Result<AstNode> {
        self.binary(&[('*', "Times"), ('/', "Div")], Self::factor)
    }

    fn factor(&mut self) -> Result<AstNode> {
        match self.peek().cloned() {
            Some(Tok::Num(n)) => {
                self.pos += 1;
                Ok(AstNode::leaf("IntLit", n))
            }
            Some(Tok::Ident(name)) => {
                self.pos += 1;
                let callee = AstNode::leaf("Name", name);
                if !self.peek_sym('(') {
                    return Ok(callee);
                }
                self.pos += 1;
                let mut children = vec![callee];
                if !self.peek_sym(')') {
                    children.push(self.expr()?);
                    while self.peek_sym(',') {
                        self.pos += 1;
                        children.push(self.expr()?);
                    }
                }
                self.expect(')')?;
                Ok(AstNode::interior("Call", children))
            }
            Some(Tok::Sym('(')) => {
                self.pos += 1;
                let inner = self.expr()?;
                self.expect(')')?;
                Ok(inner)
            }
            other => Err(Error::parse(
                format!("token {}", self.pos),
                format!("expected an operand, found {other:?}"),
            )),
        }
    }
}

/// Parses a method body into a `Block`-rooted AST.
pub fn parse_method(src: &str) -> Result<AstNode> {
    let mut parser = Parser {
        toks: lex(src)?,
        pos: 0,
    };
    let mut stmts = Vec::new();
    while parser.peek().is_some() {
        stmts.push(parser.stmt()?);
        if parser.peek().is_some() {
            parser.expect(';')?;
        }
    }
    if stmts.is_empty() {
        return Err(Error::parse("offset 0", "empty method body"));
    }
    Ok(AstNode::interior("Block", stmts))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_assignment() {
        let ast = parse_method("x = y + 1").unwrap();
        let expected = AstNode::interior(
            "Block",
            vec![AstNode::interior(
                "Assign",
                vec![
                    AstNode::leaf("Name", "x"),
                    AstNode::interior("Plus", vec![AstNode::leaf("Name", "y"), AstNode::leaf("IntLit", "1")]),
                ],
            )],
        );
        assert_eq!(ast, expected);
        ast.validate("root").unwrap();
    }

    #[test]
    fn precedence_calls_and_statements() {
        let ast = parse_method("a = f(b, 2) * (c - d); return a;").unwrap();
        assert_eq!(ast.children.len(), 2);
        assert_eq!(ast.children[0].children[1].kind, "Times");
        assert_eq!(ast.children[0].children[1].children[0].kind, "Call");
        assert_eq!(ast.children[1].kind, "Return");
        assert_eq!(ast.leaf_count(), 7);
    }

    #[test]
    fn errors() {
        assert!(parse_method("").is_err());
        assert!(parse_method("x = ").is_err());
        assert!(parse_method("f(a").is_err());
        assert!(parse_method("a # b").is_err());
    }
}
