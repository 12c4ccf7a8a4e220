use std::fmt;

use super::{BinOp, Constant, Func, Node};

#[derive(Debug, Clone, PartialEq)]
pub enum ParseErrorKind {
    Syntax {
        expected: Vec<&'static str>,
        found: String,
    },
    UnknownIdentifier(String),
    Arity {
        func: &'static str,
        found: usize,
    },
}

/// Parse failure at a byte offset into the source.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub struct ParseError {
    pub offset: usize,
    pub kind: ParseErrorKind,
}

impl fmt::Display for ParseError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.kind {
            ParseErrorKind::Syntax { expected, found } => write!(
                f,
                "syntax error at byte {}: expected one of [{}], found {}",
                self.offset,
                expected.join(", "),
                found
            ),
            ParseErrorKind::UnknownIdentifier(name) => {
                write!(f, "unknown identifier `{name}` at byte {}", self.offset)
            }
            ParseErrorKind::Arity { func, found } => write!(
                f,
                "wrong number of arguments to `{func}` at byte {}: got {found}",
                self.offset
            ),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Num(f64),
    Ident(String),
    Op(char),
    LParen,
    RParen,
    Comma,
    End,
}

impl Tok {
    fn describe(&self) -> String {
        match self {
            Tok::Num(v) => format!("number {v}"),
            Tok::Ident(s) => format!("identifier `{s}`"),
            Tok::Op(c) => format!("`{c}`"),
            Tok::LParen => "`(`".into(),
            Tok::RParen => "`)`".into(),
            Tok::Comma => "`,`".into(),
            Tok::End => "end of input".into(),
        }
    }
}

fn lex(src: &str) -> Result<Vec<(usize, Tok)>, ParseError> {
    let bytes = src.as_bytes();
    let mut out = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        let c = bytes[i];
        if c.is_ascii_whitespace() {
            i += 1;
            continue;
        }
        let start = i;
        let tok = match c {
            b'0'..=b'9' | b'.' => {
                while i < bytes.len() && bytes[i].is_ascii_digit() {
                    i += 1;
                }
                if i < bytes.len() && bytes[i] == b'.' {
                    i += 1;
                    while i < bytes.len() && bytes[i].is_ascii_digit() {
                        i += 1;
                    }
                }
                // exponent only when followed by digits, so `2e` stays `2` then `e`
                if i < bytes.len() && (bytes[i] == b'e' || bytes[i] == b'E') {
                    let mut j = i + 1;
                    if j < bytes.len() && (bytes[j] == b'+' || bytes[j] == b'-') {
                        j += 1;
                    }
                    if j < bytes.len() && bytes[j].is_ascii_digit() {
                        while j < bytes.len() && bytes[j].is_ascii_digit() {
                            j += 1;
                        }
                        i = j;
                    }
                }
                let text = &src[start..i];
                match text.parse::<f64>() {
                    Ok(v) if v.is_finite() => Tok::Num(v),
                    _ => {
                        return Err(ParseError {
                            offset: start,
                            kind: ParseErrorKind::Syntax {
                                expected: vec!["number"],
                                found: format!("`{text}`"),
                            },
                        })
                    }
                }
            }
            b'a'..=b'z' | b'A'..=b'Z' | b'_' => {
                while i < bytes.len() && (bytes[i].is_ascii_alphanumeric() || bytes[i] == b'_') {
                    i += 1;
                }
                Tok::Ident(src[start..i].to_string())
            }
            b'+' | b'-' | b'*' | b'/' | b'^' => {
                i += 1;
                Tok::Op(c as char)
            }
            b'(' => {
                i += 1;
                Tok::LParen
            }
            b')' => {
                i += 1;
                Tok::RParen
            }
            b',' => {
                i += 1;
                Tok::Comma
            }
            _ => {
                let ch = src[start..].chars().next().unwrap_or('?');
                return Err(ParseError {
                    offset: start,
                    kind: ParseErrorKind::Syntax {
                        expected: vec!["number", "identifier", "operator", "(", ")"],
                        found: format!("`{ch}`"),
                    },
                });
            }
        };
        out.push((start, tok));
    }
    out.push((src.len(), Tok::End));
    Ok(out)
}

const OPERAND: &[&str] = &["number", "t", "pi", "e", "function", "(", "-", "+"];

struct Parser {
    toks: Vec<(usize, Tok)>,
    pos: usize,
}

impl Parser {
    fn peek(&self) -> &Tok {
        &self.toks[self.pos].1
    }

    fn offset(&self) -> usize {
        self.toks[self.pos].0
    }

    fn bump(&mut self) -> Tok {
        let t = self.toks[self.pos].1.clone();
        if self.pos + 1 < self.toks.len() {
            self.pos += 1;
        }
        t
    }

    fn error(&self, expected: &[&'static str]) -> ParseError {
        ParseError {
            offset: self.offset(),
            kind: ParseErrorKind::Syntax {
                expected: expected.to_vec(),
                found: self.peek().describe(),
            },
        }
    }

    fn expr(&mut self) -> Result<Node, ParseError> {
        let mut lhs = self.term()?;
        loop {
            let op = match self.peek() {
                Tok::Op('+') => BinOp::Add,
                Tok::Op('-') => BinOp::Sub,
                _ => return Ok(lhs),
            };
            self.bump();
            let rhs = self.term()?;
            lhs = Node::binary(op, lhs, rhs);
        }
    }

    fn term(&mut self) -> Result<Node, ParseError> {
        let mut lhs = self.unary()?;
        loop {
            let op = match self.peek() {
                Tok::Op('*') => BinOp::Mul,
                Tok::Op('/') => BinOp::Div,
                _ => return Ok(lhs),
            };
            self.bump();
            let rhs = self.unary()?;
            lhs = Node::binary(op, lhs, rhs);
        }
    }

    fn unary(&mut self) -> Result<Node, ParseError> {
        match self.peek() {
            Tok::Op('-') => {
                self.bump();
                Ok(Node::Neg(Box::new(self.unary()?)))
            }
            Tok::Op('+') => {
                self.bump();
                self.unary()
            }
            _ => self.power(),
        }
    }

    fn power(&mut self) -> Result<Node, ParseError> {
        let base = self.primary()?;
        if let Tok::Op('^') = self.peek() {
            self.bump();
            let exponent = self.unary()?;
            return Ok(Node::binary(BinOp::Pow, base, exponent));
        }
        Ok(base)
    }

    fn primary(&mut self) -> Result<Node, ParseError> {
        let offset = self.offset();
        match self.peek().clone() {
            Tok::Num(v) => {
                self.bump();
                Ok(Node::Num(v))
            }
            Tok::LParen => {
                self.bump();
                let inner = self.expr()?;
                self.expect_rparen()?;
                Ok(inner)
            }
            Tok::Ident(name) => {
                self.bump();
                match name.as_str() {
                    "t" => return Ok(Node::Var),
                    "pi" => return Ok(Node::Const(Constant::Pi)),
                    "e" => return Ok(Node::Const(Constant::E)),
                    _ => {}
                }
                let Some(func) = Func::from_name(&name) else {
                    return Err(ParseError {
                        offset,
                        kind: ParseErrorKind::UnknownIdentifier(name),
                    });
                };
                if *self.peek() != Tok::LParen {
                    return Err(self.error(&["("]));
                }
                self.bump();
                let mut args = vec![self.expr()?];
                while *self.peek() == Tok::Comma {
                    self.bump();
                    args.push(self.expr()?);
                }
                self.expect_rparen()?;
                let ok = if func.is_variadic() {
                    args.len() >= 2
                } else {
                    args.len() == 1
                };
                if !ok {
                    return Err(ParseError {
                        offset,
                        kind: ParseErrorKind::Arity {
                            func: func.name(),
                            found: args.len(),
                        },
                    });
                }
                Ok(Node::Call(func, args))
            }
            _ => Err(self.error(OPERAND)),
        }
    }

    fn expect_rparen(&mut self) -> Result<(), ParseError> {
        match self.peek() {
            Tok::RParen => {
                self.bump();
                Ok(())
            }
            _ => Err(self.error(&[")", ",", "operator"])),
        }
    }
}

pub(super) fn parse(src: &str) -> Result<Node, ParseError> {
    let mut p = Parser {
        toks: lex(src)?,
        pos: 0,
    };
    let node = p.expr()?;
    if *p.peek() != Tok::End {
        return Err(p.error(&["operator", "end of input"]));
    }
    Ok(node)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn err(src: &str) -> ParseError {
        parse(src).unwrap_err()
    }

    #[test]
    fn empty_input_expects_an_operand() {
        let e = err("");
        assert_eq!(e.offset, 0);
        match e.kind {
            ParseErrorKind::Syntax { expected, found } => {
                assert!(expected.contains(&"number"));
                assert_eq!(found, "end of input");
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn offsets_point_at_the_bad_token() {
        assert_eq!(err("1 + * 2").offset, 4);
        assert_eq!(err("sin(t").offset, 5);
        assert_eq!(err("(1 + 2))").offset, 7);
        assert_eq!(err("2 $ 3").offset, 2);
        assert_eq!(err("2e").offset, 1);
    }

    #[test]
    fn unknown_identifiers() {
        let e = err("3*foo(t)");
        assert_eq!(e.offset, 2);
        assert_eq!(e.kind, ParseErrorKind::UnknownIdentifier("foo".into()));
        assert_eq!(
            err("x + 1").kind,
            ParseErrorKind::UnknownIdentifier("x".into())
        );
    }

    #[test]
    fn function_arity() {
        assert!(matches!(err("sin(t, 1)").kind, ParseErrorKind::Arity { func: "sin", found: 2 }));
        assert!(matches!(err("max(t)").kind, ParseErrorKind::Arity { func: "max", found: 1 }));
        assert!(matches!(err("sin t").kind, ParseErrorKind::Syntax { .. }));
    }

    #[test]
    fn display_mentions_offset() {
        let msg = err("1 +").to_string();
        assert!(msg.contains("byte 3"), "{msg}");
    }
}
