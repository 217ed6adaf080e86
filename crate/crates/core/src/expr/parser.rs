use super::{BinOp, Builtin, Expression, Node};
use crate::error::{Error, Result};

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

fn lex(src: &str) -> Result<Vec<(Tok, usize)>> {
    let mut out = Vec::new();
    let mut chars = src.char_indices().peekable();
    while let Some(&(pos, c)) = chars.peek() {
        match c {
            c if c.is_whitespace() => {
                chars.next();
            }
            '0'..='9' | '.' => {
                let start = pos;
                let mut end = pos;
                let mut seen_digit = false;
                let mut seen_dot = false;
                while let Some(&(p, d)) = chars.peek() {
                    if d.is_ascii_digit() {
                        seen_digit = true;
                    } else if d == '.' && !seen_dot {
                        seen_dot = true;
                    } else {
                        break;
                    }
                    end = p + 1;
                    chars.next();
                }
                if !seen_digit {
                    return Err(Error::Syntax {
                        offset: start,
                        message: "expected digits".into(),
                    });
                }
                // optional exponent, only consumed when digits follow
                if let Some(&(p, e)) = chars.peek() {
                    if e == 'e' || e == 'E' {
                        let rest = &src[p + 1..];
                        let sign_len = usize::from(rest.starts_with(['+', '-']));
                        let digits = rest[sign_len..]
                            .bytes()
                            .take_while(u8::is_ascii_digit)
                            .count();
                        if digits > 0 {
                            let stop = p + 1 + sign_len + digits;
                            while chars.peek().is_some_and(|&(q, _)| q < stop) {
                                chars.next();
                            }
                            end = stop;
                        }
                    }
                }
                let text = &src[start..end];
                let value: f64 = text.parse().map_err(|_| Error::Syntax {
                    offset: start,
                    message: format!("malformed number `{text}`"),
                })?;
                out.push((Tok::Num(value), start));
            }
            c if c.is_ascii_alphabetic() || c == '_' => {
                let start = pos;
                let mut end = pos;
                while let Some(&(p, d)) = chars.peek() {
                    if d.is_ascii_alphanumeric() || d == '_' {
                        end = p + d.len_utf8();
                        chars.next();
                    } else {
                        break;
                    }
                }
                out.push((Tok::Ident(src[start..end].to_string()), start));
            }
            '+' | '-' | '*' | '/' | '^' => {
                out.push((Tok::Op(c), pos));
                chars.next();
            }
            '\u{2212}' => {
                out.push((Tok::Op('-'), pos));
                chars.next();
            }
            '(' => {
                out.push((Tok::LParen, pos));
                chars.next();
            }
            ')' => {
                out.push((Tok::RParen, pos));
                chars.next();
            }
            ',' => {
                out.push((Tok::Comma, pos));
                chars.next();
            }
            other => {
                return Err(Error::Syntax {
                    offset: pos,
                    message: format!("unexpected character `{other}`"),
                })
            }
        }
    }
    out.push((Tok::End, src.len()));
    Ok(out)
}

struct Parser<'a> {
    toks: Vec<(Tok, usize)>,
    pos: usize,
    vars: &'a [&'a str],
}

impl Parser<'_> {
    fn peek(&self) -> &Tok {
        &self.toks[self.pos].0
    }

    fn offset(&self) -> usize {
        self.toks[self.pos].1
    }

    fn bump(&mut self) -> (Tok, usize) {
        let t = self.toks[self.pos].clone();
        if self.pos + 1 < self.toks.len() {
            self.pos += 1;
        }
        t
    }

    fn syntax<T>(&self, message: impl Into<String>) -> Result<T> {
        Err(Error::Syntax {
            offset: self.offset(),
            message: message.into(),
        })
    }

    fn expect(&mut self, tok: Tok, what: &str) -> Result<()> {
        if *self.peek() == tok {
            self.bump();
            Ok(())
        } else {
            self.syntax(format!("expected {what}"))
        }
    }

    fn additive(&mut self) -> Result<Node> {
        let mut lhs = self.multiplicative()?;
        loop {
            let op = match self.peek() {
                Tok::Op('+') => BinOp::Add,
                Tok::Op('-') => BinOp::Sub,
                _ => return Ok(lhs),
            };
            self.bump();
            let rhs = self.multiplicative()?;
            lhs = Node::Binary(op, Box::new(lhs), Box::new(rhs));
        }
    }

    fn multiplicative(&mut self) -> Result<Node> {
        let mut lhs = self.power()?;
        loop {
            let op = match self.peek() {
                Tok::Op('*') => BinOp::Mul,
                Tok::Op('/') => BinOp::Div,
                _ => return Ok(lhs),
            };
            self.bump();
            let rhs = self.power()?;
            lhs = Node::Binary(op, Box::new(lhs), Box::new(rhs));
        }
    }

    fn power(&mut self) -> Result<Node> {
        let base = self.unary()?;
        if *self.peek() == Tok::Op('^') {
            self.bump();
            let exponent = self.power()?;
            return Ok(Node::Binary(BinOp::Pow, Box::new(base), Box::new(exponent)));
        }
        Ok(base)
    }

    fn unary(&mut self) -> Result<Node> {
        if *self.peek() == Tok::Op('-') {
            self.bump();
            return Ok(Node::Neg(Box::new(self.unary()?)));
        }
        self.atom()
    }

    fn atom(&mut self) -> Result<Node> {
        let (tok, at) = self.bump();
        match tok {
            Tok::Num(x) => Ok(Node::Const(x)),
            Tok::LParen => {
                let inner = self.additive()?;
                self.expect(Tok::RParen, "`)`")?;
                Ok(inner)
            }
            Tok::Ident(name) => {
                if *self.peek() == Tok::LParen {
                    self.call(name, at)
                } else if let Some(slot) = self.vars.iter().position(|v| *v == name) {
                    Ok(Node::Var { name, slot })
                } else {
                    Err(Error::UnknownIdentifier { name, offset: at })
                }
            }
            Tok::End => Err(Error::Syntax {
                offset: at,
                message: "unexpected end of input".into(),
            }),
            other => Err(Error::Syntax {
                offset: at,
                message: format!("unexpected token {other:?}"),
            }),
        }
    }

    fn call(&mut self, name: String, at: usize) -> Result<Node> {
        let builtin =
            Builtin::lookup(&name).ok_or(Error::UnknownIdentifier { name: name.clone(), offset: at })?;
        self.expect(Tok::LParen, "`(`")?;
        let mut args = Vec::new();
        if *self.peek() != Tok::RParen {
            loop {
                args.push(self.additive()?);
                if *self.peek() == Tok::Comma {
                    self.bump();
                } else {
                    break;
                }
            }
        }
        self.expect(Tok::RParen, "`)` or `,`")?;
        if args.len() != builtin.arity() {
            return Err(Error::Arity {
                name,
                expected: builtin.arity(),
                found: args.len(),
            });
        }
        Ok(Node::Call(builtin, args))
    }
}

/// Parse `src` against an ordered list of allowed variable names. The order
/// fixes the slot layout used by [`Expression::eval_slots`].
pub fn parse(src: &str, allowed_vars: &[&str]) -> Result<Expression> {
    let toks = lex(src)?;
    let mut p = Parser {
        toks,
        pos: 0,
        vars: allowed_vars,
    };
    if *p.peek() == Tok::End {
        return p.syntax("empty expression");
    }
    let root = p.additive()?;
    if *p.peek() != Tok::End {
        return p.syntax("trailing input");
    }
    Ok(Expression::new(
        root,
        allowed_vars.iter().map(|s| s.to_string()).collect(),
    ))
}
