use std::collections::{BTreeSet, HashSet};

use indexmap::IndexMap;

use super::lexer::{Lexer, Tok, Token};
use super::{id_suffix, is_class_ident, is_var_name, Arg, CodeScript, CodecError, Statement, DISCARD};
use crate::graph::{Literal, NodeId};

struct Parser {
    tokens: Vec<Token>,
    pos: usize,
    bound: HashSet<String>,
}

struct RawStatement {
    targets: Vec<String>,
    class_name: String,
    args: IndexMap<String, Arg>,
    line: usize,
}

/// Parse code text into statements. Node ids come from target suffixes;
/// statements without a usable suffix get fresh ids above the largest
/// suffix in the script, in statement order.
pub fn parse_code(text: &str) -> Result<CodeScript, CodecError> {
    let mut lexer = Lexer::new(text);
    let mut tokens = Vec::new();
    loop {
        let token = lexer.next_token().map_err(|e| CodecError::Syntax {
            line: e.line,
            col: e.col,
            message: e.message,
        })?;
        let done = token.tok == Tok::Eof;
        tokens.push(token);
        if done {
            break;
        }
    }
    let mut parser = Parser {
        tokens,
        pos: 0,
        bound: HashSet::new(),
    };
    let mut raw = Vec::new();
    loop {
        parser.skip_newlines();
        if parser.peek().tok == Tok::Eof {
            break;
        }
        raw.push(parser.statement()?);
    }
    assign_ids(raw)
}

fn assign_ids(raw: Vec<RawStatement>) -> Result<CodeScript, CodecError> {
    let suffix_of = |s: &RawStatement| {
        s.targets
            .iter()
            .find(|t| *t != DISCARD)
            .and_then(|t| id_suffix(t))
    };
    let max = raw
        .iter()
        .flat_map(|s| s.targets.iter())
        .filter_map(|t| id_suffix(t))
        .max()
        .map_or(0, NodeId::get);
    let mut next_fresh = max;
    let mut claimed = BTreeSet::new();
    let mut statements = Vec::with_capacity(raw.len());
    for s in raw {
        let node_id = match suffix_of(&s) {
            Some(id) if claimed.insert(id) => id,
            _ => {
                next_fresh = next_fresh.checked_add(1).ok_or_else(|| CodecError::Syntax {
                    line: s.line,
                    col: 1,
                    message: "node id space exhausted".into(),
                })?;
                let id = NodeId::new(next_fresh).expect("fresh ids are positive");
                claimed.insert(id);
                id
            }
        };
        statements.push(Statement {
            targets: s.targets,
            class_name: s.class_name,
            args: s.args,
            node_id,
            line: s.line,
        });
    }
    Ok(CodeScript { statements })
}

impl Parser {
    fn peek(&self) -> &Token {
        &self.tokens[self.pos]
    }

    fn next(&mut self) -> Token {
        let t = self.tokens[self.pos].clone();
        if t.tok != Tok::Eof {
            self.pos += 1;
        }
        t
    }

    fn skip_newlines(&mut self) {
        while self.peek().tok == Tok::Newline {
            self.pos += 1;
        }
    }

    fn syntax(token: &Token, message: impl Into<String>) -> CodecError {
        CodecError::Syntax {
            line: token.line,
            col: token.col,
            message: message.into(),
        }
    }

    fn unexpected(token: &Token, wanted: &str) -> CodecError {
        Self::syntax(token, format!("expected {wanted}, found {}", token.tok.describe()))
    }

    fn target(&mut self) -> Result<String, CodecError> {
        let token = self.next();
        match &token.tok {
            Tok::Ident(name) if name == DISCARD || is_var_name(name) => Ok(name.clone()),
            Tok::Ident(name) => Err(Self::syntax(
                &token,
                format!("{name:?} is not a valid variable name (use lower-case letters, digits and _)"),
            )),
            _ => Err(Self::unexpected(&token, "a variable name")),
        }
    }

    fn statement(&mut self) -> Result<RawStatement, CodecError> {
        let line = self.peek().line;
        let mut targets = vec![self.target()?];
        while self.peek().tok == Tok::Comma {
            self.next();
            targets.push(self.target()?);
        }
        let eq = self.next();
        if eq.tok != Tok::Eq {
            return Err(Self::unexpected(&eq, "\"=\""));
        }
        let class_tok = self.next();
        let class_name = match &class_tok.tok {
            Tok::Ident(name) if is_class_ident(name) => name.clone(),
            _ => return Err(Self::unexpected(&class_tok, "a node class name")),
        };
        let open = self.next();
        if open.tok != Tok::LParen {
            return Err(Self::unexpected(&open, "\"(\" after the class name"));
        }
        let args = self.arguments(line)?;
        let end = self.next();
        if !matches!(end.tok, Tok::Newline | Tok::Eof) {
            return Err(Self::syntax(&end, "only one statement per line is allowed"));
        }

        let mut seen = HashSet::new();
        for name in targets.iter().filter(|t| *t != DISCARD) {
            if !seen.insert(name.clone()) || self.bound.contains(name) {
                return Err(CodecError::DuplicateBinding {
                    line,
                    name: name.clone(),
                });
            }
        }
        self.bound.extend(seen);
        Ok(RawStatement {
            targets,
            class_name,
            args,
            line,
        })
    }

    /// Keyword arguments up to and including the closing parenthesis.
    /// Newlines inside the parentheses are ignored.
    fn arguments(&mut self, line: usize) -> Result<IndexMap<String, Arg>, CodecError> {
        let mut args = IndexMap::new();
        self.skip_newlines();
        if self.peek().tok == Tok::RParen {
            self.next();
            return Ok(args);
        }
        loop {
            self.skip_newlines();
            let token = self.next();
            let key = match (&token.tok, self.peek().tok.clone()) {
                (Tok::Ident(key), Tok::Eq) => key.clone(),
                (Tok::Ident(_), Tok::LParen) => {
                    return Err(CodecError::NestedCall {
                        line: token.line,
                        col: token.col,
                    })
                }
                (Tok::Ident(_) | Tok::Int(_) | Tok::Float(_) | Tok::Str(_), _) => {
                    return Err(CodecError::PositionalArgument {
                        line: token.line,
                        col: token.col,
                    })
                }
                _ => return Err(Self::unexpected(&token, "a keyword argument")),
            };
            self.next();
            self.skip_newlines();
            let value = self.value()?;
            if args.contains_key(&key) {
                return Err(CodecError::DuplicateArgument { line, name: key });
            }
            args.insert(key, value);

            self.skip_newlines();
            let sep = self.next();
            match sep.tok {
                Tok::RParen => return Ok(args),
                Tok::Comma => {
                    self.skip_newlines();
                    if self.peek().tok == Tok::RParen {
                        self.next();
                        return Ok(args);
                    }
                }
                _ => return Err(Self::unexpected(&sep, "\",\" or \")\"")),
            }
        }
    }

    fn value(&mut self) -> Result<Arg, CodecError> {
        let token = self.next();
        match &token.tok {
            Tok::Int(i) => Ok(Arg::Literal(Literal::Int(*i))),
            Tok::Float(f) => Ok(Arg::Literal(Literal::Float(*f))),
            Tok::Str(s) => Ok(Arg::Literal(Literal::Text(s.clone()))),
            Tok::Ident(_) if self.peek().tok == Tok::LParen => Err(CodecError::NestedCall {
                line: token.line,
                col: token.col,
            }),
            Tok::Ident(name) if name == "True" => Ok(Arg::Literal(Literal::Bool(true))),
            Tok::Ident(name) if name == "False" => Ok(Arg::Literal(Literal::Bool(false))),
            Tok::Ident(name) => {
                if !self.bound.contains(name) {
                    return Err(CodecError::UnboundVariable {
                        line: token.line,
                        name: name.clone(),
                    });
                }
                Ok(Arg::Var(name.clone()))
            }
            _ => Err(Self::unexpected(&token, "a literal or a variable")),
        }
    }
}
