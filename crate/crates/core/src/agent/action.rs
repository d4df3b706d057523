use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::codec::lexer::{Lexer, Tok, Token};

use super::AgentMemory;

/// One planner decision.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Action {
    Load { name: String },
    Combine { name: String },
    Adapt { prompt: String },
    Retrieve { prompt: String },
    Finish,
}

impl Action {
    pub fn verb(&self) -> &'static str {
        match self {
            Action::Load { .. } => "load",
            Action::Combine { .. } => "combine",
            Action::Adapt { .. } => "adapt",
            Action::Retrieve { .. } => "retrieve",
            Action::Finish => "finish",
        }
    }
}

fn quote(s: &str) -> String {
    let mut out = String::with_capacity(s.len() + 2);
    out.push('"');
    for c in s.chars() {
        match c {
            '"' => out.push_str("\\\""),
            '\\' => out.push_str("\\\\"),
            '\n' => out.push_str("\\n"),
            c => out.push(c),
        }
    }
    out.push('"');
    out
}

impl fmt::Display for Action {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Action::Load { name } | Action::Combine { name } => write!(f, "{}(name={})", self.verb(), quote(name)),
            Action::Adapt { prompt } | Action::Retrieve { prompt } => {
                write!(f, "{}(prompt={})", self.verb(), quote(prompt))
            }
            Action::Finish => f.write_str("finish()"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ActionError {
    #[error("action syntax error at column {col}: {message}")]
    Syntax { col: usize, message: String },
    #[error("unknown action {0:?}; use load, combine, adapt, retrieve or finish")]
    UnknownAction(String),
    #[error("{action} needs the argument `{expected}`")]
    MissingArgument { action: String, expected: &'static str },
    #[error("{action} takes `{expected}`, not `{found}`")]
    WrongArgument {
        action: String,
        expected: &'static str,
        found: String,
    },
    #[error("finish takes no argument")]
    UnexpectedArgument,
    #[error("the argument of {0} must not be empty")]
    EmptyArgument(String),
}

struct Cursor {
    lexer: Lexer,
}

impl Cursor {
    fn next(&mut self) -> Result<Token, ActionError> {
        self.lexer.next_token().map_err(|e| ActionError::Syntax {
            col: e.col,
            message: e.message,
        })
    }

    fn expect(&mut self, want: Tok, what: &str) -> Result<(), ActionError> {
        let t = self.next()?;
        if t.tok == want {
            Ok(())
        } else {
            Err(ActionError::Syntax {
                col: t.col,
                message: format!("expected {what}, found {}", t.tok.describe()),
            })
        }
    }
}

/// Parse `verb()` or `verb(key="value")`. Surrounding whitespace and
/// newlines are ignored.
pub fn parse_action(text: &str) -> Result<Action, ActionError> {
    let mut cur = Cursor {
        lexer: Lexer::new(text.trim()),
    };
    let head = cur.next()?;
    let verb = match head.tok {
        Tok::Ident(s) => s,
        other => {
            return Err(ActionError::Syntax {
                col: head.col,
                message: format!("expected an action name, found {}", other.describe()),
            })
        }
    };
    cur.expect(Tok::LParen, "\"(\"")?;
    let t = cur.next()?;
    let arg = match t.tok {
        Tok::RParen => None,
        Tok::Ident(key) => {
            cur.expect(Tok::Eq, "\"=\"")?;
            let v = cur.next()?;
            let Tok::Str(value) = v.tok else {
                return Err(ActionError::Syntax {
                    col: v.col,
                    message: format!("expected a string, found {}", v.tok.describe()),
                });
            };
            cur.expect(Tok::RParen, "\")\"")?;
            Some((key, value))
        }
        other => {
            return Err(ActionError::Syntax {
                col: t.col,
                message: format!("expected an argument or \")\", found {}", other.describe()),
            })
        }
    };
    let end = cur.next()?;
    if end.tok != Tok::Eof {
        return Err(ActionError::Syntax {
            col: end.col,
            message: format!("unexpected {} after the action", end.tok.describe()),
        });
    }

    let expected = match verb.as_str() {
        "load" | "combine" => "name",
        "adapt" | "retrieve" => "prompt",
        "finish" => {
            return match arg {
                None => Ok(Action::Finish),
                Some(_) => Err(ActionError::UnexpectedArgument),
            }
        }
        _ => return Err(ActionError::UnknownAction(verb)),
    };
    let Some((key, value)) = arg else {
        return Err(ActionError::MissingArgument { action: verb, expected });
    };
    if key != expected {
        return Err(ActionError::WrongArgument {
            action: verb,
            expected,
            found: key,
        });
    }
    let value = value.trim().to_string();
    if value.is_empty() {
        return Err(ActionError::EmptyArgument(verb));
    }
    Ok(match verb.as_str() {
        "load" => Action::Load { name: value },
        "combine" => Action::Combine { name: value },
        "adapt" => Action::Adapt { prompt: value },
        _ => Action::Retrieve { prompt: value },
    })
}

#[derive(Debug, Clone, PartialEq, Eq, Error, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "kebab-case")]
pub enum RuleViolation {
    #[error("the first action must load a reference workflow")]
    MustLoadFirst,
    #[error("load is only allowed while nothing has been done yet; use combine or adapt instead")]
    LoadAfterStart,
    #[error("{name:?} is not in the reference; retrieve it first")]
    UnknownReference { name: String },
    #[error("adapt cannot follow adapt; merge both changes into one adapt action")]
    AdaptTwice,
}

/// Check `action` against the planner rules. Finish is exempt from the
/// load-first rule; finishing without a workflow is handled by the loop.
pub fn enforce_rules(memory: &AgentMemory, action: &Action) -> Result<(), RuleViolation> {
    let last = memory.last_accepted();
    match (last, action) {
        (_, Action::Finish) => {}
        (None, Action::Load { .. }) => {}
        (None, _) => return Err(RuleViolation::MustLoadFirst),
        (Some(_), Action::Load { .. }) => return Err(RuleViolation::LoadAfterStart),
        (Some(Action::Adapt { .. }), Action::Adapt { .. }) => return Err(RuleViolation::AdaptTwice),
        _ => {}
    }
    if let Action::Load { name } | Action::Combine { name } = action {
        if !memory.reference.iter().any(|r| &r.name == name) {
            return Err(RuleViolation::UnknownReference { name: name.clone() });
        }
    }
    Ok(())
}
