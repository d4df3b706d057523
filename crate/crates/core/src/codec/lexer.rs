use std::fmt::Write as _;

use crate::graph::Literal;

#[derive(Debug, Clone, PartialEq)]
pub(crate) enum Tok {
    Ident(String),
    Int(i64),
    Float(f64),
    Str(String),
    LParen,
    RParen,
    Comma,
    Eq,
    Newline,
    Other(char),
    Eof,
}

impl Tok {
    pub(crate) fn describe(&self) -> String {
        match self {
            Tok::Ident(s) => format!("identifier {s:?}"),
            Tok::Int(i) => format!("integer {i}"),
            Tok::Float(f) => format!("float {f}"),
            Tok::Str(_) => "string literal".into(),
            Tok::LParen => "\"(\"".into(),
            Tok::RParen => "\")\"".into(),
            Tok::Comma => "\",\"".into(),
            Tok::Eq => "\"=\"".into(),
            Tok::Newline => "end of line".into(),
            Tok::Other(c) => format!("{c:?}"),
            Tok::Eof => "end of input".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub(crate) struct Token {
    pub tok: Tok,
    pub line: usize,
    pub col: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub(crate) struct LexError {
    pub line: usize,
    pub col: usize,
    pub message: String,
}

pub(crate) struct Lexer {
    chars: Vec<char>,
    pos: usize,
    line: usize,
    col: usize,
}

impl Lexer {
    pub(crate) fn new(src: &str) -> Self {
        Lexer {
            chars: src.chars().collect(),
            pos: 0,
            line: 1,
            col: 1,
        }
    }

    fn peek_at(&self, k: usize) -> Option<char> {
        self.chars.get(self.pos + k).copied()
    }

    fn bump(&mut self) -> Option<char> {
        let c = self.chars.get(self.pos).copied()?;
        self.pos += 1;
        if c == '\n' {
            self.line += 1;
            self.col = 1;
        } else {
            self.col += 1;
        }
        Some(c)
    }

    fn err(&self, line: usize, col: usize, message: impl Into<String>) -> LexError {
        LexError {
            line,
            col,
            message: message.into(),
        }
    }

    pub(crate) fn next_token(&mut self) -> Result<Token, LexError> {
        while matches!(self.peek_at(0), Some(' ' | '\t' | '\r')) {
            self.bump();
        }
        let (line, col) = (self.line, self.col);
        let Some(c) = self.peek_at(0) else {
            return Ok(Token {
                tok: Tok::Eof,
                line,
                col,
            });
        };
        let tok = match c {
            '\n' => {
                self.bump();
                Tok::Newline
            }
            '(' => {
                self.bump();
                Tok::LParen
            }
            ')' => {
                self.bump();
                Tok::RParen
            }
            ',' => {
                self.bump();
                Tok::Comma
            }
            '=' => {
                self.bump();
                Tok::Eq
            }
            '"' | '\'' => Tok::Str(self.string(c, line, col)?),
            c if c.is_ascii_alphabetic() || c == '_' => {
                let mut s = String::new();
                while let Some(c) = self.peek_at(0).filter(|c| c.is_ascii_alphanumeric() || *c == '_') {
                    s.push(c);
                    self.bump();
                }
                Tok::Ident(s)
            }
            c if c.is_ascii_digit()
                || (c == '.' && self.peek_at(1).is_some_and(|d| d.is_ascii_digit()))
                || ((c == '-' || c == '+')
                    && self
                        .peek_at(1)
                        .is_some_and(|d| d.is_ascii_digit() || d == '.')) =>
            {
                self.number(line, col)?
            }
            other => {
                self.bump();
                Tok::Other(other)
            }
        };
        Ok(Token { tok, line, col })
    }

    fn number(&mut self, line: usize, col: usize) -> Result<Tok, LexError> {
        let mut text = String::new();
        if let Some(sign @ ('-' | '+')) = self.peek_at(0) {
            text.push(sign);
            self.bump();
        }
        let mut is_float = false;
        let digits = |lx: &mut Self, text: &mut String| {
            let mut n = 0;
            while let Some(d) = lx.peek_at(0).filter(char::is_ascii_digit) {
                text.push(d);
                lx.bump();
                n += 1;
            }
            n
        };
        let int_digits = digits(self, &mut text);
        let mut frac_digits = 0;
        if self.peek_at(0) == Some('.') {
            is_float = true;
            text.push('.');
            self.bump();
            frac_digits = digits(self, &mut text);
        }
        if int_digits + frac_digits == 0 {
            return Err(self.err(line, col, "malformed number"));
        }
        if matches!(self.peek_at(0), Some('e' | 'E')) {
            let sign = matches!(self.peek_at(1), Some('+' | '-'));
            let after = self.peek_at(if sign { 2 } else { 1 });
            if after.is_some_and(|d| d.is_ascii_digit()) {
                is_float = true;
                text.push('e');
                self.bump();
                if sign {
                    text.push(self.bump().expect("sign present"));
                }
                digits(self, &mut text);
            }
        }
        if self
            .peek_at(0)
            .is_some_and(|c| c.is_ascii_alphanumeric() || c == '_' || c == '.')
        {
            return Err(self.err(self.line, self.col, "malformed number"));
        }
        if is_float {
            let value: f64 = text
                .parse()
                .map_err(|_| self.err(line, col, format!("malformed float {text:?}")))?;
            if !value.is_finite() {
                return Err(self.err(line, col, format!("float {text} is out of range")));
            }
            Ok(Tok::Float(value))
        } else {
            text.parse::<i64>()
                .map(Tok::Int)
                .map_err(|_| self.err(line, col, format!("integer {text} is out of the 64-bit range")))
        }
    }

    fn string(&mut self, quote: char, line: usize, col: usize) -> Result<String, LexError> {
        let triple = self.peek_at(1) == Some(quote) && self.peek_at(2) == Some(quote);
        let open = if triple { 3 } else { 1 };
        for _ in 0..open {
            self.bump();
        }
        let mut out = String::new();
        loop {
            let Some(c) = self.peek_at(0) else {
                return Err(self.err(line, col, "unterminated string literal"));
            };
            if c == quote {
                if !triple {
                    self.bump();
                    return Ok(out);
                }
                if self.peek_at(1) == Some(quote) && self.peek_at(2) == Some(quote) {
                    self.bump();
                    self.bump();
                    self.bump();
                    return Ok(out);
                }
                out.push(c);
                self.bump();
                continue;
            }
            if c == '\n' && !triple {
                return Err(self.err(line, col, "unterminated string literal"));
            }
            if c == '\\' {
                let (el, ec) = (self.line, self.col);
                self.bump();
                self.escape(&mut out, el, ec)?;
                continue;
            }
            out.push(c);
            self.bump();
        }
    }

    fn escape(&mut self, out: &mut String, line: usize, col: usize) -> Result<(), LexError> {
        let Some(c) = self.bump() else {
            return Err(self.err(line, col, "unterminated string literal"));
        };
        match c {
            '\n' => {}
            '\\' => out.push('\\'),
            '\'' => out.push('\''),
            '"' => out.push('"'),
            'n' => out.push('\n'),
            't' => out.push('\t'),
            'r' => out.push('\r'),
            '0' => out.push('\0'),
            'x' | 'u' | 'U' => {
                let width = match c {
                    'x' => 2,
                    'u' => 4,
                    _ => 8,
                };
                let mut hex = String::new();
                for _ in 0..width {
                    match self.peek_at(0).filter(char::is_ascii_hexdigit) {
                        Some(h) => {
                            hex.push(h);
                            self.bump();
                        }
                        None => return Err(self.err(line, col, format!("truncated \\{c} escape"))),
                    }
                }
                let ch = u32::from_str_radix(&hex, 16)
                    .ok()
                    .and_then(char::from_u32)
                    .ok_or_else(|| self.err(line, col, format!("invalid escape \\{c}{hex}")))?;
                out.push(ch);
            }
            // unknown escapes keep the backslash
            other => {
                out.push('\\');
                out.push(other);
            }
        }
        Ok(())
    }
}

/// Parse a single literal such as `42`, `2.5`, `True` or `"""text"""`.
pub fn parse_literal(text: &str) -> Result<Literal, String> {
    let mut lx = Lexer::new(text);
    let first = lx.next_token().map_err(|e| e.message)?;
    let lit = match first.tok {
        Tok::Int(i) => Literal::Int(i),
        Tok::Float(f) => Literal::Float(f),
        Tok::Str(s) => Literal::Text(s),
        Tok::Ident(ref s) if s == "True" => Literal::Bool(true),
        Tok::Ident(ref s) if s == "False" => Literal::Bool(false),
        other => return Err(format!("expected a literal, found {}", other.describe())),
    };
    match lx.next_token().map_err(|e| e.message)?.tok {
        Tok::Eof => Ok(lit),
        other => Err(format!("unexpected {} after literal", other.describe())),
    }
}

/// Canonical literal text: integers in decimal, floats always with a `.`,
/// booleans as `True`/`False`, text triple-quoted.
pub fn format_literal(lit: &Literal) -> String {
    match lit {
        Literal::Int(i) => i.to_string(),
        Literal::Float(f) => {
            let s = format!("{f}");
            if s.contains(['.', 'e', 'E']) || !f.is_finite() {
                s
            } else {
                format!("{s}.0")
            }
        }
        Literal::Bool(true) => "True".into(),
        Literal::Bool(false) => "False".into(),
        Literal::Text(s) => {
            let mut out = String::with_capacity(s.len() + 6);
            out.push_str("\"\"\"");
            for c in s.chars() {
                match c {
                    '\\' => out.push_str("\\\\"),
                    '"' => out.push_str("\\\""),
                    '\r' => out.push_str("\\r"),
                    '\n' | '\t' => out.push(c),
                    c if (c as u32) < 0x20 || c == '\u{7f}' => {
                        let _ = write!(out, "\\x{:02x}", c as u32);
                    }
                    c => out.push(c),
                }
            }
            out.push_str("\"\"\"");
            out
        }
    }
}
