//! Reader for the parenthesized semantic input notation:
//!
//! ```text
//! (e / chase :actor (c / cat :number plural) :actee (m / mouse) :tense present)
//! (e / see :actor (c / cat) :actee #c)
//! ```
//!
//! `#id` refers to an entity introduced anywhere in the same input. A `;`
//! starts a comment running to the end of the line.

use alloc::borrow::ToOwned;
use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;

use crate::semantics::{Entity, SemanticGraph, Value};

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum SplError {
    Syntax { line: usize, column: usize, message: String },
    UnresolvedRef { id: String },
    DuplicateId { id: String },
}

impl SplError {
    pub fn code(&self) -> &'static str {
        match self {
            SplError::Syntax { .. } => "SYNTAX-ERROR",
            SplError::UnresolvedRef { .. } => "UNRESOLVED-REF",
            SplError::DuplicateId { .. } => "DUPLICATE-ID",
        }
    }
}

impl fmt::Display for SplError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SplError::Syntax { line, column, message } => {
                write!(f, "{} at {line}:{column}: {message}", self.code())
            }
            SplError::UnresolvedRef { id } => write!(f, "{}: `#{id}` names no entity", self.code()),
            SplError::DuplicateId { id } => write!(f, "{}: entity `{id}` is defined twice", self.code()),
        }
    }
}

impl core::error::Error for SplError {}

struct Reader<'a> {
    chars: core::iter::Peekable<core::str::Chars<'a>>,
    line: usize,
    column: usize,
}

impl Reader<'_> {
    fn err<T>(&self, message: impl Into<String>) -> Result<T, SplError> {
        Err(SplError::Syntax { line: self.line, column: self.column, message: message.into() })
    }

    fn bump(&mut self) -> Option<char> {
        let c = self.chars.next()?;
        if c == '\n' {
            self.line += 1;
            self.column = 1;
        } else {
            self.column += 1;
        }
        Some(c)
    }

    fn skip_ws(&mut self) {
        while let Some(&c) = self.chars.peek() {
            if c == ';' {
                while let Some(c) = self.bump() {
                    if c == '\n' {
                        break;
                    }
                }
            } else if c.is_whitespace() {
                self.bump();
            } else {
                break;
            }
        }
    }

    fn peek(&mut self) -> Option<char> {
        self.skip_ws();
        self.chars.peek().copied()
    }

    fn expect(&mut self, want: char) -> Result<(), SplError> {
        match self.peek() {
            Some(c) if c == want => {
                self.bump();
                Ok(())
            }
            Some(c) => self.err(alloc::format!("expected `{want}`, found `{c}`")),
            None => self.err(alloc::format!("expected `{want}`, found end of input")),
        }
    }

    fn symbol(&mut self, what: &str) -> Result<String, SplError> {
        self.skip_ws();
        let mut out = String::new();
        while let Some(&c) = self.chars.peek() {
            if c.is_alphanumeric() || "-_.+*'?!".contains(c) {
                out.push(c);
                self.bump();
            } else {
                break;
            }
        }
        if out.is_empty() {
            return match self.chars.peek().copied() {
                Some(c) => self.err(alloc::format!("expected {what}, found `{c}`")),
                None => self.err(alloc::format!("expected {what}, found end of input")),
            };
        }
        Ok(out)
    }

    fn quoted(&mut self) -> Result<String, SplError> {
        self.bump();
        let mut out = String::new();
        loop {
            match self.bump() {
                Some('"') => return Ok(out),
                Some('\\') => match self.bump() {
                    Some(c) => out.push(c),
                    None => return self.err("unterminated string"),
                },
                Some(c) => out.push(c),
                None => return self.err("unterminated string"),
            }
        }
    }

    fn term(&mut self, out: &mut Vec<Entity>) -> Result<String, SplError> {
        self.expect('(')?;
        let id = self.symbol("an entity id")?;
        self.expect('/')?;
        let kind = self.symbol("a type")?;
        let slot = out.len();
        out.push(Entity { id: id.clone(), kind, attributes: Vec::new() });
        loop {
            match self.peek() {
                Some(')') => {
                    self.bump();
                    return Ok(id);
                }
                Some(':') => {
                    self.bump();
                    let role = self.symbol("a role name")?;
                    let value = match self.peek() {
                        Some('(') => Value::Ref(self.term(out)?),
                        Some('#') => {
                            self.bump();
                            Value::Ref(self.symbol("an entity id")?)
                        }
                        Some('"') => Value::Atom(self.quoted()?),
                        _ => Value::Atom(self.symbol("a value")?),
                    };
                    if out[slot].attributes.iter().any(|(r, _)| *r == role) {
                        return self.err(alloc::format!("role `:{role}` given twice for `{id}`"));
                    }
                    out[slot].attributes.push((role, value));
                }
                Some(c) => return self.err(alloc::format!("expected `:role` or `)`, found `{c}`")),
                None => return self.err("unbalanced parentheses: input ends inside a term"),
            }
        }
    }
}

pub fn parse_spl(text: &str) -> Result<SemanticGraph, SplError> {
    let mut r = Reader { chars: text.chars().peekable(), line: 1, column: 1 };
    let mut entities = Vec::new();
    let root = r.term(&mut entities)?;
    if let Some(c) = r.peek() {
        return r.err(alloc::format!("unexpected `{c}` after the closing parenthesis"));
    }
    let mut map = BTreeMap::new();
    for e in entities {
        if map.contains_key(&e.id) {
            return Err(SplError::DuplicateId { id: e.id });
        }
        map.insert(e.id.clone(), e);
    }
    for e in map.values() {
        for (_, v) in &e.attributes {
            if let Value::Ref(id) = v {
                if !map.contains_key(id) {
                    return Err(SplError::UnresolvedRef { id: id.to_owned() });
                }
            }
        }
    }
    Ok(SemanticGraph { root, entities: map })
}
