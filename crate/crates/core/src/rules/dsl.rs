//! Line-oriented rule language.
//!
//! ```text
//! # STOPP D6
//! rule D6 {
//!   present drug antipsychotic
//!   any_of clinical parkinsonism, lewy_body
//!   action stop antipsychotic
//! }
//! ```
//!
//! Grammar:
//!
//! ```text
//! rulebase := rule* ;
//! rule     := "rule" ID "{" clause* "action" action "}" ;
//! clause   := ("present" | "absent") kindlist | "any_of" kindlist ;
//! kindlist := (("clinical" | "drug" | "lab") idlist)+ ;
//! idlist   := ID ("," ID)* ;
//! action   := ("start" | "stop") ID | "custom" STRING ;
//! ```
//!
//! Keywords are contextual, `;` is accepted as an optional clause
//! terminator and `#` starts a comment running to the end of the line.

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::sync::Arc;

use thiserror::Error;

use super::{Action, ClinicalRule, RuleBase, RuleBody, RuleError, Union, Verb};
use crate::catalog::{Catalog, CondIdx, ConditionKind};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum DslError {
    #[error("{line}:{column}: syntax error: {message}")]
    Syntax {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("{line}:{column}: unknown condition `{id}`")]
    UnknownCondition { line: usize, column: usize, id: String },
    #[error("{line}:{column}: `{id}` is {actual}, but was listed as {expected}")]
    KindMismatch {
        line: usize,
        column: usize,
        id: String,
        expected: ConditionKind,
        actual: ConditionKind,
    },
    #[error("{line}:{column}: `{id}` appears more than once in rule `{rule}`")]
    DuplicateInRule {
        line: usize,
        column: usize,
        id: String,
        rule: String,
    },
    #[error(transparent)]
    Rule(#[from] RuleError),
}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Ident(String),
    Str(String),
    LBrace,
    RBrace,
    Comma,
    Semi,
    Eof,
}

#[derive(Debug, Clone)]
struct Token {
    tok: Tok,
    line: usize,
    column: usize,
}

fn is_ident_start(c: char) -> bool {
    c.is_alphanumeric() || c == '_'
}

fn is_ident_char(c: char) -> bool {
    c.is_alphanumeric() || matches!(c, '_' | '-' | '.' | ':' | '/')
}

fn lex(text: &str) -> Result<Vec<Token>, DslError> {
    let mut out = Vec::new();
    let mut chars = text.chars().peekable();
    let (mut line, mut column) = (1usize, 1usize);
    macro_rules! bump {
        () => {{
            let c = chars.next();
            if c == Some('\n') {
                line += 1;
                column = 1;
            } else if c.is_some() {
                column += 1;
            }
            c
        }};
    }
    while let Some(&c) = chars.peek() {
        let (l, col) = (line, column);
        match c {
            _ if c.is_whitespace() => {
                bump!();
            }
            '#' => {
                while let Some(&c) = chars.peek() {
                    if c == '\n' {
                        break;
                    }
                    bump!();
                }
            }
            '{' | '}' | ',' | ';' => {
                bump!();
                let tok = match c {
                    '{' => Tok::LBrace,
                    '}' => Tok::RBrace,
                    ',' => Tok::Comma,
                    _ => Tok::Semi,
                };
                out.push(Token { tok, line: l, column: col });
            }
            '"' => {
                bump!();
                let mut s = String::new();
                loop {
                    match bump!() {
                        None | Some('\n') => {
                            return Err(DslError::Syntax {
                                line: l,
                                column: col,
                                message: "unterminated string".into(),
                            })
                        }
                        Some('"') => break,
                        Some('\\') => match bump!() {
                            Some('n') => s.push('\n'),
                            Some(e @ ('"' | '\\')) => s.push(e),
                            other => {
                                return Err(DslError::Syntax {
                                    line,
                                    column,
                                    message: format!("invalid escape {other:?}"),
                                })
                            }
                        },
                        Some(c) => s.push(c),
                    }
                }
                out.push(Token {
                    tok: Tok::Str(s),
                    line: l,
                    column: col,
                });
            }
            _ if is_ident_start(c) => {
                let mut s = String::new();
                while let Some(&c) = chars.peek() {
                    if !is_ident_char(c) {
                        break;
                    }
                    s.push(c);
                    bump!();
                }
                out.push(Token {
                    tok: Tok::Ident(s),
                    line: l,
                    column: col,
                });
            }
            other => {
                return Err(DslError::Syntax {
                    line: l,
                    column: col,
                    message: format!("unexpected character `{other}`"),
                })
            }
        }
    }
    out.push(Token {
        tok: Tok::Eof,
        line,
        column,
    });
    Ok(out)
}

struct Parser<'a> {
    tokens: Vec<Token>,
    pos: usize,
    catalog: &'a Catalog,
}

#[derive(Clone, Copy)]
enum Slot {
    Present,
    Absent,
    AnyOf,
}

impl<'a> Parser<'a> {
    fn peek(&self) -> &Token {
        &self.tokens[self.pos]
    }

    fn next(&mut self) -> Token {
        let t = self.tokens[self.pos].clone();
        if self.pos + 1 < self.tokens.len() {
            self.pos += 1;
        }
        t
    }

    fn syntax<T>(&self, tok: &Token, message: impl Into<String>) -> Result<T, DslError> {
        Err(DslError::Syntax {
            line: tok.line,
            column: tok.column,
            message: message.into(),
        })
    }

    fn expect_keyword(&mut self, kw: &str) -> Result<Token, DslError> {
        let t = self.next();
        match &t.tok {
            Tok::Ident(s) if s == kw => Ok(t),
            _ => self.syntax(&t, format!("expected `{kw}`, found {}", describe(&t.tok))),
        }
    }

    fn expect(&mut self, want: Tok, what: &str) -> Result<Token, DslError> {
        let t = self.next();
        if t.tok == want {
            Ok(t)
        } else {
            self.syntax(&t, format!("expected {what}, found {}", describe(&t.tok)))
        }
    }

    fn ident(&mut self) -> Result<(String, Token), DslError> {
        let t = self.next();
        match &t.tok {
            Tok::Ident(s) => Ok((s.clone(), t.clone())),
            _ => self.syntax(&t, format!("expected identifier, found {}", describe(&t.tok))),
        }
    }

    fn skip_semis(&mut self) {
        while self.peek().tok == Tok::Semi {
            self.next();
        }
    }

    fn parse(mut self) -> Result<Vec<ClinicalRule>, DslError> {
        let mut rules = Vec::new();
        let mut ids = BTreeSet::new();
        loop {
            self.skip_semis();
            if self.peek().tok == Tok::Eof {
                break;
            }
            self.expect_keyword("rule")?;
            let (id, id_tok) = self.ident()?;
            if !ids.insert(id.clone()) {
                return self.syntax(&id_tok, format!("duplicate rule id `{id}`"));
            }
            rules.push(self.rule_body(id)?);
        }
        Ok(rules)
    }

    fn rule_body(&mut self, id: String) -> Result<ClinicalRule, DslError> {
        self.expect(Tok::LBrace, "`{`")?;
        let mut body = RuleBody::default();
        let mut seen: BTreeSet<CondIdx> = BTreeSet::new();
        let action = loop {
            self.skip_semis();
            let t = self.next();
            let slot = match &t.tok {
                Tok::Ident(s) if s == "present" => Slot::Present,
                Tok::Ident(s) if s == "absent" => Slot::Absent,
                Tok::Ident(s) if s == "any_of" => Slot::AnyOf,
                Tok::Ident(s) if s == "action" => break self.action(&t)?,
                _ => {
                    return self.syntax(
                        &t,
                        format!(
                            "expected `present`, `absent`, `any_of` or `action`, found {}",
                            describe(&t.tok)
                        ),
                    )
                }
            };
            let members = self.kindlist()?;
            let mut union = Union::default();
            for (idx, tok) in members {
                if !seen.insert(idx) {
                    return Err(DslError::DuplicateInRule {
                        line: tok.line,
                        column: tok.column,
                        id: self.catalog.id_of(idx).to_string(),
                        rule: id.clone(),
                    });
                }
                let clinical = self.catalog.get(idx).is_clinical();
                let set = match (slot, clinical) {
                    (Slot::Present, true) => &mut body.c_present,
                    (Slot::Present, false) => &mut body.d_present,
                    (Slot::Absent, true) => &mut body.c_absent,
                    (Slot::Absent, false) => &mut body.d_absent,
                    (Slot::AnyOf, true) => &mut union.clinical,
                    (Slot::AnyOf, false) => &mut union.non_clinical,
                };
                set.insert(idx);
            }
            if matches!(slot, Slot::AnyOf) {
                body.unions.push(union);
            }
        };
        self.skip_semis();
        self.expect(Tok::RBrace, "`}`")?;
        Ok(ClinicalRule { id, body, action })
    }

    fn kindlist(&mut self) -> Result<Vec<(CondIdx, Token)>, DslError> {
        let mut out = Vec::new();
        loop {
            let kind = match &self.peek().tok {
                Tok::Ident(s) if s == "clinical" => ConditionKind::Clinical,
                Tok::Ident(s) if s == "drug" => ConditionKind::Drug,
                Tok::Ident(s) if s == "lab" => ConditionKind::Lab,
                _ if !out.is_empty() => return Ok(out),
                _ => {
                    let t = self.peek().clone();
                    return self.syntax(
                        &t,
                        format!(
                            "expected `clinical`, `drug` or `lab`, found {}",
                            describe(&t.tok)
                        ),
                    );
                }
            };
            self.next();
            loop {
                let (name, tok) = self.ident()?;
                let idx = self.resolve(&name, &tok, kind)?;
                out.push((idx, tok));
                if self.peek().tok == Tok::Comma {
                    self.next();
                } else {
                    break;
                }
            }
        }
    }

    fn resolve(&self, name: &str, tok: &Token, expected: ConditionKind) -> Result<CondIdx, DslError> {
        let idx = self
            .catalog
            .lookup(name)
            .ok_or_else(|| DslError::UnknownCondition {
                line: tok.line,
                column: tok.column,
                id: name.to_string(),
            })?;
        let actual = self.catalog.get(idx).kind;
        if actual != expected {
            return Err(DslError::KindMismatch {
                line: tok.line,
                column: tok.column,
                id: name.to_string(),
                expected,
                actual,
            });
        }
        Ok(idx)
    }

    fn action(&mut self, at: &Token) -> Result<Action, DslError> {
        let t = self.next();
        match &t.tok {
            Tok::Ident(s) if s == "start" || s == "stop" => {
                let (name, tok) = self.ident()?;
                let idx = self.resolve(&name, &tok, ConditionKind::Drug)?;
                Ok(if s == "start" {
                    Action::start(idx, self.catalog)
                } else {
                    Action::stop(idx, self.catalog)
                })
            }
            Tok::Ident(s) if s == "custom" => {
                let t = self.next();
                match &t.tok {
                    Tok::Str(text) => Ok(Action::custom(text.clone())),
                    other => self.syntax(&t, format!("expected string, found {}", describe(other))),
                }
            }
            _ => self.syntax(
                at,
                format!("expected `start`, `stop` or `custom`, found {}", describe(&t.tok)),
            ),
        }
    }
}

fn describe(tok: &Tok) -> String {
    match tok {
        Tok::Ident(s) => format!("`{s}`"),
        Tok::Str(s) => format!("string {s:?}"),
        Tok::LBrace => "`{`".into(),
        Tok::RBrace => "`}`".into(),
        Tok::Comma => "`,`".into(),
        Tok::Semi => "`;`".into(),
        Tok::Eof => "end of input".into(),
    }
}

pub fn parse_rulebase(text: &str, catalog: Arc<Catalog>) -> Result<RuleBase, DslError> {
    let parser = Parser {
        tokens: lex(text)?,
        pos: 0,
        catalog: &catalog,
    };
    let rules = parser.parse()?;
    Ok(RuleBase::new(catalog, rules)?)
}

fn write_kindlist(out: &mut String, catalog: &Catalog, clinical: &BTreeSet<CondIdx>, other: &BTreeSet<CondIdx>) {
    let mut groups: Vec<(ConditionKind, Vec<&str>)> = Vec::new();
    if !clinical.is_empty() {
        groups.push((
            ConditionKind::Clinical,
            clinical.iter().map(|i| catalog.id_of(*i)).collect(),
        ));
    }
    for kind in [ConditionKind::Drug, ConditionKind::Lab] {
        let ids: Vec<&str> = other
            .iter()
            .filter(|i| catalog.get(**i).kind == kind)
            .map(|i| catalog.id_of(*i))
            .collect();
        if !ids.is_empty() {
            groups.push((kind, ids));
        }
    }
    for (kind, ids) in groups {
        let _ = write!(out, " {} {}", kind, ids.join(", "));
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

/// Canonical text form; `parse_rulebase(print_rulebase(rb))` reproduces `rb`.
pub fn print_rulebase(rb: &RuleBase) -> String {
    let catalog = rb.catalog();
    let mut out = String::new();
    for (i, rule) in rb.rules().iter().enumerate() {
        if i > 0 {
            out.push('\n');
        }
        let b = &rule.body;
        let _ = writeln!(out, "rule {} {{", rule.id);
        if !b.c_present.is_empty() || !b.d_present.is_empty() {
            out.push_str("  present");
            write_kindlist(&mut out, catalog, &b.c_present, &b.d_present);
            out.push('\n');
        }
        if !b.c_absent.is_empty() || !b.d_absent.is_empty() {
            out.push_str("  absent");
            write_kindlist(&mut out, catalog, &b.c_absent, &b.d_absent);
            out.push('\n');
        }
        for u in &b.unions {
            out.push_str("  any_of");
            write_kindlist(&mut out, catalog, &u.clinical, &u.non_clinical);
            out.push('\n');
        }
        let action = &rule.action;
        match (action.verb, action.target) {
            (Verb::Start, Some(t)) => {
                let _ = writeln!(out, "  action start {}", catalog.id_of(t));
            }
            (Verb::Stop, Some(t)) => {
                let _ = writeln!(out, "  action stop {}", catalog.id_of(t));
            }
            _ => {
                let _ = writeln!(out, "  action custom {}", quote(&action.text));
            }
        }
        out.push_str("}\n");
    }
    out
}
