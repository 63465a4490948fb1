//! S-expression text format for knowledge bases.
//!
//! ```text
//! ; comment
//! (InheritanceLink (stv 0.9 0.9) (ConceptNode "sparrow") (ConceptNode "bird"))
//! (EvaluationLink (stv 1.0 1.0) (PredicateNode "apple") (ConceptNode "apple-001"))
//! ```
//!
//! `(stv s c)` may appear anywhere among a form's arguments, at most once.
//! A bare `$name` symbol is shorthand for `(VariableNode "$name")`.
//! An `ImplicationLink` between two single-variable lambdas of the form
//! `(LambdaLink <decl> (EvaluationLink (PredicateNode p) $X))` is stored as
//! the abbreviated `(ImplicationLink (PredicateNode p) (PredicateNode q))`.

use std::fmt::Write as _;

use super::{AtomError, AtomId, AtomKind, AtomRef, AtomSpace, AtomType, Result, TruthValue};
use crate::autodiff::{Algebra, Tape};
use crate::numfmt::format_real;

#[derive(Debug, Clone, PartialEq)]
enum Sexp {
    List(Vec<Sexp>, usize),
    Str(String, usize),
    Sym(String, usize),
}

impl Sexp {
    fn line(&self) -> usize {
        match self {
            Sexp::List(_, l) | Sexp::Str(_, l) | Sexp::Sym(_, l) => *l,
        }
    }
}

fn err(line: usize, message: impl Into<String>) -> AtomError {
    AtomError::Parse {
        line,
        message: message.into(),
    }
}

struct Reader<'a> {
    chars: std::iter::Peekable<std::str::Chars<'a>>,
    line: usize,
}

impl<'a> Reader<'a> {
    fn new(text: &'a str) -> Self {
        Reader {
            chars: text.chars().peekable(),
            line: 1,
        }
    }

    fn skip_space(&mut self) {
        while let Some(&c) = self.chars.peek() {
            match c {
                '\n' => {
                    self.line += 1;
                    self.chars.next();
                }
                ';' => {
                    while let Some(&c) = self.chars.peek() {
                        if c == '\n' {
                            break;
                        }
                        self.chars.next();
                    }
                }
                c if c.is_whitespace() => {
                    self.chars.next();
                }
                _ => break,
            }
        }
    }

    fn next_form(&mut self) -> Result<Option<Sexp>> {
        self.skip_space();
        let Some(&c) = self.chars.peek() else {
            return Ok(None);
        };
        let line = self.line;
        match c {
            '(' => {
                self.chars.next();
                let mut items = Vec::new();
                loop {
                    self.skip_space();
                    match self.chars.peek() {
                        None => return Err(err(line, "unclosed `(`")),
                        Some(')') => {
                            self.chars.next();
                            return Ok(Some(Sexp::List(items, line)));
                        }
                        Some(_) => {
                            let item = self.next_form()?.expect("peeked a character");
                            items.push(item);
                        }
                    }
                }
            }
            ')' => Err(err(line, "unexpected `)`")),
            '"' => {
                self.chars.next();
                let mut s = String::new();
                loop {
                    match self.chars.next() {
                        None => return Err(err(line, "unterminated string")),
                        Some('"') => return Ok(Some(Sexp::Str(s, line))),
                        Some('\\') => match self.chars.next() {
                            Some('n') => s.push('\n'),
                            Some(c @ ('"' | '\\')) => s.push(c),
                            Some(c) => return Err(err(self.line, format!("unknown escape `\\{c}`"))),
                            None => return Err(err(line, "unterminated string")),
                        },
                        Some('\n') => {
                            self.line += 1;
                            s.push('\n');
                        }
                        Some(c) => s.push(c),
                    }
                }
            }
            _ => {
                let mut s = String::new();
                while let Some(&c) = self.chars.peek() {
                    if c.is_whitespace() || matches!(c, '(' | ')' | '"' | ';') {
                        break;
                    }
                    s.push(c);
                    self.chars.next();
                }
                Ok(Some(Sexp::Sym(s, line)))
            }
        }
    }
}

fn read_all(text: &str) -> Result<Vec<Sexp>> {
    let mut reader = Reader::new(text);
    let mut forms = Vec::new();
    while let Some(form) = reader.next_form()? {
        forms.push(form);
    }
    Ok(forms)
}

fn parse_stv(items: &[Sexp], line: usize) -> Result<(f64, f64)> {
    let num = |s: &Sexp| -> Result<f64> {
        match s {
            Sexp::Sym(t, l) => t
                .parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| err(*l, format!("expected a number, found `{t}`"))),
            other => Err(err(other.line(), "expected a number")),
        }
    };
    if items.len() != 3 {
        return Err(err(line, "stv takes exactly two numbers"));
    }
    let s = num(&items[1])?;
    let c = num(&items[2])?;
    if !(0.0..=1.0).contains(&s) {
        return Err(err(line, format!("strength {s} outside [0, 1]")));
    }
    if !(0.0..=1.0).contains(&c) {
        return Err(err(line, format!("confidence {c} outside [0, 1]")));
    }
    Ok((s, c))
}

fn is_stv(form: &Sexp) -> bool {
    matches!(form, Sexp::List(items, _) if matches!(items.first(), Some(Sexp::Sym(h, _)) if h == "stv"))
}

fn head(form: &Sexp) -> Option<&str> {
    match form {
        Sexp::List(items, _) => match items.first() {
            Some(Sexp::Sym(h, _)) => Some(h),
            _ => None,
        },
        _ => None,
    }
}

/// Arguments of a form with any `stv` removed.
fn args(form: &Sexp) -> Vec<&Sexp> {
    match form {
        Sexp::List(items, _) => items.iter().skip(1).filter(|f| !is_stv(f)).collect(),
        _ => Vec::new(),
    }
}

fn variable_name(form: &Sexp) -> Option<&str> {
    match form {
        Sexp::Sym(s, _) if s.starts_with('$') => Some(s),
        _ if head(form) == Some("VariableNode") => match args(form).as_slice() {
            [Sexp::Str(name, _)] => Some(name),
            _ => None,
        },
        _ => None,
    }
}

fn declared_variable(decl: &Sexp) -> Option<&str> {
    if let Some(v) = variable_name(decl) {
        return Some(v);
    }
    match head(decl)? {
        "TypedVariableLink" => args(decl).first().and_then(|v| variable_name(v)),
        "VariableList" => match args(decl).as_slice() {
            [single] => declared_variable(single),
            _ => None,
        },
        _ => None,
    }
}

/// `(LambdaLink <decl> (EvaluationLink (PredicateNode p) $X))` → `(PredicateNode p)`.
fn lambda_predicate(form: &Sexp) -> Option<Sexp> {
    if head(form) != Some("LambdaLink") {
        return None;
    }
    let a = args(form);
    let [decl, body] = a.as_slice() else {
        return None;
    };
    let var = declared_variable(decl)?;
    if head(body) != Some("EvaluationLink") {
        return None;
    }
    let b = args(body);
    let [pred, arg] = b.as_slice() else {
        return None;
    };
    if head(pred) != Some("PredicateNode") || variable_name(arg) != Some(var) {
        return None;
    }
    Some((*pred).clone())
}

fn normalize(form: &Sexp) -> Sexp {
    if let Sexp::List(items, line) = form {
        let items: Vec<Sexp> = items.iter().map(normalize).collect();
        if head(form) == Some("ImplicationLink") {
            let positions: Vec<usize> = (1..items.len()).filter(|&i| !is_stv(&items[i])).collect();
            if let [a, b] = positions.as_slice() {
                if let (Some(pa), Some(pb)) = (lambda_predicate(&items[*a]), lambda_predicate(&items[*b])) {
                    let mut out = items.clone();
                    out[*a] = pa;
                    out[*b] = pb;
                    return Sexp::List(out, *line);
                }
            }
        }
        return Sexp::List(items, *line);
    }
    form.clone()
}

fn build(form: &Sexp, kb: &mut AtomSpace, tape: &mut Tape) -> Result<AtomId> {
    match form {
        Sexp::Sym(s, line) if s.starts_with('$') => kb
            .intern_node(AtomType::VARIABLE_NODE, s)
            .map_err(|e| err(*line, e.to_string())),
        Sexp::Sym(s, line) => Err(err(*line, format!("unexpected symbol `{s}`"))),
        Sexp::Str(_, line) => Err(err(*line, "unexpected string outside a node form")),
        Sexp::List(items, line) => {
            let line = *line;
            let type_name = match items.first() {
                Some(Sexp::Sym(h, _)) => h.as_str(),
                _ => return Err(err(line, "form must start with an atom type")),
            };
            let ty = kb
                .type_named(type_name)
                .map_err(|_| err(line, format!("unknown atom type `{type_name}`")))?;
            let mut stv = None;
            for item in &items[1..] {
                if let Sexp::List(inner, l) = item {
                    if is_stv(item) {
                        if stv.is_some() {
                            return Err(err(*l, "more than one stv"));
                        }
                        stv = Some(parse_stv(inner, *l)?);
                    }
                }
            }
            let rest: Vec<&Sexp> = items[1..].iter().filter(|f| !is_stv(f)).collect();
            let id = match kb.registry().kind(ty) {
                AtomKind::Node => match rest.as_slice() {
                    [Sexp::Str(name, _)] => kb.intern_node(ty, name),
                    [Sexp::Sym(name, _)] if ty == AtomType::NUMBER_NODE => kb.intern_node(ty, name),
                    _ => return Err(err(line, format!("{type_name} takes exactly one quoted name"))),
                },
                AtomKind::Link => {
                    let mut out = Vec::with_capacity(rest.len());
                    for child in rest {
                        out.push(build(child, kb, tape)?);
                    }
                    kb.intern_link(ty, &out)
                }
            }
            .map_err(|e| err(line, e.to_string()))?;
            if let Some((s, c)) = stv {
                let tv = TruthValue::constant(tape, s, c).map_err(|e| err(line, e.to_string()))?;
                kb.set_tv(id, tv).map_err(|e| err(line, e.to_string()))?;
            }
            Ok(id)
        }
    }
}

/// Top-level atoms of a parsed file, in file order.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ParsedKb {
    pub roots: Vec<AtomId>,
}

/// Loads every top-level form of `text` into `kb`. Truth values given with
/// `stv` are recorded as constants on `tape`. Top-level forms without `stv`
/// are asserted with the default truth value, so chaining treats them as
/// facts.
pub fn parse_kb(text: &str, kb: &mut AtomSpace, tape: &mut Tape) -> Result<ParsedKb> {
    let mut roots = Vec::new();
    for form in read_all(text)? {
        let id = build(&normalize(&form), kb, tape)?;
        if !kb.has_explicit_tv(id)? {
            kb.set_tv(id, kb.default_tv())?;
        }
        roots.push(id);
    }
    Ok(ParsedKb { roots })
}

/// Parses exactly one form, e.g. a chaining target. Nothing is asserted.
pub fn parse_single(text: &str, kb: &mut AtomSpace, tape: &mut Tape) -> Result<AtomId> {
    let forms = read_all(text)?;
    match forms.as_slice() {
        [form] => build(&normalize(form), kb, tape),
        [] => Err(err(1, "expected one form, found none")),
        [_, second, ..] => Err(err(second.line(), "expected exactly one form")),
    }
}

fn write_atom(kb: &AtomSpace, id: AtomId, stv: Option<(f64, f64)>, out: &mut String) -> Result<()> {
    let stv_text = stv.map(|(s, c)| format!(" (stv {} {})", format_real(s), format_real(c)));
    match kb.get(id)? {
        AtomRef::Node { ty, name } => {
            let escaped = name.replace('\\', "\\\\").replace('"', "\\\"");
            write!(out, "({} \"{}\"", kb.registry().name(ty), escaped).unwrap();
            if let Some(s) = stv_text {
                out.push_str(&s);
            }
            out.push(')');
        }
        AtomRef::Link { ty, outgoing } => {
            write!(out, "({}", kb.registry().name(ty)).unwrap();
            if let Some(s) = stv_text {
                out.push_str(&s);
            }
            for &child in outgoing {
                out.push(' ');
                write_atom(kb, child, None, out)?;
            }
            out.push(')');
        }
    }
    Ok(())
}

/// Single-line rendering without truth value.
pub fn format_atom(kb: &AtomSpace, id: AtomId) -> Result<String> {
    let mut s = String::new();
    write_atom(kb, id, None, &mut s)?;
    Ok(s)
}

/// Single-line rendering with the current truth value as `stv`.
pub fn format_atom_with_tv(kb: &AtomSpace, tape: &Tape, id: AtomId) -> Result<String> {
    let tv = kb.get_tv(id)?;
    let s = tape.value(tv.strength)?;
    let mut out = String::new();
    write_atom(kb, id, Some((s, tv.confidence)), &mut out)?;
    Ok(out)
}

/// Single-line rendering with the given strength and confidence.
pub fn format_atom_with_stv(kb: &AtomSpace, id: AtomId, strength: f64, confidence: f64) -> Result<String> {
    let mut out = String::new();
    write_atom(kb, id, Some((strength, confidence)), &mut out)?;
    Ok(out)
}

/// Serializes the ground part of a KB: every atom with an explicit truth
/// value plus every ground atom that no link contains.
pub fn write_kb(kb: &AtomSpace, tape: &Tape) -> Result<String> {
    let mut out = String::new();
    for id in kb.ids() {
        if !kb.is_ground(id)? {
            continue;
        }
        if kb.has_explicit_tv(id)? {
            out.push_str(&format_atom_with_tv(kb, tape, id)?);
        } else if kb.incoming(id)?.is_empty() {
            out.push_str(&format_atom(kb, id)?);
        } else {
            continue;
        }
        out.push('\n');
    }
    Ok(out)
}
