//! Grounding of variable-bearing query graphs against an [`AtomSpace`].
//!
//! A [`Query`] is a conjunction of clause patterns. [`match_query`] returns
//! every [`Binding`] under which all clauses instantiate to atoms already in
//! the KB. Clauses are joined left to right; candidates for each clause come
//! in KB insertion order, so results are deterministic.

use std::collections::BTreeMap;

use thiserror::Error;

use crate::atom_store::{AtomError, AtomId, AtomRef, AtomSpace, AtomType};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MatchError {
    #[error("query has no clauses")]
    EmptyQuery,
    #[error("variable `{0}` is used but not declared")]
    UndeclaredVariable(String),
    #[error("variable `{0}` is not bound")]
    UnboundVariable(String),
    #[error("malformed variable declaration: {0}")]
    BadDeclaration(String),
    #[error(transparent)]
    Atom(#[from] AtomError),
}

pub type Result<T> = std::result::Result<T, MatchError>;

/// Assignment of `VariableNode` ids to ground atoms.
#[derive(Debug, Clone, Default, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Binding(BTreeMap<AtomId, AtomId>);

impl Binding {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn get(&self, var: AtomId) -> Option<AtomId> {
        self.0.get(&var).copied()
    }

    pub fn insert(&mut self, var: AtomId, value: AtomId) -> Option<AtomId> {
        self.0.insert(var, value)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (AtomId, AtomId)> + '_ {
        self.0.iter().map(|(k, v)| (*k, *v))
    }

    /// Keeps only the given variables.
    pub fn restricted_to(&self, vars: &[AtomId]) -> Binding {
        Binding(self.0.iter().filter(|(k, _)| vars.contains(k)).map(|(k, v)| (*k, *v)).collect())
    }

    /// Readable `{$X: (ConceptNode "a"), ...}` form.
    pub fn describe(&self, kb: &AtomSpace) -> String {
        let parts: Vec<String> = self
            .iter()
            .map(|(k, v)| {
                let name = kb.name(k).ok().flatten().unwrap_or("?").to_string();
                let val = crate::atom_store::format_atom(kb, v).unwrap_or_else(|_| v.to_string());
                format!("{name}: {val}")
            })
            .collect();
        format!("{{{}}}", parts.join(", "))
    }
}

impl FromIterator<(AtomId, AtomId)> for Binding {
    fn from_iter<I: IntoIterator<Item = (AtomId, AtomId)>>(iter: I) -> Self {
        Binding(iter.into_iter().collect())
    }
}

/// A variable plus an optional `TypeNode` restriction on what it may bind.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct VarDecl {
    pub var: AtomId,
    pub constraint: Option<AtomType>,
}

/// Variable declarations of a query or rule.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct VarDecls(Vec<VarDecl>);

impl VarDecls {
    pub fn new(decls: Vec<VarDecl>) -> Self {
        VarDecls(decls)
    }

    pub fn iter(&self) -> impl Iterator<Item = &VarDecl> {
        self.0.iter()
    }

    pub fn vars(&self) -> Vec<AtomId> {
        self.0.iter().map(|d| d.var).collect()
    }

    pub fn declares(&self, var: AtomId) -> bool {
        self.0.iter().any(|d| d.var == var)
    }

    pub fn constraint(&self, var: AtomId) -> Option<AtomType> {
        self.0.iter().find(|d| d.var == var).and_then(|d| d.constraint)
    }

    /// Reads `VariableNode`, `TypedVariableLink` or `VariableList` atoms.
    pub fn from_atom(kb: &AtomSpace, decl: AtomId) -> Result<Self> {
        let mut out = Vec::new();
        collect_decls(kb, decl, &mut out)?;
        Ok(VarDecls(out))
    }
}

fn collect_decls(kb: &AtomSpace, decl: AtomId, out: &mut Vec<VarDecl>) -> Result<()> {
    let bad = |what: &str| MatchError::BadDeclaration(what.to_string());
    match kb.atom_type(decl)? {
        AtomType::VARIABLE_NODE => out.push(VarDecl {
            var: decl,
            constraint: None,
        }),
        AtomType::VARIABLE_LIST => {
            for &d in kb.outgoing(decl)? {
                collect_decls(kb, d, out)?;
            }
        }
        AtomType::TYPED_VARIABLE_LINK => {
            let [var, ty] = kb.outgoing(decl)? else {
                return Err(bad("TypedVariableLink takes a variable and a TypeNode"));
            };
            if !kb.is_variable(*var) || kb.atom_type(*ty)? != AtomType::TYPE_NODE {
                return Err(bad("TypedVariableLink takes a variable and a TypeNode"));
            }
            let type_name = kb.name(*ty)?.unwrap_or_default();
            let constraint = kb.type_named(type_name)?;
            out.push(VarDecl {
                var: *var,
                constraint: Some(constraint),
            });
        }
        _ => return Err(bad("expected VariableNode, TypedVariableLink or VariableList")),
    }
    Ok(())
}

/// All distinct variables occurring in `pattern`, in first-occurrence order.
pub fn variables_of(kb: &AtomSpace, pattern: AtomId) -> Result<Vec<AtomId>> {
    fn walk(kb: &AtomSpace, id: AtomId, out: &mut Vec<AtomId>) -> Result<()> {
        if kb.is_ground(id)? {
            return Ok(());
        }
        if kb.is_variable(id) {
            if !out.contains(&id) {
                out.push(id);
            }
            return Ok(());
        }
        for &c in kb.outgoing(id)? {
            walk(kb, c, out)?;
        }
        Ok(())
    }
    let mut out = Vec::new();
    walk(kb, pattern, &mut out)?;
    Ok(out)
}

fn var_name(kb: &AtomSpace, var: AtomId) -> String {
    kb.name(var).ok().flatten().unwrap_or("?").to_string()
}

#[derive(Debug, Clone, PartialEq)]
pub struct Query {
    variables: VarDecls,
    clauses: Vec<AtomId>,
}

impl Query {
    pub fn new(kb: &AtomSpace, variables: VarDecls, clauses: Vec<AtomId>) -> Result<Self> {
        if clauses.is_empty() {
            return Err(MatchError::EmptyQuery);
        }
        for &c in &clauses {
            for v in variables_of(kb, c)? {
                if !variables.declares(v) {
                    return Err(MatchError::UndeclaredVariable(var_name(kb, v)));
                }
            }
        }
        Ok(Query { variables, clauses })
    }

    /// Declares every variable that occurs in the clauses, unconstrained.
    pub fn with_implicit_variables(kb: &AtomSpace, clauses: Vec<AtomId>) -> Result<Self> {
        let mut decls = Vec::new();
        for &c in &clauses {
            for v in variables_of(kb, c)? {
                if !decls.iter().any(|d: &VarDecl| d.var == v) {
                    decls.push(VarDecl {
                        var: v,
                        constraint: None,
                    });
                }
            }
        }
        Self::new(kb, VarDecls(decls), clauses)
    }

    /// Splits `(BindLink [decls] body implicand)` into a query and the
    /// implicand template. A top-level `AndLink` body contributes its
    /// children as clauses.
    pub fn from_bind_link(kb: &AtomSpace, bind: AtomId) -> Result<(Self, AtomId)> {
        if kb.atom_type(bind)? != AtomType::BIND_LINK {
            return Err(MatchError::BadDeclaration("expected a BindLink".into()));
        }
        let out = kb.outgoing(bind)?;
        let (decl, body, implicand) = match out {
            [body, implicand] => (None, *body, *implicand),
            [decl, body, implicand] => (Some(*decl), *body, *implicand),
            _ => {
                return Err(MatchError::BadDeclaration(
                    "BindLink takes [declarations] body implicand".into(),
                ))
            }
        };
        let clauses = if kb.atom_type(body)? == AtomType::AND_LINK {
            kb.outgoing(body)?.to_vec()
        } else {
            vec![body]
        };
        let query = match decl {
            Some(d) => Self::new(kb, VarDecls::from_atom(kb, d)?, clauses)?,
            None => Self::with_implicit_variables(kb, clauses)?,
        };
        for v in variables_of(kb, implicand)? {
            if !query.variables.declares(v) {
                return Err(MatchError::UndeclaredVariable(var_name(kb, v)));
            }
        }
        Ok((query, implicand))
    }

    pub fn variables(&self) -> &VarDecls {
        &self.variables
    }

    pub fn clauses(&self) -> &[AtomId] {
        &self.clauses
    }
}

/// Outcome of substituting a binding into a pattern without interning.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Resolved {
    /// Fully ground and already stored.
    Present(AtomId),
    /// Fully ground but not in the KB.
    Absent,
    /// Still contains unbound variables.
    Open,
}

/// Substitutes `binding` into `pattern` by lookup only.
pub fn resolve(kb: &AtomSpace, pattern: AtomId, binding: &Binding) -> Result<Resolved> {
    if kb.is_ground(pattern)? {
        return Ok(Resolved::Present(pattern));
    }
    if kb.is_variable(pattern) {
        return Ok(binding.get(pattern).map_or(Resolved::Open, Resolved::Present));
    }
    let AtomRef::Link { ty, outgoing } = kb.get(pattern)? else {
        unreachable!("non-ground nodes are variables");
    };
    let mut out = Vec::with_capacity(outgoing.len());
    let mut open = false;
    for &c in outgoing {
        match resolve(kb, c, binding)? {
            Resolved::Present(g) => out.push(g),
            Resolved::Absent => return Ok(Resolved::Absent),
            Resolved::Open => open = true,
        }
    }
    if open {
        return Ok(Resolved::Open);
    }
    Ok(kb.find_link(ty, &out).map_or(Resolved::Absent, Resolved::Present))
}

fn satisfies(kb: &AtomSpace, decls: &VarDecls, var: AtomId, ground: AtomId) -> bool {
    match decls.constraint(var) {
        Some(ty) => kb.atom_type(ground).is_ok_and(|t| t == ty),
        None => true,
    }
}

pub(crate) fn unify_into(kb: &AtomSpace, decls: &VarDecls, pattern: AtomId, ground: AtomId, b: &mut Binding) -> bool {
    if pattern == ground {
        return true;
    }
    if kb.is_variable(pattern) {
        return match b.get(pattern) {
            Some(existing) => existing == ground,
            None => {
                if !satisfies(kb, decls, pattern, ground) {
                    return false;
                }
                b.insert(pattern, ground);
                true
            }
        };
    }
    if kb.is_ground(pattern).unwrap_or(true) {
        // distinct ground atoms never unify
        return false;
    }
    let (Ok(AtomRef::Link { ty: pt, outgoing: po }), Ok(AtomRef::Link { ty: gt, outgoing: go })) =
        (kb.get(pattern), kb.get(ground))
    else {
        return false;
    };
    if pt != gt || po.len() != go.len() {
        return false;
    }
    po.iter().zip(go).all(|(&p, &g)| unify_into(kb, decls, p, g, b))
}

/// One-sided structural match of `pattern` against a ground atom, extending
/// a copy of `binding`. Variables missing from `decls` are unconstrained.
pub fn unify(
    kb: &AtomSpace,
    decls: &VarDecls,
    pattern: AtomId,
    ground: AtomId,
    binding: &Binding,
) -> Option<Binding> {
    if !kb.is_ground(ground).ok()? {
        return None;
    }
    let mut b = binding.clone();
    unify_into(kb, decls, pattern, ground, &mut b).then_some(b)
}

/// Which stored atoms count as present for matching.
pub(crate) type Presence<'a> = &'a dyn Fn(AtomId) -> bool;

/// Ground atoms accepted by `present` that could match `pattern` under
/// `binding`, in insertion order. A superset of the true matches.
pub(crate) fn candidates(kb: &AtomSpace, pattern: AtomId, binding: &Binding, present: Presence<'_>) -> Result<Vec<AtomId>> {
    let below = |id: &AtomId| present(*id);
    match resolve(kb, pattern, binding)? {
        Resolved::Present(id) => return Ok(if below(&id) { vec![id] } else { Vec::new() }),
        Resolved::Absent => return Ok(Vec::new()),
        Resolved::Open => {}
    }
    if kb.is_variable(pattern) {
        let mut out = Vec::new();
        for id in kb.ids().filter(below) {
            if kb.is_ground(id)? {
                out.push(id);
            }
        }
        return Ok(out);
    }
    let ty = kb.atom_type(pattern)?;
    let mut best: Option<&[AtomId]> = None;
    for &c in kb.outgoing(pattern)? {
        if let Resolved::Present(g) = resolve(kb, c, binding)? {
            let inc = kb.incoming_of_type(g, ty)?;
            if best.is_none_or(|b| inc.len() < b.len()) {
                best = Some(inc);
            }
        }
    }
    let pool = match best {
        Some(p) => p,
        None => kb.atoms_of_type(ty)?,
    };
    let mut out = Vec::new();
    for id in pool.iter().copied().filter(below) {
        if kb.is_ground(id)? {
            out.push(id);
        }
    }
    Ok(out)
}

/// All groundings of one pattern among present atoms.
pub(crate) fn match_clause(
    kb: &AtomSpace,
    decls: &VarDecls,
    pattern: AtomId,
    binding: &Binding,
    present: Presence<'_>,
) -> Result<Vec<(Binding, AtomId)>> {
    let mut out = Vec::new();
    for cand in candidates(kb, pattern, binding, present)? {
        if let Some(b) = unify(kb, decls, pattern, cand, binding) {
            out.push((b, cand));
        }
    }
    Ok(out)
}

pub(crate) fn match_clauses(
    kb: &AtomSpace,
    decls: &VarDecls,
    clauses: &[AtomId],
    present: Presence<'_>,
) -> Result<Vec<Binding>> {
    let mut partial = vec![Binding::new()];
    for &clause in clauses {
        let mut next = Vec::new();
        for b in &partial {
            for (ext, _) in match_clause(kb, decls, clause, b, present)? {
                next.push(ext);
            }
        }
        partial = next;
        if partial.is_empty() {
            break;
        }
    }
    Ok(partial)
}

/// Every binding under which all clauses of `query` are present in `kb`.
pub fn match_query(kb: &AtomSpace, query: &Query) -> Result<Vec<Binding>> {
    let results = match_clauses(kb, &query.variables, &query.clauses, &|_| true)?;
    let vars = query.variables.vars();
    let mut seen = std::collections::HashSet::new();
    Ok(results
        .into_iter()
        .map(|b| b.restricted_to(&vars))
        .filter(|b| seen.insert(b.clone()))
        .collect())
}

/// Substitutes `binding` into `template` and interns the result.
pub fn instantiate(kb: &mut AtomSpace, template: AtomId, binding: &Binding) -> Result<AtomId> {
    if kb.is_ground(template)? {
        return Ok(template);
    }
    if kb.is_variable(template) {
        return binding
            .get(template)
            .ok_or_else(|| MatchError::UnboundVariable(var_name(kb, template)));
    }
    let ty = kb.atom_type(template)?;
    let outgoing = kb.outgoing(template)?.to_vec();
    let mut out = Vec::with_capacity(outgoing.len());
    for c in outgoing {
        out.push(instantiate(kb, c, binding)?);
    }
    Ok(kb.intern_link(ty, &out)?)
}

/// Runs a BindLink: match its body, then intern the implicand per binding.
pub fn execute_bind_link(kb: &mut AtomSpace, bind: AtomId) -> Result<Vec<AtomId>> {
    let (query, implicand) = Query::from_bind_link(kb, bind)?;
    let mut out = Vec::new();
    for b in match_query(kb, &query)? {
        let id = instantiate(kb, implicand, &b)?;
        if !out.contains(&id) {
            out.push(id);
        }
    }
    Ok(out)
}
