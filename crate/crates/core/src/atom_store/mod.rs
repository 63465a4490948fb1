//! Interned hypergraph knowledge base.
//!
//! Atoms are nodes `(type, name)` or links `(type, outgoing...)`. Both are
//! interned: inserting an equal key returns the existing [`AtomId`]. Each
//! atom carries a [`TruthValue`] whose strength is a [`Var`] on the session
//! tape, so rule formulas can read it as a differentiable input.
//!
//! Fresh atoms get strength 1.0 and confidence 0.0 ("asserted, no evidence").

mod text;

use std::collections::HashMap;
use std::fmt;
use std::sync::Arc;

use thiserror::Error;

use crate::autodiff::{Algebra, AutodiffError, Tape, Var};

pub use text::{format_atom, format_atom_with_stv, format_atom_with_tv, parse_kb, parse_single, write_kb, ParsedKb};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AtomError {
    #[error("unknown atom type `{0}`")]
    UnknownType(String),
    #[error("type `{0}` is already registered")]
    DuplicateType(String),
    #[error("`{name}` is a {actual} type, expected a {expected} type")]
    KindMismatch {
        name: String,
        expected: AtomKind,
        actual: AtomKind,
    },
    #[error("unknown atom id {0}")]
    UnknownAtom(AtomId),
    #[error("outgoing atom {0} does not exist")]
    Dangling(AtomId),
    #[error("strength {0} outside [0, 1]")]
    StrengthOutOfRange(f64),
    #[error("confidence {0} outside [0, 1]")]
    ConfidenceOutOfRange(f64),
    #[error("truth value strength lives on another tape")]
    ForeignTape,
    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error(transparent)]
    Autodiff(#[from] AutodiffError),
}

pub type Result<T> = std::result::Result<T, AtomError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum AtomKind {
    Node,
    Link,
}

impl fmt::Display for AtomKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            AtomKind::Node => "node",
            AtomKind::Link => "link",
        })
    }
}

/// Index into a [`TypeRegistry`]. The built-in types have fixed indices.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct AtomType(u16);

impl AtomType {
    pub const CONCEPT_NODE: AtomType = AtomType(0);
    pub const PREDICATE_NODE: AtomType = AtomType(1);
    pub const NUMBER_NODE: AtomType = AtomType(2);
    pub const VARIABLE_NODE: AtomType = AtomType(3);
    pub const TYPE_NODE: AtomType = AtomType(4);
    pub const INHERITANCE_LINK: AtomType = AtomType(5);
    pub const IMPLICATION_LINK: AtomType = AtomType(6);
    pub const EVALUATION_LINK: AtomType = AtomType(7);
    pub const AND_LINK: AtomType = AtomType(8);
    pub const OR_LINK: AtomType = AtomType(9);
    pub const NOT_LINK: AtomType = AtomType(10);
    pub const LIST_LINK: AtomType = AtomType(11);
    pub const LAMBDA_LINK: AtomType = AtomType(12);
    pub const VARIABLE_LIST: AtomType = AtomType(13);
    pub const TYPED_VARIABLE_LINK: AtomType = AtomType(14);
    pub const BIND_LINK: AtomType = AtomType(15);

    pub fn index(self) -> usize {
        self.0 as usize
    }
}

const BUILTIN_TYPES: &[(&str, AtomKind)] = &[
    ("ConceptNode", AtomKind::Node),
    ("PredicateNode", AtomKind::Node),
    ("NumberNode", AtomKind::Node),
    ("VariableNode", AtomKind::Node),
    ("TypeNode", AtomKind::Node),
    ("InheritanceLink", AtomKind::Link),
    ("ImplicationLink", AtomKind::Link),
    ("EvaluationLink", AtomKind::Link),
    ("AndLink", AtomKind::Link),
    ("OrLink", AtomKind::Link),
    ("NotLink", AtomKind::Link),
    ("ListLink", AtomKind::Link),
    ("LambdaLink", AtomKind::Link),
    ("VariableList", AtomKind::Link),
    ("TypedVariableLink", AtomKind::Link),
    ("BindLink", AtomKind::Link),
];

/// Atom type names and kinds. Extend it before building an [`AtomSpace`];
/// the space holds it behind an `Arc` and never changes it.
#[derive(Debug, Clone)]
pub struct TypeRegistry {
    types: Vec<(String, AtomKind)>,
    by_name: HashMap<String, AtomType>,
}

impl Default for TypeRegistry {
    fn default() -> Self {
        Self::builtin()
    }
}

impl TypeRegistry {
    pub fn builtin() -> Self {
        let mut reg = TypeRegistry {
            types: Vec::new(),
            by_name: HashMap::new(),
        };
        for (name, kind) in BUILTIN_TYPES {
            reg.register(name, *kind).expect("builtin names are unique");
        }
        reg
    }

    pub fn register(&mut self, name: &str, kind: AtomKind) -> Result<AtomType> {
        if self.by_name.contains_key(name) {
            return Err(AtomError::DuplicateType(name.to_string()));
        }
        let ty = AtomType(u16::try_from(self.types.len()).expect("too many atom types"));
        self.types.push((name.to_string(), kind));
        self.by_name.insert(name.to_string(), ty);
        Ok(ty)
    }

    pub fn lookup(&self, name: &str) -> Option<AtomType> {
        self.by_name.get(name).copied()
    }

    pub fn name(&self, ty: AtomType) -> &str {
        &self.types[ty.index()].0
    }

    pub fn kind(&self, ty: AtomType) -> AtomKind {
        self.types[ty.index()].1
    }

    pub fn contains(&self, ty: AtomType) -> bool {
        ty.index() < self.types.len()
    }

    pub fn len(&self) -> usize {
        self.types.len()
    }

    pub fn is_empty(&self) -> bool {
        self.types.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct AtomId(u32);

impl AtomId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl fmt::Display for AtomId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "#{}", self.0)
    }
}

/// Strength handle plus a static confidence.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TruthValue {
    pub strength: Var,
    pub confidence: f64,
}

impl TruthValue {
    /// Wraps an existing strength var after checking both components.
    pub fn new(tape: &Tape, strength: Var, confidence: f64) -> Result<Self> {
        let s = tape.value(strength)?;
        if !(0.0..=1.0).contains(&s) {
            return Err(AtomError::StrengthOutOfRange(s));
        }
        if !(0.0..=1.0).contains(&confidence) {
            return Err(AtomError::ConfidenceOutOfRange(confidence));
        }
        Ok(TruthValue {
            strength,
            confidence,
        })
    }

    /// Records `strength` as a constant leaf.
    pub fn constant(tape: &mut Tape, strength: f64, confidence: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&strength) {
            return Err(AtomError::StrengthOutOfRange(strength));
        }
        let v = tape.constant(strength)?;
        Self::new(tape, v, confidence)
    }
}

/// Read-only view of a stored atom.
#[derive(Debug, Clone, Copy)]
pub enum AtomRef<'a> {
    Node { ty: AtomType, name: &'a str },
    Link { ty: AtomType, outgoing: &'a [AtomId] },
}

impl<'a> AtomRef<'a> {
    pub fn atom_type(&self) -> AtomType {
        match self {
            AtomRef::Node { ty, .. } | AtomRef::Link { ty, .. } => *ty,
        }
    }

    pub fn outgoing(&self) -> &'a [AtomId] {
        match *self {
            AtomRef::Node { .. } => &[],
            AtomRef::Link { outgoing, .. } => outgoing,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
enum Payload {
    Name(String),
    Outgoing(Vec<AtomId>),
}

#[derive(Debug, Clone)]
struct AtomData {
    ty: AtomType,
    payload: Payload,
    incoming: Vec<AtomId>,
    tv: TruthValue,
    tv_set: bool,
    ground: bool,
}

/// The knowledge base. Cloning is cheap enough to snapshot a base KB once
/// per training step; ids stay valid across clones.
#[derive(Debug, Clone)]
pub struct AtomSpace {
    registry: Arc<TypeRegistry>,
    atoms: Vec<AtomData>,
    index: HashMap<(AtomType, Payload), AtomId>,
    by_type: Vec<Vec<AtomId>>,
    incoming_by_type: HashMap<(AtomId, AtomType), Vec<AtomId>>,
    default_tv: TruthValue,
    tape_id: u32,
}

impl AtomSpace {
    /// Empty space with the built-in types.
    pub fn new(tape: &mut Tape) -> Self {
        Self::with_registry(TypeRegistry::builtin(), tape)
    }

    pub fn with_registry(registry: TypeRegistry, tape: &mut Tape) -> Self {
        let default_tv = TruthValue::constant(tape, 1.0, 0.0).expect("default truth value is valid");
        let by_type = vec![Vec::new(); registry.len()];
        AtomSpace {
            registry: Arc::new(registry),
            atoms: Vec::new(),
            index: HashMap::new(),
            by_type,
            incoming_by_type: HashMap::new(),
            default_tv,
            tape_id: tape.id(),
        }
    }

    pub fn registry(&self) -> &TypeRegistry {
        &self.registry
    }

    pub fn len(&self) -> usize {
        self.atoms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.atoms.is_empty()
    }

    pub fn default_tv(&self) -> TruthValue {
        self.default_tv
    }

    pub fn type_named(&self, name: &str) -> Result<AtomType> {
        self.registry
            .lookup(name)
            .ok_or_else(|| AtomError::UnknownType(name.to_string()))
    }

    fn check_type(&self, ty: AtomType, expected: AtomKind) -> Result<()> {
        if !self.registry.contains(ty) {
            return Err(AtomError::UnknownType(format!("{ty:?}")));
        }
        let actual = self.registry.kind(ty);
        if actual != expected {
            return Err(AtomError::KindMismatch {
                name: self.registry.name(ty).to_string(),
                expected,
                actual,
            });
        }
        Ok(())
    }

    fn data(&self, id: AtomId) -> Result<&AtomData> {
        self.atoms.get(id.index()).ok_or(AtomError::UnknownAtom(id))
    }

    pub fn contains(&self, id: AtomId) -> bool {
        id.index() < self.atoms.len()
    }

    fn insert(&mut self, ty: AtomType, payload: Payload, ground: bool) -> AtomId {
        let id = AtomId(u32::try_from(self.atoms.len()).expect("atom space exceeds u32::MAX atoms"));
        if let Payload::Outgoing(out) = &payload {
            for &child in out {
                let incoming = &mut self.atoms[child.index()].incoming;
                if incoming.last() != Some(&id) {
                    incoming.push(id);
                    self.incoming_by_type.entry((child, ty)).or_default().push(id);
                }
            }
        }
        self.atoms.push(AtomData {
            ty,
            payload: payload.clone(),
            incoming: Vec::new(),
            tv: self.default_tv,
            tv_set: false,
            ground,
        });
        self.index.insert((ty, payload), id);
        self.by_type[ty.index()].push(id);
        id
    }

    pub fn intern_node(&mut self, ty: AtomType, name: &str) -> Result<AtomId> {
        self.check_type(ty, AtomKind::Node)?;
        if let Some(id) = self.find_node(ty, name) {
            return Ok(id);
        }
        let ground = ty != AtomType::VARIABLE_NODE;
        Ok(self.insert(ty, Payload::Name(name.to_string()), ground))
    }

    /// Interns a link. New ids are always larger than every outgoing id, so
    /// no link can reach itself along outgoing edges.
    pub fn intern_link(&mut self, ty: AtomType, outgoing: &[AtomId]) -> Result<AtomId> {
        self.check_type(ty, AtomKind::Link)?;
        for &child in outgoing {
            if !self.contains(child) {
                return Err(AtomError::Dangling(child));
            }
        }
        if let Some(id) = self.find_link(ty, outgoing) {
            return Ok(id);
        }
        let ground = outgoing.iter().all(|c| self.atoms[c.index()].ground);
        Ok(self.insert(ty, Payload::Outgoing(outgoing.to_vec()), ground))
    }

    /// Lookup without inserting.
    pub fn find_node(&self, ty: AtomType, name: &str) -> Option<AtomId> {
        self.index.get(&(ty, Payload::Name(name.to_string()))).copied()
    }

    pub fn find_link(&self, ty: AtomType, outgoing: &[AtomId]) -> Option<AtomId> {
        self.index
            .get(&(ty, Payload::Outgoing(outgoing.to_vec())))
            .copied()
    }

    pub fn get(&self, id: AtomId) -> Result<AtomRef<'_>> {
        let d = self.data(id)?;
        Ok(match &d.payload {
            Payload::Name(name) => AtomRef::Node { ty: d.ty, name },
            Payload::Outgoing(outgoing) => AtomRef::Link { ty: d.ty, outgoing },
        })
    }

    pub fn atom_type(&self, id: AtomId) -> Result<AtomType> {
        Ok(self.data(id)?.ty)
    }

    pub fn outgoing(&self, id: AtomId) -> Result<&[AtomId]> {
        Ok(self.get(id)?.outgoing())
    }

    pub fn name(&self, id: AtomId) -> Result<Option<&str>> {
        Ok(match self.get(id)? {
            AtomRef::Node { name, .. } => Some(name),
            AtomRef::Link { .. } => None,
        })
    }

    /// True when the atom contains no `VariableNode`.
    pub fn is_ground(&self, id: AtomId) -> Result<bool> {
        Ok(self.data(id)?.ground)
    }

    pub fn is_variable(&self, id: AtomId) -> bool {
        self.atoms
            .get(id.index())
            .is_some_and(|d| d.ty == AtomType::VARIABLE_NODE)
    }

    pub fn set_tv(&mut self, atom: AtomId, tv: TruthValue) -> Result<()> {
        if tv.strength.tape_id() != self.tape_id {
            return Err(AtomError::ForeignTape);
        }
        let d = self
            .atoms
            .get_mut(atom.index())
            .ok_or(AtomError::UnknownAtom(atom))?;
        d.tv = tv;
        d.tv_set = true;
        Ok(())
    }

    pub fn get_tv(&self, atom: AtomId) -> Result<TruthValue> {
        Ok(self.data(atom)?.tv)
    }

    /// Whether a truth value was ever attached explicitly.
    pub fn has_explicit_tv(&self, atom: AtomId) -> Result<bool> {
        Ok(self.data(atom)?.tv_set)
    }

    /// Links whose outgoing set contains `atom`, in insertion order.
    pub fn incoming(&self, atom: AtomId) -> Result<&[AtomId]> {
        Ok(&self.data(atom)?.incoming)
    }

    /// Incoming links restricted to one type, in insertion order.
    pub fn incoming_of_type(&self, atom: AtomId, ty: AtomType) -> Result<&[AtomId]> {
        self.data(atom)?;
        Ok(self
            .incoming_by_type
            .get(&(atom, ty))
            .map(Vec::as_slice)
            .unwrap_or(&[]))
    }

    pub fn atoms_of_type(&self, ty: AtomType) -> Result<&[AtomId]> {
        self.by_type
            .get(ty.index())
            .map(Vec::as_slice)
            .ok_or_else(|| AtomError::UnknownType(format!("{ty:?}")))
    }

    pub fn ids(&self) -> impl Iterator<Item = AtomId> + '_ {
        (0..self.atoms.len() as u32).map(AtomId)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn space() -> (Tape, AtomSpace) {
        let mut tape = Tape::new();
        let kb = AtomSpace::new(&mut tape);
        (tape, kb)
    }

    #[test]
    fn node_interning() {
        let (_, mut kb) = space();
        let a = kb.intern_node(AtomType::CONCEPT_NODE, "sparrow").unwrap();
        let b = kb.intern_node(AtomType::CONCEPT_NODE, "sparrow").unwrap();
        let c = kb.intern_node(AtomType::CONCEPT_NODE, "bird").unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
        let p = kb.intern_node(AtomType::PREDICATE_NODE, "sparrow").unwrap();
        assert_ne!(a, p);
        assert!(matches!(
            kb.intern_node(AtomType::INHERITANCE_LINK, "x"),
            Err(AtomError::KindMismatch { .. })
        ));
        assert!(matches!(
            kb.intern_node(AtomType(999), "x"),
            Err(AtomError::UnknownType(_))
        ));
    }

    #[test]
    fn link_interning_respects_order() {
        let (_, mut kb) = space();
        let s = kb.intern_node(AtomType::CONCEPT_NODE, "sparrow").unwrap();
        let b = kb.intern_node(AtomType::CONCEPT_NODE, "bird").unwrap();
        let l1 = kb.intern_link(AtomType::INHERITANCE_LINK, &[s, b]).unwrap();
        let l2 = kb.intern_link(AtomType::INHERITANCE_LINK, &[s, b]).unwrap();
        let l3 = kb.intern_link(AtomType::INHERITANCE_LINK, &[b, s]).unwrap();
        assert_eq!(l1, l2);
        assert_ne!(l1, l3);
        assert_eq!(kb.outgoing(l3).unwrap(), &[b, s]);

        let apple = kb.intern_node(AtomType::PREDICATE_NODE, "apple").unwrap();
        let inst = kb.intern_node(AtomType::CONCEPT_NODE, "apple-001").unwrap();
        assert!(kb.intern_link(AtomType::EVALUATION_LINK, &[apple, inst]).is_ok());

        assert_eq!(
            kb.intern_link(AtomType::INHERITANCE_LINK, &[s, AtomId(77)]),
            Err(AtomError::Dangling(AtomId(77)))
        );
        assert!(matches!(
            kb.intern_link(AtomType::CONCEPT_NODE, &[s]),
            Err(AtomError::KindMismatch { .. })
        ));
    }

    #[test]
    fn truth_values() {
        let (mut tape, mut kb) = space();
        let a = kb.intern_node(AtomType::CONCEPT_NODE, "a").unwrap();
        let tv = kb.get_tv(a).unwrap();
        assert_eq!(tape.value(tv.strength).unwrap(), 1.0);
        assert_eq!(tv.confidence, 0.0);
        assert!(!kb.has_explicit_tv(a).unwrap());

        let t1 = TruthValue::constant(&mut tape, 1.0, 1.0).unwrap();
        kb.set_tv(a, t1).unwrap();
        assert_eq!(tape.value(kb.get_tv(a).unwrap().strength).unwrap(), 1.0);

        let t2 = TruthValue::constant(&mut tape, 0.7, 0.9).unwrap();
        kb.set_tv(a, t2).unwrap();
        let got = kb.get_tv(a).unwrap();
        assert_eq!(tape.value(got.strength).unwrap(), 0.7);
        assert_eq!(got.confidence, 0.9);

        assert_eq!(kb.set_tv(AtomId(42), t2), Err(AtomError::UnknownAtom(AtomId(42))));
        assert_eq!(kb.get_tv(AtomId(42)), Err(AtomError::UnknownAtom(AtomId(42))));
        assert!(matches!(
            TruthValue::constant(&mut tape, 1.2, 0.5),
            Err(AtomError::StrengthOutOfRange(_))
        ));
        assert!(matches!(
            TruthValue::constant(&mut tape, 0.5, -0.5),
            Err(AtomError::ConfidenceOutOfRange(_))
        ));
    }

    #[test]
    fn tv_strength_is_shared_by_reference() {
        let (mut tape, mut kb) = space();
        let a = kb.intern_node(AtomType::CONCEPT_NODE, "a").unwrap();
        let p = tape.parameter(0.25).unwrap();
        kb.set_tv(a, TruthValue::new(&tape, p, 1.0).unwrap()).unwrap();
        tape.set_value(p, 0.75).unwrap();
        assert_eq!(tape.value(kb.get_tv(a).unwrap().strength).unwrap(), 0.75);
    }

    #[test]
    fn foreign_tape_rejected() {
        let (_, mut kb) = space();
        let a = kb.intern_node(AtomType::CONCEPT_NODE, "a").unwrap();
        let mut other = Tape::new();
        let tv = TruthValue::constant(&mut other, 0.5, 0.5).unwrap();
        assert_eq!(kb.set_tv(a, tv), Err(AtomError::ForeignTape));
    }

    #[test]
    fn incoming_sets() {
        let (_, mut kb) = space();
        let s = kb.intern_node(AtomType::CONCEPT_NODE, "sparrow").unwrap();
        let b = kb.intern_node(AtomType::CONCEPT_NODE, "bird").unwrap();
        let x = kb.intern_node(AtomType::CONCEPT_NODE, "lonely").unwrap();
        let l1 = kb.intern_link(AtomType::INHERITANCE_LINK, &[s, b]).unwrap();
        assert_eq!(kb.incoming(s).unwrap(), &[l1]);
        let a = kb.intern_node(AtomType::CONCEPT_NODE, "animal").unwrap();
        let l2 = kb.intern_link(AtomType::INHERITANCE_LINK, &[b, a]).unwrap();
        assert_eq!(kb.incoming(b).unwrap(), &[l1, l2]);
        assert!(kb.incoming(x).unwrap().is_empty());
        let same = kb.intern_link(AtomType::LIST_LINK, &[b, b]).unwrap();
        assert_eq!(kb.incoming(b).unwrap(), &[l1, l2, same]);
        assert_eq!(kb.incoming_of_type(b, AtomType::INHERITANCE_LINK).unwrap(), &[l1, l2]);
        assert!(kb.incoming(AtomId(99)).is_err());
    }

    #[test]
    fn atoms_of_type_lists_each_once() {
        let (_, mut kb) = space();
        assert!(kb.atoms_of_type(AtomType::CONCEPT_NODE).unwrap().is_empty());
        let a = kb.intern_node(AtomType::CONCEPT_NODE, "a").unwrap();
        let b = kb.intern_node(AtomType::CONCEPT_NODE, "b").unwrap();
        kb.intern_node(AtomType::CONCEPT_NODE, "a").unwrap();
        assert_eq!(kb.atoms_of_type(AtomType::CONCEPT_NODE).unwrap(), &[a, b]);
        assert!(kb.atoms_of_type(AtomType(500)).is_err());
    }

    #[test]
    fn groundness_tracks_variables() {
        let (_, mut kb) = space();
        let x = kb.intern_node(AtomType::VARIABLE_NODE, "$X").unwrap();
        let b = kb.intern_node(AtomType::CONCEPT_NODE, "b").unwrap();
        let l = kb.intern_link(AtomType::INHERITANCE_LINK, &[x, b]).unwrap();
        let g = kb.intern_link(AtomType::INHERITANCE_LINK, &[b, b]).unwrap();
        assert!(!kb.is_ground(l).unwrap());
        assert!(kb.is_ground(g).unwrap());
        assert!(kb.is_variable(x));
    }

    #[test]
    fn registry_extension() {
        let mut reg = TypeRegistry::builtin();
        let ty = reg.register("MemberLink", AtomKind::Link).unwrap();
        assert!(matches!(
            reg.register("ConceptNode", AtomKind::Node),
            Err(AtomError::DuplicateType(_))
        ));
        let mut tape = Tape::new();
        let mut kb = AtomSpace::with_registry(reg, &mut tape);
        let a = kb.intern_node(AtomType::CONCEPT_NODE, "a").unwrap();
        assert!(kb.intern_link(ty, &[a]).is_ok());
        assert_eq!(kb.registry().name(ty), "MemberLink");
    }
}
