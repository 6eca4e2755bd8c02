//! Finite set-semantics data: tuples, relations and instances.

use std::collections::btree_map;
use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::ser::{SerializeMap, SerializeSeq};
use serde::{Serialize, Serializer};

use super::ast::{PredicateRef, Value};
use super::error::DatalogError;

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Tuple(pub Vec<Value>);

impl Tuple {
    pub fn new(values: Vec<Value>) -> Self {
        Tuple(values)
    }

    pub fn ints(values: &[i64]) -> Self {
        Tuple(values.iter().copied().map(Value::Int).collect())
    }

    pub fn arity(&self) -> usize {
        self.0.len()
    }

    pub fn values(&self) -> &[Value] {
        &self.0
    }
}

/// Renders as `(p4, 5)`: strings bare when they look like identifiers.
impl fmt::Display for Tuple {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("(")?;
        for (i, v) in self.0.iter().enumerate() {
            if i > 0 {
                f.write_str(", ")?;
            }
            match v {
                Value::Str(s) if is_bare(s) => f.write_str(s)?,
                other => write!(f, "{other}")?,
            }
        }
        f.write_str(")")
    }
}

fn is_bare(s: &str) -> bool {
    let mut chars = s.chars();
    matches!(chars.next(), Some(c) if c.is_ascii_alphabetic() || c == '_')
        && chars.all(|c| c.is_ascii_alphanumeric() || c == '_')
}

impl Serialize for Value {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        match self {
            Value::Int(i) => s.serialize_i64(*i),
            Value::Str(v) => s.serialize_str(v),
        }
    }
}

impl Serialize for Tuple {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        self.0.serialize(s)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Relation {
    arity: usize,
    tuples: BTreeSet<Tuple>,
}

impl Relation {
    pub fn new(arity: usize) -> Self {
        Relation {
            arity,
            tuples: BTreeSet::new(),
        }
    }

    pub fn from_tuples(
        arity: usize,
        tuples: impl IntoIterator<Item = Tuple>,
    ) -> Result<Self, DatalogError> {
        let mut r = Relation::new(arity);
        for t in tuples {
            r.insert(t)?;
        }
        Ok(r)
    }

    /// Unary integer relation, handy for the single-column examples.
    pub fn unary(values: impl IntoIterator<Item = i64>) -> Self {
        Relation {
            arity: 1,
            tuples: values.into_iter().map(|v| Tuple::ints(&[v])).collect(),
        }
    }

    pub fn arity(&self) -> usize {
        self.arity
    }

    pub fn len(&self) -> usize {
        self.tuples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tuples.is_empty()
    }

    pub fn contains(&self, t: &Tuple) -> bool {
        self.tuples.contains(t)
    }

    pub fn iter(&self) -> impl Iterator<Item = &Tuple> {
        self.tuples.iter()
    }

    pub fn tuples(&self) -> &BTreeSet<Tuple> {
        &self.tuples
    }

    /// Returns whether the tuple was new.
    pub fn insert(&mut self, t: Tuple) -> Result<bool, DatalogError> {
        if t.arity() != self.arity {
            return Err(DatalogError::RelationArity {
                expected: self.arity,
                found: t.arity(),
            });
        }
        Ok(self.tuples.insert(t))
    }

    pub(crate) fn insert_unchecked(&mut self, t: Tuple) -> bool {
        debug_assert_eq!(t.arity(), self.arity);
        self.tuples.insert(t)
    }

    pub fn remove(&mut self, t: &Tuple) -> bool {
        self.tuples.remove(t)
    }

    fn same_arity(&self, other: &Relation) -> Result<(), DatalogError> {
        if self.arity == other.arity {
            Ok(())
        } else {
            Err(DatalogError::RelationArity {
                expected: self.arity,
                found: other.arity,
            })
        }
    }

    pub fn union(&self, other: &Relation) -> Result<Relation, DatalogError> {
        self.same_arity(other)?;
        Ok(Relation {
            arity: self.arity,
            tuples: self.tuples.union(&other.tuples).cloned().collect(),
        })
    }

    pub fn difference(&self, other: &Relation) -> Result<Relation, DatalogError> {
        self.same_arity(other)?;
        Ok(Relation {
            arity: self.arity,
            tuples: self.tuples.difference(&other.tuples).cloned().collect(),
        })
    }

    pub fn intersection(&self, other: &Relation) -> Result<Relation, DatalogError> {
        self.same_arity(other)?;
        Ok(Relation {
            arity: self.arity,
            tuples: self.tuples.intersection(&other.tuples).cloned().collect(),
        })
    }

    pub fn is_disjoint(&self, other: &Relation) -> bool {
        self.tuples.is_disjoint(&other.tuples)
    }

    pub fn is_subset(&self, other: &Relation) -> bool {
        self.tuples.is_subset(&other.tuples)
    }
}

impl fmt::Display for Relation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("{")?;
        for (i, t) in self.tuples.iter().enumerate() {
            if i > 0 {
                f.write_str(", ")?;
            }
            write!(f, "{t}")?;
        }
        f.write_str("}")
    }
}

impl Serialize for Relation {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        let mut seq = s.serialize_seq(Some(self.tuples.len()))?;
        for t in &self.tuples {
            seq.serialize_element(t)?;
        }
        seq.end()
    }
}

/// A database state: one relation per predicate.
#[derive(Debug, Clone, PartialEq, Eq, Default, Hash, PartialOrd, Ord)]
pub struct Instance {
    relations: BTreeMap<PredicateRef, Relation>,
}

impl Instance {
    pub fn new() -> Self {
        Instance::default()
    }

    pub fn with(mut self, pred: PredicateRef, rel: Relation) -> Self {
        self.insert(pred, rel);
        self
    }

    pub fn insert(&mut self, pred: PredicateRef, rel: Relation) -> Option<Relation> {
        self.relations.insert(pred, rel)
    }

    pub fn get(&self, pred: &PredicateRef) -> Option<&Relation> {
        self.relations.get(pred)
    }

    pub fn get_mut(&mut self, pred: &PredicateRef) -> Option<&mut Relation> {
        self.relations.get_mut(pred)
    }

    pub fn remove(&mut self, pred: &PredicateRef) -> Option<Relation> {
        self.relations.remove(pred)
    }

    pub fn contains(&self, pred: &PredicateRef) -> bool {
        self.relations.contains_key(pred)
    }

    pub fn iter(&self) -> btree_map::Iter<'_, PredicateRef, Relation> {
        self.relations.iter()
    }

    pub fn predicates(&self) -> impl Iterator<Item = &PredicateRef> {
        self.relations.keys()
    }

    pub fn len(&self) -> usize {
        self.relations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.relations.is_empty()
    }

    /// Sub-instance over the given predicates (missing ones are skipped).
    pub fn restrict<'a>(&self, preds: impl IntoIterator<Item = &'a PredicateRef>) -> Instance {
        let mut out = Instance::new();
        for p in preds {
            if let Some(r) = self.relations.get(p) {
                out.insert(p.clone(), r.clone());
            }
        }
        out
    }

    /// True when every relation is empty.
    pub fn all_empty(&self) -> bool {
        self.relations.values().all(Relation::is_empty)
    }

    /// Total number of tuples across relations.
    pub fn tuple_count(&self) -> usize {
        self.relations.values().map(Relation::len).sum()
    }
}

impl FromIterator<(PredicateRef, Relation)> for Instance {
    fn from_iter<T: IntoIterator<Item = (PredicateRef, Relation)>>(iter: T) -> Self {
        Instance {
            relations: iter.into_iter().collect(),
        }
    }
}

impl fmt::Display for Instance {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, (p, r)) in self.relations.iter().enumerate() {
            if i > 0 {
                f.write_str(", ")?;
            }
            write!(f, "{p} = {r}")?;
        }
        Ok(())
    }
}

impl Serialize for Instance {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        let mut map = s.serialize_map(Some(self.relations.len()))?;
        for (p, r) in &self.relations {
            map.serialize_entry(&p.to_string(), r)?;
        }
        map.end()
    }
}
