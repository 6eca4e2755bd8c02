//! Insert/delete pairs over a relation, and the set algebra used to apply,
//! compute, normalize and split them.

use std::fmt;

use serde::Serialize;
use thiserror::Error;

use crate::datalog::{DatalogError, Relation, Tuple};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum DeltaError {
    #[error("arity mismatch: expected {expected}, found {found}")]
    Arity { expected: usize, found: usize },
    #[error("tuple {tuple} is both inserted and deleted")]
    Overlap { tuple: String },
}

impl From<DatalogError> for DeltaError {
    fn from(e: DatalogError) -> Self {
        match e {
            DatalogError::RelationArity { expected, found } => {
                DeltaError::Arity { expected, found }
            }
            other => unreachable!("relation algebra only fails on arity: {other}"),
        }
    }
}

/// The `(+R, -R)` pair for one relation. Both sides share an arity.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize)]
pub struct Delta {
    inserted: Relation,
    deleted: Relation,
}

impl Delta {
    pub fn new(inserted: Relation, deleted: Relation) -> Result<Self, DeltaError> {
        if inserted.arity() != deleted.arity() {
            return Err(DeltaError::Arity {
                expected: inserted.arity(),
                found: deleted.arity(),
            });
        }
        Ok(Delta { inserted, deleted })
    }

    pub fn empty(arity: usize) -> Self {
        Delta {
            inserted: Relation::new(arity),
            deleted: Relation::new(arity),
        }
    }

    pub fn insertions(rel: Relation) -> Self {
        let arity = rel.arity();
        Delta {
            inserted: rel,
            deleted: Relation::new(arity),
        }
    }

    pub fn deletions(rel: Relation) -> Self {
        let arity = rel.arity();
        Delta {
            inserted: Relation::new(arity),
            deleted: rel,
        }
    }

    pub fn arity(&self) -> usize {
        self.inserted.arity()
    }

    pub fn inserted(&self) -> &Relation {
        &self.inserted
    }

    pub fn deleted(&self) -> &Relation {
        &self.deleted
    }

    pub fn is_empty(&self) -> bool {
        self.inserted.is_empty() && self.deleted.is_empty()
    }

    /// `+R ∪ -R`.
    pub fn touched(&self) -> Relation {
        self.inserted
            .union(&self.deleted)
            .expect("delta sides share an arity")
    }

    pub fn overlap(&self) -> Option<&Tuple> {
        self.inserted.iter().find(|t| self.deleted.contains(t))
    }

    /// Effective with respect to `base`: inserts are new and deletes exist.
    pub fn is_effective(&self, base: &Relation) -> bool {
        self.inserted.is_disjoint(base) && self.deleted.is_subset(base)
    }
}

impl fmt::Display for Delta {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "+{} -{}", self.inserted, self.deleted)
    }
}

fn check_arity(r: &Relation, d: &Delta) -> Result<(), DeltaError> {
    if r.arity() == d.arity() {
        Ok(())
    } else {
        Err(DeltaError::Arity {
            expected: r.arity(),
            found: d.arity(),
        })
    }
}

/// `(current \ deleted) ∪ inserted`.
pub fn apply_delta(current: &Relation, delta: &Delta) -> Result<Relation, DeltaError> {
    check_arity(current, delta)?;
    Ok(current.difference(&delta.deleted)?.union(&delta.inserted)?)
}

/// The effective delta taking `old` to `new`.
pub fn diff(old: &Relation, new: &Relation) -> Result<Delta, DeltaError> {
    Ok(Delta {
        inserted: new.difference(old)?,
        deleted: old.difference(new)?,
    })
}

/// Drops inserts already in `base` and deletes absent from it. A tuple both
/// inserted and deleted is rejected up front: normalizing first would silently
/// resolve the contradiction one way or the other.
pub fn normalize_delta(base: &Relation, delta: &Delta) -> Result<Delta, DeltaError> {
    check_arity(base, delta)?;
    if let Some(t) = delta.overlap() {
        return Err(DeltaError::Overlap {
            tuple: t.to_string(),
        });
    }
    Ok(Delta {
        inserted: delta.inserted.difference(base)?,
        deleted: delta.deleted.intersection(base)?,
    })
}

/// The part of a view update that the source delta does not account for:
/// `(+V \ ±S, -V \ ±S)` where `±S = +S ∪ -S` at the view's arity.
pub fn undef_split(view_delta: &Delta, source_delta_union: &Relation) -> Result<Delta, DeltaError> {
    if source_delta_union.arity() != view_delta.arity() {
        return Err(DeltaError::Arity {
            expected: view_delta.arity(),
            found: source_delta_union.arity(),
        });
    }
    Ok(Delta {
        inserted: view_delta.inserted.difference(source_delta_union)?,
        deleted: view_delta.deleted.difference(source_delta_union)?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn r(v: &[i64]) -> Relation {
        Relation::unary(v.iter().copied())
    }

    fn d(ins: &[i64], del: &[i64]) -> Delta {
        Delta::new(r(ins), r(del)).unwrap()
    }

    #[test]
    fn apply_unsynchronized_insert() {
        assert_eq!(
            apply_delta(&r(&[5, 9]), &d(&[3], &[])).unwrap(),
            r(&[3, 5, 9])
        );
        assert_eq!(
            apply_delta(&r(&[5, 9]), &Delta::empty(1)).unwrap(),
            r(&[5, 9])
        );
        assert_eq!(apply_delta(&r(&[5]), &d(&[7], &[5])).unwrap(), r(&[7]));
    }

    #[test]
    fn apply_arity_mismatch() {
        let wide = Relation::new(2);
        assert_eq!(
            apply_delta(&wide, &Delta::empty(1)),
            Err(DeltaError::Arity {
                expected: 2,
                found: 1
            })
        );
    }

    #[test]
    fn diff_examples() {
        assert_eq!(diff(&r(&[5]), &r(&[3, 5])).unwrap(), d(&[3], &[]));
        assert_eq!(diff(&r(&[5]), &r(&[5])).unwrap(), Delta::empty(1));
        let delta = diff(&r(&[5, 9]), &r(&[2, 9])).unwrap();
        assert_eq!(delta, d(&[2], &[5]));
        assert_eq!(apply_delta(&r(&[5, 9]), &delta).unwrap(), r(&[2, 9]));
    }

    #[test]
    fn normalize_examples() {
        assert_eq!(
            normalize_delta(&r(&[5]), &d(&[5], &[])).unwrap(),
            Delta::empty(1)
        );
        let n = normalize_delta(&r(&[5]), &d(&[3], &[9])).unwrap();
        assert_eq!(n, d(&[3], &[]));
        assert_eq!(
            apply_delta(&r(&[5]), &n).unwrap(),
            apply_delta(&r(&[5]), &d(&[3], &[9])).unwrap()
        );
        assert!(matches!(
            normalize_delta(&r(&[]), &d(&[1], &[1])),
            Err(DeltaError::Overlap { .. })
        ));
    }

    #[test]
    fn undef_split_examples() {
        assert_eq!(undef_split(&d(&[3], &[]), &r(&[])).unwrap(), d(&[3], &[]));
        assert_eq!(
            undef_split(&d(&[5], &[]), &r(&[5])).unwrap(),
            Delta::empty(1)
        );
        assert_eq!(
            undef_split(&Delta::empty(1), &r(&[1, 2])).unwrap(),
            Delta::empty(1)
        );
    }
}
