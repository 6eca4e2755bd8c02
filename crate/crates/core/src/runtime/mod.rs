//! An in-memory store serving several schema versions over one physical
//! instance.
//!
//! The physical instance holds every source relation plus one auxiliary
//! relation `v_ud` per view whose derivation needs it. Each version exposes
//! named views computed by their `get'`; an update to any view is turned into
//! source and auxiliary deltas by `putdelta` and `undef`, applied atomically,
//! and every registered view is recomputed.

mod script;

use std::collections::BTreeMap;
use std::fmt::{self, Write as _};

use serde::Serialize;
use thiserror::Error;

use crate::datalog::{DatalogError, Flavor, Instance, PredicateRef, Prepared, Relation, Role};
use crate::delta::{apply_delta, diff, normalize_delta, Delta, DeltaError};
use crate::derive::{DerivedBx, ViewDerivation};

pub use script::{run_script, ScriptError, ScriptReport};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum RuntimeError {
    #[error("unknown version `{0}`")]
    UnknownVersion(String),
    #[error("unknown view `{version}.{view}`")]
    UnknownView { version: String, view: String },
    #[error("version `{0}` is already registered")]
    DuplicateVersion(String),
    #[error("view `{version}.{view}` is already registered")]
    DuplicateView { version: String, view: String },
    #[error("derivation has no view `{view}`")]
    NoSuchDerivedView { view: String },
    #[error("auxiliary relation `{aux}` is already owned by `{owner}`")]
    AuxClash { aux: String, owner: String },
    #[error(
        "source `{source_name}` has arity {found}, but the store holds it with arity {expected}"
    )]
    SourceClash {
        source_name: String,
        expected: usize,
        found: usize,
    },
    #[error("{0}")]
    Delta(#[from] DeltaError),
    #[error("{0}")]
    Datalog(#[from] DatalogError),
    #[error("propagation fault on `{version}.{view}`: requested {expected}, recomputed {observed}; store rolled back")]
    PropagationFault {
        version: String,
        view: String,
        expected: Relation,
        observed: Relation,
    },
}

#[derive(Debug, Clone)]
struct RegisteredView {
    name: String,
    derivation: ViewDerivation,
    columns: Vec<String>,
    get_prime: Prepared,
    putdelta: Prepared,
    undef: Option<Prepared>,
}

#[derive(Debug, Clone, Default)]
struct Version {
    id: String,
    views: Vec<RegisteredView>,
}

/// One update's effect on the store.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct PropagationRecord {
    pub version: String,
    pub view: String,
    /// The requested delta, normalized against the view's state.
    pub view_delta: Delta,
    /// Applied deltas per physical source relation.
    pub source_deltas: BTreeMap<String, Delta>,
    /// Applied deltas per auxiliary relation.
    pub aux_deltas: BTreeMap<String, Delta>,
    /// `version.view` to state, for every registered view.
    pub before: BTreeMap<String, Relation>,
    pub after: BTreeMap<String, Relation>,
}

impl PropagationRecord {
    /// Views other than the updated one whose state changed.
    pub fn side_effects(&self) -> Vec<&str> {
        let me = format!("{}.{}", self.version, self.view);
        self.after
            .iter()
            .filter(|(k, v)| **k != me && self.before.get(*k) != Some(*v))
            .map(|(k, _)| k.as_str())
            .collect()
    }
}

impl fmt::Display for PropagationRecord {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "update {}.{} {}",
            self.version, self.view, self.view_delta
        )?;
        for (name, d) in self.source_deltas.iter().chain(&self.aux_deltas) {
            if !d.is_empty() {
                write!(f, "; {name} {d}")?;
            }
        }
        let side = self.side_effects();
        if !side.is_empty() {
            write!(f, "; also changed {}", side.join(", "))?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Default)]
pub struct VersionRegistry {
    physical: Instance,
    columns: BTreeMap<PredicateRef, Vec<String>>,
    aux_owner: BTreeMap<PredicateRef, String>,
    versions: Vec<Version>,
}

impl VersionRegistry {
    pub fn new() -> Self {
        VersionRegistry::default()
    }

    /// Registers a version with its views, each named and backed by a
    /// derivation. A single-view derivation may be exposed under any name;
    /// otherwise the name selects the derivation's view.
    pub fn register_version<'a>(
        &mut self,
        id: &str,
        views: impl IntoIterator<Item = (&'a str, &'a DerivedBx)>,
    ) -> Result<(), RuntimeError> {
        if self.versions.iter().any(|v| v.id == id) {
            return Err(RuntimeError::DuplicateVersion(id.to_string()));
        }
        let mut staged = self.clone();
        staged.versions.push(Version {
            id: id.to_string(),
            views: Vec::new(),
        });
        for (name, bx) in views {
            staged.add_view(id, name, bx)?;
        }
        *self = staged;
        Ok(())
    }

    /// Adds one view to an existing version.
    pub fn add_view(
        &mut self,
        version: &str,
        name: &str,
        bx: &DerivedBx,
    ) -> Result<(), RuntimeError> {
        let vi = self.version_index(version)?;
        if self.versions[vi].views.iter().any(|v| v.name == name) {
            return Err(RuntimeError::DuplicateView {
                version: version.to_string(),
                view: name.to_string(),
            });
        }
        let derivation = match bx.views() {
            [only] => only,
            _ => bx
                .view(name)
                .ok_or_else(|| RuntimeError::NoSuchDerivedView {
                    view: name.to_string(),
                })?,
        }
        .clone();
        let owner = format!("{version}.{name}");
        let aux = derivation.aux();
        if derivation.has_aux() {
            if let Some(o) = self.aux_owner.get(&aux) {
                return Err(RuntimeError::AuxClash {
                    aux: aux.to_string(),
                    owner: o.clone(),
                });
            }
        }
        let mut physical = self.physical.clone();
        let mut columns = self.columns.clone();
        let programs = [
            &derivation.get_prime,
            &derivation.putdelta,
            &derivation.undef,
        ];
        let physical_decls = programs
            .iter()
            .flat_map(|p| p.declarations())
            .filter(|d| d.role == Role::Source);
        for decl in physical_decls {
            match physical.get(&decl.pred) {
                Some(r) if r.arity() != decl.arity => {
                    return Err(RuntimeError::SourceClash {
                        source_name: decl.pred.to_string(),
                        expected: r.arity(),
                        found: decl.arity,
                    })
                }
                Some(_) => {}
                None => {
                    physical.insert(decl.pred.clone(), Relation::new(decl.arity));
                    columns.insert(decl.pred.clone(), decl.columns());
                }
            }
        }
        let view_columns = derivation
            .get_prime
            .declaration(&derivation.view)
            .map(|d| d.columns())
            .unwrap_or_default();
        let registered = RegisteredView {
            name: name.to_string(),
            get_prime: Prepared::new(&derivation.get_prime)?,
            putdelta: Prepared::new(&derivation.putdelta)?,
            undef: if derivation.has_aux() {
                Some(Prepared::new(&derivation.undef)?)
            } else {
                None
            },
            columns: view_columns,
            derivation,
        };
        if registered.derivation.has_aux() {
            self.aux_owner.insert(aux, owner);
        }
        self.physical = physical;
        self.columns = columns;
        self.versions[vi].views.push(registered);
        Ok(())
    }

    fn version_index(&self, version: &str) -> Result<usize, RuntimeError> {
        self.versions
            .iter()
            .position(|v| v.id == version)
            .ok_or_else(|| RuntimeError::UnknownVersion(version.to_string()))
    }

    fn lookup(&self, version: &str, view: &str) -> Result<&RegisteredView, RuntimeError> {
        let vi = self.version_index(version)?;
        self.versions[vi]
            .views
            .iter()
            .find(|v| v.name == view)
            .ok_or_else(|| RuntimeError::UnknownView {
                version: version.to_string(),
                view: view.to_string(),
            })
    }

    pub fn versions(&self) -> impl Iterator<Item = &str> {
        self.versions.iter().map(|v| v.id.as_str())
    }

    pub fn views(&self, version: &str) -> Result<Vec<&str>, RuntimeError> {
        let vi = self.version_index(version)?;
        Ok(self.versions[vi]
            .views
            .iter()
            .map(|v| v.name.as_str())
            .collect())
    }

    pub fn physical(&self) -> &Instance {
        &self.physical
    }

    /// Arity of a registered view.
    pub fn view_arity(&self, version: &str, view: &str) -> Result<usize, RuntimeError> {
        Ok(self.lookup(version, view)?.columns.len())
    }

    fn compute(v: &RegisteredView, physical: &Instance) -> Result<Relation, RuntimeError> {
        let out = v.get_prime.run_derived(physical)?;
        Ok(out
            .get(&v.derivation.view)
            .cloned()
            .unwrap_or_else(|| Relation::new(v.columns.len())))
    }

    /// Evaluates a view's `get'` over the current physical state.
    pub fn query_view(&self, version: &str, view: &str) -> Result<Relation, RuntimeError> {
        Self::compute(self.lookup(version, view)?, &self.physical)
    }

    fn all_views(&self, physical: &Instance) -> Result<BTreeMap<String, Relation>, RuntimeError> {
        let mut out = BTreeMap::new();
        for ver in &self.versions {
            for v in &ver.views {
                out.insert(
                    format!("{}.{}", ver.id, v.name),
                    Self::compute(v, physical)?,
                );
            }
        }
        Ok(out)
    }

    /// Applies `delta` to a view and propagates it to the physical store.
    ///
    /// If the recomputed view differs from the requested state the store is
    /// left untouched and a [`RuntimeError::PropagationFault`] is returned.
    pub fn update_view(
        &mut self,
        version: &str,
        view: &str,
        delta: &Delta,
    ) -> Result<PropagationRecord, RuntimeError> {
        let v = self.lookup(version, view)?;
        let current = Self::compute(v, &self.physical)?;
        let view_delta = normalize_delta(&current, delta)?;
        let target = apply_delta(&current, &view_delta)?;
        let pred = v.derivation.view.clone();

        let mut input = self.physical.clone();
        input.insert(pred.clone(), target.clone());
        let mut deltas = v.putdelta.run_derived(&input)?;
        if let Some(undef) = &v.undef {
            for (p, r) in undef.run_derived(&input)?.iter() {
                deltas.insert(p.clone(), r.clone());
            }
        }

        let mut physical = self.physical.clone();
        let mut source_deltas = BTreeMap::new();
        let mut aux_deltas = BTreeMap::new();
        let touched: Vec<PredicateRef> = deltas
            .predicates()
            .filter_map(|p| p.flavor.delta_target().map(|(f, _)| p.with_flavor(f)))
            .collect();
        for target_pred in touched {
            if source_deltas.contains_key(&target_pred.to_string())
                || aux_deltas.contains_key(&target_pred.to_string())
            {
                continue;
            }
            let (ins, del) = match target_pred.flavor {
                Flavor::Aux => (Flavor::AuxInsert, Flavor::AuxDelete),
                _ => (Flavor::Insert, Flavor::Delete),
            };
            let arity = physical.get(&target_pred).map(Relation::arity).unwrap_or(0);
            let side = |f: Flavor| {
                deltas
                    .get(&target_pred.with_flavor(f))
                    .cloned()
                    .unwrap_or_else(|| Relation::new(arity))
            };
            let d = Delta::new(side(ins), side(del))?;
            let rel = physical
                .get_mut(&target_pred)
                .expect("deltas only target registered relations");
            *rel = apply_delta(rel, &d)?;
            if target_pred.flavor == Flavor::Aux {
                aux_deltas.insert(target_pred.to_string(), d);
            } else {
                source_deltas.insert(target_pred.to_string(), d);
            }
        }

        let observed = Self::compute(self.lookup(version, view)?, &physical)?;
        if observed != target {
            return Err(RuntimeError::PropagationFault {
                version: version.to_string(),
                view: view.to_string(),
                expected: target,
                observed,
            });
        }
        let before = self.all_views(&self.physical)?;
        let after = self.all_views(&physical)?;
        self.physical = physical;
        Ok(PropagationRecord {
            version: version.to_string(),
            view: view.to_string(),
            view_delta,
            source_deltas,
            aux_deltas,
            before,
            after,
        })
    }

    /// Replaces a view's state wholesale, as the delta to reach `state`.
    pub fn set_view(
        &mut self,
        version: &str,
        view: &str,
        state: &Relation,
    ) -> Result<PropagationRecord, RuntimeError> {
        let current = self.query_view(version, view)?;
        let d = diff(&current, state)?;
        self.update_view(version, view, &d)
    }

    /// A text dump of every physical relation and every view, one block per
    /// relation with tuples in lexicographic order.
    pub fn snapshot(&self) -> Result<String, RuntimeError> {
        let mut out = String::new();
        let block = |out: &mut String, label: &str, columns: &[String], rel: &Relation| {
            let _ = writeln!(out, "{label}({})", columns.join(", "));
            for t in rel.iter() {
                let _ = writeln!(out, "  {t}");
            }
        };
        for (p, rel) in self.physical.iter() {
            block(&mut out, &format!("physical {p}"), &self.columns[p], rel);
        }
        for ver in &self.versions {
            for v in &ver.views {
                let rel = Self::compute(v, &self.physical)?;
                block(
                    &mut out,
                    &format!("{} {}", ver.id, v.name),
                    &v.columns,
                    &rel,
                );
            }
        }
        Ok(out)
    }
}
