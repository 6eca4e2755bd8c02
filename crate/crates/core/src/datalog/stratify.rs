use std::collections::{BTreeMap, BTreeSet};

use super::ast::{PredicateRef, Program};
use super::error::DatalogError;

pub type Stratum = BTreeSet<PredicateRef>;

/// Orders predicates into strata. Stratum 0 holds every predicate without
/// rules; a defined predicate sits one stratum above its highest dependency,
/// so every body literal (positive or negated) refers to an earlier stratum.
/// Recursion of any kind is rejected.
pub fn stratify(program: &Program) -> Result<Vec<Stratum>, DatalogError> {
    let mut deps: BTreeMap<&PredicateRef, BTreeSet<&PredicateRef>> = BTreeMap::new();
    for r in program.rules() {
        let entry = deps.entry(&r.head.pred).or_default();
        for (p, _) in r.dependencies() {
            entry.insert(p);
        }
    }
    let mut all: BTreeSet<&PredicateRef> = deps.keys().copied().collect();
    for ds in deps.values() {
        all.extend(ds.iter().copied());
    }

    let mut level: BTreeMap<&PredicateRef, usize> = BTreeMap::new();
    let mut on_path: Vec<&PredicateRef> = Vec::new();
    for p in &all {
        visit(p, &deps, &mut level, &mut on_path)?;
    }

    let depth = level.values().copied().max().map_or(0, |m| m + 1);
    let mut strata = vec![Stratum::new(); depth];
    for (p, l) in level {
        strata[l].insert(p.clone());
    }
    Ok(strata)
}

fn visit<'a>(
    p: &'a PredicateRef,
    deps: &BTreeMap<&'a PredicateRef, BTreeSet<&'a PredicateRef>>,
    level: &mut BTreeMap<&'a PredicateRef, usize>,
    on_path: &mut Vec<&'a PredicateRef>,
) -> Result<usize, DatalogError> {
    if let Some(&l) = level.get(p) {
        return Ok(l);
    }
    if let Some(pos) = on_path.iter().position(|q| *q == p) {
        let mut cycle: Vec<String> = on_path[pos..].iter().map(|q| q.to_string()).collect();
        cycle.push(p.to_string());
        return Err(DatalogError::Cycle { cycle });
    }
    let l = match deps.get(p) {
        None => 0,
        Some(ds) => {
            on_path.push(p);
            let mut m = 0;
            for d in ds {
                m = m.max(visit(d, deps, level, on_path)? + 1);
            }
            on_path.pop();
            m
        }
    };
    level.insert(p, l);
    Ok(l)
}
