//! Bounded brute-force checks of the round-tripping laws, totality and range
//! membership.
//!
//! A forward program computes views from a source instance. A backward program
//! reads the source and the *updated* view and derives delta relations
//! (`+s`/`-s`, and `+v_ud`/`-v_ud` for the total transformation); applying
//! those deltas yields the new source. Every source instance over a
//! [`Universe`] is enumerated, so a pass is a statement about that bound only.

mod report;
mod universe;

use std::collections::BTreeSet;

use thiserror::Error;

use crate::datalog::{DatalogError, Instance, PredicateRef, Prepared, Program, Relation};
use crate::derive::{DerivedBx, ViewDerivation};

pub use report::{Counterexample, Law, Outcome, VerificationReport};
pub use universe::{numeric_columns, Mode, Universe};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum VerifyError {
    #[error("invalid universe: {0}")]
    Universe(String),
    #[error("evaluation failed during verification: {0}")]
    Eval(#[from] DatalogError),
    #[error("{0}")]
    Shape(String),
}

/// A forward/backward pair prepared for repeated evaluation.
struct Harness {
    forward: Prepared,
    backward: Prepared,
    sources: Vec<PredicateRef>,
    source_states: Vec<Vec<Relation>>,
    views: Vec<PredicateRef>,
    view_columns: Vec<Vec<bool>>,
    universe: Universe,
}

impl Harness {
    fn new(
        forward: &Program,
        backward: &Program,
        universe: &Universe,
    ) -> Result<Self, VerifyError> {
        let f = Prepared::new(forward)?;
        let b = Prepared::new(backward)?;
        let numeric = numeric_columns(&[forward, backward]);
        let arities = forward.arities();
        let columns = |p: &PredicateRef| -> Vec<bool> {
            let arity = arities[p];
            let mut marks = numeric.get(&p.name).cloned().unwrap_or_default();
            marks.resize(arity, false);
            marks
        };
        let sources: Vec<PredicateRef> = f.inputs().cloned().collect();
        let source_states = sources
            .iter()
            .map(|p| universe.relations(&columns(p)))
            .collect();
        let views: Vec<PredicateRef> = f.outputs().cloned().collect();
        let view_columns = views.iter().map(columns).collect();
        let readable: BTreeSet<&PredicateRef> = sources.iter().chain(&views).collect();
        if let Some(p) = b.inputs().find(|p| !readable.contains(p)) {
            return Err(VerifyError::Shape(format!(
                "backward transformation reads `{p}`, which is neither a source nor a view"
            )));
        }
        Ok(Harness {
            forward: f,
            backward: b,
            sources,
            source_states,
            views,
            view_columns,
            universe: universe.clone(),
        })
    }

    fn source_count(&self) -> usize {
        self.source_states.iter().map(Vec::len).product()
    }

    /// The `i`-th source instance in mixed-radix order (last relation fastest).
    fn source(&self, mut i: usize) -> Instance {
        let mut picks = vec![0; self.sources.len()];
        for k in (0..self.sources.len()).rev() {
            let n = self.source_states[k].len();
            picks[k] = i % n;
            i /= n;
        }
        self.sources
            .iter()
            .zip(picks)
            .enumerate()
            .map(|(k, (p, j))| (p.clone(), self.source_states[k][j].clone()))
            .collect()
    }

    fn get(&self, source: &Instance) -> Result<Instance, VerifyError> {
        Ok(self.forward.run_derived(source)?)
    }

    /// Runs the backward program; returns the delta relations and the updated
    /// source.
    fn put(&self, source: &Instance, view: &Instance) -> Result<(Instance, Instance), VerifyError> {
        let derived = self.backward.run_layered(&[view, source])?;
        let mut updated = source.clone();
        let mut deltas = Instance::new();
        for (p, d) in derived.iter() {
            let Some((target, insert)) = p.flavor.delta_target() else {
                continue;
            };
            if let Some(rel) = updated.get_mut(&p.with_flavor(target)) {
                for t in d.iter() {
                    if insert {
                        rel.insert(t.clone())?;
                    } else {
                        rel.remove(t);
                    }
                }
            }
            deltas.insert(p.clone(), d.clone());
        }
        Ok((deltas, updated))
    }

    /// `get(put(s, v)) = v` without collecting the deltas. Only the source
    /// relations a delta touches are copied.
    fn round_trips(&self, source: &Instance, target: &Instance) -> Result<bool, VerifyError> {
        let derived = self.backward.run_layered(&[target, source])?;
        let mut changed = Instance::new();
        for (p, d) in derived.iter() {
            if d.is_empty() {
                continue;
            }
            let Some((flavor, insert)) = p.flavor.delta_target() else {
                continue;
            };
            let q = p.with_flavor(flavor);
            let Some(base) = source.get(&q) else {
                continue;
            };
            if !changed.contains(&q) {
                changed.insert(q.clone(), base.clone());
            }
            let rel = changed.get_mut(&q).expect("just inserted");
            for t in d.iter() {
                if insert {
                    rel.insert(t.clone())?;
                } else {
                    rel.remove(t);
                }
            }
        }
        let observed = self.forward.run_layered(&[&changed, source])?;
        Ok(&observed == target)
    }

    fn getput_failure(&self, source: &Instance) -> Result<Option<Counterexample>, VerifyError> {
        let view = self.get(source)?;
        let (deltas, _) = self.put(source, &view)?;
        if deltas.all_empty() {
            return Ok(None);
        }
        let expected = deltas
            .iter()
            .map(|(p, r)| (p.clone(), Relation::new(r.arity())))
            .collect();
        Ok(Some(Counterexample {
            source: source.clone(),
            view: Some(view),
            observed: deltas,
            expected,
        }))
    }

    fn round_trip_failure(
        &self,
        source: &Instance,
        target: &Instance,
    ) -> Result<Option<Counterexample>, VerifyError> {
        let (_, updated) = self.put(source, target)?;
        let observed = self.get(&updated)?;
        if &observed == target {
            return Ok(None);
        }
        Ok(Some(Counterexample {
            source: source.clone(),
            view: Some(target.clone()),
            observed,
            expected: target.clone(),
        }))
    }

    /// All view instances over the universe.
    fn all_views(&self) -> Vec<Instance> {
        let per_view: Vec<Vec<Relation>> = self
            .view_columns
            .iter()
            .map(|c| self.universe.relations(c))
            .collect();
        let mut out = vec![Instance::new()];
        for (p, rels) in self.views.iter().zip(per_view) {
            out = out
                .into_iter()
                .flat_map(|inst| {
                    rels.iter()
                        .map(|r| inst.clone().with(p.clone(), r.clone()))
                        .collect::<Vec<_>>()
                })
                .collect();
        }
        out
    }

    fn within_universe(&self, view: &Instance) -> bool {
        view.iter()
            .all(|(_, r)| r.len() <= self.universe.max_size())
    }

    /// Image of `get` over every source, restricted to views the universe can
    /// express.
    fn range(&self) -> Result<BTreeSet<Instance>, VerifyError> {
        let mut out = BTreeSet::new();
        for i in 0..self.source_count() {
            let v = self.get(&self.source(i))?;
            if self.within_universe(&v) {
                out.insert(v);
            }
        }
        Ok(out)
    }
}

type FailureCheck<'a> =
    dyn Fn(&Instance, Option<&Instance>) -> Result<Option<Counterexample>, VerifyError> + 'a;

/// Greedily removes tuples from the source and target view while `fails`
/// keeps reporting a failure and `valid` accepts the smaller case.
fn minimize(
    mut source: Instance,
    mut target: Option<Instance>,
    fails: &FailureCheck,
    valid: &dyn Fn(&Instance, Option<&Instance>) -> bool,
) -> Result<Counterexample, VerifyError> {
    let mut current = fails(&source, target.as_ref())?.expect("minimize starts from a failure");
    'outer: loop {
        let candidates = shrink_candidates(&source, target.as_ref());
        for (s, t) in candidates {
            if !valid(&s, t.as_ref()) {
                continue;
            }
            if let Some(c) = fails(&s, t.as_ref())? {
                source = s;
                target = t;
                current = c;
                continue 'outer;
            }
        }
        return Ok(current);
    }
}

fn shrink_candidates(
    source: &Instance,
    target: Option<&Instance>,
) -> Vec<(Instance, Option<Instance>)> {
    let mut out = Vec::new();
    for (p, r) in source.iter() {
        for t in r.iter() {
            let mut s = source.clone();
            s.get_mut(p).expect("present").remove(t);
            out.push((s, target.cloned()));
        }
    }
    if let Some(v) = target {
        for (p, r) in v.iter() {
            for t in r.iter() {
                let mut w = v.clone();
                w.get_mut(p).expect("present").remove(t);
                out.push((source.clone(), Some(w)));
            }
        }
    }
    out
}

fn getput_with(h: &Harness) -> Result<VerificationReport, VerifyError> {
    let indices = h.universe.case_indices(h.source_count());
    for &i in &indices {
        let s = h.source(i);
        if h.getput_failure(&s)?.is_some() {
            let c = minimize(s, None, &|s, _| h.getput_failure(s), &|_, _| true)?;
            return Ok(VerificationReport::fail(
                Law::GetPut,
                indices.len() as u64,
                c,
            ));
        }
    }
    Ok(VerificationReport::pass(Law::GetPut, indices.len() as u64))
}

fn round_trip_with(
    h: &Harness,
    law: Law,
    targets: &[Instance],
    valid_target: &dyn Fn(&Instance) -> bool,
) -> Result<VerificationReport, VerifyError> {
    if targets.is_empty() {
        return Ok(VerificationReport::pass(law, 0));
    }
    let total = h.source_count() * targets.len();
    let indices = h.universe.case_indices(total);
    let mut cached: Option<(usize, Instance)> = None;
    for &i in &indices {
        let si = i / targets.len();
        if cached.as_ref().map(|c| c.0) != Some(si) {
            cached = Some((si, h.source(si)));
        }
        let s = &cached.as_ref().expect("just set").1;
        let v = &targets[i % targets.len()];
        if !h.round_trips(s, v)? {
            let c = minimize(
                s.clone(),
                Some(v.clone()),
                &|s, v| h.round_trip_failure(s, v.expect("target")),
                &|_, v| v.is_some_and(valid_target),
            )?;
            return Ok(VerificationReport::fail(law, indices.len() as u64, c));
        }
    }
    Ok(VerificationReport::pass(law, indices.len() as u64))
}

/// GetPut: for every source `s`, feeding `get(s)` back through `putdelta`
/// produces no source delta.
pub fn check_getput(
    get: &Program,
    putdelta: &Program,
    u: &Universe,
) -> Result<VerificationReport, VerifyError> {
    getput_with(&Harness::new(get, putdelta, u)?)
}

/// PutGet on `range(get)`: for every source `s` and every reachable view `v'`,
/// `get(put(s, v')) = v'`.
pub fn check_putget(
    get: &Program,
    putdelta: &Program,
    u: &Universe,
) -> Result<VerificationReport, VerifyError> {
    let h = Harness::new(get, putdelta, u)?;
    let range = h.range()?;
    let targets: Vec<Instance> = range.iter().cloned().collect();
    round_trip_with(&h, Law::PutGet, &targets, &|v| range.contains(v))
}

/// Whether some source over `u` yields exactly `v` under `get`, which must
/// compute a single view.
pub fn range_member(get: &Program, v: &Relation, u: &Universe) -> Result<bool, VerifyError> {
    let h = Harness::new(get, &Program::empty(), u)?;
    let [view] = h.views.as_slice() else {
        return Err(VerifyError::Shape(format!(
            "range membership needs a single view, found {}",
            h.views.len()
        )));
    };
    let want = Instance::new().with(view.clone(), v.clone());
    for i in 0..h.source_count() {
        if h.get(&h.source(i))? == want {
            return Ok(true);
        }
    }
    Ok(false)
}

/// Range membership of every view in `views`, reported as a law: passes when
/// each one is reachable. Useful for asserting `get(s) ∈ range(get)`.
pub fn check_range_membership(
    get: &Program,
    views: &[Relation],
    u: &Universe,
) -> Result<VerificationReport, VerifyError> {
    let h = Harness::new(get, &Program::empty(), u)?;
    let range = h.range()?;
    let [view] = h.views.as_slice() else {
        return Err(VerifyError::Shape(
            "range membership needs a single view".into(),
        ));
    };
    for v in views {
        let inst = Instance::new().with(view.clone(), v.clone());
        if !range.contains(&inst) {
            return Ok(VerificationReport::fail(
                Law::RangeMembership,
                views.len() as u64,
                Counterexample {
                    source: Instance::new(),
                    view: Some(inst.clone()),
                    observed: Instance::new(),
                    expected: inst,
                },
            ));
        }
    }
    Ok(VerificationReport::pass(
        Law::RangeMembership,
        views.len() as u64,
    ))
}

/// The total backward transformation of one view: `putdelta` plus `undef`.
pub fn total_backward(view: &ViewDerivation) -> Result<Program, VerifyError> {
    Ok(view.putdelta.union(&view.undef)?)
}

fn totality_for_view(
    view: &ViewDerivation,
    u: &Universe,
) -> Result<VerificationReport, VerifyError> {
    let backward = total_backward(view)?;
    let h = Harness::new(&view.get_prime, &backward, u)?;
    let getput = getput_with(&h)?;
    let targets = h.all_views();
    let mut round = round_trip_with(&h, Law::Totality, &targets, &|_| true)?;
    round.cases += getput.cases;
    if round.passed() && !getput.passed() {
        round.outcome = Outcome::Fail;
        round.counterexample = getput.counterexample;
    }
    Ok(round)
}

/// Totality: for every joint physical state `(s, v_ud)` and every view state
/// `v'` over `u` (not only `range(get)`), the total backward transformation
/// followed by `get'` reproduces `v'`; also no-op updates change nothing.
/// Views are checked independently.
pub fn check_totality(
    derived: &DerivedBx,
    u: &Universe,
) -> Result<VerificationReport, VerifyError> {
    let reports = derived
        .views()
        .iter()
        .map(|v| totality_for_view(v, u))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(VerificationReport::combine(Law::Totality, reports))
}

/// GetPut, PutGet (per view, over `u`) and Totality (over `joint`).
pub fn check_derived(
    derived: &DerivedBx,
    u: &Universe,
    joint: &Universe,
) -> Result<Vec<VerificationReport>, VerifyError> {
    let mut getput = Vec::new();
    let mut putget = Vec::new();
    for v in derived.views() {
        getput.push(check_getput(&v.get, &v.putdelta, u)?);
        putget.push(check_putget(&v.get, &v.putdelta, u)?);
    }
    Ok(vec![
        VerificationReport::combine(Law::GetPut, getput),
        VerificationReport::combine(Law::PutGet, putget),
        check_totality(derived, joint)?,
    ])
}

/// Re-runs a counterexample through [`crate::datalog::evaluate`] and returns
/// what the law observes, for checking that reports replay.
pub fn replay(
    law: Law,
    forward: &Program,
    backward: &Program,
    c: &Counterexample,
) -> Result<Instance, VerifyError> {
    use crate::datalog::evaluate;
    let views: Vec<PredicateRef> = forward.defined().into_iter().cloned().collect();
    let apply =
        |source: &Instance, target: &Instance| -> Result<(Instance, Instance), VerifyError> {
            let mut input = source.clone();
            for (p, r) in target.iter() {
                input.insert(p.clone(), r.clone());
            }
            let out = evaluate(backward, &input)?;
            let mut deltas = Instance::new();
            let mut updated = source.clone();
            for p in backward.defined() {
                let Some((flavor, insert)) = p.flavor.delta_target() else {
                    continue;
                };
                let d = out.get(p).expect("derived").clone();
                if let Some(rel) = updated.get_mut(&p.with_flavor(flavor)) {
                    for t in d.iter() {
                        if insert {
                            rel.insert(t.clone())?;
                        } else {
                            rel.remove(t);
                        }
                    }
                }
                deltas.insert(p.clone(), d);
            }
            Ok((deltas, updated))
        };
    match law {
        Law::GetPut => {
            let v = evaluate(forward, &c.source)?.restrict(&views);
            Ok(apply(&c.source, &v)?.0)
        }
        Law::PutGet | Law::Totality => {
            let target = c
                .view
                .as_ref()
                .expect("round-trip counterexamples carry a view");
            if c.observed.predicates().any(|p| p.flavor.is_delta()) {
                // A no-op failure surfaced by the totality check.
                return Ok(apply(&c.source, target)?.0);
            }
            let (_, updated) = apply(&c.source, target)?;
            Ok(evaluate(forward, &updated)?.restrict(&views))
        }
        Law::RangeMembership => Ok(Instance::new()),
    }
}
