//! Derivation of the forward transformation and its totality completion from
//! a user-written `putdelta`.
//!
//! Four steps, each a pure function:
//!
//! 1. `putdelta` → `get`, checked well-behaved over a bounded universe;
//! 2. `putdelta` → `putdelta'`, by unfolding the view into `v_cur`, `+v`, `-v`;
//! 3. `putdelta'` and `get` → `undef`, which routes updates `get` cannot
//!    reproduce into an auxiliary relation `v_ud`;
//! 4. `get` and `undef` → `get'`, checked total over joint `(s, v_ud)` states.
//!
//! Only the selection family is supported: every `putdelta` rule has a delta
//! head on a source, exactly one view literal, at most one literal on the same
//! source, and integer comparisons, with all atoms over the head's variables.

use std::collections::BTreeMap;
use std::fmt;

use thiserror::Error;

use crate::datalog::{
    parse_program, simplify, unfold, Atom, DatalogError, Declaration, Flavor, Literal,
    PredicateRef, Program, Role, Rule, Term, Value,
};
use crate::verify::{self, Universe, VerificationReport, VerifyError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Step {
    Get,
    PutdeltaPrime,
    Undef,
    GetPrime,
}

impl Step {
    pub fn number(self) -> u8 {
        match self {
            Step::Get => 1,
            Step::PutdeltaPrime => 2,
            Step::Undef => 3,
            Step::GetPrime => 4,
        }
    }
}

impl fmt::Display for Step {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "step {}", self.number())
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DeriveError {
    #[error("invalid spec: {0}")]
    Spec(DatalogError),
    #[error("fragment violation: step 1: {reason}: `{rule}`")]
    Fragment { rule: String, reason: String },
    #[error("verification failure: {step}: {report}")]
    Rejected {
        step: Step,
        report: Box<VerificationReport>,
    },
    #[error("guard extraction failure: step 3: no rule of putdelta' reads `+{view}` or `-{view}`")]
    Guard { view: String },
    #[error("{step}: {source}")]
    Program { step: Step, source: DatalogError },
    #[error("{step}: {source}")]
    Verify { step: Step, source: VerifyError },
}

impl DeriveError {
    /// The pipeline step that failed; `None` for an unparsable spec.
    pub fn step(&self) -> Option<Step> {
        match self {
            DeriveError::Spec(_) => None,
            DeriveError::Fragment { .. } => Some(Step::Get),
            DeriveError::Guard { .. } => Some(Step::Undef),
            DeriveError::Rejected { step, .. }
            | DeriveError::Program { step, .. }
            | DeriveError::Verify { step, .. } => Some(*step),
        }
    }

    /// The first failing verification report, if that is why derivation
    /// stopped.
    pub fn report(&self) -> Option<&VerificationReport> {
        match self {
            DeriveError::Rejected { report, .. } => Some(report),
            _ => None,
        }
    }
}

fn at(step: Step) -> impl Fn(DatalogError) -> DeriveError {
    move |source| DeriveError::Program { step, source }
}

fn verifying(step: Step) -> impl Fn(VerifyError) -> DeriveError {
    move |source| DeriveError::Verify { step, source }
}

/// A disjunction of conjunctions of comparison literals, over a view's
/// canonical variables. No disjuncts is `false`; an empty disjunct is `true`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Guard {
    disjuncts: Vec<Vec<Literal>>,
}

impl Guard {
    pub fn new(disjuncts: Vec<Vec<Literal>>) -> Self {
        let mut out: Vec<Vec<Literal>> = Vec::new();
        for d in disjuncts {
            if !out.contains(&d) {
                out.push(d);
            }
        }
        Guard { disjuncts: out }
    }

    pub fn disjuncts(&self) -> &[Vec<Literal>] {
        &self.disjuncts
    }

    pub fn is_true(&self) -> bool {
        self.disjuncts.iter().any(Vec::is_empty)
    }

    pub fn is_false(&self) -> bool {
        self.disjuncts.is_empty()
    }

    /// `not C` in disjunctive form: one conjunction per way of picking a
    /// negated literal from every disjunct.
    pub fn negation(&self) -> Vec<Vec<Literal>> {
        let mut out: Vec<Vec<Literal>> = vec![Vec::new()];
        for d in &self.disjuncts {
            let mut next = Vec::new();
            for prefix in &out {
                for l in d {
                    let mut c = prefix.clone();
                    let n = l.negated();
                    if !c.contains(&n) {
                        c.push(n);
                    }
                    next.push(c);
                }
            }
            out = next;
        }
        out
    }
}

impl fmt::Display for Guard {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_false() {
            return f.write_str("false");
        }
        let parts: Vec<String> = self
            .disjuncts
            .iter()
            .map(|d| {
                if d.is_empty() {
                    "true".to_string()
                } else {
                    d.iter()
                        .map(|l| l.to_string())
                        .collect::<Vec<_>>()
                        .join(", ")
                }
            })
            .collect();
        f.write_str(&parts.join(" ; "))
    }
}

/// User input: source and view declarations plus `putdelta` rules.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BxSpec {
    program: Program,
    /// Per view, in declaration order: the source it writes and its rules.
    views: Vec<SpecView>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
struct SpecView {
    view: Declaration,
    source: Option<Declaration>,
    rules: Vec<Rule>,
    vars: Vec<String>,
}

impl BxSpec {
    pub fn parse(text: &str) -> Result<Self, DeriveError> {
        BxSpec::new(parse_program(text).map_err(DeriveError::Spec)?)
    }

    pub fn new(program: Program) -> Result<Self, DeriveError> {
        let mut views: Vec<SpecView> = program
            .declared(Role::View)
            .map(|d| SpecView {
                view: d.clone(),
                source: None,
                rules: Vec::new(),
                vars: Vec::new(),
            })
            .collect();
        for d in program.declarations() {
            if d.pred.flavor != Flavor::Base {
                return Err(fragment(
                    &d.to_string(),
                    "declarations must name plain relations",
                ));
            }
        }
        for rule in program.rules() {
            let (view, source) = check_rule(&program, rule)?;
            let entry = views
                .iter_mut()
                .find(|v| v.view.pred == view)
                .expect("checked as a declared view");
            match &entry.source {
                Some(s) if s.pred != source => {
                    return Err(fragment(
                        &rule.to_string(),
                        "a view may only write one source",
                    ))
                }
                Some(_) => {}
                None => {
                    let decl = program.declaration(&source).expect("declared").clone();
                    if decl.arity != entry.view.arity {
                        return Err(fragment(
                            &rule.to_string(),
                            "view and source must have the same arity",
                        ));
                    }
                    entry.source = Some(decl);
                    entry.vars = head_vars(rule);
                }
            }
            let canon = rename_head(rule, &entry.vars);
            entry.rules.push(canon);
        }
        Ok(BxSpec { program, views })
    }

    pub fn program(&self) -> &Program {
        &self.program
    }

    /// The `putdelta` rules exactly as written.
    pub fn putdelta(&self) -> &Program {
        &self.program
    }

    pub fn sources(&self) -> impl Iterator<Item = &Declaration> {
        self.program.declared(Role::Source)
    }

    pub fn views(&self) -> impl Iterator<Item = &Declaration> {
        self.views.iter().map(|v| &v.view)
    }

    fn view(&self, pred: &PredicateRef) -> &SpecView {
        self.views
            .iter()
            .find(|v| &v.view.pred == pred)
            .expect("declared view")
    }

    /// The guard under which updates to `view` reach its source: the
    /// comparisons of `+s` rules that read the view positively, or failing
    /// that of `-s` rules that read it negatively.
    pub fn guard(&self, view: &PredicateRef) -> Guard {
        let v = self.view(view);
        let pick = |flavor: Flavor, positive: bool| -> Vec<Vec<Literal>> {
            v.rules
                .iter()
                .filter(|r| r.head.pred.flavor == flavor)
                .filter(|r| {
                    r.body.iter().any(|l| {
                        l.atom().is_some_and(|a| &a.pred == view) && l.is_positive() == positive
                    })
                })
                .map(|r| {
                    r.body
                        .iter()
                        .filter(|l| matches!(l, Literal::Cmp { .. }))
                        .cloned()
                        .collect()
                })
                .collect()
        };
        let from_insert = pick(Flavor::Insert, true);
        if !from_insert.is_empty() {
            return Guard::new(from_insert);
        }
        Guard::new(pick(Flavor::Delete, false))
    }

    /// Declarations of `view` and the source it writes.
    fn declarations_for(&self, view: &PredicateRef) -> Vec<Declaration> {
        let v = self.view(view);
        v.source.iter().cloned().chain([v.view.clone()]).collect()
    }

    /// Canonical variables of a view: the head variables of its first rule,
    /// or `X1..Xn` if it has none.
    fn vars(&self, view: &PredicateRef) -> Vec<String> {
        let v = self.view(view);
        if v.vars.is_empty() {
            (1..=v.view.arity).map(|i| format!("X{i}")).collect()
        } else {
            v.vars.clone()
        }
    }

    /// The `putdelta` rules that read `view`, with that view's declarations.
    pub fn putdelta_for(&self, view: &PredicateRef) -> Program {
        Program::new(self.declarations_for(view), self.view(view).rules.clone())
            .expect("subset of a valid program")
    }
}

fn fragment(rule: &str, reason: &str) -> DeriveError {
    DeriveError::Fragment {
        rule: rule.to_string(),
        reason: reason.to_string(),
    }
}

fn head_vars(rule: &Rule) -> Vec<String> {
    rule.head
        .args
        .iter()
        .map(|t| t.as_var().expect("checked").to_string())
        .collect()
}

fn rename_head(rule: &Rule, to: &[String]) -> Rule {
    let subst: BTreeMap<String, Term> = head_vars(rule)
        .into_iter()
        .zip(to)
        .map(|(a, b)| (a, Term::var(b.clone())))
        .collect();
    rule.apply(&subst)
}

/// Checks one `putdelta` rule against the fragment; returns the view it reads
/// and the source it writes.
fn check_rule(program: &Program, rule: &Rule) -> Result<(PredicateRef, PredicateRef), DeriveError> {
    let text = rule.to_string();
    let bad = |reason: &str| fragment(&text, reason);
    let head = &rule.head.pred;
    if !head.flavor.is_delta() || matches!(head.flavor, Flavor::AuxInsert | Flavor::AuxDelete) {
        return Err(bad("rule heads must be `+s` or `-s` for a declared source"));
    }
    let source = head.with_flavor(Flavor::Base);
    if program.declaration(&source).map(|d| d.role) != Some(Role::Source) {
        return Err(bad("rule heads must be `+s` or `-s` for a declared source"));
    }
    let vars: Vec<&str> = rule.head.args.iter().filter_map(Term::as_var).collect();
    let mut sorted = vars.clone();
    sorted.sort_unstable();
    sorted.dedup();
    if vars.len() != rule.head.args.len() || sorted.len() != vars.len() {
        return Err(bad("rule heads must have distinct variables as arguments"));
    }
    let mut view = None;
    let mut source_seen = false;
    for l in &rule.body {
        match l {
            Literal::Rel { atom, .. } => {
                if atom.args != rule.head.args {
                    return Err(bad("atoms must range over exactly the head's variables"));
                }
                if atom.pred == source {
                    if source_seen {
                        return Err(bad("at most one source literal per rule"));
                    }
                    source_seen = true;
                } else if atom.pred.flavor == Flavor::Base
                    && program.declaration(&atom.pred).map(|d| d.role) == Some(Role::View)
                {
                    if view.is_some() {
                        return Err(bad("at most one view literal per rule"));
                    }
                    view = Some(atom.pred.clone());
                } else {
                    return Err(bad(
                        "only the written source and one declared view may appear in a body",
                    ));
                }
            }
            Literal::Cmp { cmp, .. } => {
                for t in [&cmp.left, &cmp.right] {
                    if matches!(t, Term::Const(Value::Str(_))) {
                        return Err(bad("comparisons must be over integers"));
                    }
                }
            }
        }
    }
    match view {
        Some(v) => Ok((v, source)),
        None => Err(bad("every rule must read exactly one view")),
    }
}

/// Everything derivation produces for one view.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ViewDerivation {
    pub view: PredicateRef,
    pub source: PredicateRef,
    pub guard: Guard,
    /// The user's `putdelta` restricted to this view.
    pub putdelta: Program,
    pub get: Program,
    pub putdelta_prime: Program,
    pub undef: Program,
    pub get_prime: Program,
}

impl ViewDerivation {
    pub fn aux(&self) -> PredicateRef {
        self.view.with_flavor(Flavor::Aux)
    }

    /// Whether this view keeps unsynchronized updates in `v_ud`.
    pub fn has_aux(&self) -> bool {
        !self.undef.is_empty()
    }
}

/// The pipeline output, per view and merged.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DerivedBx {
    views: Vec<ViewDerivation>,
    get: Program,
    putdelta: Program,
    putdelta_prime: Program,
    undef: Program,
    get_prime: Program,
}

impl DerivedBx {
    pub fn new(views: Vec<ViewDerivation>) -> Result<Self, DatalogError> {
        let merge = |f: &dyn Fn(&ViewDerivation) -> &Program| -> Result<Program, DatalogError> {
            views
                .iter()
                .try_fold(Program::empty(), |acc, v| acc.union(f(v)))
        };
        Ok(DerivedBx {
            get: merge(&|v| &v.get)?,
            putdelta: merge(&|v| &v.putdelta)?,
            putdelta_prime: merge(&|v| &v.putdelta_prime)?,
            undef: merge(&|v| &v.undef)?,
            get_prime: merge(&|v| &v.get_prime)?,
            views,
        })
    }

    /// Rebuilds per-view derivations from stored programs, e.g. derived files
    /// that may have been edited. `putdelta'` is recomputed from the spec.
    pub fn from_programs(
        spec: &BxSpec,
        get: &Program,
        undef: &Program,
        get_prime: &Program,
    ) -> Result<Self, DeriveError> {
        let mut views = Vec::new();
        for decl in spec.views() {
            let view = decl.pred.clone();
            let aux = view.with_flavor(Flavor::Aux);
            let keep = |p: &Program, pick: &dyn Fn(&Rule) -> bool| {
                let rules: Vec<Rule> = p.rules().iter().filter(|r| pick(r)).cloned().collect();
                let decls = p
                    .declarations()
                    .iter()
                    .filter(|d| {
                        d.pred.name == view.name
                            || rules
                                .iter()
                                .any(|r| r.dependencies().any(|(q, _)| *q == d.pred))
                    })
                    .cloned()
                    .collect();
                Program::new(decls, rules)
            };
            let view_get = keep(get, &|r| r.head.pred == view).map_err(DeriveError::Spec)?;
            let view_undef = keep(undef, &|r| {
                r.head.pred.name == view.name && r.head.pred.flavor.is_delta()
            })
            .map_err(DeriveError::Spec)?;
            let view_get_prime =
                keep(get_prime, &|r| r.head.pred == view).map_err(DeriveError::Spec)?;
            let source = spec.view(&view).source.as_ref().map(|d| d.pred.clone());
            views.push(ViewDerivation {
                guard: guard_from_get(&view_get, &view, &spec.vars(&view)),
                source: source.unwrap_or_else(|| aux.clone()),
                putdelta: spec.putdelta_for(&view),
                putdelta_prime: derive_putdelta_prime_for(spec, &view)?,
                get: view_get,
                undef: view_undef,
                get_prime: view_get_prime,
                view,
            });
        }
        DerivedBx::new(views).map_err(DeriveError::Spec)
    }

    pub fn views(&self) -> &[ViewDerivation] {
        &self.views
    }

    pub fn view(&self, name: &str) -> Option<&ViewDerivation> {
        self.views.iter().find(|v| v.view.name == name)
    }

    pub fn get(&self) -> &Program {
        &self.get
    }

    pub fn putdelta(&self) -> &Program {
        &self.putdelta
    }

    pub fn putdelta_prime(&self) -> &Program {
        &self.putdelta_prime
    }

    pub fn undef(&self) -> &Program {
        &self.undef
    }

    pub fn get_prime(&self) -> &Program {
        &self.get_prime
    }

    /// Declarations of the auxiliary relations, one per view that needs one.
    pub fn aux_declarations(&self) -> Vec<Declaration> {
        self.views
            .iter()
            .filter(|v| v.has_aux())
            .filter_map(|v| v.get_prime.declaration(&v.aux()).cloned())
            .collect()
    }
}

/// Bounds for the two verification passes.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DeriveOptions {
    /// Checks `get` against `putdelta` (step 1).
    pub universe: Universe,
    /// Checks `get'` against `putdelta` and `undef` over `(s, v_ud)` (step 4).
    pub joint: Universe,
}

impl Default for DeriveOptions {
    /// [`Universe::default`] and [`Universe::joint_default`], with a single
    /// key value for columns that no comparison constrains.
    fn default() -> Self {
        let keys = vec!["k1".to_string()];
        DeriveOptions {
            universe: Universe::default().with_keys(keys.clone()),
            joint: Universe::joint_default().with_keys(keys),
        }
    }
}

fn atom(pred: PredicateRef, vars: &[String]) -> Atom {
    Atom::new(pred, vars.iter().map(Term::var).collect())
}

fn rule(head: Atom, body: Vec<Literal>) -> Rule {
    Rule::new(head, body)
}

fn guard_from_get(get: &Program, view: &PredicateRef, vars: &[String]) -> Guard {
    Guard::new(
        get.rules_for(view)
            .map(|r| {
                let r = rename_head(r, vars);
                r.body
                    .into_iter()
                    .filter(|l| matches!(l, Literal::Cmp { .. }))
                    .collect()
            })
            .collect(),
    )
}

fn get_rules(
    view: &PredicateRef,
    source: &PredicateRef,
    vars: &[String],
    guard: &Guard,
) -> Vec<Rule> {
    guard
        .disjuncts()
        .iter()
        .map(|d| {
            let mut body = vec![Literal::pos(atom(source.clone(), vars))];
            body.extend(d.iter().cloned());
            rule(atom(view.clone(), vars), body)
        })
        .collect()
}

fn get_for(spec: &BxSpec, view: &PredicateRef) -> Result<Program, DeriveError> {
    let v = spec.view(view);
    let rules = match &v.source {
        Some(s) => get_rules(view, &s.pred, &spec.vars(view), &spec.guard(view)),
        None => Vec::new(),
    };
    Program::new(spec.declarations_for(view), rules)
        .and_then(|p| simplify(&p))
        .map_err(at(Step::Get))
}

fn reject(step: Step, report: VerificationReport) -> Result<(), DeriveError> {
    if report.passed() {
        Ok(())
    } else {
        Err(DeriveError::Rejected {
            step,
            report: Box::new(report),
        })
    }
}

/// Step 1: `v(x) :- s(x), C.` per view and guard disjunct, accepted only if
/// GetPut and PutGet hold over `bound`.
pub fn derive_get(spec: &BxSpec, bound: &Universe) -> Result<Program, DeriveError> {
    let mut out = Program::empty();
    for decl in spec.views() {
        let view = &decl.pred;
        let get = get_for(spec, view)?;
        let putdelta = spec.putdelta_for(view);
        if !putdelta.is_empty() && !get.is_empty() {
            let v = verifying(Step::Get);
            reject(
                Step::Get,
                verify::check_getput(&get, &putdelta, bound).map_err(&v)?,
            )?;
            reject(
                Step::Get,
                verify::check_putget(&get, &putdelta, bound).map_err(&v)?,
            )?;
        }
        out = out.union(&get).map_err(at(Step::Get))?;
    }
    Ok(out)
}

fn derive_putdelta_prime_for(spec: &BxSpec, view: &PredicateRef) -> Result<Program, DeriveError> {
    let vars = spec.vars(view);
    let cur = view.with_flavor(Flavor::Current);
    let plus = view.with_flavor(Flavor::Insert);
    let minus = view.with_flavor(Flavor::Delete);
    let definitions = Program::new(
        Vec::new(),
        vec![
            rule(
                atom(view.clone(), &vars),
                vec![
                    Literal::pos(atom(cur.clone(), &vars)),
                    Literal::neg(atom(minus, &vars)),
                ],
            ),
            rule(
                atom(view.clone(), &vars),
                vec![Literal::pos(atom(plus, &vars))],
            ),
        ],
    )
    .map_err(at(Step::PutdeltaPrime))?;
    let putdelta = spec.putdelta_for(view);
    let unfolded = unfold(&putdelta, &definitions).map_err(at(Step::PutdeltaPrime))?;
    let mut rules = unfolded.rules().to_vec();
    if let Some(s) = &spec.view(view).source {
        rules.extend(get_rules(&cur, &s.pred, &vars, &spec.guard(view)));
    }
    let decls: Vec<Declaration> = spec.view(view).source.iter().cloned().collect();
    Program::new(decls, rules)
        .and_then(|p| simplify(&p))
        .map_err(at(Step::PutdeltaPrime))
}

/// Step 2: the `putdelta` with each view replaced by `v_cur` minus `-v` plus
/// `+v`, followed by the definition of `v_cur` as the current `get`.
pub fn derive_putdelta_prime(spec: &BxSpec) -> Result<Program, DeriveError> {
    let mut out = Program::empty();
    for decl in spec.views() {
        let p = derive_putdelta_prime_for(spec, &decl.pred)?;
        out = out.union(&p).map_err(at(Step::PutdeltaPrime))?;
    }
    Ok(out)
}

fn aux_declaration(view: &Declaration) -> Declaration {
    Declaration {
        role: Role::Source,
        pred: view.pred.with_flavor(Flavor::Aux),
        arity: view.arity,
        attributes: view.attributes.clone(),
    }
}

fn head_vars_of(get: &Program, view: &PredicateRef, arity: usize) -> Vec<String> {
    get.rules_for(view)
        .next()
        .map(head_vars)
        .unwrap_or_else(|| (1..=arity).map(|i| format!("X{i}")).collect())
}

fn reads_view_delta(putdelta_prime: &Program, view: &PredicateRef) -> bool {
    let plus = view.with_flavor(Flavor::Insert);
    let minus = view.with_flavor(Flavor::Delete);
    putdelta_prime
        .rules()
        .iter()
        .any(|r| r.dependencies().any(|(p, _)| *p == plus || *p == minus))
}

/// Step 3, in effective-delta form: per view with guard `C` read from `get`,
/// `+v_ud(x) :- not v_ud(x), v(x), not C.` and
/// `-v_ud(x) :- v_ud(x), not v(x), not C.` A true guard leaves no rules.
pub fn derive_undef(putdelta_prime: &Program, get: &Program) -> Result<Program, DeriveError> {
    let mut out = Program::empty();
    for decl in get.declared(Role::View) {
        let view = &decl.pred;
        if !reads_view_delta(putdelta_prime, view) {
            return Err(DeriveError::Guard {
                view: view.to_string(),
            });
        }
        let vars = head_vars_of(get, view, decl.arity);
        let guard = guard_from_get(get, view, &vars);
        let aux = view.with_flavor(Flavor::Aux);
        let mut rules = Vec::new();
        for (head, present) in [(Flavor::AuxInsert, false), (Flavor::AuxDelete, true)] {
            for choice in guard.negation() {
                let aux_lit = Literal::pos(atom(aux.clone(), &vars));
                let view_lit = Literal::pos(atom(view.clone(), &vars));
                let mut body = if present {
                    vec![aux_lit, view_lit.negated()]
                } else {
                    vec![aux_lit.negated(), view_lit]
                };
                body.extend(choice);
                rules.push(rule(atom(view.with_flavor(head), &vars), body));
            }
        }
        let decls = if rules.is_empty() {
            Vec::new()
        } else {
            vec![aux_declaration(decl), decl.clone()]
        };
        let p = Program::new(decls, rules)
            .and_then(|p| simplify(&p))
            .map_err(at(Step::Undef))?;
        out = out.union(&p).map_err(at(Step::Undef))?;
    }
    Ok(out)
}

/// The delta-based presentation of step 3: `+v_ud(x) :- +v(x), not C.` and
/// `-v_ud(x) :- -v(x), not C.` For effective view deltas it agrees with
/// [`derive_undef`].
pub fn undef_method_form(get: &Program) -> Result<Program, DeriveError> {
    let mut rules = Vec::new();
    for decl in get.declared(Role::View) {
        let view = &decl.pred;
        let vars = head_vars_of(get, view, decl.arity);
        let guard = guard_from_get(get, view, &vars);
        for (head, delta) in [
            (Flavor::AuxInsert, Flavor::Insert),
            (Flavor::AuxDelete, Flavor::Delete),
        ] {
            for choice in guard.negation() {
                let mut body = vec![Literal::pos(atom(view.with_flavor(delta), &vars))];
                body.extend(choice);
                rules.push(rule(atom(view.with_flavor(head), &vars), body));
            }
        }
    }
    Program::new(Vec::new(), rules)
        .and_then(|p| simplify(&p))
        .map_err(at(Step::Undef))
}

/// The general definition of `undef` over `putdelta'`: `pm_s` as the union of
/// `+s` and `-s`, and `+v_ud`/`-v_ud` as the view delta outside `pm_s`.
pub fn undef_by_definition(
    putdelta_prime: &Program,
    spec: &BxSpec,
) -> Result<Program, DeriveError> {
    let mut rules = putdelta_prime.rules().to_vec();
    for decl in spec.views() {
        let view = &decl.pred;
        let Some(source) = &spec.view(view).source else {
            continue;
        };
        let vars = spec.vars(view);
        let pm = source.pred.with_flavor(Flavor::PlusMinus);
        for f in [Flavor::Insert, Flavor::Delete] {
            rules.push(rule(
                atom(pm.clone(), &vars),
                vec![Literal::pos(atom(source.pred.with_flavor(f), &vars))],
            ));
        }
        for (head, delta) in [
            (Flavor::AuxInsert, Flavor::Insert),
            (Flavor::AuxDelete, Flavor::Delete),
        ] {
            rules.push(rule(
                atom(view.with_flavor(head), &vars),
                vec![
                    Literal::pos(atom(view.with_flavor(delta), &vars)),
                    Literal::neg(atom(pm.clone(), &vars)),
                ],
            ));
        }
    }
    Program::new(putdelta_prime.declarations().to_vec(), rules).map_err(at(Step::Undef))
}

fn get_prime_for(
    spec: &BxSpec,
    view: &PredicateRef,
    get: &Program,
    undef: &Program,
) -> Result<Program, DeriveError> {
    let decl = spec.view(view).view.clone();
    let vars = head_vars_of(get, view, decl.arity);
    let mut rules: Vec<Rule> = get.rules_for(view).cloned().collect();
    let mut decls = spec.declarations_for(view);
    let aux = view.with_flavor(Flavor::Aux);
    let has_aux = undef.rules().iter().any(|r| r.head.pred.name == view.name);
    if has_aux {
        let guard = guard_from_get(get, view, &vars);
        for choice in guard.negation() {
            let mut body = vec![Literal::pos(atom(aux.clone(), &vars))];
            body.extend(choice);
            rules.push(rule(atom(view.clone(), &vars), body));
        }
        decls.insert(decls.len() - 1, aux_declaration(&decl));
    }
    Program::new(decls, rules)
        .and_then(|p| simplify(&p))
        .map_err(at(Step::GetPrime))
}

/// Step 4: `get` plus `v(x) :- v_ud(x), not C.` per view, accepted only if
/// the total backward transformation is well-behaved and total over `joint`.
pub fn derive_get_prime(
    spec: &BxSpec,
    get: &Program,
    undef: &Program,
    joint: &Universe,
) -> Result<Program, DeriveError> {
    let derived = assemble(spec, get, undef)?;
    let report = verify::check_totality(&derived, joint).map_err(verifying(Step::GetPrime))?;
    reject(Step::GetPrime, report)?;
    Ok(derived.get_prime)
}

fn assemble(spec: &BxSpec, get: &Program, undef: &Program) -> Result<DerivedBx, DeriveError> {
    let mut views = Vec::new();
    for decl in spec.views() {
        let view = &decl.pred;
        let pick = |p: &Program| -> Result<Program, DeriveError> {
            let rules: Vec<Rule> = p
                .rules()
                .iter()
                .filter(|r| r.head.pred.name == view.name)
                .cloned()
                .collect();
            let decls = if rules.is_empty() {
                Vec::new()
            } else {
                p.declarations()
                    .iter()
                    .filter(|d| {
                        rules.iter().any(|r| {
                            r.head.pred == d.pred || r.dependencies().any(|(q, _)| *q == d.pred)
                        })
                    })
                    .cloned()
                    .collect()
            };
            Program::new(decls, rules).map_err(at(Step::GetPrime))
        };
        let view_get = pick(get)?;
        let view_undef = pick(undef)?;
        let view_get_prime = get_prime_for(spec, view, &view_get, &view_undef)?;
        let vars = spec.vars(view);
        views.push(ViewDerivation {
            view: view.clone(),
            source: spec
                .view(view)
                .source
                .as_ref()
                .map(|d| d.pred.clone())
                .unwrap_or_else(|| view.with_flavor(Flavor::Aux)),
            guard: guard_from_get(&view_get, view, &vars),
            putdelta: spec.putdelta_for(view),
            putdelta_prime: derive_putdelta_prime_for(spec, view)?,
            get: view_get,
            undef: view_undef,
            get_prime: view_get_prime,
        });
    }
    DerivedBx::new(views).map_err(at(Step::GetPrime))
}

/// All four steps. Fails with the first failing step's diagnostics.
pub fn derive_all(spec: &BxSpec, options: &DeriveOptions) -> Result<DerivedBx, DeriveError> {
    let get = derive_get(spec, &options.universe)?;
    let putdelta_prime = derive_putdelta_prime(spec)?;
    let undef = derive_undef(&putdelta_prime, &get)?;
    derive_get_prime(spec, &get, &undef, &options.joint)?;
    assemble(spec, &get, &undef)
}

/// Steps 1 to 4 without the verification passes, for inspecting or
/// verifying a derivation that `derive_all` would reject.
pub fn derive_unchecked(spec: &BxSpec) -> Result<DerivedBx, DeriveError> {
    let mut get = Program::empty();
    for decl in spec.views() {
        get = get
            .union(&get_for(spec, &decl.pred)?)
            .map_err(at(Step::Get))?;
    }
    let putdelta_prime = derive_putdelta_prime(spec)?;
    let undef = derive_undef(&putdelta_prime, &get)?;
    assemble(spec, &get, &undef)
}
