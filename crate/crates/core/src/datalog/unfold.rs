//! Rule unfolding (substituting predicate definitions into rule bodies) and a
//! small simplifier for trivially false or redundant literals.

use std::collections::{BTreeMap, BTreeSet};

use super::ast::{Atom, Literal, Program, Rule, Term};
use super::error::DatalogError;
use super::stratify::stratify;

/// Replaces every body literal whose predicate is defined in `definitions` by
/// the bodies of its defining rules.
///
/// A positive occurrence yields one rule per defining rule, with the
/// definition's local variables renamed apart. A negated occurrence is
/// distributed: `not p` with `p :- a1, a2.` and `p :- b.` becomes the rules
/// `not a1, not b` and `not a2, not b`. That is only sound when each defining
/// rule has distinct variables in its head and no local variables, so other
/// shapes are rejected.
pub fn unfold(program: &Program, definitions: &Program) -> Result<Program, DatalogError> {
    stratify(definitions)?;
    let defined = definitions.defined();
    for p in program.defined() {
        if defined.contains(p) {
            return Err(DatalogError::Unfold {
                predicate: p.to_string(),
                reason: "predicate is defined both in the program and in the definitions".into(),
            });
        }
    }

    let mut fresh = 0usize;
    let mut out: Vec<Rule> = Vec::new();
    let mut work: Vec<Rule> = program.rules().iter().rev().cloned().collect();
    while let Some(rule) = work.pop() {
        let pos = rule.body.iter().position(|l| {
            l.atom()
                .is_some_and(|a| definitions.rules_for(&a.pred).next().is_some())
        });
        let Some(i) = pos else {
            if !out.contains(&rule) {
                out.push(rule);
            }
            continue;
        };
        let expanded = match &rule.body[i] {
            Literal::Rel {
                atom,
                positive: true,
            } => unfold_positive(&rule, i, atom, definitions, &mut fresh)?,
            Literal::Rel {
                atom,
                positive: false,
            } => unfold_negated(&rule, i, atom, definitions)?,
            Literal::Cmp { .. } => unreachable!(),
        };
        // Keep the order stable: the first expansion is processed first.
        work.extend(expanded.into_iter().rev());
    }
    Program::new(program.declarations().to_vec(), out)
}

fn unfold_positive(
    rule: &Rule,
    at: usize,
    atom: &Atom,
    definitions: &Program,
    fresh: &mut usize,
) -> Result<Vec<Rule>, DatalogError> {
    let mut out = Vec::new();
    let taken = rule.variables();
    for def in definitions.rules_for(&atom.pred) {
        let def = rename_apart(def, &taken, fresh);
        let mut subst = BTreeMap::new();
        let unifies = def
            .head
            .args
            .iter()
            .zip(&atom.args)
            .all(|(d, l)| unify(d, l, &mut subst));
        if !unifies {
            // Constant clash: this definition can never match the literal.
            continue;
        }
        let mut body = rule.body[..at].to_vec();
        body.extend(def.body.iter().cloned());
        body.extend(rule.body[at + 1..].iter().cloned());
        let merged = Rule::new(rule.head.clone(), body);
        out.push(merged.apply(&resolved(&subst)));
    }
    Ok(out)
}

fn unfold_negated(
    rule: &Rule,
    at: usize,
    atom: &Atom,
    definitions: &Program,
) -> Result<Vec<Rule>, DatalogError> {
    let unsupported = |reason: &str| DatalogError::Unfold {
        predicate: atom.pred.to_string(),
        reason: reason.into(),
    };
    // Each definition contributes a disjunction of negated body literals.
    let mut disjunctions: Vec<Vec<Literal>> = Vec::new();
    for def in definitions.rules_for(&atom.pred) {
        let head_vars: Vec<&str> = def.head.args.iter().filter_map(Term::as_var).collect();
        let distinct: BTreeSet<&str> = head_vars.iter().copied().collect();
        if head_vars.len() != def.head.args.len() || distinct.len() != head_vars.len() {
            return Err(unsupported(
                "negated unfolding needs a definition head of distinct variables",
            ));
        }
        if def
            .variables()
            .iter()
            .any(|v| !distinct.contains(v.as_str()))
        {
            return Err(unsupported(
                "negated unfolding needs definitions without local variables",
            ));
        }
        let subst: BTreeMap<String, Term> = head_vars
            .iter()
            .zip(&atom.args)
            .map(|(v, t)| (v.to_string(), t.clone()))
            .collect();
        let inst = def.apply(&subst);
        disjunctions.push(inst.body.iter().map(Literal::negated).collect());
    }
    let mut choices: Vec<Vec<Literal>> = vec![Vec::new()];
    for d in &disjunctions {
        let mut next = Vec::new();
        for prefix in &choices {
            for lit in d {
                let mut c = prefix.clone();
                c.push(lit.clone());
                next.push(c);
            }
        }
        choices = next;
    }
    Ok(choices
        .into_iter()
        .map(|chosen| {
            let mut body = rule.body[..at].to_vec();
            body.extend(chosen);
            body.extend(rule.body[at + 1..].iter().cloned());
            Rule::new(rule.head.clone(), body)
        })
        .collect())
}

fn rename_apart(def: &Rule, taken: &BTreeSet<String>, fresh: &mut usize) -> Rule {
    let subst: BTreeMap<String, Term> = def
        .variables()
        .into_iter()
        .map(|v| {
            let name = loop {
                *fresh += 1;
                let candidate = format!("{v}_{fresh}");
                if !taken.contains(&candidate) {
                    break candidate;
                }
            };
            (v, Term::Var(name))
        })
        .collect();
    def.apply(&subst)
}

fn walk<'a>(t: &'a Term, subst: &'a BTreeMap<String, Term>) -> &'a Term {
    let mut cur = t;
    while let Term::Var(v) = cur {
        match subst.get(v) {
            Some(next) => cur = next,
            None => break,
        }
    }
    cur
}

/// Unifies a definition-side term with a literal-side term, preferring to bind
/// definition variables so the rule keeps its own names.
fn unify(def_side: &Term, lit_side: &Term, subst: &mut BTreeMap<String, Term>) -> bool {
    let a = walk(def_side, subst).clone();
    let b = walk(lit_side, subst).clone();
    if a == b {
        return true;
    }
    match (&a, &b) {
        (Term::Var(v), _) => {
            subst.insert(v.clone(), b);
            true
        }
        (_, Term::Var(v)) => {
            subst.insert(v.clone(), a);
            true
        }
        _ => false,
    }
}

fn resolved(subst: &BTreeMap<String, Term>) -> BTreeMap<String, Term> {
    subst
        .keys()
        .map(|k| (k.clone(), walk(&Term::Var(k.clone()), subst).clone()))
        .collect()
}

/// Drops rules that can never fire (a false ground comparison, or a literal
/// together with its negation), removes true ground comparisons and repeated
/// literals, and deduplicates rules.
pub fn simplify(program: &Program) -> Result<Program, DatalogError> {
    let mut out: Vec<Rule> = Vec::new();
    'rules: for r in program.rules() {
        let mut body: Vec<Literal> = Vec::new();
        for l in &r.body {
            if let Literal::Cmp { cmp, positive } = l {
                if let (Term::Const(a), Term::Const(b)) = (&cmp.left, &cmp.right) {
                    if let (Some(a), Some(b)) = (a.as_int(), b.as_int()) {
                        if cmp.op.holds(a, b) != *positive {
                            continue 'rules;
                        }
                        continue;
                    }
                }
            }
            if body.contains(&l.negated()) {
                continue 'rules;
            }
            if !body.contains(l) {
                body.push(l.clone());
            }
        }
        if body.is_empty() {
            // Every literal was a true ground comparison; keep the original.
            body = r.body.clone();
        }
        let rule = Rule::new(r.head.clone(), body);
        if !out.contains(&rule) {
            out.push(rule);
        }
    }
    program.with_rules(out)
}
