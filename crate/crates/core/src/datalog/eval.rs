//! Bottom-up evaluation, stratum by stratum, with semi-naive iteration inside
//! each stratum.

use std::borrow::Cow;
use std::collections::BTreeMap;

use super::ast::{CmpOp, Literal, PredicateRef, Program, Term, Value};
use super::error::DatalogError;
use super::relation::{Instance, Relation, Tuple};
use super::stratify::stratify;

#[derive(Debug, Clone)]
enum Slot {
    Var(usize),
    Const(Value),
}

#[derive(Debug, Clone)]
enum Step {
    Join {
        pred: usize,
        args: Vec<Slot>,
    },
    Absent {
        pred: usize,
        args: Vec<Slot>,
    },
    Compare {
        left: Slot,
        op: CmpOp,
        right: Slot,
        positive: bool,
        text: String,
    },
}

#[derive(Debug, Clone)]
struct CompiledRule {
    head: usize,
    head_args: Vec<Slot>,
    steps: Vec<Step>,
    vars: usize,
}

/// A program compiled once for repeated evaluation.
#[derive(Debug, Clone)]
pub struct Prepared {
    preds: Vec<PredicateRef>,
    arity: Vec<usize>,
    inputs: Vec<usize>,
    defined: Vec<usize>,
    /// Rule indices by stratum, for strata that contain derived predicates.
    strata: Vec<Vec<usize>>,
    stratum_of: Vec<usize>,
    rules: Vec<CompiledRule>,
}

impl Prepared {
    pub fn new(program: &Program) -> Result<Self, DatalogError> {
        let strata = stratify(program)?;
        let arities = program.arities();
        let preds: Vec<PredicateRef> = arities.keys().cloned().collect();
        let index: BTreeMap<&PredicateRef, usize> =
            preds.iter().enumerate().map(|(i, p)| (p, i)).collect();
        let arity: Vec<usize> = preds.iter().map(|p| arities[p]).collect();

        let mut stratum_of = vec![0; preds.len()];
        for (k, s) in strata.iter().enumerate() {
            for p in s {
                stratum_of[index[p]] = k;
            }
        }
        let defined_set = program.defined();
        let defined: Vec<usize> = defined_set.iter().map(|p| index[*p]).collect();
        let inputs: Vec<usize> = strata
            .first()
            .map(|s| {
                s.iter()
                    .filter(|p| !defined_set.contains(p))
                    .map(|p| index[p])
                    .collect()
            })
            .unwrap_or_default();

        let rules: Vec<CompiledRule> = program
            .rules()
            .iter()
            .map(|r| compile_rule(r, &index))
            .collect();
        let mut by_stratum = vec![Vec::new(); strata.len()];
        for (i, r) in rules.iter().enumerate() {
            by_stratum[stratum_of[r.head]].push(i);
        }
        Ok(Prepared {
            preds,
            arity,
            inputs,
            defined,
            strata: by_stratum,
            stratum_of,
            rules,
        })
    }

    /// Predicates the program reads without defining.
    pub fn inputs(&self) -> impl Iterator<Item = &PredicateRef> {
        self.inputs.iter().map(|&i| &self.preds[i])
    }

    /// Predicates defined by rules.
    pub fn outputs(&self) -> impl Iterator<Item = &PredicateRef> {
        self.defined.iter().map(|&i| &self.preds[i])
    }

    /// Evaluates and returns only the derived relations.
    pub fn run_derived(&self, input: &Instance) -> Result<Instance, DatalogError> {
        self.run_layered(&[input])
    }

    /// Like [`Prepared::run_derived`], reading each input from the first
    /// layer that holds it. Saves merging instances that differ in a few
    /// relations.
    pub fn run_layered(&self, layers: &[&Instance]) -> Result<Instance, DatalogError> {
        let mut store: Vec<Cow<'_, Relation>> = Vec::with_capacity(self.preds.len());
        for (i, p) in self.preds.iter().enumerate() {
            let is_input = self.inputs.contains(&i);
            match layers.iter().find_map(|l| l.get(p)) {
                Some(r) if is_input => {
                    if r.arity() != self.arity[i] {
                        return Err(DatalogError::RelationArity {
                            expected: self.arity[i],
                            found: r.arity(),
                        });
                    }
                    store.push(Cow::Borrowed(r));
                }
                None if is_input => {
                    return Err(DatalogError::MissingRelation {
                        predicate: p.to_string(),
                    })
                }
                _ => store.push(Cow::Owned(Relation::new(self.arity[i]))),
            }
        }
        for rule_ids in &self.strata {
            if !rule_ids.is_empty() {
                self.run_stratum(rule_ids, &mut store)?;
            }
        }
        Ok(self
            .defined
            .iter()
            .map(|&i| {
                let rel = std::mem::replace(&mut store[i], Cow::Owned(Relation::new(0)));
                (self.preds[i].clone(), rel.into_owned())
            })
            .collect())
    }

    /// Evaluates and returns the input extended with every derived relation.
    pub fn run(&self, input: &Instance) -> Result<Instance, DatalogError> {
        let derived = self.run_derived(input)?;
        let mut out = input.clone();
        for (p, r) in derived.iter() {
            out.insert(p.clone(), r.clone());
        }
        Ok(out)
    }

    fn run_stratum(
        &self,
        rule_ids: &[usize],
        store: &mut [Cow<'_, Relation>],
    ) -> Result<(), DatalogError> {
        let stratum = self.stratum_of[self.rules[rule_ids[0]].head];
        let in_stratum = |p: usize| self.stratum_of[p] == stratum;

        let recursive = rule_ids.iter().any(|&ri| {
            self.rules[ri]
                .steps
                .iter()
                .any(|s| matches!(s, Step::Join { pred, .. } if in_stratum(*pred)))
        });
        let mut out = Vec::new();
        if !recursive {
            // Nothing in this stratum reads its own heads: one round suffices.
            for &ri in rule_ids {
                let rule = &self.rules[ri];
                fire(rule, store, None, &mut out)?;
                let head = store[rule.head].to_mut();
                for t in out.drain(..) {
                    head.insert_unchecked(t);
                }
            }
            return Ok(());
        }

        // First round: every rule against the current store.
        let mut delta: BTreeMap<usize, Relation> = BTreeMap::new();
        for &ri in rule_ids {
            let rule = &self.rules[ri];
            fire(rule, store, None, &mut out)?;
            for t in out.drain(..) {
                if !store[rule.head].contains(&t) {
                    delta
                        .entry(rule.head)
                        .or_insert_with(|| Relation::new(self.arity[rule.head]))
                        .insert_unchecked(t);
                }
            }
        }
        merge(store, &delta);

        // Later rounds only re-fire rules that join on a relation of this
        // stratum, with that join reading the previous round's delta.
        while !delta.is_empty() {
            let mut next: BTreeMap<usize, Relation> = BTreeMap::new();
            for &ri in rule_ids {
                let rule = &self.rules[ri];
                for (si, step) in rule.steps.iter().enumerate() {
                    let Step::Join { pred, .. } = step else {
                        continue;
                    };
                    if !in_stratum(*pred) {
                        continue;
                    }
                    let Some(d) = delta.get(pred) else { continue };
                    let mut out = Vec::new();
                    fire(rule, store, Some((si, d)), &mut out)?;
                    for t in out {
                        if !store[rule.head].contains(&t) {
                            next.entry(rule.head)
                                .or_insert_with(|| Relation::new(self.arity[rule.head]))
                                .insert_unchecked(t);
                        }
                    }
                }
            }
            merge(store, &next);
            delta = next;
        }
        Ok(())
    }
}

fn merge(store: &mut [Cow<'_, Relation>], delta: &BTreeMap<usize, Relation>) {
    for (&p, d) in delta {
        let target = store[p].to_mut();
        for t in d.iter() {
            target.insert_unchecked(t.clone());
        }
    }
}

fn slot<'r>(t: &'r Term, vars: &mut BTreeMap<&'r str, usize>) -> Slot {
    match t {
        Term::Var(v) => {
            let n = vars.len();
            Slot::Var(*vars.entry(v.as_str()).or_insert(n))
        }
        Term::Const(c) => Slot::Const(c.clone()),
    }
}

fn compile_rule(rule: &super::ast::Rule, index: &BTreeMap<&PredicateRef, usize>) -> CompiledRule {
    let mut vars: BTreeMap<&str, usize> = BTreeMap::new();
    // Safety guarantees that every variable is bound by some positive atom, so
    // filters are placed right after the join that binds their last variable.
    let mut joins = Vec::new();
    let mut filters = Vec::new();
    for lit in &rule.body {
        match lit {
            Literal::Rel {
                atom,
                positive: true,
            } => joins.push(atom),
            other => filters.push(other),
        }
    }
    let mut steps = Vec::new();
    let mut bound: Vec<&str> = Vec::new();
    let mut pending: Vec<&Literal> = filters;
    place_ready(&bound, &mut pending, &mut steps, &mut vars, index);
    for atom in joins {
        let args = atom.args.iter().map(|t| slot(t, &mut vars)).collect();
        steps.push(Step::Join {
            pred: index[&atom.pred],
            args,
        });
        bound.extend(atom.variables());
        place_ready(&bound, &mut pending, &mut steps, &mut vars, index);
    }
    debug_assert!(pending.is_empty(), "unsafe rule reached the evaluator");
    let head_args = rule.head.args.iter().map(|t| slot(t, &mut vars)).collect();
    CompiledRule {
        head: index[&rule.head.pred],
        head_args,
        steps,
        vars: vars.len(),
    }
}

fn place_ready<'r>(
    bound: &[&str],
    pending: &mut Vec<&'r Literal>,
    steps: &mut Vec<Step>,
    vars: &mut BTreeMap<&'r str, usize>,
    index: &BTreeMap<&PredicateRef, usize>,
) {
    let mut i = 0;
    while i < pending.len() {
        if pending[i].variables().iter().all(|v| bound.contains(v)) {
            let lit = pending.remove(i);
            steps.push(match lit {
                Literal::Rel { atom, .. } => Step::Absent {
                    pred: index[&atom.pred],
                    args: atom.args.iter().map(|t| slot(t, vars)).collect(),
                },
                Literal::Cmp { cmp, positive } => Step::Compare {
                    left: slot(&cmp.left, vars),
                    op: cmp.op,
                    right: slot(&cmp.right, vars),
                    positive: *positive,
                    text: cmp.to_string(),
                },
            });
        } else {
            i += 1;
        }
    }
}

fn resolve<'v>(s: &'v Slot, env: &'v [Option<Value>]) -> &'v Value {
    match s {
        Slot::Const(c) => c,
        Slot::Var(i) => env[*i].as_ref().expect("bound variable"),
    }
}

fn build(args: &[Slot], env: &[Option<Value>]) -> Tuple {
    Tuple(args.iter().map(|s| resolve(s, env).clone()).collect())
}

fn fire(
    rule: &CompiledRule,
    store: &[Cow<'_, Relation>],
    delta_at: Option<(usize, &Relation)>,
    out: &mut Vec<Tuple>,
) -> Result<(), DatalogError> {
    let mut env: Vec<Option<Value>> = vec![None; rule.vars];
    step(rule, 0, store, delta_at, &mut env, out)
}

fn step(
    rule: &CompiledRule,
    at: usize,
    store: &[Cow<'_, Relation>],
    delta_at: Option<(usize, &Relation)>,
    env: &mut Vec<Option<Value>>,
    out: &mut Vec<Tuple>,
) -> Result<(), DatalogError> {
    let Some(s) = rule.steps.get(at) else {
        out.push(build(&rule.head_args, env));
        return Ok(());
    };
    match s {
        Step::Join { pred, args } => {
            let rel: &Relation = match delta_at {
                Some((i, d)) if i == at => d,
                _ => &store[*pred],
            };
            for t in rel.iter() {
                let mut newly = Vec::new();
                let mut ok = true;
                for (slot, v) in args.iter().zip(t.values()) {
                    match slot {
                        Slot::Const(c) => {
                            if c != v {
                                ok = false;
                                break;
                            }
                        }
                        Slot::Var(i) => match &env[*i] {
                            Some(b) => {
                                if b != v {
                                    ok = false;
                                    break;
                                }
                            }
                            None => {
                                env[*i] = Some(v.clone());
                                newly.push(*i);
                            }
                        },
                    }
                }
                if ok {
                    step(rule, at + 1, store, delta_at, env, out)?;
                }
                for i in newly {
                    env[i] = None;
                }
            }
            Ok(())
        }
        Step::Absent { pred, args } => {
            if store[*pred].contains(&build(args, env)) {
                Ok(())
            } else {
                step(rule, at + 1, store, delta_at, env, out)
            }
        }
        Step::Compare {
            left,
            op,
            right,
            positive,
            text,
        } => {
            let int = |s: &Slot| -> Result<i64, DatalogError> {
                let v = resolve(s, env);
                v.as_int().ok_or_else(|| DatalogError::Type {
                    comparison: text.clone(),
                    value: v.to_string(),
                })
            };
            let (l, r) = (int(left)?, int(right)?);
            if op.holds(l, r) == *positive {
                step(rule, at + 1, store, delta_at, env, out)
            } else {
                Ok(())
            }
        }
    }
}

/// Evaluates `program` over `input`, returning `input` extended with every
/// derived relation. Pure: `input` is not modified.
pub fn evaluate(program: &Program, input: &Instance) -> Result<Instance, DatalogError> {
    Prepared::new(program)?.run(input)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datalog::ast::Flavor;
    use crate::datalog::parse_program;

    fn get_prime() -> Program {
        parse_program(
            "source s(x).\nsource v1_ud(x).\nview v1(x).\n\
             v1(X) :- s(X), 4 < X.\nv1(X) :- v1_ud(X), not 4 < X.\n",
        )
        .unwrap()
    }

    #[test]
    fn selection_get() {
        let p = parse_program("source s/1.\nv1(X) :- s(X), 4 < X.").unwrap();
        let input = Instance::new().with(PredicateRef::base("s"), Relation::unary([3, 5, 9]));
        let out = evaluate(&p, &input).unwrap();
        assert_eq!(
            out.get(&PredicateRef::base("v1")),
            Some(&Relation::unary([5, 9]))
        );
        assert_eq!(
            out.get(&PredicateRef::base("s")),
            input.get(&PredicateRef::base("s"))
        );
    }

    #[test]
    fn get_prime_sees_aux() {
        let input = Instance::new()
            .with(PredicateRef::base("s"), Relation::unary([5]))
            .with(PredicateRef::new("v1", Flavor::Aux), Relation::unary([3]));
        let out = evaluate(&get_prime(), &input).unwrap();
        assert_eq!(
            out.get(&PredicateRef::base("v1")),
            Some(&Relation::unary([3, 5]))
        );
    }

    #[test]
    fn empty_inputs_give_empty_outputs() {
        let input = Instance::new()
            .with(PredicateRef::base("s"), Relation::new(1))
            .with(PredicateRef::new("v1", Flavor::Aux), Relation::new(1));
        let out = evaluate(&get_prime(), &input).unwrap();
        assert!(out.all_empty());
    }

    #[test]
    fn missing_input() {
        let input = Instance::new().with(PredicateRef::base("s"), Relation::new(1));
        assert_eq!(
            evaluate(&get_prime(), &input).unwrap_err(),
            DatalogError::MissingRelation {
                predicate: "v1_ud".into()
            }
        );
    }

    #[test]
    fn string_comparison_is_a_type_error() {
        let p = parse_program("v(X) :- s(X), 4 < X.").unwrap();
        let rel = Relation::from_tuples(1, [Tuple(vec![Value::from("p4")])]).unwrap();
        let input = Instance::new().with(PredicateRef::base("s"), rel);
        assert!(matches!(
            evaluate(&p, &input),
            Err(DatalogError::Type { .. })
        ));
    }

    #[test]
    fn strings_join_by_equality() {
        let p = parse_program("v(P, X) :- s(P, X), t(P), 4 < X.").unwrap();
        let s = Relation::from_tuples(
            2,
            [
                Tuple(vec!["p4".into(), 5.into()]),
                Tuple(vec!["p5".into(), 3.into()]),
                Tuple(vec!["p6".into(), 8.into()]),
            ],
        )
        .unwrap();
        let t =
            Relation::from_tuples(1, [Tuple(vec!["p4".into()]), Tuple(vec!["p5".into()])]).unwrap();
        let input = Instance::new()
            .with(PredicateRef::base("s"), s)
            .with(PredicateRef::base("t"), t);
        let out = evaluate(&p, &input).unwrap();
        let v = out.get(&PredicateRef::base("v")).unwrap();
        assert_eq!(v.len(), 1);
        assert!(v.contains(&Tuple(vec!["p4".into(), 5.into()])));
    }

    #[test]
    fn repeated_variables_and_constants_in_atoms() {
        let p = parse_program("d(X) :- e(X, X).\nk(Y) :- e(3, Y).").unwrap();
        let e = Relation::from_tuples(
            2,
            [
                Tuple::ints(&[1, 1]),
                Tuple::ints(&[3, 4]),
                Tuple::ints(&[3, 3]),
            ],
        )
        .unwrap();
        let out = evaluate(&p, &Instance::new().with(PredicateRef::base("e"), e)).unwrap();
        assert_eq!(
            out.get(&PredicateRef::base("d")),
            Some(&Relation::unary([1, 3]))
        );
        assert_eq!(
            out.get(&PredicateRef::base("k")),
            Some(&Relation::unary([3, 4]))
        );
    }

    #[test]
    fn negation_reads_lower_stratum() {
        let p = parse_program("a(X) :- s(X), X > 2.\nb(X) :- s(X), not a(X).").unwrap();
        let input = Instance::new().with(PredicateRef::base("s"), Relation::unary([1, 2, 3, 4]));
        let out = evaluate(&p, &input).unwrap();
        assert_eq!(
            out.get(&PredicateRef::base("b")),
            Some(&Relation::unary([1, 2]))
        );
    }

    #[test]
    fn evaluate_is_pure() {
        let input = Instance::new()
            .with(PredicateRef::base("s"), Relation::unary([1, 7]))
            .with(
                PredicateRef::new("v1", Flavor::Aux),
                Relation::unary([2, 8]),
            );
        let before = input.clone();
        let a = evaluate(&get_prime(), &input).unwrap();
        let b = evaluate(&get_prime(), &input).unwrap();
        assert_eq!(a, b);
        assert_eq!(input, before);
        assert_eq!(
            a.get(&PredicateRef::base("v1")),
            Some(&Relation::unary([2, 7]))
        );
    }
}
