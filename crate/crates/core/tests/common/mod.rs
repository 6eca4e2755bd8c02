//! Test oracles that share no code with the engine under test.
#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet};

use coexist_core::datalog::{
    Instance, Literal, PredicateRef, Program, Relation, Rule, Term, Tuple, Value,
};

/// Naive bottom-up evaluation: every rule is matched by trying every
/// assignment of its variables over the active domain, and each stratum is
/// iterated until nothing changes.
pub fn naive(program: &Program, input: &Instance) -> Instance {
    let arities = program.arities();
    let defined: BTreeSet<PredicateRef> = program
        .rules()
        .iter()
        .map(|r| r.head.pred.clone())
        .collect();

    let mut domain: BTreeSet<Value> = BTreeSet::new();
    for (_, rel) in input.iter() {
        for t in rel.iter() {
            domain.extend(t.values().iter().cloned());
        }
    }
    for r in program.rules() {
        for l in &r.body {
            let terms: Vec<&Term> = match l {
                Literal::Rel { atom, .. } => atom.args.iter().collect(),
                Literal::Cmp { cmp, .. } => vec![&cmp.left, &cmp.right],
            };
            for t in terms.into_iter().chain(&r.head.args) {
                if let Term::Const(c) = t {
                    domain.insert(c.clone());
                }
            }
        }
    }
    let domain: Vec<Value> = domain.into_iter().collect();

    let mut level: BTreeMap<PredicateRef, usize> = BTreeMap::new();
    fn level_of(
        p: &PredicateRef,
        program: &Program,
        defined: &BTreeSet<PredicateRef>,
        memo: &mut BTreeMap<PredicateRef, usize>,
    ) -> usize {
        if !defined.contains(p) {
            return 0;
        }
        if let Some(&l) = memo.get(p) {
            return l;
        }
        let mut best = 0;
        for r in program.rules().iter().filter(|r| &r.head.pred == p) {
            for l in &r.body {
                if let Literal::Rel { atom, positive } = l {
                    let below = level_of(&atom.pred, program, defined, memo);
                    best = best.max(below + usize::from(!positive) + 1);
                }
            }
        }
        memo.insert(p.clone(), best);
        best
    }
    for p in &defined {
        level_of(p, program, &defined, &mut level);
    }

    let mut state: BTreeMap<PredicateRef, BTreeSet<Tuple>> = BTreeMap::new();
    for (p, rel) in input.iter() {
        state.insert(p.clone(), rel.iter().cloned().collect());
    }
    for p in &defined {
        state.insert(p.clone(), BTreeSet::new());
    }

    let mut levels: Vec<usize> = level.values().copied().collect();
    levels.sort_unstable();
    levels.dedup();
    for lv in levels {
        let rules: Vec<&Rule> = program
            .rules()
            .iter()
            .filter(|r| level[&r.head.pred] == lv)
            .collect();
        loop {
            let mut changed = false;
            for r in &rules {
                for t in matches(r, &domain, &state) {
                    changed |= state.get_mut(&r.head.pred).unwrap().insert(t);
                }
            }
            if !changed {
                break;
            }
        }
    }

    let mut out = input.clone();
    for p in defined {
        let tuples = state.remove(&p).unwrap();
        out.insert(
            p.clone(),
            Relation::from_tuples(arities[&p], tuples).unwrap(),
        );
    }
    out
}

fn matches(
    rule: &Rule,
    domain: &[Value],
    state: &BTreeMap<PredicateRef, BTreeSet<Tuple>>,
) -> Vec<Tuple> {
    let vars: Vec<String> = rule.variables().into_iter().collect();
    let mut out = Vec::new();
    let mut idx = vec![0usize; vars.len()];
    if !vars.is_empty() && domain.is_empty() {
        return out;
    }
    loop {
        let env: BTreeMap<&str, &Value> = vars
            .iter()
            .zip(&idx)
            .map(|(v, &i)| (v.as_str(), &domain[i]))
            .collect();
        let value = |t: &Term| match t {
            Term::Var(v) => env[v.as_str()].clone(),
            Term::Const(c) => c.clone(),
        };
        let holds = rule.body.iter().all(|l| match l {
            Literal::Rel { atom, positive } => {
                let t = Tuple::new(atom.args.iter().map(value).collect());
                let present = state.get(&atom.pred).is_some_and(|s| s.contains(&t));
                present == *positive
            }
            Literal::Cmp { cmp, positive } => {
                let (Some(a), Some(b)) = (value(&cmp.left).as_int(), value(&cmp.right).as_int())
                else {
                    panic!("oracle only compares integers");
                };
                cmp.op.holds(a, b) == *positive
            }
        });
        if holds {
            out.push(Tuple::new(rule.head.args.iter().map(value).collect()));
        }
        let mut k = 0;
        loop {
            if k == idx.len() {
                return out;
            }
            idx[k] += 1;
            if idx[k] < domain.len() {
                break;
            }
            idx[k] = 0;
            k += 1;
        }
    }
}

/// Every subset of `values` with at most `max_size` elements, as unary
/// relations, built by direct recursion.
pub fn small_subsets(values: &[i64], max_size: usize) -> Vec<Relation> {
    fn go(values: &[i64], max_size: usize, acc: &mut Vec<i64>, out: &mut Vec<Relation>) {
        out.push(Relation::unary(acc.iter().copied()));
        if acc.len() == max_size {
            return;
        }
        for (i, &v) in values.iter().enumerate() {
            acc.push(v);
            go(&values[i + 1..], max_size, acc, out);
            acc.pop();
        }
    }
    let mut out = Vec::new();
    go(values, max_size, &mut Vec::new(), &mut out);
    out
}

/// `n choose 0 + ... + n choose k`.
pub fn subsets_up_to(n: u64, k: u64) -> u64 {
    let mut total = 0;
    let mut c = 1u64;
    for i in 0..=k.min(n) {
        total += c;
        c = c * (n - i) / (i + 1);
    }
    total
}

/// The selection spec with threshold `c`: view `v1` shows `s` where `c < x`.
pub fn selection_spec(c: i64) -> String {
    format!(
        "source s(x).\nview v1(x).\n\
         +s(X) :- v1(X), not s(X), {c} < X.\n\
         -s(X) :- not v1(X), s(X), {c} < X.\n"
    )
}

pub fn pred(text: &str) -> PredicateRef {
    PredicateRef::parse(text).expect("predicate")
}

pub fn specs_dir() -> std::path::PathBuf {
    std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("../../specs")
}
