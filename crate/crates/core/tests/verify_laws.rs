mod common;

use std::collections::BTreeSet;

use coexist_core::datalog::{evaluate, parse_program, Program, Relation};
use coexist_core::derive::{derive_all, derive_unchecked, BxSpec, DeriveOptions};
use coexist_core::verify::{
    check_derived, check_getput, check_putget, check_totality, range_member, replay, Law, Mode,
    Universe,
};

use common::{pred, selection_spec, small_subsets, subsets_up_to};

fn sets(values: &[i64], max: usize) -> Vec<BTreeSet<i64>> {
    small_subsets(values, max)
        .iter()
        .map(|r| r.iter().map(|t| t.values()[0].as_int().unwrap()).collect())
        .collect()
}

/// GetPut and PutGet for `+s` guarded by `a < x` and `-s` by `b < x`, with
/// `get` selecting `a < x`, computed directly on sets.
fn brute_force(values: &[i64], max: usize, a: i64, b: i64) -> (bool, bool) {
    let get = |s: &BTreeSet<i64>| {
        s.iter()
            .copied()
            .filter(|&x| a < x)
            .collect::<BTreeSet<_>>()
    };
    let put = |s: &BTreeSet<i64>, v: &BTreeSet<i64>| {
        let mut out = s.clone();
        for &x in v {
            if !s.contains(&x) && a < x {
                out.insert(x);
            }
        }
        for &x in s {
            if !v.contains(&x) && b < x {
                out.remove(&x);
            }
        }
        out
    };
    let sources = sets(values, max);
    let range: BTreeSet<BTreeSet<i64>> = sources.iter().map(get).collect();
    let getput = sources.iter().all(|s| put(s, &get(s)) == *s);
    let putget = sources
        .iter()
        .all(|s| range.iter().all(|v| get(&put(s, v)) == *v));
    (getput, putget)
}

fn programs(a: i64, b: i64) -> (Program, Program) {
    let get = parse_program(&format!(
        "source s(x).\nview v1(x).\nv1(X) :- s(X), {a} < X."
    ))
    .unwrap();
    let putdelta = parse_program(&format!(
        "source s(x).\nview v1(x).\n\
         +s(X) :- v1(X), not s(X), {a} < X.\n\
         -s(X) :- not v1(X), s(X), {b} < X.\n"
    ))
    .unwrap();
    (get, putdelta)
}

#[test]
fn verifier_agrees_with_brute_force_on_guard_mutations() {
    let values = [0, 1, 2, 3, 4, 5];
    let u = Universe::new(values.to_vec(), 2).unwrap();
    for a in -1..=5 {
        for b in -1..=5 {
            let (get, putdelta) = programs(a, b);
            let (getput, putget) = brute_force(&values, 2, a, b);
            let gp = check_getput(&get, &putdelta, &u).unwrap();
            let pg = check_putget(&get, &putdelta, &u).unwrap();
            assert_eq!(gp.passed(), getput, "GetPut a={a} b={b}: {gp}");
            assert_eq!(pg.passed(), putget, "PutGet a={a} b={b}: {pg}");
        }
    }
}

#[test]
fn case_counts_follow_from_the_bound() {
    let d = derive_all(
        &BxSpec::parse(&selection_spec(4)).unwrap(),
        &DeriveOptions::default(),
    )
    .unwrap();
    let u = Universe::range(0, 10, 3).unwrap();
    let joint = Universe::range(0, 6, 2).unwrap();
    let reports = check_derived(&d, &u, &joint).unwrap();
    let sources = subsets_up_to(11, 3);
    // Views reachable from get: subsets of 5..=10.
    let range = subsets_up_to(6, 3);
    let joint_states = subsets_up_to(7, 2) * subsets_up_to(7, 2);
    let targets = subsets_up_to(7, 2);
    assert_eq!(sources, 232);
    assert_eq!(
        reports.iter().map(|r| (r.law, r.cases)).collect::<Vec<_>>(),
        [
            (Law::GetPut, sources),
            (Law::PutGet, sources * range),
            (Law::Totality, joint_states * targets + joint_states),
        ]
    );
    assert!(reports.iter().all(|r| r.passed()));
}

#[test]
fn sampled_mode_checks_the_requested_number_of_cases() {
    let (get, putdelta) = programs(4, 4);
    let u = Universe::range(0, 10, 3)
        .unwrap()
        .with_mode(Mode::Sampled { count: 50, seed: 7 });
    let r = check_putget(&get, &putdelta, &u).unwrap();
    assert_eq!(r.cases, 50);
    assert!(r.passed());
    let (get, putdelta) = programs(4, 2);
    let r = check_getput(
        &get,
        &putdelta,
        &u.with_mode(Mode::Sampled {
            count: 200,
            seed: 1,
        }),
    )
    .unwrap();
    assert!(!r.passed());
}

#[test]
fn counterexamples_are_minimal_and_replay() {
    let (get, putdelta) = programs(4, 2);
    let u = Universe::range(0, 10, 3).unwrap();
    let r = check_getput(&get, &putdelta, &u).unwrap();
    let c = r.counterexample.clone().unwrap();
    // One tuple in the band 2 < x <= 4 is enough.
    let s = c.source.get(&pred("s")).unwrap();
    assert_eq!(s.len(), 1);
    let x = s.iter().next().unwrap().values()[0].as_int().unwrap();
    assert!(2 < x && x <= 4, "{r}");
    assert_eq!(
        replay(Law::GetPut, &get, &putdelta, &c).unwrap(),
        c.observed
    );
    assert_ne!(c.observed, c.expected);
}

#[test]
fn totality_fails_without_undef() {
    let mut d = derive_unchecked(&BxSpec::parse(&selection_spec(4)).unwrap()).unwrap();
    let mut views = d.views().to_vec();
    views[0].undef = Program::empty();
    d = coexist_core::derive::DerivedBx::new(views).unwrap();
    let r = check_totality(&d, &Universe::range(0, 6, 2).unwrap()).unwrap();
    assert!(!r.passed());
    let c = r.counterexample.unwrap();
    let target = c.view.unwrap();
    let current = evaluate(d.get_prime(), &c.source).unwrap();
    let v1 = pred("v1");
    let inserted = target
        .get(&v1)
        .unwrap()
        .difference(current.get(&v1).unwrap())
        .unwrap();
    assert!(inserted
        .iter()
        .any(|t| t.values()[0].as_int().unwrap() <= 4));
}

#[test]
fn range_membership() {
    let (get, _) = programs(4, 4);
    let u = Universe::range(0, 10, 3).unwrap();
    assert!(range_member(&get, &Relation::unary([5, 9]), &u).unwrap());
    assert!(!range_member(&get, &Relation::unary([3]), &u).unwrap());
}
