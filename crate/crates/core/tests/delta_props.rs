mod common;

use proptest::prelude::*;

use coexist_core::datalog::{parse_program, Instance, Relation};
use coexist_core::delta::{apply_delta, diff, normalize_delta, undef_split, Delta};

use common::{naive, pred};

fn rel() -> impl Strategy<Value = Relation> {
    prop::collection::btree_set(0i64..8, 0..5).prop_map(Relation::unary)
}

/// A delta whose two sides are disjoint.
fn delta() -> impl Strategy<Value = Delta> {
    (rel(), rel()).prop_map(|(ins, del)| {
        let del = del.difference(&ins).unwrap();
        Delta::new(ins, del).unwrap()
    })
}

proptest! {
    #[test]
    fn normalizing_never_changes_the_result(base in rel(), d in delta()) {
        let n = normalize_delta(&base, &d).unwrap();
        prop_assert!(n.is_effective(&base));
        prop_assert_eq!(apply_delta(&base, &n).unwrap(), apply_delta(&base, &d).unwrap());
        prop_assert_eq!(normalize_delta(&base, &n).unwrap(), n.clone());
    }

    #[test]
    fn diff_is_the_normalized_delta(base in rel(), d in delta()) {
        let after = apply_delta(&base, &d).unwrap();
        prop_assert_eq!(diff(&base, &after).unwrap(), normalize_delta(&base, &d).unwrap());
    }

    #[test]
    fn diff_then_apply(old in rel(), new in rel()) {
        let d = diff(&old, &new).unwrap();
        prop_assert!(d.is_effective(&old));
        prop_assert_eq!(apply_delta(&old, &d).unwrap(), new);
    }

    #[test]
    fn overlapping_deltas_are_rejected(base in rel(), d in delta(), t in 0i64..8) {
        let mut ins = d.inserted().clone();
        let mut del = d.deleted().clone();
        ins.insert(coexist_core::datalog::Tuple::ints(&[t])).unwrap();
        del.insert(coexist_core::datalog::Tuple::ints(&[t])).unwrap();
        let both = Delta::new(ins, del).unwrap();
        prop_assert!(normalize_delta(&base, &both).is_err());
    }

    #[test]
    fn undef_split_avoids_the_source_delta(v in delta(), s in delta()) {
        let touched = s.touched();
        let u = undef_split(&v, &touched).unwrap();
        prop_assert!(u.inserted().is_disjoint(&touched));
        prop_assert!(u.deleted().is_disjoint(&touched));
        prop_assert!(u.inserted().is_subset(v.inserted()));
        prop_assert!(u.deleted().is_subset(v.deleted()));
        // Whatever the source delta covers plus the split is the whole update.
        let covered = v.inserted().intersection(&touched).unwrap();
        prop_assert_eq!(covered.union(u.inserted()).unwrap(), v.inserted().clone());
    }

    #[test]
    fn apply_agrees_with_datalog(base in rel(), d in delta()) {
        let p = parse_program(
            "source s(x).\nview t(x).\n\
             t(X) :- s(X), not -s(X).\nt(X) :- +s(X).\n",
        )
        .unwrap();
        let input = Instance::new()
            .with(pred("s"), base.clone())
            .with(pred("+s"), d.inserted().clone())
            .with(pred("-s"), d.deleted().clone());
        let out = naive(&p, &input);
        prop_assert_eq!(out.get(&pred("t")).unwrap(), &apply_delta(&base, &d).unwrap());
    }
}
