mod common;

use std::sync::OnceLock;

use proptest::prelude::*;

use coexist_core::datalog::{Relation, Tuple, Value};
use coexist_core::delta::Delta;
use coexist_core::derive::{derive_all, BxSpec, DeriveOptions, DerivedBx};
use coexist_core::runtime::{run_script, ScriptError, VersionRegistry};

use common::{pred, specs_dir};

fn load(name: &str) -> DerivedBx {
    let text = std::fs::read_to_string(specs_dir().join("versions").join(name)).unwrap();
    derive_all(&BxSpec::parse(&text).unwrap(), &DeriveOptions::default()).unwrap()
}

fn derivations() -> &'static (DerivedBx, DerivedBx) {
    static CELL: OnceLock<(DerivedBx, DerivedBx)> = OnceLock::new();
    CELL.get_or_init(|| (load("ver1.dl"), load("ver2.dl")))
}

fn row(pk: &str, x: i64) -> Tuple {
    Tuple::new(vec![Value::Str(pk.into()), Value::Int(x)])
}

fn rel(rows: &[(&str, i64)]) -> Relation {
    Relation::from_tuples(2, rows.iter().map(|&(p, x)| row(p, x))).unwrap()
}

fn insert(rows: &[(&str, i64)]) -> Delta {
    Delta::insertions(rel(rows))
}

/// Version 1 exposes `s`, version 2 exposes `v1` and `v2`, and `s` holds
/// `(p1, 3), (p2, 6), (p3, 9)`.
fn registry() -> VersionRegistry {
    let (ver1, ver2) = derivations();
    let mut reg = VersionRegistry::new();
    reg.register_version("ver1", [("s", ver1)]).unwrap();
    reg.register_version("ver2", [("v1", ver2), ("v2", ver2)])
        .unwrap();
    reg.update_view("ver1", "s", &insert(&[("p1", 3), ("p2", 6), ("p3", 9)]))
        .unwrap();
    reg
}

fn state(reg: &VersionRegistry) -> [Relation; 3] {
    [
        reg.query_view("ver1", "s").unwrap(),
        reg.query_view("ver2", "v1").unwrap(),
        reg.query_view("ver2", "v2").unwrap(),
    ]
}

#[test]
fn initial_state() {
    let reg = registry();
    assert_eq!(
        state(&reg),
        [
            rel(&[("p1", 3), ("p2", 6), ("p3", 9)]),
            rel(&[("p2", 6), ("p3", 9)]),
            rel(&[("p3", 9)]),
        ]
    );
}

#[test]
fn insert_through_version_one() {
    let mut reg = registry();
    reg.update_view("ver1", "s", &insert(&[("p4", 5)])).unwrap();
    let [s, v1, v2] = state(&reg);
    assert_eq!(s, rel(&[("p1", 3), ("p2", 6), ("p3", 9), ("p4", 5)]));
    assert_eq!(v1, rel(&[("p2", 6), ("p3", 9), ("p4", 5)]));
    assert_eq!(v2, rel(&[("p3", 9)]));
}

#[test]
fn synchronized_insert_through_version_two() {
    let mut reg = registry();
    let record = reg
        .update_view("ver2", "v1", &insert(&[("p4", 5)]))
        .unwrap();
    let [s, v1, v2] = state(&reg);
    assert_eq!(s, rel(&[("p1", 3), ("p2", 6), ("p3", 9), ("p4", 5)]));
    assert_eq!(v1, rel(&[("p2", 6), ("p3", 9), ("p4", 5)]));
    assert_eq!(v2, rel(&[("p3", 9)]));
    assert_eq!(record.source_deltas["s"].inserted(), &rel(&[("p4", 5)]));
    assert!(record.aux_deltas.values().all(Delta::is_empty));
}

#[test]
fn unsynchronized_insert_lands_in_the_auxiliary_relation() {
    let mut reg = registry();
    let record = reg
        .update_view("ver2", "v1", &insert(&[("p5", 3)]))
        .unwrap();
    let [s, v1, v2] = state(&reg);
    assert_eq!(s, rel(&[("p1", 3), ("p2", 6), ("p3", 9)]));
    assert_eq!(v1, rel(&[("p2", 6), ("p3", 9), ("p5", 3)]));
    assert_eq!(v2, rel(&[("p3", 9)]));
    assert_eq!(
        reg.physical().get(&pred("v1_ud")).unwrap(),
        &rel(&[("p5", 3)])
    );
    assert!(record.source_deltas.values().all(Delta::is_empty));
    assert_eq!(record.aux_deltas["v1_ud"].inserted(), &rel(&[("p5", 3)]));
    assert!(record.side_effects().is_empty());
}

#[test]
fn deleting_an_unsynchronized_tuple() {
    let mut reg = registry();
    reg.update_view("ver2", "v1", &insert(&[("p5", 3)]))
        .unwrap();
    reg.update_view("ver2", "v1", &Delta::deletions(rel(&[("p5", 3)])))
        .unwrap();
    assert!(reg.physical().get(&pred("v1_ud")).unwrap().is_empty());
    assert_eq!(
        reg.query_view("ver2", "v1").unwrap(),
        rel(&[("p2", 6), ("p3", 9)])
    );
}

#[test]
fn scripts_replay() {
    let dir = specs_dir().join("versions");
    for name in [
        "insert_via_ver1.cosx",
        "insert_via_v1.cosx",
        "unsynchronized_insert.cosx",
    ] {
        let text = std::fs::read_to_string(dir.join(name)).unwrap();
        let report = run_script(&text, &dir, &DeriveOptions::default())
            .unwrap_or_else(|e| panic!("{name}: {e}"));
        assert!(report.expectations >= 6, "{name}");
    }
    let text = std::fs::read_to_string(dir.join("wrong_expectation.cosx")).unwrap();
    let err = run_script(&text, &dir, &DeriveOptions::default()).unwrap_err();
    assert!(matches!(err, ScriptError::Expect { .. }));
    assert!(err.to_string().contains("\n-(p5, 3)\n"), "{err}");
}

#[derive(Debug, Clone)]
enum Op {
    InsertS(i64),
    DeleteS(usize),
    InsertV1(i64),
    DeleteV1(usize),
}

fn op() -> impl Strategy<Value = Op> {
    prop_oneof![
        (0i64..11).prop_map(Op::InsertS),
        (0usize..8).prop_map(Op::DeleteS),
        (0i64..11).prop_map(Op::InsertV1),
        (0usize..8).prop_map(Op::DeleteV1),
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    /// Every update leaves the updated view exactly as requested, keeps the
    /// other views equal to their selections over `s`, and keeps `v1_ud`
    /// free of tuples that `s` could hold.
    #[test]
    fn random_updates_keep_versions_consistent(ops in prop::collection::vec(op(), 1..12)) {
        let mut reg = registry();
        for (i, op) in ops.iter().enumerate() {
            let key = format!("q{i}");
            let (version, view, delta) = match op {
                Op::InsertS(x) => ("ver1", "s", insert(&[(&key, *x)])),
                Op::InsertV1(x) => ("ver2", "v1", insert(&[(&key, *x)])),
                Op::DeleteS(k) | Op::DeleteV1(k) => {
                    let (version, view) = if matches!(op, Op::DeleteS(_)) {
                        ("ver1", "s")
                    } else {
                        ("ver2", "v1")
                    };
                    let current = reg.query_view(version, view).unwrap();
                    let Some(t) = current.iter().nth(k % current.len().max(1)) else {
                        continue;
                    };
                    let d = Relation::from_tuples(2, [t.clone()]).unwrap();
                    (version, view, Delta::deletions(d))
                }
            };
            let before = reg.query_view(version, view).unwrap();
            reg.update_view(version, view, &delta).unwrap();
            let want = before
                .difference(delta.deleted())
                .unwrap()
                .union(delta.inserted())
                .unwrap();
            prop_assert_eq!(reg.query_view(version, view).unwrap(), want);

            let [s, v1, v2] = state(&reg);
            let x = |t: &Tuple| t.values()[1].as_int().unwrap();
            let above = |c: i64| Relation::from_tuples(2, s.iter().filter(|t| c < x(t)).cloned()).unwrap();
            prop_assert_eq!(v2, above(7));
            let ud = reg.physical().get(&pred("v1_ud")).unwrap();
            prop_assert!(ud.iter().all(|t| x(t) <= 4));
            prop_assert_eq!(v1, above(4).union(ud).unwrap());
        }
    }
}
