//! Acceptance run: one PASS/FAIL line per criterion, nonzero exit on any
//! failure.

#[path = "../../core/tests/common/mod.rs"]
mod common;

use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use coexist_cli::run;
use coexist_core::datalog::{evaluate, parse_program, Instance, Prepared, Program, Relation, Rule};
use coexist_core::derive::{
    derive_all, derive_unchecked, undef_by_definition, BxSpec, DeriveOptions, DerivedBx,
};
use coexist_core::runtime::run_script;
use coexist_core::verify::{check_getput, check_putget, check_totality, Universe};

use common::{naive, pred, selection_spec, specs_dir};

type Verdict = Result<String, String>;
type Criterion = (&'static str, fn() -> Verdict);

fn root() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../..")
}

fn cli(args: &[&str]) -> (i32, String, String) {
    let (mut out, mut err) = (Vec::new(), Vec::new());
    let code = run(
        std::iter::once("coexist").chain(args.iter().copied()),
        &mut out,
        &mut err,
    );
    (
        code,
        String::from_utf8_lossy(&out).into_owned(),
        String::from_utf8_lossy(&err).into_owned(),
    )
}

fn secs(d: Duration) -> String {
    format!("{:.2} s", d.as_secs_f64())
}

fn rules(text: &str) -> Result<BTreeSet<Rule>, String> {
    let p = parse_program(text).map_err(|e| e.to_string())?;
    Ok(p.rules().iter().map(Rule::normalized).collect())
}

fn selection() -> DerivedBx {
    let text = fs::read_to_string(specs_dir().join("selection.dl")).unwrap();
    derive_all(&BxSpec::parse(&text).unwrap(), &DeriveOptions::default()).unwrap()
}

fn golden_derivation() -> Verdict {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let spec = specs_dir().join("selection.dl");
    let start = Instant::now();
    let (code, _, stderr) = cli(&[
        "derive",
        "--spec",
        spec.to_str().unwrap(),
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    let elapsed = start.elapsed();
    if code != 0 {
        return Err(format!("derive exited {code}: {stderr}"));
    }
    let expected = [
        ("get.dl", "v1(X) :- s(X), 4 < X."),
        (
            "putdelta_prime.dl",
            "+s(X) :- v1_cur(X), not -v1(X), not s(X), 4 < X.\n\
             +s(X) :- +v1(X), not s(X), 4 < X.\n\
             -s(X) :- not v1_cur(X), not +v1(X), s(X), 4 < X.\n\
             -s(X) :- -v1(X), not +v1(X), s(X), 4 < X.\n\
             v1_cur(X) :- s(X), 4 < X.",
        ),
        (
            "undef.dl",
            "+v1_ud(X) :- not v1_ud(X), v1(X), not 4 < X.\n\
             -v1_ud(X) :- v1_ud(X), not v1(X), not 4 < X.",
        ),
        (
            "get_prime.dl",
            "v1(X) :- s(X), 4 < X.\nv1(X) :- v1_ud(X), not 4 < X.",
        ),
    ];
    for (file, want) in expected {
        let got = fs::read_to_string(dir.path().join(file)).map_err(|e| e.to_string())?;
        if rules(&got)? != rules(want)? {
            return Err(format!("{file} differs:\n{got}"));
        }
    }
    if elapsed >= Duration::from_secs(1) {
        return Err(format!("took {}, limit 1 s", secs(elapsed)));
    }
    Ok(format!("4 programs match, {}", secs(elapsed)))
}

fn bidirectionality() -> Verdict {
    let d = selection();
    let v = &d.views()[0];
    let u = Universe::range(0, 10, 3).unwrap();
    let start = Instant::now();
    let gp = check_getput(&v.get, &v.putdelta, &u).map_err(|e| e.to_string())?;
    let pg = check_putget(&v.get, &v.putdelta, &u).map_err(|e| e.to_string())?;
    let elapsed = start.elapsed();
    for r in [&gp, &pg] {
        if !r.passed() {
            return Err(r.to_string());
        }
    }
    Ok(format!(
        "universe 0..=10, size <= 3: GetPut {} cases, PutGet {} cases, {}",
        gp.cases,
        pg.cases,
        secs(elapsed)
    ))
}

fn totality() -> Verdict {
    let d = selection();
    let u = Universe::range(0, 10, 3).unwrap();
    let start = Instant::now();
    let r = check_totality(&d, &u).map_err(|e| e.to_string())?;
    let elapsed = start.elapsed();
    if !r.passed() {
        return Err(r.to_string());
    }
    Ok(format!(
        "bound 0..=10, size <= 3 for s, v1_ud and v1: {} cases, {}",
        r.cases,
        secs(elapsed)
    ))
}

fn scenario_replay() -> Verdict {
    let dir = specs_dir().join("versions");
    let mut checked = 0;
    for name in [
        "insert_via_ver1.cosx",
        "insert_via_v1.cosx",
        "unsynchronized_insert.cosx",
    ] {
        let text = fs::read_to_string(dir.join(name)).map_err(|e| e.to_string())?;
        let report = run_script(&text, &dir, &DeriveOptions::default())
            .map_err(|e| format!("{name}: {e}"))?;
        checked += report.expectations;
    }
    Ok(format!("3 scripts, {checked} expectations"))
}

fn negative_controls() -> Verdict {
    let d = selection();
    let mut views = d.views().to_vec();
    views[0].undef = Program::empty();
    let without_undef = DerivedBx::new(views).map_err(|e| e.to_string())?;
    let u = Universe::range(0, 10, 3).unwrap();
    let r = check_totality(&without_undef, &u).map_err(|e| e.to_string())?;
    let Some(c) = r.counterexample.as_ref().filter(|_| !r.passed()) else {
        return Err("totality passed without undef".into());
    };
    let v1 = pred("v1");
    let current = evaluate(without_undef.get_prime(), &c.source).map_err(|e| e.to_string())?;
    let target = c.view.as_ref().and_then(|v| v.get(&v1)).cloned();
    let inserted = target
        .unwrap_or_else(|| Relation::new(1))
        .difference(current.get(&v1).unwrap())
        .unwrap();
    let violating: Vec<i64> = inserted
        .iter()
        .filter_map(|t| t.values()[0].as_int())
        .filter(|&x| x <= 4)
        .collect();
    if violating.is_empty() {
        return Err(format!("counterexample inserts no tuple with x <= 4:\n{r}"));
    }

    let weakened = parse_program(
        "source s(x).\nview v1(x).\n\
         +s(X) :- v1(X), not s(X), 4 < X.\n\
         -s(X) :- not v1(X), s(X).\n",
    )
    .unwrap();
    let gp = check_getput(&d.views()[0].get, &weakened, &u).map_err(|e| e.to_string())?;
    if gp.passed() {
        return Err("GetPut passed with a weakened -s guard".into());
    }
    Ok(format!(
        "no undef: Totality fails inserting x = {}; weak -s: GetPut fails",
        violating[0]
    ))
}

fn random_relation(rng: &mut ChaCha8Rng) -> Relation {
    let n = rng.gen_range(0..=4);
    Relation::unary((0..n).map(|_| rng.gen_range(0..=10)))
}

fn oracle_equivalence() -> Verdict {
    let mut family: Vec<(i64, Vec<Program>)> = Vec::new();
    for c in 0..=10 {
        let spec = BxSpec::parse(&selection_spec(c)).unwrap();
        let d = derive_unchecked(&spec).map_err(|e| e.to_string())?;
        let by_definition =
            undef_by_definition(d.putdelta_prime(), &spec).map_err(|e| e.to_string())?;
        family.push((
            c,
            vec![
                d.get().clone(),
                d.putdelta().clone(),
                d.putdelta_prime().clone(),
                d.undef().clone(),
                d.get_prime().clone(),
                by_definition,
            ],
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(20);
    let cases = 1000;
    for i in 0..cases {
        let (c, programs) = &family[rng.gen_range(0..family.len())];
        let p = &programs[rng.gen_range(0..programs.len())];
        let inputs: Vec<_> = Prepared::new(p)
            .map_err(|e| e.to_string())?
            .inputs()
            .cloned()
            .collect();
        let mut input = Instance::new();
        for q in inputs {
            input.insert(q, random_relation(&mut rng));
        }
        let fast = evaluate(p, &input).map_err(|e| e.to_string())?;
        let slow = naive(p, &input);
        if fast != slow {
            return Err(format!(
                "case {i} (threshold {c}) differs on\n{p}\ninput {input:?}"
            ));
        }
    }
    Ok(format!("{cases} cases, exact equality"))
}

fn sql_snapshots() -> Verdict {
    let mut files = 0;
    for (name, view) in [("selection", "v1"), ("identity", "v")] {
        let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
        let spec = root().join("specs").join(format!("{name}.dl"));
        let (code, _, stderr) = cli(&[
            "emit-sql",
            "--spec",
            spec.to_str().unwrap(),
            "--out",
            dir.path().to_str().unwrap(),
        ]);
        if code != 0 {
            return Err(format!("emit-sql exited {code}: {stderr}"));
        }
        let snapshots = Path::new(env!("CARGO_MANIFEST_DIR"))
            .join("tests/snapshots")
            .join(name);
        for file in [format!("{view}.view.sql"), format!("{view}.triggers.sql")] {
            let got = fs::read(dir.path().join(&file)).map_err(|e| e.to_string())?;
            let want = fs::read(snapshots.join(&file)).map_err(|e| e.to_string())?;
            if got != want {
                return Err(format!("{name}/{file} differs from the snapshot"));
            }
            files += 1;
        }
    }
    Ok(format!("{files} files byte-identical"))
}

fn main() {
    let criteria: [Criterion; 7] = [
        ("golden derivation", golden_derivation),
        ("bidirectionality", bidirectionality),
        ("totality", totality),
        ("scenario replay", scenario_replay),
        ("negative controls", negative_controls),
        ("oracle equivalence", oracle_equivalence),
        ("sql snapshots", sql_snapshots),
    ];
    let mut failed = 0;
    for (name, check) in criteria {
        match check() {
            Ok(detail) => println!("PASS {name}: {detail}"),
            Err(why) => {
                failed += 1;
                println!("FAIL {name}: {why}");
            }
        }
    }
    println!(
        "{} of {} criteria passed",
        criteria.len() - failed,
        criteria.len()
    );
    if failed > 0 {
        std::process::exit(1);
    }
}
