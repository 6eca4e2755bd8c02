//! SQL rendering: `get'` as `CREATE VIEW`, `putdelta` and `undef` as
//! row-level `INSTEAD OF` triggers on the view.
//!
//! Output is plain text with LF line endings and two-space indentation, so
//! that it can be compared byte for byte.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::datalog::{
    Comparison, Declaration, Flavor, Literal, PredicateRef, Program, Role, Rule, Term, Value,
};
use crate::derive::DerivedBx;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SqlError {
    #[error("unsupported construct in `{rule}`: {reason}")]
    Unsupported { rule: String, reason: String },
    #[error("`{0}` is not declared")]
    Undeclared(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Dialect {
    #[default]
    Generic,
}

/// The SQL for one view.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SqlArtifact {
    pub view: String,
    pub dialect: Dialect,
    pub view_sql: String,
    pub triggers_sql: String,
}

impl SqlArtifact {
    pub fn view_file(&self) -> String {
        format!("{}.view.sql", self.view)
    }

    pub fn triggers_file(&self) -> String {
        format!("{}.triggers.sql", self.view)
    }

    /// Writes both files into `dir`; returns their paths.
    pub fn write_to(&self, dir: &Path) -> std::io::Result<[PathBuf; 2]> {
        let v = dir.join(self.view_file());
        let t = dir.join(self.triggers_file());
        std::fs::write(&v, &self.view_sql)?;
        std::fs::write(&t, &self.triggers_sql)?;
        Ok([v, t])
    }
}

fn unsupported(rule: &Rule, reason: &str) -> SqlError {
    SqlError::Unsupported {
        rule: rule.to_string(),
        reason: reason.to_string(),
    }
}

fn columns(program: &Program, pred: &PredicateRef) -> Result<Vec<String>, SqlError> {
    program
        .declaration(pred)
        .map(Declaration::columns)
        .ok_or_else(|| SqlError::Undeclared(pred.to_string()))
}

fn literal(v: &Value) -> String {
    match v {
        Value::Int(n) => n.to_string(),
        Value::Str(s) => format!("'{}'", s.replace('\'', "''")),
    }
}

fn term(t: &Term, vars: &BTreeMap<String, String>) -> String {
    match t {
        Term::Var(v) => vars[v].clone(),
        Term::Const(c) => literal(c),
    }
}

fn comparison(c: &Comparison, positive: bool, vars: &BTreeMap<String, String>) -> String {
    let text = format!(
        "{} {} {}",
        term(&c.left, vars),
        c.op.symbol(),
        term(&c.right, vars)
    );
    if positive {
        text
    } else {
        format!("NOT ({text})")
    }
}

fn not_exists(table: &str, cols: &[String], args: &[String]) -> String {
    let cond: Vec<String> = cols
        .iter()
        .zip(args)
        .map(|(c, a)| format!("{c} = {a}"))
        .collect();
    format!(
        "NOT EXISTS (SELECT 1 FROM {table} WHERE {})",
        cond.join(" AND ")
    )
}

/// One `get'` rule as a `SELECT` over its single positive atom.
fn select(program: &Program, rule: &Rule, out_cols: &[String]) -> Result<String, SqlError> {
    let positive: Vec<_> = rule.positive_atoms().collect();
    let [from] = positive.as_slice() else {
        return Err(unsupported(
            rule,
            "exactly one positive relation literal is supported",
        ));
    };
    let from_cols = columns(program, &from.pred)?;
    let mut vars = BTreeMap::new();
    let mut conds = Vec::new();
    for (t, c) in from.args.iter().zip(&from_cols) {
        match t {
            Term::Var(v) => {
                if let Some(prev) = vars.get(v) {
                    conds.push(format!("{prev} = {c}"));
                } else {
                    vars.insert(v.clone(), c.clone());
                }
            }
            Term::Const(k) => conds.push(format!("{c} = {}", literal(k))),
        }
    }
    for l in &rule.body {
        match l {
            Literal::Cmp { cmp, positive } => conds.push(comparison(cmp, *positive, &vars)),
            Literal::Rel {
                atom,
                positive: false,
            } => {
                let cols = columns(program, &atom.pred)?;
                let args: Vec<String> = atom.args.iter().map(|t| term(t, &vars)).collect();
                conds.push(not_exists(&atom.pred.to_string(), &cols, &args));
            }
            Literal::Rel { .. } => {}
        }
    }
    let projection: Vec<String> = rule
        .head
        .args
        .iter()
        .zip(out_cols)
        .map(|(t, out)| {
            let expr = term(t, &vars);
            if &expr == out {
                expr
            } else {
                format!("{expr} AS {out}")
            }
        })
        .collect();
    let mut s = format!("SELECT {} FROM {}", projection.join(", "), from.pred);
    if !conds.is_empty() {
        let _ = write!(s, " WHERE {}", conds.join(" AND "));
    }
    Ok(s)
}

/// One `CREATE VIEW` per declared view of `get_prime`, in declaration order.
pub fn emit_view(get_prime: &Program) -> Result<Vec<String>, SqlError> {
    get_prime
        .declared(Role::View)
        .map(|decl| {
            let out_cols = decl.columns();
            let selects = get_prime
                .rules_for(&decl.pred)
                .map(|r| select(get_prime, r, &out_cols))
                .collect::<Result<Vec<_>, _>>()?;
            if selects.is_empty() {
                let null: Vec<String> = out_cols.iter().map(|c| format!("NULL AS {c}")).collect();
                return Ok(format!(
                    "CREATE VIEW {} AS SELECT {} WHERE 1 = 0;\n",
                    decl.pred,
                    null.join(", ")
                ));
            }
            Ok(format!(
                "CREATE VIEW {} AS {};\n",
                decl.pred,
                selects.join(" UNION ")
            ))
        })
        .collect()
}

/// The write a delta rule performs, as one SQL statement over `NEW`/`OLD`.
struct Action {
    guard: Vec<String>,
    statement: String,
}

fn action(
    program: &Program,
    rule: &Rule,
    view: &Declaration,
    row: &str,
) -> Result<Action, SqlError> {
    let target = rule
        .head
        .pred
        .with_flavor(rule.head.pred.flavor.delta_target().expect("delta head").0);
    let target_cols = columns(program, &target)?;
    let view_cols = view.columns();
    let view_atom = rule
        .body
        .iter()
        .filter_map(Literal::atom)
        .find(|a| a.pred == view.pred)
        .ok_or_else(|| unsupported(rule, "delta rules must read the view"))?;
    let mut vars = BTreeMap::new();
    for (t, c) in view_atom.args.iter().zip(&view_cols) {
        let Term::Var(v) = t else {
            return Err(unsupported(rule, "view arguments must be variables"));
        };
        vars.insert(v.clone(), format!("{row}.{c}"));
    }
    let args: Vec<String> = rule
        .head
        .args
        .iter()
        .map(|t| match t {
            Term::Var(v) => vars
                .get(v)
                .cloned()
                .ok_or_else(|| unsupported(rule, "head variables must come from the view")),
            Term::Const(c) => Ok(literal(c)),
        })
        .collect::<Result<_, _>>()?;
    let guard = rule
        .body
        .iter()
        .filter_map(|l| match l {
            Literal::Cmp { cmp, positive } => Some(comparison(cmp, *positive, &vars)),
            _ => None,
        })
        .collect();
    let idempotent = rule
        .body
        .iter()
        .any(|l| matches!(l, Literal::Rel { atom, positive: false } if atom.pred == target));
    let table = target.to_string();
    let statement = if rule.head.pred.flavor.delta_target().expect("delta").1 {
        let mut s = format!(
            "INSERT INTO {table} ({}) SELECT {}",
            target_cols.join(", "),
            args.join(", ")
        );
        if idempotent {
            let _ = write!(s, " WHERE {}", not_exists(&table, &target_cols, &args));
        }
        s.push(';');
        s
    } else {
        let cond: Vec<String> = target_cols
            .iter()
            .zip(&args)
            .map(|(c, a)| format!("{c} = {a}"))
            .collect();
        format!("DELETE FROM {table} WHERE {};", cond.join(" AND "))
    };
    Ok(Action { guard, statement })
}

/// Picks the rules that implement one trigger: delta rules whose view literal
/// has the given polarity (reading `v` for inserts, `not v` for deletes).
fn handlers<'a>(
    program: &'a Program,
    view: &'a PredicateRef,
    flavors: [Flavor; 2],
    view_positive: bool,
) -> impl Iterator<Item = &'a Rule> + 'a {
    program.rules().iter().filter(move |r| {
        flavors.contains(&r.head.pred.flavor)
            && r.body.iter().any(|l| {
                l.atom().is_some_and(|a| &a.pred == view) && l.is_positive() == view_positive
            })
    })
}

fn condition(guards: &[Vec<String>]) -> String {
    if guards.len() == 1 {
        return guards[0].join(" AND ");
    }
    guards
        .iter()
        .map(|g| format!("({})", g.join(" AND ")))
        .collect::<Vec<_>>()
        .join(" OR ")
}

fn trigger(view: &Declaration, event: &str, synced: Vec<Action>, unsynced: Vec<Action>) -> String {
    let mut s = String::new();
    let name = format!("{}_{}", view.pred, event.to_lowercase());
    let _ = writeln!(
        s,
        "CREATE TRIGGER {name} INSTEAD OF {event} ON {}",
        view.pred
    );
    let _ = writeln!(s, "FOR EACH ROW");
    let _ = writeln!(s, "BEGIN");
    let unguarded = synced.iter().any(|a| a.guard.is_empty());
    let statements = |s: &mut String, actions: &[Action], indent: &str| {
        let mut seen = Vec::new();
        for a in actions {
            if !seen.contains(&&a.statement) {
                let _ = writeln!(s, "{indent}{}", a.statement);
                seen.push(&a.statement);
            }
        }
    };
    if unsynced.is_empty() || unguarded {
        statements(&mut s, &synced, "  ");
    } else if synced.is_empty() {
        statements(&mut s, &unsynced, "  ");
    } else {
        let guards: Vec<Vec<String>> = synced.iter().map(|a| a.guard.clone()).collect();
        let _ = writeln!(s, "  IF {} THEN", condition(&guards));
        statements(&mut s, &synced, "    ");
        let _ = writeln!(s, "  ELSE");
        statements(&mut s, &unsynced, "    ");
        let _ = writeln!(s, "  END IF;");
    }
    let _ = writeln!(s, "END;");
    s
}

/// An `INSTEAD OF INSERT` and an `INSTEAD OF DELETE` trigger per view of
/// `putdelta`. The branch guarded by the view's condition writes the source;
/// the other branch, from `undef`, writes the auxiliary relation.
pub fn emit_triggers(putdelta: &Program, undef: &Program) -> Result<Vec<String>, SqlError> {
    let mut out = Vec::new();
    let merged = undef
        .union(putdelta)
        .map_err(|e| SqlError::Undeclared(e.to_string()))?;
    for view in putdelta.declared(Role::View) {
        for (event, view_positive) in [("INSERT", true), ("DELETE", false)] {
            let (src, aux) = if view_positive {
                ([Flavor::Insert; 2], [Flavor::AuxInsert; 2])
            } else {
                ([Flavor::Delete; 2], [Flavor::AuxDelete; 2])
            };
            let row = if view_positive { "NEW" } else { "OLD" };
            let synced = handlers(putdelta, &view.pred, src, view_positive)
                .map(|r| action(&merged, r, view, row))
                .collect::<Result<Vec<_>, _>>()?;
            let unsynced = handlers(undef, &view.pred, aux, view_positive)
                .map(|r| action(&merged, r, view, row))
                .collect::<Result<Vec<_>, _>>()?;
            out.push(trigger(view, event, synced, unsynced));
        }
    }
    Ok(out)
}

/// View and trigger SQL for every view of a derivation.
pub fn emit(derived: &DerivedBx) -> Result<Vec<SqlArtifact>, SqlError> {
    derived
        .views()
        .iter()
        .map(|v| {
            let view_sql = emit_view(&v.get_prime)?.concat();
            let triggers_sql = emit_triggers(&v.putdelta, &v.undef)?.join("\n");
            Ok(SqlArtifact {
                view: v.view.to_string(),
                dialect: Dialect::Generic,
                view_sql,
                triggers_sql,
            })
        })
        .collect()
}
