//! `.cosx` simulation scripts.
//!
//! ```text
//! # comment
//! register ver1
//! view ver1.s spec identity.dl
//! insert ver1.s (p4, 5)
//! delete ver1.s (p1, 1), (p2, 9)
//! expect ver2.v1 {(p4, 5)}
//! dump
//! ```
//!
//! Bare identifiers in tuples are strings. Spec paths are relative to the
//! script's directory.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::datalog::{Relation, Tuple, Value};
use crate::delta::Delta;
use crate::derive::{derive_all, BxSpec, DeriveError, DeriveOptions, DerivedBx};

use super::{RuntimeError, VersionRegistry};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ScriptError {
    #[error("line {line}: {message}")]
    Syntax { line: usize, message: String },
    #[error("line {line}: cannot read `{path}`: {message}")]
    Io {
        line: usize,
        path: String,
        message: String,
    },
    #[error("line {line}: {source}")]
    Derive { line: usize, source: DeriveError },
    #[error("line {line}: {source}")]
    Runtime { line: usize, source: RuntimeError },
    #[error("line {line}: expectation failed for `{target}`\n{diff}")]
    Expect {
        line: usize,
        target: String,
        diff: String,
    },
}

impl ScriptError {
    pub fn line(&self) -> usize {
        match self {
            ScriptError::Syntax { line, .. }
            | ScriptError::Io { line, .. }
            | ScriptError::Derive { line, .. }
            | ScriptError::Runtime { line, .. }
            | ScriptError::Expect { line, .. } => *line,
        }
    }
}

/// What a successful run printed, and how many expectations it checked.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct ScriptReport {
    pub output: String,
    pub expectations: usize,
    pub updates: usize,
}

#[derive(Debug, Clone, PartialEq)]
enum Command {
    Register(String),
    View {
        version: String,
        view: String,
        spec: String,
    },
    Update {
        version: String,
        view: String,
        insert: bool,
        tuples: Vec<Tuple>,
    },
    Expect {
        version: String,
        view: String,
        tuples: Vec<Tuple>,
    },
    Dump,
}

fn qualified(s: &str, line: usize) -> Result<(String, String), ScriptError> {
    match s.split_once('.') {
        Some((a, b)) if !a.is_empty() && !b.is_empty() => Ok((a.to_string(), b.to_string())),
        _ => Err(ScriptError::Syntax {
            line,
            message: format!("expected `version.view`, found `{s}`"),
        }),
    }
}

fn parse_value(tok: &str) -> Option<Value> {
    let tok = tok.trim();
    if let Ok(n) = tok.parse::<i64>() {
        return Some(Value::Int(n));
    }
    if let Some(inner) = tok.strip_prefix('"').and_then(|t| t.strip_suffix('"')) {
        return Some(Value::Str(
            inner.replace("\\\"", "\"").replace("\\\\", "\\"),
        ));
    }
    let ident = !tok.is_empty()
        && tok
            .chars()
            .next()
            .is_some_and(|c| c.is_alphabetic() || c == '_')
        && tok.chars().all(|c| c.is_alphanumeric() || c == '_');
    ident.then(|| Value::Str(tok.to_string()))
}

/// Parses `(a, b), (c, d)`; `{...}` braces are accepted around the list.
fn parse_tuples(text: &str, line: usize) -> Result<Vec<Tuple>, ScriptError> {
    let err = |m: &str| ScriptError::Syntax {
        line,
        message: m.to_string(),
    };
    let mut rest = text.trim();
    if let Some(inner) = rest.strip_prefix('{') {
        rest = inner
            .strip_suffix('}')
            .ok_or_else(|| err("unbalanced `{`"))?
            .trim();
    }
    let mut out = Vec::new();
    while !rest.is_empty() {
        let body = rest.strip_prefix('(').ok_or_else(|| err("expected `(`"))?;
        let close = body.find(')').ok_or_else(|| err("expected `)`"))?;
        let values = body[..close]
            .split(',')
            .map(|t| parse_value(t).ok_or_else(|| err(&format!("bad value `{}`", t.trim()))))
            .collect::<Result<Vec<_>, _>>()?;
        out.push(Tuple::new(values));
        rest = body[close + 1..].trim_start();
        if let Some(r) = rest.strip_prefix(',') {
            rest = r.trim_start();
            if rest.is_empty() {
                return Err(err("trailing `,`"));
            }
        } else if !rest.is_empty() {
            return Err(err("expected `,` between tuples"));
        }
    }
    Ok(out)
}

fn parse_line(text: &str, line: usize) -> Result<Option<Command>, ScriptError> {
    let text = match text.find('#') {
        Some(i) => &text[..i],
        None => text,
    }
    .trim();
    if text.is_empty() {
        return Ok(None);
    }
    let (word, rest) = text.split_once(char::is_whitespace).unwrap_or((text, ""));
    let rest = rest.trim();
    let syntax = |m: String| ScriptError::Syntax { line, message: m };
    let cmd = match word {
        "register" if !rest.is_empty() && !rest.contains(char::is_whitespace) => {
            Command::Register(rest.to_string())
        }
        "view" => {
            let parts: Vec<&str> = rest.split_whitespace().collect();
            let [target, "spec", path] = parts.as_slice() else {
                return Err(syntax(
                    "expected `view <version>.<name> spec <file>`".into(),
                ));
            };
            let (version, view) = qualified(target, line)?;
            Command::View {
                version,
                view,
                spec: path.to_string(),
            }
        }
        "insert" | "delete" | "expect" => {
            let (target, tuples) = rest.split_once(char::is_whitespace).unwrap_or((rest, ""));
            let (version, view) = qualified(target, line)?;
            let tuples = parse_tuples(tuples, line)?;
            if word == "expect" {
                Command::Expect {
                    version,
                    view,
                    tuples,
                }
            } else {
                if tuples.is_empty() {
                    return Err(syntax(format!("`{word}` needs at least one tuple")));
                }
                Command::Update {
                    version,
                    view,
                    insert: word == "insert",
                    tuples,
                }
            }
        }
        "dump" if rest.is_empty() => Command::Dump,
        _ => return Err(syntax(format!("unknown command `{text}`"))),
    };
    Ok(Some(cmd))
}

/// A line-oriented unified diff of two relations, tuples one per line.
pub(crate) fn relation_diff(expected: &Relation, actual: &Relation) -> String {
    let mut out = String::from("--- expected\n+++ actual\n");
    let mut all: Vec<&Tuple> = expected.iter().chain(actual.iter()).collect();
    all.sort();
    all.dedup();
    let _ = writeln!(out, "@@ -1,{} +1,{} @@", expected.len(), actual.len());
    for t in all {
        let mark = match (expected.contains(t), actual.contains(t)) {
            (true, true) => ' ',
            (true, false) => '-',
            _ => '+',
        };
        let _ = writeln!(out, "{mark}{t}");
    }
    out
}

fn relation(tuples: Vec<Tuple>, arity: usize, line: usize) -> Result<Relation, ScriptError> {
    Relation::from_tuples(arity, tuples).map_err(|e| ScriptError::Runtime {
        line,
        source: RuntimeError::Datalog(e),
    })
}

/// Runs a script against a fresh registry. Specs are derived with `options`
/// and cached per path.
pub fn run_script(
    text: &str,
    base_dir: &Path,
    options: &DeriveOptions,
) -> Result<ScriptReport, ScriptError> {
    let mut registry = VersionRegistry::new();
    let mut specs: BTreeMap<PathBuf, DerivedBx> = BTreeMap::new();
    let mut report = ScriptReport::default();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let Some(cmd) = parse_line(raw, line)? else {
            continue;
        };
        let rt = |source| ScriptError::Runtime { line, source };
        match cmd {
            Command::Register(id) => {
                registry.register_version(&id, []).map_err(rt)?;
            }
            Command::View {
                version,
                view,
                spec,
            } => {
                let path = base_dir.join(&spec);
                if !specs.contains_key(&path) {
                    let text = std::fs::read_to_string(&path).map_err(|e| ScriptError::Io {
                        line,
                        path: path.display().to_string(),
                        message: e.to_string(),
                    })?;
                    let derive = |source| ScriptError::Derive { line, source };
                    let parsed = BxSpec::parse(&text).map_err(derive)?;
                    let bx = derive_all(&parsed, options).map_err(derive)?;
                    specs.insert(path.clone(), bx);
                }
                registry
                    .add_view(&version, &view, &specs[&path])
                    .map_err(rt)?;
            }
            Command::Update {
                version,
                view,
                insert,
                tuples,
            } => {
                let arity = registry.view_arity(&version, &view).map_err(rt)?;
                let rel = relation(tuples, arity, line)?;
                let delta = if insert {
                    Delta::insertions(rel)
                } else {
                    Delta::deletions(rel)
                };
                let record = registry.update_view(&version, &view, &delta).map_err(rt)?;
                let _ = writeln!(report.output, "{record}");
                report.updates += 1;
            }
            Command::Expect {
                version,
                view,
                tuples,
            } => {
                let arity = registry.view_arity(&version, &view).map_err(rt)?;
                let expected = relation(tuples, arity, line)?;
                let actual = registry.query_view(&version, &view).map_err(rt)?;
                if actual != expected {
                    return Err(ScriptError::Expect {
                        line,
                        target: format!("{version}.{view}"),
                        diff: relation_diff(&expected, &actual),
                    });
                }
                report.expectations += 1;
            }
            Command::Dump => {
                report.output.push_str(&registry.snapshot().map_err(rt)?);
            }
        }
    }
    Ok(report)
}
