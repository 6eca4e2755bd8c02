//! Syntax tree for the rule dialect: terms, atoms, literals, rules and programs,
//! together with the canonical pretty-printer (`Display`).

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use super::error::DatalogError;

/// A constant value. Integers order before strings.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Value {
    Int(i64),
    Str(String),
}

impl Value {
    pub fn as_int(&self) -> Option<i64> {
        match self {
            Value::Int(i) => Some(*i),
            Value::Str(_) => None,
        }
    }
}

impl From<i64> for Value {
    fn from(v: i64) -> Self {
        Value::Int(v)
    }
}

impl From<&str> for Value {
    fn from(v: &str) -> Self {
        Value::Str(v.to_string())
    }
}

impl fmt::Display for Value {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Value::Int(i) => write!(f, "{i}"),
            Value::Str(s) => {
                f.write_str("\"")?;
                for c in s.chars() {
                    match c {
                        '"' => f.write_str("\\\"")?,
                        '\\' => f.write_str("\\\\")?,
                        '\n' => f.write_str("\\n")?,
                        c => write!(f, "{c}")?,
                    }
                }
                f.write_str("\"")
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Term {
    Var(String),
    Const(Value),
}

impl Term {
    pub fn var(name: impl Into<String>) -> Self {
        Term::Var(name.into())
    }

    pub fn int(v: i64) -> Self {
        Term::Const(Value::Int(v))
    }

    pub fn as_var(&self) -> Option<&str> {
        match self {
            Term::Var(v) => Some(v),
            Term::Const(_) => None,
        }
    }
}

impl fmt::Display for Term {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Term::Var(v) => f.write_str(v),
            Term::Const(c) => write!(f, "{c}"),
        }
    }
}

/// The role a relation plays relative to a base name.
///
/// Surface forms: `r`, `+r`, `-r`, `r_cur`, `r_ud`, `+r_ud`, `-r_ud`, `pm_r`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Flavor {
    Base,
    Insert,
    Delete,
    Current,
    Aux,
    AuxInsert,
    AuxDelete,
    PlusMinus,
}

impl Flavor {
    /// For delta flavors, the relation the delta applies to and whether it inserts.
    pub fn delta_target(self) -> Option<(Flavor, bool)> {
        match self {
            Flavor::Insert => Some((Flavor::Base, true)),
            Flavor::Delete => Some((Flavor::Base, false)),
            Flavor::AuxInsert => Some((Flavor::Aux, true)),
            Flavor::AuxDelete => Some((Flavor::Aux, false)),
            _ => None,
        }
    }

    pub fn is_delta(self) -> bool {
        self.delta_target().is_some()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct PredicateRef {
    pub name: String,
    pub flavor: Flavor,
}

impl PredicateRef {
    pub fn new(name: impl Into<String>, flavor: Flavor) -> Self {
        PredicateRef {
            name: name.into(),
            flavor,
        }
    }

    pub fn base(name: impl Into<String>) -> Self {
        Self::new(name, Flavor::Base)
    }

    pub fn with_flavor(&self, flavor: Flavor) -> Self {
        Self::new(self.name.clone(), flavor)
    }

    /// Interprets a surface identifier, e.g. `+v1_ud` or `pm_s`.
    pub fn parse(text: &str) -> Option<Self> {
        let (sign, rest) = match text.as_bytes().first()? {
            b'+' => (Some(true), &text[1..]),
            b'-' => (Some(false), &text[1..]),
            _ => (None, text),
        };
        if !is_predicate_ident(rest) {
            return None;
        }
        let (name, flavor) = if let Some(base) = rest.strip_prefix("pm_") {
            if sign.is_some() {
                return None;
            }
            (base, Flavor::PlusMinus)
        } else if let Some(base) = rest.strip_suffix("_cur") {
            if sign.is_some() {
                return None;
            }
            (base, Flavor::Current)
        } else if let Some(base) = rest.strip_suffix("_ud") {
            let flavor = match sign {
                None => Flavor::Aux,
                Some(true) => Flavor::AuxInsert,
                Some(false) => Flavor::AuxDelete,
            };
            (base, flavor)
        } else {
            let flavor = match sign {
                None => Flavor::Base,
                Some(true) => Flavor::Insert,
                Some(false) => Flavor::Delete,
            };
            (rest, flavor)
        };
        if !is_predicate_ident(name) {
            return None;
        }
        Some(PredicateRef::new(name, flavor))
    }
}

pub(crate) fn is_predicate_ident(s: &str) -> bool {
    let mut chars = s.chars();
    matches!(chars.next(), Some(c) if c.is_ascii_lowercase())
        && chars.all(|c| c.is_ascii_alphanumeric() || c == '_')
}

pub(crate) fn is_variable_ident(s: &str) -> bool {
    let mut chars = s.chars();
    matches!(chars.next(), Some(c) if c.is_ascii_uppercase())
        && chars.all(|c| c.is_ascii_alphanumeric() || c == '_')
}

impl fmt::Display for PredicateRef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let n = &self.name;
        match self.flavor {
            Flavor::Base => write!(f, "{n}"),
            Flavor::Insert => write!(f, "+{n}"),
            Flavor::Delete => write!(f, "-{n}"),
            Flavor::Current => write!(f, "{n}_cur"),
            Flavor::Aux => write!(f, "{n}_ud"),
            Flavor::AuxInsert => write!(f, "+{n}_ud"),
            Flavor::AuxDelete => write!(f, "-{n}_ud"),
            Flavor::PlusMinus => write!(f, "pm_{n}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Atom {
    pub pred: PredicateRef,
    pub args: Vec<Term>,
}

impl Atom {
    pub fn new(pred: PredicateRef, args: Vec<Term>) -> Self {
        Atom { pred, args }
    }

    pub fn arity(&self) -> usize {
        self.args.len()
    }

    pub fn variables(&self) -> impl Iterator<Item = &str> {
        self.args.iter().filter_map(Term::as_var)
    }
}

impl fmt::Display for Atom {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}(", self.pred)?;
        for (i, a) in self.args.iter().enumerate() {
            if i > 0 {
                f.write_str(", ")?;
            }
            write!(f, "{a}")?;
        }
        f.write_str(")")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum CmpOp {
    Lt,
    Gt,
    Le,
    Ge,
    Eq,
    Ne,
}

impl CmpOp {
    pub fn holds(self, l: i64, r: i64) -> bool {
        match self {
            CmpOp::Lt => l < r,
            CmpOp::Gt => l > r,
            CmpOp::Le => l <= r,
            CmpOp::Ge => l >= r,
            CmpOp::Eq => l == r,
            CmpOp::Ne => l != r,
        }
    }

    pub fn symbol(self) -> &'static str {
        match self {
            CmpOp::Lt => "<",
            CmpOp::Gt => ">",
            CmpOp::Le => "<=",
            CmpOp::Ge => ">=",
            CmpOp::Eq => "=",
            CmpOp::Ne => "<>",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Comparison {
    pub left: Term,
    pub op: CmpOp,
    pub right: Term,
}

impl Comparison {
    pub fn new(left: Term, op: CmpOp, right: Term) -> Self {
        Comparison { left, op, right }
    }

    pub fn variables(&self) -> impl Iterator<Item = &str> {
        [&self.left, &self.right]
            .into_iter()
            .filter_map(|t| t.as_var())
    }
}

impl fmt::Display for Comparison {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} {} {}", self.left, self.op.symbol(), self.right)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Literal {
    Rel { atom: Atom, positive: bool },
    Cmp { cmp: Comparison, positive: bool },
}

impl Literal {
    pub fn pos(atom: Atom) -> Self {
        Literal::Rel {
            atom,
            positive: true,
        }
    }

    pub fn neg(atom: Atom) -> Self {
        Literal::Rel {
            atom,
            positive: false,
        }
    }

    pub fn cmp(cmp: Comparison) -> Self {
        Literal::Cmp {
            cmp,
            positive: true,
        }
    }

    pub fn is_positive(&self) -> bool {
        match self {
            Literal::Rel { positive, .. } | Literal::Cmp { positive, .. } => *positive,
        }
    }

    pub fn atom(&self) -> Option<&Atom> {
        match self {
            Literal::Rel { atom, .. } => Some(atom),
            Literal::Cmp { .. } => None,
        }
    }

    pub fn negated(&self) -> Literal {
        match self {
            Literal::Rel { atom, positive } => Literal::Rel {
                atom: atom.clone(),
                positive: !positive,
            },
            Literal::Cmp { cmp, positive } => Literal::Cmp {
                cmp: cmp.clone(),
                positive: !positive,
            },
        }
    }

    pub fn variables(&self) -> Vec<&str> {
        match self {
            Literal::Rel { atom, .. } => atom.variables().collect(),
            Literal::Cmp { cmp, .. } => cmp.variables().collect(),
        }
    }
}

impl fmt::Display for Literal {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if !self.is_positive() {
            f.write_str("not ")?;
        }
        match self {
            Literal::Rel { atom, .. } => write!(f, "{atom}"),
            Literal::Cmp { cmp, .. } => write!(f, "{cmp}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Rule {
    pub head: Atom,
    pub body: Vec<Literal>,
}

impl Rule {
    pub fn new(head: Atom, body: Vec<Literal>) -> Self {
        Rule { head, body }
    }

    pub fn positive_atoms(&self) -> impl Iterator<Item = &Atom> {
        self.body.iter().filter_map(|l| match l {
            Literal::Rel {
                atom,
                positive: true,
            } => Some(atom),
            _ => None,
        })
    }

    pub fn comparisons(&self) -> impl Iterator<Item = (&Comparison, bool)> {
        self.body.iter().filter_map(|l| match l {
            Literal::Cmp { cmp, positive } => Some((cmp, *positive)),
            _ => None,
        })
    }

    /// Every predicate referenced in the body, with the literal's polarity.
    pub fn dependencies(&self) -> impl Iterator<Item = (&PredicateRef, bool)> {
        self.body.iter().filter_map(|l| match l {
            Literal::Rel { atom, positive } => Some((&atom.pred, *positive)),
            _ => None,
        })
    }

    /// First variable that violates range restriction, if any.
    pub fn unsafe_variable(&self) -> Option<&str> {
        let bound: BTreeSet<&str> = self.positive_atoms().flat_map(Atom::variables).collect();
        let mut needed = self.head.variables().collect::<Vec<_>>();
        for lit in &self.body {
            match lit {
                Literal::Rel { positive: true, .. } => {}
                other => needed.extend(other.variables()),
            }
        }
        needed.into_iter().find(|v| !bound.contains(v))
    }

    pub fn apply(&self, subst: &BTreeMap<String, Term>) -> Rule {
        let map_atom = |a: &Atom| Atom {
            pred: a.pred.clone(),
            args: a.args.iter().map(|t| substitute(t, subst)).collect(),
        };
        Rule {
            head: map_atom(&self.head),
            body: self
                .body
                .iter()
                .map(|l| match l {
                    Literal::Rel { atom, positive } => Literal::Rel {
                        atom: map_atom(atom),
                        positive: *positive,
                    },
                    Literal::Cmp { cmp, positive } => Literal::Cmp {
                        cmp: Comparison {
                            left: substitute(&cmp.left, subst),
                            op: cmp.op,
                            right: substitute(&cmp.right, subst),
                        },
                        positive: *positive,
                    },
                })
                .collect(),
        }
    }

    pub fn variables(&self) -> BTreeSet<String> {
        let mut out: BTreeSet<String> = self.head.variables().map(str::to_string).collect();
        for l in &self.body {
            out.extend(l.variables().into_iter().map(str::to_string));
        }
        out
    }

    /// Variables renamed `V0, V1, ...` by first occurrence (head first) and body
    /// literals sorted. Two rules equal up to renaming and literal order map to
    /// the same normal form when their bodies have no ties after renaming.
    pub fn normalized(&self) -> Rule {
        let mut order: Vec<String> = Vec::new();
        let mut note = |t: &Term| {
            if let Term::Var(v) = t {
                if !order.contains(v) {
                    order.push(v.clone());
                }
            }
        };
        self.head.args.iter().for_each(&mut note);
        // Body variables are ordered after sorting by a variable-blind key so
        // that literal order does not influence the renaming.
        let mut body: Vec<&Literal> = self.body.iter().collect();
        body.sort_by_key(|l| blind_key(l));
        for l in &body {
            match l {
                Literal::Rel { atom, .. } => atom.args.iter().for_each(&mut note),
                Literal::Cmp { cmp, .. } => {
                    note(&cmp.left);
                    note(&cmp.right);
                }
            }
        }
        let subst: BTreeMap<String, Term> = order
            .iter()
            .enumerate()
            .map(|(i, v)| (v.clone(), Term::Var(format!("V{i}"))))
            .collect();
        let mut out = self.apply(&subst);
        out.body.sort();
        out
    }
}

fn blind_key(l: &Literal) -> String {
    let blind = |t: &Term| match t {
        Term::Var(_) => "_".to_string(),
        Term::Const(c) => c.to_string(),
    };
    match l {
        Literal::Rel { atom, positive } => format!(
            "{}{}({})",
            if *positive { "" } else { "~" },
            atom.pred,
            atom.args.iter().map(blind).collect::<Vec<_>>().join(",")
        ),
        Literal::Cmp { cmp, positive } => format!(
            "{}#{}{}{}",
            if *positive { "" } else { "~" },
            blind(&cmp.left),
            cmp.op.symbol(),
            blind(&cmp.right)
        ),
    }
}

fn substitute(t: &Term, subst: &BTreeMap<String, Term>) -> Term {
    match t {
        Term::Var(v) => subst.get(v).cloned().unwrap_or_else(|| t.clone()),
        Term::Const(_) => t.clone(),
    }
}

impl fmt::Display for Rule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} :- ", self.head)?;
        for (i, l) in self.body.iter().enumerate() {
            if i > 0 {
                f.write_str(", ")?;
            }
            write!(f, "{l}")?;
        }
        f.write_str(".")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Role {
    Source,
    View,
}

impl Role {
    pub fn keyword(self) -> &'static str {
        match self {
            Role::Source => "source",
            Role::View => "view",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Declaration {
    pub role: Role,
    pub pred: PredicateRef,
    pub arity: usize,
    /// Column names, when declared as `source s(pk, x).` rather than `source s/2.`
    pub attributes: Option<Vec<String>>,
}

impl Declaration {
    pub fn new(role: Role, pred: PredicateRef, arity: usize) -> Self {
        Declaration {
            role,
            pred,
            arity,
            attributes: None,
        }
    }

    pub fn with_attributes(role: Role, pred: PredicateRef, attributes: Vec<String>) -> Self {
        Declaration {
            role,
            pred,
            arity: attributes.len(),
            attributes: Some(attributes),
        }
    }

    /// Column names, defaulting to `c1..cn`.
    pub fn columns(&self) -> Vec<String> {
        match &self.attributes {
            Some(a) => a.clone(),
            None => (1..=self.arity).map(|i| format!("c{i}")).collect(),
        }
    }
}

impl fmt::Display for Declaration {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.attributes {
            Some(attrs) => write!(
                f,
                "{} {}({}).",
                self.role.keyword(),
                self.pred,
                attrs.join(", ")
            ),
            None => write!(f, "{} {}/{}.", self.role.keyword(), self.pred, self.arity),
        }
    }
}

/// A validated program: declarations plus rules, with consistent arities and
/// safe rules. Recursion is rejected separately by [`super::stratify`].
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Program {
    declarations: Vec<Declaration>,
    rules: Vec<Rule>,
}

impl Program {
    pub fn new(declarations: Vec<Declaration>, rules: Vec<Rule>) -> Result<Self, DatalogError> {
        let p = Program {
            declarations,
            rules,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn empty() -> Self {
        Program::default()
    }

    pub fn declarations(&self) -> &[Declaration] {
        &self.declarations
    }

    pub fn rules(&self) -> &[Rule] {
        &self.rules
    }

    pub fn is_empty(&self) -> bool {
        self.rules.is_empty()
    }

    pub fn declaration(&self, pred: &PredicateRef) -> Option<&Declaration> {
        self.declarations.iter().find(|d| &d.pred == pred)
    }

    pub fn declared(&self, role: Role) -> impl Iterator<Item = &Declaration> {
        self.declarations.iter().filter(move |d| d.role == role)
    }

    /// Predicates that appear as a rule head.
    pub fn defined(&self) -> BTreeSet<&PredicateRef> {
        self.rules.iter().map(|r| &r.head.pred).collect()
    }

    pub fn rules_for<'a>(&'a self, pred: &'a PredicateRef) -> impl Iterator<Item = &'a Rule> + 'a {
        self.rules.iter().filter(move |r| &r.head.pred == pred)
    }

    /// Arity of every predicate mentioned in declarations or rules.
    pub fn arities(&self) -> BTreeMap<PredicateRef, usize> {
        let mut out = BTreeMap::new();
        for d in &self.declarations {
            out.insert(d.pred.clone(), d.arity);
        }
        for r in &self.rules {
            out.entry(r.head.pred.clone()).or_insert(r.head.arity());
            for l in &r.body {
                if let Some(a) = l.atom() {
                    out.entry(a.pred.clone()).or_insert(a.arity());
                }
            }
        }
        out
    }

    /// A new program with the same declarations and the given rules.
    pub fn with_rules(&self, rules: Vec<Rule>) -> Result<Self, DatalogError> {
        Program::new(self.declarations.clone(), rules)
    }

    /// Concatenates declarations (first occurrence wins) and rules.
    pub fn union(&self, other: &Program) -> Result<Self, DatalogError> {
        let mut decls = self.declarations.clone();
        for d in &other.declarations {
            if !decls.iter().any(|x| x.pred == d.pred) {
                decls.push(d.clone());
            }
        }
        let mut rules = self.rules.clone();
        for r in &other.rules {
            if !rules.contains(r) {
                rules.push(r.clone());
            }
        }
        Program::new(decls, rules)
    }

    fn validate(&self) -> Result<(), DatalogError> {
        let mut arity: BTreeMap<&PredicateRef, usize> = BTreeMap::new();
        let mut seen_decl = BTreeSet::new();
        for d in &self.declarations {
            if !seen_decl.insert(&d.pred) {
                return Err(DatalogError::DuplicateDeclaration {
                    predicate: d.pred.to_string(),
                });
            }
            arity.insert(&d.pred, d.arity);
        }
        let atoms = self
            .rules
            .iter()
            .flat_map(|r| std::iter::once(&r.head).chain(r.body.iter().filter_map(Literal::atom)));
        for a in atoms {
            match arity.get(&a.pred) {
                Some(&n) if n != a.arity() => {
                    return Err(DatalogError::ArityClash {
                        predicate: a.pred.to_string(),
                        expected: n,
                        found: a.arity(),
                    })
                }
                Some(_) => {}
                None => {
                    arity.insert(&a.pred, a.arity());
                }
            }
        }
        for r in &self.rules {
            if r.body.is_empty() {
                return Err(DatalogError::EmptyBody {
                    rule: r.head.to_string(),
                });
            }
            if let Some(v) = r.unsafe_variable() {
                return Err(DatalogError::Unsafe {
                    rule: r.to_string(),
                    variable: v.to_string(),
                });
            }
        }
        Ok(())
    }
}

impl fmt::Display for Program {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for d in &self.declarations {
            writeln!(f, "{d}")?;
        }
        for r in &self.rules {
            writeln!(f, "{r}")?;
        }
        Ok(())
    }
}
