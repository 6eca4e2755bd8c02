use std::fmt;

use serde::Serialize;

use crate::datalog::Instance;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Law {
    GetPut,
    PutGet,
    Totality,
    RangeMembership,
}

impl fmt::Display for Law {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Law::GetPut => "GetPut",
            Law::PutGet => "PutGet",
            Law::Totality => "Totality",
            Law::RangeMembership => "RangeMembership",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Outcome {
    Pass,
    Fail,
}

/// A failing case. `observed` is what the transformations produced from
/// `source` (and `view`, when the law takes a target view); `expected` is what
/// the law demands.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Counterexample {
    pub source: Instance,
    pub view: Option<Instance>,
    pub observed: Instance,
    pub expected: Instance,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct VerificationReport {
    pub law: Law,
    pub outcome: Outcome,
    pub cases: u64,
    pub counterexample: Option<Counterexample>,
}

impl VerificationReport {
    pub fn pass(law: Law, cases: u64) -> Self {
        VerificationReport {
            law,
            outcome: Outcome::Pass,
            cases,
            counterexample: None,
        }
    }

    pub fn fail(law: Law, cases: u64, counterexample: Counterexample) -> Self {
        VerificationReport {
            law,
            outcome: Outcome::Fail,
            cases,
            counterexample: Some(counterexample),
        }
    }

    pub fn passed(&self) -> bool {
        self.outcome == Outcome::Pass
    }

    /// Folds per-view reports of one law into one: cases add up and the first
    /// failure wins.
    pub fn combine(law: Law, reports: impl IntoIterator<Item = VerificationReport>) -> Self {
        let mut out = VerificationReport::pass(law, 0);
        for r in reports {
            out.cases += r.cases;
            if out.passed() && !r.passed() {
                out.outcome = Outcome::Fail;
                out.counterexample = r.counterexample;
            }
        }
        out
    }
}

impl fmt::Display for VerificationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let verdict = match self.outcome {
            Outcome::Pass => "pass",
            Outcome::Fail => "FAIL",
        };
        write!(f, "{}: {} ({} cases)", self.law, verdict, self.cases)?;
        if let Some(c) = &self.counterexample {
            write!(f, "\n  source:   {}", c.source)?;
            if let Some(v) = &c.view {
                write!(f, "\n  view:     {v}")?;
            }
            write!(f, "\n  observed: {}", c.observed)?;
            write!(f, "\n  expected: {}", c.expected)?;
        }
        Ok(())
    }
}
