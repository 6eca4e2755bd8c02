use std::collections::BTreeMap;

use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::datalog::{Literal, Program, Relation, Term, Tuple, Value};

use super::VerifyError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Exhaustive,
    Sampled { count: usize, seed: u64 },
}

/// The finite domain verification enumerates over.
///
/// Columns compared against integers draw from `constants`. When `keys` is
/// nonempty, columns never used in a comparison draw from `keys` instead,
/// which keeps key columns such as `pk` from multiplying the search space.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Universe {
    constants: Vec<i64>,
    keys: Vec<String>,
    max_size: usize,
    mode: Mode,
}

impl Default for Universe {
    /// Constants `0..=10`, relations of at most three tuples, exhaustive.
    fn default() -> Self {
        Universe::range(0, 10, 3).expect("valid default")
    }
}

impl Universe {
    pub fn new(constants: Vec<i64>, max_size: usize) -> Result<Self, VerifyError> {
        if constants.is_empty() {
            return Err(VerifyError::Universe("constant set is empty".into()));
        }
        if max_size == 0 {
            return Err(VerifyError::Universe(
                "max relation size must be at least 1".into(),
            ));
        }
        let mut constants = constants;
        constants.sort_unstable();
        constants.dedup();
        Ok(Universe {
            constants,
            keys: Vec::new(),
            max_size,
            mode: Mode::Exhaustive,
        })
    }

    /// Constants `min..=max`.
    pub fn range(min: i64, max: i64, max_size: usize) -> Result<Self, VerifyError> {
        if min > max {
            return Err(VerifyError::Universe(format!("empty range {min}..={max}")));
        }
        Universe::new((min..=max).collect(), max_size)
    }

    /// The smaller default used for joint (source plus auxiliary) states:
    /// constants `0..=6`, at most two tuples per relation.
    pub fn joint_default() -> Self {
        Universe::range(0, 6, 2).expect("valid default")
    }

    pub fn with_keys(mut self, keys: Vec<String>) -> Self {
        self.keys = keys;
        self.keys.sort();
        self.keys.dedup();
        self
    }

    pub fn with_mode(mut self, mode: Mode) -> Self {
        self.mode = mode;
        self
    }

    pub fn constants(&self) -> &[i64] {
        &self.constants
    }

    pub fn keys(&self) -> &[String] {
        &self.keys
    }

    pub fn max_size(&self) -> usize {
        self.max_size
    }

    pub fn mode(&self) -> Mode {
        self.mode
    }

    fn column_domain(&self, numeric: bool) -> Vec<Value> {
        if !numeric && !self.keys.is_empty() {
            self.keys.iter().map(|k| Value::Str(k.clone())).collect()
        } else {
            self.constants.iter().map(|&c| Value::Int(c)).collect()
        }
    }

    /// Every tuple of the given column shape, lexicographically ordered.
    pub fn tuples(&self, numeric: &[bool]) -> Vec<Tuple> {
        let mut out = vec![Vec::new()];
        for &n in numeric {
            let dom = self.column_domain(n);
            out = out
                .into_iter()
                .flat_map(|prefix| {
                    dom.iter().map(move |v| {
                        let mut t = prefix.clone();
                        t.push(v.clone());
                        t
                    })
                })
                .collect();
        }
        out.into_iter().map(Tuple::new).collect()
    }

    /// Every relation of at most `max_size` tuples, ordered by size and then
    /// lexicographically by combination.
    pub fn relations(&self, numeric: &[bool]) -> Vec<Relation> {
        let tuples = self.tuples(numeric);
        let arity = numeric.len();
        let mut out = vec![Relation::new(arity)];
        for k in 1..=self.max_size.min(tuples.len()) {
            combinations(tuples.len(), k, &mut |idx| {
                let rel = Relation::from_tuples(arity, idx.iter().map(|&i| tuples[i].clone()))
                    .expect("uniform arity");
                out.push(rel);
            });
        }
        out
    }

    /// Case indices to check out of `total`, ascending.
    pub(crate) fn case_indices(&self, total: usize) -> Vec<usize> {
        match self.mode {
            Mode::Exhaustive => (0..total).collect(),
            Mode::Sampled { count, .. } if count >= total => (0..total).collect(),
            Mode::Sampled { count, seed } => {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let mut picked = index::sample(&mut rng, total, count).into_vec();
                picked.sort_unstable();
                picked
            }
        }
    }
}

fn combinations(n: usize, k: usize, f: &mut dyn FnMut(&[usize])) {
    let mut idx: Vec<usize> = (0..k).collect();
    loop {
        f(&idx);
        let mut i = k;
        loop {
            if i == 0 {
                return;
            }
            i -= 1;
            if idx[i] != i + n - k {
                break;
            }
            if i == 0 {
                return;
            }
        }
        idx[i] += 1;
        for j in i + 1..k {
            idx[j] = idx[j - 1] + 1;
        }
    }
}

/// Column positions, per base relation name, whose variables take part in a
/// comparison somewhere in the programs.
pub fn numeric_columns(programs: &[&Program]) -> BTreeMap<String, Vec<bool>> {
    let mut out: BTreeMap<String, Vec<bool>> = BTreeMap::new();
    for p in programs {
        for (pred, arity) in p.arities() {
            let e = out.entry(pred.name.clone()).or_default();
            if e.len() < arity {
                e.resize(arity, false);
            }
        }
        for r in p.rules() {
            let compared: Vec<&str> = r
                .comparisons()
                .flat_map(|(c, _)| c.variables().collect::<Vec<_>>())
                .collect();
            let atoms = std::iter::once(&r.head).chain(r.body.iter().filter_map(Literal::atom));
            for a in atoms {
                let marks = out.get_mut(&a.pred.name).expect("seen above");
                for (i, t) in a.args.iter().enumerate() {
                    if matches!(t, Term::Var(v) if compared.contains(&v.as_str())) {
                        marks[i] = true;
                    }
                }
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn binom(n: usize, k: usize) -> usize {
        (0..k).fold(1, |acc, i| acc * (n - i) / (i + 1))
    }

    #[test]
    fn relation_counts_match_binomials() {
        let u = Universe::default();
        let rels = u.relations(&[true]);
        assert_eq!(rels.len(), (0..=3).map(|k| binom(11, k)).sum::<usize>());
        assert_eq!(rels.len(), 232);
        let distinct: std::collections::BTreeSet<_> = rels.iter().collect();
        assert_eq!(distinct.len(), rels.len());
        assert!(rels.iter().all(|r| r.len() <= 3));
    }

    #[test]
    fn key_columns_use_keys() {
        let u = Universe::range(0, 2, 1)
            .unwrap()
            .with_keys(vec!["k1".into()]);
        let ts = u.tuples(&[false, true]);
        assert_eq!(ts.len(), 3);
        assert_eq!(ts[0], Tuple::new(vec!["k1".into(), 0.into()]));
        // Without keys every column is integer-valued.
        assert_eq!(
            Universe::range(0, 2, 1)
                .unwrap()
                .tuples(&[false, true])
                .len(),
            9
        );
    }

    #[test]
    fn sampled_indices_are_a_subset() {
        let u = Universe::default().with_mode(Mode::Sampled { count: 10, seed: 7 });
        let a = u.case_indices(1000);
        assert_eq!(a.len(), 10);
        assert!(a.windows(2).all(|w| w[0] < w[1]));
        assert_eq!(a, u.case_indices(1000));
        assert_eq!(u.case_indices(5), vec![0, 1, 2, 3, 4]);
    }

    #[test]
    fn invalid_universes() {
        assert!(Universe::new(vec![], 1).is_err());
        assert!(Universe::range(0, 3, 0).is_err());
        assert!(Universe::range(3, 0, 1).is_err());
    }
}
