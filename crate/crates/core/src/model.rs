//! Discrete models: variables, energy factors summed into `F`, and integer
//! statistic factors folded into the global statistic vector `G`.

use std::fmt;

use serde::{Deserialize, Serialize};
use smallvec::SmallVec;

use crate::error::{Error, Result};

/// A realized value of the global statistic (or of a partial accumulation of it).
#[derive(Clone, Debug, Default, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct AuxVector(pub SmallVec<[i64; 4]>);

impl AuxVector {
    pub fn zeros(dim: usize) -> Self {
        AuxVector(SmallVec::from_elem(0, dim))
    }

    pub fn from_slice(v: &[i64]) -> Self {
        AuxVector(SmallVec::from_slice(v))
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn as_slice(&self) -> &[i64] {
        &self.0
    }

    pub fn get(&self, d: usize) -> i64 {
        self.0[d]
    }
}

impl From<Vec<i64>> for AuxVector {
    fn from(v: Vec<i64>) -> Self {
        AuxVector(SmallVec::from_vec(v))
    }
}

impl fmt::Display for AuxVector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "(")?;
        for (k, v) in self.0.iter().enumerate() {
            if k > 0 {
                write!(f, ",")?;
            }
            write!(f, "{v}")?;
        }
        write!(f, ")")
    }
}

/// How one statistic dimension folds across factors.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Accumulation {
    Add,
    /// Running maximum. Entries on MAX dimensions must be nonnegative so that
    /// `0` is the identity of the fold, like it is for `Add`.
    Max,
}

impl fmt::Display for Accumulation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Accumulation::Add => write!(f, "ADD"),
            Accumulation::Max => write!(f, "MAX"),
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct AccumulationSpec(pub Vec<Accumulation>);

impl AccumulationSpec {
    pub fn all_add(dim: usize) -> Self {
        AccumulationSpec(vec![Accumulation::Add; dim])
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn ops(&self) -> &[Accumulation] {
        &self.0
    }

    pub fn is_all_add(&self) -> bool {
        self.0.iter().all(|op| *op == Accumulation::Add)
    }

    /// `acc <- acc ⊕ other`, dimension by dimension.
    #[inline]
    pub fn fold_into(&self, acc: &mut [i64], other: &[i64]) {
        for ((a, b), op) in acc.iter_mut().zip(other).zip(&self.0) {
            match op {
                Accumulation::Add => *a += *b,
                Accumulation::Max => *a = (*a).max(*b),
            }
        }
    }

    pub fn combine(&self, a: &AuxVector, b: &AuxVector) -> AuxVector {
        let mut out = a.clone();
        self.fold_into(&mut out.0, &b.0);
        out
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Variable {
    pub id: usize,
    pub cardinality: usize,
}

/// Table-valued term of `F`. `-inf` entries forbid the corresponding joint state.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnergyFactor {
    pub scope: Vec<usize>,
    pub values: Vec<f64>,
}

impl EnergyFactor {
    pub fn new(scope: Vec<usize>, values: Vec<f64>) -> Self {
        EnergyFactor { scope, values }
    }

    /// The all-zero table over `scope`.
    pub fn zeros(scope: Vec<usize>, cards: &[usize]) -> Self {
        let n = scope.iter().map(|&v| cards[v]).product();
        EnergyFactor {
            scope,
            values: vec![0.0; n],
        }
    }

    #[inline]
    pub fn value(&self, cards: &[usize], y: &[usize]) -> f64 {
        self.values[table_index(&self.scope, cards, y)]
    }
}

/// Integer-vector-valued term of `G`; entries are stored flat, `dim` integers per joint state.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct StatisticFactor {
    pub scope: Vec<usize>,
    pub dim: usize,
    pub values: Vec<i64>,
}

impl StatisticFactor {
    pub fn new(scope: Vec<usize>, dim: usize, entries: Vec<Vec<i64>>) -> Result<Self> {
        let mut values = Vec::with_capacity(entries.len() * dim);
        for (k, e) in entries.iter().enumerate() {
            if e.len() != dim {
                return Err(Error::Shape(format!(
                    "statistic entry {k} has length {} but dimension is {dim}",
                    e.len()
                )));
            }
            values.extend_from_slice(e);
        }
        Ok(StatisticFactor { scope, dim, values })
    }

    pub fn from_flat(scope: Vec<usize>, dim: usize, values: Vec<i64>) -> Self {
        StatisticFactor { scope, dim, values }
    }

    pub fn num_entries(&self) -> usize {
        self.values.len().checked_div(self.dim).unwrap_or(0)
    }

    #[inline]
    pub fn entry(&self, index: usize) -> &[i64] {
        &self.values[index * self.dim..(index + 1) * self.dim]
    }

    #[inline]
    pub fn value(&self, cards: &[usize], y: &[usize]) -> &[i64] {
        self.entry(table_index(&self.scope, cards, y))
    }
}

/// Row-major index of `y` restricted to `scope`; the first scope variable is most significant.
#[inline]
pub fn table_index(scope: &[usize], cards: &[usize], y: &[usize]) -> usize {
    scope.iter().fold(0, |idx, &v| idx * cards[v] + y[v])
}

/// Validated, immutable model.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Model {
    cards: Vec<usize>,
    energy: Vec<EnergyFactor>,
    stats: Vec<StatisticFactor>,
    accumulation: AccumulationSpec,
}

impl Model {
    pub fn new(
        cardinalities: Vec<usize>,
        energy: Vec<EnergyFactor>,
        stats: Vec<StatisticFactor>,
        accumulation: AccumulationSpec,
    ) -> Result<Self> {
        if cardinalities.is_empty() {
            return Err(Error::Shape("model has no variables".into()));
        }
        if let Some(v) = cardinalities.iter().position(|&c| c == 0) {
            return Err(Error::Shape(format!("variable {v} has cardinality 0")));
        }
        let m = cardinalities.len();
        for (t, f) in energy.iter().enumerate() {
            let n = check_scope(&f.scope, &cardinalities, m, "energy", t)?;
            if f.values.len() != n {
                return Err(Error::Shape(format!(
                    "energy factor {t}: table has {} entries, scope needs {n}",
                    f.values.len()
                )));
            }
            if let Some(k) = f
                .values
                .iter()
                .position(|v| v.is_nan() || *v == f64::INFINITY)
            {
                return Err(Error::Value(format!(
                    "energy factor {t}: entry {k} is {} (only finite values and -inf allowed)",
                    f.values[k]
                )));
            }
        }
        let p = accumulation.dim();
        for (t, g) in stats.iter().enumerate() {
            let n = check_scope(&g.scope, &cardinalities, m, "statistic", t)?;
            if g.dim != p {
                return Err(Error::Shape(format!(
                    "statistic factor {t}: dimension {} differs from accumulation length {p}",
                    g.dim
                )));
            }
            if g.values.len() != n * p {
                return Err(Error::Shape(format!(
                    "statistic factor {t}: table has {} integers, scope needs {}",
                    g.values.len(),
                    n * p
                )));
            }
            for (d, op) in accumulation.ops().iter().enumerate() {
                if *op == Accumulation::Max && (0..n).any(|k| g.entry(k)[d] < 0) {
                    return Err(Error::Value(format!(
                        "statistic factor {t}: negative entry on MAX dimension {d}"
                    )));
                }
            }
        }
        Ok(Model {
            cards: cardinalities,
            energy,
            stats,
            accumulation,
        })
    }

    /// Same energy, different statistics.
    pub fn with_statistics(
        &self,
        stats: Vec<StatisticFactor>,
        accumulation: AccumulationSpec,
    ) -> Result<Model> {
        Model::new(self.cards.clone(), self.energy.clone(), stats, accumulation)
    }

    /// Same statistics, different energy.
    pub fn with_energy(&self, energy: Vec<EnergyFactor>) -> Result<Model> {
        Model::new(
            self.cards.clone(),
            energy,
            self.stats.clone(),
            self.accumulation.clone(),
        )
    }

    pub fn num_vars(&self) -> usize {
        self.cards.len()
    }

    pub fn cardinalities(&self) -> &[usize] {
        &self.cards
    }

    pub fn variables(&self) -> impl Iterator<Item = Variable> + '_ {
        self.cards
            .iter()
            .enumerate()
            .map(|(id, &cardinality)| Variable { id, cardinality })
    }

    /// Largest cardinality, `N`.
    pub fn max_cardinality(&self) -> usize {
        self.cards.iter().copied().max().unwrap_or(0)
    }

    /// Statistic dimension, `P`.
    pub fn stat_dim(&self) -> usize {
        self.accumulation.dim()
    }

    pub fn energy_factors(&self) -> &[EnergyFactor] {
        &self.energy
    }

    pub fn statistic_factors(&self) -> &[StatisticFactor] {
        &self.stats
    }

    pub fn accumulation(&self) -> &AccumulationSpec {
        &self.accumulation
    }

    pub fn joint_state_count(&self) -> u128 {
        self.cards
            .iter()
            .fold(1u128, |acc, &c| acc.saturating_mul(c as u128))
    }

    pub fn check_assignment(&self, y: &[usize]) -> Result<()> {
        if y.len() != self.cards.len() {
            return Err(Error::Assignment(format!(
                "assignment has {} entries, model has {} variables",
                y.len(),
                self.cards.len()
            )));
        }
        if let Some(v) = (0..y.len()).find(|&v| y[v] >= self.cards[v]) {
            return Err(Error::Assignment(format!(
                "variable {v} has state {} but cardinality {}",
                y[v], self.cards[v]
            )));
        }
        Ok(())
    }

    pub fn evaluate_f(&self, y: &[usize]) -> Result<f64> {
        self.check_assignment(y)?;
        Ok(self.energy.iter().map(|f| f.value(&self.cards, y)).sum())
    }

    pub fn evaluate_g(&self, y: &[usize]) -> Result<AuxVector> {
        self.check_assignment(y)?;
        let mut acc = AuxVector::zeros(self.stat_dim());
        for g in &self.stats {
            self.accumulation
                .fold_into(&mut acc.0, g.value(&self.cards, y));
        }
        Ok(acc)
    }
}

fn check_scope(scope: &[usize], cards: &[usize], m: usize, kind: &str, t: usize) -> Result<usize> {
    for (k, &v) in scope.iter().enumerate() {
        if v >= m {
            return Err(Error::Scope(format!(
                "{kind} factor {t}: variable id {v} out of range for {m} variables"
            )));
        }
        if scope[..k].contains(&v) {
            return Err(Error::Scope(format!(
                "{kind} factor {t}: variable {v} repeated in scope"
            )));
        }
    }
    Ok(scope.iter().map(|&v| cards[v]).product())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn two_var() -> Model {
        Model::new(
            vec![2, 2],
            vec![EnergyFactor::new(vec![0, 1], vec![1.0, 2.0, 4.0, 3.0])],
            vec![StatisticFactor::new(vec![0], 1, vec![vec![0], vec![1]]).unwrap()],
            AccumulationSpec::all_add(1),
        )
        .unwrap()
    }

    #[test]
    fn builds_two_var_model() {
        let m = two_var();
        assert_eq!(m.num_vars(), 2);
        assert_eq!(m.max_cardinality(), 2);
        assert_eq!(m.stat_dim(), 1);
    }

    #[test]
    fn evaluates_table_lookups() {
        let m = two_var();
        assert_eq!(m.evaluate_f(&[1, 0]).unwrap(), 4.0);
        assert_eq!(m.evaluate_f(&[0, 1]).unwrap(), 2.0);
        assert_eq!(m.evaluate_g(&[1, 0]).unwrap(), AuxVector::from_slice(&[1]));
    }

    #[test]
    fn rejects_out_of_range_scope() {
        let err = Model::new(
            vec![2, 2, 2],
            vec![EnergyFactor::new(vec![0, 5], vec![0.0; 4])],
            vec![],
            AccumulationSpec::default(),
        )
        .unwrap_err();
        assert!(matches!(err, Error::Scope(_)));
    }

    #[test]
    fn rejects_bad_shapes_and_values() {
        let err = Model::new(
            vec![2, 2],
            vec![EnergyFactor::new(vec![0, 1], vec![0.0; 3])],
            vec![],
            AccumulationSpec::default(),
        )
        .unwrap_err();
        assert!(matches!(err, Error::Shape(_)));

        let err = Model::new(
            vec![2],
            vec![EnergyFactor::new(vec![0], vec![0.0, f64::INFINITY])],
            vec![],
            AccumulationSpec::default(),
        )
        .unwrap_err();
        assert!(matches!(err, Error::Value(_)));

        let err = Model::new(
            vec![2],
            vec![EnergyFactor::new(vec![0], vec![f64::NAN, 0.0])],
            vec![],
            AccumulationSpec::default(),
        )
        .unwrap_err();
        assert!(matches!(err, Error::Value(_)));

        let err = Model::new(
            vec![2],
            vec![],
            vec![StatisticFactor::new(vec![0], 1, vec![vec![0], vec![-1]]).unwrap()],
            AccumulationSpec(vec![Accumulation::Max]),
        )
        .unwrap_err();
        assert!(matches!(err, Error::Value(_)));
    }

    #[test]
    fn neg_infinity_energy_is_allowed() {
        let m = Model::new(
            vec![2],
            vec![EnergyFactor::new(vec![0], vec![f64::NEG_INFINITY, 1.0])],
            vec![],
            AccumulationSpec::default(),
        )
        .unwrap();
        assert_eq!(m.evaluate_f(&[0]).unwrap(), f64::NEG_INFINITY);
    }

    #[test]
    fn empty_statistics() {
        let m = Model::new(
            vec![3],
            vec![EnergyFactor::new(vec![0], vec![0.0, 1.0, 2.0])],
            vec![],
            AccumulationSpec::default(),
        )
        .unwrap();
        assert_eq!(m.stat_dim(), 0);
        for s in 0..3 {
            assert_eq!(m.evaluate_g(&[s]).unwrap().dim(), 0);
        }
    }

    #[test]
    fn max_dimension_is_idempotent() {
        let m = Model::new(
            vec![2, 2],
            vec![],
            vec![
                StatisticFactor::new(vec![0], 1, vec![vec![0], vec![1]]).unwrap(),
                StatisticFactor::new(vec![1], 1, vec![vec![0], vec![1]]).unwrap(),
            ],
            AccumulationSpec(vec![Accumulation::Max]),
        )
        .unwrap();
        assert_eq!(m.evaluate_g(&[1, 1]).unwrap(), AuxVector::from_slice(&[1]));
    }

    #[test]
    fn hamming_statistics_count_mismatches() {
        let truth = [0usize, 0, 0];
        let stats = (0..3)
            .map(|t| {
                StatisticFactor::new(
                    vec![t],
                    1,
                    (0..2).map(|s| vec![(s != truth[t]) as i64]).collect(),
                )
                .unwrap()
            })
            .collect();
        let m = Model::new(vec![2; 3], vec![], stats, AccumulationSpec::all_add(1)).unwrap();
        assert_eq!(
            m.evaluate_g(&[0, 1, 1]).unwrap(),
            AuxVector::from_slice(&[2])
        );
    }

    #[test]
    fn assignment_errors() {
        let m = two_var();
        assert!(matches!(m.evaluate_f(&[0]), Err(Error::Assignment(_))));
        assert!(matches!(m.evaluate_g(&[0, 2]), Err(Error::Assignment(_))));
    }
}
