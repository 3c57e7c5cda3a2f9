//! Applications assembled from a model, statistics and a combinator.

use std::sync::Arc;

use crate::cliquetree::{
    build_clique_tree, min_fill_order, reduce_neighbors, reshape_dedup_sepsets, CliqueTree,
};
use crate::error::{Error, Result};
use crate::inference::{
    run_constrained_mp, standard_junction_tree, Combinator, InferenceOptions, Solution,
};
use crate::losses::{eta_f_beta, tp_fp, GroundTruth, LossSpec};
use crate::model::{
    Accumulation, AccumulationSpec, AuxVector, EnergyFactor, Model, StatisticFactor,
};

#[derive(Clone, Debug)]
pub struct SolveOptions {
    /// Clone-chain nodes of degree above three.
    pub reduce: bool,
    pub reshape: bool,
    /// Root clique id in the elimination tree (before transforms).
    pub root: Option<usize>,
    pub inference: InferenceOptions,
}

impl Default for SolveOptions {
    fn default() -> Self {
        SolveOptions {
            reduce: true,
            reshape: false,
            root: None,
            inference: InferenceOptions::default(),
        }
    }
}

/// Min-fill clique tree for `model`, with the requested root and transforms.
pub fn prepare_tree<'m>(model: &'m Model, options: &SolveOptions) -> Result<CliqueTree<'m>> {
    let mut tree = build_clique_tree(model, &min_fill_order(model))?;
    if let Some(r) = options.root {
        tree = tree.with_root(r)?;
    }
    if options.reshape {
        tree = reshape_dedup_sepsets(&tree);
    }
    if options.reduce {
        tree = reduce_neighbors(&tree);
    }
    Ok(tree)
}

pub fn solve(model: &Model, combinator: &Combinator, options: &SolveOptions) -> Result<Solution> {
    let tree = prepare_tree(model, options)?;
    run_constrained_mp(&tree, combinator, &options.inference)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    /// `F + η(G)`.
    Margin,
    /// `F · η(G)`.
    Slack,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LossPath {
    /// Folded factors when the loss allows it, constrained messages otherwise.
    Auto,
    General,
    /// Margin mode with a linear loss over ADD statistics only.
    Folded,
}

/// `model` with `w·g` folded into one energy factor per statistic factor.
fn fold_linear(model: &Model, loss: &LossSpec, w: &[f64]) -> Result<Model> {
    let mut energy = model.energy_factors().to_vec();
    for g in &loss.statistics {
        let values = (0..g.num_entries())
            .map(|i| g.entry(i).iter().zip(w).map(|(&e, wi)| wi * e as f64).sum())
            .collect();
        energy.push(EnergyFactor::new(g.scope.clone(), values));
    }
    Model::new(
        model.cardinalities().to_vec(),
        energy,
        vec![],
        AccumulationSpec::default(),
    )
}

/// Loss-augmented inference `max_y F(y) ⊙ Δ(y*, y)`.
///
/// The reported value, energy and statistics are re-evaluated on the returned
/// assignment, so both paths report identical numbers for identical `y`.
pub fn loss_augmented(
    model: &Model,
    loss: &LossSpec,
    mode: Mode,
    path: LossPath,
    options: &SolveOptions,
) -> Result<Solution> {
    let augmented = loss.attach(model)?;
    let foldable = mode == Mode::Margin && loss.accumulation.is_all_add() && loss.linear.is_some();
    let y = match path {
        LossPath::Folded if !foldable => {
            return Err(Error::Value(format!(
                "loss '{}' cannot be folded into the energy",
                loss.name
            )))
        }
        LossPath::Folded | LossPath::Auto if foldable => {
            let (w, _) = loss.linear.as_ref().expect("foldable");
            let folded = fold_linear(model, loss, w)?;
            let tree = prepare_tree(&folded, options)?;
            standard_junction_tree(&tree, &options.inference)?
        }
        _ => {
            let combinator = match mode {
                Mode::Margin => Combinator::Sum(loss.eta.clone()),
                Mode::Slack => Combinator::Product(loss.eta.clone()),
            };
            solve(&augmented, &combinator, options)?
        }
    };
    let energy = model.evaluate_f(&y.y)?;
    let stats = augmented.evaluate_g(&y.y)?;
    let eta = loss.eta(&stats);
    let value = match mode {
        Mode::Margin => energy + eta,
        Mode::Slack => energy * eta,
    };
    Ok(Solution {
        value,
        energy,
        stats,
        ..y
    })
}

fn require_binary(model: &Model) -> Result<()> {
    if model.cardinalities().iter().any(|&c| c != 2) {
        return Err(Error::Value("task needs binary variables".into()));
    }
    Ok(())
}

/// `model` with the single statistic `Σ y_t` over binary variables.
pub fn label_count_model(model: &Model) -> Result<Model> {
    require_binary(model)?;
    let stats = (0..model.num_vars())
        .map(|t| StatisticFactor::from_flat(vec![t], 1, vec![0, 1]))
        .collect();
    model.with_statistics(stats, AccumulationSpec::all_add(1))
}

/// MAP subject to exactly `b` variables set to 1.
pub fn label_count_constrained(
    model: &Model,
    b: usize,
    options: &SolveOptions,
) -> Result<Solution> {
    let constrained = label_count_model(model)?;
    let b = b as i64;
    solve(
        &constrained,
        &Combinator::gate(move |l| l.get(0) == b),
        options,
    )
}

/// Chain whose score is linear in (observation, state) and (state, state) counts.
#[derive(Clone, Debug, PartialEq)]
pub struct ScoreChain {
    pub observations: Vec<usize>,
    pub num_states: usize,
    /// `D × N`, indexed `[observation][state]`.
    pub emission: Vec<Vec<f64>>,
    /// `N × N`, indexed `[previous][next]`.
    pub transition: Vec<Vec<f64>>,
}

impl ScoreChain {
    pub fn num_observations(&self) -> usize {
        self.emission.len()
    }

    fn check(&self) -> Result<()> {
        let (d, n) = (self.num_observations(), self.num_states);
        if n == 0 || self.observations.is_empty() {
            return Err(Error::Shape("empty chain".into()));
        }
        if self.emission.iter().any(|r| r.len() != n)
            || self.transition.len() != n
            || self.transition.iter().any(|r| r.len() != n)
        {
            return Err(Error::Shape(
                "weight tables do not match the state count".into(),
            ));
        }
        if let Some(&o) = self.observations.iter().find(|&&o| o >= d) {
            return Err(Error::Value(format!("observation {o} outside 0..{d}")));
        }
        Ok(())
    }

    /// Weights flattened in statistic order: emissions then transitions.
    pub fn weights(&self) -> Vec<f64> {
        self.emission
            .iter()
            .chain(&self.transition)
            .flatten()
            .copied()
            .collect()
    }

    /// Energy-only model of the chain.
    pub fn model(&self) -> Result<Model> {
        self.check()?;
        let n = self.num_states;
        let m = self.observations.len();
        let cards = vec![n; m];
        let mut energy: Vec<EnergyFactor> = self
            .observations
            .iter()
            .enumerate()
            .map(|(t, &o)| EnergyFactor::new(vec![t], self.emission[o].clone()))
            .collect();
        let trans: Vec<f64> = self.transition.iter().flatten().copied().collect();
        energy.extend((1..m).map(|t| EnergyFactor::new(vec![t - 1, t], trans.clone())));
        Model::new(cards, energy, vec![], AccumulationSpec::default())
    }

    /// Count statistics: `D·N` emission counts followed by `N²` transition counts.
    pub fn statistics(&self) -> Vec<StatisticFactor> {
        let (d, n) = (self.num_observations(), self.num_states);
        let p = d * n + n * n;
        let m = self.observations.len();
        let mut out: Vec<StatisticFactor> = self
            .observations
            .iter()
            .enumerate()
            .map(|(t, &o)| {
                let values = (0..n)
                    .flat_map(|s| (0..p).map(move |k| (k == o * n + s) as i64))
                    .collect();
                StatisticFactor::from_flat(vec![t], p, values)
            })
            .collect();
        for t in 1..m {
            let values = (0..n * n)
                .flat_map(|ab| (0..p).map(move |k| (k == d * n + ab) as i64))
                .collect();
            out.push(StatisticFactor::from_flat(vec![t - 1, t], p, values));
        }
        out
    }
}

/// Weights multiplied by `precision` and rounded, failing if any weight is not
/// an integer multiple of `1 / precision`.
pub fn integer_weights(weights: &[f64], precision: u32) -> Result<Vec<i64>> {
    let scale = precision as f64;
    weights
        .iter()
        .map(|&w| {
            let x = w * scale;
            let r = x.round();
            if !x.is_finite() || (x - r).abs() > 1e-9 * x.abs().max(1.0) || r.abs() >= 9.0e15 {
                return Err(Error::Scale(format!(
                    "weight {w} is not representable at precision {precision}"
                )));
            }
            Ok(r as i64)
        })
        .collect()
}

pub const DEFAULT_PRECISION: u32 = 1000;

/// MAP subject to `a ≤ score(y) ≤ b`, with the score read off count statistics.
pub fn objective_range_constrained(
    chain: &ScoreChain,
    a: f64,
    b: f64,
    precision: u32,
    options: &SolveOptions,
) -> Result<Solution> {
    let base = chain.model()?;
    let w = integer_weights(&chain.weights(), precision)?;
    let model = base.with_statistics(chain.statistics(), AccumulationSpec::all_add(w.len()))?;
    let scale = precision as f64;
    let score = move |l: &AuxVector| {
        let dot: i128 = w
            .iter()
            .zip(l.as_slice())
            .map(|(&wi, &li)| wi as i128 * li as i128)
            .sum();
        dot as f64 / scale
    };
    solve(
        &model,
        &Combinator::gate(move |l| {
            let s = score(l);
            a <= s && s <= b
        }),
        options,
    )
}

/// `w·G(y)` for a chain assignment, evaluated from the integer-scaled weights.
pub fn chain_score(chain: &ScoreChain, y: &[usize], precision: u32) -> Result<f64> {
    let w = integer_weights(&chain.weights(), precision)?;
    let model = chain
        .model()?
        .with_statistics(chain.statistics(), AccumulationSpec::all_add(w.len()))?;
    let g = model.evaluate_g(y)?;
    let dot: i128 = w
        .iter()
        .zip(g.as_slice())
        .map(|(&wi, &li)| wi as i128 * li as i128)
        .sum();
    Ok(dot as f64 / precision as f64)
}

/// MAP over assignments different from every pattern.
pub fn exclude_patterns(
    model: &Model,
    patterns: &[Vec<usize>],
    options: &SolveOptions,
) -> Result<Solution> {
    for p in patterns {
        if p.len() != model.num_vars() {
            return Err(Error::Length {
                expected: model.num_vars(),
                got: p.len(),
            });
        }
        model.check_assignment(p)?;
    }
    let k = patterns.len();
    if k == 0 {
        return solve(model, &Combinator::plain(), options);
    }
    let stats = (0..model.num_vars())
        .map(|t| {
            let values = (0..model.cardinalities()[t])
                .flat_map(|s| patterns.iter().map(move |p| (p[t] != s) as i64))
                .collect();
            StatisticFactor::from_flat(vec![t], k, values)
        })
        .collect();
    let constrained = model.with_statistics(stats, AccumulationSpec(vec![Accumulation::Max; k]))?;
    solve(
        &constrained,
        &Combinator::gate(|l| l.as_slice().iter().all(|&x| x == 1)),
        options,
    )
}

#[derive(Clone, Debug, PartialEq)]
pub struct KBest {
    pub solutions: Vec<Solution>,
    /// Round (1-based) at which no assignment met the margins, if any.
    pub infeasible_round: Option<usize>,
}

/// Sequential diverse K-best: solution `j` is the best assignment at Hamming
/// distance at least `margins[j-2]` from every earlier solution.
pub fn diverse_kbest(
    model: &Model,
    k: usize,
    margins: &[usize],
    options: &SolveOptions,
) -> Result<KBest> {
    if k > 0 && margins.len() != k - 1 {
        return Err(Error::Length {
            expected: k - 1,
            got: margins.len(),
        });
    }
    let mut solutions: Vec<Solution> = Vec::with_capacity(k);
    for round in 1..=k {
        let result = if round == 1 {
            solve(model, &Combinator::plain(), options)
        } else {
            let p = solutions.len();
            let stats = (0..model.num_vars())
                .map(|t| {
                    let prev: Vec<usize> = solutions.iter().map(|s| s.y[t]).collect();
                    let values = (0..model.cardinalities()[t])
                        .flat_map(|s| {
                            prev.iter()
                                .map(move |&q| (q != s) as i64)
                                .collect::<Vec<_>>()
                        })
                        .collect();
                    StatisticFactor::from_flat(vec![t], p, values)
                })
                .collect();
            let constrained = model.with_statistics(stats, AccumulationSpec::all_add(p))?;
            let m = margins[round - 2] as i64;
            solve(
                &constrained,
                &Combinator::gate(move |l| l.as_slice().iter().all(|&d| d >= m)),
                options,
            )
        };
        match result {
            Ok(mut s) => {
                // Report statistics of the energy model, not the round's distances.
                s.stats = model.evaluate_g(&s.y)?;
                solutions.push(s);
            }
            Err(Error::Infeasible) => {
                return Ok(KBest {
                    solutions,
                    infeasible_round: Some(round),
                })
            }
            Err(e) => return Err(e),
        }
    }
    Ok(KBest {
        solutions,
        infeasible_round: None,
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct BoundTerm {
    pub value: f64,
    pub solution: Solution,
}

/// `max_y 1[s* − F(y) ≤ FP + FN] · Δ_F1(y*, y)` where `s*` is the score of the
/// ground truth and `F` the model score.
pub fn generalization_bound_term(
    model: &Model,
    truth_score: f64,
    truth: &GroundTruth,
    options: &SolveOptions,
) -> Result<BoundTerm> {
    let pos = truth.num_positive();
    let augmented = model.with_statistics(tp_fp(truth), AccumulationSpec::all_add(2))?;
    let h = Combinator::General {
        h: Arc::new(move |f: f64, l: &AuxVector| {
            let (tp, fp) = (l.get(0), l.get(1));
            let distance = (pos as i64 - tp + fp) as f64;
            if truth_score - f <= distance {
                eta_f_beta(1.0, tp, fp, pos)
            } else {
                0.0
            }
        }),
        monotonicity: crate::inference::Monotonicity::NonDecreasing,
    };
    let solution = solve(&augmented, &h, options)?;
    Ok(BoundTerm {
        value: solution.value,
        solution,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::losses::hamming;

    fn two_var() -> Model {
        Model::new(
            vec![2, 2],
            vec![EnergyFactor::new(vec![0, 1], vec![1.0, 2.0, 4.0, 3.0])],
            vec![],
            AccumulationSpec::default(),
        )
        .unwrap()
    }

    #[test]
    fn margin_hamming_on_two_vars() {
        let m = two_var();
        let truth = GroundTruth::new(&m, vec![0, 0]).unwrap();
        let loss = hamming(&truth);
        let o = SolveOptions::default();
        // F + HD: (0,0)=1, (0,1)=3, (1,0)=5, (1,1)=5; lex-min tie is (1,0).
        for path in [LossPath::Auto, LossPath::General, LossPath::Folded] {
            let s = loss_augmented(&m, &loss, Mode::Margin, path, &o).unwrap();
            assert_eq!((s.value, s.y.clone()), (5.0, vec![1, 0]), "{path:?}");
        }
        assert!(loss_augmented(&m, &loss, Mode::Slack, LossPath::Folded, &o).is_err());
    }

    #[test]
    fn label_count_edges() {
        let m = Model::new(
            vec![2; 3],
            vec![EnergyFactor::new(vec![0, 1], vec![0.0, 0.5, 0.2, -1.0])],
            vec![],
            AccumulationSpec::default(),
        )
        .unwrap();
        let o = SolveOptions::default();
        assert_eq!(label_count_constrained(&m, 3, &o).unwrap().y, vec![1, 1, 1]);
        assert_eq!(label_count_constrained(&m, 4, &o), Err(Error::Infeasible));
    }

    #[test]
    fn exclude_map_gives_second_best() {
        let m = two_var();
        let o = SolveOptions::default();
        let s = exclude_patterns(&m, &[vec![1, 0]], &o).unwrap();
        assert_eq!((s.value, s.y), (3.0, vec![1, 1]));
        let all: Vec<Vec<usize>> = vec![vec![0, 0], vec![0, 1], vec![1, 0], vec![1, 1]];
        assert_eq!(exclude_patterns(&m, &all, &o), Err(Error::Infeasible));
    }

    #[test]
    fn kbest_rounds() {
        let m = two_var();
        let o = SolveOptions::default();
        let r = diverse_kbest(&m, 3, &[1, 2], &o).unwrap();
        let ys: Vec<Vec<usize>> = r.solutions.iter().map(|s| s.y.clone()).collect();
        // Round 3 needs distance 2 from both (1,0) and (1,1): impossible.
        assert_eq!(ys, vec![vec![1, 0], vec![1, 1]]);
        assert_eq!(r.infeasible_round, Some(3));
        let same = diverse_kbest(&m, 2, &[0], &o).unwrap();
        assert_eq!(same.solutions[0].y, same.solutions[1].y);
    }

    #[test]
    fn integer_scaling() {
        assert_eq!(
            integer_weights(&[0.5, -1.25], 1000).unwrap(),
            vec![500, -1250]
        );
        assert!(matches!(
            integer_weights(&[0.0001], 1000),
            Err(Error::Scale(_))
        ));
    }

    #[test]
    fn unbounded_range_is_plain_map() {
        let chain = ScoreChain {
            observations: vec![0, 1, 1, 0],
            num_states: 2,
            emission: vec![vec![0.5, -0.25], vec![-1.0, 0.75]],
            transition: vec![vec![0.25, -0.5], vec![0.0, 0.5]],
        };
        let o = SolveOptions::default();
        let r = objective_range_constrained(&chain, f64::NEG_INFINITY, f64::INFINITY, 1000, &o)
            .unwrap();
        let plain = solve(&chain.model().unwrap(), &Combinator::plain(), &o).unwrap();
        assert_eq!(r.y, plain.y);
        assert!((chain_score(&chain, &r.y, 1000).unwrap() - plain.value).abs() < 1e-9);
    }
}
