//! Exhaustive reference solvers. Slow by design; only `Model` evaluation is
//! shared with the engine.

use std::collections::BTreeMap;

use crate::cliquetree::CliqueTree;
use crate::error::{Error, Result};
use crate::inference::{Combinator, Diagnostics, Monotonicity, Solution, TIE_TOLERANCE};
use crate::losses::{GroundTruth, LossKind};
use crate::model::{AuxVector, Model};

pub const DEFAULT_BUDGET: u128 = 1_000_000;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct OracleBudget(pub u128);

impl Default for OracleBudget {
    fn default() -> Self {
        OracleBudget(DEFAULT_BUDGET)
    }
}

impl OracleBudget {
    fn check(self, needed: u128) -> Result<()> {
        if needed > self.0 {
            return Err(Error::BudgetExceeded {
                needed,
                budget: self.0,
            });
        }
        Ok(())
    }
}

/// Odometer over `cards`, last position fastest: lexicographic order.
struct Odometer<'a> {
    cards: &'a [usize],
    state: Vec<usize>,
    done: bool,
}

impl<'a> Odometer<'a> {
    fn new(cards: &'a [usize]) -> Self {
        Odometer {
            cards,
            state: vec![0; cards.len()],
            done: cards.contains(&0),
        }
    }

    fn current(&self) -> Option<&[usize]> {
        (!self.done).then_some(&self.state[..])
    }

    fn advance(&mut self) {
        for k in (0..self.cards.len()).rev() {
            self.state[k] += 1;
            if self.state[k] < self.cards[k] {
                return;
            }
            self.state[k] = 0;
        }
        self.done = true;
    }
}

fn objective(combinator: &Combinator, f: f64, g: &AuxVector) -> Result<f64> {
    if f == f64::NEG_INFINITY {
        return Ok(f64::NEG_INFINITY);
    }
    let h = match combinator {
        Combinator::Sum(eta) => f + eta(g),
        Combinator::Product(eta) => {
            let e = eta(g);
            if e < 0.0 {
                return Err(Error::Monotonicity(format!(
                    "negative product weight at {g}"
                )));
            }
            f * e
        }
        Combinator::Gate { predicate, eta } => {
            if !predicate(g) {
                f64::NEG_INFINITY
            } else {
                f + eta.as_ref().map_or(0.0, |e| e(g))
            }
        }
        Combinator::General { h, monotonicity } => {
            if *monotonicity != Monotonicity::NonDecreasing {
                return Err(Error::Monotonicity("undeclared general objective".into()));
            }
            h(f, g)
        }
    };
    if h.is_nan() {
        return Err(Error::Value(format!("objective is NaN at {g}")));
    }
    Ok(h)
}

/// `max_y H(F(y), G(y))` by enumeration, returning the lexicographically
/// smallest `y` within the engine's tie tolerance of the maximum.
pub fn brute_force(
    model: &Model,
    combinator: &Combinator,
    budget: OracleBudget,
) -> Result<Solution> {
    budget.check(model.joint_state_count())?;
    let cards = model.cardinalities();

    let mut best = f64::NEG_INFINITY;
    let mut odo = Odometer::new(cards);
    while let Some(y) = odo.current() {
        let h = objective(combinator, model.evaluate_f(y)?, &model.evaluate_g(y)?)?;
        if h > best {
            best = h;
        }
        odo.advance();
    }
    if best == f64::NEG_INFINITY {
        return Err(Error::Infeasible);
    }

    let tol = TIE_TOLERANCE * best.abs().max(1.0);
    let mut odo = Odometer::new(cards);
    while let Some(y) = odo.current() {
        let f = model.evaluate_f(y)?;
        let g = model.evaluate_g(y)?;
        let h = objective(combinator, f, &g)?;
        if h > f64::NEG_INFINITY && h >= best - tol {
            return Ok(Solution {
                y: y.to_vec(),
                value: h,
                energy: f,
                stats: g,
                diagnostics: Diagnostics::default(),
            });
        }
        odo.advance();
    }
    unreachable!("the maximizer is revisited")
}

/// Every reachable entry of `μ_{i→j}`: keyed by (sepset assignment, `l`),
/// where the sepset is `tree.sepset(i, j)` in ascending variable order.
pub fn brute_force_message_table(
    tree: &CliqueTree<'_>,
    i: usize,
    j: usize,
    budget: OracleBudget,
) -> Result<BTreeMap<(Vec<usize>, AuxVector), f64>> {
    if !tree.neighbors(i).contains(&j) {
        return Err(Error::InvalidTree(format!("{i} and {j} are not adjacent")));
    }
    let model = tree.model();
    let cards = model.cardinalities();
    let side = tree.side_of(i, j);
    let mut vars: Vec<usize> = side
        .iter()
        .flat_map(|&u| tree.node(u).vars.clone())
        .collect();
    vars.sort_unstable();
    vars.dedup();
    let mut energy: Vec<usize> = side
        .iter()
        .flat_map(|&u| tree.node(u).energy.clone())
        .collect();
    energy.sort_unstable();
    let mut stats: Vec<usize> = side
        .iter()
        .flat_map(|&u| tree.node(u).stats.clone())
        .collect();
    stats.sort_unstable();
    let sepset = tree.sepset(i, j);

    let sub_cards: Vec<usize> = vars.iter().map(|&v| cards[v]).collect();
    budget.check(sub_cards.iter().map(|&c| c as u128).product())?;

    let acc = model.accumulation();
    let mut y = vec![0usize; model.num_vars()];
    let mut table = BTreeMap::new();
    let mut odo = Odometer::new(&sub_cards);
    while let Some(sub) = odo.current() {
        for (&v, &s) in vars.iter().zip(sub) {
            y[v] = s;
        }
        let f: f64 = energy
            .iter()
            .map(|&t| model.energy_factors()[t].value(cards, &y))
            .sum();
        if f > f64::NEG_INFINITY {
            let mut l = vec![0i64; model.stat_dim()];
            for &t in &stats {
                acc.fold_into(&mut l, model.statistic_factors()[t].value(cards, &y));
            }
            let key = (sepset.iter().map(|&v| y[v]).collect(), AuxVector::from(l));
            let slot = table.entry(key).or_insert(f64::NEG_INFINITY);
            if f > *slot {
                *slot = f;
            }
        }
        odo.advance();
    }
    Ok(table)
}

/// `μ_{i→j}(s, l)` by direct maximization; `-∞` when no assignment reaches `l`.
pub fn brute_force_message(
    tree: &CliqueTree<'_>,
    i: usize,
    j: usize,
    sepset_states: &[usize],
    l: &AuxVector,
    budget: OracleBudget,
) -> Result<f64> {
    let table = brute_force_message_table(tree, i, j, budget)?;
    Ok(table
        .get(&(sepset_states.to_vec(), l.clone()))
        .copied()
        .unwrap_or(f64::NEG_INFINITY))
}

/// Loss value computed directly from `(y*, y)`, without statistics.
pub fn direct_loss(kind: &LossKind, truth: &GroundTruth, y: &[usize]) -> f64 {
    let star = truth.labels();
    let m = star.len() as f64;
    let pairs = || star.iter().zip(y);
    let mismatches = pairs().filter(|(a, b)| a != b).count() as f64;
    let tp = pairs()
        .filter(|(a, b)| a == b && truth.is_positive(**b))
        .count() as f64;
    let fp = pairs()
        .filter(|(a, b)| a != b && truth.is_positive(**b))
        .count() as f64;
    let pos = truth.num_positive() as f64;
    let ratio_loss = |num: f64, den: f64| if den == 0.0 { 0.0 } else { 1.0 - num / den };
    match kind {
        LossKind::Hamming => mismatches,
        LossKind::HammingNorm => mismatches / m,
        LossKind::WeightedHamming(w) => pairs()
            .map(|(&a, &b)| match w {
                Some(w) => w[a][b],
                None => (a != b) as i32 as f64,
            })
            .sum(),
        LossKind::FpCount => fp,
        LossKind::Recall => ratio_loss(tp, pos),
        LossKind::Precision => ratio_loss(tp, tp + fp),
        LossKind::FBeta(beta) => {
            // 1 - F_beta from precision/recall counts.
            let b2 = beta * beta;
            ratio_loss((1.0 + b2) * tp, b2 * pos + tp + fp)
        }
        LossKind::Iou => ratio_loss(tp, pos + fp),
        LossKind::LabelCount | LossKind::LabelCountNorm => {
            let diff = (y.iter().sum::<usize>() as f64 - star.iter().sum::<usize>() as f64).abs();
            if *kind == LossKind::LabelCountNorm {
                diff / m
            } else {
                diff
            }
        }
        LossKind::ZeroOne => (mismatches > 0.0) as i32 as f64,
    }
}
