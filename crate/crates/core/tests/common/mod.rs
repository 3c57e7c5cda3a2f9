#![allow(dead_code)]

use std::collections::BTreeMap;
use std::sync::Arc;

use gmap::cliquetree::CliqueTree;
use gmap::inference::{send_message, Combinator, MessageTable, Monotonicity};
use gmap::model::{
    Accumulation, AccumulationSpec, AuxVector, EnergyFactor, Model, StatisticFactor,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Topology {
    Chain,
    /// Triples `(t-2, t-1, t)`: treewidth two.
    Width2,
    Star,
}

pub const TOPOLOGIES: [Topology; 3] = [Topology::Chain, Topology::Width2, Topology::Star];

pub fn scopes(topology: Topology, m: usize) -> Vec<Vec<usize>> {
    match topology {
        Topology::Chain => (1..m).map(|t| vec![t - 1, t]).collect(),
        Topology::Width2 if m >= 3 => (2..m).map(|t| vec![t - 2, t - 1, t]).collect(),
        Topology::Width2 => (1..m).map(|t| vec![t - 1, t]).collect(),
        Topology::Star => (1..m).map(|t| vec![0, t]).collect(),
    }
}

fn table(rng: &mut ChaCha8Rng, size: usize, inf_rate: f64) -> Vec<f64> {
    (0..size)
        .map(|_| {
            if rng.gen_bool(inf_rate) {
                f64::NEG_INFINITY
            } else {
                rng.gen_range(-1.0..1.0)
            }
        })
        .collect()
}

/// Unary plus structural factors with values in `[-1, 1)`, a fraction set to `-∞`.
pub fn energy_model(
    rng: &mut ChaCha8Rng,
    topology: Topology,
    m: usize,
    max_card: usize,
    inf_rate: f64,
) -> Model {
    let cards: Vec<usize> = (0..m).map(|_| rng.gen_range(2..=max_card)).collect();
    let mut energy: Vec<EnergyFactor> = (0..m)
        .map(|t| EnergyFactor::new(vec![t], table(rng, cards[t], inf_rate)))
        .collect();
    for scope in scopes(topology, m) {
        let size = scope.iter().map(|&v| cards[v]).product();
        energy.push(EnergyFactor::new(scope, table(rng, size, inf_rate)));
    }
    Model::new(cards, energy, vec![], AccumulationSpec::default()).unwrap()
}

/// Random non-negative statistics of dimension `p` with mixed ADD/MAX folds.
pub fn with_random_stats(rng: &mut ChaCha8Rng, model: &Model, p: usize) -> Model {
    let ops: Vec<Accumulation> = (0..p)
        .map(|_| {
            if rng.gen_bool(0.5) {
                Accumulation::Add
            } else {
                Accumulation::Max
            }
        })
        .collect();
    let cards = model.cardinalities();
    let mut stats: Vec<StatisticFactor> = (0..model.num_vars())
        .map(|t| {
            let values = (0..cards[t] * p).map(|_| rng.gen_range(0..=2)).collect();
            StatisticFactor::from_flat(vec![t], p, values)
        })
        .collect();
    if p > 0 {
        for f in model.energy_factors().iter().filter(|f| f.scope.len() > 1) {
            if rng.gen_bool(0.3) {
                let size: usize = f.scope.iter().map(|&v| cards[v]).product();
                let values = (0..size * p).map(|_| rng.gen_range(0..=1)).collect();
                stats.push(StatisticFactor::from_flat(f.scope.clone(), p, values));
            }
        }
    }
    model.with_statistics(stats, AccumulationSpec(ops)).unwrap()
}

pub const COMBINATOR_KINDS: [&str; 4] = ["sum", "product", "gate", "general"];

pub fn random_combinator(rng: &mut ChaCha8Rng, kind: &str, p: usize) -> Combinator {
    let w: Vec<f64> = (0..p).map(|_| rng.gen_range(-1.0..1.0)).collect();
    match kind {
        "sum" => {
            Combinator::sum(move |l| w.iter().zip(l.as_slice()).map(|(a, &b)| a * b as f64).sum())
        }
        "product" => {
            let base = [0.0, 0.5, 1.0][rng.gen_range(0..3)];
            Combinator::product(move |l| {
                base + w
                    .iter()
                    .zip(l.as_slice())
                    .map(|(a, &b)| a.abs() * b as f64)
                    .sum::<f64>()
            })
        }
        "gate" => {
            let k = rng.gen_range(0..=3i64);
            let with_eta = rng.gen_bool(0.5);
            let form = rng.gen_range(0..3);
            let pred = move |l: &AuxVector| {
                if l.dim() == 0 {
                    return true;
                }
                match form {
                    0 => l.get(0) >= k,
                    1 => l.get(0) == k,
                    _ => l.as_slice().iter().sum::<i64>() % 2 == 0,
                }
            };
            if with_eta {
                Combinator::gate_with(pred, move |l| {
                    0.25 * l.as_slice().iter().sum::<i64>() as f64
                })
            } else {
                Combinator::gate(pred)
            }
        }
        "general" => {
            let k = rng.gen_range(0..=3i64);
            Combinator::General {
                h: Arc::new(move |f: f64, l: &AuxVector| {
                    let s: i64 = l.as_slice().iter().sum();
                    if s <= k {
                        f + 0.1 * s as f64
                    } else {
                        2.0 * f - 1.0
                    }
                }),
                monotonicity: Monotonicity::NonDecreasing,
            }
        }
        other => panic!("unknown combinator kind {other}"),
    }
}

pub struct Instance {
    pub label: String,
    pub model: Model,
    pub combinator: Combinator,
}

/// Seeded random problems: M ≤ 8, N ≤ 3, P ≤ 2, every topology and combinator form.
pub fn suite(seeds: u64) -> Vec<Instance> {
    let mut out = Vec::new();
    for topology in TOPOLOGIES {
        for kind in COMBINATOR_KINDS {
            for seed in 0..seeds {
                let mut r = rng(seed * 1_000 + out.len() as u64);
                let m = r.gen_range(2..=8);
                let inf_rate = if r.gen_bool(0.3) { 0.15 } else { 0.0 };
                let base = energy_model(&mut r, topology, m, 3, inf_rate);
                let p = r.gen_range(0..=2);
                let model = with_random_stats(&mut r, &base, p);
                let combinator = random_combinator(&mut r, kind, p);
                out.push(Instance {
                    label: format!("{topology:?}/{kind}/seed{seed}/M{m}/P{p}"),
                    model,
                    combinator,
                });
            }
        }
    }
    out
}

/// Every directed message of `tree`, computed through the public per-edge API.
pub fn all_messages(tree: &CliqueTree<'_>) -> BTreeMap<(usize, usize), MessageTable> {
    fn get(
        tree: &CliqueTree<'_>,
        i: usize,
        j: usize,
        memo: &mut BTreeMap<(usize, usize), MessageTable>,
    ) {
        if memo.contains_key(&(i, j)) {
            return;
        }
        let others: Vec<usize> = tree
            .neighbors(i)
            .iter()
            .copied()
            .filter(|&k| k != j)
            .collect();
        for &k in &others {
            get(tree, k, i, memo);
        }
        let incoming: Vec<&MessageTable> = others.iter().map(|&k| &memo[&(k, i)]).collect();
        let t = send_message(tree, i, j, &incoming).unwrap();
        memo.insert((i, j), t);
    }
    let mut memo = BTreeMap::new();
    for (a, b) in tree.edges() {
        get(tree, a, b, &mut memo);
        get(tree, b, a, &mut memo);
    }
    memo
}

pub fn hamming_distance(a: &[usize], b: &[usize]) -> usize {
    a.iter().zip(b).filter(|(x, y)| x != y).count()
}

/// All assignments of `cards` in lexicographic order.
pub fn all_assignments(cards: &[usize]) -> Vec<Vec<usize>> {
    let mut out = vec![Vec::new()];
    for &c in cards {
        out = out
            .into_iter()
            .flat_map(|p| {
                (0..c).map(move |s| {
                    let mut q = p.clone();
                    q.push(s);
                    q
                })
            })
            .collect();
    }
    out
}

pub fn close(a: f64, b: f64) -> bool {
    a == b || (a - b).abs() <= 1e-9
}
