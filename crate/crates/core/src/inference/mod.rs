//! Constrained max-product message passing over a clique tree.

mod combinator;
mod junction;
mod message;

use std::fmt;

use rayon::prelude::*;
use serde::Serialize;

use crate::cliquetree::{CliqueTree, Rooted};
use crate::error::{Error, Result};
use crate::model::AuxVector;

pub use combinator::{Combinator, Eta, Monotonicity, Objective, Predicate};
pub use junction::standard_junction_tree;
pub use message::{send_message, MessageEntry, MessageTable};

use message::{gather, Kernel};

/// Relative tolerance used when breaking ties between optimal assignments.
pub const TIE_TOLERANCE: f64 = 1e-9;

#[derive(Clone, Debug)]
pub struct InferenceOptions {
    /// Return the lexicographically smallest optimal assignment. Without it,
    /// ties are broken locally inside each message (faster, still optimal).
    pub canonical: bool,
    /// Compute messages of one tree level in parallel.
    pub parallel: bool,
}

impl Default for InferenceOptions {
    fn default() -> Self {
        InferenceOptions {
            canonical: true,
            parallel: false,
        }
    }
}

impl InferenceOptions {
    pub fn local() -> Self {
        InferenceOptions {
            canonical: false,
            parallel: false,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MessageStats {
    pub from: usize,
    /// `None` for the root beliefs.
    pub to: Option<usize>,
    pub entries: usize,
    pub l_states: usize,
    pub work: u64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct Diagnostics {
    pub messages: Vec<MessageStats>,
    /// Extra clamped passes spent on canonical tie-breaking.
    pub canonical_passes: usize,
}

impl Diagnostics {
    /// Number of inter-clique messages (root beliefs excluded).
    pub fn message_count(&self) -> usize {
        self.messages.iter().filter(|m| m.to.is_some()).count()
    }

    /// Largest number of distinct auxiliary states in any table.
    pub fn max_l_states(&self) -> usize {
        self.messages.iter().map(|m| m.l_states).max().unwrap_or(0)
    }

    pub fn total_work(&self) -> u64 {
        self.messages.iter().map(|m| m.work).sum()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Solution {
    pub y: Vec<usize>,
    /// `p* = H(F, G)` at the returned assignment.
    pub value: f64,
    /// `F(y)` as accumulated by the messages.
    pub energy: f64,
    /// `G(y)`.
    pub stats: AuxVector,
    pub diagnostics: Diagnostics,
}

impl Solution {
    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("solution serializes")
    }
}

impl fmt::Display for Solution {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "p* {}", self.value)?;
        writeln!(f, "F {}", self.energy)?;
        writeln!(f, "G{}", join_prefixed(self.stats.as_slice()))?;
        write!(f, "y{}", join_prefixed(&self.y))
    }
}

fn join_prefixed<T: fmt::Display>(items: &[T]) -> String {
    items.iter().map(|x| format!(" {x}")).collect()
}

/// Upward messages toward the tree root plus the root beliefs.
#[derive(Clone, Debug)]
pub struct Messages {
    root: usize,
    upward: Vec<Option<MessageTable>>,
    beliefs: MessageTable,
}

impl Messages {
    pub fn root(&self) -> usize {
        self.root
    }

    /// The message sent by `from` to its parent.
    pub fn upward(&self, from: usize) -> Option<&MessageTable> {
        self.upward.get(from).and_then(Option::as_ref)
    }

    /// Root beliefs `μ(l)`, a single slice keyed by `l`.
    pub fn beliefs(&self) -> &MessageTable {
        &self.beliefs
    }

    pub fn diagnostics(&self) -> Diagnostics {
        let stat = |t: &MessageTable| MessageStats {
            from: t.from,
            to: t.to,
            entries: t.num_entries(),
            l_states: t.distinct_l_states(),
            work: t.work,
        };
        let mut messages: Vec<MessageStats> = self.upward.iter().flatten().map(stat).collect();
        messages.push(stat(&self.beliefs));
        Diagnostics {
            messages,
            canonical_passes: 0,
        }
    }
}

fn heights(rooted: &Rooted) -> Vec<usize> {
    let mut h = vec![0; rooted.parent.len()];
    for &u in &rooted.postorder {
        h[u] = rooted.children[u]
            .iter()
            .map(|&c| h[c] + 1)
            .max()
            .unwrap_or(0);
    }
    h
}

fn upward_pass(
    tree: &CliqueTree<'_>,
    rooted: &Rooted,
    clamps: Option<&[Option<usize>]>,
    parallel: bool,
) -> Messages {
    let model = tree.model();
    let n = tree.num_nodes();
    let mut upward: Vec<Option<MessageTable>> = vec![None; n];
    let compute = |upward: &[Option<MessageTable>], u: usize| {
        let kernel = Kernel::new(tree, u, rooted.parent[u], clamps, true);
        let incoming: Vec<&MessageTable> = kernel
            .children
            .iter()
            .map(|&c| upward[c].as_ref().expect("children are computed first"))
            .collect();
        kernel.compute(model, &incoming)
    };

    if parallel {
        let h = heights(rooted);
        let top = h[rooted.root];
        let mut levels = vec![Vec::new(); top + 1];
        for u in 0..n {
            levels[h[u]].push(u);
        }
        for level in &levels[..top] {
            let done: Vec<(usize, MessageTable)> = level
                .par_iter()
                .map(|&u| (u, compute(&upward, u)))
                .collect();
            for (u, t) in done {
                upward[u] = Some(t);
            }
        }
    } else {
        for &u in &rooted.postorder {
            if u != rooted.root {
                upward[u] = Some(compute(&upward, u));
            }
        }
    }
    let beliefs = compute(&upward, rooted.root);
    Messages {
        root: rooted.root,
        upward,
        beliefs,
    }
}

/// All upward messages toward `tree.root()` and the root beliefs.
pub fn collect_messages(tree: &CliqueTree<'_>, parallel: bool) -> Result<Messages> {
    tree.validate()?;
    Ok(upward_pass(tree, &tree.rooted(), None, parallel))
}

/// Root beliefs from the messages of every root neighbor.
pub fn root_beliefs(tree: &CliqueTree<'_>, incoming: &[&MessageTable]) -> Result<MessageTable> {
    let root = tree.root();
    let kernel = Kernel::new(tree, root, None, None, true);
    let ordered = gather(root, root, &kernel.children, incoming)?;
    Ok(kernel.compute(tree.model(), &ordered))
}

/// Best root state under `combinator`: index into the belief slice and `H`.
/// Ties keep the smallest `l`.
fn select(beliefs: &MessageTable, combinator: &Combinator) -> Result<Option<(usize, f64)>> {
    let mut best: Option<(usize, f64)> = None;
    for (k, (l, e)) in beliefs.slice(0).iter().enumerate() {
        let h = combinator.eval(e.value, l)?;
        if h == f64::NEG_INFINITY {
            continue;
        }
        if best.is_none_or(|(_, b)| h > b) {
            best = Some((k, h));
        }
    }
    Ok(best)
}

fn corrupt(msg: String) -> Error {
    Error::CorruptRecord(msg)
}

/// Recovers the full assignment achieving root belief `l_star` by following
/// decision records down the tree. Variables in no clique are set to 0.
pub fn backtrack(
    tree: &CliqueTree<'_>,
    messages: &Messages,
    l_star: &AuxVector,
) -> Result<Vec<usize>> {
    let cards = tree.model().cardinalities();
    let mut y: Vec<Option<usize>> = vec![None; cards.len()];
    let root_entry = messages
        .beliefs
        .get(0, l_star)
        .ok_or_else(|| corrupt(format!("no root belief for l = {l_star}")))?;
    let mut stack = vec![(messages.root, &messages.beliefs, root_entry)];

    while let Some((node, table, entry)) = stack.pop() {
        let vars = &tree.node(node).vars;
        let mut rem = entry.local_state as usize;
        for &v in vars.iter().rev() {
            let s = rem % cards[v];
            rem /= cards[v];
            match y[v] {
                Some(prev) if prev != s => {
                    return Err(corrupt(format!(
                        "clique {node} sets variable {v} to {s}, already {prev}"
                    )))
                }
                _ => y[v] = Some(s),
            }
        }
        if rem != 0 || entry.children.len() != table.children.len() {
            return Err(corrupt(format!("malformed record at clique {node}")));
        }
        for (&c, &idx) in table.children.iter().zip(&entry.children) {
            let child = messages
                .upward(c)
                .ok_or_else(|| corrupt(format!("missing message from clique {c}")))?;
            let sep: Vec<usize> = child
                .sepset
                .iter()
                .map(|&v| y[v].expect("sepset variables belong to the parent"))
                .collect();
            let (_, e) = child
                .slice(child.sepset_index(&sep))
                .get(idx as usize)
                .ok_or_else(|| corrupt(format!("record index {idx} out of range at clique {c}")))?;
            stack.push((c, child, e));
        }
    }
    Ok(y.into_iter().map(|s| s.unwrap_or(0)).collect())
}

fn solve_pass(
    tree: &CliqueTree<'_>,
    rooted: &Rooted,
    combinator: &Combinator,
    clamps: Option<&[Option<usize>]>,
    parallel: bool,
) -> Result<Option<Solution>> {
    let messages = upward_pass(tree, rooted, clamps, parallel);
    let Some((k, value)) = select(&messages.beliefs, combinator)? else {
        return Ok(None);
    };
    let (l_star, entry) = &messages.beliefs.slice(0)[k];
    let y = backtrack(tree, &messages, l_star)?;
    Ok(Some(Solution {
        y,
        value,
        energy: entry.value,
        stats: l_star.clone(),
        diagnostics: messages.diagnostics(),
    }))
}

/// Walks variables in order, clamping each to the smallest state that still
/// reaches the optimum within tolerance.
pub(crate) fn canonicalize<S>(num_vars: usize, first: Solution, mut solve: S) -> Result<Solution>
where
    S: FnMut(&[Option<usize>]) -> Result<Option<Solution>>,
{
    let target = first.value;
    let tol = TIE_TOLERANCE * target.abs().max(1.0);
    let mut passes = 0;
    let mut clamps = vec![None; num_vars];
    let mut best = first.clone();
    for v in 0..num_vars {
        for a in 0..best.y[v] {
            clamps[v] = Some(a);
            passes += 1;
            if let Some(sol) = solve(&clamps)? {
                if sol.value >= target - tol {
                    best = sol;
                    break;
                }
            }
        }
        clamps[v] = Some(best.y[v]);
    }
    best.diagnostics = first.diagnostics;
    best.diagnostics.canonical_passes = passes;
    Ok(best)
}

/// Solves `max_y H(F(y), G(y))` on `tree`, rooted at `tree.root()`.
///
/// Returns [`Error::Infeasible`] when every root belief maps to `-∞`.
pub fn run_constrained_mp(
    tree: &CliqueTree<'_>,
    combinator: &Combinator,
    options: &InferenceOptions,
) -> Result<Solution> {
    tree.validate()?;
    combinator.check_declared()?;
    let rooted = tree.rooted();
    let first =
        solve_pass(tree, &rooted, combinator, None, options.parallel)?.ok_or(Error::Infeasible)?;
    if !options.canonical {
        return Ok(first);
    }
    canonicalize(tree.model().num_vars(), first, |clamps| {
        solve_pass(tree, &rooted, combinator, Some(clamps), options.parallel)
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cliquetree::{build_clique_tree, min_fill_order};
    use crate::model::{AccumulationSpec, EnergyFactor, Model, StatisticFactor};

    fn two_var() -> Model {
        Model::new(
            vec![2, 2],
            vec![EnergyFactor::new(vec![0, 1], vec![1.0, 2.0, 4.0, 3.0])],
            vec![StatisticFactor::new(vec![0], 1, vec![vec![0], vec![1]]).unwrap()],
            AccumulationSpec::all_add(1),
        )
        .unwrap()
    }

    fn l(v: &[i64]) -> AuxVector {
        AuxVector::from_slice(v)
    }

    #[test]
    fn leaf_message_over_separator() {
        let m = two_var();
        let t = CliqueTree::from_cliques(&m, vec![vec![0, 1], vec![1]], &[(0, 1)], 1).unwrap();
        let msg = send_message(&t, 0, 1, &[]).unwrap();
        assert_eq!(msg.sepset, vec![1]);
        assert_eq!(msg.get(0, &l(&[0])).unwrap().value, 1.0);
        assert_eq!(msg.get(0, &l(&[1])).unwrap().value, 4.0);
        assert_eq!(msg.get(1, &l(&[0])).unwrap().value, 2.0);
        assert_eq!(msg.get(1, &l(&[1])).unwrap().value, 3.0);
        assert_eq!(msg.num_entries(), 4);

        let beliefs = root_beliefs(&t, &[&msg]).unwrap();
        assert_eq!(beliefs.get(0, &l(&[0])).unwrap().value, 2.0);
        assert_eq!(beliefs.get(0, &l(&[1])).unwrap().value, 4.0);
    }

    #[test]
    fn missing_incoming_message() {
        let m = two_var();
        let t = CliqueTree::from_cliques(&m, vec![vec![0, 1], vec![1]], &[(0, 1)], 1).unwrap();
        assert!(matches!(
            root_beliefs(&t, &[]),
            Err(Error::NotReady {
                node: 1,
                missing: 0,
                ..
            })
        ));
    }

    #[test]
    fn worked_example() {
        let m = two_var();
        let t = build_clique_tree(&m, &min_fill_order(&m)).unwrap();
        let opts = InferenceOptions::default();

        let s = run_constrained_mp(&t, &Combinator::product(|l| l.get(0) as f64), &opts).unwrap();
        assert_eq!(
            (s.value, s.y.clone(), s.stats.clone()),
            (4.0, vec![1, 0], l(&[1]))
        );

        let s = run_constrained_mp(&t, &Combinator::plain(), &opts).unwrap();
        assert_eq!((s.value, s.y.clone()), (4.0, vec![1, 0]));

        let s = run_constrained_mp(&t, &Combinator::gate(|l| l.get(0) == 0), &opts).unwrap();
        assert_eq!((s.value, s.y.clone(), s.energy), (2.0, vec![0, 1], 2.0));
        assert_eq!(s.to_string(), "p* 2\nF 2\nG 0\ny 0 1");
    }

    #[test]
    fn infeasible_gate() {
        let m = two_var();
        let t = build_clique_tree(&m, &min_fill_order(&m)).unwrap();
        let r = run_constrained_mp(
            &t,
            &Combinator::gate(|l| l.get(0) == 5),
            &InferenceOptions::default(),
        );
        assert_eq!(r, Err(Error::Infeasible));
    }

    #[test]
    fn canonical_picks_lex_min_among_ties() {
        // Chain of three all-zero binaries: every assignment ties.
        let cards = vec![2; 3];
        let m = Model::new(
            cards.clone(),
            vec![
                EnergyFactor::new(vec![0, 1], vec![0.0, 0.0, 0.0, 0.0]),
                EnergyFactor::new(vec![1, 2], vec![0.0, 0.0, 0.0, 0.0]),
            ],
            vec![],
            AccumulationSpec::default(),
        )
        .unwrap();
        let t = build_clique_tree(&m, &min_fill_order(&m)).unwrap();
        let s = run_constrained_mp(&t, &Combinator::plain(), &InferenceOptions::default()).unwrap();
        assert_eq!(s.y, vec![0, 0, 0]);
    }

    #[test]
    fn parallel_matches_sequential() {
        let cards = vec![3; 7];
        let energy = (1..7)
            .map(|v| {
                let vals = (0..9)
                    .map(|k| ((k * 7 + v * 3) % 5) as f64 * 0.25)
                    .collect();
                EnergyFactor::new(vec![(v - 1) / 2, v], vals)
            })
            .collect();
        let stats = (0..7)
            .map(|v| StatisticFactor::new(vec![v], 1, vec![vec![0], vec![1], vec![1]]).unwrap())
            .collect();
        let m = Model::new(cards, energy, stats, AccumulationSpec::all_add(1)).unwrap();
        let t = build_clique_tree(&m, &min_fill_order(&m)).unwrap();
        let c = Combinator::sum(|l| 0.3 * l.get(0) as f64);
        let seq = run_constrained_mp(&t, &c, &InferenceOptions::local()).unwrap();
        let par = run_constrained_mp(
            &t,
            &c,
            &InferenceOptions {
                canonical: false,
                parallel: true,
            },
        )
        .unwrap();
        assert_eq!(seq, par);
    }

    #[test]
    fn backtrack_rejects_unknown_l() {
        let m = two_var();
        let t = build_clique_tree(&m, &min_fill_order(&m)).unwrap();
        let msgs = collect_messages(&t, false).unwrap();
        assert!(matches!(
            backtrack(&t, &msgs, &l(&[7])),
            Err(Error::CorruptRecord(_))
        ));
        assert_eq!(backtrack(&t, &msgs, &l(&[1])).unwrap(), vec![1, 0]);
    }
}
