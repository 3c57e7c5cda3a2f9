use rustc_hash::{FxHashMap, FxHashSet};
use smallvec::SmallVec;

use crate::cliquetree::{intersect, CliqueTree};
use crate::error::{Error, Result};
use crate::model::{AuxVector, Model};

/// Decision record of one message entry: the maximizing local clique state and,
/// per contributing child (ascending id), the index of the chosen entry in that
/// child's slice.
#[derive(Clone, Debug, PartialEq)]
pub struct MessageEntry {
    pub value: f64,
    pub local_state: u32,
    pub children: SmallVec<[u32; 2]>,
}

/// Sparse message `μ_{from→to}(s, l)`; `to == None` marks the root beliefs.
///
/// Slices are indexed by the row-major sepset state and sorted by `l`.
/// Only reachable `(s, l)` pairs with a finite value are stored.
#[derive(Clone, Debug)]
pub struct MessageTable {
    pub from: usize,
    pub to: Option<usize>,
    pub sepset: Vec<usize>,
    sep_cards: Vec<usize>,
    pub children: Vec<usize>,
    slices: Vec<Vec<(AuxVector, MessageEntry)>>,
    pub work: u64,
}

impl MessageTable {
    pub fn num_sepset_states(&self) -> usize {
        self.slices.len()
    }

    pub fn slice(&self, s: usize) -> &[(AuxVector, MessageEntry)] {
        &self.slices[s]
    }

    /// Row-major index of a sepset assignment (one state per sepset variable).
    pub fn sepset_index(&self, states: &[usize]) -> usize {
        states
            .iter()
            .zip(&self.sep_cards)
            .fold(0, |idx, (&s, &c)| idx * c + s)
    }

    pub fn decode_sepset(&self, mut s: usize) -> Vec<usize> {
        let mut out = vec![0; self.sep_cards.len()];
        for k in (0..out.len()).rev() {
            out[k] = s % self.sep_cards[k];
            s /= self.sep_cards[k];
        }
        out
    }

    pub fn get(&self, s: usize, l: &AuxVector) -> Option<&MessageEntry> {
        let slice = &self.slices[s];
        slice
            .binary_search_by(|(k, _)| k.cmp(l))
            .ok()
            .map(|i| &slice[i].1)
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, &AuxVector, &MessageEntry)> {
        self.slices
            .iter()
            .enumerate()
            .flat_map(|(s, sl)| sl.iter().map(move |(l, e)| (s, l, e)))
    }

    pub fn num_entries(&self) -> usize {
        self.slices.iter().map(Vec::len).sum()
    }

    /// Number of distinct auxiliary states across all sepset assignments.
    pub fn distinct_l_states(&self) -> usize {
        if self.slices.len() == 1 {
            return self.slices[0].len();
        }
        let keys: FxHashSet<&AuxVector> = self.iter().map(|(_, l, _)| l).collect();
        keys.len()
    }
}

/// Per-clique precomputation for one message direction.
pub(crate) struct Kernel {
    pub node: usize,
    pub target: Option<usize>,
    pub vars: Vec<usize>,
    radix: Vec<usize>,
    pub states: usize,
    pub f: Vec<f64>,
    g: Vec<i64>,
    p: usize,
    pub out_index: Vec<u32>,
    pub out_sepset: Vec<usize>,
    pub out_count: usize,
    pub children: Vec<usize>,
    pub child_index: Vec<Vec<u32>>,
}

impl Kernel {
    pub fn new(
        tree: &CliqueTree<'_>,
        node: usize,
        target: Option<usize>,
        clamps: Option<&[Option<usize>]>,
        with_stats: bool,
    ) -> Kernel {
        let model: &Model = tree.model();
        let cards = model.cardinalities();
        let clique = tree.node(node);
        let vars = clique.vars.clone();
        let radix: Vec<usize> = vars.iter().map(|&v| cards[v]).collect();
        let states: usize = radix.iter().product();
        let p = if with_stats { model.stat_dim() } else { 0 };

        let out_sepset = match target {
            Some(j) => tree.sepset(node, j),
            None => Vec::new(),
        };
        let out_count = out_sepset.iter().map(|&v| cards[v]).product();
        let children: Vec<usize> = tree
            .neighbors(node)
            .iter()
            .copied()
            .filter(|&k| Some(k) != target)
            .collect();
        let child_seps: Vec<Vec<usize>> = children
            .iter()
            .map(|&k| intersect(&tree.node(k).vars, &vars))
            .collect();

        // Scopes and sepsets as positions within the clique, so one clique
        // state is decoded locally without touching a full-length assignment.
        let pos = |scope: &[usize]| -> Vec<usize> {
            scope
                .iter()
                .map(|v| vars.binary_search(v).expect("scope inside clique"))
                .collect()
        };
        let energy = model.energy_factors();
        let stats = model.statistic_factors();
        let energy_pos: Vec<Vec<usize>> = clique
            .energy
            .iter()
            .map(|&t| pos(&energy[t].scope))
            .collect();
        let stats_pos: Vec<Vec<usize>> =
            clique.stats.iter().map(|&t| pos(&stats[t].scope)).collect();
        let out_pos = pos(&out_sepset);
        let child_pos: Vec<Vec<usize>> = child_seps.iter().map(|s| pos(s)).collect();
        let clamp: Vec<Option<usize>> = vars.iter().map(|&v| clamps.and_then(|c| c[v])).collect();
        let index =
            |p: &[usize], local: &[usize]| p.iter().fold(0, |i, &k| i * radix[k] + local[k]);

        let mut f = vec![0.0; states];
        let mut g = vec![0i64; states * p];
        let mut out_index = vec![0u32; states];
        let mut child_index = vec![vec![0u32; states]; children.len()];
        let mut local = vec![0usize; vars.len()];
        let acc = model.accumulation();

        for x in 0..states {
            let mut rem = x;
            for k in (0..vars.len()).rev() {
                local[k] = rem % radix[k];
                rem /= radix[k];
            }
            let clamped_out = clamp
                .iter()
                .zip(&local)
                .any(|(c, &s)| matches!(c, Some(a) if *a != s));
            f[x] = if clamped_out {
                f64::NEG_INFINITY
            } else {
                clique
                    .energy
                    .iter()
                    .zip(&energy_pos)
                    .map(|(&t, ps)| energy[t].values[index(ps, &local)])
                    .sum()
            };
            if p > 0 {
                let slot = &mut g[x * p..(x + 1) * p];
                for (&t, ps) in clique.stats.iter().zip(&stats_pos) {
                    acc.fold_into(slot, stats[t].entry(index(ps, &local)));
                }
            }
            out_index[x] = index(&out_pos, &local) as u32;
            for (ci, ps) in child_pos.iter().enumerate() {
                child_index[ci][x] = index(ps, &local) as u32;
            }
        }

        Kernel {
            node,
            target,
            vars,
            radix,
            states,
            f,
            g,
            p,
            out_index,
            out_sepset,
            out_count,
            children,
            child_index,
        }
    }

    pub fn decode_into(&self, x: usize, y: &mut [usize]) {
        let mut rem = x;
        for k in (0..self.vars.len()).rev() {
            y[self.vars[k]] = rem % self.radix[k];
            rem /= self.radix[k];
        }
    }

    fn local_stats(&self, x: usize) -> AuxVector {
        AuxVector::from_slice(&self.g[x * self.p..(x + 1) * self.p])
    }

    /// Constrained max-product step. Children are combined as a left fold of
    /// sparse ⊕-convolutions. Candidates are visited in ascending (local state, child
    /// keys) order and only strict improvements are kept.
    pub fn compute(&self, model: &Model, incoming: &[&MessageTable]) -> MessageTable {
        debug_assert_eq!(incoming.len(), self.children.len());
        let acc = model.accumulation();
        let cards = model.cardinalities();
        let mut out: Vec<FxHashMap<AuxVector, MessageEntry>> =
            (0..self.out_count).map(|_| FxHashMap::default()).collect();
        let mut work = 0u64;

        type Partial = (AuxVector, f64, SmallVec<[u32; 2]>);
        let mut cands: Vec<Partial> = Vec::new();
        let mut next: FxHashMap<AuxVector, (f64, SmallVec<[u32; 2]>)> = FxHashMap::default();

        for x in 0..self.states {
            let fx = self.f[x];
            if fx == f64::NEG_INFINITY {
                continue;
            }
            let slot = &mut out[self.out_index[x] as usize];
            let gx = self.local_stats(x);
            let Some((last, init)) = incoming.split_last() else {
                work += 1;
                upsert(slot, gx, fx, x as u32, SmallVec::new());
                continue;
            };
            cands.clear();
            cands.push((gx, fx, SmallVec::new()));
            for (ci, table) in init.iter().enumerate() {
                let sl = table.slice(self.child_index[ci][x] as usize);
                next.clear();
                for (la, va, ra) in &cands {
                    for (idx, (lk, ek)) in sl.iter().enumerate() {
                        work += 1;
                        let mut l = la.clone();
                        acc.fold_into(&mut l.0, &lk.0);
                        let v = va + ek.value;
                        match next.get_mut(&l) {
                            Some(cur) if cur.0 >= v => {}
                            Some(cur) => {
                                cur.0 = v;
                                cur.1 = ra.clone();
                                cur.1.push(idx as u32);
                            }
                            None => {
                                let mut r = ra.clone();
                                r.push(idx as u32);
                                next.insert(l, (v, r));
                            }
                        }
                    }
                }
                cands.clear();
                cands.extend(next.drain().map(|(l, (v, r))| (l, v, r)));
                cands.sort_unstable_by(|a, b| a.0.cmp(&b.0));
            }
            let ci = init.len();
            let sl = last.slice(self.child_index[ci][x] as usize);
            for (la, va, ra) in &cands {
                for (idx, (lk, ek)) in sl.iter().enumerate() {
                    work += 1;
                    let mut l = la.clone();
                    acc.fold_into(&mut l.0, &lk.0);
                    let mut r = ra.clone();
                    r.push(idx as u32);
                    upsert(slot, l, va + ek.value, x as u32, r);
                }
            }
        }

        let slices = out
            .into_iter()
            .map(|map| {
                let mut v: Vec<(AuxVector, MessageEntry)> = map.into_iter().collect();
                v.sort_unstable_by(|a, b| a.0.cmp(&b.0));
                v
            })
            .collect();
        MessageTable {
            from: self.node,
            to: self.target,
            sep_cards: self.out_sepset.iter().map(|&v| cards[v]).collect(),
            sepset: self.out_sepset.clone(),
            children: self.children.clone(),
            slices,
            work,
        }
    }
}

#[inline]
fn upsert(
    slot: &mut FxHashMap<AuxVector, MessageEntry>,
    l: AuxVector,
    value: f64,
    local_state: u32,
    children: SmallVec<[u32; 2]>,
) {
    match slot.get_mut(&l) {
        Some(cur) if cur.value >= value => {}
        Some(cur) => {
            cur.value = value;
            cur.local_state = local_state;
            cur.children = children;
        }
        None => {
            slot.insert(
                l,
                MessageEntry {
                    value,
                    local_state,
                    children,
                },
            );
        }
    }
}

/// Orders `incoming` to match `children`, failing with `NotReady` on a gap.
pub(crate) fn gather<'a>(
    node: usize,
    target: usize,
    children: &[usize],
    incoming: &[&'a MessageTable],
) -> Result<Vec<&'a MessageTable>> {
    children
        .iter()
        .map(|&k| {
            incoming
                .iter()
                .copied()
                .find(|t| t.from == k && t.to == Some(node))
                .ok_or(Error::NotReady {
                    node,
                    target,
                    missing: k,
                })
        })
        .collect()
}

/// Message from clique `i` to its neighbor `j`, given the messages
/// `μ_{k→i}` for every other neighbor `k`.
pub fn send_message(
    tree: &CliqueTree<'_>,
    i: usize,
    j: usize,
    incoming: &[&MessageTable],
) -> Result<MessageTable> {
    if i >= tree.num_nodes() || !tree.neighbors(i).contains(&j) {
        return Err(Error::InvalidTree(format!("{i} and {j} are not adjacent")));
    }
    let kernel = Kernel::new(tree, i, Some(j), None, true);
    let ordered = gather(i, j, &kernel.children, incoming)?;
    Ok(kernel.compute(tree.model(), &ordered))
}
