use super::message::Kernel;
use super::{canonicalize, Diagnostics, InferenceOptions, MessageStats, Solution};
use crate::cliquetree::{CliqueTree, Rooted};
use crate::error::{Error, Result};

/// Dense max-product table: best value and maximizing local state per sepset state.
struct Dense {
    kernel: Kernel,
    best: Vec<(f64, u32)>,
}

fn dense_message(kernel: Kernel, incoming: &[&Dense]) -> Dense {
    let count = kernel.out_count;
    let mut best = vec![(f64::NEG_INFINITY, 0u32); count];
    for x in 0..kernel.states {
        let mut v = kernel.f[x];
        if v == f64::NEG_INFINITY {
            continue;
        }
        for (ci, child) in incoming.iter().enumerate() {
            let c = child.best[kernel.child_index[ci][x] as usize].0;
            v += c;
        }
        if v == f64::NEG_INFINITY {
            continue;
        }
        let slot = &mut best[kernel.out_index[x] as usize];
        if slot.0 == f64::NEG_INFINITY || v > slot.0 {
            *slot = (v, x as u32);
        }
    }
    Dense { kernel, best }
}

fn dense_pass(
    tree: &CliqueTree<'_>,
    rooted: &Rooted,
    clamps: Option<&[Option<usize>]>,
) -> Result<Option<Solution>> {
    let n = tree.num_nodes();
    let mut tables: Vec<Option<Dense>> = (0..n).map(|_| None).collect();
    for &u in &rooted.postorder {
        let kernel = Kernel::new(tree, u, rooted.parent[u], clamps, false);
        let incoming: Vec<&Dense> = kernel
            .children
            .iter()
            .map(|&c| tables[c].as_ref().expect("children first"))
            .collect();
        let t = dense_message(kernel, &incoming);
        tables[u] = Some(t);
    }
    let root = tables[rooted.root].as_ref().expect("root computed");
    let (value, _) = root.best[0];
    if value == f64::NEG_INFINITY {
        return Ok(None);
    }

    let model = tree.model();
    let mut y = vec![0usize; model.num_vars()];
    let mut stack = vec![(rooted.root, root.best[0].1 as usize)];
    while let Some((u, x)) = stack.pop() {
        let t = tables[u].as_ref().expect("computed");
        t.kernel.decode_into(x, &mut y);
        for (ci, &c) in t.kernel.children.iter().enumerate() {
            let child = tables[c].as_ref().expect("computed");
            let s = t.kernel.child_index[ci][x] as usize;
            stack.push((c, child.best[s].1 as usize));
        }
    }

    let mut messages: Vec<MessageStats> = rooted
        .postorder
        .iter()
        .map(|&u| {
            let t = tables[u].as_ref().expect("computed");
            MessageStats {
                from: u,
                to: rooted.parent[u],
                entries: t.best.iter().filter(|b| b.0 > f64::NEG_INFINITY).count(),
                l_states: 1,
                work: (t.kernel.states * t.kernel.children.len().max(1)) as u64,
            }
        })
        .collect();
    // Root beliefs last, matching the constrained engine.
    messages.sort_by_key(|m| m.to.is_none());
    Ok(Some(Solution {
        stats: model.evaluate_g(&y)?,
        y,
        value,
        energy: value,
        diagnostics: Diagnostics {
            messages,
            canonical_passes: 0,
        },
    }))
}

/// Plain max-product junction tree (`H = F`) with dense tables, used as the
/// baseline for unconstrained MAP.
pub fn standard_junction_tree(
    tree: &CliqueTree<'_>,
    options: &InferenceOptions,
) -> Result<Solution> {
    tree.validate()?;
    let rooted = tree.rooted();
    let first = dense_pass(tree, &rooted, None)?.ok_or(Error::Infeasible)?;
    if !options.canonical {
        return Ok(first);
    }
    canonicalize(tree.model().num_vars(), first, |clamps| {
        dense_pass(tree, &rooted, Some(clamps))
    })
}
