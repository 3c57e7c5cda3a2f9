//! Degree-reducing rewrites of a clique tree. Both keep the clique sets, the
//! factor assignment, and the running intersection property.

use std::collections::{BTreeMap, VecDeque};

use super::{intersect, CliqueNode, CliqueTree};

/// Replaces every node of degree `d > 3` by a chain of `d` clones with the same
/// variables, clone `k` holding the `k`-th neighbor in ascending id order.
///
/// The first clone keeps the original id and its factors; the other clones are
/// appended with zero potentials. Afterwards every node has at most three neighbors.
pub fn reduce_neighbors<'m>(tree: &CliqueTree<'m>) -> CliqueTree<'m> {
    let mut nodes: Vec<CliqueNode> = tree.nodes.clone();
    let mut adj: Vec<Vec<usize>> = tree.adj.clone();
    let original = nodes.len();

    for i in 0..original {
        let degree = adj[i].len();
        if degree <= 3 {
            continue;
        }
        let mut nbrs = std::mem::take(&mut adj[i]);
        nbrs.sort_unstable();
        let mut clones = vec![i];
        for _ in 1..degree {
            clones.push(nodes.len());
            nodes.push(CliqueNode {
                vars: nodes[i].vars.clone(),
                energy: Vec::new(),
                stats: Vec::new(),
            });
            adj.push(Vec::new());
        }
        for (&n, &c) in nbrs.iter().zip(&clones) {
            for slot in adj[n].iter_mut() {
                if *slot == i {
                    *slot = c;
                }
            }
            adj[c].push(n);
        }
        for w in clones.windows(2) {
            adj[w[0]].push(w[1]);
            adj[w[1]].push(w[0]);
        }
    }
    CliqueTree::from_raw(tree.model, nodes, adj, tree.root)
}

/// `2^{τ+2} - 4` for a tree of width `τ`.
pub fn reshape_degree_bound(width: usize) -> usize {
    (1usize << (width + 2)).saturating_sub(4)
}

/// Rearranges edges so that no node has more than two neighbors sharing the
/// same sepset.
///
/// Walking down from the root, surplus children with a repeated sepset are
/// detached and hung below a sibling with that sepset, forming a chain. With no
/// empty and no whole-clique sepsets this caps the degree at `2^{τ+2} - 4`.
/// A tree already within that cap is returned unchanged.
pub fn reshape_dedup_sepsets<'m>(tree: &CliqueTree<'m>) -> CliqueTree<'m> {
    if tree.max_degree() <= reshape_degree_bound(tree.width()) {
        return tree.clone();
    }
    let nodes = tree.nodes.clone();
    let mut adj = tree.adj.clone();
    let n = nodes.len();
    let mut parent: Vec<Option<usize>> = vec![None; n];
    let mut visited = vec![false; n];
    let mut queue = VecDeque::from([tree.root]);
    visited[tree.root] = true;

    while let Some(u) = queue.pop_front() {
        let parent_sep = parent[u].map(|p| intersect(&nodes[u].vars, &nodes[p].vars));
        let mut groups: BTreeMap<Vec<usize>, Vec<usize>> = BTreeMap::new();
        let mut children: Vec<usize> = adj[u]
            .iter()
            .copied()
            .filter(|&c| Some(c) != parent[u])
            .collect();
        children.sort_unstable();
        for &c in &children {
            groups
                .entry(intersect(&nodes[u].vars, &nodes[c].vars))
                .or_default()
                .push(c);
        }
        for (sep, group) in groups {
            let allowed = if parent_sep.as_ref() == Some(&sep) {
                1
            } else {
                2
            };
            if group.len() <= allowed {
                continue;
            }
            let mut anchor = group[allowed - 1];
            for &c in &group[allowed..] {
                adj[u].retain(|&x| x != c);
                adj[c].retain(|&x| x != u);
                adj[anchor].push(c);
                adj[c].push(anchor);
                anchor = c;
            }
        }
        let mut kids: Vec<usize> = adj[u]
            .iter()
            .copied()
            .filter(|&c| Some(c) != parent[u])
            .collect();
        kids.sort_unstable();
        for c in kids {
            if !visited[c] {
                visited[c] = true;
                parent[c] = Some(u);
                queue.push_back(c);
            }
        }
    }
    CliqueTree::from_raw(tree.model, nodes, adj, tree.root)
}
