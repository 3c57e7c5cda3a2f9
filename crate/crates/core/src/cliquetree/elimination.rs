use std::collections::BTreeSet;

use super::{is_subset, CliqueNode, CliqueTree};
use crate::error::{Error, Result};
use crate::model::Model;

/// Undirected interaction graph: variables sharing an energy or statistic scope are adjacent.
pub fn interaction_graph(model: &Model) -> Vec<BTreeSet<usize>> {
    let mut adj = vec![BTreeSet::new(); model.num_vars()];
    let scopes = model
        .energy_factors()
        .iter()
        .map(|f| &f.scope)
        .chain(model.statistic_factors().iter().map(|g| &g.scope));
    for scope in scopes {
        for (k, &a) in scope.iter().enumerate() {
            for &b in &scope[k + 1..] {
                adj[a].insert(b);
                adj[b].insert(a);
            }
        }
    }
    adj
}

fn fill_in(adj: &[BTreeSet<usize>], v: usize) -> usize {
    let nb: Vec<usize> = adj[v].iter().copied().collect();
    let mut missing = 0;
    for (k, &a) in nb.iter().enumerate() {
        missing += nb[k + 1..].iter().filter(|b| !adj[a].contains(b)).count();
    }
    missing
}

/// Greedy min-fill elimination order; ties go to the smallest id.
pub fn min_fill_order(model: &Model) -> Vec<usize> {
    let mut adj = interaction_graph(model);
    let m = adj.len();
    let mut fill: Vec<usize> = (0..m).map(|v| fill_in(&adj, v)).collect();
    let mut queue: BTreeSet<(usize, usize)> = (0..m).map(|v| (fill[v], v)).collect();
    let mut order = Vec::with_capacity(m);

    while let Some((_, v)) = queue.pop_first() {
        order.push(v);
        let nb: Vec<usize> = std::mem::take(&mut adj[v]).into_iter().collect();
        for &u in &nb {
            adj[u].remove(&v);
        }
        for (k, &a) in nb.iter().enumerate() {
            for &b in &nb[k + 1..] {
                adj[a].insert(b);
                adj[b].insert(a);
            }
        }
        // Fill counts can only change within distance two of v.
        let mut affected: BTreeSet<usize> = nb.iter().copied().collect();
        for &u in &nb {
            affected.extend(adj[u].iter().copied());
        }
        for u in affected {
            queue.remove(&(fill[u], u));
            fill[u] = fill_in(&adj, u);
            queue.insert((fill[u], u));
        }
    }
    order
}

fn check_permutation(order: &[usize], m: usize) -> Result<()> {
    let mut seen = vec![false; m];
    if order.len() != m {
        return Err(Error::Value(format!(
            "elimination order has {} entries for {m} variables",
            order.len()
        )));
    }
    for &v in order {
        if v >= m || seen[v] {
            return Err(Error::Value(format!(
                "elimination order is not a permutation (at {v})"
            )));
        }
        seen[v] = true;
    }
    Ok(())
}

/// Elimination cliques in order, with the index of each clique's parent step.
fn eliminate(model: &Model, order: &[usize]) -> (Vec<Vec<usize>>, Vec<Option<usize>>) {
    let m = model.num_vars();
    let mut pos = vec![0; m];
    for (i, &v) in order.iter().enumerate() {
        pos[v] = i;
    }
    let mut adj = interaction_graph(model);
    let mut cliques = Vec::with_capacity(m);
    let mut parents = Vec::with_capacity(m);
    for &v in order {
        let nb: Vec<usize> = std::mem::take(&mut adj[v]).into_iter().collect();
        for &u in &nb {
            adj[u].remove(&v);
        }
        for (k, &a) in nb.iter().enumerate() {
            for &b in &nb[k + 1..] {
                adj[a].insert(b);
                adj[b].insert(a);
            }
        }
        parents.push(nb.iter().map(|&u| pos[u]).min());
        let mut clique = nb;
        clique.push(v);
        clique.sort_unstable();
        cliques.push(clique);
    }
    (cliques, parents)
}

/// Width induced by eliminating in `order`: largest elimination clique minus one.
pub fn elimination_width(model: &Model, order: &[usize]) -> Result<usize> {
    check_permutation(order, model.num_vars())?;
    let (cliques, _) = eliminate(model, order);
    Ok(cliques.iter().map(Vec::len).max().unwrap_or(1) - 1)
}

/// Clique tree from variable elimination.
///
/// Non-maximal elimination cliques are contracted into a neighboring superset;
/// disconnected components are chained together through empty sepsets. Nodes
/// are numbered by elimination step and the root is node 0.
pub fn build_clique_tree<'m>(model: &'m Model, order: &[usize]) -> Result<CliqueTree<'m>> {
    check_permutation(order, model.num_vars())?;
    let (cliques, parents) = eliminate(model, order);
    let k = cliques.len();
    let mut adj: Vec<BTreeSet<usize>> = vec![BTreeSet::new(); k];
    for (i, p) in parents.iter().enumerate() {
        if let Some(p) = *p {
            adj[i].insert(p);
            adj[p].insert(i);
        }
    }

    let mut alive = vec![true; k];
    loop {
        let mut merged = false;
        for a in 0..k {
            if !alive[a] {
                continue;
            }
            let target = adj[a]
                .iter()
                .copied()
                .find(|&b| is_subset(&cliques[a], &cliques[b]));
            if let Some(b) = target {
                let others: Vec<usize> = std::mem::take(&mut adj[a]).into_iter().collect();
                for c in others {
                    adj[c].remove(&a);
                    if c != b {
                        adj[c].insert(b);
                        adj[b].insert(c);
                    }
                }
                alive[a] = false;
                merged = true;
            }
        }
        if !merged {
            break;
        }
    }

    // Bridge components: lowest surviving step of each component to the previous one.
    let mut comp_seen = vec![false; k];
    let mut reps = Vec::new();
    for s in 0..k {
        if !alive[s] || comp_seen[s] {
            continue;
        }
        reps.push(s);
        let mut stack = vec![s];
        comp_seen[s] = true;
        while let Some(u) = stack.pop() {
            for &w in &adj[u] {
                if !comp_seen[w] {
                    comp_seen[w] = true;
                    stack.push(w);
                }
            }
        }
    }
    for w in reps.windows(2) {
        adj[w[0]].insert(w[1]);
        adj[w[1]].insert(w[0]);
    }

    let mut new_id = vec![usize::MAX; k];
    let mut nodes = Vec::new();
    for s in 0..k {
        if alive[s] {
            new_id[s] = nodes.len();
            nodes.push(cliques[s].clone());
        }
    }
    let mut edges = Vec::new();
    for s in 0..k {
        if !alive[s] {
            continue;
        }
        for &t in &adj[s] {
            if s < t {
                edges.push((new_id[s], new_id[t]));
            }
        }
    }
    CliqueTree::from_cliques(model, nodes, &edges, 0)
}

impl CliqueNode {
    pub fn is_zero_potential(&self) -> bool {
        self.energy.is_empty() && self.stats.is_empty()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{AccumulationSpec, EnergyFactor};

    fn pairwise(m: usize, edges: &[(usize, usize)]) -> Model {
        let cards = vec![2; m];
        let energy = edges
            .iter()
            .map(|&(a, b)| EnergyFactor::zeros(vec![a, b], &cards))
            .collect();
        Model::new(cards, energy, vec![], AccumulationSpec::default()).unwrap()
    }

    fn permutations(items: &[usize]) -> Vec<Vec<usize>> {
        if items.len() <= 1 {
            return vec![items.to_vec()];
        }
        let mut out = Vec::new();
        for i in 0..items.len() {
            let mut rest = items.to_vec();
            let x = rest.remove(i);
            for mut p in permutations(&rest) {
                p.insert(0, x);
                out.push(p);
            }
        }
        out
    }

    #[test]
    fn chain_order_has_width_one() {
        let m = pairwise(3, &[(0, 1), (1, 2)]);
        let min_over_all = permutations(&[0, 1, 2])
            .iter()
            .map(|o| elimination_width(&m, o).unwrap())
            .min()
            .unwrap();
        assert_eq!(min_over_all, 1);
        let order = min_fill_order(&m);
        assert_eq!(order, vec![0, 1, 2]);
        assert_eq!(elimination_width(&m, &order).unwrap(), 1);
    }

    #[test]
    fn single_variable_order() {
        let m = Model::new(vec![3], vec![], vec![], AccumulationSpec::default()).unwrap();
        assert_eq!(min_fill_order(&m), vec![0]);
        let t = build_clique_tree(&m, &[0]).unwrap();
        assert_eq!(t.num_nodes(), 1);
        assert_eq!(t.width(), 0);
    }

    #[test]
    fn four_cycle_needs_one_fill_edge() {
        let m = pairwise(4, &[(0, 1), (1, 2), (2, 3), (3, 0)]);
        let best = permutations(&[0, 1, 2, 3])
            .iter()
            .map(|o| elimination_width(&m, o).unwrap())
            .min()
            .unwrap();
        assert_eq!(best, 2);
        let order = min_fill_order(&m);
        assert_eq!(elimination_width(&m, &order).unwrap(), 2);
        let t = build_clique_tree(&m, &order).unwrap();
        assert_eq!(t.num_nodes(), 2);
        assert!(t.has_running_intersection());
    }

    #[test]
    fn chain_clique_tree() {
        let m = pairwise(3, &[(0, 1), (1, 2)]);
        let t = build_clique_tree(&m, &min_fill_order(&m)).unwrap();
        assert_eq!(t.num_nodes(), 2);
        assert_eq!(t.node(0).vars, vec![0, 1]);
        assert_eq!(t.node(1).vars, vec![1, 2]);
        assert_eq!(t.sepset(0, 1), vec![1]);
        assert_eq!((t.width(), t.max_degree(), t.root()), (1, 1, 0));

        let t2 = build_clique_tree(&m, &[0, 2, 1]).unwrap();
        assert_eq!(t2.num_nodes(), 2);
        assert_eq!(t2.width(), 1);
    }

    #[test]
    fn single_triple_factor_is_one_clique() {
        let cards = vec![2; 3];
        let m = Model::new(
            cards.clone(),
            vec![EnergyFactor::zeros(vec![0, 1, 2], &cards)],
            vec![],
            AccumulationSpec::default(),
        )
        .unwrap();
        let t = build_clique_tree(&m, &min_fill_order(&m)).unwrap();
        assert_eq!(t.num_nodes(), 1);
        assert_eq!(t.width(), 2);
        assert_eq!(t.max_degree(), 0);
    }

    #[test]
    fn star_mrf_builds_six_pair_cliques() {
        // Center 0 with six leaves.
        let edges: Vec<(usize, usize)> = (1..7).map(|l| (0, l)).collect();
        let m = pairwise(7, &edges);
        let t = build_clique_tree(&m, &min_fill_order(&m)).unwrap();
        assert_eq!(t.num_nodes(), 6);
        assert!(t.nodes().iter().all(|n| n.vars.len() == 2));
        assert_eq!(t.width(), 1);
        assert!(t.has_running_intersection());
        t.check_family_preserving().unwrap();
    }

    #[test]
    fn disconnected_components_are_bridged() {
        let m = pairwise(4, &[(0, 1), (2, 3)]);
        let t = build_clique_tree(&m, &min_fill_order(&m)).unwrap();
        assert_eq!(t.num_nodes(), 2);
        assert_eq!(t.edges().len(), 1);
        assert!(t.sepset(0, 1).is_empty());
        assert!(t.has_running_intersection());
    }

    #[test]
    fn rejects_bad_order() {
        let m = pairwise(3, &[(0, 1), (1, 2)]);
        assert!(build_clique_tree(&m, &[0, 0, 1]).is_err());
        assert!(build_clique_tree(&m, &[0, 1]).is_err());
    }
}
