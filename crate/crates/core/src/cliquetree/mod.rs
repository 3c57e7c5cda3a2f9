//! Clique trees over a [`Model`]: construction from an elimination order,
//! structural checks, and the two degree-controlling transforms.

mod elimination;
mod transform;

use std::collections::VecDeque;
use std::fmt;

use crate::error::{Error, Result};
use crate::model::Model;

pub use elimination::{build_clique_tree, elimination_width, interaction_graph, min_fill_order};
pub use transform::{reduce_neighbors, reshape_dedup_sepsets, reshape_degree_bound};

/// One cluster of the tree. `energy` and `stats` index into the model's factor
/// lists; an empty list means the zero potential.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CliqueNode {
    pub vars: Vec<usize>,
    pub energy: Vec<usize>,
    pub stats: Vec<usize>,
}

#[derive(Clone, Debug)]
pub struct CliqueTree<'m> {
    model: &'m Model,
    nodes: Vec<CliqueNode>,
    adj: Vec<Vec<usize>>,
    root: usize,
}

/// Parent/children view of a tree hanging from its root.
#[derive(Clone, Debug)]
pub struct Rooted {
    pub root: usize,
    pub parent: Vec<Option<usize>>,
    pub children: Vec<Vec<usize>>,
    /// Every node after all of its children; the root comes last.
    pub postorder: Vec<usize>,
}

impl<'m> CliqueTree<'m> {
    /// Builds a tree from explicit cliques and edges, assigning every model
    /// factor to the lowest-id clique containing its scope.
    ///
    /// The running intersection property is *not* enforced here; see
    /// [`CliqueTree::running_intersection_violation`].
    pub fn from_cliques(
        model: &'m Model,
        cliques: Vec<Vec<usize>>,
        edges: &[(usize, usize)],
        root: usize,
    ) -> Result<Self> {
        let mut nodes: Vec<CliqueNode> = cliques
            .into_iter()
            .map(|mut vars| {
                vars.sort_unstable();
                vars.dedup();
                CliqueNode {
                    vars,
                    energy: Vec::new(),
                    stats: Vec::new(),
                }
            })
            .collect();
        for (t, f) in model.energy_factors().iter().enumerate() {
            let i = containing_node(&nodes, &f.scope).ok_or_else(|| {
                Error::InvalidTree(format!("no clique contains energy factor {t}"))
            })?;
            nodes[i].energy.push(t);
        }
        for (t, g) in model.statistic_factors().iter().enumerate() {
            let i = containing_node(&nodes, &g.scope).ok_or_else(|| {
                Error::InvalidTree(format!("no clique contains statistic factor {t}"))
            })?;
            nodes[i].stats.push(t);
        }
        Self::from_parts(model, nodes, edges, root)
    }

    /// Builds a tree with a caller-supplied factor assignment.
    pub fn from_parts(
        model: &'m Model,
        nodes: Vec<CliqueNode>,
        edges: &[(usize, usize)],
        root: usize,
    ) -> Result<Self> {
        let n = nodes.len();
        if n == 0 {
            return Err(Error::InvalidTree("tree has no nodes".into()));
        }
        for (i, node) in nodes.iter().enumerate() {
            if let Some(&v) = node.vars.iter().find(|&&v| v >= model.num_vars()) {
                return Err(Error::InvalidTree(format!(
                    "node {i} references variable {v}"
                )));
            }
            if node.vars.windows(2).any(|w| w[0] >= w[1]) {
                return Err(Error::InvalidTree(format!(
                    "node {i} variables are not sorted and unique"
                )));
            }
        }
        let mut adj = vec![Vec::new(); n];
        for &(a, b) in edges {
            if a >= n || b >= n || a == b {
                return Err(Error::InvalidTree(format!("bad edge ({a}, {b})")));
            }
            if adj[a].contains(&b) {
                return Err(Error::InvalidTree(format!("duplicate edge ({a}, {b})")));
            }
            adj[a].push(b);
            adj[b].push(a);
        }
        for list in &mut adj {
            list.sort_unstable();
        }
        if edges.len() != n - 1 {
            return Err(Error::InvalidTree(format!(
                "{n} nodes need {} edges, got {}",
                n - 1,
                edges.len()
            )));
        }
        if root >= n {
            return Err(Error::InvalidTree(format!("root {root} out of range")));
        }
        let tree = CliqueTree {
            model,
            nodes,
            adj,
            root,
        };
        if tree.bfs_order(0).len() != n {
            return Err(Error::InvalidTree("tree is not connected".into()));
        }
        tree.check_family_preserving()?;
        Ok(tree)
    }

    pub(crate) fn from_raw(
        model: &'m Model,
        nodes: Vec<CliqueNode>,
        mut adj: Vec<Vec<usize>>,
        root: usize,
    ) -> Self {
        for list in &mut adj {
            list.sort_unstable();
        }
        CliqueTree {
            model,
            nodes,
            adj,
            root,
        }
    }

    pub fn model(&self) -> &'m Model {
        self.model
    }

    pub fn nodes(&self) -> &[CliqueNode] {
        &self.nodes
    }

    pub fn node(&self, i: usize) -> &CliqueNode {
        &self.nodes[i]
    }

    pub fn num_nodes(&self) -> usize {
        self.nodes.len()
    }

    /// Neighbors in ascending id order.
    pub fn neighbors(&self, i: usize) -> &[usize] {
        &self.adj[i]
    }

    pub fn root(&self) -> usize {
        self.root
    }

    pub fn with_root(&self, root: usize) -> Result<Self> {
        if root >= self.nodes.len() {
            return Err(Error::InvalidTree(format!("root {root} out of range")));
        }
        let mut t = self.clone();
        t.root = root;
        Ok(t)
    }

    /// Edges as `(a, b)` with `a < b`, sorted.
    pub fn edges(&self) -> Vec<(usize, usize)> {
        let mut out = Vec::new();
        for (a, list) in self.adj.iter().enumerate() {
            out.extend(list.iter().filter(|&&b| a < b).map(|&b| (a, b)));
        }
        out
    }

    pub fn sepset(&self, i: usize, j: usize) -> Vec<usize> {
        intersect(&self.nodes[i].vars, &self.nodes[j].vars)
    }

    /// `max |C_i| - 1`.
    pub fn width(&self) -> usize {
        self.nodes
            .iter()
            .map(|n| n.vars.len())
            .max()
            .unwrap_or(1)
            .saturating_sub(1)
    }

    /// Largest node degree, `ν`.
    pub fn max_degree(&self) -> usize {
        self.adj.iter().map(Vec::len).max().unwrap_or(0)
    }

    pub fn rooted(&self) -> Rooted {
        let n = self.nodes.len();
        let mut parent = vec![None; n];
        let mut children = vec![Vec::new(); n];
        let order = self.bfs_order(self.root);
        let mut seen = vec![false; n];
        seen[self.root] = true;
        for &u in &order {
            for &v in &self.adj[u] {
                if !seen[v] {
                    seen[v] = true;
                    parent[v] = Some(u);
                    children[u].push(v);
                }
            }
        }
        let postorder = order.into_iter().rev().collect();
        Rooted {
            root: self.root,
            parent,
            children,
            postorder,
        }
    }

    fn bfs_order(&self, start: usize) -> Vec<usize> {
        let mut seen = vec![false; self.nodes.len()];
        let mut order = Vec::with_capacity(self.nodes.len());
        let mut queue = VecDeque::from([start]);
        seen[start] = true;
        while let Some(u) = queue.pop_front() {
            order.push(u);
            for &v in &self.adj[u] {
                if !seen[v] {
                    seen[v] = true;
                    queue.push_back(v);
                }
            }
        }
        order
    }

    /// Nodes on `from`'s side of the edge `from - to`, `from` first.
    pub fn side_of(&self, from: usize, to: usize) -> Vec<usize> {
        let mut seen = vec![false; self.nodes.len()];
        seen[to] = true;
        seen[from] = true;
        let mut out = vec![from];
        let mut k = 0;
        while k < out.len() {
            let u = out[k];
            k += 1;
            for &v in &self.adj[u] {
                if !seen[v] {
                    seen[v] = true;
                    out.push(v);
                }
            }
        }
        out
    }

    /// The smallest variable whose containing nodes do not form a connected subtree.
    pub fn running_intersection_violation(&self) -> Option<usize> {
        let m = self.model.num_vars();
        let mut holders: Vec<Vec<usize>> = vec![Vec::new(); m];
        for (i, node) in self.nodes.iter().enumerate() {
            for &v in &node.vars {
                holders[v].push(i);
            }
        }
        let mut mark = vec![false; self.nodes.len()];
        let mut seen = vec![false; self.nodes.len()];
        for (v, hs) in holders.iter().enumerate() {
            if hs.len() <= 1 {
                continue;
            }
            for &h in hs {
                mark[h] = true;
            }
            let mut stack = vec![hs[0]];
            seen[hs[0]] = true;
            let mut reached = 0;
            while let Some(u) = stack.pop() {
                reached += 1;
                for &w in &self.adj[u] {
                    if mark[w] && !seen[w] {
                        seen[w] = true;
                        stack.push(w);
                    }
                }
            }
            for &h in hs {
                mark[h] = false;
                seen[h] = false;
            }
            if reached != hs.len() {
                return Some(v);
            }
        }
        None
    }

    pub fn has_running_intersection(&self) -> bool {
        self.running_intersection_violation().is_none()
    }

    /// Every model factor sits on exactly one node whose clique holds its scope.
    pub fn check_family_preserving(&self) -> Result<()> {
        let mut energy_seen = vec![0usize; self.model.energy_factors().len()];
        let mut stats_seen = vec![0usize; self.model.statistic_factors().len()];
        for (i, node) in self.nodes.iter().enumerate() {
            for &t in &node.energy {
                let f = self.model.energy_factors().get(t).ok_or_else(|| {
                    Error::InvalidTree(format!("node {i} holds unknown energy factor {t}"))
                })?;
                if !is_subset(&f.scope, &node.vars) {
                    return Err(Error::InvalidTree(format!(
                        "energy factor {t} scope not contained in node {i}"
                    )));
                }
                energy_seen[t] += 1;
            }
            for &t in &node.stats {
                let g = self.model.statistic_factors().get(t).ok_or_else(|| {
                    Error::InvalidTree(format!("node {i} holds unknown statistic factor {t}"))
                })?;
                if !is_subset(&g.scope, &node.vars) {
                    return Err(Error::InvalidTree(format!(
                        "statistic factor {t} scope not contained in node {i}"
                    )));
                }
                stats_seen[t] += 1;
            }
        }
        if let Some(t) = energy_seen.iter().position(|&c| c != 1) {
            return Err(Error::InvalidTree(format!(
                "energy factor {t} assigned {} times",
                energy_seen[t]
            )));
        }
        if let Some(t) = stats_seen.iter().position(|&c| c != 1) {
            return Err(Error::InvalidTree(format!(
                "statistic factor {t} assigned {} times",
                stats_seen[t]
            )));
        }
        Ok(())
    }

    /// Full structural validation used before inference.
    pub fn validate(&self) -> Result<()> {
        self.check_family_preserving()?;
        if let Some(v) = self.running_intersection_violation() {
            return Err(Error::InvalidTree(format!(
                "running intersection property fails for variable {v}"
            )));
        }
        Ok(())
    }
}

impl fmt::Display for CliqueTree<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "cliques {}", self.nodes.len())?;
        for (i, node) in self.nodes.iter().enumerate() {
            writeln!(
                f,
                "  {i}: {} energy={:?} stats={:?}",
                fmt_set(&node.vars),
                node.energy,
                node.stats
            )?;
        }
        let edges = self.edges();
        writeln!(f, "edges {}", edges.len())?;
        for (a, b) in edges {
            writeln!(f, "  {a}-{b} sepset {}", fmt_set(&self.sepset(a, b)))?;
        }
        writeln!(f, "root {}", self.root)?;
        writeln!(f, "width {}", self.width())?;
        write!(f, "nu {}", self.max_degree())
    }
}

pub(crate) fn fmt_set(vars: &[usize]) -> String {
    let inner: Vec<String> = vars.iter().map(|v| v.to_string()).collect();
    format!("{{{}}}", inner.join(","))
}

fn containing_node(nodes: &[CliqueNode], scope: &[usize]) -> Option<usize> {
    nodes.iter().position(|n| is_subset(scope, &n.vars))
}

/// `a ⊆ b` where `b` is sorted.
pub(crate) fn is_subset(a: &[usize], b: &[usize]) -> bool {
    a.iter().all(|v| b.binary_search(v).is_ok())
}

/// Intersection of two sorted lists.
pub(crate) fn intersect(a: &[usize], b: &[usize]) -> Vec<usize> {
    let (mut i, mut j) = (0, 0);
    let mut out = Vec::new();
    while i < a.len() && j < b.len() {
        match a[i].cmp(&b[j]) {
            std::cmp::Ordering::Less => i += 1,
            std::cmp::Ordering::Greater => j += 1,
            std::cmp::Ordering::Equal => {
                out.push(a[i]);
                i += 1;
                j += 1;
            }
        }
    }
    out
}
