mod common;

use common::*;
use gmap::cliquetree::{
    build_clique_tree, elimination_width, min_fill_order, reduce_neighbors, reshape_dedup_sepsets,
    reshape_degree_bound,
};
use gmap::model::{AccumulationSpec, EnergyFactor, Model};
use proptest::prelude::*;
use rand::Rng;

/// Random sparse graph: a spanning tree plus a few extra edges.
fn random_graph_model(seed: u64) -> Model {
    let mut r = rng(seed);
    let m = r.gen_range(1..=12);
    let cards: Vec<usize> = (0..m).map(|_| r.gen_range(1..=3)).collect();
    let mut energy: Vec<EnergyFactor> = (0..m)
        .map(|t| EnergyFactor::zeros(vec![t], &cards))
        .collect();
    for t in 1..m {
        let u = r.gen_range(0..t);
        energy.push(EnergyFactor::zeros(vec![u, t], &cards));
    }
    for _ in 0..r.gen_range(0..=m / 2) {
        let a = r.gen_range(0..m);
        let b = r.gen_range(0..m);
        if a != b {
            energy.push(EnergyFactor::zeros(vec![a.min(b), a.max(b)], &cards));
        }
    }
    Model::new(cards, energy, vec![], AccumulationSpec::default()).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn built_tree_is_a_valid_clique_tree(seed in any::<u64>()) {
        let model = random_graph_model(seed);
        let order = min_fill_order(&model);
        let mut sorted = order.clone();
        sorted.sort_unstable();
        prop_assert_eq!(sorted, (0..model.num_vars()).collect::<Vec<_>>());
        let tree = build_clique_tree(&model, &order).unwrap();
        tree.validate().unwrap();
        prop_assert_eq!(tree.width(), elimination_width(&model, &order).unwrap());
        for root in 0..tree.num_nodes() {
            let t = tree.with_root(root).unwrap();
            let rooted = t.rooted();
            prop_assert_eq!(rooted.root, root);
            prop_assert_eq!(*rooted.postorder.last().unwrap(), root);
            prop_assert_eq!(rooted.postorder.len(), t.num_nodes());
        }
    }

    #[test]
    fn reduce_caps_degree_at_three(seed in any::<u64>()) {
        let model = random_graph_model(seed);
        let tree = build_clique_tree(&model, &min_fill_order(&model)).unwrap();
        let reduced = reduce_neighbors(&tree);
        reduced.validate().unwrap();
        prop_assert!(reduced.max_degree() <= 3);
        prop_assert_eq!(reduced.width(), tree.width());
        if tree.max_degree() <= 3 {
            prop_assert_eq!(reduced.num_nodes(), tree.num_nodes());
        }
    }

    #[test]
    fn reshape_respects_the_degree_bound_on_stars(m in 2usize..14, hub_root in any::<bool>()) {
        let cards = vec![2; m];
        let energy = (1..m).map(|t| EnergyFactor::zeros(vec![0, t], &cards)).collect();
        let model = Model::new(cards, energy, vec![], AccumulationSpec::default()).unwrap();
        let mut tree = build_clique_tree(&model, &min_fill_order(&model)).unwrap();
        if hub_root {
            let hub = (0..tree.num_nodes()).max_by_key(|&i| tree.neighbors(i).len()).unwrap();
            tree = tree.with_root(hub).unwrap();
        }
        let shaped = reshape_dedup_sepsets(&tree);
        shaped.validate().unwrap();
        prop_assert!(shaped.max_degree() <= reshape_degree_bound(tree.width()));
        prop_assert_eq!(shaped.num_nodes(), tree.num_nodes());
    }

    #[test]
    fn reshape_keeps_a_valid_tree(seed in any::<u64>()) {
        let model = random_graph_model(seed);
        let tree = build_clique_tree(&model, &min_fill_order(&model)).unwrap();
        let shaped = reshape_dedup_sepsets(&tree);
        shaped.validate().unwrap();
        reduce_neighbors(&shaped).validate().unwrap();
    }
}
