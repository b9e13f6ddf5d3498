use monovo_core::observability::{
    connectivity_probability, monte_carlo_connectivity, random_graph_edges, BipartiteResidualGraph,
};
use monovo_core::photometry::{ResponseLut, VignetteMap};
use monovo_core::synthetic::{gen_plane_observations, Pattern, PoseSampler, SyntheticScene};
use monovo_core::vignette::{collect_samples, residual_graph, GridLayout};
use proptest::prelude::*;

proptest! {
    #[test]
    fn components_ignore_edge_order(
        edges in prop::collection::vec((0u32..30, 0u32..25), 0..80),
        seed in any::<u64>(),
    ) {
        let a = BipartiteResidualGraph::with_edges(30, 25, edges.clone()).unwrap();
        let mut shuffled = edges;
        // Fisher-Yates driven by a simple LCG keeps the test dependency-free
        let mut s = seed | 1;
        for i in (1..shuffled.len()).rev() {
            s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            shuffled.swap(i, (s >> 33) as usize % (i + 1));
        }
        let b = BipartiteResidualGraph::with_edges(30, 25, shuffled).unwrap();
        prop_assert_eq!(a.component_labels(), b.component_labels());
        prop_assert_eq!(a.connectivity(), b.connectivity());
    }
}

#[test]
fn trivial_graphs() {
    assert_eq!(BipartiteResidualGraph::new(5, 5).connectivity().components, 10);
    let k33: Vec<_> = (0..3).flat_map(|a| (0..3).map(move |b| (a, b))).collect();
    assert!(BipartiteResidualGraph::with_edges(3, 3, k33)
        .unwrap()
        .connectivity()
        .is_connected());
}

#[test]
fn single_pose_vignette_graph_is_disconnected() {
    let scene = SyntheticScene::new(
        Pattern::Texture,
        (20.0, 60.0),
        ResponseLut::gamma(2.2).unwrap(),
        VignetteMap::cos4(40, 30, 30.0).unwrap(),
        0,
    )
    .unwrap();
    let sampler = PoseSampler {
        focal: 30.0,
        ..PoseSampler::default()
    };
    let obs = gen_plane_observations(&scene, 1, 0, &sampler).unwrap();
    let grid = GridLayout::unit(60).unwrap();
    let samples = collect_samples(&obs, &scene.response, &grid, 255).unwrap();
    let g = residual_graph(&samples, grid.cells(), 40 * 30).unwrap();
    assert!(g.active_connectivity().components > 1);
}

#[test]
fn monte_carlo_approaches_limit() {
    for n in [100, 1000] {
        for c in [0.0, 1.0, 2.0] {
            let p = monte_carlo_connectivity(n, c, 400, 42).unwrap();
            let tol = if n == 100 { 0.08 } else { 0.05 };
            assert!((p - connectivity_probability(c)).abs() < tol, "n {n} c {c}: {p}");
        }
    }
    assert!(monte_carlo_connectivity(100, 10.0, 200, 1).unwrap() >= 0.99);
    assert_eq!(random_graph_edges(1000, 0.0), (1000.0 * 1000f64.ln()).floor() as usize);
}
