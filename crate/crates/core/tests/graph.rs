use epinet::graph::{
    lambda_max, load_edge_list, remove_links_exhaustive, remove_links_greedy, remove_nodes_exact,
    remove_nodes_greedy, save_edge_list, Edge, Graph, GraphKind, NodeScore,
};
use nalgebra::DMatrix;
use proptest::prelude::*;

fn radius(g: &Graph) -> f64 {
    lambda_max(&g.adjacency()).unwrap().lambda_max
}

/// Spectral radius from the full dense spectrum.
fn dense_radius(m: &DMatrix<f64>) -> f64 {
    m.complex_eigenvalues()
        .iter()
        .map(|z| z.norm())
        .fold(0.0, f64::max)
}

#[test]
fn closed_form_spectra() {
    for n in 4..=10 {
        let k = Graph::generate(&GraphKind::Complete, n).unwrap();
        assert!((radius(&k) - (n - 1) as f64).abs() < 1e-10);
        let s = Graph::generate(&GraphKind::Star, n).unwrap();
        assert!((radius(&s) - ((n - 1) as f64).sqrt()).abs() < 1e-10);
        // path P_n: 2 cos(π / (n + 1))
        let p = Graph::generate(&GraphKind::Path, n).unwrap();
        let exact = 2.0 * (std::f64::consts::PI / (n + 1) as f64).cos();
        assert!((radius(&p) - exact).abs() < 1e-9);
    }
    // grid = product of paths: λ = 2cos(π/3) + 2cos(π/4)
    let g = Graph::generate(&GraphKind::Grid { rows: 2, cols: 3 }, 6).unwrap();
    let exact = 2.0 * (std::f64::consts::PI / 3.0).cos() + 2.0 * (std::f64::consts::PI / 4.0).cos();
    assert!((radius(&g) - exact).abs() < 1e-9);
}

#[test]
fn perron_vectors_are_eigenvectors() {
    let g = Graph::generate(&GraphKind::DirectedErdosRenyi { p: 0.4, seed: 17 }, 9).unwrap();
    let a = g.adjacency();
    let r = lambda_max(&a).unwrap();
    assert!((r.lambda_max - dense_radius(&a)).abs() < 1e-8);
    let v = nalgebra::DVector::from_vec(r.right_vector.clone());
    let w = nalgebra::DVector::from_vec(r.left_vector.clone());
    assert!((&a * &v - &v * r.lambda_max).amax() < 1e-8);
    assert!((a.transpose() * &w - &w * r.lambda_max).amax() < 1e-8);
    assert!((v.sum() - 1.0).abs() < 1e-12 && v.iter().all(|&x| x >= 0.0));
}

#[test]
fn removal_is_monotone_and_greedy_never_beats_exact() {
    for seed in 0..25 {
        let n = 5 + seed as usize % 5;
        let g = Graph::generate(&GraphKind::ErdosRenyi { p: 0.5, seed }, n).unwrap();
        if g.edge_count() == 0 {
            continue;
        }
        let base = radius(&g);
        for k in 1..=2 {
            let exact = remove_nodes_exact(&g, k).unwrap();
            let greedy = remove_nodes_greedy(&g, k, NodeScore::PerronProduct).unwrap();
            let degree = remove_nodes_greedy(&g, k, NodeScore::Degree).unwrap();
            assert!(exact.lambda_after <= base + 1e-10);
            assert!(exact.lambda_after <= greedy.lambda_after + 1e-10);
            assert!(exact.lambda_after <= degree.lambda_after + 1e-10);
            assert!((radius(&g.without_nodes(&exact.removed)) - exact.lambda_after).abs() < 1e-9);
        }
        let links = remove_links_greedy(&g, 1).unwrap();
        assert!(links.lambda_after <= base + 1e-10);
        if g.edge_count() <= 24 {
            let best = remove_links_exhaustive(&g, 2).unwrap();
            assert!(best.lambda_after <= remove_links_greedy(&g, 2).unwrap().lambda_after + 1e-10);
        }
    }
}

#[test]
fn edge_list_accepts_comments_and_defaults() {
    let g = load_edge_list("# triangle\n0 1\n1 2 2.5 # heavy\n\n2 0\n").unwrap();
    assert_eq!(g.node_count(), 3);
    assert!(g.is_directed());
    assert_eq!(g.edges()[1], Edge::new(1, 2, 2.5));
    assert!(load_edge_list("n 2 undirected\n0 1\n").is_err());
    assert!(load_edge_list("0 0\n").is_err());
    assert!(load_edge_list("0 x\n").is_err());
}

proptest! {
    #[test]
    fn edge_lists_round_trip(n in 2usize..9, p in 0.0f64..1.0, seed in 0u64..1000, directed: bool) {
        let kind = if directed {
            GraphKind::DirectedErdosRenyi { p, seed }
        } else {
            GraphKind::ErdosRenyi { p, seed }
        };
        let g = Graph::generate(&kind, n).unwrap();
        let back = load_edge_list(&save_edge_list(&g)).unwrap();
        prop_assert_eq!(&back, &g);
        let json = serde_json::to_string(&g).unwrap();
        prop_assert_eq!(serde_json::from_str::<Graph>(&json).unwrap(), g);
    }

    #[test]
    fn deleting_anything_never_raises_lambda(n in 3usize..9, seed in 0u64..500, pick in 0usize..64) {
        let g = Graph::generate(&GraphKind::DirectedErdosRenyi { p: 0.5, seed }, n).unwrap();
        let base = radius(&g);
        prop_assert!(radius(&g.without_nodes(&[pick % n])) <= base + 1e-9);
        if g.edge_count() > 0 {
            let e = g.edges()[pick % g.edge_count()];
            prop_assert!(radius(&g.without_edges(&[(e.source, e.target)])) <= base + 1e-9);
        }
    }
}
