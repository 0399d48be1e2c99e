use ndarray::{Array2, Zip};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use lnlm::eval::kmeans::kmeans;
use lnlm::eval::metrics::nmi;
use lnlm::features::build_loworder_features;
use lnlm::pipeline::{embed, EmbedConfig};
use lnlm::solver::{fit, gradients, init_factors, kkt_residual, update_z, Factors};
use lnlm::{FeatureMatrix, Graph, HyperParams, LowOrderParams};

fn connected_random_graph(n: usize, p: f64, rng: &mut ChaCha8Rng) -> Graph {
    let mut edges: Vec<(usize, usize, f64)> = (1..n).map(|v| (rng.gen_range(0..v), v, 1.0)).collect();
    for u in 0..n {
        for v in (u + 1)..n {
            if rng.gen::<f64>() < p {
                edges.push((u, v, 1.0));
            }
        }
    }
    Graph::from_edges(n, &edges).unwrap()
}

#[test]
fn two_disjoint_cliques_are_recovered() {
    let mut edges = Vec::new();
    for base in [0, 5] {
        for u in 0..5 {
            for v in (u + 1)..5 {
                edges.push((base + u, base + v, 1.0));
            }
        }
    }
    let g = Graph::from_edges(10, &edges).unwrap();
    let cfg = EmbedConfig {
        features: LowOrderParams { window: 2, neg_b: 1.0, dim: 4 },
        solver: HyperParams {
            alpha: 1.0,
            beta: 1.0,
            gamma: 1.0,
            m: 4,
            k: 2,
            delta: 1e-6,
            max_iter: 1000,
            seed: 0,
        },
    };
    let (_, model) = embed(&g, &cfg).unwrap();
    assert!(model.converged, "ran {} iterations", model.iterations_run);
    let truth: Vec<usize> = (0..10).map(|i| i / 5).collect();
    let res = kmeans(model.embedding().view(), 2, 10, 0).unwrap();
    assert_eq!(nmi(&res.assignments, &truth).unwrap(), 1.0);
}

#[test]
fn same_seed_gives_bit_identical_traces() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let g = connected_random_graph(25, 0.2, &mut rng);
    let mut cfg = EmbedConfig::default();
    cfg.solver.k = 6;
    cfg.solver.seed = 17;
    let (_, a) = embed(&g, &cfg).unwrap();
    let (_, b) = embed(&g, &cfg).unwrap();
    let bits = |m: &lnlm::EmbeddingModel| m.loss_trace.iter().map(|(i, l)| (*i, l.to_bits())).collect::<Vec<_>>();
    assert_eq!(bits(&a), bits(&b));
    assert_eq!(a.factors, b.factors);
}

#[test]
fn loss_never_increases_on_random_instances() {
    for seed in 0..100u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = [5, 10, 20][seed as usize % 3];
        let g = connected_random_graph(n, 0.3, &mut rng);
        let d = n.min(4);
        let b = build_loworder_features(&g, &LowOrderParams { window: 3, neg_b: 1.0, dim: d }, seed).unwrap();
        let h = HyperParams {
            m: n.min(6),
            k: n.min(3),
            max_iter: 200,
            seed,
            ..HyperParams::default()
        };
        let model = fit(&g, &b, &h).unwrap();
        assert!(model.factors.all_finite_non_negative());
        assert!(model.factors.z.iter().chain(model.factors.v.iter()).all(|&x| x >= -0.0));
        for w in model.loss_trace.windows(2) {
            assert!(w[1].1 <= w[0].1 + 1e-9, "seed {seed}: {} -> {}", w[0].1, w[1].1);
        }
    }
}

fn z_residual(g: &Graph, b: &FeatureMatrix, f: &Factors, h: &HyperParams) -> f64 {
    let grads = gradients(g, b.b.view(), f, h);
    Zip::from(&grads[0]).and(&f.z).fold(0.0_f64, |m, &gi, &zi| m.max((gi * zi).abs()))
}

#[test]
fn kkt_residual_examples() {
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let g = connected_random_graph(10, 0.3, &mut rng);
    let b = build_loworder_features(&g, &LowOrderParams { window: 3, neg_b: 1.0, dim: 4 }, 0).unwrap();
    let h = HyperParams { m: 5, k: 3, delta: 1e-12, max_iter: 20_000, ..HyperParams::default() };

    let zero = Factors::zeros(10, 5, 3, 4);
    assert_eq!(kkt_residual(&g, &b, &zero, &h).unwrap(), 0.0);

    let mut f = init_factors(10, 5, 3, 4, h.seed);
    let before = z_residual(&g, &b, &f, &h);
    f.z = update_z(&g, &f, h.alpha).unwrap();
    assert!(z_residual(&g, &b, &f, &h) <= before);

    let init = init_factors(10, 5, 3, 4, h.seed);
    let start = kkt_residual(&g, &b, &init, &h).unwrap();
    let model = fit(&g, &b, &h).unwrap();
    let end = kkt_residual(&g, &b, &model.factors, &h).unwrap();
    assert!(end < 1e-3 * start, "{end} vs {start}");
}

#[test]
fn fit_rejects_isolated_nodes_and_wrong_feature_rows() {
    let g = Graph::from_edges(3, &[(0, 1, 1.0)]).unwrap();
    let b = FeatureMatrix { b: Array2::zeros((3, 2)), singular_values: vec![0.0; 2] };
    let h = HyperParams { m: 2, k: 2, ..HyperParams::default() };
    assert!(matches!(fit(&g, &b, &h), Err(lnlm::Error::IsolatedNode(2))));
    let g = Graph::from_edges(3, &[(0, 1, 1.0), (1, 2, 1.0)]).unwrap();
    let short = FeatureMatrix { b: Array2::zeros((2, 2)), singular_values: vec![0.0; 2] };
    assert!(matches!(fit(&g, &short, &h), Err(lnlm::Error::Shape(_))));
}
