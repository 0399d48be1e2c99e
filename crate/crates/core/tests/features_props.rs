use nalgebra::DMatrix;
use ndarray::{Array2, ArrayView2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use lnlm::benchgen::{sbm_graph, toy_graphs, SbmSpec};
use lnlm::features::{build_loworder_features, netmf_matrix, top_singular, truncated_svd, SvdOptions};
use lnlm::LowOrderParams;

fn dense(a: ArrayView2<f64>) -> DMatrix<f64> {
    DMatrix::from_fn(a.nrows(), a.ncols(), |i, j| a[[i, j]])
}

fn exact_singular_values(a: ArrayView2<f64>) -> Vec<f64> {
    let mut s: Vec<f64> = dense(a).singular_values().iter().copied().collect();
    s.sort_by(|x, y| y.total_cmp(x));
    s
}

fn random_orthogonal(n: usize, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
    DMatrix::from_fn(n, n, |_, _| rng.gen_range(-1.0..1.0)).qr().q()
}

#[test]
fn path_with_window_two_is_all_zero() {
    // P + P^2 averages to rows (1/4, 1/2, 1/4); dividing by degrees (1, 2, 1)
    // and scaling by vol = 4 gives exactly 1 everywhere, which clamps to 0.
    let g = toy_graphs().remove("path3").unwrap();
    let m = netmf_matrix(&g, &LowOrderParams { window: 2, neg_b: 1.0, dim: 2 }).unwrap();
    assert!(m.iter().all(|&x| x.abs() < 1e-12), "{m}");
}

#[test]
fn k3_singular_values_match_dense_svd() {
    let g = toy_graphs().remove("k3").unwrap();
    let m = netmf_matrix(&g, &LowOrderParams { window: 1, neg_b: 1.0, dim: 2 }).unwrap();
    let feats = truncated_svd(m.view(), 2, 0).unwrap();
    let exact = exact_singular_values(m.view());
    for (a, b) in feats.singular_values.iter().zip(&exact) {
        assert!((a - b).abs() < 1e-8);
    }
    let l = 1.5_f64.ln();
    assert!((feats.singular_values[0] - 2.0 * l).abs() < 1e-12);
    assert!((feats.singular_values[1] - l).abs() < 1e-12);
}

#[test]
fn k3_leading_feature_column_is_symmetric() {
    let g = toy_graphs().remove("k3").unwrap();
    let feats = build_loworder_features(&g, &LowOrderParams { window: 1, neg_b: 1.0, dim: 2 }, 4).unwrap();
    let col = feats.b.column(0);
    for i in 1..3 {
        assert!((col[i] - col[0]).abs() < 1e-12);
    }
    assert!((col[0].abs() - (2.0 * 1.5_f64.ln() / 3.0).sqrt()).abs() < 1e-12);
}

#[test]
fn sbm_feature_rows_separate_blocks() {
    let (g, labels) = sbm_graph(&SbmSpec { block_sizes: vec![30, 30], p_in: 0.5, p_out: 0.02, seed: 6 }).unwrap();
    let blocks = labels.single_labels().unwrap();
    let feats = build_loworder_features(&g, &LowOrderParams { window: 5, neg_b: 1.0, dim: 2 }, 0).unwrap();
    let b = &feats.b;
    let dist = |i: usize, j: usize| {
        let d = &b.row(i) - &b.row(j);
        d.dot(&d).sqrt()
    };
    // Anchor i: each within-block partner against each between-block node.
    let (mut good, mut total) = (0usize, 0usize);
    for i in 0..g.n() {
        for j in (0..g.n()).filter(|&j| j != i && blocks[j] == blocks[i]) {
            for k in (0..g.n()).filter(|&k| blocks[k] != blocks[i]) {
                total += 1;
                good += usize::from(dist(i, j) < dist(i, k));
            }
        }
    }
    let share = good as f64 / total as f64;
    assert!(share >= 0.95, "{share}");
}

#[test]
fn randomized_svd_error_within_five_percent_of_optimal() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let n = 150;
    let d = 10;
    for trial in 0..3 {
        let q1 = random_orthogonal(n, &mut rng);
        let q2 = random_orthogonal(n, &mut rng);
        let spectrum = DMatrix::from_diagonal(&nalgebra::DVector::from_fn(n, |i, _| 0.8_f64.powi(i as i32)));
        let a = &q1 * spectrum * q2.transpose();
        let a = Array2::from_shape_fn((n, n), |(i, j)| a[(i, j)]);

        let (u, sigma) = top_singular(a.view(), d, trial, SvdOptions::default()).unwrap();
        let exact = exact_singular_values(a.view());
        let residual = &a - &u.dot(&u.t().dot(&a));
        let err = exact_singular_values(residual.view())[0];
        assert!(err <= exact[d] * 1.05, "trial {trial}: {err} vs {}", exact[d]);

        let gram = u.t().dot(&u);
        for i in 0..d {
            for j in 0..d {
                let target = if i == j { 1.0 } else { 0.0 };
                assert!((gram[[i, j]] - target).abs() < 1e-8);
            }
        }
        assert!(sigma.windows(2).all(|w| w[0] >= w[1]));
        for (s, e) in sigma.iter().zip(&exact) {
            assert!((s - e).abs() <= 0.05 * e);
        }
    }
}

#[test]
fn features_are_deterministic_and_orthonormal_on_graphs() {
    let (g, _) = sbm_graph(&SbmSpec { block_sizes: vec![40, 40, 40], p_in: 0.3, p_out: 0.02, seed: 2 }).unwrap();
    let p = LowOrderParams { window: 5, neg_b: 1.0, dim: 8 };
    let a = build_loworder_features(&g, &p, 9).unwrap();
    let b = build_loworder_features(&g, &p, 9).unwrap();
    assert_eq!(a, b);
    assert!(a.singular_values.windows(2).all(|w| w[0] >= w[1]));
    let roots: Vec<f64> = a.singular_values.iter().map(|s| s.sqrt()).collect();
    let u = Array2::from_shape_fn(a.b.dim(), |(i, j)| a.b[[i, j]] / roots[j]);
    let gram = u.t().dot(&u);
    for i in 0..8 {
        for j in 0..8 {
            let target = if i == j { 1.0 } else { 0.0 };
            assert!((gram[[i, j]] - target).abs() < 1e-8);
        }
    }
    let m = netmf_matrix(&g, &p).unwrap();
    assert!(m.iter().all(|&x| x.is_finite() && x >= 0.0));
}
