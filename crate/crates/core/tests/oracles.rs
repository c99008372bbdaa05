mod common;

use common::*;
use connectome_ssvm::connectome::{build_augmentation, neighborhood, spatial_penalty};
use connectome_ssvm::prox::{loss_prox, loss_value, soft_threshold, LossKind};
use connectome_ssvm::solver::{precompute_h, InversionLemma};
use connectome_ssvm::spectral::{build_kernel, solve_laplacian};
use connectome_ssvm::GridParcellation;
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[test]
fn prox_matches_golden_section() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..300 {
        let kind = random_loss(&mut rng);
        let t = rng.gen_range(-5.0..5.0);
        let tau = rng.gen_range(1e-3..4.0);
        let f = |u: f64| tau * loss_value(kind, u) + 0.5 * (u - t) * (u - t);
        let oracle = golden_section(f, t - 10.0, t + 10.0, 1e-10);
        let got = loss_prox(kind, t, tau).unwrap();
        assert!((got - oracle).abs() <= 1e-6, "{kind} t={t} tau={tau}: {got} vs {oracle}");
    }
}

#[test]
fn soft_threshold_matches_golden_section() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    for _ in 0..200 {
        let t = rng.gen_range(-5.0..5.0);
        let tau = rng.gen_range(0.0..3.0);
        let oracle = golden_section(|u| tau * u.abs() + 0.5 * (u - t) * (u - t), -10.0, 10.0, 1e-10);
        assert!((soft_threshold(t, tau) - oracle).abs() <= 1e-6);
    }
}

#[test]
fn neighborhood_matches_coordinate_oracle() {
    for parc in [
        GridParcellation::full([2, 2, 1]).unwrap(),
        GridParcellation::full([3, 2, 2]).unwrap(),
        GridParcellation::new([3, 3, 1], vec![true, true, false, true, true, true, false, true, true], 3.0).unwrap(),
        GridParcellation::slice66(),
    ] {
        let pairs = neighbor_pairs(&parc);
        let mut from_lib = Vec::new();
        for j in 0..parc.feature_dim() {
            for k in neighborhood(j, &parc).unwrap() {
                assert!(neighborhood(k, &parc).unwrap().contains(&j), "N is not symmetric at ({j}, {k})");
                if j < k {
                    from_lib.push((j, k));
                }
            }
        }
        from_lib.sort_unstable();
        assert_eq!(from_lib, pairs, "dims {:?}", parc.dims());
    }
}

#[test]
fn penalty_matches_direct_sum() {
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    for parc in [
        GridParcellation::full([2, 2, 1]).unwrap(),
        GridParcellation::full([3, 3, 2]).unwrap(),
        GridParcellation::new([3, 2, 2], vec![true, true, true, false, true, true, true, true, false, true, true, true], 3.0)
            .unwrap(),
    ] {
        let map = build_augmentation(&parc);
        let pairs = neighbor_pairs(&parc);
        for _ in 0..20 {
            let w: Vec<f64> = (0..parc.feature_dim()).map(|_| rng.gen_range(-2.0..2.0)).collect();
            for q in [1, 2] {
                let got = spatial_penalty(&w, &map, q as u32).unwrap();
                let want = direct_double_sum(&w, &pairs, q);
                assert!((got - want).abs() <= 1e-12 * want.max(1.0), "q={q}: {got} vs {want}");
                let once = map.masked_difference_norm(&w, q as u32).unwrap();
                assert!((2.0 * once - want).abs() <= 1e-12 * want.max(1.0));
            }
        }
    }
}

#[test]
fn augmentation_and_difference_adjoints() {
    let mut rng = ChaCha8Rng::seed_from_u64(14);
    let parc = GridParcellation::new([3, 2, 2], vec![true; 12], 3.0).unwrap();
    let map = build_augmentation(&parc);
    for _ in 0..10 {
        let w: Vec<f64> = (0..map.feature_dim()).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let v: Vec<f64> = (0..map.augmented_dim()).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let z: Vec<f64> = (0..map.difference_dim()).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let dot = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>();
        let lhs = dot(&map.augment(&w).unwrap(), &v);
        let rhs = dot(&w, &map.adjoint_augment(&v).unwrap());
        assert!((lhs - rhs).abs() < 1e-12);
        let lhs = dot(&map.apply_difference(&v).unwrap(), &z);
        let rhs = dot(&v, &map.apply_difference_adjoint(&z).unwrap());
        assert!((lhs - rhs).abs() < 1e-10);
        // A^T A = I
        assert_eq!(map.adjoint_augment(&map.augment(&w).unwrap()).unwrap(), w);
    }
}

#[test]
fn fft_solve_matches_dense() {
    let mut rng = ChaCha8Rng::seed_from_u64(15);
    for dims in [[1, 2, 1], [2, 2, 1], [3, 1, 2]] {
        let parc = GridParcellation::full(dims).unwrap();
        let map = build_augmentation(&parc);
        let kernel = build_kernel(&map);
        let q = dense_q(map.shape());
        for _ in 0..10 {
            let b: Vec<f64> = (0..map.augmented_dim()).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let x = solve_laplacian(&b, &kernel).unwrap();
            assert!(rel_err(&x, &dense_solve(&q, &b)) < 1e-10, "{dims:?}");
        }
    }
}

#[test]
fn inversion_lemma_matches_dense() {
    let mut rng = ChaCha8Rng::seed_from_u64(16);
    for _ in 0..30 {
        let n = rng.gen_range(1..=10);
        let p = rng.gen_range(1..=40);
        let x = DMatrix::from_fn(n, p, |_, _| rng.gen_range(-1.0..1.0));
        let v: Vec<f64> = (0..p).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let h = precompute_h(&x).unwrap();
        let vv = DVector::from_column_slice(&v);
        let got = &vv * 0.5 - &h * (&x * &vv);
        let dense = x.transpose() * &x + DMatrix::identity(p, p) * 2.0;
        assert!(rel_err(got.as_slice(), &dense_solve(&dense, &v)) < 1e-10);

        let c = rng.gen_range(0.5..4.0);
        let lemma = InversionLemma::new(&x, c).unwrap();
        let dense = x.transpose() * &x + DMatrix::identity(p, p) * c;
        assert!(rel_err(lemma.apply(&x, &vv).as_slice(), &dense_solve(&dense, &v)) < 1e-10);
    }
}

#[test]
fn hinge_prox_is_not_the_smooth_one() {
    // guards the oracle itself: the three losses give different answers here
    let t = 0.2;
    let a = loss_prox(LossKind::Hinge, t, 0.5).unwrap();
    let b = loss_prox(LossKind::TruncatedLeastSquares, t, 0.5).unwrap();
    assert!((a - b).abs() > 1e-3);
}
