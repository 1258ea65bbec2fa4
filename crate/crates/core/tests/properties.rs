use ndarray::{Array1, Array2};
use proptest::prelude::*;
use robust_sparse::ellipsoid::{EllipsoidState, SumZeroBasis, WeightPolytope, WeightVector};
use robust_sparse::linalg::sym_eigen;
use robust_sparse::model::{Label, ModelAdapter};
use robust_sparse::oracle::{evaluate_oracle, weighted_deviation_matrix, OracleConfig};
use robust_sparse::simulator::{read_dataset, sample_contaminated, write_dataset, ContaminationSpec, QFamily};
use robust_sparse::spca::{project_l11_ball, project_simplex, solve_relaxation, SpcaProblem};
use robust_sparse::testkit::{sparse_opnorm_exact, sparse_restricted_l2_exact};
use robust_sparse::thresholding::{sparse_restricted_l2, top_k};

fn vector(max_len: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-10.0f64..10.0, 1..=max_len)
}

fn symmetric(p: usize) -> impl Strategy<Value = Array2<f64>> {
    prop::collection::vec(-3.0f64..3.0, p * p).prop_map(move |v| {
        let a = Array2::from_shape_vec((p, p), v).unwrap();
        (&a + &a.t()) / 2.0
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn top_k_keeps_the_largest(v in vector(30), k in 0usize..35) {
        let a = Array1::from(v.clone());
        let t = top_k(a.view(), k);
        prop_assert_eq!(t.support.len(), k.min(v.len()));
        let kept_min = t.support.iter().map(|&i| v[i].abs()).fold(f64::INFINITY, f64::min);
        for i in 0..v.len() {
            if t.support.contains(&i) {
                prop_assert_eq!(t.values[i], v[i]);
            } else {
                prop_assert_eq!(t.values[i], 0.0);
                prop_assert!(v[i].abs() <= kept_min);
            }
        }
    }

    #[test]
    fn restricted_l2_matches_enumeration(v in vector(14), s in 1usize..5) {
        let a = Array1::from(v);
        let fast = sparse_restricted_l2(a.view(), s);
        let slow = sparse_restricted_l2_exact(a.view(), s).unwrap();
        prop_assert!((fast - slow).abs() <= 1e-12 * (1.0 + slow));
    }

    #[test]
    fn simplex_projection_is_a_distribution(v in vector(20)) {
        let p = project_simplex(&v);
        prop_assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        prop_assert!(p.iter().all(|&x| x >= 0.0));
    }

    #[test]
    fn l11_projection_lands_in_ball(m in symmetric(6), s in 0.5f64..8.0) {
        let z = project_l11_ball(m.view(), s);
        prop_assert!(z.iter().map(|x| x.abs()).sum::<f64>() <= s * (1.0 + 1e-9) + 1e-12);
    }

    #[test]
    fn polytope_projection_is_feasible_and_idempotent(v in prop::collection::vec(-1.0f64..1.0, 2..40), eps in 0.0f64..0.45) {
        let poly = WeightPolytope::new(v.len(), eps).unwrap();
        let p = poly.project(Array1::from(v).view());
        let weights = WeightVector { w: p.clone() };
        prop_assert!(weights.is_feasible(&poly, 1e-10));
        let again = poly.project(p.view());
        prop_assert!((&again - &p).iter().all(|x| x.abs() < 1e-10));
    }

    #[test]
    fn helmert_basis_is_an_isometry_into_sum_zero(z in prop::collection::vec(-5.0f64..5.0, 1..30)) {
        let basis = SumZeroBasis { m: z.len() + 1 };
        let za = Array1::from(z);
        let w = basis.apply(za.view());
        prop_assert!(w.sum().abs() < 1e-10);
        prop_assert!((w.dot(&w) - za.dot(&za)).abs() < 1e-9 * (1.0 + za.dot(&za)));
        let back = basis.apply_transpose(w.view());
        prop_assert!((&back - &za).iter().all(|x| x.abs() < 1e-10));
    }

    #[test]
    fn ellipsoid_cut_shrinks_volume(g in prop::collection::vec(-2.0f64..2.0, 2..12), depth in -0.25f64..0.9) {
        prop_assume!(g.iter().any(|x| x.abs() > 1e-3));
        let mut state = EllipsoidState::ball(g.len(), 1.5);
        let before = state.log_det;
        let ratio = state.cut(Array1::from(g).view(), depth).unwrap();
        prop_assert!(ratio < 0.0);
        prop_assert!((state.log_det - before - ratio).abs() < 1e-12);
    }

    #[test]
    fn opnorm_dominates_signed_eigenvalue(m in symmetric(7), s in 1usize..5) {
        let (norm, top) = sparse_opnorm_exact(m.view(), s).unwrap();
        prop_assert!(top <= norm + 1e-12);
        let (norm_more, top_more) = sparse_opnorm_exact(m.view(), s + 1).unwrap();
        prop_assert!(norm_more >= norm - 1e-12 && top_more >= top - 1e-12);
    }

    #[test]
    fn relaxation_is_feasible_and_bounds_sparse_eigenvalue(m in symmetric(6), s in 1usize..4) {
        let problem = SpcaProblem::new(m.clone(), s as f64, 1e-6, 50_000).unwrap();
        let sol = solve_relaxation(&problem).unwrap();
        let h = &sol.h_star;
        prop_assert!((h.diag().sum() - 1.0).abs() < 1e-8);
        prop_assert!(h.iter().map(|x| x.abs()).sum::<f64>() <= s as f64 + 1e-8);
        prop_assert!(sym_eigen(h.view()).unwrap().values[0] >= -1e-8);
        let (_, brute) = sparse_opnorm_exact(m.view(), s).unwrap();
        prop_assert!(sol.lambda_star >= brute - 1e-5);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn oracle_cut_passes_through_query(seed in 0u64..1000, eps in 0.05f64..0.3) {
        let model = ModelAdapter::mean(vec![1.0, 0.0, 0.0, 0.0, 0.0], 1).unwrap();
        let spec = ContaminationSpec {
            epsilon: eps,
            q_family: QFamily::PointMass { shift: vec![0.0, 4.0, 0.0, 0.0, 0.0], response: None },
            seed,
        };
        let data = sample_contaminated(&model, 60, &spec).unwrap();
        let pts = model.functional_points(&data).unwrap();
        let w = WeightVector::uniform(60).w;
        let cfg = OracleConfig { tau_sep: 1e-6, sparsity: 1, spca_tol: 1e-6, spca_max_iters: 20_000 };
        let v = evaluate_oracle(w.view(), pts.view(), &model, &cfg).unwrap();
        if let Some(at_query) = v.evaluate_cut(w.view()) {
            prop_assert!(at_query.abs() < 1e-8);
        }
        let e = weighted_deviation_matrix(w.view(), pts.view(), &model, v.theta_hat().view()).unwrap();
        prop_assert_eq!(&e, &e.t());
    }

    #[test]
    fn contaminated_samples_are_reproducible(seed in 0u64..1000, eps in 0.0f64..0.4) {
        let model = ModelAdapter::regression(vec![0.5, 0.0, -0.5], 1.0, 2).unwrap();
        let spec = ContaminationSpec {
            epsilon: eps,
            q_family: QFamily::ResponseFlip { direction: vec![1.0, 0.0, 0.0], leverage: 3.0 },
            seed,
        };
        let a = sample_contaminated(&model, 40, &spec).unwrap();
        let b = sample_contaminated(&model, 40, &spec).unwrap();
        prop_assert_eq!(&a, &b);
        let mut buf = Vec::new();
        write_dataset(&mut buf, &a, true).unwrap();
        let back = read_dataset(&buf[..], true, eps).unwrap();
        prop_assert_eq!(&back.x, &a.x);
        prop_assert_eq!(&back.y, &a.y);
        prop_assert_eq!(&back.labels, &a.labels);
    }

    #[test]
    fn outlier_sets_are_nested_in_epsilon(seed in 0u64..1000) {
        let model = ModelAdapter::mean(vec![0.0; 4], 1).unwrap();
        let bad = |eps: f64| -> Vec<bool> {
            let spec = ContaminationSpec {
                epsilon: eps,
                q_family: QFamily::PointMass { shift: vec![3.0, 0.0, 0.0, 0.0], response: None },
                seed,
            };
            let d = sample_contaminated(&model, 80, &spec).unwrap();
            d.labels.unwrap().iter().map(|&l| l == Label::Bad).collect()
        };
        let (small, large) = (bad(0.05), bad(0.2));
        prop_assert!(small.iter().zip(&large).all(|(&a, &b)| !a || b));
    }
}
