use nalgebra::DVector;
use proptest::prelude::*;
use timino::data::{build_lag_matrix, LagSpec, SummaryGraph};
use timino::datagen::{generate, ExperimentId, ExperimentSpec};
use timino::discovery::{discover_full, DiscoveryConfig};
use timino::granger::{granger_f_test, granger_linear, GrangerConfig};
use timino::indep::hsic_statistic;
use timino::models::{fit_linear, FitTolerances};
use timino::Panel;

fn panel_strategy(max_dim: usize) -> impl Strategy<Value = Panel> {
    (1..=max_dim, 30usize..60).prop_flat_map(|(d, t)| {
        prop::collection::vec(prop::collection::vec(-5.0f64..5.0, t), d)
            .prop_map(|cols| Panel::from_columns_unnamed(cols).unwrap())
    })
}

/// Brute force: a graph is acyclic iff some permutation orders every edge.
fn acyclic_by_permutation(n: usize, edges: &[(usize, usize)]) -> bool {
    fn permute(order: &mut Vec<usize>, k: usize, edges: &[(usize, usize)]) -> bool {
        if k == order.len() {
            let mut pos = vec![0; order.len()];
            for (i, &v) in order.iter().enumerate() {
                pos[v] = i;
            }
            return edges.iter().all(|&(a, b)| pos[a] < pos[b]);
        }
        for i in k..order.len() {
            order.swap(k, i);
            if permute(order, k + 1, edges) {
                return true;
            }
            order.swap(k, i);
        }
        false
    }
    permute(&mut (0..n).collect(), 0, edges)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn lag_matrix_entries_match_shifted_series(
        panel in panel_strategy(4),
        p in 1usize..4,
        inst in any::<bool>(),
        pick in any::<u8>(),
    ) {
        let d = panel.dim();
        let target = pick as usize % d;
        let regressors: Vec<usize> = (0..d).filter(|&j| j == target || (pick >> j) & 1 == 1).collect();
        let m = build_lag_matrix(&panel, target, &regressors, LagSpec::new(p, inst)).unwrap();
        prop_assert_eq!(m.first_time, p);
        prop_assert_eq!(m.rows(), panel.len() - p);
        let others = regressors.iter().filter(|&&r| r != target).count();
        prop_assert_eq!(m.columns(), p + others * (p + usize::from(inst)));
        for r in 0..m.rows() {
            let t = m.first_time + r;
            prop_assert_eq!(m.response[r], panel.get(t, target));
            for (j, tag) in m.column_tags.iter().enumerate() {
                prop_assert!(tag.lag <= p);
                prop_assert!(tag.lag > 0 || (inst && tag.series != target));
                prop_assert_eq!(m.predictors[(r, j)], panel.get(t - tag.lag, tag.series));
            }
        }
    }

    #[test]
    fn acyclicity_agrees_with_brute_force(
        n in 1usize..6,
        raw in prop::collection::vec((0usize..6, 0usize..6), 0..10),
    ) {
        let edges: Vec<(usize, usize)> = raw.into_iter().map(|(a, b)| (a % n, b % n)).filter(|(a, b)| a != b).collect();
        let g = SummaryGraph::with_edges(n, edges.iter().copied()).unwrap();
        prop_assert_eq!(g.is_acyclic(), acyclic_by_permutation(n, &edges));
        if let Some(order) = g.topological_order() {
            let mut pos = vec![0; n];
            for (i, &v) in order.iter().enumerate() {
                pos[v] = i;
            }
            prop_assert!(edges.iter().all(|&(a, b)| pos[a] < pos[b]));
        }
    }

    #[test]
    fn ols_residuals_are_orthogonal_and_rss_shrinks_with_more_columns(panel in panel_strategy(3), p in 1usize..3) {
        let d = panel.dim();
        let tol = FitTolerances::default();
        let all: Vec<usize> = (0..d).collect();
        let full = build_lag_matrix(&panel, 0, &all, LagSpec::new(p, true)).unwrap();
        let own = build_lag_matrix(&panel, 0, &[0], LagSpec::new(p, true)).unwrap();
        let f_full = fit_linear(&full, &tol).unwrap();
        let f_own = fit_linear(&own, &tol).unwrap();
        let scale = full.response.norm().max(1.0) * f_full.residuals.norm().max(1.0);
        for j in 0..full.columns() {
            let dot = DVector::from_column_slice(full.column(j)).dot(&f_full.residuals);
            prop_assert!(dot.abs() <= 1e-8 * scale, "column {} dot {}", j, dot);
        }
        prop_assert!(f_full.residuals.sum().abs() <= 1e-8 * scale);
        prop_assert!(f_full.rss <= f_own.rss * (1.0 + 1e-10) + 1e-12);
    }

    #[test]
    fn hsic_is_symmetric_and_translation_invariant(
        xy in prop::collection::vec((-3.0f64..3.0, -3.0f64..3.0), 25..60),
        cx in -50.0f64..50.0,
        cy in -50.0f64..50.0,
    ) {
        let x: Vec<f64> = xy.iter().map(|v| v.0).collect();
        let y: Vec<f64> = xy.iter().map(|v| v.1).collect();
        prop_assume!(x.windows(2).any(|w| w[0] != w[1]) && y.windows(2).any(|w| w[0] != w[1]));
        let h = hsic_statistic(&x, &y).unwrap();
        let tol = 1e-9 * h.abs().max(1e-12);
        prop_assert!((h - hsic_statistic(&y, &x).unwrap()).abs() <= tol);
        let xs: Vec<f64> = x.iter().map(|v| v + cx).collect();
        let ys: Vec<f64> = y.iter().map(|v| v + cy).collect();
        prop_assert!((h - hsic_statistic(&xs, &ys).unwrap()).abs() <= 1e-7 * h.abs().max(1e-12));
        prop_assert!(h >= -1e-12);
    }

    #[test]
    fn f_statistic_grows_with_restricted_rss(
        rss_full in 0.1f64..100.0,
        extra in 0.0f64..100.0,
        more in 0.0f64..100.0,
        p_restr in 1usize..5,
        gap in 1usize..5,
        n in 30usize..300,
    ) {
        let (pr, pf) = (p_restr as f64, (p_restr + gap) as f64);
        let a = granger_f_test(rss_full + extra, rss_full, pr, pf, n, 0.05).unwrap();
        let b = granger_f_test(rss_full + extra + more, rss_full, pr, pf, n, 0.05).unwrap();
        prop_assert!(b.statistic >= a.statistic);
        prop_assert!(b.p_value <= a.p_value);
        prop_assert!((0.0..=1.0).contains(&a.p_value));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn linear_granger_is_scale_invariant(seed in 0u64..1000, sx in 0.01f64..100.0, sy in 0.01f64..100.0) {
        let (panel, _) = generate::<f64>(&ExperimentSpec::new(ExperimentId::E1, 200, seed)).unwrap();
        let scaled = Panel::from_columns_unnamed(vec![
            panel.series(0).iter().map(|v| v * sx).collect(),
            panel.series(1).iter().map(|v| v * sy).collect(),
        ])
        .unwrap();
        let a = granger_linear(&panel, &GrangerConfig::default()).unwrap();
        let b = granger_linear(&scaled, &GrangerConfig::default()).unwrap();
        for (u, v) in a.verdicts.iter().zip(&b.verdicts) {
            prop_assert_eq!(u.pair, v.pair);
            prop_assert!((u.statistic - v.statistic).abs() <= 1e-6 * u.statistic.abs().max(1.0));
        }
    }

    #[test]
    fn generation_and_discovery_are_deterministic(seed in 0u64..1000) {
        let spec = ExperimentSpec::new(ExperimentId::E5, 150, seed);
        let (p1, t1) = generate::<f64>(&spec).unwrap();
        let (p2, t2) = generate::<f64>(&spec).unwrap();
        prop_assert_eq!(&p1, &p2);
        prop_assert_eq!(t1, t2);
        let cfg = DiscoveryConfig { seed, ..Default::default() };
        prop_assert_eq!(discover_full(&p1, &cfg).unwrap(), discover_full(&p2, &cfg).unwrap());
    }
}
