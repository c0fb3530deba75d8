use covsel::evaluation::edge_metrics;
use covsel::generate::{sample_mvn, GraphSpec, Structure};
use covsel::posterior::PosteriorMethod;
use covsel::{fit_ggm, DataMatrix, EdgeSet, FitConfig, GgmFit, MethodChoice};

fn quick() -> FitConfig {
    FitConfig {
        warmup: 300,
        draws: 300,
        seed: 4,
        ..Default::default()
    }
}

fn check_estimate(fit: &GgmFit) {
    let g = &fit.graph;
    assert!(g.omega_hat.min_eigenvalue() >= 1e-6);
    assert_eq!(EdgeSet::from_pattern(g.omega_hat.matrix(), 0.0), g.edges);
    assert_eq!(EdgeSet::from_pattern(g.pcor.matrix(), 0.0), g.edges);
    assert!(fit.lambda.has_symmetric_pattern());
    assert_eq!(fit.manifest.edge_count, g.edges.len());
}

#[test]
fn independent_variables_give_a_near_empty_graph() {
    let mut truth = GraphSpec::new(Structure::Ar1, 8, 0);
    truth.rho = 0.0;
    let model = truth.generate().unwrap();
    let data = sample_mvn(&model, 200, 1).unwrap();
    let fit = fit_ggm(&data, &quick()).unwrap();
    check_estimate(&fit);
    assert!(fit.graph.edges.len() <= 2, "{} edges", fit.graph.edges.len());
}

#[test]
fn chain_is_recovered_at_moderate_n() {
    let model = GraphSpec::new(Structure::Ar1, 10, 0).generate().unwrap();
    let data = sample_mvn(&model, 300, 2).unwrap();
    let fit = fit_ggm(&data, &quick()).unwrap();
    check_estimate(&fit);
    let m = edge_metrics(&model.adjacency, &fit.graph.edges).unwrap();
    assert!(m.sn >= 0.85, "sn {}", m.sn);
    assert!(m.sp >= 0.9, "sp {}", m.sp);
    for node in &fit.manifest.nodes {
        assert_eq!(node.method, PosteriorMethod::BayesianBootstrap);
    }
}

#[test]
fn high_dimensional_fit_uses_the_horseshoe_and_stays_pd() {
    let model = GraphSpec::new(Structure::ScaleFree, 25, 3).generate().unwrap();
    let data = sample_mvn(&model, 20, 3).unwrap();
    let fit = fit_ggm(&data, &quick()).unwrap();
    check_estimate(&fit);
    assert!(fit.manifest.nodes.iter().all(|n| n.method == PosteriorMethod::Horseshoe));
    // Sparse truth, small n: the method should under-select.
    assert!(fit.graph.edges.len() <= model.adjacency.len());
}

#[test]
fn same_seed_reproduces_the_estimate_and_a_new_seed_may_not() {
    let model = GraphSpec::new(Structure::Ar2, 8, 0).generate().unwrap();
    let data = sample_mvn(&model, 60, 9).unwrap();
    let cfg = FitConfig {
        method: MethodChoice::Horseshoe,
        ..quick()
    };
    let a = fit_ggm(&data, &cfg).unwrap();
    let b = fit_ggm(&data, &cfg).unwrap();
    assert_eq!(a.graph.omega_hat, b.graph.omega_hat);
    assert_eq!(a.manifest.nodes, b.manifest.nodes);
    let c = fit_ggm(&data, &FitConfig { seed: 5, ..cfg }).unwrap();
    assert_ne!(
        a.nodes[0].draws.beta, c.nodes[0].draws.beta,
        "different seeds should give different posterior draws"
    );
}

#[test]
fn constant_column_is_a_data_error() {
    let mut values = sample_mvn(&GraphSpec::new(Structure::Ar1, 4, 0).generate().unwrap(), 30, 1)
        .unwrap()
        .values()
        .clone();
    values.column_mut(2).fill(3.0);
    let err = DataMatrix::unnamed(values)
        .and_then(|d| fit_ggm(&d, &quick()).map(|_| ()))
        .unwrap_err();
    assert_eq!(err.class(), covsel::ErrorClass::Data);
}
