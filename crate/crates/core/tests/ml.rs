use demand_bench::features::{build_feature_table, FeatureConfig, FeatureRow, FeatureTable};
use demand_bench::market::{simulate_panel, MarketConfig, PanelRow, SalesPanel};
use demand_bench::ml::{train, ArchConfig, TargetSpace, TrainConfig, TrainedModel};
use demand_bench::Error;
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn small_market(seed: u64) -> (SalesPanel, FeatureTable) {
    let cfg = MarketConfig {
        n_products: 5,
        n_consumers: 2_000,
        n_days: 80,
        epsilon: 0.2,
        seed,
        ..MarketConfig::default()
    };
    let (catalog, panel) = simulate_panel(&cfg).unwrap();
    let features = FeatureConfig {
        window: 7,
        ..FeatureConfig::default()
    };
    let table = build_feature_table(&panel, None, Some(&catalog.observed()), &features).unwrap();
    (panel, table)
}

fn small_config(seed: u64) -> TrainConfig {
    TrainConfig {
        batch_size: 32,
        epochs: 3,
        arch: ArchConfig {
            embedding_dim: 4,
            encoder_hidden: vec![16, 16],
            head_hidden: vec![16, 16, 8, 4],
            ..ArchConfig::default()
        },
        seed,
        ..TrainConfig::default()
    }
}

#[test]
fn same_seed_same_model() {
    let (panel, table) = small_market(1);
    let a = train(&panel, &table, &small_config(4)).unwrap();
    let b = train(&panel, &table, &small_config(4)).unwrap();
    assert_eq!(a.to_json().unwrap(), b.to_json().unwrap());
    let c = train(&panel, &table, &small_config(5)).unwrap();
    assert_ne!(a.params, c.params);
}

#[test]
fn history_has_one_entry_per_epoch_and_step() {
    let (panel, table) = small_market(2);
    let cfg = small_config(0);
    let m = train(&panel, &table, &cfg).unwrap();
    assert_eq!(m.history.epochs.len(), cfg.epochs);
    let n_train = table.rows.iter().filter(|r| r.day < 72).count();
    assert_eq!(
        m.history.steps.len(),
        cfg.epochs * n_train.div_ceil(cfg.batch_size)
    );
    assert!(m.history.epochs.iter().all(|e| e.val_loss.is_some()));
    let first = m.history.epochs[0].train_loss;
    let last = m.history.epochs.last().unwrap().train_loss;
    assert!(last < first, "{first} -> {last}");
}

#[test]
fn model_file_round_trip_is_exact() {
    let (panel, table) = small_market(3);
    let m = train(&panel, &table, &small_config(1)).unwrap();
    let back = TrainedModel::from_json(&m.to_json().unwrap()).unwrap();
    assert_eq!(back, m);
    let all: Vec<usize> = (0..table.len()).collect();
    assert_eq!(
        back.prep.inputs(&table, &all).unwrap(),
        m.prep.inputs(&table, &all).unwrap()
    );
    assert_eq!(
        back.predict_theta(&table).unwrap(),
        m.predict_theta(&table).unwrap()
    );
}

#[test]
fn predictions_ignore_prices_and_batching() {
    let (panel, table) = small_market(4);
    let m = train(&panel, &table, &small_config(2)).unwrap();
    let theta = m.predict_theta(&table).unwrap();
    let mut repriced = table.clone();
    for r in repriced.rows.iter_mut() {
        r.price = r.price * 3.0 + 1.0;
        r.sales += 100.0;
    }
    assert_eq!(m.predict_theta(&repriced).unwrap(), theta);
    for i in (0..table.len()).step_by(37) {
        let single = m.predict_rows(&table, &[i]).unwrap()[0];
        assert!((single.alpha - theta[i].alpha).abs() < 1e-12);
        assert!((single.beta - theta[i].beta).abs() < 1e-12);
    }
}

#[test]
fn unknown_items_map_to_reserved_id() {
    let (panel, table) = small_market(5);
    let m = train(&panel, &table, &small_config(3)).unwrap();
    let mut unseen = table.clone();
    unseen.rows.truncate(3);
    for r in unseen.rows.iter_mut() {
        r.item_id = 999;
    }
    let mut reserved = unseen.clone();
    for r in reserved.rows.iter_mut() {
        r.item_id = 0;
    }
    assert_eq!(
        m.predict_theta(&unseen).unwrap(),
        m.predict_theta(&reserved).unwrap()
    );
}

#[test]
fn bad_inputs_are_reported() {
    let (panel, table) = small_market(6);
    let mut broken = table.clone();
    broken.rows[17].numeric[20] = Some(f64::NAN);
    match train(&panel, &broken, &small_config(0)) {
        Err(Error::NonFinite { row, what }) => {
            assert_eq!(row, 17);
            assert_eq!(what, table.numeric_names[20]);
        }
        other => panic!("expected a non-finite error, got {other:?}"),
    }
    let empty = SalesPanel::new(vec![]).unwrap();
    let no_rows = FeatureTable {
        numeric_names: vec![],
        rows: vec![],
    };
    assert!(matches!(
        train(&empty, &no_rows, &small_config(0)),
        Err(Error::EmptyInput(_))
    ));
}

/// Single item, demand exactly linear in price plus noise. The one numeric
/// input is unrelated noise.
fn linear_item(n: usize, seed: u64) -> (SalesPanel, FeatureTable) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut rows = Vec::new();
    let mut feats = Vec::new();
    for day in 0..n as u32 {
        let price = rng.random_range(1.0..3.0);
        let sales = 10.0 - 2.0 * price + rng.random_range(-1.0..1.0);
        rows.push(PanelRow {
            product_id: 0,
            day,
            price,
            sales,
            availability: 1.0,
            competitor_price: None,
        });
        feats.push(FeatureRow {
            product_id: 0,
            day,
            price,
            sales,
            item_id: 1,
            category_id: 0,
            tree_ids: [0; 4],
            numeric: vec![Some(rng.random_range(1.0..2.0))],
        });
    }
    (
        SalesPanel::new(rows).unwrap(),
        FeatureTable {
            numeric_names: vec!["noise".into()],
            rows: feats,
        },
    )
}

#[test]
fn single_item_recovers_least_squares_line() {
    let (panel, table) = linear_item(4000, 11);
    let cfg = TrainConfig {
        batch_size: 64,
        epochs: 12,
        base_lr: 5e-3,
        lr_decay: 0.7,
        validation_fraction: 0.0,
        unknown_fraction: 0.0,
        target_space: TargetSpace::Linear,
        arch: ArchConfig {
            embedding_dim: 4,
            encoder_hidden: vec![16, 16],
            head_hidden: vec![16, 16, 8, 4],
            dropout: 0.0,
            ..ArchConfig::default()
        },
        seed: 3,
    };
    let m = train(&panel, &table, &cfg).unwrap();
    let thetas = m.predict_theta(&table).unwrap();
    let k = thetas.len() as f64;
    let mean = demand_bench::ml::DemandTheta {
        alpha: thetas.iter().map(|t| t.alpha).sum::<f64>() / k,
        beta: thetas.iter().map(|t| t.beta).sum::<f64>() / k,
    };
    let theta = m.prep.raw_theta(mean).unwrap();

    // least-squares oracle on the same rows
    let n = table.len();
    let x = DMatrix::from_fn(n, 2, |i, j| if j == 0 { 1.0 } else { table.rows[i].price });
    let y = DVector::from_iterator(n, table.rows.iter().map(|r| r.sales));
    let xtx_inv = (x.transpose() * &x).try_inverse().unwrap();
    let coef = &xtx_inv * x.transpose() * &y;
    let resid = &y - &x * &coef;
    let s2 = resid.norm_squared() / (n - 2) as f64;
    let se_a = (s2 * xtx_inv[(0, 0)]).sqrt();
    let se_b = (s2 * xtx_inv[(1, 1)]).sqrt();
    assert!(
        (theta.alpha - coef[0]).abs() <= 3.0 * se_a,
        "alpha {} vs {} (se {se_a})",
        theta.alpha,
        coef[0]
    );
    assert!(
        (theta.beta - coef[1]).abs() <= 3.0 * se_b,
        "beta {} vs {} (se {se_b})",
        theta.beta,
        coef[1]
    );
}
