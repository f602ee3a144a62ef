use demand_bench::market::{
    choice_probabilities, generate_catalog, read_panel_csv, simulate_day, simulate_panel,
    step_prices, true_point_elasticity, utility, write_panel_csv, MarketConfig, ProductCatalog,
    SimRng,
};
use nalgebra::DMatrix;
use proptest::prelude::*;
use rand::SeedableRng;

#[test]
fn softmax_near_overflow_matches_direct_evaluation() {
    // exp(700) is still representable, so the unshifted formula is a valid oracle here
    let u = [700.0, 699.0, 695.5, 690.0];
    let direct: Vec<f64> = u.iter().map(|v: &f64| v.exp()).collect();
    let total: f64 = direct.iter().sum();
    let p = choice_probabilities(&u).unwrap();
    for (a, b) in p.iter().zip(&direct) {
        assert!(((a - b / total) / a).abs() < 1e-13);
    }
    let p = choice_probabilities(&[1000.0, 0.0]).unwrap();
    assert!(p.iter().all(|v| v.is_finite()));
    assert_eq!(p[0], 1.0);
}

#[test]
fn utility_matches_dot_product() {
    let delta = [0.5, -0.25, 1.0];
    let c = [2.0, 4.0, -1.0];
    let expected = -3.0 * 1.2 + (0.5 * 2.0 - 0.25 * 4.0 - 1.0);
    assert_eq!(utility(-3.0, 1.2, &delta, &c).unwrap(), expected);
    assert_eq!(utility(-3.0, 1.2, &[0.0; 3], &c).unwrap(), -3.0 * 1.2);
}

#[test]
fn binomial_split_within_four_sigma() {
    let n = 100_000u64;
    let bound = 4.0 * (n as f64 * 0.25).sqrt();
    let mut rng = SimRng::seed_from_u64(99);
    for _ in 0..20 {
        let s = simulate_day(&[0.5, 0.5], n, &mut rng);
        assert_eq!(s[0] + s[1], n);
        assert!((s[0] as f64 - 50_000.0).abs() <= bound, "{s:?}");
    }
}

#[test]
fn price_change_count_is_bernoulli() {
    let (eps, days, n) = (0.01, 1000, 25);
    let mut rng = SimRng::seed_from_u64(3);
    let mut prices = vec![1.0; n];
    let mut changes = vec![0u32; n];
    for _ in 0..days {
        let next = step_prices(&prices, eps, 0.05, &mut rng);
        for j in 0..n {
            if next[j] != prices[j] {
                changes[j] += 1;
            }
        }
        prices = next;
    }
    let mean = eps * days as f64;
    let sd = (days as f64 * eps * (1.0 - eps)).sqrt();
    for c in &changes {
        assert!((*c as f64 - mean).abs() <= 4.0 * sd, "{changes:?}");
    }
    let total: u32 = changes.iter().sum();
    assert!((total as f64 - mean * n as f64).abs() <= 4.0 * sd * (n as f64).sqrt());
}

fn three_products() -> ProductCatalog {
    let features = DMatrix::from_row_slice(3, 2, &[0.3, -1.0, 1.1, 0.4, -0.7, 0.2]);
    ProductCatalog::new(
        features,
        vec![-2.0, -3.5, -1.2],
        vec![0.8, 0.0],
        1,
        vec![1.0, 0.7, 1.4],
    )
    .unwrap()
}

fn fd_elasticity(catalog: &ProductCatalog, prices: &[f64], j: usize) -> f64 {
    let h: f64 = 1e-5;
    let log_share = |scale: f64| {
        let mut p = prices.to_vec();
        p[j] *= scale;
        choice_probabilities(&catalog.utilities(&p).unwrap()).unwrap()[j].ln()
    };
    (log_share(h.exp()) - log_share((-h).exp())) / (2.0 * h)
}

#[test]
fn elasticity_matches_finite_difference() {
    let catalog = three_products();
    let prices = [1.0, 0.7, 1.4];
    let e = true_point_elasticity(&catalog, &prices).unwrap();
    for j in 0..3 {
        let fd = fd_elasticity(&catalog, &prices, j);
        assert!(((e[j] - fd) / fd).abs() <= 1e-6, "{j}: {} vs {fd}", e[j]);
    }
}

#[test]
fn desk_catalog_mean_beta() {
    let catalog = generate_catalog(&MarketConfig::default()).unwrap();
    assert_eq!(catalog.n_products(), 25);
    assert_eq!(catalog.n_features(), 10);
    let mean = catalog.beta().iter().sum::<f64>() / 25.0;
    // U(-4.5, -1) has sd 3.5 / sqrt(12); four standard errors of a 25-draw mean
    let tol = 4.0 * 3.5 / 12f64.sqrt() / 5.0;
    assert!((mean + 2.75).abs() < tol, "{mean}");
    assert!(catalog.delta()[6..].iter().all(|d| *d == 0.0));
}

#[test]
fn full_scale_panel_shape_and_conservation() {
    let cfg = MarketConfig::full_scale();
    let (_, panel) = simulate_panel(&cfg).unwrap();
    assert_eq!(panel.len(), 25_000);
    let mut per_day = vec![0.0; cfg.n_days];
    for r in &panel.rows {
        per_day[r.day as usize] += r.sales;
    }
    assert!(per_day.iter().all(|s| *s == cfg.n_consumers as f64));
}

#[test]
fn monopoly_sells_to_everyone() {
    let cfg = MarketConfig {
        n_products: 1,
        n_sig_features: 1,
        n_ima_features: 0,
        n_days: 40,
        ..MarketConfig::default()
    };
    let (catalog, panel) = simulate_panel(&cfg).unwrap();
    assert_eq!(catalog.n_features(), 1);
    assert!(panel.rows.iter().all(|r| r.sales == cfg.n_consumers as f64));
}

#[test]
fn panel_csv_round_trip_is_byte_stable() {
    let cfg = MarketConfig {
        n_products: 4,
        n_days: 30,
        epsilon: 0.2,
        seed: 5,
        ..MarketConfig::default()
    };
    let (_, panel) = simulate_panel(&cfg).unwrap();
    let mut a = Vec::new();
    write_panel_csv(&panel, &mut a).unwrap();
    let back = read_panel_csv(a.as_slice()).unwrap();
    assert_eq!(back, panel);
    let mut b = Vec::new();
    write_panel_csv(&back, &mut b).unwrap();
    assert_eq!(a, b);
}

proptest! {
    #[test]
    fn probabilities_normalize(u in prop::collection::vec(-700.0f64..700.0, 1..40)) {
        let p = choice_probabilities(&u).unwrap();
        let total: f64 = p.iter().sum();
        prop_assert!((total - 1.0).abs() <= 1e-12);
        prop_assert!(p.iter().all(|v| (0.0..=1.0).contains(v)));
    }

    #[test]
    fn raising_a_price_never_raises_its_share(
        beta in prop::collection::vec(-5.0f64..-0.1, 2..8),
        seed in 0u64..1000,
        which in 0usize..8,
        bump in 0.0f64..2.0,
    ) {
        let n = beta.len();
        let j = which % n;
        let prices: Vec<f64> = (0..n).map(|i| 0.5 + ((seed + i as u64) % 7) as f64 * 0.2).collect();
        let u = |p: &[f64]| -> Vec<f64> { beta.iter().zip(p).map(|(b, p)| b * p).collect() };
        let before = choice_probabilities(&u(&prices)).unwrap()[j];
        let mut raised = prices.clone();
        raised[j] += bump;
        let after = choice_probabilities(&u(&raised)).unwrap()[j];
        prop_assert!(after <= before);
    }

    #[test]
    fn prices_stay_positive(
        start in prop::collection::vec(1e-3f64..10.0, 1..6),
        sd in 0.0f64..3.0,
        seed in any::<u64>(),
    ) {
        let mut rng = SimRng::seed_from_u64(seed);
        let mut p = start;
        for _ in 0..500 {
            p = step_prices(&p, 1.0, sd, &mut rng);
            prop_assert!(p.iter().all(|v| *v > 0.0 && v.is_finite()));
        }
    }

    #[test]
    fn day_sales_conserve_consumers(
        u in prop::collection::vec(-5.0f64..5.0, 1..30),
        n in 0u64..200_000,
        seed in any::<u64>(),
    ) {
        let p = choice_probabilities(&u).unwrap();
        let mut rng = SimRng::seed_from_u64(seed);
        prop_assert_eq!(simulate_day(&p, n, &mut rng).iter().sum::<u64>(), n);
    }

    #[test]
    fn elasticity_matches_fd_on_random_instances(
        beta in prop::collection::vec(-4.5f64..-1.0, 2..6),
        seed in 0u64..500,
    ) {
        let n = beta.len();
        let features = DMatrix::from_fn(n, 1, |i, _| ((seed as usize + 3 * i) % 5) as f64 * 0.3 - 0.6);
        let prices: Vec<f64> = (0..n).map(|i| 0.6 + ((seed as usize + i) % 4) as f64 * 0.25).collect();
        let catalog = ProductCatalog::new(features, beta, vec![0.7], 1, prices.clone()).unwrap();
        let e = true_point_elasticity(&catalog, &prices).unwrap();
        for j in 0..n {
            let fd = fd_elasticity(&catalog, &prices, j);
            prop_assert!(((e[j] - fd) / fd).abs() <= 1e-6);
        }
    }
}

#[test]
fn same_seed_same_panel_bytes() {
    for seed in [0u64, 17, 123_456] {
        let cfg = MarketConfig {
            n_products: 6,
            n_days: 60,
            epsilon: 0.1,
            seed,
            ..MarketConfig::default()
        };
        let render = || {
            let (_, panel) = simulate_panel(&cfg).unwrap();
            let mut buf = Vec::new();
            write_panel_csv(&panel, &mut buf).unwrap();
            buf
        };
        assert_eq!(render(), render());
    }
}
