//! Property tests for the settlement rules, simulator, environment and
//! metrics pipeline.

use drbid::config::ScenarioConfig;
use drbid::env::{recompute_profit, EnvAction};
use drbid::market::{
    actual_shedding, clears, compute_cbl, event_profit, execution_rate, incentive_ratio,
    settle_customers, slot_profit, Bid, ConsumptionRecord, ExecutionRate, Shedding,
};
use drbid::pipeline::{compute_metrics, Dataset, OutcomeLog, OutcomeRow};
use drbid::sim::{
    generate_population, seeded_rng, simulate_consumption, streams, McpModel, OfferConfig,
    PopulationConfig, TouSchedule,
};
use proptest::prelude::*;

fn offers_strategy(n: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(prop_oneof![Just(0.0), 0.01f64..10.0], 1..=n)
}

#[test]
fn incentive_is_piecewise_constant_on_dense_grid() {
    let breaks = [0.6, 0.8, 1.2, 1.5];
    let mut prev = incentive_ratio(ExecutionRate::Finite(0.0)).unwrap();
    let mut changes = Vec::new();
    for i in 1..=300_000 {
        let xi = i as f64 * 1e-5;
        let a = incentive_ratio(ExecutionRate::Finite(xi)).unwrap();
        assert!([1.0, 1.05, 1.1].contains(&a), "value {a} at {xi}");
        if a != prev {
            changes.push(xi);
        }
        prev = a;
    }
    // 0.6 and 0.8 switch on at the breakpoint itself; 1.2 and 1.5 switch off
    // just after it.
    assert_eq!(changes.len(), 4, "{changes:?}");
    for (c, b) in changes.iter().zip(breaks) {
        assert!((c - b).abs() <= 1.01e-5, "change at {c}, expected {b}");
    }
    for xi in [0.6, 0.8, 1.2, 1.5] {
        assert!(incentive_ratio(ExecutionRate::Finite(xi)).unwrap() > 1.0);
    }
}

proptest! {
    #[test]
    fn shedding_is_non_negative_and_monotone(
        rows in prop::collection::vec((0.0f64..200.0, 0.0f64..250.0), 1..10),
        idx in 0usize..10,
        bump in 0.0f64..50.0,
    ) {
        let recs: Vec<ConsumptionRecord> = rows
            .iter()
            .enumerate()
            .map(|(i, &(cbl, p))| ConsumptionRecord { customer_id: i, slot: 0, actual_kw: p, baseline_kw: cbl })
            .collect();
        let base = actual_shedding(&recs);
        prop_assert!(base.total >= 0.0);
        prop_assert!(base.per_customer.iter().all(|&q| q >= 0.0));
        let mut raised = recs.clone();
        let k = idx % raised.len();
        raised[k].actual_kw += bump;
        let after = actual_shedding(&raised);
        prop_assert!(after.per_customer[k] <= base.per_customer[k]);
        prop_assert!(after.total <= base.total + 1e-9);
    }

    #[test]
    fn free_customers_earn_the_full_bonus_revenue(
        per_customer in prop::collection::vec(0.0f64..100.0, 1..10),
        alpha in prop_oneof![Just(1.0), Just(1.05), Just(1.1)],
        price in 0.01f64..10.0,
    ) {
        let offers = vec![0.0; per_customer.len()];
        let settled = vec![true; per_customer.len()];
        let sh = Shedding { total: per_customer.iter().sum(), per_customer };
        let p = slot_profit(true, alpha, price, &sh, &settled, &offers, 0.25);
        prop_assert_eq!(p, alpha * price * sh.total * 0.25);
    }

    #[test]
    fn raising_the_bid_never_unsettles(offers in offers_strategy(16), a in 0.0f64..10.0, b in 0.0f64..10.0) {
        let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
        let s_lo = settle_customers(&offers, lo);
        let s_hi = settle_customers(&offers, hi);
        for (x, y) in s_lo.iter().zip(&s_hi) {
            prop_assert!(!*x || *y);
        }
        for (x, &o) in s_hi.iter().zip(&offers) {
            if o == 0.0 { prop_assert!(!*x); }
        }
    }

    #[test]
    fn cbl_ignores_order(mut maxima in prop::collection::vec(0.0f64..500.0, 5)) {
        let a = compute_cbl(&maxima).unwrap();
        maxima.reverse();
        let b = compute_cbl(&maxima).unwrap();
        prop_assert!((a - b).abs() <= 1e-9 * a.max(1.0));
        prop_assert!(a >= 0.0);
    }

    #[test]
    fn win_is_monotone_in_bid_price(mcp in 0.0f64..10.0, a in 0.0f64..10.0, b in 0.0f64..10.0) {
        let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
        let w_lo = clears(&Bid { price: lo, quantity: 1.0 }, mcp);
        let w_hi = clears(&Bid { price: hi, quantity: 1.0 }, mcp);
        prop_assert!(w_lo || !w_hi);
    }

    #[test]
    fn execution_rate_is_non_negative_when_defined(q_bid in 0.0f64..300.0, q_act in 0.0f64..300.0) {
        let r = execution_rate(q_bid, q_act);
        if let Some(x) = r.value() { prop_assert!(x >= 0.0); }
        let a = incentive_ratio(r).unwrap();
        prop_assert!([1.0, 1.05, 1.1].contains(&a));
    }

    #[test]
    fn curtailment_grows_with_price_distance(
        p0 in 1.0f64..200.0,
        eps in -1.0f64..-0.01,
        tou in 0.5f64..5.0,
        f1 in 0.0f64..1.0,
        f2 in 0.0f64..1.0,
        above in any::<bool>(),
    ) {
        let (near, far) = if f1 <= f2 { (f1, f2) } else { (f2, f1) };
        let sign = if above { 1.0 } else { -1.0 };
        let shed = |f: f64| p0 - simulate_consumption(p0, eps, tou, true, tou * (1.0 + sign * f)).unwrap();
        prop_assert!(shed(near) >= 0.0);
        prop_assert!(shed(far) >= shed(near));
        prop_assert_eq!(shed(0.0), 0.0);
    }

    #[test]
    fn success_rate_depends_only_on_signs(
        profits in prop::collection::vec(-50.0f64..50.0, 1..60),
        scale in 1e-3f64..1e3,
    ) {
        let rows = |k: f64| OutcomeLog {
            rows: profits.iter().enumerate().map(|(i, &p)| row(i / 8, i % 8, p * k)).collect(),
        };
        let a = compute_metrics(&rows(1.0)).unwrap();
        let b = compute_metrics(&rows(scale)).unwrap();
        prop_assert_eq!(a.success_rate, b.success_rate);
        prop_assert!(a.rate_tight <= a.rate_loose);
        for r in [a.success_rate, a.rate_tight, a.rate_loose, a.win_rate] {
            prop_assert!((0.0..=1.0).contains(&r));
        }
    }
}

fn row(episode: usize, slot: usize, profit: f64) -> OutcomeRow {
    OutcomeRow {
        episode,
        day: episode,
        slot: 56 + slot,
        reserve: 0.1,
        mcp: 4.0,
        bid_price: 3.0,
        bid_quantity: 50.0,
        actual_quantity: 50.0,
        execution_rate: 1.0,
        incentive: 1.1,
        win: 1,
        deal: (profit > 0.0) as u8,
        profit,
    }
}

#[test]
fn elasticities_stay_in_band_over_many_seeds() {
    let cfg = PopulationConfig::default();
    let bands = [cfg.elasticity_peak, cfg.elasticity_semi_peak, cfg.elasticity_off_peak];
    for seed in 0..200 {
        let pop = generate_population(&cfg, &OfferConfig::default(), &mut seeded_rng(seed, streams::POPULATION));
        assert_eq!(pop.len(), 16);
        for c in &pop {
            for (e, (lo, hi)) in c.elasticity.iter().zip(bands) {
                assert!(lo <= *e && *e <= hi, "seed {seed}: {e} outside [{lo}, {hi}]");
            }
        }
    }
}

#[test]
fn tariff_rate_is_positive_everywhere() {
    let tou = TouSchedule::default();
    assert!((0..96).all(|s| tou.rate_at(s) > 0.0));
}

#[test]
fn noisy_clearing_price_is_reproducible() {
    let m = McpModel::with_sigma(0.5);
    let draw = |seed| {
        let mut rng = seeded_rng(seed, 42);
        (0..64).map(|i| m.simulate(i as f64, 0.08, &mut rng).unwrap()).collect::<Vec<_>>()
    };
    assert_eq!(draw(5), draw(5));
    assert_ne!(draw(5), draw(6));
}

/// Steps random policies through random days and checks the environment
/// against plain recomputation: per-step reward, event totals, the
/// non-participation rule and the logged metrics.
#[test]
fn environment_matches_recomputation_on_random_days() {
    use rand::Rng;
    let scenario = ScenarioConfig::numbered(2).unwrap();
    for seed in 0..20u64 {
        let pop = scenario.population(seed);
        let ds = Dataset::generate(&scenario, &pop, 3, 0, seed, streams::DATASET);
        let mut env = scenario.environment(pop);
        let mut rng = seeded_rng(seed, 99);
        let mut log = OutcomeLog::default();
        for (d, day) in ds.days.iter().enumerate() {
            let mut outcomes = Vec::new();
            let mut rewards = 0.0;
            let mut neutral = 0.0;
            env.reset(day.clone()).unwrap();
            for n in 0..day.n_slots() {
                let a = EnvAction { price: rng.random_range(-1.0..11.0), quantity: rng.random_range(-10.0..320.0) };
                let step = env.step(a).unwrap();
                let offers = day.offers_at(n);
                let again = recompute_profit(&step.outcome, &offers, day.event.slot_hours);
                assert!((again - step.reward).abs() <= 1e-9 * step.reward.abs().max(1.0));
                rewards += step.reward;
                log.rows.push(OutcomeRow::from_step(d, day, n, &step.outcome));
                outcomes.push(step.outcome);
            }
            assert!((event_profit(&outcomes) - rewards).abs() <= 1e-9 * rewards.abs().max(1.0));

            env.reset(day.clone()).unwrap();
            for _ in 0..day.n_slots() {
                neutral += env.step(EnvAction { price: 0.0, quantity: 0.0 }).unwrap().reward;
            }
            assert_eq!(neutral, 0.0);
        }
        let m = compute_metrics(&log).unwrap();
        let by_hand: Vec<f64> = (0..3)
            .map(|e| log.rows.iter().filter(|r| r.episode == e).map(|r| r.profit).sum())
            .collect();
        assert_eq!(m.cumulative_profit, by_hand);
        assert_eq!(raw_csv_metrics(&log), (m.success_rate, m.rate_tight, m.rate_loose, m.win_rate));
    }
}

/// Success, tight, loose and win rates read straight from the CSV text.
fn raw_csv_metrics(log: &OutcomeLog) -> (f64, f64, f64, f64) {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("outcomes.csv");
    log.write_csv(&path).unwrap();
    let mut rdr = csv::Reader::from_path(&path).unwrap();
    let headers = rdr.headers().unwrap().clone();
    let col = |name: &str| headers.iter().position(|h| h == name).unwrap();
    let (xi, profit, deal) = (col("execution_rate"), col("profit"), col("deal"));
    let (mut n, mut ok, mut tight, mut loose, mut deals) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for rec in rdr.records() {
        let rec = rec.unwrap();
        n += 1.0;
        let x: f64 = rec[xi].parse().unwrap();
        if rec[profit].parse::<f64>().unwrap() > 0.0 {
            ok += 1.0;
        }
        if x.is_finite() && (0.8..=1.2).contains(&x) {
            tight += 1.0;
        }
        if x.is_finite() && (0.6..=1.5).contains(&x) {
            loose += 1.0;
        }
        if &rec[deal] == "1" {
            deals += 1.0;
        }
    }
    (ok / n, tight / n, loose / n, deals / n)
}
