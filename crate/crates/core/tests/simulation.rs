//! Statistical properties of the click simulator and what the data pipeline
//! recovers from its logs.

use std::collections::BTreeMap;

use lwr_core::clicksim::{generate_world, simulate_logs, Bucket, ImpressionEvent, WorldConfig};
use lwr_core::pipeline::{build_lwr, estimate_bias, BiasConfig, LwrConfig, RelevanceType};

fn randomized_world(sessions: usize, adjust: impl FnOnce(&mut WorldConfig)) -> (WorldConfig, Vec<ImpressionEvent>) {
    let mut config = WorldConfig {
        randomized_fraction: 1.0,
        seed: 9,
        ..WorldConfig::default()
    };
    adjust(&mut config);
    let world = generate_world(&config).unwrap();
    let events = simulate_logs(&world, sessions, &config).unwrap().events;
    (config, events)
}

#[test]
fn randomized_exposure_is_uniform_over_positions() {
    let (config, events) = randomized_world(50_000, |_| {});
    let k = config.page_size;
    let mut counts: BTreeMap<(u32, u32), Vec<u64>> = BTreeMap::new();
    for e in &events {
        counts.entry((e.query_id.0, e.product_id.0)).or_insert_with(|| vec![0; k])[e.position as usize - 1] += 1;
    }
    // Pooled chi-square over every (query, product) with enough exposures.
    let (mut stat, mut dof) = (0.0, 0.0);
    for c in counts.values() {
        let n: u64 = c.iter().sum();
        if n < 5 * k as u64 {
            continue;
        }
        let expected = n as f64 / k as f64;
        stat += c.iter().map(|&o| (o as f64 - expected).powi(2) / expected).sum::<f64>();
        dof += (k - 1) as f64;
    }
    assert!(dof > 1000.0);
    // Upper 1% point by the normal approximation, accurate for large dof.
    let critical = dof + 2.326 * (2.0 * dof).sqrt();
    assert!(stat < critical, "chi-square {stat:.1} over {dof} dof exceeds {critical:.1}");
}

#[test]
fn randomized_click_rate_tracks_the_bias_curve() {
    let (config, events) = randomized_world(50_000, |_| {});
    let k = config.page_size;
    let mut clicks = vec![0.0; k];
    let mut shown = vec![0.0; k];
    for e in events.iter().filter(|e| e.bucket == Bucket::Randomized) {
        shown[e.position as usize - 1] += 1.0;
        clicks[e.position as usize - 1] += f64::from(u8::from(e.clicked));
    }
    let ctr: Vec<f64> = clicks.iter().zip(&shown).map(|(c, n)| c / n).collect();
    let curve = &config.bias_curve;
    let mean = |xs: &[f64]| xs.iter().sum::<f64>() / xs.len() as f64;
    let (mx, my) = (mean(&ctr), mean(curve));
    let cov: f64 = ctr.iter().zip(curve).map(|(x, y)| (x - mx) * (y - my)).sum();
    let vx: f64 = ctr.iter().map(|x| (x - mx).powi(2)).sum();
    let vy: f64 = curve.iter().map(|y| (y - my).powi(2)).sum();
    let r = cov / (vx * vy).sqrt();
    assert!(r >= 0.99, "correlation {r:.4}, ctr {ctr:?}");
}

#[test]
fn bias_free_logs_give_a_flat_table() {
    // Binomial noise on a ratio of two position CTRs from 10k impressions
    // each is about 3% at the default click rates, so the ±3% bound is
    // checked on a world where clicks are common.
    let (_, events) = randomized_world(10_000, |c| {
        c.bias_curve = vec![1.0; 10];
        c.relevance_click_rates = [0.6, 0.8, 0.9];
    });
    assert_eq!(events.len(), 100_000);
    let table = estimate_bias(&events, &BiasConfig::default()).unwrap();
    for (i, r) in table.relative.iter().enumerate() {
        assert!((r - 1.0).abs() <= 0.03, "position {}: {r:.4}", i + 1);
    }
}

#[test]
fn level_wise_types_follow_true_relevance() {
    let config = WorldConfig {
        seed: 5,
        ..WorldConfig::default()
    };
    let world = generate_world(&config).unwrap();
    let events = simulate_logs(&world, 60_000, &config).unwrap().events;
    let table = estimate_bias(&events, &BiasConfig::default()).unwrap();
    let lwr_config = LwrConfig {
        seed: 5,
        ..LwrConfig::default()
    };
    let out = build_lwr(&events, &table, &world, &lwr_config).unwrap();
    let again = build_lwr(&events, &table, &world, &lwr_config).unwrap();
    assert_eq!(out, again);

    let mut grades: BTreeMap<RelevanceType, Vec<f64>> = BTreeMap::new();
    for r in &out.records {
        let g = world.grade(r.query_id, r.product_id).unwrap();
        grades.entry(r.rtype).or_default().push(f64::from(g));
    }
    let mean = |t| {
        let v = &grades[&t];
        v.iter().sum::<f64>() / v.len() as f64
    };
    assert!(mean(RelevanceType::StrongRelevant) > mean(RelevanceType::WeakRelevant));
    assert!(mean(RelevanceType::WeakRelevant) > mean(RelevanceType::WeakIrrelevant));
    assert!(mean(RelevanceType::WeakIrrelevant) >= mean(RelevanceType::StrongIrrelevant));
}
