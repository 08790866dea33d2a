//! Runs every strategy on the bundled tables and prints suite accuracies.
//!
//! `cargo run --release -p p3s --example compare -- [seeds] [outer_iters]`

use std::time::Instant;

use p3s::datasets;
use p3s::search::{run_method, Method, SearchConfig};
use p3s::Table;

fn main() {
    let mut args = std::env::args().skip(1);
    let seeds: u64 = args.next().and_then(|s| s.parse().ok()).unwrap_or(3);
    let outer: usize = args.next().and_then(|s| s.parse().ok()).unwrap_or(50);
    let reward: Vec<p3s::LearnerKind> = args
        .next()
        .map(|s| s.split(',').map(|k| k.parse().expect("learner")).collect())
        .unwrap_or_else(|| SearchConfig::default().reward_learners);
    let tables: Vec<(&str, Table)> = vec![
        ("tic-tac-toe", datasets::tic_tac_toe()),
        ("car-style", datasets::car_style()),
        ("planted-mixed", datasets::planted_mixed(600, 7)),
        ("dresses-shaped", datasets::dresses_shaped(0)),
    ];
    for (name, table) in &tables {
        for method in Method::ALL {
            let mut scores = Vec::new();
            let t0 = Instant::now();
            for seed in 0..seeds {
                let config = SearchConfig {
                    seed,
                    outer_iters: outer,
                    reward_learners: reward.clone(),
                    ..SearchConfig::default()
                };
                let r = run_method(method, table, &config).expect("run");
                scores.push((r.suite.mean_accuracy, r.best.score));
            }
            let per_run = t0.elapsed().as_secs_f64() / seeds as f64;
            let fmt: Vec<String> = scores
                .iter()
                .map(|(s, b)| format!("{:.4}/{:.4}", s, b))
                .collect();
            println!(
                "{name:>15} {method:>15} {per_run:7.2}s  suite/reward: {}",
                fmt.join(" ")
            );
        }
    }
}
