//! Worst ratio over the five arrival orders.
//!
//! cargo run --release --example adversarial_orders [repetitions]

use std::collections::BTreeMap;

use propmatch::harness::{self, ExperimentConfig, ExperimentKind};

fn main() -> propmatch::Result<()> {
    let mut cfg = ExperimentConfig::new(ExperimentKind::Adversarial);
    cfg.repetitions = std::env::args()
        .nth(1)
        .map_or(4, |r| r.parse().expect("repetitions must be an integer"));
    cfg.sigmas = vec![0.01, 0.1, 1.0];
    let jobs = std::thread::available_parallelism().map_or(1, |n| n.get());
    let rows = harness::run_experiment(&cfg, jobs)?;

    // mean ratio per (algorithm, order) at sigma = 0.1
    let mut cells: BTreeMap<(String, String), Vec<f64>> = BTreeMap::new();
    for r in rows.iter().filter(|r| r.sigma == Some(0.1)) {
        cells.entry((r.algorithm.clone(), r.order.clone())).or_default().push(r.ratio);
    }
    println!("sigma = 0.1");
    for ((alg, order), v) in &cells {
        println!("{alg:<10} {order:<8} {:.4}", v.iter().sum::<f64>() / v.len() as f64);
    }

    println!("\nworst order, mean over seeds");
    for p in harness::summarize(&rows) {
        println!("{:<10} sigma {:<5} {:.4}", p.series, p.x, p.mean);
    }
    Ok(())
}
