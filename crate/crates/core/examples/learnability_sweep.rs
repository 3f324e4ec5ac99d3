//! Ratio versus training fraction on the desk preset.
//!
//! cargo run --release --example learnability_sweep [repetitions] [quota] [epsilon] [generator.json]
//!
//! quota is one of RANDOM, MAXMIN, LEAST_DEGREE.

use propmatch::harness::{self, ExperimentConfig, ExperimentKind};
use propmatch::QuotaRule;

fn main() -> propmatch::Result<()> {
    let mut cfg = ExperimentConfig::new(ExperimentKind::Learnability);
    cfg.repetitions = std::env::args()
        .nth(1)
        .map_or(20, |r| r.parse().expect("repetitions must be an integer"));
    if let Some(q) = std::env::args().nth(2) {
        cfg.quota = serde_json::from_str::<QuotaRule>(&format!("{q:?}")).expect("unknown quota rule");
    }
    if let Some(e) = std::env::args().nth(3) {
        cfg.epsilon = e.parse().expect("epsilon must be a number");
    }
    if let Some(path) = std::env::args().nth(4) {
        cfg.generator = propmatch::GeneratorConfig::load(path)?;
    }
    let rows = harness::run_experiment(&cfg, num_jobs())?;

    let points = harness::summarize(&rows);
    println!("{:<10} {:>6} {:>8} {:>8} {:>8}", "algorithm", "sigma", "mean", "min", "max");
    for p in &points {
        println!(
            "{:<10} {:>6} {:>8.4} {:>8.4} {:>8.4}",
            p.series, p.x, p.mean, p.min, p.max
        );
    }
    let pw: Vec<&harness::SeriesPoint> = points.iter().filter(|p| p.series == "PW").collect();
    let rho = harness::spearman(
        &pw.iter().map(|p| p.x).collect::<Vec<_>>(),
        &pw.iter().map(|p| p.mean).collect::<Vec<_>>(),
    );
    println!("Spearman(sigma, PW mean) = {rho:.3}");

    let dir = std::env::temp_dir();
    harness::report(&rows, dir.join("learnability.csv"), dir.join("learnability.svg"))?;
    println!("wrote {}", dir.join("learnability.svg").display());
    Ok(())
}

fn num_jobs() -> usize {
    std::thread::available_parallelism().map_or(1, |n| n.get())
}
