//! Weights learned on earlier days, applied to later ones.
//!
//! cargo run --release --example robustness_days [drift] [repetitions]

use propmatch::harness::{self, ExperimentConfig, ExperimentKind};

fn main() -> propmatch::Result<()> {
    let mut cfg = ExperimentConfig::new(ExperimentKind::Robustness);
    let mut args = std::env::args().skip(1);
    if let Some(d) = args.next() {
        cfg.drift = d.parse().expect("drift must be a number");
    }
    cfg.repetitions = args.next().map_or(4, |r| r.parse().expect("repetitions must be an integer"));
    let jobs = std::thread::available_parallelism().map_or(1, |n| n.get());
    let rows = harness::run_experiment(&cfg, jobs)?;

    let mut days: Vec<u32> = rows.iter().filter_map(|r| r.day).collect();
    days.dedup();
    for d in days {
        let day_rows: Vec<_> = rows.iter().filter(|r| r.day == Some(d)).collect();
        let eta = day_rows[0].eta_prev_day.unwrap_or(f64::NAN);
        let eta_n = day_rows[0].eta_prev_day_normalized.unwrap_or(f64::NAN);
        println!("day {d}: eta {eta:.0} (normalized {eta_n:.3})");
        for p in harness::summarize(&rows).iter().filter(|p| p.x == f64::from(d)) {
            println!("  {:<10} {:.4}", p.series, p.mean);
        }
    }
    let dir = std::env::temp_dir();
    harness::report(&rows, dir.join("robustness.csv"), dir.join("robustness.svg"))?;
    Ok(())
}
