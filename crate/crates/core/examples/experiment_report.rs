//! Run an experiment config and write its CSV and SVG report.
//!
//! cargo run --release --example experiment_report [config.json] [out_dir]
//!
//! Without a config, a short daily-order sweep is run.

use std::path::PathBuf;

use propmatch::harness::{self, ExperimentConfig, ExperimentKind};

fn main() -> propmatch::Result<()> {
    let mut args = std::env::args().skip(1);
    let cfg = match args.next() {
        Some(path) => ExperimentConfig::load(path)?,
        None => {
            let mut cfg = ExperimentConfig::new(ExperimentKind::DailyOrder);
            cfg.days = 7;
            cfg.sigmas = vec![0.01, 0.1, 0.4, 1.0];
            cfg.repetitions = 2;
            cfg
        }
    };
    let out = args.next().map_or_else(std::env::temp_dir, PathBuf::from);
    let jobs = std::thread::available_parallelism().map_or(1, |n| n.get());
    let rows = harness::run_experiment(&cfg, jobs)?;

    let stem = cfg.kind.tag().to_lowercase();
    let (csv, svg) = (out.join(format!("{stem}.csv")), out.join(format!("{stem}.svg")));
    harness::report(&rows, &csv, &svg)?;
    for p in harness::summarize(&rows) {
        println!("{:<12} x = {:<5} mean {:.4}  [{:.4}, {:.4}]", p.series, p.x, p.mean, p.min, p.max);
    }
    println!("{} rows -> {} and {}", rows.len(), csv.display(), svg.display());
    Ok(())
}
