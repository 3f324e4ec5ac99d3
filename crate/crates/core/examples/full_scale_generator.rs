//! Generate the full-scale synthetic instance and report its size.
//!
//! cargo run --release --example full_scale_generator [seed]

use propmatch::genlab::{self, GeneratorConfig};
use propmatch::optimum;

fn main() -> propmatch::Result<()> {
    let mut cfg = GeneratorConfig::full_scale();
    if let Some(seed) = std::env::args().nth(1) {
        cfg.seed = seed.parse().expect("seed must be an integer");
    }
    let inst = genlab::apply_quota(&genlab::gen_synthetic(&cfg)?, cfg.quota, cfg.seed)?;

    let targets = [
        ("advertisers", inst.n() as f64, 4500.0),
        ("types", inst.num_types() as f64, 85.0),
        ("edges", inst.num_edges() as f64, 8000.0),
        ("supply", inst.total_supply() as f64, 1.8e6),
    ];
    for (name, got, want) in targets {
        println!("{name:<12} {got:>10}  target {want:>9}  ({:+.1}%)", (got / want - 1.0) * 100.0);
    }
    println!("closure violations: {}", genlab::closure_violations(&inst).len());

    let opt = optimum::opt_value(&inst);
    println!("OPT {opt} vs supply {}", inst.total_supply());
    Ok(())
}
