//! Unit events per second for each online policy on the n = 5, m = 50 000
//! preset.
//!
//! cargo run --release --example throughput

use std::time::Instant;

use propmatch::genlab::{self, ArrivalOrder, GeneratorConfig};
use propmatch::online::{self, simulate, OnlinePolicy};
use propmatch::rng;
use propmatch::weights;

fn main() -> propmatch::Result<()> {
    let cfg = GeneratorConfig::random_order();
    let inst = genlab::apply_quota(&genlab::gen_synthetic(&cfg)?, cfg.quota, cfg.seed)?;
    let stream = genlab::gen_arrival(&inst, ArrivalOrder::Random, 1);
    let w = weights::compute_weights(&inst, 0.1, weights::DEFAULT_MAX_T_DOUBLINGS)?;
    let perm = online::random_priority(inst.n(), &mut rng::substream(1, &[rng::stream::RANKING]));

    for policy in [
        OnlinePolicy::Pw(w.clone()),
        OnlinePolicy::Ipw(w),
        OnlinePolicy::WaterFill,
        OnlinePolicy::Ranking(perm),
    ] {
        let reps = 20;
        let started = Instant::now();
        let mut matched = 0.0;
        for _ in 0..reps {
            matched = simulate(&inst, stream.events(), &policy, false)?.matched;
        }
        let secs = started.elapsed().as_secs_f64();
        let rate = (reps * stream.len()) as f64 / secs;
        println!("{:<10} {:>6.2e} events/s  matched {matched:.1}", policy.tag(), rate);
    }
    Ok(())
}
