//! Learn weights from the first tenth of a random-order stream, then run
//! the rest of it with them.
//!
//! cargo run --release --example learn_then_apply [seeds]

use propmatch::genlab::{self, ArrivalOrder, GeneratorConfig};
use propmatch::online::{Evaluator, LearnConfig, LearnMode, TailPolicy};

fn main() -> propmatch::Result<()> {
    let seeds: u64 = std::env::args()
        .nth(1)
        .map_or(5, |s| s.parse().expect("seed count must be an integer"));
    let cfg = GeneratorConfig::random_order();
    let inst = genlab::apply_quota(&genlab::gen_synthetic(&cfg)?, cfg.quota, cfg.seed)?;
    let ev = Evaluator::new(&inst);
    println!("n = {}, m = {}, OPT = {}", inst.n(), inst.total_supply(), ev.opt());

    let learn = LearnConfig::new(0.1, 0.1, LearnMode::DiscardSample, TailPolicy::Pw);
    for seed in 0..seeds {
        let stream = genlab::gen_arrival(&inst, ArrivalOrder::Random, seed);
        let out = ev.learn_then_apply(&stream, &learn)?;
        let meta = &out.result.meta;
        let post_opt = meta.post_sample_opt.expect("discard mode records the tail optimum");
        println!(
            "seed {seed}: sample {} units, full ratio {:.4}, post-sample ratio {:.4}, replay ratio {:.4}",
            out.sample_len,
            out.result.ratio,
            out.result.matched / post_opt,
            meta.replay_matched.unwrap_or(f64::NAN) / ev.opt()
        );
    }
    Ok(())
}
