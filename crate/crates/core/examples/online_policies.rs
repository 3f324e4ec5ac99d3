//! The four online policies on one desk instance, in every arrival order.
//!
//! cargo run --release --example online_policies

use propmatch::genlab::{self, ArrivalOrder, GeneratorConfig};
use propmatch::online::{self, Evaluator};
use propmatch::rng;
use propmatch::weights;

fn main() -> propmatch::Result<()> {
    let cfg = GeneratorConfig::desk();
    let inst = genlab::apply_quota(&genlab::gen_synthetic(&cfg)?, cfg.quota, cfg.seed)?;
    println!(
        "{} advertisers, {} types, {} edges, {} units",
        inst.n(),
        inst.num_types(),
        inst.num_edges(),
        inst.total_supply()
    );
    let w = weights::compute_weights(&inst, 0.1, weights::DEFAULT_MAX_T_DOUBLINGS)?;
    let perm = online::random_priority(inst.n(), &mut rng::substream(cfg.seed, &[rng::stream::RANKING]));
    let ev = Evaluator::new(&inst);

    println!("{:<8} {:>8} {:>8} {:>10} {:>8}", "order", "PW", "IPW", "WATERFILL", "RANKING");
    for order in ArrivalOrder::ALL {
        let s = genlab::gen_arrival(&inst, order, 42);
        println!(
            "{:<8} {:>8.4} {:>8.4} {:>10.4} {:>8.4}",
            order.tag(),
            ev.run_pw(&s, &w)?.ratio,
            ev.run_ipw(&s, &w)?.ratio,
            ev.run_waterfill(&s)?.ratio,
            ev.run_ranking(&s, &perm)?.ratio
        );
    }
    Ok(())
}
