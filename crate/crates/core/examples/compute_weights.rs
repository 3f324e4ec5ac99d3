//! Proportional weights from the decrement solver and the allocation they
//! induce.
//!
//! cargo run --example compute_weights [epsilon]

use propmatch::weights::{self, evaluate_offline};
use propmatch::Instance;

fn main() -> propmatch::Result<()> {
    let epsilon: f64 = std::env::args()
        .nth(1)
        .map_or(0.1, |e| e.parse().expect("epsilon must be a number"));
    let inst = Instance::builder()
        .advertiser("a1", 2.0)
        .advertiser("a2", 1.0)
        .impression("i1", 2, &["a1", "a2"])
        .impression("i2", 1, &["a2"])
        .build()?;

    let sol = weights::solve_weights(&inst, epsilon, weights::DEFAULT_MAX_T_DOUBLINGS)?;
    println!("T = {}, {} decrements, {} phase(s)", sol.t, sol.updates, sol.phases);
    let exps = sol.weights.exponents().expect("solver weights are discrete");
    for (a, adv) in inst.advertisers().iter().enumerate() {
        println!("  {}: k = {}, alpha = {:.4e}", adv.id, exps[a], sol.weights.values()[a]);
    }

    let off = evaluate_offline(&inst, &sol.weights)?;
    println!("allocation {:?}", off.alloc);
    println!("R(alpha) = {:.4} of OPT = {} (target {:.4})", off.value, sol.opt, (1.0 - epsilon) * sol.opt);

    let uniform = evaluate_offline(&inst, &weights::WeightVector::uniform(inst.n()))?;
    println!("uniform weights would give {:.4}", uniform.value);
    Ok(())
}
