#![allow(dead_code)]

use rand::Rng;

use propmatch::rng::Rng as ChaRng;
use propmatch::{Instance, InstanceBuilder};

/// Random bipartite instance. Every type gets at least one neighbor.
pub fn random_instance(
    rng: &mut ChaRng,
    n: usize,
    types: usize,
    max_supply: u64,
    max_cap: u64,
    integer_caps: bool,
) -> Instance {
    let mut b = InstanceBuilder::default();
    for a in 0..n {
        let cap = if integer_caps {
            rng.random_range(0..=max_cap) as f64
        } else {
            rng.random_range(0.0..=max_cap as f64)
        };
        b.add_advertiser(format!("a{a:02}"), cap);
    }
    for i in 0..types {
        let mut nbrs: Vec<String> = (0..n)
            .filter(|_| rng.random_bool(0.4))
            .map(|a| format!("a{a:02}"))
            .collect();
        if nbrs.is_empty() {
            nbrs.push(format!("a{:02}", rng.random_range(0..n)));
        }
        b.add_impression(format!("i{i:02}"), rng.random_range(0..=max_supply), nbrs);
    }
    b.build().expect("random instance is valid")
}

/// Random instance whose total supply stays within `supply_budget`.
pub fn small_instance(rng: &mut ChaRng, supply_budget: u64, max_n: usize) -> Instance {
    let n = rng.random_range(1..=max_n);
    let types = rng.random_range(1..=4);
    let mut b = InstanceBuilder::default();
    for a in 0..n {
        b.add_advertiser(format!("a{a}"), rng.random_range(0..=4) as f64);
    }
    let mut left = supply_budget;
    for i in 0..types {
        let s = rng.random_range(0..=left.min(5));
        left -= s;
        let mut nbrs: Vec<String> = (0..n).filter(|_| rng.random_bool(0.5)).map(|a| format!("a{a}")).collect();
        if nbrs.is_empty() {
            nbrs.push(format!("a{}", rng.random_range(0..n)));
        }
        b.add_impression(format!("i{i}"), s, nbrs);
    }
    b.build().expect("small instance is valid")
}

pub fn t1() -> Instance {
    Instance::builder()
        .advertiser("a1", 2.0)
        .advertiser("a2", 1.0)
        .impression("i1", 2, &["a1", "a2"])
        .impression("i2", 1, &["a2"])
        .build()
        .unwrap()
}

/// Returns `inst` with one supply or capacity perturbed per `drift` step.
pub fn perturb(rng: &mut ChaRng, inst: &Instance, drift: f64) -> Instance {
    let supplies: Vec<u64> = inst
        .supplies()
        .iter()
        .map(|&s| {
            if rng.random_bool(drift) {
                rng.random_range(0..=2 * s.max(1))
            } else {
                s
            }
        })
        .collect();
    let caps: Vec<f64> = inst
        .capacities()
        .iter()
        .map(|&c| {
            if rng.random_bool(drift) {
                rng.random_range(0.0..=2.0 * c.max(1.0))
            } else {
                c
            }
        })
        .collect();
    inst.with_supplies(&supplies).unwrap().with_capacities(&caps).unwrap()
}
