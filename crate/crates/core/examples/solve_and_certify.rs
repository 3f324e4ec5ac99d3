//! Exact optimum of a small instance and the vertex cut that proves it.
//!
//! cargo run --example solve_and_certify [instance.json]

use propmatch::instance::load_instance;
use propmatch::optimum;
use propmatch::Instance;

fn main() -> propmatch::Result<()> {
    let inst = match std::env::args().nth(1) {
        Some(path) => load_instance(path)?,
        None => Instance::builder()
            .advertiser("a1", 2.0)
            .advertiser("a2", 1.0)
            .advertiser("a3", 3.0)
            .impression("i1", 2, &["a1", "a2"])
            .impression("i2", 1, &["a2"])
            .impression("i3", 4, &["a2", "a3"])
            .build()?,
    };

    let m = optimum::max_matching(&inst);
    println!("OPT = {}", m.opt);
    for (i, t) in inst.impressions().iter().enumerate() {
        for (pos, &a) in t.neighbors.iter().enumerate() {
            let x = m.flow[inst.edge_offset(i) + pos];
            if x > 0.0 {
                println!("  {} -> {}: {x}", t.id, inst.advertisers()[a].id);
            }
        }
    }

    let cut = optimum::min_vertex_cut(&inst);
    println!("cut A0 = {:?}", cut.a0);
    println!("cut A1 = {:?}", cut.a1);
    println!("supply(N(A0)) + capacity(A1) = {}", cut.value);
    Ok(())
}
