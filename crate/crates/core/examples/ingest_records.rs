//! Build per-day instances from tab-separated advertising records.
//!
//! cargo run --example ingest_records [records.tsv] [top_k]
//!
//! Without arguments a small inline log is used.

use propmatch::genlab::{self, QuotaRule};

const SAMPLE: &str = "\
0\tacme\t1\tshoes running\t0.40\t120\t3
0\tacme\t2\tshoes running\t0.35\t30\t0
0\tbolt\t1\tshoes\t0.50\t200\t9
0\tcrux\t1\trunning trail shoes\t0.20\t15\t1
0\tdyna\t1\thats\t0.10\t5\t0
1\tacme\t1\tshoes running\t0.42\t90\t2
1\tbolt\t1\tshoes\t0.55\t260\t7
1\tcrux\t1\ttrail\t0.25\t40\t2
";

fn main() -> propmatch::Result<()> {
    let mut args = std::env::args().skip(1);
    let records = match args.next() {
        Some(path) => genlab::load_records(path)?,
        None => genlab::parse_records(SAMPLE)?,
    };
    let top_k: usize = args.next().map_or(3, |k| k.parse().expect("top_k must be an integer"));

    println!("popular keyphrases: {:?}", genlab::top_keyphrases(&records, top_k));
    let days = genlab::ingest_records(&records, top_k)?;
    for (day, inst) in &days {
        let inst = genlab::apply_quota(inst, QuotaRule::LeastDegree, 0)?;
        println!("day {day}:");
        for t in inst.impressions() {
            let nbrs: Vec<&str> = t.neighbors.iter().map(|&a| inst.advertisers()[a].id.as_str()).collect();
            println!("  type {:<16} supply {:>4}  -> {nbrs:?}", t.id, t.supply);
        }
        for a in inst.advertisers() {
            println!("  {:<6} capacity {}", a.id, a.capacity);
        }
    }
    Ok(())
}
