//! Offline optimum of the fractional matching LP.
//!
//! The LP is solved as a maximum flow on the layered network
//! `source -> types -> advertisers -> sink`, with source arcs of capacity
//! `C_i`, sink arcs of capacity `C_a` and uncapacitated middle arcs. The
//! residual network after max flow also yields a vertex-cut certificate
//! `(A0, A1)` with `supply(N(A0)) + sum_{A1} C_a = OPT`.

use std::collections::{BTreeSet, VecDeque};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::instance::Instance;

/// Augmentations smaller than this are dropped.
const AUGMENT_FLOOR: f64 = 1e-12;

/// Residual capacity above which an arc is traversable.
const RESIDUAL_EPS: f64 = 1e-9;

#[derive(Debug, Clone, Copy)]
struct Arc {
    to: usize,
    cap: f64,
    flow: f64,
}

impl Arc {
    #[inline]
    fn residual(&self) -> f64 {
        self.cap - self.flow
    }
}

/// Blocking-flow max flow over `f64` capacities.
#[derive(Debug, Clone)]
struct FlowNetwork {
    arcs: Vec<Arc>,
    adj: Vec<Vec<usize>>,
    level: Vec<i32>,
    cursor: Vec<usize>,
}

impl FlowNetwork {
    fn new(nodes: usize) -> Self {
        FlowNetwork {
            arcs: Vec::new(),
            adj: vec![Vec::new(); nodes],
            level: vec![-1; nodes],
            cursor: vec![0; nodes],
        }
    }

    /// Returns the id of the forward arc; its reverse is `id ^ 1`.
    fn add_arc(&mut self, from: usize, to: usize, cap: f64) -> usize {
        let id = self.arcs.len();
        self.arcs.push(Arc { to, cap, flow: 0.0 });
        self.arcs.push(Arc {
            to: from,
            cap: 0.0,
            flow: 0.0,
        });
        self.adj[from].push(id);
        self.adj[to].push(id + 1);
        id
    }

    fn bfs(&mut self, s: usize, t: usize) -> bool {
        self.level.iter_mut().for_each(|l| *l = -1);
        self.level[s] = 0;
        let mut queue = VecDeque::from([s]);
        while let Some(v) = queue.pop_front() {
            for &e in &self.adj[v] {
                let arc = self.arcs[e];
                if self.level[arc.to] < 0 && arc.residual() > AUGMENT_FLOOR {
                    self.level[arc.to] = self.level[v] + 1;
                    queue.push_back(arc.to);
                }
            }
        }
        self.level[t] >= 0
    }

    fn dfs(&mut self, v: usize, t: usize, pushed: f64) -> f64 {
        if v == t {
            return pushed;
        }
        while self.cursor[v] < self.adj[v].len() {
            let e = self.adj[v][self.cursor[v]];
            let arc = self.arcs[e];
            if self.level[arc.to] == self.level[v] + 1 && arc.residual() > AUGMENT_FLOOR {
                let got = self.dfs(arc.to, t, pushed.min(arc.residual()));
                if got > AUGMENT_FLOOR {
                    self.arcs[e].flow += got;
                    self.arcs[e ^ 1].flow -= got;
                    return got;
                }
            }
            self.cursor[v] += 1;
        }
        0.0
    }

    fn max_flow(&mut self, s: usize, t: usize) -> f64 {
        let mut total = 0.0;
        while self.bfs(s, t) {
            self.cursor.iter_mut().for_each(|c| *c = 0);
            loop {
                let f = self.dfs(s, t, f64::INFINITY);
                if f <= AUGMENT_FLOOR {
                    break;
                }
                total += f;
            }
        }
        total
    }

    /// Nodes that can reach `t` through arcs with positive residual.
    fn reaches_sink(&self, t: usize) -> Vec<bool> {
        let mut seen = vec![false; self.adj.len()];
        seen[t] = true;
        let mut queue = VecDeque::from([t]);
        while let Some(v) = queue.pop_front() {
            // an arc u->v with residual lets u reach v; scan v's reverse arcs
            for &e in &self.adj[v] {
                let back = self.arcs[e ^ 1];
                let u = self.arcs[e].to;
                if !seen[u] && back.residual() > RESIDUAL_EPS {
                    seen[u] = true;
                    queue.push_back(u);
                }
            }
        }
        seen
    }
}

struct Layered {
    net: FlowNetwork,
    source: usize,
    sink: usize,
    /// Forward arc id of each edge in the instance's flat edge numbering.
    middle: Vec<usize>,
    adv_node: usize,
}

fn build_network(inst: &Instance) -> Layered {
    let types = inst.num_types();
    let n = inst.n();
    let source = types + n;
    let sink = source + 1;
    let adv_node = types;
    let mut net = FlowNetwork::new(types + n + 2);
    let unbounded = inst.total_supply() as f64 + 1.0;
    let mut middle = Vec::with_capacity(inst.num_edges());
    for (i, t) in inst.impressions().iter().enumerate() {
        if t.supply > 0 {
            net.add_arc(source, i, t.supply as f64);
        }
        for &a in &t.neighbors {
            middle.push(net.add_arc(i, adv_node + a, unbounded));
        }
    }
    for a in 0..n {
        let c = inst.capacity(a);
        if c > 0.0 {
            net.add_arc(adv_node + a, sink, c);
        }
    }
    Layered {
        net,
        source,
        sink,
        middle,
        adv_node,
    }
}

/// Optimum value and a flow realizing it.
#[derive(Debug, Clone, PartialEq)]
pub struct MaxMatching {
    pub opt: f64,
    /// Flow on each edge, in the instance's flat edge numbering.
    pub flow: Vec<f64>,
}

pub fn max_matching(inst: &Instance) -> MaxMatching {
    let mut layered = build_network(inst);
    let opt = layered.net.max_flow(layered.source, layered.sink);
    let flow = layered
        .middle
        .iter()
        .map(|&e| layered.net.arcs[e].flow.max(0.0))
        .collect();
    MaxMatching { opt, flow }
}

/// Shortcut for the optimum value alone.
pub fn opt_value(inst: &Instance) -> f64 {
    max_matching(inst).opt
}

/// Advertiser partition certifying the optimum.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CutCertificate {
    #[serde(rename = "A0")]
    pub a0: BTreeSet<String>,
    #[serde(rename = "A1")]
    pub a1: BTreeSet<String>,
    pub value: f64,
}

/// `supply(N(A0)) + sum_{a in A1} C_a` for the partition given by `in_a0`.
///
/// Every partition is an upper bound on OPT.
pub fn partition_value(inst: &Instance, in_a0: &[bool]) -> f64 {
    let covered: u64 = inst
        .impressions()
        .iter()
        .filter(|t| t.neighbors.iter().any(|&a| in_a0[a]))
        .map(|t| t.supply)
        .sum();
    let a1_cap: f64 = (0..inst.n())
        .filter(|&a| !in_a0[a])
        .map(|a| inst.capacity(a))
        .sum();
    covered as f64 + a1_cap
}

/// Minimum vertex cut from residual reachability after max flow.
///
/// Advertisers that can still reach the sink form `A0`; everything else is
/// `A1`. This picks the cut closest to the sink, so saturated advertisers
/// land in `A1`.
pub fn min_vertex_cut(inst: &Instance) -> CutCertificate {
    let mut layered = build_network(inst);
    layered.net.max_flow(layered.source, layered.sink);
    let reach = layered.net.reaches_sink(layered.sink);
    let in_a0: Vec<bool> = (0..inst.n())
        .map(|a| reach[layered.adv_node + a])
        .collect();
    let value = partition_value(inst, &in_a0);
    let mut a0 = BTreeSet::new();
    let mut a1 = BTreeSet::new();
    for (adv, &zero) in inst.advertisers().iter().zip(&in_a0) {
        if zero {
            a0.insert(adv.id.clone());
        } else {
            a1.insert(adv.id.clone());
        }
    }
    CutCertificate { a0, a1, value }
}

/// Largest total supply accepted by [`brute_force_opt`].
pub const BRUTE_FORCE_MAX_SUPPLY: u64 = 12;
/// Largest advertiser count accepted by [`brute_force_opt`].
pub const BRUTE_FORCE_MAX_ADVERTISERS: usize = 6;

/// Exhaustive search over integral unit assignments.
///
/// Capacities are rounded down, so this is only an oracle for
/// integer-capacity instances.
pub fn brute_force_opt(inst: &Instance) -> Result<f64> {
    let m = inst.total_supply();
    if m > BRUTE_FORCE_MAX_SUPPLY || inst.n() > BRUTE_FORCE_MAX_ADVERTISERS {
        return Err(Error::TooLarge(format!(
            "total supply {m} (max {BRUTE_FORCE_MAX_SUPPLY}), advertisers {} (max {BRUTE_FORCE_MAX_ADVERTISERS})",
            inst.n()
        )));
    }
    let mut residual: Vec<u64> = (0..inst.n())
        .map(|a| inst.capacity(a).floor() as u64)
        .collect();
    Ok(assign_type(inst, 0, &mut residual) as f64)
}

fn assign_type(inst: &Instance, i: usize, residual: &mut [u64]) -> u64 {
    if i == inst.num_types() {
        return 0;
    }
    let t = &inst.impressions()[i];
    assign_units(inst, i, &t.neighbors, t.supply, residual)
}

/// Spread up to `left` units of type `i` over `neighbors`, then recurse.
fn assign_units(
    inst: &Instance,
    i: usize,
    neighbors: &[usize],
    left: u64,
    residual: &mut [u64],
) -> u64 {
    let Some((&a, rest)) = neighbors.split_first() else {
        return assign_type(inst, i + 1, residual);
    };
    let most = left.min(residual[a]);
    let mut best = 0;
    for k in 0..=most {
        residual[a] -= k;
        best = best.max(k + assign_units(inst, i, rest, left - k, residual));
        residual[a] += k;
    }
    best
}
