//! Streaming allocation engine.
//!
//! A run consumes one unit impression at a time and places its mass with
//! one of four policies:
//!
//! * **PW** splits every unit over the full neighborhood by predicted
//!   weights, ignoring saturation. Mass landing above capacity is lost.
//! * **IPW** splits only over unfull neighbors. A share larger than the
//!   receiver's residual is capped there and the excess is split again over
//!   the neighbors that are still unfull, until the unit is placed or the
//!   whole neighborhood is full.
//! * **Water-filling** raises the lowest fill levels `alloc_a / C_a` first.
//! * **Ranking** walks one fixed advertiser priority order and spills
//!   fractional residuals down the list.
//!
//! Per-advertiser state lives in dense arrays; the per-event paths do not
//! allocate.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::instance::{AllocationState, Instance, MatchResult, RunMeta, SATURATION_EPS};
use crate::optimum;
use crate::weights::{self, WeightVector};

/// Ordered unit-impression events (type indices) with optional day starts.
#[derive(Debug, Clone, PartialEq)]
pub struct ArrivalStream {
    events: Vec<u32>,
    day_starts: Vec<usize>,
    order: String,
    seed: Option<u64>,
}

impl ArrivalStream {
    pub fn new(events: Vec<u32>, order: impl Into<String>, seed: Option<u64>) -> Self {
        ArrivalStream {
            events,
            day_starts: Vec::new(),
            order: order.into(),
            seed,
        }
    }

    /// Marks where each day begins. Starts must be nondecreasing, begin at
    /// zero and stay within the stream.
    pub fn with_days(mut self, day_starts: Vec<usize>) -> Result<Self> {
        let ok = day_starts.first().is_none_or(|&s| s == 0)
            && day_starts.windows(2).all(|w| w[0] <= w[1])
            && day_starts.last().is_none_or(|&s| s <= self.events.len());
        if !ok {
            return Err(Error::StreamMismatch(format!(
                "day starts {day_starts:?} do not partition {} events",
                self.events.len()
            )));
        }
        self.day_starts = day_starts;
        Ok(self)
    }

    /// Units of each type in type-index order, contiguous.
    pub fn blocks(inst: &Instance, type_order: &[usize], order: impl Into<String>) -> Self {
        let mut events = Vec::with_capacity(inst.total_supply() as usize);
        for &i in type_order {
            events.extend(std::iter::repeat_n(i as u32, inst.supply(i) as usize));
        }
        ArrivalStream::new(events, order, None)
    }

    pub fn events(&self) -> &[u32] {
        &self.events
    }

    pub fn len(&self) -> usize {
        self.events.len()
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }

    pub fn order(&self) -> &str {
        &self.order
    }

    pub fn seed(&self) -> Option<u64> {
        self.seed
    }

    pub fn day_starts(&self) -> &[usize] {
        &self.day_starts
    }

    /// Event slices per day; the whole stream when no days are marked.
    pub fn days(&self) -> Vec<&[u32]> {
        if self.day_starts.is_empty() {
            return vec![&self.events];
        }
        let mut out = Vec::with_capacity(self.day_starts.len());
        for (k, &s) in self.day_starts.iter().enumerate() {
            let e = self
                .day_starts
                .get(k + 1)
                .copied()
                .unwrap_or(self.events.len());
            out.push(&self.events[s..e]);
        }
        out
    }

    /// Checks that the events are exactly the instance's supply multiset.
    pub fn check_matches(&self, inst: &Instance) -> Result<()> {
        check_events(inst, &self.events)?;
        let counts = weights::sample_counts(inst, &self.events);
        if let Some(i) = (0..inst.num_types()).find(|&i| counts[i] != inst.supply(i)) {
            return Err(Error::StreamMismatch(format!(
                "type {:?} arrives {} times but has supply {}",
                inst.impressions()[i].id,
                counts[i],
                inst.supply(i)
            )));
        }
        Ok(())
    }
}

fn check_events(inst: &Instance, events: &[u32]) -> Result<()> {
    let types = inst.num_types() as u32;
    if let Some(&bad) = events.iter().find(|&&e| e >= types) {
        return Err(Error::StreamMismatch(format!(
            "event type index {bad} out of range ({types} types)"
        )));
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub enum OnlinePolicy {
    Pw(WeightVector),
    Ipw(WeightVector),
    WaterFill,
    /// Advertiser indices from highest to lowest priority.
    Ranking(Vec<usize>),
}

impl OnlinePolicy {
    pub fn tag(&self) -> &'static str {
        match self {
            OnlinePolicy::Pw(_) => "PW",
            OnlinePolicy::Ipw(_) => "IPW",
            OnlinePolicy::WaterFill => "WATERFILL",
            OnlinePolicy::Ranking(_) => "RANKING",
        }
    }

    pub fn check(&self, inst: &Instance) -> Result<()> {
        match self {
            OnlinePolicy::Pw(w) | OnlinePolicy::Ipw(w) => w.check_covers(inst),
            OnlinePolicy::WaterFill => Ok(()),
            OnlinePolicy::Ranking(perm) => {
                let mut seen = vec![false; inst.n()];
                let bijection = perm.len() == inst.n()
                    && perm
                        .iter()
                        .all(|&a| a < seen.len() && !std::mem::replace(&mut seen[a], true));
                if bijection {
                    Ok(())
                } else {
                    Err(Error::Parameter(
                        "ranking order is not a permutation of the advertisers".into(),
                    ))
                }
            }
        }
    }
}

/// Uniformly random advertiser priority order.
pub fn random_priority(n: usize, rng: &mut impl rand::Rng) -> Vec<usize> {
    use rand::seq::SliceRandom;
    let mut perm: Vec<usize> = (0..n).collect();
    perm.shuffle(rng);
    perm
}

/// Runs `policy` over `events` from an empty allocation. The events need
/// not cover the instance's supply.
pub fn simulate(
    inst: &Instance,
    events: &[u32],
    policy: &OnlinePolicy,
    track_edges: bool,
) -> Result<AllocationState> {
    simulate_observed(inst, events, policy, track_edges, |_, _, _| {})
}

/// [`simulate`] with a callback after every event, given the event index,
/// the unmatched mass of that event and the state. PW runs on type counts,
/// so it reports once, after the last event.
pub fn simulate_observed(
    inst: &Instance,
    events: &[u32],
    policy: &OnlinePolicy,
    track_edges: bool,
    mut observe: impl FnMut(usize, f64, &AllocationState),
) -> Result<AllocationState> {
    policy.check(inst)?;
    check_events(inst, events)?;
    let mut state = AllocationState::new(inst, track_edges);
    let mut step = |k: usize, state: &mut AllocationState, before: f64| {
        state.processed = k as u64 + 1;
        observe(k, state.unmatched - before, state);
    };
    match policy {
        OnlinePolicy::Pw(w) => {
            run_pw_counts(inst, events, w, &mut state);
            if !events.is_empty() {
                step(events.len() - 1, &mut state, 0.0);
            }
        }
        OnlinePolicy::Ipw(w) => {
            let vals = w.values();
            for (k, &e) in events.iter().enumerate() {
                let before = state.unmatched;
                ipw_event(inst, e as usize, vals, &mut state);
                step(k, &mut state, before);
            }
        }
        OnlinePolicy::WaterFill => {
            let mut scratch = Vec::with_capacity(max_degree(inst));
            for (k, &e) in events.iter().enumerate() {
                let before = state.unmatched;
                waterfill_event(inst, e as usize, &mut scratch, &mut state);
                step(k, &mut state, before);
            }
        }
        OnlinePolicy::Ranking(perm) => {
            let mut ranker = Ranker::new(inst, perm);
            for (k, &e) in events.iter().enumerate() {
                let before = state.unmatched;
                ranker.event(inst, e as usize, &mut state);
                step(k, &mut state, before);
            }
        }
    }
    state.processed = events.len() as u64;
    Ok(state)
}

fn max_degree(inst: &Instance) -> usize {
    inst.impressions()
        .iter()
        .map(|t| t.neighbors.len())
        .max()
        .unwrap_or(0)
}

/// PW places each unit by its type alone, so the run reduces to per-type
/// counts; summing in type order makes the result independent of arrival
/// order bit for bit.
fn run_pw_counts(inst: &Instance, events: &[u32], w: &WeightVector, state: &mut AllocationState) {
    let counts = weights::sample_counts(inst, events);
    let vals = w.values();
    for (i, &count) in counts.iter().enumerate() {
        if count == 0 {
            continue;
        }
        let nbrs = inst.neighbors(i);
        let total: f64 = nbrs.iter().map(|&a| vals[a]).sum();
        let off = inst.edge_offset(i);
        for (pos, &a) in nbrs.iter().enumerate() {
            let mass = count as f64 * (vals[a] / total);
            state.alloc[a] += mass;
            if let Some(edges) = state.edge_totals.as_mut() {
                edges[off + pos] += mass;
            }
        }
    }
    state.matched = state
        .alloc
        .iter()
        .enumerate()
        .map(|(a, &x)| x.min(inst.capacity(a)))
        .sum();
    state.unmatched = events.len() as f64 - state.matched;
}

#[inline]
fn ipw_event(inst: &Instance, i: usize, vals: &[f64], state: &mut AllocationState) {
    let nbrs = inst.neighbors(i);
    let off = inst.edge_offset(i);
    let mut mass = 1.0;
    loop {
        let mut wsum = 0.0;
        for &a in nbrs {
            if state.alloc[a] < inst.capacity(a) - SATURATION_EPS {
                wsum += vals[a];
            }
        }
        if wsum == 0.0 {
            break;
        }
        let mut leftover = 0.0;
        for (pos, &a) in nbrs.iter().enumerate() {
            let cap = inst.capacity(a);
            let have = state.alloc[a];
            if have >= cap - SATURATION_EPS {
                continue;
            }
            let want = mass * vals[a] / wsum;
            let room = cap - have;
            let put = if want >= room {
                leftover += want - room;
                state.alloc[a] = cap;
                room
            } else {
                state.alloc[a] = have + want;
                want
            };
            if let Some(edges) = state.edge_totals.as_mut() {
                edges[off + pos] += put;
            }
        }
        mass = leftover;
        if mass <= f64::EPSILON * 4.0 {
            mass = 0.0;
            break;
        }
    }
    debug_assert!(
        mass == 0.0
            || nbrs
                .iter()
                .all(|&a| inst.capacity(a) - state.alloc[a] <= 1e-9),
        "IPW left mass with an unfull neighbor"
    );
    state.matched += 1.0 - mass;
    state.unmatched += mass;
}

#[inline]
fn waterfill_event(
    inst: &Instance,
    i: usize,
    scratch: &mut Vec<(f64, usize)>,
    state: &mut AllocationState,
) {
    let nbrs = inst.neighbors(i);
    let off = inst.edge_offset(i);
    scratch.clear();
    for (pos, &a) in nbrs.iter().enumerate() {
        let cap = inst.capacity(a);
        if cap > 0.0 && state.alloc[a] < cap - SATURATION_EPS {
            scratch.push((state.alloc[a] / cap, pos));
        }
    }
    if scratch.is_empty() {
        state.unmatched += 1.0;
        return;
    }
    scratch.sort_unstable_by(|x, y| x.0.total_cmp(&y.0));

    // Raise the water through successive breakpoints until one unit fits.
    let mass = 1.0;
    let mut cap_sum = 0.0;
    let mut alloc_sum = 0.0;
    let mut level = 1.0;
    let mut active = scratch.len();
    for k in 0..scratch.len() {
        let a = nbrs[scratch[k].1];
        cap_sum += inst.capacity(a);
        alloc_sum += state.alloc[a];
        let next = if k + 1 < scratch.len() {
            scratch[k + 1].0.min(1.0)
        } else {
            1.0
        };
        if next * cap_sum - alloc_sum >= mass {
            level = (mass + alloc_sum) / cap_sum;
            active = k + 1;
            break;
        }
    }
    let level = level.min(1.0);
    let mut placed = 0.0;
    for &(_, pos) in &scratch[..active] {
        let a = nbrs[pos];
        let cap = inst.capacity(a);
        let target = if level >= 1.0 { cap } else { (level * cap).min(cap) };
        let put = (target - state.alloc[a]).max(0.0);
        state.alloc[a] += put;
        placed += put;
        if let Some(edges) = state.edge_totals.as_mut() {
            edges[off + pos] += put;
        }
    }
    let placed = placed.min(mass);
    state.matched += placed;
    state.unmatched += mass - placed;
}

struct Ranker {
    /// Neighbors of each type sorted by priority, flat edge numbering.
    sorted: Vec<usize>,
    /// Per type, position of the first neighbor that may be unfull.
    cursor: Vec<usize>,
}

impl Ranker {
    fn new(inst: &Instance, perm: &[usize]) -> Self {
        let mut rank = vec![0usize; inst.n()];
        for (r, &a) in perm.iter().enumerate() {
            rank[a] = r;
        }
        let mut sorted = Vec::with_capacity(inst.num_edges());
        for i in 0..inst.num_types() {
            let start = sorted.len();
            sorted.extend_from_slice(inst.neighbors(i));
            sorted[start..].sort_unstable_by_key(|&a| rank[a]);
        }
        let cursor = (0..inst.num_types()).map(|i| inst.edge_offset(i)).collect();
        Ranker { sorted, cursor }
    }

    #[inline]
    fn event(&mut self, inst: &Instance, i: usize, state: &mut AllocationState) {
        let end = inst.edge_offset(i + 1);
        let mut p = self.cursor[i];
        let mut mass = 1.0;
        while p < end && mass > 0.0 {
            let a = self.sorted[p];
            let cap = inst.capacity(a);
            let room = cap - state.alloc[a];
            if room <= SATURATION_EPS {
                p += 1;
                continue;
            }
            let put = if room <= mass {
                state.alloc[a] = cap;
                p += 1;
                room
            } else {
                state.alloc[a] += mass;
                mass
            };
            mass -= put;
            if let Some(edges) = state.edge_totals.as_mut() {
                let pos = inst.neighbors(i).binary_search(&a).expect("neighbor");
                edges[inst.edge_offset(i) + pos] += put;
            }
        }
        self.cursor[i] = p;
        if mass <= f64::EPSILON * 4.0 {
            mass = 0.0;
        }
        state.matched += 1.0 - mass;
        state.unmatched += mass;
    }
}

/// Which part of the stream the learned weights are scored on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum LearnMode {
    /// Sample events get nothing; the rest are allocated online.
    DiscardSample,
    /// The whole stream is replayed with the learned weights.
    ReplayWhole,
}

impl LearnMode {
    pub fn tag(self) -> &'static str {
        match self {
            LearnMode::DiscardSample => "DISCARD_SAMPLE",
            LearnMode::ReplayWhole => "REPLAY_WHOLE",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum TailPolicy {
    Pw,
    Ipw,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LearnConfig {
    pub sigma: f64,
    pub epsilon: f64,
    pub mode: LearnMode,
    pub tail: TailPolicy,
    pub max_t_doublings: u32,
}

impl LearnConfig {
    pub fn new(sigma: f64, epsilon: f64, mode: LearnMode, tail: TailPolicy) -> Self {
        LearnConfig {
            sigma,
            epsilon,
            mode,
            tail,
            max_t_doublings: weights::DEFAULT_MAX_T_DOUBLINGS,
        }
    }
}

#[derive(Debug, Clone)]
pub struct LearnOutcome {
    pub result: MatchResult,
    pub weights: WeightVector,
    /// Length of the training prefix.
    pub sample_len: usize,
}

/// Runs policies on one instance against its precomputed optimum.
#[derive(Debug, Clone)]
pub struct Evaluator<'a> {
    inst: &'a Instance,
    opt: f64,
}

impl<'a> Evaluator<'a> {
    pub fn new(inst: &'a Instance) -> Self {
        Evaluator {
            inst,
            opt: optimum::opt_value(inst),
        }
    }

    /// Skips the max-flow when the optimum is already known.
    pub fn with_opt(inst: &'a Instance, opt: f64) -> Self {
        Evaluator { inst, opt }
    }

    pub fn opt(&self) -> f64 {
        self.opt
    }

    pub fn instance(&self) -> &Instance {
        self.inst
    }

    pub fn run(&self, stream: &ArrivalStream, policy: &OnlinePolicy) -> Result<MatchResult> {
        stream.check_matches(self.inst)?;
        let state = simulate(self.inst, stream.events(), policy, false)?;
        Ok(self.score(policy.tag(), stream, &state))
    }

    pub fn run_pw(&self, stream: &ArrivalStream, w: &WeightVector) -> Result<MatchResult> {
        self.run(stream, &OnlinePolicy::Pw(w.clone()))
    }

    pub fn run_ipw(&self, stream: &ArrivalStream, w: &WeightVector) -> Result<MatchResult> {
        self.run(stream, &OnlinePolicy::Ipw(w.clone()))
    }

    pub fn run_waterfill(&self, stream: &ArrivalStream) -> Result<MatchResult> {
        self.run(stream, &OnlinePolicy::WaterFill)
    }

    pub fn run_ranking(&self, stream: &ArrivalStream, perm: &[usize]) -> Result<MatchResult> {
        self.run(stream, &OnlinePolicy::Ranking(perm.to_vec()))
    }

    fn score(&self, tag: &str, stream: &ArrivalStream, state: &AllocationState) -> MatchResult {
        let mut r = MatchResult::new(tag, state.matched, self.opt);
        r.seed = stream.seed();
        r.order = stream.order().to_string();
        r.meta = RunMeta {
            events: state.processed,
            unmatched: state.unmatched,
            ..RunMeta::default()
        };
        r
    }

    /// Learns weights on the first `floor(sigma m)` events against
    /// `sigma`-scaled capacities, then scores them. Both the discard and the
    /// replay values are recorded; `cfg.mode` picks the headline one.
    pub fn learn_then_apply(
        &self,
        stream: &ArrivalStream,
        cfg: &LearnConfig,
    ) -> Result<LearnOutcome> {
        if !(cfg.sigma > 0.0 && cfg.sigma <= 1.0) {
            return Err(Error::Parameter(format!(
                "sigma {} outside (0,1]",
                cfg.sigma
            )));
        }
        if !(cfg.epsilon > 0.0 && cfg.epsilon < 1.0) {
            return Err(Error::Parameter(format!(
                "epsilon {} outside (0,1)",
                cfg.epsilon
            )));
        }
        stream.check_matches(self.inst)?;
        let inst = self.inst;
        let events = stream.events();
        let sample_len = ((cfg.sigma * events.len() as f64).floor() as usize).min(events.len());
        let (sample, tail) = events.split_at(sample_len);
        let sub = weights::scaled_subinstance(inst, &weights::sample_counts(inst, sample), cfg.sigma)?;

        let (w, fallback) = match weights::compute_weights(&sub, cfg.epsilon, cfg.max_t_doublings) {
            Ok(w) => (w, false),
            Err(Error::DegenerateInstance) => {
                log::warn!("training sample has OPT = 0; using uniform weights");
                (WeightVector::uniform(inst.n()), true)
            }
            Err(e) => return Err(e),
        };
        let policy = match cfg.tail {
            TailPolicy::Pw => OnlinePolicy::Pw(w.clone()),
            TailPolicy::Ipw => OnlinePolicy::Ipw(w.clone()),
        };
        let discard = simulate(inst, tail, &policy, false)?;
        let replay = simulate(inst, events, &policy, false)?;
        let tag = match cfg.tail {
            TailPolicy::Pw => "LTA_PW",
            TailPolicy::Ipw => "LTA_IPW",
        };
        let state = match cfg.mode {
            LearnMode::DiscardSample => &discard,
            LearnMode::ReplayWhole => &replay,
        };
        let mut result = self.score(tag, stream, state);
        if cfg.mode == LearnMode::DiscardSample {
            // sample units are forfeited, not dropped from the run
            result.meta.events = events.len() as u64;
            result.meta.unmatched = discard.unmatched + sample_len as f64;
            let tail_inst = inst.with_supplies(&weights::sample_counts(inst, tail))?;
            result.meta.post_sample_opt = Some(optimum::opt_value(&tail_inst));
        }
        result.meta.mode = Some(cfg.mode.tag().to_string());
        result.meta.discard_matched = Some(discard.matched);
        result.meta.replay_matched = Some(replay.matched);
        result.meta.uniform_fallback = fallback;
        Ok(LearnOutcome {
            result,
            weights: w,
            sample_len,
        })
    }
}

pub fn run_pw(inst: &Instance, stream: &ArrivalStream, w: &WeightVector) -> Result<MatchResult> {
    Evaluator::new(inst).run_pw(stream, w)
}

pub fn run_ipw(inst: &Instance, stream: &ArrivalStream, w: &WeightVector) -> Result<MatchResult> {
    Evaluator::new(inst).run_ipw(stream, w)
}

pub fn run_waterfill(inst: &Instance, stream: &ArrivalStream) -> Result<MatchResult> {
    Evaluator::new(inst).run_waterfill(stream)
}

pub fn run_ranking(inst: &Instance, stream: &ArrivalStream, perm: &[usize]) -> Result<MatchResult> {
    Evaluator::new(inst).run_ranking(stream, perm)
}

pub fn learn_then_apply(
    inst: &Instance,
    stream: &ArrivalStream,
    cfg: &LearnConfig,
) -> Result<LearnOutcome> {
    Evaluator::new(inst).learn_then_apply(stream, cfg)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t1() -> Instance {
        Instance::builder()
            .advertiser("a1", 2.0)
            .advertiser("a2", 1.0)
            .impression("i1", 2, &["a1", "a2"])
            .impression("i2", 1, &["a2"])
            .build()
            .unwrap()
    }

    fn w(v: &[f64]) -> WeightVector {
        WeightVector::from_values(v.to_vec()).unwrap()
    }

    fn stream(events: &[u32]) -> ArrivalStream {
        ArrivalStream::new(events.to_vec(), "GIVEN", None)
    }

    #[test]
    fn pw_matches_offline_value() {
        let inst = t1();
        for order in [[0, 0, 1], [1, 0, 0], [0, 1, 0]] {
            let r = run_pw(&inst, &stream(&order), &w(&[1.0, 1.0])).unwrap();
            assert_eq!(r.matched, 2.0);
            let r = run_pw(&inst, &stream(&order), &w(&[4.0, 1.0])).unwrap();
            assert!((r.matched - 2.6).abs() < 1e-12);
        }
    }

    #[test]
    fn pw_clamps_single_advertiser() {
        let inst = Instance::builder()
            .advertiser("a", 3.0)
            .impression("i", 5, &["a"])
            .build()
            .unwrap();
        let r = run_pw(&inst, &stream(&[0; 5]), &w(&[1.0])).unwrap();
        assert_eq!(r.matched, 3.0);
        assert_eq!(r.meta.unmatched, 2.0);
    }

    #[test]
    fn ipw_traces() {
        let inst = t1();
        let r = run_ipw(&inst, &stream(&[1, 0, 0]), &w(&[1.0, 1.0])).unwrap();
        assert_eq!(r.matched, 3.0);
        assert_eq!(r.ratio, 1.0);
        let s = simulate(&inst, &[0, 0, 1], &OnlinePolicy::Ipw(w(&[1.0, 1.0])), true).unwrap();
        assert_eq!(s.alloc, vec![1.0, 1.0]);
        assert_eq!(s.matched, 2.0);
        assert_eq!(s.unmatched, 1.0);
        assert_eq!(s.edge_totals.unwrap(), vec![1.0, 1.0, 0.0]);
    }

    #[test]
    fn ipw_redistributes_capped_excess() {
        // a1 has room for 0.1 only; its 0.5 share overflows onto a2
        let inst = Instance::builder()
            .advertiser("a1", 0.1)
            .advertiser("a2", 5.0)
            .impression("i", 1, &["a1", "a2"])
            .build()
            .unwrap();
        let s = simulate(&inst, &[0], &OnlinePolicy::Ipw(w(&[1.0, 1.0])), false).unwrap();
        assert_eq!(s.alloc[0], 0.1);
        assert!((s.alloc[1] - 0.9).abs() < 1e-15);
        assert_eq!(s.matched, 1.0);
    }

    #[test]
    fn waterfill_levels() {
        let inst = Instance::builder()
            .advertiser("a1", 2.0)
            .advertiser("a2", 1.0)
            .impression("i", 1, &["a1", "a2"])
            .build()
            .unwrap();
        let s = simulate(&inst, &[0], &OnlinePolicy::WaterFill, false).unwrap();
        assert!((s.alloc[0] - 2.0 / 3.0).abs() < 1e-15);
        assert!((s.alloc[1] - 1.0 / 3.0).abs() < 1e-15);

        let single = Instance::builder()
            .advertiser("a", 10.0)
            .impression("i", 1, &["a"])
            .build()
            .unwrap();
        let s = simulate(&single, &[0], &OnlinePolicy::WaterFill, false).unwrap();
        assert_eq!(s.alloc, vec![1.0]);
    }

    #[test]
    fn waterfill_fills_lowest_first() {
        // a1 is already full (level 1.0), a2 sits at level 0.2
        let inst = Instance::builder()
            .advertiser("a1", 1.0)
            .advertiser("a2", 5.0)
            .impression("x", 1, &["a1"])
            .impression("y", 1, &["a2"])
            .impression("i", 1, &["a1", "a2"])
            .build()
            .unwrap();
        // type indices follow id order: i = 0, x = 1, y = 2
        let s = simulate(&inst, &[1, 2, 0], &OnlinePolicy::WaterFill, false).unwrap();
        assert_eq!(s.alloc, vec![1.0, 2.0]);
        assert_eq!(s.matched, 3.0);

        // levels 0.5 and 0.0 on equal capacities: first 0.5 lifts a2 to
        // parity, the rest splits evenly
        let inst = Instance::builder()
            .advertiser("a1", 1.0)
            .advertiser("a2", 1.0)
            .impression("i", 2, &["a1", "a2"])
            .build()
            .unwrap();
        let mut state = AllocationState::new(&inst, false);
        state.alloc = vec![0.5, 0.0];
        let mut scratch = Vec::new();
        waterfill_event(&inst, 0, &mut scratch, &mut state);
        assert_eq!(state.alloc, vec![0.75, 0.75]);
    }

    #[test]
    fn waterfill_saturates_and_spills() {
        let inst = Instance::builder()
            .advertiser("a1", 0.25)
            .advertiser("a2", 0.25)
            .impression("i", 1, &["a1", "a2"])
            .build()
            .unwrap();
        let s = simulate(&inst, &[0], &OnlinePolicy::WaterFill, false).unwrap();
        assert_eq!(s.alloc, vec![0.25, 0.25]);
        assert_eq!(s.matched, 0.5);
        assert_eq!(s.unmatched, 0.5);
    }

    #[test]
    fn ranking_traces() {
        let inst = t1();
        let r = run_ranking(&inst, &stream(&[0, 0, 1]), &[0, 1]).unwrap();
        assert_eq!(r.matched, 3.0);
        let r = run_ranking(&inst, &stream(&[0, 0, 1]), &[1, 0]).unwrap();
        assert_eq!(r.matched, 2.0);
        assert!(run_ranking(&inst, &stream(&[0, 0, 1]), &[1, 1]).is_err());
    }

    #[test]
    fn ranking_spills_fractional_residual() {
        let inst = Instance::builder()
            .advertiser("a1", 0.5)
            .advertiser("a2", 1.0)
            .impression("i", 1, &["a1", "a2"])
            .build()
            .unwrap();
        let s = simulate(&inst, &[0], &OnlinePolicy::Ranking(vec![0, 1]), true).unwrap();
        assert_eq!(s.alloc, vec![0.5, 0.5]);
        assert_eq!(s.edge_totals.unwrap(), vec![0.5, 0.5]);
    }

    #[test]
    fn mismatched_stream_is_rejected() {
        let inst = t1();
        assert!(matches!(
            run_pw(&inst, &stream(&[0, 1]), &w(&[1.0, 1.0])),
            Err(Error::StreamMismatch(_))
        ));
        assert!(run_waterfill(&inst, &stream(&[0, 0, 7])).is_err());
        assert!(run_ipw(&inst, &stream(&[0, 0, 1]), &w(&[1.0])).is_err());
    }

    #[test]
    fn day_markers() {
        let s = stream(&[0, 0, 1]).with_days(vec![0, 2]).unwrap();
        assert_eq!(s.days(), vec![&[0u32, 0][..], &[1][..]]);
        assert!(stream(&[0]).with_days(vec![1]).is_err());
        assert!(stream(&[0]).with_days(vec![0, 2]).is_err());
    }

    #[test]
    fn learn_full_sample_replay_equals_direct_pw() {
        let inst = t1();
        let s = stream(&[0, 1, 0]);
        let cfg = LearnConfig::new(1.0, 0.1, LearnMode::ReplayWhole, TailPolicy::Pw);
        let out = learn_then_apply(&inst, &s, &cfg).unwrap();
        let direct = weights::compute_weights(&inst, 0.1, 4).unwrap();
        assert_eq!(out.weights, direct);
        assert_eq!(out.result.matched, run_pw(&inst, &s, &direct).unwrap().matched);
    }

    #[test]
    fn learn_on_empty_sample_falls_back() {
        let inst = t1();
        let cfg = LearnConfig::new(0.2, 0.1, LearnMode::DiscardSample, TailPolicy::Ipw);
        let out = learn_then_apply(&inst, &stream(&[0, 1, 0]), &cfg).unwrap();
        assert_eq!(out.sample_len, 0);
        assert!(out.result.meta.uniform_fallback);
        assert!(cfg.sigma > 0.0);
        let bad = LearnConfig::new(0.0, 0.1, LearnMode::DiscardSample, TailPolicy::Ipw);
        assert!(learn_then_apply(&inst, &stream(&[0, 1, 0]), &bad).is_err());
    }
}
