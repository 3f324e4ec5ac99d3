//! Instance laboratory.
//!
//! Synthetic instances follow the keyphrase construction used for search
//! advertising data: a base set of popular keyphrases, impression types that
//! are nonempty subsets of it, and an edge from every advertiser to each
//! type it bid on plus every (nonzero-supply) subset of such a type.
//! Capacities come from a quota rule that hands out each type's supply to
//! its neighbors, so every quota'd instance has a perfect fractional
//! matching.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng as _;
use rand::distr::weighted::WeightedIndex;
use rand_distr::{Distribution, Exp1, Pareto};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::instance::{Instance, InstanceBuilder};
use crate::online::ArrivalStream;
use crate::rng::{self, stream};

/// Largest keyphrase base set; types live in its power set.
pub const MAX_BASE_SET: usize = 24;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum QuotaRule {
    Random,
    Maxmin,
    LeastDegree,
}

impl QuotaRule {
    pub fn tag(self) -> &'static str {
        match self {
            QuotaRule::Random => "RANDOM",
            QuotaRule::Maxmin => "MAXMIN",
            QuotaRule::LeastDegree => "LEAST_DEGREE",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum ArrivalOrder {
    Random,
    CiDesc,
    CiAsc,
    CaDesc,
    CaAsc,
}

impl ArrivalOrder {
    pub const ALL: [ArrivalOrder; 5] = [
        ArrivalOrder::Random,
        ArrivalOrder::CiDesc,
        ArrivalOrder::CiAsc,
        ArrivalOrder::CaDesc,
        ArrivalOrder::CaAsc,
    ];

    pub fn tag(self) -> &'static str {
        match self {
            ArrivalOrder::Random => "RANDOM",
            ArrivalOrder::CiDesc => "CI_DESC",
            ArrivalOrder::CiAsc => "CI_ASC",
            ArrivalOrder::CaDesc => "CA_DESC",
            ArrivalOrder::CaAsc => "CA_ASC",
        }
    }
}

/// Synthetic instance parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeneratorConfig {
    /// Size of the popular keyphrase set.
    pub base_set_size: usize,
    pub advertiser_count: usize,
    /// Candidate keyphrase sets advertisers choose from.
    pub pool_size: usize,
    /// Relative frequency of pool sets of size 1, 2, 3, ...
    pub set_size_weights: Vec<f64>,
    /// Zipf exponent for keyphrase popularity and for pool-set popularity.
    pub popularity_exponent: f64,
    /// Mean number of extra pool sets per advertiser beyond the first.
    pub extra_sets_mean: f64,
    /// Random subsets of chosen sets added as types of their own.
    pub extra_subset_types: usize,
    /// Pareto shape of per-type supply.
    pub supply_shape: f64,
    /// Pareto scale (minimum) of per-type supply.
    pub supply_scale: f64,
    /// Rescales drawn supplies to this exact total.
    #[serde(default)]
    pub target_supply: Option<u64>,
    pub quota: QuotaRule,
    pub seed: u64,
}

impl GeneratorConfig {
    /// Calibrated to about 4500 advertisers, 85 types, 8000 edges and
    /// 1.8 million units.
    pub fn full_scale() -> Self {
        GeneratorConfig {
            base_set_size: 20,
            advertiser_count: 4500,
            pool_size: 86,
            set_size_weights: vec![0.55, 0.4, 0.05],
            popularity_exponent: 0.8,
            extra_sets_mean: 0.0,
            extra_subset_types: 0,
            supply_shape: 2.5,
            supply_scale: 12_100.0,
            target_supply: None,
            quota: QuotaRule::Maxmin,
            seed: 2023,
        }
    }

    /// Same shape at a size the test suite can sweep many times.
    pub fn desk() -> Self {
        GeneratorConfig {
            base_set_size: 10,
            advertiser_count: 150,
            pool_size: 30,
            set_size_weights: vec![0.3, 0.5, 0.2],
            popularity_exponent: 0.8,
            extra_sets_mean: 0.5,
            extra_subset_types: 0,
            supply_shape: 2.5,
            supply_scale: 300.0,
            target_supply: None,
            quota: QuotaRule::Maxmin,
            seed: 7,
        }
    }

    /// Few advertisers, many units: n = 5, m = 50 000.
    pub fn random_order() -> Self {
        GeneratorConfig {
            base_set_size: 4,
            advertiser_count: 5,
            pool_size: 8,
            set_size_weights: vec![0.5, 0.5],
            popularity_exponent: 0.5,
            extra_sets_mean: 1.0,
            extra_subset_types: 0,
            supply_shape: 2.5,
            supply_scale: 1000.0,
            target_supply: Some(50_000),
            quota: QuotaRule::Maxmin,
            seed: 11,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(Error::Parameter(m));
        if self.base_set_size == 0 || self.base_set_size > MAX_BASE_SET {
            return fail(format!(
                "base_set_size {} outside 1..={MAX_BASE_SET}",
                self.base_set_size
            ));
        }
        if self.advertiser_count == 0 || self.pool_size == 0 {
            return fail("advertiser_count and pool_size must be positive".into());
        }
        if self.set_size_weights.is_empty()
            || self.set_size_weights.len() > self.base_set_size
            || self.set_size_weights.iter().any(|w| w.is_nan() || *w < 0.0)
            || self.set_size_weights.iter().sum::<f64>() <= 0.0
        {
            return fail("set_size_weights must be nonnegative, nonzero and no longer than the base set".into());
        }
        if !(self.supply_shape > 0.0 && self.supply_scale > 0.0) {
            return fail("supply law parameters must be positive".into());
        }
        if !(self.popularity_exponent >= 0.0 && self.extra_sets_mean >= 0.0) {
            return fail("popularity_exponent and extra_sets_mean must be nonnegative".into());
        }
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let cfg: GeneratorConfig = serde_json::from_str(&text)?;
        cfg.validate()?;
        Ok(cfg)
    }
}

/// A set of keyphrase indices into the base set, as a bitmask.
type PhraseSet = u32;

fn phrase_token(p: usize) -> String {
    format!("k{p:02}")
}

fn set_id(set: PhraseSet) -> String {
    (0..32)
        .filter(|b| set & (1 << b) != 0)
        .map(phrase_token)
        .collect::<Vec<_>>()
        .join("+")
}

/// FNV-1a; a stable key for per-entity substreams.
fn id_key(id: &str) -> u64 {
    id.bytes().fold(0xcbf2_9ce4_8422_2325, |h, b| {
        (h ^ b as u64).wrapping_mul(0x0100_0000_01b3)
    })
}

fn zipf_weights(len: usize, exponent: f64) -> Vec<f64> {
    (0..len).map(|r| ((r + 1) as f64).powf(-exponent)).collect()
}

fn draw_supply(cfg: &GeneratorConfig, rng: &mut rng::Rng) -> u64 {
    let law = Pareto::new(cfg.supply_scale, cfg.supply_shape).expect("validated supply law");
    let x: f64 = law.sample(rng);
    x.round().max(1.0) as u64
}

/// Instance from explicit keyphrase sets.
///
/// Each advertiser is adjacent to every type (with nonzero supply) that is a
/// subset of one of its sets. Types with zero supply are dropped.
pub fn phrase_closure_instance(
    advertiser_sets: &[(String, Vec<BTreeSet<String>>)],
    type_supplies: &BTreeMap<BTreeSet<String>, u64>,
) -> Result<Instance> {
    let live: Vec<(&BTreeSet<String>, u64)> = type_supplies
        .iter()
        .filter(|(set, &s)| s > 0 && !set.is_empty())
        .map(|(set, &s)| (set, s))
        .collect();
    let mut neighbors: Vec<Vec<String>> = vec![Vec::new(); live.len()];
    let mut b = InstanceBuilder::default();
    for (adv, sets) in advertiser_sets {
        let mut any = false;
        for (k, (ty, _)) in live.iter().enumerate() {
            if sets.iter().any(|s| ty.is_subset(s)) {
                neighbors[k].push(adv.clone());
                any = true;
            }
        }
        if any || !sets.is_empty() {
            b.add_advertiser(adv.clone(), 0.0);
        }
    }
    for ((ty, supply), nbrs) in live.into_iter().zip(neighbors) {
        let id = ty.iter().cloned().collect::<Vec<_>>().join("+");
        b.add_impression(id, supply, nbrs);
    }
    b.build()
}

/// Synthetic instance; capacities are zero until a quota rule is applied.
pub fn gen_synthetic(cfg: &GeneratorConfig) -> Result<Instance> {
    cfg.validate()?;
    let (adv_sets, type_sets) = draw_phrase_sets(cfg);
    let mut supplies = BTreeMap::new();
    for &set in &type_sets {
        let id = set_id(set);
        let mut r = rng::substream(cfg.seed, &[stream::SUPPLY, 0, id_key(&id)]);
        supplies.insert(set_tokens(set), draw_supply(cfg, &mut r));
    }
    if let Some(target) = cfg.target_supply {
        rescale_supplies(&mut supplies, target);
    }
    let width = cfg.advertiser_count.to_string().len();
    let advertisers: Vec<(String, Vec<BTreeSet<String>>)> = adv_sets
        .iter()
        .enumerate()
        .map(|(k, sets)| {
            (
                format!("adv{k:0width$}"),
                sets.iter().map(|&s| set_tokens(s)).collect(),
            )
        })
        .collect();
    phrase_closure_instance(&advertisers, &supplies)
}

/// Largest-remainder rounding of `supplies * target / total`.
fn rescale_supplies(supplies: &mut BTreeMap<BTreeSet<String>, u64>, target: u64) {
    let total: u64 = supplies.values().sum();
    if total == 0 {
        return;
    }
    let mut rems: Vec<(f64, usize)> = Vec::with_capacity(supplies.len());
    let mut given = 0u64;
    for (k, s) in supplies.values_mut().enumerate() {
        let exact = *s as f64 * target as f64 / total as f64;
        *s = exact.floor() as u64;
        given += *s;
        rems.push((exact - exact.floor(), k));
    }
    rems.sort_by(|x, y| y.0.total_cmp(&x.0).then(x.1.cmp(&y.1)));
    let bump: BTreeSet<usize> = rems
        .iter()
        .take((target - given) as usize)
        .map(|&(_, k)| k)
        .collect();
    for (k, s) in supplies.values_mut().enumerate() {
        if bump.contains(&k) {
            *s += 1;
        }
    }
}

fn set_tokens(set: PhraseSet) -> BTreeSet<String> {
    (0..32)
        .filter(|b| set & (1 << b) != 0)
        .map(phrase_token)
        .collect()
}

/// Advertiser sets and the resulting type sets.
fn draw_phrase_sets(cfg: &GeneratorConfig) -> (Vec<Vec<PhraseSet>>, BTreeSet<PhraseSet>) {
    let b = cfg.base_set_size;
    let phrase_pop = WeightedIndex::new(zipf_weights(b, cfg.popularity_exponent)).expect("weights");
    let sizes = WeightedIndex::new(&cfg.set_size_weights).expect("validated size weights");

    let mut r = rng::substream(cfg.seed, &[stream::PHRASE_POOL]);
    let mut pool: Vec<PhraseSet> = Vec::with_capacity(cfg.pool_size);
    let mut seen = BTreeSet::new();
    let mut attempts = 0;
    while pool.len() < cfg.pool_size && attempts < cfg.pool_size * 100 {
        attempts += 1;
        let size = sizes.sample(&mut r) + 1;
        let mut set: PhraseSet = 0;
        while (set.count_ones() as usize) < size {
            set |= 1 << phrase_pop.sample(&mut r);
        }
        if seen.insert(set) {
            pool.push(set);
        }
    }

    // broad (small) sets are the popular ones
    pool.sort_by_key(|s| s.count_ones());
    let pool_pop = WeightedIndex::new(zipf_weights(pool.len(), cfg.popularity_exponent)).expect("weights");
    let mut adv_sets = Vec::with_capacity(cfg.advertiser_count);
    for k in 0..cfg.advertiser_count {
        let mut r = rng::substream(cfg.seed, &[stream::ADVERTISER_SETS, k as u64]);
        let mut extra = 0;
        // geometric count with the configured mean
        let p_more = cfg.extra_sets_mean / (1.0 + cfg.extra_sets_mean);
        while extra < pool.len() && r.random::<f64>() < p_more {
            extra += 1;
        }
        let mut sets = BTreeSet::new();
        for _ in 0..=extra {
            sets.insert(pool[pool_pop.sample(&mut r)]);
        }
        adv_sets.push(sets.into_iter().collect::<Vec<_>>());
    }

    let mut types: BTreeSet<PhraseSet> = adv_sets.iter().flatten().copied().collect();
    let chosen: Vec<PhraseSet> = types.iter().copied().collect();
    let mut r = rng::substream(cfg.seed, &[stream::PHRASE_POOL, 1]);
    for _ in 0..cfg.extra_subset_types {
        let parent = chosen[r.random_range(0..chosen.len())];
        let mut sub = parent & r.random::<u32>();
        if sub == 0 {
            sub = parent & parent.wrapping_neg();
        }
        types.insert(sub);
    }
    (adv_sets, types)
}

/// Overwrites capacities with a per-type split of supply.
///
/// * `Random`: each supply is split by a uniform point of the simplex over
///   the type's neighbors.
/// * `Maxmin`: types in id order; each supply is water-filled on top of the
///   neighbors' cumulative allocations.
/// * `LeastDegree`: each supply is split equally among the neighbors of
///   smallest degree.
pub fn apply_quota(inst: &Instance, rule: QuotaRule, seed: u64) -> Result<Instance> {
    let mut caps = vec![0.0f64; inst.n()];
    let mut split = Vec::new();
    for (i, t) in inst.impressions().iter().enumerate() {
        if t.supply == 0 {
            continue;
        }
        let s = t.supply as f64;
        let nbrs = &t.neighbors;
        split.clear();
        match rule {
            QuotaRule::Random => {
                let mut r = rng::substream(seed, &[stream::QUOTA, id_key(&t.id)]);
                split.extend(nbrs.iter().map(|_| {
                    let e: f64 = Exp1.sample(&mut r);
                    e
                }));
            }
            QuotaRule::Maxmin => {
                let current: Vec<f64> = nbrs.iter().map(|&a| caps[a]).collect();
                split.extend(water_fill(&current, s));
            }
            QuotaRule::LeastDegree => {
                let min_deg = nbrs.iter().map(|&a| inst.types_of(a).len()).min().unwrap_or(0);
                split.extend(
                    nbrs.iter()
                        .map(|&a| (inst.types_of(a).len() == min_deg) as u8 as f64),
                );
            }
        }
        let total: f64 = split.iter().sum();
        // last positive share takes the remainder so each type sums to its supply
        let last = split.iter().rposition(|&x| x > 0.0).unwrap_or(nbrs.len() - 1);
        let mut given = 0.0;
        for (pos, &a) in nbrs.iter().enumerate() {
            let amount = if pos == last {
                (s - given).max(0.0)
            } else if pos > last {
                0.0
            } else {
                s * split[pos] / total
            };
            given += amount;
            caps[a] += amount;
        }
        debug_assert!(i < inst.num_types());
    }
    inst.with_capacities(&caps)
}

/// Amounts to add to `levels` so the lowest rise together, totalling `mass`.
fn water_fill(levels: &[f64], mass: f64) -> Vec<f64> {
    let mut order: Vec<usize> = (0..levels.len()).collect();
    order.sort_by(|&x, &y| levels[x].total_cmp(&levels[y]));
    let mut sum = 0.0;
    let mut water = levels[order[order.len() - 1]] + mass;
    for (k, &idx) in order.iter().enumerate() {
        sum += levels[idx];
        let candidate = (mass + sum) / (k + 1) as f64;
        let next = order.get(k + 1).map(|&j| levels[j]);
        if next.is_none_or(|n| candidate <= n) {
            water = candidate;
            break;
        }
    }
    levels.iter().map(|&l| (water - l).max(0.0)).collect()
}

/// Unit-event stream in one of the five arrival orders.
///
/// Sorted orders keep each type's units contiguous; ties go to the smaller
/// type id.
pub fn gen_arrival(inst: &Instance, order: ArrivalOrder, seed: u64) -> ArrivalStream {
    let types: Vec<usize> = (0..inst.num_types()).collect();
    let neighborhood_cap = |i: usize| -> f64 {
        inst.neighbors(i).iter().map(|&a| inst.capacity(a)).sum()
    };
    let sorted = |mut v: Vec<usize>, cmp: &dyn Fn(usize, usize) -> std::cmp::Ordering| {
        v.sort_by(|&x, &y| cmp(x, y).then(x.cmp(&y)));
        v
    };
    let type_order = match order {
        ArrivalOrder::Random => {
            let mut s = ArrivalStream::blocks(inst, &types, order.tag());
            let mut events = s.events().to_vec();
            events.shuffle(&mut rng::substream(seed, &[stream::ARRIVAL]));
            s = ArrivalStream::new(events, order.tag(), Some(seed));
            return s;
        }
        ArrivalOrder::CiDesc => sorted(types, &|x, y| inst.supply(y).cmp(&inst.supply(x))),
        ArrivalOrder::CiAsc => sorted(types, &|x, y| inst.supply(x).cmp(&inst.supply(y))),
        ArrivalOrder::CaDesc => sorted(types, &|x, y| {
            neighborhood_cap(y).total_cmp(&neighborhood_cap(x))
        }),
        ArrivalOrder::CaAsc => sorted(types, &|x, y| {
            neighborhood_cap(x).total_cmp(&neighborhood_cap(y))
        }),
    };
    let s = ArrivalStream::blocks(inst, &type_order, order.tag());
    ArrivalStream::new(s.events().to_vec(), order.tag(), Some(seed))
}

/// One instance per day over a shared advertiser universe.
#[derive(Debug, Clone, PartialEq)]
pub struct DayFamily {
    pub days: Vec<Instance>,
    pub drift: f64,
}

impl DayFamily {
    pub fn new(days: Vec<Instance>, drift: f64) -> Result<Self> {
        if let Some(first) = days.first() {
            if let Some(d) = days.iter().position(|d| !d.same_advertisers(first)) {
                return Err(Error::Validation(format!(
                    "day {d} has a different advertiser set than day 0"
                )));
            }
        }
        Ok(DayFamily { days, drift })
    }

    /// Pads every day with the advertisers it lacks (isolated, capacity 0).
    pub fn aligned(days: Vec<Instance>, drift: f64) -> Result<Self> {
        let universe: BTreeSet<String> = days
            .iter()
            .flat_map(|d| d.advertisers().iter().map(|a| a.id.clone()))
            .collect();
        let padded = days
            .into_iter()
            .map(|d| {
                let mut b = InstanceBuilder::default();
                for id in &universe {
                    let cap = d.advertiser_index(id).map_or(0.0, |a| d.capacity(a));
                    b.add_advertiser(id.clone(), cap);
                }
                for t in d.impressions() {
                    let nbrs = t
                        .neighbors
                        .iter()
                        .map(|&a| d.advertisers()[a].id.clone())
                        .collect();
                    b.add_impression(t.id.clone(), t.supply, nbrs);
                }
                b.build()
            })
            .collect::<Result<Vec<_>>>()?;
        DayFamily::new(padded, drift)
    }

    pub fn len(&self) -> usize {
        self.days.len()
    }

    pub fn is_empty(&self) -> bool {
        self.days.is_empty()
    }
}

/// Stacks days into one instance (supplies and capacities summed, edges
/// united) with a daily-order stream: days in sequence, random inside each.
pub fn stack_days(family: &DayFamily, seed: u64) -> Result<(Instance, ArrivalStream)> {
    let days = &family.days;
    let first = days
        .first()
        .ok_or_else(|| Error::Parameter("cannot stack an empty family".into()))?;
    if let Some(d) = days.iter().position(|d| !d.same_advertisers(first)) {
        return Err(Error::Validation(format!(
            "day {d} has a different advertiser set than day 0"
        )));
    }
    let stacked = stack_instances(days)?;
    let mut events = Vec::with_capacity(stacked.total_supply() as usize);
    let mut starts = Vec::with_capacity(days.len());
    for (d, day) in days.iter().enumerate() {
        starts.push(events.len());
        let mut day_events: Vec<u32> = Vec::with_capacity(day.total_supply() as usize);
        for t in day.impressions() {
            let idx = stacked.type_index(&t.id).expect("stacked type") as u32;
            day_events.extend(std::iter::repeat_n(idx, t.supply as usize));
        }
        day_events.shuffle(&mut rng::substream(seed, &[stream::ARRIVAL, d as u64]));
        events.extend(day_events);
    }
    let stream = ArrivalStream::new(events, "DAILY", Some(seed)).with_days(starts)?;
    Ok((stacked, stream))
}

/// Sum of instances over a shared advertiser set.
pub fn stack_instances(days: &[Instance]) -> Result<Instance> {
    let first = days
        .first()
        .ok_or_else(|| Error::Parameter("cannot stack zero instances".into()))?;
    let mut caps = vec![0.0; first.n()];
    let mut types: BTreeMap<&str, (u64, BTreeSet<usize>)> = BTreeMap::new();
    for day in days {
        if !day.same_advertisers(first) {
            return Err(Error::Validation(
                "stacked instances must share advertisers".into(),
            ));
        }
        for (c, a) in caps.iter_mut().zip(day.advertisers()) {
            *c += a.capacity;
        }
        for t in day.impressions() {
            let entry = types.entry(t.id.as_str()).or_default();
            entry.0 += t.supply;
            entry.1.extend(t.neighbors.iter().copied());
        }
    }
    let mut b = InstanceBuilder::default();
    for (a, c) in first.advertisers().iter().zip(&caps) {
        b.add_advertiser(a.id.clone(), *c);
    }
    for (id, (supply, nbrs)) in types {
        let nbrs = nbrs
            .into_iter()
            .map(|a| first.advertisers()[a].id.clone())
            .collect();
        b.add_impression(id, supply, nbrs);
    }
    b.build()
}

/// Day 0 from [`gen_synthetic`]; each later day re-draws a `drift`
/// fraction of the supplies (in expectation) and re-runs the quota rule.
pub fn gen_day_family(cfg: &GeneratorConfig, days: usize, drift: f64) -> Result<DayFamily> {
    if days == 0 {
        return Err(Error::Parameter("a family needs at least one day".into()));
    }
    if !(0.0..=1.0).contains(&drift) {
        return Err(Error::Parameter(format!("drift {drift} outside [0,1]")));
    }
    if cfg.quota == QuotaRule::Random {
        return Err(Error::Parameter(
            "day families use the MAXMIN or LEAST_DEGREE quota".into(),
        ));
    }
    let base = gen_synthetic(cfg)?;
    let mut out = Vec::with_capacity(days);
    let mut supplies = base.supplies();
    for d in 0..days {
        if d > 0 {
            for (i, t) in base.impressions().iter().enumerate() {
                let mut r = rng::substream(cfg.seed, &[stream::DRIFT, d as u64, id_key(&t.id)]);
                if r.random::<f64>() < drift {
                    supplies[i] = draw_supply(cfg, &mut r);
                }
            }
        }
        let day = base.with_supplies(&supplies)?;
        out.push(apply_quota(&day, cfg.quota, cfg.seed)?);
    }
    DayFamily::new(out, drift)
}

/// l1 distance between supply vectors plus l1 distance between capacity
/// vectors, over the union of ids (missing entries count as zero). The
/// normalized form divides each vector by its own l1 mass first.
pub fn instance_distance(x: &Instance, y: &Instance, normalized: bool) -> f64 {
    fn l1<'a>(
        xs: impl Iterator<Item = (&'a str, f64)>,
        ys: impl Iterator<Item = (&'a str, f64)>,
        normalized: bool,
    ) -> f64 {
        let xs: BTreeMap<&str, f64> = xs.collect();
        let ys: BTreeMap<&str, f64> = ys.collect();
        let norm = |m: &BTreeMap<&str, f64>| {
            let total: f64 = m.values().sum();
            if normalized && total > 0.0 {
                total
            } else {
                1.0
            }
        };
        let (nx, ny) = (norm(&xs), norm(&ys));
        let keys: BTreeSet<&str> = xs.keys().chain(ys.keys()).copied().collect();
        keys.into_iter()
            .map(|k| {
                (xs.get(k).copied().unwrap_or(0.0) / nx - ys.get(k).copied().unwrap_or(0.0) / ny)
                    .abs()
            })
            .sum()
    }
    fn sup(inst: &Instance) -> impl Iterator<Item = (&str, f64)> {
        inst.impressions().iter().map(|t| (t.id.as_str(), t.supply as f64))
    }
    fn cap(inst: &Instance) -> impl Iterator<Item = (&str, f64)> {
        inst.advertisers().iter().map(|a| (a.id.as_str(), a.capacity))
    }
    l1(sup(x), sup(y), normalized) + l1(cap(x), cap(y), normalized)
}

/// One row of an advertising log: on `day`, `account_id` received
/// `impressions` units of keyphrase set `phrases` at rank `rank`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdRecord {
    pub day: u32,
    pub account_id: String,
    pub rank: u32,
    pub phrases: BTreeSet<String>,
    pub avg_bid: f64,
    pub impressions: u64,
    pub clicks: u64,
}

/// Parses tab-separated records:
/// `day  account_id  rank  phrase_list  avg_bid  impressions  clicks`,
/// with space-separated phrase tokens. Blank lines and `#` comments are
/// skipped.
pub fn parse_records(text: &str) -> Result<Vec<AdRecord>> {
    let mut out = Vec::new();
    for (k, line) in text.lines().enumerate() {
        let line_no = k + 1;
        if line.trim().is_empty() || line.starts_with('#') {
            continue;
        }
        let err = |msg: String| Error::Record { line: line_no, msg };
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != 7 {
            return Err(err(format!("expected 7 tab-separated fields, got {}", fields.len())));
        }
        let num = |idx: usize, name: &str| -> Result<i64> {
            fields[idx]
                .trim()
                .parse::<i64>()
                .map_err(|e| err(format!("bad {name} {:?}: {e}", fields[idx])))
        };
        let day = num(0, "day")?;
        let rank = num(2, "rank")?;
        let impressions = num(5, "impressions")?;
        let clicks = num(6, "clicks")?;
        if day < 0 || rank < 0 || clicks < 0 {
            return Err(err("day, rank and clicks must be nonnegative".into()));
        }
        if impressions < 0 {
            return Err(err(format!("negative impression count {impressions}")));
        }
        let avg_bid = fields[4]
            .trim()
            .parse::<f64>()
            .map_err(|e| err(format!("bad avg_bid {:?}: {e}", fields[4])))?;
        let account_id = fields[1].trim().to_string();
        if account_id.is_empty() {
            return Err(err("empty account id".into()));
        }
        out.push(AdRecord {
            day: day as u32,
            account_id,
            rank: rank as u32,
            phrases: fields[3].split_whitespace().map(str::to_string).collect(),
            avg_bid,
            impressions: impressions as u64,
            clicks: clicks as u64,
        });
    }
    Ok(out)
}

pub fn load_records(path: impl AsRef<Path>) -> Result<Vec<AdRecord>> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_records(&text)
}

/// The `top_k` keyphrases by impression volume over all records, ties to
/// the smaller token.
pub fn top_keyphrases(records: &[AdRecord], top_k: usize) -> BTreeSet<String> {
    let mut volume: HashMap<&str, u64> = HashMap::new();
    for r in records {
        for p in &r.phrases {
            *volume.entry(p.as_str()).or_default() += r.impressions;
        }
    }
    let mut ranked: Vec<(&str, u64)> = volume.into_iter().collect();
    ranked.sort_by(|x, y| y.1.cmp(&x.1).then(x.0.cmp(y.0)));
    ranked.into_iter().take(top_k).map(|(p, _)| p.to_string()).collect()
}

/// Builds one instance per day (capacities zero; apply a quota next).
///
/// For each day and keyphrase set only the rank with the largest total
/// impression count survives (ties to the smaller rank). A row maps to the
/// type `P ∩ S*`; rows whose intersection is empty contribute nothing.
pub fn ingest_records(records: &[AdRecord], top_k: usize) -> Result<BTreeMap<u32, Instance>> {
    let popular = top_keyphrases(records, top_k);

    // (day, P) -> rank -> total
    let mut rank_totals: BTreeMap<(u32, &BTreeSet<String>), BTreeMap<u32, u64>> = BTreeMap::new();
    for r in records {
        *rank_totals
            .entry((r.day, &r.phrases))
            .or_default()
            .entry(r.rank)
            .or_default() += r.impressions;
    }
    let kept_rank: BTreeMap<(u32, &BTreeSet<String>), u32> = rank_totals
        .iter()
        .map(|(key, ranks)| {
            let best = ranks
                .iter()
                .max_by(|x, y| x.1.cmp(y.1).then(y.0.cmp(x.0)))
                .map(|(&rank, _)| rank)
                .expect("nonempty");
            (*key, best)
        })
        .collect();

    let mut per_day: BTreeMap<u32, Vec<&AdRecord>> = BTreeMap::new();
    for r in records {
        if kept_rank[&(r.day, &r.phrases)] == r.rank {
            per_day.entry(r.day).or_default().push(r);
        }
    }

    let mut out = BTreeMap::new();
    for (day, rows) in per_day {
        let mut supplies: BTreeMap<BTreeSet<String>, u64> = BTreeMap::new();
        let mut adv_sets: BTreeMap<String, BTreeSet<BTreeSet<String>>> = BTreeMap::new();
        for r in rows {
            let f: BTreeSet<String> = r.phrases.intersection(&popular).cloned().collect();
            if f.is_empty() {
                continue;
            }
            *supplies.entry(f.clone()).or_default() += r.impressions;
            adv_sets.entry(r.account_id.clone()).or_default().insert(f);
        }
        let live: BTreeMap<BTreeSet<String>, u64> =
            supplies.into_iter().filter(|(_, s)| *s > 0).collect();
        if live.is_empty() {
            return Err(Error::Validation(format!(
                "day {day} has no impression type with positive supply"
            )));
        }
        let advertisers: Vec<(String, Vec<BTreeSet<String>>)> = adv_sets
            .into_iter()
            .map(|(a, sets)| (a, sets.into_iter().collect()))
            .collect();
        let inst = phrase_closure_instance(&advertisers, &live)?;
        // drop advertisers left without edges
        let keep: Vec<bool> = (0..inst.n()).map(|a| !inst.types_of(a).is_empty()).collect();
        let mut b = InstanceBuilder::default();
        for (a, adv) in inst.advertisers().iter().enumerate() {
            if keep[a] {
                b.add_advertiser(adv.id.clone(), 0.0);
            }
        }
        for t in inst.impressions() {
            let nbrs = t.neighbors.iter().map(|&a| inst.advertisers()[a].id.clone()).collect();
            b.add_impression(t.id.clone(), t.supply, nbrs);
        }
        out.insert(day, b.build()?);
    }
    Ok(out)
}

/// Checks the subset-closure rule: if `(i, a)` is an edge and type `j` is a
/// subset of `i` (by `+`-joined tokens), then `(j, a)` is an edge.
pub fn closure_violations(inst: &Instance) -> Vec<(String, String)> {
    let token_sets: Vec<BTreeSet<&str>> = inst
        .impressions()
        .iter()
        .map(|t| t.id.split('+').collect())
        .collect();
    let mut bad = Vec::new();
    for (i, ti) in inst.impressions().iter().enumerate() {
        for (j, tj) in inst.impressions().iter().enumerate() {
            if i == j || tj.supply == 0 || !token_sets[j].is_subset(&token_sets[i]) {
                continue;
            }
            for &a in &ti.neighbors {
                if tj.neighbors.binary_search(&a).is_err() {
                    bad.push((tj.id.clone(), inst.advertisers()[a].id.clone()));
                }
            }
        }
    }
    bad
}
