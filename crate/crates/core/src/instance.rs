//! Capacitated bipartite matching instances.
//!
//! An [`Instance`] holds advertisers with real capacities and impression
//! *types* with integer supplies. Ids are strings on disk; everything in
//! memory is addressed by dense indices into id-sorted arrays, so two
//! instances over the same id sets agree on every index.

use std::collections::{BTreeSet, HashMap};
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Residual below which an advertiser counts as full.
pub const SATURATION_EPS: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct Advertiser {
    pub id: String,
    pub capacity: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ImpressionType {
    pub id: String,
    pub supply: u64,
    /// Indices into the advertiser array, ascending.
    pub neighbors: Vec<usize>,
}

#[derive(Debug, Clone)]
pub struct Instance {
    advertisers: Vec<Advertiser>,
    impressions: Vec<ImpressionType>,
    adv_types: Vec<Vec<usize>>,
    edge_offsets: Vec<usize>,
    adv_index: HashMap<String, usize>,
    type_index: HashMap<String, usize>,
}

impl PartialEq for Instance {
    fn eq(&self, other: &Self) -> bool {
        self.advertisers == other.advertisers && self.impressions == other.impressions
    }
}

impl Instance {
    pub fn builder() -> InstanceBuilder {
        InstanceBuilder::default()
    }

    pub fn empty() -> Self {
        InstanceBuilder::default()
            .build()
            .expect("empty instance is valid")
    }

    /// Number of advertisers.
    pub fn n(&self) -> usize {
        self.advertisers.len()
    }

    pub fn num_types(&self) -> usize {
        self.impressions.len()
    }

    pub fn num_edges(&self) -> usize {
        *self.edge_offsets.last().unwrap_or(&0)
    }

    /// m, the number of unit impressions.
    pub fn total_supply(&self) -> u64 {
        self.impressions.iter().map(|t| t.supply).sum()
    }

    pub fn total_capacity(&self) -> f64 {
        self.advertisers.iter().map(|a| a.capacity).sum()
    }

    pub fn advertisers(&self) -> &[Advertiser] {
        &self.advertisers
    }

    pub fn impressions(&self) -> &[ImpressionType] {
        &self.impressions
    }

    #[inline]
    pub fn capacity(&self, a: usize) -> f64 {
        self.advertisers[a].capacity
    }

    #[inline]
    pub fn supply(&self, i: usize) -> u64 {
        self.impressions[i].supply
    }

    #[inline]
    pub fn neighbors(&self, i: usize) -> &[usize] {
        &self.impressions[i].neighbors
    }

    /// Types adjacent to advertiser `a`, ascending.
    #[inline]
    pub fn types_of(&self, a: usize) -> &[usize] {
        &self.adv_types[a]
    }

    /// Offset of type `i`'s first edge in the flat edge numbering.
    #[inline]
    pub fn edge_offset(&self, i: usize) -> usize {
        self.edge_offsets[i]
    }

    pub fn advertiser_index(&self, id: &str) -> Option<usize> {
        self.adv_index.get(id).copied()
    }

    pub fn type_index(&self, id: &str) -> Option<usize> {
        self.type_index.get(id).copied()
    }

    pub fn capacities(&self) -> Vec<f64> {
        self.advertisers.iter().map(|a| a.capacity).collect()
    }

    pub fn supplies(&self) -> Vec<u64> {
        self.impressions.iter().map(|t| t.supply).collect()
    }

    /// True when both instances have identical advertiser id lists.
    pub fn same_advertisers(&self, other: &Instance) -> bool {
        self.advertisers.len() == other.advertisers.len()
            && self
                .advertisers
                .iter()
                .zip(&other.advertisers)
                .all(|(x, y)| x.id == y.id)
    }

    /// Same graph, new capacities (indexed like [`Instance::advertisers`]).
    pub fn with_capacities(&self, capacities: &[f64]) -> Result<Instance> {
        if capacities.len() != self.n() {
            return Err(Error::Validation(format!(
                "expected {} capacities, got {}",
                self.n(),
                capacities.len()
            )));
        }
        for (adv, &c) in self.advertisers.iter().zip(capacities) {
            check_capacity(&adv.id, c)?;
        }
        let mut out = self.clone();
        for (adv, &c) in out.advertisers.iter_mut().zip(capacities) {
            adv.capacity = c;
        }
        Ok(out)
    }

    /// Same graph, new supplies (indexed like [`Instance::impressions`]).
    pub fn with_supplies(&self, supplies: &[u64]) -> Result<Instance> {
        if supplies.len() != self.num_types() {
            return Err(Error::Validation(format!(
                "expected {} supplies, got {}",
                self.num_types(),
                supplies.len()
            )));
        }
        let mut out = self.clone();
        for (t, &s) in out.impressions.iter_mut().zip(supplies) {
            if s > 0 && t.neighbors.is_empty() {
                return Err(Error::Validation(format!(
                    "impression type {:?} has supply {s} but no neighbors",
                    t.id
                )));
            }
            t.supply = s;
        }
        Ok(out)
    }

    pub fn to_json_string(&self) -> String {
        let file = InstanceFile {
            advertisers: self
                .advertisers
                .iter()
                .map(|a| AdvertiserRecord {
                    id: a.id.clone(),
                    capacity: a.capacity,
                })
                .collect(),
            impressions: self
                .impressions
                .iter()
                .map(|t| ImpressionRecord {
                    id: t.id.clone(),
                    supply: t.supply as i64,
                    neighbors: t
                        .neighbors
                        .iter()
                        .map(|&a| self.advertisers[a].id.clone())
                        .collect(),
                })
                .collect(),
        };
        let mut s = serde_json::to_string_pretty(&file).expect("instance serializes");
        s.push('\n');
        s
    }

    pub fn from_json_str(s: &str) -> Result<Instance> {
        let file: InstanceFile = serde_json::from_str(s)?;
        let mut b = InstanceBuilder::default();
        for a in file.advertisers {
            b.advertisers.push((a.id, a.capacity));
        }
        for t in file.impressions {
            b.impressions.push((t.id, t.supply, t.neighbors));
        }
        b.build()
    }
}

#[derive(Debug, Default, Clone)]
pub struct InstanceBuilder {
    advertisers: Vec<(String, f64)>,
    impressions: Vec<(String, i64, Vec<String>)>,
}

impl InstanceBuilder {
    pub fn advertiser(mut self, id: impl Into<String>, capacity: f64) -> Self {
        self.advertisers.push((id.into(), capacity));
        self
    }

    pub fn impression<S: AsRef<str>>(
        mut self,
        id: impl Into<String>,
        supply: u64,
        neighbors: &[S],
    ) -> Self {
        self.impressions.push((
            id.into(),
            supply as i64,
            neighbors.iter().map(|s| s.as_ref().to_string()).collect(),
        ));
        self
    }

    pub fn add_advertiser(&mut self, id: impl Into<String>, capacity: f64) {
        self.advertisers.push((id.into(), capacity));
    }

    pub fn add_impression(&mut self, id: impl Into<String>, supply: u64, neighbors: Vec<String>) {
        self.impressions.push((id.into(), supply as i64, neighbors));
    }

    /// Validates and canonicalizes (ids sorted, neighbor lists sorted).
    pub fn build(self) -> Result<Instance> {
        let mut advertisers = self.advertisers;
        advertisers.sort_by(|x, y| x.0.cmp(&y.0));
        for w in advertisers.windows(2) {
            if w[0].0 == w[1].0 {
                return Err(Error::Validation(format!(
                    "duplicate advertiser id {:?}",
                    w[0].0
                )));
            }
        }
        for (id, c) in &advertisers {
            check_capacity(id, *c)?;
        }
        let adv_index: HashMap<String, usize> = advertisers
            .iter()
            .enumerate()
            .map(|(k, (id, _))| (id.clone(), k))
            .collect();

        let mut raw = self.impressions;
        raw.sort_by(|x, y| x.0.cmp(&y.0));
        for w in raw.windows(2) {
            if w[0].0 == w[1].0 {
                return Err(Error::Validation(format!(
                    "duplicate impression type id {:?}",
                    w[0].0
                )));
            }
        }

        let mut impressions = Vec::with_capacity(raw.len());
        for (id, supply, neighbor_ids) in raw {
            if supply < 0 {
                return Err(Error::Validation(format!(
                    "impression type {id:?} has negative supply {supply}"
                )));
            }
            let mut neighbors = Vec::with_capacity(neighbor_ids.len());
            let mut seen = BTreeSet::new();
            for nid in &neighbor_ids {
                let Some(&a) = adv_index.get(nid) else {
                    return Err(Error::Validation(format!(
                        "impression type {id:?} references unknown advertiser {nid:?}"
                    )));
                };
                if !seen.insert(a) {
                    return Err(Error::Validation(format!(
                        "duplicate edge ({id:?}, {nid:?})"
                    )));
                }
                neighbors.push(a);
            }
            if supply > 0 && neighbors.is_empty() {
                return Err(Error::Validation(format!(
                    "impression type {id:?} has supply {supply} but no neighbors"
                )));
            }
            neighbors.sort_unstable();
            impressions.push(ImpressionType {
                id,
                supply: supply as u64,
                neighbors,
            });
        }

        let advertisers: Vec<Advertiser> = advertisers
            .into_iter()
            .map(|(id, capacity)| Advertiser { id, capacity })
            .collect();
        Ok(Instance::assemble(advertisers, impressions))
    }
}

impl Instance {
    fn assemble(advertisers: Vec<Advertiser>, impressions: Vec<ImpressionType>) -> Instance {
        let mut adv_types = vec![Vec::new(); advertisers.len()];
        let mut edge_offsets = Vec::with_capacity(impressions.len() + 1);
        edge_offsets.push(0);
        for (i, t) in impressions.iter().enumerate() {
            for &a in &t.neighbors {
                adv_types[a].push(i);
            }
            edge_offsets.push(edge_offsets[i] + t.neighbors.len());
        }
        let adv_index = advertisers
            .iter()
            .enumerate()
            .map(|(k, a)| (a.id.clone(), k))
            .collect();
        let type_index = impressions
            .iter()
            .enumerate()
            .map(|(k, t)| (t.id.clone(), k))
            .collect();
        Instance {
            advertisers,
            impressions,
            adv_types,
            edge_offsets,
            adv_index,
            type_index,
        }
    }
}

fn check_capacity(id: &str, c: f64) -> Result<()> {
    if !c.is_finite() || c < 0.0 {
        return Err(Error::Validation(format!(
            "advertiser {id:?} has invalid capacity {c}"
        )));
    }
    Ok(())
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct InstanceFile {
    advertisers: Vec<AdvertiserRecord>,
    impressions: Vec<ImpressionRecord>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct AdvertiserRecord {
    id: String,
    capacity: f64,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ImpressionRecord {
    id: String,
    supply: i64,
    neighbors: Vec<String>,
}

pub fn load_instance(path: impl AsRef<Path>) -> Result<Instance> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Instance::from_json_str(&text)
}

/// Writes canonical JSON: ids sorted, fixed field order, trailing newline.
pub fn save_instance(inst: &Instance, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, inst.to_json_string()).map_err(|e| Error::io(path, e))
}

pub fn total_supply(inst: &Instance) -> u64 {
    inst.total_supply()
}

/// Mutable state of one online run.
#[derive(Debug, Clone)]
pub struct AllocationState {
    /// Raw allocated mass per advertiser. May exceed capacity under PW.
    pub alloc: Vec<f64>,
    pub matched: f64,
    pub unmatched: f64,
    pub processed: u64,
    /// Per-edge totals in the flat edge numbering, when auditing.
    pub edge_totals: Option<Vec<f64>>,
}

impl AllocationState {
    pub fn new(inst: &Instance, track_edges: bool) -> Self {
        AllocationState {
            alloc: vec![0.0; inst.n()],
            matched: 0.0,
            unmatched: 0.0,
            processed: 0,
            edge_totals: track_edges.then(|| vec![0.0; inst.num_edges()]),
        }
    }

    /// Largest capacity violation, zero when feasible.
    pub fn max_overflow(&self, inst: &Instance) -> f64 {
        self.alloc
            .iter()
            .enumerate()
            .map(|(a, &x)| (x - inst.capacity(a)).max(0.0))
            .fold(0.0, f64::max)
    }
}

/// Outcome of one simulated run, scored against an optimum.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatchResult {
    pub algorithm: String,
    pub matched: f64,
    pub opt: f64,
    pub ratio: f64,
    pub seed: Option<u64>,
    pub order: String,
    pub meta: RunMeta,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RunMeta {
    pub events: u64,
    pub unmatched: f64,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub mode: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub discard_matched: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub replay_matched: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub post_sample_opt: Option<f64>,
    #[serde(skip_serializing_if = "std::ops::Not::not", default)]
    pub uniform_fallback: bool,
}

impl MatchResult {
    pub fn new(algorithm: impl Into<String>, matched: f64, opt: f64) -> Self {
        MatchResult {
            algorithm: algorithm.into(),
            matched,
            opt,
            ratio: ratio(matched, opt),
            seed: None,
            order: String::new(),
            meta: RunMeta::default(),
        }
    }
}

/// matched / opt, defined as 1 when there is nothing to match.
pub fn ratio(matched: f64, opt: f64) -> f64 {
    if opt > 0.0 {
        matched / opt
    } else {
        1.0
    }
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

    #[test]
    fn minimal_instance() {
        let inst = Instance::from_json_str(
            r#"{"advertisers":[{"id":"a1","capacity":1}],"impressions":[{"id":"i1","supply":1,"neighbors":["a1"]}]}"#,
        )
        .unwrap();
        assert_eq!(inst.total_supply(), 1);
        assert_eq!(inst.n(), 1);
    }

    #[test]
    fn dangling_neighbor_is_named() {
        let err = Instance::from_json_str(
            r#"{"advertisers":[{"id":"a1","capacity":1}],"impressions":[{"id":"i1","supply":1,"neighbors":["aX"]}]}"#,
        )
        .unwrap_err();
        assert!(err.to_string().contains("\"aX\""), "{err}");
    }

    #[test]
    fn rejects_bad_entities() {
        let neg = r#"{"advertisers":[{"id":"a1","capacity":1}],"impressions":[{"id":"i9","supply":-2,"neighbors":["a1"]}]}"#;
        assert!(Instance::from_json_str(neg).unwrap_err().to_string().contains("i9"));

        let empty = r#"{"advertisers":[],"impressions":[{"id":"lonely","supply":3,"neighbors":[]}]}"#;
        assert!(Instance::from_json_str(empty)
            .unwrap_err()
            .to_string()
            .contains("lonely"));

        let dup = r#"{"advertisers":[{"id":"a1","capacity":1}],"impressions":[{"id":"i1","supply":1,"neighbors":["a1","a1"]}]}"#;
        assert!(matches!(
            Instance::from_json_str(dup),
            Err(Error::Validation(_))
        ));

        let cap = r#"{"advertisers":[{"id":"bad","capacity":-1}],"impressions":[]}"#;
        assert!(Instance::from_json_str(cap).unwrap_err().to_string().contains("bad"));

        assert!(matches!(
            Instance::from_json_str("{\"advertisers\": ["),
            Err(Error::Json(_))
        ));
    }

    #[test]
    fn zero_supply_type_may_be_isolated() {
        let inst = Instance::builder()
            .advertiser("a", 1.0)
            .impression::<&str>("i", 0, &[])
            .build()
            .unwrap();
        assert_eq!(inst.total_supply(), 0);
    }

    #[test]
    fn canonical_form_is_sorted_and_stable() {
        let inst = Instance::builder()
            .advertiser("b", 0.5)
            .advertiser("a", 1.0)
            .impression("z", 1, &["b", "a"])
            .impression("y", 2, &["a"])
            .build()
            .unwrap();
        let s = inst.to_json_string();
        assert!(s.ends_with('\n'));
        assert!(s.find("\"a\"").unwrap() < s.find("\"b\"").unwrap());
        assert!(s.contains("0.5"));
        let again = Instance::from_json_str(&s).unwrap();
        assert_eq!(again, inst);
        assert_eq!(again.to_json_string(), s);
    }

    #[test]
    fn derived_adjacency() {
        let inst = t1();
        assert_eq!(inst.types_of(1), &[0, 1]);
        assert_eq!(inst.types_of(0), &[0]);
        assert_eq!(inst.num_edges(), 3);
        assert_eq!(inst.edge_offset(1), 2);
        assert_eq!(total_supply(&inst), 3);
        assert_eq!(total_supply(&Instance::empty()), 0);
    }

    #[test]
    fn replacing_supplies_revalidates() {
        let inst = Instance::builder()
            .advertiser("a", 1.0)
            .impression::<&str>("i", 0, &[])
            .build()
            .unwrap();
        assert!(inst.with_supplies(&[1]).is_err());
        assert!(t1().with_capacities(&[1.0]).is_err());
        assert!(t1().with_capacities(&[1.0, f64::NAN]).is_err());
    }
}
