//! Proportional weight vectors.
//!
//! Every impression of type `i` is split over its neighborhood in
//! proportion to the advertisers' weights. [`evaluate_offline`] scores a
//! weight vector on a whole instance, and [`compute_weights`] searches the
//! discretized class `alpha_a = (1+eps)^k_a, k_a in 0..=T` for a vector
//! whose value is within `(1-eps)` of the optimum.

use std::cmp::{Ordering, Reverse};
use std::collections::{BTreeMap, BinaryHeap};
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::instance::Instance;
use crate::optimum;

/// Positive per-advertiser weights, indexed like [`Instance::advertisers`].
#[derive(Debug, Clone, PartialEq)]
pub struct WeightVector {
    values: Vec<f64>,
    discrete: Option<DiscreteWeights>,
}

/// Exponent form of a weight vector.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteWeights {
    pub epsilon: f64,
    pub t: u32,
    pub exponents: Vec<u32>,
}

impl DiscreteWeights {
    /// `(1+eps)^k` by repeated multiplication.
    pub fn alpha(&self, a: usize) -> f64 {
        let base = 1.0 + self.epsilon;
        (0..self.exponents[a]).fold(1.0, |acc, _| acc * base)
    }
}

impl WeightVector {
    pub fn from_values(values: Vec<f64>) -> Result<Self> {
        if let Some((a, v)) = values
            .iter()
            .enumerate()
            .find(|(_, v)| !(v.is_finite() && **v > 0.0))
        {
            return Err(Error::Weights(format!(
                "weight of advertiser #{a} must be positive and finite, got {v}"
            )));
        }
        Ok(WeightVector {
            values,
            discrete: None,
        })
    }

    /// All exponents zero.
    pub fn uniform(n: usize) -> Self {
        WeightVector {
            values: vec![1.0; n],
            discrete: Some(DiscreteWeights {
                epsilon: 0.1,
                t: 1,
                exponents: vec![0; n],
            }),
        }
    }

    pub fn discrete(epsilon: f64, t: u32, exponents: Vec<u32>) -> Result<Self> {
        if !(epsilon > 0.0 && epsilon < 1.0) {
            return Err(Error::Weights(format!("epsilon {epsilon} outside (0,1)")));
        }
        if t == 0 {
            return Err(Error::Weights("T must be positive".into()));
        }
        if let Some(k) = exponents.iter().find(|&&k| k > t) {
            return Err(Error::Weights(format!("exponent {k} exceeds T = {t}")));
        }
        let values = normalized_values(epsilon, &exponents);
        Ok(WeightVector {
            values,
            discrete: Some(DiscreteWeights {
                epsilon,
                t,
                exponents,
            }),
        })
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Weights used for allocation. For discrete vectors these are
    /// `(1+eps)^(k - k_min)`; shares only depend on ratios.
    #[inline]
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn discrete_form(&self) -> Option<&DiscreteWeights> {
        self.discrete.as_ref()
    }

    pub fn exponents(&self) -> Option<&[u32]> {
        self.discrete.as_ref().map(|d| d.exponents.as_slice())
    }

    /// Every weight multiplied by `c`.
    pub fn scaled(&self, c: f64) -> Result<Self> {
        WeightVector::from_values(self.values.iter().map(|v| v * c).collect())
    }

    pub fn check_covers(&self, inst: &Instance) -> Result<()> {
        if self.len() != inst.n() {
            return Err(Error::Weights(format!(
                "weight vector has {} entries for {} advertisers",
                self.len(),
                inst.n()
            )));
        }
        Ok(())
    }

    pub fn to_file(&self, inst: &Instance) -> Result<WeightFile> {
        self.check_covers(inst)?;
        let d = self
            .discrete
            .as_ref()
            .ok_or_else(|| Error::Weights("only discrete weights can be saved".into()))?;
        Ok(WeightFile {
            epsilon: d.epsilon,
            t: d.t,
            exponents: inst
                .advertisers()
                .iter()
                .zip(&d.exponents)
                .map(|(adv, &k)| (adv.id.clone(), k))
                .collect(),
        })
    }

    /// Resolves a weight file against `inst`'s advertisers. Every advertiser
    /// must be present.
    pub fn from_file(file: &WeightFile, inst: &Instance) -> Result<Self> {
        let exponents = inst
            .advertisers()
            .iter()
            .map(|adv| {
                file.exponents.get(&adv.id).copied().ok_or_else(|| {
                    Error::Weights(format!("no exponent for advertiser {:?}", adv.id))
                })
            })
            .collect::<Result<Vec<_>>>()?;
        WeightVector::discrete(file.epsilon, file.t, exponents)
    }
}

fn normalized_values(epsilon: f64, exponents: &[u32]) -> Vec<f64> {
    let Some(&lo) = exponents.iter().min() else {
        return Vec::new();
    };
    let hi = *exponents.iter().max().unwrap();
    let span = (hi - lo) as usize;
    let up = power_table(1.0 + epsilon, span);
    if up[span].is_finite() {
        return exponents.iter().map(|&k| up[(k - lo) as usize]).collect();
    }
    let down = power_table(1.0 / (1.0 + epsilon), span);
    exponents
        .iter()
        .map(|&k| down[(hi - k) as usize].max(f64::MIN_POSITIVE))
        .collect()
}

fn power_table(base: f64, len: usize) -> Vec<f64> {
    let mut table = Vec::with_capacity(len + 1);
    let mut p = 1.0;
    table.push(p);
    for _ in 0..len {
        p *= base;
        table.push(p);
    }
    table
}

/// On-disk weight format: `{"epsilon":…, "T":…, "exponents":{"a1":k,…}}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightFile {
    pub epsilon: f64,
    #[serde(rename = "T")]
    pub t: u32,
    pub exponents: BTreeMap<String, u32>,
}

pub fn save_weights(w: &WeightVector, inst: &Instance, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut text = serde_json::to_string_pretty(&w.to_file(inst)?)?;
    text.push('\n');
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn load_weights(inst: &Instance, path: impl AsRef<Path>) -> Result<WeightVector> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    WeightVector::from_file(&serde_json::from_str(&text)?, inst)
}

/// Shares of one unit of type `i`, aligned with `inst.neighbors(i)`.
pub fn proportional_shares(inst: &Instance, w: &WeightVector, i: usize) -> Result<Vec<f64>> {
    w.check_covers(inst)?;
    let nbrs = inst.neighbors(i);
    if nbrs.is_empty() {
        return Err(Error::Validation(format!(
            "impression type {:?} has no neighbors",
            inst.impressions()[i].id
        )));
    }
    let vals = w.values();
    let total: f64 = nbrs.iter().map(|&a| vals[a]).sum();
    Ok(nbrs.iter().map(|&a| vals[a] / total).collect())
}

/// Shares keyed by advertiser id.
pub fn proportional_shares_by_id(
    inst: &Instance,
    w: &WeightVector,
    type_id: &str,
) -> Result<BTreeMap<String, f64>> {
    let i = inst
        .type_index(type_id)
        .ok_or_else(|| Error::Validation(format!("unknown impression type {type_id:?}")))?;
    let shares = proportional_shares(inst, w, i)?;
    Ok(inst
        .neighbors(i)
        .iter()
        .zip(shares)
        .map(|(&a, s)| (inst.advertisers()[a].id.clone(), s))
        .collect())
}

#[derive(Debug, Clone, PartialEq)]
pub struct OfflineValue {
    /// `R = sum_a R_a`.
    pub value: f64,
    /// Supply-weighted proportional allocation per advertiser.
    pub alloc: Vec<f64>,
    /// `R_a = min(Alloc_a, C_a)`.
    pub per_advertiser: Vec<f64>,
}

pub fn evaluate_offline(inst: &Instance, w: &WeightVector) -> Result<OfflineValue> {
    w.check_covers(inst)?;
    let vals = w.values();
    let mut alloc = vec![0.0; inst.n()];
    for t in inst.impressions() {
        if t.supply == 0 {
            continue;
        }
        let total: f64 = t.neighbors.iter().map(|&a| vals[a]).sum();
        let mass = t.supply as f64;
        for &a in &t.neighbors {
            alloc[a] += mass * vals[a] / total;
        }
    }
    let per_advertiser: Vec<f64> = alloc
        .iter()
        .enumerate()
        .map(|(a, &x)| x.min(inst.capacity(a)))
        .collect();
    Ok(OfflineValue {
        value: per_advertiser.iter().sum(),
        alloc,
        per_advertiser,
    })
}

/// Starting `T = ceil(ln(n/eps) / eps^2) + 1`.
pub fn initial_t(n: usize, epsilon: f64) -> u32 {
    let n = n.max(1) as f64;
    ((n / epsilon).ln().max(0.0) / (epsilon * epsilon)).ceil() as u32 + 1
}

pub const DEFAULT_MAX_T_DOUBLINGS: u32 = 4;

/// Solver output with the diagnostics tests look at.
#[derive(Debug, Clone)]
pub struct WeightSolution {
    pub weights: WeightVector,
    pub value: f64,
    pub opt: f64,
    pub t: u32,
    /// Exponent decrements in the accepted phase.
    pub updates: u64,
    pub phases: u32,
}

/// Weights in the discretized class with `R(alpha) >= (1-eps) OPT`.
pub fn compute_weights(inst: &Instance, epsilon: f64, max_t_doublings: u32) -> Result<WeightVector> {
    solve_weights(inst, epsilon, max_t_doublings).map(|s| s.weights)
}

/// Decrement search over exponents.
///
/// All exponents start at `T`. While some advertiser holds more than
/// `(1+eps) C_a` and has a positive exponent, the most overloaded one
/// (ties to the smallest index) loses one unit of exponent. An advertiser
/// whose incident types all have a single neighbor keeps share 1 whatever
/// its weight, so it is never a candidate. Each phase ends after at most
/// `n T` decrements; if the result misses the guarantee, `T` doubles.
pub fn solve_weights(inst: &Instance, epsilon: f64, max_t_doublings: u32) -> Result<WeightSolution> {
    if !(epsilon > 0.0 && epsilon < 1.0) {
        return Err(Error::Parameter(format!("epsilon {epsilon} outside (0,1)")));
    }
    let opt = optimum::opt_value(inst);
    if opt <= 0.0 {
        return Err(Error::DegenerateInstance);
    }
    let target = (1.0 - epsilon) * opt;
    let slack = 1e-9 * opt.max(1.0);
    let mut t = initial_t(inst.n(), epsilon);
    let mut best = f64::NEG_INFINITY;
    for phase in 0..=max_t_doublings {
        let (exponents, updates) = DecrementSolver::new(inst, epsilon, t).run();
        let weights = WeightVector::discrete(epsilon, t, exponents)?;
        let value = evaluate_offline(inst, &weights)?.value;
        if value >= target - slack {
            return Ok(WeightSolution {
                weights,
                value,
                opt,
                t,
                updates,
                phases: phase + 1,
            });
        }
        log::debug!("weight phase T={t} reached {value} < {target}; doubling T");
        best = best.max(value);
        t = t.saturating_mul(2);
    }
    Err(Error::Convergence {
        target,
        best,
        t: t / 2,
    })
}

#[derive(Debug, PartialEq)]
struct Candidate {
    overload: f64,
    a: usize,
    stamp: u64,
}

impl Eq for Candidate {}

impl Ord for Candidate {
    fn cmp(&self, other: &Self) -> Ordering {
        self.overload
            .total_cmp(&other.overload)
            .then_with(|| Reverse(self.a).cmp(&Reverse(other.a)))
            .then_with(|| self.stamp.cmp(&other.stamp))
    }
}

impl PartialOrd for Candidate {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

struct DecrementSolver<'a> {
    inst: &'a Instance,
    epsilon: f64,
    k: Vec<u32>,
    alloc: Vec<f64>,
    /// Current share per edge, flat edge numbering.
    share: Vec<f64>,
    /// `(1+eps)^-j` for `j` in `0..=T`.
    down: Vec<f64>,
    movable: Vec<bool>,
    stamp: Vec<u64>,
    heap: BinaryHeap<Candidate>,
}

impl<'a> DecrementSolver<'a> {
    fn new(inst: &'a Instance, epsilon: f64, t: u32) -> Self {
        let n = inst.n();
        let movable: Vec<bool> = (0..n)
            .map(|a| {
                inst.capacity(a) > 0.0
                    && inst
                        .types_of(a)
                        .iter()
                        .any(|&i| inst.supply(i) > 0 && inst.neighbors(i).len() > 1)
            })
            .collect();
        let k = (0..n)
            .map(|a| if inst.capacity(a) > 0.0 { t } else { 0 })
            .collect();
        let mut solver = DecrementSolver {
            inst,
            epsilon,
            k,
            alloc: vec![0.0; n],
            share: vec![0.0; inst.num_edges()],
            down: power_table(1.0 / (1.0 + epsilon), t as usize),
            movable,
            stamp: vec![0; n],
            heap: BinaryHeap::new(),
        };
        for i in 0..inst.num_types() {
            solver.refresh_type(i, None);
        }
        for a in 0..n {
            solver.push_if_overloaded(a);
        }
        solver
    }

    fn overload(&self, a: usize) -> Option<f64> {
        let cap = self.inst.capacity(a);
        if !self.movable[a] || self.k[a] == 0 || self.alloc[a] <= (1.0 + self.epsilon) * cap {
            return None;
        }
        Some(self.alloc[a] / cap)
    }

    fn push_if_overloaded(&mut self, a: usize) {
        if let Some(overload) = self.overload(a) {
            self.heap.push(Candidate {
                overload,
                a,
                stamp: self.stamp[a],
            });
        }
    }

    /// Recomputes the shares of type `i` and moves the allocation deltas
    /// onto its neighbors. `lowered` is the advertiser whose exponent just
    /// dropped, if any.
    fn refresh_type(&mut self, i: usize, lowered: Option<usize>) {
        let supply = self.inst.supply(i);
        if supply == 0 {
            return;
        }
        let nbrs = self.inst.neighbors(i);
        let off = self.inst.edge_offset(i);
        let top = nbrs.iter().map(|&a| self.k[a]).max().unwrap_or(0);
        let total: f64 = nbrs
            .iter()
            .map(|&a| self.down[(top - self.k[a]) as usize])
            .sum();
        let mass = supply as f64;
        for (pos, &a) in nbrs.iter().enumerate() {
            let new = self.down[(top - self.k[a]) as usize] / total;
            let delta = mass * (new - self.share[off + pos]);
            debug_assert!(
                lowered.is_none()
                    || (Some(a) == lowered && delta <= 1e-9 * mass)
                    || (Some(a) != lowered && delta >= -1e-9 * mass),
                "decrement moved mass the wrong way at advertiser #{a}"
            );
            self.share[off + pos] = new;
            self.alloc[a] += delta;
        }
    }

    fn run(mut self) -> (Vec<u32>, u64) {
        let mut updates = 0u64;
        let mut touched = Vec::new();
        while let Some(c) = self.heap.pop() {
            if c.stamp != self.stamp[c.a] || self.overload(c.a).is_none() {
                continue;
            }
            let a = c.a;
            self.k[a] -= 1;
            updates += 1;
            touched.clear();
            for idx in 0..self.inst.types_of(a).len() {
                let i = self.inst.types_of(a)[idx];
                self.refresh_type(i, Some(a));
                touched.extend_from_slice(self.inst.neighbors(i));
            }
            touched.sort_unstable();
            touched.dedup();
            for &b in &touched {
                self.stamp[b] += 1;
                self.push_if_overloaded(b);
            }
        }
        (self.k, updates)
    }
}

/// Per-type multiplicities of a multiset of type indices.
pub fn sample_counts(inst: &Instance, events: &[u32]) -> Vec<u64> {
    let mut counts = vec![0u64; inst.num_types()];
    for &e in events {
        counts[e as usize] += 1;
    }
    counts
}

/// Sub-instance on a sample: supplies become the sample multiplicities and
/// every capacity is scaled by `sigma`. All types are kept, unsampled ones
/// with supply zero.
pub fn scaled_subinstance(inst: &Instance, sample: &[u64], sigma: f64) -> Result<Instance> {
    if !(sigma > 0.0 && sigma <= 1.0) {
        return Err(Error::Parameter(format!("sigma {sigma} outside (0,1]")));
    }
    let caps: Vec<f64> = inst.capacities().iter().map(|c| c * sigma).collect();
    inst.with_supplies(sample)?.with_capacities(&caps)
}
