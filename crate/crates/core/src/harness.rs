//! Experiment sweeps and reports.
//!
//! A config names one experiment kind. Its matrix is split into independent
//! cells (one per repetition, order or day) that run on a bounded rayon
//! pool; every random draw inside a cell comes from a substream keyed by the
//! master seed and the cell's coordinates, so a cell reproduces its rows in
//! isolation and the sorted row list does not depend on scheduling.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;
use std::time::Instant;

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::genlab::{self, ArrivalOrder, DayFamily, GeneratorConfig, QuotaRule};
use crate::instance::{Instance, MatchResult};
use crate::online::{self, ArrivalStream, Evaluator, LearnConfig, LearnMode, TailPolicy};
use crate::rng::{self, stream};
use crate::weights::{self, WeightVector};

pub const CSV_HEADER: &str =
    "experiment,day,algorithm,order,quota,sigma,seed,matched,opt,ratio,eta_prev_day,wallclock_ms";

pub const DEFAULT_SIGMAS: [f64; 8] = [0.01, 0.05, 0.1, 0.2, 0.4, 0.6, 0.8, 1.0];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum ExperimentKind {
    Learnability,
    Adversarial,
    DailyOrder,
    Robustness,
    TheoremRandomOrder,
}

impl ExperimentKind {
    pub fn tag(self) -> &'static str {
        match self {
            ExperimentKind::Learnability => "LEARNABILITY",
            ExperimentKind::Adversarial => "ADVERSARIAL",
            ExperimentKind::DailyOrder => "DAILY_ORDER",
            ExperimentKind::Robustness => "ROBUSTNESS",
            ExperimentKind::TheoremRandomOrder => "THEOREM_RANDOM_ORDER",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Algorithm {
    Pw,
    Ipw,
    Waterfill,
    Ranking,
}

impl Algorithm {
    pub const ALL: [Algorithm; 4] = [
        Algorithm::Pw,
        Algorithm::Ipw,
        Algorithm::Waterfill,
        Algorithm::Ranking,
    ];

    pub fn tag(self) -> &'static str {
        match self {
            Algorithm::Pw => "PW",
            Algorithm::Ipw => "IPW",
            Algorithm::Waterfill => "WATERFILL",
            Algorithm::Ranking => "RANKING",
        }
    }

    fn learned(self) -> bool {
        matches!(self, Algorithm::Pw | Algorithm::Ipw)
    }
}

fn default_sigmas() -> Vec<f64> {
    DEFAULT_SIGMAS.to_vec()
}
fn default_epsilon() -> f64 {
    0.1
}
fn default_delta() -> f64 {
    0.05
}
fn default_algorithms() -> Vec<Algorithm> {
    Algorithm::ALL.to_vec()
}
fn default_orders() -> Vec<ArrivalOrder> {
    vec![ArrivalOrder::Random]
}
fn default_quota() -> QuotaRule {
    QuotaRule::Maxmin
}
fn default_repetitions() -> usize {
    4
}
fn default_generator() -> GeneratorConfig {
    GeneratorConfig::desk()
}
fn default_days() -> usize {
    10
}
fn default_drift() -> f64 {
    0.5
}
fn default_start_day() -> usize {
    8
}
fn default_doublings() -> u32 {
    weights::DEFAULT_MAX_T_DOUBLINGS
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub kind: ExperimentKind,
    #[serde(default = "default_sigmas")]
    pub sigmas: Vec<f64>,
    #[serde(default = "default_epsilon")]
    pub epsilon: f64,
    /// Target failure probability for the random-order check.
    #[serde(default = "default_delta")]
    pub delta: f64,
    #[serde(default = "default_algorithms")]
    pub algorithms: Vec<Algorithm>,
    #[serde(default = "default_orders")]
    pub orders: Vec<ArrivalOrder>,
    /// Replaces the generator's quota rule.
    #[serde(default = "default_quota")]
    pub quota: QuotaRule,
    #[serde(default = "default_repetitions")]
    pub repetitions: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_generator")]
    pub generator: GeneratorConfig,
    /// Day-family length (daily order and robustness).
    #[serde(default = "default_days")]
    pub days: usize,
    #[serde(default = "default_drift")]
    pub drift: f64,
    /// First evaluation day of the robustness sweep.
    #[serde(default = "default_start_day")]
    pub start_day: usize,
    #[serde(default = "default_doublings")]
    pub max_t_doublings: u32,
}

impl ExperimentConfig {
    pub fn new(kind: ExperimentKind) -> Self {
        let mut cfg = ExperimentConfig {
            kind,
            sigmas: default_sigmas(),
            epsilon: default_epsilon(),
            delta: default_delta(),
            algorithms: default_algorithms(),
            orders: default_orders(),
            quota: default_quota(),
            repetitions: default_repetitions(),
            seed: 0,
            generator: default_generator(),
            days: default_days(),
            drift: default_drift(),
            start_day: default_start_day(),
            max_t_doublings: default_doublings(),
        };
        match kind {
            ExperimentKind::Adversarial => {
                cfg.orders = ArrivalOrder::ALL.to_vec();
                cfg.sigmas = vec![0.1];
            }
            ExperimentKind::Robustness => cfg.sigmas = vec![1.0],
            ExperimentKind::TheoremRandomOrder => {
                cfg.sigmas = vec![0.1];
                cfg.repetitions = 20;
                cfg.generator = GeneratorConfig::random_order();
            }
            _ => {}
        }
        cfg
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let cfg: ExperimentConfig = serde_json::from_str(&text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(Error::Parameter(m));
        if self.sigmas.is_empty() {
            return fail("sigma list is empty".into());
        }
        if let Some(s) = self.sigmas.iter().find(|s| !(**s > 0.0 && **s <= 1.0)) {
            return fail(format!("sigma {s} outside (0,1]"));
        }
        if !(self.epsilon > 0.0 && self.epsilon < 1.0) {
            return fail(format!("epsilon {} outside (0,1)", self.epsilon));
        }
        if !(self.delta > 0.0 && self.delta < 1.0) {
            return fail(format!("delta {} outside (0,1)", self.delta));
        }
        if self.repetitions == 0 {
            return fail("repetitions must be at least 1".into());
        }
        if self.algorithms.is_empty() || self.orders.is_empty() {
            return fail("algorithm and order lists must be nonempty".into());
        }
        if !(0.0..=1.0).contains(&self.drift) {
            return fail(format!("drift {} outside [0,1]", self.drift));
        }
        if self.kind == ExperimentKind::Robustness {
            if self.start_day == 0 {
                return fail("robustness needs start_day >= 1".into());
            }
            if self.days <= self.start_day {
                return fail(format!(
                    "robustness needs more than start_day = {} days, got {}",
                    self.start_day, self.days
                ));
            }
        }
        if self.kind == ExperimentKind::DailyOrder && self.days == 0 {
            return fail("daily order needs at least one day".into());
        }
        self.generator.validate()
    }

    /// Generator config with the experiment's quota rule applied.
    pub fn generator(&self) -> GeneratorConfig {
        GeneratorConfig {
            quota: self.quota,
            ..self.generator.clone()
        }
    }

    /// Seed of repetition `rep`, shared by every cell of that repetition.
    pub fn rep_seed(&self, rep: usize) -> u64 {
        rng::derive_seed(self.seed, &[stream::EXPERIMENT, rep as u64])
    }
}

/// One measured run. `matched`, `opt` and `ratio` are NaN and `error` is
/// set when the cell failed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub experiment: String,
    pub day: Option<u32>,
    pub algorithm: String,
    pub order: String,
    pub quota: String,
    pub sigma: Option<f64>,
    pub seed: u64,
    pub matched: f64,
    pub opt: f64,
    pub ratio: f64,
    /// Raw l1 gap to the previous day.
    pub eta_prev_day: Option<f64>,
    /// Same gap on mass-normalized vectors; not written to CSV.
    #[serde(skip)]
    pub eta_prev_day_normalized: Option<f64>,
    pub wallclock_ms: f64,
    #[serde(skip)]
    pub error: Option<String>,
}

impl ResultRow {
    fn blank(cfg: &ExperimentConfig, algorithm: &str, order: &str, seed: u64) -> Self {
        ResultRow {
            experiment: cfg.kind.tag().to_string(),
            day: None,
            algorithm: algorithm.to_string(),
            order: order.to_string(),
            quota: cfg.quota.tag().to_string(),
            sigma: None,
            seed,
            matched: f64::NAN,
            opt: f64::NAN,
            ratio: f64::NAN,
            eta_prev_day: None,
            eta_prev_day_normalized: None,
            wallclock_ms: 0.0,
            error: None,
        }
    }

    fn scored(mut self, matched: f64, opt: f64, started: Instant) -> Self {
        self.matched = matched;
        self.opt = opt;
        self.ratio = crate::instance::ratio(matched, opt);
        self.wallclock_ms = started.elapsed().as_secs_f64() * 1e3;
        self
    }

    fn with_result(self, r: &MatchResult, started: Instant) -> Self {
        self.scored(r.matched, r.opt, started)
    }

    pub fn failed(&self) -> bool {
        self.error.is_some()
    }

    /// Every field but wall-clock time, for determinism checks.
    pub fn same_measurement(&self, other: &ResultRow) -> bool {
        let eq = |x: f64, y: f64| x == y || (x.is_nan() && y.is_nan());
        self.experiment == other.experiment
            && self.day == other.day
            && self.algorithm == other.algorithm
            && self.order == other.order
            && self.quota == other.quota
            && self.sigma == other.sigma
            && self.seed == other.seed
            && eq(self.matched, other.matched)
            && eq(self.opt, other.opt)
            && eq(self.ratio, other.ratio)
            && self.eta_prev_day == other.eta_prev_day
            && self.error == other.error
    }

    fn sort_key(&self) -> impl Ord + '_ {
        (
            self.experiment.as_str(),
            self.day,
            self.algorithm.as_str(),
            self.order.as_str(),
            self.quota.as_str(),
            self.sigma.map(f64::to_bits),
            self.seed,
        )
    }
}

/// Sorts rows into the canonical CSV order.
pub fn sort_rows(rows: &mut [ResultRow]) {
    rows.sort_by(|x, y| x.sort_key().cmp(&y.sort_key()));
}

fn pool(jobs: usize) -> Result<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .map_err(|e| Error::Parameter(format!("thread pool: {e}")))
}

fn run_cells<C, F>(cells: Vec<C>, jobs: usize, f: F) -> Result<Vec<ResultRow>>
where
    C: Send + Sync,
    F: Fn(&C) -> Vec<ResultRow> + Send + Sync,
{
    let pool = pool(jobs)?;
    let mut rows: Vec<ResultRow> = pool.install(|| cells.par_iter().flat_map_iter(&f).collect());
    sort_rows(&mut rows);
    Ok(rows)
}

/// Runs the experiment named by `cfg.kind` on up to `jobs` threads.
pub fn run_experiment(cfg: &ExperimentConfig, jobs: usize) -> Result<Vec<ResultRow>> {
    cfg.validate()?;
    match cfg.kind {
        ExperimentKind::Learnability => run_learnability(cfg, jobs),
        ExperimentKind::Adversarial => run_adversarial(cfg, jobs),
        ExperimentKind::DailyOrder => run_daily_order(cfg, jobs),
        ExperimentKind::Robustness => run_robustness(cfg, jobs),
        ExperimentKind::TheoremRandomOrder => run_theorem_random_order(cfg, jobs),
    }
}

/// The quota'd instance built from the config's generator.
pub fn experiment_instance(cfg: &ExperimentConfig) -> Result<Instance> {
    let g = cfg.generator();
    genlab::apply_quota(&genlab::gen_synthetic(&g)?, g.quota, g.seed)
}

/// Training sample: the first `floor(sigma m)` units of a random
/// permutation fixed per repetition, so samples nest as sigma grows. The
/// training instance keeps the graph and gets capacities from the quota
/// rule applied to the sampled supplies.
pub fn training_weights(
    inst: &Instance,
    shuffled: &[u32],
    sigma: f64,
    cfg: &ExperimentConfig,
) -> Result<WeightVector> {
    let len = ((sigma * shuffled.len() as f64).floor() as usize).min(shuffled.len());
    let counts = weights::sample_counts(inst, &shuffled[..len]);
    let g = cfg.generator();
    let sub = genlab::apply_quota(&inst.with_supplies(&counts)?, g.quota, g.seed)?;
    match weights::compute_weights(&sub, cfg.epsilon, cfg.max_t_doublings) {
        Err(Error::DegenerateInstance) => Ok(WeightVector::uniform(inst.n())),
        other => other,
    }
}

fn shuffled_units(inst: &Instance, seed: u64) -> Vec<u32> {
    let mut units = ArrivalStream::blocks(inst, &(0..inst.num_types()).collect::<Vec<_>>(), "")
        .events()
        .to_vec();
    units.shuffle(&mut rng::substream(seed, &[stream::TRAINING]));
    units
}

/// Rows for every (sigma, algorithm) on one stream. Baselines ignore the
/// sample, so one run is reported under every sigma.
fn sweep_stream(
    cfg: &ExperimentConfig,
    ev: &Evaluator<'_>,
    arrival: &ArrivalStream,
    shuffled: &[u32],
    seed: u64,
) -> Vec<ResultRow> {
    let inst = ev.instance();
    let order = arrival.order().to_string();
    let mut rows = Vec::new();
    for &alg in &cfg.algorithms {
        if alg.learned() {
            for &sigma in &cfg.sigmas {
                let started = Instant::now();
                let mut row = ResultRow::blank(cfg, alg.tag(), &order, seed);
                row.sigma = Some(sigma);
                let run = training_weights(inst, shuffled, sigma, cfg).and_then(|w| match alg {
                    Algorithm::Pw => ev.run_pw(arrival, &w),
                    _ => ev.run_ipw(arrival, &w),
                });
                rows.push(finish(row, run, started));
            }
        } else {
            let started = Instant::now();
            let run = match alg {
                Algorithm::Waterfill => ev.run_waterfill(arrival),
                _ => {
                    let perm = online::random_priority(
                        inst.n(),
                        &mut rng::substream(seed, &[stream::RANKING]),
                    );
                    ev.run_ranking(arrival, &perm)
                }
            };
            let base = finish(ResultRow::blank(cfg, alg.tag(), &order, seed), run, started);
            for &sigma in &cfg.sigmas {
                rows.push(ResultRow {
                    sigma: Some(sigma),
                    ..base.clone()
                });
            }
        }
    }
    rows
}

fn finish(row: ResultRow, run: Result<MatchResult>, started: Instant) -> ResultRow {
    match run {
        Ok(r) => row.with_result(&r, started),
        Err(e) => {
            log::error!("cell {} {} seed {} failed: {e}", row.algorithm, row.order, row.seed);
            ResultRow {
                error: Some(e.to_string()),
                ..row
            }
        }
    }
}

fn failed_cell(cfg: &ExperimentConfig, what: &str, seed: u64, e: &Error) -> ResultRow {
    log::error!("{what} failed: {e}");
    ResultRow {
        error: Some(e.to_string()),
        ..ResultRow::blank(cfg, "-", what, seed)
    }
}

/// Per (repetition, order): weights from a sigma-sample replayed on the
/// whole stream for PW and IPW, and the sample-free baselines.
pub fn run_learnability(cfg: &ExperimentConfig, jobs: usize) -> Result<Vec<ResultRow>> {
    let inst = experiment_instance(cfg)?;
    let ev = Evaluator::new(&inst);
    let cells: Vec<(usize, ArrivalOrder)> = (0..cfg.repetitions)
        .flat_map(|rep| cfg.orders.iter().map(move |&o| (rep, o)))
        .collect();
    run_cells(cells, jobs, |&(rep, order)| {
        let seed = cfg.rep_seed(rep);
        let arrival = genlab::gen_arrival(&inst, order, seed);
        let shuffled = shuffled_units(&inst, seed);
        sweep_stream(cfg, &ev, &arrival, &shuffled, seed)
    })
}

/// Learnability rows over every configured order, plus a `MIN` row per
/// (algorithm, sigma, seed) holding the worst ratio across orders.
pub fn run_adversarial(cfg: &ExperimentConfig, jobs: usize) -> Result<Vec<ResultRow>> {
    let mut rows = run_learnability(cfg, jobs)?;
    let mut worst: BTreeMap<(String, u64, u64), ResultRow> = BTreeMap::new();
    for r in rows.iter().filter(|r| !r.failed()) {
        let key = (r.algorithm.clone(), r.sigma.map_or(0, f64::to_bits), r.seed);
        let slot = worst.entry(key).or_insert_with(|| r.clone());
        if r.ratio < slot.ratio {
            *slot = r.clone();
        }
    }
    for (_, mut r) in worst {
        log::info!(
            "{} sigma {:?} seed {}: worst order {}",
            r.algorithm,
            r.sigma,
            r.seed,
            r.order
        );
        r.order = "MIN".into();
        rows.push(r);
    }
    sort_rows(&mut rows);
    Ok(rows)
}

/// The day family stacked into one instance and streamed day by day.
pub fn run_daily_order(cfg: &ExperimentConfig, jobs: usize) -> Result<Vec<ResultRow>> {
    let family = genlab::gen_day_family(&cfg.generator(), cfg.days, cfg.drift)?;
    let stacked = genlab::stack_instances(&family.days)?;
    let ev = Evaluator::new(&stacked);
    run_cells((0..cfg.repetitions).collect(), jobs, |&rep| {
        let seed = cfg.rep_seed(rep);
        match genlab::stack_days(&family, seed) {
            Ok((_, arrival)) => {
                let shuffled = shuffled_units(&stacked, seed);
                sweep_stream(cfg, &ev, &arrival, &shuffled, seed)
            }
            Err(e) => vec![failed_cell(cfg, "DAILY", seed, &e)],
        }
    })
}

/// Weights for day `d` from yesterday (`_1`) and from all previous days
/// stacked (`_all`).
fn day_weights(family: &DayFamily, d: usize, cfg: &ExperimentConfig) -> Result<(WeightVector, WeightVector)> {
    let w1 = weights::compute_weights(&family.days[d - 1], cfg.epsilon, cfg.max_t_doublings)?;
    let stacked = genlab::stack_instances(&family.days[..d])?;
    let wall = weights::compute_weights(&stacked, cfg.epsilon, cfg.max_t_doublings)?;
    Ok((w1, wall))
}

/// Evaluation day, its (yesterday, all-previous) weights and its optimum.
type PreparedDay = (usize, Result<(WeightVector, WeightVector)>, f64);

/// Day-over-day robustness on the configured family.
pub fn run_robustness(cfg: &ExperimentConfig, jobs: usize) -> Result<Vec<ResultRow>> {
    let family = genlab::gen_day_family(&cfg.generator(), cfg.days, cfg.drift)?;
    run_robustness_on(cfg, &family, jobs)
}

/// Robustness sweep over an existing family (e.g. ingested days).
pub fn run_robustness_on(cfg: &ExperimentConfig, family: &DayFamily, jobs: usize) -> Result<Vec<ResultRow>> {
    if family.len() <= cfg.start_day || cfg.start_day == 0 {
        return Err(Error::Parameter(format!(
            "robustness needs more than start_day = {} days, family has {}",
            cfg.start_day,
            family.len()
        )));
    }
    let eval_days: Vec<usize> = (cfg.start_day..family.len()).collect();
    let pool = pool(jobs)?;
    let prepared: Vec<PreparedDay> = pool.install(|| {
        eval_days
            .par_iter()
            .map(|&d| (d, day_weights(family, d, cfg), optimum_of(&family.days[d])))
            .collect()
    });
    let cells: Vec<(usize, usize)> = eval_days
        .iter()
        .enumerate()
        .flat_map(|(k, _)| (0..cfg.repetitions).map(move |rep| (k, rep)))
        .collect();
    run_cells(cells, jobs, |&(k, rep)| {
        let (d, weights, opt) = &prepared[k];
        let d = *d;
        let seed = cfg.rep_seed(rep);
        let day = &family.days[d];
        let eta = genlab::instance_distance(&family.days[d - 1], day, false);
        let eta_norm = genlab::instance_distance(&family.days[d - 1], day, true);
        let tag = |mut r: ResultRow| {
            r.day = Some(d as u32);
            r.eta_prev_day = Some(eta);
            r.eta_prev_day_normalized = Some(eta_norm);
            r
        };
        let (w1, wall) = match weights {
            Ok(w) => w,
            Err(e) => return vec![tag(failed_cell(cfg, "RANDOM", seed, e))],
        };
        let ev = Evaluator::with_opt(day, *opt);
        let arrival = genlab::gen_arrival(day, ArrivalOrder::Random, rng::derive_seed(seed, &[d as u64]));
        let mut rows = Vec::new();
        for &alg in &cfg.algorithms {
            let variants: Vec<(String, Result<MatchResult>, Instant)> = match alg {
                Algorithm::Pw | Algorithm::Ipw => [("1", w1), ("all", wall)]
                    .into_iter()
                    .map(|(suffix, w)| {
                        let started = Instant::now();
                        let run = if alg == Algorithm::Pw {
                            ev.run_pw(&arrival, w)
                        } else {
                            ev.run_ipw(&arrival, w)
                        };
                        (format!("{}_{suffix}", alg.tag()), run, started)
                    })
                    .collect(),
                Algorithm::Waterfill => {
                    let started = Instant::now();
                    vec![(alg.tag().into(), ev.run_waterfill(&arrival), started)]
                }
                Algorithm::Ranking => {
                    let started = Instant::now();
                    let perm = online::random_priority(
                        day.n(),
                        &mut rng::substream(seed, &[stream::RANKING, d as u64]),
                    );
                    vec![(alg.tag().into(), ev.run_ranking(&arrival, &perm), started)]
                }
            };
            for (name, run, started) in variants {
                let row = ResultRow::blank(cfg, &name, "RANDOM", seed);
                rows.push(tag(finish(row, run, started)));
            }
        }
        rows
    })
}

fn optimum_of(inst: &Instance) -> f64 {
    crate::optimum::opt_value(inst)
}

/// Sample-discarding learner with a PW tail. Each (sigma, seed) yields a
/// `LTA_PW` row scored against the full optimum and a `LTA_PW_POST` row
/// scored against the optimum of the post-sample units.
pub fn run_theorem_random_order(cfg: &ExperimentConfig, jobs: usize) -> Result<Vec<ResultRow>> {
    let inst = experiment_instance(cfg)?;
    let ev = Evaluator::new(&inst);
    let m = inst.total_supply() as f64;
    let n = inst.n() as f64;
    for &sigma in &cfg.sigmas {
        let needed = n * n / (sigma * cfg.epsilon * cfg.epsilon) * (n / cfg.delta).ln();
        if m < needed {
            log::warn!(
                "m = {m} is below n^2/(sigma eps^2) ln(n/delta) = {needed:.0} at sigma {sigma}; \
                 the guarantee is asymptotic here"
            );
        }
    }
    if ev.opt() < cfg.epsilon * m {
        log::warn!("OPT {} below epsilon * m", ev.opt());
    }
    let cells: Vec<(usize, f64)> = (0..cfg.repetitions)
        .flat_map(|rep| cfg.sigmas.iter().map(move |&s| (rep, s)))
        .collect();
    run_cells(cells, jobs, |&(rep, sigma)| {
        let seed = cfg.rep_seed(rep);
        let started = Instant::now();
        let arrival = genlab::gen_arrival(&inst, ArrivalOrder::Random, seed);
        let learn = LearnConfig {
            max_t_doublings: cfg.max_t_doublings,
            ..LearnConfig::new(sigma, cfg.epsilon, LearnMode::DiscardSample, TailPolicy::Pw)
        };
        let mut full = ResultRow::blank(cfg, "LTA_PW", "RANDOM", seed);
        full.sigma = Some(sigma);
        match ev.learn_then_apply(&arrival, &learn) {
            Ok(out) => {
                let matched = out.result.matched;
                let post_opt = out.result.meta.post_sample_opt.unwrap_or(f64::NAN);
                let post = ResultRow {
                    algorithm: "LTA_PW_POST".into(),
                    ..full.clone()
                };
                vec![
                    full.scored(matched, ev.opt(), started),
                    post.scored(matched, post_opt, started),
                ]
            }
            Err(e) => vec![ResultRow {
                error: Some(e.to_string()),
                ..full
            }],
        }
    })
}

fn fmt_opt(x: Option<f64>) -> String {
    x.map(|v| v.to_string()).unwrap_or_default()
}

fn fmt_num(x: f64) -> String {
    if x.is_nan() {
        String::new()
    } else {
        x.to_string()
    }
}

/// Writes rows as CSV with the fixed column order.
pub fn write_csv(rows: &[ResultRow], out: &mut impl std::io::Write) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(CSV_HEADER.split(','))?;
    for r in rows {
        w.write_record([
            r.experiment.clone(),
            r.day.map(|d| d.to_string()).unwrap_or_default(),
            r.algorithm.clone(),
            r.order.clone(),
            r.quota.clone(),
            fmt_opt(r.sigma),
            r.seed.to_string(),
            fmt_num(r.matched),
            fmt_num(r.opt),
            fmt_num(r.ratio),
            fmt_opt(r.eta_prev_day),
            format!("{:.3}", r.wallclock_ms),
        ])?;
    }
    w.flush().map_err(|e| Error::io("<csv>", e))?;
    Ok(())
}

/// Reads rows back from [`write_csv`] output.
pub fn read_csv(input: impl std::io::Read) -> Result<Vec<ResultRow>> {
    let mut rd = csv::Reader::from_reader(input);
    let header: Vec<String> = rd.headers()?.iter().map(str::to_string).collect();
    if header.join(",") != CSV_HEADER {
        return Err(Error::Validation(format!("unexpected CSV header {header:?}")));
    }
    let mut rows = Vec::new();
    for (k, rec) in rd.records().enumerate() {
        let rec = rec?;
        let bad = |field: &str| Error::Record {
            line: k + 2,
            msg: format!("bad {field}"),
        };
        let opt_f = |idx: usize, name: &str| -> Result<Option<f64>> {
            let s = &rec[idx];
            if s.is_empty() {
                Ok(None)
            } else {
                s.parse().map(Some).map_err(|_| bad(name))
            }
        };
        rows.push(ResultRow {
            experiment: rec[0].to_string(),
            day: if rec[1].is_empty() {
                None
            } else {
                Some(rec[1].parse().map_err(|_| bad("day"))?)
            },
            algorithm: rec[2].to_string(),
            order: rec[3].to_string(),
            quota: rec[4].to_string(),
            sigma: opt_f(5, "sigma")?,
            seed: rec[6].parse().map_err(|_| bad("seed"))?,
            matched: opt_f(7, "matched")?.unwrap_or(f64::NAN),
            opt: opt_f(8, "opt")?.unwrap_or(f64::NAN),
            ratio: opt_f(9, "ratio")?.unwrap_or(f64::NAN),
            eta_prev_day: opt_f(10, "eta_prev_day")?,
            eta_prev_day_normalized: None,
            wallclock_ms: opt_f(11, "wallclock_ms")?.unwrap_or(0.0),
            error: None,
        });
    }
    Ok(rows)
}

/// Mean, min and max ratio of one series at one x.
#[derive(Debug, Clone, PartialEq)]
pub struct SeriesPoint {
    pub series: String,
    pub x: f64,
    pub mean: f64,
    pub min: f64,
    pub max: f64,
    pub count: usize,
}

/// Chart axis: day when rows carry days, sigma otherwise.
fn x_of(r: &ResultRow) -> Option<f64> {
    r.day.map(f64::from).or(r.sigma)
}

/// Per-series statistics. When `MIN` rows exist only they are used.
pub fn summarize(rows: &[ResultRow]) -> Vec<SeriesPoint> {
    let has_min = rows.iter().any(|r| r.order == "MIN");
    let mut groups: BTreeMap<(String, u64), Vec<f64>> = BTreeMap::new();
    for r in rows {
        if r.failed() || (has_min && r.order != "MIN") {
            continue;
        }
        if let Some(x) = x_of(r) {
            groups
                .entry((r.algorithm.clone(), x.to_bits()))
                .or_default()
                .push(r.ratio);
        }
    }
    let mut points: Vec<SeriesPoint> = groups
        .into_iter()
        .map(|((series, xb), vals)| SeriesPoint {
            series,
            x: f64::from_bits(xb),
            mean: vals.iter().sum::<f64>() / vals.len() as f64,
            min: vals.iter().copied().fold(f64::INFINITY, f64::min),
            max: vals.iter().copied().fold(f64::NEG_INFINITY, f64::max),
            count: vals.len(),
        })
        .collect();
    points.sort_by(|p, q| p.series.cmp(&q.series).then(p.x.total_cmp(&q.x)));
    points
}

/// Mean ratio of `algorithm` at axis value `x`.
pub fn mean_ratio(rows: &[ResultRow], algorithm: &str, x: f64) -> Option<f64> {
    summarize(rows)
        .into_iter()
        .find(|p| p.series == algorithm && p.x == x)
        .map(|p| p.mean)
}

/// Spearman rank correlation with average ranks for ties.
pub fn spearman(xs: &[f64], ys: &[f64]) -> f64 {
    fn ranks(v: &[f64]) -> Vec<f64> {
        let mut idx: Vec<usize> = (0..v.len()).collect();
        idx.sort_by(|&a, &b| v[a].total_cmp(&v[b]));
        let mut out = vec![0.0; v.len()];
        let mut k = 0;
        while k < idx.len() {
            let mut j = k;
            while j + 1 < idx.len() && v[idx[j + 1]] == v[idx[k]] {
                j += 1;
            }
            let avg = (k + j) as f64 / 2.0 + 1.0;
            for &i in &idx[k..=j] {
                out[i] = avg;
            }
            k = j + 1;
        }
        out
    }
    assert_eq!(xs.len(), ys.len());
    let (rx, ry) = (ranks(xs), ranks(ys));
    let n = xs.len() as f64;
    let (mx, my) = (rx.iter().sum::<f64>() / n, ry.iter().sum::<f64>() / n);
    let cov: f64 = rx.iter().zip(&ry).map(|(a, b)| (a - mx) * (b - my)).sum();
    let vx: f64 = rx.iter().map(|a| (a - mx).powi(2)).sum();
    let vy: f64 = ry.iter().map(|b| (b - my).powi(2)).sum();
    if vx == 0.0 || vy == 0.0 {
        0.0
    } else {
        cov / (vx * vy).sqrt()
    }
}

const PALETTE: [&str; 8] = [
    "#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#17becf",
];

/// Line chart of mean ratio per series with min/max whiskers.
pub fn render_svg(rows: &[ResultRow]) -> String {
    let points = summarize(rows);
    let (w, h) = (720.0, 440.0);
    let (left, right, top, bottom) = (60.0, 150.0, 30.0, 50.0);
    let pw = w - left - right;
    let ph = h - top - bottom;
    let by_day = rows.iter().any(|r| r.day.is_some());
    let xs: Vec<f64> = points.iter().map(|p| p.x).collect();
    let xmin = xs.iter().copied().fold(f64::INFINITY, f64::min);
    let xmax = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let span = if xmax > xmin { xmax - xmin } else { 1.0 };
    let px = |x: f64| left + if xmax > xmin { (x - xmin) / span * pw } else { pw / 2.0 };
    let py = |y: f64| top + (1.0 - y.clamp(0.0, 1.05) / 1.05) * ph;

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}" font-family="sans-serif" font-size="11">"#
    );
    let _ = writeln!(s, r#"<rect width="{w}" height="{h}" fill="white"/>"#);
    let title = rows.first().map_or("", |r| r.experiment.as_str());
    let _ = writeln!(s, r#"<text x="{left}" y="18" font-size="13">{title}</text>"#);
    let _ = writeln!(
        s,
        r#"<line x1="{left}" y1="{0:.2}" x2="{1:.2}" y2="{0:.2}" stroke="black"/>"#,
        top + ph,
        left + pw
    );
    let _ = writeln!(
        s,
        r#"<line x1="{left}" y1="{top}" x2="{left}" y2="{:.2}" stroke="black"/>"#,
        top + ph
    );
    for k in 0..=5 {
        let y = k as f64 * 0.2;
        let yy = py(y);
        let _ = writeln!(
            s,
            r##"<line x1="{:.2}" y1="{yy:.2}" x2="{left}" y2="{yy:.2}" stroke="black"/><text x="{:.2}" y="{:.2}" text-anchor="end">{y:.1}</text><line x1="{left}" y1="{yy:.2}" x2="{:.2}" y2="{yy:.2}" stroke="#dddddd"/>"##,
            left - 4.0,
            left - 6.0,
            yy + 4.0,
            left + pw
        );
    }
    let mut ticks: Vec<f64> = xs.clone();
    ticks.sort_by(f64::total_cmp);
    ticks.dedup();
    for x in &ticks {
        let xx = px(*x);
        let _ = writeln!(
            s,
            r#"<line x1="{xx:.2}" y1="{0:.2}" x2="{xx:.2}" y2="{1:.2}" stroke="black"/><text x="{xx:.2}" y="{2:.2}" text-anchor="middle">{x}</text>"#,
            top + ph,
            top + ph + 4.0,
            top + ph + 16.0
        );
    }
    let _ = writeln!(
        s,
        r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">{}</text>"#,
        left + pw / 2.0,
        h - 12.0,
        if by_day { "day" } else { "sigma" }
    );
    let _ = writeln!(
        s,
        r#"<text x="16" y="{:.2}" transform="rotate(-90 16 {:.2})" text-anchor="middle">ratio</text>"#,
        top + ph / 2.0,
        top + ph / 2.0
    );

    let mut series: Vec<&str> = points.iter().map(|p| p.series.as_str()).collect();
    series.dedup();
    for (k, name) in series.iter().enumerate() {
        let color = PALETTE[k % PALETTE.len()];
        let pts: Vec<&SeriesPoint> = points.iter().filter(|p| p.series == *name).collect();
        let path: Vec<String> = pts
            .iter()
            .map(|p| format!("{:.2},{:.2}", px(p.x), py(p.mean)))
            .collect();
        let _ = writeln!(
            s,
            r#"<polyline fill="none" stroke="{color}" stroke-width="1.5" points="{}"/>"#,
            path.join(" ")
        );
        for p in pts {
            let xx = px(p.x);
            let _ = writeln!(
                s,
                r#"<line x1="{xx:.2}" y1="{:.2}" x2="{xx:.2}" y2="{:.2}" stroke="{color}"/><circle cx="{xx:.2}" cy="{:.2}" r="2.5" fill="{color}"/>"#,
                py(p.min),
                py(p.max),
                py(p.mean)
            );
        }
        let ly = top + 14.0 + k as f64 * 16.0;
        let lx = left + pw + 12.0;
        let _ = writeln!(
            s,
            r#"<line x1="{lx:.2}" y1="{ly:.2}" x2="{:.2}" y2="{ly:.2}" stroke="{color}" stroke-width="2"/><text x="{:.2}" y="{:.2}">{name}</text>"#,
            lx + 18.0,
            lx + 22.0,
            ly + 4.0
        );
    }
    s.push_str("</svg>\n");
    s
}

/// Writes the CSV and the SVG chart.
pub fn report(rows: &[ResultRow], out_csv: impl AsRef<Path>, out_svg: impl AsRef<Path>) -> Result<()> {
    if rows.is_empty() {
        return Err(Error::Parameter("no rows to report".into()));
    }
    let (csv_path, svg_path) = (out_csv.as_ref(), out_svg.as_ref());
    let mut buf = Vec::new();
    write_csv(rows, &mut buf)?;
    fs::write(csv_path, buf).map_err(|e| Error::io(csv_path, e))?;
    fs::write(svg_path, render_svg(rows)).map_err(|e| Error::io(svg_path, e))?;
    Ok(())
}
